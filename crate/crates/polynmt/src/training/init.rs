//! Parameter initialization. Matrices draw from the LeCun uniform
//! U(±√(3/fan_in)); the embedding draws from a Gaussian with std d_m^(−1/2)
//! truncated at ±2σ; biases start at zero and norm gains at one.
//!
//! Draws happen cell by cell in table order from one seeded stream, so two
//! tables with the same cell sequence initialize bit-identically — this is
//! what makes a FULL-shared multi-target table line up with the equivalent
//! single unified model.

use crate::rng::{mix_seed, Rng};
use crate::sharing::{ParameterTable, Role};
use crate::tensor::Scalar;

/// Stream tag separating init draws from every other consumer of the seed.
const INIT_STREAM: u64 = 0x696e_6974;

pub fn init_parameters<T: Scalar>(table: &mut ParameterTable<T>, seed: u64) {
    let mut rng = Rng::new(mix_seed(seed, INIT_STREAM));
    let d_m = table.config().d_m;
    let embed_std = (d_m as f64).powf(-0.5);
    for i in 0..table.cells().len() {
        let role = table.cells()[i].role;
        let fan_in = table.cells()[i].value.shape()[0];
        let cell = table.cell_value_mut(i);
        match role {
            Role::E => {
                for v in cell.data_mut() {
                    *v = T::from_f64(rng.truncated_gauss(embed_std));
                }
            }
            Role::K | Role::Q | Role::V | Role::F | Role::L1 | Role::L2 => {
                let bound = (3.0 / fan_in as f64).sqrt();
                for v in cell.data_mut() {
                    *v = T::from_f64(rng.range(-bound, bound));
                }
            }
            Role::B1 | Role::B2 | Role::Bias => {
                for v in cell.data_mut() {
                    *v = T::zero();
                }
            }
            Role::Gain => {
                for v in cell.data_mut() {
                    *v = T::one();
                }
            }
        }
    }
}
