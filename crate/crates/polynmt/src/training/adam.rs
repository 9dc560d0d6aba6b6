//! Adam with bias correction, one moment pair per storage cell. Shared
//! cells therefore receive exactly one update per step, computed from the
//! summed gradient of every decoder that touches them.

use crate::error::{Error, Result};
use crate::sharing::ParameterTable;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(table: &ParameterTable<T>, beta1: f64, beta2: f64, eps: f64) -> AdamState<T> {
        let m = table.cells().iter().map(|c| Tensor::zeros(c.value.shape().to_vec())).collect();
        let v = table.cells().iter().map(|c| Tensor::zeros(c.value.shape().to_vec())).collect();
        AdamState { step: 0, beta1, beta2, eps, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update from the gradients accumulated in the table, then
    /// zero them. Rejects non-finite gradients with the offending cell name.
    pub fn step(&mut self, table: &mut ParameterTable<T>, lr: f64) -> Result<()> {
        self.step += 1;
        let t = self.step;
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let nb1 = T::from_f64(1.0 - self.beta1);
        let nb2 = T::from_f64(1.0 - self.beta2);
        for i in 0..table.cells().len() {
            if !table.cells()[i].grad.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of cell {}", table.cells()[i].name),
                    step: t,
                });
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            {
                let grad = &table.cells()[i].grad;
                for ((m, v), &g) in
                    m.data_mut().iter_mut().zip(v.data_mut()).zip(grad.data())
                {
                    *m = b1 * *m + nb1 * g;
                    *v = b2 * *v + nb2 * g * g;
                }
            }
            let cell = table.cell_value_mut(i);
            for ((p, &m), &v) in cell.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
                let m_hat = m.to_f64_exact() / bc1;
                let v_hat = v.to_f64_exact() / bc2;
                let delta = lr * m_hat / (v_hat.sqrt() + self.eps);
                *p = *p - T::from_f64(delta);
            }
            if !table.cells()[i].value.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("parameters of cell {}", table.cells()[i].name),
                    step: t,
                });
            }
        }
        table.zero_grads();
        Ok(())
    }

    /// Snapshot access for checkpointing.
    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.m, &self.v)
    }

    pub fn restore(&mut self, step: u64, m: Vec<Tensor<T>>, v: Vec<Tensor<T>>) -> Result<()> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(Error::Checkpoint(format!(
                "optimizer state has {} cells, table expects {}",
                m.len(),
                self.m.len()
            )));
        }
        for (have, want) in m.iter().zip(&self.m).chain(v.iter().zip(&self.v)) {
            if have.shape() != want.shape() {
                return Err(Error::Checkpoint(format!(
                    "optimizer moment shape {:?} does not match cell shape {:?}",
                    have.shape(),
                    want.shape()
                )));
            }
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }
}
