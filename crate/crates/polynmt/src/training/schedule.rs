//! The learning-rate schedule: lr = 2·d_m^(−0.5)·min(step^(−0.5),
//! step·warmup^(−1.5)) — linear warmup to a peak at `warmup`, then
//! inverse-square-root decay.

use crate::error::{Error, Result};

pub fn lr_at(step: u64, d_m: usize, warmup: u64) -> Result<f64> {
    if step == 0 {
        return Err(Error::InvalidConfig("learning rate is defined for steps ≥ 1".into()));
    }
    if warmup == 0 {
        return Err(Error::InvalidConfig("warmup must be ≥ 1".into()));
    }
    let s = step as f64;
    let w = warmup as f64;
    Ok(2.0 * (d_m as f64).powf(-0.5) * s.powf(-0.5).min(s * w.powf(-1.5)))
}
