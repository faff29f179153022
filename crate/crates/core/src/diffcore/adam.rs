use serde::{Deserialize, Serialize};

use super::params::{ParamEntry, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Adam hyperparameters. Defaults follow the splatting convention
/// (`eps = 1e-15`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

impl AdamConfig {
    fn validate(&self, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config(format!(
                "betas ({}, {}) must lie in [0, 1)",
                self.beta1, self.beta2
            )));
        }
        Ok(())
    }
}

fn check_finite(e: &ParamEntry) -> Result<()> {
    match e.grads.iter().position(|g| !g.is_finite()) {
        Some(index) => Err(Error::NonFiniteGradient {
            entry: e.name.clone(),
            index,
        }),
        None => Ok(()),
    }
}

// Elements whose gradient is exactly zero keep their value and moments; the
// step counter still advances.
fn update(e: &mut ParamEntry, lr: f64, cfg: &AdamConfig) {
    e.step += 1;
    let t = e.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..e.values.len() {
        let g = e.grads[i];
        if g == 0.0 {
            continue;
        }
        let m = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
        e.m[i] = m;
        e.v[i] = v;
        let mhat = m / bc1;
        let vhat = v / bc2;
        e.values[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
    }
}

impl ParamStore {
    /// One Adam step over every entry with a shared learning rate.
    pub fn adam_step(&mut self, lr: f64, cfg: &AdamConfig) -> Result<()> {
        cfg.validate(lr)?;
        for e in self.entries_mut().iter() {
            check_finite(e)?;
        }
        for e in self.entries_mut() {
            update(e, lr, cfg);
        }
        Ok(())
    }

    /// One Adam step on a single entry.
    pub fn adam_step_entry(&mut self, id: ParamId, lr: f64, cfg: &AdamConfig) -> Result<()> {
        cfg.validate(lr)?;
        let e = &mut self.entries_mut()[id.index()];
        check_finite(e)?;
        update(e, lr, cfg);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_leaves_values() {
        let mut s = ParamStore::new();
        let id = s.insert("p", vec![0.3, -1.2]).unwrap();
        s.adam_step(0.1, &AdamConfig::default()).unwrap();
        assert_eq!(s.values(id), &[0.3, -1.2]);
        assert_eq!(s.entry(id).step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m = 0.1, v = 0.001, both bias-corrected to 1: v <- 0 - 0.1 * 1 / (1 + 1e-15)
        let mut s = ParamStore::new();
        let id = s.insert("p", vec![0.0]).unwrap();
        s.grads_mut(id)[0] = 1.0;
        s.adam_step(0.1, &AdamConfig::default()).unwrap();
        assert!((s.values(id)[0] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn nan_gradient_is_rejected_and_names_entry() {
        let mut s = ParamStore::new();
        let ok = s.insert("fine", vec![1.0]).unwrap();
        let bad = s.insert("broken", vec![1.0, 2.0]).unwrap();
        s.grads_mut(ok)[0] = 1.0;
        s.grads_mut(bad)[1] = f64::NAN;
        match s.adam_step(0.1, &AdamConfig::default()) {
            Err(Error::NonFiniteGradient { entry, index }) => {
                assert_eq!(entry, "broken");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        // nothing was applied
        assert_eq!(s.values(ok), &[1.0]);
    }

    proptest! {
        #[test]
        fn zero_grad_step_is_identity_for_any_state(
            vals in proptest::collection::vec(-10.0f64..10.0, 1..8),
            warm in proptest::collection::vec(-1.0f64..1.0, 1..8),
            lr in 1e-4f64..1.0,
        ) {
            let mut s = ParamStore::new();
            let id = s.insert("x", vals.clone()).unwrap();
            // build up some optimizer state first
            for (g, w) in s.grads_mut(id).iter_mut().zip(warm.iter().cycle()) {
                *g = *w;
            }
            s.adam_step(lr, &AdamConfig::default()).unwrap();
            let before = s.values(id).to_vec();
            s.zero_grads();
            s.adam_step(lr, &AdamConfig::default()).unwrap();
            prop_assert_eq!(s.values(id), before.as_slice());
        }
    }
}
