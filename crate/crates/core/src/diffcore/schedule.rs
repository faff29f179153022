use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential interpolation from `initial` to `final_lr` over `total_steps`,
/// held at `final_lr` afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_lr: f64,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(initial: f64, final_lr: f64, total_steps: usize) -> Result<Self> {
        let s = Self {
            initial,
            final_lr,
            total_steps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(lr: f64) -> Self {
        Self {
            initial: lr,
            final_lr: lr,
            total_steps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.final_lr > 0.0)
            || !self.initial.is_finite()
            || !self.final_lr.is_finite()
        {
            return Err(Error::InvalidSchedule(format!(
                "rates must be positive and finite, got {} -> {}",
                self.initial, self.final_lr
            )));
        }
        if self.total_steps == 0 {
            return Err(Error::InvalidSchedule("total_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if step == 0 {
            return self.initial;
        }
        if step >= self.total_steps {
            return self.final_lr;
        }
        let r = step as f64 / self.total_steps as f64;
        let (a, b) = (self.initial.ln(), self.final_lr.ln());
        let (lo, hi) = if self.initial < self.final_lr {
            (self.initial, self.final_lr)
        } else {
            (self.final_lr, self.initial)
        };
        (a + r * (b - a)).exp().clamp(lo, hi)
    }

    /// Same curve compressed or stretched to a new horizon.
    pub fn rescaled(&self, total_steps: usize) -> Self {
        Self {
            total_steps: total_steps.max(1),
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane_schedule() -> LrSchedule {
        LrSchedule::new(1.6e-3, 1.6e-4, 30000).unwrap()
    }

    #[test]
    fn endpoints_are_exact() {
        let s = plane_schedule();
        assert_eq!(s.lr_at(0), 1.6e-3);
        assert_eq!(s.lr_at(30000), 1.6e-4);
        assert_eq!(s.lr_at(90000), 1.6e-4);
    }

    #[test]
    fn midpoint_is_geometric_mean() {
        let expected = 1.6e-3 * 10f64.powf(-0.5);
        assert!((plane_schedule().lr_at(15000) - expected).abs() < 1e-15);
        assert!((expected - 5.0596e-4).abs() < 1e-8);
    }

    #[test]
    fn non_positive_rates_are_rejected() {
        assert!(LrSchedule::new(0.0, 1e-4, 10).is_err());
        assert!(LrSchedule::new(1e-3, -1e-4, 10).is_err());
        assert!(LrSchedule::new(1e-3, 1e-4, 0).is_err());
    }

    proptest! {
        #[test]
        fn decreasing_schedule_is_monotone(
            init in 1e-6f64..1.0, ratio in 1e-4f64..1.0, total in 1usize..5000,
        ) {
            let s = LrSchedule::new(init, init * ratio, total).unwrap();
            let mut prev = s.lr_at(0);
            for step in 1..=total + 2 {
                let lr = s.lr_at(step);
                prop_assert!(lr <= prev, "step {}: {} > {}", step, lr, prev);
                prev = lr;
            }
        }
    }
}
