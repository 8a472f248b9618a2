//! Gradient descent with Polyak steps anchored at the European price and a
//! halving magnitude factor.

use serde::{Deserialize, Serialize};

use crate::dual::{CoefficientVector, Objective, ObjectiveReport};
use crate::error::{Error, Result};
use crate::payoff::DiscountedPayoffs;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    /// Relative improvement below which the descent stops.
    pub epsilon: f64,
    /// Cap on objective evaluations.
    pub max_iters: usize,
    pub gamma0: f64,
    /// Target value of the Polyak rule, usually the European price.
    pub anchor: f64,
    pub min_gamma: f64,
}

impl DescentConfig {
    pub fn with_anchor(anchor: f64) -> Self {
        Self {
            epsilon: 1e-4,
            max_iters: 200,
            gamma0: 1.0,
            anchor,
            min_gamma: (2.0f64).powi(-30),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0 (got {})",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.gamma0 > 0.0 && self.gamma0 <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma0 must lie in (0, 1] (got {})",
                self.gamma0
            )));
        }
        if !self.anchor.is_finite() {
            return Err(Error::InvalidParameter("anchor must be finite".into()));
        }
        if !(self.min_gamma > 0.0) {
            return Err(Error::InvalidParameter("min_gamma must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub value: f64,
    pub step: f64,
    pub gamma: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    ZeroGradient,
    /// The Polyak step is no longer positive: the value already sits at or
    /// below the anchor, so every trial along the gradient is uphill.
    AnchorReached,
    StepUnderflow,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentTrace {
    /// Accepted iterates in order.
    pub accepted: Vec<Iterate>,
    pub rejections: usize,
    pub evaluations: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone)]
pub struct Descent {
    pub lambda: CoefficientVector,
    /// Report at the returned coefficients.
    pub report: ObjectiveReport,
    pub trace: DescentTrace,
}

impl Descent {
    pub fn price(&self) -> f64 {
        self.report.value
    }

    pub fn stderr(&self) -> f64 {
        self.report.stderr
    }
}

/// Monte Carlo European price: mean discounted payoff at maturity.
pub fn european_anchor(payoffs: &DiscountedPayoffs) -> f64 {
    let n = payoffs.steps();
    let m = payoffs.paths();
    (0..m).map(|i| payoffs.path(i)[n]).sum::<f64>() / m as f64
}

/// `(value - anchor) / |grad|^2`; `None` for a zero gradient.
pub fn polyak_step(value: f64, anchor: f64, grad_norm_sq: f64) -> Option<f64> {
    (grad_norm_sq > 0.0).then(|| (value - anchor) / grad_norm_sq)
}

/// Minimizes `objective` from `lambda = 0`.
///
/// A trial point is accepted only if it strictly lowers the objective; on
/// rejection the magnitude factor is halved and the same direction retried.
pub fn minimize<O: Objective + ?Sized>(objective: &O, config: &DescentConfig) -> Result<Descent> {
    config.validate()?;
    let dim = objective.dim();
    let mut x = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut gamma = config.gamma0;

    let mut evaluations = 0;
    let mut rejections = 0;
    let mut accepted = Vec::new();

    // The first move has a zero direction, so x0 itself is evaluated.
    let mut current = eval_checked(objective, &x, 0)?;
    evaluations += 1;
    let mut grad_norm_sq = current.gradient_norm_sq();
    accepted.push(Iterate {
        value: current.value,
        step: 0.0,
        gamma,
        grad_norm: grad_norm_sq.sqrt(),
    });

    let stop = loop {
        let Some(alpha) = polyak_step(current.value, config.anchor, grad_norm_sq) else {
            break StopReason::ZeroGradient;
        };
        if alpha <= 0.0 {
            break StopReason::AnchorReached;
        }
        if evaluations >= config.max_iters {
            break StopReason::MaxIterations;
        }
        let scale = gamma * alpha;
        for ((t, xi), di) in trial.iter_mut().zip(&x).zip(&current.gradient) {
            *t = xi - scale * di;
        }
        let candidate = eval_checked(objective, &trial, accepted.len())?;
        evaluations += 1;

        if candidate.value < current.value {
            let previous = current.value;
            std::mem::swap(&mut x, &mut trial);
            current = candidate;
            grad_norm_sq = current.gradient_norm_sq();
            accepted.push(Iterate {
                value: current.value,
                step: alpha,
                gamma,
                grad_norm: grad_norm_sq.sqrt(),
            });
            if (previous - current.value).abs() <= config.epsilon * previous.abs() {
                break StopReason::Converged;
            }
        } else {
            rejections += 1;
            gamma /= 2.0;
            if gamma < config.min_gamma {
                break StopReason::StepUnderflow;
            }
        }
    };

    Ok(Descent {
        lambda: CoefficientVector::new(x)?,
        report: current,
        trace: DescentTrace {
            accepted,
            rejections,
            evaluations,
            stop,
        },
    })
}

fn eval_checked<O: Objective + ?Sized>(
    objective: &O,
    x: &[f64],
    iteration: usize,
) -> Result<ObjectiveReport> {
    let lambda_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    match objective.evaluate(x) {
        Ok(r) if r.value.is_finite() && r.gradient.iter().all(|g| g.is_finite()) => Ok(r),
        Ok(_) | Err(Error::Worker { .. }) => Err(Error::NonFinite {
            iteration,
            lambda_norm,
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `f(x) = c + sum_i w_i |x_i - t_i|`, a nonsmooth convex function with a
    /// known minimum `c`.
    struct Kinked {
        c: f64,
        w: Vec<f64>,
        t: Vec<f64>,
    }

    impl Objective for Kinked {
        fn dim(&self) -> usize {
            self.w.len()
        }

        fn evaluate(&self, x: &[f64]) -> Result<ObjectiveReport> {
            let mut value = self.c;
            let mut gradient = Vec::with_capacity(x.len());
            for i in 0..x.len() {
                let r = x[i] - self.t[i];
                value += self.w[i] * r.abs();
                gradient.push(self.w[i] * r.signum() * (r != 0.0) as u8 as f64);
            }
            Ok(ObjectiveReport {
                value,
                gradient,
                second_moment: value * value,
                variance: 0.0,
                stderr: 0.0,
                path_max: vec![],
                argmax: vec![],
            })
        }
    }

    struct Quadratic {
        c: f64,
        t: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.t.len()
        }

        fn evaluate(&self, x: &[f64]) -> Result<ObjectiveReport> {
            let gradient: Vec<f64> = x.iter().zip(&self.t).map(|(a, b)| a - b).collect();
            let value = self.c + 0.5 * gradient.iter().map(|g| g * g).sum::<f64>();
            Ok(ObjectiveReport {
                value,
                gradient,
                second_moment: 0.0,
                variance: 0.0,
                stderr: 0.0,
                path_max: vec![],
                argmax: vec![],
            })
        }
    }

    struct Broken;

    impl Objective for Broken {
        fn dim(&self) -> usize {
            1
        }

        fn evaluate(&self, _: &[f64]) -> Result<ObjectiveReport> {
            Ok(ObjectiveReport {
                value: f64::NAN,
                gradient: vec![0.0],
                second_moment: 0.0,
                variance: 0.0,
                stderr: 0.0,
                path_max: vec![],
                argmax: vec![],
            })
        }
    }

    #[test]
    fn polyak_examples() {
        assert_eq!(polyak_step(3.0, 3.0, 2.0), Some(0.0));
        assert_eq!(polyak_step(4.0, 3.0, 4.0), Some(0.25));
        assert!(polyak_step(2.0, 3.0, 1.0).unwrap() < 0.0);
        assert_eq!(polyak_step(2.0, 1.0, 0.0), None);
    }

    #[test]
    fn first_iterate_is_origin() {
        let f = Quadratic {
            c: 1.0,
            t: vec![1.0, -2.0],
        };
        let out = minimize(&f, &DescentConfig::with_anchor(1.0)).unwrap();
        assert_eq!(out.trace.accepted[0].value, 1.0 + 2.5);
        assert_eq!(out.trace.accepted[0].step, 0.0);
    }

    #[test]
    fn exact_anchor_solves_quadratic() {
        // With the true minimum as anchor the Polyak step lands at x = t/2
        // along the ray, then keeps contracting.
        let f = Quadratic {
            c: 1.0,
            t: vec![1.0, -2.0, 0.5],
        };
        let cfg = DescentConfig {
            epsilon: 1e-10,
            ..DescentConfig::with_anchor(1.0)
        };
        let out = minimize(&f, &cfg).unwrap();
        assert!((out.price() - 1.0).abs() < 1e-6, "{}", out.price());
        let values: Vec<f64> = out.trace.accepted.iter().map(|a| a.value).collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn low_anchor_needs_halving_on_kinked() {
        let f = Kinked {
            c: 2.0,
            w: vec![1.0, 0.5, 2.0],
            t: vec![0.3, -1.0, 0.7],
        };
        let out = minimize(&f, &DescentConfig::with_anchor(0.0)).unwrap();
        assert!(out.trace.rejections > 0);
        assert!(out.price() < f.evaluate(&[0.0; 3]).unwrap().value);
        assert!(out.price() >= 2.0);
        let values: Vec<f64> = out.trace.accepted.iter().map(|a| a.value).collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]));
        assert!(out.trace.evaluations <= 200);
    }

    #[test]
    fn zero_objective_stops_immediately() {
        let f = Kinked {
            c: 0.0,
            w: vec![0.0; 2],
            t: vec![0.0; 2],
        };
        let out = minimize(&f, &DescentConfig::with_anchor(0.0)).unwrap();
        assert_eq!(out.price(), 0.0);
        assert_eq!(out.trace.evaluations, 1);
        assert_eq!(out.trace.stop, StopReason::ZeroGradient);
    }

    #[test]
    fn anchor_above_value_stops() {
        let f = Quadratic {
            c: 1.0,
            t: vec![1.0],
        };
        let out = minimize(&f, &DescentConfig::with_anchor(5.0)).unwrap();
        assert_eq!(out.trace.stop, StopReason::AnchorReached);
        assert_eq!(out.trace.evaluations, 1);
    }

    #[test]
    fn non_finite_aborts() {
        let err = minimize(&Broken, &DescentConfig::with_anchor(0.0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { iteration: 0, .. }));
    }

    #[test]
    fn config_validation() {
        let mut cfg = DescentConfig::with_anchor(1.0);
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = DescentConfig::with_anchor(1.0);
        cfg.gamma0 = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = DescentConfig::with_anchor(1.0);
        cfg.max_iters = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn european_anchor_examples() {
        let zeros = DiscountedPayoffs::from_values(2, vec![0.0; 9]).unwrap();
        assert_eq!(european_anchor(&zeros), 0.0);
        let c = DiscountedPayoffs::from_values(1, vec![1.0, 2.5, 0.0, 2.5]).unwrap();
        assert_eq!(european_anchor(&c), 2.5);
    }
}
