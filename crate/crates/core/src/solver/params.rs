use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::LipschitzModel;
use crate::regularizer::LipschitzOptions;

/// Run length policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Stop at `max_iters` or when the smoothing schedule reaches `eps_tol`.
    #[default]
    Converge,
    /// Run exactly this many iterations with no termination test.
    Phases(usize),
}

pub const DEFAULT_PHASES: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Candidate gradient step on the sinogram block. `None` derives it from the Lipschitz model.
    pub alpha: Option<f64>,
    /// Candidate gradient step on the image block.
    pub beta: Option<f64>,
    /// Candidate regularizer step on the sinogram block.
    pub alpha_hat: Option<f64>,
    /// Candidate regularizer step on the image block.
    pub beta_hat: Option<f64>,
    pub alpha_bar0: f64,
    pub beta_bar0: f64,
    pub rho: f64,
    pub delta: f64,
    pub eta: f64,
    pub eps0: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub eps_tol: f64,
    pub max_iters: usize,
    pub max_backtracks: usize,
    pub mode: RunMode,
    /// Power iterations for `||A||^2`.
    pub power_iters: usize,
    pub lipschitz: LipschitzOptions,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            alpha: None,
            beta: None,
            alpha_hat: None,
            beta_hat: None,
            alpha_bar0: 1.0,
            beta_bar0: 1.0,
            rho: 0.5,
            delta: 1e-4,
            eta: 1e-4,
            eps0: 0.1,
            gamma: 0.5,
            sigma: 100.0,
            eps_tol: 1e-4,
            max_iters: 1000,
            max_backtracks: 60,
            mode: RunMode::Converge,
            power_iters: 100,
            lipschitz: LipschitzOptions::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// Step sizes of the candidate branch at one smoothing level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
}

impl SolverParams {
    /// Checks the parameter ranges that do not depend on the problem.
    pub fn validate(&self) -> Result<()> {
        positive("alpha_bar0", self.alpha_bar0)?;
        positive("beta_bar0", self.beta_bar0)?;
        open_unit("rho", self.rho)?;
        open_unit("delta", self.delta)?;
        positive("eta", self.eta)?;
        positive("eps0", self.eps0)?;
        open_unit("gamma", self.gamma)?;
        positive("sigma", self.sigma)?;
        if !(self.eps_tol >= 0.0 && self.eps_tol.is_finite()) {
            return Err(Error::config(format!(
                "eps_tol must be nonnegative, got {}",
                self.eps_tol
            )));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        for (name, v) in [("alpha_hat", self.alpha_hat), ("beta_hat", self.beta_hat)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("{name} must be nonnegative, got {v}")));
                }
            }
        }
        if let (Some(a), Some(ah)) = (self.alpha, self.alpha_hat) {
            if ah >= a {
                return Err(Error::config(format!("alpha_hat ({ah}) must be below alpha ({a})")));
            }
        }
        if let (Some(b), Some(bh)) = (self.beta, self.beta_hat) {
            if bh >= b {
                return Err(Error::config(format!("beta_hat ({bh}) must be below beta ({b})")));
            }
        }
        if let RunMode::Phases(0) = self.mode {
            return Err(Error::config("phase mode needs at least one phase"));
        }
        Ok(())
    }

    pub fn iteration_cap(&self) -> usize {
        match self.mode {
            RunMode::Converge => self.max_iters,
            RunMode::Phases(k) => k,
        }
    }

    /// Smallest smoothing factor at which an iteration can run.
    pub fn smallest_eps(&self) -> f64 {
        let cap = self.iteration_cap() as i32;
        let floor = self.eps0 * self.gamma.powi(cap.min(1074));
        let reachable = match self.mode {
            // the run stops at the first reduction fired at or below eps_tol
            RunMode::Converge => floor.max(self.gamma * self.eps_tol),
            RunMode::Phases(_) => floor,
        };
        reachable.min(self.eps0)
    }

    /// Candidate step sizes at smoothing level `eps`. Unset values come from the Lipschitz model.
    pub fn steps_at(&self, model: &LipschitzModel, eps: f64) -> StepSizes {
        let alpha = self.alpha.unwrap_or(1.0 / model.f_z_block());
        let beta = self.beta.unwrap_or_else(|| {
            if model.f_x_block() > 0.0 {
                1.0 / model.f_x_block()
            } else {
                1.0
            }
        });
        let hat = |given: Option<f64>, lip: f64, main: f64| {
            given.unwrap_or(if lip > 0.0 { (0.5 / lip).min(0.5 * main) } else { 0.0 })
        };
        StepSizes {
            alpha,
            beta,
            alpha_hat: hat(self.alpha_hat, model.sino_reg(eps), alpha),
            beta_hat: hat(self.beta_hat, model.image_reg(eps), beta),
        }
    }

    /// Bound on the safeguard backtrack count at smoothing level `eps`.
    pub fn backtrack_bound(&self, model: &LipschitzModel, eps: f64) -> usize {
        let target = 1.0 / (self.delta + 0.5 * model.total(eps));
        let start = self.alpha_bar0.max(self.beta_bar0);
        if start <= target {
            return 1;
        }
        (((target / start).ln() / self.rho.ln()).ceil() as usize).saturating_add(1)
    }

    /// Checks that `max_backtracks` can reach a provably acceptable step at every scheduled `eps`.
    pub fn check_backtracks(&self, model: &LipschitzModel) -> Result<()> {
        let eps = self.smallest_eps();
        let target = 1.0 / (self.delta + 0.5 * model.total(eps));
        let reached =
            self.alpha_bar0.max(self.beta_bar0) * self.rho.powi(self.max_backtracks.min(i32::MAX as usize) as i32);
        if reached < target {
            Ok(())
        } else {
            Err(Error::config(format!(
                "max_backtracks = {} cannot reach step {target:e} at eps = {eps:e}; need at least {}",
                self.max_backtracks,
                self.backtrack_bound(model, eps)
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> LipschitzModel {
        LipschitzModel {
            a_norm_sq: 4.0,
            lambda: 9.0,
            image_reg: None,
            sino_reg: None,
        }
    }

    #[test]
    fn defaults_are_valid() {
        SolverParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let bad = [
            SolverParams {
                rho: 1.0,
                ..Default::default()
            },
            SolverParams {
                gamma: 0.0,
                ..Default::default()
            },
            SolverParams {
                eta: 0.0,
                ..Default::default()
            },
            SolverParams {
                eps_tol: -1.0,
                ..Default::default()
            },
            SolverParams {
                alpha: Some(0.1),
                alpha_hat: Some(0.1),
                ..Default::default()
            },
            SolverParams {
                mode: RunMode::Phases(0),
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(matches!(p.validate(), Err(Error::Config(_))), "{p:?}");
        }
    }

    #[test]
    fn auto_steps_follow_blocks() {
        let s = SolverParams::default().steps_at(&model(), 0.1);
        assert_eq!(s.alpha, 0.1);
        assert_eq!(s.beta, 0.25);
        assert_eq!(s.alpha_hat, 0.0);
        assert_eq!(s.beta_hat, 0.0);
    }

    #[test]
    fn backtrack_check() {
        let p = SolverParams::default();
        p.check_backtracks(&model()).unwrap();
        let few = SolverParams {
            max_backtracks: 2,
            ..Default::default()
        };
        assert!(few.check_backtracks(&model()).is_err());
        // L = 14: target 1/(1e-4 + 7) -> 3 halvings from 1.0, plus one
        assert_eq!(p.backtrack_bound(&model(), 0.1), 4);
    }

    #[test]
    fn smallest_eps_respects_tolerance() {
        let p = SolverParams::default();
        assert_eq!(p.smallest_eps(), 0.5e-4);
        let phases = SolverParams {
            mode: RunMode::Phases(3),
            ..Default::default()
        };
        assert!((phases.smallest_eps() - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn toml_mode_forms() {
        let p: SolverParams = toml::from_str("mode = { phases = 15 }\neta = 0.001").unwrap();
        assert_eq!(p.mode, RunMode::Phases(15));
        assert_eq!(p.eta, 0.001);
        let q: SolverParams = toml::from_str("mode = \"converge\"").unwrap();
        assert_eq!(q.mode, RunMode::Converge);
    }

    #[test]
    fn bound_saturates_for_unbounded_models() {
        let m = LipschitzModel {
            a_norm_sq: f64::INFINITY,
            ..model()
        };
        assert_eq!(SolverParams::default().backtrack_bound(&m, 0.1), usize::MAX);
    }
}
