//! Step-size and structure parameters shared by the splitting algorithms,
//! their feasibility validation, and the 2x2 block scaling operator `P`
//! together with the operators (`M`, `Phi_K`, `Q`) derived from it.

use serde::{Deserialize, Serialize};

use crate::dense::DenseMat;
use crate::linop::{LinOpError, LinearMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PMode {
    /// `P = diag(theta I, eta*gamma I)`
    Diagonal,
    /// `P = [[theta I, gamma K*], [gamma K, eta*gamma I]]`
    NonDiagonal,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ParamError {
    #[error("theta must lie in (0, 2), got {0}")]
    ThetaRange(f64),
    #[error("eta must lie in (0, 2), got {0}")]
    EtaRange(f64),
    #[error("gamma must be positive and finite, got {0}")]
    GammaRange(f64),
    #[error("tau must be positive and finite, got {0}")]
    TauRange(f64),
    #[error("rho must lie in (0, 2), got {0}")]
    RhoRange(f64),
    #[error("psi must exceed 1, got {0}")]
    PsiRange(f64),
    #[error("step-size condition violated: gamma*L^2 = {lhs} but the bound is {rhs}")]
    StepCondition { lhs: f64, rhs: f64 },
    #[error("gamma*L^2 equals the bound {bound}; allowed only with the limiting-case flag (uniformly monotone primal operator)")]
    EqualityNeedsFlag { bound: f64 },
}

/// The tuple `(theta, eta, gamma, tau)` with `sigma = gamma/tau`, plus the
/// structure mode and experiment knobs for the baselines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamConfig {
    pub theta: f64,
    pub eta: f64,
    /// `gamma = tau * sigma`
    pub gamma: f64,
    pub tau: f64,
    pub mode: PMode,
    /// Permits `gamma*L^2 = (2-theta)(2-eta)` in diagonal mode; the caller
    /// asserts uniform monotonicity of the primal operator.
    pub limiting_allowed: bool,
    /// Relaxation for the CP-PDHG baseline.
    pub rho: f64,
    /// Combination parameter for the PDAc baseline; `theta = (psi-1)/psi`.
    pub psi: f64,
    /// Skip feasibility enforcement (divergence and sharpness demos).
    pub force: bool,
}

impl ParamConfig {
    pub fn diagonal(theta: f64, eta: f64, gamma: f64, tau: f64) -> Self {
        ParamConfig {
            theta,
            eta,
            gamma,
            tau,
            mode: PMode::Diagonal,
            limiting_allowed: false,
            rho: 1.0,
            psi: 1.6,
            force: false,
        }
    }

    pub fn nondiagonal(theta: f64, eta: f64, gamma: f64, tau: f64) -> Self {
        ParamConfig { mode: PMode::NonDiagonal, ..Self::diagonal(theta, eta, gamma, tau) }
    }

    /// `sigma = gamma / tau` exactly.
    pub fn sigma(&self) -> f64 {
        self.gamma / self.tau
    }

    pub fn with_limiting(mut self, allowed: bool) -> Self {
        self.limiting_allowed = allowed;
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_psi(mut self, psi: f64) -> Self {
        self.psi = psi;
        self
    }

    pub fn with_force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn scaling(&self) -> ScalingP {
        match self.mode {
            PMode::Diagonal => ScalingP::diagonal(self.theta, self.eta * self.gamma),
            PMode::NonDiagonal => {
                ScalingP::nondiagonal(self.theta, self.gamma, self.eta * self.gamma)
            }
        }
    }
}

/// Validate a parameter set against the operator norm `L`:
/// diagonal mode requires `gamma L^2 < (2-theta)(2-eta)` (equality admitted
/// only with the limiting-case flag), nondiagonal mode requires
/// `gamma L^2 < theta * eta`.
pub fn validate_params(cfg: &ParamConfig, l: f64) -> Result<(), ParamError> {
    assert!(l >= 0.0, "operator norm must be nonnegative");
    if !(cfg.theta > 0.0 && cfg.theta < 2.0) {
        return Err(ParamError::ThetaRange(cfg.theta));
    }
    if !(cfg.eta > 0.0 && cfg.eta < 2.0) {
        return Err(ParamError::EtaRange(cfg.eta));
    }
    if !(cfg.gamma > 0.0 && cfg.gamma.is_finite()) {
        return Err(ParamError::GammaRange(cfg.gamma));
    }
    if !(cfg.tau > 0.0 && cfg.tau.is_finite()) {
        return Err(ParamError::TauRange(cfg.tau));
    }
    if !(cfg.rho > 0.0 && cfg.rho < 2.0) {
        return Err(ParamError::RhoRange(cfg.rho));
    }
    if cfg.psi <= 1.0 {
        return Err(ParamError::PsiRange(cfg.psi));
    }
    let lhs = cfg.gamma * l * l;
    match cfg.mode {
        PMode::Diagonal => {
            let rhs = (2.0 - cfg.theta) * (2.0 - cfg.eta);
            let near_equal = (lhs - rhs).abs() <= 1e-12 * rhs.max(1.0);
            if near_equal {
                if cfg.limiting_allowed {
                    Ok(())
                } else {
                    Err(ParamError::EqualityNeedsFlag { bound: rhs })
                }
            } else if lhs < rhs {
                Ok(())
            } else {
                Err(ParamError::StepCondition { lhs, rhs })
            }
        }
        PMode::NonDiagonal => {
            let rhs = cfg.theta * cfg.eta;
            if lhs < rhs {
                Ok(())
            } else {
                Err(ParamError::StepCondition { lhs, rhs })
            }
        }
    }
}

/// A self-adjoint 2x2 block operator `P = [[a I, c K*], [c K, d I]]` on the
/// product space. Diagonal choices have `c = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingP {
    pub a: f64,
    pub c: f64,
    pub d: f64,
}

impl ScalingP {
    pub fn diagonal(a: f64, d: f64) -> Self {
        ScalingP { a, c: 0.0, d }
    }

    pub fn nondiagonal(a: f64, c: f64, d: f64) -> Self {
        ScalingP { a, c, d }
    }

    /// `Phi_K = [[2 I, gamma K*], [gamma K, 2 gamma I]]`, the sharp upper
    /// bound on `P`.
    pub fn phi_k(gamma: f64) -> Self {
        ScalingP { a: 2.0, c: gamma, d: 2.0 * gamma }
    }

    pub fn is_diagonal(&self) -> bool {
        self.c == 0.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        ScalingP { a: s * self.a, c: s * self.c, d: s * self.d }
    }

    /// Apply `P` to a residual pair `(rv, ru)`. `k_rv` may supply a
    /// precomputed `K rv` so diagonal-cache reuse avoids an operator call.
    pub fn apply(
        &self,
        k: &LinearMap,
        rv: &[f64],
        ru: &[f64],
        k_rv: Option<&[f64]>,
    ) -> Result<(Vec<f64>, Vec<f64>), LinOpError> {
        let mut dv: Vec<f64> = rv.iter().map(|v| self.a * v).collect();
        let mut du: Vec<f64> = ru.iter().map(|v| self.d * v).collect();
        if self.c != 0.0 {
            let kstar_ru = k.adjoint_apply(ru)?;
            for (o, v) in dv.iter_mut().zip(&kstar_ru) {
                *o += self.c * v;
            }
            let krv = match k_rv {
                Some(cached) => cached.to_vec(),
                None => k.apply(rv)?,
            };
            for (o, v) in du.iter_mut().zip(&krv) {
                *o += self.c * v;
            }
        }
        Ok((dv, du))
    }

    /// Materialize `P` densely from a dense rendering of `K` (desk scale).
    pub fn dense(&self, kd: &DenseMat) -> DenseMat {
        let n = kd.cols;
        let m = kd.rows;
        let top_left = DenseMat::identity(n).scaled(self.a);
        let bottom_right = DenseMat::identity(m).scaled(self.d);
        let top_right = kd.transpose().scaled(self.c);
        let bottom_left = kd.scaled(self.c);
        DenseMat::block2x2(&top_left, &top_right, &bottom_left, &bottom_right)
    }
}
