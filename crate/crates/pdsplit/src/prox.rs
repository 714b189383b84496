//! Resolvent / proximal maps for every function appearing in the experiment
//! problems, plus the Moreau-decomposition utility that converts between a
//! prox and the prox of its conjugate.
//!
//! A [`ResolventOp`] represents a closed proper convex function `h` through
//! its prox: `apply(step, x)` evaluates `J_{step * dh}(x) = Prox_{step*h}(x)`.
//! All proxes here are exact closed forms; there are no inner iterative
//! subsolvers.

use crate::rng::SplitMix64;
use crate::vecmath::{dot, norm1, norm2_sq, norm_inf};

/// Tolerance used when indicator functions decide membership.
const INDICATOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum ResolventOp {
    /// h = 0; the prox is the identity.
    Zero,
    /// h(x) = 1/2 |x - f0|^2
    QuadraticData { f0: Vec<f64> },
    /// h(x) = lambda/2 |Hx - f0|^2 for a diagonal 0/1 mask H.
    MaskedQuadratic { f0: Vec<f64>, lambda: f64, mask: Vec<u8> },
    /// h(x) = weight * |x|_1
    L1 { weight: f64 },
    /// h(y) = 1/2 |y - b|^2
    HalfSqToB { b: Vec<f64> },
    /// Indicator of the probability simplex.
    SimplexIndicator,
    /// Indicator of the l-inf ball of radius alpha.
    LinfBall { alpha: f64 },
    /// Indicator of {0}.
    ZeroIndicator,
}

impl ResolventOp {
    /// `Prox_{step*h}(x)`. For indicator functions this is the projection,
    /// independent of the step.
    pub fn apply(&self, step: f64, x: &[f64]) -> Vec<f64> {
        assert!(step > 0.0, "prox step must be positive");
        match self {
            ResolventOp::Zero => x.to_vec(),
            ResolventOp::QuadraticData { f0 } => prox_quadratic_data(step, x, f0),
            ResolventOp::MaskedQuadratic { f0, lambda, mask } => {
                prox_masked_quadratic(step, x, f0, *lambda, mask)
            }
            ResolventOp::L1 { weight } => soft_threshold(step, *weight, x),
            ResolventOp::HalfSqToB { b } => {
                // Prox_{step*h}(y) = (y + step*b)/(1 + step)
                assert_eq!(x.len(), b.len());
                x.iter().zip(b).map(|(y, bi)| (y + step * bi) / (1.0 + step)).collect()
            }
            ResolventOp::SimplexIndicator => project_simplex(x),
            ResolventOp::LinfBall { alpha } => project_linf_ball(*alpha, x),
            ResolventOp::ZeroIndicator => vec![0.0; x.len()],
        }
    }

    /// Function value `h(x)`. Indicators return `f64::INFINITY` off the set
    /// (membership decided with a small tolerance).
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ResolventOp::Zero => 0.0,
            ResolventOp::QuadraticData { f0 } => {
                0.5 * x.iter().zip(f0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            }
            ResolventOp::MaskedQuadratic { f0, lambda, mask } => {
                0.5 * lambda
                    * x.iter()
                        .zip(f0)
                        .zip(mask)
                        .map(|((a, b), &m)| if m == 1 { (a - b) * (a - b) } else { 0.0 })
                        .sum::<f64>()
            }
            ResolventOp::L1 { weight } => weight * norm1(x),
            ResolventOp::HalfSqToB { b } => {
                0.5 * x.iter().zip(b).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
            }
            ResolventOp::SimplexIndicator => {
                let feasible = (x.iter().sum::<f64>() - 1.0).abs() <= INDICATOR_TOL
                    && x.iter().all(|&v| v >= -INDICATOR_TOL);
                if feasible {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ResolventOp::LinfBall { alpha } => {
                if norm_inf(x) <= alpha + INDICATOR_TOL * (1.0 + alpha) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ResolventOp::ZeroIndicator => {
                if norm_inf(x) <= INDICATOR_TOL {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// The Legendre-Fenchel conjugate `h*(w)`.
    pub fn eval_conjugate(&self, w: &[f64]) -> f64 {
        match self {
            ResolventOp::Zero => ResolventOp::ZeroIndicator.eval(w),
            ResolventOp::QuadraticData { f0 } => 0.5 * norm2_sq(w) + dot(w, f0),
            ResolventOp::MaskedQuadratic { f0, lambda, mask } => {
                // finite only when w vanishes off the mask support
                let mut val = 0.0;
                for ((wi, f0i), &m) in w.iter().zip(f0).zip(mask) {
                    if m == 1 {
                        val += wi * wi / (2.0 * lambda) + wi * f0i;
                    } else if wi.abs() > INDICATOR_TOL {
                        return f64::INFINITY;
                    }
                }
                val
            }
            ResolventOp::L1 { weight } => ResolventOp::LinfBall { alpha: *weight }.eval(w),
            ResolventOp::HalfSqToB { b } => 0.5 * norm2_sq(w) + dot(w, b),
            ResolventOp::SimplexIndicator => w.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ResolventOp::LinfBall { alpha } => alpha * norm1(w),
            ResolventOp::ZeroIndicator => 0.0,
        }
    }

    /// A point in the domain of `h`, for sampling-based checks.
    pub fn sample_domain(&self, dim: usize, rng: &mut SplitMix64) -> Vec<f64> {
        match self {
            ResolventOp::SimplexIndicator => rng.simplex_point(dim),
            ResolventOp::LinfBall { alpha } => rng.vec_uniform(dim, -alpha, *alpha),
            ResolventOp::ZeroIndicator => vec![0.0; dim],
            _ => rng.vec_normal(dim, 2.0),
        }
    }
}

/// `(x + tau*f0) / (1 + tau)`, the prox of `1/2 |x - f0|^2`.
pub fn prox_quadratic_data(tau: f64, x: &[f64], f0: &[f64]) -> Vec<f64> {
    assert!(tau > 0.0);
    assert_eq!(x.len(), f0.len());
    x.iter().zip(f0).map(|(xi, fi)| (xi + tau * fi) / (1.0 + tau)).collect()
}

/// Componentwise `(x_i + tau*lambda*f0_i)/(1 + tau*lambda)` where the mask is
/// set, identity elsewhere; the prox of `lambda/2 |Hx - f0|^2`.
pub fn prox_masked_quadratic(
    tau: f64,
    x: &[f64],
    f0: &[f64],
    lambda: f64,
    mask: &[u8],
) -> Vec<f64> {
    assert!(tau > 0.0 && lambda > 0.0);
    assert_eq!(x.len(), f0.len());
    assert_eq!(x.len(), mask.len());
    let tl = tau * lambda;
    x.iter()
        .zip(f0)
        .zip(mask)
        .map(|((xi, fi), &m)| if m == 1 { (xi + tl * fi) / (1.0 + tl) } else { *xi })
        .collect()
}

/// Componentwise shrinkage `sign(x_i) * max(|x_i| - tau*mu, 0)`.
pub fn soft_threshold(tau: f64, mu: f64, x: &[f64]) -> Vec<f64> {
    assert!(tau > 0.0 && mu > 0.0);
    let t = tau * mu;
    x.iter().map(|&xi| xi.signum() * (xi.abs() - t).max(0.0)).collect()
}

/// `(sigma*y + b)/(sigma + 1)`, i.e. `J_{B/sigma}` for `B` the gradient of
/// `1/2 |y - b|^2`.
pub fn prox_halfsq_to_b(sigma: f64, y: &[f64], b: &[f64]) -> Vec<f64> {
    assert!(sigma > 0.0);
    assert_eq!(y.len(), b.len());
    y.iter().zip(b).map(|(yi, bi)| (sigma * yi + bi) / (sigma + 1.0)).collect()
}

/// Euclidean projection onto the probability simplex via sort-and-threshold.
pub fn project_simplex(x: &[f64]) -> Vec<f64> {
    assert!(!x.is_empty());
    let n = x.len();
    let mut u = x.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut rho = 0;
    let mut css_rho = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        css += uj;
        if uj + (1.0 - css) / (j + 1) as f64 > 0.0 {
            rho = j + 1;
            css_rho = css;
        }
    }
    let lambda = (1.0 - css_rho) / rho as f64;
    let _ = n;
    x.iter().map(|&xi| (xi + lambda).max(0.0)).collect()
}

/// Componentwise clamp to `[-alpha, alpha]`.
pub fn project_linf_ball(alpha: f64, y: &[f64]) -> Vec<f64> {
    assert!(alpha > 0.0);
    y.iter().map(|&yi| yi.clamp(-alpha, alpha)).collect()
}

/// `J_{sigma * B^{-1}}(x) = x - sigma * J_{B/sigma}(x / sigma)` where `prox_b`
/// carries `B` through its resolvent. This is the Moreau decomposition and is
/// how a dual-side prox is realized from the primal-side one (and vice versa).
pub fn moreau_dual_prox(sigma: f64, x: &[f64], prox_b: &ResolventOp) -> Vec<f64> {
    assert!(sigma > 0.0);
    let scaled: Vec<f64> = x.iter().map(|v| v / sigma).collect();
    let inner = prox_b.apply(1.0 / sigma, &scaled);
    x.iter().zip(&inner).map(|(xi, ji)| xi - sigma * ji).collect()
}

/// The `B`-side of a problem: either the resolvent of `f` directly (so that
/// `J_{B/sigma} = Prox_{f/sigma}`) or the resolvent of the conjugate `f*`
/// (so that `J_{sigma*B^{-1}} = Prox_{sigma*f*}`). Whichever side a scheme
/// needs, the other is obtained through the Moreau decomposition.
#[derive(Debug, Clone)]
pub enum DualProx {
    /// Holds `f` itself.
    Direct(ResolventOp),
    /// Holds the conjugate `f*`.
    FromConjugate(ResolventOp),
}

impl DualProx {
    /// `J_{B/sigma}(q) = Prox_{f/sigma}(q)`
    pub fn j_b_over_sigma(&self, sigma: f64, q: &[f64]) -> Vec<f64> {
        match self {
            DualProx::Direct(op) => op.apply(1.0 / sigma, q),
            DualProx::FromConjugate(opstar) => {
                // q - J_{sigma B^-1}(sigma q)/sigma, from the Moreau identity
                let scaled: Vec<f64> = q.iter().map(|v| sigma * v).collect();
                let inner = opstar.apply(sigma, &scaled);
                q.iter().zip(&inner).map(|(qi, ji)| qi - ji / sigma).collect()
            }
        }
    }

    /// `J_{sigma*B^{-1}}(p) = Prox_{sigma*f*}(p)`
    pub fn j_sigma_b_inv(&self, sigma: f64, p: &[f64]) -> Vec<f64> {
        match self {
            DualProx::Direct(op) => moreau_dual_prox(sigma, p, op),
            DualProx::FromConjugate(opstar) => opstar.apply(sigma, p),
        }
    }

    /// `f(w)` regardless of which side is stored.
    pub fn f_eval(&self, w: &[f64]) -> f64 {
        match self {
            DualProx::Direct(op) => op.eval(w),
            DualProx::FromConjugate(opstar) => opstar.eval_conjugate(w),
        }
    }

    /// A point in the domain of `f`.
    pub fn sample_f_domain(&self, dim: usize, rng: &mut SplitMix64) -> Vec<f64> {
        match self {
            DualProx::Direct(op) => op.sample_domain(dim, rng),
            DualProx::FromConjugate(opstar) => match opstar {
                // dom f = dom (opstar)*: the conjugates used here are all
                // finite everywhere except for Zero* = indicator of {0}
                ResolventOp::Zero => vec![0.0; dim],
                ResolventOp::MaskedQuadratic { mask, .. } => {
                    let mut v = rng.vec_normal(dim, 2.0);
                    for (vi, &m) in v.iter_mut().zip(mask) {
                        if m == 0 {
                            *vi = 0.0;
                        }
                    }
                    v
                }
                _ => rng.vec_normal(dim, 2.0),
            },
        }
    }
}
