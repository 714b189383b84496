//! Experiment problem families and their metrics: the scalar saddle-point
//! benchmark, TV denoising, TV inpainting, matrix games, and LASSO, plus
//! seeded data generators and the ergodic accumulators used for the
//! averaged-iterate rate checks.

use crate::linop::{LinOpError, LinearMap};
use crate::prox::{DualProx, ResolventOp};
use crate::rng::{streams, SplitMix64};
use crate::vecmath::{dot, norm1, norm2, norm2_sq, sub};

/// How the primary convergence metric of a problem is computed.
#[derive(Debug, Clone)]
pub enum MetricSpec {
    /// `|(x, y)|_2`; for problems whose solution is the origin.
    IterateNorm,
    /// Normalized primal-dual gap for TV denoising. The dual iterate is
    /// projected onto the feasible ball before evaluation, so the certificate
    /// stays finite when an over-relaxed iterate strays slightly outside.
    DenoiseGap { f0: Vec<f64>, alpha: f64, pixels: usize },
    /// Relative objective residual `|F(x) - F_opt| / |F_opt|`; falls back to
    /// the absolute value when `F_opt` is (numerically) zero.
    ObjectiveResidual { f_opt: Option<f64> },
    /// `max_i (Kx)_i - min_j (K^T y)_j` for matrix games.
    GameGap,
}

/// A fully assembled problem: the resolvent of `A`, the `B`-side prox, the
/// coupling operator, the metric, and (when available) a known primal-dual
/// solution for verification.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub label: String,
    pub resolvent_a: ResolventOp,
    pub dual: DualProx,
    pub k: LinearMap,
    pub metric: MetricSpec,
    pub known_solution: Option<(Vec<f64>, Vec<f64>)>,
    /// Unblemished image for SNR reporting on imaging problems.
    pub truth_image: Option<Vec<f64>>,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
}

impl ProblemInstance {
    pub fn primal_dim(&self) -> usize {
        self.k.in_dim()
    }

    pub fn dual_dim(&self) -> usize {
        self.k.out_dim()
    }

    /// `g(x)`
    pub fn g_eval(&self, x: &[f64]) -> f64 {
        self.resolvent_a.eval(x)
    }

    /// `f(w)`
    pub fn f_eval(&self, w: &[f64]) -> f64 {
        self.dual.f_eval(w)
    }

    /// `F(x) = g(x) + f(Kx)`.
    pub fn primal_objective(&self, x: &[f64], kx: Option<&[f64]>) -> Result<f64, LinOpError> {
        let kx = match kx {
            Some(v) => v.to_vec(),
            None => self.k.apply(x)?,
        };
        Ok(self.g_eval(x) + self.f_eval(&kx))
    }

    /// Lagrangian objective `Phi(x, w) = g(x) + f(w)` of the split form.
    pub fn phi(&self, x: &[f64], w: &[f64]) -> f64 {
        self.g_eval(x) + self.f_eval(w)
    }

    pub fn f_opt(&self) -> Option<f64> {
        match &self.metric {
            MetricSpec::ObjectiveResidual { f_opt } => *f_opt,
            _ => None,
        }
    }

    pub fn with_f_opt(mut self, value: f64) -> Self {
        if let MetricSpec::ObjectiveResidual { f_opt } = &mut self.metric {
            *f_opt = Some(value);
        }
        self
    }

    pub fn with_truth(mut self, truth: Vec<f64>) -> Self {
        self.truth_image = Some(truth);
        self
    }

    /// Evaluate the primary metric at `(x, y)`; `kx` may pass the cached
    /// forward image to avoid a redundant operator call.
    pub fn primary_metric(
        &self,
        x: &[f64],
        y: &[f64],
        kx: Option<&[f64]>,
    ) -> Result<f64, LinOpError> {
        match &self.metric {
            MetricSpec::IterateNorm => Ok((norm2_sq(x) + norm2_sq(y)).sqrt()),
            MetricSpec::DenoiseGap { f0, alpha, pixels } => {
                let kx = match kx {
                    Some(v) => v.to_vec(),
                    None => self.k.apply(x)?,
                };
                let y_proj: Vec<f64> = y.iter().map(|v| v.clamp(-alpha, *alpha)).collect();
                let kty = self.k.adjoint_apply(&y_proj)?;
                let gap = 0.5 * dist_sq(x, f0) + alpha * norm1(&kx) + 0.5 * norm2_sq(&kty)
                    - dot(&kty, f0);
                Ok(gap / *pixels as f64)
            }
            MetricSpec::ObjectiveResidual { f_opt } => {
                let f = self.primal_objective(x, kx)?;
                Ok(match f_opt {
                    Some(opt) if opt.abs() >= 1e-15 => (f - opt).abs() / opt.abs(),
                    _ => f.abs(),
                })
            }
            MetricSpec::GameGap => {
                let kx = match kx {
                    Some(v) => v.to_vec(),
                    None => self.k.apply(x)?,
                };
                let kty = self.k.adjoint_apply(y)?;
                let max_kx = kx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min_kty = kty.iter().cloned().fold(f64::INFINITY, f64::min);
                Ok(max_kx - min_kty)
            }
        }
    }

    /// Verify that the stored solution satisfies the primal-dual inclusion
    /// conditions, checked through the resolvents: returns the worst residual
    /// of `x* = J_A(x* - K*y*)` and `Kx* = J_{B/1}(Kx* + y*)`.
    pub fn check_solution(&self) -> Result<f64, LinOpError> {
        let (xs, ys) = self
            .known_solution
            .as_ref()
            .expect("check_solution requires a known solution");
        let kty = self.k.adjoint_apply(ys)?;
        let arg = sub(xs, &kty);
        let jx = self.resolvent_a.apply(1.0, &arg);
        let e1 = norm2(&sub(xs, &jx));

        let kx = self.k.apply(xs)?;
        let arg: Vec<f64> = kx.iter().zip(ys).map(|(a, b)| a + b).collect();
        let jw = self.dual.j_b_over_sigma(1.0, &arg);
        let e2 = norm2(&sub(&kx, &jw));
        Ok(e1.max(e2))
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The scalar saddle-point benchmark `min_x max_y xy`: `g = 0`, `f* = 0`,
/// `K = 1`, unique solution at the origin.
pub fn build_he_yuan() -> ProblemInstance {
    ProblemInstance {
        label: "he-yuan".into(),
        resolvent_a: ResolventOp::Zero,
        dual: DualProx::Direct(ResolventOp::ZeroIndicator),
        k: LinearMap::identity(1),
        metric: MetricSpec::IterateNorm,
        known_solution: Some((vec![0.0], vec![0.0])),
        truth_image: None,
        x0: vec![1.0],
        y0: vec![1.0],
    }
}

/// TV denoising `min_x 1/2 |x - f0|^2 + alpha |Dx|_1` on a `rows x cols`
/// image stored row-major.
pub fn build_tv_denoise(f0: Vec<f64>, rows: usize, cols: usize, alpha: f64) -> ProblemInstance {
    assert!(alpha > 0.0, "alpha must be positive");
    assert_eq!(f0.len(), rows * cols);
    let k = LinearMap::grad2d(rows, cols);
    let y0 = vec![0.0; k.out_dim()];
    ProblemInstance {
        label: format!("tv-denoise-{rows}x{cols}"),
        resolvent_a: ResolventOp::QuadraticData { f0: f0.clone() },
        dual: DualProx::FromConjugate(ResolventOp::LinfBall { alpha }),
        k,
        metric: MetricSpec::DenoiseGap { f0: f0.clone(), alpha, pixels: rows * cols },
        known_solution: None,
        truth_image: None,
        x0: f0,
        y0,
    }
}

/// TV inpainting `min_x lambda/2 |Hx - f0|^2 + |Dx|_1` with a diagonal 0/1
/// mask `H`. Starts from `x0 = f0`, `y0 = D x0`.
pub fn build_tv_inpaint(
    f0: Vec<f64>,
    mask: Vec<u8>,
    rows: usize,
    cols: usize,
    lambda: f64,
) -> ProblemInstance {
    assert!(lambda > 0.0, "lambda must be positive");
    assert_eq!(f0.len(), rows * cols);
    assert_eq!(mask.len(), rows * cols);
    let k = LinearMap::grad2d(rows, cols);
    let x0 = f0.clone();
    let y0 = k.apply(&x0).expect("grad2d dims");
    ProblemInstance {
        label: format!("tv-inpaint-{rows}x{cols}"),
        resolvent_a: ResolventOp::MaskedQuadratic { f0, lambda, mask },
        dual: DualProx::FromConjugate(ResolventOp::LinfBall { alpha: 1.0 }),
        k,
        metric: MetricSpec::ObjectiveResidual { f_opt: None },
        known_solution: None,
        truth_image: None,
        x0,
        y0,
    }
}

/// Matrix game `min_{x in simplex} max_{y in simplex} <Kx, y>`.
pub fn build_matrix_game(k: LinearMap) -> ProblemInstance {
    let q = k.in_dim();
    let p = k.out_dim();
    ProblemInstance {
        label: format!("matrix-game-{p}x{q}"),
        resolvent_a: ResolventOp::SimplexIndicator,
        dual: DualProx::FromConjugate(ResolventOp::SimplexIndicator),
        k,
        metric: MetricSpec::GameGap,
        known_solution: None,
        truth_image: None,
        x0: vec![1.0 / q as f64; q],
        y0: vec![0.0; p],
    }
}

/// LASSO `min_x 1/2 |Kx - b|^2 + mu |x|_1`.
pub fn build_lasso(k: LinearMap, b: Vec<f64>, mu: f64) -> ProblemInstance {
    assert!(mu > 0.0, "mu must be positive");
    assert_eq!(b.len(), k.out_dim());
    let q = k.in_dim();
    let p = k.out_dim();
    ProblemInstance {
        label: format!("lasso-{p}x{q}"),
        resolvent_a: ResolventOp::L1 { weight: mu },
        dual: DualProx::Direct(ResolventOp::HalfSqToB { b }),
        k,
        metric: MetricSpec::ObjectiveResidual { f_opt: None },
        known_solution: None,
        truth_image: None,
        x0: vec![0.0; q],
        y0: vec![0.0; p],
    }
}

/// The experiment default `mu = 0.1 |K^T b|_inf`.
pub fn default_lasso_mu(k: &LinearMap, b: &[f64]) -> Result<f64, LinOpError> {
    let ktb = k.adjoint_apply(b)?;
    Ok(0.1 * ktb.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Seeded LASSO design with autocorrelated columns: `K_1 = K^0_1 / sqrt(1-v^2)`
/// and `K_j = v K_{j-1} + K^0_j`; `x_true` has `s` uniformly placed nonzeros
/// drawn uniform on [-10, 10]; `b = K x_true + noise`, noise std 0.1.
pub fn gen_lasso_design(
    p: usize,
    q: usize,
    s: usize,
    v: f64,
    seed: u64,
) -> (LinearMap, Vec<f64>, Vec<f64>) {
    assert!(p >= 1 && q >= 1 && s >= 1, "dimensions must be positive");
    assert!(s <= q, "support size cannot exceed the column count");
    assert!((0.0..1.0).contains(&v), "autocorrelation must lie in [0, 1)");
    let mut rng = SplitMix64::with_stream(seed, streams::DATA);

    // columns of K^0, generated column-by-column so the recursion order is pinned
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(q);
    for j in 0..q {
        let k0j = rng.vec_normal(p, 1.0);
        if j == 0 {
            let scale = 1.0 / (1.0 - v * v).sqrt();
            columns.push(k0j.iter().map(|e| e * scale).collect());
        } else {
            let prev = &columns[j - 1];
            columns.push(k0j.iter().zip(prev).map(|(e, pv)| v * pv + e).collect());
        }
    }
    let mut flat = vec![0.0; p * q];
    for (j, col) in columns.iter().enumerate() {
        for (i, &e) in col.iter().enumerate() {
            flat[i * q + j] = e;
        }
    }
    let k = LinearMap::dense(crate::dense::DenseMat::from_flat(p, q, flat));

    let mut x_true = vec![0.0; q];
    for idx in rng.distinct_indices(q, s) {
        x_true[idx] = rng.uniform(-10.0, 10.0);
    }

    let mut noise_rng = SplitMix64::with_stream(seed, streams::NOISE);
    let mut b = k.apply(&x_true).expect("design dims");
    for bi in &mut b {
        *bi += 0.1 * noise_rng.normal();
    }
    (k, b, x_true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameCase {
    /// entries uniform on [-1, 1]
    Uniform,
    /// entries standard normal
    Normal,
    /// entries normal with mean -1
    ShiftedNormal,
}

impl GameCase {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(GameCase::Uniform),
            "normal" => Some(GameCase::Normal),
            "shifted-normal" => Some(GameCase::ShiftedNormal),
            _ => None,
        }
    }
}

/// Seeded dense payoff matrix for the matrix-game cases.
pub fn gen_game_matrix(case: GameCase, p: usize, q: usize, seed: u64) -> LinearMap {
    assert!(p >= 1 && q >= 1);
    let mut rng = SplitMix64::with_stream(seed, streams::DATA);
    let mut flat = vec![0.0; p * q];
    for e in &mut flat {
        *e = match case {
            GameCase::Uniform => rng.uniform(-1.0, 1.0),
            GameCase::Normal => rng.normal(),
            GameCase::ShiftedNormal => -1.0 + rng.normal(),
        };
    }
    LinearMap::dense(crate::dense::DenseMat::from_flat(p, q, flat))
}

/// `20 log10(|truth| / |x - truth|)` in dB; infinite on an exact match.
pub fn snr(x: &[f64], truth: &[f64]) -> f64 {
    let err = norm2(&sub(x, truth));
    if err == 0.0 {
        return f64::INFINITY;
    }
    20.0 * (norm2(truth) / err).log10()
}

/// Running sums for the averaged iterates `x_hat_N = (1/N) sum x_n` and
/// `w_hat_N = (1/N) sum w_n`.
#[derive(Debug, Clone)]
pub struct ErgodicAccumulator {
    sum_x: Vec<f64>,
    sum_w: Vec<f64>,
    n: u64,
}

impl ErgodicAccumulator {
    pub fn new(primal_dim: usize, dual_dim: usize) -> Self {
        ErgodicAccumulator { sum_x: vec![0.0; primal_dim], sum_w: vec![0.0; dual_dim], n: 0 }
    }

    pub fn push(&mut self, x: &[f64], w: &[f64]) {
        debug_assert_eq!(x.len(), self.sum_x.len());
        debug_assert_eq!(w.len(), self.sum_w.len());
        for (s, v) in self.sum_x.iter_mut().zip(x) {
            *s += v;
        }
        for (s, v) in self.sum_w.iter_mut().zip(w) {
            *s += v;
        }
        self.n += 1;
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn x_hat(&self) -> Vec<f64> {
        assert!(self.n > 0, "no iterates accumulated");
        self.sum_x.iter().map(|v| v / self.n as f64).collect()
    }

    pub fn w_hat(&self) -> Vec<f64> {
        assert!(self.n > 0, "no iterates accumulated");
        self.sum_w.iter().map(|v| v / self.n as f64).collect()
    }
}

/// Ergodic objective gap `Phi(x_hat, w_hat) - phi_star` and constraint
/// violation `|K x_hat - w_hat|`.
pub fn ergodic_metrics(
    acc: &ErgodicAccumulator,
    problem: &ProblemInstance,
    phi_star: f64,
) -> Result<(f64, f64), LinOpError> {
    let x_hat = acc.x_hat();
    let w_hat = acc.w_hat();
    let phi_gap = problem.phi(&x_hat, &w_hat) - phi_star;
    let kxh = problem.k.apply(&x_hat)?;
    let violation = norm2(&sub(&kxh, &w_hat));
    Ok((phi_gap, violation))
}
