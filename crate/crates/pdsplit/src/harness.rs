//! Experiment harness: TOML run configuration, problem assembly from seeded
//! generators, algorithm dispatch, CSV trace capture and JSON summaries, and
//! the `(theta, eta)` grid scan.
//!
//! Everything an experiment emits is a deterministic function of the config
//! and its seed, except the `elapsed_s` column and the `wall_time_s` summary
//! field.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::image::{
    add_gaussian_noise, apply_mask, every_kth_row_mask, random_mask, read_pgm, synthetic_image,
    write_pgm, Image, ImageError,
};
use crate::linop::{LinOpError, LinearMap};
use crate::params::{validate_params, ParamConfig, ParamError};
use crate::problems::{
    build_he_yuan, build_lasso, build_matrix_game, build_tv_denoise, build_tv_inpaint,
    gen_game_matrix, gen_lasso_design, snr, GameCase, ProblemInstance,
};
use crate::solver::{
    run, AdaptiveSpec, AlgorithmId, RunOptions, SolverError, StopReason, Stopping, TraceRecord,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    LinOp(#[from] LinOpError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub algorithm: AlgorithmConfig,
    pub params: ParamsConfig,
    pub stopping: StoppingConfig,
    pub output: OutputConfig,
    pub adaptive: AdaptiveConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    /// he-yuan | tv-denoise | tv-inpaint | matrix-game | lasso
    pub family: String,
    pub seed: u64,
    // imaging
    pub rows: usize,
    pub cols: usize,
    pub alpha: f64,
    pub lambda: f64,
    /// Gaussian noise level; exactly one of std/variance may be set, the
    /// family default applies otherwise.
    pub noise_std: Option<f64>,
    pub noise_variance: Option<f64>,
    /// Path to a PGM image replacing the synthetic one.
    pub image: Option<String>,
    /// `every<k>` | `random:<keep-fraction>` | path to a 0/1 grid file
    pub mask: Option<String>,
    // games / lasso
    pub p: usize,
    pub q: usize,
    pub s: usize,
    pub v: f64,
    /// uniform | normal | shifted-normal
    pub case: String,
    /// Path to a plain-text dense payoff matrix replacing the generated one
    /// (matrix games only).
    pub design: Option<String>,
    /// `mu = mu_scale * |K^T b|_inf`
    pub mu_scale: f64,
    /// Optimal objective for the residual metric; computed by a long
    /// reference run when absent.
    pub f_opt: Option<f64>,
    pub oracle_max_iters: u64,
    pub oracle_tol: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            family: "he-yuan".into(),
            seed: 1,
            rows: 64,
            cols: 64,
            alpha: 0.2,
            lambda: 100.0,
            noise_std: None,
            noise_variance: None,
            image: None,
            mask: None,
            p: 100,
            q: 100,
            s: 30,
            v: 0.9,
            case: "uniform".into(),
            design: None,
            mu_scale: 0.1,
            f_opt: None,
            oracle_max_iters: 1_000_000,
            oracle_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmConfig {
    pub id: String,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig { id: "pdsa-cc".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub theta: f64,
    pub eta: f64,
    /// Absolute step-size product `gamma = tau*sigma`; mutually exclusive
    /// with `gamma_l2`.
    pub gamma: Option<f64>,
    /// Scale-free product `gamma * L^2`; the assembled gamma divides by the
    /// problem's squared operator norm. Defaults to 1 when neither is given.
    pub gamma_l2: Option<f64>,
    /// Explicit tau; `sqrt(gamma * tau_over_sigma)` otherwise.
    pub tau: Option<f64>,
    pub tau_over_sigma: f64,
    pub rho: f64,
    pub psi: f64,
    pub limiting: bool,
    pub force: bool,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            theta: 1.0,
            eta: 0.99,
            gamma: None,
            gamma_l2: None,
            tau: None,
            tau_over_sigma: 1.0,
            rho: 1.5,
            psi: 1.6,
            limiting: false,
            force: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoppingConfig {
    pub metric_tol: Option<f64>,
    pub fp_tol: Option<f64>,
    pub max_iters: u64,
    pub wall_clock_s: Option<f64>,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        StoppingConfig { metric_tol: Some(1e-8), fp_tol: None, max_iters: 10_000, wall_clock_s: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// 0 = auto (1 up to 10^4 iterations, 10 beyond)
    pub trace_stride: u64,
    pub write_images: bool,
    /// Dump the dense coupling matrix as plain text for cross-checking.
    pub dump_design: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into(), trace_stride: 0, write_images: true, dump_design: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveConfig {
    pub epsilon: f64,
    pub theta_bar: f64,
    pub eta_bar: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig { epsilon: 0.99, theta_bar: 1.99, eta_bar: 1.99 }
    }
}

/// Parse and semantically validate a TOML run configuration. Unknown keys
/// are rejected; parameter ranges are checked here, the norm-dependent
/// step-size condition at assembly time (immediately, when `gamma_l2` is
/// given, since that form is norm-free).
pub fn parse_config(text: &str) -> Result<RunConfig, HarnessError> {
    let cfg: RunConfig =
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
    validate_config(&cfg)?;
    Ok(cfg)
}

fn validate_config(cfg: &RunConfig) -> Result<(), HarnessError> {
    let algo = AlgorithmId::parse(&cfg.algorithm.id)
        .ok_or_else(|| HarnessError::Invalid(format!("unknown algorithm id {:?}", cfg.algorithm.id)))?;
    if !matches!(
        cfg.problem.family.as_str(),
        "he-yuan" | "tv-denoise" | "tv-inpaint" | "matrix-game" | "lasso"
    ) {
        return Err(HarnessError::Invalid(format!(
            "unknown problem family {:?}",
            cfg.problem.family
        )));
    }
    if GameCase::parse(&cfg.problem.case).is_none() {
        return Err(HarnessError::Invalid(format!("unknown game case {:?}", cfg.problem.case)));
    }
    if cfg.params.gamma.is_some() && cfg.params.gamma_l2.is_some() {
        return Err(HarnessError::Invalid("gamma and gamma_l2 are mutually exclusive".into()));
    }
    if cfg.problem.noise_std.is_some() && cfg.problem.noise_variance.is_some() {
        return Err(HarnessError::Invalid(
            "noise_std and noise_variance are mutually exclusive".into(),
        ));
    }
    if cfg.params.force {
        return Ok(());
    }
    let needs_theta_eta = matches!(
        algo,
        AlgorithmId::PdsaCc | AlgorithmId::PdsaCcAdaptive | AlgorithmId::ModifiedPdsa
    );
    if needs_theta_eta {
        if !(cfg.params.theta > 0.0 && cfg.params.theta < 2.0) {
            return Err(ParamError::ThetaRange(cfg.params.theta).into());
        }
        if !(cfg.params.eta > 0.0 && cfg.params.eta < 2.0) {
            return Err(ParamError::EtaRange(cfg.params.eta).into());
        }
        // the gamma_l2 form permits the norm-free feasibility check right here
        if let Some(gl2) = cfg.params.gamma_l2 {
            let probe = ParamConfig {
                theta: cfg.params.theta,
                eta: cfg.params.eta,
                gamma: gl2,
                tau: gl2.max(1e-12).sqrt(),
                mode: algo.mode(),
                limiting_allowed: cfg.params.limiting,
                rho: cfg.params.rho,
                psi: cfg.params.psi,
                force: false,
            };
            validate_params(&probe, 1.0)?;
        }
    }
    Ok(())
}

/// A problem assembled from its config together with the operator-norm
/// data the step-size rules need.
pub struct BuiltProblem {
    pub instance: ProblemInstance,
    /// Norm used for step sizing: the analytic bound for the difference
    /// operator, a converged power-iteration estimate otherwise.
    pub l: f64,
    pub rows: usize,
    pub cols: usize,
    pub is_imaging: bool,
}

fn resolve_noise_std(pc: &ProblemConfig, default_variance: Option<f64>, default_std: Option<f64>) -> f64 {
    if let Some(s) = pc.noise_std {
        return s;
    }
    if let Some(v) = pc.noise_variance {
        return v.sqrt();
    }
    if let Some(v) = default_variance {
        return v.sqrt();
    }
    default_std.unwrap_or(0.0)
}

fn load_or_synthesize_image(pc: &ProblemConfig) -> Result<Image, HarnessError> {
    match &pc.image {
        Some(path) => Ok(read_pgm(Path::new(path))?),
        None => Ok(synthetic_image(pc.rows, pc.cols)),
    }
}

fn build_mask(pc: &ProblemConfig, rows: usize, cols: usize) -> Result<Vec<u8>, HarnessError> {
    match pc.mask.as_deref() {
        None => Ok(every_kth_row_mask(rows, cols, 8)),
        Some(spec) if spec.starts_with("every") => {
            let k: usize = spec["every".len()..]
                .parse()
                .map_err(|_| HarnessError::Invalid(format!("bad mask spec {spec:?}")))?;
            Ok(every_kth_row_mask(rows, cols, k))
        }
        Some(spec) if spec.starts_with("random:") => {
            let frac: f64 = spec["random:".len()..]
                .parse()
                .map_err(|_| HarnessError::Invalid(format!("bad mask spec {spec:?}")))?;
            Ok(random_mask(rows, cols, frac, pc.seed))
        }
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let (_, mrows, mcols) = LinearMap::mask_from_text(&text)?;
            if (mrows, mcols) != (rows, cols) {
                return Err(HarnessError::Invalid(format!(
                    "mask shape {mrows}x{mcols} does not match image {rows}x{cols}"
                )));
            }
            let bits = text
                .split_whitespace()
                .map(|t| if t == "1" { 1u8 } else { 0u8 })
                .collect();
            Ok(bits)
        }
    }
}

/// Build the problem instance named by the config.
pub fn build_problem(pc: &ProblemConfig) -> Result<BuiltProblem, HarnessError> {
    match pc.family.as_str() {
        "he-yuan" => Ok(BuiltProblem {
            instance: build_he_yuan(),
            l: 1.0,
            rows: 0,
            cols: 0,
            is_imaging: false,
        }),
        "tv-denoise" => {
            let clean = load_or_synthesize_image(pc)?;
            let std = resolve_noise_std(pc, Some(0.05), None);
            let noisy = add_gaussian_noise(&clean, std, pc.seed);
            let instance = build_tv_denoise(noisy.data.clone(), noisy.rows, noisy.cols, pc.alpha)
                .with_truth(clean.data);
            Ok(BuiltProblem {
                instance,
                l: 8.0_f64.sqrt(),
                rows: noisy.rows,
                cols: noisy.cols,
                is_imaging: true,
            })
        }
        "tv-inpaint" => {
            let clean = load_or_synthesize_image(pc)?;
            let bits = build_mask(pc, clean.rows, clean.cols)?;
            let std = resolve_noise_std(pc, None, Some(0.02));
            let noisy = add_gaussian_noise(&clean, std, pc.seed);
            let observed = apply_mask(&noisy, &bits);
            let instance = build_tv_inpaint(
                observed.data.clone(),
                bits,
                observed.rows,
                observed.cols,
                pc.lambda,
            )
            .with_truth(clean.data);
            let instance = match pc.f_opt {
                Some(v) => instance.with_f_opt(v),
                None => instance,
            };
            Ok(BuiltProblem {
                instance,
                l: 8.0_f64.sqrt(),
                rows: observed.rows,
                cols: observed.cols,
                is_imaging: true,
            })
        }
        "matrix-game" => {
            let k = match &pc.design {
                Some(path) => LinearMap::dense_from_text(&fs::read_to_string(path)?)?,
                None => {
                    let case = GameCase::parse(&pc.case).expect("validated");
                    gen_game_matrix(case, pc.p, pc.q, pc.seed)
                }
            };
            let l = k.estimate_norm(1e-8, 1000, pc.seed).value;
            Ok(BuiltProblem {
                instance: build_matrix_game(k),
                l,
                rows: 0,
                cols: 0,
                is_imaging: false,
            })
        }
        "lasso" => {
            let (k, b, _xt) = gen_lasso_design(pc.p, pc.q, pc.s, pc.v, pc.seed);
            let ktb = k.adjoint_apply(&b)?;
            let mu = pc.mu_scale * ktb.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let l = k.estimate_norm(1e-8, 1000, pc.seed).value;
            let instance = build_lasso(k, b, mu);
            let instance = match pc.f_opt {
                Some(v) => instance.with_f_opt(v),
                None => instance,
            };
            Ok(BuiltProblem { instance, l, rows: 0, cols: 0, is_imaging: false })
        }
        other => Err(HarnessError::Invalid(format!("unknown problem family {other:?}"))),
    }
}

/// Resolve the `(theta, eta, gamma, tau, ...)` tuple against the problem's
/// operator norm.
pub fn assemble_params(
    cfg: &RunConfig,
    algo: AlgorithmId,
    l: f64,
) -> Result<ParamConfig, HarnessError> {
    let p = &cfg.params;
    let gamma = match (p.gamma, p.gamma_l2) {
        (Some(g), None) => g,
        (None, Some(gl2)) => gl2 / (l * l),
        // canonical experiment presets: tau*sigma*L^2 = psi for the
        // convex-combination baseline, 1 otherwise
        (None, None) if algo == AlgorithmId::Pdac => p.psi / (l * l),
        (None, None) => 1.0 / (l * l),
        (Some(_), Some(_)) => unreachable!("validated"),
    };
    let tau = match p.tau {
        Some(t) => t,
        None => (gamma * p.tau_over_sigma).sqrt(),
    };
    let mut out = ParamConfig {
        theta: p.theta,
        eta: p.eta,
        gamma,
        tau,
        mode: algo.mode(),
        limiting_allowed: p.limiting,
        rho: p.rho,
        psi: p.psi,
        force: p.force,
    };
    match algo {
        AlgorithmId::PdsaCc | AlgorithmId::PdsaCcAdaptive | AlgorithmId::ModifiedPdsa => {
            if !out.force {
                validate_params(&out, l)?;
            }
        }
        AlgorithmId::CpPdhg | AlgorithmId::CpPdhgRelaxed => {
            if algo == AlgorithmId::CpPdhg {
                out.rho = 1.0;
            }
            // the step-size contract tau*sigma*L^2 <= 1 is advisory here:
            // divergence studies legitimately violate it
            if !out.force && out.gamma * l * l > 1.0 + 1e-9 {
                eprintln!(
                    "warning: tau*sigma*L^2 = {} > 1 for {}",
                    out.gamma * l * l,
                    algo.as_str()
                );
            }
        }
        AlgorithmId::Pdac | AlgorithmId::Ahs => {}
    }
    Ok(out)
}

/// Summary of one experiment run, serialized as `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub label: String,
    pub algorithm: String,
    pub seed: u64,
    pub iterations: u64,
    pub stop: StopReason,
    pub final_metric: f64,
    pub wall_time_s: f64,
    pub l: f64,
    pub theta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub sigma: f64,
    pub rho: f64,
    pub psi: f64,
    pub f_opt: Option<f64>,
    pub snr_db: Option<f64>,
    pub trace_path: String,
    pub config: RunConfig,
}

fn fmt_field(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

/// Stream trace records to a CSV file with the fixed column set
/// `n,elapsed_s,metric,vres,ures,theta,eta,fp_residual`.
pub struct CsvTraceWriter {
    file: std::io::BufWriter<fs::File>,
}

impl CsvTraceWriter {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        let mut file = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(file, "n,elapsed_s,metric,vres,ures,theta,eta,fp_residual")?;
        Ok(CsvTraceWriter { file })
    }

    pub fn write(&mut self, r: &TraceRecord) -> Result<(), HarnessError> {
        writeln!(
            self.file,
            "{},{:.6},{},{},{},{},{},{}",
            r.n,
            r.elapsed_s,
            fmt_field(r.metric),
            fmt_field(r.vres),
            fmt_field(r.ures),
            fmt_field(r.theta),
            fmt_field(r.eta),
            fmt_field(r.fp_residual)
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), HarnessError> {
        self.file.flush()?;
        Ok(())
    }
}

/// A long reference run that pins the optimal objective value for the
/// residual metric: the hybrid-gradient baseline at `tau = sigma = 1/L`,
/// stopped on a tiny relative fixed-point residual or the iteration cap.
pub fn f_opt_oracle(
    problem: &ProblemInstance,
    l: f64,
    max_iters: u64,
    tol: f64,
) -> Result<f64, HarnessError> {
    let tau = 1.0 / l;
    let cfg = ParamConfig::diagonal(1.0, 1.0, tau * tau, tau).with_force(true);
    let mut oracle_problem = problem.clone();
    // run the oracle on the raw objective so the stopping rule below is the
    // only termination criterion
    oracle_problem.metric = crate::problems::MetricSpec::ObjectiveResidual { f_opt: None };
    let mut state = crate::solver::SolverState::init(
        &oracle_problem,
        &oracle_problem.x0.clone(),
        &oracle_problem.y0.clone(),
        &cfg,
    )?;
    let mut n = 0u64;
    loop {
        crate::solver::step_cp_pdhg(&mut state, &oracle_problem, tau, tau, 1.0)?;
        n += 1;
        let scale = 1.0
            + crate::vecmath::norm2(&state.x).max(crate::vecmath::norm2(&state.y));
        if state.fp_residual <= tol * scale || n >= max_iters {
            break;
        }
    }
    Ok(oracle_problem.primal_objective(&state.x, Some(&state.kx))?)
}

/// Run one experiment: build the problem, resolve parameters, drive the
/// solver, and write `trace.csv` / `summary.json` (plus PGM images for the
/// imaging families) into the output directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentSummary, HarnessError> {
    validate_config(cfg)?;
    let algo = AlgorithmId::parse(&cfg.algorithm.id).expect("validated");
    run_experiment_as(cfg, algo, &cfg.output.dir)
}

fn run_experiment_as(
    cfg: &RunConfig,
    algo: AlgorithmId,
    out_dir: &str,
) -> Result<ExperimentSummary, HarnessError> {
    let built = build_problem(&cfg.problem)?;
    let mut instance = built.instance;
    let params = assemble_params(cfg, algo, built.l)?;

    // residual metrics need the optimal value; run the reference oracle when
    // the config does not pin one
    if matches!(instance.metric, crate::problems::MetricSpec::ObjectiveResidual { f_opt: None }) {
        let f_opt = f_opt_oracle(
            &instance,
            built.l,
            cfg.problem.oracle_max_iters,
            cfg.problem.oracle_tol,
        )?;
        instance = instance.with_f_opt(f_opt);
    }

    let dir = PathBuf::from(out_dir);
    fs::create_dir_all(&dir)?;
    if cfg.output.dump_design && !built.is_imaging {
        let kd = instance.k.to_dense();
        let mut text = String::new();
        for i in 0..kd.rows {
            let row: Vec<String> = (0..kd.cols).map(|j| format!("{:?}", kd.get(i, j))).collect();
            text.push_str(&row.join(" "));
            text.push('\n');
        }
        fs::write(dir.join("design.txt"), text)?;
    }
    let trace_path = dir.join(format!("trace-{}.csv", algo.as_str()));
    let mut writer = CsvTraceWriter::create(&trace_path)?;

    let stopping = Stopping {
        metric_tol: cfg.stopping.metric_tol,
        fp_tol: cfg.stopping.fp_tol,
        max_iters: cfg.stopping.max_iters,
        wall_clock_s: cfg.stopping.wall_clock_s,
    };
    let opts = RunOptions {
        trace_stride: cfg.output.trace_stride,
        track_ergodic: false,
        x0: None,
        y0: None,
        adaptive: Some(AdaptiveSpec {
            epsilon: cfg.adaptive.epsilon,
            theta_bar: cfg.adaptive.theta_bar,
            eta_bar: cfg.adaptive.eta_bar,
            l: built.l,
        }),
    };

    let mut sink = |r: &TraceRecord| {
        // write errors surface at finish()
        let _ = writer.write(r);
    };
    let out = run(&instance, algo, &params, &stopping, &opts, Some(&mut sink))?;
    writer.finish()?;

    let snr_db = instance
        .truth_image
        .as_ref()
        .map(|truth| snr(&out.state.x, truth));

    if built.is_imaging && cfg.output.write_images {
        let rows = built.rows;
        let cols = built.cols;
        write_pgm(
            &dir.join("input.pgm"),
            &Image::new(rows, cols, instance.x0.clone()),
            true,
        )?;
        write_pgm(&dir.join("result.pgm"), &Image::new(rows, cols, out.state.x.clone()), true)?;
        if let Some(truth) = &instance.truth_image {
            write_pgm(&dir.join("truth.pgm"), &Image::new(rows, cols, truth.clone()), true)?;
        }
    }

    let summary = ExperimentSummary {
        label: instance.label.clone(),
        algorithm: algo.as_str().into(),
        seed: cfg.problem.seed,
        iterations: out.iterations,
        stop: out.stop,
        final_metric: out.final_metric,
        wall_time_s: out.elapsed_s,
        l: built.l,
        theta: params.theta,
        eta: params.eta,
        gamma: params.gamma,
        tau: params.tau,
        sigma: params.sigma(),
        rho: params.rho,
        psi: params.psi,
        f_opt: instance.f_opt(),
        snr_db,
        trace_path: trace_path.display().to_string(),
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("serializable summary");
    fs::write(dir.join(format!("summary-{}.json", algo.as_str())), json)?;
    Ok(summary)
}

/// Comparison mode: run several algorithms on the same problem, one CSV per
/// algorithm plus a merged summary file.
pub fn compare(
    cfg: &RunConfig,
    algorithms: &[AlgorithmId],
) -> Result<Vec<ExperimentSummary>, HarnessError> {
    validate_config(cfg)?;
    let mut summaries = Vec::new();
    for &algo in algorithms {
        summaries.push(run_experiment_as(cfg, algo, &cfg.output.dir)?);
    }
    let json = serde_json::to_string_pretty(&summaries).expect("serializable summaries");
    fs::write(PathBuf::from(&cfg.output.dir).join("compare-summary.json"), json)?;
    Ok(summaries)
}

/// How the step-size product is derived from `(theta, eta)` in a grid scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaRule {
    /// `gamma = (2-theta)(2-eta)/L^2`, the limiting equality (requires the
    /// uniform-monotonicity flag).
    Limiting,
    /// `gamma * L^2 = scale * (2-theta)(2-eta)` for a scale below one.
    Scaled(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub theta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub iterations: u64,
    pub converged: bool,
    pub final_metric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    pub thetas: Vec<f64>,
    pub etas: Vec<f64>,
}

impl GridResult {
    /// The converged cell with the fewest iterations, if any converged.
    pub fn best(&self) -> Option<&GridCell> {
        self.cells
            .iter()
            .filter(|c| c.converged)
            .min_by_key(|c| c.iterations)
    }

    /// Text table in the layout of the iteration-count tables: rows are eta,
    /// columns theta, a dash for cells that hit the iteration cap.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str("eta \\ theta");
        for t in &self.thetas {
            out.push_str(&format!("\t{t:.4}"));
        }
        out.push('\n');
        for e in &self.etas {
            out.push_str(&format!("{e:.4}"));
            for t in &self.thetas {
                let cell = self
                    .cells
                    .iter()
                    .find(|c| c.theta == *t && c.eta == *e)
                    .expect("complete grid");
                if cell.converged {
                    out.push_str(&format!("\t{}", cell.iterations));
                } else {
                    out.push_str("\t—");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Scan a `(theta, eta)` grid: each cell derives gamma by the stated rule,
/// runs to the configured stopping rule, and records the iteration count or
/// the non-termination sentinel.
pub fn grid_scan(
    cfg: &RunConfig,
    thetas: &[f64],
    etas: &[f64],
    rule: GammaRule,
) -> Result<GridResult, HarnessError> {
    validate_config(cfg)?;
    let algo = AlgorithmId::parse(&cfg.algorithm.id).expect("validated");
    let built = build_problem(&cfg.problem)?;
    let mut instance = built.instance;
    if matches!(instance.metric, crate::problems::MetricSpec::ObjectiveResidual { f_opt: None }) {
        let f_opt = f_opt_oracle(
            &instance,
            built.l,
            cfg.problem.oracle_max_iters,
            cfg.problem.oracle_tol,
        )?;
        instance = instance.with_f_opt(f_opt);
    }
    let l = built.l;

    let stopping = Stopping {
        metric_tol: cfg.stopping.metric_tol,
        fp_tol: cfg.stopping.fp_tol,
        max_iters: cfg.stopping.max_iters,
        wall_clock_s: cfg.stopping.wall_clock_s,
    };

    let mut cells = Vec::new();
    for &eta in etas {
        for &theta in thetas {
            let (gamma, limiting) = match rule {
                GammaRule::Limiting => ((2.0 - theta) * (2.0 - eta) / (l * l), true),
                GammaRule::Scaled(s) => ((s * (2.0 - theta) * (2.0 - eta)) / (l * l), false),
            };
            let tau = (gamma * cfg.params.tau_over_sigma).sqrt();
            let params = ParamConfig {
                theta,
                eta,
                gamma,
                tau,
                mode: algo.mode(),
                limiting_allowed: limiting,
                rho: cfg.params.rho,
                psi: cfg.params.psi,
                force: cfg.params.force,
            };
            if !params.force {
                validate_params(&params, l)?;
            }
            let out = run(
                &instance,
                algo,
                &params,
                &stopping,
                &RunOptions { trace_stride: u64::MAX, ..Default::default() },
                None,
            )?;
            cells.push(GridCell {
                theta,
                eta,
                gamma,
                iterations: out.iterations,
                converged: out.stop == StopReason::MetricTol || out.stop == StopReason::FpTol,
                final_metric: out.final_metric,
            });
        }
    }
    let result = GridResult { cells, thetas: thetas.to_vec(), etas: etas.to_vec() };

    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir)?;
    let mut file = std::io::BufWriter::new(fs::File::create(dir.join("grid.csv"))?);
    writeln!(file, "theta,eta,gamma,iterations,converged,final_metric")?;
    for c in &result.cells {
        writeln!(
            file,
            "{},{},{},{},{},{}",
            fmt_field(c.theta),
            fmt_field(c.eta),
            fmt_field(c.gamma),
            c.iterations,
            c.converged,
            fmt_field(c.final_metric)
        )?;
    }
    file.flush()?;
    Ok(result)
}

/// Run the verification suite, write one JSON report per check plus an
/// overall summary, and return whether everything passed.
pub fn run_verification(seed: u64, out_dir: &str) -> Result<bool, HarnessError> {
    let reports = crate::verify::verify_suite(seed);
    let dir = PathBuf::from(out_dir);
    fs::create_dir_all(&dir)?;
    for r in &reports {
        let json = serde_json::to_string_pretty(r).expect("serializable report");
        fs::write(dir.join(format!("check-{}.json", r.name)), json)?;
    }
    let all_pass = reports.iter().all(|r| r.pass);
    let summary = serde_json::json!({
        "seed": seed,
        "checks": reports.len(),
        "passed": reports.iter().filter(|r| r.pass).count(),
        "all_pass": all_pass,
    });
    fs::write(dir.join("verify-summary.json"), serde_json::to_string_pretty(&summary).unwrap())?;
    Ok(all_pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_scalar_demo() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.problem.family, "he-yuan");
        assert_eq!(cfg.algorithm.id, "pdsa-cc");
        assert_eq!(cfg.params.theta, 1.0);
        assert_eq!(cfg.params.eta, 0.99);
        assert_eq!(cfg.stopping.metric_tol, Some(1e-8));
        assert_eq!(cfg.stopping.max_iters, 10_000);
    }

    #[test]
    fn config_validates_gamma_l2_form() {
        let text = r#"
[params]
theta = 0.198
eta = 1.1666666666666667
gamma_l2 = 1.5
"#;
        assert!(parse_config(text).is_ok());

        let text = r#"
[params]
theta = 2.5
"#;
        let err = parse_config(text).unwrap_err();
        assert!(matches!(err, HarnessError::Params(ParamError::ThetaRange(_))));
    }

    #[test]
    fn unknown_keys_rejected_with_location() {
        let err = parse_config("[params]\nthle = 1.0\n").unwrap_err();
        match err {
            HarnessError::Parse(msg) => assert!(msg.contains("thle"), "message: {msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn default_demo_terminates_quickly() {
        let mut cfg = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        cfg.output.dir = dir.path().display().to_string();
        let summary = run_experiment(&cfg).unwrap();
        assert_eq!(summary.stop, StopReason::MetricTol);
        assert!(summary.iterations < 10_000);
        assert!(dir.path().join("trace-pdsa-cc.csv").exists());
        assert!(dir.path().join("summary-pdsa-cc.json").exists());
    }

    #[test]
    fn determinism_byte_identical_modulo_elapsed() {
        let run_once = |dir: &Path| -> String {
            let mut cfg = RunConfig::default();
            cfg.output.dir = dir.display().to_string();
            run_experiment(&cfg).unwrap();
            fs::read_to_string(dir.join("trace-pdsa-cc.csv")).unwrap()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let strip = |csv: String| -> String {
            csv.lines()
                .map(|line| {
                    let mut cols: Vec<&str> = line.split(',').collect();
                    if cols.len() > 1 {
                        cols.remove(1);
                    }
                    cols.join(",")
                })
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(run_once(d1.path())), strip(run_once(d2.path())));
    }

    #[test]
    fn compare_mode_writes_per_algorithm_traces() {
        let mut cfg = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        cfg.output.dir = dir.path().display().to_string();
        let algos = [AlgorithmId::PdsaCc, AlgorithmId::CpPdhg, AlgorithmId::Pdac];
        let summaries = compare(&cfg, &algos).unwrap();
        assert_eq!(summaries.len(), 3);
        for a in &algos {
            assert!(dir.path().join(format!("trace-{}.csv", a.as_str())).exists());
        }
        assert!(dir.path().join("compare-summary.json").exists());
    }

    #[test]
    fn degenerate_grid_is_one_run() {
        let mut cfg = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        cfg.output.dir = dir.path().display().to_string();
        cfg.params.limiting = true;
        let g = grid_scan(&cfg, &[1.0], &[1.0], GammaRule::Scaled(0.99)).unwrap();
        assert_eq!(g.cells.len(), 1);
        assert!(g.cells[0].converged);
        assert!(g.best().is_some());
    }

    #[test]
    fn grid_sentinel_on_iteration_cap() {
        let mut cfg = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        cfg.output.dir = dir.path().display().to_string();
        cfg.stopping.metric_tol = Some(0.0); // unreachable
        cfg.stopping.max_iters = 10;
        let g = grid_scan(&cfg, &[0.5], &[0.5], GammaRule::Scaled(0.9)).unwrap();
        assert!(!g.cells[0].converged);
        assert!(g.render_table().contains('—'));
        assert!(g.best().is_none());
    }

    #[test]
    fn mutually_exclusive_keys() {
        let err = parse_config("[params]\ngamma = 1.0\ngamma_l2 = 1.0\n").unwrap_err();
        assert!(matches!(err, HarnessError::Invalid(_)));
        let err =
            parse_config("[problem]\nnoise_std = 0.1\nnoise_variance = 0.01\n").unwrap_err();
        assert!(matches!(err, HarnessError::Invalid(_)));
    }

    #[test]
    fn pdac_default_preset() {
        // psi = 1.6, tau = sigma, tau*sigma = 1.6/L^2
        let cfg = RunConfig::default();
        let l = 2.0;
        let p = assemble_params(&cfg, AlgorithmId::Pdac, l).unwrap();
        assert!((p.gamma - 1.6 / (l * l)).abs() < 1e-15);
        assert!((p.tau - p.gamma.sqrt()).abs() < 1e-15);
        assert_eq!(p.psi, 1.6);
    }

    #[test]
    fn csv_schema_is_stable() {
        let mut cfg = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        cfg.output.dir = dir.path().display().to_string();
        run_experiment(&cfg).unwrap();
        let csv = fs::read_to_string(dir.path().join("trace-pdsa-cc.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n,elapsed_s,metric,vres,ures,theta,eta,fp_residual"
        );
        // n strictly increasing
        let ns: Vec<u64> = lines
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert!(ns.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn design_dump_roundtrips() {
        let mut cfg = RunConfig::default();
        cfg.problem.family = "matrix-game".into();
        cfg.problem.p = 6;
        cfg.problem.q = 5;
        cfg.stopping.max_iters = 5;
        cfg.stopping.metric_tol = None;
        cfg.output.dump_design = true;
        let dir = tempfile::tempdir().unwrap();
        cfg.output.dir = dir.path().display().to_string();
        run_experiment(&cfg).unwrap();

        let text = fs::read_to_string(dir.path().join("design.txt")).unwrap();
        let reloaded = LinearMap::dense_from_text(&text).unwrap();
        let expected = crate::problems::gen_game_matrix(GameCase::Uniform, 6, 5, 1);
        assert_eq!(reloaded.to_dense().data(), expected.to_dense().data());

        // and a run driven by the dumped file matches the generated one
        let mut cfg2 = cfg.clone();
        cfg2.problem.design = Some(dir.path().join("design.txt").display().to_string());
        cfg2.problem.p = 999; // ignored when a design file is given
        let dir2 = tempfile::tempdir().unwrap();
        cfg2.output.dir = dir2.path().display().to_string();
        let s1 = run_experiment(&cfg).unwrap();
        let s2 = run_experiment(&cfg2).unwrap();
        assert_eq!(s1.final_metric, s2.final_metric);
    }

    #[test]
    fn adaptive_algorithm_converges_and_moves_parameters() {
        let mut cfg = RunConfig::default();
        cfg.problem.family = "lasso".into();
        cfg.problem.p = 30;
        cfg.problem.q = 80;
        cfg.problem.s = 5;
        cfg.problem.v = 0.5;
        cfg.algorithm.id = "pdsa-cc-adaptive".into();
        cfg.params.theta = 0.5;
        cfg.params.eta = 0.5;
        cfg.params.gamma_l2 = Some(1.0);
        cfg.stopping.metric_tol = Some(1e-8);
        cfg.stopping.max_iters = 200_000;
        let dir = tempfile::tempdir().unwrap();
        cfg.output.dir = dir.path().display().to_string();
        let summary = run_experiment(&cfg).unwrap();
        assert_eq!(summary.stop, StopReason::MetricTol);
        // the summary echoes the configured parameters; the trace carries the
        // adapted trajectory
        let csv = fs::read_to_string(dir.path().join("trace-pdsa-cc-adaptive.csv")).unwrap();
        let last = csv.lines().last().unwrap();
        let cols: Vec<&str> = last.split(',').collect();
        let theta_final: f64 = cols[5].parse().unwrap();
        let eta_final: f64 = cols[6].parse().unwrap();
        assert!(theta_final != 0.5 || eta_final != 0.5, "controller never engaged");
        assert!(theta_final > 0.0 && theta_final < 2.0);
        assert!(eta_final > 0.0 && eta_final < 2.0);
    }

    #[test]
    fn config_roundtrips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = parse_config(&text).unwrap();
        let a = serde_json::to_string(&cfg).unwrap();
        let b = serde_json::to_string(&back).unwrap();
        assert_eq!(a, b);
    }
}
