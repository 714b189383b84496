//! Experiment runner for the pdsplit solvers.
//!
//! Verbs: `run` one experiment, `compare` several algorithms on one problem,
//! `grid` a (theta, eta) scan, `verify` the numerical verification suite.
//! Flags override the corresponding config-file fields.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pdsplit::harness::{self, GammaRule, RunConfig};
use pdsplit::solver::AlgorithmId;

#[derive(Parser)]
#[command(name = "pdsplit", about = "Primal-dual splitting solver experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// TOML run configuration; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem family: he-yuan | tv-denoise | tv-inpaint | matrix-game | lasso
    #[arg(long)]
    problem: Option<String>,
    /// Algorithm id: pdsa-cc | pdsa-cc-adaptive | modified-pdsa | cp-pdhg |
    /// cp-pdhg-relaxed | pdac | ahs
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Step-size product as gamma * L^2 (norm-free form)
    #[arg(long)]
    gamma_l2: Option<f64>,
    /// Absolute step-size product tau * sigma
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    psi: Option<f64>,
    /// Accept the limiting equality gamma L^2 = (2-theta)(2-eta)
    #[arg(long)]
    limiting: bool,
    /// Skip parameter feasibility enforcement (divergence demos)
    #[arg(long)]
    force: bool,
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long)]
    metric_tol: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

impl Overrides {
    fn build(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                harness::parse_config(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = &self.problem {
            cfg.problem.family = v.clone();
        }
        if let Some(v) = &self.algorithm {
            cfg.algorithm.id = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.problem.seed = v;
        }
        if let Some(v) = self.theta {
            cfg.params.theta = v;
        }
        if let Some(v) = self.eta {
            cfg.params.eta = v;
        }
        if let Some(v) = self.gamma_l2 {
            cfg.params.gamma_l2 = Some(v);
            cfg.params.gamma = None;
        }
        if let Some(v) = self.gamma {
            cfg.params.gamma = Some(v);
            cfg.params.gamma_l2 = None;
        }
        if let Some(v) = self.tau {
            cfg.params.tau = Some(v);
        }
        if let Some(v) = self.rho {
            cfg.params.rho = v;
        }
        if let Some(v) = self.psi {
            cfg.params.psi = v;
        }
        if self.limiting {
            cfg.params.limiting = true;
        }
        if self.force {
            cfg.params.force = true;
        }
        if let Some(v) = self.max_iters {
            cfg.stopping.max_iters = v;
        }
        if let Some(v) = self.metric_tol {
            cfg.stopping.metric_tol = Some(v);
        }
        if let Some(v) = &self.out {
            cfg.output.dir = v.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv / summary.json
    Run {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run several algorithms on the same problem
    Compare {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated algorithm ids (default: pdsa-cc,cp-pdhg,pdac)
        #[arg(long, default_value = "pdsa-cc,cp-pdhg,pdac")]
        algorithms: String,
    },
    /// Scan a (theta, eta) grid, deriving gamma per cell
    Grid {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated theta values; fractions like 1/7 are accepted
        #[arg(long, default_value = "1/7,1/5,1/2,1,1.5")]
        thetas: String,
        /// Comma-separated eta values
        #[arg(long, default_value = "0.5,1,7/6,1.5,11/6")]
        etas: String,
        /// gamma rule: "limiting" or "scaled:(factor)"
        #[arg(long, default_value = "limiting")]
        gamma_rule: String,
    },
    /// Run the numerical verification suite and emit JSON check reports
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out/verify")]
        out: String,
    },
}

fn parse_number_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            if let Some((num, den)) = tok.split_once('/') {
                let n: f64 = num.trim().parse().with_context(|| format!("bad number {tok:?}"))?;
                let d: f64 = den.trim().parse().with_context(|| format!("bad number {tok:?}"))?;
                Ok(n / d)
            } else {
                tok.parse().with_context(|| format!("bad number {tok:?}"))
            }
        })
        .collect()
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { overrides } => {
            let cfg = overrides.build()?;
            let summary = harness::run_experiment(&cfg)?;
            println!(
                "{}: {} stopped ({:?}) after {} iterations, metric {:.3e}, {:.2}s",
                summary.label,
                summary.algorithm,
                summary.stop,
                summary.iterations,
                summary.final_metric,
                summary.wall_time_s
            );
            if let Some(snr) = summary.snr_db {
                println!("SNR: {snr:.2} dB");
            }
            println!("trace: {}", summary.trace_path);
        }
        Command::Compare { overrides, algorithms } => {
            let cfg = overrides.build()?;
            let algos: Vec<AlgorithmId> = algorithms
                .split(',')
                .map(|s| {
                    AlgorithmId::parse(s.trim())
                        .with_context(|| format!("unknown algorithm {s:?}"))
                })
                .collect::<Result<_>>()?;
            let summaries = harness::compare(&cfg, &algos)?;
            println!("{:<18} {:>10} {:>14} {:>9}", "algorithm", "iters", "metric", "time(s)");
            for s in &summaries {
                println!(
                    "{:<18} {:>10} {:>14.3e} {:>9.2}",
                    s.algorithm, s.iterations, s.final_metric, s.wall_time_s
                );
            }
        }
        Command::Grid { overrides, thetas, etas, gamma_rule } => {
            let cfg = overrides.build()?;
            let thetas = parse_number_list(&thetas)?;
            let etas = parse_number_list(&etas)?;
            let rule = if gamma_rule == "limiting" {
                GammaRule::Limiting
            } else if let Some(s) = gamma_rule.strip_prefix("scaled:") {
                GammaRule::Scaled(s.parse().context("bad scale factor")?)
            } else {
                bail!("gamma rule must be \"limiting\" or \"scaled:<factor>\"");
            };
            let result = harness::grid_scan(&cfg, &thetas, &etas, rule)?;
            print!("{}", result.render_table());
            match result.best() {
                Some(best) => println!(
                    "best cell: theta = {:.4}, eta = {:.4} ({} iterations)",
                    best.theta, best.eta, best.iterations
                ),
                None => println!("no cell converged within the iteration cap"),
            }
        }
        Command::Verify { seed, out } => {
            let all_pass = harness::run_verification(seed, &out)?;
            let summary = fs::read_to_string(PathBuf::from(&out).join("verify-summary.json"))?;
            println!("{summary}");
            if !all_pass {
                bail!("verification suite reported failures (reports in {out})");
            }
        }
    }
    Ok(())
}
