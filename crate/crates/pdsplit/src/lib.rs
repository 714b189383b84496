//! First-order primal-dual operator-splitting solvers for composite monotone
//! inclusions `0 in A(x) + K* B(K x)`, built around a scheme that combines a
//! convex combination step with over-relaxation to admit step-size products
//! `tau*sigma*|K|^2` anywhere below `(2-theta)(2-eta)` (up to 4), plus a
//! nondiagonal-scaling variant, classical baselines, the experiment problems
//! from TV imaging, matrix games and LASSO, and a numerical verification layer
//! for the underlying fixed-point theory.

pub mod dense;
pub mod harness;
pub mod image;
pub mod linop;
pub mod params;
pub mod problems;
pub mod prox;
pub mod rng;
pub mod solver;
pub mod vecmath;
pub mod verify;

pub use harness::{parse_config, run_experiment, RunConfig};
pub use linop::{LinearMap, NormEstimate};
pub use params::{validate_params, ParamConfig, PMode, ScalingP};
pub use problems::{
    build_he_yuan, build_lasso, build_matrix_game, build_tv_denoise, build_tv_inpaint,
    ErgodicAccumulator, ProblemInstance,
};
pub use prox::{moreau_dual_prox, DualProx, ResolventOp};
pub use solver::{
    adaptive_update, apply_tp, recover_dual, run, AlgorithmId, RunOptions, SolverState, Stopping,
};
pub use verify::{brute_force_projection, check_efne, check_fixed_point, he_yuan_eigencheck, CheckReport};
