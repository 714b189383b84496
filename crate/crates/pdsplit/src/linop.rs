//! Bounded linear operators: forward/adjoint application and spectral-norm
//! estimation.
//!
//! All solvers touch the coupling operator only through [`LinearMap`], so one
//! adjoint-consistency test per kind certifies every algorithm's `K`/`K*`
//! usage at once.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::dense::DenseMat;
use crate::rng::{streams, SplitMix64};
use crate::vecmath::{dot, norm2};

#[derive(Debug, thiserror::Error)]
pub enum LinOpError {
    #[error("dimension mismatch: expected a vector of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty operator definition")]
    Empty,
}

/// Shared forward/adjoint application counters for instrumented operators.
#[derive(Debug, Clone, Default)]
pub struct ApplyCounters(Arc<(AtomicU64, AtomicU64)>);

impl ApplyCounters {
    pub fn applies(&self) -> u64 {
        self.0 .0.load(Ordering::Relaxed)
    }

    pub fn adjoint_applies(&self) -> u64 {
        self.0 .1.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0 .0.store(0, Ordering::Relaxed);
        self.0 .1.store(0, Ordering::Relaxed);
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Identity,
    ScaledIdentity(f64),
    Dense(DenseMat),
    /// Forward differences of a row-major `rows x cols` image, horizontal
    /// stack first then vertical, zero difference on the last column/row.
    Grad2d { rows: usize, cols: usize },
    DiagonalMask(Vec<u8>),
    /// Scalar multiple of another operator (the only composition we need).
    Scaled { factor: f64, inner: Box<LinearMap> },
    Instrumented { inner: Box<LinearMap>, counters: ApplyCounters },
}

/// A bounded linear operator `K: R^in_dim -> R^out_dim` with a certified
/// upper bound on its spectral norm.
#[derive(Debug, Clone)]
pub struct LinearMap {
    in_dim: usize,
    out_dim: usize,
    kind: Kind,
}

/// Result of power iteration on `K*K`.
#[derive(Debug, Clone, Copy)]
pub struct NormEstimate {
    pub value: f64,
    /// False when the Rayleigh quotients had not settled within `max_iters`;
    /// `value` is then the best estimate so far.
    pub converged: bool,
    pub iterations: usize,
}

impl LinearMap {
    pub fn identity(n: usize) -> Self {
        LinearMap { in_dim: n, out_dim: n, kind: Kind::Identity }
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        LinearMap { in_dim: n, out_dim: n, kind: Kind::ScaledIdentity(s) }
    }

    pub fn dense(mat: DenseMat) -> Self {
        LinearMap { in_dim: mat.cols, out_dim: mat.rows, kind: Kind::Dense(mat) }
    }

    pub fn dense_from_rows(rows: Vec<Vec<f64>>) -> Self {
        Self::dense(DenseMat::from_rows(rows))
    }

    pub fn grad2d(rows: usize, cols: usize) -> Self {
        assert!(rows >= 2 && cols >= 2, "grad2d needs at least a 2x2 image");
        LinearMap {
            in_dim: rows * cols,
            out_dim: 2 * rows * cols,
            kind: Kind::Grad2d { rows, cols },
        }
    }

    /// Diagonal 0/1 mask operator.
    pub fn mask(bits: Vec<u8>) -> Self {
        assert!(bits.iter().all(|&b| b <= 1), "mask bits must be 0 or 1");
        LinearMap { in_dim: bits.len(), out_dim: bits.len(), kind: Kind::DiagonalMask(bits) }
    }

    pub fn scaled(factor: f64, inner: LinearMap) -> Self {
        LinearMap {
            in_dim: inner.in_dim,
            out_dim: inner.out_dim,
            kind: Kind::Scaled { factor, inner: Box::new(inner) },
        }
    }

    /// Wrap an operator so that forward and adjoint applications are counted.
    pub fn instrumented(inner: LinearMap) -> (Self, ApplyCounters) {
        let counters = ApplyCounters::default();
        let map = LinearMap {
            in_dim: inner.in_dim,
            out_dim: inner.out_dim,
            kind: Kind::Instrumented { inner: Box::new(inner), counters: counters.clone() },
        };
        (map, counters)
    }

    /// Parse a dense operator from whitespace-separated rows of numbers.
    /// Blank lines and `#` comments are skipped.
    pub fn dense_from_text(text: &str) -> Result<Self, LinOpError> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: Result<Vec<f64>, _> = line.split_whitespace().map(|t| t.parse()).collect();
            let row = row.map_err(|e| LinOpError::Parse {
                line: idx + 1,
                msg: format!("bad number: {e}"),
            })?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(LinOpError::Parse {
                        line: idx + 1,
                        msg: format!("expected {w} entries, got {}", row.len()),
                    })
                }
                _ => {}
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(LinOpError::Empty);
        }
        Ok(Self::dense_from_rows(rows))
    }

    /// Parse a 0/1 mask grid (row-major). Returns the operator plus the grid shape.
    pub fn mask_from_text(text: &str) -> Result<(Self, usize, usize), LinOpError> {
        let mut bits: Vec<u8> = Vec::new();
        let mut rows = 0usize;
        let mut width = None;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut row: Vec<u8> = Vec::new();
            for tok in line.split_whitespace() {
                match tok {
                    "0" => row.push(0),
                    "1" => row.push(1),
                    other => {
                        return Err(LinOpError::Parse {
                            line: idx + 1,
                            msg: format!("mask entries must be 0 or 1, got {other:?}"),
                        })
                    }
                }
            }
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(LinOpError::Parse {
                        line: idx + 1,
                        msg: format!("expected {w} entries, got {}", row.len()),
                    })
                }
                _ => {}
            }
            rows += 1;
            bits.extend(row);
        }
        if bits.is_empty() {
            return Err(LinOpError::Empty);
        }
        let cols = width.unwrap();
        Ok((Self::mask(bits), rows, cols))
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// `K x`
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, LinOpError> {
        if x.len() != self.in_dim {
            return Err(LinOpError::Dimension { expected: self.in_dim, got: x.len() });
        }
        Ok(match &self.kind {
            Kind::Identity => x.to_vec(),
            Kind::ScaledIdentity(s) => x.iter().map(|v| s * v).collect(),
            Kind::Dense(m) => m.matvec(x),
            Kind::Grad2d { rows, cols } => grad2d_forward(*rows, *cols, x),
            Kind::DiagonalMask(bits) => x
                .iter()
                .zip(bits)
                .map(|(v, &b)| if b == 1 { *v } else { 0.0 })
                .collect(),
            Kind::Scaled { factor, inner } => {
                let mut out = inner.apply(x)?;
                for v in &mut out {
                    *v *= factor;
                }
                out
            }
            Kind::Instrumented { inner, counters } => {
                counters.0 .0.fetch_add(1, Ordering::Relaxed);
                inner.apply(x)?
            }
        })
    }

    /// `K* y`
    pub fn adjoint_apply(&self, y: &[f64]) -> Result<Vec<f64>, LinOpError> {
        if y.len() != self.out_dim {
            return Err(LinOpError::Dimension { expected: self.out_dim, got: y.len() });
        }
        Ok(match &self.kind {
            Kind::Identity => y.to_vec(),
            Kind::ScaledIdentity(s) => y.iter().map(|v| s * v).collect(),
            Kind::Dense(m) => m.matvec_t(y),
            Kind::Grad2d { rows, cols } => grad2d_adjoint(*rows, *cols, y),
            Kind::DiagonalMask(bits) => y
                .iter()
                .zip(bits)
                .map(|(v, &b)| if b == 1 { *v } else { 0.0 })
                .collect(),
            Kind::Scaled { factor, inner } => {
                let mut out = inner.adjoint_apply(y)?;
                for v in &mut out {
                    *v *= factor;
                }
                out
            }
            Kind::Instrumented { inner, counters } => {
                counters.0 .1.fetch_add(1, Ordering::Relaxed);
                inner.adjoint_apply(y)?
            }
        })
    }

    /// A certified upper bound on the spectral norm (not necessarily tight).
    pub fn norm_upper_bound(&self) -> f64 {
        match &self.kind {
            Kind::Identity => 1.0,
            Kind::ScaledIdentity(s) => s.abs(),
            Kind::Dense(m) => {
                // sqrt(|K|_1 |K|_inf) >= |K|_2
                let mut col = vec![0.0_f64; m.cols];
                let mut row_max = 0.0_f64;
                for i in 0..m.rows {
                    let mut row_sum = 0.0;
                    for (j, c) in col.iter_mut().enumerate() {
                        let a = m.get(i, j).abs();
                        row_sum += a;
                        *c += a;
                    }
                    row_max = row_max.max(row_sum);
                }
                let col_max = col.iter().fold(0.0_f64, |a, &b| a.max(b));
                (row_max * col_max).sqrt()
            }
            Kind::Grad2d { .. } => 8.0_f64.sqrt(),
            Kind::DiagonalMask(bits) => {
                if bits.contains(&1) {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::Scaled { factor, inner } => factor.abs() * inner.norm_upper_bound(),
            Kind::Instrumented { inner, .. } => inner.norm_upper_bound(),
        }
    }

    /// Spectral-norm estimate via power iteration on `K*K` from a seeded
    /// random start. Stops when the relative change of the estimate drops
    /// below `tol`.
    pub fn estimate_norm(&self, tol: f64, max_iters: usize, seed: u64) -> NormEstimate {
        self.power_iteration(tol, max_iters, seed).0
    }

    /// Power iteration that also returns the Rayleigh-quotient history
    /// (eigenvalue estimates of `K*K`, one per iteration).
    pub fn power_iteration(
        &self,
        tol: f64,
        max_iters: usize,
        seed: u64,
    ) -> (NormEstimate, Vec<f64>) {
        assert!(tol > 0.0, "power iteration tolerance must be positive");
        let mut rng = SplitMix64::with_stream(seed, streams::POWER_ITERATION);
        let mut b = rng.unit_vector(self.in_dim);
        let mut history = Vec::new();
        let mut prev = f64::NAN;
        let mut restarts = 0;
        for it in 1..=max_iters {
            let kb = self.apply(&b).expect("power iteration dims");
            let c = self.adjoint_apply(&kb).expect("power iteration dims");
            let rayleigh = dot(&b, &c); // = |K b|^2 >= 0
            history.push(rayleigh);
            let l = rayleigh.max(0.0).sqrt();
            if prev.is_finite() && (l - prev).abs() <= tol * l.max(1e-300) {
                return (NormEstimate { value: l, converged: true, iterations: it }, history);
            }
            prev = l;
            let cn = norm2(&c);
            if cn < 1e-300 {
                // b is (numerically) in the kernel of K*K; retry from a fresh start
                restarts += 1;
                if restarts > 3 {
                    return (NormEstimate { value: 0.0, converged: true, iterations: it }, history);
                }
                b = rng.unit_vector(self.in_dim);
                prev = f64::NAN;
                continue;
            }
            for (bi, ci) in b.iter_mut().zip(&c) {
                *bi = ci / cn;
            }
        }
        (
            NormEstimate { value: if prev.is_finite() { prev } else { 0.0 }, converged: false, iterations: max_iters },
            history,
        )
    }

    /// Materialize as a dense matrix by applying to basis vectors (desk scale).
    pub fn to_dense(&self) -> DenseMat {
        let mut out = DenseMat::zeros(self.out_dim, self.in_dim);
        let mut e = vec![0.0; self.in_dim];
        for j in 0..self.in_dim {
            e[j] = 1.0;
            let col = self.apply(&e).expect("basis vector dims");
            for (i, v) in col.iter().enumerate() {
                out.set(i, j, *v);
            }
            e[j] = 0.0;
        }
        out
    }
}

fn grad2d_forward(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let rc = rows * cols;
    let mut out = vec![0.0; 2 * rc];
    for i in 0..rows {
        for j in 0..cols {
            let p = i * cols + j;
            if j + 1 < cols {
                out[p] = x[p + 1] - x[p];
            }
            if i + 1 < rows {
                out[rc + p] = x[p + cols] - x[p];
            }
        }
    }
    out
}

fn grad2d_adjoint(rows: usize, cols: usize, y: &[f64]) -> Vec<f64> {
    let rc = rows * cols;
    let (yh, yv) = y.split_at(rc);
    let mut out = vec![0.0; rc];
    for i in 0..rows {
        for j in 0..cols {
            let p = i * cols + j;
            let mut acc = 0.0;
            // entries in the structurally-zero last column/row of the range
            // never influence <Dx, y>, so the adjoint ignores them
            if j + 1 < cols {
                acc -= yh[p];
            }
            if j >= 1 {
                acc += yh[p - 1];
            }
            if i + 1 < rows {
                acc -= yv[p];
            }
            if i >= 1 {
                acc += yv[p - cols];
            }
            out[p] = acc;
        }
    }
    out
}
