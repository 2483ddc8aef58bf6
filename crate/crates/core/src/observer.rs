//! Luenberger observers and sampling-based contraction certificates.
//!
//! The observer `xhat' = f(t, xhat) + L (g(t, xhat) - g(t, x))` tracks the
//! system state exponentially fast in a norm `|.|` whenever
//! `mu(df/dx + L dg/dx) <= c < 0` over the domain: the error then obeys
//! `|x(t) - xhat(t)| <= exp(c t) |x(0) - xhat(0)|`.
//!
//! [`certify_contraction`] bounds the measure by evaluating it on a regular
//! grid plus Latin-hypercube points. This is a numerical certificate, not a
//! proof, and the report says so through `sampling_based`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::norms::{matrix_measure, Matrix, NormKind, Vector};
use crate::system::{BranchSelection, SystemModel};

/// Slack allowed when checking that a state lies in the domain.
pub const DOMAIN_TOL: f64 = 1e-9;

pub const MAX_GRID_POINTS: usize = 5_000_000;

/// Constant output-injection gain `L` (`n x m`).
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGain(Matrix);

impl ObserverGain {
    pub fn new(l: Matrix) -> Self {
        ObserverGain(l)
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        ObserverGain(Matrix::zeros(n, m))
    }

    /// `L = -I` restricted to the given output rows, zero elsewhere.
    pub fn negative_identity_on(n: usize, m: usize, rows: &[usize]) -> Result<Self> {
        let mut l = Matrix::zeros(n, m);
        for &j in rows {
            if j >= n || j >= m {
                return Err(invalid(format!(
                    "gain row {j} out of range for a {n}x{m} gain"
                )));
            }
            l[(j, j)] = -1.0;
        }
        Ok(ObserverGain(l))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    fn check<S: SystemModel + ?Sized>(&self, sys: &S) -> Result<()> {
        if self.0.rows() != sys.dim() || self.0.cols() != sys.output_dim() {
            return Err(invalid(format!(
                "gain is {}x{}, system needs {}x{}",
                self.0.rows(),
                self.0.cols(),
                sys.dim(),
                sys.output_dim()
            )));
        }
        Ok(())
    }
}

/// Right-hand side of the system-observer interconnection.
///
/// Returns `(f(t, x), f(t, xhat) + L (g(t, xhat) - g(t, x)))`.
pub fn interconnection_rhs<S: SystemModel + ?Sized>(
    sys: &S,
    gain: &ObserverGain,
    t: f64,
    x: &[f64],
    xhat: &[f64],
) -> Result<(Vector, Vector)> {
    gain.check(sys)?;
    sys.domain().require_contains(x, DOMAIN_TOL, "state")?;
    sys.domain()
        .require_contains(xhat, DOMAIN_TOL, "estimate")?;
    let fx = sys.rhs_value(t, x)?;
    let mut fxhat = sys.rhs_value(t, xhat)?;
    let innovation = sys.observe_value(t, xhat)?.sub(&sys.observe_value(t, x)?);
    let correction = gain.matrix().mul_vec(&innovation)?;
    for (v, c) in fxhat.iter_mut().zip(correction.iter()) {
        *v += c;
    }
    Ok((fx, fxhat))
}

/// `J_f + L J_g` for every active pair of field and observation pieces.
pub fn contraction_matrices<S: SystemModel + ?Sized>(
    sys: &S,
    gain: &ObserverGain,
    t: f64,
    x: &[f64],
) -> Result<Vec<Matrix>> {
    gain.check(sys)?;
    sys.domain().require_contains(x, DOMAIN_TOL, "state")?;
    let f = sys.rhs(t, x)?;
    let g = sys.observe(t, x)?;
    let mut out = Vec::with_capacity(f.branches.len() * g.branches.len());
    for gb in &g.branches {
        let injected = gain.matrix().mul(&gb.jacobian)?;
        for fb in &f.branches {
            out.push(fb.jacobian.add(&injected)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    pub grid_per_dim: usize,
    pub random_samples: usize,
    pub seed: u64,
    /// Times at which the Jacobians are sampled.
    pub times: Vec<f64>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            grid_per_dim: 9,
            random_samples: 1000,
            seed: 42,
            times: vec![0.0],
        }
    }
}

/// Outcome of [`certify_contraction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub certified_c: f64,
    pub worst_mu: f64,
    pub witness_point: Vector,
    /// Field-piece selection followed by the observation-piece selection.
    pub witness_branch: BranchSelection,
    pub norm: NormKind,
    pub samples: usize,
    pub seed: u64,
    pub strictly_contractive: bool,
    pub sampling_based: bool,
}

impl CertificateReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

/// Deterministic sample set: the full grid followed by Latin-hypercube points.
pub fn sample_points(
    lower: &[f64],
    upper: &[f64],
    grid_per_dim: usize,
    random_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let n = lower.len();
    if grid_per_dim < 2 {
        return Err(invalid(format!(
            "grid_per_dim must be at least 2, got {grid_per_dim}"
        )));
    }
    let grid_total = u32::try_from(n)
        .ok()
        .and_then(|e| grid_per_dim.checked_pow(e))
        .filter(|&g| g <= MAX_GRID_POINTS)
        .ok_or_else(|| {
            invalid(format!(
                "grid of {grid_per_dim}^{n} points exceeds the limit of {MAX_GRID_POINTS}"
            ))
        })?;

    let axis = |i: usize, k: usize| {
        lower[i] + (upper[i] - lower[i]) * k as f64 / (grid_per_dim - 1) as f64
    };
    let mut points = Vec::with_capacity(grid_total + random_samples);
    let mut idx = vec![0usize; n];
    for _ in 0..grid_total {
        points.push((0..n).map(|i| axis(i, idx[i])).collect());
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < grid_per_dim {
                break;
            }
            *slot = 0;
        }
    }

    if random_samples > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let strata: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let mut p: Vec<usize> = (0..random_samples).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        for k in 0..random_samples {
            points.push(
                (0..n)
                    .map(|i| {
                        let u = (strata[i][k] as f64 + rng.gen::<f64>()) / random_samples as f64;
                        lower[i] + (upper[i] - lower[i]) * u
                    })
                    .collect(),
            );
        }
    }
    Ok(points)
}

/// Largest sampled measure of `J_f + L J_g` over the domain.
///
/// At each sample point and time every piece returned by
/// [`SystemModel::certification_branches`] is paired with every observation
/// piece. The certified rate is the worst sampled measure, with no margin.
pub fn certify_contraction<S: SystemModel + ?Sized>(
    sys: &S,
    gain: &ObserverGain,
    norm: NormKind,
    opts: &CertifyOptions,
) -> Result<CertificateReport> {
    gain.check(sys)?;
    let domain = sys.domain();
    if !domain.is_bounded() {
        return Err(Error::UnsupportedDomain(
            "certification needs a bounded box domain".into(),
        ));
    }
    if opts.times.is_empty() {
        return Err(invalid("certification needs at least one sample time"));
    }
    let points = sample_points(
        domain.lower(),
        domain.upper(),
        opts.grid_per_dim,
        opts.random_samples,
        opts.seed,
    )?;

    let mut worst: Option<(f64, &[f64], BranchSelection)> = None;
    let mut samples = 0usize;
    for x in &points {
        for &t in &opts.times {
            samples += 1;
            let f_branches = sys.certification_branches(t, x)?;
            let g_branches = sys.certification_observation_branches(t, x)?;
            for gb in &g_branches {
                let injected = gain.matrix().mul(&gb.jacobian)?;
                for fb in &f_branches {
                    let mu = matrix_measure(&fb.jacobian.add(&injected)?, norm)?;
                    if worst.as_ref().map_or(true, |(w, _, _)| mu > *w) {
                        worst = Some((mu, x, fb.selection.joined(&gb.selection)));
                    }
                }
            }
        }
    }
    let (worst_mu, witness, branch) =
        worst.ok_or_else(|| invalid("system returned no branch Jacobians"))?;
    Ok(CertificateReport {
        certified_c: worst_mu,
        worst_mu,
        witness_point: Vector(witness.to_vec()),
        witness_branch: branch,
        norm,
        samples,
        seed: opts.seed,
        strictly_contractive: worst_mu < 0.0,
        sampling_based: true,
    })
}

/// `exp(c t) * e0`.
pub fn error_bound(c: f64, e0: f64, t: f64) -> f64 {
    (c * t).exp() * e0
}
