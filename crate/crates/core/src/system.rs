//! Piecewise-differentiable vector fields on box domains.
//!
//! A field built from `min{a, b}` terms is continuous but only piecewise
//! smooth. At each state it selects among finitely many smooth pieces, one
//! per choice of minimizer in every `min` term. [`FieldEvaluation`] carries
//! the Jacobian of every piece that is active at the evaluation point.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::norms::{Matrix, Vector};

/// Absolute gap below which both arguments of a `min` count as active.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

/// Base step for finite-difference Jacobians, scaled by `max(1, |x_i|)`.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Axis-aligned box `prod_i [lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    lower: Vector,
    upper: Vector,
}

impl StateBox {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.dim() != upper.dim() {
            return Err(invalid(format!(
                "box bounds have different dimensions ({} vs {})",
                lower.dim(),
                upper.dim()
            )));
        }
        if lower.dim() == 0 {
            return Err(invalid("box must have positive dimension"));
        }
        for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(invalid(format!("box bound {i}: lower {lo} > upper {hi}")));
            }
        }
        Ok(StateBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.dim()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
    }

    /// Cartesian product `self x other`.
    pub fn product(&self, other: &StateBox) -> StateBox {
        let mut lower = self.lower.0.clone();
        lower.extend_from_slice(&other.lower);
        let mut upper = self.upper.0.clone();
        upper.extend_from_slice(&other.upper);
        StateBox {
            lower: Vector(lower),
            upper: Vector(upper),
        }
    }

    pub(crate) fn require_contains(&self, x: &[f64], tol: f64, what: &str) -> Result<()> {
        if x.len() != self.dim() {
            return Err(invalid(format!(
                "{what} has dimension {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        if !self.contains(x, tol) {
            return Err(Error::DomainViolation(format!(
                "{what} {x:?} lies outside the domain"
            )));
        }
        Ok(())
    }
}

/// Which argument of a `min{a, b}` term is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinArg {
    First,
    Second,
}

/// One choice of minimizer per `min` term, in term order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BranchSelection(pub Vec<MinArg>);

impl BranchSelection {
    pub fn terms(&self) -> &[MinArg] {
        &self.0
    }

    /// Concatenation of two selections, used to tag `(f-branch, g-branch)` pairs.
    pub fn joined(&self, other: &BranchSelection) -> BranchSelection {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        BranchSelection(v)
    }

    /// All `2^terms` selections in lexicographic order.
    pub fn enumerate_all(terms: usize) -> Vec<BranchSelection> {
        let per_term = vec![vec![MinArg::First, MinArg::Second]; terms];
        cartesian(&per_term)
    }
}

impl fmt::Display for BranchSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("smooth");
        }
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(match a {
                MinArg::First => "1",
                MinArg::Second => "2",
            })?;
        }
        Ok(())
    }
}

/// Jacobian of one smooth piece of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchJacobian {
    pub selection: BranchSelection,
    pub jacobian: Matrix,
}

/// Field value together with the Jacobians of all active pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEvaluation {
    pub value: Vector,
    pub branches: Vec<BranchJacobian>,
}

impl FieldEvaluation {
    pub fn active_branch_jacobians(&self) -> impl Iterator<Item = &Matrix> {
        self.branches.iter().map(|b| &b.jacobian)
    }
}

/// A time-varying system `xdot = f(t, x)`, `y = g(t, x)` on a box.
///
/// Implementations are immutable after construction; evaluations at
/// distinct points are independent.
pub trait SystemModel {
    fn dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn domain(&self) -> &StateBox;

    /// Field value and active branch Jacobians (`n x n`).
    fn rhs(&self, t: f64, x: &[f64]) -> Result<FieldEvaluation>;

    /// Observation value and active branch Jacobians (`m x n`).
    fn observe(&self, t: f64, x: &[f64]) -> Result<FieldEvaluation>;

    fn rhs_value(&self, t: f64, x: &[f64]) -> Result<Vector> {
        Ok(self.rhs(t, x)?.value)
    }

    fn observe_value(&self, t: f64, x: &[f64]) -> Result<Vector> {
        Ok(self.observe(t, x)?.value)
    }

    /// Field Jacobians the contraction certifier must bound at `(t, x)`.
    ///
    /// Defaults to the active branches. Models whose branch Jacobians do not
    /// depend on the state may return every branch, which makes the
    /// certificate independent of `t`.
    fn certification_branches(&self, t: f64, x: &[f64]) -> Result<Vec<BranchJacobian>> {
        Ok(self.rhs(t, x)?.branches)
    }

    fn certification_observation_branches(&self, t: f64, x: &[f64]) -> Result<Vec<BranchJacobian>> {
        Ok(self.observe(t, x)?.branches)
    }
}

/// Linear time-invariant system `xdot = A x`, `y = C x` on a box.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    a: Matrix,
    c: Matrix,
    domain: StateBox,
}

impl LinearSystem {
    pub fn new(a: Matrix, c: Matrix, domain: StateBox) -> Result<Self> {
        if !a.is_square() || a.rows() != domain.dim() {
            return Err(invalid(
                "state matrix must be n x n with n the domain dimension",
            ));
        }
        if c.cols() != a.rows() {
            return Err(invalid("output matrix must have n columns"));
        }
        Ok(LinearSystem { a, c, domain })
    }
}

impl SystemModel for LinearSystem {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn output_dim(&self) -> usize {
        self.c.rows()
    }

    fn domain(&self) -> &StateBox {
        &self.domain
    }

    fn rhs(&self, _t: f64, x: &[f64]) -> Result<FieldEvaluation> {
        Ok(FieldEvaluation {
            value: self.a.mul_vec(x)?,
            branches: vec![BranchJacobian {
                selection: BranchSelection::default(),
                jacobian: self.a.clone(),
            }],
        })
    }

    fn observe(&self, _t: f64, x: &[f64]) -> Result<FieldEvaluation> {
        Ok(FieldEvaluation {
            value: self.c.mul_vec(x)?,
            branches: vec![BranchJacobian {
                selection: BranchSelection::default(),
                jacobian: self.c.clone(),
            }],
        })
    }
}

fn cartesian(per_term: &[Vec<MinArg>]) -> Vec<BranchSelection> {
    let mut out = vec![BranchSelection::default()];
    for choices in per_term {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |&c| {
                    let mut v = prefix.0.clone();
                    v.push(c);
                    BranchSelection(v)
                })
            })
            .collect();
    }
    out
}

/// Active minimizers of each `min{a, b}` term, as a Cartesian product.
///
/// A term contributes both arguments when `|a - b| <= tie_tol`, otherwise
/// only the strictly smaller one.
pub fn active_branch_set(min_args: &[(f64, f64)], tie_tol: f64) -> Vec<BranchSelection> {
    let per_term: Vec<Vec<MinArg>> = min_args
        .iter()
        .map(|&(a, b)| {
            if (a - b).abs() <= tie_tol {
                vec![MinArg::First, MinArg::Second]
            } else if a < b {
                vec![MinArg::First]
            } else {
                vec![MinArg::Second]
            }
        })
        .collect();
    cartesian(&per_term)
}

/// Finite-difference Jacobian of `field` at `(t, x)`.
///
/// Column `j` uses the step `h * max(1, |x_j|)`. Central differences are
/// used when both probes stay inside `domain`; otherwise the one-sided
/// difference that stays inside. Without a domain, central differences are
/// always used.
pub fn finite_difference_jacobian<F>(
    field: F,
    t: f64,
    x: &[f64],
    h: f64,
    domain: Option<&StateBox>,
) -> Result<Matrix>
where
    F: Fn(f64, &[f64]) -> Result<Vector>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    if let Some(b) = domain {
        b.require_contains(x, 0.0, "finite-difference base point")?;
    }
    let n = x.len();
    let f0 = field(t, x)?;
    let m = f0.dim();
    let mut jac = Matrix::zeros(m, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        let hj = h * x[j].abs().max(1.0);
        let (fits_up, fits_down) = match domain {
            Some(b) => (x[j] + hj <= b.upper()[j], x[j] - hj >= b.lower()[j]),
            None => (true, true),
        };
        let column: Vec<f64> = match (fits_up, fits_down) {
            (true, true) => {
                probe[j] = x[j] + hj;
                let fp = field(t, &probe)?;
                probe[j] = x[j] - hj;
                let fm = field(t, &probe)?;
                fp.iter()
                    .zip(fm.iter())
                    .map(|(a, b)| (a - b) / (2.0 * hj))
                    .collect()
            }
            (true, false) => {
                probe[j] = x[j] + hj;
                let fp = field(t, &probe)?;
                fp.iter()
                    .zip(f0.iter())
                    .map(|(a, b)| (a - b) / hj)
                    .collect()
            }
            (false, true) => {
                probe[j] = x[j] - hj;
                let fm = field(t, &probe)?;
                f0.iter()
                    .zip(fm.iter())
                    .map(|(a, b)| (a - b) / hj)
                    .collect()
            }
            (false, false) => {
                return Err(Error::DomainViolation(format!(
                    "coordinate {j}: box is narrower than the step {hj}"
                )))
            }
        };
        probe[j] = x[j];
        if column.len() != m {
            return Err(invalid("field changed output dimension between probes"));
        }
        for (i, v) in column.into_iter().enumerate() {
            jac[(i, j)] = v;
        }
    }
    Ok(jac)
}
