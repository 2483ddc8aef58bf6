//! Fixed-step simulation and trajectory checks.

use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};
use crate::norms::{vector_norm, NormKind, Vector};
use crate::observer::{error_bound, ObserverGain, DOMAIN_TOL};
use crate::system::{StateBox, SystemModel};

pub const DEFAULT_DT: f64 = 1e-3;

/// States outside the box by at most this much are clipped back in.
pub const CLIP_TOL: f64 = 1e-9;

/// Slack on `err(t) / (exp(c t) err(0)) <= 1`.
pub const BOUND_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    /// Observer estimates, present for interconnection runs.
    pub estimates: Option<Vec<Vector>>,
    /// `|x_k - xhat_k|` in `norm`, present for interconnection runs.
    pub error_norms: Option<Vec<f64>>,
    pub norm: Option<NormKind>,
    /// Number of state components pulled back into the box.
    pub clip_events: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_error(&self) -> Option<f64> {
        self.error_norms.as_ref().and_then(|e| e.last().copied())
    }
}

/// Classical fourth-order Runge-Kutta with a fixed step.
///
/// The last step is shortened to land on `t1`. With `clip` set, states that
/// leave the box by at most [`CLIP_TOL`] are clipped and counted; larger
/// excursions are an error.
pub fn integrate_rk4<F>(
    mut rhs: F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
    clip: Option<&StateBox>,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64]) -> Result<Vector>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(invalid(format!("need t0 < t1, got [{t0}, {t1}]")));
    }
    if x0.is_empty() || x0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("initial state must be nonempty and finite"));
    }
    if let Some(b) = clip {
        b.require_contains(x0, 0.0, "initial state")?;
    }

    let ratio = (t1 - t0) / dt;
    let rounded = ratio.round();
    let (full_steps, partial) = if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
        (rounded as usize, false)
    } else {
        (ratio.floor() as usize, true)
    };
    let total = full_steps + usize::from(partial);

    let n = x0.len();
    let mut times = Vec::with_capacity(total + 1);
    let mut states = Vec::with_capacity(total + 1);
    times.push(t0);
    states.push(Vector::from(x0));
    let mut x = x0.to_vec();
    let mut stage = vec![0.0; n];
    let mut clip_events = 0;

    for k in 1..=total {
        let t = times[k - 1];
        let t_next = if k == total { t1 } else { t0 + k as f64 * dt };
        let h = t_next - t;

        let k1 = rhs(t, &x)?;
        for i in 0..n {
            stage[i] = x[i] + 0.5 * h * k1[i];
        }
        let k2 = rhs(t + 0.5 * h, &stage)?;
        for i in 0..n {
            stage[i] = x[i] + 0.5 * h * k2[i];
        }
        let k3 = rhs(t + 0.5 * h, &stage)?;
        for i in 0..n {
            stage[i] = x[i] + h * k3[i];
        }
        let k4 = rhs(t + h, &stage)?;
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }

        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                t: t_next,
                reason: format!("component {i} became non-finite"),
            });
        }
        if let Some(b) = clip {
            for i in 0..n {
                let (lo, hi) = (b.lower()[i], b.upper()[i]);
                let excess = (lo - x[i]).max(x[i] - hi);
                if excess > CLIP_TOL {
                    return Err(Error::DomainViolation(format!(
                        "component {i} left the box by {excess:e} at t = {t_next}"
                    )));
                }
                if excess > 0.0 {
                    x[i] = x[i].clamp(lo, hi);
                    clip_events += 1;
                }
            }
        }
        times.push(t_next);
        states.push(Vector(x.clone()));
    }

    Ok(Trajectory {
        times,
        states,
        estimates: None,
        error_norms: None,
        norm: None,
        clip_events,
    })
}

/// Integrates `xdot = f(t, x)` alone from `t = 0`.
pub fn simulate_system<S: SystemModel + ?Sized>(
    sys: &S,
    x0: &[f64],
    t1: f64,
    dt: f64,
) -> Result<Trajectory> {
    sys.domain()
        .require_contains(x0, DOMAIN_TOL, "initial state")?;
    integrate_rk4(
        |t, x| sys.rhs_value(t, x),
        x0,
        0.0,
        t1,
        dt,
        Some(sys.domain()),
    )
}

/// Integrates the coupled system and observer from `t = 0`.
pub fn simulate_interconnection<S: SystemModel + ?Sized>(
    sys: &S,
    gain: &ObserverGain,
    x0: &[f64],
    xhat0: &[f64],
    t1: f64,
    dt: f64,
    norm: NormKind,
) -> Result<Trajectory> {
    let n = sys.dim();
    if gain.matrix().rows() != n || gain.matrix().cols() != sys.output_dim() {
        return Err(invalid("gain dimensions do not match the system"));
    }
    sys.domain()
        .require_contains(x0, DOMAIN_TOL, "initial state")?;
    sys.domain()
        .require_contains(xhat0, DOMAIN_TOL, "initial estimate")?;
    let stacked_box = sys.domain().product(sys.domain());
    let mut z0 = x0.to_vec();
    z0.extend_from_slice(xhat0);

    // stages are not domain-checked; the step states are, through clipping
    let coupled = |t: f64, z: &[f64]| -> Result<Vector> {
        let (x, xhat) = z.split_at(n);
        let mut out = sys.rhs_value(t, x)?.into_inner();
        let mut fhat = sys.rhs_value(t, xhat)?;
        let innovation = sys.observe_value(t, xhat)?.sub(&sys.observe_value(t, x)?);
        let correction = gain.matrix().mul_vec(&innovation)?;
        for (v, c) in fhat.iter_mut().zip(correction.iter()) {
            *v += c;
        }
        out.extend_from_slice(&fhat);
        Ok(Vector(out))
    };
    let raw = integrate_rk4(coupled, &z0, 0.0, t1, dt, Some(&stacked_box))?;

    let mut states = Vec::with_capacity(raw.len());
    let mut estimates = Vec::with_capacity(raw.len());
    let mut errors = Vec::with_capacity(raw.len());
    for z in raw.states {
        let (x, xhat) = z.split_at(n);
        let e: Vec<f64> = x.iter().zip(xhat).map(|(a, b)| a - b).collect();
        errors.push(vector_norm(&e, norm)?);
        states.push(Vector::from(x));
        estimates.push(Vector::from(xhat));
    }
    Ok(Trajectory {
        times: raw.times,
        states,
        estimates: Some(estimates),
        error_norms: Some(errors),
        norm: Some(norm),
        clip_events: raw.clip_events,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub max_ratio: f64,
    pub holds: bool,
}

/// Compares `err(t_k)` with `exp(c (t_k - t_0)) err(t_0)` at every step.
pub fn verify_error_bound(traj: &Trajectory, c: f64) -> Result<BoundCheck> {
    let errs = traj
        .error_norms
        .as_ref()
        .ok_or_else(|| invalid("trajectory has no error norms"))?;
    let (&e0, &t0) = errs
        .first()
        .zip(traj.times.first())
        .ok_or_else(|| invalid("empty trajectory"))?;
    let mut max_ratio = f64::NEG_INFINITY;
    for (&e, &t) in errs.iter().zip(&traj.times) {
        let bound = error_bound(c, e0, t - t0);
        let ratio = if bound == 0.0 {
            if e == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            e / bound
        };
        max_ratio = max_ratio.max(ratio);
    }
    Ok(BoundCheck {
        max_ratio,
        holds: max_ratio <= 1.0 + BOUND_RTOL,
    })
}

/// True iff every state and estimate lies in the box inflated by `tol`.
pub fn verify_box_invariance(traj: &Trajectory, domain: &StateBox, tol: f64) -> bool {
    let states_ok = traj.states.iter().all(|x| domain.contains(x, tol));
    let estimates_ok = traj
        .estimates
        .as_ref()
        .map_or(true, |es| es.iter().all(|x| domain.contains(x, tol)));
    states_ok && estimates_ok
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayCheck {
    pub max_violation: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Checks `d/dt |e| <= c |e|` with central differences at interior steps.
///
/// The tolerance `|c| max|e| dt + 1e-6` absorbs central-difference
/// truncation and the kinks where the inequality holds only one-sidedly.
pub fn clarke_decay_check(traj: &Trajectory, c: f64) -> Result<DecayCheck> {
    let errs = traj
        .error_norms
        .as_ref()
        .ok_or_else(|| invalid("trajectory has no error norms"))?;
    if errs.len() < 3 {
        return Err(invalid("decay check needs at least three samples"));
    }
    let t = &traj.times;
    let mut max_violation = f64::NEG_INFINITY;
    for k in 1..errs.len() - 1 {
        let slope = (errs[k + 1] - errs[k - 1]) / (t[k + 1] - t[k - 1]);
        max_violation = max_violation.max(slope - c * errs[k]);
    }
    let max_err = errs.iter().copied().fold(0.0, f64::max);
    let dt = t[1] - t[0];
    let tolerance = c.abs() * max_err * dt + 1e-6;
    Ok(DecayCheck {
        max_violation,
        tolerance,
        holds: max_violation <= tolerance,
    })
}

/// Column names of the trajectory CSV for an `n`-state run.
pub fn csv_columns(n: usize, with_estimates: bool, with_bound: bool) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x_{i}")));
    if with_estimates {
        cols.extend((1..=n).map(|i| format!("xhat_{i}")));
        cols.push("err_norm".into());
    }
    if with_bound {
        cols.push("bound".into());
    }
    cols
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one row per `stride` steps (the final step is always written).
///
/// `comments` become leading `# ` lines. With `c`, a `bound` column holds
/// `exp(c t) err(0)`.
pub fn write_trajectory_csv<W: Write>(
    out: &mut W,
    traj: &Trajectory,
    stride: usize,
    c: Option<f64>,
    comments: &[String],
) -> Result<()> {
    if stride == 0 {
        return Err(invalid("stride must be positive"));
    }
    let io = |source| Error::Io {
        path: "<trajectory csv>".into(),
        source,
    };
    if c.is_some() && traj.error_norms.is_none() {
        return Err(invalid("bound column requires error norms"));
    }
    let n = traj.states.first().map_or(0, |x| x.dim());
    for line in comments {
        writeln!(out, "# {line}").map_err(io)?;
    }
    writeln!(
        out,
        "{}",
        csv_columns(n, traj.estimates.is_some(), c.is_some()).join(",")
    )
    .map_err(io)?;
    let last = traj.len().saturating_sub(1);
    let e0 = traj.error_norms.as_ref().and_then(|e| e.first().copied());
    let t0 = traj.times.first().copied().unwrap_or(0.0);
    for k in (0..traj.len()).filter(|&k| k % stride == 0 || k == last) {
        let mut row = vec![fmt_num(traj.times[k])];
        row.extend(traj.states[k].iter().map(|&v| fmt_num(v)));
        if let (Some(es), Some(errs)) = (&traj.estimates, &traj.error_norms) {
            row.extend(es[k].iter().map(|&v| fmt_num(v)));
            row.push(fmt_num(errs[k]));
        }
        if let (Some(c), Some(e0)) = (c, e0) {
            row.push(fmt_num(error_bound(c, e0, traj.times[k] - t0)));
        }
        writeln!(out, "{}", row.join(",")).map_err(io)?;
    }
    Ok(())
}

/// Parsed trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn read_trajectory_csv<R: BufRead>(input: R) -> Result<TrajectoryTable> {
    let mut comments = Vec::new();
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: "<trajectory csv>".into(),
            source,
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim_start().to_string());
            continue;
        }
        match &columns {
            None => columns = Some(line.split(',').map(|s| s.trim().to_string()).collect()),
            Some(cols) => {
                let row = line
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                if row.len() != cols.len() {
                    return Err(Error::Parse(format!(
                        "line {}: {} fields, header has {}",
                        lineno + 1,
                        row.len(),
                        cols.len()
                    )));
                }
                rows.push(row);
            }
        }
    }
    Ok(TrajectoryTable {
        comments,
        columns: columns.ok_or_else(|| Error::Parse("missing header".into()))?,
        rows,
    })
}
