//! Compartmental model of a linear freeway.
//!
//! Link `i` holds density `x_i in [0, cap_i]`. Demand is `D_i(x) = d_i x`,
//! supply is `S_i(x) = w_i (cap_i - x)`. Flow between consecutive links is
//! `p_i = min{(1 - beta_i) D_i(x_i), S_{i+1}(x_{i+1})}`, inflow to the first
//! link is `p_0 = min{delta(t), S_1(x_1)}`, and a fraction `beta_i` of each
//! link's demand leaves through unmodeled exits. The last link discharges
//! all of its demand (`beta_n = 1`).
//!
//! Links are indexed from 0 in the API. Scenario files use 1-based link
//! numbers for the `visibility` keys.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::norms::{Matrix, Vector};
use crate::system::{
    active_branch_set, BranchJacobian, BranchSelection, FieldEvaluation, MinArg, StateBox,
    SystemModel, DEFAULT_TIE_TOL,
};

/// Exogenous inflow `delta(t)` offered to the first link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Inflow {
    Constant {
        value: f64,
    },
    /// Right-continuous piecewise-constant schedule of `[t, value]` breakpoints.
    /// Before the first breakpoint the first value applies.
    Schedule {
        points: Vec<(f64, f64)>,
    },
}

impl Inflow {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Inflow::Constant { value } => *value,
            Inflow::Schedule { points } => {
                let idx = points.partition_point(|&(tk, _)| tk <= t);
                points[idx.saturating_sub(1)].1
            }
        }
    }

    fn validate(&self, errors: &mut Vec<String>) {
        match self {
            Inflow::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    errors.push(format!("inflow.value must be finite and >= 0, got {value}"));
                }
            }
            Inflow::Schedule { points } => {
                if points.is_empty() {
                    errors.push("inflow.points must contain at least one breakpoint".into());
                }
                for (k, &(t, v)) in points.iter().enumerate() {
                    if !t.is_finite() {
                        errors.push(format!("inflow.points[{k}]: time {t} is not finite"));
                    }
                    if !(v.is_finite() && v >= 0.0) {
                        errors.push(format!(
                            "inflow.points[{k}]: value must be finite and >= 0, got {v}"
                        ));
                    }
                    if k > 0 && !(t > points[k - 1].0) {
                        errors.push(format!(
                            "inflow.points[{k}]: times must be strictly increasing"
                        ));
                    }
                }
            }
        }
    }
}

/// On-disk scenario layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n: usize,
    pub capacities: Vec<f64>,
    /// Exit ratios for links `1..n-1`; the last link is fixed to 1.
    pub beta: Vec<f64>,
    pub demand_slope: Vec<f64>,
    pub supply_slope: Vec<f64>,
    pub inflow: Inflow,
    /// 1-based link number -> visible fraction `p_j`.
    #[serde(default)]
    pub visibility: BTreeMap<String, f64>,
}

/// Links with zero exit ratio, which need a measurement to contract.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SensedSet {
    links: Vec<usize>,
}

impl SensedSet {
    pub fn links(&self) -> &[usize] {
        &self.links
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.links.iter().map(|j| j + 1).collect()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.links.binary_search(&j).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// Validated freeway scenario. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficScenario {
    capacities: Vec<f64>,
    /// Length `n`; the last entry is 1.
    beta: Vec<f64>,
    demand_slope: Vec<f64>,
    supply_slope: Vec<f64>,
    inflow: Inflow,
    visibility: Vec<Option<f64>>,
}

impl TryFrom<ScenarioFile> for TrafficScenario {
    type Error = Error;

    fn try_from(f: ScenarioFile) -> Result<Self> {
        let mut errors = Vec::new();
        let n = f.n;
        if n < 2 {
            errors.push(format!("n must be at least 2, got {n}"));
        }
        let mut check_len = |name: &str, len: usize, want: usize| {
            if len != want {
                errors.push(format!("{name} has {len} entries, expected {want}"));
            }
        };
        check_len("capacities", f.capacities.len(), n);
        check_len("demand_slope", f.demand_slope.len(), n);
        check_len("supply_slope", f.supply_slope.len(), n);
        if f.beta.len() == n && n > 0 {
            errors.push(format!(
                "beta has {n} entries; supply only links 1..{} (the last link's exit ratio is fixed to 1)",
                n - 1
            ));
        } else {
            check_len("beta", f.beta.len(), n.saturating_sub(1));
        }
        for (name, values) in [
            ("capacities", &f.capacities),
            ("demand_slope", &f.demand_slope),
            ("supply_slope", &f.supply_slope),
        ] {
            for (i, v) in values.iter().enumerate() {
                if !(v.is_finite() && *v > 0.0) {
                    errors.push(format!(
                        "{name}[{}] (link {}) must be finite and > 0, got {v}",
                        i,
                        i + 1
                    ));
                }
            }
        }
        for (i, b) in f.beta.iter().enumerate() {
            if !(b.is_finite() && (0.0..1.0).contains(b)) {
                errors.push(format!(
                    "beta[{i}] (link {}) must lie in [0, 1), got {b}",
                    i + 1
                ));
            }
        }
        f.inflow.validate(&mut errors);

        let mut visibility = vec![None; n];
        for (key, &p) in &f.visibility {
            let link: usize = match key.trim().parse() {
                Ok(l) if (1..=n).contains(&l) => l,
                _ => {
                    errors.push(format!(
                        "visibility key `{key}` is not a link number in 1..={n}"
                    ));
                    continue;
                }
            };
            let j = link - 1;
            if !(p.is_finite() && p > 0.0 && p <= 1.0) {
                errors.push(format!(
                    "visibility of link {link} must lie in (0, 1], got {p}"
                ));
            }
            let in_sensed_set = j + 1 < n && f.beta.get(j).is_some_and(|&b| b == 0.0);
            if !in_sensed_set {
                errors.push(format!(
                    "visibility given for link {link}, which has a positive exit ratio and is not sensed"
                ));
            }
            visibility[j] = Some(p);
        }

        if !errors.is_empty() {
            return Err(Error::InvalidScenario(errors));
        }
        let mut beta = f.beta;
        beta.push(1.0);
        Ok(TrafficScenario {
            capacities: f.capacities,
            beta,
            demand_slope: f.demand_slope,
            supply_slope: f.supply_slope,
            inflow: f.inflow,
            visibility,
        })
    }
}

impl TrafficScenario {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ScenarioFile =
            serde_json::from_str(s).map_err(|e| Error::InvalidScenario(vec![e.to_string()]))?;
        file.try_into()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_file(&self) -> ScenarioFile {
        let n = self.n();
        ScenarioFile {
            n,
            capacities: self.capacities.clone(),
            beta: self.beta[..n - 1].to_vec(),
            demand_slope: self.demand_slope.clone(),
            supply_slope: self.supply_slope.clone(),
            inflow: self.inflow.clone(),
            visibility: self
                .visibility
                .iter()
                .enumerate()
                .filter_map(|(j, p)| p.map(|p| ((j + 1).to_string(), p)))
                .collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes")
    }

    /// Two links, `beta_1 = 0.2`, unit slopes and capacities, inflow 0.3.
    pub fn two_link() -> Self {
        ScenarioFile {
            n: 2,
            capacities: vec![1.0; 2],
            beta: vec![0.2],
            demand_slope: vec![1.0; 2],
            supply_slope: vec![1.0; 2],
            inflow: Inflow::Constant { value: 0.3 },
            visibility: BTreeMap::new(),
        }
        .try_into()
        .expect("built-in scenario is valid")
    }

    /// Five links with exits after links 1 and 4 and no measurements.
    pub fn five_link_unsensed() -> Self {
        ScenarioFile {
            n: 5,
            capacities: vec![1.0; 5],
            beta: vec![0.2, 0.0, 0.0, 0.2],
            demand_slope: vec![1.0; 5],
            supply_slope: vec![1.0; 5],
            inflow: Inflow::Constant { value: 0.3 },
            visibility: BTreeMap::new(),
        }
        .try_into()
        .expect("built-in scenario is valid")
    }

    /// [`Self::five_link_unsensed`] with half of links 2 and 3 visible.
    pub fn five_link_sensed() -> Self {
        let mut f = Self::five_link_unsensed().to_file();
        f.visibility.insert("2".into(), 0.5);
        f.visibility.insert("3".into(), 0.5);
        f.try_into().expect("built-in scenario is valid")
    }

    pub fn n(&self) -> usize {
        self.capacities.len()
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    /// Exit ratio of link `i`; 1 for the last link.
    pub fn beta(&self, i: usize) -> f64 {
        self.beta[i]
    }

    pub fn demand_slope(&self, i: usize) -> f64 {
        self.demand_slope[i]
    }

    pub fn supply_slope(&self, i: usize) -> f64 {
        self.supply_slope[i]
    }

    pub fn inflow(&self) -> &Inflow {
        &self.inflow
    }

    pub fn visibility(&self, j: usize) -> Option<f64> {
        self.visibility[j]
    }

    /// Lower bound on demand slopes.
    pub fn nu(&self) -> f64 {
        self.demand_slope
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Lower bound on the magnitude of supply slopes.
    pub fn omega(&self) -> f64 {
        self.supply_slope
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn domain(&self) -> StateBox {
        StateBox::new(Vector::zeros(self.n()), Vector(self.capacities.clone()))
            .expect("capacities are positive")
    }

    pub fn demand(&self, i: usize, x: f64) -> f64 {
        self.demand_slope[i] * x
    }

    pub fn supply(&self, i: usize, x: f64) -> f64 {
        self.supply_slope[i] * (self.capacities[i] - x)
    }

    pub fn boundary_flow_p0(&self, t: f64, x1: f64) -> f64 {
        self.inflow.at(t).min(self.supply(0, x1))
    }

    /// Flow from link `i` to link `i + 1`.
    pub fn inter_link_flow(&self, i: usize, x_i: f64, x_next: f64) -> f64 {
        ((1.0 - self.beta[i]) * self.demand(i, x_i)).min(self.supply(i + 1, x_next))
    }

    /// Argument pairs of the `n` min terms: `p_0, p_1, ..., p_{n-1}`.
    pub fn min_terms(&self, t: f64, x: &[f64]) -> Vec<(f64, f64)> {
        let n = self.n();
        let mut terms = Vec::with_capacity(n);
        terms.push((self.inflow.at(t), self.supply(0, x[0])));
        for i in 0..n - 1 {
            terms.push((
                (1.0 - self.beta[i]) * self.demand(i, x[i]),
                self.supply(i + 1, x[i + 1]),
            ));
        }
        terms
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(invalid(format!(
                "state has dimension {}, scenario has {} links",
                x.len(),
                self.n()
            )));
        }
        Ok(())
    }

    fn assemble(&self, x: &[f64], flows: &[f64]) -> Vector {
        let n = self.n();
        let mut v = Vector::zeros(n);
        for i in 0..n {
            let outflow = if i + 1 < n { flows[i + 1] } else { 0.0 };
            v[i] = flows[i] - outflow - self.beta[i] * self.demand(i, x[i]);
        }
        v
    }

    /// Field value by direct evaluation of every `min`.
    pub fn rhs_value(&self, t: f64, x: &[f64]) -> Result<Vector> {
        self.check_dim(x)?;
        let n = self.n();
        let mut flows = Vec::with_capacity(n);
        flows.push(self.boundary_flow_p0(t, x[0]));
        for i in 0..n - 1 {
            flows.push(self.inter_link_flow(i, x[i], x[i + 1]));
        }
        Ok(self.assemble(x, &flows))
    }

    /// Field value of the smooth piece selected by `sel`.
    pub fn branch_value(&self, t: f64, x: &[f64], sel: &BranchSelection) -> Result<Vector> {
        self.check_dim(x)?;
        if sel.terms().len() != self.n() {
            return Err(invalid("branch selection must have one entry per min term"));
        }
        let flows: Vec<f64> = self
            .min_terms(t, x)
            .into_iter()
            .zip(sel.terms())
            .map(|((a, b), s)| match s {
                MinArg::First => a,
                MinArg::Second => b,
            })
            .collect();
        Ok(self.assemble(x, &flows))
    }

    /// Jacobian `J1 + J2` of the piece selected by `sel`. Constant per piece.
    pub fn branch_jacobian(&self, sel: &BranchSelection) -> Matrix {
        let n = self.n();
        assert_eq!(sel.terms().len(), n, "one selection per min term");
        let mut jac = Matrix::zeros(n, n);
        // p_0 feeds row 0
        if sel.terms()[0] == MinArg::Second {
            jac[(0, 0)] += -self.supply_slope[0];
        }
        for i in 0..n - 1 {
            // gradient of p_i with respect to (x_i, x_{i+1})
            let (d_up, d_down) = match sel.terms()[i + 1] {
                MinArg::First => ((1.0 - self.beta[i]) * self.demand_slope[i], 0.0),
                MinArg::Second => (0.0, -self.supply_slope[i + 1]),
            };
            jac[(i, i)] -= d_up;
            jac[(i, i + 1)] -= d_down;
            jac[(i + 1, i)] += d_up;
            jac[(i + 1, i + 1)] += d_down;
        }
        for i in 0..n {
            jac[(i, i)] -= self.beta[i] * self.demand_slope[i];
        }
        jac
    }

    /// Field value and the Jacobians of all pieces active within `tie_tol`.
    pub fn traffic_rhs_with_tol(&self, t: f64, x: &[f64], tie_tol: f64) -> Result<FieldEvaluation> {
        let value = self.rhs_value(t, x)?;
        let branches = active_branch_set(&self.min_terms(t, x), tie_tol)
            .into_iter()
            .map(|selection| BranchJacobian {
                jacobian: self.branch_jacobian(&selection),
                selection,
            })
            .collect();
        Ok(FieldEvaluation { value, branches })
    }

    pub fn traffic_rhs(&self, t: f64, x: &[f64]) -> Result<FieldEvaluation> {
        self.traffic_rhs_with_tol(t, x, DEFAULT_TIE_TOL)
    }

    /// `J = {j < n : beta_j = 0}`.
    pub fn sensed_links(&self) -> SensedSet {
        let n = self.n();
        SensedSet {
            links: (0..n - 1).filter(|&j| self.beta[j] == 0.0).collect(),
        }
    }

    /// Links in the sensed set that carry a visibility fraction.
    pub fn measured_links(&self) -> Vec<usize> {
        self.sensed_links()
            .links()
            .iter()
            .copied()
            .filter(|&j| self.visibility[j].is_some())
            .collect()
    }

    pub fn fully_sensed(&self) -> bool {
        self.sensed_links()
            .links()
            .iter()
            .all(|&j| self.visibility[j].is_some())
    }

    /// `g_j(x_j) = p_j x_j` on sensed links and 0 elsewhere.
    ///
    /// Fails when a sensed link has no visibility fraction; see
    /// [`Self::measured_observation`] for the partial map.
    pub fn observation(&self, x: &[f64]) -> Result<Vector> {
        self.check_dim(x)?;
        if let Some(j) = self
            .sensed_links()
            .links()
            .iter()
            .find(|&&j| self.visibility[j].is_none())
        {
            return Err(Error::Config(format!(
                "link {} has zero exit ratio but no visibility fraction",
                j + 1
            )));
        }
        Ok(self.measured_observation(x))
    }

    /// Observation restricted to the links that actually have a sensor.
    pub fn measured_observation(&self, x: &[f64]) -> Vector {
        Vector(
            x.iter()
                .zip(&self.visibility)
                .map(|(&xj, p)| p.map_or(0.0, |p| p * xj))
                .collect(),
        )
    }

    pub fn observation_jacobian(&self) -> Matrix {
        Matrix::from_diagonal(
            &self
                .visibility
                .iter()
                .map(|p| p.unwrap_or(0.0))
                .collect::<Vec<_>>(),
        )
    }

    /// Closed-form upper bound on the one-norm measure of `J + L dg/dx`
    /// with `L = -I` on the measured links.
    ///
    /// Every column of `J1` sums to at most 0. Column `j` of `J2` adds
    /// `-beta_j d_j <= -beta_j nu` and a measured column adds `-p_j`, so the
    /// largest column sum is at most
    /// `-min{nu min_{j not in J} beta_j, min_{j in J} p_j}`. Returns 0 when a
    /// link of `J` has no sensor.
    pub fn analytic_contraction_bound(&self) -> f64 {
        if !self.fully_sensed() {
            return 0.0;
        }
        let sensed = self.sensed_links();
        let n = self.n();
        let dissipative = (0..n)
            .filter(|&j| !sensed.contains(j))
            .map(|j| self.beta[j])
            .fold(f64::INFINITY, f64::min)
            * self.nu();
        let measured = sensed
            .links()
            .iter()
            .map(|&j| self.visibility[j].expect("fully sensed"))
            .fold(f64::INFINITY, f64::min);
        -dissipative.min(measured)
    }

    /// `sum_i xdot_i - (p_0 - sum_{i<n} beta_i D_i(x_i) - D_n(x_n))`.
    pub fn mass_balance_residual(&self, t: f64, x: &[f64], xdot: &[f64]) -> f64 {
        let n = self.n();
        let total: f64 = xdot.iter().sum();
        let exits: f64 = (0..n).map(|i| self.beta[i] * self.demand(i, x[i])).sum();
        total - (self.boundary_flow_p0(t, x[0]) - exits)
    }
}

/// [`SystemModel`] view of a scenario with the measured-link observation.
#[derive(Debug, Clone)]
pub struct TrafficSystem {
    scenario: TrafficScenario,
    domain: StateBox,
    all_branches: Vec<BranchJacobian>,
    observation_jacobian: Matrix,
}

impl TrafficSystem {
    pub fn new(scenario: TrafficScenario) -> Self {
        let all_branches = BranchSelection::enumerate_all(scenario.n())
            .into_iter()
            .map(|selection| BranchJacobian {
                jacobian: scenario.branch_jacobian(&selection),
                selection,
            })
            .collect();
        TrafficSystem {
            domain: scenario.domain(),
            observation_jacobian: scenario.observation_jacobian(),
            all_branches,
            scenario,
        }
    }

    pub fn scenario(&self) -> &TrafficScenario {
        &self.scenario
    }

    /// Every piece of the field, active or not.
    pub fn all_branches(&self) -> &[BranchJacobian] {
        &self.all_branches
    }
}

impl SystemModel for TrafficSystem {
    fn dim(&self) -> usize {
        self.scenario.n()
    }

    fn output_dim(&self) -> usize {
        self.scenario.n()
    }

    fn domain(&self) -> &StateBox {
        &self.domain
    }

    fn rhs(&self, t: f64, x: &[f64]) -> Result<FieldEvaluation> {
        self.scenario.traffic_rhs(t, x)
    }

    fn observe(&self, t: f64, x: &[f64]) -> Result<FieldEvaluation> {
        Ok(FieldEvaluation {
            value: self.observe_value(t, x)?,
            branches: vec![BranchJacobian {
                selection: BranchSelection::default(),
                jacobian: self.observation_jacobian.clone(),
            }],
        })
    }

    fn rhs_value(&self, t: f64, x: &[f64]) -> Result<Vector> {
        self.scenario.rhs_value(t, x)
    }

    fn observe_value(&self, _t: f64, x: &[f64]) -> Result<Vector> {
        self.scenario.check_dim(x)?;
        Ok(self.scenario.measured_observation(x))
    }

    /// Piece Jacobians are state-independent, so every piece is returned.
    fn certification_branches(&self, _t: f64, x: &[f64]) -> Result<Vec<BranchJacobian>> {
        self.scenario.check_dim(x)?;
        Ok(self.all_branches.clone())
    }
}
