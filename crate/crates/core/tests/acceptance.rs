//! End-to-end acceptance suite.
//!
//! Runs each criterion in sequence, prints one `[PASS]` / `[FAIL]` line per
//! criterion, and exits non-zero if any criterion fails. Tolerances are the
//! stated ones; nothing is relaxed to make a criterion pass.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use contraction_observer::cli::resolve_gain;
use contraction_observer::norms::{
    induced_matrix_norm, is_metzler, matrix_measure, matrix_measure_limit_estimate, max_column_sum,
    Matrix, NormKind,
};
use contraction_observer::observer::{
    certify_contraction, CertificateReport, CertifyOptions, ObserverGain,
};
use contraction_observer::sim::{
    clarke_decay_check, integrate_rk4, simulate_interconnection, simulate_system,
    verify_box_invariance, verify_error_bound, Trajectory,
};
use contraction_observer::system::{finite_difference_jacobian, SystemModel, DEFAULT_FD_STEP};
use contraction_observer::traffic::{TrafficScenario, TrafficSystem};
use contraction_observer::Vector;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

struct Report {
    failures: usize,
}

impl Report {
    fn record(
        &mut self,
        id: &str,
        title: &str,
        elapsed: Duration,
        limit: Option<Duration>,
        mut outcome: Outcome,
    ) {
        let mut timing = format!("{:.2}s", elapsed.as_secs_f64());
        if let Some(limit) = limit {
            let within = elapsed < limit;
            timing.push_str(&format!(" (limit {:.0}s)", limit.as_secs_f64()));
            if !within {
                outcome.pass = false;
                outcome.detail.push_str("; runtime limit exceeded");
            }
        }
        if !outcome.pass {
            self.failures += 1;
        }
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] criterion {id}: {title} -- {} [{timing}]",
            outcome.detail
        );
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let data = (0..n * n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Matrix::from_row_major(n, n, data).unwrap()
}

fn random_in_box(rng: &mut ChaCha8Rng, upper: &[f64]) -> Vec<f64> {
    upper.iter().map(|&u| u * rng.gen::<f64>()).collect()
}

fn scenarios() -> [(&'static str, TrafficScenario); 3] {
    [
        ("two_link", TrafficScenario::two_link()),
        ("five_link_sensed", TrafficScenario::five_link_sensed()),
        ("five_link_unsensed", TrafficScenario::five_link_unsensed()),
    ]
}

fn default_gain(sys: &TrafficSystem) -> ObserverGain {
    resolve_gain("identity_negative", sys).unwrap()
}

fn matrix_measure_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_gap: f64 = 0.0;
    let mut violations = 0usize;
    for _ in 0..200 {
        let n = rng.gen_range(2..=8);
        let a = random_matrix(&mut rng, n);
        let b = random_matrix(&mut rng, n);
        let sum = a.add(&b).unwrap();
        for k in NormKind::ALL {
            let mu = matrix_measure(&a, k).unwrap();
            let q = matrix_measure_limit_estimate(&a, k, 1e-8).unwrap();
            worst_gap = worst_gap.max((mu - q).abs());
            let norm = induced_matrix_norm(&a, k).unwrap();
            let sub =
                matrix_measure(&sum, k).unwrap() <= mu + matrix_measure(&b, k).unwrap() + 1e-12;
            let bracket = -norm - 1e-12 <= mu && mu <= norm + 1e-12;
            violations += usize::from(!sub) + usize::from(!bracket);
        }
    }
    Outcome::new(
        worst_gap <= 1e-4 && violations == 0,
        format!("max |mu - quotient| = {worst_gap:.3e} (tol 1e-4), subadditivity/bracket violations = {violations}"),
    )
}

fn metzler_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0usize;
    for _ in 0..200 {
        let n = rng.gen_range(2..=8);
        let mut a = random_matrix(&mut rng, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    a[(i, j)] = a[(i, j)].abs();
                }
            }
        }
        assert!(is_metzler(&a, 0.0).unwrap());
        if matrix_measure(&a, NormKind::One).unwrap() != max_column_sum(&a) {
            mismatches += 1;
        }
    }
    Outcome::new(
        mismatches == 0,
        format!("{mismatches} of 200 differ from the max column sum"),
    )
}

fn traffic_jacobian_oracle() -> Outcome {
    let s = TrafficScenario::five_link_sensed();
    let n = s.n();
    let domain = s.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_fd, mut structure, mut metzler, mut columns, mut points) = (0.0f64, 0, 0, 0, 0);
    while points < 1000 {
        let x = random_in_box(&mut rng, s.capacities());
        if s.min_terms(0.0, &x)
            .iter()
            .any(|(a, b)| (a - b).abs() <= 1e-6)
        {
            continue;
        }
        points += 1;
        let ev = s.traffic_rhs(0.0, &x).unwrap();
        let fd = finite_difference_jacobian(
            |t, y| s.rhs_value(t, y),
            0.0,
            &x,
            DEFAULT_FD_STEP,
            Some(&domain),
        )
        .unwrap();
        for b in &ev.branches {
            let j = &b.jacobian;
            for (a, f) in j.as_slice().iter().zip(fd.as_slice()) {
                worst_fd = worst_fd.max((a - f).abs());
            }
            if !is_metzler(j, 1e-9).unwrap() {
                metzler += 1;
            }
            for r in 0..n {
                for c in 0..n {
                    let v = j[(r, c)];
                    let ok = match r as isize - c as isize {
                        0 => v <= 0.0,
                        1 | -1 => v >= 0.0,
                        _ => v == 0.0,
                    };
                    structure += usize::from(!ok);
                }
            }
            for c in 0..n {
                let exit = s.beta(c) * s.demand_slope(c);
                if j.column_sum(c) > -exit + 1e-12 || j.column_sum(c) > 1e-12 {
                    columns += 1;
                }
            }
        }
    }
    Outcome::new(
        worst_fd <= 1e-5 && structure == 0 && metzler == 0 && columns == 0,
        format!(
            "max |J - FD| = {worst_fd:.3e} (tol 1e-5), sign-structure violations = {structure}, non-Metzler = {metzler}, column-sum violations = {columns}"
        ),
    )
}

struct Certified {
    scenario: TrafficScenario,
    report: CertificateReport,
}

fn certification(out: &mut Vec<Certified>) -> Outcome {
    let opts = CertifyOptions::default();

    let two = TrafficSystem::new(TrafficScenario::two_link());
    let r2 = certify_contraction(&two, &ObserverGain::zeros(2, 2), NormKind::One, &opts).unwrap();
    let ok2 = (r2.certified_c + 0.2).abs() <= 1e-9;

    let sensed = TrafficSystem::new(TrafficScenario::five_link_sensed());
    let rs = certify_contraction(&sensed, &default_gain(&sensed), NormKind::One, &opts).unwrap();
    let oks = rs.certified_c <= -0.5 + 1e-9;

    let unsensed = TrafficSystem::new(TrafficScenario::five_link_unsensed());
    let ru =
        certify_contraction(&unsensed, &default_gain(&unsensed), NormKind::One, &opts).unwrap();
    let oku = !ru.strictly_contractive;

    let detail = format!(
        "two_link c = {:.12} (want -0.2 +/- 1e-9) {}; five_link_sensed c = {:.12} (want <= -0.5 + 1e-9, witness {:?} branch {}) {}; five_link_unsensed strictly_contractive = {} {}",
        r2.certified_c,
        verdict(ok2),
        rs.certified_c,
        rs.witness_point.0,
        rs.witness_branch,
        verdict(oks),
        ru.strictly_contractive,
        verdict(oku),
    );
    if r2.strictly_contractive {
        out.push(Certified {
            scenario: two.scenario().clone(),
            report: r2,
        });
    }
    if rs.strictly_contractive {
        out.push(Certified {
            scenario: sensed.scenario().clone(),
            report: rs,
        });
    }
    Outcome::new(ok2 && oks && oku, detail)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn certified_runs(certified: &[Certified]) -> Vec<(String, f64, Trajectory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut runs = Vec::new();
    for cert in certified {
        let sys = TrafficSystem::new(cert.scenario.clone());
        let gain = default_gain(&sys);
        for _ in 0..20 {
            let x0 = random_in_box(&mut rng, cert.scenario.capacities());
            let xhat0 = random_in_box(&mut rng, cert.scenario.capacities());
            let traj =
                simulate_interconnection(&sys, &gain, &x0, &xhat0, 25.0, 1e-3, NormKind::One)
                    .unwrap();
            runs.push((
                format!("n={}", cert.scenario.n()),
                cert.report.certified_c,
                traj,
            ));
        }
    }
    runs
}

fn error_bound_criterion(runs: &[(String, f64, Trajectory)]) -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    let mut failed = 0usize;
    for (_, c, traj) in runs {
        let check = verify_error_bound(traj, *c).unwrap();
        worst_ratio = worst_ratio.max(check.max_ratio);
        failed += usize::from(!check.holds);
    }

    // ten time units at the stated rate of -0.5 on the sensed chain
    let limit = (-5.0f64).exp() * (1.0 + 1e-6);
    let mut worst_decay: f64 = 0.0;
    for (_, _, traj) in runs.iter().filter(|(label, _, _)| label == "n=5") {
        let errs = traj.error_norms.as_ref().unwrap();
        let k = traj
            .times
            .iter()
            .position(|&t| (t - 10.0).abs() < 1e-9)
            .unwrap();
        let ratio = if errs[0] == 0.0 {
            1.0
        } else {
            errs[k] / errs[0]
        };
        worst_decay = worst_decay.max(ratio);
    }
    let decay_ok = worst_decay <= limit;
    Outcome::new(
        failed == 0 && decay_ok && !runs.is_empty(),
        format!(
            "{} runs at the certified rate, {failed} violate err(t) <= e^(ct) err(0) (1 + 1e-6), worst ratio err/bound = {worst_ratio:.9}; five_link_sensed worst err(10)/err(0) = {worst_decay:.4e} vs e^-5 (1 + 1e-6) = {limit:.4e} {}",
            runs.len(),
            verdict(decay_ok)
        ),
    )
}

fn clarke_decay_criterion(runs: &[(String, f64, Trajectory)]) -> Outcome {
    let mut failed = 0usize;
    let mut worst_excess = f64::NEG_INFINITY;
    for (_, c, traj) in runs {
        let check = clarke_decay_check(traj, *c).unwrap();
        failed += usize::from(!check.holds);
        worst_excess = worst_excess.max(check.max_violation - check.tolerance);
    }
    Outcome::new(
        failed == 0 && !runs.is_empty(),
        format!(
            "{} runs, {failed} with slope > c err + tol at an interior step, worst (violation - tol) = {worst_excess:.3e}",
            runs.len()
        ),
    )
}

fn positive_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut escapes = 0usize;
    let mut clips = 0usize;
    let mut runs = 0usize;
    for (_, s) in scenarios() {
        let sys = TrafficSystem::new(s.clone());
        let gain = default_gain(&sys);
        let stacked = sys.domain().product(sys.domain());
        for _ in 0..100 {
            let x0 = random_in_box(&mut rng, s.capacities());
            let xhat0 = random_in_box(&mut rng, s.capacities());
            let plant = simulate_system(&sys, &x0, 100.0, 1e-3).unwrap();
            escapes += usize::from(!verify_box_invariance(&plant, sys.domain(), 1e-9));
            clips += plant.clip_events;
            let coupled =
                simulate_interconnection(&sys, &gain, &x0, &xhat0, 100.0, 1e-3, NormKind::One)
                    .unwrap();
            let joint = Trajectory {
                times: coupled.times.clone(),
                states: coupled
                    .states
                    .iter()
                    .zip(coupled.estimates.as_ref().unwrap())
                    .map(|(x, xh)| Vector([x.0.as_slice(), xh.0.as_slice()].concat()))
                    .collect(),
                estimates: None,
                error_norms: None,
                norm: None,
                clip_events: coupled.clip_events,
            };
            escapes += usize::from(!verify_box_invariance(&joint, &stacked, 1e-9));
            clips += coupled.clip_events;
            runs += 2;
        }
    }
    Outcome::new(
        escapes == 0 && clips == 0,
        format!("{runs} runs over t1 = 100, {escapes} leave the box, {clips} clip events"),
    )
}

fn mass_balance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rush = TrafficScenario::from_path(scenario_dir().join("rush_hour.json")).unwrap();
    let pool: Vec<TrafficScenario> = scenarios()
        .into_iter()
        .map(|(_, s)| s)
        .chain([rush])
        .collect();
    let mut worst: f64 = 0.0;
    for k in 0..10_000 {
        let s = &pool[k % pool.len()];
        let t = rng.gen_range(0.0..100.0);
        let x = random_in_box(&mut rng, s.capacities());
        let v = s.rhs_value(t, &x).unwrap();
        worst = worst.max(s.mass_balance_residual(t, &x, &v).abs());
    }
    Outcome::new(
        worst <= 1e-12,
        format!("max residual = {worst:.3e} over 10^4 samples (tol 1e-12)"),
    )
}

fn rk4_order() -> Outcome {
    let final_error = |dt: f64| {
        let tr = integrate_rk4(|_, x| Ok(Vector(vec![-x[0]])), &[1.0], 0.0, 1.0, dt, None).unwrap();
        (tr.states.last().unwrap()[0] - (-1.0f64).exp()).abs()
    };
    let mut orders = Vec::new();
    for dt in [0.2, 0.1, 0.05] {
        orders.push((final_error(dt) / final_error(dt / 2.0)).log2());
    }
    let ok = orders.iter().all(|p| (3.8..=4.2).contains(p));
    Outcome::new(
        ok,
        format!("observed orders at dt = 0.2, 0.1, 0.05: {orders:.4?}"),
    )
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("a.csv");
    std::fs::write(&matrix, "-2,1,0.5\n1,-3,0\n0.25,0.5,-1\n").unwrap();
    let sc = |name: &str| scenario_dir().join(name).to_string_lossy().into_owned();
    let runs: Vec<Vec<String>> = vec![
        vec![
            "certify".into(),
            "--scenario".into(),
            sc("five_link_sensed.json"),
        ],
        vec![
            "certify".into(),
            "--scenario".into(),
            sc("rush_hour.json"),
            "--seed".into(),
            "11".into(),
            "--norm".into(),
            "two".into(),
        ],
        vec![
            "simulate".into(),
            "--scenario".into(),
            sc("five_link_sensed.json"),
            "--t1".into(),
            "5".into(),
            "--c".into(),
            "-0.2".into(),
        ],
        vec![
            "simulate".into(),
            "--scenario".into(),
            sc("rush_hour.json"),
            "--seed".into(),
            "3".into(),
            "--stride".into(),
            "7".into(),
        ],
        vec![
            "measure".into(),
            matrix.to_string_lossy().into_owned(),
            "--norm".into(),
            "inf".into(),
        ],
    ];
    let mut differing = Vec::new();
    for (k, args) in runs.iter().enumerate() {
        let once = |tag: &str| {
            let out = dir.path().join(format!("run{k}_{tag}.out"));
            let mut full = args.clone();
            if args[0] != "measure" {
                full.extend(["--out".into(), out.to_string_lossy().into_owned()]);
            }
            let o = Command::new(env!("CARGO_BIN_EXE_contraction-observer"))
                .args(&full)
                .output()
                .unwrap();
            let file = std::fs::read(&out).unwrap_or_default();
            (o.status.code(), o.stdout, o.stderr, file)
        };
        let (a, b) = (once("a"), once("b"));
        if a != b {
            differing.push(args.join(" "));
        }
        // the piped variant writes its data product to stdout instead
        let piped = || {
            Command::new(env!("CARGO_BIN_EXE_contraction-observer"))
                .args(args)
                .output()
                .unwrap()
        };
        let (p, q) = (piped(), piped());
        if (p.status.code(), &p.stdout, &p.stderr) != (q.status.code(), &q.stdout, &q.stderr) {
            differing.push(format!("{} (stdout)", args.join(" ")));
        }
    }
    Outcome::new(
        differing.is_empty(),
        format!(
            "{} invocations repeated twice each; differing: {differing:?}",
            runs.len() * 2
        ),
    )
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    let timed = |f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        (start.elapsed(), o)
    };

    let (t, o) = timed(&mut matrix_measure_correctness);
    report.record(
        "1",
        "matrix-measure correctness",
        t,
        Some(Duration::from_secs(5)),
        o,
    );

    let (t, o) = timed(&mut metzler_reduction);
    report.record("2", "Metzler reduction to max column sum", t, None, o);

    let (t, o) = timed(&mut traffic_jacobian_oracle);
    report.record("3", "traffic Jacobian oracle", t, None, o);

    let mut certified = Vec::new();
    let (t, o) = timed(&mut || certification(&mut certified));
    report.record(
        "4",
        "certification against the analytic bound",
        t,
        Some(Duration::from_secs(30)),
        o,
    );

    let start = Instant::now();
    let runs = certified_runs(&certified);
    let o = error_bound_criterion(&runs);
    report.record(
        "5",
        "exponential error bound",
        start.elapsed(),
        Some(Duration::from_secs(60)),
        o,
    );

    let (t, o) = timed(&mut || clarke_decay_criterion(&runs));
    report.record("6", "Clarke decay of the error norm", t, None, o);

    let (t, o) = timed(&mut positive_invariance);
    report.record("7", "positive invariance of the box", t, None, o);

    let (t, o) = timed(&mut mass_balance);
    report.record("8", "mass balance", t, None, o);

    let (t, o) = timed(&mut rk4_order);
    report.record("9", "RK4 convergence order", t, None, o);

    let (t, o) = timed(&mut determinism);
    report.record("10", "CLI determinism", t, None, o);

    println!("acceptance: {} of 10 criteria passed", 10 - report.failures);
    if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
