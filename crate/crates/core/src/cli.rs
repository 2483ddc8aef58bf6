//! Command-line front end.
//!
//! Exit codes: 0 ok, 1 usage or parse error, 2 not certified, 3 a
//! requested trajectory check failed.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::norms::{
    induced_matrix_norm, is_metzler, matrix_measure, matrix_measure_limit_estimate, Matrix,
    NormKind, DEFAULT_LIMIT_STEP, DEFAULT_METZLER_TOL,
};
use crate::observer::{certify_contraction, CertificateReport, CertifyOptions, ObserverGain};
use crate::sim::{
    clarke_decay_check, simulate_interconnection, verify_box_invariance, verify_error_bound,
    write_trajectory_csv, DEFAULT_DT,
};
use crate::system::{StateBox, SystemModel};
use crate::traffic::{TrafficScenario, TrafficSystem};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CERTIFIED: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Box-invariance tolerance applied to simulated trajectories.
const INVARIANCE_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(
    name = "contraction-observer",
    version,
    about = "Certify and simulate contraction-based Luenberger observers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bound the matrix measure of df/dx + L dg/dx over the scenario box.
    Certify(CertifyArgs),
    /// Simulate the system-observer interconnection and check the error bound.
    Simulate(SimulateArgs),
    /// Print the matrix measure of a matrix read from CSV.
    Measure(MeasureArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Vector norm: `one`, `two` or `inf`.
    #[arg(long, default_value = "one", value_parser = parse_norm)]
    pub norm: NormKind,
    /// `none`, `identity_negative`, or a CSV file holding L.
    #[arg(long, default_value = "identity_negative")]
    pub gain: String,
    /// Seed for sampling and for random initial conditions.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output file (certificate JSON or trajectory CSV); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Grid points per dimension.
    #[arg(long, default_value_t = 9)]
    pub grid: usize,
    /// Latin-hypercube samples on top of the grid.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 25.0)]
    pub t1: f64,
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    /// Write every N-th step.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Comma-separated initial state; drawn in-box from the seed when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Comma-separated initial estimate; drawn in-box from the seed when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub xhat0: Option<Vec<f64>>,
    /// Contraction rate to check the trajectory against.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "certificate")]
    pub c: Option<f64>,
    /// Certificate JSON whose certified_c is checked against the trajectory.
    #[arg(long)]
    pub certificate: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    /// CSV file, one matrix row per line.
    pub matrix: PathBuf,
    /// Vector norm: `one`, `two` or `inf`.
    #[arg(long, default_value = "one", value_parser = parse_norm)]
    pub norm: NormKind,
}

fn parse_norm(s: &str) -> std::result::Result<NormKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational =
                matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let rendered = e.render().to_string();
            if informational {
                let _ = write!(stdout, "{rendered}");
                return EXIT_OK;
            }
            let _ = write!(stderr, "{rendered}");
            return EXIT_ERROR;
        }
    };
    let result = match &cli.command {
        Command::Certify(a) => cmd_certify(a, stdout, stderr),
        Command::Simulate(a) => cmd_simulate(a, stdout, stderr),
        Command::Measure(a) => cmd_measure(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a dense matrix, one comma-separated row per line.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_matrix_csv(&text)
}

pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("matrix line {}: {e}", lineno + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("matrix file has no rows".into()));
    }
    Matrix::from_rows(&rows)
}

/// Resolves the `--gain` flag against a traffic system.
pub fn resolve_gain(choice: &str, sys: &TrafficSystem) -> Result<ObserverGain> {
    let (n, m) = (sys.dim(), sys.output_dim());
    match choice {
        "none" | "zero" => Ok(ObserverGain::zeros(n, m)),
        "identity_negative" => {
            ObserverGain::negative_identity_on(n, m, &sys.scenario().measured_links())
        }
        path => {
            let l = read_matrix_csv(Path::new(path))?;
            if l.rows() != n || l.cols() != m {
                return Err(Error::Config(format!(
                    "gain file {path} is {}x{}, expected {n}x{m}",
                    l.rows(),
                    l.cols()
                )));
            }
            Ok(ObserverGain::new(l))
        }
    }
}

fn write_output(path: &Option<PathBuf>, contents: &[u8], stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, contents).map_err(io_err(p)),
        None => stdout
            .write_all(contents)
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

/// The summary goes to stdout only when stdout is not already carrying the output file.
fn write_summary(
    path: &Option<PathBuf>,
    summary: &[u8],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    match path {
        Some(_) => stdout
            .write_all(summary)
            .map_err(io_err(Path::new("<stdout>"))),
        None => stderr
            .write_all(summary)
            .map_err(io_err(Path::new("<stderr>"))),
    }
}

fn load_system(common: &CommonArgs) -> Result<(TrafficSystem, ObserverGain)> {
    let sys = TrafficSystem::new(TrafficScenario::from_path(&common.scenario)?);
    let gain = resolve_gain(&common.gain, &sys)?;
    Ok((sys, gain))
}

pub fn cmd_certify(
    args: &CertifyArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32> {
    let (sys, gain) = load_system(&args.common)?;
    let opts = CertifyOptions {
        grid_per_dim: args.grid,
        random_samples: args.samples,
        seed: args.common.seed,
        ..CertifyOptions::default()
    };
    let report = certify_contraction(&sys, &gain, args.common.norm, &opts)?;
    let mut json = report.to_json_string();
    json.push('\n');
    let summary = format!(
        "certified_c = {}\nanalytic_bound = {}\nstrictly_contractive = {}\nsamples = {}\n",
        report.certified_c,
        sys.scenario().analytic_contraction_bound(),
        report.strictly_contractive,
        report.samples
    );
    write_output(&args.common.out, json.as_bytes(), stdout)?;
    write_summary(&args.common.out, summary.as_bytes(), stdout, stderr)?;
    Ok(if report.strictly_contractive {
        EXIT_OK
    } else {
        EXIT_NOT_CERTIFIED
    })
}

fn random_in_box(rng: &mut ChaCha8Rng, b: &StateBox) -> Vec<f64> {
    b.lower()
        .iter()
        .zip(b.upper())
        .map(|(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
        .collect()
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn cmd_simulate(
    args: &SimulateArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32> {
    let (sys, gain) = load_system(&args.common)?;
    if !(args.dt > 0.0) || !(args.t1 > 0.0) {
        return Err(Error::Config("dt and t1 must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.common.seed);
    let x0 = match &args.x0 {
        Some(v) => v.clone(),
        None => random_in_box(&mut rng, sys.domain()),
    };
    let xhat0 = match &args.xhat0 {
        Some(v) => v.clone(),
        None => random_in_box(&mut rng, sys.domain()),
    };
    let c = match (&args.c, &args.certificate) {
        (Some(c), _) => Some(*c),
        (None, Some(p)) => Some(CertificateReport::from_path(p)?.certified_c),
        (None, None) => None,
    };
    let traj =
        simulate_interconnection(&sys, &gain, &x0, &xhat0, args.t1, args.dt, args.common.norm)?;

    let mut comments = vec![
        format!("seed={}", args.common.seed),
        format!("norm={}", args.common.norm),
        format!("x0={}", fmt_vec(&x0)),
        format!("xhat0={}", fmt_vec(&xhat0)),
    ];
    if let Some(c) = c {
        comments.push(format!("c={c:.16e}"));
    }
    let mut csv = Vec::new();
    write_trajectory_csv(&mut csv, &traj, args.stride, c, &comments)?;
    write_output(&args.common.out, &csv, stdout)?;

    let mut summary = Vec::new();
    let invariant = verify_box_invariance(&traj, sys.domain(), INVARIANCE_TOL);
    let mut ok = invariant;
    let _ = writeln!(
        summary,
        "box_invariance holds={invariant} clip_events={}",
        traj.clip_events
    );
    if let Some(c) = c {
        let bound = verify_error_bound(&traj, c)?;
        let decay = clarke_decay_check(&traj, c)?;
        ok &= bound.holds && decay.holds;
        let _ = writeln!(
            summary,
            "error_bound c={c} max_ratio={} holds={}\nclarke_decay max_violation={} tolerance={} holds={}",
            bound.max_ratio, bound.holds, decay.max_violation, decay.tolerance, decay.holds
        );
    }
    write_summary(&args.common.out, &summary, stdout, stderr)?;
    Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILED })
}

pub fn cmd_measure(args: &MeasureArgs, stdout: &mut dyn Write) -> Result<i32> {
    let a = read_matrix_csv(&args.matrix)?;
    let mu = matrix_measure(&a, args.norm)?;
    let norm = induced_matrix_norm(&a, args.norm)?;
    let metzler = is_metzler(&a, DEFAULT_METZLER_TOL)?;
    let estimate = matrix_measure_limit_estimate(&a, args.norm, DEFAULT_LIMIT_STEP)?;
    writeln!(
        stdout,
        "norm = {}\nmu = {mu}\ninduced_norm = {norm}\nmetzler = {metzler}\nlimit_estimate = {estimate}",
        args.norm
    )
    .map_err(io_err(Path::new("<stdout>")))?;
    Ok(EXIT_OK)
}
