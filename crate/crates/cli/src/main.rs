//! Command-line front end: asymptotic curves, crossing checks, transition
//! search, finite-size bounds, and Monte Carlo comparisons, as CSV/JSON.
//!
//! Exit codes: 0 success (for `check`, verdict true), 1 `check` verdict
//! false, 2 configuration error, 3 numerical failure.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use rscs_core::montecarlo::{self, Estimator};
use rscs_core::{bounds, channel, replica, CoreError, Prior};

const TOOL: &str = concat!("rscs ", env!("CARGO_PKG_VERSION"));
const SCHEMA: u32 = 1;

#[derive(Parser)]
#[command(
    name = "rscs",
    version,
    about = "Replica-symmetric predictions and exact-posterior Monte Carlo \
             for i.i.d. Gaussian compressed sensing",
    after_help = "Priors: gaussian | bpsk | fig1:<alpha> | \
                  bernoulli-gaussian:<rho>:<var> | path to a JSON file of \
                  [weight, mean, variance] triples.\n\
                  Grids: start:stop:step (inclusive)."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Asymptotic information and error curves over a measurement-ratio grid
    Curve {
        #[arg(long)]
        prior: String,
        /// Ratio grid, start:stop:step
        #[arg(long)]
        delta: String,
        /// Output CSV path; jump records go to <out>.jumps.json
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verdict on the single-crossing property (exit 0 yes, 1 no)
    Check {
        #[arg(long)]
        prior: String,
        /// Upper end of the ratio range to scan
        #[arg(long, default_value_t = 20.0)]
        delta_max: f64,
        /// Grid resolution inside each jump plateau
        #[arg(long, default_value_t = 512)]
        z_grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Locate the smallest ratio where the curve jumps, if any
    Transition {
        #[arg(long)]
        prior: String,
        #[arg(long, default_value_t = 0.01)]
        lo: f64,
        #[arg(long, default_value_t = 6.0)]
        hi: f64,
        /// Ratio scan resolution
        #[arg(long, default_value_t = 256)]
        scan: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-size sandwich and gap bounds at one (n, m)
    Bounds {
        #[arg(long)]
        prior: String,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        m: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimates next to predictions and bounds over a ratio grid
    Compare {
        #[arg(long)]
        prior: String,
        #[arg(long)]
        n: u32,
        /// Ratio grid, start:stop:step; measurements per row = round(ratio * n)
        #[arg(long)]
        delta: String,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// error_avg or posterior_var_avg
        #[arg(long, default_value = "posterior_var_avg")]
        estimator: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fixed-point iteration trace from an uninformed start
    Se {
        #[arg(long)]
        prior: String,
        #[arg(long)]
        delta: f64,
        /// Starting point; defaults to the prior variance
        #[arg(long)]
        z0: Option<f64>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 2000)]
        max_iters: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One Monte Carlo run from flags or a JSON manifest
    Estimate {
        /// JSON manifest {prior, n, m, trials?, seed?, estimator?}
        #[arg(long, conflicts_with_all = ["prior", "n", "m"])]
        manifest: Option<PathBuf>,
        #[arg(long)]
        prior: Option<String>,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "posterior_var_avg")]
        estimator: String,
        /// Write per-trial rows as CSV to this path
        #[arg(long)]
        dump_trials: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure classified by exit code: configuration (2) or numerics (3).
enum Failure {
    Config(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::QuadratureFailure { .. }
            | CoreError::GridTooCoarse { .. }
            | CoreError::TieAtMinimum { .. }
            | CoreError::NoConvergence { .. }
            | CoreError::EnumerationTooLarge { .. } => Failure::Numeric(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cmd: Cmd) -> CliResult<u8> {
    match cmd {
        Cmd::Curve { prior, delta, out } => cmd_curve(&prior, &delta, out.as_ref()),
        Cmd::Check { prior, delta_max, z_grid, out } => {
            cmd_check(&prior, delta_max, z_grid, out.as_ref())
        }
        Cmd::Transition { prior, lo, hi, scan, out } => {
            cmd_transition(&prior, lo, hi, scan, out.as_ref())
        }
        Cmd::Bounds { prior, n, m, out } => cmd_bounds(&prior, n, m, out.as_ref()),
        Cmd::Compare { prior, n, delta, trials, seed, estimator, out } => {
            cmd_compare(&prior, n, &delta, trials, seed, &estimator, out.as_ref())
        }
        Cmd::Se { prior, delta, z0, tol, max_iters, out } => {
            cmd_se(&prior, delta, z0, tol, max_iters, out.as_ref())
        }
        Cmd::Estimate {
            manifest,
            prior,
            n,
            m,
            trials,
            seed,
            estimator,
            dump_trials,
            out,
        } => cmd_estimate(
            manifest.as_ref(),
            prior.as_deref(),
            n,
            m,
            trials,
            seed,
            &estimator,
            dump_trials.as_ref(),
            out.as_ref(),
        ),
    }
}

/// Resolve a prior from a preset name or a JSON file of component triples.
fn load_prior(spec: &str) -> CliResult<Prior> {
    let path = std::path::Path::new(spec);
    if path.exists() || spec.ends_with(".json") || spec.contains('/') {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read prior file {spec}: {e}")))?;
        let comps: Vec<(f64, f64, f64)> = serde_json::from_str(&text).map_err(|e| {
            Failure::Config(format!(
                "prior file {spec} must hold [weight, mean, variance] triples: {e}"
            ))
        })?;
        return Ok(Prior::new(&comps)?);
    }
    Ok(Prior::from_preset(spec)?)
}

/// Inclusive start:stop:step grid.
fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let bad = |why: &str| Failure::Config(format!("grid '{s}': {why}"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("expected start:stop:step"));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| bad(&e.to_string()))?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !nums.iter().all(|v| v.is_finite()) || start < 0.0 {
        return Err(bad("bounds must be finite and nonnegative"));
    }
    if step <= 0.0 || stop < start {
        return Err(bad("need step > 0 and stop >= start"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    if count > 100_000 {
        return Err(bad("more than 100000 points"));
    }
    Ok((0..=count).map(|i| start + i as f64 * step).collect())
}

fn csv_header(p: &Prior, seed: Option<u64>) -> String {
    let seed = seed.map_or("none".to_string(), |s| s.to_string());
    format!("# {TOOL} | prior sha256:{} | seed {}\n", p.hash_hex(), seed)
}

/// Stamp schema, tool version, prior hash, and optional seed into a JSON
/// object and pretty-print it.
fn json_envelope(mut value: serde_json::Value, p: &Prior, seed: Option<u64>) -> String {
    let obj = value.as_object_mut().expect("reports are JSON objects");
    obj.insert("schema".into(), SCHEMA.into());
    obj.insert("tool".into(), TOOL.into());
    obj.insert("prior_hash".into(), p.hash_hex().into());
    if let Some(s) = seed {
        obj.insert("seed".into(), s.into());
    }
    let mut text = serde_json::to_string_pretty(&value).expect("serializable");
    text.push('\n');
    text
}

fn emit(out: Option<&PathBuf>, content: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn cmd_curve(prior: &str, delta: &str, out: Option<&PathBuf>) -> CliResult<u8> {
    let p = load_prior(prior)?;
    let grid = parse_grid(delta)?;
    let curve = replica::replica_curve(&p, &grid)?;

    let mut csv = csv_header(&p, None);
    csv.push_str("delta,i_rs_nats,m_rs,branch_count\n");
    for i in 0..curve.deltas.len() {
        writeln!(
            csv,
            "{},{},{},{}",
            curve.deltas[i], curve.i_rs[i], curve.m_rs[i], curve.branch_counts[i]
        )
        .expect("string write");
    }

    if !curve.jumps.is_empty() {
        match out {
            Some(path) => {
                let sidecar = json_envelope(
                    serde_json::json!({ "jumps": curve.jumps }),
                    &p,
                    None,
                );
                let spath = format!("{}.jumps.json", path.display());
                fs::write(&spath, sidecar)
                    .map_err(|e| Failure::Config(format!("cannot write {spath}: {e}")))?;
            }
            None => {
                for j in &curve.jumps {
                    writeln!(
                        csv,
                        "# jump delta_star={} z_minus={} z_plus={}",
                        j.delta_star, j.z_minus, j.z_plus
                    )
                    .expect("string write");
                }
            }
        }
        let delta_max = *grid.last().expect("nonempty grid");
        match replica::single_crossing_check(&p, 512, delta_max) {
            Ok(report) if !report.is_single_crossing => {
                eprintln!(
                    "warning: {} jump(s) found and the single-crossing property \
                     fails on (0, {delta_max}] ({} crossings)",
                    curve.jumps.len(),
                    report.crossings.len()
                );
            }
            Ok(_) => {}
            Err(e) => eprintln!("note: single-crossing check inconclusive: {e}"),
        }
    }

    emit(out, &csv)?;
    Ok(0)
}

fn cmd_check(
    prior: &str,
    delta_max: f64,
    z_grid: usize,
    out: Option<&PathBuf>,
) -> CliResult<u8> {
    let p = load_prior(prior)?;
    let report = replica::single_crossing_check(&p, z_grid, delta_max)?;
    let verdict = report.is_single_crossing;
    let value = serde_json::to_value(&report)
        .map_err(|e| Failure::Config(format!("serialization: {e}")))?;
    emit(out, &json_envelope(value, &p, None))?;
    Ok(if verdict { 0 } else { 1 })
}

fn cmd_transition(
    prior: &str,
    lo: f64,
    hi: f64,
    scan: usize,
    out: Option<&PathBuf>,
) -> CliResult<u8> {
    let p = load_prior(prior)?;
    let found = replica::phase_transition(&p, lo, hi, scan)?;
    let value = serde_json::json!({
        "lo": lo,
        "hi": hi,
        "found": found.is_some(),
        "delta_star": found,
    });
    emit(out, &json_envelope(value, &p, None))?;
    Ok(0)
}

fn cmd_bounds(prior: &str, n: u32, m: u32, out: Option<&PathBuf>) -> CliResult<u8> {
    let p = load_prior(prior)?;
    let mi = bounds::mi_sandwich(&p, n, m)?;
    let mmse = bounds::mmse_sandwich(&p, n, m)?;
    let gaps = bounds::gap_bounds(&p, n, m).ok();
    let delta = m as f64 / n as f64;
    let boundary = bounds::boundary_bound(delta).ok();
    let value = serde_json::json!({
        "n": n,
        "m": m,
        "mi_lower_nats_total": mi.lower,
        "mi_upper_nats_total": mi.upper,
        "mmse_lower": mmse.lower,
        "mmse_upper": mmse.upper,
        "mi_gap_nats": gaps.map(|g| g.0),
        "mmse_gap": gaps.map(|g| g.1),
        "boundary_bound_nats": boundary,
        "note": "boundary constant (4+sqrt(2))/sqrt(delta) is the explicit \
                 value from the proof; the statement itself leaves the \
                 constant unspecified",
    });
    emit(out, &json_envelope(value, &p, None))?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    prior: &str,
    n: u32,
    delta: &str,
    trials: u64,
    seed: u64,
    estimator: &str,
    out: Option<&PathBuf>,
) -> CliResult<u8> {
    let p = load_prior(prior)?;
    let grid = parse_grid(delta)?;
    let est = Estimator::from_str(estimator)?;
    if n < 1 {
        return Err(Failure::Config("need n >= 1".into()));
    }

    let mut csv = csv_header(&p, Some(seed));
    csv.push_str(
        "delta,n,m,trials,mmse_hat,mmse_se,mi_hat_nats,mi_se_nats,m_rs,i_rs_nats,\
         i_x_nats,mmse_x,mi_lower_nats,mi_upper_nats,mmse_lower,mmse_upper,\
         mi_gap_nats,mmse_gap,boundary_nats,violations\n",
    );
    for d in grid {
        let m = (d * n as f64).round() as u32;
        let deff = m as f64 / n as f64;
        let mc = montecarlo::estimate(&p, n, m, trials, seed, est)?;
        let rp = replica::replica_point(&p, deff)?;
        let mi_s = bounds::mi_sandwich(&p, n, m)?;
        let mmse_s = bounds::mmse_sandwich(&p, n, m)?;
        let gaps = bounds::gap_bounds(&p, n, m).ok();
        let boundary = bounds::boundary_bound(deff).ok();
        let i_x = channel::i_x(&p, deff)?;
        let mmse_x = channel::mmse_x(&p, deff)?;

        let nf = n as f64;
        let mi_hat = mc.mi_hat / nf;
        let mi_se = mc.mi_se / nf;
        let mut flags: Vec<&str> = Vec::new();
        if mc.mmse_hat < mmse_s.lower - 3.0 * mc.mmse_se
            || mc.mmse_hat > mmse_s.upper + 3.0 * mc.mmse_se
        {
            flags.push("mmse_sandwich");
        }
        if mc.mi_hat < mi_s.lower - 3.0 * mc.mi_se || mc.mi_hat > mi_s.upper + 3.0 * mc.mi_se {
            flags.push("mi_sandwich");
        }
        if let Some((gi, gm)) = gaps {
            if (mi_hat - i_x).abs() > gi + 3.0 * mi_se {
                flags.push("mi_gap");
            }
            if (mc.mmse_hat - mmse_x).abs() > gm + 3.0 * mc.mmse_se {
                flags.push("mmse_gap");
            }
        }
        if let Some(bb) = boundary {
            if (mi_hat - rp.i_rs).abs() > bb + 3.0 * mi_se {
                flags.push("boundary");
            }
        }

        writeln!(
            csv,
            "{deff},{n},{m},{trials},{},{},{mi_hat},{mi_se},{},{},{i_x},{mmse_x},{},{},{},{},{},{},{},{}",
            mc.mmse_hat,
            mc.mmse_se,
            rp.m_rs,
            rp.i_rs,
            mi_s.lower / nf,
            mi_s.upper / nf,
            mmse_s.lower,
            mmse_s.upper,
            opt(gaps.map(|g| g.0)),
            opt(gaps.map(|g| g.1)),
            opt(boundary),
            flags.join(";"),
        )
        .expect("string write");
    }
    emit(out, &csv)?;
    Ok(0)
}

fn cmd_se(
    prior: &str,
    delta: f64,
    z0: Option<f64>,
    tol: f64,
    max_iters: usize,
    out: Option<&PathBuf>,
) -> CliResult<u8> {
    let p = load_prior(prior)?;
    let z0 = z0.unwrap_or_else(|| p.variance());
    let (trace, converged) = replica::se_trace(&p, delta, z0, tol, max_iters)?;
    let mut csv = csv_header(&p, None);
    writeln!(csv, "# delta {delta} | z0 {z0} | converged {converged}").expect("string write");
    csv.push_str("iter,z\n");
    for (i, z) in trace.iter().enumerate() {
        writeln!(csv, "{i},{z}").expect("string write");
    }
    emit(out, &csv)?;
    Ok(0)
}

#[derive(Deserialize)]
struct Manifest {
    prior: String,
    n: u32,
    m: u32,
    trials: Option<u64>,
    seed: Option<u64>,
    estimator: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_estimate(
    manifest: Option<&PathBuf>,
    prior: Option<&str>,
    n: Option<u32>,
    m: Option<u32>,
    trials: u64,
    seed: u64,
    estimator: &str,
    dump_trials: Option<&PathBuf>,
    out: Option<&PathBuf>,
) -> CliResult<u8> {
    let (prior_spec, n, m, trials, seed, est_name) = match manifest {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Failure::Config(format!("cannot read manifest {}: {e}", path.display()))
            })?;
            let man: Manifest = serde_json::from_str(&text).map_err(|e| {
                Failure::Config(format!("manifest {}: {e}", path.display()))
            })?;
            (
                man.prior,
                man.n,
                man.m,
                man.trials.unwrap_or(trials),
                man.seed.unwrap_or(seed),
                man.estimator.unwrap_or_else(|| estimator.to_string()),
            )
        }
        None => {
            let prior = prior
                .ok_or_else(|| Failure::Config("need --prior (or --manifest)".into()))?;
            let n = n.ok_or_else(|| Failure::Config("need --n (or --manifest)".into()))?;
            let m = m.ok_or_else(|| Failure::Config("need --m (or --manifest)".into()))?;
            (prior.to_string(), n, m, trials, seed, estimator.to_string())
        }
    };
    let p = load_prior(&prior_spec)?;
    let est = Estimator::from_str(&est_name)?;
    let rows = montecarlo::estimate_trials(&p, n, m, trials, seed)?;
    let summary = montecarlo::summarize_trials(&rows, n, m, seed, est);

    if let Some(path) = dump_trials {
        let mut csv = csv_header(&p, Some(seed));
        csv.push_str("trial,sq_err,posterior_var,mi\n");
        for r in &rows {
            writeln!(csv, "{},{},{},{}", r.trial, r.sq_err, r.posterior_var, r.mi)
                .expect("string write");
        }
        fs::write(path, csv)
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
    }

    let mut value = serde_json::to_value(&summary)
        .map_err(|e| Failure::Config(format!("serialization: {e}")))?;
    value
        .as_object_mut()
        .expect("object")
        .insert("prior".into(), prior_spec.into());
    emit(out, &json_envelope(value, &p, Some(seed)))?;
    Ok(0)
}
