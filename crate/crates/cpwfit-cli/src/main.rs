//! Command-line front end: resonator design, trace fitting, photon
//! calibration, loss-model fitting, synthetic traces, and aggregate
//! report bundles.
//!
//! Exit codes: 0 success, 1 usage error, 2 input/parse error, 3 fit
//! non-convergence (results are still written, with converged = false).
//! Identical inputs and seeds produce byte-identical outputs.

// Validation deliberately writes `!(x >= 0.0)` so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod report;

use clap::builder::PossibleValuesParser;
use clap::{Parser, Subcommand};
use cpwfit::cpw::{design_report, CpwGeometry, TransmissionLineParams, WaferStack};
use cpwfit::ingest::parse_trace;
use cpwfit::loss::{fit_tls, LossObservation};
use cpwfit::notchfit::{fit_notch, FitRecord};
use cpwfit::photon::{input_power, photon_number, PhotonCalc, PowerContext};
use cpwfit::s21::{synthesize_trace, NotchParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cpwfit",
    version,
    about = "CPW resonator design, notch-type S21 fitting, photon calibration and TLS loss models",
    after_help = "Config and file formats (design TOML keys, trace formats, manifests, loss \
                  tables) are documented in FORMATS.md."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute transmission-line parameters for a CPW design config (TOML)
    Design {
        /// TOML file with keys d_si_um, d_sige_um, eps_si, ge_fraction,
        /// w_um, g_um, length_um and optional f_measured_ghz, qi
        #[arg(long)]
        config: PathBuf,
        /// Also write the full-precision record as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit notch-resonator S21 traces; one JSON record per line, input order
    Fit {
        /// Trace files to fit
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Trace file format
        #[arg(long, default_value = "auto",
              value_parser = PossibleValuesParser::new(["auto", "csv-reim", "csv-dbdeg", "touchstone"]))]
        format: String,
    },
    /// Calibrate the intra-resonator photon number for a fitted record
    Photon {
        /// JSON file holding one fit record (as written by `fit`)
        #[arg(long)]
        fit: PathBuf,
        /// VNA output power in dBm
        #[arg(long, allow_negative_numbers = true)]
        p_vna_dbm: f64,
        /// Total line attenuation in dB (negative)
        #[arg(long, allow_negative_numbers = true)]
        p_att_db: f64,
        /// Also write the full-precision record as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the TLS + residual loss model to a qi sweep table (CSV)
    TlsFit {
        /// CSV with header n_ph,temperature_k,fr_hz,qi,qi_sigma
        #[arg(long)]
        manifest: PathBuf,
        /// Also write the full-precision report as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize a notch trace from model parameters (TOML)
    Synth {
        /// TOML file with keys fr_hz, ql, qc_mag, phi_rad, a, alpha_rad,
        /// tau_s, f_start_hz, f_stop_hz, n_points
        #[arg(long)]
        params: PathBuf,
        /// Output trace file (csv-reim)
        #[arg(long)]
        out: PathBuf,
        /// Noise generator seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Additive complex noise sigma per quadrature
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Fit every trace in a sweep manifest and emit a report bundle
    Report {
        /// JSON sweep manifest (list of trace entries)
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for bundle.json and per-series CSVs
        #[arg(long)]
        out_dir: PathBuf,
        /// Design config(s) to include as design-table rows (repeatable)
        #[arg(long = "design-config")]
        design_configs: Vec<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Input(String),
    NonConvergence(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::NonConvergence(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::NonConvergence(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Design { config, out } => run_design(&config, out.as_deref()),
        Command::Fit { traces, format } => run_fit(&traces, &format),
        Command::Photon { fit, p_vna_dbm, p_att_db, out } => {
            run_photon(&fit, p_vna_dbm, p_att_db, out.as_deref())
        }
        Command::TlsFit { manifest, out } => run_tls_fit(&manifest, out.as_deref()),
        Command::Synth { params, out, seed, noise } => run_synth(&params, &out, seed, noise),
        Command::Report { manifest, out_dir, design_configs } => {
            report::run_report(&manifest, &out_dir, &design_configs)
        }
    }
}

/// Six-significant-digit display formatting; JSON outputs keep full
/// precision.
fn fmt_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.5e}")
    }
}

fn kv(key: &str, value: f64) {
    println!("{key} = {}", fmt_sig(value));
}

pub(crate) fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub(crate) fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialization cannot fail");
    s.push('\n');
    s
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignConfig {
    d_si_um: f64,
    d_sige_um: f64,
    eps_si: f64,
    ge_fraction: f64,
    w_um: f64,
    g_um: f64,
    length_um: f64,
    #[serde(default)]
    f_measured_ghz: Option<f64>,
    #[serde(default)]
    qi: Option<f64>,
}

pub(crate) fn load_design_report(path: &Path) -> Result<TransmissionLineParams, CliError> {
    let text = read_file(path)?;
    let cfg: DesignConfig = toml::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let named = |e: String| CliError::Input(format!("{}: {e}", path.display()));
    let stack = WaferStack::new(cfg.d_si_um, cfg.d_sige_um, cfg.eps_si, cfg.ge_fraction)
        .map_err(|e| named(e.to_string()))?;
    let geometry =
        CpwGeometry::new(cfg.w_um, cfg.g_um, cfg.length_um, cfg.d_si_um + cfg.d_sige_um)
            .map_err(|e| named(e.to_string()))?;
    design_report(&stack, &geometry, cfg.f_measured_ghz, cfg.qi).map_err(|e| named(e.to_string()))
}

fn run_design(config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let report = load_design_report(config)?;
    kv("eps_sub", report.eps_sub);
    kv("eps_eff", report.eps_eff);
    kv("lg_uh_per_m", report.lg_uh_per_m);
    kv("cg_nf_per_m", report.cg_nf_per_m);
    kv("f_design_ghz", report.f_design_ghz);
    if let Some(fm) = report.f_measured_ghz {
        kv("f_measured_ghz", fm);
    }
    if let Some(lk) = report.lk_uh_per_m {
        kv("lk_uh_per_m", lk);
    }
    if let Some(z) = report.z_eff_ohm {
        kv("z_eff_ohm", z);
    }
    if let Some(r) = report.r_ohm_per_m {
        kv("r_ohm_per_m", r);
    }
    if let Some(out) = out {
        write_file(out, &to_pretty_json(&report))?;
    }
    Ok(())
}

/// One stdout line per fitted trace: the flat fit record plus the path
/// it came from.
#[derive(Serialize)]
struct FitLine {
    trace_path: String,
    #[serde(flatten)]
    record: FitRecord,
}

pub(crate) fn fit_one(path: &Path, format: &str) -> Result<cpwfit::notchfit::NotchFitResult, CliError> {
    let trace = parse_trace(path, format).map_err(|e| CliError::Input(e.to_string()))?;
    fit_notch(&trace).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn run_fit(traces: &[PathBuf], format: &str) -> Result<(), CliError> {
    // Traces are fitted concurrently but reported strictly in input
    // order.
    let outcomes: Vec<Result<(String, bool), CliError>> = traces
        .par_iter()
        .map(|path| {
            let fit = fit_one(path, format)?;
            let line = FitLine {
                trace_path: path.display().to_string(),
                record: fit.to_record(),
            };
            let json = serde_json::to_string(&line).expect("serialization cannot fail");
            Ok((json, fit.diagnostics.converged))
        })
        .collect();
    let mut non_converged = Vec::new();
    for (path, outcome) in traces.iter().zip(outcomes) {
        let (line, converged) = outcome?;
        println!("{line}");
        if !converged {
            non_converged.push(path.display().to_string());
        }
    }
    if non_converged.is_empty() {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!(
            "fit did not converge for: {}",
            non_converged.join(", ")
        )))
    }
}

#[derive(Serialize)]
struct PhotonLine {
    #[serde(flatten)]
    power: PowerContext,
    #[serde(flatten)]
    calc: PhotonCalc,
}

fn run_photon(
    fit: &Path,
    p_vna_dbm: f64,
    p_att_db: f64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let text = read_file(fit)?;
    let records: Vec<FitRecord> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Input(format!("{}: {e}", fit.display())))
        })
        .collect::<Result<_, _>>()?;
    let record = match records.as_slice() {
        [one] => one,
        [] => return Err(CliError::Input(format!("{}: no fit record found", fit.display()))),
        many => {
            return Err(CliError::Input(format!(
                "{}: holds {} fit records; pass a single-record file",
                fit.display(),
                many.len()
            )))
        }
    };
    let power = input_power(p_vna_dbm, p_att_db);
    let calc = photon_number(record.ql, record.qc_mag, record.qi, record.fr_hz, power.p_in_watts)
        .map_err(|e| CliError::Input(format!("{}: {e}", fit.display())))?;
    kv("p_vna_dbm", power.p_vna_dbm);
    kv("p_att_db", power.p_att_db);
    kv("p_in_dbm", power.p_in_dbm);
    kv("p_in_watts", power.p_in_watts);
    kv("s21_res_power_ratio", calc.s21_res_power_ratio);
    kv("s11_res_power_ratio", calc.s11_res_power_ratio);
    kv("p_loss_watts", calc.p_loss_watts);
    kv("n_ph", calc.n_ph);
    if let Some(out) = out {
        write_file(out, &to_pretty_json(&PhotonLine { power, calc }))?;
    }
    Ok(())
}

const LOSS_TABLE_HEADER: &str = "n_ph,temperature_k,fr_hz,qi,qi_sigma";

fn parse_loss_table(text: &str, path: &Path) -> Result<Vec<LossObservation>, CliError> {
    let err = |line: usize, msg: String| {
        CliError::Input(format!("{}: line {line}: {msg}", path.display()))
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, h)) if h == LOSS_TABLE_HEADER => {}
        Some((n, h)) => {
            return Err(err(n, format!("expected header {LOSS_TABLE_HEADER:?}, found {h:?}")))
        }
        None => return Err(CliError::Input(format!("{}: empty loss table", path.display()))),
    }
    let mut observations = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(err(n, format!("expected 5 comma-separated values, got {}", fields.len())));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| err(n, format!("{s:?} is not a number")))
        };
        let sigma_field = fields[4].trim();
        observations.push(LossObservation {
            n_ph: num(fields[0])?,
            temperature_k: num(fields[1])?,
            fr_hz: num(fields[2])?,
            qi: num(fields[3])?,
            qi_sigma: if sigma_field.is_empty() { None } else { Some(num(sigma_field)?) },
        });
    }
    Ok(observations)
}

fn run_tls_fit(manifest: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let text = read_file(manifest)?;
    let observations = parse_loss_table(&text, manifest)?;
    let report = fit_tls(&observations, None)
        .map_err(|e| CliError::Input(format!("{}: {e}", manifest.display())))?;
    kv("q_tls0", report.params.q_tls0);
    kv("n_c", report.params.n_c);
    kv("beta", report.params.beta);
    kv("q0", report.params.q0);
    if let Some(sigma) = &report.sigma {
        kv("q_tls0_sigma", sigma.q_tls0);
        kv("n_c_sigma", sigma.n_c);
        kv("beta_sigma", sigma.beta);
        kv("q0_sigma", sigma.q0);
    }
    println!("converged = {}", report.converged);
    println!("ill_conditioned = {}", report.ill_conditioned);
    kv("residual_norm", report.residual_norm);
    println!("iterations = {}", report.iterations);
    if let Some(out) = out {
        write_file(out, &to_pretty_json(&report))?;
    }
    if report.converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence("TLS fit did not converge".into()))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthConfig {
    fr_hz: f64,
    ql: f64,
    qc_mag: f64,
    phi_rad: f64,
    a: f64,
    alpha_rad: f64,
    tau_s: f64,
    f_start_hz: f64,
    f_stop_hz: f64,
    n_points: usize,
}

fn run_synth(params: &Path, out: &Path, seed: u64, noise: f64) -> Result<(), CliError> {
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(CliError::Usage(format!("--noise must be non-negative, got {noise}")));
    }
    let text = read_file(params)?;
    let cfg: SynthConfig = toml::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", params.display())))?;
    let named = |e: String| CliError::Input(format!("{}: {e}", params.display()));
    let notch = NotchParams {
        fr_hz: cfg.fr_hz,
        ql: cfg.ql,
        qc_mag: cfg.qc_mag,
        phi_rad: cfg.phi_rad,
        a: cfg.a,
        alpha_rad: cfg.alpha_rad,
        tau_s: cfg.tau_s,
    };
    notch.validate().map_err(|e| named(e.to_string()))?;
    if !(cfg.f_start_hz < cfg.f_stop_hz) {
        return Err(named("f_start_hz must be below f_stop_hz".into()));
    }
    if cfg.n_points < 16 {
        return Err(named(format!("n_points must be at least 16, got {}", cfg.n_points)));
    }
    let trace = synthesize_trace(&notch, cfg.f_start_hz, cfg.f_stop_hz, cfg.n_points, noise, seed);
    write_file(out, &cpwfit::ingest::write_trace_csv(&trace))
}
