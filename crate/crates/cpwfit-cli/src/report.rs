//! The `report` subcommand: fit every trace in a sweep manifest, attach
//! photon calibration where drive powers are present, fit the loss
//! model per resonator group, and write a bundle of plot-ready
//! artifacts (bundle.json plus one CSV per series).

use crate::{fit_one, load_design_report, read_file, to_pretty_json, write_file, CliError};
use cpwfit::cpw::TransmissionLineParams;
use cpwfit::ingest::parse_manifest_str;
use cpwfit::loss::{fit_tls, LossObservation, TlsFitReport};
use cpwfit::notchfit::{FitRecord, NotchFitResult};
use cpwfit::photon::{input_power, photon_number, PhotonCalc, PowerContext};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Serialize)]
struct FitRow {
    trace_path: String,
    temperature_k: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    resonator_label: Option<String>,
    #[serde(flatten)]
    fit: FitRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    power: Option<PowerContext>,
    #[serde(skip_serializing_if = "Option::is_none")]
    photon: Option<PhotonCalc>,
}

#[derive(Serialize)]
struct TlsRow {
    resonator_label: String,
    n_observations: usize,
    #[serde(flatten)]
    report: TlsFitReport,
}

#[derive(Serialize)]
struct Series {
    label: String,
    x: Vec<f64>,
    y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_sigma: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct ReportBundle {
    table1_rows: Vec<TransmissionLineParams>,
    fit_rows: Vec<FitRow>,
    tls_rows: Vec<TlsRow>,
    series: Vec<Series>,
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '-' })
        .collect()
}

fn group_label(row: &FitRow) -> String {
    row.resonator_label.clone().unwrap_or_else(|| "unlabeled".into())
}

pub(crate) fn run_report(
    manifest_path: &Path,
    out_dir: &Path,
    design_configs: &[PathBuf],
) -> Result<(), CliError> {
    let text = read_file(manifest_path)?;
    let manifest = parse_manifest_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let table1_rows: Vec<TransmissionLineParams> =
        design_configs.iter().map(|p| load_design_report(p)).collect::<Result<_, _>>()?;

    // Fit concurrently; everything downstream keeps manifest order.
    let fits: Vec<Result<NotchFitResult, CliError>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let path = PathBuf::from(&entry.trace_path);
            let path = if path.is_absolute() { path } else { base.join(path) };
            fit_one(&path, "auto")
        })
        .collect();

    let mut all_converged = true;
    let mut fit_rows = Vec::with_capacity(manifest.entries.len());
    for (entry, fit) in manifest.entries.iter().zip(fits) {
        let fit = fit?;
        let record = fit.to_record();
        all_converged &= record.converged;
        let power = match (entry.p_vna_dbm, entry.p_att_db) {
            (Some(vna), Some(att)) => Some(input_power(vna, att)),
            _ => None,
        };
        let photon = power.and_then(|pw| {
            match photon_number(record.ql, record.qc_mag, record.qi, record.fr_hz, pw.p_in_watts)
            {
                Ok(calc) => Some(calc),
                Err(e) => {
                    eprintln!(
                        "note: {}: photon calibration skipped: {e}",
                        entry.trace_path
                    );
                    None
                }
            }
        });
        fit_rows.push(FitRow {
            trace_path: entry.trace_path.clone(),
            temperature_k: entry.temperature_k,
            resonator_label: entry.resonator_label.clone(),
            fit: record,
            power,
            photon,
        });
    }

    // Loss-model fit per resonator label over the calibrated rows.
    let mut loss_groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, row) in fit_rows.iter().enumerate() {
        if row.photon.is_some() {
            loss_groups.entry(group_label(row)).or_default().push(i);
        }
    }
    let mut tls_rows = Vec::new();
    for (label, members) in &loss_groups {
        if members.len() < 8 {
            eprintln!(
                "note: {label}: {} calibrated points, a loss fit needs 8; skipped",
                members.len()
            );
            continue;
        }
        let observations: Vec<LossObservation> = members
            .iter()
            .map(|&i| {
                let row = &fit_rows[i];
                LossObservation {
                    n_ph: row.photon.unwrap().n_ph,
                    temperature_k: row.temperature_k,
                    fr_hz: row.fit.fr_hz,
                    qi: row.fit.qi,
                    qi_sigma: row.fit.qi_sigma,
                }
            })
            .collect();
        let report =
            fit_tls(&observations, None).map_err(|e| CliError::Input(format!("{label}: {e}")))?;
        all_converged &= report.converged;
        tls_rows.push(TlsRow {
            resonator_label: label.clone(),
            n_observations: observations.len(),
            report,
        });
    }

    // Plot-ready series: qi vs n_ph per (label, temperature). The
    // temperature's bit pattern keys the map; positive floats order the
    // same by bits as by value.
    let mut series_groups: BTreeMap<(String, u64), Vec<usize>> = BTreeMap::new();
    for (i, row) in fit_rows.iter().enumerate() {
        if row.photon.is_some() {
            series_groups
                .entry((group_label(row), row.temperature_k.to_bits()))
                .or_default()
                .push(i);
        }
    }
    let mut series: Vec<Series> = Vec::new();
    let mut used_names: Vec<String> = Vec::new();
    for ((label, t_bits), mut members) in series_groups {
        let n_ph = |i: usize| fit_rows[i].photon.unwrap().n_ph;
        members.sort_by(|&a, &b| n_ph(a).total_cmp(&n_ph(b)));
        let stem = format!("qi_vs_nph_{}_{}K", sanitize(&label), f64::from_bits(t_bits));
        let mut name = stem.clone();
        let mut k = 2;
        while used_names.contains(&name) {
            name = format!("{stem}-{k}");
            k += 1;
        }
        used_names.push(name.clone());
        series.push(Series {
            label: name,
            x: members.iter().map(|&i| n_ph(i)).collect(),
            y: members.iter().map(|&i| fit_rows[i].fit.qi).collect(),
            y_sigma: members.iter().map(|&i| fit_rows[i].fit.qi_sigma).collect(),
        });
    }

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Input(format!("{}: {e}", out_dir.display())))?;
    for s in &series {
        debug_assert_eq!(s.x.len(), s.y.len());
        let mut csv = String::from("n_ph,qi,qi_sigma\n");
        for (j, (x, y)) in s.x.iter().zip(&s.y).enumerate() {
            let sigma = s.y_sigma.as_ref().map_or(String::new(), |v| v[j].to_string());
            csv.push_str(&format!("{x},{y},{sigma}\n"));
        }
        let path = out_dir.join(format!("{}.csv", s.label));
        write_file(&path, &csv)?;
        println!("wrote {}", path.display());
    }
    let bundle = ReportBundle { table1_rows, fit_rows, tls_rows, series };
    let bundle_path = out_dir.join("bundle.json");
    write_file(&bundle_path, &to_pretty_json(&bundle))?;
    println!("wrote {}", bundle_path.display());

    if all_converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence(
            "one or more fits did not converge (bundle still written)".into(),
        ))
    }
}
