//! Measurement-data ingestion: trace files in several formats, sweep
//! manifests, and the canonical trace serialization.
//!
//! Frequencies are always stored in Hz internally regardless of the
//! source unit. Parsing is strict: headers must match exactly and
//! unknown columns or manifest fields are rejected, since silently
//! reinterpreted columns have historically corrupted lab datasets.

mod formats;

pub use formats::{FormatRegistry, TraceFormat, CSV_DBDEG_HEADER, CSV_REIM_HEADER};

use crate::s21::{ComplexTrace, S21Error};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed header: {detail}")]
    MalformedHeader { line: usize, detail: String },
    #[error("line {line}: malformed record: {detail}")]
    MalformedRecord { line: usize, detail: String },
    #[error("line {line}: non-monotonic frequency grid ({f_hz} Hz does not increase past {prev_hz} Hz)")]
    NonMonotonicGrid { line: usize, f_hz: f64, prev_hz: f64 },
    #[error("line {line}: non-finite sample")]
    NonFiniteSample { line: usize },
    #[error("unknown trace format {requested:?} (known: {known})")]
    UnknownFormat { requested: String, known: String },
    #[error("could not detect the trace format from the input head")]
    UnrecognizedInput,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("rejected trace: {0}")]
    Trace(#[from] S21Error),
    #[error("manifest schema violation at {path}: {detail}")]
    ManifestSchema { path: String, detail: String },
    #[error("manifest entry {index}: duplicate trace_path {path:?}")]
    DuplicatePath { index: usize, path: String },
}

/// Parse trace text in the named format (`"auto"` sniffs the head).
pub fn parse_trace_str(text: &str, format: &str) -> Result<ComplexTrace, IngestError> {
    FormatRegistry::standard().resolve(format, text)?.parse(text)
}

/// Read and parse a trace file; see [`parse_trace_str`].
pub fn parse_trace(path: impl AsRef<Path>, format: &str) -> Result<ComplexTrace, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    parse_trace_str(&text, format)
}

/// Canonical serialization: csv-reim with shortest-round-trip float
/// formatting, so `parse(serialize(t))` reproduces `t` exactly.
pub fn write_trace_csv(trace: &ComplexTrace) -> String {
    let mut out = String::with_capacity(32 * (trace.len() + 1));
    out.push_str(CSV_REIM_HEADER);
    out.push('\n');
    for (f, z) in trace.frequencies_hz().iter().zip(trace.s21()) {
        writeln!(out, "{},{},{}", f, z.re, z.im).expect("string write cannot fail");
    }
    out
}

/// One swept trace plus the context needed downstream: drive power,
/// line attenuation, stage temperature, and an optional grouping label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub trace_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_vna_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_att_db: Option<f64>,
    pub temperature_k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonator_label: Option<String>,
}

/// A sweep manifest: JSON text whose top level is a list of entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SweepManifest {
    pub entries: Vec<ManifestEntry>,
}

pub fn parse_manifest_str(text: &str) -> Result<SweepManifest, IngestError> {
    let mut deserializer = serde_json::Deserializer::from_str(text);
    let manifest: SweepManifest = serde_path_to_error::deserialize(&mut deserializer)
        .map_err(|e| IngestError::ManifestSchema {
            path: e.path().to_string(),
            detail: e.inner().to_string(),
        })?;
    let mut seen: Vec<&str> = Vec::with_capacity(manifest.entries.len());
    for (index, entry) in manifest.entries.iter().enumerate() {
        let field = |field: &str, detail: &str| IngestError::ManifestSchema {
            path: format!("[{index}].{field}"),
            detail: detail.to_string(),
        };
        if entry.trace_path.is_empty() {
            return Err(field("trace_path", "must not be empty"));
        }
        if !(entry.temperature_k > 0.0) || !entry.temperature_k.is_finite() {
            return Err(field("temperature_k", "must be > 0"));
        }
        for (name, value) in [("p_vna_dbm", entry.p_vna_dbm), ("p_att_db", entry.p_att_db)] {
            if value.is_some_and(|v| !v.is_finite()) {
                return Err(field(name, "must be finite when present"));
            }
        }
        if seen.contains(&entry.trace_path.as_str()) {
            return Err(IngestError::DuplicatePath { index, path: entry.trace_path.clone() });
        }
        seen.push(&entry.trace_path);
    }
    Ok(manifest)
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<SweepManifest, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    parse_manifest_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    const REIM: &str = "frequency_hz,re_s21,im_s21\n5.0e9,0.5,0.0\n5.1e9,0.9,0.1\n";

    #[test]
    fn csv_reim_minimal() {
        let t = parse_trace_str(REIM, "csv-reim").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.s21()[0], Complex64::new(0.5, 0.0));
        assert_eq!(t.frequencies_hz()[1], 5.1e9);
    }

    #[test]
    fn csv_dbdeg_half_amplitude() {
        let text = "frequency_hz,mag_db,phase_deg\n5.0e9,-6.0206,0\n5.1e9,-6.0206,90\n";
        let t = parse_trace_str(text, "csv-dbdeg").unwrap();
        assert!((t.s21()[0].re - 0.499_999_995_008).abs() < 1e-9);
        assert_eq!(t.s21()[0].im, 0.0);
        // 90 degrees lands on the imaginary axis up to sin/cos rounding.
        assert!(t.s21()[1].re.abs() < 1e-16);
        assert!((t.s21()[1].im - 0.499_999_995_008).abs() < 1e-9);
    }

    #[test]
    fn reim_and_dbdeg_agree() {
        let mut reim = String::from("frequency_hz,re_s21,im_s21\n");
        let mut dbdeg = String::from("frequency_hz,mag_db,phase_deg\n");
        for k in 0..64 {
            let f = 5.0e9 + 1e6 * k as f64;
            let z = Complex64::from_polar(
                0.3 + 0.6 * (k as f64 / 63.0),
                -2.5 + 5.0 * (k as f64 / 63.0).powi(2),
            );
            reim.push_str(&format!("{},{},{}\n", f, z.re, z.im));
            dbdeg.push_str(&format!(
                "{},{},{}\n",
                f,
                20.0 * z.norm().log10(),
                z.arg().to_degrees()
            ));
        }
        let a = parse_trace_str(&reim, "csv-reim").unwrap();
        let b = parse_trace_str(&dbdeg, "csv-dbdeg").unwrap();
        for (za, zb) in a.s21().iter().zip(b.s21()) {
            assert!((za - zb).norm() <= 1e-12 * za.norm());
        }
    }

    #[test]
    fn header_mismatch_rejected() {
        let cases = [
            "freq_hz,re_s21,im_s21\n1,0,0\n2,0,0\n",
            "frequency_hz,re_s21,im_s21,extra\n1,0,0,0\n2,0,0,0\n",
            "frequency_hz,im_s21,re_s21\n1,0,0\n2,0,0\n",
        ];
        for text in cases {
            assert!(
                matches!(
                    parse_trace_str(text, "csv-reim"),
                    Err(IngestError::MalformedHeader { line: 1, .. })
                ),
                "accepted {text:?}"
            );
        }
    }

    #[test]
    fn descending_grid_names_first_offender() {
        let text = "frequency_hz,re_s21,im_s21\n5.2e9,1,0\n5.1e9,1,0\n5.0e9,1,0\n";
        match parse_trace_str(text, "csv-reim") {
            Err(IngestError::NonMonotonicGrid { line: 3, f_hz, prev_hz }) => {
                assert_eq!(f_hz, 5.1e9);
                assert_eq!(prev_hz, 5.2e9);
            }
            other => panic!("expected non-monotonic at line 3, got {other:?}"),
        }
        let dup = "frequency_hz,re_s21,im_s21\n5.0e9,1,0\n5.0e9,1,0\n";
        assert!(matches!(
            parse_trace_str(dup, "csv-reim"),
            Err(IngestError::NonMonotonicGrid { line: 3, .. })
        ));
    }

    #[test]
    fn non_finite_sample_names_line() {
        let text = "frequency_hz,re_s21,im_s21\n5.0e9,1,0\n5.1e9,nan,0\n";
        assert!(matches!(
            parse_trace_str(text, "csv-reim"),
            Err(IngestError::NonFiniteSample { line: 3 })
        ));
    }

    #[test]
    fn wrong_field_count_and_garbage_rejected() {
        let short = "frequency_hz,re_s21,im_s21\n5.0e9,1\n";
        assert!(matches!(
            parse_trace_str(short, "csv-reim"),
            Err(IngestError::MalformedRecord { line: 2, .. })
        ));
        let garbage = "frequency_hz,re_s21,im_s21\n5.0e9,one,0\n";
        assert!(matches!(
            parse_trace_str(garbage, "csv-reim"),
            Err(IngestError::MalformedRecord { line: 2, .. })
        ));
    }

    const S2P_RI: &str = "\
! fixture dump
# GHz S RI R 50
5.00 0.1 0.0 0.5 0.0 0.1 0.0 0.2 0.0 ! row comment
5.01 0.1 0.0 0.9 0.1 0.1 0.0 0.2 0.0
";

    #[test]
    fn touchstone_ri_extracts_s21() {
        let t = parse_trace_str(S2P_RI, "touchstone").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.frequencies_hz()[0], 5.0e9);
        assert_eq!(t.s21()[0], Complex64::new(0.5, 0.0));
        assert_eq!(t.s21()[1], Complex64::new(0.9, 0.1));
    }

    #[test]
    fn touchstone_units_and_formats() {
        let ma = "# MHz S MA R 50\n5000 1 0 0.5 90 1 0 1 0\n5001 1 0 0.5 90 1 0 1 0\n";
        let t = parse_trace_str(ma, "touchstone").unwrap();
        assert_eq!(t.frequencies_hz()[0], 5.0e9);
        assert!(t.s21()[0].re.abs() < 1e-16);
        assert!((t.s21()[0].im - 0.5).abs() < 1e-15);

        let db = "# Hz S DB R 50\n5.0e9 0 0 -6.0206 0 0 0 0 0\n5.1e9 0 0 -6.0206 0 0 0 0 0\n";
        let t = parse_trace_str(db, "touchstone").unwrap();
        assert!((t.s21()[0].re - 0.499_999_995_008).abs() < 1e-9);

        // Omitted unit and format fall back to the Touchstone defaults
        // (GHz, MA).
        let bare = "# S R 50\n5.0 0.5 0 0.5 0 0.5 0 0.5 0\n5.1 0.5 0 0.5 0 0.5 0 0.5 0\n";
        let t = parse_trace_str(bare, "touchstone").unwrap();
        assert_eq!(t.frequencies_hz()[1], 5.1e9);
        assert!((t.s21()[0].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn touchstone_structure_errors() {
        let no_option = "5.0 0.1 0 0.5 0 0.1 0 0.2 0\n";
        assert!(matches!(
            parse_trace_str(no_option, "touchstone"),
            Err(IngestError::MalformedHeader { line: 1, .. })
        ));
        let duplicate = "# Hz S RI\n# Hz S RI\n";
        assert!(matches!(
            parse_trace_str(duplicate, "touchstone"),
            Err(IngestError::MalformedHeader { line: 2, .. })
        ));
        let wrapped = "# Hz S RI\n5.0e9 0.1 0.0 0.5\n";
        assert!(matches!(
            parse_trace_str(wrapped, "touchstone"),
            Err(IngestError::MalformedRecord { line: 2, .. })
        ));
        let zparams = "# Hz Z RI\n";
        assert!(matches!(
            parse_trace_str(zparams, "touchstone"),
            Err(IngestError::MalformedHeader { line: 1, .. })
        ));
    }

    #[test]
    fn auto_detection_picks_each_format() {
        let dbdeg = "frequency_hz,mag_db,phase_deg\n5.0e9,-6.0206,0\n5.1e9,-6.0206,0\n";
        for (text, name) in [(REIM, "csv-reim"), (dbdeg, "csv-dbdeg"), (S2P_RI, "touchstone")] {
            let registry = FormatRegistry::standard();
            assert_eq!(registry.resolve("auto", text).unwrap().name(), name);
            assert!(parse_trace_str(text, "auto").is_ok());
        }
        assert!(matches!(
            parse_trace_str("who knows\n", "auto"),
            Err(IngestError::UnrecognizedInput)
        ));
        assert!(matches!(
            parse_trace_str(REIM, "hdf5"),
            Err(IngestError::UnknownFormat { .. })
        ));
    }

    #[test]
    fn canonical_round_trip_is_identical() {
        // Awkward values: subnormal-ish exponents, long mantissas.
        let mut text = String::from("frequency_hz,re_s21,im_s21\n");
        for k in 0..32 {
            let f = 5.0e9 + 1e5 * (k as f64) + 0.1234567890123 * k as f64;
            let z = Complex64::new((k as f64 * 0.7).sin() * 0.912345678901234, -1e-17 * k as f64);
            text.push_str(&format!("{},{},{}\n", f, z.re, z.im));
        }
        let once = parse_trace_str(&text, "csv-reim").unwrap();
        let twice = parse_trace_str(&write_trace_csv(&once), "csv-reim").unwrap();
        assert_eq!(once.frequencies_hz(), twice.frequencies_hz());
        assert_eq!(once.s21(), twice.s21());
    }

    #[test]
    fn missing_file_error_names_path() {
        let err = parse_trace("/no/such/trace.csv", "auto").unwrap_err();
        assert!(err.to_string().contains("/no/such/trace.csv"));
    }

    const MANIFEST: &str = r#"[
        {"trace_path": "a.csv", "p_vna_dbm": -35, "p_att_db": -80, "temperature_k": 0.05},
        {"trace_path": "b.csv", "temperature_k": 0.1, "resonator_label": "fr1"}
    ]"#;

    #[test]
    fn manifest_parses_with_absent_optionals() {
        let m = parse_manifest_str(MANIFEST).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[0].p_vna_dbm, Some(-35.0));
        assert_eq!(m.entries[0].p_att_db, Some(-80.0));
        assert_eq!(m.entries[1].p_vna_dbm, None);
        assert_eq!(m.entries[1].resonator_label.as_deref(), Some("fr1"));
        // Round trip keeps absent fields absent.
        let json = serde_json::to_string(&m).unwrap();
        assert!(!json.contains("\"p_vna_dbm\":null"));
        assert_eq!(parse_manifest_str(&json).unwrap(), m);
    }

    #[test]
    fn manifest_schema_violations_carry_field_path() {
        let zero_t = r#"[{"trace_path": "a.csv", "temperature_k": 0.0}]"#;
        match parse_manifest_str(zero_t) {
            Err(IngestError::ManifestSchema { path, .. }) => {
                assert_eq!(path, "[0].temperature_k")
            }
            other => panic!("expected schema error, got {other:?}"),
        }
        let wrong_type = r#"[{"trace_path": "a.csv", "temperature_k": "cold"}]"#;
        match parse_manifest_str(wrong_type) {
            Err(IngestError::ManifestSchema { path, .. }) => {
                assert!(path.contains("temperature_k"), "path = {path}")
            }
            other => panic!("expected schema error, got {other:?}"),
        }
        let unknown = r#"[{"trace_path": "a.csv", "temperature_k": 0.05, "vna": 1}]"#;
        match parse_manifest_str(unknown) {
            Err(IngestError::ManifestSchema { detail, .. }) => {
                assert!(detail.contains("vna"), "detail = {detail}")
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_duplicate_paths_rejected() {
        let dup = r#"[
            {"trace_path": "a.csv", "temperature_k": 0.05},
            {"trace_path": "a.csv", "temperature_k": 0.1}
        ]"#;
        match parse_manifest_str(dup) {
            Err(IngestError::DuplicatePath { index: 1, path }) => assert_eq!(path, "a.csv"),
            other => panic!("expected duplicate-path error, got {other:?}"),
        }
    }
}
