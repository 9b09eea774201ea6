//! Trace file formats behind a common strategy interface.
//!
//! Each supported on-disk format implements [`TraceFormat`]; the
//! [`FormatRegistry`] owns one instance of each and resolves either an
//! explicit format name or, in auto mode, sniffs the input head. New
//! formats plug in by implementing the trait and registering.

use super::IngestError;
use crate::s21::{ComplexTrace, TraceMetadata};
use num_complex::Complex64;

/// A parser for one trace file format.
///
/// Implementations are pure: no state, no I/O. `Send + Sync` so a shared
/// registry can serve concurrent per-file parses.
pub trait TraceFormat: Send + Sync {
    /// Identifier used for explicit selection, e.g. `"csv-reim"`.
    fn name(&self) -> &'static str;
    /// Cheap look at the beginning of the input (first few lines) to
    /// decide whether this format plausibly matches. Used by auto mode;
    /// must not produce errors.
    fn sniff(&self, head: &str) -> bool;
    /// Parse the complete UTF-8 text of a trace file.
    fn parse(&self, text: &str) -> Result<ComplexTrace, IngestError>;
}

/// Registry of available formats; `standard()` holds csv-reim,
/// csv-dbdeg and touchstone in sniffing order.
pub struct FormatRegistry {
    formats: Vec<Box<dyn TraceFormat>>,
}

impl FormatRegistry {
    pub fn standard() -> Self {
        let mut r = FormatRegistry { formats: Vec::new() };
        r.register(Box::new(CsvReIm));
        r.register(Box::new(CsvDbDeg));
        r.register(Box::new(Touchstone));
        r
    }

    pub fn register(&mut self, format: Box<dyn TraceFormat>) {
        self.formats.push(format);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.formats.iter().map(|f| f.name()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&dyn TraceFormat> {
        self.formats.iter().find(|f| f.name() == name).map(|f| f.as_ref())
    }

    /// Resolve `"auto"` by sniffing, anything else by name.
    pub fn resolve(&self, format: &str, text: &str) -> Result<&dyn TraceFormat, IngestError> {
        if format == "auto" {
            return self
                .formats
                .iter()
                .find(|f| f.sniff(text))
                .map(|f| f.as_ref())
                .ok_or(IngestError::UnrecognizedInput);
        }
        self.get(format)
            .ok_or_else(|| IngestError::UnknownFormat { requested: format.to_string(), known: self.names().join(", ") })
    }
}

/// First non-blank line of the input, trimmed.
fn first_content_line(text: &str) -> Option<&str> {
    text.lines().map(str::trim).find(|l| !l.is_empty())
}

/// Numbered non-blank lines: (1-based line number, trimmed content).
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_field(s: &str, line: usize) -> Result<f64, IngestError> {
    s.trim().parse::<f64>().map_err(|_| IngestError::MalformedRecord {
        line,
        detail: format!("{s:?} is not a number"),
    })
}

/// Shared tail of every parser: per-line finiteness and strict grid
/// monotonicity, so errors carry the first offending line.
fn collect_trace(rows: Vec<(usize, f64, Complex64)>) -> Result<ComplexTrace, IngestError> {
    let mut freqs = Vec::with_capacity(rows.len());
    let mut s21 = Vec::with_capacity(rows.len());
    for (line, f, z) in rows {
        if !f.is_finite() || !z.re.is_finite() || !z.im.is_finite() {
            return Err(IngestError::NonFiniteSample { line });
        }
        if let Some(&prev) = freqs.last() {
            if f <= prev {
                return Err(IngestError::NonMonotonicGrid { line, f_hz: f, prev_hz: prev });
            }
        }
        freqs.push(f);
        s21.push(z);
    }
    Ok(ComplexTrace::new(freqs, s21, TraceMetadata::default())?)
}

/// Comma-separated columns with a mandatory exact header. Unknown or
/// reordered columns are rejected outright.
fn parse_csv(
    text: &str,
    header: &'static str,
    to_complex: impl Fn(f64, f64) -> Complex64,
) -> Result<ComplexTrace, IngestError> {
    let mut lines = content_lines(text);
    match lines.next() {
        Some((line, got)) if got != header => {
            return Err(IngestError::MalformedHeader {
                line,
                detail: format!("expected {header:?}, found {got:?}"),
            })
        }
        None => {
            return Err(IngestError::MalformedHeader { line: 1, detail: "empty input".into() })
        }
        _ => {}
    }
    let mut rows = Vec::new();
    for (line, content) in lines {
        let fields: Vec<&str> = content.split(',').collect();
        if fields.len() != 3 {
            return Err(IngestError::MalformedRecord {
                line,
                detail: format!("expected 3 comma-separated values, got {}", fields.len()),
            });
        }
        let f = parse_field(fields[0], line)?;
        let a = parse_field(fields[1], line)?;
        let b = parse_field(fields[2], line)?;
        rows.push((line, f, to_complex(a, b)));
    }
    collect_trace(rows)
}

/// `frequency_hz,re_s21,im_s21`: Cartesian S21 samples. This is also the
/// canonical serialization format.
pub struct CsvReIm;

pub const CSV_REIM_HEADER: &str = "frequency_hz,re_s21,im_s21";
pub const CSV_DBDEG_HEADER: &str = "frequency_hz,mag_db,phase_deg";

impl TraceFormat for CsvReIm {
    fn name(&self) -> &'static str {
        "csv-reim"
    }
    fn sniff(&self, head: &str) -> bool {
        first_content_line(head) == Some(CSV_REIM_HEADER)
    }
    fn parse(&self, text: &str) -> Result<ComplexTrace, IngestError> {
        parse_csv(text, CSV_REIM_HEADER, Complex64::new)
    }
}

/// `frequency_hz,mag_db,phase_deg`: polar S21 samples,
/// `s21 = 10^(mag_db/20) e^(i phase_deg pi/180)`.
pub struct CsvDbDeg;

impl TraceFormat for CsvDbDeg {
    fn name(&self) -> &'static str {
        "csv-dbdeg"
    }
    fn sniff(&self, head: &str) -> bool {
        first_content_line(head) == Some(CSV_DBDEG_HEADER)
    }
    fn parse(&self, text: &str) -> Result<ComplexTrace, IngestError> {
        parse_csv(text, CSV_DBDEG_HEADER, |mag_db, phase_deg| {
            Complex64::from_polar(10f64.powf(mag_db / 20.0), phase_deg.to_radians())
        })
    }
}

/// Two-port Touchstone (.s2p): whitespace-separated records honoring the
/// option line's frequency unit and sample format. One record per line
/// (`f  S11  S21  S12  S22` as value pairs); wrapped records are not
/// accepted. `!` starts a comment.
pub struct Touchstone;

struct TouchstoneOptions {
    freq_scale: f64,
    format: SampleFormat,
}

#[derive(Clone, Copy)]
enum SampleFormat {
    RealImag,
    MagAngle,
    DbAngle,
}

impl SampleFormat {
    fn to_complex(self, a: f64, b: f64) -> Complex64 {
        match self {
            SampleFormat::RealImag => Complex64::new(a, b),
            SampleFormat::MagAngle => Complex64::from_polar(a, b.to_radians()),
            SampleFormat::DbAngle => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }
}

fn parse_option_line(content: &str, line: usize) -> Result<TouchstoneOptions, IngestError> {
    let bad = |detail: String| IngestError::MalformedHeader { line, detail };
    let mut freq_scale = None;
    let mut format = None;
    let mut tokens = content[1..].split_whitespace().map(str::to_ascii_uppercase).peekable();
    while let Some(tok) = tokens.next() {
        match tok.as_str() {
            "HZ" => freq_scale = Some(1.0),
            "KHZ" => freq_scale = Some(1e3),
            "MHZ" => freq_scale = Some(1e6),
            "GHZ" => freq_scale = Some(1e9),
            "S" => {}
            "RI" => format = Some(SampleFormat::RealImag),
            "MA" => format = Some(SampleFormat::MagAngle),
            "DB" => format = Some(SampleFormat::DbAngle),
            "R" => {
                let r = tokens
                    .next()
                    .ok_or_else(|| bad("option line: R without a resistance value".into()))?;
                r.parse::<f64>()
                    .map_err(|_| bad(format!("option line: invalid resistance {r:?}")))?;
            }
            other if matches!(other, "Y" | "Z" | "G" | "H") => {
                return Err(bad(format!("only S-parameters are supported, found {other}")))
            }
            other => return Err(bad(format!("unrecognized option token {other:?}"))),
        }
    }
    // Touchstone defaults: GHz, MA, S, R 50.
    Ok(TouchstoneOptions {
        freq_scale: freq_scale.unwrap_or(1e9),
        format: format.unwrap_or(SampleFormat::MagAngle),
    })
}

impl TraceFormat for Touchstone {
    fn name(&self) -> &'static str {
        "touchstone"
    }
    fn sniff(&self, head: &str) -> bool {
        head.lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('!'))
            .is_some_and(|l| l.starts_with('#'))
    }
    fn parse(&self, text: &str) -> Result<ComplexTrace, IngestError> {
        let mut options: Option<TouchstoneOptions> = None;
        let mut rows = Vec::new();
        for (line, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
            let content = raw.split('!').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if content.starts_with('#') {
                if options.is_some() {
                    return Err(IngestError::MalformedHeader {
                        line,
                        detail: "duplicate option line".into(),
                    });
                }
                options = Some(parse_option_line(content, line)?);
                continue;
            }
            let Some(opts) = &options else {
                return Err(IngestError::MalformedHeader {
                    line,
                    detail: "data before the # option line".into(),
                });
            };
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 9 {
                return Err(IngestError::MalformedRecord {
                    line,
                    detail: format!(
                        "expected 9 whitespace-separated values for a 2-port record, got {}",
                        fields.len()
                    ),
                });
            }
            let values: Vec<f64> = fields
                .iter()
                .map(|s| parse_field(s, line))
                .collect::<Result<_, _>>()?;
            // Record order is f, S11, S21, S12, S22; S21 is the pair at
            // indices 3, 4.
            let f = values[0] * opts.freq_scale;
            rows.push((line, f, opts.format.to_complex(values[3], values[4])));
        }
        if options.is_none() {
            return Err(IngestError::MalformedHeader {
                line: 1,
                detail: "missing # option line".into(),
            });
        }
        collect_trace(rows)
    }
}
