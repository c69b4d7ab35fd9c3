//! Pulse files.
//!
//! JSON documents carry a version field and a kind:
//!
//! ```json
//! {"schema": 1, "kind": "shaped_pulse", "pulse": {"channels": ["2y"], "segment_duration": 5e-5, "amplitudes": [[44.0], ...]}}
//! {"schema": 1, "kind": "sequence", "sequence": [{"type": "delay", "duration": 0.005}, ...], "dante": {...}}
//! ```
//!
//! Amplitudes are stored per channel (Cartesian) and round-trip bit-exactly.
//! The CSV shape format is for plotting and external tools: a header line
//! `# channels=2y,3y dt=5e-5`, a column line, then one row per segment with
//! the segment start time and, for every driven spin, the amplitude in Hz and
//! the phase in degrees (0 = x, 90 = y).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dante::{DanteAnnotation, DanteSequence};
use crate::error::{Error, Result};
use crate::pulse::ShapedPulse;
use crate::sequence::EventSequence;
use crate::system::{Axis, ControlChannel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseDocument {
    ShapedPulse {
        pulse: ShapedPulse,
    },
    Sequence {
        sequence: EventSequence,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dante: Option<DanteAnnotation>,
    },
}

impl From<ShapedPulse> for PulseDocument {
    fn from(pulse: ShapedPulse) -> Self {
        PulseDocument::ShapedPulse { pulse }
    }
}

impl From<EventSequence> for PulseDocument {
    fn from(sequence: EventSequence) -> Self {
        PulseDocument::Sequence {
            sequence,
            dante: None,
        }
    }
}

impl From<DanteSequence> for PulseDocument {
    fn from(d: DanteSequence) -> Self {
        PulseDocument::Sequence {
            sequence: d.sequence,
            dante: Some(d.annotation),
        }
    }
}

impl PulseDocument {
    pub fn into_shaped_pulse(self) -> Result<ShapedPulse> {
        match self {
            PulseDocument::ShapedPulse { pulse } => Ok(pulse),
            PulseDocument::Sequence { .. } => {
                Err(Error::InvalidPulse("document holds a sequence, not a shaped pulse".into()))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Versioned {
    schema: u32,
    #[serde(flatten)]
    document: PulseDocument,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PulseFormat {
    Json,
    CsvShape,
}

impl PulseFormat {
    /// `.csv` files are CSV shapes; everything else is JSON.
    pub fn from_path(path: impl AsRef<Path>) -> Self {
        match path.as_ref().extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => PulseFormat::CsvShape,
            _ => PulseFormat::Json,
        }
    }
}

pub fn to_json_string(doc: &PulseDocument) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Versioned {
        schema: SCHEMA_VERSION,
        document: doc.clone(),
    })?)
}

/// Parse a JSON pulse document; `origin` names the source in errors.
pub fn from_json_str(s: &str, origin: &str) -> Result<PulseDocument> {
    let v: Versioned = serde_json::from_str(s).map_err(|e| Error::Parse {
        path: origin.to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if v.schema != SCHEMA_VERSION {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: 1,
            message: format!("unsupported schema version {}", v.schema),
        });
    }
    Ok(v.document)
}

/// Spins of the pulse's channels in order of first appearance.
fn driven_spins(channels: &[ControlChannel]) -> Vec<usize> {
    let mut spins = Vec::new();
    for c in channels {
        if !spins.contains(&c.spin) {
            spins.push(c.spin);
        }
    }
    spins
}

/// CSV shape of a pulse; one row per segment.
pub fn to_csv_shape(pulse: &ShapedPulse) -> String {
    let channels = pulse.channels();
    let spins = driven_spins(channels);
    let labels: Vec<String> = channels.iter().map(ControlChannel::label).collect();
    let mut out = format!(
        "# channels={} dt={:e}\nt_start",
        labels.join(","),
        pulse.segment_duration()
    );
    for s in &spins {
        let _ = write!(out, ",spin{s}_amp_hz,spin{s}_phase_deg");
    }
    out.push('\n');
    let dt = pulse.segment_duration();
    for (j, row) in pulse.amplitudes().rows().into_iter().enumerate() {
        let _ = write!(out, "{:e}", j as f64 * dt);
        for s in &spins {
            let (mut ux, mut uy) = (0.0, 0.0);
            for (c, u) in channels.iter().zip(row.iter()) {
                if c.spin == *s {
                    match c.axis {
                        Axis::X => ux += u,
                        Axis::Y => uy += u,
                    }
                }
            }
            let amp = ux.hypot(uy);
            let phase = if amp == 0.0 {
                0.0
            } else {
                uy.atan2(ux).to_degrees()
            };
            let _ = write!(out, ",{amp},{phase}");
        }
        out.push('\n');
    }
    out
}

/// Read a CSV shape back into Cartesian channel amplitudes. Amplitudes pass
/// through a polar representation, so values agree to rounding only.
pub fn from_csv_shape(s: &str, origin: &str) -> Result<ShapedPulse> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = s.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| err(1, "missing '# channels=... dt=...' header".into()))?;
    let mut channels = None;
    let mut dt = None;
    for field in header.split_whitespace() {
        if let Some(v) = field.strip_prefix("channels=") {
            channels = Some(
                v.split(',')
                    .map(ControlChannel::parse)
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| err(1, e.to_string()))?,
            );
        } else if let Some(v) = field.strip_prefix("dt=") {
            dt = Some(v.parse::<f64>().map_err(|e| err(1, format!("dt: {e}")))?);
        }
    }
    let channels = channels.ok_or_else(|| err(1, "header lacks channels=".into()))?;
    let dt = dt.ok_or_else(|| err(1, "header lacks dt=".into()))?;
    let spins = driven_spins(&channels);
    let width = 1 + 2 * spins.len();
    let (cl, cols) = lines.next().ok_or_else(|| err(2, "missing column line".into()))?;
    if cols.split(',').count() != width {
        return Err(err(cl, format!("expected {width} columns")));
    }
    let mut rows: Vec<f64> = Vec::new();
    let mut segments = 0;
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(err(ln, format!("expected {width} fields, found {}", fields.len())));
        }
        let mut vals = Vec::with_capacity(width);
        for (k, f) in fields.iter().enumerate() {
            vals.push(
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| err(ln, format!("field {}: {e}", k + 1)))?,
            );
        }
        for c in &channels {
            let i = spins.iter().position(|s| *s == c.spin).unwrap();
            let (amp, phase) = (vals[1 + 2 * i], vals[2 + 2 * i] * PI / 180.0);
            rows.push(match c.axis {
                Axis::X => amp * phase.cos(),
                Axis::Y => amp * phase.sin(),
            });
        }
        segments += 1;
    }
    let a = Array2::from_shape_vec((segments, channels.len()), rows)
        .map_err(|e| err(0, e.to_string()))?;
    ShapedPulse::new(channels, dt, a)
}

/// Write `doc` to `path`. CSV shapes accept shaped pulses only.
pub fn write_pulse(path: impl AsRef<Path>, doc: &PulseDocument, format: PulseFormat) -> Result<()> {
    let text = match (format, doc) {
        (PulseFormat::Json, _) => to_json_string(doc)?,
        (PulseFormat::CsvShape, PulseDocument::ShapedPulse { pulse }) => to_csv_shape(pulse),
        (PulseFormat::CsvShape, PulseDocument::Sequence { .. }) => {
            return Err(Error::InvalidConfig("CSV shapes hold shaped pulses only".into()))
        }
    };
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_pulse(path: impl AsRef<Path>, format: PulseFormat) -> Result<PulseDocument> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let origin = path.display().to_string();
    match format {
        PulseFormat::Json => from_json_str(&text, &origin),
        PulseFormat::CsvShape => Ok(from_csv_shape(&text, &origin)?.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{conventional_sequence, HardPulse};
    use crate::system::SpinSystem;

    fn two_channel() -> ShapedPulse {
        let a = Array2::from_shape_fn((5, 2), |(j, c)| 0.1 + j as f64 * 13.37 - c as f64 * 40.0);
        ShapedPulse::new(vec![ControlChannel::y(2), ControlChannel::x(2)], 1.0 / 3.0e4, a).unwrap()
    }

    #[test]
    fn json_round_trip_is_exact() {
        let doc: PulseDocument = two_channel().into();
        let back = from_json_str(&to_json_string(&doc).unwrap(), "mem").unwrap();
        assert_eq!(back, doc);
        let mut seq = conventional_sequence(&SpinSystem::uniform_chain(4, 88.05).unwrap()).unwrap();
        seq.pulse(HardPulse::finite(1, 0.3, -1.1, 1234.5).unwrap()).unwrap();
        let doc: PulseDocument = seq.into();
        assert_eq!(from_json_str(&to_json_string(&doc).unwrap(), "mem").unwrap(), doc);
    }

    #[test]
    fn csv_rows_and_round_trip() {
        let p = two_channel();
        let csv = to_csv_shape(&p);
        assert_eq!(csv.lines().count(), 2 + p.segment_count());
        let back = from_csv_shape(&csv, "mem").unwrap();
        assert_eq!(back.channels(), p.channels());
        for (a, b) in back.amplitudes().iter().zip(p.amplitudes()) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn malformed_inputs_report_lines() {
        let bad = "# channels=2y dt=1e-5\nt_start,spin2_amp_hz,spin2_phase_deg\n0,1,90\n1e-5,abc,90\n";
        match from_csv_shape(bad, "f.csv") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("field 2"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            from_json_str("{\"schema\": 2, \"kind\": \"sequence\", \"sequence\": []}", "x"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            from_json_str("{\n\"schema\": 1,\n\"kind\": \"nope\"}", "x"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn csv_refuses_sequences() {
        let dir = tempfile::tempdir().unwrap();
        let doc: PulseDocument = EventSequence::new().into();
        assert!(write_pulse(dir.path().join("s.csv"), &doc, PulseFormat::CsvShape).is_err());
        let path = dir.path().join("p.json");
        write_pulse(&path, &two_channel().into(), PulseFormat::from_path(&path)).unwrap();
        let back = read_pulse(&path, PulseFormat::Json).unwrap().into_shaped_pulse().unwrap();
        assert_eq!(back, two_channel());
    }
}
