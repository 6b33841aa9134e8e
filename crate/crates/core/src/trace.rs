//! Telemetry traces: one CSV row per control tick.
//!
//! ```text
//! # format=1
//! t,seq,phase,depth_mm,endoforce_raw_n,endoforce_filt_n,plate_n,end_n,sum_filt_n,grip,event
//! 0.0000000000000000e0,0,grasping,0.0000000000000000e0,...,released,phase:grasping|gripper:rotate_cw
//! ```
//!
//! Floats are written in scientific notation with 17 significant digits so a
//! written trace parses back bit for bit. `event` holds zero or more
//! `|`-separated tags: `phase:<phase>`, `gripper:<command>` or `halt`. The file
//! always ends with a newline.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gripper::{Grip, GripperCommand};
use crate::signal::{moving_average, rmse, stddev, FilterSpec};
use crate::transport::Phase;

pub const FORMAT_LINE: &str = "# format=1";

pub const COLUMNS: [&str; 11] = [
    "t",
    "seq",
    "phase",
    "depth_mm",
    "endoforce_raw_n",
    "endoforce_filt_n",
    "plate_n",
    "end_n",
    "sum_filt_n",
    "grip",
    "event",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Phase(Phase),
    Gripper(GripperCommand),
    Halt,
}

impl Event {
    fn write_tag(&self, out: &mut String) {
        match self {
            Event::Phase(p) => {
                let _ = write!(out, "phase:{}", p.tag());
            }
            Event::Gripper(c) => {
                let _ = write!(out, "gripper:{}", c.tag());
            }
            Event::Halt => out.push_str("halt"),
        }
    }

    fn parse(tag: &str) -> Option<Self> {
        if tag == "halt" {
            return Some(Event::Halt);
        }
        if let Some(p) = tag.strip_prefix("phase:") {
            return Phase::from_tag(p).map(Event::Phase);
        }
        tag.strip_prefix("gripper:")
            .and_then(GripperCommand::from_tag)
            .map(Event::Gripper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub t: f64,
    pub seq: u64,
    pub phase: Phase,
    pub depth_mm: f64,
    pub endoforce_raw_n: f64,
    pub endoforce_filt_n: f64,
    pub plate_n: f64,
    pub end_n: f64,
    pub sum_filt_n: f64,
    pub grip: Grip,
    pub events: Vec<Event>,
}

fn grip_tag(g: Grip) -> &'static str {
    match g {
        Grip::Released => "released",
        Grip::Gripped => "gripped",
    }
}

fn push_float(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

/// Serializes records to the trace text format.
pub fn format_trace(records: &[TelemetryRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 256);
    out.push_str(FORMAT_LINE);
    out.push('\n');
    out.push_str(&COLUMNS.join(","));
    out.push('\n');
    for r in records {
        push_float(&mut out, r.t);
        let _ = write!(out, ",{},{},", r.seq, r.phase.tag());
        for v in [
            r.depth_mm,
            r.endoforce_raw_n,
            r.endoforce_filt_n,
            r.plate_n,
            r.end_n,
            r.sum_filt_n,
        ] {
            push_float(&mut out, v);
            out.push(',');
        }
        out.push_str(grip_tag(r.grip));
        out.push(',');
        for (i, e) in r.events.iter().enumerate() {
            if i > 0 {
                out.push('|');
            }
            e.write_tag(&mut out);
        }
        out.push('\n');
    }
    out
}

pub fn write_trace(records: &[TelemetryRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_trace(records)).map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TelemetryRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, &path.display().to_string())
}

/// Strict parser for the trace format. `origin` labels diagnostics.
pub fn parse_trace(text: &str, origin: &str) -> Result<Vec<TelemetryRecord>> {
    let err = |line: usize, column: &str, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        column: column.to_string(),
        message,
    };
    if text.is_empty() {
        return Err(err(1, "", "empty file".into()));
    }
    let lines: Vec<&str> = text.split('\n').collect();
    // a well-formed file ends with '\n', leaving one empty trailing piece
    let (last, body) = lines.split_last().expect("split yields at least one piece");
    if !last.is_empty() {
        return Err(err(lines.len(), "", "truncated final line (missing newline)".into()));
    }
    let mut it = body.iter().enumerate().map(|(i, l)| (i + 1, *l));

    match it.next() {
        Some((_, l)) if l == FORMAT_LINE => {}
        Some((n, l)) => return Err(err(n, "", format!("expected `{FORMAT_LINE}`, found `{l}`"))),
        None => return Err(err(1, "", "missing format line".into())),
    }
    match it.next() {
        Some((n, l)) => {
            let found: Vec<&str> = l.split(',').collect();
            for (i, expected) in COLUMNS.iter().enumerate() {
                match found.get(i) {
                    Some(f) if f == expected => {}
                    Some(f) => return Err(err(n, expected, format!("header mismatch: found `{f}`"))),
                    None => return Err(err(n, expected, "header column missing".into())),
                }
            }
            if found.len() > COLUMNS.len() {
                return Err(err(n, found[COLUMNS.len()], "unexpected extra header column".into()));
            }
        }
        None => return Err(err(2, "", "missing header line".into())),
    }

    let mut records: Vec<TelemetryRecord> = Vec::new();
    for (n, line) in it {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < COLUMNS.len() {
            return Err(err(n, COLUMNS[fields.len()], "missing column".into()));
        }
        if fields.len() > COLUMNS.len() {
            return Err(err(
                n,
                "",
                format!("{} fields, expected {}", fields.len(), COLUMNS.len()),
            ));
        }
        let float = |i: usize| -> Result<f64> {
            let raw = fields[i];
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() && is_plain_number(raw) => Ok(v),
                _ => Err(err(n, COLUMNS[i], format!("malformed number `{raw}`"))),
            }
        };
        let seq: u64 = fields[1]
            .parse()
            .ok()
            .filter(|_| fields[1].bytes().all(|b| b.is_ascii_digit()))
            .ok_or_else(|| err(n, "seq", format!("malformed sequence number `{}`", fields[1])))?;
        let phase =
            Phase::from_tag(fields[2]).ok_or_else(|| err(n, "phase", format!("unknown phase `{}`", fields[2])))?;
        let grip = match fields[9] {
            "released" => Grip::Released,
            "gripped" => Grip::Gripped,
            other => return Err(err(n, "grip", format!("unknown grip `{other}`"))),
        };
        let events = if fields[10].is_empty() {
            Vec::new()
        } else {
            fields[10]
                .split('|')
                .map(|tag| Event::parse(tag).ok_or_else(|| err(n, "event", format!("unknown event `{tag}`"))))
                .collect::<Result<Vec<_>>>()?
        };
        let record = TelemetryRecord {
            t: float(0)?,
            seq,
            phase,
            depth_mm: float(3)?,
            endoforce_raw_n: float(4)?,
            endoforce_filt_n: float(5)?,
            plate_n: float(6)?,
            end_n: float(7)?,
            sum_filt_n: float(8)?,
            grip,
            events,
        };
        if let Some(prev) = records.last() {
            if record.seq <= prev.seq {
                return Err(err(
                    n,
                    "seq",
                    format!("sequence {} does not follow {}", record.seq, prev.seq),
                ));
            }
            if record.t < prev.t {
                return Err(err(n, "t", format!("time {} precedes {}", record.t, prev.t)));
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Decimal or scientific literal: digits, sign, '.', 'e'/'E' only.
fn is_plain_number(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'-' | b'+' | b'.' | b'e' | b'E'))
}

/// Evaluation statistics of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// RMSE between the filtered device channel and the filtered reference sum, N.
    pub rmse_n: f64,
    /// Population std of the same residual, N.
    pub endoforce_std_n: f64,
}

/// Metrics from already-filtered device and reference-sum channels.
pub fn metrics_from_filtered(endoforce_filt: &[f64], sum_filt: &[f64]) -> Result<Metrics> {
    let rmse_n = rmse(endoforce_filt, sum_filt)?;
    let residual: Vec<f64> = endoforce_filt.iter().zip(sum_filt).map(|(a, b)| a - b).collect();
    let endoforce_std_n = if residual.len() >= 2 { stddev(&residual)? } else { 0.0 };
    Ok(Metrics {
        rmse_n,
        endoforce_std_n,
    })
}

/// Recomputes the filtered channels from the raw columns and evaluates them.
pub fn replay_metrics(records: &[TelemetryRecord], filter: FilterSpec) -> Result<Metrics> {
    if records.is_empty() {
        return Err(Error::domain("replay of an empty trace"));
    }
    let column = |f: fn(&TelemetryRecord) -> f64| -> Vec<f64> {
        moving_average(&records.iter().map(f).collect::<Vec<_>>(), filter)
    };
    let endo = column(|r| r.endoforce_raw_n);
    let plate = column(|r| r.plate_n);
    let end = column(|r| r.end_n);
    let sum: Vec<f64> = plate.iter().zip(&end).map(|(p, e)| p + e).collect();
    metrics_from_filtered(&endo, &sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seq: u64) -> TelemetryRecord {
        TelemetryRecord {
            t: seq as f64 / 125.0,
            seq,
            phase: Phase::Advancing,
            depth_mm: 0.08 * seq as f64,
            endoforce_raw_n: 0.1 + seq as f64 * 1e-3,
            endoforce_filt_n: 0.1,
            plate_n: -0.0123456789012345,
            end_n: 0.0,
            sum_filt_n: 1.0 / 3.0,
            grip: Grip::Gripped,
            events: if seq == 1 {
                vec![Event::Phase(Phase::Advancing), Event::Gripper(GripperCommand::RotateCw)]
            } else {
                vec![]
            },
        }
    }

    #[test]
    fn empty_run_is_header_only() {
        let text = format_trace(&[]);
        assert_eq!(text, format!("{FORMAT_LINE}\n{}\n", COLUMNS.join(",")));
        assert!(parse_trace(&text, "x").unwrap().is_empty());
    }

    #[test]
    fn round_trip_is_exact() {
        let records: Vec<_> = (0..20).map(record).collect();
        let back = parse_trace(&format_trace(&records), "x").unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn floats_carry_at_least_nine_significant_digits() {
        let text = format_trace(&[record(3)]);
        let row = text.lines().nth(2).unwrap();
        let t = row.split(',').next().unwrap();
        let mantissa = t.split('e').next().unwrap().replace(['.', '-'], "");
        assert!(mantissa.len() >= 9, "{t}");
    }

    #[test]
    fn shuffled_header_names_first_mismatch() {
        let text = format_trace(&[record(0)]).replacen("t,seq,phase", "t,phase,seq", 1);
        match parse_trace(&text, "x") {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, "seq");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_final_line_rejected_at_last_line() {
        let text = format_trace(&[record(0), record(1)]);
        let cut = &text[..text.len() - 7];
        match parse_trace(cut, "x") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_monotone_sequence_rejected() {
        let text = format_trace(&[record(2), record(1)]);
        assert!(matches!(
            parse_trace(&text, "x"),
            Err(Error::Parse { column, .. }) if column == "seq"
        ));
    }

    #[test]
    fn malformed_numbers_rejected() {
        let good = format_trace(&[record(0)]);
        let row = good.lines().nth(2).unwrap().to_string();
        for bad in ["abc", "", "1.0.0", "NaN", "inf", "0x1p3", "1e"] {
            let mut fields: Vec<&str> = row.split(',').collect();
            fields[4] = bad;
            let text = format!("{FORMAT_LINE}\n{}\n{}\n", COLUMNS.join(","), fields.join(","));
            assert!(
                matches!(parse_trace(&text, "x"), Err(Error::Parse { ref column, line: 3, .. }) if column == "endoforce_raw_n"),
                "{bad}"
            );
        }
    }

    #[test]
    fn replay_of_zero_trace_is_zero() {
        let zeros: Vec<_> = (0..10)
            .map(|i| TelemetryRecord {
                endoforce_raw_n: 0.0,
                plate_n: 0.0,
                end_n: 0.0,
                ..record(i)
            })
            .collect();
        let m = replay_metrics(&zeros, FilterSpec::default()).unwrap();
        assert_eq!(m.rmse_n, 0.0);
        assert_eq!(m.endoforce_std_n, 0.0);
        assert!(replay_metrics(&[], FilterSpec::default()).is_err());
    }
}
