//! Artifact files: JSON with 17 significant digits, CSV via the `csv` crate.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::flow::{FlowTrace, Snapshot};
use crate::oracle::HomogeneousSample;
use crate::transition::TransitionCurve;

pub const TRACE_FILE: &str = "trace.json";
pub const TRAJECTORY_FILE: &str = "trajectories.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// Scientific notation with 17 significant digits, enough to round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON whose floats carry 17 significant digits. Non-finite values
/// become `null` (done by `serde_json` before the formatter is reached).
struct PreciseFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for PreciseFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Io(format!("json serialization: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| io_error(path, e)
}

#[derive(Serialize)]
struct TraceDocument<'a> {
    model_hash: &'a str,
    #[serde(flatten)]
    trace: &'a FlowTrace,
}

#[derive(Deserialize)]
struct StoredTrace {
    #[serde(default)]
    model_hash: Option<String>,
    #[serde(flatten)]
    trace: FlowTrace,
}

/// Writes `trace.json`, `trajectories.csv` (when tracking was on) and
/// `snapshots/snapshot_XXXX.csv` into `dir`.
pub fn write_trace(dir: &Path, trace: &FlowTrace, model_hash: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    write_json(&dir.join(TRACE_FILE), &TraceDocument { model_hash, trace })?;
    if !trace.trajectories.is_empty() {
        write_trajectories(&dir.join(TRAJECTORY_FILE), trace)?;
    }
    let snap_dir = dir.join(SNAPSHOT_DIR);
    fs::create_dir_all(&snap_dir).map_err(|e| io_error(&snap_dir, e))?;
    for (k, snap) in trace.snapshots.iter().enumerate() {
        write_snapshot(&snap_dir.join(format!("snapshot_{k:04}.csv")), snap, trace.n, model_hash)?;
    }
    Ok(())
}

/// Reads `trace.json` from a trace directory, returning the trace and its
/// model hash.
pub fn read_trace(dir: &Path) -> Result<(FlowTrace, Option<String>)> {
    let path = dir.join(TRACE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
    let stored: StoredTrace = serde_json::from_str(&text).map_err(|e| io_error(&path, e))?;
    Ok((stored.trace, stored.model_hash))
}

fn write_trajectories(path: &Path, trace: &FlowTrace) -> Result<()> {
    let err = csv_error(path);
    let mut w = csv_writer(path)?;
    let mut header = vec!["seed".to_string(), "axis".into(), "sign".into(), "t".into()];
    header.extend((1..=trace.n).map(|i| format!("x{i}")));
    header.push("u".into());
    w.write_record(&header).map_err(&err)?;
    for tr in &trace.trajectories {
        let (axis, sign) = match tr.companion {
            Some((a, s)) => ((a + 1).to_string(), s.to_string()),
            None => (String::new(), String::new()),
        };
        for s in &tr.samples {
            let mut row = vec![tr.seed.to_string(), axis.clone(), sign.clone(), fmt_f64(s.t)];
            row.extend(tr.origin.iter().zip(&s.displacement).map(|(o, d)| fmt_f64(o + d)));
            row.push(fmt_f64(s.u));
            w.write_record(&row).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn write_snapshot(path: &Path, snap: &Snapshot, n: usize, model_hash: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut out = BufWriter::new(file);
    let meta = serde_json::json!({ "step": snap.step, "t": fmt_f64(snap.t), "model_hash": model_hash });
    writeln!(out, "# {meta}").map_err(|e| io_error(path, e))?;
    let err = csv_error(path);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend(["u".into(), "v".into()]);
    header.extend((1..=n).map(|i| format!("kappa{i}")));
    header.push("F".into());
    w.write_record(&header).map_err(&err)?;
    for k in 0..snap.u.len() {
        let mut row: Vec<String> = snap.x[k].iter().map(|&x| fmt_f64(x)).collect();
        row.push(fmt_f64(snap.u[k]));
        row.push(fmt_f64(snap.v[k]));
        row.extend(snap.kappa[k].iter().map(|&x| fmt_f64(x)));
        row.push(fmt_f64(snap.f[k]));
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Oracle samples as CSV with columns `t, u, u_tilde, F`.
pub fn write_oracle_csv<W: Write>(out: W, samples: &[HomogeneousSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Io(format!("oracle csv: {e}"));
    w.write_record(["t", "u", "u_tilde", "F"]).map_err(err)?;
    for s in samples {
        w.write_record([fmt_f64(s.t), fmt_f64(s.u), fmt_f64(s.u_tilde), fmt_f64(s.f_value)])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Io(format!("oracle csv: {e}")))
}

/// One row per seed, branch and node with every component of the curve.
pub fn write_transition_csv(path: &Path, curve: &TransitionCurve) -> Result<()> {
    let err = csv_error(path);
    let mut w = csv_writer(path)?;
    let names: Vec<String> = curve
        .seeds
        .first()
        .map(|s| s.components.iter().map(|c| c.name.clone()).collect())
        .unwrap_or_default();
    let mut header = vec!["seed".to_string(), "branch".into(), "j".into(), "s".into()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(&err)?;
    for sc in &curve.seeds {
        for (branch, sign) in [("left", -1.0), ("right", 1.0)] {
            for j in 0..curve.nodes {
                let mut row = vec![
                    sc.seed.to_string(),
                    branch.to_string(),
                    (j + 1).to_string(),
                    fmt_f64(sign * (j + 1) as f64 * curve.h),
                ];
                for c in &sc.components {
                    let values = if sign < 0.0 { &c.left } else { &c.right };
                    row.push(fmt_f64(values[j]));
                }
                w.write_record(&row).map_err(&err)?;
            }
        }
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Umbilicity measures over the recorded times.
pub fn write_umbilicality_csv(path: &Path, trace: &FlowTrace) -> Result<()> {
    let err = csv_error(path);
    let mut w = csv_writer(path)?;
    w.write_record(["t", "umbilicity", "umbilicity_breve", "curvature_pinch"])
        .map_err(&err)?;
    for r in &trace.records {
        w.write_record([
            fmt_f64(r.t),
            fmt_f64(r.umbilicity),
            fmt_f64(r.umbilicity_breve),
            fmt_f64(r.curvature_pinch),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_17_digits() {
        let values = vec![0.1, 1.0 / 3.0, -5.0012501572929365e-2, 1e-300, f64::MAX];
        let text = to_json_string(&values).unwrap();
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, values);
    }

    #[test]
    fn non_finite_becomes_null() {
        let text = to_json_string(&[f64::NAN, 1.0]).unwrap();
        assert!(text.contains("null"));
    }

    #[test]
    fn oracle_csv_layout() {
        let c = crate::arw::ArwConstants::default();
        let samples: Vec<_> = [0.0, 2.0]
            .iter()
            .map(|&t| crate::oracle::homogeneous_closed_form(-0.5, &c, t))
            .collect();
        let mut buf = Vec::new();
        write_oracle_csv(&mut buf, &samples).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,u,u_tilde,F"));
        assert_eq!(lines.count(), 2);
    }
}
