//! Comma-separated output files and the trace parser.
//!
//! `trace.csv` holds only quantities that are a deterministic function of the
//! manifest; wall-clock times go to `timing.csv`.

use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use stackel_core::trace::SolveTrace;

pub const TRACE_FILE: &str = "trace.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

/// One parsed row of `trace.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub y: Vec<f64>,
    pub leader_objective: f64,
    pub mean_follower_objective: f64,
    pub ve_residual: f64,
    pub step_norm: f64,
    pub active_set: Option<u64>,
}

impl TraceRow {
    pub fn from_trace(trace: &SolveTrace) -> Vec<TraceRow> {
        trace
            .records
            .iter()
            .map(|r| TraceRow {
                t: r.t,
                y: r.y.clone(),
                leader_objective: r.leader_objective,
                mean_follower_objective: r.mean_follower_objective(),
                ve_residual: r.ve_residual,
                step_norm: r.step_norm,
                active_set: r.active_set,
            })
            .collect()
    }
}

fn trace_header(n_leader: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..n_leader).map(|k| format!("y{k}")));
    h.extend(
        ["leader_objective", "mean_follower_objective", "ve_residual", "step_norm", "active_set"].map(String::from),
    );
    h
}

pub fn write_trace(path: &Path, n_leader: usize, trace: &SolveTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trace_header(n_leader))?;
    for row in TraceRow::from_trace(trace) {
        let mut rec = vec![row.t.to_string()];
        rec.extend(row.y.iter().map(|v| v.to_string()));
        rec.push(row.leader_objective.to_string());
        rec.push(row.mean_follower_objective.to_string());
        rec.push(row.ve_residual.to_string());
        rec.push(row.step_norm.to_string());
        rec.push(row.active_set.map(|a| format!("{a:016x}")).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing(path: &Path, trace: &SolveTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "wall_ms"])?;
    for r in &trace.records {
        w.write_record([r.t.to_string(), r.wall_ms.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers()?.clone();
    let n_leader = header.iter().filter(|h| h.starts_with('y')).count();
    if header.iter().collect::<Vec<_>>() != trace_header(n_leader) {
        bail!("unexpected trace header in {}", path.display());
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().with_context(|| format!("row {}, column {}", line + 2, header[i].to_string()))
        };
        let base = 1 + n_leader;
        rows.push(TraceRow {
            t: rec[0].parse().with_context(|| format!("row {}, column t", line + 2))?,
            y: (1..base).map(num).collect::<Result<_>>()?,
            leader_objective: num(base)?,
            mean_follower_objective: num(base + 1)?,
            ve_residual: num(base + 2)?,
            step_norm: num(base + 3)?,
            active_set: match &rec[base + 4] {
                "" => None,
                s => Some(u64::from_str_radix(s, 16).with_context(|| format!("row {}, active_set", line + 2))?),
            },
        });
    }
    Ok(rows)
}

/// Writes `header` and `rows` as one comma-separated file.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use stackel_core::trace::TraceRecord;

    fn sample() -> SolveTrace {
        let mut t = SolveTrace::new("pigd");
        for (k, y) in [(0usize, 1.0f64), (1, 1.0 / 3.0), (5, 4.999999999999999)] {
            t.records.push(TraceRecord {
                t: k,
                y: vec![y, -0.1],
                leader_objective: y * 7.1,
                follower_objectives: vec![1e-300, 2.5],
                ve_residual: if k == 1 { f64::NAN } else { 1e-14 },
                step_norm: 0.125,
                active_set: (k != 5).then_some(0xdead_beef_u64 << k),
                wall_ms: 3.0,
            });
        }
        t
    }

    #[test]
    fn trace_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRACE_FILE);
        let trace = sample();
        write_trace(&path, 2, &trace).unwrap();
        let back = read_trace(&path).unwrap();
        let expect = TraceRow::from_trace(&trace);
        assert_eq!(back.len(), expect.len());
        for (a, b) in back.iter().zip(&expect) {
            assert!(a.ve_residual.is_nan() == b.ve_residual.is_nan());
            let (mut a, mut b) = (a.clone(), b.clone());
            a.ve_residual = 0.0;
            b.ve_residual = 0.0;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn trace_has_no_wall_times() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRACE_FILE);
        write_trace(&path, 2, &sample()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("wall"));
        assert!(text.starts_with("t,y0,y1,leader_objective"));
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "t,foo\n1,2\n").unwrap();
        assert!(read_trace(&path).is_err());
    }
}
