//! Trace export as long-format CSV (`t,gen,delta,omega,pe,vt`, generators
//! numbered from 1) with a `key = value` sidecar at `<path>.meta`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{CriticalPair, FaultScenario, Labeling, TraceSet};
use crate::error::{Error, Result};

const META_TAG: &str = "trace-v1";

fn meta_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

pub fn write_trace(path: &Path, traces: &TraceSet, scenario: Option<&FaultScenario>) -> Result<()> {
    let n = traces.generator_count();
    let mut csv = String::with_capacity(traces.len() * n * 64);
    csv.push_str("t,gen,delta,omega,pe,vt\n");
    for k in 0..traces.len() {
        let t = k as f64 * traces.dt;
        for g in 0..n {
            writeln!(
                csv,
                "{},{},{},{},{},{}",
                t,
                g + 1,
                traces.delta[g][k],
                traces.omega[g][k],
                traces.pe[g][k],
                traces.vt[g][k]
            )
            .unwrap();
        }
    }
    fs::write(path, csv)?;

    let mut meta = String::new();
    writeln!(meta, "format = {META_TAG}").unwrap();
    writeln!(meta, "dt = {}", traces.dt).unwrap();
    writeln!(meta, "samples = {}", traces.len()).unwrap();
    writeln!(meta, "generators = {n}").unwrap();
    writeln!(meta, "t_fault = {}", traces.t_fault).unwrap();
    writeln!(meta, "t_clear = {}", traces.t_clear).unwrap();
    writeln!(meta, "label = {}", if traces.labeling.unstable { "unstable" } else { "stable" }).unwrap();
    match traces.labeling.critical {
        Some(c) => {
            writeln!(meta, "critical_pair = {},{}", c.pair.0 + 1, c.pair.1 + 1).unwrap();
            writeln!(meta, "crossing_time = {}", c.time).unwrap();
        }
        None => writeln!(meta, "critical_pair = none").unwrap(),
    }
    if let Some(s) = scenario {
        writeln!(meta, "fault_type = {}", s.kind).unwrap();
        writeln!(meta, "branch = {}", s.branch).unwrap();
        writeln!(meta, "location = {}", s.location).unwrap();
        writeln!(meta, "onset = {}", s.onset).unwrap();
        writeln!(meta, "duration = {}", s.duration).unwrap();
        writeln!(meta, "load_scale = {}", s.load_scale).unwrap();
        writeln!(meta, "seed = {}", s.seed).unwrap();
        writeln!(meta, "z_fault = {},{}", s.z_fault.re, s.z_fault.im).unwrap();
    }
    fs::write(meta_path(path), meta)?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<TraceSet> {
    let bad = |m: String| Error::DatasetFormat(format!("{}: {m}", path.display()));
    let meta_text = fs::read_to_string(meta_path(path))?;
    let meta: BTreeMap<&str, &str> = meta_text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect();
    if meta.get("format") != Some(&META_TAG) {
        return Err(bad(format!("sidecar is not {META_TAG}")));
    }
    let num = |k: &str| -> Result<f64> {
        meta.get(k)
            .ok_or_else(|| bad(format!("missing `{k}`")))?
            .parse()
            .map_err(|_| bad(format!("bad `{k}`")))
    };
    let dt = num("dt")?;
    let samples = num("samples")? as usize;
    let n = num("generators")? as usize;
    let critical = match meta.get("critical_pair") {
        Some(&"none") | None => None,
        Some(v) => {
            let (a, b) = v.split_once(',').ok_or_else(|| bad("bad critical_pair".into()))?;
            let a: usize = a.trim().parse().map_err(|_| bad("bad critical_pair".into()))?;
            let b: usize = b.trim().parse().map_err(|_| bad("bad critical_pair".into()))?;
            Some(CriticalPair { pair: (a - 1, b - 1), time: num("crossing_time")? })
        }
    };

    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("t,gen,delta,omega,pe,vt") {
        return Err(bad("unexpected CSV header".into()));
    }
    let mut series = vec![vec![vec![0.0; samples]; n]; 4];
    let mut count = 0usize;
    for (row, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad(format!("row {} has {} columns", row + 2, cols.len())));
        }
        let (k, g) = (row / n, row % n);
        if k >= samples || cols[1].trim().parse::<usize>().ok() != Some(g + 1) {
            return Err(bad(format!("row {} out of order", row + 2)));
        }
        for (s, col) in series.iter_mut().zip(&cols[2..]) {
            s[g][k] = col.trim().parse().map_err(|_| bad(format!("bad number on row {}", row + 2)))?;
        }
        count += 1;
    }
    if count != samples * n {
        return Err(bad(format!("expected {} rows, found {count}", samples * n)));
    }
    let vt = series.pop().unwrap();
    let pe = series.pop().unwrap();
    let omega = series.pop().unwrap();
    let delta = series.pop().unwrap();
    Ok(TraceSet {
        dt,
        t_fault: num("t_fault")?,
        t_clear: num("t_clear")?,
        delta,
        omega,
        pe,
        vt,
        labeling: Labeling {
            unstable: meta.get("label") == Some(&"unstable"),
            critical,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = std::env::temp_dir().join(format!("gridpulse-trace-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        let series = |o: f64| vec![vec![0.1 + o, 1.0 / 3.0 + o, -2.5e-7], vec![o, 2.0, 1e300]];
        let t = TraceSet {
            dt: 0.001,
            t_fault: 0.001,
            t_clear: 0.002,
            delta: series(0.0),
            omega: series(1.0),
            pe: series(2.0),
            vt: series(3.0),
            labeling: Labeling {
                unstable: true,
                critical: Some(CriticalPair { pair: (0, 1), time: 0.002 }),
            },
        };
        write_trace(&path, &t, None).unwrap();
        assert_eq!(read_trace(&path).unwrap(), t);
        fs::remove_dir_all(dir).ok();
    }
}
