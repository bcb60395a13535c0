//! Dataset assembly and the `tsadata-v1` file format.
//!
//! Layout: the line `tsadata-v1`, one metadata line of space-separated
//! `key=value` pairs, then little-endian binary blocks:
//! `rows × width` f64 features (row-major, normalized), `rows` u8 stability
//! labels (1 = unstable), `rows` u8 pair classes (255 for stable rows),
//! `channels` f64 means and `channels` f64 standard deviations.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{extract_window, format_features, parse_features, Normalizer, ScenarioConfig, ScenarioSampler, WindowSpec};
use crate::cfnn::pair_class;
use crate::error::{Error, Result};
use crate::grid_model::{solve_power_flow, stage_networks, GridModel, PowerFlowOptions, StageOptions};
use crate::transim::{simulate, FaultScenario, Labeling};

const TAG: &str = "tsadata-v1";
pub const NO_PAIR: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Train,
    Test,
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stream::Train => "train",
            Stream::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    /// SHA-256 (hex) of the grid, scenario recipe and window spec.
    pub config_hash: String,
    pub seed: u64,
    pub stream: Stream,
    /// Scenarios redrawn after a failed simulation.
    pub redraws: u64,
}

/// Normalized windows with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: WindowSpec,
    /// Row-major `rows × width`.
    pub x: Vec<f64>,
    /// 1 for unstable rows.
    pub unstable: Vec<u8>,
    /// Critical-pair class, `NO_PAIR` for stable rows.
    pub pair: Vec<u8>,
    pub normalizer: Normalizer,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.unstable.len()
    }

    pub fn width(&self) -> usize {
        self.x.len().checked_div(self.rows()).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.x[i * w..(i + 1) * w]
    }

    pub fn is_unstable(&self, i: usize) -> bool {
        self.unstable[i] == 1
    }

    pub fn pair_class(&self, i: usize) -> Option<usize> {
        (self.pair[i] != NO_PAIR).then_some(self.pair[i] as usize)
    }

    pub fn unstable_count(&self) -> usize {
        self.unstable.iter().filter(|&&u| u == 1).count()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let w = self.width();
        let mut x = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            spec: self.spec.clone(),
            x,
            unstable: indices.iter().map(|&i| self.unstable[i]).collect(),
            pair: indices.iter().map(|&i| self.pair[i]).collect(),
            normalizer: self.normalizer.clone(),
            provenance: self.provenance.clone(),
        }
    }

    fn check(&self) -> Result<()> {
        let width = self.spec.width()?;
        let bad = |m: String| Err(Error::DatasetFormat(m));
        if self.x.len() != self.rows() * width || self.pair.len() != self.rows() {
            return bad(format!("matrix of {} values does not fit {} rows × {width}", self.x.len(), self.rows()));
        }
        if self.normalizer.channels() != self.spec.channels() {
            return bad("normalizer channel count differs from window".into());
        }
        for i in 0..self.rows() {
            match (self.unstable[i], self.pair[i]) {
                (0, NO_PAIR) | (1, 0..=254) => {}
                (u, p) => return bad(format!("row {i}: stability {u} with pair {p}")),
            }
        }
        Ok(())
    }
}

/// Simulation outcome behind one dataset row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRecord {
    pub index: usize,
    /// Draws needed (1 when the first draw succeeded).
    pub attempts: u32,
    pub scenario: FaultScenario,
    pub labeling: Labeling,
}

/// Draw, solve, simulate and window one scenario.
fn run_scenario(
    model: &GridModel,
    sampler: &ScenarioSampler,
    spec: &WindowSpec,
    index: usize,
) -> Result<(Vec<f64>, ScenarioRecord)> {
    let cfg = &sampler.config;
    let mut last = None;
    for attempt in 0..=cfg.max_redraws {
        let s = sampler.draw_attempt(index, attempt);
        let outcome = (|| {
            let op = solve_power_flow(model, s.load_scale, &PowerFlowOptions::default())?;
            let nets = stage_networks(model, &op, &s, &StageOptions::default())?;
            simulate(model, &op, &nets, &s, &cfg.sim)
        })();
        match outcome {
            Ok(traces) => {
                let row = extract_window(&traces, spec, s.clear_time())?;
                let record = ScenarioRecord { index, attempts: attempt + 1, scenario: s, labeling: traces.labeling };
                return Ok((row, record));
            }
            Err(e) if e.is_numerical() || matches!(e, Error::Islanded { .. }) => {
                log::warn!("scenario {index} attempt {attempt} failed ({e}); redrawing");
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Config(format!(
        "scenario {index} failed after {} draws; last error: {}",
        cfg.max_redraws + 1,
        last.map_or_else(String::new, |e| e.to_string())
    )))
}

/// Raw windows and records for one stream, in index order.
pub fn build_split(
    model: &GridModel,
    config: &ScenarioConfig,
    spec: &WindowSpec,
    stream: Stream,
) -> Result<(Vec<Vec<f64>>, Vec<ScenarioRecord>)> {
    spec.validate()?;
    if spec.generators != model.generator_count() {
        return Err(Error::WindowMismatch(format!(
            "window expects {} generators, grid has {}",
            spec.generators,
            model.generator_count()
        )));
    }
    let sampler = ScenarioSampler::new(config, model)?;
    let range = match stream {
        Stream::Train => 0..config.train_count,
        Stream::Test => config.train_count..config.total(),
    };
    let results: Vec<Result<(Vec<f64>, ScenarioRecord)>> = range
        .into_par_iter()
        .map(|i| run_scenario(model, &sampler, spec, i))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        let (row, rec) = r?;
        rows.push(row);
        records.push(rec);
    }
    Ok((rows, records))
}

pub fn config_hash(model: &GridModel, config: &ScenarioConfig, spec: &WindowSpec) -> String {
    let mut h = Sha256::new();
    h.update(model.to_text().as_bytes());
    h.update(config.canonical_text().as_bytes());
    h.update(
        format!("fs={:?} ltw={:?} features={} generators={}", spec.fs, spec.ltw, format_features(&spec.features), spec.generators)
            .as_bytes(),
    );
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn assemble(
    spec: &WindowSpec,
    rows: &[Vec<f64>],
    records: &[ScenarioRecord],
    normalizer: &Normalizer,
    provenance: Provenance,
) -> Result<Dataset> {
    let mut x = Vec::with_capacity(rows.len() * rows.first().map_or(0, Vec::len));
    for r in rows {
        let start = x.len();
        x.extend_from_slice(r);
        normalizer.apply(&mut x[start..]);
    }
    let mut unstable = Vec::with_capacity(rows.len());
    let mut pair = Vec::with_capacity(rows.len());
    for rec in records {
        match rec.labeling.critical {
            Some(c) if rec.labeling.unstable => {
                unstable.push(1);
                pair.push(pair_class(c.pair.0, c.pair.1, spec.generators)? as u8);
            }
            _ => {
                unstable.push(0);
                pair.push(NO_PAIR);
            }
        }
    }
    let d = Dataset { spec: spec.clone(), x, unstable, pair, normalizer: normalizer.clone(), provenance };
    d.check()?;
    Ok(d)
}

/// Train and test datasets plus the scenario records behind each row.
#[derive(Debug, Clone)]
pub struct BuiltData {
    pub train: Dataset,
    pub test: Dataset,
    pub train_records: Vec<ScenarioRecord>,
    pub test_records: Vec<ScenarioRecord>,
}

/// Generates both streams; the normalizer is fitted on training rows only.
pub fn build_dataset(model: &GridModel, config: &ScenarioConfig, spec: &WindowSpec) -> Result<BuiltData> {
    if spec.generators * (spec.generators - 1) / 2 > NO_PAIR as usize {
        return Err(Error::Config("too many generator pairs for an 8-bit class label".into()));
    }
    let (train_rows, train_records) = build_split(model, config, spec, Stream::Train)?;
    let (test_rows, test_records) = build_split(model, config, spec, Stream::Test)?;
    let normalizer = Normalizer::fit(train_rows.iter().map(Vec::as_slice), spec.channels(), spec.samples()?)?;
    let hash = config_hash(model, config, spec);
    let prov = |stream, records: &[ScenarioRecord]| Provenance {
        config_hash: hash.clone(),
        seed: config.seed,
        stream,
        redraws: records.iter().map(|r| u64::from(r.attempts - 1)).sum(),
    };
    let train = assemble(spec, &train_rows, &train_records, &normalizer, prov(Stream::Train, &train_records))?;
    let test = assemble(spec, &test_rows, &test_records, &normalizer, prov(Stream::Test, &test_records))?;
    log::info!(
        "built {} train ({} unstable) and {} test ({} unstable) rows",
        train.rows(),
        train.unstable_count(),
        test.rows(),
        test.unstable_count()
    );
    Ok(BuiltData { train, test, train_records, test_records })
}

pub fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    d.check()?;
    let floored = if d.normalizer.floored.is_empty() {
        "-".to_string()
    } else {
        d.normalizer.floored.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
    };
    let mut out = Vec::with_capacity(d.x.len() * 8 + 4096);
    writeln!(out, "{TAG}")?;
    writeln!(
        out,
        "rows={} channels={} samples={} fs={} ltw={} features={} generators={} config_hash={} seed={} stream={} redraws={} floored={}",
        d.rows(),
        d.spec.channels(),
        d.spec.samples()?,
        d.spec.fs,
        d.spec.ltw,
        format_features(&d.spec.features),
        d.spec.generators,
        d.provenance.config_hash,
        d.provenance.seed,
        d.provenance.stream,
        d.provenance.redraws,
        floored
    )?;
    for v in &d.x {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&d.unstable);
    out.extend_from_slice(&d.pair);
    for v in d.normalizer.mean.iter().chain(&d.normalizer.std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| Error::DatasetFormat(format!("{}: {m}", path.display()));
    let mut lines = bytes.splitn(3, |&b| b == b'\n');
    if lines.next() != Some(TAG.as_bytes()) {
        return Err(bad(&format!("missing `{TAG}` header")));
    }
    let meta_line = std::str::from_utf8(lines.next().ok_or_else(|| bad("missing metadata"))?)
        .map_err(|_| bad("metadata is not UTF-8"))?;
    let body = lines.next().unwrap_or(&[]);
    let meta: BTreeMap<&str, &str> = meta_line.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
    let get = |k: &str| meta.get(k).copied().ok_or_else(|| bad(&format!("missing `{k}`")));
    fn num<T: std::str::FromStr>(s: &str, e: impl Fn() -> Error) -> Result<T> {
        s.parse().map_err(|_| e())
    }
    let rows: usize = num(get("rows")?, || bad("bad rows"))?;
    let channels: usize = num(get("channels")?, || bad("bad channels"))?;
    let samples: usize = num(get("samples")?, || bad("bad samples"))?;
    let spec = WindowSpec {
        fs: num(get("fs")?, || bad("bad fs"))?,
        ltw: num(get("ltw")?, || bad("bad ltw"))?,
        features: parse_features(get("features")?)?,
        generators: num(get("generators")?, || bad("bad generators"))?,
    };
    if spec.channels() != channels || spec.samples()? != samples {
        return Err(bad("channel or sample count disagrees with the window spec"));
    }
    let stream = match get("stream")? {
        "train" => Stream::Train,
        "test" => Stream::Test,
        _ => return Err(bad("bad stream")),
    };
    let floored = match get("floored")? {
        "-" => vec![],
        s => s.split(';').map(|v| num(v, || bad("bad floored list"))).collect::<Result<_>>()?,
    };
    let width = channels * samples;
    let expected = rows * width * 8 + 2 * rows + 2 * channels * 8;
    if body.len() != expected {
        return Err(bad(&format!("binary body has {} bytes, expected {expected}", body.len())));
    }
    let floats = |b: &[u8]| -> Vec<f64> {
        b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
    };
    let (xb, rest) = body.split_at(rows * width * 8);
    let (ub, rest) = rest.split_at(rows);
    let (pb, rest) = rest.split_at(rows);
    let (mb, sb) = rest.split_at(channels * 8);
    let d = Dataset {
        spec,
        x: floats(xb),
        unstable: ub.to_vec(),
        pair: pb.to_vec(),
        normalizer: Normalizer { samples, mean: floats(mb), std: floats(sb), floored },
        provenance: Provenance {
            config_hash: get("config_hash")?.to_string(),
            seed: num(get("seed")?, || bad("bad seed"))?,
            stream,
            redraws: num(get("redraws")?, || bad("bad redraws"))?,
        },
    };
    d.check()?;
    Ok(d)
}

/// Scenario provenance as CSV, one line per row.
pub fn write_records(path: &Path, records: &[ScenarioRecord]) -> Result<()> {
    let mut out = String::from(
        "index,attempts,fault_type,branch,location,onset,duration,load_scale,seed,label,critical_pair,crossing_time\n",
    );
    for r in records {
        let s = &r.scenario;
        let (pair, time) = match r.labeling.critical {
            Some(c) => (format!("{}-{}", c.pair.0 + 1, c.pair.1 + 1), c.time.to_string()),
            None => ("none".into(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.index,
            r.attempts,
            s.kind,
            s.branch,
            s.location,
            s.onset,
            s.duration,
            s.load_scale,
            s.seed,
            if r.labeling.unstable { "unstable" } else { "stable" },
            pair,
            time
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_data::Feature;

    fn tiny() -> Dataset {
        let spec = WindowSpec { fs: 1.0, ltw: 2.0, features: vec![Feature::Pe], generators: 3 };
        Dataset {
            spec,
            x: (0..12).map(|i| i as f64 / 7.0 - 0.3).collect(),
            unstable: vec![0, 1],
            pair: vec![NO_PAIR, 2],
            normalizer: Normalizer { samples: 2, mean: vec![0.1, 1.0 / 3.0, -2.0], std: vec![1.0, 2.0, 1e-9], floored: vec![2] },
            provenance: Provenance { config_hash: "ab".into(), seed: 7, stream: Stream::Test, redraws: 1 },
        }
    }

    #[test]
    fn file_round_trip_is_byte_exact() {
        let dir = std::env::temp_dir().join(format!("gridpulse-ds-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let (a, b) = (dir.join("a.bin"), dir.join("b.bin"));
        let d = tiny();
        write_dataset(&a, &d).unwrap();
        let back = read_dataset(&a).unwrap();
        assert_eq!(back, d);
        write_dataset(&b, &back).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn inconsistent_labels_rejected() {
        let mut d = tiny();
        d.pair[1] = NO_PAIR;
        assert!(d.check().is_err());
        let mut d = tiny();
        d.x.pop();
        assert!(d.check().is_err());
    }

    #[test]
    fn subset_keeps_order() {
        let d = tiny();
        let s = d.subset(&[1, 0]);
        assert_eq!(s.row(0), d.row(1));
        assert_eq!(s.pair, vec![2, NO_PAIR]);
    }
}
