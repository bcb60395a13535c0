//! Trained model bundle and the `cfnnmodel-v1` text format.
//!
//! The file is `key = value` lines followed by a `[params]` section with one
//! value per line in flat-parameter order. The mask is stored as run
//! lengths alternating off/on, starting with an off run.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::net::argmax;
use super::{pair_from_class, Activation, CascadeMask, Cfnn, CfnnTopology};
use crate::error::{Error, Result};
use crate::scenario_data::{format_features, parse_features, Normalizer, WindowSpec};

const TAG: &str = "cfnnmodel-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Stability,
    Pair,
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::Stability => "stability",
            HeadKind::Pair => "pair",
        })
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "stability" => Ok(HeadKind::Stability),
            "pair" => Ok(HeadKind::Pair),
            other => Err(Error::Config(format!("unknown head `{other}`"))),
        }
    }
}

/// Network, parameters and the input pipeline it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct CfnnModel {
    pub head: HeadKind,
    pub net: Cfnn,
    pub params: Vec<f64>,
    pub spec: WindowSpec,
    pub normalizer: Normalizer,
    /// Free-form training metadata (sorted keys).
    pub meta: BTreeMap<String, String>,
}

impl CfnnModel {
    pub fn new(head: HeadKind, net: Cfnn, params: Vec<f64>, spec: WindowSpec, normalizer: Normalizer) -> Result<Self> {
        if params.len() != net.param_count() {
            return Err(Error::Dimension(format!("{} parameters for a {}-parameter net", params.len(), net.param_count())));
        }
        let t = net.topology();
        if t.channels != spec.channels() || t.samples != spec.samples()? {
            return Err(Error::WindowMismatch(format!(
                "network expects {}×{}, window gives {}×{}",
                t.channels,
                t.samples,
                spec.channels(),
                spec.samples()?
            )));
        }
        Ok(CfnnModel { head, net, params, spec, normalizer, meta: BTreeMap::new() })
    }

    /// Probabilities for an already normalized row.
    pub fn probabilities(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(&self.params, row)
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        self.normalizer.applied(raw)
    }
}

/// Outcome of running both heads on one window.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadsDecision {
    pub unstable: bool,
    /// Zero-based generator pair, surfaced only for unstable decisions.
    pub pair: Option<(usize, usize)>,
    pub stability_probabilities: Vec<f64>,
    /// Pair-head output; evaluated whenever a pair model is given.
    pub pair_probabilities: Option<Vec<f64>>,
}

/// Runs the stability head and, if given, the pair head on a normalized row.
pub fn predict_heads(stability: &CfnnModel, pair: Option<&CfnnModel>, row: &[f64]) -> Result<HeadsDecision> {
    let ps = stability.probabilities(row)?;
    let unstable = argmax(&ps) == 1;
    let (pair_probs, decoded) = match pair {
        Some(m) => {
            stability.spec.ensure_same(&m.spec)?;
            let pp = m.probabilities(row)?;
            let d = pair_from_class(argmax(&pp), m.spec.generators)?;
            (Some(pp), Some(d))
        }
        None => (None, None),
    };
    Ok(HeadsDecision {
        unstable,
        pair: if unstable { decoded } else { None },
        stability_probabilities: ps,
        pair_probabilities: pair_probs,
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn write_model(path: &Path, m: &CfnnModel) -> Result<()> {
    let t = m.net.topology();
    let mut s = String::with_capacity(m.params.len() * 24 + 4096);
    writeln!(s, "{TAG}").unwrap();
    writeln!(s, "head = {}", m.head).unwrap();
    writeln!(s, "channels = {}", t.channels).unwrap();
    writeln!(s, "samples = {}", t.samples).unwrap();
    writeln!(s, "hidden = {}", t.hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(",")).unwrap();
    writeln!(s, "classes = {}", t.classes).unwrap();
    writeln!(s, "activation = {}", t.activation).unwrap();
    writeln!(s, "fs = {}", m.spec.fs).unwrap();
    writeln!(s, "ltw = {}", m.spec.ltw).unwrap();
    writeln!(s, "features = {}", format_features(&m.spec.features)).unwrap();
    writeln!(s, "generators = {}", m.spec.generators).unwrap();
    let runs = m.net.mask().to_runs();
    writeln!(s, "mask_connections = {}", m.net.mask().count()).unwrap();
    writeln!(s, "mask_runs = {}", runs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")).unwrap();
    writeln!(s, "norm_mean = {}", join(&m.normalizer.mean)).unwrap();
    writeln!(s, "norm_std = {}", join(&m.normalizer.std)).unwrap();
    let floored: Vec<String> = m.normalizer.floored.iter().map(usize::to_string).collect();
    writeln!(s, "norm_floored = {}", if floored.is_empty() { "-".into() } else { floored.join(",") }).unwrap();
    for (k, v) in &m.meta {
        writeln!(s, "meta.{k} = {v}").unwrap();
    }
    writeln!(s, "param_count = {}", m.params.len()).unwrap();
    writeln!(s, "[params]").unwrap();
    for v in &m.params {
        writeln!(s, "{v}").unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<CfnnModel> {
    let text = fs::read_to_string(path)?;
    let bad = |m: String| Error::ModelFormat(format!("{}: {m}", path.display()));
    let mut lines = text.lines();
    if lines.next() != Some(TAG) {
        return Err(bad(format!("missing `{TAG}` header")));
    }
    let mut kv = BTreeMap::new();
    let mut meta = BTreeMap::new();
    for line in lines.by_ref() {
        if line == "[params]" {
            break;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed line `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        match k.strip_prefix("meta.") {
            Some(mk) => meta.insert(mk.to_string(), v.to_string()),
            None => kv.insert(k.to_string(), v.to_string()),
        };
    }
    let get = |k: &str| kv.get(k).map(String::as_str).ok_or_else(|| bad(format!("missing `{k}`")));
    fn parse<T: FromStr>(s: &str, key: &str, bad: &dyn Fn(String) -> Error) -> Result<T> {
        s.parse().map_err(|_| bad(format!("bad value for `{key}`")))
    }
    fn list<T: FromStr>(s: &str, key: &str, bad: &dyn Fn(String) -> Error) -> Result<Vec<T>> {
        if s == "-" || s.is_empty() {
            return Ok(vec![]);
        }
        s.split(',').map(|v| parse(v.trim(), key, bad)).collect()
    }
    let channels: usize = parse(get("channels")?, "channels", &bad)?;
    let samples: usize = parse(get("samples")?, "samples", &bad)?;
    let topology = CfnnTopology {
        channels,
        samples,
        hidden: list(get("hidden")?, "hidden", &bad)?,
        classes: parse(get("classes")?, "classes", &bad)?,
        activation: get("activation")?.parse::<Activation>()?,
    };
    topology.validate()?;
    let runs: Vec<usize> = list(get("mask_runs")?, "mask_runs", &bad)?;
    let mask = CascadeMask::from_runs(channels, topology.cascade_neurons(), &runs)?;
    let net = Cfnn::new(topology, mask)?;
    let spec = WindowSpec {
        fs: parse(get("fs")?, "fs", &bad)?,
        ltw: parse(get("ltw")?, "ltw", &bad)?,
        features: parse_features(get("features")?)?,
        generators: parse(get("generators")?, "generators", &bad)?,
    };
    let normalizer = Normalizer {
        samples,
        mean: list(get("norm_mean")?, "norm_mean", &bad)?,
        std: list(get("norm_std")?, "norm_std", &bad)?,
        floored: list(get("norm_floored")?, "norm_floored", &bad)?,
    };
    if normalizer.mean.len() != channels || normalizer.std.len() != channels {
        return Err(bad("normalizer length differs from channel count".into()));
    }
    let params: Vec<f64> = lines.map(|l| parse(l.trim(), "params", &bad)).collect::<Result<_>>()?;
    let declared: usize = parse(get("param_count")?, "param_count", &bad)?;
    if params.len() != declared {
        return Err(bad(format!("{} parameters listed, header declares {declared}", params.len())));
    }
    let mut m = CfnnModel::new(get("head")?.parse()?, net, params, spec, normalizer)?;
    m.meta = meta;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfnn::pair_class;
    use crate::scenario_data::Feature;

    fn spec() -> WindowSpec {
        WindowSpec { fs: 2.0, ltw: 1.0, features: vec![Feature::Pe], generators: 10 }
    }

    fn normalizer() -> Normalizer {
        Normalizer { samples: 2, mean: vec![0.0; 10], std: vec![1.0; 10], floored: vec![] }
    }

    /// Model whose output is fixed by the output bias alone.
    fn constant_model(head: HeadKind, bias: &[f64]) -> CfnnModel {
        let t = CfnnTopology::new(10, 2, vec![2, 2], bias.len()).unwrap();
        let mut mask = CascadeMask::for_topology(&t);
        mask.set(1, 3, true);
        let net = Cfnn::new(t, mask).unwrap();
        let mut w = net.unflatten(&vec![0.0; net.param_count()]).unwrap();
        w.output.1 = bias.to_vec();
        let p = net.flatten(&w).unwrap();
        CfnnModel::new(head, net, p, spec(), normalizer()).unwrap()
    }

    fn pair_bias(class: usize) -> Vec<f64> {
        (0..45).map(|k| if k == class { 5.0 } else { 0.0 }).collect()
    }

    #[test]
    fn stable_decision_hides_pair() {
        let s = constant_model(HeadKind::Stability, &[0.9f64.ln(), 0.1f64.ln()]);
        let p = constant_model(HeadKind::Pair, &pair_bias(3));
        let d = predict_heads(&s, Some(&p), &[0.0; 20]).unwrap();
        assert!(!d.unstable);
        assert_eq!(d.pair, None);
        assert!((d.stability_probabilities[0] - 0.9).abs() < 1e-12);
        assert!(d.pair_probabilities.is_some());
    }

    #[test]
    fn unstable_decision_reports_pair() {
        let s = constant_model(HeadKind::Stability, &[0.2f64.ln(), 0.8f64.ln()]);
        let p = constant_model(HeadKind::Pair, &pair_bias(pair_class(1, 7, 10).unwrap()));
        let d = predict_heads(&s, Some(&p), &[0.0; 20]).unwrap();
        assert!(d.unstable);
        assert_eq!(d.pair, Some((1, 7)));
    }

    #[test]
    fn window_mismatch_between_heads() {
        let s = constant_model(HeadKind::Stability, &[0.0, 1.0]);
        let mut p = constant_model(HeadKind::Pair, &pair_bias(0));
        p.spec.ltw = 1.5;
        assert!(matches!(predict_heads(&s, Some(&p), &[0.0; 20]), Err(Error::WindowMismatch(_))));
    }

    #[test]
    fn file_round_trip() {
        let mut m = constant_model(HeadKind::Pair, &pair_bias(7));
        m.params.iter_mut().enumerate().for_each(|(i, v)| *v += (i as f64).sqrt() / 3.0);
        m.normalizer.mean[2] = 1.0 / 7.0;
        m.normalizer.floored = vec![4];
        m.meta.insert("iterations".into(), "12".into());
        let path = std::env::temp_dir().join(format!("gridpulse-model-{}.txt", std::process::id()));
        write_model(&path, &m).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(back, m);
        let mut again = path.clone();
        again.set_extension("2");
        write_model(&again, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
        fs::remove_file(path).ok();
        fs::remove_file(again).ok();
    }
}
