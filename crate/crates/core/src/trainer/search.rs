use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{head_batch, train, Confusion, TrainConfig};
use crate::cfnn::{CascadeMask, Cfnn, CfnnTopology, HeadKind};
use crate::error::{Error, Result};
use crate::scenario_data::{Dataset, Feature};

/// Seeded shuffle of the rows; the last `fraction` becomes validation.
pub fn split_validation(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.rows();
    let n_val = ((n as f64) * fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::Config(format!("validation fraction {fraction} leaves an empty side of {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (tr, va) = idx.split_at(n - n_val);
    Ok((data.subset(tr), data.subset(va)))
}

/// Stability-head confusion matrix of `params` on every row of `data`.
pub fn evaluate_stability(net: &Cfnn, params: &[f64], data: &Dataset) -> Result<Confusion> {
    let batch = head_batch(data, HeadKind::Stability);
    let preds: Vec<Result<usize>> = batch.rows.par_iter().map(|x| net.classify(params, x)).collect();
    let mut pairs = Vec::with_capacity(preds.len());
    for (p, &t) in preds.into_iter().zip(&batch.targets) {
        pairs.push((t == 1, p? == 1));
    }
    Ok(Confusion::from_pairs(pairs))
}

/// Pair-head accuracy over the unstable rows of `data`; `None` if there
/// are none.
pub fn evaluate_pair(net: &Cfnn, params: &[f64], data: &Dataset) -> Result<Option<f64>> {
    let batch = head_batch(data, HeadKind::Pair);
    if batch.is_empty() {
        return Ok(None);
    }
    let mut correct = 0;
    for (x, &t) in batch.rows.iter().zip(&batch.targets) {
        correct += usize::from(net.classify(params, x)? == t);
    }
    Ok(Some(correct as f64 / batch.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Exhaustive up to `exhaustive_limit` blocks, branch-and-bound above.
    Auto,
    BranchAndBound,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub mode: SearchMode,
    /// A node is pruned when its relaxation accuracy plus this margin is
    /// below the incumbent's.
    pub margin: f64,
    /// Maximum active connections.
    pub budget: Option<usize>,
    pub exhaustive_limit: usize,
    /// Cap on candidate trainings in branch-and-bound mode.
    pub max_evaluations: usize,
    pub validation_fraction: f64,
    pub split_seed: u64,
    pub train: TrainConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            mode: SearchMode::Auto,
            margin: 0.02,
            budget: None,
            exhaustive_limit: 12,
            max_evaluations: 64,
            validation_fraction: 0.2,
            split_seed: 7,
            train: TrainConfig::default(),
        }
    }
}

/// One trained candidate mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEval {
    /// Per cascade layer, whether its block is on.
    pub blocks: Vec<bool>,
    pub connections: usize,
    pub accuracy: f64,
    pub fpr: f64,
    /// False when training failed.
    pub feasible: bool,
}

impl CandidateEval {
    /// Total order used to pick the incumbent: accuracy, then lower FPR,
    /// then fewer connections, then block pattern.
    fn beats(&self, other: &CandidateEval) -> bool {
        let key = |c: &CandidateEval| (c.feasible, c.accuracy, -c.fpr, std::cmp::Reverse(c.connections));
        match key(self).partial_cmp(&key(other)) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Less) => false,
            _ => self.blocks < other.blocks,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSearchResult {
    pub mask: CascadeMask,
    pub best: CandidateEval,
    /// Every candidate trained, in evaluation order.
    pub evaluations: Vec<CandidateEval>,
    pub nodes_expanded: usize,
    pub pruned: usize,
    pub exhaustive: bool,
}

fn block_sizes(t: &CfnnTopology) -> Vec<usize> {
    t.hidden[1..].iter().map(|n| n * t.channels).collect()
}

fn evaluate_blocks(
    t: &CfnnTopology,
    blocks: &[bool],
    train_set: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<CandidateEval> {
    let mask = CascadeMask::from_blocks(t, blocks)?;
    let connections = mask.count();
    let net = Cfnn::new(t.clone(), mask)?;
    let outcome = train(&net, train_set, HeadKind::Stability, cfg).and_then(|(p, _)| evaluate_stability(&net, &p, val));
    Ok(match outcome {
        Ok(c) => CandidateEval { blocks: blocks.to_vec(), connections, accuracy: c.accuracy(), fpr: c.fpr(), feasible: true },
        Err(e) if e.is_numerical() => {
            log::warn!("candidate {blocks:?} infeasible: {e}");
            CandidateEval { blocks: blocks.to_vec(), connections, accuracy: 0.0, fpr: 1.0, feasible: false }
        }
        Err(e) => return Err(e),
    })
}

struct Node {
    prefix: Vec<bool>,
    /// Best validation accuracy among the node's two scored completions.
    bound: f64,
    seq: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on the bound; earlier nodes first on ties.
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Selects a cascade mask at layer-block granularity by training
/// candidates on the training part of `data` and scoring them on a
/// held-out validation split.
pub fn search_mask(t: &CfnnTopology, data: &Dataset, cfg: &SearchConfig) -> Result<MaskSearchResult> {
    let (train_set, val) = split_validation(data, cfg.validation_fraction, cfg.split_seed)?;
    let sizes = block_sizes(t);
    let nb = sizes.len();
    let budget = cfg.budget.unwrap_or(usize::MAX);
    let cost = |b: &[bool]| -> usize { b.iter().zip(&sizes).filter(|(on, _)| **on).map(|(_, s)| s).sum() };
    let exhaustive = match cfg.mode {
        SearchMode::Exhaustive => true,
        SearchMode::BranchAndBound => false,
        SearchMode::Auto => nb <= cfg.exhaustive_limit,
    };

    if exhaustive {
        if nb > 24 {
            return Err(Error::Config(format!("{nb} blocks is too many to enumerate")));
        }
        let candidates: Vec<Vec<bool>> = (0u32..1 << nb)
            .map(|code| (0..nb).map(|b| code >> b & 1 == 1).collect::<Vec<bool>>())
            .filter(|b| cost(b) <= budget)
            .collect();
        let evaluations: Vec<CandidateEval> = candidates
            .par_iter()
            .map(|b| evaluate_blocks(t, b, &train_set, &val, &cfg.train))
            .collect::<Result<_>>()?;
        let best = evaluations.iter().fold(None::<&CandidateEval>, |acc, c| match acc {
            Some(a) if !c.beats(a) => Some(a),
            _ => Some(c),
        });
        let best = best.expect("the empty mask is always feasible").clone();
        return Ok(MaskSearchResult {
            mask: CascadeMask::from_blocks(t, &best.blocks)?,
            best,
            evaluations,
            nodes_expanded: 0,
            pruned: 0,
            exhaustive: true,
        });
    }

    let relaxation = |prefix: &[bool]| -> Vec<bool> {
        let mut b = prefix.to_vec();
        let mut used = cost(prefix);
        for &size in &sizes[prefix.len()..] {
            let on = used + size <= budget;
            used += if on { size } else { 0 };
            b.push(on);
        }
        b
    };
    // Undecided blocks all off: the cheapest completion of a prefix.
    let floor = |prefix: &[bool]| -> Vec<bool> {
        let mut b = prefix.to_vec();
        b.resize(nb, false);
        b
    };
    let mut cache: HashMap<Vec<bool>, CandidateEval> = HashMap::new();
    let mut evaluations: Vec<CandidateEval> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    let (mut expanded, mut pruned) = (0, 0);
    let mut incumbent: Option<CandidateEval> = None;

    // Scores both completions of every prefix not already cached, in
    // parallel, then folds them into the incumbent in a fixed order.
    let score = |prefixes: &[Vec<bool>],
                     cache: &mut HashMap<Vec<bool>, CandidateEval>,
                     evaluations: &mut Vec<CandidateEval>,
                     incumbent: &mut Option<CandidateEval>|
     -> Result<()> {
        let mut masks: Vec<Vec<bool>> = Vec::new();
        for p in prefixes {
            for m in [relaxation(p), floor(p)] {
                if !cache.contains_key(&m) && !masks.contains(&m) {
                    masks.push(m);
                }
            }
        }
        let results: Vec<CandidateEval> = masks
            .par_iter()
            .map(|m| evaluate_blocks(t, m, &train_set, &val, &cfg.train))
            .collect::<Result<_>>()?;
        for r in results {
            if incumbent.as_ref().is_none_or(|inc| r.beats(inc)) {
                *incumbent = Some(r.clone());
            }
            evaluations.push(r.clone());
            cache.insert(r.blocks.clone(), r);
        }
        Ok(())
    };
    let bound = |p: &[bool], cache: &HashMap<Vec<bool>, CandidateEval>| -> f64 {
        cache[&relaxation(p)].accuracy.max(cache[&floor(p)].accuracy)
    };

    score(&[vec![]], &mut cache, &mut evaluations, &mut incumbent)?;
    heap.push(Node { prefix: vec![], bound: bound(&[], &cache), seq });

    while let Some(node) = heap.pop() {
        if node.prefix.len() == nb {
            continue;
        }
        let inc = incumbent.as_ref().expect("root scored");
        if node.bound + cfg.margin < inc.accuracy {
            pruned += 1;
            continue;
        }
        if evaluations.len() >= cfg.max_evaluations {
            log::info!("mask search stopped at the evaluation cap of {}", cfg.max_evaluations);
            break;
        }
        expanded += 1;
        let children: Vec<Vec<bool>> = [true, false]
            .iter()
            .map(|&on| {
                let mut p = node.prefix.clone();
                p.push(on);
                p
            })
            .filter(|p| cost(p) <= budget)
            .collect();
        score(&children, &mut cache, &mut evaluations, &mut incumbent)?;
        for p in children {
            seq += 1;
            heap.push(Node { bound: bound(&p, &cache), prefix: p, seq });
        }
    }
    let best = incumbent.expect("root scored");
    Ok(MaskSearchResult {
        mask: CascadeMask::from_blocks(t, &best.blocks)?,
        best,
        evaluations,
        nodes_expanded: expanded,
        pruned,
        exhaustive: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub connections: usize,
    pub accuracy: f64,
    pub fpr: f64,
}

/// Validation accuracy and FPR for masks of each connection count, filled
/// layer by layer from shallow to deep.
pub fn sweep(t: &CfnnTopology, data: &Dataset, counts: &[usize], cfg: &SearchConfig) -> Result<Vec<SweepRow>> {
    let masks: Vec<CascadeMask> = counts.iter().map(|&c| CascadeMask::shallow_first(t, c)).collect::<Result<_>>()?;
    let (train_set, val) = split_validation(data, cfg.validation_fraction, cfg.split_seed)?;
    masks
        .into_par_iter()
        .map(|mask| {
            let connections = mask.count();
            let net = Cfnn::new(t.clone(), mask)?;
            let (p, _) = train(&net, &train_set, HeadKind::Stability, &cfg.train)?;
            let c = evaluate_stability(&net, &p, &val)?;
            Ok(SweepRow { connections, accuracy: c.accuracy(), fpr: c.fpr() })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("connections,accuracy,fpr\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.connections, r.accuracy, r.fpr));
    }
    s
}

/// Index of the best-accuracy row when it is neither the first nor last.
pub fn interior_maximum(rows: &[SweepRow]) -> Option<usize> {
    let best = (0..rows.len()).fold(None::<usize>, |b, i| match b {
        Some(j) if rows[j].accuracy >= rows[i].accuracy => Some(j),
        _ => Some(i),
    })?;
    (best > 0 && best + 1 < rows.len()).then_some(best)
}

/// Dataset restricted to the channels of `features`.
pub fn select_features(data: &Dataset, features: &[Feature]) -> Result<Dataset> {
    let g = data.spec.generators;
    let ns = data.spec.samples()?;
    let mut channels = Vec::new();
    for f in features {
        let fi = data
            .spec
            .features
            .iter()
            .position(|x| x == f)
            .ok_or_else(|| Error::Config(format!("dataset has no `{f}` channels")))?;
        channels.extend((0..g).map(|gi| data.spec.channel(fi, gi)));
    }
    let mut spec = data.spec.clone();
    spec.features = features.to_vec();
    let mut x = Vec::with_capacity(data.rows() * channels.len() * ns);
    for i in 0..data.rows() {
        let row = data.row(i);
        for &c in &channels {
            x.extend_from_slice(&row[c * ns..(c + 1) * ns]);
        }
    }
    let mut normalizer = data.normalizer.clone();
    normalizer.mean = channels.iter().map(|&c| data.normalizer.mean[c]).collect();
    normalizer.std = channels.iter().map(|&c| data.normalizer.std[c]).collect();
    normalizer.floored = channels
        .iter()
        .enumerate()
        .filter(|(_, c)| data.normalizer.floored.contains(c))
        .map(|(i, _)| i)
        .collect();
    Ok(Dataset { spec, x, normalizer, ..data.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSetScore {
    pub features: Vec<Feature>,
    /// Mean stability accuracy over the folds.
    pub accuracy: f64,
    pub fpr: f64,
}

/// K-fold cross-validated stability accuracy of a plain network for each
/// candidate feature set.
pub fn compare_feature_sets(
    data: &Dataset,
    sets: &[Vec<Feature>],
    hidden: &[usize],
    folds: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<FeatureSetScore>> {
    if folds < 2 || folds > data.rows() {
        return Err(Error::Config(format!("{folds} folds for {} rows", data.rows())));
    }
    let mut idx: Vec<usize> = (0..data.rows()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut scores = Vec::with_capacity(sets.len());
    for set in sets {
        let sub = select_features(data, set)?;
        let t = CfnnTopology::new(sub.spec.channels(), sub.spec.samples()?, hidden.to_vec(), 2)?;
        let mut confusion = Confusion::default();
        for k in 0..folds {
            let (lo, hi) = (k * idx.len() / folds, (k + 1) * idx.len() / folds);
            let val: Vec<usize> = idx[lo..hi].to_vec();
            let tr: Vec<usize> = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
            let net = Cfnn::new(t.clone(), CascadeMask::for_topology(&t))?;
            let (p, _) = train(&net, &sub.subset(&tr), HeadKind::Stability, cfg)?;
            let c = evaluate_stability(&net, &p, &sub.subset(&val))?;
            confusion.tp += c.tp;
            confusion.tn += c.tn;
            confusion.fp += c.fp;
            confusion.fn_ += c.fn_;
        }
        scores.push(FeatureSetScore { features: set.clone(), accuracy: confusion.accuracy(), fpr: confusion.fpr() });
    }
    Ok(scores)
}
