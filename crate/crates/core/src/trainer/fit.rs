use crate::cfnn::{Batch, Cfnn, CfnnModel, HeadKind};
use crate::error::{Error, Result};
use crate::scenario_data::Dataset;

use super::{minimize, Objective, TrainConfig, TrainReport};

/// Full-batch mean cross-entropy of a network.
pub struct CfnnObjective<'a> {
    pub net: &'a Cfnn,
    pub batch: Batch<'a>,
}

impl Objective for CfnnObjective<'_> {
    fn dim(&self) -> usize {
        self.net.param_count()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.net.loss(x, &self.batch)
    }

    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let rep = self.net.backward(x, &self.batch)?;
        Ok((rep.loss, rep.grad))
    }
}

/// Rows and targets for one head: every row for the stability head
/// (target 1 = unstable), unstable rows only for the pair head.
pub fn head_batch(data: &Dataset, head: HeadKind) -> Batch<'_> {
    let mut batch = Batch { rows: Vec::new(), targets: Vec::new() };
    for i in 0..data.rows() {
        match head {
            HeadKind::Stability => {
                batch.rows.push(data.row(i));
                batch.targets.push(usize::from(data.is_unstable(i)));
            }
            HeadKind::Pair => {
                if let Some(c) = data.pair_class(i) {
                    batch.rows.push(data.row(i));
                    batch.targets.push(c);
                }
            }
        }
    }
    batch
}

/// Trains `net` from its seeded initialization on one head of `data`.
pub fn train(net: &Cfnn, data: &Dataset, head: HeadKind, cfg: &TrainConfig) -> Result<(Vec<f64>, TrainReport)> {
    let t = net.topology();
    if t.channels != data.spec.channels() || t.samples != data.spec.samples()? {
        return Err(Error::WindowMismatch(format!(
            "network expects {} channels × {} samples, dataset has {} × {}",
            t.channels,
            t.samples,
            data.spec.channels(),
            data.spec.samples()?
        )));
    }
    let batch = head_batch(data, head);
    if batch.is_empty() {
        return Err(Error::Config(format!("no training rows for the {head} head")));
    }
    if let Some(&bad) = batch.targets.iter().find(|&&c| c >= t.classes) {
        return Err(Error::Config(format!("target class {bad} exceeds the {}-class output", t.classes)));
    }
    let obj = CfnnObjective { net, batch };
    minimize(&obj, net.init_params(cfg.seed), cfg)
}

/// Trains a head and bundles it with the dataset's window and normalizer.
pub fn train_model(net: Cfnn, data: &Dataset, head: HeadKind, cfg: &TrainConfig) -> Result<(CfnnModel, TrainReport)> {
    let (params, report) = train(&net, data, head, cfg)?;
    let mut model = CfnnModel::new(head, net, params, data.spec.clone(), data.normalizer.clone())?;
    let meta = &mut model.meta;
    meta.insert("iterations".into(), report.iterations.to_string());
    meta.insert("final_loss".into(), report.final_loss.to_string());
    meta.insert("grad_norm".into(), report.grad_norm.to_string());
    meta.insert("restarts".into(), report.restarts.to_string());
    meta.insert("line_search_failures".into(), report.line_search_failures.to_string());
    meta.insert("stop".into(), format!("{:?}", report.stop));
    meta.insert("seed".into(), cfg.seed.to_string());
    meta.insert("dataset_hash".into(), data.provenance.config_hash.clone());
    Ok((model, report))
}
