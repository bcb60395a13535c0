use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CascadeMask, CfnnTopology};
use crate::error::{Error, Result};

/// Lower clamp on the target probability inside the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Rows per gradient chunk; partial sums are combined in chunk order.
const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq)]
struct Affine {
    rows: usize,
    cols: usize,
    w: usize,
    b: usize,
}

/// Architecture plus the layout of the flat parameter vector:
/// hidden layers in order (`W` row-major, then `b`), the output layer, then
/// one `N_s`-vector per active cascade connection, neuron-major with
/// channels ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Cfnn {
    topology: CfnnTopology,
    mask: CascadeMask,
    layers: Vec<Affine>,
    output: Affine,
    /// Per cascade-eligible neuron: (channel, parameter offset).
    cascades: Vec<Vec<(usize, usize)>>,
    /// First cascade neuron index of each hidden layer (layer 0 unused).
    cascade_base: Vec<usize>,
    params: usize,
}

/// Rows and integer targets for one objective evaluation.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub rows: Vec<&'a [f64]>,
    pub targets: Vec<usize>,
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Mean cross-entropy.
    pub loss: f64,
    /// Predicted-class counts.
    pub predicted: Vec<usize>,
    pub correct: usize,
    /// Gradient in flat-parameter order.
    pub grad: Vec<f64>,
}

/// Structured view of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CfnnWeights {
    /// Per hidden layer: row-major `W` and `b`.
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
    pub output: (Vec<f64>, Vec<f64>),
    /// `((neuron, channel), u)` for each active connection.
    pub cascades: Vec<((usize, usize), Vec<f64>)>,
}

/// `−ln max(p_target, LOG_CLAMP)`.
pub fn cross_entropy(probabilities: &[f64], target: usize) -> f64 {
    -probabilities[target].max(LOG_CLAMP).ln()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

impl Cfnn {
    pub fn new(topology: CfnnTopology, mask: CascadeMask) -> Result<Self> {
        topology.validate()?;
        if mask.channels() != topology.channels || mask.neurons() != topology.cascade_neurons() {
            return Err(Error::Dimension(format!(
                "mask is {}×{}, topology needs {}×{}",
                mask.neurons(),
                mask.channels(),
                topology.cascade_neurons(),
                topology.channels
            )));
        }
        let mut off = 0;
        let mut affine = |rows: usize, cols: usize| {
            let a = Affine { rows, cols, w: off, b: off + rows * cols };
            off += rows * cols + rows;
            a
        };
        let mut layers = Vec::with_capacity(topology.hidden.len());
        let mut fan_in = topology.input_width();
        for &n in &topology.hidden {
            layers.push(affine(n, fan_in));
            fan_in = n;
        }
        let output = affine(topology.classes, fan_in);
        let mut cascade_base = vec![0; topology.hidden.len()];
        let mut acc = 0;
        for l in 1..topology.hidden.len() {
            cascade_base[l] = acc;
            acc += topology.hidden[l];
        }
        let mut cascades = vec![Vec::new(); topology.cascade_neurons()];
        for (n, list) in cascades.iter_mut().enumerate() {
            for c in 0..topology.channels {
                if mask.get(n, c) {
                    list.push((c, off));
                    off += topology.samples;
                }
            }
        }
        Ok(Cfnn { topology, mask, layers, output, cascades, cascade_base, params: off })
    }

    pub fn topology(&self) -> &CfnnTopology {
        &self.topology
    }

    pub fn mask(&self) -> &CascadeMask {
        &self.mask
    }

    pub fn param_count(&self) -> usize {
        self.params
    }

    /// Offset of the `u` vector for an active connection.
    pub fn cascade_offset(&self, neuron: usize, channel: usize) -> Option<usize> {
        self.cascades[neuron].iter().find(|&&(c, _)| c == channel).map(|&(_, o)| o)
    }

    /// Glorot-uniform weights per matrix, zero biases and zero cascade
    /// vectors. The dense weights do not depend on the mask.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; self.params];
        for a in self.layers.iter().chain(std::iter::once(&self.output)) {
            let limit = (6.0 / (a.rows + a.cols) as f64).sqrt();
            for v in &mut p[a.w..a.b] {
                *v = rng.gen_range(-limit..limit);
            }
        }
        p
    }

    pub fn unflatten(&self, p: &[f64]) -> Result<CfnnWeights> {
        self.check_params(p)?;
        let split = |a: &Affine| (p[a.w..a.b].to_vec(), p[a.b..a.b + a.rows].to_vec());
        Ok(CfnnWeights {
            layers: self.layers.iter().map(split).collect(),
            output: split(&self.output),
            cascades: self
                .cascades
                .iter()
                .enumerate()
                .flat_map(|(n, list)| {
                    list.iter().map(move |&(c, o)| ((n, c), p[o..o + self.topology.samples].to_vec()))
                })
                .collect(),
        })
    }

    pub fn flatten(&self, w: &CfnnWeights) -> Result<Vec<f64>> {
        let mut p = vec![0.0; self.params];
        if w.layers.len() != self.layers.len() {
            return Err(Error::Dimension("layer count differs".into()));
        }
        for (a, (wm, b)) in self.layers.iter().chain(std::iter::once(&self.output)).zip(w.layers.iter().chain(std::iter::once(&w.output))) {
            if wm.len() != a.rows * a.cols || b.len() != a.rows {
                return Err(Error::Dimension("layer shape differs".into()));
            }
            p[a.w..a.b].copy_from_slice(wm);
            p[a.b..a.b + a.rows].copy_from_slice(b);
        }
        let expected: usize = self.cascades.iter().map(Vec::len).sum();
        if w.cascades.len() != expected {
            return Err(Error::Dimension(format!("{} cascade vectors for {expected} connections", w.cascades.len())));
        }
        for ((n, c), u) in &w.cascades {
            let o = self
                .cascades
                .get(*n)
                .and_then(|_| self.cascade_offset(*n, *c))
                .ok_or_else(|| Error::Dimension(format!("connection ({n}, {c}) is not in the mask")))?;
            if u.len() != self.topology.samples {
                return Err(Error::Dimension("cascade vector length differs".into()));
            }
            p[o..o + u.len()].copy_from_slice(u);
        }
        Ok(p)
    }

    fn check_params(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.params {
            return Err(Error::Dimension(format!("{} parameters, network has {}", p.len(), self.params)));
        }
        Ok(())
    }

    fn check_row(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.topology.input_width() {
            return Err(Error::Dimension(format!(
                "input width {} != {}",
                x.len(),
                self.topology.input_width()
            )));
        }
        Ok(())
    }

    fn workspace(&self) -> Vec<Vec<f64>> {
        self.topology.hidden.iter().map(|&n| vec![0.0; n]).collect()
    }

    /// Hidden activations into `hs` and output log-probabilities into `logp`.
    fn forward_into(&self, p: &[f64], x: &[f64], hs: &mut [Vec<f64>], logp: &mut [f64]) -> Result<()> {
        let ns = self.topology.samples;
        let act = self.topology.activation;
        for l in 0..self.layers.len() {
            let a = &self.layers[l];
            let (prev, rest) = hs.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &prev[l - 1] };
            let out = &mut rest[0];
            for j in 0..a.rows {
                let mut s = p[a.b + j] + dot(&p[a.w + j * a.cols..a.w + (j + 1) * a.cols], input);
                if l > 0 {
                    for &(c, o) in &self.cascades[self.cascade_base[l] + j] {
                        s += dot(&p[o..o + ns], &x[c * ns..(c + 1) * ns]);
                    }
                }
                out[j] = act.apply(s);
            }
            if !out.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { layer: l + 1 });
            }
        }
        let a = &self.output;
        let h = &hs[hs.len() - 1];
        for (k, z) in logp.iter_mut().enumerate() {
            *z = p[a.b + k] + dot(&p[a.w + k * a.cols..a.w + (k + 1) * a.cols], h);
        }
        let m = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::NonFinite { layer: self.layers.len() + 1 });
        }
        let lse = m + logp.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        logp.iter_mut().for_each(|z| *z -= lse);
        Ok(())
    }

    /// Class probabilities for one input row.
    pub fn forward(&self, p: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_params(p)?;
        self.check_row(x)?;
        let mut hs = self.workspace();
        let mut logp = vec![0.0; self.topology.classes];
        self.forward_into(p, x, &mut hs, &mut logp)?;
        Ok(logp.into_iter().map(f64::exp).collect())
    }

    pub fn classify(&self, p: &[f64], x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(p, x)?))
    }

    fn check_batch(&self, p: &[f64], batch: &Batch) -> Result<()> {
        self.check_params(p)?;
        if batch.rows.len() != batch.targets.len() || batch.is_empty() {
            return Err(Error::Dimension("batch rows and targets must be equal and non-empty".into()));
        }
        for (x, &t) in batch.rows.iter().zip(&batch.targets) {
            self.check_row(x)?;
            if t >= self.topology.classes {
                return Err(Error::Dimension(format!("target {t} outside {} classes", self.topology.classes)));
            }
        }
        Ok(())
    }

    /// Mean cross-entropy without the gradient.
    pub fn loss(&self, p: &[f64], batch: &Batch) -> Result<f64> {
        self.check_batch(p, batch)?;
        let parts: Vec<Result<f64>> = batch
            .rows
            .par_chunks(CHUNK)
            .zip(batch.targets.par_chunks(CHUNK))
            .map(|(rows, targets)| {
                let mut hs = self.workspace();
                let mut logp = vec![0.0; self.topology.classes];
                let mut s = 0.0;
                for (x, &t) in rows.iter().zip(targets) {
                    self.forward_into(p, x, &mut hs, &mut logp)?;
                    s += -logp[t].max(LOG_CLAMP.ln());
                }
                Ok(s)
            })
            .collect();
        let mut total = 0.0;
        for part in parts {
            total += part?;
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean cross-entropy and its exact gradient. Rows whose target
    /// probability falls below the clamp contribute a constant loss and no
    /// gradient.
    pub fn backward(&self, p: &[f64], batch: &Batch) -> Result<LossReport> {
        self.check_batch(p, batch)?;
        let parts: Vec<Result<LossReport>> = batch
            .rows
            .par_chunks(CHUNK)
            .zip(batch.targets.par_chunks(CHUNK))
            .map(|(rows, targets)| self.chunk_gradient(p, rows, targets))
            .collect();
        let mut total = LossReport {
            loss: 0.0,
            predicted: vec![0; self.topology.classes],
            correct: 0,
            grad: vec![0.0; self.params],
        };
        for part in parts {
            let part = part?;
            total.loss += part.loss;
            total.correct += part.correct;
            total.predicted.iter_mut().zip(&part.predicted).for_each(|(a, b)| *a += b);
            total.grad.iter_mut().zip(&part.grad).for_each(|(a, b)| *a += b);
        }
        // Same division as `loss`, so both report bit-identical values.
        total.loss /= batch.len() as f64;
        let inv = 1.0 / batch.len() as f64;
        total.grad.iter_mut().for_each(|g| *g *= inv);
        Ok(total)
    }

    fn chunk_gradient(&self, p: &[f64], rows: &[&[f64]], targets: &[usize]) -> Result<LossReport> {
        let ns = self.topology.samples;
        let act = self.topology.activation;
        let k_classes = self.topology.classes;
        let mut rep = LossReport { loss: 0.0, predicted: vec![0; k_classes], correct: 0, grad: vec![0.0; self.params] };
        let g = &mut rep.grad;
        let mut hs = self.workspace();
        let mut logp = vec![0.0; k_classes];
        let mut dz = vec![0.0; k_classes];
        let mut dh: Vec<f64> = Vec::new();
        let mut da: Vec<f64> = Vec::new();
        let clamp = LOG_CLAMP.ln();
        for (x, &t) in rows.iter().zip(targets) {
            self.forward_into(p, x, &mut hs, &mut logp)?;
            let pred = argmax(&logp);
            rep.predicted[pred] += 1;
            rep.correct += usize::from(pred == t);
            if logp[t] < clamp {
                rep.loss -= clamp;
                continue;
            }
            rep.loss -= logp[t];
            for (k, d) in dz.iter_mut().enumerate() {
                *d = logp[k].exp() - f64::from(u8::from(k == t));
            }

            let o = &self.output;
            let h_last = &hs[hs.len() - 1];
            dh.clear();
            dh.resize(o.cols, 0.0);
            for (k, &d) in dz.iter().enumerate() {
                axpy(d, h_last, &mut g[o.w + k * o.cols..o.w + (k + 1) * o.cols]);
                g[o.b + k] += d;
                axpy(d, &p[o.w + k * o.cols..o.w + (k + 1) * o.cols], &mut dh);
            }

            for l in (0..self.layers.len()).rev() {
                let a = &self.layers[l];
                da.clear();
                da.extend(dh.iter().zip(&hs[l]).map(|(d, &h)| d * act.slope(h)));
                let input: &[f64] = if l == 0 { x } else { &hs[l - 1] };
                for (j, &d) in da.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    axpy(d, input, &mut g[a.w + j * a.cols..a.w + (j + 1) * a.cols]);
                    g[a.b + j] += d;
                    if l > 0 {
                        for &(c, off) in &self.cascades[self.cascade_base[l] + j] {
                            axpy(d, &x[c * ns..(c + 1) * ns], &mut g[off..off + ns]);
                        }
                    }
                }
                if l > 0 {
                    dh.clear();
                    dh.resize(a.cols, 0.0);
                    for (j, &d) in da.iter().enumerate() {
                        axpy(d, &p[a.w + j * a.cols..a.w + (j + 1) * a.cols], &mut dh);
                    }
                }
            }
        }
        Ok(rep)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
