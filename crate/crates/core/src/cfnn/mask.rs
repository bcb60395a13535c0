use super::CfnnTopology;
use crate::error::{Error, Result};

/// Binary selection of cascade connections over (cascade-eligible neuron,
/// channel). Bit `n * channels + c` connects channel `c` to neuron `n`,
/// where neurons are numbered across layers 2..L in order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CascadeMask {
    channels: usize,
    neurons: usize,
    bits: Vec<bool>,
}

impl CascadeMask {
    pub fn empty(channels: usize, neurons: usize) -> Self {
        CascadeMask { channels, neurons, bits: vec![false; channels * neurons] }
    }

    pub fn full(channels: usize, neurons: usize) -> Self {
        CascadeMask { channels, neurons, bits: vec![true; channels * neurons] }
    }

    pub fn for_topology(t: &CfnnTopology) -> Self {
        Self::empty(t.channels, t.cascade_neurons())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn get(&self, neuron: usize, channel: usize) -> bool {
        self.bits[neuron * self.channels + channel]
    }

    pub fn set(&mut self, neuron: usize, channel: usize, on: bool) {
        self.bits[neuron * self.channels + channel] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Mask with whole cascade layers (blocks) switched on. `blocks[b]`
    /// covers hidden layer `b + 2`.
    pub fn from_blocks(t: &CfnnTopology, blocks: &[bool]) -> Result<Self> {
        if blocks.len() != t.cascade_layers() {
            return Err(Error::Config(format!(
                "{} block flags for {} cascade layers",
                blocks.len(),
                t.cascade_layers()
            )));
        }
        let mut m = Self::for_topology(t);
        let mut n0 = 0;
        for (b, &on) in blocks.iter().enumerate() {
            let size = t.hidden[b + 1];
            if on {
                m.bits[n0 * t.channels..(n0 + size) * t.channels].fill(true);
            }
            n0 += size;
        }
        Ok(m)
    }

    /// First `count` connections in shallow-to-deep order; `count` must
    /// fill whole layers.
    pub fn shallow_first(t: &CfnnTopology, count: usize) -> Result<Self> {
        if count > t.max_connections() {
            return Err(Error::Config(format!(
                "{count} connections exceed the maximum of {}",
                t.max_connections()
            )));
        }
        let mut blocks = vec![false; t.cascade_layers()];
        let mut filled = 0;
        for (b, on) in blocks.iter_mut().enumerate() {
            if filled >= count {
                break;
            }
            *on = true;
            filled += t.hidden[b + 1] * t.channels;
        }
        if filled != count {
            return Err(Error::Config(format!("{count} connections is not a whole number of layer blocks")));
        }
        Self::from_blocks(t, &blocks)
    }

    /// Run lengths alternating off/on, starting with an off run (possibly 0).
    pub fn to_runs(&self) -> Vec<usize> {
        let mut runs = vec![0];
        let mut cur = false;
        for &b in &self.bits {
            if b != cur {
                runs.push(0);
                cur = b;
            }
            *runs.last_mut().unwrap() += 1;
        }
        runs
    }

    pub fn from_runs(channels: usize, neurons: usize, runs: &[usize]) -> Result<Self> {
        let mut bits = Vec::with_capacity(channels * neurons);
        for (k, &r) in runs.iter().enumerate() {
            bits.extend(std::iter::repeat(k % 2 == 1).take(r));
        }
        if bits.len() != channels * neurons {
            return Err(Error::ModelFormat(format!(
                "mask runs cover {} bits, expected {}",
                bits.len(),
                channels * neurons
            )));
        }
        Ok(CascadeMask { channels, neurons, bits })
    }
}
