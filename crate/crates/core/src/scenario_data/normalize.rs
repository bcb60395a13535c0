use crate::error::{Error, Result};

/// Per-channel z-score statistics. Each channel pools all of its samples
/// across the fitted rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub samples: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose standard deviation was clamped to the floor.
    pub floored: Vec<usize>,
}

impl Normalizer {
    pub const STD_FLOOR: f64 = 1e-9;

    /// Fits on row-major `rows` of width `channels * samples`.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, channels: usize, samples: usize) -> Result<Self> {
        let width = channels * samples;
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        if rows.len() < 2 {
            return Err(Error::Config(format!("normalizer needs at least 2 rows, got {}", rows.len())));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::Dimension(format!("row width {} != {width}", r.len())));
        }
        let count = (rows.len() * samples) as f64;
        let mut mean = vec![0.0; channels];
        let mut std = vec![0.0; channels];
        let mut floored = Vec::new();
        for ch in 0..channels {
            let range = ch * samples..(ch + 1) * samples;
            let m = rows.iter().map(|r| r[range.clone()].iter().sum::<f64>()).sum::<f64>() / count;
            let var = rows
                .iter()
                .map(|r| r[range.clone()].iter().map(|v| (v - m).powi(2)).sum::<f64>())
                .sum::<f64>()
                / count;
            mean[ch] = m;
            std[ch] = var.sqrt();
            if !(std[ch] >= Self::STD_FLOOR) {
                std[ch] = Self::STD_FLOOR;
                floored.push(ch);
            }
        }
        if !floored.is_empty() {
            log::warn!("normalizer: {} channel(s) with zero variance clamped: {floored:?}", floored.len());
        }
        Ok(Normalizer { samples, mean, std, floored })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.channels() * self.samples);
        for (ch, chunk) in row.chunks_mut(self.samples).enumerate() {
            let (m, s) = (self.mean[ch], self.std[ch]);
            chunk.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
    }

    pub fn applied(&self, row: &[f64]) -> Vec<f64> {
        let mut out = row.to_vec();
        self.apply(&mut out);
        out
    }
}
