use std::collections::VecDeque;

use super::WindowSpec;
use crate::error::{Error, Result};
use crate::transim::TraceSet;

/// Raw (unnormalized) feature vector whose right edge is the sample at
/// `clear_time`. Layout is channel-major: `row[ch * N_s + i]`, oldest first.
pub fn extract_window(traces: &TraceSet, spec: &WindowSpec, clear_time: f64) -> Result<Vec<f64>> {
    let ns = spec.samples()?;
    if traces.generator_count() != spec.generators {
        return Err(Error::WindowMismatch(format!(
            "trace has {} generators, window expects {}",
            traces.generator_count(),
            spec.generators
        )));
    }
    let stride = spec.stride(traces.dt)?;
    let kc = traces.index_of(clear_time).ok_or(Error::OffGrid { time: clear_time, dt: traces.dt })?;
    if kc >= traces.len() {
        return Err(Error::Config(format!(
            "clear time {clear_time} s is past the end of the trace ({} s)",
            traces.end_time()
        )));
    }
    let span = (ns - 1) * stride;
    if kc < span {
        return Err(Error::InsufficientHistory {
            needed: span as f64 * traces.dt,
            available: kc as f64 * traces.dt,
        });
    }
    let first = kc - span;
    let mut row = Vec::with_capacity(spec.channels() * ns);
    for &f in &spec.features {
        for series in f.series(traces) {
            row.extend((0..ns).map(|i| series[first + i * stride]));
        }
    }
    Ok(row)
}

/// Measurement buffer that keeps the most recent frames at the trace rate
/// and, when latched on the clearance event, decimates them into a window
/// anchored at the latest frame.
#[derive(Debug, Clone)]
pub struct LatchedWindow {
    spec: WindowSpec,
    ns: usize,
    stride: usize,
    frames: VecDeque<Vec<f64>>,
}

impl LatchedWindow {
    pub fn new(spec: &WindowSpec, dt: f64) -> Result<Self> {
        let ns = spec.samples()?;
        let stride = spec.stride(dt)?;
        Ok(LatchedWindow {
            spec: spec.clone(),
            ns,
            stride,
            frames: VecDeque::with_capacity((ns - 1) * stride + 1),
        })
    }

    fn capacity(&self) -> usize {
        (self.ns - 1) * self.stride + 1
    }

    /// Appends one frame of channel values (feature-major order).
    pub fn push(&mut self, frame: &[f64]) -> Result<()> {
        if frame.len() != self.spec.channels() {
            return Err(Error::WindowMismatch(format!(
                "frame has {} channels, window expects {}",
                frame.len(),
                self.spec.channels()
            )));
        }
        if self.frames.len() == self.capacity() {
            let mut old = self.frames.pop_front().unwrap();
            old.copy_from_slice(frame);
            self.frames.push_back(old);
        } else {
            self.frames.push_back(frame.to_vec());
        }
        Ok(())
    }

    /// Pushes sample `k` of every channel of `traces`.
    pub fn push_trace_sample(&mut self, traces: &TraceSet, k: usize) -> Result<()> {
        let frame: Vec<f64> = self
            .spec
            .features
            .iter()
            .flat_map(|f| f.series(traces).iter().map(move |s| s[k]))
            .collect();
        self.push(&frame)
    }

    pub fn is_full(&self) -> bool {
        self.frames.len() == self.capacity()
    }

    /// Freezes the buffer into a channel-major window.
    pub fn latch(&self, dt: f64) -> Result<Vec<f64>> {
        if !self.is_full() {
            let span = (self.capacity() - 1) as f64 * dt;
            let have = self.frames.len().saturating_sub(1) as f64 * dt;
            return Err(Error::InsufficientHistory { needed: span, available: have });
        }
        let c = self.spec.channels();
        let mut row = vec![0.0; c * self.ns];
        for i in 0..self.ns {
            let frame = &self.frames[i * self.stride];
            for ch in 0..c {
                row[ch * self.ns + i] = frame[ch];
            }
        }
        Ok(row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_data::Feature;
    use crate::transim::Labeling;

    /// Two generators, each series encodes (feature, generator, sample).
    fn synthetic(len: usize, shift: usize) -> TraceSet {
        let s = |f: f64| -> Vec<Vec<f64>> {
            (0..2)
                .map(|g| (0..len).map(|k| f * 1e6 + g as f64 * 1e5 + k.saturating_sub(shift) as f64).collect())
                .collect()
        };
        TraceSet {
            dt: 1e-3,
            t_fault: 0.1,
            t_clear: 0.2,
            delta: s(4.0),
            omega: s(3.0),
            pe: s(1.0),
            vt: s(2.0),
            labeling: Labeling::default(),
        }
    }

    fn spec() -> WindowSpec {
        WindowSpec { fs: 500.0, ltw: 0.01, features: Feature::DEFAULT.to_vec(), generators: 2 }
    }

    #[test]
    fn right_edge_is_clearance_sample() {
        let t = synthetic(400, 0);
        let row = extract_window(&t, &spec(), 0.249).unwrap();
        assert_eq!(row.len(), 6 * 5);
        // pe of generator 2: samples 241, 243, ..., 249.
        assert_eq!(&row[5..10], &[100241.0 + 1e6, 100243.0 + 1e6, 100245.0 + 1e6, 100247.0 + 1e6, 100249.0 + 1e6]);
        // omega of generator 1 is channel 4.
        assert_eq!(row[4 * 5 + 4], 3e6 + 249.0);
    }

    #[test]
    fn constant_traces_give_constant_channels() {
        let mut t = synthetic(300, 0);
        for s in [&mut t.pe, &mut t.vt, &mut t.omega] {
            for (g, series) in s.iter_mut().enumerate() {
                series.iter_mut().for_each(|v| *v = g as f64 + 0.5);
            }
        }
        let row = extract_window(&t, &spec(), 0.2).unwrap();
        for ch in 0..6 {
            let w = &row[ch * 5..ch * 5 + 5];
            assert!(w.iter().all(|&v| v == w[0]));
        }
    }

    #[test]
    fn translation_consistent() {
        let a = synthetic(400, 0);
        let b = synthetic(400, 7);
        assert_eq!(
            extract_window(&a, &spec(), 0.2).unwrap(),
            extract_window(&b, &spec(), 0.207).unwrap()
        );
    }

    #[test]
    fn insufficient_history_reports_span() {
        let t = synthetic(400, 0);
        match extract_window(&t, &spec(), 0.005) {
            Err(Error::InsufficientHistory { needed, available }) => {
                assert!((needed - 0.008).abs() < 1e-12);
                assert!((available - 0.005).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn latched_buffer_matches_extraction() {
        let t = synthetic(400, 0);
        let mut w = LatchedWindow::new(&spec(), t.dt).unwrap();
        assert!(w.latch(t.dt).is_err());
        for k in 0..=231 {
            w.push_trace_sample(&t, k).unwrap();
        }
        assert_eq!(w.latch(t.dt).unwrap(), extract_window(&t, &spec(), 0.231).unwrap());
        assert!(w.push(&[0.0; 3]).is_err());
    }
}
