use super::TraceSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPair {
    /// Zero-based generator indices, `pair.0 < pair.1`.
    pub pair: (usize, usize),
    /// Time of the first threshold crossing (s).
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Labeling {
    pub unstable: bool,
    /// Present iff `unstable`.
    pub critical: Option<CriticalPair>,
}

/// Unstable iff some pairwise rotor-angle difference reaches `threshold` at
/// any sample from fault onset on. Angles are integrated continuously, so
/// the differences are already unwrapped. The critical pair is the one
/// crossing first; simultaneous crossings resolve to the lexicographically
/// smallest pair.
pub fn label_stability(traces: &TraceSet, threshold: f64) -> Labeling {
    let n = traces.generator_count();
    let start = traces.index_of(traces.t_fault).unwrap_or(0);
    for k in start..traces.len() {
        for i in 0..n {
            for j in i + 1..n {
                if (traces.delta[i][k] - traces.delta[j][k]).abs() >= threshold {
                    return Labeling {
                        unstable: true,
                        critical: Some(CriticalPair {
                            pair: (i, j),
                            time: k as f64 * traces.dt,
                        }),
                    };
                }
            }
        }
    }
    Labeling::default()
}
