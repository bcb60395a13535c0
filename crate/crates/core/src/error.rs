use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid file line {line}: {msg}")]
    GridParse { line: usize, msg: String },

    #[error("invalid grid model: {0}")]
    InvalidModel(String),

    #[error("unknown {what} index {index}")]
    UnknownElement { what: &'static str, index: usize },

    #[error("network is disconnected; island of buses {buses:?}")]
    Islanded { buses: Vec<u32> },

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e} pu)")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },

    #[error("eliminated admittance block is singular over nodes {nodes:?}")]
    SingularReduction { nodes: Vec<usize> },

    #[error("double-line-to-ground composition is undefined: z2 + z0 = 0")]
    DegenerateFault,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("event time {time} s is not on the integration grid (dt = {dt} s)")]
    OffGrid { time: f64, dt: f64 },

    #[error("simulation diverged at t = {time:.4} s")]
    SimulationDiverged { time: f64 },

    #[error("sample count F_s x LTW = {0} is not an integer")]
    NonIntegralSamples(f64),

    #[error("insufficient history: window needs {needed:.4} s before clearance, trace has {available:.4} s")]
    InsufficientHistory { needed: f64, available: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset format: {0}")]
    DatasetFormat(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: usize },

    #[error("objective became non-finite at iteration {iteration}")]
    TrainingDiverged { iteration: usize },

    #[error("search direction is not a descent direction (slope {slope:e})")]
    NotDescent { slope: f64 },

    #[error("previous gradient is zero; the optimizer has converged")]
    ZeroGradient,

    #[error("window spec mismatch: {0}")]
    WindowMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures as opposed to bad input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::PowerFlowDiverged { .. }
                | Error::SingularReduction { .. }
                | Error::DegenerateFault
                | Error::SimulationDiverged { .. }
                | Error::NonFinite { .. }
                | Error::TrainingDiverged { .. }
                | Error::NotDescent { .. }
                | Error::ZeroGradient
        )
    }
}
