//! Conjugate-gradient training with Polak-Ribière updates, cascade-mask
//! selection and connection-count sweeps.

mod cg;
mod fit;
mod metrics;
mod search;

pub use cg::{
    cg_direction, line_search, minimize, pr_beta, CgState, IterationRecord, LineSearchConfig, LineSearchOutcome,
    Objective, StopReason, TrainConfig, TrainReport,
};
pub use fit::{head_batch, train, train_model, CfnnObjective};
pub use metrics::Confusion;
pub use search::{
    compare_feature_sets, evaluate_pair, evaluate_stability, interior_maximum, search_mask, select_features,
    split_validation, sweep, sweep_csv, CandidateEval, FeatureSetScore, MaskSearchResult, SearchConfig, SearchMode,
    SweepRow,
};
