//! Experiment drivers. Each experiment is a pure function of the target
//! model, an [`ExperimentSpec`] and its master seed; rounds run in
//! parallel on per-round seed substreams and results come back in round
//! order, so re-runs give identical rows.

mod experiments;
mod miss_rate;
mod rows;
mod toy;

pub use experiments::{
    attack_rounds, detection_sweep, group_collision, knowledgeable, overhead, recovery_table, timing, DetectionPoint,
    KnowledgeableReport, KnowledgeableRow, OverheadReport, RecoveryPoint, TradeoffRow,
};
pub use miss_rate::{miss_rate, wilson_interval, MissRate, MissRateSpec};
pub use rows::{format_rows, read_rows, write_rows, ExperimentSpec, ResultRow, RESULTS_HEADER};
pub use toy::{toy_target, Target, ToyConfig};
