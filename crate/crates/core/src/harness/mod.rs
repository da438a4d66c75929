//! Evaluation: metrics, operating curves and the Monte-Carlo experiment.

mod curve;
mod experiment;
mod metrics;
mod output;

pub use curve::{
    default_w_grid, interpolate_te, median, pmur_buckets, random_router_curve, sweep_predictions, sweep_router,
    CurvePoint, PMUR_BUCKETS,
};
pub use experiment::{
    aggregate, fit_routers, fit_shift_models, load_pool, prepare_round, quality_spec, round_data, run_experiment, run_experiment_with, run_round, synthetic_pb_count,
    RoundData, RoundOutput, ROUTER_ORDER,
};
pub use metrics::{efficiency_gain, pmur, total_efficiency};
pub use output::{
    write_curves, AggregateRow, CurveRecord, ExperimentMeta, ResultsTable, RoundFailure, RoundMeta, AGGREGATE_FILE, CURVES_FILE,
    META_FILE,
};
