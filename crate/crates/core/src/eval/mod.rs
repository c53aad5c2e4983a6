//! Prediction files, soft-voting ensembles and challenge scoring.

mod predict;
mod records;
mod score;
mod vote;

pub use predict::{predict_dataset, predict_records, to_record};
pub use records::{
    argmax, read_predictions, read_predictions_from, write_predictions, write_predictions_to, PredictionRecord,
    SIMPLEX_TOLERANCE,
};
pub use score::{config_hash, evaluate, video_of, EvalMode, ScoreReport};
pub use vote::soft_vote;
