//! Metrics and the experiment protocols built on them.

mod metrics;
mod protocol;

pub use metrics::{
    evaluate, evaluate_prepared, joint_goal_accuracy, mean_reward, predict_prepared, score_predictions,
    turn_level_accuracy, turn_score, Metrics,
};
pub use protocol::{
    curve_csv, run_setup_matrix, run_weak_curve, weak_subset, AverageRow, CurvePoint, TransferCell, TransferMatrix,
};
