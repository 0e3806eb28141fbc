//! Evaluation: the facial pain score, regression and detection metrics, and
//! the leave-one-person-out harness.

mod lopo;
mod metrics;

pub use lopo::{learn_bases, run_lopo, EvalOptions, FoldResult, LopoReport};
pub use metrics::{auc, mse, pearson, prkachin_solomon};
