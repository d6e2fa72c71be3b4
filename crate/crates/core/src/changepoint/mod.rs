//! Change points along one-dimensional trajectories.
//!
//! Two complementary tools live here: an exhaustive least-squares fit of a
//! single 0th-order (level jump) or 1st-order (slope change) knot, and a
//! multi-change detector that scores every time with a smoothed local
//! linear trend, extracts strict peaks per stream and fuses them across
//! modes. Times are 1-based throughout this module.

mod fusion;
mod llt;
mod piecewise;

use serde::{Deserialize, Serialize};

pub use fusion::{
    candidate_peaks, evaluate, evaluate_with, fuse_topk, ChangePointReport, Evaluation,
    FusedCandidate, MatchRule, Peak, Stream, StreamSummary, DEFAULT_MIN_SEPARATION,
    DEFAULT_TOLERANCE,
};
pub use llt::{llt_scores, LltFit, ScoreSeries};
pub use piecewise::{
    fit_piecewise, fixed_knot_rss, order0_separation_closed_form, order1_segment_bound,
    separation_alpha, separation_oracle, template, PiecewiseFit, SeparationCheck,
};

/// Change-point order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    /// 0th order: jump in level.
    Level,
    /// 1st order: change in slope.
    Slope,
}

impl Order {
    pub fn as_index(self) -> usize {
        match self {
            Order::Level => 0,
            Order::Slope => 1,
        }
    }

    pub fn from_index(i: usize) -> crate::error::Result<Self> {
        match i {
            0 => Ok(Order::Level),
            1 => Ok(Order::Slope),
            other => Err(crate::error::Error::Validation(format!(
                "change-point order must be 0 or 1, got {other}"
            ))),
        }
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Order::Level => "level",
            Order::Slope => "slope",
        })
    }
}

/// Scores every mode trajectory and fuses level and slope streams.
pub fn detect(
    trajectories: &[Vec<f64>],
    k: usize,
    min_separation: usize,
) -> crate::error::Result<(Vec<ScoreSeries>, ChangePointReport)> {
    use rayon::prelude::*;
    let scores: Vec<ScoreSeries> = trajectories
        .par_iter()
        .enumerate()
        .map(|(mode, psi)| {
            llt_scores(psi).map(|mut s| {
                s.mode = mode;
                s
            })
        })
        .collect::<crate::error::Result<_>>()?;
    let streams: Vec<Stream> = scores.iter().flat_map(ScoreSeries::streams).collect();
    let report = fuse_topk(&streams, k, min_separation)?;
    Ok((scores, report))
}
