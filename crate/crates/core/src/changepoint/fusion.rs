use serde::{Deserialize, Serialize};

use super::Order;
use crate::error::{Error, Result};
use crate::linalg::median;

pub const DEFAULT_MIN_SEPARATION: usize = 2;
pub const DEFAULT_TOLERANCE: usize = 2;

/// One score sequence: the level or slope scores of one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stream {
    pub mode: usize,
    pub order: Order,
    /// Score at 1-based time t is `scores[t-1]`.
    pub scores: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// 1-based time.
    pub time: usize,
    pub score: f64,
}

/// Strict interior local maxima, ranked by score with earlier times first
/// among ties.
pub fn candidate_peaks(scores: &[f64]) -> Vec<Peak> {
    let mut peaks: Vec<Peak> = (1..scores.len().saturating_sub(1))
        .filter(|&i| scores[i] > scores[i - 1] && scores[i] > scores[i + 1])
        .map(|i| Peak {
            time: i + 1,
            score: scores[i],
        })
        .collect();
    peaks.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.time.cmp(&b.time)));
    peaks
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedCandidate {
    pub time: usize,
    /// Raw score divided by the family median.
    pub score: f64,
    pub raw_score: f64,
    pub mode: usize,
    pub order: Order,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub mode: usize,
    pub order: Order,
    pub normalizer: f64,
    pub nominated: Vec<Peak>,
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePointReport {
    /// Selected change points in rank order.
    pub candidates: Vec<FusedCandidate>,
    /// Every merged nominee in rank order, before the separation rule.
    pub pool: Vec<FusedCandidate>,
    pub streams: Vec<StreamSummary>,
    pub k: usize,
    pub min_separation: usize,
    /// No stream nominated any candidate.
    pub empty: bool,
    pub evaluation: Option<Evaluation>,
}

impl ChangePointReport {
    pub fn times(&self) -> Vec<usize> {
        self.candidates.iter().map(|c| c.time).collect()
    }

    pub fn with_evaluation(mut self, truth: &[usize], tol: usize, rule: MatchRule) -> Self {
        self.evaluation = Some(evaluate_with(&self.times(), truth, tol, rule));
        self
    }
}

/// Fuses per-stream top-K peaks into at most K separated change points.
///
/// Each nominated score is divided by the median of all scores in its
/// family (level or slope, pooled across modes). Duplicate times keep the
/// largest fused score; the pooled list is ranked and taken greedily subject
/// to `|t − s| ≥ min_separation`.
pub fn fuse_topk(streams: &[Stream], k: usize, min_separation: usize) -> Result<ChangePointReport> {
    if streams.is_empty() {
        return Err(Error::Validation("fusion needs at least one stream".into()));
    }
    let normalizer = |order: Order| -> f64 {
        let all: Vec<f64> = streams
            .iter()
            .filter(|s| s.order == order)
            .flat_map(|s| s.scores.iter().copied())
            .collect();
        let med = median(&all).unwrap_or(0.0);
        if med > 0.0 {
            med
        } else {
            // fall back to the family maximum when most scores are zero
            let max = all.iter().copied().fold(0.0, f64::max);
            if max > 0.0 {
                max
            } else {
                1.0
            }
        }
    };
    let norms = [normalizer(Order::Level), normalizer(Order::Slope)];

    let mut summaries = Vec::with_capacity(streams.len());
    let mut pool: Vec<FusedCandidate> = Vec::new();
    for s in streams {
        let norm = norms[s.order.as_index()];
        let nominated: Vec<Peak> = candidate_peaks(&s.scores).into_iter().take(k).collect();
        for p in &nominated {
            let cand = FusedCandidate {
                time: p.time,
                score: p.score / norm,
                raw_score: p.score,
                mode: s.mode,
                order: s.order,
            };
            match pool.iter_mut().find(|c| c.time == p.time) {
                Some(existing) if cand.score > existing.score => *existing = cand,
                Some(_) => {}
                None => pool.push(cand),
            }
        }
        summaries.push(StreamSummary {
            mode: s.mode,
            order: s.order,
            normalizer: norm,
            nominated,
            scores: s.scores.clone(),
        });
    }
    pool.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.time.cmp(&b.time)));

    let mut selected: Vec<FusedCandidate> = Vec::new();
    for c in &pool {
        if selected.len() >= k {
            break;
        }
        if selected
            .iter()
            .all(|s| s.time.abs_diff(c.time) >= min_separation)
        {
            selected.push(*c);
        }
    }
    let empty = pool.is_empty();
    if empty {
        log::warn!("no stream produced a strict peak");
    }
    Ok(ChangePointReport {
        candidates: selected,
        pool,
        streams: summaries,
        k,
        min_separation,
        empty,
        evaluation: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchRule {
    /// Predictions in rank order take the nearest unmatched truth.
    Greedy,
    /// Maximum number of matches, then minimum total offset.
    Optimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub true_positives: usize,
    pub predicted: usize,
    pub actual: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean |prediction − truth| over matches; `None` without matches.
    pub mae: Option<f64>,
    /// (prediction, truth) pairs.
    pub matches: Vec<(usize, usize)>,
}

/// Greedy matching with tolerance `tol`.
pub fn evaluate(pred: &[usize], truth: &[usize], tol: usize) -> Evaluation {
    evaluate_with(pred, truth, tol, MatchRule::Greedy)
}

pub fn evaluate_with(pred: &[usize], truth: &[usize], tol: usize, rule: MatchRule) -> Evaluation {
    let matches = match rule {
        MatchRule::Greedy => greedy_matches(pred, truth, tol),
        MatchRule::Optimal => optimal_matches(pred, truth, tol),
    };
    let tp = matches.len();
    let (np, nt) = (pred.len(), truth.len());
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let f1 = if np + nt == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (np + nt) as f64
    };
    let mae = (tp > 0).then(|| {
        matches
            .iter()
            .map(|&(p, t)| p.abs_diff(t) as f64)
            .sum::<f64>()
            / tp as f64
    });
    Evaluation {
        true_positives: tp,
        predicted: np,
        actual: nt,
        precision: ratio(tp, np),
        recall: ratio(tp, nt),
        f1,
        mae,
        matches,
    }
}

fn greedy_matches(pred: &[usize], truth: &[usize], tol: usize) -> Vec<(usize, usize)> {
    let mut used = vec![false; truth.len()];
    let mut out = Vec::new();
    for &p in pred {
        let best = truth
            .iter()
            .enumerate()
            .filter(|&(j, &t)| !used[j] && p.abs_diff(t) <= tol)
            .min_by_key(|&(_, &t)| (p.abs_diff(t), t));
        if let Some((j, &t)) = best {
            used[j] = true;
            out.push((p, t));
        }
    }
    out
}

/// Dynamic programme over sorted times; optimal matchings on a line never cross.
fn optimal_matches(pred: &[usize], truth: &[usize], tol: usize) -> Vec<(usize, usize)> {
    let mut p: Vec<usize> = pred.to_vec();
    let mut t: Vec<usize> = truth.to_vec();
    p.sort_unstable();
    t.sort_unstable();
    let (a, b) = (p.len(), t.len());
    // (matches, −cost), compared lexicographically
    let mut dp = vec![vec![(0usize, 0i64); b + 1]; a + 1];
    for i in 1..=a {
        for j in 1..=b {
            let mut best = dp[i - 1][j].max(dp[i][j - 1]);
            let gap = p[i - 1].abs_diff(t[j - 1]);
            if gap <= tol {
                let (m, c) = dp[i - 1][j - 1];
                best = best.max((m + 1, c - gap as i64));
            }
            dp[i][j] = best;
        }
    }
    let mut out = Vec::new();
    let (mut i, mut j) = (a, b);
    while i > 0 && j > 0 {
        let gap = p[i - 1].abs_diff(t[j - 1]);
        let (m, c) = dp[i - 1][j - 1];
        if gap <= tol && dp[i][j] == (m + 1, c - gap as i64) {
            out.push((p[i - 1], t[j - 1]));
            i -= 1;
            j -= 1;
        } else if dp[i][j] == dp[i - 1][j] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(mode: usize, order: Order, scores: &[f64]) -> Stream {
        Stream {
            mode,
            order,
            scores: scores.to_vec(),
        }
    }

    #[test]
    fn peak_rules() {
        assert!(candidate_peaks(&[1., 2., 3., 4.]).is_empty());
        assert_eq!(candidate_peaks(&[0., 5., 0.])[0].time, 2);
        assert!(candidate_peaks(&[0., 3., 3., 0.]).is_empty());
        let p = candidate_peaks(&[0., 2., 0., 2., 0., 3., 1.]);
        assert_eq!(p.iter().map(|x| x.time).collect::<Vec<_>>(), vec![6, 2, 4]);
    }

    #[test]
    fn single_stream_best_peak() {
        let r = fuse_topk(
            &[stream(0, Order::Level, &[0., 1., 0., 4., 0., 2., 0.])],
            1,
            2,
        )
        .unwrap();
        assert_eq!(r.times(), vec![4]);
    }

    #[test]
    fn duplicates_keep_the_larger_score() {
        let a = stream(0, Order::Level, &[1., 1., 3., 1., 1.]);
        let b = stream(1, Order::Level, &[1., 1., 6., 1., 1.]);
        let r = fuse_topk(&[a, b], 3, 2).unwrap();
        assert_eq!(r.pool.len(), 1);
        assert_eq!(r.candidates[0].mode, 1);
        assert_eq!(r.candidates[0].score, 6.0);
    }

    #[test]
    fn separation_is_enforced() {
        let s = stream(0, Order::Level, &[0., 5., 0., 4., 0., 1., 0., 3., 0.]);
        let r = fuse_topk(&[s], 3, 4).unwrap();
        assert_eq!(r.times(), vec![2, 8]);
        assert!(fuse_topk(&[], 1, 2).is_err());
        let flat = fuse_topk(&[stream(0, Order::Slope, &[0.; 5])], 2, 2).unwrap();
        assert!(flat.empty && flat.candidates.is_empty());
    }

    #[test]
    fn evaluation_examples() {
        let e = evaluate(&[11, 21, 31], &[11, 21, 31], 2);
        assert_eq!((e.f1, e.mae), (1.0, Some(0.0)));
        let e = evaluate(&[], &[11], 2);
        assert_eq!((e.f1, e.mae), (0.0, None));
        let e = evaluate(&[12], &[11], 2);
        assert_eq!(e.true_positives, 1);
        assert!((e.f1 - 1.0).abs() < 1e-15);
        assert_eq!(e.mae, Some(1.0));
        assert_eq!(evaluate(&[], &[], 2).f1, 1.0);
        // K = 3 with six truths
        let e = evaluate(&[11, 31, 61], &[11, 21, 31, 41, 51, 61], 2);
        assert!((e.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn greedy_and_optimal_can_differ() {
        // greedy lets 12 take 13, which leaves 15 without a partner
        let pred = [12, 15];
        let truth = [10, 13];
        let g = evaluate_with(&pred, &truth, 2, MatchRule::Greedy);
        let o = evaluate_with(&pred, &truth, 2, MatchRule::Optimal);
        assert_eq!(g.true_positives, 1);
        assert_eq!(o.true_positives, 2);
    }
}
