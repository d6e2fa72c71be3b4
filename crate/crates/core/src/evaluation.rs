//! Synthetic recovery and detection studies.
//!
//! Every trial derives its own seed from the study's master seed, so a
//! single [`TrialResult`] can be replayed with [`run_recovery_trial`] and
//! trials can run in parallel without changing the output.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::{
    fit_piecewise, fuse_topk, llt_scores, ChangePointReport, Evaluation, MatchRule, Order,
    ScoreSeries, Stream, DEFAULT_MIN_SEPARATION, DEFAULT_TOLERANCE,
};
use crate::embedding::{embed, EmbeddingSeries, Flavor};
use crate::error::{Error, Result};
use crate::geometry::{
    aggregate_operator, distance_matrices, DistanceMatrix, Metric, ModeBasis, PairSet,
};
use crate::model::{
    population_distance_matrix_in_basis, population_mode_basis, sample_with_rng, LatentModel,
};
use crate::rng;
use crate::trajectory::cmds_distances;

pub const DEFAULT_TRIALS: usize = 20;

/// How mode-wise distances pick their directions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    /// Eigenbasis of the aggregated second-moment operator of each geometry.
    Canonical,
    /// Coordinate axes e_1..e_d for every geometry.
    Standard,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Canonical => "canonical",
            BasisKind::Standard => "standard",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(BasisKind::Canonical),
            "standard" => Ok(BasisKind::Standard),
            other => Err(Error::Validation(format!(
                "unknown basis `{other}` (expected canonical or standard)"
            ))),
        }
    }
}

/// Derived seed of trial `trial` at network size `n`.
pub fn derive_seed(master: u64, n: usize, trial: usize) -> u64 {
    rng::trial_rng(master, ((n as u64) << 32) | trial as u64).next_u64()
}

/// `‖A − B‖_F`, or `min_{r>0} ‖A − rB‖_F` when `scaled`.
pub fn frobenius_error(a: &DMatrix<f64>, b: &DMatrix<f64>, scaled: bool) -> f64 {
    if !scaled {
        return (a - b).norm();
    }
    let bb = b.norm_squared();
    if bb == 0.0 {
        return a.norm();
    }
    let r = (a.dot(b) / bb).max(0.0);
    (a - b * r).norm()
}

/// `min_{s=±1} Σ(x − s·y)²`, or `min_{r} Σ(x − r·y)²` when `scaled`.
pub fn aligned_series_error(x: &[f64], y: &[f64], scaled: bool) -> f64 {
    let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let xx: f64 = x.iter().map(|a| a * a).sum();
    let yy: f64 = y.iter().map(|b| b * b).sum();
    if scaled {
        if yy == 0.0 {
            return xx;
        }
        (xx - xy * xy / yy).max(0.0)
    } else {
        (xx + yy - 2.0 * xy.abs()).max(0.0)
    }
}

/// Errors of one metric in one trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricError {
    pub metric: Metric,
    /// Squared-distance error against the sampled latent positions.
    pub vs_sample: f64,
    /// Squared-distance error against the population geometry.
    pub vs_population: f64,
    /// Aligned 1D trajectory error against the population trajectory.
    pub trajectory: f64,
}

/// Knot fitted on one mode trajectory with a single planted change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnotOutcome {
    pub mode: usize,
    pub order: Order,
    pub truth: usize,
    pub estimate: usize,
}

impl KnotOutcome {
    pub fn exact(&self) -> bool {
        self.truth == self.estimate
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub n: usize,
    pub trial: usize,
    pub flavor: Flavor,
    pub basis: BasisKind,
    pub errors: Vec<MetricError>,
    pub knots: Vec<KnotOutcome>,
}

impl TrialResult {
    pub fn error(&self, metric: Metric) -> Option<&MetricError> {
        self.errors.iter().find(|e| e.metric == metric)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub trials: usize,
    pub flavor: Flavor,
    pub basis: BasisKind,
    pub master_seed: u64,
}

fn metrics_for(d: usize) -> Vec<Metric> {
    let mut m = vec![Metric::Tv, Metric::Mv];
    m.extend((0..d).map(Metric::Mode));
    m
}

fn basis_for(kind: BasisKind, y: &EmbeddingSeries) -> Result<ModeBasis> {
    match kind {
        BasisKind::Canonical => aggregate_operator(y, &PairSet::all_pairs(y.horizon())),
        BasisKind::Standard => Ok(ModeBasis::standard(y.dim())),
    }
}

fn trajectory_1d(d: &DistanceMatrix) -> Result<Vec<f64>> {
    Ok(cmds_distances(d, 1)?.series(0))
}

/// One recovery trial, reproducible from `seed` alone.
pub fn run_recovery_trial(
    model: &LatentModel,
    n: usize,
    seed: u64,
    flavor: Flavor,
    basis: BasisKind,
) -> Result<TrialResult> {
    let d = model.dim();
    let mut rng = rng::seeded(seed);
    let (latent, series) = sample_with_rng(model, n, &mut rng)?;
    let (_, y_hat) = embed(&series, d, flavor)?;
    let y_lat = EmbeddingSeries::new(latent.dynamic.clone(), Flavor::Modified)?;

    let metrics = metrics_for(d);
    let est = distance_matrices(&y_hat, &metrics, Some(&basis_for(basis, &y_hat)?))?;
    let fin = distance_matrices(&y_lat, &metrics, Some(&basis_for(basis, &y_lat)?))?;
    let pop_basis = match basis {
        BasisKind::Canonical => population_mode_basis(model, None)?,
        BasisKind::Standard => ModeBasis::standard(d),
    };
    let scaled = flavor == Flavor::Original;

    let mut errors = Vec::with_capacity(metrics.len());
    let mut knots = Vec::new();
    for ((metric, e), f) in metrics.iter().zip(&est).zip(&fin) {
        let p = population_distance_matrix_in_basis(model, *metric, &pop_basis)?;
        let psi_hat = trajectory_1d(e)?;
        let psi_pop = trajectory_1d(&p)?;
        errors.push(MetricError {
            metric: *metric,
            vs_sample: frobenius_error(e.squared(), f.squared(), scaled),
            vs_population: frobenius_error(e.squared(), p.squared(), scaled),
            trajectory: aligned_series_error(&psi_hat, &psi_pop, scaled),
        });
        if let Metric::Mode(k) = metric {
            if let [event] = model.mode_events(*k)[..] {
                let fit = fit_piecewise(&psi_hat, event.order)?;
                knots.push(KnotOutcome {
                    mode: *k,
                    order: event.order,
                    truth: event.time,
                    estimate: fit.knot,
                });
            }
        }
    }
    Ok(TrialResult {
        seed,
        n,
        trial: 0,
        flavor,
        basis,
        errors,
        knots,
    })
}

/// Trials over `n_grid`, ordered by n then trial index.
pub fn run_recovery_study(
    model: &LatentModel,
    n_grid: &[usize],
    config: &RecoveryConfig,
) -> Result<Vec<TrialResult>> {
    let jobs: Vec<(usize, usize)> = n_grid
        .iter()
        .flat_map(|&n| (0..config.trials).map(move |t| (n, t)))
        .collect();
    jobs.par_iter()
        .map(|&(n, trial)| {
            let seed = derive_seed(config.master_seed, n, trial);
            let mut r = run_recovery_trial(model, n, seed, config.flavor, config.basis)?;
            r.trial = trial;
            Ok(r)
        })
        .collect()
}

/// Median of a per-trial quantity at each n, in `n_grid` order.
pub fn median_by_n<F>(results: &[TrialResult], n_grid: &[usize], value: F) -> Vec<Option<f64>>
where
    F: Fn(&TrialResult) -> Option<f64>,
{
    n_grid
        .iter()
        .map(|&n| {
            let v: Vec<f64> = results
                .iter()
                .filter(|r| r.n == n)
                .filter_map(&value)
                .collect();
            crate::linalg::median(&v)
        })
        .collect()
}

pub const RECOVERY_CSV_HEADER: &str =
    "seed,n,trial,flavor,basis,metric,distance_error_sample,distance_error_population,trajectory_error";

/// Tidy rows: one per trial per metric.
pub fn recovery_csv(results: &[TrialResult]) -> String {
    let mut out = String::from(RECOVERY_CSV_HEADER);
    out.push('\n');
    for r in results {
        for e in &r.errors {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:e},{:e},{:e}\n",
                r.seed,
                r.n,
                r.trial,
                r.flavor,
                r.basis,
                e.metric,
                e.vs_sample,
                e.vs_population,
                e.trajectory
            ));
        }
    }
    out
}

/// Outcome of one detection trial at one K.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub seed: u64,
    pub trial: usize,
    pub k: usize,
    pub predicted: Vec<usize>,
    pub evaluation: Evaluation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub k: usize,
    pub trials: usize,
    pub mean_f1: f64,
    /// Mean over trials with at least one match.
    pub mean_mae: Option<f64>,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionStudy {
    pub n: usize,
    pub truth: Vec<usize>,
    pub tolerance: usize,
    pub records: Vec<DetectionRecord>,
    pub summary: Vec<DetectionSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub n: usize,
    pub trials: usize,
    pub k_grid: Vec<usize>,
    pub min_separation: usize,
    pub tolerance: usize,
    pub master_seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            n: 500,
            trials: DEFAULT_TRIALS,
            k_grid: vec![3, 6, 9],
            min_separation: DEFAULT_MIN_SEPARATION,
            tolerance: DEFAULT_TOLERANCE,
            master_seed: 0,
        }
    }
}

/// Mode trajectories of a sampled series: modified embedding, canonical
/// basis over all pairs, 1D CMDS per mode.
pub fn mode_trajectories(y: &EmbeddingSeries) -> Result<Vec<Vec<f64>>> {
    let basis = aggregate_operator(y, &PairSet::all_pairs(y.horizon()))?;
    let metrics: Vec<Metric> = (0..y.dim()).map(Metric::Mode).collect();
    distance_matrices(y, &metrics, Some(&basis))?
        .iter()
        .map(trajectory_1d)
        .collect()
}

/// Scores and fused reports at every K for one trial.
pub fn run_detection_trial(
    model: &LatentModel,
    seed: u64,
    config: &DetectionConfig,
) -> Result<(Vec<ScoreSeries>, Vec<ChangePointReport>)> {
    let mut rng = rng::seeded(seed);
    let (_, series) = sample_with_rng(model, config.n, &mut rng)?;
    let (_, y) = embed(&series, model.dim(), Flavor::Modified)?;
    let scores: Vec<ScoreSeries> = mode_trajectories(&y)?
        .iter()
        .enumerate()
        .map(|(mode, psi)| {
            llt_scores(psi).map(|mut s| {
                s.mode = mode;
                s
            })
        })
        .collect::<Result<_>>()?;
    let streams: Vec<Stream> = scores.iter().flat_map(ScoreSeries::streams).collect();
    let truth = model.change_times();
    let reports = config
        .k_grid
        .iter()
        .map(|&k| {
            Ok(
                fuse_topk(&streams, k, config.min_separation)?.with_evaluation(
                    &truth,
                    config.tolerance,
                    MatchRule::Greedy,
                ),
            )
        })
        .collect::<Result<_>>()?;
    Ok((scores, reports))
}

pub fn run_detection_study(
    model: &LatentModel,
    config: &DetectionConfig,
) -> Result<DetectionStudy> {
    let truth = model.change_times();
    let per_trial: Vec<Vec<DetectionRecord>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = derive_seed(config.master_seed, config.n, trial);
            let (_, reports) = run_detection_trial(model, seed, config)?;
            Ok(reports
                .into_iter()
                .map(|rep| DetectionRecord {
                    seed,
                    trial,
                    k: rep.k,
                    predicted: rep.times(),
                    evaluation: rep.evaluation.expect("evaluation attached"),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let records: Vec<DetectionRecord> = per_trial.into_iter().flatten().collect();
    let summary = config
        .k_grid
        .iter()
        .map(|&k| summarize(k, records.iter().filter(|r| r.k == k)))
        .collect();
    Ok(DetectionStudy {
        n: config.n,
        truth,
        tolerance: config.tolerance,
        records,
        summary,
    })
}

fn summarize<'a>(k: usize, records: impl Iterator<Item = &'a DetectionRecord>) -> DetectionSummary {
    let evals: Vec<&Evaluation> = records.map(|r| &r.evaluation).collect();
    let m = evals.len().max(1) as f64;
    let maes: Vec<f64> = evals.iter().filter_map(|e| e.mae).collect();
    DetectionSummary {
        k,
        trials: evals.len(),
        mean_f1: evals.iter().map(|e| e.f1).sum::<f64>() / m,
        mean_mae: (!maes.is_empty()).then(|| maes.iter().sum::<f64>() / maes.len() as f64),
        mean_precision: evals.iter().map(|e| e.precision).sum::<f64>() / m,
        mean_recall: evals.iter().map(|e| e.recall).sum::<f64>() / m,
    }
}

pub const DETECTION_CSV_HEADER: &str =
    "n,seed,trial,k,predicted,true_positives,precision,recall,f1,mae";

pub fn detection_csv(study: &DetectionStudy) -> String {
    let mut out = String::from(DETECTION_CSV_HEADER);
    out.push('\n');
    for r in &study.records {
        let pred: Vec<String> = r.predicted.iter().map(usize::to_string).collect();
        let e = &r.evaluation;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            study.n,
            r.seed,
            r.trial,
            r.k,
            pred.join(";"),
            e.true_positives,
            e.precision,
            e.recall,
            e.f1,
            e.mae.map(|v| v.to_string()).unwrap_or_default()
        ));
    }
    out
}
