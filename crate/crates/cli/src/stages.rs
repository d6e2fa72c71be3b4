//! One function per subcommand.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use ment_core::attribution::{attribute, top_k_report, TopKReport};
use ment_core::changepoint::{fuse_topk, llt_scores, MatchRule, Order, ScoreSeries, Stream};
use ment_core::embedding::{embed, EmbeddingSeries, SvdDiagnostics};
use ment_core::evaluation::{
    detection_csv, median_by_n, recovery_csv, run_detection_study, run_recovery_study, BasisKind,
    DetectionConfig, DetectionSummary, RecoveryConfig,
};
use ment_core::export::{
    attribution_tidy_csv, decode_embedding, distance_csv, distance_file_name, embedding_block_csv,
    embedding_file_name, encode_embedding, parse_distance_csv, parse_trajectory, scores_csv,
    spectrum_csv, trajectory_csv, trajectory_file_stem, TrajectorySidecar,
};
use ment_core::geometry::{aggregate_operator, distance_matrices, Metric, ModeBasis};
use ment_core::model::{preset_by_name, sample_dynamic_sbm, PresetExport};
use ment_core::trajectory::{cmds_conditioning, cmds_distances, Conditioning, Trajectory};

use crate::bundle::Bundle;
use crate::config::{
    AttributeConfig, CpdConfig, DistanceConfig, EmbedConfig, InputFormat, PairChoice,
    PipelineConfig, StudyConfig, StudyKind, SynthConfig, TrajectoryConfig,
};
use crate::ingest::{edge_triples_text, ingest_snapshots, node_manifest_text, IngestReport};
use crate::{CliError, Result};

pub fn run_synth(bundle: &Bundle, cfg: &SynthConfig) -> Result<()> {
    cfg.validate()?;
    let model = preset_by_name(&cfg.preset)?;
    let (_, series) = sample_dynamic_sbm(&model, cfg.n, cfg.seed)?;
    let mut config = bundle.config()?;
    config.synth = Some(cfg.clone());
    let mut w = bundle.begin_stage("synth", &config, Some(cfg.seed))?;
    w.write("edges.txt", edge_triples_text(&series).as_bytes())?;
    w.write("nodes.txt", node_manifest_text(&series).as_bytes())?;
    w.write_json("preset.json", &PresetExport::from_model(&model))?;
    w.commit()
}

#[derive(Serialize)]
struct SvdReport<'a> {
    d: usize,
    singular_values: Vec<f64>,
    diagnostics: &'a SvdDiagnostics,
}

pub fn run_embed(bundle: &Bundle, cfg: &EmbedConfig) -> Result<()> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    let (series, report) = match &cfg.source.input {
        Some(path) => ingest_snapshots(
            path,
            cfg.source.format,
            cfg.source.nodes.as_deref(),
            cfg.source.horizon,
        )?,
        None => {
            let edges = bundle.require("synth/edges.txt", "synthetic network", "synth")?;
            let nodes = bundle.require("synth/nodes.txt", "node list", "synth")?;
            let preset: PresetExport =
                bundle.read_json("synth/preset.json", "preset description", "synth")?;
            cfg.d.get_or_insert(preset.dim);
            ingest_snapshots(
                &edges,
                InputFormat::EdgeTriples,
                Some(&nodes),
                Some(preset.horizon),
            )?
        }
    };
    let d = cfg.d.expect("validated or filled from the preset");
    let (svd, y) = embed(&series, d, cfg.flavor)?;
    let mut config = bundle.config()?;
    config.embed = Some(cfg);
    let mut w = bundle.begin_stage("embed", &config, None)?;
    for t in 0..y.horizon() {
        w.write(
            &embedding_file_name(t),
            embedding_block_csv(y.block(t), &report.node_ids)?.as_bytes(),
        )?;
    }
    w.write("embedding.bin", &encode_embedding(&y)?)?;
    w.write_json(
        "svd.json",
        &SvdReport {
            d,
            singular_values: svd.sigma.iter().copied().collect(),
            diagnostics: &svd.diagnostics,
        },
    )?;
    w.write_json("ingest.json", &report)?;
    w.commit()
}

fn load_embedding(bundle: &Bundle) -> Result<EmbeddingSeries> {
    let path = bundle.require("embed/embedding.bin", "embeddings", "embed")?;
    let bytes = fs::read(&path).map_err(CliError::io(&path))?;
    Ok(decode_embedding(&bytes)?.1)
}

/// Mode directions as stored in `distances/mode_basis.json`.
#[derive(Serialize, Deserialize)]
struct BasisFile {
    kind: BasisKind,
    pairs: Option<PairChoice>,
    /// `vectors[k]` is the k-th mode direction.
    vectors: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    /// 1-based k with λ_k tied to λ_{k+1}.
    degenerate: Vec<usize>,
}

impl BasisFile {
    fn basis(&self) -> Result<ModeBasis> {
        let d = self.vectors.len();
        if self.vectors.iter().any(|v| v.len() != d) {
            return Err(CliError::Invalid(
                "mode_basis.json: vectors are not square".into(),
            ));
        }
        let m = DMatrix::from_fn(d, d, |i, k| self.vectors[k][i]);
        Ok(ModeBasis::from_columns(m)?)
    }
}

pub fn run_distances(bundle: &Bundle, cfg: &DistanceConfig) -> Result<()> {
    cfg.validate()?;
    let y = load_embedding(bundle)?;
    let basis = match cfg.basis {
        BasisKind::Canonical => aggregate_operator(&y, &cfg.pairs.pairs(y.horizon()))?,
        BasisKind::Standard => ModeBasis::standard(y.dim()),
    };
    let mut metrics = cfg.metrics.clone();
    metrics.extend((0..y.dim()).map(Metric::Mode));
    let matrices = distance_matrices(&y, &metrics, Some(&basis))?;

    let mut config = bundle.config()?;
    config.distances = Some(cfg.clone());
    let mut w = bundle.begin_stage("distances", &config, None)?;
    for d in &matrices {
        w.write(&distance_file_name(d.metric()), distance_csv(d)?.as_bytes())?;
        w.write(
            &format!("spectrum_{}.csv", d.metric()),
            spectrum_csv(d)?.as_bytes(),
        )?;
    }
    w.write_json(
        "mode_basis.json",
        &BasisFile {
            kind: cfg.basis,
            pairs: (cfg.basis == BasisKind::Canonical).then_some(cfg.pairs),
            vectors: (0..basis.dim())
                .map(|k| basis.vector(k).iter().copied().collect())
                .collect(),
            eigenvalues: basis.eigenvalues().iter().copied().collect(),
            degenerate: basis.degenerate().iter().map(|k| k + 1).collect(),
        },
    )?;
    w.commit()
}

/// Files in `dir` named `<prefix><metric>.<ext>`, with their metric.
fn metric_files(dir: &Path, prefix: &str, ext: &str) -> Result<Vec<(Metric, String)>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let name = entry
            .map_err(CliError::io(dir))?
            .file_name()
            .to_string_lossy()
            .into_owned();
        let tag = name.strip_prefix(prefix).and_then(|s| s.strip_suffix(ext));
        if let Some(metric) = tag.and_then(|t| t.parse::<Metric>().ok()) {
            found.push((metric, name));
        }
    }
    found.sort_by_key(|(m, _)| match m {
        Metric::Tv => (0, 0),
        Metric::Mv => (1, 0),
        Metric::Mode(k) => (2, *k),
    });
    Ok(found)
}

pub fn run_trajectories(bundle: &Bundle, cfg: &TrajectoryConfig) -> Result<()> {
    cfg.validate()?;
    let files = metric_files(&bundle.path("distances"), "distance_", ".csv")?;
    if files.is_empty() {
        return Err(CliError::Missing {
            what: "distance matrices".into(),
            path: bundle.path("distances"),
            stage: "distances",
        });
    }
    let mut results = Vec::with_capacity(files.len());
    for (metric, name) in &files {
        let text =
            bundle.read_text(&format!("distances/{name}"), "distance matrix", "distances")?;
        let d = parse_distance_csv(&text)?;
        let c = if matches!(metric, Metric::Mode(_)) {
            1
        } else {
            cfg.c
        };
        let traj = cmds_distances(&d, c)?;
        let cond = cmds_conditioning(d.gram(), 1, c).ok();
        results.push((*metric, traj, cond));
    }

    let mut config = bundle.config()?;
    config.trajectories = Some(cfg.clone());
    let mut w = bundle.begin_stage("trajectories", &config, None)?;
    let mut conditioning: BTreeMap<String, Option<Conditioning>> = BTreeMap::new();
    for (metric, traj, cond) in &results {
        let stem = trajectory_file_stem(Some(*metric));
        w.write(&format!("{stem}.csv"), trajectory_csv(traj)?.as_bytes())?;
        w.write_json(&format!("{stem}.json"), &TrajectorySidecar::from(traj))?;
        conditioning.insert(metric.to_string(), *cond);
    }
    w.write_json("conditioning.json", &conditioning)?;
    w.commit()
}

pub fn run_attribute(bundle: &Bundle, cfg: &AttributeConfig) -> Result<()> {
    cfg.validate()?;
    let y = load_embedding(bundle)?;
    let ingest: IngestReport = bundle.read_json("embed/ingest.json", "ingest report", "embed")?;
    let horizon = y.horizon();
    let pairs: Vec<(usize, usize)> = if cfg.pairs.is_empty() {
        (1..horizon).map(|t| (t, t + 1)).collect()
    } else {
        cfg.pairs.iter().map(|p| (p.0, p.1)).collect()
    };
    if let Some(&(t, s)) = pairs.iter().find(|&&(t, s)| t > horizon || s > horizon) {
        return Err(CliError::Invalid(format!(
            "--pair {t}:{s} is outside 1..={horizon}"
        )));
    }
    let metrics: Vec<Metric> = if cfg.metrics.is_empty() {
        std::iter::once(Metric::Tv)
            .chain((0..y.dim()).map(Metric::Mode))
            .collect()
    } else {
        cfg.metrics.clone()
    };
    let basis = if metrics.iter().any(|m| matches!(m, Metric::Mode(_))) {
        let file: BasisFile =
            bundle.read_json("distances/mode_basis.json", "mode basis", "distances")?;
        Some(file.basis()?)
    } else {
        None
    };

    let mut outputs = Vec::with_capacity(metrics.len());
    for &metric in &metrics {
        let tables = pairs
            .iter()
            .map(|&(t, s)| {
                attribute(&y, t - 1, s - 1, metric, basis.as_ref())?.with_node_ids(&ingest.node_ids)
            })
            .collect::<ment_core::Result<Vec<_>>>()?;
        let reports: Vec<TopKReport> = tables
            .iter()
            .map(|table| {
                let mut r = top_k_report(table, cfg.top_k);
                r.pair = (r.pair.0 + 1, r.pair.1 + 1);
                r
            })
            .collect();
        outputs.push((metric, attribution_tidy_csv(&tables)?, reports));
    }

    let mut config = bundle.config()?;
    config.attribute = Some(cfg.clone());
    let mut w = bundle.begin_stage("attribute", &config, None)?;
    for (metric, csv, reports) in &outputs {
        w.write(&format!("attribution_{metric}.csv"), csv.as_bytes())?;
        w.write_json(&format!("topk_{metric}.json"), reports)?;
    }
    w.commit()
}

/// Known change times of a synthetic bundle.
fn planted_truth(bundle: &Bundle, config: &PipelineConfig) -> Result<Option<Vec<usize>>> {
    let synthetic = config
        .embed
        .as_ref()
        .is_some_and(|e| e.source.input.is_none());
    if !synthetic || !bundle.path("synth/preset.json").exists() {
        return Ok(None);
    }
    let preset: PresetExport =
        bundle.read_json("synth/preset.json", "preset description", "synth")?;
    let mut times: Vec<usize> = preset.events.iter().map(|e| e.time).collect();
    times.sort_unstable();
    times.dedup();
    Ok(Some(times))
}

pub fn run_cpd(bundle: &Bundle, cfg: &CpdConfig) -> Result<()> {
    cfg.validate()?;
    let dir = bundle.path("trajectories");
    let files: Vec<(usize, String)> = metric_files(&dir, "trajectory_", ".json")?
        .into_iter()
        .filter_map(|(m, name)| match m {
            Metric::Mode(k) => Some((k, name)),
            _ => None,
        })
        .collect();
    if files.is_empty() {
        return Err(CliError::Missing {
            what: "mode trajectories".into(),
            path: dir,
            stage: "trajectories",
        });
    }
    let mut scores = Vec::with_capacity(files.len());
    for (mode, name) in &files {
        let stem = name.trim_end_matches(".json");
        let sidecar: TrajectorySidecar = bundle.read_json(
            &format!("trajectories/{name}"),
            "trajectory",
            "trajectories",
        )?;
        let csv = bundle.read_text(
            &format!("trajectories/{stem}.csv"),
            "trajectory",
            "trajectories",
        )?;
        let traj: Trajectory = parse_trajectory(&csv, sidecar)?;
        let mut s: ScoreSeries = llt_scores(&traj.series(0))?;
        s.mode = *mode;
        scores.push(s);
    }
    let families: Vec<Order> = cfg.families.iter().map(|&f| f.into()).collect();
    let streams: Vec<Stream> = scores
        .iter()
        .flat_map(ScoreSeries::streams)
        .filter(|s| families.contains(&s.order))
        .collect();
    let mut report = fuse_topk(&streams, cfg.k, cfg.min_separation)?;

    let mut config = bundle.config()?;
    if let Some(truth) = planted_truth(bundle, &config)? {
        report = report.with_evaluation(&truth, cfg.tolerance, MatchRule::Greedy);
    }
    let mut table = String::from("rank,time,score,raw_score,mode,order\n");
    for (rank, c) in report.candidates.iter().enumerate() {
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            rank + 1,
            c.time,
            c.score,
            c.raw_score,
            c.mode + 1,
            c.order
        ));
    }

    config.cpd = Some(cfg.clone());
    let mut w = bundle.begin_stage("cpd", &config, None)?;
    w.write("scores.csv", scores_csv(&scores)?.as_bytes())?;
    w.write("changepoints.csv", table.as_bytes())?;
    w.write_json("report.json", &report)?;
    w.commit()
}

#[derive(Serialize)]
struct RecoverySummaryRow {
    metric: Metric,
    n: usize,
    median_distance_error_sample: Option<f64>,
    median_distance_error_population: Option<f64>,
    median_trajectory_error: Option<f64>,
}

#[derive(Serialize)]
struct DetectionSummaryRow {
    n: usize,
    truth: Vec<usize>,
    summary: Vec<DetectionSummary>,
}

pub fn run_study(bundle: &Bundle, cfg: &StudyConfig) -> Result<()> {
    cfg.validate()?;
    let model = preset_by_name(&cfg.preset)?;
    let mut config = bundle.config()?;
    config.study = Some(cfg.clone());
    match cfg.kind {
        StudyKind::Recovery => {
            let results = run_recovery_study(
                &model,
                &cfg.n_grid,
                &RecoveryConfig {
                    trials: cfg.trials,
                    flavor: cfg.flavor,
                    basis: cfg.basis,
                    master_seed: cfg.seed,
                },
            )?;
            let mut metrics = vec![Metric::Tv, Metric::Mv];
            metrics.extend((0..model.dim()).map(Metric::Mode));
            let mut rows = Vec::new();
            for &metric in &metrics {
                let sample = median_by_n(&results, &cfg.n_grid, |r| {
                    r.error(metric).map(|e| e.vs_sample)
                });
                let population = median_by_n(&results, &cfg.n_grid, |r| {
                    r.error(metric).map(|e| e.vs_population)
                });
                let trajectory = median_by_n(&results, &cfg.n_grid, |r| {
                    r.error(metric).map(|e| e.trajectory)
                });
                for (i, &n) in cfg.n_grid.iter().enumerate() {
                    rows.push(RecoverySummaryRow {
                        metric,
                        n,
                        median_distance_error_sample: sample[i],
                        median_distance_error_population: population[i],
                        median_trajectory_error: trajectory[i],
                    });
                }
            }
            let mut w = bundle.begin_stage("study", &config, Some(cfg.seed))?;
            w.write("recovery.csv", recovery_csv(&results).as_bytes())?;
            w.write_json("recovery_summary.json", &rows)?;
            w.commit()
        }
        StudyKind::Detection => {
            let mut studies = Vec::with_capacity(cfg.n_grid.len());
            for &n in &cfg.n_grid {
                let study = run_detection_study(
                    &model,
                    &DetectionConfig {
                        n,
                        trials: cfg.trials,
                        k_grid: cfg.k_grid.clone(),
                        min_separation: cfg.min_separation,
                        tolerance: cfg.tolerance,
                        master_seed: cfg.seed,
                    },
                )?;
                studies.push(study);
            }
            let mut w = bundle.begin_stage("study", &config, Some(cfg.seed))?;
            let mut summary = Vec::with_capacity(studies.len());
            for study in studies {
                w.write(
                    &format!("detection_n{}.csv", study.n),
                    detection_csv(&study).as_bytes(),
                )?;
                summary.push(DetectionSummaryRow {
                    n: study.n,
                    truth: study.truth,
                    summary: study.summary,
                });
            }
            w.write_json("detection_summary.json", &summary)?;
            w.commit()
        }
    }
}

/// Validates every section first, then runs synth (unless the input is
/// ingested), embed, distances, trajectories, attribute and cpd.
pub fn run_pipeline(bundle: &Bundle, config: PipelineConfig) -> Result<()> {
    let config = config.resolve_for_pipeline()?;
    config.validate()?;
    bundle.reset()?;
    let section = |name: &str| CliError::Invalid(format!("pipeline config lacks `{name}`"));
    if let Some(synth) = &config.synth {
        run_synth(bundle, synth)?;
    }
    run_embed(
        bundle,
        config.embed.as_ref().ok_or_else(|| section("embed"))?,
    )?;
    run_distances(
        bundle,
        config
            .distances
            .as_ref()
            .ok_or_else(|| section("distances"))?,
    )?;
    run_trajectories(
        bundle,
        config
            .trajectories
            .as_ref()
            .ok_or_else(|| section("trajectories"))?,
    )?;
    run_attribute(
        bundle,
        config
            .attribute
            .as_ref()
            .ok_or_else(|| section("attribute"))?,
    )?;
    run_cpd(bundle, config.cpd.as_ref().ok_or_else(|| section("cpd"))?)
}
