//! Frame-level AUC scoring, parameter sweeps, the analytic timing model,
//! and wall-clock benchmarking.
//!
//! AUC uses the rank (Mann-Whitney) formulation — the probability that a
//! random positive frame outscores a random negative one, ties counted
//! half — which equals the trapezoidal ROC area without choosing any
//! threshold grid. The arithmetic stays in integer pair counts until the
//! final division, so results match a brute-force pair-count oracle
//! bit for bit.

use std::fmt;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::appearance::EncoderSpec;
use crate::ingestion::{generate_scenario, ScenarioSpec};
use crate::pipeline::{run_pipeline, PipelineConfig, StageTiming};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("scores ({scores}) and labels ({labels}) differ in length")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("AUC undefined: need both classes, found {positives} positive and {negatives} negative frames")]
    SingleClass { positives: usize, negatives: usize },
    #[error("score {0} outside the unit interval")]
    ScoreOutOfRange(f64),
    #[error("timing costs must be non-negative, got {0}")]
    NegativeCost(f64),
    #[error("sweep grid dimension {0} is empty")]
    EmptyGrid(&'static str),
}

/// Per-frame scores paired with ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl EvalRecord {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self, EvalError> {
        if scores.len() != labels.len() {
            return Err(EvalError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(EvalError::ScoreOutOfRange(bad));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }
}

/// Probability that a random positive frame outscores a random negative
/// frame, ties counted half. Exact: integer pair counting throughout.
pub fn frame_auc(rec: &EvalRecord) -> Result<f64, EvalError> {
    let positives = rec.labels.iter().filter(|&&l| l).count();
    let negatives = rec.labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass {
            positives,
            negatives,
        });
    }

    let mut order: Vec<usize> = (0..rec.scores.len()).collect();
    order.sort_by(|&a, &b| {
        rec.scores[a]
            .partial_cmp(&rec.scores[b])
            .expect("scores validated finite")
    });

    // Walk tie groups in ascending score order. A positive beats every
    // negative strictly below its group and half-ties within it.
    let mut wins: u64 = 0;
    let mut half_ties: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos_group, mut neg_group) = (0u64, 0u64);
        while j < order.len() && rec.scores[order[j]] == rec.scores[order[i]] {
            if rec.labels[order[j]] {
                pos_group += 1;
            } else {
                neg_group += 1;
            }
            j += 1;
        }
        wins += pos_group * negatives_below;
        half_ties += pos_group * neg_group;
        negatives_below += neg_group;
        i = j;
    }
    Ok((wins as f64 + half_ties as f64 / 2.0) / (positives as f64 * negatives as f64))
}

/// Analytic per-frame latency model: fixed detection and association
/// costs plus a per-detection feature-encoding cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingModel {
    /// Object detection cost per frame, ms.
    pub od_ms: f64,
    /// Feature encoding cost per detection, ms.
    pub fe_ms: f64,
    /// Trajectory association cost per frame, ms.
    pub ta_ms: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        Self {
            od_ms: 92.0,
            fe_ms: 38.0,
            ta_ms: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingPrediction {
    pub tau_ms: f64,
    pub fps: f64,
}

impl TimingModel {
    pub fn new(od_ms: f64, fe_ms: f64, ta_ms: f64) -> Result<Self, EvalError> {
        for v in [od_ms, fe_ms, ta_ms] {
            if v.is_nan() || v < 0.0 {
                return Err(EvalError::NegativeCost(v));
            }
        }
        Ok(Self {
            od_ms,
            fe_ms,
            ta_ms,
        })
    }

    /// τ = (od + ta) + fe·d_k, and the frame rate that implies.
    pub fn predict(&self, detections: u64) -> TimingPrediction {
        let tau_ms = self.od_ms + self.ta_ms + self.fe_ms * detections as f64;
        TimingPrediction {
            tau_ms,
            fps: 1000.0 / tau_ms,
        }
    }
}

/// Sweep grid: the cartesian product of every listed dimension. Absent
/// optional dimensions stay at their configured defaults.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub encoder_sizes: Vec<String>,
    pub max_cos_distances: Vec<f64>,
    pub nms_overlaps: Vec<f64>,
    #[serde(default)]
    pub motion_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub max_ages: Option<Vec<u32>>,
    #[serde(default)]
    pub n_inits: Option<Vec<u32>>,
    #[serde(default)]
    pub gallery_capacities: Option<Vec<usize>>,
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    fn validate(&self) -> Result<(), EvalError> {
        if self.encoder_sizes.is_empty() {
            return Err(EvalError::EmptyGrid("encoder_sizes"));
        }
        if self.max_cos_distances.is_empty() {
            return Err(EvalError::EmptyGrid("max_cos_distances"));
        }
        if self.nms_overlaps.is_empty() {
            return Err(EvalError::EmptyGrid("nms_overlaps"));
        }
        for (name, dim) in [
            ("motion_weights", self.motion_weights.as_ref().map(Vec::len)),
            ("max_ages", self.max_ages.as_ref().map(Vec::len)),
            ("n_inits", self.n_inits.as_ref().map(Vec::len)),
            (
                "gallery_capacities",
                self.gallery_capacities.as_ref().map(Vec::len),
            ),
        ] {
            if dim == Some(0) {
                return Err(EvalError::EmptyGrid(name));
            }
        }
        Ok(())
    }
}

/// One grid point's configuration and outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub encoder: String,
    pub max_cos_distance: f64,
    pub nms_overlap: f64,
    /// Extra swept dimensions, as (column name, formatted value).
    pub extras: Vec<(&'static str, String)>,
    pub outcome: Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub extra_columns: Vec<&'static str>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Tab-separated table with a header row, rows sorted by their
    /// configuration tuple. Same seed and grid, same bytes.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("encoder\tmax_cos_distance\tnms_overlap");
        for c in &self.extra_columns {
            out.push('\t');
            out.push_str(c);
        }
        out.push_str("\tauc\n");
        for row in &self.rows {
            out.push_str(&row.encoder);
            out.push_str(&format!("\t{}\t{}", row.max_cos_distance, row.nms_overlap));
            for (_, v) in &row.extras {
                out.push('\t');
                out.push_str(v);
            }
            match &row.outcome {
                Ok(auc) => out.push_str(&format!("\t{auc:.4}\n")),
                Err(msg) => out.push_str(&format!("\terror: {msg}\n")),
            }
        }
        out
    }
}

/// Runs the pipeline once per grid point against the scenario's pooled
/// ground truth. Per-cell failures become marked rows; the sweep never
/// aborts half way.
pub fn run_sweep(
    scenario: &ScenarioSpec,
    seed: u64,
    sweep: &SweepConfig,
    base: &PipelineConfig,
) -> Result<SweepTable, EvalError> {
    sweep.validate()?;
    let one_weight = vec![base.association.motion_weight];
    let one_age = vec![base.association.max_age];
    let one_init = vec![base.association.n_init];
    let one_cap = vec![base.association.gallery_capacity];
    let weights = sweep.motion_weights.as_ref().unwrap_or(&one_weight);
    let ages = sweep.max_ages.as_ref().unwrap_or(&one_age);
    let inits = sweep.n_inits.as_ref().unwrap_or(&one_init);
    let caps = sweep.gallery_capacities.as_ref().unwrap_or(&one_cap);

    let mut extra_columns = Vec::new();
    if sweep.motion_weights.is_some() {
        extra_columns.push("motion_weight");
    }
    if sweep.max_ages.is_some() {
        extra_columns.push("max_age");
    }
    if sweep.n_inits.is_some() {
        extra_columns.push("n_init");
    }
    if sweep.gallery_capacities.is_some() {
        extra_columns.push("gallery_capacity");
    }

    let mut rows = Vec::new();
    for encoder in &sweep.encoder_sizes {
        for &max_cos in &sweep.max_cos_distances {
            for &overlap in &sweep.nms_overlaps {
                for &weight in weights {
                    for &age in ages {
                        for &init in inits {
                            for &cap in caps {
                                let mut extras = Vec::new();
                                if sweep.motion_weights.is_some() {
                                    extras.push(("motion_weight", weight.to_string()));
                                }
                                if sweep.max_ages.is_some() {
                                    extras.push(("max_age", age.to_string()));
                                }
                                if sweep.n_inits.is_some() {
                                    extras.push(("n_init", init.to_string()));
                                }
                                if sweep.gallery_capacities.is_some() {
                                    extras.push(("gallery_capacity", cap.to_string()));
                                }
                                let mut cfg = base.clone();
                                cfg.association.max_cos_distance = max_cos;
                                cfg.association.motion_weight = weight;
                                cfg.association.max_age = age;
                                cfg.association.n_init = init;
                                cfg.association.gallery_capacity = cap;
                                cfg.nms_overlap = overlap;
                                let outcome = sweep_cell(scenario, seed, encoder, &cfg);
                                rows.push(SweepRow {
                                    encoder: encoder.clone(),
                                    max_cos_distance: max_cos,
                                    nms_overlap: overlap,
                                    extras,
                                    outcome,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    rows.sort_by(|a, b| {
        (
            &a.encoder,
            format!("{}", a.max_cos_distance),
            format!("{}", a.nms_overlap),
            a.extras.clone(),
        )
            .cmp(&(
                &b.encoder,
                format!("{}", b.max_cos_distance),
                format!("{}", b.nms_overlap),
                b.extras.clone(),
            ))
    });
    Ok(SweepTable {
        extra_columns,
        rows,
    })
}

fn sweep_cell(
    scenario: &ScenarioSpec,
    seed: u64,
    encoder: &str,
    cfg: &PipelineConfig,
) -> Result<f64, String> {
    // The encoder size only matters for pixel inputs, but an unparseable
    // size is still a configuration error the row must surface.
    EncoderSpec::parse_size(encoder).map_err(|e| e.to_string())?;
    let run = generate_scenario(scenario, seed).map_err(|e| e.to_string())?;
    let out = run_pipeline(cfg, &run.frames, &mut []).map_err(|e| e.to_string())?;
    let record = EvalRecord::new(out.scores, run.truth.pooled()).map_err(|e| e.to_string())?;
    frame_auc(&record).map_err(|e| e.to_string())
}

/// Mean and p95 of one stage's per-frame wall-clock cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageStats {
    pub name: &'static str,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub frames: u64,
    pub stages: Vec<StageStats>,
    /// Frames divided by total pipeline wall time (detector excluded).
    pub effective_fps: f64,
}

fn stage_stats(name: &'static str, samples: &mut [Duration]) -> StageStats {
    if samples.is_empty() {
        return StageStats {
            name,
            mean_ms: 0.0,
            p95_ms: 0.0,
        };
    }
    samples.sort_unstable();
    let total: Duration = samples.iter().sum();
    let mean_ms = total.as_secs_f64() * 1000.0 / samples.len() as f64;
    let rank = ((samples.len() as f64 * 0.95).ceil() as usize).max(1) - 1;
    StageStats {
        name,
        mean_ms,
        p95_ms: samples[rank].as_secs_f64() * 1000.0,
    }
}

/// Summarizes per-stage timings from a finished run.
pub fn bench_report(frames: u64, timings: &[StageTiming]) -> BenchReport {
    let mut ingest: Vec<Duration> = timings.iter().map(|t| t.ingest).collect();
    let mut associate: Vec<Duration> = timings.iter().map(|t| t.associate).collect();
    let mut anomaly: Vec<Duration> = timings.iter().map(|t| t.anomaly).collect();
    let mut alert: Vec<Duration> = timings.iter().map(|t| t.alert).collect();
    let total: Duration = timings
        .iter()
        .map(|t| t.ingest + t.associate + t.anomaly + t.alert)
        .sum();
    let effective_fps = if total.is_zero() {
        0.0
    } else {
        frames as f64 / total.as_secs_f64()
    };
    BenchReport {
        frames,
        stages: vec![
            stage_stats("ingest", &mut ingest),
            stage_stats("associate", &mut associate),
            stage_stats("anomaly", &mut anomaly),
            stage_stats("alert", &mut alert),
        ],
        effective_fps,
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames processed: {}", self.frames)?;
        writeln!(f, "{:<12} {:>10} {:>10}", "stage", "mean_ms", "p95_ms")?;
        for s in &self.stages {
            writeln!(f, "{:<12} {:>10.3} {:>10.3}", s.name, s.mean_ms, s.p95_ms)?;
        }
        write!(f, "effective fps: {:.1}", self.effective_fps)
    }
}
