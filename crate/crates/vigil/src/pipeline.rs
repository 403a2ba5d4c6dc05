//! End-to-end frame pipeline: detection conditioning (NMS), tracking,
//! anomaly rules, alert dispatch, and the run logs.
//!
//! Everything downstream of ingestion is deterministic: alert timestamps
//! derive from a configured base plus the frame index (never the wall
//! clock), logs format floats with Rust's shortest round-trip notation,
//! and iteration orders are fixed. Identical input and configuration
//! produce bytewise-identical logs.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::alerting::{
    dispatch, quantize_score, AlertError, AlertSink, AnomalyAlert, DeliveryReport, MAX_ALERT_TRACKS,
};
use crate::anomaly::{AnomalyCode, AnomalyConfig, AnomalyEngine, AnomalyEvent};
use crate::association::{AssociationConfig, AssociationError, Tracker};
use crate::geometry::nms;
use crate::ingestion::FrameBatch;
use crate::motion::{KalmanFilter, MotionConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("frame {frame} detection {index} has no descriptor; file runs need a sidecar or synthetic descriptors")]
    MissingDescriptor { frame: u64, index: usize },
    #[error("nms overlap threshold {0} outside [0, 1]")]
    BadNmsOverlap(f64),
    #[error(transparent)]
    Association(#[from] AssociationError),
    #[error(transparent)]
    Alert(#[from] AlertError),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub association: AssociationConfig,
    pub anomaly: AnomalyConfig,
    /// IoU above which overlapping detections are suppressed.
    pub nms_overlap: f64,
    /// Station identifier stamped into every alert.
    pub node_id: u16,
    /// Alert timestamps are this base plus the event's trigger frame.
    pub base_timestamp: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            association: AssociationConfig::default(),
            anomaly: AnomalyConfig::default(),
            nms_overlap: 0.3,
            node_id: 1,
            base_timestamp: 0,
        }
    }
}

/// Wall-clock cost of one frame, split by stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTiming {
    pub ingest: Duration,
    pub associate: Duration,
    pub anomaly: Duration,
    pub alert: Duration,
}

/// Everything one run produces.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub frames: u64,
    pub first_frame: u64,
    pub last_frame: u64,
    /// CSV: frame,track_id,x,y,w,h per confirmed track per frame.
    pub track_log: String,
    /// TSV: frame_start, frame_end, code, score, track ids.
    pub event_log: String,
    pub events: Vec<AnomalyEvent>,
    pub alerts: Vec<AnomalyAlert>,
    pub delivery: Vec<DeliveryReport>,
    /// Pooled per-frame regularity scores over [first_frame, last_frame].
    pub scores: Vec<f64>,
    /// Same, restricted per anomaly class.
    pub class_scores: Vec<Vec<f64>>,
    pub timings: Vec<StageTiming>,
}

/// Streaming pipeline state; feed batches in frame order, then `finish`.
pub struct Pipeline {
    cfg: PipelineConfig,
    tracker: Tracker,
    engine: AnomalyEngine,
    alerted: usize,
    first_frame: Option<u64>,
    last_frame: u64,
    frames: u64,
    track_log: String,
    alerts: Vec<AnomalyAlert>,
    delivery: Vec<DeliveryReport>,
    timings: Vec<StageTiming>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        if !(0.0..=1.0).contains(&cfg.nms_overlap) {
            return Err(PipelineError::BadNmsOverlap(cfg.nms_overlap));
        }
        Ok(Self {
            tracker: Tracker::new(
                cfg.association.clone(),
                KalmanFilter::new(MotionConfig::default()),
            ),
            engine: AnomalyEngine::new(cfg.anomaly.clone()),
            cfg,
            alerted: 0,
            first_frame: None,
            last_frame: 0,
            frames: 0,
            track_log: String::new(),
            alerts: Vec::new(),
            delivery: Vec::new(),
            timings: Vec::new(),
        })
    }

    /// Processes one frame batch end to end.
    pub fn process_batch(
        &mut self,
        batch: &FrameBatch,
        sinks: &mut [Box<dyn AlertSink>],
    ) -> Result<(), PipelineError> {
        let t0 = Instant::now();
        let survivors = nms(&batch.detections, self.cfg.nms_overlap);
        let t1 = Instant::now();
        let result = self.tracker.step(batch.frame, &survivors)?;
        let t2 = Instant::now();
        self.engine.observe(&result);
        let t3 = Instant::now();

        // Alert once per event, at the moment it opens.
        let events = self.engine.events();
        for event in &events[self.alerted..] {
            let alert = alert_from_event(event, self.cfg.node_id, self.cfg.base_timestamp);
            let report = dispatch(&alert, sinks)?;
            self.alerts.push(alert);
            self.delivery.push(report);
        }
        self.alerted = events.len();
        let t4 = Instant::now();

        for snap in &result.active_tracks {
            let b = snap.observation.to_bounding_box();
            writeln!(
                self.track_log,
                "{},{},{},{},{},{}",
                batch.frame, snap.id, b.x, b.y, b.w, b.h
            )
            .expect("writing to a String cannot fail");
        }

        self.first_frame.get_or_insert(batch.frame);
        self.last_frame = batch.frame;
        self.frames += 1;
        self.timings.push(StageTiming {
            ingest: t1 - t0,
            associate: t2 - t1,
            anomaly: t3 - t2,
            alert: t4 - t3,
        });
        Ok(())
    }

    /// Finalizes the run: event log and per-frame scores.
    pub fn finish(self) -> RunOutput {
        let first = self.first_frame.unwrap_or(0);
        let last = self.last_frame.max(first);
        let events = self.engine.sorted_events();

        let mut event_log = String::new();
        for e in &events {
            let ids = e
                .track_ids
                .iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(",");
            writeln!(
                event_log,
                "{}\t{}\t{}\t{:.6}\t{}",
                e.frame_start,
                e.frame_end,
                e.code.code(),
                e.score,
                ids
            )
            .expect("writing to a String cannot fail");
        }

        let (scores, class_scores) = if self.frames == 0 {
            (Vec::new(), vec![Vec::new(); AnomalyCode::ALL.len()])
        } else {
            (
                self.engine.frame_scores(first, last),
                AnomalyCode::ALL
                    .iter()
                    .map(|&c| self.engine.frame_scores_for(c, first, last))
                    .collect(),
            )
        };

        RunOutput {
            frames: self.frames,
            first_frame: first,
            last_frame: last,
            track_log: self.track_log,
            event_log,
            events,
            alerts: self.alerts,
            delivery: self.delivery,
            scores,
            class_scores,
            timings: self.timings,
        }
    }
}

/// Builds the wire alert for an event. Track ids are truncated to the
/// 16-bit wire width and capped at the frame's capacity.
pub fn alert_from_event(event: &AnomalyEvent, node_id: u16, base_timestamp: u32) -> AnomalyAlert {
    AnomalyAlert {
        node_id,
        timestamp: base_timestamp.wrapping_add(event.frame_end as u32),
        code: event.code.code(),
        score_q: quantize_score(event.score),
        track_ids: event
            .track_ids
            .iter()
            .take(MAX_ALERT_TRACKS)
            .map(|&id| id as u16)
            .collect(),
    }
}

/// Fails fast if any detection lacks a descriptor; runs validate this
/// before frame 1 so nothing dies mid-stream.
pub fn validate_descriptors(frames: &[FrameBatch]) -> Result<(), PipelineError> {
    for batch in frames {
        for (index, det) in batch.detections.iter().enumerate() {
            if det.descriptor.is_none() {
                return Err(PipelineError::MissingDescriptor {
                    frame: batch.frame,
                    index,
                });
            }
        }
    }
    Ok(())
}

/// Convenience wrapper: validate, process every batch, finish.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    frames: &[FrameBatch],
    sinks: &mut [Box<dyn AlertSink>],
) -> Result<RunOutput, PipelineError> {
    validate_descriptors(frames)?;
    let mut pipeline = Pipeline::new(cfg.clone())?;
    for batch in frames {
        pipeline.process_batch(batch, sinks)?;
    }
    Ok(pipeline.finish())
}
