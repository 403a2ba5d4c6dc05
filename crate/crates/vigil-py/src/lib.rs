//! Python bindings: frame-by-frame tracking, anomaly scenario runs, the
//! ranking metric, the latency model, and the alert wire codec.
//!
//! Build the importable module with
//! `cargo build -p vigil-py --features extension-module`, then rename
//! `libvigil_py.so` to `vigil_py.so` (python/smoke_test.py does this).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use vigil::alerting;
use vigil::anomaly::AnomalyCode;
use vigil::appearance::Descriptor;
use vigil::association::{AssociationConfig, Tracker as CoreTracker};
use vigil::evaluation::{frame_auc as core_auc, EvalRecord, TimingModel};
use vigil::geometry::{nms as core_nms, BoundingBox, Detection};
use vigil::ingestion::{generate_scenario, parse_scenario};
use vigil::motion::{KalmanFilter, MotionConfig};
use vigil::pipeline::{run_pipeline, PipelineConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// (x, y, w, h, confidence, optional 128-dim appearance descriptor)
type DetectionTuple = (f64, f64, f64, f64, f64, Option<Vec<f64>>);
type BoxTuple = (f64, f64, f64, f64, f64);

fn to_detection(frame: u64, d: &DetectionTuple) -> PyResult<Detection> {
    let bbox = BoundingBox::new(d.0, d.1, d.2, d.3).map_err(value_err)?;
    let descriptor = match &d.5 {
        Some(values) => Some(Descriptor::from_unnormalized(values).map_err(value_err)?),
        None => None,
    };
    Detection::new(frame, bbox, d.4, descriptor).map_err(value_err)
}

/// Frame-driven multi-object tracker with appearance galleries.
#[pyclass]
struct Tracker {
    inner: CoreTracker,
}

#[pymethods]
impl Tracker {
    #[new]
    #[pyo3(signature = (
        motion_weight = 0.0,
        motion_gate = 9.4877,
        max_cos_distance = 0.9,
        max_age = 30,
        n_init = 3,
        gallery_capacity = 100,
    ))]
    fn new(
        motion_weight: f64,
        motion_gate: f64,
        max_cos_distance: f64,
        max_age: u32,
        n_init: u32,
        gallery_capacity: usize,
    ) -> Self {
        let cfg = AssociationConfig {
            motion_weight,
            motion_gate,
            max_cos_distance,
            max_age,
            n_init,
            gallery_capacity,
        };
        Self {
            inner: CoreTracker::new(cfg, KalmanFilter::new(MotionConfig::default())),
        }
    }

    /// Advances one frame. Returns
    /// (matches, new_tracks, deleted_tracks, active) where matches pairs
    /// (track_id, detection_index) and active lists confirmed tracks as
    /// (track_id, u, v, gamma, h).
    #[allow(clippy::type_complexity)]
    fn step(
        &mut self,
        frame: u64,
        detections: Vec<DetectionTuple>,
    ) -> PyResult<(
        Vec<(u64, usize)>,
        Vec<u64>,
        Vec<u64>,
        Vec<(u64, f64, f64, f64, f64)>,
    )> {
        let dets = detections
            .iter()
            .map(|d| to_detection(frame, d))
            .collect::<PyResult<Vec<_>>>()?;
        let r = self.inner.step(frame, &dets).map_err(value_err)?;
        let active = r
            .active_tracks
            .iter()
            .map(|s| {
                (
                    s.id,
                    s.observation.u,
                    s.observation.v,
                    s.observation.gamma,
                    s.observation.h,
                )
            })
            .collect();
        Ok((r.matches, r.new_tracks, r.deleted_tracks, active))
    }
}

/// Outcome of a full synthetic-scenario pipeline run.
#[pyclass(frozen)]
struct RunResult {
    /// Frames processed.
    #[pyo3(get)]
    frames: u64,
    /// Ranking quality of the pooled per-frame scores against the
    /// scenario's own ground truth.
    #[pyo3(get)]
    auc: f64,
    /// (class_label, frame_start, frame_end, score, track_ids) per event.
    #[pyo3(get)]
    events: Vec<(String, u64, u64, f64, Vec<u64>)>,
    /// Encoded alert frames emitted.
    #[pyo3(get)]
    alerts: usize,
    #[pyo3(get)]
    track_log: String,
    #[pyo3(get)]
    event_log: String,
    /// Per-frame pooled anomaly scores.
    #[pyo3(get)]
    scores: Vec<f64>,
    /// Per-frame ground-truth labels (any class active).
    #[pyo3(get)]
    labels: Vec<bool>,
}

/// Generates the scenario described by `toml_text` with the given seed,
/// runs the full pipeline on it, and scores the result against the
/// scenario's ground truth.
#[pyfunction]
#[pyo3(signature = (toml_text, seed = 1))]
fn run_scenario(toml_text: &str, seed: u64) -> PyResult<RunResult> {
    let spec = parse_scenario(toml_text).map_err(value_err)?;
    let run = generate_scenario(&spec, seed).map_err(value_err)?;
    let out = run_pipeline(&PipelineConfig::default(), &run.frames, &mut []).map_err(value_err)?;
    let labels = run.truth.pooled();
    let auc = core_auc(&EvalRecord::new(out.scores.clone(), labels.clone()).map_err(value_err)?)
        .map_err(value_err)?;
    let events = out
        .events
        .iter()
        .map(|e| {
            (
                e.code.label().to_string(),
                e.frame_start,
                e.frame_end,
                e.score,
                e.track_ids.clone(),
            )
        })
        .collect();
    Ok(RunResult {
        frames: out.frames,
        auc,
        events,
        alerts: out.alerts.len(),
        track_log: out.track_log,
        event_log: out.event_log,
        scores: out.scores,
        labels,
    })
}

/// Area under the ROC curve of per-frame scores against binary labels,
/// computed by midrank; ties get half credit.
#[pyfunction]
fn frame_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    let record = EvalRecord::new(scores, labels).map_err(value_err)?;
    core_auc(&record).map_err(value_err)
}

/// Predicted per-frame latency (ms) and throughput (fps) for a frame with
/// `dk` detections under the linear stage-cost model.
#[pyfunction]
#[pyo3(signature = (dk, od_ms = 92.0, fe_ms = 38.0, ta_ms = 4.0))]
fn predict_latency(dk: u64, od_ms: f64, fe_ms: f64, ta_ms: f64) -> PyResult<(f64, f64)> {
    let model = TimingModel::new(od_ms, fe_ms, ta_ms).map_err(value_err)?;
    let p = model.predict(dk);
    Ok((p.tau_ms, p.fps))
}

/// Encodes an anomaly alert into its checksummed wire frame. The score is
/// quantized to 8 bits.
#[pyfunction]
fn encode_alert<'py>(
    py: Python<'py>,
    node_id: u16,
    timestamp: u32,
    code: u8,
    score: f64,
    track_ids: Vec<u16>,
) -> PyResult<Bound<'py, PyBytes>> {
    let alert = alerting::AnomalyAlert {
        node_id,
        timestamp,
        code,
        score_q: alerting::quantize_score(score),
        track_ids,
    };
    let frame = alerting::encode_alert(&alert).map_err(value_err)?;
    Ok(PyBytes::new(py, &frame))
}

/// Decodes and verifies a wire frame. Returns
/// (node_id, timestamp, code, class_label, score, track_ids); the score is
/// the dequantized value in [0, 1].
#[pyfunction]
#[allow(clippy::type_complexity)]
fn decode_alert(data: Vec<u8>) -> PyResult<(u16, u32, u8, String, f64, Vec<u16>)> {
    let alert = alerting::decode_alert(&data).map_err(value_err)?;
    let label = AnomalyCode::from_code(alert.code)
        .map(|c| c.label().to_string())
        .unwrap_or_default();
    Ok((
        alert.node_id,
        alert.timestamp,
        alert.code,
        label,
        alert.score_q as f64 / 255.0,
        alert.track_ids,
    ))
}

/// Greedy non-maximum suppression over (x, y, w, h, confidence) boxes;
/// returns the surviving boxes in confidence order.
#[pyfunction]
fn nms(boxes: Vec<BoxTuple>, overlap: f64) -> PyResult<Vec<BoxTuple>> {
    let dets = boxes
        .iter()
        .map(|&(x, y, w, h, c)| {
            let bbox = BoundingBox::new(x, y, w, h).map_err(value_err)?;
            Detection::new(0, bbox, c, None).map_err(value_err)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok(core_nms(&dets, overlap)
        .into_iter()
        .map(|d| (d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.confidence))
        .collect())
}

#[pymodule]
fn vigil_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tracker>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(frame_auc, m)?)?;
    m.add_function(wrap_pyfunction!(predict_latency, m)?)?;
    m.add_function(wrap_pyfunction!(encode_alert, m)?)?;
    m.add_function(wrap_pyfunction!(decode_alert, m)?)?;
    m.add_function(wrap_pyfunction!(nms, m)?)?;
    Ok(())
}
