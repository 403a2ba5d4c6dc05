//! Multi-object tracking and trajectory anomaly detection for fixed-camera
//! footage, built for CPU-only deployments where every millisecond of the
//! frame budget is spoken for by the detector.
//!
//! The pipeline is tracking-by-detection: bounding boxes from an external
//! detector are filtered with non-maximum suppression, associated to tracks
//! with a Kalman filter plus appearance galleries, and the resulting
//! trajectories are scored by a set of rule-based anomaly detectors. Events
//! are serialized into compact binary alert frames suitable for constrained
//! uplinks.
//!
//! Modules are layered bottom-up:
//!
//! * [`geometry`]: boxes, IoU, non-maximum suppression, observation mapping
//! * [`motion`]: constant-velocity Kalman filter over (u, v, γ, h) tracks
//! * [`appearance`]: unit descriptors, galleries, the histogram encoder
//! * [`association`]: gated cost matrices, optimal assignment, track lifecycle
//! * [`anomaly`]: trajectory features, six anomaly rules, template matching
//! * [`ingestion`]: detection CSV parsing and the synthetic scenario generator
//! * [`alerting`]: binary alert codec and delivery sinks
//! * [`evaluation`]: frame-level AUC, parameter sweeps, timing model, bench
//! * [`pipeline`]: glue that runs ingestion through alerting end to end

pub mod alerting;
pub mod anomaly;
pub mod appearance;
pub mod association;
pub mod evaluation;
pub mod geometry;
pub mod ingestion;
pub mod motion;
pub mod pipeline;
