//! Detection file parsing, descriptor sidecars, and the synthetic
//! scenario generator.
//!
//! The interchange format is MOT-style CSV (`frame,id,x,y,w,h,confidence`)
//! so public detection dumps and external detector processes can both
//! drive the pipeline. Descriptors ride in a sidecar CSV
//! (`frame,det_index,v0..v127`); file-only runs require one, because the
//! built-in encoder needs pixels that files don't carry.
//!
//! The scenario generator scripts parametric actors (walkers, loiterers,
//! runners, circlers, jumpers, converging and diverging groups), renders
//! them into noisy detections with synthetic descriptors, and emits
//! per-frame ground-truth anomaly labels implied by the scripts. Fixed
//! seed, fixed bytes.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;
use thiserror::Error;

use crate::anomaly::{
    detect_dispersion, detect_gathering, AnomalyCode, RuleParams, TraceEndpoints,
    ANOMALY_CLASS_COUNT,
};
use crate::appearance::{Descriptor, DESCRIPTOR_DIM};
use crate::geometry::{BoundingBox, Detection};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: descriptor row needs frame, det_index and {DESCRIPTOR_DIM} values")]
    DescriptorArity { line: usize },
    #[error("line {line}: duplicate descriptor for frame {frame} detection {index}")]
    DuplicateDescriptor {
        line: usize,
        frame: u64,
        index: usize,
    },
    #[error("frame {frame} detection {index} has no descriptor in the sidecar")]
    MissingDescriptor { frame: u64, index: usize },
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("scenario file: {0}")]
    ScenarioSyntax(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn malformed(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Malformed {
        line,
        message: message.into(),
    }
}

/// All detections of one frame, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBatch {
    pub frame: u64,
    pub detections: Vec<Detection>,
}

/// Parses `frame,id,x,y,w,h,confidence` CSV into frame-ordered batches.
/// Records may arrive frame-unsorted; they are grouped and yielded in
/// ascending frame order with within-frame order preserved. Blank lines
/// and `#` comments are skipped.
pub fn parse_detections<R: BufRead>(reader: R) -> Result<Vec<FrameBatch>, IngestError> {
    let mut by_frame: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim_end();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 7 {
            return Err(malformed(
                line_no,
                format!("expected 7 comma-separated fields, found {}", fields.len()),
            ));
        }
        let frame: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|e| malformed(line_no, format!("bad frame index: {e}")))?;
        let _id: i64 = fields[1]
            .trim()
            .parse()
            .map_err(|e| malformed(line_no, format!("bad id field: {e}")))?;
        let mut nums = [0.0f64; 5];
        for (slot, field) in nums.iter_mut().zip(&fields[2..7]) {
            *slot = field
                .trim()
                .parse()
                .map_err(|e| malformed(line_no, format!("bad number {field:?}: {e}")))?;
            if !slot.is_finite() {
                return Err(malformed(line_no, format!("non-finite value {field:?}")));
            }
        }
        let bbox = BoundingBox::new(nums[0], nums[1], nums[2], nums[3])
            .map_err(|e| malformed(line_no, e.to_string()))?;
        let detection = Detection::new(frame, bbox, nums[4], None)
            .map_err(|e| malformed(line_no, e.to_string()))?;
        by_frame.entry(frame).or_default().push(detection);
    }
    Ok(by_frame
        .into_iter()
        .map(|(frame, detections)| FrameBatch { frame, detections })
        .collect())
}

/// Writes batches back out in the interchange format. Floats use the
/// shortest round-trippable decimal form, so parse∘serialize is identity.
pub fn serialize_detections<W: Write>(
    frames: &[FrameBatch],
    mut out: W,
) -> Result<(), std::io::Error> {
    for batch in frames {
        for d in &batch.detections {
            writeln!(
                out,
                "{},-1,{},{},{},{},{}",
                batch.frame, d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.confidence
            )?;
        }
    }
    Ok(())
}

/// Parses a descriptor sidecar (`frame,det_index,v0..v127`). Vectors are
/// re-normalized to unit length on load.
pub fn parse_descriptors<R: BufRead>(
    reader: R,
) -> Result<BTreeMap<(u64, usize), Descriptor>, IngestError> {
    let mut map = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim_end();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut fields = text.split(',');
        let frame: u64 = fields
            .next()
            .ok_or(IngestError::DescriptorArity { line: line_no })?
            .trim()
            .parse()
            .map_err(|e| malformed(line_no, format!("bad frame index: {e}")))?;
        let index: usize = fields
            .next()
            .ok_or(IngestError::DescriptorArity { line: line_no })?
            .trim()
            .parse()
            .map_err(|e| malformed(line_no, format!("bad detection index: {e}")))?;
        let mut values = [0.0f64; DESCRIPTOR_DIM];
        let mut count = 0;
        for field in fields {
            if count == DESCRIPTOR_DIM {
                return Err(IngestError::DescriptorArity { line: line_no });
            }
            values[count] = field
                .trim()
                .parse()
                .map_err(|e| malformed(line_no, format!("bad value {field:?}: {e}")))?;
            count += 1;
        }
        if count != DESCRIPTOR_DIM {
            return Err(IngestError::DescriptorArity { line: line_no });
        }
        let descriptor = Descriptor::from_unnormalized(&values)
            .map_err(|e| malformed(line_no, e.to_string()))?;
        if map.insert((frame, index), descriptor).is_some() {
            return Err(IngestError::DuplicateDescriptor {
                line: line_no,
                frame,
                index,
            });
        }
    }
    Ok(map)
}

/// Writes a descriptor map in sidecar format.
pub fn serialize_descriptors<W: Write>(
    map: &BTreeMap<(u64, usize), Descriptor>,
    mut out: W,
) -> Result<(), std::io::Error> {
    for ((frame, index), d) in map {
        write!(out, "{frame},{index}")?;
        for v in d.values() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Attaches sidecar descriptors to every detection, failing fast on the
/// first detection without one.
pub fn attach_descriptors(
    frames: &mut [FrameBatch],
    map: &BTreeMap<(u64, usize), Descriptor>,
) -> Result<(), IngestError> {
    for batch in frames {
        for (index, det) in batch.detections.iter_mut().enumerate() {
            match map.get(&(batch.frame, index)) {
                Some(d) => det.descriptor = Some(d.clone()),
                None => {
                    return Err(IngestError::MissingDescriptor {
                        frame: batch.frame,
                        index,
                    })
                }
            }
        }
    }
    Ok(())
}

/// One scripted jump: the actor leaves the ground at `from`, peaks
/// halfway, and lands at `until` (frames inclusive).
#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub from: u64,
    pub until: u64,
    /// Peak height in pixels.
    pub height: f64,
}

/// Trajectory script kinds. `walk` is unlabeled background traffic; the
/// rest imply ground-truth anomaly labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptKind {
    Walk,
    Loiter,
    Run,
    Circle,
    Jump,
    Converge,
    Diverge,
}

/// One scripted actor.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub script: ScriptKind,
    /// First frame the actor is on scene.
    #[serde(default)]
    pub enter: u64,
    /// First frame the actor is gone; defaults to the scenario end.
    pub exit: Option<u64>,
    pub start: [f64; 2],
    /// Pixels/frame for walk, run, jump.
    #[serde(default)]
    pub velocity: [f64; 2],
    /// Circle script: orbit center, radius, frames per revolution.
    pub center: Option<[f64; 2]>,
    #[serde(default)]
    pub radius: f64,
    #[serde(default)]
    pub period: u64,
    /// Jump script: the scripted excursions.
    #[serde(default)]
    pub jumps: Vec<JumpSpec>,
    /// Converge/diverge: the shared meeting point.
    pub target: Option<[f64; 2]>,
    /// Converge/diverge: approach/departure speed in pixels/frame.
    #[serde(default)]
    pub speed: f64,
    /// Converge: how close to the target the actor stops, so group
    /// members do not stack on one pixel.
    #[serde(default = "default_standoff")]
    pub standoff: f64,
    /// Diverge: the actor holds its start position until this frame.
    #[serde(default)]
    pub hold_until: u64,
    /// Group id tying converge/diverge members together.
    #[serde(default)]
    pub group: u32,
}

fn default_standoff() -> f64 {
    6.0
}

/// A full synthetic scene: bounds, sensor noise, and the actor scripts.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub duration: u64,
    pub width: f64,
    pub height: f64,
    /// Detection center jitter std, pixels.
    #[serde(default = "default_detection_noise")]
    pub detection_noise: f64,
    /// Per-frame descriptor perturbation scale.
    #[serde(default = "default_descriptor_noise")]
    pub descriptor_noise: f64,
    /// Nominal person box height, pixels.
    #[serde(default = "default_box_height")]
    pub box_height: f64,
    /// Nominal box aspect ratio w/h.
    #[serde(default = "default_aspect")]
    pub aspect: f64,
    pub actors: Vec<ActorSpec>,
}

fn default_detection_noise() -> f64 {
    0.3
}
fn default_descriptor_noise() -> f64 {
    0.05
}
fn default_box_height() -> f64 {
    40.0
}
fn default_aspect() -> f64 {
    0.4
}

pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, IngestError> {
    let spec: ScenarioSpec = toml::from_str(text)?;
    spec.validate()?;
    Ok(spec)
}

impl ScenarioSpec {
    fn validate(&self) -> Result<(), IngestError> {
        let fail = |m: String| Err(IngestError::Scenario(m));
        if self.duration == 0 {
            return fail("duration must be at least 1 frame".into());
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return fail("scene bounds must be positive".into());
        }
        if self.actors.is_empty() {
            return fail("scenario needs at least one actor".into());
        }
        for (i, a) in self.actors.iter().enumerate() {
            let inside =
                |p: [f64; 2]| p[0] >= 0.0 && p[0] < self.width && p[1] >= 0.0 && p[1] < self.height;
            if !inside(a.start) {
                return fail(format!(
                    "actor {i}: start {:?} outside scene bounds",
                    a.start
                ));
            }
            match a.script {
                ScriptKind::Circle => {
                    let Some(center) = a.center else {
                        return fail(format!("actor {i}: circle script needs a center"));
                    };
                    if !inside(center) {
                        return fail(format!("actor {i}: circle center outside bounds"));
                    }
                    if a.radius.is_nan() || a.radius <= 0.0 || a.period < 8 {
                        return fail(format!(
                            "actor {i}: circle needs radius > 0 and period >= 8"
                        ));
                    }
                }
                ScriptKind::Converge | ScriptKind::Diverge => {
                    let Some(target) = a.target else {
                        return fail(format!("actor {i}: group script needs a target"));
                    };
                    if !inside(target) {
                        return fail(format!("actor {i}: group target outside bounds"));
                    }
                    if a.speed.is_nan() || a.speed <= 0.0 {
                        return fail(format!("actor {i}: group script needs speed > 0"));
                    }
                }
                ScriptKind::Jump => {
                    for j in &a.jumps {
                        if j.until <= j.from || j.height.is_nan() || j.height <= 0.0 {
                            return fail(format!("actor {i}: bad jump window {j:?}"));
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn actor_exit(&self, a: &ActorSpec) -> u64 {
        a.exit.unwrap_or(self.duration).min(self.duration)
    }

    /// Noise-free scripted position, or None when the actor is off scene.
    fn clean_position(&self, a: &ActorSpec, frame: u64) -> Option<(f64, f64)> {
        if frame < a.enter || frame >= self.actor_exit(a) {
            return None;
        }
        let t = (frame - a.enter) as f64;
        let pos = match a.script {
            ScriptKind::Walk | ScriptKind::Run => (
                a.start[0] + a.velocity[0] * t,
                a.start[1] + a.velocity[1] * t,
            ),
            ScriptKind::Loiter => (a.start[0], a.start[1]),
            ScriptKind::Circle => {
                let center = a.center.expect("validated");
                let angle = std::f64::consts::TAU * t / a.period as f64;
                (
                    center[0] + a.radius * angle.cos(),
                    center[1] + a.radius * angle.sin(),
                )
            }
            ScriptKind::Jump => {
                let u = a.start[0] + a.velocity[0] * t;
                let mut v = a.start[1] + a.velocity[1] * t;
                for j in &a.jumps {
                    if frame >= j.from && frame <= j.until {
                        // Triangular excursion peaking halfway through.
                        let phase = (frame - j.from) as f64 / (j.until - j.from) as f64;
                        v -= j.height * (1.0 - (2.0 * phase - 1.0).abs());
                    }
                }
                (u, v)
            }
            ScriptKind::Converge => {
                let target = a.target.expect("validated");
                let (dx, dy) = (target[0] - a.start[0], target[1] - a.start[1]);
                let dist = (dx * dx + dy * dy).sqrt().max(1e-9);
                let travel = (a.speed * t).min((dist - a.standoff).max(0.0));
                (
                    a.start[0] + dx / dist * travel,
                    a.start[1] + dy / dist * travel,
                )
            }
            ScriptKind::Diverge => {
                let target = a.target.expect("validated");
                if frame <= a.hold_until {
                    (a.start[0], a.start[1])
                } else {
                    let (dx, dy) = (a.start[0] - target[0], a.start[1] - target[1]);
                    let dist = (dx * dx + dy * dy).sqrt().max(1e-9);
                    let travel = a.speed * (frame - a.hold_until) as f64;
                    (
                        a.start[0] + dx / dist * travel,
                        a.start[1] + dy / dist * travel,
                    )
                }
            }
        };
        let visible = pos.0 >= 0.0 && pos.0 < self.width && pos.1 >= 0.0 && pos.1 < self.height;
        visible.then_some(pos)
    }
}

/// Per-frame, per-class ground-truth labels for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    labels: Vec<[bool; ANOMALY_CLASS_COUNT]>,
}

impl GroundTruth {
    pub fn frames(&self) -> usize {
        self.labels.len()
    }

    pub fn class(&self, code: AnomalyCode) -> Vec<bool> {
        self.labels
            .iter()
            .map(|l| l[code.code() as usize])
            .collect()
    }

    /// True wherever any class is active.
    pub fn pooled(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.iter().any(|&b| b)).collect()
    }

    pub fn mark(&mut self, code: AnomalyCode, from: u64, until: u64) {
        let hi = (until as usize).min(self.labels.len().saturating_sub(1));
        for f in from as usize..=hi {
            self.labels[f][code.code() as usize] = true;
        }
    }
}

/// Everything a scenario run produces: frame batches with descriptors
/// attached, plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub frames: Vec<FrameBatch>,
    pub truth: GroundTruth,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Renders a scenario into noisy detections with synthetic descriptors
/// and the ground-truth labels the scripts imply. Deterministic per seed.
pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<ScenarioRun, IngestError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Fixed random unit descriptor per actor, drawn in actor order.
    let identities: Vec<[f64; DESCRIPTOR_DIM]> = spec
        .actors
        .iter()
        .map(|_| {
            let mut v = [0.0; DESCRIPTOR_DIM];
            for x in &mut v {
                *x = gaussian(&mut rng);
            }
            v
        })
        .collect();

    let mut frames = Vec::with_capacity(spec.duration as usize);
    for frame in 0..spec.duration {
        let mut detections = Vec::new();
        for (actor, identity) in spec.actors.iter().zip(&identities) {
            let Some((cu, cv)) = spec.clean_position(actor, frame) else {
                continue;
            };
            let u = cu + spec.detection_noise * gaussian(&mut rng);
            let v = cv + spec.detection_noise * gaussian(&mut rng);
            let h = spec.box_height * (1.0 + 0.02 * gaussian(&mut rng));
            let w = spec.aspect * h;
            let confidence = 0.85 + 0.1 * rng.gen::<f64>();

            let mut values = *identity;
            for x in &mut values {
                *x += spec.descriptor_noise * gaussian(&mut rng);
            }
            let descriptor = Descriptor::from_unnormalized(&values)
                .expect("gaussian identity vectors have nonzero norm");

            let bbox = BoundingBox::new(u - w / 2.0, v - h / 2.0, w, h)
                .expect("jittered boxes keep positive size");
            let det = Detection::new(frame, bbox, confidence, Some(descriptor))
                .expect("confidence stays in the unit interval");
            detections.push(det);
        }
        frames.push(FrameBatch { frame, detections });
    }

    let truth = ground_truth(spec);
    Ok(ScenarioRun { frames, truth })
}

/// Labels implied by the scripts: single-actor anomalies label their
/// scripted spans; group anomalies are labeled by running the group rules
/// on the noise-free scripted trajectories, which is exactly the behavior
/// the scripts stage.
fn ground_truth(spec: &ScenarioSpec) -> GroundTruth {
    let mut truth = GroundTruth {
        labels: vec![[false; ANOMALY_CLASS_COUNT]; spec.duration as usize],
    };
    for a in &spec.actors {
        let code = match a.script {
            ScriptKind::Loiter => Some(AnomalyCode::Loitering),
            ScriptKind::Run => Some(AnomalyCode::FastMotion),
            ScriptKind::Circle => Some(AnomalyCode::CircularMotion),
            _ => None,
        };
        if let Some(code) = code {
            // Label only frames where the actor is actually on scene.
            for f in a.enter..spec.actor_exit(a) {
                if spec.clean_position(a, f).is_some() {
                    truth.mark(code, f, f);
                }
            }
        }
        if a.script == ScriptKind::Jump {
            for j in &a.jumps {
                for f in j.from..=j.until {
                    if spec.clean_position(a, f).is_some() {
                        truth.mark(AnomalyCode::Jump, f, f);
                    }
                }
            }
        }
    }

    // Group labels: replay the gathering/dispersion rules over the clean
    // scripted positions with default thresholds.
    let p = RuleParams::default();
    let mut groups: BTreeMap<(bool, u32), Vec<usize>> = BTreeMap::new();
    for (i, a) in spec.actors.iter().enumerate() {
        match a.script {
            ScriptKind::Converge => groups.entry((true, a.group)).or_default().push(i),
            ScriptKind::Diverge => groups.entry((false, a.group)).or_default().push(i),
            _ => {}
        }
    }
    for ((converging, _), members) in groups {
        for frame in p.converge_frames..spec.duration {
            // Group rules only evaluate every eval_stride processed frames
            // (the first evaluation lands on frame eval_stride - 1 when the
            // scenario starts at frame 0); label on the same grid so the
            // marked spans line up with what a run can actually produce.
            if (frame + 1) % p.eval_stride != 0 {
                continue;
            }
            let horizon = frame - p.converge_frames;
            let mut traces = Vec::new();
            for &i in &members {
                let a = &spec.actors[i];
                let (Some(s), Some(e)) = (
                    spec.clean_position(a, horizon),
                    spec.clean_position(a, frame),
                ) else {
                    continue;
                };
                traces.push(TraceEndpoints {
                    id: i as u64,
                    start: s,
                    end: e,
                });
            }
            let fired = if converging {
                detect_gathering(&traces, &p).is_some()
            } else {
                detect_dispersion(&traces, &p).is_some()
            };
            if fired {
                let code = if converging {
                    AnomalyCode::Gathering
                } else {
                    AnomalyCode::Dispersion
                };
                truth.mark(code, horizon, frame);
            }
        }
    }
    truth
}
