//! Trajectory anomaly rules and per-frame regularity scoring.
//!
//! Six anomaly classes are recognized, identified by their wire code:
//!
//! | code | class      | trigger                                            |
//! |------|------------|----------------------------------------------------|
//! | 0    | loitering  | confined to a small radius for a long time         |
//! | 1    | fast       | window speed far above the scene's walking speeds  |
//! | 2    | circular   | accumulated heading change of a full turn or more  |
//! | 3    | jump       | short vertical excursion well above scene baseline |
//! | 4    | gathering  | four or more tracks converging on a common point   |
//! | 5    | dispersion | four or more tracks radiating from a common point  |
//!
//! Rule thresholds are qualitative in nature ("a long time", "very small
//! area"), so every one of them is a named parameter in [`RuleParams`].
//! Detectors are pure functions over trajectory windows; [`AnomalyEngine`]
//! feeds them from tracker snapshots, deduplicates repeated firings into
//! [`AnomalyEvent`] spans, and turns the event set into per-frame scores
//! (the max over active events, 0 when quiet).
//!
//! An optional template path scores trajectories against reference feature
//! profiles by positive-part cosine similarity, aligned at the best shift;
//! it feeds the same event stream and can be enabled independently of the
//! rules.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::association::{FrameResult, TrackId};
use crate::geometry::Observation;

pub const ANOMALY_CLASS_COUNT: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum AnomalyError {
    #[error("trajectory window has {0} samples, need at least 2")]
    WindowTooShort(usize),
    #[error("trajectory window frames must strictly increase")]
    NonMonotoneWindow,
    #[error("anomaly template needs at least one profile")]
    EmptyTemplate,
    #[error("template profile is not unit norm (norm {0})")]
    ProfileNotUnit(f64),
    #[error("feature sequence of {sequence} vectors cannot host a template of {template} at any requested shift")]
    ShiftOutOfRange { sequence: usize, template: usize },
}

/// Anomaly class, ordered by wire code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AnomalyCode {
    Loitering = 0,
    FastMotion = 1,
    CircularMotion = 2,
    Jump = 3,
    Gathering = 4,
    Dispersion = 5,
}

impl AnomalyCode {
    pub const ALL: [AnomalyCode; ANOMALY_CLASS_COUNT] = [
        AnomalyCode::Loitering,
        AnomalyCode::FastMotion,
        AnomalyCode::CircularMotion,
        AnomalyCode::Jump,
        AnomalyCode::Gathering,
        AnomalyCode::Dispersion,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            AnomalyCode::Loitering => "loitering",
            AnomalyCode::FastMotion => "fast_motion",
            AnomalyCode::CircularMotion => "circular_motion",
            AnomalyCode::Jump => "jump",
            AnomalyCode::Gathering => "gathering",
            AnomalyCode::Dispersion => "dispersion",
        }
    }
}

/// Summary statistics of one trajectory window.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionFeatures {
    /// Mean step speed in pixels/frame (per-step displacement over frame gap).
    pub mean_speed: f64,
    /// Population std of the step speeds.
    pub speed_std: f64,
    /// Straight-line distance from first to last sample.
    pub net_displacement: f64,
    /// Sum of step lengths; always >= net_displacement.
    pub path_length: f64,
    /// Accumulated signed heading change in radians. A full
    /// counterclockwise loop contributes +2π.
    pub winding: f64,
    /// max(v) - min(v) over the window.
    pub vertical_amplitude: f64,
    /// Largest distance of any sample from the window centroid.
    pub confinement_radius: f64,
    /// Frames spanned: last frame - first frame + 1.
    pub window_len: u64,
}

/// Wraps an angle difference into (−π, π].
fn wrap_angle(a: f64) -> f64 {
    let x = a.rem_euclid(TAU);
    if x > PI {
        x - TAU
    } else {
        x
    }
}

/// Displacements shorter than this carry no usable heading.
const HEADING_EPS: f64 = 1e-9;

/// Computes [`MotionFeatures`] over a window of at least two samples with
/// strictly increasing frame indices.
pub fn motion_features(window: &[(u64, Observation)]) -> Result<MotionFeatures, AnomalyError> {
    if window.len() < 2 {
        return Err(AnomalyError::WindowTooShort(window.len()));
    }
    if window.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(AnomalyError::NonMonotoneWindow);
    }

    let mut speeds = Vec::with_capacity(window.len() - 1);
    let mut path_length = 0.0;
    let mut headings = Vec::new();
    for pair in window.windows(2) {
        let (f0, a) = pair[0];
        let (f1, b) = pair[1];
        let du = b.u - a.u;
        let dv = b.v - a.v;
        let dist = (du * du + dv * dv).sqrt();
        path_length += dist;
        speeds.push(dist / (f1 - f0) as f64);
        if dist > HEADING_EPS {
            headings.push(dv.atan2(du));
        }
    }
    let mean_speed = speeds.iter().sum::<f64>() / speeds.len() as f64;
    let speed_var =
        speeds.iter().map(|s| (s - mean_speed).powi(2)).sum::<f64>() / speeds.len() as f64;

    let winding = headings
        .windows(2)
        .map(|h| wrap_angle(h[1] - h[0]))
        .sum::<f64>();

    let first = window[0].1;
    let last = window[window.len() - 1].1;
    let net_displacement = ((last.u - first.u).powi(2) + (last.v - first.v).powi(2)).sqrt();

    let n = window.len() as f64;
    let cu = window.iter().map(|(_, o)| o.u).sum::<f64>() / n;
    let cv = window.iter().map(|(_, o)| o.v).sum::<f64>() / n;
    let confinement_radius = window
        .iter()
        .map(|(_, o)| ((o.u - cu).powi(2) + (o.v - cv).powi(2)).sqrt())
        .fold(0.0, f64::max);

    let (vmin, vmax) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, o)| {
            (lo.min(o.v), hi.max(o.v))
        });

    Ok(MotionFeatures {
        mean_speed,
        speed_std: speed_var.sqrt(),
        net_displacement,
        path_length,
        winding,
        vertical_amplitude: vmax - vmin,
        confinement_radius,
        window_len: window[window.len() - 1].0 - window[0].0 + 1,
    })
}

/// All rule thresholds, one named parameter per qualitative phrase.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleParams {
    /// Loitering: confinement radius below this counts as "a very small area".
    pub still_radius: f64,
    /// Loitering: frames above this count as "a long time".
    pub still_frames: u64,
    /// Fast motion: sigma multiplier over the scene speed distribution.
    pub k_sigma: f64,
    /// Fast motion: absolute speed threshold when the scene population is
    /// too thin for meaningful statistics.
    pub abs_speed: f64,
    /// Fast motion: trailing window (frames) for the speed estimate.
    pub fast_window: u64,
    /// Circular: minimum accumulated |winding|.
    pub min_winding: f64,
    /// Circular: net displacement must stay below this fraction of path length.
    pub closure_frac: f64,
    /// Circular: the engine subsamples trajectory windows at this stride so
    /// per-frame jitter does not scramble the heading sequence.
    pub winding_stride: u64,
    /// Circular: subsampled steps shorter than this (pixels) are treated
    /// as detector noise and contribute no heading sample.
    pub heading_min_step: f64,
    /// Jump: amplitude multiplier over the scene vertical baseline.
    pub jump_factor: f64,
    /// Jump: the excursion must complete within this many frames.
    pub jump_window: u64,
    /// Jump: endpoint height difference allowed, as a fraction of the
    /// amplitude; separates a jump (comes back down) from a slope.
    pub jump_closure: f64,
    /// Jump: absolute amplitude threshold for thin populations.
    pub abs_amplitude: f64,
    /// Gather/disperse: radius of the common meet region.
    pub meet_radius: f64,
    /// Gather/disperse: how many trailing frames the approach is judged over.
    pub converge_frames: u64,
    /// Gather/disperse: required relative distance change over the window.
    pub converge_ratio: f64,
    /// Gather/disperse: required absolute distance change in pixels.
    pub min_approach: f64,
    /// Gather/disperse: minimum group size.
    pub min_group: usize,
    /// Multi-track rules run every this many processed frames.
    pub eval_stride: u64,
    /// Per-track trajectory window capacity, in samples.
    pub window_frames: usize,
    /// Scene statistics need this many contributing tracks and this many
    /// samples before the relative thresholds engage; thinner populations
    /// fall back to the absolute thresholds.
    pub min_scene_tracks: usize,
    pub min_scene_samples: u64,
    /// Lower bound on the scene speed std used in score scaling.
    pub sigma_floor: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        Self {
            still_radius: 10.0,
            still_frames: 75,
            k_sigma: 3.0,
            abs_speed: 6.0,
            fast_window: 10,
            min_winding: TAU,
            closure_frac: 0.35,
            winding_stride: 5,
            heading_min_step: 2.0,
            jump_factor: 3.0,
            jump_window: 15,
            jump_closure: 0.5,
            abs_amplitude: 25.0,
            meet_radius: 40.0,
            converge_frames: 25,
            converge_ratio: 0.3,
            min_approach: 10.0,
            min_group: 4,
            eval_stride: 5,
            window_frames: 150,
            min_scene_tracks: 3,
            min_scene_samples: 10,
            sigma_floor: 0.5,
        }
    }
}

/// Running statistics of a scene population (speeds or vertical
/// amplitudes), excluding the track under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PopulationStats {
    /// Distinct tracks that contributed samples.
    pub track_count: usize,
    pub sample_count: u64,
    pub mean: f64,
    pub std: f64,
}

impl PopulationStats {
    fn usable(&self, p: &RuleParams) -> bool {
        self.track_count >= p.min_scene_tracks && self.sample_count >= p.min_scene_samples
    }
}

/// Loitering: fires when the window is at least `still_frames` long and
/// confined within `still_radius`. Score grows as confinement tightens.
pub fn detect_loitering(f: &MotionFeatures, p: &RuleParams) -> Option<f64> {
    if f.confinement_radius < p.still_radius && f.window_len >= p.still_frames {
        Some(1.0 - f.confinement_radius / p.still_radius)
    } else {
        None
    }
}

/// Fast motion: fires when the window's mean speed exceeds the scene mean
/// by more than `k_sigma` standard deviations (strictly). Thin populations
/// fall back to the absolute threshold `abs_speed`.
pub fn detect_fast_motion(
    f: &MotionFeatures,
    scene: &PopulationStats,
    p: &RuleParams,
) -> Option<f64> {
    let threshold = if scene.usable(p) {
        scene.mean + p.k_sigma * scene.std
    } else {
        p.abs_speed
    };
    if f.mean_speed > threshold {
        let exceedance = f.mean_speed - threshold;
        Some(exceedance / (exceedance + scene.std.max(p.sigma_floor)))
    } else {
        None
    }
}

/// Circular/spiral motion: fires when the accumulated heading change
/// reaches a full turn while the trajectory stays nearly closed. A spiral
/// with more turns scores higher than a single loop.
pub fn detect_circular(f: &MotionFeatures, p: &RuleParams) -> Option<f64> {
    if f.winding.abs() >= p.min_winding && f.net_displacement < p.closure_frac * f.path_length {
        Some((1.0 - PI / f.winding.abs()).clamp(f64::MIN_POSITIVE, 1.0))
    } else {
        None
    }
}

/// A detected vertical excursion: score plus the frames it spans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpDetection {
    pub score: f64,
    pub frame_start: u64,
    pub frame_end: u64,
}

/// Jump: fires when some sub-window no longer than `jump_window` frames
/// shows a vertical amplitude well above the scene baseline and comes back
/// down (endpoint difference small relative to the amplitude). A slope
/// covering the same amplitude over many frames does not fire.
pub fn detect_jump(
    window: &[(u64, Observation)],
    scene: &PopulationStats,
    p: &RuleParams,
) -> Option<JumpDetection> {
    if window.len() < 2 {
        return None;
    }
    let threshold = if scene.usable(p) && scene.mean > 0.0 {
        p.jump_factor * scene.mean
    } else {
        p.abs_amplitude
    };

    let mut best: Option<JumpDetection> = None;
    for a in 0..window.len() {
        for b in (a + 1)..window.len() {
            if window[b].0 - window[a].0 + 1 > p.jump_window {
                break;
            }
            let segment = &window[a..=b];
            let (vmin, vmax) = segment
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, o)| {
                    (lo.min(o.v), hi.max(o.v))
                });
            let amplitude = vmax - vmin;
            if amplitude <= threshold {
                continue;
            }
            let closure = (window[b].1.v - window[a].1.v).abs();
            if closure > p.jump_closure * amplitude {
                continue;
            }
            let score = 1.0 - threshold / amplitude;
            // Ties go to the tightest window so the reported span hugs the
            // excursion instead of swallowing flat frames around it.
            let span = window[b].0 - window[a].0;
            let improves = best.is_none_or(|c| {
                score > c.score || (score == c.score && span < c.frame_end - c.frame_start)
            });
            if improves {
                best = Some(JumpDetection {
                    score,
                    frame_start: window[a].0,
                    frame_end: window[b].0,
                });
            }
        }
    }
    best
}

/// Start and end position of one track over the group-evaluation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEndpoints {
    pub id: TrackId,
    pub start: (f64, f64),
    pub end: (f64, f64),
}

/// A fired group rule: the involved tracks and the group score.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupDetection {
    pub track_ids: Vec<TrackId>,
    pub score: f64,
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn centroid(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let mut n = 0.0;
    let (mut su, mut sv) = (0.0, 0.0);
    for (u, v) in points {
        su += u;
        sv += v;
        n += 1.0;
    }
    (su / n, sv / n)
}

/// Peels traces whose anchor position lies outside `meet_radius` of the
/// group centroid until the rest fit (or too few remain). The anchor is
/// chosen by `anchor` (end position for gathering, start for dispersion).
fn confined_group(
    traces: &[TraceEndpoints],
    anchor: fn(&TraceEndpoints) -> (f64, f64),
    p: &RuleParams,
) -> Option<(Vec<usize>, (f64, f64))> {
    let mut members: Vec<usize> = (0..traces.len()).collect();
    loop {
        if members.len() < p.min_group {
            return None;
        }
        let c = centroid(members.iter().map(|&i| anchor(&traces[i])));
        let (worst_pos, worst_dist) =
            members
                .iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |(wi, wd), (pos, &i)| {
                    let d = dist(anchor(&traces[i]), c);
                    if d > wd {
                        (pos, d)
                    } else {
                        (wi, wd)
                    }
                });
        if worst_dist <= p.meet_radius {
            return Some((members, c));
        }
        members.remove(worst_pos);
    }
}

/// Gathering: at least `min_group` tracks end the window inside the meet
/// region and each closed most of its spread around the group. Spread is
/// measured per endpoint against the centroid of the same endpoints, so a
/// formation translating toward some point ahead keeps its spread and
/// never fires; only mutual convergence shrinks it.
pub fn detect_gathering(traces: &[TraceEndpoints], p: &RuleParams) -> Option<GroupDetection> {
    let (members, c_end) = confined_group(traces, |t| t.end, p)?;
    let c_start = centroid(members.iter().map(|&i| traces[i].start));
    let mut ids = Vec::new();
    let mut ratios = Vec::new();
    for &i in &members {
        let t = &traces[i];
        let d_start = dist(t.start, c_start);
        let d_end = dist(t.end, c_end);
        let approached = d_start > d_end
            && d_start - d_end >= p.min_approach
            && (d_start - d_end) >= p.converge_ratio * d_start;
        if approached {
            ids.push(t.id);
            ratios.push((d_start - d_end) / d_start);
        }
    }
    if ids.len() < p.min_group {
        return None;
    }
    ids.sort_unstable();
    let score = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Some(GroupDetection {
        track_ids: ids,
        score,
    })
}

/// Dispersion: exact mirror of gathering. Tracks start the window inside
/// the meet region and each opened most of its spread around the group
/// by the window end.
pub fn detect_dispersion(traces: &[TraceEndpoints], p: &RuleParams) -> Option<GroupDetection> {
    let (members, c_start) = confined_group(traces, |t| t.start, p)?;
    let c_end = centroid(members.iter().map(|&i| traces[i].end));
    let mut ids = Vec::new();
    let mut ratios = Vec::new();
    for &i in &members {
        let t = &traces[i];
        let d_start = dist(t.start, c_start);
        let d_end = dist(t.end, c_end);
        let departed = d_end > d_start
            && d_end - d_start >= p.min_approach
            && (d_end - d_start) >= p.converge_ratio * d_end;
        if departed {
            ids.push(t.id);
            ratios.push((d_end - d_start) / d_end);
        }
    }
    if ids.len() < p.min_group {
        return None;
    }
    ids.sort_unstable();
    let score = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Some(GroupDetection {
        track_ids: ids,
        score,
    })
}

/// Dimensionality of the template-matching feature vectors.
pub const FEATURE_DIM: usize = 8;

pub type FeatureVector = [f64; FEATURE_DIM];

/// Projects features into the vector compared against template profiles.
pub fn feature_vector(f: &MotionFeatures) -> FeatureVector {
    [
        f.mean_speed,
        f.speed_std,
        f.net_displacement,
        f.path_length,
        f.winding,
        f.vertical_amplitude,
        f.confinement_radius,
        f.window_len as f64,
    ]
}

/// Unit-normalized feature vector; all-zero features stay zero (and then
/// match nothing, since similarity clamps at 0).
pub fn normalized_feature_vector(f: &MotionFeatures) -> FeatureVector {
    let mut v = feature_vector(f);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Positive-part cosine similarity between unit vectors: negative
/// alignment counts as no similarity, not as evidence against.
pub fn positive_cosine(a: &FeatureVector, b: &FeatureVector) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().max(0.0)
}

/// Reference feature profile sequence for one anomaly class. Most
/// templates hold a single profile; longer ones describe an evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyTemplate {
    pub code: AnomalyCode,
    profiles: Vec<FeatureVector>,
}

impl AnomalyTemplate {
    pub fn new(code: AnomalyCode, profiles: Vec<FeatureVector>) -> Result<Self, AnomalyError> {
        if profiles.is_empty() {
            return Err(AnomalyError::EmptyTemplate);
        }
        for profile in &profiles {
            let norm = profile.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(AnomalyError::ProfileNotUnit(norm));
            }
        }
        Ok(Self { code, profiles })
    }

    pub fn profiles(&self) -> &[FeatureVector] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        false // enforced non-empty at construction
    }
}

/// Alignment score of `template` against `sequence` at `shift`:
/// the sum of positive-cosine similarities of corresponding elements.
pub fn template_similarity_at(
    sequence: &[FeatureVector],
    template: &AnomalyTemplate,
    shift: usize,
) -> f64 {
    template
        .profiles
        .iter()
        .enumerate()
        .map(|(j, p)| positive_cosine(&sequence[shift + j], p))
        .sum()
}

/// Exhaustively scores `template` against `sequence` over `shifts` and
/// returns the best (shift, similarity); ties keep the earliest shift.
pub fn match_templates(
    sequence: &[FeatureVector],
    template: &AnomalyTemplate,
    shifts: &[usize],
) -> Result<(usize, f64), AnomalyError> {
    let out_of_range = |s: &&usize| **s + template.len() > sequence.len();
    if shifts.is_empty() || shifts.iter().any(|s| out_of_range(&s)) {
        return Err(AnomalyError::ShiftOutOfRange {
            sequence: sequence.len(),
            template: template.len(),
        });
    }
    let mut best = (shifts[0], f64::NEG_INFINITY);
    for &w in shifts {
        let theta = template_similarity_at(sequence, template, w);
        if theta > best.1 {
            best = (w, theta);
        }
    }
    Ok(best)
}

/// Incremental template matcher: as the feature sequence grows one vector
/// per frame, only the newly completed shift needs scoring, so the running
/// best stays equal to the exhaustive search without rescanning.
#[derive(Debug, Clone)]
pub struct TemplateMatcher {
    template: AnomalyTemplate,
    /// Ring of the last `template.len()` vectors.
    tail: VecDeque<FeatureVector>,
    pushed: usize,
    best: Option<(usize, f64)>,
}

impl TemplateMatcher {
    pub fn new(template: AnomalyTemplate) -> Self {
        let cap = template.len();
        Self {
            template,
            tail: VecDeque::with_capacity(cap),
            pushed: 0,
            best: None,
        }
    }

    /// Feeds the next feature vector. Once enough vectors have arrived,
    /// returns the (shift, similarity) of the newly completed alignment.
    pub fn push(&mut self, v: FeatureVector) -> Option<(usize, f64)> {
        if self.tail.len() == self.template.len() {
            self.tail.pop_front();
        }
        self.tail.push_back(v);
        self.pushed += 1;
        if self.tail.len() < self.template.len() {
            return None;
        }
        let shift = self.pushed - self.template.len();
        let theta: f64 = self
            .template
            .profiles
            .iter()
            .zip(self.tail.iter())
            .map(|(p, x)| positive_cosine(x, p))
            .sum();
        // Strict improvement keeps the earliest shift on ties, matching
        // the exhaustive search.
        if self.best.is_none_or(|(_, b)| theta > b) {
            self.best = Some((shift, theta));
        }
        Some((shift, theta))
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn template(&self) -> &AnomalyTemplate {
        &self.template
    }
}

/// One deduplicated anomaly: the class, the tracks involved, the frame
/// span it covers (including the evidence window), and a unit-interval
/// score that only ever grows while the event stays active.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyEvent {
    pub code: AnomalyCode,
    pub track_ids: Vec<TrackId>,
    pub frame_start: u64,
    pub frame_end: u64,
    pub score: f64,
}

/// Max-combination of the scores of events active at one frame.
pub fn frame_regularity_score(active_event_scores: &[f64]) -> f64 {
    active_event_scores.iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct AnomalyConfig {
    pub params: RuleParams,
    /// Master switch for the six rule detectors.
    pub rules_enabled: bool,
    /// Template bank for the similarity path; empty disables it.
    pub templates: Vec<AnomalyTemplate>,
    /// A template alignment fires once its mean per-profile similarity
    /// reaches this value.
    pub template_threshold: f64,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self {
            params: RuleParams::default(),
            rules_enabled: true,
            templates: Vec::new(),
            template_threshold: 0.9,
        }
    }
}

/// Welford running mean/variance accumulator with pairwise merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: RunningStats) -> RunningStats {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * self.count as f64 * other.count as f64 / count as f64;
        RunningStats { count, mean, m2 }
    }

    fn population_std(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        }
    }
}

type EventKey = (u8, Vec<TrackId>);

/// Streaming anomaly detector fed with tracker frame results.
#[derive(Debug, Clone)]
pub struct AnomalyEngine {
    cfg: AnomalyConfig,
    windows: BTreeMap<TrackId, VecDeque<(u64, Observation)>>,
    speed_stats: BTreeMap<TrackId, RunningStats>,
    vertical_stats: BTreeMap<TrackId, RunningStats>,
    matchers: BTreeMap<(usize, TrackId), (u64, TemplateMatcher)>,
    open_events: BTreeMap<EventKey, usize>,
    events: Vec<AnomalyEvent>,
    steps: u64,
}

impl AnomalyEngine {
    pub fn new(cfg: AnomalyConfig) -> Self {
        Self {
            cfg,
            windows: BTreeMap::new(),
            speed_stats: BTreeMap::new(),
            vertical_stats: BTreeMap::new(),
            matchers: BTreeMap::new(),
            open_events: BTreeMap::new(),
            events: Vec::new(),
            steps: 0,
        }
    }

    pub fn config(&self) -> &AnomalyConfig {
        &self.cfg
    }

    /// All events recorded so far, in creation order. Spans of open events
    /// keep extending while their rule keeps firing.
    pub fn events(&self) -> &[AnomalyEvent] {
        &self.events
    }

    /// Events sorted for stable output: by start frame, code, track set.
    pub fn sorted_events(&self) -> Vec<AnomalyEvent> {
        let mut out = self.events.clone();
        out.sort_by(|a, b| {
            (a.frame_start, a.code, &a.track_ids, a.frame_end).cmp(&(
                b.frame_start,
                b.code,
                &b.track_ids,
                b.frame_end,
            ))
        });
        out
    }

    /// Per-frame regularity scores over an inclusive frame range: the max
    /// score among events covering each frame, 0 where the scene is quiet.
    pub fn frame_scores(&self, first_frame: u64, last_frame: u64) -> Vec<f64> {
        self.class_scores(None, first_frame, last_frame)
    }

    /// Per-frame scores restricted to a single anomaly class.
    pub fn frame_scores_for(
        &self,
        code: AnomalyCode,
        first_frame: u64,
        last_frame: u64,
    ) -> Vec<f64> {
        self.class_scores(Some(code), first_frame, last_frame)
    }

    fn class_scores(&self, code: Option<AnomalyCode>, first: u64, last: u64) -> Vec<f64> {
        let mut scores = vec![0.0f64; (last.saturating_sub(first) + 1) as usize];
        for e in &self.events {
            if code.is_some_and(|c| c != e.code) {
                continue;
            }
            let lo = e.frame_start.max(first);
            let hi = e.frame_end.min(last);
            for f in lo..=hi {
                if hi < lo {
                    break;
                }
                let i = (f - first) as usize;
                scores[i] = scores[i].max(e.score);
            }
        }
        scores
    }

    /// Ingests one tracker step: updates trajectory windows and scene
    /// statistics, then runs every enabled detector.
    ///
    /// Only tracks actually matched to a detection this frame contribute
    /// samples and get evaluated; coasting tracks run on predicted
    /// positions, which is no evidence of anything.
    pub fn observe(&mut self, result: &FrameResult) {
        let frame = result.frame;
        self.steps += 1;

        for id in &result.deleted_tracks {
            self.windows.remove(id);
        }

        let observed: std::collections::BTreeSet<TrackId> = result
            .matches
            .iter()
            .map(|&(id, _)| id)
            .chain(result.new_tracks.iter().copied())
            .collect();

        for snap in &result.active_tracks {
            if !observed.contains(&snap.id) {
                continue;
            }
            let window = self.windows.entry(snap.id).or_default();
            window.push_back((frame, snap.observation));
            if window.len() > self.cfg.params.window_frames {
                window.pop_front();
            }
            if window.len() >= 2 {
                let (f0, a) = window[window.len() - 2];
                let (f1, b) = window[window.len() - 1];
                let speed = ((b.u - a.u).powi(2) + (b.v - a.v).powi(2)).sqrt() / (f1 - f0) as f64;
                self.speed_stats.entry(snap.id).or_default().push(speed);

                let tail = trailing_span(window, self.cfg.params.jump_window);
                if tail.len() >= 2 {
                    let (lo, hi) = tail
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, o)| {
                            (lo.min(o.v), hi.max(o.v))
                        });
                    self.vertical_stats
                        .entry(snap.id)
                        .or_default()
                        .push(hi - lo);
                }
            }
        }

        if self.cfg.rules_enabled {
            self.run_single_track_rules(frame);
            if self.steps.is_multiple_of(self.cfg.params.eval_stride) {
                self.run_group_rules(frame);
            }
        }
        if !self.cfg.templates.is_empty() {
            self.run_templates(result);
        }
    }

    fn population_excluding(
        stats: &BTreeMap<TrackId, RunningStats>,
        exclude: TrackId,
    ) -> PopulationStats {
        let mut merged = RunningStats::default();
        let mut track_count = 0;
        for (id, s) in stats {
            if *id == exclude || s.count == 0 {
                continue;
            }
            track_count += 1;
            merged = merged.merge(*s);
        }
        PopulationStats {
            track_count,
            sample_count: merged.count,
            mean: merged.mean,
            std: merged.population_std(),
        }
    }

    fn run_single_track_rules(&mut self, frame: u64) {
        let p = self.cfg.params.clone();
        let ids: Vec<TrackId> = self
            .windows
            .iter()
            .filter(|(_, w)| w.back().is_some_and(|&(f, _)| f == frame))
            .map(|(id, _)| *id)
            .collect();
        for id in ids {
            let mut firings: Vec<(AnomalyCode, u64, u64, f64)> = Vec::new();
            {
                let window = &self.windows[&id];
                if window.len() < 2 {
                    continue;
                }

                // Loitering over the trailing still_frames span.
                let still = trailing_span(window, p.still_frames);
                if still.len() >= 2 {
                    if let Ok(f) = motion_features(&still) {
                        if let Some(score) = detect_loitering(&f, &p) {
                            firings.push((AnomalyCode::Loitering, still[0].0, frame, score));
                        }
                    }
                }

                // Fast motion over a short responsive window.
                let recent = trailing_span(window, p.fast_window);
                if recent.len() >= 2 {
                    if let Ok(f) = motion_features(&recent) {
                        let scene = Self::population_excluding(&self.speed_stats, id);
                        if let Some(score) = detect_fast_motion(&f, &scene, &p) {
                            firings.push((AnomalyCode::FastMotion, recent[0].0, frame, score));
                        }
                    }
                }

                // Circular motion over a stride-subsampled window: jitter
                // on consecutive frames would scramble headings otherwise.
                // Sub-noise-floor steps are dropped entirely so a still
                // track cannot random-walk its way to a full turn.
                let coarse = subsample_from_end(window, p.winding_stride as usize);
                let coarse = simplify_radial(&coarse, p.heading_min_step);
                if coarse.len() >= 3 {
                    if let Ok(f) = motion_features(&coarse) {
                        if let Some(score) = detect_circular(&f, &p) {
                            firings.push((AnomalyCode::CircularMotion, coarse[0].0, frame, score));
                        }
                    }
                }

                // Jump over the trailing couple of excursion windows.
                let jumpy = trailing_span(window, 2 * p.jump_window);
                if jumpy.len() >= 2 {
                    let scene = Self::population_excluding(&self.vertical_stats, id);
                    if let Some(d) = detect_jump(&jumpy, &scene, &p) {
                        firings.push((AnomalyCode::Jump, d.frame_start, d.frame_end, d.score));
                    }
                }
            }
            for (code, start, end, score) in firings {
                self.record(code, vec![id], start, end, score);
            }
        }
    }

    fn run_group_rules(&mut self, frame: u64) {
        let p = self.cfg.params.clone();
        let horizon = frame.saturating_sub(p.converge_frames);
        let mut traces = Vec::new();
        for (id, window) in &self.windows {
            let (Some(&(first, _)), Some(&(last, end))) = (window.front(), window.back()) else {
                continue;
            };
            // Only tracks observed right now whose window covers the whole
            // judgment horizon participate.
            if last != frame || first > horizon || window.len() < 2 {
                continue;
            }
            let Some(start) = window.iter().find(|(f, _)| *f >= horizon) else {
                continue;
            };
            traces.push(TraceEndpoints {
                id: *id,
                start: (start.1.u, start.1.v),
                end: (end.u, end.v),
            });
        }
        if traces.len() < p.min_group {
            return;
        }
        if let Some(g) = detect_gathering(&traces, &p) {
            self.record(AnomalyCode::Gathering, g.track_ids, horizon, frame, g.score);
        }
        if let Some(g) = detect_dispersion(&traces, &p) {
            self.record(
                AnomalyCode::Dispersion,
                g.track_ids,
                horizon,
                frame,
                g.score,
            );
        }
    }

    fn run_templates(&mut self, result: &FrameResult) {
        let frame = result.frame;
        let p = self.cfg.params.clone();
        let threshold = self.cfg.template_threshold;
        let templates = self.cfg.templates.clone();
        for snap in &result.active_tracks {
            let Some(window) = self.windows.get(&snap.id) else {
                continue;
            };
            if window.back().is_none_or(|&(f, _)| f != frame) {
                continue;
            }
            let recent = trailing_span(window, p.fast_window);
            if recent.len() < 2 {
                continue;
            }
            let Ok(f) = motion_features(&recent) else {
                continue;
            };
            let v = normalized_feature_vector(&f);
            for (t_idx, template) in templates.iter().enumerate() {
                let entry = self
                    .matchers
                    .entry((t_idx, snap.id))
                    .or_insert_with(|| (frame, TemplateMatcher::new(template.clone())));
                let (first_frame, matcher) = (entry.0, &mut entry.1);
                if let Some((shift, theta)) = matcher.push(v) {
                    let mean_sim = theta / template.len() as f64;
                    if mean_sim >= threshold {
                        self.record(
                            template.code,
                            vec![snap.id],
                            first_frame + shift as u64,
                            frame,
                            mean_sim.min(1.0),
                        );
                    }
                }
            }
        }
    }

    /// Folds a firing into the open event with the same (code, tracks) key
    /// when their spans touch; otherwise opens a new event.
    fn record(
        &mut self,
        code: AnomalyCode,
        track_ids: Vec<TrackId>,
        frame_start: u64,
        frame_end: u64,
        score: f64,
    ) {
        let key: EventKey = (code.code(), track_ids.clone());
        let reach = self.cfg.params.eval_stride + 1;
        if let Some(&idx) = self.open_events.get(&key) {
            let e = &mut self.events[idx];
            if frame_start <= e.frame_end + reach {
                e.frame_start = e.frame_start.min(frame_start);
                e.frame_end = e.frame_end.max(frame_end);
                e.score = e.score.max(score);
                return;
            }
        }
        self.events.push(AnomalyEvent {
            code,
            track_ids,
            frame_start,
            frame_end,
            score,
        });
        self.open_events.insert(key, self.events.len() - 1);
    }
}

/// Trailing samples covering at most `span` frames (inclusive of the
/// newest frame).
fn trailing_span(window: &VecDeque<(u64, Observation)>, span: u64) -> Vec<(u64, Observation)> {
    let Some(&(last, _)) = window.back() else {
        return Vec::new();
    };
    let cutoff = last.saturating_sub(span.saturating_sub(1));
    window
        .iter()
        .filter(|(f, _)| *f >= cutoff)
        .copied()
        .collect()
}

/// Every `stride`-th sample counted back from the newest, in
/// chronological order; the newest sample is always included.
fn subsample_from_end(
    window: &VecDeque<(u64, Observation)>,
    stride: usize,
) -> Vec<(u64, Observation)> {
    let stride = stride.max(1);
    let n = window.len();
    let mut picked: Vec<(u64, Observation)> = window
        .iter()
        .enumerate()
        .filter(|(i, _)| (n - 1 - i).is_multiple_of(stride))
        .map(|(_, s)| *s)
        .collect();
    picked.sort_by_key(|(f, _)| *f);
    picked
}

/// Radial-distance simplification: keeps a sample only once it has moved
/// at least `min_step` from the previously kept one. A stationary track
/// jittering inside the noise floor collapses to a single point, so its
/// random headings never accumulate winding.
fn simplify_radial(samples: &[(u64, Observation)], min_step: f64) -> Vec<(u64, Observation)> {
    let mut kept: Vec<(u64, Observation)> = Vec::with_capacity(samples.len());
    for &(f, o) in samples {
        match kept.last() {
            None => kept.push((f, o)),
            Some(&(_, prev)) => {
                let d = ((o.u - prev.u).powi(2) + (o.v - prev.v).powi(2)).sqrt();
                if d >= min_step {
                    kept.push((f, o));
                }
            }
        }
    }
    kept
}
