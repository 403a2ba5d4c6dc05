//! Detection-to-track association and track lifecycle.
//!
//! Each frame: every live track is advanced by the motion filter, a gated
//! cost matrix is built between tracks and detections, and a single global
//! minimum-cost assignment decides the matches. The cost of a pair blends
//! a motion term (squared Mahalanobis distance in measurement space) with
//! an appearance term (smallest cosine distance against the track's
//! descriptor gallery):
//!
//! ```text
//! cost = motion_weight * mahalanobis_sq + (1 - motion_weight) * min_cos
//! ```
//!
//! Pairs beyond the Mahalanobis gate or the appearance gate are infeasible
//! regardless of the blend weight, so with `motion_weight = 0` motion still
//! vetoes physically impossible matches while appearance ranks the rest.
//!
//! Track lifecycle: tracks start tentative, are confirmed after `n_init`
//! consecutive hits, die immediately if they miss a frame while tentative,
//! and die after `max_age` consecutive misses once confirmed.

use thiserror::Error;

use crate::appearance::{Descriptor, Gallery};
use crate::geometry::{Detection, Observation};
use crate::motion::{KalmanFilter, MotionError, TrackState};

#[derive(Debug, Error, PartialEq)]
pub enum AssociationError {
    #[error("frame {got} is not greater than previous frame {prev}")]
    NonMonotoneFrame { prev: u64, got: u64 },
    #[error("detection {index} carries no descriptor")]
    MissingDescriptor { index: usize },
    #[error(transparent)]
    Motion(#[from] MotionError),
}

/// Gating and lifecycle parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationConfig {
    /// Blend weight of the motion term in the pair cost. 0 ranks purely by
    /// appearance (motion still gates), 1 purely by motion.
    pub motion_weight: f64,
    /// Feasibility gate on squared Mahalanobis distance; default is the
    /// 95th percentile of chi-square with 4 degrees of freedom.
    pub motion_gate: f64,
    /// Feasibility gate on the appearance distance.
    pub max_cos_distance: f64,
    /// Consecutive misses after which a confirmed track is deleted.
    pub max_age: u32,
    /// Consecutive hits (including the founding detection) required to
    /// confirm a tentative track.
    pub n_init: u32,
    /// Descriptor gallery capacity per track.
    pub gallery_capacity: usize,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            motion_weight: 0.0,
            motion_gate: 9.4877,
            max_cos_distance: 0.9,
            max_age: 30,
            n_init: 3,
            gallery_capacity: 100,
        }
    }
}

/// Pair cost blend. `weight = 1` keeps only the motion term, `weight = 0`
/// only the appearance term.
pub fn combined_cost(motion_cost: f64, appearance_cost: f64, weight: f64) -> f64 {
    weight * motion_cost + (1.0 - weight) * appearance_cost
}

/// Track-by-detection cost matrix; `None` marks an infeasible pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedCostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Option<f64>>,
}

impl GatedCostMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Option<f64>>) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count must be rows*cols");
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn from_rows(rows: Vec<Vec<Option<f64>>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged cost matrix");
            entries.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.entries[row * self.cols + col]
    }
}

/// Result of the per-frame assignment. Match pairs are sorted by row;
/// unmatched lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

/// Total cost of a set of matches against a matrix, summed in row order.
pub fn matching_cost(m: &GatedCostMatrix, matches: &[(usize, usize)]) -> f64 {
    matches
        .iter()
        .map(|&(i, j)| m.get(i, j).expect("matched pairs are feasible"))
        .sum()
}

/// Minimum-cost one-to-one matching over the feasible entries.
///
/// Maximizes the number of feasible matches first, then minimizes their
/// total cost. Ties between equally cheap optima are broken toward the
/// lexicographically smallest (row, col) pair list so repeated runs agree
/// byte for byte.
pub fn assign(m: &GatedCostMatrix) -> Assignment {
    let (r, c) = (m.rows, m.cols);
    if r == 0 || c == 0 || m.entries.iter().all(Option::is_none) {
        return Assignment {
            matches: Vec::new(),
            unmatched_rows: (0..r).collect(),
            unmatched_cols: (0..c).collect(),
        };
    }

    // Square padding: infeasible and dummy cells get a finite sentinel cost
    // large enough that no count of real matches can be traded against it.
    let n = r.max(c);
    let sum_abs: f64 = m.entries.iter().flatten().map(|x| x.abs()).sum();
    let big = 2.0 * sum_abs + 1.0;
    let mut cost = vec![big; n * n];
    for i in 0..r {
        for j in 0..c {
            if let Some(x) = m.get(i, j) {
                cost[i * n + j] = x;
            }
        }
    }

    let (jv_cols, u, v) = hungarian(&cost, n);

    // Every optimal matching uses only edges with zero reduced cost under
    // the final dual potentials. Extracting the lexicographically smallest
    // perfect matching from that tight-edge graph realizes the tie-break.
    let eps = 64.0 * f64::EPSILON * big.max(1.0);
    let tight = |i: usize, j: usize| cost[i * n + j] - u[i] - v[j] <= eps || jv_cols[i] == j;

    let mut row_fixed = vec![usize::MAX; n];
    let mut col_fixed = vec![usize::MAX; n];
    for i in 0..r {
        for j in 0..c {
            if col_fixed[j] != usize::MAX || m.get(i, j).is_none() || !tight(i, j) {
                continue;
            }
            row_fixed[i] = j;
            col_fixed[j] = i;
            if perfect_matching_exists(n, &tight, &row_fixed, &col_fixed) {
                break;
            }
            row_fixed[i] = usize::MAX;
            col_fixed[j] = usize::MAX;
        }
    }

    let mut matches = Vec::new();
    for (i, &j) in row_fixed.iter().enumerate().take(r) {
        if j != usize::MAX {
            matches.push((i, j));
        }
    }
    let unmatched_rows = (0..r).filter(|&i| row_fixed[i] == usize::MAX).collect();
    let unmatched_cols = (0..c).filter(|&j| col_fixed[j] == usize::MAX).collect();
    Assignment {
        matches,
        unmatched_rows,
        unmatched_cols,
    }
}

/// O(n³) shortest-augmenting-path solver for the square assignment problem.
/// Returns the matched column per row and the dual potentials, which
/// satisfy `cost[i][j] >= u[i] + v[j]` with equality on matched edges.
fn hungarian(cost: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based working arrays; column 0 is the virtual root of each
    // augmenting search.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j]: row currently matched to column j
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of_row = vec![usize::MAX; n];
    for j in 1..=n {
        if p[j] != 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    (col_of_row, u[1..].to_vec(), v[1..].to_vec())
}

/// True if the tight-edge graph still admits a perfect matching with the
/// given row/col fixings forced.
fn perfect_matching_exists(
    n: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    row_fixed: &[usize],
    col_fixed: &[usize],
) -> bool {
    let mut match_col = col_fixed.to_vec();
    for (i, &fixed) in row_fixed.iter().enumerate().take(n) {
        if fixed != usize::MAX {
            continue;
        }
        let mut visited = vec![false; n];
        if !augment(i, n, tight, col_fixed, &mut match_col, &mut visited) {
            return false;
        }
    }
    true
}

fn augment(
    i: usize,
    n: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    col_fixed: &[usize],
    match_col: &mut [usize],
    visited: &mut [bool],
) -> bool {
    for j in 0..n {
        if col_fixed[j] != usize::MAX || visited[j] || !tight(i, j) {
            continue;
        }
        visited[j] = true;
        let holder = match_col[j];
        if holder == usize::MAX || augment(holder, n, tight, col_fixed, match_col, visited) {
            match_col[j] = i;
            return true;
        }
    }
    false
}

/// Builds the gated cost matrix between live tracks and detections.
///
/// Every detection must carry a descriptor; the projected covariance of
/// each track must be well conditioned. Entries failing either gate are
/// infeasible.
pub fn build_cost_matrix(
    tracks: &[Track],
    detections: &[Detection],
    kf: &KalmanFilter,
    cfg: &AssociationConfig,
) -> Result<GatedCostMatrix, AssociationError> {
    let descriptors: Vec<&Descriptor> = detections
        .iter()
        .enumerate()
        .map(|(index, d)| {
            d.descriptor
                .as_ref()
                .ok_or(AssociationError::MissingDescriptor { index })
        })
        .collect::<Result<_, _>>()?;

    let mut entries = Vec::with_capacity(tracks.len() * detections.len());
    for track in tracks {
        let projected = kf.project(&track.state)?;
        for (j, det) in detections.iter().enumerate() {
            let obs = det.bbox.to_observation();
            let motion_cost = kf.mahalanobis_sq(&projected, &obs)?;
            let appearance_cost = track
                .gallery
                .min_cosine_distance(descriptors[j])
                .expect("live tracks always hold at least one descriptor");
            let feasible =
                motion_cost <= cfg.motion_gate && appearance_cost <= cfg.max_cos_distance;
            entries.push(
                feasible.then(|| combined_cost(motion_cost, appearance_cost, cfg.motion_weight)),
            );
        }
    }
    Ok(GatedCostMatrix::new(
        tracks.len(),
        detections.len(),
        entries,
    ))
}

pub type TrackId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

/// One tracked target.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: TrackId,
    pub state: TrackState,
    pub gallery: Gallery,
    pub status: TrackStatus,
    /// Consecutive successful associations, counting the founding one.
    pub hits: u32,
    /// Frames since the last successful association.
    pub frames_since_association: u32,
    /// Filtered trajectory: one entry per associated frame.
    pub history: Vec<(u64, Observation)>,
}

/// Per-frame view of a confirmed track for downstream consumers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSnapshot {
    pub id: TrackId,
    pub observation: Observation,
}

/// Everything that happened in one tracker step.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: u64,
    /// (track id, detection index) pairs.
    pub matches: Vec<(TrackId, usize)>,
    pub new_tracks: Vec<TrackId>,
    pub deleted_tracks: Vec<TrackId>,
    /// Current state of every confirmed track, ascending by id.
    pub active_tracks: Vec<TrackSnapshot>,
}

/// Frame-driven tracker: owns the motion filter and all live tracks.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: AssociationConfig,
    kf: KalmanFilter,
    tracks: Vec<Track>,
    next_id: TrackId,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(cfg: AssociationConfig, kf: KalmanFilter) -> Self {
        Self {
            cfg,
            kf,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    pub fn config(&self) -> &AssociationConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Processes one frame of detections. Frames must be strictly
    /// increasing but need not be contiguous; the filter advances once per
    /// step regardless of the frame gap.
    pub fn step(
        &mut self,
        frame: u64,
        detections: &[Detection],
    ) -> Result<FrameResult, AssociationError> {
        if let Some(prev) = self.last_frame {
            if frame <= prev {
                return Err(AssociationError::NonMonotoneFrame { prev, got: frame });
            }
        }
        self.last_frame = Some(frame);

        for track in &mut self.tracks {
            track.state = self.kf.predict(&track.state);
            track.frames_since_association += 1;
        }

        let matrix = build_cost_matrix(&self.tracks, detections, &self.kf, &self.cfg)?;
        let assignment = assign(&matrix);

        let mut matches = Vec::with_capacity(assignment.matches.len());
        for &(ti, dj) in &assignment.matches {
            let det = &detections[dj];
            let obs = det.bbox.to_observation();
            let track = &mut self.tracks[ti];
            track.state = self.kf.update(&track.state, &obs)?;
            track.gallery.push(
                det.descriptor
                    .clone()
                    .expect("validated by build_cost_matrix"),
            );
            track.frames_since_association = 0;
            track.hits += 1;
            if track.status == TrackStatus::Tentative && track.hits >= self.cfg.n_init {
                track.status = TrackStatus::Confirmed;
            }
            track.history.push((frame, track.state.observation()));
            matches.push((track.id, dj));
        }

        let mut new_tracks = Vec::new();
        for &dj in &assignment.unmatched_cols {
            let det = &detections[dj];
            let obs = det.bbox.to_observation();
            let mut gallery = Gallery::new(self.cfg.gallery_capacity)
                .expect("gallery capacity validated in config");
            gallery.push(
                det.descriptor
                    .clone()
                    .expect("validated by build_cost_matrix"),
            );
            let status = if 1 >= self.cfg.n_init {
                TrackStatus::Confirmed
            } else {
                TrackStatus::Tentative
            };
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track {
                id,
                state: self.kf.initiate(&obs),
                gallery,
                status,
                hits: 1,
                frames_since_association: 0,
                history: vec![(frame, obs)],
            });
            new_tracks.push(id);
        }

        // Lifecycle: a tentative track dies on its first miss, a confirmed
        // one once it has coasted max_age consecutive frames.
        let mut deleted_tracks = Vec::new();
        self.tracks.retain_mut(|track| {
            let starved = track.frames_since_association >= self.cfg.max_age;
            let tentative_miss =
                track.status == TrackStatus::Tentative && track.frames_since_association >= 1;
            if starved || tentative_miss {
                track.status = TrackStatus::Deleted;
                deleted_tracks.push(track.id);
                false
            } else {
                true
            }
        });

        let active_tracks = self
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed)
            .map(|t| TrackSnapshot {
                id: t.id,
                observation: t.state.observation(),
            })
            .collect();

        Ok(FrameResult {
            frame,
            matches,
            new_tracks,
            deleted_tracks,
            active_tracks,
        })
    }
}
