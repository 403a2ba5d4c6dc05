//! Constant-velocity Kalman filter over box observations.
//!
//! Track state is 8-dimensional: (u, v, γ, h) plus their per-frame
//! velocities, where (u, v) is the box center, γ the aspect ratio and h the
//! height. Process and measurement noise scale with the current box height
//! so the same configuration works across image resolutions; the aspect
//! ratio gets small fixed stds since it barely moves for rigid targets.
//!
//! All covariance handling goes through a Cholesky factorization of the
//! projected covariance S. If S is numerically singular (condition estimate
//! above [`MotionConfig::condition_limit`]) the operation reports a
//! degeneracy error instead of producing garbage distances.

use nalgebra::{Cholesky, SMatrix, SVector};
use thiserror::Error;

use crate::geometry::Observation;

pub type StateVector = SVector<f64, 8>;
pub type StateMatrix = SMatrix<f64, 8, 8>;
pub type MeasurementVector = SVector<f64, 4>;
pub type MeasurementMatrix = SMatrix<f64, 4, 4>;

#[derive(Debug, Error, PartialEq)]
pub enum MotionError {
    #[error("projected covariance is numerically singular (condition estimate {condition:.3e})")]
    Degenerate { condition: f64 },
}

/// Noise shape of the filter. Defaults follow the usual pedestrian-tracking
/// choice: position std 1/20 of box height per frame, velocity std 1/160,
/// with initial uncertainty 2x / 10x those.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionConfig {
    pub position_weight: f64,
    pub velocity_weight: f64,
    pub init_position_factor: f64,
    pub init_velocity_factor: f64,
    /// Std of the aspect-ratio component wherever a position-like noise
    /// entry is needed (initiation, process, measurement).
    pub aspect_position_std: f64,
    /// Std of the aspect-ratio velocity component.
    pub aspect_velocity_std: f64,
    /// Condition-number estimate above which S counts as singular.
    pub condition_limit: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            position_weight: 1.0 / 20.0,
            velocity_weight: 1.0 / 160.0,
            init_position_factor: 2.0,
            init_velocity_factor: 10.0,
            aspect_position_std: 1e-2,
            aspect_velocity_std: 1e-5,
            condition_limit: 1e12,
        }
    }
}

/// Gaussian track state: mean and covariance of the 8-d state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub mean: StateVector,
    pub covariance: StateMatrix,
}

impl TrackState {
    /// Measurement-space view of the current mean (no uncertainty).
    pub fn observation(&self) -> Observation {
        Observation {
            u: self.mean[0],
            v: self.mean[1],
            gamma: self.mean[2],
            h: self.mean[3],
        }
    }
}

/// Projected state in measurement space: y = Hx, S = HPHᵀ + R.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementDistribution {
    pub mean: MeasurementVector,
    pub covariance: MeasurementMatrix,
}

#[derive(Debug, Clone, Default)]
pub struct KalmanFilter {
    cfg: MotionConfig,
}

impl KalmanFilter {
    pub fn new(cfg: MotionConfig) -> Self {
        Self { cfg }
    }

    pub fn config(&self) -> &MotionConfig {
        &self.cfg
    }

    /// State transition: unit-time constant velocity.
    fn transition() -> StateMatrix {
        let mut f = StateMatrix::identity();
        for i in 0..4 {
            f[(i, i + 4)] = 1.0;
        }
        f
    }

    /// Measurement projection: selects (u, v, γ, h).
    fn projection() -> SMatrix<f64, 4, 8> {
        let mut h = SMatrix::<f64, 4, 8>::zeros();
        for i in 0..4 {
            h[(i, i)] = 1.0;
        }
        h
    }

    fn process_noise(&self, height: f64) -> StateMatrix {
        let c = &self.cfg;
        let stds = [
            c.position_weight * height,
            c.position_weight * height,
            c.aspect_position_std,
            c.position_weight * height,
            c.velocity_weight * height,
            c.velocity_weight * height,
            c.aspect_velocity_std,
            c.velocity_weight * height,
        ];
        StateMatrix::from_diagonal(&StateVector::from_iterator(stds.iter().map(|s| s * s)))
    }

    /// Height-scaled measurement noise for a box of height `height`.
    pub fn measurement_noise(&self, height: f64) -> MeasurementMatrix {
        let c = &self.cfg;
        let stds = [
            c.position_weight * height,
            c.position_weight * height,
            c.aspect_position_std,
            c.position_weight * height,
        ];
        MeasurementMatrix::from_diagonal(&MeasurementVector::from_iterator(
            stds.iter().map(|s| s * s),
        ))
    }

    /// Opens a track from a single observation: zero velocity, widened
    /// initial uncertainty.
    pub fn initiate(&self, obs: &Observation) -> TrackState {
        let c = &self.cfg;
        let mean =
            StateVector::from_column_slice(&[obs.u, obs.v, obs.gamma, obs.h, 0.0, 0.0, 0.0, 0.0]);
        let p = c.init_position_factor * c.position_weight * obs.h;
        let v = c.init_velocity_factor * c.velocity_weight * obs.h;
        let stds = [
            p,
            p,
            c.aspect_position_std,
            p,
            v,
            v,
            c.aspect_velocity_std,
            v,
        ];
        let covariance =
            StateMatrix::from_diagonal(&StateVector::from_iterator(stds.iter().map(|s| s * s)));
        TrackState { mean, covariance }
    }

    /// Advances the state one frame. Process noise is sized from the
    /// pre-move height.
    pub fn predict(&self, state: &TrackState) -> TrackState {
        let f = Self::transition();
        let q = self.process_noise(state.mean[3]);
        let mean = f * state.mean;
        let covariance = f * state.covariance * f.transpose() + q;
        TrackState {
            mean,
            covariance: symmetrized(&covariance),
        }
    }

    /// Projects into measurement space with height-scaled noise.
    pub fn project(&self, state: &TrackState) -> Result<MeasurementDistribution, MotionError> {
        self.project_with_noise(state, &self.measurement_noise(state.mean[3]))
    }

    /// Projection with an explicit measurement covariance. Exists so the
    /// noise model can be swapped out (and pinned in tests).
    pub fn project_with_noise(
        &self,
        state: &TrackState,
        noise: &MeasurementMatrix,
    ) -> Result<MeasurementDistribution, MotionError> {
        let h = Self::projection();
        let mean = h * state.mean;
        let covariance = symmetrized4(&(h * state.covariance * h.transpose() + noise));
        // Fail fast on singular S; callers turn this into gating decisions.
        let _ = checked_cholesky(&covariance, self.cfg.condition_limit)?;
        Ok(MeasurementDistribution { mean, covariance })
    }

    /// Conditions the state on an observation.
    pub fn update(&self, state: &TrackState, obs: &Observation) -> Result<TrackState, MotionError> {
        self.update_with_noise(state, obs, &self.measurement_noise(state.mean[3]))
    }

    /// Update with an explicit measurement covariance.
    pub fn update_with_noise(
        &self,
        state: &TrackState,
        obs: &Observation,
        noise: &MeasurementMatrix,
    ) -> Result<TrackState, MotionError> {
        let h = Self::projection();
        let projected = self.project_with_noise(state, noise)?;
        let chol = checked_cholesky(&projected.covariance, self.cfg.condition_limit)?;

        // Gain K = P Hᵀ S⁻¹, computed as the solution of S Kᵀ = H Pᵀ.
        let ph_t = state.covariance * h.transpose();
        let gain_t = chol.solve(&ph_t.transpose());
        let gain = gain_t.transpose();

        let z = MeasurementVector::from_column_slice(&[obs.u, obs.v, obs.gamma, obs.h]);
        let innovation = z - projected.mean;
        let mean = state.mean + gain * innovation;
        let covariance = state.covariance - gain * projected.covariance * gain.transpose();
        Ok(TrackState {
            mean,
            covariance: symmetrized(&covariance),
        })
    }

    /// Squared Mahalanobis distance of an observation under a projected
    /// distribution: dᵀ S⁻¹ d with d the innovation.
    pub fn mahalanobis_sq(
        &self,
        projected: &MeasurementDistribution,
        obs: &Observation,
    ) -> Result<f64, MotionError> {
        let chol = checked_cholesky(&projected.covariance, self.cfg.condition_limit)?;
        let d = MeasurementVector::from_column_slice(&[obs.u, obs.v, obs.gamma, obs.h])
            - projected.mean;
        Ok(d.dot(&chol.solve(&d)))
    }
}

/// Cholesky with a condition estimate from the factor diagonal. Rejects
/// non-positive-definite and near-singular matrices.
fn checked_cholesky(
    m: &MeasurementMatrix,
    condition_limit: f64,
) -> Result<Cholesky<f64, nalgebra::Const<4>>, MotionError> {
    let chol = Cholesky::new(*m).ok_or(MotionError::Degenerate {
        condition: f64::INFINITY,
    })?;
    let diag = chol.l().diagonal();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for d in diag.iter() {
        lo = lo.min(*d);
        hi = hi.max(*d);
    }
    // cond(S) ~= (max L_ii / min L_ii)^2 for the diagonal-dominant shapes
    // seen here; cheap and good enough to catch collapse.
    let condition = (hi / lo) * (hi / lo);
    if !condition.is_finite() || condition > condition_limit {
        return Err(MotionError::Degenerate { condition });
    }
    Ok(chol)
}

fn symmetrized(m: &StateMatrix) -> StateMatrix {
    (m + m.transpose()) * 0.5
}

fn symmetrized4(m: &MeasurementMatrix) -> MeasurementMatrix {
    (m + m.transpose()) * 0.5
}
