//! Gait-cycle trajectories on a normalized phase axis.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::TaskParams;

/// Prosthesis joints covered by the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Joint {
    Knee,
    Ankle,
}

impl Joint {
    /// Both joints, in canonical order.
    pub const ALL: [Joint; 2] = [Joint::Knee, Joint::Ankle];
}

impl fmt::Display for Joint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Joint::Knee => f.write_str("knee"),
            Joint::Ankle => f.write_str("ankle"),
        }
    }
}

/// One recorded gait cycle for a single joint.
///
/// `phase` is normalized gait phase in [0, 1] (heel strike to heel strike),
/// `angle` is in degrees, `torque` in N*m per kg of body mass. The three
/// vectors always have equal length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitTrajectory {
    pub joint: Joint,
    pub task: TaskParams,
    pub cycle_id: u32,
    pub phase: Vec<f64>,
    pub angle: Vec<f64>,
    pub torque: Vec<f64>,
}

impl GaitTrajectory {
    /// Number of samples in the cycle.
    pub fn len(&self) -> usize {
        self.phase.len()
    }

    /// True when the cycle holds no samples.
    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    /// Checks the cycle invariants: equal-length columns with at least two
    /// samples, finite values, and a strictly increasing phase grid running
    /// exactly from 0 to 1.
    pub fn validate(&self) -> Result<()> {
        let id = format!("{} cycle {} of task {}", self.joint, self.cycle_id, self.task);
        let n = self.phase.len();
        if self.angle.len() != n || self.torque.len() != n {
            return Err(Error::data(format!(
                "{id}: phase/angle/torque lengths differ ({n}/{}/{})",
                self.angle.len(),
                self.torque.len()
            )));
        }
        if n < 2 {
            return Err(Error::data(format!("{id}: needs at least 2 samples, has {n}")));
        }
        for (name, col) in [("phase", &self.phase), ("angle", &self.angle), ("torque", &self.torque)] {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(format!("{id}: non-finite {name} at sample {i}")));
            }
        }
        if self.phase[0] != 0.0 || self.phase[n - 1] != 1.0 {
            return Err(Error::data(format!(
                "{id}: phase must span [0, 1], got [{}, {}]",
                self.phase[0],
                self.phase[n - 1]
            )));
        }
        if let Some(i) = self.phase.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::data(format!(
                "{id}: phase not strictly increasing at sample {}",
                i + 1
            )));
        }
        Ok(())
    }

    /// Linearly interpolated angle at an arbitrary phase in [0, 1].
    /// Evaluation exactly at a grid knot returns the stored value.
    pub fn angle_at(&self, phase: f64) -> f64 {
        interp(&self.phase, &self.angle, phase)
    }

    /// Linearly interpolated torque at an arbitrary phase in [0, 1].
    pub fn torque_at(&self, phase: f64) -> f64 {
        interp(&self.phase, &self.torque, phase)
    }

    /// The cycle traversed as a torque-angle curve.
    pub fn relation(&self) -> TorqueAngleRelation {
        TorqueAngleRelation {
            joint: self.joint,
            task: self.task,
            phase: self.phase.clone(),
            angle: self.angle.clone(),
            torque: self.torque.clone(),
        }
    }
}

/// A torque-angle curve traversed in gait-phase order.
///
/// The curve is generally a loop, not a function of angle, so points stay
/// indexed by their phase on the canonical grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorqueAngleRelation {
    pub joint: Joint,
    pub task: TaskParams,
    pub phase: Vec<f64>,
    pub angle: Vec<f64>,
    pub torque: Vec<f64>,
}

impl TorqueAngleRelation {
    /// Number of points on the curve.
    pub fn len(&self) -> usize {
        self.phase.len()
    }

    /// True when the curve holds no points.
    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    /// (angle, torque) pairs in phase order.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.angle.iter().copied().zip(self.torque.iter().copied())
    }
}

/// The canonical phase grid used across the pipeline: `n` uniform points
/// from 0 to 1 inclusive.
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Resamples a cycle onto a uniform grid of `grid_size` points spanning
/// [0, 1] by linear interpolation.
///
/// Resampling a cycle already on that exact grid reproduces it bitwise;
/// endpoints are always preserved exactly.
pub fn resample_cycle(traj: &GaitTrajectory, grid_size: usize) -> Result<GaitTrajectory> {
    if grid_size < 16 {
        return Err(Error::config(format!(
            "grid_size must be >= 16, got {grid_size}"
        )));
    }
    traj.validate()?;
    let grid = phase_grid(grid_size);
    let angle = grid.iter().map(|&p| interp(&traj.phase, &traj.angle, p)).collect();
    let torque = grid.iter().map(|&p| interp(&traj.phase, &traj.torque, p)).collect();
    Ok(GaitTrajectory {
        joint: traj.joint,
        task: traj.task,
        cycle_id: traj.cycle_id,
        phase: grid,
        angle,
        torque,
    })
}

/// Piecewise-linear interpolation over a strictly increasing grid, clamped
/// at the ends. Exact grid knots return the stored sample unchanged.
pub(crate) fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert!(!xs.is_empty());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    // First index with grid value > x; the segment is [hi-1, hi].
    let hi = xs.partition_point(|&g| g <= x);
    let lo = hi - 1;
    if xs[lo] == x {
        return ys[lo];
    }
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}
