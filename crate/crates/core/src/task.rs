//! Locomotion task parameters and their command-line syntax.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A locomotion task: walking speed plus terrain parameters.
///
/// Tasks act as the regression inputs for target-feature prediction and as
/// grouping keys throughout the pipeline. Validated tasks never carry NaN,
/// so the manual `Ord` below (IEEE total order per field) is a true total
/// order and `TaskParams` can key a `BTreeMap` deterministically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    /// Walking speed in m/s. Must be strictly positive.
    pub speed_mps: f64,
    /// Ground inclination in degrees, negative for decline.
    pub incline_deg: f64,
    /// Stair rise height in meters, for stair tasks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stair_height_m: Option<f64>,
}

impl TaskParams {
    /// A level-ground walking task at the given speed.
    pub fn level(speed_mps: f64) -> Self {
        Self::ramp(speed_mps, 0.0)
    }

    /// A ramp walking task.
    pub fn ramp(speed_mps: f64, incline_deg: f64) -> Self {
        TaskParams {
            speed_mps,
            incline_deg,
            stair_height_m: None,
        }
    }

    /// Checks physical plausibility: finite fields, positive speed,
    /// |incline| <= 45 degrees, stair height in (0, 0.5] m when present.
    pub fn validate(&self) -> Result<()> {
        if !self.speed_mps.is_finite() || self.speed_mps <= 0.0 {
            return Err(Error::config(format!(
                "task speed must be finite and > 0, got {}",
                self.speed_mps
            )));
        }
        if !self.incline_deg.is_finite() || self.incline_deg.abs() > 45.0 {
            return Err(Error::config(format!(
                "task incline must be finite with |incline| <= 45 deg, got {}",
                self.incline_deg
            )));
        }
        if let Some(h) = self.stair_height_m {
            if !h.is_finite() || h <= 0.0 || h > 0.5 {
                return Err(Error::config(format!(
                    "stair height must lie in (0, 0.5] m, got {h}"
                )));
            }
        }
        Ok(())
    }

    /// Regression input vector. `with_stair` selects whether the task space
    /// carries a stair dimension; absent stair heights map to 0.
    pub fn to_input(&self, with_stair: bool) -> Vec<f64> {
        let mut x = vec![self.speed_mps, self.incline_deg];
        if with_stair {
            x.push(self.stair_height_m.unwrap_or(0.0));
        }
        x
    }

    /// Parses the command-line task syntax, e.g. `v=0.6,incline=5` or
    /// `speed=1.0,incline=-2.5,stair=0.12`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut speed = None;
        let mut incline = 0.0;
        let mut stair = None;
        for part in text.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (key, value) = part.split_once('=').ok_or_else(|| {
                Error::config(format!("task field `{part}` is not of the form key=value"))
            })?;
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::config(format!("task field `{key}` has non-numeric value `{value}`"))
            })?;
            match key.trim() {
                "v" | "speed" => speed = Some(value),
                "incline" | "alpha" => incline = value,
                "stair" | "h" => stair = Some(value),
                other => {
                    return Err(Error::config(format!("unknown task field `{other}`")));
                }
            }
        }
        let task = TaskParams {
            speed_mps: speed
                .ok_or_else(|| Error::config("task is missing the speed field (v=...)"))?,
            incline_deg: incline,
            stair_height_m: stair,
        };
        task.validate()?;
        Ok(task)
    }

    /// Compact filename-safe label, e.g. `v0.60_i+5.0`.
    pub fn label(&self) -> String {
        let mut s = format!("v{:.2}_i{:+.1}", self.speed_mps, self.incline_deg);
        if let Some(h) = self.stair_height_m {
            s.push_str(&format!("_h{h:.3}"));
        }
        s
    }
}

impl fmt::Display for TaskParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v={:.2} m/s, incline={:+.1} deg", self.speed_mps, self.incline_deg)?;
        if let Some(h) = self.stair_height_m {
            write!(f, ", stair={h:.3} m")?;
        }
        Ok(())
    }
}

impl Eq for TaskParams {}

impl PartialOrd for TaskParams {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TaskParams {
    fn cmp(&self, other: &Self) -> Ordering {
        self.speed_mps
            .total_cmp(&other.speed_mps)
            .then(self.incline_deg.total_cmp(&other.incline_deg))
            .then_with(|| {
                let a = self.stair_height_m.unwrap_or(f64::NEG_INFINITY);
                let b = other.stair_height_m.unwrap_or(f64::NEG_INFINITY);
                a.total_cmp(&b)
            })
    }
}
