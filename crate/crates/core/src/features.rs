//! Target-feature extraction: per-cycle extrema of angle and torque.
//!
//! Each gait cycle is reduced to a fixed set of features, one per
//! [`FeatureDef`]: the dominant extremum of one channel inside a phase
//! window, reported as a (phase, value) pair. These features are the
//! regression targets for task-adaptive prediction and later serve as
//! via-points for trajectory adaptation.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::task::TaskParams;
use crate::trajectory::{GaitTrajectory, Joint};

/// Which signal a feature reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Angle,
    Torque,
}

/// Whether a feature is a maximum or a minimum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Maximum,
    Minimum,
}

/// One extremum feature: the dominant max/min of a channel inside an
/// inclusive phase window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub channel: Channel,
    pub polarity: Polarity,
    /// Inclusive phase window `[lo, hi]` within [0, 1].
    pub window: (f64, f64),
}

impl FeatureDef {
    fn new(name: &str, channel: Channel, polarity: Polarity, lo: f64, hi: f64) -> Self {
        FeatureDef {
            name: name.into(),
            channel,
            polarity,
            window: (lo, hi),
        }
    }
}

/// The feature set extracted for one joint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub joint: Joint,
    pub defs: Vec<FeatureDef>,
}

impl FeatureSpec {
    /// Default feature set for a joint: three angle extrema and three
    /// torque extrema with windows placed around the usual landmarks of
    /// level and ramp walking (stance flexion, terminal stance, push-off,
    /// swing flexion).
    pub fn default_for(joint: Joint) -> Self {
        use Channel::*;
        use Polarity::*;
        let defs = match joint {
            Joint::Knee => vec![
                FeatureDef::new("stance_flexion_peak_angle", Angle, Maximum, 0.03, 0.40),
                FeatureDef::new("terminal_stance_min_angle", Angle, Minimum, 0.30, 0.62),
                FeatureDef::new("swing_flexion_peak_angle", Angle, Maximum, 0.55, 0.90),
                FeatureDef::new("early_stance_peak_torque", Torque, Maximum, 0.03, 0.35),
                FeatureDef::new("midstance_min_torque", Torque, Minimum, 0.30, 0.65),
                FeatureDef::new("swing_peak_torque", Torque, Maximum, 0.62, 0.97),
            ],
            Joint::Ankle => vec![
                FeatureDef::new("loading_min_angle", Angle, Minimum, 0.0, 0.25),
                FeatureDef::new("dorsiflexion_peak_angle", Angle, Maximum, 0.25, 0.58),
                FeatureDef::new("pushoff_min_angle", Angle, Minimum, 0.55, 0.85),
                FeatureDef::new("loading_min_torque", Torque, Minimum, 0.0, 0.30),
                FeatureDef::new("pushoff_peak_torque", Torque, Maximum, 0.30, 0.65),
                FeatureDef::new("swing_peak_torque", Torque, Maximum, 0.68, 0.97),
            ],
        };
        FeatureSpec { joint, defs }
    }

    /// Checks windows lie inside [0, 1] with positive width and names are
    /// unique and non-empty.
    pub fn validate(&self) -> Result<()> {
        if self.defs.is_empty() {
            return Err(Error::config(format!("feature spec for {} has no features", self.joint)));
        }
        for def in &self.defs {
            let (lo, hi) = def.window;
            if !(lo.is_finite() && hi.is_finite() && (0.0..=1.0).contains(&lo) && hi <= 1.0 && lo < hi)
            {
                return Err(Error::config(format!(
                    "feature `{}`: window [{lo}, {hi}] must satisfy 0 <= lo < hi <= 1",
                    def.name
                )));
            }
            if def.name.is_empty() {
                return Err(Error::config("feature names must be non-empty"));
            }
        }
        for (i, a) in self.defs.iter().enumerate() {
            if self.defs[i + 1..].iter().any(|b| b.name == a.name) {
                return Err(Error::config(format!("duplicate feature name `{}`", a.name)));
            }
        }
        Ok(())
    }
}

/// One extracted feature: where the extremum sits and its value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureValue {
    pub name: String,
    pub channel: Channel,
    pub polarity: Polarity,
    /// Gait phase of the extremum, in [0, 1].
    pub phase: f64,
    /// Angle in degrees or torque in N*m/kg, per `channel`.
    pub value: f64,
}

/// All features of one cycle for one joint, in spec order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetFeatureSet {
    pub joint: Joint,
    pub task: TaskParams,
    pub cycle_id: u32,
    pub features: Vec<FeatureValue>,
}

/// Extracts the spec's features from one cycle.
///
/// The extremum is taken over the grid samples whose phase falls inside the
/// window; ties resolve to the earliest phase. A window that contains no
/// grid sample is a data error naming the feature.
pub fn extract_features(traj: &GaitTrajectory, spec: &FeatureSpec) -> Result<TargetFeatureSet> {
    spec.validate()?;
    traj.validate()?;
    if traj.joint != spec.joint {
        return Err(Error::config(format!(
            "feature spec is for {} but trajectory is for {}",
            spec.joint, traj.joint
        )));
    }
    let mut features = Vec::with_capacity(spec.defs.len());
    for def in &spec.defs {
        let (lo, hi) = def.window;
        let signal = match def.channel {
            Channel::Angle => &traj.angle,
            Channel::Torque => &traj.torque,
        };
        let mut best: Option<(usize, f64)> = None;
        for (i, (&p, &v)) in traj.phase.iter().zip(signal).enumerate() {
            if p < lo || p > hi {
                continue;
            }
            let better = match (best, def.polarity) {
                (None, _) => true,
                (Some((_, bv)), Polarity::Maximum) => v > bv,
                (Some((_, bv)), Polarity::Minimum) => v < bv,
            };
            if better {
                best = Some((i, v));
            }
        }
        let (i, value) = best.ok_or_else(|| {
            Error::data(format!(
                "feature `{}`: window [{lo}, {hi}] contains no grid samples",
                def.name
            ))
        })?;
        features.push(FeatureValue {
            name: def.name.clone(),
            channel: def.channel,
            polarity: def.polarity,
            phase: traj.phase[i],
            value,
        });
    }
    Ok(TargetFeatureSet {
        joint: traj.joint,
        task: traj.task,
        cycle_id: traj.cycle_id,
        features,
    })
}

/// Extracts features for every cycle of one joint across the corpus.
pub fn extract_corpus_features(corpus: &Corpus, spec: &FeatureSpec) -> Result<Vec<TargetFeatureSet>> {
    let mut out = Vec::new();
    for task in corpus.tasks() {
        for traj in corpus.cycles(task, spec.joint) {
            out.push(extract_features(traj, spec)?);
        }
    }
    if out.is_empty() {
        return Err(Error::data(format!("corpus has no {} cycles", spec.joint)));
    }
    Ok(out)
}

/// Averages feature sets cycle-wise (same task, same joint, same spec
/// order), yielding one representative feature set per task.
pub fn mean_feature_set(sets: &[TargetFeatureSet]) -> Result<TargetFeatureSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::data("cannot average an empty list of feature sets"))?;
    let k = first.features.len();
    if sets
        .iter()
        .any(|s| s.features.len() != k || s.task != first.task || s.joint != first.joint)
    {
        return Err(Error::data(
            "feature sets to average must share task, joint, and feature count",
        ));
    }
    let m = sets.len() as f64;
    let mut features = first.features.clone();
    for f in &mut features {
        f.phase = 0.0;
        f.value = 0.0;
    }
    for s in sets {
        for (acc, f) in features.iter_mut().zip(&s.features) {
            acc.phase += f.phase / m;
            acc.value += f.value / m;
        }
    }
    Ok(TargetFeatureSet {
        joint: first.joint,
        task: first.task,
        cycle_id: 0,
        features,
    })
}
