//! Gait-cycle corpora: CSV ingestion, validation, persistence, splitting.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persist::write_atomic;
use crate::task::TaskParams;
use crate::trajectory::{resample_cycle, GaitTrajectory, Joint};

/// Angle unit of a source column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleUnit {
    #[default]
    Degrees,
    Radians,
}

/// Torque unit of a source column. Absolute torques require the subject's
/// body mass for normalization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TorqueUnit {
    #[default]
    NewtonMeterPerKg,
    NewtonMeter,
}

/// Phase unit of a source column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseUnit {
    #[default]
    Percent,
    Fraction,
}

/// Maps source CSV headers onto the canonical schema and declares units.
/// The default matches the canonical schema itself:
/// `speed_mps, incline_deg, cycle_id, phase_pct, knee_angle_deg,
/// knee_torque_nmkg, ankle_angle_deg, ankle_torque_nmkg`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub speed: String,
    pub incline: String,
    pub cycle: String,
    pub phase: String,
    pub knee_angle: String,
    pub knee_torque: String,
    pub ankle_angle: String,
    pub ankle_torque: String,
    /// Optional stair-height column; absent in the canonical schema.
    pub stair: Option<String>,
    pub angle_unit: AngleUnit,
    pub torque_unit: TorqueUnit,
    pub phase_unit: PhaseUnit,
    /// Body mass in kg, required when `torque_unit` is `newton_meter`.
    pub body_mass_kg: Option<f64>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            speed: "speed_mps".into(),
            incline: "incline_deg".into(),
            cycle: "cycle_id".into(),
            phase: "phase_pct".into(),
            knee_angle: "knee_angle_deg".into(),
            knee_torque: "knee_torque_nmkg".into(),
            ankle_angle: "ankle_angle_deg".into(),
            ankle_torque: "ankle_torque_nmkg".into(),
            stair: None,
            angle_unit: AngleUnit::Degrees,
            torque_unit: TorqueUnit::NewtonMeterPerKg,
            phase_unit: PhaseUnit::Percent,
            body_mass_kg: None,
        }
    }
}

impl ColumnMap {
    fn angle_to_deg(&self, v: f64) -> f64 {
        match self.angle_unit {
            AngleUnit::Degrees => v,
            AngleUnit::Radians => v.to_degrees(),
        }
    }

    fn torque_to_nmkg(&self, v: f64) -> Result<f64> {
        match self.torque_unit {
            TorqueUnit::NewtonMeterPerKg => Ok(v),
            TorqueUnit::NewtonMeter => {
                let mass = self.body_mass_kg.ok_or_else(|| {
                    Error::config("torque_unit = newton_meter requires body_mass_kg")
                })?;
                if !(mass.is_finite() && mass > 0.0) {
                    return Err(Error::config(format!("body_mass_kg must be > 0, got {mass}")));
                }
                Ok(v / mass)
            }
        }
    }

    fn phase_to_fraction(&self, v: f64) -> f64 {
        match self.phase_unit {
            PhaseUnit::Percent => v / 100.0,
            PhaseUnit::Fraction => v,
        }
    }
}

/// A validated collection of gait cycles across tasks and joints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    trajectories: Vec<GaitTrajectory>,
}

impl Corpus {
    /// Builds a corpus, validating every cycle.
    pub fn new(trajectories: Vec<GaitTrajectory>) -> Result<Self> {
        for t in &trajectories {
            t.validate()?;
            t.task.validate()?;
        }
        Ok(Corpus { trajectories })
    }

    /// Number of trajectories (one per joint per cycle).
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    /// True when the corpus holds no trajectories.
    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// All trajectories in deterministic (task, cycle, joint) order.
    pub fn iter(&self) -> impl Iterator<Item = &GaitTrajectory> {
        self.trajectories.iter()
    }

    /// Sorted distinct task list.
    pub fn tasks(&self) -> Vec<TaskParams> {
        let set: BTreeSet<TaskParams> = self.trajectories.iter().map(|t| t.task).collect();
        set.into_iter().collect()
    }

    /// True when any task in the corpus carries a stair height; the GPR
    /// input space then gains a stair dimension.
    pub fn uses_stair(&self) -> bool {
        self.trajectories.iter().any(|t| t.task.stair_height_m.is_some())
    }

    /// Cycles of one joint for one task, in cycle order.
    pub fn cycles(&self, task: TaskParams, joint: Joint) -> Vec<&GaitTrajectory> {
        let mut out: Vec<&GaitTrajectory> = self
            .trajectories
            .iter()
            .filter(|t| t.task == task && t.joint == joint)
            .collect();
        out.sort_by_key(|t| t.cycle_id);
        out
    }

    /// Distinct (task, cycle) pairs, sorted.
    pub fn units(&self) -> Vec<(TaskParams, u32)> {
        let set: BTreeSet<(TaskParams, u32)> =
            self.trajectories.iter().map(|t| (t.task, t.cycle_id)).collect();
        set.into_iter().collect()
    }

    /// Resamples the whole corpus onto a common uniform grid.
    pub fn resample(&self, grid_size: usize) -> Result<Corpus> {
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| resample_cycle(t, grid_size))
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus { trajectories })
    }

    /// Grid size shared by every trajectory, if they are all uniform and of
    /// equal length.
    pub fn common_grid_size(&self) -> Option<usize> {
        let n = self.trajectories.first()?.len();
        let grid = crate::trajectory::phase_grid(n);
        self.trajectories
            .iter()
            .all(|t| t.len() == n && t.phase == grid)
            .then_some(n)
    }

    /// Mean cycle (pointwise across cycles) of one joint for one task.
    /// Requires all contributing cycles to share one grid.
    pub fn mean_cycle(&self, task: TaskParams, joint: Joint) -> Result<GaitTrajectory> {
        let cycles = self.cycles(task, joint);
        if cycles.is_empty() {
            return Err(Error::data(format!("no {joint} cycles for task {task}")));
        }
        let n = cycles[0].len();
        if cycles.iter().any(|c| c.len() != n || c.phase != cycles[0].phase) {
            return Err(Error::data(format!(
                "{joint} cycles for task {task} are not on a common grid; resample first"
            )));
        }
        let m = cycles.len() as f64;
        let mut angle = vec![0.0; n];
        let mut torque = vec![0.0; n];
        for c in &cycles {
            for i in 0..n {
                angle[i] += c.angle[i] / m;
                torque[i] += c.torque[i] / m;
            }
        }
        Ok(GaitTrajectory {
            joint,
            task,
            cycle_id: 0,
            phase: cycles[0].phase.clone(),
            angle,
            torque,
        })
    }
}

/// Reads a corpus from a single CSV file using the given column map.
///
/// Rows may appear in any order; they are grouped by (task, cycle) and each
/// group must form a valid cycle. Errors name the offending row or cycle.
pub fn ingest_corpus(path: &Path, map: &ColumnMap) -> Result<Corpus> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::data(format!("{}: {e}", path.display())),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("{}: cannot read header: {e}", path.display())))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::data(format!("{}: missing column `{name}`", path.display()))
        })
    };
    let i_speed = col(&map.speed)?;
    let i_incline = col(&map.incline)?;
    let i_cycle = col(&map.cycle)?;
    let i_phase = col(&map.phase)?;
    let i_cols = [
        (Joint::Knee, col(&map.knee_angle)?, col(&map.knee_torque)?),
        (Joint::Ankle, col(&map.ankle_angle)?, col(&map.ankle_torque)?),
    ];
    let i_stair = match &map.stair {
        Some(name) => Some(col(name)?),
        None => None,
    };

    // Buffers per (task, cycle), filled in file order.
    type Rows = Vec<(f64, [f64; 2], [f64; 2])>; // (phase, angles, torques)
    let mut groups: BTreeMap<(TaskParams, u32), Rows> = BTreeMap::new();

    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header line
        let record =
            record.map_err(|e| Error::data(format!("{}: line {line}: {e}", path.display())))?;
        let field = |i: usize| -> Result<f64> {
            let raw = record.get(i).ok_or_else(|| {
                Error::data(format!("{}: line {line}: missing field {i}", path.display()))
            })?;
            raw.trim().parse::<f64>().map_err(|_| {
                Error::data(format!(
                    "{}: line {line}: non-numeric value `{raw}` in column `{}`",
                    path.display(),
                    headers.get(i).unwrap_or("?")
                ))
            })
        };
        let cycle_raw = field(i_cycle)?;
        if cycle_raw < 0.0 || cycle_raw.fract() != 0.0 {
            return Err(Error::data(format!(
                "{}: line {line}: cycle_id must be a non-negative integer, got {cycle_raw}",
                path.display()
            )));
        }
        let task = TaskParams {
            speed_mps: field(i_speed)?,
            incline_deg: field(i_incline)?,
            stair_height_m: match i_stair {
                Some(i) => Some(field(i)?),
                None => None,
            },
        };
        let phase = map.phase_to_fraction(field(i_phase)?);
        let angles = [
            map.angle_to_deg(field(i_cols[0].1)?),
            map.angle_to_deg(field(i_cols[1].1)?),
        ];
        let torques = [
            map.torque_to_nmkg(field(i_cols[0].2)?)?,
            map.torque_to_nmkg(field(i_cols[1].2)?)?,
        ];
        groups
            .entry((task, cycle_raw as u32))
            .or_default()
            .push((phase, angles, torques));
    }

    if groups.is_empty() {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }

    let mut trajectories = Vec::with_capacity(groups.len() * 2);
    for ((task, cycle_id), rows) in groups {
        let mut phase: Vec<f64> = rows.iter().map(|r| r.0).collect();
        // Snap floating-point endpoints produced by percent conversion.
        if let Some(first) = phase.first_mut() {
            if first.abs() <= 1e-9 {
                *first = 0.0;
            }
        }
        if let Some(last) = phase.last_mut() {
            if (*last - 1.0).abs() <= 1e-9 {
                *last = 1.0;
            }
        }
        for (j, &(joint, ..)) in i_cols.iter().enumerate() {
            let traj = GaitTrajectory {
                joint,
                task,
                cycle_id,
                phase: phase.clone(),
                angle: rows.iter().map(|r| r.1[j]).collect(),
                torque: rows.iter().map(|r| r.2[j]).collect(),
            };
            traj.validate()?;
            trajectories.push(traj);
        }
        task.validate()?;
    }
    Ok(Corpus { trajectories })
}

/// Per-task entry in a corpus manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestTask {
    pub task: TaskParams,
    pub cycles: usize,
    pub file: String,
}

/// Manifest describing an on-disk corpus directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format: String,
    pub version: u32,
    /// Common uniform grid size, when every cycle shares one.
    pub grid_size: Option<usize>,
    pub tasks: Vec<ManifestTask>,
}

const MANIFEST_FORMAT: &str = "quasistiff-corpus";
const MANIFEST_VERSION: u32 = 1;

/// Writes a corpus as a directory: `manifest.json` plus one canonical-schema
/// CSV per task. Numeric fields use shortest round-trip formatting, so a
/// save/load cycle reproduces the corpus exactly.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tasks = Vec::new();
    for task in corpus.tasks() {
        let file = format!("task_{}.csv", task.label());
        let knee = corpus.cycles(task, Joint::Knee);
        let ankle = corpus.cycles(task, Joint::Ankle);
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record([
                "speed_mps",
                "incline_deg",
                "cycle_id",
                "phase_pct",
                "knee_angle_deg",
                "knee_torque_nmkg",
                "ankle_angle_deg",
                "ankle_torque_nmkg",
            ])
            .map_err(|e| Error::data(e.to_string()))?;
            for (k, a) in knee.iter().zip(&ankle) {
                if k.cycle_id != a.cycle_id || k.phase != a.phase {
                    return Err(Error::data(format!(
                        "task {task}: knee/ankle cycles misaligned; cannot serialize"
                    )));
                }
                for i in 0..k.len() {
                    w.write_record([
                        fmt_f64(task.speed_mps),
                        fmt_f64(task.incline_deg),
                        k.cycle_id.to_string(),
                        fmt_f64(k.phase[i] * 100.0),
                        fmt_f64(k.angle[i]),
                        fmt_f64(k.torque[i]),
                        fmt_f64(a.angle[i]),
                        fmt_f64(a.torque[i]),
                    ])
                    .map_err(|e| Error::data(e.to_string()))?;
                }
            }
            w.flush().map_err(|e| Error::io(dir.join(&file), e))?;
        }
        write_atomic(&dir.join(&file), &buf)?;
        tasks.push(ManifestTask {
            task,
            cycles: knee.len(),
            file,
        });
    }
    let manifest = CorpusManifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        grid_size: corpus.common_grid_size(),
        tasks,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::data(e.to_string()))?;
    write_atomic(&dir.join("manifest.json"), &json)
}

/// Loads a corpus directory written by [`save_corpus`].
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let manifest_path = dir.join("manifest.json");
    let bytes = std::fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: CorpusManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::data(format!("manifest.json: {e}")))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::data(format!(
            "manifest.json: unexpected format `{}`",
            manifest.format
        )));
    }
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::data(format!(
            "manifest.json: unsupported version {} (expected {MANIFEST_VERSION})",
            manifest.version
        )));
    }
    let map = ColumnMap::default();
    let mut all = Vec::new();
    for entry in &manifest.tasks {
        let corpus = ingest_corpus(&dir.join(&entry.file), &map)?;
        all.extend(corpus.trajectories);
    }
    Corpus::new(all)
}

/// Splits a corpus into train/test by whole (task, cycle) units.
///
/// Units are shuffled with a seeded RNG; `round(fraction * n)` go to the
/// training side, clamped so both sides stay non-empty. The same
/// (corpus, fraction, seed) always yields the same split.
pub fn split_corpus(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut units = corpus.units();
    if units.len() < 2 {
        return Err(Error::data(format!(
            "corpus has {} (task, cycle) unit(s); need at least 2 to split",
            units.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units.shuffle(&mut rng);
    let n = units.len();
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let train_set: BTreeSet<(TaskParams, u32)> = units[..n_train].iter().copied().collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for t in &corpus.trajectories {
        if train_set.contains(&(t.task, t.cycle_id)) {
            train.push(t.clone());
        } else {
            test.push(t.clone());
        }
    }
    Ok((Corpus { trajectories: train }, Corpus { trajectories: test }))
}

/// Shortest f64 formatting that parses back to the identical bits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::phase_grid;

    fn tiny_corpus() -> Corpus {
        let mut trajectories = Vec::new();
        for (t, task) in [TaskParams::level(0.6), TaskParams::ramp(1.0, 5.0)]
            .into_iter()
            .enumerate()
        {
            for cycle_id in 0..3u32 {
                for joint in Joint::ALL {
                    let grid = phase_grid(21);
                    let angle = grid
                        .iter()
                        .map(|p| 10.0 * (std::f64::consts::TAU * p).sin() + t as f64)
                        .collect();
                    let torque = grid
                        .iter()
                        .map(|p| 0.5 * (std::f64::consts::TAU * p).cos())
                        .collect();
                    trajectories.push(GaitTrajectory {
                        joint,
                        task,
                        cycle_id,
                        phase: grid,
                        angle,
                        torque,
                    });
                }
            }
        }
        Corpus::new(trajectories).unwrap()
    }

    #[test]
    fn tasks_and_cycles_are_grouped_deterministically() {
        let c = tiny_corpus();
        assert_eq!(c.len(), 12);
        assert_eq!(c.tasks().len(), 2);
        assert_eq!(c.cycles(TaskParams::level(0.6), Joint::Knee).len(), 3);
        assert_eq!(c.units().len(), 6);
        assert_eq!(c.common_grid_size(), Some(21));
    }

    #[test]
    fn ingest_round_trips_through_save_and_load() {
        let c = tiny_corpus();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&c, dir.path()).unwrap();
        let back = load_corpus(dir.path()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn ingest_reports_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "speed_mps,incline_deg\n1.0,0.0\n").unwrap();
        let err = ingest_corpus(&path, &ColumnMap::default()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("cycle_id"), "{err}");
    }

    #[test]
    fn ingest_reports_malformed_row_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut text = String::from(
            "speed_mps,incline_deg,cycle_id,phase_pct,knee_angle_deg,knee_torque_nmkg,ankle_angle_deg,ankle_torque_nmkg\n",
        );
        text.push_str("1.0,0.0,0,0,1.0,0.1,2.0,0.2\n");
        text.push_str("1.0,0.0,0,fifty,1.0,0.1,2.0,0.2\n");
        let _ = std::fs::write(&path, text);
        let err = ingest_corpus(&path, &ColumnMap::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("fifty"), "{msg}");
    }

    #[test]
    fn ingest_converts_units() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("units.csv");
        let mut text = String::from("v,a,c,p,ka,kt,aa,at\n");
        // Phase as fraction, angles in radians, torques absolute (mass 80).
        for (p, ang) in [(0.0, 0.0), (0.5, std::f64::consts::FRAC_PI_2), (1.0, 0.0)] {
            text.push_str(&format!("1.0,0.0,0,{p},{ang},80.0,{ang},40.0\n"));
        }
        let _ = std::fs::write(&path, text);
        let map = ColumnMap {
            speed: "v".into(),
            incline: "a".into(),
            cycle: "c".into(),
            phase: "p".into(),
            knee_angle: "ka".into(),
            knee_torque: "kt".into(),
            ankle_angle: "aa".into(),
            ankle_torque: "at".into(),
            angle_unit: AngleUnit::Radians,
            torque_unit: TorqueUnit::NewtonMeter,
            phase_unit: PhaseUnit::Fraction,
            body_mass_kg: Some(80.0),
            ..ColumnMap::default()
        };
        let c = ingest_corpus(&path, &map).unwrap();
        let knee = &c.cycles(TaskParams::level(1.0), Joint::Knee)[0];
        assert!((knee.angle[1] - 90.0).abs() < 1e-12);
        assert!((knee.torque[0] - 1.0).abs() < 1e-12);
        let ankle = &c.cycles(TaskParams::level(1.0), Joint::Ankle)[0];
        assert!((ankle.torque[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn absolute_torque_without_mass_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("units.csv");
        let _ = std::fs::write(
            &path,
            "speed_mps,incline_deg,cycle_id,phase_pct,knee_angle_deg,knee_torque_nmkg,ankle_angle_deg,ankle_torque_nmkg\n1,0,0,0,0,0,0,0\n1,0,0,100,0,0,0,0\n",
        );
        let map = ColumnMap {
            torque_unit: TorqueUnit::NewtonMeter,
            ..ColumnMap::default()
        };
        let err = ingest_corpus(&path, &map).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn split_is_seeded_and_partitions_units() {
        let c = tiny_corpus();
        let (tr1, te1) = split_corpus(&c, 0.7, 42).unwrap();
        let (tr2, te2) = split_corpus(&c, 0.7, 42).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        assert_eq!(tr1.len() + te1.len(), c.len());
        // round(0.7 * 6) = 4 units on the training side.
        assert_eq!(tr1.units().len(), 4);
        assert_eq!(te1.units().len(), 2);
        let (tr3, _) = split_corpus(&c, 0.7, 43).unwrap();
        assert_ne!(tr1, tr3, "different seeds should shuffle differently");
    }

    #[test]
    fn split_keeps_both_sides_nonempty_and_rejects_tiny_corpora() {
        let c = tiny_corpus();
        let (tr, te) = split_corpus(&c, 0.999, 0).unwrap();
        assert!(!tr.is_empty() && !te.is_empty());
        let one = Corpus::new(c.trajectories[..2].to_vec()).unwrap();
        assert!(split_corpus(&one, 0.7, 0).is_err());
        assert!(split_corpus(&c, 1.0, 0).is_err());
    }

    #[test]
    fn mean_cycle_averages_pointwise() {
        let c = tiny_corpus();
        let m = c.mean_cycle(TaskParams::level(0.6), Joint::Knee).unwrap();
        let cycles = c.cycles(TaskParams::level(0.6), Joint::Knee);
        let expect = (cycles[0].angle[5] + cycles[1].angle[5] + cycles[2].angle[5]) / 3.0;
        assert!((m.angle[5] - expect).abs() < 1e-12);
    }
}
