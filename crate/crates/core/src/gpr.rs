//! Gaussian-process regression from task parameters to target features.
//!
//! One independent GP per scalar target, with a zero-mean prior and a
//! squared-exponential kernel carrying one length scale per input dimension.
//! The exact posterior at a query x* is
//!
//! ```text
//! mean = k*ᵀ (K + σε² I)⁻¹ y        var = k(x*,x*) − k*ᵀ (K + σε² I)⁻¹ k*
//! ```
//!
//! computed through a Cholesky factorization of the regularized Gram matrix.
//! Hyperparameters are selected by maximizing the log marginal likelihood
//! over a fixed deterministic grid.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::features::{
    extract_features, mean_feature_set, Channel, FeatureSpec, FeatureValue, Polarity,
    TargetFeatureSet,
};
use crate::task::TaskParams;
use crate::trajectory::Joint;

/// Squared-exponential (ARD) kernel parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// One positive length scale per input dimension.
    pub length_scales: Vec<f64>,
    /// Signal variance σf² > 0.
    pub signal_var: f64,
}

impl KernelParams {
    /// An isotropic squared-exponential kernel.
    pub fn squared_exponential(dim: usize, length_scale: f64, signal_var: f64) -> Self {
        KernelParams {
            length_scales: vec![length_scale; dim],
            signal_var,
        }
    }

    /// Checks positivity and dimensional agreement.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.length_scales.len() != dim {
            return Err(Error::config(format!(
                "kernel has {} length scales for {dim}-dimensional inputs",
                self.length_scales.len()
            )));
        }
        if self.length_scales.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::config("kernel length scales must be finite and > 0"));
        }
        if !(self.signal_var.is_finite() && self.signal_var > 0.0) {
            return Err(Error::config(format!(
                "kernel signal variance must be finite and > 0, got {}",
                self.signal_var
            )));
        }
        Ok(())
    }

    /// Kernel value k(a, b). Symmetric by construction: the same expression
    /// is evaluated for (a, b) and (b, a).
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((&ai, &bi), &l) in a.iter().zip(b).zip(&self.length_scales) {
            let d = (ai - bi) / l;
            s += d * d;
        }
        self.signal_var * (-0.5 * s).exp()
    }
}

/// Per-dimension affine input normalization (zero mean, unit variance on
/// the training inputs). Constant dimensions keep unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputScaler {
    /// Fits the scaler on training inputs (population statistics).
    pub fn fit(inputs: &[Vec<f64>]) -> Self {
        let n = inputs.len() as f64;
        let dim = inputs.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; dim];
        for x in inputs {
            for (m, &v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; dim];
        for x in inputs {
            for ((s, &v), &m) in std.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut std {
            *s = s.sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        InputScaler { mean, std }
    }

    /// Maps a raw input into normalized coordinates.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }

    /// Inverse of [`InputScaler::normalize`].
    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&v, &m), &s)| v * s + m)
            .collect()
    }
}

/// Jitter ladder for Cholesky on near-singular PSD matrices: try the matrix
/// as-is, then add 1e-10 to the diagonal, escalating tenfold up to 1e-4.
/// Returns the lower factor and the jitter that succeeded.
pub(crate) fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let mut jitter = 0.0;
    loop {
        let mut m = a.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol.unpack(), jitter));
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > 1e-4 {
            let diag: Vec<f64> = (0..a.nrows()).map(|i| a[(i, i)]).collect();
            let max = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            let cond = if min > 0.0 { max / min } else { f64::INFINITY };
            return Err(Error::numeric(format!(
                "Cholesky failed after jitter escalation to 1e-4 \
                 (diagonal condition estimate {cond:.3e})"
            )));
        }
    }
}

/// Solves L z = b for lower-triangular L.
fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut z = b.clone();
    l.solve_lower_triangular_mut(&mut z);
    z
}

/// A fitted Gaussian-process regressor for one scalar target.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GprModel {
    kernel: KernelParams,
    noise_var: f64,
    scaler: InputScaler,
    /// Training inputs in normalized coordinates.
    x: Vec<Vec<f64>>,
    /// Training targets (raw).
    y: Vec<f64>,
    /// α = (K + σε² I)⁻¹ y.
    alpha: DVector<f64>,
    /// Lower Cholesky factor of (K + σε² I), including any applied jitter.
    chol_l: DMatrix<f64>,
    /// Jitter added to the diagonal, 0 in the regular case.
    jitter: f64,
}

impl GprModel {
    /// Fits the exact GP posterior: normalizes inputs, builds the Gram
    /// matrix, factorizes (K + σε² I), and precomputes α.
    pub fn fit(
        inputs: &[Vec<f64>],
        targets: &[f64],
        kernel: KernelParams,
        noise_var: f64,
    ) -> Result<Self> {
        let scaler = InputScaler::fit(inputs);
        Self::fit_scaled(inputs, targets, kernel, noise_var, scaler)
    }

    /// Like [`GprModel::fit`], but treats the inputs as already normalized:
    /// the stored scaler is the identity. Useful when several models must
    /// share one normalization.
    pub fn fit_normalized(
        inputs: &[Vec<f64>],
        targets: &[f64],
        kernel: KernelParams,
        noise_var: f64,
    ) -> Result<Self> {
        let dim = inputs.first().map_or(0, Vec::len);
        let scaler = InputScaler {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        };
        Self::fit_scaled(inputs, targets, kernel, noise_var, scaler)
    }

    fn fit_scaled(
        inputs: &[Vec<f64>],
        targets: &[f64],
        kernel: KernelParams,
        noise_var: f64,
        scaler: InputScaler,
    ) -> Result<Self> {
        let n = inputs.len();
        if n == 0 || targets.len() != n {
            return Err(Error::data(format!(
                "GPR fit needs matching non-empty inputs/targets, got {n}/{}",
                targets.len()
            )));
        }
        let dim = inputs[0].len();
        if dim == 0 || inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::data("GPR inputs must share one non-zero dimension"));
        }
        if inputs.iter().flatten().any(|v| !v.is_finite())
            || targets.iter().any(|v| !v.is_finite())
        {
            return Err(Error::data("GPR training data must be finite"));
        }
        kernel.validate(dim)?;
        if !(noise_var.is_finite() && noise_var >= 0.0) {
            return Err(Error::config(format!(
                "noise variance must be finite and >= 0, got {noise_var}"
            )));
        }
        let x: Vec<Vec<f64>> = inputs.iter().map(|v| scaler.normalize(v)).collect();
        if noise_var == 0.0 {
            for i in 0..n {
                for j in i + 1..n {
                    if x[i] == x[j] {
                        return Err(Error::data(format!(
                            "duplicate training inputs {i} and {j} with zero noise variance"
                        )));
                    }
                }
            }
        }
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                gram[(i, j)] = kernel.eval(&x[i], &x[j]);
            }
            gram[(i, i)] += noise_var;
        }
        let (chol_l, jitter) = cholesky_with_jitter(&gram)?;
        let yv = DVector::from_column_slice(targets);
        let z = solve_lower(&chol_l, &yv);
        let mut alpha = z;
        chol_l.transpose().solve_upper_triangular_mut(&mut alpha);
        Ok(GprModel {
            kernel,
            noise_var,
            scaler,
            x,
            y: targets.to_vec(),
            alpha,
            chol_l,
            jitter,
        })
    }

    /// Number of training points.
    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Input dimensionality.
    pub fn dim(&self) -> usize {
        self.scaler.mean.len()
    }

    /// The fitted input scaler.
    pub fn scaler(&self) -> &InputScaler {
        &self.scaler
    }

    /// The kernel in use.
    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    /// Noise variance σε².
    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Posterior mean and variance at a raw-coordinate query point.
    /// The variance is the latent-function variance (no observation noise),
    /// clamped into [0, k(x*,x*)].
    pub fn predict(&self, x_star: &[f64]) -> Result<(f64, f64)> {
        if x_star.len() != self.dim() {
            return Err(Error::config(format!(
                "query has dimension {}, model expects {}",
                x_star.len(),
                self.dim()
            )));
        }
        if x_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("query point must be finite"));
        }
        let z = self.scaler.normalize(x_star);
        let k_star =
            DVector::from_iterator(self.n(), self.x.iter().map(|xi| self.kernel.eval(&z, xi)));
        let mean = k_star.dot(&self.alpha);
        let v = solve_lower(&self.chol_l, &k_star);
        let var = self.kernel.eval(&z, &z) - v.dot(&v);
        Ok((mean, var.max(0.0)))
    }

    /// Log marginal likelihood of the training targets under the model.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.n() as f64;
        let y = DVector::from_column_slice(&self.y);
        let log_det_half: f64 = (0..self.n()).map(|i| self.chol_l[(i, i)].ln()).sum();
        -0.5 * y.dot(&self.alpha) - log_det_half - 0.5 * n * (std::f64::consts::TAU).ln()
    }
}

/// Deterministic hyperparameter grid for [`select_hyperparams`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GprSearchConfig {
    /// Length-scale grid bounds (log-spaced, in normalized input units).
    pub lengthscale_min: f64,
    pub lengthscale_max: f64,
    /// Points per input dimension.
    pub lengthscale_count: usize,
    /// Candidate noise variances.
    pub noise_grid: Vec<f64>,
    /// Signal variance; defaults to the target variance when `None`.
    pub signal_var: Option<f64>,
}

impl Default for GprSearchConfig {
    fn default() -> Self {
        GprSearchConfig {
            lengthscale_min: 0.1,
            lengthscale_max: 3.0,
            lengthscale_count: 10,
            noise_grid: vec![1e-6, 1e-4, 1e-2, 1e-1],
            signal_var: None,
        }
    }
}

impl GprSearchConfig {
    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.lengthscale_min > 0.0 && self.lengthscale_max > self.lengthscale_min) {
            return Err(Error::config(
                "length-scale grid must satisfy 0 < min < max",
            ));
        }
        if self.lengthscale_count < 1 {
            return Err(Error::config("length-scale grid needs at least one point"));
        }
        if self.noise_grid.is_empty()
            || self.noise_grid.iter().any(|&v| !(v.is_finite() && v >= 0.0))
        {
            return Err(Error::config("noise grid must be non-empty and non-negative"));
        }
        if self.lengthscale_count.pow(dim as u32) > 20_000 {
            return Err(Error::config(
                "length-scale grid is too large for a full cartesian search",
            ));
        }
        Ok(())
    }

    fn lengthscale_grid(&self) -> Vec<f64> {
        if self.lengthscale_count == 1 {
            return vec![self.lengthscale_min];
        }
        let (lo, hi) = (self.lengthscale_min.ln(), self.lengthscale_max.ln());
        (0..self.lengthscale_count)
            .map(|i| (lo + (hi - lo) * i as f64 / (self.lengthscale_count - 1) as f64).exp())
            .collect()
    }
}

/// Selects kernel hyperparameters by maximizing log marginal likelihood
/// over the full cartesian grid (per-dimension length scales × noise grid).
/// The scan order is fixed, so ties resolve deterministically to the first
/// maximizer.
pub fn select_hyperparams(
    inputs: &[Vec<f64>],
    targets: &[f64],
    config: &GprSearchConfig,
) -> Result<GprModel> {
    let dim = inputs.first().map_or(0, Vec::len);
    config.validate(dim)?;
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let signal_var = config.signal_var.unwrap_or(var).max(1e-8);

    let ls_grid = config.lengthscale_grid();
    let mut combo = vec![0usize; dim];
    let mut best: Option<(f64, GprModel)> = None;
    loop {
        let kernel = KernelParams {
            length_scales: combo.iter().map(|&i| ls_grid[i]).collect(),
            signal_var,
        };
        for &noise_var in &config.noise_grid {
            let model = GprModel::fit(inputs, targets, kernel.clone(), noise_var)?;
            let lml = model.log_marginal_likelihood();
            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                best = Some((lml, model));
            }
        }
        // Advance the multi-index lexicographically.
        let mut d = 0;
        loop {
            if d == dim {
                let (_, model) = best.expect("grid is non-empty");
                return Ok(model);
            }
            combo[d] += 1;
            if combo[d] < ls_grid.len() {
                break;
            }
            combo[d] = 0;
            d += 1;
        }
    }
}

/// Affine target normalization used by the feature bank. GPs are trained on
/// standardized targets, so the zero-mean prior reverts to the *mean*
/// feature value far from data rather than to zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    fn fit(targets: &[f64]) -> Self {
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = if var.sqrt() < 1e-12 { 1.0 } else { var.sqrt() };
        TargetScaler { mean, std }
    }

    fn standardize(&self, targets: &[f64]) -> Vec<f64> {
        targets.iter().map(|v| (v - self.mean) / self.std).collect()
    }
}

/// Per-feature pair of GPs: one for the feature value, one for the gait
/// phase where it occurs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureBankEntry {
    pub name: String,
    pub channel: Channel,
    pub polarity: Polarity,
    pub value_scaler: TargetScaler,
    pub value_model: GprModel,
    pub phase_scaler: TargetScaler,
    pub phase_model: GprModel,
}

/// The bank of target-feature regressors for one joint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureBank {
    pub joint: Joint,
    pub spec: FeatureSpec,
    /// Whether the task space carries a stair-height dimension.
    pub with_stair: bool,
    pub entries: Vec<FeatureBankEntry>,
    /// Tasks used for training, in sorted order.
    pub tasks: Vec<TaskParams>,
}

/// Fits the feature bank for one joint: features are extracted per cycle,
/// averaged per task, and each (value, phase) target gets its own GP with
/// grid-searched hyperparameters.
pub fn fit_feature_bank(
    train: &Corpus,
    spec: &FeatureSpec,
    search: &GprSearchConfig,
) -> Result<FeatureBank> {
    spec.validate()?;
    let tasks = train.tasks();
    if tasks.is_empty() {
        return Err(Error::data("training corpus is empty"));
    }
    let with_stair = train.uses_stair();
    let mut inputs = Vec::with_capacity(tasks.len());
    let mut per_task: Vec<TargetFeatureSet> = Vec::with_capacity(tasks.len());
    for &task in &tasks {
        let sets = train
            .cycles(task, spec.joint)
            .into_iter()
            .map(|c| extract_features(c, spec))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::data(format!("task {task}: {e}")))?;
        if sets.is_empty() {
            return Err(Error::data(format!(
                "task {task} has no {} cycles",
                spec.joint
            )));
        }
        per_task.push(mean_feature_set(&sets)?);
        inputs.push(task.to_input(with_stair));
    }

    let mut entries = Vec::with_capacity(spec.defs.len());
    for (k, def) in spec.defs.iter().enumerate() {
        let values: Vec<f64> = per_task.iter().map(|s| s.features[k].value).collect();
        let phases: Vec<f64> = per_task.iter().map(|s| s.features[k].phase).collect();
        let value_scaler = TargetScaler::fit(&values);
        let phase_scaler = TargetScaler::fit(&phases);
        let value_model = select_hyperparams(&inputs, &value_scaler.standardize(&values), search)
            .map_err(|e| Error::numeric(format!("feature `{}` (value): {e}", def.name)))?;
        let phase_model = select_hyperparams(&inputs, &phase_scaler.standardize(&phases), search)
            .map_err(|e| Error::numeric(format!("feature `{}` (phase): {e}", def.name)))?;
        entries.push(FeatureBankEntry {
            name: def.name.clone(),
            channel: def.channel,
            polarity: def.polarity,
            value_scaler,
            value_model,
            phase_scaler,
            phase_model,
        });
    }
    Ok(FeatureBank {
        joint: spec.joint,
        spec: spec.clone(),
        with_stair,
        entries,
        tasks,
    })
}

/// One predicted feature with posterior uncertainty, in raw units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedFeature {
    pub name: String,
    pub channel: Channel,
    pub polarity: Polarity,
    pub phase: f64,
    pub phase_sigma: f64,
    pub value: f64,
    pub value_sigma: f64,
}

/// Predicted target features for a new task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePrediction {
    pub joint: Joint,
    pub task: TaskParams,
    /// Features sorted by predicted phase.
    pub features: Vec<PredictedFeature>,
    /// True when the predicted phases violated the bank's feature order
    /// and a re-sort was applied.
    pub reordered: bool,
    pub warnings: Vec<String>,
}

impl FeaturePrediction {
    /// The prediction as a plain feature set (phases and values only).
    pub fn to_feature_set(&self) -> TargetFeatureSet {
        TargetFeatureSet {
            joint: self.joint,
            task: self.task,
            cycle_id: 0,
            features: self
                .features
                .iter()
                .map(|f| FeatureValue {
                    name: f.name.clone(),
                    channel: f.channel,
                    polarity: f.polarity,
                    phase: f.phase,
                    value: f.value,
                })
                .collect(),
        }
    }
}

/// Predicts all target features for a task: posterior means with one-sigma
/// uncertainties mapped back to raw units. Predicted phases are clamped
/// into [0, 1]; if they break the bank's feature ordering the features are
/// re-sorted by phase and a warning is recorded.
pub fn predict_target_features(bank: &FeatureBank, task: TaskParams) -> Result<FeaturePrediction> {
    task.validate()?;
    if bank.entries.is_empty() {
        return Err(Error::config("feature bank has no entries"));
    }
    let x = task.to_input(bank.with_stair);
    let mut features = Vec::with_capacity(bank.entries.len());
    let mut warnings = Vec::new();
    for e in &bank.entries {
        let (vm, vv) = e.value_model.predict(&x)?;
        let (pm, pv) = e.phase_model.predict(&x)?;
        let mut phase = e.phase_scaler.mean + e.phase_scaler.std * pm;
        if !(0.0..=1.0).contains(&phase) {
            warnings.push(format!(
                "feature `{}`: predicted phase {phase:.4} clamped into [0, 1]",
                e.name
            ));
            phase = phase.clamp(0.0, 1.0);
        }
        features.push(PredictedFeature {
            name: e.name.clone(),
            channel: e.channel,
            polarity: e.polarity,
            phase,
            phase_sigma: e.phase_scaler.std * pv.sqrt(),
            value: e.value_scaler.mean + e.value_scaler.std * vm,
            value_sigma: e.value_scaler.std * vv.sqrt(),
        });
    }
    let mut reordered = false;
    if features.windows(2).any(|w| w[1].phase < w[0].phase) {
        features.sort_by(|a, b| a.phase.total_cmp(&b.phase));
        reordered = true;
        warnings.push("predicted phases violated feature order; re-sorted by phase".into());
    }
    Ok(FeaturePrediction {
        joint: bank.joint,
        task,
        features,
        reordered,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel1(l: f64) -> KernelParams {
        KernelParams::squared_exponential(1, l, 1.0)
    }

    #[test]
    fn fit_alpha_solves_the_dense_system() {
        // Inputs {0,1,2}, targets {0,1,2}, SE kernel l=1, sigma_f=1,
        // noise 0.01: alpha must match an explicit 3x3 solve on the same
        // normalized inputs.
        let inputs: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0], vec![2.0]];
        let targets = [0.0, 1.0, 2.0];
        let model = GprModel::fit(&inputs, &targets, kernel1(1.0), 0.01).unwrap();
        let x: Vec<Vec<f64>> = inputs.iter().map(|v| model.scaler().normalize(v)).collect();
        let mut a = DMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = model.kernel().eval(&x[i], &x[j]);
            }
            a[(i, i)] += 0.01;
        }
        let alpha = a.try_inverse().unwrap() * DVector::from_column_slice(&targets);
        for i in 0..3 {
            assert!((model.alpha[i] - alpha[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn single_point_interpolates_exactly_with_zero_noise() {
        let model = GprModel::fit(&[vec![0.7]], &[3.25], kernel1(1.0), 0.0).unwrap();
        let (mean, var) = model.predict(&[0.7]).unwrap();
        assert_eq!(mean, 3.25);
        assert!(var.abs() < 1e-12);
    }

    #[test]
    fn zero_targets_give_zero_predictions() {
        let inputs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let model = GprModel::fit(&inputs, &[0.0; 5], kernel1(1.0), 1e-4).unwrap();
        for q in [-1.0, 0.3, 2.7, 10.0] {
            let (mean, _) = model.predict(&[q]).unwrap();
            assert_eq!(mean, 0.0);
        }
    }

    #[test]
    fn interpolates_at_training_inputs_with_tiny_noise() {
        let inputs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.4]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| (x[0] * 2.0).sin()).collect();
        let model = GprModel::fit(&inputs, &targets, kernel1(1.0), 1e-12).unwrap();
        for (x, &t) in inputs.iter().zip(&targets) {
            let (mean, var) = model.predict(x).unwrap();
            assert!((mean - t).abs() < 1e-6, "mean {mean} vs target {t}");
            assert!(var <= 1e-6, "var {var}");
        }
    }

    #[test]
    fn reverts_to_prior_far_from_data() {
        let inputs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let targets = [1.0, 2.0, 0.5, -1.0, 0.3];
        let model = GprModel::fit(&inputs, &targets, kernel1(0.5), 1e-6).unwrap();
        let (mean, var) = model.predict(&[1e4]).unwrap();
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9, "prior variance is signal_var");
    }

    #[test]
    fn duplicate_inputs_with_zero_noise_are_rejected() {
        let inputs = vec![vec![1.0], vec![1.0]];
        let err = GprModel::fit(&inputs, &[0.0, 1.0], kernel1(1.0), 0.0).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("duplicate"), "{err}");
        // With noise the same data is fine.
        assert!(GprModel::fit(&inputs, &[0.0, 1.0], kernel1(1.0), 1e-2).is_ok());
    }

    #[test]
    fn nan_query_is_a_config_error() {
        let model = GprModel::fit(&[vec![0.0], vec![1.0]], &[0.0, 1.0], kernel1(1.0), 1e-4).unwrap();
        assert_eq!(model.predict(&[f64::NAN]).unwrap_err().exit_code(), 2);
        assert_eq!(model.predict(&[1.0, 2.0]).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn variance_bounded_by_prior_and_nonnegative() {
        let inputs: Vec<Vec<f64>> = (0..8).map(|i| vec![(i as f64) * 0.3, (i % 3) as f64]).collect();
        let targets: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let kernel = KernelParams::squared_exponential(2, 0.8, 2.5);
        let model = GprModel::fit(&inputs, &targets, kernel, 1e-6).unwrap();
        for q in [[0.1, 0.0], [1.5, 2.0], [9.0, 1.0]] {
            let (_, var) = model.predict(&q).unwrap();
            assert!(var >= 0.0);
            assert!(var <= 2.5 + 1e-10);
        }
    }

    #[test]
    fn scaler_round_trips() {
        let inputs = vec![vec![0.5, -2.0], vec![1.5, 4.0], vec![3.0, 7.5]];
        let scaler = InputScaler::fit(&inputs);
        for x in &inputs {
            let back = scaler.denormalize(&scaler.normalize(x));
            for (a, b) in back.iter().zip(x) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lml_grid_search_recovers_a_sensible_length_scale() {
        // Smooth function: the search should prefer a long length scale
        // over the shortest one.
        let inputs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| x[0] * 2.0 - 1.0).collect();
        let model = select_hyperparams(&inputs, &targets, &GprSearchConfig::default()).unwrap();
        assert!(model.kernel().length_scales[0] > 0.1);
        // Deterministic: same call yields the identical model.
        let again = select_hyperparams(&inputs, &targets, &GprSearchConfig::default()).unwrap();
        assert_eq!(model.kernel(), again.kernel());
        assert_eq!(model.noise_var(), again.noise_var());
    }

    #[test]
    fn adding_a_point_never_increases_variance() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(2..12);
            let inputs: Vec<Vec<f64>> =
                (0..n).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
            let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut grown_inputs = inputs.clone();
            grown_inputs.push(vec![rng.random_range(-2.0..2.0)]);
            let mut grown_targets = targets.clone();
            grown_targets.push(rng.random_range(-1.0..1.0));
            let kernel = kernel1(rng.random_range(0.3..2.0));
            // Identity normalization on both fits so the comparison
            // isolates the pure information effect.
            let small = GprModel::fit_normalized(&inputs, &targets, kernel.clone(), 1e-4).unwrap();
            let grown =
                GprModel::fit_normalized(&grown_inputs, &grown_targets, kernel, 1e-4).unwrap();
            for _ in 0..5 {
                let q = vec![rng.random_range(-2.0..2.0)];
                let (_, v_small) = small.predict(&q).unwrap();
                let (_, v_grown) = grown.predict(&q).unwrap();
                assert!(
                    v_grown <= v_small + 1e-9,
                    "variance grew: {v_grown} > {v_small}"
                );
            }
        }
    }

    #[test]
    fn feature_bank_predicts_training_tasks_and_constants() {
        use crate::trajectory::{phase_grid, GaitTrajectory};
        // Corpus where the knee stance peak scales linearly with speed.
        let mut trajectories = Vec::new();
        for (i, v) in [0.6, 0.8, 1.0, 1.2].iter().enumerate() {
            let task = TaskParams::level(*v);
            let grid = phase_grid(101);
            let angle: Vec<f64> = grid
                .iter()
                .map(|p| (10.0 + 5.0 * i as f64) * (std::f64::consts::PI * p).sin())
                .collect();
            let torque: Vec<f64> = grid
                .iter()
                .map(|p| 0.5 * (std::f64::consts::TAU * p).sin())
                .collect();
            trajectories.push(GaitTrajectory {
                joint: Joint::Knee,
                task,
                cycle_id: 0,
                phase: grid,
                angle,
                torque,
            });
        }
        let corpus = Corpus::new(trajectories).unwrap();
        let spec = FeatureSpec {
            joint: Joint::Knee,
            defs: vec![
                crate::features::FeatureDef {
                    name: "peak_angle".into(),
                    channel: Channel::Angle,
                    polarity: Polarity::Maximum,
                    window: (0.2, 0.8),
                },
                crate::features::FeatureDef {
                    name: "peak_torque".into(),
                    channel: Channel::Torque,
                    polarity: Polarity::Maximum,
                    window: (0.0, 0.5),
                },
            ],
        };
        let bank = fit_feature_bank(&corpus, &spec, &GprSearchConfig::default()).unwrap();
        assert_eq!(bank.entries.len(), 2);
        // Interpolation at a training task.
        let pred = predict_target_features(&bank, TaskParams::level(0.8)).unwrap();
        let angle_feat = pred.features.iter().find(|f| f.name == "peak_angle").unwrap();
        assert!((angle_feat.value - 15.0).abs() < 1e-2, "{}", angle_feat.value);
        // The torque peak is constant across tasks: predictions must return
        // that constant via the target-normalization round trip.
        let torque_feat = pred.features.iter().find(|f| f.name == "peak_torque").unwrap();
        assert!((torque_feat.value - 0.5).abs() < 1e-3, "{}", torque_feat.value);
    }

    #[test]
    fn model_round_trips_through_persistence_bitwise() {
        let inputs: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 * 0.35, (i * i) as f64 * 0.1]).collect();
        let targets: Vec<f64> = (0..7).map(|i| ((i * 3) as f64 * 0.21).cos()).collect();
        let kernel = KernelParams::squared_exponential(2, 0.9, 1.4);
        let model = GprModel::fit(&inputs, &targets, kernel, 1e-4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gpr.json");
        crate::persist::save_model(&path, "gpr", &model).unwrap();
        let back: GprModel = crate::persist::load_model(&path, "gpr").unwrap();
        for q in [[0.1, 0.2], [0.9, 1.3], [2.0, 4.0]] {
            let (m1, v1) = model.predict(&q).unwrap();
            let (m2, v2) = back.predict(&q).unwrap();
            assert_eq!(m1.to_bits(), m2.to_bits());
            assert_eq!(v1.to_bits(), v2.to_bits());
        }
    }
}
