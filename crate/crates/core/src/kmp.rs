//! Kernelized movement primitives: adapt the GMR reference distribution to
//! a new task by forcing the curve through predicted via-point features.
//!
//! The primitive is indexed by gait phase with a 2-D output (angle,
//! torque). With support phases s_1..s_M′, stacked means μ and
//! block-diagonal covariances Σ, the mean prediction at a query s* is
//!
//! ```text
//! mean(s*) = k*ᵀ (K + λ Σ)⁻¹ μ
//! cov(s*)  = (M′/λc) · [k(s*,s*) I₂ − k*ᵀ (K + λc Σ)⁻¹ k*]
//! ```
//!
//! where K is the phase kernel expanded blockwise over the 2-D output.
//! Everything is materialized densely (2M′ ≤ a few hundred) and factorized
//! once per fit.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Channel;
use crate::gmm::ReferenceDistribution;
use crate::gpr::{cholesky_with_jitter, FeatureBank, FeaturePrediction, KernelParams};
use crate::task::TaskParams;
use crate::trajectory::TorqueAngleRelation;

/// A via-point constraint: at gait phase `phase`, the (angle, torque)
/// output should pass through `mean` with confidence `cov`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViaPoint {
    pub phase: f64,
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl ViaPoint {
    /// Checks phase range, finiteness, and covariance positive-definiteness.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.phase) {
            return Err(Error::config(format!(
                "via-point phase {} outside [0, 1]",
                self.phase
            )));
        }
        if self.mean.iter().any(|v| !v.is_finite()) || self.cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("via-point mean/cov must be finite"));
        }
        if self.cov.cholesky().is_none() {
            return Err(Error::config(format!(
                "via-point at phase {} has a non-PD covariance",
                self.phase
            )));
        }
        Ok(())
    }
}

/// KMP hyperparameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmpConfig {
    /// Phase-kernel length scale (gait-phase units).
    pub length_scale: f64,
    /// Phase-kernel signal variance.
    pub signal_var: f64,
    /// Regularizer λ for the mean solve.
    pub lambda: f64,
    /// Regularizer λc for the covariance solve.
    pub lambda_cov: f64,
    /// Via-point variance, in standardized output units.
    pub via_var: f64,
}

impl Default for KmpConfig {
    fn default() -> Self {
        KmpConfig {
            length_scale: 0.06,
            signal_var: 1.0,
            lambda: 1.0,
            lambda_cov: 1.0,
            via_var: 1e-6,
        }
    }
}

impl KmpConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length_scale", self.length_scale),
            ("signal_var", self.signal_var),
            ("lambda", self.lambda),
            ("lambda_cov", self.lambda_cov),
            ("via_var", self.via_var),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("KMP {name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    fn kernel(&self) -> KernelParams {
        KernelParams::squared_exponential(1, self.length_scale, self.signal_var)
    }
}

/// Prediction at one phase: mean, covariance, and whether the query fell
/// outside the supported [0, 1] range (extrapolation).
#[derive(Clone, Debug, PartialEq)]
pub struct KmpPrediction {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    pub extrapolated: bool,
}

/// Affine output transform applied around the raw-units solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OutputScaler {
    mean: Vector2<f64>,
    std: Vector2<f64>,
}

impl OutputScaler {
    fn identity() -> Self {
        OutputScaler {
            mean: Vector2::zeros(),
            std: Vector2::new(1.0, 1.0),
        }
    }
}

/// A fitted kernelized movement primitive.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KmpModel {
    /// Support phases, strictly increasing, length M′.
    support: Vec<f64>,
    /// Per-support output means (standardized units).
    means: Vec<Vector2<f64>>,
    /// Per-support output covariances (standardized units).
    covs: Vec<Matrix2<f64>>,
    kernel: KernelParams,
    lambda: f64,
    lambda_cov: f64,
    scaler: OutputScaler,
    /// Lower Cholesky factor of (K + λ Σ).
    chol_mean: DMatrix<f64>,
    /// Lower Cholesky factor of (K + λc Σ).
    chol_cov: DMatrix<f64>,
    /// w = (K + λ Σ)⁻¹ μ, precomputed for mean predictions.
    w_mean: DVector<f64>,
}

impl KmpModel {
    /// Fits the primitive directly in the units of `means`/`covs` (no
    /// internal standardization). `support` must be strictly increasing.
    pub fn fit_raw(
        support: Vec<f64>,
        means: Vec<Vector2<f64>>,
        covs: Vec<Matrix2<f64>>,
        kernel: KernelParams,
        lambda: f64,
        lambda_cov: f64,
    ) -> Result<Self> {
        Self::fit_scaled(support, means, covs, kernel, lambda, lambda_cov, OutputScaler::identity())
    }

    #[allow(clippy::too_many_arguments)]
    fn fit_scaled(
        support: Vec<f64>,
        means: Vec<Vector2<f64>>,
        covs: Vec<Matrix2<f64>>,
        kernel: KernelParams,
        lambda: f64,
        lambda_cov: f64,
        scaler: OutputScaler,
    ) -> Result<Self> {
        let m = support.len();
        if m == 0 || means.len() != m || covs.len() != m {
            return Err(Error::data(format!(
                "KMP needs equal non-zero support/means/covs lengths, got {m}/{}/{}",
                means.len(),
                covs.len()
            )));
        }
        if support.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::data("KMP support phases must be strictly increasing"));
        }
        kernel.validate(1)?;
        if !(lambda.is_finite() && lambda > 0.0 && lambda_cov.is_finite() && lambda_cov > 0.0) {
            return Err(Error::config("KMP regularizers must be finite and > 0"));
        }

        // Assemble the 2M′×2M′ block system: K ⊗ I₂ + λ·blockdiag(Σ_m).
        let dim = 2 * m;
        let mut k_blk = DMatrix::zeros(dim, dim);
        for i in 0..m {
            for j in 0..m {
                let k = kernel.eval(&support[i..=i], &support[j..=j]);
                k_blk[(2 * i, 2 * j)] = k;
                k_blk[(2 * i + 1, 2 * j + 1)] = k;
            }
        }
        let mut a_mean = k_blk.clone();
        let mut a_cov = k_blk;
        for (i, cov) in covs.iter().enumerate() {
            for r in 0..2 {
                for c in 0..2 {
                    a_mean[(2 * i + r, 2 * i + c)] += lambda * cov[(r, c)];
                    a_cov[(2 * i + r, 2 * i + c)] += lambda_cov * cov[(r, c)];
                }
            }
        }
        let (chol_mean, _) = cholesky_with_jitter(&a_mean)
            .map_err(|e| Error::numeric(format!("KMP mean system: {e}")))?;
        let (chol_cov, _) = cholesky_with_jitter(&a_cov)
            .map_err(|e| Error::numeric(format!("KMP covariance system: {e}")))?;

        let mut w_mean = DVector::zeros(dim);
        for (i, mu) in means.iter().enumerate() {
            w_mean[2 * i] = mu[0];
            w_mean[2 * i + 1] = mu[1];
        }
        chol_mean.solve_lower_triangular_mut(&mut w_mean);
        chol_mean.transpose().solve_upper_triangular_mut(&mut w_mean);

        Ok(KmpModel {
            support,
            means,
            covs,
            kernel,
            lambda,
            lambda_cov,
            scaler,
            chol_mean,
            chol_cov,
            w_mean,
        })
    }

    /// Number of support points M′.
    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    /// The support phase grid.
    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// Predicts mean and covariance at a phase. Pure and deterministic;
    /// queries outside [0, 1] are flagged as extrapolation.
    pub fn predict(&self, phase: f64) -> Result<KmpPrediction> {
        if !phase.is_finite() {
            return Err(Error::config("KMP query phase must be finite"));
        }
        let m = self.support.len();
        let q = [phase];
        // k* as an M′ scalar vector; block expansion handled implicitly.
        let ks: Vec<f64> = self
            .support
            .iter()
            .map(|&s| self.kernel.eval(&q, &[s]))
            .collect();

        // Mean: Σ_m k*_m · w[2m..2m+2].
        let mut mean = Vector2::zeros();
        for (i, &k) in ks.iter().enumerate() {
            mean[0] += k * self.w_mean[2 * i];
            mean[1] += k * self.w_mean[2 * i + 1];
        }

        // Covariance: (M′/λc)(k** I − K*ᵀ A⁻¹ K*) with K* = k* ⊗ I₂.
        let dim = 2 * m;
        let mut kmat = DMatrix::zeros(dim, 2);
        for (i, &k) in ks.iter().enumerate() {
            kmat[(2 * i, 0)] = k;
            kmat[(2 * i + 1, 1)] = k;
        }
        self.chol_cov.solve_lower_triangular_mut(&mut kmat);
        let kss = self.kernel.eval(&q, &q);
        let quad = kmat.transpose() * &kmat; // 2×2
        let scale = m as f64 / self.lambda_cov;
        let mut cov = Matrix2::zeros();
        for r in 0..2 {
            for c in 0..2 {
                let v = scale * ((if r == c { kss } else { 0.0 }) - quad[(r, c)]);
                cov[(r, c)] = v;
            }
        }
        // Symmetrize against round-off.
        let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
        cov[(0, 1)] = off;
        cov[(1, 0)] = off;

        // De-standardize.
        let s = &self.scaler;
        let mean = Vector2::new(
            s.mean[0] + s.std[0] * mean[0],
            s.mean[1] + s.std[1] * mean[1],
        );
        let cov = Matrix2::new(
            cov[(0, 0)] * s.std[0] * s.std[0],
            cov[(0, 1)] * s.std[0] * s.std[1],
            cov[(1, 0)] * s.std[1] * s.std[0],
            cov[(1, 1)] * s.std[1] * s.std[1],
        );
        Ok(KmpPrediction {
            mean,
            cov,
            extrapolated: !(0.0..=1.0).contains(&phase),
        })
    }
}

/// Fits a KMP to a reference distribution plus via-points (all in raw
/// units). Outputs are standardized internally by the reference's pooled
/// scale; each via-point replaces the nearest support index when within
/// half a grid step, otherwise it is inserted.
pub fn kmp_fit(
    reference: &ReferenceDistribution,
    vias: &[ViaPoint],
    config: &KmpConfig,
) -> Result<KmpModel> {
    reference.validate()?;
    config.validate()?;
    for v in vias {
        v.validate()?;
    }

    // Standardize outputs with the reference's pooled scale; center on the
    // mean of the reference means.
    let m = reference.len();
    let mut center = Vector2::zeros();
    for mu in &reference.means {
        center[0] += mu[0] / m as f64;
        center[1] += mu[1] / m as f64;
    }
    let std = Vector2::new(reference.output_std[0], reference.output_std[1]);
    let scaler = OutputScaler { mean: center, std };
    let to_std_mean = |mu: &DVector<f64>| {
        Vector2::new((mu[0] - center[0]) / std[0], (mu[1] - center[1]) / std[1])
    };
    let to_std_cov = |cov: &DMatrix<f64>| {
        Matrix2::new(
            cov[(0, 0)] / (std[0] * std[0]),
            cov[(0, 1)] / (std[0] * std[1]),
            cov[(1, 0)] / (std[1] * std[0]),
            cov[(1, 1)] / (std[1] * std[1]),
        )
    };

    let mut support = reference.index.clone();
    let mut means: Vec<Vector2<f64>> = reference.means.iter().map(to_std_mean).collect();
    let mut covs: Vec<Matrix2<f64>> = reference
        .covariances
        .iter()
        .map(|c| to_std_cov(&DMatrix::from_fn(2, 2, |r, cc| c[(r, cc)])))
        .collect();

    // Median grid step (uniform grids: exactly the step).
    let mut steps: Vec<f64> = support.windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(f64::total_cmp);
    let half_step = 0.5 * steps[steps.len() / 2];

    let mut sorted: Vec<&ViaPoint> = vias.iter().collect();
    sorted.sort_by(|a, b| a.phase.total_cmp(&b.phase));
    if sorted.windows(2).any(|w| w[0].phase == w[1].phase) {
        return Err(Error::config("via-points must have distinct phases"));
    }
    let mut replaced = vec![false; support.len()];
    for via in sorted {
        let vm = Vector2::new(
            (via.mean[0] - center[0]) / std[0],
            (via.mean[1] - center[1]) / std[1],
        );
        let vc = Matrix2::new(
            via.cov[(0, 0)] / (std[0] * std[0]),
            via.cov[(0, 1)] / (std[0] * std[1]),
            via.cov[(1, 0)] / (std[1] * std[0]),
            via.cov[(1, 1)] / (std[1] * std[1]),
        );
        // Nearest support index.
        let mut nearest = 0;
        let mut best = f64::INFINITY;
        for (i, &s) in support.iter().enumerate() {
            let d = (s - via.phase).abs();
            if d < best {
                best = d;
                nearest = i;
            }
        }
        if best <= half_step && !replaced[nearest] {
            support[nearest] = via.phase;
            means[nearest] = vm;
            covs[nearest] = vc;
            replaced[nearest] = true;
        } else {
            // Insert, keeping the support sorted.
            let pos = support.partition_point(|&s| s < via.phase);
            if support.get(pos).copied() == Some(via.phase)
                || (pos > 0 && support[pos - 1] == via.phase)
            {
                return Err(Error::config(format!(
                    "via-point at phase {} collides with an existing support point",
                    via.phase
                )));
            }
            support.insert(pos, via.phase);
            means.insert(pos, vm);
            covs.insert(pos, vc);
            replaced.insert(pos, true);
        }
    }
    if support.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(
            "via-point replacement broke support ordering; use insertion instead",
        ));
    }

    KmpModel::fit_scaled(
        support,
        means,
        covs,
        config.kernel(),
        config.lambda,
        config.lambda_cov,
        scaler,
    )
}

/// A reconstructed torque-angle relationship with its provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Reconstruction {
    pub relation: TorqueAngleRelation,
    /// The GPR feature prediction the via-points came from.
    pub prediction: FeaturePrediction,
    /// The assembled via-points, in raw units.
    pub vias: Vec<ViaPoint>,
}

/// Reconstructs the torque-angle relationship for a new task: target
/// features are predicted by the GPR bank, converted into via-points (each
/// constrains its own channel tightly; the other channel keeps the
/// reference behavior at that phase), and the KMP is evaluated on the
/// reference grid.
pub fn reconstruct_relation(
    bank: &FeatureBank,
    reference: &ReferenceDistribution,
    task: TaskParams,
    config: &KmpConfig,
) -> Result<Reconstruction> {
    if bank.joint != reference.joint {
        return Err(Error::config(format!(
            "feature bank is for {} but reference is for {}",
            bank.joint, reference.joint
        )));
    }
    config.validate()?;
    let prediction = crate::gpr::predict_target_features(bank, task)?;

    let std = reference.output_std;
    let mut vias = Vec::with_capacity(prediction.features.len());
    for f in &prediction.features {
        let ref_mean = reference.mean_at(f.phase);
        let ref_cov = reference.cov_at(f.phase);
        let (mut mean, mut cov) = (
            Vector2::new(ref_mean[0], ref_mean[1]),
            Matrix2::new(ref_cov[(0, 0)], 0.0, 0.0, ref_cov[(1, 1)]),
        );
        let d = match f.channel {
            Channel::Angle => 0,
            Channel::Torque => 1,
        };
        mean[d] = f.value;
        cov[(d, d)] = config.via_var * std[d] * std[d];
        vias.push(ViaPoint {
            phase: f.phase,
            mean,
            cov,
        });
    }
    // Drop via-points that ended up sharing a phase after clamping: keep
    // the first occurrence (deterministic in feature order).
    vias.sort_by(|a, b| a.phase.total_cmp(&b.phase));
    vias.dedup_by(|b, a| a.phase == b.phase);

    let model = kmp_fit(reference, &vias, config)?;
    let mut angle = Vec::with_capacity(reference.len());
    let mut torque = Vec::with_capacity(reference.len());
    for &p in &reference.index {
        let pred = model.predict(p)?;
        angle.push(pred.mean[0]);
        torque.push(pred.mean[1]);
    }
    Ok(Reconstruction {
        relation: TorqueAngleRelation {
            joint: reference.joint,
            task,
            phase: reference.index.clone(),
            angle,
            torque,
        },
        prediction,
        vias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::phase_grid;

    fn toy_reference(m: usize) -> ReferenceDistribution {
        let index = phase_grid(m);
        let means = index
            .iter()
            .map(|&p| {
                nalgebra::DVector::from_column_slice(&[
                    (std::f64::consts::TAU * p).sin(),
                    0.5 * (std::f64::consts::TAU * p).cos(),
                ])
            })
            .collect();
        let covariances = index
            .iter()
            .map(|_| nalgebra::DMatrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 0.01]))
            .collect();
        ReferenceDistribution {
            joint: crate::trajectory::Joint::Knee,
            index,
            means,
            covariances,
            output_std: [1.0, 0.5],
        }
    }

    fn raw_parts(
        reference: &ReferenceDistribution,
    ) -> (Vec<f64>, Vec<Vector2<f64>>, Vec<Matrix2<f64>>) {
        let support = reference.index.clone();
        let means = reference
            .means
            .iter()
            .map(|m| Vector2::new(m[0], m[1]))
            .collect();
        let covs = reference
            .covariances
            .iter()
            .map(|c| Matrix2::new(c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]))
            .collect();
        (support, means, covs)
    }

    #[test]
    fn small_lambda_tracks_reference_means() {
        let reference = toy_reference(101);
        let (support, means, covs) = raw_parts(&reference);
        let kernel = KernelParams::squared_exponential(1, 0.06, 1.0);
        let model = KmpModel::fit_raw(support, means.clone(), covs, kernel, 1e-6, 1.0).unwrap();
        let mut max_err: f64 = 0.0;
        for (i, &p) in reference.index.iter().enumerate() {
            let pred = model.predict(p).unwrap();
            max_err = max_err.max((pred.mean[0] - means[i][0]).abs());
            max_err = max_err.max((pred.mean[1] - means[i][1]).abs());
        }
        // Within 1% of the output range (range 2.0 for the angle channel).
        assert!(max_err < 0.02, "max deviation {max_err}");
    }

    #[test]
    fn via_point_passage_with_tight_covariance() {
        let reference = toy_reference(101);
        let via = ViaPoint {
            phase: 0.25,
            mean: Vector2::new(2.0, -0.4),
            cov: Matrix2::identity() * 1e-6,
        };
        let model = kmp_fit(&reference, &[via.clone()], &KmpConfig::default()).unwrap();
        let pred = model.predict(0.25).unwrap();
        // Standardized-unit passage tolerance.
        let e0 = (pred.mean[0] - via.mean[0]).abs() / reference.output_std[0];
        let e1 = (pred.mean[1] - via.mean[1]).abs() / reference.output_std[1];
        assert!(e0 < 1e-2, "angle misses via: {e0}");
        assert!(e1 < 1e-2, "torque misses via: {e1}");
    }

    #[test]
    fn coincident_via_replaces_support_keeping_m() {
        let reference = toy_reference(51);
        let via = ViaPoint {
            phase: reference.index[10],
            mean: Vector2::new(1.0, 1.0),
            cov: Matrix2::identity() * 1e-6,
        };
        let model = kmp_fit(&reference, &[via], &KmpConfig::default()).unwrap();
        assert_eq!(model.support_len(), 51);
        // A via between grid points (beyond half a step is impossible on a
        // uniform grid, so nudge within a quarter step) still replaces.
        let step = reference.index[1] - reference.index[0];
        let via2 = ViaPoint {
            phase: reference.index[10] + 0.25 * step,
            mean: Vector2::new(1.0, 1.0),
            cov: Matrix2::identity() * 1e-6,
        };
        let model2 = kmp_fit(&reference, &[via2], &KmpConfig::default()).unwrap();
        assert_eq!(model2.support_len(), 51);
    }

    #[test]
    fn kernelized_solution_matches_dense_bruteforce() {
        let reference = toy_reference(60);
        let (support, means, covs) = raw_parts(&reference);
        let kernel = KernelParams::squared_exponential(1, 0.08, 1.3);
        let (lambda, lambda_cov) = (0.7, 2.0);
        let model = KmpModel::fit_raw(
            support.clone(),
            means.clone(),
            covs.clone(),
            kernel.clone(),
            lambda,
            lambda_cov,
        )
        .unwrap();

        // Brute force: materialize both systems and invert explicitly.
        let m = support.len();
        let dim = 2 * m;
        let mut k_blk = DMatrix::zeros(dim, dim);
        for i in 0..m {
            for j in 0..m {
                let k = kernel.eval(&support[i..=i], &support[j..=j]);
                k_blk[(2 * i, 2 * j)] = k;
                k_blk[(2 * i + 1, 2 * j + 1)] = k;
            }
        }
        let mut a_mean = k_blk.clone();
        let mut a_cov = k_blk;
        for (i, c) in covs.iter().enumerate() {
            for r in 0..2 {
                for cc in 0..2 {
                    a_mean[(2 * i + r, 2 * i + cc)] += lambda * c[(r, cc)];
                    a_cov[(2 * i + r, 2 * i + cc)] += lambda_cov * c[(r, cc)];
                }
            }
        }
        let inv_mean = a_mean.try_inverse().unwrap();
        let inv_cov = a_cov.try_inverse().unwrap();
        let mut mu = DVector::zeros(dim);
        for (i, v) in means.iter().enumerate() {
            mu[2 * i] = v[0];
            mu[2 * i + 1] = v[1];
        }
        let w = &inv_mean * &mu;

        for &q in &[0.0, 0.123, 0.5, 0.777, 1.0] {
            let pred = model.predict(q).unwrap();
            let mut kstar = DMatrix::zeros(dim, 2);
            for (i, &s) in support.iter().enumerate() {
                let k = kernel.eval(&[q], &[s]);
                kstar[(2 * i, 0)] = k;
                kstar[(2 * i + 1, 1)] = k;
            }
            let mean_bf = kstar.transpose() * &w;
            let kss = kernel.eval(&[q], &[q]);
            let quad = kstar.transpose() * &inv_cov * &kstar;
            let scale = m as f64 / lambda_cov;
            for r in 0..2 {
                assert!(
                    (pred.mean[r] - mean_bf[r]).abs() < 1e-8,
                    "mean[{r}] mismatch at {q}"
                );
                for c in 0..2 {
                    let bf = scale * ((if r == c { kss } else { 0.0 }) - quad[(r, c)]);
                    assert!(
                        (pred.cov[(r, c)] - bf).abs() < 1e-8,
                        "cov[{r}{c}] mismatch at {q}: {} vs {bf}",
                        pred.cov[(r, c)]
                    );
                }
            }
        }
    }

    #[test]
    fn prediction_is_linear_in_the_stacked_means() {
        let reference = toy_reference(40);
        let (support, means1, covs) = raw_parts(&reference);
        let means2: Vec<Vector2<f64>> = means1
            .iter()
            .enumerate()
            .map(|(i, m)| Vector2::new(m[1] + 0.3 * i as f64 / 40.0, -m[0]))
            .collect();
        let (a, b) = (1.7, -0.4);
        let combo: Vec<Vector2<f64>> = means1
            .iter()
            .zip(&means2)
            .map(|(x, y)| x * a + y * b)
            .collect();
        let kernel = KernelParams::squared_exponential(1, 0.1, 1.0);
        let m1 = KmpModel::fit_raw(support.clone(), means1, covs.clone(), kernel.clone(), 1.0, 1.0)
            .unwrap();
        let m2 = KmpModel::fit_raw(support.clone(), means2, covs.clone(), kernel.clone(), 1.0, 1.0)
            .unwrap();
        let mc = KmpModel::fit_raw(support, combo, covs, kernel, 1.0, 1.0).unwrap();
        for &q in &[0.1, 0.45, 0.9] {
            let p1 = m1.predict(q).unwrap();
            let p2 = m2.predict(q).unwrap();
            let pc = mc.predict(q).unwrap();
            for r in 0..2 {
                let lin = a * p1.mean[r] + b * p2.mean[r];
                assert!((pc.mean[r] - lin).abs() < 1e-10, "nonlinear at {q} dim {r}");
            }
        }
    }

    #[test]
    fn tightening_a_via_never_loosens_passage() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let reference = toy_reference(40);
        for _ in 0..10 {
            let phase = rng.random_range(0.05..0.95);
            let mean = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
            let loose = ViaPoint {
                phase,
                mean,
                cov: Matrix2::identity() * rng.random_range(1e-3..1e-1),
            };
            let tight = ViaPoint {
                phase,
                mean,
                cov: loose.cov * 1e-3,
            };
            let cfg = KmpConfig::default();
            let ml = kmp_fit(&reference, &[loose.clone()], &cfg).unwrap();
            let mt = kmp_fit(&reference, &[tight], &cfg).unwrap();
            let el = (ml.predict(phase).unwrap().mean - mean).norm();
            let et = (mt.predict(phase).unwrap().mean - mean).norm();
            assert!(
                et <= el + 1e-9,
                "tightening increased miss: {et} > {el} at phase {phase}"
            );
        }
    }

    #[test]
    fn covariance_is_symmetric_psd_everywhere() {
        let reference = toy_reference(80);
        let model = kmp_fit(&reference, &[], &KmpConfig::default()).unwrap();
        for i in 0..=20 {
            let q = i as f64 / 20.0;
            let pred = model.predict(q).unwrap();
            assert_eq!(pred.cov[(0, 1)], pred.cov[(1, 0)]);
            let eig = pred.cov.symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e >= -1e-10), "eigenvalues {eig:?} at {q}");
        }
    }

    #[test]
    fn repeated_queries_are_bit_identical_and_extrapolation_is_flagged() {
        let reference = toy_reference(30);
        let model = kmp_fit(&reference, &[], &KmpConfig::default()).unwrap();
        let a = model.predict(0.3).unwrap();
        let b = model.predict(0.3).unwrap();
        assert_eq!(a.mean[0].to_bits(), b.mean[0].to_bits());
        assert_eq!(a.cov[(0, 0)].to_bits(), b.cov[(0, 0)].to_bits());
        assert!(!a.extrapolated);
        assert!(model.predict(1.2).unwrap().extrapolated);
        assert!(model.predict(-0.1).unwrap().extrapolated);
    }

    #[test]
    fn model_round_trips_through_persistence() {
        let reference = toy_reference(25);
        let via = ViaPoint {
            phase: 0.4,
            mean: Vector2::new(0.5, 0.2),
            cov: Matrix2::identity() * 1e-5,
        };
        let model = kmp_fit(&reference, &[via], &KmpConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kmp.json");
        crate::persist::save_model(&path, "kmp", &model).unwrap();
        let back: KmpModel = crate::persist::load_model(&path, "kmp").unwrap();
        for &q in &[0.0, 0.4, 0.81] {
            let a = model.predict(q).unwrap();
            let b = back.predict(q).unwrap();
            assert_eq!(a.mean[0].to_bits(), b.mean[0].to_bits());
            assert_eq!(a.mean[1].to_bits(), b.mean[1].to_bits());
        }
    }
}
