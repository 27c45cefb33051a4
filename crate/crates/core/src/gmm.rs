//! Gaussian-mixture encoding of pooled gait data and Gaussian-mixture
//! regression (GMR) for a phase-indexed reference distribution.
//!
//! The torque-angle curve of a gait cycle is a loop, so conditioning on
//! angle is ill-posed. The reference is therefore encoded over triples
//! (phase, angle, torque) and retrieved by conditioning on gait phase,
//! which yields a single-valued (angle, torque) mean and covariance per
//! phase-grid index.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::gpr::cholesky_with_jitter;
use crate::trajectory::{phase_grid, Joint};

/// Diagonal covariance floor, in standardized units.
pub const COVARIANCE_FLOOR: f64 = 1e-6;

/// EM stopping parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative log-likelihood gain below which EM stops.
    pub tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 300,
            tol: 1e-7,
        }
    }
}

/// A fitted Gaussian mixture in the original (de-standardized) units.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GmmModel {
    /// Mixture weights, summing to 1.
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Final log-likelihood of the training data.
    pub trained_loglik: f64,
    /// Log-likelihood after each EM iteration (non-decreasing).
    pub loglik_trace: Vec<f64>,
}

impl GmmModel {
    /// Component count L.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// True when the model has no components.
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Dimensionality D.
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, DVector::len)
    }

    /// Number of free parameters (for BIC).
    pub fn n_params(&self) -> usize {
        let (l, d) = (self.len(), self.dim());
        (l - 1) + l * d + l * d * (d + 1) / 2
    }
}

/// Per-component Cholesky machinery for Gaussian log-densities.
struct CompDensity {
    chol_l: DMatrix<f64>,
    log_norm: f64, // -0.5 (D ln 2π + ln det Σ)
}

impl CompDensity {
    fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows() as f64;
        let (chol_l, _) = cholesky_with_jitter(cov)?;
        let log_det: f64 = (0..cov.nrows()).map(|i| 2.0 * chol_l[(i, i)].ln()).sum();
        Ok(CompDensity {
            chol_l,
            log_norm: -0.5 * (d * std::f64::consts::TAU.ln() + log_det),
        })
    }

    fn log_pdf(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let mut z = x - mean;
        self.chol_l.solve_lower_triangular_mut(&mut z);
        self.log_norm - 0.5 * z.dot(&z)
    }
}

/// log(Σ exp(v_i)) with the usual max shift.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Standardization state for EM: per-dimension mean and scale.
struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    fn fit(data: &[Vec<f64>]) -> Self {
        let n = data.len() as f64;
        let d = data[0].len();
        let mut mean = vec![0.0; d];
        for x in data {
            for (m, &v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for x in data {
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
        Standardizer { mean, std }
    }

    fn apply(&self, data: &[Vec<f64>]) -> Vec<DVector<f64>> {
        data.iter()
            .map(|x| {
                DVector::from_iterator(
                    x.len(),
                    x.iter()
                        .zip(&self.mean)
                        .zip(&self.std)
                        .map(|((&v, &m), &s)| (v - m) / s),
                )
            })
            .collect()
    }
}

/// k-means++-style seeding: the first center is a uniformly drawn point,
/// each further center is drawn with probability proportional to the
/// squared distance to the nearest chosen center. Deterministic under the
/// seeded RNG.
fn kmeanspp_centers(data: &[DVector<f64>], l: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.len();
    let mut centers = Vec::with_capacity(l);
    centers.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = data
        .iter()
        .map(|x| (x - &data[centers[0]]).norm_squared())
        .collect();
    while centers.len() < l {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            // All residual distances zero (duplicate data): fall back to a
            // uniform draw.
            rng.random_range(0..n)
        } else {
            let mut u = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        centers.push(idx);
        for (dist, x) in d2.iter_mut().zip(data) {
            let nd = (x - &data[idx]).norm_squared();
            if nd < *dist {
                *dist = nd;
            }
        }
    }
    centers
}

struct Component {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// Applies the diagonal floor and symmetrizes; returns false when the
/// matrix is still not positive definite afterwards (true collapse).
fn repair_covariance(cov: &mut DMatrix<f64>) -> bool {
    let d = cov.nrows();
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = avg;
            cov[(j, i)] = avg;
        }
        if cov[(i, i)] < COVARIANCE_FLOOR {
            cov[(i, i)] = COVARIANCE_FLOOR;
        }
    }
    nalgebra::Cholesky::new(cov.clone()).is_some()
}

/// Fits a Gaussian mixture with EM in standardized space and returns the
/// model in original units.
///
/// Seeding is k-means++-style under `seed`; iterations stop when the
/// relative log-likelihood gain drops below `config.tol` or after
/// `config.max_iter` iterations. A component whose covariance cannot be
/// repaired by the diagonal floor (or whose responsibility mass vanishes)
/// is re-seeded once; a second collapse of the same component is an error.
pub fn gmm_fit(data: &[Vec<f64>], l: usize, seed: u64, config: &EmConfig) -> Result<GmmModel> {
    let n = data.len();
    if l < 1 {
        return Err(Error::config("component count L must be >= 1"));
    }
    let d = data.first().map_or(0, Vec::len);
    if !(2..=3).contains(&d) {
        return Err(Error::config(format!("GMM supports D in {{2, 3}}, got D={d}")));
    }
    if n < 10 * l {
        return Err(Error::data(format!(
            "GMM needs n >= 10 L data points, got n={n} for L={l}"
        )));
    }
    if data.iter().any(|x| x.len() != d || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::data("GMM data must be finite with constant dimension"));
    }
    if config.max_iter == 0 || !(config.tol.is_finite() && config.tol > 0.0) {
        return Err(Error::config("EM needs max_iter >= 1 and tol > 0"));
    }

    let standardizer = Standardizer::fit(data);
    let x = standardizer.apply(data);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Seed components from k-means++ centers with hard assignments.
    let centers = kmeanspp_centers(&x, l, &mut rng);
    let mut comps = init_components(&x, &centers)?;

    let mut log_resp = vec![vec![0.0f64; l]; n];
    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut reseeded = vec![false; l];

    for _iter in 0..config.max_iter {
        // E-step in log space.
        let densities = comps
            .iter()
            .map(|c| CompDensity::new(&c.cov))
            .collect::<Result<Vec<_>>>()?;
        let mut ll = 0.0;
        for (i, xi) in x.iter().enumerate() {
            for (k, (c, dens)) in comps.iter().zip(&densities).enumerate() {
                log_resp[i][k] = c.weight.ln() + dens.log_pdf(xi, &c.mean);
            }
            let norm = log_sum_exp(&log_resp[i]);
            if !norm.is_finite() {
                return Err(Error::numeric(
                    "EM responsibilities underflowed for a data point",
                ));
            }
            for r in &mut log_resp[i] {
                *r -= norm;
            }
            ll += norm;
        }

        // M-step.
        for k in 0..l {
            let resp: Vec<f64> = (0..n).map(|i| log_resp[i][k].exp()).collect();
            let mass: f64 = resp.iter().sum();
            let collapse_mass = mass < 1e-10 * n as f64;
            if !collapse_mass {
                let mut mean = DVector::zeros(d);
                for (xi, &r) in x.iter().zip(&resp) {
                    mean += xi * (r / mass);
                }
                let mut cov = DMatrix::zeros(d, d);
                for (xi, &r) in x.iter().zip(&resp) {
                    let c = xi - &mean;
                    cov += (&c * c.transpose()) * (r / mass);
                }
                let ok = repair_covariance(&mut cov);
                comps[k].weight = mass / n as f64;
                comps[k].mean = mean;
                comps[k].cov = cov;
                if ok {
                    continue;
                }
            }
            // Collapse: re-seed this component once, then give up.
            if reseeded[k] {
                return Err(Error::numeric(format!(
                    "mixture component {k} collapsed twice (covariance below floor)"
                )));
            }
            reseeded[k] = true;
            let idx = rng.random_range(0..n);
            comps[k].mean = x[idx].clone();
            let mut cov = data_covariance(&x);
            repair_covariance(&mut cov);
            comps[k].cov = cov;
            comps[k].weight = 1.0 / l as f64;
            let total: f64 = comps.iter().map(|c| c.weight).sum();
            for c in &mut comps {
                c.weight /= total;
            }
        }

        trace.push(ll);
        if prev_ll.is_finite() {
            let gain = ll - prev_ll;
            if gain.abs() <= config.tol * ll.abs().max(1.0) {
                prev_ll = ll;
                break;
            }
        }
        prev_ll = ll;
    }

    // De-standardize: μ = m + s∘μ̃, Σ_ij = s_i s_j Σ̃_ij. The log-likelihood
    // of the raw data differs from the standardized one by the fixed
    // Jacobian term −n·Σ ln s.
    let log_s_sum: f64 = standardizer.std.iter().map(|s| s.ln()).sum();
    let shift = -(n as f64) * log_s_sum;
    let means = comps
        .iter()
        .map(|c| {
            DVector::from_iterator(
                d,
                c.mean
                    .iter()
                    .zip(&standardizer.mean)
                    .zip(&standardizer.std)
                    .map(|((&v, &m), &s)| m + s * v),
            )
        })
        .collect();
    let covariances = comps
        .iter()
        .map(|c| {
            DMatrix::from_fn(d, d, |i, j| c.cov[(i, j)] * standardizer.std[i] * standardizer.std[j])
        })
        .collect();
    Ok(GmmModel {
        weights: comps.iter().map(|c| c.weight).collect(),
        means,
        covariances,
        trained_loglik: prev_ll + shift,
        loglik_trace: trace.iter().map(|v| v + shift).collect(),
    })
}

fn init_components(x: &[DVector<f64>], centers: &[usize]) -> Result<Vec<Component>> {
    let l = centers.len();
    let n = x.len();
    // Hard-assign each point to its nearest center.
    let mut assign = vec![0usize; n];
    for (i, xi) in x.iter().enumerate() {
        let mut best = (f64::INFINITY, 0usize);
        for (k, &c) in centers.iter().enumerate() {
            let d2 = (xi - &x[c]).norm_squared();
            if d2 < best.0 {
                best = (d2, k);
            }
        }
        assign[i] = best.1;
    }
    let d = x[0].len();
    let global_cov = data_covariance(x);
    let mut comps = Vec::with_capacity(l);
    for k in 0..l {
        let members: Vec<&DVector<f64>> = x
            .iter()
            .zip(&assign)
            .filter(|(_, &a)| a == k)
            .map(|(xi, _)| xi)
            .collect();
        let (mean, mut cov) = if members.len() < 2 {
            (x[centers[k]].clone(), global_cov.clone())
        } else {
            let m = members.len() as f64;
            let mut mean = DVector::zeros(d);
            for xi in &members {
                mean += *xi / m;
            }
            let mut cov = DMatrix::zeros(d, d);
            for xi in &members {
                let c = *xi - &mean;
                cov += (&c * c.transpose()) / m;
            }
            (mean, cov)
        };
        if !repair_covariance(&mut cov) {
            cov = global_cov.clone();
            if !repair_covariance(&mut cov) {
                return Err(Error::numeric("initial covariance not positive definite"));
            }
        }
        comps.push(Component {
            weight: members.len().max(1) as f64,
            mean,
            cov,
        });
    }
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in &mut comps {
        c.weight /= total;
    }
    Ok(comps)
}

fn data_covariance(x: &[DVector<f64>]) -> DMatrix<f64> {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut mean = DVector::zeros(d);
    for xi in x {
        mean += xi / n;
    }
    let mut cov = DMatrix::zeros(d, d);
    for xi in x {
        let c = xi - &mean;
        cov += (&c * c.transpose()) / n;
    }
    cov
}

/// Moment-matched GMR conditional of a mixture on a subset of dimensions.
///
/// `predictor_dims` selects the conditioned-on dimensions (a strict,
/// sorted, duplicate-free subset); `predictor` holds their values. Returns
/// the single-Gaussian (mean, covariance) over the remaining dimensions.
pub fn gmr_condition(
    model: &GmmModel,
    predictor: &[f64],
    predictor_dims: &[usize],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = model.dim();
    if model.is_empty() {
        return Err(Error::config("GMR needs a fitted model"));
    }
    if predictor_dims.is_empty()
        || predictor_dims.len() >= d
        || predictor_dims.windows(2).any(|w| w[1] <= w[0])
        || predictor_dims.iter().any(|&i| i >= d)
    {
        return Err(Error::config(
            "predictor dims must be a sorted strict subset of the model dimensions",
        ));
    }
    if predictor.len() != predictor_dims.len() || predictor.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("predictor values must be finite, one per predictor dim"));
    }
    let out_dims: Vec<usize> = (0..d).filter(|i| !predictor_dims.contains(i)).collect();
    let (p, q) = (predictor_dims.len(), out_dims.len());
    let x_in = DVector::from_column_slice(predictor);

    let mut log_w = Vec::with_capacity(model.len());
    let mut cond_means = Vec::with_capacity(model.len());
    let mut cond_covs = Vec::with_capacity(model.len());
    for ((weight, mean), cov) in model
        .weights
        .iter()
        .zip(&model.means)
        .zip(&model.covariances)
    {
        let mu_i = DVector::from_iterator(p, predictor_dims.iter().map(|&i| mean[i]));
        let mu_o = DVector::from_iterator(q, out_dims.iter().map(|&i| mean[i]));
        let s_ii = DMatrix::from_fn(p, p, |r, c| cov[(predictor_dims[r], predictor_dims[c])]);
        let s_oi = DMatrix::from_fn(q, p, |r, c| cov[(out_dims[r], predictor_dims[c])]);
        let s_oo = DMatrix::from_fn(q, q, |r, c| cov[(out_dims[r], out_dims[c])]);

        let (chol_l, _) = cholesky_with_jitter(&s_ii)?;
        let marg = CompDensity {
            log_norm: -0.5
                * (p as f64 * std::f64::consts::TAU.ln()
                    + (0..p).map(|i| 2.0 * chol_l[(i, i)].ln()).sum::<f64>()),
            chol_l: chol_l.clone(),
        };
        log_w.push(weight.ln() + marg.log_pdf(&x_in, &mu_i));

        // Gain = Σ_oi Σ_ii⁻¹ via two triangular solves on the transpose.
        let mut rhs = s_oi.transpose(); // p×q
        chol_l.solve_lower_triangular_mut(&mut rhs);
        chol_l.transpose().solve_upper_triangular_mut(&mut rhs);
        let gain = rhs.transpose(); // q×p
        cond_means.push(&mu_o + &gain * (&x_in - &mu_i));
        let mut cc = s_oo - gain * s_oi.transpose();
        // Symmetrize against round-off.
        for r in 0..q {
            for c in 0..r {
                let avg = 0.5 * (cc[(r, c)] + cc[(c, r)]);
                cc[(r, c)] = avg;
                cc[(c, r)] = avg;
            }
        }
        cond_covs.push(cc);
    }

    let norm = log_sum_exp(&log_w);
    if !norm.is_finite() {
        return Err(Error::numeric(
            "GMR responsibilities underflowed: predictor is too far from every component",
        ));
    }
    let resp: Vec<f64> = log_w.iter().map(|w| (w - norm).exp()).collect();

    let mut mean = DVector::zeros(q);
    for (h, m) in resp.iter().zip(&cond_means) {
        mean += m * *h;
    }
    let mut cov = DMatrix::zeros(q, q);
    for ((h, m), s) in resp.iter().zip(&cond_means).zip(&cond_covs) {
        let dm = m - &mean;
        cov += (s + &dm * dm.transpose()) * *h;
    }
    for r in 0..q {
        for c in 0..r {
            let avg = 0.5 * (cov[(r, c)] + cov[(c, r)]);
            cov[(r, c)] = avg;
            cov[(c, r)] = avg;
        }
    }
    Ok((mean, cov))
}

/// How the component count is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentCount {
    /// Use exactly this many components.
    Fixed(usize),
    /// Pick L in `[min, max]` by the Bayesian information criterion.
    Bic { min: usize, max: usize },
}

impl Default for ComponentCount {
    fn default() -> Self {
        ComponentCount::Bic { min: 3, max: 12 }
    }
}

/// Phase-indexed reference distribution retrieved by GMR.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceDistribution {
    pub joint: Joint,
    /// Strictly increasing phase grid of length M.
    pub index: Vec<f64>,
    /// Per-index (angle, torque) mean.
    pub means: Vec<DVector<f64>>,
    /// Per-index 2×2 PD covariance.
    pub covariances: Vec<DMatrix<f64>>,
    /// Standard deviation of pooled (angle, torque) data; converts the
    /// standardized via-point covariance into raw units downstream.
    pub output_std: [f64; 2],
}

impl ReferenceDistribution {
    /// Grid length M.
    pub fn len(&self) -> usize {
        self.index.len()
    }

    /// True when the reference holds no grid points.
    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Linearly interpolated reference mean at an arbitrary phase.
    pub fn mean_at(&self, phase: f64) -> DVector<f64> {
        DVector::from_iterator(
            2,
            (0..2).map(|d| {
                let col: Vec<f64> = self.means.iter().map(|m| m[d]).collect();
                crate::trajectory::interp(&self.index, &col, phase)
            }),
        )
    }

    /// Linearly interpolated reference covariance at an arbitrary phase
    /// (entrywise; PSD as a convex combination of PSD matrices).
    pub fn cov_at(&self, phase: f64) -> DMatrix<f64> {
        DMatrix::from_fn(2, 2, |r, c| {
            let col: Vec<f64> = self.covariances.iter().map(|m| m[(r, c)]).collect();
            crate::trajectory::interp(&self.index, &col, phase)
        })
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let m = self.index.len();
        if m == 0 || self.means.len() != m || self.covariances.len() != m {
            return Err(Error::data("reference distribution has inconsistent lengths"));
        }
        if self.index.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::data("reference index must be strictly increasing"));
        }
        for (i, cov) in self.covariances.iter().enumerate() {
            if nalgebra::Cholesky::new(cov.clone()).is_none() {
                return Err(Error::numeric(format!(
                    "reference covariance at index {i} is not positive definite"
                )));
            }
        }
        Ok(())
    }
}

/// Maximum pooled points used for BIC model selection; larger pools are
/// subsampled by a deterministic stride (the winning L is then refit on the
/// full pool).
const BIC_SELECTION_CAP: usize = 2000;

/// Pools (phase, angle, torque) triples of one joint across the corpus,
/// fits a GMM, and retrieves the reference distribution on a canonical
/// phase grid of `grid_size` points by conditioning on phase.
pub fn build_reference_distribution(
    corpus: &Corpus,
    joint: Joint,
    components: ComponentCount,
    seed: u64,
    grid_size: usize,
) -> Result<(ReferenceDistribution, GmmModel)> {
    if grid_size < 16 {
        return Err(Error::config(format!("grid_size must be >= 16, got {grid_size}")));
    }
    let mut data = Vec::new();
    for task in corpus.tasks() {
        for cycle in corpus.cycles(task, joint) {
            for i in 0..cycle.len() {
                data.push(vec![cycle.phase[i], cycle.angle[i], cycle.torque[i]]);
            }
        }
    }
    if data.is_empty() {
        return Err(Error::data(format!("corpus has no {joint} cycles")));
    }

    let em = EmConfig::default();
    let l = match components {
        ComponentCount::Fixed(l) => l,
        ComponentCount::Bic { min, max } => {
            if min < 1 || max < min {
                return Err(Error::config("BIC range must satisfy 1 <= min <= max"));
            }
            let selection: Vec<Vec<f64>> = if data.len() > BIC_SELECTION_CAP {
                let stride = data.len().div_ceil(BIC_SELECTION_CAP);
                data.iter().step_by(stride).cloned().collect()
            } else {
                data.clone()
            };
            let mut best: Option<(f64, usize)> = None;
            for l in min..=max {
                if selection.len() < 10 * l {
                    break;
                }
                let model = gmm_fit(&selection, l, seed, &em)?;
                let bic = -2.0 * model.trained_loglik
                    + model.n_params() as f64 * (selection.len() as f64).ln();
                if best.is_none_or(|(b, _)| bic < b) {
                    best = Some((bic, l));
                }
            }
            best.ok_or_else(|| {
                Error::data("too few pooled points for the smallest BIC candidate")
            })?
            .1
        }
    };

    let model = gmm_fit(&data, l, seed, &em)?;

    // Pooled output scale for downstream standardized quantities.
    let n = data.len() as f64;
    let mut out_mean = [0.0f64; 2];
    for x in &data {
        out_mean[0] += x[1] / n;
        out_mean[1] += x[2] / n;
    }
    let mut out_var = [0.0f64; 2];
    for x in &data {
        out_var[0] += (x[1] - out_mean[0]).powi(2) / n;
        out_var[1] += (x[2] - out_mean[1]).powi(2) / n;
    }
    let output_std = [
        out_var[0].sqrt().max(1e-12),
        out_var[1].sqrt().max(1e-12),
    ];

    let index = phase_grid(grid_size);
    let mut means = Vec::with_capacity(grid_size);
    let mut covariances = Vec::with_capacity(grid_size);
    for &p in &index {
        let (mean, mut cov) = gmr_condition(&model, &[p], &[0])?;
        // Floor in standardized units keeps every Σ̂_m PD.
        for d in 0..2 {
            let floor = COVARIANCE_FLOOR * output_std[d] * output_std[d];
            if cov[(d, d)] < floor {
                cov[(d, d)] = floor;
            }
        }
        means.push(mean);
        covariances.push(cov);
    }
    let reference = ReferenceDistribution {
        joint,
        index,
        means,
        covariances,
        output_std,
    };
    reference.validate()?;
    Ok((reference, model))
}
