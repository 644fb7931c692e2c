//! Diagonal-covariance Gaussian mixtures: the universal background model
//! and the two segment summaries derived from it.
//!
//! A segment of cepstral frames is summarized either by its average
//! component-posterior vector (a point on the probability simplex) or by
//! relevance-weighted adapted component means, which interpolate between the
//! background means and the segment's own posterior-weighted means.
//!
//! All densities are evaluated in the log domain; posteriors go through
//! log-sum-exp so extreme frames cannot underflow to a 0/0.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of the global per-dimension variance used as the variance floor.
const VARIANCE_FLOOR_FACTOR: f64 = 1e-4;
/// Absolute variance floor for dimensions with no spread at all.
const VARIANCE_FLOOR_ABS: f64 = 1e-10;
/// Mixture weights are clamped here and renormalized, never allowed to die.
const WEIGHT_FLOOR: f64 = 1e-8;
/// Below this soft occupancy a component keeps its prior mean under
/// adaptation instead of dividing by a vanishing count.
const MIN_ADAPT_OCCUPANCY: f64 = 1e-8;
/// EM needs this many frames per component.
const FRAMES_PER_COMPONENT: usize = 10;

/// A diagonal-covariance Gaussian mixture model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    components: usize,
    dim: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl Gmm {
    /// Builds a mixture after checking shapes, the weight simplex, and
    /// variance positivity.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let components = weights.len();
        if components == 0 {
            return Err(Error::InvalidConfig(
                "mixture needs at least one component".into(),
            ));
        }
        if means.len() != components || variances.len() != components {
            return Err(Error::DimensionMismatch {
                expected: components,
                got: means.len().min(variances.len()),
            });
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::InvalidConfig(
                "mixture dimension must be positive".into(),
            ));
        }
        for (m, v) in means.iter().zip(&variances) {
            if m.len() != dim || v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.len().min(v.len()),
                });
            }
            if !m.iter().all(|x| x.is_finite()) {
                return Err(Error::Numeric("non-finite mixture mean".into()));
            }
            if !v.iter().all(|x| x.is_finite() && *x > 0.0) {
                return Err(Error::Numeric(
                    "mixture variances must be positive and finite".into(),
                ));
            }
        }
        let sum: f64 = weights.iter().sum();
        if !weights.iter().all(|w| w.is_finite() && *w > 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Numeric(format!(
                "mixture weights must be positive and sum to 1 (sum = {sum})"
            )));
        }
        Ok(Gmm {
            components,
            dim,
            weights,
            means,
            variances,
        })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    /// Precomputes per-component log normalizers for repeated scoring.
    pub fn scorer(&self) -> GmmScorer<'_> {
        GmmScorer::new(self)
    }

    /// Posterior probability of each component given one frame.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.scorer().posterior(x))
    }

    /// Log density of one frame under the mixture.
    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.scorer().log_likelihood(x))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Cached log-domain normalizers for scoring many frames against one model.
pub struct GmmScorer<'a> {
    gmm: &'a Gmm,
    /// log w_k - 0.5 * sum_d log(2 pi var_kd)
    log_bias: Vec<f64>,
    /// 1 / (2 var_kd)
    inv_two_var: Vec<Vec<f64>>,
}

impl<'a> GmmScorer<'a> {
    fn new(gmm: &'a Gmm) -> Self {
        let log_bias = gmm
            .weights
            .iter()
            .zip(&gmm.variances)
            .map(|(w, var)| {
                let log_norm: f64 = var
                    .iter()
                    .map(|v| (std::f64::consts::TAU * v).ln())
                    .sum();
                w.ln() - 0.5 * log_norm
            })
            .collect();
        let inv_two_var = gmm
            .variances
            .iter()
            .map(|var| var.iter().map(|v| 1.0 / (2.0 * v)).collect())
            .collect();
        GmmScorer {
            gmm,
            log_bias,
            inv_two_var,
        }
    }

    pub fn components(&self) -> usize {
        self.gmm.components
    }

    /// Writes log(w_k p_k(x)) into `out`.
    pub fn log_joint_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.gmm.dim);
        debug_assert_eq!(out.len(), self.gmm.components);
        for (k, slot) in out.iter_mut().enumerate() {
            let mean = &self.gmm.means[k];
            let itv = &self.inv_two_var[k];
            let mut quad = 0.0;
            for d in 0..x.len() {
                let diff = x[d] - mean[d];
                quad += diff * diff * itv[d];
            }
            *slot = self.log_bias[k] - quad;
        }
    }

    /// Writes the component posteriors into `out`, returning the frame's
    /// log likelihood under the mixture.
    pub fn posterior_into(&self, x: &[f64], out: &mut [f64]) -> f64 {
        self.log_joint_into(x, out);
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in out.iter_mut() {
            *v /= sum;
        }
        max + sum.ln()
    }

    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.gmm.components];
        self.posterior_into(x, &mut out);
        out
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let mut out = vec![0.0; self.gmm.components];
        self.log_joint_into(x, &mut out);
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = out.iter().map(|v| (v - max).exp()).sum();
        max + sum.ln()
    }
}

/// Background-model training parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UbmConfig {
    pub components: usize,
    pub seed: u64,
    /// Maximum EM iterations.
    pub max_iters: usize,
    /// Stop once the average log likelihood improves by less than this.
    pub tol: f64,
    /// Training frames are subsampled to at most this many (0 = no cap).
    pub max_frames: usize,
}

impl Default for UbmConfig {
    fn default() -> Self {
        UbmConfig {
            components: 64,
            seed: 0,
            max_iters: 50,
            tol: 1e-5,
            max_frames: 500_000,
        }
    }
}

/// A trained background model together with its fitting trace.
#[derive(Debug, Clone)]
pub struct UbmTraining {
    pub gmm: Gmm,
    /// Average per-frame log likelihood measured at the start of each EM
    /// iteration. Non-decreasing up to floor adjustments.
    pub avg_log_likelihood: Vec<f64>,
    /// Whether the tolerance was reached before the iteration cap.
    pub converged: bool,
    /// Frames actually used after subsampling.
    pub frames_used: usize,
}

/// Fits a diagonal-covariance mixture with EM from a k-means++ start.
pub fn train_ubm(frames: &[Vec<f64>], cfg: &UbmConfig) -> Result<UbmTraining> {
    if cfg.components == 0 {
        return Err(Error::InvalidConfig(
            "need at least one mixture component".into(),
        ));
    }
    if cfg.max_iters == 0 {
        return Err(Error::InvalidConfig("max_iters must be positive".into()));
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::InvalidConfig("tol must be non-negative".into()));
    }
    let needed = cfg.components * FRAMES_PER_COMPONENT;
    if frames.len() < needed {
        return Err(Error::TooFewFrames {
            needed,
            components: cfg.components,
            got: frames.len(),
        });
    }
    let dim = frames[0].len();
    if dim == 0 {
        return Err(Error::InvalidConfig("frames must be non-empty".into()));
    }
    for f in frames {
        if f.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.len(),
            });
        }
        if !f.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite value in training frames".into()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Subsample once, keeping temporal order for reproducibility.
    let work: Vec<&[f64]> = if cfg.max_frames > 0 && frames.len() > cfg.max_frames {
        let mut idx = rand::seq::index::sample(&mut rng, frames.len(), cfg.max_frames).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| frames[i].as_slice()).collect()
    } else {
        frames.iter().map(|f| f.as_slice()).collect()
    };
    let t = work.len();

    // Global per-dimension variance sets the floor.
    let mut global_mean = vec![0.0; dim];
    for x in &work {
        for d in 0..dim {
            global_mean[d] += x[d];
        }
    }
    for m in &mut global_mean {
        *m /= t as f64;
    }
    let mut global_var = vec![0.0; dim];
    for x in &work {
        for d in 0..dim {
            let diff = x[d] - global_mean[d];
            global_var[d] += diff * diff;
        }
    }
    let var_floor: Vec<f64> = global_var
        .iter()
        .map(|v| (VARIANCE_FLOOR_FACTOR * v / t as f64).max(VARIANCE_FLOOR_ABS))
        .collect();

    let centers = kmeans_centers(&work, cfg.components, &mut rng);

    // Initial mixture statistics from a hard assignment over all frames.
    let g = cfg.components;
    let mut counts = vec![0usize; g];
    let mut sums = vec![vec![0.0; dim]; g];
    let mut sq_sums = vec![vec![0.0; dim]; g];
    for x in &work {
        let k = nearest_center(x, &centers);
        counts[k] += 1;
        for d in 0..dim {
            sums[k][d] += x[d];
            sq_sums[k][d] += x[d] * x[d];
        }
    }
    let mut weights = vec![0.0; g];
    let mut means = vec![vec![0.0; dim]; g];
    let mut variances = vec![vec![0.0; dim]; g];
    for k in 0..g {
        weights[k] = (counts[k] as f64 / t as f64).max(WEIGHT_FLOOR);
        if counts[k] == 0 {
            means[k] = centers[k].clone();
            for d in 0..dim {
                variances[k][d] = (global_var[d] / t as f64).max(var_floor[d]);
            }
            continue;
        }
        let n = counts[k] as f64;
        for d in 0..dim {
            means[k][d] = sums[k][d] / n;
            let v = sq_sums[k][d] / n - means[k][d] * means[k][d];
            variances[k][d] = v.max(var_floor[d]);
        }
    }
    renormalize(&mut weights);
    let mut gmm = Gmm::new(weights, means, variances)?;

    // EM proper.
    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;
    let mut resp = vec![0.0; g];
    for _ in 0..cfg.max_iters {
        let scorer = gmm.scorer();
        let mut ll_sum = 0.0;
        let mut occ = vec![0.0; g];
        let mut sum_x = vec![vec![0.0; dim]; g];
        let mut sum_x2 = vec![vec![0.0; dim]; g];
        for x in &work {
            ll_sum += scorer.posterior_into(x, &mut resp);
            for k in 0..g {
                let r = resp[k];
                if r == 0.0 {
                    continue;
                }
                occ[k] += r;
                let (sx, sx2) = (&mut sum_x[k], &mut sum_x2[k]);
                for d in 0..dim {
                    sx[d] += r * x[d];
                    sx2[d] += r * x[d] * x[d];
                }
            }
        }
        drop(scorer);
        let avg_ll = ll_sum / t as f64;
        if !avg_ll.is_finite() {
            return Err(Error::Numeric(
                "EM log likelihood became non-finite".into(),
            ));
        }
        let done = history
            .last()
            .is_some_and(|prev: &f64| avg_ll - prev < cfg.tol);
        history.push(avg_ll);

        let mut weights = vec![0.0; g];
        let mut means = gmm.means().to_vec();
        let mut variances = gmm.variances().to_vec();
        for k in 0..g {
            weights[k] = (occ[k] / t as f64).max(WEIGHT_FLOOR);
            if occ[k] <= 1e-12 {
                continue; // starved component keeps its parameters
            }
            for d in 0..dim {
                means[k][d] = sum_x[k][d] / occ[k];
                let v = sum_x2[k][d] / occ[k] - means[k][d] * means[k][d];
                variances[k][d] = v.max(var_floor[d]);
            }
        }
        renormalize(&mut weights);
        gmm = Gmm::new(weights, means, variances)?;

        if done {
            converged = true;
            break;
        }
    }

    Ok(UbmTraining {
        gmm,
        avg_log_likelihood: history,
        converged,
        frames_used: t,
    })
}

fn renormalize(weights: &mut [f64]) {
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn nearest_center(x: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// k-means++ seeding plus a few Lloyd rounds, run on a bounded subsample.
fn kmeans_centers(work: &[&[f64]], g: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let pool_size = work.len().min((20 * g).max(2_000));
    let pool: Vec<&[f64]> = if pool_size < work.len() {
        let mut idx = rand::seq::index::sample(rng, work.len(), pool_size).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| work[i]).collect()
    } else {
        work.to_vec()
    };

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(g);
    centers.push(pool[rng.random_range(0..pool.len())].to_vec());
    let mut d2: Vec<f64> = pool.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < g {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = pool.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..pool.len())
        };
        centers.push(pool[next].to_vec());
        for (i, x) in pool.iter().enumerate() {
            let d = sq_dist(x, centers.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }

    let dim = pool[0].len();
    for _ in 0..10 {
        let mut counts = vec![0usize; g];
        let mut sums = vec![vec![0.0; dim]; g];
        for x in &pool {
            let k = nearest_center(x, &centers);
            counts[k] += 1;
            for d in 0..dim {
                sums[k][d] += x[d];
            }
        }
        let mut moved = false;
        for k in 0..g {
            if counts[k] == 0 {
                // Re-seed a starved center on the point farthest from its
                // nearest current center.
                let far = (0..pool.len())
                    .max_by(|&a, &b| {
                        let da = sq_dist(pool[a], &centers[nearest_center(pool[a], &centers)]);
                        let db = sq_dist(pool[b], &centers[nearest_center(pool[b], &centers)]);
                        da.total_cmp(&db)
                    })
                    .unwrap();
                centers[k] = pool[far].to_vec();
                moved = true;
                continue;
            }
            for d in 0..dim {
                let c = sums[k][d] / counts[k] as f64;
                if c != centers[k][d] {
                    moved = true;
                }
                centers[k][d] = c;
            }
        }
        if !moved {
            break;
        }
    }
    centers
}

/// Average component posterior over a segment: a point on the simplex.
pub fn f_features(gmm: &Gmm, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
    if frames.is_empty() {
        return Err(Error::EmptySegment);
    }
    let scorer = gmm.scorer();
    let mut acc = vec![0.0; gmm.components()];
    let mut post = vec![0.0; gmm.components()];
    for x in frames {
        if x.len() != gmm.dim() {
            return Err(Error::DimensionMismatch {
                expected: gmm.dim(),
                got: x.len(),
            });
        }
        scorer.posterior_into(x, &mut post);
        for (a, p) in acc.iter_mut().zip(&post) {
            *a += p;
        }
    }
    let t = frames.len() as f64;
    for a in &mut acc {
        *a /= t;
    }
    Ok(acc)
}

pub(crate) fn f_from_posteriors(components: usize, posteriors: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; components];
    for post in posteriors {
        for (a, p) in acc.iter_mut().zip(post) {
            *a += p;
        }
    }
    let t = posteriors.len() as f64;
    for a in &mut acc {
        *a /= t;
    }
    acc
}

/// Relevance-weighted mean adaptation of every component toward a segment,
/// returned as the concatenation of the adapted means, component-major.
///
/// With soft occupancy `n_k` and relevance `r`, each mean moves to
/// `n_k/(n_k+r) * E_k + r/(n_k+r) * m_k` where `E_k` is the segment's
/// posterior-weighted mean. Components the segment barely touches keep the
/// background mean exactly.
pub fn map_adapt_means(gmm: &Gmm, frames: &[Vec<f64>], relevance: f64) -> Result<Vec<f64>> {
    if frames.is_empty() {
        return Err(Error::EmptySegment);
    }
    if !relevance.is_finite() || relevance < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "relevance factor must be finite and non-negative, got {relevance}"
        )));
    }
    let scorer = gmm.scorer();
    let g = gmm.components();
    let dim = gmm.dim();
    let mut post = vec![0.0; g];
    let mut occ = vec![0.0; g];
    let mut weighted = vec![vec![0.0; dim]; g];
    for x in frames {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        scorer.posterior_into(x, &mut post);
        for k in 0..g {
            let r = post[k];
            occ[k] += r;
            for d in 0..dim {
                weighted[k][d] += r * x[d];
            }
        }
    }
    Ok(blend_adapted_means(gmm, &occ, &weighted, relevance))
}

pub(crate) fn blend_adapted_means(
    gmm: &Gmm,
    occ: &[f64],
    weighted: &[Vec<f64>],
    relevance: f64,
) -> Vec<f64> {
    let dim = gmm.dim();
    let mut out = Vec::with_capacity(gmm.components() * dim);
    for k in 0..gmm.components() {
        let prior = &gmm.means()[k];
        if occ[k] < MIN_ADAPT_OCCUPANCY {
            out.extend_from_slice(prior);
            continue;
        }
        let alpha = occ[k] / (occ[k] + relevance);
        for d in 0..dim {
            let e = weighted[k][d] / occ[k];
            out.push(alpha * e + (1.0 - alpha) * prior[d]);
        }
    }
    out
}
