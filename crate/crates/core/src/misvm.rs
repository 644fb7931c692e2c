//! Max-margin multiple-instance learning with label imputation.
//!
//! Instances inherit their bag's label, a linear SVM is trained on the
//! imputed labels, and positive-bag labels are re-imputed from the decision
//! function. A positive bag that loses all its positives gets its
//! highest-scoring instance forced positive, so every round keeps positive
//! bags feasible; negative-bag instances are never relabeled. The loop ends
//! at a fixed point, at a previously-seen labeling (which would cycle
//! forever), or at the round cap.
//!
//! The SVM itself is L2-regularized L1-hinge, solved in the dual by
//! coordinate descent with the bias folded in as a constant feature.

use std::collections::HashSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bags::Bag;
use crate::error::{Error, Result};
use crate::eval::{roc_auc, stratified_folds};
use crate::scale::Standardizer;

/// Coordinate-descent stopping rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Hard cap on passes over the data.
    pub max_epochs: usize,
    /// Stop once primal minus dual objective falls to this.
    pub gap_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_epochs: 1_000,
            gap_tol: 1e-3,
        }
    }
}

/// A trained linear decision function `w . x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Misclassification cost the model was trained with.
    pub c: f64,
    /// Coordinate-descent epochs actually run.
    pub epochs: usize,
    /// Final duality gap.
    pub duality_gap: f64,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(dot(&self.weights, x) + self.bias)
    }
}

/// Per-epoch objective values, for convergence checks.
#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub model: LinearModel,
    /// Dual objective after each epoch; non-decreasing.
    pub dual_objective: Vec<f64>,
    /// Primal objective after each epoch.
    pub primal_objective: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains a linear SVM on labeled instances.
pub fn train_linear_svm<X: AsRef<[f64]>>(
    xs: &[X],
    labels: &[bool],
    c: f64,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<LinearModel> {
    train_linear_svm_traced(xs, labels, c, seed, cfg).map(|t| t.model)
}

/// As `train_linear_svm`, also returning per-epoch objective values.
pub fn train_linear_svm_traced<X: AsRef<[f64]>>(
    xs: &[X],
    labels: &[bool],
    c: f64,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<SolverTrace> {
    if xs.is_empty() {
        return Err(Error::InvalidConfig("no training instances".into()));
    }
    if xs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: xs.len(),
        });
    }
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "misclassification cost must be positive, got {c}"
        )));
    }
    if cfg.max_epochs == 0 {
        return Err(Error::InvalidConfig("max_epochs must be positive".into()));
    }
    let dim = xs[0].as_ref().len();
    for x in xs {
        let x = x.as_ref();
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite training instance".into()));
        }
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::SingleClass(format!(
            "{n_pos} positive of {} instances",
            labels.len()
        )));
    }

    let n = xs.len();
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    // The bias is an extra always-one feature, so each instance's squared
    // norm picks up a +1.
    let q_ii: Vec<f64> = xs
        .iter()
        .map(|x| {
            let x = x.as_ref();
            dot(x, x) + 1.0
        })
        .collect();

    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dual_objective = Vec::new();
    let mut primal_objective = Vec::new();
    let mut epochs = 0;
    let mut gap = f64::INFINITY;

    for _ in 0..cfg.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut moved = false;
        for &i in &order {
            let xi = xs[i].as_ref();
            let g = y[i] * (dot(&w, xi) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            if pg.abs() <= 1e-12 {
                continue;
            }
            let updated = (alpha[i] - g / q_ii[i]).clamp(0.0, c);
            let delta = (updated - alpha[i]) * y[i];
            if delta != 0.0 {
                for (wd, xd) in w.iter_mut().zip(xi) {
                    *wd += delta * xd;
                }
                b += delta;
                alpha[i] = updated;
                moved = true;
            }
        }
        let reg = 0.5 * (dot(&w, &w) + b * b);
        let hinge: f64 = xs
            .iter()
            .zip(&y)
            .map(|(x, yi)| (1.0 - yi * (dot(&w, x.as_ref()) + b)).max(0.0))
            .sum();
        let alpha_sum: f64 = alpha.iter().sum();
        let dual = alpha_sum - reg;
        let primal = reg + c * hinge;
        dual_objective.push(dual);
        primal_objective.push(primal);
        gap = primal - dual;
        if gap <= cfg.gap_tol || !moved {
            break;
        }
    }

    Ok(SolverTrace {
        model: LinearModel {
            weights: w,
            bias: b,
            c,
            epochs,
            duality_gap: gap,
        },
        dual_objective,
        primal_objective,
    })
}

/// Imputation-loop parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiSvmConfig {
    pub c: f64,
    pub max_rounds: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for MiSvmConfig {
    fn default() -> Self {
        MiSvmConfig {
            c: 1.0,
            max_rounds: 50,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

/// Why the imputation loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiSvmTermination {
    /// Labels reached a fixed point.
    Converged,
    /// Labels revisited an earlier configuration.
    CycleDetected,
    /// Round cap hit first.
    RoundLimit,
}

/// A trained detector plus the label assignment it was trained on.
#[derive(Debug, Clone)]
pub struct MiSvmFit {
    pub model: LinearModel,
    /// Final imputed instance labels, one vector per bag in input order.
    /// Negative bags are all-false; every positive bag has at least one true.
    pub instance_labels: Vec<Vec<bool>>,
    pub rounds: usize,
    pub termination: MiSvmTermination,
}

/// Trains a detector from bag labels alone.
pub fn mi_svm_train(bags: &[Bag], cfg: &MiSvmConfig) -> Result<MiSvmFit> {
    if cfg.max_rounds == 0 {
        return Err(Error::InvalidConfig("max_rounds must be positive".into()));
    }
    validate_bags(bags)?;

    let xs: Vec<&[f64]> = bags
        .iter()
        .flat_map(|b| b.instances.iter().map(Vec::as_slice))
        .collect();
    let mut labels: Vec<Vec<bool>> = bags
        .iter()
        .map(|b| vec![b.positive; b.len()])
        .collect();

    let mut seen: HashSet<Vec<Vec<bool>>> = HashSet::new();
    let mut rounds = 0;
    loop {
        rounds += 1;
        let flat: Vec<bool> = labels.iter().flatten().copied().collect();
        let model = train_linear_svm(
            &xs,
            &flat,
            cfg.c,
            cfg.seed.wrapping_add(rounds as u64),
            &cfg.solver,
        )?;

        let mut next = labels.clone();
        for (bag, bag_labels) in bags.iter().zip(next.iter_mut()) {
            if !bag.positive {
                continue;
            }
            let scores: Vec<f64> = bag
                .instances
                .iter()
                .map(|x| model.decision(x))
                .collect::<Result<_>>()?;
            for (l, &s) in bag_labels.iter_mut().zip(&scores) {
                *l = s >= 0.0;
            }
            if !bag_labels.iter().any(|&l| l) {
                let best = scores
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(j, _)| j)
                    .unwrap();
                bag_labels[best] = true;
            }
        }

        let termination = if next == labels {
            Some(MiSvmTermination::Converged)
        } else if rounds >= cfg.max_rounds {
            Some(MiSvmTermination::RoundLimit)
        } else {
            seen.insert(std::mem::take(&mut labels));
            if seen.contains(&next) {
                Some(MiSvmTermination::CycleDetected)
            } else {
                None
            }
        };
        match termination {
            Some(t) => {
                return Ok(MiSvmFit {
                    model,
                    instance_labels: next,
                    rounds,
                    termination: t,
                });
            }
            None => labels = next,
        }
    }
}

fn validate_bags(bags: &[Bag]) -> Result<()> {
    if bags.is_empty() {
        return Err(Error::InvalidConfig("no bags to train on".into()));
    }
    let dim = bags[0].dim();
    for bag in bags {
        if bag.is_empty() {
            return Err(Error::EmptyBag(bag.clip_id.clone()));
        }
        for x in &bag.instances {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
        }
    }
    let n_pos = bags.iter().filter(|b| b.positive).count();
    if n_pos == 0 || n_pos == bags.len() {
        return Err(Error::SingleClass(format!(
            "{n_pos} positive of {} bags",
            bags.len()
        )));
    }
    Ok(())
}

/// Cross-validation parameters for cost selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CSelectConfig {
    pub folds: usize,
    pub max_rounds: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for CSelectConfig {
    fn default() -> Self {
        CSelectConfig {
            folds: 4,
            max_rounds: 50,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

/// Result of a grid search over the misclassification cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CSelection {
    /// Winning cost: highest mean held-out bag AUC, smallest cost on ties.
    pub c: f64,
    /// `(cost, mean AUC)` for the deduplicated grid in ascending order.
    pub grid_auc: Vec<(f64, f64)>,
}

/// Picks the misclassification cost by stratified cross-validation on bags.
///
/// Folds, seeds, and scaling are identical for every grid entry, so the
/// comparison is paired; duplicate grid entries cannot change the result.
pub fn select_c(bags: &[Bag], grid: &[f64], cfg: &CSelectConfig) -> Result<CSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty cost grid".into()));
    }
    if grid.iter().any(|c| !c.is_finite() || *c <= 0.0) {
        return Err(Error::InvalidConfig(
            "cost grid entries must be positive and finite".into(),
        ));
    }
    validate_bags(bags)?;
    let mut grid: Vec<f64> = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let labels: Vec<bool> = bags.iter().map(|b| b.positive).collect();
    let k = cfg.folds;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos < k || n_neg < k {
        return Err(Error::InvalidConfig(format!(
            "{k}-fold cost selection needs at least {k} bags of each class \
             (got {n_pos} positive, {n_neg} negative)"
        )));
    }
    let folds = stratified_folds(&labels, k, cfg.seed)?;

    let mut auc_sums = vec![0.0f64; grid.len()];
    for fold in 0..k {
        let train: Vec<&Bag> = bags
            .iter()
            .zip(&folds)
            .filter(|(_, &f)| f != fold)
            .map(|(b, _)| b)
            .collect();
        let test: Vec<&Bag> = bags
            .iter()
            .zip(&folds)
            .filter(|(_, &f)| f == fold)
            .map(|(b, _)| b)
            .collect();
        let scaler = Standardizer::fit(
            train
                .iter()
                .flat_map(|b| b.instances.iter().map(Vec::as_slice)),
        )?;
        let train_std: Vec<Bag> = train.iter().map(|b| standardize_bag(b, &scaler)).collect();
        let test_labels: Vec<bool> = test.iter().map(|b| b.positive).collect();
        for (gi, &c) in grid.iter().enumerate() {
            let fit = mi_svm_train(
                &train_std,
                &MiSvmConfig {
                    c,
                    max_rounds: cfg.max_rounds,
                    seed: cfg.seed.wrapping_add((fold as u64) << 32),
                    solver: cfg.solver.clone(),
                },
            )?;
            let scores: Vec<f64> = test
                .iter()
                .map(|b| {
                    b.instances
                        .iter()
                        .map(|x| fit.model.decision(&scaler.transform(x)))
                        .try_fold(f64::NEG_INFINITY, |acc, s| s.map(|v| acc.max(v)))
                })
                .collect::<Result<_>>()?;
            auc_sums[gi] += roc_auc(&scores, &test_labels)?.auc;
        }
    }

    let grid_auc: Vec<(f64, f64)> = grid
        .iter()
        .zip(&auc_sums)
        .map(|(&c, &s)| (c, s / k as f64))
        .collect();
    let mut best = 0;
    for (i, &(_, auc)) in grid_auc.iter().enumerate().skip(1) {
        if auc > grid_auc[best].1 {
            best = i;
        }
    }
    Ok(CSelection {
        c: grid_auc[best].0,
        grid_auc,
    })
}

pub(crate) fn standardize_bag(bag: &Bag, scaler: &Standardizer) -> Bag {
    Bag {
        clip_id: bag.clip_id.clone(),
        positive: bag.positive,
        spans: bag.spans.clone(),
        instances: bag.instances.iter().map(|x| scaler.transform(x)).collect(),
    }
}
