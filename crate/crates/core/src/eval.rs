//! Ranking metrics, cross-validated evaluation, and interval localization.
//!
//! AUC is computed from the rank statistic (probability a positive outranks
//! a negative, ties counted half), which equals the area under the
//! threshold-swept ROC curve; both are exposed so either can be checked
//! against the other.
//!
//! The evaluation protocol splits bags into stratified folds, trains on all
//! but one fold, scores the held-out fold, and pools the held-out scores
//! across rotations into one whole-corpus AUC per event — every bag is
//! scored exactly once, by a model that never saw it.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bags::{merge_spans, Bag, CorpusFeatures, FeatureMode, TimeSpan};
use crate::detector::{train_detector, LearnerSpec, TrainInfo};
use crate::error::{Error, Result};

/// One operating point of the ROC curve: classify positive at or above
/// `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// AUC plus the full threshold sweep it summarizes.
#[derive(Debug, Clone, PartialEq)]
pub struct RocAnalysis {
    pub auc: f64,
    pub curve: Vec<RocPoint>,
}

impl RocAnalysis {
    /// Trapezoidal area under the stored curve; agrees with `auc` to
    /// floating-point accuracy.
    pub fn trapezoid_area(&self) -> f64 {
        self.curve
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }
}

/// Computes AUC and the ROC curve of `scores` against boolean labels.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocAnalysis> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score in AUC input".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(format!(
            "AUC needs both labels, got {n_pos} positive / {n_neg} negative"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Rank statistic with average ranks over tied groups.
    let mut pos_rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share the average.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let group_pos = order[i..j].iter().filter(|&&idx| labels[idx]).count();
        pos_rank_sum += avg_rank * group_pos as f64;
        i = j;
    }
    let np = n_pos as f64;
    let nn = n_neg as f64;
    let auc = (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);

    // Threshold sweep from the strictest threshold down.
    let mut curve = Vec::with_capacity(order.len() + 1);
    curve.push(RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    });
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = order.len();
    while i > 0 {
        let mut j = i;
        while j > 0 && scores[order[j - 1]] == scores[order[i - 1]] {
            j -= 1;
        }
        for &idx in &order[j..i] {
            if labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        curve.push(RocPoint {
            threshold: scores[order[j]],
            fpr: fp as f64 / nn,
            tpr: tp as f64 / np,
        });
        i = j;
    }
    Ok(RocAnalysis { auc, curve })
}

/// Assigns each index to one of `k` folds, shuffling within each class so
/// every fold gets its share of positives and negatives.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    if labels.len() < k {
        return Err(Error::InvalidConfig(format!(
            "cannot cut {} items into {k} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0usize; labels.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (i, &item) in idx.iter().enumerate() {
            folds[item] = i % k;
        }
    }
    Ok(folds)
}

/// Thresholds instance scores and merges the surviving spans into disjoint
/// detected intervals.
pub fn localize(spans: &[TimeSpan], scores: &[f64], threshold: f64) -> Result<Vec<TimeSpan>> {
    if spans.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: spans.len(),
            got: scores.len(),
        });
    }
    if threshold.is_nan() {
        return Err(Error::InvalidConfig("threshold must not be NaN".into()));
    }
    let detected: Vec<TimeSpan> = spans
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s >= threshold)
        .map(|(span, _)| *span)
        .collect();
    Ok(merge_spans(&detected))
}

/// Cross-validation protocol parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KfoldConfig {
    pub folds: usize,
    pub seed: u64,
}

impl Default for KfoldConfig {
    fn default() -> Self {
        KfoldConfig { folds: 4, seed: 0 }
    }
}

/// Pooled held-out scoring of one event's bags.
#[derive(Debug, Clone)]
pub struct EventEval {
    pub event: String,
    /// Fold id per bag, in input bag order.
    pub folds: Vec<usize>,
    pub bag_ids: Vec<String>,
    pub bag_labels: Vec<bool>,
    /// Held-out bag scores, pooled across fold rotations, in bag order.
    pub bag_scores: Vec<f64>,
    /// Held-out per-instance scores, in bag order.
    pub instance_scores: Vec<Vec<f64>>,
    pub bag_roc: RocAnalysis,
    /// Instance-level ROC over the pooled instances, when truth was given.
    pub instance_roc: Option<RocAnalysis>,
    /// Training metadata of each fold's detector.
    pub fold_info: Vec<TrainInfo>,
}

impl EventEval {
    pub fn bag_auc(&self) -> f64 {
        self.bag_roc.auc
    }

    pub fn instance_auc(&self) -> Option<f64> {
        self.instance_roc.as_ref().map(|r| r.auc)
    }
}

/// Evaluates one event by stratified k-fold rotation with pooled held-out
/// scores.
///
/// `instance_truth`, when given, must hold one boolean per instance per bag
/// (in bag order); the pooled instance scores are then also reduced to a
/// localization ROC.
pub fn kfold_eval_event(
    event: &str,
    bags: &[Bag],
    instance_truth: Option<&[Vec<bool>]>,
    spec: &LearnerSpec,
    cfg: &KfoldConfig,
) -> Result<EventEval> {
    let labels: Vec<bool> = bags.iter().map(|b| b.positive).collect();
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos < cfg.folds || n_neg < cfg.folds {
        return Err(Error::InvalidConfig(format!(
            "event '{event}': {}-fold evaluation needs at least {} bags of \
             each class, got {n_pos} positive / {n_neg} negative",
            cfg.folds, cfg.folds
        )));
    }
    if let Some(truth) = instance_truth {
        if truth.len() != bags.len() {
            return Err(Error::DimensionMismatch {
                expected: bags.len(),
                got: truth.len(),
            });
        }
        for (bag, t) in bags.iter().zip(truth) {
            if t.len() != bag.len() {
                return Err(Error::DimensionMismatch {
                    expected: bag.len(),
                    got: t.len(),
                });
            }
        }
    }

    let folds = stratified_folds(&labels, cfg.folds, cfg.seed)?;
    let mut bag_scores = vec![f64::NAN; bags.len()];
    let mut instance_scores: Vec<Vec<f64>> = vec![Vec::new(); bags.len()];
    let mut fold_info = Vec::with_capacity(cfg.folds);
    for fold in 0..cfg.folds {
        let train: Vec<Bag> = bags
            .iter()
            .zip(&folds)
            .filter(|(_, &f)| f != fold)
            .map(|(b, _)| b.clone())
            .collect();
        let det = train_detector(&train, spec, cfg.seed.wrapping_add((fold as u64) << 32))?;
        for (i, bag) in bags.iter().enumerate() {
            if folds[i] != fold {
                continue;
            }
            let scores = det.score_instances(&bag.instances)?;
            bag_scores[i] = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            instance_scores[i] = scores;
        }
        fold_info.push(det.info);
    }

    let bag_roc = roc_auc(&bag_scores, &labels)?;
    let instance_roc = match instance_truth {
        Some(truth) => {
            let flat_scores: Vec<f64> = instance_scores.iter().flatten().copied().collect();
            let flat_truth: Vec<bool> = truth.iter().flatten().copied().collect();
            Some(roc_auc(&flat_scores, &flat_truth)?)
        }
        None => None,
    };

    Ok(EventEval {
        event: event.to_string(),
        folds,
        bag_ids: bags.iter().map(|b| b.clip_id.clone()).collect(),
        bag_labels: labels,
        bag_scores,
        instance_scores,
        bag_roc,
        instance_roc,
        fold_info,
    })
}

/// Feature-pipeline settings echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub mode: FeatureMode,
    pub components: usize,
    pub instance_dim: usize,
    pub segment_len: f64,
    pub segment_hop: f64,
    pub relevance: f64,
}

impl From<&CorpusFeatures> for FeatureSummary {
    fn from(c: &CorpusFeatures) -> Self {
        FeatureSummary {
            mode: c.mode,
            components: c.components,
            instance_dim: c.instance_dim(),
            segment_len: c.segment_len,
            segment_hop: c.segment_hop,
            relevance: c.relevance,
        }
    }
}

/// One bag's row in the report: where it was held out and how it scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagOutcome {
    pub id: String,
    pub fold: usize,
    pub positive: bool,
    pub score: f64,
}

/// Per-event results in serializable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub event: String,
    pub bags: usize,
    pub positives: usize,
    pub bag_auc: f64,
    pub instance_auc: Option<f64>,
    pub bag_outcomes: Vec<BagOutcome>,
}

/// Whole-evaluation summary: configuration, per-event results, and their
/// arithmetic means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub learner: LearnerSpec,
    pub feature: FeatureSummary,
    pub folds: usize,
    pub seed: u64,
    pub events: Vec<EventReport>,
    pub mean_bag_auc: f64,
    /// Present only when every event has an instance-level AUC.
    pub mean_instance_auc: Option<f64>,
}

/// Reduces per-event evaluations to the serializable report.
pub fn assemble_report(
    learner: &LearnerSpec,
    feature: &FeatureSummary,
    cfg: &KfoldConfig,
    evals: &[EventEval],
) -> Result<EvalReport> {
    if evals.is_empty() {
        return Err(Error::InvalidConfig("no events to report".into()));
    }
    let events: Vec<EventReport> = evals
        .iter()
        .map(|e| EventReport {
            event: e.event.clone(),
            bags: e.bag_ids.len(),
            positives: e.bag_labels.iter().filter(|&&l| l).count(),
            bag_auc: e.bag_auc(),
            instance_auc: e.instance_auc(),
            bag_outcomes: e
                .bag_ids
                .iter()
                .zip(&e.folds)
                .zip(&e.bag_labels)
                .zip(&e.bag_scores)
                .map(|(((id, &fold), &positive), &score)| BagOutcome {
                    id: id.clone(),
                    fold,
                    positive,
                    score,
                })
                .collect(),
        })
        .collect();
    let mean_bag_auc = events.iter().map(|e| e.bag_auc).sum::<f64>() / events.len() as f64;
    let mean_instance_auc = events
        .iter()
        .map(|e| e.instance_auc)
        .collect::<Option<Vec<f64>>>()
        .map(|aucs| aucs.iter().sum::<f64>() / aucs.len() as f64);
    Ok(EvalReport {
        learner: learner.clone(),
        feature: feature.clone(),
        folds: cfg.folds,
        seed: cfg.seed,
        events,
        mean_bag_auc,
        mean_instance_auc,
    })
}


#[cfg(test)]
mod protocol_tests {
    use super::*;
    use crate::detector::CostParam;
    use rand_distr::StandardNormal;

    fn spec() -> LearnerSpec {
        LearnerSpec::MiSvm {
            c: CostParam::Fixed(1.0),
            max_rounds: 50,
            folds: 4,
        }
    }

    /// Well-separated corpus with hidden instance truth.
    fn corpus(n_each: usize, mean: f64, seed: u64) -> (Vec<Bag>, Vec<Vec<bool>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bags = Vec::new();
        let mut truth = Vec::new();
        for i in 0..2 * n_each {
            let positive = i % 2 == 0;
            let n_hot = if positive { rng.random_range(1..=2) } else { 0 };
            let mut instances = Vec::new();
            let mut flags = Vec::new();
            for j in 0..4 {
                let hot = j < n_hot;
                let m = if hot { mean } else { 0.0 };
                instances.push(vec![
                    m + rng.sample::<f64, _>(StandardNormal),
                    m + rng.sample::<f64, _>(StandardNormal),
                ]);
                flags.push(hot);
            }
            let spans = (0..instances.len())
                .map(|j| TimeSpan::new(j as f64 * 0.5, j as f64 * 0.5 + 1.0))
                .collect();
            bags.push(Bag {
                clip_id: format!("bag{i:03}"),
                positive,
                spans,
                instances,
            });
            truth.push(flags);
        }
        (bags, truth)
    }

    fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let pos: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l)
            .map(|(&s, _)| s)
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| !l)
            .map(|(&s, _)| s)
            .collect();
        let mut total = 0.0;
        for &p in &pos {
            for &n in &neg {
                total += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn every_bag_is_held_out_exactly_once() {
        let (bags, _) = corpus(10, 5.0, 1);
        let cfg = KfoldConfig::default();
        let eval = kfold_eval_event("thing", &bags, None, &spec(), &cfg).unwrap();
        assert_eq!(eval.folds, {
            let labels: Vec<bool> = bags.iter().map(|b| b.positive).collect();
            stratified_folds(&labels, cfg.folds, cfg.seed).unwrap()
        });
        assert!(eval.bag_scores.iter().all(|s| s.is_finite()));
        assert_eq!(eval.fold_info.len(), cfg.folds);
        for fold in 0..cfg.folds {
            assert!(eval.folds.iter().any(|&f| f == fold));
        }
        // Instance scores cover every instance of every bag.
        for (bag, scores) in bags.iter().zip(&eval.instance_scores) {
            assert_eq!(bag.len(), scores.len());
        }
    }

    #[test]
    fn separated_corpus_reaches_perfect_pooled_auc() {
        let (bags, truth) = corpus(10, 8.0, 2);
        let eval =
            kfold_eval_event("thing", &bags, Some(&truth), &spec(), &KfoldConfig::default())
                .unwrap();
        assert_eq!(eval.bag_auc(), 1.0);
        assert!(eval.instance_auc().unwrap() >= 0.95);
    }

    #[test]
    fn pooled_aucs_match_pair_counting() {
        let (bags, truth) = corpus(8, 3.0, 3);
        let eval =
            kfold_eval_event("thing", &bags, Some(&truth), &spec(), &KfoldConfig::default())
                .unwrap();
        let bag_oracle = pair_count_auc(&eval.bag_scores, &eval.bag_labels);
        assert!((eval.bag_auc() - bag_oracle).abs() <= 1e-12);
        let flat_scores: Vec<f64> = eval.instance_scores.iter().flatten().copied().collect();
        let flat_truth: Vec<bool> = truth.iter().flatten().copied().collect();
        let inst_oracle = pair_count_auc(&flat_scores, &flat_truth);
        assert!((eval.instance_auc().unwrap() - inst_oracle).abs() <= 1e-12);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (bags, truth) = corpus(8, 4.0, 4);
        let cfg = KfoldConfig { folds: 4, seed: 9 };
        let a = kfold_eval_event("thing", &bags, Some(&truth), &spec(), &cfg).unwrap();
        let b = kfold_eval_event("thing", &bags, Some(&truth), &spec(), &cfg).unwrap();
        assert_eq!(a.bag_scores, b.bag_scores);
        assert_eq!(a.instance_scores, b.instance_scores);
        assert_eq!(a.folds, b.folds);
    }

    #[test]
    fn stratification_failure_is_an_error() {
        let (mut bags, _) = corpus(8, 4.0, 5);
        bags.retain(|b| !b.positive || b.clip_id == "bag000");
        assert!(matches!(
            kfold_eval_event("thing", &bags, None, &spec(), &KfoldConfig::default()),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn truth_shape_mismatch_is_an_error() {
        let (bags, mut truth) = corpus(8, 4.0, 6);
        truth.pop();
        assert!(matches!(
            kfold_eval_event(
                "thing",
                &bags,
                Some(&truth),
                &spec(),
                &KfoldConfig::default()
            ),
            Err(Error::DimensionMismatch { .. })
        ));
        let (bags, mut truth) = corpus(8, 4.0, 7);
        truth[0].pop();
        assert!(matches!(
            kfold_eval_event(
                "thing",
                &bags,
                Some(&truth),
                &spec(),
                &KfoldConfig::default()
            ),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn report_mean_is_the_arithmetic_mean() {
        let cfg = KfoldConfig::default();
        let mut evals = Vec::new();
        for (i, seed) in [(0usize, 10u64), (1, 11), (2, 12)] {
            let (bags, truth) = corpus(6, 2.0 + i as f64, seed);
            evals.push(
                kfold_eval_event(&format!("event{i}"), &bags, Some(&truth), &spec(), &cfg)
                    .unwrap(),
            );
        }
        let feature = FeatureSummary {
            mode: FeatureMode::F,
            components: 8,
            instance_dim: 8,
            segment_len: 1.0,
            segment_hop: 0.5,
            relevance: 16.0,
        };
        let report = assemble_report(&spec(), &feature, &cfg, &evals).unwrap();
        let hand_mean =
            report.events.iter().map(|e| e.bag_auc).sum::<f64>() / report.events.len() as f64;
        assert!((report.mean_bag_auc - hand_mean).abs() <= 1e-12);
        let hand_inst = report
            .events
            .iter()
            .map(|e| e.instance_auc.unwrap())
            .sum::<f64>()
            / report.events.len() as f64;
        assert!((report.mean_instance_auc.unwrap() - hand_inst).abs() <= 1e-12);
        assert_eq!(report.events.len(), 3);
        for (event, eval) in report.events.iter().zip(&evals) {
            assert_eq!(event.bags, eval.bag_ids.len());
            assert_eq!(
                event.positives,
                eval.bag_labels.iter().filter(|&&l| l).count()
            );
            for (outcome, id) in event.bag_outcomes.iter().zip(&eval.bag_ids) {
                assert_eq!(&outcome.id, id);
            }
        }

        // The report round-trips through JSON without loss.
        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn missing_instance_truth_leaves_instance_fields_empty() {
        let (bags, _) = corpus(6, 4.0, 13);
        let cfg = KfoldConfig::default();
        let eval = kfold_eval_event("thing", &bags, None, &spec(), &cfg).unwrap();
        assert!(eval.instance_roc.is_none());
        assert!(eval.instance_auc().is_none());
        let feature = FeatureSummary {
            mode: FeatureMode::F,
            components: 8,
            instance_dim: 8,
            segment_len: 1.0,
            segment_hop: 0.5,
            relevance: 16.0,
        };
        let report = assemble_report(&spec(), &feature, &cfg, &[eval]).unwrap();
        assert!(report.mean_instance_auc.is_none());
        assert!(report.events[0].instance_auc.is_none());
    }
}
