//! Backpropagation multiple-instance learning.
//!
//! A single-hidden-layer network with logistic-sigmoid activations on both
//! layers scores instances in (0,1). A bag's error is measured only at its
//! highest-scoring instance: for target `d` (1 positive, 0 negative) the
//! divergence is `E = (max_j o_j - d)^2 / 2`. Training backpropagates each
//! bag's error through that maximal instance alone and applies one gradient
//! step per bag, so the network learns from weak bag labels without knowing
//! which instance carries the event.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bags::Bag;
use crate::error::{Error, Result};

/// Numerically stable logistic sigmoid.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Single-hidden-layer scoring network.
///
/// Outputs lie in (0,1) for any finite input (extreme pre-activations can
/// round to the interval ends in floating point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilNet {
    /// `hidden x input` weight matrix, row per hidden unit.
    hidden_w: Vec<Vec<f64>>,
    hidden_b: Vec<f64>,
    out_w: Vec<f64>,
    out_b: f64,
}

impl MilNet {
    /// Builds a network with uniform `[-a, a]` weights, `a =
    /// sqrt(6/(fan_in+fan_out))` per layer, and zero biases.
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Result<MilNet> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::InvalidConfig(format!(
                "network needs positive dimensions, got {input_dim} inputs, {hidden} hidden units"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a_hidden = (6.0 / (input_dim + hidden) as f64).sqrt();
        let hidden_w = (0..hidden)
            .map(|_| {
                (0..input_dim)
                    .map(|_| rng.random_range(-a_hidden..=a_hidden))
                    .collect()
            })
            .collect();
        let a_out = (6.0 / (hidden + 1) as f64).sqrt();
        let out_w = (0..hidden)
            .map(|_| rng.random_range(-a_out..=a_out))
            .collect();
        Ok(MilNet {
            hidden_w,
            hidden_b: vec![0.0; hidden],
            out_w,
            out_b: 0.0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden_w[0].len()
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden_w.len()
    }

    /// Total number of trainable parameters.
    pub fn param_count(&self) -> usize {
        let h = self.hidden_units();
        h * self.input_dim() + h + h + 1
    }

    /// Instance score in (0,1).
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward_parts(x)?.output)
    }

    fn forward_parts(&self, x: &[f64]) -> Result<Activations> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let hidden: Vec<f64> = self
            .hidden_w
            .iter()
            .zip(&self.hidden_b)
            .map(|(row, b)| sigmoid(row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b))
            .collect();
        let pre_out = self
            .out_w
            .iter()
            .zip(&hidden)
            .map(|(w, h)| w * h)
            .sum::<f64>()
            + self.out_b;
        Ok(Activations {
            hidden,
            output: sigmoid(pre_out),
        })
    }

    /// Bag score: exact maximum over instance scores.
    pub fn predict_bag(&self, instances: &[Vec<f64>]) -> Result<f64> {
        self.bag_max(instances).map(|(score, _)| score)
    }

    fn bag_max(&self, instances: &[Vec<f64>]) -> Result<(f64, usize)> {
        if instances.is_empty() {
            return Err(Error::EmptySegment);
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for (j, x) in instances.iter().enumerate() {
            let o = self.forward(x)?;
            // Strict comparison keeps the first index on ties.
            if o > best.0 {
                best = (o, j);
            }
        }
        Ok(best)
    }

    /// Bag divergence `(max_j o_j - d)^2 / 2` for target `d` (`positive` maps
    /// to 1), plus the index of the maximal instance (first index on ties).
    pub fn bag_divergence(&self, instances: &[Vec<f64>], positive: bool) -> Result<(f64, usize)> {
        let (o, j) = self.bag_max(instances)?;
        let d = if positive { 1.0 } else { 0.0 };
        Ok((0.5 * (o - d) * (o - d), j))
    }

    /// Gradient of the bag divergence with respect to every parameter, in
    /// `flatten` order. Only the maximal instance contributes.
    pub fn bag_gradient(&self, instances: &[Vec<f64>], positive: bool) -> Result<Vec<f64>> {
        let (_, j) = self.bag_max(instances)?;
        let x = &instances[j];
        let acts = self.forward_parts(x)?;
        let d = if positive { 1.0 } else { 0.0 };
        let o = acts.output;
        let delta_out = (o - d) * o * (1.0 - o);

        let h = self.hidden_units();
        let dim = self.input_dim();
        let mut grad = vec![0.0; self.param_count()];
        for (k, (&hk, &vk)) in acts.hidden.iter().zip(&self.out_w).enumerate() {
            let delta_h = delta_out * vk * hk * (1.0 - hk);
            let row = &mut grad[k * dim..(k + 1) * dim];
            for (g, &xv) in row.iter_mut().zip(x) {
                *g = delta_h * xv;
            }
            grad[h * dim + k] = delta_h;
            grad[h * dim + h + k] = delta_out * hk;
        }
        grad[h * dim + h + h] = delta_out;
        Ok(grad)
    }

    /// Parameters as one vector: hidden weights row-major, hidden biases,
    /// output weights, output bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for row in &self.hidden_w {
            flat.extend_from_slice(row);
        }
        flat.extend_from_slice(&self.hidden_b);
        flat.extend_from_slice(&self.out_w);
        flat.push(self.out_b);
        flat
    }

    /// Rebuilds a network from `flatten` output with the given shape.
    pub fn from_flat(input_dim: usize, hidden: usize, flat: &[f64]) -> Result<MilNet> {
        let expected = hidden * input_dim + hidden + hidden + 1;
        if flat.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: flat.len(),
            });
        }
        let hidden_w = flat[..hidden * input_dim]
            .chunks_exact(input_dim)
            .map(<[f64]>::to_vec)
            .collect();
        let rest = &flat[hidden * input_dim..];
        Ok(MilNet {
            hidden_w,
            hidden_b: rest[..hidden].to_vec(),
            out_w: rest[hidden..2 * hidden].to_vec(),
            out_b: rest[2 * hidden],
        })
    }

    fn apply_step(&mut self, grad: &[f64], lr: f64) {
        let h = self.hidden_units();
        let dim = self.input_dim();
        for (k, row) in self.hidden_w.iter_mut().enumerate() {
            for (w, g) in row.iter_mut().zip(&grad[k * dim..(k + 1) * dim]) {
                *w -= lr * g;
            }
        }
        for (b, g) in self.hidden_b.iter_mut().zip(&grad[h * dim..]) {
            *b -= lr * g;
        }
        for (w, g) in self.out_w.iter_mut().zip(&grad[h * dim + h..]) {
            *w -= lr * g;
        }
        self.out_b -= lr * grad[h * dim + h + h];
    }
}

struct Activations {
    hidden: Vec<f64>,
    output: f64,
}

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrPolicy {
    /// Same rate every epoch.
    Constant(f64),
    /// `start` for the first `hold` epochs, then linear decay reaching `end`
    /// exactly at the final epoch.
    Decay { start: f64, end: f64, hold: usize },
}

impl LrPolicy {
    /// Rate for 0-indexed `epoch` out of `total`.
    pub fn rate(&self, epoch: usize, total: usize) -> f64 {
        match *self {
            LrPolicy::Constant(lr) => lr,
            LrPolicy::Decay { start, end, hold } => {
                if epoch < hold || total <= hold {
                    start
                } else {
                    let t = (epoch + 1 - hold) as f64 / (total - hold) as f64;
                    start + (end - start) * t
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LrPolicy::Constant(lr) => lr.is_finite() && lr > 0.0,
            LrPolicy::Decay { start, end, .. } => {
                start.is_finite() && end.is_finite() && start > 0.0 && end > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "learning rate must stay positive and finite: {self:?}"
            )))
        }
    }
}

impl Default for LrPolicy {
    fn default() -> Self {
        LrPolicy::Constant(0.1)
    }
}

/// Training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BpMilConfig {
    /// Hidden-layer width.
    pub hidden: usize,
    pub epochs: usize,
    pub lr: LrPolicy,
    pub seed: u64,
    /// Stop early once the summed bag divergence falls below this.
    pub tol: f64,
}

impl Default for BpMilConfig {
    fn default() -> Self {
        BpMilConfig {
            hidden: 16,
            epochs: 60,
            lr: LrPolicy::default(),
            seed: 0,
            tol: 1e-4,
        }
    }
}

/// A trained network plus its loss trajectory.
#[derive(Debug, Clone)]
pub struct BpMilFit {
    pub net: MilNet,
    /// Epochs actually run (early stop can cut the schedule short).
    pub epochs_run: usize,
    /// Summed bag divergence before training and after each epoch;
    /// `len() == epochs_run + 1`.
    pub divergence_history: Vec<f64>,
    /// True when the early-stop tolerance was reached.
    pub converged: bool,
}

impl BpMilFit {
    pub fn initial_divergence(&self) -> f64 {
        self.divergence_history[0]
    }

    pub fn final_divergence(&self) -> f64 {
        *self.divergence_history.last().unwrap()
    }
}

fn total_divergence(net: &MilNet, bags: &[Bag]) -> Result<f64> {
    let mut total = 0.0;
    for bag in bags {
        total += net.bag_divergence(&bag.instances, bag.positive)?.0;
    }
    Ok(total)
}

/// Trains a network from bag labels alone.
///
/// Each epoch visits the bags in a freshly shuffled order and applies one
/// gradient step per bag, through that bag's maximal instance only.
/// Sequential by design: the update order is part of the result, and fixed
/// seeds reproduce it bitwise.
pub fn train_bpmil(bags: &[Bag], cfg: &BpMilConfig) -> Result<BpMilFit> {
    if bags.is_empty() {
        return Err(Error::InvalidConfig("no bags to train on".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be positive".into()));
    }
    cfg.lr.validate()?;
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
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric("non-finite training instance".into()));
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

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = MilNet::new(dim, cfg.hidden, rng.random())?;
    let mut order: Vec<usize> = (0..bags.len()).collect();
    let mut history = vec![total_divergence(&net, bags)?];
    let mut converged = false;
    let mut epochs_run = 0;

    for epoch in 0..cfg.epochs {
        epochs_run = epoch + 1;
        let lr = cfg.lr.rate(epoch, cfg.epochs);
        order.shuffle(&mut rng);
        for &i in &order {
            let bag = &bags[i];
            let grad = net.bag_gradient(&bag.instances, bag.positive)?;
            net.apply_step(&grad, lr);
        }
        let total = total_divergence(&net, bags)?;
        if !total.is_finite() {
            return Err(Error::Numeric(format!(
                "bag divergence became non-finite at epoch {epochs_run}; \
                 lower the learning rate"
            )));
        }
        history.push(total);
        if total < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(BpMilFit {
        net,
        epochs_run,
        divergence_history: history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bags::TimeSpan;

    fn make_bag(id: &str, positive: bool, instances: Vec<Vec<f64>>) -> Bag {
        let spans = (0..instances.len())
            .map(|j| TimeSpan::new(j as f64 * 0.5, j as f64 * 0.5 + 1.0))
            .collect();
        Bag {
            clip_id: id.into(),
            positive,
            spans,
            instances,
        }
    }

    fn random_instances(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect()
    }

    #[test]
    fn initialization_is_seeded_and_shaped() {
        let a = MilNet::new(64, 16, 9).unwrap();
        let b = MilNet::new(64, 16, 9).unwrap();
        let c = MilNet::new(64, 16, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.param_count(), 1057);
        assert_eq!(a.flatten().len(), 1057);
        let bound = (6.0 / 80.0f64).sqrt();
        for row in &a.hidden_w {
            assert!(row.iter().all(|w| w.abs() <= bound));
        }
        let out_bound = (6.0 / 17.0f64).sqrt();
        assert!(a.out_w.iter().all(|w| w.abs() <= out_bound));
        assert!(a.hidden_b.iter().all(|&b| b == 0.0));
        assert_eq!(a.out_b, 0.0);
    }

    #[test]
    fn zero_network_scores_one_half() {
        let net = MilNet::from_flat(3, 4, &vec![0.0; 21]).unwrap();
        assert_eq!(net.forward(&[5.0, -2.0, 0.3]).unwrap(), 0.5);
    }

    #[test]
    fn output_bias_saturates_the_sigmoid() {
        let mut flat = vec![0.0; 21];
        *flat.last_mut().unwrap() = 10.0;
        let net = MilNet::from_flat(3, 4, &flat).unwrap();
        let o = net.forward(&[1.0, 1.0, 1.0]).unwrap();
        assert!((o - 0.9999546).abs() < 5e-8, "sigmoid(10) = {o}");
    }

    #[test]
    fn output_grows_with_output_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = MilNet::new(5, 6, 1).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut prev = 0.0;
        for (i, bump) in [-2.0, 0.0, 2.0, 5.0].into_iter().enumerate() {
            let mut shifted = net.clone();
            shifted.out_b += bump;
            let o = shifted.forward(&x).unwrap();
            assert!(o > 0.0 && o < 1.0);
            if i > 0 {
                assert!(o > prev);
            }
            prev = o;
        }
    }

    #[test]
    fn divergence_matches_hand_arithmetic() {
        // Zero params give o = 0.5 for a single instance: E = (0.5-1)^2/2.
        let net = MilNet::from_flat(2, 3, &vec![0.0; 13]).unwrap();
        let (e, j) = net.bag_divergence(&[vec![0.0, 0.0]], true).unwrap();
        assert_eq!(e, 0.125);
        assert_eq!(j, 0);
    }

    #[test]
    fn divergence_uses_the_maximal_output_only() {
        // One hidden unit with out = sigmoid(6h - 3), h = sigmoid(x): the
        // output sweeps (0.047, 0.953), so {0.2, 0.9, 0.4} are reachable by
        // inverting both sigmoids per instance.
        let net = MilNet::from_flat(1, 1, &[1.0, 0.0, 6.0, -3.0]).unwrap();
        let logit = |o: f64| (o / (1.0 - o)).ln();
        let inputs: Vec<Vec<f64>> = [0.2, 0.9, 0.4]
            .iter()
            .map(|&o| vec![logit((logit(o) + 3.0) / 6.0)])
            .collect();
        for (x, want) in inputs.iter().zip([0.2, 0.9, 0.4]) {
            assert!((net.forward(x).unwrap() - want).abs() < 1e-12);
        }
        let (e, j) = net.bag_divergence(&inputs, false).unwrap();
        assert!((e - 0.405).abs() < 1e-12, "E = {e}");
        assert_eq!(j, 1);
    }

    #[test]
    fn ties_resolve_to_the_first_index() {
        let net = MilNet::from_flat(1, 1, &[1.0, 0.0, 1.0, 0.0]).unwrap();
        let (_, j) = net
            .bag_divergence(&[vec![0.7], vec![0.7], vec![0.2]], true)
            .unwrap();
        assert_eq!(j, 0);
    }

    #[test]
    fn empty_bag_is_rejected() {
        let net = MilNet::new(2, 2, 0).unwrap();
        assert!(matches!(
            net.bag_divergence(&[], true),
            Err(Error::EmptySegment)
        ));
        assert!(matches!(net.predict_bag(&[]), Err(Error::EmptySegment)));
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bag_score_is_the_exhaustive_maximum_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = MilNet::new(4, 5, 2).unwrap();
        let instances = random_instances(&mut rng, 9, 4);
        let oracle = instances
            .iter()
            .map(|x| net.forward(x).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let got = net.predict_bag(&instances).unwrap();
        assert_eq!(got, oracle);

        let mut shuffled = instances.clone();
        shuffled.reverse();
        shuffled.swap(0, 3);
        assert_eq!(net.predict_bag(&shuffled).unwrap(), got);

        // Adding a weaker instance never changes the bag score.
        let mut extended = instances;
        extended.push(vec![0.0; 4]);
        let with_extra = net.predict_bag(&extended).unwrap();
        assert_eq!(with_extra, got.max(net.forward(&[0.0; 4]).unwrap()));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rel = |a: f64, b: f64| (a - b).abs() / (a.abs() + b.abs()).max(1e-6);
        for case in 0..6 {
            let net = MilNet::new(3, 4, 100 + case).unwrap();
            let instances = random_instances(&mut rng, 4, 3);
            let positive = case % 2 == 0;
            // The finite-difference probe needs a stable argmax.
            let scores: Vec<f64> = instances.iter().map(|x| net.forward(x).unwrap()).collect();
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            assert!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-6));

            let analytic = net.bag_gradient(&instances, positive).unwrap();
            let flat = net.flatten();
            let h = 1e-5;
            for (p, &g) in analytic.iter().enumerate() {
                let mut plus = flat.clone();
                plus[p] += h;
                let mut minus = flat.clone();
                minus[p] -= h;
                let e_plus = MilNet::from_flat(3, 4, &plus)
                    .unwrap()
                    .bag_divergence(&instances, positive)
                    .unwrap()
                    .0;
                let e_minus = MilNet::from_flat(3, 4, &minus)
                    .unwrap()
                    .bag_divergence(&instances, positive)
                    .unwrap()
                    .0;
                let numeric = (e_plus - e_minus) / (2.0 * h);
                assert!(
                    rel(g, numeric) <= 1e-4,
                    "case {case} param {p}: analytic {g} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn non_maximal_instances_get_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let net = MilNet::new(3, 4, 7).unwrap();
        let mut instances = random_instances(&mut rng, 5, 3);
        let (_, j) = net.bag_max(&instances).unwrap();
        let grad = net.bag_gradient(&instances, true).unwrap();

        // Perturb a non-maximal instance without dethroning the argmax.
        let other = (j + 1) % instances.len();
        instances[other][0] += 1e-3;
        let (_, j_after) = net.bag_max(&instances).unwrap();
        assert_eq!(j, j_after);
        assert_eq!(net.bag_gradient(&instances, true).unwrap(), grad);
    }

    #[test]
    fn negative_bag_step_reduces_the_max_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for case in 0..10 {
            let net = MilNet::new(3, 4, 200 + case).unwrap();
            let instances = random_instances(&mut rng, 4, 3);
            let (_, j) = net.bag_max(&instances).unwrap();
            let before = net.forward(&instances[j]).unwrap();
            let grad = net.bag_gradient(&instances, false).unwrap();
            let mut stepped = net.clone();
            stepped.apply_step(&grad, 1e-6);
            let after = stepped.forward(&instances[j]).unwrap();
            assert!(
                after <= before + 1e-12,
                "case {case}: {before} -> {after}"
            );
        }
    }

    #[test]
    fn separable_pair_trains_to_low_divergence() {
        let bags = vec![
            make_bag("pos", true, vec![vec![6.0]]),
            make_bag("neg", false, vec![vec![-6.0]]),
        ];
        let cfg = BpMilConfig {
            hidden: 32,
            ..BpMilConfig::default()
        };
        let fit = train_bpmil(&bags, &cfg).unwrap();
        let drop = 1.0 - fit.final_divergence() / fit.initial_divergence();
        assert!(
            drop >= 0.9,
            "divergence fell only {:.1}% ({} -> {})",
            drop * 100.0,
            fit.initial_divergence(),
            fit.final_divergence()
        );
        assert_eq!(fit.epochs_run, 60);
        assert_eq!(fit.divergence_history.len(), 61);
    }

    #[test]
    fn decay_schedule_holds_then_reaches_the_floor() {
        let lr = LrPolicy::Decay {
            start: 0.1,
            end: 0.01,
            hold: 30,
        };
        for e in 0..30 {
            assert_eq!(lr.rate(e, 60), 0.1);
        }
        assert!(lr.rate(30, 60) < 0.1);
        for e in 30..59 {
            assert!(lr.rate(e + 1, 60) < lr.rate(e, 60));
        }
        assert!((lr.rate(59, 60) - 0.01).abs() < 1e-15);
        assert!(lr.rate(0, 60) > 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let mut bags = Vec::new();
        for i in 0..8 {
            let positive = i % 2 == 0;
            let mean = if positive { 1.5 } else { -1.5 };
            let instances = (0..3)
                .map(|_| vec![mean + rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0)])
                .collect();
            bags.push(make_bag(&format!("b{i}"), positive, instances));
        }
        let cfg = BpMilConfig {
            hidden: 8,
            lr: LrPolicy::Decay {
                start: 0.1,
                end: 0.01,
                hold: 30,
            },
            ..BpMilConfig::default()
        };
        let a = train_bpmil(&bags, &cfg).unwrap();
        let b = train_bpmil(&bags, &cfg).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.divergence_history, b.divergence_history);
    }

    #[test]
    fn degenerate_corpora_are_rejected() {
        let pos = make_bag("p", true, vec![vec![1.0]]);
        let neg = make_bag("n", false, vec![vec![-1.0]]);
        let cfg = BpMilConfig::default();
        assert!(matches!(
            train_bpmil(&[pos.clone(), pos.clone()], &cfg),
            Err(Error::SingleClass(_))
        ));
        assert!(matches!(
            train_bpmil(&[neg.clone(), neg.clone()], &cfg),
            Err(Error::SingleClass(_))
        ));
        assert!(matches!(train_bpmil(&[], &cfg), Err(Error::InvalidConfig(_))));
        let mut empty = pos.clone();
        empty.instances.clear();
        assert!(matches!(
            train_bpmil(&[empty, neg], &cfg),
            Err(Error::EmptyBag(_))
        ));
    }

    #[test]
    fn runaway_learning_rate_is_a_diagnosed_error() {
        let bags = vec![
            make_bag("p", true, vec![vec![1e4]]),
            make_bag("n", false, vec![vec![-1e4]]),
        ];
        let cfg = BpMilConfig {
            lr: LrPolicy::Constant(1e18),
            ..BpMilConfig::default()
        };
        match train_bpmil(&bags, &cfg) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("learning rate")),
            other => {
                // A huge rate can also saturate without overflowing; accept a
                // finite fit but never a silent NaN.
                let fit = other.unwrap();
                assert!(fit.final_divergence().is_finite());
            }
        }
    }
}
