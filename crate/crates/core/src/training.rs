//! Optimisation: per-dimension BCE, exact gradients, Adam, probabilistic
//! teacher forcing and early stopping on validation loss.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Example, Recording};
use crate::error::{Error, Result};
use crate::evaluation::{score_segment_level, EvalReport};
use crate::model::{Architecture, ContextSequence, DropoutMasks, Model, ModelConfig, Prediction, CODE_DIM};
use crate::nn::{sigmoid, ParamSet};
use crate::vad::VadCode;

pub const PROB_CLAMP: f64 = 1e-7;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub teacher_forcing_p: f64,
    pub seed: u64,
    pub patience: usize,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
}

impl TrainConfig {
    pub fn for_arch(arch: Architecture) -> Self {
        TrainConfig {
            epochs: match arch {
                Architecture::Recurrent => 20,
                Architecture::Transformer => 50,
            },
            iterations_per_epoch: 1000,
            batch_size: 16,
            learning_rate: 1e-3,
            teacher_forcing_p: 0.8,
            seed: 0,
            patience: 5,
            lr_decay: 0.5,
            lr_decay_every: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.iterations_per_epoch == 0 || self.batch_size == 0 || self.lr_decay_every == 0 {
            return Err(Error::InvalidConfig("training counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.teacher_forcing_p) {
            return Err(Error::InvalidConfig(format!(
                "teacher forcing probability {} outside [0, 1]",
                self.teacher_forcing_p
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate decay {}", self.lr_decay)));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossReport {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
    pub total: f64,
}

pub fn bce_loss(probs: [f64; 3], target: VadCode) -> LossReport {
    let t = target.as_f64();
    let c: Vec<f64> = (0..CODE_DIM)
        .map(|i| {
            let p = probs[i].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(t[i] * p.ln() + (1.0 - t[i]) * (1.0 - p).ln())
        })
        .collect();
    LossReport {
        valence: c[0],
        arousal: c[1],
        dominance: c[2],
        total: (c[0] + c[1] + c[2]) / 3.0,
    }
}

/// Mean batch loss and its exact gradient with respect to every parameter.
/// `masks`, when given, holds one dropout mask pair per example.
pub fn gradient(model: &Model, batch: &[Example], masks: Option<&[DropoutMasks]>) -> Result<(f64, ParamSet)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    if let Some(m) = masks {
        if m.len() != batch.len() {
            return Err(Error::LengthMismatch(format!("{} masks for {} examples", m.len(), batch.len())));
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = model.params().zeros_like();
    let mut loss = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        let cache = model.forward_with_cache(&ex.xs, &ex.context, masks.map(|m| &m[i]))?;
        let probs = cache.logits.map(sigmoid);
        loss += bce_loss(probs, ex.target).total;
        let t = ex.target.as_f64();
        let dlogits = [0, 1, 2].map(|k| (probs[k] - t[k]) * scale / CODE_DIM as f64);
        model.backward(&cache, dlogits, &mut grads);
    }
    loss *= scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("batch loss {loss}")));
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    m: ParamSet,
    v: ParamSet,
    t: i32,
}

impl Adam {
    pub fn new(params: &ParamSet, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let lr = self.learning_rate;
        for (((p, g), m), v) in params
            .values_mut()
            .zip(grads.values())
            .zip(self.m.values_mut())
            .zip(self.v.values_mut())
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Generator for one optimisation step; every random choice of the step derives from it.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

/// One Bernoulli draw: true means the ground-truth context is used.
pub fn use_ground_truth<R: Rng>(p: f64, rng: &mut R) -> bool {
    rng.gen::<f64>() < p
}

pub fn sample_context<R: Rng>(
    ground_truth: &ContextSequence,
    rollout: &ContextSequence,
    p: f64,
    rng: &mut R,
) -> Result<ContextSequence> {
    if ground_truth.len() != rollout.len() {
        return Err(Error::LengthMismatch(format!(
            "ground-truth context of {} codes, rollout of {}",
            ground_truth.len(),
            rollout.len()
        )));
    }
    Ok(if use_ground_truth(p, rng) {
        ground_truth.clone()
    } else {
        rollout.clone()
    })
}

/// Context for window `t` built from one-step predictions of the preceding
/// windows, each made with ground-truth context.
pub fn rollout_context(model: &Model, rec: &Recording, t: usize) -> Result<ContextSequence> {
    let len = model.config().sequence_len();
    let start = Recording::window_start(t, len);
    let codes = (start..t)
        .map(|u| {
            let ex = rec.example(u, len);
            model.forward(&ex.xs, &ex.context).map(|p| p.code)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContextSequence::from_previous(&codes))
}

/// Inference over a whole recording, feeding each prediction back as context.
pub fn predict_recording(model: &Model, rec: &Recording) -> Result<Vec<Prediction>> {
    let len = model.config().sequence_len();
    let mut codes: Vec<VadCode> = Vec::with_capacity(rec.len());
    let mut out = Vec::with_capacity(rec.len());
    for t in 0..rec.len() {
        codes.push(VadCode::default());
        let ex = rec.example_with(t, len, &codes);
        let pred = model.forward(&ex.xs, &ex.context)?;
        codes[t] = pred.code;
        out.push(pred);
    }
    Ok(out)
}

/// Mean ground-truth-context loss over every window of `recordings`.
pub fn mean_loss(model: &Model, recordings: &[Recording]) -> Result<f64> {
    let len = model.config().sequence_len();
    let mut total = 0.0;
    let mut count = 0usize;
    for rec in recordings {
        for t in 0..rec.len() {
            let ex = rec.example(t, len);
            let pred = model.forward(&ex.xs, &ex.context)?;
            total += bce_loss(pred.probs, ex.target).total;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyInput("loss evaluation"));
    }
    Ok(total / count as f64)
}

/// Segment-level scores of autoregressive predictions against window targets.
pub fn evaluate_segments(model: &Model, recordings: &[Recording]) -> Result<EvalReport> {
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for rec in recordings {
        preds.extend(predict_recording(model, rec)?.iter().map(|p| p.stress));
        truths.extend(rec.stress_targets());
    }
    score_segment_level(&preds, &truths)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub val_f1: f64,
    pub lr: f64,
}

pub const METRICS_HEADER: &str = "epoch,step,train_loss,val_loss,val_acc,val_f1,lr";

pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for m in log {
        writeln!(
            out,
            "{},{},{:?},{:?},{:?},{:?},{:?}",
            m.epoch, m.step, m.train_loss, m.val_loss, m.val_acc, m.val_f1, m.lr
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochMetrics>,
    pub stopped_early: bool,
}

fn check_split(recordings: &[Recording], dim: usize, name: &'static str) -> Result<()> {
    if recordings.iter().all(Recording::is_empty) {
        return Err(Error::EmptyInput(name));
    }
    if let Some(bad) = recordings.iter().find(|r| r.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    Ok(())
}

/// Assemble the mini-batch for one step: windows drawn with replacement,
/// one teacher-forcing draw and one dropout mask pair per example.
fn assemble_batch(
    model: &Model,
    train: &[Recording],
    pool: &[(usize, usize)],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Example>, Option<Vec<DropoutMasks>>)> {
    let mc = model.config();
    let len = mc.sequence_len();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut masks = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let (r, t) = pool[rng.gen_range(0..pool.len())];
        let rec = &train[r];
        let mut ex = rec.example(t, len);
        if !use_ground_truth(cfg.teacher_forcing_p, rng) {
            ex.context = rollout_context(model, rec, t)?;
        }
        if mc.dropout > 0.0 {
            masks.push(DropoutMasks::sample(rng, ex.xs.len(), mc.hidden, mc.dropout));
        }
        batch.push(ex);
    }
    Ok((batch, (mc.dropout > 0.0).then_some(masks)))
}

pub fn train(
    train: &[Recording],
    val: &[Recording],
    model_config: ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_config.validate()?;
    check_split(train, model_config.input_dim, "training split")?;
    check_split(val, model_config.input_dim, "validation split")?;

    let pool: Vec<(usize, usize)> = train
        .iter()
        .enumerate()
        .flat_map(|(r, rec)| (0..rec.len()).map(move |t| (r, t)))
        .collect();
    let mut model = Model::new(model_config, cfg.seed)?;
    let mut adam = Adam::new(model.params(), cfg.learning_rate);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    let mut stale = 0usize;
    let mut stopped_early = false;
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        adam.learning_rate = cfg.learning_rate_at(epoch);
        let mut epoch_loss = 0.0;
        for _ in 0..cfg.iterations_per_epoch {
            let mut rng = step_rng(cfg.seed, step as u64);
            let (batch, masks) = assemble_batch(&model, train, &pool, cfg, &mut rng)?;
            let (loss, grads) = match gradient(&model, &batch, masks.as_deref()) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => return Err(Error::Divergence { step, loss: f64::NAN }),
                Err(e) => return Err(e),
            };
            adam.step(model.params_mut(), &grads);
            if !model.params().all_finite() {
                return Err(Error::Divergence { step, loss });
            }
            epoch_loss += loss;
            step += 1;
        }
        let val_loss = mean_loss(&model, val)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { step, loss: val_loss });
        }
        let report = evaluate_segments(&model, val)?;
        log.push(EpochMetrics {
            epoch: epoch + 1,
            step,
            train_loss: epoch_loss / cfg.iterations_per_epoch as f64,
            val_loss,
            val_acc: report.accuracy,
            val_f1: report.f1,
            lr: adam.learning_rate,
        });
        if best.as_ref().map_or(true, |(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch + 1, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale > cfg.patience {
                stopped_early = epoch + 1 < cfg.epochs;
                break;
            }
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch runs");
    Ok(TrainOutcome {
        best,
        best_epoch,
        log,
        stopped_early,
    })
}

/// Largest relative error between analytic and central-difference gradients,
/// with `|a - b| / max(|a|, |b|, floor)` per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub checked: usize,
}

pub const GRADCHECK_FLOOR: f64 = 1e-6;

pub fn gradient_check(model: &Model, batch: &[Example], masks: Option<&[DropoutMasks]>, h: f64) -> Result<GradientCheck> {
    let (_, analytic) = gradient(model, batch, masks)?;
    let mut probe = model.clone();
    let mut worst = (0.0f64, 0usize);
    for i in 0..model.param_count() {
        let x = model.params().get_flat(i);
        probe.params_mut().set_flat(i, x + h);
        let up = gradient(&probe, batch, masks)?.0;
        probe.params_mut().set_flat(i, x - h);
        let down = gradient(&probe, batch, masks)?.0;
        probe.params_mut().set_flat(i, x);
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.get_flat(i);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    let (name, offset) = model.params().describe_flat(worst.1);
    Ok(GradientCheck {
        max_relative_error: worst.0,
        worst_parameter: format!("{name}[{offset}]"),
        checked: model.param_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vad::{DEFAULT_CONTEXT, STRESS};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_examples(n: usize, d: usize, len: usize, seed: u64) -> Vec<Example> {
        let mut r = rng(seed);
        (0..n)
            .map(|_| {
                let steps = r.gen_range(1..=len);
                let xs = (0..steps).map(|_| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
                let prev: Vec<VadCode> = (1..steps).map(|_| VadCode::from_index(r.gen_range(0..8))).collect();
                Example {
                    xs,
                    context: ContextSequence::from_previous(&prev),
                    target: VadCode::from_index(r.gen_range(0..8)),
                }
            })
            .collect()
    }

    fn tiny(arch: Architecture) -> ModelConfig {
        let mut c = ModelConfig::new(arch, 8, 3);
        c.hidden = 8;
        c.heads = 2;
        c.ffn = 16;
        c
    }

    #[test]
    fn bce_spot_values() {
        let r = bce_loss([0.5; 3], STRESS);
        assert!((r.total - std::f64::consts::LN_2).abs() < 1e-12);
        let r = bce_loss([0.9, 0.8, 0.1], VadCode::from_index(6));
        assert_eq!(VadCode::from_index(6).to_string(), "1,1,0");
        assert!((r.total - 0.14462152754328741).abs() < 1e-12);
        assert!((r.total - (r.valence + r.arousal + r.dominance) / 3.0).abs() < 1e-15);
        let r = bce_loss([0.0, 1.0, 0.0], STRESS);
        assert!(r.total < 1e-6 && r.total > 0.0);
    }

    #[test]
    fn bias_gradient_identity_at_zero_logits() {
        let model = Model::zeros(tiny(Architecture::Recurrent)).unwrap();
        let batch = random_examples(5, 8, 3, 3);
        let (loss, grads) = gradient(&model, &batch, None).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        let bias = grads.find("classifier.bias").unwrap();
        for k in 0..3 {
            let expected = batch.iter().map(|e| 0.5 - e.target.as_f64()[k]).sum::<f64>() / batch.len() as f64 / 3.0;
            assert!((bias.data[k] - expected).abs() < 1e-15, "{k}: {} vs {expected}", bias.data[k]);
        }
    }

    #[test]
    fn duplicated_sample_has_same_gradient() {
        let model = Model::new(tiny(Architecture::Transformer), 4).unwrap();
        let ex = random_examples(1, 8, 3, 9);
        let (l1, g1) = gradient(&model, &ex, None).unwrap();
        let (l2, g2) = gradient(&model, &[ex[0].clone(), ex[0].clone()], None).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (a, b) in g1.values().zip(g2.values()) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
        assert!(gradient(&model, &[], None).is_err());
    }

    fn check_with(arch: Architecture, seed: u64, h: f64) -> GradientCheck {
        let model = Model::new(tiny(arch), seed).unwrap();
        let batch = random_examples(3, 8, 3, 5);
        let mut r = rng(2);
        let masks: Vec<_> = batch.iter().map(|e| DropoutMasks::sample(&mut r, e.xs.len(), 8, 0.3)).collect();
        gradient_check(&model, &batch, Some(&masks), h).unwrap()
    }

    fn check(arch: Architecture) -> GradientCheck {
        check_with(arch, 1, 1e-3)
    }

    #[test]
    fn relu_kink_crossing_disappears_with_smaller_step() {
        // with this seed a feed-forward pre-activation lies within 1e-3 of zero
        assert!(check_with(Architecture::Transformer, 11, 1e-3).max_relative_error > 1e-4);
        let c = check_with(Architecture::Transformer, 11, 1e-6);
        assert!(c.max_relative_error < 1e-4, "{c:?}");
    }

    #[test]
    fn gradient_check_recurrent() {
        let c = check(Architecture::Recurrent);
        assert!(c.max_relative_error < 1e-4, "{c:?}");
    }

    #[test]
    fn gradient_check_transformer() {
        let c = check(Architecture::Transformer);
        assert!(c.max_relative_error < 1e-4, "{c:?}");
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut model = Model::new(tiny(Architecture::Recurrent), 1).unwrap();
        let before = model.params().clone();
        let zero = before.zeros_like();
        let mut adam = Adam::new(model.params(), 1e-3);
        for _ in 0..3 {
            adam.step(model.params_mut(), &zero);
        }
        assert_eq!(model.params(), &before);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut ps = ParamSet::default();
        ps.push("w", &[3]);
        let mut g = ps.zeros_like();
        g.data_mut(0).copy_from_slice(&[2.0, -0.5, 0.0]);
        let mut adam = Adam::new(&ps, 0.01);
        adam.step(&mut ps, &g);
        let w = ps.data(0);
        assert!((w[0] + 0.01).abs() < 1e-9 && (w[1] - 0.01).abs() < 1e-9 && w[2] == 0.0);
    }

    #[test]
    fn teacher_forcing_draws() {
        let gt = ContextSequence::from_previous(&[STRESS, STRESS]);
        let ro = ContextSequence::from_previous(&[DEFAULT_CONTEXT, STRESS]);
        let mut r = rng(0);
        for _ in 0..100 {
            assert_eq!(sample_context(&gt, &ro, 1.0, &mut r).unwrap(), gt);
            assert_eq!(sample_context(&gt, &ro, 0.0, &mut r).unwrap(), ro);
        }
        let hits = (0..10_000u64)
            .filter(|&i| sample_context(&gt, &ro, 0.8, &mut step_rng(7, i)).unwrap() == gt)
            .count();
        let frac = hits as f64 / 1e4;
        assert!((0.78..=0.82).contains(&frac), "{frac}");
        let short = ContextSequence::from_previous(&[]);
        assert!(sample_context(&gt, &short, 0.5, &mut r).is_err());
    }

    #[test]
    fn schedule() {
        let c = TrainConfig::for_arch(Architecture::Transformer);
        assert_eq!(c.epochs, 50);
        assert_eq!(c.learning_rate_at(4), 1e-3);
        assert_eq!(c.learning_rate_at(5), 5e-4);
        assert_eq!(c.learning_rate_at(12), 2.5e-4);
        let mut bad = c.clone();
        bad.teacher_forcing_p = 1.5;
        assert!(bad.validate().is_err());
        bad.teacher_forcing_p = 0.5;
        bad.batch_size = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_batch_overfit() {
        let mut cfg = ModelConfig::new(Architecture::Recurrent, 8, 3);
        cfg.dropout = 0.0;
        let mut model = Model::new(cfg, 3).unwrap();
        let batch = random_examples(16, 8, 3, 21);
        let mut adam = Adam::new(model.params(), 1e-2);
        let mut losses = Vec::new();
        for _ in 0..200 {
            let (loss, g) = gradient(&model, &batch, None).unwrap();
            losses.push(loss);
            adam.step(model.params_mut(), &g);
        }
        let last = gradient(&model, &batch, None).unwrap().0;
        assert!(last < 0.05, "final loss {last}");
        let intervals: Vec<f64> = losses.chunks(20).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let decreasing = intervals.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(decreasing as f64 >= 0.95 * (intervals.len() - 1) as f64, "{intervals:?}");
    }

    fn toy_split(seed: u64, recs: usize) -> Vec<Recording> {
        let mut r = rng(seed);
        (0..recs)
            .map(|i| {
                let n = r.gen_range(3..8);
                let targets: Vec<VadCode> = (0..n).map(|_| if r.gen() { STRESS } else { DEFAULT_CONTEXT }).collect();
                let features = targets
                    .iter()
                    .map(|c| (0..4).map(|_| c.as_f64()[1] + r.gen_range(-0.5..0.5)).collect())
                    .collect();
                Recording::new(format!("r{i}"), features, targets).unwrap()
            })
            .collect()
    }

    fn toy_config() -> (ModelConfig, TrainConfig) {
        let mut mc = ModelConfig::new(Architecture::Recurrent, 4, 2);
        mc.hidden = 8;
        let mut tc = TrainConfig::for_arch(Architecture::Recurrent);
        tc.epochs = 3;
        tc.iterations_per_epoch = 20;
        tc.batch_size = 4;
        tc.seed = 5;
        (mc, tc)
    }

    #[test]
    fn training_is_deterministic() {
        let (mc, tc) = toy_config();
        let (train_set, val) = (toy_split(1, 6), toy_split(2, 3));
        let a = train(&train_set, &val, mc.clone(), &tc).unwrap();
        let b = train(&train_set, &val, mc, &tc).unwrap();
        assert_eq!(metrics_csv(&a.log), metrics_csv(&b.log));
        assert_eq!(a.best.params(), b.best.params());
        assert_eq!(a.log.len(), 3);
        assert_eq!(a.log[2].step, 60);
    }

    #[test]
    fn zero_patience_stops_after_first_stall() {
        let (mc, mut tc) = toy_config();
        tc.learning_rate = 0.0;
        tc.patience = 0;
        tc.epochs = 10;
        let out = train(&toy_split(1, 4), &toy_split(2, 2), mc, &tc).unwrap();
        assert_eq!(out.log.len(), 2);
        assert!(out.stopped_early);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn best_checkpoint_has_lowest_validation_loss() {
        let (mc, mut tc) = toy_config();
        tc.epochs = 6;
        tc.learning_rate = 0.05;
        let val = toy_split(2, 3);
        let out = train(&toy_split(1, 6), &val, mc, &tc).unwrap();
        let best = out.log[out.best_epoch - 1].val_loss;
        assert!(out.log.iter().all(|m| m.val_loss >= best));
        assert_eq!(mean_loss(&out.best, &val).unwrap(), best);
    }

    #[test]
    fn empty_splits_rejected() {
        let (mc, tc) = toy_config();
        assert!(train(&[], &toy_split(2, 2), mc.clone(), &tc).is_err());
        assert!(train(&toy_split(1, 2), &[], mc, &tc).is_err());
    }

    #[test]
    fn metrics_log_layout() {
        let csv = metrics_csv(&[EpochMetrics {
            epoch: 1,
            step: 1000,
            train_loss: 0.5,
            val_loss: 0.25,
            val_acc: 0.75,
            val_f1: 0.5,
            lr: 0.001,
        }]);
        assert_eq!(csv, "epoch,step,train_loss,val_loss,val_acc,val_f1,lr\n1,1000,0.5,0.25,0.75,0.5,0.001\n");
    }
}
