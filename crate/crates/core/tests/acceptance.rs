//! End-to-end acceptance checks. Runs without the libtest harness so that
//! one PASS/FAIL line per check is always printed.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stress_core::checkpoint;
use stress_core::dataset::{Example, Recording};
use stress_core::evaluation::{labelling_sweep, score_sequence_level, SweepSequence, SWEEP_LAMBDA, SWEEP_N};
use stress_core::features::mfcc::dct_basis;
use stress_core::features::{MfccConfig, MfccExtractor};
use stress_core::labelling::relabel_sequence;
use stress_core::model::{Architecture, ContextSequence, DropoutMasks, Model, ModelConfig};
use stress_core::segmentation::plan_windows;
use stress_core::training::{
    bce_loss, evaluate_segments, gradient, gradient_check, metrics_csv, sample_context, step_rng, train, TrainConfig,
};
use stress_core::vad::{encode_emotion, Emotion, VadCode, DEFAULT_CONTEXT, STRESS};
use stress_core::LabellingConfig;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------------------
// labelling against a direct transcription of the decayed-distance rule

fn bits(e: Emotion) -> u8 {
    match e {
        Emotion::Happiness => 0b111,
        Emotion::Sadness | Emotion::Neutral => 0b000,
        Emotion::Anger | Emotion::Disgust => 0b011,
        Emotion::Fear => 0b010,
    }
}

fn code_of(b: u8) -> VadCode {
    VadCode::from_bools(b & 4 != 0, b & 2 != 0, b & 1 != 0)
}

fn brute_force(seq: &[u8], n: usize, lambda: f64, tau: f64) -> Vec<VadCode> {
    const S: u8 = 0b010;
    let t_stress = tau * 2.0 * (0..=n).map(|k| (-lambda * k as f64).exp()).sum::<f64>();
    (0..seq.len())
        .map(|t| {
            let theta: f64 = (0..=n.min(t))
                .map(|k| (-lambda * k as f64).exp() * (seq[t - k] ^ S).count_ones() as f64)
                .sum();
            if theta <= t_stress {
                code_of(S)
            } else {
                code_of(seq[t])
            }
        })
        .collect()
}

fn labelling_oracle() -> Outcome {
    let start = Instant::now();
    let mut compared = 0usize;
    let mut mismatches = Vec::new();
    for k in 1..=6u32 {
        let total = 6usize.pow(k);
        let seqs: Vec<Vec<Emotion>> = (0..total)
            .map(|mut idx| {
                (0..k)
                    .map(|_| {
                        let e = Emotion::ALL[idx % 6];
                        idx /= 6;
                        e
                    })
                    .collect()
            })
            .collect();
        for n in 0..=5 {
            for lambda in SWEEP_LAMBDA {
                for tau in [0.25, 0.5, 0.75] {
                    let cfg = LabellingConfig::new(n, lambda, tau).map_err(|e| e.to_string())?;
                    for seq in &seqs {
                        let codes: Vec<VadCode> = seq.iter().map(|&e| encode_emotion(e)).collect();
                        let raw: Vec<u8> = seq.iter().map(|&e| bits(e)).collect();
                        let got = relabel_sequence(&codes, &cfg).map_err(|e| e.to_string())?;
                        compared += 1;
                        if got != brute_force(&raw, n, lambda, tau) && mismatches.len() < 5 {
                            mismatches.push(format!("{seq:?} n={n} λ={lambda} τ={tau}"));
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(mismatches.is_empty(), format!("mismatches: {mismatches:?}"))?;
    ensure(elapsed < Duration::from_secs(120), format!("took {elapsed:?}"))?;
    Ok(format!("{compared} sequence/setting pairs identical in {:.1?}", elapsed))
}

// ---------------------------------------------------------------------------

fn random_sweep_corpus(seed: u64) -> Vec<SweepSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..60)
        .map(|_| {
            let len = rng.gen_range(1..40);
            let emotions: Vec<VadCode> = (0..len).map(|_| encode_emotion(Emotion::ALL[rng.gen_range(0..6)])).collect();
            let mut references = Vec::new();
            for i in 0..len + 3 {
                if rng.gen_bool(0.5) {
                    references.push((i, VadCode::from_index(rng.gen_range(0..8))));
                }
            }
            SweepSequence { emotions, references }
        })
        .collect()
}

fn sweep_first_row() -> Outcome {
    for seed in 0..20 {
        for tolerance in [0, 3] {
            for tau in [0.25, 0.5, 0.75] {
                let grid = labelling_sweep(&random_sweep_corpus(seed), &SWEEP_N, &SWEEP_LAMBDA, tau, tolerance)
                    .map_err(|e| e.to_string())?;
                let row = &grid.cells[0];
                ensure(row.iter().all(|c| c == &row[0]), format!("seed {seed}: {row:?}"))?;
            }
        }
    }
    Ok("n=0 row identical across λ on 120 random grids".into())
}

// ---------------------------------------------------------------------------

fn reduced(arch: Architecture) -> ModelConfig {
    let mut c = ModelConfig::new(arch, 8, 3);
    c.hidden = 8;
    c.heads = 2;
    c.ffn = 16;
    c
}

fn random_examples(count: usize, d: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<Example> {
    (0..count)
        .map(|_| {
            let steps = rng.gen_range(1..=len);
            let xs = (0..steps).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let prev: Vec<VadCode> = (1..steps).map(|_| VadCode::from_index(rng.gen_range(0..8))).collect();
            Example {
                xs,
                context: ContextSequence::from_previous(&prev),
                target: VadCode::from_index(rng.gen_range(0..8)),
            }
        })
        .collect()
}

fn fidelity_fixture(arch: Architecture, examples: usize, mask_seed: Option<u64>) -> Result<(Model, Vec<Example>, Vec<DropoutMasks>), String> {
    let model = Model::new(reduced(arch), 1).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = random_examples(examples, 8, 3, &mut rng);
    let mut mask_rng = mask_seed.map(ChaCha8Rng::seed_from_u64);
    let masks = batch
        .iter()
        .map(|e| DropoutMasks::sample(mask_rng.as_mut().unwrap_or(&mut rng), e.xs.len(), 8, 0.3))
        .collect();
    Ok((model, batch, masks))
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for arch in [Architecture::Recurrent, Architecture::Transformer] {
        let (model, batch, masks) = fidelity_fixture(arch, 3, Some(2))?;
        let check = gradient_check(&model, &batch, Some(&masks), 1e-3).map_err(|e| e.to_string())?;
        ensure(
            check.max_relative_error < 1e-4,
            format!("{arch}: max relative error {:e} at {}", check.max_relative_error, check.worst_parameter),
        )?;
        // a curvier batch: truncation error shrinks as h^2
        let (model, batch, masks) = fidelity_fixture(arch, 4, None)?;
        let fine = gradient_check(&model, &batch, Some(&masks), 1e-4).map_err(|e| e.to_string())?;
        ensure(
            fine.max_relative_error < 1e-5,
            format!("{arch} at h=1e-4: {:e} at {}", fine.max_relative_error, fine.worst_parameter),
        )?;
        parts.push(format!(
            "{arch} {:.1e} over {} (h=1e-4: {:.1e})",
            check.max_relative_error, check.checked, fine.max_relative_error
        ));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("{} ({elapsed:.1?})", parts.join(", ")))
}

// ---------------------------------------------------------------------------
// synthetic learnability: features reveal the current emotion, targets are
// the emotion two windows earlier

const LAG: usize = 2;
const SYNTH_DIM: usize = 8;

fn synthetic_split(seed: u64, recordings: usize, windows: usize) -> Vec<Recording> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let others = [Emotion::Happiness, Emotion::Sadness, Emotion::Anger];
    (0..recordings)
        .map(|r| {
            let mut stressed = rng.gen_bool(0.5);
            let mut emotions = Vec::with_capacity(windows + LAG);
            for _ in 0..windows + LAG {
                if rng.gen_bool(0.3) {
                    stressed = !stressed;
                }
                emotions.push(if stressed { Emotion::Fear } else { others[rng.gen_range(0..3)] });
            }
            let features = emotions[LAG..]
                .iter()
                .map(|&e| {
                    let mean = if e == Emotion::Fear { 0.75 } else { -0.75 };
                    (0..SYNTH_DIM)
                        .map(|_| {
                            // Box-Muller
                            let (u, v): (f64, f64) = (rng.gen_range(f64::EPSILON..1.0), rng.gen());
                            mean + (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
                        })
                        .collect()
                })
                .collect();
            let targets = emotions[..windows].iter().map(|&e| encode_emotion(e)).collect();
            Recording::new(format!("synthetic{r}"), features, targets).expect("well-formed recording")
        })
        .collect()
}

fn learnability_run(n: usize, seed: u64) -> Result<f64, String> {
    let train_set = synthetic_split(1000 + seed, 60, 30);
    let val = synthetic_split(2000 + seed, 10, 30);
    let test = synthetic_split(3000 + seed, 30, 30);
    let mc = ModelConfig::new(Architecture::Recurrent, SYNTH_DIM, n);
    let mut tc = TrainConfig::for_arch(Architecture::Recurrent);
    tc.epochs = 4;
    tc.iterations_per_epoch = 500;
    tc.seed = seed;
    let out = train(&train_set, &val, mc, &tc).map_err(|e| e.to_string())?;
    let steps = out.log.last().map_or(0, |m| m.step);
    ensure(steps <= 2000, format!("{steps} steps"))?;
    Ok(evaluate_segments(&out.best, &test).map_err(|e| e.to_string())?.accuracy)
}

fn synthetic_learnability() -> Outcome {
    let start = Instant::now();
    let seeds = [11u64, 12, 13];
    let results: Vec<(u64, Result<f64, String>, Result<f64, String>)> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                s.spawn(move || {
                    let with_history = std::thread::scope(|inner| {
                        let h = inner.spawn(|| learnability_run(3, seed));
                        let without = learnability_run(0, seed);
                        (h.join().expect("training thread"), without)
                    });
                    (seed, with_history.0, with_history.1)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed thread")).collect()
    });
    let mut parts = Vec::new();
    for (seed, with_history, without) in results {
        let (a3, a0) = (with_history?, without?);
        parts.push(format!("seed {seed}: n=3 {a3:.3} vs n=0 {a0:.3}"));
        ensure(a3 >= 0.90, format!("{}; n=3 below 0.90", parts.join("; ")))?;
        ensure(a0 < a3, format!("{}; n=0 not lower", parts.join("; ")))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(600), format!("took {elapsed:?}"))?;
    Ok(format!("{} ({elapsed:.1?})", parts.join("; ")))
}

// ---------------------------------------------------------------------------

fn segmentation_counts() -> Outcome {
    let rate = 16_000usize;
    let count = |seconds: usize| plan_windows(seconds * rate, rate as u32, "c", 10.0, 5.0).map(|w| w.len()).ok();
    ensure(count(2700) == Some(539), "45 minutes")?;
    ensure(count(25) == Some(4), "25 s")?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let samples = rng.gen_range(10 * rate..=3 * 3600 * rate);
        let got = plan_windows(samples, rate as u32, "c", 10.0, 5.0).map_err(|e| e.to_string())?.len();
        let seconds = samples as f64 / rate as f64;
        let expected = ((seconds - 10.0) / 5.0).floor() as usize + 1;
        ensure(got == expected, format!("{samples} samples: {got} vs {expected}"))?;
    }
    Ok("539 / 4 windows; 200 random durations match".into())
}

// ---------------------------------------------------------------------------

fn mfcc_pipeline() -> Outcome {
    let size = 64;
    let basis = dct_basis(size);
    let mut worst: f64 = 0.0;
    for i in 0..size {
        for j in 0..size {
            let dot: f64 = (0..size).map(|k| basis[i][k] * basis[j][k]).sum();
            worst = worst.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    ensure(worst < 1e-12, format!("DCT deviation {worst:e}"))?;

    let ex = MfccExtractor::new(MfccConfig::default()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Vec<f32> = (0..160_000).map(|_| rng.gen_range(-0.25..0.25)).collect();
    let frames = ex.mfcc_frames(&x).map_err(|e| e.to_string())?;
    ensure(frames.len() == 998, format!("{} frames", frames.len()))?;

    let scaled: Vec<f32> = x.iter().map(|v| v * 3.0).collect();
    let frames2 = ex.mfcc_frames(&scaled).map_err(|e| e.to_string())?;
    let mut other: f64 = 0.0;
    let mut c0_shift: f64 = 0.0;
    for (a, b) in frames.iter().zip(&frames2) {
        c0_shift = c0_shift.max((b[0] - a[0]).abs());
        for c in 1..a.len() {
            other = other.max((b[c] - a[c]).abs());
        }
    }
    ensure(other < 1e-6, format!("coefficients 1.. moved by {other:e}"))?;
    ensure(c0_shift > 1.0, "coefficient 0 did not respond to scaling")?;
    Ok(format!("DCT {worst:.1e}; 998 frames; scaling moves c1.. by {other:.1e}"))
}

// ---------------------------------------------------------------------------

fn teacher_forcing_rate() -> Outcome {
    let gt = ContextSequence::from_previous(&[STRESS, STRESS, STRESS]);
    let rollout = ContextSequence::from_previous(&[DEFAULT_CONTEXT; 3]);
    let mut hits = 0usize;
    for step in 0..10_000u64 {
        let mut rng = step_rng(2024, step);
        if sample_context(&gt, &rollout, 0.8, &mut rng).map_err(|e| e.to_string())? == gt {
            hits += 1;
        }
    }
    let frac = hits as f64 / 1e4;
    ensure((0.78..=0.82).contains(&frac), format!("{frac}"))?;
    Ok(format!("ground truth used in {frac:.4} of 10^4 draws"))
}

// ---------------------------------------------------------------------------

fn loss_spot_values() -> Outcome {
    let l = bce_loss([0.5; 3], STRESS);
    ensure((l.total - std::f64::consts::LN_2).abs() < 1e-12, format!("{}", l.total))?;

    let model = Model::zeros(reduced(Architecture::Recurrent)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = random_examples(6, 8, 3, &mut rng);
    let (_, grads) = gradient(&model, &batch, None).map_err(|e| e.to_string())?;
    let bias = &grads.find("classifier.bias").ok_or("classifier bias missing")?.data;
    for k in 0..3 {
        // per-dimension losses are averaged, hence the factor 1/3
        let expected = batch.iter().map(|e| 0.5 - e.target.as_f64()[k]).sum::<f64>() / batch.len() as f64 / 3.0;
        ensure((bias[k] - expected).abs() < 1e-15, format!("dim {k}: {} vs {expected}", bias[k]))?;
    }
    Ok("BCE(0.5) = ln 2; zero-logit bias gradient identity holds".into())
}

// ---------------------------------------------------------------------------

fn reference_scores(groups: &[Vec<bool>], truths: &[bool]) -> (usize, usize, usize, usize, f64, f64) {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (g, &t) in groups.iter().zip(truths) {
        let yes = g.iter().filter(|&&b| b).count();
        let no = g.len() - yes;
        let vote = yes >= no;
        match (vote, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let acc = (tp + tn) as f64 / groups.len() as f64;
    let f1 = if tp == 0 { 0.0 } else { (2 * tp) as f64 / (2 * tp + fp + fn_) as f64 };
    (tp, fp, tn, fn_, acc, f1)
}

fn sequence_scoring() -> Outcome {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups: Vec<Vec<bool>> = (0..50)
            .map(|_| (0..rng.gen_range(1..12)).map(|_| rng.gen_bool(0.5)).collect())
            .collect();
        let truths: Vec<bool> = (0..50).map(|_| rng.gen_bool(0.5)).collect();
        let r = score_sequence_level(&groups, &truths).map_err(|e| e.to_string())?;
        let (tp, fp, tn, fn_, acc, f1) = reference_scores(&groups, &truths);
        let c = r.confusion;
        ensure(
            (c.tp, c.fp, c.tn, c.fn_) == (tp, fp, tn, fn_) && r.accuracy == acc && r.f1 == f1,
            format!("seed {seed}: {r:?} vs {:?}", (tp, fp, tn, fn_, acc, f1)),
        )?;
    }
    Ok("10 randomized 50-recording fixtures match the reference scorer".into())
}

// ---------------------------------------------------------------------------

fn determinism() -> Outcome {
    let train_set = synthetic_split(5, 8, 12);
    let val = synthetic_split(6, 3, 12);
    let mut mc = ModelConfig::new(Architecture::Transformer, SYNTH_DIM, 3);
    mc.hidden = 16;
    mc.ffn = 32;
    let mut tc = TrainConfig::for_arch(Architecture::Transformer);
    tc.epochs = 3;
    tc.iterations_per_epoch = 20;
    tc.seed = 7;
    let run = || train(&train_set, &val, mc.clone(), &tc).map_err(|e| e.to_string());
    let (a, b) = (run()?, run()?);
    ensure(metrics_csv(&a.log) == metrics_csv(&b.log), "metrics logs differ")?;
    ensure(checkpoint::encode(&a.best) == checkpoint::encode(&b.best), "checkpoints differ")?;

    let mut lstm = ModelConfig::new(Architecture::Recurrent, SYNTH_DIM, 2);
    lstm.hidden = 16;
    let run = || train(&train_set, &val, lstm.clone(), &tc).map_err(|e| e.to_string());
    let (a, b) = (run()?, run()?);
    ensure(metrics_csv(&a.log) == metrics_csv(&b.log), "recurrent metrics logs differ")?;
    ensure(checkpoint::encode(&a.best) == checkpoint::encode(&b.best), "recurrent checkpoints differ")?;
    Ok("metrics logs and checkpoints bitwise identical across repeated runs".into())
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("labelling matches brute-force transcription", labelling_oracle),
        ("sweep n=0 row constant across lambda", sweep_first_row),
        ("gradients match central differences", gradient_fidelity),
        ("synthetic lagged corpus is learnable with history", synthetic_learnability),
        ("segmentation window counts", segmentation_counts),
        ("MFCC pipeline invariants", mfcc_pipeline),
        ("teacher forcing draw rate", teacher_forcing_rate),
        ("loss spot values", loss_spot_values),
        ("sequence-level scorer vs reference", sequence_scoring),
        ("training determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("acceptance {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("acceptance {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
