use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stress_core::audio::write_wav;
use stress_core::checkpoint;
use stress_core::corpus::{
    build_split, flatten_runs, label_windows, load_clip, segment_record, sweep_sequences, window_features, RecordData,
};
use stress_core::evaluation::{
    ablation_table_csv, labelling_sweep, score_segment_level, score_sequence_level, AblationCell, EvalReport,
};
use stress_core::features::{feature_file, write_fseq, FeatureSequence, FeatureSource, FeatureVector, MfccConfig, MfccExtractor};
use stress_core::manifest::{read_manifest, to_jsonl, ManifestRecord, SpanRecord, Split};
use stress_core::model::{Architecture, Model, ModelConfig};
use stress_core::segmentation::concat_augment;
use stress_core::training::{metrics_csv, predict_recording, train, TrainConfig};
use stress_core::{Emotion, Error, LabellingConfig, Result};

use crate::args::*;
use crate::config::render_resolved;

pub const RUN_DIR_ENV: &str = "DYNSTRESS_RUN_DIR";

pub fn run_dir(out: &Option<PathBuf>, command: &str) -> PathBuf {
    match out {
        Some(p) => p.clone(),
        None => std::env::var_os(RUN_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(command),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Create the run directory, record it in `out`, and return it.
fn create_run_dir(out: &mut Option<PathBuf>, command: &str) -> Result<PathBuf> {
    let dir = run_dir(out, command);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    *out = Some(dir.clone());
    Ok(dir)
}

fn snapshot(dir: &Path, command: &str, args: &impl Serialize) -> Result<()> {
    write(&dir.join("resolved.conf"), render_resolved(command, args))
}

fn split_filter(split: SplitArg) -> Option<Split> {
    match split {
        SplitArg::Train => Some(Split::Train),
        SplitArg::Val => Some(Split::Val),
        SplitArg::Test => Some(Split::Test),
        SplitArg::All => None,
    }
}

fn extractor(deltas: bool) -> Result<MfccExtractor> {
    MfccExtractor::new(MfccConfig {
        deltas,
        ..MfccConfig::default()
    })
}

fn jsonl<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(&r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn segment(mut a: SegmentArgs) -> Result<String> {
    let records = read_manifest(&a.common.manifest)?;
    let dir = create_run_dir(&mut a.common.out, "segment")?;
    snapshot(&dir, "segment", &a)?;
    let mut rows = Vec::new();
    for rec in &records {
        let clip = load_clip(rec)?;
        rows.extend(segment_record(rec, &clip)?);
    }
    write(&dir.join("windows.jsonl"), jsonl(&rows)?)?;
    Ok(format!("{} windows from {} clips -> {}", rows.len(), records.len(), dir.display()))
}

pub fn augment(mut a: AugmentArgs) -> Result<String> {
    let records = read_manifest(&a.common.manifest)?;
    let dir = create_run_dir(&mut a.common.out, "augment")?;
    snapshot(&dir, "augment", &a)?;
    let mut groups: BTreeMap<(String, String), Vec<&ManifestRecord>> = BTreeMap::new();
    for rec in &records {
        groups.entry((rec.speaker_id.clone(), rec.text_id.clone())).or_default().push(rec);
    }
    let split = split_filter(a.split).unwrap_or(Split::Train);
    let mut out = Vec::new();
    for ((speaker, text), members) in groups {
        if members.len() < 2 {
            continue;
        }
        let clips = members.iter().map(|r| load_clip(r)).collect::<Result<Vec<_>>>()?;
        let emotions = members
            .iter()
            .map(|r| match r.spans.as_slice() {
                [only] => only.label.parse::<Emotion>(),
                _ => Err(Error::Augmentation(format!(
                    "{} must carry exactly one emotion span",
                    r.utterance_id
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let aug = concat_augment(&clips, &emotions, a.gap)?;
        let file = format!("{}.wav", aug.clip.utterance_id);
        write_wav(&dir.join(&file), &aug.clip.samples)?;
        out.push(ManifestRecord {
            audio_path: PathBuf::from(file),
            speaker_id: speaker,
            utterance_id: aug.clip.utterance_id.clone(),
            text_id: text,
            spans: aug
                .spans
                .iter()
                .map(|s| SpanRecord {
                    start_s: s.start_s,
                    end_s: s.end_s,
                    label: s.label.to_string(),
                })
                .collect(),
            split,
            stress: None,
            stress_spans: Vec::new(),
        });
    }
    write(&dir.join("augmented.jsonl"), to_jsonl(&out)?)?;
    Ok(format!("{} augmented clips -> {}", out.len(), dir.display()))
}

fn labelling(o: &LabelOpts) -> Result<LabellingConfig> {
    LabellingConfig::new(o.n, o.lambda, o.tau)
}

pub fn label(mut a: LabelArgs) -> Result<String> {
    let cfg = labelling(&a.labelling)?;
    let records = read_manifest(&a.common.manifest)?;
    let dir = create_run_dir(&mut a.common.out, "label")?;
    snapshot(&dir, "label", &a)?;
    let mut rows = Vec::new();
    for rec in &records {
        let clip = load_clip(rec)?;
        rows.extend(label_windows(&segment_record(rec, &clip)?, &cfg)?);
    }
    let stress = rows.iter().filter(|r| r.stress == Some(true)).count();
    write(&dir.join("labels.jsonl"), jsonl(&rows)?)?;
    Ok(format!("{} windows, {stress} labelled stress -> {}", rows.len(), dir.display()))
}

pub fn extract(mut a: ExtractArgs) -> Result<String> {
    let source: FeatureSource = a.features.features.parse()?;
    let ex = extractor(a.features.deltas)?;
    let records = read_manifest(&a.common.manifest)?;
    let dir = create_run_dir(&mut a.common.out, "extract")?;
    snapshot(&dir, "extract", &a)?;
    for rec in &records {
        let clip = load_clip(rec)?;
        let windows = segment_record(rec, &clip)?;
        let features = window_features(&clip, &windows, &source, &ex)?;
        let vectors = features
            .into_iter()
            .map(|f| FeatureVector::new(f.into_iter().map(|x| x as f32).collect()))
            .collect::<Result<Vec<_>>>()?;
        write_fseq(&feature_file(&dir, &rec.utterance_id), &FeatureSequence::contiguous(vectors)?)?;
    }
    Ok(format!("{} feature files -> {}", records.len(), dir.display()))
}

fn arch(a: ArchArg) -> Architecture {
    match a {
        ArchArg::Lstm => Architecture::Recurrent,
        ArchArg::Transformer => Architecture::Transformer,
    }
}

pub fn train_cmd(mut a: TrainArgs) -> Result<String> {
    let architecture = arch(a.arch);
    let lab = labelling(&a.labelling)?;
    let source: FeatureSource = a.features.features.parse()?;
    let ex = extractor(a.features.deltas)?;
    let mut tc = TrainConfig::for_arch(architecture);
    tc.epochs = a.epochs.unwrap_or(tc.epochs);
    a.epochs = Some(tc.epochs);
    tc.iterations_per_epoch = a.iterations;
    tc.batch_size = a.batch_size;
    tc.learning_rate = a.lr;
    tc.teacher_forcing_p = a.teacher_forcing;
    tc.seed = a.seed;
    tc.patience = a.patience;
    tc.lr_decay = a.lr_decay;
    tc.lr_decay_every = a.lr_decay_every;
    tc.validate()?;

    let records = read_manifest(&a.common.manifest)?;
    let train_data = build_split(&records, Split::Train, &source, &ex, &lab)?;
    let val_data = build_split(&records, Split::Val, &source, &ex, &lab)?;
    let (train_runs, val_runs) = (flatten_runs(&train_data), flatten_runs(&val_data));
    let dim = train_runs.first().ok_or(Error::EmptyInput("training split"))?.dim();

    let mut mc = ModelConfig::new(architecture, dim, a.labelling.n);
    mc.hidden = a.hidden;
    mc.heads = a.heads;
    mc.ffn = a.ffn;
    mc.layers = a.layers;
    mc.dropout = a.dropout;
    mc.validate()?;

    let dir = create_run_dir(&mut a.common.out, "train")?;
    snapshot(&dir, "train", &a)?;
    let outcome = train(&train_runs, &val_runs, mc, &tc)?;
    checkpoint::save(&dir.join("model.spck"), &outcome.best)?;
    write(&dir.join("metrics.csv"), metrics_csv(&outcome.log))?;
    let best = &outcome.log[outcome.best_epoch - 1];
    Ok(format!(
        "{} epochs{}; best epoch {} val_loss {:.4} val_acc {:.3} val_f1 {:.3} -> {}",
        outcome.log.len(),
        if outcome.stopped_early { " (early stop)" } else { "" },
        outcome.best_epoch,
        best.val_loss,
        best.val_acc,
        best.val_f1,
        dir.display()
    ))
}

fn select(records: &[ManifestRecord], split: SplitArg) -> Vec<ManifestRecord> {
    let want = split_filter(split);
    records
        .iter()
        .filter(|r| want.map_or(true, |s| r.split == s))
        .cloned()
        .collect()
}

fn build_selected(
    records: &[ManifestRecord],
    split: SplitArg,
    source: &FeatureSource,
    ex: &MfccExtractor,
    lab: &LabellingConfig,
) -> Result<Vec<RecordData>> {
    let selected = select(records, split);
    let mut out = Vec::new();
    for s in [Split::Train, Split::Val, Split::Test] {
        out.extend(build_split(&selected, s, source, ex, lab)?);
    }
    // keep manifest order
    out.sort_by_key(|d| selected.iter().position(|r| r.utterance_id == d.utterance_id));
    if out.is_empty() {
        return Err(Error::EmptyInput("no labelled windows in the selected split"));
    }
    Ok(out)
}

/// Score a model over records; returns the report and a per-window CSV.
fn score(model: &Model, data: &[RecordData], level: Level) -> Result<(EvalReport, String)> {
    let mut csv = String::from("utterance_id,run,window,p_valence,p_arousal,p_dominance,code,stress,target\n");
    let mut groups = Vec::new();
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for d in data {
        let mut group = Vec::new();
        for run in &d.runs {
            let p = predict_recording(model, run)?;
            for (t, (pred, target)) in p.iter().zip(&run.targets).enumerate() {
                writeln!(
                    csv,
                    "{},{},{t},{:?},{:?},{:?},\"{}\",{},\"{target}\"",
                    d.utterance_id, run.id, pred.probs[0], pred.probs[1], pred.probs[2], pred.code, pred.stress
                )
                .unwrap();
            }
            group.extend(p.iter().map(|x| x.stress));
            truths.extend(run.stress_targets());
        }
        preds.extend(group.iter().copied());
        groups.push(group);
    }
    let report = match level {
        Level::Segment => score_segment_level(&preds, &truths)?,
        Level::Sequence => {
            let seq_truths: Vec<bool> = data.iter().map(|d| d.stress).collect();
            score_sequence_level(&groups, &seq_truths)?
        }
    };
    Ok((report, csv))
}

fn report_text(level: Level, r: &EvalReport) -> String {
    let unit = match level {
        Level::Segment => "segments",
        Level::Sequence => "sequences",
    };
    let c = &r.confusion;
    format!(
        "A {:.4}  F1 {:.4}  ({} {unit}; TP {} FP {} TN {} FN {})",
        r.accuracy, r.f1, r.count, c.tp, c.fp, c.tn, c.fn_
    )
}

pub fn eval(mut a: EvalArgs) -> Result<String> {
    let model = checkpoint::load(&a.ckpt)?;
    let n = a.n.unwrap_or(model.config().context_len);
    a.n = Some(n);
    let lab = LabellingConfig::new(n, a.lambda, a.tau)?;
    let source: FeatureSource = a.features.features.parse()?;
    let ex = extractor(a.features.deltas)?;
    let records = read_manifest(&a.common.manifest)?;
    let data = build_selected(&records, a.split, &source, &ex, &lab)?;
    let dir = create_run_dir(&mut a.common.out, "eval")?;
    snapshot(&dir, "eval", &a)?;
    let (report, csv) = score(&model, &data, a.level)?;
    write(&dir.join("predictions.csv"), csv)?;
    write(&dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report_text(a.level, &report))
}

fn parse_n_list(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidConfig(format!("history list {s:?}"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("decay list {s:?}")))
        })
        .collect()
}

pub fn sweep(mut a: SweepArgs) -> Result<String> {
    let ns = parse_n_list(&a.n)?;
    let lambdas = parse_f64_list(&a.lambda)?;
    for &l in &lambdas {
        LabellingConfig::new(0, l, a.tau)?;
    }
    let records = select(&read_manifest(&a.common.manifest)?, a.split);
    let mut sequences = Vec::new();
    for rec in records.iter().filter(|r| !r.stress_spans.is_empty()) {
        sequences.extend(sweep_sequences(rec, &load_clip(rec)?)?);
    }
    if sequences.is_empty() {
        return Err(Error::EmptyInput("no clips with stress_spans references"));
    }
    let dir = create_run_dir(&mut a.common.out, "sweep")?;
    snapshot(&dir, "sweep", &a)?;
    let grid = labelling_sweep(&sequences, &ns, &lambdas, a.tau, a.tolerance)?;
    write(&dir.join("sweep_binary.csv"), grid.to_csv(false))?;
    write(&dir.join("sweep_exact.csv"), grid.to_csv(true))?;
    let summary = grid.summary();
    write(&dir.join("summary.txt"), &summary)?;
    Ok(summary)
}

pub fn ablate(mut a: AblateArgs) -> Result<String> {
    if a.features.len() != 1 && a.features.len() != a.ckpt.len() {
        return Err(Error::InvalidConfig(format!(
            "{} feature sources for {} checkpoints",
            a.features.len(),
            a.ckpt.len()
        )));
    }
    let records = read_manifest(&a.common.manifest)?;
    let ex = extractor(a.deltas)?;
    let models = a.ckpt.iter().map(|p| checkpoint::load(p)).collect::<Result<Vec<_>>>()?;
    let dir = create_run_dir(&mut a.common.out, "ablate")?;
    snapshot(&dir, "ablate", &a)?;
    let mut cells = Vec::new();
    let mut lines = String::new();
    for (i, model) in models.iter().enumerate() {
        let spec = &a.features[if a.features.len() == 1 { 0 } else { i }];
        let source: FeatureSource = spec.parse()?;
        let n = model.config().context_len;
        let lab = LabellingConfig::new(n, a.lambda, a.tau)?;
        let data = build_selected(&records, a.split, &source, &ex, &lab)?;
        let (report, _) = score(model, &data, a.level)?;
        let feature_name = match &source {
            FeatureSource::Mfcc => "mfcc".to_string(),
            FeatureSource::Files(d) => d.file_name().map_or_else(|| spec.clone(), |f| f.to_string_lossy().into_owned()),
        };
        let column = format!("{}/{feature_name}", model.config().arch);
        writeln!(lines, "n={n} {column}: {}", report_text(a.level, &report)).unwrap();
        cells.push(AblationCell {
            row: format!("n={n}"),
            column,
            report,
        });
    }
    write(&dir.join("ablation.csv"), ablation_table_csv(&cells))?;
    Ok(lines)
}
