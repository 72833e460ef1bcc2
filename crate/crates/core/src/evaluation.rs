//! Segment- and sequence-level scoring, majority voting, and the grids used
//! to compare labelling settings and trained models.
//!
//! The positive class is stress throughout.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::labelling::{relabel_sequence, LabellingConfig};
use crate::vad::{is_stress, VadCode};

/// History lengths and decay rates of the published labelling grid.
pub const SWEEP_N: [usize; 6] = [0, 1, 2, 3, 4, 5];
pub const SWEEP_LAMBDA: [f64; 4] = [0.01, 0.1, 0.8, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Confusion::default();
        for (pred, truth) in pairs {
            match (pred, truth) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => (self.tp + self.tn) as f64 / n as f64,
        }
    }

    /// `2TP / (2TP + FP + FN)`, with 0/0 taken as 0.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub f1: f64,
    /// Number of scored units: recordings at sequence level, windows at segment level.
    pub count: usize,
    pub confusion: Confusion,
}

impl EvalReport {
    pub fn from_confusion(confusion: Confusion) -> Self {
        EvalReport {
            accuracy: confusion.accuracy(),
            f1: confusion.f1(),
            count: confusion.total(),
            confusion,
        }
    }
}

/// True when stress windows are at least as many as non-stress ones.
pub fn majority_vote(window_stress: &[bool]) -> Result<bool> {
    if window_stress.is_empty() {
        return Err(Error::EmptyInput("majority_vote"));
    }
    let stress = window_stress.iter().filter(|&&s| s).count();
    Ok(2 * stress >= window_stress.len())
}

pub fn score_segment_level(predictions: &[bool], truths: &[bool]) -> Result<EvalReport> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("segment-level scoring"));
    }
    Ok(EvalReport::from_confusion(Confusion::from_pairs(
        predictions.iter().copied().zip(truths.iter().copied()),
    )))
}

/// One majority vote per recording, compared with its single ground truth.
pub fn score_sequence_level(groups: &[Vec<bool>], truths: &[bool]) -> Result<EvalReport> {
    if groups.len() != truths.len() {
        return Err(Error::LengthMismatch(format!(
            "{} recordings for {} truths",
            groups.len(),
            truths.len()
        )));
    }
    if groups.is_empty() {
        return Err(Error::EmptyInput("sequence-level scoring"));
    }
    let votes = groups
        .iter()
        .map(|g| majority_vote(g))
        .collect::<Result<Vec<_>>>()?;
    score_segment_level(&votes, truths)
}

/// Emotion codes of one recording with reference stress labels at some windows.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSequence {
    pub emotions: Vec<VadCode>,
    /// `(window index, reference code)`; indices may fall outside the
    /// emotion range, in which case the closest window is used.
    pub references: Vec<(usize, VadCode)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Agreement {
    /// Stress/non-stress agreement.
    pub binary: f64,
    /// Exact code agreement.
    pub exact: f64,
    pub compared: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub n_values: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub tau: f64,
    /// `cells[row for n][column for lambda]`
    pub cells: Vec<Vec<Agreement>>,
}

/// Agreement between relabelled windows and reference labels for one setting.
///
/// A reference at window `r` is compared with the closest window of the
/// sequence if that window is at most `tolerance` windows away.
pub fn labelling_agreement(
    sequences: &[SweepSequence],
    config: &LabellingConfig,
    tolerance: usize,
) -> Result<Agreement> {
    let mut compared = 0usize;
    let mut binary = 0usize;
    let mut exact = 0usize;
    for seq in sequences {
        if seq.emotions.is_empty() {
            continue;
        }
        let labels = relabel_sequence(&seq.emotions, config)?;
        let last = labels.len() - 1;
        for &(r, reference) in &seq.references {
            let closest = r.min(last);
            if r - closest > tolerance {
                continue;
            }
            let got = labels[closest];
            compared += 1;
            binary += (is_stress(got) == is_stress(reference)) as usize;
            exact += (got == reference) as usize;
        }
    }
    if compared == 0 {
        return Err(Error::EmptyInput("labelling sweep references"));
    }
    Ok(Agreement {
        binary: binary as f64 / compared as f64,
        exact: exact as f64 / compared as f64,
        compared,
    })
}

pub fn labelling_sweep(
    sequences: &[SweepSequence],
    n_values: &[usize],
    lambdas: &[f64],
    tau: f64,
    tolerance: usize,
) -> Result<SweepGrid> {
    if sequences.is_empty() || n_values.is_empty() || lambdas.is_empty() {
        return Err(Error::EmptyInput("labelling sweep"));
    }
    let cells = n_values
        .iter()
        .map(|&n| {
            lambdas
                .iter()
                .map(|&lambda| labelling_agreement(sequences, &LabellingConfig::new(n, lambda, tau)?, tolerance))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepGrid {
        n_values: n_values.to_vec(),
        lambdas: lambdas.to_vec(),
        tau,
        cells,
    })
}

fn percent(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

impl SweepGrid {
    /// Rows `n`, columns `lambda`; `exact` selects code agreement instead of binary.
    pub fn to_csv(&self, exact: bool) -> String {
        let mut out = String::from("n");
        for l in &self.lambdas {
            write!(out, ",{l}").unwrap();
        }
        out.push('\n');
        for (n, row) in self.n_values.iter().zip(&self.cells) {
            write!(out, "{n}").unwrap();
            for cell in row {
                let v = if exact { cell.exact } else { cell.binary };
                write!(out, ",{}", percent(v)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!("labelling agreement (%), tau = {}\n", self.tau);
        for (title, exact) in [("binary stress agreement", false), ("exact code agreement", true)] {
            writeln!(out, "\n{title}").unwrap();
            write!(out, "{:>6}", "n\\λ").unwrap();
            for l in &self.lambdas {
                write!(out, "{l:>8}").unwrap();
            }
            out.push('\n');
            for (n, row) in self.n_values.iter().zip(&self.cells) {
                write!(out, "{n:>6}").unwrap();
                for cell in row {
                    let v = if exact { cell.exact } else { cell.binary };
                    write!(out, "{:>8}", percent(v)).unwrap();
                }
                out.push('\n');
            }
        }
        out
    }
}

/// One evaluated cell of an ablation table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationCell {
    pub row: String,
    pub column: String,
    pub report: EvalReport,
}

/// Pivot cells into a table with one `A`/`F1` column pair per column key,
/// in first-seen order for both rows and columns.
pub fn ablation_table_csv(cells: &[AblationCell]) -> String {
    let mut rows: Vec<&str> = Vec::new();
    let mut cols: Vec<&str> = Vec::new();
    for c in cells {
        if !rows.contains(&c.row.as_str()) {
            rows.push(&c.row);
        }
        if !cols.contains(&c.column.as_str()) {
            cols.push(&c.column);
        }
    }
    let mut out = String::from("row");
    for c in &cols {
        write!(out, ",{c} A,{c} F1").unwrap();
    }
    out.push('\n');
    for r in &rows {
        out.push_str(r);
        for c in &cols {
            match cells.iter().find(|x| x.row == *r && x.column == *c) {
                Some(x) => write!(out, ",{:.2},{:.2}", x.report.accuracy, x.report.f1).unwrap(),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vad::{encode_emotion, Emotion, STRESS};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn voting() {
        assert!(majority_vote(&[true, true, false]).unwrap());
        assert!(!majority_vote(&[false, false, false, true]).unwrap());
        assert!(majority_vote(&[true, false]).unwrap());
        assert!(majority_vote(&[]).is_err());
        assert!(majority_vote(&[true]).unwrap());
        assert!(!majority_vote(&[false]).unwrap());
    }

    #[test]
    fn sequence_level_examples() {
        let r = score_sequence_level(&[vec![true, true, true]], &[true]).unwrap();
        assert_eq!((r.accuracy, r.f1), (1.0, 1.0));

        let r = score_sequence_level(&[vec![true], vec![true]], &[true, false]).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.count, 2);

        assert!(score_sequence_level(&[vec![true]], &[true, false]).is_err());
        assert!(score_sequence_level(&[vec![]], &[true]).is_err());
    }

    #[test]
    fn segment_level_examples() {
        let r = score_segment_level(&[true, false, true], &[true, false, true]).unwrap();
        assert_eq!((r.accuracy, r.f1), (1.0, 1.0));
        let r = score_segment_level(&[true, false, false, false], &[true, true, false, false]).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.confusion, Confusion { tp: 1, fp: 0, tn: 2, fn_: 1 });
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
        // no positives anywhere
        let r = score_segment_level(&[false, false], &[false, false]).unwrap();
        assert_eq!((r.accuracy, r.f1), (1.0, 0.0));
        assert!(score_segment_level(&[true], &[]).is_err());
    }

    #[test]
    fn segment_level_matches_counting_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let preds: Vec<bool> = (0..300).map(|_| rng.gen()).collect();
        let truths: Vec<bool> = (0..300).map(|_| rng.gen_bool(0.3)).collect();
        let r = score_segment_level(&preds, &truths).unwrap();
        let correct = preds.iter().zip(&truths).filter(|(p, t)| p == t).count();
        let tp = preds.iter().zip(&truths).filter(|(p, t)| **p && **t).count();
        let precision = tp as f64 / preds.iter().filter(|&&p| p).count() as f64;
        let recall = tp as f64 / truths.iter().filter(|&&t| t).count() as f64;
        assert_eq!(r.accuracy, correct as f64 / 300.0);
        assert!((r.f1 - 2.0 * precision * recall / (precision + recall)).abs() < 1e-12);
    }

    #[test]
    fn swapping_roles_transposes_errors() {
        let p = [true, false, true, true, false];
        let t = [false, false, true, false, true];
        let a = score_segment_level(&p, &t).unwrap().confusion;
        let b = score_segment_level(&t, &p).unwrap().confusion;
        assert_eq!((a.fp, a.fn_), (b.fn_, b.fp));
        assert_eq!((a.tp, a.tn), (b.tp, b.tn));
    }

    proptest! {
        #[test]
        fn permutation_invariance(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60), seed in any::<u64>()) {
            let (p, t): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
            let mut idx: Vec<usize> = (0..p.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..idx.len()).rev() {
                idx.swap(i, rng.gen_range(0..=i));
            }
            let pp: Vec<bool> = idx.iter().map(|&i| p[i]).collect();
            let tt: Vec<bool> = idx.iter().map(|&i| t[i]).collect();
            prop_assert_eq!(score_segment_level(&p, &t).unwrap(), score_segment_level(&pp, &tt).unwrap());
        }
    }

    fn seq(emotions: &[Emotion]) -> Vec<VadCode> {
        emotions.iter().map(|&e| encode_emotion(e)).collect()
    }

    #[test]
    fn sweep_against_own_output_is_perfect() {
        let emotions = seq(&[Emotion::Fear, Emotion::Anger, Emotion::Happiness, Emotion::Fear, Emotion::Sadness]);
        let cfg = LabellingConfig::new(2, 0.8, 0.5).unwrap();
        let refs = relabel_sequence(&emotions, &cfg).unwrap();
        let s = SweepSequence {
            emotions,
            references: refs.into_iter().enumerate().collect(),
        };
        let grid = labelling_sweep(&[s], &[2], &[0.8], 0.5, 0).unwrap();
        assert_eq!(grid.cells[0][0].binary, 1.0);
        assert_eq!(grid.cells[0][0].exact, 1.0);
    }

    #[test]
    fn sweep_first_row_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sequences: Vec<SweepSequence> = (0..10)
            .map(|_| {
                let emotions: Vec<VadCode> = (0..30).map(|_| encode_emotion(Emotion::ALL[rng.gen_range(0..6)])).collect();
                let references = (0..30).step_by(3).map(|i| (i, if rng.gen() { STRESS } else { emotions[i] })).collect();
                SweepSequence { emotions, references }
            })
            .collect();
        let grid = labelling_sweep(&sequences, &SWEEP_N, &SWEEP_LAMBDA, 0.5, 0).unwrap();
        assert_eq!(grid.cells.len(), 6);
        for cell in &grid.cells[0] {
            assert_eq!(cell, &grid.cells[0][0]);
        }
        let csv = grid.to_csv(false);
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("n,0.01,0.1,0.8,1\n"));
    }

    #[test]
    fn lagged_fear_episodes_need_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sequences: Vec<SweepSequence> = (0..20)
            .map(|_| {
                let emotions: Vec<VadCode> = (0..40)
                    .map(|_| encode_emotion(if rng.gen_bool(0.15) { Emotion::Fear } else { Emotion::Sadness }))
                    .collect();
                // stress lasts two windows beyond each fear window
                let references = (0..emotions.len())
                    .map(|t| {
                        let recent = (t.saturating_sub(2)..=t).any(|u| emotions[u] == STRESS);
                        (t, if recent { STRESS } else { emotions[t] })
                    })
                    .collect();
                SweepSequence { emotions, references }
            })
            .collect();
        let grid = labelling_sweep(&sequences, &[0, 1, 2], &[0.1], 0.4, 0).unwrap();
        let acc: Vec<f64> = grid.cells.iter().map(|row| row[0].binary).collect();
        assert!(acc[0] < acc[1] && acc[1] < acc[2], "{acc:?}");
    }

    #[test]
    fn references_beyond_tolerance_are_skipped() {
        let s = SweepSequence {
            emotions: vec![STRESS; 3],
            references: vec![(2, STRESS), (4, STRESS), (9, STRESS)],
        };
        let cfg = LabellingConfig::default();
        assert_eq!(labelling_agreement(&[s.clone()], &cfg, 0).unwrap().compared, 1);
        assert_eq!(labelling_agreement(&[s.clone()], &cfg, 2).unwrap().compared, 2);
        let none = SweepSequence {
            emotions: vec![STRESS],
            references: vec![],
        };
        assert!(labelling_agreement(&[none], &cfg, 0).is_err());
    }

    #[test]
    fn ablation_pivot() {
        let rep = |a: f64| EvalReport {
            accuracy: a,
            f1: a,
            count: 1,
            confusion: Confusion::default(),
        };
        let cells = vec![
            AblationCell { row: "n=3".into(), column: "lstm".into(), report: rep(0.8) },
            AblationCell { row: "n=3".into(), column: "transformer".into(), report: rep(0.81) },
            AblationCell { row: "n=4".into(), column: "lstm".into(), report: rep(0.9) },
        ];
        let csv = ablation_table_csv(&cells);
        assert_eq!(
            csv,
            "row,lstm A,lstm F1,transformer A,transformer F1\nn=3,0.80,0.80,0.81,0.81\nn=4,0.90,0.90,,\n"
        );
    }
}
