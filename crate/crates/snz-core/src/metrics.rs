//! Classification metrics over stage sequences: accuracy, Cohen's kappa,
//! macro/weighted F1 and the row-normalized confusion matrix.

use thiserror::Error;

use crate::signal::{Stage, StageSequence};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: truth has {truth}, prediction has {prediction}")]
    LengthMismatch { truth: usize, prediction: usize },
    #[error("empty sequences")]
    Empty,
}

const C: usize = Stage::COUNT;

fn check(y: &StageSequence, y_hat: &StageSequence) -> Result<(), MetricsError> {
    if y.len() != y_hat.len() {
        return Err(MetricsError::LengthMismatch { truth: y.len(), prediction: y_hat.len() });
    }
    if y.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Raw confusion counts, `counts[true][predicted]`.
pub fn confusion_counts(
    y: &StageSequence,
    y_hat: &StageSequence,
) -> Result<[[u64; C]; C], MetricsError> {
    check(y, y_hat)?;
    let mut counts = [[0u64; C]; C];
    for (t, p) in y.stages.iter().zip(&y_hat.stages) {
        counts[t.code() as usize][p.code() as usize] += 1;
    }
    Ok(counts)
}

/// Fraction of exactly matching epochs.
pub fn accuracy(y: &StageSequence, y_hat: &StageSequence) -> Result<f64, MetricsError> {
    check(y, y_hat)?;
    let matches = y.stages.iter().zip(&y_hat.stages).filter(|(a, b)| a == b).count();
    Ok(matches as f64 / y.len() as f64)
}

/// Cohen's kappa via class-count products, equivalent to the literal
/// double-sum definition but O(T). When both sequences are the same constant
/// the chance-agreement denominator vanishes and kappa is defined as 1.
pub fn cohen_kappa(y: &StageSequence, y_hat: &StageSequence) -> Result<f64, MetricsError> {
    check(y, y_hat)?;
    let t = y.len() as f64;
    let matches = y.stages.iter().zip(&y_hat.stages).filter(|(a, b)| a == b).count() as f64;
    let mut n_true = [0u64; C];
    let mut n_pred = [0u64; C];
    for (a, b) in y.stages.iter().zip(&y_hat.stages) {
        n_true[a.code() as usize] += 1;
        n_pred[b.code() as usize] += 1;
    }
    // sum over (i, j) pairs of 1[y_i = yhat_j] collapses to per-class products
    let cross: f64 = (0..C).map(|c| n_true[c] as f64 * n_pred[c] as f64).sum();
    let denominator = t * t - cross;
    if denominator == 0.0 {
        return Ok(1.0);
    }
    Ok((t * matches - cross) / denominator)
}

/// Per-class precision, recall and F1 from confusion counts. Undefined
/// ratios (empty denominators) are reported as 0.
pub fn per_class_prf(counts: &[[u64; C]; C]) -> ([f64; C], [f64; C], [f64; C]) {
    let mut precision = [0.0; C];
    let mut recall = [0.0; C];
    let mut f1 = [0.0; C];
    for c in 0..C {
        let tp = counts[c][c] as f64;
        let predicted: u64 = (0..C).map(|r| counts[r][c]).sum();
        let actual: u64 = counts[c].iter().sum();
        precision[c] = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        recall[c] = if actual > 0 { tp / actual as f64 } else { 0.0 };
        let denom = precision[c] + recall[c];
        f1[c] = if denom > 0.0 { 2.0 * precision[c] * recall[c] / denom } else { 0.0 };
    }
    (precision, recall, f1)
}

/// Unweighted mean of the five per-class F1 scores; classes absent from both
/// sequences contribute zero.
pub fn macro_f1(y: &StageSequence, y_hat: &StageSequence) -> Result<f64, MetricsError> {
    let counts = confusion_counts(y, y_hat)?;
    let (_, _, f1) = per_class_prf(&counts);
    Ok(f1.iter().sum::<f64>() / C as f64)
}

/// Per-class F1 weighted by each class's frequency in the true labels.
pub fn weighted_f1(y: &StageSequence, y_hat: &StageSequence) -> Result<f64, MetricsError> {
    let counts = confusion_counts(y, y_hat)?;
    let (_, _, f1) = per_class_prf(&counts);
    let t = y.len() as f64;
    Ok((0..C)
        .map(|c| {
            let weight = counts[c].iter().sum::<u64>() as f64 / t;
            weight * f1[c]
        })
        .sum())
}

/// Row-normalized confusion matrix plus zero-support flags.
pub fn confusion(
    y: &StageSequence,
    y_hat: &StageSequence,
) -> Result<([[f64; C]; C], [bool; C]), MetricsError> {
    let counts = confusion_counts(y, y_hat)?;
    Ok(normalize_confusion(&counts))
}

fn normalize_confusion(counts: &[[u64; C]; C]) -> ([[f64; C]; C], [bool; C]) {
    let mut matrix = [[0.0; C]; C];
    let mut zero_support = [false; C];
    for c in 0..C {
        let row_total: u64 = counts[c].iter().sum();
        if row_total == 0 {
            zero_support[c] = true;
        } else {
            for p in 0..C {
                matrix[c][p] = counts[c][p] as f64 / row_total as f64;
            }
        }
    }
    (matrix, zero_support)
}

/// Everything the evaluator reports for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub acc: f64,
    pub kappa: f64,
    pub mf1: f64,
    pub wf1: f64,
    pub confusion: [[f64; C]; C],
    pub zero_support: [bool; C],
    pub precision: [f64; C],
    pub recall: [f64; C],
    pub epochs: usize,
}

impl MetricsReport {
    /// Pooled metrics from raw confusion counts.
    pub fn from_counts(counts: &[[u64; C]; C]) -> Result<Self, MetricsError> {
        let total: u64 = counts.iter().flatten().sum();
        if total == 0 {
            return Err(MetricsError::Empty);
        }
        let t = total as f64;
        let trace: u64 = (0..C).map(|c| counts[c][c]).sum();
        let acc = trace as f64 / t;

        let mut n_true = [0u64; C];
        let mut n_pred = [0u64; C];
        for r in 0..C {
            for p in 0..C {
                n_true[r] += counts[r][p];
                n_pred[p] += counts[r][p];
            }
        }
        let cross: f64 = (0..C).map(|c| n_true[c] as f64 * n_pred[c] as f64).sum();
        let denominator = t * t - cross;
        let kappa =
            if denominator == 0.0 { 1.0 } else { (t * trace as f64 - cross) / denominator };

        let (precision, recall, f1) = per_class_prf(counts);
        let mf1 = f1.iter().sum::<f64>() / C as f64;
        let wf1 = (0..C).map(|c| n_true[c] as f64 / t * f1[c]).sum();
        let (confusion, zero_support) = normalize_confusion(counts);
        Ok(Self {
            acc,
            kappa,
            mf1,
            wf1,
            confusion,
            zero_support,
            precision,
            recall,
            epochs: total as usize,
        })
    }

    pub fn compute(y: &StageSequence, y_hat: &StageSequence) -> Result<Self, MetricsError> {
        Self::from_counts(&confusion_counts(y, y_hat)?)
    }

    /// Metric columns as CSV (header + one row).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("acc,kappa,mf1,wf1,epochs\n");
        out.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6},{}\n",
            self.acc, self.kappa, self.mf1, self.wf1, self.epochs
        ));
        out
    }

    /// Human-readable table with the row-normalized confusion matrix.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "epochs {}  ACC {:.4}  kappa {:.4}  MF1 {:.4}  WF1 {:.4}\n",
            self.epochs, self.acc, self.kappa, self.mf1, self.wf1
        ));
        out.push_str("true\\pred      W     N1     N2     N3      R\n");
        for (c, stage) in Stage::ALL.iter().enumerate() {
            out.push_str(&format!("{:>9}", stage.name()));
            for p in 0..C {
                out.push_str(&format!(" {:>6.3}", self.confusion[c][p]));
            }
            if self.zero_support[c] {
                out.push_str("  (no support)");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(codes: &[u8]) -> StageSequence {
        StageSequence::from_codes(codes).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let a = seq(&[0, 0, 2]);
        assert_eq!(accuracy(&a, &a).unwrap(), 1.0);
        assert_eq!(accuracy(&a, &seq(&[1, 1, 3])).unwrap(), 0.0);
        assert!((accuracy(&a, &seq(&[0, 2, 2])).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_worked_example() {
        // y = [W, W, N2], yhat = [W, N2, N2]: kappa = (3*2 - 4) / (9 - 4)
        let y = seq(&[0, 0, 2]);
        let y_hat = seq(&[0, 2, 2]);
        assert!((cohen_kappa(&y, &y_hat).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn kappa_perfect_agreement_is_one() {
        let y = seq(&[0, 1, 2, 3, 4, 2, 2]);
        assert_eq!(cohen_kappa(&y, &y).unwrap(), 1.0);
        // constant identical sequences hit the zero-denominator case
        let constant = seq(&[2, 2, 2]);
        assert_eq!(cohen_kappa(&constant, &constant).unwrap(), 1.0);
    }

    #[test]
    fn kappa_matches_brute_force_double_sum() {
        let mut rng_state = 0xabcdef12u64;
        let mut next = move |m: u64| {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 33) % m
        };
        for _ in 0..200 {
            let len = 1 + next(50) as usize;
            let y = seq(&(0..len).map(|_| next(5) as u8).collect::<Vec<_>>());
            let y_hat = seq(&(0..len).map(|_| next(5) as u8).collect::<Vec<_>>());
            // literal O(T^2) definition
            let t = len as f64;
            let agree =
                y.stages.iter().zip(&y_hat.stages).filter(|(a, b)| a == b).count() as f64;
            let mut cross = 0.0f64;
            for i in 0..len {
                for j in 0..len {
                    if y.stages[i] == y_hat.stages[j] {
                        cross += 1.0;
                    }
                }
            }
            let expected =
                if t * t == cross { 1.0 } else { (t * agree - cross) / (t * t - cross) };
            let fast = cohen_kappa(&y, &y_hat).unwrap();
            assert!((fast - expected).abs() < 1e-12, "fast {fast} vs brute {expected}");
        }
    }

    #[test]
    fn f1_boundary_cases() {
        let all = seq(&[0, 1, 2, 3, 4]);
        assert_eq!(macro_f1(&all, &all).unwrap(), 1.0);
        assert_eq!(weighted_f1(&all, &all).unwrap(), 1.0);
        let y = seq(&[0, 0]);
        let y_hat = seq(&[1, 1]);
        assert_eq!(macro_f1(&y, &y_hat).unwrap(), 0.0);
        assert_eq!(weighted_f1(&y, &y_hat).unwrap(), 0.0);
    }

    #[test]
    fn confusion_worked_example() {
        let y = seq(&[0, 0]);
        let y_hat = seq(&[0, 2]);
        let (matrix, flags) = confusion(&y, &y_hat).unwrap();
        assert_eq!(matrix[0], [0.5, 0.0, 0.5, 0.0, 0.0]);
        assert!(!flags[0]);
        for c in 1..5 {
            assert!(flags[c]);
            assert_eq!(matrix[c], [0.0; 5]);
        }
    }

    #[test]
    fn confusion_identity_when_perfect() {
        let y = seq(&[0, 1, 2, 3, 4]);
        let (matrix, flags) = confusion(&y, &y).unwrap();
        for (c, row) in matrix.iter().enumerate() {
            assert!(!flags[c]);
            for (p, &cell) in row.iter().enumerate() {
                assert_eq!(cell, if c == p { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn report_matches_individual_metrics() {
        let y = seq(&[0, 1, 2, 3, 4, 0, 2, 2, 4, 1]);
        let y_hat = seq(&[0, 2, 2, 3, 4, 1, 2, 0, 4, 1]);
        let report = MetricsReport::compute(&y, &y_hat).unwrap();
        assert!((report.acc - accuracy(&y, &y_hat).unwrap()).abs() < 1e-12);
        assert!((report.kappa - cohen_kappa(&y, &y_hat).unwrap()).abs() < 1e-12);
        assert!((report.mf1 - macro_f1(&y, &y_hat).unwrap()).abs() < 1e-12);
        assert!((report.wf1 - weighted_f1(&y, &y_hat).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let y = seq(&[0, 1]);
        let y_hat = seq(&[0]);
        assert!(matches!(
            cohen_kappa(&y, &y_hat),
            Err(MetricsError::LengthMismatch { truth: 2, prediction: 1 })
        ));
    }

    #[test]
    fn permutation_invariance() {
        let y = seq(&[0, 1, 2, 3, 4, 0, 2]);
        let y_hat = seq(&[0, 2, 2, 3, 0, 0, 4]);
        // reverse both jointly
        let y_rev = StageSequence::new(y.stages.iter().rev().copied().collect());
        let y_hat_rev = StageSequence::new(y_hat.stages.iter().rev().copied().collect());
        assert_eq!(accuracy(&y, &y_hat).unwrap(), accuracy(&y_rev, &y_hat_rev).unwrap());
        assert_eq!(cohen_kappa(&y, &y_hat).unwrap(), cohen_kappa(&y_rev, &y_hat_rev).unwrap());
        assert_eq!(macro_f1(&y, &y_hat).unwrap(), macro_f1(&y_rev, &y_hat_rev).unwrap());
        assert_eq!(weighted_f1(&y, &y_hat).unwrap(), weighted_f1(&y_rev, &y_hat_rev).unwrap());
    }
}
