//! Concordance statistics, the multi-task emotion loss and the embedding
//! distillation loss.
//!
//! All moments are population moments (divide by `N`), so the factorisation
//! `ccc = rho * c_b` holds to rounding for every non-degenerate input.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::Label;
use crate::error::{Error, Result};

pub const DIMENSIONS: [&str; 3] = ["activation", "valence", "dominance"];

/// Guard inside the square root of the per-utterance embedding distance.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CccStats {
    pub ccc: f64,
    pub rho: f64,
    pub c_b: f64,
    pub mean_pred: f64,
    pub mean_label: f64,
    pub var_pred: f64,
    pub var_label: f64,
    pub cov: f64,
}

/// Concordance correlation coefficient with its Pearson / bias-correction
/// factorisation.
///
/// A constant prediction is not an error: `ccc` follows directly from the
/// definition (it is 0 because the covariance vanishes) and both `rho` and
/// `c_b` are reported as 0.
pub fn ccc_stats(pred: &[f32], label: &[f32]) -> Result<CccStats> {
    if pred.len() != label.len() {
        return Err(Error::invalid(format!(
            "ccc: {} predictions for {} labels",
            pred.len(),
            label.len()
        )));
    }
    let n = pred.len();
    if n < 2 {
        return Err(Error::invalid(format!("ccc needs at least 2 samples, got {n}")));
    }
    let nf = n as f64;
    let mean_pred = pred.iter().map(|&v| v as f64).sum::<f64>() / nf;
    let mean_label = label.iter().map(|&v| v as f64).sum::<f64>() / nf;
    let (mut var_pred, mut var_label, mut cov) = (0.0, 0.0, 0.0);
    for (&p, &y) in pred.iter().zip(label) {
        let (dp, dy) = (p as f64 - mean_pred, y as f64 - mean_label);
        var_pred += dp * dp;
        var_label += dy * dy;
        cov += dp * dy;
    }
    var_pred /= nf;
    var_label /= nf;
    cov /= nf;
    if var_label <= 0.0 {
        return Err(Error::invalid("ccc: labels have zero variance"));
    }
    let shift = mean_pred - mean_label;
    let denom = var_pred + var_label + shift * shift;
    let ccc = 2.0 * cov / denom;
    let (rho, c_b) = if var_pred > 0.0 {
        let scale = (var_pred * var_label).sqrt();
        (cov / scale, 2.0 * scale / denom)
    } else {
        (0.0, 0.0)
    };
    Ok(CccStats {
        ccc,
        rho,
        c_b,
        mean_pred,
        mean_label,
        var_pred,
        var_label,
        cov,
    })
}

/// Per-dimension concordance over a whole split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CccReport {
    pub n: usize,
    pub activation: CccStats,
    pub valence: CccStats,
    pub dominance: CccStats,
}

impl CccReport {
    pub fn from_predictions(preds: &[Label], labels: &[Label]) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} predictions for {} labels",
                preds.len(),
                labels.len()
            )));
        }
        let column = |rows: &[Label], j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f32>>();
        let stats = |j| ccc_stats(&column(preds, j), &column(labels, j));
        Ok(Self {
            n: preds.len(),
            activation: stats(0)?,
            valence: stats(1)?,
            dominance: stats(2)?,
        })
    }

    pub fn dims(&self) -> [&CccStats; 3] {
        [&self.activation, &self.valence, &self.dominance]
    }

    pub fn ccc(&self) -> [f64; 3] {
        self.dims().map(|d| d.ccc)
    }

    pub fn mean_ccc(&self) -> f64 {
        self.ccc().iter().sum::<f64>() / 3.0
    }

    /// `Σ_j α_j (1 - CCC_j)` from the report's statistics.
    pub fn emotion_loss(&self, alpha: &[f64; 3]) -> f64 {
        self.ccc().iter().zip(alpha).map(|(c, a)| a * (1.0 - c)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: [f64; 3],
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: [1.0; 3],
            lambda: 30.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config(format!("alpha weights must be >= 0, got {:?}", self.alpha)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Multi-task CCC loss `Σ_j α_j (1 - CCC_j)` over an `[N, 3]` batch.
pub fn emotion_loss(tape: &mut Tape, pred: Var, label: Var, cfg: &LossConfig) -> Result<Var> {
    let shape = tape.shape(pred).to_vec();
    if shape.len() != 2 || shape[1] != 3 || tape.shape(label) != shape.as_slice() {
        return Err(Error::Shape {
            op: "emotion_loss",
            lhs: shape,
            rhs: tape.shape(label).to_vec(),
        });
    }
    if shape[0] < 2 {
        return Err(Error::invalid(format!("emotion loss needs at least 2 utterances, got {}", shape[0])));
    }

    let mu_p = tape.mean_axis(pred, 0)?;
    let mu_y = tape.mean_axis(label, 0)?;
    let dp = tape.sub(pred, mu_p)?;
    let dy = tape.sub(label, mu_y)?;
    let var_y = {
        let sq = tape.square(dy)?;
        tape.mean_axis(sq, 0)?
    };
    if tape.values(var_y).iter().any(|&v| v <= 0.0) {
        return Err(Error::invalid("emotion loss: a label dimension has zero variance in the batch"));
    }
    let cov = {
        let prod = tape.mul(dp, dy)?;
        tape.mean_axis(prod, 0)?
    };
    let var_p = {
        let sq = tape.square(dp)?;
        tape.mean_axis(sq, 0)?
    };
    let shift = {
        let d = tape.sub(mu_p, mu_y)?;
        tape.square(d)?
    };
    let denom = {
        let a = tape.add(var_p, var_y)?;
        tape.add(a, shift)?
    };
    let num = tape.scale(cov, 2.0)?;
    let ccc = tape.div(num, denom)?;

    let one_minus = {
        let neg = tape.scale(ccc, -1.0)?;
        tape.add_scalar(neg, 1.0)?
    };
    let alpha = tape.constant(&Tensor::row(cfg.alpha.map(|a| a as f32).to_vec()));
    let weighted = tape.mul(one_minus, alpha)?;
    tape.sum(weighted)
}

/// Mean over rows of `||teacher_i - student_i||`. Gradients never reach
/// `teacher`. An empty batch (`M = 0`) yields a constant zero.
pub fn student_loss(tape: &mut Tape, teacher: Var, student: Var) -> Result<Var> {
    let (ts, ss) = (tape.shape(teacher).to_vec(), tape.shape(student).to_vec());
    if ts != ss || ts.len() != 2 {
        return Err(Error::Shape {
            op: "student_loss",
            lhs: ts,
            rhs: ss,
        });
    }
    if ts[0] == 0 {
        return Ok(tape.constant(&Tensor::scalar(0.0)));
    }
    let target = tape.detach(teacher);
    let diff = tape.sub(target, student)?;
    let sq = tape.square(diff)?;
    let per_row = tape.sum_axis(sq, 1)?;
    let guarded = tape.add_scalar(per_row, NORM_EPS)?;
    let norms = tape.sqrt(guarded)?;
    tape.mean(norms)
}

/// `l_emo + λ · l_stu`.
pub fn total_loss(tape: &mut Tape, l_emo: Var, l_stu: Var, cfg: &LossConfig) -> Result<Var> {
    for v in [l_emo, l_stu] {
        if tape.values(v).len() != 1 {
            return Err(Error::invalid("total_loss expects scalar inputs"));
        }
    }
    let weighted = tape.scale(l_stu, cfg.lambda)?;
    tape.add(l_emo, weighted)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LABEL: [f32; 3] = [-1.0, 0.0, 1.0];

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-6
    }

    #[test]
    fn perfect_agreement() {
        let s = ccc_stats(&LABEL, &LABEL).unwrap();
        assert!(close(s.ccc, 1.0) && close(s.rho, 1.0) && close(s.c_b, 1.0));
    }

    #[test]
    fn mean_shift_by_one() {
        let pred = LABEL.map(|v| v + 1.0);
        let s = ccc_stats(&pred, &LABEL).unwrap();
        assert!(close(s.ccc, 4.0 / 7.0), "{}", s.ccc);
        assert!(close(s.rho, 1.0));
        assert!(close(s.c_b, 4.0 / 7.0));
    }

    #[test]
    fn doubled_scale() {
        let pred = LABEL.map(|v| 2.0 * v);
        let s = ccc_stats(&pred, &LABEL).unwrap();
        assert!(close(s.ccc, 0.8) && close(s.rho, 1.0) && close(s.c_b, 0.8));
    }

    #[test]
    fn anti_agreement() {
        let pred = LABEL.map(|v| -v);
        let s = ccc_stats(&pred, &LABEL).unwrap();
        assert!(close(s.ccc, -1.0) && close(s.rho, -1.0) && close(s.c_b, 1.0));
    }

    #[test]
    fn constant_prediction_is_degenerate_not_error() {
        let s = ccc_stats(&[0.3; 3], &LABEL).unwrap();
        assert_eq!((s.ccc, s.rho, s.c_b), (0.0, 0.0, 0.0));
    }

    #[test]
    fn contract_errors() {
        assert!(ccc_stats(&[1.0], &[1.0]).is_err());
        assert!(ccc_stats(&[1.0, 2.0], &[0.5, 0.5]).is_err());
        assert!(ccc_stats(&[1.0, 2.0], &[0.5]).is_err());
    }

    fn batch(tape: &mut Tape, rows: &[[f32; 3]], grad: bool) -> Var {
        let t = Tensor::new([rows.len(), 3], rows.concat()).unwrap();
        if grad {
            tape.param(&t)
        } else {
            tape.constant(&t)
        }
    }

    fn labels3() -> Vec<[f32; 3]> {
        LABEL.iter().map(|&v| [v, v, v]).collect()
    }

    #[test]
    fn emotion_loss_examples() {
        let cfg = LossConfig::default();
        let y = labels3();
        let cases: [(Vec<[f32; 3]>, f64); 3] = [
            (y.clone(), 0.0),
            (y.iter().map(|r| r.map(|v| -v)).collect(), 6.0),
            (y.iter().map(|r| r.map(|v| v + 1.0)).collect(), 9.0 / 7.0),
        ];
        for (pred, want) in cases {
            let mut t = Tape::new();
            let p = batch(&mut t, &pred, true);
            let l = batch(&mut t, &y, false);
            let loss = emotion_loss(&mut t, p, l, &cfg).unwrap();
            assert!((t.scalar(loss).unwrap() - want).abs() < 1e-6);
        }
    }

    #[test]
    fn emotion_loss_needs_two_rows() {
        let mut t = Tape::new();
        let p = batch(&mut t, &[[0.0; 3]], true);
        let l = batch(&mut t, &[[1.0; 3]], false);
        assert!(emotion_loss(&mut t, p, l, &LossConfig::default()).is_err());
    }

    #[test]
    fn student_loss_examples() {
        let mut t = Tape::new();
        let a = t.constant(&Tensor::new([1, 4], vec![3.0, 4.0, 0.0, 0.0]).unwrap());
        let b = t.param(&Tensor::zeros([1, 4]));
        let l = student_loss(&mut t, a, b).unwrap();
        assert!((t.scalar(l).unwrap() - 5.0).abs() < 1e-6);

        let same = student_loss(&mut t, a, a).unwrap();
        assert!(t.scalar(same).unwrap() < 1e-5);

        let a = t.constant(&Tensor::new([2, 2], vec![3.0, 4.0, 1.0, 0.0]).unwrap());
        let b = t.param(&Tensor::zeros([2, 2]));
        let l = student_loss(&mut t, a, b).unwrap();
        assert!((t.scalar(l).unwrap() - 3.0).abs() < 1e-6);

        let empty = t.constant(&Tensor::zeros([0, 2]));
        let l = student_loss(&mut t, empty, empty).unwrap();
        assert_eq!(t.scalar(l).unwrap(), 0.0);
    }

    #[test]
    fn total_loss_examples() {
        for (emo, stu, lambda, want) in [(1.0, 0.0, 30.0, 1.0), (0.0, 2.0, 30.0, 60.0), (0.5, 0.1, 3.0, 0.8)] {
            let mut t = Tape::new();
            let e = t.constant(&Tensor::scalar(emo));
            let s = t.constant(&Tensor::scalar(stu));
            let cfg = LossConfig {
                lambda,
                ..LossConfig::default()
            };
            let l = total_loss(&mut t, e, s, &cfg).unwrap();
            assert!((t.scalar(l).unwrap() - want).abs() < 1e-6);
        }
    }

    #[test]
    fn loss_config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        let bad = LossConfig {
            alpha: [1.0, -1.0, 1.0],
            ..LossConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
