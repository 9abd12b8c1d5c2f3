//! Residual gate for conditional teacher-student training.
//!
//! For each emotion dimension a scalar least-squares line maps the teacher's
//! prediction onto the label. An utterance whose residual exceeds `tau`
//! standard deviations in any dimension is excluded from the distillation
//! loss (it still contributes to the CCC loss).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

pub const DEFAULT_TAU: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionFit {
    pub w: f64,
    pub b: f64,
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualModel {
    pub dims: [DimensionFit; 3],
}

impl ResidualModel {
    /// `w_j · pred_j + b_j - label_j` for each dimension.
    pub fn residuals(&self, pred: &Label, label: &Label) -> [f64; 3] {
        std::array::from_fn(|j| {
            let d = &self.dims[j];
            d.w * pred[j] as f64 + d.b - label[j] as f64
        })
    }
}

fn fit_line(x: &[f64], y: &[f64]) -> Result<DimensionFit> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 {
        return Err(Error::invalid("teacher predictions have zero variance; slope undefined"));
    }
    let w = sxy / sxx;
    let b = my - w * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, c)| (w * a + b - c).powi(2)).sum();
    Ok(DimensionFit {
        w,
        b,
        sigma: (ss / n).sqrt(),
    })
}

/// Fits one regression line per dimension from teacher predictions to labels.
pub fn fit_residual_model(teacher_preds: &[Label], labels: &[Label]) -> Result<ResidualModel> {
    if teacher_preds.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} teacher predictions for {} labels",
            teacher_preds.len(),
            labels.len()
        )));
    }
    if teacher_preds.len() < 3 {
        return Err(Error::invalid(format!(
            "residual model needs at least 3 utterances, got {}",
            teacher_preds.len()
        )));
    }
    let mut dims = [DimensionFit {
        w: 0.0,
        b: 0.0,
        sigma: 0.0,
    }; 3];
    for (j, d) in dims.iter_mut().enumerate() {
        let x: Vec<f64> = teacher_preds.iter().map(|p| p[j] as f64).collect();
        let y: Vec<f64> = labels.iter().map(|l| l[j] as f64).collect();
        *d = fit_line(&x, &y).map_err(|e| Error::invalid(format!("dimension {j}: {e}")))?;
    }
    Ok(ResidualModel { dims })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub id: String,
    pub residuals: [f64; 3],
    pub keep: bool,
}

/// Per-utterance include/exclude decision for the distillation loss.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterMask {
    pub tau: f64,
    pub entries: Vec<MaskEntry>,
}

/// Whether dimension `j` exceeds its threshold. A dimension with zero residual
/// spread never triggers.
fn exceeds(model: &ResidualModel, residuals: &[f64; 3], tau: f64, j: usize) -> bool {
    let sigma = model.dims[j].sigma;
    sigma > 0.0 && residuals[j].abs() > tau * sigma
}

pub fn compute_mask(
    model: &ResidualModel,
    ids: &[String],
    teacher_preds: &[Label],
    labels: &[Label],
    tau: f64,
) -> Result<FilterMask> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if ids.len() != teacher_preds.len() || ids.len() != labels.len() {
        return Err(Error::invalid("ids, predictions and labels differ in length"));
    }
    let entries = ids
        .iter()
        .zip(teacher_preds.iter().zip(labels))
        .map(|(id, (p, y))| {
            let residuals = model.residuals(p, y);
            let keep = !(0..3).any(|j| exceeds(model, &residuals, tau, j));
            MaskEntry {
                id: id.clone(),
                residuals,
                keep,
            }
        })
        .collect();
    Ok(FilterMask { tau, entries })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterStats {
    pub total: usize,
    pub kept: usize,
    pub discarded: usize,
    pub fraction: f64,
    /// Discards attributed to each dimension whose threshold they exceeded.
    pub triggers: [usize; 3],
}

pub fn filter_stats(model: &ResidualModel, mask: &FilterMask) -> Result<FilterStats> {
    let total = mask.entries.len();
    if total == 0 {
        return Err(Error::invalid("filter statistics of an empty mask"));
    }
    let kept = mask.entries.iter().filter(|e| e.keep).count();
    let mut triggers = [0usize; 3];
    for e in mask.entries.iter().filter(|e| !e.keep) {
        for (j, t) in triggers.iter_mut().enumerate() {
            if exceeds(model, &e.residuals, mask.tau, j) {
                *t += 1;
            }
        }
    }
    let discarded = total - kept;
    Ok(FilterStats {
        total,
        kept,
        discarded,
        fraction: discarded as f64 / total as f64,
        triggers,
    })
}

impl FilterMask {
    pub fn kept_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|e| e.keep).map(|e| e.id.as_str())
    }

    pub fn is_kept(&self, id: &str) -> Option<bool> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.keep)
    }

    /// `id,r_A,r_V,r_D,keep` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,r_A,r_V,r_D,keep\n");
        for e in &self.entries {
            let [a, v, d] = e.residuals;
            let _ = writeln!(out, "{},{a},{v},{d},{}", e.id, u8::from(e.keep));
        }
        out
    }

    pub fn from_csv(text: &str, tau: f64) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "id,r_A,r_V,r_D,keep" => {}
            _ => return Err(Error::data("mask CSV: missing header id,r_A,r_V,r_D,keep")),
        }
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(Error::data(format!("mask CSV line {}: expected 5 columns", n + 2)));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::data(format!("mask CSV line {}: {e}", n + 2)))
            };
            let keep = match cols[4].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(Error::data(format!("mask CSV line {}: bad keep flag {other:?}", n + 2))),
            };
            entries.push(MaskEntry {
                id: cols[0].to_string(),
                residuals: [num(cols[1])?, num(cols[2])?, num(cols[3])?],
                keep,
            });
        }
        Ok(Self { tau, entries })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, DEFAULT_TAU)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("u{i}")).collect()
    }

    fn labels() -> Vec<Label> {
        vec![
            [-1.0, 0.5, 0.2],
            [0.0, -0.5, 0.9],
            [1.0, 0.1, -0.4],
            [0.4, 0.8, 0.0],
            [-0.6, -0.9, 0.3],
        ]
    }

    #[test]
    fn exact_fit() {
        let y = labels();
        let m = fit_residual_model(&y, &y).unwrap();
        for d in m.dims {
            assert!((d.w - 1.0).abs() < 1e-9 && d.b.abs() < 1e-9 && d.sigma < 1e-9);
        }
        let mask = compute_mask(&m, &ids(5), &y, &y, 2.0).unwrap();
        assert!(mask.entries.iter().all(|e| e.keep));
        assert_eq!(filter_stats(&m, &mask).unwrap().fraction, 0.0);
    }

    #[test]
    fn affine_teacher_is_absorbed() {
        let y = labels();
        let p: Vec<Label> = y.iter().map(|r| r.map(|v| 2.0 * v + 3.0)).collect();
        let m = fit_residual_model(&p, &y).unwrap();
        for d in m.dims {
            assert!((d.w - 0.5).abs() < 1e-6, "{}", d.w);
            assert!((d.b + 1.5).abs() < 1e-6, "{}", d.b);
            assert!(d.sigma < 1e-6);
        }
    }

    #[test]
    fn any_dimension_excludes() {
        let m = ResidualModel {
            dims: [DimensionFit {
                w: 1.0,
                b: 0.0,
                sigma: 1.0,
            }; 3],
        };
        let mask = compute_mask(&m, &ids(1), &[[0.0, 3.0, 0.0]], &[[0.0; 3]], 2.0).unwrap();
        assert!(!mask.entries[0].keep);
        let stats = filter_stats(&m, &mask).unwrap();
        assert_eq!(stats.triggers, [0, 1, 0]);
    }

    #[test]
    fn stats_arithmetic() {
        let m = ResidualModel {
            dims: [DimensionFit {
                w: 1.0,
                b: 0.0,
                sigma: 1.0,
            }; 3],
        };
        let entries = (0..1000)
            .map(|i| MaskEntry {
                id: format!("u{i}"),
                residuals: if i < 127 { [5.0, 0.0, 0.0] } else { [0.0; 3] },
                keep: i >= 127,
            })
            .collect();
        let mask = FilterMask { tau: 2.0, entries };
        let s = filter_stats(&m, &mask).unwrap();
        assert_eq!((s.kept, s.discarded), (873, 127));
        assert!((s.fraction - 0.127).abs() < 1e-12);
        assert_eq!(s.triggers, [127, 0, 0]);
    }

    #[test]
    fn contract_errors() {
        let y = labels();
        assert!(fit_residual_model(&y[..2], &y[..2]).is_err());
        let flat: Vec<Label> = y.iter().map(|_| [0.5, 0.1, 0.2]).collect();
        assert!(fit_residual_model(&flat, &y).is_err());
        let m = fit_residual_model(&y, &y).unwrap();
        assert!(compute_mask(&m, &ids(5), &y, &y, 0.0).is_err());
        let empty = FilterMask {
            tau: 2.0,
            entries: vec![],
        };
        assert!(filter_stats(&m, &empty).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let y = labels();
        let p: Vec<Label> = y.iter().map(|r| [r[0] * 0.8, r[1] + 0.1, -r[2]]).collect();
        let m = fit_residual_model(&p, &y).unwrap();
        let mask = compute_mask(&m, &ids(5), &p, &y, 1.0).unwrap();
        let back = FilterMask::from_csv(&mask.to_csv(), 1.0).unwrap();
        assert_eq!(back, mask);
    }
}
