//! ROC-AUC: the exact pairwise rank statistic and trapezoidal integration
//! over the empirical ROC curve, plus score-file I/O for the CLI.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Scores split by true label: `neg` holds label-0 cases, `pos` label-1.
#[derive(Clone, Debug)]
pub struct ScoredDataset {
    neg: Vec<f64>,
    pos: Vec<f64>,
}

impl ScoredDataset {
    pub fn new(neg: Vec<f64>, pos: Vec<f64>) -> Result<Self> {
        if neg.is_empty() || pos.is_empty() {
            return Err(Error::data(
                "degenerate labels: AUC needs at least one case of each class",
            ));
        }
        if neg.iter().chain(pos.iter()).any(|v| !v.is_finite()) {
            return Err(Error::data("scores must be finite"));
        }
        Ok(ScoredDataset { neg, pos })
    }

    pub fn from_pairs(pairs: &[(f64, u8)]) -> Result<Self> {
        let mut neg = Vec::new();
        let mut pos = Vec::new();
        for &(score, label) in pairs {
            match label {
                0 => neg.push(score),
                1 => pos.push(score),
                other => {
                    return Err(Error::data(format!(
                        "label must be 0 or 1, got {other}"
                    )))
                }
            }
        }
        ScoredDataset::new(neg, pos)
    }

    pub fn neg(&self) -> &[f64] {
        &self.neg
    }

    pub fn pos(&self) -> &[f64] {
        &self.pos
    }
}

/// How tied (negative, positive) score pairs count.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TieMode {
    /// Ties contribute nothing: the printed pairwise statistic.
    Strict,
    /// Ties contribute one half, matching the trapezoidal ROC area. This is
    /// what training and evaluation report.
    Half,
}

/// Fraction of (negative, positive) pairs ranked correctly.
///
/// Computed by sorting the negatives once and binary-searching each positive,
/// so it is `O((m + n) log m)` rather than the quadratic pair loop (which the
/// tests use as the oracle).
pub fn auc_wmw(d: &ScoredDataset, ties: TieMode) -> f64 {
    let mut neg = d.neg.clone();
    neg.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let mut total = 0.0f64;
    for &p in &d.pos {
        let below = neg.partition_point(|&n| n < p);
        let below_or_equal = neg.partition_point(|&n| n <= p);
        total += below as f64;
        if ties == TieMode::Half {
            total += 0.5 * (below_or_equal - below) as f64;
        }
    }
    total / (d.neg.len() as f64 * d.pos.len() as f64)
}

/// One operating point of the ROC curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// The empirical ROC curve, from threshold +inf down through every distinct
/// observed score. Starts at (0, 0) and ends at (1, 1); both coordinates are
/// nondecreasing.
#[derive(Clone, Debug)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// Sweep thresholds over the distinct scores in descending order; at each
/// threshold t, TPR is the fraction of positives >= t and FPR the fraction
/// of negatives >= t.
pub fn roc_points(d: &ScoredDataset) -> RocCurve {
    let mut thresholds: Vec<f64> = d.neg.iter().chain(d.pos.iter()).copied().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    thresholds.dedup();

    let sorted_desc = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
        s
    };
    let neg = sorted_desc(&d.neg);
    let pos = sorted_desc(&d.pos);

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut ni, mut pi) = (0usize, 0usize);
    for t in thresholds {
        while ni < neg.len() && neg[ni] >= t {
            ni += 1;
        }
        while pi < pos.len() && pos[pi] >= t {
            pi += 1;
        }
        points.push(RocPoint {
            fpr: ni as f64 / neg.len() as f64,
            tpr: pi as f64 / pos.len() as f64,
        });
    }
    RocCurve { points }
}

/// Area under the empirical ROC curve by trapezoid integration. Agrees with
/// `auc_wmw(d, TieMode::Half)` up to float summation order.
pub fn auc_trapezoid(d: &ScoredDataset) -> f64 {
    let curve = roc_points(d);
    let mut area = 0.0;
    for pair in curve.points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    area
}

/// Parse a `case_id,score,label` file (header optional) for the CLI path.
pub fn read_scores(path: &Path) -> Result<Vec<(String, f64, u8)>> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if lineno == 0 && line.eq_ignore_ascii_case("case_id,score,label") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::data(format!(
                "row {}: expected case_id,score,label",
                lineno + 1
            )));
        }
        let score: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("row {}: bad score {:?}", lineno + 1, fields[1])))?;
        let label: u8 = match fields[2].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::data(format!(
                    "row {}: label must be 0 or 1, got {other:?}",
                    lineno + 1
                )))
            }
        };
        out.push((fields[0].trim().to_string(), score, label));
    }
    Ok(out)
}
