//! Evaluation suite: mask IoU, confidence-ranked detection matching,
//! precision-recall curves, average precision, confusion matrices, and
//! per-class classification statistics.
//!
//! Matching follows the one-match-per-ground-truth convention: detections
//! are visited in order of descending confidence, each is paired with the
//! unmatched ground truth of highest IoU, and counts as a true positive
//! only when that IoU strictly exceeds the threshold (a ground truth is
//! consumed only by a true positive). Average precision integrates the
//! monotone precision envelope over recall.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::{BinaryMask, StageLabel};
use crate::detect::Detection;

/// IoU threshold above which a matched detection counts as correct.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),

    #[error("recall is undefined: detections present but no ground truth")]
    ZeroGroundTruth,

    #[error("detection confidence {0} is not finite")]
    BadConfidence(f64),

    #[error("rop_free cannot appear as a true label")]
    RopFreeTruth,

    #[error("cannot build a confusion matrix from zero pairs")]
    EmptyPairs,

    #[error("invalid confusion matrix: {reason}")]
    BadMatrix { reason: String },
}

/// Intersection over union of two equally sized masks. Two empty masks
/// have IoU 0.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricsError> {
    if !a.same_dims(b) {
        return Err(MetricsError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    let mut intersection = 0u64;
    let mut union = 0u64;
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        if x && y {
            intersection += 1;
        }
        if x || y {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(intersection as f64 / union as f64)
}

/// Ranks detections by descending confidence (stable for ties) and greedily
/// matches each against the unmatched ground truth of highest IoU. The flag
/// is true exactly when that IoU strictly exceeds `iou_threshold`.
pub fn match_detections(
    detections: Vec<Detection>,
    ground_truths: &[BinaryMask],
    iou_threshold: f64,
) -> Result<Vec<(Detection, bool)>, MetricsError> {
    for detection in &detections {
        if !detection.confidence.is_finite() {
            return Err(MetricsError::BadConfidence(detection.confidence));
        }
    }

    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .confidence
            .partial_cmp(&detections[a].confidence)
            .expect("finite confidences")
    });

    let mut slots: Vec<Option<Detection>> = detections.into_iter().map(Some).collect();
    let mut consumed = vec![false; ground_truths.len()];
    let mut matched = Vec::with_capacity(slots.len());
    for index in order {
        let detection = slots[index].take().expect("each index visited once");
        let mut best: Option<(usize, f64)> = None;
        for (gt_index, gt) in ground_truths.iter().enumerate() {
            if consumed[gt_index] {
                continue;
            }
            let overlap = iou(&detection.mask, gt)?;
            if best.is_none_or(|(_, best_iou)| overlap > best_iou) {
                best = Some((gt_index, overlap));
            }
        }
        let is_true_positive = match best {
            Some((gt_index, overlap)) if overlap > iou_threshold => {
                consumed[gt_index] = true;
                true
            }
            _ => false,
        };
        matched.push((detection, is_true_positive));
    }
    Ok(matched)
}

/// One point of a precision-recall curve, tagged with the confidence of the
/// detection that appended it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
    pub confidence: f64,
}

/// Precision-recall curve in descending-confidence order; recall is
/// non-decreasing along the points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub num_ground_truth: usize,
}

/// Walks the matched detections in descending-confidence order (the input
/// is re-ranked, stably, so pooled per-image results may be passed
/// directly) and appends `(TP_k / k, TP_k / num_gt)` after each one.
pub fn pr_curve(
    matched: &[(Detection, bool)],
    num_ground_truth: usize,
) -> Result<PrCurve, MetricsError> {
    if num_ground_truth == 0 && !matched.is_empty() {
        return Err(MetricsError::ZeroGroundTruth);
    }
    for (detection, _) in matched {
        if !detection.confidence.is_finite() {
            return Err(MetricsError::BadConfidence(detection.confidence));
        }
    }

    let mut order: Vec<usize> = (0..matched.len()).collect();
    order.sort_by(|&a, &b| {
        matched[b].0
            .confidence
            .partial_cmp(&matched[a].0.confidence)
            .expect("finite confidences")
    });

    let mut points = Vec::with_capacity(matched.len());
    let mut true_positives = 0usize;
    for (k, &index) in order.iter().enumerate() {
        let (detection, is_true_positive) = &matched[index];
        if *is_true_positive {
            true_positives += 1;
        }
        points.push(PrPoint {
            precision: true_positives as f64 / (k + 1) as f64,
            recall: true_positives as f64 / num_ground_truth as f64,
            confidence: detection.confidence,
        });
    }
    Ok(PrCurve {
        points,
        num_ground_truth,
    })
}

/// Area under the monotone precision envelope: each precision is replaced
/// by the maximum precision at any equal-or-greater recall, then summed
/// over the recall increments.
pub fn average_precision(curve: &PrCurve) -> f64 {
    let points = &curve.points;
    if points.is_empty() {
        return 0.0;
    }
    let mut envelope = vec![0.0f64; points.len()];
    let mut running = 0.0f64;
    for (i, point) in points.iter().enumerate().rev() {
        running = running.max(point.precision);
        envelope[i] = running;
    }
    let mut area = 0.0;
    let mut previous_recall = 0.0;
    for (point, &env) in points.iter().zip(&envelope) {
        area += env * (point.recall - previous_recall);
        previous_recall = point.recall;
    }
    area
}

/// Raw trapezoidal area under the curve, offered for sensitivity checks
/// against the envelope method. The segment from recall 0 to the first
/// point uses the first point's precision.
pub fn average_precision_trapezoid(curve: &PrCurve) -> f64 {
    let points = &curve.points;
    if points.is_empty() {
        return 0.0;
    }
    let mut area = points[0].precision * points[0].recall;
    for pair in points.windows(2) {
        area += (pair[1].recall - pair[0].recall) * (pair[1].precision + pair[0].precision) / 2.0;
    }
    area
}

/// Row-by-true, column-by-predicted class counts. Rows cover the three
/// ground-truth stages; a leading `rop_free` column appears exactly when
/// some prediction was `RopFree`. Deserialization revalidates through
/// [`ConfusionMatrix::from_counts`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixParts")]
pub struct ConfusionMatrix {
    row_labels: Vec<StageLabel>,
    col_labels: Vec<StageLabel>,
    counts: Vec<Vec<u64>>,
}

#[derive(Deserialize)]
struct MatrixParts {
    row_labels: Vec<StageLabel>,
    col_labels: Vec<StageLabel>,
    counts: Vec<Vec<u64>>,
}

impl TryFrom<MatrixParts> for ConfusionMatrix {
    type Error = MetricsError;

    fn try_from(parts: MatrixParts) -> Result<Self, Self::Error> {
        ConfusionMatrix::from_counts(parts.row_labels, parts.col_labels, parts.counts)
    }
}

impl ConfusionMatrix {
    pub fn from_counts(
        row_labels: Vec<StageLabel>,
        col_labels: Vec<StageLabel>,
        counts: Vec<Vec<u64>>,
    ) -> Result<Self, MetricsError> {
        let bad = |reason: String| MetricsError::BadMatrix { reason };
        if row_labels.is_empty() || col_labels.is_empty() {
            return Err(bad("labels must be nonempty".into()));
        }
        if row_labels.contains(&StageLabel::RopFree) {
            return Err(MetricsError::RopFreeTruth);
        }
        for labels in [&row_labels, &col_labels] {
            for (i, a) in labels.iter().enumerate() {
                if labels[i + 1..].contains(a) {
                    return Err(bad(format!("duplicate label {a}")));
                }
            }
        }
        if counts.len() != row_labels.len() {
            return Err(bad(format!(
                "{} rows of counts for {} row labels",
                counts.len(),
                row_labels.len()
            )));
        }
        for row in &counts {
            if row.len() != col_labels.len() {
                return Err(bad(format!(
                    "{} columns of counts for {} column labels",
                    row.len(),
                    col_labels.len()
                )));
            }
        }
        Ok(Self {
            row_labels,
            col_labels,
            counts,
        })
    }

    pub fn row_labels(&self) -> &[StageLabel] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[StageLabel] {
        &self.col_labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Count of pairs with the given true and predicted labels; zero when a
    /// label has no row/column.
    pub fn get(&self, true_label: StageLabel, predicted: StageLabel) -> u64 {
        let (Some(r), Some(c)) = (
            self.row_labels.iter().position(|&l| l == true_label),
            self.col_labels.iter().position(|&l| l == predicted),
        ) else {
            return 0;
        };
        self.counts[r][c]
    }

    pub fn row_sum(&self, label: StageLabel) -> u64 {
        match self.row_labels.iter().position(|&l| l == label) {
            Some(r) => self.counts[r].iter().sum(),
            None => 0,
        }
    }

    pub fn col_sum(&self, label: StageLabel) -> u64 {
        match self.col_labels.iter().position(|&l| l == label) {
            Some(c) => self.counts.iter().map(|row| row[c]).sum(),
            None => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>12}", "true\\pred")?;
        for label in &self.col_labels {
            write!(f, " {:>9}", label.as_str())?;
        }
        writeln!(f)?;
        for (label, row) in self.row_labels.iter().zip(&self.counts) {
            write!(f, "{:>12}", label.as_str())?;
            for count in row {
                write!(f, " {count:>9}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Builds a confusion matrix from (true, predicted) pairs.
pub fn confusion_matrix(
    pairs: &[(StageLabel, StageLabel)],
) -> Result<ConfusionMatrix, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyPairs);
    }
    if pairs.iter().any(|&(t, _)| t == StageLabel::RopFree) {
        return Err(MetricsError::RopFreeTruth);
    }
    let has_rop_free = pairs.iter().any(|&(_, p)| p == StageLabel::RopFree);
    let row_labels = StageLabel::GROUND_TRUTH.to_vec();
    let mut col_labels = Vec::new();
    if has_rop_free {
        col_labels.push(StageLabel::RopFree);
    }
    col_labels.extend(StageLabel::GROUND_TRUTH);

    let mut counts = vec![vec![0u64; col_labels.len()]; row_labels.len()];
    for &(true_label, predicted) in pairs {
        let r = row_labels.iter().position(|&l| l == true_label).expect("stage row");
        let c = col_labels.iter().position(|&l| l == predicted).expect("stage column");
        counts[r][c] += 1;
    }
    ConfusionMatrix::from_counts(row_labels, col_labels, counts)
}

/// Per-class precision, recall, and F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub label: StageLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Classification statistics derived from a confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassStats>,
    pub accuracy: f64,
    pub matrix: ConfusionMatrix,
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>12} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1")?;
        for stats in &self.per_class {
            writeln!(
                f,
                "{:>12} {:>9.2} {:>9.2} {:>9.2}",
                stats.label.as_str(),
                stats.precision,
                stats.recall,
                stats.f1
            )?;
        }
        writeln!(f, "{:>12} {:>9.2}", "accuracy", self.accuracy)?;
        writeln!(f)?;
        self.matrix.fmt(f)
    }
}

/// Precision = diagonal / column sum, recall = diagonal / row sum, F1 the
/// harmonic mean; each defined as 0 when its denominator vanishes.
/// Accuracy is the diagonal total over all counts.
pub fn report(matrix: &ConfusionMatrix) -> MetricsReport {
    let per_class = matrix
        .row_labels()
        .iter()
        .map(|&label| {
            let diagonal = matrix.get(label, label) as f64;
            let col = matrix.col_sum(label);
            let row = matrix.row_sum(label);
            let precision = if col > 0 { diagonal / col as f64 } else { 0.0 };
            let recall = if row > 0 { diagonal / row as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassStats {
                label,
                precision,
                recall,
                f1,
            }
        })
        .collect();

    let total = matrix.total();
    let correct: u64 = matrix
        .row_labels()
        .iter()
        .map(|&label| matrix.get(label, label))
        .sum();
    let accuracy = if total > 0 {
        correct as f64 / total as f64
    } else {
        0.0
    };

    MetricsReport {
        per_class,
        accuracy,
        matrix: matrix.clone(),
    }
}
