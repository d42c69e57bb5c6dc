//! Segmentation overlap metrics and ranking metrics for binary classifiers.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero-sized mask {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} mask values for {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let data = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

/// Single-channel probability map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ProbMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height || width == 0 || height == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} map",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }
}

/// Positive iff `value >= t`.
pub fn threshold_map(map: &ProbMap, t: f64) -> BinaryMask {
    BinaryMask {
        width: map.width,
        height: map.height,
        data: map.data.iter().map(|&v| v >= t).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_masks(pred: &BinaryMask, gt: &BinaryMask) -> Result<Self> {
        if pred.width != gt.width || pred.height != gt.height {
            return Err(Error::ShapeMismatch(format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.width, pred.height, gt.width, gt.height
            )));
        }
        Ok(Self::from_pairs(pred.data.iter().copied().zip(gt.data.iter().copied())))
    }

    /// Counts `(predicted, actual)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Confusion::default();
        for (p, g) in pairs {
            match (p, g) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// 1 when both masks are empty.
    pub fn dice(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 { 1.0 } else { (2 * self.tp) as f64 / denom as f64 }
    }

    /// Jaccard index (intersection over union); 1 when both masks are empty.
    pub fn jaccard(&self) -> f64 {
        let denom = self.tp + self.fp + self.fn_;
        if denom == 0 { 1.0 } else { self.tp as f64 / denom as f64 }
    }

    pub fn sensitivity(&self) -> Result<f64> {
        let denom = self.tp + self.fn_;
        if denom == 0 {
            return Err(Error::UndefinedMetric("sensitivity: ground truth has no positives"));
        }
        Ok(self.tp as f64 / denom as f64)
    }

    pub fn specificity(&self) -> Result<f64> {
        let denom = self.tn + self.fp;
        if denom == 0 {
            return Err(Error::UndefinedMetric("specificity: ground truth has no negatives"));
        }
        Ok(self.tn as f64 / denom as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegMetrics {
    pub accuracy: f64,
    pub dice: f64,
    pub jaccard: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

pub fn seg_metrics(pred: &BinaryMask, gt: &BinaryMask) -> Result<SegMetrics> {
    let c = Confusion::from_masks(pred, gt)?;
    Ok(SegMetrics {
        accuracy: c.accuracy(),
        dice: c.dice(),
        jaccard: c.jaccard(),
        sensitivity: c.sensitivity()?,
        specificity: c.specificity()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub score: f64,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreList(Vec<Scored>);

impl ScoreList {
    pub fn new(items: Vec<Scored>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidScores("empty score list".into()));
        }
        if let Some(s) = items.iter().find(|s| !s.score.is_finite()) {
            return Err(Error::InvalidScores(format!("non-finite score {}", s.score)));
        }
        Ok(Self(items))
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, bool)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(score, label)| Scored { score, label }).collect())
    }

    pub fn items(&self) -> &[Scored] {
        &self.0
    }

    pub fn positives(&self) -> usize {
        self.0.iter().filter(|s| s.label).count()
    }

    pub fn confusion_at(&self, t: f64) -> Confusion {
        Confusion::from_pairs(self.0.iter().map(|s| (s.score >= t, s.label)))
    }
}

/// Area under the ROC curve as the Mann–Whitney probability that a random
/// positive outscores a random negative, ties counting one half.
pub fn auc(scores: &ScoreList) -> Result<f64> {
    let pos = scores.positives();
    let neg = scores.0.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut sorted: Vec<&Scored> = scores.0.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

    // Walk tie groups in ascending score order.
    let mut wins = 0.0;
    let mut neg_below = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            if sorted[j].label { p += 1 } else { n += 1 }
            j += 1;
        }
        wins += p as f64 * (neg_below as f64 + 0.5 * n as f64);
        neg_below += n;
        i = j;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Mean of the precision at each positive's rank, ranking by descending
/// score. Ties keep input order.
pub fn average_precision(scores: &ScoreList) -> Result<f64> {
    let pos = scores.positives();
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<&Scored> = scores.0.iter().collect();
    // stable: equal scores keep input order
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, s) in order.iter().enumerate() {
        if s.label {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}
