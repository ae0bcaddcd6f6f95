//! Relative-distance boundary scoring: one-to-one matching of predicted and
//! ground-truth timestamps at a sweep of thresholds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::head::Prediction;
use crate::{Error, Result};

/// Thresholds 0.05, 0.10, …, 0.50.
pub fn thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (i + 1) as f64 / 20.0)
}

/// Ground truth for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub video_id: String,
    pub fps: f64,
    pub num_frames: usize,
    pub boundaries_sec: Vec<f64>,
}

impl Annotation {
    pub fn duration(&self) -> f64 {
        self.num_frames as f64 / self.fps
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || self.num_frames == 0 {
            return Err(Error::InvalidInput(format!(
                "annotation {}: fps and frame count must be positive",
                self.video_id
            )));
        }
        let d = self.duration();
        if self.boundaries_sec.iter().any(|&t| !(0.0..=d).contains(&t)) {
            return Err(Error::InvalidInput(format!(
                "annotation {}: boundary outside [0, {d}]",
                self.video_id
            )));
        }
        check_sorted(&self.boundaries_sec, "annotation boundaries")
    }
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<Annotation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let anns: Vec<Annotation> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    for a in &anns {
        a.validate()?;
    }
    Ok(anns)
}

pub fn write_annotations(path: impl AsRef<Path>, anns: &[Annotation]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(anns).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn relative_distance(pred: f64, gt: f64, duration: f64) -> Result<f64> {
    if !(duration > 0.0) {
        return Err(Error::InvalidInput(format!("duration must be positive, got {duration}")));
    }
    Ok((pred - gt).abs() / duration)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MatchCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn add(&mut self, other: MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn check_sorted(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} contain non-finite values")));
    }
    if v.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput(format!("{what} are not sorted")));
    }
    Ok(())
}

/// Maximum one-to-one matching where a pair is eligible when its relative
/// distance is at most `tau`.
///
/// Eligibility is an interval condition on sorted timestamps, so a
/// two-cursor sweep is optimal: match when eligible, otherwise advance the
/// earlier timestamp, which cannot match anything further along.
pub fn match_one_to_one(preds: &[f64], gts: &[f64], duration: f64, tau: f64) -> Result<MatchCounts> {
    check_sorted(preds, "predictions")?;
    check_sorted(gts, "ground-truth boundaries")?;
    relative_distance(0.0, 0.0, duration)?;
    let (mut i, mut j, mut tp) = (0, 0, 0);
    while i < preds.len() && j < gts.len() {
        if (preds[i] - gts[j]).abs() / duration <= tau {
            tp += 1;
            i += 1;
            j += 1;
        } else if preds[i] < gts[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(MatchCounts {
        tp,
        fp: preds.len() - tp,
        fn_: gts.len() - tp,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    #[serde(flatten)]
    pub counts: MatchCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ThresholdRow>,
    pub avg_f1: f64,
    pub num_videos: usize,
    pub matching: String,
    pub aggregation: String,
}

impl EvalReport {
    pub fn f1_at(&self, threshold: f64) -> Option<f64> {
        self.rows.iter().find(|r| (r.threshold - threshold).abs() < 1e-12).map(|r| r.f1)
    }

    /// Threshold header plus precision, recall and F1 rows with the mean F1.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<10}", "rel.dist");
        for r in &self.rows {
            let _ = write!(s, "{:>7.2}", r.threshold);
        }
        let _ = writeln!(s, "{:>8}", "avg");
        let line = |s: &mut String, name: &str, f: &dyn Fn(&ThresholdRow) -> f64, avg: Option<f64>| {
            let _ = write!(s, "{name:<10}");
            for r in &self.rows {
                let _ = write!(s, "{:>7.3}", f(r));
            }
            match avg {
                Some(a) => {
                    let _ = writeln!(s, "{a:>8.3}");
                }
                None => s.push('\n'),
            }
        };
        line(&mut s, "precision", &|r| r.precision, None);
        line(&mut s, "recall", &|r| r.recall, None);
        line(&mut s, "F1", &|r| r.f1, Some(self.avg_f1));
        let _ = writeln!(s, "({} videos; {} matching, {} aggregation)", self.num_videos, self.matching, self.aggregation);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores every prediction against the annotation with the same id,
/// summing counts over videos before computing precision, recall and F1.
pub fn score_corpus(preds: &[Prediction], annotations: &[Annotation]) -> Result<EvalReport> {
    let mut by_id = BTreeMap::new();
    for a in annotations {
        a.validate()?;
        if by_id.insert(a.video_id.as_str(), a).is_some() {
            return Err(Error::InvalidInput(format!("duplicate annotation for {}", a.video_id)));
        }
    }
    let mut seen = BTreeSet::new();
    for p in preds {
        if !by_id.contains_key(p.video_id.as_str()) {
            return Err(Error::InvalidInput(format!("prediction for unknown video {}", p.video_id)));
        }
        if !seen.insert(p.video_id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate prediction for {}", p.video_id)));
        }
    }
    if let Some(missing) = by_id.keys().find(|id| !seen.contains(*id)) {
        return Err(Error::InvalidInput(format!("no prediction for video {missing}")));
    }
    let mut rows = Vec::with_capacity(10);
    for tau in thresholds() {
        let mut total = MatchCounts { tp: 0, fp: 0, fn_: 0 };
        for p in preds {
            let a = by_id[p.video_id.as_str()];
            total.add(match_one_to_one(&p.boundaries_sec, &a.boundaries_sec, a.duration(), tau)?);
        }
        rows.push(ThresholdRow {
            threshold: tau,
            counts: total,
            precision: total.precision(),
            recall: total.recall(),
            f1: total.f1(),
        });
    }
    let avg_f1 = rows.iter().map(|r| r.f1).sum::<f64>() / rows.len() as f64;
    Ok(EvalReport {
        rows,
        avg_f1,
        num_videos: preds.len(),
        matching: "one-to-one maximum".into(),
        aggregation: "corpus-summed counts".into(),
    })
}

/// Predictions placing a boundary every `interval` seconds (excluding 0 and
/// the end), used as a reference point.
pub fn uniform_baseline(annotations: &[Annotation], interval: f64) -> Vec<Prediction> {
    annotations
        .iter()
        .map(|a| {
            let d = a.duration();
            let boundaries_sec = (1..)
                .map(|i| i as f64 * interval)
                .take_while(|&t| t < d)
                .collect();
            Prediction {
                video_id: a.video_id.clone(),
                boundaries_sec,
                scores: Vec::new(),
            }
        })
        .collect()
}
