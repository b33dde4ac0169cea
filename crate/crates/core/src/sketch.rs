//! Mergeable relative-error quantile sketches.
//!
//! Values are mapped onto logarithmically spaced buckets: a positive value `x`
//! lands in bucket `ceil(log_gamma(x))` where `gamma = (1 + d) / (1 - d)` and
//! `d` is the relative error. Every bucket `(gamma^(i-1), gamma^i]` is
//! represented by `2 * gamma^i / (gamma + 1)`, which lies within relative error
//! `d` of anything stored in it. Negative values use a mirrored store keyed on
//! `|x|`, and exact zeros are counted separately.
//!
//! Two sketches with the same relative error merge by summing bucket counts,
//! so merging per-party sketches gives exactly the sketch of the union.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Format tag written into every serialized sketch.
pub const SKETCH_FORMAT: &str = "fedxgb.ddsketch";
pub const SKETCH_FORMAT_VERSION: u32 = 1;

/// Relative error used when none is configured.
pub const DEFAULT_RELATIVE_ERROR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SketchRecord", into = "SketchRecord")]
pub struct QuantileSketch {
    relative_error: f64,
    log_base: f64,
    ln_base: f64,
    positive_bins: BTreeMap<i32, u64>,
    negative_bins: BTreeMap<i32, u64>,
    zero_count: u64,
    total_count: u64,
    max_bins: Option<usize>,
}

impl QuantileSketch {
    pub fn new(relative_error: f64) -> Result<Self> {
        if !(relative_error > 0.0 && relative_error < 1.0) {
            return Err(Error::OutOfRange {
                name: "relative_error",
                value: relative_error,
                expected: "0 < relative_error < 1",
            });
        }
        let log_base = (1.0 + relative_error) / (1.0 - relative_error);
        Ok(Self {
            relative_error,
            log_base,
            ln_base: log_base.ln(),
            positive_bins: BTreeMap::new(),
            negative_bins: BTreeMap::new(),
            zero_count: 0,
            total_count: 0,
            max_bins: None,
        })
    }

    /// A sketch that collapses its lowest-magnitude buckets whenever it holds
    /// more than `max_bins` of them.
    pub fn with_max_bins(relative_error: f64, max_bins: usize) -> Result<Self> {
        if max_bins < 2 {
            return Err(Error::OutOfRange {
                name: "max_bins",
                value: max_bins as f64,
                expected: "max_bins >= 2",
            });
        }
        let mut sketch = Self::new(relative_error)?;
        sketch.max_bins = Some(max_bins);
        Ok(sketch)
    }

    pub fn relative_error(&self) -> f64 {
        self.relative_error
    }

    pub fn log_base(&self) -> f64 {
        self.log_base
    }

    pub fn max_bins(&self) -> Option<usize> {
        self.max_bins
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn zero_count(&self) -> u64 {
        self.zero_count
    }

    pub fn is_empty(&self) -> bool {
        self.total_count == 0
    }

    pub fn positive_bins(&self) -> &BTreeMap<i32, u64> {
        &self.positive_bins
    }

    pub fn negative_bins(&self) -> &BTreeMap<i32, u64> {
        &self.negative_bins
    }

    /// Number of stored (non-empty) buckets, excluding the zero counter.
    pub fn bucket_count(&self) -> usize {
        self.positive_bins.len() + self.negative_bins.len()
    }

    /// Bucket index of a non-zero magnitude.
    pub fn bucket_index(&self, magnitude: f64) -> i32 {
        (magnitude.ln() / self.ln_base).ceil() as i32
    }

    /// Representative magnitude of bucket `index`.
    pub fn bucket_value(&self, index: i32) -> f64 {
        2.0 * (f64::from(index) * self.ln_base).exp() / (self.log_base + 1.0)
    }

    pub fn insert(&mut self, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidValue(value));
        }
        if value > 0.0 {
            let index = self.bucket_index(value);
            *self.positive_bins.entry(index).or_insert(0) += 1;
        } else if value < 0.0 {
            let index = self.bucket_index(-value);
            *self.negative_bins.entry(index).or_insert(0) += 1;
        } else {
            self.zero_count += 1;
        }
        self.total_count += 1;
        if let Some(max_bins) = self.max_bins {
            self.collapse(max_bins);
        }
        Ok(())
    }

    /// Adds `other`'s bucket counts into `self`. The cap (if any) is applied
    /// only after the counts have been summed.
    pub fn merge(&mut self, other: &QuantileSketch) -> Result<()> {
        if self.relative_error != other.relative_error {
            return Err(Error::IncompatibleSketch {
                left: self.relative_error,
                right: other.relative_error,
            });
        }
        for (&index, &count) in &other.positive_bins {
            *self.positive_bins.entry(index).or_insert(0) += count;
        }
        for (&index, &count) in &other.negative_bins {
            *self.negative_bins.entry(index).or_insert(0) += count;
        }
        self.zero_count += other.zero_count;
        self.total_count += other.total_count;
        if let Some(max_bins) = self.max_bins {
            self.collapse(max_bins);
        }
        Ok(())
    }

    pub fn merged(a: &QuantileSketch, b: &QuantileSketch) -> Result<QuantileSketch> {
        let mut out = a.clone();
        out.merge(b)?;
        Ok(out)
    }

    /// Folds the lowest-magnitude buckets into their next neighbour until at
    /// most `max_bins` buckets remain. The tails, where split points matter,
    /// keep full resolution.
    pub fn collapse(&mut self, max_bins: usize) {
        let max_bins = max_bins.max(2);
        while self.bucket_count() > max_bins {
            let pos_lowest = lowest_two(&self.positive_bins);
            let neg_lowest = lowest_two(&self.negative_bins);
            let store = match (pos_lowest, neg_lowest) {
                (Some(p), Some(n)) if n < p => &mut self.negative_bins,
                (Some(_), _) => &mut self.positive_bins,
                (None, Some(_)) => &mut self.negative_bins,
                // Each store holds at most one bucket; nothing to fold.
                (None, None) => break,
            };
            let (&lowest, &count) = store.iter().next().expect("store has two buckets");
            store.remove(&lowest);
            let (_, neighbour) = store.iter_mut().next().expect("store has a neighbour");
            *neighbour += count;
        }
    }

    /// Estimate of the item at rank `floor(q * (n - 1))`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::OutOfRange {
                name: "q",
                value: q,
                expected: "0 <= q <= 1",
            });
        }
        if self.total_count == 0 {
            return Err(Error::EmptySketch);
        }
        let rank = (q * (self.total_count - 1) as f64).floor() as u64;

        let mut seen = 0u64;
        for (&index, &count) in self.negative_bins.iter().rev() {
            seen += count;
            if seen > rank {
                return Ok(-self.bucket_value(index));
            }
        }
        seen += self.zero_count;
        if seen > rank {
            return Ok(0.0);
        }
        for (&index, &count) in &self.positive_bins {
            seen += count;
            if seen > rank {
                return Ok(self.bucket_value(index));
            }
        }
        unreachable!("rank {rank} beyond total count {}", self.total_count)
    }

    /// Evenly spaced quantiles `k / (max_candidates + 1)` for
    /// `k = 1..=max_candidates`, deduplicated into a strictly increasing list.
    /// These become the bucket boundaries for gradient binning.
    pub fn split_candidates(&self, max_candidates: usize) -> Vec<f64> {
        if self.is_empty() || max_candidates == 0 {
            return Vec::new();
        }
        let denom = (max_candidates + 1) as f64;
        let mut out: Vec<f64> = Vec::with_capacity(max_candidates.min(self.bucket_count() + 1));
        for k in 1..=max_candidates {
            let value = self
                .quantile(k as f64 / denom)
                .expect("non-empty sketch and q in range");
            if out.last().map_or(true, |&last| value > last) {
                out.push(value);
            }
        }
        out
    }
}

fn lowest_two(store: &BTreeMap<i32, u64>) -> Option<i32> {
    if store.len() >= 2 {
        store.keys().next().copied()
    } else {
        None
    }
}

#[derive(Serialize, Deserialize)]
struct SketchRecord {
    format: String,
    version: u32,
    relative_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_bins: Option<usize>,
    positive_bins: Vec<(i32, u64)>,
    negative_bins: Vec<(i32, u64)>,
    zero_count: u64,
}

impl From<QuantileSketch> for SketchRecord {
    fn from(s: QuantileSketch) -> Self {
        SketchRecord {
            format: SKETCH_FORMAT.to_string(),
            version: SKETCH_FORMAT_VERSION,
            relative_error: s.relative_error,
            max_bins: s.max_bins,
            positive_bins: s.positive_bins.into_iter().collect(),
            negative_bins: s.negative_bins.into_iter().collect(),
            zero_count: s.zero_count,
        }
    }
}

impl TryFrom<SketchRecord> for QuantileSketch {
    type Error = Error;

    fn try_from(r: SketchRecord) -> Result<Self> {
        if r.format != SKETCH_FORMAT || r.version != SKETCH_FORMAT_VERSION {
            return Err(Error::Format(format!("{} v{}", r.format, r.version)));
        }
        let mut sketch = match r.max_bins {
            Some(max_bins) => QuantileSketch::with_max_bins(r.relative_error, max_bins)?,
            None => QuantileSketch::new(r.relative_error)?,
        };
        let mut total = r.zero_count;
        for (bins, store) in [
            (r.positive_bins, &mut sketch.positive_bins),
            (r.negative_bins, &mut sketch.negative_bins),
        ] {
            for (index, count) in bins {
                if count == 0 || store.insert(index, count).is_some() {
                    return Err(Error::Format(format!(
                        "bucket {index} is empty or duplicated"
                    )));
                }
                total += count;
            }
        }
        sketch.zero_count = r.zero_count;
        sketch.total_count = total;
        Ok(sketch)
    }
}

/// One sketch per feature column of a party's data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSketchSet {
    pub sketches: Vec<QuantileSketch>,
}

impl FeatureSketchSet {
    pub fn empty(num_features: usize, relative_error: f64) -> Result<Self> {
        let sketch = QuantileSketch::new(relative_error)?;
        Ok(Self {
            sketches: vec![sketch; num_features],
        })
    }

    /// Sketches every column of a row-major matrix. Missing values (NaN) are
    /// skipped; infinities are rejected.
    pub fn from_rows<'a, I>(rows: I, num_features: usize, relative_error: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut set = Self::empty(num_features, relative_error)?;
        for row in rows {
            if row.len() != num_features {
                return Err(Error::Shape {
                    expected: num_features,
                    actual: row.len(),
                });
            }
            for (sketch, &value) in set.sketches.iter_mut().zip(row) {
                if !value.is_nan() {
                    sketch.insert(value)?;
                }
            }
        }
        Ok(set)
    }

    pub fn num_features(&self) -> usize {
        self.sketches.len()
    }

    pub fn relative_error(&self) -> Option<f64> {
        self.sketches.first().map(QuantileSketch::relative_error)
    }

    pub fn merge(&mut self, other: &FeatureSketchSet) -> Result<()> {
        if self.num_features() != other.num_features() {
            return Err(Error::Schema(format!(
                "sketch set has {} features, expected {}",
                other.num_features(),
                self.num_features()
            )));
        }
        for (mine, theirs) in self.sketches.iter_mut().zip(&other.sketches) {
            mine.merge(theirs)?;
        }
        Ok(())
    }

    /// Split candidates for every feature, at most `max_candidates` each.
    pub fn split_candidates(&self, max_candidates: usize) -> Vec<Vec<f64>> {
        self.sketches
            .iter()
            .map(|s| s.split_candidates(max_candidates))
            .collect()
    }
}
