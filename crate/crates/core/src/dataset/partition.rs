//! Sample-count skew across parties.
//!
//! Every scheme starts from an even split. One reallocation pass moves a
//! fraction of each party's rows to the party before it, top-down:
//! 2 -> 1 (50%), 3 -> 2 (75%), 4 -> 3 (62.5%), 5 -> 4 (56.25%). Moved counts
//! are rounded half-to-even. Schemes A..D apply the pass 1..4 times.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetMatrix;
use crate::error::{Error, Result};

/// Party count the reallocation fractions are defined for.
pub const PARTY_COUNT: usize = 5;

/// Fraction of party `j + 1`'s rows moved to party `j` in one pass.
pub const REALLOCATION_FRACTIONS: [f64; 4] = [0.5, 0.75, 0.625, 0.5625];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Even,
    A,
    B,
    C,
    D,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Even, Scheme::A, Scheme::B, Scheme::C, Scheme::D];

    pub fn reallocation_passes(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Even => "even",
            Scheme::A => "a",
            Scheme::B => "b",
            Scheme::C => "c",
            Scheme::D => "d",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "even" => Ok(Scheme::Even),
            "a" => Ok(Scheme::A),
            "b" => Ok(Scheme::B),
            "c" => Ok(Scheme::C),
            "d" => Ok(Scheme::D),
            _ => Err(Error::UnsupportedScheme(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub scheme: Scheme,
    pub num_parties: usize,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn new(scheme: Scheme, seed: u64) -> Self {
        Self {
            scheme,
            num_parties: PARTY_COUNT,
            seed,
        }
    }
}

/// Row indices held by each party.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub parties: Vec<Vec<usize>>,
}

impl PartitionResult {
    pub fn counts(&self) -> Vec<usize> {
        self.parties.iter().map(Vec::len).collect()
    }

    pub fn num_parties(&self) -> usize {
        self.parties.len()
    }

    pub fn total(&self) -> usize {
        self.parties.iter().map(Vec::len).sum()
    }
}

/// Round half to even on non-negative values.
pub fn round_half_even(x: f64) -> u64 {
    let floor = x.floor();
    let diff = x - floor;
    let down = floor as u64;
    if diff > 0.5 || (diff == 0.5 && down % 2 == 1) {
        down + 1
    } else {
        down
    }
}

/// `floor(n / parties)` each, plus one for the first `n % parties` parties.
pub fn even_counts(n: usize, parties: usize) -> Vec<usize> {
    (0..parties)
        .map(|i| n / parties + usize::from(i < n % parties))
        .collect()
}

/// Count arithmetic of one reallocation pass.
pub fn reallocated_counts(counts: &[usize]) -> Result<Vec<usize>> {
    if counts.len() != PARTY_COUNT {
        return Err(Error::UnsupportedScheme(format!(
            "reallocation needs {PARTY_COUNT} parties, got {}",
            counts.len()
        )));
    }
    let mut out = counts.to_vec();
    for (j, &fraction) in REALLOCATION_FRACTIONS.iter().enumerate() {
        let moved = round_half_even(fraction * out[j + 1] as f64) as usize;
        out[j] += moved;
        out[j + 1] -= moved;
    }
    Ok(out)
}

/// Per-party counts for `scheme` over `n` training rows and five parties.
pub fn scheme_counts(n: usize, scheme: Scheme) -> Result<Vec<usize>> {
    let mut counts = even_counts(n, PARTY_COUNT);
    for _ in 0..scheme.reallocation_passes() {
        counts = reallocated_counts(&counts)?;
    }
    Ok(counts)
}

/// Shuffles `0..n` and deals contiguous chunks of the even-split sizes.
pub fn partition_even<R: Rng + ?Sized>(
    n: usize,
    parties: usize,
    rng: &mut R,
) -> Result<PartitionResult> {
    if parties == 0 || parties > n {
        return Err(Error::InfeasiblePartition(format!(
            "{parties} parties for {n} rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut rest = order.as_slice();
    let parties = even_counts(n, parties)
        .into_iter()
        .map(|count| {
            let (head, tail) = rest.split_at(count);
            rest = tail;
            head.to_vec()
        })
        .collect();
    Ok(PartitionResult { parties })
}

/// One reallocation pass; the moved rows are a uniform sample of the donor.
pub fn reallocate_once<R: Rng + ?Sized>(
    p: &PartitionResult,
    rng: &mut R,
) -> Result<PartitionResult> {
    let targets = reallocated_counts(&p.counts())?;
    let mut parties = p.parties.clone();
    for (j, &fraction) in REALLOCATION_FRACTIONS.iter().enumerate() {
        let donor = &mut parties[j + 1];
        let moved = round_half_even(fraction * donor.len() as f64) as usize;
        donor.shuffle(rng);
        let taken = donor.split_off(donor.len() - moved);
        parties[j].extend(taken);
    }
    let result = PartitionResult { parties };
    debug_assert_eq!(result.counts(), targets);
    Ok(result)
}

/// Builds the partition for `spec` over the rows of `train`.
pub fn make_partition(train: &DatasetMatrix, spec: &PartitionSpec) -> Result<PartitionResult> {
    let n = train.num_rows();
    if spec.scheme != Scheme::Even && spec.num_parties != PARTY_COUNT {
        return Err(Error::UnsupportedScheme(format!(
            "scheme {} is defined for {PARTY_COUNT} parties",
            spec.scheme
        )));
    }
    let classes = train.task().num_classes();
    if spec.scheme != Scheme::Even {
        let counts = scheme_counts(n, spec.scheme)?;
        if let Some((party, &count)) = counts.iter().enumerate().find(|(_, &c)| c < classes) {
            return Err(Error::InfeasiblePartition(format!(
                "scheme {} leaves party {} with {count} rows, fewer than the {classes} classes",
                spec.scheme,
                party + 1
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut result = partition_even(n, spec.num_parties, &mut rng)?;
    for _ in 0..spec.scheme.reallocation_passes() {
        result = reallocate_once(&result, &mut rng)?;
    }
    Ok(result)
}

/// On-disk record of a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub dataset: String,
    pub scheme: Scheme,
    pub seed: u64,
    pub party_counts: Vec<usize>,
    /// Per-party label histograms, for checking that label mix stays global.
    pub party_label_counts: Vec<Vec<u64>>,
    pub index_lists: Vec<Vec<usize>>,
}

impl PartitionManifest {
    pub fn new(
        dataset: &str,
        spec: &PartitionSpec,
        train: &DatasetMatrix,
        result: &PartitionResult,
    ) -> Self {
        Self {
            dataset: dataset.to_string(),
            scheme: spec.scheme,
            seed: spec.seed,
            party_counts: result.counts(),
            party_label_counts: result
                .parties
                .iter()
                .map(|rows| train.subset(rows).label_histogram())
                .collect(),
            index_lists: result.parties.clone(),
        }
    }

    pub fn partition(&self) -> PartitionResult {
        PartitionResult {
            parties: self.index_lists.clone(),
        }
    }
}
