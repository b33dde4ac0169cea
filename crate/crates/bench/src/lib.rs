//! Seeded inputs shared by the benchmarks.

use fedxgb::boosting::GradPair;
use fedxgb::{DatasetMatrix, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` rows of `m` features, about 2% missing, with binary labels.
pub fn dataset(n: usize, m: usize, seed: u64) -> DatasetMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|j| {
                    if rng.gen_bool(0.02) {
                        f64::NAN
                    } else {
                        rng.gen_range(-10.0..10.0) * (j + 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let labels = rows
        .iter()
        .map(|r| u32::from(r[0].is_nan() || r[0] > 0.0))
        .collect();
    DatasetMatrix::from_rows(&rows, labels, Task::Binary).expect("well-formed rows")
}

pub fn grad_pairs(n: usize, seed: u64) -> Vec<GradPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| GradPair {
            grad: rng.gen_range(-1.0..1.0),
            hess: rng.gen_range(0.01..0.25),
        })
        .collect()
}

pub fn values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(1e-3..1e6)).collect()
}
