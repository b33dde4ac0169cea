#![allow(dead_code)]

use fedxgb::{DatasetMatrix, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Noisy classification data: class depends on a few feature combinations.
/// `missing` is the probability that a feature value is NaN.
pub fn synthetic(n: usize, m: usize, task: Task, missing: f64, seed: u64) -> DatasetMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = task.num_classes();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..m)
            .map(|j| {
                let base: f64 = rng.gen_range(-3.0..3.0);
                if j % 3 == 2 {
                    (base * 4.0).round()
                } else {
                    base * (j + 1) as f64
                }
            })
            .collect();
        let score = row[0] + 0.5 * row.get(1).copied().unwrap_or(0.0) + rng.gen_range(-1.0..1.0);
        let label = ((score + 6.0) / 12.0 * k as f64).clamp(0.0, (k - 1) as f64) as u32;
        labels.push(label);
        rows.push(
            row.into_iter()
                .map(|v| if rng.gen_bool(missing) { f64::NAN } else { v })
                .collect(),
        );
    }
    DatasetMatrix::from_rows(&rows, labels, task).unwrap()
}

/// Seeded random assignment of rows into `parts` non-empty pieces, each
/// keeping the original row order.
pub fn random_split(data: &DatasetMatrix, parts: usize, seed: u64) -> Vec<DatasetMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); parts];
    for i in 0..data.num_rows() {
        let g = if i < parts {
            i
        } else {
            rng.gen_range(0..parts)
        };
        groups[g].push(i);
    }
    groups.iter().map(|g| data.subset(g)).collect()
}
