/// One step of the splitmix64 generator: advances `state` by the golden
/// gamma and mixes it.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for the stage named `label` (e.g. `"holdout"`,
/// `"partition/c"`): each label byte is folded in with one splitmix64 step.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let folded = label
        .bytes()
        .fold(master, |h, b| splitmix64(h ^ u64::from(b)));
    splitmix64(folded)
}

pub fn holdout_seed(master: u64) -> u64 {
    derive_seed(master, "holdout")
}

pub fn partition_seed(master: u64, scheme: crate::dataset::Scheme) -> u64 {
    derive_seed(master, &format!("partition/{scheme}"))
}

pub fn subsample_seed(master: u64) -> u64 {
    derive_seed(master, "subsample")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Scheme;
    use std::collections::HashSet;

    #[test]
    fn splitmix_reference_output() {
        // First output of splitmix64 seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn labels_give_distinct_seeds() {
        let mut seen = HashSet::new();
        assert!(seen.insert(holdout_seed(7)));
        assert!(seen.insert(subsample_seed(7)));
        for s in Scheme::ALL {
            assert!(seen.insert(partition_seed(7, s)));
        }
        assert_ne!(holdout_seed(7), holdout_seed(8));
        assert_eq!(partition_seed(3, Scheme::C), partition_seed(3, Scheme::C));
    }
}
