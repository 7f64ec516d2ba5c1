//! Fixture builders shared by the benchmarks.

use langsim_core::tensorstore::DumpFlags;
use langsim_core::{BitSet, CorpusTag, FisherDump, LanguageCode, LayoutManifest, Objective, RunMeta, TensorSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bitset of `len` bits, each set with probability 1/4.
pub fn random_bits(len: usize, seed: u64) -> BitSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words: Vec<u64> = (0..len.div_ceil(64)).map(|_| rng.random::<u64>() & rng.random::<u64>()).collect();
    if !len.is_multiple_of(64) {
        if let Some(w) = words.last_mut() {
            *w &= (1u64 << (len % 64)) - 1;
        }
    }
    BitSet::from_words(words, len).expect("trailing bits cleared")
}

/// Single-tensor dump of uniform random Fisher values.
pub fn random_dump(len: usize, seed: u64) -> FisherDump {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FisherDump {
        manifest: LayoutManifest::new("bench", vec![TensorSpec::new("w", [len as u64])], vec![])
            .expect("valid manifest"),
        values: (0..len).map(|_| rng.random::<f32>()).collect(),
        example_count: 1,
        meta: RunMeta::new(LanguageCode::new("xx").expect("code"), Objective::LmMasked, CorpusTag::TaskCorpus, 0),
        flags: DumpFlags::default(),
    }
}

pub fn random_gradients(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}
