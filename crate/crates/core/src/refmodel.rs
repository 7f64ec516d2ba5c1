//! Toy masked-token model with hand-written backprop, and a generator of
//! synthetic language families with known pairwise affinity.
//!
//! Architecture: mean-pooled context embedding `c`, hidden layer
//! `h = tanh(W1ᵀc + b1)`, output logits `z = W2ᵀh + b2`. The embedding table
//! sits outside θ. All gradients returned here are gradients of the
//! log-likelihood, not of the loss.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::fisher::{FisherAccumulator, FisherError};
use crate::lang::{CorpusTag, LanguageCode, Objective, RunMeta};
use crate::tensorstore::{DumpFlags, FisherDump, LayoutManifest, TensorSpec};

pub const DEFAULT_VOCAB: usize = 64;
pub const DEFAULT_EMBED: usize = 16;
pub const DEFAULT_HIDDEN: usize = 32;
/// Fraction of positions masked per sentence (at least one).
pub const MASK_RATIO: f64 = 0.15;
/// Sentences per accumulation shard; fixed so results do not depend on thread count.
pub const SHARD_SIZE: usize = 64;

#[derive(Debug, Error)]
pub enum RefModelError {
    #[error("empty sentence")]
    EmptySentence,
    #[error("token {token} at position {position} is outside the vocabulary of {vocab}")]
    OutOfVocab { token: u32, position: usize, vocab: usize },
    #[error("label {label} out of range for {num_labels} labels")]
    LabelOutOfRange { label: usize, num_labels: usize },
    #[error("task head expects input dimension {expected}, model has {found}")]
    HeadMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Fisher(#[from] FisherError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self { vocab: DEFAULT_VOCAB, embed: DEFAULT_EMBED, hidden: DEFAULT_HIDDEN }
    }
}

impl ModelDims {
    pub fn theta_len(&self) -> usize {
        self.embed * self.hidden + self.hidden + self.hidden * self.vocab + self.vocab
    }
}

/// Offsets of the θ blocks in the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub dims: ModelDims,
    /// `W1 (E×H) | b1 (H) | W2 (H×V) | b2 (V)`, row-major.
    pub theta: Vec<f64>,
    /// `(V + 1) × E`; the last row is the mask embedding.
    pub embeddings: Vec<f64>,
    pub rng_seed: u64,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

impl ToyModel {
    /// Gaussian initialisation scaled by fan-in.
    pub fn random(dims: ModelDims, rng_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let embeddings = normal_vec(&mut rng, (dims.vocab + 1) * dims.embed, 1.0);
        let mut theta = Vec::with_capacity(dims.theta_len());
        theta.extend(normal_vec(&mut rng, dims.embed * dims.hidden, 1.0 / (dims.embed as f64).sqrt()));
        theta.extend(normal_vec(&mut rng, dims.hidden, 0.1));
        theta.extend(normal_vec(&mut rng, dims.hidden * dims.vocab, 1.0 / (dims.hidden as f64).sqrt()));
        theta.extend(normal_vec(&mut rng, dims.vocab, 0.1));
        Self { dims, theta, embeddings, rng_seed }
    }

    /// θ = 0 with random embeddings; every output distribution is uniform.
    pub fn zeros(dims: ModelDims, rng_seed: u64) -> Self {
        let mut m = Self::random(dims, rng_seed);
        m.theta.iter_mut().for_each(|v| *v = 0.0);
        m
    }

    pub fn mask_token(&self) -> usize {
        self.dims.vocab
    }

    fn offsets(&self) -> Offsets {
        let d = self.dims;
        let b1 = d.embed * d.hidden;
        let w2 = b1 + d.hidden;
        Offsets { b1, w2, b2: w2 + d.hidden * d.vocab }
    }

    /// Layout of θ; embeddings and any task head are recorded as excluded.
    pub fn manifest(&self) -> LayoutManifest {
        let d = self.dims;
        let tensors = vec![
            TensorSpec::new("w1", [d.embed as u64, d.hidden as u64]),
            TensorSpec::new("b1", [d.hidden as u64]),
            TensorSpec::new("w2", [d.hidden as u64, d.vocab as u64]),
            TensorSpec::new("b2", [d.vocab as u64]),
        ];
        let id = format!("toy-mlm-v{}-e{}-h{}-s{}", d.vocab, d.embed, d.hidden, self.rng_seed);
        LayoutManifest::new(id, tensors, vec!["embeddings".into(), "task_head".into()]).expect("toy layout is valid")
    }

    fn check(&self, sentence: &[u32]) -> Result<(), RefModelError> {
        if sentence.is_empty() {
            return Err(RefModelError::EmptySentence);
        }
        if let Some((position, &token)) = sentence.iter().enumerate().find(|(_, &t)| t as usize >= self.dims.vocab) {
            return Err(RefModelError::OutOfVocab { token, position, vocab: self.dims.vocab });
        }
        Ok(())
    }

    /// Mean embedding over positions; `masked[i]` swaps in the mask row.
    fn context(&self, sentence: &[u32], masked: &[bool]) -> Vec<f64> {
        let e = self.dims.embed;
        let mut c = vec![0.0; e];
        for (i, &t) in sentence.iter().enumerate() {
            let row = if masked.get(i).copied().unwrap_or(false) { self.mask_token() } else { t as usize };
            for (cj, v) in c.iter_mut().zip(&self.embeddings[row * e..(row + 1) * e]) {
                *cj += v;
            }
        }
        let n = sentence.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    fn hidden(&self, c: &[f64]) -> Vec<f64> {
        let d = self.dims;
        let o = self.offsets();
        (0..d.hidden)
            .map(|j| {
                let a: f64 =
                    (0..d.embed).map(|i| c[i] * self.theta[i * d.hidden + j]).sum::<f64>() + self.theta[o.b1 + j];
                a.tanh()
            })
            .collect()
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        let d = self.dims;
        let o = self.offsets();
        (0..d.vocab)
            .map(|v| {
                (0..d.hidden).map(|j| h[j] * self.theta[o.w2 + j * d.vocab + v]).sum::<f64>() + self.theta[o.b2 + v]
            })
            .collect()
    }

    /// Backprop `g_z = ∂ℓ/∂z` into a flat θ gradient.
    fn backward(&self, c: &[f64], h: &[f64], g_z: &[f64]) -> Vec<f64> {
        let d = self.dims;
        let o = self.offsets();
        let mut grad = vec![0.0; d.theta_len()];
        grad[o.b2..o.b2 + d.vocab].copy_from_slice(g_z);
        let mut g_a = vec![0.0; d.hidden];
        for j in 0..d.hidden {
            let row = &self.theta[o.w2 + j * d.vocab..o.w2 + (j + 1) * d.vocab];
            let g_h: f64 = row.iter().zip(g_z).map(|(w, g)| w * g).sum();
            for v in 0..d.vocab {
                grad[o.w2 + j * d.vocab + v] = h[j] * g_z[v];
            }
            g_a[j] = g_h * (1.0 - h[j] * h[j]);
        }
        grad[o.b1..o.b1 + d.hidden].copy_from_slice(&g_a);
        for i in 0..d.embed {
            for j in 0..d.hidden {
                grad[i * d.hidden + j] = c[i] * g_a[j];
            }
        }
        grad
    }

    /// Sentence vector: hidden state of the unmasked context.
    pub fn sentence_embedding(&self, sentence: &[u32]) -> Result<Vec<f64>, RefModelError> {
        self.check(sentence)?;
        Ok(self.hidden(&self.context(sentence, &[])))
    }
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Number of positions masked in a sentence of length `len`.
pub fn mask_count(len: usize) -> usize {
    ((MASK_RATIO * len as f64).round() as usize).clamp(1, len.max(1))
}

/// Positions masked for `mask_seed`, ascending.
pub fn mask_positions(len: usize, mask_seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
    let mut pos = rand::seq::index::sample(&mut rng, len, mask_count(len)).into_vec();
    pos.sort_unstable();
    pos
}

/// Masked-LM log-likelihood: Σ over masked positions of log p(true token | context).
pub fn mlm_logprob_and_grad(
    model: &ToyModel,
    sentence: &[u32],
    mask_seed: u64,
) -> Result<(f64, Vec<f64>), RefModelError> {
    model.check(sentence)?;
    let positions = mask_positions(sentence.len(), mask_seed);
    mlm_with_positions(model, sentence, &positions)
}

/// [`mlm_logprob_and_grad`] with explicit masked positions.
pub fn mlm_with_positions(
    model: &ToyModel,
    sentence: &[u32],
    positions: &[usize],
) -> Result<(f64, Vec<f64>), RefModelError> {
    model.check(sentence)?;
    if positions.is_empty() || positions.iter().any(|&p| p >= sentence.len()) {
        return Err(RefModelError::Invalid("mask positions out of range".into()));
    }
    let mut masked = vec![false; sentence.len()];
    positions.iter().for_each(|&p| masked[p] = true);
    let c = model.context(sentence, &masked);
    let h = model.hidden(&c);
    let lp = log_softmax(&model.logits(&h));
    let m = positions.len() as f64;
    let mut g_z: Vec<f64> = lp.iter().map(|l| -m * l.exp()).collect();
    let mut logprob = 0.0;
    for &p in positions {
        let y = sentence[p] as usize;
        logprob += lp[y];
        g_z[y] += 1.0;
    }
    Ok((logprob, model.backward(&c, &h, &g_z)))
}

/// Frozen random classifier over the model's output logits.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead {
    pub num_labels: usize,
    pub input_dim: usize,
    /// `num_labels × input_dim`, row-major.
    pub weights: Vec<f64>,
}

impl TaskHead {
    pub fn random(num_labels: usize, input_dim: usize, head_seed: u64) -> Result<Self, RefModelError> {
        if num_labels < 2 || input_dim == 0 {
            return Err(RefModelError::Invalid(format!(
                "task head needs ≥2 labels and a positive input dim, got {num_labels}×{input_dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(head_seed ^ 0x7a5c_4ead);
        let weights = normal_vec(&mut rng, num_labels * input_dim, 1.0 / (input_dim as f64).sqrt());
        Ok(Self { num_labels, input_dim, weights })
    }
}

/// Cross-entropy log-likelihood of `label` under a frozen head on top of the
/// unmasked model logits; gradients flow into θ only.
pub fn taskhead_logprob_and_grad(
    model: &ToyModel,
    head: &TaskHead,
    sentence: &[u32],
    label: usize,
) -> Result<(f64, Vec<f64>), RefModelError> {
    model.check(sentence)?;
    if head.input_dim != model.dims.vocab {
        return Err(RefModelError::HeadMismatch { expected: head.input_dim, found: model.dims.vocab });
    }
    if label >= head.num_labels {
        return Err(RefModelError::LabelOutOfRange { label, num_labels: head.num_labels });
    }
    let c = model.context(sentence, &[]);
    let h = model.hidden(&c);
    let z = model.logits(&h);
    let v = model.dims.vocab;
    let u: Vec<f64> = (0..head.num_labels)
        .map(|l| head.weights[l * v..(l + 1) * v].iter().zip(&z).map(|(w, x)| w * x).sum())
        .collect();
    let lp = log_softmax(&u);
    let mut g_z = vec![0.0; v];
    for (l, (lp_l, row)) in lp.iter().zip(head.weights.chunks_exact(v)).enumerate() {
        let g_u = if l == label { 1.0 } else { 0.0 } - lp_l.exp();
        for (g, w) in g_z.iter_mut().zip(row) {
            *g += g_u * w;
        }
    }
    Ok((lp[label], model.backward(&c, &h, &g_z)))
}

/// splitmix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Per-sentence RNG seed derived from a run seed and a sentence index.
pub fn stream_seed(seed: i64, index: u64) -> u64 {
    mix64(mix64(seed as u64) ^ index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLanguage {
    pub code: LanguageCode,
    pub family: usize,
    pub token_distribution: Vec<f64>,
    pub corpus_seed: u64,
}

impl SyntheticLanguage {
    /// `1 − ½‖p − q‖₁`.
    pub fn affinity(&self, other: &SyntheticLanguage) -> f64 {
        1.0 - 0.5
            * self.token_distribution.iter().zip(&other.token_distribution).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// `n` sentences of i.i.d. tokens with lengths uniform in `len_range` (inclusive).
pub fn generate_corpus(
    lang: &SyntheticLanguage,
    n: usize,
    len_range: (usize, usize),
) -> Result<Vec<Vec<u32>>, RefModelError> {
    let (lo, hi) = len_range;
    if n == 0 || lo == 0 || lo > hi {
        return Err(RefModelError::Invalid(format!("need n ≥ 1 and 1 ≤ lo ≤ hi, got n={n}, range=({lo},{hi})")));
    }
    let dist = WeightedIndex::new(&lang.token_distribution).map_err(|e| RefModelError::Invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(lang.corpus_seed);
    Ok((0..n)
        .map(|_| {
            let len = rng.random_range(lo..=hi);
            (0..len).map(|_| dist.sample(&mut rng) as u32).collect()
        })
        .collect())
}

/// Families of languages over a `vocab`-token alphabet. Each family has an
/// independent log-normal base distribution; members multiply it by
/// `1 + noise·U(−1, 1)` per token and renormalize. Codes are `f{family}{letter}`.
pub fn make_families(
    num_families: usize,
    per_family: usize,
    noise: f64,
    seed: u64,
    vocab: usize,
) -> Result<Vec<SyntheticLanguage>, RefModelError> {
    if !(noise > 0.0 && noise < 1.0) {
        return Err(RefModelError::Invalid(format!("noise must lie in (0, 1), got {noise}")));
    }
    if num_families == 0 || per_family == 0 || per_family > 26 || vocab == 0 {
        return Err(RefModelError::Invalid("need ≥1 family, 1..=26 members and a nonempty vocabulary".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(num_families * per_family);
    for f in 0..num_families {
        let base: Vec<f64> = (0..vocab).map(|_| (1.5 * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
        for m in 0..per_family {
            let w: Vec<f64> = base.iter().map(|b| b * (1.0 + noise * rng.random_range(-1.0..1.0))).collect();
            let s: f64 = w.iter().sum();
            let code = LanguageCode::new(format!("f{f}{}", (b'a' + m as u8) as char)).expect("short ascii code");
            out.push(SyntheticLanguage {
                code,
                family: f,
                token_distribution: w.into_iter().map(|x| x / s).collect(),
                corpus_seed: stream_seed(seed as i64, (f * 26 + m) as u64),
            });
        }
    }
    Ok(out)
}

/// Which log-likelihood feeds the Fisher estimate.
#[derive(Debug, Clone)]
pub enum FisherObjective<'a> {
    Masked,
    TaskHead(&'a TaskHead),
}

impl FisherObjective<'_> {
    pub fn tag(&self) -> Objective {
        match self {
            FisherObjective::Masked => Objective::LmMasked,
            FisherObjective::TaskHead(_) => Objective::TaskHeadRandom,
        }
    }
}

/// Indices of `sample_size` corpus sentences for `seed`: without replacement
/// when the corpus is large enough, else with replacement (second value true).
pub fn sample_indices(corpus_len: usize, sample_size: usize, seed: i64) -> (Vec<usize>, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, u64::MAX));
    if corpus_len >= sample_size {
        (rand::seq::index::sample(&mut rng, corpus_len, sample_size).into_vec(), false)
    } else {
        ((0..sample_size).map(|_| rng.random_range(0..corpus_len)).collect(), true)
    }
}

/// Per-example gradient for sample position `i` of the run.
pub fn example_gradient(
    model: &ToyModel,
    objective: &FisherObjective<'_>,
    sentence: &[u32],
    seed: i64,
    i: usize,
) -> Result<Vec<f64>, RefModelError> {
    let s = stream_seed(seed, i as u64);
    let (_, g) = match objective {
        FisherObjective::Masked => mlm_logprob_and_grad(model, sentence, s)?,
        FisherObjective::TaskHead(head) => {
            let label = (mix64(s) % head.num_labels as u64) as usize;
            taskhead_logprob_and_grad(model, head, sentence, label)?
        }
    };
    Ok(g)
}

/// Diagonal Fisher of the toy model for one language and seed. Shards of
/// [`SHARD_SIZE`] sentences run in parallel and merge in a fixed tree, so the
/// dump is bit-identical regardless of thread count.
pub fn fisher_dump(
    model: &ToyModel,
    objective: &FisherObjective<'_>,
    corpus: &[Vec<u32>],
    sample_size: usize,
    language: LanguageCode,
    corpus_tag: CorpusTag,
    seed: i32,
) -> Result<FisherDump, RefModelError> {
    if corpus.is_empty() || sample_size == 0 {
        return Err(RefModelError::Invalid("empty corpus or zero sample size".into()));
    }
    let (idx, with_replacement) = sample_indices(corpus.len(), sample_size, seed as i64);
    if with_replacement {
        log::warn!(
            "{language}: corpus has {} sentences < sample size {sample_size}; sampling with replacement",
            corpus.len()
        );
    }
    let manifest = model.manifest();
    let shards = idx
        .par_chunks(SHARD_SIZE)
        .enumerate()
        .map(|(c, chunk)| {
            let mut acc = FisherAccumulator::new(manifest.clone());
            for (j, &k) in chunk.iter().enumerate() {
                let g = example_gradient(model, objective, &corpus[k], seed as i64, c * SHARD_SIZE + j)?;
                acc.absorb(&g)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>, RefModelError>>()?;
    let acc = FisherAccumulator::merge_tree(shards)?.expect("at least one shard");
    let mut flags = DumpFlags::default().with(DumpFlags::STOCHASTIC_DISABLED);
    if with_replacement {
        flags = flags.with(DumpFlags::SAMPLED_WITH_REPLACEMENT);
    }
    Ok(acc.finalize(RunMeta::new(language, objective.tag(), corpus_tag, seed), flags)?)
}

/// Mean of per-sentence embeddings over the first `n` sentences.
pub fn corpus_embeddings(model: &ToyModel, corpus: &[Vec<u32>], n: usize) -> Result<Vec<Vec<f64>>, RefModelError> {
    corpus.iter().take(n).map(|s| model.sentence_embedding(s)).collect()
}
