//! Comparison predictors: typological-vector cosine (L2V), lexical
//! divergence (LEX), subword evenness (SuE), and embedding cosine (EMB).

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use crate::hash::Fnv1a64;
use crate::lang::LanguageCode;
use crate::matrix::{Method, SimilarityMatrix};

/// Prefix marking a word-internal subword in vocabulary files.
pub const CONTINUATION: &str = "##";
/// Fallback unit used for words the vocabulary cannot segment.
pub const UNK: &str = "[UNK]";
/// Sentences averaged for an EMB vector by default.
pub const DEFAULT_EMB_SAMPLES: usize = 1024;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("word {0:?} cannot be segmented and the vocabulary has no {UNK} token")]
    Unsegmentable(String),
    #[error("distributions use different vocabularies ({0:016x} vs {1:016x})")]
    VocabMismatch(u64, u64),
    #[error("empty word")]
    EmptyWord,
    #[error("subwords {subwords:?} do not concatenate to {word:?}")]
    InconsistentSegmentation { word: String, subwords: Vec<String> },
    #[error("lower envelope needs at least 2 distinct word lengths")]
    DegenerateEnvelope,
    #[error("vector dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("vector kinds differ")]
    KindMismatch,
    #[error("zero vector for {0}")]
    ZeroVector(String),
    #[error("no vectors to pool")]
    NoVectors,
    #[error("non-finite entry in vector for {0}")]
    NonFinite(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Subword vocabulary: one token per line, id = 0-based line number.
/// Word-internal pieces carry the `##` prefix.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    max_piece_chars: usize,
    id: u64,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self, BaselineError> {
        let mut index = HashMap::with_capacity(tokens.len());
        let mut h = Fnv1a64::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(BaselineError::Parse { line: i + 1, reason: format!("invalid token {t:?}") });
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(BaselineError::Parse { line: i + 1, reason: format!("duplicate token {t:?}") });
            }
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        let max_piece_chars =
            tokens.iter().map(|t| t.trim_start_matches(CONTINUATION).chars().count()).max().unwrap_or(0);
        Ok(Self { tokens, index, max_piece_chars, id: h.finish() })
    }

    pub fn read<R: Read>(source: R) -> Result<Self, BaselineError> {
        let tokens = BufReader::new(source)
            .lines()
            .map(|l| l.map(|s| s.trim_end_matches('\r').to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(tokens)
    }

    /// Digest of the token list; distributions are only comparable under equal ids.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Greedy longest-match segmentation of one word into token ids.
    /// Falls back to a single `[UNK]` when some position has no match.
    pub fn segment(&self, word: &str) -> Result<Vec<u32>, BaselineError> {
        if word.is_empty() {
            return Err(BaselineError::EmptyWord);
        }
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        let mut ids = Vec::new();
        let mut pos = 0;
        let mut candidate = String::new();
        while pos < chars.len() {
            let mut matched = None;
            let longest = (chars.len() - pos).min(self.max_piece_chars);
            for len in (1..=longest).rev() {
                let start = chars[pos].0;
                let end = chars.get(pos + len).map_or(word.len(), |c| c.0);
                candidate.clear();
                if pos > 0 {
                    candidate.push_str(CONTINUATION);
                }
                candidate.push_str(&word[start..end]);
                if let Some(id) = self.lookup(&candidate) {
                    matched = Some((id, len));
                    break;
                }
            }
            match matched {
                Some((id, len)) => {
                    ids.push(id);
                    pos += len;
                }
                None => {
                    return self
                        .lookup(UNK)
                        .map(|u| vec![u])
                        .ok_or_else(|| BaselineError::Unsegmentable(word.to_string()));
                }
            }
        }
        Ok(ids)
    }

    /// Surface pieces of a segmentation, continuation markers kept.
    pub fn pieces(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().filter_map(|&i| self.token(i)).map(str::to_string).collect()
    }
}

/// Token counts that can be built in shards and merged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnigramCounter {
    counts: HashMap<u32, u64>,
    total: u64,
}

impl UnigramCounter {
    pub fn add_ids(&mut self, ids: &[u32]) {
        for &id in ids {
            *self.counts.entry(id).or_default() += 1;
        }
        self.total += ids.len() as u64;
    }

    /// Segments every whitespace-separated word of `sentence`.
    pub fn add_sentence(&mut self, sentence: &str, vocab: &Vocabulary) -> Result<(), BaselineError> {
        for w in sentence.split_whitespace() {
            let ids = vocab.segment(w)?;
            self.add_ids(&ids);
        }
        Ok(())
    }

    pub fn merge(mut self, other: UnigramCounter) -> Self {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_default() += v;
        }
        self.total += other.total;
        self
    }

    pub fn finish(self, language: LanguageCode, vocab_id: u64) -> Result<UnigramDistribution, BaselineError> {
        if self.total == 0 {
            return Err(BaselineError::EmptyCorpus);
        }
        let total = self.total as f64;
        let probs = self.counts.into_iter().map(|(k, c)| (k, c as f64 / total)).collect();
        Ok(UnigramDistribution { language, probs, vocab_id })
    }
}

/// Normalized subword frequencies over observed token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramDistribution {
    pub language: LanguageCode,
    pub probs: BTreeMap<u32, f64>,
    pub vocab_id: u64,
}

impl UnigramDistribution {
    pub fn write_csv<W: Write>(&self, vocab: &Vocabulary, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# language={} vocab_id={:016x}", self.language, self.vocab_id)?;
        writeln!(w, "token_id,token,prob")?;
        for (&id, p) in &self.probs {
            writeln!(w, "{id},{},{p:.12e}", vocab.token(id).unwrap_or("?"))?;
        }
        Ok(())
    }
}

/// Unigram distribution of a corpus under greedy longest-match segmentation.
pub fn unigram_distribution<'a>(
    language: LanguageCode,
    corpus: impl IntoIterator<Item = &'a str>,
    vocab: &Vocabulary,
) -> Result<UnigramDistribution, BaselineError> {
    let mut c = UnigramCounter::default();
    for s in corpus {
        c.add_sentence(s, vocab)?;
    }
    c.finish(language, vocab.id())
}

/// Jensen-Shannon divergence with base-2 logarithms, in `[0, 1]`.
pub fn jsd(p: &UnigramDistribution, q: &UnigramDistribution) -> Result<f64, BaselineError> {
    if p.vocab_id != q.vocab_id {
        return Err(BaselineError::VocabMismatch(p.vocab_id, q.vocab_id));
    }
    // Σ over the union of supports; terms with zero mass vanish.
    let term = |a: f64, m: f64| if a > 0.0 { a * (a / m).log2() } else { 0.0 };
    let mut total = 0.0;
    for (id, &a) in &p.probs {
        let b = q.probs.get(id).copied().unwrap_or(0.0);
        let m = 0.5 * (a + b);
        total += term(a, m) + term(b, m);
    }
    for (id, &b) in &q.probs {
        if !p.probs.contains_key(id) {
            total += term(b, 0.5 * b);
        }
    }
    Ok((0.5 * total).clamp(0.0, 1.0))
}

/// `max piece length / word length − 1 / piece count`; zero on even splits.
pub fn unevenness(word: &str, subwords: &[impl AsRef<str>]) -> Result<f64, BaselineError> {
    if word.is_empty() {
        return Err(BaselineError::EmptyWord);
    }
    let pieces: Vec<&str> = subwords.iter().map(|s| s.as_ref().trim_start_matches(CONTINUATION)).collect();
    if pieces.is_empty() || pieces.concat() != word {
        return Err(BaselineError::InconsistentSegmentation {
            word: word.to_string(),
            subwords: subwords.iter().map(|s| s.as_ref().to_string()).collect(),
        });
    }
    let longest = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(0) as f64;
    let len = word.chars().count() as f64;
    Ok(longest / len - 1.0 / pieces.len() as f64)
}

/// Per-word `(character length, unevenness)` points of a corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuEPointCloud {
    pub points: Vec<(u32, f64)>,
}

impl SuEPointCloud {
    /// Words segmented to `[UNK]` are skipped.
    pub fn from_corpus<'a>(
        corpus: impl IntoIterator<Item = &'a str>,
        vocab: &Vocabulary,
    ) -> Result<Self, BaselineError> {
        let unk = vocab.lookup(UNK);
        let mut points = Vec::new();
        for s in corpus {
            for w in s.split_whitespace() {
                let ids = vocab.segment(w)?;
                if unk.is_some() && ids.len() == 1 && Some(ids[0]) == unk {
                    continue;
                }
                let u = unevenness(w, &vocab.pieces(&ids))?;
                points.push((w.chars().count() as u32, u));
            }
        }
        if points.is_empty() {
            return Err(BaselineError::EmptyCorpus);
        }
        Ok(Self { points })
    }

    /// Minimum unevenness at each word length, ascending by length.
    pub fn lower_envelope(&self) -> Vec<(u32, f64)> {
        let mut env: BTreeMap<u32, f64> = BTreeMap::new();
        for &(x, y) in &self.points {
            env.entry(x).and_modify(|m| *m = m.min(y)).or_insert(y);
        }
        env.into_iter().collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "word_length,unevenness")?;
        for (x, y) in &self.points {
            writeln!(w, "{x},{y}")?;
        }
        Ok(())
    }
}

/// `180° − |atan 1| − |atan k|` in degrees.
pub fn sue_from_slope(k: f64) -> f64 {
    180.0 - 45.0 - k.atan().to_degrees().abs()
}

/// Least-squares slope through points.
pub fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// SuE angle of a language: slope of the min-max normalized lower envelope fed
/// through [`sue_from_slope`]. Lower is a better transfer source.
pub fn sue_score(cloud: &SuEPointCloud) -> Result<f64, BaselineError> {
    let env = cloud.lower_envelope();
    if env.len() < 2 {
        return Err(BaselineError::DegenerateEnvelope);
    }
    let (x0, x1) = (env[0].0 as f64, env[env.len() - 1].0 as f64);
    let (ymin, ymax) = env.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let yr = ymax - ymin;
    let norm: Vec<(f64, f64)> =
        env.iter().map(|&(x, y)| ((x as f64 - x0) / (x1 - x0), if yr > 0.0 { (y - ymin) / yr } else { 0.0 })).collect();
    Ok(sue_from_slope(ls_slope(&norm)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorKind {
    Typological,
    Embedding,
}

impl VectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VectorKind::Typological => "typological",
            VectorKind::Embedding => "embedding",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageVector {
    pub language: LanguageCode,
    pub vector: Vec<f64>,
    pub kind: VectorKind,
}

impl LanguageVector {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

pub fn cosine(a: &LanguageVector, b: &LanguageVector) -> Result<f64, BaselineError> {
    if a.kind != b.kind {
        return Err(BaselineError::KindMismatch);
    }
    if a.dim() != b.dim() {
        return Err(BaselineError::DimMismatch(a.dim(), b.dim()));
    }
    let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
    let na = a.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 {
        return Err(BaselineError::ZeroVector(a.language.to_string()));
    }
    if nb == 0.0 {
        return Err(BaselineError::ZeroVector(b.language.to_string()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Arithmetic mean of per-sentence vectors.
pub fn mean_pool_embeddings(
    language: LanguageCode,
    per_sentence: &[Vec<f64>],
) -> Result<LanguageVector, BaselineError> {
    let first = per_sentence.first().ok_or(BaselineError::NoVectors)?;
    let dim = first.len();
    let mut sum = vec![0.0; dim];
    for v in per_sentence {
        if v.len() != dim {
            return Err(BaselineError::DimMismatch(dim, v.len()));
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let n = per_sentence.len() as f64;
    Ok(LanguageVector { language, vector: sum.into_iter().map(|s| s / n).collect(), kind: VectorKind::Embedding })
}

/// Language-vector file: optional `# key=value` header lines (`kind=` is
/// read back), then `code v1 v2 ...` per line.
pub fn read_vectors<R: Read>(source: R, default_kind: VectorKind) -> Result<Vec<LanguageVector>, BaselineError> {
    let mut kind = default_kind;
    let mut out: Vec<LanguageVector> = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(meta) = t.strip_prefix('#') {
            if let Some(("kind", v)) = meta.trim().split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
                kind = match v {
                    "typological" => VectorKind::Typological,
                    "embedding" => VectorKind::Embedding,
                    other => {
                        return Err(BaselineError::Parse { line: i + 1, reason: format!("unknown kind {other:?}") })
                    }
                };
            }
            continue;
        }
        let mut fields = t.split_whitespace();
        let code = fields.next().unwrap_or_default();
        let language =
            LanguageCode::new(code).map_err(|e| BaselineError::Parse { line: i + 1, reason: e.to_string() })?;
        let vector = fields
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| BaselineError::Parse { line: i + 1, reason: e.to_string() })?;
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(BaselineError::NonFinite(code.to_string()));
        }
        if let Some(prev) = out.first() {
            if prev.dim() != vector.len() {
                return Err(BaselineError::DimMismatch(prev.dim(), vector.len()));
            }
        }
        out.push(LanguageVector { language, vector, kind });
    }
    Ok(out)
}

pub fn write_vectors<W: Write>(
    vectors: &[LanguageVector],
    meta: &BTreeMap<String, String>,
    mut w: W,
) -> std::io::Result<()> {
    if let Some(v) = vectors.first() {
        writeln!(w, "# kind={}", v.kind.as_str())?;
    }
    for (k, v) in meta {
        writeln!(w, "# {k}={v}")?;
    }
    for v in vectors {
        let vals: Vec<String> = v.vector.iter().map(|x| format!("{x:.17e}")).collect();
        writeln!(w, "{} {}", v.language, vals.join(" "))?;
    }
    Ok(())
}

fn sorted<T>(mut items: Vec<T>, key: impl Fn(&T) -> &LanguageCode) -> Vec<T> {
    items.sort_by(|a, b| key(a).cmp(key(b)));
    items
}

/// Pairwise cosine matrix for L2V or EMB.
pub fn cosine_matrix(vectors: Vec<LanguageVector>, method: Method) -> Result<SimilarityMatrix, BaselineError> {
    let vectors = sorted(vectors, |v| &v.language);
    let n = vectors.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let c =
                if i == j { cosine(&vectors[i], &vectors[j]).map(|_| 1.0)? } else { cosine(&vectors[i], &vectors[j])? };
            values[i * n + j] = c;
            values[j * n + i] = c;
        }
    }
    Ok(SimilarityMatrix::new(vectors.into_iter().map(|v| v.language).collect(), values, method, 1))
}

/// Pairwise JSD matrix (raw divergences, lower is better).
pub fn lex_matrix(dists: Vec<UnigramDistribution>) -> Result<SimilarityMatrix, BaselineError> {
    let dists = sorted(dists, |d| &d.language);
    let n = dists.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = jsd(&dists[i], &dists[j])?;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(SimilarityMatrix::new(dists.into_iter().map(|d| d.language).collect(), values, Method::Lex, 1))
}

/// SuE is a property of the candidate source alone: every row `t` holds `SuE(s)` at column `s`.
pub fn sue_matrix(scores: Vec<(LanguageCode, f64)>) -> SimilarityMatrix {
    let scores = sorted(scores, |s| &s.0);
    let n = scores.len();
    let values = (0..n * n).map(|x| scores[x % n].1).collect();
    SimilarityMatrix::new(scores.into_iter().map(|s| s.0).collect(), values, Method::Sue, 1)
}
