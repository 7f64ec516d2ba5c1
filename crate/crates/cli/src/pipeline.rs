//! Commands that produce dumps, masks, and similarity matrices.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use langsim_core::baselines::{
    cosine_matrix, lex_matrix, mean_pool_embeddings, read_vectors, sue_matrix, sue_score, write_vectors, SuEPointCloud,
    UnigramCounter, VectorKind, Vocabulary,
};
use langsim_core::evalrank::{rank_sources, GoldRow};
use langsim_core::fisher::FisherAccumulator;
use langsim_core::refmodel::{
    fisher_dump, generate_corpus, make_families, sample_indices, FisherObjective, ModelDims, TaskHead, ToyModel,
};
use langsim_core::subnet::{build_mask, similarity_matrix};
use langsim_core::tensorstore::{read_mask, write_dump, write_mask, DumpFlags};
use langsim_core::{LanguageCode, Method, Objective, RunConfig, SimilarityMatrix, SubNetwork, TransferScoreTable};

use crate::inputs::{self, validation, Provenance};

pub fn toy_model(cfg: &RunConfig) -> ToyModel {
    ToyModel::random(ModelDims::default(), cfg.model_seed)
}

pub fn task_head(cfg: &RunConfig, model: &ToyModel) -> Result<Option<TaskHead>> {
    Ok(match cfg.objective {
        Objective::LmMasked => None,
        Objective::TaskHeadRandom => Some(TaskHead::random(cfg.num_labels, model.dims.vocab, cfg.head_seed)?),
    })
}

fn objective<'a>(head: &'a Option<TaskHead>) -> FisherObjective<'a> {
    match head {
        Some(h) => FisherObjective::TaskHead(h),
        None => FisherObjective::Masked,
    }
}

pub fn dump_name(code: &LanguageCode, seed: i32) -> String {
    format!("{code}_s{seed}.fgrd")
}

/// Corpora of a directory keyed by language code (file stem).
pub fn corpora(dir: &Path) -> Result<Vec<(LanguageCode, PathBuf)>> {
    let files = inputs::list(dir, "txt")?;
    if files.is_empty() {
        return Err(validation(format!("no .txt corpora in {}", dir.display())));
    }
    files.into_iter().map(|p| Ok((inputs::code_from_stem(&p)?, p))).collect()
}

pub struct SynthArgs {
    pub families: usize,
    pub per_family: usize,
    pub noise: f64,
    pub family_seed: u64,
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub task: String,
}

pub fn synth(cfg: &RunConfig, a: &SynthArgs) -> Result<()> {
    let langs = make_families(a.families, a.per_family, a.noise, a.family_seed, ModelDims::default().vocab)?;
    let prov = Provenance::new("synth", cfg, &[])?;
    let fixture = format!(
        "# families={} per_family={} noise={} family_seed={} sentences={} len_range={}..={}",
        a.families, a.per_family, a.noise, a.family_seed, a.sentences, a.min_len, a.max_len
    );
    let model = toy_model(cfg);
    let mut emb = Vec::new();
    let mut typ = Vec::new();
    for l in &langs {
        let corpus = generate_corpus(l, a.sentences, (a.min_len, a.max_len))?;
        let mut w = inputs::create(&cfg.out_dir.join("corpora").join(format!("{}.txt", l.code)))?;
        for s in &corpus {
            let line: Vec<String> = s.iter().map(u32::to_string).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        w.flush()?;
        let (idx, _) = sample_indices(corpus.len(), cfg.sample_size, cfg.seeds[0] as i64);
        let per = idx.iter().map(|&i| model.sentence_embedding(&corpus[i])).collect::<Result<Vec<_>, _>>()?;
        emb.push(mean_pool_embeddings(l.code.clone(), &per)?);
        typ.push(langsim_core::baselines::LanguageVector {
            language: l.code.clone(),
            vector: l.token_distribution.clone(),
            kind: VectorKind::Typological,
        });
    }

    let mut w = inputs::create(&cfg.out_dir.join("affinity.csv"))?;
    prov.write(&mut w)?;
    writeln!(w, "{fixture}")?;
    writeln!(w, "source,target,family_source,family_target,affinity")?;
    let mut gold = Vec::new();
    for s in &langs {
        for t in &langs {
            let aff = s.affinity(t);
            writeln!(w, "{},{},{},{},{aff:.12}", s.code, t.code, s.family, t.family)?;
            for &seed in &cfg.seeds {
                gold.push(GoldRow {
                    task: a.task.clone(),
                    source: s.code.to_string(),
                    target: t.code.to_string(),
                    seed: seed as i64,
                    score: 100.0 * aff,
                });
            }
        }
    }
    w.flush()?;

    let mut w = inputs::create(&cfg.out_dir.join("gold.csv"))?;
    prov.write(&mut w)?;
    writeln!(w, "{fixture}")?;
    TransferScoreTable::new(gold)?.write_csv(&mut w)?;

    let mut meta: BTreeMap<String, String> = prov.pairs.iter().cloned().collect();
    meta.insert("pooling".to_string(), "mean_of_sentence_hidden_states".to_string());
    write_vectors(&emb, &meta, inputs::create(&cfg.out_dir.join("embeddings.vec"))?)?;
    let mut meta: BTreeMap<String, String> = prov.pairs.iter().cloned().collect();
    meta.insert("source".to_string(), "synthetic_token_distribution".to_string());
    write_vectors(&typ, &meta, inputs::create(&cfg.out_dir.join("typology.vec"))?)?;

    prov.print();
    println!("{fixture}");
    println!("language,family");
    for l in &langs {
        println!("{},{}", l.code, l.family);
    }
    Ok(())
}

/// Toy-model dumps for one corpus, one per configured seed.
pub fn dumps_for_corpus(
    cfg: &RunConfig,
    code: &LanguageCode,
    corpus: &[Vec<u32>],
) -> Result<Vec<langsim_core::FisherDump>> {
    let model = toy_model(cfg);
    let head = task_head(cfg, &model)?;
    let obj = objective(&head);
    cfg.seeds
        .iter()
        .map(|&seed| Ok(fisher_dump(&model, &obj, corpus, cfg.sample_size, code.clone(), cfg.corpus_tag, seed)?))
        .collect()
}

pub enum FisherSource {
    Corpus { path: PathBuf, language: LanguageCode },
    CorpusDir(PathBuf),
    GradStream(PathBuf),
}

pub fn fisher(cfg: &RunConfig, source: FisherSource) -> Result<()> {
    let mut written = Vec::new();
    let inputs_used: Vec<PathBuf> = match source {
        FisherSource::GradStream(path) => {
            let (acc, header) = FisherAccumulator::from_stream(inputs::open(&path)?)
                .with_context(|| format!("reading gradient stream {}", path.display()))?;
            let dump = acc.finalize(header.meta.clone(), header.flags)?;
            written.push(dump);
            vec![path]
        }
        FisherSource::Corpus { path, language } => {
            let corpus = inputs::read_corpus(&path)?;
            written.extend(dumps_for_corpus(cfg, &language, &corpus)?);
            vec![path]
        }
        FisherSource::CorpusDir(dir) => {
            let list = corpora(&dir)?;
            for (code, path) in &list {
                let corpus = inputs::read_corpus(path)?;
                written.extend(dumps_for_corpus(cfg, code, &corpus)?);
            }
            list.into_iter().map(|(_, p)| p).collect()
        }
    };
    let prov = Provenance::new("fisher", cfg, &inputs_used)?;
    prov.print();
    println!("file,language,seed,objective,example_count,flags,bytes");
    for d in &written {
        let path = cfg.out_dir.join(dump_name(&d.meta.language, d.meta.seed));
        let bytes = write_dump(d, inputs::create(&path)?)?;
        println!(
            "{},{},{},{},{},{},{bytes}",
            path.display(),
            d.meta.language,
            d.meta.seed,
            d.meta.objective.as_str(),
            d.example_count,
            flag_names(d.flags)
        );
    }
    Ok(())
}

fn flag_names(f: DumpFlags) -> String {
    let mut v = Vec::new();
    if f.contains(DumpFlags::STOCHASTIC_DISABLED) {
        v.push("stochastic_disabled");
    }
    if f.contains(DumpFlags::SEQ_TRUNCATED) {
        v.push("seq_truncated");
    }
    if f.contains(DumpFlags::SAMPLED_WITH_REPLACEMENT) {
        v.push("sampled_with_replacement");
    }
    if v.is_empty() {
        "none".into()
    } else {
        v.join("|")
    }
}

/// Dumps and masks under `dir`, checked for a shared layout. Dumps are
/// binarized at `cfg.p`.
pub fn load_subnetworks(cfg: &RunConfig, dir: &Path) -> Result<(Vec<SubNetwork>, Vec<PathBuf>)> {
    let dumps = inputs::list(dir, "fgrd")?;
    let masks = inputs::list(dir, "fmsk")?;
    if dumps.is_empty() && masks.is_empty() {
        return Err(validation(format!("no .fgrd or .fmsk files in {}", dir.display())));
    }
    let mut subs = Vec::new();
    let mut hashes = Vec::new();
    for p in &dumps {
        let d = inputs::load_dump(p)?;
        hashes.push((p.clone(), d.manifest.layout_hash()));
        subs.push(build_mask(&d, cfg.p)?);
    }
    for p in &masks {
        let m = read_mask(inputs::open(p)?).with_context(|| format!("reading mask {}", p.display()))?;
        hashes.push((p.clone(), m.manifest_hash));
        subs.push(SubNetwork { mask: m });
    }
    let reference = hashes[0].1;
    let bad: Vec<String> = hashes
        .iter()
        .filter(|(_, h)| *h != reference)
        .map(|(p, h)| format!("{} (layout {h:016x})", p.display()))
        .collect();
    if !bad.is_empty() {
        return Err(validation(format!(
            "layout mismatch against {} (layout {reference:016x}): {}",
            hashes[0].0.display(),
            bad.join(", ")
        )));
    }
    let mut files = dumps;
    files.extend(masks);
    Ok((subs, files))
}

pub fn mask(cfg: &RunConfig, dumps: &[PathBuf]) -> Result<()> {
    let prov = Provenance::new("mask", cfg, dumps)?;
    prov.print();
    println!("file,language,seed,p,k_selected,degenerate");
    for p in dumps {
        let d = inputs::load_dump(p)?;
        let s = build_mask(&d, cfg.p)?;
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("mask");
        let out = cfg.out_dir.join(format!("{stem}.fmsk"));
        write_mask(&s.mask, inputs::create(&out)?)?;
        println!(
            "{},{},{},{},{},{}",
            out.display(),
            s.language(),
            s.seed(),
            cfg.p,
            s.mask.k_selected,
            s.is_degenerate()
        );
    }
    Ok(())
}

pub fn with_provenance(mut m: SimilarityMatrix, prov: &Provenance) -> SimilarityMatrix {
    for (k, v) in &prov.pairs {
        m.attributes.entry(k.clone()).or_insert_with(|| v.clone());
    }
    m.attributes.insert("command".into(), prov.command.clone());
    m
}

pub fn write_matrix(m: &SimilarityMatrix, path: &Path) -> Result<()> {
    langsim_core::tensorstore::write_matrix_csv(m, inputs::create(path)?)?;
    Ok(())
}

pub fn xsns_matrix(cfg: &RunConfig, dir: &Path) -> Result<SimilarityMatrix> {
    let (subs, files) = load_subnetworks(cfg, dir)?;
    let prov = Provenance::new("sim", cfg, &files)?;
    Ok(with_provenance(similarity_matrix(&subs)?, &prov))
}

pub fn sim(cfg: &RunConfig, dir: &Path, out: Option<PathBuf>) -> Result<()> {
    let m = xsns_matrix(cfg, dir)?;
    let out = out.unwrap_or_else(|| cfg.out_dir.join("xsns.csv"));
    write_matrix(&m, &out)?;
    langsim_core::tensorstore::write_matrix_csv(&m, std::io::stdout().lock())?;
    Ok(())
}

pub fn rank(
    cfg: &RunConfig,
    matrix: SimilarityMatrix,
    target: &str,
    top: Option<usize>,
    inputs_used: &[PathBuf],
) -> Result<()> {
    let target = LanguageCode::new(target).map_err(|e| validation(e.to_string()))?;
    let r = rank_sources(&target, &matrix, matrix.method.polarity())?;
    let prov = Provenance::new("rank", cfg, inputs_used)?;
    prov.print();
    println!("# method={} target={target} polarity={:?}", matrix.method, matrix.method.polarity());
    let n = top.unwrap_or(usize::MAX).min(r.ordered_sources.len());
    println!("{:>4}  {:<8}  {:>12}", "rank", "source", "score");
    for i in 0..n {
        println!("{:>4}  {:<8}  {:>12.9}", i + 1, r.ordered_sources[i].as_str(), r.predicted_scores[i]);
    }
    Ok(())
}

pub enum BaselineKind {
    Lex { corpus_dir: PathBuf, vocab: Option<PathBuf>, export: Option<PathBuf> },
    Sue { corpus_dir: PathBuf, vocab: PathBuf, export: Option<PathBuf> },
    Emb { vectors: Option<PathBuf>, corpus_dir: Option<PathBuf> },
    L2v { vectors: PathBuf },
}

/// Digest used for distributions over raw token ids.
const PRETOKENIZED_VOCAB_ID: u64 = 0;

pub fn baseline(cfg: &RunConfig, kind: BaselineKind, out: Option<PathBuf>) -> Result<()> {
    let (matrix, used) = match kind {
        BaselineKind::Lex { corpus_dir, vocab, export } => {
            let list = corpora(&corpus_dir)?;
            let vocab_file = vocab;
            let vocab = vocab_file
                .as_deref()
                .map(|p| Vocabulary::read(inputs::open(p)?).map_err(anyhow::Error::from))
                .transpose()?;
            let mut dists = Vec::new();
            for (code, path) in &list {
                let mut c = UnigramCounter::default();
                let id = match &vocab {
                    Some(v) => {
                        for line in inputs::read_lines(path)? {
                            c.add_sentence(&line, v)?;
                        }
                        v.id()
                    }
                    None => {
                        inputs::read_corpus(path)?.iter().for_each(|s| c.add_ids(s));
                        PRETOKENIZED_VOCAB_ID
                    }
                };
                let d = c.finish(code.clone(), id)?;
                if let (Some(dir), Some(v)) = (&export, &vocab) {
                    d.write_csv(v, inputs::create(&dir.join(format!("{code}.unigram.csv")))?)?;
                }
                dists.push(d);
            }
            let mut used: Vec<PathBuf> = list.into_iter().map(|(_, p)| p).collect();
            let mut m = lex_matrix(dists)?;
            if let Some(v) = &vocab {
                m.attributes.insert("vocab_id".into(), format!("{:016x}", v.id()));
            } else {
                m.attributes.insert("tokens".into(), "pretokenized_ids".into());
            }
            used.extend(vocab_file);
            (m, used)
        }
        BaselineKind::Sue { corpus_dir, vocab, export } => {
            let list = corpora(&corpus_dir)?;
            let v = Vocabulary::read(inputs::open(&vocab)?)?;
            let mut scores = Vec::new();
            for (code, path) in &list {
                let lines = inputs::read_lines(path)?;
                let cloud = SuEPointCloud::from_corpus(lines.iter().map(String::as_str), &v)?;
                if let Some(dir) = &export {
                    cloud.write_csv(inputs::create(&dir.join(format!("{code}.sue.csv")))?)?;
                }
                scores.push((code.clone(), sue_score(&cloud).with_context(|| format!("SuE for {code}"))?));
            }
            let mut used: Vec<PathBuf> = list.into_iter().map(|(_, p)| p).collect();
            used.push(vocab);
            let mut m = sue_matrix(scores);
            m.attributes.insert("vocab_id".into(), format!("{:016x}", v.id()));
            (m, used)
        }
        BaselineKind::Emb { vectors: Some(path), .. } => {
            let vs = read_vectors(inputs::open(&path)?, VectorKind::Embedding)?;
            (cosine_matrix(vs, Method::Emb)?, vec![path])
        }
        BaselineKind::Emb { vectors: None, corpus_dir: Some(dir) } => {
            let list = corpora(&dir)?;
            let model = toy_model(cfg);
            let mut vs = Vec::new();
            for (code, path) in &list {
                let corpus = inputs::read_corpus(path)?;
                let (idx, _) = sample_indices(corpus.len(), cfg.sample_size, cfg.seeds[0] as i64);
                let per = idx.iter().map(|&i| model.sentence_embedding(&corpus[i])).collect::<Result<Vec<_>, _>>()?;
                vs.push(mean_pool_embeddings(code.clone(), &per)?);
            }
            let used: Vec<PathBuf> = list.into_iter().map(|(_, p)| p).collect();
            let prov = Provenance::new("baseline emb", cfg, &used)?;
            let mut meta: BTreeMap<String, String> = prov.pairs.into_iter().collect();
            meta.insert("pooling".to_string(), "mean_of_sentence_hidden_states".to_string());
            write_vectors(&vs, &meta, inputs::create(&cfg.out_dir.join("emb.vec"))?)?;
            (cosine_matrix(vs, Method::Emb)?, used)
        }
        BaselineKind::Emb { .. } => return Err(validation("emb needs --vectors or --corpus-dir")),
        BaselineKind::L2v { vectors } => {
            let vs = read_vectors(inputs::open(&vectors)?, VectorKind::Typological)?;
            (cosine_matrix(vs, Method::L2v)?, vec![vectors])
        }
    };
    let prov = Provenance::new(&format!("baseline {}", matrix.method), cfg, &used)?;
    let m = with_provenance(matrix, &prov);
    let out = out.unwrap_or_else(|| cfg.out_dir.join(format!("{}.csv", m.method)));
    write_matrix(&m, &out)?;
    langsim_core::tensorstore::write_matrix_csv(&m, std::io::stdout().lock())?;
    Ok(())
}
