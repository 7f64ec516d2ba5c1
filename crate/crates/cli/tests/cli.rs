mod common;

use std::fs;
use std::path::Path;

use common::{code, has_pair, langsim, ok, stderr, synth_small};
use langsim_core::fisher::FisherAccumulator;
use langsim_core::tensorstore::{read_dump, write_dump, GradStreamHeader, GradStreamWriter};
use langsim_core::{CorpusTag, LanguageCode, LayoutManifest, Objective, RunMeta, TensorSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SMALL: [&str; 2] = ["--sample-size", "128"];

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run_ok(dir: &Path, args: Vec<String>) -> String {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(dir, &refs)
}

fn dumps(dir: &Path) {
    run_ok(dir, with(&["fisher", "--corpus-dir", "syn/corpora", "--out-dir", "dumps"], &SMALL));
}

#[test]
fn pipeline_writes_every_artifact() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    synth_small(d);
    for f in ["syn/gold.csv", "syn/affinity.csv", "syn/embeddings.vec", "syn/typology.vec", "syn/corpora/f1b.txt"] {
        assert!(d.join(f).is_file(), "{f} missing");
    }
    dumps(d);
    assert_eq!(fs::read_dir(d.join("dumps")).unwrap().count(), 12);

    let sim = run_ok(d, with(&["sim", "--dumps-dir", "dumps", "--out-dir", "out"], &SMALL));
    assert!(sim.contains("language,f0a,f0b,f1a,f1b"));
    let csv = fs::read_to_string(d.join("out/xsns.csv")).unwrap();
    assert!(has_pair(&csv, "seeds_averaged", "3"));
    assert!(has_pair(&csv, "sample_size", "128"));

    let rank = ok(d, &["rank", "--matrix", "out/xsns.csv", "--target", "f0a", "--top", "2"]);
    let rows: Vec<&str> = rank.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3, "{rank}");
    assert!(rows[1].contains("f0b"), "same-family source should rank first:\n{rank}");

    ok(d, &["baseline", "lex", "--corpus-dir", "syn/corpora", "--out-dir", "out"]);
    ok(d, &["baseline", "emb", "--vectors", "syn/embeddings.vec", "--out-dir", "out"]);
    ok(d, &["baseline", "l2v", "--vectors", "syn/typology.vec", "--out-dir", "out"]);
    let table = ok(
        d,
        &[
            "eval",
            "--matrix",
            "out/xsns.csv",
            "--matrix",
            "out/lex.csv",
            "--matrix",
            "out/emb.csv",
            "--matrix",
            "out/l2v.csv",
            "--gold",
            "syn/gold.csv",
            "--out-dir",
            "out",
        ],
    );
    for m in ["XSNS", "LEX", "EMB", "L2V", "NDCG@3"] {
        assert!(table.contains(m), "{m} missing from table:\n{table}");
    }
    let summary = fs::read_to_string(d.join("out/summary.csv")).unwrap();
    assert_eq!(summary.lines().filter(|l| !l.starts_with('#')).count(), 5);
    assert!(d.join("out/eval_synthetic_xsns.csv").is_file());

    let reg = ok(d, &["regress", "--matrix", "out/xsns.csv", "--gold", "syn/gold.csv", "--out-dir", "out"]);
    assert!(reg.contains("model=ols") && reg.contains("model=mer"));
    assert!(d.join("out/regress_synthetic_xsns_mer.txt").is_file());
}

#[test]
fn dumps_are_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    synth_small(d);
    let a =
        run_ok(d, with(&["fisher", "--corpus", "syn/corpora/f0a.txt", "--language", "f0a", "--out-dir", "a"], &SMALL));
    let b =
        run_ok(d, with(&["fisher", "--corpus", "syn/corpora/f0a.txt", "--language", "f0a", "--out-dir", "b"], &SMALL));
    assert_eq!(a.replace("a/", ""), b.replace("b/", ""));
    for s in 0..3 {
        let name = format!("f0a_s{s}.fgrd");
        assert_eq!(fs::read(d.join("a").join(&name)).unwrap(), fs::read(d.join("b").join(&name)).unwrap());
    }
}

#[test]
fn masks_give_the_same_matrix_as_dumps() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    synth_small(d);
    dumps(d);
    let files: Vec<String> =
        fs::read_dir(d.join("dumps")).unwrap().map(|e| e.unwrap().path().display().to_string()).collect();
    let mut args = vec!["mask".to_string(), "--out-dir".into(), "masks".into()];
    args.extend(files);
    run_ok(d, args);
    let from_dumps = ok(d, &["sim", "--dumps-dir", "dumps", "--out", "a.csv"]);
    let from_masks = ok(d, &["sim", "--dumps-dir", "masks", "--out", "b.csv"]);
    let body = |s: &str| s.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&from_dumps), body(&from_masks));
}

#[test]
fn missing_inputs_exit_2_and_name_the_path() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let cases: [(&[&str], &str); 4] = [
        (&["fisher", "--corpus", "absent.txt", "--language", "xx"], "absent.txt"),
        (&["fisher", "--corpus-dir", "no_such_dir"], "no_such_dir"),
        (&["eval", "--matrix", "m.csv", "--gold", "g.csv"], "g.csv"),
        (&["fisher", "--grad-stream", "g.fgrs"], "g.fgrs"),
    ];
    for (args, path) in cases {
        let out = langsim(d, args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).contains(path), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn invalid_inputs_exit_1() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    synth_small(d);
    for args in [&["sim", "--dumps-dir", "syn", "--p", "0"][..], &["sim", "--dumps-dir", "syn", "--set", "bogus=1"]] {
        let out = langsim(d, args);
        assert_eq!(code(&out), 1, "{args:?}: {}", stderr(&out));
    }
    fs::write(d.join("bad.txt"), "1 2 x\n").unwrap();
    let out = langsim(d, &["fisher", "--corpus", "bad.txt", "--language", "xx"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("bad.txt:1"));
}

#[test]
fn missing_gold_pairs_are_listed() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    synth_small(d);
    ok(d, &["baseline", "l2v", "--vectors", "syn/typology.vec", "--out-dir", "out"]);
    let gold = fs::read_to_string(d.join("syn/gold.csv")).unwrap();
    let kept: Vec<&str> = gold.lines().filter(|l| !l.contains(",f1a,f0b,")).collect();
    fs::write(d.join("partial.csv"), kept.join("\n")).unwrap();
    let out = langsim(d, &["eval", "--matrix", "out/l2v.csv", "--gold", "partial.csv"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("f1a->f0b"), "{}", stderr(&out));
}

#[test]
fn layout_mismatch_lists_offending_files() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    synth_small(d);
    run_ok(
        d,
        with(
            &["fisher", "--corpus", "syn/corpora/f0a.txt", "--language", "f0a", "--seeds", "0", "--out-dir", "mix"],
            &SMALL,
        ),
    );
    let mut dump = read_dump(fs::File::open(d.join("mix/f0a_s0.fgrd")).unwrap()).unwrap();
    dump.manifest =
        LayoutManifest::new("other", vec![TensorSpec::new("w", [dump.values.len() as u64])], vec![]).unwrap();
    dump.meta.language = LanguageCode::new("zz").unwrap();
    write_dump(&dump, fs::File::create(d.join("mix/zz_s0.fgrd")).unwrap()).unwrap();
    let out = langsim(d, &["sim", "--dumps-dir", "mix"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("zz_s0.fgrd") && stderr(&out).contains("layout mismatch"), "{}", stderr(&out));
}

#[test]
fn config_precedence_is_flags_then_set_then_file() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    synth_small(d);
    fs::write(d.join("run.conf"), "# protocol\np = 0.2\nseeds = 0,1\n").unwrap();
    let header = |args: &[&str]| {
        let mut a = vec!["rank", "--matrix", "syn/x.csv", "--target", "f0a"];
        a.extend(args);
        ok(d, &["baseline", "l2v", "--vectors", "syn/typology.vec", "--out", "syn/x.csv"]);
        ok(d, &a)
    };
    let base = header(&[]);
    assert!(
        has_pair(&base, "p", "0.15") && has_pair(&base, "seeds", "0,1,2") && has_pair(&base, "sample_size", "1024")
    );
    assert!(has_pair(&base, "objective", "lm_masked") && has_pair(&base, "k", "3"));
    let file = header(&["--config", "run.conf"]);
    assert!(has_pair(&file, "p", "0.2") && has_pair(&file, "seeds", "0,1"));
    let set = header(&["--config", "run.conf", "--set", "p=0.25"]);
    assert!(has_pair(&set, "p", "0.25"));
    let flag = header(&["--config", "run.conf", "--set", "p=0.25", "--p", "0.3"]);
    assert!(has_pair(&flag, "p", "0.3") && has_pair(&flag, "seeds", "0,1"));
    let digest = |s: &str| common::header_pairs(s).into_iter().find(|(k, _)| k == "config_digest").unwrap().1;
    assert_ne!(digest(&base), digest(&flag));
    assert_eq!(digest(&base), digest(&header(&[])));
}

#[test]
fn gradient_stream_becomes_a_dump() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let manifest = LayoutManifest::new(
        "external",
        vec![TensorSpec::new("a", [3, 4]), TensorSpec::new("b", [5])],
        vec!["embeddings".into()],
    )
    .unwrap();
    let meta = RunMeta::new(LanguageCode::new("de").unwrap(), Objective::LmMasked, CorpusTag::GeneralCorpus, 4);
    let header = GradStreamHeader { manifest: manifest.clone(), meta, flags: Default::default() };
    let mut w = GradStreamWriter::new(fs::File::create(d.join("de.fgrs")).unwrap(), &header).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sq = vec![0.0f64; 17];
    for _ in 0..50 {
        let g: Vec<f64> = (0..17).map(|_| rng.random_range(-2.0..2.0)).collect();
        for (s, x) in sq.iter_mut().zip(&g) {
            let x = *x as f32 as f64;
            *s += x * x;
        }
        w.write_record(&g).unwrap();
    }
    w.finish().unwrap();
    let table = ok(d, &["fisher", "--grad-stream", "de.fgrs", "--out-dir", "out"]);
    assert!(table.contains("out/de_s4.fgrd,de,4,lm_masked,50"), "{table}");
    let dump = read_dump(fs::File::open(d.join("out/de_s4.fgrd")).unwrap()).unwrap();
    assert_eq!(dump.manifest.layout_hash(), manifest.layout_hash());
    for (v, s) in dump.values.iter().zip(&sq) {
        assert!(((*v as f64) - s / 50.0).abs() <= 1e-6 * (s / 50.0).max(1.0));
    }
    let (acc, _) = FisherAccumulator::from_stream(fs::File::open(d.join("de.fgrs")).unwrap()).unwrap();
    assert_eq!(acc.count(), 50);
}

#[test]
fn sue_and_lex_read_text_with_a_vocabulary() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    fs::create_dir_all(d.join("txt")).unwrap();
    fs::write(d.join("vocab.txt"), "[UNK]\na\nb\nab\n##a\n##b\n##ab\nabab\n").unwrap();
    fs::write(d.join("txt/xx.txt"), "ab abab a b\nabba bab\n").unwrap();
    fs::write(d.join("txt/yy.txt"), "aaaa bbbb ab\nba ba ba\n").unwrap();
    fs::write(d.join("txt/zz.txt"), "abab abab\nab a b ab ba\n").unwrap();
    let sue = ok(
        d,
        &["baseline", "sue", "--corpus-dir", "txt", "--vocab", "vocab.txt", "--export", "clouds", "--out-dir", "out"],
    );
    assert!(sue.contains("# method=sue"));
    assert!(d.join("clouds/xx.sue.csv").is_file());
    let lex = ok(d, &["baseline", "lex", "--corpus-dir", "txt", "--vocab", "vocab.txt", "--out-dir", "out"]);
    assert!(lex.contains("# method=lex") && lex.contains("vocab_id="));
    let out = langsim(d, &["baseline", "sue", "--corpus-dir", "txt"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn sweeps_emit_one_row_per_value_and_task() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    synth_small(d);
    dumps(d);
    let p = ok(d, &["sweep", "p", "--dumps-dir", "dumps", "--gold", "syn/gold.csv", "--out-dir", "out"]);
    let rows: Vec<&str> = p.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 7, "{p}");
    assert!(rows[1].starts_with("0.05,synthetic,xsns,"));
    let n = ok(
        d,
        &[
            "sweep",
            "sample-size",
            "--values",
            "32,64",
            "--corpus-dir",
            "syn/corpora",
            "--gold",
            "syn/gold.csv",
            "--seeds",
            "0,1",
        ],
    );
    assert_eq!(n.lines().filter(|l| !l.starts_with('#')).count(), 3, "{n}");
    assert!(d.join("sweep_sample_size.csv").is_file());
}

#[test]
fn task_head_objective_is_recorded() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    synth_small(d);
    let out = run_ok(
        d,
        with(
            &[
                "fisher",
                "--corpus-dir",
                "syn/corpora",
                "--objective",
                "task_head_random",
                "--seeds",
                "0",
                "--out-dir",
                "th",
            ],
            &SMALL,
        ),
    );
    assert!(out.contains("task_head_random"));
    assert!(has_pair(&out, "objective", "task_head_random"));
    let dump = read_dump(fs::File::open(d.join("th/f1a_s0.fgrd")).unwrap()).unwrap();
    assert_eq!(dump.meta.objective, Objective::TaskHeadRandom);
}
