#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn langsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_langsim"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn langsim")
}

pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = langsim(dir, args);
    assert!(
        out.status.success(),
        "langsim {args:?} failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small synthetic workspace: 2 families × 2 languages, 400 sentences each.
pub fn synth_small(dir: &Path) {
    ok(dir, &["synth", "--families", "2", "--per-family", "2", "--sentences", "400", "--out-dir", "syn"]);
}

pub fn header_pairs(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.strip_prefix("# "))
        .flat_map(|l| l.split(' '))
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

pub fn has_pair(text: &str, key: &str, value: &str) -> bool {
    header_pairs(text).iter().any(|(k, v)| k == key && v == value)
}
