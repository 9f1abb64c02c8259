use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use playseq::codec::{write_corpus, EncodeConfig, Vocabulary};
use playseq::model::{Checkpoint, ModelConfig, ModelParams};
use playseq::synth::{generate_corpus, SyntheticLeague};
use playseq_ffi::*;

struct Fixture {
    _dir: tempfile::TempDir,
    ckpt: CString,
    corpus: CString,
    player: u32,
    other: u32,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let league = SyntheticLeague::default_league(3);
    let corpus = generate_corpus(&league, 1, 3).unwrap();
    let vocab = Vocabulary::new(league.player_ids()).unwrap();
    let block = EncodeConfig::min_block_size(6);
    let cfg = ModelConfig { vocab_size: vocab.size(), block_size: block, n_layers: 1, n_heads: 2, embed_dim: 8, dropout_rate: 0.0, init_scale: 0.02 };
    let params = ModelParams::<f32>::init(cfg, 1).unwrap();
    let ckpt = dir.path().join("m.ckpt");
    Checkpoint::new(params, vocab).unwrap().save(&ckpt).unwrap();
    let corpus_path = dir.path().join("c.ndjson");
    write_corpus(&corpus_path, &corpus.episodes).unwrap();
    let player = corpus.episodes.iter().find_map(|e| e.actions.first()).unwrap().actor_id;
    let on_pitch = &corpus.episodes.iter().find(|e| e.actions.iter().any(|a| a.actor_id == player)).unwrap().context.on_pitch;
    let other = league.player_ids().into_iter().find(|p| !on_pitch.contains(p)).unwrap();
    let c = |p: &Path| CString::new(p.to_str().unwrap()).unwrap();
    Fixture { ckpt: c(&ckpt), corpus: c(&corpus_path), player, other, _dir: dir }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ps_last_error()) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut std::ffi::c_char) -> serde_json::Value {
    let v = serde_json::from_str(CStr::from_ptr(s).to_str().unwrap()).unwrap();
    ps_string_free(s);
    v
}

#[test]
fn model_and_corpus_round_trip() {
    let f = fixture();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(ps_model_load(f.ckpt.as_ptr(), &mut model), PsStatus::Ok);
        let (mut v, mut d) = (0usize, 0usize);
        assert_eq!(ps_model_dims(model, &mut v, &mut d), PsStatus::Ok);
        assert_eq!(d, 8);

        let mut buf = vec![0f32; d];
        assert_eq!(ps_player_embedding(model, f.player, buf.as_mut_ptr(), d), PsStatus::Ok);
        assert!(buf.iter().any(|&x| x != 0.0));
        assert_eq!(ps_player_embedding(model, f.player, buf.as_mut_ptr(), d - 1), PsStatus::BufferTooSmall);
        assert_eq!(ps_player_embedding(model, 999_999, buf.as_mut_ptr(), d), PsStatus::NotFound);
        assert!(last_error().contains("999999"));

        let mut s = ptr::null_mut();
        assert_eq!(ps_similar_players_json(model, f.player, 3, &mut s), PsStatus::Ok);
        assert_eq!(take(s).as_array().unwrap().len(), 3);
        assert!(last_error().is_empty());

        let mut corpus = ptr::null_mut();
        assert_eq!(ps_corpus_load(f.corpus.as_ptr(), &mut corpus), PsStatus::Ok);
        let mut n = 0usize;
        assert_eq!(ps_corpus_len(corpus, &mut n), PsStatus::Ok);
        assert!(n > 0);

        assert_eq!(ps_evaluate_json(model, corpus, &mut s), PsStatus::Ok);
        assert!(take(s)["acc_type"].is_number());

        let req = CString::new(format!(r#"{{"out_player":{},"in_player":{},"n_samples":3,"max_episodes":2}}"#, f.player, f.other)).unwrap();
        assert_eq!(ps_simulate_json(model, corpus, req.as_ptr(), &mut s), PsStatus::Ok);
        let first = take(s);
        assert_eq!(ps_simulate_json(model, corpus, req.as_ptr(), &mut s), PsStatus::Ok);
        assert_eq!(take(s), first);
        assert_eq!(first["result"]["n_samples"].as_u64().unwrap() % 3, 0);

        let bad = CString::new(r#"{"out_player":1}"#).unwrap();
        assert_eq!(ps_simulate_json(model, corpus, bad.as_ptr(), &mut s), PsStatus::InvalidArgument);

        ps_corpus_free(corpus);
        ps_model_free(model);
    }
}

#[test]
fn failures_are_reported_not_raised() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(ps_model_load(ptr::null(), &mut model), PsStatus::NullPointer);
        let missing = CString::new("/nonexistent/model.ckpt").unwrap();
        assert_eq!(ps_model_load(missing.as_ptr(), &mut model), PsStatus::Io);
        assert!(model.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(ps_corpus_len(ptr::null(), ptr::null_mut()), PsStatus::NullPointer);
        ps_model_free(ptr::null_mut());
        ps_string_free(ptr::null_mut());
        assert!(!CStr::from_ptr(ps_version()).to_bytes().is_empty());
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <stdlib.h>
#include "playseq.h"
int main(int argc, char **argv) {
    PsModel *m = NULL;
    if (ps_model_load(argv[1], &m) != PS_STATUS_OK) { fprintf(stderr, "%s\n", ps_last_error()); return 1; }
    size_t v = 0, d = 0;
    if (ps_model_dims(m, &v, &d) != PS_STATUS_OK) return 2;
    char *json = NULL;
    if (ps_similar_players_json(m, (uint32_t)atoi(argv[2]), 2, &json) != PS_STATUS_OK) return 3;
    printf("%zu %zu %s\n", v, d, json);
    ps_string_free(json);
    ps_model_free(m);
    return ps_model_load("/nonexistent", &m) == PS_STATUS_IO ? 0 : 4;
}
"#;

// Compiles and runs a C client against the generated header and the shared
// library. Skipped when no C compiler is installed.
#[test]
fn c_client_links_against_header() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let f = fixture();
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    // Test binaries live in target/<profile>/deps, next to the cdylib's directory.
    let lib_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    if !lib_dir.join("libplayseq_ffi.so").exists() {
        eprintln!("shared library not found in {}; skipping", lib_dir.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = dir.path().join("client");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lplayseq_ffi")
        .arg("-o")
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe)
        .arg(f.ckpt.to_str().unwrap())
        .arg(f.player.to_string())
        .env("LD_LIBRARY_PATH", &lib_dir)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    let vocab_size = Vocabulary::new(SyntheticLeague::default_league(3).player_ids()).unwrap().size();
    assert!(stdout.starts_with(&format!("{vocab_size} 8 [")), "{stdout}");
}
