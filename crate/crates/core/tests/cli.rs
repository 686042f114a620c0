use std::fs;
use std::path::Path;

use condmusic::cli::run;
use condmusic::codec::{decode, encode, Variant};
use condmusic::dataset::{load_corpus, save_corpus};
use condmusic::tables::CanonicalTables;
use condmusic::toy::toy_corpus;

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("condmusic").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn corpus(dir: &Path, n: usize) {
    save_corpus(dir, &toy_corpus(n, 4), &CanonicalTables::builtin()).unwrap();
}

#[test]
fn missing_genre_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let song = dir.path().join("missing-genre-song.json");
    fs::write(&song, r#"{"resolution": 12, "tracks": [{"program": 0, "notes": [{"time": 0, "pitch": 60, "duration": 12}]}]}"#).unwrap();
    let (code, _, err) = cli(&["encode", "--variant", "mmt-gi", p(&song)]);
    assert_eq!(code, 1);
    assert_eq!(err.trim(), "error: missing genre condition");
}

#[test]
fn cli_round_trip_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (src, tok, out) = (dir.path().join("src"), dir.path().join("t.tok"), dir.path().join("out"));
    corpus(&src, 6);
    assert_eq!(cli(&["encode", "--variant", "mmt-gi", "--out", p(&tok), p(&src)]).0, 0);
    assert_eq!(cli(&["decode", "--in", p(&tok), "--out", p(&out)]).0, 0);
    let tables = CanonicalTables::builtin();
    let (orig, _) = load_corpus(&src, &tables).unwrap();
    let (back, _) = load_corpus(&out, &tables).unwrap();
    for (o, b) in orig.iter().zip(&back) {
        let lib = decode(&encode(&o.song, Variant::MmtGi).unwrap(), Variant::MmtGi).unwrap();
        assert_eq!(b.song, lib);
    }
}

#[test]
fn training_and_generation_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    corpus(&src, 12);
    let small = ["--set", "dim=16", "--set", "heads=2", "--set", "layers=1", "--set", "max_len=128", "--set", "eval_every=2"];
    let mut outputs = Vec::new();
    for run_ix in 0..2 {
        let pre = dir.path().join(format!("pre{run_ix}"));
        let gen = dir.path().join(format!("gen{run_ix}"));
        let mut args = vec!["pretrain", "--corpus", p(&src), "--steps", "4", "--seed", "7", "--out", p(&pre)];
        args.extend(small);
        let (code, _, err) = cli(&args);
        assert_eq!(code, 0, "{err}");
        let ft = dir.path().join(format!("ft{run_ix}"));
        let ckpt = pre.join("model.ckpt");
        let mut args = vec!["finetune", "--from", p(&ckpt), "--variant", "mmt-g", "--corpus", p(&src), "--steps", "2", "--seed", "7", "--out", p(&ft)];
        args.extend(small);
        assert_eq!(cli(&args).0, 0);
        let ckpt = ft.join("model.ckpt");
        let (code, out, err) = cli(&["generate", "--from", p(&ckpt), "--variant", "mmt-g", "--tags", "pop,3", "--n", "3", "--seed", "1", "--set", "max_tokens=60", "--out", p(&gen)]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("condition adherence 3/3"));
        let cfg = fs::read_to_string(pre.join("config.cfg")).unwrap();
        assert!(cfg.contains("dim = 16") && cfg.contains("# seed = 7"));
        outputs.push([pre.join("model.ckpt"), pre.join("log.tsv"), ft.join("model.ckpt"), gen.join("tokens.txt"), gen.join("songs/gen-00002.json")].map(|f| fs::read(f).unwrap()));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn evaluate_prints_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), 5);
    let (code, out, _) = cli(&["evaluate", "--in", p(dir.path())]);
    assert_eq!(code, 0);
    let names: Vec<&str> = out.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, ["pitch_class_entropy", "scale_consistency", "groove_consistency"]);
    assert!(out.contains(" ± "));
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "dim = 32\nwarmup = 100\n").unwrap();
    corpus(&dir.path().join("c"), 2);
    let c = dir.path().join("c");
    let (code, _, err) = cli(&["pretrain", "--config", p(&cfg), "--corpus", p(&c), "--seed", "1", "--out", p(dir.path())]);
    assert_eq!(code, 1);
    assert!(err.contains("unknown config key `warmup`"), "{err}");
    let (code, _, _) = cli(&["pretrain", "--corpus", p(&c), "--out", p(dir.path())]);
    assert_eq!(code, 2, "seed is required");
}

#[test]
fn stats_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c");
    corpus(&c, 40);
    let (code, out, _) = cli(&["stats", "--corpus", p(&c), "--subset", "genre"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("songs\t40\n"));
    let s = dir.path().join("s");
    let (code, out, _) = cli(&["split", "--corpus", p(&c), "--seed", "3", "--out", p(&s)]);
    assert_eq!(code, 0);
    let total: usize = out.lines().map(|l| l.split('\t').nth(1).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 40);
    let again = dir.path().join("s2");
    cli(&["split", "--corpus", p(&c), "--seed", "3", "--out", p(&again)]);
    assert_eq!(fs::read(s.join("train.txt")).unwrap(), fs::read(again.join("train.txt")).unwrap());
}
