//! Runs the `kgqa` binary against the fixtures.
//!
//! `fixtures/replay/rockets_eval.json` holds one ideal draft per dataset
//! question; set `KGQA_BLESS=1` to regenerate it after a prompt change.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use kgqa_core::dataset::load_dataset;
use kgqa_core::kg::load_kg;
use kgqa_core::matcher::{build_index, HashedTrigramEmbedder};
use kgqa_core::pipeline::{build_draft_prompt, ideal_draft, prompt_key, pylf_signatures, Demo, DemoIndex};

const Q2: &str = "Which rockets not produced by Boeing Company have a mass below 2.32e+03?";
const DRAFT: &str = "STOP(AND(JOIN('R_spaceflight_rocket.manufacturer', START('boeing')), CMP('<', 'spaceflight.rocket.mass', 2.32e+03)))";

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn kgqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgqa")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_config() -> String {
    fixtures().join("rockets/run.toml").display().to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Regenerates the eval replay when blessing, so the recorded prompts track
/// the current prompt format.
fn ensure_eval_replay() {
    if !std::env::var("KGQA_BLESS").is_ok_and(|v| v == "1") {
        return;
    }
    let dir = fixtures().join("rockets");
    let kg = load_kg(&dir.join("entities.tsv"), &dir.join("triples.tsv"), &dir.join("schema.tsv")).unwrap();
    let index = build_index(&kg, Arc::new(HashedTrigramEmbedder::default())).unwrap();
    let demos = DemoIndex::build(load_dataset(&dir.join("train.jsonl")).unwrap(), index.embedder().clone()).unwrap();
    let mut map = BTreeMap::new();
    for ex in load_dataset(&dir.join("dataset.jsonl")).unwrap() {
        let shown: Vec<Demo> = demos
            .select(&ex.question, 3)
            .unwrap()
            .into_iter()
            .map(|e| Demo::from_example(e, &kg).unwrap())
            .collect();
        let prompt = build_draft_prompt(&ex.question, &shown, pylf_signatures(), true);
        map.insert(prompt_key(&prompt), vec![ideal_draft(&ex.gold_expr().unwrap(), &kg); 6]);
    }
    std::fs::write(
        fixtures().join("replay/rockets_eval.json"),
        serde_json::to_string_pretty(&map).unwrap() + "\n",
    )
    .unwrap();
}

#[test]
fn answer_prints_delta_and_writes_trace() {
    let out = tempfile::tempdir().unwrap();
    let replay = fixtures().join("replay/rockets_q2.json");
    let o = kgqa(&["-c", &run_config(), "-o", path(out.path()), "--replay", path(&replay), "answer", Q2]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "{Delta}");
    let trace: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace["trace"]["candidates"].as_array().unwrap().len(), 6);
    assert_eq!(trace["trace"]["refinement_enabled"], true);
}

#[test]
fn no_refine_is_reflected_in_the_trace() {
    let out = tempfile::tempdir().unwrap();
    let replay = fixtures().join("replay/rockets_q2.json");
    let o = kgqa(&[
        "-c",
        &run_config(),
        "-o",
        path(out.path()),
        "--replay",
        path(&replay),
        "--no-refine",
        "answer",
        Q2,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "{Delta}");
    let trace: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace["trace"]["refinement_enabled"], false);
    assert!(trace["trace"]["candidates"][2]["refinement"].is_null());
    assert_eq!(trace["trace"]["provider_calls"], 1);
}

#[test]
fn eval_scores_the_micro_dataset_perfectly_and_reproducibly() {
    ensure_eval_replay();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, jobs) in [(&a, "1"), (&b, "3")] {
        let o = kgqa(&["-c", &run_config(), "-o", path(dir.path()), "eval", "--jobs", jobs]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["overall_em"], 100.0, "{report:#}");
    assert_eq!(report["overall_f1"], 100.0);
    for f in ["predictions.jsonl", "traces.jsonl", "report.json", "report.txt"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn brute_force_ablation_grows_the_candidate_list() {
    let kg = fixtures().join("matching");
    let guided = kgqa(&["--kg", path(&kg), "match", DRAFT]);
    assert_eq!(guided.status.code(), Some(0), "{}", String::from_utf8_lossy(&guided.stderr));
    assert!(stdout(&guided).starts_with("4 candidates\n"));
    let brute = kgqa(&["--kg", path(&kg), "--ablate", "brute-force-matching", "match", DRAFT]);
    assert!(stdout(&brute).starts_with("1000 candidates\n"));
}

#[test]
fn nest_keeps_only_answerable_variants() {
    let out = tempfile::tempdir().unwrap();
    let target = out.path().join("nest.jsonl");
    let source = fixtures().join("rockets/dataset.jsonl");
    let o = kgqa(&[
        "-c",
        &run_config(),
        "nest",
        "--source",
        path(&source),
        "--out",
        path(&target),
        "--roundtrip",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(
        stdout(&o).contains("sources 3, retained 1, variants 1, skipped 0"),
        "{}",
        stdout(&o)
    );
    assert!(stdout(&o).contains("roundtrip ok"));
    let variants = load_dataset(&target).unwrap();
    assert_eq!(variants.len(), 1);
    assert!(!variants[0].gold_answers().unwrap().is_empty());
    assert_eq!(
        std::fs::read_to_string(out.path().join("rewording_prompts.jsonl"))
            .unwrap()
            .lines()
            .count(),
        1
    );
}

#[test]
fn nest_without_eligible_sources_warns() {
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("single.jsonl");
    std::fs::write(
        &source,
        r#"{"qid":"a","question":"q","pylf":"STOP(JOIN(R_producing, START(BoeingCompany)))","answers":["Saturn"]}"#,
    )
    .unwrap();
    let o = kgqa(&[
        "-c",
        &run_config(),
        "nest",
        "--source",
        path(&source),
        "--out",
        path(&dir.path().join("n.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert_eq!(std::fs::read_to_string(dir.path().join("n.jsonl")).unwrap(), "");
}

#[test]
fn compile_and_export() {
    let kg = fixtures().join("rockets");
    let o = kgqa(&[
        "--kg",
        path(&kg),
        "compile",
        "--execute",
        "STOP(AND(JOIN(R_producing, START(BoeingCompany), neg=True), CMP('<', mass, 2.32e+03)))",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("FILTER NOT EXISTS"));
    assert!(text.trim_end().ends_with("{Delta}"));
    let rdf = kgqa(&["--kg", path(&kg), "export-rdf"]);
    assert!(stdout(&rdf).contains("<kg:entity/Delta>"));
}

#[test]
fn index_round_trips_through_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("rockets.idx");
    let kg = fixtures().join("rockets");
    let o = kgqa(&["--kg", path(&kg), "index", "--out", path(&file)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(file.is_file());

    let cfg = dir.path().join("cached.toml");
    std::fs::write(
        &cfg,
        format!("[kg]\ndir = {:?}\n[data]\nindex_cache = {:?}\n", path(&kg), path(&file)),
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_kgqa"))
        .env("RUST_LOG", "warn")
        .args(["-c", path(&cfg), "match", "STOP(JOIN('R_producing', START('Boeing Company')))"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!String::from_utf8_lossy(&o.stderr).contains("ignoring index cache"));
    assert!(stdout(&o).contains("START(BoeingCompany)"));
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = kgqa(&["--kg", path(&dir.path().join("nowhere")), "export-rdf"]);
    assert_eq!(missing.status.code(), Some(2));

    let kg = fixtures().join("rockets");
    let bad = kgqa(&["--kg", path(&kg), "compile", "STOP(JOIN(nosuch, START(BoeingCompany)))"]);
    assert_eq!(bad.status.code(), Some(4));

    let cfg = dir.path().join("offline.toml");
    std::fs::write(
        &cfg,
        format!(
            "[kg]\ndir = {:?}\n[data]\ntrain = {:?}\n[llm]\nbase_url = \"http://127.0.0.1:9/v1\"\nmodel = \"m\"\napi_key_env = \"KGQA_TEST_KEY\"\ntimeout_secs = 5\n[pipeline]\nk = 3\n",
            path(&kg),
            path(&kg.join("train.jsonl"))
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_kgqa"))
        .env("KGQA_TEST_KEY", "x")
        .args(["-c", path(&cfg), "-o", path(&out), "answer", Q2])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let trace: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace["failure"]["stage"], "completion");
}
