use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_tweet-country");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}", self.stdout))
    }
}

fn run(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn write(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, contents).unwrap();
    p
}

fn one_line_figure1() -> String {
    let v: Value =
        serde_json::from_str(&fs::read_to_string(fixture("figure1.json")).unwrap()).unwrap();
    v.to_string()
}

/// Labeled records for five countries with distinct timezones and some
/// shared English-speaking overlap.
fn mixed_labeled(n: usize) -> String {
    let rows = [
        ("NL", "Amsterdam", "Enschede", "nl"),
        ("GB", "London", "Manchester", "en"),
        ("US", "Eastern Time (US & Canada)", "Amazing New York", "en"),
        ("CA", "Eastern Time (US & Canada)", "Toronto", "en"),
        ("DE", "Berlin", "Hamburg", "de"),
    ];
    (0..n)
        .map(|i| {
            let (cc, tz, loc, lang) = rows[(i * 7 + i / 5) % rows.len()];
            format!(
                "{{\"id\":\"{i}\",\"time_zone\":\"{tz}\",\"user_location\":\"{loc}\",\"tweet_language\":\"{lang}\",\"country\":\"{cc}\"}}\n"
            )
        })
        .collect()
}

#[test]
fn label_keeps_only_geo_tweets() {
    let dir = tempfile::tempdir().unwrap();
    let mut lines: Vec<String> = (0..98)
        .map(|i| {
            format!(
                "{{\"id_str\":\"{i}\",\"text\":\"hello\",\"user\":{{\"time_zone\":\"London\"}}}}"
            )
        })
        .collect();
    lines.insert(10, one_line_figure1());
    lines.insert(
        50,
        r#"{"id_str":"x","coordinates":{"type":"Point","coordinates":[-73.98,40.75]}}"#.into(),
    );
    write(&dir, "in.ndjson", &(lines.join("\n") + "\n"));
    let r = run(dir.path(), &["label", "in.ndjson", "-o", "out.ndjson"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = r.json();
    assert_eq!(
        (s["total"].as_u64(), s["labeled"].as_u64()),
        (Some(100), Some(2))
    );
    assert_eq!(s["skipped"], 98);
    let out = fs::read_to_string(dir.path().join("out.ndjson")).unwrap();
    let countries: Vec<String> = out
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["country"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(countries, ["NL", "US"]);
    let sidecar: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out.ndjson.run.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["run_config"]["command"], "label");
    assert_eq!(sidecar["summary"]["labeled"], 2);
}

#[test]
fn label_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir, "empty.ndjson", "");
    let r = run(dir.path(), &["label", "empty.ndjson", "-o", "out.ndjson"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json()["total"], 0);
    assert_eq!(r.json()["labeled"], 0);
    assert_eq!(
        fs::read_to_string(dir.path().join("out.ndjson")).unwrap(),
        ""
    );
}

#[test]
fn label_strict_reports_malformed_line() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir,
        "in.ndjson",
        "{\"id\":\"1\"}\n{\"id\":\"2\"}\n{not json\n",
    );
    let lax = run(dir.path(), &["label", "in.ndjson", "-o", "out.ndjson"]);
    assert_eq!(lax.code, 0);
    assert_eq!(lax.json()["malformed"], 1);
    let strict = run(
        dir.path(),
        &["label", "in.ndjson", "-o", "out.ndjson", "--strict"],
    );
    assert_eq!(strict.code, 3);
    assert!(strict.stderr.contains("in.ndjson:3"), "{}", strict.stderr);
}

#[test]
fn unreadable_input_exits_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(dir.path(), &["label", "missing.ndjson", "-o", "out.ndjson"]);
    assert_eq!(r.code, 3);
}

#[test]
fn train_three_records_and_classify_figure1() {
    let dir = tempfile::tempdir().unwrap();
    let train = fixture("train3.ndjson");
    let r = run(
        dir.path(),
        &["train", train.to_str().unwrap(), "-o", "model.json"],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = r.json();
    assert_eq!(s["classes"], 2);
    assert_eq!(s["total_examples"], 3);
    assert_eq!(s["vocabulary"]["timezone"], 2);

    write(
        &dir,
        "in.ndjson",
        &format!("{}\n{{}}\n", one_line_figure1()),
    );
    let r = run(
        dir.path(),
        &[
            "classify",
            "in.ndjson",
            "--model",
            "model.json",
            "-o",
            "out.ndjson",
        ],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let out: Vec<Value> = fs::read_to_string(dir.path().join("out.ndjson"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(out[0]["country"], "NL");
    assert_eq!(out[0]["top"][0]["country"], "NL");
    assert_eq!(out[0]["top"].as_array().unwrap().len(), 2);
    // No usable fields: prior argmax (NL has 2 of 3 examples).
    assert_eq!(out[1]["country"], "NL");
    assert_eq!(
        out[1]["diagnostics"],
        serde_json::json!(["LIMITED_INFORMATION"])
    );
}

#[test]
fn train_rejects_empty_training_set() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir, "empty.ndjson", "\n");
    let r = run(dir.path(), &["train", "empty.ndjson", "-o", "model.json"]);
    assert_ne!(r.code, 0);
    assert!(r.stderr.contains("empty training set"), "{}", r.stderr);
    assert!(!dir.path().join("model.json").exists());
}

#[test]
fn classify_streams_every_record_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let train = fixture("train3.ndjson");
    assert_eq!(
        run(
            dir.path(),
            &["train", train.to_str().unwrap(), "-o", "m.json"]
        )
        .code,
        0
    );
    let input: String = (0..10_000)
        .map(|i| {
            let tz = if i % 3 == 0 { "London" } else { "Amsterdam" };
            format!("{{\"id\":\"{i}\",\"time_zone\":\"{tz}\"}}\n")
        })
        .collect();
    write(&dir, "big.ndjson", &input);
    let r = run(
        dir.path(),
        &[
            "classify",
            "big.ndjson",
            "--model",
            "m.json",
            "-o",
            "out.ndjson",
            "--chunk-size",
            "333",
        ],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json()["records"], 10_000);
    let out = fs::read_to_string(dir.path().join("out.ndjson")).unwrap();
    let lines: Vec<Value> = out
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 10_000);
    for (i, rec) in lines.iter().enumerate() {
        assert_eq!(rec["id"], i.to_string());
        assert_eq!(rec["country"], if i % 3 == 0 { "GB" } else { "NL" });
    }
}

#[test]
fn corrupt_model_exits_with_model_code() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir, "m.json", "{\"schema_version\": 1, \"alpha\"");
    write(&dir, "in.ndjson", "{}\n");
    let r = run(
        dir.path(),
        &[
            "classify",
            "in.ndjson",
            "--model",
            "m.json",
            "-o",
            "out.ndjson",
        ],
    );
    assert_eq!(r.code, 4, "{}", r.stderr);
}

#[test]
fn ablate_table1_preset_has_fourteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir, "lab.ndjson", &mixed_labeled(120));
    let r = run(
        dir.path(),
        &["ablate", "lab.ndjson", "--preset", "table1", "-o", "abl"],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = fs::read_to_string(dir.path().join("abl/ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# run_config_sha256="));
    assert!(lines[1].starts_with("Loc,Timezone,Language,Geoparsed,UTC,User language,"));
    assert_eq!(lines.len(), 2 + 14);
    assert!(lines[2].starts_with("x,,,,,,"));
    assert!(lines[15].starts_with("x,x,x,x,x,x,"));
    // Every row was evaluated on the same folds.
    let json: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("abl/ablation.json")).unwrap())
            .unwrap();
    let digests: Vec<&Value> = json["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| &r["report"]["config"]["fold_sha256"])
        .collect();
    assert!(digests.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn evaluate_with_region_reports_other_class() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir, "lab.ndjson", &mixed_labeled(100));
    let r = run(
        dir.path(),
        &["evaluate", "lab.ndjson", "--region", "europe", "-o", "ev"],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ev/evaluation.json")).unwrap())
            .unwrap();
    assert!(
        report["confusion"].get("ZZ").is_some(),
        "{}",
        report["confusion"]
    );
    assert_eq!(report["config"]["region"]["name"], "europe");
    assert_eq!(report["run_config"]["config"]["region"], "europe");
    let csv = fs::read_to_string(dir.path().join("ev/per_country.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("ZZ,")));
}

#[test]
fn report_per_country_layout_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir, "lab.ndjson", &mixed_labeled(200));
    let args = |out: &'static str| {
        vec![
            "report",
            "lab.ndjson",
            "--per-country",
            "--region",
            "europe",
            "-o",
            out,
        ]
    };
    let r = run(dir.path(), &args("r1"));
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(run(dir.path(), &args("r2")).code, 0);
    let csv = fs::read_to_string(dir.path().join("r1/per_country.csv")).unwrap();
    assert_eq!(
        csv,
        fs::read_to_string(dir.path().join("r2/per_country.csv")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("r1/per_country.json")).unwrap(),
        fs::read(dir.path().join("r2/per_country.json")).unwrap()
    );
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[1],
        "country,n,location+timezone+geoparsed,location+timezone+tweet_language,location+timezone+tweet_language+geoparsed"
    );
    let tail: Vec<&str> = lines[lines.len() - 3..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(tail, ["Average", "Standard deviation", "Europe"]);
    let json: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r1/per_country.json")).unwrap())
            .unwrap();
    assert_eq!(json["mode"], "same-set");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir,
        "run.toml",
        "seed = 7\nk = 5\nkinds = [\"timezone\"]\n",
    );
    write(&dir, "lab.ndjson", &mixed_labeled(60));
    let r = run(
        dir.path(),
        &[
            "--config",
            "run.toml",
            "evaluate",
            "lab.ndjson",
            "--seed",
            "9",
            "-o",
            "ev",
        ],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ev/evaluation.json")).unwrap())
            .unwrap();
    assert_eq!(report["config"]["seed"], 9);
    assert_eq!(report["config"]["k"], 5);
    assert_eq!(report["config"]["kinds"], serde_json::json!(["timezone"]));

    write(&dir, "bad.toml", "sed = 7\n");
    let r = run(
        dir.path(),
        &["--config", "bad.toml", "evaluate", "lab.ndjson", "-o", "ev"],
    );
    assert_eq!(r.code, 2);
}

#[test]
fn cache_stats_and_compact() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir, "lab.ndjson", &mixed_labeled(30));
    let r = run(
        dir.path(),
        &["train", "lab.ndjson", "-o", "m.json", "--cache", "geo.tsv"],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let stats = run(dir.path(), &["cache", "stats", "geo.tsv"]);
    assert_eq!(stats.code, 0, "{}", stats.stderr);
    // Five distinct user locations were geoparsed.
    assert_eq!(stats.json()["entries"], 5);
    let compact = run(dir.path(), &["cache", "compact", "--cache", "geo.tsv"]);
    assert_eq!(compact.code, 0, "{}", compact.stderr);
    assert_eq!(compact.json()["lines_written"], 5);
    assert_eq!(
        fs::read_to_string(dir.path().join("geo.tsv"))
            .unwrap()
            .lines()
            .count(),
        5
    );
}

#[test]
fn unusable_cache_exits_with_geocoder_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("cachedir")).unwrap();
    write(&dir, "lab.ndjson", &mixed_labeled(10));
    let r = run(
        dir.path(),
        &["train", "lab.ndjson", "-o", "m.json", "--cache", "cachedir"],
    );
    assert_eq!(r.code, 5, "{}", r.stderr);
}
