use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flate2::write::GzEncoder;
use flate2::Compression;
use serde_json::{json, Value};

const LEXICON: &str = "cold\tgripe, resfriado, catarro\ncar\tcoche, carro\n";
const GRID: &str = "-4,40,0.5,4,2";

fn lexvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lexvar"))
        .args(args)
        .output()
        .expect("run lexvar")
}

fn ok(args: &[&str]) -> Output {
    let out = lexvar(args);
    assert!(
        out.status.success(),
        "lexvar {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tweet(id: &str, lon: f64, lat: f64, text: &str, lang: &str, prob: f64) -> String {
    json!({"id": id, "lon": lon, "lat": lat, "text": text, "lang": lang, "lang_prob": prob})
        .to_string()
}

struct Env {
    _dir: tempfile::TempDir,
    root: PathBuf,
    lexicon: PathBuf,
}

impl Env {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let lexicon = root.join("lex.tsv");
        fs::write(&lexicon, LEXICON).unwrap();
        Env {
            _dir: dir,
            root,
            lexicon,
        }
    }

    fn corpus(&self, name: &str, lines: &[String]) -> PathBuf {
        let p = self.root.join(name);
        fs::write(&p, lines.join("\n") + "\n").unwrap();
        p
    }

    fn out(&self) -> PathBuf {
        self.root.join("out")
    }

    fn ingest(&self, corpus: &Path) {
        ok(&[
            "ingest",
            "--input",
            s(corpus),
            "--lexicon",
            s(&self.lexicon),
            "--grid",
            GRID,
            "--out",
            s(&self.out()),
        ]);
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out().join(name)).unwrap()).unwrap()
    }
}

/// Three cells with `cold` data, one of them tied between gripe and resfriado.
fn three_cells() -> Vec<String> {
    vec![
        tweet("1", -3.8, 40.2, "gripe", "es", 0.9),
        tweet("2", -3.8, 40.2, "gripe y coche", "es", 0.9),
        tweet("3", -3.3, 40.2, "resfriado", "es", 0.9),
        tweet("4", -3.3, 40.2, "carro", "es", 0.9),
        tweet("5", -2.2, 40.8, "gripe", "es", 0.9),
        tweet("6", -2.2, 40.8, "resfriado y coche", "es", 0.9),
    ]
}

#[test]
fn six_tweet_fixture_trace() {
    let env = Env::new();
    let corpus = env.corpus(
        "six.jsonl",
        &[
            tweet("1", -3.8, 40.2, "Tengo gripe", "es", 0.9),
            tweet("2", -3.3, 40.2, "mi coche", "es", 0.7),
            tweet("3", -3.8, 40.2, "gripe", "pt", 0.99),
            tweet("4", -3.8, 40.2, "gripe", "es", 0.6),
            "{broken".to_string(),
            tweet("6", 10.0, 40.2, "gripe", "es", 0.9),
        ],
    );
    env.ingest(&corpus);
    let model = fs::read_to_string(env.out().join("model.csv")).unwrap();
    let rows: Vec<&str> = model.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        rows,
        [
            "col,row,concept,variant,count,tweet_total",
            "0,0,cold,gripe,1,1",
            "1,0,car,coche,1,1"
        ]
    );
    let report = env.json("skip_report.json");
    assert_eq!(report["total_read"], 6);
    assert_eq!(report["matched"], 2);
    assert_eq!(report["malformed_json"], 1);
    assert_eq!(report["language_filtered"], 2);
    assert_eq!(report["out_of_region"], 1);
    assert_eq!(report["non_canonical"], json!(["generated_at_unix"]));
    assert!(report["config_digest"].as_str().unwrap().len() == 64);
}

#[test]
fn empty_input_gives_empty_model() {
    let env = Env::new();
    let corpus = env.corpus("empty.jsonl", &[]);
    fs::write(&corpus, "").unwrap();
    env.ingest(&corpus);
    let model = fs::read_to_string(env.out().join("model.csv")).unwrap();
    assert_eq!(
        model.lines().last().unwrap(),
        "col,row,concept,variant,count,tweet_total"
    );
    assert_eq!(env.json("skip_report.json")["total_read"], 0);
}

#[test]
fn missing_lexicon_fails_without_outputs() {
    let env = Env::new();
    let corpus = env.corpus("c.jsonl", &three_cells());
    let out = lexvar(&[
        "ingest",
        "--input",
        s(&corpus),
        "--lexicon",
        s(&env.root.join("nope.tsv")),
        "--out",
        s(&env.out()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.tsv"));
    assert!(!env.out().exists());
}

#[test]
fn majority_map_outputs() {
    let env = Env::new();
    env.ingest(&env.corpus("c.jsonl", &three_cells()));
    ok(&[
        "majority",
        "--concept",
        "cold",
        "--lexicon",
        s(&env.lexicon),
        "--out",
        s(&env.out()),
    ]);
    let gj = env.json("majority_cold.geojson");
    let features = gj["features"].as_array().unwrap();
    assert_eq!(features.len(), 3);
    let tied: Vec<&Value> = features
        .iter()
        .filter(|f| f["properties"]["col"] == 3)
        .collect();
    assert_eq!(tied[0]["properties"]["variant"], "gripe");
    assert_eq!(gj["metadata"]["tie_cells"], json!(["3:1"]));
    assert!(gj["metadata"]["config_digest"].is_string());
    let svg = fs::read_to_string(env.out().join("majority_cold.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(svg.contains("resfriado"));
}

#[test]
fn unknown_concept_lists_valid_ids() {
    let env = Env::new();
    env.ingest(&env.corpus("c.jsonl", &three_cells()));
    let out = lexvar(&[
        "majority",
        "--concept",
        "xyz",
        "--lexicon",
        s(&env.lexicon),
        "--out",
        s(&env.out()),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`xyz`") && err.contains("cold, car"), "{err}");

    // Against the bundled lexicon the message names all 89 concepts.
    let out = lexvar(&["concepts"]);
    let ids: Vec<String> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect();
    let out = lexvar(&[
        "distance",
        "--concept",
        "xyz",
        "--out",
        s(&env.root.join("o2")),
    ]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(!out.status.success());
    assert!(err.contains("(89)"));
    assert!(ids.iter().all(|id| err.contains(id.as_str())));
}

#[test]
fn distance_both_references() {
    let env = Env::new();
    env.ingest(&env.corpus("c.jsonl", &three_cells()));
    ok(&[
        "distance",
        "--concept",
        "all",
        "--metric",
        "jsd",
        "--both-references",
        "--lexicon",
        s(&env.lexicon),
        "--out",
        s(&env.out()),
    ]);
    for name in [
        "matrix_all_jsd_t0.csv",
        "field_all_jsd_t0_ref1.geojson",
        "field_all_jsd_t0_ref1.svg",
        "field_all_jsd_t0_ref2.geojson",
        "field_all_jsd_t0_ref2.svg",
        "comparison_all_jsd_t0.json",
    ] {
        assert!(env.out().join(name).is_file(), "{name}");
    }
    let cmp = env.json("comparison_all_jsd_t0.json");
    assert!(cmp["spearman"].as_f64().unwrap().abs() <= 1.0);
    assert_eq!(cmp["common_cells"], 3);
    let f1 = env.json("field_all_jsd_t0_ref1.geojson");
    let digest = f1["metadata"]["config_digest"].clone();
    assert!(digest.is_string());
    assert_eq!(cmp["config_digest"], digest);
    let matrix = fs::read_to_string(env.out().join("matrix_all_jsd_t0.csv")).unwrap();
    assert!(matrix.contains(&format!("# config_digest={}", digest.as_str().unwrap())));
}

#[test]
fn threshold_never_adds_cells() {
    let env = Env::new();
    env.ingest(&env.corpus("c.jsonl", &three_cells()));
    let count = |t: &str| {
        let out = env.root.join(format!("t{t}"));
        let r = lexvar(&[
            "distance",
            "--model",
            s(&env.out().join("model.csv")),
            "--lexicon",
            s(&env.lexicon),
            "--threshold",
            t,
            "--threshold-mode",
            "per-cell",
            "--out",
            s(&out),
        ]);
        if !r.status.success() {
            return 0;
        }
        let v: Value = serde_json::from_str(
            &fs::read_to_string(out.join(format!("field_all_cosine_t{t}_ref1.geojson"))).unwrap(),
        )
        .unwrap();
        v["features"].as_array().unwrap().len()
    };
    let (c0, c2, c3) = (count("0"), count("2"), count("3"));
    assert_eq!(c0, 3);
    assert!(c2 <= c0 && c3 <= c2);
}

#[test]
fn lexicon_mismatch_is_refused() {
    let env = Env::new();
    env.ingest(&env.corpus("c.jsonl", &three_cells()));
    let other = env.root.join("other.tsv");
    fs::write(&other, "cold\tgripe, resfriado\ncar\tcoche, carro\n").unwrap();
    let out = lexvar(&["distance", "--lexicon", s(&other), "--out", s(&env.out())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lexicon"));

    let out = lexvar(&[
        "distance",
        "--lexicon",
        s(&env.lexicon),
        "--accent-fold",
        "--out",
        s(&env.out()),
    ]);
    assert!(!out.status.success());
}

#[test]
fn degenerate_matrix_is_named() {
    let env = Env::new();
    let corpus = env.corpus(
        "same.jsonl",
        &[
            tweet("1", -3.8, 40.2, "gripe", "es", 0.9),
            tweet("2", -3.3, 40.2, "gripe", "es", 0.9),
        ],
    );
    env.ingest(&corpus);
    let out = lexvar(&[
        "distance",
        "--lexicon",
        s(&env.lexicon),
        "--out",
        s(&env.out()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("d_max is 0"));
    assert!(!env.out().join("matrix_all_cosine_t0.csv").exists());

    let single = env.corpus("one.jsonl", &[tweet("1", -3.8, 40.2, "gripe", "es", 0.9)]);
    let out2 = env.root.join("single");
    ok(&[
        "ingest",
        "--input",
        s(&single),
        "--lexicon",
        s(&env.lexicon),
        "--grid",
        GRID,
        "--out",
        s(&out2),
    ]);
    let out = lexvar(&["distance", "--lexicon", s(&env.lexicon), "--out", s(&out2)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2 cells"));
}

#[test]
fn config_file_with_flag_override() {
    let env = Env::new();
    let corpus = env.corpus("c.jsonl", &three_cells());
    let cfg = env.root.join("run.toml");
    fs::write(
        &cfg,
        format!(
            "input = [{:?}]\nlexicon = {:?}\ngrid = \"{GRID}\"\nout = {:?}\nmetric = \"jsd\"\n",
            s(&corpus),
            s(&env.lexicon),
            s(&env.out())
        ),
    )
    .unwrap();
    ok(&["ingest", "--config", s(&cfg)]);
    ok(&["distance", "--config", s(&cfg), "--metric", "cosine"]);
    assert!(env.out().join("matrix_all_cosine_t0.csv").is_file());
    assert!(!env.out().join("matrix_all_jsd_t0.csv").exists());
}

#[test]
fn gzip_input_matches_plain() {
    use std::io::Write;
    let env = Env::new();
    let lines = three_cells();
    let plain = env.corpus("c.jsonl", &lines);
    let gz = env.root.join("c.jsonl.gz");
    let mut enc = GzEncoder::new(fs::File::create(&gz).unwrap(), Compression::default());
    enc.write_all((lines.join("\n") + "\n").as_bytes()).unwrap();
    enc.finish().unwrap();
    let (a, b) = (env.root.join("a"), env.root.join("b"));
    for (input, out) in [(&plain, &a), (&gz, &b)] {
        ok(&[
            "ingest",
            "--input",
            s(input),
            "--lexicon",
            s(&env.lexicon),
            "--grid",
            GRID,
            "--out",
            s(out),
        ]);
    }
    assert_eq!(
        fs::read(a.join("model.csv")).unwrap(),
        fs::read(b.join("model.csv")).unwrap()
    );
}
