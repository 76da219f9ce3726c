use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const ARTIFACTS: [&str; 14] = [
    "sessions.csv",
    "journeys.csv",
    "ranking.json",
    "clusters.csv",
    "elbow.json",
    "embedding.csv",
    "formation.json",
    "profile.json",
    "emd.json",
    "emd_heatmap.csv",
    "pll.csv",
    "pll.json",
    "metrics.json",
    "manifest.json",
];

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic_events.csv")
}

fn opam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Smaller PLL sweep so the suite stays quick.
const FAST: [&str; 4] = ["--set", "pll.repeats=5", "--set", "classify.repeats=5"];

fn report_all(out: &Path) -> Output {
    let input = fixture();
    let mut args = vec![
        "report-all",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(FAST);
    opam(&args)
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = opam(&["cluster", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn bad_settings_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["rank", "--out", out, "--set", "rank.colour=red"],
        vec!["rank", "--out", out, "--set", "pll.alpha=2"],
        vec!["rank", "--out", out, "--k", "zero"],
        vec!["rank", "--out", out, "--space", "umap"],
    ] {
        let o = opam(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    let ini = dir.path().join("bad.ini");
    fs::write(&ini, "[cluster]\nwobble = 3\n").unwrap();
    let o = opam(&["rank", "--out", out, "--config", ini.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cluster.wobble"));
}

#[test]
fn missing_prerequisites_name_the_prior_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for (cmd, needs) in [
        ("analyze", "cluster"),
        ("emd", "cluster"),
        ("pll", "cluster"),
        ("classify", "cluster"),
        ("cluster", "journeys"),
        ("rank", "journeys"),
        ("sessions", "generate"),
    ] {
        let o = opam(&[cmd, "--out", out]);
        assert_eq!(o.status.code(), Some(1), "{cmd}");
        assert!(stderr(&o).contains(&format!("opam {needs}")), "{cmd}: {}", stderr(&o));
    }
}

#[test]
fn data_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b,c\n1,2,3\n").unwrap();
    let o = opam(&[
        "sessions",
        "--input",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("header"));
}

#[test]
fn report_all_is_complete_and_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = report_all(d.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ARTIFACTS {
        let x = fs::read(a.path().join(name)).unwrap_or_else(|_| panic!("{name} missing"));
        if name != "manifest.json" {
            assert_eq!(x, fs::read(b.path().join(name)).unwrap(), "{name} differs");
        }
    }

    let manifest = json(&a.path().join("manifest.json"));
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    for step in [
        "sessions", "journeys", "rank", "cluster", "analyze", "emd", "pll", "classify",
    ] {
        assert!(manifest["steps"][step]["seconds"].is_f64(), "{step}");
    }
    assert!(manifest["steps"]["sessions"]["rows"]["events"].as_u64().unwrap() > 1000);

    let elbow = json(&a.path().join("elbow.json"));
    let k = elbow["chosen_k"].as_u64().unwrap() as usize;
    let sizes: Vec<u64> = serde_json::from_value(elbow["cluster_sizes"].clone()).unwrap();
    assert_eq!(sizes.len(), k);
    assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
    let profile = json(&a.path().join("profile.json"));
    let rep: f64 = profile
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["rep"].as_f64().unwrap())
        .sum();
    assert!((rep - 1.0).abs() < 1e-9);
    let formation = json(&a.path().join("formation.json"));
    assert_eq!(formation["prefixes"].as_array().unwrap().len(), k - 1);
    let emd = json(&a.path().join("emd.json"));
    assert_eq!(emd["raw"].as_array().unwrap().len(), k);
    let pll = fs::read_to_string(a.path().join("pll.csv")).unwrap();
    assert_eq!(pll.lines().count(), 1 + 9 * k);
    assert!(pll.starts_with("cluster,p,mean_acc,sd_acc,mean_f1,sd_f1"));
    let metrics = json(&a.path().join("metrics.json"));
    assert_eq!(metrics["report"]["clusters"].as_array().unwrap().len(), k);
}

#[test]
fn stage_by_stage_matches_report_all() {
    let all = tempfile::tempdir().unwrap();
    assert!(report_all(all.path()).status.success());
    let staged = tempfile::tempdir().unwrap();
    let input = fixture();
    for cmd in [
        "sessions", "journeys", "rank", "cluster", "analyze", "emd", "pll", "classify",
    ] {
        let mut args = vec![
            cmd,
            "--input",
            input.to_str().unwrap(),
            "--out",
            staged.path().to_str().unwrap(),
        ];
        args.extend(FAST);
        let o = opam(&args);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    for name in ARTIFACTS.iter().filter(|n| **n != "manifest.json") {
        assert_eq!(
            fs::read(all.path().join(name)).unwrap(),
            fs::read(staged.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn generate_then_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = opam(&["generate", "--users", "300", "--seed", "3", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let personas = json(&dir.path().join("personas.json"));
    assert_eq!(personas.as_object().unwrap().len(), 300);

    let ini = dir.path().join("run.ini");
    fs::write(&ini, "seed = 3\n[cluster]\nspace = raw\nk = 3\n[pll]\nrepeats = 2\n").unwrap();
    let o = opam(&[
        "report-all",
        "--config",
        ini.to_str().unwrap(),
        "--out",
        out,
        "--k",
        "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let elbow = json(&dir.path().join("elbow.json"));
    assert_eq!(elbow["chosen_k"], 4);
    assert_eq!(elbow["space"], "raw");
    assert_eq!(elbow["k_mode"], "fixed");
    assert!(!dir.path().join("embedding.csv").exists());
    let pll = json(&dir.path().join("pll.json"));
    assert_eq!(pll["repeats"], 2);
}
