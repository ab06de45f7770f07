use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use age_core::replay::{parse_log, ReplayReport};

fn age(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_age"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const WORLD: &str = r#"{"num_arms": 12, "field_sizes": [4, 3], "seed": 5}"#;
const POLICIES: &str = r#"[
    {"kind": "vanilla"},
    {"kind": "eps_greedy", "epsilon": 0.2},
    {"kind": "age_ts", "age": {"lambda": 5.0}}
]"#;

fn small_model_config(dir: &Path, extra: &str) -> String {
    let text = format!(
        r#"{{
            "world": {WORLD},
            "model": {{"network": {{"embed_dim": 3, "hidden": [8, 4]}}}},
            "warm": {{"events": 200}},
            "pool_size": 4,
            "log_events": 2000
            {extra}
        }}"#
    );
    write(dir, "config.json", &text)
}

#[test]
fn gen_writes_exact_line_count() {
    let dir = tempfile::tempdir().unwrap();
    let world = write(dir.path(), "w.json", WORLD);
    let log = dir.path().join("log.jsonl");
    let out = age(&[
        "gen",
        "--world",
        &world,
        "--events",
        "100000",
        "--pool-size",
        "5",
        "--out",
        log.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().count(), 100_000);
    let events = parse_log(text.as_bytes()).unwrap();
    assert_eq!(events.len(), 100_000);
    assert!(events.iter().all(|e| e.pool.len() == 5));
}

fn gen_log(dir: &Path) -> String {
    let world = write(dir, "w.json", WORLD);
    let log = dir.join("log.jsonl");
    let out = age(&[
        "gen", "--world", &world, "--events", "3000", "--pool-size", "4", "--out",
        log.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    log.to_str().unwrap().to_string()
}

fn replay(dir: &Path, log: &str, out: &Path) -> Output {
    let cfg = small_model_config(dir, "");
    let policies = write(dir, "p.json", POLICIES);
    let world = write(dir, "w.json", WORLD);
    age(&[
        "replay",
        "--config",
        &cfg,
        "--log",
        log,
        "--world",
        &world,
        "--policies",
        &policies,
        "--seeds",
        "5",
        "--warm-n",
        "500",
        "--out",
        out.to_str().unwrap(),
    ])
}

fn read_reports(out: &Path) -> Vec<(String, ReplayReport)> {
    let mut v: Vec<(String, ReplayReport)> = fs::read_dir(out.join("reports"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let name = p.file_name().unwrap().to_str().unwrap().to_string();
            let r = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
            (name, r)
        })
        .collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

#[test]
fn replay_writes_one_report_per_policy_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let log = gen_log(dir.path());
    let out = dir.path().join("run");
    let res = replay(dir.path(), &log, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let reports = read_reports(&out);
    assert_eq!(reports.len(), 5 * 3);
    assert!(out.join("aggregate.csv").exists());
    for (_, r) in &reports {
        assert_eq!(r.events_seen, 2500);
    }

    // aggregate mean/std rows equal a recomputation from the reports
    let mut rdr = csv::Reader::from_path(out.join("aggregate.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    for policy in ["vanilla", "eps_greedy", "age_ts"] {
        let clicks: Vec<f64> = reports
            .iter()
            .filter(|(_, r)| r.policy == policy)
            .map(|(_, r)| r.cumulative_clicks as f64)
            .collect();
        assert_eq!(clicks.len(), 5);
        let n = clicks.len() as f64;
        let mean = clicks.iter().sum::<f64>() / n;
        let std = (clicks.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let find = |tag: &str| -> f64 {
            rows.iter()
                .find(|r| &r[0] == policy && &r[1] == tag)
                .unwrap()[2]
                .parse()
                .unwrap()
        };
        assert_eq!(find("mean"), mean, "{policy}");
        assert_eq!(find("std"), std, "{policy}");
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let log = gen_log(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(replay(dir.path(), &log, &a).status.success());
    assert!(replay(dir.path(), &log, &b).status.success());
    for name in fs::read_dir(a.join("reports")).unwrap() {
        let name = name.unwrap().file_name();
        let x = fs::read(a.join("reports").join(&name)).unwrap();
        let y = fs::read(b.join("reports").join(&name)).unwrap();
        assert_eq!(x, y, "{name:?}");
    }
    assert_eq!(
        fs::read(a.join("aggregate.csv")).unwrap(),
        fs::read(b.join("aggregate.csv")).unwrap()
    );
}

#[test]
fn manifest_alone_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_model_config(
        dir.path(),
        r#", "mode": "replay", "seeds": [1, 2], "policies": [{"kind": "age_ucb", "age": {"lambda": 3.0}}]"#,
    );
    let first = dir.path().join("first");
    let res = age(&["run", "--config", &cfg, "--out", first.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([1, 2]));
    let replayed = write(dir.path(), "from_manifest.json", &manifest["config"].to_string());
    let second = dir.path().join("second");
    let res = age(&["run", "--config", &replayed, "--out", second.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for seed in [1, 2] {
        let name = format!("reports/age_ucb_seed{seed}.json");
        assert_eq!(fs::read(first.join(&name)).unwrap(), fs::read(second.join(&name)).unwrap());
    }
}

#[test]
fn validate_names_offending_fields() {
    let dir = tempfile::tempdir().unwrap();
    let bad_eps = write(
        dir.path(),
        "eps.json",
        r#"{"mode": "live", "world": {"num_arms": 5}, "policies": [{"kind": "eps_greedy", "epsilon": 1.5}]}"#,
    );
    let out = age(&["validate", &bad_eps]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("policies[0].epsilon"));

    let bad_pgd = write(
        dir.path(),
        "pgd.json",
        r#"{"mode": "live", "world": {"num_arms": 5}, "policies": [{"kind": "age_ts", "age": {"adv": {"method": "pgd", "steps": 0}}}]}"#,
    );
    let out = age(&["validate", &bad_pgd]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("policies[0].age.adv.steps"));

    let good = write(
        dir.path(),
        "good.json",
        r#"{"mode": "live", "world": {"num_arms": 20}, "policies": [{"kind": "age_ts"}]}"#,
    );
    let out = age(&["validate", &good]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

#[test]
fn exit_codes_split_config_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let typo = write(dir.path(), "typo.json", r#"{"mode": "replay", "seedz": [1]}"#);
    let out = age(&["run", "--config", &typo, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seedz"));

    let world = write(dir.path(), "w.json", WORLD);
    let policies = write(dir.path(), "p.json", POLICIES);
    let out = age(&[
        "replay",
        "--log",
        dir.path().join("missing.jsonl").to_str().unwrap(),
        "--world",
        &world,
        "--policies",
        &policies,
        "--out",
        dir.path().join("o2").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn live_and_ablate_produce_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_model_config(dir.path(), r#", "live": {"steps": 1500, "pool_size": 4}"#);
    let policies = write(dir.path(), "p.json", POLICIES);
    let out = dir.path().join("live");
    let res = age(&[
        "live", "--config", &cfg, "--policies", &policies, "--seeds", "0,3", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read_dir(out.join("reports")).unwrap().count(), 6);
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports/age_ts_seed3.json")).unwrap())
            .unwrap();
    assert_eq!(r["steps"], 1500);

    let out = dir.path().join("ablate");
    let res = age(&["ablate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let names: Vec<String> = fs::read_dir(out.join("reports"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    for expected in ["age_ts_seed0.json", "age_ucb_no_dgu_seed0.json", "age_ts_fgm_seed0.json"] {
        assert!(names.iter().any(|n| n == expected), "{names:?}");
    }
}

#[test]
fn theorem_check_subcommand_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "t.json",
        r#"{"theorem": {"networks": 10, "dominance_networks": 3, "directions": 2000}}"#,
    );
    let out = dir.path().join("t");
    let res = age(&["theorem-check", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("theorem.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn r6b_import_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let lines = "\
1317513291 id-560620 0 |user 1 9 11 13 |id-552077 |id-555224 |id-560620
1317513292 id-555224 1 |user 1 12 |id-555224 |id-560620
";
    let input = write(dir.path(), "r6b.txt", lines);
    let out = dir.path().join("r6b.jsonl");
    let res = age(&["import-r6b", &input, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let events = parse_log(fs::read(&out).unwrap().as_slice()).unwrap();
    assert_eq!(events.len(), 2);
    assert_eq!(events[1].click, 1);
    assert!(events[0].pool.contains(&events[0].shown));
}
