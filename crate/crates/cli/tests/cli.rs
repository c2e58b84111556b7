use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cilfuse::evalkit::parse_metrics_csv;
use cilfuse_cli::RunManifest;

const TINY: &str = r#"
round_sizes = [2, 2]
seeds = [0, 1]
memory_budget = 8

[dataset]
kind = "synthetic"
num_classes = 4
train_per_class = 8
test_per_class = 4

[train]
max_epochs = 2
finetune_max_epochs = 1
probe_refit_epochs = 2
common_dim = 8

[train.extractor]
widths = [2, 4]
pool_after = [true, false]
"#;

fn cilfuse(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cilfuse"));
    cmd.args(args).env_remove("CILFUSE_OUT");
    if let Some(p) = env_out {
        cmd.env("CILFUSE_OUT", p);
    }
    cmd.output().expect("spawn cilfuse")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn line_value(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no {key:?} in {out}"))
        .trim()
        .to_string()
}

fn files_under(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn run_writes_metrics_checkpoints_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let out_root = tmp.path().join("out");
    let o = cilfuse(&["run", "--config", cfg.to_str().unwrap(), "--out", out_root.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let hash = line_value(&text, "config hash:");
    let dir = PathBuf::from(line_value(&text, "output:"));

    let manifest: RunManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.config_hash, hash);
    assert_eq!(manifest.command, "run");
    assert_eq!(files_under(&dir), manifest.artifacts);
    assert!(manifest.artifacts.iter().any(|a| a == "checkpoints/seed-1/round-2/params.bin"));

    let metrics = parse_metrics_csv(&fs::read_to_string(dir.join("metrics.csv")).unwrap()).unwrap();
    let acc: Vec<_> = metrics.iter().filter(|m| m.metric == "accuracy").collect();
    assert_eq!(acc.len(), 2 * 2);
    for seed in [0, 1] {
        let rounds: Vec<usize> = acc.iter().filter(|m| m.seed == seed).map(|m| m.round).collect();
        assert_eq!(rounds, vec![1, 2]);
    }

    let insp = cilfuse(&["inspect", dir.to_str().unwrap()], None);
    assert!(insp.status.success());
    let s = stdout(&insp);
    assert!(s.contains(&hash));
    assert!(s.contains("kept kernels"));
}

#[test]
fn existing_output_needs_force_and_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let cfg = cfg.to_str().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let first = cilfuse(&["run", "--config", cfg, "--out", out, "--seed", "3"], None);
    assert!(first.status.success());
    let dir = PathBuf::from(line_value(&stdout(&first), "output:"));
    let before = fs::read(dir.join("metrics.csv")).unwrap();

    let again = cilfuse(&["run", "--config", cfg, "--out", out, "--seed", "3"], None);
    assert!(!again.status.success());
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));

    let forced = cilfuse(&["run", "--config", cfg, "--out", out, "--seed", "3", "--force"], None);
    assert!(forced.status.success());
    assert_eq!(fs::read(dir.join("metrics.csv")).unwrap(), before);
}

#[test]
fn seed_override_changes_hash_and_env_sets_default_root() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let env_root = tmp.path().join("from-env");
    let o = cilfuse(&["run", "--config", cfg.to_str().unwrap(), "--seed", "7"], Some(&env_root));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = PathBuf::from(line_value(&stdout(&o), "output:"));
    assert!(dir.starts_with(&env_root));
    let h7 = line_value(&stdout(&o), "config hash:");
    let o = cilfuse(&["run", "--config", cfg.to_str().unwrap(), "--seed", "8"], Some(&env_root));
    assert_ne!(line_value(&stdout(&o), "config hash:"), h7);
}

#[test]
fn ablate_emits_one_summary_per_row_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let rows = r#"
[[rows]]
name = "none"
flags = { fusion = false, transforms = false, masks = false }

[[rows]]
name = "full"

[rows.flags]

[[rows]]
name = "drop_1"
probe = { of = "full", kind = "drop", extractor = 1 }
"#;
    let cfg = write_config(tmp.path(), "ablate.toml", &format!("{TINY}\n{rows}"));
    let out = tmp.path().join("out");
    let o = cilfuse(
        &["ablate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "0"],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for row in ["none", "full", "drop_1"] {
        assert!(text.lines().any(|l| l.starts_with(row)), "{row} missing from\n{text}");
    }
    let dir = PathBuf::from(line_value(&text, "output:"));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("summary.json")).unwrap()).unwrap();
    let keys: Vec<&String> = summary.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["drop_1", "full", "none"]);
    let manifest: RunManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(files_under(&dir), manifest.artifacts);
    assert!(!manifest.notes.is_empty());

    let metrics = dir.join("metrics.csv");
    let plots = tmp.path().join("plots");
    let p = cilfuse(
        &["plot", metrics.to_str().unwrap(), "--kind", "accuracy", "--out", plots.to_str().unwrap()],
        None,
    );
    assert!(p.status.success(), "{}", String::from_utf8_lossy(&p.stderr));
    let svg = fs::read_to_string(plots.join("accuracy.svg")).unwrap();
    for row in ["none", "full", "drop_1"] {
        assert!(svg.contains(row), "no curve label for {row}");
    }
    let p = cilfuse(
        &["plot", metrics.to_str().unwrap(), "--kind", "forgetting", "--out", plots.to_str().unwrap()],
        None,
    );
    assert!(p.status.success());
    let svg = fs::read_to_string(plots.join("forgetting-full.svg")).unwrap();
    assert!(svg.contains("round 1 classes") && svg.contains("round 2 classes"));

    let bad = cilfuse(&["plot", metrics.to_str().unwrap(), "--kind", "loss"], None);
    assert!(!bad.status.success());
}

#[test]
fn plot_of_empty_metrics_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("metrics.csv");
    fs::write(&m, "run_id,seed,round,metric,subset,value\n").unwrap();
    let o = cilfuse(&["plot", m.to_str().unwrap()], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no metrics"));
}

#[test]
fn invalid_configs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let conflict = TINY.replace("[dataset]", "[flags]\nfusion = false\nmasks = true\n\n[dataset]");
    let cfg = write_config(tmp.path(), "conflict.toml", &conflict);
    let o = cilfuse(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(!o.status.success());
    let bad_row = format!("{TINY}\n[[rows]]\nname = \"x\"\nflags = {{ fusion = false, masks = true }}\n");
    let cfg = write_config(tmp.path(), "badrow.toml", &bad_row);
    let o = cilfuse(&["ablate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid config"));

    let typo = write_config(tmp.path(), "typo.toml", &format!("{TINY}\nmemory_budgt = 3\n"));
    let o = cilfuse(&["run", "--config", typo.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(!o.status.success());
    let o = cilfuse(&["run", "--config", "/nonexistent.toml"], None);
    assert!(!o.status.success());
    assert!(!out.exists() || files_under(&out).is_empty());
}

#[test]
fn shipped_desk_config_matches_the_desk_preset() {
    use cilfuse::evalkit::{desk_dataset, desk_plan};
    use cilfuse_cli::{DatasetSource, RunConfig};

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let cfg = RunConfig::load(&path).unwrap();
    cfg.validate(true).unwrap();
    assert_eq!(cfg.dataset, DatasetSource::Synthetic(desk_dataset()));
    let plan = cfg.plan(true);
    let desk = desk_plan(vec![]);
    assert_eq!(plan.train, desk.train);
    assert_eq!(plan.round_sizes, desk.round_sizes);
    assert_eq!(plan.seeds, desk.seeds);
    assert_eq!(plan.memory_budget, desk.memory_budget);

    let quick = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/quick.toml");
    RunConfig::load(&quick).unwrap().validate(false).unwrap();
}
