use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_roughwall"))
}

fn scratch(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("roughwall-cli-{name}-{}", std::process::id()))
}

#[test]
fn divbench_writes_csv_and_verdict() {
    let out = scratch("div");
    let status = bin().args(["--out", out.to_str().unwrap(), "divbench", "--eps-list", "1/4,1/8", "--seed", "3"]).status().unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("divbench.csv")).unwrap();
    assert!(csv.starts_with("eps,m,pieces,global_ratio"));
    assert_eq!(csv.lines().count(), 3);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("divbench.json")).unwrap()).unwrap();
    assert!(json["verdict"].is_string());
    std::fs::remove_dir_all(out).ok();
}

#[test]
fn cell_reads_a_config_file() {
    let out = scratch("cell");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("plane.toml");
    std::fs::write(&cfg, "[chart]\nkind = \"plane\"\n[roughness]\nkind = \"constant\"\namplitude = 0.5\nbound_M = 0.5\n").unwrap();
    let status = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "cell", "--lambda", "e2", "--res", "8"])
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("cell.json")).unwrap()).unwrap();
    let c = json["c_bl"].as_array().unwrap();
    assert!((c[1].as_f64().unwrap() + 0.5).abs() < 1e-9);
    std::fs::remove_dir_all(out).ok();
}

#[test]
fn bad_input_fails_cleanly() {
    let out = scratch("bad");
    let o = bin().args(["--out", out.to_str().unwrap(), "macro", "--variant", "smooth", "--eps", "1/16"]).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown variant"));
    std::fs::remove_dir_all(out).ok();
}
