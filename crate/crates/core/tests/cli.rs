use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lvadvect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lvadvect"))
        .args(args)
        .env_remove("LVADVECT_THREADS")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_weak_competition_converges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "weak.toml",
        "name = \"weak\"\npreset = \"classical_lv\"\n[control]\nt_end = 200.0\n",
    );
    let out = dir.path().join("out");
    let o = lvadvect(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("ConvergedToSteadyState"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["verdict"], "ConvergedToSteadyState");
    let ts = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert!(ts.starts_with("t,dt,mass_u,linf_u,linf_v,l2_grad_v,"));
    for f in ["mass_u", "linf_u", "linf_v", "l2_grad_v", "profiles"] {
        assert!(out.join(format!("plots/{f}.svg")).is_file(), "{f}");
    }
}

#[test]
fn run_zero_u_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "zero.toml",
        "[initial]\nkind = \"constant\"\nu0 = 0.0\nv0 = 0.0\n[control]\nt_end = 1.0\n",
    );
    let out = dir.path().join("out");
    let o = lvadvect(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ts = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    for line in ts.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cols[2..].iter().all(|x| *x == 0.0), "{line}");
    }
}

#[test]
fn run_rejects_bad_step_control() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "[control]\ndt_min = 0.1\ndt_init = 0.01\n",
    );
    let o = lvadvect(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("dt_min") && err.contains("dt_init"), "{err}");
}

#[test]
fn run_two_dimensional_writes_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "2d.toml",
        "preset = \"advective_lv\"\n[grid]\ndim = 2\nnx = 8\nny = 6\nLx = 2.0\nLy = 1.5\n[control]\nt_end = 0.5\n",
    );
    let out = dir.path().join("out");
    let o = lvadvect(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("plots/final_u.svg").is_file());
    assert!(out.join("plots/final_v.svg").is_file());
    assert!(fs::read_to_string(out.join("final_u.csv"))
        .unwrap()
        .starts_with("8,6,2,1.5\n"));
}

#[test]
fn run_from_file_initial_data() {
    let dir = tempfile::tempdir().unwrap();
    let u = "4,1,4,1\n1,2,3,4\n";
    let v = "4,1,4,1\n0.5,0.5,0.5,0.5\n";
    write(dir.path(), "u.csv", u);
    write(dir.path(), "v.csv", v);
    let cfg = write(
        dir.path(),
        "file.toml",
        "[grid]\ndim = 1\nnx = 4\nLx = 4.0\n[initial]\nkind = \"from_file\"\nu = \"u.csv\"\nv = \"v.csv\"\n[control]\nt_end = 0.1\n",
    );
    let o = lvadvect(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let wrong = write(
        dir.path(),
        "wrong.toml",
        "[grid]\ndim = 1\nnx = 5\nLx = 4.0\n[initial]\nkind = \"from_file\"\nu = \"u.csv\"\nv = \"v.csv\"\n",
    );
    let o = lvadvect(&[
        "run",
        &wrong,
        "--out",
        dir.path().join("o2").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_layout_and_honours_thread_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.toml",
        "preset = \"advective_lv\"\n[grid]\ndim = 1\nnx = 32\nLx = 10.0\n[control]\nt_end = 1.0\n\
         [sweep]\nclassify_n = 2\nheatmap = [\"chi\", \"m2\"]\n[sweep.axes]\nm2 = [0.5, 1.0, 3.0]\nchi = [0.5, 2.0]\n",
    );
    let out = dir.path().join("sweep");
    let o = Command::new(env!("CARGO_BIN_EXE_lvadvect"))
        .args([
            "sweep",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--workers",
            "1",
        ])
        .env("LVADVECT_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("6 runs on 3 workers"), "{}", stdout(&o));
    assert!(stdout(&o).contains("agreement:"));
    let rows = fs::read_to_string(out.join("rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 7);
    assert!(out.join("agreement.svg").is_file());
    assert!(out.join("summaries/p0005.json").is_file());
}

#[test]
fn sweep_cap_exceeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "big.toml",
        "[sweep]\ncap = 4\nseeds = [1, 2, 3]\n[sweep.axes]\nchi = [0.0, 1.0]\n",
    );
    let o = lvadvect(&[
        "sweep",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("6") && err.contains("cap is 4"), "{err}");
}

#[test]
fn classify_exit_codes() {
    let ok = lvadvect(&[
        "classify", "--m1", "1", "--m2", "1", "--alpha", "1", "--N", "2",
    ]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).starts_with("Thm1_1"));
    let none = lvadvect(&[
        "classify", "--m1", "1", "--m2", "2.6", "--alpha", "1", "--N", "2",
    ]);
    assert_eq!(none.status.code(), Some(3));
    let bad = lvadvect(&["classify", "--m2", "x"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn classify_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "skt.toml", "preset = \"skt_reduced\"\n");
    let o = lvadvect(&["classify", "--config", &cfg, "--N", "2", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["verdict"] == "Satisfied"));
    let o = lvadvect(&["classify", "--config", &cfg, "--m1", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn presets_listing() {
    let o = lvadvect(&["presets"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for p in [
        "ClassicalLV",
        "AdvectiveLV",
        "SKTReduced",
        "IdealFree",
        "Custom",
    ] {
        assert!(text.contains(p), "{p}");
    }
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let loaded = lvadvect::config::load_config(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            loaded.plan().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
