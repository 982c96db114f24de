use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bates_hybrid::cli::RunConfig;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn shipped(name: &str) -> String {
    fs::read_to_string(configs_dir().join(name)).unwrap()
}

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bates-hybrid")).args(args).output().unwrap()
}

/// A small variant of a shipped config so that runs stay fast.
fn reduced(name: &str, edits: &[(&str, &str)]) -> String {
    edits.iter().fold(shipped(name), |s, (from, to)| {
        assert!(s.contains(from), "{from} not in {name}");
        s.replace(from, to)
    })
}

#[test]
fn every_shipped_config_validates() {
    let mut n = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&path).unwrap().validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    for table in ["table1a", "table1b", "table2a", "table2b", "table4", "table5", "table6a", "table6b", "table7a", "table7b"] {
        assert!(configs_dir().join(format!("{table}.toml")).exists());
        assert!(configs_dir().join(format!("{table}_mc.toml")).exists());
    }
    assert!(n >= 22);
}

#[test]
fn table1_config_enumerates_45_rows() {
    let cfg = RunConfig::from_toml(&shipped("table1a.toml")).unwrap();
    assert_eq!(cfg.jobs().len(), 5 * 4 * 2 + 5);
    let mc = RunConfig::from_toml(&shipped("table1a_mc.toml")).unwrap();
    assert_eq!(mc.jobs().len(), 5 * 4 * 2);
}

#[test]
fn price_writes_csv_with_cf_row() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("t.toml");
    fs::write(
        &config,
        reduced(
            "table1a.toml",
            &[
                ("dy = [0.01, 0.005, 0.0025, 0.00125]", "dy = [0.01]"),
                ("spots = [80.0, 90.0, 100.0, 110.0, 120.0]", "spots = [90.0, 100.0]"),
            ],
        ),
    )
    .unwrap();
    let out = dir.path().join("t.csv");
    let o = bin(&["price", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["spot", "method", "N_t", "dy_or_paths", "price", "ci_halfwidth", "wall_time_seconds"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    let cf = rows.iter().find(|r| &r[0] == "100.0" && &r[1] == "CF").unwrap();
    let price: f64 = cf[4].parse().unwrap();
    assert!((price - 7.5210).abs() < 5e-4);
    assert!(cf[2].is_empty() && cf[5].is_empty());
}

#[test]
fn csv_is_deterministic_apart_from_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("mc.toml");
    fs::write(
        &config,
        reduced(
            "table6a_mc.toml",
            &[
                ("paths = [10000, 50000, 100000, 200000]", "paths = [2000]"),
                ("spots = [80.0, 90.0, 100.0, 110.0, 120.0]", "spots = [100.0]"),
            ],
        ),
    )
    .unwrap();
    let strip = |p: &Path| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let mut runs = Vec::new();
    for (i, threads) in ["1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("o{i}.csv"));
        let o = bin(&["--threads", threads, "price", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        runs.push(strip(&out));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0].len(), 3);
    let reseeded = dir.path().join("s.csv");
    let o = bin(&["price", config.to_str().unwrap(), "--seed", "99", "--out", reseeded.to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(strip(&reseeded), runs[0]);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, reduced("table1a.toml", &[("spots = [80.0, 90.0, 100.0, 110.0, 120.0]", "spots = []")])).unwrap();
    let o = bin(&["price", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("option.spots"));

    fs::write(&config, reduced("table1a.toml", &[("kappa_v = 2.0", "kappa_v = \"fast\"")])).unwrap();
    assert_eq!(bin(&["price", config.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(bin(&["price", "/definitely/missing.toml"]).status.code(), Some(1));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two() {
    // An option of a few minutes is far too short for the fixed Fourier grid, so the
    // doubling check of the CF benchmark fails.
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("short.toml");
    let text = reduced("table1a.toml", &[("maturity = 0.5", "maturity = 0.00001")]);
    let text = text.split("[[method]]").next().unwrap().to_string() + "[[method]]\nkind = \"cf\"\n";
    fs::write(&config, text).unwrap();
    let o = bin(&["price", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn smile_report_over_moneyness_and_maturity() {
    let dir = tempfile::tempdir().unwrap();
    for (name, rows) in [("smile_moneyness.toml", 9), ("smile_maturity.toml", 10)] {
        let config = dir.path().join(name);
        fs::write(
            &config,
            reduced(
                name,
                &[("mc_paths = 50000", "mc_paths = 4000"), ("htfd_steps = 50", "htfd_steps = 20"), ("htfd_dy = 0.005", "htfd_dy = 0.01")],
            ),
        )
        .unwrap();
        let out = dir.path().join(format!("{name}.csv"));
        let o = bin(&["smile", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut rdr = csv::Reader::from_path(&out).unwrap();
        let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, ["moneyness_or_maturity", "iv_htfd", "iv_mc", "iv_cf"]);
        let recs: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
        assert_eq!(recs.len(), rows);
        let grid: Vec<f64> = recs.iter().map(|r| r[0].parse().unwrap()).collect();
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
        let iv_cf: Vec<f64> = recs.iter().map(|r| r[3].parse().unwrap()).collect();
        if name == "smile_moneyness.toml" {
            assert_eq!(bates_hybrid::analytics::interior_minima(&iv_cf).len(), 1, "{iv_cf:?}");
        }
    }
}
