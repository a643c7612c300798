// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

use dicke_lab::output::Csv;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dicke-lab"))
        .args(args)
        .env_remove("DICKE_LAB_THREADS")
        .output()
        .expect("spawn dicke-lab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&lab(&[])), 2);
    assert_eq!(code(&lab(&["meanfield"])), 2);
    assert_eq!(code(&lab(&["meanfield", "--sweep", "0:1:4", "--bogus"])), 2);
    let o = lab(&["meanfield", "--sweep", "0.5:1.5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("error kind=usage code=2 message="));
}

#[test]
fn config_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    let o = lab(&["closed", "--sweep", "0:0.5:2", "--config", p(&cfg)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("kind=config"));
    std::fs::write(&cfg, "eta = -0.5\n").unwrap();
    assert_eq!(
        code(&lab(&["closed", "--sweep", "0:0.5:2", "--config", p(&cfg)])),
        3
    );
}

#[test]
fn numerical_errors_exit_4() {
    let o = lab(&["spectrum", "--x", "1.2", "--gamma-hz", "100"]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("kind=numerical"));
}

#[test]
fn data_errors_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&[
        "analyze",
        "--trace",
        "/nonexistent/trace.clk",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), 5);
    assert!(stderr(&o).contains("kind=data"));
    let bad = dir.path().join("trace.csv");
    std::fs::write(&bad, "not a trace\n").unwrap();
    assert_eq!(
        code(&lab(&[
            "analyze",
            "--trace",
            p(&bad),
            "--out",
            p(dir.path())
        ])),
        5
    );
}

#[test]
fn meanfield_writes_csv_to_stdout_and_file() {
    let o = lab(&["meanfield", "--sweep", "0.5:1.5:3", "--zeta", "10"]);
    assert_eq!(code(&o), 0);
    let csv = Csv::parse(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(
        csv.columns,
        [
            "x",
            "beta_over_N",
            "w_over_N",
            "re_alpha",
            "im_alpha",
            "photon_number"
        ]
    );
    assert_eq!(csv.rows.len(), 3);
    let x = csv.column("x").unwrap();
    let beta = csv.column("beta_over_N").unwrap();
    assert_eq!(x, vec![0.5, 1.0, 1.5]);
    // Below threshold β ≈ xζ/(1−x) atoms.
    assert!((beta[0] * 1.6e5 / 10.0 - 1.0).abs() < 1e-4);

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("mf.csv");
    assert_eq!(
        code(&lab(&[
            "meanfield",
            "--sweep",
            "0:2:5",
            "--out",
            p(&file),
            "--plot"
        ])),
        0
    );
    let csv = Csv::read(&file).unwrap();
    assert_eq!(csv.rows.len(), 5);
    assert!(dir.path().join("mf.svg").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn closed_and_spectrum_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["closed", "--sweep", "0:0.9:4", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let files: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    let csv_path = files
        .iter()
        .find(|f| f.extension().is_some_and(|e| e == "csv"))
        .unwrap();
    let csv = Csv::read(csv_path).unwrap();
    let v = csv.column("quadrature_variance").unwrap();
    assert!((v[0] - 1.0).abs() < 1e-14);
    assert!(v.windows(2).all(|w| w[1] > w[0]));

    let o = lab(&[
        "spectrum",
        "--x",
        "0.8",
        "--gamma-hz",
        "250",
        "--zeta",
        "60",
        "--points",
        "11",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = Csv::parse(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(csv.rows.len(), 11);
    assert!(csv.column("g2").unwrap()[0] > 1.0);
}

#[test]
fn plot_renders_svg() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "x,y,y_err\n1,2,0.1\n2,4,0.2\n3,8,0.3\n").unwrap();
    let out = dir.path().join("d.svg");
    assert_eq!(
        code(&lab(&[
            "plot",
            "--in",
            p(&data),
            "--style",
            "logy",
            "--out",
            p(&out)
        ])),
        0
    );
    let svg = std::fs::read_to_string(&out).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(svg.contains("</svg>"));
    assert_eq!(
        code(&lab(&[
            "plot",
            "--in",
            p(&data),
            "--style",
            "polar",
            "--out",
            p(&out)
        ])),
        2
    );
}

#[test]
fn synth_analyze_and_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    let o = lab(&["synth", "--seed", "3", "--runs", "2", "--out", p(&traces)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let runs = Csv::read(&traces.join("runs.csv")).unwrap();
    assert_eq!(runs.rows.len(), 2);
    let t0 = traces.join("trace_0000.clk");
    let t1 = traces.join("trace_0001.clk");
    assert!(t0.exists() && t1.exists());

    let an = dir.path().join("analysis");
    let o = lab(&[
        "analyze",
        "--trace",
        p(&t0),
        "--trace",
        p(&t1),
        "--out",
        p(&an),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let nbar = Csv::read(&an.join("nbar_vs_x.csv")).unwrap();
    assert!(!nbar.rows.is_empty());
    let g2: Vec<_> = std::fs::read_dir(&an)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("g2_x"))
        .collect();
    assert!(!g2.is_empty());
    assert!(std::fs::read_to_string(an.join("transition.txt"))
        .unwrap()
        .contains("t_cr="));

    let pipe = dir.path().join("pipeline");
    let o = lab(&["pipeline", "--runs", "2", "--seed", "7", "--out", p(&pipe)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "manifest.json",
        "runs.csv",
        "nbar_vs_x.csv",
        "fit.json",
        "gamma_vs_x.csv",
        "exponent.txt",
    ] {
        assert!(pipe.join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(pipe.join("manifest.json")).unwrap())
            .unwrap();
    let entry = &manifest["entries"]["pipeline"];
    assert_eq!(entry["seed"], 7);
    assert!(entry["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .all(|o| o["sha256"].as_str().unwrap().len() == 64));
}
