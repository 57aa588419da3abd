//! End-to-end CLI tests: each subcommand runs against real files in a
//! temporary directory, chained as a user would.

use std::path::Path;
use std::process::Command;

fn phenopt(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_phenopt"))
        .args(args)
        .output()
        .expect("failed to launch binary")
}

fn assert_ok(out: &std::process::Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const GEN_CONFIG: &str = r#"{
  "sites": [
    {"name": "a", "mean_temp": 18.0, "seasonal_amplitude": 6.0, "wet_day_prob": 0.2, "mean_rain_depth": 6.0},
    {"name": "b", "mean_temp": 15.0, "seasonal_amplitude": 5.0, "wet_day_prob": 0.35, "mean_rain_depth": 5.0}
  ],
  "years_per_site": 6,
  "season_length": 60
}"#;

#[test]
fn full_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let s = |name: &str| p(name).display().to_string();

    // gen-climate
    write(&p("gen.json"), GEN_CONFIG);
    let out = phenopt(&[
        "gen-climate",
        "--config",
        &s("gen.json"),
        "--seed",
        "42",
        "--out",
        &s("climate.csv"),
    ]);
    assert_ok(&out, "gen-climate");
    let text = std::fs::read_to_string(p("climate.csv")).unwrap();
    assert!(text.starts_with("series_id,day,tmin,tmax,rad,etp,rain"));
    assert_eq!(text.lines().count(), 1 + 12 * 60);

    // determinism: same seed, same bytes
    let out = phenopt(&[
        "gen-climate",
        "--config",
        &s("gen.json"),
        "--seed",
        "42",
        "--out",
        &s("climate2.csv"),
    ]);
    assert_ok(&out, "gen-climate again");
    assert_eq!(
        std::fs::read(p("climate.csv")).unwrap(),
        std::fs::read(p("climate2.csv")).unwrap()
    );

    // simulate a small phenotype basis
    write(
        &p("basis.csv"),
        "tdf1,tdm3,tln,k,llh,lls,le,tr\n\
         800,1700,30,0.9,17,500,-9,-10\n\
         850,1600,25,0.8,15,400,-5,-7\n\
         780,1800,34,0.85,19,600,-12,-12\n",
    );
    let out = phenopt(&[
        "simulate",
        "--climate",
        &s("climate.csv"),
        "--phenotypes",
        &s("basis.csv"),
        "--season-length",
        "60",
        "--out",
        &s("yields.csv"),
    ]);
    assert_ok(&out, "simulate");
    let yields = std::fs::read_to_string(p("yields.csv")).unwrap();
    assert_eq!(yields.lines().count(), 1 + 3);
    assert!(yields.lines().next().unwrap().starts_with("a_0000,"));

    // combined dissimilarity with intermediates
    let out = phenopt(&[
        "dissim",
        "--climate",
        &s("climate.csv"),
        "--basis-yields",
        &s("yields.csv"),
        "--season-length",
        "60",
        "--out",
        &s("delta.csv"),
        "--intermediates",
        &s("parts"),
    ]);
    assert_ok(&out, "dissim");
    for name in ["tmin", "tmax", "rad", "etp", "rain", "model"] {
        assert!(p("parts").join(format!("{name}.csv")).exists(), "{name} missing");
    }

    // clustering
    let out = phenopt(&[
        "cluster",
        "--dissim",
        &s("delta.csv"),
        "--k",
        "3",
        "--iters",
        "200",
        "--restarts",
        "3",
        "--seed",
        "7",
        "--out",
        &s("clusters.json"),
    ]);
    assert_ok(&out, "cluster");
    let clusters: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("clusters.json")).unwrap()).unwrap();
    assert_eq!(clusters["k"], 3);
    assert_eq!(clusters["assignment"].as_array().unwrap().len(), 12);
    assert_eq!(clusters["representative_ids"].as_array().unwrap().len(), 3);

    // optimize (random, then two-step requires K <= N so use the 12-series set)
    let out = phenopt(&[
        "optimize",
        "--strategy",
        "random",
        "--budget-preset",
        "very-small",
        "--climate",
        &s("climate.csv"),
        "--season-length",
        "60",
        "--seed",
        "3",
        "--alpha",
        "0.2",
        "--out",
        &s("opt-random"),
    ]);
    assert_ok(&out, "optimize random");
    let budget: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(p("opt-random").join("budget.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(budget["total"], 60 * 12);
    assert!(p("opt-random").join("archive.csv").exists());

    let out = phenopt(&[
        "optimize",
        "--strategy",
        "two-step",
        "--budget-preset",
        "very-small",
        "--climate",
        &s("climate.csv"),
        "--season-length",
        "60",
        "--seed",
        "3",
        "--out",
        &s("opt-two"),
    ]);
    assert_ok(&out, "optimize two-step");
    let budget: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(p("opt-two").join("budget.json")).unwrap(),
    )
    .unwrap();
    // 2*10*12 + 2*(42+1)*9*10
    assert_eq!(budget["total"], 240 + 7740);

    // evaluate one front against the other
    let out = phenopt(&[
        "evaluate",
        "--fronts",
        &format!("{}/archive.csv", s("opt-random")),
        "--reference",
        &format!("{}/archive.csv", s("opt-two")),
        "--out",
        &s("indicators.csv"),
    ]);
    assert_ok(&out, "evaluate");
    let ind = std::fs::read_to_string(p("indicators.csv")).unwrap();
    assert!(ind.starts_with("front,hypervolume,epsilon,r2"));
    assert_eq!(ind.lines().count(), 2);
}

#[test]
fn reconstruct_prints_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let residuals = serde_json::json!({
        "method": "naive",
        "classes": [{
            "representative": 0,
            "members": [0, 1, 2],
            "naive": [-1.0, 0.0, 1.0],
            "rescaled": null
        }],
        "class_sizes": [3],
        "n_total": 3,
        "basis_scales": null,
        "skipped_basis": []
    });
    let res_path = dir.path().join("residuals.json");
    std::fs::write(&res_path, residuals.to_string()).unwrap();
    let rep_path = dir.path().join("rep.csv");
    std::fs::write(&rep_path, "yield\n2.0\n").unwrap();

    let out = phenopt(&[
        "reconstruct",
        "--rep-yields",
        &rep_path.display().to_string(),
        "--residuals",
        &res_path.display().to_string(),
        "--alpha",
        "0.4",
        "--method",
        "naive",
    ]);
    assert_ok(&out, "reconstruct");
    let stdout = String::from_utf8_lossy(&out.stdout);
    // atoms are {1, 2, 3}: E = 2, CVaR_0.4 = mean of two smallest = 1.5
    assert!(stdout.contains("E = 2"), "{stdout}");
    assert!(stdout.contains("CVaR_0.4 = 1.5"), "{stdout}");
}

#[test]
fn experiment_run_and_example_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);

    // the shipped default config parses
    let out = phenopt(&["example-config", "--out", &p("example.json").display().to_string()]);
    assert_ok(&out, "example-config");
    let example: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("example.json")).unwrap()).unwrap();
    assert_eq!(example["replications"], 10);
    assert_eq!(example["pipeline"]["cluster"]["k"], 10);

    // a scaled-down experiment actually runs
    let config = serde_json::json!({
        "climate": {
            "kind": "generate",
            "config": {
                "sites": [{
                    "name": "t",
                    "mean_temp": 17.0,
                    "seasonal_amplitude": 6.0,
                    "wet_day_prob": 0.3,
                    "mean_rain_depth": 6.0
                }],
                "years_per_site": 6,
                "season_length": 50
            }
        },
        "strategies": ["random", "two-step"],
        "budgets": ["very-small"],
        "replications": 2,
        "alpha": 0.25,
        "pipeline": {
            "basis_size": 2,
            "cluster": {"k": 2, "iterations": 60, "restarts": 2, "eps0": 0.5, "c0": 1.0, "seed": 0},
            "dtw": {"default_window": 7, "rain_window": 3},
            "weights": {"w_tmin": 0.1, "w_tmax": 0.1, "w_rad": 0.1, "w_etp": 0.1, "w_rain": 0.1, "w_model": 0.5},
            "method": "rescaled"
        },
        "reference_budget_factor": 1
    });
    std::fs::write(p("config.json"), config.to_string()).unwrap();
    let out = phenopt(&[
        "run",
        "--config",
        &p("config.json").display().to_string(),
        "--seed",
        "11",
        "--out",
        &p("results").display().to_string(),
    ]);
    assert_ok(&out, "run");
    for file in ["report.json", "indicators.csv", "summary.csv", "reference_front.csv"] {
        assert!(p("results").join(file).exists(), "{file} missing");
    }
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(p("results").join("report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 4);
    assert_eq!(report["failures"].as_array().unwrap().len(), 0);
    for cell in report["cells"].as_array().unwrap() {
        assert_eq!(cell["budget"]["total"], cell["expected_budget"]);
        let archive = p("results").join(cell["archive_file"].as_str().unwrap());
        assert!(archive.exists());
    }
}
