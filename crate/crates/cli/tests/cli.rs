use std::process::{Command, Output};

fn relayfb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relayfb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Parses the first CSV table of the output into header-keyed rows.
fn rows(text: &str) -> Vec<std::collections::HashMap<String, String>> {
    let table = text.split("\n\n").next().unwrap();
    let mut reader = csv::Reader::from_reader(table.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    reader
        .records()
        .map(|r| {
            header
                .iter()
                .cloned()
                .zip(r.unwrap().iter().map(String::from))
                .collect()
        })
        .collect()
}

fn number(row: &std::collections::HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

#[test]
fn sweep_reproduces_box_corners_and_intersection() {
    let out = relayfb(&["sweep", "--p-grid", "0:1:11", "--p-bar-grid", "0:1:5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("p,p_bar_sd,relays,expected_phases\n"));
    assert!(!text.contains('\r'));
    let table = rows(&text);
    assert_eq!(table.len(), 55);
    for row in &table {
        let e = number(row, "expected_phases");
        assert!((1.0..=2.0).contains(&e));
        if number(row, "p") == 0.5 {
            assert_eq!(row["expected_phases"], "1.50000000000");
        }
    }
    let at = |p: f64, pb: f64| {
        table
            .iter()
            .find(|r| number(r, "p") == p && number(r, "p_bar_sd") == pb)
            .map(|r| number(r, "expected_phases"))
            .unwrap()
    };
    assert_eq!(at(1.0, 1.0), 2.0);
    assert_eq!(at(1.0, 0.0), 1.0);
}

#[test]
fn sweep_many_relays_worthless_feedback() {
    let out = relayfb(&[
        "sweep",
        "--p-grid",
        "0.5",
        "--p-bar-grid",
        "0.1,0.9",
        "--relays",
        "5",
    ]);
    let table = rows(&stdout(&out));
    assert!(table
        .iter()
        .all(|r| r["expected_phases"] == "1.96875000000"));
}

#[test]
fn invalid_grid_is_a_usage_error() {
    let out = relayfb(&["sweep", "--p-grid", "0,1.5", "--p-bar-grid", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let out = relayfb(&["sweep", "--p-grid", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn phases_reports_all_routes() {
    let out = relayfb(&["phases", "--p", "0.8", "--p-bar-sd", "0.25"]);
    let row = &rows(&stdout(&out))[0];
    for key in [
        "expected_phases",
        "matrix_expected_phases",
        "tree_expected_phases",
    ] {
        assert_eq!(row[key], "1.35000000000");
    }
    let out = relayfb(&[
        "phases",
        "--p",
        "0.5",
        "--p-bar-sd",
        "0.6",
        "--relays",
        "2",
        "--profile",
        "0.2",
    ]);
    assert_eq!(
        rows(&stdout(&out))[0]["tree_expected_phases"],
        "1.75000000000"
    );
}

#[test]
fn capacity_rows() {
    let common = ["capacity", "--epsilon", "0.01", "--snr-db", "-10"];
    let rate = |extra: &[&str]| {
        let mut args = common.to_vec();
        args.extend_from_slice(extra);
        let out = relayfb(&args);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let row = rows(&stdout(&out)).remove(0);
        assert!(number(&row, "residual") <= 1e-10);
        number(&row, "rate")
    };
    // the direct link is reliable here, so losing feedback reliability costs rate
    assert!(rate(&["--p", "0.5"]) < rate(&["--p", "1"]));
    assert!(
        rate(&["--p", "0.9", "--strategy", "baf"]) >= rate(&["--p", "0.9", "--strategy", "df"])
    );
}

#[test]
fn capacity_rejects_degenerate_epsilon() {
    for eps in ["0", "1", "1.5"] {
        let out = relayfb(&["capacity", "--epsilon", eps, "--p", "0.9", "--snr", "1"]);
        assert_eq!(out.status.code(), Some(2));
        assert!(out.stdout.is_empty());
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn capacity_requires_one_snr_form() {
    let out = relayfb(&[
        "capacity",
        "--epsilon",
        "0.1",
        "--p",
        "0.9",
        "--snr",
        "1",
        "--snr-db",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = relayfb(&["capacity", "--epsilon", "0.1", "--p", "0.9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_summary_and_histogram() {
    let out = relayfb(&[
        "simulate",
        "--relays",
        "1",
        "--snr",
        "1",
        "--rate",
        "0.5",
        "--p",
        "0.5",
        "--blocks",
        "1000000",
        "--partitions",
        "4",
        "--seed",
        "12",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let summary = &rows(&text)[0];
    let mean = number(summary, "mean_phases");
    let se = number(summary, "phases_stderr");
    assert!((mean - 1.5).abs() <= 3.0 * se);
    assert!(number(summary, "z_score").abs() <= 3.0);

    let histogram = text.split("\n\n").nth(1).unwrap();
    let mut reader = csv::Reader::from_reader(histogram.as_bytes());
    assert_eq!(reader.headers().unwrap(), vec!["phases", "count"]);
    let total: u64 = reader
        .records()
        .map(|r| r.unwrap()[1].parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 1_000_000);
}

#[test]
fn simulate_closed_form_column_for_one_relay() {
    let out = relayfb(&[
        "simulate",
        "--snr",
        "2",
        "--var-sd",
        "0.6",
        "--var-sr",
        "1.4",
        "--var-rd",
        "0.9",
        "--rate",
        "0.35",
        "--p",
        "0.77",
        "--blocks",
        "1000000",
        "--partitions",
        "2",
        "--seed",
        "5",
    ]);
    let summary = &rows(&stdout(&out))[0];
    assert!(!summary["analytic_phases"].is_empty());
    assert!(number(summary, "z_score").abs() <= 3.0);
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let args = [
        "simulate",
        "--relays",
        "3",
        "--strategy",
        "df",
        "--snr",
        "0.5",
        "--rate",
        "0.3",
        "--p",
        "0.6",
        "--blocks",
        "50000",
        "--partitions",
        "4",
        "--seed",
        "9",
    ];
    let a = relayfb(&args);
    let b = relayfb(&args);
    assert_eq!(a.stdout, b.stdout);
    let mut other = args.to_vec();
    let last = other.len() - 1;
    other[last] = "10";
    assert_ne!(relayfb(&other).stdout, a.stdout);
}

#[test]
fn simulate_validates_relay_lists() {
    let out = relayfb(&[
        "simulate", "--relays", "2", "--var-sr", "1,2,3", "--snr", "1", "--rate", "0.3", "--p",
        "0.6",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = relayfb(&[
        "simulate", "--snr", "1", "--rate", "0.3", "--p", "0.6", "--blocks", "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    let out_path = dir.path().join("phases.csv");
    std::fs::write(
        &config,
        "# one relay point\np = 0.2\np_bar_sd = 0.25\nrelays = 1\n",
    )
    .unwrap();

    let out = relayfb(&[
        "phases",
        "--config",
        config.to_str().unwrap(),
        "--p",
        "0.8",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(&out_path).unwrap();
    let row = &rows(&written)[0];
    assert_eq!(row["p"], "0.800000000000");
    assert_eq!(row["expected_phases"], "1.35000000000");

    std::fs::write(&config, "p = 0.2\nbogus = 1\n").unwrap();
    let out = relayfb(&[
        "phases",
        "--config",
        config.to_str().unwrap(),
        "--p-bar-sd",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_seed_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.conf");
    std::fs::write(
        &config,
        "seed = 31\nsnr = 1\nrate = 0.4\np = 0.7\nblocks = 10000\n",
    )
    .unwrap();
    let from_file = relayfb(&["simulate", "--config", config.to_str().unwrap()]);
    let from_flags = relayfb(&[
        "simulate", "--seed", "31", "--snr", "1", "--rate", "0.4", "--p", "0.7", "--blocks",
        "10000",
    ]);
    assert!(from_file.status.success());
    assert_eq!(from_file.stdout, from_flags.stdout);
}
