use std::fs;
use std::process::{Command, Output};

use seedbank::report::Report;

fn seedbank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seedbank"))
        .args(args)
        .output()
        .expect("seedbank binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn tmp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("seedbank-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn sampling_law_for_two_blocks() {
    let o = seedbank(&["sampling", "--n", "2", "--k", "1", "--law"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<_> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    let p: Vec<f64> = rows.iter().map(|r| r.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!((p[0] - 2.0 / 3.0).abs() < 1e-12 && (p[1] - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn simulate_columns_and_thread_independence() {
    let args = ["simulate", "--n", "20", "--reps", "50", "--seed", "11", "--mu", "0.5"];
    let one = seedbank(&[&args[..], &["--threads", "1"]].concat());
    let two = seedbank(&[&args[..], &["--threads", "2"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, two.stdout);
    let text = stdout(&one);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "replicate,gamma,theta,sigma,n_at_gamma,n_at_theta,m_at_theta,sup_seeds,A,I,L,S_active,S_inactive"
    );
    assert_eq!(lines.count(), 50);
}

#[test]
fn config_file_and_flag_precedence() {
    let cfg = tmp("run.cfg");
    fs::write(&cfg, "# campaign\nn = 5\nreps = 3\nseed = 9\nformat = json\n").unwrap();
    let path = cfg.to_str().unwrap();
    let from_file = seedbank(&["simulate", "--config", path]);
    assert!(from_file.status.success());
    assert!(stdout(&from_file).trim_start().starts_with('['));
    let overridden = seedbank(&["simulate", "--config", path, "--format", "csv", "--reps", "4"]);
    assert_eq!(stdout(&overridden).lines().count(), 5);

    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(seedbank(&["simulate", "--config", path]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        &["simulate", "--n", "0"][..],
        &["simulate", "--n", "5", "--c1", "-1"],
        &["simulate", "--n", "5", "--stop", "sometime"],
        &["exact", "--n", "6000"],
        &["sampling", "--n", "9"],
        &["verify", "--only", "nothing"],
    ] {
        assert_eq!(seedbank(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn trajectory_and_exact_outputs() {
    let traj = tmp("traj.csv");
    let o = seedbank(&[
        "simulate", "--n", "10", "--reps", "1", "--trajectory", traj.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(&traj).unwrap();
    assert!(text.starts_with("time,event,plants,seeds\n0,start,10,0\n"));
    assert!(text.trim_end().ends_with(",1,0"));

    let o = seedbank(&["exact", "--n-grid", "2,30", "--format", "json"]);
    assert!(o.status.success());
    let report = Report::from_json(std::str::from_utf8(&o.stdout).unwrap()).unwrap();
    let e_a = report
        .records
        .iter()
        .find(|r| r.quantity == "E_A" && r.n == Some(2))
        .unwrap();
    assert!((e_a.estimate - 4.0).abs() < 1e-12, "{}", e_a.estimate);
}
