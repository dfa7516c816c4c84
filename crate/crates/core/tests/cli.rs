use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn chemopulse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chemopulse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_run_overrides() -> Vec<&'static str> {
    vec![
        "--override",
        "grid.length=40",
        "--override",
        "grid.n_cells=200",
        "--override",
        "solver.t_end=30",
        "--override",
        "solver.snapshot_every=300",
    ]
}

#[test]
fn speed_writes_analytic_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("speed");
    let o = chemopulse(&["speed", "--preset", "fig3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("speed.toml")).unwrap();
    let table: toml::Table = text.parse().unwrap();
    let sigma = table["sigma"].as_float().unwrap();
    assert!(sigma > 0.43 && sigma < 0.44, "{sigma}");
    assert!(table["lambda_minus"].as_float().unwrap() > 0.0);
    assert!(table["lambda_plus"].as_float().unwrap() < 0.0);
}

#[test]
fn simulate_then_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let mut args = vec!["simulate", "--preset", "fig3", "--out", out_s];
    args.extend(small_run_overrides());
    let o = chemopulse(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let index = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let rows: Vec<&str> = index.lines().collect();
    assert_eq!(rows[0], "step,t,file");
    assert_eq!(rows.len(), 1 + 11);
    let first = fs::read_to_string(out.join("snapshot_00000000.csv")).unwrap();
    assert!(first.starts_with("x,rho,S,N\n"));
    assert_eq!(first.lines().count(), 201);

    let summary: toml::Table = fs::read_to_string(out.join("summary.toml")).unwrap().parse().unwrap();
    let drift = summary["mass"]["max_relative_drift"].as_float().unwrap();
    assert!(drift < 1e-12, "{drift}");
    assert!(summary.contains_key("analytic"));

    let mut args = vec!["fit", "--preset", "fig3", "--out", out_s];
    args.extend(small_run_overrides());
    let o = chemopulse(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit: toml::Table = fs::read_to_string(out.join("fit.toml")).unwrap().parse().unwrap();
    assert_eq!(fit["mass"], summary["mass"]);
}

#[test]
fn unknown_key_in_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[params]\nchi_s = 1.0\ndetla = 0.1\n").unwrap();
    let o = chemopulse(&["speed", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(":3:"), "{err}");
    assert!(err.contains("detla"), "{err}");
}

#[test]
fn invalid_override_exits_with_config_code() {
    let o = chemopulse(&["speed", "--preset", "fig3", "--override", "params.mass=-2"]);
    assert_eq!(o.status.code(), Some(1));
    let o = chemopulse(&["speed", "--preset", "nope"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = chemopulse(&["speed", "--preset", "fig3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn numerical_failure_exits_with_numerical_code() {
    // dt far above the advective limit
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cfl");
    let o = chemopulse(&[
        "simulate",
        "--preset",
        "fig3",
        "--out",
        out.to_str().unwrap(),
        "--override",
        "solver.dt=1.0",
        "--override",
        "solver.t_end=5",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

fn sweep_rows(dir: &Path, workers: &str) -> Vec<String> {
    let cfg = dir.join("sweep.toml");
    fs::write(
        &cfg,
        "mode = \"sweep\"\n\
         [grid]\nlength = 40.0\nn_cells = 200\n\
         [solver]\nt_end = 20.0\nsnapshot_every = 200\n\
         [out]\ncsv = false\n\
         [[sweep]]\nname = \"response.delta\"\nvalues = [1e-3, 1e-2, 1e-1]\n",
    )
    .unwrap();
    let out = dir.join(format!("out_{workers}"));
    let o = chemopulse(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--workers",
        workers,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::read_to_string(out.join("sweep.csv"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn sweep_rows_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let one = sweep_rows(dir.path(), "1");
    let three = sweep_rows(dir.path(), "3");
    assert_eq!(one.len(), 4);
    assert!(one[0].starts_with("index,response.delta,"));
    assert_eq!(one, three);
}

#[test]
fn cluster_and_stability_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let o = chemopulse(&["cluster", "--preset", "cluster", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let t: toml::Table = fs::read_to_string(out.join("cluster.toml")).unwrap().parse().unwrap();
    assert_eq!(t["lambda"].as_float(), Some(1.0));
    assert_eq!(t["rho0"].as_float(), Some(0.5));

    let out = dir.path().join("s");
    let o = chemopulse(&[
        "stability",
        "--preset",
        "fig4",
        "--out",
        out.to_str().unwrap(),
        "--override",
        "params.mass=0.5",
    ]);
    assert!(o.status.success());
    let t: toml::Table = fs::read_to_string(out.join("stability.toml")).unwrap().parse().unwrap();
    assert_eq!(t["stable"].as_bool(), Some(true));

    // bivaluated response has no stiffness scale
    let o = chemopulse(&["stability", "--preset", "cluster", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn kinetic_mode_writes_tumbling_rates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k");
    let o = chemopulse(&[
        "kinetic",
        "--preset",
        "fig3",
        "--out",
        out.to_str().unwrap(),
        "--override",
        "grid.length=20",
        "--override",
        "grid.n_cells=100",
        "--override",
        "kinetic.t_end=1",
        "--override",
        "kinetic.velocity_nodes=8",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("tumbling.csv")).unwrap();
    assert!(text.starts_with("x,left,right\n"));
    assert_eq!(text.lines().count(), 100);
    let summary: toml::Table = fs::read_to_string(out.join("summary.toml")).unwrap().parse().unwrap();
    assert!(summary["min_distribution"].as_float().unwrap() >= -1e-13);
}
