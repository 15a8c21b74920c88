use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use tensor_fen::grid::TensorShape;
use tensor_fen::selection::{select_cutoff, FitResult};
use tensor_fen::spline::SplineBasis;
use tensor_fen_cli::io::{self, FitMeta};

fn tfen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfen")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, setting: &str, n: &str, seed: &str, shape: &str) -> Output {
    tfen(&["simulate", "--setting", setting, "--n", n, "--seed", seed, "--shape", shape, "--out", path(dir)])
}

const SMALL_GRIDS: &str = "# tiny run\np0_scale = 0.5, 5\nr = 1, 0\nrho = 0.1 1\niters = 600\n";

fn tune_fit(data: &Path, out: &Path, grids: &Path, extra: &[&str]) -> Output {
    let x = data.join("x.txt");
    let y = data.join("y.txt");
    let mut args = vec![
        "tune-fit", "--x", path(&x), "--y", path(&y), "--shape", "3x3", "--grids-file", path(grids), "--seed", "5",
        "--out", path(out),
    ];
    args.extend_from_slice(extra);
    tfen(&args)
}

#[test]
fn simulate_is_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(simulate(&a, "2", "40", "11", "6x5").status.success());
    assert!(simulate(&b, "2", "40", "11", "6x5").status.success());
    for f in ["x.txt", "y.txt", "truth.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let x = fs::read_to_string(a.join("x.txt")).unwrap();
    let mut lines = x.lines();
    assert_eq!(lines.next().unwrap(), "40 6 5");
    assert!(lines.all(|l| l.split_whitespace().count() == 30));
    assert_eq!(fs::read_to_string(a.join("y.txt")).unwrap().lines().count(), 40);
}

#[test]
fn tensor_files_are_row_major_on_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let shape = TensorShape::new(vec![2, 3]).unwrap();
    // Column-major vectorization: x[i + 2 j] = 10 i + j.
    let x: Vec<f64> = (0..6).map(|t| (10 * (t % 2) + t / 2) as f64).collect();
    let file = tmp.path().join("x.txt");
    io::write_tensors(&file, &shape, &x).unwrap();
    let text = fs::read_to_string(&file).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(row, vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
    let (back_shape, back) = io::read_tensors(&file).unwrap();
    assert_eq!((back_shape, back), (shape, x));
}

#[test]
fn truth_manifest_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(simulate(tmp.path(), "1", "5", "3", "5x5").status.success());
    let truth = io::read_truth(&tmp.path().join("truth.txt")).unwrap();
    assert_eq!(truth.shape.dims(), &[5, 5]);
    assert!(truth.fields.active.iter().any(|&a| a));
    let text = fs::read_to_string(tmp.path().join("truth.txt")).unwrap();
    assert!(text.contains("\nnoise_var ") && text.contains("\nmask\n"));
}

#[test]
fn bad_arguments_exit_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(simulate(tmp.path(), "12", "10", "1", "5x5").status.code(), Some(2));
    assert_eq!(simulate(tmp.path(), "1", "10", "1", "5x5x2").status.code(), Some(2));
    let missing = tmp.path().join("nope.txt");
    let out = tfen(&["tune-fit", "--x", path(&missing), "--y", path(&missing), "--seed", "1", "--out", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn settings_file_parsing() {
    use tensor_fen_cli::commands::parse_settings;
    let s = parse_settings(SMALL_GRIDS).unwrap();
    assert_eq!(s.p0_scale, Some(vec![0.5, 5.0]));
    assert_eq!(s.rho, Some(vec![0.1, 1.0]));
    assert_eq!(s.iters, Some(600));
    assert!(parse_settings("gamma = 1").is_err());
    assert!(parse_settings("p0 = 1\np0_scale = 2").is_err());
    assert!(parse_settings("iters = many").is_err());
    let cfg = parse_settings("p0 = 3, 30\niters = 100").unwrap().pipeline(1, false, false).unwrap();
    assert_eq!(cfg.grids.unwrap().p0, vec![3.0, 30.0]);
    assert!(parse_settings("iters = 100\nburn_in = 200").unwrap().pipeline(1, false, false).is_err());
}

#[test]
fn tiny_tune_fit_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let test = tmp.path().join("test");
    assert!(simulate(&data, "2", "60", "21", "3x3").status.success());
    assert!(simulate(&test, "2", "40", "21", "3x3").status.success());
    let grids = tmp.path().join("grids.txt");
    fs::write(&grids, SMALL_GRIDS).unwrap();

    let (fit1, fit2) = (tmp.path().join("fit1"), tmp.path().join("fit2"));
    let start = Instant::now();
    let out = tune_fit(&data, &fit1, &grids, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(start.elapsed() < Duration::from_secs(120));
    let out = tune_fit(&data, &fit2, &grids, &[]);
    assert!(out.status.success());
    assert_eq!(fs::read(fit1.join("beta.txt")).unwrap(), fs::read(fit2.join("beta.txt")).unwrap());
    assert_eq!(fs::read(fit1.join("fit.txt")).unwrap(), fs::read(fit2.join("fit.txt")).unwrap());

    // Two p0 values by two rho values, then two r values by two rho values.
    let table = fs::read_to_string(fit1.join("loss_table.txt")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "stage row col p0 r rho loss diverged");
    assert_eq!(table.lines().count(), 1 + 2 * 2 + 2 * 2);
    let inclusion = fs::read_to_string(fit1.join("inclusion.txt")).unwrap();
    assert_eq!(inclusion.lines().count(), 3);
    assert!(inclusion.lines().all(|l| l.split_whitespace().count() == 3));
    let fhat = fs::read_to_string(fit1.join("fhat.txt")).unwrap();
    assert_eq!(fhat.lines().count(), 1 + 101);
    let trace = fs::read_to_string(fit1.join("trace.txt")).unwrap();
    assert!(!trace.is_empty());

    let (fit, basis, _) = io::read_fit(&fit1.join("fit.txt")).unwrap();
    assert_eq!(fit.shape.dims(), &[3, 3]);
    assert_eq!(basis.dim(), fit.k);

    let rep = tmp.path().join("report");
    let out = tfen(&[
        "report", "--fit", path(&fit1.join("fit.txt")), "--truth", path(&data.join("truth.txt")),
        "--test-x", path(&test.join("x.txt")), "--test-y", path(&test.join("y.txt")), "--out", path(&rep),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(rep.join("metrics.txt")).unwrap();
    let keys: Vec<&str> = metrics.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(keys, ["mse", "rmse", "tpr", "tnr", "rpe"]);
    let heat = fs::read_to_string(rep.join("norm_heatmap.txt")).unwrap();
    assert_eq!(heat.lines().count(), 3);

    // Against itself the fit has no function error and recovers its own support.
    let self_rep = tmp.path().join("self");
    let out = tfen(&[
        "report", "--fit", path(&fit1.join("fit.txt")), "--truth", path(&fit1.join("fit.txt")),
        "--test-x", path(&test.join("x.txt")), "--test-y", path(&test.join("y.txt")), "--out", path(&self_rep),
    ]);
    assert!(out.status.success());
    let vals: Vec<f64> = fs::read_to_string(self_rep.join("metrics.txt"))
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(&vals[..4], &[0.0, 0.0, 1.0, 1.0]);
}

#[test]
fn parallel_mode_reproduces_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(simulate(&data, "1", "60", "4", "3x3").status.success());
    let grids = tmp.path().join("grids.txt");
    fs::write(&grids, SMALL_GRIDS).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(tune_fit(&data, &a, &grids, &["--jobs", "2"]).status.success());
    assert!(tune_fit(&data, &b, &grids, &["--jobs", "3", "--pooled"]).status.success());
    assert_eq!(fs::read(a.join("loss_table.txt")).unwrap(), fs::read(b.join("loss_table.txt")).unwrap());
    let calib = fs::read_to_string(b.join("calibration.txt")).unwrap();
    assert!(calib.contains("pooled 1"));
}

fn zero_fit(shape: &TensorShape, basis: &SplineBasis) -> FitResult {
    let p = shape.size();
    FitResult {
        shape: shape.clone(),
        k: basis.dim(),
        inclusion: vec![0.0; p],
        cutoff: select_cutoff(&vec![0.0; p]),
        active: vec![false; p],
        beta_hat: vec![0.0; p * basis.dim()],
        mu_hat: 0.0,
        y_mean: 0.0,
        y_sd: 1.0,
    }
}

#[test]
fn report_with_empty_active_set_and_shape_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(simulate(&data, "2", "30", "8", "4x4").status.success());
    let basis = SplineBasis::with_knots(4, vec![0.5], 1e-4).unwrap();
    let meta = FitMeta { eps0: 0.1, lambda_u: 1.0, p0: 1.0, r: 1.0, rho: 1.0 };
    let fit_file = tmp.path().join("fit.txt");
    io::write_fit(&fit_file, &zero_fit(&TensorShape::new(vec![4, 4]).unwrap(), &basis), &basis, &meta).unwrap();
    let (back, back_basis, back_meta) = io::read_fit(&fit_file).unwrap();
    assert_eq!(back_meta, meta);
    assert_eq!(back.k, 4);
    assert_eq!(back_basis.transform(), basis.transform());

    let rep = tmp.path().join("rep");
    let args = |fit: &Path| {
        tfen(&[
            "report", "--fit", path(fit), "--truth", path(&data.join("truth.txt")),
            "--test-x", path(&data.join("x.txt")), "--test-y", path(&data.join("y.txt")), "--out", path(&rep),
        ])
    };
    assert!(args(&fit_file).status.success());
    let metrics = fs::read_to_string(rep.join("metrics.txt")).unwrap();
    let tpr: f64 = metrics.lines().nth(2).unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    assert_eq!(tpr, 0.0);

    let wrong = tmp.path().join("wrong.txt");
    io::write_fit(&wrong, &zero_fit(&TensorShape::new(vec![2, 8]).unwrap(), &basis), &basis, &meta).unwrap();
    assert_eq!(args(&wrong).status.code(), Some(2));
}
