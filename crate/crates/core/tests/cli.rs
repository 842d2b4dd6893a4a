use std::path::Path;

use adaptive_pp::cli::run;
use adaptive_pp::data::{gen_spatial, gen_toy, load_csv, save_csv, CsvSchema, SpatialSpec};
use adaptive_pp::kernel::KernelSpec;
use adaptive_pp::lowrank::pivoted_ichol;
use adaptive_pp::report::{to_json, FactorReport};

fn call(args: &[&str]) -> (i32, Vec<u8>, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(
        std::iter::once("adaptive-pp").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (code, out, String::from_utf8(err).unwrap())
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_toy(dir: &Path, n: usize, p: usize) -> std::path::PathBuf {
    let path = dir.join("toy.csv");
    save_csv(&gen_toy(n, p, 3).unwrap(), &path).unwrap();
    path
}

#[test]
fn factor_json_matches_library_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy(dir.path(), 50, 2);
    let (code, out, _) = call(&[
        "factor", "--data", path_str(&data), "--set", "beta=2.5,1.5", "--set", "tol_sq=1e-4",
    ]);
    assert_eq!(code, 0);

    let ds = load_csv(&data, &CsvSchema::default()).unwrap();
    let k = KernelSpec::ard_se(vec![2.5, 1.5]).unwrap();
    let f = pivoted_ichol(&k, &ds.pts, 0.01, 50).unwrap();
    let expected = to_json(&FactorReport::new(&f)).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), expected);
}

#[test]
fn bound_example_prints_zero() {
    let (code, out, _) = call(&["bound", "--eps", "1", "--kappa", "0", "--set-size", "10"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(v["bound"].as_f64(), Some(0.0));
}

#[test]
fn input_errors_exit_one() {
    let (code, out, err) = call(&["knots", "--data", "/no/such/file.csv", "--set", "beta=1"]);
    assert_eq!(code, 1);
    assert!(out.is_empty());
    assert!(!err.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let data = write_toy(dir.path(), 10, 1);
    assert_eq!(call(&["knots", "--data", path_str(&data)]).0, 1, "missing beta");
    assert_eq!(
        call(&["knots", "--data", path_str(&data), "--set", "colour=red"]).0,
        1
    );
    assert_eq!(call(&["fit", "--data", path_str(&data), "--set", "beta=1"]).0, 1, "no sigma2");
    assert_eq!(call(&["knots", "--bogus"]).0, 1);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,y\n0.1,1\nNA,2\n").unwrap();
    let (code, _, err) = call(&["knots", "--data", path_str(&bad), "--set", "beta=1"]);
    assert_eq!(code, 1);
    assert!(err.contains("row 3") && err.contains("x1"), "{err}");
}

#[test]
fn numerical_failure_exits_two() {
    // a subnormal noise variance overflows the low-rank core
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy(dir.path(), 30, 1);
    let (code, _, err) = call(&[
        "fit", "--data", path_str(&data), "--set", "beta=1", "--set", "sigma2=1e-320",
    ]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn knots_csv_lists_selected_points() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy(dir.path(), 40, 2);
    let out_path = dir.path().join("knots.csv");
    let (code, out, err) = call(&[
        "knots", "--data", path_str(&data), "--set", "beta=3", "--out", path_str(&out_path),
    ]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    assert!(err.contains("m = "));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["selection_order", "original_index", "x1", "x2", "residual_sd_before_selection"]
    );
    let sds: Vec<f64> = rdr
        .records()
        .map(|r| r.unwrap()[4].parse().unwrap())
        .collect();
    assert!(sds.windows(2).all(|w| w[0] >= w[1]), "greedy order");
}

#[test]
fn fit_predict_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy(dir.path(), 60, 1);
    let cfg = dir.path().join("model.cfg");
    std::fs::write(&cfg, "kernel = ard_se\nbeta = 4\nsigma2 = 0.01\ntol_sq = 1e-6\n").unwrap();
    let (code, out, _) = call(&["fit", "--data", path_str(&data), "--config", path_str(&cfg)]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_slice(&out).unwrap();
    for key in ["schema_version", "loglik", "rank", "kappa_S"] {
        assert!(v.get(key).is_some(), "{key}");
    }

    let at = dir.path().join("at.csv");
    std::fs::write(&at, "id,x1\nleft,0.25\nright,0.75\n").unwrap();
    let (code, out, err) = call(&[
        "predict", "--data", path_str(&data), "--config", path_str(&cfg), "--at", path_str(&at),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = String::from_utf8(out).unwrap();
    let rows: Vec<Vec<String>> = csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    // 2 sin(2 pi x) is 2 at 1/4 and -2 at 3/4
    let m0: f64 = rows[0][1].parse().unwrap();
    let m1: f64 = rows[1][1].parse().unwrap();
    assert!((m0 - 2.0).abs() < 0.2 && (m1 + 2.0).abs() < 0.2, "{m0} {m1}");

    let rows_path = dir.path().join("rows.csv");
    let (code, _, _) = call(&[
        "factor", "--data", path_str(&data), "--config", path_str(&cfg), "--rows",
        path_str(&rows_path),
    ]);
    assert_eq!(code, 0);
    let rows_text = std::fs::read_to_string(rows_path).unwrap();
    assert!(rows_text.starts_with("row,s0,s1,"));
}

#[test]
fn predict_reports_components_for_sum_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let d = gen_spatial(120, 4, &SpatialSpec::default()).unwrap();
    let data = dir.path().join("spatial.csv");
    save_csv(&d.dataset, &data).unwrap();
    let at = dir.path().join("at.csv");
    save_csv(&d.dataset.select(&[0, 1, 2]), &at).unwrap();
    let cfg = dir.path().join("vc.cfg");
    std::fs::write(
        &cfg,
        "kernel = varying_coefficient\ncovariates = z1, z2\ntau = 0.5, 0.5, 0.5\n\
         beta = 0.3, 0.3, 0.3\nsigma2 = 0.01\nmu = 0\ntau2 = 1\n",
    )
    .unwrap();
    let (code, out, err) = call(&[
        "predict", "--data", path_str(&data), "--config", path_str(&cfg), "--at", path_str(&at),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = String::from_utf8(out).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "id,mean,sd,omega0_mean,omega0_sd,omega0_effect,omega1_mean,omega1_sd,omega1_effect,\
         omega2_mean,omega2_sd,omega2_effect"
    );
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn seeded_commands_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy(dir.path(), 40, 2);
    let cfg = dir.path().join("s.cfg");
    std::fs::write(
        &cfg,
        "beta = 1, 0.1\nsigma2 = 0.05\nsweeps = 60\nburn_in = 20\nsteps = 0.2\ntol = 0.01\n",
    )
    .unwrap();
    let summary = dir.path().join("summary.json");
    let args = [
        "sample", "--data", path_str(&data), "--config", path_str(&cfg), "--seed", "11",
        "--summary", path_str(&summary),
    ];
    let (code, a, err) = call(&args);
    assert_eq!(code, 0, "{err}");
    let first_summary = std::fs::read(&summary).unwrap();
    let (_, b, _) = call(&args);
    assert_eq!(a, b);
    assert_eq!(first_summary, std::fs::read(&summary).unwrap());
    let (_, c, _) = call(&[
        "sample", "--data", path_str(&data), "--config", path_str(&cfg), "--seed", "12",
    ]);
    assert_ne!(a, c);

    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("sweep,beta_1,beta_2,sigma2,loglik,m,accepted\n"));
    assert_eq!(text.lines().count(), 61);
    let s: serde_json::Value = serde_json::from_slice(&first_summary).unwrap();
    assert_eq!(s["schema_version"], 1);
    let rate = s["acceptance_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));

    let sim = [
        "simulate", "--data", path_str(&data), "--set", "beta=2", "--set", "tol=0.2", "--draws",
        "5", "--seed", "3",
    ];
    let (code, x, _) = call(&sim);
    assert_eq!(code, 0);
    assert_eq!(x, call(&sim).1);
    let text = String::from_utf8(x).unwrap();
    assert!(text.starts_with("draw,index,omega,nu,xi,xi_tilde\n"));
    assert_eq!(text.lines().count(), 1 + 5 * 40);
}
