use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qsm_pdip::volume::{load_volume, save_volume};
use qsm_pdip::Volume;

const BIN: &str = env!("CARGO_BIN_EXE_qsm-pdip");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.ini");
    fs::write(&path, text).unwrap();
    path
}

const MINIMAL: &str = "seed = 5\n[phantom]\ndims = 16\nsphere = 8,8,8,3,0.4\n";

fn bytes(path: &Path, ext: &str) -> Vec<u8> {
    fs::read(path.with_extension(ext)).unwrap()
}

#[test]
fn phantom_writes_volume_and_mask_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["phantom", "--config", p(&cfg), "--out", p(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(dir.path().join("a_mask.hdr").exists());
    assert_eq!(bytes(&a, "f32"), bytes(&b, "f32"));
    let chi = load_volume(&a).unwrap();
    assert_eq!(chi.dims(), [16; 3]);
    assert!(chi.data().contains(&(0.4f32 as f64)));
}

#[test]
fn malformed_key_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[phantom]\ndims = 16\nsphere = 8,8,8,abc,0.4\n");
    let o = run(&["phantom", "--config", p(&cfg), "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("phantom.sphere"));
    let cfg = write_config(dir.path(), "[phantom]\ndims = 16\nradius = abc\n");
    let o = run(&["phantom", "--config", p(&cfg), "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn forward_of_zero_is_zero_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero");
    save_volume(&Volume::zeros([8; 3]), &zero).unwrap();
    let phi = dir.path().join("phi");
    let o = run(&["forward", "--input", p(&zero), "--sigma", "0", "--out", p(&phi)]);
    assert_eq!(code(&o), 0);
    assert!(load_volume(&phi).unwrap().data().iter().all(|&v| v == 0.0));

    let n1 = dir.path().join("n1");
    let n2 = dir.path().join("n2");
    for out in [&n1, &n2] {
        let o = run(&["forward", "--input", p(&zero), "--sigma", "0.01", "--seed", "3", "--out", p(out)]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(bytes(&n1, "f32"), bytes(&n2, "f32"));
    let meta = fs::read_to_string(dir.path().join("n1.run")).unwrap();
    assert!(meta.contains("generator=chacha8"));
}

#[test]
fn forward_missing_input_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["forward", "--input", p(&dir.path().join("nope")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn recon_methods_and_history_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 1\n[phantom]\ndims = 16\nsphere = 8,8,8,3,0.4\n\
         [tv]\niterations = 20\n[tgv]\niterations = 20\n\
         [pdip]\npatch = 8\nstride = 8\nouter_iters = 2\ninner_epochs = 1\n[net]\nlevels = 1\nbase_channels = 2\n",
    );
    let chi = dir.path().join("chi");
    let phi = dir.path().join("phi");
    assert_eq!(code(&run(&["phantom", "--config", p(&cfg), "--out", p(&chi)])), 0);
    assert_eq!(code(&run(&["forward", "--config", p(&cfg), "--input", p(&chi), "--out", p(&phi)])), 0);

    // closure: Φ is consumed without conversion
    let tkd = dir.path().join("tkd");
    let o = run(&["recon", "tkd", "--config", p(&cfg), "--input", p(&phi), "--out", p(&tkd)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("tkd.history.csv").exists());

    for m in ["tv", "tgv"] {
        let out = dir.path().join(m);
        let o = run(&["recon", m, "--config", p(&cfg), "--input", p(&phi), "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let h = fs::read_to_string(dir.path().join(format!("{m}.history.csv"))).unwrap();
        assert!(h.starts_with("iter,objective\n"));
    }

    let runs = ["p1", "p2"].map(|n| dir.path().join(n));
    for out in &runs {
        let o = run(&["recon", "pdip", "--config", p(&cfg), "--input", p(&phi), "--out", p(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(bytes(&runs[0], "f32"), bytes(&runs[1], "f32"));
    let h = fs::read_to_string(dir.path().join("p1.history.csv")).unwrap();
    assert!(h.starts_with("iter,objective,rel_change\n"));
    assert_eq!(h.lines().count(), 3);

    // parameter search through --gt/--mask
    let out = dir.path().join("tkd_search");
    let mask = dir.path().join("chi_mask");
    let o = run(&[
        "recon", "tkd", "--config", p(&cfg), "--set", "tkd.threshold_grid=0.1,0.2,0.3",
        "--input", p(&phi), "--gt", p(&chi), "--mask", p(&mask), "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("tkd_search.search.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn unknown_method_is_usage_error() {
    let o = run(&["recon", "xyz", "--input", "a", "--out", "b"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("possible values: tkd, tv, tgv, pdip"));
}

#[test]
fn metrics_rows_follow_input_order() {
    let dir = tempfile::tempdir().unwrap();
    let gt = Volume::from_fn([8; 3], |x, y, z| (x + 2 * y + 3 * z) as f64 / 10.0);
    let gt_path = dir.path().join("gt");
    save_volume(&gt, &gt_path).unwrap();
    let mask_path = dir.path().join("mask");
    save_volume(&Volume::filled([8; 3], 1.0), &mask_path).unwrap();
    let off = dir.path().join("off");
    save_volume(&gt.like(gt.data().iter().map(|v| v + 0.5).collect()).unwrap(), &off).unwrap();

    let csv = dir.path().join("m.csv");
    let self_arg = format!("self={}", p(&gt_path));
    let off_arg = format!("off={}", p(&off));
    let o = run(&[
        "metrics", "--gt", p(&gt_path), "--mask", p(&mask_path), "--out", p(&csv), &self_arg, &off_arg,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,rmse,ssim,psnr");
    assert_eq!(lines[1], "self,0.00,1.0000,999.00");
    assert!(lines[2].starts_with("off,"));
    assert_eq!(lines.len(), 3);

    let o = run(&[
        "metrics", "--gt", p(&gt_path), "--mask", p(&dir.path().join("missing")), "--out", p(&csv), &self_arg,
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn metrics_dims_mismatch_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    save_volume(&Volume::filled([8; 3], 1.0), &gt).unwrap();
    let small = dir.path().join("small");
    save_volume(&Volume::filled([4; 3], 1.0), &small).unwrap();
    let o = run(&["metrics", "--gt", p(&gt), "--mask", p(&gt), "--out", p(&dir.path().join("m.csv")), p(&small)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn slice_export_and_range_check() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v");
    save_volume(&Volume::from_fn([4, 3, 2], |x, _, _| x as f64), &v).unwrap();
    let img = dir.path().join("s.pgm");
    let o = run(&["slice", "--input", p(&v), "--axis", "z", "--index", "1", "--window", "0,3", "--out", p(&img)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let pgm = fs::read(&img).unwrap();
    assert!(pgm.starts_with(b"P5\n4 3\n255\n"));
    assert_eq!(&pgm[pgm.len() - 4..], &[0, 85, 170, 255]);
    let o = run(&["slice", "--input", p(&v), "--axis", "z", "--index", "2", "--window", "0,3", "--out", p(&img)]);
    assert_eq!(code(&o), 1);
}
