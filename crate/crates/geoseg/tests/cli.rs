use std::path::Path;
use std::process::Command;

use geoseg::grid::{BinaryMask, Grid2D};
use geoseg::io;

fn geoseg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geoseg"))
}

fn write_mask(path: &Path, f: impl Fn([f64; 2]) -> bool) {
    let g = Grid2D::pixels(20, 10).unwrap();
    io::save_mask(&BinaryMask::from_fn(g, f), path).unwrap();
}

#[test]
fn eval_prints_six_decimals() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c, d) = (dir.path().join("a.pgm"), dir.path().join("b.pgm"), dir.path().join("c.pgm"), dir.path().join("d.pgm"));
    write_mask(&a, |p| p[0] < 10.0);
    write_mask(&b, |p| p[0] >= 10.0);
    write_mask(&c, |_| true);
    io::save_mask(&BinaryMask::empty(Grid2D::pixels(5, 5).unwrap()), &d).unwrap();
    let run = |x: &Path, y: &Path| {
        let o = geoseg().arg("eval").arg(x).arg(y).output().unwrap();
        (o.status.code(), String::from_utf8(o.stdout).unwrap())
    };
    assert_eq!(run(&a, &a), (Some(0), "1.000000\n".into()));
    assert_eq!(run(&a, &b), (Some(0), "0.000000\n".into()));
    assert_eq!(run(&a, &c), (Some(0), "0.500000\n".into()));
    assert_eq!(run(&a, &d).0, Some(3));
}

#[test]
fn segment_fixture_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = geoseg().args(["--make-fixture", "disk", "--fixture-seed", "2", "--fixture-dir"]).arg(dir.path()).output().unwrap();
    assert!(o.status.success());
    let manifest = dir.path().join("manifest.toml");

    let o = geoseg().arg("segment").arg(&manifest).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in ["iter000.contour.json", "iter001.contour.json", "final.contour.json", "final.mask.pgm", "energy.csv", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(report["jaccard"].as_f64().unwrap() >= 0.97, "{report}");
    assert_eq!(report["self_intersections"], 0);

    let o = geoseg().arg("segment").arg(&manifest).args(["--max-iters", "1", "--out"]).arg(dir.path().join("one")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    std::fs::remove_file(dir.path().join("image.png")).unwrap();
    let o = geoseg().arg("segment").arg(&manifest).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn segment_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    geoseg().args(["--make-fixture", "disk", "--fixture-dir"]).arg(dir.path()).output().unwrap();
    let manifest = dir.path().join("manifest.toml");
    for name in ["r1", "r2"] {
        let o = geoseg().arg("segment").arg(&manifest).arg("--out").arg(dir.path().join(name)).output().unwrap();
        assert_eq!(o.status.code(), Some(0));
    }
    let mut names: Vec<_> = std::fs::read_dir(dir.path().join("r1")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names {
        let a = std::fs::read(dir.path().join("r1").join(&n)).unwrap();
        let b = std::fs::read(dir.path().join("r2").join(&n)).unwrap();
        assert_eq!(a, b, "{n:?}");
    }
}

#[test]
fn distance_writes_field_path_and_picture() {
    let dir = tempfile::tempdir().unwrap();
    let o = geoseg()
        .args(["distance", "--fig2", "--a1", "0.95", "--a2", "0", "--size", "101", "101", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let field = io::load_scalar(&dir.path().join("distance.rsf1")).unwrap();
    assert_eq!(field.grid.width(), 101);
    let path = io::load_contour(&dir.path().join("geodesic.json")).unwrap();
    assert!(path.len() > 10);
    assert!(io::load_image(&dir.path().join("levels.png")).unwrap().channel_count() == 3);

    let o = geoseg().args(["distance", "--fig2", "--a1", "0.3", "--a2", "0.99", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    let o = geoseg().args(["distance", "--metric", "randers", "--omega", "-0.5", "0", "--size", "41", "41", "--out"]).arg(dir.path()).output().unwrap();
    assert!(o.status.success());
}

#[test]
fn bench_summary_and_reproducibility() {
    let run = || {
        let o = geoseg().args(["bench", "--runs", "2", "--seed", "5"]).output().unwrap();
        assert!(o.status.success());
        String::from_utf8(o.stdout).unwrap()
    };
    let a = run();
    assert!(a.starts_with("image,runs,failed,Mean,Max,Min,Std\ndisk,2,0,"), "{a}");
    assert_eq!(a, run());
    let one = geoseg().args(["bench", "--runs", "1"]).output().unwrap();
    assert!(String::from_utf8(one.stdout).unwrap().trim_end().ends_with(",0.000000"));
}

#[test]
fn dump_config_parses_back() {
    let o = geoseg().arg("--dump-config").output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg: geoseg::evolve::SegmentationConfig = toml::from_str(&text).unwrap();
    assert_eq!(cfg, geoseg::evolve::SegmentationConfig::default());
}
