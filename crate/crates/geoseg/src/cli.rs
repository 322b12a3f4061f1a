//! Batch front end: run manifests, run directories, distance maps,
//! evaluation and benchmarks. The `geoseg` binary is a thin layer over this.
//!
//! Exit codes: 0 converged, 2 stopped at `max_iters`, 3 input or I/O
//! error, 4 solver error.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eikonal::{fmm_solve, minimal_path, rotational_direction, mean_alignment, DistanceMap, FmmOptions, MetricField, Seed};
use crate::error::{Error, Result};
use crate::evolve::{jaccard, sample_landmarks, LandmarkSet, SegmentationConfig, Segmenter};
use crate::features::{edge_features, tensor_field, AppearanceModel};
use crate::fixtures::{make_fixture, FixtureKind};
use crate::geom::{Polyline, Vec2};
use crate::grid::{BinaryMask, Grid2D, Image};
use crate::io;

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_MAX_ITERS: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_SOLVER
    }
}

/// One segmentation run. Relative paths are taken from the manifest's
/// directory.
///
/// The initial contour comes from, in order: inline `landmarks`, a JSON
/// `landmarks_path`, `sample_landmarks = m` points drawn from the boundary
/// of `truth` with `seed`. Without landmarks, `contour` starts a
/// closed-geodesic run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub image: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<Vec<Vec2>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_landmarks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour: Option<PathBuf>,
    /// Ground-truth mask; adds a Jaccard score to the report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub config: SegmentationConfig,
}

impl RunManifest {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut m: RunManifest = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut m.image);
        fix(&mut m.output_dir);
        for p in [&mut m.landmarks_path, &mut m.contour, &mut m.truth].into_iter().flatten() {
            fix(p);
        }
        m.config.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// Written to `report.json` at the end of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub v: u32,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub energy: f64,
    pub landmarks: Vec<Vec2>,
    pub self_intersections: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jaccard: Option<f64>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            EXIT_CONVERGED
        } else {
            EXIT_MAX_ITERS
        }
    }
}

fn landmarks_for(m: &RunManifest, grid: Grid2D, truth: Option<&BinaryMask>) -> Result<Option<LandmarkSet>> {
    let points = if let Some(p) = &m.landmarks {
        p.clone()
    } else if let Some(path) = &m.landmarks_path {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
    } else if let Some(k) = m.sample_landmarks {
        let truth = truth.ok_or_else(|| Error::Config("sample_landmarks needs a truth mask".into()))?;
        sample_landmarks(&truth.boundary_contour()?, k, m.seed)?
    } else {
        return Ok(None);
    };
    LandmarkSet::new(points, grid).map(Some)
}

/// Runs a manifest and writes `iterNNN.contour.json`, `final.contour.json`,
/// `final.mask.pgm`, `energy.csv` and `report.json` to its output directory.
pub fn segment(m: &RunManifest) -> Result<RunReport> {
    let img = io::load_image(&m.image)?;
    let truth = m.truth.as_deref().map(io::load_mask).transpose()?;
    if let Some(t) = &truth {
        if t.grid != img.grid {
            return Err(Error::invalid("truth mask and image sizes differ"));
        }
    }
    let contour = m.contour.as_deref().map(io::load_contour).transpose()?;
    let lm = landmarks_for(m, img.grid, truth.as_ref())?;
    let mut seg = match (&lm, &contour) {
        (Some(lm), c) => Segmenter::landmarks(&img, lm, c.as_ref(), &m.config)?,
        (None, Some(c)) => Segmenter::circular(&img, c, None, &m.config)?,
        (None, None) => return Err(Error::Config("manifest needs landmarks or a contour".into())),
    };
    std::fs::create_dir_all(&m.output_dir)?;
    let out = |name: &str| m.output_dir.join(name);
    io::save_contour(&seg.state().contour, &out("iter000.contour.json"))?;
    let result = (|| -> Result<()> {
        while !seg.state().converged && seg.state().iteration < seg.config().max_iters {
            let r = seg.step()?;
            io::save_contour(&r.contour, &out(&format!("iter{:03}.contour.json", r.iteration)))?;
        }
        Ok(())
    })();
    std::fs::write(out("energy.csv"), seg.energy_csv())?;
    result?;
    let st = seg.state();
    io::save_contour(&st.contour, &out("final.contour.json"))?;
    io::save_mask(&st.mask, &out("final.mask.pgm"))?;
    let report = RunReport {
        v: 1,
        seed: m.seed,
        iterations: st.iteration,
        converged: st.converged,
        energy: st.energy,
        landmarks: lm.map(|l| l.points).unwrap_or_default(),
        self_intersections: st.contour.self_intersections(),
        jaccard: truth.as_ref().map(|t| jaccard(&st.mask, t)).transpose()?,
    };
    std::fs::write(out("report.json"), serde_json::to_string_pretty(&report).expect("report serializes"))?;
    Ok(report)
}

/// Metric families for [`distance`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MetricSpec {
    /// `sqrt(lambda1) |v|` from the image edges, or `|v|` without an image.
    Isotropic,
    /// Edge-aligned tensors from the image, or the identity.
    Riemannian,
    /// Riemannian part plus a constant drift.
    Randers { omega: Vec2 },
    /// `Id - a1^2 w w^T` and `a2 w`, `w` tangent to circles about the grid center.
    Rotational { a1: f64, a2: f64 },
}

#[derive(Clone, Debug)]
pub struct DistanceRequest {
    pub image: Option<Image>,
    /// Grid size when there is no image.
    pub size: (usize, usize),
    pub metric: MetricSpec,
    pub beta_data: f64,
    pub beta_aniso: f64,
    pub edge_sigma: f64,
    /// Defaults to the grid center, or a point on the circle of radius
    /// 0.35 * size for the rotational metric.
    pub source: Option<Vec2>,
    pub target: Option<Vec2>,
}

impl Default for DistanceRequest {
    fn default() -> Self {
        DistanceRequest {
            image: None,
            size: (201, 201),
            metric: MetricSpec::Isotropic,
            beta_data: 2.0,
            beta_aniso: 1.0,
            edge_sigma: 1.0,
            source: None,
            target: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DistanceOutput {
    pub map: DistanceMap,
    pub source: Vec2,
    pub path: Option<Polyline>,
    /// Mean of `<unit tangent, w>` along the path for the rotational metric.
    pub alignment: Option<f64>,
}

/// Grid center and the default source/target of the rotational demo: two
/// points 120 degrees apart on a circle around the center.
pub fn rotational_setup(grid: Grid2D) -> (Vec2, Vec2, Vec2) {
    let h = grid.spacing();
    let c = [(grid.width() - 1) as f64 * h / 2.0, (grid.height() - 1) as f64 * h / 2.0];
    let r = 0.35 * c[0].min(c[1]) * 2.0;
    let a = 2.0 * std::f64::consts::PI / 3.0;
    (c, [c[0] + r, c[1]], [c[0] + r * a.cos(), c[1] + r * a.sin()])
}

pub fn build_metric(req: &DistanceRequest) -> Result<MetricField> {
    let grid = match &req.image {
        Some(img) => img.grid,
        None => Grid2D::pixels(req.size.0, req.size.1)?,
    };
    let tensors = |aniso: f64| -> Result<Vec<_>> {
        Ok(match &req.image {
            Some(img) => tensor_field(&edge_features(img, req.edge_sigma)?, req.beta_data, aniso).values,
            None => vec![crate::randers::Sym2::scaled_identity(1.0); grid.len()],
        })
    };
    match req.metric {
        MetricSpec::Isotropic => MetricField::new(grid, tensors(0.0)?, vec![[0.0, 0.0]; grid.len()]),
        MetricSpec::Riemannian => MetricField::new(grid, tensors(req.beta_aniso)?, vec![[0.0, 0.0]; grid.len()]),
        MetricSpec::Randers { omega } => MetricField::new(grid, tensors(req.beta_aniso)?, vec![omega; grid.len()]),
        MetricSpec::Rotational { a1, a2 } => MetricField::rotational(grid, rotational_setup(grid).0, a1, a2),
    }
}

/// Distance map from the source and, with a target, the minimal path.
pub fn distance(req: &DistanceRequest) -> Result<DistanceOutput> {
    let metric = build_metric(req)?;
    let g = metric.grid;
    let (center, default_src, default_dst) = rotational_setup(g);
    let rotational = matches!(req.metric, MetricSpec::Rotational { .. });
    let source = req.source.unwrap_or(if rotational { default_src } else { center });
    let target = req.target.or(rotational.then_some(default_dst));
    let src_cell = g.nearest_cell(source).ok_or_else(|| Error::invalid("source is outside the grid"))?;
    let map = fmm_solve(&metric, &[Seed::at(src_cell)], &FmmOptions::default())?;
    let path = target.map(|t| minimal_path(&metric, source, t).map(|r| r.1)).transpose()?;
    let alignment = match (rotational, &path) {
        (true, Some(p)) => Some(mean_alignment(p, |q| rotational_direction(q, center))),
        _ => None,
    };
    Ok(DistanceOutput { map, source, path, alignment })
}

/// RGB picture of a distance map: gray background (or the image), red
/// level lines at `levels` equal steps, the path in blue.
pub fn level_set_image(map: &DistanceMap, background: Option<&Image>, path: Option<&Polyline>, levels: usize) -> Image {
    let g = map.grid;
    let top = map.values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let step = if top > 0.0 { top / levels.max(1) as f64 } else { 1.0 };
    let band = |k: usize| if map.values[k].is_finite() { (map.values[k] / step).floor() as i64 } else { -1 };
    let base: Vec<f64> = match background {
        Some(img) => img.luminance().iter().map(|v| 0.25 + 0.5 * v).collect(),
        None => vec![0.85; g.len()],
    };
    let mut planes = vec![base.clone(), base.clone(), base];
    for k in 0..g.len() {
        let (i, j) = g.coords(k);
        let edge = [(1, 0), (0, 1)].iter().any(|(di, dj)| g.checked_index(i as isize + di, j as isize + dj).map_or(false, |n| band(n) != band(k)));
        if edge {
            planes[0][k] = 0.9;
            planes[1][k] = 0.1;
            planes[2][k] = 0.1;
        }
    }
    if let Some(p) = path {
        for q in p.resample(0.25 * g.spacing()).points {
            if let Some(k) = g.nearest_cell(q) {
                planes[0][k] = 0.1;
                planes[1][k] = 0.2;
                planes[2][k] = 1.0;
            }
        }
    }
    Image::new(g, planes).expect("planes match grid")
}

/// Jaccard index of two mask files.
pub fn eval(a: &Path, b: &Path) -> Result<f64> {
    let (a, b) = (io::load_mask(a)?, io::load_mask(b)?);
    if a.grid.width() != b.grid.width() || a.grid.height() != b.grid.height() {
        return Err(Error::invalid(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            a.grid.width(),
            a.grid.height(),
            b.grid.width(),
            b.grid.height()
        )));
    }
    jaccard(&a, &b)
}

/// Repeated landmark runs on one fixture image. Run `i` draws its
/// landmarks with seed `seed + i`; the image uses `seed`.
#[derive(Clone, Debug)]
pub struct BenchProtocol {
    pub fixture: FixtureKind,
    pub runs: usize,
    pub m: usize,
    pub seed: u64,
    pub config: SegmentationConfig,
}

impl Default for BenchProtocol {
    fn default() -> Self {
        BenchProtocol { fixture: FixtureKind::Disk, runs: 30, m: 3, seed: 0, config: SegmentationConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRun {
    pub run: usize,
    pub seed: u64,
    pub jaccard: Option<f64>,
    pub iterations: usize,
    pub self_intersections: usize,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BenchSummary {
    pub runs: usize,
    pub failed: usize,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn bench(p: &BenchProtocol) -> Result<(Vec<BenchRun>, BenchSummary)> {
    if p.runs == 0 {
        return Err(Error::invalid("runs must be positive"));
    }
    p.config.validate()?;
    let fx = make_fixture(p.fixture, p.seed);
    let runs: Vec<BenchRun> = (0..p.runs)
        .into_par_iter()
        .map(|run| {
            let seed = p.seed.wrapping_add(run as u64);
            let attempt = || -> Result<(f64, usize, usize)> {
                let lm = LandmarkSet::new(sample_landmarks(&fx.contour, p.m, seed)?, fx.image.grid)?;
                let mut seg = Segmenter::landmarks(&fx.image, &lm, None, &p.config)?;
                let st = seg.run()?;
                Ok((jaccard(&st.mask, &fx.truth)?, st.iteration, st.contour.self_intersections()))
            };
            match attempt() {
                Ok((j, it, x)) => BenchRun { run, seed, jaccard: Some(j), iterations: it, self_intersections: x, error: None },
                Err(e) => BenchRun { run, seed, jaccard: None, iterations: 0, self_intersections: 0, error: Some(e.to_string()) },
            }
        })
        .collect();
    let scores: Vec<f64> = runs.iter().filter_map(|r| r.jaccard).collect();
    let n = scores.len() as f64;
    let summary = if scores.is_empty() {
        BenchSummary { runs: p.runs, failed: p.runs, mean: f64::NAN, max: f64::NAN, min: f64::NAN, std: f64::NAN }
    } else {
        let mean = scores.iter().sum::<f64>() / n;
        BenchSummary {
            runs: p.runs,
            failed: p.runs - scores.len(),
            mean,
            max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: scores.iter().copied().fold(f64::INFINITY, f64::min),
            std: (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt(),
        }
    };
    Ok((runs, summary))
}

/// `image,runs,failed,Mean,Max,Min,Std`.
pub fn bench_csv(name: &str, s: &BenchSummary) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["image", "runs", "failed", "Mean", "Max", "Min", "Std"]).expect("in-memory write");
    w.write_record(&[
        name.to_string(),
        s.runs.to_string(),
        s.failed.to_string(),
        format!("{:.6}", s.mean),
        format!("{:.6}", s.max),
        format!("{:.6}", s.min),
        format!("{:.6}", s.std),
    ])
    .expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

/// Per-run rows: `run,seed,jaccard,iterations,self_intersections,error`.
pub fn bench_runs_csv(runs: &[BenchRun]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["run", "seed", "jaccard", "iterations", "self_intersections", "error"]).expect("in-memory write");
    for r in runs {
        w.write_record(&[
            r.run.to_string(),
            r.seed.to_string(),
            r.jaccard.map_or(String::new(), |j| format!("{j:.6}")),
            r.iterations.to_string(),
            r.self_intersections.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Writes `image.png`, `truth.pgm` and a ready-to-run `manifest.toml`
/// (three sampled landmarks) into `dir`; returns the manifest path.
pub fn write_fixture(kind: FixtureKind, seed: u64, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let fx = make_fixture(kind, seed);
    io::save_image_png(&fx.image, &dir.join("image.png"))?;
    io::save_mask(&fx.truth, &dir.join("truth.pgm"))?;
    let mut config = SegmentationConfig::default();
    if kind == FixtureKind::Clutter {
        config.model = AppearanceModel::bhattacharyya();
    }
    let m = RunManifest {
        image: "image.png".into(),
        output_dir: "out".into(),
        landmarks: None,
        landmarks_path: None,
        sample_landmarks: Some(3),
        contour: None,
        truth: Some("truth.pgm".into()),
        seed,
        config,
    };
    let path = dir.join("manifest.toml");
    std::fs::write(&path, m.to_toml())?;
    Ok(path)
}

pub fn default_config_toml() -> String {
    toml::to_string(&SegmentationConfig::default()).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_paths_are_relative_to_its_directory() {
        let m = RunManifest::from_toml("image = \"a.png\"\noutput_dir = \"out\"\nsample_landmarks = 3\n", Path::new("/data/run")).unwrap();
        assert_eq!(m.image, PathBuf::from("/data/run/a.png"));
        assert_eq!(m.output_dir, PathBuf::from("/data/run/out"));
        assert_eq!(m.config, SegmentationConfig::default());
        assert!(RunManifest::from_toml("image = \"a\"\noutput_dir = \"b\"\nbogus = 1\n", Path::new(".")).is_err());
        let bad = RunManifest::from_toml("image = \"a\"\noutput_dir = \"b\"\n[config]\nupsilon = 3.0\n", Path::new("."));
        assert!(matches!(bad, Err(Error::Config(_))));
    }

    #[test]
    fn manifest_roundtrips_through_toml() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(FixtureKind::Clutter, 4, dir.path()).unwrap();
        let m = RunManifest::load(&path).unwrap();
        assert_eq!(m.seed, 4);
        assert_eq!(m.config.model, AppearanceModel::bhattacharyya());
        assert!(m.image.exists() && m.truth.as_ref().unwrap().exists());
    }

    #[test]
    fn exit_codes_split_input_from_solver_errors() {
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), EXIT_INPUT);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_INPUT);
        assert_eq!(exit_code(&Error::Unreachable("x".into())), EXIT_SOLVER);
        assert_eq!(exit_code(&Error::Topology("x".into())), EXIT_SOLVER);
    }

    #[test]
    fn bench_csv_columns() {
        let s = BenchSummary { runs: 1, failed: 0, mean: 0.5, max: 0.5, min: 0.5, std: 0.0 };
        assert_eq!(bench_csv("disk", &s), "image,runs,failed,Mean,Max,Min,Std\ndisk,1,0,0.500000,0.500000,0.500000,0.000000\n");
    }

    #[test]
    fn straight_path_without_drift() {
        let req = DistanceRequest { size: (61, 41), source: Some([5.0, 5.0]), target: Some([55.0, 35.0]), ..Default::default() };
        let out = distance(&req).unwrap();
        let p = out.path.unwrap();
        let dev = p.points.iter().map(|q| crate::geom::point_segment(*q, [5.0, 5.0], [55.0, 35.0]).0).fold(0.0, f64::max);
        assert!(dev < 0.5, "{dev}");
        let img = level_set_image(&out.map, None, Some(&p), 10);
        assert_eq!(img.channel_count(), 3);
    }
}
