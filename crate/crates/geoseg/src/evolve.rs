//! Contour evolution: the closed-geodesic loop around a wall, the
//! landmark-anchored piecewise geodesic scheme, initial contours through
//! landmarks, and evaluation helpers.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eikonal::{
    backtrack, fmm_solve, partial_two_source, solve_with_wall, BacktrackOptions, DistanceMap, FmmOptions, MetricField,
    Seed, StopRule, SEED_RADIUS,
};
use crate::error::{Error, Result};
use crate::features::{
    edge_features, edge_potential, line_integral, riemannian_length, shape_gradient, tensor_field, AppearanceModel,
    EdgeFeatures,
};
use crate::geom::{self, Polyline, Vec2};
use crate::grid::{coverage, distance_to_polyline, rasterize, BinaryMask, Grid2D, Image, ScalarField, TensorField, VectorField};
use crate::tube::{adaptive_tube, build_band, decompose, make_wall, TubularDomain};
use crate::vectorfield::{psi_rescale, solve_curl, CurlMethod};

/// Weight of one transversal self-crossing in [`simplicity_energy`].
pub const CROSSING_WEIGHT: f64 = 10.0;
/// Weight per pixel of near-coincident curve in [`simplicity_energy`].
pub const TANGENCY_WEIGHT: f64 = 1.0;

const MIN_LANDMARK_GAP: f64 = 2.0;
const CORNER_RATIO: f64 = 12.0;
const MAX_COMBINATIONS: usize = 50_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    #[default]
    Polygon,
    SimpleClosed,
    UserContour,
}

/// How the curl field becomes the Randers drift.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftScaling {
    /// `psi(alpha_tilde omega / max|omega|)`, always compatible.
    #[default]
    Psi,
    /// `alpha omega` with a fixed `alpha`.
    Linear,
}

/// Every knob of a segmentation run. Unknown keys are rejected when read
/// from a document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub model: AppearanceModel,
    pub alpha_tilde: f64,
    /// Fixed drift weight for [`DriftScaling::Linear`]; chosen from the first
    /// iteration when absent.
    pub alpha: Option<f64>,
    pub drift: DriftScaling,
    pub beta_data: f64,
    pub beta_aniso: f64,
    /// Gaussian scale of the edge features, in pixels.
    pub edge_sigma: f64,
    pub tube_width: f64,
    pub adaptive_tube: bool,
    pub upsilon: f64,
    pub varrho_frac: f64,
    pub freeze_tube: bool,
    pub curl_method: CurlMethod,
    /// Weight of the squared-distance restoring term.
    pub lambda: f64,
    pub max_iters: usize,
    pub stop_area_frac: f64,
    pub init_method: InitMethod,
    /// Perimeter weight of the polygon initializer.
    pub alpha_euclid: f64,
    /// Edge term weight of the simple-closed initializer.
    pub alpha_edge: f64,
    pub comb_eps: f64,
    /// Defaults to `2 / max g`.
    pub comb_beta: Option<f64>,
    pub saddles_per_pair: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            model: AppearanceModel::PiecewiseConstant,
            alpha_tilde: 5.0,
            alpha: None,
            drift: DriftScaling::Psi,
            beta_data: 2.0,
            beta_aniso: 1.0,
            edge_sigma: 1.0,
            tube_width: 15.0,
            adaptive_tube: true,
            upsilon: 0.2,
            varrho_frac: 0.1,
            freeze_tube: false,
            curl_method: CurlMethod::Poisson,
            lambda: 0.0,
            max_iters: 100,
            stop_area_frac: 0.001,
            init_method: InitMethod::Polygon,
            alpha_euclid: 0.1,
            alpha_edge: 1.0,
            comb_eps: 0.05,
            comb_beta: None,
            saddles_per_pair: 3,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.alpha_tilde >= 0.0 && self.alpha_tilde.is_finite()) {
            return bad("alpha_tilde must be a non-negative number");
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return bad("alpha must be a non-negative number");
            }
        }
        if !(self.beta_data >= 0.0 && self.beta_aniso >= 0.0) {
            return bad("beta_data and beta_aniso must be non-negative");
        }
        if !(self.edge_sigma > 0.0) {
            return bad("edge_sigma must be positive");
        }
        if !(self.tube_width >= 2.0) {
            return bad("tube_width must be at least 2 pixels");
        }
        if !(self.upsilon > 0.0 && self.upsilon <= 1.0) {
            return bad("upsilon must lie in (0, 1]");
        }
        if !(self.varrho_frac >= 0.0) {
            return bad("varrho_frac must be non-negative");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.stop_area_frac >= 0.0) {
            return bad("stop_area_frac must be non-negative");
        }
        if !(self.alpha_euclid >= 0.0 && self.alpha_edge >= 0.0 && self.comb_eps > 0.0) {
            return bad("initializer weights must be non-negative and comb_eps positive");
        }
        if self.saddles_per_pair == 0 {
            return bad("saddles_per_pair must be at least 1");
        }
        match self.model {
            AppearanceModel::Bhattacharyya { bins, sigma } if bins < 2 || !(sigma >= 0.0) => {
                bad("histograms need 2+ bins and a non-negative smoothing")
            }
            AppearanceModel::Balloon { f } if !f.is_finite() => bad("balloon force must be finite"),
            _ => Ok(()),
        }
    }
}

/// One row of the energy log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub iteration: usize,
    /// Region term `Psi`.
    pub psi: f64,
    /// Riemannian boundary length.
    pub length: f64,
    /// `alpha psi + length`.
    pub total: f64,
    /// Area of the symmetric difference with the previous shape.
    pub area_delta: f64,
}

#[derive(Clone, Debug)]
pub struct EvolutionState {
    pub iteration: usize,
    pub contour: Polyline,
    pub mask: BinaryMask,
    pub energy: f64,
    /// Anchor of the closed geodesic (circular mode) or first landmark.
    pub source_anchor: Vec2,
    pub history: Vec<EnergyRecord>,
    pub converged: bool,
}

/// Ordered landmarks, counter-clockwise along the target boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub points: Vec<Vec2>,
}

impl LandmarkSet {
    /// Checks the points against `grid` and re-orients a clockwise set
    /// (keeping the first point).
    pub fn new(points: Vec<Vec2>, grid: Grid2D) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("at least one landmark is required"));
        }
        for (k, p) in points.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) || !grid.contains_point(*p) {
                return Err(Error::invalid(format!("landmark {k} at {p:?} is outside the image")));
            }
        }
        for a in 0..points.len() {
            for b in a + 1..points.len() {
                if geom::dist(points[a], points[b]) < MIN_LANDMARK_GAP * grid.spacing() {
                    return Err(Error::invalid(format!("landmarks {a} and {b} are closer than 2 pixels")));
                }
            }
        }
        let mut poly = Polyline::closed(points);
        poly.orient_ccw();
        Ok(LandmarkSet { points: poly.points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Crossings and near-tangencies of a closed curve:
/// `CROSSING_WEIGHT * crossings + TANGENCY_WEIGHT * L_close`, where
/// `L_close` is half the length of curve lying within one pixel of a part
/// of the curve more than three pixels (and twelve times that gap) away
/// along it.
pub fn simplicity_energy(c: &Polyline) -> f64 {
    let crossings = c.self_intersections() as f64;
    CROSSING_WEIGHT * crossings + TANGENCY_WEIGHT * near_coincident_length(c, 1.0, 3.0)
}

fn near_coincident_length(c: &Polyline, radius: f64, exclusion: f64) -> f64 {
    let total = c.length();
    if c.len() < 3 || !(total > 0.0) {
        return 0.0;
    }
    // dense samples, each standing for `ds` of curve
    let dense = c.resample(0.25 * radius);
    let n = dense.points.len();
    let ds = total / if c.closed { n } else { n - 1 }.max(1) as f64;
    let along = |i: usize, j: usize| {
        let d = (i as f64 - j as f64).abs() * ds;
        if c.closed {
            d.min(total - d)
        } else {
            d
        }
    };
    let key = |p: Vec2| ((p[0] / radius).floor() as i64, (p[1] / radius).floor() as i64);
    let mut bins: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in dense.points.iter().enumerate() {
        bins.entry(key(*p)).or_default().push(i);
    }
    let close = (0..n)
        .filter(|&i| {
            let p = dense.points[i];
            let (bx, by) = key(p);
            (bx - 1..=bx + 1).any(|x| {
                (by - 1..=by + 1).any(|y| {
                    bins.get(&(x, y)).map_or(false, |list| {
                        list.iter().any(|&j| {
                            // both arms of a sharp corner are close too, but
                            // only briefly compared to the arc between them
                            let (a, d) = (along(i, j), geom::dist(p, dense.points[j]));
                            a > exclusion && d < radius && a > CORNER_RATIO * d
                        })
                    })
                })
            })
        })
        .count();
    0.5 * close as f64 * ds
}

/// Intersection over union; two empty masks count as identical.
pub fn jaccard(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.grid.width() != b.grid.width() || a.grid.height() != b.grid.height() {
        return Err(Error::invalid("masks have different sizes"));
    }
    Ok(a.jaccard(b))
}

/// `m` random points on a closed curve, counter-clockwise, with every arc
/// between consecutive points at least `0.3 L / m` long.
pub fn sample_landmarks(gt: &Polyline, m: usize, seed: u64) -> Result<Vec<Vec2>> {
    if m < 2 {
        return Err(Error::invalid("sampling needs at least two landmarks"));
    }
    let mut c = gt.clone();
    c.closed = true;
    c.orient_ccw();
    let total = c.length();
    if !(total > 0.0) {
        return Err(Error::invalid("contour has no length"));
    }
    let gap = 0.3 * total / m as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut s: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..total)).collect();
        s.sort_by(f64::total_cmp);
        let ok = (0..m).all(|k| {
            let next = if k + 1 == m { s[0] + total } else { s[k + 1] };
            next - s[k] >= gap
        });
        if ok {
            return Ok(s.iter().map(|&t| c.point_at(t)).collect());
        }
    }
}

/// Joins open paths end to start into a closed curve; returns it with the
/// vertex index where each path starts.
pub fn concatenate(paths: &[Polyline]) -> (Polyline, Vec<usize>) {
    let mut points: Vec<Vec2> = Vec::new();
    let mut knots = Vec::with_capacity(paths.len());
    for p in paths {
        knots.push(points.len());
        let n = p.points.len();
        points.extend_from_slice(&p.points[..n.saturating_sub(1).max(1)]);
    }
    (Polyline::closed(points), knots)
}

/// Cuts a closed curve at the projections of the landmarks, which must be
/// met in order.
pub fn split_at_landmarks(contour: &Polyline, landmarks: &[Vec2], tol: f64) -> Result<Vec<Polyline>> {
    let total = contour.length();
    let mut s: Vec<f64> = Vec::with_capacity(landmarks.len());
    for (k, &p) in landmarks.iter().enumerate() {
        let d = contour.distance_to(p);
        if d > tol {
            return Err(Error::Init(format!("contour passes {d:.2} px away from landmark {k}")));
        }
        s.push(contour.project(p));
    }
    // arclengths relative to the first landmark must increase
    let rel: Vec<f64> = s.iter().map(|v| (v - s[0]).rem_euclid(total)).collect();
    if rel.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Init("landmarks are not met in order along the contour".into()));
    }
    let arcs = contour.arclengths();
    let m = landmarks.len();
    let mut paths = Vec::with_capacity(m);
    for k in 0..m {
        let (a, b) = (s[k], if k + 1 == m { s[0] + total } else { s[k] + rel[k + 1] - rel[k] });
        let mut pts = vec![landmarks[k]];
        for lap in 0..2 {
            for (i, &q) in contour.points.iter().enumerate() {
                let t = arcs[i] + lap as f64 * total;
                if t > a && t < b {
                    pts.push(q);
                }
            }
        }
        pts.push(landmarks[(k + 1) % m]);
        let mut p = Polyline::open(pts);
        p.dedup(1e-9);
        paths.push(p);
    }
    Ok(paths)
}

/// Removes the loops of an open path (the endpoints stay).
pub fn erase_loops(path: &mut Polyline) {
    for _ in 0..path.points.len() {
        let Some((i, j, x)) = first_crossing(path) else { return };
        let mut pts = path.points[..=i].to_vec();
        pts.push(x);
        pts.extend_from_slice(&path.points[j + 1..]);
        path.points = pts;
    }
}

/// Removes the smaller side of every self-crossing of a closed curve.
/// `keep` marks vertices that should preferably survive.
fn untangle_closed(c: &mut Polyline) {
    for _ in 0..c.points.len() {
        let Some((i, j, x)) = first_crossing(c) else { return };
        let n = c.points.len();
        let inner = j - i;
        let outer = n - inner;
        if inner <= outer {
            let mut pts = c.points[..=i].to_vec();
            pts.push(x);
            pts.extend_from_slice(&c.points[j + 1..]);
            c.points = pts;
        } else {
            let mut pts = vec![x];
            pts.extend_from_slice(&c.points[i + 1..=j]);
            c.points = pts;
        }
        c.dedup(1e-9);
    }
}

fn first_crossing(c: &Polyline) -> Option<(usize, usize, Vec2)> {
    let n = c.segment_count();
    for i in 0..n {
        let (a, b) = c.segment(i);
        for j in i + 2..n {
            if c.closed && i == 0 && j == n - 1 {
                continue;
            }
            let (p, q) = c.segment(j);
            if geom::segments_intersect(a, b, p, q) {
                let r = geom::sub(b, a);
                let s = geom::sub(q, p);
                let den = geom::cross(r, s);
                let x = if den.abs() > 1e-15 {
                    let t = geom::cross(geom::sub(p, a), s) / den;
                    geom::add(a, geom::scale(r, t.clamp(0.0, 1.0)))
                } else {
                    p
                };
                return Some((i, j, x));
            }
        }
    }
    None
}

/// Picks one candidate per slot minimising `score`; `None` scores are
/// infeasible. Exhaustive when the product of slot sizes is small,
/// coordinate descent from the first candidates otherwise.
fn best_combination(sizes: &[usize], mut score: impl FnMut(&[usize]) -> Option<f64>) -> Option<Vec<usize>> {
    let total = sizes.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s));
    let mut best: Option<(f64, Vec<usize>)> = None;
    if total.map_or(false, |t| t <= MAX_COMBINATIONS) {
        let mut idx = vec![0usize; sizes.len()];
        loop {
            if let Some(v) = score(&idx) {
                if best.as_ref().map_or(true, |b| v < b.0) {
                    best = Some((v, idx.clone()));
                }
            }
            let mut k = 0;
            loop {
                if k == sizes.len() {
                    return best.map(|b| b.1);
                }
                idx[k] += 1;
                if idx[k] < sizes[k] {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
    let mut idx = vec![0usize; sizes.len()];
    let mut current = score(&idx).unwrap_or(f64::INFINITY);
    for _ in 0..20 {
        let mut improved = false;
        for k in 0..sizes.len() {
            for c in 0..sizes[k] {
                let old = idx[k];
                idx[k] = c;
                match score(&idx) {
                    Some(v) if v < current => {
                        current = v;
                        improved = true;
                    }
                    _ => idx[k] = old,
                }
            }
        }
        if !improved {
            break;
        }
    }
    current.is_finite().then_some(idx)
}

fn chain(cands: &[Vec<Polyline>], idx: &[usize]) -> Polyline {
    let picked: Vec<Polyline> = idx.iter().enumerate().map(|(k, &i)| cands[k][i].clone()).collect();
    concatenate(&picked).0
}

/// Straight and detouring candidate joins between consecutive landmarks.
/// Detours pass through a point of the meeting line of two unit-speed
/// fronts grown from the endpoints, at a few offsets from the midpoint.
pub fn polygon_candidates(lm: &LandmarkSet, grid: Grid2D) -> Result<Vec<Vec<Polyline>>> {
    let m = lm.len();
    if m < 2 {
        return Err(Error::Init("a polygon needs at least two landmarks".into()));
    }
    let unit = MetricField::isotropic(&ScalarField::filled(grid, 1.0))?;
    let cell = |p: Vec2| grid.nearest_cell(p).ok_or_else(|| Error::Init("landmark off the grid".into()));
    (0..m)
        .map(|k| {
            let (p, q) = (lm.points[k], lm.points[(k + 1) % m]);
            let mut out = Vec::new();
            if m > 2 {
                out.push(Polyline::open(vec![p, q]));
            }
            let two = partial_two_source(&unit, cell(p)?, cell(q)?, None)?;
            let mid = geom::lerp(p, q, 0.5);
            let Some(normal) = geom::normalize(geom::perp(geom::sub(q, p))) else {
                return Ok(out);
            };
            let len = geom::dist(p, q);
            for f in [0.35, -0.35, 0.7, -0.7, 1.05, -1.05] {
                let target = geom::add(mid, geom::scale(normal, f * len));
                let via = two
                    .interface
                    .iter()
                    .map(|&c| grid.center(c))
                    .min_by(|a, b| geom::dist(*a, target).total_cmp(&geom::dist(*b, target)));
                if let Some(v) = via {
                    if geom::dist(v, target) < 0.25 * len + 2.0 {
                        out.push(Polyline::open(vec![p, v, q]));
                    }
                }
            }
            if out.is_empty() {
                return Err(Error::Init(format!("no candidate join for landmarks {k} and {}", (k + 1) % m)));
            }
            Ok(out)
        })
        .collect()
}

/// Paths of the polygon initializer, one per landmark pair.
pub fn polygon_paths(lm: &LandmarkSet, grid: Grid2D, alpha_euclid: f64) -> Result<Vec<Polyline>> {
    let cands = polygon_candidates(lm, grid)?;
    let sizes: Vec<usize> = cands.iter().map(|c| c.len()).collect();
    let best = best_combination(&sizes, |idx| {
        let c = chain(&cands, idx);
        if c.self_intersections() > 0 || c.signed_area() <= 0.0 {
            return None;
        }
        Some(simplicity_energy(&c) + alpha_euclid * c.length())
    })
    .ok_or_else(|| Error::Init("no simple polygon through the landmarks".into()))?;
    Ok(best.iter().enumerate().map(|(k, &i)| cands[k][i].clone()).collect())
}

/// Closed polygonal curve through the landmarks, simple, minimising the
/// simplicity penalty plus `alpha_euclid` times its perimeter.
pub fn init_polygon(lm: &LandmarkSet, grid: Grid2D, alpha_euclid: f64) -> Result<Polyline> {
    if lm.len() < 3 {
        return Err(Error::Init("a polygon needs at least three landmarks".into()));
    }
    Ok(concatenate(&polygon_paths(lm, grid, alpha_euclid)?).0)
}

/// Local minima of the arrival time along the meeting line of two fronts,
/// at least `radius` apart, lowest first.
pub fn saddle_points(map: &DistanceMap, radius: f64, keep: usize) -> Vec<usize> {
    let g = map.grid;
    let cells = &map.interface;
    let mut minima: Vec<usize> = cells
        .iter()
        .copied()
        .filter(|&c| {
            let v = map.values[c];
            cells.iter().all(|&o| {
                o == c || geom::dist(g.center(o), g.center(c)) > radius || map.values[o] > v || (map.values[o] == v && o > c)
            })
        })
        .collect();
    minima.sort_by(|a, b| map.values[*a].total_cmp(&map.values[*b]).then(a.cmp(b)));
    let mut out: Vec<usize> = Vec::new();
    for c in minima {
        if out.iter().all(|&o| geom::dist(g.center(o), g.center(c)) > radius) {
            out.push(c);
        }
        if out.len() == keep {
            break;
        }
    }
    out
}

/// The isotropic potential `eps + max(0, 1 - beta g)` of the simple-closed
/// initializer.
pub fn comb_potential(ef: &EdgeFeatures, cfg: &SegmentationConfig) -> ScalarField {
    edge_potential(ef, cfg.comb_eps, cfg.comb_beta)
}

/// Candidate geodesics between consecutive landmarks through the saddle
/// points of two fronts grown under `potential`.
pub fn saddle_candidates(potential: &ScalarField, lm: &LandmarkSet, per_pair: usize) -> Result<Vec<Vec<Polyline>>> {
    let g = potential.grid;
    let metric = MetricField::isotropic(potential)?;
    let m = lm.len();
    let cell = |p: Vec2| g.nearest_cell(p).ok_or_else(|| Error::Init("landmark off the grid".into()));
    (0..m)
        .map(|k| {
            let (p, q) = (lm.points[k], lm.points[(k + 1) % m]);
            let two = partial_two_source(&metric, cell(p)?, cell(q)?, None)?;
            let map = &two.map;
            let mut out = Vec::new();
            for s in saddle_points(map, 5.0, per_pair) {
                let other = g.neighbors4(s).find(|&n| map.accepted[n] && map.labels[n] != map.labels[s] && map.labels[n] != 0);
                let Some(o) = other else { continue };
                let (c1, c2) = if map.labels[s] == 1 { (s, o) } else { (o, s) };
                let back = |c: usize, l: u8| {
                    backtrack(map, &metric, g.center(c), &BacktrackOptions { label: Some(l), ..Default::default() })
                };
                let (Ok(b1), Ok(b2)) = (back(c1, 1), back(c2, 2)) else { continue };
                let mut pts: Vec<Vec2> = b1.points.iter().rev().copied().collect();
                pts.extend_from_slice(&b2.points);
                *pts.first_mut().unwrap() = p;
                *pts.last_mut().unwrap() = q;
                let mut path = Polyline::open(pts);
                path.dedup(1e-9);
                erase_loops(&mut path);
                out.push(path);
            }
            if out.is_empty() {
                out.push(Polyline::open(vec![p, q]));
            }
            Ok(out)
        })
        .collect()
}

/// Normalised edge energy: mean of the potential along the curve.
pub fn edge_energy(c: &Polyline, potential: &ScalarField) -> f64 {
    let l = c.length();
    if l > 0.0 {
        line_integral(c, potential) / l
    } else {
        0.0
    }
}

/// Paths of the simple-closed initializer.
pub fn simple_closed_paths(img: &Image, lm: &LandmarkSet, cfg: &SegmentationConfig) -> Result<Vec<Polyline>> {
    if lm.len() < 2 {
        return Err(Error::Init("the simple-closed initializer needs two or more landmarks".into()));
    }
    let ef = edge_features(img, cfg.edge_sigma)?;
    let pot = comb_potential(&ef, cfg);
    let cands = saddle_candidates(&pot, lm, cfg.saddles_per_pair)?;
    let sizes: Vec<usize> = cands.iter().map(|c| c.len()).collect();
    let best = best_combination(&sizes, |idx| {
        let c = chain(&cands, idx);
        if c.self_intersections() > 0 || c.signed_area() <= 0.0 {
            return None;
        }
        Some(simplicity_energy(&c) + cfg.alpha_edge * edge_energy(&c, &pot))
    })
    .ok_or_else(|| Error::Init("every candidate contour self-intersects".into()))?;
    Ok(best.iter().enumerate().map(|(k, &i)| cands[k][i].clone()).collect())
}

pub fn init_simple_closed(img: &Image, lm: &LandmarkSet, cfg: &SegmentationConfig) -> Result<Polyline> {
    Ok(concatenate(&simple_closed_paths(img, lm, cfg)?).0)
}

/// Intermediate fields of the last iteration, for inspection.
#[derive(Clone, Debug)]
pub struct IterationArtifacts {
    pub tube: BinaryMask,
    pub xi: ScalarField,
    /// Drift of the Randers metric.
    pub omega: VectorField,
    /// Decomposition labels (landmark mode), 0 outside the tube.
    pub regions: Option<Vec<u8>>,
}

#[derive(Clone, Debug)]
enum Mode {
    Circular,
    Landmarks { landmarks: Vec<Vec2>, paths: Vec<Polyline> },
}

/// Result of one outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub iteration: usize,
    pub contour: Polyline,
    pub energy: f64,
    pub area_delta: f64,
    pub converged: bool,
}

/// Drives the outer loop for one image.
#[derive(Clone, Debug)]
pub struct Segmenter {
    img: Image,
    cfg: SegmentationConfig,
    tensors: TensorField,
    mode: Mode,
    state: EvolutionState,
    frozen: Option<TubularDomain>,
    alpha_fixed: Option<f64>,
    last: Option<IterationArtifacts>,
}

impl Segmenter {
    /// Circular mode: closed geodesics through an anchor that jumps half a
    /// perimeter each iteration.
    pub fn circular(img: &Image, s0: &Polyline, anchor: Option<Vec2>, cfg: &SegmentationConfig) -> Result<Self> {
        cfg.validate()?;
        let mut c = s0.clone();
        c.closed = true;
        c.dedup(1e-9);
        if c.len() < 3 {
            return Err(Error::Init("initial contour needs three or more points".into()));
        }
        c.orient_ccw();
        let mut c = c.resample(img.grid.spacing());
        let anchor = match anchor {
            Some(p) => {
                // start the curve at the anchor
                let s = c.project(p);
                let rot = c.resample(img.grid.spacing());
                let shifted: Vec<Vec2> = std::iter::once(p)
                    .chain((1..rot.len()).map(|k| rot.point_at(s + k as f64 * rot.length() / rot.len() as f64)))
                    .collect();
                c = Polyline::closed(shifted);
                p
            }
            None => c.points[0],
        };
        Self::start(img, cfg, c, anchor, Mode::Circular)
    }

    /// Landmark mode with an initial contour built per `cfg.init_method`
    /// (or `contour` for [`InitMethod::UserContour`]). A single landmark
    /// falls back to circular mode anchored there.
    pub fn landmarks(img: &Image, lm: &LandmarkSet, contour: Option<&Polyline>, cfg: &SegmentationConfig) -> Result<Self> {
        cfg.validate()?;
        let g = img.grid;
        if lm.len() == 1 {
            let c = contour.ok_or_else(|| Error::Init("a single landmark needs an initial contour".into()))?;
            return Self::circular(img, c, Some(lm.points[0]), cfg);
        }
        let paths = match (cfg.init_method, contour) {
            (InitMethod::UserContour, Some(c)) | (_, Some(c)) => {
                let mut c = c.clone();
                c.closed = true;
                c.orient_ccw();
                split_at_landmarks(&c, &lm.points, 1.5 * g.spacing())?
            }
            (InitMethod::UserContour, None) => return Err(Error::Init("init_method user_contour needs a contour".into())),
            (InitMethod::Polygon, None) => polygon_paths(lm, g, cfg.alpha_euclid)?,
            (InitMethod::SimpleClosed, None) => simple_closed_paths(img, lm, cfg)?,
        };
        let paths: Vec<Polyline> = paths.iter().map(|p| p.resample(g.spacing())).collect();
        let (c, _) = concatenate(&paths);
        if c.self_intersections() > 0 {
            return Err(Error::Init("initial contour is not simple".into()));
        }
        let mode = Mode::Landmarks { landmarks: lm.points.clone(), paths };
        Self::start(img, cfg, c, lm.points[0], mode)
    }

    fn start(img: &Image, cfg: &SegmentationConfig, contour: Polyline, anchor: Vec2, mode: Mode) -> Result<Self> {
        let ef = edge_features(img, cfg.edge_sigma)?;
        let tensors = tensor_field(&ef, cfg.beta_data, cfg.beta_aniso);
        let mask = rasterize(&contour, img.grid)?;
        let mut seg = Segmenter {
            img: img.clone(),
            cfg: cfg.clone(),
            tensors,
            mode,
            state: EvolutionState {
                iteration: 0,
                contour,
                mask,
                energy: 0.0,
                source_anchor: anchor,
                history: Vec::new(),
                converged: false,
            },
            frozen: None,
            alpha_fixed: cfg.alpha,
            last: None,
        };
        let alpha = match cfg.drift {
            DriftScaling::Linear => cfg.alpha.unwrap_or(0.0),
            DriftScaling::Psi => 0.0,
        };
        let (psi, length) = seg.energy_terms(&seg.state.contour)?;
        let total = alpha * psi + length;
        seg.state.energy = total;
        seg.state.history.push(EnergyRecord { iteration: 0, psi, length, total, area_delta: 0.0 });
        Ok(seg)
    }

    pub fn state(&self) -> &EvolutionState {
        &self.state
    }

    pub fn config(&self) -> &SegmentationConfig {
        &self.cfg
    }

    pub fn tensors(&self) -> &TensorField {
        &self.tensors
    }

    pub fn artifacts(&self) -> Option<&IterationArtifacts> {
        self.last.as_ref()
    }

    /// Drift weight fixed for [`DriftScaling::Linear`] (known after the
    /// first step when not configured).
    pub fn linear_alpha(&self) -> Option<f64> {
        self.alpha_fixed
    }

    /// Landmarks in landmark mode.
    pub fn landmark_points(&self) -> Option<&[Vec2]> {
        match &self.mode {
            Mode::Landmarks { landmarks, .. } => Some(landmarks),
            Mode::Circular => None,
        }
    }

    /// Current paths between consecutive landmarks.
    pub fn paths(&self) -> Option<&[Polyline]> {
        match &self.mode {
            Mode::Landmarks { paths, .. } => Some(paths),
            Mode::Circular => None,
        }
    }

    /// Region term on the area actually enclosed by `contour` (fractional
    /// cells along it) and the Riemannian length.
    fn energy_terms(&self, contour: &Polyline) -> Result<(f64, f64)> {
        let psi = self.cfg.model.energy_weighted(&self.img, &coverage(contour, self.img.grid)?)?;
        Ok((psi, riemannian_length(contour, &self.tensors)))
    }

    /// Tube, shape gradient, drift and metric for the current shape.
    fn metric_for_current(&mut self) -> Result<(TubularDomain, TubularDomain, MetricField, IterationArtifacts, f64)> {
        let g = self.img.grid;
        let cfg = &self.cfg;
        let contour = &self.state.contour;
        let sym = match (&self.frozen, cfg.freeze_tube) {
            (Some(t), true) => TubularDomain { centerline: contour.clone(), ..t.clone() },
            _ => build_band(contour, cfg.tube_width, g, matches!(self.mode, Mode::Circular))?,
        };
        let sg = shape_gradient(&cfg.model, &self.img, &self.state.mask)?;
        let tube = if cfg.adaptive_tube && !cfg.freeze_tube {
            adaptive_tube(&sym, &sg.xi, &self.state.mask, cfg.upsilon, cfg.varrho_frac)?
        } else {
            sym.clone()
        };
        if cfg.freeze_tube && self.frozen.is_none() {
            self.frozen = Some(tube.clone());
        }
        // the curl is solved on the full band; the adaptive cut only limits
        // where paths may go
        let curl = solve_curl(cfg.curl_method, &sg.xi, &sym.mask, Some(&sym.mask), Some(&sym.level()))?;
        let (drift, alpha) = match cfg.drift {
            DriftScaling::Psi => psi_rescale(&curl.omega, cfg.alpha_tilde, Some(&tube.mask)),
            DriftScaling::Linear => {
                let alpha = match self.alpha_fixed {
                    Some(a) => a,
                    None => {
                        // stay well inside the compatibility bound of the
                        // first metric
                        let min_eig = tube_min_eigen(&self.tensors, &tube.mask);
                        let max = curl.omega.max_norm(Some(&tube.mask));
                        let a = if max > 0.0 { 0.5 * min_eig.sqrt() / max } else { 0.0 };
                        self.alpha_fixed = Some(a);
                        a
                    }
                };
                let values = (0..g.len())
                    .map(|k| if tube.mask.bits[k] { geom::scale(curl.omega.values[k], alpha) } else { [0.0, 0.0] })
                    .collect();
                (VectorField { grid: g, values }, alpha)
            }
        };
        let dist = (cfg.lambda > 0.0).then(|| distance_to_polyline(contour, g));
        let metric = crate::vectorfield::assemble_metric(&self.tensors, &drift, dist.as_ref(), cfg.lambda, Some(&tube.mask))?;
        let art = IterationArtifacts { tube: tube.mask.clone(), xi: sg.xi, omega: drift, regions: None };
        Ok((sym, tube, metric, art, alpha))
    }

    /// One outer iteration. On error the state is left untouched.
    pub fn step(&mut self) -> Result<StepReport> {
        let g = self.img.grid;
        let h = g.spacing();
        let (sym, tube, metric, mut art, alpha) = self.metric_for_current()?;
        let (contour, new_mode, anchor) = match &self.mode {
            Mode::Circular => {
                let cur = &self.state.contour;
                let s = cur.project(self.state.source_anchor);
                // cut the full band so that holes in the adaptive one cannot
                // let the front slip around the wall
                let wall_tube = TubularDomain { centerline: cur.clone(), ..sym };
                let wall = make_wall(&wall_tube, s)?;
                if !tube.mask.bits[wall.plus_seed] || !tube.mask.bits[wall.minus_seed] {
                    return Err(Error::Topology("wall seeds fall outside the adaptive tube".into()));
                }
                let closed = solve_with_wall(&metric, &tube.mask, &wall)?;
                let mut c = closed.resample(h);
                c.dedup(1e-9);
                untangle_closed(&mut c);
                c.orient_ccw();
                // next anchor: half a perimeter away
                let s0 = c.project(wall.anchor);
                let next = c.point_at(s0 + 0.5 * c.length());
                (c, Mode::Circular, next)
            }
            Mode::Landmarks { landmarks, paths } => {
                let dec = decompose(&tube, paths)?;
                let m = landmarks.len();
                let solved: Vec<Result<Polyline>> = (0..m)
                    .into_par_iter()
                    .map(|k| {
                        let (p, q) = (dec.anchor_cells[k], dec.anchor_cells[(k + 1) % m]);
                        let opts = FmmOptions {
                            domain: Some(&dec.regions[k]),
                            walls: None,
                            stop: StopRule::Cells(vec![q]),
                            max_depth: None,
                            seed_radius: SEED_RADIUS,
                        };
                        let map = fmm_solve(&metric, &[Seed::at(p)], &opts)?;
                        if !map.accepted[q] {
                            return Err(Error::Unreachable(format!("landmark {} not reached inside subregion {k}", (k + 1) % m)));
                        }
                        let back = backtrack(&map, &metric, g.center(q), &BacktrackOptions::default())?;
                        let mut pts: Vec<Vec2> = back.points.into_iter().rev().collect();
                        *pts.first_mut().unwrap() = landmarks[k];
                        *pts.last_mut().unwrap() = landmarks[(k + 1) % m];
                        let mut path = Polyline::open(pts).resample(h);
                        path.dedup(1e-9);
                        erase_loops(&mut path);
                        Ok(path)
                    })
                    .collect();
                let new_paths = solved.into_iter().collect::<Result<Vec<_>>>()?;
                let (mut c, _) = concatenate(&new_paths);
                let new_paths = if c.self_intersections() > 0 {
                    untangle_closed(&mut c);
                    split_at_landmarks(&c, landmarks, 1.5 * h)
                        .map_err(|e| Error::Topology(format!("paths cross and cannot be untangled: {e}")))?
                } else {
                    new_paths
                };
                let (c, _) = concatenate(&new_paths);
                art.regions = Some(dec.labels);
                (c, Mode::Landmarks { landmarks: landmarks.clone(), paths: new_paths }, landmarks[0])
            }
        };
        if contour.self_intersections() > 0 {
            return Err(Error::Topology("the new contour self-intersects".into()));
        }
        let mask = rasterize(&contour, g)?;
        let area_delta = mask.symmetric_difference(&self.state.mask) as f64 * h * h;
        let (psi, length) = self.energy_terms(&contour)?;
        let total = alpha * psi + length;
        let converged = area_delta < self.cfg.stop_area_frac * g.area();
        let iteration = self.state.iteration + 1;
        self.state.history.push(EnergyRecord { iteration, psi, length, total, area_delta });
        self.state.iteration = iteration;
        self.state.contour = contour;
        self.state.mask = mask;
        self.state.energy = total;
        self.state.source_anchor = anchor;
        self.state.converged = converged;
        self.mode = new_mode;
        self.last = Some(art);
        Ok(StepReport { iteration, contour: self.state.contour.clone(), energy: total, area_delta, converged })
    }

    /// Iterates until convergence or `max_iters`.
    pub fn run(&mut self) -> Result<&EvolutionState> {
        while !self.state.converged && self.state.iteration < self.cfg.max_iters {
            self.step()?;
        }
        Ok(&self.state)
    }

    /// Energy log as CSV.
    pub fn energy_csv(&self) -> String {
        energy_csv(&self.state.history)
    }
}

fn tube_min_eigen(t: &TensorField, mask: &BinaryMask) -> f64 {
    (0..t.grid.len())
        .filter(|&k| mask.bits[k])
        .map(|k| t.values[k].eigen().0)
        .fold(f64::INFINITY, f64::min)
        .min(1e300)
}

/// `iteration,psi,length,total,area_delta` rows.
pub fn energy_csv(history: &[EnergyRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "psi", "length", "total", "area_delta"]).expect("in-memory write");
    for r in history {
        w.write_record(&[
            r.iteration.to_string(),
            format!("{:.9e}", r.psi),
            format!("{:.9e}", r.length),
            format!("{:.9e}", r.total),
            format!("{:.9e}", r.area_delta),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

/// Closed-geodesic evolution from `s0`.
pub fn evolve_circular(img: &Image, s0: &Polyline, cfg: &SegmentationConfig) -> Result<EvolutionState> {
    let mut seg = Segmenter::circular(img, s0, None, cfg)?;
    seg.run()?;
    Ok(seg.state)
}

/// Landmark-anchored evolution.
pub fn evolve_landmarks(img: &Image, lm: &LandmarkSet, contour: Option<&Polyline>, cfg: &SegmentationConfig) -> Result<EvolutionState> {
    let mut seg = Segmenter::landmarks(img, lm, contour, cfg)?;
    seg.run()?;
    Ok(seg.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn circle(c: Vec2, r: f64, n: usize) -> Polyline {
        Polyline::closed((0..n).map(|k| {
            let a = k as f64 / n as f64 * TAU;
            [c[0] + r * a.cos(), c[1] + r * a.sin()]
        }).collect())
    }

    #[test]
    fn convex_polygon_is_simple() {
        let sq = Polyline::closed(vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]]);
        assert_eq!(simplicity_energy(&sq), 0.0);
        assert_eq!(simplicity_energy(&circle([50.0, 50.0], 20.0, 200)), 0.0);
    }

    #[test]
    fn figure_eight_costs_one_crossing() {
        let eight = Polyline::closed(vec![[0.0, 0.0], [10.0, 10.0], [10.0, 0.0], [0.0, 10.0]]);
        // plus the short stretches of both branches near the crossing
        let e = simplicity_energy(&eight);
        assert!(e > CROSSING_WEIGHT && e < CROSSING_WEIGHT + 2.5, "{e}");
    }

    #[test]
    fn doubled_back_run_costs_its_length() {
        // out along y = 0 and back along y = 0.5, closed by short caps
        let mut pts: Vec<Vec2> = (0..=40).map(|k| [k as f64, 0.0]).collect();
        pts.extend((0..=40).rev().map(|k| [k as f64, 0.5]));
        let c = Polyline::closed(pts);
        let e = simplicity_energy(&c);
        // the folds count as corners for about (12 * 0.5 - 0.5) / 2 px at each end
        let expected = 40.0 - 2.0 * (CORNER_RATIO * 0.5 - 0.5) / 2.0;
        assert!((e - expected).abs() < 1.5, "{e} vs {expected}");
    }

    #[test]
    fn jaccard_counts() {
        let g = Grid2D::pixels(10, 10).unwrap();
        let full = BinaryMask::from_fn(g, |_| true);
        let left = BinaryMask::from_fn(g, |p| p[0] < 5.0);
        let right = left.complement();
        assert_eq!(jaccard(&full, &full).unwrap(), 1.0);
        assert_eq!(jaccard(&left, &right).unwrap(), 0.0);
        assert_eq!(jaccard(&left, &full).unwrap(), 0.5);
        let empty = BinaryMask::empty(g);
        assert_eq!(jaccard(&empty, &empty).unwrap(), 1.0);
        let other = BinaryMask::empty(Grid2D::pixels(10, 11).unwrap());
        assert!(jaccard(&empty, &other).is_err());
    }

    #[test]
    fn sampled_landmarks_keep_their_distance() {
        let c = circle([100.0, 100.0], 300.0 / TAU, 600);
        let l = c.length();
        for m in [2, 3, 5] {
            for seed in 0..20 {
                let pts = sample_landmarks(&c, m, seed).unwrap();
                assert_eq!(pts, sample_landmarks(&c, m, seed).unwrap());
                let s: Vec<f64> = pts.iter().map(|p| c.project(*p)).collect();
                for k in 0..m {
                    let gap = (s[(k + 1) % m] - s[k]).rem_euclid(l);
                    assert!(gap >= 0.3 * l / m as f64 - 1e-6, "m={m} seed={seed}");
                }
            }
        }
    }

    #[test]
    fn landmarks_are_checked_and_reoriented() {
        let g = Grid2D::pixels(50, 50).unwrap();
        assert!(LandmarkSet::new(vec![[60.0, 1.0]], g).is_err());
        assert!(LandmarkSet::new(vec![[10.0, 10.0], [11.0, 10.5]], g).is_err());
        let cw = LandmarkSet::new(vec![[10.0, 10.0], [10.0, 40.0], [40.0, 25.0]], g).unwrap();
        assert!(Polyline::closed(cw.points.clone()).signed_area() > 0.0);
        assert_eq!(cw.points[0], [10.0, 10.0]);
    }

    #[test]
    fn triangle_is_its_own_polygon() {
        let g = Grid2D::pixels(60, 60).unwrap();
        let lm = LandmarkSet::new(vec![[10.0, 10.0], [50.0, 12.0], [30.0, 45.0]], g).unwrap();
        let c = init_polygon(&lm, g, 0.1).unwrap();
        assert_eq!(c.points, lm.points);
    }

    #[test]
    fn crossing_order_gets_detours() {
        let g = Grid2D::pixels(80, 80).unwrap();
        // straight joins of this order form a bow tie
        let pts = vec![[25.0, 25.0], [55.0, 55.0], [55.0, 25.0], [25.0, 55.0]];
        let bow = Polyline::closed(pts.clone());
        assert!(bow.self_intersections() > 0);
        let lm = LandmarkSet { points: pts };
        let c = init_polygon(&lm, g, 0.1).unwrap();
        assert_eq!(c.self_intersections(), 0);
        assert!(c.len() > 4);
        for p in &lm.points {
            assert!(c.points.contains(p));
        }
    }

    #[test]
    fn heavy_perimeter_weight_picks_shortest_simple_chain() {
        let g = Grid2D::pixels(80, 80).unwrap();
        let lm = LandmarkSet { points: vec![[25.0, 25.0], [55.0, 55.0], [55.0, 25.0], [25.0, 55.0]] };
        let cands = polygon_candidates(&lm, g).unwrap();
        let sizes: Vec<usize> = cands.iter().map(|c| c.len()).collect();
        let mut shortest = f64::INFINITY;
        let mut idx = vec![0; 4];
        'outer: loop {
            let c = chain(&cands, &idx);
            if c.self_intersections() == 0 && c.signed_area() > 0.0 {
                shortest = shortest.min(c.length());
            }
            for k in 0..4 {
                idx[k] += 1;
                if idx[k] < sizes[k] {
                    continue 'outer;
                }
                idx[k] = 0;
            }
            break;
        }
        let c = init_polygon(&lm, g, 1e6).unwrap();
        assert!((c.length() - shortest).abs() < 1e-9);
    }

    #[test]
    fn split_and_concatenate_round_trip() {
        let c = circle([50.0, 50.0], 20.0, 120);
        let lm = [c.points[0], c.points[40], c.points[80]];
        let paths = split_at_landmarks(&c, &lm, 1.0).unwrap();
        assert_eq!(paths.len(), 3);
        let (back, knots) = concatenate(&paths);
        assert_eq!(knots, vec![0, 40, 80]);
        assert_eq!(back.points.len(), 120);
        assert!((back.length() - c.length()).abs() < 1e-9);
        // out-of-order landmarks are refused
        assert!(split_at_landmarks(&c, &[lm[0], lm[2], lm[1]], 1.0).is_err());
    }

    #[test]
    fn loops_are_erased() {
        let mut p = Polyline::open(vec![[0.0, 0.0], [4.0, 0.0], [4.0, 2.0], [2.0, 2.0], [2.0, -2.0], [6.0, -2.0]]);
        erase_loops(&mut p);
        assert_eq!(p.self_intersections(), 0);
        assert_eq!(p.points[0], [0.0, 0.0]);
        assert_eq!(*p.points.last().unwrap(), [6.0, -2.0]);
        assert!(p.length() < 12.0);
    }

    #[test]
    fn uniform_image_gives_straight_joins() {
        let g = Grid2D::pixels(80, 80).unwrap();
        let img = Image::gray(g, vec![0.5; g.len()]).unwrap();
        let lm = LandmarkSet::new(vec![[15.0, 15.0], [65.0, 20.0], [40.0, 65.0]], g).unwrap();
        let cfg = SegmentationConfig::default();
        let cands = saddle_candidates(&comb_potential(&edge_features(&img, 1.0).unwrap(), &cfg), &lm, 3).unwrap();
        for (k, pair) in cands.iter().enumerate() {
            assert_eq!(pair.len(), 1, "pair {k}");
            let (p, q) = (lm.points[k], lm.points[(k + 1) % 3]);
            for v in &pair[0].points {
                let (d, _) = geom::point_segment(*v, p, q);
                assert!(d < 1.5, "pair {k}: {v:?}");
            }
        }
    }

    #[test]
    fn saddle_count_is_capped() {
        let g = Grid2D::pixels(60, 60).unwrap();
        // three separate low-cost channels between the two landmarks
        let pot = ScalarField::from_fn(g, |p| {
            if (p[0] - 30.0).abs() <= 1.0 || (p[1] - 10.0).abs() <= 1.0 || (p[1] - 50.0).abs() <= 1.0 || (p[1] - 30.0).abs() <= 1.0 {
                0.1
            } else {
                1.0
            }
        });
        let lm = LandmarkSet { points: vec![[10.0, 30.0], [50.0, 30.0], [30.0, 50.0], [30.0, 10.0]] };
        let cands = saddle_candidates(&pot, &lm, 3).unwrap();
        let product: usize = cands.iter().map(|c| c.len()).product();
        assert!(cands.iter().all(|c| c.len() <= 3));
        assert!(product <= 81);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = SegmentationConfig { tube_width: 12.0, model: AppearanceModel::bhattacharyya(), ..Default::default() };
        let s = toml::to_string(&cfg).unwrap();
        let back: SegmentationConfig = toml::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        assert!(toml::from_str::<SegmentationConfig>("bogus = 1").is_err());
        let bad = SegmentationConfig { upsilon: 0.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn energy_csv_has_a_header_and_rows() {
        let rows = [EnergyRecord { iteration: 0, psi: 1.0, length: 2.0, total: 3.0, area_delta: 0.0 }];
        let s = energy_csv(&rows);
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("iteration,psi,length,total,area_delta"));
        assert!(lines.next().unwrap().starts_with("0,"));
        let _ = PI;
    }
}
