//! Tubular search domains around a contour, their adaptive refinement,
//! the split into per-path subregions, walls, and the squared-distance
//! divergence between contours.

use crate::eikonal::{fmm_solve, FmmOptions, MetricField, Seed, Wall};
use crate::error::{Error, Result};
use crate::geom::{self, Polyline, SegmentIndex, Vec2};
use crate::grid::{distance_to_polyline, BinaryMask, Grid2D, ScalarField, TensorField};

/// Band `{x : dist(x) < width}` around a closed centerline.
#[derive(Clone, Debug)]
pub struct TubularDomain {
    pub mask: BinaryMask,
    pub centerline: Polyline,
    pub width: f64,
    /// Distance used to cut the band (Euclidean, or front arrival times for
    /// adaptive tubes).
    pub dist: ScalarField,
    /// Whether the band must enclose a hole (needed to cut it with a wall).
    pub ring: bool,
}

impl TubularDomain {
    /// `dist - width`: negative inside the band, zero on its boundary.
    pub fn level(&self) -> ScalarField {
        ScalarField { grid: self.dist.grid, values: self.dist.values.iter().map(|d| d - self.width).collect() }
    }
}

/// Checks that `mask` is one connected band, enclosing a non-empty hole if
/// `ring` is set.
fn check_ring(mask: &BinaryMask, ring: bool) -> Result<()> {
    let (_, n) = mask.components();
    if n != 1 {
        return Err(Error::Topology(format!("tube has {n} connected components")));
    }
    if !ring {
        return Ok(());
    }
    let g = mask.grid;
    let (labels, count) = mask.complement().components();
    let mut touches = vec![false; count];
    for k in 0..g.len() {
        let l = labels[k];
        if l == u32::MAX {
            continue;
        }
        let (i, j) = g.coords(k);
        if i == 0 || j == 0 || i + 1 == g.width() || j + 1 == g.height() {
            touches[l as usize] = true;
        }
    }
    if touches.iter().all(|t| *t) {
        return Err(Error::Topology("tube does not enclose a hole".into()));
    }
    Ok(())
}

/// Ring-shaped tube; fails when the band fills the inside of the contour.
pub fn build_tube(contour: &Polyline, width: f64, grid: Grid2D) -> Result<TubularDomain> {
    build_band(contour, width, grid, true)
}

/// Band around a closed contour; the hole is only required when `ring`.
pub fn build_band(contour: &Polyline, width: f64, grid: Grid2D, ring: bool) -> Result<TubularDomain> {
    if !contour.closed || contour.len() < 3 {
        return Err(Error::Topology("tube centerline must be a closed curve".into()));
    }
    if !(width >= 2.0 * grid.spacing()) {
        return Err(Error::invalid(format!("tube width {width} is below two grid cells")));
    }
    let crossings = contour.self_intersections();
    if crossings > 0 {
        return Err(Error::Topology(format!("centerline self-intersects ({crossings} crossings)")));
    }
    let dist = distance_to_polyline(contour, grid);
    let mask = BinaryMask { grid, bits: dist.values.iter().map(|d| *d < width).collect() };
    check_ring(&mask, ring)?;
    Ok(TubularDomain { mask, centerline: contour.clone(), width, dist, ring })
}

/// Front speed classes for the adaptive tube: cells where the boundary is
/// expected to move get potential `upsilon`, undecided cells 1, the rest
/// `1 / upsilon`.
pub fn tube_potential(xi: &ScalarField, shape: &BinaryMask, upsilon: f64, varrho: f64) -> ScalarField {
    let values = xi
        .values
        .iter()
        .zip(&shape.bits)
        .map(|(&x, &inside)| {
            if x.abs() < varrho {
                1.0
            } else if (inside && x >= varrho) || (!inside && x <= -varrho) {
                upsilon
            } else {
                1.0 / upsilon
            }
        })
        .collect();
    ScalarField { grid: xi.grid, values }
}

/// Sub-band of `td` reached by a front from the centerline within time
/// `td.width`, the front moving fast where `xi` suggests the boundary will
/// go and slowly elsewhere.
pub fn adaptive_tube(
    td: &TubularDomain,
    xi: &ScalarField,
    shape: &BinaryMask,
    upsilon: f64,
    varrho_frac: f64,
) -> Result<TubularDomain> {
    if !(upsilon > 0.0 && upsilon <= 1.0) {
        return Err(Error::invalid(format!("upsilon must lie in (0, 1], got {upsilon}")));
    }
    let varrho = varrho_frac * xi.max_abs(Some(&td.mask));
    let potential = tube_potential(xi, shape, upsilon, varrho);
    let dist = front_distance(td, &potential)?;
    let g = td.mask.grid;
    let bits = (0..g.len()).map(|k| td.mask.bits[k] && dist.values[k] < td.width).collect();
    let cut = BinaryMask { grid: g, bits };
    // drop islands that the front only reached through a diagonal
    let (labels, count) = cut.components();
    let mut keep = vec![false; count];
    for k in 0..g.len() {
        if labels[k] != u32::MAX && td.dist.values[k] <= 0.75 * g.spacing() {
            keep[labels[k] as usize] = true;
        }
    }
    let bits = labels.iter().map(|&l| l != u32::MAX && keep[l as usize]).collect();
    let mask = BinaryMask { grid: g, bits };
    check_ring(&mask, td.ring)?;
    Ok(TubularDomain { mask, centerline: td.centerline.clone(), width: td.width, dist, ring: td.ring })
}

/// Arrival times inside `td.mask` of an isotropic front leaving the
/// centerline with slowness `potential`.
pub fn front_distance(td: &TubularDomain, potential: &ScalarField) -> Result<ScalarField> {
    let g = td.mask.grid;
    let h = g.spacing();
    let metric = MetricField::isotropic(potential)?;
    let near = distance_to_polyline(&td.centerline, g);
    let seeds: Vec<Seed> = (0..g.len())
        .filter(|&k| td.mask.bits[k] && near.values[k] <= 0.75 * h)
        .map(|k| Seed { cell: k, value: potential.values[k] * near.values[k], label: 1 })
        .collect();
    let opts = FmmOptions { domain: Some(&td.mask), ..Default::default() };
    let raw = fmm_solve(&metric, &seeds, &opts)?;
    // divide out the grid error measured on a unit-speed front, so that a
    // constant potential reproduces the scaled Euclidean distance
    let unit = MetricField::isotropic(&ScalarField::filled(g, 1.0))?;
    let unit_seeds: Vec<Seed> = seeds.iter().map(|s| Seed { value: near.values[s.cell], ..*s }).collect();
    let flat = fmm_solve(&unit, &unit_seeds, &opts)?;
    let values = (0..g.len())
        .map(|k| {
            let (r, f) = (raw.values[k], flat.values[k]);
            if r.is_finite() && f > 0.0 && f.is_finite() {
                r * near.values[k] / f
            } else {
                r
            }
        })
        .collect();
    Ok(ScalarField { grid: g, values })
}

/// Split of a tube into the regions closest to each path of a contour.
#[derive(Clone, Debug)]
pub struct SubregionDecomposition {
    pub regions: Vec<BinaryMask>,
    /// Start point of each path; path `k` runs from `anchors[k]` to
    /// `anchors[k + 1]` (cyclically).
    pub anchors: Vec<Vec2>,
    /// Cells of the anchors, shared by the two adjacent regions.
    pub anchor_cells: Vec<usize>,
    /// Region index plus one per cell, 0 outside the tube.
    pub labels: Vec<u8>,
}

impl SubregionDecomposition {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Interior of a path: the curve minus a short cap at each end.
fn trimmed(path: &Polyline, cap: f64) -> Polyline {
    let total = path.length();
    if total <= 2.0 * cap {
        return Polyline::open(vec![path.point_at(0.5 * total)]);
    }
    let ss = path.arclengths();
    let mut pts = vec![path.point_at(cap)];
    for (p, s) in path.points.iter().zip(ss) {
        if s > cap && s < total - cap {
            pts.push(*p);
        }
    }
    pts.push(path.point_at(total - cap));
    Polyline::open(pts)
}

/// Assigns every tube cell to the nearest path (ties to the lower index).
/// With one path the only region is the whole tube.
pub fn decompose(td: &TubularDomain, paths: &[Polyline]) -> Result<SubregionDecomposition> {
    let g = td.mask.grid;
    let h = g.spacing();
    if paths.is_empty() {
        return Err(Error::Topology("no paths to decompose along".into()));
    }
    if paths.len() > 250 {
        return Err(Error::invalid("too many paths"));
    }
    if paths.len() == 1 {
        let p = paths[0].points[0];
        let labels = td.mask.bits.iter().map(|b| *b as u8).collect();
        return Ok(SubregionDecomposition {
            regions: vec![td.mask.clone()],
            anchors: vec![p],
            anchor_cells: g.nearest_cell(p).into_iter().collect(),
            labels,
        });
    }
    let m = paths.len();
    for k in 0..m {
        let (a, b) = (&paths[k], &paths[(k + 1) % m]);
        if a.len() < 2 || b.is_empty() {
            return Err(Error::Topology(format!("path {k} is degenerate")));
        }
        let gap = geom::dist(*a.points.last().unwrap(), b.points[0]);
        if gap > 1.5 * h {
            return Err(Error::Topology(format!("path {k} does not end where path {} starts (gap {gap:.2})", (k + 1) % m)));
        }
    }
    let mut segs = Vec::new();
    for (k, path) in paths.iter().enumerate() {
        let t = trimmed(path, 0.5 * h);
        if t.len() == 1 {
            segs.push((t.points[0], t.points[0], k));
        } else {
            segs.extend(t.segments().map(|(a, b)| (a, b, k)));
        }
    }
    let index = SegmentIndex::new(segs);
    let mut labels = vec![0u8; g.len()];
    let mut regions = vec![BinaryMask::empty(g); m];
    for c in 0..g.len() {
        if td.mask.bits[c] {
            let (_, k) = index.nearest(g.center(c));
            labels[c] = k as u8 + 1;
            regions[k].bits[c] = true;
        }
    }
    let anchors: Vec<Vec2> = paths.iter().map(|p| p.points[0]).collect();
    let mut anchor_cells = Vec::with_capacity(m);
    for (k, &p) in anchors.iter().enumerate() {
        let c = g.nearest_cell(p).ok_or_else(|| Error::Topology(format!("landmark {k} is off the grid")))?;
        regions[k].bits[c] = true;
        regions[(k + m - 1) % m].bits[c] = true;
        anchor_cells.push(c);
    }
    Ok(SubregionDecomposition { regions, anchors, anchor_cells, labels })
}

/// Unit tangent of a closed curve at arclength `s`, averaged over a short
/// window so that vertices get the bisector direction.
fn smoothed_tangent(c: &Polyline, s: f64, h: f64) -> Option<Vec2> {
    let a = c.point_at(s - h);
    let b = c.point_at(s + h);
    geom::normalize(geom::sub(b, a)).or_else(|| geom::normalize(c.locate(s).1))
}

/// Normal cut across the tube at arclength `s` of the centerline.
pub fn make_wall(td: &TubularDomain, s: f64) -> Result<Wall> {
    let g = td.mask.grid;
    let h = g.spacing();
    let c = &td.centerline;
    let anchor = c.point_at(s);
    let tangent = smoothed_tangent(c, s, h).ok_or_else(|| Error::Topology("degenerate centerline".into()))?;
    let normal = geom::perp(tangent);
    let anchor_cell = g
        .nearest_cell(anchor)
        .filter(|k| td.mask.bits[*k])
        .ok_or_else(|| Error::Topology("wall anchor outside the tube".into()))?;
    let mut cells = BinaryMask::empty(g);
    cells.bits[anchor_cell] = true;
    let ds = 0.25 * h;
    for sign in [1.0, -1.0] {
        let mut prev = g.coords(anchor_cell);
        let mut outside = 0usize;
        let mut u = ds;
        loop {
            let p = geom::add(anchor, geom::scale(normal, sign * u));
            let Some(k) = g.nearest_cell(p) else { break };
            let (i, j) = g.coords(k);
            if (i, j) != prev {
                if td.mask.bits[k] && outside > 0 {
                    // re-entered the band on its far side
                    break;
                }
                // keep the cut four-connected
                if i != prev.0 && j != prev.1 {
                    let side = g.index(i, prev.1);
                    if td.mask.bits[side] || outside > 0 {
                        cells.bits[side] = true;
                    }
                }
                if !td.mask.bits[k] {
                    outside += 1;
                    if outside > 2 {
                        break;
                    }
                }
                cells.bits[k] = true;
                prev = (i, j);
            }
            u += ds;
        }
    }
    let rest = BinaryMask {
        grid: g,
        bits: (0..g.len()).map(|k| td.mask.bits[k] && !cells.bits[k]).collect(),
    };
    let (_, n) = rest.components();
    if n != 1 {
        return Err(Error::Topology(format!("wall leaves {n} components instead of one")));
    }
    let pick = |sign: f64| -> Option<usize> {
        (1..=6).find_map(|r| {
            let p = geom::add(anchor, geom::scale(tangent, sign * r as f64 * h));
            g.nearest_cell(p)
                .filter(|&k| rest.bits[k] && sign * geom::dot(geom::sub(g.center(k), anchor), tangent) > 0.0)
        })
    };
    let plus_seed = pick(1.0).ok_or_else(|| Error::Topology("no free cell ahead of the wall".into()))?;
    let minus_seed = pick(-1.0).ok_or_else(|| Error::Topology("no free cell behind the wall".into()))?;
    Ok(Wall { anchor, tangent, normal, cells, plus_seed, minus_seed })
}

/// Squared distance to `reference`, integrated along `s` with the
/// Riemannian speed of `tensors` (midpoint rule).
pub fn divergence(s: &Polyline, reference: &Polyline, tensors: &TensorField) -> f64 {
    let index = SegmentIndex::from_polyline(reference);
    s.segments()
        .map(|(a, b)| {
            let mid = geom::lerp(a, b, 0.5);
            let d = index.nearest(mid).0;
            let speed = tensors.sample(mid).quad(geom::sub(b, a)).max(0.0).sqrt();
            d * d * speed
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randers::Sym2;
    use std::f64::consts::{PI, TAU};

    fn circle(c: Vec2, r: f64, n: usize) -> Polyline {
        Polyline::closed(
            (0..n)
                .map(|k| {
                    let a = k as f64 / n as f64 * TAU;
                    [c[0] + r * a.cos(), c[1] + r * a.sin()]
                })
                .collect(),
        )
    }

    fn arc(c: Vec2, r: f64, a0: f64, a1: f64, n: usize) -> Polyline {
        Polyline::open(
            (0..=n)
                .map(|k| {
                    let a = a0 + (a1 - a0) * k as f64 / n as f64;
                    [c[0] + r * a.cos(), c[1] + r * a.sin()]
                })
                .collect(),
        )
    }

    fn disk_tube() -> TubularDomain {
        let g = Grid2D::pixels(200, 200).unwrap();
        build_tube(&circle([100.0, 100.0], 50.0, 720), 10.0, g).unwrap()
    }

    #[test]
    fn circle_tube_is_an_annulus() {
        let td = disk_tube();
        let expect = PI * (60.0f64.powi(2) - 40.0f64.powi(2));
        assert!((td.mask.area() - expect).abs() < 0.02 * expect);
        for k in 0..td.mask.grid.len() {
            assert_eq!(td.mask.bits[k], td.dist.values[k] < 10.0);
        }
    }

    #[test]
    fn tube_rejects_bad_widths() {
        let g = Grid2D::pixels(200, 200).unwrap();
        let c = circle([100.0, 100.0], 30.0, 360);
        assert!(matches!(build_tube(&c, 1.5, g), Err(Error::InvalidInput(_))));
        assert!(matches!(build_tube(&c, 35.0, g), Err(Error::Topology(_))));
    }

    #[test]
    fn square_tube_has_rounded_corners() {
        let g = Grid2D::pixels(60, 60).unwrap();
        let sq = Polyline::closed(vec![[15.0, 15.0], [45.0, 15.0], [45.0, 45.0], [15.0, 45.0]]);
        let td = build_tube(&sq, 5.0, g).unwrap();
        // dense sampling of the square as an independent distance
        let samples: Vec<Vec2> = (0..1200).map(|k| sq.point_at(k as f64 * 0.1)).collect();
        for k in 0..g.len() {
            let p = g.center(k);
            let d = samples.iter().map(|q| geom::dist(*q, p)).fold(f64::INFINITY, f64::min);
            if (d - 5.0).abs() > 0.1 {
                assert_eq!(td.mask.bits[k], d < 5.0, "cell {p:?}");
            }
        }
        // outside a corner the band is round, not square
        assert!(!td.mask.get(49, 49));
        assert!(td.mask.get(48, 45));
    }

    #[test]
    fn flat_gradient_keeps_symmetric_tube() {
        let td = disk_tube();
        let g = td.mask.grid;
        let shape = BinaryMask::from_fn(g, |p| geom::dist(p, [100.0, 100.0]) < 50.0);
        let zero = ScalarField::filled(g, 0.0);
        let a = adaptive_tube(&td, &zero, &shape, 0.2, 0.1).unwrap();
        assert_eq!(a.mask.bits, td.mask.bits);
        let one = ScalarField::filled(g, 1.0);
        let b = adaptive_tube(&td, &one, &shape, 1.0, 0.1).unwrap();
        assert_eq!(b.mask.bits, td.mask.bits);
    }

    fn reach(mask: &BinaryMask, from: Vec2, dir: Vec2) -> f64 {
        let g = mask.grid;
        let mut last = 0.0;
        for k in 0..400 {
            let u = k as f64 * 0.25;
            let p = geom::add(from, geom::scale(dir, u));
            match g.nearest_cell(p) {
                Some(c) if mask.bits[c] => last = u,
                _ => break,
            }
        }
        last
    }

    #[test]
    fn adaptive_tube_follows_the_gradient() {
        let td = disk_tube();
        let g = td.mask.grid;
        let shape = BinaryMask::from_fn(g, |p| geom::dist(p, [100.0, 100.0]) < 50.0);
        // inside cells are likely to be dropped: fast front inwards
        let xi = ScalarField::filled(g, 1.0);
        let a = adaptive_tube(&td, &xi, &shape, 0.2, 0.1).unwrap();
        assert!(a.mask.bits.iter().zip(&td.mask.bits).all(|(a, t)| !*a || *t));
        let on = [150.0, 100.0];
        let inner = reach(&a.mask, on, [-1.0, 0.0]);
        let outer = reach(&a.mask, on, [1.0, 0.0]);
        assert!(inner > 9.0, "{inner}");
        // capped by the symmetric band, the ratio is upsilon
        assert!((outer / inner - 0.2).abs() < 0.2 * 0.2 + 0.05, "{outer} / {inner}");
    }

    #[test]
    fn uncapped_front_reaches_scale_with_upsilon_squared() {
        // wide band so the fast side is not cut by the symmetric tube
        let g = Grid2D::pixels(400, 400).unwrap();
        let c = [200.0, 200.0];
        let td = build_tube(&circle(c, 120.0, 1440), 110.0, g).unwrap();
        let shape = BinaryMask::from_fn(g, |p| geom::dist(p, c) < 120.0);
        let pot = tube_potential(&ScalarField::filled(g, 1.0), &shape, 0.2, 0.1);
        let d = front_distance(&td, &pot).unwrap();
        let cut = BinaryMask { grid: g, bits: (0..g.len()).map(|k| td.mask.bits[k] && d.values[k] < 20.0).collect() };
        let on = [320.0, 200.0];
        let inner = reach(&cut, on, [-1.0, 0.0]);
        let outer = reach(&cut, on, [1.0, 0.0]);
        assert!((inner - 100.0).abs() < 3.0, "{inner}");
        assert!((outer / inner - 0.04).abs() < 0.2 * 0.04, "{outer} / {inner}");
    }

    #[test]
    fn two_half_circles_split_the_annulus() {
        let td = disk_tube();
        let g = td.mask.grid;
        let c = [100.0, 100.0];
        let paths = [arc(c, 50.0, 0.0, PI, 180), arc(c, 50.0, PI, TAU, 180)];
        let dec = decompose(&td, &paths).unwrap();
        assert_eq!(dec.len(), 2);
        let mut shared = 0;
        for k in 0..g.len() {
            if !td.mask.bits[k] {
                assert!(!dec.regions[0].bits[k] && !dec.regions[1].bits[k]);
                continue;
            }
            let p = g.center(k);
            let (a, b) = (dec.regions[0].bits[k], dec.regions[1].bits[k]);
            assert!(a || b);
            if a && b {
                shared += 1;
                continue;
            }
            // brute force nearest path, away from the splitting diameter
            let d0 = paths[0].distance_to(p);
            let d1 = paths[1].distance_to(p);
            if (d0 - d1).abs() > 1.0 {
                assert_eq!(a, d0 < d1, "{p:?}");
            }
        }
        assert_eq!(shared, 2);
    }

    #[test]
    fn three_arcs_give_equal_sectors() {
        let td = disk_tube();
        let c = [100.0, 100.0];
        let t = TAU / 3.0;
        let paths: Vec<Polyline> = (0..3).map(|k| arc(c, 50.0, k as f64 * t, (k + 1) as f64 * t, 120)).collect();
        let dec = decompose(&td, &paths).unwrap();
        let areas: Vec<f64> = dec.regions.iter().map(|r| r.area()).collect();
        let total = td.mask.area();
        for a in &areas {
            assert!((a - total / 3.0).abs() < 0.03 * total / 3.0, "{areas:?}");
        }
        // a partition up to the shared landmark cells
        let sum: f64 = areas.iter().sum();
        assert_eq!(sum - 3.0, total);
    }

    #[test]
    fn single_path_is_the_whole_tube() {
        let td = disk_tube();
        let dec = decompose(&td, &[td.centerline.clone()]).unwrap();
        assert_eq!(dec.len(), 1);
        assert_eq!(dec.regions[0].bits, td.mask.bits);
    }

    #[test]
    fn broken_chain_is_rejected() {
        let td = disk_tube();
        let c = [100.0, 100.0];
        let paths = [arc(c, 50.0, 0.0, 3.0, 90), arc(c, 50.0, PI, TAU, 90)];
        assert!(matches!(decompose(&td, &paths), Err(Error::Topology(_))));
    }

    #[test]
    fn wall_on_annulus_is_radial() {
        let td = disk_tube();
        let g = td.mask.grid;
        let c = [100.0, 100.0];
        for s in [0.0, 40.0, 100.5, 250.0] {
            let w = make_wall(&td, s).unwrap();
            let radial = geom::normalize(geom::sub(w.anchor, c)).unwrap();
            assert!(geom::cross(w.normal, radial).abs() < 0.02);
            for k in 0..g.len() {
                if w.cells.bits[k] && td.mask.bits[k] {
                    let off = geom::sub(g.center(k), w.anchor);
                    assert!(geom::cross(radial, off).abs() < 1.5, "{s}");
                }
            }
            // seeds sit on opposite sides of the cut
            let sp = geom::dot(geom::sub(g.center(w.plus_seed), w.anchor), w.tangent);
            let sm = geom::dot(geom::sub(g.center(w.minus_seed), w.anchor), w.tangent);
            assert!(sp > 0.0 && sm < 0.0);
            let rest = BinaryMask {
                grid: g,
                bits: (0..g.len()).map(|k| td.mask.bits[k] && !w.cells.bits[k]).collect(),
            };
            assert_eq!(rest.components().1, 1);
        }
    }

    #[test]
    fn wall_at_square_edge_midpoint_is_perpendicular() {
        let g = Grid2D::pixels(60, 60).unwrap();
        let sq = Polyline::closed(vec![[15.0, 15.0], [45.0, 15.0], [45.0, 45.0], [15.0, 45.0]]);
        let td = build_tube(&sq, 5.0, g).unwrap();
        let w = make_wall(&td, 15.0).unwrap();
        assert_eq!(w.anchor, [30.0, 15.0]);
        assert!((w.normal[0]).abs() < 1e-12);
        // corner vertex: bisector normal
        let wc = make_wall(&td, 30.0).unwrap();
        assert!((wc.normal[0].abs() - wc.normal[1].abs()).abs() < 1e-9);
    }

    #[test]
    fn divergence_of_concentric_circles() {
        let g = Grid2D::pixels(200, 200).unwrap();
        let id = TensorField::identity(g);
        let a = circle([100.0, 100.0], 50.0, 2000);
        let b = circle([100.0, 100.0], 52.0, 2000);
        assert!(divergence(&a, &a, &id) < 1e-20);
        let d = divergence(&a, &b, &id);
        assert!((d - 400.0 * PI).abs() < 0.02 * 400.0 * PI, "{d}");
        let four = TensorField { grid: g, values: vec![Sym2::scaled_identity(4.0); g.len()] };
        assert!((divergence(&a, &b, &four) - 2.0 * d).abs() < 1e-9 * d);
    }
}
