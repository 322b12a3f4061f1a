//! Uniform grids and the fields, masks and images sampled on them.
//!
//! Cell `(i, j)` has its center at `(i * h, j * h)`; `i` runs along x
//! (columns) and `j` along y (rows). Storage is row-major.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{self, Polyline, SegmentIndex, Vec2};
use crate::randers::Sym2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2D {
    width: usize,
    height: usize,
    spacing: f64,
}

impl Grid2D {
    pub fn new(width: usize, height: usize, spacing: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("grid must be non-empty, got {width}x{height}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid(format!("grid spacing must be positive, got {spacing}")));
        }
        Ok(Grid2D { width, height, spacing })
    }

    /// Unit-spacing grid, the common case for images.
    pub fn pixels(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, 1.0)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical area covered by the cells.
    pub fn area(&self) -> f64 {
        self.len() as f64 * self.spacing * self.spacing
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    /// Index of `(i, j)` when it lies inside the grid.
    #[inline]
    pub fn checked_index(&self, i: isize, j: isize) -> Option<usize> {
        (i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height)
            .then(|| j as usize * self.width + i as usize)
    }

    #[inline]
    pub fn center(&self, idx: usize) -> Vec2 {
        let (i, j) = self.coords(idx);
        [i as f64 * self.spacing, j as f64 * self.spacing]
    }

    /// Continuous cell coordinates of a physical point.
    #[inline]
    pub fn to_cell(&self, p: Vec2) -> Vec2 {
        [p[0] / self.spacing, p[1] / self.spacing]
    }

    pub fn contains_point(&self, p: Vec2) -> bool {
        let c = self.to_cell(p);
        c[0] >= -0.5 && c[1] >= -0.5 && c[0] < self.width as f64 - 0.5 && c[1] < self.height as f64 - 0.5
    }

    /// Cell whose center is nearest to `p`, if `p` falls on the grid.
    pub fn nearest_cell(&self, p: Vec2) -> Option<usize> {
        let c = self.to_cell(p);
        self.checked_index(c[0].round() as isize, c[1].round() as isize)
    }

    /// Four-neighbours of a cell.
    pub fn neighbors4(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.coords(idx);
        let (i, j) = (i as isize, j as isize);
        [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .into_iter()
            .filter_map(move |(di, dj)| self.checked_index(i + di, j + dj))
    }

    /// Bilinear weights of `p`, clamped to the grid: four `(index, weight)`.
    pub fn bilinear(&self, p: Vec2) -> [(usize, f64); 4] {
        let c = self.to_cell(p);
        let x = c[0].clamp(0.0, (self.width - 1) as f64);
        let y = c[1].clamp(0.0, (self.height - 1) as f64);
        let i0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let j0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let i1 = (i0 + 1).min(self.width - 1);
        let j1 = (j0 + 1).min(self.height - 1);
        let fx = x - i0 as f64;
        let fy = y - j0 as f64;
        [
            (self.index(i0, j0), (1.0 - fx) * (1.0 - fy)),
            (self.index(i1, j0), fx * (1.0 - fy)),
            (self.index(i0, j1), (1.0 - fx) * fy),
            (self.index(i1, j1), fx * fy),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn filled(grid: Grid2D, v: f64) -> Self {
        ScalarField { grid, values: vec![v; grid.len()] }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(Vec2) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.center(k))).collect();
        ScalarField { grid, values }
    }

    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid("field size does not match grid"));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn sample(&self, p: Vec2) -> f64 {
        self.grid.bilinear(p).iter().map(|&(k, w)| w * self.values[k]).sum()
    }

    /// Largest absolute value, optionally restricted to a mask.
    pub fn max_abs(&self, mask: Option<&BinaryMask>) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(k, _)| mask.map_or(true, |m| m.bits[*k]))
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub grid: Grid2D,
    pub values: Vec<Vec2>,
}

impl VectorField {
    pub fn zeros(grid: Grid2D) -> Self {
        VectorField { grid, values: vec![[0.0; 2]; grid.len()] }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(Vec2) -> Vec2) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.center(k))).collect();
        VectorField { grid, values }
    }

    pub fn sample(&self, p: Vec2) -> Vec2 {
        let mut out = [0.0; 2];
        for (k, w) in self.grid.bilinear(p) {
            out[0] += w * self.values[k][0];
            out[1] += w * self.values[k][1];
        }
        out
    }

    pub fn max_norm(&self, mask: Option<&BinaryMask>) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(k, _)| mask.map_or(true, |m| m.bits[*k]))
            .map(|(_, v)| geom::norm(*v))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    pub grid: Grid2D,
    pub values: Vec<Sym2>,
}

impl TensorField {
    pub fn identity(grid: Grid2D) -> Self {
        TensorField { grid, values: vec![Sym2::identity(); grid.len()] }
    }

    pub fn sample(&self, p: Vec2) -> Sym2 {
        let mut out = Sym2::new(0.0, 0.0, 0.0);
        for (k, w) in self.grid.bilinear(p) {
            let m = self.values[k];
            out.xx += w * m.xx;
            out.xy += w * m.xy;
            out.yy += w * m.yy;
        }
        out
    }
}

/// Image with one or more channels, stored planar, values nominally in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub grid: Grid2D,
    pub channels: Vec<Vec<f64>>,
}

impl Image {
    pub fn gray(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, vec![values])
    }

    pub fn new(grid: Grid2D, channels: Vec<Vec<f64>>) -> Result<Self> {
        if channels.is_empty() || channels.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::invalid("image planes do not match grid"));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite samples"));
        }
        Ok(Image { grid, channels })
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Channel-averaged intensity.
    pub fn luminance(&self) -> Vec<f64> {
        let n = self.channels.len() as f64;
        (0..self.grid.len())
            .map(|k| self.channels.iter().map(|c| c[k]).sum::<f64>() / n)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub grid: Grid2D,
    pub bits: Vec<bool>,
}

impl Eq for Grid2D {}

impl BinaryMask {
    pub fn empty(grid: Grid2D) -> Self {
        BinaryMask { grid, bits: vec![false; grid.len()] }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(Vec2) -> bool) -> Self {
        BinaryMask { grid, bits: (0..grid.len()).map(|k| f(grid.center(k))).collect() }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Physical area of the set cells.
    pub fn area(&self) -> f64 {
        self.count() as f64 * self.grid.spacing() * self.grid.spacing()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[self.grid.index(i, j)]
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask { grid: self.grid, bits: self.bits.iter().map(|b| !b).collect() }
    }

    /// Cells set in exactly one of the two masks.
    pub fn symmetric_difference(&self, other: &BinaryMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }

    /// Intersection over union; two empty masks count as identical.
    pub fn jaccard(&self, other: &BinaryMask) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Four-connected components of the set cells, as a label per cell
    /// (`u32::MAX` for unset cells) and the component count.
    pub fn components(&self) -> (Vec<u32>, usize) {
        let g = self.grid;
        let mut label = vec![u32::MAX; g.len()];
        let mut count = 0u32;
        let mut stack = Vec::new();
        for start in 0..g.len() {
            if !self.bits[start] || label[start] != u32::MAX {
                continue;
            }
            label[start] = count;
            stack.push(start);
            while let Some(k) = stack.pop() {
                for n in g.neighbors4(k) {
                    if self.bits[n] && label[n] == u32::MAX {
                        label[n] = count;
                        stack.push(n);
                    }
                }
            }
            count += 1;
        }
        (label, count as usize)
    }

    /// Boundary of the largest set region, traced between cell centers
    /// (marching squares at level 1/2) and oriented counter-clockwise.
    pub fn boundary_contour(&self) -> Result<Polyline> {
        let loops = marching_squares(self);
        loops
            .into_iter()
            .max_by(|a, b| a.signed_area().abs().total_cmp(&b.signed_area().abs()))
            .map(|mut c| {
                c.orient_ccw();
                c
            })
            .ok_or_else(|| Error::Topology("mask has no boundary".into()))
    }
}

fn marching_squares(mask: &BinaryMask) -> Vec<Polyline> {
    use std::collections::HashMap;
    let g = mask.grid;
    let (w, h) = (g.width() as isize, g.height() as isize);
    let at = |i: isize, j: isize| g.checked_index(i, j).map_or(false, |k| mask.bits[k]);
    // Vertices live on edge midpoints; keys are doubled cell coordinates.
    let mut segs: Vec<((i64, i64), (i64, i64))> = Vec::new();
    for j in -1..h {
        for i in -1..w {
            let tl = at(i, j);
            let tr = at(i + 1, j);
            let br = at(i + 1, j + 1);
            let bl = at(i, j + 1);
            let (x, y) = (2 * i as i64, 2 * j as i64);
            let top = (x + 1, y);
            let right = (x + 2, y + 1);
            let bottom = (x + 1, y + 2);
            let left = (x, y + 1);
            let code = (tl as u8) | (tr as u8) << 1 | (br as u8) << 2 | (bl as u8) << 3;
            match code {
                0 | 15 => {}
                1 | 14 => segs.push((left, top)),
                2 | 13 => segs.push((top, right)),
                4 | 11 => segs.push((right, bottom)),
                8 | 7 => segs.push((bottom, left)),
                3 | 12 => segs.push((left, right)),
                6 | 9 => segs.push((top, bottom)),
                // diagonal pairs stay separated (4-connectivity)
                5 => {
                    segs.push((left, top));
                    segs.push((right, bottom));
                }
                10 => {
                    segs.push((top, right));
                    segs.push((bottom, left));
                }
                _ => unreachable!(),
            }
        }
    }
    let mut adj: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (k, (a, b)) in segs.iter().enumerate() {
        adj.entry(*a).or_default().push(k);
        adj.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segs.len()];
    let mut loops = Vec::new();
    let s = 0.5 * g.spacing();
    for start in 0..segs.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let first = segs[start].0;
        let mut pts = vec![first];
        let mut cur = segs[start].1;
        while cur != first {
            pts.push(cur);
            let next = adj[&cur].iter().copied().find(|&k| !used[k]);
            let Some(k) = next else { break };
            used[k] = true;
            cur = if segs[k].0 == cur { segs[k].1 } else { segs[k].0 };
        }
        let points = pts.into_iter().map(|(x, y)| [x as f64 * s, y as f64 * s]).collect();
        loops.push(Polyline::closed(points));
    }
    loops
}

/// Fills the cells whose centers lie inside a simple closed contour
/// (even-odd rule, half-open at the boundary).
pub fn rasterize(contour: &Polyline, grid: Grid2D) -> Result<BinaryMask> {
    if !contour.closed || contour.points.len() < 3 {
        return Err(Error::Topology("rasterization needs a closed contour with 3+ points".into()));
    }
    if contour.signed_area().abs() < 1e-12 {
        return Err(Error::Topology("contour encloses no area".into()));
    }
    let crossings = contour.self_intersections();
    if crossings > 0 {
        return Err(Error::Topology(format!("contour self-intersects ({crossings} crossings)")));
    }
    Ok(fill_polygon(contour, grid))
}

/// Even-odd fill without the simplicity check.
pub(crate) fn fill_polygon(contour: &Polyline, grid: Grid2D) -> BinaryMask {
    let h = grid.spacing();
    let mut mask = BinaryMask::empty(grid);
    let mut xs = Vec::new();
    for j in 0..grid.height() {
        let y = j as f64 * h;
        xs.clear();
        for (a, b) in contour.segments() {
            if (a[1] <= y && y < b[1]) || (b[1] <= y && y < a[1]) {
                xs.push(a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let i0 = (pair[0] / h).ceil().max(0.0) as usize;
            let i1 = (pair[1] / h).ceil().min(grid.width() as f64) as usize;
            for i in i0..i1.max(i0) {
                mask.bits[grid.index(i, j)] = true;
            }
        }
    }
    mask
}

/// Fraction of each cell covered by the inside of a simple closed contour:
/// exact along rows, sampled on `COVERAGE_ROWS` lines per cell across them.
pub fn coverage(contour: &Polyline, grid: Grid2D) -> Result<ScalarField> {
    rasterize(contour, grid)?;
    let h = grid.spacing();
    let n = COVERAGE_ROWS;
    let mut values = vec![0.0; grid.len()];
    let mut xs = Vec::new();
    for j in 0..grid.height() {
        for r in 0..n {
            let y = (j as f64 - 0.5 + (r as f64 + 0.5) / n as f64) * h;
            xs.clear();
            for (a, b) in contour.segments() {
                if (a[1] <= y && y < b[1]) || (b[1] <= y && y < a[1]) {
                    xs.push(a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                let (x0, x1) = (pair[0] / h + 0.5, pair[1] / h + 0.5);
                let i0 = x0.floor().max(0.0) as usize;
                let i1 = (x1.ceil().max(0.0) as usize).min(grid.width());
                for i in i0..i1 {
                    let overlap = (x1.min(i as f64 + 1.0) - x0.max(i as f64)).max(0.0);
                    values[grid.index(i, j)] += overlap / n as f64;
                }
            }
        }
    }
    Ok(ScalarField { grid, values })
}

const COVERAGE_ROWS: usize = 16;

/// Exact Euclidean distance from every cell center to a polyline.
pub fn distance_to_polyline(poly: &Polyline, grid: Grid2D) -> ScalarField {
    let index = SegmentIndex::from_polyline(poly);
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| index.nearest(grid.center(k)).0)
        .collect();
    ScalarField { grid, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(c: Vec2, r: f64, n: usize) -> Polyline {
        Polyline::closed(
            (0..n)
                .map(|k| {
                    let a = k as f64 / n as f64 * std::f64::consts::TAU;
                    [c[0] + r * a.cos(), c[1] + r * a.sin()]
                })
                .collect(),
        )
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(Grid2D::new(0, 3, 1.0).is_err());
        assert!(Grid2D::new(3, 3, 0.0).is_err());
        assert!(Grid2D::new(3, 3, f64::NAN).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid2D::new(7, 5, 0.5).unwrap();
        for k in 0..g.len() {
            let (i, j) = g.coords(k);
            assert_eq!(g.index(i, j), k);
        }
        assert_eq!(g.center(g.index(3, 2)), [1.5, 1.0]);
        assert_eq!(g.nearest_cell([1.6, 0.9]), Some(g.index(3, 2)));
        assert_eq!(g.checked_index(-1, 0), None);
    }

    #[test]
    fn bilinear_reproduces_affine_fields() {
        let g = Grid2D::new(9, 6, 0.5).unwrap();
        let f = ScalarField::from_fn(g, |p| 2.0 * p[0] - 3.0 * p[1] + 1.0);
        for p in [[0.3, 0.7], [3.9, 2.4], [1.0, 1.0]] {
            assert!((f.sample(p) - (2.0 * p[0] - 3.0 * p[1] + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn rasterized_disk_area() {
        let g = Grid2D::pixels(100, 100).unwrap();
        let m = rasterize(&circle([50.2, 49.7], 30.0, 400), g).unwrap();
        let area = std::f64::consts::PI * 900.0;
        assert!((m.count() as f64 - area).abs() < 0.01 * area);
    }

    #[test]
    fn rasterize_rejects_crossings() {
        let g = Grid2D::pixels(10, 10).unwrap();
        let bow = Polyline::closed(vec![[1.0, 1.0], [8.0, 8.0], [8.0, 1.0], [1.0, 8.0]]);
        assert!(matches!(rasterize(&bow, g), Err(Error::Topology(_))));
    }

    #[test]
    fn unit_square_fills_one_cell() {
        let g = Grid2D::pixels(5, 5).unwrap();
        let sq = Polyline::closed(vec![[1.5, 1.5], [2.5, 1.5], [2.5, 2.5], [1.5, 2.5]]);
        let m = rasterize(&sq, g).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(2, 2));
    }

    #[test]
    fn coverage_of_offset_square_is_exact() {
        let g = Grid2D::pixels(6, 6).unwrap();
        let sq = Polyline::closed(vec![[1.0, 1.0], [3.0, 1.0], [3.0, 3.0], [1.0, 3.0]]);
        let c = coverage(&sq, g).unwrap();
        let at = |i, j| c.values[g.index(i, j)];
        assert!((at(2, 2) - 1.0).abs() < 1e-12);
        assert!((at(1, 2) - 0.5).abs() < 1e-12);
        assert!((at(3, 3) - 0.25).abs() < 1e-12);
        assert_eq!(at(4, 2), 0.0);
        assert!((c.values.iter().sum::<f64>() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn disk_coverage_is_a_fraction_with_the_right_area() {
        let g = Grid2D::pixels(64, 64).unwrap();
        let c = coverage(&circle([31.3, 32.6], 20.0, 720), g).unwrap();
        assert!(c.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let poly_area = circle([31.3, 32.6], 20.0, 720).signed_area();
        assert!((c.values.iter().sum::<f64>() - poly_area).abs() < 0.05);
    }

    #[test]
    fn boundary_contour_reproduces_mask() {
        let g = Grid2D::pixels(60, 50).unwrap();
        let m = BinaryMask::from_fn(g, |p| {
            let d = [(p[0] - 30.0) / 20.0, (p[1] - 24.0) / 14.0];
            d[0] * d[0] + d[1] * d[1] < 1.0
        });
        let c = m.boundary_contour().unwrap();
        assert!(c.signed_area() > 0.0);
        assert_eq!(c.self_intersections(), 0);
        let back = rasterize(&c, g).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn distance_field_is_exact() {
        let g = Grid2D::new(40, 30, 0.5).unwrap();
        let poly = circle([10.0, 7.0], 4.0, 64);
        let d = distance_to_polyline(&poly, g);
        for k in (0..g.len()).step_by(7) {
            assert!((d.values[k] - poly.distance_to(g.center(k))).abs() < 1e-12);
        }
    }

    #[test]
    fn components_and_jaccard() {
        let g = Grid2D::pixels(6, 1).unwrap();
        let a = BinaryMask { grid: g, bits: vec![true, true, false, true, false, false] };
        let b = BinaryMask { grid: g, bits: vec![true, false, false, true, true, false] };
        assert_eq!(a.components().1, 2);
        assert!((a.jaccard(&b) - 0.5).abs() < 1e-12);
        assert_eq!(a.symmetric_difference(&b), 2);
        let e = BinaryMask::empty(g);
        assert_eq!(e.jaccard(&e), 1.0);
    }
}
