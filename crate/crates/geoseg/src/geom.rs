//! Planar vectors, polylines and the segment queries the solvers share.
//!
//! Points are `[x, y]` in continuous grid coordinates. "Counter-clockwise"
//! means positive shoelace area in those coordinates; with rows growing
//! downwards this is clockwise on screen, but every formula in the crate
//! (curl, Stokes, winding number) uses the same algebraic convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

#[inline]
pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn dist(a: Vec2, b: Vec2) -> f64 {
    norm(sub(a, b))
}

/// Rotation by +90 degrees: `(a, b) -> (-b, a)`.
#[inline]
pub fn perp(a: Vec2) -> Vec2 {
    [-a[1], a[0]]
}

#[inline]
pub fn lerp(a: Vec2, b: Vec2, t: f64) -> Vec2 {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

pub fn normalize(a: Vec2) -> Option<Vec2> {
    let n = norm(a);
    (n > 1e-300 && n.is_finite()).then(|| scale(a, 1.0 / n))
}

/// Distance from `p` to the segment `[a, b]` and the segment parameter of
/// the closest point.
pub fn point_segment(p: Vec2, a: Vec2, b: Vec2) -> (f64, f64) {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (dist(p, lerp(a, b, t)), t)
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    cross(sub(b, a), sub(c, a))
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p[0] >= a[0].min(b[0]) - 1e-12
        && p[0] <= a[0].max(b[0]) + 1e-12
        && p[1] >= a[1].min(b[1]) - 1e-12
        && p[1] <= a[1].max(b[1]) + 1e-12
}

/// Closed-segment intersection test, touching included.
pub fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Minimum distance between two segments.
pub fn segment_segment(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment(a, c, d)
        .0
        .min(point_segment(b, c, d).0)
        .min(point_segment(c, a, b).0)
        .min(point_segment(d, a, b).0)
}

/// Ordered point sequence, optionally closed (last point joins the first).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub closed: bool,
    pub points: Vec<Vec2>,
}

impl Polyline {
    pub fn open(points: Vec<Vec2>) -> Self {
        Polyline { closed: false, points }
    }

    pub fn closed(points: Vec<Vec2>) -> Self {
        Polyline { closed: true, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segment_count(&self) -> usize {
        match (self.points.len(), self.closed) {
            (0 | 1, _) => 0,
            (n, true) => n,
            (n, false) => n - 1,
        }
    }

    pub fn segment(&self, i: usize) -> (Vec2, Vec2) {
        let n = self.points.len();
        (self.points[i], self.points[(i + 1) % n])
    }

    pub fn segments(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        (0..self.segment_count()).map(move |i| self.segment(i))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| dist(a, b)).sum()
    }

    /// Shoelace area; positive for counter-clockwise closed curves.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        if n < 3 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..n {
            s += cross(self.points[i], self.points[(i + 1) % n]);
        }
        0.5 * s
    }

    pub fn reversed(&self) -> Polyline {
        let mut points = self.points.clone();
        points.reverse();
        Polyline { closed: self.closed, points }
    }

    /// Reverses a closed curve if needed so that its area is positive,
    /// keeping the first point in place.
    pub fn orient_ccw(&mut self) {
        if self.closed && self.signed_area() < 0.0 && self.points.len() > 2 {
            self.points[1..].reverse();
        }
    }

    /// Drops consecutive points closer than `eps` (and the closing duplicate).
    pub fn dedup(&mut self, eps: f64) {
        let mut out: Vec<Vec2> = Vec::with_capacity(self.points.len());
        let last = self.points.len().saturating_sub(1);
        for (i, &p) in self.points.iter().enumerate() {
            match out.last() {
                Some(&q) if dist(p, q) <= eps => {
                    // keep the true endpoint of an open curve
                    if !self.closed && i == last {
                        *out.last_mut().unwrap() = p;
                    }
                }
                _ => out.push(p),
            }
        }
        if self.closed {
            while out.len() > 1 && dist(out[0], *out.last().unwrap()) <= eps {
                out.pop();
            }
        }
        self.points = out;
    }

    /// Point at arclength `s` measured from the first vertex; wraps for
    /// closed curves and clamps for open ones.
    pub fn point_at(&self, s: f64) -> Vec2 {
        self.locate(s).0
    }

    /// Point at arclength `s` together with the unit tangent there.
    pub fn locate(&self, s: f64) -> (Vec2, Vec2) {
        let total = self.length();
        let mut s = if self.closed && total > 0.0 {
            s.rem_euclid(total)
        } else {
            s.clamp(0.0, total)
        };
        let mut last = ([0.0; 2], [1.0, 0.0]);
        for (a, b) in self.segments() {
            let l = dist(a, b);
            if l <= 0.0 {
                continue;
            }
            let t = scale(sub(b, a), 1.0 / l);
            if s <= l {
                return (lerp(a, b, s / l), t);
            }
            s -= l;
            last = (b, t);
        }
        if self.points.len() == 1 {
            return (self.points[0], [1.0, 0.0]);
        }
        last
    }

    /// Cumulative arclength at each vertex.
    pub fn arclengths(&self) -> Vec<f64> {
        let mut acc = Vec::with_capacity(self.points.len());
        let mut s = 0.0;
        for (i, &p) in self.points.iter().enumerate() {
            if i > 0 {
                s += dist(self.points[i - 1], p);
            }
            acc.push(s);
        }
        acc
    }

    /// Resamples with a spacing close to `step`. Open curves keep both
    /// endpoints; closed curves keep the first vertex.
    pub fn resample(&self, step: f64) -> Polyline {
        let total = self.length();
        if total <= 0.0 || self.points.len() < 2 {
            return self.clone();
        }
        let n = ((total / step).round() as usize).max(if self.closed { 3 } else { 1 });
        let ds = total / n as f64;
        let count = if self.closed { n } else { n + 1 };
        let mut points = Vec::with_capacity(count);
        let mut seg = 0usize;
        let mut seg_start = 0.0;
        let nseg = self.segment_count();
        for k in 0..count {
            let s = (k as f64 * ds).min(total);
            loop {
                let (a, b) = self.segment(seg);
                let l = dist(a, b);
                if s <= seg_start + l || seg + 1 == nseg {
                    let t = if l > 0.0 { ((s - seg_start) / l).clamp(0.0, 1.0) } else { 0.0 };
                    points.push(lerp(a, b, t));
                    break;
                }
                seg_start += l;
                seg += 1;
            }
        }
        if !self.closed {
            *points.last_mut().unwrap() = *self.points.last().unwrap();
        }
        Polyline { closed: self.closed, points }
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        if self.points.len() == 1 {
            return dist(p, self.points[0]);
        }
        self.segments()
            .map(|(a, b)| point_segment(p, a, b).0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Arclength of the point of the curve closest to `p`.
    pub fn project(&self, p: Vec2) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        let mut s = 0.0;
        for (a, b) in self.segments() {
            let (d, t) = point_segment(p, a, b);
            let l = dist(a, b);
            if d < best.0 {
                best = (d, s + t * l);
            }
            s += l;
        }
        best.1
    }

    /// Number of intersecting pairs of non-adjacent segments.
    pub fn self_intersections(&self) -> usize {
        let n = self.segment_count();
        let mut boxes: Vec<(f64, f64, f64, f64, usize)> = (0..n)
            .map(|i| {
                let (a, b) = self.segment(i);
                (a[0].min(b[0]), a[0].max(b[0]), a[1].min(b[1]), a[1].max(b[1]), i)
            })
            .collect();
        boxes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut count = 0;
        for u in 0..boxes.len() {
            let (_, xmax, ymin, ymax, i) = boxes[u];
            for &(x0, _, y0, y1, j) in &boxes[u + 1..] {
                if x0 > xmax + 1e-12 {
                    break;
                }
                if y0 > ymax + 1e-12 || y1 < ymin - 1e-12 {
                    continue;
                }
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                let adjacent = hi == lo + 1 || (self.closed && lo == 0 && hi == n - 1);
                if adjacent {
                    continue;
                }
                let (a, b) = self.segment(i);
                let (c, d) = self.segment(j);
                if segments_intersect(a, b, c, d) {
                    count += 1;
                }
            }
        }
        count
    }

    /// Winding number of the closed curve around `p`. Fails when `p` lies
    /// within 1e-9 of the curve.
    pub fn winding_number(&self, p: Vec2) -> Result<i32> {
        if !self.closed {
            return Err(Error::invalid("winding number needs a closed curve"));
        }
        if self.distance_to(p) < 1e-9 {
            return Err(Error::invalid("point lies on the curve"));
        }
        let mut wn = 0;
        for (a, b) in self.segments() {
            if a[1] <= p[1] {
                if b[1] > p[1] && orient(a, b, p) > 0.0 {
                    wn += 1;
                }
            } else if b[1] <= p[1] && orient(a, b, p) < 0.0 {
                wn -= 1;
            }
        }
        Ok(wn)
    }

    /// Appends `other`, skipping its first point when it duplicates our last.
    pub fn extend_with(&mut self, other: &[Vec2]) {
        let skip = match (self.points.last(), other.first()) {
            (Some(&a), Some(&b)) if dist(a, b) < 1e-9 => 1,
            _ => 0,
        };
        self.points.extend_from_slice(&other[skip..]);
    }
}

/// Rings of bins searched around a query before falling back to a scan
/// of the occupied bins.
const RING_SEARCH: usize = 3;

/// Bin-accelerated nearest-segment queries over a labelled segment set.
pub struct SegmentIndex {
    segs: Vec<(Vec2, Vec2, usize)>,
    origin: Vec2,
    bin: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
    occupied: Vec<u32>,
}

impl SegmentIndex {
    pub fn new(segs: Vec<(Vec2, Vec2, usize)>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut total = 0.0;
        for &(a, b, _) in &segs {
            for p in [a, b] {
                lo = [lo[0].min(p[0]), lo[1].min(p[1])];
                hi = [hi[0].max(p[0]), hi[1].max(p[1])];
            }
            total += dist(a, b);
        }
        if segs.is_empty() {
            lo = [0.0; 2];
            hi = [1.0; 2];
        }
        let mean = if segs.is_empty() { 1.0 } else { total / segs.len() as f64 };
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let bin = (4.0 * mean).max(extent / 64.0).max(1e-6);
        let nx = ((hi[0] - lo[0]) / bin).floor() as usize + 1;
        let ny = ((hi[1] - lo[1]) / bin).floor() as usize + 1;
        let mut bins = vec![Vec::new(); nx * ny];
        for (k, &(a, b, _)) in segs.iter().enumerate() {
            let bx0 = ((a[0].min(b[0]) - lo[0]) / bin).floor() as usize;
            let bx1 = (((a[0].max(b[0]) - lo[0]) / bin).floor() as usize).min(nx - 1);
            let by0 = ((a[1].min(b[1]) - lo[1]) / bin).floor() as usize;
            let by1 = (((a[1].max(b[1]) - lo[1]) / bin).floor() as usize).min(ny - 1);
            for by in by0..=by1 {
                for bx in bx0..=bx1 {
                    bins[by * nx + bx].push(k as u32);
                }
            }
        }
        let occupied = (0..bins.len() as u32).filter(|&b| !bins[b as usize].is_empty()).collect();
        SegmentIndex { segs, origin: lo, bin, nx, ny, bins, occupied }
    }

    pub fn from_polyline(poly: &Polyline) -> Self {
        if poly.points.len() == 1 {
            let p = poly.points[0];
            return Self::new(vec![(p, p, 0)]);
        }
        Self::new(poly.segments().map(|(a, b)| (a, b, 0)).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.segs.is_empty()
    }

    /// Nearest segment distance and its label; ties go to the lowest label.
    pub fn nearest(&self, p: Vec2) -> (f64, usize) {
        if self.segs.is_empty() {
            return (f64::INFINITY, usize::MAX);
        }
        let cx = (((p[0] - self.origin[0]) / self.bin).floor().max(0.0) as usize).min(self.nx - 1);
        let cy = (((p[1] - self.origin[1]) / self.bin).floor().max(0.0) as usize).min(self.ny - 1);
        let mut best = (f64::INFINITY, usize::MAX);
        let consider = |best: &mut (f64, usize), b: usize| {
            for &k in &self.bins[b] {
                let (a, q, label) = self.segs[k as usize];
                let d = point_segment(p, a, q).0;
                if d < best.0 || (d == best.0 && label < best.1) {
                    *best = (d, label);
                }
            }
        };
        for r in 0..=RING_SEARCH {
            let (x0, x1) = (cx as isize - r as isize, cx as isize + r as isize);
            let (y0, y1) = (cy as isize - r as isize, cy as isize + r as isize);
            for by in y0..=y1 {
                if by < 0 || by >= self.ny as isize {
                    continue;
                }
                let edge_row = by == y0 || by == y1;
                let mut bx = x0;
                while bx <= x1 {
                    if bx >= 0 && bx < self.nx as isize {
                        consider(&mut best, by as usize * self.nx + bx as usize);
                    }
                    bx += if edge_row || bx == x1 { 1 } else { x1 - x0 };
                }
            }
            if best.0 < r as f64 * self.bin {
                return best;
            }
        }
        // far from every segment: seed with the closest occupied bin, then
        // visit the others that could still hold something nearer
        let box_dist = |b: u32| {
            let (bx, by) = ((b as usize % self.nx) as f64, (b as usize / self.nx) as f64);
            let lo = [self.origin[0] + bx * self.bin, self.origin[1] + by * self.bin];
            let dx = (lo[0] - p[0]).max(p[0] - lo[0] - self.bin).max(0.0);
            let dy = (lo[1] - p[1]).max(p[1] - lo[1] - self.bin).max(0.0);
            dx.hypot(dy)
        };
        let dists: Vec<f64> = self.occupied.iter().map(|&b| box_dist(b)).collect();
        if let Some(first) = (0..dists.len()).min_by(|&a, &b| dists[a].total_cmp(&dists[b])) {
            consider(&mut best, self.occupied[first] as usize);
        }
        for (d, &b) in dists.iter().zip(&self.occupied) {
            if *d <= best.0 {
                consider(&mut best, b as usize);
            }
        }
        best
    }
}
