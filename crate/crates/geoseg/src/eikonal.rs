//! Fast marching for Randers metrics on Cartesian grids.
//!
//! Each cell gets an adaptive stencil: the eight-neighbour fan, bisected
//! (Stern-Brocot style, `[e1, e1+e2]` and `[e1+e2, e2]`) until every
//! segment satisfies an acuteness test with respect to the local norm.
//! Values are updated with the semi-Lagrangian Hopf-Lax operator, i.e. the
//! minimum over the stencil boundary of the linearly interpolated distance
//! plus the local cost to reach that point. Acute stencils make the update
//! causal, so a Dijkstra-like single pass suffices.
//!
//! Geodesics are recovered by integrating `-dF*(dD)` backwards from the
//! target with second order Runge-Kutta steps.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::error::{Error, Result};
use crate::geom::{self, Polyline, Vec2};
use crate::grid::{BinaryMask, Grid2D, ScalarField};
use crate::randers::{RandersNorm, Sym2};

/// Refinement depth cap for stencil bisection.
pub const MAX_STENCIL_DEPTH: usize = 8;

const FAN: [[i32; 2]; 8] = [[1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0], [-1, -1], [0, -1], [1, -1]];

/// Spatially varying Randers data `(M, omega)` on a grid.
#[derive(Clone, Debug)]
pub struct MetricField {
    pub grid: Grid2D,
    pub tensors: Vec<Sym2>,
    pub omega: Vec<Vec2>,
}

impl MetricField {
    pub fn new(grid: Grid2D, tensors: Vec<Sym2>, omega: Vec<Vec2>) -> Result<Self> {
        if tensors.len() != grid.len() || omega.len() != grid.len() {
            return Err(Error::invalid("metric arrays do not match grid"));
        }
        let m = MetricField { grid, tensors, omega };
        m.validate(None)?;
        Ok(m)
    }

    /// Same norm everywhere.
    pub fn uniform(grid: Grid2D, norm: RandersNorm) -> Self {
        MetricField { grid, tensors: vec![norm.m; grid.len()], omega: vec![norm.omega; grid.len()] }
    }

    /// Isotropic metric `P(x) |v|` from a positive cost field.
    pub fn isotropic(cost: &ScalarField) -> Result<Self> {
        if let Some(v) = cost.values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("cost must be positive and finite, found {v}")));
        }
        Ok(MetricField {
            grid: cost.grid,
            tensors: cost.values.iter().map(|c| Sym2::scaled_identity(c * c)).collect(),
            omega: vec![[0.0, 0.0]; cost.grid.len()],
        })
    }

    /// Field `M = Id - a1^2 w w^T`, `omega = a2 w` with `w` the clockwise
    /// unit tangent to circles about `center`. Requires `a1 < 1` and
    /// `a2 < sqrt(1 - a1^2)`.
    pub fn rotational(grid: Grid2D, center: Vec2, a1: f64, a2: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&a1) || !(a2 >= 0.0 && a2 < (1.0 - a1 * a1).sqrt()) {
            return Err(Error::invalid(format!("rotational metric needs 0 <= a1 < 1 and 0 <= a2 < sqrt(1 - a1^2), got {a1}, {a2}")));
        }
        let mut tensors = Vec::with_capacity(grid.len());
        let mut omega = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let w = rotational_direction(grid.center(k), center);
            tensors.push(Sym2::scaled_identity(1.0).add(&Sym2::outer(w).scale(-a1 * a1)));
            omega.push(geom::scale(w, a2));
        }
        MetricField::new(grid, tensors, omega)
    }

    #[inline]
    pub fn norm_at(&self, k: usize) -> RandersNorm {
        RandersNorm::new_unchecked(self.tensors[k], self.omega[k])
    }

    /// Checks positivity and compatibility, reporting the worst cell.
    pub fn validate(&self, domain: Option<&BinaryMask>) -> Result<()> {
        let mut worst: Option<(usize, f64)> = None;
        for k in 0..self.grid.len() {
            if domain.map_or(false, |d| !d.bits[k]) {
                continue;
            }
            let margin = if self.tensors[k].is_spd() { self.norm_at(k).margin() } else { f64::NEG_INFINITY };
            let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
            if margin < crate::randers::COMPAT_MARGIN && worst.map_or(true, |(_, w)| margin < w) {
                worst = Some((k, margin));
            }
        }
        match worst {
            None => Ok(()),
            Some((k, margin)) => {
                let (x, y) = self.grid.coords(k);
                Err(Error::Incompatible { x, y, margin })
            }
        }
    }
}

/// Causality test for the stencil segment with vertices `x + e1`, `x + e2`.
pub fn is_acute(norm: &RandersNorm, e1: [i32; 2], e2: [i32; 2]) -> bool {
    let v1 = [-(e1[0] as f64), -(e1[1] as f64)];
    let v2 = [-(e2[0] as f64), -(e2[1] as f64)];
    match (norm.gradient(v1), norm.gradient(v2)) {
        (Some(g1), Some(g2)) => geom::dot(g1, v2) >= 0.0 && geom::dot(g2, v1) >= 0.0,
        _ => false,
    }
}

/// Closed fan of integer offsets in counter-clockwise order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stencil {
    pub offsets: Vec<[i32; 2]>,
}

impl Stencil {
    pub fn fan() -> Self {
        Stencil { offsets: FAN.to_vec() }
    }

    /// Adaptive stencil for `norm`, refined until acute or `max_depth`.
    pub fn for_norm(norm: &RandersNorm, max_depth: usize) -> Self {
        let isotropic = norm.omega == [0.0, 0.0] && norm.m.xy == 0.0 && norm.m.xx == norm.m.yy;
        if isotropic {
            return Self::fan();
        }
        let mut offsets = Vec::with_capacity(16);
        for k in 0..8 {
            refine(norm, FAN[k], FAN[(k + 1) % 8], 0, max_depth, &mut offsets);
        }
        Stencil { offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// True when every segment passes the acuteness test.
    pub fn is_acute_for(&self, norm: &RandersNorm) -> bool {
        let n = self.offsets.len();
        (0..n).all(|k| is_acute(norm, self.offsets[k], self.offsets[(k + 1) % n]))
    }
}

fn refine(norm: &RandersNorm, e1: [i32; 2], e2: [i32; 2], depth: usize, max_depth: usize, out: &mut Vec<[i32; 2]>) {
    if depth >= max_depth || is_acute(norm, e1, e2) {
        out.push(e1);
        return;
    }
    let mid = [e1[0] + e2[0], e1[1] + e2[1]];
    refine(norm, e1, mid, depth + 1, max_depth, out);
    refine(norm, mid, e2, depth + 1, max_depth, out);
}

/// Minimises `(1-t) d1 + t d2 + F(-(1-t) e1 - t e2)` over `t` in [0, 1],
/// with offsets already scaled to physical units. Returns value and `t`.
pub fn hopf_lax_segment(norm: &RandersNorm, e1: Vec2, e2: Vec2, d1: f64, d2: f64) -> (f64, f64) {
    match (d1.is_finite(), d2.is_finite()) {
        (false, false) => return (f64::INFINITY, 0.0),
        (true, false) => return (d1 + norm.eval(geom::scale(e1, -1.0)), 0.0),
        (false, true) => return (d2 + norm.eval(geom::scale(e2, -1.0)), 1.0),
        _ => {}
    }
    let a = geom::scale(e1, -1.0);
    let c = geom::sub(e1, e2);
    let m = &norm.m;
    let alpha = m.quad(c);
    let beta = geom::dot(m.apply(a), c);
    let gamma = m.quad(a);
    let k = (d2 - d1) + geom::dot(norm.omega, c);
    let f = |t: f64| d1 + t * (d2 - d1) + norm.eval(geom::add(a, geom::scale(c, t)));
    let mut best = {
        let (f0, f1) = (f(0.0), f(1.0));
        if f0 <= f1 {
            (f0, 0.0)
        } else {
            (f1, 1.0)
        }
    };
    let disc = alpha * gamma - beta * beta;
    if alpha > 0.0 && k * k < alpha && disc >= 0.0 {
        let s = -k * (disc / (alpha - k * k)).sqrt();
        let t = ((s - beta) / alpha).clamp(0.0, 1.0);
        let v = f(t);
        if v < best.0 {
            best = (v, t);
        }
    } else if !(alpha > 0.0) || disc < 0.0 {
        // degenerate data: fall back to a ternary search
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if f(m1) < f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let t = 0.5 * (lo + hi);
        if f(t) < best.0 {
            best = (f(t), t);
        }
    }
    best
}

/// Hopf-Lax update of cell `idx` from the current values of its stencil
/// vertices; non-finite vertices count as unreached.
pub fn hopf_lax_update(values: &[f64], grid: Grid2D, idx: usize, norm: &RandersNorm, stencil: &Stencil) -> f64 {
    let (i, j) = grid.coords(idx);
    let h = grid.spacing();
    let n = stencil.offsets.len();
    let value = |e: [i32; 2]| {
        grid.checked_index(i as isize + e[0] as isize, j as isize + e[1] as isize)
            .map_or(f64::INFINITY, |k| values[k])
    };
    let mut best = f64::INFINITY;
    for k in 0..n {
        let (e1, e2) = (stencil.offsets[k], stencil.offsets[(k + 1) % n]);
        let p1 = [e1[0] as f64 * h, e1[1] as f64 * h];
        let p2 = [e2[0] as f64 * h, e2[1] as f64 * h];
        best = best.min(hopf_lax_segment(norm, p1, p2, value(e1), value(e2)).0);
    }
    best
}

/// A starting cell with its initial value and front label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Seed {
    pub cell: usize,
    pub value: f64,
    pub label: u8,
}

impl Seed {
    pub fn at(cell: usize) -> Self {
        Seed { cell, value: 0.0, label: 1 }
    }
}

#[derive(Clone, Debug, Default)]
pub enum StopRule {
    /// Run until every reachable cell is accepted.
    #[default]
    Exhaust,
    /// Stop once all listed cells are accepted.
    Cells(Vec<usize>),
    /// Stop once the interface between two labelled fronts stops growing.
    Interface,
}

#[derive(Clone, Debug, Default)]
pub struct FmmOptions<'a> {
    /// Cells outside the domain are never reached.
    pub domain: Option<&'a BinaryMask>,
    /// Wall cells are never reached and block updates that cross them.
    pub walls: Option<&'a BinaryMask>,
    pub stop: StopRule,
    /// Stencil refinement cap; `None` means [`MAX_STENCIL_DEPTH`].
    pub max_depth: Option<usize>,
    /// Cells within this many grid steps of a seed start from the seed's
    /// own norm, `value + F_s(x - s)`, instead of being marched. Zero
    /// disables it.
    pub seed_radius: f64,
}

/// Seed radius used by the point-source helpers.
pub const SEED_RADIUS: f64 = 6.0;

/// Optimal stencil point recorded for an accepted cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Parent {
    pub a: u32,
    pub b: u32,
    pub t: f64,
}

const NO_PARENT: Parent = Parent { a: u32::MAX, b: u32::MAX, t: 0.0 };

#[derive(Clone, Debug)]
pub struct DistanceMap {
    pub grid: Grid2D,
    pub values: Vec<f64>,
    pub accepted: Vec<bool>,
    pub labels: Vec<u8>,
    pub parents: Vec<Parent>,
    /// Acceptance order.
    pub order: Vec<u32>,
    pub seeds: Vec<Seed>,
    pub blocked: Vec<bool>,
    /// Cells of the interface between differently labelled fronts.
    pub interface: Vec<usize>,
    /// Upper bound on the norm of unit vectors over the domain.
    pub speed_bound: f64,
    pub seed_radius: f64,
}

impl DistanceMap {
    pub fn value_at(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn to_field(&self) -> ScalarField {
        ScalarField { grid: self.grid, values: self.values.clone() }
    }

    /// Bilinear interpolation of the distance, restricted to finite corners.
    pub fn sample(&self, p: Vec2) -> f64 {
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (k, w) in self.grid.bilinear(p) {
            if self.values[k].is_finite() && w > 0.0 {
                acc += w * self.values[k];
                wsum += w;
            }
        }
        if wsum > 0.0 {
            acc / wsum
        } else {
            f64::INFINITY
        }
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on value, ties broken by cell index
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cells strictly between the two endpoints that the segment from 0 to `e`
/// touches, corners included.
fn swept_cells(e: [i32; 2]) -> Vec<[i32; 2]> {
    let mut out = Vec::new();
    let (p, q) = (e[0] as f64, e[1] as f64);
    let (x0, x1) = (e[0].min(0), e[0].max(0));
    for i in x0..=x1 {
        let xa = (i as f64 - 0.5).max(p.min(0.0));
        let xb = (i as f64 + 0.5).min(p.max(0.0));
        let (ya, yb) = if e[0] == 0 {
            (q.min(0.0), q.max(0.0))
        } else {
            let y1 = xa * q / p;
            let y2 = xb * q / p;
            (y1.min(y2), y1.max(y2))
        };
        let j0 = (ya - 0.5).ceil() as i32;
        let j1 = (yb + 0.5).floor() as i32;
        for j in j0..=j1 {
            if [i, j] != [0, 0] && [i, j] != e {
                out.push([i, j]);
            }
        }
    }
    out
}

struct Stencils {
    start: Vec<u32>,
    offsets: Vec<[i32; 2]>,
}

impl Stencils {
    fn of(&self, k: usize) -> &[[i32; 2]] {
        &self.offsets[self.start[k] as usize..self.start[k + 1] as usize]
    }
}

struct Solver {
    grid: Grid2D,
    blocked: Vec<bool>,
    any_blocked: bool,
    stencils: Stencils,
    swept: HashMap<[i32; 2], Vec<[i32; 2]>>,
}

impl Solver {
    fn new(metric: &MetricField, opts: &FmmOptions) -> Result<(Self, f64)> {
        let grid = metric.grid;
        let blocked: Vec<bool> = (0..grid.len())
            .map(|k| opts.domain.map_or(false, |d| !d.bits[k]) || opts.walls.map_or(false, |w| w.bits[k]))
            .collect();
        metric.validate(opts.domain)?;
        let depth = opts.max_depth.unwrap_or(MAX_STENCIL_DEPTH);
        let mut start = Vec::with_capacity(grid.len() + 1);
        let mut offsets = Vec::new();
        let mut speed: f64 = 0.0;
        let mut cache: Option<(RandersNorm, Vec<[i32; 2]>)> = None;
        for k in 0..grid.len() {
            start.push(offsets.len() as u32);
            if blocked[k] {
                continue;
            }
            let norm = metric.norm_at(k);
            speed = speed.max(norm.max_speed_bound());
            match &cache {
                Some((n, s)) if *n == norm => offsets.extend_from_slice(s),
                _ => {
                    let s = Stencil::for_norm(&norm, depth).offsets;
                    offsets.extend_from_slice(&s);
                    cache = Some((norm, s));
                }
            }
        }
        start.push(offsets.len() as u32);
        let any_blocked = blocked.iter().any(|b| *b);
        let mut swept = HashMap::new();
        if any_blocked {
            for e in &offsets {
                swept.entry(*e).or_insert_with(|| swept_cells(*e));
            }
        }
        let solver = Solver { grid, blocked, any_blocked, stencils: Stencils { start, offsets }, swept };
        Ok((solver, speed))
    }

    /// Cell reached from `y` by offset `e`, if the move stays off blocked cells.
    #[inline]
    fn vertex(&self, y: usize, e: [i32; 2]) -> Option<usize> {
        let (i, j) = self.grid.coords(y);
        let (i, j) = (i as isize, j as isize);
        let x = self.grid.checked_index(i + e[0] as isize, j + e[1] as isize)?;
        if self.any_blocked {
            if self.blocked[x] {
                return None;
            }
            for c in &self.swept[&e] {
                match self.grid.checked_index(i + c[0] as isize, j + c[1] as isize) {
                    Some(m) if !self.blocked[m] => {}
                    _ => return None,
                }
            }
        }
        Some(x)
    }

    fn reverse_lists(&self) -> (Vec<u32>, Vec<(u32, u16)>) {
        let n = self.grid.len();
        let mut count = vec![0u32; n + 1];
        for y in 0..n {
            if self.blocked[y] {
                continue;
            }
            for &e in self.stencils.of(y) {
                if let Some(x) = self.vertex(y, e) {
                    count[x + 1] += 1;
                }
            }
        }
        for k in 0..n {
            count[k + 1] += count[k];
        }
        let mut fill = count.clone();
        let mut entries = vec![(0u32, 0u16); count[n] as usize];
        for y in 0..n {
            if self.blocked[y] {
                continue;
            }
            for (pos, &e) in self.stencils.of(y).iter().enumerate() {
                if let Some(x) = self.vertex(y, e) {
                    entries[fill[x] as usize] = (y as u32, pos as u16);
                    fill[x] += 1;
                }
            }
        }
        (count, entries)
    }
}

/// Solves the eikonal equation from `seeds` with the given options.
pub fn fmm_solve(metric: &MetricField, seeds: &[Seed], opts: &FmmOptions) -> Result<DistanceMap> {
    let grid = metric.grid;
    let h = grid.spacing();
    if seeds.is_empty() {
        return Err(Error::invalid("no seed cells"));
    }
    let (solver, speed_bound) = Solver::new(metric, opts)?;
    for s in seeds {
        if s.cell >= grid.len() {
            return Err(Error::invalid("seed outside the grid"));
        }
        if solver.blocked[s.cell] {
            return Err(Error::invalid("seed lies on a blocked cell"));
        }
    }
    let (rev_start, rev) = solver.reverse_lists();
    let n = grid.len();
    let mut values = vec![f64::INFINITY; n];
    let mut accepted = vec![false; n];
    let mut labels = vec![0u8; n];
    let mut parents = vec![NO_PARENT; n];
    let mut order = Vec::new();
    let mut heap = BinaryHeap::new();
    for s in seeds {
        if s.value < values[s.cell] {
            values[s.cell] = s.value;
            labels[s.cell] = s.label;
            heap.push(Entry(s.value, s.cell));
        }
    }
    if opts.seed_radius > 0.0 {
        for s in seeds {
            seed_neighbourhood(metric, &solver, s, opts.seed_radius, &mut values, &mut labels, &mut parents, &mut heap);
        }
    }
    let stop_cells: Vec<usize> = match &opts.stop {
        StopRule::Cells(c) => c.clone(),
        _ => Vec::new(),
    };
    let mut stops_left = stop_cells.iter().filter(|&&c| c < n && !solver.blocked[c]).count();
    let mut interface = Vec::new();
    let mut in_interface = vec![false; n];
    let mut interface_max = f64::NEG_INFINITY;
    let mut front = f64::NEG_INFINITY;

    while let Some(Entry(d, x)) = heap.pop() {
        if accepted[x] || d > values[x] {
            continue;
        }
        if matches!(opts.stop, StopRule::Interface) && !interface.is_empty() && d > interface_max + 2.0 * speed_bound * h {
            break;
        }
        accepted[x] = true;
        order.push(x as u32);
        front = front.max(d);
        if matches!(opts.stop, StopRule::Interface) {
            for nb in grid.neighbors4(x) {
                if accepted[nb] && labels[nb] != labels[x] {
                    for c in [x, nb] {
                        if !in_interface[c] {
                            in_interface[c] = true;
                            interface.push(c);
                            interface_max = interface_max.max(values[c]);
                        }
                    }
                }
            }
        }
        if stop_cells.contains(&x) {
            stops_left -= 1;
            if stops_left == 0 {
                break;
            }
        }
        for &(y, pos) in &rev[rev_start[x] as usize..rev_start[x + 1] as usize] {
            let y = y as usize;
            if accepted[y] {
                continue;
            }
            let st = solver.stencils.of(y);
            let m = st.len();
            let pos = pos as usize;
            let norm = metric.norm_at(y);
            let mut best = (values[y], None);
            for (p, q) in [((pos + m - 1) % m, pos), (pos, (pos + 1) % m)] {
                let (e1, e2) = (st[p], st[q]);
                let c1 = solver.vertex(y, e1).filter(|&c| accepted[c]);
                let c2 = solver.vertex(y, e2).filter(|&c| accepted[c]);
                let d1 = c1.map_or(f64::INFINITY, |c| values[c]);
                let d2 = c2.map_or(f64::INFINITY, |c| values[c]);
                let p1 = [e1[0] as f64 * h, e1[1] as f64 * h];
                let p2 = [e2[0] as f64 * h, e2[1] as f64 * h];
                let (v, t) = hopf_lax_segment(&norm, p1, p2, d1, d2);
                // clamp keeps acceptance monotone where the depth cap left
                // a non-acute segment
                let v = v.max(front);
                if v < best.0 {
                    let a = c1.unwrap_or(usize::MAX);
                    let b = c2.unwrap_or(usize::MAX);
                    best = (v, Some((a, b, t)));
                }
            }
            if let (v, Some((a, b, t))) = best {
                values[y] = v;
                let (a, b) = if a == usize::MAX { (b, b) } else if b == usize::MAX { (a, a) } else { (a, b) };
                parents[y] = Parent { a: a as u32, b: b as u32, t };
                labels[y] = if t <= 0.5 { labels[a] } else { labels[b] };
                heap.push(Entry(v, y));
            }
        }
    }
    for k in 0..n {
        if !accepted[k] {
            values[k] = f64::INFINITY;
            labels[k] = 0;
        }
    }
    Ok(DistanceMap {
        grid,
        values,
        accepted,
        labels,
        parents,
        order,
        seeds: seeds.to_vec(),
        blocked: solver.blocked,
        interface,
        speed_bound,
        seed_radius: opts.seed_radius,
    })
}

#[allow(clippy::too_many_arguments)]
fn seed_neighbourhood(
    metric: &MetricField,
    solver: &Solver,
    s: &Seed,
    radius: f64,
    values: &mut [f64],
    labels: &mut [u8],
    parents: &mut [Parent],
    heap: &mut BinaryHeap<Entry>,
) {
    let g = metric.grid;
    let norm = metric.norm_at(s.cell);
    let (si, sj) = g.coords(s.cell);
    let r = radius.floor() as i32;
    for di in -r..=r {
        for dj in -r..=r {
            if (di * di + dj * dj) as f64 > radius * radius || (di, dj) == (0, 0) {
                continue;
            }
            let Some(y) = g.checked_index(si as isize + di as isize, sj as isize + dj as isize) else { continue };
            let clear = !solver.blocked[y]
                && swept_cells([di, dj]).iter().all(|c| {
                    g.checked_index(si as isize + c[0] as isize, sj as isize + c[1] as isize).map_or(false, |k| !solver.blocked[k])
                });
            if !clear {
                continue;
            }
            let v = s.value + norm.eval(geom::sub(g.center(y), g.center(s.cell)));
            if v < values[y] {
                values[y] = v;
                labels[y] = s.label;
                parents[y] = Parent { a: s.cell as u32, b: s.cell as u32, t: 0.0 };
                heap.push(Entry(v, y));
            }
        }
    }
}

/// Unit vector `-(p - center)^perp / |p - center|`, zero at the center.
pub fn rotational_direction(p: Vec2, center: Vec2) -> Vec2 {
    geom::normalize(geom::perp(geom::sub(p, center))).map_or([0.0, 0.0], |v| geom::scale(v, -1.0))
}

/// Minimal path from `source` to `target` (both snapped to cells), ordered
/// from source to target, with the distance map it was traced on.
pub fn minimal_path(metric: &MetricField, source: Vec2, target: Vec2) -> Result<(DistanceMap, Polyline)> {
    let g = metric.grid;
    let cell = |p: Vec2| g.nearest_cell(p).ok_or_else(|| Error::invalid(format!("point ({}, {}) is outside the grid", p[0], p[1])));
    let (s, t) = (cell(source)?, cell(target)?);
    let opts = FmmOptions { stop: StopRule::Cells(vec![t]), seed_radius: SEED_RADIUS, ..Default::default() };
    let map = fmm_solve(metric, &[Seed::at(s)], &opts)?;
    if !map.accepted[t] {
        return Err(Error::Unreachable("target not reached".into()));
    }
    let path = backtrack(&map, metric, g.center(t), &BacktrackOptions::default())?.reversed();
    Ok((map, path))
}

/// Length-weighted mean of `<unit tangent, field>` along a path.
pub fn mean_alignment(path: &Polyline, field: impl Fn(Vec2) -> Vec2) -> f64 {
    let (mut acc, mut total) = (0.0, 0.0);
    for (a, b) in path.segments() {
        let d = geom::sub(b, a);
        let l = geom::norm(d);
        if l > 0.0 {
            acc += geom::dot(d, field(geom::lerp(a, b, 0.5)));
            total += l;
        }
    }
    if total > 0.0 { acc / total } else { 0.0 }
}

/// Distance from a single source cell over the whole grid.
pub fn distance_from(metric: &MetricField, source: usize) -> Result<DistanceMap> {
    fmm_solve(metric, &[Seed::at(source)], &FmmOptions { seed_radius: SEED_RADIUS, ..Default::default() })
}

/// Largest violation of the Hopf-Lax fixed point over accepted cells
/// whose stencil vertices are all accepted.
pub fn fixed_point_residual(metric: &MetricField, map: &DistanceMap) -> f64 {
    let mut worst: f64 = 0.0;
    let g = map.grid;
    let near_seed = |k: usize| map.seeds.iter().any(|s| geom::dist(g.center(k), g.center(s.cell)) <= map.seed_radius * g.spacing() + 1e-9);
    for k in 0..map.grid.len() {
        if !map.accepted[k] || near_seed(k) || map.blocked[k] {
            continue;
        }
        let norm = metric.norm_at(k);
        let st = Stencil::for_norm(&norm, MAX_STENCIL_DEPTH);
        let (i, j) = map.grid.coords(k);
        let complete = st.offsets.iter().all(|e| {
            map.grid
                .checked_index(i as isize + e[0] as isize, j as isize + e[1] as isize)
                .map_or(false, |c| map.accepted[c] && !map.blocked[c])
        });
        if !complete {
            continue;
        }
        let v = hopf_lax_update(&map.values, map.grid, k, &norm, &st);
        worst = worst.max((v - map.values[k]).abs());
    }
    worst
}

/// Cut across a tubular domain used to compute closed geodesics: the
/// solver starts just ahead of the cut and stops just behind it.
#[derive(Clone, Debug)]
pub struct Wall {
    pub anchor: Vec2,
    pub tangent: Vec2,
    pub normal: Vec2,
    pub cells: BinaryMask,
    pub plus_seed: usize,
    pub minus_seed: usize,
}

/// Options controlling geodesic extraction.
#[derive(Clone, Copy, Debug)]
pub struct BacktrackOptions {
    /// Step length in cells.
    pub step: f64,
    /// Distance (in cells) at which the path snaps onto the source.
    pub snap_radius: f64,
    /// Steps without progress before giving up.
    pub max_stall: usize,
    /// Only follow cells carrying this front label.
    pub label: Option<u8>,
}

impl Default for BacktrackOptions {
    fn default() -> Self {
        BacktrackOptions { step: 0.25, snap_radius: 2.0, max_stall: 20, label: None }
    }
}

struct Tracer<'a> {
    map: &'a DistanceMap,
    metric: &'a MetricField,
    label: Option<u8>,
    is_seed: Vec<bool>,
}

impl<'a> Tracer<'a> {
    fn valid(&self, k: usize) -> bool {
        self.map.accepted[k] && !self.map.blocked[k] && self.label.map_or(true, |l| self.map.labels[k] == l)
    }

    fn tol(&self) -> f64 {
        2.0 * std::f64::consts::SQRT_2 * self.map.speed_bound * self.map.grid.spacing()
    }

    /// Valid bilinear corners of `p` on the same side of any wall as the
    /// heaviest one.
    fn corners(&self, p: Vec2) -> Vec<(usize, f64)> {
        let mut cs: Vec<(usize, f64)> = self
            .map
            .grid
            .bilinear(p)
            .into_iter()
            .filter(|&(k, _)| self.valid(k))
            .collect();
        if cs.is_empty() {
            return cs;
        }
        let reference = cs.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        let dref = self.map.values[reference];
        let tol = self.tol();
        cs.retain(|&(k, _)| (self.map.values[k] - dref).abs() <= tol);
        let wsum: f64 = cs.iter().map(|c| c.1).sum();
        if wsum <= 0.0 {
            return vec![(reference, 1.0)];
        }
        cs.iter().map(|&(k, w)| (k, w / wsum)).collect()
    }

    fn value(&self, p: Vec2) -> f64 {
        let cs = self.corners(p);
        if cs.is_empty() {
            return f64::INFINITY;
        }
        cs.iter().map(|&(k, w)| w * self.map.values[k]).sum()
    }

    fn cell_gradient(&self, k: usize) -> Vec2 {
        let g = self.map.grid;
        let h = g.spacing();
        let (i, j) = g.coords(k);
        let d0 = self.map.values[k];
        let tol = 0.5 * self.tol();
        let nb = |di: isize, dj: isize| {
            g.checked_index(i as isize + di, j as isize + dj)
                .filter(|&c| self.valid(c) && (self.map.values[c] - d0).abs() <= tol)
                .map(|c| self.map.values[c])
        };
        let diff = |plus: Option<f64>, minus: Option<f64>| match (plus, minus) {
            (Some(a), Some(b)) => (a - b) / (2.0 * h),
            (Some(a), None) => (a - d0) / h,
            (None, Some(b)) => (d0 - b) / h,
            (None, None) => 0.0,
        };
        [diff(nb(1, 0), nb(-1, 0)), diff(nb(0, 1), nb(0, -1))]
    }

    /// Unit backward direction from the interpolated gradient.
    fn gradient_direction(&self, p: Vec2) -> Option<Vec2> {
        let cs = self.corners(p);
        let heaviest = cs.iter().max_by(|a, b| a.1.total_cmp(&b.1))?.0;
        let mut g = [0.0; 2];
        for &(k, w) in &cs {
            let gk = self.cell_gradient(k);
            g = geom::add(g, geom::scale(gk, w));
        }
        let v = self.metric.norm_at(heaviest).dual_gradient(g)?;
        geom::normalize(geom::scale(v, -1.0))
    }

    /// Unit direction towards the recorded optimal stencil point.
    fn parent_direction(&self, p: Vec2) -> Option<Vec2> {
        let cs = self.corners(p);
        let k = cs.iter().max_by(|a, b| a.1.total_cmp(&b.1))?.0;
        let par = self.map.parents[k];
        if par.a == u32::MAX {
            return None;
        }
        let g = self.map.grid;
        let target = geom::lerp(g.center(par.a as usize), g.center(par.b as usize), par.t);
        geom::normalize(geom::sub(target, p)).or_else(|| geom::normalize(geom::sub(target, g.center(k))))
    }

    fn nearby_seed(&self, p: Vec2, radius: f64) -> Option<usize> {
        let g = self.map.grid;
        let c = g.to_cell(p);
        let r = radius.ceil() as isize + 1;
        let (ci, cj) = (c[0].round() as isize, c[1].round() as isize);
        let mut best: Option<(f64, usize)> = None;
        for dj in -r..=r {
            for di in -r..=r {
                if let Some(k) = g.checked_index(ci + di, cj + dj) {
                    if self.is_seed[k] {
                        let d = geom::dist(g.center(k), p) / g.spacing();
                        if d <= radius && best.map_or(true, |b| d < b.0) {
                            best = Some((d, k));
                        }
                    }
                }
            }
        }
        best.map(|b| b.1)
    }
}

/// Geodesic from `target` back to the nearest seed, as a polyline that
/// starts at `target` and ends on a seed cell center.
pub fn backtrack(map: &DistanceMap, metric: &MetricField, target: Vec2, opts: &BacktrackOptions) -> Result<Polyline> {
    let g = map.grid;
    let h = g.spacing();
    let cell = g
        .nearest_cell(target)
        .ok_or_else(|| Error::Backtrack("target outside the grid".into()))?;
    let mut is_seed = vec![false; g.len()];
    for s in &map.seeds {
        if opts.label.map_or(true, |l| l == s.label) {
            is_seed[s.cell] = true;
        }
    }
    let tracer = Tracer { map, metric, label: opts.label, is_seed };
    if !tracer.valid(cell) {
        return Err(Error::Unreachable(format!("target cell {:?} was not reached", g.coords(cell))));
    }
    let step = opts.step * h;
    let mut p = target;
    let mut points = vec![p];
    let mut current = tracer.value(p);
    let mut best = current;
    let mut stall = 0usize;
    let max_steps = 8 * map.order.len() + 1000;
    for _ in 0..max_steps {
        // a seed across a wall is near in space but not in arrival time
        let close_in_time = current <= map.speed_bound * opts.snap_radius * h * 1.5;
        if let Some(s) = tracer.nearby_seed(p, opts.snap_radius).filter(|_| close_in_time) {
            points.push(g.center(s));
            let mut poly = Polyline::open(points);
            poly.dedup(1e-9);
            return Ok(poly);
        }
        let try_step = |dir: Option<Vec2>, mid: bool| -> Option<(Vec2, f64)> {
            let d1 = dir?;
            let d = if mid {
                let pm = geom::add(p, geom::scale(d1, 0.5 * step));
                tracer.gradient_direction(pm).unwrap_or(d1)
            } else {
                d1
            };
            let q = geom::add(p, geom::scale(d, step));
            if !g.contains_point(q) {
                return None;
            }
            let v = tracer.value(q);
            (v < current).then_some((q, v))
        };
        let next = try_step(tracer.gradient_direction(p), true)
            .or_else(|| try_step(tracer.parent_direction(p), false));
        match next {
            Some((q, v)) => {
                p = q;
                current = v;
                points.push(p);
                if v < best {
                    best = v;
                    stall = 0;
                }
            }
            None => {
                // take the discrete parent step outright to escape flat spots
                let cs = tracer.corners(p);
                let k = cs.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|c| c.0);
                let par = k.map(|k| map.parents[k]).filter(|par| par.a != u32::MAX);
                let Some(par) = par else {
                    return Err(Error::Backtrack("no descent direction".into()));
                };
                p = geom::lerp(g.center(par.a as usize), g.center(par.b as usize), par.t);
                current = tracer.value(p);
                points.push(p);
                stall += 1;
                if current < best {
                    best = current;
                    stall = 0;
                }
            }
        }
        if stall > opts.max_stall {
            return Err(Error::Backtrack(format!("no progress after {} steps near {:?}", opts.max_stall, p)));
        }
    }
    Err(Error::Backtrack("step budget exhausted".into()))
}

/// Length of a polyline under the metric, midpoint rule per segment with the
/// norm of the nearest cell.
pub fn metric_length(metric: &MetricField, poly: &Polyline) -> f64 {
    let g = metric.grid;
    poly.segments()
        .map(|(a, b)| {
            let mid = geom::lerp(a, b, 0.5);
            let k = g.nearest_cell(mid).unwrap_or(0);
            metric.norm_at(k).eval(geom::sub(b, a))
        })
        .sum()
}

/// Closed geodesic through `wall.anchor` inside `tube`: distances are
/// propagated from just ahead of the wall and the path is traced back from
/// just behind it. The result starts at the anchor and runs along the
/// wall tangent.
pub fn solve_with_wall(metric: &MetricField, tube: &BinaryMask, wall: &Wall) -> Result<Polyline> {
    let opts = FmmOptions {
        domain: Some(tube),
        walls: Some(&wall.cells),
        stop: StopRule::Cells(vec![wall.minus_seed]),
        max_depth: None,
        seed_radius: 0.0,
    };
    let map = fmm_solve(metric, &[Seed::at(wall.plus_seed)], &opts)?;
    if !map.accepted[wall.minus_seed] {
        return Err(Error::Unreachable("the far side of the wall was not reached".into()));
    }
    let g = metric.grid;
    let path = backtrack(&map, metric, g.center(wall.minus_seed), &BacktrackOptions::default())?;
    let mut points = vec![wall.anchor];
    let mut forward = path.points;
    forward.reverse();
    let mut poly = Polyline::closed(points.clone());
    poly.extend_with(&forward);
    points = poly.points;
    let mut closed = Polyline::closed(points);
    closed.dedup(1e-9);
    Ok(closed)
}

/// Result of propagating two labelled fronts.
#[derive(Clone, Debug)]
pub struct TwoSourceResult {
    pub map: DistanceMap,
    pub interface: Vec<usize>,
}

/// Propagates fronts from `p` (label 1) and `q` (label 2) until the band
/// where they meet is complete.
pub fn partial_two_source(metric: &MetricField, p: usize, q: usize, domain: Option<&BinaryMask>) -> Result<TwoSourceResult> {
    if p == q {
        return Err(Error::invalid("the two sources coincide"));
    }
    let seeds = [Seed { cell: p, value: 0.0, label: 1 }, Seed { cell: q, value: 0.0, label: 2 }];
    let opts = FmmOptions { domain, walls: None, stop: StopRule::Interface, max_depth: None, seed_radius: SEED_RADIUS };
    let map = fmm_solve(metric, &seeds, &opts)?;
    let interface = map.interface.clone();
    Ok(TwoSourceResult { map, interface })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_grid(n: usize) -> Grid2D {
        Grid2D::pixels(n, n).unwrap()
    }

    #[test]
    fn fan_is_acute_for_identity_with_drift() {
        let f = RandersNorm::new(Sym2::identity(), [0.5, 0.0]).unwrap();
        assert!(Stencil::fan().is_acute_for(&f));
        assert_eq!(Stencil::for_norm(&f, MAX_STENCIL_DEPTH), Stencil::fan());
    }

    #[test]
    fn anisotropic_stencils_get_refined() {
        let m = Sym2::from_eigen(1.0, [0.3f64.cos(), 0.3f64.sin()], 50.0);
        let f = RandersNorm::riemannian(m).unwrap();
        let st = Stencil::for_norm(&f, MAX_STENCIL_DEPTH);
        assert!(st.len() > 8);
        assert!(st.is_acute_for(&f));
        // every consecutive pair stays unimodular
        for k in 0..st.len() {
            let (a, b) = (st.offsets[k], st.offsets[(k + 1) % st.len()]);
            assert_eq!(a[0] * b[1] - a[1] * b[0], 1);
        }
    }

    #[test]
    fn segment_minimiser_matches_ternary_search() {
        let f = RandersNorm::new(Sym2::new(2.0, 0.4, 1.0), [0.3, -0.2]).unwrap();
        for (d1, d2) in [(0.0, 0.0), (1.0, 1.3), (2.0, 0.1), (0.0, 5.0)] {
            let (v, _) = hopf_lax_segment(&f, [1.0, 0.0], [1.0, 1.0], d1, d2);
            let obj = |t: f64| d1 + t * (d2 - d1) + f.eval([-1.0, -t]);
            let brute = (0..=100_000).map(|k| obj(k as f64 / 100_000.0)).fold(f64::INFINITY, f64::min);
            assert!((v - brute).abs() < 1e-9, "{d1} {d2}: {v} vs {brute}");
        }
    }

    #[test]
    fn isotropic_distance_along_axes_is_exact() {
        let g = unit_grid(21);
        let metric = MetricField::uniform(g, RandersNorm::isotropic(1.0));
        let map = distance_from(&metric, g.index(10, 10)).unwrap();
        for k in 0..=10 {
            assert!((map.values[g.index(10 + k, 10)] - k as f64).abs() < 1e-12);
            assert!((map.values[g.index(10 - k, 10 - k)] - k as f64 * 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn seeds_must_be_free() {
        let g = unit_grid(5);
        let metric = MetricField::uniform(g, RandersNorm::isotropic(1.0));
        let mut walls = BinaryMask::empty(g);
        walls.bits[0] = true;
        let opts = FmmOptions { walls: Some(&walls), ..Default::default() };
        assert!(fmm_solve(&metric, &[Seed::at(0)], &opts).is_err());
        assert!(fmm_solve(&metric, &[], &FmmOptions::default()).is_err());
    }

    #[test]
    fn incompatible_metric_reports_cell() {
        let g = unit_grid(4);
        let mut metric = MetricField::uniform(g, RandersNorm::isotropic(1.0));
        metric.omega[g.index(2, 3)] = [1.5, 0.0];
        match distance_from(&metric, 0) {
            Err(Error::Incompatible { x, y, .. }) => assert_eq!((x, y), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn walls_block_propagation() {
        let g = unit_grid(21);
        let metric = MetricField::uniform(g, RandersNorm::isotropic(1.0));
        // vertical wall with a gap at the bottom
        let walls = BinaryMask::from_fn(g, |p| p[0] == 10.0 && p[1] < 18.0);
        let opts = FmmOptions { walls: Some(&walls), ..Default::default() };
        let map = fmm_solve(&metric, &[Seed::at(g.index(5, 0))], &opts).unwrap();
        let across = map.values[g.index(15, 0)];
        assert!(across > 2.0 * 17.0, "distance {across} leaked through the wall");
        assert!(walls.bits.iter().zip(&map.accepted).all(|(w, a)| !(*w && *a)));
    }

    #[test]
    fn swept_cells_cover_corners() {
        assert_eq!(swept_cells([1, 0]), Vec::<[i32; 2]>::new());
        let mut d = swept_cells([1, 1]);
        d.sort();
        assert_eq!(d, vec![[0, 1], [1, 0]]);
        let mut k = swept_cells([2, 1]);
        k.sort();
        assert_eq!(k, vec![[1, 0], [1, 1]]);
    }

    #[test]
    fn stop_rule_halts_early() {
        let g = unit_grid(41);
        let metric = MetricField::uniform(g, RandersNorm::isotropic(1.0));
        let opts = FmmOptions { stop: StopRule::Cells(vec![g.index(22, 20)]), ..Default::default() };
        let map = fmm_solve(&metric, &[Seed::at(g.index(20, 20))], &opts).unwrap();
        assert!(map.accepted[g.index(22, 20)]);
        assert!(map.order.len() < 40);
    }

    #[test]
    fn straight_geodesic_under_constant_metric() {
        let g = unit_grid(61);
        let f = RandersNorm::new(Sym2::new(1.5, 0.3, 1.0), [0.2, 0.1]).unwrap();
        let metric = MetricField::uniform(g, f);
        let src = g.index(10, 12);
        let map = distance_from(&metric, src).unwrap();
        let target = [50.0, 44.0];
        let path = backtrack(&map, &metric, target, &BacktrackOptions::default()).unwrap();
        let (a, b) = ([10.0, 12.0], target);
        let dev = path.points.iter().map(|p| crate::geom::point_segment(*p, a, b).0).fold(0.0, f64::max);
        assert!(dev < 1.0, "deviation {dev}");
        // the traced path runs backwards, from target to source
        let len = metric_length(&metric, &path.reversed());
        let d = map.values[g.nearest_cell(target).unwrap()];
        assert!((len - d).abs() < 0.03 * d, "{len} vs {d}");
        assert_eq!(path.points[0], target);
        assert_eq!(*path.points.last().unwrap(), [10.0, 12.0]);
    }

    #[test]
    fn rotational_field_bends_geodesics() {
        let g = unit_grid(101);
        let c = [50.0, 50.0];
        let src = [85.0, 50.0];
        let a = 2.0 * std::f64::consts::PI / 3.0;
        let dst = [50.0 + 35.0 * a.cos(), 50.0 + 35.0 * a.sin()];
        let w = |p: Vec2| rotational_direction(p, c);
        let riem = MetricField::rotational(g, c, 0.95, 0.0).unwrap();
        let (_, p) = minimal_path(&riem, src, dst).unwrap();
        let along = mean_alignment(&p, w);
        let abs_along = {
            let (mut acc, mut tot) = (0.0, 0.0);
            for (a, b) in p.segments() {
                let d = geom::sub(b, a);
                acc += geom::dot(d, w(geom::lerp(a, b, 0.5))).abs();
                tot += geom::norm(d);
            }
            acc / tot
        };
        assert!(abs_along > 0.9, "{along} {abs_along}");
        let randers = MetricField::rotational(g, c, 0.3, 0.8).unwrap();
        let (_, p) = minimal_path(&randers, src, dst).unwrap();
        assert!(mean_alignment(&p, w) < -0.5);
        assert!(MetricField::rotational(g, c, 0.3, 0.96).is_err());
    }

    #[test]
    fn unreached_target_is_reported() {
        let g = unit_grid(11);
        let metric = MetricField::uniform(g, RandersNorm::isotropic(1.0));
        let domain = BinaryMask::from_fn(g, |p| p[0] < 5.0);
        let opts = FmmOptions { domain: Some(&domain), ..Default::default() };
        let map = fmm_solve(&metric, &[Seed::at(0)], &opts).unwrap();
        let r = backtrack(&map, &metric, [8.0, 8.0], &BacktrackOptions::default());
        assert!(matches!(r, Err(Error::Unreachable(_))));
    }

    #[test]
    fn two_fronts_meet_on_bisector() {
        let g = unit_grid(41);
        let metric = MetricField::uniform(g, RandersNorm::isotropic(1.0));
        let r = partial_two_source(&metric, g.index(10, 20), g.index(30, 20), None).unwrap();
        assert!(!r.interface.is_empty());
        for &k in &r.interface {
            let (i, _) = g.coords(k);
            assert!((19..=21).contains(&i), "interface cell at column {i}");
        }
        assert_eq!(r.map.labels[g.index(5, 5)], 1);
        assert_eq!(r.map.labels[g.index(35, 5)], 2);
    }

    fn arb_norm() -> impl Strategy<Value = RandersNorm> {
        (0.2f64..4.0, 0.2f64..4.0, 0.0f64..std::f64::consts::PI, 0.0f64..0.8, 0.0f64..std::f64::consts::TAU).prop_map(
            |(l1, l2, a, r, b)| {
                let m = Sym2::from_eigen(l1, [a.cos(), a.sin()], l2);
                let dir = [b.cos(), b.sin()];
                let s = r / m.inverse().unwrap().quad(dir).sqrt();
                RandersNorm::new(m, [dir[0] * s, dir[1] * s]).unwrap()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn causal_monotone_and_fixed_point(f in arb_norm()) {
            let g = unit_grid(25);
            let metric = MetricField::uniform(g, f);
            let map = distance_from(&metric, g.index(12, 12)).unwrap();
            let vals: Vec<f64> = map.order.iter().map(|&k| map.values[k as usize]).collect();
            prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(map.values.iter().all(|v| *v >= 0.0 && v.is_finite()));
            if Stencil::for_norm(&f, MAX_STENCIL_DEPTH).is_acute_for(&f) {
                prop_assert!(fixed_point_residual(&metric, &map) < 1e-9);
            }
        }

        #[test]
        fn triangle_inequality_between_maps(f in arb_norm(), a in 0usize..81, b in 0usize..81) {
            let g = unit_grid(9);
            let metric = MetricField::uniform(g, f);
            let da = distance_from(&metric, a).unwrap();
            let db = distance_from(&metric, b).unwrap();
            let slack = 2.0 * g.spacing() * f.extreme_speeds().1;
            for x in 0..g.len() {
                prop_assert!(da.values[x] <= da.values[b] + db.values[x] + slack);
            }
        }
    }
}
