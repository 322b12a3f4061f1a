//! Vector fields whose curl equals a prescribed scalar, and the Randers
//! drift built from them.
//!
//! With `curl w = d_x w_y - d_y w_x`, Stokes' theorem turns the area
//! integral of the shape gradient over a region into the circulation of
//! `omega` along its counter-clockwise boundary. Two solvers are provided:
//! convolution with the kernel `z_perp / (2 pi |z|^2)`, and a Dirichlet
//! Poisson problem `lap phi = xi` on the tube with `omega = (grad phi)_perp`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::eikonal::MetricField;
use crate::error::{Error, Result};
use crate::geom::{self, Polyline, Vec2};
use crate::grid::{BinaryMask, Grid2D, ScalarField, TensorField, VectorField};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurlMethod {
    #[default]
    Poisson,
    Convolution,
}

#[derive(Clone, Debug)]
pub struct CurlSolution {
    pub omega: VectorField,
    /// Poisson potential, when that solver was used.
    pub phi: Option<ScalarField>,
    pub method: CurlMethod,
    pub iterations: usize,
}

fn fft2(grid: (usize, usize), data: &mut [Complex<f64>], inverse: bool, planner: &mut FftPlanner<f64>) {
    let (w, h) = grid;
    let row = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for r in data.chunks_mut(w) {
        row.process(r);
    }
    let col = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut buf = vec![Complex::new(0.0, 0.0); h];
    for i in 0..w {
        for j in 0..h {
            buf[j] = data[j * w + i];
        }
        col.process(&mut buf);
        for j in 0..h {
            data[j * w + i] = buf[j];
        }
    }
}

/// `omega = (chi_region xi) * H` with `H(z) = z_perp / (2 pi |z|^2)` and
/// `H(0) = 0`, evaluated by FFT. A `window` (physical half-width) truncates
/// the kernel to a square, which equals direct summation over that window.
pub fn omega_by_convolution(xi: &ScalarField, region: &BinaryMask, window: Option<f64>) -> Result<CurlSolution> {
    let g = xi.grid;
    if region.grid != g {
        return Err(Error::invalid("region and field grids differ"));
    }
    let h = g.spacing();
    let (w, hh) = (g.width(), g.height());
    let (pw, ph) = (2 * w, 2 * hh);
    let reach = window.map(|r| (r / h).ceil() as i64);
    let mut src = vec![Complex::new(0.0, 0.0); pw * ph];
    for j in 0..hh {
        for i in 0..w {
            let k = g.index(i, j);
            if region.bits[k] {
                src[j * pw + i] = Complex::new(xi.values[k], 0.0);
            }
        }
    }
    // both kernel components packed as real and imaginary parts
    let mut ker = vec![Complex::new(0.0, 0.0); pw * ph];
    let area = h * h;
    for dj in -(hh as i64 - 1)..=(hh as i64 - 1) {
        for di in -(w as i64 - 1)..=(w as i64 - 1) {
            if (di, dj) == (0, 0) || reach.map_or(false, |r| di.abs() > r || dj.abs() > r) {
                continue;
            }
            let z = [di as f64 * h, dj as f64 * h];
            let r2 = geom::dot(z, z);
            let hz = geom::scale(geom::perp(z), area / (std::f64::consts::TAU * r2));
            let (ii, jj) = (di.rem_euclid(pw as i64) as usize, dj.rem_euclid(ph as i64) as usize);
            ker[jj * pw + ii] = Complex::new(hz[0], hz[1]);
        }
    }
    let mut planner = FftPlanner::new();
    fft2((pw, ph), &mut src, false, &mut planner);
    fft2((pw, ph), &mut ker, false, &mut planner);
    // the source is real, so conv(src, kx + i ky) = conv(src, kx) + i conv(src, ky)
    for (s, k) in src.iter_mut().zip(&ker) {
        *s *= k;
    }
    fft2((pw, ph), &mut src, true, &mut planner);
    let norm = 1.0 / (pw * ph) as f64;
    let mut omega = VectorField::zeros(g);
    for j in 0..hh {
        for i in 0..w {
            let c = src[j * pw + i] * norm;
            omega.values[g.index(i, j)] = [c.re, c.im];
        }
    }
    Ok(CurlSolution { omega, phi: None, method: CurlMethod::Convolution, iterations: 0 })
}

/// Solves `lap phi = xi` on the tube with `phi = 0` outside it (five-point
/// Laplacian, conjugate gradients to a relative residual of 1e-8) and
/// returns `omega = (grad phi)_perp`.
pub fn omega_by_poisson(xi: &ScalarField, tube: &BinaryMask) -> Result<CurlSolution> {
    omega_by_poisson_fitted(xi, tube, None)
}

/// Smallest boundary fraction kept by the ghost-fluid closure.
const MIN_FRACTION: f64 = 1e-2;

/// Same as [`omega_by_poisson`], but when `level` is given (negative inside,
/// positive outside, e.g. distance to the centerline minus the half width)
/// the boundary is placed where `level` crosses zero between a tube cell
/// and its outside neighbour. The ghost-fluid closure keeps the system
/// symmetric.
pub fn omega_by_poisson_fitted(xi: &ScalarField, tube: &BinaryMask, level: Option<&ScalarField>) -> Result<CurlSolution> {
    let g = xi.grid;
    if tube.grid != g || level.map_or(false, |l| l.grid != g) {
        return Err(Error::invalid("tube and field grids differ"));
    }
    let h = g.spacing();
    let cells: Vec<usize> = (0..g.len()).filter(|&k| tube.bits[k]).collect();
    if cells.is_empty() {
        return Err(Error::invalid("empty tube"));
    }
    let mut slot = vec![u32::MAX; g.len()];
    for (s, &k) in cells.iter().enumerate() {
        slot[k] = s as u32;
    }
    const DIRS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    // neighbour slot and distance (in cells) to the neighbour or boundary
    let nbrs: Vec<[(u32, f64); 4]> = cells
        .iter()
        .map(|&k| {
            let (i, j) = g.coords(k);
            let mut out = [(u32::MAX, 1.0); 4];
            for (t, (di, dj)) in DIRS.into_iter().enumerate() {
                let Some(n) = g.checked_index(i as isize + di, j as isize + dj) else { continue };
                out[t].0 = slot[n];
                if slot[n] == u32::MAX {
                    if let Some(l) = level {
                        let (a, b) = (l.values[k], l.values[n]);
                        if a < 0.0 && b >= 0.0 {
                            out[t].1 = (a / (a - b)).max(MIN_FRACTION);
                        }
                    }
                }
            }
            out
        })
        .collect();
    let inv_h2 = 1.0 / (h * h);
    let diag: Vec<f64> = nbrs.iter().map(|nb| nb.iter().map(|&(n, th)| if n == u32::MAX { 1.0 / th } else { 1.0 }).sum()).collect();
    // A = -lap, symmetric positive definite with the Dirichlet closure
    let apply = |x: &[f64], y: &mut [f64]| {
        for (s, nb) in nbrs.iter().enumerate() {
            let mut acc = diag[s] * x[s];
            for &(n, _) in nb {
                if n != u32::MAX {
                    acc -= x[n as usize];
                }
            }
            y[s] = acc * inv_h2;
        }
    };
    let b: Vec<f64> = cells.iter().map(|&k| -xi.values[k]).collect();
    let n = cells.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    if bnorm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        let max_iter = 10 * n + 100;
        while rr.sqrt() > 1e-8 * bnorm {
            if iterations >= max_iter {
                return Err(Error::Numerical(format!("Poisson solve stalled at residual {:.2e}", rr.sqrt() / bnorm)));
            }
            apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            let alpha = rr / pap;
            for s in 0..n {
                x[s] += alpha * p[s];
                r[s] -= alpha * ap[s];
            }
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            let beta = rr_new / rr;
            for s in 0..n {
                p[s] = r[s] + beta * p[s];
            }
            rr = rr_new;
            iterations += 1;
        }
    }
    let mut phi = ScalarField::filled(g, 0.0);
    for (s, &k) in cells.iter().enumerate() {
        phi.values[k] = x[s];
    }
    let mut omega = VectorField::zeros(g);
    for (s, &k) in cells.iter().enumerate() {
        // three-point derivative on the (possibly uneven) points -p, 0, q
        let v = |(n, th): (u32, f64)| (if n == u32::MAX { 0.0 } else { x[n as usize] }, th * h);
        let d = |(fp, q): (f64, f64), (fm, p): (f64, f64)| (p * p * (fp - x[s]) + q * q * (x[s] - fm)) / (p * q * (p + q));
        let nb = nbrs[s];
        let wx = d(v(nb[0]), v(nb[1]));
        let wy = d(v(nb[2]), v(nb[3]));
        omega.values[k] = geom::perp([wx, wy]);
    }
    Ok(CurlSolution { omega, phi: Some(phi), method: CurlMethod::Poisson, iterations })
}

/// Dispatches to the chosen solver. The convolution source is restricted to
/// the doubled tube `region2` when given, else to `tube`.
pub fn solve_curl(
    method: CurlMethod,
    xi: &ScalarField,
    tube: &BinaryMask,
    region2: Option<&BinaryMask>,
    level: Option<&ScalarField>,
) -> Result<CurlSolution> {
    match method {
        CurlMethod::Poisson => omega_by_poisson_fitted(xi, tube, level),
        CurlMethod::Convolution => omega_by_convolution(xi, region2.unwrap_or(tube), None),
    }
}

/// Discrete curl `d_x w_y - d_y w_x` by centered differences (one-sided on
/// the grid border).
pub fn curl(omega: &VectorField) -> ScalarField {
    let g = omega.grid;
    let h = g.spacing();
    let d = |k: usize, axis: usize, comp: usize| {
        let (i, j) = g.coords(k);
        let (i, j) = (i as isize, j as isize);
        let (di, dj) = if axis == 0 { (1, 0) } else { (0, 1) };
        let p = g.checked_index(i + di, j + dj);
        let m = g.checked_index(i - di, j - dj);
        match (p, m) {
            (Some(p), Some(m)) => (omega.values[p][comp] - omega.values[m][comp]) / (2.0 * h),
            (Some(p), None) => (omega.values[p][comp] - omega.values[k][comp]) / h,
            (None, Some(m)) => (omega.values[k][comp] - omega.values[m][comp]) / h,
            (None, None) => 0.0,
        }
    };
    ScalarField { grid: g, values: (0..g.len()).map(|k| d(k, 0, 1) - d(k, 1, 0)).collect() }
}

/// Relative L2 misfit `|curl omega - xi| / |xi|` over `mask`.
pub fn curl_residual(omega: &VectorField, xi: &ScalarField, mask: &BinaryMask) -> f64 {
    let c = curl(omega);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..mask.bits.len() {
        if mask.bits[k] {
            num += (c.values[k] - xi.values[k]).powi(2);
            den += xi.values[k].powi(2);
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Circulation of a sampled field along a polyline (bilinear values at
/// segment midpoints).
pub fn circulation(omega: &VectorField, path: &Polyline) -> f64 {
    path.segments()
        .map(|(a, b)| geom::dot(omega.sample(geom::lerp(a, b, 0.5)), geom::sub(b, a)))
        .sum()
}

/// `psi(z) = (1 - exp(-|z|)) / |z| * z`, mapping the plane into the open
/// unit disk.
pub fn psi(z: Vec2) -> Vec2 {
    let r = geom::norm(z);
    if r < 1e-300 {
        return z;
    }
    geom::scale(z, -(-r).exp_m1() / r)
}

/// Drift `psi(alpha_tilde omega / max|omega|)`, the maximum taken over
/// `region`. Returns the field and the effective scale `alpha_tilde / max`.
pub fn psi_rescale(omega: &VectorField, alpha_tilde: f64, region: Option<&BinaryMask>) -> (VectorField, f64) {
    let max = omega.max_norm(region);
    if max <= 0.0 {
        return (VectorField::zeros(omega.grid), 0.0);
    }
    let alpha = alpha_tilde / max;
    let values = omega
        .values
        .iter()
        .enumerate()
        .map(|(k, w)| {
            if region.map_or(true, |m| m.bits[k]) {
                psi(geom::scale(*w, alpha))
            } else {
                [0.0, 0.0]
            }
        })
        .collect();
    (VectorField { grid: omega.grid, values }, alpha)
}

/// Randers data `((1 + 2 lambda d^2)^2 M, drift)`. Fails with the worst
/// cell when the drift is not dominated by the tensor inside `domain`.
pub fn assemble_metric(
    tensors: &TensorField,
    drift: &VectorField,
    dist: Option<&ScalarField>,
    lambda: f64,
    domain: Option<&BinaryMask>,
) -> Result<MetricField> {
    let g = tensors.grid;
    if drift.grid != g || dist.map_or(false, |d| d.grid != g) {
        return Err(Error::invalid("metric ingredients live on different grids"));
    }
    let tens = (0..g.len())
        .map(|k| {
            let d = dist.map_or(0.0, |d| d.values[k]);
            let s = 1.0 + 2.0 * lambda * d * d;
            tensors.values[k].scale(s * s)
        })
        .collect();
    let metric = MetricField { grid: g, tensors: tens, omega: drift.values.clone() };
    metric.validate(domain)?;
    Ok(metric)
}

/// Exact `grad phi` for `lap phi = 1` on the annulus `1 - U < |z - c| < 1 + U`
/// with `phi = 0` on both circles: `(r - b / r) / 2 e_r`, where
/// `b = 2U / ln((1 + U) / (1 - U))`.
pub fn annulus_gradient(p: Vec2, center: Vec2, half_width: f64) -> Vec2 {
    let b = 2.0 * half_width / ((1.0 + half_width) / (1.0 - half_width)).ln();
    let d = geom::sub(p, center);
    let r = geom::norm(d);
    geom::scale(d, 0.5 * (r - b / r) / r)
}

/// Grid covering `[-extent, extent]^2` with `n` cells per side.
pub fn centered_grid(n: usize, extent: f64) -> Result<(Grid2D, Vec2)> {
    let h = 2.0 * extent / n as f64;
    let g = Grid2D::new(n, n, h)?;
    let c = (n as f64 - 1.0) * 0.5 * h;
    Ok((g, [c, c]))
}
