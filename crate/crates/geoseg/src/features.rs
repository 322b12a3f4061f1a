//! Image features: Gaussian derivative edges, the anisotropic tensor field
//! built from them, region appearance models and their shape gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Polyline, Vec2};
use crate::grid::{BinaryMask, Grid2D, Image, ScalarField, TensorField, VectorField};
use crate::randers::Sym2;

fn gaussian(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let r = (4.0 * sigma).ceil() as i64;
    let g: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = g.iter().sum();
    let smooth: Vec<f64> = g.iter().map(|v| v / sum).collect();
    // derivative taps scaled so a unit ramp has unit slope
    let m2: f64 = (-r..=r).zip(&g).map(|(i, v)| (i * i) as f64 * v).sum();
    let deriv = (-r..=r).zip(&g).map(|(i, v)| i as f64 * v / m2).collect();
    (smooth, deriv)
}

/// Correlates rows (`axis = 0`) or columns with a centered kernel,
/// replicating border samples.
fn filter_axis(grid: Grid2D, src: &[f64], kernel: &[f64], axis: usize) -> Vec<f64> {
    let (w, h) = (grid.width() as i64, grid.height() as i64);
    let r = (kernel.len() / 2) as i64;
    let mut out = vec![0.0; src.len()];
    for j in 0..h {
        for i in 0..w {
            let mut acc = 0.0;
            for (t, kv) in kernel.iter().enumerate() {
                let o = t as i64 - r;
                let (x, y) = if axis == 0 { ((i + o).clamp(0, w - 1), j) } else { (i, (j + o).clamp(0, h - 1)) };
                acc += kv * src[(y * w + x) as usize];
            }
            out[(j * w + i) as usize] = acc;
        }
    }
    out
}

/// Edge strength `g`, edge direction and the maximum of `g`.
#[derive(Clone, Debug)]
pub struct EdgeFeatures {
    pub g: ScalarField,
    pub gdir: VectorField,
    pub gmax: f64,
}

/// Gaussian derivative edge features at scale `sigma` (in pixels).
///
/// `g` is the Frobenius norm of the smoothed Jacobian over all channels and
/// `gdir` the leading eigenvector of `J J^T + Id`, signed along the summed
/// channel gradient; flat cells get `(1, 0)`.
pub fn edge_features(img: &Image, sigma: f64) -> Result<EdgeFeatures> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("edge scale must be positive"));
    }
    let grid = img.grid;
    let (smooth, deriv) = gaussian(sigma);
    let hsp = grid.spacing();
    let n = grid.len();
    let mut sxx = vec![0.0; n];
    let mut sxy = vec![0.0; n];
    let mut syy = vec![0.0; n];
    let mut raw = vec![[0.0; 2]; n];
    for ch in &img.channels {
        // correlating with i*G(i) yields the derivative itself
        let gx = filter_axis(grid, &filter_axis(grid, ch, &smooth, 1), &deriv, 0);
        let gy = filter_axis(grid, &filter_axis(grid, ch, &smooth, 0), &deriv, 1);
        for k in 0..n {
            let (a, b) = (gx[k] / hsp, gy[k] / hsp);
            sxx[k] += a * a;
            sxy[k] += a * b;
            syy[k] += b * b;
            raw[k][0] += a;
            raw[k][1] += b;
        }
    }
    let mut g = vec![0.0; n];
    let mut gdir = vec![[1.0, 0.0]; n];
    for k in 0..n {
        g[k] = (sxx[k] + syy[k]).sqrt();
        if g[k] > 1e-12 {
            let q = Sym2::new(sxx[k] + 1.0, sxy[k], syy[k] + 1.0);
            let (_, _, mut v) = q.eigen();
            if geom::dot(v, raw[k]) < 0.0 {
                v = geom::scale(v, -1.0);
            }
            gdir[k] = v;
        }
    }
    let gmax = g.iter().copied().fold(0.0, f64::max);
    Ok(EdgeFeatures { g: ScalarField { grid, values: g }, gdir: VectorField { grid, values: gdir }, gmax })
}

/// Tensor field `lambda1 t1 t1^T + lambda2 t2 t2^T` with `t2 = gdir`,
/// `t1 = gdir_perp`, `lambda1 = exp(bd (gmax - g))` and
/// `lambda2 = lambda1 exp(ba g)`. The anisotropy is switched off when
/// `beta_data` is zero.
pub fn tensor_field(ef: &EdgeFeatures, beta_data: f64, beta_aniso: f64) -> TensorField {
    let ba = if beta_data == 0.0 { 0.0 } else { beta_aniso };
    let values = ef
        .g
        .values
        .iter()
        .zip(&ef.gdir.values)
        .map(|(&g, &d)| {
            let l1 = (beta_data * (ef.gmax - g)).exp();
            let l2 = l1 * (ba * g).exp();
            Sym2::from_eigen(l2, d, l1)
        })
        .collect();
    TensorField { grid: ef.g.grid, values }
}

/// Region appearance model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AppearanceModel {
    /// Two-phase piecewise constant fit.
    PiecewiseConstant,
    /// Bhattacharyya coefficient of smoothed intensity histograms.
    Bhattacharyya { bins: usize, sigma: f64 },
    /// Constant pressure `f` per unit area.
    Balloon { f: f64 },
}

impl Default for AppearanceModel {
    fn default() -> Self {
        AppearanceModel::PiecewiseConstant
    }
}

impl AppearanceModel {
    pub fn bhattacharyya() -> Self {
        AppearanceModel::Bhattacharyya { bins: 32, sigma: 1.0 }
    }
}

const HIST_FLOOR: f64 = 1e-6;

/// Histogram data for one channel.
#[derive(Clone, Debug)]
pub struct Histograms {
    /// Row-normalised smoothing matrix, `kernel[q * bins + b]`.
    kernel: Vec<f64>,
    pub h_in: Vec<f64>,
    pub h_out: Vec<f64>,
    raw_in: Vec<f64>,
    raw_out: Vec<f64>,
}

/// Model parameters fitted to a particular region.
#[derive(Clone, Debug)]
pub enum FittedModel {
    PiecewiseConstant { c_in: Vec<f64>, c_out: Vec<f64> },
    Bhattacharyya { bins: usize, n_in: f64, n_out: f64, hists: Vec<Histograms> },
    Balloon { f: f64 },
}

fn bin_of(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

fn smoothing_kernel(bins: usize, sigma: f64) -> Vec<f64> {
    let mut k = vec![0.0; bins * bins];
    for b in 0..bins {
        let col: Vec<f64> = (0..bins)
            .map(|q| {
                let d = q as f64 - b as f64;
                if sigma > 0.0 {
                    (-d * d / (2.0 * sigma * sigma)).exp()
                } else {
                    (q == b) as u8 as f64
                }
            })
            .collect();
        let z: f64 = col.iter().sum();
        for q in 0..bins {
            k[q * bins + b] = col[q] / z;
        }
    }
    k
}

fn check_region(w: &ScalarField, img: &Image) -> Result<(f64, f64)> {
    if w.grid != img.grid {
        return Err(Error::invalid("mask and image grids differ"));
    }
    let n_in: f64 = w.values.iter().sum();
    let n_out = w.values.len() as f64 - n_in;
    if !(n_in > 1e-9 && n_out > 1e-9) {
        return Err(Error::invalid("region and its complement must both be non-empty"));
    }
    Ok((n_in, n_out))
}

fn weights(mask: &BinaryMask) -> ScalarField {
    ScalarField { grid: mask.grid, values: mask.bits.iter().map(|&b| b as u8 as f64).collect() }
}

impl AppearanceModel {
    /// Fits the model parameters (means, histograms) to a region.
    pub fn fit(&self, img: &Image, mask: &BinaryMask) -> Result<FittedModel> {
        self.fit_weighted(img, &weights(mask))
    }

    /// Same as [`AppearanceModel::fit`] for a soft region given by per-cell
    /// inside fractions in [0, 1].
    pub fn fit_weighted(&self, img: &Image, w: &ScalarField) -> Result<FittedModel> {
        match *self {
            AppearanceModel::Balloon { f } => {
                if w.grid != img.grid {
                    return Err(Error::invalid("mask and image grids differ"));
                }
                Ok(FittedModel::Balloon { f })
            }
            AppearanceModel::PiecewiseConstant => {
                let (n_in, n_out) = check_region(w, img)?;
                let mut c_in = Vec::new();
                let mut c_out = Vec::new();
                for ch in &img.channels {
                    let (mut si, mut so) = (0.0, 0.0);
                    for (v, f) in ch.iter().zip(&w.values) {
                        si += f * v;
                        so += (1.0 - f) * v;
                    }
                    c_in.push(si / n_in);
                    c_out.push(so / n_out);
                }
                Ok(FittedModel::PiecewiseConstant { c_in, c_out })
            }
            AppearanceModel::Bhattacharyya { bins, sigma } => {
                if bins < 2 {
                    return Err(Error::Config("histograms need at least two bins".into()));
                }
                let (n_in, n_out) = check_region(w, img)?;
                let kernel = smoothing_kernel(bins, sigma);
                let hists = img
                    .channels
                    .iter()
                    .map(|ch| {
                        let mut cin = vec![0.0; bins];
                        let mut cout = vec![0.0; bins];
                        for (v, f) in ch.iter().zip(&w.values) {
                            let k = bin_of(*v, bins);
                            cin[k] += f;
                            cout[k] += 1.0 - f;
                        }
                        let smooth = |c: &[f64], n: f64| -> Vec<f64> {
                            (0..bins).map(|q| (0..bins).map(|b| kernel[q * bins + b] * c[b]).sum::<f64>() / n).collect()
                        };
                        let raw_in = smooth(&cin, n_in);
                        let raw_out = smooth(&cout, n_out);
                        let floor = |h: &[f64]| {
                            h.iter().map(|v| (1.0 - HIST_FLOOR) * v + HIST_FLOOR / bins as f64).collect()
                        };
                        Histograms { h_in: floor(&raw_in), h_out: floor(&raw_out), raw_in, raw_out, kernel: kernel.clone() }
                    })
                    .collect();
                Ok(FittedModel::Bhattacharyya { bins, n_in, n_out, hists })
            }
        }
    }

    /// Region energy with parameters refitted to the region.
    pub fn energy(&self, img: &Image, mask: &BinaryMask) -> Result<f64> {
        self.energy_weighted(img, &weights(mask))
    }

    /// Region energy of a soft region, parameters refitted to it.
    pub fn energy_weighted(&self, img: &Image, w: &ScalarField) -> Result<f64> {
        Ok(self.fit_weighted(img, w)?.energy_weighted(img, w))
    }
}

impl FittedModel {
    /// Region energy of `mask` with these parameters held fixed.
    pub fn energy(&self, img: &Image, mask: &BinaryMask) -> f64 {
        self.energy_weighted(img, &weights(mask))
    }

    /// Region energy of a soft region with these parameters held fixed.
    /// Histogram models ignore the region: their parameters are the energy.
    pub fn energy_weighted(&self, img: &Image, w: &ScalarField) -> f64 {
        let area = img.grid.spacing() * img.grid.spacing();
        match self {
            FittedModel::Balloon { f } => f * w.values.iter().sum::<f64>() * area,
            FittedModel::PiecewiseConstant { c_in, c_out } => {
                let nc = img.channels.len() as f64;
                let mut total = 0.0;
                for (c, ch) in img.channels.iter().enumerate() {
                    for (v, f) in ch.iter().zip(&w.values) {
                        total += f * (v - c_in[c]).powi(2) + (1.0 - f) * (v - c_out[c]).powi(2);
                    }
                }
                total * area / nc
            }
            FittedModel::Bhattacharyya { hists, .. } => {
                let per: f64 = hists
                    .iter()
                    .map(|h| h.h_in.iter().zip(&h.h_out).map(|(a, b)| (a * b).sqrt()).sum::<f64>())
                    .sum();
                per / hists.len() as f64
            }
        }
    }

    /// Shape gradient density: adding a cell of area `h^2` to the region
    /// changes the energy by about `xi h^2`.
    pub fn gradient(&self, img: &Image) -> ScalarField {
        let grid = img.grid;
        let area = grid.spacing() * grid.spacing();
        let nc = img.channels.len() as f64;
        let values = match self {
            FittedModel::Balloon { f } => vec![*f; grid.len()],
            FittedModel::PiecewiseConstant { c_in, c_out } => (0..grid.len())
                .map(|k| {
                    img.channels
                        .iter()
                        .enumerate()
                        .map(|(c, ch)| {
                            let v = ch[k];
                            (v - c_in[c]).powi(2) - (v - c_out[c]).powi(2)
                        })
                        .sum::<f64>()
                        / nc
                })
                .collect(),
            FittedModel::Bhattacharyya { bins, n_in, n_out, hists } => {
                let bins = *bins;
                let per_bin: Vec<Vec<f64>> = hists
                    .iter()
                    .map(|h| {
                        let r_in: Vec<f64> = (0..bins).map(|q| (h.h_out[q] / h.h_in[q]).sqrt()).collect();
                        let r_out: Vec<f64> = (0..bins).map(|q| (h.h_in[q] / h.h_out[q]).sqrt()).collect();
                        (0..bins)
                            .map(|b| {
                                let mut acc = 0.0;
                                for q in 0..bins {
                                    let kq = (1.0 - HIST_FLOOR) * h.kernel[q * bins + b];
                                    let d_in = (kq - (1.0 - HIST_FLOOR) * h.raw_in[q]) / n_in;
                                    let d_out = -(kq - (1.0 - HIST_FLOOR) * h.raw_out[q]) / n_out;
                                    acc += r_in[q] * d_in + r_out[q] * d_out;
                                }
                                0.5 * acc
                            })
                            .collect()
                    })
                    .collect();
                (0..grid.len())
                    .map(|k| {
                        img.channels
                            .iter()
                            .enumerate()
                            .map(|(c, ch)| per_bin[c][bin_of(ch[k], bins)])
                            .sum::<f64>()
                            / (nc * area)
                    })
                    .collect()
            }
        };
        ScalarField { grid, values }
    }
}

/// Shape gradient of the region energy at `mask` and the energy itself.
#[derive(Clone, Debug)]
pub struct ShapeGradient {
    pub xi: ScalarField,
    pub energy: f64,
    pub fitted: FittedModel,
}

pub fn shape_gradient(model: &AppearanceModel, img: &Image, mask: &BinaryMask) -> Result<ShapeGradient> {
    let fitted = model.fit(img, mask)?;
    let xi = fitted.gradient(img);
    let energy = fitted.energy(img, mask);
    Ok(ShapeGradient { xi, energy, fitted })
}

/// Length of a polyline under a tensor field, midpoint rule per segment.
pub fn riemannian_length(contour: &Polyline, tensors: &TensorField) -> f64 {
    contour
        .segments()
        .map(|(a, b)| {
            let m = tensors.sample(geom::lerp(a, b, 0.5));
            m.quad(geom::sub(b, a)).max(0.0).sqrt()
        })
        .sum()
}

/// `alpha * Psi(region) + Riemannian length of its boundary`.
pub fn hybrid_energy(
    model: &AppearanceModel,
    img: &Image,
    mask: &BinaryMask,
    contour: &Polyline,
    tensors: &TensorField,
    alpha: f64,
) -> Result<f64> {
    Ok(alpha * model.energy(img, mask)? + riemannian_length(contour, tensors))
}

/// `P(x) = eps + max(0, 1 - beta g(x))`: cheap along strong edges.
pub fn edge_potential(ef: &EdgeFeatures, eps: f64, beta: Option<f64>) -> ScalarField {
    let beta = beta.unwrap_or(if ef.gmax > 0.0 { 2.0 / ef.gmax } else { 0.0 });
    ScalarField {
        grid: ef.g.grid,
        values: ef.g.values.iter().map(|g| eps + (1.0 - beta * g).max(0.0)).collect(),
    }
}

/// Integral of a scalar potential along a polyline (midpoint rule).
pub fn line_integral(contour: &Polyline, potential: &ScalarField) -> f64 {
    contour
        .segments()
        .map(|(a, b)| potential.sample(geom::lerp(a, b, 0.5)) * geom::dist(a, b))
        .sum()
}

/// Signed unit direction helper used by tests and callers that need the
/// across-edge direction at a point.
pub fn edge_direction_at(ef: &EdgeFeatures, p: Vec2) -> Vec2 {
    geom::normalize(ef.gdir.sample(p)).unwrap_or([1.0, 0.0])
}
