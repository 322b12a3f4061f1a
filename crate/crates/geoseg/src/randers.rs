//! Randers norms `F(v) = |v|_M + <omega, v>` and their duals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{dot, Vec2};

/// Minimum `1 - <omega, M^-1 omega>` accepted when building a norm.
pub const COMPAT_MARGIN: f64 = 1e-9;

/// Symmetric 2x2 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Sym2 { xx, xy, yy }
    }

    pub const fn identity() -> Self {
        Sym2::new(1.0, 0.0, 1.0)
    }

    pub fn scaled_identity(s: f64) -> Self {
        Sym2::new(s, 0.0, s)
    }

    /// `v v^T`.
    pub fn outer(v: Vec2) -> Self {
        Sym2::new(v[0] * v[0], v[0] * v[1], v[1] * v[1])
    }

    /// `l1 u u^T + l2 u_perp u_perp^T` for a unit vector `u`.
    pub fn from_eigen(l1: f64, u: Vec2, l2: f64) -> Self {
        Sym2::outer(u).scale(l1).add(&Sym2::outer([-u[1], u[0]]).scale(l2))
    }

    pub fn add(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }

    pub fn scale(&self, s: f64) -> Sym2 {
        Sym2::new(self.xx * s, self.xy * s, self.yy * s)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn inverse(&self) -> Option<Sym2> {
        let d = self.det();
        (d != 0.0 && d.is_finite()).then(|| Sym2::new(self.yy / d, -self.xy / d, self.xx / d))
    }

    #[inline]
    pub fn apply(&self, v: Vec2) -> Vec2 {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    #[inline]
    pub fn quad(&self, v: Vec2) -> f64 {
        self.xx * v[0] * v[0] + 2.0 * self.xy * v[0] * v[1] + self.yy * v[1] * v[1]
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }

    pub fn is_spd(&self) -> bool {
        self.is_finite() && self.xx > 0.0 && self.det() > 0.0
    }

    /// Eigenvalues in increasing order and the unit eigenvector of the larger.
    pub fn eigen(&self) -> (f64, f64, Vec2) {
        let m = 0.5 * (self.xx + self.yy);
        let r = (0.5 * (self.xx - self.yy)).hypot(self.xy);
        let (lo, hi) = (m - r, m + r);
        let v = if self.xy.abs() > 1e-300 {
            [hi - self.yy, self.xy]
        } else if self.xx >= self.yy {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        };
        let n = v[0].hypot(v[1]);
        (lo, hi, [v[0] / n, v[1] / n])
    }
}

/// Asymmetric norm `F(v) = sqrt(v^T M v) + <omega, v>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandersNorm {
    pub m: Sym2,
    pub omega: Vec2,
}

/// The dual of a Randers norm is again a Randers norm.
pub type DualNorm = RandersNorm;

/// Returns whether `(M, omega)` define a norm together with the margin
/// `1 - <omega, M^-1 omega>`; fails when `M` is not positive definite.
pub fn check_compatibility(m: &Sym2, omega: Vec2) -> Result<(bool, f64)> {
    if !m.is_spd() {
        return Err(Error::invalid(format!("tensor {m:?} is not positive definite")));
    }
    if !(omega[0].is_finite() && omega[1].is_finite()) {
        return Err(Error::invalid("non-finite drift vector"));
    }
    let inv = m.inverse().expect("spd matrix is invertible");
    let margin = 1.0 - inv.quad(omega);
    Ok((margin >= COMPAT_MARGIN, margin))
}

impl RandersNorm {
    pub fn new(m: Sym2, omega: Vec2) -> Result<Self> {
        let (ok, margin) = check_compatibility(&m, omega)?;
        if !ok {
            return Err(Error::Incompatible { x: 0, y: 0, margin });
        }
        Ok(RandersNorm { m, omega })
    }

    /// Skips validation; callers guarantee compatibility.
    pub const fn new_unchecked(m: Sym2, omega: Vec2) -> Self {
        RandersNorm { m, omega }
    }

    pub fn riemannian(m: Sym2) -> Result<Self> {
        Self::new(m, [0.0, 0.0])
    }

    pub fn isotropic(cost: f64) -> Self {
        RandersNorm::new_unchecked(Sym2::scaled_identity(cost * cost), [0.0, 0.0])
    }

    #[inline]
    pub fn eval(&self, v: Vec2) -> f64 {
        self.m.quad(v).max(0.0).sqrt() + dot(self.omega, v)
    }

    /// Gradient `Mv/|v|_M + omega`; undefined at the origin.
    pub fn gradient(&self, v: Vec2) -> Option<Vec2> {
        let n = self.m.quad(v).sqrt();
        if !(n > 0.0) {
            return None;
        }
        let mv = self.m.apply(v);
        Some([mv[0] / n + self.omega[0], mv[1] / n + self.omega[1]])
    }

    pub fn margin(&self) -> f64 {
        match self.m.inverse() {
            Some(inv) => 1.0 - inv.quad(self.omega),
            None => f64::NEG_INFINITY,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.omega == [0.0, 0.0]
    }

    /// Dual norm `F*(l) = max { <l, v> : F(v) <= 1 }`, in Randers form.
    pub fn dual(&self) -> DualNorm {
        let inv = self.m.inverse().expect("norm tensor must be invertible");
        let mo = inv.apply(self.omega);
        let delta = 1.0 - dot(self.omega, mo);
        let a = Sym2::outer(mo).scale(1.0 / (delta * delta)).add(&inv.scale(1.0 / delta));
        RandersNorm::new_unchecked(a, [-mo[0] / delta, -mo[1] / delta])
    }

    /// Unit speed direction `dF*(l)` of the flow steered by a covector.
    pub fn dual_gradient(&self, l: Vec2) -> Option<Vec2> {
        self.dual().gradient(l)
    }

    /// Cheap upper bound on `F(u)` over unit vectors.
    pub fn max_speed_bound(&self) -> f64 {
        let (_, hi, _) = self.m.eigen();
        hi.max(0.0).sqrt() + self.omega[0].hypot(self.omega[1])
    }

    fn on_circle(&self, theta: f64) -> (f64, f64, f64) {
        let (s, c) = theta.sin_cos();
        let Sym2 { xx: a, xy: b, yy: d } = self.m;
        let q = a * c * c + 2.0 * b * c * s + d * s * s;
        let dq = -(a - d) * (2.0 * theta).sin() + 2.0 * b * (2.0 * theta).cos();
        let ddq = -2.0 * (a - d) * (2.0 * theta).cos() - 4.0 * b * (2.0 * theta).sin();
        let r = q.sqrt();
        let f = r + self.omega[0] * c + self.omega[1] * s;
        let df = dq / (2.0 * r) - self.omega[0] * s + self.omega[1] * c;
        let ddf = ddq / (2.0 * r) - dq * dq / (4.0 * q * r) - self.omega[0] * c - self.omega[1] * s;
        (f, df, ddf)
    }

    /// Extreme values of `F` on the unit circle as `(min, max)`.
    pub fn extreme_speeds(&self) -> (f64, f64) {
        let (_, _, v) = self.m.eigen();
        let base = v[1].atan2(v[0]);
        let mut seeds: Vec<f64> = (0..4).map(|k| base + k as f64 * std::f64::consts::FRAC_PI_2).collect();
        // coarse scan guards Newton against converging to the same extremum
        let n = 360;
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let t = k as f64 / n as f64 * std::f64::consts::TAU;
                (t, self.on_circle(t).0)
            })
            .collect();
        let lo = samples.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let hi = samples.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        seeds.push(lo.0);
        seeds.push(hi.0);
        let (mut fmin, mut fmax) = (lo.1, hi.1);
        for &seed in &seeds {
            let mut t = seed;
            for _ in 0..50 {
                let (_, df, ddf) = self.on_circle(t);
                if ddf.abs() < 1e-300 {
                    break;
                }
                let step = (df / ddf).clamp(-0.5, 0.5);
                t -= step;
                if step.abs() < 1e-14 {
                    break;
                }
            }
            let f = self.on_circle(t).0;
            fmin = fmin.min(f);
            fmax = fmax.max(f);
        }
        (fmin, fmax)
    }

    /// Anisotropy ratio `max F(u) / min F(u)` over unit vectors.
    pub fn anisotropy(&self) -> f64 {
        let (lo, hi) = self.extreme_speeds();
        hi / lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    /// Brute-force dual: maximise <l, u> / F(u) over a dense angle scan
    /// refined by golden-section search.
    fn dual_oracle(f: &RandersNorm, l: Vec2) -> f64 {
        let g = |t: f64| {
            let u = [t.cos(), t.sin()];
            dot(l, u) / f.eval(u)
        };
        let n = 4000;
        let k = (0..n).max_by(|a, b| g(*a as f64 / n as f64 * TAU).total_cmp(&g(*b as f64 / n as f64 * TAU))).unwrap();
        let (mut a, mut b) = ((k as f64 - 1.0) / n as f64 * TAU, (k as f64 + 1.0) / n as f64 * TAU);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if g(c) > g(d) {
                b = d;
            } else {
                a = c;
            }
        }
        g(0.5 * (a + b))
    }

    fn scan_extremes(f: &RandersNorm) -> (f64, f64) {
        let n = 200_000;
        (0..n).fold((f64::INFINITY, 0.0f64), |(lo, hi), k| {
            let t = k as f64 / n as f64 * TAU;
            let v = f.eval([t.cos(), t.sin()]);
            (lo.min(v), hi.max(v))
        })
    }

    #[test]
    fn rejects_incompatible_drift() {
        let m = Sym2::identity();
        assert!(RandersNorm::new(m, [0.6, 0.8]).is_err());
        assert!(RandersNorm::new(m, [0.6, 0.79]).is_ok());
        assert!(check_compatibility(&Sym2::new(1.0, 2.0, 1.0), [0.0, 0.0]).is_err());
        let (ok, margin) = check_compatibility(&Sym2::new(4.0, 0.0, 1.0), [1.0, 0.0]).unwrap();
        assert!(ok);
        assert!((margin - 0.75).abs() < 1e-15);
    }

    #[test]
    fn dual_matches_brute_force() {
        let f = RandersNorm::new(Sym2::new(2.0, 0.3, 0.7), [0.4, -0.3]).unwrap();
        let d = f.dual();
        for k in 0..12 {
            let t = k as f64 * 0.37;
            let l = [t.cos() * 1.7, t.sin() * 0.9];
            let expect = dual_oracle(&f, l);
            assert!((d.eval(l) - expect).abs() < 1e-6 * expect.abs().max(1.0), "{l:?}");
        }
    }

    #[test]
    fn dual_is_an_involution() {
        let f = RandersNorm::new(Sym2::new(1.3, -0.2, 0.6), [0.1, 0.5]).unwrap();
        let back = f.dual().dual();
        assert!((back.m.xx - f.m.xx).abs() < 1e-12);
        assert!((back.m.xy - f.m.xy).abs() < 1e-12);
        assert!((back.m.yy - f.m.yy).abs() < 1e-12);
        assert!((back.omega[0] - f.omega[0]).abs() < 1e-12);
        assert!((back.omega[1] - f.omega[1]).abs() < 1e-12);
    }

    #[test]
    fn extremes_match_scan() {
        for (m, w) in [
            (Sym2::identity(), [0.5, 0.0]),
            (Sym2::new(4.0, 0.0, 1.0), [0.0, 0.0]),
            (Sym2::new(3.0, 1.2, 1.0), [0.3, -0.3]),
            (Sym2::new(0.0975, 0.0, 1.0), [0.0, 0.0]),
        ] {
            let f = RandersNorm::new(m, w).unwrap();
            let (lo, hi) = f.extreme_speeds();
            let (slo, shi) = scan_extremes(&f);
            assert!((lo - slo).abs() < 1e-8 && (hi - shi).abs() < 1e-8, "{m:?} {w:?}");
        }
        // identity with drift 0.5 along x: speeds 1.5 and 0.5
        let f = RandersNorm::new(Sym2::identity(), [0.5, 0.0]).unwrap();
        assert!((f.anisotropy() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_is_one_homogeneous() {
        let f = RandersNorm::new(Sym2::new(2.0, 0.5, 1.0), [0.2, 0.3]).unwrap();
        let v = [0.7, -1.1];
        let g = f.gradient(v).unwrap();
        assert!((dot(g, v) - f.eval(v)).abs() < 1e-12);
        assert!(f.gradient([0.0, 0.0]).is_none());
    }

    fn arb_norm() -> impl Strategy<Value = RandersNorm> {
        (0.1f64..5.0, 0.1f64..5.0, 0.0f64..TAU, 0.0f64..0.95, 0.0f64..TAU).prop_map(|(l1, l2, a, r, b)| {
            let m = Sym2::from_eigen(l1, [a.cos(), a.sin()], l2);
            // scale drift so that |omega|_{M^-1} = r
            let dir = [b.cos(), b.sin()];
            let s = r / m.inverse().unwrap().quad(dir).sqrt();
            RandersNorm::new(m, [dir[0] * s, dir[1] * s]).unwrap()
        })
    }

    proptest! {
        #[test]
        fn norm_axioms(f in arb_norm(), x in -3.0f64..3.0, y in -3.0f64..3.0, u in -3.0f64..3.0, w in -3.0f64..3.0, s in 0.0f64..10.0) {
            let v = [x, y];
            let z = [u, w];
            prop_assert!(f.eval(v) >= -1e-12);
            prop_assert!((f.eval([s * x, s * y]) - s * f.eval(v)).abs() <= 1e-9 * (1.0 + s * f.eval(v)));
            prop_assert!(f.eval([x + u, y + w]) <= f.eval(v) + f.eval(z) + 1e-9);
        }

        #[test]
        fn duality_identities(f in arb_norm()) {
            let (lo, hi) = f.extreme_speeds();
            let (dlo, dhi) = f.dual().extreme_speeds();
            prop_assert!((hi * dlo - 1.0).abs() < 1e-6);
            prop_assert!((lo * dhi - 1.0).abs() < 1e-6);
        }

        #[test]
        fn anisotropy_bounds(f in arb_norm()) {
            let (_, mmax, _) = f.m.eigen();
            let (_, hi) = f.extreme_speeds();
            let r = f.m.inverse().unwrap().quad(f.omega).sqrt();
            prop_assert!(mmax.sqrt() <= hi * (1.0 + 1e-9));
            prop_assert!(hi < 2.0 * mmax.sqrt());
            prop_assert!(f.anisotropy() >= (1.0 / (1.0 - r)) * (1.0 - 1e-9));
        }
    }
}
