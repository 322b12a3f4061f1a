//! A Randers norm, its dual and its extreme speeds.

use std::f64::consts::TAU;

use geoseg::randers::{RandersNorm, Sym2};

fn main() -> geoseg::Result<()> {
    let m = Sym2::from_eigen(4.0, [1.0, 1.0 / 3f64.sqrt()], 1.0);
    let f = RandersNorm::new(m, [0.6, -0.3])?;
    let dual = f.dual();
    println!("margin {:.4}, anisotropy {:.3}", f.margin(), f.anisotropy());
    let (lo, hi) = f.extreme_speeds();
    let (dlo, dhi) = dual.extreme_speeds();
    println!("F:  min {lo:.4} max {hi:.4}");
    println!("F*: min {dlo:.4} max {dhi:.4}  (max F * min F* = {:.12})", hi * dlo);
    for k in 0..8 {
        let a = k as f64 / 8.0 * TAU;
        let u = [a.cos(), a.sin()];
        println!("dir {:5.1} deg: F(u) {:.4}  F(-u) {:.4}  F*(u) {:.4}", a.to_degrees(), f.eval(u), f.eval([-u[0], -u[1]]), dual.eval(u));
    }
    Ok(())
}
