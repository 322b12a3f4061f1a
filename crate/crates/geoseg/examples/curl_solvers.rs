//! Both curl solvers on an annulus with a constant source, against the
//! closed-form gradient.

use std::time::Instant;

use geoseg::fixtures::circle;
use geoseg::geom;
use geoseg::grid::{BinaryMask, ScalarField};
use geoseg::tube::build_tube;
use geoseg::vectorfield::{annulus_gradient, centered_grid, curl_residual, solve_curl, CurlMethod};

fn main() -> geoseg::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200usize);
    let (g, c) = centered_grid(n, 1.6)?;
    let td = build_tube(&circle(c, 1.0, 1000), 0.5, g)?;
    let xi = ScalarField::filled(g, 1.0);
    let inner = BinaryMask { grid: g, bits: (0..g.len()).map(|k| td.mask.bits[k] && td.dist.values[k] <= 0.4).collect() };
    for method in [CurlMethod::Poisson, CurlMethod::Convolution] {
        let t = Instant::now();
        let sol = solve_curl(method, &xi, &td.mask, None, Some(&td.level()))?;
        let dt = t.elapsed();
        let mut worst: f64 = 0.0;
        for k in (0..g.len()).filter(|&k| inner.bits[k]) {
            let w = sol.omega.values[k];
            let exact = annulus_gradient(g.center(k), c, 0.5);
            worst = worst.max(geom::norm(geom::sub([w[1], -w[0]], exact)));
        }
        println!(
            "{method:?}: {dt:.2?}, curl residual {:.3}%, max gradient error {:.2e} (inner band)",
            100.0 * curl_residual(&sol.omega, &xi, &inner),
            worst
        );
    }
    Ok(())
}
