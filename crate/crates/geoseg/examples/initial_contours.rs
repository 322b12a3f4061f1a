//! The two landmark initialisers on the clutter fixture: the Euclidean
//! polygon and the simple closed curve through edge-weighted paths.

use geoseg::evolve::{init_polygon, init_simple_closed, sample_landmarks, LandmarkSet, SegmentationConfig};
use geoseg::fixtures::{make_fixture, FixtureKind};
use geoseg::grid::rasterize;

fn main() -> geoseg::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1u64);
    let fx = make_fixture(FixtureKind::Clutter, seed);
    let g = fx.image.grid;
    let lm = LandmarkSet::new(sample_landmarks(&fx.contour, 4, seed)?, g)?;
    let cfg = SegmentationConfig::default();
    let poly = init_polygon(&lm, g, cfg.alpha_euclid)?;
    let simple = init_simple_closed(&fx.image, &lm, &cfg)?;
    for (name, c) in [("polygon", &poly), ("simple closed", &simple)] {
        let j = rasterize(c, g)?.jaccard(&fx.truth);
        println!("{name:14} {:4} vertices, length {:7.2}, self-intersections {}, jaccard {j:.4}", c.len(), c.length(), c.self_intersections());
    }
    Ok(())
}
