//! Disk crossed by dark straight segments: the histogram model keeps the
//! contour on the disk boundary, the piecewise-constant model for contrast.

use geoseg::evolve::{evolve_landmarks, sample_landmarks, LandmarkSet, SegmentationConfig};
use geoseg::features::AppearanceModel;
use geoseg::fixtures::{make_fixture, FixtureKind};

fn main() -> geoseg::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0u64);
    let fx = make_fixture(FixtureKind::Clutter, seed);
    let lm = LandmarkSet::new(sample_landmarks(&fx.contour, 3, seed)?, fx.image.grid)?;
    for (name, model) in [("bhattacharyya", AppearanceModel::bhattacharyya()), ("piecewise", AppearanceModel::PiecewiseConstant)] {
        let cfg = SegmentationConfig { model, ..Default::default() };
        let st = evolve_landmarks(&fx.image, &lm, None, &cfg)?;
        println!(
            "{name:14} iterations {:3} converged {:5} jaccard {:.4}",
            st.iteration,
            st.converged,
            st.mask.jaccard(&fx.truth)
        );
    }
    Ok(())
}
