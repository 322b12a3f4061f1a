//! Three random landmarks on the disk fixture, polygon initialisation,
//! piecewise-constant model. Pass a seed as the first argument.

use std::time::Instant;

use geoseg::evolve::{sample_landmarks, LandmarkSet, SegmentationConfig, Segmenter};
use geoseg::fixtures::{make_fixture, FixtureKind};

fn main() -> geoseg::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0u64);
    let fx = make_fixture(FixtureKind::Disk, seed);
    let lm = LandmarkSet::new(sample_landmarks(&fx.contour, 3, seed)?, fx.image.grid)?;
    let t = Instant::now();
    let mut seg = Segmenter::landmarks(&fx.image, &lm, None, &SegmentationConfig::default())?;
    println!("initial jaccard {:.4}", seg.state().mask.jaccard(&fx.truth));
    while !seg.state().converged && seg.state().iteration < seg.config().max_iters {
        let r = seg.step()?;
        println!(
            "iter {:3}  energy {:9.3}  area_delta {:7.1}  jaccard {:.4}",
            r.iteration,
            r.energy,
            r.area_delta,
            seg.state().mask.jaccard(&fx.truth)
        );
    }
    println!("{} iterations in {:.2?}", seg.state().iteration, t.elapsed());
    Ok(())
}
