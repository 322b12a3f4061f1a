//! Circular mode: closed geodesics around a wall, starting from a circle
//! 8 px larger than the disk.

use geoseg::evolve::{SegmentationConfig, Segmenter};
use geoseg::fixtures::{circle, make_fixture, FixtureKind, DISK_CENTER, DISK_RADIUS};

fn main() -> geoseg::Result<()> {
    let fx = make_fixture(FixtureKind::Disk, 0);
    let s0 = circle(DISK_CENTER, DISK_RADIUS + 8.0, 200);
    let mut seg = Segmenter::circular(&fx.image, &s0, None, &SegmentationConfig::default())?;
    while !seg.state().converged && seg.state().iteration < seg.config().max_iters {
        let r = seg.step()?;
        println!(
            "iter {:3}  anchor ({:6.2}, {:6.2})  area_delta {:7.1}  jaccard {:.4}",
            r.iteration,
            seg.state().source_anchor[0],
            seg.state().source_anchor[1],
            r.area_delta,
            seg.state().mask.jaccard(&fx.truth)
        );
    }
    Ok(())
}
