//! Symmetric and adaptive tubular neighbourhoods around a circle on the
//! disk fixture, saved as PGM masks in the directory given as argument.

use std::path::PathBuf;

use geoseg::features::shape_gradient;
use geoseg::fixtures::{circle, make_fixture, FixtureKind, DISK_CENTER, DISK_RADIUS};
use geoseg::grid::rasterize;
use geoseg::io;
use geoseg::tube::{adaptive_tube, build_tube};

fn main() -> geoseg::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "tubes_out".into()));
    std::fs::create_dir_all(&out)?;
    let fx = make_fixture(FixtureKind::Disk, 0);
    let s = circle(DISK_CENTER, DISK_RADIUS - 6.0, 300);
    let shape = rasterize(&s, fx.image.grid)?;
    let sg = shape_gradient(&Default::default(), &fx.image, &shape)?;
    let sym = build_tube(&s, 15.0, fx.image.grid)?;
    println!("symmetric tube: {} cells", sym.mask.count());
    io::save_mask(&sym.mask, &out.join("tube_symmetric.pgm"))?;
    for upsilon in [1.0, 0.5, 0.2] {
        let td = adaptive_tube(&sym, &sg.xi, &shape, upsilon, 0.1)?;
        let outside = (0..td.mask.bits.len()).filter(|&k| td.mask.bits[k] && !shape.bits[k]).count();
        println!("adaptive tube, upsilon {upsilon}: {} cells, {outside} outside the current shape", td.mask.count());
        io::save_mask(&td.mask, &out.join(format!("tube_adaptive_{upsilon}.pgm")))?;
    }
    Ok(())
}
