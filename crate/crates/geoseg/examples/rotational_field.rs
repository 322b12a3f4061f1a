//! Geodesics under the rotational metric for three parameter pairs, with
//! the distance level sets written as PNGs. Output directory is the first
//! argument (default `rotational_out`).

use std::path::PathBuf;

use geoseg::cli::{self, DistanceRequest, MetricSpec};
use geoseg::io;

fn main() -> geoseg::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "rotational_out".into()));
    std::fs::create_dir_all(&out)?;
    for (a1, a2) in [(0.0, 0.0), (0.95, 0.0), (0.3, 0.8)] {
        let req = DistanceRequest { metric: MetricSpec::Rotational { a1, a2 }, ..Default::default() };
        let res = cli::distance(&req)?;
        let path = res.path.as_ref().expect("rotational requests trace a path");
        println!(
            "a1 {a1:4.2} a2 {a2:4.2}: path length {:7.2} px, mean <t, w> {:+.3}",
            path.length(),
            res.alignment.unwrap_or(0.0)
        );
        let img = cli::level_set_image(&res.map, None, Some(path), 24);
        io::save_image_png(&img, &out.join(format!("levels_{a1}_{a2}.png")))?;
    }
    println!("pictures in {}", out.display());
    Ok(())
}
