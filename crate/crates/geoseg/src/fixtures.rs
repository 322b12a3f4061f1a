//! Synthetic test images with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geom::{self, Polyline, Vec2};
use crate::grid::{BinaryMask, Grid2D, Image};

pub const FIXTURE_SIZE: usize = 128;
pub const DISK_CENTER: Vec2 = [63.5, 63.5];
pub const DISK_RADIUS: f64 = 36.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureKind {
    /// Bright disk on a dark background with Gaussian noise.
    Disk,
    /// Disk over a background of small high-contrast blocks.
    Blocks,
    /// Disk crossed by thick straight segments.
    Clutter,
}

impl FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disk" => Ok(FixtureKind::Disk),
            "blocks" => Ok(FixtureKind::Blocks),
            "clutter" => Ok(FixtureKind::Clutter),
            _ => Err(Error::invalid(format!("unknown fixture '{s}' (disk, blocks, clutter)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub image: Image,
    pub truth: BinaryMask,
    /// Boundary of `truth`, counter-clockwise.
    pub contour: Polyline,
}

pub fn circle(center: Vec2, radius: f64, n: usize) -> Polyline {
    Polyline::closed(
        (0..n)
            .map(|k| {
                let a = k as f64 / n as f64 * TAU;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            })
            .collect(),
    )
}

fn disk_truth(g: Grid2D) -> BinaryMask {
    BinaryMask::from_fn(g, |p| geom::dist(p, DISK_CENTER) < DISK_RADIUS)
}

fn add_noise(values: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).expect("positive sigma");
        for v in values.iter_mut() {
            *v = (*v + n.sample(rng)).clamp(0.0, 1.0);
        }
    }
}

/// Disk of intensity 0.75 on 0.25 with additive noise of deviation `sigma`.
pub fn disk(seed: u64, sigma: f64) -> Fixture {
    let g = Grid2D::pixels(FIXTURE_SIZE, FIXTURE_SIZE).expect("fixed size");
    let truth = disk_truth(g);
    let mut values: Vec<f64> = truth.bits.iter().map(|b| if *b { 0.75 } else { 0.25 }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise(&mut values, sigma, &mut rng);
    Fixture { image: Image::gray(g, values).expect("sizes match"), truth, contour: circle(DISK_CENTER, DISK_RADIUS, 720) }
}

/// Disk of mid intensity over 4x4 blocks drawn from {0.05, 0.95}.
pub fn blocks(seed: u64) -> Fixture {
    let g = Grid2D::pixels(FIXTURE_SIZE, FIXTURE_SIZE).expect("fixed size");
    let truth = disk_truth(g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = FIXTURE_SIZE / 4;
    let tiles: Vec<f64> = (0..nb * nb).map(|_| if rng.gen_bool(0.5) { 0.05 } else { 0.95 }).collect();
    let mut values: Vec<f64> = (0..g.len())
        .map(|k| {
            if truth.bits[k] {
                0.5
            } else {
                let (i, j) = g.coords(k);
                tiles[(j / 4) * nb + i / 4]
            }
        })
        .collect();
    add_noise(&mut values, 0.02, &mut rng);
    Fixture { image: Image::gray(g, values).expect("sizes match"), truth, contour: circle(DISK_CENTER, DISK_RADIUS, 720) }
}

/// Textured disk (0.6 on 0.4, noise 0.12, so the two intensity histograms
/// overlap) interrupted by `count` dark segments two pixels wide that cross
/// the whole image.
pub fn clutter(seed: u64, count: usize) -> Fixture {
    let g = Grid2D::pixels(FIXTURE_SIZE, FIXTURE_SIZE).expect("fixed size");
    let truth = disk_truth(g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = FIXTURE_SIZE as f64;
    let lines: Vec<(Vec2, Vec2)> = (0..count)
        .map(|_| {
            let a: f64 = rng.gen_range(0.0..TAU);
            let off: f64 = rng.gen_range(-0.6..0.6) * DISK_RADIUS;
            let dir = [a.cos(), a.sin()];
            let c = geom::add(DISK_CENTER, geom::scale(geom::perp(dir), off));
            (geom::add(c, geom::scale(dir, -size)), geom::add(c, geom::scale(dir, size)))
        })
        .collect();
    let mut values: Vec<f64> = (0..g.len())
        .map(|k| {
            let p = g.center(k);
            if lines.iter().any(|(a, b)| geom::point_segment(p, *a, *b).0 < 1.0) {
                0.02
            } else if truth.bits[k] {
                0.6
            } else {
                0.4
            }
        })
        .collect();
    add_noise(&mut values, 0.12, &mut rng);
    Fixture { image: Image::gray(g, values).expect("sizes match"), truth, contour: circle(DISK_CENTER, DISK_RADIUS, 720) }
}

/// The default instance of each family.
pub fn make_fixture(kind: FixtureKind, seed: u64) -> Fixture {
    match kind {
        FixtureKind::Disk => disk(seed, 0.05),
        FixtureKind::Blocks => blocks(seed),
        FixtureKind::Clutter => clutter(seed, 4),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::rasterize;

    #[test]
    fn truth_matches_the_contour() {
        for kind in [FixtureKind::Disk, FixtureKind::Blocks, FixtureKind::Clutter] {
            let f = make_fixture(kind, 3);
            let r = rasterize(&f.contour, f.truth.grid).unwrap();
            assert!(f.truth.jaccard(&r) > 0.995, "{kind:?}");
            assert!(f.contour.signed_area() > 0.0);
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let a = disk(7, 0.05);
        assert_eq!(a.image, disk(7, 0.05).image);
        assert_ne!(a.image, disk(8, 0.05).image);
        assert_eq!(clutter(1, 4).image, clutter(1, 4).image);
    }

    #[test]
    fn noise_level() {
        let f = disk(1, 0.05);
        let inside: Vec<f64> = (0..f.truth.bits.len()).filter(|k| f.truth.bits[*k]).map(|k| f.image.channels[0][k]).collect();
        let mean = inside.iter().sum::<f64>() / inside.len() as f64;
        let sd = (inside.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / inside.len() as f64).sqrt();
        assert!((mean - 0.75).abs() < 0.005);
        assert!((sd - 0.05).abs() < 0.005);
    }

    #[test]
    fn names_parse() {
        assert_eq!("clutter".parse::<FixtureKind>().unwrap(), FixtureKind::Clutter);
        assert!("plaid".parse::<FixtureKind>().is_err());
    }
}
