//! Synthetic test patterns and training data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;
use crate::psf::blur;
use crate::train::TrainingPair;
use crate::Result;

pub fn checkerboard(height: usize, width: usize, cell: usize, lo: f32, hi: f32) -> Image {
    let cell = cell.max(1);
    Image::from_fn(height, width, 1, |y, x, _| {
        if (y / cell + x / cell) % 2 == 0 {
            lo
        } else {
            hi
        }
    })
    .expect("valid pattern")
}

/// Groups of vertical bars whose width shrinks from left to right
/// (8, 6, 4, 3, 2 px), separated by gaps of the same width.
pub fn bar_target(height: usize, width: usize, lo: f32, hi: f32) -> Image {
    const WIDTHS: [usize; 5] = [8, 6, 4, 3, 2];
    let mut columns = vec![lo; width];
    let mut x = 2;
    'outer: for bw in WIDTHS {
        for _ in 0..3 {
            for _ in 0..bw {
                if x >= width {
                    break 'outer;
                }
                columns[x] = hi;
                x += 1;
            }
            x += bw;
        }
        x += 4;
    }
    let margin = height / 8;
    Image::from_fn(height, width, 1, |y, x, _| {
        if y >= margin && y + margin < height {
            columns[x]
        } else {
            lo
        }
    })
    .expect("valid pattern")
}

/// Vertical step edge: `lo` left of `edge_col`, `hi` from it onwards.
pub fn blade_edge(height: usize, width: usize, edge_col: usize, lo: f32, hi: f32) -> Image {
    Image::from_fn(height, width, 1, |_, x, _| if x < edge_col { lo } else { hi })
        .expect("valid pattern")
}

/// Piecewise-constant scene of random rectangles, stripes and checker
/// patches on a random background.
pub fn random_scene(height: usize, width: usize, rng: &mut impl Rng) -> Image {
    let mut data = vec![rng.random_range(0.0..0.5f32); height * width];
    let shapes = rng.random_range(3..9);
    for _ in 0..shapes {
        let h = rng.random_range(2..=height.max(3) / 2 + 1);
        let w = rng.random_range(2..=width.max(3) / 2 + 1);
        let y0 = rng.random_range(0..height);
        let x0 = rng.random_range(0..width);
        let a = rng.random_range(0.0..1.0f32);
        let b = rng.random_range(0.0..1.0f32);
        let kind = rng.random_range(0..3);
        let period = rng.random_range(2..9usize);
        for y in y0..(y0 + h).min(height) {
            for x in x0..(x0 + w).min(width) {
                let v = match kind {
                    0 => a,
                    1 => {
                        if ((x - x0) / period) % 2 == 0 {
                            a
                        } else {
                            b
                        }
                    }
                    _ => {
                        if ((y - y0) / period + (x - x0) / period) % 2 == 0 {
                            a
                        } else {
                            b
                        }
                    }
                };
                data[y * width + x] = v;
            }
        }
    }
    Image::new(height, width, 1, data).expect("values in range")
}

/// `count` (blurred, sharp) pairs of random scenes, blurred with `sigma`.
pub fn training_pairs(count: usize, size: usize, sigma: f64, seed: u64) -> Result<Vec<TrainingPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let target = random_scene(size, size, &mut rng);
            let blurred = blur(&target, sigma)?;
            Ok(TrainingPair { blurred, target })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns_have_expected_levels() {
        let c = checkerboard(8, 8, 2, 0.1, 0.9);
        assert_eq!(c.get(0, 0, 0), 0.1);
        assert_eq!(c.get(0, 2, 0), 0.9);
        assert_eq!(c.get(2, 2, 0), 0.1);

        let e = blade_edge(4, 10, 5, 0.0, 1.0);
        assert_eq!(e.get(3, 4, 0), 0.0);
        assert_eq!(e.get(3, 5, 0), 1.0);

        let b = bar_target(64, 96, 0.2, 0.8);
        let (lo, hi) = b.min_max();
        assert_eq!((lo, hi), (0.2, 0.8));
        assert_eq!(b.get(0, 3, 0), 0.2);
        assert_eq!(b.get(32, 2, 0), 0.8);
    }

    #[test]
    fn training_pairs_are_seeded() {
        let a = training_pairs(3, 16, 1.0, 5).unwrap();
        let b = training_pairs(3, 16, 1.0, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].target, a[0].blurred);
    }
}
