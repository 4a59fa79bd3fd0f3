use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Sample;
use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};
use crate::train::GroundTruth;

const BACKGROUND: f64 = 0.6;
const CELL: usize = 8;

/// Smooth lattice noise in [-1, 1].
fn value_noise(size: usize, rng: &mut impl Rng) -> Vec<f64> {
    let g = size / CELL + 2;
    let lattice: Vec<f64> = (0..g * g).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let (gy, ty) = (y / CELL, smooth((y % CELL) as f64 / CELL as f64));
        for x in 0..size {
            let (gx, tx) = (x / CELL, smooth((x % CELL) as f64 / CELL as f64));
            let at = |i: usize, j: usize| lattice[i * g + j];
            let top = at(gy, gx) * (1.0 - tx) + at(gy, gx + 1) * tx;
            let bottom = at(gy + 1, gx) * (1.0 - tx) + at(gy + 1, gx + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Row of the crack centre line for every column: a polyline through
/// random control points with slopes bounded by 1.
fn centre_line(size: usize, margin: f64, rng: &mut impl Rng) -> Vec<f64> {
    let lo = margin;
    let hi = size as f64 - 1.0 - margin;
    let step = 8usize;
    let mut knots = vec![(0usize, rng.random_range(lo..=hi))];
    let mut x = 0;
    while x < size - 1 {
        let nx = (x + step).min(size - 1);
        let dx = (nx - x) as f64;
        let y = knots.last().unwrap().1;
        let ny = (y + rng.random_range(-dx..=dx)).clamp(lo, hi);
        knots.push((nx, ny));
        x = nx;
    }
    let mut ys = Vec::with_capacity(size);
    for pair in knots.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        for x in x0..x1 {
            ys.push(y0 + (y1 - y0) * (x - x0) as f64 / (x1 - x0) as f64);
        }
    }
    ys.push(knots.last().unwrap().1);
    ys
}

/// Seeded synthetic crack image: value-noise texture around 0.6 crossed by a
/// darker polyline of width 1 to 3 pixels. The mask is the exact stamped
/// footprint. The crack is darker than its surroundings by
/// `0.2 + 3 * noise_level`.
pub fn synth_crack(seed: u64, size: usize, noise_level: f64) -> Result<Sample> {
    if size == 0 || size % 32 != 0 {
        return Err(Error::Size(format!("synthetic size {size} must be a positive multiple of 32")));
    }
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return Err(Error::Config(format!("noise level {noise_level} must be finite and non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = value_noise(size, &mut rng);
    let width = rng.random_range(1..=3usize);
    let ys = centre_line(size, 2.0, &mut rng);
    let transpose = rng.random_bool(0.5);

    let mut mask = vec![0u8; size * size];
    for (x, &y) in ys.iter().enumerate() {
        let top = (y + 0.5).floor() as usize - (width - 1) / 2;
        for row in top..top + width {
            let (r, c) = if transpose { (x, row) } else { (row, x) };
            mask[r * size + c] = 1;
        }
    }
    let shift = 0.2 + 3.0 * noise_level;
    let gray: Vec<f32> = noise
        .iter()
        .zip(&mask)
        .map(|(&n, &m)| {
            let v = BACKGROUND + noise_level * n - if m == 1 { shift } else { 0.0 };
            v.clamp(0.0, 1.0) as f32
        })
        .collect();
    let image = Tensor4::from_vec(Shape4::new(1, 3, size, size), [gray.clone(), gray.clone(), gray].concat())?;
    Sample::new(image, GroundTruth::new(Shape4::new(1, 1, size, size), mask)?)
}
