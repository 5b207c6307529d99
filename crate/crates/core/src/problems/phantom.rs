//! Random ellipse phantoms and additive noise.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Ranges the random ellipses are drawn from, in normalised coordinates
/// where the image spans `[-1, 1]²`.
const CENTRE: f64 = 0.6;
const AXES: (f64, f64) = (0.1, 0.6);
const INTENSITY: (f64, f64) = (0.1, 0.6);

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    intensity: f64,
}

impl Ellipse {
    fn random<R: Rng>(rng: &mut R) -> Self {
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        Self {
            cx: rng.random_range(-CENTRE..=CENTRE),
            cy: rng.random_range(-CENTRE..=CENTRE),
            a: rng.random_range(AXES.0..=AXES.1),
            b: rng.random_range(AXES.0..=AXES.1),
            cos: angle.cos(),
            sin: angle.sin(),
            intensity: rng.random_range(INTENSITY.0..=INTENSITY.1),
        }
    }

    fn contains(&self, u: f64, v: f64) -> bool {
        let (du, dv) = (u - self.cx, v - self.cy);
        let p = du * self.cos + dv * self.sin;
        let q = -du * self.sin + dv * self.cos;
        (p / self.a).powi(2) + (q / self.b).powi(2) <= 1.0
    }
}

/// A `size × size` image of overlapping rotated ellipses, clamped to
/// `[0, 1]`. The number of ellipses is drawn uniformly from `count`.
pub fn generate_phantom<T: Scalar>(
    seed: u64,
    size: usize,
    count: RangeInclusive<usize>,
) -> Result<Tensor<T>> {
    if size < 8 {
        return Err(Error::invalid(format!("phantom size must be at least 8, got {size}")));
    }
    if count.is_empty() {
        return Err(Error::invalid("ellipse count range is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(count);
    let ellipses: Vec<Ellipse> = (0..n).map(|_| Ellipse::random(&mut rng)).collect();
    let coord = |i: usize| (2 * i + 1) as f64 / size as f64 - 1.0;
    let mut data = Vec::with_capacity(size * size);
    for i in 0..size {
        // Rows run top to bottom.
        let v = -coord(i);
        for j in 0..size {
            let u = coord(j);
            let s: f64 = ellipses
                .iter()
                .filter(|e| e.contains(u, v))
                .map(|e| e.intensity)
                .sum();
            data.push(T::lit(s.clamp(0.0, 1.0)));
        }
    }
    Ok(Tensor::new_unchecked(vec![size, size], data))
}

/// `image + level · ‖image‖/√n · ξ` with `ξ` standard normal.
pub fn add_noise<T: Scalar>(image: &Tensor<T>, level: T, seed: u64) -> Result<Tensor<T>> {
    if !(level >= T::zero()) {
        return Err(Error::invalid("noise level must be nonnegative"));
    }
    if level == T::zero() {
        return Ok(image.clone());
    }
    let sigma = level * image.norm() / T::lit(image.len() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = image
        .as_slice()
        .iter()
        .map(|&v| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            v + sigma * T::lit(xi)
        })
        .collect();
    Ok(Tensor::new_unchecked(image.shape().to_vec(), data))
}

/// Normalised `size × size` Gaussian kernel.
pub fn gaussian_kernel<T: Scalar>(size: usize, std: f64) -> Result<Tensor<T>> {
    if size % 2 == 0 {
        return Err(Error::invalid(format!("kernel size must be odd, got {size}")));
    }
    if !(std > 0.0) {
        return Err(Error::invalid("kernel standard deviation must be positive"));
    }
    let c = (size / 2) as f64;
    let mut raw = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let (di, dj) = (i as f64 - c, j as f64 - c);
            raw.push((-(di * di + dj * dj) / (2.0 * std * std)).exp());
        }
    }
    let total: f64 = raw.iter().sum();
    Ok(Tensor::new_unchecked(
        vec![size, size],
        raw.into_iter().map(|v| T::lit(v / total)).collect(),
    ))
}
