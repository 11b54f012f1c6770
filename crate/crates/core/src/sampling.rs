//! Deterministic sample sets: scaled random boxes, sphere point sets and seed splitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::ExtendedState;

/// Seed of the default decay samples.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;

/// Magnitudes the unit-box samples are scaled to.
pub const SAMPLE_SCALES: [f64; 3] = [1e-2, 1.0, 1e2];

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent per-trajectory seed: `seed XOR hash(index)`.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    seed ^ mix64(index)
}

/// `count` extended states drawn uniformly from `[-1, 1]^(n+r)` (seed [`DEFAULT_SEED`]),
/// cycling through the magnitudes in [`SAMPLE_SCALES`].
pub fn default_decay_samples(n: usize, r: usize, count: usize) -> Vec<ExtendedState> {
    box_samples(n, r, count, DEFAULT_SEED)
}

pub fn box_samples(n: usize, r: usize, count: usize, seed: u64) -> Vec<ExtendedState> {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|i| {
            let scale = SAMPLE_SCALES[i % SAMPLE_SCALES.len()];
            let w: Vec<f64> = (0..n + r).map(|_| scale * rng.random_range(-1.0..=1.0)).collect();
            ExtendedState::from_flat(&w, n)
        })
        .collect()
}

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101,
    103, 107, 109, 113, 127, 131,
];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    out
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Low-discrepancy points on the unit sphere of `R^dim`: Halton coordinates pushed through
/// Box-Muller to Gaussians, then normalized. Uniform angles are used for `dim = 2`.
pub fn halton_sphere(dim: usize, count: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    if dim == 2 {
        return (0..count)
            .map(|i| {
                let th = std::f64::consts::TAU * i as f64 / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect();
    }
    let pairs = dim.div_ceil(2);
    assert!(2 * pairs <= PRIMES.len(), "sphere dimension {dim} too large for the Halton set");
    (1..=count as u64)
        .filter_map(|idx| {
            let mut v = Vec::with_capacity(2 * pairs);
            for p in 0..pairs {
                let u1 = radical_inverse(idx, PRIMES[2 * p]).max(1e-300);
                let u2 = radical_inverse(idx, PRIMES[2 * p + 1]);
                let rad = (-2.0 * u1.ln()).sqrt();
                let ang = std::f64::consts::TAU * u2;
                v.push(rad * ang.cos());
                v.push(rad * ang.sin());
            }
            v.truncate(dim);
            normalize(v)
        })
        .collect()
}

/// Uniform random points on the unit sphere.
pub fn random_sphere(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        // Box-Muller from two uniforms.
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        if let Some(v) = normalize(v) {
            out.push(v);
        }
    }
    out
}

/// Coordinate axes `±e_i` and normalized pairwise diagonals `(±e_i ± e_j)/sqrt(2)`.
pub fn structured_directions(dim: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; dim];
            v[i] = s;
            out.push(v);
        }
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..dim {
        for j in i + 1..dim {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut v = vec![0.0; dim];
                v[i] = si * h;
                v[j] = sj * h;
                out.push(v);
            }
        }
    }
    out
}
