//! Deterministic randomness: one root seed, split per subsystem via a
//! counter-based scheme so any single episode can be re-run in isolation.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream tags keeping subsystems on independent child seeds.
pub mod streams {
    pub const DATAGEN: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const SCENE: u64 = 3;
    pub const POSE: u64 = 4;
    pub const EPISODE: u64 = 5;
    pub const SURFACE: u64 = 6;
    pub const MODEL_INIT: u64 = 7;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `(root, stream, index)`. Stable across runs
/// and platforms; collisions across distinct inputs are not a concern at
/// the scales used here.
pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ splitmix64(stream)) ^ index)
}

/// Seeded generator used everywhere randomness is needed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fill an `rows x cols` matrix with standard-normal draws in row-major order.
pub fn standard_normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Array2::from_shape_vec((rows, cols), data).expect("shape matches generated length")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_stable_and_stream_separated() {
        let a = derive_seed(42, streams::DATAGEN, 0);
        let b = derive_seed(42, streams::DATAGEN, 0);
        assert_eq!(a, b);
        assert_ne!(a, derive_seed(42, streams::TRAIN, 0));
        assert_ne!(a, derive_seed(42, streams::DATAGEN, 1));
        assert_ne!(a, derive_seed(43, streams::DATAGEN, 0));
    }

    #[test]
    fn normal_matrix_is_reproducible() {
        let mut r1 = rng_from_seed(7);
        let mut r2 = rng_from_seed(7);
        let m1 = standard_normal_matrix(&mut r1, 4, 3);
        let m2 = standard_normal_matrix(&mut r2, 4, 3);
        assert_eq!(m1, m2);
    }
}
