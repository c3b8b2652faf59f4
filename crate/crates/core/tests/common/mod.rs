#![allow(dead_code)]

use cvxnn::{DataMatrix, Labels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_data(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DataMatrix {
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect())
        .collect();
    DataMatrix::from_samples(&samples).unwrap()
}

pub fn gaussian_labels(rng: &mut ChaCha8Rng, n: usize) -> Labels {
    Labels::new((0..n).map(|_| StandardNormal.sample(&mut *rng)).collect()).unwrap()
}

/// Small nonzero integer points, so perpendicular directions are exact.
pub fn integer_data(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DataMatrix {
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|_| loop {
            let p: Vec<f64> = (0..d).map(|_| rng.random_range(-4i32..=4) as f64).collect();
            if p.iter().any(|&v| v != 0.0) {
                break p;
            }
        })
        .collect();
    DataMatrix::from_samples(&samples).unwrap()
}

pub fn exdata() -> DataMatrix {
    DataMatrix::from_samples(&[vec![2.0, 2.0], vec![3.0, 3.0], vec![1.0, 0.0]]).unwrap()
}
