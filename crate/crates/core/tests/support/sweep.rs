//! Randomized comparisons of the library against [`super::oracle`].

#![allow(dead_code)]

use forge_core::mmd::{mmd_squared, Bandwidth, Estimator, KernelSpec};
use forge_core::rng::SplitMix64;
use ndarray::Array2;

use super::oracle::{self, K};

fn uniform(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

pub fn sample(rng: &mut SplitMix64, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| uniform(rng) + shift).collect()).collect()
}

pub fn array(rows: &[Vec<f64>]) -> Array2<f64> {
    let d = rows[0].len();
    Array2::from_shape_vec((rows.len(), d), rows.concat()).unwrap()
}

#[derive(Debug, Default)]
pub struct Sweep {
    /// Random (X, Y) instances drawn.
    pub instances: usize,
    /// Kernel and estimator combinations compared over all instances.
    pub comparisons: usize,
    /// Largest |library - oracle|.
    pub max_error: f64,
    /// Largest |MMD²(X, X)| under the biased estimator.
    pub max_self: f64,
    /// Comparisons where swapping X and Y changed any bit of the result.
    pub asymmetric: usize,
}

/// `cases` instances with n, m in 2..=30 and d in 1..=16, each compared
/// under the linear kernel, a fixed-bandwidth RBF and the median RBF, with
/// both estimators.
pub fn sweep(cases: usize, seed: u64) -> Sweep {
    let mut rng = SplitMix64::new(seed);
    let mut s = Sweep::default();
    for case in 0..cases {
        let n = 2 + rng.below(29) as usize;
        let m = 2 + rng.below(29) as usize;
        let d = 1 + rng.below(16) as usize;
        let shift = uniform(&mut rng);
        let x = sample(&mut rng, n, d, 0.0);
        let y = sample(&mut rng, m, d, shift);
        let (xa, ya) = (array(&x), array(&y));
        let sigma = 0.25 + rng.below(400) as f64 / 100.0;
        let median = oracle::median_distance(&x, &y);
        let kernels = [
            (KernelSpec::Linear, K::Linear),
            (KernelSpec::Rbf { bandwidth: Bandwidth::Fixed { sigma } }, K::Rbf(sigma)),
            (KernelSpec::Rbf { bandwidth: Bandwidth::Median }, K::Rbf(median)),
        ];
        s.instances += 1;
        for (spec, kind) in kernels {
            for (est, unbiased) in [(Estimator::Biased, false), (Estimator::Unbiased, true)] {
                let got = mmd_squared(xa.view(), ya.view(), spec, est, case as u64).unwrap();
                let back = mmd_squared(ya.view(), xa.view(), spec, est, case as u64).unwrap();
                let want = oracle::mmd2(&x, &y, kind, unbiased);
                s.max_error = s.max_error.max((got - want).abs());
                s.asymmetric += usize::from(got.to_bits() != back.to_bits());
                s.comparisons += 1;
            }
            let own = mmd_squared(xa.view(), xa.view(), spec, Estimator::Biased, 0).unwrap();
            s.max_self = s.max_self.max(own.abs());
        }
    }
    s
}
