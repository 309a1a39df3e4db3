//! Random system generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scalesync_core::{linalg, LtiModel, TimeDomain};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_like(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Well-conditioned random similarity.
pub fn random_similarity(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let t = DMatrix::identity(n, n) + gaussian_like(rng, n, n) * 0.4;
        let sv = linalg::singular_values(&t);
        if sv.min() > 0.2 {
            return t;
        }
    }
}

/// Random Hurwitz (continuous) or Schur (discrete) matrix.
pub fn random_stable(rng: &mut ChaCha8Rng, n: usize, domain: TimeDomain) -> DMatrix<f64> {
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let m = gaussian_like(rng, n, n);
    let eigs = linalg::eigenvalues(&m).unwrap();
    match domain {
        TimeDomain::Continuous => {
            let shift = linalg::spectral_abscissa(&eigs) + rng.random_range(0.1..1.0);
            m - DMatrix::identity(n, n) * shift
        }
        TimeDomain::Discrete => {
            let r = linalg::spectral_radius(&eigs).max(1e-3);
            m * (rng.random_range(0.1..0.9) / r)
        }
    }
}

/// Neutrally stable matrix: a strictly stable block next to semisimple
/// boundary modes (rotations / zeros or ±1), under a random similarity.
pub fn random_neutral(rng: &mut ChaCha8Rng, n: usize, domain: TimeDomain) -> DMatrix<f64> {
    let boundary = rng.random_range(1..=n);
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    let mut used = 0;
    while used < boundary {
        if boundary - used >= 2 && rng.random_bool(0.6) {
            let w: f64 = rng.random_range(0.2..3.0);
            blocks.push(match domain {
                TimeDomain::Continuous => DMatrix::from_row_slice(2, 2, &[0.0, w, -w, 0.0]),
                TimeDomain::Discrete => {
                    let (s, c) = w.sin_cos();
                    DMatrix::from_row_slice(2, 2, &[c, s, -s, c])
                }
            });
            used += 2;
        } else {
            let v = match domain {
                TimeDomain::Continuous => 0.0,
                TimeDomain::Discrete => {
                    if rng.random_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            blocks.push(DMatrix::from_element(1, 1, v));
            used += 1;
        }
    }
    blocks.push(random_stable(rng, n - boundary, domain));
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    let core = linalg::blkdiag(&refs);
    let t = random_similarity(rng, n);
    let t_inv = t.clone().try_inverse().unwrap();
    &t * core * t_inv
}

/// Random SISO model with generic (hence minimal with probability one) data.
pub fn random_siso(rng: &mut ChaCha8Rng, n: usize, domain: TimeDomain) -> LtiModel {
    LtiModel::new(
        gaussian_like(rng, n, n),
        gaussian_like(rng, n, 1),
        gaussian_like(rng, 1, n),
        domain,
    )
    .unwrap()
}

/// Neutrally stable agent with random input and output maps.
pub fn random_neutral_model(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize, domain: TimeDomain) -> LtiModel {
    let a = random_neutral(rng, n, domain);
    LtiModel::new(a, gaussian_like(rng, n, m), gaussian_like(rng, p, n), domain).unwrap()
}
