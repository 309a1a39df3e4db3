//! Observer gain design by pole placement on the observable part.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::TimeDomain;

const PLACEMENT_SEED: u64 = 0x0b5e_7a11;
const PLACEMENT_ATTEMPTS: usize = 32;

/// Preset closed-loop observer poles: `{−1, −1.5, −2, …}` in continuous time,
/// `{0, 0.1, −0.1, 0.2, −0.2, …}` in discrete time.
pub fn target_poles(count: usize, domain: TimeDomain) -> Vec<f64> {
    match domain {
        TimeDomain::Continuous => (0..count).map(|i| -1.0 - 0.5 * i as f64).collect(),
        TimeDomain::Discrete => (0..count)
            .map(|i| {
                let mag = 0.1 * i.div_ceil(2) as f64;
                if i % 2 == 1 {
                    mag
                } else {
                    -mag
                }
            })
            .map(|v| if v == 0.0 { 0.0 } else { v })
            .collect(),
    }
}

/// Gain `H` such that `A − HC` has the preset poles on the observable part.
/// Unobservable modes must already be strictly stable.
pub fn observer_gain(a: &DMatrix<f64>, c: &DMatrix<f64>, domain: TimeDomain) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let p = c.nrows();
    if a.ncols() != n || c.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "A is {:?}, C is {:?}",
            a.shape(),
            c.shape()
        )));
    }
    // Dual problem: state feedback for (Aᵀ, Cᵀ).
    let f = a.transpose();
    let g = c.transpose();
    let k = state_feedback(&f, &g, domain)?;
    let h = k.transpose();

    let closed = a - &h * c;
    let eigs = linalg::eigenvalues(&closed)?;
    let stable = match domain {
        TimeDomain::Continuous => linalg::spectral_abscissa(&eigs) < 0.0,
        TimeDomain::Discrete => linalg::spectral_radius(&eigs) < 1.0,
    };
    if !stable {
        return Err(Error::ObserverDesignFailed(format!(
            "observer error dynamics are not stable ({} outputs, {} states)",
            p, n
        )));
    }
    Ok(h)
}

fn state_feedback(f: &DMatrix<f64>, g: &DMatrix<f64>, domain: TimeDomain) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    let m = g.ncols();
    let scale = linalg::norm2(f).max(1.0);

    // Controllable subspace via an orthonormal Krylov sequence.
    let mut basis = linalg::orth(g, 1e-10 * linalg::norm2(g).max(f64::MIN_POSITIVE));
    for _ in 0..n {
        let grown = linalg::subspace_sum(&basis, &(f * &basis), 1e-9 * scale);
        if grown.ncols() == basis.ncols() {
            break;
        }
        basis = grown;
    }
    let r = basis.ncols();
    let t = linalg::hstack(&[&basis, &linalg::complement(&basis, n)]);
    let ft = t.transpose() * f * &t;
    let gt = t.transpose() * g;

    if r < n {
        let fu = ft.view((r, r), (n - r, n - r)).into_owned();
        let eigs = linalg::eigenvalues(&fu)?;
        let ok = match domain {
            TimeDomain::Continuous => linalg::spectral_abscissa(&eigs) < 0.0,
            TimeDomain::Discrete => linalg::spectral_radius(&eigs) < 1.0,
        };
        if !ok {
            return Err(Error::ObserverDesignFailed(
                "an unobservable mode is not strictly stable".into(),
            ));
        }
    }
    if r == 0 || m == 0 {
        return Ok(DMatrix::zeros(m, n));
    }

    let fc = ft.view((0, 0), (r, r)).into_owned();
    let gc = gt.rows(0, r).into_owned();
    let targets = target_poles(r, domain);
    let kc = place_controllable(&fc, &gc, &targets)?;
    let mut k_t = DMatrix::zeros(m, n);
    k_t.view_mut((0, 0), (m, r)).copy_from(&kc);
    Ok(k_t * t.transpose())
}

/// Places the poles of a controllable pair `(F, G)` at the real `targets`.
fn place_controllable(f: &DMatrix<f64>, g: &DMatrix<f64>, targets: &[f64]) -> Result<DMatrix<f64>> {
    let r = f.nrows();
    let m = g.ncols();
    let expected: Vec<Complex64> = targets.iter().map(|&t| Complex64::new(t, 0.0)).collect();
    let tol = 1e-6 * (1.0 + targets.iter().fold(0.0_f64, |acc, t| acc.max(t.abs())));
    let mut rng = ChaCha8Rng::seed_from_u64(PLACEMENT_SEED);

    for attempt in 0..PLACEMENT_ATTEMPTS {
        let (k0, dir) = if m == 1 {
            (DMatrix::zeros(1, r), DMatrix::from_element(1, 1, 1.0))
        } else {
            let dir = DMatrix::from_fn(m, 1, |_, _| rng.random_range(-1.0..1.0));
            let k0 = if attempt == 0 {
                DMatrix::zeros(m, r)
            } else {
                DMatrix::from_fn(m, r, |_, _| rng.random_range(-1.0..1.0))
            };
            (k0, dir)
        };
        let f0 = f - g * &k0;
        let b = g * &dir;
        let Some(k) = ackermann(&f0, &b, targets) else {
            if m == 1 {
                break;
            }
            continue;
        };
        let gain = k0 + dir * k;
        let eigs = linalg::eigenvalues(&(f - g * &gain))?;
        if linalg::multiset_distance(&eigs, &expected).is_some_and(|d| d <= tol) {
            return Ok(gain);
        }
        if m == 1 {
            break;
        }
    }
    Err(Error::ObserverDesignFailed(
        "pole placement did not reach the preset poles".into(),
    ))
}

/// Single-input Ackermann formula `k = e_rᵀ 𝒞⁻¹ φ(F)`.
fn ackermann(f: &DMatrix<f64>, b: &DMatrix<f64>, targets: &[f64]) -> Option<DMatrix<f64>> {
    let r = f.nrows();
    let mut ctrb = DMatrix::zeros(r, r);
    let mut col = b.clone();
    for j in 0..r {
        ctrb.set_column(j, &col.column(0));
        col = f * col;
    }
    let sv = linalg::singular_values(&ctrb);
    let smax = sv.max();
    if smax == 0.0 || sv.min() < 1e-12 * smax {
        return None;
    }
    let mut phi = DMatrix::identity(r, r);
    for &t in targets {
        phi = phi * (f - DMatrix::identity(r, r) * t);
    }
    let mut e = DMatrix::zeros(1, r);
    e[(0, r - 1)] = 1.0;
    let inv = ctrb.try_inverse()?;
    Some(e * inv * phi)
}
