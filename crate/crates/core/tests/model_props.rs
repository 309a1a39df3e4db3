mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use scalesync_core::model::StructuralReport;
use scalesync_core::{Complex64, LtiModel, TimeDomain};

/// Coefficients (highest power first) of the numerator of `C (sI − A)⁻¹ B`,
/// from the Faddeev–LeVerrier recursion `adj(sI − A) = Σ N_k s^{n−1−k}`.
fn numerator(m: &LtiModel) -> Vec<f64> {
    let a = m.a();
    let n = a.nrows();
    let mut nk = DMatrix::<f64>::identity(n, n);
    let mut coeffs = Vec::with_capacity(n);
    for k in 1..=n {
        coeffs.push((m.c() * &nk * m.b())[(0, 0)]);
        let an = a * &nk;
        let ck = -an.trace() / k as f64;
        nk = an + DMatrix::identity(n, n) * ck;
    }
    coeffs
}

fn horner(p: &[f64], z: Complex64) -> Complex64 {
    p.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Durand–Kerner iteration on the monic polynomial, then Newton polishing.
fn roots(p: &[f64]) -> Vec<Complex64> {
    let start = p.iter().position(|c| c.abs() > 1e-14).unwrap_or(p.len());
    let p: Vec<f64> = p[start..].iter().map(|c| c / p[start]).collect();
    let deg = p.len().saturating_sub(1);
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..deg).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..2000 {
        let mut change = 0.0_f64;
        for i in 0..deg {
            let denom = (0..deg)
                .filter(|&j| j != i)
                .fold(Complex64::new(1.0, 0.0), |acc, j| acc * (z[i] - z[j]));
            let step = horner(&p, z[i]) / denom;
            z[i] -= step;
            change = change.max(step.norm());
        }
        if change < 1e-15 {
            break;
        }
    }
    let dp: Vec<f64> = p[..deg]
        .iter()
        .enumerate()
        .map(|(k, c)| c * (deg - k) as f64)
        .collect();
    for zi in &mut z {
        for _ in 0..3 {
            let d = horner(&dp, *zi);
            if d.norm() > 0.0 {
                *zi -= horner(&p, *zi) / d;
            }
        }
    }
    z
}

/// Largest distance from a root to its greedy partner in the other list.
fn matched_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut rest = b.to_vec();
    let mut worst = 0.0_f64;
    for x in a {
        let (idx, d) = rest
            .iter()
            .enumerate()
            .map(|(i, y)| (i, (x - y).norm()))
            .min_by(|u, v| u.1.total_cmp(&v.1))
            .unwrap();
        worst = worst.max(d);
        rest.remove(idx);
    }
    worst
}

fn domain(discrete: bool) -> TimeDomain {
    if discrete {
        TimeDomain::Discrete
    } else {
        TimeDomain::Continuous
    }
}

#[test]
fn siso_zeros_match_numerator_roots() {
    let mut rng = common::rng(7);
    let mut checked = 0;
    while checked < 50 {
        let n = 1 + checked % 5;
        let m = common::random_siso(&mut rng, n, TimeDomain::Continuous);
        let num = numerator(&m);
        // Keep the comparison well posed: a tiny leading coefficient pushes a
        // root towards infinity.
        if num[0].abs() < 1e-2 {
            continue;
        }
        let expected = roots(&num);
        let zeros = m.invariant_zeros().unwrap();
        assert_eq!(zeros.len(), expected.len(), "model {checked}: {zeros:?} vs {expected:?}");
        let d = matched_distance(&zeros, &expected);
        assert!(d <= 1e-6, "model {checked}: distance {d:e}");
        checked += 1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stable_matrix_is_neutrally_stable(n in 1usize..=6, discrete in any::<bool>(), seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let d = domain(discrete);
        let a = common::random_stable(&mut rng, n, d);
        let m = LtiModel::new(a, DMatrix::zeros(n, 1), DMatrix::zeros(1, n), d).unwrap();
        prop_assert!(m.check_neutrally_stable().unwrap());
    }

    #[test]
    fn constructed_neutral_matrix_is_neutrally_stable(n in 1usize..=6, discrete in any::<bool>(), seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let m = common::random_neutral_model(&mut rng, n, 1, 1, domain(discrete));
        prop_assert!(m.check_neutrally_stable().unwrap());
    }

    #[test]
    fn minimum_phase_implies_weakly_minimum_phase(
        n in 1usize..=5,
        inputs in 1usize..=2,
        outputs in 1usize..=2,
        discrete in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut rng = common::rng(seed);
        let d = domain(discrete);
        let m = LtiModel::new(
            common::random_stable(&mut rng, n, d) + common::gaussian_like(&mut rng, n, n) * 0.5,
            common::gaussian_like(&mut rng, n, inputs),
            common::gaussian_like(&mut rng, outputs, n),
            d,
        )
        .unwrap();
        let r = StructuralReport::analyze(&m).unwrap();
        prop_assert!(!r.minimum_phase || r.weakly_minimum_phase);
    }

    #[test]
    fn zeros_are_similarity_invariant(n in 2usize..=5, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let m = common::random_siso(&mut rng, n, TimeDomain::Continuous);
        let t = common::random_similarity(&mut rng, n);
        let ti = t.clone().try_inverse().unwrap();
        let moved = LtiModel::new(&t * m.a() * &ti, &t * m.b(), m.c() * &ti, TimeDomain::Continuous).unwrap();
        let z1 = m.invariant_zeros().unwrap();
        let z2 = moved.invariant_zeros().unwrap();
        prop_assert_eq!(z1.len(), z2.len());
        let scale = 1.0 + z1.iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(matched_distance(&z1, &z2) <= 1e-6 * scale);
    }
}
