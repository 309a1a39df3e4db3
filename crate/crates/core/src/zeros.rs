//! Invariant zeros via the geometric (output-nulling subspace) characterisation.
//!
//! The invariant zeros of `(A, B, C)` are the eigenvalues of the map induced by
//! `A + BF` on `V*/R*`, where `V*` is the largest output-nulling
//! controlled-invariant subspace, `R*` the largest controllability subspace
//! inside `ker C`, and `F` any friend of `V*`. Every step uses orthonormal
//! bases and SVD rank decisions, so it works for non-square systems without a
//! generalized eigenvalue solver.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{self, intersect, null_space_abs, orth, subspace_sum};

const SUBSPACE_TOL: f64 = 1e-9;

/// Largest output-nulling controlled-invariant subspace and largest
/// controllability subspace contained in `ker C`.
pub(crate) struct ZeroSubspaces {
    pub v_star: DMatrix<f64>,
    pub r_star: DMatrix<f64>,
}

pub(crate) fn zero_subspaces(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> ZeroSubspaces {
    let n = a.nrows();
    let atol = SUBSPACE_TOL * linalg::norm2(a).max(1.0);
    let ker_c = if c.nrows() == 0 {
        DMatrix::identity(n, n)
    } else {
        null_space_abs(c, SUBSPACE_TOL)
    };
    let im_b = orth(b, SUBSPACE_TOL);

    let mut v = ker_c.clone();
    for _ in 0..=n {
        if v.ncols() == 0 {
            break;
        }
        let w = subspace_sum(&v, &im_b, SUBSPACE_TOL);
        let proj = DMatrix::identity(n, n) - &w * w.transpose();
        let preimage = null_space_abs(&(proj * a), atol);
        let next = intersect(&ker_c, &preimage, SUBSPACE_TOL);
        let shrunk = next.ncols() < v.ncols();
        v = next;
        if !shrunk {
            break;
        }
    }

    let mut s = im_b.clone();
    for _ in 0..=n {
        let inside = intersect(&s, &ker_c, SUBSPACE_TOL);
        let image = a * inside;
        let next = subspace_sum(&im_b, &orth(&image, atol), SUBSPACE_TOL);
        let grew = next.ncols() > s.ncols();
        s = next;
        if !grew {
            break;
        }
    }

    let r = intersect(&v, &s, SUBSPACE_TOL);
    ZeroSubspaces { v_star: v, r_star: r }
}

/// Invariant zeros with algebraic multiplicity (complex pairs appear twice).
pub fn invariant_zeros(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    // Zeros are invariant under scaling of B and C.
    let bn = linalg::norm2(b);
    let cn = linalg::norm2(c);
    let b = if bn > 0.0 { b / bn } else { b.clone() };
    let c = if cn > 0.0 { c / cn } else { c.clone() };

    let ZeroSubspaces { v_star, r_star } = zero_subspaces(a, &b, &c);
    let k = v_star.ncols();
    if k == 0 {
        return Ok(Vec::new());
    }

    // Friend of V*: A V + B G = V X.
    let lhs = linalg::hstack(&[&v_star, &(-&b)]);
    let sol = linalg::lstsq(&lhs, &(a * &v_star))?;
    let x = sol.rows(0, k).into_owned();

    // Quotient by R* (expressed in V* coordinates).
    let r_coords = orth(&(v_star.transpose() * &r_star), SUBSPACE_TOL);
    let r_perp = linalg::complement(&r_coords, k);
    if r_perp.ncols() == 0 {
        return Ok(Vec::new());
    }
    let reduced = r_perp.transpose() * x * &r_perp;
    linalg::eigenvalues(&reduced)
}
