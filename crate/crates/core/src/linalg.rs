//! Dense linear-algebra helpers shared by the analysis and synthesis modules.
//!
//! Everything here works on small dense matrices (tens of states at most), so
//! the routines favour SVD-based rank decisions and direct vectorized solves
//! over anything iterative.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const SCHUR_MAX_ITER: usize = 100_000;

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    for (shift, eps) in schur_attempts(m.norm()) {
        let shifted = m + DMatrix::identity(m.nrows(), m.ncols()) * shift;
        if let Some(schur) = Schur::try_new(shifted, eps, SCHUR_MAX_ITER) {
            return Ok(schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z - shift)
                .collect());
        }
    }
    Err(Error::Numerical("real Schur iteration did not converge".into()))
}

/// Shift/tolerance pairs tried in order. With the tightest tolerance the
/// deflation test can be unreachable through roundoff; a slightly looser one
/// and, failing that, an irrational shift break the stall.
fn schur_attempts(scale: f64) -> [(f64, f64); 5] {
    let s = scale.max(1.0);
    [
        (0.0, f64::EPSILON),
        (0.0, 64.0 * f64::EPSILON),
        (0.0, 1e-13),
        (0.618_033_988_749_895 * s, 1e-13),
        (-0.414_213_562_373_095 * s, 1e-12),
    ]
}

/// Eigenvalues of a complex square matrix.
pub fn eigenvalues_c(m: &CMatrix) -> Result<Vec<Complex64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch("eigenvalues of a non-square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    let scale = m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    for (shift, eps) in schur_attempts(scale) {
        let shifted = m + CMatrix::identity(m.nrows(), m.ncols()) * Complex64::new(shift, 0.0);
        if let Some(v) = Schur::try_new(shifted, eps, SCHUR_MAX_ITER).and_then(|s| s.eigenvalues()) {
            return Ok(v.iter().map(|z| z - shift).collect());
        }
    }
    Err(Error::Numerical("complex Schur iteration did not converge".into()))
}

pub fn spectral_abscissa(eigs: &[Complex64]) -> f64 {
    eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn spectral_radius(eigs: &[Complex64]) -> f64 {
    eigs.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Largest singular value; zero for empty matrices.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

pub fn norm2_c(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

fn rank_from(sv: impl Iterator<Item = f64> + Clone, rtol: f64) -> usize {
    let smax = sv.clone().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.filter(|s| *s > rtol * smax).count()
}

/// Numerical rank with a threshold relative to the largest singular value.
pub fn rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    rank_from(sv.iter().copied(), rtol)
}

pub fn rank_c(m: &CMatrix, rtol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    rank_from(sv.iter().copied(), rtol)
}

/// Rank with an absolute threshold on singular values.
pub fn rank_abs(m: &DMatrix<f64>, atol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().filter(|s| **s > atol).count()
}

pub fn rank_c_abs(m: &CMatrix, atol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().filter(|s| **s > atol).count()
}

/// Pads `m` with zero rows so a thin SVD yields a full right basis.
fn pad_rows<T: nalgebra::ComplexField>(m: &DMatrix<T>) -> DMatrix<T> {
    let (r, c) = m.shape();
    if r >= c {
        return m.clone();
    }
    let mut out = DMatrix::zeros(c, c);
    out.view_mut((0, 0), (r, c)).copy_from(m);
    out
}

/// Orthonormal basis of the kernel of `m`, deciding rank with an absolute
/// singular-value threshold.
pub fn null_space_abs(m: &DMatrix<f64>, atol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let padded = pad_rows(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let idx: Vec<usize> = (0..n).filter(|&i| sv[i] <= atol).collect();
    let mut out = DMatrix::zeros(n, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        out.set_column(k, &vt.row(i).transpose());
    }
    out
}

/// Kernel basis with a threshold relative to the largest singular value.
pub fn null_space(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let scale = if m.is_empty() { 0.0 } else { norm2(m) };
    null_space_abs(m, rtol * scale)
}

/// The `k` right singular vectors with the smallest singular values, together
/// with those singular values (ascending).
pub fn smallest_right_vectors_c(m: &CMatrix, k: usize) -> (CMatrix, Vec<f64>) {
    let n = m.ncols();
    let padded = pad_rows(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut out = CMatrix::zeros(n, k);
    let mut sv = Vec::with_capacity(k);
    for (col, &i) in order.iter().take(k).enumerate() {
        let row = vt.row(i);
        for r in 0..n {
            out[(r, col)] = row[r].conj();
        }
        sv.push(svd.singular_values[i]);
    }
    (out, sv)
}

pub fn smallest_right_vectors(m: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>) {
    let n = m.ncols();
    let padded = pad_rows(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut out = DMatrix::zeros(n, k);
    let mut sv = Vec::with_capacity(k);
    for (col, &i) in order.iter().take(k).enumerate() {
        out.set_column(col, &vt.row(i).transpose());
        sv.push(svd.singular_values[i]);
    }
    (out, sv)
}

/// Orthonormal basis of the column space of `m`.
pub fn orth(m: &DMatrix<f64>, atol: f64) -> DMatrix<f64> {
    let r = m.nrows();
    if m.ncols() == 0 || r == 0 {
        return DMatrix::zeros(r, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > atol)
        .collect();
    let mut out = DMatrix::zeros(r, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        out.set_column(k, &u.column(i));
    }
    out
}

/// Orthonormal basis of the orthogonal complement of the column space of an
/// orthonormal `basis` inside `R^n`.
pub fn complement(basis: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if basis.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    null_space_abs(&basis.transpose(), 1e-10)
}

/// Intersection of two subspaces given by orthonormal bases.
pub fn intersect(u: &DMatrix<f64>, v: &DMatrix<f64>, atol: f64) -> DMatrix<f64> {
    let n = u.nrows();
    if u.ncols() == 0 || v.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let mut stacked = DMatrix::zeros(n, u.ncols() + v.ncols());
    stacked.view_mut((0, 0), (n, u.ncols())).copy_from(u);
    stacked
        .view_mut((0, u.ncols()), (n, v.ncols()))
        .copy_from(&(-v));
    let k = null_space_abs(&stacked, atol);
    let coeffs = k.rows(0, u.ncols()).into_owned();
    orth(&(u * coeffs), atol)
}

/// Sum of two subspaces.
pub fn subspace_sum(u: &DMatrix<f64>, v: &DMatrix<f64>, atol: f64) -> DMatrix<f64> {
    let n = u.nrows().max(v.nrows());
    let mut stacked = DMatrix::zeros(n, u.ncols() + v.ncols());
    if u.ncols() > 0 {
        stacked.view_mut((0, 0), (n, u.ncols())).copy_from(u);
    }
    if v.ncols() > 0 {
        stacked.view_mut((0, u.ncols()), (n, v.ncols())).copy_from(v);
    }
    orth(&stacked, atol)
}

pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).max().unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        if b.ncols() > 0 {
            out.view_mut((0, c), (b.nrows(), b.ncols())).copy_from(*b);
        }
        c += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.iter().map(|b| b.ncols()).max().unwrap_or(0);
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        if b.nrows() > 0 {
            out.view_mut((r, 0), (b.nrows(), b.ncols())).copy_from(*b);
        }
        r += b.nrows();
    }
    out
}

pub fn vstack_c(top: &CMatrix, bottom: &CMatrix) -> CMatrix {
    let cols = top.ncols().max(bottom.ncols());
    let mut out = CMatrix::zeros(top.nrows() + bottom.nrows(), cols);
    if !top.is_empty() {
        out.view_mut((0, 0), top.shape()).copy_from(top);
    }
    if !bottom.is_empty() {
        out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    }
    out
}

/// Block-diagonal concatenation.
pub fn blkdiag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        if !b.is_empty() {
            out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        }
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// 2x2 block matrix `[[a, b], [c, d]]` for complex entries.
pub fn block2_c(a: &CMatrix, b: &CMatrix, c: &CMatrix, d: &CMatrix) -> CMatrix {
    let (r1, c1) = (a.nrows(), a.ncols());
    let (r2, c2) = (d.nrows(), d.ncols());
    let mut out = CMatrix::zeros(r1 + r2, c1 + c2);
    if !a.is_empty() {
        out.view_mut((0, 0), (r1, c1)).copy_from(a);
    }
    if !b.is_empty() {
        out.view_mut((0, c1), (r1, c2)).copy_from(b);
    }
    if !c.is_empty() {
        out.view_mut((r1, 0), (r2, c1)).copy_from(c);
    }
    if !d.is_empty() {
        out.view_mut((r1, c1), (r2, c2)).copy_from(d);
    }
    out
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_sym_eig(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::NEG_INFINITY;
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_sym_eig(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn solve_square(lhs: DMatrix<f64>, rhs: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let lu = lhs.lu();
    lu.solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numerical(format!("{what}: singular linear system")))
}

/// Solves `AᵀP + PA = −Q` by the vectorized linear system.
pub fn solve_ct_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let lhs = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let x = solve_square(lhs, rhs, "continuous Lyapunov equation")?;
    Ok(symmetrize(&DMatrix::from_vec(n, n, x.as_slice().to_vec())))
}

/// Solves `AᵀPA − P = −Q` by the vectorized linear system.
pub fn solve_dt_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let at = a.transpose();
    let lhs = at.kronecker(&at) - DMatrix::<f64>::identity(n * n, n * n);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let x = solve_square(lhs, rhs, "discrete Lyapunov equation")?;
    Ok(symmetrize(&DMatrix::from_vec(n, n, x.as_slice().to_vec())))
}

/// Least-squares solve of `m x = b` via SVD.
pub fn lstsq(m: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.ncols() == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    let svd = m.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.solve(b, tol)
        .map_err(|e| Error::Numerical(format!("least squares: {e}")))
}

/// Groups of eigenvalues that lie within `tol` of each other (single linkage).
#[derive(Debug, Clone)]
pub struct EigenCluster {
    pub center: Complex64,
    pub multiplicity: usize,
}

pub fn cluster_eigenvalues(eigs: &[Complex64], tol: f64) -> Vec<EigenCluster> {
    let n = eigs.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        let mut c = i;
        while label[c] != r {
            let next = label[c];
            label[c] = r;
            c = next;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (eigs[i] - eigs[j]).norm() <= tol {
                let (ri, rj) = (find(&mut label, i), find(&mut label, j));
                if ri != rj {
                    label[rj] = ri;
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<Complex64>)> = Vec::new();
    for i in 0..n {
        let r = find(&mut label, i);
        match groups.iter_mut().find(|(root, _)| *root == r) {
            Some((_, members)) => members.push(eigs[i]),
            None => groups.push((r, vec![eigs[i]])),
        }
    }
    groups
        .into_iter()
        .map(|(_, members)| {
            let sum: Complex64 = members.iter().sum();
            EigenCluster {
                center: sum / members.len() as f64,
                multiplicity: members.len(),
            }
        })
        .collect()
}

/// Greedy nearest-neighbour pairing of two multisets; returns the worst pair
/// distance, or `None` if the lengths differ.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    let mut order: Vec<usize> = (0..a.len()).collect();
    // Match well-separated values first so clustered ones do not steal partners.
    order.sort_by(|&i, &j| a[i].re.total_cmp(&a[j].re).then(a[i].im.total_cmp(&a[j].im)));
    for i in order {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (j, bj) in b.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (a[i] - bj).norm();
            if d < best_d {
                best_d = d;
                best = Some(j);
            }
        }
        let j = best?;
        used[j] = true;
        worst = worst.max(best_d);
    }
    Some(worst)
}

/// `C(sI − A)⁻¹B` evaluated at a complex frequency.
pub fn transfer_at(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    s: Complex64,
) -> Option<CMatrix> {
    let n = a.nrows();
    let resolvent = CMatrix::identity(n, n) * s - to_complex(a);
    let x = resolvent.lu().solve(&to_complex(b))?;
    Some(to_complex(c) * x)
}
