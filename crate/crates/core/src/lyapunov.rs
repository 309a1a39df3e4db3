//! Lyapunov certificates for neutrally stable matrices and the observer-side
//! certificate used by the discrete-time partial-state design.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, to_complex, CMatrix};
use crate::model::{self, classify, neutral_stability, Region, TimeDomain};

/// Positive-definiteness threshold relative to `‖P‖`.
pub const PD_RTOL: f64 = 1e-10;
/// Accepted inequality slack, relative to `‖P‖·‖A‖`.
pub const SLACK_RTOL: f64 = 1e-8;
/// Accepted residual of the observer equation, relative to `‖Q‖`.
pub const Q_RESIDUAL_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    CtSemidefinite,
    DtSemidefinite,
    DtObserverQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(rename = "P", with = "crate::io::matrix")]
    pub p: DMatrix<f64>,
    pub kind: CertificateKind,
    /// Most positive eigenvalue of the certified left side (for
    /// [`CertificateKind::DtObserverQ`], the relative residual of the equation).
    pub slack: f64,
}

/// Result of re-checking a certificate from scratch.
#[derive(Debug, Clone, Serialize)]
pub struct SlackReport {
    pub slack: f64,
    pub slack_bound: f64,
    pub min_eig: f64,
    pub asymmetry: f64,
    pub positive_definite: bool,
    pub inequality_holds: bool,
}

impl SlackReport {
    pub fn pass(&self) -> bool {
        self.positive_definite && self.inequality_holds
    }
}

/// Certificate `P > 0` with `PA + AᵀP ⪯ 0` for a neutrally stable `A`.
pub fn ct_certificate(a: &DMatrix<f64>) -> Result<Certificate> {
    certificate(a, TimeDomain::Continuous)
}

/// Certificate `P > 0` with `AᵀPA − P ⪯ 0` for a neutrally stable `A`.
pub fn dt_certificate(a: &DMatrix<f64>) -> Result<Certificate> {
    certificate(a, TimeDomain::Discrete)
}

fn certificate(a: &DMatrix<f64>, domain: TimeDomain) -> Result<Certificate> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch(format!("A is {}x{}", n, a.ncols())));
    }
    if let Err(why) = neutral_stability(a, domain)? {
        return Err(Error::NotNeutrallyStable(why));
    }
    let v_b = boundary_basis(a, domain)?;
    let w_b = boundary_basis(&a.transpose(), domain)?;
    if v_b.ncols() != w_b.ncols() {
        return Err(Error::Numerical(
            "left and right boundary subspaces have different dimensions".into(),
        ));
    }
    let x_h = if w_b.ncols() == 0 {
        DMatrix::identity(n, n)
    } else {
        linalg::null_space_abs(&w_b.transpose(), 1e-8)
    };
    let k = x_h.ncols();
    if k + v_b.ncols() != n {
        return Err(Error::Numerical("stable/boundary split does not cover the state space".into()));
    }
    let t = linalg::hstack(&[&x_h, &v_b]);
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("stable and boundary subspaces are not complementary".into()))?;
    let a_bar = &t_inv * a * &t;
    let a_h = a_bar.view((0, 0), (k, k)).into_owned();
    let eye = DMatrix::identity(k, k);
    let p_h = match domain {
        TimeDomain::Continuous => linalg::solve_ct_lyapunov(&a_h, &eye)?,
        TimeDomain::Discrete => linalg::solve_dt_lyapunov(&a_h, &eye)?,
    };
    let mut inner = DMatrix::identity(n, n);
    inner.view_mut((0, 0), (k, k)).copy_from(&p_h);
    let p = linalg::symmetrize(&(t_inv.transpose() * inner * &t_inv));
    let kind = match domain {
        TimeDomain::Continuous => CertificateKind::CtSemidefinite,
        TimeDomain::Discrete => CertificateKind::DtSemidefinite,
    };
    let slack = inequality_slack(&p, a, kind);
    Ok(Certificate { p, kind, slack })
}

/// Real basis of the boundary eigenspaces. Complex pairs contribute the real
/// and imaginary parts of their eigenvectors, so `A` acts on the basis as
/// rotation generators (continuous time) or rotations (discrete time).
fn boundary_basis(a: &DMatrix<f64>, domain: TimeDomain) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let scale = linalg::norm2(a);
    let eigs = linalg::eigenvalues(a)?;
    let clusters =
        linalg::cluster_eigenvalues(&eigs, model::CLUSTER_RTOL * scale.max(f64::MIN_POSITIVE));
    let mut cols: Vec<DMatrix<f64>> = Vec::new();
    for cl in clusters {
        if classify(cl.center, domain, model::BOUNDARY_TOL, scale) != Region::Boundary {
            continue;
        }
        let mu = cl.center;
        let real_tol = model::CLUSTER_RTOL * scale.max(1.0);
        if mu.im.abs() <= real_tol {
            let shifted = a - DMatrix::identity(n, n) * mu.re;
            let (basis, _) = linalg::smallest_right_vectors(&shifted, cl.multiplicity);
            cols.push(basis);
        } else if mu.im > 0.0 {
            let shifted = to_complex(a) - CMatrix::identity(n, n) * mu;
            let (basis, _) = linalg::smallest_right_vectors_c(&shifted, cl.multiplicity);
            let re = basis.map(|z| z.re);
            let im = basis.map(|z| z.im);
            for j in 0..cl.multiplicity {
                cols.push(re.columns(j, 1).into_owned());
                cols.push(im.columns(j, 1).into_owned());
            }
        }
    }
    if cols.is_empty() {
        return Ok(DMatrix::zeros(n, 0));
    }
    let refs: Vec<&DMatrix<f64>> = cols.iter().collect();
    Ok(linalg::hstack(&refs))
}

/// Unique `Q > 0` solving `(A − HC)ᵀQ(A − HC) − Q + 4I = 0`.
pub fn dt_observer_q(a: &DMatrix<f64>, h: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<Certificate> {
    check_observer_shapes(a, h, c)?;
    let f = a - h * c;
    let radius = linalg::spectral_radius(&linalg::eigenvalues(&f)?);
    if radius >= 1.0 {
        return Err(Error::NotSchur(radius));
    }
    let n = a.nrows();
    let q = linalg::solve_dt_lyapunov(&f, &(DMatrix::identity(n, n) * 4.0))?;
    let slack = observer_residual(&q, &f);
    Ok(Certificate {
        p: q,
        kind: CertificateKind::DtObserverQ,
        slack,
    })
}

fn check_observer_shapes(a: &DMatrix<f64>, h: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n || h.nrows() != n || c.ncols() != n || h.ncols() != c.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "A {}x{}, H {}x{}, C {}x{}",
            a.nrows(),
            a.ncols(),
            h.nrows(),
            h.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    Ok(())
}

fn observer_residual(q: &DMatrix<f64>, f: &DMatrix<f64>) -> f64 {
    let n = q.nrows();
    let r = f.transpose() * q * f - q + DMatrix::identity(n, n) * 4.0;
    linalg::norm2(&r) / linalg::norm2(q).max(f64::MIN_POSITIVE)
}

fn inequality_slack(p: &DMatrix<f64>, a: &DMatrix<f64>, kind: CertificateKind) -> f64 {
    match kind {
        CertificateKind::CtSemidefinite => linalg::max_sym_eig(&(p * a + a.transpose() * p)),
        _ => linalg::max_sym_eig(&(a.transpose() * p * a - p)),
    }
}

/// Recomputes slack and definiteness of `cert` against `A` (and `H`, `C` for
/// the observer kind). The stored slack is ignored.
pub fn validate(
    cert: &Certificate,
    a: &DMatrix<f64>,
    h: Option<&DMatrix<f64>>,
    c: Option<&DMatrix<f64>>,
) -> Result<SlackReport> {
    let p = &cert.p;
    let n = a.nrows();
    if a.ncols() != n || p.nrows() != n || p.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "certificate is {}x{} but A is {}x{}",
            p.nrows(),
            p.ncols(),
            n,
            a.ncols()
        )));
    }
    let p_norm = linalg::norm2(p);
    let asymmetry = linalg::norm2(&(p - p.transpose()));
    let min_eig = linalg::min_sym_eig(p);
    let positive_definite = asymmetry <= 1e-12 * p_norm.max(1.0) && min_eig > PD_RTOL * p_norm;

    let (slack, slack_bound) = match cert.kind {
        CertificateKind::DtObserverQ => {
            let (h, c) = match (h, c) {
                (Some(h), Some(c)) => (h, c),
                _ => {
                    return Err(Error::ShapeMismatch(
                        "observer certificate needs H and C".into(),
                    ))
                }
            };
            check_observer_shapes(a, h, c)?;
            (observer_residual(p, &(a - h * c)), Q_RESIDUAL_RTOL)
        }
        kind => (
            inequality_slack(p, a, kind),
            SLACK_RTOL * p_norm * linalg::norm2(a),
        ),
    };
    Ok(SlackReport {
        slack,
        slack_bound,
        min_eig,
        asymmetry,
        positive_definite,
        inequality_holds: slack <= slack_bound,
    })
}
