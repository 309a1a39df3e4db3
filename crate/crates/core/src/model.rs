//! Agent models and the structural properties that decide which protocol
//! design applies.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, to_complex, CMatrix};
use crate::zeros;

/// Split between stable and boundary eigenvalues, relative to `‖A‖` in
/// continuous time and absolute in discrete time.
pub const BOUNDARY_TOL: f64 = 1e-8;
/// Eigenvalue clustering tolerance, relative to `‖A‖`.
pub const CLUSTER_RTOL: f64 = 1e-7;
/// Tolerance for deciding that an invariant zero sits on the stability boundary.
pub const ZERO_BOUNDARY_TOL: f64 = 1e-8;

const PBH_RTOL: f64 = 1e-9;
const SEMISIMPLE_RTOL: f64 = 1e-8;
const NORMAL_RANK_RTOL: f64 = 1e-8;
const MARKOV_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDomain {
    Continuous,
    Discrete,
}

impl TimeDomain {
    pub fn label(self) -> &'static str {
        match self {
            TimeDomain::Continuous => "continuous",
            TimeDomain::Discrete => "discrete",
        }
    }
}

/// Where an eigenvalue (or zero) sits relative to the stability region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Stable,
    Boundary,
    Unstable,
}

/// Classifies `z` for the given time domain. `scale` is `‖A‖` for the
/// continuous-time threshold; discrete time uses absolute thresholds.
pub fn classify(z: Complex64, domain: TimeDomain, tol: f64, scale: f64) -> Region {
    match domain {
        TimeDomain::Continuous => {
            let t = tol * scale;
            if z.re < -t {
                Region::Stable
            } else if z.re <= t {
                Region::Boundary
            } else {
                Region::Unstable
            }
        }
        TimeDomain::Discrete => {
            let r = z.norm();
            if r < 1.0 - tol {
                Region::Stable
            } else if r <= 1.0 + tol {
                Region::Boundary
            } else {
                Region::Unstable
            }
        }
    }
}

/// Agent state-space triple `x⁺ = Ax + Bu`, `y = Cx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct LtiModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    time_domain: TimeDomain,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    #[serde(rename = "A", with = "crate::io::matrix")]
    a: DMatrix<f64>,
    #[serde(rename = "B", with = "crate::io::matrix")]
    b: DMatrix<f64>,
    #[serde(rename = "C", with = "crate::io::matrix")]
    c: DMatrix<f64>,
    time_domain: TimeDomain,
}

impl TryFrom<RawModel> for LtiModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        LtiModel::new(raw.a, raw.b, raw.c, raw.time_domain)
    }
}

impl From<LtiModel> for RawModel {
    fn from(m: LtiModel) -> Self {
        RawModel {
            a: m.a,
            b: m.b,
            c: m.c,
            time_domain: m.time_domain,
        }
    }
}

impl LtiModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        time_domain: TimeDomain,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::ShapeMismatch(format!("A is {}x{}", n, a.ncols())));
        }
        if n == 0 {
            return Err(Error::ShapeMismatch("model needs at least one state".into()));
        }
        if b.nrows() != n {
            return Err(Error::ShapeMismatch(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::ShapeMismatch(format!("C has {} columns, expected {n}", c.ncols())));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("model contains non-finite entries".into()));
        }
        Ok(Self {
            a,
            b,
            c,
            time_domain,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn time_domain(&self) -> TimeDomain {
        self.time_domain
    }
    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn is_siso(&self) -> bool {
        self.inputs() == 1 && self.outputs() == 1
    }

    /// Same dynamics with full-state output `C = I`.
    pub fn with_full_state_output(&self) -> Self {
        let n = self.states();
        Self {
            c: DMatrix::identity(n, n),
            ..self.clone()
        }
    }

    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        linalg::eigenvalues(&self.a)
    }

    pub fn check_stabilizable_detectable(&self) -> Result<(bool, bool)> {
        Ok((
            pbh_full_rank(&self.a, &self.b, self.time_domain)?,
            pbh_full_rank(&self.a.transpose(), &self.c.transpose(), self.time_domain)?,
        ))
    }

    pub fn check_neutrally_stable(&self) -> Result<bool> {
        Ok(neutral_stability(&self.a, self.time_domain)?.is_ok())
    }

    pub fn invariant_zeros(&self) -> Result<Vec<Complex64>> {
        zeros::invariant_zeros(&self.a, &self.b, &self.c)
    }

    /// Normal rank of `C(sI − A)⁻¹B`: the largest rank over eight
    /// pseudo-random frequencies, confirmed on an independent second set.
    pub fn normal_rank(&self) -> usize {
        let first = sampled_rank(&self.a, &self.b, &self.c, 0x5eed_0001);
        let second = sampled_rank(&self.a, &self.b, &self.c, 0x5eed_0002);
        first.max(second)
    }

    pub fn left_invertible(&self) -> bool {
        self.normal_rank() == self.inputs()
    }

    pub fn rank_cb(&self) -> usize {
        let cb = &self.c * &self.b;
        let scale = linalg::norm2(&self.c) * linalg::norm2(&self.b);
        linalg::rank_abs(&cb, MARKOV_RTOL * scale)
    }

    /// Orders of the infinite zeros, from the rank increments of the block
    /// Toeplitz matrices of Markov parameters.
    pub fn infinite_zero_structure(&self) -> Vec<usize> {
        let normal = self.normal_rank();
        let n = self.states();
        let (p, m) = (self.outputs(), self.inputs());
        let mut markov = Vec::with_capacity(n + 1);
        let mut ak_b = self.b.clone();
        for _ in 0..=n {
            markov.push(&self.c * &ak_b);
            ak_b = &self.a * ak_b;
        }
        let scale = markov
            .iter()
            .map(linalg::norm2)
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut orders = Vec::new();
        let mut prev_rank = 0;
        let mut prev_count = 0;
        for k in 1..=n + 1 {
            let mut toeplitz = DMatrix::zeros(k * p, k * m);
            for i in 0..k {
                for j in 0..=i {
                    toeplitz
                        .view_mut((i * p, j * m), (p, m))
                        .copy_from(&markov[i - j]);
                }
            }
            let r = linalg::rank_abs(&toeplitz, MARKOV_RTOL * scale * k as f64);
            let count = r - prev_rank;
            for _ in prev_count..count.min(normal) {
                orders.push(k);
            }
            prev_count = prev_count.max(count.min(normal));
            prev_rank = r;
            if prev_count >= normal {
                break;
            }
        }
        orders
    }

    /// Relative degree of a SISO model (`None` if the transfer function is zero).
    pub fn relative_degree(&self) -> Option<usize> {
        let scale = linalg::norm2(&self.c) * linalg::norm2(&self.b);
        let mut ak_b = self.b.clone();
        for k in 1..=self.states() {
            let markov = &self.c * &ak_b;
            if linalg::norm2(&markov) > MARKOV_RTOL * scale * linalg::norm2(&self.a).max(1.0).powi(k as i32 - 1) {
                return Some(k);
            }
            ak_b = &self.a * ak_b;
        }
        None
    }

    pub fn feasibility_report(&self) -> Result<StructuralReport> {
        StructuralReport::analyze(self)
    }
}

/// PBH rank test on the eigenvalues outside the open stability region.
pub(crate) fn pbh_full_rank(a: &DMatrix<f64>, b: &DMatrix<f64>, domain: TimeDomain) -> Result<bool> {
    let n = a.nrows();
    let scale = linalg::norm2(a);
    let eigs = linalg::eigenvalues(a)?;
    let clusters = linalg::cluster_eigenvalues(&eigs, CLUSTER_RTOL * scale.max(f64::MIN_POSITIVE));
    for cl in clusters {
        if classify(cl.center, domain, BOUNDARY_TOL, scale) == Region::Stable {
            continue;
        }
        let shifted = to_complex(a) - CMatrix::identity(n, n) * cl.center;
        let mut pencil = CMatrix::zeros(n, n + b.ncols());
        pencil.view_mut((0, 0), (n, n)).copy_from(&shifted);
        if b.ncols() > 0 {
            pencil.view_mut((0, n), (n, b.ncols())).copy_from(&to_complex(b));
        }
        if linalg::rank_c(&pencil, PBH_RTOL) < n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Checks neutral stability; on failure returns a human-readable witness.
pub fn neutral_stability(
    a: &DMatrix<f64>,
    domain: TimeDomain,
) -> Result<std::result::Result<(), String>> {
    let n = a.nrows();
    let scale = linalg::norm2(a);
    let eigs = linalg::eigenvalues(a)?;
    let clusters = linalg::cluster_eigenvalues(&eigs, CLUSTER_RTOL * scale.max(f64::MIN_POSITIVE));
    for cl in &clusters {
        match classify(cl.center, domain, BOUNDARY_TOL, scale) {
            Region::Stable => {}
            Region::Unstable => {
                return Ok(Err(format!(
                    "eigenvalue {} lies outside the closed stability region",
                    fmt_complex(cl.center)
                )))
            }
            Region::Boundary => {
                let shifted = to_complex(a) - CMatrix::identity(n, n) * cl.center;
                let geometric = n - linalg::rank_c_abs(&shifted, SEMISIMPLE_RTOL * scale.max(1.0));
                if geometric < cl.multiplicity {
                    return Ok(Err(format!(
                        "boundary eigenvalue {} has algebraic multiplicity {} but geometric multiplicity {}",
                        fmt_complex(cl.center),
                        cl.multiplicity,
                        geometric
                    )));
                }
            }
        }
    }
    Ok(Ok(()))
}

fn sampled_rank(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, seed: u64) -> usize {
    if b.ncols() == 0 || c.nrows() == 0 {
        return 0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = 1.0 + linalg::norm2(a);
    (0..8)
        .filter_map(|_| {
            let mag = radius * rng.random_range(0.5..2.0);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let s = Complex64::from_polar(mag, phase);
            linalg::transfer_at(a, b, c, s)
        })
        .map(|g| linalg::rank_c(&g, NORMAL_RANK_RTOL))
        .max()
        .unwrap_or(0)
}

pub(crate) fn fmt_complex(z: Complex64) -> String {
    if z.im.abs() < 1e-12 {
        format!("{:.6}", z.re)
    } else {
        format!("{:.6}{:+.6}i", z.re, z.im)
    }
}

/// Zeros on the boundary with their multiplicities.
pub fn boundary_zero_multiplicities(zeros: &[Complex64], domain: TimeDomain) -> Vec<(Complex64, usize)> {
    let on_boundary: Vec<Complex64> = zeros
        .iter()
        .copied()
        .filter(|z| classify(*z, domain, ZERO_BOUNDARY_TOL, 1.0) == Region::Boundary)
        .collect();
    linalg::cluster_eigenvalues(&on_boundary, CLUSTER_RTOL.max(1e-6))
        .into_iter()
        .map(|c| (c.center, c.multiplicity))
        .collect()
}

/// Aggregated structural properties and the design conditions they imply.
#[derive(Debug, Clone, Serialize)]
pub struct StructuralReport {
    pub time_domain: TimeDomain,
    pub stabilizable: bool,
    pub detectable: bool,
    pub neutrally_stable: bool,
    pub minimum_phase: bool,
    pub weakly_minimum_phase: bool,
    pub uniform_rank_one: bool,
    /// Only evaluated for SISO models.
    pub relative_degree_one: Option<bool>,
    pub left_invertible: bool,
    pub invariant_zeros: Vec<Complex64>,
    pub normal_rank: usize,
    pub infinite_zero_orders: Vec<usize>,
    /// Boundary zeros with multiplicity, reported without judgment for MIMO models.
    pub boundary_zeros: Vec<(Complex64, usize)>,
    /// Necessary conditions for SISO agents (`None` for MIMO).
    pub necessary_conditions_hold: Option<bool>,
    /// Design assumptions for the partial-state protocol of this time domain.
    pub design_assumptions_hold: bool,
    pub violations: Vec<String>,
}

impl StructuralReport {
    pub fn analyze(m: &LtiModel) -> Result<Self> {
        let domain = m.time_domain();
        let (stabilizable, detectable) = m.check_stabilizable_detectable()?;
        let neutral = neutral_stability(m.a(), domain)?;
        let zeros = m.invariant_zeros()?;
        let regions: Vec<Region> = zeros
            .iter()
            .map(|z| classify(*z, domain, ZERO_BOUNDARY_TOL, 1.0))
            .collect();
        let minimum_phase = regions.iter().all(|r| *r == Region::Stable);
        let boundary_zeros = boundary_zero_multiplicities(&zeros, domain);
        let weakly_minimum_phase = !regions.contains(&Region::Unstable)
            && boundary_zeros.iter().all(|(_, k)| *k == 1);
        let normal_rank = m.normal_rank();
        let uniform_rank_one = normal_rank > 0 && m.rank_cb() == normal_rank;
        let relative_degree = m.is_siso().then(|| m.relative_degree());
        let relative_degree_one = relative_degree.map(|r| r == Some(1));
        let left_invertible = normal_rank == m.inputs();
        let infinite_zero_orders = m.infinite_zero_structure();

        let mut violations = Vec::new();
        if !stabilizable {
            violations.push("not stabilizable".to_string());
        }
        if !detectable {
            violations.push("not detectable".to_string());
        }
        if let Err(why) = &neutral {
            violations.push(format!("not neutrally stable: {why}"));
        }
        let neutrally_stable = neutral.is_ok();

        let mut design_ok = stabilizable && detectable && neutrally_stable;
        let mut necessary = None;
        match domain {
            TimeDomain::Continuous => {
                if !minimum_phase {
                    let bad: Vec<String> = zeros
                        .iter()
                        .zip(&regions)
                        .filter(|(_, r)| **r != Region::Stable)
                        .map(|(z, _)| fmt_complex(*z))
                        .collect();
                    violations.push(format!("not minimum phase: zeros {}", bad.join(", ")));
                }
                if !uniform_rank_one {
                    violations.push(format!(
                        "not uniform rank one: rank(CB) = {} but normal rank = {normal_rank}",
                        m.rank_cb()
                    ));
                }
                design_ok = design_ok && minimum_phase && uniform_rank_one;
                if let Some(rd) = relative_degree {
                    if rd != Some(1) {
                        violations.push(match rd {
                            Some(r) => format!("relative degree {r} (must be 1)"),
                            None => "transfer function is identically zero".to_string(),
                        });
                    }
                    necessary = Some(
                        stabilizable
                            && detectable
                            && neutrally_stable
                            && weakly_minimum_phase
                            && rd == Some(1),
                    );
                }
            }
            TimeDomain::Discrete => {
                if m.is_siso() {
                    necessary = Some(stabilizable && detectable && neutrally_stable);
                }
            }
        }

        Ok(Self {
            time_domain: domain,
            stabilizable,
            detectable,
            neutrally_stable,
            minimum_phase,
            weakly_minimum_phase,
            uniform_rank_one,
            relative_degree_one,
            left_invertible,
            invariant_zeros: zeros,
            normal_rank,
            infinite_zero_orders,
            boundary_zeros,
            necessary_conditions_hold: necessary,
            design_assumptions_hold: design_ok,
            violations,
        })
    }
}
