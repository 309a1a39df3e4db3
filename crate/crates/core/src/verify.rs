//! Spectral sweeps over the coupling eigenvalue and the SISO necessity audit.
//!
//! The sweeps evaluate the decoupled closed-loop block on a finite grid of
//! eigenvalues `λ`. They are a numerical cross-check of the certificates, not
//! a proof: the admissible region is a continuum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::model::{fmt_complex, neutral_stability, LtiModel, TimeDomain};
use crate::protocol::{NodeDynamics, Protocol};

/// Strict stability threshold on the sweep margins.
pub const SWEEP_TOL: f64 = 1e-10;

/// Logarithmic grid `re ∈ [re_min, re_max]`, `im ∈ {0, ±[im_min, im_max]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub re_count: usize,
    pub im_min: f64,
    pub im_max: f64,
    /// Points on each side of the real axis.
    pub im_count: usize,
}

impl Default for CtGrid {
    fn default() -> Self {
        Self { re_min: 1e-3, re_max: 1e3, re_count: 8, im_min: 1e-3, im_max: 1e3, im_count: 12 }
    }
}

impl CtGrid {
    pub fn points(&self) -> Vec<Complex64> {
        let re = logspace(self.re_min, self.re_max, self.re_count);
        let mut im = vec![0.0];
        for v in logspace(self.im_min, self.im_max, self.im_count) {
            im.push(v);
            im.push(-v);
        }
        re.iter()
            .flat_map(|&x| im.iter().map(move |&y| Complex64::new(x, y)))
            .collect()
    }
}

/// Concentric rings `|λ| = r` inside the unit disc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtGrid {
    pub radii: Vec<f64>,
    pub angles: usize,
}

impl Default for DtGrid {
    fn default() -> Self {
        Self { radii: vec![0.0, 0.25, 0.5, 0.75, 0.999], angles: 32 }
    }
}

impl DtGrid {
    pub fn points(&self) -> Vec<Complex64> {
        self.radii
            .iter()
            .flat_map(|&r| {
                (0..self.angles).map(move |k| {
                    Complex64::from_polar(r, std::f64::consts::TAU * k as f64 / self.angles as f64)
                })
            })
            .collect()
    }
}

fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

/// Result of a sweep. `margins[k]` is the violation of the stability threshold
/// at `grid[k]`; negative means the block is stable with room to spare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub time_domain: TimeDomain,
    pub grid: Vec<Complex64>,
    pub margins: Vec<f64>,
    pub worst_margin: f64,
    pub worst_lambda: Complex64,
    pub failing_points: usize,
    pub pass: bool,
}

impl SweepReport {
    fn from_margins(time_domain: TimeDomain, grid: Vec<Complex64>, margins: Vec<f64>) -> Self {
        let (mut worst_margin, mut worst_lambda) = (f64::NEG_INFINITY, Complex64::new(0.0, 0.0));
        for (&l, &m) in grid.iter().zip(&margins) {
            // NaN counts as the worst possible outcome.
            if m.is_nan() || m > worst_margin {
                worst_margin = if m.is_nan() { f64::INFINITY } else { m };
                worst_lambda = l;
            }
        }
        let failing_points = margins.iter().filter(|m| !(**m < 0.0)).count();
        Self {
            time_domain,
            grid,
            margins,
            worst_margin,
            worst_lambda,
            failing_points,
            pass: worst_margin < 0.0,
        }
    }
}

fn abscissa(block: &CMatrix) -> f64 {
    linalg::eigenvalues_c(block).map_or(f64::NAN, |e| linalg::spectral_abscissa(&e))
}

fn radius(block: &CMatrix) -> f64 {
    linalg::eigenvalues_c(block).map_or(f64::NAN, |e| linalg::spectral_radius(&e))
}

/// Largest real part of the decoupled block `F + λ·G·Cm` over the grid.
/// Passes when every point is below `−1e-10`.
pub fn ct_sweep(protocol: &Protocol, grid: &CtGrid) -> Result<SweepReport> {
    if protocol.time_domain() != TimeDomain::Continuous {
        return Err(Error::TimeDomainMismatch("ct_sweep needs a continuous-time protocol".into()));
    }
    let nd = protocol.node_dynamics();
    let points = grid.points();
    let margins = points
        .iter()
        .map(|&l| abscissa(&nd.mode_block(l)) + SWEEP_TOL)
        .collect();
    Ok(SweepReport::from_margins(TimeDomain::Continuous, points, margins))
}

/// Spectral radius of the decoupled block for eigenvalues `λ` of the
/// row-stochastic matrix. Passes when every point is below `1 − 1e-10`; the
/// `λ = 0` points only need radius `≤ 1 + 1e-10`.
pub fn dt_sweep(protocol: &Protocol, grid: &DtGrid) -> Result<SweepReport> {
    let block: Box<dyn Fn(Complex64) -> CMatrix> = match protocol {
        Protocol::DtFull(p) => {
            let nd = p.node_dynamics();
            Box::new(move |l| nd.mode_block(Complex64::new(1.0, 0.0) - l))
        }
        Protocol::DtPartial(p) => {
            let p = p.clone();
            Box::new(move |l| p.phi_e_block(l))
        }
        _ => {
            return Err(Error::TimeDomainMismatch("dt_sweep needs a discrete-time protocol".into()))
        }
    };
    let points = grid.points();
    let margins = points
        .iter()
        .map(|&l| {
            let threshold = if l.norm() == 0.0 { 1.0 + SWEEP_TOL } else { 1.0 - SWEEP_TOL };
            radius(&block(l)) - threshold
        })
        .collect();
    Ok(SweepReport::from_margins(TimeDomain::Discrete, points, margins))
}

/// Runs the sweep matching the protocol's time domain on its default grid.
pub fn sweep(protocol: &Protocol) -> Result<SweepReport> {
    match protocol.time_domain() {
        TimeDomain::Continuous => ct_sweep(protocol, &CtGrid::default()),
        TimeDomain::Discrete => dt_sweep(protocol, &DtGrid::default()),
    }
}

/// Finds a grid point where no scaling of the coupling in `scales` makes the
/// decoupled block stable. `grid` holds Laplacian eigenvalues in continuous
/// time and row-stochastic eigenvalues in discrete time.
pub fn unrecoverable_lambda(nd: &NodeDynamics, grid: &[Complex64], scales: &[f64]) -> Option<Complex64> {
    grid.iter().copied().find(|&l| {
        let s = match nd.time_domain {
            TimeDomain::Continuous => l,
            TimeDomain::Discrete => Complex64::new(1.0, 0.0) - l,
        };
        scales.iter().all(|&k| {
            let block = nd.mode_block(s * k);
            match nd.time_domain {
                TimeDomain::Continuous => !(abscissa(&block) < -SWEEP_TOL),
                TimeDomain::Discrete => !(radius(&block) < 1.0 - SWEEP_TOL),
            }
        })
    })
}

/// Gain scalings `10^{-3} … 10^{3}`, seven per decade.
pub fn gain_scalings() -> Vec<f64> {
    logspace(1e-3, 1e3, 43)
}

/// One necessary condition of the SISO audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessaryCondition {
    pub name: String,
    pub holds: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessityAudit {
    pub time_domain: TimeDomain,
    pub conditions: Vec<NecessaryCondition>,
    pub pass: bool,
}

impl NecessityAudit {
    pub fn violations(&self) -> Vec<&NecessaryCondition> {
        self.conditions.iter().filter(|c| !c.holds).collect()
    }
}

fn condition(name: &str, witness: Option<String>) -> NecessaryCondition {
    NecessaryCondition { name: name.to_string(), holds: witness.is_none(), witness }
}

/// Necessary conditions for a scale-free non-collaborative linear protocol to
/// exist for a SISO agent. Continuous time: stabilizable and detectable,
/// neutrally stable, weakly minimum phase, relative degree one. Discrete time:
/// stabilizable and detectable, neutrally stable.
pub fn siso_necessity_audit(m: &LtiModel) -> Result<NecessityAudit> {
    if !m.is_siso() {
        return Err(Error::NotSiso { inputs: m.inputs(), outputs: m.outputs() });
    }
    let domain = m.time_domain();
    let (stab, det) = m.check_stabilizable_detectable()?;
    let mut conditions = vec![
        condition(
            "stabilizable_detectable",
            match (stab, det) {
                (true, true) => None,
                (false, true) => Some("(A, B) has an uncontrollable unstable mode".into()),
                (true, false) => Some("(C, A) has an unobservable unstable mode".into()),
                (false, false) => Some("(A, B) and (C, A) both lose rank at an unstable mode".into()),
            },
        ),
        condition("neutrally_stable", neutral_stability(m.a(), domain)?.err()),
    ];

    if domain == TimeDomain::Continuous {
        let zeros = m.invariant_zeros()?;
        let report = m.feasibility_report()?;
        let witness = if report.weakly_minimum_phase {
            None
        } else if let Some(z) = zeros.iter().find(|z| z.re > crate::model::ZERO_BOUNDARY_TOL) {
            Some(format!("invariant zero {} in the open right half-plane", fmt_complex(*z)))
        } else {
            let (z, k) = report
                .boundary_zeros
                .iter()
                .find(|(_, k)| *k > 1)
                .copied()
                .unwrap_or((Complex64::new(f64::NAN, 0.0), 0));
            Some(format!("imaginary-axis zero {} has multiplicity {k}", fmt_complex(z)))
        };
        conditions.push(condition("weakly_minimum_phase", witness));
        conditions.push(condition(
            "relative_degree_one",
            match m.relative_degree() {
                Some(1) => None,
                Some(r) => Some(format!("relative degree {r}: CB = 0")),
                None => Some("transfer function is identically zero".into()),
            },
        ));
    }

    let pass = conditions.iter().all(|c| c.holds);
    Ok(NecessityAudit { time_domain: domain, conditions, pass })
}

/// Closed-loop dynamics of the SISO static output protocol `u = −k ζ` with the
/// sign of `k` matched to `CB` (or to the first nonzero Markov parameter).
/// Serves as a nominal candidate in the scaling spot check.
pub fn static_output_candidate(m: &LtiModel) -> NodeDynamics {
    let mut sign = 1.0;
    let mut akb = m.b().clone();
    for _ in 0..m.states() {
        let markov = (m.c() * &akb)[(0, 0)];
        if markov.abs() > 1e-12 {
            sign = markov.signum();
            break;
        }
        akb = m.a() * akb;
    }
    NodeDynamics {
        f: m.a().clone(),
        g: -(m.b() * sign),
        cm: m.c().clone(),
        agent_states: m.states(),
        time_domain: m.time_domain(),
    }
}
