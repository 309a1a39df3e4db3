//! Synthesis of the four scale-free protocols.
//!
//! Every protocol reduces to per-agent dynamics
//! `ẇᵢ = F wᵢ + G ζᵢ` (or `wᵢ⁺ = …` in discrete time) with
//! `ζᵢ = Σⱼ wᵢⱼ (Cm wᵢ − Cm wⱼ)`, where `wᵢ` stacks the agent state and the
//! protocol state. [`NodeDynamics`] exposes that form; simulation, the
//! decoupled-mode oracle and the spectral sweeps are all built on it.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, to_complex, CMatrix};
use crate::lyapunov::{self, Certificate, CertificateKind};
use crate::model::{neutral_stability, LtiModel, TimeDomain};
use crate::place;
use crate::structure::{compose, scb_decompose, verify_lemma1, PreCompensator, ScbForm};

pub const DEFAULT_RHO: f64 = 1.0;

/// Optional inputs to the synthesis routines. Anything left `None` is designed
/// automatically.
#[derive(Debug, Clone, Default)]
pub struct SynthOptions {
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    /// Accept `ε`/`δ` above the certified bound.
    pub override_gain_bound: bool,
    pub p: Option<DMatrix<f64>>,
    pub h: Option<DMatrix<f64>>,
    /// SCB state transformation (continuous-time partial-state design only).
    pub s: Option<DMatrix<f64>>,
    /// Sharpen `δ1` on a sampled grid of `λ`. The result is not certified.
    pub refine_delta: bool,
}

/// Per-agent closed-loop data: `wᵢ` evolves by `F wᵢ + G ζᵢ` with `ζᵢ`
/// formed from `Cm w`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDynamics {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub cm: DMatrix<f64>,
    pub agent_states: usize,
    pub time_domain: TimeDomain,
}

impl NodeDynamics {
    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn protocol_states(&self) -> usize {
        self.dim() - self.agent_states
    }

    pub fn coupling(&self) -> DMatrix<f64> {
        &self.g * &self.cm
    }

    /// Decoupled block `F + s·G·Cm` for a coupling eigenvalue `s`
    /// (a Laplacian eigenvalue, or `1 − λ` for an eigenvalue `λ` of the
    /// row-stochastic matrix).
    pub fn mode_block(&self, s: Complex64) -> CMatrix {
        to_complex(&self.f) + to_complex(&self.coupling()) * s
    }

    /// Stacked closed-loop matrix `I ⊗ F + W ⊗ G·Cm` for a coupling matrix `W`
    /// (`L`, or `I − D`).
    pub fn stacked(&self, coupling: &DMatrix<f64>) -> DMatrix<f64> {
        let n = coupling.nrows();
        DMatrix::<f64>::identity(n, n).kronecker(&self.f) + coupling.kronecker(&self.coupling())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtFullProtocol {
    pub model: LtiModel,
    #[serde(rename = "P", with = "crate::io::matrix")]
    pub p: DMatrix<f64>,
    pub rho: f64,
    pub certificate_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtPartialProtocol {
    pub model: LtiModel,
    pub pre: PreCompensator,
    pub scb: ScbForm,
    /// Certificate over the compensated state `(x, p)`.
    #[serde(rename = "P", with = "crate::io::matrix")]
    pub p: DMatrix<f64>,
    #[serde(rename = "H", with = "crate::io::matrix")]
    pub h: DMatrix<f64>,
    pub rho: f64,
    pub certificate_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtFullProtocol {
    pub model: LtiModel,
    #[serde(rename = "P", with = "crate::io::matrix")]
    pub p: DMatrix<f64>,
    pub epsilon: f64,
    pub epsilon_star: f64,
    pub gain_override: bool,
    pub certificate_slack: f64,
}

/// Constants bounding the discrete-time partial-state gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaConstants {
    /// Value used in the bounds, `max(m1_raw, 1)`.
    pub m1: f64,
    /// `2‖BᵀQ‖·‖A − HC‖`.
    pub m1_raw: f64,
    pub m2: f64,
    pub m3: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub kappa: f64,
    /// `‖BᵀPB‖`.
    pub btpb: f64,
    #[serde(with = "crate::io::ext_f64")]
    pub delta1: f64,
    pub delta2: f64,
    /// `δ1` sharpened on a sampled `λ` grid, when requested. Not certified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta1_sampled: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtPartialProtocol {
    pub model: LtiModel,
    #[serde(rename = "H", with = "crate::io::matrix")]
    pub h: DMatrix<f64>,
    #[serde(rename = "P", with = "crate::io::matrix")]
    pub p: DMatrix<f64>,
    #[serde(rename = "Q", with = "crate::io::matrix")]
    pub q: DMatrix<f64>,
    pub delta: f64,
    pub delta_star: f64,
    pub constants: DeltaConstants,
    pub gain_override: bool,
    pub certificate_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    CtFull(CtFullProtocol),
    CtPartial(CtPartialProtocol),
    DtFull(DtFullProtocol),
    DtPartial(DtPartialProtocol),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    CtFull,
    CtPartial,
    DtFull,
    DtPartial,
}

impl ProtocolKind {
    pub fn time_domain(self) -> TimeDomain {
        match self {
            ProtocolKind::CtFull | ProtocolKind::CtPartial => TimeDomain::Continuous,
            ProtocolKind::DtFull | ProtocolKind::DtPartial => TimeDomain::Discrete,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ProtocolKind::CtFull => "ct_full",
            ProtocolKind::CtPartial => "ct_partial",
            ProtocolKind::DtFull => "dt_full",
            ProtocolKind::DtPartial => "dt_partial",
        }
    }
}

impl Protocol {
    pub fn kind(&self) -> ProtocolKind {
        match self {
            Protocol::CtFull(_) => ProtocolKind::CtFull,
            Protocol::CtPartial(_) => ProtocolKind::CtPartial,
            Protocol::DtFull(_) => ProtocolKind::DtFull,
            Protocol::DtPartial(_) => ProtocolKind::DtPartial,
        }
    }

    pub fn model(&self) -> &LtiModel {
        match self {
            Protocol::CtFull(p) => &p.model,
            Protocol::CtPartial(p) => &p.model,
            Protocol::DtFull(p) => &p.model,
            Protocol::DtPartial(p) => &p.model,
        }
    }

    pub fn time_domain(&self) -> TimeDomain {
        self.kind().time_domain()
    }

    pub fn node_dynamics(&self) -> NodeDynamics {
        match self {
            Protocol::CtFull(p) => p.node_dynamics(),
            Protocol::CtPartial(p) => p.node_dynamics(),
            Protocol::DtFull(p) => p.node_dynamics(),
            Protocol::DtPartial(p) => p.node_dynamics(),
        }
    }

    /// Gain scalar (`ρ`, `ε` or `δ`).
    pub fn gain(&self) -> f64 {
        match self {
            Protocol::CtFull(p) => p.rho,
            Protocol::CtPartial(p) => p.rho,
            Protocol::DtFull(p) => p.epsilon,
            Protocol::DtPartial(p) => p.delta,
        }
    }

    /// Copy with the gain scalar replaced, bypassing every check. Meant for
    /// verification experiments with deliberately invalid gains.
    pub fn with_gain_unchecked(&self, gain: f64) -> Protocol {
        let mut out = self.clone();
        match &mut out {
            Protocol::CtFull(p) => p.rho = gain,
            Protocol::CtPartial(p) => p.rho = gain,
            Protocol::DtFull(p) => {
                p.epsilon = gain;
                p.gain_override = gain > p.epsilon_star;
            }
            Protocol::DtPartial(p) => {
                p.delta = gain;
                p.gain_override = gain > p.delta_star;
            }
        }
        out
    }

    /// Model-only gain bound (`ε*` or `δ*`), if the variant has one.
    pub fn gain_bound(&self) -> Option<f64> {
        match self {
            Protocol::DtFull(p) => Some(p.epsilon_star),
            Protocol::DtPartial(p) => Some(p.delta_star),
            _ => None,
        }
    }
}

impl CtFullProtocol {
    /// `u = −ρ BᵀP ζ`.
    pub fn gain_matrix(&self) -> DMatrix<f64> {
        self.model.b().transpose() * &self.p * self.rho
    }

    pub fn node_dynamics(&self) -> NodeDynamics {
        let n = self.model.states();
        NodeDynamics {
            f: self.model.a().clone(),
            g: -(self.model.b() * self.gain_matrix()),
            cm: DMatrix::identity(n, n),
            agent_states: n,
            time_domain: TimeDomain::Continuous,
        }
    }
}

impl CtPartialProtocol {
    /// `B̃ᵀ P S⁻¹ = [K1, K2]`.
    pub fn feedback_blocks(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let ca = compose(&self.model, &self.pre).expect("validated at synthesis");
        let k = ca.b().transpose() * &self.p * &self.scb.s_inv;
        let (k1_cols, nbar) = self.scb.dims();
        (
            k.columns(0, k1_cols).into_owned(),
            k.columns(k1_cols, nbar).into_owned(),
        )
    }

    /// State order per agent: `(x, p, ẑ)`.
    pub fn node_dynamics(&self) -> NodeDynamics {
        let ca = compose(&self.model, &self.pre).expect("validated at synthesis");
        let (k, nbar) = self.scb.dims();
        let nz = ca.model().states();
        let p_out = ca.model().outputs();
        let (k1, k2) = self.feedback_blocks();
        let bt = ca.b();
        let ty_top = self.scb.t_y.rows(0, p_out - nbar).into_owned();
        let ty_bottom = self.scb.t_y.rows(p_out - nbar, nbar).into_owned();

        let observer = &self.scb.a11 - &self.h * &self.scb.c_bar;
        let f = linalg::vstack(&[
            &linalg::hstack(&[ca.a(), &(-(bt * &k1) * self.rho)]),
            &linalg::hstack(&[&DMatrix::zeros(k, nz), &observer]),
        ]);
        let g = linalg::vstack(&[
            &(-(bt * &k2 * &ty_bottom) * self.rho),
            &(&self.h * &ty_top + &self.scb.a12 * &ty_bottom),
        ]);
        let cm = linalg::hstack(&[ca.c(), &DMatrix::zeros(p_out, k)]);
        NodeDynamics {
            f,
            g,
            cm,
            agent_states: self.model.states(),
            time_domain: TimeDomain::Continuous,
        }
    }
}

impl DtFullProtocol {
    /// `u = −ε BᵀPA ζ`.
    pub fn gain_matrix(&self) -> DMatrix<f64> {
        self.model.b().transpose() * &self.p * self.model.a() * self.epsilon
    }

    pub fn node_dynamics(&self) -> NodeDynamics {
        let n = self.model.states();
        NodeDynamics {
            f: self.model.a().clone(),
            g: -(self.model.b() * self.gain_matrix()),
            cm: DMatrix::identity(n, n),
            agent_states: n,
            time_domain: TimeDomain::Discrete,
        }
    }
}

impl DtPartialProtocol {
    /// State order per agent: `(x, χ)`.
    pub fn node_dynamics(&self) -> NodeDynamics {
        let (a, b, c) = (self.model.a(), self.model.b(), self.model.c());
        let n = self.model.states();
        let p_out = self.model.outputs();
        let k = b * b.transpose() * &self.p * a * self.delta;
        let f = linalg::vstack(&[
            &linalg::hstack(&[a, &(-k)]),
            &linalg::hstack(&[&DMatrix::zeros(n, n), &(a - &self.h * c)]),
        ]);
        let g = linalg::vstack(&[&DMatrix::zeros(n, p_out), &self.h]);
        let cm = linalg::hstack(&[c, &DMatrix::zeros(p_out, n)]);
        NodeDynamics {
            f,
            g,
            cm,
            agent_states: n,
            time_domain: TimeDomain::Discrete,
        }
    }

    /// Mode block in (φ, e) coordinates for an eigenvalue `λ` of the
    /// row-stochastic matrix.
    pub fn phi_e_block(&self, lambda: Complex64) -> CMatrix {
        let (a, b, c) = (self.model.a(), self.model.b(), self.model.c());
        let s = Complex64::new(1.0, 0.0) - lambda;
        let k = to_complex(&(b * b.transpose() * &self.p * a)) * (s * self.delta);
        let ac = to_complex(a);
        let obs = to_complex(&(a - &self.h * c));
        linalg::block2_c(&(&ac - &k), &k, &(-&k), &(obs + &k))
    }
}

fn require_domain(m: &LtiModel, domain: TimeDomain) -> Result<()> {
    if m.time_domain() != domain {
        return Err(Error::TimeDomainMismatch(format!(
            "model is {} but the protocol is {}",
            m.time_domain().label(),
            domain.label()
        )));
    }
    Ok(())
}

fn require_stabilizable_neutral(m: &LtiModel) -> Result<()> {
    if !m.check_stabilizable_detectable()?.0 {
        return Err(Error::PreconditionFailed("(A, B) is not stabilizable".into()));
    }
    if let Err(why) = neutral_stability(m.a(), m.time_domain())? {
        return Err(Error::PreconditionFailed(format!("A is not neutrally stable: {why}")));
    }
    Ok(())
}

fn positive_gain(name: &str, v: f64) -> Result<f64> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidGain(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(v)
}

/// Uses the supplied certificate after validating it, otherwise constructs one.
fn certificate_for(
    a: &DMatrix<f64>,
    supplied: Option<&DMatrix<f64>>,
    kind: CertificateKind,
) -> Result<Certificate> {
    match supplied {
        Some(p) => {
            let cert = Certificate {
                p: p.clone(),
                kind,
                slack: f64::NAN,
            };
            let report = lyapunov::validate(&cert, a, None, None)?;
            if !report.pass() {
                return Err(Error::InvalidCertificate(format!(
                    "slack {:e} (bound {:e}), min eigenvalue {:e}",
                    report.slack, report.slack_bound, report.min_eig
                )));
            }
            Ok(Certificate {
                slack: report.slack,
                ..cert
            })
        }
        None => match kind {
            CertificateKind::CtSemidefinite => lyapunov::ct_certificate(a),
            _ => lyapunov::dt_certificate(a),
        },
    }
}

pub fn synth_ct_full(m: &LtiModel, opts: &SynthOptions) -> Result<CtFullProtocol> {
    require_domain(m, TimeDomain::Continuous)?;
    let rho = positive_gain("rho", opts.rho.unwrap_or(DEFAULT_RHO))?;
    let model = m.with_full_state_output();
    require_stabilizable_neutral(&model)?;
    let cert = certificate_for(model.a(), opts.p.as_ref(), CertificateKind::CtSemidefinite)?;
    Ok(CtFullProtocol {
        model,
        p: cert.p,
        rho,
        certificate_slack: cert.slack,
    })
}

pub fn synth_ct_partial(
    m: &LtiModel,
    pc: &PreCompensator,
    opts: &SynthOptions,
) -> Result<CtPartialProtocol> {
    require_domain(m, TimeDomain::Continuous)?;
    let rho = positive_gain("rho", opts.rho.unwrap_or(DEFAULT_RHO))?;
    let lemma = verify_lemma1(m, pc)?;
    if !lemma.pass() {
        return Err(Error::PreconditionFailed(format!(
            "pre-compensator: {}",
            lemma.failures.join("; ")
        )));
    }
    let ca = compose(m, pc)?;
    let report = ca.model().feasibility_report()?;
    if !report.design_assumptions_hold {
        return Err(Error::PreconditionFailed(format!(
            "compensated agent: {}",
            report.violations.join("; ")
        )));
    }
    let scb = match &opts.s {
        Some(s) => {
            let p_out = ca.model().outputs();
            let form = ScbForm::from_transform(
                &ca,
                s.clone(),
                DMatrix::identity(p_out, p_out),
                (0..p_out).collect(),
            )?;
            form.check_detectable()?;
            form
        }
        None => scb_decompose(&ca)?,
    };
    let h = match &opts.h {
        Some(h) => {
            if h.shape() != (scb.a11.nrows(), scb.c_bar.nrows()) {
                return Err(Error::ShapeMismatch(format!(
                    "H is {:?}, expected {:?}",
                    h.shape(),
                    (scb.a11.nrows(), scb.c_bar.nrows())
                )));
            }
            let abscissa =
                linalg::spectral_abscissa(&linalg::eigenvalues(&(&scb.a11 - h * &scb.c_bar))?);
            if abscissa >= 0.0 {
                return Err(Error::NotHurwitz(abscissa));
            }
            h.clone()
        }
        None => place::observer_gain(&scb.a11, &scb.c_bar, TimeDomain::Continuous)?,
    };
    let cert = certificate_for(ca.a(), opts.p.as_ref(), CertificateKind::CtSemidefinite)?;
    Ok(CtPartialProtocol {
        model: m.clone(),
        pre: pc.clone(),
        scb,
        p: cert.p,
        h,
        rho,
        certificate_slack: cert.slack,
    })
}

pub fn synth_dt_full(m: &LtiModel, opts: &SynthOptions) -> Result<DtFullProtocol> {
    require_domain(m, TimeDomain::Discrete)?;
    let model = m.with_full_state_output();
    require_stabilizable_neutral(&model)?;
    let cert = certificate_for(model.a(), opts.p.as_ref(), CertificateKind::DtSemidefinite)?;
    let btpb = linalg::norm2(&(model.b().transpose() * &cert.p * model.b()));
    if btpb == 0.0 {
        return Err(Error::PreconditionFailed("BᵀPB vanishes".into()));
    }
    let epsilon_star = 1.0 / btpb;
    let (epsilon, gain_override) = match opts.epsilon {
        None => (epsilon_star, false),
        Some(e) => {
            let e = positive_gain("epsilon", e)?;
            if e > epsilon_star && !opts.override_gain_bound {
                return Err(Error::EpsilonTooLarge {
                    epsilon: e,
                    bound: epsilon_star,
                });
            }
            (e, e > epsilon_star)
        }
    };
    Ok(DtFullProtocol {
        model,
        p: cert.p,
        epsilon,
        epsilon_star,
        gain_override,
        certificate_slack: cert.slack,
    })
}

pub fn synth_dt_partial(m: &LtiModel, opts: &SynthOptions) -> Result<DtPartialProtocol> {
    require_domain(m, TimeDomain::Discrete)?;
    require_stabilizable_neutral(m)?;
    let (a, b, c) = (m.a(), m.b(), m.c());
    let h = match &opts.h {
        Some(h) => {
            if h.shape() != (m.states(), m.outputs()) {
                return Err(Error::ShapeMismatch(format!(
                    "H is {:?}, expected {:?}",
                    h.shape(),
                    (m.states(), m.outputs())
                )));
            }
            h.clone()
        }
        None => {
            if !m.check_stabilizable_detectable()?.1 {
                return Err(Error::ObserverDesignFailed("(A, C) is not detectable".into()));
            }
            place::observer_gain(a, c, TimeDomain::Discrete)?
        }
    };
    let q = lyapunov::dt_observer_q(a, &h, c)?;
    let cert = certificate_for(a, opts.p.as_ref(), CertificateKind::DtSemidefinite)?;
    let mut constants = delta_constants(a, b, c, &h, &cert.p, &q.p);
    if opts.refine_delta {
        let sampled = sampled_delta1(a, b, c, &h, &cert.p, &q.p, constants.delta1);
        constants.delta1_sampled = Some(sampled);
    }
    let delta_star = delta_star(&constants);
    if !(delta_star.is_finite() && delta_star > 0.0) {
        return Err(Error::PreconditionFailed(format!("degenerate gain bound δ* = {delta_star}")));
    }
    let (delta, gain_override) = match opts.delta {
        None => (delta_star, false),
        Some(d) => {
            let d = positive_gain("delta", d)?;
            if d > delta_star && !opts.override_gain_bound {
                return Err(Error::DeltaTooLarge {
                    delta: d,
                    bound: delta_star,
                });
            }
            (d, d > delta_star)
        }
    };
    Ok(DtPartialProtocol {
        model: m.clone(),
        h,
        p: cert.p,
        q: q.p,
        delta,
        delta_star,
        constants,
        gain_override,
        certificate_slack: cert.slack,
    })
}

/// Positive root of `α x² + β x = 1` (infinite when both coefficients vanish).
fn positive_root(alpha: f64, beta: f64) -> f64 {
    let disc = beta * beta + 4.0 * alpha;
    let denom = beta + disc.sqrt();
    if denom > 0.0 {
        2.0 / denom
    } else {
        f64::INFINITY
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

pub fn delta_constants(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    h: &DMatrix<f64>,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> DeltaConstants {
    let n2 = linalg::norm2;
    let f = a - h * c;
    let bt = b.transpose();
    let btq = &bt * q;
    let bbtpa = b * &bt * p * a;
    let atpb = a.transpose() * p * b;
    let btpb = &bt * p * b;

    let m1_raw = 2.0 * n2(&btq) * n2(&f);
    let m1 = m1_raw.max(1.0);
    let m2 = n2(&(&btq * b));
    let m3 = 2.0 * n2(&btq) * n2(&bbtpa);
    let theta1 = 2.0 * n2(&atpb);
    let theta2 = 4.0 * n2(&(&atpb * &btpb * atpb.transpose()));
    let theta3 = 2.0 * n2(&(&atpb * &btpb));
    let kappa = 4.0 + 2.0 * m2 + 2.0 * m1 * m1;

    let qn = n2(q);
    let scale = 2.0 * n2(&bbtpa);
    let delta1 = positive_root(qn * scale * scale, 2.0 * qn * n2(&f) * scale);
    let delta2 = delta1.min(ratio(1.0, 2.0 * n2(&btpb)));
    DeltaConstants {
        m1,
        m1_raw,
        m2,
        m3,
        theta1,
        theta2,
        theta3,
        kappa,
        btpb: n2(&btpb),
        delta1,
        delta2,
        delta1_sampled: None,
    }
}

/// `δ*` from the constants; a sampled `δ1` (if present) replaces the certified one.
pub fn delta_star(k: &DeltaConstants) -> f64 {
    let delta2 = match k.delta1_sampled {
        Some(d1) => k.delta2.max(d1.min(ratio(1.0, 2.0 * k.btpb))),
        None => k.delta2,
    };
    let cubic = ratio(0.5, k.theta2 * k.kappa).cbrt();
    let cross = ratio(k.m1, k.theta1 * k.kappa);
    let quad = positive_root(k.theta3 * k.kappa, k.m3);
    delta2.min(cubic).min(cross).min(quad)
}

/// Largest `δ` on a doubling/bisection search such that
/// `(F + (1−λ)δK)* Q (F + (1−λ)δK) − Q + 3I ⪯ 0` at sampled `λ` in the unit disk.
fn sampled_delta1(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    h: &DMatrix<f64>,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    certified: f64,
) -> f64 {
    let n = a.nrows();
    let f = to_complex(&(a - h * c));
    let k = to_complex(&(b * b.transpose() * p * a));
    let qc = to_complex(q);
    let three = CMatrix::identity(n, n) * Complex64::new(3.0, 0.0);
    let mut grid = Vec::new();
    for r in [0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999] {
        for j in 0..64 {
            let th = std::f64::consts::TAU * j as f64 / 64.0;
            grid.push(Complex64::from_polar(r, th));
        }
    }
    let holds = |delta: f64| {
        grid.iter().all(|lam| {
            let m = &f + &k * ((Complex64::new(1.0, 0.0) - lam) * delta);
            let lhs = m.adjoint() * &qc * &m - &qc + &three;
            let herm = (&lhs + lhs.adjoint()) * Complex64::new(0.5, 0.0);
            herm.symmetric_eigenvalues().iter().all(|v| *v <= 1e-12 * linalg::norm2(q))
        })
    };
    if !certified.is_finite() {
        return certified;
    }
    let mut lo = certified;
    if !holds(lo) {
        return certified;
    }
    let mut hi = lo * 2.0;
    while holds(hi) && hi < 1e6 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
