//! Pre-compensated agents and their special coordinate basis (SCB) form.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, classify, fmt_complex, LtiModel, Region, TimeDomain};

/// Residual tolerance for the SCB block-structure contract.
pub const SCB_TOL: f64 = 1e-10;

/// Stable pre-compensator `ṗ = Ap p + Bp v`, `u = Cp p + Dp v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPreCompensator", into = "RawPreCompensator")]
pub struct PreCompensator {
    ap: DMatrix<f64>,
    bp: DMatrix<f64>,
    cp: DMatrix<f64>,
    dp: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPreCompensator {
    #[serde(rename = "Ap", with = "crate::io::matrix")]
    ap: DMatrix<f64>,
    #[serde(rename = "Bp", with = "crate::io::matrix")]
    bp: DMatrix<f64>,
    #[serde(rename = "Cp", with = "crate::io::matrix")]
    cp: DMatrix<f64>,
    #[serde(rename = "Dp", with = "crate::io::matrix")]
    dp: DMatrix<f64>,
}

impl TryFrom<RawPreCompensator> for PreCompensator {
    type Error = Error;

    fn try_from(raw: RawPreCompensator) -> Result<Self> {
        let q = raw.ap.nrows();
        let (m, mv) = raw.dp.shape();
        PreCompensator::new(
            crate::io::fix_empty(raw.ap, q, q),
            crate::io::fix_empty(raw.bp, q, mv),
            crate::io::fix_empty(raw.cp, m, q),
            raw.dp,
        )
    }
}

impl From<PreCompensator> for RawPreCompensator {
    fn from(pc: PreCompensator) -> Self {
        RawPreCompensator {
            ap: pc.ap,
            bp: pc.bp,
            cp: pc.cp,
            dp: pc.dp,
        }
    }
}

impl PreCompensator {
    pub fn new(
        ap: DMatrix<f64>,
        bp: DMatrix<f64>,
        cp: DMatrix<f64>,
        dp: DMatrix<f64>,
    ) -> Result<Self> {
        let q = ap.nrows();
        let (m, mv) = dp.shape();
        if ap.ncols() != q || bp.shape() != (q, mv) || cp.shape() != (m, q) {
            return Err(Error::ShapeMismatch(format!(
                "pre-compensator blocks Ap {:?}, Bp {:?}, Cp {:?}, Dp {:?}",
                ap.shape(),
                bp.shape(),
                cp.shape(),
                dp.shape()
            )));
        }
        if q > 0 {
            let abscissa = linalg::spectral_abscissa(&linalg::eigenvalues(&ap)?);
            if abscissa >= 0.0 {
                return Err(Error::NotHurwitz(abscissa));
            }
        }
        Ok(Self { ap, bp, cp, dp })
    }

    /// Pass-through `u = v` with no internal state.
    pub fn identity(inputs: usize) -> Self {
        Self {
            ap: DMatrix::zeros(0, 0),
            bp: DMatrix::zeros(0, inputs),
            cp: DMatrix::zeros(inputs, 0),
            dp: DMatrix::identity(inputs, inputs),
        }
    }

    pub fn ap(&self) -> &DMatrix<f64> {
        &self.ap
    }
    pub fn bp(&self) -> &DMatrix<f64> {
        &self.bp
    }
    pub fn cp(&self) -> &DMatrix<f64> {
        &self.cp
    }
    pub fn dp(&self) -> &DMatrix<f64> {
        &self.dp
    }
    pub fn states(&self) -> usize {
        self.ap.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.dp.ncols()
    }
}

/// Series interconnection of an agent and a pre-compensator, with state `(x, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatedAgent {
    model: LtiModel,
    agent_states: usize,
}

impl CompensatedAgent {
    pub fn model(&self) -> &LtiModel {
        &self.model
    }
    pub fn a(&self) -> &DMatrix<f64> {
        self.model.a()
    }
    pub fn b(&self) -> &DMatrix<f64> {
        self.model.b()
    }
    pub fn c(&self) -> &DMatrix<f64> {
        self.model.c()
    }
    pub fn agent_states(&self) -> usize {
        self.agent_states
    }
    pub fn compensator_states(&self) -> usize {
        self.model.states() - self.agent_states
    }
}

pub fn compose(m: &LtiModel, pc: &PreCompensator) -> Result<CompensatedAgent> {
    if pc.dp.nrows() != m.inputs() {
        return Err(Error::ShapeMismatch(format!(
            "pre-compensator drives {} inputs but the agent has {}",
            pc.dp.nrows(),
            m.inputs()
        )));
    }
    let (n, q) = (m.states(), pc.states());
    let top = linalg::hstack(&[m.a(), &(m.b() * &pc.cp)]);
    let bottom = linalg::hstack(&[&DMatrix::zeros(q, n), &pc.ap]);
    let at = linalg::vstack(&[&top, &bottom]);
    let bt = linalg::vstack(&[&(m.b() * &pc.dp), &pc.bp]);
    let ct = linalg::hstack(&[m.c(), &DMatrix::zeros(m.outputs(), q)]);
    Ok(CompensatedAgent {
        model: LtiModel::new(at, bt, ct, m.time_domain())?,
        agent_states: n,
    })
}

/// Outcome of checking the structural properties a pre-compensator must provide.
#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Report {
    pub stabilizable: bool,
    pub detectable: bool,
    pub left_invertible: bool,
    pub normal_rank: usize,
    /// Worst distance between the compensated poles and the union of agent
    /// and compensator poles.
    pub pole_mismatch: f64,
    pub poles_preserved: bool,
    pub agent_infinite_zero_orders: Vec<usize>,
    pub compensated_infinite_zero_orders: Vec<usize>,
    pub infinite_zeros_preserved: bool,
    pub agent_zeros: Vec<Complex64>,
    pub compensated_zeros: Vec<Complex64>,
    pub zeros_stable: bool,
    pub failures: Vec<String>,
}

impl Lemma1Report {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn verify_lemma1(m: &LtiModel, pc: &PreCompensator) -> Result<Lemma1Report> {
    let ca = compose(m, pc)?;
    let cm = ca.model();
    let mut failures = Vec::new();

    let (stabilizable, detectable) = cm.check_stabilizable_detectable()?;
    if !stabilizable {
        failures.push("compensated agent is not stabilizable".to_string());
    }
    if !detectable {
        failures.push("compensated agent is not detectable".to_string());
    }

    let normal_rank = cm.normal_rank();
    let left_invertible = normal_rank == cm.inputs();
    if !left_invertible {
        failures.push(format!(
            "compensated agent is not left-invertible (normal rank {normal_rank}, {} inputs)",
            cm.inputs()
        ));
    }

    let mut expected = m.eigenvalues()?;
    if pc.states() > 0 {
        expected.extend(linalg::eigenvalues(pc.ap())?);
    }
    let actual = cm.eigenvalues()?;
    let pole_mismatch = linalg::multiset_distance(&actual, &expected).unwrap_or(f64::INFINITY);
    let pole_tol = 1e-8 * linalg::norm2(cm.a()).max(1.0);
    let poles_preserved = pole_mismatch <= pole_tol;
    if !poles_preserved {
        failures.push(format!(
            "compensated poles differ from agent and compensator poles by {pole_mismatch:e}"
        ));
    }

    let agent_orders = m.infinite_zero_structure();
    let comp_orders = cm.infinite_zero_structure();
    let mut remaining = agent_orders.clone();
    let contained = comp_orders.iter().all(|o| {
        if let Some(pos) = remaining.iter().position(|x| x == o) {
            remaining.swap_remove(pos);
            true
        } else {
            false
        }
    });
    let agent_uniform = agent_orders.iter().all(|&o| o == 1);
    let comp_uniform = comp_orders.iter().all(|&o| o == 1);
    let infinite_zeros_preserved = contained && agent_uniform == comp_uniform;
    if !infinite_zeros_preserved {
        failures.push(format!(
            "infinite zero orders changed from {agent_orders:?} to {comp_orders:?}"
        ));
    }

    let agent_zeros = m.invariant_zeros()?;
    let compensated_zeros = cm.invariant_zeros()?;
    let unstable: Vec<String> = compensated_zeros
        .iter()
        .filter(|z| {
            classify(**z, TimeDomain::Continuous, model::ZERO_BOUNDARY_TOL, 1.0) != Region::Stable
        })
        .map(|z| fmt_complex(*z))
        .collect();
    let zeros_stable = unstable.is_empty();
    if !zeros_stable {
        failures.push(format!(
            "compensated agent has zeros outside the open left half-plane: {}",
            unstable.join(", ")
        ));
    }

    Ok(Lemma1Report {
        stabilizable,
        detectable,
        left_invertible,
        normal_rank,
        pole_mismatch,
        poles_preserved,
        agent_infinite_zero_orders: agent_orders,
        compensated_infinite_zero_orders: comp_orders,
        infinite_zeros_preserved,
        agent_zeros,
        compensated_zeros,
        zeros_stable,
        failures,
    })
}

/// Block form `S Ã S⁻¹ = [[A11, A12], [A21, A22]]`, `S B̃ = [0; B̄]`,
/// `T_y C̃ S⁻¹ = [[C̄, 0], [0, I]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScbForm {
    #[serde(rename = "S", with = "crate::io::matrix")]
    pub s: DMatrix<f64>,
    #[serde(rename = "S_inv", with = "crate::io::matrix")]
    pub s_inv: DMatrix<f64>,
    #[serde(rename = "A11", with = "crate::io::matrix")]
    pub a11: DMatrix<f64>,
    #[serde(rename = "A12", with = "crate::io::matrix")]
    pub a12: DMatrix<f64>,
    #[serde(rename = "A21", with = "crate::io::matrix")]
    pub a21: DMatrix<f64>,
    #[serde(rename = "A22", with = "crate::io::matrix")]
    pub a22: DMatrix<f64>,
    #[serde(rename = "Bbar", with = "crate::io::matrix")]
    pub b_bar: DMatrix<f64>,
    #[serde(rename = "Cbar", with = "crate::io::matrix")]
    pub c_bar: DMatrix<f64>,
    pub nbar: usize,
    /// Output change of basis applied before partitioning `y = (y1; y2)`.
    #[serde(rename = "T_y", with = "crate::io::matrix")]
    pub t_y: DMatrix<f64>,
    /// Original output index placed at each position of the reordered output.
    pub output_permutation: Vec<usize>,
}

impl ScbForm {
    /// Block form for a supplied state transformation `S` and output transform `T_y`.
    pub fn from_transform(
        ca: &CompensatedAgent,
        s: DMatrix<f64>,
        t_y: DMatrix<f64>,
        output_permutation: Vec<usize>,
    ) -> Result<Self> {
        let nz = ca.model().states();
        let nbar = ca.model().inputs();
        let p = ca.model().outputs();
        if s.shape() != (nz, nz) || t_y.shape() != (p, p) || nbar > p || nbar > nz {
            return Err(Error::ShapeMismatch(format!(
                "S is {:?}, T_y is {:?} for a system with {nz} states and {p} outputs",
                s.shape(),
                t_y.shape()
            )));
        }
        let s_inv = s
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::PreconditionFailed("S is singular".into()))?;
        let k = nz - nbar;
        let ab = &s * ca.a() * &s_inv;
        let sb = &s * ca.b();
        let cs = &t_y * ca.c() * &s_inv;
        let form = Self {
            a11: ab.view((0, 0), (k, k)).into_owned(),
            a12: ab.view((0, k), (k, nbar)).into_owned(),
            a21: ab.view((k, 0), (nbar, k)).into_owned(),
            a22: ab.view((k, k), (nbar, nbar)).into_owned(),
            b_bar: sb.view((k, 0), (nbar, nbar)).into_owned(),
            c_bar: cs.view((0, 0), (p - nbar, k)).into_owned(),
            s,
            s_inv,
            nbar,
            t_y,
            output_permutation,
        };
        let residual = form.residual(ca);
        let scale = 1.0 + linalg::norm2(ca.a()) + linalg::norm2(ca.b()) + linalg::norm2(ca.c());
        if residual > SCB_TOL * scale * linalg::norm2(&form.s).max(1.0) * linalg::norm2(&form.s_inv).max(1.0) {
            return Err(Error::PreconditionFailed(format!(
                "transformation does not produce the block structure (residual {residual:e})"
            )));
        }
        if linalg::rank(&form.b_bar, 1e-10) < nbar {
            return Err(Error::PreconditionFailed("Bbar is singular".into()));
        }
        Ok(form)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.a11.nrows(), self.nbar)
    }

    /// Largest violation of the block-structure contract.
    pub fn residual(&self, ca: &CompensatedAgent) -> f64 {
        let (k, nbar) = self.dims();
        let p = self.c_bar.nrows() + nbar;
        let blocks = linalg::vstack(&[
            &linalg::hstack(&[&self.a11, &self.a12]),
            &linalg::hstack(&[&self.a21, &self.a22]),
        ]);
        let a_err = linalg::norm2(&(&self.s * ca.a() * &self.s_inv - blocks));
        let sb = &self.s * ca.b();
        let mut b_expected = DMatrix::zeros(k + nbar, nbar);
        b_expected.view_mut((k, 0), (nbar, nbar)).copy_from(&self.b_bar);
        let b_err = linalg::norm2(&(sb - b_expected));
        let mut c_expected = DMatrix::zeros(p, k + nbar);
        c_expected.view_mut((0, 0), (p - nbar, k)).copy_from(&self.c_bar);
        c_expected
            .view_mut((p - nbar, k), (nbar, nbar))
            .copy_from(&DMatrix::identity(nbar, nbar));
        let c_err = linalg::norm2(&(&self.t_y * ca.c() * &self.s_inv - c_expected));
        let inv_err = linalg::norm2(&(&self.s * &self.s_inv - DMatrix::identity(k + nbar, k + nbar)));
        a_err.max(b_err).max(c_err).max(inv_err)
    }

    /// Ensures `(A11, C̄)` is detectable.
    pub fn check_detectable(&self) -> Result<()> {
        match undetectable_mode(&self.a11, &self.c_bar)? {
            Some(mode) => Err(Error::DetectabilityLost(fmt_complex(mode))),
            None => Ok(()),
        }
    }
}

/// First unstable or boundary eigenvalue of `A` that is unobservable through `C`.
pub(crate) fn undetectable_mode(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<Option<Complex64>> {
    let k = a.nrows();
    if k == 0 {
        return Ok(None);
    }
    let scale = linalg::norm2(a);
    for z in linalg::eigenvalues(a)? {
        if classify(z, TimeDomain::Continuous, model::BOUNDARY_TOL, scale) == Region::Stable {
            continue;
        }
        let shifted = linalg::to_complex(a) - linalg::CMatrix::identity(k, k) * z;
        let pencil = linalg::vstack_c(&shifted, &linalg::to_complex(c));
        if linalg::rank_c(&pencil, 1e-9) < k {
            return Ok(Some(z));
        }
    }
    Ok(None)
}

pub fn scb_decompose(ca: &CompensatedAgent) -> Result<ScbForm> {
    let cm = ca.model();
    let (nz, mv, p) = (cm.states(), cm.inputs(), cm.outputs());
    let normal_rank = cm.normal_rank();
    if normal_rank < mv {
        return Err(Error::NotLeftInvertible {
            normal_rank,
            inputs: mv,
        });
    }
    let cb = ca.c() * ca.b();
    let rank_cb = cm.rank_cb();
    if rank_cb < mv {
        return Err(Error::NotUniformRankOne {
            rank_cb,
            inputs: mv,
        });
    }

    // Rows of C̃B̃ forming a nonsingular block go last. Each pick is the row
    // with the largest component orthogonal to the rows already chosen.
    let scale = linalg::norm2(&cb);
    let mut selected: Vec<usize> = Vec::new();
    let mut residual = cb.clone();
    while selected.len() < mv {
        let (best, norm) = (0..p)
            .filter(|i| !selected.contains(i))
            .map(|i| (i, residual.row(i).norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("rank(CB) = inputs leaves a candidate row");
        if norm <= 1e-9 * scale {
            break;
        }
        let q = residual.row(best) / norm;
        for i in 0..p {
            let proj = residual.row(i).dot(&q);
            let mut row = residual.row_mut(i);
            row -= &q * proj;
        }
        selected.push(best);
    }
    let mut perm: Vec<usize> = (0..p).filter(|i| !selected.contains(i)).collect();
    perm.extend(&selected);
    let mut pi = DMatrix::zeros(p, p);
    for (pos, &orig) in perm.iter().enumerate() {
        pi[(pos, orig)] = 1.0;
    }
    let pcb = &pi * &cb;
    let g1 = pcb.rows(0, p - mv).into_owned();
    let g2 = pcb.rows(p - mv, mv).into_owned();
    let g2_inv = g2
        .try_inverse()
        .ok_or_else(|| Error::Numerical("selected output block is singular".into()))?;
    let mut elim = DMatrix::identity(p, p);
    elim.view_mut((0, p - mv), (p - mv, mv)).copy_from(&(-(g1 * g2_inv)));
    let t_y = elim * pi;

    let c_new = &t_y * ca.c();
    let c2 = c_new.rows(p - mv, mv).into_owned();
    let w = linalg::null_space_abs(&ca.b().transpose(), 1e-10 * linalg::norm2(ca.b()).max(1.0))
        .transpose();
    if w.nrows() != nz - mv {
        return Err(Error::NotUniformRankOne {
            rank_cb,
            inputs: mv,
        });
    }
    let s = linalg::vstack(&[&w, &c2]);
    let form = ScbForm::from_transform(ca, s, t_y, perm)?;
    form.check_detectable()?;
    Ok(form)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn identity_precompensator_is_transparent() {
        let agent = fixtures::ct_agent();
        let ca = compose(&agent, &PreCompensator::identity(3)).unwrap();
        assert_eq!(ca.model().a(), agent.a());
        assert_eq!(ca.model().b(), agent.b());
        assert_eq!(ca.model().c(), agent.c());
    }

    #[test]
    fn reference_composition_spectrum() {
        let ca = compose(&fixtures::ct_agent(), &fixtures::ct_precompensator()).unwrap();
        assert_eq!(ca.b(), &fixtures::ct_b_tilde());
        let eigs = ca.model().eigenvalues().unwrap();
        let expected = [
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-2.0, 0.0),
        ];
        assert!(linalg::multiset_distance(&eigs, &expected).unwrap() < 1e-10);
    }

    #[test]
    fn unstable_precompensator_is_rejected() {
        let r = PreCompensator::new(
            m(1, 1, &[0.5]),
            m(1, 1, &[1.0]),
            m(1, 1, &[1.0]),
            m(1, 1, &[0.0]),
        );
        assert!(matches!(r, Err(Error::NotHurwitz(_))));
    }

    #[test]
    fn lemma1_holds_for_reference_pair() {
        let r = verify_lemma1(&fixtures::ct_agent(), &fixtures::ct_precompensator()).unwrap();
        assert!(r.pass(), "{:?}", r.failures);
        assert_eq!(r.compensated_infinite_zero_orders, vec![1]);
    }

    #[test]
    fn disconnected_precompensator_fails_left_invertibility() {
        let pc = PreCompensator::new(
            m(1, 1, &[-1.0]),
            m(1, 1, &[1.0]),
            DMatrix::zeros(3, 1),
            DMatrix::zeros(3, 1),
        )
        .unwrap();
        let r = verify_lemma1(&fixtures::ct_agent(), &pc).unwrap();
        assert!(!r.left_invertible);
        assert!(!r.pass());
    }

    #[test]
    fn scb_reproduces_reference_blocks() {
        let ca = compose(&fixtures::ct_agent(), &fixtures::ct_precompensator()).unwrap();
        let form = scb_decompose(&ca).unwrap();
        assert_eq!(form.nbar, 1);
        assert!(form.residual(&ca) < 1e-10);
        assert_eq!(form.t_y, DMatrix::identity(2, 2));

        let reference = ScbForm::from_transform(
            &ca,
            fixtures::ct_s_inv().try_inverse().unwrap(),
            DMatrix::identity(2, 2),
            vec![0, 1],
        )
        .unwrap();
        assert!((reference.a11.clone() - fixtures::ct_a11()).norm() < 1e-12);
        assert!((reference.a12.clone() - fixtures::ct_a12()).norm() < 1e-12);
        assert!((reference.c_bar.clone() - fixtures::ct_c_bar()).norm() < 1e-12);
        reference.check_detectable().unwrap();
    }

    #[test]
    fn scb_fixed_point() {
        let a = m(3, 3, &[-1.0, 0.0, 1.0, 0.0, -2.0, 0.5, 0.3, 0.2, 0.1]);
        let b = m(3, 1, &[0.0, 0.0, 1.0]);
        let c = m(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let model = LtiModel::new(a, b, c, TimeDomain::Continuous).unwrap();
        let ca = compose(&model, &PreCompensator::identity(1)).unwrap();
        let form = scb_decompose(&ca).unwrap();
        assert!(form.residual(&ca) < 1e-10);
        // W is only unique up to an orthogonal change of basis on the first block.
        let lower = form.s.rows(2, 1).into_owned();
        assert!((lower - m(1, 3, &[0.0, 0.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn output_rows_are_reordered_when_needed() {
        let a = m(2, 2, &[-1.0, 1.0, 0.0, -2.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        let c = m(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let model = LtiModel::new(a, b, c, TimeDomain::Continuous).unwrap();
        let ca = compose(&model, &PreCompensator::identity(1)).unwrap();
        let form = scb_decompose(&ca).unwrap();
        assert_eq!(form.output_permutation, vec![1, 0]);
        assert!(form.residual(&ca) < 1e-10);
    }

    #[test]
    fn rank_deficient_cb_is_rejected() {
        let model = LtiModel::new(
            m(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            m(2, 1, &[0.0, 1.0]),
            m(1, 2, &[1.0, 0.0]),
            TimeDomain::Continuous,
        )
        .unwrap();
        let ca = compose(&model, &PreCompensator::identity(1)).unwrap();
        assert!(matches!(scb_decompose(&ca), Err(Error::NotUniformRankOne { .. })));
    }

    #[test]
    fn precompensator_json_round_trip() {
        let pc = fixtures::ct_precompensator();
        let text = serde_json::to_string(&pc).unwrap();
        let back: PreCompensator = serde_json::from_str(&text).unwrap();
        assert_eq!(back, pc);
        let id = PreCompensator::identity(2);
        let back: PreCompensator = serde_json::from_str(&serde_json::to_string(&id).unwrap()).unwrap();
        assert_eq!(back, id);
    }
}
