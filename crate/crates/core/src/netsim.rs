//! Closed-loop network simulation, synchronization metrics and the
//! decoupled-mode spectral oracle.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::DiGraph;
use crate::linalg::{self, CMatrix};
use crate::model::TimeDomain;
use crate::protocol::{NodeDynamics, Protocol};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_CT_HORIZON: f64 = 50.0;
pub const DEFAULT_DT_STEPS: f64 = 2000.0;
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;
pub const ORACLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub protocol: Protocol,
    pub graph: DiGraph,
    /// Per-node in-degree bounds for discrete-time coupling (defaults to the
    /// actual in-degrees).
    pub din_bar: Option<Vec<f64>>,
    /// Initial agent states, one row per agent.
    pub x0: DMatrix<f64>,
    /// Initial protocol states, one row per agent (defaults to zero).
    pub protocol_x0: Option<DMatrix<f64>>,
    /// Final time (continuous time) or number of steps (discrete time).
    pub horizon: f64,
    /// Integration step (continuous time only).
    pub dt: f64,
    /// Keep every `record_every`-th step (the final step is always kept).
    pub record_every: usize,
    /// Stop once the sync error drops below this fraction of its initial value.
    pub stop_below: Option<f64>,
}

impl Scenario {
    /// Scenario with default horizon and step for the protocol's time domain.
    pub fn new(protocol: Protocol, graph: DiGraph, x0: DMatrix<f64>) -> Self {
        let horizon = match protocol.time_domain() {
            TimeDomain::Continuous => DEFAULT_CT_HORIZON,
            TimeDomain::Discrete => DEFAULT_DT_STEPS,
        };
        Self {
            protocol,
            graph,
            din_bar: None,
            x0,
            protocol_x0: None,
            horizon,
            dt: DEFAULT_DT,
            record_every: 1,
            stop_below: None,
        }
    }

    /// Scenario with initial agent states drawn uniformly from `[−1, 1]`.
    pub fn seeded(protocol: Protocol, graph: DiGraph, seed: u64) -> Self {
        let x0 = seeded_states(graph.node_count(), protocol.model().states(), seed);
        Self::new(protocol, graph, x0)
    }

    pub fn node_dynamics(&self) -> NodeDynamics {
        self.protocol.node_dynamics()
    }

    /// Coupling matrix: `L` in continuous time, `I − D` in discrete time.
    pub fn coupling_matrix(&self) -> Result<DMatrix<f64>> {
        match self.protocol.time_domain() {
            TimeDomain::Continuous => Ok(self.graph.laplacian().matrix),
            TimeDomain::Discrete => {
                let bounds = self
                    .din_bar
                    .clone()
                    .unwrap_or_else(|| self.graph.in_degrees());
                Ok(self.graph.row_stochastic(&bounds)?.coupling())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n_agents = self.graph.node_count();
        let nd = self.node_dynamics();
        if !self.graph.has_spanning_tree() {
            return Err(Error::InvalidGraph("graph has no directed spanning tree".into()));
        }
        if self.x0.shape() != (n_agents, nd.agent_states) {
            return Err(Error::ShapeMismatch(format!(
                "initial states are {:?}, expected {:?}",
                self.x0.shape(),
                (n_agents, nd.agent_states)
            )));
        }
        if let Some(px) = &self.protocol_x0 {
            if px.shape() != (n_agents, nd.protocol_states()) {
                return Err(Error::ShapeMismatch(format!(
                    "initial protocol states are {:?}, expected {:?}",
                    px.shape(),
                    (n_agents, nd.protocol_states())
                )));
            }
        }
        if let Some(b) = &self.din_bar {
            if b.len() != n_agents {
                return Err(Error::ShapeMismatch(format!(
                    "{} in-degree bounds for {n_agents} agents",
                    b.len()
                )));
            }
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::ShapeMismatch(format!("invalid horizon {}", self.horizon)));
        }
        if self.protocol.time_domain() == TimeDomain::Continuous
            && !(self.dt.is_finite() && self.dt > 0.0)
        {
            return Err(Error::ShapeMismatch(format!("invalid step {}", self.dt)));
        }
        if self.record_every == 0 {
            return Err(Error::ShapeMismatch("record_every must be positive".into()));
        }
        Ok(())
    }
}

pub fn seeded_states(agents: usize, states: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(agents, states, |_, _| rng.random_range(-1.0..1.0))
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Agent states at each recorded time, one row per agent.
    pub states: Vec<DMatrix<f64>>,
    /// Protocol states at each recorded time, one row per agent.
    pub protocol_states: Vec<DMatrix<f64>>,
    pub sync_error: Vec<f64>,
    pub stopped_early: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial_sync_error(&self) -> f64 {
        self.sync_error.first().copied().unwrap_or(0.0)
    }

    pub fn final_sync_error(&self) -> f64 {
        self.sync_error.last().copied().unwrap_or(0.0)
    }
}

/// Largest pairwise Euclidean distance between the first `n` rows of the columns of `w`.
fn sync_error_of(w: &DMatrix<f64>, n: usize) -> f64 {
    let d = w.nrows();
    let data = w.as_slice();
    let agents = w.ncols();
    let mut worst = 0.0_f64;
    for i in 0..agents {
        let xi = &data[i * d..i * d + n];
        for j in i + 1..agents {
            let xj = &data[j * d..j * d + n];
            let acc: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
            worst = worst.max(acc);
        }
    }
    worst.sqrt()
}

/// Largest distance to the centroid, `r`. The sync error lies in `[r, 2r]`.
fn centroid_radius(w: &DMatrix<f64>, n: usize, centroid: &mut [f64]) -> f64 {
    let d = w.nrows();
    let data = w.as_slice();
    let agents = w.ncols();
    centroid.fill(0.0);
    for i in 0..agents {
        for (c, x) in centroid.iter_mut().zip(&data[i * d..i * d + n]) {
            *c += x;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= agents as f64);
    let mut worst = 0.0_f64;
    for i in 0..agents {
        let acc: f64 = centroid
            .iter()
            .zip(&data[i * d..i * d + n])
            .map(|(c, x)| (x - c) * (x - c))
            .sum();
        worst = worst.max(acc);
    }
    worst.sqrt()
}

/// Sparse rows of the coupling matrix.
fn sparse_rows(m: &DMatrix<f64>) -> Vec<Vec<(usize, f64)>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .filter(|&j| m[(i, j)] != 0.0)
                .map(|j| (j, m[(i, j)]))
                .collect()
        })
        .collect()
}

struct Stepper {
    f: DMatrix<f64>,
    gc: DMatrix<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    s: DMatrix<f64>,
}

impl Stepper {
    /// `out = F W + G·Cm (W Wᵀ_coupling)`.
    fn apply(&mut self, w: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        self.s.fill(0.0);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, c) in row {
                self.s.column_mut(i).axpy(c, &w.column(j), 1.0);
            }
        }
        out.gemm(1.0, &self.f, w, 0.0);
        out.gemm(1.0, &self.gc, &self.s, 1.0);
    }
}

fn add_scaled(dst: &mut DMatrix<f64>, a: f64, src: &DMatrix<f64>) {
    dst.zip_apply(src, |d, s| *d += a * s);
}

fn split_state(w: &DMatrix<f64>, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let agents = w.rows(0, n).transpose();
    let protocol = w.rows(n, w.nrows() - n).transpose();
    (agents, protocol)
}

pub fn simulate(s: &Scenario) -> Result<Trajectory> {
    s.validate()?;
    let nd = s.node_dynamics();
    let (n, d) = (nd.agent_states, nd.dim());
    let agents = s.graph.node_count();
    let coupling = s.coupling_matrix()?;

    let mut w = DMatrix::zeros(d, agents);
    w.rows_mut(0, n).copy_from(&s.x0.transpose());
    if let Some(px) = &s.protocol_x0 {
        w.rows_mut(n, d - n).copy_from(&px.transpose());
    }

    let mut stepper = Stepper {
        gc: nd.coupling(),
        f: nd.f.clone(),
        rows: sparse_rows(&coupling),
        s: DMatrix::zeros(d, agents),
    };
    let (steps, dt) = match nd.time_domain {
        TimeDomain::Continuous => ((s.horizon / s.dt).round() as usize, s.dt),
        TimeDomain::Discrete => (s.horizon.round() as usize, 1.0),
    };

    let mut tr = Trajectory::default();
    let record = |tr: &mut Trajectory, t: f64, w: &DMatrix<f64>, err: f64| {
        let (x, p) = split_state(w, n);
        tr.times.push(t);
        tr.states.push(x);
        tr.protocol_states.push(p);
        tr.sync_error.push(err);
    };
    let initial = sync_error_of(&w, n);
    record(&mut tr, 0.0, &w, initial);
    let threshold = s.stop_below.map(|r| r * initial);

    let mut k1 = DMatrix::zeros(d, agents);
    let mut k2 = DMatrix::zeros(d, agents);
    let mut k3 = DMatrix::zeros(d, agents);
    let mut k4 = DMatrix::zeros(d, agents);
    let mut tmp = DMatrix::zeros(d, agents);
    let mut centroid = vec![0.0; n];

    for step in 1..=steps {
        match nd.time_domain {
            TimeDomain::Continuous => {
                stepper.apply(&w, &mut k1);
                tmp.copy_from(&w);
                add_scaled(&mut tmp, 0.5 * dt, &k1);
                stepper.apply(&tmp, &mut k2);
                tmp.copy_from(&w);
                add_scaled(&mut tmp, 0.5 * dt, &k2);
                stepper.apply(&tmp, &mut k3);
                tmp.copy_from(&w);
                add_scaled(&mut tmp, dt, &k3);
                stepper.apply(&tmp, &mut k4);
                add_scaled(&mut k1, 2.0, &k2);
                add_scaled(&mut k1, 2.0, &k3);
                k1 += &k4;
                add_scaled(&mut w, dt / 6.0, &k1);
            }
            TimeDomain::Discrete => {
                stepper.apply(&w, &mut tmp);
                std::mem::swap(&mut w, &mut tmp);
            }
        }
        let t = step as f64 * dt;
        let must_record = step == steps || step % s.record_every == 0;
        let r = centroid_radius(&w, n, &mut centroid);
        let near_stop = threshold.is_some_and(|th| r < th);
        let near_divergence = !(2.0 * r <= DIVERGENCE_THRESHOLD);
        if !(must_record || near_stop || near_divergence) {
            continue;
        }
        let err = sync_error_of(&w, n);
        if !err.is_finite() || err > DIVERGENCE_THRESHOLD {
            return Err(Error::Divergence {
                time: t,
                sync_error: err,
            });
        }
        let hit = threshold.is_some_and(|th| initial > 0.0 && err < th);
        if hit || step == steps || step % s.record_every == 0 {
            record(&mut tr, t, &w, err);
        }
        if hit {
            tr.stopped_early = step < steps;
            break;
        }
    }
    Ok(tr)
}

/// Decoupled block for one eigenvalue of the coupling matrix.
#[derive(Debug, Clone, Serialize)]
pub struct ModeBlock {
    /// Eigenvalue of `L` (continuous time) or of `D` (discrete time).
    pub graph_eigenvalue: Complex64,
    #[serde(skip)]
    pub matrix: CMatrix,
    pub spectrum: Vec<Complex64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    /// The synchronized-motion block (`λ = 0` for `L`, `λ = 1` for `D`).
    pub sync_block: ModeBlock,
    pub blocks: Vec<ModeBlock>,
    pub stacked_spectrum: Vec<Complex64>,
    pub mismatch: f64,
}

/// Checks that the stacked closed-loop spectrum is the union of the decoupled
/// block spectra.
pub fn decoupled_oracle(s: &Scenario) -> Result<OracleReport> {
    if !s.graph.has_spanning_tree() {
        return Err(Error::InvalidGraph("graph has no directed spanning tree".into()));
    }
    let nd = s.node_dynamics();
    let coupling = s.coupling_matrix()?;
    let mut eigs = linalg::eigenvalues(&coupling)?;
    let sync_idx = eigs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(i, _)| i)
        .expect("at least one agent");
    eigs.remove(sync_idx);

    let to_graph = |c: Complex64| match nd.time_domain {
        TimeDomain::Continuous => c,
        TimeDomain::Discrete => Complex64::new(1.0, 0.0) - c,
    };
    let make = |c: Complex64| -> Result<ModeBlock> {
        let matrix = nd.mode_block(c);
        let spectrum = linalg::eigenvalues_c(&matrix)?;
        Ok(ModeBlock {
            graph_eigenvalue: to_graph(c),
            matrix,
            spectrum,
        })
    };
    let sync_block = make(Complex64::new(0.0, 0.0))?;
    let blocks = eigs.into_iter().map(make).collect::<Result<Vec<_>>>()?;

    let stacked_spectrum = linalg::eigenvalues(&nd.stacked(&coupling))?;
    let mut union = sync_block.spectrum.clone();
    for b in &blocks {
        union.extend(&b.spectrum);
    }
    let mismatch = linalg::multiset_distance(&stacked_spectrum, &union).unwrap_or(f64::INFINITY);
    if mismatch > ORACLE_TOL {
        return Err(Error::SpectrumMismatch(mismatch));
    }
    Ok(OracleReport {
        sync_block,
        blocks,
        stacked_spectrum,
        mismatch,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SyncSummary {
    pub initial_sync_error: f64,
    pub final_sync_error: f64,
    pub final_time: f64,
    /// `final / initial` (zero when the agents start synchronized).
    pub ratio: f64,
    pub threshold: f64,
    /// First recorded time with `sync_error < threshold · initial`.
    pub time_to_threshold: Option<f64>,
    pub stopped_early: bool,
    pub samples: usize,
}

pub fn sync_metrics(tr: &Trajectory, threshold: f64) -> SyncSummary {
    let initial = tr.initial_sync_error();
    let fin = tr.final_sync_error();
    let time_to_threshold = if initial == 0.0 {
        tr.times.first().copied()
    } else {
        tr.times
            .iter()
            .zip(&tr.sync_error)
            .find(|(_, e)| **e < threshold * initial)
            .map(|(t, _)| *t)
    };
    SyncSummary {
        initial_sync_error: initial,
        final_sync_error: fin,
        final_time: tr.times.last().copied().unwrap_or(0.0),
        ratio: if initial > 0.0 { fin / initial } else { 0.0 },
        threshold,
        time_to_threshold,
        stopped_early: tr.stopped_early,
        samples: tr.len(),
    }
}

/// Error states `x_ij − x_1j` for agents `i ≥ 2`, one matrix per recorded time.
pub fn pair_errors(tr: &Trajectory) -> Vec<DMatrix<f64>> {
    tr.states
        .iter()
        .map(|x| {
            let first = x.row(0).into_owned();
            DMatrix::from_fn(x.nrows().saturating_sub(1), x.ncols(), |i, j| {
                x[(i + 1, j)] - first[j]
            })
        })
        .collect()
}

/// `t,agent,state_index,value` with 1-based agent and state indices.
pub fn write_trajectory_csv<W: Write>(tr: &Trajectory, out: W) -> Result<()> {
    write_long_csv(&tr.times, &tr.states, 1, out)
}

/// Error states in the same long format as [`write_trajectory_csv`]; agents
/// are numbered from 2.
pub fn write_error_states_csv<W: Write>(tr: &Trajectory, out: W) -> Result<()> {
    write_long_csv(&tr.times, &pair_errors(tr), 2, out)
}

fn write_long_csv<W: Write>(
    times: &[f64],
    values: &[DMatrix<f64>],
    first_agent: usize,
    out: W,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "t,agent,state_index,value")?;
    for (t, x) in times.iter().zip(values) {
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                writeln!(out, "{},{},{},{}", t, i + first_agent, j + 1, x[(i, j)])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_sync_error_csv<W: Write>(tr: &Trajectory, out: W) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "t,sync_error")?;
    for (t, e) in tr.times.iter().zip(&tr.sync_error) {
        writeln!(out, "{t},{e}")?;
    }
    out.flush()?;
    Ok(())
}
