//! Reference example data: a continuous-time and a discrete-time agent with
//! hand-designed protocol parameters, and the 60-agent directed cycle.

use nalgebra::DMatrix;

use crate::graph::DiGraph;
use crate::model::{LtiModel, TimeDomain};
use crate::structure::PreCompensator;

fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, v)
}

pub fn ct_agent() -> LtiModel {
    LtiModel::new(
        m(3, 3, &[0.0, 1.0, 1.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
        DMatrix::identity(3, 3),
        m(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        TimeDomain::Continuous,
    )
    .expect("valid example model")
}

pub fn ct_precompensator() -> PreCompensator {
    PreCompensator::new(
        m(1, 1, &[-2.0]),
        m(1, 1, &[1.0]),
        m(3, 1, &[0.0, 0.0, 1.0]),
        m(3, 1, &[0.0, 1.0, 0.0]),
    )
    .expect("valid example pre-compensator")
}

/// Certificate for the compensated continuous-time agent.
pub fn ct_p() -> DMatrix<f64> {
    m(
        4,
        4,
        &[
            1.0, 0.0, -1.0, -0.6, //
            0.0, 1.0, 1.0, 0.2, //
            -1.0, 1.0, 3.0, 1.3, //
            -0.6, 0.2, 1.3, 2.0,
        ],
    )
}

pub fn ct_s_inv() -> DMatrix<f64> {
    m(
        4,
        4,
        &[
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, -1.0, 0.0, 1.0,
        ],
    )
}

pub fn ct_b_tilde() -> DMatrix<f64> {
    m(4, 1, &[0.0, 1.0, 0.0, 1.0])
}

pub fn ct_a11() -> DMatrix<f64> {
    m(3, 3, &[0.0, 0.0, 1.0, -1.0, -2.0, 1.0, 0.0, -1.0, 0.0])
}

pub fn ct_a12() -> DMatrix<f64> {
    m(3, 1, &[1.0, 2.0, 1.0])
}

pub fn ct_h() -> DMatrix<f64> {
    m(3, 1, &[1.0, 0.0, 1.0])
}

pub fn ct_c_bar() -> DMatrix<f64> {
    m(1, 3, &[1.0, 0.0, 0.0])
}

pub fn dt_agent() -> LtiModel {
    LtiModel::new(
        m(3, 3, &[0.0, 1.0, 1.0, -1.0, 0.0, 1.0, 0.0, 0.0, 1.0]),
        m(3, 1, &[0.0, 0.0, 1.0]),
        m(1, 3, &[1.0, 0.0, 0.0]),
        TimeDomain::Discrete,
    )
    .expect("valid example model")
}

pub fn dt_h() -> DMatrix<f64> {
    m(3, 1, &[0.5, -0.5, 0.4])
}

pub fn dt_p() -> DMatrix<f64> {
    m(3, 3, &[1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 2.0])
}

pub const DT_DELTA: f64 = 0.1;

/// Directed cycle on 60 agents: agent `i` listens to agent `i − 1`, agent 1 to agent 60.
pub fn cycle60() -> DiGraph {
    DiGraph::cycle(60).expect("valid cycle")
}

/// A small four-agent graph with a spanning tree rooted at agent 1
/// (1→2, 2→3, 2→4, 4→3). Illustrative only.
pub fn four_agent_graph() -> DiGraph {
    DiGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0), (3, 2, 1.0)])
        .expect("valid graph")
}
