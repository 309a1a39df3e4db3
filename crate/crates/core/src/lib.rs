//! Scale-free synchronization protocols for networks of identical linear agents.
//!
//! The crate covers the full pipeline: graph matrices, structural checks on the
//! agent model, Lyapunov certificates, special coordinate basis decomposition of
//! pre-compensated agents, synthesis of the four protocol variants, closed-loop
//! network simulation and spectral verification sweeps.

pub mod error;
pub mod fixtures;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod netsim;
pub mod place;
pub mod protocol;
pub mod structure;
pub mod verify;
pub mod zeros;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use graph::{DiGraph, GraphSpec, Laplacian, RowStochastic};
pub use lyapunov::{Certificate, CertificateKind, SlackReport};
pub use model::{LtiModel, StructuralReport, TimeDomain};
pub use netsim::{Scenario, SyncSummary, Trajectory};
pub use protocol::{
    CtFullProtocol, CtPartialProtocol, DtFullProtocol, DtPartialProtocol, NodeDynamics, Protocol,
    ProtocolKind, SynthOptions,
};
pub use structure::{CompensatedAgent, Lemma1Report, PreCompensator, ScbForm};
pub use verify::{NecessityAudit, SweepReport};
