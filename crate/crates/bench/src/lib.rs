//! Shared inputs for the benchmarks.

use scalesync_core::netsim::Scenario;
use scalesync_core::protocol::{synth_ct_full, synth_ct_partial, synth_dt_full, synth_dt_partial};
use scalesync_core::{fixtures, DiGraph, Protocol, SynthOptions};

/// The four protocol variants synthesized for the reference agents with
/// automatic gains.
pub fn reference_protocols() -> Vec<Protocol> {
    let o = SynthOptions::default();
    vec![
        Protocol::CtFull(synth_ct_full(&fixtures::ct_agent(), &o).expect("reference CT agent")),
        Protocol::CtPartial(
            synth_ct_partial(&fixtures::ct_agent(), &fixtures::ct_precompensator(), &o)
                .expect("reference CT agent"),
        ),
        Protocol::DtFull(synth_dt_full(&fixtures::dt_agent(), &o).expect("reference DT agent")),
        Protocol::DtPartial(synth_dt_partial(&fixtures::dt_agent(), &o).expect("reference DT agent")),
    ]
}

/// Fixed-length run on a directed cycle: `steps` integration or update steps,
/// recording only the endpoints.
pub fn cycle_scenario(protocol: Protocol, agents: usize, steps: usize) -> Scenario {
    let mut s = Scenario::seeded(protocol, DiGraph::cycle(agents).expect("cycle"), 1);
    s.horizon = match s.protocol.time_domain() {
        scalesync_core::TimeDomain::Continuous => steps as f64 * s.dt,
        scalesync_core::TimeDomain::Discrete => steps as f64,
    };
    s.record_every = steps.max(1);
    s
}
