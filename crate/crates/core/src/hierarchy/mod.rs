//! Multi-timescale networks: clock plans, wiring tables and the stateful runtime.

mod clocks;
mod network;
mod spec;

pub use clocks::{derive_clocks, derive_clocks_with, Boundaries, ClockPlan};
pub use network::{
    build_network, hrnn_forward, ForwardOutput, Network, NetworkParams, NetworkState, StepTape, INIT_SCALE,
};
pub use spec::{LayerWiring, NetworkSpec, Source, Variant, Wiring};
