//! Optimal power, rate and distortion allocation for an energy-limited
//! sensor node that compresses Gaussian source samples and sends them over a
//! fading channel under delay, buffer and energy constraints.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod analysis;
pub mod constraints;
pub mod model;
pub mod solver;
pub mod waterfill;

pub use model::{
    burst_power_from_cap, cap_from_power, distortion_from_rate, power_from_cap, rate_from_distortion,
    total_distortion, BufferLimit, EnergyModel, ModelError, Policy, Scenario, Variant,
};
