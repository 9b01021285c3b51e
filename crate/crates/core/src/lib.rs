#![no_std]
// Index loops mirror the component formulas; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cylinder;
pub mod flow;
pub mod fourier;
pub mod high_energy;
pub mod linalg;
pub mod normal_form;
pub mod ode;
pub mod orbit_min;
pub mod periodic;
pub mod resonance;
pub mod system;
