//! Benchmark environments: a 12-state counter-example where masking only at
//! policy extraction is provably suboptimal, a parameterized decision-ladder
//! family that scales that effect with depth, and a ring-road highway with
//! IDM longitudinal dynamics.

pub mod counterexample;
pub mod highway;
pub mod random;
pub mod tree;
