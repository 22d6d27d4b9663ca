//! Frequency-domain compression of transformer activations, with sparse and
//! low-rank baselines, analysis metrics, and a queueing simulator for the
//! multi-client serving setting.

pub mod baselines;
pub mod container;
pub mod fourier;
pub mod metrics;
pub mod netsim;
pub mod rng;
pub mod spectral;
pub mod tensor;
