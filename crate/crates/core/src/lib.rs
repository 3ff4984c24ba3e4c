//! Central-spin dynamic nuclear polarisation: spin algebra, PulsePol and NOVEL
//! propagators, nuclear channels and their repetition, transition amplitudes,
//! and NV-centre carbon cluster generation.
//!
//! Units: frequencies in MHz, times in µs, fields in mT, lengths in nm.
//! The crate is `no_std` with `alloc`; the `std` feature only enables runtime
//! CPU dispatch in the matrix kernels.

#![no_std]
// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod amplitudes;
pub mod clusters;
pub mod engine;
pub mod model;
pub mod sequences;
pub mod spinalg;

pub use model::{ElectronKind, ElectronModel, NuclearSpinParams, SpinSystem};
pub use sequences::{ChannelKraus, Protocol, SequenceSpec};
pub use spinalg::{ComplexMatrix, C64};
