//! Multi-party computation over additive secret shares in the ring of
//! 64-bit integers, with fixed-point encoding of reals.

pub mod approx;
pub mod arith;
pub mod binary;
pub mod compare;
pub mod convert;
pub mod dealer;
pub mod error;
pub mod nn;
pub mod party;
pub mod ring;
pub mod sampler;
pub mod shares;
pub mod transport;

pub use approx::{ApproxConfig, Initial};
pub use binary::SumMode;
pub use compare::ArgmaxMethod;
pub use error::{Error, Result};
pub use party::{collect_results, simulate, simulate_with_seeds, Party, PartyConfig};
pub use ring::{FixedPointEncoder, RingTensor};
pub use shares::{ArithShare, BinShare};
