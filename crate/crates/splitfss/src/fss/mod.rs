//! Function secret sharing: a function split into two keys such that each
//! key hides the function and locally evaluated shares sum to its output.

pub mod dcf;
pub mod dpf;
pub mod keys;
pub mod prg;

pub use keys::{deserialize_key, serialize_key, CorrectionWord, DcfKey, DpfKey, FssKey};
pub use prg::{PrgOutput, PrgSeed};
