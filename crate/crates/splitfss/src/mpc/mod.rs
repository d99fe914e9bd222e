//! Additive sharing, trusted-dealer preprocessing, Beaver products and
//! the secure nonlinear gadgets.

pub mod maxpool;
pub mod relu;
pub mod share;
pub mod triple;

pub use maxpool::{
    make_maxpool_material, secure_maxpool2, secure_maxpool2_backward, MaxpoolMaterial, MaxpoolSigns,
};
pub use relu::{make_relu_material, open_masked, secure_relu, secure_relu_backward, ReluMaterial};
pub use share::{reconstruct, share, AdditiveShare};
pub use triple::{beaver_mul, make_elem_triple, make_matrix_triple, truncate_local, TripleHalf};
