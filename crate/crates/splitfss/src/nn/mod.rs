//! Plaintext fixed-point CNN: layers, the split model halves, SGD, and
//! the independent reference implementations the tests check against.

pub mod layers;
pub mod model;
pub mod reference;

pub use layers::{conv2d, fc, maxpool2, relu};
pub use model::{
    argmax_rows, column_sum, init_models, sgd_momentum_step, ClientCache, ClientGrads, ClientModel,
    LayerKind, ModelArchitecture, ServerCache, ServerGrads, ServerModel,
};
