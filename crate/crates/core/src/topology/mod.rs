//! Network descriptions, builders and executable models.

mod builders;
mod gradcheck;
pub mod ledger;
mod model;
mod spec;

pub use builders::{
    build, build_lcnn, build_lcnn_with, build_vgg, build_vgg_with, build_xvector, build_xvector_with, BuildOptions,
    DEFAULT_DROPOUT, N_CLASSES, N_MELS,
};
pub use gradcheck::{check_model_gradients, TensorCheck};
pub use model::{Forward, Model, Param};
pub use spec::{InputLayout, LayerKind, LayerSpec, NetworkSpec, NormAxis, Topology};
