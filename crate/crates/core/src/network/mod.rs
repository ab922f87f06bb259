pub mod io;
pub mod model;
pub mod params;
pub mod spec;

pub use io::{
    import_text_weights, load_params, parse_params, parse_text_dump, save_params, write_params, DumpedTensor,
    ImportReport,
};
pub use model::{network_backward, network_forward, ForwardPass, Network};
pub use params::{Gradients, LayerGrads, LayerParams, ParameterSet};
pub use spec::{InputShape, LayerSpec, NetworkSpec};
