//! Parameters, the autodiff tape, encoders and decoders.

pub mod checkpoint;
pub mod encoder;
pub mod graph;
pub mod params;
pub mod score;
pub mod tape;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, vocab_digest, CheckpointHeader};
pub use encoder::{encode, encode_any, encode_fused, encode_on_tape, EncodedGraph, EncodedVars, ParamVars};
pub use graph::{Adjacency, DirectedEdges};
pub use params::{Activation, Composition, LayerWeights, ModelParams, ModelShape, ScoreFn};
pub use score::{score, score_on_tape};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Matrix;
