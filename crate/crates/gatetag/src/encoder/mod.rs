//! Trainable text and graph encoders with exact reverse-mode gradients.
//!
//! Everything is built from one dense [`Matrix`] type and a small autograd
//! [`Tape`]; no numeric dependencies. The checkpoint format is documented
//! in [`checkpoint`]; gradient verification lives in [`gradcheck`].

mod checkpoint;
mod gradcheck;
mod matrix;
mod model;
mod optim;
mod tape;
mod tokenize;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, parse_checkpoint, restore, save_checkpoint,
    CheckpointError, CHECKPOINT_MAGIC,
};
pub use gradcheck::{finite_diff_check, GradCheckReport, GRAD_CHECK_TOL};
pub use matrix::Matrix;
pub use model::{
    encode_texts_frozen, grads_by_name, EncoderCfg, EncoderError, GraphBinding,
    GraphEncoderParams, GraphOut, Heads, HeadsBinding, TextBinding, TextEncoderParams,
};
pub use optim::Adam;
pub use tape::{Grads, NodeId, Tape};
pub use tokenize::{split_tokens, Tokenizer};
