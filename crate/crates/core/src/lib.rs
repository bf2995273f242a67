pub mod awig;
pub mod checkpoint;
pub mod conllu;
pub mod data;
pub mod dgat;
pub mod embeddings;
pub mod error;
pub mod fft;
pub mod gradcheck;
pub mod local;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod proposition;
pub mod rng;
pub mod span;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::Rng;
pub use span::Span;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
