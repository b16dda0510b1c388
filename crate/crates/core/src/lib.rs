//! Patent citation indicators and the D_FLEX paradigm-shift score.

pub mod aggregate;
pub mod analysis;
pub mod calibrate;
pub mod corpus;
pub mod error;
pub mod format;
pub mod indices;
pub mod normalize;
pub mod optim;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
