pub mod clip_io;
pub mod degrade;
pub mod diffops;
pub mod error;
pub mod identity;
pub mod landmark;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod reconstructor;
pub mod synthclip;
pub mod temporal;
pub mod trainer;

pub use error::{GavnError, Result};
pub use reconstructor::{GavnConfig, GavnModel, OutputPath, WindowInput};
pub use synthclip::{Clip, SceneParams};
pub use temporal::{AttentionTarget, WindowLayout};
