pub mod data;
pub mod em;
pub mod error;
pub mod evaluation;
pub mod glasso;
pub mod latent;
pub mod normal;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
