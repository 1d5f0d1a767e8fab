//! Streaming prototype-based test-time adaptation over precomputed
//! embeddings, with a zero-shot baseline, an entropy-filtered cache
//! baseline, a seeded shift generator and an online evaluation harness.

pub mod adapter;
pub mod cache;
pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod pta;
pub mod stream;
pub mod synthetic;
pub mod vector;
pub mod zero_shot;

pub use adapter::{Adapter, Observation, ZeroShot};
pub use cache::{CacheAdapter, CacheConfig};
pub use error::{Error, Result};
pub use pta::{Pta, PtaConfig, PtaState};
pub use stream::Stream;
pub use vector::Matrix;
pub use zero_shot::TextAnchors;
