//! A logic runtime whose programs are binarized so that continuations are
//! plain terms, plus the networking needed to move those continuations
//! between nodes.

pub mod batch;
pub mod binarizer;
pub mod cli;
pub mod continuation;
pub mod engine;
pub mod events;
pub mod linda;
pub mod mobility;
pub mod node;
pub mod store;
pub mod term;
pub mod wire;

use std::sync::Arc;

pub use engine::{Runtime, RuntimeConfig};

/// A runtime with the network and mobility builtins installed.
pub fn runtime(cfg: RuntimeConfig) -> Arc<Runtime> {
    let rt = Runtime::new(cfg);
    node::install(&rt);
    mobility::install(&rt);
    rt
}
