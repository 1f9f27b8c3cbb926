#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
//! Reduction of metastable randomly perturbed maps to finite Markov chains.
//!
//! A map Π with N stable fixed points, perturbed by Gaussian noise of size
//! σ, spends exponentially long times near each stable point. This crate
//! discretizes the transition kernel, traces it on small balls around the
//! stable points and builds the N×N chain that reproduces the jumps
//! between balls. Each step of the construction is checked against exact
//! linear algebra and against simulation.
//!
//! ```
//! use metareduce::config::RunConfig;
//! use metareduce::pipeline::{cmd_reduce, Context};
//!
//! let dir = tempfile::tempdir().unwrap();
//! let mut cfg = RunConfig::from_json(r#"{
//!     "schema_version": 1, "map": {"kind": "tanh", "beta": 2.0}, "dim": 1,
//!     "covariance": [[1.0]], "sigma": 0.35, "bounds": [[-2.0, 2.0]],
//!     "nodes_per_axis": 201, "delta": 0.2, "r_hop": 1.0
//! }"#)?;
//! cfg.output_dir = dir.path().join("out");
//! cfg.cache_dir = dir.path().join("cache");
//! let outcome = cmd_reduce(&Context::new(cfg))?;
//! assert_eq!(outcome.summary["m"], 2);
//! # Ok::<(), metareduce::error::Error>(())
//! ```

pub mod config;
pub mod dynamics;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod montecarlo;
pub mod pipeline;
pub mod quasipotential;
pub mod reduction;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/kernel.md")]
    mod kernel {}
    #[doc = include_str!("../../../book/src/spectrum.md")]
    mod spectrum {}
    #[doc = include_str!("../../../book/src/quasipotential.md")]
    mod quasipotential {}
    #[doc = include_str!("../../../book/src/reduction.md")]
    mod reduction {}
    #[doc = include_str!("../../../book/src/montecarlo.md")]
    mod montecarlo {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/validation.md")]
    mod validation {}
}
