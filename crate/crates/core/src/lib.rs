//! Computations with towers of weighted semisimple categories, unitary
//! connections between them, and the natural-transformation sequences the
//! connections transport.
//!
//! The objects handled here are finitely presented: a tower is a pre-period
//! followed by a repeating period whose weights scale by a fixed
//! Perron–Frobenius factor. On top of the towers sit block-unitary
//! connections; between parallel connections sit natural-transformation
//! spaces with a distinguished family of unital completely positive "loop"
//! maps. Fixed-point and peripheral-spectrum analysis of those maps yields
//! the bounded transformation sequences and their flat part; an independent
//! path-space module realization cross-checks every coordinate convention.
//!
//! Module layout:
//! - [`semisimple`]: weighted categories, graph functors, block natural
//!   transformations, duality (cup/cap) data, traces.
//! - [`bratteli`]: towers of categories and functors, validation,
//!   Perron–Frobenius utilities, multi-matrix algebra bookkeeping.
//! - [`connection`]: block-unitary connections, validation, fusion,
//!   builders for vertex models and graph self-connections.
//! - [`twocell`]: natural-transformation spaces between parallel
//!   connections, the loop operator and its adjoint, the exchange relation.
//! - [`harmonic`]: peripheral-spectrum analysis, bounded harmonic
//!   sequences, flatness certification, composition of sequences.
//! - [`bimodule`]: the path-space module oracle certifying the loop
//!   operator's coordinates.

pub mod bimodule;
pub mod bratteli;
pub mod connection;
pub mod error;
pub mod harmonic;
pub mod linalg;
pub mod semisimple;
pub mod twocell;

pub use error::{Error, Result};

/// Default residual tolerance used when a caller does not supply one.
pub const DEFAULT_TOL: f64 = 1e-9;
