//! Lower bounds and near-optimal solutions for the optimal connecting tree
//! problem: minimize `tr D(T) A` over trees `T` with a prescribed degree
//! sequence, where `A` is a symmetric nonnegative flow matrix.

pub mod conic;
pub mod error;
pub mod generate;
pub mod graph;
pub mod heuristics;
pub mod huffman;
pub mod io;
pub mod lb;
pub mod spectral;
pub mod validate;

pub use error::{Error, Result};
