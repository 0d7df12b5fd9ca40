//! Tile-based level generation for a platformer and a dungeon crawler.
//!
//! A genome (either a CPPN or a flat latent vector) is decoded through a
//! generator network into tile grids, scored by game-specific measures and a
//! solver, and kept in a MAP-Elites archive.

pub mod corpus;
pub mod cppn;
pub mod encodings;
pub mod error;
pub mod grid;
pub mod mario;
pub mod qd;
pub mod tensor_gen;
pub mod zelda;

pub use error::{Error, Result};
pub use grid::TileGrid;
