//! Implicit symplectic maps and integrators built from constant Liouvillian
//! one-forms, with numerical certification of the resulting schemes.
//!
//! The pipeline runs form → symmetric matrix `S` → induced map
//! `ρ(z, Z) = B z + C Z` → one-step scheme `z_h = z₀ + h X_H(ρ(z₀, z_h))`.

pub mod dynamics;
pub mod error;
pub mod forms;
pub mod induced_map;
pub mod integrate;
pub mod linalg;
pub mod verify;

pub use error::{Error, Result};
pub use forms::{FormKind, LiouvillianForm, ProductForm};
pub use induced_map::{InducedMap, MapClass};
pub use linalg::SquareMatrix;
