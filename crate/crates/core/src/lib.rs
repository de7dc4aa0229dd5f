//! N-body particle heuristic for the Euclidean traveling salesman problem.
//!
//! Cities become particles bound to each other by Lennard-Jones type pair
//! forces anchored at their initial separations. A growing inner wall and an
//! outer wall squeeze the system into a ring, and the angular order of the
//! particles on that ring is read back as a tour.
//!
//! - [`ljf`]: force functions and their geometric reparameterization
//! - [`instances`]: city sets, TSPLIB input, generators
//! - [`tour`]: tours, costs, ring extraction
//! - [`baselines`]: brute force, Held-Karp, nearest neighbour
//! - [`sim`]: the particle engine
//! - [`bench`]: experiment harness and CSV reports
//! - [`render`]: SVG output

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod baselines;
pub mod bench;
pub mod instances;
pub mod ljf;
pub mod render;
mod roots;
pub mod sim;
pub mod tour;

pub use instances::{CityInstance, DistanceMatrix, Point};
pub use ljf::{LjfCanonical, LjfShape};
pub use sim::{SimConfig, Variant};
pub use tour::Tour;
