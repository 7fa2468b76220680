//! Numerical laboratory for singular sets of Mumford-Shah minimizers in 3D.
//!
//! The crate provides four layers:
//!
//! * exact geometry of the three area-minimizing cones in `R^3` (a plane,
//!   three half-planes meeting at 120 degrees, and the cone over the edges
//!   of a regular tetrahedron), with closed-form point distances, ball
//!   areas, surface sampling and recentering ([`cone`]);
//! * metrics between discrete surface samples and cones: unilateral and
//!   bilateral Hausdorff distances, cone fitting, separation testing and
//!   density excess ([`metrics`]);
//! * a phase-field alternate-minimization solver that produces discrete
//!   minimizers `(u, K)` from volumetric data `g`, plus scene generators
//!   for the reference corpus ([`solver`], [`scene`]);
//! * the multiscale machinery evaluated on `(u, K)`: normalized jump,
//!   good/bad balls with stopping times, Vitali families, bad mass,
//!   competitor construction, and the decay checks that probe the
//!   regularity estimates ([`multiscale`], [`decay`]).

pub mod cone;
pub mod decay;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod lab;
pub mod metrics;
pub mod multiscale;
pub mod scene;
pub mod sets;
pub mod solver;

pub use cone::{ConeKind, MinimalCone, Spine, D_PLUS};
pub use error::{Error, Result};
pub use geometry::Ball;
pub use grid::ScalarGrid;
pub use sets::DiscreteSet;
