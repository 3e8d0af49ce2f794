//! Generating functions, g-convex duality, Monge–Ampère type measures and a
//! pinned semi-discrete solver for generated Jacobian equations.
//!
//! The crate is organised bottom-up:
//!
//! * [`generator`]: the generating function `g(x, y, z)`, its dual `g*`, the
//!   mappings `Y`, `Z` and the matrices `E`, `A`.
//! * [`gconvex`]: finite maxima of g-affine pieces and the g/g*-transforms.
//! * [`domain`]: g-segments, sections, the normalising coordinate frame and g-cones.
//! * [`measure`]: cell decompositions of dual functions and atoms of primal ones.
//! * [`solver`]: the pinned semi-discrete height iteration and partition refinement.
//! * [`verify`]: sampled checks of the structural conditions on a generator.
//! * [`flow`]: the parabolic height flow.

pub mod domain;
pub mod error;
pub mod flow;
pub mod gconvex;
pub mod generator;
pub mod geom;
pub mod measure;
pub mod solver;
pub mod tolerances;
pub mod verify;

pub use error::{Error, Result};
pub use generator::{GeneratorSpec, JetPoint};
