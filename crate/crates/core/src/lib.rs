//! Steady and evolutionary transmission problems of bidomain
//! electrocardiography on a heart disk inside a torso disk.
//!
//! The crate covers the geometry and P1 finite elements, second-order
//! Neumann/Dirichlet/mixed solves with a variational conormal trace, a
//! Tikhonov-regularized Cauchy solver and Green-representation potential on
//! the torso, the transmission null space, existence condition, calibration
//! and a fourth-order supplement on the heart, the Lamé instance, and the
//! reduced cable equation with heat potentials.

pub mod cauchy;
pub mod elasticity;
pub mod elliptic;
pub mod error;
pub mod fem;
pub mod field;
pub mod highorder;
pub mod mesh;
pub mod parabolic;
pub mod quadrature;
pub mod sparse;
pub mod spectral;
pub mod tensor;
pub mod transmission;
pub mod verify;

pub use error::{Error, Result};
pub use field::{BoundaryField, ScalarField};
pub use mesh::{build_disk_in_disk_mesh, BoundaryTag, Mesh2D, Point, Subdomain};
pub use tensor::SpdTensor2;
