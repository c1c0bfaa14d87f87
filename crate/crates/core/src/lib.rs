//! Numerical toolkit for curvature-dimension, Li–Yau and Harnack estimates on the Heisenberg
//! groups `H^{2n+1}`, with the sub-Riemannian structure and its Riemannian approximations.

pub mod diffops;
pub mod geodesics;
pub mod heatkernel;
pub mod model_space;
pub mod polynomial;
pub mod quadrature;
pub mod verify;

pub use model_space::{Covector, ModelError, ModelSpace, Point};
