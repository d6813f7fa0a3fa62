//! Discretized world-sheet mechanics.
//!
//! The crate samples a world sheet `r: D -> R^{N+1}` (Minkowski signature
//! `(-,+,...,+)`), a complex density amplitude `phi` and a candidate normal
//! field `n` on a uniform tensor-product grid over `D = [0,T] x D_1`, and
//! provides:
//!
//! * [`grid`]: the parameter grid, field storage, boundary data and the
//!   second-order finite-difference stencils,
//! * [`geometry`]: metric, normal frames, Christoffel symbols, second
//!   fundamental form, Riemann tensor, and the Gauss/Weingarten residuals,
//! * [`energy`]: quadrature of the curvature, Dirichlet and connection
//!   energies, the constraint penalties and the multiplier form,
//! * [`optimizer`]: finite-difference gradients, Armijo descent and penalty
//!   continuation with `O(1/K)` residual fits,
//! * [`causal`]: chronological/causal futures, achronality, boundaries,
//!   domains of dependence and Cauchy-surface checks on finite event sets,
//! * [`cli`]: scenario files and report writers behind the `worldsheet`
//!   binary.

pub mod causal;
pub mod cli;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod optimizer;

pub use error::{Error, Result};
pub use num_complex::Complex64;
