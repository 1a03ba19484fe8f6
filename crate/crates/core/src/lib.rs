//! Field-road reaction-diffusion on conical and asymptotically conical fields.
//!
//! The field is the epigraph `{y >= rho(x)}` of a road curve, the road is its
//! boundary. A density `v` diffuses and reacts in the field, a density `u`
//! diffuses along the road, and the two exchange mass through the boundary:
//!
//! ```text
//! u_t - D (1/tau) d_x((1/tau) d_x u) = nu v - mu u        on the road
//! v_t - d Laplace(v)                 = f(v)               in the field
//! d d_n v                            = mu u - nu v        on the road
//! ```
//!
//! with `tau = sqrt(1 + rho'^2)` and `n` the outward normal.
//!
//! The crate provides
//!
//! * [`dispersion`]: the algebraic speed systems and the speeds `c_KPP`,
//!   `c_BRR` and `c_L`;
//! * [`certificates`]: explicit super- and subsolutions with numerically
//!   verified margins;
//! * [`solver`]: a conservative explicit finite-volume integrator on the
//!   sheared strip;
//! * [`analysis`]: front tracking and speed fits;
//! * [`cli`]: the `fieldroad` command-line tool.

pub mod analysis;
pub mod certificates;
pub mod cli;
pub mod dispersion;
pub mod geometry;
pub mod model;
pub mod solver;

pub use geometry::Geometry;
pub use model::{ModelParams, Reaction};

/// Crate version written into output headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// Guide chapters, compiled so that their snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/dispersion.md")]
    mod dispersion {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/fronts.md")]
    mod fronts {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
