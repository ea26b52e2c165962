//! Numerical laboratory for gradient flows on discretized planar metric
//! measure spaces.
//!
//! The crate builds masked grid approximations of planar domains `Y` inside an
//! ambient square `X`, constructs defining potentials of locally κ-convex sets,
//! applies the conformal convexification transform `φ = exp(-κ'V)`, simulates
//! gradient flows of potentials, evolves the Neumann heat flow on `Y` and
//! compares it with the entropic minimizing-movement (JKO) scheme for the
//! Boltzmann entropy.
//!
//! Module map:
//!
//! | module          | contents                                                   |
//! |-----------------|------------------------------------------------------------|
//! | [`grid`]        | masked grids, graph metrics `d` and `d_Y`, geodesic tracing |
//! | [`potentials`]  | exterior-ball and signed-distance potentials, audits        |
//! | [`conformal`]   | conformal factors, `φ_k` sequences, containment, constants  |
//! | [`evi`]         | point gradient flows, projection, contraction tests         |
//! | [`heat`]        | Neumann operator, Cheeger energy, implicit heat flow        |
//! | [`transport`]   | entropy, W₂ solvers, JKO, slopes, EDE residuals             |
//! | [`experiment`]  | config-driven experiments and reports                       |

pub mod conformal;
pub mod error;
pub mod evi;
pub mod experiment;
pub mod grid;
pub mod heat;
pub mod io;
pub mod linalg;
pub mod potentials;
pub mod trajectory;
pub mod transport;

pub use error::{Error, Result};
pub use grid::{DomainSpec, Fixture, GridDomain, NodeKind, PathPolyline, Point, Stencil, Weighting};
pub use potentials::Potential;
pub use conformal::MetricField;
pub use heat::NeumannOperator;
pub use trajectory::FlowTrajectory;
pub use transport::{CostMatrix, DiscreteMeasure};
