//! Optimal transport on graph metrics: measures, costs, exact and entropic
//! solvers, minimizing movements, slope estimators and convexity probes.

mod cost;
mod exact;
mod jko;
mod measure;
mod probe;
mod sinkhorn;
mod slope;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use cost::{CostMatrix, MetricTag};
pub use exact::{solve_exact, EXACT_SUPPORT_LIMIT};
pub use jko::{jko_step, EntropicOptions, JkoScheme, JkoSolver, JkoStep, MirrorOptions, MIRROR_SUPPORT_LIMIT};
pub use measure::{entropy, DiscreteMeasure, MASS_TOL};
pub use probe::{entropy_convexity_probe, ConvexityProbe};
pub use sinkhorn::{solve_sinkhorn, SinkhornOptions, SINKHORN_TOL};
pub use slope::{
    descending_slope_estimate, ede_residual, entropy_dissipation, fisher_information, linearized_distance, slope_extrapolation, tangent_norm, EdeReport,
    SlopeEstimate, SpeedEstimator,
};

/// Transport solver choice for [`wasserstein2`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    ExactLp,
    Sinkhorn { epsilon: f64 },
}

/// Optimal (or entropic) coupling between two measures on a cost support.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `⟨C, π⟩`
    pub cost: f64,
    /// `√⟨C, π⟩`
    pub distance: f64,
    /// `(i, j, mass)` triples over support positions, sorted.
    pub coupling: Vec<(usize, usize, f64)>,
    /// Set for entropic solutions.
    pub approximate: bool,
    /// `⟨C, π⟩ + ε KL(π | μ⊗ν)` for entropic solutions.
    pub regularized_value: Option<f64>,
    pub dual_value: Option<f64>,
    /// LP dual potentials `(u, v)` on all positions with `u_i + v_j <= C_ij`.
    pub potentials: Option<(Vec<f64>, Vec<f64>)>,
    pub iterations: usize,
}

impl TransportPlan {
    /// Writes `source,target,mass` rows using domain node indices.
    pub fn write_csv<W: Write>(&self, cost: &CostMatrix, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["source", "target", "mass"])?;
        for &(i, j, m) in &self.coupling {
            wtr.serialize((cost.nodes()[i], cost.nodes()[j], m))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Quadratic Wasserstein distance under `cost`.
pub fn wasserstein2(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &CostMatrix, method: Method) -> Result<TransportPlan> {
    check_pair(mu, nu, cost)?;
    match method {
        Method::ExactLp => solve_exact(mu, nu, cost),
        Method::Sinkhorn { epsilon } => solve_sinkhorn(mu, nu, cost, &SinkhornOptions::new(epsilon)),
    }
}

fn check_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &CostMatrix) -> Result<()> {
    if mu.len() != cost.len() || nu.len() != cost.len() {
        return Err(crate::Error::InvalidMeasure(format!("measures on {} and {} nodes, cost on {}", mu.len(), nu.len(), cost.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
