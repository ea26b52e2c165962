use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridDomain;

use super::{solve_exact, CostMatrix, DiscreteMeasure};

/// Entropy along an approximate displacement interpolation against the
/// convexity bound `(1-t)Ent(μ₀) + t Ent(μ₁) - (K/2) t(1-t) W₂²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityProbe {
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    pub bound: Vec<f64>,
    /// `bound - entropy`; negative values are violations.
    pub margins: Vec<f64>,
    pub worst_margin: f64,
    pub w2_squared: f64,
    pub curvature: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Fraction of interpolated mass that sits on Ambient nodes at some time.
    pub ambient_mass: f64,
}

fn entropy_on(domain: &GridDomain, mass: &[f64]) -> f64 {
    mass.iter().zip(&domain.node_measure).filter(|(a, _)| **a > 0.0).map(|(a, m)| a * (a / m).ln()).sum()
}

/// Splits every coupled mass along the traced geodesic of `cost` at fractions
/// `t = j/steps`, distributing it linearly between the two nodes of the
/// segment containing arc length `t·L`. Passes iff every margin is at least
/// `-tol_factor·W₂²`.
pub fn entropy_convexity_probe(
    domain: &GridDomain,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    cost: &CostMatrix,
    steps: usize,
    curvature: f64,
    tol_factor: f64,
) -> Result<ConvexityProbe> {
    if steps == 0 {
        return Err(Error::InvalidParameter("probe needs at least one step".into()));
    }
    let plan = solve_exact(mu0, mu1, cost)?;
    let w2 = plan.cost;
    let times: Vec<f64> = (0..=steps).map(|j| j as f64 / steps as f64).collect();
    let mut interp = vec![vec![0.0; domain.len()]; times.len()];
    let mut k = 0;
    while k < plan.coupling.len() {
        let i = plan.coupling[k].0;
        let end = k + plan.coupling[k..].iter().take_while(|c| c.0 == i).count();
        let targets: Vec<usize> = plan.coupling[k..end].iter().map(|c| c.1).collect();
        let paths = cost.geodesics(domain, i, &targets)?;
        for (path, &(_, _, mass)) in paths.iter().zip(&plan.coupling[k..end]) {
            let total = path.total();
            for (slot, &t) in interp.iter_mut().zip(&times) {
                if path.nodes.len() == 1 || total == 0.0 {
                    slot[path.nodes[0]] += mass;
                    continue;
                }
                let target = t * total;
                let mut acc = 0.0;
                let mut placed = false;
                for (s, len) in path.lengths.iter().enumerate() {
                    if acc + len >= target || s + 1 == path.lengths.len() {
                        let lambda = if *len > 0.0 { ((target - acc) / len).clamp(0.0, 1.0) } else { 1.0 };
                        slot[path.nodes[s]] += mass * (1.0 - lambda);
                        slot[path.nodes[s + 1]] += mass * lambda;
                        placed = true;
                        break;
                    }
                    acc += len;
                }
                debug_assert!(placed);
            }
        }
        k = end;
    }
    let e0 = mu0.entropy();
    let e1 = mu1.entropy();
    let mut entropy = Vec::with_capacity(times.len());
    let mut bound = Vec::with_capacity(times.len());
    let mut margins = Vec::with_capacity(times.len());
    let mut ambient_mass: f64 = 0.0;
    for (slot, &t) in interp.iter().zip(&times) {
        let ent = if t == 0.0 {
            e0
        } else if t == 1.0 {
            e1
        } else {
            entropy_on(domain, slot)
        };
        let b = (1.0 - t) * e0 + t * e1 - 0.5 * curvature * t * (1.0 - t) * w2;
        ambient_mass = ambient_mass.max((0..domain.len()).filter(|&n| !domain.in_y(n)).map(|n| slot[n]).sum());
        entropy.push(ent);
        bound.push(b);
        margins.push(b - ent);
    }
    let worst_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let tolerance = tol_factor * w2;
    Ok(ConvexityProbe { times, entropy, bound, margins, worst_margin, w2_squared: w2, curvature, tolerance, pass: worst_margin >= -tolerance, ambient_mass })
}
