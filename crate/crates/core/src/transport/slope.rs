//! Fisher information, descending-slope estimates and energy-dissipation
//! residuals on the Neumann edge graph.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::heat::{heat_step, NeumannOperator};
use crate::linalg::conjugate_gradient;
use crate::trajectory::FlowTrajectory;

use super::{solve_exact, CostMatrix, DiscreteMeasure};

/// `4 Σ_e c_e (√ρ_i - √ρ_j)²`, the discrete `4∫|D√ρ|² dm` on Y-edges.
pub fn fisher_information(op: &NeumannOperator, mu: &DiscreteMeasure) -> f64 {
    let root: Vec<f64> = mu.density().iter().map(|r| r.sqrt()).collect();
    4.0 * op.edges().iter().zip(op.conductances()).map(|(&(a, b), c)| c * (root[a] - root[b]).powi(2)).sum::<f64>()
}

/// `Σ_e c_e (ρ_i - ρ_j)(log ρ_i - log ρ_j)`, the entropy dissipation rate of the
/// discrete heat flow.
pub fn entropy_dissipation(op: &NeumannOperator, mu: &DiscreteMeasure) -> f64 {
    let rho = mu.density();
    op.edges()
        .iter()
        .zip(op.conductances())
        .map(|(&(a, b), c)| {
            let (x, y) = (rho[a], rho[b]);
            if x == y {
                0.0
            } else if x <= 0.0 || y <= 0.0 {
                f64::INFINITY
            } else {
                c * (x - y) * (x.ln() - y.ln())
            }
        })
        .sum()
}

fn log_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else if ((a - b) / (a + b)).abs() < 1e-6 {
        // series around the arithmetic mean
        let m = 0.5 * (a + b);
        let d = (a - b) / (a + b);
        m * (1.0 - d * d / 3.0)
    } else {
        (a - b) / (a.ln() - b.ln())
    }
}

/// Norm of a mass rate `r` (Σ r = 0) in the tangent space at density `rho`:
/// `√(ψᵀAψ)` where `A ψ = r` and `A = Σ_e c_e θ_e (δ_i - δ_j)(δ_i - δ_j)ᵀ` with
/// logarithmic-mean mobility `θ_e`.
pub fn tangent_norm(op: &NeumannOperator, rho: &[f64], rate: &[f64]) -> Result<f64> {
    let n = op.dimension();
    if rho.len() != n || rate.len() != n {
        return Err(Error::InvalidParameter(format!("tangent vectors need {n} entries")));
    }
    let weights: Vec<f64> = op.edges().iter().zip(op.conductances()).map(|(&(a, b), c)| c * log_mean(rho[a], rho[b])).collect();
    let scale = weights.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut diag = vec![scale / n as f64; n];
    for (&(a, b), w) in op.edges().iter().zip(&weights) {
        diag[a] += w;
        diag[b] += w;
    }
    let mean_rate = rate.iter().sum::<f64>() / n as f64;
    let rhs: Vec<f64> = rate.iter().map(|r| r - mean_rate).collect();
    if rhs.iter().all(|r| *r == 0.0) {
        return Ok(0.0);
    }
    // constants are the kernel; the rank-one term makes the system definite
    let apply = |x: &[f64], y: &mut [f64]| {
        let mean = x.iter().sum::<f64>() * scale / n as f64;
        y.iter_mut().for_each(|v| *v = mean);
        for (&(a, b), w) in op.edges().iter().zip(&weights) {
            let flux = w * (x[a] - x[b]);
            y[a] += flux;
            y[b] -= flux;
        }
    };
    let out = conjugate_gradient(apply, &rhs, None, &diag, 1e-12, 20 * n + 200)?;
    Ok(rhs.iter().zip(&out.solution).map(|(r, p)| r * p).sum::<f64>().max(0.0).sqrt())
}

/// Linearized transport distance: tangent norm of `ν - μ` at the midpoint density.
pub fn linearized_distance(op: &NeumannOperator, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    let mid: Vec<f64> = mu.density().iter().zip(nu.density()).map(|(a, b)| 0.5 * (a + b)).collect();
    let rate: Vec<f64> = nu.mass().iter().zip(mu.mass()).map(|(a, b)| a - b).collect();
    tangent_norm(op, &mid, &rate)
}

/// How transport distances between nearby measures are measured.
#[derive(Debug, Clone, Copy)]
pub enum SpeedEstimator<'a> {
    /// Linearized transport distance on the edge graph.
    Tangent,
    /// Exact `W₂` under a cost matrix.
    Wasserstein(&'a CostMatrix),
}

impl SpeedEstimator<'_> {
    pub fn distance(&self, op: &NeumannOperator, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
        match self {
            SpeedEstimator::Tangent => linearized_distance(op, mu, nu),
            SpeedEstimator::Wasserstein(cost) => Ok(solve_exact(mu, nu, cost)?.distance),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SpeedEstimator::Tangent => "tangent",
            SpeedEstimator::Wasserstein(_) => "wasserstein",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeEstimate {
    /// Largest `(Ent(μ) - Ent(ν))₊ / dist(μ, ν)` found.
    pub estimate: f64,
    pub best_kind: &'static str,
    pub best_distance: f64,
    pub candidates: usize,
}

fn heat_perturbation(op: &NeumannOperator, mu: &DiscreteMeasure, s: f64) -> Result<DiscreteMeasure> {
    let f = heat_step(op, &mu.density(), s)?;
    DiscreteMeasure::from_density(&f, op.measure())
}

/// Heat perturbation of `mu` at distance `radius` (found by bisection on the
/// heat time), with its entropy decrease ratio.
fn heat_ratio_at(op: &NeumannOperator, mu: &DiscreteMeasure, dist: SpeedEstimator, radius: f64) -> Result<Option<(f64, f64)>> {
    let ent = mu.entropy();
    let (mut lo, mut hi) = (0.0, 1e-6);
    let mut d_hi = dist.distance(op, mu, &heat_perturbation(op, mu, hi)?)?;
    while d_hi < radius {
        if hi > 10.0 {
            // the whole heat orbit stays inside the ball
            return Ok(None);
        }
        lo = hi;
        hi *= 4.0;
        d_hi = dist.distance(op, mu, &heat_perturbation(op, mu, hi)?)?;
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if dist.distance(op, mu, &heat_perturbation(op, mu, mid)?)? <= radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        return Ok(None);
    }
    let nu = heat_perturbation(op, mu, lo)?;
    let d = dist.distance(op, mu, &nu)?;
    if d == 0.0 {
        return Ok(None);
    }
    Ok(Some(((ent - nu.entropy()).max(0.0) / d, d)))
}

/// Lower estimate of the descending slope of the entropy at `mu`: the best
/// ratio over heat-flow perturbations and random single-edge mass moves
/// within `radius`.
pub fn descending_slope_estimate<R: Rng>(
    op: &NeumannOperator,
    mu: &DiscreteMeasure,
    dist: SpeedEstimator,
    radius: f64,
    samples: usize,
    rng: &mut R,
) -> Result<SlopeEstimate> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    let ent = mu.entropy();
    let mut best = SlopeEstimate { estimate: 0.0, best_kind: "none", best_distance: 0.0, candidates: 0 };
    for frac in [1.0, 0.5, 0.25] {
        if let Some((ratio, d)) = heat_ratio_at(op, mu, dist, radius * frac)? {
            best.candidates += 1;
            if ratio > best.estimate {
                best = SlopeEstimate { estimate: ratio, best_kind: "heat", best_distance: d, candidates: best.candidates };
            }
        }
    }
    let edges = op.edges();
    for _ in 0..samples {
        let (a, b) = edges[rng.gen_range(0..edges.len())];
        let (from, to) = if rng.gen::<bool>() { (a, b) } else { (b, a) };
        let avail = mu.mass()[from];
        if avail <= 0.0 {
            continue;
        }
        let mut delta = avail * rng.gen_range(0.01..1.0);
        let mut candidate = None;
        for _ in 0..60 {
            let mut w = mu.mass().to_vec();
            w[from] -= delta;
            w[to] += delta;
            let nu = DiscreteMeasure::normalized(w, mu.node_measure().to_vec())?;
            let d = dist.distance(op, mu, &nu)?;
            if d <= radius {
                candidate = Some((nu, d));
                break;
            }
            delta *= 0.5;
        }
        if let Some((nu, d)) = candidate {
            best.candidates += 1;
            let ratio = (ent - nu.entropy()).max(0.0) / d;
            if d > 0.0 && ratio > best.estimate {
                best = SlopeEstimate { estimate: ratio, best_kind: "edge_move", best_distance: d, candidates: best.candidates };
            }
        }
    }
    Ok(best)
}

/// Heat-direction slope ratios at each radius and the Richardson
/// extrapolation `2R(r/2) - R(r)` from the two smallest radii (radii must be
/// halving).
pub fn slope_extrapolation(op: &NeumannOperator, mu: &DiscreteMeasure, dist: SpeedEstimator, radii: &[f64]) -> Result<(Vec<f64>, f64)> {
    if radii.len() < 2 {
        return Err(Error::InvalidParameter("extrapolation needs at least two radii".into()));
    }
    let mut ratios = Vec::with_capacity(radii.len());
    for &r in radii {
        ratios.push(heat_ratio_at(op, mu, dist, r)?.map(|x| x.0).unwrap_or(0.0));
    }
    let k = ratios.len();
    Ok((ratios.clone(), 2.0 * ratios[k - 1] - ratios[k - 2]))
}

/// Energy-dissipation residual along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdeReport {
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    /// Metric speed `|μ̇|` by central differences (one-sided at the ends).
    pub speed: Vec<f64>,
    /// Squared slope via the Fisher information.
    pub slope_squared: Vec<f64>,
    /// `Ent(μ_t) + ½∫|μ̇|² + ½∫|D⁻Ent|² - Ent(μ₀)` (trapezoid rule).
    pub residual: Vec<f64>,
    pub estimator: &'static str,
}

impl EdeReport {
    /// Largest `|residual(t)| / |Ent(μ₀) - Ent(μ_t)|` over `t > 0`.
    pub fn worst_relative(&self) -> f64 {
        (1..self.times.len())
            .map(|k| self.residual[k].abs() / (self.entropy[0] - self.entropy[k]).abs())
            .fold(0.0, f64::max)
    }
}

pub fn ede_residual(traj: &FlowTrajectory, op: &NeumannOperator, speed: SpeedEstimator) -> Result<EdeReport> {
    let n = traj.len();
    if n < 2 {
        return Err(Error::InvalidParameter("EDE residual needs at least two samples".into()));
    }
    if traj.times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("trajectory times must increase strictly".into()));
    }
    let measures: Vec<DiscreteMeasure> = (0..n).map(|k| traj.measure(op, k)).collect::<Result<_>>()?;
    let entropy: Vec<f64> = measures.iter().map(DiscreteMeasure::entropy).collect();
    let slope_squared: Vec<f64> = measures.iter().map(|m| fisher_information(op, m)).collect();
    let mut speeds = Vec::with_capacity(n);
    for k in 0..n {
        let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
        let d = speed.distance(op, &measures[a], &measures[b])?;
        speeds.push(d / (traj.times[b] - traj.times[a]));
    }
    let mut residual = vec![0.0; n];
    let mut integral = 0.0;
    for k in 1..n {
        let dt = traj.times[k] - traj.times[k - 1];
        integral += 0.25 * dt * (speeds[k - 1].powi(2) + speeds[k].powi(2) + slope_squared[k - 1] + slope_squared[k]);
        residual[k] = entropy[k] + integral - entropy[0];
    }
    Ok(EdeReport { times: traj.times.clone(), entropy, speed: speeds, slope_squared, residual, estimator: speed.name() })
}
