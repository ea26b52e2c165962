//! Log-domain Sinkhorn iterations for entropically regularized transport.

use crate::error::{Error, Result};

use super::{CostMatrix, DiscreteMeasure, TransportPlan};

/// Marginal error (L¹) at which Sinkhorn stops.
pub const SINKHORN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Start the ε-scaling schedule at this value (halved per stage).
    pub epsilon_start: Option<f64>,
}

impl SinkhornOptions {
    pub fn new(epsilon: f64) -> Self {
        SinkhornOptions { epsilon, tol: SINKHORN_TOL, max_iter: 100_000, epsilon_start: None }
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Potentials `(f, g)` on the supports of `mu` and `nu`; the plan is
/// `π_ij = μ_i ν_j exp((f_i + g_j - C_ij)/ε)`.
struct Scaling {
    src: Vec<usize>,
    snk: Vec<usize>,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    c: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl Scaling {
    fn update_f(&mut self, eps: f64) {
        let n2 = self.snk.len();
        for i in 0..self.src.len() {
            let row = &self.c[i * n2..(i + 1) * n2];
            let lse = log_sum_exp((0..n2).map(|j| self.log_b[j] + (self.g[j] - row[j]) / eps));
            self.f[i] = -eps * lse;
        }
    }

    fn update_g(&mut self, eps: f64) {
        let n2 = self.snk.len();
        for j in 0..n2 {
            let lse = log_sum_exp((0..self.src.len()).map(|i| self.log_a[i] + (self.f[i] - self.c[i * n2 + j]) / eps));
            self.g[j] = -eps * lse;
        }
    }

    /// L¹ error of the row marginal (columns are exact right after `update_g`).
    fn row_error(&self, eps: f64) -> f64 {
        let n2 = self.snk.len();
        (0..self.src.len())
            .map(|i| {
                let row = &self.c[i * n2..(i + 1) * n2];
                let s = (0..n2).map(|j| (self.log_b[j] + (self.f[i] + self.g[j] - row[j]) / eps).exp()).sum::<f64>();
                self.log_a[i].exp() * (s - 1.0).abs()
            })
            .sum()
    }
}

pub fn solve_sinkhorn(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &CostMatrix, opts: &SinkhornOptions) -> Result<TransportPlan> {
    if !(opts.epsilon > 0.0 && opts.epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("Sinkhorn epsilon must be positive, got {}", opts.epsilon)));
    }
    let src = mu.support();
    let snk = nu.support();
    let n2 = snk.len();
    let c: Vec<f64> = src.iter().flat_map(|&i| snk.iter().map(move |&j| cost.get(i, j))).collect();
    let mut s = Scaling {
        log_a: src.iter().map(|&i| mu.mass()[i].ln()).collect(),
        log_b: snk.iter().map(|&j| nu.mass()[j].ln()).collect(),
        f: vec![0.0; src.len()],
        g: vec![0.0; n2],
        c,
        src,
        snk,
    };
    let mut eps = opts.epsilon_start.unwrap_or(opts.epsilon).max(opts.epsilon);
    let mut iterations = 0;
    loop {
        let last = eps <= opts.epsilon;
        let tol = if last { opts.tol } else { opts.tol.max(1e-6) };
        let mut err = f64::INFINITY;
        while iterations < opts.max_iter {
            s.update_f(eps);
            s.update_g(eps);
            iterations += 1;
            if iterations % 5 == 0 || iterations == opts.max_iter {
                err = s.row_error(eps);
                if err < tol {
                    break;
                }
            }
        }
        if err >= tol {
            return Err(Error::NoConvergence { iterations, residual: err });
        }
        if last {
            break;
        }
        eps = (eps * 0.5).max(opts.epsilon);
    }

    let mut coupling = Vec::new();
    let (mut primal, mut kl) = (0.0, 0.0);
    for (a, &i) in s.src.iter().enumerate() {
        for (b, &j) in s.snk.iter().enumerate() {
            let cij = s.c[a * n2 + b];
            let log_ratio = (s.f[a] + s.g[b] - cij) / eps;
            let p = (s.log_a[a] + s.log_b[b] + log_ratio).exp();
            if p > 0.0 {
                coupling.push((i, j, p));
                primal += p * cij;
                kl += p * log_ratio;
            }
        }
    }
    Ok(TransportPlan {
        cost: primal,
        distance: primal.sqrt(),
        coupling,
        approximate: true,
        regularized_value: Some(primal + eps * kl),
        dual_value: Some(s.src.iter().enumerate().map(|(a, &i)| mu.mass()[i] * s.f[a]).sum::<f64>() + s.snk.iter().enumerate().map(|(b, &j)| nu.mass()[j] * s.g[b]).sum::<f64>()),
        potentials: None,
        iterations,
    })
}
