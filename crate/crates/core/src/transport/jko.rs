//! Minimizing-movement steps `argmin Ent(μ) + W₂²(μ, μ_k)/(2τ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{CostMatrix, DiscreteMeasure};

/// Entropic proximal scaling options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropicOptions {
    /// Final regularization; `None` means `ε = τ`.
    pub epsilon: Option<f64>,
    /// First stage of the geometric ε schedule (only used without a warm start).
    pub epsilon_start: f64,
    /// Stage ratio of the ε schedule.
    pub epsilon_ratio: f64,
    /// L¹ error of the fixed marginal at which a stage stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Run the transport term with `τ - ε/4` to offset the diffusion added by the regularization.
    pub blur_compensation: bool,
    /// Reweight the entropy reference so the uniform measure is an exact fixed point.
    pub balance_kernel: bool,
}

impl Default for EntropicOptions {
    fn default() -> Self {
        EntropicOptions { epsilon: None, epsilon_start: 1e-1, epsilon_ratio: 0.1, tol: 1e-9, max_iter: 50_000, blur_compensation: true, balance_kernel: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MirrorOptions {
    /// Stop when the simplex duality gap `⟨g, μ⟩ - min g` falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MirrorOptions {
    fn default() -> Self {
        MirrorOptions { tol: 1e-8, max_iter: 5000 }
    }
}

/// Supports up to this size fall back to mirror descent when scaling fails.
pub const MIRROR_SUPPORT_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "snake_case")]
pub enum JkoSolver {
    EntropicProximal(EntropicOptions),
    MirrorDescent(MirrorOptions),
}

impl Default for JkoSolver {
    fn default() -> Self {
        JkoSolver::EntropicProximal(EntropicOptions::default())
    }
}

/// Result of one minimizing-movement step. `transport_cost` is `⟨C, π⟩` of
/// the plan the solver produced, an upper bound on `W₂²(μ_{k+1}, μ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JkoStep {
    pub measure: DiscreteMeasure,
    pub entropy: f64,
    pub transport_cost: f64,
    pub objective: f64,
    pub iterations: usize,
    pub residual: f64,
}

struct EntropicState {
    eps: f64,
    tau_eff: f64,
    /// `log` of the entropy reference (node measures, possibly balanced).
    log_ref: Vec<f64>,
    /// Potentials divided by the current ε.
    f: Vec<f64>,
    g: Vec<f64>,
    warm: bool,
}

/// Sequential JKO scheme with warm-started potentials.
pub struct JkoScheme<'a> {
    cost: &'a CostMatrix,
    node_measure: Vec<f64>,
    tau: f64,
    solver: JkoSolver,
    entropic: Option<EntropicState>,
}

fn row_lse(scaled_cost: &[f64], pot: &[f64], n: usize, i: usize) -> f64 {
    let row = &scaled_cost[i * n..(i + 1) * n];
    let mut max = f64::NEG_INFINITY;
    for j in 0..n {
        max = max.max(pot[j] - row[j]);
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut s = 0.0;
    for j in 0..n {
        s += (pot[j] - row[j] - max).exp();
    }
    max + s.ln()
}

impl<'a> JkoScheme<'a> {
    pub fn new(cost: &'a CostMatrix, node_measure: &[f64], tau: f64, solver: JkoSolver) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        if node_measure.len() != cost.len() {
            return Err(Error::InvalidParameter(format!("{} node measures for a cost on {} nodes", node_measure.len(), cost.len())));
        }
        let mut scheme = JkoScheme { cost, node_measure: node_measure.to_vec(), tau, solver, entropic: None };
        if let JkoSolver::EntropicProximal(opts) = solver {
            scheme.entropic = Some(scheme.entropic_state(&opts)?);
        }
        Ok(scheme)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Effective transport time step after blur compensation (entropic solver only).
    pub fn effective_tau(&self) -> Option<f64> {
        self.entropic.as_ref().map(|s| s.tau_eff)
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.entropic.as_ref().map(|s| s.eps)
    }

    fn entropic_state(&self, opts: &EntropicOptions) -> Result<EntropicState> {
        let eps = opts.epsilon.unwrap_or(self.tau);
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
        }
        let tau_eff = if opts.blur_compensation { self.tau - eps / 4.0 } else { self.tau };
        if tau_eff <= 0.0 {
            return Err(Error::InvalidParameter(format!("blur compensation needs epsilon < 4 tau, got epsilon {eps}, tau {}", self.tau)));
        }
        let n = self.cost.len();
        let mut log_ref: Vec<f64> = self.node_measure.iter().map(|m| m.ln()).collect();
        if opts.balance_kernel {
            // symmetric Schrödinger potential between uniform marginals
            let total: f64 = self.node_measure.iter().sum();
            let log_u: Vec<f64> = self.node_measure.iter().map(|m| (m / total).ln()).collect();
            let scaled: Vec<f64> = (0..n * n).map(|k| self.cost.get(k / n, k % n) / eps).collect();
            let mut f = vec![0.0; n];
            let mut converged = false;
            for _ in 0..10_000 {
                let next: Vec<f64> = (0..n).map(|i| 0.5 * (f[i] + log_u[i] - row_lse(&scaled, &f, n, i))).collect();
                let change = next.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                f = next;
                if change < 1e-13 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NoConvergence { iterations: 10_000, residual: f64::NAN });
            }
            for i in 0..n {
                log_ref[i] = log_u[i] + f[i] * eps / (2.0 * tau_eff);
            }
        }
        Ok(EntropicState { eps, tau_eff, log_ref, f: vec![0.0; n], g: vec![0.0; n], warm: false })
    }

    pub fn step(&mut self, mu: &DiscreteMeasure) -> Result<JkoStep> {
        if mu.len() != self.cost.len() {
            return Err(Error::InvalidParameter(format!("measure on {} nodes, cost on {}", mu.len(), self.cost.len())));
        }
        match self.solver {
            JkoSolver::EntropicProximal(opts) => match self.entropic_step(mu, &opts) {
                Err(Error::NoConvergence { .. }) if self.cost.len() <= MIRROR_SUPPORT_LIMIT => self.mirror_step(mu, &MirrorOptions::default()),
                other => other,
            },
            JkoSolver::MirrorDescent(opts) => self.mirror_step(mu, &opts),
        }
    }

    /// Runs `steps` steps from `mu0`; the returned list starts with `mu0`.
    pub fn run(&mut self, mu0: &DiscreteMeasure, steps: usize) -> Result<Vec<DiscreteMeasure>> {
        let mut out = vec![mu0.clone()];
        for _ in 0..steps {
            let next = self.step(out.last().unwrap())?.measure;
            out.push(next);
        }
        Ok(out)
    }

    fn entropic_step(&mut self, mu: &DiscreteMeasure, opts: &EntropicOptions) -> Result<JkoStep> {
        let n = self.cost.len();
        let state = self.entropic.as_mut().expect("entropic state");
        let log_mu: Vec<f64> = mu.mass().iter().map(|a| if *a > 0.0 { a.ln() } else { f64::NEG_INFINITY }).collect();
        let mut stages = Vec::new();
        if !state.warm {
            state.f.fill(0.0);
            state.g.fill(0.0);
            let mut e = opts.epsilon_start.max(state.eps);
            while e > state.eps * (1.0 + 1e-12) {
                stages.push(e);
                e = (e * opts.epsilon_ratio).max(state.eps);
            }
        }
        stages.push(state.eps);
        let mut iterations = 0;
        let mut err = f64::INFINITY;
        let mut prev_eps = if state.warm { state.eps } else { stages[0] };
        for &eps in &stages {
            // potentials are stored divided by ε
            let rescale = prev_eps / eps;
            state.f.iter_mut().chain(state.g.iter_mut()).for_each(|x| *x *= rescale);
            prev_eps = eps;
            let kappa = {
                let lambda = 2.0 * state.tau_eff / eps;
                lambda / (1.0 + lambda)
            };
            let scaled: Vec<f64> = (0..n * n).map(|k| self.cost.get(k / n, k % n) / eps).collect();
            let last = eps == state.eps;
            let tol = if last { opts.tol } else { opts.tol.max(1e-6) };
            err = f64::INFINITY;
            let mut local = 0;
            while local < opts.max_iter {
                for j in 0..n {
                    state.g[j] = kappa * (state.log_ref[j] - row_lse(&scaled, &state.f, n, j));
                }
                for i in 0..n {
                    state.f[i] = if log_mu[i].is_finite() { log_mu[i] - row_lse(&scaled, &state.g, n, i) } else { f64::NEG_INFINITY };
                }
                local += 1;
                if local % 5 == 0 {
                    // with f just updated the rows are exact; measure the change a g-update would cause
                    let mut change = 0.0f64;
                    for j in 0..n {
                        let lse = row_lse(&scaled, &state.f, n, j);
                        let gj = kappa * (state.log_ref[j] - lse);
                        let q = (state.g[j] + lse).exp();
                        change += q * ((gj - state.g[j]).exp() - 1.0).abs();
                    }
                    err = change;
                    if err < tol {
                        break;
                    }
                }
            }
            iterations += local;
            if err >= tol {
                state.warm = false;
                return Err(Error::NoConvergence { iterations, residual: err });
            }
        }
        state.warm = true;
        let mut q = vec![0.0; n];
        let mut transport = 0.0;
        for i in 0..n {
            if !state.f[i].is_finite() {
                continue;
            }
            for j in 0..n {
                let c = self.cost.get(i, j);
                let p = (state.f[i] + state.g[j] - c / state.eps).exp();
                q[j] += p;
                transport += p * c;
            }
        }
        let measure = DiscreteMeasure::normalized(q, self.node_measure.clone())?;
        let entropy = measure.entropy();
        Ok(JkoStep { objective: entropy + transport / (2.0 * self.tau), measure, entropy, transport_cost: transport, iterations, residual: err })
    }

    /// Exponentiated-gradient descent on couplings `π` with row marginals
    /// `μ_k`, minimizing the unregularized `⟨C, π⟩/(2τ) + Ent(π_col)`; stops on
    /// the duality gap `Σ_i (⟨g_i, π_i⟩ - μ_i min_j g_ij)`.
    fn mirror_step(&mut self, mu: &DiscreteMeasure, opts: &MirrorOptions) -> Result<JkoStep> {
        let n = self.cost.len();
        if n > MIRROR_SUPPORT_LIMIT {
            return Err(Error::SizeLimit { size: n, limit: MIRROR_SUPPORT_LIMIT });
        }
        let m = &self.node_measure;
        let two_tau = 2.0 * self.tau;
        let rows: Vec<usize> = mu.support();
        let objective = |pi: &[f64]| -> (f64, f64, Vec<f64>) {
            let mut q = vec![0.0; n];
            let mut transport = 0.0;
            for (r, &i) in rows.iter().enumerate() {
                for j in 0..n {
                    q[j] += pi[r * n + j];
                    transport += pi[r * n + j] * self.cost.get(i, j);
                }
            }
            let ent: f64 = q.iter().zip(m).filter(|(a, _)| **a > 0.0).map(|(a, w)| a * (a / w).ln()).sum();
            (ent + transport / two_tau, transport, q)
        };
        let gradient = |q: &[f64]| -> Vec<f64> {
            let log_rho: Vec<f64> = q.iter().zip(m).map(|(a, w)| (a / w).ln() + 1.0).collect();
            rows.iter().flat_map(|&i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.cost.get(i, j) / two_tau + log_rho[j]).collect()
        };
        let gap_of = |pi: &[f64], g: &[f64]| -> f64 {
            (0..rows.len())
                .map(|r| {
                    let (pr, gr) = (&pi[r * n..(r + 1) * n], &g[r * n..(r + 1) * n]);
                    let total: f64 = pr.iter().sum();
                    pr.iter().zip(gr).map(|(p, g)| p * g).sum::<f64>() - total * gr.iter().cloned().fold(f64::INFINITY, f64::min)
                })
                .sum()
        };
        // start from the row marginals spread by the node measure
        let total_m: f64 = m.iter().sum();
        let mut pi: Vec<f64> = rows.iter().flat_map(|&i| (0..n).map(move |j| mu.mass()[i] * m[j] / total_m)).collect();
        let (mut obj, mut transport, mut q) = objective(&pi);
        let mut grad = gradient(&q);
        let mut gap = gap_of(&pi, &grad);
        let mut eta = 1.0;
        let mut iterations = 0;
        while gap > opts.tol {
            if iterations >= opts.max_iter {
                return Err(Error::NoConvergence { iterations, residual: gap });
            }
            iterations += 1;
            let mut accepted = false;
            for _ in 0..60 {
                let mut cand = vec![0.0; pi.len()];
                for (r, &i) in rows.iter().enumerate() {
                    let (pr, gr) = (&pi[r * n..(r + 1) * n], &grad[r * n..(r + 1) * n]);
                    let gmin = gr.iter().cloned().fold(f64::INFINITY, f64::min);
                    let w: Vec<f64> = pr.iter().zip(gr).map(|(p, g)| p * (-eta * (g - gmin)).exp()).collect();
                    let s: f64 = w.iter().sum();
                    for j in 0..n {
                        cand[r * n + j] = mu.mass()[i] * w[j] / s;
                    }
                }
                let (o, t, qc) = objective(&cand);
                if o <= obj {
                    pi = cand;
                    obj = o;
                    transport = t;
                    q = qc;
                    eta *= 1.5;
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
            grad = gradient(&q);
            gap = gap_of(&pi, &grad);
            if !accepted {
                break;
            }
        }
        if gap > opts.tol {
            return Err(Error::NoConvergence { iterations, residual: gap });
        }
        let measure = DiscreteMeasure::normalized(q, m.clone())?;
        let entropy = measure.entropy();
        Ok(JkoStep { measure, entropy, transport_cost: transport, objective: obj, iterations, residual: gap })
    }
}

/// One minimizing-movement step from `mu` without warm start.
pub fn jko_step(mu: &DiscreteMeasure, tau: f64, cost: &CostMatrix, solver: JkoSolver) -> Result<JkoStep> {
    JkoScheme::new(cost, mu.node_measure(), tau, solver)?.step(mu)
}
