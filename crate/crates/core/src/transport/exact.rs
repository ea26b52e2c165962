//! Exact transport by successive shortest paths on the bipartite residual
//! graph, with node potentials keeping reduced costs nonnegative.

use crate::error::{Error, Result};

use super::{CostMatrix, DiscreteMeasure, TransportPlan};

/// Largest support (per marginal) accepted by the exact solver.
pub const EXACT_SUPPORT_LIMIT: usize = 2000;

const MASS_EPS: f64 = 1e-15;

pub fn solve_exact(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &CostMatrix) -> Result<TransportPlan> {
    let src = mu.support();
    let snk = nu.support();
    let size = src.len().max(snk.len());
    if size > EXACT_SUPPORT_LIMIT {
        return Err(Error::SizeLimit { size, limit: EXACT_SUPPORT_LIMIT });
    }
    let (n1, n2) = (src.len(), snk.len());
    let c: Vec<f64> = src.iter().flat_map(|&i| snk.iter().map(move |&j| cost.get(i, j))).collect();
    let mut supply: Vec<f64> = src.iter().map(|&i| mu.mass()[i]).collect();
    let mut demand: Vec<f64> = snk.iter().map(|&j| nu.mass()[j]).collect();
    let mut flow = vec![0.0; n1 * n2];
    let mut carriers: Vec<Vec<usize>> = vec![Vec::new(); n2];
    let mut pot_s = vec![0.0; n1];
    let mut pot_t = vec![0.0; n2];

    let mut dist_s = vec![0.0; n1];
    let mut dist_t = vec![0.0; n2];
    let mut done_s = vec![false; n1];
    let mut done_t = vec![false; n2];
    let mut parent_s: Vec<Option<usize>> = vec![None; n1];
    let mut parent_t = vec![0usize; n2];
    let mut augmentations = 0usize;

    while supply.iter().any(|&s| s > MASS_EPS) && demand.iter().any(|&d| d > MASS_EPS) {
        for i in 0..n1 {
            dist_s[i] = if supply[i] > MASS_EPS { 0.0 } else { f64::INFINITY };
            done_s[i] = false;
            parent_s[i] = None;
        }
        dist_t.fill(f64::INFINITY);
        done_t.fill(false);
        let target = loop {
            let mut best = (f64::INFINITY, usize::MAX, false);
            for (i, &d) in dist_s.iter().enumerate() {
                if !done_s[i] && d < best.0 {
                    best = (d, i, false);
                }
            }
            for (j, &d) in dist_t.iter().enumerate() {
                if !done_t[j] && d < best.0 {
                    best = (d, j, true);
                }
            }
            let (d, k, is_sink) = best;
            if !d.is_finite() {
                return Err(Error::NoConvergence { iterations: augmentations, residual: supply.iter().sum() });
            }
            if is_sink {
                done_t[k] = true;
                if demand[k] > MASS_EPS {
                    break k;
                }
                for &i in &carriers[k] {
                    if done_s[i] {
                        continue;
                    }
                    let nd = d + (-c[i * n2 + k] + pot_t[k] - pot_s[i]).max(0.0);
                    if nd < dist_s[i] {
                        dist_s[i] = nd;
                        parent_s[i] = Some(k);
                    }
                }
            } else {
                done_s[k] = true;
                let row = &c[k * n2..(k + 1) * n2];
                for j in 0..n2 {
                    if done_t[j] {
                        continue;
                    }
                    let nd = d + (row[j] + pot_s[k] - pot_t[j]).max(0.0);
                    if nd < dist_t[j] {
                        dist_t[j] = nd;
                        parent_t[j] = k;
                    }
                }
            }
        };
        let reach = dist_t[target];
        for i in 0..n1 {
            pot_s[i] += dist_s[i].min(reach);
        }
        for j in 0..n2 {
            pot_t[j] += dist_t[j].min(reach);
        }

        // bottleneck along the path, then push
        let mut amount = demand[target];
        let mut j = target;
        loop {
            let i = parent_t[j];
            match parent_s[i] {
                Some(prev) => {
                    amount = amount.min(flow[i * n2 + prev]);
                    j = prev;
                }
                None => {
                    amount = amount.min(supply[i]);
                    break;
                }
            }
        }
        let mut j = target;
        demand[target] -= amount;
        loop {
            let i = parent_t[j];
            if flow[i * n2 + j] <= 0.0 {
                carriers[j].push(i);
            }
            flow[i * n2 + j] += amount;
            match parent_s[i] {
                Some(prev) => {
                    let f = &mut flow[i * n2 + prev];
                    *f -= amount;
                    if *f <= MASS_EPS * 1e-3 {
                        *f = 0.0;
                        carriers[prev].retain(|&x| x != i);
                    }
                    j = prev;
                }
                None => {
                    supply[i] -= amount;
                    break;
                }
            }
        }
        augmentations += 1;
    }

    let mut coupling = Vec::new();
    let mut primal = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            let f = flow[i * n2 + j];
            if f > 0.0 {
                coupling.push((src[i], snk[j], f));
                primal += f * c[i * n2 + j];
            }
        }
    }
    // u_i = -pot_s, v_j = pot_t satisfy u_i + v_j <= c_ij; extend by c-transforms
    let n = cost.len();
    let mut u = vec![f64::NAN; n];
    let mut v = vec![f64::NAN; n];
    for (k, &i) in src.iter().enumerate() {
        u[i] = -pot_s[k];
    }
    for (k, &j) in snk.iter().enumerate() {
        v[j] = pot_t[k];
    }
    let dual: f64 = src.iter().map(|&i| mu.mass()[i] * u[i]).sum::<f64>() + snk.iter().map(|&j| nu.mass()[j] * v[j]).sum::<f64>();
    for j in 0..n {
        if v[j].is_nan() {
            v[j] = src.iter().map(|&i| cost.get(i, j) - u[i]).fold(f64::INFINITY, f64::min);
        }
    }
    for i in 0..n {
        if u[i].is_nan() {
            u[i] = (0..n).map(|j| cost.get(i, j) - v[j]).fold(f64::INFINITY, f64::min);
        }
    }
    coupling.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    Ok(TransportPlan {
        cost: primal.max(0.0),
        distance: primal.max(0.0).sqrt(),
        coupling,
        approximate: false,
        regularized_value: None,
        dual_value: Some(dual),
        potentials: Some((u, v)),
        iterations: augmentations,
    })
}
