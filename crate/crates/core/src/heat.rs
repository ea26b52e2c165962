//! Neumann Laplacian on Y by edge restriction, implicit-Euler heat flow and
//! the discrete Cheeger energy.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::GridDomain;
use crate::linalg::{conjugate_gradient, dot, CsrMatrix};
use crate::trajectory::FlowTrajectory;

/// Relative residual for the implicit heat solves.
pub const HEAT_SOLVER_TOL: f64 = 1e-12;

/// Five-point Neumann operator `L = -M⁻¹K` on the Y nodes. `K` is the stiffness
/// matrix of the axis-aligned Y-edges with unit conductance and `M` the
/// diagonal of node measures, so interior rows are the standard `1/h²` stencil.
#[derive(Debug, Clone)]
pub struct NeumannOperator {
    nodes: Vec<usize>,
    local: Vec<Option<usize>>,
    measure: Vec<f64>,
    edges: Vec<(usize, usize)>,
    conductance: Vec<f64>,
    stiffness: CsrMatrix,
}

/// Assembles the operator from the Y-restricted axis edges; Ambient
/// neighbors and deleted slit edges simply contribute no flux.
pub fn build_neumann_operator(domain: &GridDomain) -> Result<NeumannOperator> {
    let nodes = domain.y_nodes();
    if nodes.is_empty() {
        return Err(Error::EmptyY);
    }
    let mut local = vec![None; domain.len()];
    for (k, &i) in nodes.iter().enumerate() {
        local[i] = Some(k);
    }
    let mut edges = Vec::new();
    let mut conductance = Vec::new();
    let mut triplets = Vec::new();
    for e in &domain.edges {
        let axis = matches!(e.offset, (1, 0) | (0, 1));
        if !axis || !e.in_y {
            continue;
        }
        let (a, b) = (local[e.a].unwrap(), local[e.b].unwrap());
        let c = 1.0;
        edges.push((a.min(b), a.max(b)));
        conductance.push(c);
        triplets.extend([(a, a, c), (b, b, c), (a, b, -c), (b, a, -c)]);
    }
    for k in 0..nodes.len() {
        triplets.push((k, k, 0.0));
    }
    let stiffness = CsrMatrix::from_triplets(nodes.len(), triplets);
    let measure = nodes.iter().map(|&i| domain.node_measure[i]).collect();
    let op = NeumannOperator { nodes, local, measure, edges, conductance, stiffness };
    let components = op.components();
    if components > 1 {
        return Err(Error::DisconnectedY { components });
    }
    Ok(op)
}

impl NeumannOperator {
    pub fn dimension(&self) -> usize {
        self.nodes.len()
    }

    /// Domain node index of each local index.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Local index of a domain node, if it is in Y.
    pub fn local_index(&self, node: usize) -> Option<usize> {
        self.local.get(node).copied().flatten()
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn total_measure(&self) -> f64 {
        self.measure.iter().sum()
    }

    /// Local edge list `(i, j)` with `i < j`, paired with [`NeumannOperator::conductances`].
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn conductances(&self) -> &[f64] {
        &self.conductance
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    fn components(&self) -> usize {
        let n = self.dimension();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(a, b) in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }

    /// `Lf = -M⁻¹Kf`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut kf = vec![0.0; f.len()];
        self.stiffness.matvec(f, &mut kf);
        kf.iter().zip(&self.measure).map(|(k, m)| -k / m).collect()
    }

    /// Matrix entry `L_ij`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        -self.stiffness.get(i, j) / self.measure[i]
    }

    /// `Σ m_i f_i`
    pub fn mass(&self, f: &[f64]) -> f64 {
        dot(&self.measure, f)
    }

    /// Writes `L` in MatrixMarket coordinate format (1-based, local ordering).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.dimension();
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "% Neumann Laplacian on Y nodes; row k is domain node {{nodes[k]}}")?;
        writeln!(w, "{n} {n} {}", self.stiffness.vals.len())?;
        for i in 0..n {
            for (j, v) in self.stiffness.row(i) {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, -v / self.measure[i])?;
            }
        }
        Ok(())
    }

    fn solve_shifted(&self, rhs: &[f64], initial: &[f64], dt: f64) -> Result<Vec<f64>> {
        let diag: Vec<f64> = self.stiffness.diagonal().iter().zip(&self.measure).map(|(k, m)| m + dt * k).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            self.stiffness.matvec(x, y);
            for ((yi, xi), m) in y.iter_mut().zip(x).zip(&self.measure) {
                *yi = m * xi + dt * *yi;
            }
        };
        let out = conjugate_gradient(apply, rhs, Some(initial), &diag, HEAT_SOLVER_TOL, 20 * self.dimension() + 100)?;
        Ok(out.solution)
    }
}

/// `½ Σ_e c_e (f_i - f_j)² = -½⟨f, Lf⟩_m`.
pub fn cheeger_energy(op: &NeumannOperator, f: &[f64]) -> f64 {
    0.5 * op.edges.iter().zip(&op.conductance).map(|(&(a, b), c)| c * (f[a] - f[b]).powi(2)).sum::<f64>()
}

/// One implicit Euler step `(M + dt K) f' = M f`.
pub fn heat_step(op: &NeumannOperator, f: &[f64], dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    if f.len() != op.dimension() {
        return Err(Error::InvalidParameter(format!("state has {} entries, operator {}", f.len(), op.dimension())));
    }
    let rhs: Vec<f64> = f.iter().zip(&op.measure).map(|(x, m)| x * m).collect();
    op.solve_shifted(&rhs, f, dt)
}

/// Heat trajectory sampled at `times` (increasing, starting at 0), with
/// uniform substeps no longer than `dt_max`.
pub fn evolve(op: &NeumannOperator, f0: &[f64], times: &[f64], dt_max: f64) -> Result<FlowTrajectory> {
    if times.first().copied() != Some(0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("times must start at 0 and increase strictly".into()));
    }
    if !(dt_max > 0.0) {
        return Err(Error::InvalidParameter(format!("dt_max must be positive, got {dt_max}")));
    }
    let mut states = vec![f0.to_vec()];
    let mut f = f0.to_vec();
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let n = (span / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = span / n as f64;
        for _ in 0..n {
            f = heat_step(op, &f, dt)?;
        }
        states.push(f.clone());
    }
    Ok(FlowTrajectory::from_densities(op, times.to_vec(), states))
}

/// Smallest nonzero eigenvalue of `-L` by inverse iteration on mean-zero functions.
pub fn spectral_gap(op: &NeumannOperator, tol: f64, max_iter: usize) -> Result<f64> {
    let n = op.dimension();
    if n < 2 {
        return Err(Error::InvalidParameter("spectral gap needs at least two nodes".into()));
    }
    let total = op.total_measure();
    let project = |v: &mut Vec<f64>| {
        let mean = op.mass(v) / total;
        v.iter_mut().for_each(|x| *x -= mean);
        let norm = dot(v, &v.iter().zip(&op.measure).map(|(a, m)| a * m).collect::<Vec<_>>()).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    };
    let mut v: Vec<f64> = (0..n).map(|k| ((k as f64) * 0.7548776662).fract() - 0.5 + 1e-3 * k as f64 / n as f64).collect();
    project(&mut v);
    let diag = op.stiffness.diagonal();
    let mut lambda = f64::NAN;
    for it in 0..max_iter {
        let rhs: Vec<f64> = v.iter().zip(&op.measure).map(|(x, m)| x * m).collect();
        let out = conjugate_gradient(|x, y| op.stiffness.matvec(x, y), &rhs, None, &diag, 1e-12, 50 * n + 100)?;
        let mut w = out.solution;
        project(&mut w);
        let mut kw = vec![0.0; n];
        op.stiffness.matvec(&w, &mut kw);
        let next = dot(&w, &kw);
        v = w;
        if it > 0 && (next - lambda).abs() <= tol * next.abs() {
            return Ok(next);
        }
        lambda = next;
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: lambda })
}
