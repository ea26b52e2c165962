use serde::{Deserialize, Serialize};

use crate::conformal::MetricField;
use crate::error::{Error, Result};
use crate::grid::{graph_distance, path_from_map, GridDomain, PathPolyline, Weighting};

/// Which graph metric produced a cost matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricTag {
    /// `d`: all edges, unit field.
    Ambient,
    /// `d_Y`: Y-edges only.
    Induced,
    /// `d_k`: Y-edges weighted by a conformal field.
    Conformal,
    /// Supplied directly.
    Custom,
}

/// Squared graph distances between the nodes of a support, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    nodes: Vec<usize>,
    tag: MetricTag,
    values: Vec<f64>,
    phi: Option<Vec<f64>>,
}

impl CostMatrix {
    /// Runs one Dijkstra per support node; entry `(i, j)` is taken from the
    /// search rooted at `min(i, j)` so the matrix is exactly symmetric.
    pub fn build(domain: &GridDomain, nodes: &[usize], tag: MetricTag, field: Option<&MetricField>) -> Result<Self> {
        let phi = match (tag, field) {
            (MetricTag::Conformal, Some(f)) => Some(f.phi.clone()),
            (MetricTag::Conformal, None) => return Err(Error::InvalidParameter("conformal cost needs a metric field".into())),
            (MetricTag::Custom, _) => return Err(Error::InvalidParameter("custom costs are built with from_squared".into())),
            _ => None,
        };
        let mut cost = CostMatrix { nodes: nodes.to_vec(), tag, values: vec![0.0; nodes.len() * nodes.len()], phi };
        let n = nodes.len();
        for a in 0..n {
            let map = graph_distance(domain, cost.weighting(), nodes[a], cost.restrict_to_y())?;
            for b in a + 1..n {
                let d = map.distance_to(nodes[b])?;
                cost.values[a * n + b] = d * d;
                cost.values[b * n + a] = d * d;
            }
        }
        Ok(cost)
    }

    pub fn ambient(domain: &GridDomain, nodes: &[usize]) -> Result<Self> {
        CostMatrix::build(domain, nodes, MetricTag::Ambient, None)
    }

    pub fn induced(domain: &GridDomain, nodes: &[usize]) -> Result<Self> {
        CostMatrix::build(domain, nodes, MetricTag::Induced, None)
    }

    pub fn conformal(domain: &GridDomain, nodes: &[usize], field: &MetricField) -> Result<Self> {
        CostMatrix::build(domain, nodes, MetricTag::Conformal, Some(field))
    }

    /// Wraps a row-major matrix of squared distances; `nodes` are labels only.
    pub fn from_squared(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::InvalidParameter(format!("{} cost entries for {n} nodes", values.len())));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::InvalidParameter(format!("cost diagonal entry {i} is nonzero")));
            }
            for j in 0..i {
                let c = values[i * n + j];
                if !(c.is_finite() && c >= 0.0) || c != values[j * n + i] {
                    return Err(Error::InvalidParameter(format!("cost entry ({i}, {j}) is not symmetric and nonnegative")));
                }
            }
        }
        Ok(CostMatrix { nodes: (0..n).collect(), tag: MetricTag::Custom, values, phi: None })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Domain node index of each support position.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn tag(&self) -> MetricTag {
        self.tag
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.nodes.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.nodes.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &b| a.max(b))
    }

    pub fn restrict_to_y(&self) -> bool {
        !matches!(self.tag, MetricTag::Ambient)
    }

    pub fn weighting(&self) -> Weighting<'_> {
        match &self.phi {
            Some(phi) => Weighting::Conformal(phi),
            None => Weighting::Unit,
        }
    }

    /// Geodesics from support position `i` to each target position, traced with
    /// the same weighting that produced the costs.
    pub fn geodesics(&self, domain: &GridDomain, i: usize, targets: &[usize]) -> Result<Vec<PathPolyline>> {
        if self.tag == MetricTag::Custom {
            return Err(Error::InvalidParameter("custom costs carry no geodesics".into()));
        }
        let map = graph_distance(domain, self.weighting(), self.nodes[i], self.restrict_to_y())?;
        targets.iter().map(|&j| path_from_map(domain, self.weighting(), &map, self.nodes[j])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, DomainSpec, Fixture};

    #[test]
    fn induced_dominates_ambient_and_is_symmetric() {
        let d = build_domain(&DomainSpec::new(Fixture::Pacman { center: [0.5, 0.5], radius: 0.5, mouth_radius: 0.25, mouth_angle: 0.0 }, 1.0 / 16.0)).unwrap();
        let nodes = d.y_nodes();
        let amb = CostMatrix::ambient(&d, &nodes).unwrap();
        let ind = CostMatrix::induced(&d, &nodes).unwrap();
        let mut strict = 0;
        for i in 0..nodes.len() {
            assert_eq!(ind.get(i, i), 0.0);
            for j in 0..nodes.len() {
                assert_eq!(ind.get(i, j), ind.get(j, i));
                assert!(ind.get(i, j) >= amb.get(i, j));
                strict += usize::from(ind.get(i, j) > amb.get(i, j) * (1.0 + 1e-9));
            }
        }
        assert!(strict > 0);
    }

    #[test]
    fn custom_costs_are_validated() {
        assert!(CostMatrix::from_squared(2, vec![0.0, 1.0, 1.0, 0.0]).is_ok());
        assert!(CostMatrix::from_squared(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(CostMatrix::from_squared(2, vec![1.0, 1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn geodesic_lengths_match_costs() {
        let d = build_domain(&DomainSpec::new(Fixture::Square, 0.25)).unwrap();
        let nodes = d.y_nodes();
        let c = CostMatrix::ambient(&d, &nodes).unwrap();
        let paths = c.geodesics(&d, 0, &[24, 7]).unwrap();
        assert!((paths[0].total().powi(2) - c.get(0, 24)).abs() < 1e-12);
        assert!((paths[1].total().powi(2) - c.get(0, 7)).abs() < 1e-12);
    }
}
