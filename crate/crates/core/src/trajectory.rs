//! Time-stamped density trajectories shared by the heat flow and the JKO scheme.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridDomain, Point};
use crate::heat::{cheeger_energy, NeumannOperator};
use crate::transport::DiscreteMeasure;

/// Densities (relative to node measures, local Y ordering) at increasing
/// times, with entropy, Cheeger energy and mass per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub densities: Vec<Vec<f64>>,
    pub entropy: Vec<f64>,
    pub cheeger: Vec<f64>,
    pub mass: Vec<f64>,
}

/// `Σ m f ln f` with `0 ln 0 = 0`.
pub fn density_entropy(measure: &[f64], f: &[f64]) -> f64 {
    f.iter().zip(measure).filter(|(x, _)| **x > 0.0).map(|(x, m)| m * x * x.ln()).sum()
}

impl FlowTrajectory {
    pub fn from_densities(op: &NeumannOperator, times: Vec<f64>, densities: Vec<Vec<f64>>) -> Self {
        let entropy = densities.iter().map(|f| density_entropy(op.measure(), f)).collect();
        let cheeger = densities.iter().map(|f| cheeger_energy(op, f)).collect();
        let mass = densities.iter().map(|f| op.mass(f)).collect();
        FlowTrajectory { times, densities, entropy, cheeger, mass }
    }

    pub fn from_measures(op: &NeumannOperator, times: Vec<f64>, measures: &[DiscreteMeasure]) -> Self {
        FlowTrajectory::from_densities(op, times, measures.iter().map(DiscreteMeasure::density).collect())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn measure(&self, op: &NeumannOperator, k: usize) -> Result<DiscreteMeasure> {
        DiscreteMeasure::from_density(&self.densities[k], op.measure())
    }

    /// Density at time `t` by linear interpolation between samples.
    pub fn density_at(&self, t: f64) -> Result<Vec<f64>> {
        let (first, last) = (self.times[0], self.times[self.times.len() - 1]);
        if t < first - 1e-12 || t > last + 1e-12 {
            return Err(Error::InvalidParameter(format!("time {t} outside [{first}, {last}]")));
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len() - 1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        Ok(self.densities[k - 1].iter().zip(&self.densities[k]).map(|(a, b)| (1.0 - s) * a + s * b).collect())
    }

    /// Writes `t,node,value` rows; `node` is the domain node index.
    pub fn write_csv<W: Write>(&self, op: &NeumannOperator, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "node", "value"])?;
        for (t, f) in self.times.iter().zip(&self.densities) {
            for (k, v) in f.iter().enumerate() {
                wtr.serialize((t, op.nodes()[k], v))?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `Σ_i m_i |f_i - g_i|`
pub fn l1_distance(measure: &[f64], f: &[f64], g: &[f64]) -> f64 {
    f.iter().zip(g).zip(measure).map(|((a, b), m)| m * (a - b).abs()).sum()
}

/// Gaussian bump of width `sigma` carried rigidly around `center` at angular
/// velocity `omega`, starting at angle `angle0` on the circle of radius
/// `orbit`, plus a uniform floor. Not a gradient flow of the entropy.
#[allow(clippy::too_many_arguments)]
pub fn rotation_trajectory(
    domain: &GridDomain,
    op: &NeumannOperator,
    center: Point,
    orbit: f64,
    angle0: f64,
    omega: f64,
    sigma: f64,
    floor: f64,
    times: &[f64],
) -> FlowTrajectory {
    let densities = times
        .iter()
        .map(|&t| {
            let a = angle0 + omega * t;
            let c = [center[0] + orbit * a.cos(), center[1] + orbit * a.sin()];
            let raw: Vec<f64> = op
                .nodes()
                .iter()
                .map(|&i| {
                    let p = domain.point(i);
                    floor + (-((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (2.0 * sigma * sigma)).exp()
                })
                .collect();
            let mass = op.mass(&raw);
            raw.iter().map(|x| x / mass).collect()
        })
        .collect();
    FlowTrajectory::from_densities(op, times.to_vec(), densities)
}
