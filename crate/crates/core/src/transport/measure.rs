use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability masses on an ordered node list, with the node measures used to
/// form densities. Indexing follows whatever node list the measure is paired
/// with (a [`super::CostMatrix`] support or a Neumann operator's Y nodes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    mass: Vec<f64>,
    measure: Vec<f64>,
}

pub const MASS_TOL: f64 = 1e-12;

impl DiscreteMeasure {
    pub fn new(mass: Vec<f64>, measure: Vec<f64>) -> Result<Self> {
        if mass.len() != measure.len() || mass.is_empty() {
            return Err(Error::InvalidMeasure(format!("{} masses for {} nodes", mass.len(), measure.len())));
        }
        if let Some(bad) = mass.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidMeasure(format!("mass entries must be finite and nonnegative, got {bad}")));
        }
        if let Some(bad) = measure.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::InvalidMeasure(format!("node measures must be positive, got {bad}")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("total mass {total} differs from 1")));
        }
        Ok(DiscreteMeasure { mass, measure })
    }

    /// Normalizes `weights` to unit total.
    pub fn normalized(weights: Vec<f64>, measure: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidMeasure(format!("cannot normalize total {total}")));
        }
        DiscreteMeasure::new(weights.iter().map(|w| w / total).collect(), measure)
    }

    /// Measure with density proportional to `density`.
    pub fn from_density(density: &[f64], measure: &[f64]) -> Result<Self> {
        DiscreteMeasure::normalized(density.iter().zip(measure).map(|(f, m)| f * m).collect(), measure.to_vec())
    }

    pub fn uniform(measure: &[f64]) -> Result<Self> {
        DiscreteMeasure::normalized(measure.to_vec(), measure.to_vec())
    }

    pub fn point_mass(measure: &[f64], k: usize) -> Result<Self> {
        let mut mass = vec![0.0; measure.len()];
        *mass.get_mut(k).ok_or_else(|| Error::InvalidMeasure(format!("node {k} out of range")))? = 1.0;
        DiscreteMeasure::new(mass, measure.to_vec())
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn node_measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn density(&self) -> Vec<f64> {
        self.mass.iter().zip(&self.measure).map(|(a, m)| a / m).collect()
    }

    /// Indices with positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mass[i] > 0.0).collect()
    }

    /// `Σ ρ log ρ m` over the support.
    pub fn entropy(&self) -> f64 {
        entropy(self)
    }

    /// `Σ |μ_i - ν_i|`, the L¹ distance of the densities.
    pub fn l1_distance(&self, other: &DiscreteMeasure) -> f64 {
        self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Boltzmann entropy `Σ ρ_i log ρ_i m_i` with `0 log 0 = 0`.
pub fn entropy(mu: &DiscreteMeasure) -> f64 {
    mu.mass.iter().zip(&mu.measure).filter(|(a, _)| **a > 0.0).map(|(a, m)| a * (a / m).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn entropy_examples() {
        let u = DiscreteMeasure::uniform(&[1.0; 4]).unwrap();
        assert_abs_diff_eq!(u.entropy(), -(4.0f64).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(u.entropy(), -1.386294, epsilon = 1e-6);
        let p = DiscreteMeasure::point_mass(&[0.5, 0.125, 2.0], 1).unwrap();
        assert_abs_diff_eq!(p.entropy(), (1.0f64 / 0.125).ln(), epsilon = 1e-15);
        let two = DiscreteMeasure::new(vec![0.75, 0.25], vec![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(two.entropy(), 0.75 * 0.75f64.ln() + 0.25 * 0.25f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(two.entropy(), -0.562335, epsilon = 1e-6);
    }

    #[test]
    fn uniform_minimizes_entropy() {
        let m = vec![0.5, 1.0, 1.5, 1.0];
        let u = DiscreteMeasure::uniform(&m).unwrap();
        for w in [[1.0, 1.0, 1.0, 1.0], [0.2, 0.3, 0.4, 0.1], [0.0, 0.5, 0.5, 0.0]] {
            let mu = DiscreteMeasure::normalized(w.to_vec(), m.clone()).unwrap();
            assert!(mu.entropy() >= u.entropy() - 1e-15);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DiscreteMeasure::new(vec![0.5, 0.4], vec![1.0, 1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![1.5, -0.5], vec![1.0, 1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![1.0], vec![0.0]).is_err());
        assert!(DiscreteMeasure::point_mass(&[1.0], 3).is_err());
    }
}
