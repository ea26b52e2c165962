//! Browser demo: conformal geodesics under a κ' slider, heat flow frames and
//! gradient-flow projection onto Y, on a small masked grid.

use flowlab::conformal::conformal_factor;
use flowlab::evi::{hitting_time, project_to_y};
use flowlab::grid::{build_domain, trace_geodesic};
use flowlab::heat::{build_neumann_operator, evolve};
use flowlab::potentials::{default_ball_radius, exterior_ball_potential, fixture_ball_centers, kappa_for_ball_complement};
use flowlab::{DomainSpec, Error, GridDomain, NeumannOperator, Point, Potential, Result};
use wasm_bindgen::prelude::*;

const PROJECTION_DT: f64 = 1e-3;

/// Plain-Rust state behind [`Lab`].
pub struct LabCore {
    pub domain: GridDomain,
    pub potential: Potential,
    pub kappa: f64,
    op: NeumannOperator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geodesic {
    pub points: Vec<Point>,
    pub length: f64,
    /// Path nodes outside Y.
    pub outside: usize,
}

impl LabCore {
    /// `fixture` is a fixture tag with default geometry (`pacman`, `disc`, `square_minus_discs`).
    pub fn new(fixture: &str, h: f64) -> Result<Self> {
        let spec = DomainSpec::from_json_str(&format!(r#"{{"fixture": "{fixture}", "h": {h}}}"#))?;
        let domain = build_domain(&spec)?;
        let r = default_ball_radius(&spec);
        let centers = fixture_ball_centers(&spec, r)?;
        let potential = exterior_ball_potential(&domain, &centers, r, 0.0)?;
        let kappa = kappa_for_ball_complement(0.0, r)?;
        let op = build_neumann_operator(&domain)?;
        Ok(LabCore { domain, potential, kappa, op })
    }

    fn y_node(&self, p: Point) -> Result<usize> {
        let i = self.domain.nearest_node(p);
        if self.domain.in_y(i) {
            Ok(i)
        } else {
            Err(Error::InvalidParameter(format!("({:.3}, {:.3}) is not in Y", p[0], p[1])))
        }
    }

    /// Geodesic of the unrestricted graph under `φ = exp(-factor·κ·V)`.
    pub fn geodesic(&self, a: Point, b: Point, factor: f64) -> Result<Geodesic> {
        let (ia, ib) = (self.y_node(a)?, self.y_node(b)?);
        let field = conformal_factor(&self.potential, factor * self.kappa);
        let path = trace_geodesic(&self.domain, field.weighting(), ia, ib, false)?;
        let outside = path.nodes.iter().filter(|&&i| !self.domain.in_y(i)).count();
        Ok(Geodesic { points: path.points(&self.domain), length: path.total(), outside })
    }

    /// Heat flow of a Gaussian bump; each frame holds one density per grid
    /// node (NaN off Y).
    pub fn heat_frames(&self, center: Point, sigma: f64, t_end: f64, frames: usize) -> Result<Vec<Vec<f64>>> {
        if frames == 0 || !(t_end > 0.0) || !(sigma > 0.0) {
            return Err(Error::InvalidParameter("heat frames need frames >= 1, t_end > 0 and sigma > 0".into()));
        }
        let f: Vec<f64> = self
            .op
            .nodes()
            .iter()
            .map(|&i| {
                let p = self.domain.point(i);
                (-((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)) / (2.0 * sigma * sigma)).exp() + 1e-3
            })
            .collect();
        let mass = self.op.mass(&f);
        let f: Vec<f64> = f.iter().map(|x| x / mass).collect();
        let times: Vec<f64> = (0..=frames).map(|k| t_end * k as f64 / frames as f64).collect();
        let traj = evolve(&self.op, &f, &times, t_end / frames as f64 / 4.0)?;
        Ok(traj
            .densities
            .iter()
            .map(|d| {
                let mut full = vec![f64::NAN; self.domain.len()];
                for (&node, &v) in self.op.nodes().iter().zip(d) {
                    full[node] = v;
                }
                full
            })
            .collect())
    }

    /// Gradient-flow projection onto Y and the hitting time.
    pub fn project(&self, p: Point) -> Result<(Point, f64)> {
        Ok((project_to_y(&self.domain, &self.potential, p, PROJECTION_DT)?, hitting_time(&self.domain, &self.potential, p, PROJECTION_DT)?))
    }
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Lab {
    core: LabCore,
}

#[wasm_bindgen]
impl Lab {
    #[wasm_bindgen(constructor)]
    pub fn new(fixture: &str, h: f64) -> std::result::Result<Lab, JsError> {
        LabCore::new(fixture, h).map(|core| Lab { core }).map_err(js)
    }

    pub fn nx(&self) -> usize {
        self.core.domain.nx
    }

    pub fn ny(&self) -> usize {
        self.core.domain.ny
    }

    pub fn h(&self) -> f64 {
        self.core.domain.h
    }

    /// Per node: 0 Ambient, 1 Boundary, 2 interior of Y.
    pub fn kinds(&self) -> Vec<u8> {
        self.core
            .domain
            .kinds
            .iter()
            .map(|k| match k {
                flowlab::NodeKind::Ambient => 0,
                flowlab::NodeKind::Boundary => 1,
                flowlab::NodeKind::InY => 2,
            })
            .collect()
    }

    pub fn potential(&self) -> Vec<f64> {
        self.core.potential.values.clone()
    }

    pub fn kappa(&self) -> f64 {
        self.core.kappa
    }

    /// Flattened `[x0, y0, x1, y1, ..., length, outside]`.
    pub fn geodesic(&self, ax: f64, ay: f64, bx: f64, by: f64, factor: f64) -> std::result::Result<Vec<f64>, JsError> {
        let g = self.core.geodesic([ax, ay], [bx, by], factor).map_err(js)?;
        let mut out: Vec<f64> = g.points.iter().flat_map(|p| [p[0], p[1]]).collect();
        out.push(g.length);
        out.push(g.outside as f64);
        Ok(out)
    }

    /// `frames + 1` frames of `nx·ny` densities, concatenated.
    pub fn heat_frames(&self, cx: f64, cy: f64, sigma: f64, t_end: f64, frames: usize) -> std::result::Result<Vec<f64>, JsError> {
        Ok(self.core.heat_frames([cx, cy], sigma, t_end, frames).map_err(js)?.concat())
    }

    /// `[px, py, hitting_time]`.
    pub fn project(&self, x: f64, y: f64) -> std::result::Result<Vec<f64>, JsError> {
        let (p, t) = self.core.project([x, y]).map_err(js)?;
        Ok(vec![p[0], p[1], t])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pacman_geodesic_is_pushed_into_y() {
        let lab = LabCore::new("pacman", 1.0 / 32.0).unwrap();
        // endpoints flanking the round end of the slot
        let (a, b) = ([0.3, 0.2], [0.3, 0.8]);
        let plain = lab.geodesic(a, b, 0.0).unwrap();
        assert!(plain.outside > 0);
        let bent = lab.geodesic(a, b, 2.0).unwrap();
        assert_eq!(bent.outside, 0);
        assert!(bent.length >= plain.length);
        assert!(lab.geodesic([0.8, 0.5], b, 0.0).is_err());
    }

    #[test]
    fn heat_frames_conserve_mass() {
        let lab = LabCore::new("disc", 1.0 / 16.0).unwrap();
        let frames = lab.heat_frames([0.4, 0.5], 0.1, 0.05, 5).unwrap();
        assert_eq!(frames.len(), 6);
        let masses: Vec<f64> = frames
            .iter()
            .map(|f| f.iter().zip(&lab.domain.node_measure).filter(|(v, _)| !v.is_nan()).map(|(v, m)| v * m).sum::<f64>())
            .collect();
        for m in &masses {
            assert!((m - masses[0]).abs() < 1e-9, "{masses:?}");
        }
        let peak = |f: &Vec<f64>| f.iter().copied().filter(|v| !v.is_nan()).fold(0.0, f64::max);
        assert!(peak(&frames[5]) < peak(&frames[0]));
    }

    #[test]
    fn projection_lands_on_the_hole_rim() {
        let lab = LabCore::new("square_minus_discs", 1.0 / 32.0).unwrap();
        let (p, t) = lab.project([0.6, 0.5]).unwrap();
        assert!(((p[0] - 0.5).hypot(p[1] - 0.5) - 0.25).abs() < 2.0 / 32.0, "{p:?}");
        assert!(t > 0.0);
        let (q, s) = lab.project([0.1, 0.1]).unwrap();
        assert_eq!((q, s), ([0.1, 0.1], 0.0));
    }
}
