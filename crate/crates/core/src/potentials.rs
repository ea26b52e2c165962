//! Defining potentials `V` of locally κ-convex sets `Y = {V <= 0}` and
//! numerical audits of their convexity and slope.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{multi_source_distance, DomainSpec, Fixture, GridDomain, Point, Weighting};

/// The comparison function `Φ` for curvature lower bound `L`, with its first
/// two derivatives, evaluated at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

fn check_radius(l: f64, r: f64) -> Result<()> {
    if !(r >= 0.0) || !r.is_finite() || !l.is_finite() {
        return Err(Error::RadiusOutOfRange { l, r });
    }
    if l > 0.0 && r >= std::f64::consts::FRAC_PI_2 / l.sqrt() {
        return Err(Error::RadiusOutOfRange { l, r });
    }
    Ok(())
}

/// `Φ(r)`: `r²/2` for `L = 0`, `-cos(√L r)/L` for `L > 0`, `-cosh(√-L r)/L` for `L < 0`.
pub fn phi_comparison(l: f64, r: f64) -> Result<Comparison> {
    check_radius(l, r)?;
    Ok(comparison_unchecked(l, r))
}

fn comparison_unchecked(l: f64, r: f64) -> Comparison {
    if l == 0.0 {
        Comparison { value: 0.5 * r * r, first: r, second: 1.0 }
    } else if l > 0.0 {
        let s = l.sqrt();
        Comparison { value: -(s * r).cos() / l, first: (s * r).sin() / s, second: (s * r).cos() }
    } else {
        let s = (-l).sqrt();
        Comparison { value: -(s * r).cosh() / l, first: (s * r).sinh() / s, second: (s * r).cosh() }
    }
}

/// Convexity modulus of the defining potential of a ball complement:
/// `-1/r`, `-√L cot(√L r)` or `-√-L coth(√-L r)`.
pub fn kappa_for_ball_complement(l: f64, r: f64) -> Result<f64> {
    check_radius(l, r)?;
    if r == 0.0 {
        return Err(Error::RadiusOutOfRange { l, r });
    }
    Ok(if l == 0.0 {
        -1.0 / r
    } else if l > 0.0 {
        let s = l.sqrt();
        -s / (s * r).tan()
    } else {
        let s = (-l).sqrt();
        -s / (s * r).tanh()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticForm {
    ExteriorBall { centers: Vec<Point>, radius: f64, curvature: f64 },
    SignedDistance,
    Custom,
}

/// Per-node scalar field with a claimed convexity modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub values: Vec<f64>,
    pub kappa: Option<f64>,
    pub analytic: AnalyticForm,
}

impl Potential {
    pub fn custom(values: Vec<f64>, kappa: Option<f64>) -> Self {
        Potential { values, kappa, analytic: AnalyticForm::Custom }
    }

    pub fn zero(domain: &GridDomain) -> Self {
        Potential::custom(vec![0.0; domain.len()], Some(0.0))
    }

    /// Samples a closed-form function at the nodes.
    pub fn from_fn(domain: &GridDomain, kappa: Option<f64>, f: impl Fn(Point) -> f64) -> Self {
        Potential::custom((0..domain.len()).map(|i| f(domain.point(i))).collect(), kappa)
    }

    /// Value at a physical point: closed form for exterior-ball potentials,
    /// bilinear interpolation otherwise.
    pub fn eval_at(&self, domain: &GridDomain, p: Point) -> f64 {
        match &self.analytic {
            AnalyticForm::ExteriorBall { centers, radius, curvature } => exterior_ball_value(centers, *radius, *curvature, p),
            _ => domain.bilinear(&self.values, p),
        }
    }

    /// Like [`Potential::eval_at`], but exterior-ball potentials are evaluated
    /// through their unclamped extension (negative inside Y).
    pub fn eval_extended(&self, domain: &GridDomain, p: Point) -> f64 {
        match &self.analytic {
            AnalyticForm::ExteriorBall { centers, radius, curvature } => exterior_ball_extension(centers, *radius, *curvature, p),
            _ => domain.bilinear(&self.values, p),
        }
    }

    /// Gradient at a physical point by central differences with spacing `h`
    /// of the extended evaluator (one-sided at the bounding box).
    pub fn gradient_at(&self, domain: &GridDomain, p: Point) -> [f64; 2] {
        let h = domain.h;
        let lo = domain.origin;
        let hi = domain.upper();
        let mut g = [0.0; 2];
        for k in 0..2 {
            let mut a = p;
            let mut b = p;
            a[k] = (p[k] - h).max(lo[k]);
            b[k] = (p[k] + h).min(hi[k]);
            let span = b[k] - a[k];
            if span > 0.0 {
                g[k] = (self.eval_extended(domain, b) - self.eval_extended(domain, a)) / span;
            }
        }
        g
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `V_ε = -ε + q(V + ε)` with `q` a C¹ minorant of `max(·, 0)` smoothed over
    /// width `w`, so that `-ε <= V_ε <= max(V - w/2, -ε)`.
    pub fn regularized(&self, eps: f64, width: f64) -> Vec<f64> {
        self.values.iter().map(|&v| -eps + soft_plus(v + eps, width)).collect()
    }

    /// Writes `node_x,node_y,value` rows.
    pub fn write_csv<W: Write>(&self, domain: &GridDomain, w: W) -> Result<()> {
        crate::io::write_node_table(domain, &self.values, "value", w)
    }

    /// Reads a node table written by [`Potential::write_csv`]; every node must be present.
    pub fn read_csv<R: Read>(domain: &GridDomain, r: R, kappa: Option<f64>) -> Result<Self> {
        let values = crate::io::read_node_table(domain, r)?;
        Ok(Potential::custom(values, kappa))
    }
}

fn soft_plus(u: f64, w: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if w <= 0.0 {
        u
    } else if u >= w {
        u - 0.5 * w
    } else {
        u * u / (2.0 * w)
    }
}

fn exterior_ball_value(centers: &[Point], r: f64, l: f64, p: Point) -> f64 {
    let at_r = comparison_unchecked(l, r);
    let mut best = 0.0f64;
    for z in centers {
        let s = ((p[0] - z[0]).powi(2) + (p[1] - z[1]).powi(2)).sqrt();
        if s < r {
            let v = (at_r.value - comparison_unchecked(l, s).value) / at_r.first;
            best = best.max(v);
        }
    }
    best
}

/// Unclamped extension `max_z V_z` of an exterior-ball potential; negative
/// outside all balls. Only meaningful within the comparison range of `Φ`.
fn exterior_ball_extension(centers: &[Point], r: f64, l: f64, p: Point) -> f64 {
    let at_r = comparison_unchecked(l, r);
    let mut best = f64::NEG_INFINITY;
    for z in centers {
        let s = ((p[0] - z[0]).powi(2) + (p[1] - z[1]).powi(2)).sqrt();
        if l > 0.0 && s * l.sqrt() >= std::f64::consts::PI {
            continue;
        }
        best = best.max((at_r.value - comparison_unchecked(l, s).value) / at_r.first);
    }
    if best == f64::NEG_INFINITY {
        0.0
    } else {
        best
    }
}

/// `V(x) = max_z (Φ(r) - Φ(|x - z|))₊ / Φ'(r)` over the given ball centers.
pub fn exterior_ball_potential(domain: &GridDomain, centers: &[Point], r: f64, l: f64) -> Result<Potential> {
    let kappa = kappa_for_ball_complement(l, r)?;
    for &z in centers {
        for i in domain.y_nodes() {
            let p = domain.point(i);
            let d = ((p[0] - z[0]).powi(2) + (p[1] - z[1]).powi(2)).sqrt();
            if d < r - domain.h {
                return Err(Error::CenterTooClose { center: z, distance: d, radius: r });
            }
        }
    }
    let values = (0..domain.len()).map(|i| exterior_ball_value(centers, r, l, domain.point(i))).collect();
    Ok(Potential {
        values,
        kappa: Some(kappa),
        analytic: AnalyticForm::ExteriorBall { centers: centers.to_vec(), radius: r, curvature: l },
    })
}

fn ring(center: Point, radius: f64, spacing: f64) -> Vec<Point> {
    let count = ((2.0 * std::f64::consts::PI * radius / spacing).ceil() as usize).max(8);
    (0..count)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

/// Ball centers whose radius-`r` balls cover the Ambient part of a fixture.
pub fn fixture_ball_centers(spec: &DomainSpec, r: f64) -> Result<Vec<Point>> {
    let h = spec.h;
    let spacing = 0.5 * h;
    match &spec.fixture {
        Fixture::Square => Ok(Vec::new()),
        Fixture::SquareMinusDiscs { discs } => {
            let mut centers = Vec::new();
            for d in discs {
                if r > d.radius + 1e-12 {
                    return Err(Error::InvalidSpec(format!("ball radius {r} exceeds hole radius {}", d.radius)));
                }
                let inner = d.radius - r;
                if inner <= spacing {
                    centers.push(d.center);
                    continue;
                }
                centers.extend(ring(d.center, inner, spacing));
                let n = (inner / h).ceil() as i64;
                for i in -n..=n {
                    for j in -n..=n {
                        let p = [d.center[0] + i as f64 * h, d.center[1] + j as f64 * h];
                        if (i * i + j * j) as f64 * h * h <= inner * inner {
                            centers.push(p);
                        }
                    }
                }
            }
            Ok(centers)
        }
        Fixture::Disc { center, radius } | Fixture::SlitDisc { center, radius } => Ok(ring(*center, radius + r, spacing)),
        Fixture::Pacman { center, radius, mouth_radius, mouth_angle } => {
            if (r - mouth_radius).abs() > 1e-12 {
                return Err(Error::InvalidSpec(format!("ball radius {r} must equal the mouth radius {mouth_radius}")));
            }
            let mut centers = ring(*center, radius + r, spacing);
            let reach = radius + r;
            let steps = (reach / spacing).ceil() as usize;
            for k in 0..=steps {
                let t = reach * k as f64 / steps as f64;
                centers.push([center[0] + t * mouth_angle.cos(), center[1] + t * mouth_angle.sin()]);
            }
            Ok(centers)
        }
        Fixture::LShape { .. } | Fixture::Mask { .. } => {
            Err(Error::InvalidSpec(format!("fixture {} has no exterior-ball covering", spec.fixture_name())))
        }
    }
}

/// Ball radius matching the fixture's geometric feature.
pub fn default_ball_radius(spec: &DomainSpec) -> f64 {
    match &spec.fixture {
        Fixture::Disc { radius, .. } | Fixture::SlitDisc { radius, .. } => radius.min(0.25),
        _ => spec.feature_size(),
    }
}

/// Graph signed distance to the Boundary nodes: negative in Y, positive outside.
pub fn signed_distance_potential(domain: &GridDomain) -> Result<Potential> {
    let boundary = domain.boundary_nodes();
    if boundary.is_empty() {
        return Err(Error::InvalidSpec("domain has no Boundary node".into()));
    }
    let map = multi_source_distance(domain, Weighting::Unit, &boundary, false)?;
    let values = (0..domain.len())
        .map(|i| match domain.kinds[i] {
            crate::grid::NodeKind::Boundary => 0.0,
            crate::grid::NodeKind::InY => -map.dist[i],
            crate::grid::NodeKind::Ambient => map.dist[i],
        })
        .collect();
    Ok(Potential { values, kappa: None, analytic: AnalyticForm::SignedDistance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub pass: bool,
    /// Largest `(V(γ_t) - rhs) / ℓ²` over all sampled interior points.
    pub worst_margin: f64,
    pub worst_pair: Option<(usize, usize)>,
    pub samples: usize,
    pub tolerance: f64,
}

/// Samples pairs in `region` and checks the κ-convexity inequality along
/// straight chords of the flat ambient chart, at points spaced at most `h/4`.
pub fn audit_kappa_convexity<R: Rng>(
    domain: &GridDomain,
    v: &Potential,
    kappa: f64,
    region: &[usize],
    samples: usize,
    tol: f64,
    rng: &mut R,
) -> Result<ConvexityReport> {
    if region.len() < 2 {
        return Err(Error::EmptyRegion);
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut worst_pair = None;
    for _ in 0..samples {
        let i = region[rng.gen_range(0..region.len())];
        let mut j = region[rng.gen_range(0..region.len())];
        while j == i {
            j = region[rng.gen_range(0..region.len())];
        }
        let margin = chord_margin(domain, v, kappa, domain.point(i), domain.point(j));
        if margin > worst {
            worst = margin;
            worst_pair = Some((i, j));
        }
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0;
    }
    Ok(ConvexityReport { pass: worst <= tol, worst_margin: worst, worst_pair, samples, tolerance: tol })
}

/// Worst normalized violation of the κ-convexity inequality along the chord `[a, b]`.
pub fn chord_margin(domain: &GridDomain, v: &Potential, kappa: f64, a: Point, b: Point) -> f64 {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    if len == 0.0 {
        return 0.0;
    }
    let (va, vb) = (v.eval_at(domain, a), v.eval_at(domain, b));
    let m = ((len / (0.25 * domain.h)).ceil() as usize).max(4);
    let mut worst = f64::NEG_INFINITY;
    for k in 1..m {
        let t = k as f64 / m as f64;
        let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let rhs = (1.0 - t) * va + t * vb - 0.5 * kappa * t * (1.0 - t) * len * len;
        worst = worst.max((v.eval_at(domain, p) - rhs) / (len * len));
    }
    worst
}

/// Minimum over band nodes (`0 < V <= band`) of the upwind local slope
/// `max_y (V(x) - V(y))₊ / |x - y|` over stencil neighbors.
///
/// Exterior-ball potentials are differenced through their unclamped
/// extension, so nodes next to the zero level set see the true slope rather
/// than the kink of the clamp.
pub fn gradient_lower_bound(domain: &GridDomain, v: &Potential, band: f64) -> Result<f64> {
    let values: Vec<f64> = match &v.analytic {
        AnalyticForm::ExteriorBall { centers, radius, curvature } => {
            (0..domain.len()).map(|i| exterior_ball_extension(centers, *radius, *curvature, domain.point(i))).collect()
        }
        _ => v.values.clone(),
    };
    let mut best: Option<f64> = None;
    for i in 0..domain.len() {
        if !(v.values[i] > 0.0 && v.values[i] <= band) {
            continue;
        }
        let vi = values[i];
        let slope = domain
            .neighbors(i)
            .iter()
            .map(|&(j, e)| (vi - values[j]).max(0.0) / domain.edges[e].length)
            .fold(0.0, f64::max);
        best = Some(best.map_or(slope, |b: f64| b.min(slope)));
    }
    best.ok_or(Error::EmptyBand(band))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_domain;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn comparison_examples() {
        assert_eq!(phi_comparison(0.0, 2.0).unwrap().value, 2.0);
        assert_eq!(phi_comparison(0.0, 0.0).unwrap().value, 0.0);
        assert_relative_eq!(phi_comparison(-1.0, 1.0).unwrap().value, 1.0f64.cosh(), max_relative = 1e-15);
        assert_relative_eq!(phi_comparison(-1.0, 1.0).unwrap().value, 1.5430806348152437, max_relative = 1e-15);
        assert!(matches!(phi_comparison(1.0, 2.0), Err(Error::RadiusOutOfRange { .. })));
    }

    #[test]
    fn comparison_derivatives_match_finite_differences() {
        for l in [-2.0, 0.0, 1.5] {
            for r in [0.1, 0.4, 0.9] {
                let c = phi_comparison(l, r).unwrap();
                let d = 1e-5;
                let fd1 = (phi_comparison(l, r + d).unwrap().value - phi_comparison(l, r - d).unwrap().value) / (2.0 * d);
                let fd2 = (phi_comparison(l, r + d).unwrap().first - phi_comparison(l, r - d).unwrap().first) / (2.0 * d);
                assert_relative_eq!(c.first, fd1, max_relative = 1e-8);
                assert_relative_eq!(c.second, fd2, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa_for_ball_complement(0.0, 0.25).unwrap(), -4.0);
        assert_relative_eq!(kappa_for_ball_complement(1.0, std::f64::consts::FRAC_PI_4).unwrap(), -1.0, epsilon = 1e-15);
        let k = kappa_for_ball_complement(-1.0, 10.0).unwrap();
        assert_relative_eq!(k, -1.0 / 10f64.tanh(), max_relative = 1e-15);
        assert!(k < -1.0 && k > -1.00000001);
    }

    proptest! {
        #[test]
        fn flat_kappa_times_radius_is_minus_one(r in 1e-6f64..1e6) {
            // exact up to the final rounding of the product
            prop_assert!((kappa_for_ball_complement(0.0, r).unwrap() * r + 1.0).abs() <= f64::EPSILON);
        }

        #[test]
        fn kappa_is_minus_second_over_first(l in -4.0f64..4.0, frac in 0.01f64..0.99) {
            let r = if l > 0.0 { frac * std::f64::consts::FRAC_PI_2 / l.sqrt() } else { frac * 2.0 };
            let c = phi_comparison(l, r).unwrap();
            let k = kappa_for_ball_complement(l, r).unwrap();
            prop_assert!((k + c.second / c.first).abs() <= 1e-10 * k.abs().max(1.0));
            prop_assert!(k <= 0.0 || l > 0.0);
        }
    }

    fn disc_hole(h: f64) -> (DomainSpec, GridDomain) {
        let spec = DomainSpec::new(Fixture::SquareMinusDiscs { discs: vec![crate::grid::Disc { center: [0.5, 0.5], radius: 0.25 }] }, h);
        let d = build_domain(&spec).unwrap();
        (spec, d)
    }

    #[test]
    fn single_ball_closed_form() {
        let (_, d) = disc_hole(1.0 / 32.0);
        let r = 0.25;
        let v = exterior_ball_potential(&d, &[[0.5, 0.5]], r, 0.0).unwrap();
        for i in 0..d.len() {
            let p = d.point(i);
            let s = ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt();
            let expected = if s < r { (r * r - s * s) / (2.0 * r) } else { 0.0 };
            assert_relative_eq!(v.values[i], expected, epsilon = 1e-15);
            if d.in_y(i) {
                assert_eq!(v.values[i], 0.0);
            } else {
                assert!(v.values[i] > 0.0);
            }
        }
        let on_sphere = v.eval_at(&d, [0.75, 0.5]);
        assert_eq!(on_sphere, 0.0);
    }

    #[test]
    fn overlapping_balls_take_max() {
        let (_, d) = disc_hole(1.0 / 32.0);
        let r = 0.25;
        let (z1, z2) = ([0.45, 0.5], [0.55, 0.5]);
        let v = exterior_ball_potential(&d, &[z1, z2], 0.2, 0.0).unwrap();
        let single = |z: Point, p: Point| {
            let s2 = (p[0] - z[0]).powi(2) + (p[1] - z[1]).powi(2);
            ((0.04 - s2) / 0.4).max(0.0)
        };
        let p = [0.5, 0.53];
        assert_relative_eq!(v.eval_at(&d, p), single(z1, p).max(single(z2, p)), epsilon = 1e-15);
        let _ = r;
    }

    #[test]
    fn center_too_close_is_rejected() {
        let (_, d) = disc_hole(1.0 / 32.0);
        let err = exterior_ball_potential(&d, &[[0.6, 0.5]], 0.25, 0.0);
        assert!(matches!(err, Err(Error::CenterTooClose { .. })));
    }

    #[test]
    fn signed_distance_examples() {
        let d = build_domain(&DomainSpec::new(Fixture::Square, 0.25)).unwrap();
        let v = signed_distance_potential(&d).unwrap();
        assert_eq!(v.values[d.index(2, 2)], -0.5);
        for i in d.boundary_nodes() {
            assert_eq!(v.values[i], 0.0);
        }
        let (_, hole) = disc_hole(1.0 / 16.0);
        let sv = signed_distance_potential(&hole).unwrap();
        let mut checked = 0;
        for i in hole.ambient_nodes() {
            let axis_adjacent = hole.neighbors(i).iter().any(|&(j, e)| {
                hole.kinds[j] == crate::grid::NodeKind::Boundary && hole.edges[e].length == hole.h
            });
            if axis_adjacent {
                assert_eq!(sv.values[i], hole.h);
                checked += 1;
            }
        }
        assert!(checked > 0);
        assert_relative_eq!(gradient_lower_bound(&hole, &sv, 1.0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_potential_audits_with_zero_margin() {
        let d = build_domain(&DomainSpec::new(Fixture::Square, 0.125)).unwrap();
        let v = Potential::zero(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rep = audit_kappa_convexity(&d, &v, 0.0, &d.y_nodes(), 50, 1e-12, &mut rng).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.worst_margin, 0.0);
        assert!(matches!(audit_kappa_convexity(&d, &v, 0.0, &[], 5, 0.1, &mut rng), Err(Error::EmptyRegion)));
    }

    fn band(d: &GridDomain, v: &Potential, upper: f64) -> Vec<usize> {
        (0..d.len()).filter(|&i| v.values[i] > 0.0 && v.values[i] <= upper).collect()
    }

    #[test]
    fn exterior_ball_audit_passes_with_sharp_kappa_and_fails_above() {
        let h = 1.0 / 64.0;
        let (spec, d) = disc_hole(h);
        let r = 0.25;
        let centers = fixture_ball_centers(&spec, r).unwrap();
        let v = exterior_ball_potential(&d, &centers, r, 0.0).unwrap();
        let kappa = v.kappa.unwrap();
        let region = band(&d, &v, r / 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rep = audit_kappa_convexity(&d, &v, kappa, &region, 400, 2.0 * h, &mut rng).unwrap();
        assert!(rep.pass, "{rep:?}");
        // the inequality only weakens for smaller kappa
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let weaker = audit_kappa_convexity(&d, &v, kappa - 1.0, &region, 400, 2.0 * h, &mut rng).unwrap();
        assert!(weaker.pass && weaker.worst_margin <= rep.worst_margin);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sharp = audit_kappa_convexity(&d, &v, kappa + 1.0, &region, 400, 2.0 * h, &mut rng).unwrap();
        assert!(!sharp.pass, "{sharp:?}");
    }

    #[test]
    fn pointwise_max_keeps_convexity() {
        let h = 1.0 / 64.0;
        let (_, d) = disc_hole(h);
        let a = exterior_ball_potential(&d, &[[0.45, 0.5]], 0.2, 0.0).unwrap();
        let b = exterior_ball_potential(&d, &[[0.55, 0.5]], 0.2, 0.0).unwrap();
        let both = exterior_ball_potential(&d, &[[0.45, 0.5], [0.55, 0.5]], 0.2, 0.0).unwrap();
        for i in 0..d.len() {
            assert_eq!(both.values[i], a.values[i].max(b.values[i]));
        }
        let region: Vec<usize> = (0..d.len()).filter(|&i| both.values[i] > 0.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rep = audit_kappa_convexity(&d, &both, -5.0, &region, 300, 2.0 * h, &mut rng).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn exterior_ball_slope_on_thin_band() {
        let h = 1.0 / 64.0;
        let (spec, d) = disc_hole(h);
        let r = 0.25;
        let v = exterior_ball_potential(&d, &fixture_ball_centers(&spec, r).unwrap(), r, 0.0).unwrap();
        // continuum slope s/r >= 3/4 exactly when V <= 7r/32
        let slope = gradient_lower_bound(&d, &v, 7.0 * r / 32.0).unwrap();
        assert!(slope >= 0.74, "slope {slope}");
        let wide = gradient_lower_bound(&d, &v, r / 4.0).unwrap();
        assert!(wide >= 0.69, "slope {wide}");
    }

    #[test]
    fn constant_band_has_zero_slope() {
        let d = build_domain(&DomainSpec::new(Fixture::Square, 0.25)).unwrap();
        let v = Potential::custom(vec![0.1; d.len()], None);
        assert_eq!(gradient_lower_bound(&d, &v, 0.2).unwrap(), 0.0);
        assert!(matches!(gradient_lower_bound(&d, &v, 0.05), Err(Error::EmptyBand(_))));
    }

    #[test]
    fn fixture_potentials_vanish_exactly_on_y() {
        let h = 1.0 / 32.0;
        for fixture in [
            Fixture::Pacman { center: [0.5, 0.5], radius: 0.5, mouth_radius: 0.25, mouth_angle: 0.0 },
            Fixture::Disc { center: [0.5, 0.5], radius: 0.4 },
            Fixture::SquareMinusDiscs { discs: vec![crate::grid::Disc { center: [0.5, 0.5], radius: 0.3 }] },
        ] {
            let spec = DomainSpec::new(fixture, h);
            let d = build_domain(&spec).unwrap();
            let r = default_ball_radius(&spec);
            let v = exterior_ball_potential(&d, &fixture_ball_centers(&spec, r).unwrap(), r, 0.0).unwrap();
            for i in 0..d.len() {
                assert!(v.values[i] >= 0.0);
                if d.in_y(i) {
                    assert_eq!(v.values[i], 0.0, "{} node {i}", spec.fixture_name());
                } else {
                    assert!(v.values[i] > 0.0, "{} node {i} at {:?}", spec.fixture_name(), d.point(i));
                }
            }
        }
    }

    #[test]
    fn regularized_shift_matches_max_away_from_kink() {
        let v = Potential::custom(vec![-1.0, -0.05, 0.0, 0.3], None);
        let out = v.regularized(0.05, 0.01);
        assert_eq!(out[0], -0.05);
        assert_eq!(out[1], -0.05);
        assert_relative_eq!(out[2], -0.005, epsilon = 1e-15);
        assert_relative_eq!(out[3], 0.295, epsilon = 1e-15);
        for (o, v) in out.iter().zip(&v.values) {
            assert!(*o >= -0.05 && *o <= v.max(-0.05));
        }
    }
}
