//! Conformal transforms `φ = exp(-κ'V)` of the ambient metric, the `φ_k`
//! approximation sequence, geodesic containment checks and the curvature
//! constants of the transformed space.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{graph_distance, multi_source_distance, path_from_map, GridDomain, Weighting};
use crate::potentials::Potential;

/// Per-node positive conformal factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricField {
    pub phi: Vec<f64>,
    pub kappa_prime: f64,
    /// Index `k` when the field belongs to the `φ_k` sequence.
    pub sequence_k: Option<u32>,
    /// Regularization shift `ε` used for sequence fields.
    pub epsilon: Option<f64>,
}

impl MetricField {
    pub fn unit(n: usize) -> Self {
        MetricField { phi: vec![1.0; n], kappa_prime: 0.0, sequence_k: None, epsilon: None }
    }

    pub fn weighting(&self) -> Weighting<'_> {
        Weighting::Conformal(&self.phi)
    }

    pub fn min(&self) -> f64 {
        self.phi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Minimum of `φ` over Y nodes.
    pub fn min_on_y(&self, domain: &GridDomain) -> f64 {
        domain.y_nodes().into_iter().map(|i| self.phi[i]).fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, domain: &GridDomain, w: W) -> Result<()> {
        crate::io::write_node_table(domain, &self.phi, "phi", w)
    }
}

/// `φ(x) = exp(-κ' V(x))`; the identity field when `κ' = 0`.
pub fn conformal_factor(v: &Potential, kappa_prime: f64) -> MetricField {
    let phi = if kappa_prime == 0.0 {
        vec![1.0; v.values.len()]
    } else {
        v.values.iter().map(|&x| (-kappa_prime * x).exp()).collect()
    };
    MetricField { phi, kappa_prime, sequence_k: None, epsilon: None }
}

/// Shift `ε(k)` making `k/(k+1) <= φ_k <= 1` on Y; `None` when κ = 0 (any shift works).
pub fn sequence_shift(kappa: f64, k: u32) -> Option<f64> {
    if kappa < 0.0 {
        // stay a hair inside the admissible range so rounding cannot cross k/(k+1)
        Some((1.0 / k as f64).ln_1p() / (-2.0 * kappa) * (1.0 - 1e-9))
    } else {
        None
    }
}

/// `φ_k = exp(-2κ V_ε)` with the regularized shift `V_ε` and `ε = ε(k)`.
pub fn phi_sequence(domain: &GridDomain, v: &Potential, kappa: f64, k: u32) -> Result<MetricField> {
    if kappa > 0.0 || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("sequence needs kappa <= 0, got {kappa}")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("sequence index k must be >= 1".into()));
    }
    let kappa_prime = 2.0 * kappa;
    match sequence_shift(kappa, k) {
        None => Ok(MetricField { phi: vec![1.0; v.values.len()], kappa_prime, sequence_k: Some(k), epsilon: None }),
        Some(eps) => {
            let width = domain.h.min(0.5 * eps);
            let shifted = v.regularized(eps, width);
            let phi = shifted.iter().map(|&x| (-kappa_prime * x).exp()).collect();
            Ok(MetricField { phi, kappa_prime, sequence_k: Some(k), epsilon: Some(eps) })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub pass: bool,
    pub pairs: usize,
    pub excursion_pairs: usize,
    pub traced_nodes: usize,
    pub excursion_nodes: usize,
    pub excursion_fraction: f64,
    /// Largest hop distance from Y reached by any traced node.
    pub max_hops_outside: usize,
    pub worst_pair: Option<(usize, usize)>,
    pub tol_cells: usize,
}

/// Traces the transformed-metric geodesic on the unrestricted graph for every
/// pair and counts nodes farther than `tol_cells` hops from Y.
pub fn containment_check(domain: &GridDomain, field: &MetricField, pairs: &[(usize, usize)], tol_cells: usize) -> Result<ContainmentReport> {
    let hops = domain.hops_to_y();
    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in pairs {
        if !domain.in_y(a) || !domain.in_y(b) {
            return Err(Error::InvalidParameter(format!("pair ({a}, {b}) has an endpoint outside Y")));
        }
        by_source.entry(a).or_default().push(b);
    }
    let mut report = ContainmentReport {
        pass: true,
        pairs: pairs.len(),
        excursion_pairs: 0,
        traced_nodes: 0,
        excursion_nodes: 0,
        excursion_fraction: 0.0,
        max_hops_outside: 0,
        worst_pair: None,
        tol_cells,
    };
    let mut worst_count = 0;
    for (&a, targets) in &by_source {
        let map = graph_distance(domain, field.weighting(), a, false)?;
        for &b in targets {
            let path = path_from_map(domain, field.weighting(), &map, b)?;
            let outside = path.nodes.iter().filter(|&&i| hops[i] > tol_cells).count();
            report.traced_nodes += path.nodes.len();
            report.excursion_nodes += outside;
            report.max_hops_outside = report.max_hops_outside.max(path.nodes.iter().map(|&i| hops[i]).max().unwrap_or(0));
            if outside > 0 {
                report.excursion_pairs += 1;
                if outside > worst_count {
                    worst_count = outside;
                    report.worst_pair = Some((a, b));
                }
            }
        }
    }
    if report.traced_nodes > 0 {
        report.excursion_fraction = report.excursion_nodes as f64 / report.traced_nodes as f64;
    }
    report.pass = report.excursion_nodes == 0;
    Ok(report)
}

/// Samples Y-node pairs inside one chart: both endpoints lie within
/// `near_band` (graph distance) of the Ambient set and at most `chart_radius`
/// (Euclidean) apart.
pub fn sample_chart_pairs<R: Rng>(
    domain: &GridDomain,
    chart_radius: f64,
    near_band: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let ambient = domain.ambient_nodes();
    let y = domain.y_nodes();
    let near: Vec<usize> = if ambient.is_empty() {
        y
    } else {
        let map = multi_source_distance(domain, Weighting::Unit, &ambient, false)?;
        y.into_iter().filter(|&i| map.dist[i] <= near_band).collect()
    };
    if near.len() < 2 {
        return Err(Error::EmptyRegion);
    }
    let mut pairs = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while pairs.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(Error::EmptyRegion);
        }
        let a = near[rng.gen_range(0..near.len())];
        let pa = domain.point(a);
        let candidates: Vec<usize> = near
            .iter()
            .copied()
            .filter(|&j| {
                let pj = domain.point(j);
                j != a && ((pj[0] - pa[0]).powi(2) + (pj[1] - pa[1]).powi(2)).sqrt() <= chart_radius
            })
            .collect();
        if candidates.is_empty() {
            continue;
        }
        pairs.push((a, candidates[rng.gen_range(0..candidates.len())]));
    }
    Ok(pairs)
}

/// Uniformly sampled distinct Y-node pairs.
pub fn sample_y_pairs<R: Rng>(domain: &GridDomain, count: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let y = domain.y_nodes();
    if y.len() < 2 {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let a = y[rng.gen_range(0..y.len())];
            let mut b = a;
            while b == a {
                b = y[rng.gen_range(0..y.len())];
            }
            (a, b)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub pass: bool,
    pub k: u32,
    pub lower_factor: f64,
    pub pairs: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `min (d_k - k/(k+1) d_Y) / d_Y` over pairs.
    pub worst_lower_slack: f64,
    /// `min (d_Y - d_k) / d_Y` over pairs.
    pub worst_upper_slack: f64,
}

/// Checks `k/(k+1) d_Y <= d_k <= d_Y` with both distances on Y-restricted edges.
pub fn sandwich_check(domain: &GridDomain, field: &MetricField, pairs: &[(usize, usize)]) -> Result<SandwichReport> {
    let k = field
        .sequence_k
        .ok_or_else(|| Error::InvalidParameter("sandwich check needs a field from the phi_k sequence".into()))?;
    let c = k as f64 / (k as f64 + 1.0);
    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in pairs {
        by_source.entry(a).or_default().push(b);
    }
    let mut rep = SandwichReport {
        pass: true,
        k,
        lower_factor: c,
        pairs: pairs.len(),
        min_ratio: f64::INFINITY,
        max_ratio: f64::NEG_INFINITY,
        worst_lower_slack: f64::INFINITY,
        worst_upper_slack: f64::INFINITY,
    };
    for (&a, targets) in &by_source {
        let dy = graph_distance(domain, Weighting::Unit, a, true)?;
        let dk = graph_distance(domain, field.weighting(), a, true)?;
        for &b in targets {
            let (y, kd) = (dy.distance_to(b)?, dk.distance_to(b)?);
            if y == 0.0 {
                continue;
            }
            let ratio = kd / y;
            rep.min_ratio = rep.min_ratio.min(ratio);
            rep.max_ratio = rep.max_ratio.max(ratio);
            rep.worst_lower_slack = rep.worst_lower_slack.min((kd - c * y) / y);
            rep.worst_upper_slack = rep.worst_upper_slack.min((y - kd) / y);
        }
    }
    let tol = 1e-12;
    rep.pass = rep.worst_lower_slack >= -tol && rep.worst_upper_slack >= -tol;
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureInputs {
    pub k: f64,
    pub n: f64,
    pub kappa: f64,
    pub kappa_prime: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureConstants {
    pub k_prime: f64,
    pub n_prime: f64,
    pub k_double_prime: f64,
    /// `κ' < κ`, the regime in which the transform convexifies Y.
    pub convexifying: bool,
}

/// `N' = N + 1`, `K' = K - N'κκ' + N'²κ'²C1` and
/// `K'' = e^{2κ'C0} [K - (N+1)κκ' + (N+1)²κ'²C1 + κ'C2 - (N-3)κ'²C1 + (N-1)κ'C3]`.
pub fn curvature_bound(inp: &CurvatureInputs) -> Result<CurvatureConstants> {
    if !(inp.n >= 1.0) || !inp.n.is_finite() {
        return Err(Error::InvalidDimension(inp.n));
    }
    let all = [inp.k, inp.kappa, inp.kappa_prime, inp.c0, inp.c1, inp.c2, inp.c3];
    if all.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("curvature inputs must be finite".into()));
    }
    let CurvatureInputs { k, n, kappa, kappa_prime: kp, c0, c1, c2, c3 } = *inp;
    let n_prime = n + 1.0;
    let k_prime = k - n_prime * kappa * kp + n_prime * n_prime * kp * kp * c1;
    let bracket = k - (n + 1.0) * kappa * kp + (n + 1.0) * (n + 1.0) * kp * kp * c1 + kp * c2 - (n - 3.0) * kp * kp * c1
        + (n - 1.0) * kp * c3;
    let k_double_prime = (2.0 * kp * c0).exp() * bracket;
    Ok(CurvatureConstants { k_prime, n_prime, k_double_prime, convexifying: kp < kappa })
}

/// Grid estimates of the regularity constants of a potential (not certified bounds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityEstimates {
    /// max V
    pub c0: f64,
    /// max local slope squared
    pub c1: f64,
    /// max five-point Laplacian
    pub c2: f64,
    /// max second difference along axis and diagonal directions
    pub c3: f64,
    pub certified: bool,
}

pub fn estimate_regularity_constants(domain: &GridDomain, v: &Potential) -> RegularityEstimates {
    let vals = &v.values;
    let c0 = v.max_value();
    let mut c1 = 0.0f64;
    for i in 0..domain.len() {
        for &(j, e) in domain.neighbors(i) {
            let s = (vals[i] - vals[j]).abs() / domain.edges[e].length;
            c1 = c1.max(s * s);
        }
    }
    let mut c2 = f64::NEG_INFINITY;
    let mut c3 = f64::NEG_INFINITY;
    let h = domain.h;
    for iy in 1..domain.ny.saturating_sub(1) {
        for ix in 1..domain.nx.saturating_sub(1) {
            let at = |dx: i64, dy: i64| vals[domain.index((ix as i64 + dx) as usize, (iy as i64 + dy) as usize)];
            let center = at(0, 0);
            let lap = (at(1, 0) + at(-1, 0) + at(0, 1) + at(0, -1) - 4.0 * center) / (h * h);
            c2 = c2.max(lap);
            for (dx, dy) in [(1, 0), (0, 1), (1, 1), (1, -1)] {
                let len2 = ((dx * dx + dy * dy) as f64) * h * h;
                c3 = c3.max((at(dx, dy) + at(-dx, -dy) - 2.0 * center) / len2);
            }
        }
    }
    if c2 == f64::NEG_INFINITY {
        c2 = 0.0;
        c3 = 0.0;
    }
    RegularityEstimates { c0, c1, c2, c3, certified: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, Disc, DomainSpec, Fixture};
    use crate::potentials::{default_ball_radius, exterior_ball_potential, fixture_ball_centers};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn factor_examples() {
        let v = Potential::custom(vec![0.0, 0.5, -0.3], None);
        let id = conformal_factor(&v, 0.0);
        assert!(id.phi.iter().all(|&p| p == 1.0));
        let f = conformal_factor(&v, -2.0);
        assert_eq!(f.phi[0], 1.0);
        assert_relative_eq!(f.phi[1], std::f64::consts::E, max_relative = 1e-15);
        assert!(f.phi[2] < 1.0);
    }

    #[test]
    fn identity_field_reproduces_ambient_distance() {
        let spec = DomainSpec::new(Fixture::Pacman { center: [0.5, 0.5], radius: 0.5, mouth_radius: 0.25, mouth_angle: 0.0 }, 1.0 / 16.0);
        let d = build_domain(&spec).unwrap();
        let field = conformal_factor(&Potential::zero(&d), 0.0);
        let a = graph_distance(&d, Weighting::Unit, 40, false).unwrap();
        let b = graph_distance(&d, field.weighting(), 40, false).unwrap();
        assert_eq!(a.dist, b.dist);
    }

    fn hole_domain(h: f64) -> (DomainSpec, GridDomain, Potential) {
        let spec = DomainSpec::new(Fixture::SquareMinusDiscs { discs: vec![Disc { center: [0.5, 0.5], radius: 0.25 }] }, h);
        let d = build_domain(&spec).unwrap();
        let r = default_ball_radius(&spec);
        let v = exterior_ball_potential(&d, &fixture_ball_centers(&spec, r).unwrap(), r, 0.0).unwrap();
        (spec, d, v)
    }

    #[test]
    fn sequence_bounds_and_monotonicity() {
        let (_, d, v) = hole_domain(1.0 / 32.0);
        let f0 = phi_sequence(&d, &v, 0.0, 3).unwrap();
        assert!(f0.phi.iter().all(|&p| p == 1.0));
        let eps = sequence_shift(-1.0, 9).unwrap();
        assert!(eps <= (10.0f64 / 9.0).ln() / 2.0 && eps > 0.05268);
        let mut last = 0.0;
        for k in [1, 4, 9, 19, 99] {
            let f = phi_sequence(&d, &v, -1.0, k).unwrap();
            let lo = f.min_on_y(&d);
            let hi = d.y_nodes().into_iter().map(|i| f.phi[i]).fold(0.0, f64::max);
            assert!(lo >= k as f64 / (k as f64 + 1.0), "k={k} min {lo}");
            assert!(hi <= 1.0);
            assert!(lo >= last);
            last = lo;
        }
    }

    #[test]
    fn sandwich_examples() {
        let (_, d, v) = hole_domain(1.0 / 32.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs = sample_y_pairs(&d, 30, &mut rng);
        let flat = phi_sequence(&d, &v, 0.0, 4).unwrap();
        let rep = sandwich_check(&d, &flat, &pairs).unwrap();
        assert_eq!(rep.min_ratio, 1.0);
        assert_eq!(rep.max_ratio, 1.0);
        let f = phi_sequence(&d, &v, -1.0, 9).unwrap();
        let rep = sandwich_check(&d, &f, &pairs).unwrap();
        assert!(rep.pass && rep.min_ratio >= 0.9 && rep.max_ratio <= 1.0, "{rep:?}");
        // single edge: ratio is the endpoint mean of phi
        let e = d.edges.iter().find(|e| e.in_y).unwrap();
        let rep = sandwich_check(&d, &f, &[(e.a, e.b)]).unwrap();
        assert_relative_eq!(rep.min_ratio, 0.5 * (f.phi[e.a] + f.phi[e.b]), max_relative = 1e-14);
    }

    #[test]
    fn field_bounds_distances() {
        let (_, d, v) = hole_domain(1.0 / 16.0);
        let f = conformal_factor(&v, -8.0);
        let unit = graph_distance(&d, Weighting::Unit, 5, false).unwrap();
        let warped = graph_distance(&d, f.weighting(), 5, false).unwrap();
        for (u, w) in unit.dist.iter().zip(&warped.dist) {
            assert!(f.min() * u <= w * (1.0 + 1e-14) && *w <= f.max() * u * (1.0 + 1e-14));
        }
    }

    #[test]
    fn convex_square_has_no_excursions() {
        let d = build_domain(&DomainSpec::new(Fixture::Square, 1.0 / 16.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs = sample_chart_pairs(&d, 0.3, 0.1, 40, &mut rng).unwrap();
        let field = conformal_factor(&Potential::zero(&d), 0.0);
        let rep = containment_check(&d, &field, &pairs, 1).unwrap();
        assert!(rep.pass && rep.excursion_nodes == 0);
    }

    #[test]
    fn pacman_notch_control_and_transform() {
        let spec = DomainSpec::new(Fixture::Pacman { center: [0.5, 0.5], radius: 0.5, mouth_radius: 0.25, mouth_angle: 0.0 }, 1.0 / 32.0);
        let d = build_domain(&spec).unwrap();
        let r = default_ball_radius(&spec);
        let v = exterior_ball_potential(&d, &fixture_ball_centers(&spec, r).unwrap(), r, 0.0).unwrap();
        // two points hugging the round end of the slot
        let a = d.nearest_node([0.5 + 0.26 * 1.75f64.cos(), 0.5 + 0.26 * 1.75f64.sin()]);
        let b = d.nearest_node([0.5 + 0.26 * 3.35f64.cos(), 0.5 + 0.26 * 3.35f64.sin()]);
        assert!(d.in_y(a) && d.in_y(b));
        let control = containment_check(&d, &conformal_factor(&v, 0.0), &[(a, b)], 1).unwrap();
        assert!(!control.pass, "{control:?}");
        let kappa = v.kappa.unwrap();
        let warped = containment_check(&d, &conformal_factor(&v, 2.0 * kappa), &[(a, b)], 1).unwrap();
        assert!(warped.pass, "{warped:?}");
    }

    #[test]
    fn curvature_examples() {
        let inp = CurvatureInputs { k: 0.0, n: 2.0, kappa: -1.0, kappa_prime: -2.0, c0: 1.0, c1: 1.0, c2: 1.0, c3: 1.0 };
        let out = curvature_bound(&inp).unwrap();
        // hand evaluation: K' = 0 - 3*2 + 9*4 = 30; bracket = 0 - 6 + 36 - 2 + 4 - 2 = 30
        assert_eq!(out.n_prime, 3.0);
        assert_eq!(out.k_prime, 30.0);
        assert_relative_eq!(out.k_double_prime, (-4.0f64).exp() * 30.0, max_relative = 1e-15);
        assert!(out.convexifying);
        let same = curvature_bound(&CurvatureInputs { kappa_prime: 0.0, k: -3.7, ..inp }).unwrap();
        assert_eq!(same.k_double_prime, -3.7);
        assert!(matches!(curvature_bound(&CurvatureInputs { n: 0.5, ..inp }), Err(Error::InvalidDimension(_))));
    }

    proptest! {
        #[test]
        fn prefactor_scales_with_c0(k in -5.0f64..5.0, kp in -3.0f64..-0.01, c0 in 0.0f64..2.0, dc in 0.0f64..1.0) {
            let inp = CurvatureInputs { k, n: 2.0, kappa: -0.5, kappa_prime: kp, c0, c1: 0.3, c2: 0.2, c3: 0.1 };
            let a = curvature_bound(&inp).unwrap().k_double_prime;
            let b = curvature_bound(&CurvatureInputs { c0: c0 + dc, ..inp }).unwrap().k_double_prime;
            prop_assert!((b - a * (2.0 * kp * dc).exp()).abs() <= 1e-12 * a.abs().max(1e-300));
            prop_assert!(b.abs() <= a.abs() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn regularity_estimates_of_a_quadratic() {
        let d = build_domain(&DomainSpec::new(Fixture::Square, 1.0 / 16.0)).unwrap();
        let v = Potential::from_fn(&d, Some(1.0), |p| 0.5 * (p[0] * p[0] + p[1] * p[1]));
        let est = estimate_regularity_constants(&d, &v);
        assert_relative_eq!(est.c0, 1.0);
        assert_relative_eq!(est.c2, 2.0, max_relative = 1e-9);
        assert_relative_eq!(est.c3, 1.0, max_relative = 1e-9);
        assert!(est.c1 > 1.8 && est.c1 <= 2.0);
        assert!(!est.certified);
    }
}
