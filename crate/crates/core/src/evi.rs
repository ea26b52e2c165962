//! Gradient flows of a potential in the flat ambient chart: hitting times of
//! Y, the projection `x ↦ x_{T(x)}`, contraction and ratio-bound tests and the
//! length-shortening property of the projection under a conformal field.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::conformal::MetricField;
use crate::error::{Error, Result};
use crate::grid::{GridDomain, Point};
use crate::potentials::Potential;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: Point,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointTrajectory {
    pub points: Vec<TrajectoryPoint>,
    pub hit_time: Option<f64>,
    pub step_size: f64,
}

impl PointTrajectory {
    pub fn final_point(&self) -> Point {
        self.points.last().expect("trajectory is never empty").x
    }

    /// Position at time `t` by linear interpolation; constant after the last sample.
    pub fn position_at(&self, t: f64) -> Point {
        let pts = &self.points;
        if t <= pts[0].t {
            return pts[0].x;
        }
        let last = pts[pts.len() - 1];
        if t >= last.t {
            return last.x;
        }
        let k = pts.partition_point(|p| p.t <= t);
        let (a, b) = (pts[k - 1], pts[k]);
        let s = (t - a.t) / (b.t - a.t);
        [a.x[0] + s * (b.x[0] - a.x[0]), a.x[1] + s * (b.x[1] - a.x[1])]
    }

    /// Writes `t,x,y,V` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "x", "y", "V"])?;
        for p in &self.points {
            wtr.serialize((p.t, p.x[0], p.x[1], p.value))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn euclid(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Explicit Euler descent `x ← x - dt ∇V(x)` until `V <= 0` or `t_max`.
/// A step is retried with half the step size while it fails to decrease V.
pub fn descend(domain: &GridDomain, v: &Potential, x0: Point, dt: f64, t_max: f64) -> Result<PointTrajectory> {
    if !(dt > 0.0) || !(t_max >= 0.0) {
        return Err(Error::InvalidParameter(format!("need dt > 0 and t_max >= 0, got dt = {dt}, t_max = {t_max}")));
    }
    if !domain.contains_point(x0) {
        return Err(Error::LeftGrid { point: x0 });
    }
    let mut x = x0;
    let mut value = v.eval_at(domain, x);
    let mut t = 0.0;
    let mut points = vec![TrajectoryPoint { t, x, value }];
    if value <= 0.0 {
        return Ok(PointTrajectory { points, hit_time: Some(0.0), step_size: dt });
    }
    let min_step = dt * 1e-12;
    while t < t_max {
        let g = v.gradient_at(domain, x);
        let mut step = dt.min(t_max - t);
        loop {
            let next = [x[0] - step * g[0], x[1] - step * g[1]];
            if !domain.contains_point(next) {
                return Err(Error::LeftGrid { point: next });
            }
            let next_value = v.eval_at(domain, next);
            if next_value <= 0.0 {
                let (s, hit) = locate_hit(domain, v, x, value, next, next_value);
                let hit_time = t + s * step;
                points.push(TrajectoryPoint { t: hit_time, x: hit, value: v.eval_at(domain, hit) });
                return Ok(PointTrajectory { points, hit_time: Some(hit_time), step_size: dt });
            }
            if next_value < value {
                t += step;
                x = next;
                value = next_value;
                points.push(TrajectoryPoint { t, x, value });
                break;
            }
            step *= 0.5;
            if step < min_step {
                return Err(Error::StepCollapse { t, value });
            }
        }
    }
    Ok(PointTrajectory { points, hit_time: None, step_size: dt })
}

/// Fraction of the last step at which V reaches zero: linear interpolation of
/// V as first guess, refined by bisection keeping the `V <= 0` end.
fn locate_hit(domain: &GridDomain, v: &Potential, a: Point, va: f64, b: Point, vb: f64) -> (f64, Point) {
    let at = |s: f64| [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
    let (mut lo, mut hi) = (0.0, 1.0);
    let guess = va / (va - vb);
    if guess > 0.0 && guess < 1.0 {
        if v.eval_at(domain, at(guess)) <= 0.0 {
            hi = guess;
        } else {
            lo = guess;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if v.eval_at(domain, at(mid)) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (hi, at(hi))
}

/// Horizon used when a flow is run until it hits Y.
pub const HIT_HORIZON: f64 = 50.0;

/// The projection `x ↦ x_{T(x)}`; the identity on `{V <= 0}`.
pub fn project_to_y(domain: &GridDomain, v: &Potential, x: Point, dt: f64) -> Result<Point> {
    let traj = descend(domain, v, x, dt, HIT_HORIZON)?;
    match traj.hit_time {
        Some(_) => Ok(traj.final_point()),
        None => Err(Error::NoConvergence { iterations: traj.points.len(), residual: traj.points.last().map_or(f64::NAN, |p| p.value) }),
    }
}

/// Hitting time `T(x)`.
pub fn hitting_time(domain: &GridDomain, v: &Potential, x: Point, dt: f64) -> Result<f64> {
    let traj = descend(domain, v, x, dt, HIT_HORIZON)?;
    traj.hit_time
        .ok_or(Error::NoConvergence { iterations: traj.points.len(), residual: traj.points.last().map_or(f64::NAN, |p| p.value) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCurve {
    pub times: Vec<f64>,
    /// `e^{κ' t} |x_t - y_t| / |x_0 - y_0|`
    pub ratios: Vec<f64>,
    pub sup_ratio: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Runs both flows up to `horizon` and records the weighted distance ratio;
/// passes iff its supremum is at most `1 + 5(dt + h)`.
pub fn contraction_test(domain: &GridDomain, v: &Potential, x0: Point, y0: Point, kappa_prime: f64, horizon: f64, dt: f64) -> Result<ContractionCurve> {
    let d0 = euclid(x0, y0);
    if d0 == 0.0 {
        return Err(Error::InvalidParameter("contraction test needs distinct points".into()));
    }
    let tx = descend(domain, v, x0, dt, horizon)?;
    let ty = descend(domain, v, y0, dt, horizon)?;
    let samples = ((horizon / dt).round() as usize).clamp(1, 200);
    let mut times = Vec::with_capacity(samples + 1);
    let mut ratios = Vec::with_capacity(samples + 1);
    for j in 0..=samples {
        let t = horizon * j as f64 / samples as f64;
        times.push(t);
        ratios.push((kappa_prime * t).exp() * euclid(tx.position_at(t), ty.position_at(t)) / d0);
    }
    let sup_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tolerance = 1.0 + 5.0 * (dt + domain.h);
    Ok(ContractionCurve { times, ratios, pass: sup_ratio <= tolerance, sup_ratio, tolerance })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioBoundReport {
    /// `|Φ(x) - Φ(y)| / |x - y|`
    pub ratio: f64,
    /// `e^{-(κ-δ) T(x,y)}`
    pub bound: f64,
    /// Maximum hitting time over 9 equally spaced points of the segment `[x, y]`.
    pub hitting_time: f64,
    pub margin: f64,
    pub projected_x: Point,
    pub projected_y: Point,
}

pub fn ratio_bound_test(domain: &GridDomain, v: &Potential, x: Point, y: Point, kappa: f64, delta: f64, dt: f64) -> Result<RatioBoundReport> {
    let d = euclid(x, y);
    if d == 0.0 {
        return Err(Error::InvalidParameter("ratio bound needs distinct points".into()));
    }
    let px = project_to_y(domain, v, x, dt)?;
    let py = project_to_y(domain, v, y, dt)?;
    let mut t_max = 0.0f64;
    for k in 0..=8 {
        let s = k as f64 / 8.0;
        let p = [x[0] + s * (y[0] - x[0]), x[1] + s * (y[1] - x[1])];
        t_max = t_max.max(hitting_time(domain, v, p, dt)?);
    }
    let ratio = euclid(px, py) / d;
    let bound = (-(kappa - delta) * t_max).exp();
    Ok(RatioBoundReport { ratio, bound, hitting_time: t_max, margin: bound - ratio, projected_x: px, projected_y: py })
}

/// Length of a polyline under `φ = exp(-κ' V)` evaluated at its vertices
/// (segment weight = endpoint mean).
pub fn conformal_length(domain: &GridDomain, v: &Potential, kappa_prime: f64, path: &[Point]) -> f64 {
    let phi: Vec<f64> = path.iter().map(|&p| (-kappa_prime * v.eval_at(domain, p)).exp()).collect();
    path.windows(2).zip(phi.windows(2)).map(|(seg, w)| euclid(seg[0], seg[1]) * 0.5 * (w[0] + w[1])).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionLengths {
    pub before: f64,
    pub after: f64,
    pub projected: Vec<Point>,
}

/// Projects every vertex of `path` onto Y and measures both polylines under the field.
pub fn projection_shortens(domain: &GridDomain, v: &Potential, field: &MetricField, path: &[Point], dt: f64) -> Result<ProjectionLengths> {
    let projected = path.iter().map(|&p| project_to_y(domain, v, p, dt)).collect::<Result<Vec<_>>>()?;
    Ok(ProjectionLengths {
        before: conformal_length(domain, v, field.kappa_prime, path),
        after: conformal_length(domain, v, field.kappa_prime, &projected),
        projected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::conformal_factor;
    use crate::grid::{build_domain, Disc, DomainSpec, Fixture};
    use crate::potentials::exterior_ball_potential;
    use approx::assert_relative_eq;

    fn centered_square(h: f64) -> GridDomain {
        let mut spec = DomainSpec::new(Fixture::Square, h);
        spec.origin = [-1.0, -1.0];
        spec.extent = [2.0, 2.0];
        build_domain(&spec).unwrap()
    }

    fn hole(h: f64) -> (GridDomain, Potential) {
        let spec = DomainSpec::new(Fixture::SquareMinusDiscs { discs: vec![Disc { center: [0.5, 0.5], radius: 0.25 }] }, h);
        let d = build_domain(&spec).unwrap();
        let v = exterior_ball_potential(&d, &[[0.5, 0.5]], 0.25, 0.0).unwrap();
        (d, v)
    }

    /// Radial oracle for the single flat ball: `s(t) = s0 e^{t/r}` until `s = r`.
    fn radial_hit(r: f64, s0: f64) -> f64 {
        r * (r / s0).ln()
    }

    #[test]
    fn start_in_y_hits_immediately() {
        let (d, v) = hole(1.0 / 32.0);
        let tr = descend(&d, &v, [0.1, 0.1], 1e-3, 1.0).unwrap();
        assert_eq!(tr.hit_time, Some(0.0));
        assert_eq!(tr.points.len(), 1);
        assert_eq!(project_to_y(&d, &v, [0.1, 0.1], 1e-3).unwrap(), [0.1, 0.1]);
        assert_eq!(project_to_y(&d, &v, [0.75, 0.5], 1e-3).unwrap(), [0.75, 0.5]);
    }

    #[test]
    fn radial_flow_matches_closed_form() {
        let h = 1.0 / 64.0;
        let (d, v) = hole(h);
        let r = 0.25;
        for (s0, angle) in [(0.1, 0.3), (0.05, 2.0), (0.2, 4.0)] {
            let x0 = [0.5 + s0 * f64::cos(angle), 0.5 + s0 * f64::sin(angle)];
            let tr = descend(&d, &v, x0, 1e-3, 10.0).unwrap();
            let expected = [0.5 + r * f64::cos(angle), 0.5 + r * f64::sin(angle)];
            assert!(euclid(tr.final_point(), expected) <= 2.0 * h);
            let t = tr.hit_time.unwrap();
            assert!((t - radial_hit(r, s0)).abs() < 0.01 * radial_hit(r, s0) + 2e-3, "T = {t}");
            for w in tr.points.windows(2) {
                assert!(w[1].value <= w[0].value);
            }
        }
    }

    #[test]
    fn quadratic_flow_is_exponential_and_first_order() {
        let d = centered_square(1.0 / 16.0);
        let v = Potential::from_fn(&d, Some(1.0), |p| 0.5 * (p[0] * p[0] + p[1] * p[1]));
        let x0 = [0.6, -0.3];
        let err = |dt: f64| {
            let tr = descend(&d, &v, x0, dt, 1.0).unwrap();
            let p = tr.position_at(1.0);
            euclid(p, [x0[0] * (-1f64).exp(), x0[1] * (-1f64).exp()])
        };
        let (e1, e2) = (err(2e-3), err(1e-3));
        assert!(e2 < 1e-3);
        let factor = e1 / e2;
        assert!((1.8..=2.2).contains(&factor), "factor {factor}");
    }

    #[test]
    fn contraction_closed_forms() {
        let d = centered_square(1.0 / 16.0);
        let quad = Potential::from_fn(&d, Some(1.0), |p| 0.5 * (p[0] * p[0] + p[1] * p[1]));
        let c = contraction_test(&d, &quad, [0.5, 0.2], [-0.3, 0.4], 1.0, 1.0, 1e-3).unwrap();
        for r in &c.ratios {
            assert!((r - 1.0).abs() < 0.01);
        }
        let lin = Potential::from_fn(&d, Some(0.0), |p| p[0] + 2.0);
        let c = contraction_test(&d, &lin, [0.5, 0.2], [0.3, -0.4], 0.0, 0.5, 1e-3).unwrap();
        for r in &c.ratios {
            assert_relative_eq!(*r, 1.0, epsilon = 1e-9);
        }
        assert!(c.pass);
    }

    #[test]
    fn projection_is_idempotent() {
        let (d, v) = hole(1.0 / 64.0);
        for x in [[0.55, 0.6], [0.4, 0.45], [0.62, 0.41]] {
            let p = project_to_y(&d, &v, x, 1e-3).unwrap();
            assert_eq!(project_to_y(&d, &v, p, 1e-3).unwrap(), p);
        }
    }

    #[test]
    fn hit_time_semigroup() {
        let (d, v) = hole(1.0 / 64.0);
        let x = [0.56, 0.58];
        let tr = descend(&d, &v, x, 1e-3, 10.0).unwrap();
        let t = tr.hit_time.unwrap();
        let s = 0.4 * t;
        let mid = tr.position_at(s);
        let rest = hitting_time(&d, &v, mid, 1e-3).unwrap();
        assert!((rest - (t - s)).abs() <= 2e-3, "{rest} vs {}", t - s);
    }

    #[test]
    fn ratio_bound_in_y_and_on_spheres() {
        let h = 1.0 / 64.0;
        let (d, v) = hole(h);
        let in_y = ratio_bound_test(&d, &v, [0.1, 0.1], [0.2, 0.15], -4.0, 0.0, 1e-3).unwrap();
        assert_eq!(in_y.ratio, 1.0);
        assert_eq!(in_y.bound, 1.0);
        let (r, s) = (0.25, 0.15);
        let (a, b) = (0.4f64, 0.9f64);
        let x = [0.5 + s * a.cos(), 0.5 + s * a.sin()];
        let y = [0.5 + s * b.cos(), 0.5 + s * b.sin()];
        let rep = ratio_bound_test(&d, &v, x, y, -4.0, 0.0, 1e-3).unwrap();
        assert!((rep.ratio - r / s).abs() <= 2.0 * h / euclid(x, y), "{rep:?}");
        assert!(rep.margin >= 0.0);
        // the segment midpoint is the deepest sample
        let s_mid = s * ((b - a) / 2.0).cos();
        assert!((rep.hitting_time - radial_hit(r, s_mid)).abs() < 5e-3);
    }

    #[test]
    fn projection_shortens_arcs_outside_y() {
        let (d, v) = hole(1.0 / 64.0);
        let field = conformal_factor(&v, -8.0);
        let arc: Vec<Point> = (0..=20).map(|k| {
            let a = 0.5 + 0.05 * k as f64;
            [0.5 + 0.2 * a.cos(), 0.5 + 0.2 * a.sin()]
        }).collect();
        let out = projection_shortens(&d, &v, &field, &arc, 1e-3).unwrap();
        assert!(out.after < out.before, "{} vs {}", out.after, out.before);
        let in_y: Vec<Point> = vec![[0.1, 0.1], [0.1, 0.2], [0.15, 0.22]];
        let same = projection_shortens(&d, &v, &field, &in_y, 1e-3).unwrap();
        assert_eq!(same.before, same.after);
        let single = projection_shortens(&d, &v, &field, &[[0.55, 0.5]], 1e-3).unwrap();
        assert_eq!((single.before, single.after), (0.0, 0.0));
    }

    #[test]
    fn leaving_the_box_is_reported() {
        let d = centered_square(1.0 / 8.0);
        let lin = Potential::from_fn(&d, Some(0.0), |p| p[0] + 5.0);
        assert!(matches!(descend(&d, &lin, [0.9, 0.0], 1e-2, 10.0), Err(Error::LeftGrid { .. })));
    }

    #[test]
    fn trajectory_csv_header() {
        let (d, v) = hole(1.0 / 32.0);
        let tr = descend(&d, &v, [0.55, 0.5], 1e-2, 5.0).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,y,V\n"));
        assert_eq!(text.lines().count(), tr.points.len() + 1);
    }
}
