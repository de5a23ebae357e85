use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dop853, integrate_segment, OdeOptions};
use crate::poly::{CPoly, Root, DEFAULT_CLUSTER_TOL};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// v = P/(1 + b z^k) with P monic of degree k+1 and no z^k term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub p: CPoly,
    pub b: C64,
    pub k: usize,
}

impl VectorField {
    pub fn new(p: CPoly, b: C64) -> Result<Self> {
        let n = p.degree();
        if n < 2 {
            return Err(Error::Invalid(format!("P must have degree >= 2, got {n}")));
        }
        if (p.leading() - 1.0).norm() > 1e-12 {
            return Err(Error::Invalid(format!("P must be monic, leading coefficient {}", p.leading())));
        }
        if p.coeff(n - 1).norm() >= 1e-10 {
            return Err(Error::Invalid(format!("z^k coefficient of P is {}", p.coeff(n - 1))));
        }
        Ok(VectorField { p, b, k: n - 1 })
    }

    /// P = z^{k+1} + sum eps_j z^j.
    pub fn from_eps(eps: &[C64], b: C64) -> Result<Self> {
        let k = eps.len();
        let mut coeffs = eps.to_vec();
        coeffs.push(c(0.0, 0.0));
        coeffs.push(c(1.0, 0.0));
        debug_assert_eq!(coeffs.len(), k + 2);
        Self::new(CPoly::new(coeffs), b)
    }

    pub fn eps(&self) -> Vec<C64> {
        (0..self.k).map(|j| self.p.coeff(j)).collect()
    }

    fn denom(&self, z: C64) -> C64 {
        1.0 + self.b * z.powu(self.k as u32)
    }

    pub fn v(&self, z: C64) -> C64 {
        self.p.eval(z) / self.denom(z)
    }

    /// v'(z) via the quotient rule.
    pub fn v_prime(&self, z: C64) -> C64 {
        let (p, dp) = self.p.eval_with_derivative(z);
        let d = self.denom(z);
        let dd = self.b * (self.k as f64) * z.powu(self.k as u32 - 1);
        (dp * d - p * dd) / (d * d)
    }

    /// The time form (1 + b z^k)/P.
    pub fn omega(&self, z: C64) -> C64 {
        self.denom(z) / self.p.eval(z)
    }

    /// Roots of P ordered by (Re, Im).
    pub fn roots(&self) -> Result<Vec<Root>> {
        let mut r = self.p.roots(DEFAULT_CLUSTER_TOL)?;
        r.sort_by(|a, b| (a.z.re, a.z.im).partial_cmp(&(b.z.re, b.z.im)).unwrap());
        Ok(r)
    }

    pub fn simple_roots(&self) -> Result<Vec<C64>> {
        let r = self.roots()?;
        if r.iter().any(|x| x.mult > 1) {
            return Err(Error::Invalid("period infinite at confluence".into()));
        }
        Ok(r.into_iter().map(|x| x.z).collect())
    }

    /// 2 pi i (1 + b z_s^k)/P'(z_s) at each root, in root order.
    pub fn periods(&self) -> Result<Vec<C64>> {
        let dp = self.p.derivative();
        Ok(self
            .simple_roots()?
            .into_iter()
            .map(|z| c(0.0, 2.0 * PI) * self.denom(z) / dp.eval(z))
            .collect())
    }

    pub fn max_root_modulus(&self) -> Result<f64> {
        Ok(self.roots()?.iter().map(|r| r.z.norm()).fold(0.0, f64::max))
    }

    fn check_segment(&self, roots: &[C64], a: C64, b: C64, delta: f64, index: usize) -> Result<()> {
        for &z in roots {
            let d = segment_distance(z, a, b);
            if d <= delta {
                return Err(Error::NearSingularity {
                    dist: d,
                    point: format!("root {z} on segment {index}"),
                });
            }
        }
        Ok(())
    }

    /// Integral of the time form along a polyline; absolute error target 1e-10.
    pub fn time_integral(&self, path: &[C64], delta: f64) -> Result<C64> {
        if path.len() < 2 {
            return Ok(c(0.0, 0.0));
        }
        let roots: Vec<C64> = self.roots()?.into_iter().map(|r| r.z).collect();
        let total_len: f64 = path.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let f = |z: C64| self.omega(z);
        let mut acc = c(0.0, 0.0);
        for (i, w) in path.windows(2).enumerate() {
            self.check_segment(&roots, w[0], w[1], delta, i)?;
            let len = (w[1] - w[0]).norm();
            if len == 0.0 {
                continue;
            }
            let tol = 1e-11 * (len / total_len).max(1e-6);
            acc += integrate_segment(&f, w[0], w[1], tol)?;
        }
        Ok(acc)
    }

    /// Integral of the time form along the arc |z| = r from angle t0 to t1.
    pub fn arc_integral(&self, r: f64, t0: f64, t1: f64) -> Result<C64> {
        let g = |t: C64| {
            let z = C64::from_polar(r, t.re);
            self.omega(z) * z * c(0.0, 1.0)
        };
        // split long arcs so each piece is resolved
        let n = ((t1 - t0).abs() / (PI / 8.0)).ceil().max(1.0) as usize;
        let mut acc = c(0.0, 0.0);
        for i in 0..n {
            let a = t0 + (t1 - t0) * i as f64 / n as f64;
            let b = t0 + (t1 - t0) * (i + 1) as f64 / n as f64;
            acc += integrate_segment(&g, c(a, 0.0), c(b, 0.0), 1e-12 / n as f64)?;
        }
        Ok(acc)
    }

    /// Base points of the 2k time charts. Each is reached from the previous one along an
    /// arc of |z| = r swept counterclockwise by about 2 pi/k, then corrected by Newton so that
    /// the integral from the previous base point is exactly 2 pi i b/k.
    pub fn chart_base_points(&self, r: f64) -> Result<Vec<TimeChart>> {
        let rmax = self.max_root_modulus()?;
        if rmax >= r / 2.0 {
            return Err(Error::Invalid(format!("r too small for this eps: roots reach {rmax:.3e} >= r/2")));
        }
        let k = self.k;
        let target = c(0.0, 2.0 * PI) * self.b / k as f64;
        let mut charts = vec![TimeChart { j: 0, base_point: c(r, 0.0), lifted_angle: 0.0, r, vf: self.clone() }];
        for j in 1..2 * k {
            let prev = &charts[j - 1];
            let t0 = prev.lifted_angle;
            let on_circle = C64::from_polar(r, t0);
            let lead_in = self.segment_integral(prev.base_point, on_circle)?;
            let t1 = t0 + 2.0 * PI / k as f64;
            let arc = self.arc_integral(r, t0, t1)?;
            let start = C64::from_polar(r, t1);
            let base = lead_in + arc;
            let mut zeta = start;
            let mut converged = false;
            let mut last = f64::INFINITY;
            for _ in 0..50 {
                let fz = base + self.segment_integral(start, zeta)? - target;
                let step = fz / self.omega(zeta);
                zeta -= step;
                if (zeta - start).norm() > 0.25 * r {
                    break;
                }
                if step.norm() < 1e-15 * r || (step.norm() >= last && step.norm() < 1e-12 * r) {
                    converged = true;
                    break;
                }
                last = step.norm();
            }
            if !converged {
                return Err(Error::Invalid(format!("r too small for this eps: base point {j} not found")));
            }
            let lifted = t1 + (zeta / start).arg();
            charts.push(TimeChart { j, base_point: zeta, lifted_angle: lifted, r, vf: self.clone() });
        }
        Ok(charts)
    }

    fn segment_integral(&self, a: C64, b: C64) -> Result<C64> {
        if a == b {
            return Ok(c(0.0, 0.0));
        }
        integrate_segment(&|z| self.omega(z), a, b, 1e-13)
    }

    /// Time-T map of v along the straight segment 0 -> T in complex time, DOP853 with local
    /// tolerance `tol`. The trajectory must stay in |z| < r and at distance > delta from the roots.
    pub fn flow_within(&self, z0: C64, t: C64, tol: f64, r: f64, delta: f64) -> Result<C64> {
        if t == c(0.0, 0.0) {
            return Ok(z0);
        }
        let roots: Vec<C64> = self.roots()?.into_iter().map(|x| x.z).collect();
        let rhs = |_s: f64, z: C64| -> Result<C64> {
            if !(z.norm() < r) {
                return Err(Error::NotConverged(format!("trajectory left D_{r} at {z}")));
            }
            for &w in &roots {
                if (z - w).norm() <= delta {
                    return Err(Error::NearSingularity { dist: (z - w).norm(), point: format!("{w}") });
                }
            }
            let d = self.denom(z);
            if d.norm() < 1e-10 {
                return Err(Error::NearSingularity { dist: d.norm(), point: "pole of v".into() });
            }
            Ok(t * self.p.eval(z) / d)
        };
        let opts = OdeOptions { rtol: tol, atol: tol, max_steps: 200_000 };
        let end = dop853(&rhs, z0, 1.0, opts, &mut |_, _| false)?;
        Ok(end.z)
    }

    /// flow_within with domain radius 1e3 (1 + max root modulus) and no root exclusion.
    pub fn flow(&self, z0: C64, t: C64, tol: f64) -> Result<C64> {
        let r = 1e3 * (1.0 + self.max_root_modulus()?).max(z0.norm());
        self.flow_within(z0, t, tol, r, 0.0)
    }

    /// The normal form sigma o v^{1/2}.
    pub fn normal_form_f(&self, z: C64) -> Result<C64> {
        Ok(self.flow(z, c(0.5, 0.0), 1e-13)?.conj())
    }
}

/// Distance from z to the segment [a, b].
pub fn segment_distance(z: C64, a: C64, b: C64) -> f64 {
    let d = b - a;
    let l2 = d.norm_sqr();
    if l2 == 0.0 {
        return (z - a).norm();
    }
    let t = ((z - a) * d.conj()).re / l2;
    let t = t.clamp(0.0, 1.0);
    (z - (a + d * t)).norm()
}

/// One branch Z_j of the time coordinate, based at zeta_j. `lifted_angle` is the angle of the
/// base point on the universal cover of the annulus near |z| = r.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeChart {
    pub j: usize,
    pub base_point: C64,
    pub lifted_angle: f64,
    pub r: f64,
    #[serde(skip_serializing)]
    pub vf: VectorField,
}

impl TimeChart {
    /// Center of the boundary arc this chart contains.
    pub fn center_angle(&self) -> f64 {
        PI * self.j as f64 / self.vf.k as f64
    }

    /// The lift of arg z closest to the chart's arc center.
    pub fn lift(&self, z: C64) -> f64 {
        let a = z.arg();
        let c0 = self.center_angle();
        a + 2.0 * PI * ((c0 - a) / (2.0 * PI)).round()
    }

    /// Z_j along: base point -> circle at lifted angle -> arc to `alpha` -> `tail` (which must
    /// start at r e^{i alpha}).
    pub fn eval_with(&self, alpha: f64, tail: &[C64], delta: f64) -> Result<C64> {
        let vf = &self.vf;
        let on_circle = C64::from_polar(self.r, self.lifted_angle);
        let mut acc = vf.time_integral(&[self.base_point, on_circle], delta)?;
        acc += vf.arc_integral(self.r, self.lifted_angle, alpha)?;
        acc += vf.time_integral(tail, delta)?;
        Ok(acc)
    }

    /// Z_j(z) with a radial tail from the boundary circle.
    pub fn eval(&self, z: C64, delta: f64) -> Result<C64> {
        let alpha = self.lift(z);
        self.eval_with(alpha, &[C64::from_polar(self.r, alpha), z], delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vf(eps: &[C64], b: C64) -> VectorField {
        VectorField::from_eps(eps, b).unwrap()
    }

    #[test]
    fn periods_examples() {
        let e = c(0.01, 0.02);
        let f = vf(&[-e], c(0.0, 0.0));
        let per = f.periods().unwrap();
        let s = e.sqrt();
        // residues +-1/(2 sqrt eps)
        let want = [c(0.0, PI) / s, -c(0.0, PI) / s];
        for w in want {
            assert!(per.iter().any(|p| (p - w).norm() < 1e-10 * w.norm()));
        }
        let f = vf(&[c(-1.0, 0.0)], c(1.0, 0.0));
        let per = f.periods().unwrap();
        assert!((per[0] - c(0.0, 0.0)).norm() < 1e-14);
        assert!((per[1] - c(0.0, 2.0 * PI)).norm() < 1e-14);
    }

    #[test]
    fn confluent_period_is_error() {
        assert!(vf(&[c(0.0, 0.0)], c(1.0, 0.0)).periods().is_err());
    }

    #[test]
    fn time_integral_examples() {
        let f = vf(&[c(0.0, 0.0)], c(0.0, 0.0));
        let v = f.time_integral(&[c(1.0, 0.0), c(2.0, 0.0)], 1e-3).unwrap();
        assert!((v - c(0.5, 0.0)).norm() < 1e-12);
        let g = vf(&[c(-0.04, 0.01), c(0.02, 0.0)], c(0.7, -0.1));
        let per = g.periods().unwrap();
        let roots = g.simple_roots().unwrap();
        for (w, p) in roots.iter().zip(&per) {
            let loop_: Vec<C64> = (0..=64).map(|i| w + C64::from_polar(0.01, 2.0 * PI * i as f64 / 64.0)).collect();
            let v = g.time_integral(&loop_, 1e-4).unwrap();
            assert!((v - p).norm() < 1e-9, "{v} vs {p}");
        }
        let full = g.arc_integral(1.0, 0.0, 2.0 * PI).unwrap();
        assert!((full - c(0.0, 2.0 * PI) * g.b).norm() < 1e-9);
    }

    #[test]
    fn path_into_exclusion_zone_is_error() {
        let f = vf(&[c(-0.01, 0.0)], c(0.0, 0.0));
        let e = f.time_integral(&[c(1.0, 0.0), c(0.5, 0.0), c(0.1, 0.0005)], 1e-3);
        match e {
            Err(Error::NearSingularity { point, .. }) => assert!(point.contains("segment 1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn chart_relation_holds() {
        let f = vf(&[c(-0.01, 0.003), c(0.02, -0.01)], c(0.8, 0.05));
        let charts = f.chart_base_points(1.0).unwrap();
        assert_eq!(charts.len(), 4);
        let target = c(0.0, 2.0 * PI) * f.b / 2.0;
        for j in 1..4 {
            // shared point between the arcs of charts j-1 and j
            let ang = PI * (j as f64 - 0.5) / 2.0;
            let z = C64::from_polar(0.7, ang);
            let zj = charts[j].eval(z, 1e-3).unwrap();
            let zj1 = charts[j - 1].eval(z, 1e-3).unwrap();
            assert!((zj - zj1 + target).norm() < 1e-8, "j = {j}");
        }
    }

    #[test]
    fn zero_b_base_points_at_eps_zero() {
        let f = vf(&[c(0.0, 0.0)], c(0.0, 0.0));
        let charts = f.chart_base_points(1.0).unwrap();
        // single loop: the integral of dz/z^2 over a full turn vanishes
        assert!((charts[1].base_point - c(1.0, 0.0)).norm() < 1e-10);
        assert!((charts[1].lifted_angle - 2.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn flow_examples() {
        let f = vf(&[c(0.0, 0.0)], c(0.0, 0.0));
        assert_eq!(f.flow(c(1.0, 0.0), c(0.0, 0.0), 1e-12).unwrap(), c(1.0, 0.0));
        let z = f.flow(c(1.0, 0.0), c(0.5, 0.0), 1e-12).unwrap();
        assert!((z - c(2.0, 0.0)).norm() < 1e-10);
        let g = vf(&[c(-0.01, 0.0), c(0.02, 0.0)], c(0.9, 0.0));
        let z0 = c(0.3, 0.2);
        let t = c(0.4, -0.3);
        let back = g.flow(g.flow(z0, t, 1e-13).unwrap(), -t, 1e-13).unwrap();
        assert!((back - z0).norm() < 1e-9);
    }

    #[test]
    fn time_along_trajectory_equals_elapsed_time() {
        let g = vf(&[c(-0.01, 0.0), c(0.02, 0.0)], c(0.9, 0.0));
        let z0 = c(0.3, 0.2);
        let t = c(0.8, 0.3);
        let path: Vec<C64> = (0..=40).map(|i| g.flow(z0, t * (i as f64 / 40.0), 1e-13).unwrap()).collect();
        let z = g.time_integral(&path, 1e-4).unwrap();
        assert!((z - t).norm() < 1e-8);
    }
}
