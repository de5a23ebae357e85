use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::germ::{FamilySpec, Jets, Kind};
use crate::poly::CPoly;

/// Nodes closer than this are treated as confluent.
pub const CONFLUENT_TOL: f64 = 1e-5;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn min_separation(nodes: &[C64]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            m = m.min((nodes[i] - nodes[j]).norm());
        }
    }
    m
}

/// Polynomial of degree <= k through (nodes[j], values[j]). Lagrange basis for separated
/// nodes, Newton divided differences once two nodes are closer than 1e-5.
pub fn lagrange_fit(nodes: &[C64], values: &[C64], k: usize) -> Result<CPoly> {
    if nodes.len() != k + 1 || values.len() != k + 1 {
        return Err(Error::Invalid(format!(
            "lagrange_fit needs {} nodes and values, got {} and {}",
            k + 1,
            nodes.len(),
            values.len()
        )));
    }
    let scale = nodes.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let sep = min_separation(nodes);
    if sep <= 1e-14 * scale {
        return Err(Error::DegenerateNodes(format!("separation {sep:e}")));
    }
    if sep >= CONFLUENT_TOL {
        let mut p = CPoly::zero();
        for j in 0..=k {
            let others: Vec<C64> = (0..=k).filter(|&i| i != j).map(|i| nodes[i]).collect();
            let basis = CPoly::from_roots(&others);
            let denom = basis.eval(nodes[j]);
            p = &p + &basis.scale(values[j] / denom);
        }
        return Ok(p);
    }
    newton_fit(nodes, values)
}

fn newton_fit(nodes: &[C64], values: &[C64]) -> Result<CPoly> {
    let n = nodes.len();
    let mut dd = values.to_vec();
    for level in 1..n {
        for i in (level..n).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (nodes[i] - nodes[i - level]);
        }
    }
    let mut p = CPoly::constant(dd[n - 1]);
    for i in (0..n - 1).rev() {
        p = &(&p * &CPoly::new(vec![-nodes[i], c(1.0, 0.0)])) + &CPoly::constant(dd[i]);
    }
    Ok(p)
}

/// Hermite interpolant of an analytic `f` at the roots of `omega` (with multiplicity),
/// from the contour formula on the circle |t - center| = rho enclosing every root.
pub fn hermite_contour(f: impl Fn(C64) -> C64, omega: &CPoly, center: C64, rho: f64, n: usize) -> CPoly {
    let deg = omega.degree();
    let a = omega.coeffs();
    let mut acc = vec![c(0.0, 0.0); deg];
    for s in 0..n {
        let t = center + C64::from_polar(rho, 2.0 * PI * s as f64 / n as f64);
        let w = f(t) / omega.eval(t) * (t - center) / n as f64;
        // synthetic division of omega by (z - t)
        let mut q = c(0.0, 0.0);
        for j in (0..deg).rev() {
            q = q * t + a[j + 1];
            acc[j] += w * q;
        }
    }
    CPoly::new(acc)
}

/// (z_0, ..., z_{k-1}) -> conjugation by z -> -z: eps_j -> (-1)^{j+1} eps_j.
/// Listed from index k-1 down to 0 this is (eps_{k-1}, -eps_{k-2}, ..., eps_1, -eps_0).
pub fn canonical_involution(eps: &[C64]) -> Result<Vec<C64>> {
    let k = eps.len();
    if k % 2 == 1 {
        return Err(Error::Invalid("involution undefined for odd k; canonical parameter unique".into()));
    }
    Ok(eps
        .iter()
        .enumerate()
        .map(|(j, &e)| if j % 2 == 0 { -e } else { e })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Changes {
    /// Barycenter of the fixed points; the first change is z -> z - translation.
    pub translation: C64,
    /// Point map from original fixed points to the roots of P (degree <= k).
    pub point_map: CPoly,
    /// Whether the multiplier-matching correction of the roots converged.
    pub refined: bool,
    pub confluent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedFamily {
    pub k: usize,
    pub eps_canonical: Vec<C64>,
    pub b: C64,
    pub p: CPoly,
    pub s: CPoly,
    pub k_poly: CPoly,
    /// Roots of P, paired index-wise with `fixed_points` and `log_multipliers`.
    pub nodes: Vec<C64>,
    pub fixed_points: Vec<C64>,
    pub log_multipliers: Vec<C64>,
    /// Transported f-derivatives at the nodes.
    pub f_derivatives: Vec<C64>,
    /// Companion of f after translation, minus z + conj_coeffs(P)/2. Not split into Q, R.
    pub residual_jet: CPoly,
    pub changes: Changes,
}

#[derive(Clone, Copy, Debug)]
pub struct PrepareOptions {
    pub trunc: Option<usize>,
    pub refine: bool,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions { trunc: None, refine: true }
    }
}

pub fn prepare_at(fam: &FamilySpec, eps: &[C64]) -> Result<PreparedFamily> {
    let jets = fam.jets(eps)?;
    prepare_jets(fam.k, &jets, PrepareOptions::default())
}

/// 1/log(1+x) - 1/x, stable near x = 0.
fn log_correction(x: C64) -> C64 {
    if x.norm() < 1e-3 {
        c(0.5, 0.0) - x / 12.0 + x * x / 24.0 - x * x * x * (19.0 / 720.0)
    } else {
        1.0 / (c(1.0, 0.0) + x).ln() - 1.0 / x
    }
}

/// The k+1 fixed points of g nearest the origin plus a radius separating them from the rest.
fn local_fixed_points(g: &CPoly, k: usize) -> Result<(Vec<C64>, f64)> {
    let q = g - &CPoly::identity();
    if q.degree() < k + 1 {
        return Err(Error::Invalid(format!("g - z has degree {} < k+1 = {}", q.degree(), k + 1)));
    }
    let mut raw = q.raw_roots()?;
    raw.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    let inner = raw[k].norm();
    let outer = raw.get(k + 1).map(|z| z.norm()).unwrap_or(f64::INFINITY);
    if outer < 2.0 * inner + 1e-12 {
        return Err(Error::Invalid(format!(
            "the k+1 local fixed points (|z| <= {inner:.3e}) are not separated from the next one at {outer:.3e}; shrink eps"
        )));
    }
    let rho = if outer.is_finite() { (inner * outer).sqrt().max(1.5 * inner) } else { 2.0 * inner + 0.1 };
    Ok((raw[..=k].to_vec(), rho))
}

/// Newton solve for roots y (sum zero) whose residues (1 + b y^k)/P'(y) equal 1/lambda.
fn refine_roots(y0: &[C64], lambda: &[C64], b: C64, k: usize) -> Option<Vec<C64>> {
    let n = k + 1;
    let residual = |y: &[C64]| -> Vec<C64> {
        let p = CPoly::from_roots(y);
        let dp = p.derivative();
        (0..k)
            .map(|s| (1.0 + b * y[s].powu(k as u32)) / dp.eval(y[s]) - 1.0 / lambda[s])
            .collect()
    };
    let full = |x: &[C64]| -> Vec<C64> {
        let mut y = x.to_vec();
        y.push(-x.iter().sum::<C64>());
        y
    };
    let mut x: Vec<C64> = y0[..k].to_vec();
    let scale = lambda.iter().map(|l| 1.0 / l.norm()).fold(0.0, f64::max);
    let size = y0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for _ in 0..60 {
        let y = full(&x);
        let r = residual(&y);
        let rn = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if rn <= 1e-15 * scale {
            return Some(y);
        }
        let h = 1e-7 * size.max(1e-300);
        let mut jac = vec![vec![c(0.0, 0.0); k]; k];
        for col in 0..k {
            let mut xp = x.clone();
            xp[col] += h;
            let mut xm = x.clone();
            xm[col] -= h;
            let (rp, rm) = (residual(&full(&xp)), residual(&full(&xm)));
            for row in 0..k {
                jac[row][col] = (rp[row] - rm[row]) / (2.0 * h);
            }
        }
        let dx = solve_complex(jac, r.iter().map(|v| -v).collect())?;
        let step = dx.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for i in 0..k {
            x[i] += dx[i];
        }
        if step <= 1e-15 * size {
            let y = full(&x);
            let rn = residual(&y).iter().map(|v| v.norm()).fold(0.0, f64::max);
            return if rn <= 1e-9 * scale { Some(y) } else { None };
        }
        if !step.is_finite() || step > 10.0 * size {
            return None;
        }
    }
    let y = full(&x);
    debug_assert!(y.len() == n);
    let rn = residual(&y).iter().map(|v| v.norm()).fold(0.0, f64::max);
    if rn <= 1e-10 * scale {
        Some(y)
    } else {
        None
    }
}

pub fn solve_complex(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Option<Vec<C64>> {
    let n = b.len();
    for i in 0..n {
        let p = (i..n).max_by(|&x, &y| a[x][i].norm().partial_cmp(&a[y][i].norm()).unwrap())?;
        if a[p][i].norm() == 0.0 {
            return None;
        }
        a.swap(p, i);
        b.swap(p, i);
        for r in (i + 1)..n {
            let f = a[r][i] / a[i][i];
            for cc in i..n {
                let v = a[i][cc];
                a[r][cc] -= f * v;
            }
            let v = b[i];
            b[r] -= f * v;
        }
    }
    let mut x = vec![c(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    Some(x)
}

pub fn prepare_jets(k: usize, jets: &Jets, opts: PrepareOptions) -> Result<PreparedFamily> {
    let g = jets.second_iterate(opts.trunc)?;
    let dg = g.derivative();
    let (xs, rho) = local_fixed_points(&g, k)?;
    let translation = xs.iter().sum::<C64>() / (k + 1) as f64;
    let y_bary: Vec<C64> = xs.iter().map(|&x| x - translation).collect();
    let mults: Vec<C64> = xs.iter().map(|&x| dg.eval(x)).collect();
    let confluent = min_separation(&xs) < CONFLUENT_TOL || mults.iter().any(|m| (m - 1.0).norm() < 1e-8);

    // b: direct sum when separated, contour form otherwise
    let b = if !confluent {
        for m in &mults {
            if m.re <= 0.0 {
                return Err(Error::Invalid(format!("multiplier {m} outside the small-eps regime")));
            }
        }
        mults.iter().map(|m| 1.0 / m.ln()).sum::<C64>()
    } else {
        let q = &g - &CPoly::identity();
        let n = 512;
        let mut integral = c(0.0, 0.0);
        for s in 0..n {
            let dz = C64::from_polar(rho, 2.0 * PI * s as f64 / n as f64);
            integral += dz / q.eval(dz) / n as f64;
        }
        integral + mults.iter().map(|m| log_correction(m - 1.0)).sum::<C64>()
    };
    let lambda: Vec<C64> = mults.iter().map(|m| m.ln()).collect();

    let mut refined = false;
    let mut ys = y_bary.clone();
    if opts.refine && !confluent {
        if let Some(y) = refine_roots(&y_bary, &lambda, b, k) {
            ys = y;
            refined = true;
        }
    }
    let mut pc = CPoly::from_roots(&ys).coeffs().to_vec();
    pc[k] = c(0.0, 0.0);
    let p = CPoly::new(pc);
    let eps_canonical: Vec<C64> = (0..k).map(|j| p.coeff(j)).collect();
    let dp = p.derivative();

    let point_map = if refined {
        let shift: Vec<C64> = xs.iter().zip(&ys).map(|(x, y)| y - x).collect();
        &CPoly::identity() + &lagrange_fit(&xs, &shift, k)?
    } else {
        CPoly::new(vec![-translation, c(1.0, 0.0)])
    };
    let dphi = point_map.derivative();

    let f_derivatives: Vec<C64> = xs
        .iter()
        .map(|&x| dphi.eval(jets.f(x)) * jets.f_prime(x) / dphi.eval(x).conj())
        .collect();
    for fd in &f_derivatives {
        if fd.re <= 0.0 && fd.im.abs() < 1e-3 * fd.norm() {
            return Err(Error::Invalid(format!("f' = {fd} near the negative axis; sqrt branch ambiguous")));
        }
    }

    // companion of f after the translation
    let h3 = &jets.h.affine_substitute(c(1.0, 0.0), translation) - &CPoly::constant(translation.conj());
    let residual_jet = &(&h3 - &CPoly::identity()) - &p.conj_coeffs().scale(c(0.5, 0.0));

    let (s, k_poly) = if !confluent {
        let m: Vec<C64> = (0..=k).map(|j| lambda[j] / dp.eval(ys[j]) - 1.0).collect();
        let w: Vec<C64> = (0..=k)
            .map(|j| (f_derivatives[j].sqrt().conj() - 1.0) / dp.eval(ys[j]))
            .collect();
        (lagrange_fit(&ys, &m, k)?, lagrange_fit(&ys, &w, k)?)
    } else {
        // analytic limits: S interpolates 1/(1+b z^k) - 1, K interpolates
        // Mt/(sqrt(1 + P' Mt) + 1) with Mt = (h3 - z)/P
        let bk = b;
        let s = hermite_contour(
            |z| 1.0 / (1.0 + bk * z.powu(k as u32)) - 1.0,
            &p,
            c(0.0, 0.0),
            rho,
            256,
        );
        let kp = hermite_contour(
            |z| {
                let mt = (h3.eval(z) - z) / p.eval(z);
                mt / ((1.0 + dp.eval(z) * mt).sqrt() + 1.0)
            },
            &p,
            c(0.0, 0.0),
            rho,
            256,
        );
        (s, kp)
    };

    Ok(PreparedFamily {
        k,
        eps_canonical,
        b,
        p,
        s,
        k_poly,
        nodes: ys,
        fixed_points: xs,
        log_multipliers: lambda,
        f_derivatives,
        residual_jet,
        changes: Changes { translation, point_map, refined, confluent },
    })
}

impl PreparedFamily {
    /// Multipliers of the transported f after the u-change, F'(w_j).
    pub fn symmetrized_f_derivatives(&self) -> Vec<C64> {
        let dp = self.p.derivative();
        let u_prime = |w: C64| 1.0 + dp.eval(w) * self.k_poly.eval(w);
        self.nodes
            .iter()
            .zip(&self.f_derivatives)
            .map(|(&w, &fd)| u_prime(w.conj()) / u_prime(w).conj() * fd)
            .collect()
    }

    /// max_j |log g'(w_j) - P'(w_j)(1 + S(w_j))|
    pub fn s_fit_residual(&self) -> f64 {
        let dp = self.p.derivative();
        self.nodes
            .iter()
            .zip(&self.log_multipliers)
            .map(|(&w, &l)| (l - dp.eval(w) * (1.0 + self.s.eval(w))).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_imag_coeff(&self) -> f64 {
        [&self.p, &self.s, &self.k_poly]
            .iter()
            .flat_map(|q| q.coeffs().iter().map(|z| z.im.abs()))
            .fold(0.0, f64::max)
    }
}

/// Jets of the family conjugated by a tangent-to-identity polynomial phi: phi^{-1} o f o phi,
/// as truncated series of order n.
pub fn conjugate_jets(jets: &Jets, phi: &CPoly, n: usize) -> Result<Jets> {
    let inv = phi.series_inverse(n)?;
    let conj_h = |h: &CPoly| match jets.kind {
        // f~ = phi^{-1} o conj o h o phi, companion conj_coeffs(phi^{-1}) o h o phi
        Kind::Antiholomorphic => inv.conj_coeffs().compose_truncated(&h.compose_truncated(phi, n), n),
        Kind::Holomorphic => inv.compose_truncated(&h.compose_truncated(phi, n), n),
    };
    Ok(Jets { kind: jets.kind, h: conj_h(&jets.h), h_bar: conj_h(&jets.h_bar) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrange_examples() {
        let z = [c(0.0, 0.0), c(1.0, 0.0)];
        assert!(lagrange_fit(&z, &[c(0.0, 0.0), c(0.0, 0.0)], 1).unwrap().is_zero());
        let p = lagrange_fit(&z, &[c(1.0, 0.0), c(2.0, 0.0)], 1).unwrap();
        assert!(p.max_abs_diff(&CPoly::from_real(&[1.0, 1.0])) < 1e-15);
        let q = CPoly::from_real(&[0.0, -2.0, 0.0, 1.0]);
        let nodes = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        let vals: Vec<C64> = nodes.iter().map(|&w| q.eval(w)).collect();
        assert!(lagrange_fit(&nodes, &vals, 3).unwrap().max_abs_diff(&q) < 1e-12);
        assert!(lagrange_fit(&nodes, &vals, 2).is_err());
    }

    #[test]
    fn close_nodes_use_divided_differences() {
        let q = CPoly::new(vec![c(0.5, 0.1), c(-1.0, 0.0), c(0.0, 2.0)]);
        let nodes = [c(0.1, 0.0), c(0.1 + 1e-7, 0.0), c(-0.2, 0.3)];
        let vals: Vec<C64> = nodes.iter().map(|&w| q.eval(w)).collect();
        assert!(lagrange_fit(&nodes, &vals, 2).unwrap().max_abs_diff(&q) < 1e-7);
    }

    #[test]
    fn hermite_contour_recovers_taylor_jet() {
        // triple node at 0: interpolant of exp is 1 + z + z^2/2
        let omega = CPoly::monomial(c(1.0, 0.0), 3);
        let p = hermite_contour(|z| z.exp(), &omega, c(0.0, 0.0), 0.5, 64);
        assert!(p.max_abs_diff(&CPoly::from_real(&[1.0, 1.0, 0.5])) < 1e-13);
    }

    #[test]
    fn involution_examples() {
        let e = [c(0.3, 0.0), c(-0.7, 0.0)];
        assert_eq!(canonical_involution(&e).unwrap(), vec![c(-0.3, 0.0), c(-0.7, 0.0)]);
        assert_eq!(canonical_involution(&[c(0.0, 0.0); 2]).unwrap(), vec![c(-0.0, 0.0); 2]);
        let four: Vec<C64> = (1..=4).map(|j| c(j as f64, 0.0)).collect();
        let mut hat = canonical_involution(&four).unwrap();
        // conventional order lists eps_{k-1} first
        hat.reverse();
        let want: Vec<C64> = [4.0, -3.0, 2.0, -1.0].iter().map(|&x| c(x, 0.0)).collect();
        assert_eq!(hat, want);
        assert!(canonical_involution(&[c(1.0, 0.0)]).is_err());
    }

    fn quad_holo(eps: f64) -> Jets {
        Jets::holomorphic(CPoly::from_real(&[-eps, 1.0, 1.0]))
    }

    #[test]
    fn prepare_quadratic() {
        let pf = prepare_jets(1, &quad_holo(0.01), PrepareOptions { trunc: None, refine: false }).unwrap();
        assert!(pf.p.max_abs_diff(&CPoly::from_real(&[-0.01, 0.0, 1.0])) < 1e-14);
        let hand = 1.0 / 1.2f64.ln() + 1.0 / 0.8f64.ln();
        assert!((pf.b - c(hand, 0.0)).norm() < 1e-12);
        assert!(pf.s_fit_residual() < 1e-12);
    }

    #[test]
    fn prepare_at_zero() {
        let fam = FamilySpec::standard_unfolding(2, 0.1);
        let pf = prepare_at(&fam, &[c(0.0, 0.0); 2]).unwrap();
        assert!(pf.changes.confluent);
        assert!(pf.p.max_abs_diff(&CPoly::monomial(c(1.0, 0.0), 3)) < 1e-12);
        assert!(pf.eps_canonical.iter().all(|e| e.norm() < 1e-12));
    }

    #[test]
    fn contour_b_matches_direct_b() {
        let jets = quad_holo(0.01);
        let g = jets.second_iterate(None).unwrap();
        let pf = prepare_jets(1, &jets, PrepareOptions::default()).unwrap();
        let q = &g - &CPoly::identity();
        let mut integral = c(0.0, 0.0);
        for s in 0..512 {
            let dz = C64::from_polar(0.5, 2.0 * PI * s as f64 / 512.0);
            integral += dz / q.eval(dz) / 512.0;
        }
        let mults = [c(1.2, 0.0), c(0.8, 0.0)];
        let b = integral + mults.iter().map(|m| log_correction(m - 1.0)).sum::<C64>();
        assert!((b - pf.b).norm() < 1e-12);
    }

    #[test]
    fn refined_roots_match_vector_field_eigenvalues() {
        let fam = FamilySpec::standard_unfolding(2, 0.1);
        let pf = prepare_at(&fam, &[c(-0.01, 0.0), c(0.004, 0.0)]).unwrap();
        assert!(pf.changes.refined);
        let dp = pf.p.derivative();
        for (w, l) in pf.nodes.iter().zip(&pf.log_multipliers) {
            let ev = dp.eval(*w) / (1.0 + pf.b * w.powu(2));
            assert!((ev - l).norm() < 1e-10);
        }
        assert!(pf.max_imag_coeff() < 1e-9);
        assert!(pf.s_fit_residual() < 1e-8);
    }
}
