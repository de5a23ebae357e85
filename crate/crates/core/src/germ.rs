use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{CPoly, DEFAULT_CLUSTER_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Antiholomorphic,
    Holomorphic,
}

/// One term c * mu(eps), where mu is a monomial in
/// (Re eps_0, Im eps_0, Re eps_1, Im eps_1, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamTerm {
    pub monomial: Vec<u32>,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffTerm {
    pub zpow: usize,
    pub params: Vec<ParamTerm>,
}

/// A polynomial germ family. For antiholomorphic kind the table is the jet of the
/// holomorphic companion h, with f = conj(h).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub kind: Kind,
    pub k: usize,
    pub coeffs: Vec<CoeffTerm>,
    pub validity_radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrbitKind {
    FixedOfF,
    Period2 { partner: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub location: C64,
    pub multiplicity: usize,
    pub multiplier_g: C64,
    pub orbit_kind: OrbitKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointData {
    pub points: Vec<FixedPoint>,
}

/// The jets needed downstream: h at eps, h at conj(eps), and the kind.
#[derive(Clone, Debug, PartialEq)]
pub struct Jets {
    pub kind: Kind,
    pub h: CPoly,
    pub h_bar: CPoly,
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

impl FamilySpec {
    pub fn new(kind: Kind, k: usize, validity_radius: f64) -> Self {
        FamilySpec { kind, k, coeffs: Vec::new(), validity_radius }
    }

    /// Adds coefficient `value * mu` to z^zpow; an empty monomial means a constant.
    pub fn add_term(&mut self, zpow: usize, monomial: Vec<u32>, value: C64) -> &mut Self {
        let term = ParamTerm { monomial, re: value.re, im: value.im };
        match self.coeffs.iter_mut().find(|t| t.zpow == zpow) {
            Some(t) => t.params.push(term),
            None => self.coeffs.push(CoeffTerm { zpow, params: vec![term] }),
        }
        self
    }

    /// Parameter-free family with companion jet `h`.
    pub fn constant(kind: Kind, k: usize, h: &CPoly) -> Self {
        let mut fam = FamilySpec::new(kind, k, f64::INFINITY);
        for (j, &a) in h.coeffs().iter().enumerate() {
            if a != c(0.0, 0.0) {
                fam.add_term(j, vec![], a);
            }
        }
        fam
    }

    /// Adds `value * eps_j` (holomorphic in eps_j) to the z^zpow coefficient.
    pub fn add_linear_param(&mut self, zpow: usize, j: usize, value: C64) -> &mut Self {
        let mut re = vec![0; 2 * self.k];
        re[2 * j] = 1;
        let mut im = vec![0; 2 * self.k];
        im[2 * j + 1] = 1;
        self.add_term(zpow, re, value);
        self.add_term(zpow, im, value * c(0.0, 1.0))
    }

    /// h(z) = z + z^{k+1}/2 + sum_j eps_j z^j, so f = conj(h) unfolds the model germ.
    pub fn standard_unfolding(k: usize, validity_radius: f64) -> Self {
        let mut fam = FamilySpec::new(Kind::Antiholomorphic, k, validity_radius);
        fam.add_term(1, vec![], c(1.0, 0.0));
        fam.add_term(k + 1, vec![], c(0.5, 0.0));
        for j in 0..k {
            fam.add_linear_param(j, j, c(1.0, 0.0));
        }
        fam
    }

    pub fn check_params(&self, eps: &[C64]) -> Result<()> {
        if eps.len() != self.k {
            return Err(Error::Invalid(format!("expected {} parameters, got {}", self.k, eps.len())));
        }
        let norm = eps.iter().map(|e| e.norm()).fold(0.0, f64::max);
        if norm > self.validity_radius {
            return Err(Error::OutsideValidity { norm, radius: self.validity_radius });
        }
        Ok(())
    }

    fn monomial_value(&self, m: &[u32], eps: &[C64]) -> Result<f64> {
        if m.len() > 2 * self.k {
            return Err(Error::Invalid(format!("monomial has {} exponents, at most {}", m.len(), 2 * self.k)));
        }
        let mut v = 1.0;
        for (i, &e) in m.iter().enumerate() {
            if e > 0 {
                let x = if i % 2 == 0 { eps[i / 2].re } else { eps[i / 2].im };
                v *= x.powi(e as i32);
            }
        }
        Ok(v)
    }

    /// Companion jet h at eps (for holomorphic kind, the map itself).
    pub fn jet(&self, eps: &[C64]) -> Result<CPoly> {
        self.check_params(eps)?;
        let deg = self.coeffs.iter().map(|t| t.zpow).max().unwrap_or(0);
        let mut v = vec![c(0.0, 0.0); deg + 1];
        for t in &self.coeffs {
            for p in &t.params {
                v[t.zpow] += c(p.re, p.im) * self.monomial_value(&p.monomial, eps)?;
            }
        }
        Ok(CPoly::new(v))
    }

    pub fn jets(&self, eps: &[C64]) -> Result<Jets> {
        let conj: Vec<C64> = eps.iter().map(|e| e.conj()).collect();
        Ok(Jets { kind: self.kind, h: self.jet(eps)?, h_bar: self.jet(&conj)? })
    }

    pub fn evaluate_f(&self, eps: &[C64], z: C64) -> Result<C64> {
        let h = self.jet(eps)?.eval(z);
        Ok(match self.kind {
            Kind::Antiholomorphic => h.conj(),
            Kind::Holomorphic => h,
        })
    }

    pub fn second_iterate(&self, eps: &[C64]) -> Result<CPoly> {
        self.jets(eps)?.second_iterate(None)
    }

    pub fn classify_fixed_points(&self, eps: &[C64], r: f64, tol: f64) -> Result<FixedPointData> {
        self.jets(eps)?.classify_fixed_points(r, tol, None)
    }

    /// Finite-difference Jacobian determinant at eta = 0 of real eta -> (Re a_0, ..., Re a_{k-1}),
    /// where a_j are the coefficients of f. Returned unthresholded.
    pub fn genericity_determinant(&self, h: f64) -> Result<f64> {
        let k = self.k;
        let mut jac = vec![vec![0.0; k]; k];
        for col in 0..k {
            let mut ep = vec![c(0.0, 0.0); k];
            let mut em = ep.clone();
            ep[col] = c(h, 0.0);
            em[col] = c(-h, 0.0);
            let (jp, jm) = (self.jet(&ep)?, self.jet(&em)?);
            for (row, jr) in jac.iter_mut().enumerate() {
                // Re of f's coefficient equals Re of h's
                jr[col] = (jp.coeff(row).re - jm.coeff(row).re) / (2.0 * h);
            }
        }
        Ok(determinant(jac))
    }
}

pub fn determinant(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for i in 0..n {
        let p = (i..n).max_by(|&x, &y| a[x][i].abs().partial_cmp(&a[y][i].abs()).unwrap()).unwrap();
        if a[p][i] == 0.0 {
            return 0.0;
        }
        if p != i {
            a.swap(p, i);
            det = -det;
        }
        det *= a[i][i];
        for r in (i + 1)..n {
            let f = a[r][i] / a[i][i];
            for cc in i..n {
                a[r][cc] -= f * a[i][cc];
            }
        }
    }
    det
}

impl Jets {
    pub fn holomorphic(g: CPoly) -> Self {
        Jets { kind: Kind::Holomorphic, h: g.clone(), h_bar: g }
    }

    pub fn f(&self, z: C64) -> C64 {
        match self.kind {
            Kind::Antiholomorphic => self.h.eval(z).conj(),
            Kind::Holomorphic => self.h.eval(z),
        }
    }

    /// Derivative of f in its natural variable (z-bar for antiholomorphic kind).
    pub fn f_prime(&self, z: C64) -> C64 {
        let d = self.h.eval_with_derivative(z).1;
        match self.kind {
            Kind::Antiholomorphic => d.conj(),
            Kind::Holomorphic => d,
        }
    }

    /// g = conj_coeffs(h_bar) o h, optionally truncated at degree n.
    pub fn second_iterate(&self, trunc: Option<usize>) -> Result<CPoly> {
        match self.kind {
            Kind::Holomorphic => Ok(match trunc {
                Some(n) => self.h.truncate(n),
                None => self.h.clone(),
            }),
            Kind::Antiholomorphic => {
                let outer = self.h_bar.conj_coeffs();
                match trunc {
                    Some(n) => Ok(outer.compose_truncated(&self.h, n)),
                    None => outer.compose(&self.h),
                }
            }
        }
    }

    /// Roots of g - z in the r-disk, with multipliers and f-orbit type.
    pub fn classify_fixed_points(&self, r: f64, tol: f64, trunc: Option<usize>) -> Result<FixedPointData> {
        let g = self.second_iterate(trunc)?;
        let q = &g - &CPoly::identity();
        if q.is_zero() {
            return Err(Error::Invalid("g is the identity; fixed points are not isolated".into()));
        }
        let dg = g.derivative();
        let roots = q.roots(DEFAULT_CLUSTER_TOL)?;
        let margin = 0.05 * r;
        let mut pts = Vec::new();
        for rt in roots {
            let m = rt.z.norm();
            if (m - r).abs() < margin {
                return Err(Error::Invalid(format!(
                    "fixed point at |z| = {m:.6} near boundary of D_{r}; shrink eps or grow r"
                )));
            }
            if m < r {
                pts.push(rt);
            }
        }
        pts.sort_by(|a, b| (a.z.re, a.z.im).partial_cmp(&(b.z.re, b.z.im)).unwrap());
        let scale = 1.0 + r;
        let mut points: Vec<FixedPoint> = pts
            .iter()
            .map(|rt| FixedPoint {
                location: rt.z,
                multiplicity: rt.mult,
                multiplier_g: dg.eval(rt.z),
                orbit_kind: OrbitKind::FixedOfF,
            })
            .collect();
        if self.kind == Kind::Antiholomorphic {
            for i in 0..points.len() {
                let w = points[i].location;
                let fw = self.f(w);
                if (fw - w).norm() < tol * scale || points[i].multiplicity > 1 {
                    continue;
                }
                let partner = (0..points.len())
                    .filter(|&j| j != i)
                    .min_by(|&a, &b| {
                        let da = (points[a].location - fw).norm();
                        let db = (points[b].location - fw).norm();
                        da.partial_cmp(&db).unwrap()
                    })
                    .ok_or_else(|| Error::Invalid("period-2 point without partner".into()))?;
                points[i].orbit_kind = OrbitKind::Period2 { partner };
            }
        }
        Ok(FixedPointData { points })
    }
}

impl FixedPointData {
    pub fn total_multiplicity(&self) -> usize {
        self.points.iter().map(|p| p.multiplicity).sum()
    }

    pub fn locations(&self) -> Vec<C64> {
        self.points.iter().map(|p| p.location).collect()
    }
}

/// b = sum_s 1/log g'(z_s), principal branch.
pub fn formal_invariant_b(fp: &FixedPointData, tol: f64) -> Result<C64> {
    let mut b = c(0.0, 0.0);
    for p in &fp.points {
        if p.multiplicity > 1 || (p.multiplier_g - 1.0).norm() < tol {
            return Err(Error::Invalid("confluent point; b undefined pointwise".into()));
        }
        if p.multiplier_g.re <= 0.0 {
            return Err(Error::Invalid(format!("multiplier {} outside the small-eps regime", p.multiplier_g)));
        }
        b += 1.0 / p.multiplier_g.ln();
    }
    Ok(b)
}

/// b from multipliers directly.
pub fn b_from_multipliers(ms: &[C64]) -> C64 {
    ms.iter().map(|m| 1.0 / m.ln()).sum()
}
