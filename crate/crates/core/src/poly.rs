use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest degree produced by `compose` or `mul` before refusing.
pub const MAX_DEGREE: usize = 64;

pub const DEFAULT_CLUSTER_TOL: f64 = 1e-7;

/// Dense complex polynomial, ascending coefficients. Trailing zeros are trimmed,
/// so the last stored coefficient is nonzero unless the polynomial is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CPoly {
    coeffs: Vec<C64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub z: C64,
    pub mult: usize,
}

impl CPoly {
    pub fn new(mut coeffs: Vec<C64>) -> Self {
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == C64::new(0.0, 0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(C64::new(0.0, 0.0));
        }
        CPoly { coeffs }
    }

    pub fn from_real(c: &[f64]) -> Self {
        Self::new(c.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zero() -> Self {
        Self::new(vec![])
    }

    pub fn constant(c: C64) -> Self {
        Self::new(vec![c])
    }

    pub fn identity() -> Self {
        Self::from_real(&[0.0, 1.0])
    }

    pub fn monomial(c: C64, n: usize) -> Self {
        let mut v = vec![C64::new(0.0, 0.0); n + 1];
        v[n] = c;
        Self::new(v)
    }

    /// Monic polynomial with the given roots.
    pub fn from_roots(roots: &[C64]) -> Self {
        let mut c = vec![C64::new(1.0, 0.0)];
        for &r in roots {
            let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
            for (j, &a) in c.iter().enumerate() {
                next[j + 1] += a;
                next[j] -= a * r;
            }
            c = next;
        }
        Self::new(c)
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Coefficient of z^j, zero beyond the degree.
    pub fn coeff(&self, j: usize) -> C64 {
        self.coeffs.get(j).copied().unwrap_or_default()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == C64::new(0.0, 0.0)
    }

    pub fn leading(&self) -> C64 {
        self.coeffs[self.coeffs.len() - 1]
    }

    pub fn eval(&self, z: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    /// Value and first derivative in one Horner pass.
    pub fn eval_with_derivative(&self, z: C64) -> (C64, C64) {
        let mut p = C64::new(0.0, 0.0);
        let mut dp = C64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    pub fn derivative(&self) -> CPoly {
        if self.coeffs.len() == 1 {
            return CPoly::zero();
        }
        CPoly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| c * j as f64)
                .collect(),
        )
    }

    pub fn conj_coeffs(&self) -> CPoly {
        CPoly::new(self.coeffs.iter().map(|c| c.conj()).collect())
    }

    pub fn scale(&self, s: C64) -> CPoly {
        CPoly::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    /// Polynomial z -> p(a z + b).
    pub fn affine_substitute(&self, a: C64, b: C64) -> CPoly {
        let lin = CPoly::new(vec![b, a]);
        // degree is preserved so this cannot exceed the bound
        self.compose_unchecked(&lin)
    }

    /// Coefficient-exact p(q(z)). Refuses when the result degree would exceed 64.
    pub fn compose(&self, q: &CPoly) -> Result<CPoly> {
        let d = self.degree() * q.degree();
        if d > MAX_DEGREE {
            return Err(Error::DegreeTooLarge(d));
        }
        Ok(self.compose_unchecked(q))
    }

    fn compose_unchecked(&self, q: &CPoly) -> CPoly {
        let mut acc = CPoly::zero();
        for &c in self.coeffs.iter().rev() {
            acc = &acc.mul_raw(q) + &CPoly::constant(c);
        }
        acc
    }

    fn mul_raw(&self, q: &CPoly) -> CPoly {
        if self.is_zero() || q.is_zero() {
            return CPoly::zero();
        }
        let mut out = vec![C64::new(0.0, 0.0); self.coeffs.len() + q.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in q.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        CPoly::new(out)
    }

    pub fn try_mul(&self, q: &CPoly) -> Result<CPoly> {
        let d = self.degree() + q.degree();
        if d > MAX_DEGREE {
            return Err(Error::DegreeTooLarge(d));
        }
        Ok(self.mul_raw(q))
    }

    /// Keep only the terms of degree <= n.
    pub fn truncate(&self, n: usize) -> CPoly {
        CPoly::new(self.coeffs.iter().take(n + 1).copied().collect())
    }

    /// p(q(z)) with every intermediate product truncated at degree n.
    pub fn compose_truncated(&self, q: &CPoly, n: usize) -> CPoly {
        let mut acc = CPoly::zero();
        for &c in self.coeffs.iter().rev() {
            acc = &acc.mul_truncated(q, n) + &CPoly::constant(c);
        }
        acc
    }

    pub fn mul_truncated(&self, q: &CPoly, n: usize) -> CPoly {
        if self.is_zero() || q.is_zero() {
            return CPoly::zero();
        }
        let len = (self.coeffs.len() + q.coeffs.len() - 1).min(n + 1);
        let mut out = vec![C64::new(0.0, 0.0); len];
        for (i, &a) in self.coeffs.iter().enumerate().take(len) {
            for (j, &b) in q.coeffs.iter().enumerate().take(len - i) {
                out[i + j] += a * b;
            }
        }
        CPoly::new(out)
    }

    /// Compositional inverse to order n of a series z + O(z^2) with p(0) = 0, p'(0) = 1.
    pub fn series_inverse(&self, n: usize) -> Result<CPoly> {
        if self.coeff(0).norm() > 0.0 || (self.coeff(1) - C64::new(1.0, 0.0)).norm() > 1e-14 {
            return Err(Error::Invalid("series inverse needs p(0) = 0 and p'(0) = 1".into()));
        }
        // fixed point iteration q <- q - (p(q) - z), gaining one order per pass
        let id = CPoly::identity();
        let mut q = id.clone();
        for _ in 0..n {
            let pq = self.compose_truncated(&q, n);
            q = &q - &(&pq - &id);
        }
        Ok(q.truncate(n))
    }

    pub fn max_abs_diff(&self, other: &CPoly) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len());
        (0..n)
            .map(|j| (self.coeff(j) - other.coeff(j)).norm())
            .fold(0.0, f64::max)
    }

    /// Upper bound on root moduli (Fujiwara).
    pub fn root_bound(&self) -> f64 {
        let n = self.degree();
        let lead = self.leading();
        let mut m: f64 = 0.0;
        for j in 1..=n {
            let a = (self.coeffs[n - j] / lead).norm();
            let t = if j == n { (a / 2.0).powf(1.0 / j as f64) } else { a.powf(1.0 / j as f64) };
            m = m.max(t);
        }
        2.0 * m
    }

    /// Roots with multiplicity. Raw roots come from Aberth-Ehrlich iteration started
    /// on a scaled circle of roots of unity, then clusters closer than `tol` are merged
    /// into their centroid.
    pub fn roots(&self, tol: f64) -> Result<Vec<Root>> {
        let raw = self.raw_roots()?;
        Ok(cluster(&raw, tol))
    }

    /// All `degree` roots without clustering.
    pub fn raw_roots(&self) -> Result<Vec<C64>> {
        let n = self.degree();
        if n == 0 {
            return Err(Error::ConstantPolynomial);
        }
        let lead = self.leading();
        let monic = self.scale(C64::new(1.0, 0.0) / lead);
        let dp = monic.derivative();
        if n == 1 {
            return Ok(vec![-monic.coeffs[0]]);
        }
        let r = monic.root_bound().max(1e-12) * 0.5;
        let mut z: Vec<C64> = (0..n)
            .map(|j| C64::from_polar(r, 2.0 * std::f64::consts::PI * j as f64 / n as f64 + 0.4))
            .collect();
        let mut done = vec![false; n];
        for _ in 0..2000 {
            let mut all = true;
            for i in 0..n {
                if done[i] {
                    continue;
                }
                let p = monic.eval(z[i]);
                if p == C64::new(0.0, 0.0) {
                    done[i] = true;
                    continue;
                }
                let d = dp.eval(z[i]);
                let ratio = p / d;
                let mut s = C64::new(0.0, 0.0);
                for j in 0..n {
                    if j != i {
                        let diff = z[i] - z[j];
                        if diff != C64::new(0.0, 0.0) {
                            s += C64::new(1.0, 0.0) / diff;
                        }
                    }
                }
                let mut w = ratio / (C64::new(1.0, 0.0) - ratio * s);
                if !w.re.is_finite() || !w.im.is_finite() {
                    w = if ratio.re.is_finite() && ratio.im.is_finite() { ratio } else { C64::new(0.0, 0.0) };
                }
                z[i] -= w;
                if w.norm() <= 4.0 * f64::EPSILON * z[i].norm() || w.norm() < 1e-300 {
                    done[i] = true;
                } else {
                    all = false;
                }
            }
            if all {
                break;
            }
        }
        Ok(z)
    }

    /// Residual bound used to accept a root of multiplicity `m` at distance `tol`
    /// from the true cluster: scale of the coefficients times tol^m.
    pub fn residual_bound(&self, tol: f64, mult: usize) -> f64 {
        let scale: f64 = self.coeffs.iter().map(|c| c.norm()).sum();
        scale * (tol.powi(mult as i32) + 1e3 * f64::EPSILON)
    }
}

/// Single-linkage clustering; each cluster is reported as its centroid.
pub fn cluster(points: &[C64], tol: f64) -> Vec<Root> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut c = i;
        while p[c] != r {
            let nx = p[c];
            p[c] = r;
            c = nx;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() < tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b] = a;
                }
            }
        }
    }
    let mut groups: Vec<(usize, C64, usize)> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        match groups.iter_mut().find(|g| g.0 == r) {
            Some(g) => {
                g.1 += points[i];
                g.2 += 1;
            }
            None => groups.push((r, points[i], 1)),
        }
    }
    groups
        .into_iter()
        .map(|(_, s, m)| Root { z: s / m as f64, mult: m })
        .collect()
}

impl Add for &CPoly {
    type Output = CPoly;
    fn add(self, o: &CPoly) -> CPoly {
        let n = self.coeffs.len().max(o.coeffs.len());
        CPoly::new((0..n).map(|j| self.coeff(j) + o.coeff(j)).collect())
    }
}

impl Sub for &CPoly {
    type Output = CPoly;
    fn sub(self, o: &CPoly) -> CPoly {
        let n = self.coeffs.len().max(o.coeffs.len());
        CPoly::new((0..n).map(|j| self.coeff(j) - o.coeff(j)).collect())
    }
}

impl Neg for &CPoly {
    type Output = CPoly;
    fn neg(self) -> CPoly {
        self.scale(C64::new(-1.0, 0.0))
    }
}

/// Unchecked product; use `try_mul` where the degree bound matters.
impl Mul for &CPoly {
    type Output = CPoly;
    fn mul(self, o: &CPoly) -> CPoly {
        self.mul_raw(o)
    }
}
