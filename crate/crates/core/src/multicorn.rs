//! Parabolic parameters of the multicorn family z̄^d + c: local jets, codimension and genericity.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::CPoly;

fn binom(n: usize, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The d + 1 pairs (c_τ, z_τ), τ = e^{2πi j/(d+1)}.
pub fn parabolic_parameters(d: usize) -> Result<Vec<(C64, C64)>> {
    if d < 2 {
        return Err(Error::Invalid(format!("d must be at least 2, got {d}")));
    }
    let df = d as f64;
    let rot = C64::from_polar(1.0, PI / (df + 1.0));
    Ok((0..=d)
        .map(|j| {
            let tau = C64::from_polar(1.0, 2.0 * PI * j as f64 / (df + 1.0));
            let c = (df + 1.0) * df.powf(-df / (df - 1.0)) * rot * tau;
            let z = df.powf(-1.0 / (df - 1.0)) * rot * tau;
            (c, z)
        })
        .collect())
}

/// Jet of F₁(Z₁) = e^{ikθ/2} (f(z0 + Z) - z0), Z = e^{-ikθ/2} Z₁, written as A(Z̄₁) with A holomorphic
/// (exact binomial expansion, degree d).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalJet {
    pub d: usize,
    pub theta: f64,
    /// A as a polynomial in w = Z̄₁ (A(0) = e^{ikθ/2}(c - c_0) away from c_0)
    pub a: CPoly,
}

impl LocalJet {
    pub fn a2(&self) -> C64 {
        self.a.coeff(2)
    }

    pub fn a3(&self) -> C64 {
        self.a.coeff(3)
    }
}

pub fn local_jet(d: usize, c: C64, z0: C64, order: usize) -> Result<LocalJet> {
    if d < 2 {
        return Err(Error::Invalid(format!("d must be at least 2, got {d}")));
    }
    let k = d - 1;
    let zb = z0.conj();
    let mult = d as f64 * zb.powu(k as u32).norm();
    if (mult - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("|f'(z0)| = {mult} is not 1")));
    }
    let theta = (z0 * (d as f64).powf(1.0 / k as f64)).arg();
    let s = C64::from_polar(1.0, k as f64 * theta / 2.0);
    // A(w) = s[(z̄0 + s w)^d + c - z0]
    let mut coeffs: Vec<C64> = (0..=d.min(order))
        .map(|j| s * binom(d, j) * zb.powu((d - j) as u32) * s.powu(j as u32))
        .collect();
    coeffs[0] += s * (c - z0);
    Ok(LocalJet { d, theta, a: CPoly::new(coeffs) })
}

/// Codimension of the parabolic point of a jet with A'(0) = 1: 2 when a₂ ∈ iℝ, else 1.
pub fn codimension(jet: &LocalJet, tol: f64) -> usize {
    if jet.a2().re.abs() <= tol * (1.0 + jet.a2().norm()) {
        2
    } else {
        1
    }
}

/// a₃ - a₂² as displayed in the literature for k = d - 1:
/// k(k+1)^{3/(k+1)}/12 · (3k(k+1)^{1/(k+1)} - 2(k-1)).
pub fn displayed_codim2_value(d: usize) -> f64 {
    let k = (d - 1) as f64;
    k * (k + 1.0).powf(3.0 / (k + 1.0)) / 12.0 * (3.0 * k * (k + 1.0).powf(1.0 / (k + 1.0)) - 2.0 * (k - 1.0))
}

/// a₃ - a₂² from the binomial jet at a codimension-2 point: k(k+2)(k+1)^{2/k}/12.
pub fn binomial_codim2_value(d: usize) -> f64 {
    let k = (d - 1) as f64;
    k * (k + 2.0) * (k + 1.0).powf(2.0 / k) / 12.0
}

/// (η₀, η₁) for c = c_τ + ε after the change Z₁ = Z₂ + (a₂/2)Z₂²: F₂(Z₂) = η₀ + (1 + η₁)Z̄₂ + …
fn etas(d: usize, c0: C64, z0: C64, eps: C64) -> Result<(C64, C64)> {
    let jet = local_jet(d, c0 + eps, z0, d)?;
    let half = jet.a2() / 2.0;
    let (a0, da0) = jet.a.eval_with_derivative(C64::new(0.0, 0.0));
    // η₀ = φ⁻¹(A(0)) with φ(Z) = Z + (a₂/2)Z², the root near A(0)
    let mut eta0 = a0;
    for _ in 0..50 {
        let step = (eta0 + half * eta0 * eta0 - a0) / (1.0 + 2.0 * half * eta0);
        eta0 -= step;
        if step.norm() < 1e-17 {
            break;
        }
    }
    let slope = da0 / (1.0 + 2.0 * half * eta0);
    Ok((eta0, slope - 1.0))
}

/// Central-difference determinant of (Re ε, Im ε) ↦ (Re η₀, Re η₁) at c_τ.
pub fn genericity_jacobian(d: usize, tau_index: usize, h: f64) -> Result<f64> {
    if !(1e-8..=1e-2).contains(&h) {
        return Err(Error::Invalid(format!("step h = {h:e} outside [1e-8, 1e-2]")));
    }
    let pars = parabolic_parameters(d)?;
    let (c0, z0) = *pars
        .get(tau_index)
        .ok_or_else(|| Error::Invalid(format!("tau index {tau_index} out of range 0..{d}")))?;
    let col = |e: C64| -> Result<[f64; 2]> {
        let (p0, p1) = etas(d, c0, z0, e)?;
        let (m0, m1) = etas(d, c0, z0, -e)?;
        Ok([(p0 - m0).re / (2.0 * h), (p1 - m1).re / (2.0 * h)])
    };
    let a = col(C64::new(h, 0.0))?;
    let b = col(C64::new(0.0, h))?;
    Ok(a[0] * b[1] - a[1] * b[0])
}

/// Leading-order determinant: η₀ ≈ e^{ikθ/2}ε, η₁ ≈ -a₂η₀, so det = Im a₂ when a₂ ∈ iℝ.
pub fn leading_jacobian(jet: &LocalJet) -> f64 {
    // rows (Re η₀, Re η₁) in u = e^{ikθ/2}ε: [1, 0; -Re a₂, Im a₂], and ε ↦ u is a rotation
    jet.a2().im
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MulticornReport {
    pub d: usize,
    pub tau_index: usize,
    pub c_tau: C64,
    pub z_tau: C64,
    pub theta: f64,
    pub fixed_point_residual: f64,
    pub multiplier_residual: f64,
    pub a2: C64,
    pub a3: C64,
    pub codim2_value: f64,
    /// the literature's closed form, reported alongside for comparison
    pub displayed_value: f64,
    pub displayed_agrees: bool,
    /// r > 0 with (a₃ - a₂²) r² = 1/2
    pub r_scale: f64,
    pub jacobian_det: f64,
    pub leading_det: f64,
    pub codimension: usize,
    pub generic: bool,
}

pub fn codim2_certificate(d: usize) -> Result<Vec<MulticornReport>> {
    let pars = parabolic_parameters(d)?;
    let mut out = vec![];
    for (j, &(c, z)) in pars.iter().enumerate() {
        let jet = local_jet(d, c, z, d)?;
        let value = (jet.a3() - jet.a2() * jet.a2()).re;
        let displayed = displayed_codim2_value(d);
        let det = genericity_jacobian(d, j, 1e-5)?;
        let codim = codimension(&jet, 1e-9);
        out.push(MulticornReport {
            d,
            tau_index: j,
            c_tau: c,
            z_tau: z,
            theta: jet.theta,
            fixed_point_residual: (z.conj().powu(d as u32) + c - z).norm(),
            multiplier_residual: (d as f64 * z.conj().powu(d as u32 - 1).norm() - 1.0).abs(),
            a2: jet.a2(),
            a3: jet.a3(),
            codim2_value: value,
            displayed_value: displayed,
            displayed_agrees: (value - displayed).abs() < 1e-9,
            r_scale: if value > 0.0 { (0.5 / value).sqrt() } else { f64::NAN },
            jacobian_det: det,
            leading_det: leading_jacobian(&jet),
            // a₂ ∈ iℝ with a₃ - a₂² = 0 would mean codimension at least 3
            codimension: if codim == 2 && value <= 0.0 { 3 } else { codim },
            generic: det.abs() > 0.1,
        });
    }
    Ok(out)
}
