//! Fatou coordinates by orbit limits and horn maps as Fourier series (codimension k = 1).

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gk15, integrate_segment};
use crate::poly::CPoly;
use crate::vfield::VectorField;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// The holomorphic map being iterated.
#[derive(Clone, Debug)]
pub enum GMap {
    Poly(CPoly),
    /// time-1 map of the vector field
    Flow(VectorField),
    /// h⁻¹ ∘ g ∘ h for a polynomial h tangent to the identity
    Conjugated(Box<GMap>, CPoly),
}

/// Solve h(y) = z near z.
fn poly_inverse(h: &CPoly, z: C64) -> Result<C64> {
    let mut y = z - (h.eval(z) - z);
    for _ in 0..60 {
        let (v, d) = h.eval_with_derivative(y);
        let step = (v - z) / d;
        y -= step;
        if step.norm() <= 1e-16 * (1.0 + y.norm()) {
            return Ok(y);
        }
    }
    let r = (h.eval(y) - z).norm();
    if r < 1e-14 * (1.0 + z.norm()) {
        Ok(y)
    } else {
        Err(Error::NotConverged(format!("polynomial inverse at {z}: residual {r:e}")))
    }
}

impl GMap {
    pub fn apply(&self, z: C64) -> Result<C64> {
        match self {
            GMap::Poly(p) => Ok(p.eval(z)),
            GMap::Flow(v) => v.flow(z, c(1.0, 0.0), 1e-13),
            GMap::Conjugated(g, h) => poly_inverse(h, g.apply(h.eval(z))?),
        }
    }

    pub fn derivative(&self, z: C64) -> Result<C64> {
        match self {
            GMap::Poly(p) => Ok(p.eval_with_derivative(z).1),
            GMap::Flow(v) => {
                let h = 1e-6 * (1.0 + z.norm());
                let a = v.flow(z + h, c(1.0, 0.0), 1e-13)?;
                let b = v.flow(z - h, c(1.0, 0.0), 1e-13)?;
                Ok((a - b) / (2.0 * h))
            }
            GMap::Conjugated(g, h) => {
                let (hz, dh) = h.eval_with_derivative(z);
                let w = g.apply(hz)?;
                let y = poly_inverse(h, w)?;
                Ok(g.derivative(hz)? * dh / h.eval_with_derivative(y).1)
            }
        }
    }

    /// The branch of g^{-1} close to the identity.
    pub fn inverse(&self, z: C64) -> Result<C64> {
        match self {
            GMap::Flow(v) => v.flow(z, c(-1.0, 0.0), 1e-13),
            GMap::Poly(p) => poly_inverse(p, z),
            GMap::Conjugated(g, h) => poly_inverse(h, g.inverse(h.eval(z))?),
        }
    }
}

/// Holomorphic k = 1 germ brought to prepared position by an affine change A(w) = m + αw:
/// fixed points at ±a with P = w² − a², and b = Σ 1/log λ.
#[derive(Clone, Debug)]
pub struct PreparedK1 {
    pub g: CPoly,
    pub vf: VectorField,
    pub shift: C64,
    pub scale: C64,
}

/// Prepare a polynomial germ with a fixed point of multiplicity two (or two nearby fixed
/// points) closest to the origin.
pub fn prepare_k1(g: &CPoly) -> Result<PreparedK1> {
    let fix = g - &CPoly::identity();
    let mut pts = fix.raw_roots()?;
    pts.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    if pts.len() < 2 {
        return Err(Error::Invalid("need two fixed points near the origin".into()));
    }
    let (z1, z2) = (pts[0], pts[1]);
    if pts.len() > 2 && pts[2].norm() < 2.0 * z2.norm().max(1e-3) {
        return Err(Error::Invalid("third fixed point too close to the pair".into()));
    }
    let dg = g.derivative();
    let (m, alpha, a, b) = if (z1 - z2).norm() < 1e-7 {
        let m = (z1 + z2) * 0.5;
        let loc = g.affine_substitute(c(1.0, 0.0), m);
        let (c2, c3) = (loc.coeff(2), loc.coeff(3));
        (m, 1.0 / c2, c(0.0, 0.0), 1.0 - c3 / (c2 * c2))
    } else {
        let (l1, l2) = (dg.eval(z1).ln(), dg.eval(z2).ln());
        // label the repelling point +a
        let (z1, z2, l1, l2) = if l1.re >= l2.re { (z1, z2, l1, l2) } else { (z2, z1, l2, l1) };
        let a = 1.0 / (1.0 / l1 - 1.0 / l2);
        ((z1 + z2) * 0.5, (z1 - z2) / (2.0 * a), a, 1.0 / l1 + 1.0 / l2)
    };
    let gt = (&g.affine_substitute(alpha, m) - &CPoly::constant(m)).scale(1.0 / alpha);
    let vf = VectorField::from_eps(&[-(a * a)], b)?;
    Ok(PreparedK1 { g: gt, vf, shift: m, scale: alpha })
}

/// Which end of the orbit is used: forward orbits into the attracting point (sector 1) or
/// backward orbits into the repelling point (sector 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    AttractingEnd,
    RepellingEnd,
}

impl Side {
    pub fn sector(self) -> i32 {
        match self {
            Side::RepellingEnd => 0,
            Side::AttractingEnd => 1,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FatouOptions {
    /// orbit length before the parabolic tail fit
    pub n_max: usize,
    /// terms below this for three consecutive steps end the sum early
    pub term_tol: f64,
}

impl Default for FatouOptions {
    fn default() -> Self {
        FatouOptions { n_max: 1024, term_tol: 1e-15 }
    }
}

/// Fit S(w) - S(p) ≈ s1 u + s2 u² + s3 u³ (u = w - p) to the partial-sum differences between
/// four orbit checkpoints and return the tail S(z_N) - S(p).
fn parabolic_tail(marks: &[(C64, C64)], p: C64) -> C64 {
    let u: Vec<C64> = marks.iter().map(|m| m.0 - p).collect();
    let mut a = [[c(0.0, 0.0); 4]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = u[i].powi(j as i32 + 1) - u[i + 1].powi(j as i32 + 1);
        }
        a[i][3] = marks[i + 1].1 - marks[i].1;
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm())).unwrap();
        a.swap(col, piv);
        if a[col][col].norm() == 0.0 {
            return c(0.0, 0.0);
        }
        for r in 0..3 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..4 {
                    let v = a[col][k];
                    a[r][k] -= f * v;
                }
            }
        }
    }
    let s: Vec<C64> = (0..3).map(|i| a[i][3] / a[i][i]).collect();
    let w = u[3];
    s[0] * w + s[1] * w * w + s[2] * w * w * w
}

/// Φ(z) = T(z) + Σ_n (Δ(z_n) ∓ 1) - Φ(X), where T is the branch of ∫ω for the sector,
/// Δ(z) = ∫ω along the segment z -> g^{±1}(z), and X is the base point.
#[derive(Clone, Debug)]
pub struct FatouCoord {
    pub g: GMap,
    pub vf: VectorField,
    pub side: Side,
    pub tol: f64,
    pub opts: FatouOptions,
    pub base_point: C64,
    pub base_normalization: C64,
    /// ±a, the roots of P
    pub fixed: [C64; 2],
}

impl FatouCoord {
    /// The base point is put on the real axis outside the pair of fixed points, on the side of
    /// the sector (right of +a for the repelling end, left of -a for the attracting end).
    pub fn new(g: GMap, vf: VectorField, side: Side, tol: f64, opts: FatouOptions) -> Result<FatouCoord> {
        if vf.k != 1 {
            return Err(Error::Invalid(format!("Fatou coordinates are implemented for k = 1, got k = {}", vf.k)));
        }
        let a = (-vf.p.coeff(0)).sqrt();
        let a = if a.re < 0.0 || (a.re == 0.0 && a.im < 0.0) { -a } else { a };
        for z in [a, -a] {
            if let GMap::Flow(_) = g {
                break;
            }
            let r = (g.apply(z)? - z).norm();
            if r > 1e-8 {
                return Err(Error::Invalid(format!("g does not fix the root {z} of P (residual {r:e})")));
            }
        }
        let x = match side {
            Side::RepellingEnd => a + 0.25 * (1.0 + a.norm()),
            Side::AttractingEnd => -a - 0.25 * (1.0 + a.norm()),
        };
        let mut fc = FatouCoord {
            g,
            vf,
            side,
            tol,
            opts,
            base_point: x,
            base_normalization: c(0.0, 0.0),
            fixed: [a, -a],
        };
        fc.base_normalization = fc.raw(x)?.0;
        Ok(fc)
    }

    pub fn with_base(mut self, x: C64) -> Result<FatouCoord> {
        self.base_point = x;
        self.base_normalization = c(0.0, 0.0);
        self.base_normalization = self.raw(x)?.0;
        Ok(self)
    }

    /// Branch of ∫ω: principal logs on sector 0, args in (0, 2π) on sector 1.
    pub fn time(&self, z: C64) -> C64 {
        let b = self.vf.b;
        let [a, _] = self.fixed;
        let lg = |w: C64| {
            let l = w.ln();
            if self.side == Side::AttractingEnd && l.im < 0.0 {
                l + c(0.0, 2.0 * PI)
            } else {
                l
            }
        };
        if a.norm() < 1e-12 {
            -1.0 / z + b * lg(z)
        } else {
            let ca = (1.0 + a * b) / (2.0 * a);
            let cb = -(1.0 - a * b) / (2.0 * a);
            ca * lg(z - a) + cb * lg(z + a)
        }
    }

    /// ω = (1 + bz)/((z - a)(z + a)), factored to avoid cancellation near the roots.
    pub fn omega(&self, z: C64) -> C64 {
        let [a, m] = self.fixed;
        (1.0 + self.vf.b * z) / ((z - a) * (z - m))
    }

    fn step_integral(&self, a: C64, b: C64) -> Result<C64> {
        let w = |z: C64| self.omega(z);
        let (v, e) = gk15(&w, a, b);
        let tol = 1e-14 * v.norm().max(1.0);
        if e <= tol {
            Ok(v)
        } else {
            integrate_segment(&w, a, b, tol)
        }
    }

    /// Unnormalized value and derivative (the derivative of the truncated sum, which
    /// telescopes to ω(z_N)·(g^{±N})'(z)).
    ///
    /// S = Φ - T is holomorphic at a hyperbolic end and has an expansion in powers of z - p at
    /// the parabolic end (b being the exact residue), so the tail S(z_N) - S(p) is fitted from
    /// the last orbit terms t_n = S(z_n) - S(z_{n+1}).
    fn raw(&self, z0: C64) -> Result<(C64, C64)> {
        let sign = if self.side == Side::AttractingEnd { 1.0 } else { -1.0 };
        let scale = 1.0 + self.fixed[0].norm();
        let hyperbolic = self.fixed[0].norm() > 1e-12;
        let p = if self.side == Side::AttractingEnd { self.fixed[1] } else { self.fixed[0] };
        let mut z = z0;
        let mut dz = c(1.0, 0.0);
        let mut sum = c(0.0, 0.0);
        // (z_n, partial sum before step n) at n = N/8, N/4, N/2
        let mut marks = Vec::with_capacity(3);
        let mut small = 0;
        let n_max = self.opts.n_max.max(16);
        for n in 0..n_max {
            let (zn, dn) = match self.side {
                Side::AttractingEnd => (self.g.apply(z)?, self.g.derivative(z)?),
                Side::RepellingEnd => {
                    let y = self.g.inverse(z)?;
                    (y, 1.0 / self.g.derivative(y)?)
                }
            };
            if !(zn.norm() < 10.0 * scale) {
                return Err(Error::NotConverged("strip too short; enlarge r or reduce eps".into()));
            }
            let t = self.step_integral(z, zn)? - sign;
            sum += t;
            dz *= dn;
            if hyperbolic && (zn - p).norm() < 1e-6 * scale {
                // linear fit S(w) - S(p) ≈ s1 (w - p)
                let tail = t / (z - zn) * (zn - p);
                return Ok((self.time(z0) + sum + tail, self.omega(zn) * dz));
            }
            if t.norm() < self.opts.term_tol {
                small += 1;
                if small >= 3 {
                    return Ok((self.time(z0) + sum, self.omega(zn) * dz));
                }
            } else {
                small = 0;
            }
            z = zn;
            if [n_max / 8, n_max / 4, n_max / 2].contains(&(n + 1)) {
                marks.push((z, sum));
            }
            if n + 1 == n_max {
                marks.push((z, sum));
                let tail = parabolic_tail(&marks, p);
                return Ok((self.time(z0) + sum + tail, self.omega(zn) * dz));
            }
        }
        unreachable!()
    }

    pub fn eval(&self, z: C64) -> Result<C64> {
        Ok(self.raw(z)?.0 - self.base_normalization)
    }

    pub fn eval_with_derivative(&self, z: C64) -> Result<(C64, C64)> {
        let (v, d) = self.raw(z)?;
        Ok((v - self.base_normalization, d))
    }

    /// Newton solve of Φ(z) = w from `guess`; stops once the step is at roundoff level, since
    /// the evaluation noise can exceed the nominal tolerance.
    pub fn invert(&self, w: C64, guess: C64) -> Result<C64> {
        let mut z = guess;
        let mut best = (f64::INFINITY, guess);
        for _ in 0..40 {
            let (v, d) = self.eval_with_derivative(z)?;
            let r = v - w;
            if r.norm() < best.0 {
                best = (r.norm(), z);
            }
            if r.norm() < 1e-13 * (1.0 + w.norm()) {
                return Ok(z);
            }
            let step = r / d;
            if !(step.norm() < 0.5 * (1.0 + z.norm())) {
                break;
            }
            z -= step;
            if step.norm() < 1e-14 * (1.0 + z.norm()) {
                break;
            }
        }
        if best.0 < 1e-8 * (1.0 + w.norm()) {
            Ok(best.1)
        } else {
            Err(Error::NotConverged(format!("Newton inversion of the Fatou coordinate diverged near W = {w}")))
        }
    }

    /// |Φ(g(z)) - Φ(z) - 1| at z.
    pub fn functional_residual(&self, z: C64) -> Result<f64> {
        let gz = self.g.apply(z)?;
        Ok((self.eval(gz)? - self.eval(z)? - 1.0).norm())
    }
}

/// One horn map Ψ_ℓ = Φ_att ∘ Φ_rep⁻¹ on the upper (ℓ = 1) or lower (ℓ = -1) overlap, stored as
/// the Fourier series of Ψ(W) - W along the line Im W = line_height:
/// Ψ(x + iH) - (x + iH) = Σ a_m e^{2πimx}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionMap {
    pub ell: i32,
    pub src_sector: i32,
    pub dst_sector: i32,
    /// (m, a_m) for |m| ≤ M, in increasing m
    pub fourier: Vec<(i32, C64)>,
    pub constant_term: C64,
    pub line_height: f64,
    /// real part of the first sample
    pub line_start: f64,
    pub samples: usize,
    /// max |Φ_src(z_j) - W_j| after inversion
    pub inversion_residual: f64,
    /// translations applied by normalize_constants (src, dst)
    pub normalization: (C64, C64),
}

impl TransitionMap {
    pub fn coeff(&self, m: i32) -> C64 {
        self.fourier.iter().find(|(n, _)| *n == m).map(|x| x.1).unwrap_or_default()
    }

    /// Coefficient of e^{2πimW} in Ψ(W) - W.
    pub fn modulus_coeff(&self, m: i32) -> C64 {
        self.coeff(m) * (2.0 * PI * m as f64 * self.line_height).exp()
    }

    pub fn max_odd(&self) -> (i32, f64) {
        self.fourier
            .iter()
            .filter(|(m, _)| m % 2 != 0)
            .map(|(m, a)| (*m, a.norm()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc })
    }

    pub fn max_nonconstant(&self) -> f64 {
        self.fourier.iter().filter(|(m, _)| *m != 0).map(|x| x.1.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, w: C64) -> C64 {
        let y = w.im - self.line_height;
        w + self
            .fourier
            .iter()
            .map(|(m, a)| a * (C64::new(-2.0 * PI * *m as f64 * y, 2.0 * PI * *m as f64 * w.re)).exp())
            .sum::<C64>()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HornOptions {
    pub m: usize,
    /// height above (ℓ = 1) or below (ℓ = -1) the strip center π Re(b)/2
    pub h: f64,
    /// override for the first sample's real part
    pub line_start: Option<f64>,
}

impl Default for HornOptions {
    fn default() -> Self {
        HornOptions { m: 16, h: 2.0, line_start: None }
    }
}

/// Strip center for the overlap on side ℓ in the repelling chart.
pub fn strip_center(b: C64, ell: i32) -> f64 {
    ell.signum() as f64 * 0.5 * PI * b.re
}

fn axis_point(src: &FatouCoord, height: f64, s: f64) -> Result<C64> {
    let f = |y: f64| -> Result<f64> { Ok(src.eval(c(0.0, s * y))?.im - height) };
    let scale = 1.0 + src.fixed[0].norm();
    let d = (s * height - strip_center(src.vf.b, 1)).max(0.2);
    let (mut y0, mut y1) = (scale / d, 0.9 * scale / d);
    let (mut f0, mut f1) = (f(y0)?, f(y1)?);
    for _ in 0..60 {
        if f1.abs() < 1e-11 * (1.0 + height.abs()) {
            return Ok(c(0.0, s * y1));
        }
        let mut y2 = y1 - f1 * (y1 - y0) / (f1 - f0);
        if !(y2 > 0.0) || !y2.is_finite() {
            y2 = 0.5 * y1;
        }
        y2 = y2.clamp(0.5 * y1, 2.0 * y1);
        y0 = y1;
        f0 = f1;
        y1 = y2;
        f1 = f(y1)?;
    }
    Err(Error::NotConverged("insufficient overlap: no sampling line found on the imaginary axis".into()))
}

/// Sample Ψ_ℓ on N = 4M + 1 points of one period of the line and take its DFT.
pub fn transition_map(src: &FatouCoord, dst: &FatouCoord, ell: i32, opts: &HornOptions) -> Result<TransitionMap> {
    if src.side != Side::RepellingEnd || dst.side != Side::AttractingEnd || ell.abs() != 1 {
        return Err(Error::Invalid("horn maps go from the repelling to the attracting chart with ell = ±1".into()));
    }
    let s = ell as f64;
    let height = strip_center(src.vf.b, ell) + s * opts.h;
    let z_axis = axis_point(src, height, s)?;
    let x_axis = src.eval(z_axis)?.re;
    let x0 = opts.line_start.unwrap_or(x_axis - 0.5);
    let n = 4 * opts.m + 1;
    let ws: Vec<C64> = (0..n).map(|j| c(x0 + j as f64 / n as f64, height)).collect();
    // continuation outward from the sample closest to the axis crossing
    let jc = ((x_axis - x0) * n as f64).round().clamp(0.0, (n - 1) as f64) as usize;
    let mut zs = vec![c(0.0, 0.0); n];
    let mut guess = src.invert(ws[jc], z_axis)?;
    zs[jc] = guess;
    for j in (0..jc).rev() {
        guess = src.invert(ws[j], guess)?;
        zs[j] = guess;
    }
    guess = zs[jc];
    for j in jc + 1..n {
        guess = src.invert(ws[j], guess)?;
        zs[j] = guess;
    }
    let mut resid: f64 = 0.0;
    let mut f = Vec::with_capacity(n);
    for (w, z) in ws.iter().zip(&zs) {
        resid = resid.max((src.eval(*z)? - w).norm());
        f.push(dst.eval(*z)? - w);
    }
    let m = opts.m as i32;
    let fourier: Vec<(i32, C64)> = (-m..=m)
        .map(|k| {
            let a = ws.iter().zip(&f).map(|(w, v)| v * C64::from_polar(1.0, -2.0 * PI * k as f64 * w.re)).sum::<C64>();
            (k, a / n as f64)
        })
        .collect();
    let constant_term = fourier[opts.m].1;
    Ok(TransitionMap {
        ell,
        src_sector: src.side.sector(),
        dst_sector: dst.side.sector(),
        fourier,
        constant_term,
        line_height: height,
        line_start: x0,
        samples: n,
        inversion_residual: resid,
        normalization: (c(0.0, 0.0), c(0.0, 0.0)),
    })
}

/// c_ℓ = sgn(ℓ)(-1)^ℓ iπb/k
pub fn target_constant(ell: i32, b: C64, k: usize) -> C64 {
    let sign = ell.signum() as f64 * if ell.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    c(0.0, sign * PI) * b / k as f64
}

/// Conjugate every map by the translations Ψ ↦ T_{-B_dst} ∘ Ψ ∘ T_{B_src}, one B per sector with
/// the smallest sector fixed at B = 0, so that the constant terms hit their targets.
pub fn normalize_constants(maps: &[TransitionMap], b: C64, k: usize, tol: f64) -> Result<Vec<TransitionMap>> {
    let mut labels: Vec<i32> = maps.iter().flat_map(|t| [t.src_sector, t.dst_sector]).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut shift: std::collections::BTreeMap<i32, C64> = std::collections::BTreeMap::new();
    if let Some(l) = labels.first() {
        shift.insert(*l, c(0.0, 0.0));
    }
    // B_src - B_dst = target - c0 along each edge, propagated until nothing changes
    loop {
        let mut changed = false;
        for t in maps {
            let d = target_constant(t.ell, b, k) - t.constant_term;
            match (shift.get(&t.src_sector).copied(), shift.get(&t.dst_sector).copied()) {
                (Some(bs), None) => {
                    shift.insert(t.dst_sector, bs - d);
                    changed = true;
                }
                (None, Some(bd)) => {
                    shift.insert(t.src_sector, bd + d);
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = Vec::with_capacity(maps.len());
    for t in maps {
        let (bs, bd) = match (shift.get(&t.src_sector), shift.get(&t.dst_sector)) {
            (Some(x), Some(y)) => (*x, *y),
            _ => return Err(Error::Invalid("chain incompatible: maps do not connect all sectors".into())),
        };
        let c0 = t.constant_term + bs - bd;
        let target = target_constant(t.ell, b, k);
        if (c0 - target).norm() > tol {
            return Err(Error::Invalid(format!(
                "chain incompatible: constant {c0} for ell = {} misses target {target} by {:e}",
                t.ell,
                (c0 - target).norm()
            )));
        }
        let mut u = t.clone();
        for (m, a) in u.fourier.iter_mut() {
            *a = if *m == 0 { target } else { *a * (c(0.0, 2.0 * PI * *m as f64) * bs).exp() };
        }
        u.constant_term = target;
        u.normalization = (bs, bd);
        out.push(u);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(eps: f64) -> PreparedK1 {
        prepare_k1(&CPoly::from_real(&[eps, 1.0, 1.0])).unwrap()
    }

    #[test]
    fn prepare_z_plus_z2() {
        let p = quad(0.0);
        assert!((p.vf.b - 1.0).norm() < 1e-12);
        assert!((p.g.coeff(2) - 1.0).norm() < 1e-12);
        let p = quad(-0.01);
        // b = Σ 1/log λ over λ = 1 ± 0.2
        let b = 1.0 / 1.2f64.ln() + 1.0 / 0.8f64.ln();
        assert!((p.vf.b.re - b).abs() < 1e-12 && p.vf.b.im.abs() < 1e-14);
    }

    #[test]
    fn functional_equation_z_plus_z2() {
        for eps in [0.0, -0.01] {
            let p = quad(eps);
            for side in [Side::AttractingEnd, Side::RepellingEnd] {
                let f = FatouCoord::new(GMap::Poly(p.g.clone()), p.vf.clone(), side, 1e-6, FatouOptions::default())
                    .unwrap();
                let s = if side == Side::AttractingEnd { -1.0 } else { 1.0 };
                for z in [c(0.3 * s, 0.2), c(0.2 * s, -0.3), c(0.1 * s, 0.05)] {
                    let r = f.functional_residual(z).unwrap();
                    assert!(r < 1e-7, "eps {eps} {side:?} z {z}: {r:e}");
                }
            }
        }
    }
    fn charts(eps: f64, flow: bool) -> (PreparedK1, FatouCoord, FatouCoord) {
        let p = quad(eps);
        let g = if flow { GMap::Flow(p.vf.clone()) } else { GMap::Poly(p.g.clone()) };
        let o = FatouOptions { term_tol: if flow { 1e-12 } else { 1e-15 }, ..Default::default() };
        let rep = FatouCoord::new(g.clone(), p.vf.clone(), Side::RepellingEnd, 1e-6, o).unwrap();
        let att = FatouCoord::new(g, p.vf.clone(), Side::AttractingEnd, 1e-6, o).unwrap();
        (p, rep, att)
    }

    #[test]
    fn change_of_base_is_a_translation() {
        let (_, rep, _) = charts(-0.01, false);
        let x1 = c(0.3, 0.1);
        let moved = rep.clone().with_base(x1).unwrap();
        let delta = rep.eval(x1).unwrap();
        for z in [c(0.2, 0.2), c(0.4, -0.1)] {
            let d = rep.eval(z).unwrap() - moved.eval(z).unwrap();
            assert!((d - delta).norm() < 1e-8);
        }
    }

    #[test]
    fn normal_form_has_translation_horn_maps() {
        let (p, rep, att) = charts(-0.01, true);
        let maps: Vec<_> =
            [1, -1].iter().map(|&l| transition_map(&rep, &att, l, &HornOptions::default()).unwrap()).collect();
        let maps = normalize_constants(&maps, p.vf.b, 1, 1e-7).unwrap();
        for t in &maps {
            assert!(t.max_nonconstant() < 1e-6);
            assert!((t.constant_term - target_constant(t.ell, p.vf.b, 1)).norm() < 1e-7);
        }
    }

    #[test]
    fn quadratic_horn_map_has_stable_odd_part() {
        let (p, rep, att) = charts(0.0, false);
        let a = transition_map(&rep, &att, 1, &HornOptions::default()).unwrap();
        let b = transition_map(&rep, &att, 1, &HornOptions { m: 32, ..Default::default() }).unwrap();
        let (m, odd) = a.max_odd();
        assert!(odd > 1e-4);
        assert!((b.coeff(m) - a.coeff(m)).norm() < 0.1 * odd);
        // one period further along the line
        let shifted = transition_map(&rep, &att, 1, &HornOptions { line_start: Some(a.line_start + 1.0), ..Default::default() })
            .unwrap();
        for ((_, x), (_, y)) in a.fourier.iter().zip(&shifted.fourier) {
            assert!((x - y).norm() < 1e-9);
        }
        let lower = transition_map(&rep, &att, -1, &HornOptions::default()).unwrap();
        let n = normalize_constants(&[a, lower], p.vf.b, 1, 1e-7).unwrap();
        assert!((n[0].constant_term - c(0.0, -PI)).norm() < 1e-12);
        assert!((n[1].constant_term - c(0.0, PI)).norm() < 1e-12);
    }

    #[test]
    fn targets() {
        assert!((target_constant(1, c(2.0, 0.0), 1) - c(0.0, -2.0 * PI)).norm() < 1e-15);
        assert!((target_constant(-1, c(2.0, 0.0), 1) - c(0.0, 2.0 * PI)).norm() < 1e-15);
        assert_eq!(target_constant(2, c(0.0, 0.0), 2), c(0.0, 0.0));
    }

    #[test]
    fn incompatible_chain_is_rejected() {
        let (p, rep, att) = charts(-0.01, true);
        let mut maps: Vec<_> =
            [1, -1].iter().map(|&l| transition_map(&rep, &att, l, &HornOptions::default()).unwrap()).collect();
        maps[1].constant_term += 0.1;
        assert!(normalize_constants(&maps, p.vf.b, 1, 1e-7).is_err());
    }
}
