//! Decision predicates on horn maps: half-period commutation, Σ-symmetry, antiholomorphic square
//! roots, invariant curves, and the period-n orbit count of z + z².

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fatou::{
    normalize_constants, prepare_k1, transition_map, FatouCoord, FatouOptions, GMap, HornOptions, PreparedK1, Side,
    TransitionMap,
};
use crate::poly::CPoly;
use crate::vfield::VectorField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub label: String,
    pub value: f64,
    #[serde(rename = "tol")]
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredicateReport {
    pub predicate: String,
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
    pub tolerance: f64,
    pub flags: Vec<String>,
}

impl PredicateReport {
    fn new(predicate: &str, tol: f64) -> Self {
        PredicateReport {
            predicate: predicate.into(),
            verdict: Verdict::Holds,
            witnesses: vec![],
            tolerance: tol,
            flags: vec![],
        }
    }

    fn witness(&mut self, label: impl Into<String>, value: f64) {
        self.witnesses.push(Witness { label: label.into(), value, tolerance: self.tolerance });
    }
}

/// holds < tol ≤ inconclusive ≤ 10·tol < fails (at both resolutions)
fn grade(value: f64, doubled: Option<f64>, tol: f64) -> Verdict {
    if value < tol {
        Verdict::Holds
    } else if value > 10.0 * tol && doubled.is_some_and(|d| d > 10.0 * tol && (d - value).abs() <= 0.1 * value) {
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    }
}

fn merge(a: Verdict, b: Verdict) -> Verdict {
    match (a, b) {
        (Verdict::Fails, _) | (_, Verdict::Fails) => Verdict::Fails,
        (Verdict::Holds, Verdict::Holds) => Verdict::Holds,
        _ => Verdict::Inconclusive,
    }
}

/// Normalized horn maps of one parameter value at resolution M and 2M.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleMaps {
    pub label: String,
    pub b: C64,
    pub maps: Vec<TransitionMap>,
    pub doubled: Vec<TransitionMap>,
}

/// Default tolerance on line coefficients for all predicates.
pub const DEFAULT_TOL: f64 = 1e-8;

impl SampleMaps {
    /// All nonconstant coefficients below tol and within 100× of the noise floor.
    pub fn trivial(&self, tol: f64) -> bool {
        self.maps.iter().all(|t| t.max_nonconstant() < tol.min(100.0 * noise_floor(t).max(1e-14)))
    }
}

fn pair(g: &GMap, vf: &VectorField, term_tol: f64) -> Result<(FatouCoord, FatouCoord)> {
    let o = FatouOptions { term_tol, ..Default::default() };
    Ok((
        FatouCoord::new(g.clone(), vf.clone(), Side::RepellingEnd, 1e-6, o)?,
        FatouCoord::new(g.clone(), vf.clone(), Side::AttractingEnd, 1e-6, o)?,
    ))
}

/// Both horn maps (ℓ = ±1) of a prepared k = 1 map, normalized, at M and 2M.
pub fn sample_maps(label: &str, g: GMap, vf: &VectorField, opts: &HornOptions) -> Result<SampleMaps> {
    let term_tol = if matches!(g, GMap::Flow(_)) { 1e-12 } else { 1e-15 };
    let (rep, att) = pair(&g, vf, term_tol)?;
    let run = |m: usize| -> Result<Vec<TransitionMap>> {
        let o = HornOptions { m, ..*opts };
        let maps = [1, -1].iter().map(|&l| transition_map(&rep, &att, l, &o)).collect::<Result<Vec<_>>>()?;
        normalize_constants(&maps, vf.b, 1, 1e-6 * (1.0 + vf.b.norm()))
    };
    Ok(SampleMaps { label: label.into(), b: vf.b, maps: run(opts.m)?, doubled: run(2 * opts.m)? })
}

/// Prepare a polynomial g and compute its maps.
pub fn sample_poly(label: &str, g: &CPoly, opts: &HornOptions) -> Result<(PreparedK1, SampleMaps)> {
    let p = prepare_k1(g)?;
    let s = sample_maps(label, GMap::Poly(p.g.clone()), &p.vf, opts)?;
    Ok((p, s))
}

fn by_ell(maps: &[TransitionMap], ell: i32) -> Result<&TransitionMap> {
    maps.iter()
        .find(|t| t.ell == ell)
        .ok_or_else(|| Error::Invalid(format!("no transition map with ell = {ell}")))
}

/// Largest odd-frequency line coefficient over a chain.
pub fn max_odd(maps: &[TransitionMap]) -> (i32, i32, f64) {
    maps.iter()
        .map(|t| {
            let (m, v) = t.max_odd();
            (t.ell, m, v)
        })
        .fold((0, 0, 0.0), |a, x| if x.2 > a.2 { x } else { a })
}

/// T_{1/2} ∘ Ψ = Ψ ∘ T_{1/2} for every map, i.e. no odd frequencies.
pub fn check_half_period(maps: &[TransitionMap], doubled: Option<&[TransitionMap]>, tol: f64) -> PredicateReport {
    let mut r = PredicateReport::new("half_period", tol);
    let (ell, m, v) = max_odd(maps);
    r.witness(format!("max odd |a_m| (ell {ell}, m {m})"), v);
    let d = doubled.map(|d| {
        let x = d.iter().find(|t| t.ell == ell).map(|t| t.coeff(m).norm()).unwrap_or(0.0);
        r.witness(format!("same coefficient at doubled resolution (ell {ell}, m {m})"), x);
        x
    });
    r.verdict = grade(v, d, tol);
    r
}

/// Noise level of a map: its frequencies of the wrong sign (negative for ℓ = 1, positive for
/// ℓ = -1) vanish in exact arithmetic.
pub fn noise_floor(t: &TransitionMap) -> f64 {
    t.fourier.iter().filter(|(m, _)| m * t.ell < 0).map(|x| x.1.norm()).fold(0.0, f64::max)
}

/// Residual of q(m)·s^m = conj(p(-m))·e^{κm} (s = -1 composes with T_{1/2}), over the constant term
/// and the frequencies where either side stands above 100× the noise floor.
/// κ is the leftover gauge: a complex translation of the Fatou coordinates rescales both sides by
/// e^{2πimB}, which survives the comparison as the real factor e^{-4πm Im B}.
pub fn symmetry_residual(p: &TransitionMap, q: &TransitionMap, alternate: bool) -> f64 {
    let sign = |m: i32| if alternate && m % 2 != 0 { -1.0 } else { 1.0 };
    let floor = 100.0 * noise_floor(p).max(noise_floor(q)).max(1e-300);
    let ms: Vec<i32> = q
        .fourier
        .iter()
        .map(|x| x.0)
        .filter(|&m| m * q.ell > 0 && (q.coeff(m).norm() > floor || p.coeff(-m).norm() > floor))
        .collect();
    let star = ms.iter().copied().max_by(|&a, &b| p.coeff(-a).norm().total_cmp(&p.coeff(-b).norm()));
    let kappa = match star {
        Some(m) if q.coeff(m).norm() > floor && p.coeff(-m).norm() > floor => {
            (q.coeff(m).norm() / p.coeff(-m).norm()).ln() / m as f64
        }
        _ => 0.0,
    };
    let mut worst = (q.coeff(0) - p.coeff(0).conj()).norm();
    for m in ms {
        let lhs = q.coeff(m) * sign(m);
        let rhs = p.coeff(-m).conj() * (kappa * m as f64).exp();
        worst = worst.max((lhs - rhs).norm());
    }
    worst
}

fn symmetry_report(
    name: &str,
    at: &SampleMaps,
    at_conj: &SampleMaps,
    alternate: bool,
    tol: f64,
) -> Result<PredicateReport> {
    let mut r = PredicateReport::new(name, tol);
    let mut verdict = Verdict::Holds;
    for ell in [1, -1] {
        let v = symmetry_residual(by_ell(&at.maps, ell)?, by_ell(&at_conj.maps, -ell)?, alternate);
        let d = symmetry_residual(by_ell(&at.doubled, ell)?, by_ell(&at_conj.doubled, -ell)?, alternate);
        r.witness(format!("residual ell {ell}"), v);
        r.witness(format!("residual ell {ell}, doubled resolution"), d);
        verdict = merge(verdict, grade(v, Some(d), tol));
    }
    r.verdict = verdict;
    Ok(r)
}

/// Σ ∘ Ψ_ℓ(ε) = Ψ_{-ℓ}(ε̄) ∘ Σ with Σ(W) = W̄.
pub fn check_sigma_symmetry(at: &SampleMaps, at_conj: &SampleMaps, tol: f64) -> Result<PredicateReport> {
    symmetry_report("sigma_symmetry", at, at_conj, false, tol)
}

/// Σ T_{1/2} ∘ Ψ_ℓ(ε) = Ψ_{-ℓ}(ε̄) ∘ Σ T_{1/2}, the square-root condition for the symmetry axis ℝ.
pub fn check_square_root_condition(at: &SampleMaps, at_conj: &SampleMaps, tol: f64) -> Result<PredicateReport> {
    symmetry_report("square_root_condition", at, at_conj, true, tol)
}

fn aggregate(name: &str, parts: Vec<PredicateReport>, tol: f64) -> PredicateReport {
    let mut r = PredicateReport::new(name, tol);
    r.verdict = parts.iter().fold(Verdict::Holds, |v, p| merge(v, p.verdict));
    for p in parts {
        for w in p.witnesses {
            r.witnesses.push(Witness { label: format!("{}: {}", p.predicate, w.label), ..w });
        }
        r.flags.extend(p.flags);
    }
    r
}

/// Square-root verdict over real parameter samples (each its own conjugate). k = 1 has the single
/// symmetry axis m = 0. A trivial modulus at every sample holds with non-uniqueness flagged.
pub fn square_root_verdict(samples: &[SampleMaps], tol: f64) -> Result<PredicateReport> {
    let mut parts = vec![];
    for s in samples {
        let mut p = check_square_root_condition(s, s, tol)?;
        p.predicate = format!("{} m=0 [{}]", p.predicate, s.label);
        parts.push(p);
    }
    let mut r = aggregate("square_root", parts, tol);
    if samples.iter().all(|s| s.trivial(tol)) {
        r.verdict = Verdict::Holds;
        r.flags.push("trivial_modulus".into());
        r.flags.push("square_root_not_unique".into());
    } else if r.verdict == Verdict::Holds {
        r.flags.push("square_root_unique".into());
    }
    Ok(r)
}

/// Invariant real-analytic curve: half-period and Σ-symmetry both hold at every real sample.
pub fn invariant_curve_verdict(samples: &[SampleMaps], tol: f64) -> Result<PredicateReport> {
    let mut parts = vec![];
    for s in samples {
        let mut h = check_half_period(&s.maps, Some(&s.doubled), tol);
        h.predicate = format!("{} [{}]", h.predicate, s.label);
        let mut g = check_sigma_symmetry(s, s, tol)?;
        g.predicate = format!("{} [{}]", g.predicate, s.label);
        if h.verdict != g.verdict {
            g.flags.push(format!("half_period and sigma_symmetry disagree at {}", s.label));
        }
        parts.push(h);
        parts.push(g);
    }
    Ok(aggregate("invariant_curve", parts, tol))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitCount {
    pub n: u32,
    pub count: u64,
    pub residue_mod_4: u64,
    /// for n ≤ 5: all period-n points found by root-finding are simple and nonzero
    pub verified: Option<bool>,
}

fn is_prime(n: u32) -> bool {
    n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

/// Period-n points of z + z² (n prime): deg(g^n(z) - z) minus the double root at 0.
pub fn quadratic_orbit_count(n: u32) -> Result<OrbitCount> {
    if !is_prime(n) || n > 13 {
        return Err(Error::Invalid(format!("n must be a prime at most 13, got {n}")));
    }
    let count = (1u64 << n) - 2;
    let verified = if n <= 5 {
        let g = CPoly::from_real(&[0.0, 1.0, 1.0]);
        let mut gn = g.clone();
        for _ in 1..n {
            gn = g.compose(&gn)?;
        }
        let roots = (&gn - &CPoly::identity()).raw_roots()?;
        let nonzero: Vec<C64> = roots.into_iter().filter(|z| z.norm() > 1e-4).collect();
        let simple = nonzero
            .iter()
            .enumerate()
            .all(|(i, a)| nonzero[i + 1..].iter().all(|b| (a - b).norm() > 1e-6));
        Some(nonzero.len() as u64 == count && simple)
    } else {
        None
    };
    Ok(OrbitCount { n, count, residue_mod_4: count % 4, verified })
}

/// Real parameter samples for g(z) = z + z² - ε.
pub fn quadratic_samples(eps: &[f64], opts: &HornOptions) -> Result<Vec<SampleMaps>> {
    eps.iter()
        .map(|&e| Ok(sample_poly(&format!("eps={e}"), &CPoly::from_real(&[-e, 1.0, 1.0]), opts)?.1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn synthetic(ell: i32, coeffs: &[(i32, C64)]) -> TransitionMap {
        let fourier = (-4..=4)
            .map(|m| (m, coeffs.iter().find(|x| x.0 == m).map(|x| x.1).unwrap_or_default()))
            .collect::<Vec<_>>();
        TransitionMap {
            ell,
            src_sector: 0,
            dst_sector: 1,
            constant_term: fourier[4].1,
            fourier,
            line_height: 3.0 * ell as f64,
            line_start: 0.0,
            samples: 17,
            inversion_residual: 0.0,
            normalization: Default::default(),
        }
    }

    fn sample(up: &[(i32, C64)], down: &[(i32, C64)]) -> SampleMaps {
        let maps = vec![synthetic(1, up), synthetic(-1, down)];
        SampleMaps { label: "s".into(), b: C64::new(1.0, 0.0), doubled: maps.clone(), maps }
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn orbit_counts() {
        for (n, count) in [(2, 2), (3, 6), (5, 30), (7, 126), (13, 8190)] {
            let r = quadratic_orbit_count(n).unwrap();
            assert_eq!((r.count, r.residue_mod_4), (count, 2));
            assert!(r.verified.unwrap_or(true));
        }
        assert!(quadratic_orbit_count(4).is_err());
        assert!(quadratic_orbit_count(17).is_err());
    }

    #[test]
    fn injected_first_harmonic_fails_half_period() {
        let s = sample(&[(0, c(0.0, -PI)), (1, c(1e-2, 0.0))], &[(0, c(0.0, PI)), (-1, c(1e-2, 0.0))]);
        let r = check_half_period(&s.maps, Some(&s.doubled), DEFAULT_TOL);
        assert_eq!(r.verdict, Verdict::Fails);
        assert!((r.witnesses[0].value - 1e-2).abs() < 1e-15);
        // Σ-symmetric, so only the square-root condition fails
        assert_eq!(check_sigma_symmetry(&s, &s, DEFAULT_TOL).unwrap().verdict, Verdict::Holds);
        assert_eq!(check_square_root_condition(&s, &s, DEFAULT_TOL).unwrap().verdict, Verdict::Fails);
    }

    #[test]
    fn even_symmetric_maps_hold() {
        let a = c(3e-3, -1e-3);
        let s = sample(&[(0, c(0.0, -PI)), (2, a)], &[(0, c(0.0, PI)), (-2, a.conj())]);
        assert_eq!(check_half_period(&s.maps, Some(&s.doubled), DEFAULT_TOL).verdict, Verdict::Holds);
        assert_eq!(check_sigma_symmetry(&s, &s, DEFAULT_TOL).unwrap().verdict, Verdict::Holds);
        let r = square_root_verdict(&[s], DEFAULT_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!(r.flags.contains(&"square_root_unique".to_string()));
    }

    #[test]
    fn sigma_residual_ignores_imaginary_gauge() {
        // B = 0.1i rescales both maps by e^{-2π m 0.1}
        let a = c(3e-3, -1e-3);
        let k = |m: f64| (-2.0 * PI * m * 0.1).exp();
        let s = sample(&[(2, a * k(2.0))], &[(-2, a.conj() * k(-2.0))]);
        assert!(symmetry_residual(&s.maps[0], &s.maps[1], false) < 1e-17);
        let bad = sample(&[(2, a)], &[(-2, a)]);
        assert!(symmetry_residual(&bad.maps[0], &bad.maps[1], false) > 1e-3);
    }

    #[test]
    fn grading_needs_margin_and_stability() {
        assert_eq!(grade(1e-9, Some(1e-9), 1e-8), Verdict::Holds);
        assert_eq!(grade(5e-8, Some(5e-8), 1e-8), Verdict::Inconclusive);
        assert_eq!(grade(1e-6, Some(1e-6), 1e-8), Verdict::Fails);
        assert_eq!(grade(1e-6, Some(2e-6), 1e-8), Verdict::Inconclusive);
        assert_eq!(grade(1e-6, None, 1e-8), Verdict::Inconclusive);
    }

    #[test]
    fn trivial_modulus_flags_non_uniqueness() {
        let s = sample(&[(0, c(0.0, -PI))], &[(0, c(0.0, PI))]);
        let r = square_root_verdict(&[s], DEFAULT_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!(r.flags.contains(&"trivial_modulus".to_string()));
    }
}
