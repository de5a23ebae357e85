use std::f64::consts::PI;

use parabolica::germ::{formal_invariant_b, FamilySpec, OrbitKind};
use parabolica::prepare::{conjugate_jets, prepare_at, prepare_jets, PrepareOptions};
use parabolica::{CPoly, C64};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: proptest::test_runner::RngSeed::Fixed(20261016),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn cz() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b))
}

fn small(r: f64) -> impl Strategy<Value = C64> {
    (-r..r, -r..r).prop_map(|(a, b)| C64::new(a, b))
}

fn poly(max_deg: usize) -> impl Strategy<Value = CPoly> {
    prop::collection::vec(cz(), 1..=max_deg + 1).prop_map(CPoly::new)
}

fn hausdorff(a: &[C64], b: &[C64]) -> f64 {
    let one = |x: &[C64], y: &[C64]| {
        x.iter().map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn roots_recover_construction(roots in prop::collection::vec(cz(), 1..=8)) {
        let sep = roots.iter().enumerate()
            .flat_map(|(i, a)| roots[i + 1..].iter().map(move |b| (a - b).norm()))
            .fold(f64::INFINITY, f64::min);
        prop_assume!(sep > 0.05);
        let found: Vec<C64> = CPoly::from_roots(&roots).roots(1e-7).unwrap().into_iter().map(|r| r.z).collect();
        prop_assert_eq!(found.len(), roots.len());
        prop_assert!(hausdorff(&found, &roots) < 1e-8);
    }

    #[test]
    fn compose_is_associative(p in poly(4), q in poly(4), r in poly(4)) {
        let a = p.compose(&q).unwrap().compose(&r).unwrap();
        let b = p.compose(&q.compose(&r).unwrap()).unwrap();
        let scale = a.coeffs().iter().map(|c| c.norm()).fold(1.0, f64::max);
        prop_assert!(a.max_abs_diff(&b) < 1e-12 * scale);
    }

    #[test]
    fn conj_coeffs_is_an_involution(p in poly(10)) {
        prop_assert_eq!(p.conj_coeffs().conj_coeffs(), p);
    }

    #[test]
    fn derivative_matches_central_difference(p in poly(8), z in cz()) {
        let h = 1e-6;
        let fd = (p.eval(z + h) - p.eval(z - h)) / (2.0 * h);
        let d = p.derivative().eval(z);
        prop_assume!(d.norm() > 1e-3);
        prop_assert!((fd - d).norm() < 1e-5 * d.norm());
    }
}

/// Standard unfolding with an extra complex z^{k+2} coefficient.
fn family(k: usize, extra: C64) -> FamilySpec {
    let mut fam = FamilySpec::standard_unfolding(k, 1.0);
    fam.add_term(k + 2, vec![], extra);
    fam
}

/// Fixed points inside the first radius that separates them cleanly from the rest.
fn fixed_points(fam: &FamilySpec, eps: &[C64]) -> parabolica::germ::FixedPointData {
    [0.6, 0.7, 0.8, 0.9, 1.0]
        .iter()
        .find_map(|&r| fam.classify_fixed_points(eps, r, 1e-9).ok())
        .expect("no separating radius")
}

/// Real parameters, smaller for larger k so the k+1 local fixed points stay well inside the
/// disc where the conjugated series converge.
fn real_eps(k: usize) -> impl Strategy<Value = Vec<C64>> {
    let hi = 0.01 / (2 * k - 1) as f64;
    prop::collection::vec(prop_oneof![-hi..-0.1 * hi, 0.1 * hi..hi], k)
        .prop_map(|v| v.into_iter().map(|x| C64::new(x, 0.0)).collect())
}

fn family_case() -> impl Strategy<Value = (usize, C64, Vec<C64>)> {
    (1usize..=3, small(0.3)).prop_flat_map(|(k, extra)| (Just(k), Just(extra), real_eps(k)))
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn multipliers_of_antiholomorphic_families((k, extra, eps) in family_case()) {
        let fam = family(k, extra);
        let fp = fixed_points(&fam, &eps);
        for (i, p) in fp.points.iter().enumerate() {
            match p.orbit_kind {
                OrbitKind::FixedOfF => {
                    prop_assert!(p.multiplier_g.im.abs() < 1e-9 && p.multiplier_g.re >= -1e-9, "{}", p.multiplier_g);
                    // g'(z) = |h'(z)|² at a fixed point of f
                    let hz = fam.jet(&eps).unwrap().derivative().eval(p.location);
                    prop_assert!((p.multiplier_g.re - hz.norm_sqr()).abs() < 1e-9 * (1.0 + hz.norm_sqr()));
                }
                OrbitKind::Period2 { partner } => {
                    prop_assert!((p.multiplier_g - fp.points[partner].multiplier_g.conj()).norm() < 1e-9);
                    prop_assert_ne!(partner, i);
                }
            }
        }
    }

    #[test]
    fn b_is_real_for_real_parameters((k, extra, eps) in family_case()) {
        let pf = prepare_at(&family(k, extra), &eps).unwrap();
        prop_assert!(pf.b.im.abs() < 1e-9, "b = {}", pf.b);
    }

    #[test]
    fn b_survives_conjugation((k, extra, eps) in family_case(), a2 in small(0.1), a3 in small(0.1)) {
        let fam = family(k, extra);
        let fp = fixed_points(&fam, &eps);
        let near: Vec<_> = {
            let mut pts = fp.points.clone();
            pts.sort_by(|x, y| x.location.norm().total_cmp(&y.location.norm()));
            pts.truncate(k + 1);
            pts
        };
        let b = formal_invariant_b(&parabolica::germ::FixedPointData { points: near }, 1e-12).unwrap();
        let pf = prepare_at(&fam, &eps).unwrap();
        prop_assert!((pf.b - b).norm() < 1e-8 * (1.0 + b.norm()));
        let phi = CPoly::new(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0), a2, a3]);
        let jets = conjugate_jets(&fam.jets(&eps).unwrap(), &phi, 32).unwrap();
        let moved = prepare_jets(k, &jets, PrepareOptions { trunc: Some(32), refine: true }).unwrap();
        prop_assert!((moved.b - pf.b).norm() < 1e-7 * (1.0 + pf.b.norm()), "{} vs {}", moved.b, pf.b);
        for (x, y) in moved.eps_canonical.iter().zip(&pf.eps_canonical) {
            prop_assert!((x - y).norm() < 1e-7, "{x} vs {y}");
        }
    }

    #[test]
    fn prepared_real_family_has_real_jets((k, extra, eps) in family_case()) {
        // real coefficients throughout
        let pf = prepare_at(&family(k, C64::new(extra.re, 0.0)), &eps).unwrap();
        prop_assert!(pf.max_imag_coeff() < 1e-9);
        prop_assert!(pf.s_fit_residual() < 1e-8);
    }
}

#[test]
fn involution_is_the_half_turn() {
    use parabolica::prepare::canonical_involution;
    // z -> -z conjugation of a prepared k = 2 family
    let fam = family(2, C64::new(0.1, 0.05));
    let eps = [C64::new(0.006, 0.0), C64::new(-0.01, 0.0)];
    let pf = prepare_at(&fam, &eps).unwrap();
    let minus = CPoly::from_real(&[0.0, -1.0]);
    let jets = fam.jets(&eps).unwrap();
    let turn = |h: &CPoly| minus.compose(&h.compose(&minus).unwrap()).unwrap();
    let turned = parabolica::germ::Jets { kind: jets.kind, h: turn(&jets.h), h_bar: turn(&jets.h_bar) };
    let moved = prepare_jets(2, &turned, PrepareOptions::default()).unwrap();
    let hat = canonical_involution(&pf.eps_canonical).unwrap();
    for (x, y) in moved.eps_canonical.iter().zip(&hat) {
        assert!((x - y).norm() < 1e-8, "{x} vs {y}");
    }
    assert_eq!(canonical_involution(&hat).unwrap(), pf.eps_canonical);
}

// ---------------------------------------------------------------- vector fields

use parabolica::vfield::VectorField;

fn field_case() -> impl Strategy<Value = (Vec<C64>, C64)> {
    (1usize..=4).prop_flat_map(|k| (prop::collection::vec(small(0.5), k), small(1.0)))
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn periods_sum_to_the_residue_at_infinity((eps, b) in field_case()) {
        let vf = VectorField::from_eps(&eps, b).unwrap();
        let sum: C64 = vf.periods().unwrap().iter().sum();
        prop_assert!((sum - C64::new(0.0, 2.0 * PI) * b).norm() < 1e-9);
    }

    #[test]
    fn time_integral_is_additive((eps, b) in field_case(), a in small(2.0), m in small(2.0), z in small(2.0)) {
        let vf = VectorField::from_eps(&eps, b).unwrap();
        let whole = vf.time_integral(&[a, m, z], 1e-3);
        let (p, q) = (vf.time_integral(&[a, m], 1e-3), vf.time_integral(&[m, z], 1e-3));
        prop_assume!(whole.is_ok() && p.is_ok() && q.is_ok());
        prop_assert!((whole.unwrap() - p.unwrap() - q.unwrap()).norm() < 1e-10);
    }

    #[test]
    fn flow_group_law_and_time((eps, b) in field_case(), ang in 0.0..2.0 * PI, t1 in small(0.2), t2 in small(0.2)) {
        let vf = VectorField::from_eps(&eps, b).unwrap();
        // start well away from the singular points
        let z0 = C64::from_polar(2.0 + vf.max_root_modulus().unwrap(), ang);
        let (a, mid) = (vf.flow(z0, t1 + t2, 1e-12), vf.flow(z0, t1, 1e-12));
        prop_assume!(a.is_ok() && mid.is_ok());
        let mid = mid.unwrap();
        let b2 = vf.flow(mid, t2, 1e-12);
        prop_assume!(b2.is_ok());
        prop_assert!((a.unwrap() - b2.unwrap()).norm() < 1e-8);
        // short trajectories are homotopic to the chord away from the roots
        let t = vf.time_integral(&[z0, mid], 1e-3).unwrap();
        prop_assert!((t - t1).norm() < 1e-8, "{t} vs {t1}");
    }
}

// ---------------------------------------------------------------- separatrices

use parabolica::des::{homoclinic_diagnostic, trace_separatrices, Field, FieldKind, InfinityType, Landing, TraceOptions};

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn separatrices_alternate_and_land_on_the_right_roots(eps in (1usize..=3).prop_flat_map(|k| prop::collection::vec(small(1.5), k))) {
        let field = Field::from_eps(&eps, FieldKind::Rotated).unwrap();
        prop_assume!(field.is_simple());
        let seps = trace_separatrices(&field, &TraceOptions::default()).unwrap();
        prop_assert_eq!(seps.len(), 2 * eps.len());
        for w in seps.windows(2) {
            prop_assert_ne!(w[0].infinity_type, w[1].infinity_type);
        }
        for s in &seps {
            match s.landing {
                Landing::Root(r) => {
                    let re = field.eigenvalue(r).re;
                    match s.infinity_type {
                        InfinityType::Incoming => prop_assert!(re < 0.0),
                        InfinityType::Outgoing => prop_assert!(re > 0.0),
                    }
                }
                _ => prop_assert!(homoclinic_diagnostic(&field).0 < 1e-3),
            }
        }
    }
}

// ---------------------------------------------------------------- multicorn

use parabolica::multicorn::{codim2_certificate, codimension, local_jet};

#[test]
fn multicorn_reports_are_rotation_equivariant() {
    for d in 2..=6 {
        let reps = codim2_certificate(d).unwrap();
        let r0 = &reps[0];
        for r in &reps[1..] {
            assert!((r.a2.norm() - r0.a2.norm()).abs() < 1e-12);
            assert!((r.a3 - r0.a3).norm() < 1e-12);
            assert!((r.codim2_value - r0.codim2_value).abs() < 1e-12);
            // the finite-difference error is not rotation invariant, so compare relatively
            assert!((r.jacobian_det.abs() - r0.jacobian_det.abs()).abs() < 1e-8 * r0.jacobian_det.abs());
        }
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn off_axis_parabolics_have_codimension_one(d in 2usize..=6, theta in 0.0..2.0 * PI) {
        let k = (d - 1) as f64;
        // e^{i(k+2)θ/2} away from the imaginary axis
        prop_assume!(((k + 2.0) * theta / 2.0).cos().abs() > 1e-3);
        // z0 with d|z0|^{d-1} = 1 and θ = arg(z0 d^{1/k})
        let z0 = C64::from_polar((d as f64).powf(-1.0 / k), theta);
        let c = z0 - z0.conj().powu(d as u32);
        let jet = local_jet(d, c, z0, d).unwrap();
        prop_assert_eq!(codimension(&jet, 1e-9), 1);
    }
}

// ---------------------------------------------------------------- family documents

use parabolica::cli::{emit_family, parse_family};
use parabolica::germ::Kind;

fn doc_family() -> impl Strategy<Value = FamilySpec> {
    (1usize..=3, any::<bool>(), small(0.5), prop::collection::vec((small(1.0), 0u32..3), 0..4)).prop_map(
        |(k, anti, lead, params)| {
            let kind = if anti { Kind::Antiholomorphic } else { Kind::Holomorphic };
            let mut fam = FamilySpec::new(kind, k, 0.25);
            fam.add_term(1, vec![], C64::new(1.0, 0.0));
            fam.add_term(k + 1, vec![], lead + C64::new(0.6, 0.0));
            for (i, (v, e)) in params.into_iter().enumerate() {
                let mut m = vec![0; 2 * k];
                m[i % (2 * k)] = e + 1;
                fam.add_term(i % (k + 2), m, v);
            }
            fam
        },
    )
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn family_documents_round_trip(fam in doc_family()) {
        let text = emit_family(&fam);
        let back = parse_family(&text).unwrap();
        prop_assert_eq!(&back, &fam);
        prop_assert_eq!(emit_family(&back), text);
    }
}

/// Coefficients of Z̄² and Z̄³ in F₁ as displayed for the multicorn parabolic points.
fn displayed_coefficients(k: f64, theta: f64) -> (C64, C64) {
    let a2 = C64::from_polar(k * (k + 1.0).powf(2.0 / (k + 1.0)) / 2.0, (k + 2.0) * theta / 2.0);
    let a3 = C64::from_polar(k * (k - 1.0) * (k + 1.0).powf(3.0 / (k + 1.0)) / 6.0, (k + 2.0) * theta);
    (a2, a3)
}

#[test]
fn jet_reproduces_displayed_coefficients() {
    use parabolica::multicorn::parabolic_parameters;
    let mut off = vec![];
    for d in 2..=6 {
        for (j, (c, z)) in parabolic_parameters(d).unwrap().into_iter().enumerate() {
            let jet = local_jet(d, c, z, d).unwrap();
            let (a2, a3) = displayed_coefficients((d - 1) as f64, jet.theta);
            let (e2, e3) = ((jet.a2() - a2).norm(), (jet.a3() - a3).norm());
            if e2 >= 1e-10 || e3 >= 1e-10 {
                off.push(format!("d={d} tau={j}: |a2 - shown| {e2:.3e}, |a3 - shown| {e3:.3e}"));
            }
        }
    }
    assert!(off.is_empty(), "{}", off.join("\n"));
}
