//! Separatrices of monic polynomial vector fields and their combinatorial/analytic invariant.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dop853, integrate_segment, OdeOptions};
use crate::poly::CPoly;

/// Which field is traced: `i P` (default) or `P` itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    #[default]
    Rotated,
    Plain,
}

impl FieldKind {
    pub fn factor(self) -> C64 {
        match self {
            FieldKind::Rotated => C64::new(0.0, 1.0),
            FieldKind::Plain => C64::new(1.0, 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfinityType {
    /// comes in from infinity in forward time
    Incoming,
    /// leaves to infinity in forward time
    Outgoing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Landing {
    Root(usize),
    Escaped,
    BudgetExceeded,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Separatrix {
    pub index: usize,
    pub infinity_type: InfinityType,
    pub samples: Vec<C64>,
    pub landing: Landing,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DESInvariant {
    pub k: usize,
    pub field: FieldKind,
    /// roots in (Re, Im) order; labels in `word` index into this
    pub roots: Vec<C64>,
    pub word: Vec<usize>,
    /// even rotation applied to the raw separatrix order to get `word`
    pub offset: usize,
    /// label-free class: the unrotated word with roots renamed by first appearance
    pub shape: Vec<usize>,
    pub tree_edges: Vec<(usize, usize)>,
    pub widths: Vec<C64>,
    pub generic: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct TraceOptions {
    pub field: FieldKind,
    /// tracing radius; `None` means 10 (1 + max|root|)
    pub radius: Option<f64>,
    /// time budget; `None` means max(50 k, 20 / min |Re λ|), capped at 1e4
    pub budget: Option<f64>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { field: FieldKind::Rotated, radius: None, budget: None }
    }
}

/// The traced polynomial field F = a P.
#[derive(Clone, Debug)]
pub struct Field {
    pub p: CPoly,
    pub dp: CPoly,
    pub a: C64,
    pub k: usize,
    pub roots: Vec<C64>,
}

impl Field {
    pub fn new(p: &CPoly, kind: FieldKind) -> Result<Field> {
        let d = p.degree();
        if d < 2 || (p.leading() - 1.0).norm() > 1e-12 {
            return Err(Error::Invalid("expected a monic polynomial of degree >= 2".into()));
        }
        let mut roots: Vec<C64> = p.roots(1e-9)?.into_iter().map(|r| r.z).collect();
        roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        Ok(Field { p: p.clone(), dp: p.derivative(), a: kind.factor(), k: d - 1, roots })
    }

    pub fn from_eps(eps: &[C64], kind: FieldKind) -> Result<Field> {
        let mut c = eps.to_vec();
        c.push(C64::new(0.0, 0.0));
        c.push(C64::new(1.0, 0.0));
        Field::new(&CPoly::new(c), kind)
    }

    pub fn f(&self, z: C64) -> C64 {
        self.a * self.p.eval(z)
    }

    /// Eigenvalue of the traced field at root `s`.
    pub fn eigenvalue(&self, s: usize) -> C64 {
        self.a * self.dp.eval(self.roots[s])
    }

    /// Period 2πi / F'(z_s) of root `s`.
    pub fn period(&self, s: usize) -> C64 {
        C64::new(0.0, 2.0 * PI) / self.eigenvalue(s)
    }

    pub fn is_simple(&self) -> bool {
        self.roots.len() == self.k + 1 && (0..=self.k).all(|s| self.eigenvalue(s).norm() > 1e-9)
    }

    pub fn max_root_modulus(&self) -> f64 {
        self.roots.iter().map(|r| r.norm()).fold(0.0, f64::max)
    }

    pub fn default_radius(&self) -> f64 {
        10.0 * (1.0 + self.max_root_modulus())
    }

    /// Asymptotic direction of separatrix j at infinity.
    pub fn direction(&self, j: usize) -> f64 {
        (j as f64 * PI - self.a.arg()) / self.k as f64
    }

    /// Start of separatrix j on |z| = r: the ray point shifted by the first-order term of the
    /// separatrix expansion in u = 1/z, which is a translation by -p_k/(k+1).
    pub fn start(&self, j: usize, r: f64) -> C64 {
        let shift = -self.p.coeff(self.k) / (self.k as f64 + 1.0);
        C64::from_polar(r, self.direction(j)) + shift
    }

    pub fn infinity_type(j: usize) -> InfinityType {
        if j % 2 == 0 {
            InfinityType::Outgoing
        } else {
            InfinityType::Incoming
        }
    }
}

/// Trace all 2k separatrices of the field. Non-landing is reported in `landing`, not as an error.
pub fn trace_separatrices(field: &Field, opts: &TraceOptions) -> Result<Vec<Separatrix>> {
    if !field.is_simple() {
        return Err(Error::NotGeneric("multiple root: separatrices are not defined".into()));
    }
    let r = opts.radius.unwrap_or_else(|| field.default_radius());
    if field.max_root_modulus() >= 0.5 * r {
        return Err(Error::Invalid(format!("roots must lie inside |z| < R/2 = {}", 0.5 * r)));
    }
    let budget = opts.budget.unwrap_or_else(|| default_budget(field));
    (0..2 * field.k).map(|j| trace_one(field, j, r, budget)).collect()
}

fn default_budget(field: &Field) -> f64 {
    let weakest = (0..=field.k).map(|s| field.eigenvalue(s).re.abs()).fold(f64::INFINITY, f64::min);
    (20.0 / weakest).clamp(50.0 * field.k as f64, 1e4)
}

fn landing_radii(field: &Field, r: f64) -> Vec<f64> {
    let n = field.roots.len();
    (0..n)
        .map(|s| {
            let sep = (0..n)
                .filter(|&t| t != s)
                .map(|t| (field.roots[t] - field.roots[s]).norm())
                .fold(f64::INFINITY, f64::min);
            (1e-3 * r).min(0.25 * sep)
        })
        .collect()
}

fn trace_one(field: &Field, j: usize, r: f64, budget: f64) -> Result<Separatrix> {
    let kind = Field::infinity_type(j);
    let sigma = if kind == InfinityType::Incoming { 1.0 } else { -1.0 };
    let z0 = field.start(j, r);
    let radii = landing_radii(field, r);
    // roots attracting for the traced time direction
    let sinks: Vec<usize> = (0..field.roots.len()).filter(|&s| sigma * field.eigenvalue(s).re < 0.0).collect();
    let rhs = |_s: f64, z: C64| Ok(field.f(z) * sigma);
    // a trajectory whose time gap to a homoclinic loop is δ turns back near |z| ~ (1/(kδ))^{1/k};
    // escape is declared only beyond the radius matching δ = 1e-3
    let k = field.k as f64;
    let escape = (2.0 * r).max(10.0 * (1e3 / k).powf(1.0 / k));
    let mut samples = vec![z0];
    let mut landing = Landing::BudgetExceeded;
    let mut stop = |_s: f64, z: C64| {
        samples.push(z);
        if z.norm() > escape {
            landing = Landing::Escaped;
            return true;
        }
        for &s in &sinks {
            if (z - field.roots[s]).norm() < radii[s] {
                landing = Landing::Root(s);
                return true;
            }
        }
        false
    };
    let opts = OdeOptions { rtol: 1e-10, atol: 1e-12, max_steps: 2_000_000 };
    match dop853(&rhs, z0, budget, opts, &mut stop) {
        Ok(_) => {}
        Err(Error::NotConverged(_)) => landing = Landing::BudgetExceeded,
        Err(e) => return Err(e),
    }
    if let Landing::Root(s) = landing {
        // polish: the landing label is the root the last sample converges to under Newton
        let mut z = *samples.last().unwrap();
        for _ in 0..50 {
            let (v, d) = field.p.eval_with_derivative(z);
            if d.norm() == 0.0 {
                break;
            }
            z -= v / d;
        }
        let nearest = nearest_root(field, z);
        if nearest != s {
            return Err(Error::NotConverged(format!("separatrix {j} landing label changed under polish")));
        }
    }
    Ok(Separatrix { index: j, infinity_type: kind, samples, landing })
}

fn nearest_root(field: &Field, z: C64) -> usize {
    (0..field.roots.len())
        .min_by(|&a, &b| (field.roots[a] - z).norm().total_cmp(&(field.roots[b] - z).norm()))
        .unwrap()
}

/// Rotate a circular word left by `m`.
fn rotate(w: &[usize], m: usize) -> Vec<usize> {
    (0..w.len()).map(|i| w[(i + m) % w.len()]).collect()
}

/// Rename labels by order of first appearance.
fn relabel(w: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    w.iter()
        .map(|&x| match map.iter().find(|(a, _)| *a == x) {
            Some(&(_, b)) => b,
            None => {
                let b = map.len();
                map.push((x, b));
                b
            }
        })
        .collect()
}

/// Minimal even rotation of `w` under the key `f`, with the offset.
fn min_even_rotation(w: &[usize], f: impl Fn(&[usize]) -> Vec<usize>) -> (Vec<usize>, usize) {
    (0..w.len())
        .step_by(2)
        .map(|m| (f(&rotate(w, m)), m))
        .min()
        .unwrap()
}

/// Word, tree and canonical forms from landed separatrices. Widths are left empty.
pub fn combinatorial_invariant(field: &Field, seps: &[Separatrix], kind: FieldKind) -> Result<DESInvariant> {
    let raw: Vec<usize> = seps
        .iter()
        .map(|s| match s.landing {
            Landing::Root(i) => Ok(i),
            _ => Err(Error::NotGeneric("not DES-generic".into())),
        })
        .collect::<Result<_>>()?;
    let n = raw.len();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for g in 0..n {
        let (a, b) = (raw[g], raw[(g + 1) % n]);
        let e = (a.min(b), a.max(b));
        if a != b && !edges.contains(&e) {
            edges.push(e);
        }
    }
    edges.sort();
    let k = field.k;
    let used = (0..=k).all(|s| raw.contains(&s));
    if !used || edges.len() != k || !spanning(k + 1, &edges) {
        return Err(Error::NotGeneric(format!("landing word {raw:?} does not define a tree")));
    }
    let (word, offset) = min_even_rotation(&raw, |w| w.to_vec());
    let shape = relabel(&raw);
    Ok(DESInvariant {
        k,
        field: kind,
        roots: field.roots.clone(),
        word,
        offset,
        shape,
        tree_edges: edges,
        widths: Vec::new(),
        generic: true,
    })
}

fn spanning(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut comp: Vec<usize> = (0..n).collect();
    fn find(c: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while c[r] != r {
            r = c[r];
        }
        c[x] = r;
        r
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut comp, a), find(&mut comp, b));
        if ra == rb {
            return false;
        }
        comp[ra] = rb;
    }
    edges.len() + 1 == n
}

/// Roots on the side of `a` once the tree edge (a, b) is cut.
pub fn tree_component(edges: &[(usize, usize)], a: usize, b: usize) -> Vec<usize> {
    let mut seen = vec![a];
    let mut stack = vec![a];
    while let Some(x) = stack.pop() {
        for &(p, q) in edges {
            let y = if p == x { q } else if q == x { p } else { continue };
            if (x == a && y == b) || (x == b && y == a) || seen.contains(&y) {
                continue;
            }
            seen.push(y);
            stack.push(y);
        }
    }
    seen.sort();
    seen
}

/// ∮ dz/F around root `s` on a 64-gon of radius `rho`.
fn loop_integral(field: &Field, s: usize, rho: f64) -> Result<C64> {
    let n = 64;
    let c = field.roots[s];
    let g = |z: C64| 1.0 / field.f(z);
    let mut total = C64::new(0.0, 0.0);
    for i in 0..n {
        let a = c + C64::from_polar(rho, 2.0 * PI * i as f64 / n as f64);
        let b = c + C64::from_polar(rho, 2.0 * PI * (i + 1) as f64 / n as f64);
        total += integrate_segment(&g, a, b, 1e-14)?;
    }
    Ok(total)
}

/// Complex widths of the k zones, one per tree edge, ordered by first appearance of the edge
/// between consecutive letters of the canonical word. The crossing path of a zone runs from
/// infinity to infinity; since dz/F is closed and regular at infinity it is homologous to the
/// sum of small loops around the roots it cuts off, which is what is integrated here.
pub fn analytic_widths(field: &Field, inv: &DESInvariant) -> Result<Vec<C64>> {
    let n = inv.word.len();
    let radii = landing_radii(field, f64::INFINITY);
    let mut done: Vec<(usize, usize)> = Vec::new();
    let mut widths = Vec::new();
    for g in 0..n {
        let (a, b) = (inv.word[g], inv.word[(g + 1) % n]);
        let e = (a.min(b), a.max(b));
        if a == b || done.contains(&e) {
            continue;
        }
        done.push(e);
        let mut tau = C64::new(0.0, 0.0);
        for s in tree_component(&inv.tree_edges, a, b) {
            tau += loop_integral(field, s, radii[s])?;
        }
        if tau.im.abs() <= 1e-12 * tau.norm().max(1e-300) {
            return Err(Error::NotGeneric("region too thin; increase R".into()));
        }
        widths.push(if tau.im > 0.0 { tau } else { -tau });
    }
    Ok(widths)
}

/// Smallest |Im| of a period sum over nonempty proper root subsets, with the subset.
pub fn homoclinic_diagnostic(field: &Field) -> (f64, Vec<usize>) {
    let n = field.roots.len();
    let periods: Vec<C64> = (0..n).map(|s| field.period(s)).collect();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 1u32..(1 << n) - 1 {
        let set: Vec<usize> = (0..n).filter(|&s| mask >> s & 1 == 1).collect();
        let v = set.iter().map(|&s| periods[s]).sum::<C64>().im.abs();
        if v < best.0 {
            best = (v, set);
        }
    }
    best
}

/// Full classification of one field.
pub fn classify(field: &Field, opts: &TraceOptions) -> Result<(DESInvariant, Vec<Separatrix>)> {
    let seps = trace_separatrices(field, opts)?;
    let mut inv = combinatorial_invariant(field, &seps, opts.field)?;
    inv.widths = analytic_widths(field, &inv)?;
    Ok((inv, seps))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GridClass {
    Generic { shape: Vec<usize>, word: Vec<usize> },
    NonGeneric { reason: String, homoclinic_min: Option<f64> },
}

/// Thread count from PARABOLICA_THREADS, else available parallelism.
pub fn thread_count() -> usize {
    std::env::var("PARABOLICA_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn classify_point(eps: &[C64], opts: &TraceOptions) -> GridClass {
    let field = match Field::from_eps(eps, opts.field) {
        Ok(f) => f,
        Err(e) => return GridClass::NonGeneric { reason: e.to_string(), homoclinic_min: None },
    };
    match classify(&field, opts) {
        Ok((inv, _)) => GridClass::Generic { shape: inv.shape, word: inv.word },
        Err(e) => {
            let h = field.is_simple().then(|| homoclinic_diagnostic(&field).0);
            GridClass::NonGeneric { reason: e.to_string(), homoclinic_min: h }
        }
    }
}

/// Classify every grid point (ε_0, …, ε_{k-1}); results are in grid order.
pub fn stratify(grid: &[Vec<C64>], opts: &TraceOptions) -> Vec<GridClass> {
    let threads = thread_count().min(grid.len().max(1));
    let chunk = grid.len().div_ceil(threads.max(1)).max(1);
    std::thread::scope(|sc| {
        let handles: Vec<_> = grid
            .chunks(chunk)
            .map(|part| sc.spawn(move || part.iter().map(|e| classify_point(e, opts)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Distinct shapes among generic grid points.
pub fn distinct_shapes(classes: &[GridClass]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = classes
        .iter()
        .filter_map(|c| match c {
            GridClass::Generic { shape, .. } => Some(shape.clone()),
            _ => None,
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// n parameter vectors with components uniform in the square [-radius, radius]², seeded.
pub fn sweep_grid(k: usize, n: usize, radius: f64, seed: u64) -> Vec<Vec<C64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..k).map(|_| C64::new(rng.gen_range(-radius..radius), rng.gen_range(-radius..radius))).collect())
        .collect()
}

/// Catalan number C(k).
pub fn catalan(k: usize) -> u64 {
    let mut c = 1u64;
    for i in 0..k as u64 {
        c = c * 2 * (2 * i + 1) / (i + 2);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn z_squared_minus_one_plain() {
        let f = Field::new(&CPoly::from_real(&[-1.0, 0.0, 1.0]), FieldKind::Plain).unwrap();
        let opts = TraceOptions { field: FieldKind::Plain, ..Default::default() };
        let seps = trace_separatrices(&f, &opts).unwrap();
        assert_eq!(seps.len(), 2);
        // roots sorted: -1 then 1; outgoing ray arg 0 comes from the source 1
        assert_eq!(seps[0].landing, Landing::Root(1));
        assert_eq!(seps[1].landing, Landing::Root(0));
        let inv = combinatorial_invariant(&f, &seps, FieldKind::Plain).unwrap();
        assert_eq!(inv.word, vec![1, 0]);
        let w = analytic_widths(&f, &inv).unwrap();
        assert!((w[0] - c(0.0, PI)).norm() < 1e-10, "{:?}", w);
    }

    #[test]
    fn centers_do_not_land() {
        let p = CPoly::from_real(&[1.0, 0.0, 1.0]);
        let plain = Field::new(&p, FieldKind::Plain).unwrap();
        let opts = TraceOptions { field: FieldKind::Plain, budget: Some(200.0), ..Default::default() };
        let seps = trace_separatrices(&plain, &opts).unwrap();
        assert!(seps.iter().all(|s| !matches!(s.landing, Landing::Root(_))));
        assert!(combinatorial_invariant(&plain, &seps, FieldKind::Plain).is_err());
        let rot = Field::new(&p, FieldKind::Rotated).unwrap();
        let seps = trace_separatrices(&rot, &TraceOptions::default()).unwrap();
        assert!(seps.iter().all(|s| matches!(s.landing, Landing::Root(_))));
    }

    #[test]
    fn landing_sign_matches_type() {
        let f = Field::from_eps(&[c(0.3, -0.7), c(-0.5, 0.2)], FieldKind::Rotated).unwrap();
        for s in trace_separatrices(&f, &TraceOptions::default()).unwrap() {
            if let Landing::Root(r) = s.landing {
                let re = f.eigenvalue(r).re;
                match s.infinity_type {
                    InfinityType::Incoming => assert!(re < 0.0),
                    InfinityType::Outgoing => assert!(re > 0.0),
                }
            }
        }
    }

    #[test]
    fn multiple_root_is_non_generic() {
        let out = stratify(&[vec![c(0.0, 0.0), c(0.0, 0.0)]], &TraceOptions::default());
        assert!(matches!(out[0], GridClass::NonGeneric { .. }));
    }

    #[test]
    fn center_gives_homoclinic_flag() {
        // iP' (0) = -i: a center inside a homoclinic loop
        let f = Field::from_eps(&[c(0.0, 0.0), c(-1.0, 0.0)], FieldKind::Rotated).unwrap();
        assert!(classify(&f, &TraceOptions::default()).is_err());
        let (h, set) = homoclinic_diagnostic(&f);
        assert!(h < 1e-12, "{h} {set:?}");
    }

    #[test]
    fn widths_are_cut_period_sums() {
        let f = Field::from_eps(&[c(0.4, 0.9), c(-0.3, 0.5), c(0.2, -0.1)], FieldKind::Rotated).unwrap();
        let (inv, _) = classify(&f, &TraceOptions::default()).unwrap();
        assert_eq!(inv.widths.len(), 3);
        let n = f.roots.len();
        for w in &inv.widths {
            assert!(w.im > 0.0);
            // each width is a period sum over one side of a cut edge
            let hit = (1u32..(1 << n) - 1).any(|m| {
                let sum: C64 = (0..n).filter(|&s| m >> s & 1 == 1).map(|s| f.period(s)).sum();
                (sum - w).norm() < 1e-10
            });
            assert!(hit, "{w}");
        }
    }

    #[test]
    fn catalan_numbers() {
        assert_eq!((1..=5).map(catalan).collect::<Vec<_>>(), vec![1, 2, 5, 14, 42]);
    }

    #[test]
    fn shapes_relabel_and_rotate() {
        assert_eq!(relabel(&[2, 0, 2, 1]), vec![0, 1, 0, 2]);
        let (m, off) = min_even_rotation(&[1, 2, 0, 2], |w| w.to_vec());
        assert_eq!((m, off), (vec![0, 2, 1, 2], 2));
    }
}
