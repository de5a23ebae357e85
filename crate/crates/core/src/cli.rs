//! Command-line front end: family documents, subcommand dispatch and canonical JSON output.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use num_complex::Complex64 as C64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::germ::FamilySpec;

/// Parabolic tolerance for the ε = 0 check on family documents.
const PARABOLIC_TOL: f64 = 1e-9;

// ---------------------------------------------------------------- canonical JSON

fn write_float(out: &mut String, x: f64) {
    if x.is_finite() {
        // 17 significant digits
        let _ = write!(out, "{x:.16e}");
    } else {
        let _ = write!(out, "\"{x}\"");
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, n: usize| out.extend(std::iter::repeat_n(' ', 2 * n));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                write_float(out, n.as_f64().unwrap_or(f64::NAN));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            // short numeric arrays (complex numbers, small vectors) stay on one line
            if a.len() <= 4 && a.iter().all(|x| x.is_number()) {
                out.push('[');
                for (i, x) in a.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                pad(out, indent + 1);
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            // serde_json's default map is ordered by key
            out.push_str("{\n");
            for (i, (k, x)) in m.iter().enumerate() {
                pad(out, indent + 1);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < m.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

/// Canonical text of a JSON value: sorted keys, floats in 17 significant digits.
pub fn canonical_json(v: &Value) -> String {
    let mut s = String::new();
    write_value(&mut s, v, 0);
    s.push('\n');
    s
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or_else(|e| json!({ "serialization_error": e.to_string() }))
}

fn checked(value: f64, tol: f64) -> Value {
    json!({ "value": value, "tol": tol, "ok": value < tol })
}

// ---------------------------------------------------------------- family documents

/// Parse a family document {kind, k, coeffs: [{zpow, params: [{monomial, re, im}]}], validity_radius}
/// and check that ε = 0 gives a parabolic germ z + a z^{k+1} + ….
pub fn parse_family(text: &str) -> Result<FamilySpec> {
    let fam: FamilySpec =
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("family document: {e}")))?;
    if fam.k == 0 {
        return Err(Error::Invalid("family document: k must be positive".into()));
    }
    if !(fam.validity_radius > 0.0) {
        return Err(Error::Invalid("family document: validity_radius must be positive".into()));
    }
    let mut seen = vec![];
    for t in &fam.coeffs {
        if seen.contains(&t.zpow) {
            return Err(Error::Invalid(format!("family document: repeated zpow {}", t.zpow)));
        }
        seen.push(t.zpow);
        for p in &t.params {
            if p.monomial.len() > 2 * fam.k {
                return Err(Error::Invalid(format!(
                    "family document: monomial {:?} has more than {} exponents",
                    p.monomial,
                    2 * fam.k
                )));
            }
            if !p.re.is_finite() || !p.im.is_finite() {
                return Err(Error::Invalid("family document: non-finite coefficient".into()));
            }
        }
    }
    let h = fam.jet(&vec![C64::new(0.0, 0.0); fam.k])?;
    let lin = h.coeff(1).norm();
    let low = (0..=fam.k).filter(|&j| j != 1).map(|j| h.coeff(j).norm()).fold(0.0, f64::max);
    let lead = h.coeff(fam.k + 1).norm();
    if (lin - 1.0).abs() > PARABOLIC_TOL || low > PARABOLIC_TOL || lead <= PARABOLIC_TOL {
        return Err(Error::Invalid(format!(
            "base germ not parabolic: |linear coefficient| = {lin}, largest coefficient of z^0, z^2..z^{} = {low:e}, \
             |coefficient of z^{}| = {lead:e}",
            fam.k,
            fam.k + 1
        )));
    }
    Ok(fam)
}

/// Canonical document text of a family (inverse of `parse_family`).
pub fn emit_family(fam: &FamilySpec) -> String {
    canonical_json(&to_value(fam))
}

// ---------------------------------------------------------------- tolerances

/// Named tolerances with their defaults.
pub const TOLERANCES: &[(&str, f64)] = &[
    // ε = 0 germ check and fixed-point residuals
    ("fixed_point", 1e-10),
    // Σ periods against 2πi b
    ("residue", 1e-9),
    // Z_j - Z_{j-1} against -2πi b/k
    ("chart", 1e-8),
    // |Φ(g(z)) - Φ(z) - 1|
    ("functional", 1e-6),
    // horn-map predicates
    ("verdict", crate::analysis::DEFAULT_TOL),
    // codimension-2 tests on multicorn jets
    ("codim", 1e-9),
    // homoclinic flag: smallest |Im| of a root-subset period sum
    ("homoclinic", 1e-3),
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tolerances(pub BTreeMap<String, f64>);

impl Tolerances {
    /// Defaults overridden by `name=value` entries; unknown names and non-positive values are errors.
    pub fn parse(entries: &[String]) -> Result<Tolerances> {
        let mut m: BTreeMap<String, f64> = TOLERANCES.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        for e in entries {
            let (k, v) = e
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("tolerance `{e}` is not of the form name=value")))?;
            let slot = m.get_mut(k.trim()).ok_or_else(|| {
                let known: Vec<&str> = TOLERANCES.iter().map(|t| t.0).collect();
                Error::Invalid(format!("unknown tolerance `{k}` (known: {})", known.join(", ")))
            })?;
            let x: f64 = v.trim().parse().map_err(|_| Error::Invalid(format!("tolerance `{e}`: bad number")))?;
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Invalid(format!("tolerance `{e}` must be positive")));
            }
            *slot = x;
        }
        Ok(Tolerances(m))
    }

    pub fn get(&self, name: &str) -> f64 {
        self.0[name]
    }
}

/// Parse "re,im" or "re" into a complex number.
pub fn parse_complex(s: &str) -> Result<C64> {
    let bad = || Error::Invalid(format!("`{s}` is not a complex number (expected re,im)"));
    let mut it = s.split(',');
    let re: f64 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
    let im: f64 = match it.next() {
        Some(t) => t.trim().parse().map_err(|_| bad())?,
        None => 0.0,
    };
    if it.next().is_some() || !re.is_finite() || !im.is_finite() {
        return Err(bad());
    }
    Ok(C64::new(re, im))
}

// ---------------------------------------------------------------- command line

#[derive(Parser, Clone, Debug)]
#[command(name = "parabolica", version, about = "Numerics for unfoldings of antiholomorphic parabolic germs")]
pub struct Cli {
    /// family document (JSON)
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// directory for the JSON report and CSV/SVG artifacts
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// override a named tolerance, e.g. --tol verdict=1e-7
    #[arg(long = "tol", global = true, value_name = "NAME=VAL")]
    pub tol: Vec<String>,
    /// seed for generated test data
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq)]
pub enum Command {
    /// Canonical parameters, b and the prepared jets of a family at ε
    Prepare {
        /// parameter components as re,im (repeat k times; default 0)
        #[arg(long = "eps", allow_hyphen_values = true)]
        eps: Vec<String>,
        /// codimension of the standard unfolding used without --input
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
    /// Periods of the model vector field (1 + b z^k)/P_ε ∂z
    Periods {
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// parameter components (default: seeded random, |ε_j| < 1)
        #[arg(long = "eps", allow_hyphen_values = true)]
        eps: Vec<String>,
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        b: String,
    },
    /// Time-chart base points and the relation between neighbouring charts
    Chart {
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long = "eps", allow_hyphen_values = true)]
        eps: Vec<String>,
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        b: String,
        /// radius of the chart circle
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Separatrix combinatorics of monic polynomial vector fields
    Des {
        #[command(subcommand)]
        action: DesAction,
    },
    /// Fatou coordinates of z + z² - ε (or of a k = 1 family) and their functional equation
    Fatou {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        eps: f64,
        /// validation grid is grid × grid per side
        #[arg(long, default_value_t = 10)]
        grid: usize,
    },
    /// Fourier data of the horn maps of z + z² - ε (or of a k = 1 family)
    HornMap {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        eps: f64,
        #[arg(long = "fourier-M", default_value_t = 16)]
        fourier_m: usize,
    },
    /// Antiholomorphic square-root test on z + z² - ε samples
    SqrtCheck {
        /// real samples (default 0, 0.0025, 0.005, 0.0075, 0.01)
        #[arg(long = "eps", allow_hyphen_values = true, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long = "fourier-M", default_value_t = 16)]
        fourier_m: usize,
    },
    /// Invariant-curve test on the second iterate of a real k = 1 family
    CurveCheck {
        /// real samples (default 0, -0.0025, -0.005, -0.0075, -0.01)
        #[arg(long = "eps", allow_hyphen_values = true, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long = "fourier-M", default_value_t = 16)]
        fourier_m: usize,
    },
    /// Number of period-n points of z + z² and its residue mod 4
    QuadCount {
        #[arg(long)]
        n: u32,
    },
    /// Codimension-2 parabolic parameters of z̄^d + c
    Multicorn {
        #[arg(long, default_value_t = 2)]
        d: usize,
    },
}

#[derive(Subcommand, Clone, Debug, PartialEq)]
pub enum DesAction {
    /// Invariant of one field P = z^{k+1} + ε_{k-1} z^{k-1} + … + ε_0
    Classify {
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long = "eps", allow_hyphen_values = true)]
        eps: Vec<String>,
        /// tracing radius
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Classify a seeded random grid and count distinct classes
    Sweep {
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// number of grid points
        #[arg(long, default_value_t = 400)]
        grid: usize,
        /// half-width of the parameter box
        #[arg(long, default_value_t = 1.5)]
        radius: f64,
    },
    /// SVG of the separatrices of one field
    Plot {
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long = "eps", allow_hyphen_values = true)]
        eps: Vec<String>,
        #[arg(long)]
        radius: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prepare { .. } => "prepare",
            Command::Periods { .. } => "periods",
            Command::Chart { .. } => "chart",
            Command::Des { action: DesAction::Classify { .. } } => "des-classify",
            Command::Des { action: DesAction::Sweep { .. } } => "des-sweep",
            Command::Des { action: DesAction::Plot { .. } } => "des-plot",
            Command::Fatou { .. } => "fatou",
            Command::HornMap { .. } => "horn-map",
            Command::SqrtCheck { .. } => "sqrt-check",
            Command::CurveCheck { .. } => "curve-check",
            Command::QuadCount { .. } => "quad-count",
            Command::Multicorn { .. } => "multicorn",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub tols: Tolerances,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<RunConfig> {
        Ok(RunConfig { tols: Tolerances::parse(&cli.tol)?, command: cli.command, input: cli.input, out: cli.out, seed: cli.seed })
    }
}

/// Report text and CSV/SVG artifacts (file name, contents) of one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub exit_code: i32,
    pub report: Value,
    pub artifacts: Vec<(String, String)>,
}

// ---------------------------------------------------------------- handlers

fn read_family(cfg: &RunConfig) -> Result<Option<FamilySpec>> {
    match &cfg.input {
        None => Ok(None),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", p.display())))?;
            parse_family(&text).map(Some)
        }
    }
}

fn parse_eps(items: &[String], k: usize) -> Result<Vec<C64>> {
    if items.is_empty() {
        return Ok(vec![C64::new(0.0, 0.0); k]);
    }
    if items.len() != k {
        return Err(Error::Invalid(format!("expected {k} --eps values, got {}", items.len())));
    }
    items.iter().map(|s| parse_complex(s)).collect()
}

/// Seeded parameters with |ε_j| < 1 when none are given.
fn eps_or_random(items: &[String], k: usize, seed: u64) -> Result<Vec<C64>> {
    use rand::{Rng, SeedableRng};
    if !items.is_empty() {
        return parse_eps(items, k);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Ok((0..k).map(|_| C64::from_polar(rng.gen_range(0.0..1.0), rng.gen_range(-PI..PI))).collect())
}

fn require_k(k: usize) -> Result<()> {
    if (1..=8).contains(&k) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("k must be in 1..=8, got {k}")))
    }
}

fn prepare_cmd(cfg: &RunConfig, eps: &[String], k: usize) -> Result<Value> {
    let fam = match read_family(cfg)? {
        Some(f) => f,
        None => {
            require_k(k)?;
            FamilySpec::standard_unfolding(k, 1.0)
        }
    };
    let e = parse_eps(eps, fam.k)?;
    let pf = crate::prepare::prepare_at(&fam, &e)?;
    let g = fam.second_iterate(&e)?;
    let fp_res = pf.fixed_points.iter().map(|&z| (g.eval(z) - z).norm()).fold(0.0, f64::max);
    Ok(json!({
        "k": fam.k,
        "eps": to_value(&e),
        "prepared": to_value(&pf),
        "fixed_point_residual": checked(fp_res, cfg.tols.get("fixed_point")),
        "s_fit_residual": pf.s_fit_residual(),
        "max_imag_coeff": pf.max_imag_coeff(),
    }))
}

fn periods_cmd(cfg: &RunConfig, k: usize, eps: &[String], b: &str) -> Result<Value> {
    require_k(k)?;
    let e = eps_or_random(eps, k, cfg.seed)?;
    let b = parse_complex(b)?;
    let vf = crate::vfield::VectorField::from_eps(&e, b)?;
    let periods = vf.periods()?;
    let sum: C64 = periods.iter().sum();
    let expected = C64::new(0.0, 2.0 * PI) * b;
    let r = 2.0 * (1.0 + vf.max_root_modulus()?);
    let loop_integral = vf.arc_integral(r, 0.0, 2.0 * PI)?;
    let tol = cfg.tols.get("residue");
    Ok(json!({
        "k": k,
        "eps": to_value(&e),
        "b": to_value(&b),
        "roots": to_value(&vf.simple_roots()?),
        "periods": to_value(&periods),
        "period_sum": to_value(&sum),
        "residue_identity": checked((sum - expected).norm(), tol),
        "loop_radius": r,
        "loop_integral": to_value(&loop_integral),
        "loop_vs_periods": checked((loop_integral - sum).norm(), tol),
    }))
}

fn chart_cmd(cfg: &RunConfig, k: usize, eps: &[String], b: &str, radius: Option<f64>) -> Result<Value> {
    require_k(k)?;
    let e = parse_eps(eps, k)?;
    let b = parse_complex(b)?;
    let vf = crate::vfield::VectorField::from_eps(&e, b)?;
    let r = radius.unwrap_or_else(|| 1f64.max(4.0 * vf.max_root_modulus().unwrap_or(0.0)));
    let charts = vf.chart_base_points(r)?;
    let target = C64::new(0.0, 2.0 * PI) * b / k as f64;
    let tol = cfg.tols.get("chart");
    let mut rel = vec![];
    for j in 1..charts.len() {
        // a point on the overlap of the arcs of charts j-1 and j
        let z = C64::from_polar(0.7 * r, PI * (j as f64 - 0.5) / k as f64);
        let d = charts[j].eval(z, 1e-3)? - charts[j - 1].eval(z, 1e-3)?;
        rel.push(json!({ "j": j, "point": to_value(&z), "difference": to_value(&d), "residual": checked((d + target).norm(), tol) }));
    }
    Ok(json!({
        "k": k,
        "eps": to_value(&e),
        "b": to_value(&b),
        "radius": r,
        "charts": to_value(&charts),
        "expected_difference": to_value(&(-target)),
        "relations": rel,
    }))
}

fn des_options(radius: Option<f64>) -> crate::des::TraceOptions {
    crate::des::TraceOptions { radius, ..Default::default() }
}

fn des_classify_cmd(cfg: &RunConfig, k: usize, eps: &[String], radius: Option<f64>) -> Result<Value> {
    use crate::des::{classify, homoclinic_diagnostic, Field, FieldKind};
    require_k(k)?;
    let e = parse_eps(eps, k)?;
    let field = Field::from_eps(&e, FieldKind::Rotated)?;
    let periods: Vec<C64> = (0..field.roots.len()).map(|s| field.period(s)).collect();
    let mut v = json!({ "k": k, "eps": to_value(&e), "roots": to_value(&field.roots), "periods": to_value(&periods) });
    match classify(&field, &des_options(radius)) {
        Ok((inv, _)) => {
            v["status"] = json!("generic");
            v["invariant"] = to_value(&inv);
        }
        Err(err) => {
            v["status"] = json!("non_generic");
            v["reason"] = json!(err.to_string());
            if field.is_simple() {
                let (h, subset) = homoclinic_diagnostic(&field);
                v["homoclinic_min"] = checked(h, cfg.tols.get("homoclinic"));
                v["homoclinic_subset"] = to_value(&subset);
            }
        }
    }
    Ok(v)
}

fn des_sweep_cmd(cfg: &RunConfig, k: usize, n: usize, radius: f64) -> Result<(Value, String)> {
    use crate::des::{catalan, distinct_shapes, stratify, sweep_grid, GridClass};
    require_k(k)?;
    if n == 0 || !(radius > 0.0) {
        return Err(Error::Invalid("sweep needs --grid > 0 and --radius > 0".into()));
    }
    let grid = sweep_grid(k, n, radius, cfg.seed);
    let classes = stratify(&grid, &des_options(None));
    let shapes = distinct_shapes(&classes);
    let htol = cfg.tols.get("homoclinic");
    let mut csv = String::from("index");
    for j in 0..k {
        let _ = write!(csv, ",eps{j}_re,eps{j}_im");
    }
    csv.push_str(",status,word_id,shape,word,homoclinic_min\n");
    let (mut generic, mut flagged, mut flag_ok) = (0usize, 0usize, 0usize);
    for (i, (e, cl)) in grid.iter().zip(&classes).enumerate() {
        let _ = write!(csv, "{i}");
        for z in e {
            let _ = write!(csv, ",{:.16e},{:.16e}", z.re, z.im);
        }
        let join = |w: &[usize]| w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        match cl {
            GridClass::Generic { shape, word } => {
                generic += 1;
                let id = shapes.iter().position(|s| s == shape).unwrap_or(usize::MAX);
                let _ = writeln!(csv, ",generic,{id},{},{},", join(shape), join(word));
            }
            GridClass::NonGeneric { homoclinic_min, .. } => {
                flagged += 1;
                // a multiple root (no homoclinic value) is non-generic for another reason
                if homoclinic_min.is_none_or(|h| h < htol) {
                    flag_ok += 1;
                }
                let h = homoclinic_min.map(|h| format!("{h:.16e}")).unwrap_or_default();
                let _ = writeln!(csv, ",non_generic,,,,{h}");
            }
        }
    }
    let v = json!({
        "k": k,
        "grid_points": n,
        "radius": radius,
        "seed": cfg.seed,
        "generic": generic,
        "non_generic": flagged,
        "distinct_words": shapes.len(),
        "catalan": catalan(k),
        "count_matches_catalan": shapes.len() as u64 == catalan(k),
        "shapes": to_value(&shapes),
        "flags_with_homoclinic_witness": flag_ok,
        "homoclinic_tol": htol,
        "csv": "des-sweep.csv",
    });
    Ok((v, csv))
}

fn des_plot_cmd(k: usize, eps: &[String], radius: Option<f64>) -> Result<(Value, String)> {
    use crate::des::{trace_separatrices, Field, FieldKind, Landing};
    require_k(k)?;
    let e = parse_eps(eps, k)?;
    let field = Field::from_eps(&e, FieldKind::Rotated)?;
    let opts = des_options(radius);
    let seps = trace_separatrices(&field, &opts)?;
    let extent = 1.2 * (1.0 + field.max_root_modulus()) * 1.5;
    let colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{:.6} {:.6} {:.6} {:.6}" width="600" height="600">"#,
        -extent,
        -extent,
        2.0 * extent,
        2.0 * extent
    );
    let stroke = extent / 300.0;
    let _ = writeln!(svg, r#"<rect x="{:.6}" y="{:.6}" width="{:.6}" height="{:.6}" fill="white"/>"#, -extent, -extent, 2.0 * extent, 2.0 * extent);
    let mut landed = vec![];
    for s in &seps {
        // y is flipped so that Im z points up
        let pts: Vec<String> = s
            .samples
            .iter()
            .filter(|z| z.norm() <= 2.0 * extent)
            .map(|z| format!("{:.6},{:.6}", z.re, -z.im))
            .collect();
        let colour = colours[s.index % colours.len()];
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="{stroke:.6}" points="{}"/>"#,
            pts.join(" ")
        );
        landed.push(match s.landing {
            Landing::Root(r) => json!(r),
            Landing::Escaped => json!("escaped"),
            Landing::BudgetExceeded => json!("budget_exceeded"),
        });
    }
    for z in &field.roots {
        let _ = writeln!(svg, r#"<circle cx="{:.6}" cy="{:.6}" r="{:.6}" fill="black"/>"#, z.re, -z.im, 3.0 * stroke);
    }
    svg.push_str("</svg>\n");
    let v = json!({ "k": k, "eps": to_value(&e), "roots": to_value(&field.roots), "landing": landed, "svg": "des-plot.svg" });
    Ok((v, svg))
}

/// The k = 1 map to study: the second iterate of the input family at real ε, else z + z² - ε.
fn k1_map(cfg: &RunConfig, eps: f64) -> Result<(String, crate::poly::CPoly)> {
    match read_family(cfg)? {
        Some(fam) => {
            if fam.k != 1 {
                return Err(Error::Invalid(format!("this subcommand needs a k = 1 family, got k = {}", fam.k)));
            }
            Ok((format!("family eps={eps}"), fam.second_iterate(&[C64::new(eps, 0.0)])?))
        }
        None => Ok((format!("z+z^2-eps eps={eps}"), crate::poly::CPoly::from_real(&[-eps, 1.0, 1.0]))),
    }
}

fn fatou_cmd(cfg: &RunConfig, eps: f64, n: usize) -> Result<Value> {
    use crate::fatou::{prepare_k1, FatouCoord, FatouOptions, GMap, Side};
    if !(2..=40).contains(&n) {
        return Err(Error::Invalid(format!("--grid must be in 2..=40, got {n}")));
    }
    let (label, g) = k1_map(cfg, eps)?;
    let p = prepare_k1(&g)?;
    let tol = cfg.tols.get("functional");
    let mut sides = serde_json::Map::new();
    for side in [Side::AttractingEnd, Side::RepellingEnd] {
        let f = FatouCoord::new(GMap::Poly(p.g.clone()), p.vf.clone(), side, 1e-6, FatouOptions::default())?;
        let s = if side == Side::AttractingEnd { -1.0 } else { 1.0 };
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let z = C64::new(s * (0.1 + 0.2 * i as f64 / (n - 1) as f64), -0.3 + 0.6 * j as f64 / (n - 1) as f64);
                worst = worst.max(f.functional_residual(z)?);
            }
        }
        let key = if side == Side::AttractingEnd { "attracting" } else { "repelling" };
        sides.insert(
            key.into(),
            json!({ "base_point": to_value(&f.base_point), "functional_residual": checked(worst, tol), "grid": [n, n] }),
        );
    }
    Ok(json!({
        "map": label,
        "g_coeffs": to_value(&g.coeffs()),
        "prepared_shift": to_value(&p.shift),
        "prepared_scale": to_value(&p.scale),
        "b": to_value(&p.vf.b),
        "sides": sides,
    }))
}

fn map_summary(t: &crate::fatou::TransitionMap) -> Value {
    let (m, odd) = t.max_odd();
    json!({
        "ell": t.ell,
        "src_sector": t.src_sector,
        "dst_sector": t.dst_sector,
        "line_height": t.line_height,
        "samples": t.samples,
        "constant_term": to_value(&t.constant_term),
        "fourier": t.fourier.iter().map(|(m, a)| json!([m, to_value(a)])).collect::<Vec<_>>(),
        "max_odd": { "m": m, "value": odd },
        "max_nonconstant": t.max_nonconstant(),
        "inversion_residual": t.inversion_residual,
    })
}

fn horn_options(m: usize) -> Result<crate::fatou::HornOptions> {
    if !(4..=128).contains(&m) {
        return Err(Error::Invalid(format!("--fourier-M must be in 4..=128, got {m}")));
    }
    Ok(crate::fatou::HornOptions { m, ..Default::default() })
}

fn horn_map_cmd(cfg: &RunConfig, eps: f64, m: usize) -> Result<Value> {
    let (label, g) = k1_map(cfg, eps)?;
    let (p, s) = crate::analysis::sample_poly(&label, &g, &horn_options(m)?)?;
    let (_, _, odd) = crate::analysis::max_odd(&s.maps);
    let (_, _, odd2) = crate::analysis::max_odd(&s.doubled);
    let change = (odd2 - odd).abs() / odd.max(f64::MIN_POSITIVE);
    Ok(json!({
        "map": label,
        "b": to_value(&p.vf.b),
        "fourier_M": m,
        "maps": s.maps.iter().map(map_summary).collect::<Vec<_>>(),
        "doubled": s.doubled.iter().map(map_summary).collect::<Vec<_>>(),
        "max_odd": odd,
        "max_odd_doubled": odd2,
        "max_odd_relative_change": checked(change, 0.1),
    }))
}

// z + z² - ε has an attracting/repelling pair for ε > 0, ε + z + z²/2 for ε < 0
const DEFAULT_SAMPLES: [f64; 5] = [0.0, 0.0025, 0.005, 0.0075, 0.01];
const DEFAULT_CURVE_SAMPLES: [f64; 5] = [0.0, -0.0025, -0.005, -0.0075, -0.01];

fn sqrt_check_cmd(cfg: &RunConfig, eps: &[f64], m: usize) -> Result<Value> {
    let eps = if eps.is_empty() { &DEFAULT_SAMPLES[..] } else { eps };
    let samples = crate::analysis::quadratic_samples(eps, &horn_options(m)?)?;
    let r = crate::analysis::square_root_verdict(&samples, cfg.tols.get("verdict"))?;
    Ok(json!({ "map": "z+z^2-eps", "eps": eps, "fourier_M": m, "verdict": to_value(&r.verdict), "report": to_value(&r) }))
}

fn curve_check_cmd(cfg: &RunConfig, eps: &[f64], m: usize) -> Result<Value> {
    let eps = if eps.is_empty() { &DEFAULT_CURVE_SAMPLES[..] } else { eps };
    let fam = match read_family(cfg)? {
        Some(f) => f,
        None => FamilySpec::standard_unfolding(1, 1.0),
    };
    if fam.k != 1 {
        return Err(Error::Invalid(format!("curve-check needs a k = 1 family, got k = {}", fam.k)));
    }
    let opts = horn_options(m)?;
    let samples = eps
        .iter()
        .map(|&e| Ok(crate::analysis::sample_poly(&format!("eps={e}"), &fam.second_iterate(&[C64::new(e, 0.0)])?, &opts)?.1))
        .collect::<Result<Vec<_>>>()?;
    let r = crate::analysis::invariant_curve_verdict(&samples, cfg.tols.get("verdict"))?;
    Ok(json!({ "eps": eps, "fourier_M": m, "verdict": to_value(&r.verdict), "report": to_value(&r) }))
}

fn quad_count_cmd(n: u32) -> Result<Value> {
    let c = crate::analysis::quadratic_orbit_count(n)?;
    Ok(json!({ "n": n, "count": c.count, "mod4": c.residue_mod_4, "verified_by_roots": c.verified }))
}

fn multicorn_cmd(cfg: &RunConfig, d: usize) -> Result<Value> {
    if !(2..=12).contains(&d) {
        return Err(Error::Invalid(format!("--d must be in 2..=12, got {d}")));
    }
    let reps = crate::multicorn::codim2_certificate(d)?;
    let (fp, ct) = (cfg.tols.get("fixed_point"), cfg.tols.get("codim"));
    let per_tau: Vec<Value> = reps
        .iter()
        .map(|r| {
            json!({
                "report": to_value(r),
                "fixed_point_residual": checked(r.fixed_point_residual, fp),
                "multiplier_residual": checked(r.multiplier_residual, fp),
                "re_a2": checked(r.a2.re.abs(), ct),
                "codim2_value_vs_displayed": checked((r.codim2_value - r.displayed_value).abs(), ct),
            })
        })
        .collect();
    Ok(json!({
        "d": d,
        "parameters": per_tau,
        "binomial_codim2_value": crate::multicorn::binomial_codim2_value(d),
        "displayed_codim2_value": crate::multicorn::displayed_codim2_value(d),
    }))
}

// ---------------------------------------------------------------- dispatch

fn dispatch(cfg: &RunConfig) -> Result<(Value, Vec<(String, String)>)> {
    let none = |v: Value| (v, vec![]);
    Ok(match &cfg.command {
        Command::Prepare { eps, k } => none(prepare_cmd(cfg, eps, *k)?),
        Command::Periods { k, eps, b } => none(periods_cmd(cfg, *k, eps, b)?),
        Command::Chart { k, eps, b, radius } => none(chart_cmd(cfg, *k, eps, b, *radius)?),
        Command::Des { action } => match action {
            DesAction::Classify { k, eps, radius } => none(des_classify_cmd(cfg, *k, eps, *radius)?),
            DesAction::Sweep { k, grid, radius } => {
                let (v, csv) = des_sweep_cmd(cfg, *k, *grid, *radius)?;
                (v, vec![("des-sweep.csv".into(), csv)])
            }
            DesAction::Plot { k, eps, radius } => {
                let (v, svg) = des_plot_cmd(*k, eps, *radius)?;
                (v, vec![("des-plot.svg".into(), svg)])
            }
        },
        Command::Fatou { eps, grid } => none(fatou_cmd(cfg, *eps, *grid)?),
        Command::HornMap { eps, fourier_m } => none(horn_map_cmd(cfg, *eps, *fourier_m)?),
        Command::SqrtCheck { eps, fourier_m } => none(sqrt_check_cmd(cfg, eps, *fourier_m)?),
        Command::CurveCheck { eps, fourier_m } => none(curve_check_cmd(cfg, eps, *fourier_m)?),
        Command::QuadCount { n } => none(quad_count_cmd(*n)?),
        Command::Multicorn { d } => none(multicorn_cmd(cfg, *d)?),
    })
}

fn config_value(cfg: &RunConfig) -> Value {
    json!({
        "input": cfg.input.as_ref().map(|p| p.display().to_string()),
        "seed": cfg.seed,
        "tolerances": to_value(&cfg.tols),
    })
}

/// Error report for failures before a config exists (bad tolerances, unreadable arguments).
pub fn error_report(subcommand: &str, err: &Error) -> Value {
    json!({ "subcommand": subcommand, "status": "error", "error": err.to_string() })
}

/// Run one subcommand. Exit code 0 whenever a result (including a failing verdict) is computed,
/// 2 on operational errors, which are reported in the JSON.
pub fn run(cfg: &RunConfig) -> RunOutput {
    let name = cfg.command.name();
    match dispatch(cfg) {
        Ok((result, artifacts)) => RunOutput {
            exit_code: 0,
            report: json!({ "subcommand": name, "status": "ok", "config": config_value(cfg), "result": result }),
            artifacts,
        },
        Err(e) => {
            let mut report = error_report(name, &e);
            report["config"] = config_value(cfg);
            RunOutput { exit_code: 2, report, artifacts: vec![] }
        }
    }
}

/// Write `<out>/<subcommand>.json` and the artifacts.
pub fn write_outputs(dir: &std::path::Path, subcommand: &str, out: &RunOutput) -> Result<()> {
    let io = |e: std::io::Error| Error::Invalid(format!("cannot write to {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join(format!("{subcommand}.json")), canonical_json(&out.report)).map_err(io)?;
    for (name, text) in &out.artifacts {
        std::fs::write(dir.join(name), text).map_err(io)?;
    }
    Ok(())
}

/// Parse arguments, run, print the report; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let out_dir = cli.out.clone();
    let name = cli.command.name();
    let (code, text, out) = match RunConfig::from_cli(cli) {
        Ok(cfg) => {
            let out = run(&cfg);
            (out.exit_code, canonical_json(&out.report), Some(out))
        }
        Err(e) => (2, canonical_json(&error_report(name, &e)), None),
    };
    print!("{text}");
    if let (Some(dir), Some(out)) = (out_dir, out) {
        if let Err(e) = write_outputs(&dir, name, &out) {
            eprintln!("{e}");
            return 2;
        }
    }
    code
}
