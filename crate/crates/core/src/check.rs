//! Cross-module invariant suite. Every randomized check draws from its own
//! generator seeded from one suite seed, so reports are reproducible.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::charts::{euclidean_atlas, sphere_atlas, ChartPoint, TangentSample, GLOBAL, NORTH, SOUTH};
use crate::error::Result;
use crate::functionals::{angle, energy, length, sample, AnalyticCurve, Curve, DiscreteCurve};
use crate::geodesic::{exp_map, integrate, residual, shoot, ChartSwitchPolicy, ShootConfig};
use crate::metric::{
    euclidean_metric, pullback_metric, sphere_conformal_factor, sphere_conformal_gradient, sphere_metric, MetricField,
    SYMMETRY_TOLERANCE,
};
use crate::numerics::{
    central_diff, dot, integrate_scalar, invert, norm, rk4_step, FiniteDiffConfig, QuadratureConfig, SquareMatrix,
};
use crate::variation::{euler_lagrange_residual, first_variation, BumpPerturbation, Functional, DEFAULT_ALPHA_STEP};

pub const DEFAULT_SEED: u64 = 1729;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Test hook: adds this to `g_01` of the sphere metric.
    pub asymmetry: Option<f64>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            asymmetry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub seed: u64,
    pub outcomes: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> Vec<&CheckOutcome> {
        self.outcomes.iter().filter(|o| !o.passed).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "invariant suite (seed {})", self.seed);
        let _ = writeln!(out, "{:<12} {:<34} {:<6} detail", "module", "invariant", "result");
        for o in &self.outcomes {
            let _ = writeln!(
                out,
                "{:<12} {:<34} {:<6} {}",
                o.module,
                o.name,
                if o.passed { "pass" } else { "FAIL" },
                o.detail
            );
        }
        let passed = self.outcomes.iter().filter(|o| o.passed).count();
        let _ = writeln!(out, "{passed}/{} invariants passed", self.outcomes.len());
        out
    }
}

/// Fields shared by the checks.
pub struct Fixtures {
    pub euclid2: MetricField,
    pub euclid3: MetricField,
    pub sphere: MetricField,
    pub pullback: MetricField,
}

impl Fixtures {
    pub fn new(asymmetry: Option<f64>) -> Result<Self> {
        let sphere_atlas = Arc::new(sphere_atlas());
        let mut sphere = sphere_metric(&sphere_atlas)?;
        if let Some(eps) = asymmetry {
            sphere = sphere.with_symmetry_defect(eps);
        }
        Ok(Self {
            euclid2: euclidean_metric(&Arc::new(euclidean_atlas(2)?))?,
            euclid3: euclidean_metric(&Arc::new(euclidean_atlas(3)?))?,
            pullback: pullback_metric(&sphere_atlas, FiniteDiffConfig::default())?,
            sphere,
        })
    }
}

pub struct CorpusCurve {
    pub name: &'static str,
    pub field: MetricField,
    pub curve: Box<dyn Curve + Send + Sync>,
    pub constant_speed: bool,
}

/// Test curves on the Euclidean plane and the sphere, smooth and piecewise,
/// analytic and sampled.
pub fn curve_corpus(fx: &Fixtures) -> Result<Vec<CorpusCurve>> {
    let e = &fx.euclid2;
    let s = &fx.sphere;
    let entry = |name, field: &MetricField, curve: Box<dyn Curve + Send + Sync>, constant_speed| CorpusCurve {
        name,
        field: field.clone(),
        curve,
        constant_speed,
    };
    let line = AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(GLOBAL, [3.0 * t, 4.0 * t]))?
        .with_velocity(|_| vec![3.0, 4.0]);
    let circle = AnalyticCurve::new(0.0, 2.0, |t| ChartPoint::new(GLOBAL, [2.0 * t.cos(), 2.0 * t.sin()]))?
        .with_velocity(|t| vec![-2.0 * t.sin(), 2.0 * t.cos()]);
    let parabola =
        AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(GLOBAL, [t, t * t]))?.with_velocity(|t| vec![1.0, 2.0 * t]);
    let wiggle = AnalyticCurve::new(-1.0, 2.0, |t| ChartPoint::new(GLOBAL, [t.sin(), t * t * t]))?;
    let kinked = AnalyticCurve::new(0.0, 1.0, |t| {
        if t <= 0.5 {
            ChartPoint::new(GLOBAL, [6.0 * t, 0.0])
        } else {
            ChartPoint::new(GLOBAL, [3.0, 8.0 * (t - 0.5)])
        }
    })?
    .with_velocity(|t| if t < 0.5 { vec![6.0, 0.0] } else { vec![0.0, 8.0] })
    .with_break_points(vec![0.5])?;
    let equator = AnalyticCurve::new(0.0, TAU, |t| ChartPoint::new(NORTH, [t.cos(), t.sin()]))?
        .with_velocity(|t| vec![-t.sin(), t.cos()]);
    let drift = AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(SOUTH, [0.2 + t, 0.5 * t * t]))?
        .with_velocity(|t| vec![1.0, t]);
    let policy = ChartSwitchPolicy::default();
    let geodesic = integrate(
        s,
        &ChartPoint::new(NORTH, [0.0, 0.0]),
        &[0.5, 0.0],
        (0.0, 0.9 * PI),
        1000,
        &policy,
    )?;
    let sampled = sample(
        &AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(GLOBAL, [t * t, 1.0 - t]))?,
        201,
    )?;
    Ok(vec![
        entry("euclidean line", e, Box::new(line), true),
        entry("euclidean circle", e, Box::new(circle), true),
        entry("euclidean parabola", e, Box::new(parabola), false),
        entry("euclidean wiggle", e, Box::new(wiggle), false),
        entry("euclidean kinked path", e, Box::new(kinked), false),
        entry("sampled euclidean curve", e, Box::new(sampled), false),
        entry("sphere equator", s, Box::new(equator), true),
        entry("sphere drift curve", s, Box::new(drift), false),
        entry("sphere meridian geodesic", s, Box::new(geodesic), true),
    ])
}

type CheckFn = fn(&Fixtures, &mut ChaCha8Rng) -> Result<(bool, String)>;

const CHECKS: &[(&str, &str, CheckFn)] = &[
    ("numerics", "inverse round trip", check_inverse),
    ("numerics", "central difference exactness", check_central_diff),
    ("numerics", "quadrature linearity", check_quadrature_linearity),
    ("numerics", "rk4 convergence order", check_rk4_order),
    ("charts", "transition round trip", check_transition_round_trip),
    ("charts", "velocity round trip", check_velocity_round_trip),
    ("charts", "embedding unit norm", check_unit_norm),
    ("charts", "embedding consistency", check_embedding_consistency),
    ("metric", "metric symmetry", check_metric_symmetry),
    ("metric", "positive definiteness", check_positive_definite),
    ("metric", "christoffel index symmetry", check_christoffel_symmetry),
    ("metric", "christoffel contracted form", check_contracted_form),
    ("metric", "christoffel closed form", check_christoffel_closed_form),
    ("metric", "chart covariance", check_chart_covariance),
    ("functionals", "length nonnegativity", check_nonnegativity),
    ("functionals", "cauchy-schwarz bound", check_cauchy_schwarz),
    ("functionals", "reparametrization invariance", check_reparametrization),
    ("functionals", "length additivity", check_additivity),
    ("functionals", "angle symmetry and scaling", check_angle),
    ("geodesic", "speed conservation", check_speed_conservation),
    ("geodesic", "residual certification", check_residual_certification),
    ("geodesic", "restriction property", check_restriction),
    ("geodesic", "homogeneity", check_homogeneity),
    ("geodesic", "shooting consistency", check_shooting),
    ("geodesic", "chart-switch invariance", check_chart_switch),
    ("variation", "stationarity views agree", check_stationarity_views),
    (
        "variation",
        "energy and length stationarity",
        check_unit_speed_stationarity,
    ),
    ("variation", "variation step convergence", check_variation_convergence),
    ("variation", "euler-lagrange cross-check", check_el_cross),
];

pub fn run_suite(options: SuiteOptions) -> SuiteReport {
    let fixtures = Fixtures::new(options.asymmetry);
    let outcomes = CHECKS
        .iter()
        .enumerate()
        .map(|(i, (module, name, f))| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(options.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64));
            let result = match &fixtures {
                Ok(fx) => f(fx, &mut rng),
                Err(e) => Err(e.clone()),
            };
            let (passed, detail) = match result {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckOutcome {
                module,
                name,
                passed,
                detail,
            }
        })
        .collect();
    SuiteReport {
        seed: options.seed,
        outcomes,
    }
}

fn verdict(worst: f64, tol: f64, what: &str) -> (bool, String) {
    (worst <= tol, format!("{what} {worst:.3e} (tolerance {tol:.0e})"))
}

fn unit_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n > 0.1 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn grid(half: f64, n: usize, max_radius: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let x = [
                -half + 2.0 * half * i as f64 / (n - 1) as f64,
                -half + 2.0 * half * j as f64 / (n - 1) as f64,
            ];
            if norm(&x) <= max_radius {
                out.push(x);
            }
        }
    }
    out
}

fn annulus(rng: &mut ChaCha8Rng, count: usize, lo: f64, hi: f64) -> Vec<[f64; 2]> {
    (0..count)
        .map(|_| {
            let r = (lo.ln() + rng.gen_range(0.0..1.0) * (hi.ln() - lo.ln())).exp();
            let a = rng.gen_range(0.0..TAU);
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn check_inverse(_: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for d in [2, 3] {
        for _ in 0..25 {
            let mut a = SquareMatrix::zeros(d);
            for i in 0..d {
                for j in 0..d {
                    a[(i, j)] = rng.gen_range(-1.0..1.0) + if i == j { 3.0 } else { 0.0 };
                }
            }
            let prod = a.mul(&invert(&a)?);
            worst = worst.max(prod.max_diff(&SquareMatrix::identity(d)));
        }
    }
    Ok(verdict(worst, 1e-10, "max |A A^-1 - I|"))
}

fn check_central_diff(_: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let cfg = FiniteDiffConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let f =
            |p: &[f64]| c[0] + c[1] * p[0] + c[2] * p[1] + c[3] * p[0] * p[0] + c[4] * p[0] * p[1] + c[5] * p[1] * p[1];
        let exact = [
            c[1] + 2.0 * c[3] * x[0] + c[4] * x[1],
            c[2] + c[4] * x[0] + 2.0 * c[5] * x[1],
        ];
        for (k, want) in exact.iter().enumerate() {
            let got = central_diff(f, &x, k, &cfg)?;
            worst = worst.max((got - want).abs() / (1.0 + want.abs()));
        }
    }
    Ok(verdict(worst, 1e-7, "max relative error"))
}

fn check_quadrature_linearity(_: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let q = QuadratureConfig::new(64)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (al, be) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let (a, b) = (rng.gen_range(-1.0..0.0), rng.gen_range(0.5..2.0));
        let f = |x: f64| (3.0 * x).sin() + x * x;
        let g = |x: f64| (-x).exp();
        let lhs = integrate_scalar(|x| al * f(x) + be * g(x), a, b, &q)?;
        let rhs = al * integrate_scalar(f, a, b, &q)? + be * integrate_scalar(g, a, b, &q)?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
    }
    Ok(verdict(worst, 1e-12, "max relative defect"))
}

fn check_rk4_order(_: &Fixtures, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let err = |n: usize| -> Result<f64> {
        let h = 1.0 / n as f64;
        let mut y = vec![1.0];
        for i in 0..n {
            y = rk4_step(|_, y| Ok(vec![y[0]]), &y, i as f64 * h, h)?;
        }
        Ok((y[0] - 1f64.exp()).abs())
    };
    let ratio = err(10)? / err(20)?;
    Ok((
        (12.0..=20.0).contains(&ratio),
        format!("error ratio {ratio:.3} (expected 12..20)"),
    ))
}

fn check_transition_round_trip(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let atlas = fx.sphere.atlas();
    let mut worst: f64 = 0.0;
    for x in annulus(rng, 200, 0.1, 10.0) {
        let y = atlas.transition(NORTH, SOUTH, &x)?;
        let back = atlas.transition(SOUTH, NORTH, &y)?;
        worst = worst.max(norm(&sub(&back, &x)) / norm(&x).max(1.0));
    }
    Ok(verdict(worst, 1e-10, "max round-trip error"))
}

fn check_velocity_round_trip(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let atlas = fx.sphere.atlas();
    let cfg = FiniteDiffConfig::default();
    let mut worst: f64 = 0.0;
    for x in annulus(rng, 200, 0.1, 10.0) {
        let v = unit_vec(rng, 2);
        let s = TangentSample::new(ChartPoint::new(NORTH, x), v.clone());
        let there = atlas.push_velocity(SOUTH, &s, &cfg)?;
        let back = atlas.push_velocity(NORTH, &there, &cfg)?;
        worst = worst.max(norm(&sub(&back.velocity, &v)));
    }
    Ok(verdict(worst, 1e-6, "max velocity round-trip error"))
}

fn check_unit_norm(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let atlas = fx.sphere.atlas();
    let mut worst: f64 = 0.0;
    for x in annulus(rng, 200, 1e-3, 1e3) {
        for chart in [NORTH, SOUTH] {
            worst = worst.max((norm(&atlas.embed(&ChartPoint::new(chart, x))?) - 1.0).abs());
        }
    }
    Ok(verdict(worst, 1e-12, "max | |F(x)| - 1 |"))
}

fn check_embedding_consistency(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let atlas = fx.sphere.atlas();
    let mut worst: f64 = 0.0;
    for x in annulus(rng, 200, 0.05, 20.0) {
        for (from, to) in [(NORTH, SOUTH), (SOUTH, NORTH)] {
            let a = atlas.embed(&ChartPoint::new(from, x))?;
            let b = atlas.embed(&ChartPoint::new(to, atlas.transition(from, to, &x)?))?;
            worst = worst.max(norm(&sub(&a, &b)));
        }
    }
    Ok(verdict(worst, 1e-10, "max embedding mismatch"))
}

fn all_fields(fx: &Fixtures) -> Vec<(&'static str, &MetricField)> {
    vec![
        ("sphere", &fx.sphere),
        ("pullback", &fx.pullback),
        ("euclidean", &fx.euclid2),
    ]
}

fn field_points(field: &MetricField) -> Vec<ChartPoint> {
    let charts = field.atlas().chart_ids();
    grid(2.0, 9, 2.0)
        .into_iter()
        .flat_map(|x| charts.iter().map(move |&c| ChartPoint::new(c, x)))
        .collect()
}

fn check_metric_symmetry(fx: &Fixtures, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut failed_at = None;
    for (name, field) in all_fields(fx) {
        for p in field_points(field) {
            let g = field.raw_components(&p)?;
            let asym = g.max_asymmetry();
            if asym > worst {
                worst = asym;
                if asym > SYMMETRY_TOLERANCE {
                    failed_at = Some(format!(" [{name} metric at {} {:?}]", p.chart, p.coords));
                }
            }
        }
    }
    let (ok, mut detail) = verdict(worst, SYMMETRY_TOLERANCE, "max |g_ij - g_ji|");
    if let Some(at) = failed_at {
        detail.push_str(&at);
    }
    Ok((ok, detail))
}

fn check_positive_definite(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut min_ratio = f64::INFINITY;
    for (_, field) in all_fields(fx) {
        for p in field_points(field) {
            for _ in 0..20 {
                let v = unit_vec(rng, field.dim());
                min_ratio = min_ratio.min(field.inner(&p, &v, &v)?);
            }
        }
    }
    Ok((min_ratio > 0.0, format!("min g(v,v) over unit probes {min_ratio:.3e}")))
}

fn check_christoffel_symmetry(fx: &Fixtures, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (_, field) in all_fields(fx) {
        for p in field_points(field) {
            let g = field.christoffel_at(&p)?;
            let d = g.dim();
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        worst = worst.max((g.get(k, i, j) - g.get(k, j, i)).abs());
                    }
                }
            }
        }
    }
    Ok((worst == 0.0, format!("max |G^k_ij - G^k_ji| {worst:.3e} (exact)")))
}

fn check_contracted_form(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for field in [&fx.sphere, &fx.pullback] {
        for p in field_points(field) {
            let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a = field.christoffel_at(&p)?.contract(&v);
            let b = field.unsymmetrized_contraction(&p, &v)?;
            worst = worst.max(norm(&sub(&a, &b)));
        }
    }
    Ok(verdict(worst, 1e-10, "max contraction mismatch"))
}

/// `Γ^k_ij = ½λ⁻¹(λ_i δ_kj + λ_j δ_ki − λ_k δ_ij)` for a conformal factor λ.
pub fn conformal_christoffel(x: &[f64], k: usize, i: usize, j: usize) -> f64 {
    let l = sphere_conformal_factor(x);
    let dl = sphere_conformal_gradient(x);
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    0.5 / l * (dl[i] * delta(k, j) + dl[j] * delta(k, i) - dl[k] * delta(i, j))
}

fn check_christoffel_closed_form(fx: &Fixtures, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for field in [&fx.sphere, &fx.pullback] {
        for p in field_points(field) {
            let g = field.christoffel_at(&p)?;
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        worst = worst.max((g.get(k, i, j) - conformal_christoffel(&p.coords, k, i, j)).abs());
                    }
                }
            }
        }
    }
    Ok(verdict(worst, 1e-5, "max deviation from closed form"))
}

fn check_chart_covariance(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let field = &fx.sphere;
    let atlas = field.atlas();
    let cfg = FiniteDiffConfig::default();
    let mut worst: f64 = 0.0;
    for x in annulus(rng, 100, 0.2, 5.0) {
        let p = ChartPoint::new(NORTH, x);
        let (v, w) = (unit_vec(rng, 2), unit_vec(rng, 2));
        let a = field.inner(&p, &v, &w)?;
        let sv = atlas.push_velocity(SOUTH, &TangentSample::new(p.clone(), v), &cfg)?;
        let sw = atlas.push_velocity(SOUTH, &TangentSample::new(p.clone(), w), &cfg)?;
        let b = field.inner(&sv.base, &sv.velocity, &sw.velocity)?;
        worst = worst.max((a - b).abs());
    }
    Ok(verdict(worst, 1e-6, "max inner-product mismatch"))
}

fn check_nonnegativity(fx: &Fixtures, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let q = QuadratureConfig::default();
    let mut min_len = f64::INFINITY;
    for c in curve_corpus(fx)? {
        min_len = min_len.min(length(&c.field, c.curve.as_ref(), &q)?);
    }
    let still = AnalyticCurve::new(0.0, 1.0, |_| ChartPoint::new(NORTH, [0.3, 0.4]))?;
    let zero = length(&fx.sphere, &still, &q)?;
    let mut max_speed: f64 = 0.0;
    for nodes in still.segment_nodes(&q)? {
        for (_, s) in nodes {
            max_speed = max_speed.max(fx.sphere.norm(&s.base, &s.velocity)?);
        }
    }
    let ok = min_len >= 0.0 && zero == 0.0 && max_speed <= 1e-12;
    Ok((
        ok,
        format!("min corpus length {min_len:.3e}; constant curve length {zero:.1e}, max speed {max_speed:.1e}"),
    ))
}

fn check_cauchy_schwarz(fx: &Fixtures, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let q = QuadratureConfig::new(1024)?;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_eq: f64 = 0.0;
    let mut count = 0;
    for c in curve_corpus(fx)? {
        let (a, b) = c.curve.domain();
        let l = length(&c.field, c.curve.as_ref(), &q)?;
        let e = energy(&c.field, c.curve.as_ref(), &q)?;
        let bound = 2.0 * (b - a) * e;
        worst_gap = worst_gap.max(l * l - bound);
        if c.constant_speed {
            worst_eq = worst_eq.max((l * l - bound).abs());
        }
        count += 1;
    }
    let ok = worst_gap <= 1e-8 && worst_eq <= 1e-8;
    Ok((
        ok,
        format!("{count} curves; max L^2 - 2(b-a)E {worst_gap:.3e}; constant-speed gap {worst_eq:.3e}"),
    ))
}

fn check_reparametrization(fx: &Fixtures, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let e = &fx.euclid2;
    let q = QuadratureConfig::default();
    let straight = AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(GLOBAL, [3.0 * t, 4.0 * t]))?
        .with_velocity(|_| vec![3.0, 4.0]);
    let smooth = AnalyticCurve::new(0.0, 1.0, |s| {
        let phi = 3.0 * s * s - 2.0 * s * s * s;
        ChartPoint::new(GLOBAL, [3.0 * phi, 4.0 * phi])
    })?
    .with_velocity(|s| {
        let dphi = 6.0 * s * (1.0 - s);
        vec![3.0 * dphi, 4.0 * dphi]
    });
    let dl = (length(e, &straight, &q)? - length(e, &smooth, &q)?).abs();
    let e0 = energy(e, &straight, &q)?;
    let de = (energy(e, &smooth, &q)? - e0).abs() / e0;
    Ok((
        dl <= 1e-6 && de > 0.01,
        format!("length change {dl:.3e}; relative energy change {de:.3e}"),
    ))
}

fn check_additivity(fx: &Fixtures, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let q = QuadratureConfig::default();
    let eq = AnalyticCurve::new(0.0, TAU, |t| ChartPoint::new(NORTH, [t.cos(), t.sin()]))?
        .with_velocity(|t| vec![-t.sin(), t.cos()]);
    let d = sample(&eq, 401)?;
    let whole = length(&fx.sphere, &d, &q)?;
    let mut worst: f64 = 0.0;
    for cut in [100, 200, 300] {
        let left = length(&fx.sphere, &d.slice(0, cut)?, &q)?;
        let right = length(&fx.sphere, &d.slice(cut, 400)?, &q)?;
        worst = worst.max((whole - left - right).abs());
    }
    Ok(verdict(worst, 1e-9, "max additivity defect"))
}

fn check_angle(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for field in [&fx.sphere, &fx.euclid2] {
        for _ in 0..50 {
            let chart = field.atlas().chart_ids()[0];
            let p = ChartPoint::new(chart, [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let (v, w) = (unit_vec(rng, 2), unit_vec(rng, 2));
            let (al, be) = (rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
            let a = angle(field, &p, &v, &w)?;
            let b = angle(field, &p, &w, &v)?;
            let sv: Vec<f64> = v.iter().map(|x| al * x).collect();
            let sw: Vec<f64> = w.iter().map(|x| be * x).collect();
            let c = angle(field, &p, &sv, &sw)?;
            worst = worst.max((a - b).abs().max((a - c).abs()));
        }
    }
    Ok(verdict(worst, 1e-12, "max angle defect"))
}

/// Integrated geodesics shared by the geodesic checks: (label, field, curve).
fn geodesic_corpus(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<Vec<(String, MetricField, DiscreteCurve)>> {
    let policy = ChartSwitchPolicy::default();
    let mut out = vec![
        (
            "euclidean line".to_string(),
            fx.euclid2.clone(),
            integrate(
                &fx.euclid2,
                &ChartPoint::new(GLOBAL, [0.0, 0.0]),
                &[1.0, 2.0],
                (0.0, 1.0),
                400,
                &policy,
            )?,
        ),
        (
            "euclidean 3d line".to_string(),
            fx.euclid3.clone(),
            integrate(
                &fx.euclid3,
                &ChartPoint::new(GLOBAL, [1.0, 0.0, -1.0]),
                &[0.5, 2.0, -1.0],
                (0.0, 1.0),
                400,
                &policy,
            )?,
        ),
        (
            "sphere equator".to_string(),
            fx.sphere.clone(),
            integrate(
                &fx.sphere,
                &ChartPoint::new(NORTH, [1.0, 0.0]),
                &[0.0, 1.0],
                (0.0, TAU),
                1000,
                &policy,
            )?,
        ),
        (
            "sphere meridian".to_string(),
            fx.sphere.clone(),
            integrate(
                &fx.sphere,
                &ChartPoint::new(NORTH, [0.0, 0.0]),
                &[0.5, 0.0],
                (0.0, TAU),
                2000,
                &policy,
            )?,
        ),
    ];
    for i in 0..3 {
        let chart = if i % 2 == 0 { NORTH } else { SOUTH };
        let x = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        let v: Vec<f64> = unit_vec(rng, 2).iter().map(|c| c * rng.gen_range(0.5..2.5)).collect();
        for field in [&fx.sphere, &fx.pullback] {
            out.push((
                format!("random geodesic {i} ({:?})", field.kind()),
                field.clone(),
                integrate(field, &ChartPoint::new(chart, x), &v, (0.0, 1.0), 400, &policy)?,
            ));
        }
    }
    Ok(out)
}

fn speed_drift(field: &MetricField, c: &DiscreteCurve) -> Result<f64> {
    let s0 = field.norm(&c.first().base, &c.first().velocity)?;
    let mut worst: f64 = 0.0;
    for s in c.samples() {
        worst = worst.max((field.norm(&s.state.base, &s.state.velocity)? - s0).abs());
    }
    Ok(worst / s0)
}

fn check_speed_conservation(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (_, field, c) in geodesic_corpus(fx, rng)? {
        worst = worst.max(speed_drift(&field, &c)?);
    }
    Ok(verdict(worst, 1e-6, "max relative speed drift"))
}

fn check_residual_certification(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (_, field, c) in geodesic_corpus(fx, rng)? {
        worst = worst.max(residual(&field, &c)?);
        count += 1;
    }
    let (ok, d) = verdict(worst, 1e-4, "max residual");
    Ok((ok, format!("{d} over {count} geodesics")))
}

fn check_restriction(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    for (_, field, c) in geodesic_corpus(fx, rng)? {
        let n = c.len();
        for _ in 0..8 {
            let a = rng.gen_range(0..n - 10);
            let b = rng.gen_range(a + 9..n);
            let part = c.slice(a, b)?;
            if part.segments().iter().any(|s| s.len() < 5) {
                continue;
            }
            worst = worst.max(residual(&field, &part)?);
            tested += 1;
        }
    }
    let (ok, d) = verdict(worst, 1e-4, "max sub-range residual");
    Ok((ok && tested > 0, format!("{d} over {tested} sub-ranges")))
}

fn check_homogeneity(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let policy = ChartSwitchPolicy::default();
    let mut worst: f64 = 0.0;
    for field in [&fx.sphere, &fx.euclid2] {
        for _ in 0..3 {
            let chart = field.atlas().chart_ids()[0];
            let p = ChartPoint::new(chart, [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            let v = unit_vec(rng, 2);
            let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
            let a = exp_map(field, &p, &v2, 500, &policy)?;
            let b = integrate(field, &p, &v, (0.0, 2.0), 500, &policy)?.last().base.clone();
            let gap = if field.atlas().has_embedding() {
                norm(&sub(&field.atlas().embed(&a)?, &field.atlas().embed(&b)?))
            } else {
                norm(&sub(&a.coords, &b.coords))
            };
            worst = worst.max(gap);
        }
    }
    Ok(verdict(worst, 1e-8, "max endpoint gap"))
}

/// Seeded non-antipodal point pairs on the unit sphere.
pub fn sphere_pairs(rng: &mut ChaCha8Rng, count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (a, b) = (unit_vec(rng, 3), unit_vec(rng, 3));
        if dot(&a, &b) > -1.0 + 1e-3 && norm(&sub(&a, &b)) > 1e-3 {
            out.push((a, b));
        }
    }
    out
}

fn check_shooting(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let field = &fx.sphere;
    let atlas = field.atlas();
    let cfg = ShootConfig::default();
    let policy = ChartSwitchPolicy::default();
    let q = QuadratureConfig::default();
    let (mut len_err, mut res, mut end_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (a, b) in sphere_pairs(rng, 20) {
        let p = atlas.locate(&a, 1.0)?;
        let target = atlas.locate(&b, 1.0)?;
        let (_, c) = shoot(field, &p, &target, &cfg, &policy)?;
        len_err = len_err.max((length(field, &c, &q)? - dot(&a, &b).clamp(-1.0, 1.0).acos()).abs());
        res = res.max(residual(field, &c)?);
        end_err = end_err.max(norm(&sub(&atlas.embed(&c.last().base)?, &atlas.embed(&target)?)));
    }
    let (_, c) = shoot(
        &fx.euclid2,
        &ChartPoint::new(GLOBAL, [0.0, 0.0]),
        &ChartPoint::new(GLOBAL, [3.0, 4.0]),
        &cfg,
        &policy,
    )?;
    end_err = end_err.max(norm(&sub(&c.last().base.coords, &[3.0, 4.0])));
    res = res.max(residual(&fx.euclid2, &c)?);
    let ok = len_err <= 1e-6 && res <= 1e-4 && end_err <= cfg.tolerance;
    Ok((
        ok,
        format!("20 sphere pairs: length error {len_err:.3e}, residual {res:.3e}, endpoint error {end_err:.3e}"),
    ))
}

/// Max pointwise embedded distance between meridian runs with two switch radii,
/// and the max jump across recorded switches.
pub fn chart_switch_gaps(field: &MetricField, radii: (f64, f64), steps: usize) -> Result<(f64, f64, usize)> {
    let atlas = field.atlas();
    let run = |r: f64| {
        integrate(
            field,
            &ChartPoint::new(NORTH, [0.0, 0.0]),
            &[0.5, 0.0],
            (0.0, TAU),
            steps,
            &ChartSwitchPolicy::new(r)?,
        )
    };
    let (a, b) = (run(radii.0)?, run(radii.1)?);
    let mut pointwise: f64 = 0.0;
    for (x, y) in a.samples().iter().zip(b.samples()) {
        pointwise = pointwise.max(norm(&sub(&atlas.embed(&x.state.base)?, &atlas.embed(&y.state.base)?)));
    }
    let mut jump: f64 = 0.0;
    let mut switches = 0;
    for c in [&a, &b] {
        for sw in c.switches() {
            let s = &c.samples()[sw.index];
            let before = atlas.embed(&s.incoming.as_ref().expect("switch keeps its left state").base)?;
            jump = jump.max(norm(&sub(&before, &atlas.embed(&s.state.base)?)));
            switches += 1;
        }
    }
    Ok((pointwise, jump, switches))
}

fn check_chart_switch(fx: &Fixtures, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let (pointwise, jump, switches) = chart_switch_gaps(&fx.sphere, (1.5, 3.0), 2000)?;
    let ok = pointwise <= 1e-6 && jump <= 1e-6 && switches > 0;
    Ok((
        ok,
        format!("pointwise gap {pointwise:.3e}, switch jump {jump:.3e}, {switches} switches"),
    ))
}

fn random_bumps(rng: &mut ChaCha8Rng, domain: (f64, f64), n: usize, d: usize) -> Result<Vec<BumpPerturbation>> {
    let span = domain.1 - domain.0;
    (0..n)
        .map(|_| {
            let width = span * rng.gen_range(0.2..0.6);
            let lo = domain.0 + width / 2.0 + 1e-3 * span;
            let hi = domain.1 - width / 2.0 - 1e-3 * span;
            let c = rng.gen_range(lo..hi);
            BumpPerturbation::new(domain, c, width, unit_vec(rng, d))
        })
        .collect()
}

fn check_stationarity_views(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let e = &fx.euclid2;
    let q = QuadratureConfig::new(2048)?;
    let bumps = random_bumps(rng, (0.0, 1.0), 10, 2)?;
    let line = AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(GLOBAL, [1.0 - 2.0 * t, 0.5 + t]))?
        .with_velocity(|_| vec![-2.0, 1.0]);
    let parabola =
        AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(GLOBAL, [t, t * t]))?.with_velocity(|t| vec![1.0, 2.0 * t]);
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, curve, stationary) in [("line", line, true), ("parabola", parabola, false)] {
        let mut dv: f64 = 0.0;
        for b in &bumps {
            dv = dv.max(first_variation(e, &curve, b, Functional::Energy, DEFAULT_ALPHA_STEP, &q)?.abs());
        }
        let mut el: f64 = 0.0;
        for i in 1..20 {
            let r = euler_lagrange_residual(e, &curve, Functional::Energy, i as f64 / 20.0)?;
            el = el.max(r.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        }
        ok &= (dv <= 1e-4) == stationary && (el <= 1e-3) == stationary;
        parts.push(format!("{name}: max |dE| {dv:.3e}, max EL {el:.3e}"));
    }
    Ok((ok, parts.join("; ")))
}

fn check_unit_speed_stationarity(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let m = &fx.sphere;
    let q = QuadratureConfig::new(2048)?;
    let p = ChartPoint::new(NORTH, [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]);
    let v = unit_vec(rng, 2);
    let n = m.norm(&p, &v)?;
    let v: Vec<f64> = v.iter().map(|c| c / n).collect();
    let c = integrate(m, &p, &v, (0.0, 1.0), 1000, &ChartSwitchPolicy::default())?;
    let mut worst: f64 = 0.0;
    for eta in random_bumps(rng, (0.0, 1.0), 5, 2)? {
        for f in [Functional::Length, Functional::Energy] {
            worst = worst.max(first_variation(m, &c, &eta, f, DEFAULT_ALPHA_STEP, &q)?.abs());
        }
    }
    Ok(verdict(worst, 1e-4, "max |first variation| (length and energy)"))
}

fn check_variation_convergence(fx: &Fixtures, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let m = &fx.sphere;
    let q = QuadratureConfig::new(1024)?;
    let c = AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(NORTH, [0.2 + t, 0.5 * t * t]))?
        .with_velocity(|t| vec![1.0, t]);
    let mut ok = true;
    let mut worst_ratio: f64 = 0.0;
    for eta in random_bumps(rng, (0.0, 1.0), 4, 2)? {
        let d = |a: f64| first_variation(m, &c, &eta, Functional::Energy, a, &q);
        let (d1, d2, d3) = (d(1e-2)?, d(5e-3)?, d(2.5e-3)?);
        let (c1, c2) = ((d2 - d1).abs(), (d3 - d2).abs());
        ok &= c2 <= 4.0 * c1;
        if c1 > 0.0 {
            worst_ratio = worst_ratio.max(c2 / c1);
        }
    }
    Ok((ok, format!("max change ratio under halving {worst_ratio:.3} (limit 4)")))
}

fn check_el_cross(fx: &Fixtures, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let m = &fx.sphere;
    let c = AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(SOUTH, [0.2 + t, 0.5 * t * t]))?
        .with_velocity(|t| vec![1.0, t]);
    let mut worst: f64 = 0.0;
    for i in 1..10 {
        let t = i as f64 / 10.0;
        let el = euler_lagrange_residual(m, &c, Functional::Energy, t)?;
        let s = c.state_at(t)?;
        let gv = m.christoffel_at(&s.base)?.contract(&s.velocity);
        let r = [gv[0], 1.0 + gv[1]];
        let want = m.metric_at(&s.base)?.mul_vec(&r);
        worst = worst.max((el[0] + want[0]).abs().max((el[1] + want[1]).abs()));
    }
    let (ok, d) = verdict(worst, 1e-3, "max |EL + G(x'' + G x'x')|");
    Ok((ok, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let report = run_suite(SuiteOptions::default());
        assert!(report.all_passed(), "{}", report.render());
    }

    #[test]
    fn planted_asymmetry_is_named() {
        let report = run_suite(SuiteOptions {
            asymmetry: Some(1e-3),
            ..SuiteOptions::default()
        });
        assert!(!report.all_passed());
        assert!(report.failures().iter().any(|o| o.name == "metric symmetry"));
    }
}
