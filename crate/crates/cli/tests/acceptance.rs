//! Acceptance criteria 1 through 9, one report line each.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use chartgeo::charts::{euclidean_atlas, sphere_atlas, ChartPoint, GLOBAL, NORTH, SOUTH};
use chartgeo::check::{chart_switch_gaps, conformal_christoffel, curve_corpus, sphere_pairs, Fixtures, DEFAULT_SEED};
use chartgeo::functionals::{energy, length, speed, AnalyticCurve, DiscreteCurve};
use chartgeo::geodesic::{integrate, residual, shoot, ChartSwitchPolicy, ShootConfig};
use chartgeo::metric::{euclidean_metric, pullback_metric, sphere_metric, MetricField};
use chartgeo::numerics::{FiniteDiffConfig, QuadratureConfig};
use chartgeo::variation::{first_variation, BumpPerturbation, Functional, DEFAULT_ALPHA_STEP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = chartgeo::Result<(bool, String)>;
type Criterion = (&'static str, fn() -> Verdict);

fn euclid(d: usize) -> MetricField {
    euclidean_metric(&Arc::new(euclidean_atlas(d).unwrap())).unwrap()
}

fn sphere() -> MetricField {
    sphere_metric(&Arc::new(sphere_atlas())).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

fn straight_lines() -> Verdict {
    let field = euclid(2);
    let start = Instant::now();
    let c = integrate(
        &field,
        &ChartPoint::new(GLOBAL, [0.0, 0.0]),
        &[1.0, 2.0],
        (0.0, 1.0),
        100,
        &ChartSwitchPolicy::default(),
    )?;
    let end = dist(&c.last().base.coords, &[1.0, 2.0]);
    let r = residual(&field, &c)?;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        end <= 1e-10 && r <= 1e-10 && secs < 0.1,
        format!("endpoint error {end:.2e}, residual {r:.2e}, {secs:.4} s"),
    ))
}

fn great_circle_distance() -> Verdict {
    let field = sphere();
    let atlas = field.atlas();
    let cfg = ShootConfig::default();
    let policy = ChartSwitchPolicy::default();
    let quad = QuadratureConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut pairs = vec![(vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0])];
    pairs.extend(sphere_pairs(&mut rng, 20));
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (a, b) in &pairs {
        let p = atlas.locate(a, 1.0)?;
        let q = atlas.locate(b, 1.0)?;
        let (_, c) = shoot(&field, &p, &q, &cfg, &policy)?;
        let oracle = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0).acos();
        worst = worst.max((length(&field, &c, &quad)? - oracle).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-6 && secs < 5.0,
        format!("{} pairs, max length error {worst:.2e}, {secs:.2} s", pairs.len()),
    ))
}

fn christoffel_correctness() -> Verdict {
    let atlas = Arc::new(sphere_atlas());
    let pullback = pullback_metric(&atlas, FiniteDiffConfig::default())?;
    let half = 2.0 / 2f64.sqrt();
    let mut closed: f64 = 0.0;
    for i in 0..9 {
        for j in 0..9 {
            let x = [-half + 2.0 * half * i as f64 / 8.0, -half + 2.0 * half * j as f64 / 8.0];
            let g = pullback.christoffel_at(&ChartPoint::new(NORTH, x))?;
            for k in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        closed = closed.max((g.get(k, a, b) - conformal_christoffel(&x, k, a, b)).abs());
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut contracted: f64 = 0.0;
    for _ in 0..50 {
        let p = ChartPoint::new(NORTH, [rng.gen_range(-1.4..1.4), rng.gen_range(-1.4..1.4)]);
        let v = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let a = pullback.christoffel_at(&p)?.contract(&v);
        let b = pullback.unsymmetrized_contraction(&p, &v)?;
        contracted = contracted.max(dist(&a, &b));
    }
    Ok((
        closed <= 1e-5 && contracted <= 1e-10,
        format!("grid deviation {closed:.2e}, contraction mismatch {contracted:.2e}"),
    ))
}

fn seeded_bumps(rng: &mut ChaCha8Rng, n: usize) -> Vec<BumpPerturbation> {
    (0..n)
        .map(|_| {
            let width = rng.gen_range(0.2..0.6);
            let center = rng.gen_range(width / 2.0 + 0.01..1.0 - width / 2.0 - 0.01);
            BumpPerturbation::new((0.0, 1.0), center, width, unit(rng, 2)).unwrap()
        })
        .collect()
}

fn stationarity() -> Verdict {
    let quad = QuadratureConfig::new(2048)?;
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let bumps = seeded_bumps(&mut rng, 10);
    let s = sphere();
    let geo = integrate(
        &s,
        &ChartPoint::new(NORTH, [0.2, -0.1]),
        &[0.6, 0.3],
        (0.0, 1.0),
        1000,
        &ChartSwitchPolicy::default(),
    )?;
    let mut on_geodesic: f64 = 0.0;
    for b in &bumps {
        on_geodesic =
            on_geodesic.max(first_variation(&s, &geo, b, Functional::Energy, DEFAULT_ALPHA_STEP, &quad)?.abs());
    }
    let e = euclid(2);
    let arc = AnalyticCurve::new(0.0, 1.0, |t| {
        ChartPoint::new(GLOBAL, [(FRAC_PI_2 * t).cos(), (FRAC_PI_2 * t).sin()])
    })?
    .with_velocity(|t| vec![-FRAC_PI_2 * (FRAC_PI_2 * t).sin(), FRAC_PI_2 * (FRAC_PI_2 * t).cos()]);
    let radial = BumpPerturbation::new((0.0, 1.0), 0.5, 0.5, vec![FRAC_PI_4.cos(), FRAC_PI_4.sin()])?;
    let mut on_arc: f64 = 0.0;
    for b in bumps.iter().chain([&radial]) {
        on_arc = on_arc.max(first_variation(&e, &arc, b, Functional::Energy, DEFAULT_ALPHA_STEP, &quad)?.abs());
    }
    Ok((
        on_geodesic <= 1e-4 && on_arc > 1e-3,
        format!("geodesic max |dE| {on_geodesic:.2e}, quarter circle max |dE| {on_arc:.2e}"),
    ))
}

fn cauchy_schwarz() -> Verdict {
    let fx = Fixtures::new(None)?;
    let quad = QuadratureConfig::new(1024)?;
    let (mut excess, mut equality) = (f64::NEG_INFINITY, 0.0f64);
    let corpus = curve_corpus(&fx)?;
    for c in &corpus {
        let (a, b) = c.curve.domain();
        let l = length(&c.field, c.curve.as_ref(), &quad)?;
        let gap = l * l - 2.0 * (b - a) * energy(&c.field, c.curve.as_ref(), &quad)?;
        excess = excess.max(gap);
        if c.constant_speed {
            equality = equality.max(gap.abs());
        }
    }
    Ok((
        excess <= 1e-8 && equality <= 1e-8,
        format!(
            "{} curves, max L^2 - 2(b-a)E {excess:.2e}, constant-speed gap {equality:.2e}",
            corpus.len()
        ),
    ))
}

fn integrated_geodesics() -> chartgeo::Result<Vec<(MetricField, DiscreteCurve)>> {
    let policy = ChartSwitchPolicy::default();
    let (e, s) = (euclid(2), sphere());
    let runs = [
        (&e, ChartPoint::new(GLOBAL, [0.0, 0.0]), vec![1.0, 2.0], 1.0),
        (&e, ChartPoint::new(GLOBAL, [-1.0, 3.0]), vec![0.5, -4.0], 2.0),
        (&s, ChartPoint::new(NORTH, [0.0, 0.0]), vec![0.5, 0.0], 3.0),
        (&s, ChartPoint::new(NORTH, [0.3, -0.2]), vec![0.2, 0.7], 4.0),
        (&s, ChartPoint::new(SOUTH, [1.1, 0.4]), vec![-0.3, 0.4], 2.5),
        (&s, ChartPoint::new(NORTH, [1.0, 0.0]), vec![0.0, 1.0], 2.0 * PI),
    ];
    runs.into_iter()
        .map(|(f, p, v, t1)| Ok((f.clone(), integrate(f, &p, &v, (0.0, t1), 200, &policy)?)))
        .collect()
}

fn speed_and_restriction() -> Verdict {
    let geodesics = integrated_geodesics()?;
    let mut drift: f64 = 0.0;
    let mut sub: f64 = 0.0;
    let (mut tested, mut skipped, mut switches) = (0usize, 0usize, 0usize);
    for (field, c) in &geodesics {
        switches += c.switches().len();
        let s0 = speed(field, c, c.samples()[0].lambda)?;
        for s in c.samples() {
            drift = drift.max((speed(field, c, s.lambda)? - s0).abs() / s0);
        }
        let n = c.len();
        for a in 0..n {
            for b in a + 4..n {
                let part = c.slice(a, b)?;
                if part.segments().iter().any(|seg| seg.len() < 5) {
                    skipped += 1;
                    continue;
                }
                sub = sub.max(residual(field, &part)?);
                tested += 1;
            }
        }
    }
    Ok((
        drift <= 1e-6 && sub <= 1e-4 && tested > 0 && switches > 0,
        format!(
            "{} geodesics ({switches} chart switches), speed drift {drift:.2e}, max sub-range residual {sub:.2e} over {tested} sub-ranges ({skipped} too short around a switch)",
            geodesics.len()
        ),
    ))
}

fn chart_switch_robustness() -> Verdict {
    let (pointwise, jump, switches) = chart_switch_gaps(&sphere(), (1.5, 3.0), 2000)?;
    Ok((
        pointwise <= 1e-6 && jump <= 1e-6 && switches > 0,
        format!("pointwise gap {pointwise:.2e}, jump {jump:.2e}, {switches} switches"),
    ))
}

fn reparametrization() -> Verdict {
    let e = euclid(2);
    let quad = QuadratureConfig::default();
    let line =
        AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(GLOBAL, [t, -2.0 * t]))?.with_velocity(|_| vec![1.0, -2.0]);
    let k = 1.0 / (1f64.exp() - 1.0);
    let warped = AnalyticCurve::new(0.0, 1.0, move |s| {
        let t = k * (s.exp() - 1.0);
        ChartPoint::new(GLOBAL, [t, -2.0 * t])
    })?
    .with_velocity(move |s| vec![k * s.exp(), -2.0 * k * s.exp()]);
    let dl = (length(&e, &line, &quad)? - length(&e, &warped, &quad)?).abs();
    let e0 = energy(&e, &line, &quad)?;
    let de = (energy(&e, &warped, &quad)? - e0).abs() / e0;
    Ok((
        dl <= 1e-6 && de > 0.01,
        format!("length change {dl:.2e}, relative energy change {de:.3}"),
    ))
}

fn check_command() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_chartgeo");
    let start = Instant::now();
    let clean = Command::new(bin).arg("check").output().expect("binary runs");
    let secs = start.elapsed().as_secs_f64();
    let planted = Command::new(bin)
        .args(["check", "--inject-asymmetry", "1e-3"])
        .output()
        .expect("binary runs");
    let report = String::from_utf8_lossy(&planted.stdout);
    let named = report
        .lines()
        .any(|l| l.contains("metric symmetry") && l.contains("FAIL"));
    Ok((
        clean.status.code() == Some(0) && secs < 30.0 && planted.status.code() == Some(1) && named,
        format!(
            "default run exit {:?} in {secs:.2} s; planted defect exit {:?}, symmetry named: {named}",
            clean.status.code(),
            planted.status.code()
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("euclidean geodesics are straight lines", straight_lines),
        ("sphere great-circle distance", great_circle_distance),
        ("christoffel correctness", christoffel_correctness),
        ("stationarity", stationarity),
        ("cauchy-schwarz energy bound", cauchy_schwarz),
        ("speed conservation and restriction", speed_and_restriction),
        ("chart-switch robustness", chart_switch_robustness),
        ("reparametrization invariance", reparametrization),
        ("invariant suite end to end", check_command),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (ok, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name}: {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "{}/{} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
