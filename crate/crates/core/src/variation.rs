//! First variation of length and energy under compactly supported bumps, and
//! Euler-Lagrange residuals of the chart Lagrangians.

use crate::charts::{ChartPoint, TangentSample};
use crate::error::{Error, Result};
use crate::functionals::{energy, length, Curve, SegmentNodes};
use crate::metric::MetricField;
use crate::numerics::{integrate_scalar, FiniteDiffConfig, QuadratureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    Length,
    Energy,
}

/// Smooth bump `direction · exp(−1/(1−s²))`, `s = 2(λ−c)/w`, zero for `|s| ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpPerturbation {
    domain: (f64, f64),
    center: f64,
    width: f64,
    direction: Vec<f64>,
}

impl BumpPerturbation {
    pub fn new(domain: (f64, f64), center: f64, width: f64, direction: Vec<f64>) -> Result<Self> {
        let (a, b) = domain;
        if !(width > 0.0) || !(center - width / 2.0 > a) || !(center + width / 2.0 < b) {
            return Err(Error::InvalidInput(format!(
                "bump centered at {center} with width {width} must lie strictly inside ({a}, {b})"
            )));
        }
        if direction.is_empty() || direction.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("bump direction must be a finite tuple".into()));
        }
        Ok(Self {
            domain,
            center,
            width,
            direction,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.width / 2.0, self.center + self.width / 2.0)
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    fn profile(&self, lambda: f64) -> (f64, f64) {
        let s = 2.0 * (lambda - self.center) / self.width;
        if s.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let q = 1.0 - s * s;
        let f = (-1.0 / q).exp();
        let df = f * (-2.0 * s / (q * q)) * (2.0 / self.width);
        (f, df)
    }

    pub fn value(&self, lambda: f64) -> Vec<f64> {
        let (f, _) = self.profile(lambda);
        self.direction.iter().map(|d| d * f).collect()
    }

    pub fn derivative(&self, lambda: f64) -> Vec<f64> {
        let (_, df) = self.profile(lambda);
        self.direction.iter().map(|d| d * df).collect()
    }
}

/// `γ₀ + α·η`, added pointwise in chart coordinates.
pub struct PerturbedCurve<'a, C: Curve + ?Sized> {
    base: &'a C,
    eta: &'a BumpPerturbation,
    alpha: f64,
    field: &'a MetricField,
}

impl<'a, C: Curve + ?Sized> PerturbedCurve<'a, C> {
    pub fn new(field: &'a MetricField, base: &'a C, eta: &'a BumpPerturbation, alpha: f64) -> Self {
        Self {
            base,
            eta,
            alpha,
            field,
        }
    }

    fn shift(&self, lambda: f64, s: TangentSample) -> Result<TangentSample> {
        let eta = self.eta.value(lambda);
        let deta = self.eta.derivative(lambda);
        if eta.len() != s.base.coords.len() {
            return Err(Error::InvalidInput("bump direction dimension mismatch".into()));
        }
        let coords: Vec<f64> = s
            .base
            .coords
            .iter()
            .zip(&eta)
            .map(|(x, e)| x + self.alpha * e)
            .collect();
        let velocity: Vec<f64> = s.velocity.iter().zip(&deta).map(|(v, e)| v + self.alpha * e).collect();
        let p = ChartPoint::new(s.base.chart, coords);
        if !self.field.atlas().contains(&p) {
            return Err(Error::ChartExit(format!(
                "perturbed point {:?} at lambda = {lambda} is outside {}",
                p.coords, p.chart
            )));
        }
        Ok(TangentSample::new(p, velocity))
    }
}

impl<C: Curve + ?Sized> Curve for PerturbedCurve<'_, C> {
    fn domain(&self) -> (f64, f64) {
        self.base.domain()
    }

    fn segment_nodes(&self, quad: &QuadratureConfig) -> Result<Vec<SegmentNodes>> {
        self.base
            .segment_nodes(quad)?
            .into_iter()
            .map(|nodes| nodes.into_iter().map(|(t, s)| Ok((t, self.shift(t, s)?))).collect())
            .collect()
    }

    fn state_at(&self, lambda: f64) -> Result<TangentSample> {
        self.shift(lambda, self.base.state_at(lambda)?)
    }

    fn derivative_step(&self, lambda: f64) -> f64 {
        self.base.derivative_step(lambda)
    }
}

fn require_single_chart<C: Curve + ?Sized>(curve: &C, quad: &QuadratureConfig) -> Result<()> {
    let segments = curve.segment_nodes(quad)?;
    let first = segments.first().and_then(|s| s.first()).map(|(_, s)| s.base.chart);
    if segments.iter().flatten().any(|(_, s)| Some(s.base.chart) != first) {
        return Err(Error::ChartExit("variations need a curve inside a single chart".into()));
    }
    Ok(())
}

fn evaluate<C: Curve + ?Sized>(
    field: &MetricField,
    curve: &C,
    functional: Functional,
    quad: &QuadratureConfig,
) -> Result<f64> {
    match functional {
        Functional::Length => length(field, curve, quad),
        Functional::Energy => energy(field, curve, quad),
    }
}

pub const DEFAULT_ALPHA_STEP: f64 = 1e-4;

/// `[F(γ₀ + αη) − F(γ₀ − αη)] / (2α)` at `α = alpha_step`.
pub fn first_variation<C: Curve + ?Sized>(
    field: &MetricField,
    curve: &C,
    eta: &BumpPerturbation,
    functional: Functional,
    alpha_step: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    if !(alpha_step > 0.0) {
        return Err(Error::InvalidInput(format!("alpha step must be > 0, got {alpha_step}")));
    }
    if eta.domain() != curve.domain() {
        return Err(Error::InvalidInput("bump domain differs from the curve domain".into()));
    }
    require_single_chart(curve, quad)?;
    let plus = evaluate(
        field,
        &PerturbedCurve::new(field, curve, eta, alpha_step),
        functional,
        quad,
    )?;
    let minus = evaluate(
        field,
        &PerturbedCurve::new(field, curve, eta, -alpha_step),
        functional,
        quad,
    )?;
    Ok((plus - minus) / (2.0 * alpha_step))
}

/// Central difference at `alpha_step` and `alpha_step/2`, combined by one
/// Richardson step.
pub fn first_variation_extrapolated<C: Curve + ?Sized>(
    field: &MetricField,
    curve: &C,
    eta: &BumpPerturbation,
    functional: Functional,
    alpha_step: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let coarse = first_variation(field, curve, eta, functional, alpha_step, quad)?;
    let fine = first_variation(field, curve, eta, functional, alpha_step / 2.0, quad)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// `√𝓡` (length) or `½𝓡` (energy) with `𝓡(x, v) = g_ij(x) vⁱ vʲ`.
#[derive(Clone, Copy)]
pub struct ChartLagrangian<'a> {
    pub kind: Functional,
    field: &'a MetricField,
}

impl<'a> ChartLagrangian<'a> {
    pub fn new(field: &'a MetricField, kind: Functional) -> Self {
        Self { kind, field }
    }

    pub fn eval(&self, chart: crate::charts::ChartId, x: &[f64], v: &[f64]) -> Result<f64> {
        let p = ChartPoint::new(chart, x);
        if !self.field.atlas().contains(&p) {
            return Err(Error::StencilOutOfDomain {
                chart,
                coords: x.to_vec(),
            });
        }
        let r = self.field.inner(&p, v, v)?;
        match self.kind {
            Functional::Energy => Ok(0.5 * r),
            Functional::Length => {
                if r <= 1e-18 {
                    return Err(Error::ZeroVelocity(format!(
                        "length Lagrangian at {x:?} with g(v,v) = {r:e}"
                    )));
                }
                Ok(r.sqrt())
            }
        }
    }

    /// `(∂L/∂x, ∂L/∂v)` by central differences.
    fn gradients(&self, s: &TangentSample, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let chart = s.base.chart;
        let x = &s.base.coords;
        let v = &s.velocity;
        let d = x.len();
        let mut dx = vec![0.0; d];
        let mut dv = vec![0.0; d];
        let mut xp = x.clone();
        let mut vp = v.clone();
        for n in 0..d {
            xp[n] = x[n] + h;
            let a = self.eval(chart, &xp, v)?;
            xp[n] = x[n] - h;
            let b = self.eval(chart, &xp, v)?;
            xp[n] = x[n];
            dx[n] = (a - b) / (2.0 * h);
            vp[n] = v[n] + h;
            let a = self.eval(chart, x, &vp)?;
            vp[n] = v[n] - h;
            let b = self.eval(chart, x, &vp)?;
            vp[n] = v[n];
            dv[n] = (a - b) / (2.0 * h);
        }
        Ok((dx, dv))
    }
}

/// Component `n`: `∂ₙL − d/dλ ∂_{d+n}L` along the curve at `lambda`.
pub fn euler_lagrange_residual<C: Curve + ?Sized>(
    field: &MetricField,
    curve: &C,
    kind: Functional,
    lambda: f64,
) -> Result<Vec<f64>> {
    let (a, b) = curve.domain();
    let step = curve.derivative_step(lambda);
    if !(lambda - step >= a && lambda + step <= b) {
        return Err(Error::InvalidInput(format!(
            "lambda = {lambda} is too close to the ends of [{a}, {b}]"
        )));
    }
    let lag = ChartLagrangian::new(field, kind);
    let h = FiniteDiffConfig::default().step();
    let here = curve.state_at(lambda)?;
    if kind == Functional::Length && field.norm(&here.base, &here.velocity)? <= 1e-9 {
        return Err(Error::ZeroVelocity(format!("speed vanishes at lambda = {lambda}")));
    }
    let ahead = curve.state_at(lambda + step)?;
    let behind = curve.state_at(lambda - step)?;
    if ahead.base.chart != here.base.chart || behind.base.chart != here.base.chart {
        return Err(Error::ChartExit(format!(
            "chart changes near lambda = {lambda}; residuals need one chart"
        )));
    }
    let (dx, _) = lag.gradients(&here, h)?;
    let (_, p_ahead) = lag.gradients(&ahead, h)?;
    let (_, p_behind) = lag.gradients(&behind, h)?;
    Ok((0..dx.len())
        .map(|n| dx[n] - (p_ahead[n] - p_behind[n]) / (2.0 * step))
        .collect())
}

/// `max_η |∫ Σᵢ Lᵢ ηᵢ dλ|` over the probe bumps.
pub fn fundamental_lemma_probe<L>(residual: L, basis: &[BumpPerturbation], quad: &QuadratureConfig) -> Result<f64>
where
    L: Fn(f64) -> Result<Vec<f64>>,
{
    if basis.is_empty() {
        return Err(Error::InvalidInput("probe basis is empty".into()));
    }
    let mut worst: f64 = 0.0;
    for eta in basis {
        let (lo, hi) = eta.support();
        let failure = std::cell::RefCell::new(None);
        let value = integrate_scalar(
            |t| match residual(t) {
                Ok(l) => l.iter().zip(eta.value(t)).map(|(a, b)| a * b).sum(),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            lo,
            hi,
            quad,
        )?;
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        worst = worst.max(value.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::{euclidean_atlas, sphere_atlas, GLOBAL, NORTH};
    use crate::functionals::{sample, AnalyticCurve};
    use crate::geodesic::{integrate, residual, ChartSwitchPolicy};
    use crate::metric::{euclidean_metric, sphere_metric};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, TAU};
    use std::sync::Arc;

    /// `∫_{-1}^{1} exp(−1/(1−s²)) ds`.
    const BUMP_INTEGRAL: f64 = 0.443_993_816_168_079_4;

    fn euclid() -> MetricField {
        euclidean_metric(&Arc::new(euclidean_atlas(2).unwrap())).unwrap()
    }

    fn sphere() -> MetricField {
        sphere_metric(&Arc::new(sphere_atlas())).unwrap()
    }

    fn q() -> QuadratureConfig {
        QuadratureConfig::new(2048).unwrap()
    }

    fn line() -> AnalyticCurve {
        AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(GLOBAL, [3.0 * t, 4.0 * t]))
            .unwrap()
            .with_velocity(|_| vec![3.0, 4.0])
    }

    fn parabola() -> AnalyticCurve {
        AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(GLOBAL, [t, t * t]))
            .unwrap()
            .with_velocity(|t| vec![1.0, 2.0 * t])
    }

    fn quarter_circle() -> AnalyticCurve {
        AnalyticCurve::new(0.0, 1.0, |t| {
            let a = FRAC_PI_2 * t;
            ChartPoint::new(GLOBAL, [a.cos(), a.sin()])
        })
        .unwrap()
        .with_velocity(|t| {
            let a = FRAC_PI_2 * t;
            vec![-FRAC_PI_2 * a.sin(), FRAC_PI_2 * a.cos()]
        })
    }

    fn random_bumps(seed: u64, domain: (f64, f64), n: usize) -> Vec<BumpPerturbation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let span = domain.1 - domain.0;
        (0..n)
            .map(|_| {
                let width = span * rng.gen_range(0.2..0.6);
                let lo = domain.0 + width / 2.0 + 1e-3 * span;
                let hi = domain.1 - width / 2.0 - 1e-3 * span;
                let c = rng.gen_range(lo..hi);
                let dir = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                BumpPerturbation::new(domain, c, width, dir).unwrap()
            })
            .collect()
    }

    #[test]
    fn bump_vanishes_outside_support() {
        let b = BumpPerturbation::new((0.0, 1.0), 0.5, 0.4, vec![1.0, -2.0]).unwrap();
        assert_eq!(b.value(0.0), vec![0.0, 0.0]);
        assert_eq!(b.value(1.0), vec![0.0, 0.0]);
        assert_eq!(b.value(0.3), vec![0.0, 0.0]);
        assert!((b.value(0.5)[0] - (-1.0f64).exp()).abs() < 1e-15);
        let h = 1e-6;
        for t in [0.35, 0.45, 0.6, 0.68] {
            let fd = (b.value(t + h)[1] - b.value(t - h)[1]) / (2.0 * h);
            assert!((fd - b.derivative(t)[1]).abs() < 1e-6);
        }
        assert!(BumpPerturbation::new((0.0, 1.0), 0.1, 0.4, vec![1.0]).is_err());
    }

    #[test]
    fn straight_line_is_stationary() {
        let e = euclid();
        for eta in random_bumps(1, (0.0, 1.0), 5) {
            for f in [Functional::Energy, Functional::Length] {
                let dv = first_variation(&e, &line(), &eta, f, DEFAULT_ALPHA_STEP, &q()).unwrap();
                assert!(dv.abs() <= 1e-6, "{f:?} {dv}");
            }
        }
    }

    #[test]
    fn quarter_circle_is_not_stationary() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let eta = BumpPerturbation::new((0.0, 1.0), 0.5, 0.8, vec![s, s]).unwrap();
        let dv = first_variation(
            &euclid(),
            &quarter_circle(),
            &eta,
            Functional::Energy,
            DEFAULT_ALPHA_STEP,
            &q(),
        )
        .unwrap();
        assert!(dv > 1e-3);
        // oracle: δE = ∫ ⟨γ', η'⟩ = (π/2)² ∫ ⟨γ, η⟩ by parts
        let oracle = integrate_scalar(
            |t| {
                let a = FRAC_PI_2 * t;
                FRAC_PI_2 * FRAC_PI_2 * (a.cos() * eta.value(t)[0] + a.sin() * eta.value(t)[1])
            },
            0.1,
            0.9,
            &QuadratureConfig::new(2048).unwrap(),
        )
        .unwrap();
        assert!((dv - oracle).abs() <= 1e-6, "{dv} vs {oracle}");
    }

    #[test]
    fn variation_convergence_in_alpha() {
        let eta = BumpPerturbation::new((0.0, 1.0), 0.4, 0.5, vec![0.3, 1.0]).unwrap();
        let m = sphere();
        let c = AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(NORTH, [0.2 + t, 0.5 * t * t]))
            .unwrap()
            .with_velocity(|t| vec![1.0, t]);
        let d = |a: f64| first_variation(&m, &c, &eta, Functional::Energy, a, &q()).unwrap();
        let (d1, d2, d3) = (d(1e-2), d(5e-3), d(2.5e-3));
        assert!((d3 - d2).abs() <= 4.0 * (d2 - d1).abs());
        let r = first_variation_extrapolated(&m, &c, &eta, Functional::Energy, 1e-2, &q()).unwrap();
        assert!((r - d3).abs() <= (d3 - d1).abs());
    }

    #[test]
    fn sphere_geodesic_is_stationary() {
        let m = sphere();
        let c = integrate(
            &m,
            &ChartPoint::new(NORTH, [0.3, 0.2]),
            &[0.8, -0.5],
            (0.0, 1.0),
            1000,
            &ChartSwitchPolicy::default(),
        )
        .unwrap();
        assert!(c.switches().is_empty());
        for eta in random_bumps(3, (0.0, 1.0), 10) {
            let dv = first_variation(&m, &c, &eta, Functional::Energy, DEFAULT_ALPHA_STEP, &q()).unwrap();
            assert!(dv.abs() <= 1e-4, "{dv}");
        }
    }

    #[test]
    fn chart_exit_is_reported() {
        let m = sphere();
        let c = integrate(
            &m,
            &ChartPoint::new(NORTH, [0.0, 0.0]),
            &[0.5, 0.0],
            (0.0, 2.8),
            400,
            &ChartSwitchPolicy::default(),
        )
        .unwrap();
        assert!(!c.switches().is_empty());
        let eta = BumpPerturbation::new((0.0, 2.8), 1.4, 1.0, vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            first_variation(&m, &c, &eta, Functional::Energy, DEFAULT_ALPHA_STEP, &q()),
            Err(Error::ChartExit(_))
        ));
    }

    #[test]
    fn euler_lagrange_examples() {
        let e = euclid();
        let r = euler_lagrange_residual(&e, &line(), Functional::Energy, 0.5).unwrap();
        assert!(r.iter().all(|x| x.abs() <= 1e-6));
        let r = euler_lagrange_residual(&e, &parabola(), Functional::Energy, 0.5).unwrap();
        assert!(r[0].abs() <= 1e-4 && (r[1] + 2.0).abs() <= 1e-4, "{r:?}");

        let equator = AnalyticCurve::new(0.0, TAU, |t| ChartPoint::new(NORTH, [t.cos(), t.sin()]))
            .unwrap()
            .with_velocity(|t| vec![-t.sin(), t.cos()]);
        for t in [0.5, 2.0, 4.0] {
            let r = euler_lagrange_residual(&sphere(), &equator, Functional::Energy, t).unwrap();
            assert!(r.iter().all(|x| x.abs() <= 1e-4), "{r:?}");
        }

        let k = AnalyticCurve::new(0.0, 1.0, |_| ChartPoint::new(GLOBAL, [1.0, 1.0])).unwrap();
        assert!(matches!(
            euler_lagrange_residual(&e, &k, Functional::Length, 0.5),
            Err(Error::ZeroVelocity(_))
        ));
    }

    #[test]
    fn euler_lagrange_matches_geodesic_residual() {
        // EL(energy) = −G (γ'' + Γ γ' γ')
        let m = sphere();
        let c = AnalyticCurve::new(0.0, 1.0, |t| ChartPoint::new(NORTH, [0.2 + t, 0.5 * t * t]))
            .unwrap()
            .with_velocity(|t| vec![1.0, t]);
        for t in [0.2, 0.5, 0.8] {
            let el = euler_lagrange_residual(&m, &c, Functional::Energy, t).unwrap();
            let s = c.state_at(t).unwrap();
            let gam = m.christoffel_at(&s.base).unwrap().contract(&s.velocity);
            let acc = [0.0, 1.0];
            let r: Vec<f64> = (0..2).map(|k| acc[k] + gam[k]).collect();
            let g = m.metric_at(&s.base).unwrap();
            let want = g.mul_vec(&r);
            for k in 0..2 {
                assert!((el[k] + want[k]).abs() <= 1e-3, "{el:?} vs {want:?}");
            }
        }
        let d = sample(&c, 401).unwrap();
        assert!(residual(&m, &d).unwrap() > 0.1);
    }

    #[test]
    fn stationarity_views_agree() {
        let e = euclid();
        let bumps = random_bumps(9, (0.0, 1.0), 10);
        for (curve, stationary) in [(line(), true), (parabola(), false)] {
            let max_dv = bumps
                .iter()
                .map(|b| {
                    first_variation(&e, &curve, b, Functional::Energy, DEFAULT_ALPHA_STEP, &q())
                        .unwrap()
                        .abs()
                })
                .fold(0.0, f64::max);
            let max_el = (1..20)
                .map(|i| {
                    let r = euler_lagrange_residual(&e, &curve, Functional::Energy, i as f64 / 20.0).unwrap();
                    r.iter().fold(0.0f64, |m, x| m.max(x.abs()))
                })
                .fold(0.0, f64::max);
            assert_eq!(max_dv <= 1e-4, stationary);
            assert_eq!(max_el <= 1e-3, stationary);
        }
    }

    #[test]
    fn unit_speed_geodesic_stationary_for_both_functionals() {
        let m = sphere();
        let p = ChartPoint::new(NORTH, [0.4, -0.1]);
        let v = [1.0, 0.5];
        let n = m.norm(&p, &v).unwrap();
        let v = [v[0] / n, v[1] / n];
        let c = integrate(&m, &p, &v, (0.0, 1.0), 1000, &ChartSwitchPolicy::default()).unwrap();
        for eta in random_bumps(5, (0.0, 1.0), 4) {
            for f in [Functional::Length, Functional::Energy] {
                let dv = first_variation(&m, &c, &eta, f, DEFAULT_ALPHA_STEP, &q()).unwrap();
                assert!(dv.abs() <= 1e-4, "{f:?} {dv}");
            }
        }
    }

    #[test]
    fn fundamental_lemma_examples() {
        let basis = random_bumps(2, (0.0, 1.0), 4);
        assert_eq!(
            fundamental_lemma_probe(|_| Ok(vec![0.0, 0.0]), &basis, &q()).unwrap(),
            0.0
        );

        let eta = BumpPerturbation::new((0.0, 1.0), 0.5, 0.6, vec![1.0, 0.0]).unwrap();
        let v = fundamental_lemma_probe(|_| Ok(vec![1.0, 0.0]), std::slice::from_ref(&eta), &q()).unwrap();
        assert!((v - 0.3 * BUMP_INTEGRAL).abs() <= 1e-9, "{v}");

        let e = euclid();
        let l = line();
        let v = fundamental_lemma_probe(
            |t| euler_lagrange_residual(&e, &l, Functional::Energy, t.clamp(0.01, 0.99)),
            &basis,
            &q(),
        )
        .unwrap();
        assert!(v <= 1e-6);
        assert!(fundamental_lemma_probe(|_| Ok(vec![1.0]), &[], &q()).is_err());
    }
}
