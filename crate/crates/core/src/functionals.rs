//! Curves and the functionals evaluated on them: length, energy, angle and
//! speed, plus arc-length reparametrization.
//!
//! Two curve representations implement [`Curve`]:
//! - [`AnalyticCurve`], given by closures and sampled on demand;
//! - [`DiscreteCurve`], an ordered list of stored samples (integrator output,
//!   curve files). Its velocities are used as stored.
//!
//! Both may be piecewise smooth. Integrals are taken segment by segment
//! between break points and chart switches.

use std::fmt;
use std::sync::Arc;

use crate::charts::{ChartId, ChartPoint, TangentSample};
use crate::error::{Error, Result};
use crate::metric::MetricField;
use crate::numerics::{integrate_samples, QuadratureConfig};

/// Quadrature nodes of one smooth, single-chart piece of a curve.
pub type SegmentNodes = Vec<(f64, TangentSample)>;

pub trait Curve {
    fn domain(&self) -> (f64, f64);

    /// Nodes for every smooth segment, in order. Consecutive segments share
    /// their boundary parameter.
    fn segment_nodes(&self, quad: &QuadratureConfig) -> Result<Vec<SegmentNodes>>;

    /// Position and velocity at `lambda`; at a break point the right limit.
    fn state_at(&self, lambda: f64) -> Result<TangentSample>;

    /// Parameter step for central differences along the curve near `lambda`.
    fn derivative_step(&self, lambda: f64) -> f64;
}

/// One stored sample. `incoming` holds the left limit at a segment boundary:
/// the state in the previous chart at a chart switch, or the left velocity at a
/// break point.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub lambda: f64,
    pub state: TangentSample,
    pub incoming: Option<TangentSample>,
}

impl Sample {
    pub fn new(lambda: f64, state: TangentSample) -> Self {
        Self {
            lambda,
            state,
            incoming: None,
        }
    }

    pub fn chart(&self) -> ChartId {
        self.state.base.chart
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartSwitch {
    pub index: usize,
    pub lambda: f64,
    pub from: ChartId,
    pub to: ChartId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    samples: Vec<Sample>,
    break_points: Vec<f64>,
}

fn check_state(s: &TangentSample, d: usize, lambda: f64) -> Result<()> {
    if s.base.coords.len() != d || s.velocity.len() != d {
        return Err(Error::InvalidInput(format!(
            "sample at lambda = {lambda} does not have dimension {d}"
        )));
    }
    if s.base.coords.iter().chain(&s.velocity).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteSample(format!("curve sample at lambda = {lambda}")));
    }
    Ok(())
}

impl DiscreteCurve {
    pub fn new(samples: Vec<Sample>, mut break_points: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: samples.len(),
            });
        }
        let d = samples[0].state.base.coords.len();
        for (i, s) in samples.iter().enumerate() {
            if !s.lambda.is_finite() {
                return Err(Error::NonFiniteSample(format!("parameter of sample {i}")));
            }
            check_state(&s.state, d, s.lambda)?;
            if let Some(inc) = &s.incoming {
                check_state(inc, d, s.lambda)?;
            }
            if i > 0 {
                let prev = &samples[i - 1];
                if !(s.lambda > prev.lambda) {
                    return Err(Error::InvalidInput(format!(
                        "parameters must be strictly increasing (sample {i})"
                    )));
                }
                let left_chart = s.incoming.as_ref().map_or(s.chart(), |inc| inc.base.chart);
                if left_chart != prev.chart() {
                    return Err(Error::InvalidInput(format!(
                        "sample {i} changes chart without a chart-switch record"
                    )));
                }
            }
        }
        break_points.sort_by(f64::total_cmp);
        break_points.dedup();
        let (a, b) = (samples[0].lambda, samples[samples.len() - 1].lambda);
        let tol = 1e-12 * (b - a).abs().max(1.0);
        for bp in &break_points {
            if !(*bp > a && *bp < b) {
                return Err(Error::InvalidInput(format!(
                    "break point {bp} outside the open domain ({a}, {b})"
                )));
            }
            if !samples.iter().any(|s| (s.lambda - bp).abs() <= tol) {
                return Err(Error::InvalidInput(format!(
                    "break point {bp} does not coincide with a sample"
                )));
            }
        }
        Ok(Self { samples, break_points })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn break_points(&self) -> &[f64] {
        &self.break_points
    }

    pub fn first(&self) -> &TangentSample {
        &self.samples[0].state
    }

    pub fn last(&self) -> &TangentSample {
        &self.samples[self.samples.len() - 1].state
    }

    pub fn switches(&self) -> Vec<ChartSwitch> {
        self.samples
            .iter()
            .enumerate()
            .filter_map(|(index, s)| {
                let inc = s.incoming.as_ref()?;
                (inc.base.chart != s.chart()).then_some(ChartSwitch {
                    index,
                    lambda: s.lambda,
                    from: inc.base.chart,
                    to: s.chart(),
                })
            })
            .collect()
    }

    fn is_break(&self, lambda: f64) -> bool {
        let (a, b) = self.domain();
        let tol = 1e-12 * (b - a).abs().max(1.0);
        self.break_points.iter().any(|bp| (bp - lambda).abs() <= tol)
    }

    /// Index ranges `[start, end]` (inclusive) of the smooth segments.
    pub fn segment_ranges(&self) -> Vec<(usize, usize)> {
        let n = self.samples.len();
        let mut ranges = Vec::new();
        let mut start = 0;
        for i in 1..n {
            let s = &self.samples[i];
            let boundary = s.incoming.is_some() || self.is_break(s.lambda);
            if boundary || i == n - 1 {
                ranges.push((start, i));
                start = i;
            }
        }
        ranges
    }

    /// Stored samples grouped per smooth segment, using left limits at the
    /// closing boundary of each segment.
    pub fn segments(&self) -> Vec<SegmentNodes> {
        self.segment_ranges()
            .into_iter()
            .map(|(s, e)| {
                let mut nodes: SegmentNodes = self.samples[s..e].iter().map(|x| (x.lambda, x.state.clone())).collect();
                let end = &self.samples[e];
                nodes.push((end.lambda, end.incoming.clone().unwrap_or_else(|| end.state.clone())));
                nodes
            })
            .filter(|nodes| nodes.len() >= 2)
            .collect()
    }

    /// Contiguous sub-range of samples `[start, end]`; the first sample's
    /// left limit is dropped.
    pub fn slice(&self, start: usize, end: usize) -> Result<DiscreteCurve> {
        if start >= end || end >= self.samples.len() {
            return Err(Error::InvalidInput(format!(
                "invalid sample range {start}..={end} for {} samples",
                self.samples.len()
            )));
        }
        let mut samples = self.samples[start..=end].to_vec();
        samples[0].incoming = None;
        let (a, b) = (samples[0].lambda, samples[samples.len() - 1].lambda);
        let bps = self
            .break_points
            .iter()
            .copied()
            .filter(|bp| *bp > a && *bp < b)
            .collect();
        DiscreteCurve::new(samples, bps)
    }

    fn hermite(lambda: f64, (l0, s0): &(f64, TangentSample), (l1, s1): &(f64, TangentSample)) -> TangentSample {
        let dt = l1 - l0;
        let t = (lambda - l0) / dt;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -6.0 * t2 + 6.0 * t;
        let d11 = 3.0 * t2 - 2.0 * t;
        let (x0, x1) = (&s0.base.coords, &s1.base.coords);
        let (v0, v1) = (&s0.velocity, &s1.velocity);
        let coords: Vec<f64> = (0..x0.len())
            .map(|i| h00 * x0[i] + h10 * dt * v0[i] + h01 * x1[i] + h11 * dt * v1[i])
            .collect();
        let velocity: Vec<f64> = (0..x0.len())
            .map(|i| (d00 * x0[i] + d10 * dt * v0[i] + d01 * x1[i] + d11 * dt * v1[i]) / dt)
            .collect();
        TangentSample::new(ChartPoint::new(s0.base.chart, coords), velocity)
    }
}

impl Curve for DiscreteCurve {
    fn domain(&self) -> (f64, f64) {
        (self.samples[0].lambda, self.samples[self.samples.len() - 1].lambda)
    }

    fn segment_nodes(&self, _quad: &QuadratureConfig) -> Result<Vec<SegmentNodes>> {
        Ok(self.segments())
    }

    /// Exact stored sample at sample parameters, cubic Hermite in between.
    fn state_at(&self, lambda: f64) -> Result<TangentSample> {
        let (a, b) = self.domain();
        if !(lambda >= a && lambda <= b) {
            return Err(Error::InvalidInput(format!("parameter {lambda} outside [{a}, {b}]")));
        }
        let idx = self.samples.partition_point(|s| s.lambda < lambda);
        if idx < self.samples.len() && self.samples[idx].lambda == lambda {
            return Ok(self.samples[idx].state.clone());
        }
        let left = &self.samples[idx - 1];
        let right = &self.samples[idx];
        let right_state = right.incoming.clone().unwrap_or_else(|| right.state.clone());
        Ok(Self::hermite(
            lambda,
            &(left.lambda, left.state.clone()),
            &(right.lambda, right_state),
        ))
    }

    fn derivative_step(&self, lambda: f64) -> f64 {
        let idx = self
            .samples
            .partition_point(|s| s.lambda < lambda)
            .clamp(1, self.samples.len() - 1);
        self.samples[idx].lambda - self.samples[idx - 1].lambda
    }
}

type PositionFn = Arc<dyn Fn(f64) -> ChartPoint + Send + Sync>;
type VelocityFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// A curve given by closures on `[a, b]`.
#[derive(Clone)]
pub struct AnalyticCurve {
    a: f64,
    b: f64,
    position: PositionFn,
    velocity: Option<VelocityFn>,
    break_points: Vec<f64>,
}

impl fmt::Debug for AnalyticCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticCurve")
            .field("domain", &(self.a, self.b))
            .field("analytic_velocity", &self.velocity.is_some())
            .field("break_points", &self.break_points)
            .finish()
    }
}

impl AnalyticCurve {
    pub fn new<P>(a: f64, b: f64, position: P) -> Result<Self>
    where
        P: Fn(f64) -> ChartPoint + Send + Sync + 'static,
    {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput(format!("curve domain [{a}, {b}] is empty")));
        }
        Ok(Self {
            a,
            b,
            position: Arc::new(position),
            velocity: None,
            break_points: Vec::new(),
        })
    }

    pub fn with_velocity<V>(mut self, velocity: V) -> Self
    where
        V: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.velocity = Some(Arc::new(velocity));
        self
    }

    pub fn with_break_points(mut self, mut bps: Vec<f64>) -> Result<Self> {
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        if bps.iter().any(|bp| !(*bp > self.a && *bp < self.b)) {
            return Err(Error::InvalidInput("break points must lie inside (a, b)".into()));
        }
        self.break_points = bps;
        Ok(self)
    }

    pub fn break_points(&self) -> &[f64] {
        &self.break_points
    }

    pub fn position(&self, lambda: f64) -> Result<ChartPoint> {
        let p = (self.position)(lambda);
        if p.coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteSample(format!("curve position at lambda = {lambda}")));
        }
        Ok(p)
    }

    fn segment_bounds(&self) -> Vec<f64> {
        let mut v = vec![self.a];
        v.extend_from_slice(&self.break_points);
        v.push(self.b);
        v
    }

    /// Velocity as a limit from inside `[lo, hi]`.
    fn velocity_within(&self, lambda: f64, lo: f64, hi: f64) -> Result<Vec<f64>> {
        let width = self.b - self.a;
        if let Some(v) = &self.velocity {
            // nudge off interior break points so piecewise closures pick the right piece
            let nudge = 1e-12 * width;
            let at = if lambda <= lo && lo > self.a {
                lambda + nudge
            } else if lambda >= hi && hi < self.b {
                lambda - nudge
            } else {
                lambda
            };
            let out = v(at);
            if out.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteSample(format!("velocity at lambda = {lambda}")));
            }
            return Ok(out);
        }
        let h = 1e-6 * width;
        let center = self.position(lambda)?;
        let fetch = |t: f64| -> Result<Vec<f64>> {
            let p = self.position(t)?;
            if p.chart != center.chart {
                return Err(Error::InvalidInput(
                    "finite-difference velocity across a chart change".into(),
                ));
            }
            Ok(p.coords)
        };
        let d = center.coords.len();
        if lambda - h >= lo && lambda + h <= hi {
            let (p, m) = (fetch(lambda + h)?, fetch(lambda - h)?);
            Ok((0..d).map(|i| (p[i] - m[i]) / (2.0 * h)).collect())
        } else if lambda - h < lo {
            // second-order one-sided difference at a left boundary
            let (f1, f2) = (fetch(lambda + h)?, fetch(lambda + 2.0 * h)?);
            let f0 = &center.coords;
            Ok((0..d)
                .map(|i| (4.0 * (f1[i] - f0[i]) - (f2[i] - f0[i])) / (2.0 * h))
                .collect())
        } else {
            let (f1, f2) = (fetch(lambda - h)?, fetch(lambda - 2.0 * h)?);
            let f0 = &center.coords;
            Ok((0..d)
                .map(|i| (4.0 * (f0[i] - f1[i]) - (f0[i] - f2[i])) / (2.0 * h))
                .collect())
        }
    }

    fn segment_of(&self, lambda: f64) -> (f64, f64) {
        let bounds = self.segment_bounds();
        let idx = bounds.partition_point(|x| *x <= lambda).clamp(1, bounds.len() - 1);
        (bounds[idx - 1], bounds[idx])
    }
}

impl Curve for AnalyticCurve {
    fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Simpson nodes per segment; panels split proportionally to segment
    /// width, at least 2 and always even.
    fn segment_nodes(&self, quad: &QuadratureConfig) -> Result<Vec<SegmentNodes>> {
        let bounds = self.segment_bounds();
        let total = self.b - self.a;
        bounds
            .windows(2)
            .map(|w| {
                let (lo, hi) = (w[0], w[1]);
                let share = quad.panels() as f64 * (hi - lo) / total;
                let mut panels = (share.round() as usize).max(2);
                panels += panels % 2;
                (0..=panels)
                    .map(|i| {
                        let t = if i == panels {
                            hi
                        } else {
                            lo + (hi - lo) * i as f64 / panels as f64
                        };
                        let base = self.position(t)?;
                        let velocity = self.velocity_within(t, lo, hi)?;
                        Ok((t, TangentSample::new(base, velocity)))
                    })
                    .collect()
            })
            .collect()
    }

    fn state_at(&self, lambda: f64) -> Result<TangentSample> {
        if !(lambda >= self.a && lambda <= self.b) {
            return Err(Error::InvalidInput(format!(
                "parameter {lambda} outside [{}, {}]",
                self.a, self.b
            )));
        }
        let (lo, hi) = self.segment_of(lambda);
        Ok(TangentSample::new(
            self.position(lambda)?,
            self.velocity_within(lambda, lo, hi)?,
        ))
    }

    fn derivative_step(&self, _lambda: f64) -> f64 {
        1e-3 * (self.b - self.a)
    }
}

/// `n` equally spaced samples (plus one sample at every break point).
pub fn sample(curve: &AnalyticCurve, n: usize) -> Result<DiscreteCurve> {
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let (a, b) = (curve.a, curve.b);
    let mut lambdas: Vec<f64> = (0..n)
        .map(|i| {
            if i == n - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        })
        .collect();
    lambdas.extend_from_slice(&curve.break_points);
    lambdas.sort_by(f64::total_cmp);
    let tol = 1e-12 * (b - a);
    lambdas.dedup_by(|x, y| (*x - *y).abs() <= tol);
    let mut samples = Vec::with_capacity(lambdas.len());
    for &t in &lambdas {
        let (lo, hi) = curve.segment_of(t);
        let mut s = Sample::new(
            t,
            TangentSample::new(curve.position(t)?, curve.velocity_within(t, lo, hi)?),
        );
        if curve.break_points.iter().any(|bp| (bp - t).abs() <= tol) {
            let (llo, _) = curve.segment_of(t - tol.max(f64::EPSILON));
            let left_v = curve.velocity_within(t, llo, t)?;
            s.incoming = Some(TangentSample::new(s.state.base.clone(), left_v));
        }
        samples.push(s);
    }
    let bps = curve.break_points.clone();
    DiscreteCurve::new(samples, bps)
}

fn integrate_over_segments<C, F>(field: &MetricField, curve: &C, quad: &QuadratureConfig, integrand: F) -> Result<f64>
where
    C: Curve + ?Sized,
    F: Fn(f64) -> f64,
{
    let mut total = 0.0;
    for nodes in curve.segment_nodes(quad)? {
        let xs: Vec<f64> = nodes.iter().map(|(t, _)| *t).collect();
        let ys = nodes
            .iter()
            .map(|(_, s)| Ok(integrand(field.inner(&s.base, &s.velocity, &s.velocity)?)))
            .collect::<Result<Vec<f64>>>()?;
        total += integrate_samples(&xs, &ys)?;
    }
    Ok(total)
}

/// `∫ √g(γ', γ') dλ`, summed over smooth segments.
pub fn length<C: Curve + ?Sized>(field: &MetricField, curve: &C, quad: &QuadratureConfig) -> Result<f64> {
    integrate_over_segments(field, curve, quad, |g| g.max(0.0).sqrt())
}

/// `½ ∫ g(γ', γ') dλ`, summed over smooth segments.
pub fn energy<C: Curve + ?Sized>(field: &MetricField, curve: &C, quad: &QuadratureConfig) -> Result<f64> {
    Ok(0.5 * integrate_over_segments(field, curve, quad, |g| g)?)
}

pub const ZERO_VELOCITY_THRESHOLD: f64 = 1e-14;

/// Angle between two tangent vectors at `p`, in `[0, π]`.
pub fn angle(field: &MetricField, p: &ChartPoint, v: &[f64], w: &[f64]) -> Result<f64> {
    let vv = field.inner(p, v, v)?;
    let ww = field.inner(p, w, w)?;
    if vv <= ZERO_VELOCITY_THRESHOLD || ww <= ZERO_VELOCITY_THRESHOLD {
        return Err(Error::ZeroVelocity(format!(
            "angle needs nonzero vectors (g(v,v) = {vv:e}, g(w,w) = {ww:e})"
        )));
    }
    let cos = field.inner(p, v, w)? / (vv * ww).sqrt();
    Ok(cos.clamp(-1.0, 1.0).acos())
}

/// `√g(γ'(λ), γ'(λ))`.
pub fn speed<C: Curve + ?Sized>(field: &MetricField, curve: &C, lambda: f64) -> Result<f64> {
    let s = curve.state_at(lambda)?;
    field.norm(&s.base, &s.velocity)
}

/// Resamples a curve at uniform arc length with unit-speed velocities.
///
/// Arc length comes from a cumulative trapezoid of the sampled speed; positions
/// and velocities are interpolated linearly between the bracketing samples and
/// velocities are then normalized. Each smooth segment keeps its sample count.
pub fn reparametrize_unit_speed(field: &MetricField, curve: &DiscreteCurve) -> Result<DiscreteCurve> {
    const MIN_SPEED: f64 = 1e-9;
    let a = curve.domain().0;
    let ranges = curve.segment_ranges();
    let segments = curve.segments();
    let mut offset = a;
    let mut out: Vec<Sample> = Vec::with_capacity(curve.len());
    let mut break_points = Vec::new();
    for (seg_idx, nodes) in segments.iter().enumerate() {
        let speeds = nodes
            .iter()
            .map(|(_, s)| field.norm(&s.base, &s.velocity))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(min) = speeds.iter().copied().reduce(f64::min) {
            if min <= MIN_SPEED {
                return Err(Error::ZeroVelocity(format!(
                    "sampled speed {min:e} too small to reparametrize"
                )));
            }
        }
        let mut arc = vec![0.0; nodes.len()];
        for j in 1..nodes.len() {
            arc[j] = arc[j - 1] + 0.5 * (speeds[j] + speeds[j - 1]) * (nodes[j].0 - nodes[j - 1].0);
        }
        let seg_len = arc[arc.len() - 1];
        let m = nodes.len();
        let mut resampled = Vec::with_capacity(m);
        let mut j = 0;
        for k in 0..m {
            let sigma = if k == m - 1 {
                seg_len
            } else {
                seg_len * k as f64 / (m - 1) as f64
            };
            while j + 2 < m && arc[j + 1] < sigma {
                j += 1;
            }
            let t = ((sigma - arc[j]) / (arc[j + 1] - arc[j])).clamp(0.0, 1.0);
            let (s0, s1) = (&nodes[j].1, &nodes[j + 1].1);
            let lerp = |u: &[f64], w: &[f64]| -> Vec<f64> { u.iter().zip(w).map(|(p, q)| p + t * (q - p)).collect() };
            let base = ChartPoint::new(s0.base.chart, lerp(&s0.base.coords, &s1.base.coords));
            let raw_v = lerp(&s0.velocity, &s1.velocity);
            let nv = field.norm(&base, &raw_v)?;
            if nv <= MIN_SPEED {
                return Err(Error::ZeroVelocity("interpolated velocity vanishes".into()));
            }
            let velocity = raw_v.iter().map(|c| c / nv).collect::<Vec<f64>>();
            resampled.push((offset + sigma, TangentSample::new(base, velocity)));
        }
        let (_, end_idx) = ranges[seg_idx];
        let closing_has_incoming = curve.samples()[end_idx].incoming.is_some();
        let is_last = seg_idx == segments.len() - 1;
        let last = resampled.pop().expect("segment has nodes");
        if seg_idx > 0 {
            // the first node is the boundary sample, already pushed as incoming holder
            resampled.remove(0);
        }
        for (lambda, state) in resampled {
            out.push(Sample::new(lambda, state));
        }
        if is_last {
            out.push(Sample::new(last.0, last.1));
        } else {
            let next_first = segments[seg_idx + 1][0].1.clone();
            let mut boundary = Sample::new(last.0, last.1.clone());
            if let Some(first) = reparam_first_state(field, &next_first)? {
                boundary.state = first;
            }
            if closing_has_incoming {
                boundary.incoming = Some(last.1);
            }
            if curve.is_break(curve.samples()[end_idx].lambda) {
                break_points.push(last.0);
            }
            out.push(boundary);
        }
        offset += seg_len;
    }
    DiscreteCurve::new(out, break_points)
}

fn reparam_first_state(field: &MetricField, s: &TangentSample) -> Result<Option<TangentSample>> {
    let n = field.norm(&s.base, &s.velocity)?;
    if n <= 1e-9 {
        return Err(Error::ZeroVelocity("boundary velocity vanishes".into()));
    }
    Ok(Some(TangentSample::new(
        s.base.clone(),
        s.velocity.iter().map(|c| c / n).collect::<Vec<f64>>(),
    )))
}
