//! Geodesic equation: right-hand side, fixed-step integration with chart
//! switching, residual certification and two-point shooting.

use crate::charts::{AtlasKind, ChartPoint, TangentSample};
use crate::error::{Error, Result};
use crate::functionals::{DiscreteCurve, Sample};
use crate::metric::MetricField;
use crate::numerics::{derivative_weights, dot, norm, rk4_step, solve_linear, FiniteDiffConfig, SquareMatrix};

/// Position and velocity packed for the integrator.
pub type GeodesicState = TangentSample;

/// Fewest steps a chart segment must span before the integrator may switch
/// charts again. Keeps every segment long enough for [`residual`].
const MIN_SEGMENT_STEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartSwitchPolicy {
    radius: f64,
}

impl ChartSwitchPolicy {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 1.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!(
                "switch radius must be finite and > 1, got {radius}"
            )));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl Default for ChartSwitchPolicy {
    fn default() -> Self {
        Self { radius: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub fd_step: f64,
    pub multi_start: usize,
    pub steps: usize,
    pub damping: f64,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
            fd_step: 1e-7,
            multi_start: 8,
            steps: 1000,
            damping: 0.5,
        }
    }
}

impl ShootConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("shooting config: {what}")));
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be > 0");
        }
        if self.max_iterations < 1 {
            return bad("at least one iteration");
        }
        if !(self.fd_step > 0.0) {
            return bad("finite-difference step must be > 0");
        }
        if self.multi_start < 1 {
            return bad("at least one start");
        }
        if self.steps < 1 {
            return bad("at least one integrator step");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        Ok(())
    }
}

/// `(v, a)` with `a^k = −Γ^k_ij v^i v^j`.
pub fn geodesic_rhs(field: &MetricField, state: &GeodesicState) -> Result<(Vec<f64>, Vec<f64>)> {
    let gamma = field.christoffel_at(&state.base)?;
    let acc = gamma.contract(&state.velocity).into_iter().map(|a| -a).collect();
    Ok((state.velocity.clone(), acc))
}

fn pack(s: &TangentSample) -> Vec<f64> {
    s.base.coords.iter().chain(&s.velocity).copied().collect()
}

fn unpack(chart: crate::charts::ChartId, y: &[f64]) -> TangentSample {
    let d = y.len() / 2;
    TangentSample::new(ChartPoint::new(chart, &y[..d]), &y[d..])
}

/// Fixed-step RK4 from `(x0, v0)` over `span` in `steps` steps.
///
/// After each step, if the coordinate norm exceeds the policy radius and the
/// chart names an escape chart, the state moves there; the pre-switch state is
/// kept as the sample's `incoming`.
pub fn integrate(
    field: &MetricField,
    x0: &ChartPoint,
    v0: &[f64],
    span: (f64, f64),
    steps: usize,
    policy: &ChartSwitchPolicy,
) -> Result<DiscreteCurve> {
    if steps < 1 {
        return Err(Error::InvalidInput("integration needs at least one step".into()));
    }
    let (t0, t1) = span;
    if !(t0.is_finite() && t1.is_finite()) || t0 == t1 {
        return Err(Error::InvalidInput(format!("degenerate span [{t0}, {t1}]")));
    }
    let atlas = field.atlas();
    atlas.validate(x0)?;
    if v0.len() != atlas.dim() || v0.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "initial velocity must be a finite {}-tuple",
            atlas.dim()
        )));
    }
    let h = (t1 - t0) / steps as f64;
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(Sample::new(t0, TangentSample::new(x0.clone(), v0)));
    march(field, x0, v0, t0, h, steps, policy, |i, state, incoming| {
        let lambda = if i == steps { t1 } else { t0 + i as f64 * h };
        samples.push(Sample {
            lambda,
            state: state.clone(),
            incoming,
        });
    })?;
    DiscreteCurve::new(samples, Vec::new())
}

/// RK4 loop shared by [`integrate`] and [`exp_map`]. Calls `visit` with the
/// step index, the new state and the pre-switch state when a switch happened.
#[allow(clippy::too_many_arguments)]
fn march<F>(
    field: &MetricField,
    x0: &ChartPoint,
    v0: &[f64],
    t0: f64,
    h: f64,
    steps: usize,
    policy: &ChartSwitchPolicy,
    mut visit: F,
) -> Result<TangentSample>
where
    F: FnMut(usize, &TangentSample, Option<TangentSample>),
{
    let atlas = field.atlas();
    let fd = FiniteDiffConfig::default();
    let mut state = TangentSample::new(x0.clone(), v0);
    let mut segment_start = 0;
    for i in 0..steps {
        let lambda = t0 + i as f64 * h;
        let chart = state.base.chart;
        let y = rk4_step(
            |_, y| {
                let s = unpack(chart, y);
                let (v, a) = geodesic_rhs(field, &s)?;
                Ok(v.into_iter().chain(a).collect())
            },
            &pack(&state),
            lambda,
            h,
        )?;
        state = unpack(chart, &y);
        let next = i + 1;
        let mut incoming = None;
        if let Some(target) = atlas.escape_target(chart) {
            let may_switch = next - segment_start >= MIN_SEGMENT_STEPS && steps - next >= MIN_SEGMENT_STEPS;
            if may_switch && norm(&state.base.coords) > policy.radius() {
                let moved = atlas.push_velocity(target, &state, &fd)?;
                incoming = Some(std::mem::replace(&mut state, moved));
                segment_start = next;
            }
        }
        visit(next, &state, incoming);
    }
    Ok(state)
}

/// Endpoint of the integration over `[0, 1]`.
pub fn exp_map(
    field: &MetricField,
    p: &ChartPoint,
    v: &[f64],
    steps: usize,
    policy: &ChartSwitchPolicy,
) -> Result<ChartPoint> {
    if steps < 1 {
        return Err(Error::InvalidInput("integration needs at least one step".into()));
    }
    let atlas = field.atlas();
    atlas.validate(p)?;
    if v.len() != atlas.dim() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "initial velocity must be a finite {}-tuple",
            atlas.dim()
        )));
    }
    let h = 1.0 / steps as f64;
    Ok(march(field, p, v, 0.0, h, steps, policy, |_, _, _| {})?.base)
}

/// Max over interior samples of `|γ''^k + Γ^k_ij γ'^i γ'^j|`.
///
/// `γ''` is the five-point derivative of the stored velocities. Every smooth
/// segment needs at least five samples.
pub fn residual(field: &MetricField, curve: &DiscreteCurve) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for nodes in curve.segments() {
        let n = nodes.len();
        if n < 5 {
            return Err(Error::InsufficientSamples { needed: 5, got: n });
        }
        for k in 2..n - 2 {
            let window = &nodes[k - 2..=k + 2];
            let ts: Vec<f64> = window.iter().map(|(t, _)| *t).collect();
            let w = derivative_weights(&ts, nodes[k].0);
            let state = &nodes[k].1;
            let gv = field.christoffel_at(&state.base)?.contract(&state.velocity);
            for (c, g) in gv.iter().enumerate() {
                let acc: f64 = window.iter().zip(&w).map(|((_, s), wi)| wi * s.velocity[c]).sum();
                worst = worst.max((acc + g).abs());
            }
        }
    }
    Ok(worst)
}

/// Embedding Jacobian columns `∂_i F` at `p` by central differences.
fn embedding_jacobian(field: &MetricField, p: &ChartPoint) -> Result<Vec<Vec<f64>>> {
    let atlas = field.atlas();
    let h = FiniteDiffConfig::default().step();
    (0..p.coords.len())
        .map(|i| {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus.coords[i] += h;
            minus.coords[i] -= h;
            let (a, b) = (atlas.embed(&plus)?, atlas.embed(&minus)?);
            Ok(a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect())
        })
        .collect()
}

/// Least-squares solution of `Σ_i c_i cols_i ≈ rhs` via normal equations.
fn least_squares(cols: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let d = cols.len();
    let mut ata = SquareMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            ata[(i, j)] = dot(&cols[i], &cols[j]);
        }
    }
    let atb: Vec<f64> = cols.iter().map(|c| dot(c, rhs)).collect();
    solve_linear(&ata, &atb)
}

struct EndpointMap<'a> {
    field: &'a MetricField,
    p: &'a ChartPoint,
    q: &'a ChartPoint,
    q_embedded: Option<Vec<f64>>,
    steps: usize,
    policy: &'a ChartSwitchPolicy,
}

impl EndpointMap<'_> {
    fn eval(&self, v0: &[f64]) -> Result<Vec<f64>> {
        let end = exp_map(self.field, self.p, v0, self.steps, self.policy)?;
        let atlas = self.field.atlas();
        match &self.q_embedded {
            Some(qe) => {
                let e = atlas.embed(&end)?;
                Ok(e.iter().zip(qe).map(|(a, b)| a - b).collect())
            }
            None => {
                let q = atlas.transition(self.q.chart, end.chart, &self.q.coords)?;
                Ok(end.coords.iter().zip(&q).map(|(a, b)| a - b).collect())
            }
        }
    }

    /// Damped Gauss-Newton from `guess`. Returns the final velocity and
    /// residual norm, converged or not.
    fn solve(&self, guess: Vec<f64>, cfg: &ShootConfig) -> (Vec<f64>, f64, bool) {
        let mut v = guess;
        let mut r = match self.eval(&v) {
            Ok(r) => r,
            Err(_) => return (v, f64::INFINITY, false),
        };
        let mut rn = norm(&r);
        for _ in 0..cfg.max_iterations {
            if rn <= cfg.tolerance {
                return (v, rn, true);
            }
            let h = cfg.fd_step * norm(&v).max(1.0);
            let mut cols = Vec::with_capacity(v.len());
            for i in 0..v.len() {
                let mut vp = v.clone();
                vp[i] += h;
                match self.eval(&vp) {
                    Ok(rp) => cols.push(rp.iter().zip(&r).map(|(a, b)| (a - b) / h).collect::<Vec<f64>>()),
                    Err(_) => return (v, rn, false),
                }
            }
            let neg_r: Vec<f64> = r.iter().map(|x| -x).collect();
            let delta = match least_squares(&cols, &neg_r) {
                Ok(d) => d,
                Err(_) => return (v, rn, false),
            };
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = v.iter().zip(&delta).map(|(a, b)| a + scale * b).collect();
                if let Ok(rt) = self.eval(&trial) {
                    let rtn = norm(&rt);
                    if rtn < rn {
                        v = trial;
                        r = rt;
                        rn = rtn;
                        accepted = true;
                        break;
                    }
                }
                scale *= cfg.damping;
                if cfg.damping == 1.0 {
                    break;
                }
            }
            if !accepted {
                break;
            }
        }
        let ok = rn <= cfg.tolerance;
        (v, rn, ok)
    }
}

/// Initial guesses, then rotations of the first one in the first coordinate
/// plane. On embedded manifolds the first guess is the ambient chord projected
/// onto the tangent space at `p`, otherwise the chord in `p`'s chart.
fn initial_guesses(field: &MetricField, p: &ChartPoint, q: &ChartPoint, count: usize) -> Result<Vec<Vec<f64>>> {
    let atlas = field.atlas();
    let chord = if atlas.has_embedding() {
        let diff: Vec<f64> = atlas
            .embed(q)?
            .iter()
            .zip(atlas.embed(p)?)
            .map(|(a, b)| a - b)
            .collect();
        let mut w = least_squares(&embedding_jacobian(field, p)?, &diff)?;
        let ambient = norm(&diff);
        let target = if atlas.kind() == AtlasKind::Sphere2 {
            2.0 * (ambient / 2.0).min(1.0).asin()
        } else {
            ambient
        };
        let metric_len = field.norm(p, &w)?;
        if metric_len > 0.0 {
            w.iter_mut().for_each(|c| *c *= target / metric_len);
        }
        w
    } else {
        let qc = if q.chart == p.chart {
            q.coords.clone()
        } else {
            atlas.transition(q.chart, p.chart, &q.coords)?
        };
        qc.iter().zip(&p.coords).map(|(a, b)| a - b).collect()
    };
    let mut out = vec![chord.clone()];
    for k in 1..count {
        if chord.len() == 1 {
            let s = if k % 2 == 1 { -1.0 } else { 1.0 } * (1.0 + k as f64 / 2.0);
            out.push(vec![chord[0] * s]);
            continue;
        }
        let theta = std::f64::consts::TAU * k as f64 / count as f64;
        let (c, s) = (theta.cos(), theta.sin());
        let mut g = chord.clone();
        g[0] = c * chord[0] - s * chord[1];
        g[1] = s * chord[0] + c * chord[1];
        out.push(g);
    }
    Ok(out)
}

/// Initial velocity at `p` whose geodesic over `[0, 1]` ends at `q`, and that
/// geodesic.
///
/// Endpoint mismatch is measured in ambient coordinates when the atlas has an
/// embedding, otherwise in the chart of the computed endpoint.
pub fn shoot(
    field: &MetricField,
    p: &ChartPoint,
    q: &ChartPoint,
    cfg: &ShootConfig,
    policy: &ChartSwitchPolicy,
) -> Result<(Vec<f64>, DiscreteCurve)> {
    cfg.validate()?;
    let atlas = field.atlas();
    atlas.validate(p)?;
    atlas.validate(q)?;
    let q_embedded = if atlas.has_embedding() {
        Some(atlas.embed(q)?)
    } else {
        None
    };
    let p_embedded = if atlas.has_embedding() {
        Some(atlas.embed(p)?)
    } else {
        None
    };
    let same = match (&p_embedded, &q_embedded) {
        (Some(a), Some(b)) => norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>()) == 0.0,
        _ => p == q,
    };
    if same {
        return Err(Error::InvalidInput("shooting needs distinct endpoints".into()));
    }
    if atlas.kind() == AtlasKind::Sphere2 {
        let (a, b) = (p_embedded.as_ref().unwrap(), q_embedded.as_ref().unwrap());
        if dot(a, b) <= -1.0 + 1e-9 {
            return Err(Error::NoConvergence {
                best_residual: norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>()),
                message: "antipodal points: the connecting geodesic is not unique".into(),
            });
        }
    }
    let map = EndpointMap {
        field,
        p,
        q,
        q_embedded,
        steps: cfg.steps,
        policy,
    };
    let mut best = f64::INFINITY;
    for guess in initial_guesses(field, p, q, cfg.multi_start)? {
        let (v, rn, ok) = map.solve(guess, cfg);
        if ok {
            let curve = integrate(field, p, &v, (0.0, 1.0), cfg.steps, policy)?;
            return Ok((v, curve));
        }
        best = best.min(rn);
    }
    Err(Error::NoConvergence {
        best_residual: best,
        message: format!("{} starts exhausted", cfg.multi_start),
    })
}
