//! Atlases of coordinate charts.
//!
//! A point is always carried as `(chart, coordinates)`; moving between charts
//! goes through [`Atlas::transition`] and [`Atlas::push_velocity`]. Two atlases
//! are built in: the global identity chart on ℝᵈ and the two-chart
//! stereographic atlas of the unit sphere S² ⊂ ℝ³.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{norm, FiniteDiffConfig, SquareMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChartId(pub u8);

impl fmt::Display for ChartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "chart {}", self.0)
    }
}

/// Stereographic projection from the north pole (0,0,1); covers S² minus that pole.
pub const NORTH: ChartId = ChartId(0);
/// Stereographic projection from the south pole (0,0,-1).
pub const SOUTH: ChartId = ChartId(1);
/// The single chart of a Euclidean atlas.
pub const GLOBAL: ChartId = ChartId(0);

/// Below this coordinate norm a sphere point is treated as a chart pole and
/// excluded from the overlap of the two stereographic charts.
pub const SPHERE_OVERLAP_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub chart: ChartId,
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(chart: ChartId, coords: impl Into<Vec<f64>>) -> Self {
        Self {
            chart,
            coords: coords.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A chart point with velocity components in that chart's coordinate basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSample {
    pub base: ChartPoint,
    pub velocity: Vec<f64>,
}

impl TangentSample {
    pub fn new(base: ChartPoint, velocity: impl Into<Vec<f64>>) -> Self {
        Self {
            base,
            velocity: velocity.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtlasKind {
    Euclidean,
    Sphere2,
}

pub type CoordMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type JacobianMap = Arc<dyn Fn(&[f64]) -> SquareMatrix + Send + Sync>;
type ProjectMap = Arc<dyn Fn(&[f64]) -> Option<Vec<f64>> + Send + Sync>;
type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

#[derive(Clone)]
struct Chart {
    id: ChartId,
    label: &'static str,
    domain: Predicate,
    embed: Option<CoordMap>,
    project: Option<ProjectMap>,
    /// Chart to move to when the coordinate norm exceeds the switch radius.
    escape_to: Option<ChartId>,
}

#[derive(Clone)]
struct Transition {
    overlap: Predicate,
    map: CoordMap,
    jacobian: Option<JacobianMap>,
}

#[derive(Clone)]
pub struct Atlas {
    dim: usize,
    kind: AtlasKind,
    ambient_dim: Option<usize>,
    charts: Vec<Chart>,
    transitions: BTreeMap<(ChartId, ChartId), Transition>,
}

impl fmt::Debug for Atlas {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Atlas")
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("ambient_dim", &self.ambient_dim)
            .field(
                "charts",
                &self.charts.iter().map(|c| (c.id, c.label)).collect::<Vec<_>>(),
            )
            .field("transitions", &self.transitions.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// Single global identity chart on ℝᵈ, embedded into ℝᵈ by the identity.
pub fn euclidean_atlas(d: usize) -> Result<Atlas> {
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let chart = Chart {
        id: GLOBAL,
        label: "global",
        domain: Arc::new(|x: &[f64]| x.iter().all(|c| c.is_finite())),
        embed: Some(Arc::new(|x: &[f64]| x.to_vec())),
        project: Some(Arc::new(|p: &[f64]| Some(p.to_vec()))),
        escape_to: None,
    };
    Ok(Atlas {
        dim: d,
        kind: AtlasKind::Euclidean,
        ambient_dim: Some(d),
        charts: vec![chart],
        transitions: BTreeMap::new(),
    })
}

/// Two stereographic charts of the unit sphere.
///
/// Chart N maps `p ↦ (p¹/(1−p³), p²/(1−p³))`, chart S maps
/// `p ↦ (p¹/(1+p³), p²/(1+p³))`. Both transitions are the inversion
/// `x ↦ x/|x|²` on ℝ² ∖ {0}.
pub fn sphere_atlas() -> Atlas {
    let finite2: Predicate = Arc::new(|x: &[f64]| x.len() == 2 && x.iter().all(|c| c.is_finite()));
    let north = Chart {
        id: NORTH,
        label: "N",
        domain: finite2.clone(),
        embed: Some(Arc::new(|x: &[f64]| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let s = r2 + 1.0;
            vec![2.0 * x[0] / s, 2.0 * x[1] / s, (r2 - 1.0) / s]
        })),
        project: Some(Arc::new(|p: &[f64]| {
            let den = 1.0 - p[2];
            (den > 1e-15).then(|| vec![p[0] / den, p[1] / den])
        })),
        escape_to: Some(SOUTH),
    };
    let south = Chart {
        id: SOUTH,
        label: "S",
        domain: finite2,
        embed: Some(Arc::new(|y: &[f64]| {
            let r2 = y[0] * y[0] + y[1] * y[1];
            let s = r2 + 1.0;
            vec![2.0 * y[0] / s, 2.0 * y[1] / s, (1.0 - r2) / s]
        })),
        project: Some(Arc::new(|p: &[f64]| {
            let den = 1.0 + p[2];
            (den > 1e-15).then(|| vec![p[0] / den, p[1] / den])
        })),
        escape_to: Some(NORTH),
    };
    let inversion = || Transition {
        overlap: Arc::new(|x: &[f64]| {
            x.len() == 2 && norm(x) > SPHERE_OVERLAP_GUARD && x.iter().all(|c| c.is_finite())
        }),
        map: Arc::new(|x: &[f64]| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            vec![x[0] / r2, x[1] / r2]
        }),
        jacobian: None,
    };
    let mut transitions = BTreeMap::new();
    transitions.insert((NORTH, SOUTH), inversion());
    transitions.insert((SOUTH, NORTH), inversion());
    Atlas {
        dim: 2,
        kind: AtlasKind::Sphere2,
        ambient_dim: Some(3),
        charts: vec![north, south],
        transitions,
    }
}

/// Closed-form Jacobian of the inversion `x ↦ x/|x|²`:
/// `(δ_ij |x|² − 2 x_i x_j) / |x|⁴`. Usable as an analytic override for the
/// sphere transitions.
pub fn inversion_jacobian(x: &[f64]) -> SquareMatrix {
    let n = x.len();
    let r2: f64 = x.iter().map(|c| c * c).sum();
    let mut j = SquareMatrix::zeros(n);
    for a in 0..n {
        for b in 0..n {
            let delta = if a == b { r2 } else { 0.0 };
            j[(a, b)] = (delta - 2.0 * x[a] * x[b]) / (r2 * r2);
        }
    }
    j
}

impl Atlas {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> AtlasKind {
        self.kind
    }

    pub fn chart_ids(&self) -> Vec<ChartId> {
        self.charts.iter().map(|c| c.id).collect()
    }

    pub fn transition_pairs(&self) -> Vec<(ChartId, ChartId)> {
        self.transitions.keys().copied().collect()
    }

    fn chart(&self, id: ChartId) -> Result<&Chart> {
        self.charts
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::UnknownChart(format!("{id} is not part of this atlas")))
    }

    pub fn chart_label(&self, id: ChartId) -> Result<&'static str> {
        Ok(self.chart(id)?.label)
    }

    /// Resolves a chart by label ("N", "S", "global") or numeric id.
    pub fn chart_by_name(&self, name: &str) -> Result<ChartId> {
        if let Some(c) = self.charts.iter().find(|c| c.label.eq_ignore_ascii_case(name)) {
            return Ok(c.id);
        }
        let id = name
            .parse::<u8>()
            .map(ChartId)
            .map_err(|_| Error::UnknownChart(name.to_string()))?;
        self.chart(id).map(|c| c.id)
    }

    /// Checks dimension, finiteness and domain membership.
    pub fn validate(&self, p: &ChartPoint) -> Result<()> {
        let chart = self.chart(p.chart)?;
        if p.coords.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "{}-tuple given for a {}-dimensional atlas",
                p.coords.len(),
                self.dim
            )));
        }
        if p.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteSample(format!("coordinates {:?}", p.coords)));
        }
        if !(chart.domain)(&p.coords) {
            return Err(Error::InvalidInput(format!(
                "{:?} lies outside the domain of {}",
                p.coords, p.chart
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: &ChartPoint) -> bool {
        self.validate(p).is_ok()
    }

    pub fn escape_target(&self, chart: ChartId) -> Option<ChartId> {
        self.chart(chart).ok().and_then(|c| c.escape_to)
    }

    pub fn in_overlap(&self, from: ChartId, to: ChartId, x: &[f64]) -> Result<bool> {
        if from == to {
            self.chart(from)?;
            return Ok(x.iter().all(|c| c.is_finite()));
        }
        let t = self
            .transitions
            .get(&(from, to))
            .ok_or_else(|| Error::UnknownChart(format!("no transition declared from {from} to {to}")))?;
        Ok((t.overlap)(x))
    }

    /// Re-expresses chart coordinates `x` of `from` in chart `to`.
    pub fn transition(&self, from: ChartId, to: ChartId, x: &[f64]) -> Result<Vec<f64>> {
        if !self.in_overlap(from, to, x)? {
            return Err(Error::OutsideOverlap {
                from,
                to,
                coords: x.to_vec(),
            });
        }
        if from == to {
            return Ok(x.to_vec());
        }
        let t = &self.transitions[&(from, to)];
        let y = (t.map)(x);
        if y.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteSample(format!("transition image of {x:?}")));
        }
        Ok(y)
    }

    /// `J[j][i] = ∂_i (transition)^j (x)`, central differences unless an
    /// analytic override has been installed for the pair.
    pub fn transition_jacobian(
        &self,
        from: ChartId,
        to: ChartId,
        x: &[f64],
        cfg: &FiniteDiffConfig,
    ) -> Result<SquareMatrix> {
        if !self.in_overlap(from, to, x)? {
            return Err(Error::OutsideOverlap {
                from,
                to,
                coords: x.to_vec(),
            });
        }
        let d = x.len();
        if from == to {
            return Ok(SquareMatrix::identity(d));
        }
        if let Some(jac) = &self.transitions[&(from, to)].jacobian {
            return Ok(jac(x));
        }
        let h = cfg.step();
        let mut jac = SquareMatrix::zeros(d);
        let mut probe = x.to_vec();
        for i in 0..d {
            probe[i] = x[i] + h;
            let plus = self.transition(from, to, &probe)?;
            probe[i] = x[i] - h;
            let minus = self.transition(from, to, &probe)?;
            probe[i] = x[i];
            for j in 0..d {
                jac[(j, i)] = (plus[j] - minus[j]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    /// Moves a tangent sample into chart `to`: base via the transition,
    /// velocity via its Jacobian (chain rule).
    pub fn push_velocity(&self, to: ChartId, sample: &TangentSample, cfg: &FiniteDiffConfig) -> Result<TangentSample> {
        let from = sample.base.chart;
        let x = &sample.base.coords;
        let jac = self.transition_jacobian(from, to, x, cfg)?;
        let y = self.transition(from, to, x)?;
        Ok(TangentSample {
            base: ChartPoint::new(to, y),
            velocity: jac.mul_vec(&sample.velocity),
        })
    }

    /// Installs a closed-form Jacobian for one transition.
    pub fn with_transition_jacobian(mut self, from: ChartId, to: ChartId, jacobian: JacobianMap) -> Result<Self> {
        let t = self
            .transitions
            .get_mut(&(from, to))
            .ok_or_else(|| Error::UnknownChart(format!("no transition declared from {from} to {to}")))?;
        t.jacobian = Some(jacobian);
        Ok(self)
    }

    pub fn has_embedding(&self) -> bool {
        self.ambient_dim.is_some()
    }

    pub fn ambient_dim(&self) -> Option<usize> {
        self.ambient_dim
    }

    /// Ambient coordinates of a chart point.
    pub fn embed(&self, p: &ChartPoint) -> Result<Vec<f64>> {
        let chart = self.chart(p.chart)?;
        let f = chart.embed.as_ref().ok_or(Error::MissingEmbedding)?;
        Ok(f(&p.coords))
    }

    /// The chart map evaluated on an ambient point; `None` at the chart's pole.
    pub fn project(&self, chart: ChartId, ambient: &[f64]) -> Result<Option<Vec<f64>>> {
        let c = self.chart(chart)?;
        let f = c.project.as_ref().ok_or(Error::MissingEmbedding)?;
        Ok(f(ambient))
    }

    /// Finds a chart representation of an ambient point, preferring the first
    /// chart whose coordinates stay within `radius`.
    pub fn locate(&self, ambient: &[f64], radius: f64) -> Result<ChartPoint> {
        let n = self.ambient_dim.ok_or(Error::MissingEmbedding)?;
        if ambient.len() != n {
            return Err(Error::InvalidInput(format!(
                "expected {n} ambient coordinates, got {}",
                ambient.len()
            )));
        }
        if ambient.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteSample(format!("ambient point {ambient:?}")));
        }
        let point = if self.kind == AtlasKind::Sphere2 {
            let r = norm(ambient);
            if (r - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "{ambient:?} is not on the unit sphere (norm {r})"
                )));
            }
            ambient.iter().map(|c| c / r).collect()
        } else {
            ambient.to_vec()
        };
        let mut best: Option<ChartPoint> = None;
        for c in &self.charts {
            if let Some(x) = self.project(c.id, &point)? {
                if norm(&x) <= radius {
                    return Ok(ChartPoint::new(c.id, x));
                }
                if best.as_ref().is_none_or(|b| norm(&x) < norm(&b.coords)) {
                    best = Some(ChartPoint::new(c.id, x));
                }
            }
        }
        best.ok_or_else(|| Error::InvalidInput(format!("no chart contains {ambient:?}")))
    }
}
