//! Trajectory files: a versioned JSON document and a flat CSV export.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use chartgeo::charts::{euclidean_atlas, sphere_atlas, ChartId, ChartPoint, TangentSample};
use chartgeo::functionals::{energy, length, DiscreteCurve, Sample};
use chartgeo::geodesic::residual;
use chartgeo::metric::{euclidean_metric, sphere_metric, MetricField};
use chartgeo::numerics::QuadratureConfig;
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manifold {
    Euclidean(usize),
    Sphere2,
}

impl Manifold {
    pub fn field(&self) -> chartgeo::Result<MetricField> {
        match self {
            Manifold::Euclidean(d) => euclidean_metric(&Arc::new(euclidean_atlas(*d)?)),
            Manifold::Sphere2 => sphere_metric(&Arc::new(sphere_atlas())),
        }
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Manifold::Euclidean(d) => write!(f, "euclidean:{d}"),
            Manifold::Sphere2 => f.write_str("sphere2"),
        }
    }
}

impl FromStr for Manifold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "sphere2" {
            return Ok(Manifold::Sphere2);
        }
        let d = s
            .strip_prefix("euclidean:")
            .ok_or_else(|| format!("unknown manifold {s:?}; expected euclidean:<d> or sphere2"))?;
        match d.parse::<usize>() {
            Ok(d) if d >= 1 => Ok(Manifold::Euclidean(d)),
            _ => Err(format!("bad dimension in {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub chart: u8,
    pub coords: Vec<f64>,
    pub velocity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub lambda: f64,
    pub chart: u8,
    pub coords: Vec<f64>,
    pub velocity: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedded: Option<Vec<f64>>,
    /// Left limit of the state at a chart switch, in the previous chart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incoming: Option<StateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub length: f64,
    pub energy: f64,
    pub max_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFile {
    pub version: u32,
    pub manifold: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub break_points: Vec<f64>,
    pub samples: Vec<SampleRecord>,
    pub summary: Summary,
}

/// Length, energy and, where the curve is long enough, the geodesic residual.
pub fn summarize(field: &MetricField, curve: &DiscreteCurve, v0: Option<Vec<f64>>) -> chartgeo::Result<Summary> {
    let quad = QuadratureConfig::default();
    let max_residual = match residual(field, curve) {
        Ok(r) => Some(r),
        Err(chartgeo::Error::InsufficientSamples { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(Summary {
        length: length(field, curve, &quad)?,
        energy: energy(field, curve, &quad)?,
        max_residual,
        v0,
    })
}

fn state_record(s: &TangentSample) -> StateRecord {
    StateRecord {
        chart: s.base.chart.0,
        coords: s.base.coords.clone(),
        velocity: s.velocity.clone(),
    }
}

impl CurveFile {
    pub fn from_curve(
        manifold: Manifold,
        field: &MetricField,
        curve: &DiscreteCurve,
        v0: Option<Vec<f64>>,
    ) -> chartgeo::Result<Self> {
        let atlas = field.atlas();
        let samples = curve
            .samples()
            .iter()
            .map(|s| {
                let embedded = if manifold == Manifold::Sphere2 {
                    Some(atlas.embed(&s.state.base)?)
                } else {
                    None
                };
                Ok(SampleRecord {
                    lambda: s.lambda,
                    chart: s.chart().0,
                    coords: s.state.base.coords.clone(),
                    velocity: s.state.velocity.clone(),
                    embedded,
                    incoming: s.incoming.as_ref().map(state_record),
                })
            })
            .collect::<chartgeo::Result<Vec<_>>>()?;
        Ok(Self {
            version: FORMAT_VERSION,
            manifold: manifold.to_string(),
            break_points: curve.break_points().to_vec(),
            samples,
            summary: summarize(field, curve, v0)?,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let file: CurveFile = serde_json::from_str(text).map_err(|e| format!("invalid curve file: {e}"))?;
        if file.version != FORMAT_VERSION {
            return Err(format!("unsupported curve file version {}", file.version));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("curve files serialize");
        s.push('\n');
        s
    }

    pub fn manifold(&self) -> Result<Manifold, String> {
        self.manifold.parse()
    }

    /// Rebuilds the sampled curve, checking chart ids against the manifold.
    pub fn to_curve(&self, field: &MetricField) -> Result<DiscreteCurve, String> {
        let atlas = field.atlas();
        let charts = atlas.chart_ids();
        let state = |chart: u8, coords: &[f64], velocity: &[f64]| {
            if !charts.contains(&ChartId(chart)) {
                return Err(format!("chart id {chart} is not valid for {}", self.manifold));
            }
            if velocity.len() != atlas.dim() {
                return Err(format!("velocity {velocity:?} has the wrong dimension"));
            }
            let p = ChartPoint::new(ChartId(chart), coords);
            atlas.validate(&p).map_err(|e| format!("invalid sample: {e}"))?;
            Ok(TangentSample::new(p, velocity))
        };
        let samples = self
            .samples
            .iter()
            .map(|r| {
                let incoming = match &r.incoming {
                    Some(i) => Some(state(i.chart, &i.coords, &i.velocity)?),
                    None => None,
                };
                Ok(Sample {
                    lambda: r.lambda,
                    state: state(r.chart, &r.coords, &r.velocity)?,
                    incoming,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        DiscreteCurve::new(samples, self.break_points.clone()).map_err(|e| format!("invalid curve file: {e}"))
    }

    /// Header `lambda,chart,x1..xd` plus `e1,e2,e3` when embedded
    /// coordinates are present; one row per sample.
    pub fn to_csv(&self) -> String {
        let d = self.samples.first().map_or(0, |s| s.coords.len());
        let ambient = self
            .samples
            .first()
            .and_then(|s| s.embedded.as_ref())
            .map_or(0, Vec::len);
        let mut out = String::from("lambda,chart");
        for i in 1..=d {
            let _ = write!(out, ",x{i}");
        }
        for i in 1..=ambient {
            let _ = write!(out, ",e{i}");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{},{}", s.lambda, s.chart);
            for c in s.coords.iter().chain(s.embedded.iter().flatten()) {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}
