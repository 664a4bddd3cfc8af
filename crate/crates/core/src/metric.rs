//! Chart-wise Riemannian metric fields and their Christoffel symbols.

use std::fmt;
use std::sync::Arc;

use crate::charts::{Atlas, AtlasKind, ChartId, ChartPoint};
use crate::error::{Error, Result};
use crate::numerics::{invert, FiniteDiffConfig, SquareMatrix};

pub type ComponentMap = Arc<dyn Fn(ChartId, &[f64]) -> SquareMatrix + Send + Sync>;
/// Returns `[∂_0 G, ∂_1 G, ..., ∂_{d-1} G]` at a chart point.
pub type DerivativeMap = Arc<dyn Fn(ChartId, &[f64]) -> Vec<SquareMatrix> + Send + Sync>;

#[derive(Clone)]
pub enum DerivativeStrategy {
    FiniteDifference(FiniteDiffConfig),
    Analytic(DerivativeMap),
}

impl fmt::Debug for DerivativeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FiniteDifference(cfg) => f.debug_tuple("FiniteDifference").field(cfg).finish(),
            Self::Analytic(_) => f.write_str("Analytic"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Euclidean,
    /// Induced metric of the unit sphere in stereographic coordinates, closed form.
    RoundSphere,
    /// Induced metric from an arbitrary atlas embedding, by finite differences.
    Pullback,
}

/// A Riemannian metric given by its component matrices in every chart.
#[derive(Clone)]
pub struct MetricField {
    atlas: Arc<Atlas>,
    kind: MetricKind,
    components: ComponentMap,
    derivatives: DerivativeStrategy,
    symmetry_defect: f64,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("kind", &self.kind)
            .field("derivatives", &self.derivatives)
            .field("symmetry_defect", &self.symmetry_defect)
            .finish()
    }
}

/// Γ^k_ij at one point, stored with `Γ^k_ij == Γ^k_ji`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelTensor {
    d: usize,
    data: Vec<f64>,
}

impl ChristoffelTensor {
    fn zeros(d: usize) -> Self {
        Self {
            d,
            data: vec![0.0; d * d * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.d + i) * self.d + j]
    }

    fn set_pair(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let d = self.d;
        self.data[(k * d + i) * d + j] = v;
        self.data[(k * d + j) * d + i] = v;
    }

    /// `Σ_ij Γ^k_ij v^i v^j` for every k.
    pub fn contract(&self, v: &[f64]) -> Vec<f64> {
        let d = self.d;
        (0..d)
            .map(|k| {
                let mut acc = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        acc += self.get(k, i, j) * v[i] * v[j];
                    }
                }
                acc
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Conformal factor `4 / (1 + |x|²)²` of the round sphere in either
/// stereographic chart.
pub fn sphere_conformal_factor(x: &[f64]) -> f64 {
    let s = 1.0 + x[0] * x[0] + x[1] * x[1];
    4.0 / (s * s)
}

/// Gradient of [`sphere_conformal_factor`]: `-16 x / (1 + |x|²)³`.
pub fn sphere_conformal_gradient(x: &[f64]) -> [f64; 2] {
    let s = 1.0 + x[0] * x[0] + x[1] * x[1];
    let c = -16.0 / (s * s * s);
    [c * x[0], c * x[1]]
}

pub fn euclidean_metric(atlas: &Arc<Atlas>) -> Result<MetricField> {
    if atlas.kind() != AtlasKind::Euclidean {
        return Err(Error::AtlasMismatch(
            "the Euclidean metric needs a Euclidean atlas".into(),
        ));
    }
    let d = atlas.dim();
    Ok(MetricField {
        atlas: atlas.clone(),
        kind: MetricKind::Euclidean,
        components: Arc::new(move |_, _| SquareMatrix::identity(d)),
        derivatives: DerivativeStrategy::FiniteDifference(FiniteDiffConfig::default()),
        symmetry_defect: 0.0,
    })
}

/// Round-sphere metric `λ(x)·I` with `λ = 4/(1+|x|²)²` in both charts. This is
/// the pullback of the ambient inner product through the inverse projections,
/// written out in closed form. Derivatives default to finite differences.
pub fn sphere_metric(atlas: &Arc<Atlas>) -> Result<MetricField> {
    if atlas.kind() != AtlasKind::Sphere2 {
        return Err(Error::AtlasMismatch(
            "the round-sphere metric needs the stereographic sphere atlas".into(),
        ));
    }
    Ok(MetricField {
        atlas: atlas.clone(),
        kind: MetricKind::RoundSphere,
        components: Arc::new(|_, x| SquareMatrix::scaled_identity(2, sphere_conformal_factor(x))),
        derivatives: DerivativeStrategy::FiniteDifference(FiniteDiffConfig::default()),
        symmetry_defect: 0.0,
    })
}

/// Closed-form metric derivatives of the round sphere, for
/// [`MetricField::with_derivatives`].
pub fn sphere_analytic_derivatives() -> DerivativeStrategy {
    DerivativeStrategy::Analytic(Arc::new(|_, x| {
        sphere_conformal_gradient(x)
            .iter()
            .map(|&g| SquareMatrix::scaled_identity(2, g))
            .collect()
    }))
}

/// `g_ij(x) = ⟨∂_i F(x), ∂_j F(x)⟩` where `F` is the atlas embedding and the
/// partials are central differences.
pub fn pullback_metric(atlas: &Arc<Atlas>, cfg: FiniteDiffConfig) -> Result<MetricField> {
    if !atlas.has_embedding() {
        return Err(Error::MissingEmbedding);
    }
    let a = atlas.clone();
    let d = atlas.dim();
    let h = cfg.step();
    let components: ComponentMap = Arc::new(move |chart, x| {
        let mut columns = Vec::with_capacity(d);
        let mut probe = x.to_vec();
        for i in 0..d {
            probe[i] = x[i] + h;
            let plus = a.embed(&ChartPoint::new(chart, probe.clone()));
            probe[i] = x[i] - h;
            let minus = a.embed(&ChartPoint::new(chart, probe.clone()));
            probe[i] = x[i];
            let col: Vec<f64> = match (plus, minus) {
                (Ok(p), Ok(m)) => p.iter().zip(&m).map(|(u, v)| (u - v) / (2.0 * h)).collect(),
                _ => vec![f64::NAN; a.ambient_dim().unwrap_or(d)],
            };
            columns.push(col);
        }
        let mut g = SquareMatrix::zeros(d);
        for i in 0..d {
            for j in i..d {
                let v: f64 = columns[i].iter().zip(&columns[j]).map(|(u, w)| u * w).sum();
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    });
    Ok(MetricField {
        atlas: atlas.clone(),
        kind: MetricKind::Pullback,
        components,
        derivatives: DerivativeStrategy::FiniteDifference(cfg),
        symmetry_defect: 0.0,
    })
}

/// Cholesky attempt; succeeds iff the symmetric matrix is positive definite.
fn is_positive_definite(g: &SquareMatrix) -> bool {
    let d = g.dim();
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut diag = g[(j, j)];
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if !(diag > 0.0) {
            return false;
        }
        let ljj = diag.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let mut acc = g[(i, j)];
            for k in 0..j {
                acc -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = acc / ljj;
        }
    }
    true
}

pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

impl MetricField {
    pub fn atlas(&self) -> &Arc<Atlas> {
        &self.atlas
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.atlas.dim()
    }

    pub fn with_derivatives(mut self, strategy: DerivativeStrategy) -> Self {
        self.derivatives = strategy;
        self
    }

    /// Test hook: adds `eps` to `g_01` only, breaking symmetry.
    pub fn with_symmetry_defect(mut self, eps: f64) -> Self {
        self.symmetry_defect = eps;
        self
    }

    /// Component matrix as produced by the field, without any validation.
    pub fn raw_components(&self, p: &ChartPoint) -> Result<SquareMatrix> {
        self.atlas.validate(p)?;
        let mut g = (self.components)(p.chart, &p.coords);
        if self.symmetry_defect != 0.0 && g.dim() > 1 {
            g[(0, 1)] += self.symmetry_defect;
        }
        Ok(g)
    }

    fn degenerate(&self, p: &ChartPoint, reason: impl Into<String>) -> Error {
        Error::DegenerateMetric {
            chart: p.chart,
            coords: p.coords.clone(),
            reason: reason.into(),
        }
    }

    /// Symmetric positive definite matrix `g_ij` at `p`.
    pub fn metric_at(&self, p: &ChartPoint) -> Result<SquareMatrix> {
        let g = self.raw_components(p)?;
        if !g.is_finite() {
            return Err(self.degenerate(p, "non-finite components"));
        }
        let asym = g.max_asymmetry();
        if asym > SYMMETRY_TOLERANCE {
            return Err(self.degenerate(p, format!("not symmetric (max |g_ij - g_ji| = {asym:e})")));
        }
        if !is_positive_definite(&g) {
            return Err(self.degenerate(p, "not positive definite"));
        }
        Ok(g)
    }

    pub fn inverse_at(&self, p: &ChartPoint) -> Result<SquareMatrix> {
        let g = self.metric_at(p)?;
        invert(&g).map_err(|e| self.degenerate(p, e.to_string()))
    }

    /// `g_p(v, w)`.
    pub fn inner(&self, p: &ChartPoint, v: &[f64], w: &[f64]) -> Result<f64> {
        let g = self.metric_at(p)?;
        if v.len() != g.dim() || w.len() != g.dim() {
            return Err(Error::InvalidInput("vector length does not match dimension".into()));
        }
        Ok(g.bilinear(v, w))
    }

    pub fn norm(&self, p: &ChartPoint, v: &[f64]) -> Result<f64> {
        Ok(self.inner(p, v, v)?.max(0.0).sqrt())
    }

    /// `[∂_0 G, ..., ∂_{d-1} G]` at `p`.
    pub fn metric_derivatives(&self, p: &ChartPoint) -> Result<Vec<SquareMatrix>> {
        match &self.derivatives {
            DerivativeStrategy::Analytic(f) => {
                self.atlas.validate(p)?;
                Ok(f(p.chart, &p.coords))
            }
            DerivativeStrategy::FiniteDifference(cfg) => {
                let h = cfg.step();
                let d = self.dim();
                let mut out = Vec::with_capacity(d);
                let mut probe = ChartPoint::new(p.chart, p.coords.clone());
                for k in 0..d {
                    probe.coords[k] = p.coords[k] + h;
                    let plus = self.stencil_metric(&probe)?;
                    probe.coords[k] = p.coords[k] - h;
                    let minus = self.stencil_metric(&probe)?;
                    probe.coords[k] = p.coords[k];
                    let mut dg = SquareMatrix::zeros(d);
                    for i in 0..d {
                        for j in 0..d {
                            dg[(i, j)] = (plus[(i, j)] - minus[(i, j)]) / (2.0 * h);
                        }
                    }
                    out.push(dg);
                }
                Ok(out)
            }
        }
    }

    fn stencil_metric(&self, q: &ChartPoint) -> Result<SquareMatrix> {
        if !self.atlas.contains(q) {
            return Err(Error::StencilOutOfDomain {
                chart: q.chart,
                coords: q.coords.clone(),
            });
        }
        self.metric_at(q)
    }

    /// Symmetrized Christoffel symbols
    /// `Γ^k_ij = ½ Σ_n g^{kn} (∂_i g_nj + ∂_j g_ni − ∂_n g_ij)`.
    pub fn christoffel_at(&self, p: &ChartPoint) -> Result<ChristoffelTensor> {
        let ginv = self.inverse_at(p)?;
        let dg = self.metric_derivatives(p)?;
        let d = self.dim();
        let mut gamma = ChristoffelTensor::zeros(d);
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut acc = 0.0;
                    for n in 0..d {
                        acc += ginv[(k, n)] * (dg[i][(n, j)] + dg[j][(n, i)] - dg[n][(i, j)]);
                    }
                    gamma.set_pair(k, i, j, 0.5 * acc);
                }
            }
        }
        Ok(gamma)
    }

    /// The unsymmetrized form `½ Σ_n g^{kn} (2 ∂_j g_ni − ∂_n g_ij)` contracted
    /// with `v^i v^j`. Agrees with `christoffel_at(p).contract(v)`.
    pub fn unsymmetrized_contraction(&self, p: &ChartPoint, v: &[f64]) -> Result<Vec<f64>> {
        let ginv = self.inverse_at(p)?;
        let dg = self.metric_derivatives(p)?;
        let d = self.dim();
        Ok((0..d)
            .map(|k| {
                let mut acc = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        let mut s = 0.0;
                        for n in 0..d {
                            s += ginv[(k, n)] * (2.0 * dg[j][(n, i)] - dg[n][(i, j)]);
                        }
                        acc += 0.5 * s * v[i] * v[j];
                    }
                }
                acc
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::{euclidean_atlas, sphere_atlas, NORTH, SOUTH};
    use crate::numerics::max_abs_diff;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere() -> (Arc<Atlas>, MetricField) {
        let atlas = Arc::new(sphere_atlas());
        let m = sphere_metric(&atlas).unwrap();
        (atlas, m)
    }

    /// Γ^k_ij = ½λ⁻¹(λ_i δ_kj + λ_j δ_ki − λ_k δ_ij), λ = 4/(1+|x|²)²,
    /// λ_k = -16 x_k/(1+|x|²)³, written out independently of the library.
    fn conformal_oracle(x: &[f64], k: usize, i: usize, j: usize) -> f64 {
        let s = 1.0 + x[0] * x[0] + x[1] * x[1];
        let lam = 4.0 / (s * s);
        let dl = |a: usize| -16.0 * x[a] / (s * s * s);
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        0.5 / lam * (dl(i) * delta(k, j) + dl(j) * delta(k, i) - dl(k) * delta(i, j))
    }

    fn grid(radius: f64, n: usize) -> Vec<Vec<f64>> {
        let mut pts = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let x = -radius + 2.0 * radius * a as f64 / (n - 1) as f64;
                let y = -radius + 2.0 * radius * b as f64 / (n - 1) as f64;
                pts.push(vec![x, y]);
            }
        }
        pts
    }

    #[test]
    fn euclidean_metric_examples() {
        let atlas = Arc::new(euclidean_atlas(3).unwrap());
        let m = euclidean_metric(&atlas).unwrap();
        let p = ChartPoint::new(ChartId(0), [1.0, -2.0, 0.5]);
        assert_eq!(m.metric_at(&p).unwrap(), SquareMatrix::identity(3));
        assert_eq!(m.inverse_at(&p).unwrap(), SquareMatrix::identity(3));
        assert_eq!(m.christoffel_at(&p).unwrap().max_abs(), 0.0);
        let sph = Arc::new(sphere_atlas());
        assert!(matches!(euclidean_metric(&sph), Err(Error::AtlasMismatch(_))));
        assert!(matches!(sphere_metric(&atlas), Err(Error::AtlasMismatch(_))));
    }

    #[test]
    fn pullback_examples() {
        let (atlas, _) = sphere();
        let pb = pullback_metric(&atlas, FiniteDiffConfig::default()).unwrap();
        let g = pb.metric_at(&ChartPoint::new(NORTH, [0.0, 0.0])).unwrap();
        assert!(g.max_diff(&SquareMatrix::scaled_identity(2, 4.0)) <= 1e-6);
        let g = pb.metric_at(&ChartPoint::new(NORTH, [1.0, 0.0])).unwrap();
        assert!(g.max_diff(&SquareMatrix::identity(2)) <= 1e-6);

        let e = Arc::new(euclidean_atlas(2).unwrap());
        let pb = pullback_metric(&e, FiniteDiffConfig::default()).unwrap();
        let g = pb.metric_at(&ChartPoint::new(ChartId(0), [3.0, -1.0])).unwrap();
        assert!(g.max_diff(&SquareMatrix::identity(2)) <= 1e-9);
    }

    #[test]
    fn metric_at_examples() {
        let (_, m) = sphere();
        let g = m.metric_at(&ChartPoint::new(NORTH, [0.0, 0.0])).unwrap();
        assert!(g.max_diff(&SquareMatrix::scaled_identity(2, 4.0)) <= 1e-6);
        let g = m.metric_at(&ChartPoint::new(NORTH, [1.0, 1.0])).unwrap();
        assert!(g.max_diff(&SquareMatrix::scaled_identity(2, 4.0 / 9.0)) <= 1e-6);
    }

    #[test]
    fn inner_examples() {
        let atlas = Arc::new(euclidean_atlas(2).unwrap());
        let e = euclidean_metric(&atlas).unwrap();
        let p = ChartPoint::new(ChartId(0), [0.0, 0.0]);
        assert_eq!(e.inner(&p, &[3.0, 4.0], &[3.0, 4.0]).unwrap(), 25.0);
        assert_eq!(e.inner(&p, &[0.0, 0.0], &[1.0, 7.0]).unwrap(), 0.0);
        let (_, m) = sphere();
        let v = m
            .inner(&ChartPoint::new(NORTH, [0.0, 0.0]), &[1.0, 0.0], &[1.0, 0.0])
            .unwrap();
        assert!((v - 4.0).abs() <= 1e-6);
    }

    #[test]
    fn christoffel_examples_at_unit_circle() {
        let (_, m) = sphere();
        let g = m.christoffel_at(&ChartPoint::new(NORTH, [1.0, 0.0])).unwrap();
        assert!((g.get(0, 0, 0) + 1.0).abs() <= 1e-5);
        assert!((g.get(1, 0, 1) + 1.0).abs() <= 1e-5);
        assert!((g.get(0, 1, 1) - 1.0).abs() <= 1e-5);
    }

    #[test]
    fn finite_difference_christoffels_match_conformal_closed_form() {
        let (atlas, sm) = sphere();
        let pb = pullback_metric(&atlas, FiniteDiffConfig::default()).unwrap();
        for x in grid(1.4, 9).into_iter().filter(|x| x[0].hypot(x[1]) <= 2.0) {
            for field in [&sm, &pb] {
                for chart in [NORTH, SOUTH] {
                    let g = field.christoffel_at(&ChartPoint::new(chart, x.clone())).unwrap();
                    for k in 0..2 {
                        for i in 0..2 {
                            for j in 0..2 {
                                let o = conformal_oracle(&x, k, i, j);
                                assert!(
                                    (g.get(k, i, j) - o).abs() <= 1e-5,
                                    "{x:?} Γ^{k}_{i}{j}: {} vs {o}",
                                    g.get(k, i, j)
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn analytic_derivative_override() {
        let (_, m) = sphere();
        let m = m.with_derivatives(sphere_analytic_derivatives());
        let x = [0.4, -1.1];
        let g = m.christoffel_at(&ChartPoint::new(NORTH, x)).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((g.get(k, i, j) - conformal_oracle(&x, k, i, j)).abs() <= 1e-13);
                }
            }
        }
    }

    #[test]
    fn symmetry_and_positive_definiteness_on_grid() {
        let (_, m) = sphere();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for x in grid(3.0, 7) {
            for chart in [NORTH, SOUTH] {
                let p = ChartPoint::new(chart, x.clone());
                let g = m.metric_at(&p).unwrap();
                assert!(g.max_asymmetry() <= 1e-12);
                for _ in 0..20 {
                    let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    assert!(m.inner(&p, &[t.cos(), t.sin()], &[t.cos(), t.sin()]).unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn symmetry_defect_is_rejected() {
        let (_, m) = sphere();
        let bad = m.with_symmetry_defect(1e-3);
        let p = ChartPoint::new(NORTH, [0.2, 0.3]);
        assert!(bad.raw_components(&p).unwrap().max_asymmetry() >= 1e-3 * 0.999);
        assert!(matches!(bad.metric_at(&p), Err(Error::DegenerateMetric { .. })));
    }

    #[test]
    fn degenerate_metric_is_rejected() {
        let atlas = Arc::new(euclidean_atlas(2).unwrap());
        let mut m = euclidean_metric(&atlas).unwrap();
        m.components = Arc::new(|_, _| SquareMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]));
        let p = ChartPoint::new(ChartId(0), [0.0, 0.0]);
        assert!(matches!(m.metric_at(&p), Err(Error::DegenerateMetric { .. })));
    }

    #[test]
    fn christoffel_is_index_symmetric_and_matches_unsymmetrized_form() {
        let (atlas, sm) = sphere();
        let pb = pullback_metric(&atlas, FiniteDiffConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for x in grid(2.0, 5) {
            for field in [&sm, &pb] {
                for chart in [NORTH, SOUTH] {
                    let p = ChartPoint::new(chart, x.clone());
                    let g = field.christoffel_at(&p).unwrap();
                    for k in 0..2 {
                        assert_eq!(g.get(k, 0, 1), g.get(k, 1, 0));
                    }
                    let v = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                    let sym = g.contract(&v);
                    let raw = field.unsymmetrized_contraction(&p, &v).unwrap();
                    assert!(max_abs_diff(&sym, &raw) <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn inner_product_is_chart_covariant() {
        let (atlas, m) = sphere();
        let cfg = FiniteDiffConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for x in grid(2.5, 6) {
            let p = ChartPoint::new(NORTH, x.clone());
            let v = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let w = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let here = m.inner(&p, &v, &w).unwrap();
            let sv = atlas
                .push_velocity(SOUTH, &crate::charts::TangentSample::new(p.clone(), v), &cfg)
                .unwrap();
            let sw = atlas
                .push_velocity(SOUTH, &crate::charts::TangentSample::new(p.clone(), w), &cfg)
                .unwrap();
            let there = m.inner(&sv.base, &sv.velocity, &sw.velocity).unwrap();
            assert!((here - there).abs() <= 1e-6, "{x:?}");
        }
    }
}
