//! Gauges on R^n and the unit-ball primitives built on them.
//!
//! A gauge is a positively homogeneous, subadditive, definite functional. The
//! distance it induces is `d(x, y) = ‖y − x‖`, so for asymmetric gauges the
//! order of the arguments matters.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::{Arc, OnceLock};

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{input, Error, Result};
use crate::linalg::{self, dot, norm2, normalize, random_unit, scale};

pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Active-constraint slack used for facets and boundary normals.
pub const ACTIVE_TOL: f64 = 1e-9;

#[derive(Clone)]
pub enum GaugeKind {
    Euclidean,
    /// p ∈ [1, ∞]; `f64::INFINITY` is the maximum norm.
    PNorm(f64),
    /// Ball {x : a_i·x ≤ 1 for all i}.
    Polytope(Vec<Vec<f64>>),
    /// Ball B × [−1, 1] over the base gauge; the last coordinate is the height.
    Cylinder(Box<Gauge>),
    Custom(Evaluator),
}

impl fmt::Debug for GaugeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GaugeKind::Euclidean => write!(f, "Euclidean"),
            GaugeKind::PNorm(p) => write!(f, "PNorm({p})"),
            GaugeKind::Polytope(h) => write!(f, "Polytope({} halfspaces)", h.len()),
            GaugeKind::Cylinder(b) => write!(f, "Cylinder({:?})", b.kind),
            GaugeKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Clone)]
pub struct Gauge {
    dim: usize,
    kind: GaugeKind,
    symmetric: bool,
    radii: OnceLock<(f64, f64)>,
}

impl fmt::Debug for Gauge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gauge")
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("symmetric", &self.symmetric)
            .finish()
    }
}

/// A point of the unit sphere together with its external normals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub point: Vec<f64>,
    pub normals: Vec<Vec<f64>>,
}

impl Gauge {
    pub fn euclidean(n: usize) -> Self {
        Self::raw(n, GaugeKind::Euclidean, true)
    }

    pub fn max_norm(n: usize) -> Self {
        Self::raw(n, GaugeKind::PNorm(f64::INFINITY), true)
    }

    pub fn pnorm(n: usize, p: f64) -> Result<Self> {
        if n == 0 {
            return input("dimension must be positive");
        }
        if p.is_nan() || p < 1.0 {
            return input(format!("p = {p} is not in [1, ∞]"));
        }
        if p == 2.0 {
            return Ok(Self::euclidean(n));
        }
        Ok(Self::raw(n, GaugeKind::PNorm(p), true))
    }

    /// Polytope ball {x : a_i·x ≤ 1}. When `symmetric` is `None` the flag is
    /// inferred from whether every a_i has its negative among the halfspaces.
    pub fn polytope(n: usize, halfspaces: Vec<Vec<f64>>, symmetric: Option<bool>) -> Result<Self> {
        if n == 0 {
            return input("dimension must be positive");
        }
        if halfspaces.is_empty() {
            return input("polytope needs at least one halfspace");
        }
        for (i, a) in halfspaces.iter().enumerate() {
            if a.len() != n {
                return input(format!("halfspace {i} has length {} in R^{n}", a.len()));
            }
            if a.iter().any(|v| !v.is_finite()) || norm2(a) == 0.0 {
                return input(format!("halfspace {i} is zero or not finite"));
            }
        }
        let paired = halfspaces.iter().all(|a| {
            halfspaces
                .iter()
                .any(|b| a.iter().zip(b).all(|(x, y)| (x + y).abs() <= 1e-9 * (1.0 + x.abs())))
        });
        let symmetric = match symmetric {
            Some(true) if !paired => {
                return input("polytope flagged symmetric but some halfspace lacks its negative")
            }
            Some(s) => s,
            None => paired,
        };
        // boundedness: the a_i must positively span R^n
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            dirs.push(linalg::unit(n, i));
            dirs.push(scale(&linalg::unit(n, i), -1.0));
        }
        for _ in 0..2000 {
            dirs.push(random_unit(&mut rng, n));
        }
        for d in &dirs {
            let m = halfspaces.iter().map(|a| dot(a, d)).fold(f64::NEG_INFINITY, f64::max);
            if m <= 1e-12 {
                return input("polytope ball is unbounded: halfspaces do not positively span R^n");
            }
        }
        Ok(Self::raw(n, GaugeKind::Polytope(halfspaces), symmetric))
    }

    pub fn custom(n: usize, f: Evaluator, symmetric: bool) -> Self {
        Self::raw(n, GaugeKind::Custom(f), symmetric)
    }

    /// The gauge of B × [−1, 1] on R^{n+1}.
    pub fn cylinder(base: Gauge) -> Self {
        let sym = base.symmetric;
        Self::raw(base.dim + 1, GaugeKind::Cylinder(Box::new(base)), sym)
    }

    /// Symmetric polytope whose halfspaces are tangent to the Euclidean unit
    /// sphere: ±e_i plus `extra_pairs` random ± pairs. Every halfspace is a
    /// facet and the inradius is 1.
    pub fn random_symmetric_polytope(n: usize, extra_pairs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hs = Vec::new();
        for i in 0..n {
            hs.push(linalg::unit(n, i));
            hs.push(scale(&linalg::unit(n, i), -1.0));
        }
        for _ in 0..extra_pairs {
            let u = random_unit(&mut rng, n);
            hs.push(scale(&u, -1.0));
            hs.push(u);
        }
        Self::polytope(n, hs, Some(true)).expect("tangent halfspaces bound the ball")
    }

    fn raw(dim: usize, kind: GaugeKind, symmetric: bool) -> Self {
        Self {
            dim,
            kind,
            symmetric,
            radii: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &GaugeKind {
        &self.kind
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// True for the maximum norm of R^2, given either as p = ∞ or as the
    /// unit square polytope.
    pub fn is_max_norm_plane(&self) -> bool {
        if self.dim != 2 {
            return false;
        }
        match &self.kind {
            GaugeKind::PNorm(p) => p.is_infinite(),
            GaugeKind::Polytope(hs) => {
                let want = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
                want.iter().all(|w| {
                    hs.iter().any(|a| (a[0] - w[0]).abs() < 1e-12 && (a[1] - w[1]).abs() < 1e-12)
                }) && hs.iter().all(|a| {
                    want.iter().any(|w| (a[0] - w[0]).abs() < 1e-12 && (a[1] - w[1]).abs() < 1e-12)
                })
            }
            _ => false,
        }
    }

    /// Halfspaces of the implied polytope for polytope kinds and p ∈ {1, ∞}.
    /// Order for p = ∞ is [+e1, −e1, +e2, −e2, ...]; for p = 1 the sign
    /// vectors in binary order with bit i set meaning a negative i-th entry.
    pub fn facets(&self) -> Option<Vec<Vec<f64>>> {
        let n = self.dim;
        match &self.kind {
            GaugeKind::Polytope(hs) => Some(hs.clone()),
            GaugeKind::PNorm(p) if p.is_infinite() => {
                let mut out = Vec::with_capacity(2 * n);
                for i in 0..n {
                    out.push(linalg::unit(n, i));
                    out.push(scale(&linalg::unit(n, i), -1.0));
                }
                Some(out)
            }
            GaugeKind::PNorm(p) if *p == 1.0 && n <= 16 => Some(
                (0..(1usize << n))
                    .map(|mask| {
                        (0..n)
                            .map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 })
                            .collect()
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// ‖x‖ with a dimension check.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return input(format!("vector of length {} for a gauge on R^{}", x.len(), self.dim));
        }
        Ok(self.norm(x))
    }

    /// ‖x‖ without the dimension check.
    pub fn norm(&self, x: &[f64]) -> f64 {
        match &self.kind {
            GaugeKind::Euclidean => scaled_pnorm(x.iter().copied(), 2.0),
            GaugeKind::PNorm(p) => scaled_pnorm(x.iter().copied(), *p),
            GaugeKind::Polytope(hs) => hs.iter().map(|a| dot(a, x)).fold(0.0, f64::max),
            GaugeKind::Cylinder(base) => {
                let n = base.dim;
                base.norm(&x[..n]).max(x[n].abs())
            }
            GaugeKind::Custom(f) => f(x),
        }
    }

    /// d(a, b) = ‖b − a‖.
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let diff = a.iter().zip(b).map(|(x, y)| y - x);
        match &self.kind {
            GaugeKind::Euclidean => scaled_pnorm(diff, 2.0),
            GaugeKind::PNorm(p) => scaled_pnorm(diff, *p),
            GaugeKind::Polytope(hs) => hs
                .iter()
                .map(|h| h.iter().zip(a.iter().zip(b)).map(|(hi, (x, y))| hi * (y - x)).sum())
                .fold(0.0, f64::max),
            _ => self.norm(&diff.collect::<Vec<_>>()),
        }
    }

    /// The boundary point in the given direction and its external normals.
    pub fn boundary_point(&self, direction: &[f64]) -> Result<BoundaryPoint> {
        let v = self.evaluate(direction)?;
        if direction.iter().all(|&d| d == 0.0) {
            return input("zero direction has no boundary point");
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Numeric(format!("gauge value {v} for a nonzero direction")));
        }
        let point = scale(direction, 1.0 / v);
        let normals = self.normals_at(&point);
        if normals.is_empty() {
            return Err(Error::Numeric("no active normal at boundary point".into()));
        }
        Ok(BoundaryPoint { point, normals })
    }

    /// External unit normals at a point of the unit sphere.
    fn normals_at(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n = self.dim;
        match &self.kind {
            GaugeKind::Euclidean => normalize(x).into_iter().collect(),
            GaugeKind::PNorm(p) if p.is_infinite() => {
                let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let mut out = Vec::new();
                for i in 0..n {
                    if x[i].abs() >= m * (1.0 - ACTIVE_TOL) {
                        out.push(scale(&linalg::unit(n, i), x[i].signum()));
                    }
                }
                out
            }
            GaugeKind::PNorm(p) if *p == 1.0 => {
                let free: Vec<usize> = (0..n).filter(|&i| x[i].abs() <= ACTIVE_TOL / 2.0).collect();
                let base: Vec<f64> =
                    x.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect();
                let cap = free.len().min(12);
                let s = 1.0 / (n as f64).sqrt();
                (0..(1usize << cap))
                    .map(|mask| {
                        let mut sgn = base.clone();
                        for (b, &i) in free.iter().take(cap).enumerate() {
                            sgn[i] = if mask >> b & 1 == 1 { -1.0 } else { 1.0 };
                        }
                        scale(&sgn, s)
                    })
                    .collect()
            }
            GaugeKind::PNorm(p) => {
                let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let g: Vec<f64> =
                    x.iter().map(|v| v.signum() * (v.abs() / m).powf(p - 1.0)).collect();
                normalize(&g).into_iter().collect()
            }
            GaugeKind::Polytope(hs) => {
                let m = hs.iter().map(|a| dot(a, x)).fold(f64::NEG_INFINITY, f64::max);
                hs.iter()
                    .filter(|a| dot(a, x) >= m - ACTIVE_TOL)
                    .filter_map(|a| normalize(a))
                    .collect()
            }
            GaugeKind::Cylinder(base) => {
                let b = base.norm(&x[..n - 1]);
                let h = x[n - 1];
                let mut out = Vec::new();
                if h.abs() >= b - ACTIVE_TOL {
                    out.push(scale(&linalg::unit(n, n - 1), h.signum()));
                }
                if b >= h.abs() - ACTIVE_TOL && b > 0.0 {
                    let xb = scale(&x[..n - 1], 1.0 / b);
                    for nu in base.normals_at(&xb) {
                        let mut v = nu;
                        v.push(0.0);
                        out.push(v);
                    }
                }
                out
            }
            GaugeKind::Custom(f) => {
                let h = 1e-6 * norm2(x).max(1.0);
                let g: Vec<f64> = (0..n)
                    .map(|i| {
                        let mut a = x.to_vec();
                        let mut b = x.to_vec();
                        a[i] += h;
                        b[i] -= h;
                        (f(&a) - f(&b)) / (2.0 * h)
                    })
                    .collect();
                normalize(&g).into_iter().collect()
            }
        }
    }

    /// (ρ, R): the smallest and largest Euclidean norm over the unit sphere.
    pub fn radii(&self) -> (f64, f64) {
        *self.radii.get_or_init(|| self.compute_radii())
    }

    pub fn inradius(&self) -> f64 {
        self.radii().0
    }

    pub fn circumradius(&self) -> f64 {
        self.radii().1
    }

    /// Upper bound on the Euclidean diameter of the unit ball (exact for
    /// symmetric gauges).
    pub fn diameter(&self) -> f64 {
        2.0 * self.circumradius()
    }

    fn compute_radii(&self) -> (f64, f64) {
        let n = self.dim as f64;
        match &self.kind {
            GaugeKind::Euclidean => (1.0, 1.0),
            GaugeKind::PNorm(p) => {
                let e = if p.is_infinite() { 0.5 } else { 0.5 - 1.0 / p };
                let k = n.powf(e);
                if *p >= 2.0 {
                    (1.0, k)
                } else {
                    (k, 1.0)
                }
            }
            GaugeKind::Polytope(hs) => {
                let rho = hs.iter().map(|a| 1.0 / norm2(a)).fold(f64::INFINITY, f64::min);
                let big = polytope_circumradius(self.dim, hs).unwrap_or_else(|| self.sampled_radii().1);
                (rho, big)
            }
            GaugeKind::Cylinder(base) => {
                let (rb, bb) = base.radii();
                (rb.min(1.0), (bb * bb + 1.0).sqrt())
            }
            GaugeKind::Custom(_) => self.sampled_radii(),
        }
    }

    fn sampled_radii(&self) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(0xba11);
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for _ in 0..20_000 {
            let d = random_unit(&mut rng, self.dim);
            let r = 1.0 / self.norm(&d);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    }

    /// Short content hash used in provenance headers.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&GaugeSpec::from(self.clone())).unwrap_or_default();
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

/// p-norm with the coordinates rescaled by their maximum first.
fn scaled_pnorm<I: Iterator<Item = f64> + Clone>(x: I, p: f64) -> f64 {
    if p == 2.0 {
        // plain sum of squares unless it left the safe exponent range
        let s: f64 = x.clone().map(|v| v * v).sum();
        if (1e-280..1e280).contains(&s) {
            return s.sqrt();
        }
    }
    let m = x.clone().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 || p.is_infinite() {
        return m;
    }
    if p == 1.0 {
        return x.map(f64::abs).sum();
    }
    if p == 2.0 {
        return m * x.map(|v| (v / m) * (v / m)).sum::<f64>().sqrt();
    }
    m * x.map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Largest vertex norm by enumerating n-subsets of halfspaces.
fn polytope_circumradius(n: usize, hs: &[Vec<f64>]) -> Option<f64> {
    let m = hs.len();
    let combos = binomial(m, n)?;
    if combos > 400_000 {
        return None;
    }
    let mut best: f64 = 0.0;
    for idx in (0..m).combinations(n) {
        let a = DMatrix::from_fn(n, n, |i, j| hs[idx[i]][j]);
        let Some(lu) = Some(a.lu()) else { continue };
        let Some(x) = lu.solve(&DVector::from_element(n, 1.0)) else { continue };
        let x: Vec<f64> = x.iter().copied().collect();
        if x.iter().any(|v| !v.is_finite()) {
            continue;
        }
        if hs.iter().all(|h| dot(h, &x) <= 1.0 + 1e-9) {
            best = best.max(norm2(&x));
        }
    }
    (best > 0.0).then_some(best)
}

fn binomial(m: usize, k: usize) -> Option<u64> {
    let mut acc: u64 = 1;
    for i in 0..k.min(m) {
        acc = acc.checked_mul((m - i) as u64)? / (i as u64 + 1);
    }
    Some(if k > m { 0 } else { acc })
}

/// A point of the mediatrix M(A, B) = {z : ‖A − z‖ = ‖B − z‖} on the ray
/// `origin + t·direction`, t ≥ 0, or `None` when f(z) = ‖A − z‖ − ‖B − z‖
/// keeps its sign up to radius 10⁶·|AB|.
pub fn mediatrix_point(
    gauge: &Gauge,
    a: &[f64],
    b: &[f64],
    origin: &[f64],
    direction: &[f64],
) -> Result<Option<Vec<f64>>> {
    let n = gauge.dim();
    for v in [a, b, origin, direction] {
        if v.len() != n {
            return input("dimension mismatch in mediatrix search");
        }
    }
    let ab = linalg::dist2(a, b);
    if ab == 0.0 {
        return input("mediatrix of a point with itself is undefined");
    }
    let Some(d) = normalize(direction) else {
        return input("zero ray direction");
    };
    let at = |t: f64| -> Vec<f64> { origin.iter().zip(&d).map(|(o, di)| o + t * di).collect() };
    let f = |t: f64| -> f64 {
        let z = at(t);
        gauge.dist(&z, a) - gauge.dist(&z, b)
    };
    let tol = 1e-10 * ab;
    let f0 = f(0.0);
    if f0.abs() <= tol {
        return Ok(Some(origin.to_vec()));
    }
    let limit = 1e6 * ab;
    let mut lo = 0.0;
    let mut flo = f0;
    let mut step = 1e-3 * ab;
    let mut hi = step;
    let mut found = false;
    while hi <= limit {
        let fh = f(hi);
        if fh.abs() <= tol {
            return Ok(Some(at(hi)));
        }
        if fh.signum() != flo.signum() {
            found = true;
            break;
        }
        lo = hi;
        flo = fh;
        step *= 1.5;
        hi += step;
    }
    if !found {
        return Ok(None);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= tol {
            return Ok(Some(at(mid)));
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if f(mid).abs() <= 10.0 * tol {
        Ok(Some(at(mid)))
    } else {
        Err(Error::Numeric("mediatrix bisection did not converge".into()))
    }
}

/// Grid resolution of the angle at P used by [`chord_gap`]; divisible by 2, 3
/// and 4 so the common angles π/6, π/4, π/3 fall on the grid.
const CHORD_GRID: usize = 2880;

/// Sampled estimate of Δ(α) = inf{|PQ| : P, Q ∈ ∂B, ∠OPQ ≤ α}.
///
/// For each sampled P a rotation plane through −P is fixed, and rays from P at
/// angles θ = kπ/(2·2880) ≤ α inside that plane are followed to their exit
/// point Q. Using an absolute angle grid makes the estimate nonincreasing in α
/// for a fixed `seed`.
pub fn chord_gap(gauge: &Gauge, alpha: f64, sample_count: usize, seed: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < FRAC_PI_2) {
        return input(format!("alpha = {alpha} is not in (0, π/2)"));
    }
    if sample_count == 0 {
        return input("sample_count must be positive");
    }
    let n = gauge.dim();
    if n < 2 {
        // the sphere of R^1 is two points: the only chord is the diameter
        let (_, r) = gauge.radii();
        return Ok(gauge.inradius() + r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = FRAC_PI_2 / CHORD_GRID as f64;
    let kmax = ((alpha / step) + 1e-9).floor() as usize;
    let mut best = f64::INFINITY;
    for _ in 0..sample_count {
        let dir = random_unit(&mut rng, n);
        let p = gauge.boundary_point(&dir)?.point;
        let inward = scale(&dir, -1.0);
        let w = loop {
            let g = random_unit(&mut rng, n);
            let c = dot(&g, &inward);
            let perp: Vec<f64> = g.iter().zip(&inward).map(|(gi, ui)| gi - c * ui).collect();
            if let Some(u) = normalize(&perp) {
                break u;
            }
        };
        for k in 0..=kmax {
            let th = k as f64 * step;
            let u: Vec<f64> = inward
                .iter()
                .zip(&w)
                .map(|(a, b)| th.cos() * a + th.sin() * b)
                .collect();
            let t = exit_distance(gauge, &p, &u);
            best = best.min(t);
        }
    }
    Ok(best)
}

/// Largest t with ‖p + t·u‖ ≤ 1 for p on the sphere and u a unit vector.
fn exit_distance(gauge: &Gauge, p: &[f64], u: &[f64]) -> f64 {
    let at = |t: f64| -> f64 {
        let z: Vec<f64> = p.iter().zip(u).map(|(a, b)| a + t * b).collect();
        gauge.norm(&z)
    };
    let (_, big) = gauge.radii();
    let span = 2.0 * big * 1.01 + 1e-12;
    if at(span * 1e-9) > 1.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = span;
    while at(hi) <= 1.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if at(mid) <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Random point of the sphere of the gauge.
pub fn random_boundary_point<R: Rng + ?Sized>(gauge: &Gauge, rng: &mut R) -> BoundaryPoint {
    loop {
        let d = random_unit(rng, gauge.dim());
        if let Ok(bp) = gauge.boundary_point(&d) {
            return bp;
        }
    }
}

// ---------------------------------------------------------------------------
// serialization

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PValue {
    Num(f64),
    Text(String),
}

/// JSON shape of a gauge.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GaugeSpec {
    pub dim: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<PValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halfspaces: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetric: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Box<GaugeSpec>>,
}

impl From<Gauge> for GaugeSpec {
    fn from(g: Gauge) -> Self {
        let mut spec = GaugeSpec {
            dim: g.dim,
            kind: String::new(),
            p: None,
            halfspaces: None,
            symmetric: Some(g.symmetric),
            base: None,
        };
        match g.kind {
            GaugeKind::Euclidean => spec.kind = "euclidean".into(),
            GaugeKind::PNorm(p) => {
                spec.kind = "pnorm".into();
                spec.p = Some(if p.is_infinite() {
                    PValue::Text("inf".into())
                } else {
                    PValue::Num(p)
                });
            }
            GaugeKind::Polytope(hs) => {
                spec.kind = "polytope".into();
                spec.halfspaces = Some(hs);
            }
            GaugeKind::Cylinder(b) => {
                spec.kind = "cylinder".into();
                spec.base = Some(Box::new(GaugeSpec::from(*b)));
            }
            GaugeKind::Custom(_) => spec.kind = "custom".into(),
        }
        spec
    }
}

impl TryFrom<GaugeSpec> for Gauge {
    type Error = Error;

    fn try_from(s: GaugeSpec) -> Result<Self> {
        let g = match s.kind.as_str() {
            "euclidean" => Gauge::euclidean(s.dim),
            "pnorm" => {
                let p = match s.p {
                    Some(PValue::Num(p)) => p,
                    Some(PValue::Text(t)) if matches!(t.as_str(), "inf" | "Infinity" | "∞") => {
                        f64::INFINITY
                    }
                    Some(PValue::Text(t)) => t
                        .parse::<f64>()
                        .map_err(|_| Error::Input(format!("bad p value {t:?}")))?,
                    None => return input("pnorm gauge needs \"p\""),
                };
                Gauge::pnorm(s.dim, p)?
            }
            "polytope" => {
                let hs = s.halfspaces.ok_or_else(|| Error::Input("polytope needs halfspaces".into()))?;
                Gauge::polytope(s.dim, hs, s.symmetric)?
            }
            "cylinder" => {
                let b = s.base.ok_or_else(|| Error::Input("cylinder needs a base gauge".into()))?;
                let base = Gauge::try_from(*b)?;
                if base.dim + 1 != s.dim {
                    return input("cylinder dimension must be base dimension + 1");
                }
                Gauge::cylinder(base)
            }
            "custom" => return input("custom gauges cannot be loaded from JSON"),
            other => return input(format!("unknown gauge kind {other:?}")),
        };
        if s.dim == 0 || g.dim != s.dim {
            return input("gauge dimension mismatch");
        }
        if let (Some(flag), false) = (s.symmetric, matches!(g.kind, GaugeKind::Polytope(_))) {
            if !flag {
                return input("euclidean and p-norm gauges are symmetric");
            }
        }
        Ok(g)
    }
}

impl Serialize for Gauge {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        GaugeSpec::from(self.clone()).serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Gauge {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let spec = GaugeSpec::deserialize(de)?;
        Gauge::try_from(spec).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    fn square() -> Gauge {
        Gauge::polytope(
            2,
            vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(Gauge::max_norm(2).evaluate(&[3.0, -4.0]).unwrap(), 4.0);
        assert_eq!(Gauge::euclidean(2).evaluate(&[3.0, 4.0]).unwrap(), 5.0);
        let x = [0.5, -0.25];
        let a = square().evaluate(&x).unwrap();
        assert_eq!(a, 0.5);
        assert_eq!(a, Gauge::max_norm(2).evaluate(&x).unwrap());
        assert!(square().is_symmetric());
        assert!(square().is_max_norm_plane());
    }

    #[test]
    fn evaluate_rejects_dimension_mismatch() {
        assert!(matches!(Gauge::euclidean(3).evaluate(&[1.0]), Err(Error::Input(_))));
    }

    #[test]
    fn boundary_point_examples() {
        let bp = Gauge::euclidean(2).boundary_point(&[0.0, 2.0]).unwrap();
        assert_eq!(bp.point, vec![0.0, 1.0]);
        assert_eq!(bp.normals, vec![vec![0.0, 1.0]]);

        let bp = Gauge::max_norm(2).boundary_point(&[1.0, 1.0]).unwrap();
        assert_eq!(bp.point, vec![1.0, 1.0]);
        assert_eq!(bp.normals, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);

        let bp = Gauge::max_norm(2).boundary_point(&[2.0, 1.0]).unwrap();
        assert_eq!(bp.point, vec![1.0, 0.5]);
        assert_eq!(bp.normals, vec![vec![1.0, 0.0]]);

        assert!(Gauge::euclidean(2).boundary_point(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn cylinder_normals_at_rim() {
        let g = Gauge::cylinder(Gauge::euclidean(2));
        let bp = g.boundary_point(&[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(bp.normals.len(), 2);
        let bp = g.boundary_point(&[0.0, 0.0, -3.0]).unwrap();
        assert_eq!(bp.normals, vec![vec![0.0, 0.0, -1.0]]);
    }

    #[test]
    fn radii_of_common_gauges() {
        let (r, big) = Gauge::max_norm(3).radii();
        assert_eq!(r, 1.0);
        assert!((big - 3f64.sqrt()).abs() < 1e-15);
        let (r, big) = Gauge::pnorm(4, 1.0).unwrap().radii();
        assert!((r - 0.5).abs() < 1e-15);
        assert_eq!(big, 1.0);
        let (r, big) = square().radii();
        assert_eq!(r, 1.0);
        assert!((big - 2f64.sqrt()).abs() < 1e-12);
        let (r, big) = Gauge::cylinder(Gauge::euclidean(2)).radii();
        assert_eq!(r, 1.0);
        assert!((big - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mediatrix_examples() {
        let e = Gauge::euclidean(2);
        let z = mediatrix_point(&e, &[0.0, 1.0], &[0.0, 0.0], &[0.0, 0.5], &[1.0, 0.0])
            .unwrap()
            .unwrap();
        assert_eq!(z, vec![0.0, 0.5]);

        let z = mediatrix_point(&e, &[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0])
            .unwrap()
            .unwrap();
        assert!((z[0] - 0.5).abs() < 1e-9 && (z[1] - 0.5).abs() < 1e-9);

        let m = Gauge::max_norm(2);
        let z = mediatrix_point(&m, &[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0])
            .unwrap()
            .unwrap();
        assert!((z[0] - 0.5).abs() < 1e-9 && z[1].abs() < 1e-12);

        assert!(mediatrix_point(&e, &[1.0, 0.0], &[1.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]).is_err());
        // ray moving away from the bisector never crosses it
        let none = mediatrix_point(&e, &[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[-1.0, 0.0]).unwrap();
        assert!(none.is_none());
    }

    #[test]
    fn chord_gap_euclidean_closed_form() {
        let e = Gauge::euclidean(2);
        for a in [FRAC_PI_6, FRAC_PI_4, FRAC_PI_3] {
            let d = chord_gap(&e, a, 64, 1).unwrap();
            assert!((d - 2.0 * a.cos()).abs() < 1e-3, "alpha {a}: {d}");
        }
    }

    #[test]
    fn serde_round_trip() {
        let text = r#"{"dim":2,"kind":"pnorm","p":"inf","symmetric":true}"#;
        let g: Gauge = serde_json::from_str(text).unwrap();
        assert!(g.is_max_norm_plane());
        let back = serde_json::to_string(&g).unwrap();
        let g2: Gauge = serde_json::from_str(&back).unwrap();
        assert_eq!(g2.norm(&[3.0, -4.0]), 4.0);

        let cyl = Gauge::cylinder(Gauge::pnorm(2, 3.0).unwrap());
        let s = serde_json::to_string(&cyl).unwrap();
        let c2: Gauge = serde_json::from_str(&s).unwrap();
        assert_eq!(c2.dim(), 3);
        assert_eq!(c2.norm(&[0.0, 0.0, -2.0]), 2.0);

        assert!(serde_json::from_str::<Gauge>(r#"{"dim":2,"kind":"blob"}"#).is_err());
        assert!(serde_json::from_str::<Gauge>(
            r#"{"dim":1,"kind":"polytope","halfspaces":[[1.0]]}"#
        )
        .is_err());
    }

    #[test]
    fn asymmetric_polytope_flag_is_inferred() {
        let g = Gauge::polytope(1, vec![vec![1.0], vec![-2.0]], None).unwrap();
        assert!(!g.is_symmetric());
        assert_eq!(g.norm(&[-1.0]), 2.0);
        assert!(Gauge::polytope(1, vec![vec![1.0], vec![-2.0]], Some(true)).is_err());
    }
}
