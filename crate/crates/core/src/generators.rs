//! Instance generators: the two classical examples, a greedy random sampler,
//! gradient-descent traces and a hill-climbing search for large ratios.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::linalg::{dist2, dot, norm2, random_gaussian};
use crate::norms::Gauge;
use crate::polyline::{is_self_contracted, length, Polyline};

/// (0,0), (0,1), (1,1), (1,0).
pub fn square_path() -> Polyline {
    Polyline::new(vec![
        vec![0.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 1.0],
        vec![1.0, 0.0],
    ])
    .expect("static points")
}

/// P_k = Σ_{j<k} (1/j) e_j for k = 1..n+1, in R^n.
pub fn harmonic_staircase(n: usize) -> Polyline {
    let n = n.max(1);
    let mut pts = Vec::with_capacity(n + 1);
    let mut cur = vec![0.0; n];
    pts.push(cur.clone());
    for j in 1..=n {
        cur[j - 1] = 1.0 / j as f64;
        pts.push(cur.clone());
    }
    Polyline::new(pts).expect("finite points")
}

/// Output of [`greedy_random`]. `starved` is set when a point could not be
/// placed within the attempt budget and the returned prefix is shorter than r.
#[derive(Clone, Debug)]
pub struct GreedyOutput {
    pub poly: Polyline,
    pub starved: bool,
}

const GREEDY_ATTEMPTS: usize = 4000;
const GREEDY_SHRINK_EVERY: usize = 60;

/// Appends points one at a time, accepting a candidate z iff j ↦ d(z, A_j) is
/// nonincreasing over the existing prefix.
pub fn greedy_random(gauge: &Gauge, n: usize, r: usize, seed: u64, proposal_scale: f64) -> Result<GreedyOutput> {
    if gauge.dim() != n {
        return input("gauge dimension differs from n");
    }
    if r < 2 {
        return input("greedy_random needs r ≥ 2");
    }
    if !(proposal_scale > 0.0 && proposal_scale.is_finite()) {
        return input("proposal_scale must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Vec<f64>> = vec![vec![0.0; n]];
    let mut starved = false;
    while pts.len() < r {
        let last = pts.last().expect("nonempty").clone();
        let mut s = proposal_scale;
        let mut placed = false;
        for attempt in 0..GREEDY_ATTEMPTS {
            if attempt > 0 && attempt % GREEDY_SHRINK_EVERY == 0 {
                s *= 0.7;
            }
            let g = random_gaussian(&mut rng, n);
            let z: Vec<f64> = last.iter().zip(&g).map(|(a, b)| a + s * b).collect();
            if accepts(gauge, &pts, &z) {
                pts.push(z);
                placed = true;
                break;
            }
        }
        if !placed {
            starved = true;
            break;
        }
    }
    let poly = Polyline::new(pts)?;
    debug_assert!(is_self_contracted(&poly, gauge)?.holds());
    Ok(GreedyOutput { poly, starved })
}

fn accepts(gauge: &Gauge, prefix: &[Vec<f64>], z: &[f64]) -> bool {
    let mut prev = f64::INFINITY;
    for p in prefix {
        let d = gauge.dist(z, p);
        if d > prev {
            return false;
        }
        prev = d;
    }
    true
}

// ---------------------------------------------------------------------------
// descent traces

/// Objective for [`descent_trace`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    /// f(x) = ½ (x − c)ᵀ Q (x − c).
    Quadratic {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        c: Vec<f64>,
    },
    /// f(x) = t·log Σ exp((a_i·x + b_i)/t).
    SmoothMax {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    /// Multilinear interpolation of values on a regular grid; `values` is
    /// row-major with the last axis varying fastest.
    Grid {
        origin: Vec<f64>,
        spacing: Vec<f64>,
        shape: Vec<usize>,
        values: Vec<f64>,
    },
}

fn default_temperature() -> f64 {
    0.1
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    Fixed { eta: f64 },
    /// Exact minimization along −∇f; quadratics only.
    ExactLineSearch,
}

impl FunctionSpec {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            FunctionSpec::Quadratic { q, c } => {
                if c.len() != n || q.len() != n || q.iter().any(|row| row.len() != n) {
                    return input("quadratic form dimensions do not match x0");
                }
                let m = DMatrix::from_fn(n, n, |i, j| q[i][j]);
                if (&m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
                    return input("Q is not symmetric");
                }
                let eig = SymmetricEigen::new(m);
                let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
                if lo < -1e-12 * (1.0 + eig.eigenvalues.amax()) {
                    return input(format!("Q is not positive semidefinite (eigenvalue {lo})"));
                }
            }
            FunctionSpec::SmoothMax { a, b, temperature } => {
                if a.is_empty() || a.len() != b.len() || a.iter().any(|r| r.len() != n) {
                    return input("affine pieces do not match x0");
                }
                if !(*temperature > 0.0) {
                    return input("temperature must be positive");
                }
            }
            FunctionSpec::Grid {
                origin,
                spacing,
                shape,
                values,
            } => {
                if origin.len() != n || spacing.len() != n || shape.len() != n {
                    return input("grid dimensions do not match x0");
                }
                if shape.iter().any(|&s| s < 2) || spacing.iter().any(|&h| !(h > 0.0)) {
                    return input("grid needs ≥ 2 nodes and positive spacing per axis");
                }
                if values.len() != shape.iter().product::<usize>() {
                    return input("grid value count does not match its shape");
                }
            }
        }
        Ok(())
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FunctionSpec::Quadratic { q, c } => {
                let d: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
                q.iter().map(|row| dot(row, &d)).collect()
            }
            FunctionSpec::SmoothMax { a, b, temperature } => {
                let z: Vec<f64> = a.iter().zip(b).map(|(ai, bi)| (dot(ai, x) + bi) / temperature).collect();
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = w.iter().sum();
                let mut g = vec![0.0; x.len()];
                for (ai, wi) in a.iter().zip(&w) {
                    for (gk, ak) in g.iter_mut().zip(ai) {
                        *gk += wi / s * ak;
                    }
                }
                g
            }
            FunctionSpec::Grid {
                origin,
                spacing,
                shape,
                values,
            } => grid_gradient(origin, spacing, shape, values, x),
        }
    }
}

/// Gradient of the multilinear interpolant, with x clamped to the grid box.
fn grid_gradient(origin: &[f64], spacing: &[f64], shape: &[usize], values: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut cell = vec![0usize; n];
    let mut frac = vec![0.0; n];
    for k in 0..n {
        let u = ((x[k] - origin[k]) / spacing[k]).clamp(0.0, (shape[k] - 1) as f64);
        let c = (u.floor() as usize).min(shape[k] - 2);
        cell[k] = c;
        frac[k] = u - c as f64;
    }
    let mut strides = vec![1usize; n];
    for k in (0..n.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    let mut g = vec![0.0; n];
    for corner in 0..(1usize << n) {
        let mut flat = 0;
        for k in 0..n {
            flat += (cell[k] + (corner >> k & 1)) * strides[k];
        }
        let v = values[flat];
        for (d, gd) in g.iter_mut().enumerate() {
            let mut w = 1.0;
            for k in 0..n {
                let bit = corner >> k & 1;
                if k == d {
                    w *= if bit == 1 { 1.0 } else { -1.0 } / spacing[k];
                } else {
                    w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                }
            }
            *gd += w * v;
        }
    }
    g
}

/// Gradient-descent polygonal trace from x0, and whether it is
/// self-contracted under `gauge`. Discrete traces need not be.
pub fn descent_trace(
    function: &FunctionSpec,
    x0: &[f64],
    rule: StepRule,
    max_steps: usize,
    gauge: &Gauge,
) -> Result<(Polyline, bool)> {
    let n = x0.len();
    function.validate(n)?;
    if gauge.dim() != n {
        return input("gauge dimension differs from x0");
    }
    if let StepRule::Fixed { eta } = rule {
        if !(eta >= 0.0 && eta.is_finite()) {
            return input("step size must be a nonnegative number");
        }
    }
    if matches!(rule, StepRule::ExactLineSearch) && !matches!(function, FunctionSpec::Quadratic { .. }) {
        return input("exact line search is only defined for quadratics");
    }
    let mut pts = vec![x0.to_vec()];
    let mut x = x0.to_vec();
    for _ in 0..max_steps {
        let g = function.gradient(&x);
        let gn = norm2(&g);
        if gn <= 1e-14 * (1.0 + norm2(&x)) {
            break;
        }
        let eta = match (rule, function) {
            (StepRule::Fixed { eta }, _) => eta,
            (StepRule::ExactLineSearch, FunctionSpec::Quadratic { q, .. }) => {
                let qg: Vec<f64> = q.iter().map(|row| dot(row, &g)).collect();
                let curv = dot(&g, &qg);
                if curv <= 0.0 {
                    break;
                }
                gn * gn / curv
            }
            _ => unreachable!("validated above"),
        };
        let next: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - eta * b).collect();
        if next == x {
            break;
        }
        pts.push(next.clone());
        x = next;
    }
    let poly = Polyline::new(pts)?;
    let sc = is_self_contracted(&poly, gauge)?.holds();
    Ok((poly, sc))
}

// ---------------------------------------------------------------------------
// adversarial search

/// ℓ/|A_1A_r|, or 0 when the chord is negligible.
pub fn ratio(poly: &Polyline) -> f64 {
    let c = poly.chord();
    let l = length(poly);
    if c <= 1e-9 * l.max(f64::MIN_POSITIVE) || c == 0.0 {
        0.0
    } else {
        l / c
    }
}

/// Hill-climbing search for self-contracted polylines with a large ratio
/// ℓ/|A_1A_r|. Seeds include the square path (maximum norm of R^2, r ≥ 4) and
/// the harmonic staircase (Euclidean, n ≥ r − 1) when they apply.
pub fn adversarial_ratio(gauge: &Gauge, n: usize, r: usize, budget: usize, seed: u64) -> Result<(Polyline, f64)> {
    let mut seeds = Vec::new();
    if gauge.is_max_norm_plane() && r >= 4 {
        seeds.push(pad_to(&square_path(), r)?);
    }
    if matches!(gauge.kind(), crate::norms::GaugeKind::Euclidean) && r >= 2 && n >= r - 1 {
        let h = harmonic_staircase(r - 1);
        let pts = h
            .points()
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.resize(n, 0.0);
                q
            })
            .collect();
        seeds.push(Polyline::new(pts)?);
    }
    adversarial_search(gauge, n, r, budget, seed, &seeds)
}

/// Repeats the last point until the polyline has r points.
fn pad_to(poly: &Polyline, r: usize) -> Result<Polyline> {
    let mut pts = poly.points().to_vec();
    while pts.len() < r {
        pts.push(poly.last().to_vec());
    }
    Polyline::new(pts)
}

/// [`adversarial_ratio`] with explicit seed polylines. Seeds that are not
/// self-contracted under `gauge` or have the wrong shape are skipped.
pub fn adversarial_search(
    gauge: &Gauge,
    n: usize,
    r: usize,
    budget: usize,
    seed: u64,
    seeds: &[Polyline],
) -> Result<(Polyline, f64)> {
    if budget == 0 {
        return input("budget must be at least 1");
    }
    if gauge.dim() != n || r < 2 {
        return input("adversarial search needs a gauge on R^n and r ≥ 2");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<Vec<f64>>> = seeds
        .iter()
        .filter(|p| p.dim() == n && p.len() == r)
        .filter(|p| is_self_contracted(p, gauge).map(|s| s.holds()).unwrap_or(false))
        .map(|p| p.points().to_vec())
        .collect();
    let restarts = 4usize.min(budget).max(1);
    for k in 0..restarts {
        let g = greedy_random(gauge, n, r, seed.wrapping_add(1 + k as u64), 1.0)?;
        if g.poly.len() == r {
            starts.push(g.poly.points().to_vec());
        }
    }
    if starts.is_empty() {
        starts.push(pad_to(&Polyline::new(vec![vec![0.0; n], vec![1.0; n]])?, r)?.points().to_vec());
    }
    let per_chain = (budget / starts.len()).max(1);
    let mut best: Option<(Vec<Vec<f64>>, f64)> = None;
    for start in starts {
        let mut cur = start;
        let mut cur_ratio = ratio(&Polyline::new(cur.clone())?);
        let size = cur.iter().map(|p| dist2(p, &cur[0])).fold(0.0, f64::max).max(1e-12);
        for step in 0..per_chain {
            let m = rng.gen_range(0..r);
            let sigma = size * 0.1 * (1.0 - step as f64 / per_chain as f64).max(0.01) * rng.gen::<f64>();
            let old = cur[m].clone();
            let g = random_gaussian(&mut rng, n);
            cur[m] = old.iter().zip(&g).map(|(a, b)| a + sigma * b).collect();
            if feasible_after_mutation(gauge, &cur, m) {
                let rr = ratio(&Polyline::new(cur.clone())?);
                if rr >= cur_ratio {
                    cur_ratio = rr;
                    continue;
                }
            }
            cur[m] = old;
        }
        let better = match &best {
            None => true,
            Some((_, b)) => cur_ratio > *b,
        };
        if better {
            best = Some((cur, cur_ratio));
        }
    }
    let (pts, rr) = best.expect("at least one chain");
    let poly = Polyline::new(pts)?;
    debug_assert!(is_self_contracted(&poly, gauge)?.holds());
    Ok((poly, rr))
}

/// Rechecks only the rows and entries touching vertex m, assuming the
/// polyline was exactly self-contracted before the mutation.
fn feasible_after_mutation(gauge: &Gauge, pts: &[Vec<f64>], m: usize) -> bool {
    // row k = m
    let mut prev = f64::INFINITY;
    for p in &pts[..=m] {
        let d = gauge.dist(&pts[m], p);
        if d > prev {
            return false;
        }
        prev = d;
    }
    // entry j = m in every later row
    for k in m + 1..pts.len() {
        let dm = gauge.dist(&pts[k], &pts[m]);
        if m > 0 && dm > gauge.dist(&pts[k], &pts[m - 1]) {
            return false;
        }
        if gauge.dist(&pts[k], &pts[m + 1]) > dm {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_path_examples() {
        let s = square_path();
        assert!(is_self_contracted(&s, &Gauge::max_norm(2)).unwrap().holds());
        assert!(!is_self_contracted(&s, &Gauge::euclidean(2)).unwrap().holds());
        assert_eq!(length(&s), 3.0);
    }

    #[test]
    fn harmonic_examples() {
        let h = harmonic_staircase(4);
        assert!((length(&h) - 25.0 / 12.0).abs() < 1e-15);
        assert!(is_self_contracted(&h, &Gauge::euclidean(4)).unwrap().holds());
        let mut prev = 0.0;
        for n in 2..=50 {
            let r = ratio(&harmonic_staircase(n));
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn greedy_is_feasible_and_deterministic() {
        for g in [Gauge::max_norm(2), Gauge::euclidean(3), Gauge::pnorm(2, 3.0).unwrap()] {
            let n = g.dim();
            let a = greedy_random(&g, n, 25, 9, 1.0).unwrap();
            let b = greedy_random(&g, n, 25, 9, 1.0).unwrap();
            assert_eq!(a.poly, b.poly);
            assert!(is_self_contracted(&a.poly, &g).unwrap().holds());
        }
    }

    #[test]
    fn last_point_is_always_acceptable() {
        let g = Gauge::euclidean(2);
        let out = greedy_random(&g, 2, 10, 4, 1.0).unwrap();
        let pts = out.poly.points();
        assert!(accepts(&g, pts, pts.last().unwrap()));
    }

    #[test]
    fn descent_examples() {
        let e = Gauge::euclidean(2);
        let iso = FunctionSpec::Quadratic {
            q: vec![vec![2.0, 0.0], vec![0.0, 2.0]],
            c: vec![1.0, -1.0],
        };
        let (p, sc) = descent_trace(&iso, &[3.0, 4.0], StepRule::ExactLineSearch, 50, &e).unwrap();
        assert!(sc);
        assert_eq!(p.len(), 2);
        assert!(dist2(p.last(), &[1.0, -1.0]) < 1e-12);

        let aniso = FunctionSpec::Quadratic {
            q: vec![vec![1.0, 0.0], vec![0.0, 10.0]],
            c: vec![0.0, 0.0],
        };
        let (p, _) = descent_trace(&aniso, &[1.0, 1.0], StepRule::Fixed { eta: 0.15 }, 60, &e).unwrap();
        assert!(p.len() > 10);

        let (p, sc) = descent_trace(&aniso, &[1.0, 1.0], StepRule::Fixed { eta: 0.0 }, 10, &e).unwrap();
        assert_eq!(p.len(), 1);
        assert!(sc);

        let bad = FunctionSpec::Quadratic {
            q: vec![vec![1.0, 0.0], vec![0.0, -1.0]],
            c: vec![0.0, 0.0],
        };
        assert!(descent_trace(&bad, &[1.0, 1.0], StepRule::Fixed { eta: 0.1 }, 10, &e).is_err());
    }

    #[test]
    fn smooth_max_and_grid_traces_run() {
        let e = Gauge::euclidean(2);
        let f = FunctionSpec::SmoothMax {
            a: vec![vec![1.0, 0.0], vec![-1.0, 0.5], vec![0.0, -1.0]],
            b: vec![0.0, 0.0, 0.0],
            temperature: 0.05,
        };
        let (p, _) = descent_trace(&f, &[2.0, 1.0], StepRule::Fixed { eta: 0.05 }, 100, &e).unwrap();
        assert!(p.len() > 1);

        // bowl x² + y² sampled on a 5x5 grid
        let mut values = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                let (x, y) = (i as f64 - 2.0, j as f64 - 2.0);
                values.push(x * x + y * y);
            }
        }
        let grid = FunctionSpec::Grid {
            origin: vec![-2.0, -2.0],
            spacing: vec![1.0, 1.0],
            shape: vec![5, 5],
            values,
        };
        let (p, _) = descent_trace(&grid, &[1.5, 1.2], StepRule::Fixed { eta: 0.1 }, 30, &e).unwrap();
        assert!(norm2(p.last()) < norm2(&[1.5, 1.2]));
    }

    #[test]
    fn adversarial_square_and_harmonic() {
        let (p, rr) = adversarial_ratio(&Gauge::max_norm(2), 2, 4, 400, 1).unwrap();
        assert!(rr >= 3.0 - 1e-12);
        assert!(is_self_contracted(&p, &Gauge::max_norm(2)).unwrap().holds());

        let h = harmonic_staircase(6);
        let (_, rr) = adversarial_ratio(&Gauge::euclidean(6), 6, 7, 300, 2).unwrap();
        assert!(rr >= ratio(&h) - 1e-12);
    }
}
