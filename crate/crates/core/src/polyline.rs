//! Ordered vertex lists and the functionals evaluated on them.

use serde::{Deserialize, Serialize};

use crate::error::{hypothesis, input, Error, Result};
use crate::linalg::{dist2, Subspace};
use crate::norms::Gauge;

/// The vertex vector (A_1, ..., A_r) in R^n, r ≥ 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl Polyline {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return input("a polyline needs at least one point");
        };
        let dim = first.len();
        if dim == 0 {
            return input("points must have positive dimension");
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return input(format!("point {} has dimension {} instead of {dim}", i + 1, p.len()));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return input(format!("point {} has a non-finite coordinate", i + 1));
            }
        }
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn first(&self) -> &[f64] {
        &self.points[0]
    }

    pub fn last(&self) -> &[f64] {
        &self.points[self.points.len() - 1]
    }

    /// Subvector at the given (0-based, increasing) indices.
    pub fn subvector(&self, idx: &[usize]) -> Result<Self> {
        if idx.windows(2).any(|w| w[0] >= w[1]) {
            return input("subvector indices must be strictly increasing");
        }
        if idx.iter().any(|&i| i >= self.len()) {
            return input("subvector index out of range");
        }
        Self::new(idx.iter().map(|&i| self.points[i].clone()).collect())
    }

    /// Euclidean |A_1 A_r|.
    pub fn chord(&self) -> f64 {
        dist2(self.first(), self.last())
    }

    pub fn translated(&self, v: &[f64]) -> Result<Self> {
        if v.len() != self.dim {
            return input("translation vector dimension mismatch");
        }
        Ok(Self {
            dim: self.dim,
            points: self
                .points
                .iter()
                .map(|p| p.iter().zip(v).map(|(a, b)| a + b).collect())
                .collect(),
        })
    }

    fn check_gauge(&self, gauge: &Gauge) -> Result<()> {
        if gauge.dim() != self.dim {
            return input(format!(
                "polyline in R^{} but gauge on R^{}",
                self.dim,
                gauge.dim()
            ));
        }
        Ok(())
    }
}

/// ℓ(A_1, ..., A_r): the sum of Euclidean segment lengths.
pub fn length(poly: &Polyline) -> f64 {
    poly.points.windows(2).map(|w| dist2(&w[0], &w[1])).sum()
}

/// ℓ_Π: the length of the projected vertex list.
pub fn projected_length(poly: &Polyline, sub: &Subspace) -> f64 {
    poly.points.windows(2).map(|w| sub.proj_dist(&w[0], &w[1])).sum()
}

/// Outcome of the self-contracted check. The witness (i, j, k) counts
/// positions from 1 and satisfies i < j ≤ k with ‖A_j − A_k‖ > ‖A_i − A_k‖.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelfContracted {
    Yes,
    No { witness: (usize, usize, usize) },
}

impl SelfContracted {
    pub fn holds(&self) -> bool {
        matches!(self, SelfContracted::Yes)
    }

    pub fn into_result(self) -> Result<()> {
        match self {
            SelfContracted::Yes => Ok(()),
            SelfContracted::No { witness } => Err(Error::NotSelfContracted { witness }),
        }
    }
}

/// Relative tolerance below which violations are ignored.
pub const SC_REL_TOL: f64 = 1e-12;

/// Lower-triangular distance rows d(A_k, A_j), j ≤ k, and the tolerance
/// SC_REL_TOL · diameter derived from them.
fn distance_rows(poly: &Polyline, gauge: &Gauge) -> (Vec<Vec<f64>>, f64) {
    let pts = &poly.points;
    let mut diam: f64 = 0.0;
    let rows: Vec<Vec<f64>> = (0..pts.len())
        .map(|k| {
            (0..=k)
                .map(|j| {
                    let d = gauge.dist(&pts[k], &pts[j]);
                    diam = diam.max(d);
                    d
                })
                .collect()
        })
        .collect();
    (rows, SC_REL_TOL * diam)
}

fn sc_tolerance(poly: &Polyline, gauge: &Gauge) -> f64 {
    distance_rows(poly, gauge).1
}

/// d(A_k, A_j) ≤ d(A_k, A_i) for all i ≤ j ≤ k, in O(r²) gauge evaluations.
///
/// For each k the row j ↦ d(A_k, A_j) is scanned with a running minimum; the
/// first j exceeding the minimum over earlier i by more than the tolerance
/// gives the lexicographically smallest (k, j, i) witness.
pub fn is_self_contracted(poly: &Polyline, gauge: &Gauge) -> Result<SelfContracted> {
    poly.check_gauge(gauge)?;
    let (rows, tol) = distance_rows(poly, gauge);
    for (k, row) in rows.iter().enumerate() {
        let mut run_min = f64::INFINITY;
        for (j, &d) in row.iter().enumerate() {
            if d > run_min + tol {
                let i = row.iter().position(|&di| di < d - tol).expect("running min witness");
                return Ok(SelfContracted::No {
                    witness: (i + 1, j + 1, k + 1),
                });
            }
            run_min = run_min.min(d);
        }
    }
    Ok(SelfContracted::Yes)
}

/// Direct O(r³) evaluation of the definition, with the same tolerance and
/// witness order as [`is_self_contracted`].
pub fn is_self_contracted_naive(poly: &Polyline, gauge: &Gauge) -> Result<SelfContracted> {
    poly.check_gauge(gauge)?;
    let tol = sc_tolerance(poly, gauge);
    let pts = &poly.points;
    for k in 0..pts.len() {
        for j in 0..=k {
            for i in 0..j {
                if gauge.dist(&pts[k], &pts[j]) > gauge.dist(&pts[k], &pts[i]) + tol {
                    return Ok(SelfContracted::No {
                        witness: (i + 1, j + 1, k + 1),
                    });
                }
            }
        }
    }
    Ok(SelfContracted::Yes)
}

/// Slack that keeps exact ties (e.g. a diagonal against π/4) horizontal.
pub const ANGLE_TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentClass {
    Horizontal,
    Vertical,
}

/// ε-horizontal iff ∠((AB), Π) ≤ ε.
pub fn classify_segment(a: &[f64], b: &[f64], sub: &Subspace, eps: f64) -> Result<SegmentClass> {
    if a.len() != sub.ambient || b.len() != sub.ambient {
        return input("segment and subspace dimensions differ");
    }
    if a == b {
        return input("degenerate segment has no direction");
    }
    let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    Ok(if sub.angle_to(&v) <= eps + ANGLE_TIE_TOL {
        SegmentClass::Horizontal
    } else {
        SegmentClass::Vertical
    })
}

/// Indices (0-based) of a subvector that keeps the variation along `axis`
/// while making consecutive projected increments alternate in sign.
///
/// Keeps the first index, every turning point of the sequence of nonzero
/// increments, and the last index. Zero increments are absorbed into the run
/// they interrupt.
pub fn extract_alternating(poly: &Polyline, axis: &Subspace) -> Result<Vec<usize>> {
    if axis.dim() != 1 || axis.ambient != poly.dim {
        return input("extract_alternating needs a line in the polyline's space");
    }
    let e = &axis.basis[0];
    let x: Vec<f64> = poly.points.iter().map(|p| crate::linalg::dot(e, p)).collect();
    Ok(alternating_indices(&x))
}

/// [`extract_alternating`] on raw projections.
pub fn alternating_indices(x: &[f64]) -> Vec<usize> {
    let r = x.len();
    let mut out = vec![0];
    if r == 1 {
        return out;
    }
    let mut dir = 0.0f64;
    let mut run_end = 0usize;
    for j in 0..r - 1 {
        let d = x[j + 1] - x[j];
        if d == 0.0 {
            continue;
        }
        if dir != 0.0 && d.signum() != dir {
            out.push(run_end);
        }
        dir = d.signum();
        run_end = j + 1;
    }
    out.push(r - 1);
    out
}

/// (|A1A2| + |A2A3|)/|A1A3| for a self-contracted triple.
pub fn check_reverse_triangle(a1: &[f64], a2: &[f64], a3: &[f64], gauge: &Gauge) -> Result<f64> {
    let tri = Polyline::new(vec![a1.to_vec(), a2.to_vec(), a3.to_vec()])?;
    is_self_contracted(&tri, gauge)?.into_result()?;
    let d13 = dist2(a1, a3);
    if d13 == 0.0 {
        if a1 == a2 {
            return Ok(1.0);
        }
        return Err(hypothesis("reverse triangle", 1, "A1 = A3 with A2 ≠ A1 (degenerate)"));
    }
    Ok((dist2(a1, a2) + dist2(a2, a3)) / d13)
}

/// If ∠A1A2A3 ≤ 2ε₁, whether |A2A3| ≤ (3/4)|A1A2| + 1e-9; vacuously true otherwise.
pub fn check_horiz_contraction(
    a1: &[f64],
    a2: &[f64],
    a3: &[f64],
    gauge: &Gauge,
    eps1: f64,
) -> Result<bool> {
    if a1.len() != gauge.dim() || a2.len() != a1.len() || a3.len() != a1.len() {
        return input("dimension mismatch");
    }
    if a1 == a2 {
        return input("A1 = A2 leaves the angle undefined");
    }
    if a2 == a3 {
        return Ok(true);
    }
    let u: Vec<f64> = a1.iter().zip(a2).map(|(x, y)| x - y).collect();
    let v: Vec<f64> = a3.iter().zip(a2).map(|(x, y)| x - y).collect();
    if crate::linalg::angle(&u, &v) > 2.0 * eps1 {
        return Ok(true);
    }
    Ok(dist2(a2, a3) <= 0.75 * dist2(a1, a2) + 1e-9)
}

/// 4|A1A2| for a self-contracted polyline whose segments are ε₁-horizontal
/// with respect to `axis` and alternate in direction along it. Every step
/// ratio |A_kA_{k+1}| ≤ (3/4)|A_{k−1}A_k| is checked along the way.
pub fn geometric_chain_bound(poly: &Polyline, axis: &Subspace, gauge: &Gauge, eps1: f64) -> Result<f64> {
    const LEMMA: &str = "geometric chain";
    if axis.dim() != 1 {
        return input("axis must be one-dimensional");
    }
    is_self_contracted(poly, gauge)?.into_result()?;
    let pts = &poly.points;
    let r = pts.len();
    if r == 1 {
        return Ok(0.0);
    }
    let e = &axis.basis[0];
    let inc: Vec<f64> = pts
        .windows(2)
        .map(|w| crate::linalg::dot(e, &w[1]) - crate::linalg::dot(e, &w[0]))
        .collect();
    for k in 0..r - 1 {
        if pts[k] != pts[k + 1]
            && classify_segment(&pts[k], &pts[k + 1], axis, eps1)? == SegmentClass::Vertical
        {
            return Err(hypothesis(LEMMA, k + 1, "segment is not ε₁-horizontal"));
        }
        if k > 0 && inc[k] * inc[k - 1] >= 0.0 {
            return Err(hypothesis(LEMMA, k + 1, "projected increments do not alternate"));
        }
        if k > 0 && dist2(&pts[k], &pts[k + 1]) > 0.75 * dist2(&pts[k - 1], &pts[k]) + 1e-9 {
            return Err(hypothesis(LEMMA, k + 1, "step ratio exceeds 3/4"));
        }
    }
    let bound = 4.0 * dist2(&pts[0], &pts[1]);
    if length(poly) > bound + 1e-9 {
        return Err(Error::Numeric("geometric chain bound violated".into()));
    }
    Ok(bound)
}

/// |A1Ar| + 2ℓ_{ν⊥}·tan δ, valid when every δ-vertical segment (with respect
/// to ν⊥) strictly decreases the ν-coordinate.
pub fn vertical_variation_bound(poly: &Polyline, nu: &[f64], delta: f64) -> Result<f64> {
    const LEMMA: &str = "vertical variation";
    let axis = Subspace::line(nu)?;
    if axis.ambient != poly.dim {
        return input("normal and polyline dimensions differ");
    }
    let perp = axis.complement();
    let e = &axis.basis[0];
    let pts = &poly.points;
    for k in 1..pts.len() {
        if pts[k] == pts[k - 1] {
            continue;
        }
        let vertical = if perp.dim() == 0 {
            true
        } else {
            classify_segment(&pts[k - 1], &pts[k], &perp, delta)? == SegmentClass::Vertical
        };
        if vertical && crate::linalg::dot(e, &pts[k]) >= crate::linalg::dot(e, &pts[k - 1]) {
            return Err(hypothesis(LEMMA, k + 1, "δ-vertical segment does not descend along ν"));
        }
    }
    let bound = poly.chord() + 2.0 * projected_length(poly, &perp) * delta.tan();
    if projected_length(poly, &axis) > bound + 1e-9 {
        return Err(Error::Numeric("vertical variation bound violated".into()));
    }
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{harmonic_staircase, square_path};

    #[test]
    fn square_path_checks() {
        let sq = square_path();
        assert_eq!(is_self_contracted(&sq, &Gauge::max_norm(2)).unwrap(), SelfContracted::Yes);
        assert_eq!(
            is_self_contracted(&sq, &Gauge::euclidean(2)).unwrap(),
            SelfContracted::No { witness: (1, 2, 4) }
        );
        assert_eq!(
            is_self_contracted_naive(&sq, &Gauge::euclidean(2)).unwrap(),
            SelfContracted::No { witness: (1, 2, 4) }
        );
        assert_eq!(length(&sq), 3.0);
        assert_eq!(projected_length(&sq, &Subspace::axis(2, 0)), 1.0);
        assert_eq!(projected_length(&sq, &Subspace::axis(2, 1)), 2.0);
        assert_eq!(projected_length(&sq, &Subspace::full(2)), 3.0);
    }

    #[test]
    fn collinear_points_are_self_contracted() {
        let p = Polyline::new((0..6).map(|i| vec![i as f64, 2.0 * i as f64]).collect()).unwrap();
        for g in [Gauge::euclidean(2), Gauge::max_norm(2), Gauge::pnorm(2, 1.0).unwrap()] {
            assert!(is_self_contracted(&p, &g).unwrap().holds());
        }
    }

    #[test]
    fn harmonic_staircase_length() {
        let h = harmonic_staircase(100);
        let hn: f64 = (1..=100).map(|j| 1.0 / j as f64).sum();
        assert!((length(&h) - hn).abs() < 1e-9);
        assert!((hn - 5.18738).abs() < 1e-5);
        assert!(is_self_contracted(&harmonic_staircase(12), &Gauge::euclidean(12)).unwrap().holds());
    }

    #[test]
    fn single_point_has_zero_length() {
        let p = Polyline::new(vec![vec![1.0, 2.0]]).unwrap();
        assert_eq!(length(&p), 0.0);
        assert!(is_self_contracted(&p, &Gauge::euclidean(2)).unwrap().holds());
    }

    #[test]
    fn classify_segment_examples() {
        let x = Subspace::axis(2, 0);
        assert_eq!(classify_segment(&[0.0, 0.0], &[1.0, 0.0], &x, 0.1).unwrap(), SegmentClass::Horizontal);
        assert_eq!(classify_segment(&[0.0, 0.0], &[0.0, 1.0], &x, 1.5).unwrap(), SegmentClass::Vertical);
        assert_eq!(
            classify_segment(&[0.0, 0.0], &[1.0, 1.0], &x, std::f64::consts::FRAC_PI_4).unwrap(),
            SegmentClass::Horizontal
        );
        assert!(classify_segment(&[0.0, 0.0], &[0.0, 0.0], &x, 0.1).is_err());
    }

    #[test]
    fn alternating_examples() {
        assert_eq!(alternating_indices(&[0.0, 2.0, 1.0]), vec![0, 1, 2]);
        assert_eq!(alternating_indices(&[0.0, 1.0, 2.0]), vec![0, 2]);
        assert_eq!(alternating_indices(&[0.0, 1.0, 2.0, 1.5]), vec![0, 2, 3]);
        assert_eq!(alternating_indices(&[0.0, 1.0, 1.0, 0.0]), vec![0, 1, 3]);
        assert_eq!(alternating_indices(&[4.0]), vec![0]);
    }

    #[test]
    fn reverse_triangle_examples() {
        let e = Gauge::euclidean(2);
        assert_eq!(check_reverse_triangle(&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &e).unwrap(), 1.0);
        let m = Gauge::max_norm(2);
        let r = check_reverse_triangle(&[0.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &m).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn horiz_contraction_examples() {
        let e = Gauge::euclidean(2);
        assert!(check_horiz_contraction(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &e, 0.4).unwrap());
        let eps1 = (2.0f64 / 3.0).acos() / 2.0;
        // C on the bisector x = 1/2 of [A1A2] at angle ≤ 2ε₁ seen from A2
        for k in 0..=50 {
            let th = 2.0 * eps1 * k as f64 / 50.0 * (1.0 - 1e-12);
            let c = [1.0 - 0.5, 0.5 * th.tan()];
            assert!(check_horiz_contraction(&[0.0, 0.0], &[1.0, 0.0], &c, &e, eps1).unwrap());
        }
        assert!(check_horiz_contraction(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 5.0], &e, 0.4).unwrap());
        assert!(check_horiz_contraction(&[1.0, 0.0], &[1.0, 0.0], &[1.0, 5.0], &e, 0.4).is_err());
    }

    #[test]
    fn geometric_chain_examples() {
        let e = Gauge::euclidean(2);
        let x = Subspace::axis(2, 0);
        let two = Polyline::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(geometric_chain_bound(&two, &x, &e, 0.3).unwrap(), 4.0);
        // zig-zag along x with steps shrinking by 0.7
        let mut pts = vec![vec![0.0, 0.0]];
        let mut pos = 0.0;
        let mut step = 1.0;
        let mut sign = 1.0;
        for _ in 0..12 {
            pos += sign * step;
            pts.push(vec![pos, 0.0]);
            step *= 0.5;
            sign = -sign;
        }
        let z = Polyline::new(pts).unwrap();
        let b = geometric_chain_bound(&z, &x, &e, 0.3).unwrap();
        assert!(length(&z) <= b);
        let err = geometric_chain_bound(&square_path(), &x, &Gauge::max_norm(2), 0.1);
        assert!(matches!(err, Err(Error::Hypothesis { .. })));
    }

    #[test]
    fn vertical_variation_examples() {
        let p = Polyline::new(vec![vec![0.0, 3.0], vec![0.2, 2.0], vec![0.1, 0.5]]).unwrap();
        let b = vertical_variation_bound(&p, &[0.0, 1.0], 0.0).unwrap();
        assert!(projected_length(&p, &Subspace::axis(2, 1)) <= b);
        let one = Polyline::new(vec![vec![1.0, 1.0]]).unwrap();
        assert_eq!(vertical_variation_bound(&one, &[0.0, 1.0], 0.1).unwrap(), 0.0);
        let up = Polyline::new(vec![vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(vertical_variation_bound(&up, &[0.0, 1.0], 0.1).is_err());
        // staircase descending in y with short horizontal back-steps
        let st = Polyline::new(vec![
            vec![0.0, 3.0],
            vec![0.0, 2.0],
            vec![0.3, 2.01],
            vec![0.3, 1.0],
            vec![0.0, 1.01],
            vec![0.0, 0.0],
        ])
        .unwrap();
        let d = 0.05;
        let b = vertical_variation_bound(&st, &[0.0, 1.0], d).unwrap();
        assert!(projected_length(&st, &Subspace::axis(2, 1)) <= b + 1e-12);
    }
}
