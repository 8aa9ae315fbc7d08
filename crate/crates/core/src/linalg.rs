//! Small dense-vector helpers and orthonormal subspaces.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// Euclidean distance without allocating.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn normalize(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm2(a);
    if n > 0.0 && n.is_finite() {
        Some(scale(a, 1.0 / n))
    } else {
        None
    }
}

pub fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// Angle between two nonzero vectors, in [0, π].
pub fn angle(a: &[f64], b: &[f64]) -> f64 {
    let c = dot(a, b) / (norm2(a) * norm2(b));
    c.clamp(-1.0, 1.0).acos()
}

/// Uniform random unit vector in R^n.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if let Some(u) = normalize(&v) {
            return u;
        }
    }
}

pub fn random_gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// A linear subspace of R^n stored through an orthonormal basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subspace {
    pub ambient: usize,
    pub basis: Vec<Vec<f64>>,
}

const GS_DROP: f64 = 1e-10;

/// Gram-Schmidt `v` against `basis` (twice, for stability). Returns the unit
/// remainder if it survives.
fn orth_against(basis: &[Vec<f64>], v: &[f64]) -> Option<Vec<f64>> {
    let scale0 = norm2(v);
    if scale0 == 0.0 {
        return None;
    }
    let mut w = v.to_vec();
    for _ in 0..2 {
        for b in basis {
            let c = dot(&w, b);
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= c * bi;
            }
        }
    }
    let r = norm2(&w);
    if r <= GS_DROP * scale0 {
        None
    } else {
        Some(scale(&w, 1.0 / r))
    }
}

impl Subspace {
    /// Span of the given vectors; dependent vectors are dropped.
    pub fn span(ambient: usize, vectors: &[Vec<f64>]) -> Result<Self> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in vectors {
            if v.len() != ambient {
                return input(format!("vector of length {} in R^{}", v.len(), ambient));
            }
            if let Some(u) = orth_against(&basis, v) {
                basis.push(u);
            }
        }
        Ok(Self { ambient, basis })
    }

    pub fn line(v: &[f64]) -> Result<Self> {
        let s = Self::span(v.len(), &[v.to_vec()])?;
        if s.basis.is_empty() {
            return input("zero vector cannot span a line");
        }
        Ok(s)
    }

    pub fn full(n: usize) -> Self {
        Self {
            ambient: n,
            basis: (0..n).map(|i| unit(n, i)).collect(),
        }
    }

    /// Coordinate axis `i` of R^n.
    pub fn axis(n: usize, i: usize) -> Self {
        Self {
            ambient: n,
            basis: vec![unit(n, i)],
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Orthogonal complement, completed over the standard basis in order.
    pub fn complement(&self) -> Self {
        let mut all = self.basis.clone();
        let mut out = Vec::new();
        for i in 0..self.ambient {
            if all.len() == self.ambient {
                break;
            }
            if let Some(u) = orth_against(&all, &unit(self.ambient, i)) {
                all.push(u.clone());
                out.push(u);
            }
        }
        Self {
            ambient: self.ambient,
            basis: out,
        }
    }

    pub fn coords(&self, v: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|b| dot(b, v)).collect()
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient];
        for b in &self.basis {
            let c = dot(b, v);
            for (o, bi) in out.iter_mut().zip(b) {
                *o += c * bi;
            }
        }
        out
    }

    /// |p_Π(v)|.
    pub fn proj_norm(&self, v: &[f64]) -> f64 {
        self.basis
            .iter()
            .map(|b| {
                let c = dot(b, v);
                c * c
            })
            .sum::<f64>()
            .sqrt()
    }

    /// |p_Π(b - a)| without allocating.
    pub fn proj_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        self.basis
            .iter()
            .map(|e| {
                let c: f64 = e.iter().zip(a.iter().zip(b)).map(|(ei, (x, y))| ei * (y - x)).sum();
                c * c
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Angle between a nonzero vector and the subspace, in [0, π/2].
    pub fn angle_to(&self, v: &[f64]) -> f64 {
        let n = norm2(v);
        if self.basis.is_empty() {
            return std::f64::consts::FRAC_PI_2;
        }
        let c = (self.proj_norm(v) / n).clamp(0.0, 1.0);
        // acos loses precision near 1; use the complementary component there
        if c > 0.7 {
            let perp = (n * n - self.proj_norm(v).powi(2)).max(0.0).sqrt() / n;
            perp.clamp(0.0, 1.0).asin()
        } else {
            c.acos()
        }
    }

    /// Largest |<b_i, b_j> - δ_ij| over the stored basis.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(a, b) - target).abs());
            }
        }
        worst
    }

    /// Random subspace of the given dimension.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, ambient: usize, dim: usize) -> Self {
        loop {
            let vs: Vec<Vec<f64>> = (0..dim).map(|_| random_gaussian(rng, ambient)).collect();
            if let Ok(s) = Self::span(ambient, &vs) {
                if s.dim() == dim {
                    return s;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn complement_of_axis_in_plane() {
        let s = Subspace::axis(2, 0);
        let c = s.complement();
        assert_eq!(c.basis, vec![vec![0.0, 1.0]]);
    }

    #[test]
    fn angle_to_diagonal_is_quarter_pi() {
        let s = Subspace::axis(2, 0);
        let a = s.angle_to(&[1.0, 1.0]);
        assert!((a - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn random_subspace_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..7 {
            for d in 1..=n {
                let s = Subspace::random(&mut rng, n, d);
                assert!(s.orthonormality_defect() < 1e-12);
                let c = s.complement();
                assert_eq!(c.dim() + d, n);
                for a in &s.basis {
                    for b in &c.basis {
                        assert!(dot(a, b).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
