//! Independent verification of certificates.
//!
//! Atoms are recomputed here with their own arithmetic rather than through the
//! builder, then every step is re-checked and the tree replayed.

use serde::{Deserialize, Serialize};

use super::{slack, CertStep, Certificate, Mode, Quantity};
use crate::error::Result;
use crate::norms::Gauge;
use crate::polyline::{is_self_contracted, Polyline};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckFailure {
    /// Child indices from the root to the failing step (empty for the root or
    /// for certificate-level failures).
    pub path: Vec<usize>,
    pub lemma_tag: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub ok: bool,
    pub steps_checked: usize,
    pub effective_c: f64,
    pub failures: Vec<CheckFailure>,
}

impl CheckReport {
    /// Paths of the failing steps.
    pub fn failing_paths(&self) -> Vec<Vec<usize>> {
        self.failures.iter().map(|f| f.path.clone()).collect()
    }
}

struct Ctx<'a> {
    cert: &'a Certificate,
    scales: Vec<f64>,
}

fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn ip(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn proj_norm(basis: &[Vec<f64>], v: &[f64]) -> f64 {
    basis.iter().map(|b| ip(b, v).powi(2)).sum::<f64>().sqrt()
}

fn angle_to(basis: &[Vec<f64>], v: &[f64]) -> f64 {
    let n = ip(v, v).sqrt();
    if n == 0.0 {
        return 0.0;
    }
    (proj_norm(basis, v) / n).min(1.0).acos()
}

fn orthonormal(basis: &[Vec<f64>], dim: usize) -> bool {
    basis.iter().all(|b| b.len() == dim)
        && basis.iter().enumerate().all(|(i, a)| {
            basis
                .iter()
                .enumerate()
                .all(|(j, b)| (ip(a, b) - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9)
        })
}

impl<'a> Ctx<'a> {
    fn pts(&self, poly: usize) -> std::result::Result<&'a [Vec<f64>], String> {
        self.cert
            .polylines
            .get(poly)
            .map(Polyline::points)
            .ok_or_else(|| format!("no polyline {poly}"))
    }

    fn sel(&self, poly: usize, idx: &[usize]) -> std::result::Result<Vec<&'a [f64]>, String> {
        let p = self.pts(poly)?;
        if idx.windows(2).any(|w| w[0] >= w[1]) {
            return Err("indices not increasing".into());
        }
        idx.iter()
            .map(|&i| p.get(i).map(Vec::as_slice).ok_or_else(|| format!("index {i} out of range")))
            .collect()
    }

    fn value(&self, q: &Quantity) -> std::result::Result<f64, String> {
        let part = &self.cert.partition;
        Ok(match q {
            Quantity::One => 1.0,
            Quantity::Length { poly, idx } => {
                let s = self.sel(*poly, idx)?;
                s.windows(2).map(|w| d2(w[0], w[1])).sum()
            }
            Quantity::Dist { poly, i, j } => {
                let s = self.sel(*poly, &[(*i).min(*j), (*i).max(*j)])?;
                d2(s[0], s[s.len() - 1])
            }
            Quantity::Var { poly, idx, basis } => {
                let s = self.sel(*poly, idx)?;
                let dim = s.first().map_or(0, |p| p.len());
                if !orthonormal(basis, dim) {
                    return Err("basis is not orthonormal".into());
                }
                s.windows(2)
                    .map(|w| {
                        let v: Vec<f64> = w[1].iter().zip(w[0]).map(|(a, b)| a - b).collect();
                        proj_norm(basis, &v)
                    })
                    .sum()
            }
            Quantity::AxisDiff { poly, i, j, axis } => {
                let p = self.pts(*poly)?;
                let (a, b) = (p.get(*i).ok_or("index out of range")?, p.get(*j).ok_or("index out of range")?);
                if (ip(axis, axis) - 1.0).abs() > 1e-9 {
                    return Err("axis is not a unit vector".into());
                }
                (ip(axis, b) - ip(axis, a)).abs()
            }
            Quantity::PairSum { poly, idx, axis } => {
                let s = self.sel(*poly, idx)?;
                if (ip(axis, axis) - 1.0).abs() > 1e-9 {
                    return Err("axis is not a unit vector".into());
                }
                let x: Vec<f64> = s.iter().map(|p| ip(axis, p)).collect();
                x.windows(3).map(|w| (w[2] - w[0]).abs()).sum()
            }
            Quantity::Rise { poly, idx, patch, delta } => {
                let nu = part.normal(patch).map_err(|e| e.to_string())?;
                let s = self.sel(*poly, idx)?;
                let mut worst: f64 = 0.0;
                for w in s.windows(2) {
                    let v: Vec<f64> = w[1].iter().zip(w[0]).map(|(a, b)| a - b).collect();
                    let len = ip(&v, &v).sqrt();
                    if len == 0.0 {
                        continue;
                    }
                    let rise = ip(&nu, &v);
                    // angle between v and ν^⊥ is asin(|⟨ν, v⟩|/|v|)
                    let ang = (rise.abs() / len).min(1.0).asin();
                    if ang > delta + crate::polyline::ANGLE_TIE_TOL {
                        worst = worst.max(rise);
                    }
                }
                worst
            }
            Quantity::PatchAngle { patch, basis } => {
                let nu = part.normal(patch).map_err(|e| e.to_string())?;
                if !orthonormal(basis, nu.len()) {
                    return Err("basis is not orthonormal".into());
                }
                angle_to(basis, &nu)
            }
            Quantity::MinSegmentAngle { poly, idx, basis, skip } => {
                let s = self.sel(*poly, idx)?;
                let dim = s.first().map_or(0, |p| p.len());
                if !orthonormal(basis, dim) {
                    return Err("basis is not orthonormal".into());
                }
                s.windows(2)
                    .skip(*skip)
                    .map(|w| {
                        let v: Vec<f64> = w[1].iter().zip(w[0]).map(|(a, b)| a - b).collect();
                        angle_to(basis, &v)
                    })
                    .fold(std::f64::consts::FRAC_PI_2, f64::min)
            }
            Quantity::Outside { poly, idx, apex, patch } => {
                let p = self.pts(*poly)?;
                let a = p.get(*apex).ok_or("apex out of range")?;
                let mut out = 0usize;
                for x in self.sel(*poly, idx)? {
                    let v: Vec<f64> = x.iter().zip(a).map(|(u, w)| u - w).collect();
                    if !part.in_cone(patch, &v).map_err(|e| e.to_string())? {
                        out += 1;
                    }
                }
                out as f64
            }
        })
    }

    fn expr(&self, e: &[super::Term]) -> std::result::Result<(f64, f64), String> {
        let mut total = 0.0;
        let mut scale: f64 = 1.0;
        for t in e {
            if !(t.coef.is_finite() && t.coef >= 0.0) {
                return Err(format!("coefficient {} is not a nonnegative number", t.coef));
            }
            total += t.coef * self.value(&t.q)?;
            if let Some(p) = super::atom_poly(&t.q) {
                scale = scale.max(*self.scales.get(p).ok_or("no such polyline")?);
            }
        }
        Ok((total, scale))
    }

    fn check_step(&self, s: &CertStep, tol: f64) -> std::result::Result<(), String> {
        let (lv, ls) = self.expr(&s.lhs)?;
        let (rv, rs) = self.expr(&s.rhs)?;
        for (name, stored, actual) in [("lhs", s.lhs_value, lv), ("rhs", s.rhs_value, rv)] {
            if !((stored - actual).abs() <= tol * actual.abs().max(1.0)) {
                return Err(format!("stored {name} {stored} differs from recomputed {actual}"));
            }
        }
        if lv > rv + slack(tol, ls.max(rs), lv, rv) {
            return Err(format!("inequality fails: {lv} > {rv}"));
        }
        Ok(())
    }

    fn replay(&self, s: &CertStep) -> std::result::Result<f64, String> {
        let mut total = 0.0;
        for t in &s.rhs {
            let child = s.children.iter().find(|c| match c.lhs.as_slice() {
                [l] => !c.evidence && l.coef == 1.0 && l.q == t.q,
                _ => false,
            });
            total += t.coef
                * match child {
                    Some(c) => self.replay(c)?,
                    None => self.value(&t.q)?,
                };
        }
        Ok(total)
    }
}

fn global(f: &mut Vec<CheckFailure>, reason: impl Into<String>) {
    f.push(CheckFailure {
        path: Vec::new(),
        lemma_tag: "certificate".into(),
        reason: reason.into(),
    });
}

fn structural(cert: &Certificate, tol: f64, failures: &mut Vec<CheckFailure>) -> Result<()> {
    let Some(p0) = cert.polylines.first() else {
        global(failures, "no polylines");
        return Ok(());
    };
    if p0.dim() != cert.gauge.dim() {
        global(failures, "polyline and gauge dimensions differ");
        return Ok(());
    }
    if !is_self_contracted(p0, &cert.gauge)?.holds() {
        global(failures, "the polyline is not self-contracted");
    }
    match cert.mode {
        Mode::Easy => {
            if !cert.gauge.is_max_norm_plane() || cert.polylines.len() != 1 {
                global(failures, "easy certificates live in the max-norm plane");
            }
        }
        Mode::General => {
            let lifted = Gauge::cylinder(cert.gauge.clone());
            let h = lifted.hash();
            if cert.partition.gauge.hash() != h {
                global(failures, "partition gauge is not the cylinder over the gauge");
            }
            match &cert.constants {
                Some(c) => {
                    if c.gauge_hash != h || c.n != lifted.dim() {
                        global(failures, "constants belong to another gauge");
                    }
                    if !(cert.partition.delta < c.delta0) {
                        global(failures, "partition δ is not below δ₀");
                    }
                    if (c.recompute_delta0() - c.delta0).abs() > 1e-12 * c.delta0.max(1e-300) {
                        global(failures, "δ₀ does not match the other constants");
                    }
                }
                None => global(failures, "general certificate without constants"),
            }
            match (cert.polylines.get(1), super::lift_to_cylinder(&cert.gauge, p0)) {
                (Some(stored), Ok(l)) => {
                    let same = stored.len() == l.poly.len()
                        && stored
                            .points()
                            .iter()
                            .zip(l.poly.points())
                            .all(|(a, b)| d2(a, b) <= tol * (1.0 + ip(b, b).sqrt()));
                    if !same {
                        global(failures, "lifted polyline does not match the lift of the original");
                    }
                }
                (None, _) => global(failures, "lifted polyline missing"),
                (_, Err(e)) => global(failures, format!("lift failed: {e}")),
            }
        }
    }
    let all: Vec<usize> = (0..p0.len()).collect();
    let want = Quantity::Length { poly: 0, idx: all };
    let ok = matches!(cert.root.lhs.as_slice(), [t] if t.coef == 1.0 && t.q == want);
    if !ok {
        global(failures, "root step does not bound the whole polyline");
    }
    Ok(())
}

/// Recomputes every step of the certificate from its stored polylines,
/// partition and constants, replays the tree and confirms the root claim.
pub fn check_certificate(cert: &Certificate, tol: f64) -> CheckReport {
    let mut failures = Vec::new();
    if let Err(e) = structural(cert, tol, &mut failures) {
        global(&mut failures, e.to_string());
    }
    let ctx = Ctx {
        cert,
        scales: cert
            .polylines
            .iter()
            .map(|p| {
                let l: f64 = p.points().windows(2).map(|w| d2(&w[0], &w[1])).sum();
                l.max(p.chord())
            })
            .collect(),
    };
    let mut steps = 0;
    cert.root.walk(&mut Vec::new(), &mut |path, s| {
        steps += 1;
        if let Err(reason) = ctx.check_step(s, tol) {
            failures.push(CheckFailure {
                path: path.to_vec(),
                lemma_tag: s.lemma_tag.clone(),
                reason,
            });
        }
    });
    let chord = cert.polylines.first().map_or(0.0, Polyline::chord);
    let length: f64 = cert
        .polylines
        .first()
        .map_or(0.0, |p| p.points().windows(2).map(|w| d2(&w[0], &w[1])).sum());
    let effective_c = match ctx.replay(&cert.root) {
        Ok(b) if chord > 0.0 => b / chord,
        Ok(_) => {
            global(&mut failures, "zero chord");
            f64::NAN
        }
        Err(e) => {
            global(&mut failures, format!("replay failed: {e}"));
            f64::NAN
        }
    };
    let claim = &cert.root_claim;
    let close = |a: f64, b: f64| (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0);
    if !close(claim.effective_c, effective_c) {
        global(
            &mut failures,
            format!("claimed constant {} but the tree gives {effective_c}", claim.effective_c),
        );
    }
    if !close(claim.length, length) || !close(claim.chord, chord) {
        global(&mut failures, "root claim length or chord does not match the polyline");
    }
    if !(length <= effective_c * chord + slack(tol, length, length, effective_c * chord)) {
        global(&mut failures, "root claim ℓ ≤ C·|A_1 A_r| fails");
    }
    CheckReport {
        ok: failures.is_empty(),
        steps_checked: steps,
        effective_c,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{certify_easycase, GeneralSetup};
    use crate::generators::{greedy_random, square_path};

    fn tamper(cert: &Certificate) {
        let mut paths = Vec::new();
        cert.root.walk(&mut Vec::new(), &mut |p, _| paths.push(p.to_vec()));
        for path in paths.iter().step_by(7.max(paths.len() / 40)) {
            let mut c = cert.clone();
            let s = c.root.get_mut(path).unwrap();
            s.rhs_value -= 10.0 * c.tol * s.rhs_value.abs().max(1.0);
            let rep = check_certificate(&c, c.tol);
            assert!(!rep.ok);
            assert_eq!(rep.failing_paths(), vec![path.clone()], "{:?}", rep.failures);
        }
    }

    #[test]
    fn easy_certificate_checks_and_detects_tampering() {
        let c = certify_easycase(&square_path()).unwrap();
        let rep = check_certificate(&c, c.tol);
        assert!(rep.ok, "{:?}", rep.failures);
        tamper(&c);
        let p = greedy_random(&Gauge::max_norm(2), 2, 25, 4, 1.0).unwrap().poly;
        let c = certify_easycase(&p).unwrap();
        assert!(check_certificate(&c, c.tol).ok);
        tamper(&c);
    }

    #[test]
    fn general_certificate_checks_and_survives_translation() {
        let g = Gauge::max_norm(2);
        let su = GeneralSetup::new(&g, 4000, 7).unwrap();
        let p = greedy_random(&g, 2, 20, 9, 1.0).unwrap().poly;
        let c = su.certify(&p, None).unwrap();
        let rep = check_certificate(&c, c.tol);
        assert!(rep.ok, "{:?}", rep.failures);
        tamper(&c);
        let t = c.translated(&[3.5, -1.25]).unwrap();
        assert!(check_certificate(&t, t.tol).ok);
        let back = Certificate::from_json(&c.to_json().unwrap()).unwrap();
        assert!(check_certificate(&back, back.tol).ok);
    }

    #[test]
    fn inflated_claim_is_rejected() {
        let mut c = certify_easycase(&square_path()).unwrap();
        c.root_claim.effective_c *= 0.5;
        assert!(!check_certificate(&c, c.tol).ok);
    }
}
