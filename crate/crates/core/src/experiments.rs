//! Seeded desk-scale experiments and the tables they emit.
//!
//! Every routine is deterministic in its seed: trials fan out over a rayon
//! pool but results are collected in trial order and each trial owns its RNG.

use std::f64::consts::FRAC_PI_6;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{certify_easycase, check_certificate, GeneralSetup};
use crate::error::{Error, Result};
use crate::generators::{adversarial_ratio, greedy_random, harmonic_staircase, ratio};
use crate::io::{polyline_csv, polyline_svg};
use crate::linalg::{self, random_unit, Subspace};
use crate::norms::{mediatrix_point, Gauge};
use crate::partition::{estimate_all, estimate_eps0_xibar, estimate_eps1, projection_domination, Frame};
use crate::polyline::{check_horiz_contraction, check_reverse_triangle, is_self_contracted, length, Polyline};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentId {
    E1HarmonicGrowth,
    E2EasycaseSuite,
    E3LemmaValidation,
    E4AdversarialConstants,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 4] = [
        ExperimentId::E1HarmonicGrowth,
        ExperimentId::E2EasycaseSuite,
        ExperimentId::E3LemmaValidation,
        ExperimentId::E4AdversarialConstants,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::E1HarmonicGrowth => "E1_harmonic_growth",
            ExperimentId::E2EasycaseSuite => "E2_easycase_suite",
            ExperimentId::E3LemmaValidation => "E3_lemma_validation",
            ExperimentId::E4AdversarialConstants => "E4_adversarial_constants",
        }
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown experiment {s:?}")))
    }
}

/// One output file of an experiment, named relative to the output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

fn trial_seed(seed: u64, i: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i)
}

// ---------------------------------------------------------------------------
// E1

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarmonicRow {
    pub n: usize,
    pub self_contracted: bool,
    pub length: f64,
    pub chord: f64,
    pub ratio: f64,
}

/// Staircases n = 2..=n_max: ℓ = H_n and |A_1A_{n+1}| = √(Σ 1/j²).
pub fn harmonic_growth(n_max: usize) -> Result<Vec<HarmonicRow>> {
    (2..=n_max)
        .into_par_iter()
        .map(|n| {
            let p = harmonic_staircase(n);
            let sc = is_self_contracted(&p, &Gauge::euclidean(n))?.holds();
            let (l, c) = (length(&p), p.chord());
            Ok(HarmonicRow {
                n,
                self_contracted: sc,
                length: l,
                chord: c,
                ratio: l / c,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// E2

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EasyRow {
    pub instance: usize,
    pub seed: u64,
    pub r: usize,
    pub ratio: f64,
    pub effective_c: f64,
    pub steps: usize,
    pub valid: bool,
}

/// Greedy max-norm planar instances with 2 ≤ r ≤ r_max, each certified by
/// the coordinate argument and re-checked.
pub fn easycase_suite(count: usize, r_max: usize, seed: u64) -> Result<Vec<EasyRow>> {
    let g = Gauge::max_norm(2);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let s = trial_seed(seed, i as u64);
            let r = ChaCha8Rng::seed_from_u64(s).gen_range(2..=r_max.max(2));
            let poly = greedy_random(&g, 2, r, s, 1.0)?.poly;
            let rat = ratio(&poly);
            Ok(match certify_easycase(&poly) {
                Ok(cert) => {
                    let rep = check_certificate(&cert, cert.tol);
                    EasyRow {
                        instance: i,
                        seed: s,
                        r: poly.len(),
                        ratio: rat,
                        effective_c: cert.root_claim.effective_c,
                        steps: cert.stats.steps,
                        valid: rep.ok && rat <= cert.root_claim.effective_c * (1.0 + 1e-12),
                    }
                }
                Err(_) => EasyRow {
                    instance: i,
                    seed: s,
                    r: poly.len(),
                    ratio: rat,
                    effective_c: f64::NAN,
                    steps: 0,
                    valid: false,
                },
            })
        })
        .collect()
}

/// Counts of ratios in bins [lo + k·w, lo + (k+1)·w).
pub fn histogram(values: &[f64], lo: f64, width: f64, bins: usize) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = (0..bins).map(|k| (lo + k as f64 * width, 0)).collect();
    for &v in values {
        let k = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        out[k].1 += 1;
    }
    out
}

// ---------------------------------------------------------------------------
// E3

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaRow {
    pub lemma: String,
    pub gauge: String,
    pub parameter: f64,
    pub samples: usize,
    pub violations: usize,
    pub worst: f64,
}

/// Samples self-contracted triples with ∠A_1A_2A_3 ≤ 2ε₁ (A_2 = 0) and counts
/// failures of |A_2A_3| ≤ (3/4)|A_1A_2| + 1e-9. `worst` is the largest
/// observed |A_2A_3|/|A_1A_2|.
pub fn validate_horizontal_contraction(gauge: &Gauge, eps1: f64, samples: usize, seed: u64) -> Result<(usize, f64)> {
    let n = gauge.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut got, mut bad, mut worst) = (0, 0, 0.0f64);
    let a2 = vec![0.0; n];
    let mut attempts = 0usize;
    while got < samples {
        attempts += 1;
        if attempts > 1000 * samples.max(1) {
            return Err(Error::Numeric("too few self-contracted triples in the sampling cone".into()));
        }
        let a1 = linalg::scale(&random_unit(&mut rng, n), rng.gen_range(0.1..2.0));
        let th = rng.gen::<f64>() * 2.0 * eps1;
        let u = tilted(&mut rng, &a1, th);
        let a3 = linalg::scale(&u, rng.gen::<f64>() * 2.0 * linalg::norm2(&a1));
        if gauge.dist(&a3, &a2) > gauge.dist(&a3, &a1) {
            continue;
        }
        got += 1;
        worst = worst.max(linalg::norm2(&a3) / linalg::norm2(&a1));
        if !check_horiz_contraction(&a1, &a2, &a3, gauge, eps1)? {
            bad += 1;
        }
    }
    Ok((bad, worst))
}

/// Mediatrix points C of pairs with |AB| = 1, B = 0, on rays from B at angle
/// ≤ 2ε̄ to A; counts failures of |BC| ≤ (3/4)|AB| + 1e-9.
pub fn validate_mediatrix(gauge: &Gauge, eps_bar: f64, samples: usize, seed: u64) -> Result<(usize, usize, f64)> {
    let n = gauge.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = vec![0.0; n];
    let (mut found, mut bad, mut worst) = (0, 0, 0.0f64);
    for _ in 0..samples {
        let a = random_unit(&mut rng, n);
        let th = rng.gen::<f64>() * 2.0 * eps_bar;
        let u = tilted(&mut rng, &a, th);
        if let Some(c) = mediatrix_point(gauge, &a, &b, &b, &u)? {
            found += 1;
            let bc = linalg::norm2(&c);
            worst = worst.max(bc);
            if bc > 0.75 + 1e-9 {
                bad += 1;
            }
        }
    }
    Ok((found, bad, worst))
}

/// Random frames in R^n (1 ≤ k ≤ n axes, skew ≤ ζ_max) tested on random
/// vectors; returns (checks, violations, worst lhs/rhs).
pub fn validate_projection_domination(
    n_max: usize,
    zeta_max: f64,
    frames: usize,
    vectors: usize,
    seed: u64,
) -> Result<(usize, usize, f64)> {
    let per: Vec<Result<(usize, usize, f64)>> = (0..frames)
        .into_par_iter()
        .map(|f| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, f as u64));
            let n = rng.gen_range(1..=n_max);
            let k = rng.gen_range(1..=n);
            let zeta = rng.gen::<f64>() * zeta_max;
            let frame = Frame::random(&mut rng, n, k, zeta)?;
            let (mut bad, mut worst) = (0, 0.0f64);
            for _ in 0..vectors {
                let a = linalg::scale(&random_unit(&mut rng, n), rng.gen_range(0.01..10.0));
                match projection_domination(&frame, &a) {
                    Ok((l, r)) => {
                        if r > 0.0 {
                            worst = worst.max(l / r);
                        }
                    }
                    Err(Error::Numeric(_)) => bad += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok((vectors, bad, worst))
        })
        .collect();
    let mut acc = (0, 0, 0.0f64);
    for p in per {
        let (c, b, w) = p?;
        acc = (acc.0 + c, acc.1 + b, acc.2.max(w));
    }
    Ok(acc)
}

/// Self-contracted triples; counts failures of
/// |A_1A_2| + |A_2A_3| ≤ (1 + 2R/ρ)|A_1A_3| + 1e-9.
pub fn validate_reverse_triangle(gauge: &Gauge, samples: usize, seed: u64) -> Result<(usize, f64, f64)> {
    let n = gauge.dim();
    let (rho, big_r) = gauge.radii();
    let bound = 1.0 + 2.0 * big_r / rho;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut got, mut bad, mut worst) = (0, 0, 0.0f64);
    while got < samples {
        let pts: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        if gauge.dist(&pts[2], &pts[1]) > gauge.dist(&pts[2], &pts[0]) || pts[0] == pts[2] {
            continue;
        }
        got += 1;
        let q = check_reverse_triangle(&pts[0], &pts[1], &pts[2], gauge)?;
        worst = worst.max(q);
        if q > bound + 1e-9 {
            bad += 1;
        }
    }
    Ok((bad, worst, bound))
}

/// A unit vector at angle `theta` from `a`, tilted towards a random direction.
fn tilted<R: Rng + ?Sized>(rng: &mut R, a: &[f64], theta: f64) -> Vec<f64> {
    let n = a.len();
    let a = linalg::normalize(a).expect("nonzero direction");
    if n == 1 {
        return a;
    }
    let comp = Subspace::line(&a).expect("line").complement();
    let w = loop {
        let v = random_unit(rng, n);
        if let Some(w) = linalg::normalize(&comp.project(&v)) {
            break w;
        }
    };
    a.iter().zip(&w).map(|(x, y)| theta.cos() * x + theta.sin() * y).collect()
}

fn lemma_gauges() -> Vec<(&'static str, Gauge)> {
    vec![
        ("euclidean2", Gauge::euclidean(2)),
        ("euclidean3", Gauge::euclidean(3)),
        ("p3_2", Gauge::pnorm(2, 3.0).expect("p = 3")),
        ("max2", Gauge::max_norm(2)),
    ]
}

/// All four lemma suites at the estimated constants.
pub fn lemma_validation(samples: usize, seed: u64) -> Result<Vec<LemmaRow>> {
    let mut rows = Vec::new();
    for (name, g) in lemma_gauges() {
        let (_, xi_bar) = estimate_eps0_xibar(&g, 2000, seed)?;
        let (eps1, eps_bar) = estimate_eps1(&g, xi_bar, 256, seed ^ 0xe1)?;
        let (bad, worst) = validate_horizontal_contraction(&g, eps1, samples, seed)?;
        rows.push(LemmaRow {
            lemma: "horizontal_contraction".into(),
            gauge: name.into(),
            parameter: eps1,
            samples,
            violations: bad,
            worst,
        });
        let (found, bad, worst) = validate_mediatrix(&g, eps_bar, samples, seed)?;
        rows.push(LemmaRow {
            lemma: "mediatrix".into(),
            gauge: name.into(),
            parameter: eps_bar,
            samples: found,
            violations: bad,
            worst,
        });
        let (bad, worst, bound) = validate_reverse_triangle(&g, samples, seed)?;
        rows.push(LemmaRow {
            lemma: "reverse_triangle".into(),
            gauge: name.into(),
            parameter: bound,
            samples,
            violations: bad,
            worst,
        });
    }
    let frames = (samples / 100).max(1);
    let (checks, bad, worst) = validate_projection_domination(6, FRAC_PI_6, frames, 100, seed)?;
    rows.push(LemmaRow {
        lemma: "projection_domination".into(),
        gauge: "frames_n_le_6".into(),
        parameter: FRAC_PI_6,
        samples: checks,
        violations: bad,
        worst,
    });
    Ok(rows)
}

// ---------------------------------------------------------------------------
// E4 and the certifier grid

/// Gauges of the experiment grid, by name.
pub fn grid_gauge(name: &str, n: usize) -> Result<Gauge> {
    match name {
        "max" => Ok(Gauge::max_norm(n)),
        "euclidean" => Ok(Gauge::euclidean(n)),
        "p3" => Gauge::pnorm(n, 3.0),
        "polytope" => Ok(Gauge::random_symmetric_polytope(n, 2, 11 + n as u64)),
        other => Err(Error::Input(format!("unknown grid gauge {other:?}"))),
    }
}

pub const GRID_GAUGES: [&str; 4] = ["max", "euclidean", "p3", "polytope"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdversarialRow {
    pub gauge: String,
    pub n: usize,
    pub r: usize,
    pub ratio: f64,
}

pub fn adversarial_grid(dims: &[usize], rs: &[usize], budget: usize, seed: u64) -> Result<Vec<(AdversarialRow, Polyline)>> {
    let cells: Vec<(&str, usize, usize)> = GRID_GAUGES
        .iter()
        .flat_map(|&g| dims.iter().flat_map(move |&n| rs.iter().map(move |&r| (g, n, r))))
        .collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(i, &(name, n, r))| {
            let g = grid_gauge(name, n)?;
            let (poly, ratio) = adversarial_ratio(&g, n, r, budget, trial_seed(seed, i as u64))?;
            Ok((
                AdversarialRow {
                    gauge: name.into(),
                    n,
                    r,
                    ratio,
                },
                poly,
            ))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridCell {
    pub gauge: String,
    pub n: usize,
    pub instances: usize,
    pub certified: usize,
    pub checked_ok: usize,
    pub ratio_within_c: usize,
    pub nodes: usize,
    pub fallback_nodes: usize,
    pub max_effective_c: f64,
}

impl GridCell {
    pub fn fallback_rate(&self) -> f64 {
        if self.nodes == 0 {
            0.0
        } else {
            self.fallback_nodes as f64 / self.nodes as f64
        }
    }
}

/// General certificates for greedy instances with 2 ≤ r ≤ r_max on one
/// (gauge, n) cell, each re-checked independently.
pub fn certify_cell(name: &str, n: usize, instances: usize, r_max: usize, seed: u64) -> Result<GridCell> {
    let g = grid_gauge(name, n)?;
    let setup = GeneralSetup::new(&g, 2000, seed)?;
    let results: Vec<Result<Option<(bool, bool, usize, usize, f64)>>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let s = trial_seed(seed, i as u64);
            let r = ChaCha8Rng::seed_from_u64(s).gen_range(2..=r_max.max(2));
            let poly = greedy_random(&g, n, r, s, 1.0)?.poly;
            if poly.chord() == 0.0 {
                return Ok(None);
            }
            let cert = setup.certify(&poly, None)?;
            let rep = check_certificate(&cert, cert.tol);
            let c = cert.root_claim.effective_c;
            Ok(Some((
                rep.ok,
                ratio(&poly) <= c * (1.0 + 1e-12),
                cert.stats.nodes,
                cert.stats.fallback_nodes,
                c,
            )))
        })
        .collect();
    let mut cell = GridCell {
        gauge: name.into(),
        n,
        instances,
        certified: 0,
        checked_ok: 0,
        ratio_within_c: 0,
        nodes: 0,
        fallback_nodes: 0,
        max_effective_c: 0.0,
    };
    for res in results {
        let Some((ok, within, nodes, fb, c)) = res? else { continue };
        cell.certified += 1;
        cell.checked_ok += ok as usize;
        cell.ratio_within_c += within as usize;
        cell.nodes += nodes;
        cell.fallback_nodes += fb;
        cell.max_effective_c = cell.max_effective_c.max(c);
    }
    Ok(cell)
}

pub fn certifier_grid(dims: &[usize], instances: usize, r_max: usize, seed: u64) -> Result<Vec<GridCell>> {
    let mut out = Vec::new();
    for &name in &GRID_GAUGES {
        for &n in dims {
            out.push(certify_cell(name, n, instances, r_max, seed)?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// artifacts

fn csv_table<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("row serializes");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 CSV")
}

/// Runs an experiment with its default sizes and returns the files to write.
pub fn run(id: ExperimentId, seed: u64) -> Result<Vec<Artifact>> {
    let mut out = Vec::new();
    match id {
        ExperimentId::E1HarmonicGrowth => {
            let rows = harmonic_growth(200)?;
            out.push(Artifact {
                name: "e1_harmonic_growth.csv".into(),
                contents: csv_table(&rows),
            });
            out.push(Artifact {
                name: "e1_staircase_n2.svg".into(),
                contents: polyline_svg(&harmonic_staircase(2), &Gauge::euclidean(2))?,
            });
        }
        ExperimentId::E2EasycaseSuite => {
            let rows = easycase_suite(1000, 40, seed)?;
            let valid = rows.iter().filter(|r| r.valid).count();
            let mut summary = String::from("instances,valid,validity_rate,max_ratio,max_effective_c\n");
            let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
            let max_c = rows.iter().map(|r| r.effective_c).fold(0.0, f64::max);
            let _ = writeln!(
                summary,
                "{},{},{:?},{:?},{:?}",
                rows.len(),
                valid,
                valid as f64 / rows.len().max(1) as f64,
                max_ratio,
                max_c
            );
            let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
            let mut hist = String::from("bin_start,count\n");
            for (lo, c) in histogram(&ratios, 1.0, 0.25, 16) {
                let _ = writeln!(hist, "{lo:?},{c}");
            }
            out.push(Artifact {
                name: "e2_instances.csv".into(),
                contents: csv_table(&rows),
            });
            out.push(Artifact {
                name: "e2_summary.csv".into(),
                contents: summary,
            });
            out.push(Artifact {
                name: "e2_ratio_histogram.csv".into(),
                contents: hist,
            });
            if let Some(best) = rows.iter().max_by(|a, b| a.ratio.total_cmp(&b.ratio)) {
                let g = Gauge::max_norm(2);
                let poly = greedy_random(&g, 2, best.r, best.seed, 1.0)?.poly;
                out.push(Artifact {
                    name: "e2_max_ratio.svg".into(),
                    contents: polyline_svg(&poly, &g)?,
                });
            }
        }
        ExperimentId::E3LemmaValidation => {
            let rows = lemma_validation(10_000, seed)?;
            out.push(Artifact {
                name: "e3_lemma_validation.csv".into(),
                contents: csv_table(&rows),
            });
        }
        ExperimentId::E4AdversarialConstants => {
            let cells = adversarial_grid(&[2, 3, 4], &[4, 8, 16], 300, seed)?;
            let rows: Vec<AdversarialRow> = cells.iter().map(|(r, _)| r.clone()).collect();
            out.push(Artifact {
                name: "e4_adversarial.csv".into(),
                contents: csv_table(&rows),
            });
            for (row, poly) in &cells {
                let g = grid_gauge(&row.gauge, row.n)?;
                let prov = [
                    ("seed", seed.to_string()),
                    ("budget", "300".to_string()),
                    ("gauge_hash", g.hash()),
                    ("ratio", format!("{:?}", row.ratio)),
                ];
                let stem = format!("e4_best_{}_n{}_r{}", row.gauge, row.n, row.r);
                out.push(Artifact {
                    name: format!("{stem}.csv"),
                    contents: polyline_csv(poly, &prov),
                });
                if row.n == 2 {
                    out.push(Artifact {
                        name: format!("{stem}.svg"),
                        contents: polyline_svg(poly, &g)?,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Estimates for a gauge as JSON-ready constants.
pub fn estimate_constants(gauge: &Gauge, budget: usize, seed: u64) -> Result<crate::partition::Constants> {
    let est = estimate_all(gauge, budget, seed)?;
    crate::partition::compute_constants(gauge, gauge.dim(), &est)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_parse() {
        for id in ExperimentId::ALL {
            assert_eq!(id.name().parse::<ExperimentId>().unwrap(), id);
        }
        assert!("E5".parse::<ExperimentId>().is_err());
    }

    #[test]
    fn harmonic_rows() {
        let rows = harmonic_growth(12).unwrap();
        assert_eq!(rows.len(), 11);
        assert!(rows.iter().all(|r| r.self_contracted));
        assert!(rows.windows(2).all(|w| w[1].ratio > w[0].ratio));
    }

    #[test]
    fn easy_suite_small() {
        let rows = easycase_suite(20, 40, 1).unwrap();
        assert!(rows.iter().all(|r| r.valid));
        assert_eq!(rows, easycase_suite(20, 40, 1).unwrap());
    }

    #[test]
    fn histogram_bins() {
        let h = histogram(&[0.5, 1.0, 1.2, 1.3, 9.0], 1.0, 0.25, 4);
        assert_eq!(h.iter().map(|b| b.1).collect::<Vec<_>>(), vec![3, 1, 0, 1]);
    }

    #[test]
    fn lemma_suites_small() {
        for row in lemma_validation(300, 5).unwrap() {
            assert_eq!(row.violations, 0, "{row:?}");
        }
    }

    #[test]
    fn e1_is_deterministic() {
        assert_eq!(run(ExperimentId::E1HarmonicGrowth, 0).unwrap(), run(ExperimentId::E1HarmonicGrowth, 9).unwrap());
    }
}
