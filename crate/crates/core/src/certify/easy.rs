//! Certificates for the max-norm plane following the direct four-cone argument.

use std::f64::consts::SQRT_2;

use super::{
    effective_constant, require_self_contracted, term, tree_stats, Builder, CertStep, Certificate, Mode, Quantity,
    RootClaim, StepKind, SubIndices, DEFAULT_TOL,
};
use crate::error::{input, Result};
use crate::linalg::{unit, Subspace};
use crate::norms::Gauge;
use crate::partition::build_partition;
use crate::polyline::{extract_alternating, length, Polyline};

use super::general::cone_split;

/// Per-cone constant of the coordinate argument: ℓ ≤ (4√2 + 5)|A_j A_r|.
pub const CONE_CONSTANT: f64 = 4.0 * SQRT_2 + 5.0;

/// Certificate for a self-contracted polyline in the max-norm plane.
pub fn certify_easycase(poly: &Polyline) -> Result<Certificate> {
    if poly.dim() != 2 {
        return input("the max-norm plane certificate needs planar points");
    }
    if poly.len() < 2 || poly.chord() == 0.0 {
        return input("the chord must be positive");
    }
    let gauge = Gauge::max_norm(2);
    require_self_contracted(poly, &gauge)?;
    let partition = build_partition(&gauge, std::f64::consts::FRAC_PI_8)?;
    let mut b = Builder::new(vec![poly], &partition, DEFAULT_TOL);
    let r = poly.len() - 1;
    let all: Vec<usize> = (0..poly.len()).collect();
    let split = cone_split(&partition, poly, &all)?;

    let mut children = Vec::new();
    let mut rhs = Vec::new();
    for (patch, ridx) in &split.runs {
        children.push(cone_bound(&mut b, &partition.normal(patch)?, ridx, r)?);
        rhs.push(term(SQRT_2, len_q(ridx)));
    }
    for &(a, c) in &split.crossings {
        children.push(b.step(
            StepKind::CrossingSegment,
            "easy-crossing",
            (a, c),
            vec![term(1.0, dist_q(a, c))],
            vec![term(2.0 * SQRT_2, dist_q(0, r))],
            &[("C2", 2.0 * SQRT_2)],
            vec![],
        )?);
        rhs.push(term(1.0, dist_q(a, c)));
    }
    for &(a, c, s) in &split.revisits {
        let st = b.step(
            StepKind::CrossingSegment,
            "easy-revisit",
            (a, c),
            vec![term(1.0, dist_q(a, c))],
            vec![term(SQRT_2, dist_q(s, c))],
            &[("C1", SQRT_2)],
            vec![],
        )?;
        children.push(st.ev());
    }
    let mut root = b.step(
        StepKind::ConeSplit,
        "easy-step1",
        (0, r),
        vec![term(1.0, len_q(&all))],
        rhs,
        &[("C1", SQRT_2)],
        children,
    )?;
    root.sub_indices = Some(SubIndices {
        runs: Some(split.runs.clone()),
        s_map: Some(split.revisits.iter().map(|&(a, _, s)| (a, s)).collect()),
        ..Default::default()
    });
    let effective_c = effective_constant(&b, &root)?;
    let stats = tree_stats(&root, false);
    Ok(Certificate {
        mode: Mode::Easy,
        gauge,
        polylines: vec![poly.clone()],
        lift: None,
        constants: None,
        partition,
        tol: DEFAULT_TOL,
        root_claim: RootClaim {
            length: length(poly),
            chord: poly.chord(),
            effective_c,
        },
        stats,
        root,
    })
}

fn len_q(idx: &[usize]) -> Quantity {
    Quantity::Length {
        poly: 0,
        idx: idx.to_vec(),
    }
}

fn dist_q(i: usize, j: usize) -> Quantity {
    Quantity::Dist { poly: 0, i, j }
}

fn axis_q(i: usize, j: usize, axis: &[f64]) -> Quantity {
    Quantity::AxisDiff {
        poly: 0,
        i,
        j,
        axis: axis.to_vec(),
    }
}

fn var_q(idx: &[usize], axis: &[f64]) -> Quantity {
    Quantity::Var {
        poly: 0,
        idx: idx.to_vec(),
        basis: vec![axis.to_vec()],
    }
}

/// ℓ(Λ) ≤ (4√2 + 5)·√2·|A_1 A_r| for the points Λ of one cone (apex last).
fn cone_bound(b: &mut Builder<'_>, normal: &[f64], ridx: &[usize], r: usize) -> Result<CertStep> {
    let vertical_axis = if normal[0].abs() > 0.5 { 0 } else { 1 };
    let x2 = unit(2, vertical_axis);
    let x1 = unit(2, 1 - vertical_axis);
    let (first, last) = (ridx[0], ridx[ridx.len() - 1]);
    let rng = (first, last);

    // monotone coordinate along the facet normal
    let chord_step = |b: &mut Builder<'_>| {
        b.step(
            StepKind::VerticalSum,
            "easy-axis-chord",
            rng,
            vec![term(1.0, axis_q(first, last, &x2))],
            vec![term(1.0, dist_q(first, last))],
            &[],
            vec![],
        )
    };
    let c = chord_step(b)?;
    let v2 = b.step(
        StepKind::VerticalSum,
        "easyLx2",
        rng,
        vec![term(1.0, var_q(ridx, &x2))],
        vec![term(1.0, axis_q(first, last, &x2))],
        &[],
        vec![c],
    )?;

    // alternating extraction along the facet direction
    let sub = b.polys[0].subvector(ridx)?;
    let alt: Vec<usize> = extract_alternating(&sub, &Subspace::line(&x1)?)?
        .into_iter()
        .map(|p| ridx[p])
        .collect();
    let mut rec = Vec::new();
    for j in 1..alt.len().saturating_sub(1) {
        rec.push(b.step(
            StepKind::HorizontalGeometric,
            "easy-contraction",
            (alt[j - 1], alt[j + 1]),
            vec![term(1.0, axis_q(alt[j], alt[j + 1], &x1))],
            vec![
                term(0.5, axis_q(alt[j - 1], alt[j], &x1)),
                term(1.0, axis_q(alt[j - 1], alt[j + 1], &x2)),
            ],
            &[],
            vec![],
        )?);
    }
    let head = b.step(
        StepKind::CrossingSegment,
        "rm-subvec2",
        (alt[0], alt[1]),
        vec![term(1.0, axis_q(alt[0], alt[1], &x1))],
        vec![term(2.0 * SQRT_2, dist_q(first, last))],
        &[("C2", 2.0 * SQRT_2)],
        vec![],
    )?;
    let c = chord_step(b)?;
    let alt_v2 = b.step(
        StepKind::VerticalSum,
        "easyLx2",
        (first, last),
        vec![term(1.0, var_q(&alt, &x2))],
        vec![term(1.0, axis_q(first, last, &x2))],
        &[],
        vec![c],
    )?;
    let pairs = b.step(
        StepKind::VerticalSum,
        "easy-pair-sum",
        rng,
        vec![term(
            1.0,
            Quantity::PairSum {
                poly: 0,
                idx: alt.clone(),
                axis: x2.clone(),
            },
        )],
        vec![term(2.0, var_q(&alt, &x2))],
        &[],
        vec![alt_v2],
    )?;
    let mut geo_children = vec![head, pairs];
    geo_children.extend(rec.into_iter().map(CertStep::ev));
    let geo = b.step(
        StepKind::HorizontalGeometric,
        "easyLx1",
        rng,
        vec![term(1.0, var_q(&alt, &x1))],
        vec![
            term(2.0, axis_q(alt[0], alt[1], &x1)),
            term(
                2.0,
                Quantity::PairSum {
                    poly: 0,
                    idx: alt.clone(),
                    axis: x2.clone(),
                },
            ),
        ],
        &[],
        geo_children,
    )?;
    let mut ex = b.step(
        StepKind::AlternatingExtract,
        "easy-alternating",
        rng,
        vec![term(1.0, var_q(ridx, &x1))],
        vec![term(1.0, var_q(&alt, &x1))],
        &[],
        vec![geo],
    )?;
    ex.sub_indices = Some(SubIndices {
        lambda: Some(alt.clone()),
        ..Default::default()
    });
    let cone = b.step(
        StepKind::VerticalSum,
        "easy-cone",
        rng,
        vec![term(1.0, len_q(ridx))],
        vec![term(1.0, var_q(ridx, &x1)), term(1.0, var_q(ridx, &x2))],
        &[],
        vec![ex, v2],
    )?;
    let step3 = b.step(
        StepKind::CrossingSegment,
        "rm-subvec2",
        (first, r),
        vec![term(1.0, dist_q(first, r))],
        vec![term(SQRT_2, dist_q(0, r))],
        &[],
        vec![],
    )?;
    let k = CONE_CONSTANT * SQRT_2;
    b.step(
        StepKind::Recurse,
        "easy-step3",
        rng,
        vec![term(1.0, len_q(ridx))],
        vec![term(k, dist_q(0, r))],
        &[("cone", CONE_CONSTANT), ("sqrt2", SQRT_2)],
        vec![cone.ev(), step3.ev()],
    )
}
