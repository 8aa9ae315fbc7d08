//! Certificates: trees of numerically verified linear inequalities whose
//! bottom-up replay bounds the length of a self-contracted polyline by a
//! multiple of its chord.
//!
//! Every inequality is `lhs ≤ rhs` between nonnegative combinations of atoms
//! ([`Quantity`]) evaluated on stored polylines. A child whose left side is a
//! single atom with coefficient 1 is *substituted* for that atom during replay;
//! every other child is evidence that is verified but not substituted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist2, dot, Subspace};
use crate::norms::Gauge;
use crate::partition::{Constants, Partition, PatchId};
use crate::polyline::{classify_segment, length, Polyline, SegmentClass};

mod check;
mod easy;
mod general;

pub use check::{check_certificate, CheckReport};
pub use easy::certify_easycase;
pub use general::{
    base_case_bound, certify_general, cone_split, horizontal_block_split, lift_to_cylinder, BlockSplit,
    ConeSplit, GeneralSetup, Lift,
};

/// Default relative tolerance of certificate inequalities.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Lemma tag of the steps that only record a measured ratio.
pub const FALLBACK_TAG: &str = "fallback-direct";

/// Atoms of certificate inequalities. `poly` indexes
/// [`Certificate::polylines`]; point indices are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "q", rename_all = "snake_case")]
pub enum Quantity {
    One,
    /// Euclidean length of the subvector.
    Length { poly: usize, idx: Vec<usize> },
    /// |A_i A_j|.
    Dist { poly: usize, i: usize, j: usize },
    /// ℓ_Π of the subvector for Π spanned by the orthonormal `basis`.
    Var { poly: usize, idx: Vec<usize>, basis: Vec<Vec<f64>> },
    /// |⟨axis, A_j − A_i⟩|.
    AxisDiff { poly: usize, i: usize, j: usize, axis: Vec<f64> },
    /// Σ_k |⟨axis, B_k − B_{k−2}⟩| over the subvector (B_k).
    PairSum { poly: usize, idx: Vec<usize>, axis: Vec<f64> },
    /// Largest rise ⟨ν, B_{k+1} − B_k⟩ over the segments of the subvector that
    /// are δ-vertical with respect to ν^⊥ (0 if none rises), ν the normal of
    /// the patch.
    Rise { poly: usize, idx: Vec<usize>, patch: PatchId, delta: f64 },
    /// Angle between the normal of the patch and the subspace.
    PatchAngle { patch: PatchId, basis: Vec<Vec<f64>> },
    /// Smallest angle to the subspace among the segments of the subvector
    /// numbered `skip` and later (π/2 if there are none).
    MinSegmentAngle { poly: usize, idx: Vec<usize>, basis: Vec<Vec<f64>>, skip: usize },
    /// Number of points of the subvector outside the closed cone of the patch
    /// with apex A_apex.
    Outside { poly: usize, idx: Vec<usize>, apex: usize, patch: PatchId },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub q: Quantity,
}

pub type Expr = Vec<Term>;

pub fn term(coef: f64, q: Quantity) -> Term {
    Term { coef, q }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    ConeSplit,
    CrossingSegment,
    VerticalSum,
    AlternatingExtract,
    HorizontalGeometric,
    ProjectionBound,
    LinearSystem,
    ReverseTriangle,
    Lift,
    Recurse,
}

/// Index bookkeeping attached to a step (all 0-based point indices).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubIndices {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_tilde: Option<Vec<usize>>,
    /// (q_l, k_l) block boundaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<(usize, usize)>>,
    /// (j, s(j)) for revisiting segments [A_j A_{j+1}].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_map: Option<Vec<(usize, usize)>>,
    /// Cone runs: patch and the indices of the subvector in its cone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<Vec<(PatchId, Vec<usize>)>>,
    /// Patch tuple (α_i, ..., α_n) of a window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuple: Option<Vec<PatchId>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertStep {
    pub kind: StepKind,
    pub lemma_tag: String,
    pub index_range: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_indices: Option<SubIndices>,
    pub lhs: Expr,
    pub rhs: Expr,
    pub lhs_value: f64,
    pub rhs_value: f64,
    pub constants_used: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Evidence steps are verified but never substituted during replay.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub evidence: bool,
    pub children: Vec<CertStep>,
}

impl CertStep {
    pub fn is_fallback(&self) -> bool {
        self.lemma_tag == FALLBACK_TAG
    }

    /// Number of steps in the subtree.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(CertStep::size).sum::<usize>()
    }

    /// Visits the subtree depth-first with the child-index path of each step.
    pub fn walk<'a>(&'a self, path: &mut Vec<usize>, f: &mut dyn FnMut(&[usize], &'a CertStep)) {
        f(path, self);
        for (i, c) in self.children.iter().enumerate() {
            path.push(i);
            c.walk(path, f);
            path.pop();
        }
    }

    pub fn get_mut(&mut self, path: &[usize]) -> Option<&mut CertStep> {
        let mut cur = self;
        for &i in path {
            cur = cur.children.get_mut(i)?;
        }
        Some(cur)
    }

    /// The single atom of a substitutable left side.
    fn lhs_atom(&self) -> Option<&Quantity> {
        match self.lhs.as_slice() {
            [t] if t.coef == 1.0 && !self.evidence => Some(&t.q),
            _ => None,
        }
    }

    /// Marks the step as evidence.
    pub(crate) fn ev(mut self) -> CertStep {
        self.evidence = true;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Easy,
    General,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootClaim {
    pub length: f64,
    pub chord: f64,
    pub effective_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub steps: usize,
    /// Windows and blocks bounded by a lemma step, a direct pair, or a fallback.
    pub nodes: usize,
    pub fallback_nodes: usize,
    /// Set when the recursion budget cut the decomposition short.
    pub partial: bool,
}

impl Stats {
    pub fn fallback_rate(&self) -> f64 {
        if self.nodes == 0 {
            0.0
        } else {
            self.fallback_nodes as f64 / self.nodes as f64
        }
    }
}

/// Lifting data of a general certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftInfo {
    pub scale: f64,
    pub height: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub mode: Mode,
    pub gauge: Gauge,
    /// `[original]` for easy certificates, `[original, lifted]` otherwise.
    pub polylines: Vec<Polyline>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lift: Option<LiftInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<Constants>,
    pub partition: Partition,
    pub tol: f64,
    pub root_claim: RootClaim,
    pub stats: Stats,
    pub root: CertStep,
}

impl Certificate {
    pub fn fallback_rate(&self) -> f64 {
        self.stats.fallback_rate()
    }

    /// The certificate for the original polyline translated by `v`, with the
    /// lifted polyline rebuilt from the translated points.
    pub fn translated(&self, v: &[f64]) -> Result<Certificate> {
        let mut out = self.clone();
        out.polylines[0] = self.polylines[0].translated(v)?;
        if self.mode == Mode::General {
            let lift = lift_to_cylinder(&self.gauge, &out.polylines[0])?;
            out.polylines[1] = lift.poly;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numeric(format!("serialization failed: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Certificate> {
        serde_json::from_str(s).map_err(|e| Error::Input(format!("malformed certificate: {e}")))
    }
}

// ---------------------------------------------------------------------------
// construction helpers shared by the two engines

/// Evaluates atoms while certificates are being built.
pub(crate) struct Builder<'a> {
    pub polys: Vec<&'a Polyline>,
    pub partition: &'a Partition,
    pub tol: f64,
    scales: Vec<f64>,
    pub steps: usize,
}

impl<'a> Builder<'a> {
    pub fn new(polys: Vec<&'a Polyline>, partition: &'a Partition, tol: f64) -> Self {
        let scales = polys.iter().map(|p| length(p).max(p.chord())).collect();
        Builder {
            polys,
            partition,
            tol,
            scales,
            steps: 0,
        }
    }

    fn pts(&self, poly: usize) -> &[Vec<f64>] {
        self.polys[poly].points()
    }

    fn sub(&self, poly: usize, idx: &[usize]) -> Result<Polyline> {
        self.polys[poly].subvector(idx)
    }

    pub fn value(&self, q: &Quantity) -> Result<f64> {
        Ok(match q {
            Quantity::One => 1.0,
            Quantity::Length { poly, idx } => length(&self.sub(*poly, idx)?),
            Quantity::Dist { poly, i, j } => dist2(&self.pts(*poly)[*i], &self.pts(*poly)[*j]),
            Quantity::Var { poly, idx, basis } => {
                let s = Subspace {
                    ambient: self.polys[*poly].dim(),
                    basis: basis.clone(),
                };
                crate::polyline::projected_length(&self.sub(*poly, idx)?, &s)
            }
            Quantity::AxisDiff { poly, i, j, axis } => {
                let p = self.pts(*poly);
                (dot(axis, &p[*j]) - dot(axis, &p[*i])).abs()
            }
            Quantity::PairSum { poly, idx, axis } => {
                let p = self.pts(*poly);
                let x: Vec<f64> = idx.iter().map(|&k| dot(axis, &p[k])).collect();
                (2..x.len()).map(|k| (x[k] - x[k - 2]).abs()).sum()
            }
            Quantity::Rise { poly, idx, patch, delta } => {
                let nu = self.partition.normal(patch)?;
                let perp = Subspace::line(&nu)?.complement();
                let p = self.pts(*poly);
                let mut worst: f64 = 0.0;
                for w in idx.windows(2) {
                    let (a, b) = (&p[w[0]], &p[w[1]]);
                    if a == b {
                        continue;
                    }
                    let vertical = perp.dim() == 0
                        || classify_segment(a, b, &perp, *delta)? == SegmentClass::Vertical;
                    if vertical {
                        worst = worst.max(dot(&nu, b) - dot(&nu, a));
                    }
                }
                worst
            }
            Quantity::PatchAngle { patch, basis } => {
                let nu = self.partition.normal(patch)?;
                Subspace {
                    ambient: nu.len(),
                    basis: basis.clone(),
                }
                .angle_to(&nu)
            }
            Quantity::MinSegmentAngle { poly, idx, basis, skip } => {
                let p = self.pts(*poly);
                let s = Subspace {
                    ambient: self.polys[*poly].dim(),
                    basis: basis.clone(),
                };
                idx.windows(2)
                    .skip(*skip)
                    .map(|w| s.angle_to(&crate::linalg::sub(&p[w[1]], &p[w[0]])))
                    .fold(std::f64::consts::FRAC_PI_2, f64::min)
            }
            Quantity::Outside { poly, idx, apex, patch } => {
                let p = self.pts(*poly);
                let mut out = 0usize;
                for &k in idx {
                    if !self.partition.in_cone(patch, &crate::linalg::sub(&p[k], &p[*apex]))? {
                        out += 1;
                    }
                }
                out as f64
            }
        })
    }

    pub fn expr_value(&self, e: &Expr) -> Result<f64> {
        let mut s = 0.0;
        for t in e {
            s += t.coef * self.value(&t.q)?;
        }
        Ok(s)
    }

    fn scale_of(&self, e: &Expr) -> f64 {
        e.iter().filter_map(|t| atom_poly(&t.q)).map(|p| self.scales[p]).fold(1.0, f64::max)
    }

    /// Builds a step after checking `lhs ≤ rhs` within the tolerance.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        kind: StepKind,
        tag: &str,
        range: (usize, usize),
        lhs: Expr,
        rhs: Expr,
        constants: &[(&str, f64)],
        children: Vec<CertStep>,
    ) -> Result<CertStep> {
        let lv = self.expr_value(&lhs)?;
        let rv = self.expr_value(&rhs)?;
        if !lv.is_finite() || !rv.is_finite() {
            return Err(Error::Numeric(format!("{tag}: non-finite side")));
        }
        let scale = self.scale_of(&lhs).max(self.scale_of(&rhs));
        if lv > rv + slack(self.tol, scale, lv, rv) {
            return Err(Error::Numeric(format!("{tag}: {lv} > {rv}")));
        }
        self.steps += 1;
        Ok(CertStep {
            kind,
            lemma_tag: tag.to_string(),
            index_range: range,
            sub_indices: None,
            lhs,
            rhs,
            lhs_value: lv,
            rhs_value: rv,
            constants_used: constants.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            note: None,
            evidence: false,
            children,
        })
    }
}

pub(crate) fn atom_poly(q: &Quantity) -> Option<usize> {
    match q {
        Quantity::Length { poly, .. }
        | Quantity::Dist { poly, .. }
        | Quantity::Var { poly, .. }
        | Quantity::AxisDiff { poly, .. }
        | Quantity::PairSum { poly, .. }
        | Quantity::Rise { poly, .. }
        | Quantity::MinSegmentAngle { poly, .. }
        | Quantity::Outside { poly, .. } => Some(*poly),
        Quantity::One | Quantity::PatchAngle { .. } => None,
    }
}

/// Allowed excess of a left side over its right side.
pub(crate) fn slack(tol: f64, scale: f64, lhs: f64, rhs: f64) -> f64 {
    tol * scale.max(lhs.abs()).max(rhs.abs()).max(1.0)
}

/// Certified upper bound of the left side of `step`: its right side with each
/// atom replaced by the bound of the first non-evidence child whose left side
/// is exactly that atom. `value` supplies the atoms that are not substituted.
pub(crate) fn replay(step: &CertStep, value: &mut dyn FnMut(&Quantity) -> Result<f64>) -> Result<f64> {
    let mut total = 0.0;
    for t in &step.rhs {
        let sub = step.children.iter().find(|c| c.lhs_atom() == Some(&t.q));
        let v = match sub {
            Some(c) => replay(c, value)?,
            None => value(&t.q)?,
        };
        total += t.coef * v;
    }
    Ok(total)
}

/// Statistics of a finished tree.
pub(crate) fn tree_stats(root: &CertStep, partial: bool) -> Stats {
    let mut steps = 0;
    let mut nodes = 0;
    let mut fallback_nodes = 0;
    root.walk(&mut Vec::new(), &mut |_, s| {
        steps += 1;
        if is_node_tag(&s.lemma_tag) {
            nodes += 1;
            if s.is_fallback() {
                fallback_nodes += 1;
            }
        }
    });
    Stats {
        steps,
        nodes,
        fallback_nodes,
        partial,
    }
}

/// Tags of the steps that bound a whole window or block.
pub(crate) const NODE_TAGS: &[&str] = &[
    FALLBACK_TAG,
    "direct-pair",
    "easy-cone",
    "ind0-window",
    "ind0-block",
    "base0",
];

fn is_node_tag(tag: &str) -> bool {
    NODE_TAGS.contains(&tag)
}

/// Certified bounds produced by [`linear_system_resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearBounds {
    pub sum_bound: f64,
    pub each_bound: f64,
}

/// From L_j ≤ L0 + C·Σ_k L_k (j = 1..slots) with C < 1/(2·slots), derives
/// Σ L ≤ 2·slots·L0 and L_j ≤ 2·L0. The premises are checked, not assumed.
pub fn linear_system_resolve(l0: f64, ls: &[f64], c: f64, slots: usize) -> Result<LinearBounds> {
    if slots == 0 || ls.len() != slots {
        return Err(Error::Input(format!("{} values for {slots} slots", ls.len())));
    }
    if !(c >= 0.0 && c < 1.0 / (2.0 * slots as f64)) {
        return Err(Error::Hypothesis {
            lemma: "linear system".into(),
            index: 0,
            detail: format!("C = {c} is not below 1/(2·{slots})"),
        });
    }
    let sum: f64 = ls.iter().sum();
    for (j, &l) in ls.iter().enumerate() {
        if l > l0 + c * sum + 1e-12 * (1.0 + l0.abs() + sum.abs()) {
            return Err(Error::Hypothesis {
                lemma: "linear system".into(),
                index: j + 1,
                detail: format!("L_{} = {l} exceeds L0 + C·ΣL = {}", j + 1, l0 + c * sum),
            });
        }
    }
    Ok(LinearBounds {
        sum_bound: 2.0 * slots as f64 * l0,
        each_bound: 2.0 * l0,
    })
}

/// Certified bound of the root step divided by the chord of the original polyline.
pub(crate) fn effective_constant(b: &Builder<'_>, root: &CertStep) -> Result<f64> {
    let bound = replay(root, &mut |q| b.value(q))?;
    Ok(bound / b.polys[0].chord())
}

/// Gauge check shared by the engines.
pub(crate) fn require_self_contracted(poly: &Polyline, gauge: &Gauge) -> Result<()> {
    crate::polyline::is_self_contracted(poly, gauge)?.into_result()
}
