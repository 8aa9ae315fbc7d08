//! The general engine: lift to the cylinder gauge, then recurse through the
//! patch-tuple levels down to the base bound.

use serde::{Deserialize, Serialize};

use super::{
    effective_constant, linear_system_resolve, replay, require_self_contracted, term, tree_stats, Builder,
    CertStep, Certificate, Expr, LiftInfo, Mode, Quantity, RootClaim, StepKind, SubIndices, DEFAULT_TOL,
    FALLBACK_TAG,
};
use crate::error::{hypothesis, input, Error, Result};
use crate::linalg::{dot, unit, Subspace};
use crate::norms::Gauge;
use crate::partition::{
    build_partition, compute_constants, estimate_all, frame_from_tuple, Constants, Frame, Partition, PatchId,
};
use crate::polyline::{classify_segment, length, Polyline, SegmentClass};

/// A polyline lifted into the cylinder over its gauge.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lift {
    pub gauge: Gauge,
    pub poly: Polyline,
    pub scale: f64,
    pub height: f64,
    /// Original indices kept after dropping repeated consecutive points.
    pub kept: Vec<usize>,
}

/// Maps A_j to (s·(A_j − A_r), h) with s = 1/|A_1 A_r| and
/// h = max(1, s·‖A_1 − A_r‖), then appends the origin.
///
/// All lifted points before the origin share the height h and lie in the
/// closed top cone at the origin; repeated consecutive points are dropped.
pub fn lift_to_cylinder(gauge: &Gauge, poly: &Polyline) -> Result<Lift> {
    if poly.dim() != gauge.dim() {
        return input("polyline and gauge dimensions differ");
    }
    if poly.len() < 2 {
        return input("lifting needs at least two points");
    }
    let chord = poly.chord();
    if chord == 0.0 {
        return input("A_1 = A_r; the chord must be positive");
    }
    let s = 1.0 / chord;
    let last = poly.last();
    let height = (s * gauge.dist(last, poly.first())).max(1.0);
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(poly.len() + 1);
    let mut kept = Vec::new();
    for (j, p) in poly.points().iter().enumerate() {
        let mut q: Vec<f64> = p.iter().zip(last).map(|(a, b)| s * (a - b)).collect();
        q.push(height);
        if pts.last() != Some(&q) {
            pts.push(q);
            kept.push(j);
        }
    }
    pts.push(vec![0.0; gauge.dim() + 1]);
    Ok(Lift {
        gauge: Gauge::cylinder(gauge.clone()),
        poly: Polyline::new(pts)?,
        scale: s,
        height,
        kept,
    })
}

/// Cone decomposition of a window around its last point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSplit {
    pub apex: usize,
    /// Patch of each window point seen from the apex (`[0]` for the apex).
    pub labels: Vec<PatchId>,
    /// Per patch, in order of first appearance: the window points in its
    /// cone followed by the apex.
    pub runs: Vec<(PatchId, Vec<usize>)>,
    /// Segments (a, b) entering a cone for the first time.
    pub crossings: Vec<(usize, usize)>,
    /// Segments (a, b) re-entering the cone of b, with s the last earlier
    /// window point in that cone.
    pub revisits: Vec<(usize, usize, usize)>,
}

pub fn cone_split(partition: &Partition, poly: &Polyline, window: &[usize]) -> Result<ConeSplit> {
    let m = window.len();
    if m < 2 {
        return input("a cone split needs at least two points");
    }
    if window.iter().any(|&i| i >= poly.len()) || window.windows(2).any(|w| w[0] >= w[1]) {
        return input("window indices must be increasing and in range");
    }
    let apex = window[m - 1];
    let pts = poly.points();
    let mut labels = Vec::with_capacity(m);
    for &i in window {
        labels.push(crate::partition::classify(partition, &pts[apex], &pts[i])?);
    }
    let mut runs: Vec<(PatchId, Vec<usize>)> = Vec::new();
    for (j, l) in labels.iter().enumerate().take(m - 1) {
        if l.is_apex() {
            return input("repeated point equal to the apex inside a window");
        }
        match runs.iter_mut().find(|(p, _)| p == l) {
            Some((_, v)) => v.push(window[j]),
            None => runs.push((l.clone(), vec![window[j]])),
        }
    }
    for (_, v) in runs.iter_mut() {
        v.push(apex);
    }
    let mut crossings = Vec::new();
    let mut revisits = Vec::new();
    for j in 0..m - 1 {
        if j + 1 == m - 1 || labels[j] == labels[j + 1] {
            continue;
        }
        let target = &labels[j + 1];
        match (0..j).rev().find(|&s| &labels[s] == target) {
            None => crossings.push((window[j], window[j + 1])),
            Some(s) => revisits.push((window[j], window[j + 1], window[s])),
        }
    }
    Ok(ConeSplit {
        apex,
        labels,
        runs,
        crossings,
        revisits,
    })
}

/// Backward decomposition of a window into maximal ε-horizontal blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSplit {
    /// (q_l, k_l) point indices, increasing.
    pub blocks: Vec<(usize, usize)>,
    /// The window without block interiors.
    pub lambda: Vec<usize>,
    /// `lambda` without block heads other than the window's first point.
    pub lambda_tilde: Vec<usize>,
}

fn horizontal(pts: &[Vec<f64>], a: usize, b: usize, sub: &Subspace, eps: f64) -> Result<bool> {
    Ok(classify_segment(&pts[a], &pts[b], sub, eps)? == SegmentClass::Horizontal)
}

/// Finds the last ε-horizontal segment [A_{k−1} A_k], extends it back to the
/// least q with every [A_j A_k] (q ≤ j < k) ε-horizontal, and repeats below q.
pub fn horizontal_block_split(poly: &Polyline, window: &[usize], sub: &Subspace, eps: f64) -> Result<BlockSplit> {
    if sub.ambient != poly.dim() {
        return input("subspace and polyline dimensions differ");
    }
    let pts = poly.points();
    let w = window;
    let mut blocks = Vec::new();
    let mut end = w.len();
    while end >= 2 {
        let mut k = None;
        for kk in (1..end).rev() {
            if horizontal(pts, w[kk - 1], w[kk], sub, eps)? {
                k = Some(kk);
                break;
            }
        }
        let Some(k) = k else { break };
        let mut q = k - 1;
        while q >= 1 && horizontal(pts, w[q - 1], w[k], sub, eps)? {
            q -= 1;
        }
        blocks.push((q, k));
        end = q;
    }
    blocks.reverse();
    let mut interior = vec![false; w.len()];
    let mut head = vec![false; w.len()];
    for &(q, k) in &blocks {
        interior[q + 1..k].iter_mut().for_each(|x| *x = true);
        if q > 0 {
            head[q] = true;
        }
    }
    let lambda: Vec<usize> = (0..w.len()).filter(|&p| !interior[p]).map(|p| w[p]).collect();
    let lambda_tilde = (0..w.len()).filter(|&p| !interior[p] && !head[p]).map(|p| w[p]).collect();
    Ok(BlockSplit {
        blocks: blocks.into_iter().map(|(q, k)| (w[q], w[k])).collect(),
        lambda,
        lambda_tilde,
    })
}

/// Directional blocks along a line: like [`horizontal_block_split`] but every
/// ε-horizontal segment inside a block must point the way of its last segment,
/// and consecutive blocks may share an endpoint.
fn directional_blocks(pts: &[Vec<f64>], w: &[usize], line: &Subspace, eps: f64) -> Result<Vec<(usize, usize)>> {
    let e = &line.basis[0];
    let x = |p: usize| dot(e, &pts[w[p]]);
    let mut blocks = Vec::new();
    let mut end = w.len() - 1;
    while end >= 1 {
        let mut k = None;
        for kk in (1..=end).rev() {
            if horizontal(pts, w[kk - 1], w[kk], line, eps)? {
                k = Some(kk);
                break;
            }
        }
        let Some(k) = k else { break };
        let dir = x(k) - x(k - 1);
        let mut q = k - 1;
        while q >= 1 {
            let chord_ok = horizontal(pts, w[q - 1], w[k], line, eps)?;
            let seg_h = horizontal(pts, w[q - 1], w[q], line, eps)?;
            let dir_ok = !seg_h || (x(q) - x(q - 1)) * dir >= 0.0;
            if !(chord_ok && dir_ok) {
                break;
            }
            q -= 1;
        }
        blocks.push((q, k));
        end = q;
    }
    blocks.reverse();
    Ok(blocks)
}

/// Constants and data for a general certificate: the lifted gauge, its
/// estimated constants and the partition at δ = δ₀/2.
#[derive(Clone, Debug)]
pub struct GeneralSetup {
    pub gauge: Gauge,
    pub lifted: Gauge,
    pub constants: Constants,
    pub partition: Partition,
}

impl GeneralSetup {
    pub fn new(gauge: &Gauge, budget: usize, seed: u64) -> Result<Self> {
        let lifted = Gauge::cylinder(gauge.clone());
        let est = estimate_all(&lifted, budget, seed)?;
        let constants = compute_constants(&lifted, lifted.dim(), &est)?;
        Self::from_constants(gauge, constants)
    }

    /// Uses frozen constants of the lifted gauge.
    pub fn from_constants(gauge: &Gauge, constants: Constants) -> Result<Self> {
        let lifted = Gauge::cylinder(gauge.clone());
        if constants.gauge_hash != lifted.hash() || constants.n != lifted.dim() {
            return input("constants do not belong to the cylinder over this gauge");
        }
        let partition = build_partition(&lifted, 0.5 * constants.delta0)?;
        Ok(GeneralSetup {
            gauge: gauge.clone(),
            lifted,
            constants,
            partition,
        })
    }

    pub fn certify(&self, poly: &Polyline, max_depth: Option<usize>) -> Result<Certificate> {
        certify_general(poly, &self.gauge, &self.partition, &self.constants, max_depth)
    }
}

/// Certificate for a self-contracted polyline under a symmetric gauge.
///
/// `partition` and `constants` belong to the cylinder over `gauge` with
/// `partition.delta < constants.delta0`. Windows whose lemma hypotheses fail
/// are bounded by their measured ratio and tagged [`FALLBACK_TAG`]; windows
/// deeper than `max_depth` (default: the lifted dimension) are treated the
/// same way and mark the certificate partial.
pub fn certify_general(
    poly: &Polyline,
    gauge: &Gauge,
    partition: &Partition,
    constants: &Constants,
    max_depth: Option<usize>,
) -> Result<Certificate> {
    if !gauge.is_symmetric() {
        return Err(Error::Unsupported("certificates need a symmetric gauge".into()));
    }
    require_self_contracted(poly, gauge)?;
    let lift = lift_to_cylinder(gauge, poly)?;
    let d = lift.gauge.dim();
    let h = lift.gauge.hash();
    if constants.n != d || constants.gauge_hash != h {
        return input("constants do not belong to the cylinder over this gauge");
    }
    if partition.gauge.hash() != h {
        return input("partition does not belong to the cylinder over this gauge");
    }
    if !(partition.delta < constants.delta0) {
        return input(format!(
            "partition δ = {} is not below δ₀ = {}",
            partition.delta, constants.delta0
        ));
    }
    let builder = Builder::new(vec![poly, &lift.poly], partition, DEFAULT_TOL);
    let mut eng = Engine::new(builder, 1, constants, max_depth.unwrap_or(d));
    let all: Vec<usize> = (0..lift.poly.len()).collect();
    let top = partition.classify_direction(&unit(d, d - 1))?;
    let inner = eng.window(d, &all, &[top], &[all.len() - 1], 1)?;
    let chord = poly.chord();
    let orig: Vec<usize> = (0..poly.len()).collect();
    let root = eng.b.step(
        StepKind::Lift,
        "lift",
        (0, poly.len() - 1),
        vec![term(1.0, Quantity::Length { poly: 0, idx: orig })],
        vec![term(chord, Quantity::Length { poly: 1, idx: all })],
        &[("chord", chord), ("height", lift.height)],
        vec![inner],
    )?;
    let effective_c = effective_constant(&eng.b, &root)?;
    let stats = tree_stats(&root, eng.partial);
    Ok(Certificate {
        mode: Mode::General,
        gauge: gauge.clone(),
        polylines: vec![poly.clone(), lift.poly.clone()],
        lift: Some(LiftInfo {
            scale: lift.scale,
            height: lift.height,
        }),
        constants: Some(constants.clone()),
        partition: partition.clone(),
        tol: DEFAULT_TOL,
        root_claim: RootClaim {
            length: length(poly),
            chord,
            effective_c,
        },
        stats,
        root,
    })
}

/// Base-level bound for a window of `poly` whose points lie in the cones of
/// the full patch tuple at the given anchors (point indices, one per patch).
pub fn base_case_bound(
    poly: &Polyline,
    partition: &Partition,
    constants: &Constants,
    window: &[usize],
    tuple: &[PatchId],
    anchors: &[usize],
) -> Result<CertStep> {
    if tuple.len() != poly.dim() || anchors.len() != tuple.len() {
        return input("the base bound needs one patch and one anchor per dimension");
    }
    if window.len() < 2 {
        return input("a window needs at least two points");
    }
    let builder = Builder::new(vec![poly], partition, DEFAULT_TOL);
    let mut eng = Engine::new(builder, 0, constants, poly.dim());
    eng.base(window, tuple, anchors)
}

struct Engine<'a> {
    b: Builder<'a>,
    wp: usize,
    c: &'a Constants,
    d: usize,
    delta: f64,
    tan_d: f64,
    c_xi: f64,
    c_pair: f64,
    c_rt: f64,
    max_depth: usize,
    partial: bool,
}

fn range(idx: &[usize]) -> (usize, usize) {
    (idx[0], idx[idx.len() - 1])
}

impl<'a> Engine<'a> {
    fn new(b: Builder<'a>, wp: usize, c: &'a Constants, max_depth: usize) -> Self {
        let d = b.polys[wp].dim();
        let (rho, big_r) = b.partition.gauge.radii();
        let delta = b.partition.delta;
        Engine {
            wp,
            d,
            delta,
            tan_d: delta.tan(),
            c_xi: c.c_of_zeta(c.xi),
            c_pair: 2.0 * big_r / rho,
            c_rt: 1.0 + 2.0 * big_r / rho,
            c,
            b,
            max_depth,
            partial: false,
        }
    }

    fn pts(&self) -> &'a [Vec<f64>] {
        self.b.polys[self.wp].points()
    }

    fn len_q(&self, idx: &[usize]) -> Quantity {
        Quantity::Length {
            poly: self.wp,
            idx: idx.to_vec(),
        }
    }

    fn dist_q(&self, i: usize, j: usize) -> Quantity {
        Quantity::Dist { poly: self.wp, i, j }
    }

    fn chord_q(&self, idx: &[usize]) -> Quantity {
        self.dist_q(idx[0], idx[idx.len() - 1])
    }

    fn var_q(&self, idx: &[usize], s: &Subspace) -> Quantity {
        Quantity::Var {
            poly: self.wp,
            idx: idx.to_vec(),
            basis: s.basis.clone(),
        }
    }

    fn direct(&mut self, idx: &[usize]) -> Result<CertStep> {
        self.b.step(
            StepKind::Recurse,
            "direct-pair",
            range(idx),
            vec![term(1.0, self.len_q(idx))],
            vec![term(1.0, self.chord_q(idx))],
            &[],
            vec![],
        )
    }

    fn fallback(&mut self, idx: &[usize], why: String) -> Result<CertStep> {
        let l = self.b.value(&self.len_q(idx))?;
        let dd = self.b.value(&self.chord_q(idx))?;
        let m = l / dd;
        let mut s = self.b.step(
            StepKind::Recurse,
            FALLBACK_TAG,
            range(idx),
            vec![term(1.0, self.len_q(idx))],
            vec![term(m, self.chord_q(idx))],
            &[("measured", m)],
            vec![],
        )?;
        s.note = Some(why);
        Ok(s)
    }

    fn window(
        &mut self,
        level: usize,
        idx: &[usize],
        tuple: &[PatchId],
        anchors: &[usize],
        depth: usize,
    ) -> Result<CertStep> {
        if idx.len() <= 2 {
            return self.direct(idx);
        }
        if depth > self.max_depth {
            self.partial = true;
            return self.fallback(idx, "recursion depth exhausted".into());
        }
        let r = if level <= 1 {
            self.base(idx, tuple, anchors)
        } else {
            self.inductive(level, idx, tuple, anchors, depth)
        };
        match r {
            Ok(s) => Ok(s),
            Err(e) => self.fallback(idx, e.to_string()),
        }
    }

    /// Containment of the window in every cone of the tuple and the angle
    /// conditions of the tuple, as evidence steps.
    fn hypotheses(&mut self, idx: &[usize], frame: &Frame, anchors: &[usize]) -> Result<Vec<CertStep>> {
        let mut out = Vec::new();
        for (t, patch) in frame.patch_indices.iter().enumerate() {
            let outside = Quantity::Outside {
                poly: self.wp,
                idx: idx.to_vec(),
                apex: anchors[t],
                patch: patch.clone(),
            };
            if self.b.value(&outside)? > 0.0 {
                return Err(hypothesis("cone containment", t + 1, format!("points outside the cone of {patch}")));
            }
            out.push(self.b.step(
                StepKind::ConeSplit,
                "cone-containment",
                range(idx),
                vec![term(1.0, outside)],
                vec![],
                &[],
                vec![],
            )?);
            out.push(self.b.step(
                StepKind::ConeSplit,
                "admissible",
                range(idx),
                vec![term(
                    1.0,
                    Quantity::PatchAngle {
                        patch: patch.clone(),
                        basis: frame.pi_subspaces[t].basis.clone(),
                    },
                )],
                vec![term(self.c.xi, Quantity::One)],
                &[("xi", self.c.xi)],
                vec![],
            )?);
        }
        Ok(out)
    }

    /// Descent along ν of the δ-vertical segments, one evidence step per patch.
    fn descent(&mut self, idx: &[usize], patches: &[PatchId]) -> Result<Vec<CertStep>> {
        let mut out = Vec::new();
        for (t, patch) in patches.iter().enumerate() {
            let rise = Quantity::Rise {
                poly: self.wp,
                idx: idx.to_vec(),
                patch: patch.clone(),
                delta: self.delta,
            };
            let v = self.b.value(&rise)?;
            if v > 0.0 {
                return Err(hypothesis("cone descent", t + 1, format!("a δ-vertical segment rises by {v:e}")));
            }
            out.push(self.b.step(
                StepKind::VerticalSum,
                "epsconvA1Ar",
                range(idx),
                vec![term(1.0, rise)],
                vec![],
                &[("delta", self.delta)],
                vec![],
            )?);
        }
        Ok(out)
    }

    fn inductive(
        &mut self,
        level: usize,
        idx: &[usize],
        tuple: &[PatchId],
        anchors: &[usize],
        depth: usize,
    ) -> Result<CertStep> {
        let frame = frame_from_tuple(self.b.partition, tuple, self.c.xi)?;
        let mut evidence = self.hypotheses(idx, &frame, anchors)?;
        let split = horizontal_block_split(self.b.polys[self.wp], idx, &frame.residual, self.c.eps0)?;

        let mut cur = self.step4(&split.lambda_tilde, &frame)?;
        evidence.extend(self.descent(&split.lambda_tilde, tuple)?);
        if split.lambda_tilde.len() < split.lambda.len() {
            cur = self.reverse_triangle(&split, cur)?;
        }
        if split.lambda.len() < idx.len() {
            let mut blocks = Vec::new();
            let mut c_prime: f64 = 1.0;
            for &(q, k) in &split.blocks {
                let (pq, pk) = (pos(idx, q), pos(idx, k));
                if pk - pq < 2 {
                    continue;
                }
                let bidx = &idx[pq..=pk];
                let s = self.block(level, bidx, tuple, anchors, &frame, depth)?;
                let bound = replay(&s, &mut |a| self.b.value(a))?;
                c_prime = c_prime.max(bound / self.b.value(&self.dist_q(q, k))?);
                blocks.push(s);
            }
            let mut children = vec![cur];
            children.extend(blocks.into_iter().map(CertStep::ev));
            let mut s = self.b.step(
                StepKind::Recurse,
                "ind0-step2",
                range(idx),
                vec![term(1.0, self.len_q(idx))],
                vec![term(c_prime, self.len_q(&split.lambda))],
                &[("C_prime", c_prime)],
                children,
            )?;
            s.sub_indices = Some(SubIndices {
                lambda: Some(split.lambda.clone()),
                blocks: Some(split.blocks.clone()),
                ..Default::default()
            });
            cur = s;
        }
        let mut children = vec![cur];
        children.extend(evidence.into_iter().map(CertStep::ev));
        let mut s = self.b.step(
            StepKind::Recurse,
            "ind0-window",
            range(idx),
            vec![term(1.0, self.len_q(idx))],
            vec![term(1.0, self.len_q(idx))],
            &[("level", level as f64)],
            children,
        )?;
        s.sub_indices = Some(SubIndices {
            tuple: Some(tuple.to_vec()),
            ..Default::default()
        });
        Ok(s)
    }

    fn reverse_triangle(&mut self, split: &BlockSplit, cur: CertStep) -> Result<CertStep> {
        let mut children = vec![cur];
        let lam = &split.lambda;
        for &(q, k) in &split.blocks {
            let pq = pos(lam, q);
            if q == lam[0] {
                continue;
            }
            let a = lam[pq - 1];
            children.push(self.b.step(
                StepKind::ReverseTriangle,
                "revtriangle",
                (a, k),
                vec![term(1.0, self.dist_q(a, q)), term(1.0, self.dist_q(q, k))],
                vec![term(self.c_rt, self.dist_q(a, k))],
                &[("C_rt", self.c_rt)],
                vec![],
            )?.ev());
        }
        let mut s = self.b.step(
            StepKind::ReverseTriangle,
            "ind0-step3",
            range(lam),
            vec![term(1.0, self.len_q(lam))],
            vec![term(self.c_rt, self.len_q(&split.lambda_tilde))],
            &[("C_rt", self.c_rt)],
            children,
        )?;
        s.sub_indices = Some(SubIndices {
            lambda: Some(split.lambda.clone()),
            lambda_tilde: Some(split.lambda_tilde.clone()),
            ..Default::default()
        });
        Ok(s)
    }

    /// Bound on a chain whose segments after the first are ε₀-vertical with
    /// respect to the residual subspace of the frame.
    fn step4(&mut self, lt: &[usize], frame: &Frame) -> Result<CertStep> {
        let k = frame.axes.len() as f64;
        let pi = &frame.residual;
        let perp = Subspace::span(self.d, &frame.axes)?;
        let dq = self.chord_q(lt);
        let (e0, tan_d, cx, cp) = (self.c.eps0, self.tan_d, self.c_xi, self.c_pair);
        let rng = range(lt);

        let vert_q = Quantity::MinSegmentAngle {
            poly: self.wp,
            idx: lt.to_vec(),
            basis: pi.basis.clone(),
            skip: 1,
        };
        if self.b.value(&vert_q)? <= e0 {
            return Err(hypothesis("vertical chain", 2, "a later segment is ε₀-horizontal"));
        }
        let vert = self.b.step(
            StepKind::VerticalSum,
            "ind0-vertical",
            rng,
            vec![term(e0, Quantity::One)],
            vec![term(1.0, vert_q)],
            &[("eps0", e0)],
            vec![],
        )?;

        let pair = self.b.step(
            StepKind::CrossingSegment,
            "rm-subvec2",
            rng,
            vec![term(1.0, self.dist_q(lt[0], lt[1]))],
            vec![term(cp, dq.clone())],
            &[("c_pair", cp)],
            vec![],
        )?;
        let eq7 = self.b.step(
            StepKind::VerticalSum,
            "eq7",
            rng,
            vec![term(1.0, self.var_q(lt, pi))],
            vec![term(cp, dq.clone()), term(1.0 / e0.sin(), self.var_q(lt, &perp))],
            &[("c_pair", cp), ("eps0", e0)],
            vec![pair.ev(), vert.ev()],
        )?;
        let k_a = 2.0 * (cp + 2.0 * k * cx / e0.sin());
        let a = self.b.step(
            StepKind::VerticalSum,
            "eq11",
            rng,
            vec![term(1.0, self.var_q(lt, pi))],
            vec![term(k_a, dq.clone())],
            &[("K_a", k_a)],
            vec![eq7.ev()],
        )?;

        let mut ev = Vec::new();
        let mut ls = Vec::new();
        let mut axis_terms: Expr = Vec::new();
        for ax in &frame.axes {
            let line = Subspace::line(ax)?;
            let comp = line.complement();
            ev.push(self.b.step(
                StepKind::VerticalSum,
                "vert1a",
                rng,
                vec![term(1.0, self.var_q(lt, &line))],
                vec![term(1.0, dq.clone()), term(2.0 * tan_d, self.var_q(lt, &comp))],
                &[("tan_delta", tan_d)],
                vec![],
            )?);
            ls.push(self.b.value(&self.var_q(lt, &line))?);
            axis_terms.push(term(1.0, self.var_q(lt, &line)));
        }
        let est = self.b.step(
            StepKind::ProjectionBound,
            "estvarPi",
            rng,
            vec![term(1.0, self.var_q(lt, &perp))],
            axis_terms.iter().map(|t| term(cx, t.q.clone())).collect(),
            &[("C_xi", cx)],
            vec![],
        )?;
        let l0 = self.b.value(&dq)? + 2.0 * tan_d * self.b.value(&self.var_q(lt, pi))?;
        linear_system_resolve(l0, &ls, 2.0 * tan_d * cx, frame.axes.len())?;
        let mut eq9_children = vec![est.clone().ev()];
        eq9_children.extend(ev.into_iter().map(CertStep::ev));
        let eq9 = self.b.step(
            StepKind::LinearSystem,
            "eq9",
            rng,
            axis_terms,
            vec![term(2.0 * k, dq.clone()), term(4.0 * k * tan_d, self.var_q(lt, pi))],
            &[("tan_delta", tan_d), ("C_xi", cx)],
            eq9_children,
        )?;
        let k_b = 4.0 * k * cx + cp * e0.sin();
        let b = self.b.step(
            StepKind::ProjectionBound,
            "eq10",
            rng,
            vec![term(1.0, self.var_q(lt, &perp))],
            vec![term(k_b, dq)],
            &[("K_b", k_b)],
            vec![est.ev(), eq9.ev()],
        )?;
        self.b.step(
            StepKind::VerticalSum,
            "ind0-step4",
            rng,
            vec![term(1.0, self.len_q(lt))],
            vec![term(1.0, self.var_q(lt, pi)), term(1.0, self.var_q(lt, &perp))],
            &[],
            vec![a, b],
        )
    }

    fn block(
        &mut self,
        level: usize,
        bidx: &[usize],
        tuple: &[PatchId],
        anchors: &[usize],
        frame: &Frame,
        depth: usize,
    ) -> Result<CertStep> {
        match self.cone_block(level, bidx, tuple, anchors, frame, depth) {
            Ok(s) => Ok(s),
            Err(e) => self.fallback(bidx, e.to_string()),
        }
    }

    fn cone_block(
        &mut self,
        level: usize,
        bidx: &[usize],
        tuple: &[PatchId],
        anchors: &[usize],
        frame: &Frame,
        depth: usize,
    ) -> Result<CertStep> {
        let split = cone_split(self.b.partition, self.b.polys[self.wp], bidx)?;
        let cp = self.c_pair;
        let c1 = cp.max(1.0);
        let apex = split.apex;
        let mut children = Vec::new();
        let mut rhs: Expr = Vec::new();
        for (t, (patch, ridx)) in split.runs.iter().enumerate() {
            let ang = Quantity::PatchAngle {
                patch: patch.clone(),
                basis: frame.residual.basis.clone(),
            };
            if self.b.value(&ang)? >= self.c.xi {
                return Err(hypothesis("admissible tuple", t + 1, format!("patch {patch} is too steep")));
            }
            children.push(self.b.step(
                StepKind::ConeSplit,
                "admissible",
                range(ridx),
                vec![term(1.0, ang)],
                vec![term(self.c.xi, Quantity::One)],
                &[("xi", self.c.xi)],
                vec![],
            )?.ev());
            let mut sub_tuple = vec![patch.clone()];
            sub_tuple.extend_from_slice(tuple);
            let mut sub_anchors = vec![apex];
            sub_anchors.extend_from_slice(anchors);
            let w = self.window(level - 1, ridx, &sub_tuple, &sub_anchors, depth + 1)?;
            children.push(w);
            rhs.push(term(c1, self.len_q(ridx)));
        }
        for &(a, b) in &split.crossings {
            children.push(self.b.step(
                StepKind::CrossingSegment,
                "rm-subvec2",
                (a, b),
                vec![term(1.0, self.dist_q(a, b))],
                vec![term(cp, self.chord_q(bidx))],
                &[("c_pair", cp)],
                vec![],
            )?);
            rhs.push(term(1.0, self.dist_q(a, b)));
        }
        for &(a, b, s) in &split.revisits {
            let st = self.b.step(
                StepKind::CrossingSegment,
                "cone-revisit",
                (a, b),
                vec![term(1.0, self.dist_q(a, b))],
                vec![term(cp, self.dist_q(s, b))],
                &[("c_pair", cp)],
                vec![],
            )?;
            children.push(st.ev());
        }
        let mut s = self.b.step(
            StepKind::ConeSplit,
            "ind0-block",
            range(bidx),
            vec![term(1.0, self.len_q(bidx))],
            rhs,
            &[("C1_bar", c1)],
            children,
        )?;
        s.sub_indices = Some(SubIndices {
            runs: Some(split.runs.clone()),
            s_map: Some(split.revisits.iter().map(|&(a, _, s)| (a, s)).collect()),
            ..Default::default()
        });
        Ok(s)
    }

    fn base(&mut self, idx: &[usize], tuple: &[PatchId], anchors: &[usize]) -> Result<CertStep> {
        let d = self.d;
        let frame = frame_from_tuple(self.b.partition, tuple, self.c.xi)?;
        let x1 = frame
            .x1
            .clone()
            .ok_or_else(|| Error::Input("the base bound needs a full patch tuple".into()))?;
        let mut evidence = self.hypotheses(idx, &frame, anchors)?;
        evidence.extend(self.descent(idx, &tuple[1..])?);
        let x1l = Subspace::line(&x1)?;
        let x1p = Subspace::span(d, &frame.axes[1..])?;
        let rng = range(idx);
        let dq = self.chord_q(idx);
        let (e1, tan_d, cx, cp) = (self.c.eps1, self.tan_d, self.c_xi, self.c_pair);
        let cot1 = 1.0 / e1.tan();
        let c1p = 3.0 * cot1 + 8.0 / e1.sin();
        let c3 = cot1 + 8.0 / e1.sin();
        let c1 = c1p * cx;
        let c2 = 4.0 * cp;
        let slots = d - 1;

        // horizontal part along x¹
        let pts = self.pts();
        let hb = directional_blocks(pts, idx, &x1l, e1)?;
        let mut interior = vec![false; idx.len()];
        let mut hord = Vec::new();
        for &(q, k) in &hb {
            interior[q + 1..k].iter_mut().for_each(|x| *x = true);
            let blk = &idx[q..=k];
            hord.push(self.b.step(
                StepKind::HorizontalGeometric,
                "hordir1",
                range(blk),
                vec![term(1.0, self.var_q(blk, &x1l))],
                vec![
                    term(
                        1.0,
                        Quantity::AxisDiff {
                            poly: self.wp,
                            i: blk[0],
                            j: blk[blk.len() - 1],
                            axis: x1.clone(),
                        },
                    ),
                    term(2.0 * cot1, self.var_q(blk, &x1p)),
                ],
                &[("cot_eps1", cot1)],
                vec![],
            )?);
        }
        let lam: Vec<usize> = (0..idx.len()).filter(|&p| !interior[p]).map(|p| idx[p]).collect();
        let h3 = self.horiz3(&lam, &x1, &x1l, &x1p, e1, c3)?;
        let pair = self.b.step(
            StepKind::CrossingSegment,
            "rm-subvec2",
            (lam[0], lam[1]),
            vec![term(1.0, self.dist_q(lam[0], lam[1]))],
            vec![term(cp, dq.clone())],
            &[("c_pair", cp)],
            vec![],
        )?;
        let mut h4_children: Vec<CertStep> = hord.into_iter().map(CertStep::ev).collect();
        h4_children.push(h3.ev());
        h4_children.push(pair.ev());
        let mut h4 = self.b.step(
            StepKind::HorizontalGeometric,
            "horiz4",
            rng,
            vec![term(1.0, self.var_q(idx, &x1l))],
            vec![term(c1p, self.var_q(idx, &x1p)), term(c2, dq.clone())],
            &[("C1_prime", c1p), ("C2", c2)],
            h4_children,
        )?;
        h4.sub_indices = Some(SubIndices {
            lambda: Some(lam.clone()),
            blocks: Some(hb.iter().map(|&(q, k)| (idx[q], idx[k])).collect()),
            ..Default::default()
        });

        let lines: Vec<Subspace> = frame.axes[1..].iter().map(|a| Subspace::line(a)).collect::<Result<_>>()?;
        let axis_terms: Expr = lines.iter().map(|l| term(1.0, self.var_q(idx, l))).collect();
        let est = self.b.step(
            StepKind::ProjectionBound,
            "estvarPi",
            rng,
            vec![term(1.0, self.var_q(idx, &x1p))],
            axis_terms.iter().map(|t| term(cx, t.q.clone())).collect(),
            &[("C_xi", cx)],
            vec![],
        )?;
        let cor = self.b.step(
            StepKind::HorizontalGeometric,
            "co-horiz4a",
            rng,
            vec![term(1.0, self.var_q(idx, &x1l))],
            axis_terms
                .iter()
                .map(|t| term(c1, t.q.clone()))
                .chain([term(c2, dq.clone())])
                .collect(),
            &[("C1", c1), ("C2", c2)],
            vec![h4.ev(), est.clone().ev()],
        )?;

        // vertical part: one linear system over the axes x², ..., xⁿ
        let dval = self.b.value(&dq)?;
        let ls: Vec<f64> = axis_terms.iter().map(|t| self.b.value(&t.q)).collect::<Result<_>>()?;
        let l0 = (2.0 + 4.0 * c2 * tan_d) * dval;
        let lin = linear_system_resolve(l0, &ls, 4.0 * c1 * tan_d, slots)?;
        let each = 4.0 + 8.0 * c2 * tan_d;
        let mut finals = Vec::new();
        for l in &lines {
            let comp = l.complement();
            let v1 = self.b.step(
                StepKind::VerticalSum,
                "vert1a",
                rng,
                vec![term(1.0, self.var_q(idx, l))],
                vec![term(1.0, dq.clone()), term(2.0 * tan_d, self.var_q(idx, &comp))],
                &[("tan_delta", tan_d)],
                vec![],
            )?;
            let b0 = self.b.step(
                StepKind::LinearSystem,
                "base0j",
                rng,
                vec![term(1.0, self.var_q(idx, l))],
                std::iter::once(term(2.0 + 4.0 * c2 * tan_d, dq.clone()))
                    .chain(axis_terms.iter().map(|t| term(4.0 * c1 * tan_d, t.q.clone())))
                    .collect(),
                &[("C1", c1), ("C2", c2), ("tan_delta", tan_d)],
                vec![v1.ev()],
            )?;
            finals.push(self.b.step(
                StepKind::LinearSystem,
                "sumLj1",
                rng,
                vec![term(1.0, self.var_q(idx, l))],
                vec![term(each, dq.clone())],
                &[("L0", l0), ("bound", lin.each_bound)],
                vec![b0.ev()],
            )?);
        }
        let k1 = c1 * slots as f64 * each + c2;
        let child1 = self.b.step(
            StepKind::HorizontalGeometric,
            "base0-x1",
            rng,
            vec![term(1.0, self.var_q(idx, &x1l))],
            vec![term(k1, dq)],
            &[("K1", k1)],
            vec![cor.ev()],
        )?;
        let mut child2 = est;
        child2.children = finals;
        let mut children = vec![child1, child2];
        children.extend(evidence.into_iter().map(CertStep::ev));
        let mut s = self.b.step(
            StepKind::VerticalSum,
            "base0",
            rng,
            vec![term(1.0, self.len_q(idx))],
            vec![term(1.0, self.var_q(idx, &x1l)), term(1.0, self.var_q(idx, &x1p))],
            &[("C1", c1), ("C2", c2), ("C_xi", cx)],
            children,
        )?;
        s.sub_indices = Some(SubIndices {
            tuple: Some(tuple.to_vec()),
            ..Default::default()
        });
        Ok(s)
    }

    /// Bound on ℓ_{x¹} of the reduced chain from its horizontal and vertical
    /// groups; the neighbour conditions of its horizontal segments are checked.
    fn horiz3(
        &mut self,
        lam: &[usize],
        x1: &[f64],
        x1l: &Subspace,
        x1p: &Subspace,
        e1: f64,
        c3: f64,
    ) -> Result<CertStep> {
        let pts = self.pts();
        let segs = lam.len() - 1;
        let mut hor = Vec::with_capacity(segs);
        for m in 0..segs {
            hor.push(horizontal(pts, lam[m], lam[m + 1], x1l, e1)?);
        }
        let dx = |a: usize, b: usize| dot(x1, &pts[b]) - dot(x1, &pts[a]);
        for m in 1..segs {
            if !hor[m] {
                continue;
            }
            let ok = if hor[m - 1] {
                dx(lam[m - 1], lam[m]) * dx(lam[m], lam[m + 1]) < 0.0
            } else {
                !horizontal(pts, lam[m - 1], lam[m + 1], x1l, e1)?
            };
            if !ok {
                return Err(hypothesis("horizontal chain", m + 1, "neighbour condition fails"));
            }
        }
        let cot1 = 1.0 / e1.tan();
        let mut children = Vec::new();
        let mut m = 0;
        while m < segs {
            let mut e = m;
            while e + 1 < segs && hor[e + 1] == hor[m] {
                e += 1;
            }
            let grp = &lam[m..=e + 1];
            children.push(CertStep::ev(if hor[m] {
                self.b.step(
                    StepKind::HorizontalGeometric,
                    "horiz1-chain",
                    range(grp),
                    vec![term(1.0, self.len_q(grp))],
                    vec![term(4.0, self.dist_q(grp[0], grp[1]))],
                    &[],
                    vec![],
                )?
            } else {
                self.b.step(
                    StepKind::VerticalSum,
                    "horiz3-vertical",
                    range(grp),
                    vec![term(1.0, self.var_q(grp, x1l))],
                    vec![term(cot1, self.var_q(grp, x1p))],
                    &[("cot_eps1", cot1)],
                    vec![],
                )?
            }));
            m = e + 1;
        }
        self.b.step(
            StepKind::HorizontalGeometric,
            "horiz3",
            range(lam),
            vec![term(1.0, self.var_q(lam, x1l))],
            vec![term(c3, self.var_q(lam, x1p)), term(4.0, self.dist_q(lam[0], lam[1]))],
            &[("C3", c3)],
            children,
        )
    }
}

fn pos(idx: &[usize], i: usize) -> usize {
    idx.binary_search(&i).expect("index belongs to the window")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{greedy_random, harmonic_staircase, square_path};

    #[test]
    fn lift_of_square_has_five_points() {
        let g = Gauge::max_norm(2);
        let l = lift_to_cylinder(&g, &square_path()).unwrap();
        assert_eq!(l.poly.len(), 5);
        assert_eq!(l.poly.last(), &[0.0, 0.0, 0.0]);
        let h = l.height;
        for p in &l.poly.points()[..4] {
            assert_eq!(p[2], h);
            assert!((l.gauge.norm(p) - h).abs() < 1e-12);
        }
        assert!((l.poly.point(0)[0].powi(2) + l.poly.point(0)[1].powi(2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_split_examples() {
        let line = Polyline::new((0..5).map(|i| vec![i as f64, 0.0]).collect()).unwrap();
        let w: Vec<usize> = (0..5).collect();
        let s = horizontal_block_split(&line, &w, &Subspace::axis(2, 0), 0.3).unwrap();
        assert_eq!(s.blocks, vec![(0, 4)]);
        assert_eq!(s.lambda, vec![0, 4]);
        assert_eq!(s.lambda_tilde, vec![0, 4]);
        let v = Polyline::new((0..5).map(|i| vec![0.0, -(i as f64)]).collect()).unwrap();
        let s = horizontal_block_split(&v, &w, &Subspace::axis(2, 0), 0.3).unwrap();
        assert!(s.blocks.is_empty());
        assert_eq!(s.lambda, w);
    }

    #[test]
    fn cone_split_of_square() {
        let p = build_partition(&Gauge::max_norm(2), 0.1).unwrap();
        let s = cone_split(&p, &square_path(), &[0, 1, 2, 3]).unwrap();
        assert_eq!(
            s.runs,
            vec![(PatchId::single(2), vec![0, 1, 3]), (PatchId::single(3), vec![2, 3])]
        );
        assert_eq!(s.crossings, vec![(1, 2)]);
        assert!(s.revisits.is_empty());
    }

    #[test]
    fn zigzag_revisits_point_two_back() {
        let p = build_partition(&Gauge::max_norm(2), 0.1).unwrap();
        let pts = vec![
            vec![-3.0, 0.5],
            vec![0.5, 3.0],
            vec![-2.0, 0.4],
            vec![0.4, 2.0],
            vec![-1.0, 0.2],
            vec![0.0, 0.0],
        ];
        let poly = Polyline::new(pts).unwrap();
        let s = cone_split(&p, &poly, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(s.crossings, vec![(0, 1)]);
        assert_eq!(s.revisits, vec![(1, 2, 0), (2, 3, 1), (3, 4, 2)]);
    }

    fn setup(g: &Gauge) -> GeneralSetup {
        GeneralSetup::new(g, 4000, 7).unwrap()
    }

    #[test]
    fn max_norm_plane_has_no_fallbacks() {
        let g = Gauge::max_norm(2);
        let su = setup(&g);
        for seed in 0..20 {
            let poly = greedy_random(&g, 2, 12 + (seed as usize % 20), seed, 1.0).unwrap().poly;
            let c = su.certify(&poly, None).unwrap();
            assert_eq!(c.stats.fallback_nodes, 0, "seed {seed}: {:?}", first_fallback(&c.root));
            assert!(c.root_claim.effective_c.is_finite());
            assert!(c.root_claim.length <= c.root_claim.effective_c * c.root_claim.chord);
        }
    }

    fn first_fallback(s: &CertStep) -> Option<String> {
        if s.is_fallback() {
            return s.note.clone();
        }
        s.children.iter().find_map(first_fallback)
    }

    #[test]
    fn square_and_staircase_certify() {
        let g = Gauge::max_norm(2);
        let su = setup(&g);
        let c = su.certify(&square_path(), None).unwrap();
        assert_eq!(c.stats.fallback_nodes, 0, "{:?}", first_fallback(&c.root));
        let h = Polyline::new(harmonic_staircase(2).points().to_vec()).unwrap();
        let c = su.certify(&h, None).unwrap();
        assert_eq!(c.stats.fallback_nodes, 0);
    }

    #[test]
    fn euclidean_plane_certifies() {
        let g = Gauge::euclidean(2);
        let su = setup(&g);
        let poly = greedy_random(&g, 2, 15, 3, 1.0).unwrap().poly;
        let c = su.certify(&poly, None).unwrap();
        assert!(c.root_claim.length <= c.root_claim.effective_c * c.root_claim.chord);
    }

    #[test]
    fn depth_budget_marks_partial() {
        let g = Gauge::max_norm(2);
        let su = setup(&g);
        let poly = greedy_random(&g, 2, 20, 1, 1.0).unwrap().poly;
        let c = su.certify(&poly, Some(1)).unwrap();
        assert!(c.stats.partial);
    }

    #[test]
    fn rejects_mismatched_constants() {
        let su = setup(&Gauge::max_norm(2));
        let poly = greedy_random(&Gauge::euclidean(2), 2, 5, 1, 1.0).unwrap().poly;
        assert!(certify_general(&poly, &Gauge::euclidean(2), &su.partition, &su.constants, None).is_err());
    }
}
