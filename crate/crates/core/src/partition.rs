//! Finite covers of the unit sphere by patches with representative normals,
//! admissible patch tuples with their coordinate frames, and the numerical
//! constants the certificate engine depends on.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{hypothesis, input, Error, Result};
use crate::linalg::{self, dot, norm2, normalize, random_unit, Subspace};
use crate::norms::{Gauge, GaugeKind};
use crate::polyline::{classify_segment, Polyline, SegmentClass, ANGLE_TIE_TOL};

/// Largest patch count for which [`Partition::patches`] enumerates patches.
pub const MAX_ENUMERATED: f64 = 1e6;

/// Relative slack used when deciding which facet attains the maximum.
const FACET_TIE: f64 = 1e-12;

/// Identifier of a patch. `[0]` is reserved for the apex of every cone.
///
/// Facet, halfline and sector patches carry a single 1-based index. Cube-grid
/// patches carry the face (1 + 2·axis + [sign < 0]) followed by the cell
/// coordinates on that face, since the cell count overflows any integer type
/// for very small angles.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatchId(pub Vec<u64>);

impl PatchId {
    pub fn apex() -> Self {
        PatchId(vec![0])
    }

    pub fn single(i: u64) -> Self {
        PatchId(vec![i])
    }

    pub fn is_apex(&self) -> bool {
        self.0 == [0]
    }
}

impl fmt::Display for PatchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        write!(f, "{}", parts.join("."))
    }
}

/// How a patch's points are recognized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Membership {
    /// Points where this halfspace (0-based) is the first active one.
    Facet(usize),
    /// One of the two halflines of R^1.
    Halfline(i8),
    /// Points whose first normal has polar angle in [start, end).
    Sector { start: f64, end: f64 },
    /// Points whose first normal, scaled onto the cube face, lies in a cell.
    GridCell { axis: usize, negative: bool, cells: Vec<u64>, per_axis: u64 },
    Top,
    Bottom,
    /// Side of a cylinder over the given base patch.
    Side(Box<Membership>),
    /// Points whose first computed normal is exactly this vector.
    Normal(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPatch {
    pub index: PatchId,
    pub normal: Vec<f64>,
    pub membership: Membership,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    /// One patch per halfspace of the polytope ball.
    Facets { halfspaces: Vec<Vec<f64>> },
    Halflines,
    /// Equal polar sectors of the normal circle.
    Sectors { count: u64 },
    /// Cells of the faces of [−1, 1]^n in normal space, `per_axis` per side.
    CubeGrid { per_axis: u64 },
    /// Side patches over the base partition plus a top and a bottom patch.
    Cylinder { base: Box<Partition> },
    /// One patch per computed outer normal, used once δ is below
    /// [`EXACT_NORMAL_DELTA`]; ids carry the bit patterns of the normal.
    Normals,
}

/// Below this angle grid cells would be finer than the precision of computed
/// normals, so smooth gauges switch to [`Scheme::Normals`].
pub const EXACT_NORMAL_DELTA: f64 = 1e-9;

const NORMAL_TAG: u64 = u64::MAX;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Partition {
    pub gauge: Gauge,
    pub delta: f64,
    pub scheme: Scheme,
    /// Patch count N(δ); kept as a float because grid counts can exceed u128
    /// (infinite for [`Scheme::Normals`]).
    #[serde(with = "count_serde")]
    pub count: f64,
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        self.gauge.hash() == other.gauge.hash()
            && self.delta == other.delta
            && self.scheme == other.scheme
            && self.count == other.count
    }
}

/// Builds the cover of the unit sphere of `gauge` for the angle `delta`.
pub fn build_partition(gauge: &Gauge, delta: f64) -> Result<Partition> {
    if !(delta > 0.0 && delta < FRAC_PI_2) {
        return input(format!("delta = {delta} is not in (0, π/2)"));
    }
    let n = gauge.dim();
    let (scheme, count) = if let GaugeKind::Cylinder(base) = gauge.kind() {
        let bp = build_partition(base, delta)?;
        let c = bp.count + 2.0;
        (Scheme::Cylinder { base: Box::new(bp) }, c)
    } else if let Some(hs) = gauge.facets() {
        let c = hs.len() as f64;
        (Scheme::Facets { halfspaces: hs }, c)
    } else if n == 1 {
        (Scheme::Halflines, 2.0)
    } else if delta < EXACT_NORMAL_DELTA {
        (Scheme::Normals, f64::INFINITY)
    } else if n == 2 {
        let count = (TAU / delta).ceil() as u64;
        (Scheme::Sectors { count }, count as f64)
    } else {
        let m = ((n as f64 - 1.0).sqrt() / (2.0 * (delta / 4.0).tan())).ceil().max(1.0);
        if m >= u64::MAX as f64 {
            return Err(Error::Unsupported(format!("delta = {delta} is too small for a grid cover")));
        }
        let c = 2.0 * n as f64 * m.powi(n as i32 - 1);
        (Scheme::CubeGrid { per_axis: m as u64 }, c)
    };
    Ok(Partition {
        gauge: gauge.clone(),
        delta,
        scheme,
        count,
    })
}

impl Partition {
    pub fn dim(&self) -> usize {
        self.gauge.dim()
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    /// N(δ) when it fits in a u128.
    pub fn count_exact(&self) -> Option<u128> {
        match &self.scheme {
            Scheme::Facets { halfspaces } => Some(halfspaces.len() as u128),
            Scheme::Halflines => Some(2),
            Scheme::Sectors { count } => Some(*count as u128),
            Scheme::CubeGrid { per_axis } => {
                let n = self.dim() as u32;
                (*per_axis as u128).checked_pow(n - 1)?.checked_mul(2 * n as u128)
            }
            Scheme::Cylinder { base } => base.count_exact()?.checked_add(2),
            Scheme::Normals => None,
        }
    }

    fn single_ids(&self) -> bool {
        match &self.scheme {
            Scheme::CubeGrid { .. } | Scheme::Normals => false,
            Scheme::Cylinder { base } => base.single_ids(),
            _ => true,
        }
    }

    fn cap_ids(&self) -> (PatchId, PatchId) {
        let Scheme::Cylinder { base } = &self.scheme else {
            unreachable!("cap ids requested for a non-cylinder partition")
        };
        if base.single_ids() {
            let nb = base.count as u64;
            (PatchId::single(nb + 1), PatchId::single(nb + 2))
        } else {
            let d = self.dim() as u64;
            (PatchId(vec![0, d, 1]), PatchId(vec![0, d, 2]))
        }
    }

    /// The patch whose set contains the boundary point in direction `d`.
    pub fn classify_direction(&self, d: &[f64]) -> Result<PatchId> {
        if d.len() != self.dim() {
            return input("direction and partition dimensions differ");
        }
        if d.iter().all(|&v| v == 0.0) {
            return input("zero direction");
        }
        match &self.scheme {
            Scheme::Facets { halfspaces } => Ok(PatchId::single(first_active(halfspaces, d) as u64 + 1)),
            Scheme::Halflines => Ok(PatchId::single(if d[0] > 0.0 { 1 } else { 2 })),
            Scheme::Sectors { count } => {
                let nu = self.first_normal(d)?;
                let mut t = nu[1].atan2(nu[0]);
                if t < 0.0 {
                    t += TAU;
                }
                let k = ((t / (TAU / *count as f64)).floor() as u64).min(count - 1);
                Ok(PatchId::single(k + 1))
            }
            Scheme::CubeGrid { per_axis } => {
                let nu = self.first_normal(d)?;
                Ok(grid_cell(&nu, *per_axis))
            }
            Scheme::Normals => {
                let nu = self.first_normal(d)?;
                Ok(PatchId(std::iter::once(NORMAL_TAG).chain(nu.iter().map(|v| v.to_bits())).collect()))
            }
            Scheme::Cylinder { base } => {
                let n = self.dim();
                let x = linalg::scale(d, 1.0 / self.gauge.norm(d));
                let h = x[n - 1];
                let b = base.gauge.norm(&x[..n - 1]);
                let (top, bottom) = self.cap_ids();
                if h > b {
                    Ok(top)
                } else if -h > b {
                    Ok(bottom)
                } else {
                    base.classify_direction(&x[..n - 1])
                }
            }
        }
    }

    fn first_normal(&self, d: &[f64]) -> Result<Vec<f64>> {
        let bp = self.gauge.boundary_point(d)?;
        Ok(bp.normals.into_iter().next().expect("boundary point without normals"))
    }

    /// Whether `v` lies in the closed cone over the patch, with a small slack
    /// on shared boundaries of polytope and cylinder patches.
    pub fn in_cone(&self, id: &PatchId, v: &[f64]) -> Result<bool> {
        if v.iter().all(|&x| x == 0.0) {
            return Ok(true);
        }
        match &self.scheme {
            Scheme::Facets { halfspaces } => {
                let i = self.facet_index(id)?;
                let vals: Vec<f64> = halfspaces.iter().map(|a| dot(a, v)).collect();
                let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let amax = halfspaces.iter().map(|a| norm2(a)).fold(0.0, f64::max);
                Ok(vals[i] >= m - 1e-9 * amax * norm2(v))
            }
            Scheme::Cylinder { base } => {
                let n = self.dim();
                let h = v[n - 1];
                let b = base.gauge.norm(&v[..n - 1]);
                let tol = 1e-9 * norm2(v) * self.gauge.circumradius().max(1.0);
                let (top, bottom) = self.cap_ids();
                if *id == top {
                    Ok(h >= b - tol)
                } else if *id == bottom {
                    Ok(-h >= b - tol)
                } else if b < h.abs() - tol {
                    Ok(false)
                } else if v[..n - 1].iter().all(|&x| x == 0.0) {
                    Ok(false)
                } else {
                    base.in_cone(id, &v[..n - 1])
                }
            }
            _ => Ok(self.classify_direction(v)? == *id),
        }
    }

    fn facet_index(&self, id: &PatchId) -> Result<usize> {
        let Scheme::Facets { halfspaces } = &self.scheme else {
            return input("not a facet partition");
        };
        match id.0.as_slice() {
            [i] if *i >= 1 && (*i as usize) <= halfspaces.len() => Ok(*i as usize - 1),
            _ => input(format!("patch {id} does not exist")),
        }
    }

    /// Representative unit normal ν^i of a patch.
    pub fn normal(&self, id: &PatchId) -> Result<Vec<f64>> {
        let n = self.dim();
        let missing = || input(format!("patch {id} does not exist"));
        match &self.scheme {
            Scheme::Facets { halfspaces } => {
                let i = self.facet_index(id)?;
                normalize(&halfspaces[i]).map_or_else(missing, Ok)
            }
            Scheme::Halflines => match id.0.as_slice() {
                [1] => Ok(vec![1.0]),
                [2] => Ok(vec![-1.0]),
                _ => missing(),
            },
            Scheme::Sectors { count } => match id.0.as_slice() {
                [k] if *k >= 1 && k <= count => {
                    let t = (*k as f64 - 0.5) * TAU / *count as f64;
                    Ok(vec![t.cos(), t.sin()])
                }
                _ => missing(),
            },
            Scheme::CubeGrid { per_axis } => {
                let Some((axis, negative, cells)) = decode_cell(id, n, *per_axis) else {
                    return missing();
                };
                Ok(cell_normal(n, axis, negative, &cells, *per_axis))
            }
            Scheme::Normals => match id.0.split_first() {
                Some((&NORMAL_TAG, bits)) if bits.len() == n => {
                    let v: Vec<f64> = bits.iter().map(|&b| f64::from_bits(b)).collect();
                    if v.iter().all(|x| x.is_finite()) && (norm2(&v) - 1.0).abs() < 1e-9 {
                        Ok(v)
                    } else {
                        missing()
                    }
                }
                _ => missing(),
            },
            Scheme::Cylinder { base } => {
                let (top, bottom) = self.cap_ids();
                if *id == top {
                    Ok(linalg::unit(n, n - 1))
                } else if *id == bottom {
                    Ok(linalg::scale(&linalg::unit(n, n - 1), -1.0))
                } else {
                    let mut v = base.normal(id)?;
                    v.push(0.0);
                    Ok(v)
                }
            }
        }
    }

    pub fn membership(&self, id: &PatchId) -> Result<Membership> {
        let n = self.dim();
        self.normal(id)?;
        Ok(match &self.scheme {
            Scheme::Facets { .. } => Membership::Facet(self.facet_index(id)?),
            Scheme::Halflines => Membership::Halfline(if id.0[0] == 1 { 1 } else { -1 }),
            Scheme::Sectors { count } => {
                let w = TAU / *count as f64;
                let k = id.0[0] as f64 - 1.0;
                Membership::Sector { start: k * w, end: (k + 1.0) * w }
            }
            Scheme::CubeGrid { per_axis } => {
                let (axis, negative, cells) = decode_cell(id, n, *per_axis).expect("checked by normal");
                Membership::GridCell { axis, negative, cells, per_axis: *per_axis }
            }
            Scheme::Normals => Membership::Normal(self.normal(id)?),
            Scheme::Cylinder { base } => {
                let (top, bottom) = self.cap_ids();
                if *id == top {
                    Membership::Top
                } else if *id == bottom {
                    Membership::Bottom
                } else {
                    Membership::Side(Box::new(base.membership(id)?))
                }
            }
        })
    }

    /// All patch ids in increasing order; refused above [`MAX_ENUMERATED`].
    pub fn ids(&self) -> Result<Vec<PatchId>> {
        if self.count > MAX_ENUMERATED {
            return Err(Error::Unsupported(format!(
                "{:.3e} patches are too many to enumerate",
                self.count
            )));
        }
        let n = self.dim();
        let mut out = match &self.scheme {
            Scheme::Facets { halfspaces } => (1..=halfspaces.len() as u64).map(PatchId::single).collect(),
            Scheme::Halflines => vec![PatchId::single(1), PatchId::single(2)],
            Scheme::Sectors { count } => (1..=*count).map(PatchId::single).collect(),
            Scheme::CubeGrid { per_axis } => {
                let m = *per_axis;
                let mut out = Vec::new();
                for face in 1..=2 * n as u64 {
                    let mut cells = vec![0u64; n - 1];
                    loop {
                        let mut id = vec![face];
                        id.extend_from_slice(&cells);
                        out.push(PatchId(id));
                        let mut j = 0;
                        while j < n - 1 {
                            cells[j] += 1;
                            if cells[j] < m {
                                break;
                            }
                            cells[j] = 0;
                            j += 1;
                        }
                        if j == n - 1 {
                            break;
                        }
                    }
                }
                out
            }
            Scheme::Cylinder { base } => {
                let mut out = base.ids()?;
                let (top, bottom) = self.cap_ids();
                out.push(top);
                out.push(bottom);
                out
            }
            Scheme::Normals => unreachable!("infinite count is refused above"),
        };
        out.sort();
        Ok(out)
    }

    pub fn patches(&self) -> Result<Vec<BoundaryPatch>> {
        self.ids()?
            .into_iter()
            .map(|id| {
                Ok(BoundaryPatch {
                    normal: self.normal(&id)?,
                    membership: self.membership(&id)?,
                    delta: self.delta,
                    index: id,
                })
            })
            .collect()
    }
}

/// Serializes the patch count, writing infinity as the string "inf".
mod count_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Num(*v).serialize(s)
        } else {
            Repr::Text("inf".into()).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad patch count {t}"))),
        }
    }
}

fn first_active(halfspaces: &[Vec<f64>], d: &[f64]) -> usize {
    let vals: Vec<f64> = halfspaces.iter().map(|a| dot(a, d)).collect();
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = FACET_TIE * m.abs().max(f64::MIN_POSITIVE);
    vals.iter().position(|&v| v >= m - tol).unwrap_or(0)
}

fn grid_cell(nu: &[f64], m: u64) -> PatchId {
    let n = nu.len();
    let mut axis = 0;
    for i in 1..n {
        if nu[i].abs() > nu[axis].abs() {
            axis = i;
        }
    }
    let top = nu[axis].abs();
    let mut id = vec![1 + 2 * axis as u64 + u64::from(nu[axis] < 0.0)];
    for (j, v) in nu.iter().enumerate() {
        if j == axis {
            continue;
        }
        let u = (v / top).clamp(-1.0, 1.0);
        let c = ((u + 1.0) / 2.0 * m as f64).floor();
        id.push((c.max(0.0) as u64).min(m - 1));
    }
    PatchId(id)
}

fn decode_cell(id: &PatchId, n: usize, m: u64) -> Option<(usize, bool, Vec<u64>)> {
    let v = &id.0;
    if v.len() != n || v[0] < 1 || v[0] > 2 * n as u64 || v[1..].iter().any(|&c| c >= m) {
        return None;
    }
    let f = v[0] - 1;
    Some(((f / 2) as usize, f % 2 == 1, v[1..].to_vec()))
}

fn cell_normal(n: usize, axis: usize, negative: bool, cells: &[u64], m: u64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[axis] = if negative { -1.0 } else { 1.0 };
    let mut it = cells.iter();
    for (j, vj) in v.iter_mut().enumerate() {
        if j != axis {
            let c = *it.next().expect("cell count matches dimension");
            *vj = (2.0 * c as f64 + 1.0) / m as f64 - 1.0;
        }
    }
    normalize(&v).expect("cube face point is nonzero")
}

/// Patch of the direction `x − apex`; the apex itself gets `[0]`.
pub fn classify(partition: &Partition, apex: &[f64], x: &[f64]) -> Result<PatchId> {
    let n = partition.dim();
    if apex.len() != n || x.len() != n {
        return input("point and partition dimensions differ");
    }
    if apex == x {
        return Ok(PatchId::apex());
    }
    partition.classify_direction(&linalg::sub(x, apex))
}

/// Patches meeting V_ε(Π) = {z : ∠(z, Π) ≤ ε}, found by sampling directions
/// of V_ε(Π) together with the basis directions of Π and their pairwise sums.
pub fn admissible_indices(partition: &Partition, sub: &Subspace, eps: f64) -> Result<BTreeSet<PatchId>> {
    let n = partition.dim();
    if sub.ambient != n {
        return input("subspace and partition dimensions differ");
    }
    if !(eps >= 0.0) {
        return input("eps must be nonnegative");
    }
    if sub.dim() == n {
        return Ok(partition.ids()?.into_iter().collect());
    }
    let mut out = BTreeSet::new();
    if sub.dim() == 0 {
        return Ok(out);
    }
    let comp = sub.complement();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for (i, b) in sub.basis.iter().enumerate() {
        for s in [1.0, -1.0] {
            let u = linalg::scale(b, s);
            dirs.push(u.clone());
            for w in &comp.basis {
                for t in [eps.min(FRAC_PI_2), -eps.min(FRAC_PI_2)] {
                    dirs.push(tilt(&u, w, t));
                }
            }
            for c in &sub.basis[i + 1..] {
                for s2 in [1.0, -1.0] {
                    dirs.push(linalg::add(&u, &linalg::scale(c, s2)));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_ad11);
    for _ in 0..2000 {
        let u = random_in(&mut rng, sub);
        let w = random_in(&mut rng, &comp);
        let t = rng.gen::<f64>() * eps.min(FRAC_PI_2);
        dirs.push(tilt(&u, &w, t));
    }
    for d in dirs {
        if d.iter().any(|v| *v != 0.0) {
            out.insert(partition.classify_direction(&d)?);
        }
    }
    Ok(out)
}

fn tilt(u: &[f64], w: &[f64], t: f64) -> Vec<f64> {
    u.iter().zip(w).map(|(a, b)| t.cos() * a + t.sin() * b).collect()
}

/// Random unit vector of a subspace of positive dimension.
fn random_in<R: Rng + ?Sized>(rng: &mut R, sub: &Subspace) -> Vec<f64> {
    let c = random_unit(rng, sub.dim());
    let mut v = vec![0.0; sub.ambient];
    for (ci, b) in c.iter().zip(&sub.basis) {
        for (vi, bi) in v.iter_mut().zip(b) {
            *vi += ci * bi;
        }
    }
    v
}

/// First 0-based tuple position whose axis violates ∠(ν_t, (span of later axes)^⊥) < ξ.
fn first_inadmissible(axes: &[Vec<f64>], xi: f64) -> Option<(usize, f64)> {
    let n = axes.first()?.len();
    for t in 0..axes.len().saturating_sub(1) {
        let later = Subspace::span(n, &axes[t + 1..]).ok()?;
        let ang = later.complement().angle_to(&axes[t]);
        if !(ang < xi) {
            return Some((t, ang));
        }
    }
    None
}

fn tuple_normals(partition: &Partition, tuple: &[PatchId]) -> Result<Vec<Vec<f64>>> {
    if tuple.is_empty() {
        return input("tuple must be nonempty");
    }
    if tuple.len() > partition.dim() {
        return input(format!(
            "tuple of length {} exceeds the {} available levels",
            tuple.len(),
            partition.dim()
        ));
    }
    tuple.iter().map(|id| partition.normal(id)).collect()
}

/// Whether ∠(ν^{α_{j−1}}, Π^{j−1}) < ξ at every level of the tuple
/// (α_i, ..., α_n), listed in that order.
pub fn is_admissible(partition: &Partition, tuple: &[PatchId], xi: f64) -> Result<bool> {
    let axes = tuple_normals(partition, tuple)?;
    Ok(first_inadmissible(&axes, xi).is_none())
}

/// Axes ν^{α_j} of an admissible tuple with the complements of their tails.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub patch_indices: Vec<PatchId>,
    pub axes: Vec<Vec<f64>>,
    /// `pi_subspaces[t]` = (span axes[t+1..])^⊥.
    pub pi_subspaces: Vec<Subspace>,
    /// (span axes)^⊥.
    pub residual: Subspace,
    /// Unit vector spanning the complement of the last n − 1 axes, once at
    /// least n − 1 axes are present.
    pub x1: Option<Vec<f64>>,
    pub xi: f64,
}

pub fn frame_from_tuple(partition: &Partition, tuple: &[PatchId], xi: f64) -> Result<Frame> {
    let axes = tuple_normals(partition, tuple)?;
    let mut f = Frame::from_axes(partition.dim(), axes, xi)?;
    f.patch_indices = tuple.to_vec();
    Ok(f)
}

impl Frame {
    pub fn from_axes(n: usize, axes: Vec<Vec<f64>>, xi: f64) -> Result<Frame> {
        if axes.is_empty() || axes.len() > n {
            return input("a frame needs between 1 and n axes");
        }
        let mut unit_axes = Vec::with_capacity(axes.len());
        for a in &axes {
            if a.len() != n {
                return input("axis dimension differs from n");
            }
            unit_axes.push(normalize(a).map_or_else(|| input("zero axis"), Ok)?);
        }
        if let Some((t, ang)) = first_inadmissible(&unit_axes, xi) {
            return Err(hypothesis(
                "admissible tuple",
                t + 1,
                format!("angle {ang:.6} to the complement of the later axes is not below {xi:.6}"),
            ));
        }
        let k = unit_axes.len();
        let mut pis = Vec::with_capacity(k);
        for t in 0..k {
            pis.push(Subspace::span(n, &unit_axes[t + 1..])?.complement());
        }
        let residual = Subspace::span(n, &unit_axes)?.complement();
        let x1 = if k + 1 >= n {
            let tail = &unit_axes[k + 1 - n..];
            Subspace::span(n, tail)?.complement().basis.into_iter().next()
        } else {
            None
        };
        Ok(Frame {
            patch_indices: Vec::new(),
            axes: unit_axes,
            pi_subspaces: pis,
            residual,
            x1,
            xi,
        })
    }

    /// Random k-axis frame whose axes make angles in [0, ζ) with the
    /// complements of the later axes.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, zeta: f64) -> Result<Frame> {
        if k == 0 || k > n {
            return input("a frame needs between 1 and n axes");
        }
        let mut axes: Vec<Vec<f64>> = vec![random_unit(rng, n)];
        while axes.len() < k {
            let later = Subspace::span(n, &axes)?;
            let comp = later.complement();
            let u = random_in(rng, &comp);
            let w = random_in(rng, &later);
            let t = rng.gen::<f64>() * zeta;
            axes.insert(0, tilt(&u, &w, t));
        }
        Frame::from_axes(n, axes, zeta)
    }

    /// Largest |⟨a_s, b⟩| between an axis a_s and a basis vector b of
    /// `pi_subspaces[t]` for s > t.
    pub fn block_orthogonality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (t, pi) in self.pi_subspaces.iter().enumerate() {
            for a in &self.axes[t + 1..] {
                for b in &pi.basis {
                    worst = worst.max(dot(a, b).abs());
                }
            }
        }
        worst
    }
}

/// C_k(ζ): C₁ = 1 and C_{m+1} = (1 + tan ζ + sec ζ)·max(C_m, 1).
pub fn c_k(k: usize, zeta: f64) -> f64 {
    let f = 1.0 + zeta.tan() + 1.0 / zeta.cos();
    let mut c = 1.0f64;
    for _ in 1..k {
        c = f * c.max(1.0);
    }
    c
}

/// (|p_Π(A)|, C_k(ζ)·Σ|⟨x^i, A⟩|) for Π the span of the frame's k axes.
pub fn projection_domination(frame: &Frame, a: &[f64]) -> Result<(f64, f64)> {
    let n = frame.residual.ambient;
    if a.len() != n {
        return input("vector and frame dimensions differ");
    }
    if let Some((t, ang)) = first_inadmissible(&frame.axes, frame.xi + ANGLE_TIE_TOL) {
        return Err(hypothesis(
            "projection domination",
            t + 1,
            format!("axis angle {ang:.6} exceeds ζ = {:.6}", frame.xi),
        ));
    }
    let span = Subspace::span(n, &frame.axes)?;
    let lhs = span.proj_norm(a);
    let rhs = c_k(frame.axes.len(), frame.xi) * frame.axes.iter().map(|x| dot(x, a).abs()).sum::<f64>();
    if lhs > rhs + 1e-9 {
        return Err(Error::Numeric(format!("projection domination fails: {lhs} > {rhs}")));
    }
    Ok((lhs, rhs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentCheck {
    pub holds: bool,
    /// 1-based index j of the first segment [A_j, A_{j+1}] that is δ-vertical
    /// but does not descend along ν.
    pub failing_index: Option<usize>,
}

/// Checks that every δ-vertical segment (with respect to ν^⊥) of a polyline
/// lying in the cone P_i + A_r satisfies (A_j − A_{j+1})·ν^i > 0.
pub fn check_cone_descent(
    partition: &Partition,
    poly: &Polyline,
    apex_patch: &PatchId,
    delta: f64,
) -> Result<DescentCheck> {
    const LEMMA: &str = "cone descent";
    if poly.dim() != partition.dim() {
        return input("polyline and partition dimensions differ");
    }
    let apex = poly.last();
    for (j, p) in poly.points().iter().enumerate() {
        if !partition.in_cone(apex_patch, &linalg::sub(p, apex))? {
            return Err(hypothesis(LEMMA, j + 1, format!("point is outside the cone of patch {apex_patch}")));
        }
    }
    let nu = partition.normal(apex_patch)?;
    let perp = Subspace::line(&nu)?.complement();
    let pts = poly.points();
    for j in 0..pts.len().saturating_sub(1) {
        if pts[j] == pts[j + 1] {
            continue;
        }
        let vertical = perp.dim() == 0
            || classify_segment(&pts[j], &pts[j + 1], &perp, delta)? == SegmentClass::Vertical;
        if vertical && dot(&linalg::sub(&pts[j], &pts[j + 1]), &nu) <= 0.0 {
            return Ok(DescentCheck { holds: false, failing_index: Some(j + 1) });
        }
    }
    Ok(DescentCheck { holds: true, failing_index: None })
}

// ---------------------------------------------------------------------------
// constants

/// Grid step of the ε-searches.
pub const EPS_GRID: f64 = PI / 64.0;
/// Margin below π/2 required of ξ(ε).
pub const XI_MARGIN: f64 = PI / 32.0;
/// Angle resolution of the mediatrix search.
pub const THETA_STEP: f64 = 1e-3;

/// Sampled curve k ↦ ξ(kπ/64), k = 1..31, padded by one grid step: entry k
/// is the largest normal angle seen for tilts φ ≤ (k+1)π/64.
pub fn xi_curve(gauge: &Gauge, samples: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let n = gauge.dim();
    if n < 2 {
        return input("ξ(ε) needs proper subspaces, so n ≥ 2");
    }
    if samples == 0 {
        return input("samples must be positive");
    }
    let kmax = 31usize;
    // best[k] = largest angle among samples with φ in ((k−1)π/64, kπ/64]
    let mut best = vec![0.0f64; kmax + 2];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let d = rng.gen_range(1..n);
        let pi = Subspace::random(&mut rng, n, d);
        let comp = pi.complement();
        let u = random_in(&mut rng, &pi);
        let w = random_in(&mut rng, &comp);
        let phi = rng.gen::<f64>() * FRAC_PI_2;
        let z = tilt(&u, &w, phi);
        let bp = gauge.boundary_point(&z)?;
        let ang = bp.normals.iter().map(|nu| pi.angle_to(nu)).fold(0.0, f64::max);
        let slot = ((phi / EPS_GRID).ceil() as usize).clamp(1, kmax + 1);
        best[slot] = best[slot].max(ang);
    }
    let mut out = Vec::with_capacity(kmax);
    let mut run = 0.0f64;
    for k in 1..=kmax {
        run = run.max(best[k]);
        let padded = run.max(best[k + 1]);
        out.push((k as f64 * EPS_GRID, padded));
    }
    Ok(out)
}

/// (ε₀, ξ̄): the largest grid angle ε with ξ(ε) ≤ π/2 − π/32, and ξ(ε₀).
pub fn estimate_eps0_xibar(gauge: &Gauge, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if gauge.dim() == 1 {
        return Ok((31.0 * EPS_GRID, 0.0));
    }
    let curve = xi_curve(gauge, samples, seed)?;
    curve
        .iter()
        .rev()
        .find(|(_, xi)| *xi <= FRAC_PI_2 - XI_MARGIN)
        .copied()
        .ok_or_else(|| Error::Numeric("no grid angle ε satisfies ξ(ε) ≤ π/2 − π/32".into()))
}

/// (ε₁, ε̄). ε̄ is half the first ray angle θ at which the mediatrix point C
/// of a normalized pair (|AB| = 1, B = 0) may lie beyond (3/4)|AB|, backed
/// off by one grid step; ε₁ = ε̄ ∧ (π/2 − ξ̄)/4.
pub fn estimate_eps1(gauge: &Gauge, xi_bar: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if !gauge.is_symmetric() {
        return Err(Error::Unsupported("ε₁ estimation needs a symmetric gauge".into()));
    }
    let n = gauge.dim();
    let alpha = (FRAC_PI_2 - xi_bar) / 2.0;
    if n == 1 {
        let eps_bar = FRAC_PI_4;
        return Ok((eps_bar.min(alpha / 2.0), eps_bar));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        dirs.push(linalg::unit(n, i));
        dirs.push(linalg::scale(&linalg::unit(n, i), -1.0));
    }
    if let Some(hs) = gauge.facets() {
        dirs.extend(hs.iter().take(64).filter_map(|a| normalize(a)));
    }
    for _ in 0..samples {
        dirs.push(random_unit(&mut rng, n));
    }
    let per_dir = if n == 2 { 2 } else { 8 };
    let steps = (FRAC_PI_2 / THETA_STEP).floor() as usize;
    let mut theta_star = steps;
    for a in &dirs {
        let line = Subspace::line(a)?;
        let comp = line.complement();
        for q in 0..per_dir {
            let w = if n == 2 {
                linalg::scale(&comp.basis[0], if q == 0 { 1.0 } else { -1.0 })
            } else {
                random_in(&mut rng, &comp)
            };
            for k in 0..theta_star {
                let th = k as f64 * THETA_STEP;
                let u = tilt(a, &w, th);
                let c: Vec<f64> = a.iter().zip(&u).map(|(ai, ui)| ai - 0.75 * ui).collect();
                if !(gauge.norm(&c) - 0.75 * gauge.norm(&u) < -1e-12) {
                    theta_star = k;
                    break;
                }
            }
        }
    }
    if theta_star == 0 {
        return Err(Error::Numeric("mediatrix bound fails at θ = 0".into()));
    }
    let eps_bar = ((theta_star as f64 - 1.0) * THETA_STEP / 2.0).min(FRAC_PI_4);
    Ok((eps_bar.min(alpha / 2.0), eps_bar))
}

/// Raw estimates feeding [`compute_constants`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub eps0: f64,
    pub xi_bar: f64,
    pub eps1: f64,
    pub eps_bar: f64,
    pub seed: u64,
    pub budget: usize,
}

pub fn estimate_all(gauge: &Gauge, budget: usize, seed: u64) -> Result<Estimates> {
    let (eps0, xi_bar) = estimate_eps0_xibar(gauge, budget, seed)?;
    let (eps1, eps_bar) = estimate_eps1(gauge, xi_bar, (budget / 50).max(64), seed ^ 0xe1)?;
    Ok(Estimates {
        eps0,
        xi_bar,
        eps1,
        eps_bar,
        seed,
        budget,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub n: usize,
    pub eps0: f64,
    pub xi_bar: f64,
    pub xi: f64,
    pub delta_bar: f64,
    pub eps1: f64,
    pub eps_bar: f64,
    pub delta0: f64,
    pub seed: u64,
    pub budget: usize,
    pub gauge_hash: String,
}

impl Constants {
    /// C(ζ) = max_k C_k(ζ) = C_n(ζ).
    pub fn c_of_zeta(&self, zeta: f64) -> f64 {
        c_k(self.n.max(1), zeta)
    }

    /// δ₀ from the stored fields.
    pub fn recompute_delta0(&self) -> f64 {
        delta0_of(self.n, self.delta_bar, self.eps0, self.eps1, self.c_of_zeta(self.xi))
    }
}

fn delta0_of(n: usize, delta_bar: f64, eps0: f64, eps1: f64, c: f64) -> f64 {
    if n <= 1 {
        return delta_bar;
    }
    let m = 8.0 * (n as f64 - 1.0) * c;
    let t2 = (eps0.sin() / m).atan();
    let t3 = (1.0 / (m * (3.0 / eps1.tan() + 8.0 / eps1.sin()))).atan();
    delta_bar.min(t2).min(t3)
}

pub fn compute_constants(gauge: &Gauge, n: usize, est: &Estimates) -> Result<Constants> {
    if n != gauge.dim() {
        return input(format!("n = {n} differs from the gauge dimension {}", gauge.dim()));
    }
    for (name, v, hi) in [
        ("eps0", est.eps0, FRAC_PI_2),
        ("eps1", est.eps1, FRAC_PI_2),
        ("eps_bar", est.eps_bar, FRAC_PI_2),
    ] {
        if !(v > 0.0 && v < hi) {
            return input(format!("{name} = {v} is not in (0, π/2)"));
        }
    }
    if !(est.xi_bar >= 0.0 && est.xi_bar < FRAC_PI_2) {
        return input(format!("xi_bar = {} is not in [0, π/2)", est.xi_bar));
    }
    let xi = est.xi_bar / 2.0 + FRAC_PI_4;
    let delta_bar = FRAC_PI_4 - est.xi_bar / 2.0;
    let delta0 = delta0_of(n, delta_bar, est.eps0, est.eps1, c_k(n, xi));
    Ok(Constants {
        n,
        eps0: est.eps0,
        xi_bar: est.xi_bar,
        xi,
        delta_bar,
        eps1: est.eps1,
        eps_bar: est.eps_bar,
        delta0,
        seed: est.seed,
        budget: est.budget,
        gauge_hash: gauge.hash(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn ids(v: &[u64]) -> Vec<PatchId> {
        v.iter().map(|&i| PatchId::single(i)).collect()
    }

    #[test]
    fn max_norm_plane_has_four_patches() {
        let p = build_partition(&Gauge::max_norm(2), 0.3).unwrap();
        assert_eq!(p.count_exact(), Some(4));
        let normals: Vec<Vec<f64>> = p.patches().unwrap().into_iter().map(|b| b.normal).collect();
        assert_eq!(normals, vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]);
    }

    #[test]
    fn lifted_square_adds_top_and_bottom() {
        let g = Gauge::cylinder(Gauge::max_norm(2));
        let p = build_partition(&g, 0.1).unwrap();
        assert_eq!(p.count_exact(), Some(6));
        assert_eq!(p.normal(&PatchId::single(5)).unwrap(), vec![0.0, 0.0, 1.0]);
        assert_eq!(p.classify_direction(&[0.1, 0.2, -3.0]).unwrap(), PatchId::single(6));
        assert_eq!(p.classify_direction(&[0.1, 2.0, 0.5]).unwrap(), PatchId::single(3));
    }

    #[test]
    fn classify_examples() {
        let p = build_partition(&Gauge::max_norm(2), 0.3).unwrap();
        let o = [0.0, 0.0];
        assert_eq!(classify(&p, &o, &[0.2, 1.0]).unwrap(), PatchId::single(3));
        let corner = classify(&p, &o, &[1.0, 1.0]).unwrap();
        for _ in 0..5 {
            assert_eq!(classify(&p, &o, &[1.0, 1.0]).unwrap(), corner);
        }
        assert_eq!(corner, PatchId::single(1));
        assert!(classify(&p, &o, &o).unwrap().is_apex());
    }

    #[test]
    fn euclidean_plane_sectors() {
        let p = build_partition(&Gauge::euclidean(2), FRAC_PI_4).unwrap();
        assert!(p.count <= 8.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let d = random_unit(&mut rng, 2);
            let id = p.classify_direction(&d).unwrap();
            assert!(linalg::angle(&p.normal(&id).unwrap(), &d) < p.delta);
        }
    }

    #[test]
    fn cube_grid_normals_within_delta() {
        for g in [Gauge::euclidean(3), Gauge::pnorm(4, 3.0).unwrap()] {
            let p = build_partition(&g, 0.4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            for _ in 0..3000 {
                let d = random_unit(&mut rng, g.dim());
                let bp = g.boundary_point(&d).unwrap();
                let id = p.classify_direction(&d).unwrap();
                let nu = p.normal(&id).unwrap();
                let best = bp.normals.iter().map(|v| linalg::angle(v, &nu)).fold(f64::INFINITY, f64::min);
                assert!(best < p.delta, "{best}");
            }
        }
    }

    #[test]
    fn tiny_delta_uses_exact_normals() {
        let g = Gauge::euclidean(4);
        let p = build_partition(&g, 1e-12).unwrap();
        assert!(matches!(p.scheme, Scheme::Normals));
        assert!(p.count.is_infinite());
        assert!(p.ids().is_err());
        let d = vec![0.3, -0.4, 0.5, 0.1];
        let id = p.classify_direction(&d).unwrap();
        let nu = p.normal(&id).unwrap();
        assert!(linalg::angle(&nu, &d) < 1e-12);
        assert!(p.in_cone(&id, &d).unwrap());
        assert!(!p.in_cone(&id, &[0.3, -0.4, 0.5, 0.2]).unwrap());
        let back: Partition = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert!(back.count.is_infinite());
        let lifted = build_partition(&Gauge::cylinder(g), 1e-12).unwrap();
        let (top, bottom) = lifted.cap_ids();
        assert_ne!(top, bottom);
        assert_eq!(lifted.normal(&top).unwrap(), linalg::unit(5, 4));
    }

    #[test]
    fn grid_ids_enumerate_every_cell_once() {
        let p = build_partition(&Gauge::euclidean(3), 0.6).unwrap();
        let all = p.ids().unwrap();
        assert_eq!(all.len() as u128, p.count_exact().unwrap());
        let set: BTreeSet<_> = all.iter().cloned().collect();
        assert_eq!(set.len(), all.len());
    }

    #[test]
    fn admissible_indices_examples() {
        let p = build_partition(&Gauge::max_norm(2), 0.3).unwrap();
        let x_axis = Subspace::axis(2, 0);
        let got = admissible_indices(&p, &x_axis, 0.05).unwrap();
        assert_eq!(got.into_iter().collect::<Vec<_>>(), ids(&[1, 2]));
        let full = admissible_indices(&p, &Subspace::full(2), 0.0).unwrap();
        assert_eq!(full.len(), 4);
        let line = Subspace::line(&[1.0, 0.5]).unwrap();
        let got = admissible_indices(&p, &line, 0.0).unwrap();
        assert_eq!(got.into_iter().collect::<Vec<_>>(), ids(&[1, 2]));
    }

    #[test]
    fn admissibility_examples() {
        let p = build_partition(&Gauge::max_norm(2), 0.3).unwrap();
        assert!(is_admissible(&p, &ids(&[3]), 0.1).unwrap());
        // top facet before right facet: e2 against span{e1}^⊥ = span{e2}
        assert!(is_admissible(&p, &ids(&[3, 1]), FRAC_PI_4 + 0.1).unwrap());
        // e1 against span{e1}^⊥ is perpendicular
        assert!(!is_admissible(&p, &ids(&[1, 1]), 1.5).unwrap());
        assert!(is_admissible(&p, &ids(&[1, 2, 3]), 1.0).is_err());
    }

    #[test]
    fn frame_examples() {
        let p = build_partition(&Gauge::max_norm(2), 0.3).unwrap();
        let f = frame_from_tuple(&p, &ids(&[1]), 1.0).unwrap();
        assert_eq!(f.pi_subspaces[0].basis, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(f.residual.basis, vec![vec![0.0, 1.0]]);
        let top = frame_from_tuple(&p, &ids(&[3]), 1.0).unwrap();
        assert_eq!(top.axes, vec![vec![0.0, 1.0]]);
        assert_eq!(top.x1, Some(vec![1.0, 0.0]));
        match frame_from_tuple(&p, &ids(&[1, 1]), 1.0) {
            Err(Error::Hypothesis { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = Frame::random(&mut rng, 5, 4, 0.5).unwrap();
        assert!(f.block_orthogonality_defect() < 1e-10);
    }

    #[test]
    fn c_k_closed_form() {
        assert!((c_k(2, FRAC_PI_4) - (2.0 + SQRT_2)).abs() < 1e-12);
        let z = PI / 6.0;
        let f = 1.0 + z.tan() + 1.0 / z.cos();
        assert!((c_k(3, z) - f * f).abs() < 1e-12);
        assert_eq!(c_k(1, 1.2), 1.0);
    }

    #[test]
    fn projection_domination_on_skewed_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = PI / 6.0;
        for _ in 0..50 {
            let f = Frame::random(&mut rng, 3, 3, z).unwrap();
            for _ in 0..20 {
                let a = linalg::random_gaussian(&mut rng, 3);
                let (l, r) = projection_domination(&f, &a).unwrap();
                assert!(l <= r + 1e-9);
            }
        }
        let f = Frame::from_axes(2, vec![vec![1.0, 0.0]], 0.1).unwrap();
        let (l, r) = projection_domination(&f, &[3.0, 0.0]).unwrap();
        assert_eq!((l, r), (3.0, 3.0));
    }

    #[test]
    fn cone_descent_examples() {
        let p = build_partition(&Gauge::max_norm(2), 0.3).unwrap();
        let down = Polyline::new(vec![vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert!(check_cone_descent(&p, &down, &PatchId::single(3), 0.1).unwrap().holds);
        let poly = Polyline::new(vec![vec![0.3, 2.0], vec![-0.2, 1.5], vec![0.1, 0.6], vec![0.0, 0.0]]).unwrap();
        assert!(check_cone_descent(&p, &poly, &PatchId::single(3), 0.1).unwrap().holds);
        let up = Polyline::new(vec![vec![0.0, 1.0], vec![0.1, 2.0], vec![0.0, 0.0]]).unwrap();
        let c = check_cone_descent(&p, &up, &PatchId::single(3), 0.1).unwrap();
        assert_eq!(c.failing_index, Some(1));
        let outside = Polyline::new(vec![vec![3.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            check_cone_descent(&p, &outside, &PatchId::single(3), 0.1),
            Err(Error::Hypothesis { .. })
        ));
    }

    #[test]
    fn euclidean_estimates() {
        let g = Gauge::euclidean(2);
        let (eps0, xi_bar) = estimate_eps0_xibar(&g, 20_000, 1).unwrap();
        assert!(eps0 >= 28.0 * EPS_GRID);
        assert!(xi_bar >= eps0 - 1e-9 && xi_bar <= eps0 + EPS_GRID + 1e-9);
        let (eps1, eps_bar) = estimate_eps1(&g, xi_bar, 50, 2).unwrap();
        let want = (2.0f64 / 3.0).acos() / 2.0;
        assert!((eps_bar - want).abs() < 1.5e-3, "{eps_bar} vs {want}");
        assert!(eps1 <= eps_bar && eps1 <= (FRAC_PI_2 - xi_bar) / 4.0 + 1e-15);
    }

    #[test]
    fn constants_invariants() {
        let g = Gauge::max_norm(2);
        let est = estimate_all(&g, 20_000, 3).unwrap();
        let c = compute_constants(&g, 2, &est).unwrap();
        assert_eq!(c.xi, c.xi_bar / 2.0 + FRAC_PI_4);
        assert_eq!(c.delta_bar, FRAC_PI_4 - c.xi_bar / 2.0);
        assert!(c.delta0 <= c.delta_bar);
        assert!((c.recompute_delta0() - c.delta0).abs() <= 1e-12);
        assert!(compute_constants(&g, 3, &est).is_err());
    }
}
