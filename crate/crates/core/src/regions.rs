//! The slit domains and their oracles.
//!
//! Coordinates follow the construction: for the Cantor-slit family the first
//! `n − 1` coordinates carry the Cantor set and the last one is the slit
//! (height) axis. For the planar fat/thin example and its products the
//! Cantor coordinate is `x₁` and the slit axis is `x₂`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cantor::{fat_thin_cantor, CantorSpec, DEFAULT_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    /// The Lipschitz box domain with the rectangle `[−1,0]×[−1,1]` removed.
    D,
    /// The closed tent set pinched on the Cantor set.
    NLambda,
    /// `D \ N_λ`.
    OmegaLambda,
    /// The part of `Ω_λ` away from the unit box; the averaging source for
    /// the central cubes.
    Q0Tilde,
    /// Planar fat/thin Cantor slit square.
    Omega2,
    /// `Ω₂ × (−1,1)^{n−2}`.
    Omega2Product,
}

impl RegionKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "d" => RegionKind::D,
            "n" | "n_lambda" | "nlambda" => RegionKind::NLambda,
            "omega" | "omega_lambda" | "omegalambda" => RegionKind::OmegaLambda,
            "q0" | "q0_tilde" => RegionKind::Q0Tilde,
            "omega2" => RegionKind::Omega2,
            "omega2_product" => RegionKind::Omega2Product,
            other => return Err(Error::invalid(format!("unknown region kind {other:?}"))),
        })
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn inflate(&self, by: f64) -> Self {
        Self {
            lo: self.lo.iter().map(|v| v - by).collect(),
            hi: self.hi.iter().map(|v| v + by).collect(),
        }
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub kind: RegionKind,
    pub n: usize,
    pub cantor: CantorSpec,
    pub bbox: BBox,
}

/// Side label of a cell relative to the slit: cells on opposite sides of
/// the slit never exchange information, [`SIDE_FREE`] cells talk to both.
pub const SIDE_UPPER: u8 = 1;
pub const SIDE_LOWER: u8 = 2;
pub const SIDE_FREE: u8 = 3;

impl RegionSpec {
    /// A member of the Cantor-slit family (`D`, `N_λ`, `Ω_λ`, `Q̃₀`).
    pub fn slit(kind: RegionKind, n: usize, lambda: f64) -> Result<Self> {
        let cantor = CantorSpec::fixed(lambda, n.saturating_sub(1).max(1), 64)?;
        Self::new(kind, n, cantor)
    }

    /// The planar fat/thin example (or its product with `(−1,1)^{n−2}`).
    pub fn omega2(n: usize, depth: usize) -> Result<Self> {
        let kind = if n == 2 {
            RegionKind::Omega2
        } else {
            RegionKind::Omega2Product
        };
        Self::new(kind, n, fat_thin_cantor(depth)?)
    }

    pub fn new(kind: RegionKind, n: usize, cantor: CantorSpec) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("ambient dimension must be at least 2"));
        }
        let bbox = match kind {
            RegionKind::D | RegionKind::OmegaLambda | RegionKind::Q0Tilde => {
                if cantor.ambient_codim != n - 1 {
                    return Err(Error::DimensionMismatch {
                        expected: n - 1,
                        got: cantor.ambient_codim,
                    });
                }
                let mut lo = vec![0.0; n - 2];
                let mut hi = vec![1.0; n - 2];
                lo.extend([-2.0, -1.5]);
                hi.extend([1.0, 1.5]);
                BBox::new(lo, hi)
            }
            RegionKind::NLambda => {
                if cantor.ambient_codim != n - 1 {
                    return Err(Error::DimensionMismatch {
                        expected: n - 1,
                        got: cantor.ambient_codim,
                    });
                }
                let mut lo = vec![0.0; n - 1];
                let mut hi = vec![1.0; n - 1];
                lo.push(-1.0);
                hi.push(1.0);
                BBox::new(lo, hi)
            }
            RegionKind::Omega2 | RegionKind::Omega2Product => {
                if kind == RegionKind::Omega2 && n != 2 {
                    return Err(Error::invalid("Omega2 is planar; use Omega2Product for n > 2"));
                }
                if cantor.ambient_codim != 1 {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        got: cantor.ambient_codim,
                    });
                }
                BBox::new(vec![-1.0; n], vec![1.0; n])
            }
        };
        Ok(Self { kind, n, cantor, bbox })
    }

    pub fn with_kind(&self, kind: RegionKind) -> Result<Self> {
        Self::new(kind, self.n, self.cantor.clone())
    }

    pub fn lambda(&self) -> Option<f64> {
        self.cantor.lambda()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Membership in the region: open for `D`, `Ω_λ`, `Q̃₀`, `Ω₂`; closed
    /// for `N_λ`.
    pub fn membership(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        Ok(self.contains(x))
    }

    pub(crate) fn contains(&self, x: &[f64]) -> bool {
        match self.kind {
            RegionKind::D => in_d(x),
            RegionKind::NLambda => self.in_n(x),
            RegionKind::OmegaLambda => in_d(x) && !self.in_n(x),
            RegionKind::Q0Tilde => in_q0(x),
            RegionKind::Omega2 | RegionKind::Omega2Product => self.in_omega2(x),
        }
    }

    /// Tent height `dist(x′, C_λ)` over the Cantor coordinates.
    pub fn tent_height(&self, xp: &[f64]) -> f64 {
        self.cantor.c_distance_unchecked(xp, DEFAULT_TOL)
    }

    fn in_n(&self, x: &[f64]) -> bool {
        let (xp, t) = x.split_at(self.n - 1);
        xp.iter().all(|v| (0.0..=1.0).contains(v)) && t[0].abs() <= self.tent_height(xp)
    }

    /// Interior of `N_λ`.
    pub fn in_n_interior(&self, x: &[f64]) -> bool {
        let (xp, t) = x.split_at(self.n - 1);
        xp.iter().all(|v| *v > 0.0 && *v < 1.0) && t[0].abs() < self.tent_height(xp)
    }

    fn in_omega2(&self, x: &[f64]) -> bool {
        if !x.iter().all(|v| *v > -1.0 && *v < 1.0) {
            return false;
        }
        let (cx, y) = (x[0], x[1]);
        let carved = (0.0..=1.0).contains(&cx) && y.abs() <= self.cantor.k_distance_unchecked(cx, DEFAULT_TOL);
        !carved
    }

    /// Position of a point in the slit geometry: the Cantor coordinates and
    /// the slit-axis coordinate.
    fn slit_parts<'a>(&self, x: &'a [f64]) -> (&'a [f64], f64) {
        match self.kind {
            RegionKind::Omega2 | RegionKind::Omega2Product => (&x[..1], x[1]),
            _ => (&x[..self.n - 1], x[self.n - 1]),
        }
    }

    /// Which side of the slit a point sits on, for grid coupling.
    pub fn slit_side(&self, x: &[f64]) -> u8 {
        let (xp, t) = self.slit_parts(x);
        if xp.iter().all(|v| (0.0..=1.0).contains(v)) {
            if t > 0.0 {
                SIDE_UPPER
            } else {
                SIDE_LOWER
            }
        } else {
            SIDE_FREE
        }
    }

    /// Certified bracket `lo ≤ dist(x, ∂N_λ) ≤ hi` from the vertical gap to
    /// the tent graph, the 1-Lipschitz bound on the tent height and the
    /// flat lateral faces.
    pub fn boundary_distance(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.require_n()?;
        self.check_dim(x)?;
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("coordinate {v}")));
        }
        Ok(self.coarse_bracket(x))
    }

    fn require_n(&self) -> Result<()> {
        if self.kind != RegionKind::NLambda {
            return Err(Error::Unsupported(format!(
                "boundary distance is provided for N_lambda, not {:?}",
                self.kind
            )));
        }
        Ok(())
    }

    fn coarse_bracket(&self, x: &[f64]) -> (f64, f64) {
        let (xp, t) = x.split_at(self.n - 1);
        let s = t[0].abs();
        let sqrt2 = std::f64::consts::SQRT_2;
        let inside_box = xp.iter().all(|v| (0.0..=1.0).contains(v));
        let (lo, hi) = if inside_box {
            let g = self.tent_height(xp);
            let v = (g - s).abs();
            if s <= g {
                // the lateral faces only exist where the tent height is positive
                let (face_dist, proj) = nearest_face(xp);
                let hi_lat = if s <= self.tent_height(&proj) {
                    face_dist
                } else {
                    f64::INFINITY
                };
                ((v / sqrt2).min(face_dist), v.min(hi_lat))
            } else {
                (v / sqrt2, v)
            }
        } else {
            let proj: Vec<f64> = xp.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            let d = xp.iter().zip(&proj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let gp = self.tent_height(&proj);
            let w = s - gp - d;
            let lo = d.max(w / sqrt2);
            let hi = (d * d + (s - gp).max(0.0).powi(2)).sqrt();
            (lo, hi)
        };
        ((lo - DEFAULT_TOL).max(0.0), hi + DEFAULT_TOL)
    }

    /// Branch-and-bound refinement of the boundary distance until
    /// `hi ≤ (1 + rel)·lo` (or the bracket width drops below `1e-10`).
    pub fn refined_boundary_distance(&self, x: &[f64], rel: f64) -> Result<(f64, f64)> {
        self.require_n()?;
        self.check_dim(x)?;
        if !(rel > 0.0) {
            return Err(Error::invalid("relative precision must be positive"));
        }
        Ok(self.refined_bracket(x, rel))
    }

    pub(crate) fn refined_bracket(&self, x: &[f64], rel: f64) -> (f64, f64) {
        const ABS: f64 = 1e-10;
        let m = self.n - 1;
        let (xp, t) = x.split_at(m);
        let s = t[0].abs();
        let mut heap = BinaryHeap::new();
        let mut hi = f64::INFINITY;
        let mut leaf_lo = f64::INFINITY;

        let push = |heap: &mut BinaryHeap<Piece>, hi: &mut f64, lo_c: Vec<f64>, hi_c: Vec<f64>, lateral: bool| {
            let (lb, ub) = piece_bounds(self, xp, s, &lo_c, &hi_c, lateral);
            *hi = hi.min(ub);
            heap.push(Piece {
                lb,
                lo: lo_c,
                hi: hi_c,
                lateral,
            });
        };

        push(&mut heap, &mut hi, vec![0.0; m], vec![1.0; m], false);
        if m >= 2 {
            for axis in 0..m {
                for side in [0.0, 1.0] {
                    let mut lo_c = vec![0.0; m];
                    let mut hi_c = vec![1.0; m];
                    lo_c[axis] = side;
                    hi_c[axis] = side;
                    push(&mut heap, &mut hi, lo_c, hi_c, true);
                }
            }
        }

        let mut lo = None;
        while let Some(piece) = heap.pop() {
            if piece.lb * (1.0 + rel) >= hi || hi - piece.lb <= ABS {
                lo = Some(piece.lb);
                break;
            }
            let radius = half_diagonal(&piece.lo, &piece.hi);
            if radius < ABS {
                leaf_lo = leaf_lo.min(piece.lb);
                continue;
            }
            for (clo, chi) in split_box(&piece.lo, &piece.hi) {
                push(&mut heap, &mut hi, clo, chi, piece.lateral);
            }
        }
        let lo = lo.unwrap_or(hi).min(leaf_lo);
        ((lo - DEFAULT_TOL).max(0.0), hi + DEFAULT_TOL)
    }

    /// Flood-fill labelling of the grid cells of `B(center, radius) ∩ region`.
    pub fn component_label(&self, center: &[f64], radius: f64, h: f64) -> Result<ComponentMap> {
        self.check_dim(center)?;
        if !(radius > 0.0) {
            return Err(Error::invalid("radius must be positive"));
        }
        if !(h > 0.0) || h > radius / 16.0 + 1e-15 {
            return Err(Error::invalid("grid spacing must satisfy 0 < h <= radius/16"));
        }
        Ok(ComponentMap::build(self, center, radius, h))
    }

    /// Depth-`depth` corners of `C_λ × {0}` with a two-radius flood-fill
    /// witness of two-sidedness. The grid spacing is `λ^depth / cells`.
    pub fn two_sided_sample(&self, depth: usize, cells: usize) -> Result<TwoSidedSample> {
        if self.kind != RegionKind::OmegaLambda {
            return Err(Error::Unsupported("two-sided samples are taken on Omega_lambda".into()));
        }
        if depth > self.cantor.max_depth {
            return Err(Error::invalid("depth exceeds the Cantor max_depth"));
        }
        if cells < 32 {
            return Err(Error::invalid("need at least 32 cells per radius"));
        }
        let scale = self.cantor.cell_size(depth);
        let h = scale / cells as f64;
        let points: Vec<Vec<f64>> = self
            .cantor
            .corners(depth)
            .into_iter()
            .map(|mut c| {
                c.push(0.0);
                c
            })
            .collect();
        let witnesses = points
            .iter()
            .map(|p| self.witness(p, scale, h))
            .collect::<Result<Vec<_>>>()?;
        let leftmost = points.iter().position(|p| p.iter().all(|v| *v == 0.0));
        Ok(TwoSidedSample {
            points,
            depth,
            h,
            witnesses,
            leftmost,
        })
    }

    fn witness(&self, x: &[f64], r: f64, h: f64) -> Result<Witness> {
        let outer = self.component_label(x, r, h)?;
        let inner = self.component_label(x, r / 2.0, h)?;
        let pick = |map: &ComponentMap, up: bool| map.column_label(up);
        let (ou, ol) = (pick(&outer, true), pick(&outer, false));
        let (iu, il) = (pick(&inner, true), pick(&inner, false));
        let mut note = None;
        let distinct = matches!((ou, ol, iu, il), (Some(a), Some(b), Some(c), Some(d)) if a != b && c != d);
        if !distinct {
            note = Some("upper and lower witnesses coincide or are missing".to_string());
        }
        let nested = distinct && {
            let (iu, il, ou, ol) = (iu.unwrap(), il.unwrap(), ou.unwrap(), ol.unwrap());
            inner.cells().all(|(idx, lab)| {
                if lab != iu && lab != il {
                    return true;
                }
                let want = if lab == iu { ou } else { ol };
                outer.label_at(&idx) == Some(want)
            })
        };
        if distinct && !nested {
            note = Some("inner components are not nested in the outer ones".to_string());
        }
        Ok(Witness {
            upper: ou.unwrap_or(0),
            lower: ol.unwrap_or(0),
            count_outer: outer.count,
            count_inner: inner.count,
            nested,
            ok: distinct && nested && outer.count >= 2,
            note,
        })
    }
}

/// Membership in `Ω₂` with the fat/thin Cantor set resolved at `depth`.
pub fn omega2_membership(x: &[f64], depth: usize) -> Result<bool> {
    RegionSpec::omega2(2, depth)?.membership(x)
}

fn prefix_ok(prefix: &[f64]) -> bool {
    prefix.iter().all(|v| *v > 0.0 && *v < 1.0)
}

fn in_d(x: &[f64]) -> bool {
    let n = x.len();
    let (a, b) = (x[n - 2], x[n - 1]);
    prefix_ok(&x[..n - 2])
        && a > -2.0
        && a < 1.0
        && b > -1.5
        && b < 1.5
        && !((-1.0..=0.0).contains(&a) && (-1.0..=1.0).contains(&b))
}

fn in_q0(x: &[f64]) -> bool {
    let n = x.len();
    let (a, b) = (x[n - 2], x[n - 1]);
    prefix_ok(&x[..n - 2])
        && a > -2.0
        && a < 1.0
        && b > -1.5
        && b < 1.5
        && !((-1.0..=1.0).contains(&a) && (-1.0..=1.0).contains(&b))
}

/// Distance from `xp ∈ [0,1]^m` to the boundary of the unit cube and the
/// nearest point on it.
fn nearest_face(xp: &[f64]) -> (f64, Vec<f64>) {
    let mut best = (f64::INFINITY, 0, 0.0);
    for (i, v) in xp.iter().enumerate() {
        if *v < best.0 {
            best = (*v, i, 0.0);
        }
        if 1.0 - v < best.0 {
            best = (1.0 - v, i, 1.0);
        }
    }
    let mut proj = xp.to_vec();
    proj[best.1] = best.2;
    (best.0, proj)
}

struct Piece {
    lb: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
    lateral: bool,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.lb == other.lb
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    // min-heap on the lower bound
    fn cmp(&self, other: &Self) -> Ordering {
        other.lb.total_cmp(&self.lb)
    }
}

fn half_diagonal(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt() / 2.0
}

fn split_box(lo: &[f64], hi: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = vec![(lo.to_vec(), hi.to_vec())];
    for axis in 0..lo.len() {
        if hi[axis] <= lo[axis] {
            continue;
        }
        let mid = 0.5 * (lo[axis] + hi[axis]);
        out = out
            .into_iter()
            .flat_map(|(l, h)| {
                let mut left_hi = h.clone();
                left_hi[axis] = mid;
                let mut right_lo = l.clone();
                right_lo[axis] = mid;
                [(l, left_hi), (right_lo, h)]
            })
            .collect();
    }
    out
}

/// Lower and upper distance bounds from `(xp, s)` to the part of `∂N_λ`
/// lying over the box `[lo, hi]` (sheet or lateral face).
fn piece_bounds(spec: &RegionSpec, xp: &[f64], s: f64, lo: &[f64], hi: &[f64], lateral: bool) -> (f64, f64) {
    let center: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let r = half_diagonal(lo, hi);
    let gc = spec.tent_height(&center);
    let horiz: f64 = xp
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(v, (a, b))| {
            let d = (a - v).max(v - b).max(0.0);
            d * d
        })
        .sum();
    let (band_lo, band_hi) = if lateral {
        (-(gc + r), gc + r)
    } else {
        ((gc - r).max(0.0), gc + r)
    };
    let vert = (band_lo - s).max(s - band_hi).max(0.0);
    let lb = (horiz + vert * vert).sqrt();
    let target = if lateral { s.clamp(-gc, gc) } else { gc };
    let to_center: f64 = xp.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
    let ub = (to_center + (s - target).powi(2)).sqrt();
    (lb, ub)
}

/// Labelled flood fill of a ball window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentMap {
    pub center: Vec<f64>,
    pub radius: f64,
    pub h: f64,
    /// Cells per axis on each side of the center.
    pub half: usize,
    /// `0` for cells outside the ball or region, otherwise `1..=count`.
    pub labels: Vec<u32>,
    pub count: u32,
}

impl ComponentMap {
    fn build(spec: &RegionSpec, center: &[f64], radius: f64, h: f64) -> Self {
        let n = center.len();
        let half = (radius / h).ceil() as usize;
        let side = 2 * half;
        let total = side.pow(n as u32);
        let cell_center = |flat: usize| -> Vec<f64> {
            let mut rem = flat;
            let mut p = vec![0.0; n];
            for (axis, v) in p.iter_mut().enumerate().rev() {
                let i = rem % side;
                rem /= side;
                *v = center[axis] + (i as f64 - half as f64 + 0.5) * h;
            }
            p
        };
        let inside: Vec<bool> = (0..total)
            .map(|f| {
                let p = cell_center(f);
                let r2: f64 = p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                r2 < radius * radius && spec.contains(&p)
            })
            .collect();
        let stride: Vec<usize> = (0..n).map(|axis| side.pow((n - 1 - axis) as u32)).collect();
        let mut labels = vec![0u32; total];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..total {
            if !inside[start] || labels[start] != 0 {
                continue;
            }
            count += 1;
            labels[start] = count;
            queue.push_back(start);
            while let Some(cur) = queue.pop_front() {
                let pc = cell_center(cur);
                for axis in 0..n {
                    let coord = (cur / stride[axis]) % side;
                    for dir in [-1i64, 1] {
                        let nc = coord as i64 + dir;
                        if nc < 0 || nc >= side as i64 {
                            continue;
                        }
                        let nb = (cur as i64 + dir * stride[axis] as i64) as usize;
                        if !inside[nb] || labels[nb] != 0 {
                            continue;
                        }
                        // the shared face must itself lie in the region
                        let mut mid = pc.clone();
                        mid[axis] += dir as f64 * h / 2.0;
                        if !spec.contains(&mid) {
                            continue;
                        }
                        labels[nb] = count;
                        queue.push_back(nb);
                    }
                }
            }
        }
        Self {
            center: center.to_vec(),
            radius,
            h,
            half,
            labels,
            count,
        }
    }

    fn side(&self) -> usize {
        2 * self.half
    }

    fn dim(&self) -> usize {
        self.center.len()
    }

    /// Label of the cell with signed offsets `idx` from the center.
    pub fn label_at(&self, idx: &[i64]) -> Option<u32> {
        let side = self.side() as i64;
        let mut flat = 0i64;
        for &i in idx {
            let j = i + self.half as i64;
            if j < 0 || j >= side {
                return None;
            }
            flat = flat * side + j;
        }
        match self.labels[flat as usize] {
            0 => None,
            l => Some(l),
        }
    }

    /// Label of the cell containing `x`.
    pub fn label_of_point(&self, x: &[f64]) -> Option<u32> {
        let idx: Vec<i64> = x
            .iter()
            .zip(&self.center)
            .map(|(v, c)| ((v - c) / self.h).floor() as i64)
            .collect();
        self.label_at(&idx)
    }

    /// Label for a region point `x`: the label of its cell, or, when that
    /// cell's centre fell outside the region, of a neighbouring cell on the
    /// same side of the slit.
    pub fn label_near(&self, spec: &RegionSpec, x: &[f64]) -> Option<u32> {
        if let Some(l) = self.label_of_point(x) {
            return Some(l);
        }
        let side = spec.slit_side(x);
        let n = x.len();
        (0..3usize.pow(n as u32)).find_map(|k| {
            let mut y = x.to_vec();
            let mut rem = k;
            for v in y.iter_mut() {
                *v += (rem % 3) as f64 * self.h - self.h;
                rem /= 3;
            }
            if spec.slit_side(&y) == side {
                self.label_of_point(&y)
            } else {
                None
            }
        })
    }

    /// All labelled cells as (signed offsets, label).
    pub fn cells(&self) -> impl Iterator<Item = (Vec<i64>, u32)> + '_ {
        let side = self.side();
        let n = self.dim();
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l != 0)
            .map(move |(flat, l)| {
                let mut rem = flat;
                let mut idx = vec![0i64; n];
                for v in idx.iter_mut().rev() {
                    *v = (rem % side) as i64 - self.half as i64;
                    rem /= side;
                }
                (idx, *l)
            })
    }

    /// Label of the first region cell met walking up (or down) the slit
    /// axis from the center, within the first half of the radius.
    pub fn column_label(&self, up: bool) -> Option<u32> {
        let n = self.dim();
        let steps = (self.half / 2).max(1) as i64;
        (0..steps).find_map(|j| {
            let mut idx = vec![0i64; n];
            idx[n - 1] = if up { j } else { -1 - j };
            self.label_at(&idx)
        })
    }

    /// Labels of components with a cell center within `dist` of the center.
    pub fn attached_labels(&self, dist: f64) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .cells()
            .filter(|(idx, _)| {
                let r2: f64 = idx.iter().map(|i| ((*i as f64 + 0.5) * self.h).powi(2)).sum();
                r2 <= dist * dist
            })
            .map(|(_, l)| l)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub upper: u32,
    pub lower: u32,
    pub count_outer: u32,
    pub count_inner: u32,
    pub nested: bool,
    pub ok: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoSidedSample {
    pub points: Vec<Vec<f64>>,
    pub depth: usize,
    pub h: f64,
    pub witnesses: Vec<Witness>,
    /// Index of the corner at the origin, reported separately.
    pub leftmost: Option<usize>,
}
