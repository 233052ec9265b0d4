//! Cell-centred fields on uniform grids.
//!
//! Every cell carries a mask byte: `0` for cells outside the region,
//! otherwise a slit side label ([`SIDE_UPPER`], [`SIDE_LOWER`],
//! [`SIDE_FREE`]). Finite differences only couple cells whose labels agree
//! or where one of them is free, so nothing leaks across the slit.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regions::{BBox, RegionKind, RegionSpec, SIDE_FREE, SIDE_LOWER, SIDE_UPPER};
use crate::stats::pairwise_sum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub bbox: BBox,
    pub h: f64,
    /// Cells per axis; the last axis varies fastest.
    pub shape: Vec<usize>,
    /// 1 for scalar fields, `n` for vector fields.
    pub components: usize,
    pub values: Vec<f64>,
    pub mask: Vec<u8>,
}

pub(crate) fn coupled(a: u8, b: u8) -> bool {
    a != 0 && b != 0 && (a == b || a == SIDE_FREE || b == SIDE_FREE)
}

impl GridField {
    /// An all-zero scalar field with every cell masked out.
    pub fn empty(bbox: &BBox, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid("grid spacing must be positive"));
        }
        let shape = bbox
            .lo
            .iter()
            .zip(&bbox.hi)
            .map(|(l, u)| {
                let cells = (u - l) / h;
                let r = cells.round();
                if r < 1.0 || (cells - r).abs() > 1e-9 * cells.max(1.0) {
                    Err(Error::invalid(format!("h = {h} does not divide side {}", u - l)))
                } else {
                    Ok(r as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let total: usize = shape.iter().product();
        Ok(Self {
            bbox: bbox.clone(),
            h,
            shape,
            components: 1,
            values: vec![0.0; total],
            mask: vec![0; total],
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = rem % self.shape[a];
            rem /= self.shape[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (i, s)| acc * s + i)
    }

    fn strides(&self) -> Vec<usize> {
        (0..self.dim()).map(|a| self.shape[a + 1..].iter().product()).collect()
    }

    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.bbox.lo)
            .map(|(&i, l)| l + (i as f64 + 0.5) * self.h)
            .collect()
    }

    /// Cell containing `x`, if inside the grid.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = Vec::with_capacity(self.dim());
        for (a, v) in x.iter().enumerate() {
            let i = ((v - self.bbox.lo[a]) / self.h).floor();
            if i < 0.0 || i >= self.shape[a] as f64 {
                return None;
            }
            idx.push(i as usize);
        }
        Some(self.flat_index(&idx))
    }

    /// Scalar value of a cell.
    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat * self.components]
    }

    pub fn vector(&self, flat: usize) -> &[f64] {
        &self.values[flat * self.components..(flat + 1) * self.components]
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| **m != 0).count()
    }

    /// Masked cells with `f(center)` filled in; `mask_of` decides labels.
    pub fn tabulate(
        bbox: &BBox,
        h: f64,
        mask_of: impl Fn(&[f64]) -> u8 + Sync,
        f: impl Fn(&[f64]) -> f64 + Sync,
    ) -> Result<Self> {
        let mut g = Self::empty(bbox, h)?;
        let cells: Vec<(u8, f64)> = (0..g.len())
            .into_par_iter()
            .map(|i| {
                let c = g.cell_center(i);
                let m = mask_of(&c);
                (m, if m != 0 { f(&c) } else { 0.0 })
            })
            .collect();
        for (i, (m, v)) in cells.into_iter().enumerate() {
            if m != 0 && !v.is_finite() {
                return Err(Error::NonFinite(format!("sample at {:?}", g.cell_center(i))));
            }
            g.mask[i] = m;
            g.values[i] = v;
        }
        Ok(g)
    }

    /// Apply `f` to every component of masked cells.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for (cell, m) in out.values.chunks_mut(self.components).zip(&self.mask) {
            if *m != 0 {
                cell.iter_mut().for_each(|v| *v = f(*v));
            }
        }
        out
    }

    /// `a·self + b·other` on a common grid and mask.
    pub fn combine(&self, a: f64, other: &GridField, b: f64) -> Result<Self> {
        if self.shape != other.shape || self.mask != other.mask || self.components != other.components {
            return Err(Error::invalid("fields live on different grids or masks"));
        }
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v = a * *v + b * w;
        }
        Ok(out)
    }
}

/// Mask label of a point for a region: the slit side inside slit regions,
/// free elsewhere, `0` outside.
pub fn region_label(region: &RegionSpec, x: &[f64]) -> u8 {
    if !region.contains(x) {
        return 0;
    }
    match region.kind {
        RegionKind::OmegaLambda | RegionKind::Omega2 | RegionKind::Omega2Product => region.slit_side(x),
        _ => SIDE_FREE,
    }
}

/// Sample `f` at the cell centres of the region's bounding box.
pub fn grid_sample(f: impl Fn(&[f64]) -> f64 + Sync, region: &RegionSpec, h: f64) -> Result<GridField> {
    grid_sample_window(f, region, &region.bbox, h)
}

/// Same as [`grid_sample`] on a sub-window of the bounding box.
pub fn grid_sample_window(
    f: impl Fn(&[f64]) -> f64 + Sync,
    region: &RegionSpec,
    window: &BBox,
    h: f64,
) -> Result<GridField> {
    if window.dim() != region.n {
        return Err(Error::DimensionMismatch {
            expected: region.n,
            got: window.dim(),
        });
    }
    GridField::tabulate(window, h, |x| region_label(region, x), f)
}

#[derive(Debug, Clone)]
pub struct Gradient {
    pub field: GridField,
    /// Cell–axis pairs with no coupled neighbour; their component is 0.
    pub flagged: usize,
}

/// Finite-difference gradient: central where both neighbours are coupled,
/// one-sided where only one is.
pub fn gradient(u: &GridField) -> Result<Gradient> {
    if u.components != 1 {
        return Err(Error::invalid("gradient needs a scalar field"));
    }
    let n = u.dim();
    let strides = u.strides();
    let h = u.h;
    let per_cell: Vec<(Vec<f64>, usize)> = (0..u.len())
        .into_par_iter()
        .map(|i| {
            let mut g = vec![0.0; n];
            let mut flagged = 0;
            let m = u.mask[i];
            if m == 0 {
                return (g, 0);
            }
            let idx = u.multi_index(i);
            for a in 0..n {
                let minus = (idx[a] > 0).then(|| i - strides[a]).filter(|&j| coupled(m, u.mask[j]));
                let plus = (idx[a] + 1 < u.shape[a])
                    .then(|| i + strides[a])
                    .filter(|&j| coupled(m, u.mask[j]));
                g[a] = match (minus, plus) {
                    (Some(jm), Some(jp)) => (u.values[jp] - u.values[jm]) / (2.0 * h),
                    (None, Some(jp)) => (u.values[jp] - u.values[i]) / h,
                    (Some(jm), None) => (u.values[i] - u.values[jm]) / h,
                    (None, None) => {
                        flagged += 1;
                        0.0
                    }
                };
            }
            (g, flagged)
        })
        .collect();
    let mut field = u.clone();
    field.components = n;
    field.values = Vec::with_capacity(u.len() * n);
    let mut flagged = 0;
    for (g, f) in per_cell {
        field.values.extend(g);
        flagged += f;
    }
    Ok(Gradient { field, flagged })
}

/// `(Σ |g|^p hⁿ)^{1/p}` over masked cells, optionally restricted further.
pub fn seminorm_p(g: &GridField, p: f64, submask: Option<&[bool]>) -> Result<f64> {
    Ok(energy_p(g, p, submask)?.powf(1.0 / p))
}

/// `Σ |g|^p hⁿ` over masked cells (the seminorm to the power `p`).
pub fn energy_p(g: &GridField, p: f64, submask: Option<&[bool]>) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid("p must be at least 1"));
    }
    if let Some(s) = submask {
        if s.len() != g.len() {
            return Err(Error::invalid("submask length differs from the grid"));
        }
    }
    let terms: Vec<f64> = (0..g.len())
        .filter(|&i| g.mask[i] != 0 && submask.is_none_or(|s| s[i]))
        .map(|i| {
            let norm2: f64 = g.vector(i).iter().map(|v| v * v).sum();
            norm2.sqrt().powf(p)
        })
        .collect();
    Ok(pairwise_sum(&terms) * g.cell_volume())
}

/// Axis-aligned box or Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Shape {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Shape::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, u))| l <= v && v <= u),
            Shape::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius * radius
            }
        }
    }

    /// Projection along axis `drop` (0-based), as a shape in one fewer
    /// dimension.
    fn project(&self, drop: usize) -> Shape {
        let cut = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .enumerate()
                .filter(|(a, _)| *a != drop)
                .map(|(_, x)| *x)
                .collect()
        };
        match self {
            Shape::Box { lo, hi } => Shape::Box {
                lo: cut(lo),
                hi: cut(hi),
            },
            Shape::Ball { center, radius } => Shape::Ball {
                center: cut(center),
                radius: *radius,
            },
        }
    }

    fn extent(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxUnion {
    pub dim: usize,
    pub members: Vec<Shape>,
}

impl BoxUnion {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            members: Vec::new(),
        }
    }

    pub fn push(&mut self, s: Shape) {
        self.members.push(s);
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.members.iter().any(|s| s.contains(x))
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// `m_{n−1}` of the projection of `F` along axis `m` (1-based). Exact for
/// `n = 2`; for `n ≥ 3` the projected shapes are rasterised at 1/1024 of
/// the projected extent, see [`projection_measure_grid`].
pub fn projection_measure(f: &BoxUnion, m: usize) -> Result<f64> {
    if m < 1 || m > f.dim {
        return Err(Error::invalid(format!("axis {m} outside 1..={}", f.dim)));
    }
    if f.is_empty() {
        return Ok(0.0);
    }
    if f.dim == 2 {
        let mut iv: Vec<(f64, f64)> = f
            .members
            .iter()
            .map(|s| {
                let (lo, hi) = s.project(m - 1).extent();
                (lo[0], hi[0])
            })
            .collect();
        return Ok(interval_union_length(&mut iv));
    }
    let (lo, hi) = projected_extent(f, m);
    let span = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    Ok(projection_measure_grid(f, m, span / 1024.0)?.0)
}

fn projected_extent(f: &BoxUnion, m: usize) -> (Vec<f64>, Vec<f64>) {
    let k = f.dim - 1;
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for s in &f.members {
        let (l, u) = s.project(m - 1).extent();
        for a in 0..k {
            lo[a] = lo[a].min(l[a]);
            hi[a] = hi[a].max(u[a]);
        }
    }
    (lo, hi)
}

/// Pixel count of the projected union at spacing `h`, with an error bound
/// from the pixels that straddle a projected boundary.
pub fn projection_measure_grid(f: &BoxUnion, m: usize, h: f64) -> Result<(f64, f64)> {
    if !(h > 0.0) {
        return Err(Error::invalid("pixel size must be positive"));
    }
    if f.is_empty() {
        return Ok((0.0, 0.0));
    }
    let proj: Vec<Shape> = f.members.iter().map(|s| s.project(m - 1)).collect();
    let (lo, hi) = projected_extent(f, m);
    let k = lo.len();
    let shape: Vec<usize> = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| ((b - a) / h).ceil().max(1.0) as usize)
        .collect();
    let total: usize = shape.iter().product();
    let diag = (k as f64).sqrt() * h / 2.0;
    let (inside, boundary): (usize, usize) = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut c = vec![0.0; k];
            for a in (0..k).rev() {
                c[a] = lo[a] + ((rem % shape[a]) as f64 + 0.5) * h;
                rem /= shape[a];
            }
            let hit = proj.iter().any(|s| s.contains(&c));
            let near = proj.iter().any(|s| shape_gap(s, &c) <= diag) && !proj.iter().any(|s| shape_depth(s, &c) > diag);
            (hit as usize, near as usize)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let cell = h.powi(k as i32);
    Ok((inside as f64 * cell, boundary as f64 * cell))
}

/// Distance from `x` to the boundary of a shape (0 inside-out symmetric).
fn shape_gap(s: &Shape, x: &[f64]) -> f64 {
    match s {
        Shape::Ball { center, radius } => {
            let d = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            (d - radius).abs()
        }
        Shape::Box { lo, hi } => {
            if s.contains(x) {
                shape_depth(s, x)
            } else {
                x.iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(v, (l, u))| (l - v).max(v - u).max(0.0).powi(2))
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }
}

/// Depth of an interior point (0 outside).
fn shape_depth(s: &Shape, x: &[f64]) -> f64 {
    if !s.contains(x) {
        return 0.0;
    }
    match s {
        Shape::Ball { center, radius } => {
            radius - x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        }
        Shape::Box { lo, hi } => x
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(v, (l, u))| (v - l).min(u - v))
            .fold(f64::INFINITY, f64::min),
    }
}

pub(crate) fn interval_union_length(iv: &mut [(f64, f64)]) -> f64 {
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for &(a, b) in iv.iter() {
        match cur {
            Some((s, e)) if a <= e => cur = Some((s, e.max(b))),
            Some((s, e)) => {
                total += e - s;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((s, e)) = cur {
        total += e - s;
    }
    total
}

/// A closed cube given by centre and side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub center: Vec<f64>,
    pub side: f64,
}

impl Cube {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .all(|(v, c)| (v - c).abs() <= self.side / 2.0)
    }

    pub fn scaled(&self, factor: f64) -> Cube {
        Cube {
            center: self.center.clone(),
            side: self.side * factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCheck {
    pub lhs: f64,
    pub scale: f64,
    pub ratio: f64,
    /// `m({f = 0} ∩ ½Q)` and `m({f = 1} ∩ ½Q)`.
    pub level_masses: (f64, f64),
    pub projections: Vec<f64>,
}

/// Values within this band of 0 or 1 count as the level sets.
const LEVEL_BAND: f64 = 1e-9;

/// Check the hypotheses of the large-energy lemma on `(Q, F, f)` and return
/// `∫_{Q\F} |∇f|^p` against `δ^{(n−p)/n} ℓ(Q)^{n−p}`.
pub fn poincare_energy_check(q: &Cube, f_set: &BoxUnion, f: &GridField, delta: f64, p: f64) -> Result<EnergyCheck> {
    let n = f.dim();
    if q.center.len() != n || (!f_set.is_empty() && f_set.dim != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q.center.len(),
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0,1)"));
    }
    let l = q.side;
    let nf = n as f64;
    let budget = delta / (2.0 * nf * 2f64.powi(n as i32)) * l.powi(n as i32 - 1);
    let projections = (1..=n)
        .map(|m| projection_measure(f_set, m))
        .collect::<Result<Vec<_>>>()?;
    if let Some((axis, v)) = projections.iter().enumerate().find(|(_, v)| **v > budget) {
        return Err(Error::Precondition {
            clause: "projection",
            detail: format!("projection along axis {} has measure {v} > {budget}", axis + 1),
        });
    }
    let half = q.scaled(0.5);
    let vol = f.cell_volume();
    let (mut zero, mut one) = (0.0, 0.0);
    for i in 0..f.len() {
        if f.mask[i] == 0 {
            continue;
        }
        let c = f.cell_center(i);
        if !half.contains(&c) {
            continue;
        }
        let v = f.value(i);
        if v.abs() <= LEVEL_BAND {
            zero += vol;
        } else if (v - 1.0).abs() <= LEVEL_BAND {
            one += vol;
        }
    }
    let need = delta * l.powi(n as i32) / 2f64.powi(n as i32);
    if zero.min(one) <= need {
        return Err(Error::Precondition {
            clause: "level-set",
            detail: format!("min(m(f=0), m(f=1)) in Q/2 is {} <= {need}", zero.min(one)),
        });
    }
    let grad = gradient(f)?;
    let sub: Vec<bool> = (0..f.len())
        .map(|i| {
            let c = f.cell_center(i);
            q.contains(&c) && !f_set.contains(&c)
        })
        .collect();
    let lhs = energy_p(&grad.field, p, Some(&sub))?;
    let scale = delta.powf((nf - p) / nf) * l.powf(nf - p);
    Ok(EnergyCheck {
        lhs,
        scale,
        ratio: lhs / scale,
        level_masses: (zero, one),
        projections,
    })
}

/// Write a grid as CSV: `#` header lines, then one row per cell with the
/// centre coordinates, the mask byte and the value(s).
pub fn write_csv(g: &GridField, mut w: impl Write) -> Result<()> {
    let n = g.dim();
    writeln!(w, "# n={n} components={} h={}", g.components, g.h)?;
    writeln!(
        w,
        "# bbox_lo={:?} bbox_hi={:?} shape={:?}",
        g.bbox.lo, g.bbox.hi, g.shape
    )?;
    writeln!(
        w,
        "# mask: 0 outside, {SIDE_UPPER} upper side, {SIDE_LOWER} lower side, {SIDE_FREE} free"
    )?;
    let mut header: Vec<String> = (1..=n).map(|a| format!("x{a}")).collect();
    header.push("mask".into());
    if g.components == 1 {
        header.push("value".into());
    } else {
        header.extend((1..=g.components).map(|a| format!("g{a}")));
    }
    writeln!(w, "{}", header.join(","))?;
    for i in 0..g.len() {
        let mut row: Vec<String> = g.cell_center(i).iter().map(|v| v.to_string()).collect();
        row.push(g.mask[i].to_string());
        row.extend(g.vector(i).iter().map(|v| v.to_string()));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

const MAGIC: &[u8; 8] = b"SLGRID1\0";

/// Little-endian binary dump: magic, `n`, components, `h`, bbox, shape,
/// mask bytes, values.
pub fn write_binary(g: &GridField, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    w.write_all(&(g.components as u32).to_le_bytes())?;
    w.write_all(&g.h.to_le_bytes())?;
    for v in g.bbox.lo.iter().chain(&g.bbox.hi) {
        w.write_all(&v.to_le_bytes())?;
    }
    for s in &g.shape {
        w.write_all(&(*s as u64).to_le_bytes())?;
    }
    w.write_all(&g.mask)?;
    for v in &g.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary(mut r: impl Read) -> Result<GridField> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Serde("not a grid dump".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    let mut u32_ = |r: &mut dyn Read| -> Result<u32> {
        r.read_exact(&mut b4)?;
        Ok(u32::from_le_bytes(b4))
    };
    let n = u32_(&mut r)? as usize;
    let components = u32_(&mut r)? as usize;
    let mut f64_ = |r: &mut dyn Read| -> Result<f64> {
        r.read_exact(&mut b8)?;
        Ok(f64::from_le_bytes(b8))
    };
    let h = f64_(&mut r)?;
    let lo = (0..n).map(|_| f64_(&mut r)).collect::<Result<Vec<_>>>()?;
    let hi = (0..n).map(|_| f64_(&mut r)).collect::<Result<Vec<_>>>()?;
    let shape = (0..n)
        .map(|_| f64_(&mut r).map(|v| u64::from_le_bytes(v.to_le_bytes()) as usize))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = shape.iter().product();
    let mut mask = vec![0u8; total];
    r.read_exact(&mut mask)?;
    let values = (0..total * components)
        .map(|_| f64_(&mut r))
        .collect::<Result<Vec<_>>>()?;
    Ok(GridField {
        bbox: BBox::new(lo, hi),
        h,
        shape,
        components,
        values,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(h: f64, f: impl Fn(&[f64]) -> f64 + Sync) -> GridField {
        let b = BBox::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        GridField::tabulate(&b, h, |_| SIDE_FREE, f).unwrap()
    }

    #[test]
    fn sampling_examples() {
        let g = unit_square(0.125, |x| x[0]);
        assert_eq!(g.value(0), 1.0 / 16.0);
        let region = RegionSpec::slit(RegionKind::OmegaLambda, 2, 0.25).unwrap();
        let g = grid_sample(|_| 1.0, &region, 1.0 / 16.0).unwrap();
        assert!((0..g.len()).filter(|&i| g.mask[i] != 0).all(|i| g.value(i) == 1.0));
        assert!(GridField::empty(&BBox::new(vec![0.0], vec![1.0]), 0.3).is_err());
        let b = BBox::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!(GridField::tabulate(&b, 0.25, |_| SIDE_FREE, |_| f64::NAN).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g = gradient(&unit_square(1.0 / 16.0, |_| 3.0)).unwrap();
        assert!(g.field.values.iter().all(|v| *v == 0.0));
        let g = gradient(&unit_square(1.0 / 16.0, |x| x[0])).unwrap();
        for i in 0..g.field.len() {
            let v = g.field.vector(i);
            assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
        }
        let h = 1.0 / 64.0;
        let u = unit_square(h, |x| x[0] * x[0]);
        let g = gradient(&u).unwrap();
        for i in 0..u.len() {
            let idx = u.multi_index(i);
            if idx[0] > 0 && idx[0] + 1 < u.shape[0] {
                let x = u.cell_center(i)[0];
                assert!((g.field.vector(i)[0] - 2.0 * x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn seminorm_examples() {
        let g = gradient(&unit_square(1.0 / 32.0, |x| x[0])).unwrap();
        assert!((seminorm_p(&g.field, 2.0, None).unwrap() - 1.0).abs() < 1e-12);
        assert!((seminorm_p(&g.field, 1.5, None).unwrap() - 1.0).abs() < 1e-12);
        let mut empty = g.field.clone();
        empty.mask.iter_mut().for_each(|m| *m = 0);
        assert_eq!(seminorm_p(&empty, 2.0, None).unwrap(), 0.0);
        assert!(seminorm_p(&g.field, 0.5, None).is_err());
    }

    #[test]
    fn no_coupling_across_the_slit() {
        let region = RegionSpec::slit(RegionKind::OmegaLambda, 2, 0.25).unwrap();
        let window = BBox::new(vec![0.0, -0.25], vec![1.0, 0.25]);
        let h = 1.0 / 256.0;
        let u = grid_sample_window(|x| x[0] + x[1], &region, &window, h).unwrap();
        let mut v = u.clone();
        for i in 0..v.len() {
            if v.mask[i] == SIDE_LOWER {
                v.values[i] += 7.0 * v.cell_center(i)[0].sin();
            }
        }
        let (gu, gv) = (gradient(&u).unwrap(), gradient(&v).unwrap());
        for i in 0..u.len() {
            if u.mask[i] == SIDE_UPPER {
                assert_eq!(gu.field.vector(i), gv.field.vector(i));
            }
        }
    }

    #[test]
    fn projection_examples() {
        let mut f = BoxUnion::new(2);
        f.push(Shape::Box {
            lo: vec![0.0, 0.0],
            hi: vec![0.25, 0.25],
        });
        f.push(Shape::Box {
            lo: vec![0.125, 0.0],
            hi: vec![0.375, 0.25],
        });
        assert!((projection_measure(&f, 2).unwrap() - 0.375).abs() < 1e-15);
        assert_eq!(projection_measure(&BoxUnion::new(2), 1).unwrap(), 0.0);
        assert!(projection_measure(&f, 3).is_err());
    }

    #[test]
    fn projection_grid_three_dimensions() {
        let mut f = BoxUnion::new(3);
        f.push(Shape::Ball {
            center: vec![0.5, 0.5, 0.5],
            radius: 0.25,
        });
        let (v, err) = projection_measure_grid(&f, 3, 1.0 / 512.0).unwrap();
        let exact = std::f64::consts::PI / 16.0;
        assert!((v - exact).abs() <= err + 1e-12, "{v} {exact} {err}");
        assert!((projection_measure(&f, 1).unwrap() - exact).abs() < 1e-3);
    }

    #[test]
    fn energy_check_rejects_missing_level_set() {
        let b = BBox::new(vec![-0.5, -0.5], vec![0.5, 0.5]);
        let f = GridField::tabulate(&b, 1.0 / 64.0, |_| SIDE_FREE, |_| 0.0).unwrap();
        let q = Cube {
            center: vec![0.0, 0.0],
            side: 1.0,
        };
        let err = poincare_energy_check(&q, &BoxUnion::new(2), &f, 0.25, 1.5).unwrap_err();
        assert!(matches!(
            err,
            Error::Precondition {
                clause: "level-set",
                ..
            }
        ));
        let mut big = BoxUnion::new(2);
        big.push(Shape::Box {
            lo: vec![-0.5, -0.5],
            hi: vec![0.5, 0.5],
        });
        let err = poincare_energy_check(&q, &big, &f, 0.25, 1.5).unwrap_err();
        assert!(matches!(
            err,
            Error::Precondition {
                clause: "projection",
                ..
            }
        ));
    }

    #[test]
    fn energy_check_on_a_step() {
        // smooth step from 0 to 1 across x = 0
        let b = BBox::new(vec![-0.5, -0.5], vec![0.5, 0.5]);
        let step = |x: &[f64]| (0.5 + 4.0 * x[0]).clamp(0.0, 1.0);
        let q = Cube {
            center: vec![0.0, 0.0],
            side: 1.0,
        };
        let f1 = GridField::tabulate(&b, 1.0 / 64.0, |_| SIDE_FREE, step).unwrap();
        let f2 = GridField::tabulate(&b, 1.0 / 128.0, |_| SIDE_FREE, step).unwrap();
        let c1 = poincare_energy_check(&q, &BoxUnion::new(2), &f1, 0.2, 1.5).unwrap();
        let c2 = poincare_energy_check(&q, &BoxUnion::new(2), &f2, 0.2, 1.5).unwrap();
        // ∫|∇f|^p = 4^1.5 * (1/4) = 2
        assert!((c1.lhs - 2.0).abs() < 0.1 && (c2.lhs - 2.0).abs() < 0.05);
        assert!(c1.ratio > 0.0);
    }

    #[test]
    fn binary_round_trip() {
        let g = unit_square(0.25, |x| x[0] - x[1]);
        let mut buf = Vec::new();
        write_binary(&g, &mut buf).unwrap();
        assert_eq!(read_binary(buf.as_slice()).unwrap(), g);
        let mut csv = Vec::new();
        write_csv(&g, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 17);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn gradient_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let region = RegionSpec::slit(RegionKind::OmegaLambda, 2, 0.25).unwrap();
                let w = BBox::new(vec![0.0, -0.25], vec![0.5, 0.25]);
                let u = grid_sample_window(|x| x[0] * x[1], &region, &w, 1.0 / 64.0).unwrap();
                let v = grid_sample_window(|x| (3.0 * x[0]).cos(), &region, &w, 1.0 / 64.0).unwrap();
                let lhs = gradient(&u.combine(a, &v, b).unwrap()).unwrap().field;
                let rhs = gradient(&u).unwrap().field.combine(a, &gradient(&v).unwrap().field, b).unwrap();
                for (x, y) in lhs.values.iter().zip(&rhs.values) {
                    prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
                }
            }

            #[test]
            fn seminorm_scales(c in -5.0f64..5.0, p in 1.0f64..3.0) {
                let g = gradient(&unit_square(1.0 / 16.0, |x| x[0] * x[1] + x[0])).unwrap().field;
                let s = seminorm_p(&g, p, None).unwrap();
                let sc = seminorm_p(&g.map(|v| c * v), p, None).unwrap();
                prop_assert!((sc - c.abs() * s).abs() <= 1e-10 * (1.0 + s));
            }

            #[test]
            fn projection_monotone_subadditive(
                boxes in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..0.3, 0.0f64..0.3), 1..8),
                extra in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..0.3),
            ) {
                let mut f1 = BoxUnion::new(2);
                for (x, y, w, h) in boxes {
                    f1.push(Shape::Box { lo: vec![x, y], hi: vec![x + w, y + h] });
                }
                let mut f2 = BoxUnion::new(2);
                f2.push(Shape::Ball { center: vec![extra.0, extra.1], radius: extra.2 });
                let mut both = f1.clone();
                both.members.extend(f2.members.clone());
                for m in 1..=2 {
                    let (a, b, ab) = (
                        projection_measure(&f1, m).unwrap(),
                        projection_measure(&f2, m).unwrap(),
                        projection_measure(&both, m).unwrap(),
                    );
                    prop_assert!(ab + 1e-12 >= a && ab <= a + b + 1e-12);
                }
            }
        }
    }
}
