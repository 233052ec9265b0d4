//! Truncated dyadic Whitney decompositions.
//!
//! Cubes are kept in exact dyadic form `Π [j_i 2^{-k}, (j_i + 1) 2^{-k}]`;
//! every containment, adjacency and face test below is integer arithmetic.

mod chain;
mod family;

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regions::{BBox, RegionKind, RegionSpec};

pub use chain::{chain, claim_count, max_neighbor_chain, ChainConstraint, ChainGraph, ClaimCount, Node};
pub use family::{central_family, reflect_assign, reflect_violations, ReflectMap, ReflectTarget};

/// Relative precision requested from the distance oracle.
const BRACKET_REL: f64 = 0.125;
/// Generations below this are subdivided in parallel.
const PAR_GEN: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub gen: i32,
    pub idx: Vec<i64>,
}

impl DyadicCube {
    pub fn new(gen: i32, idx: Vec<i64>) -> Self {
        Self { gen, idx }
    }

    pub fn dim(&self) -> usize {
        self.idx.len()
    }

    pub fn side(&self) -> f64 {
        (-(self.gen as f64)).exp2()
    }

    pub fn lo(&self) -> Vec<f64> {
        let s = self.side();
        self.idx.iter().map(|&j| j as f64 * s).collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        let s = self.side();
        self.idx.iter().map(|&j| (j + 1) as f64 * s).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let s = self.side();
        self.idx.iter().map(|&j| (j as f64 + 0.5) * s).collect()
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.dim() as i32)
    }

    /// Half of the diagonal.
    pub fn radius(&self) -> f64 {
        (self.dim() as f64).sqrt() * self.side() / 2.0
    }

    pub fn children(&self) -> Vec<DyadicCube> {
        let n = self.dim();
        (0..1usize << n)
            .map(|bits| {
                let idx = self
                    .idx
                    .iter()
                    .enumerate()
                    .map(|(a, &j)| 2 * j + ((bits >> (n - 1 - a)) & 1) as i64)
                    .collect();
                DyadicCube::new(self.gen + 1, idx)
            })
            .collect()
    }

    /// The ancestor at generation `gen ≤ self.gen`.
    pub fn ancestor(&self, gen: i32) -> DyadicCube {
        debug_assert!(gen <= self.gen);
        let s = (self.gen - gen) as u32;
        DyadicCube::new(gen, self.idx.iter().map(|j| j >> s).collect())
    }

    /// Whether the closed cubes intersect.
    pub fn touches(&self, other: &DyadicCube) -> bool {
        let (fine, coarse) = if self.gen >= other.gen {
            (self, other)
        } else {
            (other, self)
        };
        let s = (fine.gen - coarse.gen) as u32;
        fine.idx.iter().zip(&coarse.idx).all(|(&j, &m)| {
            // coarse axis range [m 2^s, (m+1) 2^s] against [j, j+1]
            (m << s) <= j + 1 && ((m + 1) << s) >= j
        })
    }

    /// Whether `self ⊂ other` as closed cubes.
    pub fn is_inside(&self, other: &DyadicCube) -> bool {
        self.gen >= other.gen && self.ancestor(other.gen) == *other
    }

    /// Projection of the first `m` axes of `self` is contained in that of
    /// `other`.
    pub fn projection_inside(&self, other: &DyadicCube, m: usize) -> bool {
        if self.gen < other.gen {
            return false;
        }
        let s = (self.gen - other.gen) as u32;
        self.idx[..m].iter().zip(&other.idx[..m]).all(|(j, o)| j >> s == *o)
    }

    /// Closed-cube distance to another cube.
    pub fn distance(&self, other: &DyadicCube) -> f64 {
        let (alo, ahi, blo, bhi) = (self.lo(), self.hi(), other.lo(), other.hi());
        (0..self.dim())
            .map(|a| {
                let g = (blo[a] - ahi[a]).max(alo[a] - bhi[a]).max(0.0);
                g * g
            })
            .sum::<f64>()
            .sqrt()
    }

    fn center_distance(&self, other: &DyadicCube) -> f64 {
        self.center()
            .iter()
            .zip(other.center())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Resolved,
    Frontier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WCube {
    pub gen: i32,
    pub idx: Vec<i64>,
    pub status: Status,
}

impl WCube {
    pub fn cube(&self) -> DyadicCube {
        DyadicCube::new(self.gen, self.idx.clone())
    }
}

/// The open set being decomposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "side", rename_all = "snake_case")]
pub enum Target {
    /// Interior of `N_λ`.
    Interior { region: RegionSpec },
    /// Complement of `N_λ`, kept where cubes meet `D`.
    Complement { region: RegionSpec },
    /// An open axis-aligned box.
    OpenBox { bbox: BBox },
}

impl Target {
    pub fn dim(&self) -> usize {
        match self {
            Target::Interior { region } | Target::Complement { region } => region.n,
            Target::OpenBox { bbox } => bbox.dim(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Target::Interior { region } => region.in_n_interior(x),
            Target::Complement { region } => !region.contains(x),
            Target::OpenBox { bbox } => x
                .iter()
                .zip(bbox.lo.iter().zip(&bbox.hi))
                .all(|(v, (l, h))| l < v && v < h),
        }
    }

    /// Certified bracket of the distance from `x` to the boundary.
    pub fn bracket(&self, x: &[f64]) -> Result<(f64, f64)> {
        let (lo, hi) = match self {
            Target::Interior { region } | Target::Complement { region } => region.refined_bracket(x, BRACKET_REL),
            Target::OpenBox { bbox } => {
                let d = box_boundary_distance(bbox, x);
                (d, d)
            }
        };
        if !(lo <= hi + 1e-12) {
            return Err(Error::InconsistentBracket {
                point: x.to_vec(),
                lo,
                hi,
            });
        }
        Ok((lo, hi))
    }

    fn roots(&self) -> Vec<DyadicCube> {
        let n = self.dim();
        match self {
            Target::Interior { .. } => [-1i64, 0]
                .iter()
                .map(|&t| {
                    let mut idx = vec![0i64; n - 1];
                    idx.push(t);
                    DyadicCube::new(0, idx)
                })
                .collect(),
            Target::Complement { region } => unit_cubes_over(&region.bbox.inflate(0.25))
                .into_iter()
                .filter(|c| self.keep(c))
                .collect(),
            Target::OpenBox { bbox } => unit_cubes_over(bbox),
        }
    }

    /// Cubes whose interior misses the working domain are dropped.
    fn keep(&self, c: &DyadicCube) -> bool {
        match self {
            Target::Complement { .. } => interior_meets_d(c),
            _ => true,
        }
    }
}

fn box_boundary_distance(bbox: &BBox, x: &[f64]) -> f64 {
    let inside = x
        .iter()
        .zip(bbox.lo.iter().zip(&bbox.hi))
        .all(|(v, (l, h))| l <= v && v <= h);
    if inside {
        x.iter()
            .zip(bbox.lo.iter().zip(&bbox.hi))
            .map(|(v, (l, h))| (v - l).min(h - v))
            .fold(f64::INFINITY, f64::min)
    } else {
        x.iter()
            .zip(bbox.lo.iter().zip(&bbox.hi))
            .map(|(v, (l, h))| {
                let d = (l - v).max(v - h).max(0.0);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn unit_cubes_over(bbox: &BBox) -> Vec<DyadicCube> {
    let ranges: Vec<(i64, i64)> = bbox
        .lo
        .iter()
        .zip(&bbox.hi)
        .map(|(l, h)| (l.floor() as i64, h.ceil() as i64))
        .collect();
    let mut out = vec![Vec::new()];
    for &(a, b) in &ranges {
        out = out
            .into_iter()
            .flat_map(|p: Vec<i64>| {
                (a..b).map(move |j| {
                    let mut q = p.clone();
                    q.push(j);
                    q
                })
            })
            .collect();
    }
    out.into_iter().map(|idx| DyadicCube::new(0, idx)).collect()
}

/// Whether the open cube meets `D = (0,1)^{n−2} × ((−2,1)×(−3/2,3/2) \ [−1,0]×[−1,1])`.
fn interior_meets_d(c: &DyadicCube) -> bool {
    let n = c.dim();
    let (lo, hi) = (c.lo(), c.hi());
    let mut olo = vec![0.0; n - 2];
    let mut ohi = vec![1.0; n - 2];
    olo.extend([-2.0, -1.5]);
    ohi.extend([1.0, 1.5]);
    // open intersection with the outer box
    let ilo: Vec<f64> = (0..n).map(|a| lo[a].max(olo[a])).collect();
    let ihi: Vec<f64> = (0..n).map(|a| hi[a].min(ohi[a])).collect();
    if (0..n).any(|a| ilo[a] >= ihi[a]) {
        return false;
    }
    // not swallowed by the removed closed rectangle
    let (rlo, rhi) = ([-1.0, -1.0], [0.0, 1.0]);
    !(0..2).all(|a| ilo[n - 2 + a] >= rlo[a] && ihi[n - 2 + a] <= rhi[a])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WhitneyDecomposition {
    pub target: Target,
    pub max_gen: i32,
    /// Sorted by `(gen, idx)`; positions are the cube ids.
    pub cubes: Vec<WCube>,
    /// Neighbours (closed-cube intersection) among resolved cubes, ascending.
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
    #[serde(skip)]
    index: HashMap<DyadicCube, usize>,
}

/// Decompose `int N_λ` (for an `N_lambda` spec) or the complement of `N_λ`
/// inside `D` (for a `D` or `Omega_lambda` spec).
pub fn whitney_decompose(region: &RegionSpec, max_gen: i32) -> Result<WhitneyDecomposition> {
    let target = match region.kind {
        RegionKind::NLambda => Target::Interior { region: region.clone() },
        RegionKind::OmegaLambda | RegionKind::D => Target::Complement {
            region: region.with_kind(RegionKind::NLambda)?,
        },
        other => {
            return Err(Error::Unsupported(format!(
                "no certified distance oracle for {other:?}"
            )))
        }
    };
    decompose(target, max_gen)
}

pub fn decompose(target: Target, max_gen: i32) -> Result<WhitneyDecomposition> {
    if max_gen < 4 {
        return Err(Error::invalid("max_gen must be at least 4"));
    }
    if let Target::OpenBox { bbox } = &target {
        if bbox.lo.iter().zip(&bbox.hi).any(|(l, h)| !(l < h)) {
            return Ok(WhitneyDecomposition::assemble(target, max_gen, Vec::new()));
        }
    }
    let roots = target.roots();
    let parts = roots
        .par_iter()
        .map(|r| visit(&target, r, max_gen))
        .collect::<Result<Vec<_>>>()?;
    let cubes = parts.into_iter().flatten().collect();
    Ok(WhitneyDecomposition::assemble(target, max_gen, cubes))
}

fn visit(target: &Target, cube: &DyadicCube, max_gen: i32) -> Result<Vec<WCube>> {
    let c = cube.center();
    let rho = cube.radius();
    let diag = 2.0 * rho;
    let inside = target.contains(&c);
    let (lo, hi) = target.bracket(&c)?;
    let wc = |status| WCube {
        gen: cube.gen,
        idx: cube.idx.clone(),
        status,
    };
    if !inside && lo >= rho {
        return Ok(Vec::new());
    }
    if inside && lo - rho >= diag {
        if hi <= 4.0 * diag {
            return Ok(vec![wc(Status::Resolved)]);
        }
        // too small for its distance; a coarser cube was rejected by slack
        return Ok(vec![wc(Status::Frontier)]);
    }
    if cube.gen >= max_gen {
        return Ok(if inside { vec![wc(Status::Frontier)] } else { Vec::new() });
    }
    let children: Vec<DyadicCube> = cube.children().into_iter().filter(|k| target.keep(k)).collect();
    let parts = if cube.gen < PAR_GEN {
        children
            .par_iter()
            .map(|k| visit(target, k, max_gen))
            .collect::<Result<Vec<_>>>()?
    } else {
        children
            .iter()
            .map(|k| visit(target, k, max_gen))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(parts.into_iter().flatten().collect())
}

fn floor_shift(j: i64, s: u32) -> i64 {
    j >> s
}

fn ceil_shift(j: i64, s: u32) -> i64 {
    -((-j) >> s)
}

impl WhitneyDecomposition {
    fn assemble(target: Target, max_gen: i32, mut cubes: Vec<WCube>) -> Self {
        cubes.sort_by(|a, b| (a.gen, &a.idx).cmp(&(b.gen, &b.idx)));
        let mut dec = Self {
            target,
            max_gen,
            cubes,
            adjacency: Vec::new(),
            index: HashMap::new(),
        };
        dec.rebuild();
        dec
    }

    /// Rebuild the lookup index and adjacency, e.g. after deserialising.
    pub fn rebuild(&mut self) {
        self.index = self.cubes.iter().enumerate().map(|(i, c)| (c.cube(), i)).collect();
        let mut adj = vec![Vec::new(); self.cubes.len()];
        for (i, wc) in self.cubes.iter().enumerate() {
            if wc.status != Status::Resolved {
                continue;
            }
            for j in self.touching_coarser(&wc.cube()) {
                if j != i && self.cubes[j].status == Status::Resolved {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        self.adjacency = adj;
    }

    /// Ids of cubes of generation `≤ cube.gen` whose closure meets `cube`.
    fn touching_coarser(&self, cube: &DyadicCube) -> Vec<usize> {
        let n = cube.dim();
        let mut out = Vec::new();
        let min_gen = self.cubes.first().map_or(0, |c| c.gen);
        for g in min_gen..=cube.gen {
            let s = (cube.gen - g) as u32;
            let ranges: Vec<(i64, i64)> = cube
                .idx
                .iter()
                .map(|&j| (ceil_shift(j, s) - 1, floor_shift(j + 1, s)))
                .collect();
            let mut probe = vec![0i64; n];
            enumerate_box(&ranges, 0, &mut probe, &mut |idx| {
                if let Some(&id) = self.index.get(&DyadicCube::new(g, idx.to_vec())) {
                    out.push(id);
                }
            });
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn id_of(&self, cube: &DyadicCube) -> Option<usize> {
        self.index.get(cube).copied()
    }

    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.adjacency[id]
    }

    pub fn resolved(&self) -> impl Iterator<Item = (usize, &WCube)> {
        self.cubes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.status == Status::Resolved)
    }

    pub fn is_resolved(&self, id: usize) -> bool {
        self.cubes[id].status == Status::Resolved
    }

    pub fn frontier_count(&self) -> usize {
        self.cubes.iter().filter(|c| c.status == Status::Frontier).count()
    }

    /// Resolved cube containing `x` (closed cubes; the finest wins).
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let lo_gen = self.cubes.first()?.gen;
        let hi_gen = self.cubes.last()?.gen;
        for g in (lo_gen..=hi_gen).rev() {
            let scale = (g as f64).exp2();
            let idx: Vec<i64> = x.iter().map(|v| (v * scale).floor() as i64).collect();
            if let Some(&id) = self.index.get(&DyadicCube::new(g, idx)) {
                if self.is_resolved(id) {
                    return Some(id);
                }
            }
        }
        None
    }

    /// Insert a cube without any checks; for fault-injection tests of
    /// [`verify_whitney`].
    pub fn inject(&mut self, cube: DyadicCube, status: Status) {
        self.cubes.push(WCube {
            gen: cube.gen,
            idx: cube.idx,
            status,
        });
        self.cubes.sort_by(|a, b| (a.gen, &a.idx).cmp(&(b.gen, &b.idx)));
        self.rebuild();
    }

    /// Cube counts per generation, split by status.
    pub fn generation_counts(&self) -> Vec<(i32, usize, usize)> {
        let mut map: std::collections::BTreeMap<i32, (usize, usize)> = Default::default();
        for c in &self.cubes {
            let e = map.entry(c.gen).or_default();
            match c.status {
                Status::Resolved => e.0 += 1,
                Status::Frontier => e.1 += 1,
            }
        }
        map.into_iter().map(|(g, (r, f))| (g, r, f)).collect()
    }
}

fn enumerate_box(ranges: &[(i64, i64)], axis: usize, probe: &mut Vec<i64>, f: &mut impl FnMut(&[i64])) {
    if axis == ranges.len() {
        f(probe);
        return;
    }
    for j in ranges[axis].0..=ranges[axis].1 {
        probe[axis] = j;
        enumerate_box(ranges, axis + 1, probe, f);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub resolved: usize,
    pub frontier: usize,
    pub frontier_fraction: f64,
    pub w1: usize,
    pub w2: usize,
    pub w3: usize,
    pub w4: usize,
    /// Complement cubes whose interior crosses a face of the unit slab.
    pub slab_faces: usize,
}

impl VerifyReport {
    pub fn clean(&self) -> bool {
        self.w1 + self.w2 + self.w3 + self.w4 + self.slab_faces == 0
    }
}

/// Count W1–W4 violations. Frontier cubes only take part in the overlap
/// (W2) check.
pub fn verify_whitney(dec: &WhitneyDecomposition) -> VerifyReport {
    let n = dec.dim();
    let sqrt_n = (n as f64).sqrt();
    let mut rep = VerifyReport {
        frontier: dec.frontier_count(),
        ..Default::default()
    };
    rep.resolved = dec.cubes.len() - rep.frontier;
    rep.frontier_fraction = if dec.cubes.is_empty() {
        0.0
    } else {
        rep.frontier as f64 / dec.cubes.len() as f64
    };
    let all: HashSet<DyadicCube> = dec.cubes.iter().map(|c| c.cube()).collect();
    let results: Vec<(usize, usize, usize, usize, usize)> = dec
        .cubes
        .par_iter()
        .enumerate()
        .map(|(id, wc)| {
            let cube = wc.cube();
            let min_gen = dec.cubes[0].gen;
            let w2 = (min_gen..cube.gen).any(|g| all.contains(&cube.ancestor(g))) as usize;
            if wc.status != Status::Resolved {
                return (0, w2, 0, 0, 0);
            }
            let c = cube.center();
            let rho = cube.radius();
            let l = cube.side();
            let (lo, hi) = dec.target.bracket(&c).unwrap_or((0.0, f64::INFINITY));
            let w1 = (!dec.target.contains(&c) || hi < l / 2.0) as usize;
            let (dlo, dhi) = ((lo - rho).max(0.0), hi);
            let w3 = !(dlo <= 4.0 * sqrt_n * l && dhi >= sqrt_n * l) as usize;
            let w4 = dec.adjacency[id]
                .iter()
                .filter(|&&j| (dec.cubes[j].gen - wc.gen).abs() > 2)
                .count();
            let slab = match dec.target {
                Target::Complement { .. } => crosses_slab_face(&cube) as usize,
                _ => 0,
            };
            (w1, w2, w3, w4, slab)
        })
        .collect();
    for (w1, w2, w3, w4, slab) in results {
        rep.w1 += w1;
        rep.w2 += w2;
        rep.w3 += w3;
        rep.w4 += w4;
        rep.slab_faces += slab;
    }
    // each bad edge was seen from both ends
    rep.w4 /= 2;
    rep
}

/// Whether the open cube meets a face of `[0,1]^{n−1} × [−1,1]`.
fn crosses_slab_face(c: &DyadicCube) -> bool {
    let n = c.dim();
    let s = c.gen;
    // faces are integer hyperplanes; a cube of side ≤ 1 has one strictly
    // inside only when gen < 0
    if s >= 0 {
        return false;
    }
    let (lo, hi) = (c.lo(), c.hi());
    let bounds: Vec<(f64, f64)> = (0..n)
        .map(|a| if a + 1 == n { (-1.0, 1.0) } else { (0.0, 1.0) })
        .collect();
    (0..n).any(|a| {
        let inside_others = (0..n)
            .filter(|&b| b != a)
            .all(|b| lo[b] < bounds[b].1 && hi[b] > bounds[b].0);
        inside_others && [bounds[a].0, bounds[a].1].iter().any(|&p| lo[a] < p && p < hi[a])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(max_gen: i32) -> WhitneyDecomposition {
        decompose(
            Target::OpenBox {
                bbox: BBox::new(vec![0.0, 0.0], vec![1.0, 1.0]),
            },
            max_gen,
        )
        .unwrap()
    }

    #[test]
    fn dyadic_arithmetic() {
        let a = DyadicCube::new(2, vec![1, 1]);
        let b = DyadicCube::new(3, vec![4, 2]);
        assert!(a.touches(&b));
        assert!(!a.touches(&DyadicCube::new(3, vec![5, 6])));
        assert!(DyadicCube::new(3, vec![3, 3]).is_inside(&a));
        assert_eq!(
            DyadicCube::new(3, vec![-1, 5]).ancestor(1),
            DyadicCube::new(1, vec![-1, 1])
        );
        assert_eq!(ceil_shift(-3, 1), -1);
        assert_eq!(floor_shift(-3, 1), -2);
        assert!(a.touches(&DyadicCube::new(2, vec![2, 2])));
        assert!(!a.touches(&DyadicCube::new(2, vec![3, 1])));
    }

    #[test]
    fn unit_square_is_clean_and_covers() {
        let dec = unit_square(6);
        let rep = verify_whitney(&dec);
        assert!(rep.clean(), "{rep:?}");
        let d0 = 8.0 * 2f64.sqrt() / 64.0;
        let steps = 200;
        for i in 0..steps {
            for j in 0..steps {
                let x = [(i as f64 + 0.5) / steps as f64, (j as f64 + 0.5) / steps as f64];
                let d = x.iter().map(|v| v.min(1.0 - v)).fold(f64::INFINITY, f64::min);
                if d > d0 {
                    assert!(dec.locate(&x).is_some(), "{x:?} uncovered");
                }
            }
        }
    }

    #[test]
    fn empty_region_gives_empty_list() {
        let dec = decompose(
            Target::OpenBox {
                bbox: BBox::new(vec![0.0, 0.0], vec![1.0, 0.0]),
            },
            6,
        )
        .unwrap();
        assert!(dec.is_empty());
    }

    #[test]
    fn planted_w4_fault_is_counted() {
        let mut dec = unit_square(6);
        // replace the cubes around a corner of a big cube with a tiny one
        let big = dec.resolved().map(|(_, c)| c.cube()).next().unwrap();
        let corner_gen = big.gen + 3;
        let s = 1i64 << 3;
        let idx: Vec<i64> = big.idx.iter().map(|j| (j + 1) * s).collect();
        let tiny = DyadicCube::new(corner_gen, idx);
        // remove everything overlapping the tiny cube so W2 stays quiet
        dec.cubes.retain(|c| {
            let c = c.cube();
            !(tiny.is_inside(&c) || c.is_inside(&tiny))
        });
        dec.inject(tiny.clone(), Status::Resolved);
        let rep = verify_whitney(&dec);
        let expected = dec
            .neighbors(dec.id_of(&tiny).unwrap())
            .iter()
            .filter(|&&j| (dec.cubes[j].gen - tiny.gen).abs() > 2)
            .count();
        assert!(expected >= 1);
        assert_eq!(rep.w4, expected);
    }

    #[test]
    fn n_lambda_decomposition_is_clean() {
        let spec = RegionSpec::slit(RegionKind::NLambda, 2, 0.25).unwrap();
        let dec = whitney_decompose(&spec, 8).unwrap();
        let rep = verify_whitney(&dec);
        assert!(rep.clean(), "{rep:?}");
        assert!(rep.resolved > 100);
    }

    #[test]
    fn complement_decomposition_is_clean() {
        let spec = RegionSpec::slit(RegionKind::OmegaLambda, 2, 0.25).unwrap();
        let dec = whitney_decompose(&spec, 7).unwrap();
        let rep = verify_whitney(&dec);
        assert!(rep.clean(), "{rep:?}");
        // no cube lies entirely in the removed rectangle
        for (_, c) in dec.resolved() {
            assert!(interior_meets_d(&c.cube()));
        }
    }

    #[test]
    fn rejects_regions_without_oracle() {
        let spec = RegionSpec::omega2(2, 6).unwrap();
        assert!(whitney_decompose(&spec, 6).is_err());
        let spec = RegionSpec::slit(RegionKind::NLambda, 2, 0.25).unwrap();
        assert!(whitney_decompose(&spec, 3).is_err());
    }
}
