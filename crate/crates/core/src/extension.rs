//! The reflection extension operator into `N_λ`, its test functions and
//! the closed-form bound formulas.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{energy_p, gradient, GridField};
use crate::regions::{BBox, ComponentMap, RegionKind, RegionSpec, SIDE_FREE};
use crate::whitney::{
    reflect_assign, whitney_decompose, DyadicCube, ReflectMap, ReflectTarget, Target, WhitneyDecomposition,
};

/// Bumps reach `ℓ/16` past each face, i.e. they live on `(9/8)Q`.
const SPREAD: f64 = 1.0 / 16.0;

/// `C¹` cubic falloff: 1 at `t = 0`, 0 for `t ≥ 1`.
fn falloff(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 - t * t * (3.0 - 2.0 * t)
    }
}

fn falloff_deriv(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        -6.0 * t * (1.0 - t)
    }
}

/// Raw bump of a cube and its gradient at `x`.
fn bump(cube: &DyadicCube, x: &[f64]) -> (f64, Vec<f64>) {
    let l = cube.side();
    let w = SPREAD * l;
    let (lo, hi) = (cube.lo(), cube.hi());
    let n = x.len();
    let mut vals = vec![0.0; n];
    let mut ders = vec![0.0; n];
    for a in 0..n {
        let (d, sign) = if x[a] < lo[a] {
            (lo[a] - x[a], -1.0)
        } else if x[a] > hi[a] {
            (x[a] - hi[a], 1.0)
        } else {
            (0.0, 0.0)
        };
        vals[a] = falloff(d / w);
        ders[a] = sign * falloff_deriv(d / w) / w;
    }
    let phi: f64 = vals.iter().product();
    let grad = (0..n)
        .map(|a| ders[a] * (0..n).filter(|&b| b != a).map(|b| vals[b]).product::<f64>())
        .collect();
    (phi, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnassignedPolicy {
    /// Fail when an unassigned cube reaches the requested window.
    Error,
    /// Drop unassigned cubes from the partition.
    Exclude,
}

/// The partition `ψ_i = φ_i / Σ_j φ_j` over resolved cubes of `W`.
pub struct PartitionOfUnity<'a> {
    w: &'a WhitneyDecomposition,
    skip: Vec<bool>,
    gens: (i32, i32),
}

impl<'a> PartitionOfUnity<'a> {
    pub fn new(w: &'a WhitneyDecomposition) -> Self {
        Self::with_skip(w, vec![false; w.len()])
    }

    fn with_skip(w: &'a WhitneyDecomposition, skip: Vec<bool>) -> Self {
        let gens = (
            w.cubes.first().map_or(0, |c| c.gen),
            w.cubes.last().map_or(-1, |c| c.gen),
        );
        Self { w, skip, gens }
    }

    /// Resolved cubes whose enlarged cube contains `x`, with `φ_i(x)`.
    pub fn weights(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let n = x.len();
        let mut out = Vec::new();
        for g in self.gens.0..=self.gens.1 {
            let scale = (g as f64).exp2();
            let mut axes: Vec<Vec<i64>> = Vec::with_capacity(n);
            for v in x {
                let s = v * scale;
                let j = s.floor();
                let frac = s - j;
                let j = j as i64;
                let mut opts = vec![j];
                if frac < SPREAD {
                    opts.push(j - 1);
                }
                if frac > 1.0 - SPREAD {
                    opts.push(j + 1);
                }
                // a point on a grid line also sits on the closed cube below
                if frac == 0.0 && !opts.contains(&(j - 1)) {
                    opts.push(j - 1);
                }
                axes.push(opts);
            }
            let mut idx = vec![0i64; n];
            self.collect(g, &axes, 0, &mut idx, x, &mut out);
        }
        out.sort_unstable_by_key(|p| p.0);
        out.dedup_by_key(|p| p.0);
        out
    }

    fn collect(&self, g: i32, axes: &[Vec<i64>], a: usize, idx: &mut Vec<i64>, x: &[f64], out: &mut Vec<(usize, f64)>) {
        if a == axes.len() {
            let cube = DyadicCube::new(g, idx.clone());
            if let Some(id) = self.w.id_of(&cube) {
                if self.w.is_resolved(id) && !self.skip[id] {
                    let (phi, _) = bump(&cube, x);
                    if phi > 0.0 {
                        out.push((id, phi));
                    }
                }
            }
            return;
        }
        for &j in &axes[a] {
            idx[a] = j;
            self.collect(g, axes, a + 1, idx, x, out);
        }
    }

    /// `ψ_i(x)` for all `i` with nonzero weight, provided `x` is covered.
    pub fn psi(&self, x: &[f64]) -> Option<Vec<(usize, f64)>> {
        if !self.covered(x) {
            return None;
        }
        let ws = self.weights(x);
        let total: f64 = ws.iter().map(|p| p.1).sum();
        Some(ws.into_iter().map(|(i, p)| (i, p / total)).collect())
    }

    /// Whether `x` lies in a resolved (non-skipped) cube.
    pub fn covered(&self, x: &[f64]) -> bool {
        match self.w.locate(x) {
            Some(id) => !self.skip[id],
            None => false,
        }
    }

    /// `|∇ψ_i(x)|` by the quotient rule.
    pub fn grad_psi_norm(&self, i: usize, x: &[f64]) -> f64 {
        let n = x.len();
        let ws = self.weights(x);
        let total: f64 = ws.iter().map(|p| p.1).sum();
        if total == 0.0 {
            return 0.0;
        }
        let mut grad_total = vec![0.0; n];
        let mut own = (0.0, vec![0.0; n]);
        for &(j, _) in &ws {
            let (phi, g) = bump(&self.w.cubes[j].cube(), x);
            for a in 0..n {
                grad_total[a] += g[a];
            }
            if j == i {
                own = (phi, g);
            }
        }
        (0..n)
            .map(|a| {
                let d = own.1[a] / total - own.0 * grad_total[a] / (total * total);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Per generation, `max |∇ψ_i|·ℓ(Q_i)` over up to `per_gen` cubes
    /// sampled on a lattice of spacing `ℓ(Q_i)/64` over the covered part of
    /// `(9/8)Q_i`.
    pub fn gradient_constants(&self, per_gen: usize) -> Vec<(i32, f64)> {
        let mut by_gen: std::collections::BTreeMap<i32, Vec<usize>> = Default::default();
        for (id, c) in self.w.resolved() {
            by_gen.entry(c.gen).or_default().push(id);
        }
        by_gen
            .into_iter()
            .map(|(g, ids)| {
                let stride = (ids.len() / per_gen.max(1)).max(1);
                let picked: Vec<usize> = ids.into_iter().step_by(stride).take(per_gen).collect();
                let best = picked
                    .par_iter()
                    .map(|&i| {
                        let cube = self.w.cubes[i].cube();
                        let l = cube.side();
                        let lo: Vec<f64> = cube.lo().iter().map(|v| v - SPREAD * l).collect();
                        let steps = 72usize;
                        let n = lo.len();
                        let mut best: f64 = 0.0;
                        for flat in 0..steps.pow(n as u32) {
                            let mut rem = flat;
                            let mut x = vec![0.0; n];
                            for a in (0..n).rev() {
                                x[a] = lo[a] + ((rem % steps) as f64 + 0.5) * l / 64.0;
                                rem /= steps;
                            }
                            if self.covered(&x) {
                                best = best.max(self.grad_psi_norm(i, &x) * l);
                            }
                        }
                        best
                    })
                    .reduce(|| 0.0, f64::max);
                (g, best)
            })
            .collect()
    }
}

/// Something `E` can average: a tabulated field or an analytic function on
/// a virtual grid.
pub trait Source: Sync {
    fn dim(&self) -> usize;
    /// Mean over source cells whose centres lie in the closed box.
    fn box_mean(&self, lo: &[f64], hi: &[f64]) -> Result<f64>;
    /// Mean over source cells whose centres lie in `Q̃₀`.
    fn q0_mean(&self) -> Result<f64>;
    /// Value at a point of `Ω_λ`.
    fn value_at(&self, x: &[f64]) -> Option<f64>;
}

/// A field tabulated on `Ω_λ` (mask nonzero on region cells).
pub struct GridSource<'a> {
    pub field: &'a GridField,
    q0: RegionSpec,
}

impl<'a> GridSource<'a> {
    pub fn new(field: &'a GridField, region: &RegionSpec) -> Result<Self> {
        Ok(Self {
            field,
            q0: region.with_kind(RegionKind::Q0Tilde)?,
        })
    }

    fn mean_where(&self, pred: impl Fn(&[f64]) -> bool + Sync, what: String) -> Result<f64> {
        let f = self.field;
        let picked: Vec<f64> = (0..f.len())
            .into_par_iter()
            .filter(|&i| f.mask[i] != 0 && pred(&f.cell_center(i)))
            .map(|i| f.value(i))
            .collect();
        if picked.is_empty() {
            return Err(Error::EmptyAverage(what));
        }
        // deviations from a base value keep constant inputs exact
        let base = picked[0];
        let dev: Vec<f64> = picked.iter().map(|v| v - base).collect();
        Ok(base + crate::stats::pairwise_sum(&dev) / picked.len() as f64)
    }
}

impl Source for GridSource<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn box_mean(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        let b = BBox::new(lo.to_vec(), hi.to_vec());
        self.mean_where(|c| b.contains(c), format!("box {lo:?}..{hi:?}"))
    }

    fn q0_mean(&self) -> Result<f64> {
        self.mean_where(|c| self.q0.contains(c), "Q0".into())
    }

    fn value_at(&self, x: &[f64]) -> Option<f64> {
        let i = self.field.locate(x)?;
        (self.field.mask[i] != 0).then(|| self.field.value(i))
    }
}

/// An analytic function restricted to `Ω_λ`, averaged on the virtual grid
/// of cells `Π [j_a h, (j_a + 1) h]`.
pub struct AnalyticSource<F> {
    pub f: F,
    pub region: RegionSpec,
    pub h: f64,
    /// Spacing used for the (large) `Q̃₀` average.
    pub q0_h: f64,
}

impl<F: Fn(&[f64]) -> f64 + Sync> AnalyticSource<F> {
    pub fn new(f: F, region: &RegionSpec, h: f64) -> Result<Self> {
        if region.kind != RegionKind::OmegaLambda {
            return Err(Error::invalid("analytic sources live on Omega_lambda"));
        }
        if !(h > 0.0) {
            return Err(Error::invalid("grid spacing must be positive"));
        }
        Ok(Self {
            f,
            region: region.clone(),
            h,
            q0_h: h,
        })
    }

    pub fn with_q0_spacing(mut self, q0_h: f64) -> Self {
        self.q0_h = q0_h;
        self
    }

    fn mean_over(&self, lo: &[f64], hi: &[f64], h: f64, pred: impl Fn(&[f64]) -> bool + Sync) -> Option<f64> {
        let n = lo.len();
        let ranges: Vec<(i64, i64)> = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| ((a / h - 0.5).ceil() as i64, (b / h - 0.5).floor() as i64))
            .collect();
        if ranges.iter().any(|(a, b)| a > b) {
            return None;
        }
        // deviations from a base value keep constant inputs exact
        let base = (self.f)(lo);
        let first = ranges[0];
        let rows: Vec<(f64, usize)> = (first.0..=first.1)
            .into_par_iter()
            .map(|j0| {
                let mut sum = Vec::new();
                let mut x = vec![0.0; n];
                x[0] = (j0 as f64 + 0.5) * h;
                let mut idx: Vec<i64> = ranges[1..].iter().map(|r| r.0).collect();
                loop {
                    for a in 1..n {
                        x[a] = (idx[a - 1] as f64 + 0.5) * h;
                    }
                    if pred(&x) {
                        sum.push((self.f)(&x) - base);
                    }
                    // odometer over the remaining axes
                    let mut a = n - 1;
                    loop {
                        if a == 0 {
                            let count = sum.len();
                            return (crate::stats::pairwise_sum(&sum), count);
                        }
                        idx[a - 1] += 1;
                        if idx[a - 1] <= ranges[a].1 {
                            break;
                        }
                        idx[a - 1] = ranges[a].0;
                        a -= 1;
                    }
                }
            })
            .collect();
        let count: usize = rows.iter().map(|r| r.1).sum();
        let sums: Vec<f64> = rows.iter().map(|r| r.0).collect();
        (count > 0).then(|| base + crate::stats::pairwise_sum(&sums) / count as f64)
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Source for AnalyticSource<F> {
    fn dim(&self) -> usize {
        self.region.n
    }

    fn box_mean(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        self.mean_over(lo, hi, self.h, |x| self.region.contains(x))
            .ok_or_else(|| Error::EmptyAverage(format!("box {lo:?}..{hi:?}")))
    }

    fn q0_mean(&self) -> Result<f64> {
        let q0 = self.region.with_kind(RegionKind::Q0Tilde)?;
        let b = &self.region.bbox;
        self.mean_over(&b.lo, &b.hi, self.q0_h, |x| q0.contains(x))
            .ok_or_else(|| Error::EmptyAverage("Q0".into()))
    }

    fn value_at(&self, x: &[f64]) -> Option<f64> {
        self.region.contains(x).then(|| (self.f)(x))
    }
}

/// Mean of the source over a complement cube or over `Q̃₀`.
pub fn cube_average(source: &dyn Source, wt: &WhitneyDecomposition, target: ReflectTarget) -> Result<f64> {
    match target {
        ReflectTarget::Q0 => source.q0_mean(),
        ReflectTarget::Cube(j) => {
            let c = wt.cubes[j].cube();
            source.box_mean(&c.lo(), &c.hi())
        }
    }
}

/// Whitney data for the operator on one `Ω_λ`.
pub struct ExtensionSetup {
    pub omega: RegionSpec,
    pub n_region: RegionSpec,
    pub w: WhitneyDecomposition,
    pub wt: WhitneyDecomposition,
    pub map: ReflectMap,
}

impl ExtensionSetup {
    pub fn new(n: usize, lambda: f64, max_gen: i32) -> Result<Self> {
        let omega = RegionSpec::slit(RegionKind::OmegaLambda, n, lambda)?;
        let n_region = omega.with_kind(RegionKind::NLambda)?;
        let (w, wt) = rayon::join(
            || whitney_decompose(&n_region, max_gen),
            || whitney_decompose(&omega, max_gen),
        );
        let (w, wt) = (w?, wt?);
        let map = reflect_assign(&w, &wt)?;
        Ok(Self {
            omega,
            n_region,
            w,
            wt,
            map,
        })
    }

    /// Compute the averages `a_i` from a source.
    pub fn assemble(&self, source: &dyn Source, policy: UnassignedPolicy) -> Result<Assembly<'_>> {
        if source.dim() != self.omega.n {
            return Err(Error::DimensionMismatch {
                expected: self.omega.n,
                got: source.dim(),
            });
        }
        let q0 = source.q0_mean()?;
        let mut needed: Vec<usize> = self
            .map
            .targets
            .iter()
            .filter_map(|t| match t {
                Some(ReflectTarget::Cube(j)) => Some(*j),
                _ => None,
            })
            .collect();
        needed.sort_unstable();
        needed.dedup();
        let means: HashMap<usize, f64> = needed
            .par_iter()
            .map(|&j| cube_average(source, &self.wt, ReflectTarget::Cube(j)).map(|m| (j, m)))
            .collect::<Result<_>>()?;
        let a = self
            .map
            .targets
            .iter()
            .map(|t| match t {
                Some(ReflectTarget::Q0) => Some(q0),
                Some(ReflectTarget::Cube(j)) => Some(means[j]),
                None => None,
            })
            .collect();
        let skip = match policy {
            UnassignedPolicy::Exclude => self.map.targets.iter().map(|t| t.is_none()).collect(),
            UnassignedPolicy::Error => vec![false; self.w.len()],
        };
        Ok(Assembly {
            setup: self,
            a,
            pou: PartitionOfUnity::with_skip(&self.w, skip),
            policy,
        })
    }
}

pub struct Assembly<'a> {
    pub setup: &'a ExtensionSetup,
    /// `a_i` per interior cube id (`None` when unassigned or frontier).
    pub a: Vec<Option<f64>>,
    pub pou: PartitionOfUnity<'a>,
    policy: UnassignedPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    /// Source values on `Ω_λ` plus `Eu` on `N_λ`.
    Full,
    /// Only the covered `N_λ` cells.
    InteriorOnly,
}

impl Assembly<'_> {
    /// `Σ a_i ψ_i(x)` at a covered point of `int N_λ`.
    pub fn eval_n(&self, x: &[f64]) -> Option<f64> {
        let ws = self.pou.psi(x)?;
        let (mut acc, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
        for (i, psi) in ws {
            let a = self.a[i]?;
            acc += a * psi;
            lo = lo.min(a);
            hi = hi.max(a);
        }
        // rounding guard: a convex combination stays within its extremes
        Some(acc.clamp(lo, hi))
    }

    fn check_window(&self, window: &BBox) -> Result<()> {
        if self.policy == UnassignedPolicy::Exclude {
            return Ok(());
        }
        let hits: Vec<usize> = self
            .setup
            .map
            .unassigned
            .iter()
            .copied()
            .filter(|&i| {
                let c = self.setup.w.cubes[i].cube();
                let s = SPREAD * c.side();
                let (lo, hi) = (c.lo(), c.hi());
                (0..lo.len()).all(|a| lo[a] - s < window.hi[a] && hi[a] + s > window.lo[a])
            })
            .collect();
        if hits.is_empty() {
            Ok(())
        } else {
            Err(Error::Unassigned(hits))
        }
    }

    /// Tabulate `Eu` on a window. `Ω_λ` cells carry the source value and
    /// their slit side; covered `N_λ` cells carry `Σ a_i ψ_i` and are free;
    /// everything else (including centres on `∂N_λ`) is masked out with
    /// value 0.
    pub fn extend(&self, source: &dyn Source, window: &BBox, h: f64, part: Part) -> Result<GridField> {
        self.check_window(window)?;
        let omega = &self.setup.omega;
        let nreg = &self.setup.n_region;
        let mut g = GridField::empty(window, h)?;
        let cells: Vec<(u8, f64)> = (0..g.len())
            .into_par_iter()
            .map(|i| {
                let x = g.cell_center(i);
                if omega.contains(&x) {
                    if part == Part::InteriorOnly {
                        return (0, 0.0);
                    }
                    return match source.value_at(&x) {
                        Some(v) => (crate::fields::region_label(omega, &x), v),
                        None => (0, 0.0),
                    };
                }
                if nreg.in_n_interior(&x) {
                    return match self.eval_n(&x) {
                        Some(v) => (SIDE_FREE, v),
                        None => (0, 0.0),
                    };
                }
                // centres on the null set ∂N_λ stay out of the discrete domain
                (0, 0.0)
            })
            .collect();
        for (i, (m, v)) in cells.into_iter().enumerate() {
            g.mask[i] = m;
            g.values[i] = v;
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Upper,
    Lower,
}

/// `u(x) = max(0, min(1, 3 − |x − x₀|/r))` on the component `Ω₁` of
/// `Ω ∩ B(x₀, 3r)` picked by the selector, 0 elsewhere.
pub struct JumpFunction {
    pub x0: Vec<f64>,
    pub r: f64,
    pub region: RegionSpec,
    map: ComponentMap,
    label: u32,
}

impl JumpFunction {
    pub fn new(region: &RegionSpec, x0: &[f64], r: f64, selector: Selector) -> Result<Self> {
        if region.kind != RegionKind::OmegaLambda {
            return Err(Error::invalid("jump functions live on Omega_lambda"));
        }
        let map = region.component_label(x0, 3.0 * r, r / 64.0)?;
        let mut probe = x0.to_vec();
        let n = probe.len();
        probe[n - 1] += match selector {
            Selector::Upper => 2.5 * r,
            Selector::Lower => -2.5 * r,
        };
        let label = map
            .label_of_point(&probe)
            .ok_or_else(|| Error::invalid("selector matches no component"))?;
        Ok(Self {
            x0: x0.to_vec(),
            r,
            region: region.clone(),
            map,
            label,
        })
    }

    fn in_component(&self, x: &[f64]) -> bool {
        self.map.label_near(&self.region, x) == Some(self.label)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = x
            .iter()
            .zip(&self.x0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if d >= 3.0 * self.r || !self.region.contains(x) || !self.in_component(x) {
            return 0.0;
        }
        (3.0 - d / self.r).clamp(0.0, 1.0)
    }

    /// Bounding box of the support, clipped to the region's box and snapped
    /// outward to multiples of `h`.
    pub fn support_window(&self, h: f64) -> BBox {
        let b = &self.region.bbox;
        let snap_lo = |v: f64| (v / h).floor() * h;
        let snap_hi = |v: f64| (v / h).ceil() * h;
        let lo = self
            .x0
            .iter()
            .zip(&b.lo)
            .map(|(c, l)| snap_lo((c - 3.0 * self.r).max(*l)))
            .collect();
        let hi = self
            .x0
            .iter()
            .zip(&b.hi)
            .map(|(c, u)| snap_hi((c + 3.0 * self.r).min(*u)))
            .collect();
        BBox::new(lo, hi)
    }
}

/// `log₂(1/h) − 1`: the finest cubes still span two grid cells.
pub fn default_max_gen(h: f64) -> Result<i32> {
    let k = dyadic_exponent(h)?;
    if k < 5 {
        return Err(Error::invalid("grid spacing must be at most 2^-5"));
    }
    Ok(k - 1)
}

/// `k` with `h = 2^{−k}`.
pub fn dyadic_exponent(h: f64) -> Result<i32> {
    let k = -h.log2();
    if !(h > 0.0) || (k - k.round()).abs() > 1e-12 {
        return Err(Error::invalid(format!("grid spacing {h} is not a power of two")));
    }
    Ok(k.round() as i32)
}

/// Members of the test family used for empirical norm estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// Jump function at the `corner`-th depth-`depth` corner; the radius
    /// defaults to half the first-generation cell, `λ/2`.
    Jump {
        depth: usize,
        corner: usize,
        r: Option<f64>,
        selector: Selector,
    },
    /// `u(x) = x_axis` (1-based).
    Coordinate { axis: usize },
    /// A seeded sum of low-frequency cosines.
    Random { seed: u64 },
}

type Eval = Box<dyn Fn(&[f64]) -> f64 + Sync>;

/// A test function ready for evaluation, with the box its gradient lives in.
pub struct Prepared {
    pub label: String,
    pub window: BBox,
    f: Eval,
}

impl Prepared {
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl TestFunction {
    /// Parse `jump:depth=3,corner=0,r=0.125,side=upper`, `coord:1` or
    /// `random:seed=7`.
    pub fn parse(s: &str) -> Result<Self> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = HashMap::new();
        for part in rest.split(',').filter(|p| !p.is_empty()) {
            match part.split_once('=') {
                Some((k, v)) => kv.insert(k.trim().to_string(), v.trim().to_string()),
                None => kv.insert("_".to_string(), part.trim().to_string()),
            };
        }
        let num = |k: &str| -> Result<Option<f64>> {
            kv.get(k)
                .map(|v| crate::stats::parse_fraction(v).ok_or_else(|| Error::invalid(format!("bad {k}: {v}"))))
                .transpose()
        };
        let int = |k: &str, d: usize| -> Result<usize> {
            kv.get(k)
                .map(|v| v.parse::<usize>().map_err(|_| Error::invalid(format!("bad {k}: {v}"))))
                .unwrap_or(Ok(d))
        };
        match head {
            "jump" => Ok(TestFunction::Jump {
                depth: int("depth", 3)?,
                corner: int("corner", 0)?,
                r: num("r")?,
                selector: match kv.get("side").map(String::as_str) {
                    None | Some("upper") => Selector::Upper,
                    Some("lower") => Selector::Lower,
                    Some(o) => return Err(Error::invalid(format!("unknown side {o}"))),
                },
            }),
            "coord" => Ok(TestFunction::Coordinate {
                axis: int("_", int("axis", 1)?)?,
            }),
            "random" => Ok(TestFunction::Random {
                seed: int("seed", int("_", 0)?)? as u64,
            }),
            _ => Err(Error::invalid(format!("unknown test function {s}"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TestFunction::Jump {
                depth,
                corner,
                r,
                selector,
            } => {
                let side = match selector {
                    Selector::Upper => "upper",
                    Selector::Lower => "lower",
                };
                match r {
                    Some(r) => format!("jump:depth={depth},corner={corner},r={r},side={side}"),
                    None => format!("jump:depth={depth},corner={corner},side={side}"),
                }
            }
            TestFunction::Coordinate { axis } => format!("coord:{axis}"),
            TestFunction::Random { seed } => format!("random:seed={seed}"),
        }
    }

    pub fn prepare(&self, omega: &RegionSpec, h: f64) -> Result<Prepared> {
        let n = omega.n;
        let snap = |b: &BBox| {
            BBox::new(
                b.lo.iter().map(|v| (v / h).floor() * h).collect(),
                b.hi.iter().map(|v| (v / h).ceil() * h).collect(),
            )
        };
        let label = self.label();
        match *self {
            TestFunction::Jump {
                depth,
                corner,
                r,
                selector,
            } => {
                let lambda = omega
                    .lambda()
                    .ok_or_else(|| Error::invalid("jump functions need a fixed ratio"))?;
                let corners = omega.cantor.corners(depth);
                let mut x0 = corners
                    .get(corner)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("corner {corner} out of range")))?;
                x0.push(0.0);
                let u = JumpFunction::new(omega, &x0, r.unwrap_or(lambda / 2.0), selector)?;
                let window = u.support_window(h);
                Ok(Prepared {
                    label,
                    window,
                    f: Box::new(move |x: &[f64]| u.eval(x)),
                })
            }
            TestFunction::Coordinate { axis } => {
                if axis == 0 || axis > n {
                    return Err(Error::invalid(format!("axis {axis} out of range")));
                }
                Ok(Prepared {
                    label,
                    window: snap(&omega.bbox),
                    f: Box::new(move |x: &[f64]| x[axis - 1]),
                })
            }
            TestFunction::Random { seed } => {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let terms: Vec<(f64, Vec<f64>, f64)> = (0..6)
                    .map(|m| {
                        let k: Vec<f64> = (0..n).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
                        let amp = rng.gen_range(-1.0..1.0) / (m + 1) as f64;
                        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                        (amp, k, phase)
                    })
                    .collect();
                Ok(Prepared {
                    label,
                    window: snap(&omega.bbox),
                    f: Box::new(move |x: &[f64]| {
                        terms
                            .iter()
                            .map(|(a, k, ph)| {
                                let t: f64 = k.iter().zip(x).map(|(k, x)| k * x).sum();
                                a * (std::f64::consts::PI * t + ph).cos()
                            })
                            .sum()
                    }),
                })
            }
        }
    }
}

/// Jumps at the origin with radii `λ^d/2` for `d = 1..=depth_max`,
/// coordinate functions and two random fields.
pub fn default_family(n: usize, depth_max: usize) -> Vec<TestFunction> {
    let mut out: Vec<TestFunction> = (1..=depth_max)
        .map(|d| TestFunction::Jump {
            depth: d,
            corner: 0,
            r: None,
            selector: Selector::Upper,
        })
        .collect();
    out.extend((1..=n).map(|axis| TestFunction::Coordinate { axis }));
    out.extend([1, 2].map(|seed| TestFunction::Random { seed }));
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyReport {
    pub members: Vec<(String, f64)>,
    /// Members dropped because their scale is below eight grid cells.
    pub skipped: Vec<String>,
    pub sup: f64,
}

/// Supremum of `ratio_p` over a test family. Jump members with depth `d`
/// and no explicit radius use `λ^d/2` and are skipped below `8h`.
pub fn empirical_ratio(setup: &ExtensionSetup, family: &[TestFunction], p: f64, h: f64) -> Result<FamilyReport> {
    let lambda = setup.omega.lambda().unwrap_or(0.25);
    let mut members = Vec::new();
    let mut skipped = Vec::new();
    for t in family {
        let t = match *t {
            TestFunction::Jump {
                depth,
                corner: _,
                r: None,
                selector,
            } => {
                let r = lambda.powi(depth as i32) / 2.0;
                if r < 8.0 * h {
                    skipped.push(t.label());
                    continue;
                }
                TestFunction::Jump {
                    depth,
                    corner: 0,
                    r: Some(r),
                    selector,
                }
            }
            ref other => other.clone(),
        };
        let prep = t.prepare(&setup.omega, h)?;
        let rep = ratio_p(setup, &|x: &[f64]| prep.eval(x), &prep.window, p, h)?;
        members.push((prep.label, rep.ratio));
    }
    let sup = members.iter().map(|m| m.1).fold(0.0, f64::max);
    Ok(FamilyReport { members, skipped, sup })
}

/// The `N_λ` window `[0,1]^{n−1} × [−½, ½]`.
pub fn n_window(n: usize) -> BBox {
    let mut lo = vec![0.0; n - 1];
    let mut hi = vec![1.0; n - 1];
    lo.push(-0.5);
    hi.push(0.5);
    BBox::new(lo, hi)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioReport {
    pub ratio: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// Covered `N_λ` cells in the numerator.
    pub covered_cells: usize,
    /// Interior `N_λ` cells left out (frontier gaps or unassigned cubes).
    pub uncovered_cells: usize,
}

/// `‖∇Eu‖_{L^p(N_λ)} / ‖∇u‖_{L^p(Ω_λ)}` on grids of spacing `h`; `window`
/// bounds the support of `u`.
pub fn ratio_p(
    setup: &ExtensionSetup,
    u: &(dyn Fn(&[f64]) -> f64 + Sync),
    window: &BBox,
    p: f64,
    h: f64,
) -> Result<RatioReport> {
    let source = AnalyticSource::new(u, &setup.omega, h)?;
    let ugrid = GridField::tabulate(window, h, |x| crate::fields::region_label(&setup.omega, x), u)?;
    let den = energy_p(&gradient(&ugrid)?.field, p, None)?.powf(1.0 / p);
    if den == 0.0 {
        return Err(Error::ZeroSeminorm);
    }
    let asm = setup.assemble(&source, UnassignedPolicy::Exclude)?;
    let eu = asm.extend(&source, &n_window(setup.omega.n), h, Part::InteriorOnly)?;
    let num = energy_p(&gradient(&eu)?.field, p, None)?.powf(1.0 / p);
    let covered = eu.masked_count();
    let interior = (0..eu.len())
        .filter(|&i| setup.n_region.in_n_interior(&eu.cell_center(i)))
        .count();
    Ok(RatioReport {
        ratio: num / den,
        numerator: num,
        denominator: den,
        covered_cells: covered,
        uncovered_cells: interior - covered,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceLevel {
    pub h: f64,
    pub max_gen: i32,
    /// Mean of `|Eu − u|` over the shell.
    pub mean: f64,
    pub cells: usize,
}

/// Trace consistency of `E` on a smooth `u` defined on all of `D`: mean of
/// `|Eu − u|` over covered `N_λ` cells within `6√n·2^{−max_gen}` of `∂N_λ`
/// and at height `|x_n| ≥ 1/16`, with `max_gen = log₂(1/h) − 2`.
pub fn trace_mismatch(n: usize, lambda: f64, u: &(dyn Fn(&[f64]) -> f64 + Sync), h: f64) -> Result<TraceLevel> {
    let max_gen = dyadic_exponent(h)? - 2;
    let setup = ExtensionSetup::new(n, lambda, max_gen)?;
    let source = AnalyticSource::new(u, &setup.omega, h)?.with_q0_spacing(h.max(1.0 / 256.0));
    let asm = setup.assemble(&source, UnassignedPolicy::Exclude)?;
    let eu = asm.extend(&source, &n_window(n), h, Part::InteriorOnly)?;
    let tol = 6.0 * (n as f64).sqrt() * (-(max_gen as f64)).exp2();
    let picked: Vec<f64> = (0..eu.len())
        .into_par_iter()
        .filter_map(|i| {
            if eu.mask[i] == 0 {
                return None;
            }
            let x = eu.cell_center(i);
            if x[n - 1].abs() < 1.0 / 16.0 {
                return None;
            }
            let (_, hi) = setup.n_region.refined_bracket(&x, 0.125);
            (hi <= tol).then(|| (eu.value(i) - u(&x)).abs())
        })
        .collect();
    if picked.is_empty() {
        return Err(Error::EmptyAverage("trace shell".into()));
    }
    Ok(TraceLevel {
        h,
        max_gen,
        mean: crate::stats::pairwise_sum(&picked) / picked.len() as f64,
        cells: picked.len(),
    })
}

/// Observed order `d log(mean) / d log(h)` by least squares.
pub fn observed_order(levels: &[TraceLevel]) -> f64 {
    let pts: Vec<(f64, f64)> = levels.iter().map(|l| (l.h.ln(), l.mean.ln())).collect();
    crate::stats::slope(&pts)
}

/// Lower-left corner of the depth-`depth` Cantor cells closest to the
/// centre `(½, …, ½)`, lifted to the slit.
pub fn central_two_sided_point(region: &RegionSpec, depth: usize) -> Vec<f64> {
    let mut best = region
        .cantor
        .corners(depth)
        .into_iter()
        .min_by(|a, b| {
            let d = |p: &Vec<f64>| p.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>();
            d(a).total_cmp(&d(b))
        })
        .unwrap_or_default();
    best.push(0.0);
    best
}

/// Divergence-aware value of a closed-form factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Factor {
    Finite(f64),
    Divergent,
}

impl Factor {
    pub fn value(self) -> f64 {
        match self {
            Factor::Finite(v) => v,
            Factor::Divergent => f64::INFINITY,
        }
    }
}

fn lambda_dim(lambda: f64, n: usize) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 0.5) {
        return Err(Error::invalid("lambda must be in (0, 1/2)"));
    }
    if n < 2 {
        return Err(Error::invalid("dimension must be at least 2"));
    }
    Ok(crate::cantor::dimension_of_ratio(lambda, n))
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::invalid("p must be greater than 1"));
    }
    Ok(())
}

/// `1 / (1 − 2^{(−n + p + dim C_λ)/p})`.
pub fn norm_factor(lambda: f64, n: usize, p: f64) -> Result<Factor> {
    check_p(p)?;
    let dim = lambda_dim(lambda, n)?;
    let gap = n as f64 - p - dim;
    if gap <= 1e-12 {
        return Ok(Factor::Divergent);
    }
    Ok(Factor::Finite(1.0 / (1.0 - (-gap / p).exp2())))
}

/// `D(r, p) = (1 − 2^{−rp/(p−1)})^{1−p}`.
pub fn d_factor(r: f64, p: f64) -> Result<Factor> {
    check_p(p)?;
    if r <= 0.0 {
        return Ok(Factor::Divergent);
    }
    Ok(Factor::Finite((1.0 - (-r * p / (p - 1.0)).exp2()).powf(1.0 - p)))
}

/// The exponent `r = (p − 1)/p² · (n − p − dim C_λ)`.
pub fn r_choice(lambda: f64, n: usize, p: f64) -> Result<f64> {
    check_p(p)?;
    let dim = lambda_dim(lambda, n)?;
    Ok((p - 1.0) / (p * p) * (n as f64 - p - dim))
}

/// Upper dimension curve `n − p − C/(xⁿ log x)`.
pub fn thm11_upper(x: f64, n: usize, p: f64, c: f64) -> f64 {
    n as f64 - p - c / (x.powi(n as i32) * x.ln())
}

/// The same curve with exponent `2p − p²/n`, meaningful for `n−1 < p < n`.
pub fn thm11_improved(x: f64, n: usize, p: f64, c: f64) -> Option<f64> {
    let nf = n as f64;
    (nf - 1.0 < p && p < nf).then(|| nf - p - c / (x.powf(2.0 * p - p * p / nf) * x.ln()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRow {
    pub lambda: f64,
    pub dim: f64,
    pub norm_factor: Factor,
    pub empirical_ratio: Option<f64>,
    pub c_eff: Option<f64>,
    pub thm11_upper: Option<f64>,
    pub thm11_improved: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub p: f64,
    pub c: f64,
    pub rows: Vec<BoundRow>,
}

/// Closed-form columns for each `λ`; the empirical column is filled by
/// the caller-supplied closure (or left empty).
pub fn bound_report(
    n: usize,
    p: f64,
    lambdas: &[f64],
    c: f64,
    empirical: Option<&(dyn Fn(f64) -> Result<f64> + Sync)>,
) -> Result<BoundReport> {
    check_p(p)?;
    let rows = lambdas
        .par_iter()
        .map(|&lambda| {
            let dim = lambda_dim(lambda, n)?;
            let nf = norm_factor(lambda, n, p)?;
            let (c_eff, upper, improved) = match nf {
                Factor::Finite(x) => (
                    Some((n as f64 - p - dim) * x),
                    Some(thm11_upper(x, n, p, c)),
                    thm11_improved(x, n, p, c),
                ),
                Factor::Divergent => (None, None, None),
            };
            let empirical_ratio = empirical.map(|f| f(lambda)).transpose()?;
            Ok(BoundRow {
                lambda,
                dim,
                norm_factor: nf,
                empirical_ratio,
                c_eff,
                thm11_upper: upper,
                thm11_improved: improved,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundReport { n, p, c, rows })
}

/// The decomposition an [`Assembly`] runs over must be of `int N_λ`.
pub fn is_interior(w: &WhitneyDecomposition) -> bool {
    matches!(w.target, Target::Interior { .. })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::whitney::decompose;

    #[test]
    fn bump_shape() {
        let c = DyadicCube::new(2, vec![1, 1]);
        assert_eq!(bump(&c, &[0.3, 0.3]).0, 1.0);
        assert_eq!(bump(&c, &[0.25 + 0.25 + 0.25 / 16.0, 0.3]).0, 0.0);
        let mid = bump(&c, &[0.5 + 0.25 / 32.0, 0.3]).0;
        assert!((mid - 0.5).abs() < 1e-12);
        // derivative against a difference quotient
        let x = [0.5 + 0.25 / 40.0, 0.25 - 0.25 / 50.0];
        let (_, g) = bump(&c, &x);
        let e = 1e-7;
        let fd0 = (bump(&c, &[x[0] + e, x[1]]).0 - bump(&c, &[x[0] - e, x[1]]).0) / (2.0 * e);
        let fd1 = (bump(&c, &[x[0], x[1] + e]).0 - bump(&c, &[x[0], x[1] - e]).0) / (2.0 * e);
        assert!((g[0] - fd0).abs() < 1e-5 && (g[1] - fd1).abs() < 1e-5);
    }

    #[test]
    fn partition_sums_to_one() {
        let spec = RegionSpec::slit(RegionKind::NLambda, 2, 0.25).unwrap();
        let w = whitney_decompose(&spec, 7).unwrap();
        let pou = PartitionOfUnity::new(&w);
        let h = 1.0 / 512.0;
        let mut checked = 0;
        for i in 0..512 {
            for j in 0..256 {
                let x = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h - 0.25];
                if let Some(ps) = pou.psi(&x) {
                    let s: f64 = ps.iter().map(|p| p.1).sum();
                    assert!((s - 1.0).abs() < 1e-9);
                    assert!(ps.iter().all(|p| p.1 >= 0.0));
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn single_cube_weight_is_one() {
        let t = Target::OpenBox {
            bbox: BBox::new(vec![0.0, 0.0], vec![1.0, 1.0]),
        };
        let w = decompose(t, 6).unwrap();
        let pou = PartitionOfUnity::new(&w);
        let (id, c) = w.resolved().next().unwrap();
        let cube = c.cube();
        let ctr = cube.center();
        let ps = pou.psi(&ctr).unwrap();
        assert_eq!(ps, vec![(id, 1.0)]);
    }

    #[test]
    fn gradient_constant_is_stable_across_generations() {
        let spec = RegionSpec::slit(RegionKind::NLambda, 2, 0.25).unwrap();
        let w = whitney_decompose(&spec, 10).unwrap();
        let pou = PartitionOfUnity::new(&w);
        let consts = pou.gradient_constants(48);
        let vals: Vec<f64> = consts
            .iter()
            .filter(|(g, _)| (4..=8).contains(g))
            .map(|c| c.1)
            .collect();
        assert!(vals.iter().all(|v| v.is_finite() && *v > 0.0));
        let (lo, hi) = vals
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(hi <= 1.2 * lo, "{consts:?}");
    }

    #[test]
    fn averages_of_simple_sources() {
        let omega = RegionSpec::slit(RegionKind::OmegaLambda, 2, 0.25).unwrap();
        let src = AnalyticSource::new(|_: &[f64]| 2.5, &omega, 1.0 / 256.0).unwrap();
        assert_eq!(src.box_mean(&[-2.0, 1.0], &[-1.5, 1.5]).unwrap(), 2.5);
        let src = AnalyticSource::new(|x: &[f64]| x[0], &omega, 1.0 / 256.0).unwrap();
        let m = src.box_mean(&[-1.75, 1.0], &[-1.25, 1.5]).unwrap();
        assert!((m + 1.5).abs() < 1e-12);
        assert!(src.box_mean(&[-0.75, -0.5], &[-0.25, 0.5]).is_err());
        // the tabulated source agrees with brute force
        let b = BBox::new(vec![-2.0, -1.5], vec![1.0, 1.5]);
        let f = |x: &[f64]| (7.0 * x[0]).sin() * x[1];
        let grid = GridField::tabulate(&b, 1.0 / 64.0, |x| crate::fields::region_label(&omega, x), f).unwrap();
        let gs = GridSource::new(&grid, &omega).unwrap();
        let (lo, hi) = ([0.25, 0.5], [0.75, 1.0]);
        let mut brute = (0.0, 0usize);
        for i in 0..grid.len() {
            let c = grid.cell_center(i);
            if grid.mask[i] != 0 && (0..2).all(|a| lo[a] <= c[a] && c[a] <= hi[a]) {
                brute.0 += grid.value(i);
                brute.1 += 1;
            }
        }
        assert!((gs.box_mean(&lo, &hi).unwrap() - brute.0 / brute.1 as f64).abs() < 1e-12);
        let asrc = AnalyticSource::new(f, &omega, 1.0 / 64.0).unwrap();
        assert!((asrc.box_mean(&lo, &hi).unwrap() - brute.0 / brute.1 as f64).abs() < 1e-12);
    }

    #[test]
    fn closed_forms() {
        let f = |l: f64| norm_factor(l, 2, 1.5).unwrap().value();
        assert!((f(0.125) - 13.49).abs() < 0.01, "{}", f(0.125));
        assert!((f(1.0 / 16.0) - 9.17).abs() < 0.01, "{}", f(1.0 / 16.0));
        assert_eq!(norm_factor(0.25, 2, 1.5).unwrap(), Factor::Divergent);
        assert!(norm_factor(0.125, 2, 1.0).is_err());
        let rep = bound_report(2, 1.5, &[0.125, 1.0 / 16.0, 1.0 / 32.0], 1.0, None).unwrap();
        for row in &rep.rows {
            let c = row.c_eff.unwrap();
            assert!((2.0..=2.5).contains(&c), "{c}");
            assert!((row.dim + c / row.norm_factor.value() - 0.5).abs() < 1e-12);
        }
        let r = r_choice(0.125, 2, 1.5).unwrap();
        assert!((r - (0.5 / 2.25) * (0.5 - 1.0 / 3.0)).abs() < 1e-15);
        assert!(d_factor(r, 1.5).unwrap().value() > 1.0);
        assert!(thm11_improved(2.0, 2, 1.5, 1.0).is_some());
        assert!(thm11_improved(2.0, 3, 1.5, 1.0).is_none());
    }

    #[test]
    fn jump_function_shape() {
        let omega = RegionSpec::slit(RegionKind::OmegaLambda, 2, 0.25).unwrap();
        let x0 = central_two_sided_point(&omega, 3);
        let u = JumpFunction::new(&omega, &x0, 0.125, Selector::Upper).unwrap();
        assert_eq!(u.eval(&[x0[0], 0.2]), 1.0);
        assert_eq!(u.eval(&[x0[0], -0.2]), 0.0);
        assert_eq!(u.eval(&[x0[0], 0.5]), 0.0);
        assert!(JumpFunction::new(&omega, &[-1.5, 0.0], 0.125, Selector::Upper).is_ok());
        let far = JumpFunction::new(&omega, &[0.5, 0.0], 0.5, Selector::Upper);
        assert!(far.is_ok());
    }
}
