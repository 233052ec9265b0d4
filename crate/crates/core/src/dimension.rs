//! Separated nets, the net-count dimension bound, removed-set unions and
//! measure density estimates.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cantor::CantorSpec;
use crate::error::{Error, Result};
use crate::fields::{BoxUnion, Shape};
use crate::regions::{RegionSpec, SIDE_LOWER, SIDE_UPPER};

/// A target set for nets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetSet {
    /// The product Cantor set, optionally lifted by a trailing zero
    /// coordinate (`C_λ × {0}`).
    Cantor {
        cantor: CantorSpec,
        lifted: bool,
    },
    Points {
        points: Vec<Vec<f64>>,
    },
}

impl NetSet {
    pub fn cantor_slit(lambda: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n must be at least 2"));
        }
        Ok(NetSet::Cantor {
            cantor: CantorSpec::fixed(lambda, n - 1, 64)?,
            lifted: true,
        })
    }

    pub fn cantor_line(lambda: f64) -> Result<Self> {
        Ok(NetSet::Cantor {
            cantor: CantorSpec::fixed(lambda, 1, 64)?,
            lifted: false,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            NetSet::Cantor { cantor, lifted } => cantor.ambient_codim + usize::from(*lifted),
            NetSet::Points { points } => points.first().map_or(0, Vec::len),
        }
    }

    /// Candidate points in deterministic order: construction corners at
    /// the first depth whose cells are smaller than `r/4`. Also returns the
    /// candidate cell diagonal (0 for finite sets).
    pub fn candidates(&self, r: f64) -> (Vec<Vec<f64>>, f64) {
        match self {
            NetSet::Cantor { cantor, lifted } => {
                let mut depth = 0;
                while depth < cantor.max_depth && cantor.cell_size(depth) >= r / 4.0 {
                    depth += 1;
                }
                let spacing = cantor.cell_size(depth) * (cantor.ambient_codim as f64).sqrt();
                let mut pts = cantor.corners(depth);
                if *lifted {
                    for p in &mut pts {
                        p.push(0.0);
                    }
                }
                (pts, spacing)
            }
            NetSet::Points { points } => (points.clone(), 0.0),
        }
    }

    /// A random point of the set (Cantor points resolved to depth 48).
    pub fn sample(&self, rng: &mut impl Rng) -> Option<Vec<f64>> {
        match self {
            NetSet::Cantor { cantor, lifted } => {
                let mut p: Vec<f64> = (0..cantor.ambient_codim)
                    .map(|_| {
                        let (mut lo, mut len) = (0.0, 1.0);
                        for level in 0..48 {
                            let Some(r) = cantor.ratio_at(level) else {
                                return lo + rng.gen::<f64>() * len;
                            };
                            if rng.gen::<bool>() {
                                lo += len - r * len;
                            }
                            len *= r;
                        }
                        lo
                    })
                    .collect();
                if *lifted {
                    p.push(0.0);
                }
                Some(p)
            }
            NetSet::Points { points } => {
                if points.is_empty() {
                    None
                } else {
                    Some(points[rng.gen_range(0..points.len())].clone())
                }
            }
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Grid hash with cell size `r` for neighbour queries.
struct Buckets {
    r: f64,
    map: HashMap<Vec<i64>, Vec<usize>>,
}

impl Buckets {
    fn new(r: f64) -> Self {
        Self { r, map: HashMap::new() }
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / self.r).floor() as i64).collect()
    }

    fn insert(&mut self, x: &[f64], id: usize) {
        let k = self.key(x);
        self.map.entry(k).or_default().push(id);
    }

    /// Ids in the `3^m` buckets around `x`.
    fn near(&self, x: &[f64]) -> Vec<usize> {
        let k = self.key(x);
        let m = k.len();
        let mut out = Vec::new();
        for code in 0..3usize.pow(m as u32) {
            let mut c = code;
            let key: Vec<i64> = k
                .iter()
                .map(|v| {
                    let d = (c % 3) as i64 - 1;
                    c /= 3;
                    v + d
                })
                .collect();
            if let Some(ids) = self.map.get(&key) {
                out.extend_from_slice(ids);
            }
        }
        out
    }
}

/// Greedy maximal `r`-separated subset of `candidates`, in order.
pub fn separated_net(candidates: &[Vec<f64>], r: f64) -> Result<Vec<Vec<f64>>> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::invalid("net radius must be positive"));
    }
    let mut net: Vec<Vec<f64>> = Vec::new();
    let mut buckets = Buckets::new(r);
    for c in candidates {
        if buckets.near(c).iter().all(|&i| dist(&net[i], c) >= r) {
            buckets.insert(c, net.len());
            net.push(c.clone());
        }
    }
    Ok(net)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Separation {
    /// Level `i` nets are `λ^i`-separated.
    Single,
    /// Level `i` nets are `2λ^i`-separated.
    Double,
}

impl Separation {
    fn factor(self) -> f64 {
        match self {
            Separation::Single => 1.0,
            Separation::Double => 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetLevel {
    pub level: usize,
    pub radius: f64,
    pub points: Vec<Vec<f64>>,
    /// Candidate spacing was below half the radius.
    pub fine_candidates: bool,
    /// Largest probe distance to the net over the sampled set points.
    pub max_probe_distance: f64,
    /// Every probe was within the separation (plus candidate spacing).
    pub certified: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetHierarchy {
    pub set: NetSet,
    pub lambda: f64,
    pub separation: Separation,
    pub levels: Vec<NetLevel>,
    pub seed: u64,
}

impl NetHierarchy {
    /// Nets for levels `0..=max_level`, each checked for maximality with
    /// `probes` random set points.
    pub fn build(
        set: NetSet,
        lambda: f64,
        max_level: usize,
        separation: Separation,
        probes: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::invalid("scale base must lie in (0,1)"));
        }
        let mut levels = Vec::with_capacity(max_level + 1);
        for i in 0..=max_level {
            let radius = separation.factor() * lambda.powi(i as i32);
            let (cands, spacing) = set.candidates(radius);
            // coarser candidates cannot certify maximality
            let fine = spacing < radius / 2.0;
            let points = separated_net(&cands, radius)?;
            let mut buckets = Buckets::new(radius + spacing);
            for (k, p) in points.iter().enumerate() {
                buckets.insert(p, k);
            }
            // deterministic chunks, independent of the worker count
            let chunks = 16usize;
            let per = probes.div_ceil(chunks);
            let worst = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9));
                    rng.set_stream(c as u64);
                    let mut worst: f64 = 0.0;
                    for _ in 0..per.min(probes.saturating_sub(c * per)) {
                        let Some(y) = set.sample(&mut rng) else { break };
                        let d = buckets
                            .near(&y)
                            .iter()
                            .map(|&k| dist(&points[k], &y))
                            .fold(f64::INFINITY, f64::min);
                        worst = worst.max(d);
                    }
                    worst
                })
                .reduce(|| 0.0, f64::max);
            let certified = fine && (points.is_empty() || worst <= radius + spacing);
            levels.push(NetLevel {
                level: i,
                radius,
                points,
                fine_candidates: fine,
                max_probe_distance: worst,
                certified,
            });
        }
        Ok(Self {
            set,
            lambda,
            separation,
            levels,
            seed,
        })
    }

    fn level(&self, i: usize) -> Result<&NetLevel> {
        self.levels.get(i).ok_or(Error::MissingLevel(i))
    }

    /// `N_j^{i,k}`: level-`(i+j)` balls `B(x_l, λ^{i+j})` meeting `B(x_k^i, λ^i)`.
    pub fn net_counts(&self, i: usize, k: usize, j: usize) -> Result<usize> {
        let base = self.level(i)?;
        let fine = self.level(i + j)?;
        let x = base
            .points
            .get(k)
            .ok_or_else(|| Error::invalid(format!("no point {k} at level {i}")))?;
        let reach = self.lambda.powi(i as i32) + self.lambda.powi((i + j) as i32);
        Ok(fine.points.iter().filter(|y| dist(x, y) <= reach).count())
    }

    /// `F_i`: union of the balls `B(x_l^{i+j}, λ^{i+j})` for all built
    /// levels `i + j > i`.
    pub fn removed_set(&self, i: usize) -> Result<BoxUnion> {
        self.level(i)?;
        let mut u = BoxUnion::new(self.set.dim());
        for lvl in &self.levels[i + 1..] {
            let radius = self.lambda.powi(lvl.level as i32);
            for p in &lvl.points {
                u.push(Shape::Ball {
                    center: p.clone(),
                    radius,
                });
            }
        }
        Ok(u)
    }
}

/// Per-level decay of `H^{n−1}(P_m(F_i))` predicted for `C_λ × {0}` with
/// nested net balls: each level doubles the point count per Cantor axis
/// and shrinks the radius by `λ`, so dropping the slit axis gives
/// `(2λ)^{n−1}` and dropping a Cantor axis gives `λ·(2λ)^{n−2}`.
pub fn predicted_decay(lambda: f64, n: usize, m: usize) -> f64 {
    let t = 2.0 * lambda;
    if m == n {
        t.powi(n as i32 - 1)
    } else {
        lambda * t.powi(n as i32 - 2)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SGrid {
    pub start: f64,
    pub step: f64,
    pub end: f64,
}

impl Default for SGrid {
    fn default() -> Self {
        Self {
            start: 0.01,
            step: 0.01,
            end: 3.0,
        }
    }
}

impl SGrid {
    pub fn values(&self) -> Vec<f64> {
        let steps = ((self.end - self.start) / self.step).round() as usize;
        (0..=steps).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertRow {
    pub i: usize,
    pub k: usize,
    pub j: usize,
    pub count: usize,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimEstimate {
    pub s: f64,
    pub certified: bool,
    pub levels: usize,
    pub separation: Separation,
    /// For each `(i, k)`, the first `j` with `N_j^{i,k} < λ^{−js}`.
    pub certificate: Vec<CertRow>,
}

/// Smallest `s` in the grid such that every `(i, k)` with a finer built
/// level has some `j ≥ 1` with `N_j^{i,k} < λ^{−js}`.
pub fn dim_upper_estimate(h: &NetHierarchy, grid: &SGrid) -> Result<DimEstimate> {
    let levels = h.levels.len();
    if levels < 3 {
        return Err(Error::invalid("need at least three net levels"));
    }
    // counts[(i,k)] = [N_1, N_2, ...]
    let keys: Vec<(usize, usize)> = (0..levels - 1)
        .flat_map(|i| (0..h.levels[i].points.len()).map(move |k| (i, k)))
        .collect();
    let counts: Vec<Vec<usize>> = keys
        .par_iter()
        .map(|&(i, k)| {
            (1..levels - i)
                .map(|j| h.net_counts(i, k, j))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let witness = |s: f64| -> Option<Vec<CertRow>> {
        keys.iter()
            .zip(&counts)
            .map(|(&(i, k), cs)| {
                cs.iter().enumerate().find_map(|(jm1, &c)| {
                    let j = jm1 + 1;
                    let bound = h.lambda.powf(-(j as f64) * s);
                    ((c as f64) < bound).then_some(CertRow {
                        i,
                        k,
                        j,
                        count: c,
                        bound,
                    })
                })
            })
            .collect()
    };
    let values = grid.values();
    for &s in &values {
        if let Some(certificate) = witness(s) {
            return Ok(DimEstimate {
                s,
                certified: true,
                levels,
                separation: h.separation,
                certificate,
            });
        }
    }
    Ok(DimEstimate {
        s: values.last().copied().unwrap_or(grid.end),
        certified: false,
        levels,
        separation: h.separation,
        certificate: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentChoice {
    /// The attached component entered by walking up the slit axis.
    Upper,
    /// The attached component entered by walking down.
    Lower,
    /// The largest attached component.
    Largest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiusDensity {
    pub r: f64,
    /// Estimate of `m_n(Ω′ ∩ B(x, r)) / rⁿ`.
    pub c: Option<f64>,
    /// 95% confidence half-width of `c`.
    pub half_width: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityReport {
    pub point: Vec<f64>,
    pub component: ComponentChoice,
    pub samples: usize,
    pub seed: u64,
    /// Stream ids used per chunk (one ChaCha stream each).
    pub streams: Vec<u64>,
    pub per_radius: Vec<RadiusDensity>,
    pub c_fit: Option<f64>,
}

const MC_CHUNKS: u64 = 64;

/// Monte Carlo estimate of `m_n(Ω′ ∩ B(x, r)) / rⁿ` for the component
/// `Ω′` of `Ω ∩ B(x, r)` attached to `x`; `c_fit` is the minimum over the
/// radii.
pub fn measure_density_check(
    region: &RegionSpec,
    x: &[f64],
    radii: &[f64],
    samples: usize,
    component: ComponentChoice,
    seed: u64,
) -> Result<DensityReport> {
    let n = region.n;
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    if samples == 0 {
        return Err(Error::invalid("samples must be positive"));
    }
    let ball = crate::stats::unit_ball_volume(n);
    let mut per_radius = Vec::with_capacity(radii.len());
    for (ri, &r) in radii.iter().enumerate() {
        if !(r > 0.0) {
            return Err(Error::invalid("radii must be positive"));
        }
        let h = r / 256.0;
        let map = region.component_label(x, r, h)?;
        let attached = map.attached_labels(3.0 * h);
        let label = match component {
            ComponentChoice::Upper | ComponentChoice::Lower => {
                let up = component == ComponentChoice::Upper;
                map.column_label(up).filter(|l| attached.contains(l))
            }
            ComponentChoice::Largest => {
                let mut sizes: HashMap<u32, usize> = HashMap::new();
                for (_, l) in map.cells() {
                    if attached.contains(&l) {
                        *sizes.entry(l).or_default() += 1;
                    }
                }
                sizes
                    .into_iter()
                    .max_by_key(|&(l, c)| (c, std::cmp::Reverse(l)))
                    .map(|p| p.0)
            }
        };
        let Some(label) = label else {
            per_radius.push(RadiusDensity {
                r,
                c: None,
                half_width: 0.0,
                note: Some("no attached component".into()),
            });
            continue;
        };
        let want_side = match component {
            ComponentChoice::Upper => Some(SIDE_UPPER),
            ComponentChoice::Lower => Some(SIDE_LOWER),
            ComponentChoice::Largest => None,
        };
        let per = (samples as u64).div_ceil(MC_CHUNKS);
        let hits: u64 = (0..MC_CHUNKS)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(ri as u64));
                rng.set_stream(c);
                let todo = per.min((samples as u64).saturating_sub(c * per));
                let mut hits = 0u64;
                let mut y = vec![0.0; n];
                for _ in 0..todo {
                    // uniform in the ball by rejection from the cube
                    loop {
                        for (a, v) in y.iter_mut().enumerate() {
                            *v = x[a] + r * rng.gen_range(-1.0..1.0);
                        }
                        if dist(&y, x) < r {
                            break;
                        }
                    }
                    if !region.contains(&y) {
                        continue;
                    }
                    if let Some(side) = want_side {
                        let s = region.slit_side(&y);
                        if s != side && s != crate::regions::SIDE_FREE {
                            continue;
                        }
                    }
                    if map.label_near(region, &y) == Some(label) {
                        hits += 1;
                    }
                }
                hits
            })
            .sum();
        let f = hits as f64 / samples as f64;
        let c = ball * f;
        let half_width = 1.96 * ball * (f * (1.0 - f) / samples as f64).sqrt();
        per_radius.push(RadiusDensity {
            r,
            c: Some(c),
            half_width,
            note: None,
        });
    }
    let c_fit = per_radius
        .iter()
        .filter_map(|d| d.c)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.min(c))));
    Ok(DensityReport {
        point: x.to_vec(),
        component,
        samples,
        seed,
        streams: (0..MC_CHUNKS).collect(),
        per_radius,
        c_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::RegionKind;

    #[test]
    fn greedy_net_on_quarter_cantor() {
        let set = NetSet::cantor_line(0.25).unwrap();
        for i in 1..=6 {
            let r = 2.0 * 0.25f64.powi(i);
            let (c, spacing) = set.candidates(r);
            assert!(spacing < r / 2.0);
            assert_eq!(separated_net(&c, r).unwrap().len(), 1 << i);
        }
        let (c, _) = set.candidates(2.0);
        assert_eq!(separated_net(&c, 2.0).unwrap().len(), 1);
        assert!(separated_net(&[], 0.5).unwrap().is_empty());
    }

    #[test]
    fn counts_and_estimate_for_a_point() {
        let set = NetSet::Points {
            points: vec![vec![0.3, 0.0]],
        };
        let h = NetHierarchy::build(set, 0.25, 4, Separation::Single, 100, 1).unwrap();
        for j in 0..4 {
            assert_eq!(h.net_counts(0, 0, j).unwrap(), 1);
        }
        assert!(matches!(h.net_counts(2, 0, 5), Err(Error::MissingLevel(7))));
        let est = dim_upper_estimate(&h, &SGrid::default()).unwrap();
        assert!(est.certified);
        assert_eq!(est.s, 0.01);
    }

    #[test]
    fn estimate_matches_closed_form() {
        for (lambda, levels, tol) in [(0.25, 5, 0.05), (0.125, 4, 0.07)] {
            let set = NetSet::cantor_slit(lambda, 2).unwrap();
            let h = NetHierarchy::build(set, lambda, levels, Separation::Single, 2000, 3).unwrap();
            assert!(h.levels.iter().all(|l| l.certified));
            let est = dim_upper_estimate(&h, &SGrid::default()).unwrap();
            let want = -(2f64.ln()) / lambda.ln();
            assert!((est.s - want).abs() <= tol, "{} vs {want}", est.s);
        }
    }

    #[test]
    fn interior_point_sees_a_full_ball() {
        let omega = RegionSpec::slit(RegionKind::OmegaLambda, 2, 0.25).unwrap();
        let rep = measure_density_check(&omega, &[-1.5, 1.25], &[0.1], 20_000, ComponentChoice::Largest, 4).unwrap();
        let c = rep.per_radius[0].c.unwrap();
        assert!((c - std::f64::consts::PI).abs() < 1e-12, "{c}");
    }
}
