//! Middle-gap Cantor sets on `[0, 1]` and their products.
//!
//! A set is described by the ratio kept on each side at every level: the
//! fixed-ratio set `K_λ` keeps `[0, λ] ∪ [1 − λ, 1]` of every interval
//! forever, while a variable-ratio set uses its own ratio per level and is
//! treated as the finite union of its last-level intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default resolution of every distance oracle.
pub const DEFAULT_TOL: f64 = 9.094947017729282e-13; // 2^-40

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CantorKind {
    FixedRatio { lambda: f64 },
    VariableRatio { ratios: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CantorSpec {
    pub kind: CantorKind,
    /// Number of product factors, `n − 1` for a set living in `R^{n−1}`.
    pub ambient_codim: usize,
    pub max_depth: usize,
}

impl CantorSpec {
    pub fn fixed(lambda: f64, ambient_codim: usize, max_depth: usize) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 || lambda >= 0.5 {
            return Err(Error::invalid("lambda must be in (0, 1/2)"));
        }
        Self::checked(CantorKind::FixedRatio { lambda }, ambient_codim, max_depth)
    }

    pub fn variable(ratios: Vec<f64>, ambient_codim: usize) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::invalid("variable-ratio set needs at least one level"));
        }
        if let Some(r) = ratios.iter().find(|r| !(r.is_finite() && **r > 0.0 && **r <= 0.5)) {
            return Err(Error::invalid(format!("ratio {r} outside (0, 1/2]")));
        }
        let depth = ratios.len();
        Self::checked(CantorKind::VariableRatio { ratios }, ambient_codim, depth)
    }

    fn checked(kind: CantorKind, ambient_codim: usize, max_depth: usize) -> Result<Self> {
        if ambient_codim == 0 {
            return Err(Error::invalid("ambient_codim must be at least 1"));
        }
        if max_depth == 0 {
            return Err(Error::invalid("max_depth must be at least 1"));
        }
        Ok(Self {
            kind,
            ambient_codim,
            max_depth,
        })
    }

    /// The fixed ratio, if this is `K_λ`.
    pub fn lambda(&self) -> Option<f64> {
        match self.kind {
            CantorKind::FixedRatio { lambda } => Some(lambda),
            CantorKind::VariableRatio { .. } => None,
        }
    }

    /// Side ratio applied at `level` (0-based). `None` once a variable-ratio
    /// set has run out of levels: the remaining intervals are solid.
    pub fn ratio_at(&self, level: usize) -> Option<f64> {
        match &self.kind {
            CantorKind::FixedRatio { lambda } => Some(*lambda),
            CantorKind::VariableRatio { ratios } => ratios.get(level).copied(),
        }
    }

    /// Distance from `x` to the one-dimensional factor, resolved to `tol`.
    pub fn k_distance(&self, x: f64, tol: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("x = {x}")));
        }
        if !(tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        Ok(self.k_distance_unchecked(x, tol))
    }

    pub(crate) fn k_distance_unchecked(&self, x: f64, tol: f64) -> f64 {
        if x <= 0.0 {
            return -x;
        }
        if x >= 1.0 {
            return x - 1.0;
        }
        let mut start = 0.0;
        let mut len = 1.0;
        let mut level = 0;
        loop {
            if len < tol {
                return 0.0;
            }
            let Some(r) = self.ratio_at(level) else {
                return 0.0;
            };
            let left_end = start + r * len;
            let right_start = start + len - r * len;
            if x <= left_end {
                len *= r;
            } else if x >= right_start {
                start = right_start;
                len *= r;
            } else {
                return (x - left_end).min(right_start - x);
            }
            level += 1;
        }
    }

    /// Euclidean distance from `x ∈ R^{n−1}` to the product set.
    pub fn c_distance(&self, x: &[f64], tol: f64) -> Result<f64> {
        if x.len() != self.ambient_codim {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_codim,
                got: x.len(),
            });
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("coordinate {v}")));
        }
        if !(tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        Ok(self.c_distance_unchecked(x, tol))
    }

    pub(crate) fn c_distance_unchecked(&self, x: &[f64], tol: f64) -> f64 {
        // nearest points decouple coordinate-wise on a product set
        let per_axis = tol / (x.len() as f64).sqrt();
        x.iter()
            .map(|&xi| {
                let d = self.k_distance_unchecked(xi, per_axis);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Hausdorff dimension `−(n−1)·ln 2 / ln λ` of the product set in `R^{n−1}`.
    pub fn cantor_dim(&self, n: usize) -> Result<f64> {
        let lambda = self
            .lambda()
            .ok_or_else(|| Error::Unsupported("no closed-form dimension for a variable-ratio set".into()))?;
        if n < 2 {
            return Err(Error::invalid("n must be at least 2"));
        }
        Ok(dimension_of_ratio(lambda, n))
    }

    /// The `2^depth` construction intervals of the one-dimensional factor.
    pub fn intervals(&self, depth: usize) -> Vec<(f64, f64)> {
        let mut cur = vec![(0.0, 1.0)];
        for level in 0..depth {
            let Some(r) = self.ratio_at(level) else { break };
            let mut next = Vec::with_capacity(cur.len() * 2);
            for &(a, b) in &cur {
                let len = b - a;
                next.push((a, a + r * len));
                next.push((b - r * len, b));
            }
            cur = next;
        }
        cur
    }

    /// Side length of a depth-`depth` construction interval.
    pub fn cell_size(&self, depth: usize) -> f64 {
        (0..depth).map_while(|l| self.ratio_at(l)).product()
    }

    /// Lower-left corners of the depth-`depth` product cells, in
    /// lexicographic order (first coordinate slowest).
    pub fn corners(&self, depth: usize) -> Vec<Vec<f64>> {
        let starts: Vec<f64> = self.intervals(depth).iter().map(|iv| iv.0).collect();
        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for _ in 0..self.ambient_codim {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    starts.iter().map(move |&s| {
                        let mut p = prefix.clone();
                        p.push(s);
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Membership in the one-dimensional factor at resolution `tol`.
    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x.is_finite() && self.k_distance_unchecked(x, tol) == 0.0
    }

    /// Lebesgue measure retained after `depth` levels, `Π 2·λ_k`.
    pub fn retained_measure(&self, depth: usize) -> f64 {
        (0..depth).map_while(|l| self.ratio_at(l)).map(|r| 2.0 * r).product()
    }
}

pub fn dimension_of_ratio(lambda: f64, n: usize) -> f64 {
    -((n - 1) as f64) * std::f64::consts::LN_2 / lambda.ln()
}

/// Cantor set of Hausdorff dimension one and zero length: step `k` (1-based)
/// removes the middle proportion `1/(k+2)` of every interval.
pub fn fat_thin_cantor(depth: usize) -> Result<CantorSpec> {
    if depth == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    let ratios = (1..=depth).map(|k| (1.0 - 1.0 / (k as f64 + 2.0)) / 2.0).collect();
    CantorSpec::variable(ratios, 1)
}

/// Box-counting dimension of a finite interval union: least-squares slope
/// of `log N(ε)` against `log(1/ε)`, where `N(ε)` is the minimal number of
/// closed intervals of length `ε` covering the union.
pub fn box_dimension(intervals: &[(f64, f64)], scales: &[f64]) -> f64 {
    let mut sorted = intervals.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pts: Vec<(f64, f64)> = scales
        .iter()
        .map(|&eps| {
            // relative slack keeps an interval of length exactly ε in one piece
            let eps = eps * (1.0 + 1e-9);
            let mut count = 0usize;
            let mut covered = f64::NEG_INFINITY;
            for &(a, b) in &sorted {
                if covered >= b {
                    continue;
                }
                let mut start = a.max(covered);
                loop {
                    count += 1;
                    covered = start + eps;
                    if covered >= b {
                        break;
                    }
                    start = covered;
                }
            }
            ((1.0 / eps).ln(), (count as f64).ln())
        })
        .collect();
    crate::stats::slope(&pts)
}
