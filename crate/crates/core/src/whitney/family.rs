use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{DyadicCube, Target, WhitneyDecomposition};
use crate::error::{Error, Result};

/// Ids of resolved interior cubes touching the central patch
/// `[0,1]^{n−1} × {0}`.
pub fn central_family(w: &WhitneyDecomposition) -> Result<Vec<usize>> {
    if !matches!(w.target, Target::Interior { .. }) {
        return Err(Error::Unsupported(
            "central family needs a decomposition of int N".into(),
        ));
    }
    let n = w.dim();
    Ok(w.resolved()
        .filter(|(_, c)| c.idx[n - 1] == 0 || c.idx[n - 1] == -1)
        .map(|(i, _)| i)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum ReflectTarget {
    Q0,
    Cube(usize),
}

/// `R(i)` for every cube id of the interior decomposition; `None` for
/// frontier cubes and for resolved cubes with no admissible partner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReflectMap {
    pub targets: Vec<Option<ReflectTarget>>,
    pub central: Vec<usize>,
    pub unassigned: Vec<usize>,
}

impl ReflectMap {
    pub fn get(&self, id: usize) -> Option<ReflectTarget> {
        self.targets[id]
    }

    pub fn is_central(&self, id: usize) -> bool {
        self.central.binary_search(&id).is_ok()
    }

    /// Unassigned cubes over resolved non-central cubes.
    pub fn unassigned_fraction(&self, w: &WhitneyDecomposition) -> f64 {
        let resolved = w.resolved().filter(|(i, _)| !self.is_central(*i)).count();
        if resolved == 0 {
            0.0
        } else {
            self.unassigned.len() as f64 / resolved as f64
        }
    }
}

/// Assign to each non-central cube `Q_i` the closest complement cube in
/// the same half-space whose projection contains `P_n(Q_i)` and whose side
/// is at most `2ℓ(Q_i)`.
pub fn reflect_assign(w: &WhitneyDecomposition, wt: &WhitneyDecomposition) -> Result<ReflectMap> {
    if !matches!(wt.target, Target::Complement { .. }) {
        return Err(Error::Unsupported(
            "reflection targets must come from the complement".into(),
        ));
    }
    let central = central_family(w)?;
    let n = w.dim();
    let m = n - 1;
    let mut by_column: HashMap<(i32, &[i64]), Vec<usize>> = HashMap::new();
    for (id, c) in wt.resolved() {
        by_column.entry((c.gen, &c.idx[..m])).or_default().push(id);
    }
    let mut targets = vec![None; w.len()];
    let mut unassigned = Vec::new();
    for (id, c) in w.resolved() {
        if central.binary_search(&id).is_ok() {
            targets[id] = Some(ReflectTarget::Q0);
            continue;
        }
        let cube = c.cube();
        let upper = c.idx[m] >= 0;
        let mut best: Option<(f64, usize)> = None;
        for g in [c.gen, c.gen - 1] {
            let anc = cube.ancestor(g);
            let Some(ids) = by_column.get(&(g, &anc.idx[..m])) else {
                continue;
            };
            for &j in ids {
                if (wt.cubes[j].idx[m] >= 0) != upper {
                    continue;
                }
                let d = cube.center_distance(&wt.cubes[j].cube());
                // ids are in (gen, idx) order, so the first minimum wins ties
                let better = match best {
                    None => true,
                    Some((bd, bj)) => d < bd || (d == bd && j < bj),
                };
                if better {
                    best = Some((d, j));
                }
            }
        }
        match best {
            Some((_, j)) => targets[id] = Some(ReflectTarget::Cube(j)),
            None => unassigned.push(id),
        }
    }
    Ok(ReflectMap {
        targets,
        central,
        unassigned,
    })
}

/// Exact post-check of the three defining properties of an assignment.
pub fn reflect_violations(w: &WhitneyDecomposition, wt: &WhitneyDecomposition, map: &ReflectMap) -> usize {
    let m = w.dim() - 1;
    w.resolved()
        .filter(|(id, c)| match map.get(*id) {
            Some(ReflectTarget::Cube(j)) => {
                let q: DyadicCube = c.cube();
                let r = wt.cubes[j].cube();
                let side_ok = r.gen >= q.gen - 1;
                let proj_ok = q.projection_inside(&r, m);
                let half_ok = (q.idx[m] >= 0) == (r.idx[m] >= 0);
                !(side_ok && proj_ok && half_ok)
            }
            _ => false,
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::{RegionKind, RegionSpec};
    use crate::whitney::whitney_decompose;

    fn pair(lambda: f64, gen: i32) -> (WhitneyDecomposition, WhitneyDecomposition) {
        let n = RegionSpec::slit(RegionKind::NLambda, 2, lambda).unwrap();
        let o = RegionSpec::slit(RegionKind::OmegaLambda, 2, lambda).unwrap();
        (whitney_decompose(&n, gen).unwrap(), whitney_decompose(&o, gen).unwrap())
    }

    #[test]
    fn central_family_touches_the_slit() {
        let (w, _) = pair(0.25, 8);
        let v = central_family(&w).unwrap();
        assert!(v.len() >= 2);
        for &id in &v {
            let c = &w.cubes[id];
            let (lo, hi) = (c.cube().lo(), c.cube().hi());
            assert!(lo[1] <= 0.0 && hi[1] >= 0.0);
        }
        for (id, c) in w.resolved() {
            if v.binary_search(&id).is_err() {
                let (lo, hi) = (c.cube().lo(), c.cube().hi());
                assert!(lo[1] >= 0.0 || hi[1] <= 0.0);
            }
        }
    }

    #[test]
    fn assignment_properties_hold_exactly() {
        let (w, wt) = pair(0.25, 8);
        let map = reflect_assign(&w, &wt).unwrap();
        assert_eq!(reflect_violations(&w, &wt, &map), 0);
        assert!(map.unassigned_fraction(&w) <= 0.05, "{}", map.unassigned_fraction(&w));
        for (id, _) in w.resolved() {
            if map.is_central(id) {
                assert_eq!(map.get(id), Some(ReflectTarget::Q0));
            }
        }
    }
}
