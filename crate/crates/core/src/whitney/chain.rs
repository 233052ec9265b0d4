use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::family::{ReflectMap, ReflectTarget};
use super::{Target, WhitneyDecomposition};
use crate::error::{Error, Result};
use crate::stats::slope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    Cube(usize),
    /// The pseudo-node standing for `Q̃₀`; it sorts after every cube.
    Q0,
}

impl From<ReflectTarget> for Node {
    fn from(t: ReflectTarget) -> Self {
        match t {
            ReflectTarget::Q0 => Node::Q0,
            ReflectTarget::Cube(j) => Node::Cube(j),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainConstraint {
    None,
    /// Every cube other than `Q̃₀` has projection containing the source's.
    ProjectionMonotone,
}

/// Intersection graph of the resolved complement cubes plus `Q̃₀`.
pub struct ChainGraph<'a> {
    pub wt: &'a WhitneyDecomposition,
    q0_adjacent: Vec<usize>,
    q0_flag: Vec<bool>,
}

impl<'a> ChainGraph<'a> {
    pub fn new(wt: &'a WhitneyDecomposition) -> Result<Self> {
        if !matches!(wt.target, Target::Complement { .. }) {
            return Err(Error::Unsupported(
                "chains run over the complement decomposition".into(),
            ));
        }
        let n = wt.dim();
        let mut q0_flag = vec![false; wt.len()];
        let mut q0_adjacent = Vec::new();
        for (id, c) in wt.resolved() {
            let cube = c.cube();
            let (lo, hi) = (cube.lo(), cube.hi());
            // closure meets the closed Q̃₀ iff it leaves the open square (−1,1)²
            let touches = (n - 2..n).any(|a| lo[a] <= -1.0 || hi[a] >= 1.0);
            if touches {
                q0_flag[id] = true;
                q0_adjacent.push(id);
            }
        }
        Ok(Self {
            wt,
            q0_adjacent,
            q0_flag,
        })
    }

    fn neighbors(&self, node: Node) -> Vec<Node> {
        match node {
            Node::Q0 => self.q0_adjacent.iter().map(|&j| Node::Cube(j)).collect(),
            Node::Cube(i) => {
                let mut out: Vec<Node> = self.wt.neighbors(i).iter().map(|&j| Node::Cube(j)).collect();
                if self.q0_flag[i] {
                    out.push(Node::Q0);
                }
                out
            }
        }
    }

    fn label(&self, node: Node) -> String {
        match node {
            Node::Q0 => "Q0".into(),
            Node::Cube(i) => {
                let c = &self.wt.cubes[i];
                format!("cube {i} (gen {}, idx {:?})", c.gen, c.idx)
            }
        }
    }
}

/// Shortest chain from `a` to `b` by breadth-first search with neighbours
/// visited in ascending `(generation, index)` order.
pub fn chain(graph: &ChainGraph, a: Node, b: Node, constraint: ChainConstraint) -> Result<Vec<Node>> {
    bfs(graph, a, b, constraint, false)
}

pub(crate) fn bfs(
    graph: &ChainGraph,
    a: Node,
    b: Node,
    constraint: ChainConstraint,
    reversed: bool,
) -> Result<Vec<Node>> {
    for node in [a, b] {
        if let Node::Cube(i) = node {
            if i >= graph.wt.len() || !graph.wt.is_resolved(i) {
                return Err(Error::invalid(format!("node {i} is not a resolved cube")));
            }
        }
    }
    let m = graph.wt.dim() - 1;
    let source = match a {
        Node::Cube(i) => Some(graph.wt.cubes[i].cube()),
        Node::Q0 => None,
    };
    let allowed = |node: Node| match (constraint, node, &source) {
        (ChainConstraint::None, _, _) | (_, Node::Q0, _) | (_, _, None) => true,
        (ChainConstraint::ProjectionMonotone, Node::Cube(j), Some(s)) => {
            s.projection_inside(&graph.wt.cubes[j].cube(), m)
        }
    };
    if !allowed(b) {
        return Err(unreachable(graph, a, b, constraint));
    }
    let mut parent: HashMap<Node, Node> = HashMap::new();
    parent.insert(a, a);
    let mut queue = VecDeque::from([a]);
    while let Some(cur) = queue.pop_front() {
        if cur == b {
            let mut path = vec![b];
            let mut at = b;
            while at != a {
                at = parent[&at];
                path.push(at);
            }
            path.reverse();
            return Ok(path);
        }
        let mut nbrs = graph.neighbors(cur);
        if reversed {
            nbrs.reverse();
        }
        for nb in nbrs {
            if !parent.contains_key(&nb) && allowed(nb) {
                parent.insert(nb, cur);
                queue.push_back(nb);
            }
        }
    }
    Err(unreachable(graph, a, b, constraint))
}

fn unreachable(graph: &ChainGraph, a: Node, b: Node, constraint: ChainConstraint) -> Error {
    Error::Unreachable {
        from: graph.label(a),
        to: graph.label(b),
        constraint: match constraint {
            ChainConstraint::None => "none",
            ChainConstraint::ProjectionMonotone => "projection-monotone",
        },
    }
}

/// Largest `#C(Q̃_{R(i)}, Q̃_{R(j)})` over neighbouring assigned pairs.
/// Pairs with exactly one cube in `V` are left out: their chains climb to
/// `Q̃₀` and grow with the generation, which is what [`claim_count`] counts.
pub fn max_neighbor_chain(w: &WhitneyDecomposition, map: &ReflectMap, graph: &ChainGraph) -> Result<usize> {
    let mut cache: HashMap<(Node, Node), usize> = HashMap::new();
    let mut best = 0;
    for (i, _) in w.resolved() {
        let Some(ri) = map.get(i) else { continue };
        for &j in w.neighbors(i) {
            if j < i {
                continue;
            }
            let Some(rj) = map.get(j) else { continue };
            if map.is_central(i) != map.is_central(j) {
                continue;
            }
            let key = (Node::from(ri).min(rj.into()), Node::from(ri).max(rj.into()));
            let len = match cache.get(&key) {
                Some(&l) => l,
                None => {
                    let l = chain(graph, key.0, key.1, ChainConstraint::None)?.len();
                    cache.insert(key, l);
                    l
                }
            };
            best = best.max(len);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClaimCount {
    /// `(k, max over Q̃ of the count)` for `k = 0..=k_max`.
    pub counts: Vec<(u32, usize)>,
    /// Least-squares slope of `log₂ c_k` against `k` over nonzero counts.
    pub exponent: f64,
    /// Cubes that took part (non-central with a central neighbour).
    pub sources: usize,
    /// Of those, cubes with no chain or no assignment.
    pub skipped: usize,
}

/// For each `k`, the largest number of cubes `Q_i ∉ V` with a neighbour in
/// `V` whose chain `C_{i,0}` passes through one and the same `Q̃` with
/// `ℓ(Q̃) = 2^k ℓ(Q_i)`.
pub fn claim_count(w: &WhitneyDecomposition, map: &ReflectMap, graph: &ChainGraph, k_max: u32) -> Result<ClaimCount> {
    let mut per: HashMap<(usize, u32), usize> = HashMap::new();
    let mut chains: HashMap<usize, Option<Vec<Node>>> = HashMap::new();
    let (mut sources, mut skipped) = (0, 0);
    for (i, c) in w.resolved() {
        if map.is_central(i) || !w.neighbors(i).iter().any(|j| map.is_central(*j)) {
            continue;
        }
        sources += 1;
        let Some(ReflectTarget::Cube(r)) = map.get(i) else {
            skipped += 1;
            continue;
        };
        let path = chains
            .entry(r)
            .or_insert_with(|| chain(graph, Node::Cube(r), Node::Q0, ChainConstraint::ProjectionMonotone).ok());
        let Some(path) = path else {
            skipped += 1;
            continue;
        };
        for node in path.iter() {
            if let Node::Cube(q) = node {
                let k = c.gen - graph.wt.cubes[*q].gen;
                if k >= 0 && k as u32 <= k_max {
                    *per.entry((*q, k as u32)).or_default() += 1;
                }
            }
        }
    }
    let mut counts: Vec<(u32, usize)> = (0..=k_max).map(|k| (k, 0)).collect();
    for ((_, k), v) in per {
        let e = &mut counts[k as usize].1;
        *e = (*e).max(v);
    }
    let pts: Vec<(f64, f64)> = counts
        .iter()
        .filter(|(_, c)| *c > 0)
        .map(|&(k, c)| (k as f64, (c as f64).log2()))
        .collect();
    let exponent = if pts.len() >= 2 { slope(&pts) } else { f64::NAN };
    Ok(ClaimCount {
        counts,
        exponent,
        sources,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::{RegionKind, RegionSpec};
    use crate::whitney::{reflect_assign, whitney_decompose};

    #[test]
    fn trivial_chains_and_reverse_minimality() {
        let o = RegionSpec::slit(RegionKind::OmegaLambda, 2, 0.25).unwrap();
        let wt = whitney_decompose(&o, 7).unwrap();
        let g = ChainGraph::new(&wt).unwrap();
        let (a, _) = wt.resolved().next().unwrap();
        assert_eq!(
            chain(&g, Node::Cube(a), Node::Cube(a), ChainConstraint::None).unwrap(),
            vec![Node::Cube(a)]
        );
        let b = wt.neighbors(a)[0];
        assert_eq!(
            chain(&g, Node::Cube(a), Node::Cube(b), ChainConstraint::None)
                .unwrap()
                .len(),
            2
        );
        let ids: Vec<usize> = wt.resolved().map(|(i, _)| i).step_by(37).collect();
        for w in ids.windows(2) {
            let f = bfs(&g, Node::Cube(w[0]), Node::Cube(w[1]), ChainConstraint::None, false).unwrap();
            let r = bfs(&g, Node::Cube(w[0]), Node::Cube(w[1]), ChainConstraint::None, true).unwrap();
            assert_eq!(f.len(), r.len());
            for p in f.windows(2) {
                if let (Node::Cube(x), Node::Cube(y)) = (p[0], p[1]) {
                    assert!(wt.cubes[x].cube().touches(&wt.cubes[y].cube()));
                }
            }
        }
    }

    #[test]
    fn neighbour_chains_are_short() {
        let n = RegionSpec::slit(RegionKind::NLambda, 2, 0.25).unwrap();
        let o = RegionSpec::slit(RegionKind::OmegaLambda, 2, 0.25).unwrap();
        let w = whitney_decompose(&n, 8).unwrap();
        let wt = whitney_decompose(&o, 8).unwrap();
        let map = reflect_assign(&w, &wt).unwrap();
        let g = ChainGraph::new(&wt).unwrap();
        let c0 = max_neighbor_chain(&w, &map, &g).unwrap();
        assert!(c0 <= 12, "{c0}");
    }
}
