//! Multigraphs on vertex pairs (i ≤ j), used as multi-indices α.

use crate::error::{Error, Result};
use std::collections::BTreeSet;
use std::fmt;

/// Cap on Π(α_e + 1) when enumerating sub-multigraphs.
pub const SUBGRAPH_CAP: u64 = 1_000_000;

/// Canonical multigraph: sorted (i, j, multiplicity) triples with i ≤ j, multiplicity ≥ 1.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Multigraph {
    edges: Vec<(u16, u16, u32)>,
}

impl Multigraph {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(edges: impl IntoIterator<Item = (u16, u16, u32)>) -> Self {
        let mut v: Vec<(u16, u16, u32)> = edges
            .into_iter()
            .filter(|e| e.2 > 0)
            .map(|(i, j, m)| if i <= j { (i, j, m) } else { (j, i, m) })
            .collect();
        v.sort_unstable();
        let mut out: Vec<(u16, u16, u32)> = Vec::with_capacity(v.len());
        for e in v {
            match out.last_mut() {
                Some(l) if l.0 == e.0 && l.1 == e.1 => l.2 += e.2,
                _ => out.push(e),
            }
        }
        Self { edges: out }
    }

    pub fn from_pairs(pairs: &[(u16, u16)]) -> Self {
        Self::new(pairs.iter().map(|&(i, j)| (i, j, 1)))
    }

    pub fn edges(&self) -> &[(u16, u16, u32)] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// |α|, the total number of edges with multiplicity.
    pub fn size(&self) -> u32 {
        self.edges.iter().map(|e| e.2).sum()
    }

    /// V(α), the vertices touched by at least one edge.
    pub fn vertices(&self) -> BTreeSet<u16> {
        self.edges.iter().flat_map(|&(i, j, _)| [i, j]).collect()
    }

    pub fn multiplicity(&self, i: u16, j: u16) -> u32 {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.edges.iter().find(|e| (e.0, e.1) == key).map_or(0, |e| e.2)
    }

    /// α! = Π α_e!.
    pub fn factorial(&self) -> f64 {
        self.edges.iter().map(|e| crate::stats::factorial(e.2 as u64)).product()
    }

    /// β ≤ α coordinatewise.
    pub fn contains(&self, beta: &Multigraph) -> bool {
        beta.edges.iter().all(|&(i, j, m)| self.multiplicity(i, j) >= m)
    }

    /// C(α, β) = Π C(α_e, β_e); zero unless β ≤ α.
    pub fn binom(&self, beta: &Multigraph) -> f64 {
        if !self.contains(beta) {
            return 0.0;
        }
        beta.edges.iter().map(|&(i, j, m)| crate::stats::choose(self.multiplicity(i, j) as u64, m as u64)).product()
    }

    /// α − β, assuming β ≤ α.
    pub fn minus(&self, beta: &Multigraph) -> Multigraph {
        Multigraph {
            edges: self
                .edges
                .iter()
                .filter_map(|&(i, j, m)| {
                    let r = m - beta.multiplicity(i, j);
                    (r > 0).then_some((i, j, r))
                })
                .collect(),
        }
    }

    pub fn plus(&self, other: &Multigraph) -> Multigraph {
        Multigraph::new(self.edges.iter().chain(&other.edges).copied())
    }

    /// Every β with 0 ≤ β ≤ α, α included.
    pub fn sub_multigraphs(&self) -> Result<Vec<Multigraph>> {
        let count: u64 = self.edges.iter().map(|e| e.2 as u64 + 1).product();
        if count > SUBGRAPH_CAP {
            return Err(Error::Budget(format!("{count} sub-multigraphs exceed the cap {SUBGRAPH_CAP}")));
        }
        let mut out = vec![Multigraph::empty()];
        for &(i, j, m) in &self.edges {
            let mut next = Vec::with_capacity(out.len() * (m as usize + 1));
            for b in &out {
                for k in 0..=m {
                    let mut e = b.edges.clone();
                    if k > 0 {
                        e.push((i, j, k));
                    }
                    next.push(Multigraph { edges: e });
                }
            }
            out = next;
        }
        Ok(out)
    }

    /// Connected components that contain at least one edge.
    pub fn components(&self) -> Vec<Multigraph> {
        let verts: Vec<u16> = self.vertices().into_iter().collect();
        let idx = |v: u16| verts.binary_search(&v).unwrap();
        let mut parent: Vec<usize> = (0..verts.len()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let n = p[c];
                p[c] = r;
                c = n;
            }
            r
        }
        for &(i, j, _) in &self.edges {
            let (a, b) = (find(&mut parent, idx(i)), find(&mut parent, idx(j)));
            parent[a] = b;
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<(u16, u16, u32)>> = Default::default();
        for &e in &self.edges {
            let r = find(&mut parent, idx(e.0));
            groups.entry(r).or_default().push(e);
        }
        groups.into_values().map(|edges| Multigraph { edges }).collect()
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// True when some non-empty component does not touch `v`.
    pub fn has_component_avoiding(&self, v: u16) -> bool {
        self.components().iter().any(|c| !c.vertices().contains(&v))
    }

    /// Every multigraph on `n` vertices with 1 ≤ |α| ≤ max_size (plus the empty one),
    /// optionally with self-loops and a per-edge multiplicity cap.
    pub fn enumerate(n: u16, loops: bool, max_size: u32, max_mult: Option<u32>) -> Vec<Multigraph> {
        let pairs: Vec<(u16, u16)> = (0..n).flat_map(|i| ((if loops { i } else { i + 1 })..n).map(move |j| (i, j))).collect();
        let cap = max_mult.unwrap_or(max_size);
        let mut out = Vec::new();
        let mut cur: Vec<(u16, u16, u32)> = Vec::new();
        fn rec(pairs: &[(u16, u16)], start: usize, left: u32, cap: u32, cur: &mut Vec<(u16, u16, u32)>, out: &mut Vec<Multigraph>) {
            out.push(Multigraph { edges: cur.clone() });
            for p in start..pairs.len() {
                for m in 1..=left.min(cap) {
                    cur.push((pairs[p].0, pairs[p].1, m));
                    rec(pairs, p + 1, left - m, cap, cur, out);
                    cur.pop();
                }
            }
        }
        rec(&pairs, 0, max_size, cap, &mut cur, &mut out);
        out
    }

    /// Edge-list form "i-j^m;..." used in CSV exports.
    pub fn edge_string(&self) -> String {
        if self.edges.is_empty() {
            return "0".into();
        }
        self.edges.iter().map(|&(i, j, m)| if m == 1 { format!("{i}-{j}") } else { format!("{i}-{j}^{m}") }).collect::<Vec<_>>().join(";")
    }
}

impl fmt::Debug for Multigraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "α[{}]", self.edge_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_counts() {
        // multisets of size ≤ 4 drawn from the 15 pairs on 5 vertices with loops
        assert_eq!(Multigraph::enumerate(5, true, 4, None).len(), 3876);
        // binary (simple) graphs on 4 vertices: 2^6
        assert_eq!(Multigraph::enumerate(4, false, 6, Some(1)).len(), 64);
    }

    #[test]
    fn sub_multigraph_lattice() {
        let a = Multigraph::new([(0, 1, 2), (1, 2, 1)]);
        let subs = a.sub_multigraphs().unwrap();
        assert_eq!(subs.len(), 6);
        let total: f64 = subs.iter().map(|b| a.binom(b)).sum();
        assert_eq!(total, 8.0); // Σ_β C(α,β) = 2^{|α|}
        assert_eq!(a.minus(&Multigraph::from_pairs(&[(0, 1)])), Multigraph::new([(0, 1, 1), (1, 2, 1)]));
        assert_eq!(a.factorial(), 2.0);
    }

    #[test]
    fn components_and_avoidance() {
        let a = Multigraph::from_pairs(&[(0, 1), (2, 3), (3, 3)]);
        assert_eq!(a.components().len(), 2);
        assert!(a.has_component_avoiding(0));
        assert!(!Multigraph::from_pairs(&[(0, 1), (1, 2)]).has_component_avoiding(0));
        assert!(Multigraph::from_pairs(&[(1, 1)]).has_component_avoiding(0));
    }
}
