use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Node index. Lower indices take precedence in the asynchronous protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Undirected edge stored with the smaller endpoint first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(pub NodeId, pub NodeId);

impl Edge {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Star,
    Tree,
    General,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologySpec {
    /// Node 0 at the centre, nodes `1..k` as leaves.
    Star(usize),
    /// Nodes `0..k` in a line.
    Path(usize),
    /// Each node `i ≥ 1` attaches to a uniformly chosen node `< i`.
    RandomTree { nodes: usize, seed: u64 },
    /// Explicit edge list; `nodes` may list isolated extras (which then fail
    /// the connectivity check unless the graph has a single node).
    Explicit { nodes: Vec<u32>, edges: Vec<(u32, u32)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<NodeId>,
    edges: Vec<Edge>,
    kind: TopologyKind,
    adjacency: BTreeMap<NodeId, Vec<NodeId>>,
}

/// Builds and validates a topology. Graphs must be connected; when
/// `require_acyclic` is set, cycles are rejected as well.
pub fn build_topology(spec: &TopologySpec, require_acyclic: bool) -> Result<Topology> {
    let (nodes, edges): (Vec<u32>, Vec<(u32, u32)>) = match spec {
        TopologySpec::Star(k) => {
            check_count(*k)?;
            ((0..*k as u32).collect(), (1..*k as u32).map(|i| (0, i)).collect())
        }
        TopologySpec::Path(k) => {
            check_count(*k)?;
            ((0..*k as u32).collect(), (1..*k as u32).map(|i| (i - 1, i)).collect())
        }
        TopologySpec::RandomTree { nodes, seed } => {
            check_count(*nodes)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let edges = (1..*nodes as u32).map(|i| (rng.random_range(0..i), i)).collect();
            ((0..*nodes as u32).collect(), edges)
        }
        TopologySpec::Explicit { nodes, edges } => {
            let mut all: BTreeSet<u32> = nodes.iter().copied().collect();
            for (a, b) in edges {
                all.insert(*a);
                all.insert(*b);
            }
            if nodes.len() != nodes.iter().collect::<BTreeSet<_>>().len() {
                return Err(Error::config("node indices must be unique"));
            }
            (all.into_iter().collect(), edges.clone())
        }
    };
    let topo = Topology::from_parts(nodes, &edges)?;
    if !topo.is_connected() {
        return Err(Error::config("topology is disconnected"));
    }
    if require_acyclic && !topo.is_acyclic() {
        return Err(Error::config(
            "topology contains a cycle; the asynchronous protocol needs an acyclic graph",
        ));
    }
    Ok(topo)
}

fn check_count(k: usize) -> Result<()> {
    if k == 0 || k > u32::MAX as usize {
        return Err(Error::config("topology needs at least one node"));
    }
    Ok(())
}

/// BFS spanning tree rooted at `root`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    pub root: NodeId,
    pub parent: BTreeMap<NodeId, NodeId>,
    pub children: BTreeMap<NodeId, Vec<NodeId>>,
    pub depth: u64,
}

impl SpanningTree {
    pub fn contains(&self, n: NodeId) -> bool {
        n == self.root || self.parent.contains_key(&n)
    }

    pub fn children_of(&self, n: NodeId) -> &[NodeId] {
        self.children.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Topology {
    fn from_parts(nodes: Vec<u32>, edges: &[(u32, u32)]) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::config("topology needs at least one node"));
        }
        let nodes: Vec<NodeId> = nodes.into_iter().map(NodeId).collect();
        let mut adjacency: BTreeMap<NodeId, Vec<NodeId>> = nodes.iter().map(|n| (*n, Vec::new())).collect();
        let mut seen = BTreeSet::new();
        let mut norm_edges = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::config(format!("self-loop on node {a}")));
            }
            let e = Edge::new(NodeId(a), NodeId(b));
            if !seen.insert(e) {
                return Err(Error::config(format!("duplicate edge ({a}, {b})")));
            }
            adjacency.get_mut(&e.0).expect("endpoint registered").push(e.1);
            adjacency.get_mut(&e.1).expect("endpoint registered").push(e.0);
            norm_edges.push(e);
        }
        adjacency.values_mut().for_each(|v| v.sort_unstable());
        let mut t = Topology {
            nodes,
            edges: norm_edges,
            kind: TopologyKind::General,
            adjacency,
        };
        t.kind = t.classify();
        Ok(t)
    }

    fn classify(&self) -> TopologyKind {
        if !self.is_acyclic() || !self.is_connected() {
            return TopologyKind::General;
        }
        let k = self.nodes.len();
        if k >= 3 && self.adjacency.values().any(|v| v.len() == k - 1) {
            TopologyKind::Star
        } else {
            TopologyKind::Tree
        }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.adjacency.contains_key(&n)
    }

    /// Position of `n` in [`Topology::nodes`], which is sorted.
    pub fn index_of(&self, n: NodeId) -> Option<usize> {
        self.nodes.binary_search(&n).ok()
    }

    pub fn neighbors(&self, n: NodeId) -> &[NodeId] {
        self.adjacency.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    pub fn is_acyclic(&self) -> bool {
        // A forest has |E| = |V| − #components.
        self.edges.len() + self.components(&BTreeSet::new(), |_| true).len() == self.nodes.len()
    }

    pub fn is_connected(&self) -> bool {
        self.components(&BTreeSet::new(), |_| true).len() == 1
    }

    /// Hop distances from `from` over nodes accepted by `include`, avoiding
    /// `cut` edges.
    pub fn distances_from(
        &self,
        from: NodeId,
        cut: &BTreeSet<Edge>,
        include: impl Fn(NodeId) -> bool,
    ) -> BTreeMap<NodeId, u64> {
        let mut dist = BTreeMap::new();
        if !self.contains(from) || !include(from) {
            return dist;
        }
        dist.insert(from, 0u64);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            let du = dist[&u];
            for &v in self.neighbors(u) {
                if include(v) && !cut.contains(&Edge::new(u, v)) && !dist.contains_key(&v) {
                    dist.insert(v, du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Connected components over nodes accepted by `include`, avoiding `cut`
    /// edges. Components and their members come out sorted.
    pub fn components(&self, cut: &BTreeSet<Edge>, include: impl Fn(NodeId) -> bool + Copy) -> Vec<Vec<NodeId>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &n in &self.nodes {
            if !include(n) || seen.contains(&n) {
                continue;
            }
            let comp: Vec<NodeId> = self.distances_from(n, cut, include).into_keys().collect();
            seen.extend(comp.iter().copied());
            out.push(comp);
        }
        out
    }

    /// Diameter of the whole graph (all-pairs BFS).
    pub fn diameter(&self) -> u64 {
        self.diameter_of(&self.nodes, &BTreeSet::new())
    }

    /// Diameter of the subgraph induced by `members` with `cut` edges removed.
    /// Pairs that are disconnected are ignored.
    pub fn diameter_of(&self, members: &[NodeId], cut: &BTreeSet<Edge>) -> u64 {
        let set: BTreeSet<NodeId> = members.iter().copied().collect();
        members
            .iter()
            .map(|&n| {
                self.distances_from(n, cut, |x| set.contains(&x))
                    .values()
                    .copied()
                    .max()
                    .unwrap_or(0)
            })
            .max()
            .unwrap_or(0)
    }

    /// BFS spanning tree over nodes accepted by `include`, rooted at `root`.
    pub fn spanning_tree(&self, root: NodeId, include: impl Fn(NodeId) -> bool) -> SpanningTree {
        let mut parent = BTreeMap::new();
        let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        let mut depth_of = BTreeMap::from([(root, 0u64)]);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if include(v) && !depth_of.contains_key(&v) {
                    depth_of.insert(v, depth_of[&u] + 1);
                    parent.insert(v, u);
                    children.entry(u).or_default().push(v);
                    queue.push_back(v);
                }
            }
        }
        SpanningTree {
            root,
            parent,
            children,
            depth: depth_of.values().copied().max().unwrap_or(0),
        }
    }
}

/// Graph diameter via all-pairs BFS.
pub fn diameter(topo: &Topology) -> u64 {
    topo.diameter()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn star_structure() {
        let t = build_topology(&TopologySpec::Star(5), true).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.edges().len(), 4);
        assert_eq!(diameter(&t), 2);
        assert_eq!(t.kind(), TopologyKind::Star);
    }

    #[test]
    fn path_diameters() {
        assert_eq!(build_topology(&TopologySpec::Path(4), true).unwrap().diameter(), 3);
        assert_eq!(build_topology(&TopologySpec::Path(5), true).unwrap().diameter(), 4);
        assert_eq!(build_topology(&TopologySpec::Path(1), true).unwrap().diameter(), 0);
    }

    #[test]
    fn triangle_is_rejected_for_acyclic_use() {
        let spec = TopologySpec::Explicit {
            nodes: vec![],
            edges: vec![(1, 2), (2, 3), (3, 1)],
        };
        assert!(build_topology(&spec, true).is_err());
        let t = build_topology(&spec, false).unwrap();
        assert_eq!(t.kind(), TopologyKind::General);
        assert_eq!(t.diameter(), 1);
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let spec = TopologySpec::Explicit {
            nodes: vec![],
            edges: vec![(1, 2), (3, 4)],
        };
        assert!(build_topology(&spec, false).is_err());
    }

    #[test]
    fn duplicate_and_self_edges_are_rejected() {
        for edges in [vec![(1, 2), (2, 1)], vec![(1, 1)]] {
            let spec = TopologySpec::Explicit { nodes: vec![], edges };
            assert!(build_topology(&spec, false).is_err());
        }
    }

    /// Floyd–Warshall on an adjacency matrix, independent of the BFS path.
    fn brute_force_diameter(t: &Topology) -> u64 {
        let k = t.len();
        let idx: BTreeMap<NodeId, usize> = t.nodes().iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let inf = u64::MAX / 4;
        let mut d = vec![vec![inf; k]; k];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for e in t.edges() {
            d[idx[&e.0]][idx[&e.1]] = 1;
            d[idx[&e.1]][idx[&e.0]] = 1;
        }
        for m in 0..k {
            for i in 0..k {
                for j in 0..k {
                    if d[i][m] + d[m][j] < d[i][j] {
                        d[i][j] = d[i][m] + d[m][j];
                    }
                }
            }
        }
        d.iter().flatten().copied().max().unwrap()
    }

    #[test]
    fn random_tree_diameter_matches_brute_force() {
        let t = build_topology(&TopologySpec::RandomTree { nodes: 15, seed: 7 }, true).unwrap();
        assert_eq!(t.edges().len(), 14);
        assert_eq!(t.diameter(), brute_force_diameter(&t));
        for seed in 0..30 {
            let t = build_topology(
                &TopologySpec::RandomTree {
                    nodes: 2 + seed as usize % 14,
                    seed,
                },
                true,
            )
            .unwrap();
            assert_eq!(t.diameter(), brute_force_diameter(&t));
        }
    }

    #[test]
    fn cut_edges_split_components() {
        let t = build_topology(&TopologySpec::Path(4), true).unwrap();
        let cut = BTreeSet::from([Edge::new(NodeId(1), NodeId(2))]);
        let comps = t.components(&cut, |_| true);
        assert_eq!(comps, vec![vec![NodeId(0), NodeId(1)], vec![NodeId(2), NodeId(3)]]);
        assert_eq!(t.diameter_of(&comps[1], &cut), 1);
    }

    #[test]
    fn spanning_tree_skips_excluded_nodes() {
        let t = build_topology(&TopologySpec::Star(4), true).unwrap();
        let tree = t.spanning_tree(NodeId(0), |n| n != NodeId(2));
        assert_eq!(tree.children_of(NodeId(0)), &[NodeId(1), NodeId(3)]);
        assert!(!tree.contains(NodeId(2)));
        assert_eq!(tree.depth, 1);
    }
}
