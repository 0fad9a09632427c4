//! Undirected graphs over `0..n` and the graph predicates the learning
//! algorithms are built from.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of node indices, iterated in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSet(BTreeSet<usize>);

impl NodeSet {
    pub fn new() -> Self {
        Self(BTreeSet::new())
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.contains(&i)
    }

    pub fn insert(&mut self, i: usize) -> bool {
        self.0.insert(i)
    }

    pub fn remove(&mut self, i: usize) -> bool {
        self.0.remove(&i)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn first(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        self.0.union(&other.0).copied().collect()
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        self.0.intersection(&other.0).copied().collect()
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        self.0.difference(&other.0).copied().collect()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<const K: usize> From<[usize; K]> for NodeSet {
    fn from(value: [usize; K]) -> Self {
        value.into_iter().collect()
    }
}

impl<'a> IntoIterator for &'a NodeSet {
    type Item = usize;
    type IntoIter = std::iter::Copied<std::collections::btree_set::Iter<'a, usize>>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter().copied()
    }
}

/// Canonical form of an undirected edge: smaller endpoint first.
pub fn edge(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Simple undirected graph on nodes `0..node_count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    adj: Vec<BTreeSet<usize>>,
}

impl UndirectedGraph {
    pub fn new(node_count: usize) -> Self {
        Self {
            adj: vec![BTreeSet::new(); node_count],
        }
    }

    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::new(node_count);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn chain(node_count: usize) -> Self {
        let mut g = Self::new(node_count);
        for i in 1..node_count {
            g.adj[i - 1].insert(i);
            g.adj[i].insert(i - 1);
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn check_node(&self, i: usize) -> Result<()> {
        if i < self.node_count() {
            Ok(())
        } else {
            Err(Error::InvalidNode {
                index: i,
                node_count: self.node_count(),
            })
        }
    }

    /// Adds `i - j`. Returns whether the edge was new.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<bool> {
        self.check_node(i)?;
        self.check_node(j)?;
        if i == j {
            return Err(Error::Graph(format!("self-loop on node {i}")));
        }
        self.adj[j].insert(i);
        Ok(self.adj[i].insert(j))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj.get(i).is_some_and(|n| n.contains(&j))
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[i].iter().copied()
    }

    pub fn neighbor_set(&self, i: usize) -> NodeSet {
        self.neighbors(i).collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, n) in self.adj.iter().enumerate() {
            out.extend(n.range(i + 1..).map(|&j| (i, j)));
        }
        out
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges().into_iter().collect()
    }

    pub fn is_subgraph_of(&self, other: &UndirectedGraph) -> bool {
        self.node_count() == other.node_count()
            && self.edges().into_iter().all(|(i, j)| other.has_edge(i, j))
    }

    /// Nodes of degree one.
    pub fn leaves(&self) -> NodeSet {
        (0..self.node_count()).filter(|&i| self.degree(i) == 1).collect()
    }

    /// Breadth-first hop distances from `source`, ignoring nodes in `blocked`.
    /// Unreachable nodes get `None`.
    pub fn distances_avoiding(&self, source: usize, blocked: &NodeSet) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count()];
        if blocked.contains(source) {
            return dist;
        }
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for v in self.neighbors(u) {
                if dist[v].is_none() && !blocked.contains(v) {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn distances(&self, source: usize) -> Vec<Option<usize>> {
        self.distances_avoiding(source, &NodeSet::new())
    }

    /// All-pairs hop distances (BFS from every node).
    pub fn distance_matrix(&self) -> Vec<Vec<Option<usize>>> {
        (0..self.node_count()).map(|i| self.distances(i)).collect()
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.node_count() {
            return Err(Error::Graph("permutation length mismatch".into()));
        }
        Self::from_edges(
            self.node_count(),
            self.edges().into_iter().map(|(i, j)| (perm[i], perm[j])),
        )
    }
}

/// Nodes at shortest-path distance exactly `n` from `i`.
pub fn n_hop_neighbors(g: &UndirectedGraph, i: usize, n: usize) -> Result<NodeSet> {
    g.check_node(i)?;
    Ok(g.distances(i)
        .into_iter()
        .enumerate()
        .filter_map(|(j, d)| (d == Some(n)).then_some(j))
        .collect())
}

/// Connected with exactly `N - 1` edges.
pub fn is_tree(g: &UndirectedGraph) -> bool {
    let n = g.node_count();
    if n == 0 {
        return false;
    }
    g.edge_count() == n - 1 && g.distances(0).iter().all(Option::is_some)
}

/// Tree topology plus an edge between every pair of 2-hop neighbours.
pub fn moral_graph(topology: &UndirectedGraph) -> Result<UndirectedGraph> {
    if !is_tree(topology) {
        return Err(Error::Graph("moral graph requires a tree topology".into()));
    }
    let mut moral = topology.clone();
    for k in 0..topology.node_count() {
        let nbrs: Vec<usize> = topology.neighbors(k).collect();
        for (a, &i) in nbrs.iter().enumerate() {
            for &j in &nbrs[a + 1..] {
                moral.add_edge(i, j)?;
            }
        }
    }
    Ok(moral)
}

/// Adds `i - j` whenever the moral graph has a path from `i` to `j` whose
/// intermediate nodes are all corrupt.
///
/// Each connected region `R` of corrupt nodes (connected through moral edges)
/// turns `R` together with its moral neighbourhood into a clique; this is
/// the same edge set as the path definition without enumerating paths.
pub fn perturbed_graph(moral: &UndirectedGraph, corrupt: &NodeSet) -> Result<UndirectedGraph> {
    for c in corrupt {
        moral.check_node(c)?;
    }
    let mut out = moral.clone();
    let mut seen = NodeSet::new();
    for start in corrupt {
        if seen.contains(start) {
            continue;
        }
        let mut closure = NodeSet::new();
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(u) = queue.pop_front() {
            closure.insert(u);
            for v in moral.neighbors(u) {
                closure.insert(v);
                if corrupt.contains(v) && seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        let members = closure.to_vec();
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                out.add_edge(i, j)?;
            }
        }
    }
    Ok(out)
}

/// Whether `N(i) ∪ {i}` is a clique.
pub fn neighborhood_is_clique(g: &UndirectedGraph, i: usize) -> Result<bool> {
    g.check_node(i)?;
    let nbrs: Vec<usize> = g.neighbors(i).collect();
    Ok(is_clique(g, &nbrs))
}

/// Whether every pair of distinct nodes in `nodes` is adjacent.
pub fn is_clique(g: &UndirectedGraph, nodes: &[usize]) -> bool {
    nodes.iter().enumerate().all(|(a, &i)| {
        nodes[a + 1..]
            .iter()
            .all(|&j| i == j || g.has_edge(i, j))
    })
}

/// Whether deleting `cut` leaves `c` and `d` in different components.
pub fn separates(g: &UndirectedGraph, c: usize, d: usize, cut: &NodeSet) -> Result<bool> {
    g.check_node(c)?;
    g.check_node(d)?;
    if cut.contains(c) || cut.contains(d) {
        return Err(Error::Graph(format!(
            "separation endpoints {c}, {d} must not belong to the cut"
        )));
    }
    Ok(g.distances_avoiding(c, cut)[d].is_none())
}

/// Connected components ordered by their smallest member.
pub fn connected_components(g: &UndirectedGraph) -> Vec<NodeSet> {
    components_within(g, &(0..g.node_count()).collect())
}

/// Connected components of the subgraph induced on `nodes`, ordered by
/// their smallest member.
pub fn components_within(g: &UndirectedGraph, nodes: &NodeSet) -> Vec<NodeSet> {
    let blocked: NodeSet = (0..g.node_count()).filter(|&i| !nodes.contains(i)).collect();
    let mut assigned = NodeSet::new();
    let mut out = Vec::new();
    for start in nodes {
        if assigned.contains(start) {
            continue;
        }
        let comp: NodeSet = g
            .distances_avoiding(start, &blocked)
            .into_iter()
            .enumerate()
            .filter_map(|(j, d)| d.map(|_| j))
            .collect();
        for j in &comp {
            assigned.insert(j);
        }
        out.push(comp);
    }
    out
}

/// JSON form used for graph files: labels plus label pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<String>,
    pub edges: Vec<[String; 2]>,
}

impl GraphJson {
    pub fn from_graph(g: &UndirectedGraph, labels: &[String]) -> Result<Self> {
        if labels.len() != g.node_count() {
            return Err(Error::Data(format!(
                "{} labels for a graph with {} nodes",
                labels.len(),
                g.node_count()
            )));
        }
        let mut edges: Vec<[String; 2]> = g
            .edges()
            .into_iter()
            .map(|(i, j)| {
                let (a, b) = (labels[i].clone(), labels[j].clone());
                if a <= b {
                    [a, b]
                } else {
                    [b, a]
                }
            })
            .collect();
        edges.sort();
        Ok(Self {
            nodes: labels.to_vec(),
            edges,
        })
    }

    pub fn to_graph(&self) -> Result<UndirectedGraph> {
        let index = |label: &str| {
            self.nodes
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| Error::Data(format!("unknown node label {label:?}")))
        };
        let mut g = UndirectedGraph::new(self.nodes.len());
        for [a, b] in &self.edges {
            g.add_edge(index(a)?, index(b)?)?;
        }
        Ok(g)
    }
}

/// Per-node and per-edge styling for [`to_dot`].
#[derive(Debug, Default, Clone)]
pub struct DotStyle {
    pub node_attrs: Vec<(usize, String)>,
    pub edge_attrs: Vec<((usize, usize), String)>,
}

/// Graphviz rendering with edges in canonical order.
pub fn to_dot(g: &UndirectedGraph, labels: &[String], name: &str, style: &DotStyle) -> String {
    let mut out = format!("graph \"{name}\" {{\n");
    for (i, label) in labels.iter().enumerate().take(g.node_count()) {
        let attrs: Vec<&str> = style
            .node_attrs
            .iter()
            .filter(|(n, _)| *n == i)
            .map(|(_, a)| a.as_str())
            .collect();
        if attrs.is_empty() {
            out.push_str(&format!("  \"{label}\";\n"));
        } else {
            out.push_str(&format!("  \"{label}\" [{}];\n", attrs.join(", ")));
        }
    }
    for (i, j) in g.edges() {
        let attrs: Vec<&str> = style
            .edge_attrs
            .iter()
            .filter(|(e, _)| *e == (i, j))
            .map(|(_, a)| a.as_str())
            .collect();
        if attrs.is_empty() {
            out.push_str(&format!("  \"{}\" -- \"{}\";\n", labels[i], labels[j]));
        } else {
            out.push_str(&format!(
                "  \"{}\" -- \"{}\" [{}];\n",
                labels[i],
                labels[j],
                attrs.join(", ")
            ));
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // Chain 1-2-...-7 from the worked example, stored 0-based.
    fn chain7() -> UndirectedGraph {
        UndirectedGraph::chain(7)
    }

    fn set(one_based: &[usize]) -> NodeSet {
        one_based.iter().map(|i| i - 1).collect()
    }

    fn edges1(one_based: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
        one_based.iter().map(|&(a, b)| edge(a - 1, b - 1)).collect()
    }

    #[test]
    fn n_hop_on_chain() {
        let g = chain7();
        assert_eq!(n_hop_neighbors(&g, 3, 1).unwrap(), set(&[3, 5]));
        assert_eq!(n_hop_neighbors(&g, 0, 2).unwrap(), set(&[3]));
        let isolated = UndirectedGraph::new(3);
        assert!(n_hop_neighbors(&isolated, 1, 1).unwrap().is_empty());
        assert!(n_hop_neighbors(&g, 9, 1).is_err());
    }

    #[test]
    fn tree_predicate() {
        assert!(is_tree(&chain7()));
        let mut cyc = chain7();
        cyc.add_edge(0, 6).unwrap();
        assert!(!is_tree(&cyc));
        assert!(is_tree(&UndirectedGraph::new(1)));
        // right edge count, disconnected
        let forest = UndirectedGraph::from_edges(4, [(0, 1), (0, 2), (1, 2)]).unwrap();
        assert!(!is_tree(&forest));
    }

    #[test]
    fn moral_graph_of_chain_and_star() {
        let m = moral_graph(&chain7()).unwrap();
        let mut expected = edges1(&[(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7)]);
        expected.extend(edges1(&[(1, 3), (2, 4), (3, 5), (4, 6), (5, 7)]));
        assert_eq!(m.edge_set(), expected);

        let two = UndirectedGraph::chain(2);
        assert_eq!(moral_graph(&two).unwrap(), two);

        let star = UndirectedGraph::from_edges(5, [(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let m = moral_graph(&star).unwrap();
        // complete graph on five nodes
        assert_eq!(m.edge_count(), 10);

        let mut cyc = chain7();
        cyc.add_edge(0, 6).unwrap();
        assert!(moral_graph(&cyc).is_err());
    }

    #[test]
    fn perturbed_graph_examples() {
        let m = moral_graph(&chain7()).unwrap();
        let g = perturbed_graph(&m, &set(&[4])).unwrap();
        let mut expected = m.edge_set();
        expected.extend(edges1(&[(2, 5), (2, 6), (3, 6)]));
        assert_eq!(g.edge_set(), expected);

        assert_eq!(perturbed_graph(&m, &NodeSet::new()).unwrap(), m);

        let g = perturbed_graph(&m, &set(&[2])).unwrap();
        let mut expected = m.edge_set();
        expected.insert(edge(0, 3));
        assert_eq!(g.edge_set(), expected);
    }

    #[test]
    fn clique_neighbourhoods_in_fig3c() {
        let m = moral_graph(&chain7()).unwrap();
        let g = perturbed_graph(&m, &set(&[4])).unwrap();
        let cliques: NodeSet = (0..7)
            .filter(|&i| neighborhood_is_clique(&g, i).unwrap())
            .collect();
        assert_eq!(cliques, set(&[1, 4, 7]));

        let pair = UndirectedGraph::chain(2);
        assert!(neighborhood_is_clique(&pair, 0).unwrap());
    }

    fn fig5a() -> UndirectedGraph {
        let e = edges1(&[
            (1, 2),
            (2, 3),
            (3, 5),
            (5, 6),
            (6, 7),
            (1, 3),
            (5, 7),
            (2, 5),
            (2, 6),
            (3, 6),
        ]);
        UndirectedGraph::from_edges(7, e).unwrap()
    }

    #[test]
    fn separation_examples() {
        let g = fig5a();
        // Deleting {2,3} strands node 1.
        assert!(separates(&g, 0, 6, &set(&[2, 3])).unwrap());
        assert!(!separates(&chain7(), 0, 6, &NodeSet::new()).unwrap());
        let c3 = UndirectedGraph::chain(3);
        assert!(separates(&c3, 0, 2, &NodeSet::from([1])).unwrap());
        assert!(separates(&c3, 0, 1, &NodeSet::from([1])).is_err());
    }

    #[test]
    fn components_are_ordered_by_smallest_member() {
        let e = edges1(&[(1, 2), (2, 3), (5, 6), (6, 7)]);
        let g = UndirectedGraph::from_edges(7, e).unwrap();
        let observed = set(&[1, 2, 3, 5, 6, 7]);
        assert_eq!(
            components_within(&g, &observed),
            vec![set(&[1, 2, 3]), set(&[5, 6, 7])]
        );
        assert_eq!(connected_components(&chain7()).len(), 1);
        assert_eq!(
            connected_components(&UndirectedGraph::new(3)),
            vec![NodeSet::from([0]), NodeSet::from([1]), NodeSet::from([2])]
        );
    }

    #[test]
    fn json_round_trip_and_dot() {
        let labels: Vec<String> = (1..=7).map(|i| i.to_string()).collect();
        let g = fig5a();
        let json = GraphJson::from_graph(&g, &labels).unwrap();
        assert_eq!(json.edges[0], ["1".to_string(), "2".to_string()]);
        assert_eq!(json.to_graph().unwrap(), g);
        let dot = to_dot(&g, &labels, "g", &DotStyle::default());
        assert!(dot.starts_with("graph \"g\" {"));
        assert_eq!(dot.matches(" -- ").count(), 10);
    }
}
