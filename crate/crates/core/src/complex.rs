//! Graphs and their oriented clique (Whitney) complexes.
//!
//! Simplices are stored grouped by dimension; inside a dimension they are
//! sorted lexicographically by their ascending vertex labels. That ordering
//! is the row/column ordering of every operator built on top of the complex.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default cap on the number of enumerated simplices.
pub const DEFAULT_SIMPLEX_CAP: usize = 20_000;

/// A finite simple graph with nonnegative integer vertex labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    vertices: BTreeSet<u64>,
    edges: BTreeSet<(u64, u64)>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicate edges and undeclared endpoints.
    pub fn new(
        vertices: impl IntoIterator<Item = u64>,
        edges: impl IntoIterator<Item = (u64, u64)>,
    ) -> Result<Self> {
        let vertices: BTreeSet<u64> = vertices.into_iter().collect();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Validation(format!("self-loop at vertex {a}")));
            }
            if !vertices.contains(&a) || !vertices.contains(&b) {
                return Err(Error::Validation(format!(
                    "edge {{{a},{b}}} references an undeclared vertex"
                )));
            }
            let key = (a.min(b), a.max(b));
            if !set.insert(key) {
                return Err(Error::Validation(format!("duplicate edge {{{a},{b}}}")));
            }
        }
        Ok(Self {
            vertices,
            edges: set,
        })
    }

    /// Complete graph on the labels `1..=n`.
    pub fn complete(n: u64) -> Self {
        let edges = (1..=n).flat_map(|a| (a + 1..=n).map(move |b| (a, b)));
        Self::new(1..=n, edges).expect("complete graph is valid")
    }

    /// Cycle graph on the labels `1..=n` (`n >= 3`).
    pub fn cycle(n: u64) -> Self {
        let edges = (1..=n).map(|a| (a, a % n + 1));
        Self::new(1..=n, edges).expect("cycle graph is valid")
    }

    /// Star with one center `1` and `leaves` leaves `2..=leaves+1`.
    pub fn star(leaves: u64) -> Self {
        Self::new(1..=leaves + 1, (2..=leaves + 1).map(|b| (1, b))).expect("star is valid")
    }

    /// Erdős–Rényi graph on `1..=n` with edge probability `p`, deterministic in `seed`.
    pub fn erdos_renyi(n: u64, p: f64, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for a in 1..=n {
            for b in a + 1..=n {
                if rng.random::<f64>() < p {
                    edges.push((a, b));
                }
            }
        }
        Self::new(1..=n, edges).expect("random graph is valid")
    }

    /// Disjoint union; labels of `other` are shifted past the largest label of `self`.
    pub fn disjoint_union(&self, other: &Graph) -> Self {
        let shift = self.vertices.iter().next_back().map_or(0, |m| m + 1);
        let vertices = self
            .vertices
            .iter()
            .copied()
            .chain(other.vertices.iter().map(|v| v + shift));
        let edges = self
            .edges
            .iter()
            .copied()
            .chain(other.edges.iter().map(|&(a, b)| (a + shift, b + shift)));
        Self::new(vertices, edges).expect("disjoint union is valid")
    }

    pub fn vertices(&self) -> &BTreeSet<u64> {
        &self.vertices
    }

    pub fn edges(&self) -> &BTreeSet<(u64, u64)> {
        &self.edges
    }

    /// Serializes back into the edge-list format.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {v}\n"));
        }
        for (a, b) in &self.edges {
            out.push_str(&format!("e {a} {b}\n"));
        }
        out
    }
}

/// Parses the edge-list document format.
///
/// Each non-empty line is `v <id>` or `e <id> <id>`; everything after `#` is
/// ignored. Vertices that only appear in edges are declared implicitly.
pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut vertices = BTreeSet::new();
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let kind = tokens.next().unwrap_or("");
        let ids: Vec<&str> = tokens.collect();
        let parse_id = |s: &str| -> Result<u64> {
            s.parse::<u64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid vertex id '{s}'"),
            })
        };
        match (kind, ids.as_slice()) {
            ("v", [id]) => {
                vertices.insert(parse_id(id)?);
            }
            ("e", [a, b]) => {
                let (a, b) = (parse_id(a)?, parse_id(b)?);
                vertices.insert(a);
                vertices.insert(b);
                edges.push((a, b));
            }
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 'v <id>' or 'e <id> <id>', got '{line}'"),
                })
            }
        }
    }
    if vertices.is_empty() {
        return Err(Error::Validation("graph has no vertices".into()));
    }
    Graph::new(vertices, edges)
}

/// One simplex: its vertex set (ascending) and the chosen vertex ordering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Simplex {
    pub vertices: Vec<u64>,
    pub orientation: Vec<u64>,
}

impl Simplex {
    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Sign of the permutation taking the ascending order to the orientation.
    pub fn orientation_sign(&self) -> i32 {
        permutation_sign(&self.vertices, &self.orientation)
    }
}

/// Sign of the permutation mapping `reference` onto `ordering` (same elements).
pub(crate) fn permutation_sign(reference: &[u64], ordering: &[u64]) -> i32 {
    let mut perm: Vec<usize> = ordering
        .iter()
        .map(|v| reference.iter().position(|r| r == v).expect("same vertex set"))
        .collect();
    let mut sign = 1;
    for i in 0..perm.len() {
        while perm[i] != i {
            let j = perm[i];
            perm.swap(i, j);
            sign = -sign;
        }
    }
    sign
}

/// The clique complex of a graph with one orientation per simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientedComplex {
    simplices: Vec<Simplex>,
    f_vector: Vec<usize>,
    index: HashMap<Vec<u64>, usize>,
}

impl OrientedComplex {
    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    /// Number of simplices per dimension.
    pub fn f_vector(&self) -> &[usize] {
        &self.f_vector
    }

    /// Total number of simplices, the size of every operator.
    pub fn total_dim(&self) -> usize {
        self.simplices.len()
    }

    /// Highest simplex dimension present.
    pub fn max_dim(&self) -> usize {
        self.f_vector.len() - 1
    }

    /// Matrix index of a simplex given by its vertex set (any order).
    pub fn index_of(&self, vertices: &[u64]) -> Option<usize> {
        let mut key = vertices.to_vec();
        key.sort_unstable();
        self.index.get(&key).copied()
    }

    /// Matrix index of a vertex label.
    pub fn vertex_index(&self, label: u64) -> Option<usize> {
        self.index.get(&vec![label]).copied()
    }

    /// Vertex labels in index order.
    pub fn vertex_labels(&self) -> Vec<u64> {
        self.simplices[..self.f_vector[0]]
            .iter()
            .map(|s| s.vertices[0])
            .collect()
    }

    /// Simplices of dimension `k`.
    pub fn of_dim(&self, k: usize) -> &[Simplex] {
        let start: usize = self.f_vector[..k].iter().sum();
        &self.simplices[start..start + self.f_vector[k]]
    }

    /// Sum of `(-1)^k v_k`.
    pub fn euler_characteristic(&self) -> i64 {
        euler_characteristic(self)
    }
}

/// Enumerates all cliques with the default cap.
pub fn build_complex(g: &Graph) -> Result<OrientedComplex> {
    build_complex_with_cap(g, DEFAULT_SIMPLEX_CAP)
}

/// Enumerates all cliques of `g`, failing once more than `cap` simplices appear.
pub fn build_complex_with_cap(g: &Graph, cap: usize) -> Result<OrientedComplex> {
    let labels: Vec<u64> = g.vertices.iter().copied().collect();
    let dense: HashMap<u64, usize> = labels.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let n = labels.len();
    // Forward adjacency: neighbours with a larger dense index.
    let mut higher: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(a, b) in &g.edges {
        let (i, j) = (dense[&a], dense[&b]);
        higher[i.min(j)].insert(i.max(j));
    }

    let mut cliques: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<(Vec<usize>, BTreeSet<usize>)> = (0..n)
        .rev()
        .map(|v| (vec![v], higher[v].clone()))
        .collect();
    while let Some((clique, candidates)) = stack.pop() {
        cliques.push(clique.clone());
        if cliques.len() > cap {
            return Err(Error::TooManySimplices { cap });
        }
        for &c in candidates.iter().rev() {
            let next: BTreeSet<usize> = candidates
                .range(c + 1..)
                .filter(|x| higher[c].contains(x))
                .copied()
                .collect();
            let mut grown = clique.clone();
            grown.push(c);
            stack.push((grown, next));
        }
    }

    cliques.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let max_len = cliques.iter().map(Vec::len).max().unwrap_or(1);
    let mut f_vector = vec![0usize; max_len];
    let mut simplices = Vec::with_capacity(cliques.len());
    let mut index = HashMap::with_capacity(cliques.len());
    for (i, c) in cliques.into_iter().enumerate() {
        f_vector[c.len() - 1] += 1;
        let vertices: Vec<u64> = c.iter().map(|&k| labels[k]).collect();
        index.insert(vertices.clone(), i);
        simplices.push(Simplex {
            orientation: vertices.clone(),
            vertices,
        });
    }
    Ok(OrientedComplex {
        simplices,
        f_vector,
        index,
    })
}

/// Sum of `(-1)^k v_k` over the f-vector.
pub fn euler_characteristic(c: &OrientedComplex) -> i64 {
    c.f_vector
        .iter()
        .enumerate()
        .map(|(k, &n)| if k % 2 == 0 { n as i64 } else { -(n as i64) })
        .sum()
}

/// Same complex with each simplex's vertex order shuffled, deterministic in `seed`.
pub fn reorient(c: &OrientedComplex, seed: u64) -> OrientedComplex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = c.clone();
    for s in &mut out.simplices {
        s.orientation.shuffle(&mut rng);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_edge() {
        let g = parse_graph("e 1 2").unwrap();
        assert_eq!(g.vertices().iter().copied().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn parses_isolated_vertex() {
        let g = parse_graph("v 7").unwrap();
        assert_eq!(g.vertices().len(), 1);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn parses_triangle_with_comments() {
        let g = parse_graph("# triangle\ne 1 2\ne 2 3 # second\n\ne 1 3\n").unwrap();
        assert_eq!(g, Graph::complete(3));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse_graph("e 1 2\nx 3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_graph("e 1 two"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(parse_graph("e 1"), Err(Error::Parse { .. })));
    }

    #[test]
    fn self_loop_and_duplicates_rejected() {
        assert!(matches!(parse_graph("e 3 3"), Err(Error::Validation(_))));
        assert!(matches!(
            parse_graph("e 1 2\ne 2 1"),
            Err(Error::Validation(_))
        ));
        assert!(matches!(parse_graph("# nothing\n"), Err(Error::Validation(_))));
    }

    #[test]
    fn f_vectors_of_small_graphs() {
        let k2 = build_complex(&Graph::complete(2)).unwrap();
        assert_eq!(k2.f_vector(), &[2, 1]);
        assert_eq!(k2.total_dim(), 3);
        let k3 = build_complex(&Graph::complete(3)).unwrap();
        assert_eq!(k3.f_vector(), &[3, 3, 1]);
        assert_eq!(k3.total_dim(), 7);
        let c4 = build_complex(&Graph::cycle(4)).unwrap();
        assert_eq!(c4.f_vector(), &[4, 4]);
        let k5 = build_complex(&Graph::complete(5)).unwrap();
        assert_eq!(k5.f_vector(), &[5, 10, 10, 5, 1]);
    }

    #[test]
    fn euler_characteristics() {
        let chi = |g: Graph| build_complex(&g).unwrap().euler_characteristic();
        assert_eq!(chi(Graph::complete(2)), 1);
        assert_eq!(chi(Graph::complete(3)), 1);
        assert_eq!(chi(Graph::cycle(4)), 0);
        assert_eq!(chi(Graph::complete(2).disjoint_union(&Graph::complete(2))), 2);
    }

    #[test]
    fn cap_fails_loudly() {
        let g = Graph::complete(10);
        assert!(matches!(
            build_complex_with_cap(&g, 100),
            Err(Error::TooManySimplices { cap: 100 })
        ));
    }

    #[test]
    fn arbitrary_labels_are_densely_ordered() {
        let g = parse_graph("e 40 7\ne 7 100").unwrap();
        let c = build_complex(&g).unwrap();
        assert_eq!(c.vertex_labels(), vec![7, 40, 100]);
        assert_eq!(c.index_of(&[100, 7]), Some(4));
        assert_eq!(c.vertex_index(40), Some(1));
    }

    #[test]
    fn reorient_is_deterministic() {
        let c = build_complex(&Graph::complete(4)).unwrap();
        assert_eq!(reorient(&c, 9), reorient(&c, 9));
        let single = build_complex(&parse_graph("v 3").unwrap()).unwrap();
        assert_eq!(reorient(&single, 5), single);
    }

    #[test]
    fn permutation_signs() {
        assert_eq!(permutation_sign(&[1, 2, 3], &[1, 2, 3]), 1);
        assert_eq!(permutation_sign(&[1, 2, 3], &[2, 1, 3]), -1);
        assert_eq!(permutation_sign(&[1, 2, 3], &[2, 3, 1]), 1);
    }
}
