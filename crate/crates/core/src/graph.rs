//! DAGs, moral graphs, k-trees and elimination-order treewidth
//! certificates.

use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A DAG stored as one sorted parent list per node, optionally carrying the
/// local score of each node.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    parents: Vec<Vec<usize>>,
    scores: Option<Vec<f64>>,
}

impl Dag {
    pub fn new(mut parents: Vec<Vec<usize>>) -> Result<Self> {
        let n = parents.len();
        for (v, ps) in parents.iter_mut().enumerate() {
            ps.sort_unstable();
            ps.dedup();
            if let Some(&p) = ps.iter().find(|&&p| p >= n) {
                return Err(Error::VariableOutOfRange(p));
            }
            if ps.contains(&v) {
                return Err(Error::Cycle(vec![v]));
            }
        }
        if let Some(cycle) = find_cycle(&parents) {
            return Err(Error::Cycle(cycle));
        }
        Ok(Self {
            parents,
            scores: None,
        })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            parents: vec![Vec::new(); n],
            scores: None,
        }
    }

    pub fn with_scores(mut self, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != self.n() {
            return Err(Error::InvalidArgument(format!(
                "{} scores for {} nodes",
                scores.len(),
                self.n()
            )));
        }
        self.scores = Some(scores);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn parent_sets(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn scores(&self) -> Option<&[f64]> {
        self.scores.as_deref()
    }

    /// Sum of the node scores in index order; zero when unscored.
    pub fn total_score(&self) -> f64 {
        self.scores.as_ref().map_or(0.0, |s| s.iter().sum())
    }

    pub fn arc_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Arcs `(parent, child)` ordered by child then parent.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
    }

    /// Parents before children; among ready nodes the smallest id first.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.n();
        let mut children = vec![Vec::new(); n];
        let mut indeg = vec![0usize; n];
        for (p, c) in self.arcs() {
            children[p].push(c);
            indeg[c] += 1;
        }
        let mut ready: BinaryHeap<Reverse<usize>> =
            (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        order
    }

    /// Every node before its parents.
    pub fn reverse_topological_order(&self) -> Vec<usize> {
        let mut order = self.topological_order();
        order.reverse();
        order
    }

    /// True iff `order` is a permutation listing every node before its
    /// parents.
    pub fn is_reverse_topological(&self, order: &[usize]) -> bool {
        if check_permutation(self.n(), order).is_err() {
            return false;
        }
        let mut pos = vec![0; self.n()];
        for (i, &v) in order.iter().enumerate() {
            pos[v] = i;
        }
        self.arcs().all(|(p, c)| pos[c] < pos[p])
    }
}

/// Returns the nodes of some directed cycle, if any.
pub fn find_cycle(parents: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = parents.len();
    let mut mark = vec![Mark::New; n];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if mark[start] != Mark::New {
            continue;
        }
        mark[start] = Mark::Active;
        stack.push((start, 0));
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if let Some(&p) = parents[v].get(*next) {
                *next += 1;
                if p >= n {
                    continue;
                }
                match mark[p] {
                    Mark::New => {
                        mark[p] = Mark::Active;
                        stack.push((p, 0));
                    }
                    Mark::Active => {
                        let pos = stack.iter().position(|&(u, _)| u == p).unwrap();
                        let mut cycle: Vec<usize> = stack[pos..].iter().map(|&(u, _)| u).collect();
                        cycle.reverse();
                        return Some(cycle);
                    }
                    Mark::Done => {}
                }
            } else {
                mark[v] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    adj: Vec<BTreeSet<usize>>,
}

impl UndirectedGraph {
    pub fn new(n: usize) -> Self {
        Self {
            adj: vec![BTreeSet::new(); n],
        }
    }

    pub fn complete(vertices: &[usize], n: usize) -> Self {
        let mut g = Self::new(n);
        for (i, &u) in vertices.iter().enumerate() {
            for &v in &vertices[i + 1..] {
                g.add_edge(u, v);
            }
        }
        g
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    /// Self-loops are ignored.
    pub fn add_edge(&mut self, u: usize, v: usize) {
        if u != v {
            self.adj[u].insert(v);
            self.adj[v].insert(u);
        }
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(&v)
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.adj[v]
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Edges `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.range(u + 1..).map(move |&v| (u, v)))
            .collect()
    }
}

/// Arcs made undirected plus edges between every pair of co-parents.
pub fn moral_graph(dag: &Dag) -> UndirectedGraph {
    let mut g = UndirectedGraph::new(dag.n());
    for (c, ps) in dag.parent_sets().iter().enumerate() {
        for (i, &p) in ps.iter().enumerate() {
            g.add_edge(p, c);
            for &q in &ps[i + 1..] {
                g.add_edge(p, q);
            }
        }
    }
    g
}

fn check_permutation(n: usize, order: &[usize]) -> Result<()> {
    if order.len() != n {
        return Err(Error::InvalidArgument(format!(
            "order has {} entries for {n} vertices",
            order.len()
        )));
    }
    let mut seen = vec![false; n];
    for &v in order {
        if v >= n || std::mem::replace(&mut seen[v], true) {
            return Err(Error::InvalidArgument(format!(
                "order is not a permutation (entry {v})"
            )));
        }
    }
    Ok(())
}

/// Simulates vertex elimination with fill-in; the width is the largest
/// number of live neighbours a vertex has when it is eliminated.
pub fn elimination_width(graph: &UndirectedGraph, order: &[usize]) -> Result<usize> {
    check_permutation(graph.n(), order)?;
    let mut adj = graph.adj.clone();
    let mut width = 0;
    for &v in order {
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        width = width.max(nbrs.len());
        for (i, &a) in nbrs.iter().enumerate() {
            adj[a].remove(&v);
            for &b in &nbrs[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
    }
    Ok(width)
}

/// Fill edges that eliminating `v` would add.
fn fill_in(adj: &[BTreeSet<usize>], v: usize) -> usize {
    let nbrs: Vec<usize> = adj[v].iter().copied().collect();
    let mut missing = 0;
    for (i, &a) in nbrs.iter().enumerate() {
        for &b in &nbrs[i + 1..] {
            if !adj[a].contains(&b) {
                missing += 1;
            }
        }
    }
    missing
}

fn eliminate(adj: &mut [BTreeSet<usize>], v: usize) {
    let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
    for (i, &a) in nbrs.iter().enumerate() {
        adj[a].remove(&v);
        for &b in &nbrs[i + 1..] {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
}

/// Greedy min-fill elimination order (ties: fewer live neighbours, then
/// smaller id).
pub fn min_fill_order(graph: &UndirectedGraph) -> Vec<usize> {
    let n = graph.n();
    let mut adj = graph.adj.clone();
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| alive[v])
            .min_by_key(|&v| (fill_in(&adj, v), adj[v].len(), v))
            .expect("a live vertex remains");
        eliminate(&mut adj, v);
        alive[v] = false;
        order.push(v);
    }
    order
}

/// Reverse topological order of `dag` built greedily on its moral graph:
/// among nodes whose children are all eliminated, take the one adding the
/// least fill (then fewer neighbours, then smaller id).
pub fn min_fill_reverse_topological_order(dag: &Dag) -> Vec<usize> {
    let n = dag.n();
    let mut adj = moral_graph(dag).adj;
    let mut children_left = vec![0usize; n];
    for (p, _) in dag.arcs() {
        children_left[p] += 1;
    }
    let mut sinks: BTreeSet<usize> = (0..n).filter(|&v| children_left[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = sinks
        .iter()
        .copied()
        .min_by_key(|&v| (fill_in(&adj, v), adj[v].len(), v))
    {
        sinks.remove(&v);
        eliminate(&mut adj, v);
        order.push(v);
        for &p in dag.parents(v) {
            children_left[p] -= 1;
            if children_left[p] == 0 {
                sinks.insert(p);
            }
        }
    }
    order
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreewidthCheck {
    pub ok: bool,
    pub width: usize,
    pub order: Vec<usize>,
}

/// Width of the moral graph under a reverse topological order of `dag`,
/// chosen by [`min_fill_reverse_topological_order`]. A failed check only
/// means this certificate exceeds `k`.
pub fn verify_treewidth_le(dag: &Dag, k: usize) -> TreewidthCheck {
    let order = min_fill_reverse_topological_order(dag);
    let width = elimination_width(&moral_graph(dag), &order).expect("topological order is a permutation");
    TreewidthCheck {
        ok: width <= k,
        width,
        order,
    }
}

/// Checks an explicit elimination order against the moral graph.
pub fn check_certificate(dag: &Dag, order: &[usize], k: usize) -> Result<TreewidthCheck> {
    let width = elimination_width(&moral_graph(dag), order)?;
    Ok(TreewidthCheck {
        ok: width <= k,
        width,
        order: order.to_vec(),
    })
}

/// Reverse topological certificate, falling back to unrestricted min-fill
/// when it fails. Returns the narrower of the two.
pub fn certify_treewidth(dag: &Dag, k: usize) -> TreewidthCheck {
    let rev = verify_treewidth_le(dag, k);
    if rev.ok {
        return rev;
    }
    let moral = moral_graph(dag);
    let order = min_fill_order(&moral);
    let width = elimination_width(&moral, &order).expect("min-fill order is a permutation");
    if width < rev.width {
        TreewidthCheck {
            ok: width <= k,
            width,
            order,
        }
    } else {
        rev
    }
}

/// True iff every moral edge of `dag` joins two adjacent k-tree vertices.
pub fn is_moral_subgraph(dag: &Dag, ktree: &KTree) -> bool {
    moral_graph(dag)
        .edges()
        .into_iter()
        .all(|(u, v)| ktree.has_edge(u, v))
}

/// A k-tree grown from a (k+1)-clique by repeatedly attaching a new vertex
/// to a registered k-clique. Every registered clique is stored as a sorted
/// vertex list.
#[derive(Debug, Clone)]
pub struct KTree {
    k: usize,
    adj: Vec<Vec<usize>>,
    present: Vec<bool>,
    insertion: Vec<usize>,
    k_cliques: Vec<Vec<usize>>,
    k_clique_ids: HashMap<Vec<usize>, usize>,
    /// k-clique ids containing each vertex, ascending.
    cliques_of: Vec<Vec<usize>>,
    max_cliques: Vec<Vec<usize>>,
}

impl KTree {
    /// Complete graph on `clique` (k+1 distinct vertices below `universe`).
    pub fn new(universe: usize, clique: &[usize]) -> Result<Self> {
        if clique.len() < 2 {
            return Err(Error::KTree(format!(
                "initial clique needs k+1 >= 2 vertices, got {}",
                clique.len()
            )));
        }
        let mut clique = clique.to_vec();
        clique.sort_unstable();
        if clique.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::KTree("duplicate vertex in initial clique".into()));
        }
        if let Some(&v) = clique.iter().find(|&&v| v >= universe) {
            return Err(Error::VariableOutOfRange(v));
        }
        let k = clique.len() - 1;
        let mut t = KTree {
            k,
            adj: vec![Vec::new(); universe],
            present: vec![false; universe],
            insertion: clique.clone(),
            k_cliques: Vec::new(),
            k_clique_ids: HashMap::new(),
            cliques_of: vec![Vec::new(); universe],
            max_cliques: vec![clique.clone()],
        };
        for &v in &clique {
            t.present[v] = true;
            t.adj[v] = clique.iter().copied().filter(|&u| u != v).collect();
        }
        for skip in 0..=k {
            let sub: Vec<usize> = clique
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, &v)| v)
                .collect();
            t.register(sub);
        }
        Ok(t)
    }

    /// Like [`KTree::new`] but checks that the clique has exactly `k + 1`
    /// vertices.
    pub fn with_k(universe: usize, k: usize, clique: &[usize]) -> Result<Self> {
        if clique.len() != k + 1 {
            return Err(Error::KTree(format!(
                "initial clique for k={k} needs {} vertices, got {}",
                k + 1,
                clique.len()
            )));
        }
        Self::new(universe, clique)
    }

    fn register(&mut self, clique: Vec<usize>) {
        let id = self.k_cliques.len();
        if self.k_clique_ids.contains_key(&clique) {
            return;
        }
        for &v in &clique {
            self.cliques_of[v].push(id);
        }
        self.k_clique_ids.insert(clique.clone(), id);
        self.k_cliques.push(clique);
    }

    /// Connects `z` to every vertex of registered k-clique `clique_id`.
    pub fn add(&mut self, z: usize, clique_id: usize) -> Result<()> {
        if z >= self.present.len() {
            return Err(Error::VariableOutOfRange(z));
        }
        if self.present[z] {
            return Err(Error::KTree(format!("vertex {z} already in the k-tree")));
        }
        let base = self
            .k_cliques
            .get(clique_id)
            .cloned()
            .ok_or_else(|| Error::KTree(format!("unknown k-clique id {clique_id}")))?;
        self.present[z] = true;
        self.insertion.push(z);
        for &c in &base {
            let pos = self.adj[c].binary_search(&z).unwrap_err();
            self.adj[c].insert(pos, z);
        }
        self.adj[z] = base.clone();
        let mut max_clique = base.clone();
        let pos = max_clique.binary_search(&z).unwrap_err();
        max_clique.insert(pos, z);
        for &c in &base {
            let sub: Vec<usize> = max_clique.iter().copied().filter(|&v| v != c).collect();
            self.register(sub);
        }
        self.max_cliques.push(max_clique);
        Ok(())
    }

    /// Connects `z` to the registered k-clique equal to `clique`.
    pub fn add_on(&mut self, z: usize, clique: &[usize]) -> Result<()> {
        let mut key = clique.to_vec();
        key.sort_unstable();
        let id = *self
            .k_clique_ids
            .get(&key)
            .ok_or_else(|| Error::KTree(format!("{key:?} is not a registered k-clique")))?;
        self.add(z, id)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn universe(&self) -> usize {
        self.present.len()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.present.get(v).copied().unwrap_or(false)
    }

    pub fn vertex_count(&self) -> usize {
        self.insertion.len()
    }

    /// Vertices in insertion order, the initial clique first.
    pub fn vertices(&self) -> &[usize] {
        &self.insertion
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.adj.len() && self.adj[u].binary_search(&v).is_ok()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn k_cliques(&self) -> &[Vec<usize>] {
        &self.k_cliques
    }

    pub fn k_clique(&self, id: usize) -> &[usize] {
        &self.k_cliques[id]
    }

    pub fn max_cliques(&self) -> &[Vec<usize>] {
        &self.max_cliques
    }

    /// True iff `set` (sorted) is a clique of present vertices. In a k-tree
    /// this is equivalent to lying inside some registered k-clique when
    /// `set.len() <= k`, and inside some (k+1)-clique when
    /// `set.len() <= k + 1`.
    pub fn is_clique(&self, set: &[usize]) -> bool {
        set.iter().all(|&v| self.contains(v))
            && set
                .iter()
                .enumerate()
                .all(|(i, &u)| set[i + 1..].iter().all(|&v| self.has_edge(u, v)))
    }

    /// First registered k-clique (in registration order) containing `set`.
    pub fn find_k_clique_containing(&self, set: &[usize]) -> Option<usize> {
        if set.len() > self.k {
            return None;
        }
        let Some(&pivot) = set.iter().min_by_key(|&&v| self.cliques_of.get(v).map_or(0, Vec::len)) else {
            return if self.k_cliques.is_empty() { None } else { Some(0) };
        };
        if !self.contains(pivot) {
            return None;
        }
        self.cliques_of[pivot]
            .iter()
            .copied()
            .find(|&id| set.iter().all(|v| self.k_cliques[id].binary_search(v).is_ok()))
    }

    /// Perfect elimination order: reverse insertion. Its width on the
    /// k-tree (and on any subgraph) is at most k.
    pub fn elimination_order(&self) -> Vec<usize> {
        self.insertion.iter().rev().copied().collect()
    }

    pub fn to_graph(&self) -> UndirectedGraph {
        let mut g = UndirectedGraph::new(self.universe());
        for (u, ns) in self.adj.iter().enumerate() {
            for &v in ns {
                g.add_edge(u, v);
            }
        }
        g
    }
}

/// Raw contents of a DAG file, before acyclicity is checked.
#[derive(Debug, Clone, PartialEq)]
pub struct DagFile {
    pub total_score: f64,
    pub parents: Vec<Vec<usize>>,
    pub scores: Vec<f64>,
}

impl DagFile {
    pub fn into_dag(self) -> Result<Dag> {
        Dag::new(self.parents)?.with_scores(self.scores)
    }
}

/// Line 1: `n total_score`; then one line per node:
/// `index score parent_count parents...`.
pub fn format_dag(dag: &Dag) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {:.6}", dag.n(), dag.total_score());
    for v in 0..dag.n() {
        let score = dag.scores().map_or(0.0, |s| s[v]);
        let _ = write!(out, "{v} {score:.6} {}", dag.parents(v).len());
        for p in dag.parents(v) {
            let _ = write!(out, " {p}");
        }
        out.push('\n');
    }
    out
}

pub fn write_dag(dag: &Dag, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_dag(dag)).map_err(|e| Error::io(path, e))
}

pub fn parse_dag(text: &str) -> Result<DagFile> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty DAG file"))?;
    let mut head = header.split_whitespace();
    let n: usize = head
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(1, "invalid node count"))?;
    let total_score: f64 = head
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(1, "invalid total score"))?;
    let mut parents: Vec<Option<Vec<usize>>> = vec![None; n];
    let mut scores = vec![0.0; n];
    for (idx, line) in lines.by_ref().take(n) {
        let lineno = idx + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let num = |i: usize, what: &str| -> Result<usize> {
            toks.get(i)
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(lineno, format!("invalid {what}")))
        };
        let v = num(0, "node index")?;
        if v >= n {
            return Err(Error::parse(lineno, format!("node {v} out of range")));
        }
        if parents[v].is_some() {
            return Err(Error::parse(lineno, format!("duplicate node {v}")));
        }
        scores[v] = toks
            .get(1)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(lineno, "invalid score"))?;
        let count = num(2, "parent count")?;
        if toks.len() != 3 + count {
            return Err(Error::parse(lineno, "parent count does not match parent list"));
        }
        let mut ps = Vec::with_capacity(count);
        for i in 0..count {
            let p = num(3 + i, "parent id")?;
            if p >= n {
                return Err(Error::parse(lineno, format!("parent {p} out of range")));
            }
            ps.push(p);
        }
        ps.sort_unstable();
        parents[v] = Some(ps);
    }
    if lines.next().is_some() {
        return Err(Error::parse(n + 2, "trailing content after node lines"));
    }
    let parents = parents
        .into_iter()
        .enumerate()
        .map(|(v, p)| p.ok_or_else(|| Error::parse(n + 1, format!("missing line for node {v}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(DagFile {
        total_score,
        parents,
        scores,
    })
}

pub fn read_dag_file(path: impl AsRef<Path>) -> Result<DagFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dag(&text)
}
