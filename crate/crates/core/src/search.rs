//! Order-based learning of treewidth-bounded DAGs.
//!
//! Each iteration samples a variable order, learns the first `k+1`
//! variables exactly, then places the remaining variables one at a time,
//! each attached to a k-clique of a growing k-tree. [`kg_learn`] takes the
//! best attachable parent set greedily; [`kastar_learn`] runs a best-first
//! search over clique choices and returns the best DAG reachable for the
//! order. [`anytime_learn`] repeats this until the budget runs out.

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{exact_learn, SubsetSolution};
use crate::graph::{Dag, KTree};
use crate::scoring::{is_sorted_subset, ScoreCache};

/// Default cap on expanded states per order for [`kastar_learn`].
pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

/// Open-list size at which [`kastar_learn`] gives up as if out of budget.
const MAX_OPEN: usize = 2_000_000;

/// Orders evaluated per parallel batch when the budget is in iterations.
const BATCH: usize = 16;

/// Consecutive duplicate orders tolerated before sampling stops.
const MAX_SKIPS: usize = 10_000;

pub(crate) fn fingerprint<T: Hash + ?Sized>(value: &T) -> u128 {
    let mut a = DefaultHasher::new();
    value.hash(&mut a);
    let mut b = DefaultHasher::new();
    0x9e37_79b9_7f4a_7c15u64.hash(&mut b);
    value.hash(&mut b);
    ((a.finish() as u128) << 64) | b.finish() as u128
}

/// A permutation of the variables. Orders that differ only inside the
/// first `k+1` positions lead to the same learned structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Order {
    perm: Vec<usize>,
    k: usize,
}

impl Order {
    pub fn new(perm: Vec<usize>, k: usize) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &v in &perm {
            if v >= perm.len() || std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
            }
        }
        if k == 0 {
            return Err(Error::InvalidArgument("treewidth bound must be at least 1".into()));
        }
        Ok(Self { perm, k })
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// The permutation with its first `k+1` entries sorted.
    pub fn canonical_key(&self) -> Vec<usize> {
        let mut key = self.perm.clone();
        let head = (self.k + 1).min(key.len());
        key[..head].sort_unstable();
        key
    }
}

/// Number of order classes, `n!/(k+1)!`, or `None` on overflow.
pub fn canonical_class_count(n: usize, k: usize) -> Option<u128> {
    ((k + 2)..=n).try_fold(1u128, |acc, i| acc.checked_mul(i as u128))
}

/// Uniform random order; `None` when its class was already sampled.
pub fn sample_order<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, seen: &mut HashSet<u128>) -> Option<Order> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let order = Order { perm, k };
    seen.insert(fingerprint(&order.canonical_key())).then_some(order)
}

/// Best cached score of `x` with every parent in `predecessors`.
pub fn best_remaining(cache: &ScoreCache, x: usize, predecessors: &[bool]) -> f64 {
    cache.best_where(x, |ps| ps.iter().all(|&p| predecessors[p])).1.score
}

/// Exact optimum over the first `k+1` variables of the order, together
/// with the complete k-tree on them.
pub fn init_structure(order: &Order, cache: &ScoreCache) -> Result<(SubsetSolution, KTree)> {
    let n = cache.n_vars();
    check_order(order, cache)?;
    let k = order.k;
    if n < k + 2 {
        return Err(Error::InvalidArgument(format!(
            "{n} variables fit in the initial clique for k={k}; solve exactly instead"
        )));
    }
    let mut head = order.perm[..=k].to_vec();
    head.sort_unstable();
    let solution = exact_learn(cache, &head)?;
    let ktree = KTree::with_k(n, k, &head)?;
    Ok((solution, ktree))
}

fn check_order(order: &Order, cache: &ScoreCache) -> Result<()> {
    if order.len() != cache.n_vars() {
        return Err(Error::InvalidArgument(format!(
            "order has {} variables, cache has {}",
            order.len(),
            cache.n_vars()
        )));
    }
    Ok(())
}

/// A learned structure with a treewidth certificate.
#[derive(Debug, Clone)]
pub struct Learned {
    pub dag: Dag,
    /// Elimination order of width at most k on the moral graph; a reverse
    /// topological order of `dag` for the order-based learners.
    pub elimination_order: Vec<usize>,
    pub ktree: Option<KTree>,
    /// The result is the best reachable for its order (k-A* within budget).
    pub optimal: bool,
    pub expanded: usize,
}

impl Learned {
    pub fn score(&self) -> f64 {
        self.dag.total_score()
    }
}

fn solve_whole(cache: &ScoreCache) -> Result<Learned> {
    let n = cache.n_vars();
    let vars: Vec<usize> = (0..n).collect();
    let dag = exact_learn(cache, &vars)?.to_dag(n)?;
    Ok(Learned {
        elimination_order: dag.reverse_topological_order(),
        dag,
        ktree: None,
        optimal: true,
        expanded: 0,
    })
}

/// Reverse insertion order of the k-tree with the initial clique ordered
/// children first: a reverse topological order of `dag` that is also a
/// perfect elimination order of the k-tree.
fn certificate(dag: &Dag, ktree: &KTree) -> Vec<usize> {
    let inserted = ktree.vertices();
    let head_len = ktree.k() + 1;
    let mut in_head = vec![false; dag.n()];
    for &v in &inserted[..head_len] {
        in_head[v] = true;
    }
    let mut order: Vec<usize> = dag.topological_order().into_iter().filter(|&v| in_head[v]).collect();
    order.extend_from_slice(&inserted[head_len..]);
    order.reverse();
    order
}

/// Parent sets and scores for every variable, filled as they are placed.
struct Assignment {
    parents: Vec<Vec<usize>>,
    scores: Vec<f64>,
}

impl Assignment {
    fn from_init(n: usize, init: &SubsetSolution) -> Self {
        let mut a = Assignment {
            parents: vec![Vec::new(); n],
            scores: vec![0.0; n],
        };
        for ((&v, ps), &s) in init.vars.iter().zip(&init.parents).zip(&init.scores) {
            a.parents[v] = ps.clone();
            a.scores[v] = s;
        }
        a
    }

    fn finish(self, ktree: KTree, optimal: bool, expanded: usize) -> Result<Learned> {
        let dag = Dag::new(self.parents)?.with_scores(self.scores)?;
        Ok(Learned {
            elimination_order: certificate(&dag, &ktree),
            dag,
            ktree: Some(ktree),
            optimal,
            expanded,
        })
    }
}

/// Places `order[from..]` greedily: each variable takes its best cached set
/// lying inside a registered k-clique and attaches to the first such clique.
fn complete_greedily(cache: &ScoreCache, order: &Order, from: usize, ktree: &mut KTree, a: &mut Assignment) -> Result<()> {
    for &x in &order.perm[from..] {
        let (set, id) = cache
            .list(x)
            .iter()
            .find_map(|s| ktree.find_k_clique_containing(&s.parents).map(|id| (s, id)))
            .expect("the empty set fits any k-clique");
        ktree.add(x, id)?;
        a.parents[x] = set.parents.clone();
        a.scores[x] = set.score;
    }
    Ok(())
}

/// Greedy learner for one order.
pub fn kg_learn(order: &Order, cache: &ScoreCache) -> Result<Learned> {
    check_order(order, cache)?;
    let n = cache.n_vars();
    if n <= order.k + 1 {
        return solve_whole(cache);
    }
    let (init, mut ktree) = init_structure(order, cache)?;
    let mut a = Assignment::from_init(n, &init);
    complete_greedily(cache, order, order.k + 1, &mut ktree, &mut a)?;
    a.finish(ktree, false, 0)
}

#[derive(Debug, Clone, Copy)]
pub struct AStarConfig {
    pub node_budget: usize,
    pub deadline: Option<Instant>,
}

impl Default for AStarConfig {
    fn default() -> Self {
        Self {
            node_budget: DEFAULT_NODE_BUDGET,
            deadline: None,
        }
    }
}

/// Open-list entry: the state reached by attaching the next variable of the
/// order to k-clique `clique` of expanded state `parent`. Materialized only
/// when popped.
struct Entry {
    f: f64,
    g: f64,
    depth: u32,
    seq: u64,
    parent: u32,
    clique: u32,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // max-heap: lower f, then deeper, then earlier
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// An expanded state.
struct Node {
    parent: u32,
    clique: u32,
    depth: u32,
    g: f64,
    key: u128,
}

/// Registered k-cliques of a k-tree, flattened `k` vertices at a time and
/// numbered as [`KTree`] numbers them.
#[derive(Clone)]
struct Cliques {
    k: usize,
    flat: Vec<usize>,
}

impl Cliques {
    fn of(kt: &KTree) -> Self {
        Cliques {
            k: kt.k(),
            flat: kt.k_cliques().concat(),
        }
    }

    fn iter(&self) -> std::slice::ChunksExact<'_, usize> {
        self.flat.chunks_exact(self.k)
    }

    /// Attaches `x` to clique `id` and returns the new maximal clique.
    fn attach(&mut self, x: usize, id: usize) -> Vec<usize> {
        let k = self.k;
        let mut max_clique = self.flat[id * k..(id + 1) * k].to_vec();
        let pos = max_clique.binary_search(&x).unwrap_err();
        max_clique.insert(pos, x);
        for skip in 0..k {
            let dropped = self.flat[id * k + skip];
            self.flat.extend(max_clique.iter().filter(|&&v| v != dropped));
        }
        max_clique
    }
}

struct AStar<'a> {
    cache: &'a ScoreCache,
    order: &'a Order,
    root: KTree,
    root_cliques: Cliques,
    nodes: Vec<Node>,
    /// Best set index per (variable, k-clique vertex set).
    memo: Vec<HashMap<Vec<usize>, usize>>,
}

impl AStar<'_> {
    fn best_in_clique(&mut self, x: usize, clique: &[usize]) -> usize {
        if let Some(&idx) = self.memo[x].get(clique) {
            return idx;
        }
        let idx = self
            .cache
            .list(x)
            .iter()
            .position(|s| is_sorted_subset(&s.parents, clique))
            .expect("the empty set fits any clique");
        self.memo[x].insert(clique.to_vec(), idx);
        idx
    }

    /// Clique choices from the root to `node`, root first.
    fn path(&self, mut node: u32) -> Vec<u32> {
        let mut path = Vec::new();
        while node != 0 {
            path.push(self.nodes[node as usize].clique);
            node = self.nodes[node as usize].parent;
        }
        path.reverse();
        path
    }

    fn replay_cliques(&self, path: &[u32]) -> Cliques {
        let base = self.order.k + 1;
        let mut cl = self.root_cliques.clone();
        for (j, &c) in path.iter().enumerate() {
            cl.attach(self.order.perm[base + j], c as usize);
        }
        cl
    }

    /// Rebuilds the k-tree along `path`, recording chosen parent sets.
    fn replay(&mut self, path: &[u32], a: &mut Assignment) -> Result<KTree> {
        let base = self.order.k + 1;
        let mut kt = self.root.clone();
        for (j, &c) in path.iter().enumerate() {
            let x = self.order.perm[base + j];
            let clique = kt.k_clique(c as usize).to_vec();
            let idx = self.best_in_clique(x, &clique);
            let s = &self.cache.list(x)[idx];
            a.parents[x] = s.parents.clone();
            a.scores[x] = s.score;
            kt.add(x, c as usize)?;
        }
        Ok(kt)
    }
}

/// Best-first search over clique choices for one order. Returns the best
/// DAG reachable by incremental k-tree construction along the order, or,
/// when the budget runs out, the better of a greedy completion of the
/// deepest expanded state and [`kg_learn`], flagged non-optimal.
pub fn kastar_learn(order: &Order, cache: &ScoreCache, cfg: &AStarConfig) -> Result<Learned> {
    check_order(order, cache)?;
    let n = cache.n_vars();
    let k = order.k;
    if n <= k + 1 {
        return solve_whole(cache);
    }
    let base = k + 1;
    let (init, root) = init_structure(order, cache)?;

    // h[i]: negated best scores of order[i..] under the order constraint only
    let mut h = vec![0.0; n + 1];
    let mut placed = vec![false; n];
    for &v in &order.perm[..base] {
        placed[v] = true;
    }
    let mut best = vec![0.0; n];
    for i in base..n {
        let x = order.perm[i];
        best[i] = best_remaining(cache, x, &placed);
        placed[x] = true;
    }
    for i in (base..n).rev() {
        h[i] = h[i + 1] - best[i];
    }

    let root_key = fingerprint(&root.max_cliques()[0]);
    let mut search = AStar {
        cache,
        order,
        root_cliques: Cliques::of(&root),
        root,
        nodes: vec![Node {
            parent: 0,
            clique: 0,
            depth: base as u32,
            g: -init.total(),
            key: root_key,
        }],
        memo: vec![HashMap::new(); n],
    };
    let mut open = BinaryHeap::new();
    let mut closed: HashSet<(u32, u128)> = HashSet::new();
    let mut seq = 0u64;
    let mut expanded = 0usize;
    let mut deepest = 0u32;
    let mut current: (u32, Cliques) = (0, search.root_cliques.clone());

    loop {
        // expand the current node
        let (node_id, ref cl) = current;
        let node = &search.nodes[node_id as usize];
        let (d, g) = (node.depth as usize, node.g);
        let x = order.perm[d];
        for (c, clique) in cl.iter().enumerate() {
            let idx = search.best_in_clique(x, clique);
            let score = cache.list(x)[idx].score;
            debug_assert!(score <= best[d], "heuristic must stay consistent");
            let g2 = g - score;
            open.push(Entry {
                f: g2 + h[d + 1],
                g: g2,
                depth: (d + 1) as u32,
                seq,
                parent: node_id,
                clique: c as u32,
            });
            seq += 1;
        }
        expanded += 1;

        let out_of_budget = expanded >= cfg.node_budget
            || open.len() >= MAX_OPEN
            || cfg.deadline.is_some_and(|t| Instant::now() >= t);
        if out_of_budget {
            debug!("k-A* budget exhausted after {expanded} expansions");
            break;
        }

        // pop until a new state appears
        let next = loop {
            let Some(e) = open.pop() else {
                unreachable!("every expanded state has at least one successor")
            };
            let x = order.perm[e.depth as usize - 1];
            let mut cl = if e.parent == current.0 {
                current.1.clone()
            } else {
                search.replay_cliques(&search.path(e.parent))
            };
            let new_clique = cl.attach(x, e.clique as usize);
            let key = search.nodes[e.parent as usize].key.wrapping_add(fingerprint(&new_clique));
            if !closed.insert((e.depth, key)) {
                continue;
            }
            break (e, cl, key);
        };
        let (e, cl, key) = next;
        search.nodes.push(Node {
            parent: e.parent,
            clique: e.clique,
            depth: e.depth,
            g: e.g,
            key,
        });
        let id = (search.nodes.len() - 1) as u32;
        if e.depth as usize == n {
            let path = search.path(id);
            let mut a = Assignment::from_init(n, &init);
            let kt = search.replay(&path, &mut a)?;
            return a.finish(kt, true, expanded);
        }
        if e.depth > search.nodes[deepest as usize].depth {
            deepest = id;
        }
        current = (id, cl);
    }

    // budget exhausted
    let path = search.path(deepest);
    let mut a = Assignment::from_init(n, &init);
    let mut kt = search.replay(&path, &mut a)?;
    let from = search.nodes[deepest as usize].depth as usize;
    complete_greedily(cache, order, from, &mut kt, &mut a)?;
    let completed = a.finish(kt, false, expanded)?;
    let mut greedy = kg_learn(order, cache)?;
    greedy.expanded = expanded;
    Ok(if completed.score() >= greedy.score() {
        completed
    } else {
        greedy
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    KG,
    KAStar,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kg" | "k-g" => Ok(Method::KG),
            "kastar" | "k-astar" | "k-a*" | "ka*" => Ok(Method::KAStar),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::KG => "kg",
            Method::KAStar => "kastar",
        })
    }
}

pub fn learn_order(method: Method, order: &Order, cache: &ScoreCache, astar: &AStarConfig) -> Result<Learned> {
    match method {
        Method::KG => kg_learn(order, cache),
        Method::KAStar => kastar_learn(order, cache, astar),
    }
}

#[derive(Debug, Clone)]
pub struct AnytimeConfig {
    pub method: Method,
    pub k: usize,
    pub time_budget: Option<Duration>,
    pub max_iterations: Option<u64>,
    pub workers: usize,
    pub node_budget: usize,
}

impl AnytimeConfig {
    pub fn new(method: Method, k: usize) -> Self {
        Self {
            method,
            k,
            time_budget: None,
            max_iterations: None,
            workers: 1,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

/// Best structure seen so far plus per-iteration scores.
#[derive(Debug, Clone)]
pub struct BestRegister {
    pub best: Learned,
    pub best_score: f64,
    pub iterations: u64,
    pub scores: Vec<f64>,
    /// Sampled orders discarded as equivalent to an earlier one.
    pub skipped: u64,
    /// Iterations whose k-A* search ran out of budget.
    pub non_optimal: u64,
    pub elapsed: Duration,
}

impl BestRegister {
    pub(crate) fn new(best: Learned) -> Self {
        Self {
            best_score: best.score(),
            best,
            iterations: 0,
            scores: Vec::new(),
            skipped: 0,
            non_optimal: 0,
            elapsed: Duration::ZERO,
        }
    }

    fn record(&mut self, learned: Learned) {
        self.iterations += 1;
        if !learned.optimal && learned.ktree.is_some() && learned.expanded > 0 {
            self.non_optimal += 1;
        }
        self.offer(learned);
    }

    /// Logs a proposed structure and keeps it if it beats the incumbent.
    pub(crate) fn offer(&mut self, learned: Learned) {
        let score = learned.score();
        self.scores.push(score);
        if self.scores.len() == 1 || score > self.best_score {
            self.best_score = score;
            self.best = learned;
        }
    }

    pub fn median(&self) -> Option<f64> {
        if self.scores.is_empty() {
            return None;
        }
        let mut s = self.scores.clone();
        s.sort_by(f64::total_cmp);
        let m = s.len() / 2;
        Some(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 })
    }

    pub fn max(&self) -> Option<f64> {
        self.scores.iter().copied().max_by(f64::total_cmp)
    }
}

pub(crate) fn empty_learned(cache: &ScoreCache) -> Result<Learned> {
    let n = cache.n_vars();
    let scores = (0..n).map(|x| cache.empty_score(x)).collect();
    Ok(Learned {
        dag: Dag::empty(n).with_scores(scores)?,
        elimination_order: (0..n).collect(),
        ktree: None,
        optimal: false,
        expanded: 0,
    })
}

/// Samples orders and learns a structure for each until the time or
/// iteration budget is spent. With an iteration budget and a fixed seed the
/// result does not depend on `workers`.
pub fn anytime_learn<R: Rng + ?Sized>(cache: &ScoreCache, cfg: &AnytimeConfig, rng: &mut R) -> Result<BestRegister> {
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("treewidth bound must be at least 1".into()));
    }
    if cfg.time_budget.is_none() && cfg.max_iterations.is_none() {
        return Err(Error::InvalidArgument("need a time budget or an iteration limit".into()));
    }
    if cfg.time_budget == Some(Duration::ZERO) || cfg.max_iterations == Some(0) {
        return Err(Error::InvalidArgument("budget must be positive".into()));
    }
    let n = cache.n_vars();
    let start = Instant::now();
    let deadline = cfg.time_budget.map(|t| start + t);
    let astar = AStarConfig {
        node_budget: cfg.node_budget,
        deadline,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let classes = canonical_class_count(n, cfg.k);
    let batch = if deadline.is_some() { cfg.workers.max(1) } else { BATCH };

    let mut reg = BestRegister::new(empty_learned(cache)?);
    let mut seen = HashSet::new();
    let mut exhausted = false;
    while !exhausted {
        if deadline.is_some_and(|t| Instant::now() >= t) {
            break;
        }
        let remaining = cfg.max_iterations.map_or(u64::MAX, |m| m - reg.iterations);
        if remaining == 0 {
            break;
        }
        let want = (batch as u64).min(remaining) as usize;
        let mut orders = Vec::with_capacity(want);
        let mut skips = 0;
        while orders.len() < want {
            if classes.is_some_and(|c| seen.len() as u128 >= c) || skips >= MAX_SKIPS {
                exhausted = true;
                break;
            }
            match sample_order(rng, n, cfg.k, &mut seen) {
                Some(o) => {
                    orders.push(o);
                    skips = 0;
                }
                None => {
                    reg.skipped += 1;
                    skips += 1;
                }
            }
        }
        let results: Vec<Result<Learned>> =
            pool.install(|| orders.par_iter().map(|o| learn_order(cfg.method, o, cache, &astar)).collect());
        for r in results {
            reg.record(r?);
        }
    }
    reg.elapsed = start.elapsed();
    if reg.iterations == 0 {
        warn!("no iteration finished within the budget; returning the empty DAG");
    }
    Ok(reg)
}
