//! Baselines that first pick a k-tree and then the best DAG inside it.
//!
//! Both rank k-trees by the informative score `IS = S_mi / |S_l|`, where
//! `S_mi` sums pairwise mutual information over k-tree edges and `S_l` is
//! the best score achievable when every family must be a k-tree clique and
//! acyclicity is ignored. [`s2_learn`] samples random k-trees and keeps a
//! proposal with probability `min(1, IS / IS_best)`; [`s2plus_learn`] grows
//! k-trees greedily by IS.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use log::warn;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::exact_learn_capped;
use crate::graph::{Dag, KTree};
use crate::scoring::ScoreCache;
use crate::search::{empty_learned, BestRegister, Learned};

/// Largest variable count for which [`dag_in_ktree`] solves exactly.
pub const EXACT_THRESHOLD: usize = 18;

/// Random orders tried by [`dag_in_ktree`] above the exact threshold.
pub const DEFAULT_DAG_ORDERS: usize = 16;

/// k-trees sampled per parallel batch in [`s2_learn`].
const BATCH: usize = 64;

/// Symmetric matrix of pairwise mutual information, zero diagonal.
pub fn pairwise_mi_matrix(cache: &ScoreCache) -> Result<Vec<Vec<f64>>> {
    let stats = cache.stats()?;
    let n = cache.n_vars();
    Ok((0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { stats.mi(i, j) }).collect())
        .collect())
}

/// Sum of mutual information over the edges of `ktree`, each pair once.
pub fn s_mi(ktree: &KTree, mi: &[Vec<f64>]) -> f64 {
    ktree
        .vertices()
        .iter()
        .map(|&u| {
            ktree
                .neighbors(u)
                .iter()
                .filter(|&&v| v > u)
                .map(|&v| mi[u][v])
                .sum::<f64>()
        })
        .sum()
}

/// True iff `parents` together with `x` form a clique of `ktree`.
pub fn family_fits(ktree: &KTree, x: usize, parents: &[usize]) -> bool {
    ktree.contains(x)
        && parents.len() <= ktree.k()
        && parents.iter().all(|&p| ktree.has_edge(x, p))
        && ktree.is_clique(parents)
}

/// Sum over variables of the best cached score whose family is a clique of
/// `ktree`; acyclicity is not enforced.
pub fn s_l(ktree: &KTree, cache: &ScoreCache) -> f64 {
    (0..cache.n_vars())
        .map(|x| cache.best_where(x, |ps| ps.is_empty() || family_fits(ktree, x, ps)).1.score)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformativeScore {
    pub s_mi: f64,
    pub s_l: f64,
    pub value: f64,
}

impl InformativeScore {
    pub fn new(s_mi: f64, s_l: f64) -> Self {
        let value = if s_l == 0.0 { 0.0 } else { s_mi / s_l.abs() };
        Self { s_mi, s_l, value }
    }
}

pub fn informative_score(ktree: &KTree, cache: &ScoreCache, mi: &[Vec<f64>]) -> InformativeScore {
    InformativeScore::new(s_mi(ktree, mi), s_l(ktree, cache))
}

/// Random k-tree on `n` vertices: a uniform initial `(k+1)`-set, then the
/// other vertices in random order, each on a uniformly chosen k-clique.
/// Not uniform over k-trees.
pub fn sample_ktree<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Result<KTree> {
    if k == 0 || n < k + 1 {
        return Err(Error::InvalidArgument(format!("cannot build a {k}-tree on {n} vertices")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut kt = KTree::with_k(n, k, &perm[..=k])?;
    for &v in &perm[k + 1..] {
        let id = rng.random_range(0..kt.k_cliques().len());
        kt.add(v, id)?;
    }
    Ok(kt)
}

/// Best DAG whose families are all cliques of `ktree`. Exact up to
/// [`EXACT_THRESHOLD`] variables; above it, the best of `orders` random
/// orders with each variable taking its best feasible set among its
/// predecessors.
pub fn dag_in_ktree<R: Rng + ?Sized>(ktree: &KTree, cache: &ScoreCache, orders: usize, rng: &mut R) -> Result<Learned> {
    let n = cache.n_vars();
    if ktree.universe() != n || ktree.vertex_count() != n {
        return Err(Error::KTree(format!(
            "k-tree spans {} of {} variables",
            ktree.vertex_count(),
            n
        )));
    }
    let feasible = cache.filtered(|x, ps| family_fits(ktree, x, ps));
    let dag = if n <= EXACT_THRESHOLD {
        let vars: Vec<usize> = (0..n).collect();
        exact_learn_capped(&feasible, &vars, EXACT_THRESHOLD)?.to_dag(n)?
    } else {
        let mut best: Option<Dag> = None;
        let mut perm: Vec<usize> = (0..n).collect();
        for _ in 0..orders.max(1) {
            perm.shuffle(rng);
            let mut before = vec![false; n];
            let mut parents = vec![Vec::new(); n];
            let mut scores = vec![0.0; n];
            for &x in &perm {
                let (_, s) = feasible.best_where(x, |ps| ps.iter().all(|&p| before[p]));
                parents[x] = s.parents.clone();
                scores[x] = s.score;
                before[x] = true;
            }
            let dag = Dag::new(parents)?.with_scores(scores)?;
            if best.as_ref().is_none_or(|b| dag.total_score() > b.total_score()) {
                best = Some(dag);
            }
        }
        best.expect("at least one order")
    };
    Ok(Learned {
        dag,
        elimination_order: ktree.elimination_order(),
        ktree: Some(ktree.clone()),
        optimal: false,
        expanded: 0,
    })
}

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub k: usize,
    pub time_budget: Option<Duration>,
    /// Number of k-trees to sample or construct.
    pub max_iterations: Option<u64>,
    pub workers: usize,
    pub dag_orders: usize,
}

impl BaselineConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            time_budget: None,
            max_iterations: None,
            workers: 1,
            dag_orders: DEFAULT_DAG_ORDERS,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("treewidth bound must be at least 1".into()));
        }
        if n < self.k + 1 {
            return Err(Error::InvalidArgument(format!(
                "{n} variables cannot span a {}-tree",
                self.k
            )));
        }
        if self.time_budget.is_none() && self.max_iterations.is_none() {
            return Err(Error::InvalidArgument("need a time budget or an iteration limit".into()));
        }
        if self.time_budget == Some(Duration::ZERO) || self.max_iterations == Some(0) {
            return Err(Error::InvalidArgument("budget must be positive".into()));
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
    }
}

/// Acceptance probability of a k-tree against the best seen so far.
pub fn acceptance(is: f64, best_is: f64) -> f64 {
    if best_is <= 0.0 {
        1.0
    } else {
        (is / best_is).min(1.0)
    }
}

/// Samples k-trees, accepts each with probability `min(1, IS/IS_best)`, and
/// learns a DAG inside every accepted one. `iterations` counts sampled
/// k-trees. With an iteration budget and a fixed seed the result does not
/// depend on `workers`.
pub fn s2_learn<R: Rng + ?Sized>(cache: &ScoreCache, cfg: &BaselineConfig, rng: &mut R) -> Result<BestRegister> {
    let n = cache.n_vars();
    cfg.validate(n)?;
    let mi = pairwise_mi_matrix(cache)?;
    let pool = cfg.pool()?;
    let start = Instant::now();
    let deadline = cfg.time_budget.map(|t| start + t);
    let mut reg = BestRegister::new(empty_learned(cache)?);
    let mut best_is: Option<f64> = None;
    loop {
        if deadline.is_some_and(|t| Instant::now() >= t) {
            break;
        }
        let remaining = cfg.max_iterations.map_or(u64::MAX, |m| m - reg.iterations);
        if remaining == 0 {
            break;
        }
        let want = (BATCH as u64).min(remaining) as usize;
        let trees = (0..want)
            .map(|_| sample_ktree(rng, n, cfg.k))
            .collect::<Result<Vec<_>>>()?;
        let scores: Vec<f64> = pool.install(|| {
            trees
                .par_iter()
                .map(|t| informative_score(t, cache, &mi).value)
                .collect()
        });
        let mut accepted = Vec::new();
        for (tree, is) in trees.into_iter().zip(scores) {
            reg.iterations += 1;
            let alpha = best_is.map_or(1.0, |b| acceptance(is, b));
            if alpha >= 1.0 || rng.random::<f64>() < alpha {
                best_is = Some(best_is.map_or(is, |b| b.max(is)));
                accepted.push((tree, rng.random::<u64>()));
            }
        }
        let learned = pool.install(|| {
            accepted
                .par_iter()
                .map(|(t, seed)| dag_in_ktree(t, cache, cfg.dag_orders, &mut ChaCha8Rng::seed_from_u64(*seed)))
                .collect::<Result<Vec<_>>>()
        })?;
        for l in learned {
            reg.offer(l);
        }
    }
    reg.elapsed = start.elapsed();
    if reg.scores.is_empty() {
        warn!("no k-tree was evaluated within the budget; returning the empty DAG");
    }
    Ok(reg)
}

/// Grows a k-tree from `seed_clique`, repeatedly attaching the vertex and
/// k-clique whose addition gives the highest informative score.
pub fn grow_ktree_greedily(cache: &ScoreCache, mi: &[Vec<f64>], k: usize, seed_clique: &[usize]) -> Result<KTree> {
    let n = cache.n_vars();
    let mut kt = KTree::with_k(n, k, seed_clique)?;
    // best score of x with parents inside a clique (family members other than x)
    let mut memo: HashMap<(usize, Vec<usize>), f64> = HashMap::new();
    let mut best_in = |x: usize, clique: &[usize]| -> f64 {
        *memo.entry((x, clique.to_vec())).or_insert_with(|| {
            cache
                .best_where(x, |ps| ps.iter().all(|p| clique.binary_search(p).is_ok()))
                .1
                .score
        })
    };
    let mut local = vec![f64::NEG_INFINITY; n];
    let mut smi = 0.0;
    let mut sl = 0.0;
    let mut head = seed_clique.to_vec();
    head.sort_unstable();
    for (i, &u) in head.iter().enumerate() {
        let others: Vec<usize> = head.iter().copied().filter(|&v| v != u).collect();
        local[u] = best_in(u, &others);
        sl += local[u];
        smi += head[i + 1..].iter().map(|&v| mi[u][v]).sum::<f64>();
    }
    let mut placed = vec![false; n];
    for &u in &head {
        placed[u] = true;
    }
    for _ in head.len()..n {
        let mut choice: Option<(f64, usize, usize, f64, f64)> = None;
        for v in (0..n).filter(|&v| !placed[v]) {
            for (id, clique) in kt.k_cliques().iter().enumerate() {
                let d_mi: f64 = clique.iter().map(|&u| mi[u][v]).sum();
                let mut family = clique.clone();
                let pos = family.binary_search(&v).unwrap_err();
                family.insert(pos, v);
                let mut new_sl = sl + best_in(v, clique);
                for &u in clique {
                    let others: Vec<usize> = family.iter().copied().filter(|&w| w != u).collect();
                    new_sl += best_in(u, &others).max(local[u]) - local[u];
                }
                let new_smi = smi + d_mi;
                let is = InformativeScore::new(new_smi, new_sl).value;
                if choice.is_none_or(|c| is > c.0) {
                    choice = Some((is, v, id, new_smi, new_sl));
                }
            }
        }
        let (_, v, id, new_smi, new_sl) = choice.expect("an unplaced vertex remains");
        let clique = kt.k_clique(id).to_vec();
        let mut family = clique.clone();
        family.insert(family.binary_search(&v).unwrap_err(), v);
        local[v] = best_in(v, &clique);
        for &u in &clique {
            let others: Vec<usize> = family.iter().copied().filter(|&w| w != u).collect();
            local[u] = local[u].max(best_in(u, &others));
        }
        smi = new_smi;
        sl = new_sl;
        placed[v] = true;
        kt.add(v, id)?;
    }
    Ok(kt)
}

/// `k+1` variables chosen greedily for high total pairwise MI: the
/// strongest pair, then repeatedly the variable adding the most MI.
pub fn top_mi_clique(mi: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = mi.len();
    let mut best = (f64::NEG_INFINITY, 0, 1);
    for i in 0..n {
        for j in i + 1..n {
            if mi[i][j] > best.0 {
                best = (mi[i][j], i, j);
            }
        }
    }
    let mut chosen = vec![best.1, best.2];
    while chosen.len() < k + 1 {
        let next = (0..n)
            .filter(|v| !chosen.contains(v))
            .max_by(|&a, &b| {
                let sa: f64 = chosen.iter().map(|&c| mi[a][c]).sum();
                let sb: f64 = chosen.iter().map(|&c| mi[b][c]).sum();
                sa.total_cmp(&sb).then(b.cmp(&a))
            })
            .expect("n > k");
        chosen.push(next);
    }
    chosen.sort_unstable();
    chosen
}

/// Builds k-trees by greedy IS growth: the first from the top-MI clique,
/// the rest from random initial cliques, and learns a DAG in each.
/// `iterations` counts constructed k-trees.
pub fn s2plus_learn<R: Rng + ?Sized>(cache: &ScoreCache, cfg: &BaselineConfig, rng: &mut R) -> Result<BestRegister> {
    let n = cache.n_vars();
    cfg.validate(n)?;
    let mi = pairwise_mi_matrix(cache)?;
    let start = Instant::now();
    let deadline = cfg.time_budget.map(|t| start + t);
    let mut reg = BestRegister::new(empty_learned(cache)?);
    let all: Vec<usize> = (0..n).collect();
    loop {
        if deadline.is_some_and(|t| Instant::now() >= t) {
            break;
        }
        if cfg.max_iterations.is_some_and(|m| reg.iterations >= m) {
            break;
        }
        let seed = if reg.iterations == 0 {
            top_mi_clique(&mi, cfg.k)
        } else {
            all.choose_multiple(rng, cfg.k + 1).copied().collect()
        };
        let kt = grow_ktree_greedily(cache, &mi, cfg.k, &seed)?;
        reg.iterations += 1;
        let learned = dag_in_ktree(&kt, cache, cfg.dag_orders, rng)?;
        reg.offer(learned);
    }
    reg.elapsed = start.elapsed();
    if reg.scores.is_empty() {
        warn!("no k-tree was evaluated within the budget; returning the empty DAG");
    }
    Ok(reg)
}
