//! Exact structure optimization over cached parent-set scores, without a
//! treewidth bound, by dynamic programming over variable subsets.
//!
//! For each variable `X` a table holds the best cached score of `X` with
//! parents inside every subset of the other variables; a second table holds
//! the best network score over every subset together with the sink that
//! achieves it. Memory is `O(m 2^m)` for `m` variables, hence the cap.

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::scoring::{ScoreCache, ScoredParentSet};

/// Largest subset accepted by [`exact_learn`].
pub const EXACT_CAP: usize = 20;

/// Largest subset accepted by [`brute_force_learn`].
pub const BRUTE_FORCE_CAP: usize = 5;

/// An optimal assignment of parent sets to a subset of the variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSolution {
    pub vars: Vec<usize>,
    /// Parent sets (global ids), aligned with `vars`.
    pub parents: Vec<Vec<usize>>,
    pub scores: Vec<f64>,
}

impl SubsetSolution {
    /// Sum of node scores in `vars` order.
    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// Full DAG over `n` variables. Variables outside the subset get the
    /// empty parent set and score 0.
    pub fn to_dag(&self, n: usize) -> Result<Dag> {
        let mut parents = vec![Vec::new(); n];
        let mut scores = vec![0.0; n];
        for ((&v, ps), &s) in self.vars.iter().zip(&self.parents).zip(&self.scores) {
            parents[v] = ps.clone();
            scores[v] = s;
        }
        Dag::new(parents)?.with_scores(scores)
    }
}

fn check_vars(cache: &ScoreCache, vars: &[usize], cap: usize) -> Result<()> {
    if vars.len() > cap {
        return Err(Error::TooManyVariables {
            n: vars.len(),
            cap,
        });
    }
    let mut seen = vec![false; cache.n_vars()];
    for &v in vars {
        if v >= cache.n_vars() {
            return Err(Error::VariableOutOfRange(v));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::InvalidArgument(format!("variable {v} repeated")));
        }
    }
    Ok(())
}

/// Cached sets of `x` whose parents all lie in `vars`, as bitmasks over
/// the positions of `vars`. Keeps rank order.
fn restricted_list<'a>(
    cache: &'a ScoreCache,
    x: usize,
    local: &[Option<usize>],
) -> Vec<(u32, &'a ScoredParentSet)> {
    cache
        .list(x)
        .iter()
        .filter_map(|s| {
            let mut mask = 0u32;
            for &p in &s.parents {
                mask |= 1 << local[p]?;
            }
            Some((mask, s))
        })
        .collect()
}

/// Removes bit `i` from `mask`, shifting the higher bits down.
fn drop_bit(mask: u32, i: usize) -> u32 {
    let low = mask & ((1u32 << i) - 1);
    let high = (mask >> (i + 1)) << i;
    low | high
}

/// Optimal DAG over `vars` maximizing the sum of cached scores; every
/// parent set is drawn from the variable's cached list restricted to
/// `vars`.
pub fn exact_learn(cache: &ScoreCache, vars: &[usize]) -> Result<SubsetSolution> {
    exact_learn_capped(cache, vars, EXACT_CAP)
}

/// [`exact_learn`] with an explicit size cap, for callers that accept the
/// memory cost of a few extra variables (each one doubles it).
pub fn exact_learn_capped(cache: &ScoreCache, vars: &[usize], cap: usize) -> Result<SubsetSolution> {
    check_vars(cache, vars, cap.min(30))?;
    let m = vars.len();
    if m == 0 {
        return Ok(SubsetSolution {
            vars: vec![],
            parents: vec![],
            scores: vec![],
        });
    }
    let mut local = vec![None; cache.n_vars()];
    for (i, &v) in vars.iter().enumerate() {
        local[v] = Some(i);
    }
    let lists: Vec<Vec<(u32, &ScoredParentSet)>> =
        vars.iter().map(|&x| restricted_list(cache, x, &local)).collect();

    // best score of each variable with parents inside each subset of the
    // others (subsets indexed without the variable's own bit)
    let half = 1usize << (m - 1);
    let best_parents: Vec<Vec<f64>> = lists
        .iter()
        .enumerate()
        .map(|(i, list)| {
            let mut table = vec![f64::NEG_INFINITY; half];
            for &(mask, s) in list {
                let u = drop_bit(mask, i) as usize;
                if s.score > table[u] {
                    table[u] = s.score;
                }
            }
            for b in 0..m - 1 {
                let bit = 1usize << b;
                for u in 0..half {
                    if u & bit != 0 && table[u ^ bit] > table[u] {
                        table[u] = table[u ^ bit];
                    }
                }
            }
            table
        })
        .collect();

    let full = (1usize << m) - 1;
    let mut best = vec![0.0f64; full + 1];
    let mut sink = vec![0u8; full + 1];
    for s in 1..=full {
        let mut top = f64::NEG_INFINITY;
        let mut arg = 0u8;
        let mut bits = s;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let rest = s & !(1 << i);
            let val = best[rest] + best_parents[i][drop_bit(rest as u32, i) as usize];
            if val > top {
                top = val;
                arg = i as u8;
            }
        }
        best[s] = top;
        sink[s] = arg;
    }

    let mut parents = vec![Vec::new(); m];
    let mut scores = vec![0.0; m];
    let mut s = full;
    while s != 0 {
        let i = sink[s] as usize;
        let rest = (s & !(1 << i)) as u32;
        let (_, chosen) = lists[i]
            .iter()
            .find(|(mask, _)| mask & !rest == 0)
            .expect("the empty set fits every subset");
        parents[i] = chosen.parents.clone();
        scores[i] = chosen.score;
        s = rest as usize;
    }
    Ok(SubsetSolution {
        vars: vars.to_vec(),
        parents,
        scores,
    })
}

/// Exact optimum over all variables of the cache.
pub fn exact_dag(cache: &ScoreCache) -> Result<Dag> {
    let vars: Vec<usize> = (0..cache.n_vars()).collect();
    exact_learn(cache, &vars)?.to_dag(cache.n_vars())
}

/// Exhaustive search over every combination of cached parent sets on
/// `vars`, keeping acyclic ones. Ties go to the lexicographically smaller
/// sequence of parent sets.
pub fn brute_force_learn(cache: &ScoreCache, vars: &[usize]) -> Result<SubsetSolution> {
    check_vars(cache, vars, BRUTE_FORCE_CAP)?;
    let m = vars.len();
    let mut local = vec![None; cache.n_vars()];
    for (i, &v) in vars.iter().enumerate() {
        local[v] = Some(i);
    }
    let lists: Vec<Vec<(u32, &ScoredParentSet)>> =
        vars.iter().map(|&x| restricted_list(cache, x, &local)).collect();

    let acyclic = |masks: &[u32]| -> bool {
        let mut placed = 0u32;
        for _ in 0..m {
            match (0..m).find(|&i| placed >> i & 1 == 0 && masks[i] & !placed == 0) {
                Some(i) => placed |= 1 << i,
                None => return false,
            }
        }
        true
    };

    let mut choice = vec![0usize; m];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let encode = |choice: &[usize]| -> Vec<&Vec<usize>> {
        choice.iter().enumerate().map(|(i, &c)| &lists[i][c].1.parents).collect()
    };
    loop {
        let masks: Vec<u32> = choice.iter().enumerate().map(|(i, &c)| lists[i][c].0).collect();
        if acyclic(&masks) {
            let total: f64 = choice.iter().enumerate().map(|(i, &c)| lists[i][c].1.score).sum();
            let better = match &best {
                None => true,
                Some((b, bc)) => total > *b || (total == *b && encode(&choice) < encode(bc)),
            };
            if better {
                best = Some((total, choice.clone()));
            }
        }
        // odometer
        let mut pos = 0;
        loop {
            if pos == m {
                let (_, c) = best.expect("the empty DAG is always acyclic");
                return Ok(SubsetSolution {
                    vars: vars.to_vec(),
                    parents: c.iter().enumerate().map(|(i, &j)| lists[i][j].1.parents.clone()).collect(),
                    scores: c.iter().enumerate().map(|(i, &j)| lists[i][j].1.score).collect(),
                });
            }
            choice[pos] += 1;
            if choice[pos] < lists[pos].len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}
