//! BIC scoring, the pairwise quantities behind the pruning bound, and
//! candidate parent-set enumeration.
//!
//! All logarithms are natural. Parent sets are sorted ascending vectors of
//! variable ids.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::dataset::CategoricalTable;
use crate::error::{Error, Result};

/// Default number of candidate sets kept per variable.
pub const DEFAULT_MAX_SETS: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredParentSet {
    pub parents: Vec<usize>,
    pub score: f64,
}

impl ScoredParentSet {
    pub fn new(mut parents: Vec<usize>, score: f64) -> Self {
        parents.sort_unstable();
        Self { parents, score }
    }

    pub fn is_subset_of(&self, superset: &[usize]) -> bool {
        is_sorted_subset(&self.parents, superset)
    }
}

/// Descending score, ties broken by the lexicographically smaller set.
pub fn rank_order(a: &ScoredParentSet, b: &ScoredParentSet) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.parents.cmp(&b.parents))
}

/// Both slices sorted ascending.
pub fn is_sorted_subset(sub: &[usize], sup: &[usize]) -> bool {
    let mut it = sup.iter();
    'outer: for s in sub {
        for t in it.by_ref() {
            match t.cmp(s) {
                Ordering::Less => continue,
                Ordering::Equal => continue 'outer,
                Ordering::Greater => return false,
            }
        }
        return false;
    }
    true
}

/// `LL(X | parents) = sum N_{x,pi} ln(N_{x,pi} / N_pi)`; unobserved cells
/// contribute zero.
pub fn log_likelihood(table: &CategoricalTable, x: usize, parents: &[usize]) -> Result<f64> {
    let mut ll = 0.0;
    table.visit_configs(x, parents, |_, hist| {
        let mut n_pi = 0u64;
        for &c in hist {
            if c > 0 {
                let c = c as f64;
                ll += c * c.ln();
            }
            n_pi += c as u64;
        }
        let n_pi = n_pi as f64;
        ll -= n_pi * n_pi.ln();
    })?;
    Ok(ll)
}

/// `-(ln N / 2) (|X| - 1) |parents|`, with `|parents|` the product of the
/// parent cardinalities.
pub fn penalty(x: usize, parents: &[usize], n_rows: usize, cardinalities: &[usize]) -> f64 {
    let configs: f64 = parents.iter().map(|&p| cardinalities[p] as f64).product();
    -((n_rows as f64).ln() / 2.0) * (cardinalities[x] as f64 - 1.0) * configs
}

pub fn bic(table: &CategoricalTable, x: usize, parents: &[usize]) -> Result<f64> {
    Ok(log_likelihood(table, x, parents)?
        + penalty(x, parents, table.n_rows(), table.cardinalities()))
}

/// `ii(X; P1; P2)` obtained by rearranging the decomposition
/// `LL(X|P1 u P2) = LL(X|P1) + LL(X|P2) - LL(X) + N ii`.
pub fn interaction_information(
    table: &CategoricalTable,
    x: usize,
    p1: &[usize],
    p2: &[usize],
) -> Result<f64> {
    if p1.is_empty() || p2.is_empty() {
        return Err(Error::InvalidArgument(
            "interaction information needs two nonempty sets".into(),
        ));
    }
    if p1.iter().any(|p| p2.contains(p)) {
        return Err(Error::InvalidArgument("parent sets overlap".into()));
    }
    let mut union: Vec<usize> = p1.iter().chain(p2).copied().collect();
    union.sort_unstable();
    let joint = log_likelihood(table, x, &union)?;
    let a = log_likelihood(table, x, p1)?;
    let b = log_likelihood(table, x, p2)?;
    let marginal = log_likelihood(table, x, &[])?;
    Ok((joint - a - b + marginal) / table.n_rows() as f64)
}

/// Per-variable and pairwise statistics used by the pruning bound and the
/// informative score.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseStats {
    n_rows: usize,
    cardinalities: Vec<usize>,
    ll0: Vec<f64>,
    mi: Vec<f64>,
    w: Vec<f64>,
}

impl PairwiseStats {
    pub fn compute(table: &CategoricalTable) -> Result<Self> {
        let n = table.n_vars();
        let ll0 = (0..n)
            .into_par_iter()
            .map(|x| log_likelihood(table, x, &[]))
            .collect::<Result<Vec<f64>>>()?;
        let rows = (0..n)
            .into_par_iter()
            .map(|x| {
                ((x + 1)..n)
                    .map(|y| Ok(log_likelihood(table, x, &[y])? - ll0[x]))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let mut mi = vec![0.0; n * n];
        for (x, row) in rows.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                let y = x + 1 + off;
                mi[x * n + y] = v;
                mi[y * n + x] = v;
            }
        }
        let mut w = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    w[x * n + y] = mi[x * n + y] - ll0[x].max(ll0[y]);
                }
            }
        }
        Ok(Self {
            n_rows: table.n_rows(),
            cardinalities: table.cardinalities().to_vec(),
            ll0,
            mi,
            w,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.ll0.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    /// `LL(X)` with the empty parent set.
    pub fn ll0(&self, x: usize) -> f64 {
        self.ll0[x]
    }

    /// `MI(X,Y) = LL(X|Y) - LL(X)`, which is N times the empirical mutual
    /// information in nats.
    pub fn mi(&self, x: usize, y: usize) -> f64 {
        self.mi[x * self.n_vars() + y]
    }

    /// `w(X,Y) = MI(X,Y) - max(LL(X), LL(Y))`.
    pub fn w(&self, x: usize, y: usize) -> f64 {
        self.w[x * self.n_vars() + y]
    }

    pub fn penalty(&self, x: usize, parents: &[usize]) -> f64 {
        penalty(x, parents, self.n_rows, &self.cardinalities)
    }
}

/// Returns true when adding `y0` to `base` cannot lead to an optimal
/// parent set, nor can any superset built from `remaining`:
///
/// (a) `w(X,y0) + Pen(X, base+y0) <= Pen(X, base)`, and
/// (b) `max_{y in remaining} w(X,y) + Pen(X, base+y) <= 0`.
///
/// `remaining` must exclude `base` and `y0`. Requires every candidate
/// parent to have at least two states.
pub fn bic_bound_prunes(
    stats: &PairwiseStats,
    x: usize,
    base: &[usize],
    y0: usize,
    remaining: &[usize],
) -> bool {
    let pen_base = stats.penalty(x, base);
    let card = |v: usize| stats.cardinalities[v] as f64;
    if stats.w(x, y0) + pen_base * card(y0) > pen_base {
        return false;
    }
    remaining
        .iter()
        .all(|&y| stats.w(x, y) + pen_base * card(y) <= 0.0)
}

/// Largest parent-set size that can be optimal for a child with
/// `child_cardinality` states given `n_rows` records: the smallest `p` for
/// which every `p`-parent set (binary parents being the worst case)
/// satisfies `ln|Pi| >= ln(2 ln|X| / (|X|-1)) + ln((N+1) / ln N)`. Any
/// strict superset of such a set is dominated.
pub fn max_parents_cap(n_rows: usize, child_cardinality: usize) -> usize {
    if child_cardinality <= 1 {
        return 0;
    }
    if n_rows <= 1 {
        return usize::MAX;
    }
    let card = child_cardinality as f64;
    let n = n_rows as f64;
    let threshold = (2.0 * card.ln() / (card - 1.0)).ln() + ((n + 1.0) / n.ln()).ln();
    let mut p = 0usize;
    while (p as f64) * std::f64::consts::LN_2 < threshold {
        p += 1;
    }
    p
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PruneStats {
    /// Parent sets whose score was computed.
    pub evaluated: u64,
    /// Sets discarded by the bound (their supersets are never generated).
    pub pruned: u64,
    /// Scored sets dropped by the per-variable list limit.
    pub capped: u64,
    /// Set when the time budget ran out before the lattice was exhausted.
    pub timed_out: bool,
}

impl PruneStats {
    fn merge(&mut self, other: PruneStats) {
        self.evaluated += other.evaluated;
        self.pruned += other.pruned;
        self.capped += other.capped;
        self.timed_out |= other.timed_out;
    }
}

#[derive(Debug, Clone)]
pub struct ExploreConfig {
    /// Treewidth bound; parent sets never exceed it.
    pub k: usize,
    pub max_sets: usize,
    /// Optional user cap on the parent-set size.
    pub max_parents: Option<usize>,
    pub time_budget: Option<Duration>,
    /// Disable to enumerate the full size-capped lattice.
    pub prune: bool,
}

impl ExploreConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_sets: DEFAULT_MAX_SETS,
            max_parents: None,
            time_budget: None,
            prune: true,
        }
    }

    pub fn effective_cap(&self, n_rows: usize, child_cardinality: usize) -> usize {
        let mut cap = self.k.min(max_parents_cap(n_rows, child_cardinality));
        if let Some(user) = self.max_parents {
            cap = cap.min(user);
        }
        cap
    }
}

/// Breadth-first walk over the parent-set lattice of `x` by increasing
/// size. A set is generated only when all of its immediate subsets
/// survived; surviving sets are scored, sorted by [`rank_order`] and
/// truncated to `max_sets` (the empty set is always kept).
pub fn explore_parent_sets(
    table: &CategoricalTable,
    stats: &PairwiseStats,
    x: usize,
    cfg: &ExploreConfig,
) -> Result<(Vec<ScoredParentSet>, PruneStats)> {
    if cfg.k < 1 {
        return Err(Error::InvalidArgument(
            "treewidth bound must be at least 1".into(),
        ));
    }
    let n = table.n_vars();
    if x >= n {
        return Err(Error::VariableOutOfRange(x));
    }
    let deadline = cfg.time_budget.map(|d| Instant::now() + d);
    let mut prune_stats = PruneStats::default();
    let cap = cfg.effective_cap(table.n_rows(), table.cardinality(x));
    // Single-state variables carry no information and cannot raise a score.
    let candidates: Vec<usize> = (0..n)
        .filter(|&y| y != x && table.cardinality(y) >= 2)
        .collect();

    let mut scored = vec![ScoredParentSet::new(vec![], bic(table, x, &[])?)];
    prune_stats.evaluated += 1;

    let mut singleton_pruned = vec![false; n];
    let mut level: Vec<Vec<usize>> = vec![vec![]];
    let mut alive: HashSet<Vec<usize>> = HashSet::new();
    alive.insert(vec![]);

    'levels: for size in 0..cap {
        let mut next_level = Vec::new();
        let mut next_alive = HashSet::new();
        for set in &level {
            let last = set.last().copied();
            for &y in &candidates {
                if last.is_some_and(|l| y <= l) || singleton_pruned[y] {
                    continue;
                }
                let mut cand = set.clone();
                cand.push(y);
                if size > 0 {
                    let all_subsets_alive = (0..cand.len() - 1).all(|drop| {
                        let sub: Vec<usize> = cand
                            .iter()
                            .enumerate()
                            .filter(|&(i, _)| i != drop)
                            .map(|(_, &v)| v)
                            .collect();
                        alive.contains(&sub)
                    });
                    if !all_subsets_alive {
                        continue;
                    }
                }
                if cfg.prune {
                    // Singletons are checked against every candidate; deeper
                    // sets may ignore variables whose singleton was pruned,
                    // since no generated set can contain them.
                    let remaining: Vec<usize> = candidates
                        .iter()
                        .copied()
                        .filter(|v| !cand.contains(v) && (size == 0 || !singleton_pruned[*v]))
                        .collect();
                    let prunable = (0..cand.len()).any(|i| {
                        let base: Vec<usize> = cand
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != i)
                            .map(|(_, &v)| v)
                            .collect();
                        bic_bound_prunes(stats, x, &base, cand[i], &remaining)
                    });
                    if prunable {
                        prune_stats.pruned += 1;
                        if size == 0 {
                            singleton_pruned[y] = true;
                        }
                        continue;
                    }
                }
                let score = bic(table, x, &cand)?;
                prune_stats.evaluated += 1;
                scored.push(ScoredParentSet {
                    parents: cand.clone(),
                    score,
                });
                next_alive.insert(cand.clone());
                next_level.push(cand);
                if deadline.is_some_and(|d| Instant::now() >= d) {
                    prune_stats.timed_out = true;
                    break 'levels;
                }
            }
        }
        if next_level.is_empty() {
            break;
        }
        level = next_level;
        alive = next_alive;
    }

    scored.sort_by(rank_order);
    truncate_keeping_empty(&mut scored, cfg.max_sets, &mut prune_stats);
    Ok((scored, prune_stats))
}

fn truncate_keeping_empty(list: &mut Vec<ScoredParentSet>, max_sets: usize, stats: &mut PruneStats) {
    let max_sets = max_sets.max(1);
    if list.len() <= max_sets {
        return;
    }
    stats.capped += (list.len() - max_sets) as u64;
    let empty_pos = list.iter().position(|s| s.parents.is_empty());
    match empty_pos {
        Some(pos) if pos >= max_sets => {
            let empty = list.swap_remove(pos);
            list.truncate(max_sets - 1);
            list.push(empty);
        }
        _ => list.truncate(max_sets),
    }
}

/// Candidate parent sets for every variable, frozen before search.
#[derive(Debug, Clone)]
pub struct ScoreCache {
    names: Vec<String>,
    lists: Vec<Vec<ScoredParentSet>>,
    stats: Option<PairwiseStats>,
    prune_stats: PruneStats,
}

impl ScoreCache {
    /// Scores every variable of `table` in parallel on the current rayon
    /// pool.
    pub fn build(table: &CategoricalTable, cfg: &ExploreConfig) -> Result<Self> {
        let stats = PairwiseStats::compute(table)?;
        let results = (0..table.n_vars())
            .into_par_iter()
            .map(|x| explore_parent_sets(table, &stats, x, cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut prune_stats = PruneStats::default();
        let mut lists = Vec::with_capacity(results.len());
        for (list, s) in results {
            prune_stats.merge(s);
            lists.push(list);
        }
        Ok(Self {
            names: table.names().to_vec(),
            lists,
            stats: Some(stats),
            prune_stats,
        })
    }

    /// Assembles a cache from explicit lists. Each list is re-sorted and
    /// must contain the empty set and only valid, child-free parent ids.
    pub fn from_lists(names: Vec<String>, mut lists: Vec<Vec<ScoredParentSet>>) -> Result<Self> {
        let n = lists.len();
        if n == 0 {
            return Err(Error::Empty("score cache has no variables".into()));
        }
        for (x, list) in lists.iter_mut().enumerate() {
            validate_list(x, n, list)?;
            list.sort_by(rank_order);
        }
        let names = if names.len() == n {
            names
        } else {
            (0..n).map(|i| format!("X{i}")).collect()
        };
        Ok(Self {
            names,
            lists,
            stats: None,
            prune_stats: PruneStats::default(),
        })
    }

    pub fn with_stats(mut self, stats: PairwiseStats) -> Result<Self> {
        if stats.n_vars() != self.n_vars() {
            return Err(Error::InvalidArgument(format!(
                "statistics cover {} variables, cache has {}",
                stats.n_vars(),
                self.n_vars()
            )));
        }
        self.stats = Some(stats);
        Ok(self)
    }

    pub fn n_vars(&self) -> usize {
        self.lists.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn list(&self, x: usize) -> &[ScoredParentSet] {
        &self.lists[x]
    }

    pub fn lists(&self) -> &[Vec<ScoredParentSet>] {
        &self.lists
    }

    pub fn stats(&self) -> Result<&PairwiseStats> {
        self.stats.as_ref().ok_or(Error::MissingStatistics)
    }

    pub fn prune_stats(&self) -> PruneStats {
        self.prune_stats
    }

    pub fn empty_score(&self, x: usize) -> f64 {
        self.lists[x]
            .iter()
            .find(|s| s.parents.is_empty())
            .map(|s| s.score)
            .expect("every list holds the empty set")
    }

    /// Score of `parents` for `x` if the set is cached.
    pub fn lookup(&self, x: usize, parents: &[usize]) -> Option<f64> {
        self.lists[x]
            .iter()
            .find(|s| s.parents == parents)
            .map(|s| s.score)
    }

    /// First (best) cached set of `x` satisfying `pred`.
    pub fn best_where(&self, x: usize, mut pred: impl FnMut(&[usize]) -> bool) -> (usize, &ScoredParentSet) {
        self.lists[x]
            .iter()
            .enumerate()
            .find(|(_, s)| pred(&s.parents))
            .expect("the empty set satisfies every feasibility predicate")
    }

    /// Restriction to lists whose sets satisfy `keep(x, parents)`.
    pub fn filtered(&self, mut keep: impl FnMut(usize, &[usize]) -> bool) -> ScoreCache {
        let lists = self
            .lists
            .iter()
            .enumerate()
            .map(|(x, l)| {
                l.iter()
                    .filter(|s| s.parents.is_empty() || keep(x, &s.parents))
                    .cloned()
                    .collect()
            })
            .collect();
        ScoreCache {
            names: self.names.clone(),
            lists,
            stats: self.stats.clone(),
            prune_stats: self.prune_stats,
        }
    }
}

pub fn mutual_information_term(cache: &ScoreCache, x: usize, y: usize) -> Result<f64> {
    check_pair(cache, x, y)?;
    Ok(cache.stats()?.mi(x, y))
}

pub fn w_bound(cache: &ScoreCache, x: usize, y: usize) -> Result<f64> {
    check_pair(cache, x, y)?;
    Ok(cache.stats()?.w(x, y))
}

fn check_pair(cache: &ScoreCache, x: usize, y: usize) -> Result<()> {
    let n = cache.n_vars();
    if x >= n {
        return Err(Error::VariableOutOfRange(x));
    }
    if y >= n {
        return Err(Error::VariableOutOfRange(y));
    }
    if x == y {
        return Err(Error::InvalidArgument("pairwise term needs X != Y".into()));
    }
    Ok(())
}

fn validate_list(x: usize, n: usize, list: &[ScoredParentSet]) -> Result<()> {
    if !list.iter().any(|s| s.parents.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "variable {x} lacks the empty parent set"
        )));
    }
    let mut seen = HashSet::new();
    for s in list {
        if s.parents.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "variable {x}: parent set {:?} is not strictly ascending",
                s.parents
            )));
        }
        if let Some(&p) = s.parents.iter().find(|&&p| p >= n) {
            return Err(Error::VariableOutOfRange(p));
        }
        if s.parents.contains(&x) {
            return Err(Error::TargetInParents(x));
        }
        if !s.score.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "variable {x}: non-finite score"
            )));
        }
        if !seen.insert(&s.parents) {
            return Err(Error::InvalidArgument(format!(
                "variable {x}: duplicate parent set {:?}",
                s.parents
            )));
        }
    }
    Ok(())
}

/// Text format: a line with the variable count, then per variable a line
/// `name index set_count` followed by `set_count` lines
/// `score parent_count p1 .. pk` with ascending ids.
pub fn write_scores(cache: &ScoreCache, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_scores(cache)).map_err(|e| Error::io(path, e))
}

pub fn format_scores(cache: &ScoreCache) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", cache.n_vars());
    for (x, list) in cache.lists.iter().enumerate() {
        let name: String = cache.names[x]
            .chars()
            .map(|c| if c.is_whitespace() { '_' } else { c })
            .collect();
        let _ = writeln!(out, "{name} {x} {}", list.len());
        for s in list {
            let _ = write!(out, "{:.6} {}", s.score, s.parents.len());
            for p in &s.parents {
                let _ = write!(out, " {p}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreCache> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text)
}

struct Tokens<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t))),
        );
        Self {
            inner: it.peekable(),
            last_line: 1,
        }
    }

    fn next_str(&mut self, what: &str) -> Result<&'a str> {
        match self.inner.next() {
            Some((line, tok)) => {
                self.last_line = line;
                Ok(tok)
            }
            None => Err(Error::parse(
                self.last_line,
                format!("unexpected end of input, expected {what}"),
            )),
        }
    }

    fn next_usize(&mut self, what: &str) -> Result<usize> {
        let tok = self.next_str(what)?;
        tok.parse()
            .map_err(|_| Error::parse(self.last_line, format!("invalid {what} '{tok}'")))
    }

    fn next_f64(&mut self, what: &str) -> Result<f64> {
        let tok = self.next_str(what)?;
        tok.replace('\u{2212}', "-")
            .parse()
            .map_err(|_| Error::parse(self.last_line, format!("invalid {what} '{tok}'")))
    }

    fn is_empty(&mut self) -> bool {
        self.inner.peek().is_none()
    }
}

pub fn parse_scores(text: &str) -> Result<ScoreCache> {
    let mut tok = Tokens::new(text);
    if tok.is_empty() {
        return Err(Error::parse(1, "empty score file"));
    }
    let n = tok.next_usize("variable count")?;
    if n == 0 {
        return Err(Error::parse(1, "variable count must be positive"));
    }
    let mut names = vec![String::new(); n];
    let mut lists: Vec<Option<Vec<ScoredParentSet>>> = vec![None; n];
    for block in 0..n {
        if tok.is_empty() {
            return Err(Error::parse(
                tok.last_line,
                format!("header declares {n} variables but only {block} blocks found"),
            ));
        }
        let name = tok.next_str("variable name")?.to_string();
        let idx = tok.next_usize("variable index")?;
        if idx >= n {
            return Err(Error::parse(tok.last_line, format!("variable index {idx} out of range")));
        }
        if lists[idx].is_some() {
            return Err(Error::parse(tok.last_line, format!("duplicate block for variable {idx}")));
        }
        let count = tok.next_usize("set count")?;
        let mut list = Vec::with_capacity(count);
        for _ in 0..count {
            let score = tok.next_f64("score")?;
            let k = tok.next_usize("parent count")?;
            let mut parents = Vec::with_capacity(k);
            for _ in 0..k {
                let p = tok.next_usize("parent id")?;
                if p >= n {
                    return Err(Error::parse(tok.last_line, format!("parent id {p} out of range")));
                }
                if p == idx {
                    return Err(Error::parse(tok.last_line, format!("variable {idx} lists itself as parent")));
                }
                parents.push(p);
            }
            parents.sort_unstable();
            if parents.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::parse(tok.last_line, "repeated parent id"));
            }
            list.push(ScoredParentSet { parents, score });
        }
        names[idx] = name;
        lists[idx] = Some(list);
    }
    if !tok.is_empty() {
        return Err(Error::parse(tok.last_line, "trailing content after last block"));
    }
    let mut lists: Vec<Vec<ScoredParentSet>> = lists.into_iter().map(Option::unwrap).collect();
    for (x, list) in lists.iter_mut().enumerate() {
        validate_list(x, n, list)?;
        // Stable on score only: ties created by rounding keep file order.
        list.sort_by(|a, b| b.score.total_cmp(&a.score));
    }
    Ok(ScoreCache {
        names,
        lists,
        stats: None,
        prune_stats: PruneStats::default(),
    })
}
