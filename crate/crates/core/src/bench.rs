//! Method comparison and verification of learned structures.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baseline::{s2_learn, s2plus_learn, BaselineConfig, DEFAULT_DAG_ORDERS};
use crate::dataset::CategoricalTable;
use crate::error::{Error, Result};
use crate::exact::{exact_learn_capped, EXACT_CAP};
use crate::graph::{certify_treewidth, check_certificate, find_cycle, Dag, DagFile, TreewidthCheck};
use crate::scoring::{bic, ScoreCache};
use crate::search::{anytime_learn, AnytimeConfig, BestRegister, Learned, Method, DEFAULT_NODE_BUDGET};

/// Relative worsening `(G - T) / |G|` of score `T` against reference `G`:
/// zero when they match, positive when `T` is worse. Both must be
/// negative.
pub fn w_score(reference: f64, score: f64) -> Result<f64> {
    if !(reference < 0.0 && score < 0.0) {
        return Err(Error::NonNegativeScore { reference, score });
    }
    Ok((reference - score) / reference.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LearnMethod {
    KG,
    KAStar,
    S2,
    S2Plus,
    /// Unbounded optimum; ignores the treewidth bound.
    Exact,
}

impl FromStr for LearnMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s2" => Ok(LearnMethod::S2),
            "s2plus" | "s2+" => Ok(LearnMethod::S2Plus),
            "exact" => Ok(LearnMethod::Exact),
            other => match other.parse::<Method>()? {
                Method::KG => Ok(LearnMethod::KG),
                Method::KAStar => Ok(LearnMethod::KAStar),
            },
        }
    }
}

impl std::fmt::Display for LearnMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LearnMethod::KG => "kg",
            LearnMethod::KAStar => "kastar",
            LearnMethod::S2 => "s2",
            LearnMethod::S2Plus => "s2plus",
            LearnMethod::Exact => "exact",
        })
    }
}

/// Stop after `iterations` proposals or `time`, whichever comes first.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Budget {
    pub iterations: Option<u64>,
    pub time: Option<Duration>,
}

impl Budget {
    pub fn iterations(n: u64) -> Self {
        Self {
            iterations: Some(n),
            time: None,
        }
    }

    pub fn seconds(s: f64) -> Self {
        Self {
            iterations: None,
            time: Some(Duration::from_secs_f64(s)),
        }
    }

    fn validate(&self, method: LearnMethod) -> Result<()> {
        if method == LearnMethod::Exact {
            return Ok(());
        }
        if self.iterations.is_none() && self.time.is_none() {
            return Err(Error::InvalidArgument(format!("{method}: no budget given")));
        }
        if self.iterations == Some(0) || self.time.is_some_and(|t| t.is_zero()) {
            return Err(Error::InvalidArgument(format!("{method}: budget must be positive")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: LearnMethod,
    pub k: usize,
    pub budget: Budget,
    pub workers: usize,
    pub node_budget: usize,
    pub dag_orders: usize,
    /// Size cap for [`LearnMethod::Exact`].
    pub exact_cap: usize,
}

impl RunConfig {
    pub fn new(method: LearnMethod, k: usize, budget: Budget) -> Self {
        Self {
            method,
            k,
            budget,
            workers: 1,
            node_budget: DEFAULT_NODE_BUDGET,
            dag_orders: DEFAULT_DAG_ORDERS,
            exact_cap: EXACT_CAP,
        }
    }
}

/// Runs one method on a frozen cache.
pub fn run_method(cache: &ScoreCache, cfg: &RunConfig, seed: u64) -> Result<BestRegister> {
    cfg.budget.validate(cfg.method)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let search = |method| {
        let mut a = AnytimeConfig::new(method, cfg.k);
        a.time_budget = cfg.budget.time;
        a.max_iterations = cfg.budget.iterations;
        a.workers = cfg.workers;
        a.node_budget = cfg.node_budget;
        a
    };
    let baseline = || {
        let mut b = BaselineConfig::new(cfg.k);
        b.time_budget = cfg.budget.time;
        b.max_iterations = cfg.budget.iterations;
        b.workers = cfg.workers;
        b.dag_orders = cfg.dag_orders;
        b
    };
    match cfg.method {
        LearnMethod::KG => anytime_learn(cache, &search(Method::KG), &mut rng),
        LearnMethod::KAStar => anytime_learn(cache, &search(Method::KAStar), &mut rng),
        LearnMethod::S2 => s2_learn(cache, &baseline(), &mut rng),
        LearnMethod::S2Plus => s2plus_learn(cache, &baseline(), &mut rng),
        LearnMethod::Exact => {
            let start = Instant::now();
            let n = cache.n_vars();
            let vars: Vec<usize> = (0..n).collect();
            let dag = exact_learn_capped(cache, &vars, cfg.exact_cap)?.to_dag(n)?;
            let learned = Learned {
                elimination_order: dag.reverse_topological_order(),
                dag,
                ktree: None,
                optimal: true,
                expanded: 0,
            };
            let mut reg = BestRegister::new(learned.clone());
            reg.iterations = 1;
            reg.offer(learned);
            reg.elapsed = start.elapsed();
            Ok(reg)
        }
    }
}

/// Where the W-score reference `G` comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// Exact optimum, when the cache fits the cap.
    Exact { cap: usize },
    /// A known score, e.g. from a reference file.
    Score(f64),
    /// The best score any benchmarked method reached.
    BestKnown,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub k: usize,
    pub methods: Vec<(LearnMethod, Budget)>,
    pub seed: u64,
    pub workers: usize,
    pub node_budget: usize,
    pub dag_orders: usize,
    pub reference: Reference,
}

impl BenchConfig {
    pub fn new(k: usize, methods: Vec<(LearnMethod, Budget)>) -> Self {
        Self {
            k,
            methods,
            seed: 0,
            workers: 1,
            node_budget: DEFAULT_NODE_BUDGET,
            dag_orders: DEFAULT_DAG_ORDERS,
            reference: Reference::Exact { cap: EXACT_CAP },
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: LearnMethod,
    pub best_score: f64,
    pub iterations: u64,
    pub median: Option<f64>,
    pub max: Option<f64>,
    pub w: Option<f64>,
    pub elapsed: Duration,
    pub treewidth: TreewidthCheck,
    pub dag: Dag,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    pub reference: Option<f64>,
    pub reference_kind: &'static str,
    pub results: Vec<MethodResult>,
}

impl BenchReport {
    pub fn result(&self, method: LearnMethod) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }

    /// Aligned human-readable table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let reference = self.reference.map_or("-".into(), |g| format!("{g:.6}"));
        let _ = writeln!(out, "n={} k={} seed={} reference={} ({})", self.n, self.k, self.seed, reference, self.reference_kind);
        let _ = writeln!(
            out,
            "{:<8} {:>16} {:>10} {:>16} {:>16} {:>10} {:>6} {:>9}",
            "method", "best", "iters", "median", "max", "W", "width", "seconds"
        );
        let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
        for r in &self.results {
            let _ = writeln!(
                out,
                "{:<8} {:>16.6} {:>10} {:>16} {:>16} {:>10} {:>6} {:>9.3}",
                r.method.to_string(),
                r.best_score,
                r.iterations,
                opt(r.median, 6),
                opt(r.max, 6),
                opt(r.w, 6),
                r.treewidth.width,
                r.elapsed.as_secs_f64()
            );
        }
        out
    }

    /// One `key=value` record per method.
    pub fn records(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.9}"));
        for r in &self.results {
            let _ = writeln!(
                out,
                "method={} n={} k={} seed={} best={:.9} iterations={} median={} max={} reference={} reference_kind={} w={} width={} seconds={:.3}",
                r.method,
                self.n,
                self.k,
                self.seed,
                r.best_score,
                r.iterations,
                opt(r.median),
                opt(r.max),
                opt(self.reference),
                self.reference_kind,
                opt(r.w),
                r.treewidth.width,
                r.elapsed.as_secs_f64()
            );
        }
        out
    }
}

/// Runs every configured method on the same cache and seed, checks each
/// result's treewidth certificate, and scores it against the reference.
pub fn run_bench(cache: &ScoreCache, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods to benchmark".into()));
    }
    for (m, b) in &cfg.methods {
        b.validate(*m)?;
    }
    let n = cache.n_vars();
    let mut results = Vec::new();
    for &(method, budget) in &cfg.methods {
        let run = RunConfig {
            method,
            k: cfg.k,
            budget,
            workers: cfg.workers,
            node_budget: cfg.node_budget,
            dag_orders: cfg.dag_orders,
            exact_cap: match cfg.reference {
                Reference::Exact { cap } => cap,
                _ => EXACT_CAP,
            },
        };
        let reg = run_method(cache, &run, cfg.seed)?;
        let treewidth = check_certificate(&reg.best.dag, &reg.best.elimination_order, cfg.k)?;
        if method != LearnMethod::Exact && !treewidth.ok {
            return Err(Error::InvalidArgument(format!(
                "{method} returned a DAG whose certificate has width {} > {}",
                treewidth.width, cfg.k
            )));
        }
        results.push(MethodResult {
            method,
            best_score: reg.best_score,
            iterations: reg.iterations,
            median: reg.median(),
            max: reg.max(),
            w: None,
            elapsed: reg.elapsed,
            treewidth,
            dag: reg.best.dag,
        });
    }

    let (reference, reference_kind) = match cfg.reference {
        Reference::Score(g) => (Some(g), "given"),
        Reference::BestKnown => (
            results.iter().map(|r| r.best_score).max_by(f64::total_cmp),
            "best-known",
        ),
        Reference::Exact { cap } => {
            if let Some(r) = results.iter().find(|r| r.method == LearnMethod::Exact) {
                (Some(r.best_score), "exact")
            } else if n <= cap {
                let vars: Vec<usize> = (0..n).collect();
                (Some(exact_learn_capped(cache, &vars, cap)?.total()), "exact")
            } else {
                warn!("{n} variables exceed the exact cap {cap}; W-scores omitted");
                (None, "none")
            }
        }
    };
    if let Some(g) = reference {
        for r in &mut results {
            match w_score(g, r.best_score) {
                Ok(w) => {
                    if w < 0.0 {
                        warn!("{} beats the reference score (W = {w:.6})", r.method);
                    }
                    r.w = Some(w);
                }
                Err(e) => warn!("W-score for {}: {e}", r.method),
            }
        }
    }
    Ok(BenchReport {
        k: cfg.k,
        n,
        seed: cfg.seed,
        reference,
        reference_kind,
        results,
    })
}

/// Source of scores for [`verify`].
pub enum ScoreSource<'a> {
    Data(&'a CategoricalTable),
    Cache(&'a ScoreCache),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub cycle: Option<Vec<usize>>,
    /// `(node, stored, recomputed)` for every node off by more than 1e-6;
    /// recomputed is NaN when the cache lacks the set.
    pub score_mismatches: Vec<(usize, f64, f64)>,
    pub stored_total: f64,
    pub recomputed_total: Option<f64>,
    pub treewidth: Option<TreewidthCheck>,
    pub n_nodes: usize,
}

/// Score tolerance for [`verify`].
pub const SCORE_TOLERANCE: f64 = 1e-6;

impl Verification {
    /// Stored node scores may each be off by up to the per-node tolerance,
    /// so the total gets one tolerance per node plus one for itself.
    pub fn total_mismatch(&self) -> bool {
        let tol = SCORE_TOLERANCE * (self.n_nodes + 1) as f64;
        self.recomputed_total
            .is_none_or(|t| (t - self.stored_total).abs() > tol)
    }

    pub fn ok(&self) -> bool {
        self.cycle.is_none()
            && self.score_mismatches.is_empty()
            && !self.total_mismatch()
            && self.treewidth.as_ref().is_some_and(|t| t.ok)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        match &self.cycle {
            Some(c) => {
                let _ = writeln!(out, "acyclic: FAIL, cycle {c:?}");
            }
            None => {
                let _ = writeln!(out, "acyclic: ok");
            }
        }
        for (v, stored, recomputed) in &self.score_mismatches {
            let _ = writeln!(out, "score mismatch at node {v}: file {stored:.6}, recomputed {recomputed:.6}");
        }
        let recomputed = self.recomputed_total.map_or("NA".to_string(), |t| format!("{t:.6}"));
        let status = if self.total_mismatch() { "FAIL" } else { "ok" };
        let _ = writeln!(out, "total score: {status} (file {:.6}, recomputed {recomputed})", self.stored_total);
        if let Some(t) = &self.treewidth {
            let order: Vec<String> = t.order.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(
                out,
                "treewidth certificate: {} (width {}) order {}",
                if t.ok { "ok" } else { "FAIL" },
                t.width,
                order.join(" ")
            );
        }
        let _ = writeln!(out, "verification: {}", if self.ok() { "PASS" } else { "FAIL" });
        out
    }
}

/// Checks a DAG file: acyclicity, every node score against data or cache,
/// the stored total, and a treewidth certificate of width at most `k`.
pub fn verify(file: &DagFile, source: &ScoreSource<'_>, k: usize) -> Result<Verification> {
    let n = file.parents.len();
    let expected = match source {
        ScoreSource::Data(t) => t.n_vars(),
        ScoreSource::Cache(c) => c.n_vars(),
    };
    if n != expected {
        return Err(Error::InvalidArgument(format!(
            "DAG has {n} nodes, score source has {expected} variables"
        )));
    }
    let mut mismatches = Vec::new();
    let mut total = Some(0.0);
    for v in 0..n {
        let ps = &file.parents[v];
        let score = match source {
            ScoreSource::Data(t) => Some(bic(t, v, ps)?),
            ScoreSource::Cache(c) => c.lookup(v, ps),
        };
        match score {
            Some(s) => {
                if (s - file.scores[v]).abs() > SCORE_TOLERANCE {
                    mismatches.push((v, file.scores[v], s));
                }
                total = total.map(|t| t + s);
            }
            None => {
                mismatches.push((v, file.scores[v], f64::NAN));
                total = None;
            }
        }
    }
    let cycle = find_cycle(&file.parents);
    let treewidth = if cycle.is_none() {
        Some(certify_treewidth(&Dag::new(file.parents.clone())?, k))
    } else {
        None
    };
    Ok(Verification {
        cycle,
        score_mismatches: mismatches,
        stored_total: file.total_score,
        recomputed_total: total,
        treewidth,
        n_nodes: n,
    })
}
