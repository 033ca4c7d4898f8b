//! Synthetic networks and forward-sampled datasets.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::Exp1;

use crate::dataset::CategoricalTable;
use crate::error::{Error, Result};
use crate::graph::{format_dag, parse_dag, Dag};

/// Inverted k-ary tree on `n` nodes: starting from a single sink, a random
/// parentless node repeatedly receives `k` new parents. When `n - 1` is not
/// a multiple of `k` the last node expanded gets fewer parents. Node labels
/// are shuffled.
pub fn gen_inverted_tree<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Result<Dag> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if n < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "an inverted tree with k={k} needs at least {} nodes, got {n}",
            k + 1
        )));
    }
    let mut parents: Vec<Vec<usize>> = vec![Vec::new()];
    let mut roots = vec![0usize];
    while parents.len() < n {
        let pick = rng.random_range(0..roots.len());
        let x = roots.swap_remove(pick);
        let add = k.min(n - parents.len());
        for _ in 0..add {
            let id = parents.len();
            parents.push(Vec::new());
            parents[x].push(id);
            roots.push(id);
        }
    }
    let mut label: Vec<usize> = (0..n).collect();
    label.shuffle(rng);
    let mut relabeled = vec![Vec::new(); n];
    for (v, ps) in parents.into_iter().enumerate() {
        relabeled[label[v]] = ps.into_iter().map(|p| label[p]).collect();
    }
    Dag::new(relabeled)
}

/// A DAG with a conditional distribution for every node and parent
/// configuration. Configurations are mixed-radix over the sorted parents,
/// first parent most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthNetwork {
    pub dag: Dag,
    pub cardinalities: Vec<usize>,
    /// `cpts[v][config][state]`.
    pub cpts: Vec<Vec<Vec<f64>>>,
}

fn dirichlet_row<R: Rng + ?Sized>(card: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..card).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

fn config_count(v: usize, dag: &Dag, cards: &[usize]) -> Result<usize> {
    dag.parents(v)
        .iter()
        .try_fold(1usize, |acc, &p| acc.checked_mul(cards[p]))
        .filter(|&c| c <= 1 << 24)
        .ok_or(Error::ConfigOverflow(v))
}

impl GroundTruthNetwork {
    /// Checks table shapes and normalization.
    pub fn new(dag: Dag, cardinalities: Vec<usize>, cpts: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = dag.n();
        if cardinalities.len() != n || cpts.len() != n {
            return Err(Error::InvalidArgument("network tables do not match the DAG size".into()));
        }
        if let Some(v) = cardinalities.iter().position(|&c| c == 0) {
            return Err(Error::InvalidArgument(format!("node {v} has no states")));
        }
        for v in 0..n {
            let rows = config_count(v, &dag, &cardinalities)?;
            if cpts[v].len() != rows {
                return Err(Error::InvalidArgument(format!(
                    "node {v}: expected {rows} CPT rows, found {}",
                    cpts[v].len()
                )));
            }
            for row in &cpts[v] {
                let sum: f64 = row.iter().sum();
                if row.len() != cardinalities[v] || row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!("node {v}: invalid probability row {row:?}")));
                }
            }
        }
        Ok(Self {
            dag,
            cardinalities,
            cpts,
        })
    }

    /// Random CPTs for `dag`, each row drawn from a flat Dirichlet.
    pub fn with_random_cpts<R: Rng + ?Sized>(dag: Dag, cardinalities: Vec<usize>, rng: &mut R) -> Result<Self> {
        let cpts = (0..dag.n())
            .map(|v| {
                let rows = config_count(v, &dag, &cardinalities)?;
                Ok((0..rows).map(|_| dirichlet_row(cardinalities[v], rng)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dag, cardinalities, cpts)
    }

    pub fn n(&self) -> usize {
        self.dag.n()
    }
}

/// Random network: nodes in a random order, each taking a uniform number
/// of parents in `0..=max_parents` from earlier nodes, states uniform in
/// `min_card..=max_card`.
pub fn gen_random_network<R: Rng + ?Sized>(
    n: usize,
    max_parents: usize,
    min_card: usize,
    max_card: usize,
    rng: &mut R,
) -> Result<GroundTruthNetwork> {
    if n == 0 {
        return Err(Error::InvalidArgument("network needs at least one node".into()));
    }
    if min_card < 1 || min_card > max_card {
        return Err(Error::InvalidArgument(format!(
            "invalid cardinality range {min_card}..={max_card}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let cards: Vec<usize> = (0..n).map(|_| rng.random_range(min_card..=max_card)).collect();
    let mut parents = vec![Vec::new(); n];
    for (i, &v) in order.iter().enumerate() {
        let count = rng.random_range(0..=max_parents.min(i));
        parents[v] = order[..i].choose_multiple(rng, count).copied().collect();
    }
    GroundTruthNetwork::with_random_cpts(Dag::new(parents)?, cards, rng)
}

/// `rows` records drawn by ancestral sampling.
pub fn forward_sample<R: Rng + ?Sized>(net: &GroundTruthNetwork, rows: usize, rng: &mut R) -> Result<CategoricalTable> {
    let n = net.n();
    let topo = net.dag.topological_order();
    let mut columns = vec![vec![0u32; rows]; n];
    let mut value = vec![0usize; n];
    for r in 0..rows {
        for &v in &topo {
            let config = net
                .dag
                .parents(v)
                .iter()
                .fold(0usize, |acc, &p| acc * net.cardinalities[p] + value[p]);
            let row = &net.cpts[v][config];
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut state = row.len() - 1;
            for (s, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    state = s;
                    break;
                }
            }
            value[v] = state;
            columns[v][r] = state as u32;
        }
    }
    let names = (0..n).map(|i| format!("X{i}")).collect();
    CategoricalTable::from_columns(names, net.cardinalities.clone(), columns)
}

/// DAG block, then `cards c0 c1 ...`, then per node `cpt v rows` followed
/// by one line of probabilities per parent configuration.
pub fn format_network(net: &GroundTruthNetwork) -> String {
    let mut out = format_dag(&net.dag);
    out.push_str("cards");
    for c in &net.cardinalities {
        let _ = write!(out, " {c}");
    }
    out.push('\n');
    for (v, table) in net.cpts.iter().enumerate() {
        let _ = writeln!(out, "cpt {v} {}", table.len());
        for row in table {
            let line: Vec<String> = row.iter().map(|p| format!("{p:.6}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out
}

pub fn write_network(net: &GroundTruthNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_network(net)).map_err(|e| Error::io(path, e))
}

/// Parses [`format_network`] output. Rows are renormalized to undo
/// rounding.
pub fn parse_network(text: &str) -> Result<GroundTruthNetwork> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let (first, header) = *lines.first().ok_or_else(|| Error::parse(1, "empty network file"))?;
    let n: usize = header
        .split_whitespace()
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(first, "invalid node count"))?;
    if lines.len() < n + 2 {
        return Err(Error::parse(first, "truncated network file"));
    }
    let dag_text: String = lines[..=n].iter().map(|(_, l)| format!("{l}\n")).collect();
    let dag = parse_dag(&dag_text)?.into_dag()?;
    let dag = Dag::new(dag.parent_sets().to_vec())?;

    let mut rest = lines[n + 1..].iter().copied();
    let (lineno, cards_line) = rest.next().expect("length checked");
    let mut toks = cards_line.split_whitespace();
    if toks.next() != Some("cards") {
        return Err(Error::parse(lineno, "expected `cards`"));
    }
    let cards = toks
        .map(|t| t.parse::<usize>().map_err(|_| Error::parse(lineno, "invalid cardinality")))
        .collect::<Result<Vec<_>>>()?;
    if cards.len() != n {
        return Err(Error::parse(lineno, format!("expected {n} cardinalities")));
    }
    let mut cpts: Vec<Option<Vec<Vec<f64>>>> = vec![None; n];
    while let Some((lineno, line)) = rest.next() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let (v, rows) = match toks.as_slice() {
            ["cpt", v, rows] => (
                v.parse::<usize>().map_err(|_| Error::parse(lineno, "invalid node"))?,
                rows.parse::<usize>().map_err(|_| Error::parse(lineno, "invalid row count"))?,
            ),
            _ => return Err(Error::parse(lineno, "expected `cpt <node> <rows>`")),
        };
        if v >= n || cpts[v].is_some() {
            return Err(Error::parse(lineno, format!("unexpected table for node {v}")));
        }
        let mut table = Vec::with_capacity(rows);
        for _ in 0..rows {
            let (lineno, line) = rest.next().ok_or_else(|| Error::parse(lineno, "missing CPT row"))?;
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::parse(lineno, "invalid probability")))
                .collect::<Result<Vec<_>>>()?;
            let sum: f64 = row.iter().sum();
            if row.len() != cards[v] || sum <= 0.0 || row.iter().any(|p| *p < 0.0) {
                return Err(Error::parse(lineno, "invalid probability row"));
            }
            table.push(row.into_iter().map(|p| p / sum).collect());
        }
        cpts[v] = Some(table);
    }
    let cpts = cpts
        .into_iter()
        .enumerate()
        .map(|(v, t)| t.ok_or_else(|| Error::parse(lines.len(), format!("missing table for node {v}"))))
        .collect::<Result<Vec<_>>>()?;
    GroundTruthNetwork::new(dag, cards, cpts)
}

pub fn read_network(path: impl AsRef<Path>) -> Result<GroundTruthNetwork> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network(&text)
}
