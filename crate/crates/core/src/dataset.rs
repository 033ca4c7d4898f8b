//! Complete categorical datasets and contingency counting.
//!
//! States are dense indices `0..cardinality`. Parent configurations are
//! encoded mixed-radix over the parents in the order they were given, the
//! first parent being the most significant digit and the last varying
//! fastest.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Parent-configuration spaces up to this size are tallied into a dense
/// array; larger ones are sorted.
const DENSE_LIMIT: u64 = 1 << 18;

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalTable {
    names: Vec<String>,
    cardinalities: Vec<usize>,
    n_rows: usize,
    /// Column-major cells, one vector per variable.
    columns: Vec<Vec<u32>>,
}

impl CategoricalTable {
    /// Builds a table from row-major records. Every value must lie in
    /// `0..cardinalities[var]`.
    pub fn from_rows(
        names: Vec<String>,
        cardinalities: Vec<usize>,
        rows: &[Vec<u32>],
    ) -> Result<Self> {
        let n = cardinalities.len();
        if n == 0 {
            return Err(Error::Empty("table has no variables".into()));
        }
        if rows.is_empty() {
            return Err(Error::Empty("table has no rows".into()));
        }
        let mut columns = vec![Vec::with_capacity(rows.len()); n];
        for (line, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::RaggedRow {
                    line: line + 1,
                    expected: n,
                    found: row.len(),
                });
            }
            for (var, &v) in row.iter().enumerate() {
                if v as usize >= cardinalities[var] {
                    return Err(Error::InvalidArgument(format!(
                        "row {}: state {v} of variable {var} exceeds cardinality {}",
                        line + 1,
                        cardinalities[var]
                    )));
                }
                columns[var].push(v);
            }
        }
        Self::from_columns(names, cardinalities, columns)
    }

    pub fn from_columns(
        names: Vec<String>,
        cardinalities: Vec<usize>,
        columns: Vec<Vec<u32>>,
    ) -> Result<Self> {
        let n = cardinalities.len();
        if n == 0 || columns.len() != n {
            return Err(Error::InvalidArgument(format!(
                "expected {n} columns, got {}",
                columns.len()
            )));
        }
        let n_rows = columns[0].len();
        if n_rows == 0 {
            return Err(Error::Empty("table has no rows".into()));
        }
        for (var, col) in columns.iter().enumerate() {
            if col.len() != n_rows {
                return Err(Error::InvalidArgument(format!(
                    "column {var} has {} rows, expected {n_rows}",
                    col.len()
                )));
            }
            if let Some(&v) = col.iter().find(|&&v| v as usize >= cardinalities[var]) {
                return Err(Error::InvalidArgument(format!(
                    "state {v} of variable {var} exceeds cardinality {}",
                    cardinalities[var]
                )));
            }
        }
        let names = if names.len() == n {
            names
        } else {
            (0..n).map(|i| format!("X{i}")).collect()
        };
        Ok(Self {
            names,
            cardinalities,
            n_rows,
            columns,
        })
    }

    /// Parses comma-separated text. Tokens of each column are mapped to
    /// state indices in first-appearance order.
    pub fn parse_csv(text: &str, has_header: bool) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());

        let mut names = Vec::new();
        if has_header {
            match lines.next() {
                Some((_, header)) => {
                    names = header.split(',').map(|s| s.trim().to_string()).collect();
                }
                None => return Err(Error::Empty("csv has no header".into())),
            }
        }

        let mut n: Option<usize> = if has_header { Some(names.len()) } else { None };
        let mut vocab: Vec<HashMap<String, u32>> = Vec::new();
        let mut columns: Vec<Vec<u32>> = Vec::new();
        for (idx, line) in lines {
            let tokens: Vec<&str> = line.split(',').map(str::trim).collect();
            let width = *n.get_or_insert(tokens.len());
            if tokens.len() != width {
                return Err(Error::RaggedRow {
                    line: idx + 1,
                    expected: width,
                    found: tokens.len(),
                });
            }
            if vocab.is_empty() {
                vocab = vec![HashMap::new(); width];
                columns = vec![Vec::new(); width];
            }
            for (col, tok) in tokens.iter().enumerate() {
                if tok.is_empty() || *tok == "?" {
                    return Err(Error::MissingValue {
                        line: idx + 1,
                        column: col,
                    });
                }
                let map = &mut vocab[col];
                let next = map.len() as u32;
                let state = *map.entry((*tok).to_string()).or_insert(next);
                columns[col].push(state);
            }
        }
        if columns.is_empty() || columns[0].is_empty() {
            return Err(Error::Empty("csv has no data rows".into()));
        }
        let cardinalities: Vec<usize> = vocab.iter().map(HashMap::len).collect();
        let table = Self::from_columns(names, cardinalities, columns)?;
        for var in table.constant_columns() {
            log::warn!(
                "column {} ({}) has a single state; its parent sets all score zero penalty",
                var,
                table.names[var]
            );
        }
        Ok(table)
    }

    pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, has_header)
    }

    /// CSV with a header row of variable names and state indices as
    /// tokens.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.n_rows * self.n_vars() * 2);
        out.push_str(&self.names.join(","));
        out.push('\n');
        for r in 0..self.n_rows {
            for (var, col) in self.columns.iter().enumerate() {
                if var > 0 {
                    out.push(',');
                }
                out.push_str(&col[r].to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn n_vars(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn cardinality(&self, var: usize) -> usize {
        self.cardinalities[var]
    }

    pub fn column(&self, var: usize) -> &[u32] {
        &self.columns[var]
    }

    pub fn value(&self, row: usize, var: usize) -> u32 {
        self.columns[var][row]
    }

    pub fn row(&self, row: usize) -> Vec<u32> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    /// Variables with a single state.
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.n_vars())
            .filter(|&v| self.cardinalities[v] <= 1)
            .collect()
    }

    fn check_query(&self, target: usize, parents: &[usize]) -> Result<()> {
        let n = self.n_vars();
        if target >= n {
            return Err(Error::VariableOutOfRange(target));
        }
        for (i, &p) in parents.iter().enumerate() {
            if p >= n {
                return Err(Error::VariableOutOfRange(p));
            }
            if p == target {
                return Err(Error::TargetInParents(target));
            }
            if parents[..i].contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "variable {p} repeated in parent set"
                )));
            }
        }
        Ok(())
    }

    /// Product of the parents' cardinalities, or an overflow error.
    pub fn parent_config_space(&self, parents: &[usize]) -> Result<u64> {
        parents.iter().try_fold(1u64, |acc, &p| {
            acc.checked_mul(self.cardinalities[p] as u64)
                .ok_or(Error::ConfigOverflow(p))
        })
    }

    /// Calls `visit(config, histogram)` once per observed parent
    /// configuration, in increasing configuration order. The histogram has
    /// one entry per target state.
    pub(crate) fn visit_configs(
        &self,
        target: usize,
        parents: &[usize],
        mut visit: impl FnMut(u64, &[u32]),
    ) -> Result<()> {
        self.check_query(target, parents)?;
        let card = self.cardinalities[target] as u64;
        let space = self.parent_config_space(parents)?;
        let cells = space.checked_mul(card).ok_or(Error::ConfigOverflow(target))?;

        let mut keys = vec![0u64; self.n_rows];
        for &p in parents {
            let c = self.cardinalities[p] as u64;
            for (k, &v) in keys.iter_mut().zip(&self.columns[p]) {
                *k = *k * c + v as u64;
            }
        }
        for (k, &v) in keys.iter_mut().zip(&self.columns[target]) {
            *k = *k * card + v as u64;
        }

        let card = card as usize;
        if cells <= DENSE_LIMIT.max(4 * self.n_rows as u64) {
            let mut counts = vec![0u32; cells as usize];
            for &k in &keys {
                counts[k as usize] += 1;
            }
            for (cfg, hist) in counts.chunks_exact(card).enumerate() {
                if hist.iter().any(|&c| c > 0) {
                    visit(cfg as u64, hist);
                }
            }
        } else {
            keys.sort_unstable();
            let mut hist = vec![0u32; card];
            let mut i = 0;
            while i < keys.len() {
                let cfg = keys[i] / card as u64;
                hist.iter_mut().for_each(|h| *h = 0);
                while i < keys.len() && keys[i] / card as u64 == cfg {
                    hist[(keys[i] % card as u64) as usize] += 1;
                    i += 1;
                }
                visit(cfg, &hist);
            }
        }
        Ok(())
    }
}

/// Joint counts `N_{x,pi}` of a target and a parent set.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyCounts {
    pub target: usize,
    pub parents: Vec<usize>,
    pub target_cardinality: usize,
    pub parent_config_space: u64,
    /// Observed cells keyed by (parent configuration, target state).
    pub counts: HashMap<(u64, u32), u64>,
}

impl ContingencyCounts {
    pub fn get(&self, config: u64, state: u32) -> u64 {
        self.counts.get(&(config, state)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Target histograms per observed configuration, sorted, as a
    /// labelling-independent summary.
    pub fn histogram_multiset(&self) -> Vec<Vec<u64>> {
        let mut per_cfg: HashMap<u64, Vec<u64>> = HashMap::new();
        for (&(cfg, x), &c) in &self.counts {
            per_cfg
                .entry(cfg)
                .or_insert_with(|| vec![0; self.target_cardinality])[x as usize] = c;
        }
        let mut out: Vec<Vec<u64>> = per_cfg.into_values().collect();
        out.sort();
        out
    }
}

/// Aggregates the rows of `table` by their projection on
/// `(parents, target)`. Unobserved cells are absent.
pub fn count(table: &CategoricalTable, target: usize, parents: &[usize]) -> Result<ContingencyCounts> {
    let mut counts = HashMap::new();
    table.visit_configs(target, parents, |cfg, hist| {
        for (x, &c) in hist.iter().enumerate() {
            if c > 0 {
                counts.insert((cfg, x as u32), c as u64);
            }
        }
    })?;
    Ok(ContingencyCounts {
        target,
        parents: parents.to_vec(),
        target_cardinality: table.cardinality(target),
        parent_config_space: table.parent_config_space(parents)?,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> CategoricalTable {
        CategoricalTable::from_rows(
            vec![],
            vec![2, 2],
            &[vec![0, 0], vec![0, 1], vec![1, 1]],
        )
        .unwrap()
    }

    #[test]
    fn csv_first_appearance_encoding() {
        let t = CategoricalTable::parse_csv("a,x\na,y\nb,x\n", false).unwrap();
        assert_eq!(t.n_vars(), 2);
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.cardinalities(), &[2, 2]);
        assert_eq!(t.row(1), vec![0, 1]);
        assert_eq!(t.row(2), vec![1, 0]);
    }

    #[test]
    fn csv_header_names() {
        let t = CategoricalTable::parse_csv("A,B\n1,2\n3,2\n", true).unwrap();
        assert_eq!(t.names(), &["A".to_string(), "B".to_string()]);
        assert_eq!(t.cardinalities(), &[2, 1]);
    }

    #[test]
    fn csv_ragged_rows_rejected() {
        let err = CategoricalTable::parse_csv("a,b\nc\n", false).unwrap_err();
        assert!(matches!(err, Error::RaggedRow { line: 2, .. }));
    }

    #[test]
    fn csv_empty_rejected() {
        assert!(matches!(
            CategoricalTable::parse_csv("\n\n", false),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn csv_missing_value_rejected() {
        assert!(matches!(
            CategoricalTable::parse_csv("a,b\na,\n", false),
            Err(Error::MissingValue { line: 2, column: 1 })
        ));
    }

    #[test]
    fn csv_constant_column_allowed() {
        let t = CategoricalTable::parse_csv("q\nq\nq\nq\n", false).unwrap();
        assert_eq!(t.n_vars(), 1);
        assert_eq!(t.n_rows(), 4);
        assert_eq!(t.cardinalities(), &[1]);
        assert_eq!(t.constant_columns(), vec![0]);
    }

    #[test]
    fn hand_count() {
        let c = count(&small(), 1, &[0]).unwrap();
        assert_eq!(c.counts.len(), 3);
        assert_eq!(c.get(0, 0), 1);
        assert_eq!(c.get(0, 1), 1);
        assert_eq!(c.get(1, 1), 1);
        assert_eq!(c.get(1, 0), 0);
        assert_eq!(c.parent_config_space, 2);
    }

    #[test]
    fn marginal_count() {
        let c = count(&small(), 1, &[]).unwrap();
        assert_eq!(c.parent_config_space, 1);
        assert_eq!(c.get(0, 0), 1);
        assert_eq!(c.get(0, 1), 2);
        assert_eq!(c.total(), 3);
    }

    #[test]
    fn target_in_parents_rejected() {
        assert!(matches!(
            count(&small(), 1, &[1]),
            Err(Error::TargetInParents(1))
        ));
        assert!(matches!(
            count(&small(), 0, &[5]),
            Err(Error::VariableOutOfRange(5))
        ));
    }

    fn naive_count(t: &CategoricalTable, target: usize, parents: &[usize]) -> HashMap<(u64, u32), u64> {
        let mut out = HashMap::new();
        for r in 0..t.n_rows() {
            let mut cfg = 0u64;
            for &p in parents {
                cfg = cfg * t.cardinality(p) as u64 + t.value(r, p) as u64;
            }
            *out.entry((cfg, t.value(r, target))).or_insert(0) += 1;
        }
        out
    }

    fn arb_table(n: usize) -> impl Strategy<Value = CategoricalTable> {
        (prop::collection::vec(2usize..5, n), 1usize..300, any::<u64>()).prop_map(
            move |(cards, rows, seed)| {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let data: Vec<Vec<u32>> = (0..rows)
                    .map(|_| cards.iter().map(|&c| rng.random_range(0..c as u32)).collect())
                    .collect();
                CategoricalTable::from_rows(vec![], cards, &data).unwrap()
            },
        )
    }

    #[test]
    fn sparse_path_matches_naive() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let cards = vec![60, 60, 60, 50];
        let data: Vec<Vec<u32>> = (0..500)
            .map(|_| cards.iter().map(|&c| rng.random_range(0..c as u32)).collect())
            .collect();
        let t = CategoricalTable::from_rows(vec![], cards, &data).unwrap();
        let c = count(&t, 3, &[0, 1, 2]).unwrap();
        assert_eq!(c.counts, naive_count(&t, 3, &[0, 1, 2]));
    }

    proptest! {
        #[test]
        fn counts_match_naive_counter(t in arb_table(4)) {
            let c = count(&t, 0, &[1, 2, 3]).unwrap();
            prop_assert_eq!(c.total(), t.n_rows() as u64);
            prop_assert_eq!(&c.counts, &naive_count(&t, 0, &[1, 2, 3]));
            // deterministic
            prop_assert_eq!(&c, &count(&t, 0, &[1, 2, 3]).unwrap());
        }

        #[test]
        fn parent_order_does_not_change_histograms(t in arb_table(4)) {
            let a = count(&t, 3, &[0, 1, 2]).unwrap();
            let b = count(&t, 3, &[2, 0, 1]).unwrap();
            prop_assert_eq!(a.histogram_multiset(), b.histogram_multiset());
        }
    }
}
