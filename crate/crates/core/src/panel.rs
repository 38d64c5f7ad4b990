//! Raw observed series and the partition of predictors into blocks.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `T x k` matrix of observed series, oldest observation first.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesPanel {
    values: DMatrix<f64>,
    labels: Vec<String>,
    /// Free-form tag, metadata only.
    pub frequency: Option<String>,
}

impl TimeSeriesPanel {
    /// Panels built in code may have zero columns (a pure autoregression has
    /// no predictors); ingested panels always have at least one.
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::Dimension("panel has no rows".into()));
        }
        if labels.len() != values.ncols() {
            return Err(Error::Dimension(format!(
                "{} labels for {} columns",
                labels.len(),
                values.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::Argument(format!("duplicate label {label:?}")));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::Argument(format!(
                "non-finite value at row {row}, column {:?}",
                labels[col]
            )));
        }
        Ok(Self {
            values,
            labels,
            frequency: None,
        })
    }

    /// Single-column panel.
    pub fn from_series(label: &str, series: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(series.len(), 1, series), vec![label.to_string()])
    }

    /// Panel from column vectors with generated labels `x0, x1, ...`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let t = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != t) {
            return Err(Error::Dimension("columns differ in length".into()));
        }
        let values = DMatrix::from_fn(t, columns.len(), |i, j| columns[j][i]);
        Self::new(values, (0..columns.len()).map(|j| format!("x{j}")).collect())
    }

    /// `T` rows, no columns.
    pub fn empty(t: usize) -> Self {
        Self {
            values: DMatrix::zeros(t, 0),
            labels: Vec::new(),
            frequency: None,
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.values.column(col).iter().copied().collect()
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            values: self.values.select_columns(cols),
            labels: cols.iter().map(|&c| self.labels[c].clone()).collect(),
            frequency: self.frequency.clone(),
        }
    }

    /// Rows `start..end`.
    pub fn rows(&self, start: usize, end: usize) -> Self {
        Self {
            values: self.values.rows(start, end - start).into_owned(),
            labels: self.labels.clone(),
            frequency: self.frequency.clone(),
        }
    }

    /// Replace the values, keeping labels. Dimensions must match.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        if values.shape() != self.values.shape() {
            return Err(Error::Dimension("shape mismatch".into()));
        }
        let mut out = Self::new(values, self.labels.clone())?;
        out.frequency = self.frequency.clone();
        Ok(out)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(file, path)
    }

    /// Header row holds labels; one row per time point, oldest first.
    /// `origin` is only used in error messages.
    pub fn read_csv<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let labels: Vec<String> = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if labels.is_empty() || labels.iter().all(String::is_empty) {
            return Err(parse_err(1, "missing header row".into()));
        }
        let mut data = Vec::new();
        let mut t = 0usize;
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| parse_err(line, e.to_string()))?;
            if record.len() != labels.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} fields, found {}", labels.len(), record.len()),
                ));
            }
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    parse_err(line, format!("column {:?}: cannot parse {field:?} as a number", labels[j]))
                })?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("column {:?}: missing or non-finite value", labels[j])));
                }
                data.push(v);
            }
            t += 1;
        }
        if t < 2 {
            return Err(parse_err(t + 1, "a panel needs at least two time points".into()));
        }
        let k = labels.len();
        let values = DMatrix::from_row_slice(t, k, &data);
        Self::new(values, labels).map_err(|e| parse_err(1, e.to_string()))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Numeric(e.to_string());
        wtr.write_record(&self.labels).map_err(io)?;
        for i in 0..self.nrows() {
            wtr.write_record(self.values.row(i).iter().map(|v| v.to_string())).map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::Numeric(e.to_string()))
    }
}

/// `order`-th difference of every column; the panel loses `order` rows.
pub fn difference(panel: &TimeSeriesPanel, order: usize) -> Result<TimeSeriesPanel> {
    if order == 0 {
        return Err(Error::Argument("difference order must be at least 1".into()));
    }
    if order >= panel.nrows() {
        return Err(Error::Dimension(format!(
            "difference order {order} needs more than {order} rows, panel has {}",
            panel.nrows()
        )));
    }
    let mut values = panel.values.clone();
    for _ in 0..order {
        let n = values.nrows();
        values = DMatrix::from_fn(n - 1, values.ncols(), |i, j| values[(i + 1, j)] - values[(i, j)]);
    }
    panel.with_values_unchecked(values)
}

/// Subtract column means. Returns the centered panel and the means.
pub fn center(panel: &TimeSeriesPanel) -> (TimeSeriesPanel, DVector<f64>) {
    let means = DVector::from_iterator(panel.ncols(), panel.values.column_iter().map(|c| c.mean()));
    let mut values = panel.values.clone();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    let centered = TimeSeriesPanel {
        values,
        labels: panel.labels.clone(),
        frequency: panel.frequency.clone(),
    };
    (centered, means)
}

impl TimeSeriesPanel {
    fn with_values_unchecked(&self, values: DMatrix<f64>) -> Result<Self> {
        let mut out = Self::new(values, self.labels.clone())?;
        out.frequency = self.frequency.clone();
        Ok(out)
    }
}

/// Index of a block within a [`BlockStructure`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId(pub usize);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub columns: Vec<usize>,
}

/// Partition of the predictor columns `0..k` into named blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStructure {
    blocks: Vec<Block>,
    n_columns: usize,
}

impl BlockStructure {
    pub fn new(blocks: Vec<Block>, n_columns: usize) -> Result<Self> {
        let mut owner = vec![None::<usize>; n_columns];
        let mut names = HashSet::new();
        for (b, block) in blocks.iter().enumerate() {
            if !names.insert(block.name.as_str()) {
                return Err(Error::Structure(format!("duplicate block name {:?}", block.name)));
            }
            if block.columns.is_empty() {
                return Err(Error::Structure(format!("block {:?} is empty", block.name)));
            }
            for &c in &block.columns {
                if c >= n_columns {
                    return Err(Error::Structure(format!(
                        "block {:?}: column index {c} out of range 0..{n_columns}",
                        block.name
                    )));
                }
                if let Some(prev) = owner[c] {
                    return Err(Error::Structure(format!(
                        "column {c} belongs to blocks {:?} and {:?}",
                        blocks[prev].name, block.name
                    )));
                }
                owner[c] = Some(b);
            }
        }
        if let Some(c) = owner.iter().position(Option::is_none) {
            return Err(Error::Structure(format!("column {c} is not assigned to any block")));
        }
        Ok(Self { blocks, n_columns })
    }

    /// Consecutive blocks of the given sizes, named `block1, block2, ...`.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let blocks = sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let b = Block {
                    name: format!("block{}", i + 1),
                    columns: (start..start + s).collect(),
                };
                start += s;
                b
            })
            .collect();
        Self::new(blocks, start)
    }

    /// Each column its own block, named after its label.
    pub fn singletons(labels: &[String]) -> Result<Self> {
        let blocks = labels
            .iter()
            .enumerate()
            .map(|(i, l)| Block {
                name: l.clone(),
                columns: vec![i],
            })
            .collect();
        Self::new(blocks, labels.len())
    }

    /// Parse a block-map file: one `name: label1,label2,...` line per block.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse_block_map(text: &str, labels: &[String], origin: &Path) -> Result<Self> {
        let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut blocks = Vec::new();
        let mut seen: HashMap<usize, usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (name, members) = trimmed
                .split_once(':')
                .ok_or_else(|| parse_err(line, "expected `block_name: label1,label2,...`".into()))?;
            let name = name.trim();
            if name.is_empty() {
                return Err(parse_err(line, "empty block name".into()));
            }
            let mut columns = Vec::new();
            for label in members.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let &c = index
                    .get(label)
                    .ok_or_else(|| parse_err(line, format!("unknown series label {label:?}")))?;
                if let Some(prev) = seen.insert(c, line) {
                    return Err(parse_err(line, format!("label {label:?} already assigned on line {prev}")));
                }
                columns.push(c);
            }
            if columns.is_empty() {
                return Err(parse_err(line, format!("block {name:?} lists no series")));
            }
            blocks.push(Block {
                name: name.to_string(),
                columns,
            });
        }
        Self::new(blocks, labels.len()).map_err(|e| parse_err(0, e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn n_columns(&self) -> usize {
        self.n_columns
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn ids(&self) -> impl Iterator<Item = BlockId> {
        (0..self.blocks.len()).map(BlockId)
    }

    pub fn block(&self, id: BlockId) -> Result<&Block> {
        self.blocks.get(id.0).ok_or_else(|| Error::UnknownBlock(id.to_string()))
    }

    pub fn name(&self, id: BlockId) -> &str {
        &self.blocks[id.0].name
    }

    pub fn id_by_name(&self, name: &str) -> Result<BlockId> {
        self.blocks
            .iter()
            .position(|b| b.name == name)
            .map(BlockId)
            .ok_or_else(|| Error::UnknownBlock(name.to_string()))
    }

    /// Block owning predictor column `col`.
    pub fn block_of(&self, col: usize) -> Option<BlockId> {
        self.blocks.iter().position(|b| b.columns.contains(&col)).map(BlockId)
    }

    /// Keep only the listed blocks, remapping their columns onto
    /// `0..retained_columns.len()`. Returns the new structure and the retained
    /// original column indices in new-column order.
    pub fn subset(&self, keep: &[BlockId]) -> Result<(BlockStructure, Vec<usize>)> {
        let mut kept_cols = Vec::new();
        let mut blocks = Vec::new();
        for &id in keep {
            let b = self.block(id)?;
            let start = kept_cols.len();
            kept_cols.extend_from_slice(&b.columns);
            blocks.push(Block {
                name: b.name.clone(),
                columns: (start..kept_cols.len()).collect(),
            });
        }
        Ok((BlockStructure::new(blocks, kept_cols.len())?, kept_cols))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: &[f64]) -> TimeSeriesPanel {
        TimeSeriesPanel::from_series("y", v).unwrap()
    }

    #[test]
    fn first_difference() {
        let d = difference(&single(&[1.0, 3.0, 6.0, 10.0]), 1).unwrap();
        assert_eq!(d.column(0), vec![2.0, 3.0, 4.0]);
        let d = difference(&single(&[5.0, 5.0, 5.0]), 1).unwrap();
        assert_eq!(d.column(0), vec![0.0, 0.0]);
        assert_eq!(d.labels(), &["y".to_string()]);
    }

    #[test]
    fn second_difference() {
        let d = difference(&single(&[1.0, 3.0, 6.0, 10.0]), 2).unwrap();
        assert_eq!(d.column(0), vec![1.0, 1.0]);
    }

    #[test]
    fn difference_order_too_large() {
        assert!(matches!(difference(&single(&[1.0, 2.0, 3.0]), 3), Err(Error::Dimension(_))));
        assert!(difference(&single(&[1.0, 2.0, 3.0]), 0).is_err());
    }

    #[test]
    fn centering() {
        let (c, m) = center(&single(&[1.0, 2.0, 3.0]));
        assert_eq!(c.column(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(m[0], 2.0);

        let (c2, m2) = center(&c);
        assert_eq!(c2, c);
        assert_eq!(m2[0], 0.0);

        let p = TimeSeriesPanel::from_columns(&[vec![1.0, 3.0], vec![10.0, 30.0]]).unwrap();
        let (c, m) = center(&p);
        assert_eq!(c.column(0), vec![-1.0, 1.0]);
        assert_eq!(c.column(1), vec![-10.0, 10.0]);
        assert_eq!((m[0], m[1]), (2.0, 20.0));
    }

    #[test]
    fn panel_rejects_nan_and_duplicate_labels() {
        let v = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(TimeSeriesPanel::new(v, vec!["a".into()]).is_err());
        let v = DMatrix::zeros(2, 2);
        assert!(TimeSeriesPanel::new(v, vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn csv_ingestion() {
        let text = "a,b\n1,2\n3.5,4\n";
        let p = TimeSeriesPanel::read_csv(text.as_bytes(), Path::new("x.csv")).unwrap();
        assert_eq!(p.labels(), &["a".to_string(), "b".to_string()]);
        assert_eq!(p.column(0), vec![1.0, 3.5]);

        let err = TimeSeriesPanel::read_csv("a,b\n1,2\n3,\n".as_bytes(), Path::new("x.csv")).unwrap_err();
        assert!(err.to_string().contains("x.csv:3"), "{err}");
        let err = TimeSeriesPanel::read_csv("a,b\n1,2\n3,NaN\n".as_bytes(), Path::new("x.csv")).unwrap_err();
        assert!(err.to_string().contains("x.csv:3"), "{err}");
        let err = TimeSeriesPanel::read_csv("a,b\n1,2\n3\n".as_bytes(), Path::new("x.csv")).unwrap_err();
        assert!(err.to_string().contains("x.csv:3"), "{err}");
    }

    #[test]
    fn csv_roundtrip() {
        let p = TimeSeriesPanel::from_columns(&[vec![0.1, -2.5, 3.0], vec![1e-9, 7.0, 8.25]]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = TimeSeriesPanel::read_csv(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn block_structure_validation() {
        let b = |cols: Vec<Vec<usize>>| {
            BlockStructure::new(
                cols.into_iter()
                    .enumerate()
                    .map(|(i, c)| Block {
                        name: format!("b{i}"),
                        columns: c,
                    })
                    .collect(),
                3,
            )
        };
        assert!(b(vec![vec![0], vec![1, 2]]).is_ok());
        assert!(matches!(b(vec![vec![0], vec![1, 3]]), Err(Error::Structure(_))));
        assert!(matches!(b(vec![vec![0, 1], vec![1, 2]]), Err(Error::Structure(_))));
        assert!(matches!(b(vec![vec![0], vec![1]]), Err(Error::Structure(_))));
    }

    #[test]
    fn block_map_parsing() {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let bs = BlockStructure::parse_block_map("# comment\nA: a\n\nB: c, b\n", &labels, Path::new("m")).unwrap();
        assert_eq!(bs.len(), 2);
        assert_eq!(bs.blocks()[1].columns, vec![2, 1]);
        assert_eq!(bs.id_by_name("B").unwrap(), BlockId(1));

        let err = BlockStructure::parse_block_map("A: a\nB: z\n", &labels, Path::new("m")).unwrap_err();
        assert!(err.to_string().starts_with("m:2:"), "{err}");
        let err = BlockStructure::parse_block_map("A a\n", &labels, Path::new("m")).unwrap_err();
        assert!(err.to_string().starts_with("m:1:"), "{err}");
        let err = BlockStructure::parse_block_map("A: a,b\nB: b,c\n", &labels, Path::new("m")).unwrap_err();
        assert!(err.to_string().starts_with("m:2:"), "{err}");
    }

    #[test]
    fn subset_remaps_columns() {
        let bs = BlockStructure::contiguous(&[2, 1, 3]).unwrap();
        let (sub, cols) = bs.subset(&[BlockId(2), BlockId(0)]).unwrap();
        assert_eq!(cols, vec![3, 4, 5, 0, 1]);
        assert_eq!(sub.blocks()[0].columns, vec![0, 1, 2]);
        assert_eq!(sub.blocks()[1].columns, vec![3, 4]);
        assert_eq!(sub.name(BlockId(1)), "block1");
    }
}
