//! Aggregates result CSVs into the summary tables: DEP accuracy (2),
//! dense accuracy (3), pruning sweep (4) and monotone RMSE (5).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};
use crate::experiments::{DenseRow, DepRow, MonotoneRow, PruneCsvRow};
use crate::output::read_csv;

/// A grid of means with an optional standard deviation per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub number: u8,
    pub title: String,
    pub corner: String,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    /// Manifest ids of the runs that fed the table.
    pub manifests: Vec<String>,
}

/// A row label with one cell per column.
pub type Row = (String, Vec<Option<Stat>>);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std, n })
    }
}

fn push_unique<T: PartialEq + Clone>(v: &mut Vec<T>, x: &T) {
    if !v.contains(x) {
        v.push(x.clone());
    }
}

/// Pivots `items` into `row × column` cells, keeping first-seen order.
fn pivot<T>(
    items: &[T],
    row: impl Fn(&T) -> String,
    col: impl Fn(&T) -> String,
    value: impl Fn(&T) -> f64,
) -> (Vec<String>, Vec<Row>) {
    let (mut rows, mut cols) = (Vec::new(), Vec::new());
    for it in items {
        push_unique(&mut rows, &row(it));
        push_unique(&mut cols, &col(it));
    }
    let body = rows
        .iter()
        .map(|r| {
            let cells = cols
                .iter()
                .map(|c| {
                    let vals: Vec<f64> = items
                        .iter()
                        .filter(|it| &row(it) == r && &col(it) == c)
                        .map(&value)
                        .collect();
                    Stat::of(&vals)
                })
                .collect();
            (r.clone(), cells)
        })
        .collect();
    (cols, body)
}

fn manifests<'a>(ids: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut out = Vec::new();
    for id in ids {
        push_unique(&mut out, id);
    }
    out
}

pub fn dep_table(rows: &[DepRow]) -> Table {
    let (columns, body) = pivot(
        rows,
        |r| format!("{} n={}", r.reduction, r.members),
        |r| r.dataset.clone(),
        |r| 100.0 * r.accuracy,
    );
    Table {
        number: 2,
        title: "Bagged reduced DEP, test accuracy (%)".into(),
        corner: "reduction".into(),
        columns,
        rows: body,
        manifests: manifests(rows.iter().map(|r| &r.manifest)),
    }
}

pub fn dense_table(rows: &[DenseRow]) -> Table {
    let (columns, body) = pivot(
        rows,
        |r| r.model.clone(),
        |r| r.optimizer.clone(),
        |r| 100.0 * r.test_accuracy,
    );
    Table {
        number: 3,
        title: "Dense networks, test accuracy (%)".into(),
        corner: "model".into(),
        columns,
        rows: body,
        manifests: manifests(rows.iter().map(|r| &r.manifest)),
    }
}

pub fn prune_table(rows: &[PruneCsvRow]) -> Table {
    let (columns, body) = pivot(
        rows,
        |r| format!("{}%", r.p),
        |r| {
            if r.optimizer.is_empty() {
                r.model.clone()
            } else {
                format!("{}/{}", r.model, r.optimizer)
            }
        },
        |r| 100.0 * r.accuracy,
    );
    Table {
        number: 4,
        title: "Pruned networks, test accuracy (%)".into(),
        corner: "p".into(),
        columns,
        rows: body,
        manifests: manifests(rows.iter().map(|r| &r.manifest)),
    }
}

pub fn monotone_table(rows: &[MonotoneRow]) -> Table {
    let (columns, body) = pivot(rows, |r| r.method.clone(), |r| format!("{}", r.sigma), |r| r.rmse);
    Table {
        number: 5,
        title: "Monotone regression, RMSE".into(),
        corner: "method \\ sigma".into(),
        columns,
        rows: body,
        manifests: manifests(rows.iter().map(|r| &r.manifest)),
    }
}

impl Table {
    /// Fixed-width text; accuracy tables show `mean ± std`.
    pub fn render(&self) -> String {
        let precise = self.number == 5;
        let cell = |s: &Option<Stat>| match s {
            None => "-".to_owned(),
            Some(s) if precise => format!("{:.5}", s.mean),
            Some(s) => format!("{:.2} ± {:.2}", s.mean, s.std),
        };
        let mut grid: Vec<Vec<String>> = vec![std::iter::once(self.corner.clone())
            .chain(self.columns.iter().cloned())
            .collect()];
        for (label, cells) in &self.rows {
            grid.push(std::iter::once(label.clone()).chain(cells.iter().map(cell)).collect());
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut s = format!("Table {}: {}\n", self.number, self.title);
        for (i, r) in grid.iter().enumerate() {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, &w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            let _ = writeln!(s, "{}", line.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(
                    s,
                    "{}",
                    "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))
                );
            }
        }
        s
    }

    /// Long format: one line per cell with mean, std and count.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["manifest", self.corner.as_str(), "column", "mean", "std", "n"])?;
        let ids = self.manifests.join(";");
        for (label, cells) in &self.rows {
            for (col, s) in self.columns.iter().zip(cells) {
                if let Some(s) = s {
                    w.write_record([
                        ids.as_str(),
                        label,
                        col,
                        &s.mean.to_string(),
                        &s.std.to_string(),
                        &s.n.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn gather<T: for<'de> serde::Deserialize<'de>>(dirs: &[PathBuf], name: &str) -> Result<Vec<T>> {
    let mut rows = Vec::new();
    for d in dirs {
        let p = d.join(name);
        if p.is_file() {
            rows.extend(read_csv::<T>(&p)?);
        }
    }
    Ok(rows)
}

/// Builds every table for which a result CSV exists under `dirs`.
pub fn build(dirs: &[PathBuf]) -> Result<Vec<Table>> {
    let mut tables = Vec::new();
    let dep: Vec<DepRow> = gather(dirs, "dep.csv")?;
    if !dep.is_empty() {
        tables.push(dep_table(&dep));
    }
    let dense: Vec<DenseRow> = gather(dirs, "dense.csv")?;
    if !dense.is_empty() {
        tables.push(dense_table(&dense));
    }
    let prune: Vec<PruneCsvRow> = gather(dirs, "prune.csv")?;
    if !prune.is_empty() {
        tables.push(prune_table(&prune));
    }
    let mono: Vec<MonotoneRow> = gather(dirs, "monotone.csv")?;
    if !mono.is_empty() {
        tables.push(monotone_table(&mono));
    }
    if tables.is_empty() {
        let list: Vec<String> = dirs.iter().map(|d| d.display().to_string()).collect();
        return Err(CliError::MissingData(format!("no result CSVs in {}", list.join(", "))));
    }
    Ok(tables)
}

/// Prints the tables and writes `table{N}.csv` into `out`.
pub fn report(dirs: &[PathBuf], out: &Path) -> Result<Vec<Table>> {
    let tables = build(dirs)?;
    std::fs::create_dir_all(out)?;
    for t in &tables {
        println!("{}", t.render());
        t.write_csv(&out.join(format!("table{}.csv", t.number)))?;
    }
    Ok(tables)
}
