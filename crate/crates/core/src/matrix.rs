//! Dense row-major feature table with labels and optional cluster ids.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column affine map recorded by unit-interval scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub min: f64,
    pub max: f64,
}

impl ColumnScale {
    pub fn inverse(&self, scaled: f64) -> f64 {
        if self.max > self.min {
            self.min + scaled * (self.max - self.min)
        } else {
            self.min
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    columns: Vec<String>,
    labels: Vec<u8>,
    clusters: Option<Vec<usize>>,
    scaling: Option<Vec<ColumnScale>>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<String>, values: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        let n_cols = columns.len();
        if n_cols == 0 {
            return Err(Error::Dimension("matrix needs at least one column".into()));
        }
        if !values.len().is_multiple_of(n_cols) {
            return Err(Error::Dimension(format!(
                "{} values do not fill rows of width {n_cols}",
                values.len()
            )));
        }
        let n_rows = values.len() / n_cols;
        if labels.len() != n_rows {
            return Err(Error::Dimension(format!("{} labels for {n_rows} rows", labels.len())));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidParameter(format!("label {bad} is not binary")));
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
            columns,
            labels,
            clusters: None,
            scaling: None,
        })
    }

    pub fn from_rows(columns: Vec<String>, rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        let width = columns.len();
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::Dimension(format!(
                "row of width {} in table of width {width}",
                r.len()
            )));
        }
        Self::new(columns, rows.concat(), labels)
    }

    /// Builds a matrix with generated column names `f0..f{d-1}`.
    pub fn from_unnamed_rows(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let columns = (0..width).map(|j| format!("f{j}")).collect();
        Self::from_rows(columns, rows, labels)
    }

    pub fn with_clusters(mut self, clusters: Vec<usize>) -> Result<Self> {
        if clusters.len() != self.n_rows {
            return Err(Error::Dimension(format!(
                "{} cluster ids for {} rows",
                clusters.len(),
                self.n_rows
            )));
        }
        self.clusters = Some(clusters);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.n_rows {
            return Err(Error::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                self.n_rows
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub(crate) fn with_scaling(mut self, scaling: Vec<ColumnScale>) -> Self {
        self.scaling = Some(scaling);
        self
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn clusters(&self) -> Option<&[usize]> {
        self.clusters.as_deref()
    }

    pub fn require_clusters(&self) -> Result<&[usize]> {
        self.clusters().ok_or(Error::MissingClusters)
    }

    pub fn scaling(&self) -> Option<&[ColumnScale]> {
        self.scaling.as_deref()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// Number of clusters implied by the assignment (max id + 1).
    pub fn n_clusters(&self) -> usize {
        self.clusters
            .as_ref()
            .and_then(|q| q.iter().max())
            .map_or(0, |&m| m + 1)
    }

    /// `[count of label 0, count of label 1]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0usize; 2];
        for &y in &self.labels {
            counts[usize::from(y)] += 1;
        }
        counts
    }

    /// New matrix made of the given rows, in the given order (duplicates allowed).
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n_rows: idx.len(),
            n_cols: self.n_cols,
            values,
            columns: self.columns.clone(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            clusters: self.clusters.as_ref().map(|q| idx.iter().map(|&i| q[i]).collect()),
            scaling: self.scaling.clone(),
        }
    }

    /// New matrix keeping only the given columns.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&j| j >= self.n_cols) {
            return Err(Error::Dimension(format!("column {bad} out of range")));
        }
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        for r in self.rows() {
            values.extend(cols.iter().map(|&j| r[j]));
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: cols.len(),
            values,
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            labels: self.labels.clone(),
            clusters: self.clusters.clone(),
            scaling: self.scaling.as_ref().map(|s| cols.iter().map(|&j| s[j]).collect()),
        })
    }

    /// Row indices grouped by cluster id; index `q` lists the rows with `Q = q`.
    pub fn cluster_members(&self) -> Result<Vec<Vec<usize>>> {
        let q = self.require_clusters()?;
        let mut groups = vec![Vec::new(); self.n_clusters()];
        for (i, &c) in q.iter().enumerate() {
            groups[c].push(i);
        }
        Ok(groups)
    }

    /// Writes `columns..., label[, cluster]` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.columns.iter().map(String::as_str).collect();
        header.push("label");
        if self.clusters.is_some() {
            header.push("cluster");
        }
        out.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n_rows {
            record.clear();
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            record.push(self.labels[i].to_string());
            if let Some(q) = &self.clusters {
                record.push(q[i].to_string());
            }
            out.write_record(&record)?;
        }
        out.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// Reads a table written by [`FeatureMatrix::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let header = input.headers()?.clone();
        let label_at = header
            .iter()
            .position(|h| h == "label")
            .ok_or_else(|| Error::Dimension("missing `label` column".into()))?;
        let cluster_at = header.iter().position(|h| h == "cluster");
        let columns: Vec<String> = header.iter().take(label_at).map(String::from).collect();
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut clusters = Vec::new();
        for record in input.records() {
            let record = record?;
            for field in record.iter().take(label_at) {
                values.push(parse_num(field)?);
            }
            labels.push(parse_num::<u8>(&record[label_at])?);
            if let Some(c) = cluster_at {
                clusters.push(parse_num::<usize>(&record[c])?);
            }
        }
        let m = Self::new(columns, values, labels)?;
        if cluster_at.is_some() {
            m.with_clusters(clusters)
        } else {
            Ok(m)
        }
    }
}

fn parse_num<T: std::str::FromStr>(field: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("cannot parse `{field}` as a number")))
}
