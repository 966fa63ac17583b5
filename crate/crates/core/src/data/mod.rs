//! Genotype matrices, marker maps and the cut-points that tie observed
//! categories to intervals on the latent normal scale.

mod cutpoints;
mod io;
mod validate;

pub use cutpoints::{estimate_cutpoints, CutPointTable};
pub use io::{load_genotypes, load_map, write_genotypes, write_map, Delimiter};
pub use validate::{validate, ColumnReport, Issue, ValidationReport};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ordinal genotype matrix, `n` individuals by `p` markers, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GenotypeMatrix {
    n: usize,
    p: usize,
    values: Vec<Option<u8>>,
    states: Vec<usize>,
    names: Vec<String>,
}

impl GenotypeMatrix {
    /// Builds a matrix from row-major values. The number of states of each
    /// marker is inferred as the largest observed code plus one.
    pub fn new(names: Vec<String>, n: usize, values: Vec<Option<u8>>) -> Result<Self> {
        let p = names.len();
        if values.len() != n * p {
            return Err(Error::Dimension(format!(
                "expected {} cells for {n}x{p}, got {}",
                n * p,
                values.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(p);
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateMarker(name.clone()));
            }
        }
        let mut states = vec![1usize; p];
        for row in values.chunks(p.max(1)) {
            for (k, v) in states.iter_mut().zip(row) {
                if let Some(v) = v {
                    *k = (*k).max(*v as usize + 1);
                }
            }
        }
        Ok(Self {
            n,
            p,
            values,
            states,
            names,
        })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<Option<u8>>]) -> Result<Self> {
        let p = names.len();
        let mut values = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Dimension(format!(
                    "row {i} has {} cells, expected {p}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(names, rows.len(), values)
    }

    /// Overrides the inferred number of states of every marker.
    pub fn with_states(mut self, states: Vec<usize>) -> Result<Self> {
        if states.len() != self.p {
            return Err(Error::Dimension(format!(
                "{} state counts for {} markers",
                states.len(),
                self.p
            )));
        }
        for (j, &k) in states.iter().enumerate() {
            if k < self.states[j] {
                return Err(Error::InvalidArgument(format!(
                    "marker `{}` has code {} but only {k} states were declared",
                    self.names[j],
                    self.states[j] - 1
                )));
            }
        }
        self.states = states;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<u8> {
        self.values[i * self.p + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Option<u8>] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = Option<u8>> + '_ {
        (0..self.n).map(move |i| self.get(i, j))
    }

    pub fn missing_count(&self, j: usize) -> usize {
        self.column(j).filter(Option::is_none).count()
    }

    pub fn missing_rate(&self, j: usize) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.missing_count(j) as f64 / self.n as f64
        }
    }

    /// Observed count of each category of marker `j`.
    pub fn category_counts(&self, j: usize) -> Vec<usize> {
        let mut counts = vec![0usize; self.states[j]];
        for v in self.column(j).flatten() {
            counts[v as usize] += 1;
        }
        counts
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.n * cols.len());
        for i in 0..self.n {
            let row = self.row(i);
            values.extend(cols.iter().map(|&j| row[j]));
        }
        Self {
            n: self.n,
            p: cols.len(),
            values,
            states: cols.iter().map(|&j| self.states[j]).collect(),
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
        }
    }

    /// Row subset (with repetition allowed); state counts are kept.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.p);
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n: rows.len(),
            p: self.p,
            values,
            states: self.states.clone(),
            names: self.names.clone(),
        }
    }

    /// Recodes every marker so that its observed categories are `0..k'`,
    /// dropping categories with no observations. Returns the markers that
    /// changed.
    pub fn collapse_empty_categories(&mut self) -> Vec<usize> {
        let mut changed = Vec::new();
        for j in 0..self.p {
            let counts = self.category_counts(j);
            let mut recode = vec![0u8; counts.len()];
            let mut next = 0u8;
            for (c, &cnt) in counts.iter().enumerate() {
                recode[c] = next;
                if cnt > 0 {
                    next += 1;
                }
            }
            let kept = (next as usize).max(1);
            if kept == counts.len() {
                continue;
            }
            log::warn!(
                "marker `{}`: {} empty categories collapsed ({} -> {} states)",
                self.names[j],
                counts.len() - kept,
                counts.len(),
                kept
            );
            for i in 0..self.n {
                let cell = &mut self.values[i * self.p + j];
                if let Some(v) = cell {
                    *v = recode[*v as usize];
                }
            }
            self.states[j] = kept;
            changed.push(j);
        }
        changed
    }
}

/// One row of a genetic map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerInfo {
    pub name: String,
    pub chromosome: String,
    pub position: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkerMap {
    pub markers: Vec<MarkerInfo>,
}

impl MarkerMap {
    /// Places all markers on one chromosome in column order.
    pub fn single_chromosome(names: &[String]) -> Self {
        Self {
            markers: names
                .iter()
                .enumerate()
                .map(|(i, name)| MarkerInfo {
                    name: name.clone(),
                    chromosome: "1".to_string(),
                    position: (i + 1) as f64,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    pub fn select(&self, cols: &[usize]) -> Self {
        Self {
            markers: cols.iter().map(|&j| self.markers[j].clone()).collect(),
        }
    }

    /// Distinct chromosome labels in order of first appearance.
    pub fn chromosomes(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for m in &self.markers {
            if !out.contains(&m.chromosome.as_str()) {
                out.push(&m.chromosome);
            }
        }
        out
    }

    /// Chromosome index (order of first appearance) of every marker.
    pub fn chromosome_index(&self) -> Vec<usize> {
        let chroms = self.chromosomes();
        self.markers
            .iter()
            .map(|m| chroms.iter().position(|c| *c == m.chromosome).unwrap())
            .collect()
    }
}

/// Column filtering applied before fitting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataConfig {
    /// Columns whose missing fraction exceeds this are dropped.
    pub missing_cap: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { missing_cap: 0.5 }
    }
}

/// A matrix ready for estimation together with the original indices of the
/// columns that survived filtering.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub geno: GenotypeMatrix,
    pub map: MarkerMap,
    pub kept: Vec<usize>,
    pub report: ValidationReport,
}

/// Validates, drops flagged columns and collapses empty categories.
pub fn prepare(g: &GenotypeMatrix, map: &MarkerMap, cfg: &DataConfig) -> Result<Prepared> {
    if map.len() != g.p() {
        return Err(Error::MapMismatch(format!(
            "{} map rows for {} markers",
            map.len(),
            g.p()
        )));
    }
    let report = validate(g, map, cfg.missing_cap);
    for &j in &report.dropped {
        log::warn!("dropping marker `{}`", g.names()[j]);
    }
    let kept: Vec<usize> = (0..g.p()).filter(|j| !report.dropped.contains(j)).collect();
    let mut geno = g.select_columns(&kept);
    geno.collapse_empty_categories();
    // a column can only become degenerate through collapsing if it was
    // already flagged, so every kept column has at least two states here
    Ok(Prepared {
        geno,
        map: map.select(&kept),
        kept,
        report,
    })
}
