use super::{GenotypeMatrix, MarkerMap};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnReport {
    pub name: String,
    pub missing_rate: f64,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Issue {
    HighMissingRate { col: usize, rate: f64, cap: f64 },
    Degenerate { col: usize },
    EmptyCategory { col: usize, category: usize },
    MapLength { markers: usize, rows: usize },
    MapName { col: usize, expected: String, found: String },
    PositionOrder { col: usize, chromosome: String, position: f64, previous: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub columns: Vec<ColumnReport>,
    pub issues: Vec<Issue>,
    /// Columns that should not enter estimation.
    pub dropped: Vec<usize>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Report-only consistency check of a matrix and its map.
pub fn validate(g: &GenotypeMatrix, map: &MarkerMap, missing_cap: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    for j in 0..g.p() {
        let counts = g.category_counts(j);
        let rate = g.missing_rate(j);
        let mut drop = false;
        if rate > missing_cap {
            report.issues.push(Issue::HighMissingRate {
                col: j,
                rate,
                cap: missing_cap,
            });
            drop = true;
        }
        if counts.iter().filter(|&&c| c > 0).count() < 2 {
            report.issues.push(Issue::Degenerate { col: j });
            drop = true;
        } else {
            let last = counts.len() - 1;
            for (category, _) in counts[..last].iter().enumerate().filter(|(_, &c)| c == 0) {
                report.issues.push(Issue::EmptyCategory { col: j, category });
            }
        }
        if drop {
            report.dropped.push(j);
        }
        report.columns.push(ColumnReport {
            name: g.names()[j].clone(),
            missing_rate: rate,
            counts,
        });
    }

    if map.len() != g.p() {
        report.issues.push(Issue::MapLength {
            markers: g.p(),
            rows: map.len(),
        });
        return report;
    }
    let mut last: std::collections::HashMap<&str, f64> = Default::default();
    for (j, (m, name)) in map.markers.iter().zip(g.names()).enumerate() {
        if &m.name != name {
            report.issues.push(Issue::MapName {
                col: j,
                expected: name.clone(),
                found: m.name.clone(),
            });
        }
        if let Some(&prev) = last.get(m.chromosome.as_str()) {
            if m.position <= prev {
                report.issues.push(Issue::PositionOrder {
                    col: j,
                    chromosome: m.chromosome.clone(),
                    position: m.position,
                    previous: prev,
                });
            }
        }
        last.insert(&m.chromosome, m.position);
    }
    report
}
