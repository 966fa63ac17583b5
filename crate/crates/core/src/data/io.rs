use super::{GenotypeMatrix, MarkerInfo, MarkerMap};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delimiter {
    Csv,
    Tsv,
}

impl Delimiter {
    pub fn byte(self) -> char {
        match self {
            Delimiter::Csv => ',',
            Delimiter::Tsv => '\t',
        }
    }

    /// Picks the delimiter from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") || ext.eq_ignore_ascii_case("txt") => {
                Delimiter::Tsv
            }
            _ => Delimiter::Csv,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell == "." || cell == "-"
}

/// Reads a genotype file (header of marker names, one row per individual)
/// and an optional map file. Without a map every marker is placed on a
/// single chromosome in column order.
pub fn load_genotypes(
    path: &Path,
    delim: Delimiter,
    map: Option<&Path>,
    states: Option<usize>,
) -> Result<(GenotypeMatrix, MarkerMap)> {
    let text = read(path)?;
    let sep = delim.byte();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        row: 1,
        col: 1,
        message: "empty file".into(),
    })?;
    let names: Vec<String> = header
        .split(sep)
        .map(|s| s.trim().trim_matches('"').to_string())
        .collect();
    let p = names.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (lineno, line) in lines {
        let cells: Vec<&str> = line.split(sep).map(str::trim).collect();
        if cells.len() != p {
            return Err(Error::Parse {
                row: lineno + 1,
                col: cells.len().min(p) + 1,
                message: format!("expected {p} cells, found {}", cells.len()),
            });
        }
        for (j, cell) in cells.iter().enumerate() {
            let cell = cell.trim_matches('"');
            if is_missing(cell) {
                values.push(None);
                continue;
            }
            let v: u8 = cell.parse().map_err(|_| Error::Parse {
                row: lineno + 1,
                col: j + 1,
                message: format!("`{cell}` is not a genotype code"),
            })?;
            values.push(Some(v));
        }
        n += 1;
    }
    let mut g = GenotypeMatrix::new(names, n, values)?;
    if let Some(k) = states {
        g = g.with_states(vec![k; p])?;
    }
    let map = match map {
        Some(m) => {
            let map = load_map(m)?;
            check_map_matches(&g, &map)?;
            map
        }
        None => MarkerMap::single_chromosome(g.names()),
    };
    Ok((g, map))
}

fn check_map_matches(g: &GenotypeMatrix, map: &MarkerMap) -> Result<()> {
    if map.len() != g.p() {
        return Err(Error::MapMismatch(format!(
            "{} map rows for {} markers",
            map.len(),
            g.p()
        )));
    }
    for (j, (m, name)) in map.markers.iter().zip(g.names()).enumerate() {
        if &m.name != name {
            return Err(Error::MapMismatch(format!(
                "column {} is `{name}` but map row {} is `{}`",
                j + 1,
                j + 1,
                m.name
            )));
        }
    }
    Ok(())
}

/// Reads a tab-separated map with columns marker, chromosome, position.
/// A header row is recognised by a non-numeric position field.
pub fn load_map(path: &Path) -> Result<MarkerMap> {
    let text = read(path)?;
    let mut markers = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cells.len() < 3 {
            return Err(Error::Parse {
                row: lineno + 1,
                col: cells.len() + 1,
                message: "map rows need marker, chromosome and position".into(),
            });
        }
        let position = match cells[2].parse::<f64>() {
            Ok(v) => v,
            Err(_) if lineno == 0 => continue,
            Err(_) => {
                return Err(Error::Parse {
                    row: lineno + 1,
                    col: 3,
                    message: format!("`{}` is not a position", cells[2]),
                })
            }
        };
        markers.push(MarkerInfo {
            name: cells[0].to_string(),
            chromosome: cells[1].to_string(),
            position,
        });
    }
    Ok(MarkerMap { markers })
}

pub fn write_genotypes(path: &Path, g: &GenotypeMatrix, delim: Delimiter) -> Result<()> {
    let sep = delim.byte();
    let mut out = String::new();
    out.push_str(&g.names().join(&sep.to_string()));
    out.push('\n');
    for i in 0..g.n() {
        for (j, v) in g.row(i).iter().enumerate() {
            if j > 0 {
                out.push(sep);
            }
            match v {
                Some(v) => write!(out, "{v}").unwrap(),
                None => out.push_str("NA"),
            }
        }
        out.push('\n');
    }
    write(path, &out)
}

pub fn write_map(path: &Path, map: &MarkerMap) -> Result<()> {
    let mut out = String::from("marker\tchromosome\tposition\n");
    for m in &map.markers {
        writeln!(out, "{}\t{}\t{}", m.name, m.chromosome, m.position).unwrap();
    }
    write(path, &out)
}
