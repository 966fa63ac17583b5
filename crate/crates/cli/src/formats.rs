//! Text formats written and read by the command-line tool.

use epinet::data::MarkerMap;
use epinet::em::partial_correlations;
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::fmt::Write as _;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub fn chromosome_color(index: usize) -> &'static str {
    PALETTE[index % PALETTE.len()]
}

/// Shortest round-trip form, switching to an exponent for very small or
/// large magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), num)
}

/// Upper-triangle triplets of the nonzero entries of `theta`, diagonal
/// included so the marker set survives a round trip.
pub fn edge_list(names: &[String], theta: &DMatrix<f64>) -> String {
    let pc = partial_correlations(theta);
    let mut out = String::from("marker_i\tmarker_j\ttheta_ij\tpartial_correlation\n");
    for i in 0..theta.nrows() {
        for j in i..theta.ncols() {
            if theta[(i, j)] != 0.0 {
                writeln!(out, "{}\t{}\t{:?}\t{:?}", names[i], names[j], theta[(i, j)], pc[(i, j)]).unwrap();
            }
        }
    }
    out
}

pub fn dense(names: &[String], m: &DMatrix<f64>) -> String {
    let mut out = String::from("marker");
    for n in names {
        out.push('\t');
        out.push_str(n);
    }
    out.push('\n');
    for i in 0..m.nrows() {
        out.push_str(&names[i]);
        for j in 0..m.ncols() {
            write!(out, "\t{:?}", m[(i, j)]).unwrap();
        }
        out.push('\n');
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn graphml(map: &MarkerMap, theta: &DMatrix<f64>) -> String {
    let pc = partial_correlations(theta);
    let chrom = map.chromosome_index();
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n  \
         <key id=\"chromosome\" for=\"node\" attr.name=\"chromosome\" attr.type=\"string\"/>\n  \
         <key id=\"position\" for=\"node\" attr.name=\"position\" attr.type=\"double\"/>\n  \
         <key id=\"color\" for=\"node\" attr.name=\"color\" attr.type=\"string\"/>\n  \
         <key id=\"theta\" for=\"edge\" attr.name=\"theta\" attr.type=\"double\"/>\n  \
         <key id=\"pcor\" for=\"edge\" attr.name=\"partial_correlation\" attr.type=\"double\"/>\n  \
         <graph id=\"epinet\" edgedefault=\"undirected\">\n",
    );
    for (m, &c) in map.markers.iter().zip(&chrom) {
        writeln!(
            out,
            "    <node id=\"{}\"><data key=\"chromosome\">{}</data><data key=\"position\">{}</data><data key=\"color\">{}</data></node>",
            xml_escape(&m.name),
            xml_escape(&m.chromosome),
            m.position,
            chromosome_color(c)
        )
        .unwrap();
    }
    for i in 0..theta.nrows() {
        for j in i + 1..theta.ncols() {
            if theta[(i, j)] != 0.0 {
                writeln!(
                    out,
                    "    <edge source=\"{}\" target=\"{}\"><data key=\"theta\">{:?}</data><data key=\"pcor\">{:?}</data></edge>",
                    xml_escape(&map.markers[i].name),
                    xml_escape(&map.markers[j].name),
                    theta[(i, j)],
                    pc[(i, j)]
                )
                .unwrap();
            }
        }
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

pub fn dot(map: &MarkerMap, theta: &DMatrix<f64>) -> String {
    let pc = partial_correlations(theta);
    let chrom = map.chromosome_index();
    let mut out = String::from("graph epinet {\n  node [style=filled];\n");
    for (m, &c) in map.markers.iter().zip(&chrom) {
        writeln!(
            out,
            "  \"{}\" [fillcolor=\"{}\", chromosome=\"{}\"];",
            dot_escape(&m.name),
            chromosome_color(c),
            dot_escape(&m.chromosome)
        )
        .unwrap();
    }
    for i in 0..theta.nrows() {
        for j in i + 1..theta.ncols() {
            if theta[(i, j)] != 0.0 {
                writeln!(
                    out,
                    "  \"{}\" -- \"{}\" [theta={:?}, partial_correlation={:?}];",
                    dot_escape(&map.markers[i].name),
                    dot_escape(&map.markers[j].name),
                    theta[(i, j)],
                    pc[(i, j)]
                )
                .unwrap();
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Columns of a tab-separated file with a header row.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or("empty file")?
            .split('\t')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let row: Vec<String> = line.split('\t').map(|s| s.trim().to_string()).collect();
            if row.len() != header.len() {
                return Err(format!("row {} has {} fields, expected {}", k + 2, row.len(), header.len()));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize, String> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("missing column `{name}`"))
    }
}

/// A sparse symmetric matrix read back from triplets.
#[derive(Clone, Debug)]
pub struct SparseGraph {
    pub names: Vec<String>,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseGraph {
    pub fn adjacency_on(&self, universe: &[String]) -> Result<Vec<Vec<bool>>, String> {
        let index: HashMap<&str, usize> =
            universe.iter().enumerate().map(|(k, n)| (n.as_str(), k)).collect();
        let p = universe.len();
        let mut a = vec![vec![false; p]; p];
        for &(i, j, v) in &self.entries {
            if i == j || v == 0.0 {
                continue;
            }
            let look = |k: usize| {
                index
                    .get(self.names[k].as_str())
                    .copied()
                    .ok_or_else(|| format!("marker `{}` is not in the reference set", self.names[k]))
            };
            let (a_i, a_j) = (look(i)?, look(j)?);
            a[a_i][a_j] = true;
            a[a_j][a_i] = true;
        }
        Ok(a)
    }

    pub fn theta(&self) -> DMatrix<f64> {
        let p = self.names.len();
        let mut m = DMatrix::zeros(p, p);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }
}

fn intern(names: &mut Vec<String>, index: &mut HashMap<String, usize>, name: &str) -> usize {
    if let Some(&k) = index.get(name) {
        return k;
    }
    names.push(name.to_string());
    index.insert(name.to_string(), names.len() - 1);
    names.len() - 1
}

/// Reads an edge list. Markers are numbered in order of first appearance.
pub fn read_edge_list(text: &str) -> Result<SparseGraph, String> {
    let t = Table::parse(text)?;
    let (ci, cj, cv) = (t.column("marker_i")?, t.column("marker_j")?, t.column("theta_ij")?);
    let mut names = Vec::new();
    let mut index = HashMap::new();
    let mut entries = Vec::new();
    for (k, row) in t.rows.iter().enumerate() {
        let i = intern(&mut names, &mut index, &row[ci]);
        let j = intern(&mut names, &mut index, &row[cj]);
        let v: f64 = row[cv]
            .parse()
            .map_err(|_| format!("row {}: `{}` is not a number", k + 2, row[cv]))?;
        entries.push((i, j, v));
    }
    Ok(SparseGraph { names, entries })
}

/// Path triplets: one block of edge-list rows per penalty index.
pub fn path_edges(names: &[String], thetas: &[(usize, f64, &DMatrix<f64>)]) -> String {
    let mut out = String::from("index\tlambda\tmarker_i\tmarker_j\ttheta_ij\n");
    for &(k, lambda, theta) in thetas {
        for i in 0..theta.nrows() {
            for j in i..theta.ncols() {
                if theta[(i, j)] != 0.0 {
                    writeln!(out, "{k}\t{lambda:?}\t{}\t{}\t{:?}", names[i], names[j], theta[(i, j)]).unwrap();
                }
            }
        }
    }
    out
}

/// Reads path triplets back as `(index, lambda, graph)` in file order.
pub fn read_path_edges(text: &str) -> Result<Vec<(usize, f64, SparseGraph)>, String> {
    let t = Table::parse(text)?;
    let ck = t.column("index")?;
    let cl = t.column("lambda")?;
    let (ci, cj, cv) = (t.column("marker_i")?, t.column("marker_j")?, t.column("theta_ij")?);
    let mut out: Vec<(usize, f64, SparseGraph)> = Vec::new();
    let mut index = HashMap::new();
    for (r, row) in t.rows.iter().enumerate() {
        let bad = |c: usize| format!("row {}: `{}` is not a number", r + 2, row[c]);
        let k: usize = row[ck].parse().map_err(|_| bad(ck))?;
        let lambda: f64 = row[cl].parse().map_err(|_| bad(cl))?;
        let v: f64 = row[cv].parse().map_err(|_| bad(cv))?;
        if out.last().map(|e| e.0) != Some(k) {
            index.clear();
            out.push((k, lambda, SparseGraph { names: Vec::new(), entries: Vec::new() }));
        }
        let g = &mut out.last_mut().unwrap().2;
        let i = intern(&mut g.names, &mut index, &row[ci]);
        let j = intern(&mut g.names, &mut index, &row[cj]);
        g.entries.push((i, j, v));
    }
    Ok(out)
}

pub fn metrics_header() -> &'static str {
    "method\tseed\tF1\tSEN\tSPE\tAUC\tTP\tFP\tFN\tTN\n"
}

pub fn metrics_row(
    method: &str,
    seed: u64,
    m: &epinet::evaluation::RecoveryMetrics,
    auc: Option<f64>,
) -> String {
    format!(
        "{method}\t{seed}\t{:?}\t{:?}\t{:?}\t{}\t{}\t{}\t{}\t{}\n",
        m.f1,
        m.sen,
        m.spe,
        na(auc),
        m.tp,
        m.fp,
        m.fn_,
        m.tn
    )
}

pub fn optional(v: Option<f64>) -> String {
    na(v)
}
