use super::GenotypeMatrix;
use crate::error::{Error, Result};
use crate::normal;

/// Latent thresholds of every marker: `cuts[j]` holds `k_j + 1` values
/// starting at `-inf` and ending at `+inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct CutPointTable {
    cuts: Vec<Vec<f64>>,
}

impl CutPointTable {
    /// Builds a table from interior cut-points only.
    pub fn from_interior(interior: Vec<Vec<f64>>) -> Result<Self> {
        let cuts = interior
            .into_iter()
            .enumerate()
            .map(|(j, inner)| {
                if inner.iter().any(|c| !c.is_finite()) || inner.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidArgument(format!(
                        "interior cut-points of marker {j} must be finite and increasing"
                    )));
                }
                let mut full = Vec::with_capacity(inner.len() + 2);
                full.push(f64::NEG_INFINITY);
                full.extend(inner);
                full.push(f64::INFINITY);
                Ok(full)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cuts })
    }

    pub fn p(&self) -> usize {
        self.cuts.len()
    }

    /// Full cut-point vector of marker `j`, including the infinite ends.
    pub fn marker(&self, j: usize) -> &[f64] {
        &self.cuts[j]
    }

    pub fn states(&self, j: usize) -> usize {
        self.cuts[j].len() - 1
    }

    /// Latent interval of category `y` of marker `j`; missing values map to
    /// the whole line.
    #[inline]
    pub fn interval(&self, j: usize, y: Option<u8>) -> (f64, f64) {
        match y {
            Some(y) => {
                let c = &self.cuts[j];
                (c[y as usize], c[y as usize + 1])
            }
            None => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Lower and upper latent bounds of every marker for row `i`.
    pub fn row_bounds(&self, g: &GenotypeMatrix, i: usize) -> (Vec<f64>, Vec<f64>) {
        let row = g.row(i);
        let mut lo = Vec::with_capacity(row.len());
        let mut hi = Vec::with_capacity(row.len());
        for (j, &y) in row.iter().enumerate() {
            let (a, b) = self.interval(j, y);
            lo.push(a);
            hi.push(b);
        }
        (lo, hi)
    }

    /// Checks that every observed code of `g` has an interval.
    pub fn check_consistent(&self, g: &GenotypeMatrix) -> Result<()> {
        if self.p() != g.p() {
            return Err(Error::Dimension(format!(
                "{} cut-point rows for {} markers",
                self.p(),
                g.p()
            )));
        }
        for j in 0..g.p() {
            if g.states()[j] > self.states(j) {
                return Err(Error::Dimension(format!(
                    "marker `{}` has {} states but {} intervals",
                    g.names()[j],
                    g.states()[j],
                    self.states(j)
                )));
            }
        }
        Ok(())
    }
}

/// Empirical cut-points `c[j][l+1] = quantile(F(l))`, where `F` is the
/// cumulative category count among non-missing entries divided by `m + 1`.
/// The `m + 1` denominator keeps every interior cut-point finite.
pub fn estimate_cutpoints(g: &GenotypeMatrix) -> Result<CutPointTable> {
    let mut interior = Vec::with_capacity(g.p());
    for j in 0..g.p() {
        let counts = g.category_counts(j);
        let distinct = counts.iter().filter(|&&c| c > 0).count();
        if distinct < 2 {
            return Err(Error::DegenerateMarker {
                col: j,
                name: g.names()[j].clone(),
            });
        }
        // the top category may be empty (declared but unobserved); any
        // other empty category would give a repeated or infinite cut
        let last = counts.len() - 1;
        if let Some(category) = counts[..last].iter().position(|&c| c == 0) {
            return Err(Error::EmptyCategory {
                col: j,
                name: g.names()[j].clone(),
                category,
            });
        }
        let m: usize = counts.iter().sum();
        let denom = (m + 1) as f64;
        let mut cum = 0usize;
        let cuts: Vec<f64> = counts[..last]
            .iter()
            .map(|&c| {
                cum += c;
                normal::quantile(cum as f64 / denom)
            })
            .collect();
        interior.push(cuts);
    }
    CutPointTable::from_interior(interior)
}
