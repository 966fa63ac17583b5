//! Graph-recovery metrics, ROC curves, rank-based baselines and bootstrap
//! edge uncertainty.

mod bootstrap;
mod npn;

pub use bootstrap::{bootstrap_network, BootstrapConfig, BootstrapSummary, Resample};
pub use npn::{baseline_path, npn_ns, npn_tau, repair_correlation, BaselinePath};

use crate::em::PrecisionPath;
use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecoveryMetrics {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub f1: f64,
    pub sen: f64,
    pub spe: f64,
}

fn check_square(a: &[Vec<bool>], p: usize, what: &str) -> Result<()> {
    if a.len() != p || a.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension(format!("{what} adjacency is not {p}x{p}")));
    }
    Ok(())
}

/// Confusion counts over the upper triangle. Ratios with an empty
/// denominator are reported as 1.
pub fn confusion_metrics(est: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<RecoveryMetrics> {
    let p = truth.len();
    check_square(truth, p, "true")?;
    check_square(est, p, "estimated")?;
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for i in 0..p {
        for j in i + 1..p {
            match (est[i][j], truth[i][j]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    Ok(RecoveryMetrics {
        tp,
        tn,
        fp,
        fn_,
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        sen: ratio(tp, tp + fn_),
        spe: ratio(tn, tn + fp),
    })
}

/// Adjacency matrices of the successful entries of a path, in path order.
pub fn path_adjacencies(path: &PrecisionPath) -> Vec<Vec<Vec<bool>>> {
    path.entries
        .iter()
        .filter_map(|e| e.fit.as_ref().map(|f| f.solution.adjacency()))
        .collect()
}

/// Best F1 along a sequence of estimates.
pub fn oracle_f1(adjacencies: &[Vec<Vec<bool>>], truth: &[Vec<bool>]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for a in adjacencies {
        best = best.max(confusion_metrics(a, truth)?.f1);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` including the padded end points.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC points of estimates ordered from the largest penalty down. Each
/// coordinate is made non-decreasing by a running maximum, the curve is
/// padded with (0, 0) and (1, 1) and integrated with the trapezoid rule.
pub fn roc_curve(adjacencies: &[Vec<Vec<bool>>], truth: &[Vec<bool>]) -> Result<RocCurve> {
    let mut points = vec![(0.0, 0.0)];
    let (mut fx, mut fy) = (0.0f64, 0.0f64);
    for a in adjacencies {
        let m = confusion_metrics(a, truth)?;
        let fpr = if m.fp + m.tn == 0 { 0.0 } else { m.fp as f64 / (m.fp + m.tn) as f64 };
        let tpr = if m.tp + m.fn_ == 0 { 0.0 } else { m.tp as f64 / (m.tp + m.fn_) as f64 };
        fx = fx.max(fpr);
        fy = fy.max(tpr);
        points.push((fx, fy));
    }
    points.push((1.0, 1.0));
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// `roc_curve` over the successful entries of a path.
pub fn path_roc(path: &PrecisionPath, truth: &[Vec<bool>]) -> Result<RocCurve> {
    roc_curve(&path_adjacencies(path), truth)
}
