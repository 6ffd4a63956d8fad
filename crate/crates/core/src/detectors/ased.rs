use nalgebra::{DMatrix, SymmetricEigen};

use crate::detectors::{require_nodes, warmup_error, Attribution, ScoreList};
use crate::error::{Error, Result};
use crate::ingestion::FeatureMatrix;

/// Residuals of every tick's centered column after projecting out the
/// normal subspace; `residuals[t]` has one entry per node.
fn residuals(f: &FeatureMatrix, variance_threshold: f64) -> Result<Vec<Vec<f64>>> {
    require_nodes(f)?;
    if !(variance_threshold > 0.0 && variance_threshold < 1.0) {
        return Err(Error::config(format!(
            "ASED variance threshold must lie in (0, 1), got {variance_threshold}"
        )));
    }
    let (n, t_len) = (f.num_nodes(), f.num_ticks());
    if t_len < 3 {
        return Err(Error::validation(format!("ASED needs at least 3 ticks, got {t_len}")));
    }

    // Centered n x T data: each node series minus its mean.
    let mut x = DMatrix::from_fn(n, t_len, |i, t| f.get(i, t));
    for i in 0..n {
        let mean = x.row(i).mean();
        x.row_mut(i).add_scalar_mut(-mean);
    }

    let basis = principal_basis(&x, variance_threshold);
    let mut out = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut r: Vec<f64> = x.column(t).iter().copied().collect();
        for u in &basis {
            let c: f64 = u.iter().zip(&r).map(|(a, b)| a * b).sum();
            r.iter_mut().zip(u).for_each(|(ri, ui)| *ri -= c * ui);
        }
        out.push(r);
    }
    Ok(out)
}

/// Orthonormal principal directions spanning the normal subspace: the
/// fewest leading components whose variance share reaches the threshold.
fn principal_basis(x: &DMatrix<f64>, variance_threshold: f64) -> Vec<Vec<f64>> {
    let (n, t_len) = x.shape();
    // Eigen-decompose whichever Gram matrix is smaller.
    let node_side = n <= t_len;
    let gram = if node_side { x * x.transpose() } else { x.transpose() * x };
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let floor = values[0] * 1e-12;
    let mut basis = Vec::new();
    let mut acc = 0.0;
    for (&idx, &val) in order.iter().zip(&values) {
        if acc / total >= variance_threshold - 1e-12 || val <= floor {
            break;
        }
        acc += val;
        let dir: Vec<f64> = if node_side {
            eig.eigenvectors.column(idx).iter().copied().collect()
        } else {
            // Left singular vector u = X v / sqrt(lambda).
            let u = x * eig.eigenvectors.column(idx);
            let s = val.sqrt();
            u.iter().map(|v| v / s).collect()
        };
        basis.push(dir);
    }
    basis
}

/// Anomalous-subspace detector: squared prediction error of each centered
/// column outside the normal principal subspace.
pub fn ased(f: &FeatureMatrix, variance_threshold: f64) -> Result<ScoreList> {
    let res = residuals(f, variance_threshold)?;
    let scores = res.iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    ScoreList::new("ASED", scores, 0)
}

/// Nodes by squared residual at `tick`.
pub fn ased_attribution(f: &FeatureMatrix, variance_threshold: f64, tick: usize) -> Result<Attribution> {
    if tick >= f.num_ticks() {
        return Err(warmup_error("ASED", tick, 0));
    }
    let res = residuals(f, variance_threshold)?;
    let sq: Vec<f64> = res[tick].iter().map(|v| v * v).collect();
    Ok(Attribution::from_values(tick, &f.node_ids, &sq))
}
