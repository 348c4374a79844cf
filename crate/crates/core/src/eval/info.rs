use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor applied to empty `q` bins in [`kl_empirical`].
pub const KL_SMOOTHING: f64 = 1e-9;
pub const DEFAULT_BINS: usize = 10;

/// Equal-frequency bin edges: the values at the `k / bins` quantiles.
pub fn quantile_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    (1..bins).map(|k| sorted[(k * n).div_ceil(bins).min(n - 1)]).collect()
}

/// Bin index of `v`: the number of edges at or below it.
pub fn bin_of(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|&e| e <= v)
}

/// Joint counts of two binned samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram2D {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    pub joint: Vec<Vec<u64>>,
    pub x_marginal: Vec<u64>,
    pub y_marginal: Vec<u64>,
    pub total: u64,
}

impl Histogram2D {
    /// Bins each axis into `bins` equal-frequency bins.
    pub fn equal_frequency(x: &[f64], y: &[f64], bins: usize) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidArgument(format!("{} x samples vs {} y samples", x.len(), y.len())));
        }
        if x.is_empty() {
            return Err(Error::InvalidArgument("no samples".into()));
        }
        if bins < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
        }
        if x.iter().chain(y).any(|v| v.is_nan()) {
            return Err(Error::NonFinite("histogram sample"));
        }
        let x_edges = quantile_edges(x, bins);
        let y_edges = quantile_edges(y, bins);
        let mut joint = vec![vec![0u64; bins]; bins];
        let mut x_marginal = vec![0u64; bins];
        let mut y_marginal = vec![0u64; bins];
        for (&a, &b) in x.iter().zip(y) {
            let (i, j) = (bin_of(&x_edges, a), bin_of(&y_edges, b));
            joint[i][j] += 1;
            x_marginal[i] += 1;
            y_marginal[j] += 1;
        }
        Ok(Histogram2D {
            x_edges,
            y_edges,
            joint,
            x_marginal,
            y_marginal,
            total: x.len() as u64,
        })
    }

    /// Plug-in mutual information in nats.
    pub fn mutual_information(&self) -> f64 {
        let n = self.total as f64;
        let mut terms = Vec::new();
        for (i, row) in self.joint.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c > 0 {
                    let pxy = c as f64 / n;
                    let px = self.x_marginal[i] as f64 / n;
                    let py = self.y_marginal[j] as f64 / n;
                    terms.push(pxy * (pxy / (px * py)).ln());
                }
            }
        }
        // Summing in sorted order makes the result independent of axis order.
        terms.sort_by(f64::total_cmp);
        terms.iter().sum::<f64>().max(0.0)
    }
}

/// Plug-in mutual information between two scalar samples over equal-frequency bins.
pub fn binned_mi(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    Ok(Histogram2D::equal_frequency(x, y, bins)?.mutual_information())
}

/// Projection of each row onto the first principal component (power iteration).
pub fn first_principal_projection(x: &Tensor) -> Result<Vec<f64>> {
    if x.ndim() != 2 || x.rows() == 0 {
        return Err(Error::InvalidArgument(format!("expected a non-empty matrix, got {:?}", x.shape())));
    }
    let (n, d) = (x.rows(), x.cols());
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64).collect();
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let r = x.row(i);
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in 0..d {
                cov[a * d + b] += da * (r[b] - mean[b]);
            }
        }
    }
    let mut v: Vec<f64> = (0..d).map(|j| 1.0 + j as f64 / d as f64).collect();
    for _ in 0..200 {
        let mut next = vec![0.0; d];
        for a in 0..d {
            next[a] = (0..d).map(|b| cov[a * d + b] * v[b]).sum();
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        v = next.into_iter().map(|x| x / norm).collect();
    }
    Ok((0..n)
        .map(|i| x.row(i).iter().zip(&mean).zip(&v).map(|((a, m), w)| (a - m) * w).sum())
        .collect())
}

/// Mean over output columns of the binned MI between that column and the
/// input's first principal projection.
pub fn representation_mi(input: &Tensor, output: &Tensor, bins: usize) -> Result<f64> {
    if input.rows() != output.rows() || output.ndim() != 2 || output.cols() == 0 {
        return Err(Error::InvalidArgument(format!(
            "input {:?} vs output {:?}",
            input.shape(),
            output.shape()
        )));
    }
    let proj = first_principal_projection(input)?;
    let mut total = 0.0;
    for j in 0..output.cols() {
        total += binned_mi(&proj, &output.column_values(j), bins)?;
    }
    Ok(total / output.cols() as f64)
}

/// `Σ p ln(p / q)` over the normalised inputs; empty `q` bins are floored at
/// [`KL_SMOOTHING`].
pub fn kl_empirical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::InvalidArgument(format!("histograms with {} and {} bins", p.len(), q.len())));
    }
    if p.iter().chain(q).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("histogram entries must be finite and non-negative".into()));
    }
    let (sp, sq) = (p.iter().sum::<f64>(), q.iter().sum::<f64>());
    if sp <= 0.0 || sq <= 0.0 {
        return Err(Error::InvalidArgument("histogram has no mass".into()));
    }
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let (pa, qb) = (a / sp, (b / sq).max(KL_SMOOTHING));
        if pa > 0.0 {
            total += pa * (pa / qb).ln();
        }
    }
    Ok(total.max(0.0))
}
