//! Comparison codecs evaluated under the same byte budgets as the
//! frequency-domain codec: top-k magnitude sparsification and low-rank
//! factorization (truncated SVD and column-pivoted QR).

use nalgebra::DMatrix;
use thiserror::Error;

use crate::tensor::ActivationMatrix;

/// Iteration cap for the SVD solver.
pub const SVD_MAX_SWEEPS: usize = 1000;

/// Bytes per top-k entry: u32 flat index + f32 value.
pub const TOPK_ENTRY_BYTES: usize = 8;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("byte budget {budget} too small: need at least {need} bytes")]
    BudgetTooSmall { budget: usize, need: usize },
    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },
    #[error("SVD failed to converge within {SVD_MAX_SWEEPS} sweeps")]
    ConvergenceFailure,
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
}

/// Sparse payload: the k largest-magnitude entries by flat index.
#[derive(Debug, Clone, PartialEq)]
pub struct TopKPayload {
    pub rows: usize,
    pub cols: usize,
    /// (flat_index, value), strictly ascending by index.
    pub entries: Vec<(u32, f32)>,
}

impl TopKPayload {
    pub fn k(&self) -> usize {
        self.entries.len()
    }

    /// Entry bytes only; the k count lives in the container header.
    pub fn payload_bytes(&self) -> usize {
        self.entries.len() * TOPK_ENTRY_BYTES
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowRankMethod {
    Svd,
    Qr,
}

/// Rank-rho factor pair; reconstruction is left * right. For SVD the
/// singular values are folded into the left factor.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankPayload {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub method: LowRankMethod,
    /// rows x rank, row-major.
    pub left: Vec<f32>,
    /// rank x cols, row-major.
    pub right: Vec<f32>,
}

impl LowRankPayload {
    /// Factor bytes only; the rank lives in the container header.
    pub fn payload_bytes(&self) -> usize {
        (self.left.len() + self.right.len()) * 4
    }
}

/// Keeps the floor(budget / 8) largest-|value| entries; ties broken toward
/// the lower flat index.
pub fn compress_topk(
    a: &ActivationMatrix,
    byte_budget: usize,
) -> Result<TopKPayload, BaselineError> {
    if byte_budget < TOPK_ENTRY_BYTES {
        return Err(BaselineError::BudgetTooSmall {
            budget: byte_budget,
            need: TOPK_ENTRY_BYTES,
        });
    }
    let n = a.rows() * a.cols();
    let k = (byte_budget / TOPK_ENTRY_BYTES).min(n);

    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&i, &j| {
        let (x, y) = (a.data()[i as usize].abs(), a.data()[j as usize].abs());
        y.partial_cmp(&x).unwrap().then(i.cmp(&j))
    });
    let mut entries: Vec<(u32, f32)> = order[..k]
        .iter()
        .map(|&i| (i, a.data()[i as usize]))
        .collect();
    entries.sort_unstable_by_key(|&(i, _)| i);

    Ok(TopKPayload {
        rows: a.rows(),
        cols: a.cols(),
        entries,
    })
}

/// Scatters the kept entries into a zero matrix.
pub fn decompress_topk(p: &TopKPayload) -> Result<ActivationMatrix, BaselineError> {
    let n = p.rows * p.cols;
    let mut data = vec![0.0f32; n];
    let mut last: Option<u32> = None;
    for &(idx, value) in &p.entries {
        if last.is_some_and(|prev| idx <= prev) {
            return Err(BaselineError::CorruptPayload(format!(
                "indices not strictly increasing at {idx}"
            )));
        }
        if idx as usize >= n {
            return Err(BaselineError::CorruptPayload(format!(
                "index {idx} outside {}x{}",
                p.rows, p.cols
            )));
        }
        data[idx as usize] = value;
        last = Some(idx);
    }
    ActivationMatrix::new(p.rows, p.cols, data)
        .map_err(|e| BaselineError::CorruptPayload(e.to_string()))
}

fn to_dmatrix(a: &ActivationMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(a.rows(), a.cols(), |r, c| a.get(r, c) as f64)
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap());
    order
}

/// Best rank-rho Frobenius approximation via SVD, returned as
/// (U * Sigma, V^T) truncated to rho columns/rows, both in f64.
pub fn svd_truncated(
    a: &ActivationMatrix,
    rank: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>), BaselineError> {
    let max = a.rows().min(a.cols());
    if rank == 0 || rank > max {
        return Err(BaselineError::RankOutOfRange { rank, max });
    }
    let m = to_dmatrix(a);
    let (rows, cols) = (a.rows(), a.cols());
    // Eigendecompose the Gram matrix on the smaller side instead of running
    // a bidiagonal SVD: the symmetric solver stays accurate on exactly
    // rank-deficient inputs, and the truncated product reduces to a
    // projection onto the top singular subspace.
    let mut left = DMatrix::zeros(rows, rank);
    let mut right = DMatrix::zeros(rank, cols);
    if rows <= cols {
        let gram = &m * m.transpose();
        let eig = nalgebra::SymmetricEigen::try_new(gram, f64::EPSILON, SVD_MAX_SWEEPS)
            .ok_or(BaselineError::ConvergenceFailure)?;
        let order = descending_order(eig.eigenvalues.as_slice());
        let sigma_max = eig.eigenvalues[order[0]].max(0.0).sqrt();
        for (j, &idx) in order[..rank].iter().enumerate() {
            let sigma = eig.eigenvalues[idx].max(0.0).sqrt();
            let q = eig.eigenvectors.column(idx);
            for i in 0..rows {
                left[(i, j)] = q[i] * sigma;
            }
            // Right singular vectors of (numerically) zero singular values
            // are arbitrary; leaving the row zero keeps the product exact.
            if sigma > sigma_max * 1e-12 {
                let row = q.transpose() * &m;
                for c in 0..cols {
                    right[(j, c)] = row[(0, c)] / sigma;
                }
            }
        }
    } else {
        let gram = m.transpose() * &m;
        let eig = nalgebra::SymmetricEigen::try_new(gram, f64::EPSILON, SVD_MAX_SWEEPS)
            .ok_or(BaselineError::ConvergenceFailure)?;
        let order = descending_order(eig.eigenvalues.as_slice());
        for (j, &idx) in order[..rank].iter().enumerate() {
            let v = eig.eigenvectors.column(idx);
            let col = &m * v; // = sigma_j * u_j, the left factor column
            for i in 0..rows {
                left[(i, j)] = col[i];
            }
            for c in 0..cols {
                right[(j, c)] = v[c];
            }
        }
    }
    Ok((left, right))
}

/// Rank from the byte budget (4 bytes per factor value), then factorize.
pub fn compress_lowrank(
    a: &ActivationMatrix,
    byte_budget: usize,
    method: LowRankMethod,
) -> Result<LowRankPayload, BaselineError> {
    let per_rank = 4 * (a.rows() + a.cols());
    if byte_budget < per_rank {
        return Err(BaselineError::BudgetTooSmall {
            budget: byte_budget,
            need: per_rank,
        });
    }
    let rank = (byte_budget / per_rank).min(a.rows().min(a.cols()));

    let (left, right) = match method {
        LowRankMethod::Svd => svd_truncated(a, rank)?,
        LowRankMethod::Qr => {
            // Column-pivoted QR of A (A P = Q R): keep the orthonormal basis
            // of the first rank pivot columns and the matching R slice with
            // the pivot permutation undone.
            let m = to_dmatrix(a);
            let qr = m.col_piv_qr();
            let q = qr.q();
            let r = qr.r();
            let left = q.columns(0, rank).into_owned();
            let mut right = r.rows(0, rank).into_owned();
            qr.p().inv_permute_columns(&mut right);
            (left, right)
        }
    };

    Ok(LowRankPayload {
        rows: a.rows(),
        cols: a.cols(),
        rank,
        method,
        left: left.transpose().iter().map(|&v| v as f32).collect(),
        right: right.transpose().iter().map(|&v| v as f32).collect(),
    })
}

/// Reconstruction by factor product.
pub fn decompress_lowrank(p: &LowRankPayload) -> Result<ActivationMatrix, BaselineError> {
    if p.rank == 0
        || p.left.len() != p.rows * p.rank
        || p.right.len() != p.rank * p.cols
    {
        return Err(BaselineError::CorruptPayload(format!(
            "factor sizes {}/{} inconsistent with {}x{} rank {}",
            p.left.len(),
            p.right.len(),
            p.rows,
            p.cols,
            p.rank
        )));
    }
    let mut data = vec![0.0f32; p.rows * p.cols];
    for i in 0..p.rows {
        for j in 0..p.cols {
            let mut acc = 0.0f64;
            for t in 0..p.rank {
                acc += p.left[i * p.rank + t] as f64 * p.right[t * p.cols + j] as f64;
            }
            data[i * p.cols + j] = acc as f32;
        }
    }
    ActivationMatrix::new(p.rows, p.cols, data)
        .map_err(|e| BaselineError::CorruptPayload(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::reconstruction_error;
    use crate::rng::SplitMix64;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> ActivationMatrix {
        let mut rng = SplitMix64::new(seed);
        let data: Vec<f32> = (0..rows * cols)
            .map(|_| rng.next_gaussian() as f32)
            .collect();
        ActivationMatrix::new(rows, cols, data).unwrap()
    }

    /// Squared singular values of A via cyclic Jacobi on A^T A; independent
    /// of the nalgebra solver behind `svd_truncated`.
    fn gram_eigenvalues(a: &ActivationMatrix) -> Vec<f64> {
        let n = a.cols();
        let mut g = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for s in 0..a.rows() {
                    acc += a.get(s, i) as f64 * a.get(s, j) as f64;
                }
                g[i * n + j] = acc;
            }
        }
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += g[p * n + q] * g[p * n + q];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = g[p * n + q];
                    if apq.abs() < 1e-30 {
                        continue;
                    }
                    let theta = 0.5 * (g[q * n + q] - g[p * n + p]) / apq;
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for i in 0..n {
                        let (gip, giq) = (g[i * n + p], g[i * n + q]);
                        g[i * n + p] = c * gip - s * giq;
                        g[i * n + q] = s * gip + c * giq;
                    }
                    for i in 0..n {
                        let (gpi, gqi) = (g[p * n + i], g[q * n + i]);
                        g[p * n + i] = c * gpi - s * gqi;
                        g[q * n + i] = s * gpi + c * gqi;
                    }
                }
            }
        }
        let mut eigs: Vec<f64> = (0..n).map(|i| g[i * n + i].max(0.0)).collect();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eigs
    }

    #[test]
    fn topk_keeps_dominant_magnitudes() {
        let a = ActivationMatrix::new(2, 2, vec![10.0, 0.1, 0.2, -9.0]).unwrap();
        let p = compress_topk(&a, 16).unwrap();
        assert_eq!(p.entries, vec![(0, 10.0), (3, -9.0)]);
    }

    #[test]
    fn topk_tie_breaks_to_lower_index() {
        let a = ActivationMatrix::new(2, 2, vec![1.0; 4]).unwrap();
        let p = compress_topk(&a, 8).unwrap();
        assert_eq!(p.entries, vec![(0, 1.0)]);
    }

    #[test]
    fn topk_budget_too_small() {
        let a = ActivationMatrix::zeros(2, 2);
        assert!(matches!(
            compress_topk(&a, 7),
            Err(BaselineError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn topk_scatter() {
        let p = TopKPayload {
            rows: 2,
            cols: 2,
            entries: vec![(0, 7.0)],
        };
        let a = decompress_topk(&p).unwrap();
        assert_eq!(a.data(), &[7.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn topk_exact_when_sparse_enough() {
        let a = ActivationMatrix::new(2, 3, vec![0.0, 5.0, 0.0, -2.0, 0.0, 0.0]).unwrap();
        let p = compress_topk(&a, 2 * TOPK_ENTRY_BYTES).unwrap();
        let back = decompress_topk(&p).unwrap();
        assert_eq!(a.data(), back.data());
    }

    #[test]
    fn topk_error_equals_dropped_energy() {
        let a = random_matrix(64, 64, 3);
        let budget = 64 * 64 * 4 / 8;
        let p = compress_topk(&a, budget).unwrap();
        let back = decompress_topk(&p).unwrap();
        let err = reconstruction_error(&a, &back).unwrap();

        let kept: std::collections::HashSet<u32> =
            p.entries.iter().map(|&(i, _)| i).collect();
        let dropped: f64 = a
            .data()
            .iter()
            .enumerate()
            .filter(|(i, _)| !kept.contains(&(*i as u32)))
            .map(|(_, &v)| v as f64 * v as f64)
            .sum();
        let expected = (dropped.sqrt()) / a.frobenius_norm();
        assert!((err - expected).abs() < 1e-9, "{err} vs {expected}");
    }

    #[test]
    fn topk_rejects_corrupt_indices() {
        let dup = TopKPayload {
            rows: 2,
            cols: 2,
            entries: vec![(1, 1.0), (1, 2.0)],
        };
        assert!(matches!(
            decompress_topk(&dup),
            Err(BaselineError::CorruptPayload(_))
        ));
        let oob = TopKPayload {
            rows: 2,
            cols: 2,
            entries: vec![(4, 1.0)],
        };
        assert!(matches!(
            decompress_topk(&oob),
            Err(BaselineError::CorruptPayload(_))
        ));
    }

    #[test]
    fn svd_exact_on_rank_one() {
        let x = [1.0f32, -2.0, 0.5, 3.0];
        let y = [2.0f32, 1.0, -1.0];
        let data: Vec<f32> = x.iter().flat_map(|&a| y.iter().map(move |&b| a * b)).collect();
        let a = ActivationMatrix::new(4, 3, data).unwrap();
        let (l, r) = svd_truncated(&a, 1).unwrap();
        let rec = &l * &r;
        for i in 0..4 {
            for j in 0..3 {
                assert!((rec[(i, j)] - a.get(i, j) as f64).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn svd_diagonal_case() {
        let a = ActivationMatrix::new(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let (l, r) = svd_truncated(&a, 1).unwrap();
        let rec = &l * &r;
        assert!((rec[(0, 0)] - 3.0).abs() < 1e-9);
        for (i, j) in [(0, 1), (1, 0), (1, 1)] {
            assert!(rec[(i, j)].abs() < 1e-9);
        }
        // relative error is sigma_2 / ||A|| = 1 / sqrt(10)
        let err_sq: f64 = (rec[(1, 1)] - 1.0f64).powi(2);
        let rel = err_sq.sqrt() / 10f64.sqrt();
        assert!((rel - 1.0 / 10f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn svd_rank_out_of_range() {
        let a = random_matrix(3, 4, 1);
        assert!(matches!(
            svd_truncated(&a, 0),
            Err(BaselineError::RankOutOfRange { .. })
        ));
        assert!(matches!(
            svd_truncated(&a, 4),
            Err(BaselineError::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn svd_error_matches_gram_eigen_oracle() {
        let a = random_matrix(6, 5, 88);
        let (l, r) = svd_truncated(&a, 2).unwrap();
        let rec = &l * &r;
        let mut err_sq = 0.0f64;
        for i in 0..6 {
            for j in 0..5 {
                err_sq += (rec[(i, j)] - a.get(i, j) as f64).powi(2);
            }
        }
        let eigs = gram_eigenvalues(&a);
        let expected_sq: f64 = eigs[2..].iter().sum();
        assert!(
            (err_sq.sqrt() - expected_sq.sqrt()).abs() <= 1e-6 * a.frobenius_norm(),
            "error {} vs oracle {}",
            err_sq.sqrt(),
            expected_sq.sqrt()
        );
    }

    #[test]
    fn lowrank_budget_arithmetic() {
        let a = random_matrix(8, 8, 5);
        let p = compress_lowrank(&a, 4 * (8 + 8), LowRankMethod::Svd).unwrap();
        assert_eq!(p.rank, 1);
        assert!(p.payload_bytes() <= 4 * (8 + 8));
        assert!(matches!(
            compress_lowrank(&a, 4 * (8 + 8) - 1, LowRankMethod::Qr),
            Err(BaselineError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn lowrank_exact_on_rank_one_both_methods() {
        let x = [1.0f32, 2.0, -1.0];
        let y = [0.5f32, 4.0, 1.0, -3.0];
        let data: Vec<f32> = x.iter().flat_map(|&a| y.iter().map(move |&b| a * b)).collect();
        let a = ActivationMatrix::new(3, 4, data).unwrap();
        for method in [LowRankMethod::Svd, LowRankMethod::Qr] {
            let p = compress_lowrank(&a, 4 * (3 + 4), method).unwrap();
            assert_eq!(p.rank, 1);
            let back = decompress_lowrank(&p).unwrap();
            let err = reconstruction_error(&a, &back).unwrap();
            assert!(err <= 1e-6, "{method:?}: {err}");
        }
    }

    #[test]
    fn svd_never_worse_than_qr() {
        for seed in 0..20 {
            let a = random_matrix(32, 32, 1000 + seed);
            let budget = 4 * (32 + 32) * 4; // rank 4
            let svd_err = reconstruction_error(
                &a,
                &decompress_lowrank(&compress_lowrank(&a, budget, LowRankMethod::Svd).unwrap())
                    .unwrap(),
            )
            .unwrap();
            let qr_err = reconstruction_error(
                &a,
                &decompress_lowrank(&compress_lowrank(&a, budget, LowRankMethod::Qr).unwrap())
                    .unwrap(),
            )
            .unwrap();
            assert!(
                svd_err <= qr_err + 1e-6,
                "seed {seed}: svd {svd_err} > qr {qr_err}"
            );
        }
    }

    #[test]
    fn lowrank_corrupt_payload() {
        let p = LowRankPayload {
            rows: 2,
            cols: 2,
            rank: 1,
            method: LowRankMethod::Svd,
            left: vec![1.0],
            right: vec![1.0, 2.0],
        };
        assert!(matches!(
            decompress_lowrank(&p),
            Err(BaselineError::CorruptPayload(_))
        ));
    }
}
