//! Helpers shared by the integration suites.

// Each test binary compiles this module separately and uses a different
// subset of it.
#![allow(dead_code)]

use actcomp::rng::SplitMix64;
use actcomp::tensor::ActivationMatrix;

/// Dense gaussian matrix, deterministic in the seed.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> ActivationMatrix {
    let mut rng = SplitMix64::new(seed);
    let data: Vec<f32> = (0..rows * cols)
        .map(|_| rng.next_gaussian() as f32)
        .collect();
    ActivationMatrix::new(rows, cols, data).unwrap()
}

/// Squared singular values of A, descending, via cyclic Jacobi iteration on
/// the Gram matrix A^T A. Written directly from the textbook recurrence so
/// it is independent of the solver used by the library codecs.
pub fn gram_eigenvalues(a: &ActivationMatrix) -> Vec<f64> {
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
    for _sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += g[p * n + q] * g[p * n + q];
            }
        }
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = g[p * n + q];
                if apq.abs() < 1e-300 {
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
    eigs.sort_by(|x, y| y.partial_cmp(x).unwrap());
    eigs
}
