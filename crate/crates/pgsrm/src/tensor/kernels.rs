//! Dense compute kernels shared by forward and backward passes.
//!
//! All loops run in a fixed order so results are bitwise reproducible on a
//! platform. Reductions use fixed-width lane accumulators, which vectorizes
//! without reassociating sums nondeterministically.

use crate::num::Real;

const LANES: usize = 8;

/// Dot product with lane accumulators.
#[inline]
pub fn dot<S: Real>(x: &[S], y: &[S]) -> S {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [S::ZERO; LANES];
    let xc = x.chunks_exact(LANES);
    let yc = y.chunks_exact(LANES);
    let xr = xc.remainder();
    let yr = yc.remainder();
    for (xs, ys) in xc.zip(yc) {
        for l in 0..LANES {
            acc[l] += xs[l] * ys[l];
        }
    }
    let mut s = S::ZERO;
    for a in acc {
        s += a;
    }
    for (&a, &b) in xr.iter().zip(yr) {
        s += a * b;
    }
    s
}

/// `C[m x n] += A[m x k] * B[k x n]`, all row-major.
pub fn gemm_nn<S: Real>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `C[m x n] += A[m x k] * B^T` where `B` is stored `[n x k]`.
pub fn gemm_nt<S: Real>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for j in 0..n {
            crow[j] += dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `C[k x n] += A^T * G` where `A` is stored `[m x k]` and `G` is `[m x n]`.
pub fn gemm_tn<S: Real>(a: &[S], g: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &gv) in crow.iter_mut().zip(grow) {
                *cv += av * gv;
            }
        }
    }
}

/// In-row softmax with max subtraction; writes probabilities over `row`.
#[inline]
pub fn softmax_row<S: Real>(row: &mut [S]) {
    let mut max = row[0];
    for &v in row.iter() {
        max = max.maximum(v);
    }
    let mut sum = S::ZERO;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `log(sum(exp(row)))` with max subtraction.
#[inline]
pub fn log_sum_exp<S: Real>(row: &[S]) -> S {
    let mut max = row[0];
    for &v in row.iter() {
        max = max.maximum(v);
    }
    let mut sum = S::ZERO;
    for &v in row.iter() {
        sum += (v - max).exp();
    }
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let x: Vec<f64> = (0..37).map(|i| i as f64 * 0.3 - 4.0).collect();
        let y: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let naive: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((dot(&x, &y) - naive).abs() < 1e-9);
    }

    #[test]
    fn gemm_nn_small() {
        // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut c = [0.0f64; 4];
        gemm_nn(&a, &b, &mut c, 2, 2, 2);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn gemm_variants_agree() {
        let m = 3;
        let k = 5;
        let n = 4;
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.7).cos()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut c_nn = vec![0.0; m * n];
        gemm_nn(&a, &b, &mut c_nn, m, k, n);

        // Same product computed through gemm_nt with B transposed by hand.
        let mut bt = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c_nt = vec![0.0; m * n];
        gemm_nt(&a, &bt, &mut c_nt, m, k, n);
        for (x, y) in c_nn.iter().zip(&c_nt) {
            assert!((x - y).abs() < 1e-12);
        }

        // And through gemm_tn with A transposed by hand.
        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c_tn = vec![0.0; m * n];
        gemm_tn(&at, &b, &mut c_tn, k, m, n);
        for (x, y) in c_nn.iter().zip(&c_tn) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_row_is_stable_and_normalized() {
        let mut row = [1000.0f32, 0.0];
        softmax_row(&mut row);
        assert!(row[0] > 0.999 && row[1] < 1e-6);
        assert!((row[0] + row[1] - 1.0).abs() < 1e-6);
    }
}
