//! Thin wrapper over `matrixmultiply::sgemm` for row-major operands.
//!
//! The kernel is single-threaded, so the summation order for every output
//! element depends only on the inner dimension and results are reproducible.

macro_rules! row_major_gemm {
    ($name:ident, $t:ty, $kernel:path) => {
        /// `c = a·b + beta·c` where `a` is logically `m×k` and `b` is `k×n`.
        ///
        /// With `a_t` set, `a` is stored as a row-major `k×m` matrix (i.e. the
        /// caller passes `Aᵀ`); likewise `b_t` means `b` is stored `n×k`.
        #[allow(clippy::too_many_arguments)]
        pub(crate) fn $name(
            m: usize,
            k: usize,
            n: usize,
            a: &[$t],
            a_t: bool,
            b: &[$t],
            b_t: bool,
            c: &mut [$t],
            beta: $t,
        ) {
            debug_assert_eq!(a.len(), m * k);
            debug_assert_eq!(b.len(), k * n);
            debug_assert_eq!(c.len(), m * n);
            if m == 0 || n == 0 {
                return;
            }
            if k == 0 {
                for v in c.iter_mut() {
                    *v *= beta;
                }
                return;
            }
            let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
            let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
            // SAFETY: the slices have the asserted lengths and the strides
            // above address exactly those elements.
            unsafe {
                $kernel(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
            }
        }
    };
}

row_major_gemm!(sgemm, f32, matrixmultiply::sgemm);
row_major_gemm!(dgemm, f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f32], b: &[f32]) -> Vec<f32> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, x: &[f32]) -> Vec<f32> {
        let mut t = vec![0.0; x.len()];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = x[i * cols + j];
            }
        }
        t
    }

    #[test]
    fn matches_naive_in_all_transpose_modes() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f32> = (0..m * k).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..k * n).map(|i| (i as f32 * 0.11).cos()).collect();
        let want = naive(m, k, n, &a, &b);
        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        for (aa, ta) in [(&a, false), (&at, true)] {
            for (bb, tb) in [(&b, false), (&bt, true)] {
                let mut c = vec![0.0; m * n];
                sgemm(m, k, n, aa, ta, bb, tb, &mut c, 0.0);
                for (x, y) in c.iter().zip(&want) {
                    assert!((x - y).abs() < 1e-5);
                }
            }
        }
    }
}
