//! Raw matrix kernels shared by the autodiff ops and the fixed-weight
//! simulator MLPs. Every output element is a sequential dot product, so
//! results are bit-identical whether or not the row loop runs in parallel.

use rayon::prelude::*;

/// Work threshold (multiply-adds) below which parallelism never pays off.
const PAR_THRESHOLD: usize = 1 << 19;

fn parallel_worthwhile(work: usize) -> bool {
    work >= PAR_THRESHOLD && rayon::current_num_threads() > 1
}

/// out[m,n] += a[m,k] · b[k,n]
pub(crate) fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let row = |a_row: &[f64], out_row: &mut [f64]| {
        for (kk, &aik) in a_row.iter().enumerate() {
            let b_row = &b[kk * n..kk * n + n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    };
    if parallel_worthwhile(m * k * n) {
        out.par_chunks_mut(n)
            .zip(a.par_chunks(k))
            .for_each(|(out_row, a_row)| row(a_row, out_row));
    } else {
        for (out_row, a_row) in out.chunks_mut(n).zip(a.chunks(k)) {
            row(a_row, out_row);
        }
    }
}

/// out[m,k] += a[m,n] · b[k,n]ᵀ  (b given row-major as k×n)
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    let row = |a_row: &[f64], out_row: &mut [f64]| {
        for (kk, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[kk * n..kk * n + n];
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *o += acc;
        }
    };
    if parallel_worthwhile(m * n * k) {
        out.par_chunks_mut(k)
            .zip(a.par_chunks(n))
            .for_each(|(out_row, a_row)| row(a_row, out_row));
    } else {
        for (out_row, a_row) in out.chunks_mut(k).zip(a.chunks(n)) {
            row(a_row, out_row);
        }
    }
}

/// out[k,n] += a[m,k]ᵀ · b[m,n]  (a given row-major as m×k)
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    if parallel_worthwhile(m * k * n) {
        out.par_chunks_mut(n).enumerate().for_each(|(kk, out_row)| {
            for i in 0..m {
                let aik = a[i * k + kk];
                let b_row = &b[i * n..i * n + n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += aik * bv;
                }
            }
        });
    } else {
        // Row-major sweep over a and b keeps both streams sequential.
        for i in 0..m {
            let a_row = &a[i * k..i * k + k];
            let b_row = &b[i * n..i * n + n];
            for (kk, &aik) in a_row.iter().enumerate() {
                let out_row = &mut out[kk * n..kk * n + n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += aik * bv;
                }
            }
        }
    }
}
