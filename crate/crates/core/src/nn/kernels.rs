//! Batched dense-layer kernels over row-major buffers.
//!
//! Every output element is produced by one fixed sequence of operations, so
//! splitting work across threads never changes a result.

use rayon::prelude::*;

const LANES: usize = 8;
/// Weight-gradient rows accumulated together per pass over the batch.
const ROW_BLOCK: usize = 8;

/// Inner-loop primitives. Each backend performs the same scalar operations in
/// the same order (separate multiply and add, never fused), so switching
/// backends never changes a result.
trait Lanes {
    /// Dot products of `x` with four rows, each an 8-lane accumulation
    /// reduced as `((a0+a1)+(a2+a3))+((a4+a5)+(a6+a7))`, then the tail added.
    fn dot4(x: &[f32], w: [&[f32]; 4]) -> [f32; 4];
    fn dot(x: &[f32], w: &[f32]) -> f32;
    /// `y += g[0]*x[0]`, then `g[1]*x[1]` and so on, per element.
    fn axpy4(y: &mut [f32], g: [f32; 4], x: [&[f32]; 4]);
    fn axpy(y: &mut [f32], g: f32, x: &[f32]);
}

struct Portable;

impl Lanes for Portable {
    #[inline(always)]
    fn dot4(x: &[f32], w: [&[f32]; 4]) -> [f32; 4] {
        w.map(|row| Self::dot(x, row))
    }

    #[inline(always)]
    fn dot(a: &[f32], b: &[f32]) -> f32 {
        let mut acc = [0.0f32; LANES];
        let ca = a.chunks_exact(LANES);
        let cb = b[..a.len()].chunks_exact(LANES);
        let (ra, rb) = (ca.remainder(), cb.remainder());
        for (x, y) in ca.zip(cb) {
            for i in 0..LANES {
                acc[i] += x[i] * y[i];
            }
        }
        let mut tail = 0.0f32;
        for (x, y) in ra.iter().zip(rb) {
            tail += x * y;
        }
        ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
    }

    #[inline(always)]
    fn axpy4(y: &mut [f32], g: [f32; 4], x: [&[f32]; 4]) {
        for (gk, xk) in g.into_iter().zip(x) {
            Self::axpy(y, gk, xk);
        }
    }

    #[inline(always)]
    fn axpy(y: &mut [f32], g: f32, x: &[f32]) {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += g * xi;
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod avx2 {
    use std::arch::x86_64::*;

    use super::{Lanes, LANES};

    pub(super) struct Avx2;

    #[target_feature(enable = "avx2")]
    #[inline]
    fn hsum_tree(v: __m256) -> f32 {
        let mut a = [0.0f32; LANES];
        // SAFETY: `a` holds 8 floats.
        unsafe { _mm256_storeu_ps(a.as_mut_ptr(), v) };
        ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]))
    }

    #[target_feature(enable = "avx2")]
    #[inline]
    fn tail_dot(x: &[f32], w: &[f32]) -> f32 {
        let mut tail = 0.0f32;
        for (a, b) in x.iter().zip(w) {
            tail += a * b;
        }
        tail
    }

    #[target_feature(enable = "avx2")]
    #[inline]
    fn dot4(x: &[f32], w: [&[f32]; 4]) -> [f32; 4] {
        let n = x.len();
        let body = n - n % LANES;
        for row in &w {
            assert!(row.len() >= n);
        }
        let (mut a0, mut a1, mut a2, mut a3) =
            (_mm256_setzero_ps(), _mm256_setzero_ps(), _mm256_setzero_ps(), _mm256_setzero_ps());
        let mut i = 0;
        while i < body {
            // SAFETY: i + 8 <= body <= every row length.
            unsafe {
                let xv = _mm256_loadu_ps(x.as_ptr().add(i));
                a0 = _mm256_add_ps(a0, _mm256_mul_ps(xv, _mm256_loadu_ps(w[0].as_ptr().add(i))));
                a1 = _mm256_add_ps(a1, _mm256_mul_ps(xv, _mm256_loadu_ps(w[1].as_ptr().add(i))));
                a2 = _mm256_add_ps(a2, _mm256_mul_ps(xv, _mm256_loadu_ps(w[2].as_ptr().add(i))));
                a3 = _mm256_add_ps(a3, _mm256_mul_ps(xv, _mm256_loadu_ps(w[3].as_ptr().add(i))));
            }
            i += LANES;
        }
        let xt = &x[body..];
        [
            hsum_tree(a0) + tail_dot(xt, &w[0][body..]),
            hsum_tree(a1) + tail_dot(xt, &w[1][body..]),
            hsum_tree(a2) + tail_dot(xt, &w[2][body..]),
            hsum_tree(a3) + tail_dot(xt, &w[3][body..]),
        ]
    }

    #[target_feature(enable = "avx2")]
    #[inline]
    fn dot(x: &[f32], w: &[f32]) -> f32 {
        let n = x.len();
        let body = n - n % LANES;
        assert!(w.len() >= n);
        let mut acc = _mm256_setzero_ps();
        let mut i = 0;
        while i < body {
            // SAFETY: i + 8 <= body <= both lengths.
            unsafe {
                let p = _mm256_mul_ps(_mm256_loadu_ps(x.as_ptr().add(i)), _mm256_loadu_ps(w.as_ptr().add(i)));
                acc = _mm256_add_ps(acc, p);
            }
            i += LANES;
        }
        hsum_tree(acc) + tail_dot(&x[body..], &w[body..])
    }

    #[target_feature(enable = "avx2")]
    #[inline]
    fn axpy4(y: &mut [f32], g: [f32; 4], x: [&[f32]; 4]) {
        let n = y.len();
        let body = n - n % LANES;
        for row in &x {
            assert!(row.len() >= n);
        }
        let gv = g.map(|v| _mm256_set1_ps(v));
        let mut i = 0;
        while i < body {
            // SAFETY: i + 8 <= body <= every length.
            unsafe {
                let mut v = _mm256_loadu_ps(y.as_ptr().add(i));
                v = _mm256_add_ps(v, _mm256_mul_ps(gv[0], _mm256_loadu_ps(x[0].as_ptr().add(i))));
                v = _mm256_add_ps(v, _mm256_mul_ps(gv[1], _mm256_loadu_ps(x[1].as_ptr().add(i))));
                v = _mm256_add_ps(v, _mm256_mul_ps(gv[2], _mm256_loadu_ps(x[2].as_ptr().add(i))));
                v = _mm256_add_ps(v, _mm256_mul_ps(gv[3], _mm256_loadu_ps(x[3].as_ptr().add(i))));
                _mm256_storeu_ps(y.as_mut_ptr().add(i), v);
            }
            i += LANES;
        }
        if body < n {
            let m = tail_mask(n - body);
            // SAFETY: the mask only enables lanes below every length.
            unsafe {
                let mut v = _mm256_maskload_ps(y.as_ptr().add(body), m);
                for k in 0..4 {
                    v = _mm256_add_ps(v, _mm256_mul_ps(gv[k], _mm256_maskload_ps(x[k].as_ptr().add(body), m)));
                }
                _mm256_maskstore_ps(y.as_mut_ptr().add(body), m, v);
            }
        }
    }

    #[target_feature(enable = "avx2")]
    #[inline]
    fn axpy(y: &mut [f32], g: f32, x: &[f32]) {
        let n = y.len();
        let body = n - n % LANES;
        assert!(x.len() >= n);
        let gv = _mm256_set1_ps(g);
        let mut i = 0;
        while i < body {
            // SAFETY: i + 8 <= body <= both lengths.
            unsafe {
                let v = _mm256_add_ps(_mm256_loadu_ps(y.as_ptr().add(i)), _mm256_mul_ps(gv, _mm256_loadu_ps(x.as_ptr().add(i))));
                _mm256_storeu_ps(y.as_mut_ptr().add(i), v);
            }
            i += LANES;
        }
        if body < n {
            let m = tail_mask(n - body);
            // SAFETY: the mask only enables lanes below both lengths.
            unsafe {
                let v = _mm256_add_ps(_mm256_maskload_ps(y.as_ptr().add(body), m), _mm256_mul_ps(gv, _mm256_maskload_ps(x.as_ptr().add(body), m)));
                _mm256_maskstore_ps(y.as_mut_ptr().add(body), m, v);
            }
        }
    }

    /// Lanes `0..len` enabled.
    #[target_feature(enable = "avx2")]
    #[inline]
    fn tail_mask(len: usize) -> __m256i {
        let idx = _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7);
        _mm256_cmpgt_epi32(_mm256_set1_epi32(len as i32), idx)
    }

    // These are only reached from functions compiled with AVX2 enabled,
    // which are only called after runtime detection.
    impl Lanes for Avx2 {
        #[inline(always)]
        fn dot4(x: &[f32], w: [&[f32]; 4]) -> [f32; 4] {
            unsafe { dot4(x, w) }
        }
        #[inline(always)]
        fn dot(x: &[f32], w: &[f32]) -> f32 {
            unsafe { dot(x, w) }
        }
        #[inline(always)]
        fn axpy4(y: &mut [f32], g: [f32; 4], x: [&[f32]; 4]) {
            unsafe { axpy4(y, g, x) }
        }
        #[inline(always)]
        fn axpy(y: &mut [f32], g: f32, x: &[f32]) {
            unsafe { axpy(y, g, x) }
        }
    }
}

#[inline(always)]
fn forward_row<L: Lanes>(out_row: &mut [f32], x_row: &[f32], w: &[f32], bias: &[f32]) {
    let in_dim = x_row.len();
    let row = |o: usize| &w[o * in_dim..(o + 1) * in_dim];
    let mut o = 0;
    while o + 4 <= out_row.len() {
        let d = L::dot4(x_row, [row(o), row(o + 1), row(o + 2), row(o + 3)]);
        for k in 0..4 {
            out_row[o + k] = d[k] + bias[o + k];
        }
        o += 4;
    }
    for k in o..out_row.len() {
        out_row[k] = L::dot(x_row, row(k)) + bias[k];
    }
}

/// Applies `y += g[i] * row(i)` for every `i` in order, skipping zero
/// coefficients. Nonzero terms are gathered and applied four at a time.
#[inline(always)]
fn accumulate_rows<'a, L: Lanes>(y: &mut [f32], g: &[f32], row: impl Fn(usize) -> &'a [f32]) {
    let mut pending = [0usize; 4];
    let mut count = 0;
    for (i, &gi) in g.iter().enumerate() {
        if gi == 0.0 {
            continue;
        }
        pending[count] = i;
        count += 1;
        if count == 4 {
            let [i0, i1, i2, i3] = pending;
            L::axpy4(y, [g[i0], g[i1], g[i2], g[i3]], [row(i0), row(i1), row(i2), row(i3)]);
            count = 0;
        }
    }
    for &i in &pending[..count] {
        L::axpy(y, g[i], row(i));
    }
}

#[inline(always)]
fn input_grad_row<L: Lanes>(dx_row: &mut [f32], dz_row: &[f32], w: &[f32]) {
    let in_dim = dx_row.len();
    accumulate_rows::<L>(dx_row, dz_row, |o| &w[o * in_dim..(o + 1) * in_dim]);
}

/// Accumulates `dw_block[k] += dzt[first + k][b] * x[b]` over every sample `b`, in order of `b`.
#[inline(always)]
fn param_grad_block<L: Lanes>(dw_block: &mut [f32], dzt: &[f32], x: &[f32], first: usize, rows: usize) {
    let in_dim = x.len() / rows;
    for (k, dw_row) in dw_block.chunks_exact_mut(in_dim).enumerate() {
        let g = &dzt[(first + k) * rows..(first + k + 1) * rows];
        accumulate_rows::<L>(dw_row, g, |b| &x[b * in_dim..(b + 1) * in_dim]);
    }
}

// Each row routine runs through the AVX2 backend when the CPU has it.
macro_rules! dispatch {
    ($name:ident, $inner:ident, ($($arg:ident: $ty:ty),*)) => {
        fn $name($($arg: $ty),*) {
            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx2")]
                fn with_avx2($($arg: $ty),*) {
                    $inner::<avx2::Avx2>($($arg),*)
                }
                if std::arch::is_x86_feature_detected!("avx2") {
                    // SAFETY: the CPU supports AVX2.
                    return unsafe { with_avx2($($arg),*) };
                }
            }
            $inner::<Portable>($($arg),*)
        }
    };
}

dispatch!(forward_run, forward_row, (out_row: &mut [f32], x_row: &[f32], w: &[f32], bias: &[f32]));
dispatch!(input_grad_run, input_grad_row, (dx_row: &mut [f32], dz_row: &[f32], w: &[f32]));
dispatch!(param_grad_run, param_grad_block, (dw_block: &mut [f32], dzt: &[f32], x: &[f32], first: usize, rows: usize));

/// `out[b][o] = dot(x[b], w[o]) + bias[o]`.
pub(crate) fn affine_forward(x: &[f32], in_dim: usize, w: &[f32], bias: &[f32]) -> Vec<f32> {
    let out_dim = bias.len();
    let rows = x.len() / in_dim;
    let mut out = vec![0.0f32; rows * out_dim];
    out.par_chunks_mut(out_dim)
        .zip(x.par_chunks(in_dim))
        .with_min_len(4)
        .for_each(|(out_row, x_row)| forward_run(out_row, x_row, w, bias));
    out
}

/// `dx[b] = sum_o dz[b][o] * w[o]`.
pub(crate) fn affine_backward_input(dz: &[f32], out_dim: usize, w: &[f32], in_dim: usize) -> Vec<f32> {
    let rows = dz.len() / out_dim;
    let mut dx = vec![0.0f32; rows * in_dim];
    dx.par_chunks_mut(in_dim)
        .zip(dz.par_chunks(out_dim))
        .with_min_len(4)
        .for_each(|(dx_row, dz_row)| input_grad_run(dx_row, dz_row, w));
    dx
}

/// Returns `(dw, db)` with `dw[o] = sum_b dz[b][o] * x[b]` and `db[o] = sum_b dz[b][o]`.
pub(crate) fn affine_backward_params(dz: &[f32], out_dim: usize, x: &[f32], in_dim: usize) -> (Vec<f32>, Vec<f32>) {
    let rows = dz.len() / out_dim;
    let mut dzt = vec![0.0f32; out_dim * rows];
    for (b, dz_row) in dz.chunks_exact(out_dim).enumerate() {
        for (o, &g) in dz_row.iter().enumerate() {
            dzt[o * rows + b] = g;
        }
    }
    let db: Vec<f32> = dzt
        .chunks_exact(rows.max(1))
        .map(|col| col.iter().fold(0.0f32, |acc, g| acc + g))
        .collect();
    let db = if rows == 0 { vec![0.0; out_dim] } else { db };

    let mut dw = vec![0.0f32; out_dim * in_dim];
    if rows > 0 {
        dw.par_chunks_mut(ROW_BLOCK * in_dim)
            .enumerate()
            .for_each(|(block, dw_block)| param_grad_run(dw_block, &dzt, x, block * ROW_BLOCK, rows));
    }
    (dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_on_integers() {
        let a: Vec<f32> = (0..19).map(|i| i as f32).collect();
        let b: Vec<f32> = (0..19).map(|i| (i % 5) as f32 - 2.0).collect();
        let naive: f32 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(Portable::dot(&a, &b), naive);
    }

    #[test]
    fn affine_round_trip_shapes() {
        // 2 samples, 3 inputs, 2 outputs
        let x = [1.0, 2.0, 3.0, -1.0, 0.0, 1.0];
        let w = [1.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        let b = [0.5, -0.5];
        assert_eq!(affine_forward(&x, 3, &w, &b), vec![1.5, 4.5, -0.5, 0.5]);
        let dz = [1.0, 0.0, 0.0, 2.0];
        assert_eq!(affine_backward_input(&dz, 2, &w, 3), vec![1.0, 0.0, 0.0, 0.0, 2.0, 2.0]);
        let (dw, db) = affine_backward_params(&dz, 2, &x, 3);
        assert_eq!(dw, vec![1.0, 2.0, 3.0, -2.0, 0.0, 2.0]);
        assert_eq!(db, vec![1.0, 2.0]);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let x: Vec<f32> = (0..64 * 37).map(|i| ((i * 7919) % 113) as f32 / 57.0 - 1.0).collect();
        let w: Vec<f32> = (0..29 * 37).map(|i| ((i * 104729) % 97) as f32 / 50.0 - 1.0).collect();
        let b: Vec<f32> = (0..29).map(|i| i as f32 / 10.0).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                let z = affine_forward(&x, 37, &w, &b);
                let dx = affine_backward_input(&z, 29, &w, 37);
                let (dw, db) = affine_backward_params(&z, 29, &x, 37);
                (z, dx, dw, db)
            })
        };
        assert_eq!(run(1), run(4));
    }

    fn bits(v: &[f32]) -> Vec<u32> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn dispatched_rows_match_portable_rows() {
        // odd sizes exercise the 4-row blocks, the 8-lane body and the tails
        let (rows, in_dim, out_dim) = (11, 61, 45);
        let x: Vec<f32> = (0..rows * in_dim).map(|i| ((i * 7919) % 113) as f32 / 57.0 - 1.0).collect();
        let w: Vec<f32> = (0..out_dim * in_dim).map(|i| ((i * 104729) % 97) as f32 / 50.0 - 1.0).collect();
        // every fifth gradient is zero so the skipping paths run too
        let g: Vec<f32> = (0..out_dim * rows).map(|i| if i % 5 == 0 { 0.0 } else { i as f32 / 37.0 - 3.0 }).collect();

        let (mut a, mut c) = (vec![0.0; out_dim], vec![0.0; out_dim]);
        forward_row::<Portable>(&mut a, &x[..in_dim], &w, &g[..out_dim]);
        forward_run(&mut c, &x[..in_dim], &w, &g[..out_dim]);
        assert_eq!(bits(&a), bits(&c));

        let (mut a, mut c) = (vec![0.5; in_dim], vec![0.5; in_dim]);
        input_grad_row::<Portable>(&mut a, &g[..out_dim], &w);
        input_grad_run(&mut c, &g[..out_dim], &w);
        assert_eq!(bits(&a), bits(&c));

        let (mut a, mut c) = (vec![0.25; 5 * in_dim], vec![0.25; 5 * in_dim]);
        param_grad_block::<Portable>(&mut a, &g, &x, 2, rows);
        param_grad_run(&mut c, &g, &x, 2, rows);
        assert_eq!(bits(&a), bits(&c));
    }
}
