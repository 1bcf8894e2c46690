//! Storage scalar abstraction.
//!
//! Features, cache keys and classifier weights are stored as `S: Scalar`
//! (`f32` or `f64`). Every reduction (dot products, softmax, entropy) is
//! accumulated in `f64` regardless of `S`.

use std::fmt::{Debug, Display};

use num_traits::Float;

/// floating point storage type: f32 or f64
pub trait Scalar: Float + Default + Debug + Display + Send + Sync + 'static {
    /// Short type name used in diagnostics.
    const NAME: &'static str;

    fn as_f64(self) -> f64;

    /// Rounds an `f64` into storage precision.
    fn from_f64_lossy(v: f64) -> Self;

    /// The slice itself when the storage type is already `f64`.
    fn as_f64_slice(s: &[Self]) -> Option<&[f64]>;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }

    fn as_f64_slice(_: &[Self]) -> Option<&[f64]> {
        None
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline(always)]
    fn from_f64_lossy(v: f64) -> Self {
        v
    }

    fn as_f64_slice(s: &[Self]) -> Option<&[f64]> {
        Some(s)
    }
}

/// Dot product with `f64` accumulation.
///
/// Sixteen independent lane accumulators, each a separate multiply then add,
/// are reduced pairwise and then the tail is added. This order is the
/// definition; the SIMD kernels behind [`dot_rows`] and [`dot_tile`]
/// reproduce it exactly, so every path returns bit-identical results.
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    dot_portable(a, b)
}

const LANES: usize = 16;

#[inline(always)]
fn reduce(mut acc: [f64; LANES], tail: f64) -> f64 {
    let mut width = LANES / 2;
    while width > 0 {
        for i in 0..width {
            acc[i] += acc[i + width];
        }
        width /= 2;
    }
    acc[0] + tail
}

#[inline(always)]
fn dot_portable<A: Scalar, B: Scalar>(a: &[A], b: &[B]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] += x[i].as_f64() * y[i].as_f64();
        }
    }
    reduce(acc, tail_sum(ra, rb))
}

#[inline(always)]
fn tail_sum<A: Scalar, B: Scalar>(a: &[A], b: &[B]) -> f64 {
    let mut tail = 0.0;
    for (x, y) in a.iter().zip(b) {
        tail += x.as_f64() * y.as_f64();
    }
    tail
}

/// One `f64` query against one storage row; equals [`dot`] on the same
/// values bit for bit.
#[inline]
pub(crate) fn dot_mixed<S: Scalar>(q: &[f64], row: &[S]) -> f64 {
    debug_assert_eq!(q.len(), row.len());
    dot_portable(q, row)
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use std::arch::x86_64::*;

    use super::{reduce, tail_sum, LANES};

    /// `Q` queries against `R` rows at a time, two 8-lane accumulators per
    /// pair. `emit(query, row, value)`.
    #[inline(always)]
    #[allow(clippy::needless_range_loop)]
    unsafe fn block512<const Q: usize, const R: usize>(
        qs: [&[f64]; Q],
        rows: &[f64],
        first: usize,
        emit: &mut impl FnMut(usize, usize, f64),
    ) {
        let dim = qs[0].len();
        let n = dim / LANES * LANES;
        let rp = rows.as_ptr().add(first * dim);
        let mut acc = [[[_mm512_setzero_pd(); 2]; R]; Q];
        let mut base = 0;
        while base < n {
            let mut x = [[_mm512_setzero_pd(); 2]; Q];
            for (xq, q) in x.iter_mut().zip(&qs) {
                xq[0] = _mm512_loadu_pd(q.as_ptr().add(base));
                xq[1] = _mm512_loadu_pd(q.as_ptr().add(base + 8));
            }
            for r in 0..R {
                let p = rp.add(r * dim + base);
                let y0 = _mm512_loadu_pd(p);
                let y1 = _mm512_loadu_pd(p.add(8));
                for j in 0..Q {
                    acc[j][r][0] = _mm512_add_pd(acc[j][r][0], _mm512_mul_pd(x[j][0], y0));
                    acc[j][r][1] = _mm512_add_pd(acc[j][r][1], _mm512_mul_pd(x[j][1], y1));
                }
            }
            base += LANES;
        }
        for (j, q) in qs.iter().enumerate() {
            for r in 0..R {
                let mut lanes = [0.0f64; LANES];
                _mm512_storeu_pd(lanes.as_mut_ptr(), acc[j][r][0]);
                _mm512_storeu_pd(lanes.as_mut_ptr().add(8), acc[j][r][1]);
                let row = &rows[(first + r) * dim..(first + r + 1) * dim];
                emit(j, first + r, reduce(lanes, tail_sum(&q[n..], &row[n..])));
            }
        }
    }

    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn rows_avx512(q: &[f64], rows: &[f64], mut emit: impl FnMut(usize, f64)) {
        let count = rows.len() / q.len();
        let mut emit = |_: usize, i: usize, v: f64| emit(i, v);
        let mut i = 0;
        while i + 4 <= count {
            block512::<1, 4>([q], rows, i, &mut emit);
            i += 4;
        }
        while i < count {
            block512::<1, 1>([q], rows, i, &mut emit);
            i += 1;
        }
    }

    /// Two queries against every row; `emit(query, row, value)`.
    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn rows_avx512_pair(
        q0: &[f64],
        q1: &[f64],
        rows: &[f64],
        mut emit: impl FnMut(usize, usize, f64),
    ) {
        let count = rows.len() / q0.len();
        let mut i = 0;
        while i + 4 <= count {
            block512::<2, 4>([q0, q1], rows, i, &mut emit);
            i += 4;
        }
        while i < count {
            block512::<2, 1>([q0, q1], rows, i, &mut emit);
            i += 1;
        }
    }

    /// `R` rows at a time against one query, four 4-lane accumulators per row.
    #[inline(always)]
    unsafe fn block256<const R: usize>(q: &[f64], rows: &[f64], first: usize, emit: &mut impl FnMut(usize, f64)) {
        let dim = q.len();
        let n = dim / LANES * LANES;
        let qp = q.as_ptr();
        let rp = rows.as_ptr().add(first * dim);
        let mut acc = [[_mm256_setzero_pd(); 4]; R];
        let mut base = 0;
        while base < n {
            let x = [
                _mm256_loadu_pd(qp.add(base)),
                _mm256_loadu_pd(qp.add(base + 4)),
                _mm256_loadu_pd(qp.add(base + 8)),
                _mm256_loadu_pd(qp.add(base + 12)),
            ];
            for (r, a) in acc.iter_mut().enumerate() {
                let p = rp.add(r * dim + base);
                for k in 0..4 {
                    a[k] = _mm256_add_pd(a[k], _mm256_mul_pd(x[k], _mm256_loadu_pd(p.add(4 * k))));
                }
            }
            base += LANES;
        }
        for (r, a) in acc.iter().enumerate() {
            let mut lanes = [0.0f64; LANES];
            for (k, v) in a.iter().enumerate() {
                _mm256_storeu_pd(lanes.as_mut_ptr().add(4 * k), *v);
            }
            let row = &rows[(first + r) * dim..(first + r + 1) * dim];
            emit(first + r, reduce(lanes, tail_sum(&q[n..], &row[n..])));
        }
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn rows_avx2(q: &[f64], rows: &[f64], mut emit: impl FnMut(usize, f64)) {
        let count = rows.len() / q.len();
        let mut i = 0;
        while i + 2 <= count {
            block256::<2>(q, rows, i, &mut emit);
            i += 2;
        }
        if i < count {
            block256::<1>(q, rows, i, &mut emit);
        }
    }
}

/// Dot products of a query against consecutive `f64` rows, in row order.
#[inline]
fn rows_f64(q: &[f64], rows: &[f64], mut emit: impl FnMut(usize, f64)) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the CPU supports AVX-512F, checked above.
            return unsafe { x86::rows_avx512(q, rows, emit) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked above.
            return unsafe { x86::rows_avx2(q, rows, emit) };
        }
    }
    for (i, row) in rows.chunks_exact(q.len()).enumerate() {
        emit(i, dot_portable(q, row));
    }
}

const TILE_ROWS: usize = 8;

/// Visits `rows` in tiles of [`TILE_ROWS`] rows viewed as `f64`, widening
/// into a scratch buffer when the storage type is narrower.
fn for_each_tile<S: Scalar>(rows: &[S], dim: usize, mut f: impl FnMut(usize, &[f64])) {
    if let Some(wide) = S::as_f64_slice(rows) {
        for (t, tile) in wide.chunks(TILE_ROWS * dim).enumerate() {
            f(t * TILE_ROWS, tile);
        }
        return;
    }
    let mut buf = vec![0.0f64; TILE_ROWS * dim];
    for (t, chunk) in rows.chunks(TILE_ROWS * dim).enumerate() {
        let tile = &mut buf[..chunk.len()];
        for (w, x) in tile.iter_mut().zip(chunk) {
            *w = x.as_f64();
        }
        f(t * TILE_ROWS, tile);
    }
}

/// Dot products of an `f64` query against consecutive rows of width
/// `q.len()`, calling `emit(row_index, value)` in row order.
///
/// `emit(i, v)` receives exactly `dot(query, row_i)` when `query` holds the
/// same values in storage precision.
pub fn dot_rows<S: Scalar>(q: &[f64], rows: &[S], mut emit: impl FnMut(usize, f64)) {
    let dim = q.len();
    if dim == 0 {
        return;
    }
    assert_eq!(rows.len() % dim, 0, "rows are not a multiple of the query width");
    for_each_tile(rows, dim, |first, tile| rows_f64(q, tile, |i, v| emit(first + i, v)));
}

/// All dot products between `B` stacked queries (`B x dim`) and `R` stacked
/// rows (`R x dim`), written row-major into `out` (`B x R`). Rows are
/// visited in cache-sized tiles shared by every query. Each value equals the
/// corresponding [`dot_rows`] result bit for bit.
pub fn dot_tile<S: Scalar>(queries: &[f64], dim: usize, rows: &[S], out: &mut [f64]) {
    assert!(dim > 0 && queries.len().is_multiple_of(dim) && rows.len().is_multiple_of(dim));
    let nrows = rows.len() / dim;
    assert_eq!(out.len(), queries.len() / dim * nrows);
    #[cfg(target_arch = "x86_64")]
    let pairs = std::arch::is_x86_feature_detected!("avx512f");
    #[cfg(not(target_arch = "x86_64"))]
    let pairs = false;
    let count = queries.len() / dim;
    for_each_tile(rows, dim, |first, tile| {
        let mut b = 0;
        #[cfg(target_arch = "x86_64")]
        while pairs && b + 2 <= count {
            let (q0, q1) = (&queries[b * dim..(b + 1) * dim], &queries[(b + 1) * dim..(b + 2) * dim]);
            // SAFETY: `pairs` is only set when the CPU supports AVX-512F.
            unsafe {
                x86::rows_avx512_pair(q0, q1, tile, |j, i, v| out[(b + j) * nrows + first + i] = v);
            }
            b += 2;
        }
        while b < count {
            let dst = &mut out[b * nrows + first..];
            rows_f64(&queries[b * dim..(b + 1) * dim], tile, |i, v| dst[i] = v);
            b += 1;
        }
    });
}

/// Widens a storage vector to `f64`.
pub fn widen<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}
