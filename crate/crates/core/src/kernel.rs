//! Scalar inner kernels shared by retrieval and scoring.

const LANES: usize = 8;

/// Dot product with a fixed 8-lane accumulation order.
///
/// The reduction order depends only on the vector length, so the result is
/// reproducible across threads and platforms, and the lane split lets the
/// compiler vectorize the loop.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let base = c * LANES;
        for l in 0..LANES {
            acc[l] += a[base + l] * b[base + l];
        }
    }
    let mut tail = 0.0f32;
    for k in chunks * LANES..a.len() {
        tail += a[k] * b[k];
    }
    let s0 = (acc[0] + acc[4]) + (acc[1] + acc[5]);
    let s1 = (acc[2] + acc[6]) + (acc[3] + acc[7]);
    (s0 + s1) + tail
}

/// Euclidean norm accumulated in f64.
#[inline]
pub(crate) fn norm_f64(a: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for &x in a {
        s += f64::from(x) * f64::from(x);
    }
    libm::sqrt(s)
}

/// Index and value of the first maximum of `sims` against `v`, over rows of
/// `rows` with stride `dim`. Ties keep the smallest index.
#[inline]
pub(crate) fn argmax_dot(v: &[f32], rows: &[f32], dim: usize) -> (usize, f32) {
    let mut best = (0usize, f32::NEG_INFINITY);
    for (p, row) in rows.chunks_exact(dim).enumerate() {
        let s = dot(v, row);
        if s > best.1 {
            best = (p, s);
        }
    }
    best
}
