//! Elementwise broadcasting over size-1 extents.
//!
//! The hot patterns (same shape, scalar, and a single contiguous block of
//! matching dims as in `[1,C,1,1]` against `[B,C,H,W]`) get dedicated loops;
//! anything else falls back to generic strided iteration.

use crate::error::{Error, Result};

/// Output shape of broadcasting `a` against `b`, or an error when extents
/// disagree and neither is 1. Shorter shapes are left-padded with 1s.
pub fn broadcast_shape(a: &[usize], b: &[usize], op: &'static str) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(Error::shape(op, format!("{:?}", a), format!("{:?}", b)));
        };
    }
    Ok(out)
}

/// Decomposition of a broadcast operand: the operand equals the output shape
/// on one contiguous block of dims and is 1 elsewhere. Iteration is then
/// `outer × mid × inner` with the operand indexed by `mid` alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockMap {
    pub outer: usize,
    pub mid: usize,
    pub inner: usize,
}

/// Returns the block decomposition of `small` against `out`, if it has one.
/// `small` is left-padded with 1s to the rank of `out`.
pub fn block_map(out: &[usize], small: &[usize]) -> Option<BlockMap> {
    let rank = out.len();
    let pad = rank - small.len();
    let dim = |i: usize| if i < pad { 1 } else { small[i - pad] };
    // Find the contiguous run of non-1 dims; they must match `out`.
    let mut first = None;
    let mut last = None;
    for i in 0..rank {
        let d = dim(i);
        if d != 1 {
            if d != out[i] {
                return None;
            }
            if first.is_none() {
                first = Some(i);
            }
            last = Some(i);
        }
    }
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => return Some(BlockMap { outer: 1, mid: 1, inner: out.iter().product() }),
    };
    // Dims strictly inside the run must all match (no embedded 1 that out expands).
    for i in first..=last {
        if dim(i) != out[i] {
            return None;
        }
    }
    let outer: usize = out[..first].iter().product();
    let mid: usize = out[first..=last].iter().product();
    let inner: usize = out[last + 1..].iter().product();
    Some(BlockMap { outer, mid, inner })
}

/// Strides of `shape` when iterated in `out`-space (0 on broadcast dims).
pub fn out_space_strides(out: &[usize], shape: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let pad = rank - shape.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1usize;
    for i in (0..shape.len()).rev() {
        let d = shape[i];
        strides[pad + i] = if d == 1 { 0 } else { acc };
        acc *= d;
    }
    strides
}

/// Generic strided elementwise apply: out[i] = f(a[ia(i)], b[ib(i)]).
pub fn strided_zip(
    out_shape: &[usize],
    a: &[f32],
    a_shape: &[usize],
    b: &[f32],
    b_shape: &[usize],
    out: &mut [f32],
    f: impl Fn(f32, f32) -> f32,
) {
    let rank = out_shape.len();
    let sa = out_space_strides(out_shape, a_shape);
    let sb = out_space_strides(out_shape, b_shape);
    let mut idx = vec![0usize; rank];
    let mut ia = 0usize;
    let mut ib = 0usize;
    for o in out.iter_mut() {
        *o = f(a[ia], b[ib]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            ia -= sa[d] * out_shape[d];
            ib -= sb[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

/// Reduces `g` (laid out as `out_shape`) onto an operand of shape `shape`,
/// summing over broadcast positions in f64. Result has `shape`'s layout.
pub fn reduce_to_shape(g: &[f32], out_shape: &[usize], shape: &[usize]) -> Vec<f32> {
    let n: usize = shape.iter().product();
    let mut acc = vec![0.0f64; n];
    if let Some(bm) = block_map(out_shape, shape) {
        debug_assert_eq!(bm.mid, n);
        for o in 0..bm.outer {
            for m in 0..bm.mid {
                let base = (o * bm.mid + m) * bm.inner;
                let mut s = 0.0f64;
                for v in &g[base..base + bm.inner] {
                    s += *v as f64;
                }
                acc[m] += s;
            }
        }
    } else {
        let rank = out_shape.len();
        let s = out_space_strides(out_shape, shape);
        let mut idx = vec![0usize; rank];
        let mut i = 0usize;
        for v in g.iter() {
            acc[i] += *v as f64;
            for d in (0..rank).rev() {
                idx[d] += 1;
                i += s[d];
                if idx[d] < out_shape[d] {
                    break;
                }
                i -= s[d] * out_shape[d];
                idx[d] = 0;
            }
        }
    }
    acc.into_iter().map(|v| v as f32).collect()
}
