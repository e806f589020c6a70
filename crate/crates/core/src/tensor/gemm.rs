//! Matrix-multiply and convolution kernels.
//!
//! All heavy math lands on `matrixmultiply::sgemm`. Convolution is
//! im2col + GEMM; backward recomputes the column buffer instead of saving it.
//! Batch items are processed into disjoint output slices, so the optional
//! parallelism in [`crate::threads`] cannot change results.

use crate::threads;

/// C[m,n] = A[m,k] * B[k,n] (+ C when `accumulate`), row-major.
pub fn matmul(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize, accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// C[m,n] = A^T[m,k] * B[k,n] where A is stored [k,m] row-major.
pub fn matmul_at_b(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize, accumulate: bool) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// C[m,n] = A[m,k] * B^T[k,n] where B is stored [n,k] row-major.
pub fn matmul_a_bt(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize, accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvSpec {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kh) / self.stride + 1
    }
    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kw) / self.stride + 1
    }
    fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }
}

/// Unfolds one image `[c_in, h, w]` into `[c_in*kh*kw, oh*ow]`.
fn im2col(spec: &ConvSpec, x: &[f32], cols: &mut [f32]) {
    let (oh, ow) = (spec.out_h(), spec.out_w());
    debug_assert_eq!(cols.len(), spec.col_rows() * oh * ow);
    let mut row = 0usize;
    for c in 0..spec.c_in {
        let plane = &x[c * spec.h * spec.w..(c + 1) * spec.h * spec.w];
        for kh in 0..spec.kh {
            for kw in 0..spec.kw {
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * spec.stride + kh) as isize - spec.pad as isize;
                    let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= spec.h as isize {
                        dst_row.fill(0.0);
                        continue;
                    }
                    let src_row = &plane[iy as usize * spec.w..(iy as usize + 1) * spec.w];
                    for ox in 0..ow {
                        let ix = (ox * spec.stride + kw) as isize - spec.pad as isize;
                        dst_row[ox] = if ix < 0 || ix >= spec.w as isize {
                            0.0
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Folds `[c_in*kh*kw, oh*ow]` columns back into one image, accumulating.
fn col2im(spec: &ConvSpec, cols: &[f32], x: &mut [f32]) {
    let (oh, ow) = (spec.out_h(), spec.out_w());
    let mut row = 0usize;
    for c in 0..spec.c_in {
        let plane = &mut x[c * spec.h * spec.w..(c + 1) * spec.h * spec.w];
        for kh in 0..spec.kh {
            for kw in 0..spec.kw {
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * spec.stride + kh) as isize - spec.pad as isize;
                    if iy < 0 || iy >= spec.h as isize {
                        continue;
                    }
                    let plane_row = &mut plane[iy as usize * spec.w..(iy as usize + 1) * spec.w];
                    let src_row = &src[oy * ow..(oy + 1) * ow];
                    for ox in 0..ow {
                        let ix = (ox * spec.stride + kw) as isize - spec.pad as isize;
                        if ix >= 0 && ix < spec.w as isize {
                            plane_row[ix as usize] += src_row[ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// y[b] = weight[c_out, c_in*kh*kw] * im2col(x[b]).
pub fn conv2d_forward(spec: &ConvSpec, x: &[f32], weight: &[f32], y: &mut [f32]) {
    let (oh, ow) = (spec.out_h(), spec.out_w());
    let in_stride = spec.c_in * spec.h * spec.w;
    let out_stride = spec.c_out * oh * ow;
    threads::for_each_chunk(y, out_stride, |b, out| {
        let mut cols = vec![0.0f32; spec.col_rows() * oh * ow];
        im2col(spec, &x[b * in_stride..(b + 1) * in_stride], &mut cols);
        matmul(weight, &cols, out, spec.c_out, spec.col_rows(), oh * ow, false);
    });
}

/// Gradients w.r.t. input and weight. `dx` and `dw` are zero-initialized by the caller.
pub fn conv2d_backward(
    spec: &ConvSpec,
    x: &[f32],
    weight: &[f32],
    dy: &[f32],
    dx: Option<&mut [f32]>,
    dw: Option<&mut [f32]>,
) {
    let (oh, ow) = (spec.out_h(), spec.out_w());
    let in_stride = spec.c_in * spec.h * spec.w;
    let out_stride = spec.c_out * oh * ow;
    let col_rows = spec.col_rows();

    if let Some(dx) = dx {
        threads::for_each_chunk(dx, in_stride, |b, dxb| {
            let mut dcols = vec![0.0f32; col_rows * oh * ow];
            matmul_at_b(
                weight,
                &dy[b * out_stride..(b + 1) * out_stride],
                &mut dcols,
                col_rows,
                spec.c_out,
                oh * ow,
                false,
            );
            col2im(spec, &dcols, dxb);
        });
    }

    if let Some(dw) = dw {
        // Per-image partials summed in a fixed order keep dw deterministic.
        let w_len = spec.c_out * col_rows;
        let mut partials = vec![0.0f32; spec.batch * w_len];
        threads::for_each_chunk(&mut partials, w_len, |b, dwb| {
            let mut cols = vec![0.0f32; col_rows * oh * ow];
            im2col(spec, &x[b * in_stride..(b + 1) * in_stride], &mut cols);
            matmul_a_bt(
                &dy[b * out_stride..(b + 1) * out_stride],
                &cols,
                dwb,
                spec.c_out,
                oh * ow,
                col_rows,
                false,
            );
        });
        for b in 0..spec.batch {
            let part = &partials[b * w_len..(b + 1) * w_len];
            for (d, p) in dw.iter_mut().zip(part) {
                *d += *p;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_oracle(spec: &ConvSpec, x: &[f32], w: &[f32]) -> Vec<f32> {
        let (oh, ow) = (spec.out_h(), spec.out_w());
        let mut y = vec![0.0f32; spec.batch * spec.c_out * oh * ow];
        for b in 0..spec.batch {
            for co in 0..spec.c_out {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0f32;
                        for ci in 0..spec.c_in {
                            for kh in 0..spec.kh {
                                for kw in 0..spec.kw {
                                    let iy = (oy * spec.stride + kh) as isize - spec.pad as isize;
                                    let ix = (ox * spec.stride + kw) as isize - spec.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= spec.h as isize || ix >= spec.w as isize {
                                        continue;
                                    }
                                    let xv = x[((b * spec.c_in + ci) * spec.h + iy as usize) * spec.w
                                        + ix as usize];
                                    let wv = w[((co * spec.c_in + ci) * spec.kh + kh) * spec.kw + kw];
                                    acc += xv * wv;
                                }
                            }
                        }
                        y[((b * spec.c_out + co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn matmul_identity() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let id = vec![1.0, 0.0, 0.0, 1.0];
        let mut c = vec![0.0; 4];
        matmul(&a, &id, &mut c, 2, 2, 2, false);
        assert_eq!(c, a);
    }

    #[test]
    fn conv_ones_kernel_counts_coverage() {
        // 3x3 all-ones kernel over 5x5 all-ones input, stride 1, pad 1:
        // interior 9, corners 4.
        let spec = ConvSpec { batch: 1, c_in: 1, h: 5, w: 5, c_out: 1, kh: 3, kw: 3, stride: 1, pad: 1 };
        let x = vec![1.0f32; 25];
        let w = vec![1.0f32; 9];
        let mut y = vec![0.0f32; 25];
        conv2d_forward(&spec, &x, &w, &mut y);
        assert_eq!(y[12], 9.0);
        assert_eq!(y[0], 4.0);
        assert_eq!(y[4], 4.0);
        assert_eq!(y[20], 4.0);
        assert_eq!(y[24], 4.0);
        assert_eq!(y[2], 6.0);
    }

    #[test]
    fn conv_matches_nested_loop_oracle() {
        let mut rng = crate::rng::rng_from_seed(42);
        for &(stride, pad, kh) in &[(1usize, 1usize, 3usize), (2, 1, 3), (1, 0, 1), (2, 0, 2)] {
            let spec = ConvSpec { batch: 2, c_in: 3, h: 8, w: 7, c_out: 4, kh, kw: kh, stride, pad };
            let x = crate::tensor::Tensor::randn(&[spec.batch * spec.c_in * spec.h * spec.w], &mut rng);
            let w = crate::tensor::Tensor::randn(&[spec.c_out * spec.c_in * kh * kh], &mut rng);
            let mut y = vec![0.0f32; spec.batch * spec.c_out * spec.out_h() * spec.out_w()];
            conv2d_forward(&spec, x.data(), w.data(), &mut y);
            let oracle = conv_oracle(&spec, x.data(), w.data());
            for (a, b) in y.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-4, "{} vs {}", a, b);
            }
        }
    }
}
