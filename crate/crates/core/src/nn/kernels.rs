//! Dense compute kernels shared by the layer implementations.
//!
//! Everything operates on row-major slices. Inner loops run over the
//! contiguous trailing dimension so the compiler can vectorize them.

use super::tensor::Scalar;

/// c[m,n] += a[m,k] * b[k,n]
pub fn gemm_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == S::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (c_v, &b_v) in c_row.iter_mut().zip(b_row) {
                *c_v = *c_v + a_ip * b_v;
            }
        }
    }
}

/// c[m,n] += a[k,m]^T * b[k,n]
pub fn gemm_tn_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), k * m);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &a_pi) in a_row.iter().enumerate() {
            if a_pi == S::zero() {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (c_v, &b_v) in c_row.iter_mut().zip(b_row) {
                *c_v = *c_v + a_pi * b_v;
            }
        }
    }
}

/// c[m,n] += a[m,k] * b[n,k]^T
pub fn gemm_nt_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), n * k);
    assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (j, c_v) in c_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&a_v, &b_v) in a_row.iter().zip(b_row) {
                acc = acc + a_v * b_v;
            }
            *c_v = *c_v + acc;
        }
    }
}

/// Output spatial size of a convolution along one axis.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

/// Unfold `[channels, h, w]` into a `[channels*k*k, oh*ow]` patch matrix.
pub fn im2col<S: Scalar>(
    input: &[S],
    channels: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    cols: &mut [S],
) {
    let oh = conv_out_dim(h, kernel, stride, padding);
    let ow = conv_out_dim(w, kernel, stride, padding);
    let n = oh * ow;
    assert_eq!(input.len(), channels * h * w);
    assert_eq!(cols.len(), channels * kernel * kernel * n);
    for c in 0..channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = &mut cols[((c * kernel + ki) * kernel + kj) * n..][..n];
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - padding as isize;
                    let out_row = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        for v in out_row.iter_mut() {
                            *v = S::zero();
                        }
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * stride + kj) as isize - padding as isize;
                        *v = if ix < 0 || ix >= w as isize { S::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Scatter-add the patch-matrix gradient back onto the input image.
pub fn col2im_acc<S: Scalar>(
    cols: &[S],
    channels: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    input_grad: &mut [S],
) {
    let oh = conv_out_dim(h, kernel, stride, padding);
    let ow = conv_out_dim(w, kernel, stride, padding);
    let n = oh * ow;
    assert_eq!(cols.len(), channels * kernel * kernel * n);
    assert_eq!(input_grad.len(), channels * h * w);
    for c in 0..channels {
        let plane = &mut input_grad[c * h * w..(c + 1) * h * w];
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = &cols[((c * kernel + ki) * kernel + kj) * n..][..n];
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &row[oy * ow..(oy + 1) * ow];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * stride + kj) as isize - padding as isize;
                        if ix >= 0 && (ix as usize) < w {
                            dst[ix as usize] = dst[ix as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_small_case() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm_acc(&a, &b, &mut c, 2, 2, 2);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_gemms_agree_with_plain() {
        let a = [1.0f64, -2.0, 0.5, 3.0, 4.0, -1.0]; // 2x3
        let b = [2.0, 1.0, 0.0, -1.0, 1.0, 2.0]; // 3x2
        let mut c = [0.0; 4];
        gemm_acc(&a, &b, &mut c, 2, 3, 2);

        // a^T laid out as [3,2] -> gemm_tn with k=3 recovers the same product
        let a_t = [1.0, 3.0, -2.0, 4.0, 0.5, -1.0];
        let mut c_tn = [0.0; 4];
        gemm_tn_acc(&a_t, &b, &mut c_tn, 2, 3, 2);
        assert_eq!(c, c_tn);

        // b^T laid out as [2,3] -> gemm_nt recovers the same product
        let b_t = [2.0, 0.0, 1.0, 1.0, -1.0, 2.0];
        let mut c_nt = [0.0; 4];
        gemm_nt_acc(&a, &b_t, &mut c_nt, 2, 3, 2);
        assert_eq!(c, c_nt);
    }

    #[test]
    fn im2col_col2im_roundtrip_counts_overlaps() {
        // With kernel 2 / stride 1 every interior pixel appears in multiple
        // patches; col2im of all-ones columns must count those multiplicities.
        let (c, h, w, k, s, p) = (1, 3, 3, 2, 1, 0);
        let n = conv_out_dim(h, k, s, p) * conv_out_dim(w, k, s, p);
        let cols = vec![1.0f64; c * k * k * n];
        let mut grad = vec![0.0; c * h * w];
        col2im_acc(&cols, c, h, w, k, s, p, &mut grad);
        assert_eq!(grad, vec![1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn im2col_respects_padding() {
        let input = [1.0f64, 2.0, 3.0, 4.0]; // 1x2x2
        let k = 3;
        let n = conv_out_dim(2, k, 1, 1) * conv_out_dim(2, k, 1, 1);
        let mut cols = vec![f64::NAN; k * k * n];
        im2col(&input, 1, 2, 2, k, 1, 1, &mut cols);
        // center tap of the 3x3 kernel sees the raw image
        let center = &cols[4 * n..5 * n];
        assert_eq!(center, &[1.0, 2.0, 3.0, 4.0]);
        // top-left tap is fully padded except the bottom-right output pixel
        let tl = &cols[0..n];
        assert_eq!(tl, &[0.0, 0.0, 0.0, 1.0]);
    }
}
