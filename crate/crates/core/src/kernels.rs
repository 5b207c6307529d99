//! Slice-level numeric kernels shared by eager tensors and the tape.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dot product with four independent accumulators. The summation order is
/// fixed, so results are bit-reproducible.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += c * x`
#[inline]
pub fn axpy<T: Scalar>(c: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

pub(crate) fn matvec_dims(op: &'static str, w: &[usize], x: &[usize]) -> Result<(usize, usize)> {
    match (w, x) {
        ([m, n], [k]) if n == k => Ok((*m, *n)),
        _ => Err(Error::ShapeMismatch {
            op,
            left: w.to_vec(),
            right: x.to_vec(),
        }),
    }
}

pub(crate) fn matvec_t_dims(op: &'static str, w: &[usize], y: &[usize]) -> Result<(usize, usize)> {
    match (w, y) {
        ([m, n], [k]) if m == k => Ok((*m, *n)),
        _ => Err(Error::ShapeMismatch {
            op,
            left: w.to_vec(),
            right: y.to_vec(),
        }),
    }
}

/// `out = W x` for row-major `W` of shape `(m, n)`.
pub fn matvec<T: Scalar>(w: &[T], m: usize, n: usize, x: &[T], out: &mut [T]) {
    for (i, o) in out.iter_mut().enumerate().take(m) {
        *o = dot(&w[i * n..(i + 1) * n], x);
    }
}

/// `out += Wᵀ y` for row-major `W` of shape `(m, n)`.
pub fn matvec_t_acc<T: Scalar>(w: &[T], m: usize, n: usize, y: &[T], out: &mut [T]) {
    for i in 0..m {
        axpy(y[i], &w[i * n..(i + 1) * n], &mut out[..n]);
    }
}

/// `W += u vᵀ` for row-major `W` of shape `(u.len(), v.len())`.
pub fn outer_acc<T: Scalar>(u: &[T], v: &[T], w: &mut [T]) {
    let n = v.len();
    for (i, &ui) in u.iter().enumerate() {
        axpy(ui, v, &mut w[i * n..(i + 1) * n]);
    }
}

/// `out += A B` with `A: (m, k)`, `B: (k, n)`.
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        for p in 0..k {
            axpy(a[i * k + p], &b[p * n..(p + 1) * n], &mut out[i * n..(i + 1) * n]);
        }
    }
}

/// `out += Aᵀ B` with `A: (m, k)`, `B: (m, n)`; `out: (k, n)`.
pub fn matmul_tn_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        for p in 0..k {
            axpy(a[i * k + p], &b[i * n..(i + 1) * n], &mut out[p * n..(p + 1) * n]);
        }
    }
}

/// `out += A Bᵀ` with `A: (m, n)`, `B: (k, n)`; `out: (m, k)`.
pub fn matmul_nt_acc<T: Scalar>(a: &[T], b: &[T], m: usize, n: usize, k: usize, out: &mut [T]) {
    for i in 0..m {
        for p in 0..k {
            out[i * k + p] += dot(&a[i * n..(i + 1) * n], &b[p * n..(p + 1) * n]);
        }
    }
}

/// Geometry of a centred "same" convolution.
#[derive(Clone, Copy, Debug)]
pub struct ConvDims {
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvDims {
    pub fn new(image: &[usize], kernel: &[usize]) -> Result<Self> {
        match (image, kernel) {
            ([h, w], [kh, kw]) if kh % 2 == 1 && kw % 2 == 1 => Ok(Self {
                h: *h,
                w: *w,
                kh: *kh,
                kw: *kw,
            }),
            ([_, _], [_, _]) => Err(Error::BadShape {
                op: "conv2d_same",
                msg: "kernel dimensions must be odd",
                shape: kernel.to_vec(),
            }),
            _ => Err(Error::ShapeMismatch {
                op: "conv2d_same",
                left: image.to_vec(),
                right: kernel.to_vec(),
            }),
        }
    }

    /// Calls `f(out_index, in_index, kernel_index)` for every in-bounds tap of
    /// `out[i,j] = Σ_ab K[a,b] x[i + ch - a, j + cw - b]`.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (ch, cw) = ((self.kh / 2) as isize, (self.kw / 2) as isize);
        for i in 0..self.h {
            for j in 0..self.w {
                let o = i * self.w + j;
                for a in 0..self.kh {
                    let si = i as isize + ch - a as isize;
                    if si < 0 || si >= self.h as isize {
                        continue;
                    }
                    for b in 0..self.kw {
                        let sj = j as isize + cw - b as isize;
                        if sj < 0 || sj >= self.w as isize {
                            continue;
                        }
                        f(o, si as usize * self.w + sj as usize, a * self.kw + b);
                    }
                }
            }
        }
    }
}

/// Zero-padded centred convolution (kernel flipped, as in the textbook
/// definition). For symmetric kernels it coincides with correlation.
pub fn conv2d_same<T: Scalar>(dims: ConvDims, x: &[T], k: &[T], out: &mut [T]) {
    out.iter_mut().for_each(|v| *v = T::zero());
    dims.for_each_tap(|o, s, t| out[o] += k[t] * x[s]);
}

/// Adjoint of [`conv2d_same`] in the image argument: correlation with the
/// same kernel, i.e. convolution with the flipped kernel. Accumulates.
pub fn conv2d_same_adjoint_acc<T: Scalar>(dims: ConvDims, g: &[T], k: &[T], out: &mut [T]) {
    dims.for_each_tap(|o, s, t| out[s] += k[t] * g[o]);
}

/// Gradient of `⟨g, conv(x, K)⟩` with respect to `K`. Accumulates.
pub fn conv2d_same_kernel_grad_acc<T: Scalar>(dims: ConvDims, g: &[T], x: &[T], out: &mut [T]) {
    dims.for_each_tap(|o, s, t| out[t] += g[o] * x[s]);
}

/// Forward differences with a zero last difference along each axis.
/// Output layout is `(2, h, w)`: horizontal first, then vertical.
pub fn diff2d<T: Scalar>(h: usize, w: usize, x: &[T], out: &mut [T]) {
    let n = h * w;
    let (dh, dv) = out.split_at_mut(n);
    for i in 0..h {
        for j in 0..w {
            let p = i * w + j;
            dh[p] = if j + 1 < w { x[p + 1] - x[p] } else { T::zero() };
            dv[p] = if i + 1 < h { x[p + w] - x[p] } else { T::zero() };
        }
    }
}

/// Adjoint of [`diff2d`]. Accumulates into `out` of shape `(h, w)`.
pub fn diff2d_adjoint_acc<T: Scalar>(h: usize, w: usize, p: &[T], out: &mut [T]) {
    let n = h * w;
    let (ph, pv) = p.split_at(n);
    for i in 0..h {
        for j in 0..w {
            let q = i * w + j;
            if j + 1 < w {
                out[q + 1] += ph[q];
                out[q] -= ph[q];
            }
            if i + 1 < h {
                out[q + w] += pv[q];
                out[q] -= pv[q];
            }
        }
    }
}
