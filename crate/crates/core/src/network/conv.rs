//! Plain 2-D convolution and stride-2 transposed convolution with explicit
//! reverse-mode derivatives. Weights are laid out `[c_out, c_in, kh, kw]`;
//! activations `[c, row, col]`. Zero padding.

use ndarray::{Array3, Array4};

use crate::float::Real;

/// Output spatial size of a convolution.
pub fn conv_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Output spatial size of the stride-`s` transposed convolution used here
/// (implicit output padding of `s - 1`, so stride 2 exactly doubles).
pub fn deconv_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    stride * (input - 1) + kernel - 2 * pad + (stride - 1)
}

pub fn conv2d<F: Real>(
    input: &Array3<F>,
    weight: &Array4<F>,
    bias: Option<&[F]>,
    stride: usize,
    pad: usize,
) -> Array3<F> {
    let (c_in, h, w) = input.dim();
    let (c_out, c_in_w, kh, kw) = weight.dim();
    debug_assert_eq!(c_in, c_in_w, "input channels must match weight");
    let (oh, ow) = (conv_out_size(h, kh, stride, pad), conv_out_size(w, kw, stride, pad));
    let mut out = Array3::<F>::zeros((c_out, oh, ow));
    for o in 0..c_out {
        if let Some(b) = bias {
            out.index_axis_mut(ndarray::Axis(0), o).fill(b[o]);
        }
        for i in 0..c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = weight[[o, i, ky, kx]];
                    if wv == F::zero() {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = oy * stride + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let iy = iy - pad;
                        for ox in 0..ow {
                            let ix = ox * stride + kx;
                            if ix < pad || ix - pad >= w {
                                continue;
                            }
                            out[[o, oy, ox]] += wv * input[[i, iy, ix - pad]];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradient of the convolution output with respect to its input.
pub fn conv2d_backward_input<F: Real>(
    grad_out: &Array3<F>,
    weight: &Array4<F>,
    input_dim: (usize, usize, usize),
    stride: usize,
    pad: usize,
) -> Array3<F> {
    let (c_in, h, w) = input_dim;
    let (c_out, _, kh, kw) = weight.dim();
    let (_, oh, ow) = grad_out.dim();
    let mut grad_in = Array3::<F>::zeros((c_in, h, w));
    for o in 0..c_out {
        for i in 0..c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = weight[[o, i, ky, kx]];
                    if wv == F::zero() {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = oy * stride + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = ox * stride + kx;
                            if ix < pad || ix - pad >= w {
                                continue;
                            }
                            grad_in[[i, iy - pad, ix - pad]] += wv * grad_out[[o, oy, ox]];
                        }
                    }
                }
            }
        }
    }
    grad_in
}

/// Gradient of the convolution output with respect to the weights.
pub fn conv2d_backward_weight<F: Real>(
    input: &Array3<F>,
    grad_out: &Array3<F>,
    kernel: (usize, usize),
    stride: usize,
    pad: usize,
) -> Array4<F> {
    let (c_in, h, w) = input.dim();
    let (c_out, oh, ow) = grad_out.dim();
    let (kh, kw) = kernel;
    let mut grad_w = Array4::<F>::zeros((c_out, c_in, kh, kw));
    for o in 0..c_out {
        for i in 0..c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    let mut acc = F::zero();
                    for oy in 0..oh {
                        let iy = oy * stride + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = ox * stride + kx;
                            if ix < pad || ix - pad >= w {
                                continue;
                            }
                            acc += grad_out[[o, oy, ox]] * input[[i, iy - pad, ix - pad]];
                        }
                    }
                    grad_w[[o, i, ky, kx]] = acc;
                }
            }
        }
    }
    grad_w
}

pub fn conv2d_backward_bias<F: Real>(grad_out: &Array3<F>) -> Vec<F> {
    let (c_out, _, _) = grad_out.dim();
    (0..c_out)
        .map(|o| grad_out.index_axis(ndarray::Axis(0), o).iter().copied().sum())
        .collect()
}

/// Fractional-stride (transposed) convolution: every input cell scatters a
/// weighted kernel into the upsampled output grid.
pub fn deconv2d<F: Real>(
    input: &Array3<F>,
    weight: &Array4<F>,
    bias: Option<&[F]>,
    stride: usize,
    pad: usize,
) -> Array3<F> {
    let (c_in, h, w) = input.dim();
    let (c_out, c_in_w, kh, kw) = weight.dim();
    debug_assert_eq!(c_in, c_in_w);
    let (oh, ow) = (deconv_out_size(h, kh, stride, pad), deconv_out_size(w, kw, stride, pad));
    let mut out = Array3::<F>::zeros((c_out, oh, ow));
    for o in 0..c_out {
        if let Some(b) = bias {
            out.index_axis_mut(ndarray::Axis(0), o).fill(b[o]);
        }
        for i in 0..c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = weight[[o, i, ky, kx]];
                    if wv == F::zero() {
                        continue;
                    }
                    for y in 0..h {
                        let oy = (y * stride + ky) as isize - pad as isize;
                        if oy < 0 || oy as usize >= oh {
                            continue;
                        }
                        for x in 0..w {
                            let ox = (x * stride + kx) as isize - pad as isize;
                            if ox < 0 || ox as usize >= ow {
                                continue;
                            }
                            out[[o, oy as usize, ox as usize]] += wv * input[[i, y, x]];
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn deconv2d_backward_input<F: Real>(
    grad_out: &Array3<F>,
    weight: &Array4<F>,
    input_dim: (usize, usize, usize),
    stride: usize,
    pad: usize,
) -> Array3<F> {
    let (c_in, h, w) = input_dim;
    let (c_out, _, kh, kw) = weight.dim();
    let (_, oh, ow) = grad_out.dim();
    let mut grad_in = Array3::<F>::zeros((c_in, h, w));
    for o in 0..c_out {
        for i in 0..c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = weight[[o, i, ky, kx]];
                    if wv == F::zero() {
                        continue;
                    }
                    for y in 0..h {
                        let oy = (y * stride + ky) as isize - pad as isize;
                        if oy < 0 || oy as usize >= oh {
                            continue;
                        }
                        for x in 0..w {
                            let ox = (x * stride + kx) as isize - pad as isize;
                            if ox < 0 || ox as usize >= ow {
                                continue;
                            }
                            grad_in[[i, y, x]] += wv * grad_out[[o, oy as usize, ox as usize]];
                        }
                    }
                }
            }
        }
    }
    grad_in
}

pub fn deconv2d_backward_weight<F: Real>(
    input: &Array3<F>,
    grad_out: &Array3<F>,
    kernel: (usize, usize),
    stride: usize,
    pad: usize,
) -> Array4<F> {
    let (c_in, h, w) = input.dim();
    let (c_out, oh, ow) = grad_out.dim();
    let (kh, kw) = kernel;
    let mut grad_w = Array4::<F>::zeros((c_out, c_in, kh, kw));
    for o in 0..c_out {
        for i in 0..c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    let mut acc = F::zero();
                    for y in 0..h {
                        let oy = (y * stride + ky) as isize - pad as isize;
                        if oy < 0 || oy as usize >= oh {
                            continue;
                        }
                        for x in 0..w {
                            let ox = (x * stride + kx) as isize - pad as isize;
                            if ox < 0 || ox as usize >= ow {
                                continue;
                            }
                            acc += grad_out[[o, oy as usize, ox as usize]] * input[[i, y, x]];
                        }
                    }
                    grad_w[[o, i, ky, kx]] = acc;
                }
            }
        }
    }
    grad_w
}
