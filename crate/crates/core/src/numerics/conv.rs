//! Direct 2D cross-correlation and its two adjoints.
//!
//! The loops are ordered so the innermost one walks a contiguous output row;
//! the range of output positions that read inside the (unpadded) input is
//! computed up front, so padding costs nothing.

use super::Tensor;
use crate::error::{Error, Result};

/// Shapes of one convolution, input `[in_c, in_h, in_w]` and kernels
/// `[out_c, in_c, k, k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        input: [usize; 3],
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let [in_c, in_h, in_w] = input;
        if stride == 0 || k == 0 || out_c == 0 {
            return Err(Error::Precondition(format!(
                "conv needs positive kernel, stride and channels (k={k}, stride={stride}, out={out_c})"
            )));
        }
        if k > in_h + 2 * pad || k > in_w + 2 * pad {
            return Err(Error::Dimension {
                context: "conv2d kernel larger than padded input",
                expected: vec![in_h + 2 * pad, in_w + 2 * pad],
                found: vec![k, k],
            });
        }
        Ok(Self {
            in_c,
            in_h,
            in_w,
            out_c,
            k,
            stride,
            pad,
            out_h: (in_h + 2 * pad - k) / stride + 1,
            out_w: (in_w + 2 * pad - k) / stride + 1,
        })
    }

    pub fn input_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn output_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.in_c * self.k * self.k
    }

    /// Output positions `o` in `[lo, hi)` for which `o*stride + offset - pad`
    /// lands inside `[0, in_len)`.
    fn valid(&self, offset: usize, in_len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride as i64;
        let shift = offset as i64 - self.pad as i64;
        let lo = if shift >= 0 { 0 } else { (-shift + s - 1) / s };
        let hi = (in_len as i64 - shift + s - 1) / s;
        let hi = hi.clamp(0, out_len as i64);
        (lo.min(hi) as usize, hi as usize)
    }
}

/// Cross-correlation of `input` `[C_in,H,W]` with `kernels` `[C_out,C_in,k,k]`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let (is, ks) = (input.shape(), kernels.shape());
    if is.len() != 3 || ks.len() != 4 || ks[1] != is[0] || ks[2] != ks[3] {
        return Err(Error::Dimension {
            context: "conv2d input [C,H,W] vs kernels [O,C,k,k]",
            expected: is.to_vec(),
            found: ks.to_vec(),
        });
    }
    let g = ConvGeometry::new([is[0], is[1], is[2]], ks[0], ks[2], stride, pad)?;
    let mut out = vec![0.0; g.output_len()];
    forward(&g, input.data(), kernels.data(), None, &mut out);
    Tensor::new(vec![g.out_c, g.out_h, g.out_w], out)
}

/// `out = conv(input, weights) + bias`; `out` is overwritten.
pub(crate) fn forward(
    g: &ConvGeometry,
    input: &[f64],
    weights: &[f64],
    bias: Option<&[f64]>,
    out: &mut [f64],
) {
    let plane = g.out_h * g.out_w;
    for oc in 0..g.out_c {
        let o = &mut out[oc * plane..(oc + 1) * plane];
        o.fill(bias.map_or(0.0, |b| b[oc]));
        for ic in 0..g.in_c {
            let inp = &input[ic * g.in_h * g.in_w..(ic + 1) * g.in_h * g.in_w];
            for ky in 0..g.k {
                let (y0, y1) = g.valid(ky, g.in_h, g.out_h);
                for kx in 0..g.k {
                    let w = weights[((oc * g.in_c + ic) * g.k + ky) * g.k + kx];
                    if w == 0.0 {
                        continue;
                    }
                    let (x0, x1) = g.valid(kx, g.in_w, g.out_w);
                    for oy in y0..y1 {
                        let iy = oy * g.stride + ky - g.pad;
                        let row = &inp[iy * g.in_w..(iy + 1) * g.in_w];
                        let orow = &mut o[oy * g.out_w..(oy + 1) * g.out_w];
                        if g.stride == 1 {
                            let ix0 = x0 + kx - g.pad;
                            for (ov, iv) in orow[x0..x1].iter_mut().zip(&row[ix0..]) {
                                *ov += w * iv;
                            }
                        } else {
                            for ox in x0..x1 {
                                orow[ox] += w * row[ox * g.stride + kx - g.pad];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates `dL/dinput` given `dL/dout`.
pub(crate) fn backward_input(
    g: &ConvGeometry,
    grad_out: &[f64],
    weights: &[f64],
    grad_in: &mut [f64],
) {
    let plane = g.out_h * g.out_w;
    for oc in 0..g.out_c {
        let go = &grad_out[oc * plane..(oc + 1) * plane];
        for ic in 0..g.in_c {
            let gi = &mut grad_in[ic * g.in_h * g.in_w..(ic + 1) * g.in_h * g.in_w];
            for ky in 0..g.k {
                let (y0, y1) = g.valid(ky, g.in_h, g.out_h);
                for kx in 0..g.k {
                    let w = weights[((oc * g.in_c + ic) * g.k + ky) * g.k + kx];
                    let (x0, x1) = g.valid(kx, g.in_w, g.out_w);
                    for oy in y0..y1 {
                        let iy = oy * g.stride + ky - g.pad;
                        let row = &mut gi[iy * g.in_w..(iy + 1) * g.in_w];
                        let orow = &go[oy * g.out_w..(oy + 1) * g.out_w];
                        if g.stride == 1 {
                            let ix0 = x0 + kx - g.pad;
                            for (iv, ov) in row[ix0..].iter_mut().zip(&orow[x0..x1]) {
                                *iv += w * ov;
                            }
                        } else {
                            for ox in x0..x1 {
                                row[ox * g.stride + kx - g.pad] += w * orow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates `dL/dweights` and `dL/dbias` given `dL/dout`.
pub(crate) fn backward_params(
    g: &ConvGeometry,
    input: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) {
    let plane = g.out_h * g.out_w;
    for oc in 0..g.out_c {
        let go = &grad_out[oc * plane..(oc + 1) * plane];
        grad_b[oc] += go.iter().sum::<f64>();
        for ic in 0..g.in_c {
            let inp = &input[ic * g.in_h * g.in_w..(ic + 1) * g.in_h * g.in_w];
            for ky in 0..g.k {
                let (y0, y1) = g.valid(ky, g.in_h, g.out_h);
                for kx in 0..g.k {
                    let (x0, x1) = g.valid(kx, g.in_w, g.out_w);
                    let mut acc = 0.0;
                    for oy in y0..y1 {
                        let iy = oy * g.stride + ky - g.pad;
                        let row = &inp[iy * g.in_w..(iy + 1) * g.in_w];
                        let orow = &go[oy * g.out_w..(oy + 1) * g.out_w];
                        if g.stride == 1 {
                            let ix0 = x0 + kx - g.pad;
                            acc += orow[x0..x1]
                                .iter()
                                .zip(&row[ix0..])
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        } else {
                            for ox in x0..x1 {
                                acc += orow[ox] * row[ox * g.stride + kx - g.pad];
                            }
                        }
                    }
                    grad_w[((oc * g.in_c + ic) * g.k + ky) * g.k + kx] += acc;
                }
            }
        }
    }
}
