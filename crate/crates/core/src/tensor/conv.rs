//! im2col-based 2D convolution used by the tape ops.

use ndarray::{Array2, ArrayD, ArrayView3, ArrayViewD, Ix3, Ix4};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            dilation: 1,
        }
    }
}

/// Output spatial size of a convolution over an `h x w` input.
pub fn conv2d_shape(h: usize, w: usize, kernel: usize, spec: Conv2dSpec) -> (usize, usize) {
    let span = spec.dilation * (kernel - 1) + 1;
    assert!(
        h + 2 * spec.padding >= span && w + 2 * spec.padding >= span,
        "kernel span {span} exceeds padded input {h}x{w}"
    );
    (
        (h + 2 * spec.padding - span) / spec.stride + 1,
        (w + 2 * spec.padding - span) / spec.stride + 1,
    )
}

/// Lowers an input `C x H x W` to a `(C*K*K) x (Ho*Wo)` patch matrix.
fn im2col(input: ArrayView3<f64>, kernel: usize, spec: Conv2dSpec) -> Array2<f64> {
    let (c, h, w) = input.dim();
    let (oh, ow) = conv2d_shape(h, w, kernel, spec);
    let mut cols = Array2::<f64>::zeros((c * kernel * kernel, oh * ow));
    for ci in 0..c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (ci * kernel + ky) * kernel + kx;
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ky * spec.dilation) as isize
                        - spec.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * spec.stride + kx * spec.dilation) as isize
                            - spec.padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        cols[[row, oy * ow + ox]] = input[[ci, iy as usize, ix as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Transpose of [`im2col`]: scatter-adds patch-matrix gradients back onto the input.
fn col2im(
    cols: &Array2<f64>,
    c: usize,
    h: usize,
    w: usize,
    kernel: usize,
    spec: Conv2dSpec,
) -> ArrayD<f64> {
    let (oh, ow) = conv2d_shape(h, w, kernel, spec);
    let mut out = ArrayD::<f64>::zeros(ndarray::IxDyn(&[c, h, w]));
    for ci in 0..c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (ci * kernel + ky) * kernel + kx;
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ky * spec.dilation) as isize
                        - spec.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * spec.stride + kx * spec.dilation) as isize
                            - spec.padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        out[[ci, iy as usize, ix as usize]] += cols[[row, oy * ow + ox]];
                    }
                }
            }
        }
    }
    out
}

/// Forward convolution: input `C x H x W`, weight `O x C x K x K` -> `O x Ho x Wo`.
pub fn conv2d_forward(
    input: ArrayViewD<f64>,
    weight: ArrayViewD<f64>,
    bias: Option<ArrayViewD<f64>>,
    spec: Conv2dSpec,
) -> ArrayD<f64> {
    let input = input.into_dimensionality::<Ix3>().expect("conv input C x H x W");
    let weight = weight
        .into_dimensionality::<Ix4>()
        .expect("conv weight O x C x K x K");
    let (o, ci, kh, kw) = weight.dim();
    assert_eq!(kh, kw, "square kernels only");
    assert_eq!(ci, input.dim().0, "channel mismatch");
    let (h, w) = (input.dim().1, input.dim().2);
    let (oh, ow) = conv2d_shape(h, w, kh, spec);

    let cols = im2col(input.view(), kh, spec);
    let wmat = weight
        .to_shape((o, ci * kh * kw))
        .expect("weight reshape")
        .to_owned();
    let mut out = wmat.dot(&cols); // O x (Ho*Wo)
    if let Some(b) = bias {
        for (mut row, bv) in out.rows_mut().into_iter().zip(b.iter()) {
            row += *bv;
        }
    }
    out.into_shape_with_order(ndarray::IxDyn(&[o, oh, ow]))
        .expect("conv output reshape")
}

/// Backward convolution: returns (d_input, d_weight, d_bias).
pub fn conv2d_backward(
    input: ArrayViewD<f64>,
    weight: ArrayViewD<f64>,
    grad_out: ArrayViewD<f64>,
    spec: Conv2dSpec,
    want_bias: bool,
) -> (ArrayD<f64>, ArrayD<f64>, Option<ArrayD<f64>>) {
    let input = input.into_dimensionality::<Ix3>().unwrap();
    let weight = weight.into_dimensionality::<Ix4>().unwrap();
    let grad_out = grad_out.into_dimensionality::<Ix3>().unwrap();
    let (o, ci, kh, kw) = weight.dim();
    let (c, h, w) = input.dim();
    let (goh, gow) = (grad_out.dim().1, grad_out.dim().2);

    let cols = im2col(input.view(), kh, spec);
    let gmat = grad_out
        .to_shape((o, goh * gow))
        .expect("grad reshape")
        .to_owned();

    // dW = g . cols^T
    let dw = gmat.dot(&cols.t());
    let dw = dw
        .into_shape_with_order(ndarray::IxDyn(&[o, ci, kh, kw]))
        .unwrap();

    // dInput = col2im(W^T . g)
    let wmat = weight
        .to_shape((o, ci * kh * kw))
        .expect("weight reshape")
        .to_owned();
    let dcols = wmat.t().dot(&gmat);
    let dinput = col2im(&dcols, c, h, w, kh, spec);

    let dbias = want_bias.then(|| {
        let mut db = ArrayD::<f64>::zeros(ndarray::IxDyn(&[o]));
        for oi in 0..o {
            db[[oi]] = gmat.row(oi).sum();
        }
        db
    });

    (dinput, dw, dbias)
}
