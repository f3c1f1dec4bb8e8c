//! Forward tape operations and the backward-pass dispatch.

use super::conv::{conv2d_backward, conv2d_forward, conv2d_shape, Conv2dSpec};
use super::{accumulate, Op, Tape, Var};
use ndarray::{Array1, Array2, ArrayD, ArrayViewD, Ix2, Ix3, IxDyn};

/// Cosine distances below a vector norm of this are undefined; such distances
/// are pinned to the maximum (2.0) with zero gradient.
pub(crate) const ZERO_NORM_EPS: f64 = 1e-12;

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).mapv(|v| v * c);
        self.push(value, Op::Scale(a, c))
    }

    /// `a + c * b`, used for loss assembly.
    pub fn add_scaled(&mut self, a: Var, b: Var, c: f64) -> Var {
        let value = self.value(a) + &self.value(b).mapv(|v| v * c);
        self.push(value, Op::AddScaled(a, b, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(value, Op::Sigmoid(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let value = self
            .value(a)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: element count mismatch");
        self.push(value, Op::Reshape(a))
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: Conv2dSpec) -> Var {
        let value = conv2d_forward(
            self.value(input).view(),
            self.value(weight).view(),
            bias.map(|b| self.value(b).view()),
            spec,
        );
        self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            },
        )
    }

    pub fn max_pool2d(&mut self, input: Var, kernel: usize, stride: usize, padding: usize) -> Var {
        let x = self
            .value(input)
            .view()
            .into_dimensionality::<Ix3>()
            .expect("pool input C x H x W");
        let (c, h, w) = x.dim();
        let (oh, ow) = conv2d_shape(
            h,
            w,
            kernel,
            Conv2dSpec {
                stride,
                padding,
                dilation: 1,
            },
        );
        let mut out = ArrayD::<f64>::zeros(IxDyn(&[c, oh, ow]));
        let mut argmax = vec![usize::MAX; c * oh * ow];
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let v = x[[ci, iy as usize, ix as usize]];
                            if v > best {
                                best = v;
                                best_idx = (ci * h + iy as usize) * w + ix as usize;
                            }
                        }
                    }
                    assert!(best_idx != usize::MAX, "pool window fully outside input");
                    out[[ci, oy, ox]] = best;
                    argmax[(ci * oh + oy) * ow + ox] = best_idx;
                }
            }
        }
        self.push(out, Op::MaxPool2d { input, argmax })
    }

    pub fn upsample_bilinear(&mut self, input: Var, out_h: usize, out_w: usize) -> Var {
        let value = upsample_bilinear_array(self.value(input).view(), out_h, out_w);
        self.push(value, Op::UpsampleBilinear { input })
    }

    /// Multiplies `C x H x W` features by an `H x W` weight map.
    pub fn mul_spatial(&mut self, input: Var, weights: Var) -> Var {
        let x = self.value(input).view().into_dimensionality::<Ix3>().unwrap();
        let m = self.value(weights).view().into_dimensionality::<Ix2>().unwrap();
        assert_eq!((x.dim().1, x.dim().2), m.dim(), "spatial shape mismatch");
        let mut out = x.to_owned();
        for mut ch in out.outer_iter_mut() {
            ch *= &m;
        }
        self.push(out.into_dyn(), Op::MulSpatial { input, weights })
    }

    pub fn sum_spatial(&mut self, input: Var) -> Var {
        let x = self.value(input).view().into_dimensionality::<Ix3>().unwrap();
        let c = x.dim().0;
        let mut out = Array1::<f64>::zeros(c);
        for (ci, ch) in x.outer_iter().enumerate() {
            out[ci] = ch.sum();
        }
        self.push(out.into_dyn(), Op::SumSpatial(input))
    }

    pub fn mean_all(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let mean = x.sum() / x.len() as f64;
        self.push(ArrayD::from_elem(IxDyn(&[]), mean), Op::MeanAll(input))
    }

    pub fn sum_all(&mut self, input: Var) -> Var {
        let sum = self.value(input).sum();
        self.push(ArrayD::from_elem(IxDyn(&[]), sum), Op::SumAll(input))
    }

    /// Divides every element of `a` by the scalar variable `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let value = self.value(a).mapv(|v| v / sv);
        self.push(value, Op::DivScalar(a, s))
    }

    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty());
        let d = self.value(rows[0]).len();
        let mut out = Array2::<f64>::zeros((rows.len(), d));
        for (i, &r) in rows.iter().enumerate() {
            let v = self.value(r);
            assert_eq!(v.len(), d, "stack_rows: ragged rows");
            for (j, x) in v.iter().enumerate() {
                out[[i, j]] = *x;
            }
        }
        self.push(out.into_dyn(), Op::StackRows(rows.to_vec()))
    }

    /// Cosine distance field `1 - cos(p_j, F(:,y,x))` for every prototype row
    /// and pixel. Zero-norm vectors yield the maximal distance 2.0 and are
    /// counted in diagnostics.
    pub fn cosine_distance(&mut self, features: Var, protos: Var) -> Var {
        let f = self.value(features).view().into_dimensionality::<Ix3>().unwrap();
        let p = self.value(protos).view().into_dimensionality::<Ix2>().unwrap();
        let (d, h, w) = f.dim();
        let (j, pd) = p.dim();
        assert_eq!(d, pd, "feature/prototype width mismatch");
        let mut out = ArrayD::<f64>::zeros(IxDyn(&[j, h, w]));
        let mut zero_norms = 0u64;
        for y in 0..h {
            for x in 0..w {
                let mut fnorm2 = 0.0;
                for di in 0..d {
                    fnorm2 += f[[di, y, x]] * f[[di, y, x]];
                }
                let fnorm = fnorm2.sqrt();
                for ji in 0..j {
                    let prow = p.row(ji);
                    let pnorm = prow.dot(&prow).sqrt();
                    if fnorm < ZERO_NORM_EPS || pnorm < ZERO_NORM_EPS {
                        out[[ji, y, x]] = 2.0;
                        zero_norms += 1;
                        continue;
                    }
                    let mut dot = 0.0;
                    for di in 0..d {
                        dot += prow[di] * f[[di, y, x]];
                    }
                    out[[ji, y, x]] = 1.0 - dot / (pnorm * fnorm);
                }
            }
        }
        self.diagnostics.zero_norm_distances += zero_norms;
        self.push(out, Op::CosineDistance { features, protos })
    }

    /// Mean softmax cross-entropy of `logits` (`J x H x W`) against per-pixel
    /// targets. Pixels with `valid == false` are excluded from the mean; if no
    /// pixel is valid the loss is 0 with zero gradient.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: Vec<usize>, valid: Vec<bool>) -> Var {
        let z = self.value(logits).view().into_dimensionality::<Ix3>().unwrap();
        let (j, h, w) = z.dim();
        assert_eq!(target.len(), h * w);
        assert_eq!(valid.len(), h * w);
        let mut probs = ArrayD::<f64>::zeros(IxDyn(&[j, h, w]));
        let mut loss = 0.0;
        let mut n_valid = 0usize;
        for y in 0..h {
            for x in 0..w {
                let mut maxz = f64::NEG_INFINITY;
                for ji in 0..j {
                    maxz = maxz.max(z[[ji, y, x]]);
                }
                let mut denom = 0.0;
                for ji in 0..j {
                    denom += (z[[ji, y, x]] - maxz).exp();
                }
                for ji in 0..j {
                    probs[[ji, y, x]] = (z[[ji, y, x]] - maxz).exp() / denom;
                }
                let pix = y * w + x;
                if valid[pix] {
                    let t = target[pix];
                    assert!(t < j, "target class {t} out of range");
                    loss -= probs[[t, y, x]].ln();
                    n_valid += 1;
                }
            }
        }
        if n_valid > 0 {
            loss /= n_valid as f64;
        }
        self.push(
            ArrayD::from_elem(IxDyn(&[]), loss),
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                valid,
                probs,
            },
        )
    }

    /// Builds a stack of Gabor kernels (`N x 1 x K x K`) from per-filter
    /// parameter vectors, differentiable in all five parameters.
    pub fn gabor_kernels(&mut self, params: [Var; 5], kernel_size: usize) -> Var {
        assert!(kernel_size % 2 == 1, "kernel size must be odd");
        let n = self.value(params[0]).len();
        for &p in &params {
            assert_eq!(self.value(p).len(), n, "gabor parameter vectors must align");
        }
        let mut out = ArrayD::<f64>::zeros(IxDyn(&[n, 1, kernel_size, kernel_size]));
        for i in 0..n {
            let gp = crate::texture::GaborParams {
                theta: self.value(params[0])[[i]],
                lambda: self.value(params[1])[[i]],
                psi: self.value(params[2])[[i]],
                sigma: self.value(params[3])[[i]],
                gamma: self.value(params[4])[[i]],
                kernel_size,
            };
            let k = crate::texture::gabor_kernel(&gp);
            for ky in 0..kernel_size {
                for kx in 0..kernel_size {
                    out[[i, 0, ky, kx]] = k[[ky, kx]];
                }
            }
        }
        self.push(
            out,
            Op::GaborKernels {
                params,
                kernel_size,
            },
        )
    }

    pub(crate) fn backprop_node(
        &self,
        idx: usize,
        grad: &ArrayD<f64>,
        grads: &mut Vec<Option<ArrayD<f64>>>,
    ) {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(&mut grads[a.0], grad.clone());
                accumulate(&mut grads[b.0], grad.clone());
            }
            Op::Mul(a, b) => {
                accumulate(&mut grads[a.0], grad * self.value(*b));
                accumulate(&mut grads[b.0], grad * self.value(*a));
            }
            Op::Scale(a, c) => {
                accumulate(&mut grads[a.0], grad.mapv(|v| v * c));
            }
            Op::AddScaled(a, b, c) => {
                accumulate(&mut grads[a.0], grad.clone());
                accumulate(&mut grads[b.0], grad.mapv(|v| v * c));
            }
            Op::Relu(a) => {
                let mask = self.value(*a).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                accumulate(&mut grads[a.0], grad * &mask);
            }
            Op::Reshape(a) => {
                let back = grad
                    .clone()
                    .into_shape_with_order(self.value(*a).raw_dim())
                    .unwrap();
                accumulate(&mut grads[a.0], back);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[idx].value;
                let dy = y * &y.mapv(|v| 1.0 - v);
                accumulate(&mut grads[a.0], grad * &dy);
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            } => {
                let (dinput, dweight, dbias) = conv2d_backward(
                    self.value(*input).view(),
                    self.value(*weight).view(),
                    grad.view(),
                    *spec,
                    bias.is_some(),
                );
                accumulate(&mut grads[input.0], dinput);
                accumulate(&mut grads[weight.0], dweight);
                if let (Some(b), Some(db)) = (bias, dbias) {
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::MaxPool2d { input, argmax, .. } => {
                let mut dinput = ArrayD::<f64>::zeros(self.value(*input).raw_dim());
                let flat = dinput.as_slice_mut().unwrap();
                for (g, &src) in grad.iter().zip(argmax.iter()) {
                    flat[src] += *g;
                }
                accumulate(&mut grads[input.0], dinput);
            }
            Op::UpsampleBilinear { input } => {
                let dinput = upsample_bilinear_backward(
                    grad.view(),
                    self.value(*input).shape()[1],
                    self.value(*input).shape()[2],
                );
                accumulate(&mut grads[input.0], dinput);
            }
            Op::MulSpatial { input, weights } => {
                let x = self.value(*input).view().into_dimensionality::<Ix3>().unwrap();
                let m = self.value(*weights).view().into_dimensionality::<Ix2>().unwrap();
                let g = grad.view().into_dimensionality::<Ix3>().unwrap();
                let mut dx = g.to_owned();
                for mut ch in dx.outer_iter_mut() {
                    ch *= &m;
                }
                let mut dm = Array2::<f64>::zeros(m.dim());
                for (gch, xch) in g.outer_iter().zip(x.outer_iter()) {
                    dm += &(&gch * &xch);
                }
                accumulate(&mut grads[input.0], dx.into_dyn());
                accumulate(&mut grads[weights.0], dm.into_dyn());
            }
            Op::SumSpatial(input) => {
                let shape = self.value(*input).shape().to_vec();
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let mut dx = ArrayD::<f64>::zeros(IxDyn(&[c, h, w]));
                for ci in 0..c {
                    let g = grad[[ci]];
                    for y in 0..h {
                        for x in 0..w {
                            dx[[ci, y, x]] = g;
                        }
                    }
                }
                accumulate(&mut grads[input.0], dx);
            }
            Op::MeanAll(input) => {
                let n = self.value(*input).len() as f64;
                let g = grad.iter().next().copied().unwrap() / n;
                accumulate(
                    &mut grads[input.0],
                    ArrayD::from_elem(self.value(*input).raw_dim(), g),
                );
            }
            Op::SumAll(input) => {
                let g = grad.iter().next().copied().unwrap();
                accumulate(
                    &mut grads[input.0],
                    ArrayD::from_elem(self.value(*input).raw_dim(), g),
                );
            }
            Op::DivScalar(a, s) => {
                let sv = self.scalar(*s);
                accumulate(&mut grads[a.0], grad.mapv(|g| g / sv));
                let a_val = self.value(*a);
                let mut ds = 0.0;
                for (g, av) in grad.iter().zip(a_val.iter()) {
                    ds -= g * av / (sv * sv);
                }
                accumulate(
                    &mut grads[s.0],
                    ArrayD::from_elem(self.value(*s).raw_dim(), ds),
                );
            }
            Op::StackRows(rows) => {
                let g = grad.view().into_dimensionality::<Ix2>().unwrap();
                for (i, &r) in rows.iter().enumerate() {
                    let mut dr = ArrayD::<f64>::zeros(self.value(r).raw_dim());
                    for (slot, gv) in dr.iter_mut().zip(g.row(i).iter()) {
                        *slot = *gv;
                    }
                    accumulate(&mut grads[r.0], dr);
                }
            }
            Op::CosineDistance { features, protos } => {
                let f = self.value(*features).view().into_dimensionality::<Ix3>().unwrap();
                let p = self.value(*protos).view().into_dimensionality::<Ix2>().unwrap();
                let g = grad.view().into_dimensionality::<Ix3>().unwrap();
                let (d, h, w) = f.dim();
                let j = p.dim().0;
                let mut df = ArrayD::<f64>::zeros(IxDyn(&[d, h, w]));
                let mut dp = ArrayD::<f64>::zeros(IxDyn(&[j, d]));
                for y in 0..h {
                    for x in 0..w {
                        let mut fnorm2 = 0.0;
                        for di in 0..d {
                            fnorm2 += f[[di, y, x]] * f[[di, y, x]];
                        }
                        let fnorm = fnorm2.sqrt();
                        if fnorm < ZERO_NORM_EPS {
                            continue;
                        }
                        for ji in 0..j {
                            let gv = g[[ji, y, x]];
                            if gv == 0.0 {
                                continue;
                            }
                            let prow = p.row(ji);
                            let pnorm2 = prow.dot(&prow);
                            let pnorm = pnorm2.sqrt();
                            if pnorm < ZERO_NORM_EPS {
                                continue;
                            }
                            let mut dot = 0.0;
                            for di in 0..d {
                                dot += prow[di] * f[[di, y, x]];
                            }
                            // dist = 1 - dot/(|p||f|)
                            for di in 0..d {
                                let dcos_df = prow[di] / (pnorm * fnorm)
                                    - dot * f[[di, y, x]] / (pnorm * fnorm2 * fnorm);
                                df[[di, y, x]] -= gv * dcos_df;
                                let dcos_dp = f[[di, y, x]] / (pnorm * fnorm)
                                    - dot * prow[di] / (fnorm * pnorm2 * pnorm);
                                dp[[ji, di]] -= gv * dcos_dp;
                            }
                        }
                    }
                }
                accumulate(&mut grads[features.0], df);
                accumulate(&mut grads[protos.0], dp);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                valid,
                probs,
            } => {
                let g = grad.iter().next().copied().unwrap();
                let shape = probs.shape();
                let (j, h, w) = (shape[0], shape[1], shape[2]);
                let n_valid = valid.iter().filter(|v| **v).count();
                let mut dz = ArrayD::<f64>::zeros(IxDyn(&[j, h, w]));
                if n_valid > 0 {
                    let scale = g / n_valid as f64;
                    for y in 0..h {
                        for x in 0..w {
                            let pix = y * w + x;
                            if !valid[pix] {
                                continue;
                            }
                            let t = target[pix];
                            for ji in 0..j {
                                let indicator = if ji == t { 1.0 } else { 0.0 };
                                dz[[ji, y, x]] = scale * (probs[[ji, y, x]] - indicator);
                            }
                        }
                    }
                }
                accumulate(&mut grads[logits.0], dz);
            }
            Op::GaborKernels {
                params,
                kernel_size,
            } => {
                let ks = *kernel_size;
                let n = self.value(params[0]).len();
                let mut dparams = [
                    ArrayD::<f64>::zeros(IxDyn(&[n])),
                    ArrayD::<f64>::zeros(IxDyn(&[n])),
                    ArrayD::<f64>::zeros(IxDyn(&[n])),
                    ArrayD::<f64>::zeros(IxDyn(&[n])),
                    ArrayD::<f64>::zeros(IxDyn(&[n])),
                ];
                let half = (ks / 2) as isize;
                for i in 0..n {
                    let theta = self.value(params[0])[[i]];
                    let lambda = self.value(params[1])[[i]];
                    let psi = self.value(params[2])[[i]];
                    let sigma = self.value(params[3])[[i]];
                    let gamma = self.value(params[4])[[i]];
                    let (st, ct) = theta.sin_cos();
                    for ky in 0..ks {
                        for kx in 0..ks {
                            let gv = grad[[i, 0, ky, kx]];
                            if gv == 0.0 {
                                continue;
                            }
                            let x = (kx as isize - half) as f64;
                            let y = (ky as isize - half) as f64;
                            let xp = x * ct + y * st;
                            let yp = -x * st + y * ct;
                            let env = (-(xp * xp + gamma * gamma * yp * yp)
                                / (2.0 * sigma * sigma))
                                .exp();
                            let arg = 2.0 * std::f64::consts::PI * xp / lambda + psi;
                            let (sin_arg, cos_arg) = arg.sin_cos();
                            // d xp/d theta = yp, d yp/d theta = -xp
                            let denv_dtheta =
                                env * (-(xp * yp * (1.0 - gamma * gamma)) / (sigma * sigma));
                            let darg_dtheta = 2.0 * std::f64::consts::PI * yp / lambda;
                            dparams[0][[i]] +=
                                gv * (denv_dtheta * cos_arg - env * sin_arg * darg_dtheta);
                            let darg_dlambda =
                                -2.0 * std::f64::consts::PI * xp / (lambda * lambda);
                            dparams[1][[i]] += gv * (-env * sin_arg * darg_dlambda);
                            dparams[2][[i]] += gv * (-env * sin_arg);
                            let denv_dsigma = env
                                * ((xp * xp + gamma * gamma * yp * yp)
                                    / (sigma * sigma * sigma));
                            dparams[3][[i]] += gv * denv_dsigma * cos_arg;
                            let denv_dgamma = env * (-(gamma * yp * yp) / (sigma * sigma));
                            dparams[4][[i]] += gv * denv_dgamma * cos_arg;
                        }
                    }
                }
                for (slot, dp) in params.iter().zip(dparams.into_iter()) {
                    accumulate(&mut grads[slot.0], dp);
                }
            }
        }
    }
}

/// Bilinear resampling with the align-corners convention, shared by the tape
/// op and the plain-array entry point. Exact identity when sizes match.
pub fn upsample_bilinear_array(input: ArrayViewD<f64>, out_h: usize, out_w: usize) -> ArrayD<f64> {
    let x = input.into_dimensionality::<Ix3>().expect("upsample input C x H x W");
    let (c, h, w) = x.dim();
    assert!(h > 0 && w > 0 && out_h > 0 && out_w > 0);
    if (h, w) == (out_h, out_w) {
        return x.to_owned().into_dyn();
    }
    let scale_y = if out_h > 1 { (h - 1) as f64 / (out_h - 1) as f64 } else { 0.0 };
    let scale_x = if out_w > 1 { (w - 1) as f64 / (out_w - 1) as f64 } else { 0.0 };
    let mut out = ArrayD::<f64>::zeros(IxDyn(&[c, out_h, out_w]));
    for oy in 0..out_h {
        let sy = oy as f64 * scale_y;
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = ox as f64 * scale_x;
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = sx - x0 as f64;
            for ci in 0..c {
                let v = x[[ci, y0, x0]] * (1.0 - wy) * (1.0 - wx)
                    + x[[ci, y0, x1]] * (1.0 - wy) * wx
                    + x[[ci, y1, x0]] * wy * (1.0 - wx)
                    + x[[ci, y1, x1]] * wy * wx;
                out[[ci, oy, ox]] = v;
            }
        }
    }
    out
}

fn upsample_bilinear_backward(grad: ArrayViewD<f64>, in_h: usize, in_w: usize) -> ArrayD<f64> {
    let g = grad.into_dimensionality::<Ix3>().unwrap();
    let (c, out_h, out_w) = g.dim();
    if (in_h, in_w) == (out_h, out_w) {
        return g.to_owned().into_dyn();
    }
    let scale_y = if out_h > 1 { (in_h - 1) as f64 / (out_h - 1) as f64 } else { 0.0 };
    let scale_x = if out_w > 1 { (in_w - 1) as f64 / (out_w - 1) as f64 } else { 0.0 };
    let mut out = ArrayD::<f64>::zeros(IxDyn(&[c, in_h, in_w]));
    for oy in 0..out_h {
        let sy = oy as f64 * scale_y;
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let wy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = ox as f64 * scale_x;
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let wx = sx - x0 as f64;
            for ci in 0..c {
                let gv = g[[ci, oy, ox]];
                out[[ci, y0, x0]] += gv * (1.0 - wy) * (1.0 - wx);
                out[[ci, y0, x1]] += gv * (1.0 - wy) * wx;
                out[[ci, y1, x0]] += gv * wy * (1.0 - wx);
                out[[ci, y1, x1]] += gv * wy * wx;
            }
        }
    }
    out
}
