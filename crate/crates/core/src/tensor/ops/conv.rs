//! 2-D cross-correlation (no kernel flip) via im2col and GEMM.

use crate::error::{Error, Result};
use crate::tensor::tape::{Nodes, Op};
use crate::tensor::{Element, Tensor, Var};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.h_out * self.w_out
    }
}

fn output_extent(axis: &str, size: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = size + 2 * padding;
    if k > padded {
        return Err(Error::Geometry(format!(
            "kernel {axis} extent {k} exceeds padded input extent {padded}"
        )));
    }
    if !(padded - k).is_multiple_of(stride) {
        return Err(Error::Geometry(format!(
            "{axis}: ({size} + 2*{padding} - {k}) is not divisible by stride {stride}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

fn geometry(input: &[usize], kernel: &[usize], bias: &[usize], stride: usize, padding: usize) -> Result<Geometry> {
    if input.len() != 4 {
        return Err(Error::dim("input rank", format!("conv2d expects NCHW input, got {input:?}")));
    }
    if kernel.len() != 4 {
        return Err(Error::dim("kernel rank", format!("expected [Cout,Cin,kH,kW], got {kernel:?}")));
    }
    if stride == 0 {
        return Err(Error::Geometry("stride must be positive".into()));
    }
    let (n, c_in, h, w) = (input[0], input[1], input[2], input[3]);
    let (c_out, k_in, kh, kw) = (kernel[0], kernel[1], kernel[2], kernel[3]);
    if k_in != c_in {
        return Err(Error::dim(
            "channels (axis 1)",
            format!("input has {c_in} channels but kernel expects {k_in}"),
        ));
    }
    if bias != [c_out] {
        return Err(Error::dim("bias", format!("expected [{c_out}], got {bias:?}")));
    }
    let h_out = output_extent("height (axis 2)", h, kh, stride, padding)?;
    let w_out = output_extent("width (axis 3)", w, kw, stride, padding)?;
    Ok(Geometry {
        n,
        c_in,
        h,
        w,
        c_out,
        kh,
        kw,
        stride,
        padding,
        h_out,
        w_out,
    })
}

/// Unfold one image `[Cin,H,W]` into `[Cin*kH*kW, H'*W']`.
fn im2col<T: Element>(g: &Geometry, image: &[T], cols: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.c_in {
        let src = &image[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    let out_row = &mut dst[oy * g.w_out..(oy + 1) * g.w_out];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src_row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        *o = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add columns back onto one image gradient.
fn col2im<T: Element>(g: &Geometry, cols: &[T], image: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.c_in {
        let dst = &mut image[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for ox in 0..g.w_out {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[iy as usize * g.w + ix as usize] =
                                dst[iy as usize * g.w + ix as usize] + src[oy * g.w_out + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<'t, T: Element> Var<'t, T> {
    /// Cross-correlate an NCHW input with `kernel[Cout,Cin,kH,kW]` plus `bias[Cout]`.
    pub fn conv2d(&self, kernel: &Var<'t, T>, bias: &Var<'t, T>, stride: usize, padding: usize) -> Result<Var<'t, T>> {
        self.same_tape(kernel);
        self.same_tape(bias);
        let x = self.value();
        let k = kernel.value();
        let b = bias.value();
        let g = geometry(x.shape(), k.shape(), b.shape(), stride, padding)?;

        let plane = g.out_plane();
        let patch = g.patch();
        let in_size = g.c_in * g.h * g.w;
        let out_size = g.c_out * plane;
        let mut out = vec![T::zero(); g.n * out_size];
        let mut cols = vec![T::zero(); patch * plane];
        for n in 0..g.n {
            im2col(&g, &x.data()[n * in_size..(n + 1) * in_size], &mut cols);
            let dst = &mut out[n * out_size..(n + 1) * out_size];
            for (co, row) in dst.chunks_mut(plane).enumerate() {
                row.fill(b.data()[co]);
            }
            T::gemm(false, false, g.c_out, patch, plane, T::one(), k.data(), &cols, T::one(), dst);
        }
        let value = Tensor::new(vec![g.n, g.c_out, g.h_out, g.w_out], out)?;
        Ok(self.tape().record(
            value,
            Op::Conv2d {
                input: self.id(),
                kernel: kernel.id(),
                bias: bias.id(),
                stride,
                padding,
            },
        ))
    }
}

pub(crate) fn backward<T: Element>(
    input: usize,
    kernel: usize,
    bias: usize,
    stride: usize,
    padding: usize,
    gout: &Tensor<T>,
    nodes: &Nodes<'_, T>,
) -> Vec<(usize, Tensor<T>)> {
    let x = nodes.value(input);
    let k = nodes.value(kernel);
    let g = geometry(x.shape(), k.shape(), &[k.shape()[0]], stride, padding).expect("validated in forward");
    let plane = g.out_plane();
    let patch = g.patch();
    let in_size = g.c_in * g.h * g.w;
    let out_size = g.c_out * plane;

    let mut grads = Vec::with_capacity(3);
    if nodes.needs_grad(bias) {
        let mut db = vec![T::zero(); g.c_out];
        for n in 0..g.n {
            for (co, row) in gout.data()[n * out_size..(n + 1) * out_size].chunks(plane).enumerate() {
                db[co] = db[co] + row.iter().copied().sum::<T>();
            }
        }
        grads.push((bias, Tensor::new(vec![g.c_out], db).expect("bias shape")));
    }

    let want_k = nodes.needs_grad(kernel);
    let want_x = nodes.needs_grad(input);
    if want_k || want_x {
        let mut dk = vec![T::zero(); g.c_out * patch];
        let mut dx = if want_x { vec![T::zero(); x.len()] } else { Vec::new() };
        let mut cols = vec![T::zero(); patch * plane];
        for n in 0..g.n {
            let gy = &gout.data()[n * out_size..(n + 1) * out_size];
            if want_k {
                im2col(&g, &x.data()[n * in_size..(n + 1) * in_size], &mut cols);
                T::gemm(false, true, g.c_out, plane, patch, T::one(), gy, &cols, T::one(), &mut dk);
            }
            if want_x {
                T::gemm(true, false, patch, g.c_out, plane, T::one(), k.data(), gy, T::zero(), &mut cols);
                col2im(&g, &cols, &mut dx[n * in_size..(n + 1) * in_size]);
            }
        }
        if want_k {
            grads.push((kernel, Tensor::new(k.shape().to_vec(), dk).expect("kernel shape")));
        }
        if want_x {
            grads.push((input, Tensor::new(x.shape().to_vec(), dx).expect("input shape")));
        }
    }
    grads
}
