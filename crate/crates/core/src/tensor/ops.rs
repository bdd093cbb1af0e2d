//! Differentiable tensor operations.
//!
//! Elementwise binary ops accept: equal shapes, a rank-1 rhs matching the
//! last dimension of a rank-2 lhs (per-column bias), or a one-element rhs.
//! Gradients for a broadcast rhs are reduced over the broadcast rows.

use super::kernels;
use super::{BackwardCtx, Tensor};
use crate::error::{CoreError, Result};

#[derive(Clone, Copy, PartialEq)]
enum Pair {
    Same,
    RhsVector,
    RhsScalar,
}

fn classify(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Pair> {
    if a.shape() == b.shape() {
        return Ok(Pair::Same);
    }
    if b.len() == 1 {
        return Ok(Pair::RhsScalar);
    }
    if a.shape().len() == 2 && b.shape().len() == 1 && b.len() == a.shape()[1] {
        return Ok(Pair::RhsVector);
    }
    Err(CoreError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    })
}

/// Reduce an output-shaped gradient onto a broadcast rhs.
fn reduce_to_rhs(go_scaled: Vec<f64>, pair: Pair, cols: usize) -> Vec<f64> {
    match pair {
        Pair::Same => go_scaled,
        Pair::RhsScalar => vec![go_scaled.iter().sum()],
        Pair::RhsVector => {
            let mut out = vec![0.0; cols];
            for row in go_scaled.chunks(cols) {
                for (o, &g) in out.iter_mut().zip(row) {
                    *o += g;
                }
            }
            out
        }
    }
}

fn binary<FA, FB>(
    name: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: fn(f64, f64) -> f64,
    da: FA,
    db: FB,
) -> Result<Tensor>
where
    FA: Fn(f64, f64) -> f64 + 'static,
    FB: Fn(f64, f64) -> f64 + 'static,
{
    let pair = classify(name, a, b)?;
    let bd = b.data();
    let idx = move |i: usize, cols: usize| match pair {
        Pair::Same => i,
        Pair::RhsScalar => 0,
        Pair::RhsVector => i % cols,
    };
    let cols = if a.shape().len() == 2 { a.shape()[1] } else { a.len().max(1) };
    let data: Vec<f64> = a
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| f(x, bd[idx(i, cols)]))
        .collect();
    Tensor::from_op(
        data,
        a.shape().to_vec(),
        name,
        vec![a.clone(), b.clone()],
        Box::new(move |ctx: &BackwardCtx<'_>| {
            let av = ctx.parents[0].data();
            let bv = ctx.parents[1].data();
            let ga = ctx.needs(0).then(|| {
                ctx.grad_out
                    .iter()
                    .enumerate()
                    .map(|(i, &g)| g * da(av[i], bv[idx(i, cols)]))
                    .collect()
            });
            let gb = ctx.needs(1).then(|| {
                let scaled: Vec<f64> = ctx
                    .grad_out
                    .iter()
                    .enumerate()
                    .map(|(i, &g)| g * db(av[i], bv[idx(i, cols)]))
                    .collect();
                reduce_to_rhs(scaled, pair, cols)
            });
            vec![ga, gb]
        }),
    )
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary("add", a, b, |x, y| x + y, |_, _| 1.0, |_, _| 1.0)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary("sub", a, b, |x, y| x - y, |_, _| 1.0, |_, _| -1.0)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary("mul", a, b, |x, y| x * y, |_, y| y, |x, _| x)
}

pub fn div(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary(
        "div",
        a,
        b,
        |x, y| x / y,
        |_, y| 1.0 / y,
        |x, y| -x / (y * y),
    )
}

fn unary(
    name: &'static str,
    a: &Tensor,
    f: fn(f64) -> f64,
    df: fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let data: Vec<f64> = a.data().iter().map(|&x| f(x)).collect();
    Tensor::from_op(
        data,
        a.shape().to_vec(),
        name,
        vec![a.clone()],
        Box::new(move |ctx: &BackwardCtx<'_>| {
            let av = ctx.parents[0].data();
            let g = ctx.needs(0).then(|| {
                ctx.grad_out
                    .iter()
                    .zip(av.iter().zip(ctx.out_data))
                    .map(|(&g, (&x, &y))| g * df(x, y))
                    .collect()
            });
            vec![g]
        }),
    )
}

pub fn neg(a: &Tensor) -> Result<Tensor> {
    unary("neg", a, |x| -x, |_, _| -1.0)
}

pub fn tanh(a: &Tensor) -> Result<Tensor> {
    unary("tanh", a, libm::tanh, |_, y| 1.0 - y * y)
}

#[inline]
pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn silu(a: &Tensor) -> Result<Tensor> {
    unary(
        "silu",
        a,
        |x| x * sigmoid_scalar(x),
        |x, _| {
            let s = sigmoid_scalar(x);
            s * (1.0 + x * (1.0 - s))
        },
    )
}

pub fn softplus(a: &Tensor) -> Result<Tensor> {
    unary(
        "softplus",
        a,
        |x| {
            if x > 0.0 {
                x + libm::log1p(libm::exp(-x))
            } else {
                libm::log1p(libm::exp(x))
            }
        },
        |x, _| sigmoid_scalar(x),
    )
}

pub fn exp(a: &Tensor) -> Result<Tensor> {
    unary("exp", a, libm::exp, |_, y| y)
}

pub fn log(a: &Tensor) -> Result<Tensor> {
    unary("log", a, libm::log, |x, _| 1.0 / x)
}

pub fn relu(a: &Tensor) -> Result<Tensor> {
    unary(
        "relu",
        a,
        |x| x.max(0.0),
        |x, _| if x > 0.0 { 1.0 } else { 0.0 },
    )
}

/// Elementwise max(x, c); subgradient 0 on the clamped side.
pub fn clamp_min(a: &Tensor, c: f64) -> Result<Tensor> {
    let data: Vec<f64> = a.data().iter().map(|&x| x.max(c)).collect();
    Tensor::from_op(
        data,
        a.shape().to_vec(),
        "clamp_min",
        vec![a.clone()],
        Box::new(move |ctx: &BackwardCtx<'_>| {
            let av = ctx.parents[0].data();
            let g = ctx.needs(0).then(|| {
                ctx.grad_out
                    .iter()
                    .zip(av)
                    .map(|(&g, &x)| if x > c { g } else { 0.0 })
                    .collect()
            });
            vec![g]
        }),
    )
}

/// Multiply by a compile-time constant.
pub fn scale(a: &Tensor, k: f64) -> Result<Tensor> {
    let data: Vec<f64> = a.data().iter().map(|&x| x * k).collect();
    Tensor::from_op(
        data,
        a.shape().to_vec(),
        "scale",
        vec![a.clone()],
        Box::new(move |ctx: &BackwardCtx<'_>| {
            let g = ctx
                .needs(0)
                .then(|| ctx.grad_out.iter().map(|&g| g * k).collect());
            vec![g]
        }),
    )
}

/// Add a constant to every element.
pub fn add_scalar(a: &Tensor, k: f64) -> Result<Tensor> {
    let data: Vec<f64> = a.data().iter().map(|&x| x + k).collect();
    Tensor::from_op(
        data,
        a.shape().to_vec(),
        "add_scalar",
        vec![a.clone()],
        Box::new(move |ctx: &BackwardCtx<'_>| {
            let g = ctx.needs(0).then(|| ctx.grad_out.to_vec());
            vec![g]
        }),
    )
}

/// Matrix product of two rank-2 tensors, (m,k)·(k,n) → (m,n).
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ash, bsh) = (a.shape(), b.shape());
    if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
        return Err(CoreError::ShapeMismatch {
            op: "matmul",
            lhs: ash.to_vec(),
            rhs: bsh.to_vec(),
        });
    }
    let (m, k, n) = (ash[0], ash[1], bsh[1]);
    let mut data = vec![0.0; m * n];
    kernels::matmul_nn(a.data(), b.data(), m, k, n, &mut data);
    Tensor::from_op(
        data,
        vec![m, n],
        "matmul",
        vec![a.clone(), b.clone()],
        Box::new(move |ctx: &BackwardCtx<'_>| {
            let ga = ctx.needs(0).then(|| {
                let mut g = vec![0.0; m * k];
                kernels::matmul_nt(ctx.grad_out, ctx.parents[1].data(), m, n, k, &mut g);
                g
            });
            let gb = ctx.needs(1).then(|| {
                let mut g = vec![0.0; k * n];
                kernels::matmul_tn(ctx.parents[0].data(), ctx.grad_out, m, k, n, &mut g);
                g
            });
            vec![ga, gb]
        }),
    )
}

/// Concatenate rank-2 tensors along the column axis.
pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(CoreError::invalid("concat_cols: no inputs"));
    }
    let rows = parts[0].shape().first().copied().unwrap_or(0);
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        if p.shape().len() != 2 || p.shape()[0] != rows {
            return Err(CoreError::ShapeMismatch {
                op: "concat_cols",
                lhs: parts[0].shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
        widths.push(p.shape()[1]);
    }
    let total: usize = widths.iter().sum();
    let mut data = vec![0.0; rows * total];
    let mut col = 0;
    for (p, &w) in parts.iter().zip(&widths) {
        for r in 0..rows {
            data[r * total + col..r * total + col + w]
                .copy_from_slice(&p.data()[r * w..(r + 1) * w]);
        }
        col += w;
    }
    let widths_bw = widths.clone();
    Tensor::from_op(
        data,
        vec![rows, total],
        "concat_cols",
        parts.to_vec(),
        Box::new(move |ctx: &BackwardCtx<'_>| {
            let mut out = Vec::with_capacity(widths_bw.len());
            let mut col = 0;
            for (i, &w) in widths_bw.iter().enumerate() {
                let g = ctx.needs(i).then(|| {
                    let mut g = vec![0.0; rows * w];
                    for r in 0..rows {
                        g[r * w..(r + 1) * w]
                            .copy_from_slice(&ctx.grad_out[r * total + col..r * total + col + w]);
                    }
                    g
                });
                out.push(g);
                col += w;
            }
            out
        }),
    )
}

/// Columns [start, end) of a rank-2 tensor.
pub fn slice_cols(a: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    if a.shape().len() != 2 || end > a.shape()[1] || start >= end {
        return Err(CoreError::invalid(format!(
            "slice_cols: range {start}..{end} invalid for shape {:?}",
            a.shape()
        )));
    }
    let (rows, cols) = (a.shape()[0], a.shape()[1]);
    let w = end - start;
    let mut data = vec![0.0; rows * w];
    for r in 0..rows {
        data[r * w..(r + 1) * w].copy_from_slice(&a.data()[r * cols + start..r * cols + end]);
    }
    Tensor::from_op(
        data,
        vec![rows, w],
        "slice_cols",
        vec![a.clone()],
        Box::new(move |ctx: &BackwardCtx<'_>| {
            let g = ctx.needs(0).then(|| {
                let mut g = vec![0.0; rows * cols];
                for r in 0..rows {
                    g[r * cols + start..r * cols + end]
                        .copy_from_slice(&ctx.grad_out[r * w..(r + 1) * w]);
                }
                g
            });
            vec![g]
        }),
    )
}

/// Sum over the last axis: (B,M) → (B,), (M,) → scalar.
pub fn sum_last(a: &Tensor) -> Result<Tensor> {
    match a.shape().len() {
        2 => {
            let (rows, cols) = (a.shape()[0], a.shape()[1]);
            let data: Vec<f64> = a.data().chunks(cols).map(|r| r.iter().sum()).collect();
            Tensor::from_op(
                data,
                vec![rows],
                "sum_last",
                vec![a.clone()],
                Box::new(move |ctx: &BackwardCtx<'_>| {
                    let g = ctx.needs(0).then(|| {
                        let mut g = vec![0.0; rows * cols];
                        for (r, chunk) in g.chunks_mut(cols).enumerate() {
                            chunk.fill(ctx.grad_out[r]);
                        }
                        g
                    });
                    vec![g]
                }),
            )
        }
        1 => sum_all(a),
        _ => Err(CoreError::invalid(format!(
            "sum_last: rank {} unsupported",
            a.shape().len()
        ))),
    }
}

/// Sum of all elements, as a scalar tensor.
pub fn sum_all(a: &Tensor) -> Result<Tensor> {
    let n = a.len();
    let data = vec![a.data().iter().sum()];
    Tensor::from_op(
        data,
        vec![],
        "sum_all",
        vec![a.clone()],
        Box::new(move |ctx: &BackwardCtx<'_>| {
            let g = ctx.needs(0).then(|| vec![ctx.grad_out[0]; n]);
            vec![g]
        }),
    )
}

/// Mean of all elements, as a scalar tensor.
pub fn mean_all(a: &Tensor) -> Result<Tensor> {
    if a.is_empty() {
        return Err(CoreError::invalid("mean_all: empty tensor"));
    }
    let n = a.len();
    let data = vec![a.data().iter().sum::<f64>() / n as f64];
    Tensor::from_op(
        data,
        vec![],
        "mean_all",
        vec![a.clone()],
        Box::new(move |ctx: &BackwardCtx<'_>| {
            let g = ctx.needs(0).then(|| vec![ctx.grad_out[0] / n as f64; n]);
            vec![g]
        }),
    )
}
