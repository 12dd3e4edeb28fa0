//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op appends a node holding its forward value. [`Tape::backward`]
//! walks the tape in reverse and returns gradients for every node that
//! depends on a differentiable leaf. Constants (images, detached fakes) never
//! receive gradients, which keeps the first convolution of each network cheap.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
}

impl ConvGeom {
    fn patch_len(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.h_out * self.w_out
    }
}

enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
        // im2col buffer kept for the kernel gradient
        cols: Vec<f64>,
    },
    Upsample2x(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    Tanh(Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddScalar(Var),
    Scale(Var, f64),
    Mean(Var),
    Abs(Var),
    Square(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for later differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `var`, zero-filled when the loss does not reach it.
    pub fn wrt(&self, tape: &Tape, var: Var) -> Vec<f64> {
        match self.get(var) {
            Some(g) => g.to_vec(),
            None => vec![0.0; tape.value(var).numel()],
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf (a parameter, or an input under gradient check).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Which side of zero every input of a piecewise-linear op (relu,
    /// leaky relu, abs) lies on, in tape order.
    pub fn kink_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) | Op::LeakyRelu(x, _) | Op::Abs(x) => Some(x),
                _ => None,
            })
            .flat_map(|x| self.nodes[x.0].value.data().iter().map(|&v| v > 0.0))
            .collect()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Cross-correlation of `input` `[C_in,H,W]` with `kernel` `[C_out,C_in,k,k]`,
    /// plus an optional per-channel bias `[C_out]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let x = self.value(input);
        let kt = self.value(kernel);
        let (xs, ks) = (x.shape(), kt.shape());
        if xs.len() != 3 || ks.len() != 4 {
            return Err(Error::shape(
                "conv2d",
                format!("input {xs:?} must be [C,H,W] and kernel {ks:?} must be [O,C,k,k]"),
            ));
        }
        if ks[1] != xs[0] || ks[2] != ks[3] {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {ks:?} does not match input {xs:?}"),
            ));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
        }
        let (c_in, h, w, c_out, k) = (xs[0], xs[1], xs[2], ks[0], ks[2]);
        if k > h + 2 * padding || k > w + 2 * padding {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {ks:?} larger than padded input {xs:?} (padding {padding})"),
            ));
        }
        if let Some(b) = bias {
            if self.value(b).shape() != [c_out] {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias {:?} must be [{c_out}]", self.value(b).shape()),
                ));
            }
        }
        let geom = ConvGeom {
            c_in,
            h,
            w,
            c_out,
            k,
            stride,
            padding,
            h_out: (h + 2 * padding - k) / stride + 1,
            w_out: (w + 2 * padding - k) / stride + 1,
        };
        let cols = im2col(x.data(), &geom);
        let p = geom.positions();
        let mut out = vec![0.0; c_out * p];
        gemm(
            c_out,
            geom.patch_len(),
            p,
            kt.data(),
            false,
            &cols,
            false,
            &mut out,
            0.0,
        );
        if let Some(b) = bias {
            for (row, &bv) in out.chunks_exact_mut(p).zip(self.value(b).data()) {
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
        let requires =
            self.needs(input) || self.needs(kernel) || bias.is_some_and(|b| self.needs(b));
        let value = Tensor::new(vec![c_out, geom.h_out, geom.w_out], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cols,
            },
            requires,
        ))
    }

    /// Nearest-neighbour ×2 upsampling of a `[C,H,W]` tensor.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() != 3 {
            return Err(Error::shape(
                "upsample2x",
                format!("expected [C,H,W], got {s:?}"),
            ));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let src = xv.data();
        let mut out = vec![0.0; c * 4 * h * w];
        for ch in 0..c {
            for y in 0..2 * h {
                let srow = &src[(ch * h + y / 2) * w..][..w];
                let drow = &mut out[(ch * 2 * h + y) * 2 * w..][..2 * w];
                for (xo, d) in drow.iter_mut().enumerate() {
                    *d = srow[xo / 2];
                }
            }
        }
        let value = Tensor::new(vec![c, 2 * h, 2 * w], out)?;
        let req = self.needs(x);
        Ok(self.push(value, Op::Upsample2x(x), req))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(x).map(f);
        let req = self.needs(x);
        self.push(value, op, req)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, Op::LeakyRelu(x, slope), |v| {
            if v > 0.0 {
                v
            } else {
                slope * v
            }
        })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Op::Abs(x), f64::abs)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + c)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, sign: f64) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                name,
                format!("{:?} vs {:?}", av.shape(), bv.shape()),
            ));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| x + sign * y)
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let req = self.needs(a) || self.needs(b);
        let op = if sign > 0.0 {
            Op::Add(a, b)
        } else {
            Op::Sub(a, b)
        };
        Ok(self.push(value, op, req))
    }

    /// Element-wise sum of equal-shaped tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", 1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", -1.0)
    }

    /// Mean over all elements, as a scalar.
    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let m = xv.data().iter().sum::<f64>() / xv.numel() as f64;
        let req = self.needs(x);
        self.push(Tensor::scalar(m), Op::Mean(x), req)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got shape {:?}", lv.shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => grads[idx] = Some(g),
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    geom,
                    cols,
                } => {
                    let p = geom.positions();
                    let pl = geom.patch_len();
                    if let Some(b) = bias.filter(|b| self.needs(*b)) {
                        let db = g.chunks_exact(p).map(|row| row.iter().sum()).collect();
                        accumulate(&mut grads, b, db);
                    }
                    if self.needs(*kernel) {
                        let mut dk = vec![0.0; geom.c_out * pl];
                        gemm(geom.c_out, p, pl, &g, false, cols, true, &mut dk, 0.0);
                        accumulate(&mut grads, *kernel, dk);
                    }
                    if self.needs(*input) {
                        let mut dcols = vec![0.0; pl * p];
                        let kd = self.value(*kernel).data();
                        gemm(pl, geom.c_out, p, kd, true, &g, false, &mut dcols, 0.0);
                        accumulate(&mut grads, *input, col2im(&dcols, geom));
                    }
                }
                Op::Upsample2x(x) => {
                    let s = self.value(*x).shape();
                    let (c, h, w) = (s[0], s[1], s[2]);
                    let mut dx = vec![0.0; c * h * w];
                    for ch in 0..c {
                        for y in 0..2 * h {
                            let grow = &g[(ch * 2 * h + y) * 2 * w..][..2 * w];
                            let drow = &mut dx[(ch * h + y / 2) * w..][..w];
                            for (xo, gv) in grow.iter().enumerate() {
                                drow[xo / 2] += gv;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::LeakyRelu(x, slope) => {
                    let xs = self.value(*x).data();
                    let dx = zip_map(&g, xs, |g, v| if v > 0.0 { g } else { g * slope });
                    accumulate(&mut grads, *x, dx);
                }
                Op::Relu(x) => {
                    let xs = self.value(*x).data();
                    let dx = zip_map(&g, xs, |g, v| if v > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, *x, dx);
                }
                Op::Tanh(x) => {
                    let ys = node.value.data();
                    let dx = zip_map(&g, ys, |g, y| g * (1.0 - y * y));
                    accumulate(&mut grads, *x, dx);
                }
                Op::Abs(x) => {
                    let xs = self.value(*x).data();
                    let dx = zip_map(&g, xs, |g, v| {
                        if v > 0.0 {
                            g
                        } else if v < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *x, dx);
                }
                Op::Square(x) => {
                    let xs = self.value(*x).data();
                    let dx = zip_map(&g, xs, |g, v| 2.0 * v * g);
                    accumulate(&mut grads, *x, dx);
                }
                Op::AddScalar(x) => {
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::Scale(x, c) => {
                    let dx = g.iter().map(|v| v * c).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let negate = matches!(node.op, Op::Sub(..));
                    if self.needs(*b) {
                        let db = if negate {
                            g.iter().map(|v| -v).collect()
                        } else {
                            g.clone()
                        };
                        accumulate(&mut grads, *b, db);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Mean(x) => {
                    let n = self.value(*x).numel();
                    accumulate(&mut grads, *x, vec![g[0] / n as f64; n]);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Outcome of [`gradient_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    /// Largest relative error, with `max(|analytic|, |numeric|, 1e-6)` as denominator.
    pub max_rel_error: f64,
    /// Entries compared.
    pub checked: usize,
    /// Entries whose ±h probes changed the side of a relu/leaky-relu/abs
    /// kink; central differences are meaningless there, so they are skipped.
    pub skipped_at_kinks: usize,
}

/// Compares [`Tape::backward`] with central finite differences of step `h`
/// for every entry of every input. `build` receives the inputs as
/// differentiable leaves and must return a scalar.
pub fn gradient_check(
    inputs: &[Tensor],
    h: f64,
    build: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
) -> Result<GradientCheck> {
    let eval = |values: &[Tensor]| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.leaf(v.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok((tape, vars, loss))
    };
    let (tape, vars, loss) = eval(inputs)?;
    let grads = tape.backward(loss)?;
    let pattern = tape.kink_pattern();
    let mut report = GradientCheck {
        max_rel_error: 0.0,
        checked: 0,
        skipped_at_kinks: 0,
    };
    let mut probe = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(&tape, *var);
        for j in 0..inputs[i].numel() {
            let x = inputs[i].data()[j];
            let mut side = |v: f64| -> Result<(f64, bool)> {
                probe[i].data_mut()[j] = v;
                let (t, _, l) = eval(&probe)?;
                Ok((t.value(l).item(), t.kink_pattern() == pattern))
            };
            let (up, up_same) = side(x + h)?;
            let (down, down_same) = side(x - h)?;
            probe[i].data_mut()[j] = x;
            if !(up_same && down_same) {
                report.skipped_at_kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            let denom = analytic[j].abs().max(numeric.abs()).max(1e-6);
            report.max_rel_error = report
                .max_rel_error
                .max((analytic[j] - numeric).abs() / denom);
            report.checked += 1;
        }
    }
    Ok(report)
}

fn zip_map(g: &[f64], x: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    g.iter().zip(x).map(|(&g, &x)| f(g, x)).collect()
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
        slot @ None => *slot = Some(delta),
    }
}

fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.positions();
    let mut cols = vec![0.0; g.patch_len() * p];
    for c in 0..g.c_in {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &mut cols[((c * g.k + ki) * g.k + kj) * p..][..p];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..][..g.w];
                    let dst = &mut row[oy * g.w_out..][..g.w_out];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.positions();
    let mut x = vec![0.0; g.c_in * g.h * g.w];
    for c in 0..g.c_in {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &cols[((c * g.k + ki) * g.k + kj) * p..][..p];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut x[(c * g.h + iy as usize) * g.w..][..g.w];
                    let src = &row[oy * g.w_out..][..g.w_out];
                    for (ox, s) in src.iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += s;
                        }
                    }
                }
            }
        }
    }
    x
}

/// Row-major `c = op(a)·op(b) + beta·c` with `op(a)` m×k and `op(b)` k×n.
/// A transposed operand is stored in its untransposed row-major form.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the asserted lengths cover every index reachable through the
    // given strides, and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv_hand_example() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let k = tape.constant(Tensor::filled(&[1, 1, 2, 2], 1.0));
        let y = tape.conv2d(x, k, None, 1, 0).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 1, 1]);
        assert_eq!(tape.value(y).data(), &[10.0]);
    }

    #[test]
    fn conv_identity_and_zero_kernels() {
        let input = Tensor::from_fn(&[1, 5, 4], |i| (i as f64 * 0.37).sin());
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let one = tape.constant(Tensor::filled(&[1, 1, 1, 1], 1.0));
        let zero = tape.constant(Tensor::zeros(&[3, 1, 3, 3]));
        let same = tape.conv2d(x, one, None, 1, 0).unwrap();
        assert_eq!(tape.value(same).data(), input.data());
        let z = tape.conv2d(x, zero, None, 1, 1).unwrap();
        assert_eq!(tape.value(z).shape(), &[3, 5, 4]);
        assert!(tape.value(z).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 4, 4]));
        let k = tape.constant(Tensor::zeros(&[1, 3, 3, 3]));
        let err = tape.conv2d(x, k, None, 1, 1).unwrap_err().to_string();
        assert!(
            err.contains("[1, 3, 3, 3]") && err.contains("[2, 4, 4]"),
            "{err}"
        );
    }

    #[test]
    fn conv_rejects_oversized_kernel() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 2, 2]));
        let k = tape.constant(Tensor::zeros(&[1, 1, 5, 5]));
        assert!(tape.conv2d(x, k, None, 1, 1).is_err());
        assert!(tape.conv2d(x, k, None, 0, 2).is_err());
    }

    #[test]
    fn backward_of_sum_and_square() {
        let mut tape = Tape::new();
        let theta = tape.leaf(t(&[3], &[0.5, -1.0, 2.0]));
        let m = tape.mean(theta);
        let s = tape.scale(m, 3.0);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(theta).unwrap(), &[1.0, 1.0, 1.0]);

        let mut tape = Tape::new();
        let theta = tape.leaf(t(&[2], &[1.0, 2.0]));
        let sq = tape.square(theta);
        let m = tape.mean(sq);
        let s = tape.scale(m, 2.0);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(theta).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let theta = tape.leaf(t(&[2], &[1.0, 2.0]));
        let sq = tape.square(theta);
        assert!(tape.backward(sq).is_err());
    }

    #[test]
    fn unreached_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let used = tape.leaf(t(&[2], &[1.0, 2.0]));
        let unused = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]));
        let loss = tape.mean(used);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.wrt(&tape, unused), vec![0.0; 3]);
    }

    #[test]
    fn shared_leaf_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, -3.0]));
        let y = tape.add(x, x).unwrap();
        let d = tape.sub(y, x).unwrap();
        let loss = tape.mean(d);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn upsample_repeats_pixels() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 2], &[1.0, 2.0]));
        let y = tape.upsample2x(x).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 2, 4]);
        assert_eq!(
            tape.value(y).data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]
        );
    }

    #[test]
    fn add_rejects_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2]));
        let b = tape.constant(Tensor::zeros(&[3]));
        assert!(tape.add(a, b).is_err());
    }
    /// Inputs kept away from the kinks of relu/leaky_relu/abs.
    fn smooth_input(rng: &mut crate::rng::SeededRng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| {
            let v = rng.uniform_range(-1.0, 1.0);
            if v.abs() < 0.05 {
                v.signum() * 0.05 + v
            } else {
                v
            }
        })
    }

    fn squared_error(tape: &mut Tape, out: Var, target: Tensor) -> Result<Var> {
        let t = tape.constant(target);
        let d = tape.sub(out, t)?;
        let sq = tape.square(d);
        Ok(tape.mean(sq))
    }

    #[test]
    fn every_op_matches_finite_differences() {
        for seed in 0..20 {
            let mut rng = crate::rng::SeededRng::new(seed);
            let x = smooth_input(&mut rng, &[2, 5, 4]);
            let target = smooth_input(&mut rng, &[2, 5, 4]);
            type Unary = fn(&mut Tape, Var) -> Var;
            let unary: [(&str, Unary); 7] = [
                ("leaky_relu", |t, v| t.leaky_relu(v, 0.2)),
                ("relu", |t, v| t.relu(v)),
                ("tanh", |t, v| t.tanh(v)),
                ("abs", |t, v| t.abs(v)),
                ("square", |t, v| t.square(v)),
                ("add_scalar", |t, v| t.add_scalar(v, 0.7)),
                ("scale", |t, v| t.scale(v, -1.3)),
            ];
            for (name, op) in unary {
                let err = gradient_check(&[x.clone()], 1e-4, |t, v| {
                    let y = op(t, v[0]);
                    squared_error(t, y, target.clone())
                })
                .unwrap()
                .max_rel_error;
                assert!(err < 1e-3, "{name} seed {seed}: {err}");
            }
            let y = smooth_input(&mut rng, &[2, 5, 4]);
            for (name, sub) in [("add", false), ("sub", true)] {
                let err = gradient_check(&[x.clone(), y.clone()], 1e-4, |t, v| {
                    let z = if sub {
                        t.sub(v[0], v[1])?
                    } else {
                        t.add(v[0], v[1])?
                    };
                    squared_error(t, z, target.clone())
                })
                .unwrap()
                .max_rel_error;
                assert!(err < 1e-3, "{name} seed {seed}: {err}");
            }
            let up_target = smooth_input(&mut rng, &[2, 10, 8]);
            let err = gradient_check(&[x.clone()], 1e-4, |t, v| {
                let u = t.upsample2x(v[0])?;
                squared_error(t, u, up_target.clone())
            })
            .unwrap()
            .max_rel_error;
            assert!(err < 1e-3, "upsample seed {seed}: {err}");
        }
    }

    #[test]
    fn conv_matches_finite_differences() {
        for seed in 0..20u64 {
            let mut rng = crate::rng::SeededRng::new(100 + seed);
            let (stride, padding, k) =
                [(1, 0, 3), (2, 1, 4), (1, 1, 3), (2, 0, 2)][seed as usize % 4];
            let x = smooth_input(&mut rng, &[2, 6, 5]);
            let w = smooth_input(&mut rng, &[3, 2, k, k]);
            let b = smooth_input(&mut rng, &[3]);
            let (ho, wo) = (
                (6 + 2 * padding - k) / stride + 1,
                (5 + 2 * padding - k) / stride + 1,
            );
            let target = smooth_input(&mut rng, &[3, ho, wo]);
            let err = gradient_check(&[x, w, b], 1e-4, |t, v| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), stride, padding)?;
                squared_error(t, y, target.clone())
            })
            .unwrap()
            .max_rel_error;
            assert!(err < 1e-3, "conv seed {seed}: {err}");
        }
    }

    #[test]
    fn probes_across_a_kink_are_skipped() {
        let x = t(&[2], &[1e-5, 0.5]);
        let check = gradient_check(&[x], 1e-4, |tape, v| {
            let a = tape.abs(v[0]);
            Ok(tape.mean(a))
        })
        .unwrap();
        assert_eq!((check.checked, check.skipped_at_kinks), (1, 1));
        assert!(check.max_rel_error < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn conv_output_shape(h in 1usize..12, w in 1usize..12, k in 1usize..5, stride in 1usize..4, padding in 0usize..3) {
            proptest::prop_assume!(k <= h + 2 * padding && k <= w + 2 * padding);
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::zeros(&[2, h, w]));
            let kern = tape.constant(Tensor::zeros(&[3, 2, k, k]));
            let y = tape.conv2d(x, kern, None, stride, padding).unwrap();
            proptest::prop_assert_eq!(
                tape.value(y).shape(),
                &[3, (h + 2 * padding - k) / stride + 1, (w + 2 * padding - k) / stride + 1]
            );
        }
    }
}
