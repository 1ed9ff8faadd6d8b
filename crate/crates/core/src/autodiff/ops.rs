use super::{adjoint_slot, Extremum, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{strides, Tensor};

impl Tape {
    fn finish(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        value.ensure_finite(op_name)?;
        Ok(self.push(value, op))
    }

    /// Matrix product of `a` (m×k) and `b` (k×n).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = ad[i * k + p];
                for (o, &bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                    *o += aip * bv;
                }
            }
        }
        self.finish("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::invalid("transpose", format!("expected rank 2, got {s:?}")));
        }
        let (r, c) = (s[0], s[1]);
        let d = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        Ok(self.push(Tensor::from_parts(vec![c, r], out), Op::Transpose(x)))
    }

    /// Adds the length-n vector `bias` to every row of the N×n matrix `x`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::Shape {
                op: "add_row_bias",
                left: sx.to_vec(),
                right: sb.to_vec(),
            });
        }
        let n = sb[0];
        let bd = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(n.max(1)) {
            for (o, &b) in row.iter_mut().zip(bd) {
                *o += b;
            }
        }
        let shape = sx.to_vec();
        self.finish("add_row_bias", Tensor::from_parts(shape, out), Op::AddRowBias(x, bias))
    }

    /// Elementwise sum of two equally shaped tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape {
                op: "add",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = sa.to_vec();
        self.finish("add", Tensor::from_parts(shape, out), Op::Add(a, b))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let value = self.value(x).map(|v| scale * v + shift);
        self.finish("affine", value, Op::Affine { x, scale })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let mut sig = 0u64;
        for (i, &v) in self.value(x).data().iter().enumerate() {
            if v > 0.0 {
                sig = sig.rotate_left(7) ^ (i as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
            }
        }
        self.record_branch(sig);
        Ok(self.push(value, Op::Relu(x)))
    }

    /// Maximum or minimum of `x` over `axes`; the reduced axes are removed
    /// from the output shape. The adjoint of each output flows to the first
    /// attaining element of its group.
    pub fn reduce_extrema(&mut self, x: Var, axes: &[usize], mode: Extremum) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if let Some(&bad) = axes.iter().find(|&&a| a >= shape.len()) {
            return Err(Error::invalid(
                "reduce_extrema",
                format!("axis {bad} out of range for shape {shape:?}"),
            ));
        }
        let group: usize = axes.iter().map(|&a| shape[a]).product();
        let out_shape: Vec<usize> = (0..shape.len())
            .filter(|i| !axes.contains(i))
            .map(|i| shape[i])
            .collect();
        let out_len: usize = out_shape.iter().product();
        if group == 0 && out_len > 0 {
            return Err(Error::EmptyReduction {
                op: "reduce_extrema",
                shape,
                axes,
            });
        }

        // Stride of every input axis in the output, zero for reduced axes.
        let out_strides = strides(&out_shape);
        let mut kept = 0;
        let axis_out_stride: Vec<usize> = (0..shape.len())
            .map(|i| {
                if axes.contains(&i) {
                    0
                } else {
                    kept += 1;
                    out_strides[kept - 1]
                }
            })
            .collect();

        let data = self.value(x).data();
        let mut best = vec![0.0; out_len];
        let mut source = vec![usize::MAX; out_len];
        let mut index = vec![0usize; shape.len()];
        let mut out_index = 0usize;
        for (flat, &v) in data.iter().enumerate() {
            let slot = source[out_index];
            let better = slot == usize::MAX
                || match mode {
                    Extremum::Max => v > best[out_index],
                    Extremum::Min => v < best[out_index],
                };
            if better {
                best[out_index] = v;
                source[out_index] = flat;
            }
            // advance the multi-index odometer
            for ax in (0..shape.len()).rev() {
                index[ax] += 1;
                out_index += axis_out_stride[ax];
                if index[ax] < shape[ax] {
                    break;
                }
                out_index -= axis_out_stride[ax] * shape[ax];
                index[ax] = 0;
            }
        }
        let mut sig = match mode {
            Extremum::Max => 1u64,
            Extremum::Min => 2u64,
        };
        for &s in &source {
            sig = sig.wrapping_mul(31).wrapping_add(s as u64);
        }
        self.record_branch(sig);
        Ok(self.push(
            Tensor::from_parts(out_shape, best),
            Op::Extrema { x, source },
        ))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.finish("sum", Tensor::scalar(s), Op::Sum(x))
    }

    /// Sum of squared elements, as a scalar.
    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        self.finish("sum_squares", Tensor::scalar(s), Op::SumSquares(x))
    }

    /// Elementwise square root; inputs must be nonnegative.
    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        if self.value(x).data().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("sqrt", "negative input"));
        }
        let value = self.value(x).map(f64::sqrt);
        self.finish("sqrt", value, Op::Sqrt(x))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// 3×3 cross-correlation with one pixel of zero padding on every border,
    /// plus a per-output-channel bias. Input N×C_in×H×W, kernel
    /// C_out×C_in×3×3, bias C_out; output N×C_out×H×W.
    pub fn conv2d_same(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (sx, sk, sb) = (self.shape(x), self.shape(kernel), self.shape(bias));
        if sx.len() != 4 || sk.len() != 4 || sk[2] != 3 || sk[3] != 3 || sk[1] != sx[1] {
            return Err(Error::Shape {
                op: "conv2d_same",
                left: sx.to_vec(),
                right: sk.to_vec(),
            });
        }
        if sb != [sk[0]] {
            return Err(Error::Shape {
                op: "conv2d_same",
                left: sk.to_vec(),
                right: sb.to_vec(),
            });
        }
        let dims = ConvDims::new(sx, sk);
        let out = conv_forward(
            &dims,
            self.value(x).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        let shape = vec![dims.n, dims.c_out, dims.h, dims.w];
        self.finish(
            "conv2d_same",
            Tensor::from_parts(shape, out),
            Op::Conv2dSame { x, kernel, bias },
        )
    }

    /// Global pooling of N×C×H×W feature maps into N×2C features: the
    /// per-channel spatial maxima followed by the per-channel spatial means.
    pub fn global_max_avg_pool(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || s[2] * s[3] == 0 {
            return Err(Error::invalid(
                "global_max_avg_pool",
                format!("expected nonempty N×C×H×W, got {s:?}"),
            ));
        }
        let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
        let d = self.value(x).data();
        let mut out = vec![0.0; n * 2 * c];
        let mut argmax = vec![0; n * c];
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * hw;
                let plane = &d[base..base + hw];
                let mut best = 0;
                for (k, &v) in plane.iter().enumerate() {
                    if v > plane[best] {
                        best = k;
                    }
                }
                argmax[i * c + ch] = base + best;
                out[i * 2 * c + ch] = plane[best];
                out[i * 2 * c + c + ch] = plane.iter().sum::<f64>() / hw as f64;
            }
        }
        let mut sig = 3u64;
        for &a in &argmax {
            sig = sig.wrapping_mul(31).wrapping_add(a as u64);
        }
        self.record_branch(sig);
        self.finish(
            "global_max_avg_pool",
            Tensor::from_parts(vec![n, 2 * c], out),
            Op::MaxAvgPool { x, argmax },
        )
    }

    /// Mean over the batch of `-ln softmax(logits)[label]`, computed with
    /// max-subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
            return Err(Error::Shape {
                op: "softmax_cross_entropy",
                left: s.to_vec(),
                right: vec![labels.len()],
            });
        }
        let (n, k) = (s[0], s[1]);
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                num_classes: k,
            });
        }
        let d = self.value(logits).data();
        let mut probs = vec![0.0; n * k];
        let mut loss = 0.0;
        for i in 0..n {
            let row = &d[i * k..(i + 1) * k];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|&v| (v - m).exp()).sum();
            let log_z = z.ln();
            for j in 0..k {
                probs[i * k + j] = (row[j] - m).exp() / z;
            }
            loss += log_z - (row[labels[i]] - m);
        }
        loss /= n as f64;
        self.finish(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
        )
    }
}

#[derive(Clone, Copy)]
struct ConvDims {
    n: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
}

impl ConvDims {
    fn new(sx: &[usize], sk: &[usize]) -> Self {
        ConvDims {
            n: sx[0],
            c_in: sx[1],
            c_out: sk[0],
            h: sx[2],
            w: sx[3],
        }
    }
}

/// Valid output column range `[lo, hi)` for kernel offset `k` (0..3) so
/// that the input column `x + k - 1` stays inside `[0, w)`.
fn tap_range(k: usize, w: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    let hi = if k == 2 { w.saturating_sub(1) } else { w };
    (lo.min(hi), hi)
}

fn conv_forward(d: &ConvDims, x: &[f64], k: &[f64], b: &[f64]) -> Vec<f64> {
    let (h, w) = (d.h, d.w);
    let plane = h * w;
    let mut out = vec![0.0; d.n * d.c_out * plane];
    for i in 0..d.n {
        for co in 0..d.c_out {
            let o = &mut out[(i * d.c_out + co) * plane..][..plane];
            o.fill(b[co]);
            for ci in 0..d.c_in {
                let xin = &x[(i * d.c_in + ci) * plane..][..plane];
                let kk = &k[(co * d.c_in + ci) * 9..][..9];
                for ky in 0..3 {
                    let (ylo, yhi) = tap_range(ky, h);
                    for kx in 0..3 {
                        let wgt = kk[ky * 3 + kx];
                        let (xlo, xhi) = tap_range(kx, w);
                        for y in ylo..yhi {
                            let src = (y + ky - 1) * w;
                            let orow = &mut o[y * w + xlo..y * w + xhi];
                            let irow = &xin[src + xlo + kx - 1..src + xhi + kx - 1];
                            for (ov, &iv) in orow.iter_mut().zip(irow) {
                                *ov += wgt * iv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates input, kernel and bias adjoints of a same-padded convolution.
fn conv_backward(
    d: &ConvDims,
    x: &[f64],
    k: &[f64],
    g: &[f64],
    dx: Option<&mut [f64]>,
    dk: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    let (h, w) = (d.h, d.w);
    let plane = h * w;
    if let Some(db) = db {
        for i in 0..d.n {
            for co in 0..d.c_out {
                db[co] += g[(i * d.c_out + co) * plane..][..plane].iter().sum::<f64>();
            }
        }
    }
    let mut dx = dx;
    let mut dk = dk;
    for i in 0..d.n {
        for co in 0..d.c_out {
            let go = &g[(i * d.c_out + co) * plane..][..plane];
            for ci in 0..d.c_in {
                let xoff = (i * d.c_in + ci) * plane;
                let koff = (co * d.c_in + ci) * 9;
                for ky in 0..3 {
                    let (ylo, yhi) = tap_range(ky, h);
                    for kx in 0..3 {
                        let (xlo, xhi) = tap_range(kx, w);
                        let wgt = k[koff + ky * 3 + kx];
                        let mut acc = 0.0;
                        for y in ylo..yhi {
                            // input column of output column c is c + kx - 1
                            let src = xoff + (y + ky - 1) * w + xlo + kx - 1;
                            let len = xhi - xlo;
                            let grow = &go[y * w + xlo..y * w + xhi];
                            if dk.is_some() {
                                let irow = &x[src..src + len];
                                acc += grow.iter().zip(irow).map(|(a, b)| a * b).sum::<f64>();
                            }
                            if let Some(dx) = dx.as_deref_mut() {
                                let drow = &mut dx[src..src + len];
                                for (dv, &gv) in drow.iter_mut().zip(grow) {
                                    *dv += wgt * gv;
                                }
                            }
                        }
                        if let Some(dk) = dk.as_deref_mut() {
                            dk[koff + ky * 3 + kx] += acc;
                        }
                    }
                }
            }
        }
    }
}

/// Adds the contributions of one node's adjoint `adj` into its inputs' slots.
pub(super) fn propagate(
    tape: &Tape,
    op: &Op,
    value: &Tensor,
    adj: &Tensor,
    adjoints: &mut [Option<Tensor>],
) {
    let g = adj.data();
    match op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (tape.value(*a), tape.value(*b));
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            let (ad, bd) = (av.data(), bv.data());
            {
                let da = adjoint_slot(adjoints, *a, av.shape());
                for i in 0..m {
                    for p in 0..k {
                        let brow = &bd[p * n..(p + 1) * n];
                        let grow = &g[i * n..(i + 1) * n];
                        da[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
            let db = adjoint_slot(adjoints, *b, bv.shape());
            for i in 0..m {
                for p in 0..k {
                    let aip = ad[i * k + p];
                    for (dv, &gv) in db[p * n..(p + 1) * n].iter_mut().zip(&g[i * n..(i + 1) * n]) {
                        *dv += aip * gv;
                    }
                }
            }
        }
        Op::Transpose(x) => {
            let (r, c) = (value.shape()[1], value.shape()[0]);
            let dx = adjoint_slot(adjoints, *x, tape.shape(*x));
            for i in 0..r {
                for j in 0..c {
                    dx[i * c + j] += g[j * r + i];
                }
            }
        }
        Op::AddRowBias(x, bias) => {
            add_into(adjoint_slot(adjoints, *x, tape.shape(*x)), g);
            let n = tape.shape(*bias)[0];
            let db = adjoint_slot(adjoints, *bias, tape.shape(*bias));
            for row in g.chunks(n.max(1)) {
                add_into(db, row);
            }
        }
        Op::Add(a, b) => {
            add_into(adjoint_slot(adjoints, *a, tape.shape(*a)), g);
            add_into(adjoint_slot(adjoints, *b, tape.shape(*b)), g);
        }
        Op::Affine { x, scale } => {
            let dx = adjoint_slot(adjoints, *x, tape.shape(*x));
            for (d, &gv) in dx.iter_mut().zip(g) {
                *d += scale * gv;
            }
        }
        Op::Relu(x) => {
            let xd = tape.value(*x).data();
            let dx = adjoint_slot(adjoints, *x, tape.shape(*x));
            for ((d, &gv), &xv) in dx.iter_mut().zip(g).zip(xd) {
                if xv > 0.0 {
                    *d += gv;
                }
            }
        }
        Op::Extrema { x, source } => {
            let dx = adjoint_slot(adjoints, *x, tape.shape(*x));
            for (&s, &gv) in source.iter().zip(g) {
                dx[s] += gv;
            }
        }
        Op::Sum(x) => {
            let dx = adjoint_slot(adjoints, *x, tape.shape(*x));
            for d in dx.iter_mut() {
                *d += g[0];
            }
        }
        Op::SumSquares(x) => {
            let xd = tape.value(*x).data();
            let dx = adjoint_slot(adjoints, *x, tape.shape(*x));
            for (d, &xv) in dx.iter_mut().zip(xd) {
                *d += 2.0 * xv * g[0];
            }
        }
        Op::Sqrt(x) => {
            let dx = adjoint_slot(adjoints, *x, tape.shape(*x));
            for ((d, &gv), &r) in dx.iter_mut().zip(g).zip(value.data()) {
                if r > 0.0 {
                    *d += gv * 0.5 / r;
                }
            }
        }
        Op::Reshape(x) => add_into(adjoint_slot(adjoints, *x, tape.shape(*x)), g),
        Op::Conv2dSame { x, kernel, bias } => {
            let dims = ConvDims::new(tape.shape(*x), tape.shape(*kernel));
            let (xs, ks, bs) = (
                tape.shape(*x).to_vec(),
                tape.shape(*kernel).to_vec(),
                tape.shape(*bias).to_vec(),
            );
            // Each slot is materialized separately to satisfy the borrow checker.
            let mut dx = adjoints[x.0].take().unwrap_or_else(|| Tensor::zeros(&xs));
            let mut dk = adjoints[kernel.0].take().unwrap_or_else(|| Tensor::zeros(&ks));
            let mut db = adjoints[bias.0].take().unwrap_or_else(|| Tensor::zeros(&bs));
            conv_backward(
                &dims,
                tape.value(*x).data(),
                tape.value(*kernel).data(),
                g,
                Some(dx.data_mut()),
                Some(dk.data_mut()),
                Some(db.data_mut()),
            );
            adjoints[x.0] = Some(dx);
            adjoints[kernel.0] = Some(dk);
            adjoints[bias.0] = Some(db);
        }
        Op::MaxAvgPool { x, argmax } => {
            let s = tape.shape(*x).to_vec();
            let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
            let dx = adjoint_slot(adjoints, *x, &s);
            for i in 0..n {
                for ch in 0..c {
                    dx[argmax[i * c + ch]] += g[i * 2 * c + ch];
                    let avg = g[i * 2 * c + c + ch] / hw as f64;
                    let base = (i * c + ch) * hw;
                    for d in &mut dx[base..base + hw] {
                        *d += avg;
                    }
                }
            }
        }
        Op::SoftmaxCrossEntropy {
            logits,
            probs,
            labels,
        } => {
            let n = labels.len();
            let k = probs.len() / n;
            let scale = g[0] / n as f64;
            let dx = adjoint_slot(adjoints, *logits, tape.shape(*logits));
            for i in 0..n {
                for j in 0..k {
                    let onehot = if j == labels[i] { 1.0 } else { 0.0 };
                    dx[i * k + j] += scale * (probs[i * k + j] - onehot);
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
