use super::gemm::gemm;
use super::{Node, Result, Tape, Tensor, TensorError, Var};

/// Reverse rule for an op defined outside this module.
pub trait Backward {
    /// Returns one gradient per input (`None` where the input is not
    /// differentiable), given the upstream gradient of the output.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>>;
}

pub(super) enum Op {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
        trans_a: bool,
        trans_b: bool,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddScalar(usize),
    MulScalar(usize, f64),
    Relu(usize),
    Softplus(usize),
    Sqrt(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    SumAll(usize),
    SumAxis(usize, usize),
    Concat(Vec<usize>, usize),
    Narrow {
        a: usize,
        axis: usize,
        start: usize,
    },
    Gather(usize, Vec<usize>),
    Reshape(usize),
    LogSoftmax(usize),
    Pick(usize, Vec<usize>),
    MaxLast(usize, Vec<usize>),
    ScaleRows(usize, Vec<f64>),
    Custom(Vec<usize>, Box<dyn Backward>),
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

/// Output shape of a leading-dimension broadcast, or an error.
fn broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let (big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if big[big.len() - small.len()..] == *small {
        Ok(big.to_vec())
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        })
    }
}

/// Sums `g` (of the broadcast output length) back down to `len` entries.
fn reduce_to(g: &[f64], len: usize) -> Vec<f64> {
    if g.len() == len {
        return g.to_vec();
    }
    let mut out = vec![0.0; len];
    for chunk in g.chunks(len) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    out
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn last_dim(op: &'static str, shape: &[usize]) -> Result<(usize, usize)> {
    match shape.last() {
        Some(&c) => Ok((shape.iter().product::<usize>() / c, c)),
        None => Err(TensorError::Invalid {
            op,
            msg: "needs at least one axis".into(),
        }),
    }
}

impl<'t> Var<'t> {
    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars from different tapes"
        );
    }

    fn record(&self, op_name: &'static str, value: Tensor, op: Op, inputs: &[usize]) -> Result<Var<'t>> {
        check_finite(op_name, &value)?;
        let rg = inputs.iter().any(|&i| self.tape.requires_grad(i));
        Ok(self.tape.push(value, op, rg))
    }

    fn unary(&self, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var<'t>> {
        let value = self.with_value(|a| Tensor {
            shape: a.shape.clone(),
            data: a.data.iter().map(|&x| f(x)).collect(),
        });
        self.record(name, value, op, &[self.id])
    }

    fn binary(&self, name: &'static str, rhs: Var<'t>, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var<'t>> {
        self.same_tape(&rhs);
        let nodes = self.tape.nodes.borrow();
        let (a, b) = (&nodes[self.id].value, &nodes[rhs.id].value);
        let shape = broadcast(name, &a.shape, &b.shape)?;
        let n: usize = shape.iter().product();
        let (la, lb) = (a.len(), b.len());
        let data = (0..n).map(|i| f(a.data[i % la], b.data[i % lb])).collect();
        drop(nodes);
        self.record(name, Tensor { shape, data }, op, &[self.id, rhs.id])
    }

    fn matmul_impl(&self, rhs: Var<'t>, trans_a: bool, trans_b: bool) -> Result<Var<'t>> {
        self.same_tape(&rhs);
        let nodes = self.tape.nodes.borrow();
        let (a, b) = (&nodes[self.id].value, &nodes[rhs.id].value);
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        };
        if a.shape.len() != 2 || b.shape.len() != 2 {
            return Err(mismatch());
        }
        let (m, k) = if trans_a {
            (a.shape[1], a.shape[0])
        } else {
            (a.shape[0], a.shape[1])
        };
        let (k2, n) = if trans_b {
            (b.shape[1], b.shape[0])
        } else {
            (b.shape[0], b.shape[1])
        };
        if k != k2 {
            return Err(mismatch());
        }
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a.data, trans_a, &b.data, trans_b, 0.0, &mut c);
        drop(nodes);
        let op = Op::MatMul {
            a: self.id,
            b: rhs.id,
            trans_a,
            trans_b,
        };
        self.record(
            "matmul",
            Tensor {
                shape: vec![m, n],
                data: c,
            },
            op,
            &[self.id, rhs.id],
        )
    }

    /// `self · rhs` for 2-D operands.
    pub fn matmul(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.matmul_impl(rhs, false, false)
    }

    /// `self · rhsᵀ`.
    pub fn matmul_t(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.matmul_impl(rhs, false, true)
    }

    /// `selfᵀ · rhs`.
    pub fn t_matmul(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.matmul_impl(rhs, true, false)
    }

    pub fn add(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary("add", rhs, |a, b| a + b, Op::Add(self.id, rhs.id))
    }

    pub fn sub(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary("sub", rhs, |a, b| a - b, Op::Sub(self.id, rhs.id))
    }

    pub fn mul(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary("mul", rhs, |a, b| a * b, Op::Mul(self.id, rhs.id))
    }

    pub fn add_scalar(&self, s: f64) -> Result<Var<'t>> {
        self.unary("add_scalar", |x| x + s, Op::AddScalar(self.id))
    }

    pub fn mul_scalar(&self, s: f64) -> Result<Var<'t>> {
        self.unary("mul_scalar", |x| x * s, Op::MulScalar(self.id, s))
    }

    pub fn neg(&self) -> Result<Var<'t>> {
        self.mul_scalar(-1.0)
    }

    pub fn relu(&self) -> Result<Var<'t>> {
        self.unary("relu", |x| x.max(0.0), Op::Relu(self.id))
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&self) -> Result<Var<'t>> {
        self.unary("softplus", softplus, Op::Softplus(self.id))
    }

    /// Square root; the backward pass uses a zero subgradient at 0.
    pub fn sqrt(&self) -> Result<Var<'t>> {
        self.unary("sqrt", f64::sqrt, Op::Sqrt(self.id))
    }

    pub fn exp(&self) -> Result<Var<'t>> {
        self.unary("exp", f64::exp, Op::Exp(self.id))
    }

    pub fn log(&self) -> Result<Var<'t>> {
        self.unary("log", f64::ln, Op::Log(self.id))
    }

    pub fn square(&self) -> Result<Var<'t>> {
        self.unary("square", |x| x * x, Op::Square(self.id))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self) -> Result<Var<'t>> {
        let s = self.with_value(|a| a.data.iter().sum::<f64>());
        self.record("sum", Tensor::scalar(s), Op::SumAll(self.id), &[self.id])
    }

    pub fn mean(&self) -> Result<Var<'t>> {
        let n = self.with_value(Tensor::len) as f64;
        self.sum()?.mul_scalar(1.0 / n)
    }

    /// Sum over one axis, which is removed from the shape.
    pub fn sum_axis(&self, axis: usize) -> Result<Var<'t>> {
        let value = self.with_value(|a| {
            if axis >= a.shape.len() {
                return Err(TensorError::Invalid {
                    op: "sum_axis",
                    msg: format!("axis {axis} out of range for {:?}", a.shape),
                });
            }
            let outer: usize = a.shape[..axis].iter().product();
            let len = a.shape[axis];
            let inner: usize = a.shape[axis + 1..].iter().product();
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for l in 0..len {
                    let src = &a.data[(o * len + l) * inner..(o * len + l + 1) * inner];
                    for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            let mut shape = a.shape.clone();
            shape.remove(axis);
            Ok(Tensor { shape, data: out })
        })?;
        self.record("sum_axis", value, Op::SumAxis(self.id, axis), &[self.id])
    }

    /// Rows `start..start + len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let value = self.with_value(|a| {
            if axis >= a.shape.len() || len == 0 || start + len > a.shape[axis] {
                return Err(TensorError::Invalid {
                    op: "narrow",
                    msg: format!("range {start}..{} on axis {axis} of {:?}", start + len, a.shape),
                });
            }
            let outer: usize = a.shape[..axis].iter().product();
            let full = a.shape[axis];
            let inner: usize = a.shape[axis + 1..].iter().product();
            let mut data = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let base = (o * full + start) * inner;
                data.extend_from_slice(&a.data[base..base + len * inner]);
            }
            let mut shape = a.shape.clone();
            shape[axis] = len;
            Ok(Tensor { shape, data })
        })?;
        self.record(
            "narrow",
            value,
            Op::Narrow {
                a: self.id,
                axis,
                start,
            },
            &[self.id],
        )
    }

    /// `out[..., i] = self[..., index[i]]` along the last axis.
    pub fn gather(&self, index: &[usize]) -> Result<Var<'t>> {
        let value = self.with_value(|a| {
            let (rows, c) = last_dim("gather", &a.shape)?;
            if index.iter().any(|&i| i >= c) || index.is_empty() {
                return Err(TensorError::Invalid {
                    op: "gather",
                    msg: format!("index out of range for last axis {c}"),
                });
            }
            let mut data = Vec::with_capacity(rows * index.len());
            for r in 0..rows {
                let row = &a.data[r * c..(r + 1) * c];
                data.extend(index.iter().map(|&i| row[i]));
            }
            let mut shape = a.shape.clone();
            *shape.last_mut().unwrap() = index.len();
            Ok(Tensor { shape, data })
        })?;
        self.record("gather", value, Op::Gather(self.id, index.to_vec()), &[self.id])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let value = self.value().reshape(shape)?;
        self.record("reshape", value, Op::Reshape(self.id), &[self.id])
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&self) -> Result<Var<'t>> {
        let value = self.with_value(|a| {
            let (rows, c) = last_dim("log_softmax", &a.shape)?;
            let mut data = a.data.clone();
            for r in 0..rows {
                let row = &mut data[r * c..(r + 1) * c];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                row.iter_mut().for_each(|x| *x -= lse);
            }
            Ok(Tensor {
                shape: a.shape.clone(),
                data,
            })
        })?;
        self.record("log_softmax", value, Op::LogSoftmax(self.id), &[self.id])
    }

    /// `out[r] = self[r, index[r]]` along the last axis; the axis is removed.
    pub fn pick(&self, index: &[usize]) -> Result<Var<'t>> {
        let value = self.with_value(|a| {
            let (rows, c) = last_dim("pick", &a.shape)?;
            if index.len() != rows || index.iter().any(|&i| i >= c) {
                return Err(TensorError::Invalid {
                    op: "pick",
                    msg: format!("{} indices for {rows} rows of width {c}", index.len()),
                });
            }
            let data = (0..rows).map(|r| a.data[r * c + index[r]]).collect();
            let shape = a.shape[..a.shape.len() - 1].to_vec();
            Ok(Tensor { shape, data })
        })?;
        self.record("pick", value, Op::Pick(self.id, index.to_vec()), &[self.id])
    }

    /// Maximum over the last axis, skipping `exclude[r]` in row `r` when
    /// given. Ties resolve to the lowest index. Returns the maxima and their
    /// indices.
    pub fn max_last(&self, exclude: Option<&[usize]>) -> Result<(Var<'t>, Vec<usize>)> {
        let (value, arg) = self.with_value(|a| {
            let (rows, c) = last_dim("max_last", &a.shape)?;
            if let Some(ex) = exclude {
                if ex.len() != rows || c < 2 {
                    return Err(TensorError::Invalid {
                        op: "max_last",
                        msg: format!("{} exclusions for {rows} rows of width {c}", ex.len()),
                    });
                }
            }
            let mut data = Vec::with_capacity(rows);
            let mut arg = Vec::with_capacity(rows);
            for r in 0..rows {
                let row = &a.data[r * c..(r + 1) * c];
                let skip = exclude.map(|ex| ex[r]);
                let mut best: Option<usize> = None;
                for (j, &v) in row.iter().enumerate() {
                    if Some(j) == skip {
                        continue;
                    }
                    if best.map_or(true, |b| v > row[b]) {
                        best = Some(j);
                    }
                }
                let b = best.unwrap();
                arg.push(b);
                data.push(row[b]);
            }
            let shape = a.shape[..a.shape.len() - 1].to_vec();
            Ok((Tensor { shape, data }, arg))
        })?;
        let v = self.record("max_last", value, Op::MaxLast(self.id, arg.clone()), &[self.id])?;
        Ok((v, arg))
    }

    /// Multiplies slice `r` along the first axis by the constant `factors[r]`.
    pub fn scale_rows(&self, factors: &[f64]) -> Result<Var<'t>> {
        let value = self.with_value(|a| {
            if a.shape.first() != Some(&factors.len()) {
                return Err(TensorError::ShapeMismatch {
                    op: "scale_rows",
                    lhs: a.shape.clone(),
                    rhs: vec![factors.len()],
                });
            }
            let inner = a.len() / factors.len();
            let data = a
                .data
                .iter()
                .enumerate()
                .map(|(i, &x)| x * factors[i / inner])
                .collect();
            Ok(Tensor {
                shape: a.shape.clone(),
                data,
            })
        })?;
        self.record("scale_rows", value, Op::ScaleRows(self.id, factors.to_vec()), &[self.id])
    }
}

impl Tape {
    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts.first().ok_or(TensorError::Invalid {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let nodes = self.nodes.borrow();
        let base = &nodes[first.id].value.shape;
        if axis >= base.len() {
            return Err(TensorError::Invalid {
                op: "concat",
                msg: format!("axis {axis} out of range for {base:?}"),
            });
        }
        let mut shape = base.clone();
        shape[axis] = 0;
        for p in parts {
            first.same_tape(p);
            let s = &nodes[p.id].value.shape;
            let compatible = s.len() == base.len()
                && s.iter().zip(base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.clone(),
                });
            }
            shape[axis] += s[axis];
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let v = &nodes[p.id].value;
                let block = v.shape[axis] * inner;
                data.extend_from_slice(&v.data[o * block..(o + 1) * block]);
            }
        }
        drop(nodes);
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        first.record("concat", Tensor { shape, data }, Op::Concat(ids.clone(), axis), &ids)
    }

    /// Records an op whose forward value was computed by the caller and whose
    /// reverse rule is `backward`.
    pub fn custom<'t>(
        &'t self,
        name: &'static str,
        inputs: &[Var<'t>],
        output: Tensor,
        backward: Box<dyn Backward>,
    ) -> Result<Var<'t>> {
        let ids: Vec<usize> = inputs.iter().map(|v| v.id).collect();
        check_finite(name, &output)?;
        let rg = ids.iter().any(|&i| self.requires_grad(i));
        Ok(self.push(output, Op::Custom(ids, backward), rg))
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], nodes: &[Node], id: usize, g: Vec<f64>) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, v)| *e += v),
        slot @ None => *slot = Some(g),
    }
}

fn elementwise_grad(nodes: &[Node], a: usize, g: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let x = &nodes[a].value.data;
    x.iter().zip(g).map(|(&x, &g)| f(x, g)).collect()
}

pub(super) fn backward_node(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => {}
        &Op::MatMul {
            a,
            b,
            trans_a,
            trans_b,
        } => {
            let (av, bv) = (&nodes[a].value, &nodes[b].value);
            let (m, n) = (out.shape[0], out.shape[1]);
            let k = if trans_a { av.shape[0] } else { av.shape[1] };
            if nodes[a].requires_grad {
                let mut ga = vec![0.0; m * k];
                if trans_a {
                    // A stored k×m: dA = op(B) · dCᵀ
                    gemm(k, n, m, &bv.data, trans_b, g, true, 0.0, &mut ga);
                } else {
                    gemm(m, n, k, g, false, &bv.data, !trans_b, 0.0, &mut ga);
                }
                accumulate(grads, nodes, a, ga);
            }
            if nodes[b].requires_grad {
                let mut gb = vec![0.0; k * n];
                if trans_b {
                    // B stored n×k: dB = dCᵀ · op(A)
                    gemm(n, m, k, g, true, &av.data, trans_a, 0.0, &mut gb);
                } else {
                    gemm(k, m, n, &av.data, !trans_a, g, false, 0.0, &mut gb);
                }
                accumulate(grads, nodes, b, gb);
            }
        }
        &Op::Add(a, b) => {
            accumulate(grads, nodes, a, reduce_to(g, nodes[a].value.len()));
            accumulate(grads, nodes, b, reduce_to(g, nodes[b].value.len()));
        }
        &Op::Sub(a, b) => {
            accumulate(grads, nodes, a, reduce_to(g, nodes[a].value.len()));
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            accumulate(grads, nodes, b, reduce_to(&neg, nodes[b].value.len()));
        }
        &Op::Mul(a, b) => {
            let (av, bv) = (&nodes[a].value.data, &nodes[b].value.data);
            let (la, lb) = (av.len(), bv.len());
            if nodes[a].requires_grad {
                let full: Vec<f64> = g.iter().enumerate().map(|(i, g)| g * bv[i % lb]).collect();
                accumulate(grads, nodes, a, reduce_to(&full, la));
            }
            if nodes[b].requires_grad {
                let full: Vec<f64> = g.iter().enumerate().map(|(i, g)| g * av[i % la]).collect();
                accumulate(grads, nodes, b, reduce_to(&full, lb));
            }
        }
        &Op::AddScalar(a) | &Op::Reshape(a) => accumulate(grads, nodes, a, g.to_vec()),
        &Op::MulScalar(a, s) => accumulate(grads, nodes, a, g.iter().map(|v| v * s).collect()),
        &Op::Relu(a) => {
            let ga = elementwise_grad(nodes, a, g, |x, g| if x > 0.0 { g } else { 0.0 });
            accumulate(grads, nodes, a, ga);
        }
        &Op::Softplus(a) => {
            let ga = elementwise_grad(nodes, a, g, |x, g| g * sigmoid(x));
            accumulate(grads, nodes, a, ga);
        }
        &Op::Sqrt(a) => {
            let ga: Vec<f64> = out
                .data
                .iter()
                .zip(g)
                .map(|(&y, &g)| if y > 0.0 { 0.5 * g / y } else { 0.0 })
                .collect();
            accumulate(grads, nodes, a, ga);
        }
        &Op::Exp(a) => {
            let ga = out.data.iter().zip(g).map(|(y, g)| y * g).collect();
            accumulate(grads, nodes, a, ga);
        }
        &Op::Log(a) => {
            let ga = elementwise_grad(nodes, a, g, |x, g| g / x);
            accumulate(grads, nodes, a, ga);
        }
        &Op::Square(a) => {
            let ga = elementwise_grad(nodes, a, g, |x, g| 2.0 * x * g);
            accumulate(grads, nodes, a, ga);
        }
        &Op::SumAll(a) => accumulate(grads, nodes, a, vec![g[0]; nodes[a].value.len()]),
        &Op::SumAxis(a, axis) => {
            let shape = &nodes[a].value.shape;
            let outer: usize = shape[..axis].iter().product();
            let len = shape[axis];
            let inner: usize = shape[axis + 1..].iter().product();
            let mut ga = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                for _ in 0..len {
                    ga.extend_from_slice(&g[o * inner..(o + 1) * inner]);
                }
            }
            accumulate(grads, nodes, a, ga);
        }
        Op::Concat(parts, axis) => {
            let inner: usize = out.shape[axis + 1..].iter().product();
            let outer: usize = out.shape[..*axis].iter().product();
            let mut offset = 0;
            let row = out.shape[*axis] * inner;
            for &p in parts {
                let block = nodes[p].value.shape[*axis] * inner;
                if nodes[p].requires_grad {
                    let mut gp = Vec::with_capacity(outer * block);
                    for o in 0..outer {
                        gp.extend_from_slice(&g[o * row + offset..o * row + offset + block]);
                    }
                    accumulate(grads, nodes, p, gp);
                }
                offset += block;
            }
        }
        &Op::Narrow { a, axis, start } => {
            let shape = &nodes[a].value.shape;
            let outer: usize = shape[..axis].iter().product();
            let full = shape[axis];
            let len = out.shape[axis];
            let inner: usize = shape[axis + 1..].iter().product();
            let mut ga = vec![0.0; nodes[a].value.len()];
            for o in 0..outer {
                let dst = (o * full + start) * inner;
                ga[dst..dst + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            accumulate(grads, nodes, a, ga);
        }
        Op::Gather(a, index) => {
            let c = *nodes[*a].value.shape.last().unwrap();
            let mut ga = vec![0.0; nodes[*a].value.len()];
            for (r, gr) in g.chunks(index.len()).enumerate() {
                for (&i, &v) in index.iter().zip(gr) {
                    ga[r * c + i] += v;
                }
            }
            accumulate(grads, nodes, *a, ga);
        }
        &Op::LogSoftmax(a) => {
            let c = *out.shape.last().unwrap();
            let mut ga = vec![0.0; out.len()];
            for ((y, gr), dst) in out.data.chunks(c).zip(g.chunks(c)).zip(ga.chunks_mut(c)) {
                let total: f64 = gr.iter().sum();
                for j in 0..c {
                    dst[j] = gr[j] - y[j].exp() * total;
                }
            }
            accumulate(grads, nodes, a, ga);
        }
        Op::Pick(a, index) | Op::MaxLast(a, index) => {
            let c = *nodes[*a].value.shape.last().unwrap();
            let mut ga = vec![0.0; nodes[*a].value.len()];
            for (r, (&i, &v)) in index.iter().zip(g).enumerate() {
                ga[r * c + i] = v;
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::ScaleRows(a, factors) => {
            let inner = g.len() / factors.len();
            let ga = g
                .iter()
                .enumerate()
                .map(|(i, v)| v * factors[i / inner])
                .collect();
            accumulate(grads, nodes, *a, ga);
        }
        Op::Custom(inputs, rule) => {
            let values: Vec<&Tensor> = inputs.iter().map(|&i| &nodes[i].value).collect();
            let gs = rule.backward(&values, out, g);
            for (&i, gi) in inputs.iter().zip(gs) {
                if let Some(gi) = gi {
                    accumulate(grads, nodes, i, gi);
                }
            }
        }
    }
}
