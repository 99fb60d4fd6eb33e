use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::scalar::Scalar;

use super::{AdError, Tensor};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    id: usize,
    tape: u64,
}

impl Var {
    pub fn index(&self) -> usize {
        self.id
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, T),
    Offset(usize),
    MatMul(usize, usize),
    Relu(usize),
    Square(usize),
    Sqrt(usize),
    Sin(usize),
    Cos(usize),
    Atan2(usize, usize),
    Sum(usize),
    Mean(usize),
    SumRows(usize),
    Broadcast(usize),
    Concat(Vec<usize>, usize),
    SliceRows(usize, usize),
    SliceCols(usize, usize),
    Gather(usize, Rc<[usize]>),
    ScatterSum(usize, Rc<[usize]>),
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Single-owner operation record.
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
    consumed: bool,
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf created with `requires_grad`; `None` otherwise.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        &self.nodes[v.id].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.id].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var { id, tape: self.id }
    }

    fn check(&self, v: Var) -> Result<usize, AdError> {
        if v.tape != self.id || v.id >= self.nodes.len() {
            return Err(AdError::ForeignVar);
        }
        if self.consumed {
            return Err(AdError::TapeConsumed);
        }
        Ok(v.id)
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: impl FnOnce(usize) -> Op<T>) -> Result<Var, AdError> {
        let ia = self.check(a)?;
        let value = self.nodes[ia].value.map(f);
        let rg = self.nodes[ia].requires_grad;
        Ok(self.push(value, rg, op(ia)))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: impl FnOnce(usize, usize) -> Op<T>,
    ) -> Result<Var, AdError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.shape() != vb.shape() {
            return Err(AdError::Shape {
                op: name,
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.nodes[ia].requires_grad || self.nodes[ib].requires_grad;
        Ok(self.push(value, rg, op(ia, ib)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, |x| -x, Op::Neg)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var, AdError> {
        self.unary(a, |x| x * c, |ia| Op::Scale(ia, c))
    }

    /// Adds a constant to every element.
    pub fn offset(&mut self, a: Var, c: T) -> Result<Var, AdError> {
        self.unary(a, |x| x + c, Op::Offset)
    }

    /// ReLU with subgradient 0 at the kink.
    pub fn relu(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, |x| if x > T::zero() { x } else { T::zero() }, Op::Relu)
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, |x| x * x, Op::Square)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, T::sqrt, Op::Sqrt)
    }

    pub fn sin(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, T::sin, Op::Sin)
    }

    pub fn cos(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, T::cos, Op::Cos)
    }

    /// Elementwise `atan2(y, x)`.
    pub fn atan2(&mut self, y: Var, x: Var) -> Result<Var, AdError> {
        self.binary("atan2", y, x, T::atan2, Op::Atan2)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let shape_err = || AdError::Shape {
            op: "matmul",
            lhs: va.shape().to_vec(),
            rhs: vb.shape().to_vec(),
        };
        let (n, k) = va.dims2().ok_or_else(shape_err)?;
        let (k2, m) = vb.dims2().ok_or_else(shape_err)?;
        if k != k2 {
            return Err(shape_err());
        }
        let value = Tensor::matrix(n, m, matmul_nn(va.data(), vb.data(), n, k, m));
        let rg = self.nodes[ia].requires_grad || self.nodes[ib].requires_grad;
        Ok(self.push(value, rg, Op::MatMul(ia, ib)))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Result<Var, AdError> {
        let ia = self.check(a)?;
        let s = self.nodes[ia].value.data().iter().copied().sum();
        let rg = self.nodes[ia].requires_grad;
        Ok(self.push(Tensor::scalar(s), rg, Op::Sum(ia)))
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, a: Var) -> Result<Var, AdError> {
        let ia = self.check(a)?;
        let v = &self.nodes[ia].value;
        if v.numel() == 0 {
            return Err(AdError::Invalid {
                op: "mean",
                detail: "empty tensor".into(),
            });
        }
        let s: T = v.data().iter().copied().sum();
        let m = s / T::lit(v.numel() as f64);
        let rg = self.nodes[ia].requires_grad;
        Ok(self.push(Tensor::scalar(m), rg, Op::Mean(ia)))
    }

    /// Column sums of a matrix, shape `[1, cols]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var, AdError> {
        let ia = self.check(a)?;
        let v = &self.nodes[ia].value;
        let (n, c) = v.dims2().ok_or_else(|| AdError::Shape {
            op: "sum_rows",
            lhs: v.shape().to_vec(),
            rhs: vec![],
        })?;
        let mut out = vec![T::zero(); c];
        for r in 0..n {
            for (o, &x) in out.iter_mut().zip(&v.data()[r * c..(r + 1) * c]) {
                *o += x;
            }
        }
        let rg = self.nodes[ia].requires_grad;
        Ok(self.push(Tensor::matrix(1, c, out), rg, Op::SumRows(ia)))
    }

    /// Column means of a matrix, shape `[1, cols]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, AdError> {
        let n = self.value(a).dims2().map_or(0, |d| d.0);
        if n == 0 {
            return Err(AdError::Invalid {
                op: "mean_rows",
                detail: "needs a non-empty matrix".into(),
            });
        }
        let s = self.sum_rows(a)?;
        self.scale(s, T::one() / T::lit(n as f64))
    }

    /// Expands a single element, a `[1, c]` row or an `[n, 1]` column to
    /// `[rows, cols]`.
    pub fn broadcast(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, AdError> {
        let ia = self.check(a)?;
        let v = &self.nodes[ia].value;
        let (pr, pc) = broadcast_source(v.shape(), rows, cols).ok_or_else(|| AdError::Shape {
            op: "broadcast",
            lhs: v.shape().to_vec(),
            rhs: vec![rows, cols],
        })?;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let sr = if pr == 1 { 0 } else { r };
            for c in 0..cols {
                let sc = if pc == 1 { 0 } else { c };
                data.push(v.data()[sr * pc + sc]);
            }
        }
        let rg = self.nodes[ia].requires_grad;
        Ok(self.push(Tensor::matrix(rows, cols, data), rg, Op::Broadcast(ia)))
    }

    /// Joins matrices along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, AdError> {
        if parts.is_empty() || axis > 1 {
            return Err(AdError::Invalid {
                op: "concat",
                detail: format!("{} parts along axis {axis}", parts.len()),
            });
        }
        let ids = parts.iter().map(|&p| self.check(p)).collect::<Result<Vec<_>, _>>()?;
        let dims = ids
            .iter()
            .map(|&i| {
                let v = &self.nodes[i].value;
                v.dims2().ok_or_else(|| AdError::Shape {
                    op: "concat",
                    lhs: v.shape().to_vec(),
                    rhs: vec![],
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (r0, c0) = dims[0];
        for &(r, c) in &dims {
            if (axis == 0 && c != c0) || (axis == 1 && r != r0) {
                return Err(AdError::Shape {
                    op: "concat",
                    lhs: vec![r0, c0],
                    rhs: vec![r, c],
                });
            }
        }
        let value = if axis == 0 {
            let rows = dims.iter().map(|d| d.0).sum();
            let mut data = Vec::with_capacity(rows * c0);
            for &i in &ids {
                data.extend_from_slice(self.nodes[i].value.data());
            }
            Tensor::matrix(rows, c0, data)
        } else {
            let cols = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(r0 * cols);
            for r in 0..r0 {
                for (&i, &(_, c)) in ids.iter().zip(&dims) {
                    data.extend_from_slice(&self.nodes[i].value.data()[r * c..(r + 1) * c]);
                }
            }
            Tensor::matrix(r0, cols, data)
        };
        let rg = ids.iter().any(|&i| self.nodes[i].requires_grad);
        Ok(self.push(value, rg, Op::Concat(ids, axis)))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AdError> {
        let ia = self.check(a)?;
        let v = &self.nodes[ia].value;
        let (n, c) = v.dims2().filter(|&(n, _)| start <= end && end <= n).ok_or_else(|| AdError::Shape {
            op: "slice_rows",
            lhs: v.shape().to_vec(),
            rhs: vec![start, end],
        })?;
        let _ = n;
        let value = Tensor::matrix(end - start, c, v.data()[start * c..end * c].to_vec());
        let rg = self.nodes[ia].requires_grad;
        Ok(self.push(value, rg, Op::SliceRows(ia, start)))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AdError> {
        let ia = self.check(a)?;
        let v = &self.nodes[ia].value;
        let (n, c) = v.dims2().filter(|&(_, c)| start <= end && end <= c).ok_or_else(|| AdError::Shape {
            op: "slice_cols",
            lhs: v.shape().to_vec(),
            rhs: vec![start, end],
        })?;
        let w = end - start;
        let mut data = Vec::with_capacity(n * w);
        for r in 0..n {
            data.extend_from_slice(&v.data()[r * c + start..r * c + end]);
        }
        let rg = self.nodes[ia].requires_grad;
        Ok(self.push(Tensor::matrix(n, w, data), rg, Op::SliceCols(ia, start)))
    }

    /// Selects rows: `out[m] = a[index[m]]`.
    pub fn gather(&mut self, a: Var, index: Rc<[usize]>) -> Result<Var, AdError> {
        let ia = self.check(a)?;
        let v = &self.nodes[ia].value;
        let (rows, width) = v.row_split();
        let mut data = Vec::with_capacity(index.len() * width);
        for &i in index.iter() {
            if i >= rows {
                return Err(AdError::Index {
                    op: "gather",
                    index: i,
                    len: rows,
                });
            }
            data.extend_from_slice(&v.data()[i * width..(i + 1) * width]);
        }
        let mut shape = v.shape().to_vec();
        if shape.is_empty() {
            shape.push(1);
        }
        shape[0] = index.len();
        let value = Tensor::new(shape, data)?;
        let rg = self.nodes[ia].requires_grad;
        Ok(self.push(value, rg, Op::Gather(ia, index)))
    }

    /// Segment sum of rows: `out[index[e]] += a[e]`, with `out_rows` rows.
    pub fn scatter_sum(&mut self, a: Var, index: Rc<[usize]>, out_rows: usize) -> Result<Var, AdError> {
        let ia = self.check(a)?;
        let v = &self.nodes[ia].value;
        let (rows, width) = v.row_split();
        if rows != index.len() {
            return Err(AdError::Shape {
                op: "scatter_sum",
                lhs: v.shape().to_vec(),
                rhs: vec![index.len()],
            });
        }
        let mut data = vec![T::zero(); out_rows * width];
        for (e, &dst) in index.iter().enumerate() {
            if dst >= out_rows {
                return Err(AdError::Index {
                    op: "scatter_sum",
                    index: dst,
                    len: out_rows,
                });
            }
            for (o, &x) in data[dst * width..(dst + 1) * width].iter_mut().zip(&v.data()[e * width..(e + 1) * width]) {
                *o += x;
            }
        }
        let mut shape = v.shape().to_vec();
        if shape.is_empty() {
            shape.push(1);
        }
        shape[0] = out_rows;
        let value = Tensor::new(shape, data)?;
        let rg = self.nodes[ia].requires_grad;
        Ok(self.push(value, rg, Op::ScatterSum(ia, index)))
    }

    /// Reverse accumulation from a scalar `loss`. Consumes the tape: further
    /// operations or a second backward are rejected.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>, AdError> {
        let il = self.check(loss)?;
        let lv = &self.nodes[il].value;
        if lv.numel() != 1 {
            return Err(AdError::NotScalar(lv.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[il] = Some(vec![T::one()]);
        for id in (0..=il).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            self.propagate(id, &g, &mut grads);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| match (g, &node.op, node.requires_grad) {
                (Some(g), Op::Leaf, true) => Some(Tensor::new(node.value.shape().to_vec(), g).expect("gradient shape")),
                _ => None,
            })
            .collect();
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let val = |i: usize| nodes[i].value.data();
        let out = nodes[id].value.data();
        let mut acc = |i: usize, f: &mut dyn FnMut(&mut [T])| {
            if !nodes[i].requires_grad {
                return;
            }
            let slot = grads[i].get_or_insert_with(|| vec![T::zero(); nodes[i].value.numel()]);
            f(slot);
        };
        match &nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(s, &g)| *s -= g));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |s| zip3(s, g, vb, |g, y| g * y));
                acc(*b, &mut |s| zip3(s, g, va, |g, x| g * x));
            }
            Op::Div(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |s| zip3(s, g, vb, |g, y| g / y));
                acc(*b, &mut |s| {
                    for ((s, &g), (&x, &y)) in s.iter_mut().zip(g).zip(va.iter().zip(vb)) {
                        *s -= g * x / (y * y);
                    }
                });
            }
            Op::Neg(a) => acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(s, &g)| *s -= g)),
            Op::Scale(a, c) => acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(s, &g)| *s += g * *c)),
            Op::Offset(a) => acc(*a, &mut |s| add_into(s, g)),
            Op::Relu(a) => {
                let va = val(*a);
                acc(*a, &mut |s| zip3(s, g, va, |g, x| if x > T::zero() { g } else { T::zero() }));
            }
            Op::Square(a) => {
                let va = val(*a);
                acc(*a, &mut |s| zip3(s, g, va, |g, x| g * (x + x)));
            }
            Op::Sqrt(a) => acc(*a, &mut |s| zip3(s, g, out, |g, r| g * T::lit(0.5) / r)),
            Op::Sin(a) => {
                let va = val(*a);
                acc(*a, &mut |s| zip3(s, g, va, |g, x| g * x.cos()));
            }
            Op::Cos(a) => {
                let va = val(*a);
                acc(*a, &mut |s| zip3(s, g, va, |g, x| -g * x.sin()));
            }
            Op::Atan2(y, x) => {
                let (vy, vx) = (val(*y), val(*x));
                acc(*y, &mut |s| {
                    for ((s, &g), (&yy, &xx)) in s.iter_mut().zip(g).zip(vy.iter().zip(vx)) {
                        *s += g * xx / (xx * xx + yy * yy);
                    }
                });
                acc(*x, &mut |s| {
                    for ((s, &g), (&yy, &xx)) in s.iter_mut().zip(g).zip(vy.iter().zip(vx)) {
                        *s -= g * yy / (xx * xx + yy * yy);
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (n, k) = nodes[*a].value.dims2().expect("matmul lhs");
                let m = nodes[*b].value.dims2().expect("matmul rhs").1;
                let (va, vb) = (val(*a), val(*b));
                // dA = G B^T, dB = A^T G
                acc(*a, &mut |s| {
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for kk in 0..k {
                            let brow = &vb[kk * m..(kk + 1) * m];
                            let mut d = T::zero();
                            for j in 0..m {
                                d += grow[j] * brow[j];
                            }
                            s[i * k + kk] += d;
                        }
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for kk in 0..k {
                            let aik = va[i * k + kk];
                            if aik == T::zero() {
                                continue;
                            }
                            let srow = &mut s[kk * m..(kk + 1) * m];
                            for j in 0..m {
                                srow[j] += aik * grow[j];
                            }
                        }
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |s| s.iter_mut().for_each(|s| *s += g[0])),
            Op::Mean(a) => {
                let n = T::lit(nodes[*a].value.numel() as f64);
                acc(*a, &mut |s| s.iter_mut().for_each(|s| *s += g[0] / n));
            }
            Op::SumRows(a) => {
                let c = g.len();
                acc(*a, &mut |s| {
                    for row in s.chunks_mut(c) {
                        add_into(row, g);
                    }
                });
            }
            Op::Broadcast(a) => {
                let (rows, cols) = nodes[id].value.dims2().expect("broadcast output");
                let (pr, pc) = broadcast_source(nodes[*a].value.shape(), rows, cols).expect("broadcast shape");
                acc(*a, &mut |s| {
                    for r in 0..rows {
                        let sr = if pr == 1 { 0 } else { r };
                        for c in 0..cols {
                            let sc = if pc == 1 { 0 } else { c };
                            s[sr * pc + sc] += g[r * cols + c];
                        }
                    }
                });
            }
            Op::Concat(parts, axis) => {
                let (_, total_cols) = nodes[id].value.dims2().expect("concat output");
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = nodes[p].value.dims2().expect("concat part");
                    if *axis == 0 {
                        acc(p, &mut |s| add_into(s, &g[offset * pc..(offset + pr) * pc]));
                        offset += pr;
                    } else {
                        acc(p, &mut |s| {
                            for r in 0..pr {
                                let src = &g[r * total_cols + offset..r * total_cols + offset + pc];
                                add_into(&mut s[r * pc..(r + 1) * pc], src);
                            }
                        });
                        offset += pc;
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let c = nodes[*a].value.dims2().expect("slice source").1;
                acc(*a, &mut |s| add_into(&mut s[start * c..start * c + g.len()], g));
            }
            Op::SliceCols(a, start) => {
                let (n, c) = nodes[*a].value.dims2().expect("slice source");
                let w = g.len() / n.max(1);
                acc(*a, &mut |s| {
                    for r in 0..n {
                        add_into(&mut s[r * c + start..r * c + start + w], &g[r * w..(r + 1) * w]);
                    }
                });
            }
            Op::Gather(a, index) => {
                let width = nodes[*a].value.row_split().1;
                acc(*a, &mut |s| {
                    for (m, &i) in index.iter().enumerate() {
                        add_into(&mut s[i * width..(i + 1) * width], &g[m * width..(m + 1) * width]);
                    }
                });
            }
            Op::ScatterSum(a, index) => {
                let width = nodes[*a].value.row_split().1;
                acc(*a, &mut |s| {
                    for (e, &dst) in index.iter().enumerate() {
                        add_into(&mut s[e * width..(e + 1) * width], &g[dst * width..(dst + 1) * width]);
                    }
                });
            }
        }
    }
}

fn broadcast_source(shape: &[usize], rows: usize, cols: usize) -> Option<(usize, usize)> {
    let numel: usize = shape.iter().product();
    if numel == 1 {
        return Some((1, 1));
    }
    match shape {
        [1, c] if *c == cols => Some((1, cols)),
        [c] if *c == cols => Some((1, cols)),
        [r, 1] if *r == rows => Some((rows, 1)),
        [r, c] if *r == rows && *c == cols => Some((rows, cols)),
        _ => None,
    }
}

#[inline]
fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
fn zip3<T: Scalar>(dst: &mut [T], g: &[T], other: &[T], f: impl Fn(T, T) -> T) {
    for ((d, &g), &o) in dst.iter_mut().zip(g).zip(other) {
        *d += f(g, o);
    }
}

fn matmul_nn<T: Scalar>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == T::zero() {
                continue;
            }
            let brow = &b[kk * m..(kk + 1) * m];
            for j in 0..m {
                orow[j] += aik * brow[j];
            }
        }
    }
    out
}
