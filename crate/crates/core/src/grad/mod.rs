//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! A [`Tape`] owns an arena of variables. Leaves are registered with a role
//! (input, parameter, injection site, constant) and every operation appends a
//! node that stores its operands' ids, so the recorded program can be replayed
//! in reverse to accumulate exact gradients. Ops execute eagerly: calling
//! [`Tape::matmul`] both computes the value and records the node.
//!
//! Injection sites are ordinary leaves whose value is added somewhere inside a
//! forward pass. Registering a site with an all-zeros value leaves the output
//! numerically identical to a graph built without it, while still exposing
//! `d loss / d site` through [`Tape::backward`]; that gradient is what the
//! adversarial module turns into a perturbation.
//!
//! ```
//! use sacl_core::grad::Tape;
//! use sacl_core::tensor::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.input("x", Tensor::from_vec(vec![0.0, 0.0])).unwrap();
//! let y = tape.log_softmax(x).unwrap();
//! assert!((tape.value(y).data()[0] + f64::ln(2.0)).abs() < 1e-15);
//! let loss = tape.sum(y).unwrap();
//! tape.backward(loss).unwrap();
//! let g = tape.gradients(&["x"]).unwrap();
//! assert_eq!(g.get("x").unwrap().numel(), 2);
//! ```

pub mod check;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a variable recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(usize);

/// What kind of leaf a tape variable is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafRole {
    /// Data fed into the graph (features, dropout masks).
    Input,
    /// Trainable parameter.
    Param,
    /// Additive perturbation slot inside the forward pass.
    Site,
    /// Fixed value that never needs a gradient by name.
    Const,
}

/// Probability floor applied before logarithms of externally supplied
/// probabilities, so a zero entry cannot produce `-inf`.
pub const LOG_CLAMP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf(LeafRole),
    /// `[m,k] x [k,n] -> [m,n]`, or `[m,k] x [k] -> [m]`.
    MatMul { a: VarId, b: VarId },
    /// `[m,k] x [n,k] -> [m,n]` (second operand used transposed).
    MatMulNT { a: VarId, b: VarId },
    Add { a: VarId, b: VarId },
    Hadamard { a: VarId, b: VarId },
    /// Elementwise `mul * x + add` with scalar constants.
    Affine { x: VarId, mul: f64 },
    Sigmoid { x: VarId },
    Tanh { x: VarId },
    Exp { x: VarId },
    /// `ln(max(x, LOG_CLAMP_FLOOR))`; clamping increments a tape counter.
    LnClamped { x: VarId },
    /// Elementwise `x^p` for constant `p`; defined for non-negative bases.
    Powf { x: VarId, p: f64 },
    /// Numerically stable `x - logsumexp(x)` over a 1-D vector.
    LogSoftmax { x: VarId },
    /// Flat concatenation of the operands' data, output is 1-D.
    Concat { xs: Vec<VarId> },
    /// Contiguous range of the operand's flat data, output is 1-D.
    Slice { x: VarId, start: usize, len: usize },
    /// Same data viewed under a new shape.
    Reshape { x: VarId },
    /// Sum of all entries, output shape `[1]`.
    Sum { x: VarId },
    /// `x * s` where `s` is a `[1]` tensor broadcast over `x`.
    ScaleVar { x: VarId, s: VarId },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf(_) => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::MatMulNT { .. } => "matmul_nt",
            Op::Add { .. } => "add",
            Op::Hadamard { .. } => "hadamard",
            Op::Affine { .. } => "affine",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Tanh { .. } => "tanh",
            Op::Exp { .. } => "exp",
            Op::LnClamped { .. } => "ln",
            Op::Powf { .. } => "powf",
            Op::LogSoftmax { .. } => "log_softmax",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape { .. } => "reshape",
            Op::Sum { .. } => "sum",
            Op::ScaleVar { .. } => "scale_var",
        }
    }
}

/// Named gradients produced by [`Tape::gradients`].
///
/// Keys are leaf names; iteration order is the sorted key order, which keeps
/// every consumer (optimizer, serialization, tests) deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientMap(BTreeMap<String, Tensor>);

impl GradientMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn insert(&mut self, name: String, grad: Tensor) {
        self.0.insert(name, grad);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Elementwise sum with another map over the union of names.
    ///
    /// This is the explicit reduction for gradients gathered from separate
    /// tapes (gradient accumulation, parallel workers). Shapes of shared
    /// names must agree.
    pub fn merge_add(&mut self, other: &GradientMap) -> Result<()> {
        for (name, grad) in other.iter() {
            match self.0.get_mut(name) {
                Some(t) => t.add_assign(grad)?,
                None => {
                    self.0.insert(name.to_string(), grad.clone());
                }
            }
        }
        Ok(())
    }

    /// Multiplies every gradient by `c`.
    pub fn scale(&mut self, c: f64) {
        for t in self.0.values_mut() {
            t.scale_assign(c);
        }
    }
}

/// Recording tape: variable arena, op list, and gradient accumulators.
#[derive(Debug)]
pub struct Tape {
    vals: Vec<Tensor>,
    ops: Vec<Op>,
    names: BTreeMap<String, VarId>,
    leaf_name: Vec<Option<String>>,
    grads: Vec<Option<Tensor>>,
    validate: bool,
    clamp_events: u64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// Empty tape with non-finite detection enabled.
    pub fn new() -> Self {
        Self {
            vals: Vec::new(),
            ops: Vec::new(),
            names: BTreeMap::new(),
            leaf_name: Vec::new(),
            grads: Vec::new(),
            validate: true,
            clamp_events: 0,
        }
    }

    /// Disables the per-op finite check (used by benchmarks, never by tests).
    pub fn with_validation(mut self, validate: bool) -> Self {
        self.validate = validate;
        self
    }

    /// Number of recorded variables.
    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// How many times a logarithm input was clamped to the floor.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    /// Value of a recorded variable.
    pub fn value(&self, id: VarId) -> &Tensor {
        &self.vals[id.0]
    }

    /// Id of a named leaf.
    pub fn lookup(&self, name: &str) -> Result<VarId> {
        self.names
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// All named leaves having the given role, in sorted name order.
    pub fn leaves_with_role(&self, role: LeafRole) -> Vec<(&str, VarId)> {
        self.names
            .iter()
            .filter(|(_, id)| matches!(self.ops[id.0], Op::Leaf(r) if r == role))
            .map(|(name, id)| (name.as_str(), *id))
            .collect()
    }

    fn push(&mut self, op: Op, val: Tensor) -> Result<VarId> {
        if self.validate && !val.is_finite() {
            return Err(Error::NonFinite {
                context: format!("{} (node {})", op.name(), self.vals.len()),
            });
        }
        let id = VarId(self.vals.len());
        self.vals.push(val);
        self.ops.push(op);
        self.leaf_name.push(None);
        Ok(id)
    }

    fn leaf(&mut self, name: Option<&str>, role: LeafRole, val: Tensor) -> Result<VarId> {
        if let Some(name) = name {
            if self.names.contains_key(name) {
                return Err(Error::DuplicateVariable(name.to_string()));
            }
        }
        let id = self.push(Op::Leaf(role), val)?;
        if let Some(name) = name {
            self.names.insert(name.to_string(), id);
            self.leaf_name[id.0] = Some(name.to_string());
        }
        Ok(id)
    }

    /// Registers a named data input.
    pub fn input(&mut self, name: &str, val: Tensor) -> Result<VarId> {
        self.leaf(Some(name), LeafRole::Input, val)
    }

    /// Registers a named trainable parameter.
    pub fn param(&mut self, name: &str, val: Tensor) -> Result<VarId> {
        self.leaf(Some(name), LeafRole::Param, val)
    }

    /// Registers a named injection site.
    pub fn site(&mut self, name: &str, val: Tensor) -> Result<VarId> {
        self.leaf(Some(name), LeafRole::Site, val)
    }

    /// Registers an anonymous constant.
    pub fn constant(&mut self, val: Tensor) -> Result<VarId> {
        self.leaf(None, LeafRole::Const, val)
    }

    // ── Primitive operations ────────────────────────────────────────────────

    /// Matrix product `[m,k] x [k,n] -> [m,n]`; a 1-D right operand `[k]` is
    /// treated as a column, producing `[m]`.
    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (va, vb) = (&self.vals[a.0], &self.vals[b.0]);
        let (m, k) = match va.shape() {
            [m, k] => (*m, *k),
            s => {
                return Err(Error::ShapeMismatch {
                    op: "matmul",
                    detail: format!("left operand must be 2-D, got {:?}", s),
                })
            }
        };
        let (k2, n, vec_rhs) = match vb.shape() {
            [k2, n] => (*k2, *n, false),
            [k2] => (*k2, 1, true),
            s => {
                return Err(Error::ShapeMismatch {
                    op: "matmul",
                    detail: format!("right operand must be 1-D or 2-D, got {:?}", s),
                })
            }
        };
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!("inner dims {} vs {}", k, k2),
            });
        }
        let mut out = vec![0.0; m * n];
        let (da, db) = (va.data(), vb.data());
        for i in 0..m {
            for p in 0..k {
                let aip = da[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let row = &db[p * n..(p + 1) * n];
                let acc = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    acc[j] += aip * row[j];
                }
            }
        }
        let shape = if vec_rhs { vec![m] } else { vec![m, n] };
        self.push(Op::MatMul { a, b }, Tensor::new(shape, out)?)
    }

    /// Matrix product with the right operand transposed:
    /// `[m,k] x [n,k] -> [m,n]`.
    pub fn matmul_nt(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (va, vb) = (&self.vals[a.0], &self.vals[b.0]);
        let (m, k) = match va.shape() {
            [m, k] => (*m, *k),
            s => {
                return Err(Error::ShapeMismatch {
                    op: "matmul_nt",
                    detail: format!("left operand must be 2-D, got {:?}", s),
                })
            }
        };
        let (n, k2) = match vb.shape() {
            [n, k2] => (*n, *k2),
            s => {
                return Err(Error::ShapeMismatch {
                    op: "matmul_nt",
                    detail: format!("right operand must be 2-D, got {:?}", s),
                })
            }
        };
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                detail: format!("inner dims {} vs {}", k, k2),
            });
        }
        let mut out = vec![0.0; m * n];
        let (da, db) = (va.data(), vb.data());
        for i in 0..m {
            let ra = &da[i * k..(i + 1) * k];
            for j in 0..n {
                let rb = &db[j * k..(j + 1) * k];
                out[i * n + j] = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
            }
        }
        self.push(Op::MatMulNT { a, b }, Tensor::new(vec![m, n], out)?)
    }

    fn same_shape(&self, op: &'static str, a: VarId, b: VarId) -> Result<()> {
        if self.vals[a.0].shape() != self.vals[b.0].shape() {
            return Err(Error::ShapeMismatch {
                op,
                detail: format!("{:?} vs {:?}", self.vals[a.0].shape(), self.vals[b.0].shape()),
            });
        }
        Ok(())
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.same_shape("add", a, b)?;
        let data = self.vals[a.0]
            .data()
            .iter()
            .zip(self.vals[b.0].data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.vals[a.0].shape().to_vec();
        self.push(Op::Add { a, b }, Tensor::new(shape, data)?)
    }

    /// Elementwise product of two same-shape tensors.
    pub fn hadamard(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.same_shape("hadamard", a, b)?;
        let data = self.vals[a.0]
            .data()
            .iter()
            .zip(self.vals[b.0].data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.vals[a.0].shape().to_vec();
        self.push(Op::Hadamard { a, b }, Tensor::new(shape, data)?)
    }

    /// Elementwise `mul * x + add` with scalar constants.
    pub fn affine(&mut self, x: VarId, mul: f64, add: f64) -> Result<VarId> {
        let data = self.vals[x.0].data().iter().map(|v| mul * v + add).collect();
        let shape = self.vals[x.0].shape().to_vec();
        self.push(Op::Affine { x, mul }, Tensor::new(shape, data)?)
    }

    /// Elementwise `c * x`.
    pub fn scale(&mut self, x: VarId, c: f64) -> Result<VarId> {
        self.affine(x, c, 0.0)
    }

    fn unary(&mut self, x: VarId, op: Op, f: impl Fn(f64) -> f64) -> Result<VarId> {
        let data = self.vals[x.0].data().iter().map(|v| f(*v)).collect();
        let shape = self.vals[x.0].shape().to_vec();
        self.push(op, Tensor::new(shape, data)?)
    }

    /// Elementwise logistic sigmoid.
    pub fn sigmoid(&mut self, x: VarId) -> Result<VarId> {
        self.unary(x, Op::Sigmoid { x }, |v| {
            // Split on sign so neither branch exponentiates a large positive
            // value.
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        })
    }

    /// Elementwise hyperbolic tangent.
    pub fn tanh(&mut self, x: VarId) -> Result<VarId> {
        self.unary(x, Op::Tanh { x }, f64::tanh)
    }

    /// Elementwise exponential.
    pub fn exp(&mut self, x: VarId) -> Result<VarId> {
        self.unary(x, Op::Exp { x }, f64::exp)
    }

    /// Elementwise natural log with the input clamped to
    /// [`LOG_CLAMP_FLOOR`]; each clamped entry bumps [`Tape::clamp_events`].
    pub fn ln_clamped(&mut self, x: VarId) -> Result<VarId> {
        let clamped = self.vals[x.0].data().iter().filter(|v| **v < LOG_CLAMP_FLOOR).count();
        self.clamp_events += clamped as u64;
        self.unary(x, Op::LnClamped { x }, |v| v.max(LOG_CLAMP_FLOOR).ln())
    }

    /// Elementwise `x^p` for a constant exponent; bases must be non-negative.
    pub fn powf(&mut self, x: VarId, p: f64) -> Result<VarId> {
        self.unary(x, Op::Powf { x, p }, |v| v.powf(p))
    }

    /// `x - logsumexp(x)` over a 1-D vector, computed with max subtraction.
    pub fn log_softmax(&mut self, x: VarId) -> Result<VarId> {
        let v = &self.vals[x.0];
        if v.shape().len() != 1 || v.numel() == 0 {
            return Err(Error::ShapeMismatch {
                op: "log_softmax",
                detail: format!("expected non-empty 1-D input, got {:?}", v.shape()),
            });
        }
        let max = v.data().iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
        let lse = max + v.data().iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let data = v.data().iter().map(|x| x - lse).collect();
        let shape = v.shape().to_vec();
        self.push(Op::LogSoftmax { x }, Tensor::new(shape, data)?)
    }

    /// Concatenates the operands' flat data into a 1-D vector.
    pub fn concat(&mut self, xs: &[VarId]) -> Result<VarId> {
        if xs.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "concat",
                detail: "no operands".to_string(),
            });
        }
        let total: usize = xs.iter().map(|id| self.vals[id.0].numel()).sum();
        let mut data = Vec::with_capacity(total);
        for id in xs {
            data.extend_from_slice(self.vals[id.0].data());
        }
        self.push(Op::Concat { xs: xs.to_vec() }, Tensor::from_vec(data))
    }

    /// Contiguous slice `[start, start+len)` of the operand's flat data.
    pub fn slice(&mut self, x: VarId, start: usize, len: usize) -> Result<VarId> {
        let v = &self.vals[x.0];
        if start + len > v.numel() {
            return Err(Error::ShapeMismatch {
                op: "slice",
                detail: format!("range {}..{} out of {} elements", start, start + len, v.numel()),
            });
        }
        let data = v.data()[start..start + len].to_vec();
        self.push(Op::Slice { x, start, len }, Tensor::from_vec(data))
    }

    /// Reinterprets the operand under a new shape with the same element count.
    pub fn reshape(&mut self, x: VarId, shape: &[usize]) -> Result<VarId> {
        let v = &self.vals[x.0];
        let numel: usize = shape.iter().product();
        if numel != v.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {:?}", v.shape(), shape),
            });
        }
        let t = Tensor::new(shape.to_vec(), v.data().to_vec())?;
        self.push(Op::Reshape { x }, t)
    }

    /// Sum of all entries, producing a `[1]` tensor.
    pub fn sum(&mut self, x: VarId) -> Result<VarId> {
        let s: f64 = self.vals[x.0].data().iter().sum();
        self.push(Op::Sum { x }, Tensor::scalar(s))
    }

    /// Broadcast product `x * s` where `s` has shape `[1]`.
    pub fn scale_var(&mut self, x: VarId, s: VarId) -> Result<VarId> {
        let sv = self.vals[s.0].scalar_value().map_err(|_| Error::ShapeMismatch {
            op: "scale_var",
            detail: format!("scale operand must be [1], got {:?}", self.vals[s.0].shape()),
        })?;
        let data = self.vals[x.0].data().iter().map(|v| v * sv).collect();
        let shape = self.vals[x.0].shape().to_vec();
        self.push(Op::ScaleVar { x, s }, Tensor::new(shape, data)?)
    }

    // ── Backward pass ───────────────────────────────────────────────────────

    fn accum(&mut self, id: VarId, grad: Tensor) {
        match &mut self.grads[id.0] {
            Some(g) => {
                // Shapes always agree here: the contribution is constructed
                // from the node's recorded value shape.
                g.add_assign(&grad).expect("gradient shape drift");
            }
            None => self.grads[id.0] = Some(grad),
        }
    }

    /// Clears all gradient accumulators, keeping the recorded graph.
    pub fn reset_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    /// Accumulates gradients of the scalar `loss` into every variable on a
    /// path to it. Other variables keep a `None` accumulator, reported as
    /// zeros by [`Tape::gradients`].
    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        if self.vals[loss.0].numel() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward",
                detail: format!("loss must be scalar, got {:?}", self.vals[loss.0].shape()),
            });
        }
        self.grads = vec![None; self.vals.len()];
        self.grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(out_grad) = self.grads[idx].take() else {
                continue;
            };
            let op = self.ops[idx].clone();
            self.backprop_node(idx, &op, &out_grad)?;
            // Keep the accumulator so callers can read interior gradients.
            self.grads[idx] = Some(out_grad);
        }
        Ok(())
    }

    fn backprop_node(&mut self, idx: usize, op: &Op, out_grad: &Tensor) -> Result<()> {
        let g = out_grad.data();
        match op {
            Op::Leaf(_) => {}
            Op::MatMul { a, b } => {
                let (m, k) = (self.vals[a.0].shape()[0], self.vals[a.0].shape()[1]);
                let n = self.vals[idx].numel() / m;
                let da = {
                    let vb = self.vals[b.0].data();
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let rb = &vb[p * n..(p + 1) * n];
                            da[i * k + p] =
                                g[i * n..(i + 1) * n].iter().zip(rb).map(|(x, y)| x * y).sum();
                        }
                    }
                    Tensor::new(vec![m, k], da)?
                };
                let db = {
                    let va = self.vals[a.0].data();
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let aip = va[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            let row = &g[i * n..(i + 1) * n];
                            let acc = &mut db[p * n..(p + 1) * n];
                            for j in 0..n {
                                acc[j] += aip * row[j];
                            }
                        }
                    }
                    Tensor::new(self.vals[b.0].shape().to_vec(), db)?
                };
                self.accum(*a, da);
                self.accum(*b, db);
            }
            Op::MatMulNT { a, b } => {
                let (m, k) = (self.vals[a.0].shape()[0], self.vals[a.0].shape()[1]);
                let n = self.vals[b.0].shape()[0];
                let da = {
                    let vb = self.vals[b.0].data();
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let rb = &vb[j * k..(j + 1) * k];
                            let acc = &mut da[i * k..(i + 1) * k];
                            for p in 0..k {
                                acc[p] += gij * rb[p];
                            }
                        }
                    }
                    Tensor::new(vec![m, k], da)?
                };
                let db = {
                    let va = self.vals[a.0].data();
                    let mut db = vec![0.0; n * k];
                    for i in 0..m {
                        let ra = &va[i * k..(i + 1) * k];
                        for j in 0..n {
                            let gij = g[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let acc = &mut db[j * k..(j + 1) * k];
                            for p in 0..k {
                                acc[p] += gij * ra[p];
                            }
                        }
                    }
                    Tensor::new(vec![n, k], db)?
                };
                self.accum(*a, da);
                self.accum(*b, db);
            }
            Op::Add { a, b } => {
                self.accum(*a, out_grad.clone());
                self.accum(*b, out_grad.clone());
            }
            Op::Hadamard { a, b } => {
                let da: Vec<f64> =
                    g.iter().zip(self.vals[b.0].data()).map(|(x, y)| x * y).collect();
                let db: Vec<f64> =
                    g.iter().zip(self.vals[a.0].data()).map(|(x, y)| x * y).collect();
                let sa = self.vals[a.0].shape().to_vec();
                let sb = self.vals[b.0].shape().to_vec();
                self.accum(*a, Tensor::new(sa, da)?);
                self.accum(*b, Tensor::new(sb, db)?);
            }
            Op::Affine { x, mul } => {
                let dx: Vec<f64> = g.iter().map(|v| mul * v).collect();
                let sx = self.vals[x.0].shape().to_vec();
                self.accum(*x, Tensor::new(sx, dx)?);
            }
            Op::Sigmoid { x } => {
                let out = self.vals[idx].data();
                let dx: Vec<f64> = g.iter().zip(out).map(|(gv, s)| gv * s * (1.0 - s)).collect();
                let sx = self.vals[x.0].shape().to_vec();
                self.accum(*x, Tensor::new(sx, dx)?);
            }
            Op::Tanh { x } => {
                let out = self.vals[idx].data();
                let dx: Vec<f64> = g.iter().zip(out).map(|(gv, t)| gv * (1.0 - t * t)).collect();
                let sx = self.vals[x.0].shape().to_vec();
                self.accum(*x, Tensor::new(sx, dx)?);
            }
            Op::Exp { x } => {
                let out = self.vals[idx].data();
                let dx: Vec<f64> = g.iter().zip(out).map(|(gv, e)| gv * e).collect();
                let sx = self.vals[x.0].shape().to_vec();
                self.accum(*x, Tensor::new(sx, dx)?);
            }
            Op::LnClamped { x } => {
                // Below the floor the output is constant, so the derivative
                // there is zero.
                let dx: Vec<f64> = g
                    .iter()
                    .zip(self.vals[x.0].data())
                    .map(|(gv, v)| if *v < LOG_CLAMP_FLOOR { 0.0 } else { gv / v })
                    .collect();
                let sx = self.vals[x.0].shape().to_vec();
                self.accum(*x, Tensor::new(sx, dx)?);
            }
            Op::Powf { x, p } => {
                let dx: Vec<f64> = if *p == 0.0 {
                    vec![0.0; g.len()]
                } else {
                    g.iter()
                        .zip(self.vals[x.0].data())
                        .map(|(gv, v)| {
                            if *p == 1.0 {
                                *gv
                            } else {
                                gv * p * v.powf(p - 1.0)
                            }
                        })
                        .collect()
                };
                let sx = self.vals[x.0].shape().to_vec();
                self.accum(*x, Tensor::new(sx, dx)?);
            }
            Op::LogSoftmax { x } => {
                let out = self.vals[idx].data();
                let gsum: f64 = g.iter().sum();
                let dx: Vec<f64> = g.iter().zip(out).map(|(gv, lp)| gv - lp.exp() * gsum).collect();
                let sx = self.vals[x.0].shape().to_vec();
                self.accum(*x, Tensor::new(sx, dx)?);
            }
            Op::Concat { xs } => {
                let mut offset = 0;
                for id in xs {
                    let n = self.vals[id.0].numel();
                    let part = Tensor::new(
                        self.vals[id.0].shape().to_vec(),
                        g[offset..offset + n].to_vec(),
                    )?;
                    self.accum(*id, part);
                    offset += n;
                }
            }
            Op::Slice { x, start, len } => {
                let mut dx = vec![0.0; self.vals[x.0].numel()];
                dx[*start..start + len].copy_from_slice(g);
                let sx = self.vals[x.0].shape().to_vec();
                self.accum(*x, Tensor::new(sx, dx)?);
            }
            Op::Reshape { x } => {
                let sx = self.vals[x.0].shape().to_vec();
                self.accum(*x, Tensor::new(sx, g.to_vec())?);
            }
            Op::Sum { x } => {
                let dx = vec![g[0]; self.vals[x.0].numel()];
                let sx = self.vals[x.0].shape().to_vec();
                self.accum(*x, Tensor::new(sx, dx)?);
            }
            Op::ScaleVar { x, s } => {
                let sv = self.vals[s.0].data()[0];
                let dx: Vec<f64> = g.iter().map(|v| v * sv).collect();
                let ds: f64 = g.iter().zip(self.vals[x.0].data()).map(|(gv, xv)| gv * xv).sum();
                let sx = self.vals[x.0].shape().to_vec();
                self.accum(*x, Tensor::new(sx, dx)?);
                self.accum(*s, Tensor::scalar(ds));
            }
        }
        Ok(())
    }

    /// Gradient accumulator of a variable, if it received one.
    pub fn grad(&self, id: VarId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Collects gradients for the named leaves after [`Tape::backward`].
    ///
    /// Every requested name is present in the result; leaves that lie on no
    /// path to the loss get an all-zeros gradient of their own shape.
    pub fn gradients(&self, wanted: &[&str]) -> Result<GradientMap> {
        let mut map = GradientMap::new();
        for name in wanted {
            let id = self.lookup(name)?;
            let grad = match self.grad(id) {
                Some(g) => g.clone(),
                None => Tensor::zeros(self.vals[id.0].shape()),
            };
            map.insert((*name).to_string(), grad);
        }
        Ok(map)
    }
}

/// Output of [`evaluate`]: the value of the built expression plus the tape
/// that recorded it, ready for a backward pass.
pub struct Evaluated {
    pub output: Tensor,
    pub output_id: VarId,
    pub tape: Tape,
}

/// Runs a graph-building closure on a fresh tape and returns its output
/// together with the recorded tape.
pub fn evaluate<F>(build: F) -> Result<Evaluated>
where
    F: FnOnce(&mut Tape) -> Result<VarId>,
{
    let mut tape = Tape::new();
    let output_id = build(&mut tape)?;
    let output = tape.value(output_id).clone();
    Ok(Evaluated { output, output_id, tape })
}

#[cfg(test)]
mod tests {
    use super::check::{finite_diff_check, FdConfig, Point};
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_tensor(rng: &mut StdRng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
    }

    #[test]
    fn log_softmax_of_equal_logits() {
        let ev = evaluate(|t| {
            let x = t.input("x", Tensor::from_vec(vec![0.0, 0.0]))?;
            t.log_softmax(x)
        })
        .unwrap();
        let ln2 = f64::ln(2.0);
        assert!((ev.output.data()[0] + ln2).abs() < 1e-15);
        assert!((ev.output.data()[1] + ln2).abs() < 1e-15);
    }

    #[test]
    fn matmul_small_example() {
        let ev = evaluate(|t| {
            let a = t.input("a", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0])?)?;
            let b = t.input("b", Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0])?)?;
            t.matmul(a, b)
        })
        .unwrap();
        assert_eq!(ev.output.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_nt_matches_explicit_transpose() {
        let mut rng = StdRng::seed_from_u64(7);
        let a = rand_tensor(&mut rng, &[3, 4]);
        let b = rand_tensor(&mut rng, &[5, 4]);
        let ev = evaluate(|t| {
            let ia = t.input("a", a.clone())?;
            let ib = t.input("b", b.clone())?;
            t.matmul_nt(ia, ib)
        })
        .unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let want: f64 = (0..4).map(|p| a.data()[i * 4 + p] * b.data()[j * 4 + p]).sum();
                assert!((ev.output.data()[i * 5 + j] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn concat_slice_round_trip() {
        let ev = evaluate(|t| {
            let a = t.input("a", Tensor::from_vec(vec![1.0, 2.0]))?;
            let b = t.input("b", Tensor::from_vec(vec![3.0]))?;
            let c = t.concat(&[a, b])?;
            t.slice(c, 1, 2)
        })
        .unwrap();
        assert_eq!(ev.output.data(), &[2.0, 3.0]);
    }

    #[test]
    fn duplicate_leaf_name_rejected() {
        let mut t = Tape::new();
        t.input("x", Tensor::scalar(1.0)).unwrap();
        assert!(matches!(
            t.input("x", Tensor::scalar(2.0)),
            Err(Error::DuplicateVariable(_))
        ));
    }

    #[test]
    fn non_finite_intermediate_is_detected() {
        let mut t = Tape::new();
        let x = t.input("x", Tensor::scalar(1000.0)).unwrap();
        assert!(matches!(t.exp(x), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn ln_clamp_counts_events_and_zeroes_gradient() {
        let mut t = Tape::new();
        let x = t.input("x", Tensor::from_vec(vec![0.5, 0.0])).unwrap();
        let y = t.ln_clamped(x).unwrap();
        assert_eq!(t.clamp_events(), 1);
        assert_eq!(t.value(y).data()[1], LOG_CLAMP_FLOOR.ln());
        let s = t.sum(y).unwrap();
        t.backward(s).unwrap();
        let g = t.gradients(&["x"]).unwrap();
        assert_eq!(g.get("x").unwrap().data()[0], 2.0);
        assert_eq!(g.get("x").unwrap().data()[1], 0.0);
    }

    #[test]
    fn unused_leaf_reports_zero_gradient() {
        let mut t = Tape::new();
        let x = t.input("x", Tensor::scalar(2.0)).unwrap();
        t.input("unused", Tensor::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        let y = t.hadamard(x, x).unwrap();
        let s = t.sum(y).unwrap();
        t.backward(s).unwrap();
        let g = t.gradients(&["x", "unused"]).unwrap();
        assert_eq!(g.get("x").unwrap().data()[0], 4.0);
        assert_eq!(g.get("unused").unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_valued_site_leaves_output_unchanged() {
        let mut rng = StdRng::seed_from_u64(11);
        let w = rand_tensor(&mut rng, &[3, 3]);
        let x = rand_tensor(&mut rng, &[3]);
        let plain = evaluate(|t| {
            let iw = t.param("w", w.clone())?;
            let ix = t.input("x", x.clone())?;
            let h = t.matmul(iw, ix)?;
            t.tanh(h)
        })
        .unwrap();
        let with_site = evaluate(|t| {
            let iw = t.param("w", w.clone())?;
            let ix = t.input("x", x.clone())?;
            let h = t.matmul(iw, ix)?;
            let site = t.site("s", Tensor::zeros(&[3]))?;
            let h = t.add(h, site)?;
            t.tanh(h)
        })
        .unwrap();
        assert_eq!(plain.output, with_site.output);
    }

    #[test]
    fn same_build_twice_is_bit_identical() {
        let run = || {
            evaluate(|t| {
                let x = t.input("x", Tensor::from_vec(vec![0.3, -0.7, 0.11]))?;
                let y = t.sigmoid(x)?;
                let z = t.log_softmax(y)?;
                t.sum(z)
            })
            .unwrap()
            .output
        };
        let a = run();
        let b = run();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    /// Central-difference check of every primitive op through a composite
    /// expression that uses it.
    #[test]
    fn primitive_gradients_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(42);
        for trial in 0..8 {
            let w = rand_tensor(&mut rng, &[4, 3]);
            let x = rand_tensor(&mut rng, &[3]);
            let m = rand_tensor(&mut rng, &[2, 3]);
            let mut point = Point::new();
            point.insert("w".to_string(), w);
            point.insert("x".to_string(), x);
            point.insert("m".to_string(), m);

            let build = |t: &mut Tape, p: &Point| -> Result<VarId> {
                let w = t.param("w", p["w"].clone())?;
                let x = t.input("x", p["x"].clone())?;
                let m = t.param("m", p["m"].clone())?;
                let h = t.matmul(w, x)?; // [4]
                let s = t.sigmoid(h)?;
                let a = t.slice(s, 0, 3)?;
                let b = t.slice(s, 1, 3)?;
                let prod = t.hadamard(a, b)?;
                let th = t.tanh(prod)?;
                let sim = t.matmul_nt(m, m)?; // [2,2]
                let simf = t.reshape(sim, &[4])?;
                let row = t.slice(simf, 0, 2)?;
                let ls = t.log_softmax(row)?;
                let e = t.exp(ls)?;
                let pw = t.powf(e, 1.7)?;
                let joined = t.concat(&[th, pw])?;
                let shifted = t.affine(joined, 1.3, 0.2)?;
                let ln = t.ln_clamped(shifted)?;
                let total = t.sum(ln)?;
                let norm = t.sum(prod)?;
                let scaled = t.scale_var(total, norm)?;
                let half = t.scale(scaled, 0.5)?;
                t.sum(half)
            };

            let mut eval_tape = Tape::new();
            let loss = build(&mut eval_tape, &point).unwrap();
            eval_tape.backward(loss).unwrap();
            let analytic = eval_tape.gradients(&["w", "x", "m"]).unwrap();

            let report = finite_diff_check(
                |p| {
                    let mut t = Tape::new();
                    let loss = build(&mut t, p)?;
                    t.value(loss).scalar_value()
                },
                &point,
                &analytic,
                &FdConfig::default(),
            )
            .unwrap();
            assert!(
                report.pass,
                "trial {}: max rel err {:.3e} at {:?}",
                trial, report.max_rel_err, report.worst
            );
        }
    }

    #[test]
    fn gradient_is_linear_in_the_loss() {
        let x0 = Tensor::from_vec(vec![0.4, -0.2, 0.9]);
        let grads_of = |alpha: f64, beta: f64| -> GradientMap {
            let mut t = Tape::new();
            let x = t.input("x", x0.clone()).unwrap();
            let f = t.sigmoid(x).unwrap();
            let f = t.sum(f).unwrap();
            let g = t.tanh(x).unwrap();
            let g = t.sum(g).unwrap();
            let af = t.scale(f, alpha).unwrap();
            let bg = t.scale(g, beta).unwrap();
            let total = t.add(af, bg).unwrap();
            t.backward(total).unwrap();
            t.gradients(&["x"]).unwrap()
        };
        let gf = grads_of(1.0, 0.0);
        let gg = grads_of(0.0, 1.0);
        let combined = grads_of(2.0, -3.0);
        for i in 0..3 {
            let want = 2.0 * gf.get("x").unwrap().data()[i] - 3.0 * gg.get("x").unwrap().data()[i];
            assert!((combined.get("x").unwrap().data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn merge_add_sums_overlapping_names() {
        let mut a = GradientMap::new();
        a.insert("w".to_string(), Tensor::from_vec(vec![1.0, 2.0]));
        let mut b = GradientMap::new();
        b.insert("w".to_string(), Tensor::from_vec(vec![10.0, 20.0]));
        b.insert("v".to_string(), Tensor::scalar(5.0));
        a.merge_add(&b).unwrap();
        assert_eq!(a.get("w").unwrap().data(), &[11.0, 22.0]);
        assert_eq!(a.get("v").unwrap().data(), &[5.0]);
    }
}
