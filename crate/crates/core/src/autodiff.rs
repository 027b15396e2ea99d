//! Reverse-mode tape for the differentiable MPC unroll.
//!
//! Scalar arithmetic records one node per operation with its local partials.
//! Expensive sub-computations (a dynamics step through a network, a cost
//! network gradient) are recorded as *blocks*: a group of output nodes whose
//! vector-Jacobian product is computed lazily at sweep time by a
//! [`BlockVjp`] resolver from a stored payload. Blocks whose outputs receive
//! no adjoint are skipped, so rejected line-search trials cost nothing.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::math;
use crate::scalar::Scalar;

const CONST: u32 = u32::MAX;

/// A block of outputs whose VJP is resolved lazily.
#[derive(Debug, Clone)]
pub struct Block {
    pub kind: u32,
    /// Input node indices; constant inputs are dropped and reported as `None`.
    pub inputs: Vec<Option<u32>>,
    pub first_output: u32,
    pub n_outputs: u32,
    pub payload: Vec<f64>,
}

/// Computes `in_adj += Jᵀ out_adj` (and any parameter contribution) for a block.
pub trait BlockVjp {
    fn vjp(&self, block: &Block, out_adj: &[f64], in_adj: &mut [f64], param_grad: &mut [f64]);
}

/// Resolver for tapes that only use [`Tape::dense_block`].
pub struct DenseOnly;

impl BlockVjp for DenseOnly {
    fn vjp(&self, _: &Block, _: &[f64], _: &mut [f64], _: &mut [f64]) {
        unreachable!("tape contains a lazy block but no resolver was supplied")
    }
}

/// Block kind reserved for blocks carrying an explicit row-major Jacobian.
pub const DENSE_BLOCK: u32 = u32::MAX;

#[derive(Default)]
struct Inner {
    edge_start: Vec<u32>,
    edges: Vec<(u32, f64)>,
    leaves: Vec<(u32, u32)>,
    blocks: Vec<Block>,
}

impl Inner {
    fn push_node(&mut self, parents: &[(u32, f64)]) -> u32 {
        if self.edge_start.is_empty() {
            self.edge_start.push(0);
        }
        let idx = (self.edge_start.len() - 1) as u32;
        self.edges.extend_from_slice(parents);
        self.edge_start.push(self.edges.len() as u32);
        idx
    }

    fn len(&self) -> usize {
        self.edge_start.len().saturating_sub(1)
    }
}

#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

/// Result of a reverse sweep.
pub struct Gradients {
    adjoints: Vec<f64>,
    pub params: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        if v.idx == CONST {
            0.0
        } else {
            self.adjoints[v.idx as usize]
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Independent variable with no parameter binding.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.inner.borrow_mut().push_node(&[]);
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    /// Independent variable whose adjoint is accumulated into `params[index]`.
    pub fn param(&self, value: f64, index: usize) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.push_node(&[]);
        inner.leaves.push((idx, index as u32));
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    /// Records a lazily differentiated block. When every input is constant
    /// and the block does not depend on parameters, constants are returned.
    pub fn block<'t>(
        &'t self,
        kind: u32,
        inputs: &[Var<'t>],
        outputs: &[f64],
        payload: Vec<f64>,
        param_dependent: bool,
    ) -> Vec<Var<'t>> {
        let any_live = inputs.iter().any(|v| v.idx != CONST);
        if !any_live && !param_dependent {
            return outputs.iter().map(|&v| Var::constant(v)).collect();
        }
        let mut inner = self.inner.borrow_mut();
        let first = inner.len() as u32;
        let vars: Vec<Var<'t>> = outputs
            .iter()
            .map(|&val| Var {
                tape: Some(self),
                idx: inner.push_node(&[]),
                val,
            })
            .collect();
        inner.blocks.push(Block {
            kind,
            inputs: inputs
                .iter()
                .map(|v| (v.idx != CONST).then_some(v.idx))
                .collect(),
            first_output: first,
            n_outputs: outputs.len() as u32,
            payload,
        });
        vars
    }

    /// Block with an explicit Jacobian (`outputs × inputs`, row-major).
    pub fn dense_block<'t>(
        &'t self,
        inputs: &[Var<'t>],
        outputs: &[f64],
        jacobian: &[f64],
    ) -> Vec<Var<'t>> {
        debug_assert_eq!(jacobian.len(), inputs.len() * outputs.len());
        self.block(DENSE_BLOCK, inputs, outputs, jacobian.to_vec(), false)
    }

    /// Reverse sweep from the seeded adjoints.
    pub fn backward(
        &self,
        seeds: &[(Var<'_>, f64)],
        n_params: usize,
        resolver: &dyn BlockVjp,
    ) -> Gradients {
        let inner = self.inner.borrow();
        let n = inner.len();
        let mut adj = vec![0.0; n];
        for (v, g) in seeds {
            if v.idx != CONST {
                adj[v.idx as usize] += g;
            }
        }
        let mut params = vec![0.0; n_params];
        let mut next_block = inner.blocks.len();
        let mut in_adj = Vec::new();
        for i in (0..n).rev() {
            while next_block > 0 && inner.blocks[next_block - 1].first_output as usize == i {
                next_block -= 1;
                let block = &inner.blocks[next_block];
                let lo = block.first_output as usize;
                let out_adj = &adj[lo..lo + block.n_outputs as usize];
                if out_adj.iter().all(|&a| a == 0.0) {
                    continue;
                }
                in_adj.clear();
                in_adj.resize(block.inputs.len(), 0.0);
                if block.kind == DENSE_BLOCK {
                    let m = block.inputs.len();
                    for (r, &a) in out_adj.iter().enumerate() {
                        for c in 0..m {
                            in_adj[c] += a * block.payload[r * m + c];
                        }
                    }
                } else {
                    let out_adj = out_adj.to_vec();
                    resolver.vjp(block, &out_adj, &mut in_adj, &mut params);
                }
                for (inp, g) in block.inputs.iter().zip(&in_adj) {
                    if let Some(p) = inp {
                        adj[*p as usize] += g;
                    }
                }
            }
            let a = adj[i];
            if a != 0.0 {
                let (s, e) = (inner.edge_start[i] as usize, inner.edge_start[i + 1] as usize);
                for &(p, d) in &inner.edges[s..e] {
                    adj[p as usize] += a * d;
                }
            }
        }
        for &(node, p) in &inner.leaves {
            params[p as usize] += adj[node as usize];
        }
        Gradients {
            adjoints: adj,
            params,
        }
    }
}

/// A value recorded on a [`Tape`], or a free constant.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl core::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if self.idx == CONST {
            write!(f, "Var(const {})", self.val)
        } else {
            write!(f, "Var(#{} = {})", self.idx, self.val)
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Var {
            tape: None,
            idx: CONST,
            val,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.idx == CONST
    }

    fn unary(self, val: f64, d: f64) -> Self {
        match self.tape {
            Some(t) if self.idx != CONST => Var {
                tape: Some(t),
                idx: t.inner.borrow_mut().push_node(&[(self.idx, d)]),
                val,
            },
            _ => Var::constant(val),
        }
    }

    fn binary(self, o: Self, val: f64, da: f64, db: f64) -> Self {
        let tape = match self.tape.or(o.tape) {
            Some(t) => t,
            None => return Var::constant(val),
        };
        let mut parents = [(0u32, 0.0f64); 2];
        let mut k = 0;
        if self.idx != CONST {
            parents[k] = (self.idx, da);
            k += 1;
        }
        if o.idx != CONST {
            parents[k] = (o.idx, db);
            k += 1;
        }
        Var {
            tape: Some(tape),
            idx: tape.inner.borrow_mut().push_node(&parents[..k]),
            val,
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Self) -> Self {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Self) -> Self {
        let q = self.val / o.val;
        self.binary(o, q, 1.0 / o.val, -q / o.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: f64) -> Self {
        self.unary(self.val + o, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: f64) -> Self {
        self.unary(self.val - o, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: f64) -> Self {
        self.unary(self.val * o, o)
    }
}

impl<'t> AddAssign for Var<'t> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<'t> Scalar for Var<'t> {
    fn constant(v: f64) -> Self {
        Var::constant(v)
    }
    fn value(self) -> f64 {
        self.val
    }
    fn exp(self) -> Self {
        let e = math::exp(self.val);
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(math::ln(self.val), 1.0 / self.val)
    }
    fn tanh(self) -> Self {
        let t = math::tanh(self.val);
        self.unary(t, 1.0 - t * t)
    }
    fn sqrt(self) -> Self {
        let s = math::sqrt(self.val);
        self.unary(s, 0.5 / s)
    }
    fn sigmoid(self) -> Self {
        let s = math::sigmoid(self.val);
        self.unary(s, s * (1.0 - s))
    }
    fn softplus(self) -> Self {
        self.unary(math::softplus(self.val), math::sigmoid(self.val))
    }
    fn is_exact_zero(self) -> bool {
        self.idx == CONST && self.val == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<S: Scalar>(x: S, y: S) -> S {
        (x * y + x.exp()).ln() * (y - 0.5).tanh() + (x * x + y * y).sqrt() / (y.softplus() + 1.0)
    }

    #[test]
    fn reverse_sweep_matches_dual_numbers() {
        use crate::scalar::Dual;
        let (x0, y0) = (0.7, -0.3);
        let tape = Tape::new();
        let x = tape.var(x0);
        let y = tape.var(y0);
        let out = f(x, y);
        assert_eq!(out.value(), f(x0, y0));
        let g = tape.backward(&[(out, 1.0)], 0, &DenseOnly);
        let dx = f(Dual::new(x0, 1.0), Dual::constant(y0)).du;
        let dy = f(Dual::constant(x0), Dual::new(y0, 1.0)).du;
        assert!((g.wrt(x) - dx).abs() < 1e-12);
        assert!((g.wrt(y) - dy).abs() < 1e-12);
    }

    #[test]
    fn constants_record_nothing() {
        let tape = Tape::new();
        let c = Var::constant(2.0);
        let d = (c * c).exp() + 1.0;
        assert!(d.is_constant());
        assert!(tape.is_empty());
    }

    #[test]
    fn dense_block_and_param_leaves() {
        let tape = Tape::new();
        let a = tape.param(2.0, 1);
        let b = tape.var(3.0);
        // outputs: (a*b, a + 2b) via explicit Jacobian
        let outs = tape.dense_block(&[a, b], &[6.0, 8.0], &[3.0, 2.0, 1.0, 2.0]);
        let loss = outs[0] * outs[1];
        let g = tape.backward(&[(loss, 1.0)], 2, &DenseOnly);
        // dL/da = 8*3 + 6*1 = 30, dL/db = 8*2 + 6*2 = 28
        assert_eq!(g.params, vec![0.0, 30.0]);
        assert_eq!(g.wrt(b), 28.0);
    }

    #[test]
    fn unused_blocks_are_skipped() {
        struct Panics;
        impl BlockVjp for Panics {
            fn vjp(&self, _: &Block, _: &[f64], _: &mut [f64], _: &mut [f64]) {
                panic!("should not be called");
            }
        }
        let tape = Tape::new();
        let x = tape.var(1.0);
        let _unused = tape.block(7, &[x], &[1.0], vec![], false);
        let y = x * 2.0;
        let g = tape.backward(&[(y, 1.0)], 0, &Panics);
        assert_eq!(g.wrt(x), 2.0);
    }
}
