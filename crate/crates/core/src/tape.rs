//! Reverse accumulation over jet-valued nodes.
//!
//! Every node carries a full [`Jet2`] payload and the reverse sweep moves
//! 10-component cotangents, because losses read derivative components of
//! intermediate jets. Parameters enter as constant jets; their gradient is
//! the value component of their cotangent.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

use crate::jet::{diff_pullback, mul_pullback, unary_pullback, Jet2, JetScalar, UnaryOp};

pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error("node {0} is not on this tape (len {1})")]
    UnknownNode(NodeId, usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    /// External input jet; its cotangent is read back after the sweep.
    Leaf,
    Param,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Unary(UnaryOp),
    Diff(usize),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    inputs: [NodeId; 2],
    jet: Jet2,
}

/// Append-only jet tape. Inputs always precede outputs.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<NodeId>>,
}

/// A jet recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

/// Cotangents of every node after a reverse sweep.
pub struct Adjoints {
    cot: Vec<Jet2>,
}

impl Adjoints {
    pub fn of(&self, id: NodeId) -> &Jet2 {
        &self.cot[id]
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop all nodes, keeping allocations.
    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
        self.params.borrow_mut().clear();
    }

    fn push(&self, op: Op, inputs: [NodeId; 2], jet: Jet2) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { op, inputs, jet });
        Var { tape: self, id }
    }

    fn payload(&self, id: NodeId) -> Jet2 {
        self.nodes.borrow()[id].jet
    }

    pub fn leaf(&self, jet: Jet2) -> Var<'_> {
        self.push(Op::Leaf, [0, 0], jet)
    }

    pub fn constant(&self, jet: Jet2) -> Var<'_> {
        self.push(Op::Const, [0, 0], jet)
    }

    /// A trainable scalar. It is a constant with respect to `(x, y, t)`.
    pub fn param(&self, value: f64) -> Var<'_> {
        let v = self.push(Op::Param, [0, 0], Jet2::constant(value));
        self.params.borrow_mut().push(v.id);
        v
    }

    pub fn param_ids(&self) -> Vec<NodeId> {
        self.params.borrow().clone()
    }

    /// Reverse sweep from `output`, seeded with the cotangent `seed`.
    pub fn backward_seeded(&self, output: NodeId, seed: Jet2) -> Result<Adjoints, TapeError> {
        let nodes = self.nodes.borrow();
        if output >= nodes.len() {
            return Err(TapeError::UnknownNode(output, nodes.len()));
        }
        let mut cot = vec![Jet2::ZERO; output + 1];
        cot[output] = seed;
        for id in (0..=output).rev() {
            let node = &nodes[id];
            let c = cot[id];
            if c == Jet2::ZERO {
                continue;
            }
            let [a, b] = node.inputs;
            match node.op {
                Op::Leaf | Op::Param | Op::Const => {}
                Op::Add => {
                    cot[a] = cot[a] + c;
                    cot[b] = cot[b] + c;
                }
                Op::Sub => {
                    cot[a] = cot[a] + c;
                    cot[b] = cot[b] - c;
                }
                Op::Mul => {
                    let (ja, jb) = (nodes[a].jet, nodes[b].jet);
                    let (mut da, mut db) = (Jet2::ZERO, Jet2::ZERO);
                    mul_pullback(&ja, &jb, &c, &mut da, &mut db);
                    cot[a] = cot[a] + da;
                    cot[b] = cot[b] + db;
                }
                Op::Div => {
                    // a / b = a * recip(b)
                    let (ja, jb) = (nodes[a].jet, nodes[b].jet);
                    let r = jb.recip();
                    let (mut da, mut dr, mut db) = (Jet2::ZERO, Jet2::ZERO, Jet2::ZERO);
                    mul_pullback(&ja, &r, &c, &mut da, &mut dr);
                    unary_pullback(UnaryOp::Recip, &jb, &dr, &mut db);
                    cot[a] = cot[a] + da;
                    cot[b] = cot[b] + db;
                }
                Op::Unary(op) => {
                    let ja = nodes[a].jet;
                    let mut da = Jet2::ZERO;
                    unary_pullback(op, &ja, &c, &mut da);
                    cot[a] = cot[a] + da;
                }
                Op::Diff(axis) => {
                    let mut da = Jet2::ZERO;
                    diff_pullback(axis, &c, &mut da);
                    cot[a] = cot[a] + da;
                }
            }
        }
        cot.resize(nodes.len(), Jet2::ZERO);
        Ok(Adjoints { cot })
    }

    /// Reverse sweep from a scalar loss: the seed is 1 on the value.
    pub fn backward(&self, loss: NodeId) -> Result<Adjoints, TapeError> {
        self.backward_seeded(loss, Jet2::constant(1.0))
    }
}

/// Gradient of the loss value with respect to every parameter leaf, in
/// creation order.
pub fn tape_backward(tape: &Tape, loss: NodeId) -> Result<Vec<f64>, TapeError> {
    let adj = tape.backward(loss)?;
    Ok(tape
        .params
        .borrow()
        .iter()
        .map(|&id| adj.of(id).value)
        .collect())
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn binary(self, rhs: Var<'t>, op: Op, jet: Jet2) -> Var<'t> {
        assert!(
            std::ptr::eq(self.tape, rhs.tape),
            "operands recorded on different tapes"
        );
        self.tape.push(op, [self.id, rhs.id], jet)
    }

    fn unary(self, op: UnaryOp) -> Var<'t> {
        let jet = self.jet().apply(op);
        self.tape.push(Op::Unary(op), [self.id, 0], jet)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        let jet = self.jet() + rhs.jet();
        self.binary(rhs, Op::Add, jet)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let jet = self.jet() - rhs.jet();
        self.binary(rhs, Op::Sub, jet)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        let jet = self.jet() * rhs.jet();
        self.binary(rhs, Op::Mul, jet)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let jet = self.jet() / rhs.jet();
        self.binary(rhs, Op::Div, jet)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(UnaryOp::Neg)
    }
}

impl<'t> JetScalar for Var<'t> {
    fn lift(&self, jet: Jet2) -> Self {
        self.tape.constant(jet)
    }
    fn jet(&self) -> Jet2 {
        self.tape.payload(self.id)
    }
    fn tanh(self) -> Self {
        self.unary(UnaryOp::Tanh)
    }
    fn exp(self) -> Self {
        self.unary(UnaryOp::Exp)
    }
    fn sin(self) -> Self {
        self.unary(UnaryOp::Sin)
    }
    fn cos(self) -> Self {
        self.unary(UnaryOp::Cos)
    }
    fn square(self) -> Self {
        self.unary(UnaryOp::Square)
    }
    fn d(self, axis: usize) -> Self {
        let jet = self.jet().d(axis);
        self.tape.push(Op::Diff(axis), [self.id, 0], jet)
    }
}
