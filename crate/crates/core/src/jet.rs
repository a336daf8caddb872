//! Second-order Taylor jets over the space-time input `(x, y, t)`.
//!
//! A [`Jet2`] carries a scalar value together with its gradient and Hessian
//! with respect to the three input coordinates. The Hessian is stored as its
//! six unique entries, so symmetry holds by construction.
//!
//! The [`JetScalar`] trait abstracts over plain jets and tape-recorded jets
//! (see [`crate::tape::Var`]) so that every physical residual is written once
//! and evaluated on either.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

/// Number of scalar components in a jet: value, 3 gradient, 6 Hessian.
pub const JET_LEN: usize = 10;

/// Axis index of `x`.
pub const AXIS_X: usize = 0;
/// Axis index of `y`.
pub const AXIS_Y: usize = 1;
/// Axis index of `t`.
pub const AXIS_T: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JetError {
    #[error("division by a jet with zero value")]
    DivisionByZero,
    #[error("non-finite result from {0}")]
    Overflow(&'static str),
    #[error("axis {0} out of range (expected 0, 1 or 2)")]
    BadAxis(usize),
}

/// Position of the unique Hessian entry `(i, j)` in the packed storage
/// `[xx, xy, xt, yy, yt, tt]`.
#[inline]
pub const fn hess_index(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    match (a, b) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

/// Row/column pairs of the packed Hessian entries.
pub const HESS_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Jet2 {
    pub value: f64,
    pub grad: [f64; 3],
    /// Packed symmetric Hessian, see [`hess_index`].
    pub hess: [f64; 6],
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2 {
        value: 0.0,
        grad: [0.0; 3],
        hess: [0.0; 6],
    };

    pub fn constant(value: f64) -> Self {
        Jet2 {
            value,
            ..Jet2::ZERO
        }
    }

    /// Seed an input coordinate: unit gradient on `axis`, zero Hessian.
    pub fn var(value: f64, axis: usize) -> Result<Self, JetError> {
        if axis > 2 {
            return Err(JetError::BadAxis(axis));
        }
        let mut grad = [0.0; 3];
        grad[axis] = 1.0;
        Ok(Jet2 {
            value,
            grad,
            hess: [0.0; 6],
        })
    }

    /// Symmetric Hessian entry `∂²/∂i∂j`.
    #[inline]
    pub fn hess_at(&self, i: usize, j: usize) -> f64 {
        self.hess[hess_index(i, j)]
    }

    pub fn hess_matrix(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = self.hess_at(i, j);
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.iter().all(|h| h.is_finite())
    }

    /// Flat view `[value, gx, gy, gt, hxx, hxy, hxt, hyy, hyt, htt]`.
    pub fn to_array(&self) -> [f64; JET_LEN] {
        let mut a = [0.0; JET_LEN];
        a[0] = self.value;
        a[1..4].copy_from_slice(&self.grad);
        a[4..10].copy_from_slice(&self.hess);
        a
    }

    pub fn from_array(a: &[f64]) -> Self {
        let mut j = Jet2::constant(a[0]);
        j.grad.copy_from_slice(&a[1..4]);
        j.hess.copy_from_slice(&a[4..10]);
        j
    }

    /// Derivative of the jet along `axis`, lowered by one order.
    ///
    /// The result's value is `∂f/∂axis` and its gradient is the matching
    /// Hessian row. Its Hessian would need third derivatives and is zero.
    pub fn d(&self, axis: usize) -> Jet2 {
        let mut grad = [0.0; 3];
        for (k, g) in grad.iter_mut().enumerate() {
            *g = self.hess_at(axis, k);
        }
        Jet2 {
            value: self.grad[axis],
            grad,
            hess: [0.0; 6],
        }
    }

    fn chain(&self, f0: f64, f1: f64, f2: f64) -> Jet2 {
        let mut out = Jet2::constant(f0);
        for i in 0..3 {
            out.grad[i] = f1 * self.grad[i];
        }
        for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
            out.hess[k] = f1 * self.hess[k] + f2 * self.grad[i] * self.grad[j];
        }
        out
    }

    pub fn apply(&self, op: UnaryOp) -> Jet2 {
        let [f0, f1, f2, _] = op.derivatives(self.value);
        self.chain(f0, f1, f2)
    }

    pub fn tanh(&self) -> Jet2 {
        self.apply(UnaryOp::Tanh)
    }

    pub fn exp(&self) -> Jet2 {
        self.apply(UnaryOp::Exp)
    }

    pub fn sin(&self) -> Jet2 {
        self.apply(UnaryOp::Sin)
    }

    pub fn cos(&self) -> Jet2 {
        self.apply(UnaryOp::Cos)
    }

    pub fn square(&self) -> Jet2 {
        self.apply(UnaryOp::Square)
    }

    pub fn recip(&self) -> Jet2 {
        self.apply(UnaryOp::Recip)
    }

    fn mul_jet(&self, b: &Jet2) -> Jet2 {
        let a = self;
        let mut out = Jet2::constant(a.value * b.value);
        for i in 0..3 {
            out.grad[i] = a.grad[i] * b.value + a.value * b.grad[i];
        }
        for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
            out.hess[k] = a.hess[k] * b.value
                + a.value * b.hess[k]
                + a.grad[i] * b.grad[j]
                + a.grad[j] * b.grad[i];
        }
        out
    }

    fn lin(&self, b: &Jet2, sb: f64) -> Jet2 {
        let mut out = Jet2::constant(self.value + sb * b.value);
        for i in 0..3 {
            out.grad[i] = self.grad[i] + sb * b.grad[i];
        }
        for k in 0..6 {
            out.hess[k] = self.hess[k] + sb * b.hess[k];
        }
        out
    }

    pub fn scale(&self, c: f64) -> Jet2 {
        let mut out = *self;
        out.value *= c;
        out.grad.iter_mut().for_each(|g| *g *= c);
        out.hess.iter_mut().for_each(|h| *h *= c);
        out
    }
}

impl fmt::Display for Jet2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Jet2(v={:e}, g={:?}, h={:?})",
            self.value, self.grad, self.hess
        )
    }
}

/// Elementary binary operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Elementary unary operations. `Recip` backs division and is not exposed
/// as a separate primitive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Tanh,
    Exp,
    Sin,
    Cos,
    Neg,
    Square,
    Recip,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Tanh => "tanh",
            UnaryOp::Exp => "exp",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Neg => "neg",
            UnaryOp::Square => "square",
            UnaryOp::Recip => "recip",
        }
    }

    /// `[f, f', f'', f''']` at `x`. The third derivative feeds the reverse
    /// pass through the Hessian components.
    pub fn derivatives(self, x: f64) -> [f64; 4] {
        match self {
            UnaryOp::Tanh => {
                let s = x.tanh();
                let d1 = 1.0 - s * s;
                let d2 = -2.0 * s * d1;
                let d3 = -2.0 * d1 * (d1 - 2.0 * s * s);
                [s, d1, d2, d3]
            }
            UnaryOp::Exp => {
                let e = x.exp();
                [e, e, e, e]
            }
            UnaryOp::Sin => {
                let (s, c) = x.sin_cos();
                [s, c, -s, -c]
            }
            UnaryOp::Cos => {
                let (s, c) = x.sin_cos();
                [c, -s, -c, s]
            }
            UnaryOp::Neg => [-x, -1.0, 0.0, 0.0],
            UnaryOp::Square => [x * x, 2.0 * x, 2.0, 0.0],
            UnaryOp::Recip => {
                let r = 1.0 / x;
                let r2 = r * r;
                [r, -r2, 2.0 * r2 * r, -6.0 * r2 * r2]
            }
        }
    }
}

/// Checked binary jet operation.
pub fn jet_binary(op: BinaryOp, a: &Jet2, b: &Jet2) -> Result<Jet2, JetError> {
    let out = match op {
        BinaryOp::Add => a.lin(b, 1.0),
        BinaryOp::Sub => a.lin(b, -1.0),
        BinaryOp::Mul => a.mul_jet(b),
        BinaryOp::Div => {
            if b.value == 0.0 {
                return Err(JetError::DivisionByZero);
            }
            a.mul_jet(&b.recip())
        }
    };
    if out.is_finite() {
        Ok(out)
    } else {
        Err(JetError::Overflow(match op {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        }))
    }
}

/// Checked unary jet operation. `Recip` of a zero value is a domain error.
pub fn jet_unary(op: UnaryOp, a: &Jet2) -> Result<Jet2, JetError> {
    if op == UnaryOp::Recip && a.value == 0.0 {
        return Err(JetError::DivisionByZero);
    }
    let out = a.apply(op);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(JetError::Overflow(op.name()))
    }
}

/// Reverse-mode rule for a unary op: accumulate into `adj_in` the pullback
/// of the output cotangent `cot` through `op` evaluated at input jet `a`.
///
/// Cotangents share the packed layout of [`Jet2`]; each packed Hessian entry
/// is treated as an independent component.
pub fn unary_pullback(op: UnaryOp, a: &Jet2, cot: &Jet2, adj_in: &mut Jet2) {
    let [_, f1, f2, f3] = op.derivatives(a.value);
    let mut dv = cot.value * f1;
    for i in 0..3 {
        dv += cot.grad[i] * f2 * a.grad[i];
        adj_in.grad[i] += cot.grad[i] * f1;
    }
    for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
        let c = cot.hess[k];
        if c == 0.0 {
            continue;
        }
        dv += c * (f2 * a.hess[k] + f3 * a.grad[i] * a.grad[j]);
        adj_in.grad[i] += c * f2 * a.grad[j];
        adj_in.grad[j] += c * f2 * a.grad[i];
        adj_in.hess[k] += c * f1;
    }
    adj_in.value += dv;
}

/// Reverse-mode rule for `a * b`.
pub fn mul_pullback(a: &Jet2, b: &Jet2, cot: &Jet2, adj_a: &mut Jet2, adj_b: &mut Jet2) {
    adj_a.value += cot.value * b.value;
    adj_b.value += cot.value * a.value;
    for i in 0..3 {
        let c = cot.grad[i];
        adj_a.grad[i] += c * b.value;
        adj_b.value += c * a.grad[i];
        adj_a.value += c * b.grad[i];
        adj_b.grad[i] += c * a.value;
    }
    for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
        let c = cot.hess[k];
        if c == 0.0 {
            continue;
        }
        adj_a.hess[k] += c * b.value;
        adj_b.value += c * a.hess[k];
        adj_a.value += c * b.hess[k];
        adj_b.hess[k] += c * a.value;
        adj_a.grad[i] += c * b.grad[j];
        adj_a.grad[j] += c * b.grad[i];
        adj_b.grad[j] += c * a.grad[i];
        adj_b.grad[i] += c * a.grad[j];
    }
}

/// Reverse-mode rule for [`Jet2::d`].
pub fn diff_pullback(axis: usize, cot: &Jet2, adj_in: &mut Jet2) {
    adj_in.grad[axis] += cot.value;
    for k in 0..3 {
        adj_in.hess[hess_index(axis, k)] += cot.grad[k];
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        self.lin(&rhs, 1.0)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        self.lin(&rhs, -1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        self.mul_jet(&rhs)
    }
}

/// Unchecked division; use [`jet_binary`] when the divisor may vanish.
impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, rhs: Jet2) -> Jet2 {
        self.mul_jet(&rhs.recip())
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

/// Common interface of plain and tape-recorded jets.
pub trait JetScalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// A constant jet living in the same context as `self`.
    fn lift(&self, jet: Jet2) -> Self;
    fn jet(&self) -> Jet2;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn square(self) -> Self;
    /// Derivative along `axis`, see [`Jet2::d`].
    fn d(self, axis: usize) -> Self;

    fn value(&self) -> f64 {
        self.jet().value
    }

    fn constant(&self, c: f64) -> Self {
        self.lift(Jet2::constant(c))
    }

    fn scale(self, c: f64) -> Self {
        self * self.constant(c)
    }
}

impl JetScalar for Jet2 {
    fn lift(&self, jet: Jet2) -> Self {
        jet
    }
    fn jet(&self) -> Jet2 {
        *self
    }
    fn tanh(self) -> Self {
        Jet2::tanh(&self)
    }
    fn exp(self) -> Self {
        Jet2::exp(&self)
    }
    fn sin(self) -> Self {
        Jet2::sin(&self)
    }
    fn cos(self) -> Self {
        Jet2::cos(&self)
    }
    fn square(self) -> Self {
        Jet2::square(&self)
    }
    fn d(self, axis: usize) -> Self {
        Jet2::d(&self, axis)
    }
    fn scale(self, c: f64) -> Self {
        Jet2::scale(&self, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(op: UnaryOp, x: f64, h: f64) -> (f64, f64) {
        let f = |z: f64| op.derivatives(z)[0];
        let j = Jet2::var(x, 0).unwrap().apply(op);
        let g_fd = (f(x + h) - f(x - h)) / (2.0 * h);
        let h_fd = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        (
            (j.grad[0] - g_fd).abs() / g_fd.abs().max(1e-12),
            (j.hess[0] - h_fd).abs() / h_fd.abs().max(1e-12),
        )
    }

    #[test]
    fn var_seeds() {
        let j = Jet2::var(3.0, 0).unwrap();
        assert_eq!(j.value, 3.0);
        assert_eq!(j.grad, [1.0, 0.0, 0.0]);
        assert_eq!(j.hess, [0.0; 6]);
        let j = Jet2::var(0.0, 2).unwrap();
        assert_eq!(j.grad, [0.0, 0.0, 1.0]);
        let j = Jet2::var(1.5, 1).unwrap();
        assert_eq!((j.value, j.grad), (1.5, [0.0, 1.0, 0.0]));
        assert_eq!(Jet2::var(1.0, 3), Err(JetError::BadAxis(3)));
    }

    #[test]
    fn square_via_mul() {
        let x = Jet2::var(3.0, 0).unwrap();
        let y = jet_binary(BinaryOp::Mul, &x, &x).unwrap();
        assert_eq!(y.value, 9.0);
        assert_eq!(y.grad, [6.0, 0.0, 0.0]);
        assert_eq!(y.hess_at(0, 0), 2.0);
    }

    #[test]
    fn tanh_at_zero() {
        let y = jet_unary(UnaryOp::Tanh, &Jet2::var(0.0, 0).unwrap()).unwrap();
        assert_eq!(y.value, 0.0);
        assert_eq!(y.grad, [1.0, 0.0, 0.0]);
        assert_eq!(y.hess, [0.0; 6]);
    }

    #[test]
    fn tanh_matches_finite_differences() {
        let (eg, eh) = fd_check(UnaryOp::Tanh, 0.5, 1e-4);
        assert!(eg < 1e-6, "grad rel err {eg}");
        assert!(eh < 1e-6, "hess rel err {eh}");
    }

    #[test]
    fn other_unaries_match_finite_differences() {
        for op in [UnaryOp::Exp, UnaryOp::Sin, UnaryOp::Cos, UnaryOp::Square, UnaryOp::Recip] {
            let (eg, eh) = fd_check(op, 0.7, 1e-4);
            assert!(eg < 1e-6 && eh < 1e-6, "{op:?}: {eg} {eh}");
        }
    }

    #[test]
    fn division_errors() {
        let a = Jet2::var(1.0, 0).unwrap();
        let z = Jet2::constant(0.0);
        assert_eq!(jet_binary(BinaryOp::Div, &a, &z), Err(JetError::DivisionByZero));
        let big = Jet2::constant(1e300);
        assert!(matches!(
            jet_binary(BinaryOp::Mul, &big, &big),
            Err(JetError::Overflow("mul"))
        ));
        let e = jet_unary(UnaryOp::Exp, &Jet2::constant(1000.0));
        assert_eq!(e, Err(JetError::Overflow("exp")));
    }

    #[test]
    fn derivative_lowers_order() {
        // f = x^2 y  ->  df/dx = 2xy, d/dy(df/dx) = 2x
        let x = Jet2::var(1.5, 0).unwrap();
        let y = Jet2::var(-2.0, 1).unwrap();
        let f = x * x * y;
        let fx = f.d(AXIS_X);
        assert_eq!(fx.value, 2.0 * 1.5 * -2.0);
        assert_eq!(fx.grad, [2.0 * -2.0, 2.0 * 1.5, 0.0]);
    }

    #[test]
    fn hessian_symmetry_accessor() {
        let x = Jet2::var(0.3, 0).unwrap();
        let t = Jet2::var(0.8, 2).unwrap();
        let f = (x * t).sin();
        let m = f.hess_matrix();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[i][j].to_bits(), m[j][i].to_bits());
            }
        }
    }
}
