//! Forward-mode jets.
//!
//! `Dual<S>` is a first-order jet over any [`Scalar`], so it nests:
//! `Dual<Dual<f64>>` carries first and second derivatives, one more level
//! gives third derivatives. [`Jet`] is the flat order-2 jet over `f64`
//! (value, gradient, Hessian) used where a Hessian is wanted directly.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use thiserror::Error;

/// Maximum number of active variables in a jet.
pub const MAX_VARS: usize = 8;

/// Maximum nesting depth (third derivatives).
pub const MAX_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular evaluation in {op}{}", fmt_point(.point))]
    Singular { op: String, point: Option<Vec<f64>> },
}

fn fmt_point(p: &Option<Vec<f64>>) -> String {
    match p {
        Some(p) => format!(" at {p:?}"),
        None => String::new(),
    }
}

impl JetError {
    pub fn singular(op: &str) -> Self {
        JetError::Singular { op: op.to_string(), point: None }
    }

    /// Attach the coordinate point if none is recorded yet.
    pub fn at(self, x: &[f64]) -> Self {
        match self {
            JetError::Singular { op, point: None } => {
                JetError::Singular { op, point: Some(x.to_vec()) }
            }
            e => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScalarKind {
    Real,
    Jet1,
    Jet2,
    Nested(Box<ScalarKind>),
}

impl ScalarKind {
    pub fn depth(&self) -> usize {
        match self {
            ScalarKind::Real => 0,
            ScalarKind::Jet1 => 1,
            ScalarKind::Jet2 => 2,
            ScalarKind::Nested(inner) => 1 + inner.depth(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Atan,
}

impl Func {
    pub const ALL: [Func; 10] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Atan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Scalar arithmetic shared by reals and jets.
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;
    fn kind() -> ScalarKind;
    fn is_finite(&self) -> bool;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn atan(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, p: f64) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn one() -> Self {
        Self::cst(1.0)
    }
    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }
    fn recip(self) -> Self {
        Self::one() / self
    }

    fn apply(self, f: Func) -> Self {
        match f {
            Func::Sin => self.sin(),
            Func::Cos => self.cos(),
            Func::Tan => self.tan(),
            Func::Sinh => self.sinh(),
            Func::Cosh => self.cosh(),
            Func::Tanh => self.tanh(),
            Func::Exp => self.exp(),
            Func::Log => self.ln(),
            Func::Sqrt => self.sqrt(),
            Func::Atan => self.atan(),
        }
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn kind() -> ScalarKind {
        ScalarKind::Real
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tan(self) -> Self {
        f64::tan(self)
    }
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn atan(self) -> Self {
        f64::atan(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
}

/// First-order jet over an arbitrary scalar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<S> {
    pub v: S,
    pub d: [S; MAX_VARS],
    pub n: u8,
}

impl<S: Scalar> Dual<S> {
    pub fn constant(v: S) -> Self {
        Dual { v, d: [S::zero(); MAX_VARS], n: 0 }
    }

    pub fn variable(v: S, k: usize, n: usize) -> Self {
        let mut d = [S::zero(); MAX_VARS];
        d[k] = S::one();
        Dual { v, d, n: n as u8 }
    }

    pub fn nvars(&self) -> usize {
        self.n as usize
    }

    /// Partial derivative in variable `k` (zero past the active count).
    pub fn der(&self, k: usize) -> S {
        if k < MAX_VARS {
            self.d[k]
        } else {
            S::zero()
        }
    }

    #[inline]
    fn chain(self, f: S, fp: S) -> Self {
        let mut d = [S::zero(); MAX_VARS];
        for k in 0..self.n as usize {
            d[k] = self.d[k] * fp;
        }
        Dual { v: f, d, n: self.n }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let n = self.n.max(o.n);
        let mut d = self.d;
        for k in 0..n as usize {
            d[k] += o.d[k];
        }
        Dual { v: self.v + o.v, d, n }
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let n = self.n.max(o.n);
        let mut d = self.d;
        for k in 0..n as usize {
            d[k] -= o.d[k];
        }
        Dual { v: self.v - o.v, d, n }
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let n = self.n.max(o.n);
        let mut d = [S::zero(); MAX_VARS];
        if o.n == 0 {
            for k in 0..n as usize {
                d[k] = self.d[k] * o.v;
            }
        } else if self.n == 0 {
            for k in 0..n as usize {
                d[k] = self.v * o.d[k];
            }
        } else {
            for k in 0..n as usize {
                d[k] = self.d[k] * o.v + self.v * o.d[k];
            }
        }
        Dual { v: self.v * o.v, d, n }
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let n = self.n.max(o.n);
        let v = self.v / o.v;
        let mut d = [S::zero(); MAX_VARS];
        if o.n == 0 {
            for k in 0..n as usize {
                d[k] = self.d[k] / o.v;
            }
        } else {
            for k in 0..n as usize {
                d[k] = (self.d[k] - v * o.d[k]) / o.v;
            }
        }
        Dual { v, d, n }
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut d = self.d;
        for k in 0..self.n as usize {
            d[k] = -d[k];
        }
        Dual { v: -self.v, d, n: self.n }
    }
}

impl<S: Scalar> AddAssign for Dual<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Scalar> SubAssign for Dual<S> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<S: Scalar> MulAssign for Dual<S> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn cst(v: f64) -> Self {
        Dual::constant(S::cst(v))
    }
    fn value(&self) -> f64 {
        self.v.value()
    }
    fn kind() -> ScalarKind {
        match S::kind() {
            ScalarKind::Real => ScalarKind::Jet1,
            inner => ScalarKind::Nested(Box::new(inner)),
        }
    }
    fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d[..self.n as usize].iter().all(|x| x.is_finite())
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn tan(self) -> Self {
        let t = self.v.tan();
        self.chain(t, S::one() + t * t)
    }
    fn sinh(self) -> Self {
        self.chain(self.v.sinh(), self.v.cosh())
    }
    fn cosh(self) -> Self {
        self.chain(self.v.cosh(), self.v.sinh())
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.chain(t, S::one() - t * t)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), self.v.recip())
    }
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, (r + r).recip())
    }
    fn atan(self) -> Self {
        self.chain(self.v.atan(), (S::one() + self.v * self.v).recip())
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        let f = self.v.powi(n);
        let fp = self.v.powi(n - 1).scale(n as f64);
        self.chain(f, fp)
    }
    fn powf(self, p: f64) -> Self {
        let f = self.v.powf(p);
        let fp = self.v.powf(p - 1.0).scale(p);
        self.chain(f, fp)
    }
}

/// Seed `x` as independent first-order variables over its own scalar type.
pub fn seed_dual<S: Scalar>(x: &[S]) -> Vec<Dual<S>> {
    let n = x.len();
    assert!(n <= MAX_VARS, "at most {MAX_VARS} variables");
    x.iter().enumerate().map(|(k, &v)| Dual::variable(v, k, n)).collect()
}

/// Promote a scalar to a constant one nesting level up.
pub fn nest<S: Scalar>(a: S) -> Result<Dual<S>, JetError> {
    let depth = S::kind().depth() + 1;
    if depth > MAX_DEPTH {
        return Err(JetError::InvalidArgument(format!(
            "nesting depth {depth} exceeds {MAX_DEPTH}"
        )));
    }
    Ok(Dual::constant(a))
}

/// Flat order-2 jet over `f64`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    value: f64,
    grad: [f64; MAX_VARS],
    hess: [[f64; MAX_VARS]; MAX_VARS],
    n: u8,
    order: u8,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet { value: v, grad: [0.0; MAX_VARS], hess: [[0.0; MAX_VARS]; MAX_VARS], n: 0, order: 2 }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    pub fn nvars(&self) -> usize {
        self.n as usize
    }

    pub fn gradient(&self) -> &[f64] {
        &self.grad[..self.n as usize]
    }

    /// Hessian as a dense matrix, present for order-2 jets.
    pub fn hessian(&self) -> Option<Vec<Vec<f64>>> {
        if self.order < 2 {
            return None;
        }
        let n = self.n as usize;
        Some((0..n).map(|i| self.hess[i][..n].to_vec()).collect())
    }

    pub fn d(&self, i: usize) -> f64 {
        self.grad[i]
    }

    pub fn dd(&self, i: usize, j: usize) -> f64 {
        self.hess[i][j]
    }

    fn chain(self, f: f64, fp: f64, fpp: f64) -> Jet {
        let n = self.n as usize;
        let mut r = Jet { value: f, n: self.n, order: self.order, ..Jet::constant(0.0) };
        for i in 0..n {
            r.grad[i] = fp * self.grad[i];
        }
        if self.order >= 2 {
            for i in 0..n {
                for j in 0..n {
                    r.hess[i][j] = fp * self.hess[i][j] + fpp * self.grad[i] * self.grad[j];
                }
            }
        }
        r
    }
}

/// Seed one jet per coordinate.
pub fn seed(point: &[f64], order: usize) -> Result<Vec<Jet>, JetError> {
    if order != 1 && order != 2 {
        return Err(JetError::InvalidArgument(format!("jet order {order} not in {{1, 2}}")));
    }
    if point.len() > MAX_VARS {
        return Err(JetError::InvalidArgument(format!(
            "{} variables exceed the maximum {MAX_VARS}",
            point.len()
        )));
    }
    if point.iter().any(|x| !x.is_finite()) {
        return Err(JetError::InvalidArgument("non-finite seed point".into()));
    }
    let n = point.len();
    Ok(point
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut j = Jet::constant(v);
            j.grad[k] = 1.0;
            j.n = n as u8;
            j.order = order as u8;
            j
        })
        .collect())
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let n = self.n.max(o.n) as usize;
        let mut r = self;
        r.value += o.value;
        r.n = n as u8;
        r.order = self.order.min(o.order);
        for i in 0..n {
            r.grad[i] += o.grad[i];
            for j in 0..n {
                r.hess[i][j] += o.hess[i][j];
            }
        }
        r
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        let n = self.n as usize;
        let mut r = self;
        r.value = -r.value;
        for i in 0..n {
            r.grad[i] = -r.grad[i];
            for j in 0..n {
                r.hess[i][j] = -r.hess[i][j];
            }
        }
        r
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let n = self.n.max(o.n) as usize;
        let order = self.order.min(o.order);
        let mut r = Jet { value: self.value * o.value, n: n as u8, order, ..Jet::constant(0.0) };
        for i in 0..n {
            r.grad[i] = self.grad[i] * o.value + self.value * o.grad[i];
        }
        if order >= 2 {
            for i in 0..n {
                for j in 0..n {
                    r.hess[i][j] = self.hess[i][j] * o.value
                        + self.value * o.hess[i][j]
                        + self.grad[i] * o.grad[j]
                        + o.grad[i] * self.grad[j];
                }
            }
        }
        r
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        let n = self.n.max(o.n) as usize;
        let order = self.order.min(o.order);
        let q = self.value / o.value;
        let mut r = Jet { value: q, n: n as u8, order, ..Jet::constant(0.0) };
        for i in 0..n {
            r.grad[i] = (self.grad[i] - q * o.grad[i]) / o.value;
        }
        if order >= 2 {
            // a = q b differentiated twice
            for i in 0..n {
                for j in 0..n {
                    r.hess[i][j] = (self.hess[i][j]
                        - r.grad[i] * o.grad[j]
                        - r.grad[j] * o.grad[i]
                        - q * o.hess[i][j])
                        / o.value;
                }
            }
        }
        r
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, o: Jet) {
        *self = *self + o;
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, o: Jet) {
        *self = *self - o;
    }
}

impl MulAssign for Jet {
    fn mul_assign(&mut self, o: Jet) {
        *self = *self * o;
    }
}

impl Scalar for Jet {
    fn cst(v: f64) -> Self {
        Jet::constant(v)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn kind() -> ScalarKind {
        ScalarKind::Jet2
    }
    fn is_finite(&self) -> bool {
        let n = self.n as usize;
        self.value.is_finite()
            && self.grad[..n].iter().all(|x| x.is_finite())
            && self.hess[..n].iter().all(|row| row[..n].iter().all(|x| x.is_finite()))
    }
    fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }
    fn tan(self) -> Self {
        let t = self.value.tan();
        let fp = 1.0 + t * t;
        self.chain(t, fp, 2.0 * t * fp)
    }
    fn sinh(self) -> Self {
        let (s, c) = (self.value.sinh(), self.value.cosh());
        self.chain(s, c, s)
    }
    fn cosh(self) -> Self {
        let (s, c) = (self.value.sinh(), self.value.cosh());
        self.chain(c, s, c)
    }
    fn tanh(self) -> Self {
        let t = self.value.tanh();
        let fp = 1.0 - t * t;
        self.chain(t, fp, -2.0 * t * fp)
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let v = self.value;
        self.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
    }
    fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.value))
    }
    fn atan(self) -> Self {
        let v = self.value;
        let q = 1.0 / (1.0 + v * v);
        self.chain(v.atan(), q, -2.0 * v * q * q)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Jet::constant(1.0);
        }
        if n == 1 {
            return self;
        }
        let v = self.value;
        let nf = n as f64;
        self.chain(v.powi(n), nf * v.powi(n - 1), nf * (nf - 1.0) * v.powi(n - 2))
    }
    fn powf(self, p: f64) -> Self {
        let v = self.value;
        self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0))
    }
}

fn finite<S: Scalar>(r: S, op: &str) -> Result<S, JetError> {
    if r.is_finite() {
        Ok(r)
    } else {
        Err(JetError::singular(op))
    }
}

/// Checked binary arithmetic.
pub fn arith<S: Scalar>(a: S, b: S, op: ArithOp) -> Result<S, JetError> {
    match op {
        ArithOp::Add => finite(a + b, "+"),
        ArithOp::Sub => finite(a - b, "-"),
        ArithOp::Mul => finite(a * b, "*"),
        ArithOp::Div => {
            if b.value() == 0.0 {
                return Err(JetError::singular("division by zero"));
            }
            finite(a / b, "/")
        }
        ArithOp::Pow => {
            if a.value() <= 0.0 {
                return Err(JetError::singular("pow with non-positive base"));
            }
            finite((b * a.ln()).exp(), "pow")
        }
    }
}

/// Checked power with a constant exponent; integer exponents allow any base.
pub fn pow_const<S: Scalar>(a: S, p: f64) -> Result<S, JetError> {
    if p.fract() == 0.0 && p.abs() <= 1024.0 {
        if p < 0.0 && a.value() == 0.0 {
            return Err(JetError::singular("negative power of zero"));
        }
        return finite(a.powi(p as i32), "pow");
    }
    if a.value() <= 0.0 {
        return Err(JetError::singular("fractional power of non-positive base"));
    }
    finite(a.powf(p), "pow")
}

/// Checked elementary function.
pub fn elementary<S: Scalar>(a: S, f: Func) -> Result<S, JetError> {
    let v = a.value();
    match f {
        Func::Log if v <= 0.0 => return Err(JetError::singular("log of non-positive value")),
        Func::Sqrt if v < 0.0 => return Err(JetError::singular("sqrt of negative value")),
        _ => {}
    }
    finite(a.apply(f), f.name())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn seeding_gives_unit_gradients() {
        let j = seed(&[0.0, 0.0], 1).unwrap();
        assert_eq!(j[0].gradient(), &[1.0, 0.0]);
        assert_eq!(j[1].gradient(), &[0.0, 1.0]);
        assert!(j[0].hessian().is_none());
        assert!(matches!(seed(&[1.0], 3), Err(JetError::InvalidArgument(_))));
        assert!(matches!(seed(&[1.0], 0), Err(JetError::InvalidArgument(_))));
    }

    #[test]
    fn bilinear_product() {
        let x = seed(&[1.0, 2.0, 3.0], 2).unwrap();
        let f = x[0] * x[1];
        assert_eq!(f.value(), 2.0);
        assert_eq!(f.gradient(), &[2.0, 1.0, 0.0]);
        let h = f.hessian().unwrap();
        assert_eq!(h[0][1], 1.0);
        assert_eq!(h[1][0], 1.0);
        assert_eq!(h[0][0], 0.0);
    }

    #[test]
    fn sine_against_closed_form() {
        let x = seed(&[0.3], 2).unwrap();
        let f = x[0].sin();
        assert!((f.value() - 0.3f64.sin()).abs() < 1e-12);
        assert!((f.d(0) - 0.3f64.cos()).abs() < 1e-12);
        assert!((f.dd(0, 0) + 0.3f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn square_and_quotient() {
        let x = seed(&[3.0], 2).unwrap()[0];
        let f = x * x;
        assert_eq!((f.value(), f.d(0), f.dd(0, 0)), (9.0, 6.0, 2.0));
        let y = seed(&[2.0], 2).unwrap()[0];
        let q = arith(y, y, ArithOp::Div).unwrap();
        assert_eq!(q.value(), 1.0);
        assert!(q.d(0).abs() < 1e-15 && q.dd(0, 0).abs() < 1e-15);
    }

    #[test]
    fn division_by_zero_is_singular() {
        let x = seed(&[0.0], 1).unwrap()[0];
        let err = arith(Jet::constant(1.0), x, ArithOp::Div).unwrap_err();
        assert!(matches!(err, JetError::Singular { .. }));
        let err = err.at(&[0.0]);
        assert!(matches!(err, JetError::Singular { point: Some(ref p), .. } if p == &[0.0]));
    }

    #[test]
    fn fractional_power_matches_central_differences() {
        let x = seed(&[4.0], 2).unwrap()[0];
        let f = arith(x, Jet::constant(0.5), ArithOp::Pow).unwrap();
        let h = 1e-4;
        let fd = ((4.0f64 + h).powf(0.5) - (4.0f64 - h).powf(0.5)) / (2.0 * h);
        let fdd = ((4.0f64 + h).powf(0.5) - 2.0 * 2.0 + (4.0f64 - h).powf(0.5)) / (h * h);
        assert!((f.d(0) - fd).abs() < 1e-7);
        assert!((f.dd(0, 0) - fdd).abs() < 1e-6);
        assert!(pow_const(Jet::constant(-1.0), 0.5).is_err());
        assert_eq!(pow_const(Jet::constant(-2.0), 3.0).unwrap().value(), -8.0);
    }

    #[test]
    fn exp_at_zero() {
        let x = seed(&[0.0], 2).unwrap()[0];
        let f = elementary(x, Func::Exp).unwrap();
        assert_eq!((f.value(), f.d(0), f.dd(0, 0)), (1.0, 1.0, 1.0));
    }

    #[test]
    fn tanh_matches_finite_differences() {
        let x = seed(&[0.5], 2).unwrap()[0];
        let f = elementary(x, Func::Tanh).unwrap();
        let h = 1e-4;
        let fd = ((0.5f64 + h).tanh() - (0.5f64 - h).tanh()) / (2.0 * h);
        assert!((f.d(0) - fd).abs() < 1e-7);
    }

    #[test]
    fn log_exp_is_identity() {
        let x = seed(&[1.7], 2).unwrap()[0];
        let f = elementary(elementary(x, Func::Exp).unwrap(), Func::Log).unwrap();
        assert!((f.value() - 1.7).abs() < 1e-14);
        assert!((f.d(0) - 1.0).abs() < 1e-14);
        assert!(f.dd(0, 0).abs() < 1e-13);
    }

    #[test]
    fn domain_errors() {
        let x = seed(&[-1.0], 1).unwrap()[0];
        assert!(elementary(x, Func::Log).is_err());
        assert!(elementary(x, Func::Sqrt).is_err());
        assert!(elementary(Jet::constant(0.0), Func::Log).is_err());
    }

    fn third<F: Fn(Dual<Dual<Dual<f64>>>) -> Dual<Dual<Dual<f64>>>>(x: f64, f: F) -> f64 {
        let x1 = seed_dual(&[x]);
        let x2 = seed_dual(&x1);
        let x3 = seed_dual(&x2);
        f(x3[0]).d[0].d[0].d[0]
    }

    #[test]
    fn nested_third_derivatives() {
        assert!((third(1.0, |x| x * x * x) - 6.0).abs() < 1e-14);
        assert!((third(0.0, |x| x.sin()) + 1.0).abs() < 1e-14);
        assert!((third(0.4, |x| x.powi(5)) - 60.0 * 0.4f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn nesting_depth_guard() {
        let a: Dual<Dual<f64>> = nest(nest(1.0f64).unwrap()).unwrap();
        assert_eq!(<Dual<Dual<f64>>>::kind().depth(), 2);
        assert!(nest(a).is_ok());
        let b = nest(a).unwrap();
        assert!(matches!(nest(b), Err(JetError::InvalidArgument(_))));
    }

    #[test]
    fn richardson_order_of_central_differences() {
        let f = |x: f64| (x.sin() * x).exp();
        let x0 = 0.7;
        let j = seed(&[x0], 1).unwrap()[0];
        let exact = (j.sin() * j).exp().d(0);
        let errs: Vec<f64> = [1e-2, 1e-3]
            .iter()
            .map(|&h| ((f(x0 + h) - f(x0 - h)) / (2.0 * h) - exact).abs())
            .collect();
        let order = (errs[0] / errs[1]).log10();
        assert!(order > 1.9, "order {order}");
        let e4 = ((f(x0 + 1e-4) - f(x0 - 1e-4)) / 2e-4 - exact).abs();
        assert!(e4 < errs[1]);
    }

    // polynomial with random coefficients in up to four variables, degree ≤ 4
    fn poly_eval<S: Scalar>(terms: &[(f64, [u8; 4])], x: &[S]) -> S {
        let mut acc = S::zero();
        for (c, e) in terms {
            let mut t = S::cst(*c);
            for k in 0..x.len() {
                if e[k] > 0 {
                    t *= x[k].powi(e[k] as i32);
                }
            }
            acc += t;
        }
        acc
    }

    fn poly_grad(terms: &[(f64, [u8; 4])], x: &[f64], i: usize) -> f64 {
        terms
            .iter()
            .map(|(c, e)| {
                if e[i] == 0 {
                    return 0.0;
                }
                let mut t = c * e[i] as f64;
                for k in 0..x.len() {
                    let p = if k == i { e[k] as i32 - 1 } else { e[k] as i32 };
                    t *= x[k].powi(p);
                }
                t
            })
            .sum()
    }

    fn poly_hess(terms: &[(f64, [u8; 4])], x: &[f64], i: usize, j: usize) -> f64 {
        terms
            .iter()
            .map(|(c, e)| {
                let mut e2 = [e[0] as i32, e[1] as i32, e[2] as i32, e[3] as i32];
                let mut t = *c;
                t *= e2[i] as f64;
                e2[i] -= 1;
                t *= e2[j] as f64;
                e2[j] -= 1;
                if t == 0.0 {
                    return 0.0;
                }
                for k in 0..x.len() {
                    t *= x[k].powi(e2[k]);
                }
                t
            })
            .sum()
    }

    fn term() -> impl Strategy<Value = (f64, [u8; 4])> {
        (-2.0..2.0f64, proptest::array::uniform4(0u8..=4)).prop_filter("degree ≤ 4", |(_, e)| {
            e.iter().map(|&k| k as u32).sum::<u32>() <= 4
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn polynomial_derivatives_are_exact(
            nv in 1usize..=4,
            terms in proptest::collection::vec(term(), 1..6),
            x in proptest::array::uniform4(-1.5..1.5f64),
        ) {
            let terms: Vec<_> = terms.into_iter().map(|(c, mut e)| {
                for k in nv..4 { e[k] = 0; }
                (c, e)
            }).collect();
            let x = &x[..nv];
            let j = seed(x, 2).unwrap();
            let f = poly_eval(&terms, &j);
            prop_assert!(close(f.value(), poly_eval(&terms, x), 1e-12));
            for i in 0..nv {
                prop_assert!(close(f.d(i), poly_grad(&terms, x, i), 1e-12));
                for k in 0..nv {
                    prop_assert!(close(f.dd(i, k), poly_hess(&terms, x, i, k), 1e-12));
                    prop_assert_eq!(f.dd(i, k), f.dd(k, i));
                }
            }
            // the nested route agrees with the flat jet
            let d1 = seed_dual(x);
            let d2 = seed_dual(&d1);
            let g = poly_eval(&terms, &d2);
            for i in 0..nv {
                for k in 0..nv {
                    prop_assert!(close(g.d[i].d[k], f.dd(i, k), 1e-12));
                }
            }
        }

        #[test]
        fn mixed_partials_commute(x in -1.0..1.0f64, y in -1.0..1.0f64) {
            let d1 = seed_dual(&[x, y]);
            let d2 = seed_dual(&d1);
            let f = (d2[0] * d2[1].sin()).exp() + (d2[0] * d2[0] + d2[1]).atan();
            prop_assert!((f.d[0].d[1] - f.d[1].d[0]).abs() < 1e-10);
        }
    }
}
