use std::ops::{Add, Mul, Neg, Sub};

use super::{BinOp, Expr, ExprError, Func, Node};

/// Values for the symbols of an expression, indexed like the symbol set.
/// Unset symbols are reported as [`ExprError::UnboundSymbol`] when used.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Bindings {
    values: [f64; 9],
    bound: u16,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds the first `values.len()` symbols.
    pub fn from_slice(values: &[f64]) -> Self {
        assert!(values.len() <= 9, "at most nine symbols");
        let mut b = Self::new();
        for (i, &v) in values.iter().enumerate() {
            b.set(i, v);
        }
        b
    }

    /// Binds all nine gradient symbols from `H[i][j] = du_i/dx_j`. Entries
    /// outside `dim` are bound to zero.
    pub fn from_gradient(h: &[[f64; 3]; 3]) -> Self {
        let mut b = Self::new();
        for i in 0..3 {
            for j in 0..3 {
                b.set(3 * i + j, h[i][j]);
            }
        }
        b
    }

    /// Binds `x y z` to a point.
    pub fn from_point(p: [f64; 3]) -> Self {
        Self::from_slice(&p)
    }

    pub fn set(&mut self, index: usize, value: f64) {
        self.values[index] = value;
        self.bound |= 1 << index;
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        (self.bound & (1 << index) != 0).then(|| self.values[index])
    }
}

trait Scalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self> {
    fn constant(v: f64) -> Self;
    fn variable(index: usize, v: f64) -> Self;
    fn val(&self) -> f64;
    /// `self / rhs` with `rhs != 0` already checked.
    fn div(self, rhs: Self) -> Self;
    /// `self ** rhs` with the domain already checked.
    fn pow(self, rhs: Self) -> Self;
    /// Applies `f(a)`, given the value `f(a)` and the derivative `f'(a)`.
    fn apply(self, value: f64, slope: f64) -> Self;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn variable(_: usize, v: f64) -> Self {
        v
    }
    fn val(&self) -> f64 {
        *self
    }
    fn div(self, rhs: Self) -> Self {
        self / rhs
    }
    fn pow(self, rhs: Self) -> Self {
        self.powf(rhs)
    }
    fn apply(self, value: f64, _: f64) -> Self {
        value
    }
}

/// Forward-mode dual number carrying all nine partials.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: [f64; 9],
}

impl Dual {
    fn scaled(v: f64, a: f64, x: &[f64; 9], b: f64, y: &[f64; 9]) -> Dual {
        let mut d = [0.0; 9];
        for i in 0..9 {
            d[i] = a * x[i] + b * y[i];
        }
        Dual { v, d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, r: Dual) -> Dual {
        Dual::scaled(self.v + r.v, 1.0, &self.d, 1.0, &r.d)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, r: Dual) -> Dual {
        Dual::scaled(self.v - r.v, 1.0, &self.d, -1.0, &r.d)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, r: Dual) -> Dual {
        Dual::scaled(self.v * r.v, r.v, &self.d, self.v, &r.d)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::scaled(-self.v, -1.0, &self.d, 0.0, &self.d)
    }
}

impl Scalar for Dual {
    fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; 9] }
    }
    fn variable(index: usize, v: f64) -> Self {
        let mut d = [0.0; 9];
        d[index] = 1.0;
        Dual { v, d }
    }
    fn val(&self) -> f64 {
        self.v
    }
    fn div(self, r: Self) -> Self {
        let q = self.v / r.v;
        Dual::scaled(q, 1.0 / r.v, &self.d, -q / r.v, &r.d)
    }
    fn pow(self, r: Self) -> Self {
        let v = self.v.powf(r.v);
        // d(a^b) = b a^(b-1) da + a^b ln(a) db; the second term only
        // matters when the exponent actually varies.
        let da = if r.v == 0.0 { 0.0 } else { r.v * self.v.powf(r.v - 1.0) };
        let db = if r.d.iter().any(|&x| x != 0.0) { v * self.v.ln() } else { 0.0 };
        Dual::scaled(v, da, &self.d, db, &r.d)
    }
    fn apply(self, value: f64, slope: f64) -> Self {
        Dual::scaled(value, slope, &self.d, 0.0, &self.d)
    }
}

fn domain(function: &'static str, argument: f64) -> ExprError {
    ExprError::DomainError { function, argument }
}

fn walk<S: Scalar>(node: &Node, b: &Bindings, names: &[&str]) -> Result<S, ExprError> {
    Ok(match node {
        Node::Num(v) => S::constant(*v),
        Node::Sym(i) => match b.get(*i) {
            Some(v) => S::variable(*i, v),
            None => return Err(ExprError::UnboundSymbol(names[*i].to_string())),
        },
        Node::Neg(a) => -walk::<S>(a, b, names)?,
        Node::Bin(op, l, r) => {
            let l = walk::<S>(l, b, names)?;
            let r = walk::<S>(r, b, names)?;
            match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div => {
                    if r.val() == 0.0 {
                        return Err(domain("/", 0.0));
                    }
                    l.div(r)
                }
                BinOp::Pow => {
                    let (base, exp) = (l.val(), r.val());
                    if (base < 0.0 && exp.fract() != 0.0) || (base == 0.0 && exp < 0.0) {
                        return Err(domain("**", base));
                    }
                    l.pow(r)
                }
            }
        }
        Node::Call(f, a) => {
            let a = walk::<S>(a, b, names)?;
            let x = a.val();
            let (value, slope) = match f {
                Func::Log => {
                    if x <= 0.0 {
                        return Err(domain("log", x));
                    }
                    (x.ln(), 1.0 / x)
                }
                Func::Sqrt => {
                    if x <= 0.0 {
                        return Err(domain("sqrt", x));
                    }
                    let s = x.sqrt();
                    (s, 0.5 / s)
                }
                Func::Exp => {
                    let e = x.exp();
                    (e, e)
                }
                Func::Sin => (x.sin(), x.cos()),
                Func::Cos => (x.cos(), -x.sin()),
                Func::Tanh => {
                    let t = x.tanh();
                    (t, 1.0 - t * t)
                }
                Func::Abs => (x.abs(), if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 }),
            };
            a.apply(value, slope)
        }
    })
}

impl Expr {
    /// Value of the expression.
    pub fn eval(&self, b: &Bindings) -> Result<f64, ExprError> {
        let v: f64 = walk(&self.root, b, self.symbols.names())?;
        if !v.is_finite() {
            return Err(ExprError::NonFinite);
        }
        Ok(v)
    }

    /// Value and exact partials with respect to every symbol, in one pass.
    /// Unused symbols get a zero partial.
    pub fn partials(&self, b: &Bindings) -> Result<(f64, [f64; 9]), ExprError> {
        let d: Dual = walk(&self.root, b, self.symbols.names())?;
        if !d.v.is_finite() || d.d.iter().any(|x| !x.is_finite()) {
            return Err(ExprError::NonFinite);
        }
        Ok((d.v, d.d))
    }

    /// Convenience for spatial expressions: value at a point.
    pub fn eval_at(&self, p: [f64; 3]) -> Result<f64, ExprError> {
        self.eval(&Bindings::from_point(p))
    }
}
