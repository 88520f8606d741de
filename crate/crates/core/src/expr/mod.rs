//! One-line scalar expressions: user-defined energy densities over the
//! displacement gradient, and spatial expressions for boundary data.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('**' unary)?          (right associative)
//! atom  := number | symbol | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! Energy symbols are `ux uy uz vx vy vz wx wy wz`, where `uy` is
//! `du/dy`; spatial symbols are `x y z`. Both sets also know the constant
//! `pi`. Functions: `log exp sqrt sin cos tanh abs`.

mod eval;
mod parser;

use std::fmt;

use thiserror::Error;

pub use eval::Bindings;

/// Displacement-gradient symbols; index `3 * component + axis`.
pub const GRADIENT_SYMBOLS: [&str; 9] = ["ux", "uy", "uz", "vx", "vy", "vz", "wx", "wy", "wz"];
pub const SPATIAL_SYMBOLS: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    SyntaxError { offset: usize, message: String },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("symbol `{0}` has no value")]
    UnboundSymbol(String),
    #[error("{function} is undefined at {argument}")]
    DomainError { function: &'static str, argument: f64 },
    #[error("expression evaluated to a non-finite value")]
    NonFinite,
    #[error("symbols {0:?} are not available in this dimension")]
    DimensionMismatch(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolSet {
    Gradient,
    Spatial,
}

impl SymbolSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            SymbolSet::Gradient => &GRADIENT_SYMBOLS,
            SymbolSet::Spatial => &SPATIAL_SYMBOLS,
        }
    }

    fn lookup(self, name: &str) -> Option<usize> {
        self.names().iter().position(|s| *s == name)
    }

    /// Whether the symbol exists in a `dim`-dimensional problem.
    fn available(self, index: usize, dim: usize) -> bool {
        match self {
            SymbolSet::Gradient => index / 3 < dim && index % 3 < dim,
            SymbolSet::Spatial => index < dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Log,
    Exp,
    Sqrt,
    Sin,
    Cos,
    Tanh,
    Abs,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Log,
        Func::Exp,
        Func::Sqrt,
        Func::Sin,
        Func::Cos,
        Func::Tanh,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Log => "log",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Sym(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression together with the symbol set it was parsed against.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub root: Node,
    pub symbols: SymbolSet,
}

/// Symbols referenced by an expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolReport {
    pub symbols: Vec<String>,
}

/// Parses an energy density over the displacement-gradient symbols.
pub fn parse(text: &str) -> Result<Expr, ExprError> {
    Expr::parse_with(text, SymbolSet::Gradient)
}

/// Parses a function of the spatial coordinates `x y z`.
pub fn parse_spatial(text: &str) -> Result<Expr, ExprError> {
    Expr::parse_with(text, SymbolSet::Spatial)
}

impl Expr {
    pub fn parse_with(text: &str, symbols: SymbolSet) -> Result<Expr, ExprError> {
        let root = parser::Parser::new(text, symbols).parse()?;
        Ok(Expr { root, symbols })
    }

    pub fn constant(value: f64) -> Expr {
        Expr {
            root: Node::Num(value),
            symbols: SymbolSet::Spatial,
        }
    }

    /// Indices of the symbols used, ascending.
    pub fn used_symbols(&self) -> Vec<usize> {
        fn walk(n: &Node, out: &mut Vec<usize>) {
            match n {
                Node::Num(_) => {}
                Node::Sym(i) => out.push(*i),
                Node::Neg(a) | Node::Call(_, a) => walk(a, out),
                Node::Bin(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    /// True when the expression does not depend on any symbol.
    pub fn is_constant(&self) -> bool {
        self.used_symbols().is_empty()
    }

    /// Lists the symbols used and rejects those that do not exist in `dim`
    /// dimensions (`uz`, `vz` and `w*` in 2D, `z` for spatial expressions).
    pub fn validate(&self, dim: usize) -> Result<SymbolReport, ExprError> {
        let used = self.used_symbols();
        let names = self.symbols.names();
        let bad: Vec<String> = used
            .iter()
            .filter(|&&i| !self.symbols.available(i, dim))
            .map(|&i| names[i].to_string())
            .collect();
        if !bad.is_empty() {
            return Err(ExprError::DimensionMismatch(bad));
        }
        Ok(SymbolReport {
            symbols: used.iter().map(|&i| names[i].to_string()).collect(),
        })
    }
}

struct Printer<'a> {
    node: &'a Node,
    names: &'static [&'static str],
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |node| Printer { node, names: self.names };
        match self.node {
            Node::Num(v) if *v < 0.0 => write!(f, "(-{:?})", -v),
            Node::Num(v) => write!(f, "{v:?}"),
            Node::Sym(i) => f.write_str(self.names[*i]),
            Node::Neg(a) => write!(f, "(-{})", sub(a)),
            Node::Call(func, a) => write!(f, "{}({})", func.name(), sub(a)),
            Node::Bin(op, a, b) => {
                let op = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "**",
                };
                write!(f, "({} {op} {})", sub(a), sub(b))
            }
        }
    }
}

/// Fully parenthesized form that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer {
            node: &self.root,
            names: self.symbols.names(),
        }
        .fmt(f)
    }
}

/// Strain-energy strings for the three isochoric hyperelastic models, in the
/// one-line form accepted by the custom-energy interface.
pub mod models {
    pub const NEO_HOOKEAN: &str = "0.5*(((1+ux)*(1+vy)*(1+wz) + uy*vz*wx + uz*vx*wy - uz*(1+vy)*(wx) - uy*vx*(1+wz) - (1+ux)*vz*wy)**(-2/3)*((1+ux)**2 + vx**2 + wx**2 + uy**2 + (1+vy)**2 + wy**2 + uz**2 + vz**2 + (1+wz)**2) - 3) + 1.5*(((1+ux)*(1+vy)*(1+wz) + uy*vz*wx + uz*vx*wy - uz*(1+vy)*(wx) - uy*vx*(1+wz) - (1+ux)*vz*wy)-1)**2";

    pub const ISIHARA: &str = "0.5*(((1+ux)*(1+vy)*(1+wz) + uy*vz*wx + uz*vx*wy - uz*(1+vy)*(wx) - uy*vx*(1+wz) - (1+ux)*vz*wy)**(-2/3)*((1+ux)**2 + vx**2 + wx**2 + uy**2 + (1+vy)**2 + wy**2 + uz**2 + vz**2 + (1+wz)**2) - 3) + (((1+ux)*(1+vy)*(1+wz) + uy*vz*wx + uz*vx*wy - uz*(1+vy)*(wx) - uy*vx*(1+wz) - (1+ux)*vz*wy)**(-4/3)*0.5*(((1+ux)**2 + vx**2 + wx**2 + uy**2 + (1+vy)**2 + wy**2 + uz**2 + vz**2 + (1+wz)**2)**2-(((1+ux)**2+vx**2+wx**2)**2+(uy**2+(1+vy)**2+wy**2)**2+(uz**2+vz**2+(1+wz)**2)**2+2*((1+ux)*uy+vx*(1+vy)+wx*wy)**2+2*((1+ux)*uz+vx*vz+wx*(1+wz))**2+2*(uy*uz+(1+vy)*vz+wy*(1+wz))**2))-3) + (((1+ux)*(1+vy)*(1+wz) + uy*vz*wx + uz*vx*wy - uz*(1+vy)*(wx) - uy*vx*(1+wz) - (1+ux)*vz*wy)**(-2/3)*((1+ux)**2 + vx**2 + wx**2 + uy**2 + (1+vy)**2 + wy**2 + uz**2 + vz**2 + (1+wz)**2)-3)**2 + 1.5*( ((1+ux)*(1+vy)*(1+wz) + uy*vz*wx + uz*vx*wy - uz*(1+vy)*(wx) - uy*vx*(1+wz) - (1+ux)*vz*wy)-1)**2";

    pub const GENT_THOMAS: &str = "0.5*(((1+ux)*(1+vy)*(1+wz) + uy*vz*wx + uz*vx*wy - uz*(1+vy)*(wx) - uy*vx*(1+wz) - (1+ux)*vz*wy)**(-2/3)*((1+ux)**2 + vx**2 + wx**2 + uy**2 + (1+vy)**2 + wy**2 + uz**2 + vz**2 + (1+wz)**2) - 3) + log(((1+ux)*(1+vy)*(1+wz) + uy*vz*wx + uz*vx*wy - uz*(1+vy)*(wx) - uy*vx*(1+wz) - (1+ux)*vz*wy)**(-4/3)*0.5*(((1+ux)**2 + vx**2 + wx**2 + uy**2 + (1+vy)**2 + wy**2 + uz**2 + vz**2 + (1+wz)**2)**2-(((1+ux)**2+vx**2+wx**2)**2+(uy**2+(1+vy)**2+wy**2)**2+(uz**2+vz**2+(1+wz)**2)**2+2*((1+ux)*uy+vx*(1+vy)+wx*wy)**2+2*((1+ux)*uz+vx*vz+wx*(1+wz))**2+2*(uy*uz+(1+vy)*vz+wy*(1+wz))**2))/3) + 1.5*((1+ux)*(1+vy)*(1+wz) + uy*vz*wx + uz*vx*wy - uz*(1+vy)*(wx) - uy*vx*(1+wz) - (1+ux)*vz*wy-1)**2";
}
