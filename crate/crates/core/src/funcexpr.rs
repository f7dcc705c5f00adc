//! Scalar math expressions in the variables `x`, `s` and the constant `eps`.
//!
//! Problem data (coefficients, kernel, forcing, boundary values and exact
//! solutions) is written as plain infix text and parsed into an [`Expr`]
//! tree. Trees can be evaluated against a set of [`Bindings`] and
//! differentiated symbolically with respect to `x` or `s`.
//!
//! ```
//! use spfide::funcexpr::{Bindings, Expr, Var};
//!
//! let u: Expr = "exp(-x/eps)".parse().unwrap();
//! let du = u.differentiate(Var::X).unwrap();
//! let at = Bindings::new().with(Var::X, 0.0).unwrap().with(Var::Eps, 0.5).unwrap();
//! assert_eq!(du.eval(&at).unwrap(), -2.0);
//! ```
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := expr ('+' | '-') expr          left-assoc
//!          | expr ('*' | '/') expr          left-assoc
//!          | '-' expr                       prefix
//!          | expr '^' expr                  right-assoc
//!          | NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
//! ```

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable `{0}` is not bound")]
    UnboundVariable(Var),
    #[error("non-finite value {value} for variable `{var}`")]
    NonFiniteBinding { var: Var, value: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("cannot differentiate with respect to `{0}`; it is a constant")]
    NotDifferentiable(Var),
}

/// The three identifiers an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    S,
    Eps,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::S => "s",
            Var::Eps => "eps",
        }
    }

    fn from_name(name: &str) -> Option<Var> {
        match name {
            "x" => Some(Var::X),
            "s" => Some(Var::S),
            "eps" => Some(Var::Eps),
            _ => None,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
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

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 6] = [
        Func::Exp,
        Func::Ln,
        Func::Sin,
        Func::Cos,
        Func::Sqrt,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, arg: f64) -> Result<f64, ExprError> {
        match self {
            Func::Exp => Ok(arg.exp()),
            Func::Ln if arg <= 0.0 => Err(ExprError::Domain(format!("ln({arg})"))),
            Func::Ln => Ok(arg.ln()),
            Func::Sin => Ok(arg.sin()),
            Func::Cos => Ok(arg.cos()),
            Func::Sqrt if arg < 0.0 => Err(ExprError::Domain(format!("sqrt({arg})"))),
            Func::Sqrt => Ok(arg.sqrt()),
            Func::Abs => Ok(arg.abs()),
        }
    }
}

/// Parsed expression tree. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Values for the variables of an expression. Only finite values are accepted.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    x: Option<f64>,
    s: Option<f64>,
    eps: Option<f64>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: Var, value: f64) -> Result<Self, ExprError> {
        self.set(var, value)?;
        Ok(self)
    }

    pub fn set(&mut self, var: Var, value: f64) -> Result<(), ExprError> {
        if !value.is_finite() {
            return Err(ExprError::NonFiniteBinding { var, value });
        }
        *self.slot(var) = Some(value);
        Ok(())
    }

    pub fn get(&self, var: Var) -> Option<f64> {
        match var {
            Var::X => self.x,
            Var::S => self.s,
            Var::Eps => self.eps,
        }
    }

    fn slot(&mut self, var: Var) -> &mut Option<f64> {
        match var {
            Var::X => &mut self.x,
            Var::S => &mut self.s,
            Var::Eps => &mut self.eps,
        }
    }
}

pub fn parse(text: &str) -> Result<Expr, ExprError> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        len: text.len(),
    };
    let expr = parser.expr(0)?;
    match parser.peek() {
        None => Ok(expr),
        Some(tok) => Err(ExprError::Syntax {
            offset: tok.offset,
            expected: "operator or end of input".into(),
        }),
    }
}

impl FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    /// Evaluates in IEEE double precision. Any non-finite intermediate result
    /// is reported as a domain error instead of leaking NaN or infinity.
    pub fn eval(&self, b: &Bindings) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(var) => b.get(*var).ok_or(ExprError::UnboundVariable(*var))?,
            Expr::Neg(e) => -e.eval(b)?,
            Expr::Bin(op, l, r) => {
                let l = l.eval(b)?;
                let r = r.eval(b)?;
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div if r == 0.0 => {
                        return Err(ExprError::Domain(format!("division of {l} by zero")))
                    }
                    BinOp::Div => l / r,
                    BinOp::Pow => l.powf(r),
                }
            }
            Expr::Call(f, arg) => f.apply(arg.eval(b)?)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain(format!("`{self}` evaluates to {v}")))
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) | Expr::Call(_, e) => e.depends_on(var),
            Expr::Bin(_, l, r) => l.depends_on(var) || r.depends_on(var),
        }
    }

    /// Exact symbolic derivative. `eps` is a constant and cannot be a
    /// differentiation variable.
    pub fn differentiate(&self, var: Var) -> Result<Expr, ExprError> {
        if var == Var::Eps {
            return Err(ExprError::NotDifferentiable(var));
        }
        Ok(self.derive(var))
    }

    fn derive(&self, var: Var) -> Expr {
        if !self.depends_on(var) {
            return Expr::Num(0.0);
        }
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(v) => Expr::Num(if *v == var { 1.0 } else { 0.0 }),
            Expr::Neg(e) => neg(e.derive(var)),
            Expr::Bin(op, l, r) => {
                let (u, v) = (l.as_ref(), r.as_ref());
                match op {
                    BinOp::Add => add(u.derive(var), v.derive(var)),
                    BinOp::Sub => sub(u.derive(var), v.derive(var)),
                    BinOp::Mul => add(mul(u.derive(var), v.clone()), mul(u.clone(), v.derive(var))),
                    BinOp::Div => div(
                        sub(mul(u.derive(var), v.clone()), mul(u.clone(), v.derive(var))),
                        pow(v.clone(), Expr::Num(2.0)),
                    ),
                    BinOp::Pow if !v.depends_on(var) => {
                        // c * u^(c-1) * u'
                        let lowered = match v {
                            Expr::Num(c) => Expr::Num(c - 1.0),
                            _ => sub(v.clone(), Expr::Num(1.0)),
                        };
                        mul(mul(v.clone(), pow(u.clone(), lowered)), u.derive(var))
                    }
                    BinOp::Pow if !u.depends_on(var) => {
                        mul(mul(self.clone(), call(Func::Ln, u.clone())), v.derive(var))
                    }
                    // u^v * (v' ln u + v u'/u)
                    BinOp::Pow => mul(
                        self.clone(),
                        add(
                            mul(v.derive(var), call(Func::Ln, u.clone())),
                            div(mul(v.clone(), u.derive(var)), u.clone()),
                        ),
                    ),
                }
            }
            Expr::Call(f, arg) => {
                let inner = arg.derive(var);
                let a = arg.as_ref().clone();
                let outer = match f {
                    Func::Exp => self.clone(),
                    Func::Ln => div(Expr::Num(1.0), a),
                    Func::Sin => call(Func::Cos, a),
                    Func::Cos => neg(call(Func::Sin, a)),
                    Func::Sqrt => div(Expr::Num(0.5), self.clone()),
                    Func::Abs => div(a, self.clone()),
                };
                mul(outer, inner)
            }
        }
    }
}

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(n) if *n == v)
}

// Constructors that drop additive zeros and multiplicative ones so repeated
// differentiation does not balloon the tree.
fn add(l: Expr, r: Expr) -> Expr {
    if is_num(&l, 0.0) {
        r
    } else if is_num(&r, 0.0) {
        l
    } else {
        Expr::Bin(BinOp::Add, Box::new(l), Box::new(r))
    }
}

fn sub(l: Expr, r: Expr) -> Expr {
    if is_num(&r, 0.0) {
        l
    } else if is_num(&l, 0.0) {
        neg(r)
    } else {
        Expr::Bin(BinOp::Sub, Box::new(l), Box::new(r))
    }
}

fn mul(l: Expr, r: Expr) -> Expr {
    if is_num(&l, 0.0) || is_num(&r, 0.0) {
        Expr::Num(0.0)
    } else if is_num(&l, 1.0) {
        r
    } else if is_num(&r, 1.0) {
        l
    } else {
        Expr::Bin(BinOp::Mul, Box::new(l), Box::new(r))
    }
}

fn div(l: Expr, r: Expr) -> Expr {
    if is_num(&r, 1.0) {
        l
    } else {
        Expr::Bin(BinOp::Div, Box::new(l), Box::new(r))
    }
}

fn pow(l: Expr, r: Expr) -> Expr {
    if is_num(&r, 1.0) {
        l
    } else {
        Expr::Bin(BinOp::Pow, Box::new(l), Box::new(r))
    }
}

fn neg(e: Expr) -> Expr {
    match e {
        Expr::Num(0.0) => Expr::Num(0.0),
        Expr::Neg(inner) => *inner,
        e => Expr::Neg(Box::new(e)),
    }
}

fn call(f: Func, e: Expr) -> Expr {
    Expr::Call(f, Box::new(e))
}

/// Fully parenthesized; parsing the output yields a tree that evaluates
/// identically.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "(-{})", -v),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // optional exponent, only if followed by a digit (after an optional sign)
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    expected: format!("a decimal number, found `{lit}`"),
                })?;
                out.push(Token {
                    tok: Tok::Num(v),
                    offset: start,
                });
                continue;
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(text[start..i].to_string()),
                    offset: start,
                });
                continue;
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => out.push(Token {
                tok: Tok::Op(c as char),
                offset: i,
            }),
            b'(' => out.push(Token {
                tok: Tok::LParen,
                offset: i,
            }),
            b')' => out.push(Token {
                tok: Tok::RParen,
                offset: i,
            }),
            _ => {
                return Err(ExprError::Syntax {
                    offset: i,
                    expected: "a number, identifier, operator or parenthesis".into(),
                })
            }
        }
        i += 1;
    }
    Ok(out)
}

// Binding powers: (+,-) < (*,/) < unary minus < ^
const PREFIX_NEG_BP: u8 = 5;

fn infix_bp(op: char) -> Option<(u8, u8)> {
    match op {
        '+' | '-' => Some((1, 2)),
        '*' | '/' => Some((3, 4)),
        '^' => Some((8, 7)),
        _ => None,
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn offset_here(&self) -> usize {
        self.peek().map_or(self.len, |t| t.offset)
    }

    fn syntax(&self, expected: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.offset_here(),
            expected: expected.into(),
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.prefix()?;
        while let Some(Token {
            tok: Tok::Op(op), ..
        }) = self.peek()
        {
            let op = *op;
            let (l_bp, r_bp) = infix_bp(op).expect("lexer only emits known operators");
            if l_bp < min_bp {
                break;
            }
            self.pos += 1;
            let rhs = self.expr(r_bp)?;
            let op = match op {
                '+' => BinOp::Add,
                '-' => BinOp::Sub,
                '*' => BinOp::Mul,
                '/' => BinOp::Div,
                _ => BinOp::Pow,
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ExprError> {
        const OPERAND: &str = "a number, identifier, `(` or `-`";
        let Some(tok) = self.next() else {
            self.pos -= 1;
            return Err(self.syntax(OPERAND));
        };
        match tok.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Op('-') => Ok(Expr::Neg(Box::new(self.expr(PREFIX_NEG_BP)?))),
            Tok::LParen => {
                let inner = self.expr(0)?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    match self.next() {
                        Some(Token {
                            tok: Tok::LParen, ..
                        }) => {}
                        _ => {
                            self.pos -= 1;
                            return Err(self.syntax(&format!("`(` after `{name}`")));
                        }
                    }
                    let arg = self.expr(0)?;
                    self.expect_rparen()?;
                    Ok(Expr::Call(func, Box::new(arg)))
                } else if let Some(var) = Var::from_name(&name) {
                    Ok(Expr::Var(var))
                } else {
                    Err(ExprError::UnknownIdentifier {
                        name,
                        offset: tok.offset,
                    })
                }
            }
            Tok::Op(_) | Tok::RParen => {
                self.pos -= 1;
                Err(self.syntax(OPERAND))
            }
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        match self.next() {
            Some(Token {
                tok: Tok::RParen, ..
            }) => Ok(()),
            _ => {
                self.pos -= 1;
                Err(self.syntax("`)`"))
            }
        }
    }
}
