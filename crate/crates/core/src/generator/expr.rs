//! Small arithmetic expression language for user-declared generators and densities.
//!
//! Grammar (see `docs/generators.md`):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | name | name '[' index ']' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func    := pow | exp | log | dot | norm2
//! ```
//!
//! `x` and `y` are vectors, `z` is a scalar, every other name must be a
//! parameter supplied at parse time.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geom::Interval;

use super::Generator;

/// Scalar or vector value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Value {
    fn scalar(self) -> Result<f64> {
        match self {
            Value::Scalar(s) => Ok(s),
            Value::Vector(_) => Err(Error::Expression("expected a scalar, found a vector".into())),
        }
    }

    fn vector(self) -> Result<Vec<f64>> {
        match self {
            Value::Vector(v) => Ok(v),
            Value::Scalar(_) => Err(Error::Expression("expected a vector, found a scalar".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Pow,
    Exp,
    Log,
    Dot,
    Norm2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(Var),
    Index(Var, usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
}

impl Expr {
    /// Parse with the given scalar parameters.
    pub fn parse(src: &str, params: &BTreeMap<String, f64>) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, params };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!("unexpected trailing input at token {}", p.pos)));
        }
        Ok(Expr { root })
    }

    /// Evaluate with bindings for `x`, `y`, `z`.
    pub fn eval(&self, x: &[f64], y: &[f64], z: f64) -> Result<Value> {
        self.root.eval(x, y, z)
    }

    /// Evaluate and require a scalar.
    pub fn eval_scalar(&self, x: &[f64], y: &[f64], z: f64) -> Result<f64> {
        self.eval(x, y, z)?.scalar()
    }

    /// Whether the expression mentions the variable `name` (`x`, `y` or `z`).
    pub fn mentions(&self, name: &str) -> bool {
        let target = match name {
            "x" => Var::X,
            "y" => Var::Y,
            "z" => Var::Z,
            _ => return false,
        };
        self.root.mentions(target)
    }
}

impl Node {
    fn eval(&self, x: &[f64], y: &[f64], z: f64) -> Result<Value> {
        Ok(match self {
            Node::Const(c) => Value::Scalar(*c),
            Node::Var(v) => match v {
                Var::X => Value::Vector(x.to_vec()),
                Var::Y => Value::Vector(y.to_vec()),
                Var::Z => Value::Scalar(z),
            },
            Node::Index(v, i) => {
                let src = match v {
                    Var::X => x,
                    Var::Y => y,
                    Var::Z => return Err(Error::Expression("z is a scalar and cannot be indexed".into())),
                };
                Value::Scalar(
                    *src.get(*i).ok_or_else(|| Error::Expression(format!("index {i} out of range")))?,
                )
            }
            Node::Neg(a) => match a.eval(x, y, z)? {
                Value::Scalar(s) => Value::Scalar(-s),
                Value::Vector(v) => Value::Vector(v.into_iter().map(|t| -t).collect()),
            },
            Node::Bin(op, a, b) => binary(*op, a.eval(x, y, z)?, b.eval(x, y, z)?)?,
            Node::Call(f, args) => {
                let vals: Vec<Value> = args.iter().map(|a| a.eval(x, y, z)).collect::<Result<_>>()?;
                call(*f, vals)?
            }
        })
    }

    fn mentions(&self, target: Var) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(v) | Node::Index(v, _) => *v == target,
            Node::Neg(a) => a.mentions(target),
            Node::Bin(_, a, b) => a.mentions(target) || b.mentions(target),
            Node::Call(_, args) => args.iter().any(|a| a.mentions(target)),
        }
    }
}

fn binary(op: BinOp, a: Value, b: Value) -> Result<Value> {
    use Value::{Scalar as S, Vector as V};
    let zip = |a: Vec<f64>, b: Vec<f64>, f: fn(f64, f64) -> f64| -> Result<Value> {
        if a.len() != b.len() {
            return Err(Error::Expression("vector length mismatch".into()));
        }
        Ok(V(a.into_iter().zip(b).map(|(s, t)| f(s, t)).collect()))
    };
    match (op, a, b) {
        (BinOp::Add, S(s), S(t)) => Ok(S(s + t)),
        (BinOp::Sub, S(s), S(t)) => Ok(S(s - t)),
        (BinOp::Mul, S(s), S(t)) => Ok(S(s * t)),
        (BinOp::Div, S(s), S(t)) => Ok(S(s / t)),
        (BinOp::Add, V(a), V(b)) => zip(a, b, |s, t| s + t),
        (BinOp::Sub, V(a), V(b)) => zip(a, b, |s, t| s - t),
        (BinOp::Mul, S(s), V(v)) | (BinOp::Mul, V(v), S(s)) => Ok(V(v.into_iter().map(|t| s * t).collect())),
        (BinOp::Div, V(v), S(s)) => Ok(V(v.into_iter().map(|t| t / s).collect())),
        (op, _, _) => Err(Error::Expression(format!("operator {op:?} not defined for these operand kinds"))),
    }
}

fn call(f: Func, mut args: Vec<Value>) -> Result<Value> {
    let arity = match f {
        Func::Pow | Func::Dot => 2,
        Func::Exp | Func::Log | Func::Norm2 => 1,
    };
    if args.len() != arity {
        return Err(Error::Expression(format!("{f:?} expects {arity} argument(s)")));
    }
    Ok(match f {
        Func::Pow => {
            let e = args.pop().unwrap().scalar()?;
            Value::Scalar(args.pop().unwrap().scalar()?.powf(e))
        }
        Func::Exp => Value::Scalar(args.pop().unwrap().scalar()?.exp()),
        Func::Log => Value::Scalar(args.pop().unwrap().scalar()?.ln()),
        Func::Dot => {
            let b = args.pop().unwrap().vector()?;
            let a = args.pop().unwrap().vector()?;
            if a.len() != b.len() {
                return Err(Error::Expression("dot of vectors with different lengths".into()));
            }
            Value::Scalar(a.iter().zip(&b).map(|(s, t)| s * t).sum())
        }
        Func::Norm2 => {
            let a = args.pop().unwrap().vector()?;
            Value::Scalar(a.iter().map(|t| t * t).sum::<f64>().sqrt())
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let s: String = chars[start..i].iter().collect();
            out.push(Tok::Num(s.parse().map_err(|_| Error::Expression(format!("bad number '{s}'")))?));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Name(chars[start..i].iter().collect()));
        } else if "+-*/(),[]".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character '{c}'")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    params: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn peek_op(&self, c: char) -> bool {
        matches!(self.tokens.get(self.pos), Some(Tok::Op(d)) if *d == c)
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_op(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Expression(format!("expected '{c}' at token {}", self.pos)))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.peek_op('+') {
                BinOp::Add
            } else if self.peek_op('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.peek_op('*') {
                BinOp::Mul
            } else if self.peek_op('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek_op('-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Node> {
        let tok = self.tokens.get(self.pos).cloned().ok_or_else(|| Error::Expression("unexpected end of input".into()))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Name(name) => {
                let func = match name.as_str() {
                    "pow" => Some(Func::Pow),
                    "exp" => Some(Func::Exp),
                    "log" => Some(Func::Log),
                    "dot" => Some(Func::Dot),
                    "norm2" => Some(Func::Norm2),
                    _ => None,
                };
                if let Some(f) = func {
                    self.expect('(')?;
                    let mut args = vec![self.expr()?];
                    while self.peek_op(',') {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    return Ok(Node::Call(f, args));
                }
                let var = match name.as_str() {
                    "x" => Some(Var::X),
                    "y" => Some(Var::Y),
                    "z" => Some(Var::Z),
                    _ => None,
                };
                match var {
                    Some(v) => {
                        if self.peek_op('[') {
                            self.pos += 1;
                            let idx = match self.tokens.get(self.pos) {
                                Some(Tok::Num(k)) if k.fract() == 0.0 && *k >= 0.0 => *k as usize,
                                _ => return Err(Error::Expression("index must be a non-negative integer".into())),
                            };
                            self.pos += 1;
                            self.expect(']')?;
                            Ok(Node::Index(v, idx))
                        } else {
                            Ok(Node::Var(v))
                        }
                    }
                    None => self
                        .params
                        .get(&name)
                        .map(|v| Node::Const(*v))
                        .ok_or_else(|| Error::Expression(format!("unknown name '{name}'"))),
                }
            }
            Tok::Op(c) => Err(Error::Expression(format!("unexpected '{c}'"))),
        }
    }
}

/// Generator defined by an expression in `x`, `y`, `z`.
///
/// Derivatives come from central differences.
#[derive(Debug, Clone)]
pub struct ExpressionGenerator {
    n: usize,
    source: String,
    expr: Expr,
    z_range: Interval,
}

impl ExpressionGenerator {
    pub fn new(n: usize, source: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let expr = Expr::parse(source, params)?;
        let probe = vec![0.5; n];
        expr.eval_scalar(&probe, &probe, 0.0)?;
        Ok(ExpressionGenerator { n, source: source.to_string(), expr, z_range: Interval::unbounded() })
    }

    pub fn with_z_interval(mut self, range: Interval) -> Self {
        self.z_range = range;
        self
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl Generator for ExpressionGenerator {
    fn dim(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        "expression".into()
    }

    fn value(&self, x: &[f64], y: &[f64], z: f64) -> f64 {
        self.expr.eval_scalar(x, y, z).unwrap_or(f64::NAN)
    }

    fn z_interval(&self, _x: &[f64], _y: &[f64]) -> Interval {
        self.z_range
    }
}
