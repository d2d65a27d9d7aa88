//! Parser and evaluator for scalar function expressions.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := sum [ "if" cond "else" expr ]
//! cond    := cmp { ("and" | "&&") cmp }
//! cmp     := sum ("<=" | "<" | "==" | ">=" | ">") sum
//! sum     := product { ("+" | "-") product }
//! product := unary { ("*" | "/") unary }
//! unary   := ("-" | "+") unary | atom
//! atom    := number | "inf" | var | call | "(" expr ")"
//! ```
//!
//! Variables are `x1..x3`, `w1..w3`, `u1..u3`, `v1..v3`, `y1..y3`; the digit is the
//! coordinate index, so `x2` and `w2` both read the second coordinate.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const VAR_FAMILIES: &[char] = &['x', 'w', 'u', 'v', 'y'];

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CmpOp {
    Le,
    Lt,
    Eq,
    Ge,
    Gt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Abs,
    Sqrt,
    Exp,
    Ln,
    Neg,
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
    Pow { base: Box<Node>, exp: f64, odd_den: Option<i64> },
    Cond { tests: Vec<(Node, CmpOp, Node)>, then: Box<Node>, other: Box<Node> },
}

/// A parsed expression over up to three coordinates.
#[derive(Clone, PartialEq)]
pub struct FunctionExpr {
    source: String,
    root: Node,
    arity: usize,
}

impl fmt::Debug for FunctionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FunctionExpr({:?})", self.source)
    }
}

impl fmt::Display for FunctionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FunctionExpr {
    pub fn parse(src: &str) -> Result<Self> {
        let toks = lex(src)?;
        let mut p = Parser { toks, pos: 0, arity: 0 };
        let root = p.expr()?;
        if let Some(t) = p.toks.get(p.pos) {
            if t.kind != Tok::End {
                return Err(p.err_at(p.pos, format!("unexpected {}", t.kind)));
            }
        }
        Ok(FunctionExpr { source: src.to_string(), root, arity: p.arity })
    }

    /// Constant function.
    pub fn constant(c: f64) -> Self {
        let source = if c == f64::INFINITY { "+inf".to_string() } else { format!("{c}") };
        FunctionExpr { source, root: Node::Num(c), arity: 0 }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Highest coordinate index referenced.
    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Evaluates at `x`. Undefined operations yield NaN.
    pub fn eval(&self, x: &[f64]) -> f64 {
        eval(&self.root, x)
    }

    /// True when the expression is the literal constant zero.
    pub fn is_zero(&self) -> bool {
        matches!(self.root, Node::Num(c) if c == 0.0)
    }
}

impl Serialize for FunctionExpr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for FunctionExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        FunctionExpr::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn nan_min(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.min(b)
    }
}

fn eval(n: &Node, x: &[f64]) -> f64 {
    match n {
        Node::Num(c) => *c,
        Node::Var(i) => x.get(*i).copied().unwrap_or(f64::NAN),
        Node::Neg(a) => -eval(a, x),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, x), eval(b, x));
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
            }
        }
        Node::Call(f, args) => {
            let a = eval(&args[0], x);
            match f {
                Func::Abs => a.abs(),
                Func::Sqrt => {
                    if a < 0.0 {
                        f64::NAN
                    } else {
                        a.sqrt()
                    }
                }
                Func::Exp => a.exp(),
                Func::Ln => {
                    if a <= 0.0 {
                        f64::NAN
                    } else {
                        a.ln()
                    }
                }
                Func::Neg => -a,
                Func::Max => args[1..].iter().fold(a, |acc, e| nan_max(acc, eval(e, x))),
                Func::Min => args[1..].iter().fold(a, |acc, e| nan_min(acc, eval(e, x))),
            }
        }
        Node::Pow { base, exp, odd_den } => {
            let b = eval(base, x);
            if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
                b.powi(*exp as i32)
            } else if b >= 0.0 {
                b.powf(*exp)
            } else if let Some(q) = odd_den {
                let p = (exp * *q as f64).round() as i64;
                let mag = (-b).powf(*exp);
                if p % 2 == 0 {
                    mag
                } else {
                    -mag
                }
            } else {
                f64::NAN
            }
        }
        Node::Cond { tests, then, other } => {
            let ok = tests.iter().all(|(l, op, r)| {
                let (a, b) = (eval(l, x), eval(r, x));
                match op {
                    CmpOp::Le => a <= b,
                    CmpOp::Lt => a < b,
                    CmpOp::Ge => a >= b,
                    CmpOp::Gt => a > b,
                    CmpOp::Eq => (a - b).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()),
                }
            });
            if ok {
                eval(then, x)
            } else {
                eval(other, x)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Op(s) => write!(f, "'{s}'"),
            Tok::LParen => write!(f, "'('"),
            Tok::RParen => write!(f, "')'"),
            Tok::Comma => write!(f, "','"),
            Tok::End => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let push = |out: &mut Vec<Token>, kind| out.push(Token { kind, line: tl, col: tc });
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Parse { line: tl, col: tc, msg: format!("bad number '{text}'") })?;
            push(&mut out, Tok::Num(v));
            col += i - start;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            push(&mut out, Tok::Ident(chars[start..i].iter().collect()));
            col += i - start;
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let op2 = match two.as_str() {
            "<=" => Some("<="),
            ">=" => Some(">="),
            "==" => Some("=="),
            "&&" => Some("&&"),
            _ => None,
        };
        if let Some(op) = op2 {
            push(&mut out, Tok::Op(op));
            i += 2;
            col += 2;
            continue;
        }
        let kind = match c {
            '+' => Tok::Op("+"),
            '-' => Tok::Op("-"),
            '*' => Tok::Op("*"),
            '/' => Tok::Op("/"),
            '<' => Tok::Op("<"),
            '>' => Tok::Op(">"),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ => return Err(Error::Parse { line: tl, col: tc, msg: format!("unexpected character '{c}'") }),
        };
        push(&mut out, kind);
        i += 1;
        col += 1;
    }
    out.push(Token { kind: Tok::End, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    arity: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].kind
    }

    fn err_at(&self, pos: usize, msg: String) -> Error {
        let t = &self.toks[pos.min(self.toks.len() - 1)];
        Error::Parse { line: t.line, col: t.col, msg }
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        if *self.peek() == want {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err_at(self.pos, format!("expected {want}, found {}", self.peek())))
        }
    }

    fn is_ident(&self, name: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == name)
    }

    fn expr(&mut self) -> Result<Node> {
        let then = self.sum()?;
        if !self.is_ident("if") {
            return Ok(then);
        }
        self.pos += 1;
        let mut tests = vec![self.cmp()?];
        while self.is_ident("and") || *self.peek() == Tok::Op("&&") {
            self.pos += 1;
            tests.push(self.cmp()?);
        }
        if !self.is_ident("else") {
            return Err(self.err_at(self.pos, format!("expected 'else', found {}", self.peek())));
        }
        self.pos += 1;
        let other = self.expr()?;
        Ok(Node::Cond { tests, then: Box::new(then), other: Box::new(other) })
    }

    fn cmp(&mut self) -> Result<(Node, CmpOp, Node)> {
        let l = self.sum()?;
        let op = match self.peek() {
            Tok::Op("<=") => CmpOp::Le,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op(">=") => CmpOp::Ge,
            Tok::Op(">") => CmpOp::Gt,
            other => return Err(self.err_at(self.pos, format!("expected comparison, found {other}"))),
        };
        self.pos += 1;
        let r = self.sum()?;
        Ok((l, op, r))
    }

    fn sum(&mut self) -> Result<Node> {
        let mut acc = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => return Ok(acc),
            };
            self.pos += 1;
            let rhs = self.product()?;
            acc = Node::Bin(op, Box::new(acc), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Node> {
        let mut acc = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                _ => return Ok(acc),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            acc = Node::Bin(op, Box::new(acc), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Tok::Op("-") => {
                self.pos += 1;
                Ok(match self.unary()? {
                    Node::Num(c) => Node::Num(-c),
                    n => Node::Neg(Box::new(n)),
                })
            }
            Tok::Op("+") => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Node> {
        let start = self.pos;
        match self.peek().clone() {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if name == "inf" {
                    return Ok(Node::Num(f64::INFINITY));
                }
                if let Some(i) = var_index(&name) {
                    self.arity = self.arity.max(i + 1);
                    return Ok(Node::Var(i));
                }
                let func = match name.as_str() {
                    "abs" => Some(Func::Abs),
                    "sqrt" => Some(Func::Sqrt),
                    "exp" => Some(Func::Exp),
                    "ln" => Some(Func::Ln),
                    "neg" => Some(Func::Neg),
                    "max" => Some(Func::Max),
                    "min" => Some(Func::Min),
                    "pow" => None,
                    _ => return Err(self.err_at(start, format!("unknown identifier '{name}'"))),
                };
                self.expect(Tok::LParen)?;
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Comma {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen)?;
                match func {
                    None => {
                        if args.len() != 2 {
                            return Err(self.err_at(start, "pow takes exactly two arguments".into()));
                        }
                        let exp = const_value(&args[1])
                            .ok_or_else(|| self.err_at(start, "pow exponent must be a constant".into()))?;
                        let base = args.swap_remove(0);
                        Ok(Node::Pow { base: Box::new(base), exp, odd_den: odd_denominator(exp) })
                    }
                    Some(f @ (Func::Max | Func::Min)) => {
                        if args.len() < 2 {
                            return Err(self.err_at(start, format!("{name} takes at least two arguments")));
                        }
                        Ok(Node::Call(f, args))
                    }
                    Some(f) => {
                        if args.len() != 1 {
                            return Err(self.err_at(start, format!("{name} takes exactly one argument")));
                        }
                        Ok(Node::Call(f, args))
                    }
                }
            }
            other => Err(self.err_at(start, format!("unexpected {other}"))),
        }
    }
}

fn var_index(name: &str) -> Option<usize> {
    let mut cs = name.chars();
    let fam = cs.next()?;
    let digit = cs.next()?;
    if cs.next().is_some() || !VAR_FAMILIES.contains(&fam) {
        return None;
    }
    match digit {
        '1'..='3' => Some(digit as usize - '1' as usize),
        _ => None,
    }
}

fn const_value(n: &Node) -> Option<f64> {
    match n {
        Node::Num(c) => Some(*c),
        Node::Neg(a) => const_value(a).map(|v| -v),
        Node::Bin(op, a, b) => {
            let (a, b) = (const_value(a)?, const_value(b)?);
            Some(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
            })
        }
        _ => None,
    }
}

/// Denominator of `k` as a reduced fraction with odd denominator up to 999, if any.
fn odd_denominator(k: f64) -> Option<i64> {
    (1..1000i64).step_by(2).find(|&q| {
        let p = k * q as f64;
        (p - p.round()).abs() <= 1e-9
    })
}
