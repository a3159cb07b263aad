//! Tiny arithmetic expression language for custom coefficient entries and
//! source/initial data.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | name | name '[' index ']' | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | sqrt | abs
//! ```
//!
//! Variable names are fixed per context: coefficient entries see
//! `y1[i]`, `y2[i]`, `s1`, `s2`; space-time data sees `x[i]` and `t`.
//! The Unicode operators `−` and `×` are accepted as `-` and `*`.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("expression error at byte {pos}: {msg}")]
pub struct ExprError {
    pub pos: usize,
    pub msg: String,
}

/// Which variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarContext {
    /// `y1[i]`, `y2[i]`, `s1`, `s2`
    Coefficient { dim: usize },
    /// `x[i]`, `t`
    SpaceTime { dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Y1(usize),
    Y2(usize),
    S1,
    S2,
    X(usize),
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Variable bindings for evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bindings<'a> {
    pub y1: &'a [f64],
    pub y2: &'a [f64],
    pub s1: f64,
    pub s2: f64,
    pub x: &'a [f64],
    pub t: f64,
}

#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl Expr {
    pub fn parse(src: &str, ctx: VarContext) -> Result<Self, ExprError> {
        let normalized: String = src
            .chars()
            .map(|c| match c {
                '−' => '-',
                '×' => '*',
                c => c,
            })
            .collect();
        let mut p = Parser { s: normalized.as_bytes(), pos: 0, ctx };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Expr { source: src.to_string(), root })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, b: &Bindings<'_>) -> f64 {
        eval(&self.root, b)
    }

    /// True if the expression references `s1` / `s2` respectively.
    pub fn uses_time(&self) -> (bool, bool) {
        let mut out = (false, false);
        visit(&self.root, &mut |v| match v {
            Var::S1 => out.0 = true,
            Var::S2 => out.1 = true,
            _ => {}
        });
        out
    }
}

fn visit(n: &Node, f: &mut impl FnMut(Var)) {
    match n {
        Node::Num(_) => {}
        Node::Var(v) => f(*v),
        Node::Neg(a) | Node::Call(_, a) => visit(a, f),
        Node::Bin(_, a, b) => {
            visit(a, f);
            visit(b, f);
        }
    }
}

fn eval(n: &Node, b: &Bindings<'_>) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(v) => match *v {
            Var::Y1(i) => b.y1[i],
            Var::Y2(i) => b.y2[i],
            Var::S1 => b.s1,
            Var::S2 => b.s2,
            Var::X(i) => b.x[i],
            Var::T => b.t,
        },
        Node::Neg(a) => -eval(a, b),
        Node::Bin(op, l, r) => {
            let (l, r) = (eval(l, b), eval(r, b));
            match op {
                '+' => l + r,
                '-' => l - r,
                '*' => l * r,
                '/' => l / r,
                _ => l.powf(r),
            }
        }
        Node::Call(f, a) => {
            let v = eval(a, b);
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
                Func::Sqrt => v.sqrt(),
                Func::Abs => v.abs(),
            }
        }
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    ctx: VarContext,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(c @ (b'+' | b'-')) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Node::Bin(c as char, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(c @ (b'*' | b'/')) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Node::Bin(c as char, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.name(),
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.s.len() && (self.s[self.pos] == b'e' || self.s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.s.len() && (self.s[self.pos] == b'+' || self.s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| ExprError { pos: start, msg: format!("invalid number '{text}'") })
    }

    fn name(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap().to_string();
        let func = match name.as_str() {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            "abs" => Some(Func::Abs),
            _ => None,
        };
        if let Some(f) = func {
            if !self.eat(b'(') {
                return Err(self.err("expected '(' after function name"));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.err("expected ')'"));
            }
            return Ok(Node::Call(f, Box::new(arg)));
        }
        if name == "pi" {
            return Ok(Node::Num(std::f64::consts::PI));
        }
        let index = if self.eat(b'[') {
            let istart = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let i: usize = std::str::from_utf8(&self.s[istart..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| ExprError { pos: istart, msg: "expected index".into() })?;
            if !self.eat(b']') {
                return Err(self.err("expected ']'"));
            }
            Some(i)
        } else {
            None
        };
        let var = match (self.ctx, name.as_str(), index) {
            (VarContext::Coefficient { dim }, "y1", Some(i)) if i < dim => Var::Y1(i),
            (VarContext::Coefficient { dim }, "y2", Some(i)) if i < dim => Var::Y2(i),
            (VarContext::Coefficient { .. }, "s1", None) => Var::S1,
            (VarContext::Coefficient { .. }, "s2", None) => Var::S2,
            (VarContext::SpaceTime { dim }, "x", Some(i)) if i < dim => Var::X(i),
            (VarContext::SpaceTime { .. }, "t", None) => Var::T,
            _ => {
                return Err(ExprError {
                    pos: start,
                    msg: format!("unknown variable '{name}{}'", index.map(|i| format!("[{i}]")).unwrap_or_default()),
                })
            }
        };
        Ok(Node::Var(var))
    }
}
