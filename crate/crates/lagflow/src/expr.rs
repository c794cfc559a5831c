//! Arithmetic expressions over `x1..x3`, `r` and `t` for custom initial data.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (("+" | "-") product)*
//! product := unary (("*" | "/") unary)*
//! unary   := ("-" | "+") unary | power
//! power   := atom ("^" unary)?
//! atom    := number | name | name "(" sum ("," sum)* ")" | "(" sum ")"
//! ```
//!
//! `x`, `y`, `z` alias `x1`, `x2`, `x3`; `r` is the Euclidean norm; `pi` and
//! `e` are constants.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at offset {}", self.message, self.position)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    X(usize),
    R,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Atan,
    Tanh,
    Sinh,
    Cosh,
    Atan2,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "tan" => (Func::Tan, 1),
            "exp" => (Func::Exp, 1),
            "ln" | "log" => (Func::Ln, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "atan" => (Func::Atan, 1),
            "tanh" => (Func::Tanh, 1),
            "sinh" => (Func::Sinh, 1),
            "cosh" => (Func::Cosh, 1),
            "atan2" => (Func::Atan2, 2),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Tan => a.tan(),
            Func::Exp => a.exp(),
            Func::Ln => a.ln(),
            Func::Sqrt => a.sqrt(),
            Func::Abs => a.abs(),
            Func::Atan => a.atan(),
            Func::Tanh => a.tanh(),
            Func::Sinh => a.sinh(),
            Func::Cosh => a.cosh(),
            Func::Atan2 => a.atan2(b),
            Func::Min => a.min(b),
            Func::Max => a.max(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression, reusable across evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    uses_time: bool,
    max_axis: usize,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        let mut p = Parser {
            s: source.as_bytes(),
            pos: 0,
            uses_time: false,
            max_axis: 0,
        };
        let root = p.sum()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self {
            source: source.to_string(),
            root,
            uses_time: p.uses_time,
            max_axis: p.max_axis,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn uses_time(&self) -> bool {
        self.uses_time
    }

    /// Highest coordinate index referenced, `1..=3`, or 0 for none.
    pub fn max_axis(&self) -> usize {
        self.max_axis
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        eval(&self.root, x, t)
    }

    /// Value of an expression without variables.
    pub fn constant(&self) -> Option<f64> {
        (self.max_axis == 0 && !self.uses_time && !uses_radius(&self.root))
            .then(|| self.eval(&[], 0.0))
    }
}

fn uses_radius(node: &Node) -> bool {
    match node {
        Node::Var(Var::R) => true,
        Node::Num(_) | Node::Var(_) => false,
        Node::Neg(a) => uses_radius(a),
        Node::Bin(_, a, b) => uses_radius(a) || uses_radius(b),
        Node::Call(_, args) => args.iter().any(uses_radius),
    }
}

fn eval(node: &Node, x: &[f64], t: f64) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(Var::X(i)) => x.get(*i).copied().unwrap_or(0.0),
        Node::Var(Var::R) => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        Node::Var(Var::T) => t,
        Node::Neg(a) => -eval(a, x, t),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, x, t), eval(b, x, t));
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' => a / b,
                _ => a.powf(b),
            }
        }
        Node::Call(f, args) => {
            let a = eval(&args[0], x, t);
            let b = args.get(1).map_or(0.0, |n| eval(n, x, t));
            f.apply(a, b)
        }
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    uses_time: bool,
    max_axis: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ParseError {
        ParseError {
            position: self.pos,
            message: message.to_string(),
        }
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

    fn sum(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Some(c @ (b'+' | b'-')) => {
                    self.pos += 1;
                    lhs = Node::Bin(c as char, Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(c @ (b'*' | b'/')) => {
                    self.pos += 1;
                    lhs = Node::Bin(c as char, Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Node::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sum()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.name(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.pos < self.s.len()
            && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.s.len() && matches!(self.s[self.pos], b'e' | b'E') {
            let mut look = self.pos + 1;
            if look < self.s.len() && matches!(self.s[look], b'+' | b'-') {
                look += 1;
            }
            if look < self.s.len() && self.s[look].is_ascii_digit() {
                self.pos = look;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii");
        text.parse().map(Node::Num).map_err(|_| ParseError {
            position: start,
            message: format!("bad number '{text}'"),
        })
    }

    fn name(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.pos < self.s.len()
            && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii");
        if self.peek() == Some(b'(') {
            let Some((func, arity)) = Func::lookup(name) else {
                return Err(ParseError {
                    position: start,
                    message: format!("unknown function '{name}'"),
                });
            };
            self.pos += 1;
            let mut args = vec![self.sum()?];
            while self.eat(b',') {
                args.push(self.sum()?);
            }
            if !self.eat(b')') {
                return Err(self.error("expected ')'"));
            }
            if args.len() != arity {
                return Err(ParseError {
                    position: start,
                    message: format!("'{name}' takes {arity} argument(s), got {}", args.len()),
                });
            }
            return Ok(Node::Call(func, args));
        }
        let axis = |i: usize, p: &mut Self| {
            p.max_axis = p.max_axis.max(i + 1);
            Node::Var(Var::X(i))
        };
        Ok(match name {
            "x" | "x1" => axis(0, self),
            "y" | "x2" => axis(1, self),
            "z" | "x3" => axis(2, self),
            "r" => Node::Var(Var::R),
            "t" => {
                self.uses_time = true;
                Node::Var(Var::T)
            }
            "pi" => Node::Num(std::f64::consts::PI),
            "e" => Node::Num(std::f64::consts::E),
            _ => {
                return Err(ParseError {
                    position: start,
                    message: format!("unknown variable '{name}'"),
                })
            }
        })
    }
}
