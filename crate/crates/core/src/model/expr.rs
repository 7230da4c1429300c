//! Rate expressions: a small arithmetic language over the coordinates
//! `x1..xd` of a simplex point.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | atom
//! atom   := number | xN | name | func '(' args ')' | 'cond' '(' expr cmp expr ',' expr ',' expr ')' | '(' expr ')'
//! func   := min | max | exp | log | abs
//! cmp    := '<' | '<=' | '>' | '>=' | '==' | '!='
//! ```
//!
//! Names other than `xN` are resolved against a parameter table at parse
//! time and replaced by their numeric value. Evaluation follows IEEE
//! semantics, so `log(0)` and `1/0` produce non-finite values instead of
//! panicking; model validation reports them.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Exp,
    Log,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "min" => Func::Min,
            "max" => Func::Max,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Cmp {
    fn symbol(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
            Cmp::Eq => "==",
            Cmp::Ne => "!=",
        }
    }

    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
            Cmp::Gt => a > b,
            Cmp::Ge => a >= b,
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
        }
    }
}

/// Parsed rate expression. `Var(i)` refers to the 0-based coordinate `i`,
/// written `x{i+1}` in source.
#[derive(Debug, Clone, PartialEq)]
pub enum RateExpr {
    Num(f64),
    Var(usize),
    Neg(Box<RateExpr>),
    Bin(BinOp, Box<RateExpr>, Box<RateExpr>),
    Call(Func, Vec<RateExpr>),
    /// `cond(lhs cmp rhs, then, otherwise)`
    Cond {
        cmp: Cmp,
        lhs: Box<RateExpr>,
        rhs: Box<RateExpr>,
        then: Box<RateExpr>,
        otherwise: Box<RateExpr>,
    },
}

impl RateExpr {
    /// Parse an expression with no named parameters.
    pub fn parse(source: &str) -> Result<RateExpr> {
        Self::parse_with(source, &BTreeMap::new())
    }

    /// Parse an expression, substituting named parameters by value.
    pub fn parse_with(source: &str, params: &BTreeMap<String, f64>) -> Result<RateExpr> {
        if source.trim().is_empty() {
            return Err(Error::Syntax {
                offset: 0,
                message: "empty expression".into(),
            });
        }
        let mut p = Parser {
            src: source.as_bytes(),
            pos: 0,
            params,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> RateExpr {
        RateExpr::Num(v)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            RateExpr::Num(v) => *v,
            RateExpr::Var(i) => x.get(*i).copied().unwrap_or(f64::NAN),
            RateExpr::Neg(a) => -a.eval(x),
            RateExpr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            RateExpr::Call(f, args) => match f {
                Func::Min => {
                    let (a, b) = (args[0].eval(x), args[1].eval(x));
                    if a.is_nan() || b.is_nan() {
                        f64::NAN
                    } else {
                        a.min(b)
                    }
                }
                Func::Max => {
                    let (a, b) = (args[0].eval(x), args[1].eval(x));
                    if a.is_nan() || b.is_nan() {
                        f64::NAN
                    } else {
                        a.max(b)
                    }
                }
                Func::Exp => args[0].eval(x).exp(),
                Func::Log => args[0].eval(x).ln(),
                Func::Abs => args[0].eval(x).abs(),
            },
            RateExpr::Cond {
                cmp,
                lhs,
                rhs,
                then,
                otherwise,
            } => {
                if cmp.holds(lhs.eval(x), rhs.eval(x)) {
                    then.eval(x)
                } else {
                    otherwise.eval(x)
                }
            }
        }
    }

    /// Largest 0-based variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            RateExpr::Num(_) => None,
            RateExpr::Var(i) => Some(*i),
            RateExpr::Neg(a) => a.max_var(),
            RateExpr::Bin(_, a, b) => a.max_var().max(b.max_var()),
            RateExpr::Call(_, args) => args.iter().filter_map(|a| a.max_var()).max(),
            RateExpr::Cond {
                lhs,
                rhs,
                then,
                otherwise,
                ..
            } => [lhs, rhs, then, otherwise]
                .iter()
                .filter_map(|a| a.max_var())
                .max(),
        }
    }
}

impl fmt::Display for RateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateExpr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                write!(f, "(-{:?})", -v)
            }
            RateExpr::Num(v) => write!(f, "{v:?}"),
            RateExpr::Var(i) => write!(f, "x{}", i + 1),
            RateExpr::Neg(a) => write!(f, "(-{a})"),
            RateExpr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {s} {b})")
            }
            RateExpr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            RateExpr::Cond {
                cmp,
                lhs,
                rhs,
                then,
                otherwise,
            } => write!(
                f,
                "cond({lhs} {} {rhs}, {then}, {otherwise})",
                cmp.symbol()
            ),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    params: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<RateExpr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = RateExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<RateExpr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = RateExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<RateExpr> {
        if self.eat(b'-') {
            // a negated literal folds into the literal so that printing
            // and reparsing is the identity
            return Ok(match self.unary()? {
                RateExpr::Num(v) => RateExpr::Num(-v),
                e => RateExpr::Neg(Box::new(e)),
            });
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<RateExpr> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(c) => Err(self.err(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<RateExpr> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && s[i].is_ascii_digit() {
            i += 1;
        }
        if i < s.len() && s[i] == b'.' {
            i += 1;
            while i < s.len() && s[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos = i;
                Ok(RateExpr::Num(v))
            }
            _ => Err(self.err("malformed number")),
        }
    }

    fn ident(&mut self) -> Result<RateExpr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos])
            .unwrap_or("")
            .to_string();

        if let Some(rest) = name.strip_prefix('x') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                let idx: usize = rest.parse().map_err(|_| Error::UnknownIdentifier {
                    name: name.clone(),
                    offset: start,
                })?;
                if idx == 0 {
                    return Err(Error::UnknownIdentifier {
                        name,
                        offset: start,
                    });
                }
                return Ok(RateExpr::Var(idx - 1));
            }
        }
        if name == "cond" {
            return self.cond();
        }
        if let Some(func) = Func::from_name(&name) {
            self.expect(b'(')?;
            let mut args = vec![self.expr()?];
            while self.eat(b',') {
                args.push(self.expr()?);
            }
            self.expect(b')')?;
            if args.len() != func.arity() {
                return Err(Error::Arity {
                    name,
                    expected: func.arity(),
                    got: args.len(),
                });
            }
            return Ok(RateExpr::Call(func, args));
        }
        match self.params.get(&name) {
            Some(v) => Ok(RateExpr::Num(*v)),
            None => Err(Error::UnknownIdentifier {
                name,
                offset: start,
            }),
        }
    }

    fn cond(&mut self) -> Result<RateExpr> {
        self.expect(b'(')?;
        let lhs = self.expr()?;
        let cmp = self.cmp()?;
        let rhs = self.expr()?;
        self.expect(b',')?;
        let then = self.expr()?;
        self.expect(b',')?;
        let otherwise = self.expr()?;
        if self.peek() == Some(b',') {
            return Err(Error::Arity {
                name: "cond".into(),
                expected: 3,
                got: 4,
            });
        }
        self.expect(b')')?;
        Ok(RateExpr::Cond {
            cmp,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
            then: Box::new(then),
            otherwise: Box::new(otherwise),
        })
    }

    fn cmp(&mut self) -> Result<Cmp> {
        let c0 = self.peek();
        let c1 = self.src.get(self.pos + 1).copied();
        let (cmp, len) = match (c0, c1) {
            (Some(b'<'), Some(b'=')) => (Cmp::Le, 2),
            (Some(b'>'), Some(b'=')) => (Cmp::Ge, 2),
            (Some(b'='), Some(b'=')) => (Cmp::Eq, 2),
            (Some(b'!'), Some(b'=')) => (Cmp::Ne, 2),
            (Some(b'<'), _) => (Cmp::Lt, 1),
            (Some(b'>'), _) => (Cmp::Gt, 1),
            _ => return Err(self.err("expected comparison operator")),
        };
        self.pos += len;
        Ok(cmp)
    }
}
