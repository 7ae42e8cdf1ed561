//! Complex expression parsing, evaluation, and holomorphic differentiation.
//!
//! Expressions define the components of a parametrization `t -> z(t)` with
//! variables `t1..tk`, complex literals (`3`, `2i`, `1.5e-2`), the imaginary
//! unit `i`, operators `+ - * / ^` (integer exponents only), and the
//! functions `exp`, `sin`, `cos`. Evaluation is plain complex arithmetic;
//! derivatives are forward-mode holomorphic jets, one dual component per
//! variable.

use num_complex::Complex64;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable t{index} exceeds arity {arity}")]
    VarOutOfRange { index: usize, arity: usize },
    #[error("exponent at byte {offset} must be an integer")]
    NonIntegerExponent { offset: usize },
    #[error("division by zero while evaluating")]
    DivisionByZero,
    #[error("component {index} evaluated to zero (point leaves the torus)")]
    ZeroCoordinate { index: usize },
    #[error("evaluation produced a non-finite value")]
    NonFinite,
}

/// AST of a complex-valued expression in variables `t1..tk` (0-based inside).
#[derive(Debug, Clone, PartialEq)]
pub enum ComplexExpr {
    Literal(Complex64),
    /// 0-based variable index; `t1` parses to `Var(0)`.
    Var(usize),
    Add(Box<ComplexExpr>, Box<ComplexExpr>),
    Sub(Box<ComplexExpr>, Box<ComplexExpr>),
    Mul(Box<ComplexExpr>, Box<ComplexExpr>),
    Div(Box<ComplexExpr>, Box<ComplexExpr>),
    Pow(Box<ComplexExpr>, i32),
    Neg(Box<ComplexExpr>),
    Exp(Box<ComplexExpr>),
    Sin(Box<ComplexExpr>),
    Cos(Box<ComplexExpr>),
}

/// Point value of a parametrization together with its holomorphic Jacobian.
///
/// `value[i]` is the i-th coordinate z_i and `dz[i*k + j]` is dz_i/dt_j.
#[derive(Debug, Clone, Default)]
pub struct Jet {
    pub value: Vec<Complex64>,
    pub dz: Vec<Complex64>,
    pub n: usize,
    pub k: usize,
}

impl Jet {
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.dz[i * self.k..(i + 1) * self.k]
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    /// Numeric literal directly suffixed with `i`, e.g. `2i`.
    Imag(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next_tok(&mut self) -> Result<Option<(Tok, usize)>, ExprError> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => {
                let num = self.lex_number(start)?;
                // A digit run immediately followed by `i` is an imaginary literal,
                // unless the `i` starts a longer identifier.
                if self.pos < self.src.len()
                    && self.src[self.pos] == b'i'
                    && !(self.pos + 1 < self.src.len()
                        && (self.src[self.pos + 1].is_ascii_alphanumeric()))
                {
                    self.pos += 1;
                    Tok::Imag(num)
                } else {
                    Tok::Num(num)
                }
            }
            b'a'..=b'z' | b'A'..=b'Z' => {
                let mut end = self.pos;
                while end < self.src.len() && self.src[end].is_ascii_alphanumeric() {
                    end += 1;
                }
                let name = std::str::from_utf8(&self.src[self.pos..end])
                    .unwrap()
                    .to_string();
                self.pos = end;
                Tok::Ident(name)
            }
            other => {
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(Some((tok, start)))
    }

    fn lex_number(&mut self, start: usize) -> Result<f64, ExprError> {
        let mut end = self.pos;
        while end < self.src.len() && (self.src[end].is_ascii_digit() || self.src[end] == b'.') {
            end += 1;
        }
        // Scientific exponent: e or E followed by optional sign and digits,
        // only when digits actually follow (so `2e` is `2 * e`-style error).
        if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
            let mut probe = end + 1;
            if probe < self.src.len() && (self.src[probe] == b'+' || self.src[probe] == b'-') {
                probe += 1;
            }
            if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                while probe < self.src.len() && self.src[probe].is_ascii_digit() {
                    probe += 1;
                }
                end = probe;
            }
        }
        let text = std::str::from_utf8(&self.src[start..end]).unwrap();
        let val = text.parse::<f64>().map_err(|_| ExprError::Syntax {
            offset: start,
            message: format!("invalid number `{text}`"),
        })?;
        self.pos = end;
        Ok(val)
    }
}

// ---------------------------------------------------------------------------
// Parser (recursive descent)
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    arity: usize,
    src_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(Tok, usize)> {
        self.toks.get(self.idx)
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.idx).cloned();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.peek().map(|(_, o)| *o).unwrap_or(self.src_len)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ExprError> {
        match self.bump() {
            Some((t, _)) if t == want => Ok(()),
            Some((_, o)) => Err(ExprError::Syntax {
                offset: o,
                message: format!("expected {what}"),
            }),
            None => Err(ExprError::Syntax {
                offset: self.src_len,
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn expr(&mut self) -> Result<ComplexExpr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some((Tok::Plus, _)) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = ComplexExpr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some((Tok::Minus, _)) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = ComplexExpr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ComplexExpr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some((Tok::Star, _)) => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = ComplexExpr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some((Tok::Slash, _)) => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = ComplexExpr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<ComplexExpr, ExprError> {
        if let Some((Tok::Minus, _)) = self.peek() {
            self.bump();
            let inner = self.unary()?;
            return Ok(ComplexExpr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ComplexExpr, ExprError> {
        let base = self.atom()?;
        if let Some((Tok::Caret, _)) = self.peek() {
            self.bump();
            let exp = self.integer_exponent()?;
            return Ok(ComplexExpr::Pow(Box::new(base), exp));
        }
        Ok(base)
    }

    fn integer_exponent(&mut self) -> Result<i32, ExprError> {
        let offset = self.here();
        let neg = matches!(self.peek(), Some((Tok::Minus, _)));
        if neg {
            self.bump();
        }
        match self.bump() {
            Some((Tok::Num(v), o)) => {
                if v.fract() != 0.0 || v.abs() > i32::MAX as f64 {
                    return Err(ExprError::NonIntegerExponent { offset: o });
                }
                let n = v as i32;
                Ok(if neg { -n } else { n })
            }
            Some((_, o)) => Err(ExprError::NonIntegerExponent { offset: o }),
            None => Err(ExprError::NonIntegerExponent { offset }),
        }
    }

    fn atom(&mut self) -> Result<ComplexExpr, ExprError> {
        match self.bump() {
            Some((Tok::Num(v), _)) => Ok(ComplexExpr::Literal(Complex64::new(v, 0.0))),
            Some((Tok::Imag(v), _)) => Ok(ComplexExpr::Literal(Complex64::new(0.0, v))),
            Some((Tok::LParen, _)) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some((Tok::Ident(name), offset)) => self.ident(name, offset),
            Some((_, o)) => Err(ExprError::Syntax {
                offset: o,
                message: "expected a literal, variable, function, or `(`".into(),
            }),
            None => Err(ExprError::Syntax {
                offset: self.src_len,
                message: "unexpected end of input".into(),
            }),
        }
    }

    fn ident(&mut self, name: String, offset: usize) -> Result<ComplexExpr, ExprError> {
        match name.as_str() {
            "i" => return Ok(ComplexExpr::Literal(Complex64::new(0.0, 1.0))),
            "exp" | "sin" | "cos" => {
                self.expect(Tok::LParen, "`(` after function name")?;
                let arg = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                let b = Box::new(arg);
                return Ok(match name.as_str() {
                    "exp" => ComplexExpr::Exp(b),
                    "sin" => ComplexExpr::Sin(b),
                    _ => ComplexExpr::Cos(b),
                });
            }
            _ => {}
        }
        if let Some(rest) = name.strip_prefix('t') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = rest.parse().map_err(|_| ExprError::Syntax {
                    offset,
                    message: format!("invalid variable `{name}`"),
                })?;
                if index == 0 || index > self.arity {
                    return Err(ExprError::VarOutOfRange {
                        index,
                        arity: self.arity,
                    });
                }
                return Ok(ComplexExpr::Var(index - 1));
            }
        }
        Err(ExprError::UnknownIdentifier { name, offset })
    }
}

/// Parse an expression in `k` variables `t1..tk`.
pub fn parse(source: &str, k: usize) -> Result<ComplexExpr, ExprError> {
    let mut lexer = Lexer::new(source);
    let mut toks = Vec::new();
    while let Some(t) = lexer.next_tok()? {
        toks.push(t);
    }
    let mut parser = Parser {
        toks,
        idx: 0,
        arity: k,
        src_len: source.len(),
    };
    let ast = parser.expr()?;
    if let Some((_, o)) = parser.peek() {
        return Err(ExprError::Syntax {
            offset: *o,
            message: "trailing input".into(),
        });
    }
    Ok(ast)
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

fn precedence(e: &ComplexExpr) -> u8 {
    match e {
        ComplexExpr::Add(..) | ComplexExpr::Sub(..) => 1,
        ComplexExpr::Mul(..) | ComplexExpr::Div(..) => 2,
        ComplexExpr::Neg(..) => 3,
        ComplexExpr::Pow(..) => 4,
        _ => 5,
    }
}

fn fmt_with_parens(
    e: &ComplexExpr,
    parent_prec: u8,
    f: &mut fmt::Formatter<'_>,
) -> fmt::Result {
    let prec = precedence(e);
    let parens = prec < parent_prec;
    if parens {
        write!(f, "(")?;
    }
    match e {
        ComplexExpr::Literal(c) => {
            if c.im == 0.0 {
                write!(f, "{}", c.re)?;
            } else if c.re == 0.0 {
                if c.im == 1.0 {
                    write!(f, "i")?;
                } else {
                    write!(f, "{}i", c.im)?;
                }
            } else {
                // Mixed literals only arise from programmatic construction;
                // printed form re-parses to an equivalent sum.
                write!(f, "({}+{}i)", c.re, c.im)?;
            }
        }
        ComplexExpr::Var(j) => write!(f, "t{}", j + 1)?,
        ComplexExpr::Add(a, b) => {
            fmt_with_parens(a, 1, f)?;
            write!(f, "+")?;
            fmt_with_parens(b, 2, f)?;
        }
        ComplexExpr::Sub(a, b) => {
            fmt_with_parens(a, 1, f)?;
            write!(f, "-")?;
            fmt_with_parens(b, 2, f)?;
        }
        ComplexExpr::Mul(a, b) => {
            fmt_with_parens(a, 2, f)?;
            write!(f, "*")?;
            fmt_with_parens(b, 3, f)?;
        }
        ComplexExpr::Div(a, b) => {
            fmt_with_parens(a, 2, f)?;
            write!(f, "/")?;
            fmt_with_parens(b, 3, f)?;
        }
        ComplexExpr::Neg(a) => {
            write!(f, "-")?;
            fmt_with_parens(a, 3, f)?;
        }
        ComplexExpr::Pow(a, n) => {
            fmt_with_parens(a, 5, f)?;
            write!(f, "^{n}")?;
        }
        ComplexExpr::Exp(a) => {
            write!(f, "exp(")?;
            fmt_with_parens(a, 0, f)?;
            write!(f, ")")?;
        }
        ComplexExpr::Sin(a) => {
            write!(f, "sin(")?;
            fmt_with_parens(a, 0, f)?;
            write!(f, ")")?;
        }
        ComplexExpr::Cos(a) => {
            write!(f, "cos(")?;
            fmt_with_parens(a, 0, f)?;
            write!(f, ")")?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for ComplexExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_with_parens(self, 0, f)
    }
}

// ---------------------------------------------------------------------------
// Compiled tape evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum Instr {
    Lit(Complex64),
    Var(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Pow(u32, i32),
    Neg(u32),
    Exp(u32),
    Sin(u32),
    Cos(u32),
}

/// A system of `n` expressions flattened to a shared instruction tape for
/// allocation-free repeated jet evaluation.
#[derive(Debug, Clone)]
pub struct CompiledSystem {
    instrs: Vec<Instr>,
    outputs: Vec<u32>,
    pub arity: usize,
}

/// Reusable evaluation buffers; one per thread.
#[derive(Debug, Default, Clone)]
pub struct EvalWorkspace {
    vals: Vec<Complex64>,
    grads: Vec<Complex64>,
}

impl CompiledSystem {
    pub fn compile(exprs: &[ComplexExpr], arity: usize) -> Self {
        let mut instrs = Vec::new();
        let mut outputs = Vec::new();
        for e in exprs {
            let slot = Self::emit(e, &mut instrs);
            outputs.push(slot);
        }
        Self {
            instrs,
            outputs,
            arity,
        }
    }

    fn emit(e: &ComplexExpr, instrs: &mut Vec<Instr>) -> u32 {
        let instr = match e {
            ComplexExpr::Literal(c) => Instr::Lit(*c),
            ComplexExpr::Var(j) => Instr::Var(*j as u32),
            ComplexExpr::Add(a, b) => {
                let (x, y) = (Self::emit(a, instrs), Self::emit(b, instrs));
                Instr::Add(x, y)
            }
            ComplexExpr::Sub(a, b) => {
                let (x, y) = (Self::emit(a, instrs), Self::emit(b, instrs));
                Instr::Sub(x, y)
            }
            ComplexExpr::Mul(a, b) => {
                let (x, y) = (Self::emit(a, instrs), Self::emit(b, instrs));
                Instr::Mul(x, y)
            }
            ComplexExpr::Div(a, b) => {
                let (x, y) = (Self::emit(a, instrs), Self::emit(b, instrs));
                Instr::Div(x, y)
            }
            ComplexExpr::Pow(a, n) => {
                let x = Self::emit(a, instrs);
                Instr::Pow(x, *n)
            }
            ComplexExpr::Neg(a) => {
                let x = Self::emit(a, instrs);
                Instr::Neg(x)
            }
            ComplexExpr::Exp(a) => {
                let x = Self::emit(a, instrs);
                Instr::Exp(x)
            }
            ComplexExpr::Sin(a) => {
                let x = Self::emit(a, instrs);
                Instr::Sin(x)
            }
            ComplexExpr::Cos(a) => {
                let x = Self::emit(a, instrs);
                Instr::Cos(x)
            }
        };
        instrs.push(instr);
        (instrs.len() - 1) as u32
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Evaluate values and holomorphic derivatives into `jet`, reusing `ws`.
    ///
    /// Fails on division by zero, non-finite intermediates, or any output
    /// coordinate equal to zero (the point leaves the torus).
    pub fn eval_jet_into(
        &self,
        t: &[Complex64],
        ws: &mut EvalWorkspace,
        jet: &mut Jet,
    ) -> Result<(), ExprError> {
        let k = self.arity;
        debug_assert_eq!(t.len(), k);
        let slots = self.instrs.len();
        ws.vals.resize(slots, Complex64::default());
        ws.grads.resize(slots * k, Complex64::default());
        let zero = Complex64::new(0.0, 0.0);

        for (s, instr) in self.instrs.iter().enumerate() {
            let gbase = s * k;
            match *instr {
                Instr::Lit(c) => {
                    ws.vals[s] = c;
                    ws.grads[gbase..gbase + k].fill(zero);
                }
                Instr::Var(j) => {
                    ws.vals[s] = t[j as usize];
                    ws.grads[gbase..gbase + k].fill(zero);
                    ws.grads[gbase + j as usize] = Complex64::new(1.0, 0.0);
                }
                Instr::Add(a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    ws.vals[s] = ws.vals[a] + ws.vals[b];
                    for j in 0..k {
                        ws.grads[gbase + j] = ws.grads[a * k + j] + ws.grads[b * k + j];
                    }
                }
                Instr::Sub(a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    ws.vals[s] = ws.vals[a] - ws.vals[b];
                    for j in 0..k {
                        ws.grads[gbase + j] = ws.grads[a * k + j] - ws.grads[b * k + j];
                    }
                }
                Instr::Mul(a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    let (va, vb) = (ws.vals[a], ws.vals[b]);
                    ws.vals[s] = va * vb;
                    for j in 0..k {
                        ws.grads[gbase + j] = ws.grads[a * k + j] * vb + va * ws.grads[b * k + j];
                    }
                }
                Instr::Div(a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    let vb = ws.vals[b];
                    if vb == zero {
                        return Err(ExprError::DivisionByZero);
                    }
                    let q = ws.vals[a] / vb;
                    ws.vals[s] = q;
                    for j in 0..k {
                        ws.grads[gbase + j] = (ws.grads[a * k + j] - q * ws.grads[b * k + j]) / vb;
                    }
                }
                Instr::Pow(a, n) => {
                    let a = a as usize;
                    let va = ws.vals[a];
                    if n < 0 && va == zero {
                        return Err(ExprError::DivisionByZero);
                    }
                    ws.vals[s] = va.powi(n);
                    // d(z^n) = n z^(n-1) dz; n=0 gives the constant 1.
                    let factor = if n == 0 {
                        zero
                    } else {
                        Complex64::new(n as f64, 0.0) * va.powi(n - 1)
                    };
                    for j in 0..k {
                        ws.grads[gbase + j] = factor * ws.grads[a * k + j];
                    }
                }
                Instr::Neg(a) => {
                    let a = a as usize;
                    ws.vals[s] = -ws.vals[a];
                    for j in 0..k {
                        ws.grads[gbase + j] = -ws.grads[a * k + j];
                    }
                }
                Instr::Exp(a) => {
                    let a = a as usize;
                    let v = ws.vals[a].exp();
                    ws.vals[s] = v;
                    for j in 0..k {
                        ws.grads[gbase + j] = v * ws.grads[a * k + j];
                    }
                }
                Instr::Sin(a) => {
                    let a = a as usize;
                    let va = ws.vals[a];
                    ws.vals[s] = va.sin();
                    let c = va.cos();
                    for j in 0..k {
                        ws.grads[gbase + j] = c * ws.grads[a * k + j];
                    }
                }
                Instr::Cos(a) => {
                    let a = a as usize;
                    let va = ws.vals[a];
                    ws.vals[s] = va.cos();
                    let ns = -va.sin();
                    for j in 0..k {
                        ws.grads[gbase + j] = ns * ws.grads[a * k + j];
                    }
                }
            }
        }

        let n = self.outputs.len();
        jet.n = n;
        jet.k = k;
        jet.value.resize(n, zero);
        jet.dz.resize(n * k, zero);
        for (i, &slot) in self.outputs.iter().enumerate() {
            let v = ws.vals[slot as usize];
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(ExprError::NonFinite);
            }
            if v == zero {
                return Err(ExprError::ZeroCoordinate { index: i });
            }
            jet.value[i] = v;
            let gbase = slot as usize * k;
            for j in 0..k {
                let g = ws.grads[gbase + j];
                if !g.re.is_finite() || !g.im.is_finite() {
                    return Err(ExprError::NonFinite);
                }
                jet.dz[i * k + j] = g;
            }
        }
        Ok(())
    }
}

/// Evaluate `n` expressions and their holomorphic Jacobian at `t`.
pub fn eval_jet(exprs: &[ComplexExpr], k: usize, t: &[Complex64]) -> Result<Jet, ExprError> {
    let sys = CompiledSystem::compile(exprs, k);
    let mut ws = EvalWorkspace::default();
    let mut jet = Jet::default();
    sys.eval_jet_into(t, &mut ws, &mut jet)?;
    Ok(jet)
}

/// Evaluate a single expression (no derivatives).
pub fn eval(expr: &ComplexExpr, t: &[Complex64]) -> Result<Complex64, ExprError> {
    match expr {
        ComplexExpr::Literal(c) => Ok(*c),
        ComplexExpr::Var(j) => Ok(t[*j]),
        ComplexExpr::Add(a, b) => Ok(eval(a, t)? + eval(b, t)?),
        ComplexExpr::Sub(a, b) => Ok(eval(a, t)? - eval(b, t)?),
        ComplexExpr::Mul(a, b) => Ok(eval(a, t)? * eval(b, t)?),
        ComplexExpr::Div(a, b) => {
            let d = eval(b, t)?;
            if d == Complex64::new(0.0, 0.0) {
                return Err(ExprError::DivisionByZero);
            }
            Ok(eval(a, t)? / d)
        }
        ComplexExpr::Pow(a, n) => {
            let v = eval(a, t)?;
            if *n < 0 && v == Complex64::new(0.0, 0.0) {
                return Err(ExprError::DivisionByZero);
            }
            Ok(v.powi(*n))
        }
        ComplexExpr::Neg(a) => Ok(-eval(a, t)?),
        ComplexExpr::Exp(a) => Ok(eval(a, t)?.exp()),
        ComplexExpr::Sin(a) => Ok(eval(a, t)?.sin()),
        ComplexExpr::Cos(a) => Ok(eval(a, t)?.cos()),
    }
}

/// Affine form `offset + sum coeffs[i] * t_i`, extracted from an AST when the
/// expression is (structurally) affine. Drives pole-aware sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub coeffs: Vec<Complex64>,
    pub offset: Complex64,
}

impl AffineForm {
    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|c| *c == Complex64::new(0.0, 0.0))
    }

    pub fn eval(&self, t: &[Complex64]) -> Complex64 {
        let mut v = self.offset;
        for (c, x) in self.coeffs.iter().zip(t) {
            v += c * x;
        }
        v
    }
}

/// Extract the affine form of `expr` if it is affine in `t1..tk`.
pub fn as_affine(expr: &ComplexExpr, k: usize) -> Option<AffineForm> {
    let zero = Complex64::new(0.0, 0.0);
    let lift = |c: Complex64| AffineForm {
        coeffs: vec![zero; k],
        offset: c,
    };
    match expr {
        ComplexExpr::Literal(c) => Some(lift(*c)),
        ComplexExpr::Var(j) => {
            let mut f = lift(zero);
            f.coeffs[*j] = Complex64::new(1.0, 0.0);
            Some(f)
        }
        ComplexExpr::Add(a, b) => {
            let (x, y) = (as_affine(a, k)?, as_affine(b, k)?);
            Some(AffineForm {
                coeffs: x.coeffs.iter().zip(&y.coeffs).map(|(p, q)| p + q).collect(),
                offset: x.offset + y.offset,
            })
        }
        ComplexExpr::Sub(a, b) => {
            let (x, y) = (as_affine(a, k)?, as_affine(b, k)?);
            Some(AffineForm {
                coeffs: x.coeffs.iter().zip(&y.coeffs).map(|(p, q)| p - q).collect(),
                offset: x.offset - y.offset,
            })
        }
        ComplexExpr::Neg(a) => {
            let x = as_affine(a, k)?;
            Some(AffineForm {
                coeffs: x.coeffs.iter().map(|c| -c).collect(),
                offset: -x.offset,
            })
        }
        ComplexExpr::Mul(a, b) => {
            let (x, y) = (as_affine(a, k)?, as_affine(b, k)?);
            if x.is_constant() {
                Some(AffineForm {
                    coeffs: y.coeffs.iter().map(|c| c * x.offset).collect(),
                    offset: y.offset * x.offset,
                })
            } else if y.is_constant() {
                Some(AffineForm {
                    coeffs: x.coeffs.iter().map(|c| c * y.offset).collect(),
                    offset: x.offset * y.offset,
                })
            } else {
                None
            }
        }
        ComplexExpr::Div(a, b) => {
            let (x, y) = (as_affine(a, k)?, as_affine(b, k)?);
            if y.is_constant() && y.offset != zero {
                Some(AffineForm {
                    coeffs: x.coeffs.iter().map(|c| c / y.offset).collect(),
                    offset: x.offset / y.offset,
                })
            } else {
                None
            }
        }
        ComplexExpr::Pow(a, 1) => as_affine(a, k),
        ComplexExpr::Pow(a, 0) => {
            as_affine(a, k)?;
            Some(lift(Complex64::new(1.0, 0.0)))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn parse_identity_expression() {
        let e = parse("t1", 1).unwrap();
        assert_eq!(eval(&e, &[c(2.0, 0.0)]).unwrap(), c(2.0, 0.0));
    }

    #[test]
    fn parse_direct_arithmetic() {
        let e = parse("1+t1", 1).unwrap();
        assert_eq!(eval(&e, &[c(0.0, 1.0)]).unwrap(), c(1.0, 1.0));
    }

    #[test]
    fn euler_identity() {
        let e = parse("exp(t1)", 1).unwrap();
        let v = eval(&e, &[c(0.0, PI)]).unwrap();
        assert!((v - c(-1.0, 0.0)).norm() <= 1e-12, "{v}");
    }

    #[test]
    fn imaginary_literals() {
        let e = parse("2i*t1 + (1+3i)", 1).unwrap();
        let v = eval(&e, &[c(1.0, 0.0)]).unwrap();
        assert_eq!(v, c(1.0, 5.0));
    }

    #[test]
    fn syntax_error_carries_offset() {
        match parse("1+ $", 1) {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier_rejected() {
        match parse("foo+1", 1) {
            Err(ExprError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "foo");
                assert_eq!(offset, 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn variable_out_of_range() {
        assert!(matches!(
            parse("t3", 2),
            Err(ExprError::VarOutOfRange { index: 3, arity: 2 })
        ));
    }

    #[test]
    fn non_integer_exponent_rejected() {
        assert!(matches!(
            parse("t1^1.5", 1),
            Err(ExprError::NonIntegerExponent { .. })
        ));
        assert!(matches!(
            parse("t1^t1", 1),
            Err(ExprError::NonIntegerExponent { .. })
        ));
    }

    #[test]
    fn negative_exponent_parses() {
        let e = parse("t1^-2", 1).unwrap();
        let v = eval(&e, &[c(2.0, 0.0)]).unwrap();
        assert_relative_eq!(v.re, 0.25, max_relative = 1e-15);
    }

    #[test]
    fn division_by_zero_at_eval() {
        let e = parse("1/t1", 1).unwrap();
        assert_eq!(eval(&e, &[c(0.0, 0.0)]), Err(ExprError::DivisionByZero));
    }

    #[test]
    fn jet_linear_derivative() {
        let exprs = [parse("t1", 1).unwrap(), parse("1+t1", 1).unwrap()];
        let jet = eval_jet(&exprs, 1, &[c(0.0, 1.0)]).unwrap();
        assert_eq!(jet.value, vec![c(0.0, 1.0), c(1.0, 1.0)]);
        assert_eq!(jet.dz, vec![c(1.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn jet_exp_derivative() {
        let exprs = [parse("t1", 1).unwrap(), parse("exp(t1)", 1).unwrap()];
        let jet = eval_jet(&exprs, 1, &[c(1.0, 0.0)]).unwrap();
        let e = std::f64::consts::E;
        assert_relative_eq!(jet.value[1].re, e, max_relative = 1e-15);
        assert_relative_eq!(jet.dz[1].re, e, max_relative = 1e-15);
        assert_relative_eq!(jet.dz[0].re, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn jet_trig_derivative_matches_finite_differences() {
        let exprs = [parse("cos(t1)", 1).unwrap(), parse("sin(t1)", 1).unwrap()];
        let t = c(PI / 4.0, 0.0);
        let jet = eval_jet(&exprs, 1, &[t]).unwrap();
        let s = 2f64.sqrt() / 2.0;
        assert_relative_eq!(jet.value[0].re, s, max_relative = 1e-12);
        assert_relative_eq!(jet.dz[0].re, -s, max_relative = 1e-12);
        assert_relative_eq!(jet.dz[1].re, s, max_relative = 1e-12);
        // Central finite-difference oracle.
        let h = 1e-5;
        for (i, e) in exprs.iter().enumerate() {
            let fp = eval(e, &[t + c(h, 0.0)]).unwrap();
            let fm = eval(e, &[t - c(h, 0.0)]).unwrap();
            let fd = (fp - fm) / c(2.0 * h, 0.0);
            assert!((fd - jet.dz[i]).norm() <= 1e-6 * (1.0 + jet.dz[i].norm()));
        }
    }

    #[test]
    fn zero_coordinate_detected() {
        let exprs = [parse("t1-1", 1).unwrap()];
        assert!(matches!(
            eval_jet(&exprs, 1, &[c(1.0, 0.0)]),
            Err(ExprError::ZeroCoordinate { index: 0 })
        ));
    }

    #[test]
    fn forward_mode_matches_finite_differences_at_random_points() {
        // Gallery-style expressions, 1000 random points each.
        let sources = [
            "t1*t1 + exp(t1)*sin(t1)",
            "(1+t1)/(2-t1)",
            "cos(t1)^3 - 2i*t1",
        ];
        let mut rng = crate::rng::CounterRng::for_sample(2024, 0);
        for src in sources {
            let e = parse(src, 1).unwrap();
            let exprs = [e.clone()];
            let mut checked = 0;
            let mut i = 0;
            while checked < 1000 && i < 5000 {
                i += 1;
                let t = c(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
                let jet = match eval_jet(&exprs, 1, &[t]) {
                    Ok(j) => j,
                    Err(_) => continue,
                };
                let h = 1e-5;
                let fp = match eval(&e, &[t + c(h, 0.0)]) {
                    Ok(v) => v,
                    Err(_) => continue,
                };
                let fm = match eval(&e, &[t - c(h, 0.0)]) {
                    Ok(v) => v,
                    Err(_) => continue,
                };
                let fd = (fp - fm) / c(2.0 * h, 0.0);
                let err = (fd - jet.dz[0]).norm() / (1.0 + jet.dz[0].norm());
                assert!(err <= 1e-6, "{src} at {t}: fd {fd} vs ad {}", jet.dz[0]);
                checked += 1;
            }
            assert_eq!(checked, 1000);
        }
    }

    #[test]
    fn affine_extraction() {
        let e = parse("2+3i + (1-2i)*t1 - t2/2", 2).unwrap();
        let f = as_affine(&e, 2).unwrap();
        assert_eq!(f.offset, c(2.0, 3.0));
        assert_eq!(f.coeffs[0], c(1.0, -2.0));
        assert_eq!(f.coeffs[1], c(-0.5, 0.0));
        assert!(as_affine(&parse("exp(t1)", 1).unwrap(), 1).is_none());
        assert!(as_affine(&parse("t1*t1", 1).unwrap(), 1).is_none());
    }

    #[test]
    fn print_roundtrip_gallery() {
        for src in [
            "t1",
            "1+t1",
            "exp(t1)",
            "cos(t1)*sin(t2)",
            "(1+t1)/(2-t1)^3",
            "-t1^-2 + 2i",
            "2+3i+(1-2i)*t1-t2/2",
        ] {
            let ast = parse(src, 2).unwrap();
            let printed = ast.to_string();
            let reparsed = parse(&printed, 2).unwrap();
            assert_eq!(ast, reparsed, "{src} -> {printed}");
        }
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_expr(k: usize) -> impl Strategy<Value = ComplexExpr> {
        let leaf = prop_oneof![
            (0..k).prop_map(ComplexExpr::Var),
            (0u32..1000).prop_map(|n| ComplexExpr::Literal(Complex64::new(n as f64 / 8.0, 0.0))),
            (0u32..1000)
                .prop_map(|n| ComplexExpr::Literal(Complex64::new(0.0, n as f64 / 8.0 + 0.125))),
        ];
        leaf.prop_recursive(5, 64, 3, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ComplexExpr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ComplexExpr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ComplexExpr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ComplexExpr::Div(Box::new(a), Box::new(b))),
                (inner.clone(), -4i32..5).prop_map(|(a, n)| ComplexExpr::Pow(Box::new(a), n)),
                inner.clone().prop_map(|a| ComplexExpr::Neg(Box::new(a))),
                inner.clone().prop_map(|a| ComplexExpr::Exp(Box::new(a))),
                inner.clone().prop_map(|a| ComplexExpr::Sin(Box::new(a))),
                inner.prop_map(|a| ComplexExpr::Cos(Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn parse_print_roundtrip(ast in arb_expr(3)) {
            let printed = ast.to_string();
            let reparsed = parse(&printed, 3).expect(&printed);
            prop_assert_eq!(ast, reparsed);
        }
    }
}
