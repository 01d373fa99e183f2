//! A small expression language for rational integrands `F(P, Q)`.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := atom ['^' int]
//! atom   := number | ident | '(' expr ')' | '-' atom
//! ```
//!
//! Identifiers are the Euclidean coordinates `p0..p3`, `q0..q3`, the mass
//! `m`, the cutoff `L`, and the contractions `P2`, `Q2`, `PQ`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    P(usize),
    Q(usize),
    Mass,
    Cutoff,
    /// `p0^2 + p1^2 + p2^2 + p3^2`
    PNormSq,
    /// `q0^2 + q1^2 + q2^2 + q3^2`
    QNormSq,
    /// `p0 q0 + p1 q1 + p2 q2 + p3 q3`
    PDotQ,
}

impl Var {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "p0" => Var::P(0),
            "p1" => Var::P(1),
            "p2" => Var::P(2),
            "p3" => Var::P(3),
            "q0" => Var::Q(0),
            "q1" => Var::Q(1),
            "q2" => Var::Q(2),
            "q3" => Var::Q(3),
            "m" => Var::Mass,
            "L" => Var::Cutoff,
            "P2" => Var::PNormSq,
            "Q2" => Var::QNormSq,
            "PQ" => Var::PDotQ,
            _ => return None,
        })
    }

    /// True when the variable depends on the integration point.
    pub fn depends_on_p(self) -> bool {
        matches!(self, Var::P(_) | Var::PNormSq | Var::PDotQ)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::P(i) => write!(f, "p{i}"),
            Var::Q(i) => write!(f, "q{i}"),
            Var::Mass => f.write_str("m"),
            Var::Cutoff => f.write_str("L"),
            Var::PNormSq => f.write_str("P2"),
            Var::QNormSq => f.write_str("Q2"),
            Var::PDotQ => f.write_str("PQ"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn level(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    fn level(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.level(),
            Expr::Pow(..) => 3,
            Expr::Num(_) | Expr::Var(_) | Expr::Neg(_) => 4,
        }
    }

    fn collect_denominators(&self, out: &mut Vec<Expr>) {
        match self {
            Expr::Num(_) | Expr::Var(_) => {}
            Expr::Neg(e) | Expr::Pow(e, _) => e.collect_denominators(out),
            Expr::Binary(op, l, r) => {
                if *op == BinOp::Div {
                    out.push((**r).clone());
                }
                l.collect_denominators(out);
                r.collect_denominators(out);
            }
        }
    }

    /// True if any variable depending on the integration point occurs.
    pub fn depends_on_p(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => v.depends_on_p(),
            Expr::Neg(e) | Expr::Pow(e, _) => e.depends_on_p(),
            Expr::Binary(_, l, r) => l.depends_on_p() || r.depends_on_p(),
        }
    }

    /// Evaluates without error checks; IEEE semantics throughout.
    #[inline]
    pub fn eval_unchecked(&self, ctx: &EvalContext) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => ctx.get(*v),
            Expr::Neg(e) => -e.eval_unchecked(ctx),
            Expr::Binary(op, l, r) => {
                let a = l.eval_unchecked(ctx);
                let b = r.eval_unchecked(ctx);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Pow(e, n) => e.eval_unchecked(ctx).powi(*n as i32),
        }
    }

    /// Evaluates, rejecting division by zero and non-finite intermediates.
    pub fn eval(&self, ctx: &EvalContext) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => ctx.get(*v),
            Expr::Neg(e) => -e.eval(ctx)?,
            Expr::Binary(op, l, r) => {
                let a = l.eval(ctx)?;
                let b = r.eval(ctx)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero {
                                denominator: r.to_string(),
                            });
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(e, n) => e.eval(ctx)?.powi(*n as i32),
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::NonFinite {
                subexpression: self.to_string(),
            })
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Canonical form: minimal parentheses that reparse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_operand(f, e, e.level() < 4)
            }
            Expr::Binary(op, l, r) => {
                let p = op.level();
                write_operand(f, l, l.level() < p)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, r, r.level() <= p)
            }
            Expr::Pow(e, n) => {
                write_operand(f, e, e.level() < 4)?;
                write!(f, "^{n}")
            }
        }
    }
}

/// Parsed integrand with its division nodes recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrandExpr {
    root: Expr,
    denominators: Vec<Expr>,
}

impl IntegrandExpr {
    pub fn new(root: Expr) -> Self {
        let mut denominators = Vec::new();
        root.collect_denominators(&mut denominators);
        Self { root, denominators }
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn denominators(&self) -> &[Expr] {
        &self.denominators
    }

    pub fn evaluate(&self, ctx: &EvalContext) -> Result<f64, EvalError> {
        self.root.eval(ctx)
    }

    pub fn is_zero_literal(&self) -> bool {
        matches!(self.root, Expr::Num(v) if v == 0.0)
    }
}

impl fmt::Display for IntegrandExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl std::str::FromStr for IntegrandExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_integrand(s)
    }
}

/// Variable bindings for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalContext {
    pub p: [f64; 4],
    pub q: [f64; 4],
    pub m: f64,
    pub cutoff: f64,
}

impl EvalContext {
    #[inline]
    pub fn get(&self, v: Var) -> f64 {
        match v {
            Var::P(i) => self.p[i],
            Var::Q(i) => self.q[i],
            Var::Mass => self.m,
            Var::Cutoff => self.cutoff,
            Var::PNormSq => self.p.iter().map(|x| x * x).sum(),
            Var::QNormSq => self.q.iter().map(|x| x * x).sum(),
            Var::PDotQ => self.p.iter().zip(&self.q).map(|(a, b)| a * b).sum(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(&self.q).all(|x| x.is_finite()) && self.m.is_finite() && self.cutoff.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero in denominator `{denominator}`")]
    DivisionByZero { denominator: String },
    #[error("non-finite value in `{subexpression}`")]
    NonFinite { subexpression: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: found {found}, expected one of {}", expected.join(", "))]
    Syntax {
        offset: usize,
        found: String,
        expected: Vec<&'static str>,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("invalid number `{text}` at byte {offset}")]
    InvalidNumber { offset: usize, text: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::InvalidNumber { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Sym(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(s) => format!("number `{s}`"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::End => "end of input".to_string(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
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
            out.push((start, Tok::Num(src[start..i].to_string())));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if b"+-*/^()".contains(&c) {
            out.push((i, Tok::Sym(c as char)));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(ParseError::Syntax {
                offset: i,
                found: format!("`{ch}`"),
                expected: vec!["number", "identifier", "operator", "'('", "')'"],
            });
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

const ATOM_START: &[&str] = &["number", "identifier", "'('", "'-'"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&'static str]) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            found: self.peek().describe(),
            expected: expected.to_vec(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek() != &Tok::Sym('^') {
            return Ok(base);
        }
        self.bump();
        match self.peek().clone() {
            Tok::Num(text) if text.bytes().all(|b| b.is_ascii_digit()) => {
                let offset = self.offset();
                self.bump();
                let n = text
                    .parse::<u32>()
                    .ok()
                    .filter(|&n| n <= i32::MAX as u32)
                    .ok_or(ParseError::InvalidNumber { offset, text })?;
                Ok(Expr::Pow(Box::new(base), n))
            }
            _ => Err(self.unexpected(&["integer exponent"])),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(text) => {
                self.bump();
                text.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Expr::Num)
                    .ok_or(ParseError::InvalidNumber { offset, text })
            }
            Tok::Ident(name) => {
                self.bump();
                Var::from_name(&name)
                    .map(Expr::Var)
                    .ok_or(ParseError::UnknownIdentifier { offset, name })
            }
            Tok::Sym('(') => {
                self.bump();
                let inner = self.expr()?;
                if self.peek() != &Tok::Sym(')') {
                    return Err(self.unexpected(&["')'", "operator"]));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Sym('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.atom()?)))
            }
            _ => Err(self.unexpected(ATOM_START)),
        }
    }
}

pub fn parse_integrand(source: &str) -> Result<IntegrandExpr, ParseError> {
    let mut parser = Parser {
        toks: lex(source)?,
        pos: 0,
    };
    let root = parser.expr()?;
    if parser.peek() != &Tok::End {
        return Err(parser.unexpected(&["'+'", "'-'", "'*'", "'/'", "'^'", "end of input"]));
    }
    Ok(IntegrandExpr::new(root))
}

/// Result of scanning denominators over a coarse grid in the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularityReport {
    /// Smallest `|denominator|` seen; `INFINITY` when there are no divisions.
    pub min_abs_denominator: f64,
    /// Grid point where the minimum (or the first sign change) occurred.
    pub location: Option<[f64; 4]>,
    pub sign_change: bool,
    pub evaluation_failure: Option<String>,
    pub flagged: bool,
}

impl fmt::Display for SingularityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "min |denominator| = {:.3e}", self.min_abs_denominator)?;
        if let Some(p) = self.location {
            write!(f, " near P = ({:.4}, {:.4}, {:.4}, {:.4})", p[0], p[1], p[2], p[3])?;
        }
        if self.sign_change {
            f.write_str("; denominator changes sign")?;
        }
        if let Some(e) = &self.evaluation_failure {
            write!(f, "; evaluation failed: {e}")?;
        }
        write!(f, "; {}", if self.flagged { "near-singular" } else { "ok" })
    }
}

pub const NEAR_SINGULAR: f64 = 1e-8;
const SCREEN_RADIAL: usize = 24;
const SCREEN_ANGULAR: usize = 8;

/// Directions on the 3-sphere used by the screen.
fn screen_directions() -> Vec<[f64; 4]> {
    use std::f64::consts::PI;
    let n = SCREEN_ANGULAR;
    let mut dirs = Vec::with_capacity(n * n * n);
    for i in 0..n {
        let chi = PI * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let theta = PI * j as f64 / (n - 1) as f64;
            for k in 0..n {
                let phi = 2.0 * PI * k as f64 / n as f64;
                dirs.push(hyperspherical(1.0, chi, theta, phi));
            }
        }
    }
    dirs
}

/// `r (cos chi, sin chi cos theta, sin chi sin theta cos phi, sin chi sin theta sin phi)`.
pub fn hyperspherical(r: f64, chi: f64, theta: f64, phi: f64) -> [f64; 4] {
    let (sc, cc) = chi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [r * cc, r * sc * ct, r * sc * st * cp, r * sc * st * sp]
}

/// Samples every denominator on a coarse polar grid over `|P| <= L` and
/// flags minima below [`NEAR_SINGULAR`] or sign changes along a ray.
pub fn screen_singularities(expr: &IntegrandExpr, q: [f64; 4], m: f64, cutoff: f64) -> SingularityReport {
    let mut report = SingularityReport {
        min_abs_denominator: f64::INFINITY,
        location: None,
        sign_change: false,
        evaluation_failure: None,
        flagged: false,
    };
    if expr.denominators.is_empty() {
        return report;
    }
    let dirs = screen_directions();
    let mut ctx = EvalContext {
        p: [0.0; 4],
        q,
        m,
        cutoff,
    };
    for den in &expr.denominators {
        for dir in &dirs {
            let mut prev: Option<f64> = None;
            for i in 0..=SCREEN_RADIAL {
                let r = cutoff * i as f64 / SCREEN_RADIAL as f64;
                ctx.p = dir.map(|x| x * r);
                let value = match den.eval(&ctx) {
                    Ok(v) => v,
                    Err(e) => {
                        report.evaluation_failure.get_or_insert(e.to_string());
                        report.location.get_or_insert(ctx.p);
                        report.flagged = true;
                        continue;
                    }
                };
                if value.abs() < report.min_abs_denominator {
                    report.min_abs_denominator = value.abs();
                    if !report.sign_change {
                        report.location = Some(ctx.p);
                    }
                }
                if let Some(pv) = prev {
                    if pv * value < 0.0 && !report.sign_change {
                        report.sign_change = true;
                        report.location = Some(ctx.p);
                    }
                }
                prev = Some(value);
            }
        }
    }
    report.flagged |= report.sign_change || report.min_abs_denominator < NEAR_SINGULAR;
    report
}
