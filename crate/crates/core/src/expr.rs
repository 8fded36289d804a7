//! Operator expressions `F_i(x, ..., u_j, ..., D^α u_j, ...)`.
//!
//! The concrete syntax is a small arithmetic language over coordinates `x1..xn`,
//! unknowns `u1..uK` and derivative slots `D(uj,(a1,...,an))`:
//!
//! ```text
//! expr   := term { ("+"|"-") term } ;
//! term   := factor { ("*"|"/") factor } ;
//! factor := atom [ "^" integer ] | "-" factor ;
//! atom   := number | "x" index | "u" index
//!         | "D(" "u" index "," "(" index { "," index } ")" ")"
//!         | func "(" expr ")" | "(" expr ")" ;
//! func   := "sin"|"cos"|"exp"|"log"|"abs"|"sqrt" ;
//! ```
//!
//! `uj` is shorthand for the zeroth-order slot `D(uj,(0,...,0))`.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// A multi-index `α = (α_1, ..., α_n)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    /// `|α|`
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `α!`
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&a| (1..=a).map(f64::from).product::<f64>())
            .product()
    }

    /// Componentwise `self ≥ other`.
    pub fn dominates(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// All multi-indices with `|α| ≤ m` in `n` variables, in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndexSet {
    n: usize,
    m: u32,
    alphas: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
}

impl MultiIndexSet {
    pub fn new(n: usize, m: u32) -> Self {
        let mut alphas = Vec::new();
        let mut cur = vec![0u32; n];
        fill_lex(&mut alphas, &mut cur, 0, m);
        let lookup = alphas
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        MultiIndexSet {
            n,
            m,
            alphas,
            lookup,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn max_order(&self) -> u32 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn alphas(&self) -> &[MultiIndex] {
        &self.alphas
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }
}

fn fill_lex(out: &mut Vec<MultiIndex>, cur: &mut Vec<u32>, axis: usize, budget: u32) {
    if axis == cur.len() {
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for a in 0..=budget {
        cur[axis] = a;
        fill_lex(out, cur, axis + 1, budget - a);
    }
    cur[axis] = 0;
}

/// A jet slot `(j, α)`: the value of `D^α u_j`. Components are 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot {
    pub component: usize,
    pub alpha: MultiIndex,
}

impl Slot {
    pub fn new(component: usize, alpha: MultiIndex) -> Self {
        Slot { component, alpha }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Expr::Jet(self.clone()).fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryFn {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Sqrt,
    Neg,
}

impl UnaryFn {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryFn::Sin,
            "cos" => UnaryFn::Cos,
            "exp" => UnaryFn::Exp,
            "log" => UnaryFn::Log,
            "abs" => UnaryFn::Abs,
            "sqrt" => UnaryFn::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Exp => "exp",
            UnaryFn::Log => "log",
            UnaryFn::Abs => "abs",
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Neg => "-",
        }
    }

    fn apply(self, v: f64) -> Result<f64, EvalError> {
        Ok(match self {
            UnaryFn::Sin => v.sin(),
            UnaryFn::Cos => v.cos(),
            UnaryFn::Exp => v.exp(),
            UnaryFn::Log => {
                if v <= 0.0 {
                    return Err(EvalError::LogNonPositive(v));
                }
                v.ln()
            }
            UnaryFn::Abs => v.abs(),
            UnaryFn::Sqrt => {
                if v < 0.0 {
                    return Err(EvalError::SqrtNegative(v));
                }
                v.sqrt()
            }
            UnaryFn::Neg => -v,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

/// Expression tree. Coordinates and components are stored 0-based.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    Jet(Slot),
    Unary(UnaryFn, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn jet(component: usize, alpha: Vec<u32>) -> Self {
        Expr::Jet(Slot::new(component, MultiIndex(alpha)))
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn pow(base: Expr, exp: u32) -> Self {
        Expr::Pow(Box::new(base), exp)
    }

    /// Jet slots referenced anywhere in the tree, in first-occurrence order.
    pub fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Jet(s) = e {
                if !out.contains(s) {
                    out.push(s.clone());
                }
            }
        });
        out
    }

    /// True if the tree reads any jet slot.
    pub fn has_jets(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Jet(_)));
        found
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.visit(f),
            Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, ctx: Ctx) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Coord(d) => write!(f, "x{}", d + 1),
            Expr::Jet(s) => {
                if s.alpha.order() == 0 {
                    write!(f, "u{}", s.component + 1)
                } else {
                    write!(f, "D(u{},{})", s.component + 1, s.alpha)
                }
            }
            Expr::Unary(UnaryFn::Neg, a) => {
                let wrap = ctx == Ctx::PowBase;
                if wrap {
                    f.write_str("(")?;
                }
                f.write_str("-")?;
                a.fmt_prec(f, Ctx::Factor)?;
                if wrap {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Expr::Unary(func, a) => {
                write!(f, "{}(", func.name())?;
                a.fmt_prec(f, Ctx::Top)?;
                f.write_str(")")
            }
            Expr::Binary(op, a, b) => {
                let wrap = ctx != Ctx::Top;
                if wrap {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, Ctx::Operand)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_prec(f, Ctx::Operand)?;
                if wrap {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Expr::Pow(a, k) => {
                let wrap = ctx == Ctx::PowBase;
                if wrap {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, Ctx::PowBase)?;
                write!(f, "^{k}")?;
                if wrap {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ctx {
    Top,
    Operand,
    Factor,
    PowBase,
}

/// Canonical, fully parenthesised form: every binary node below the root is
/// wrapped in parentheses, so re-parsing reproduces the tree exactly.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, Ctx::Top)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character {0:?}")]
    BadChar(char),
    #[error("unexpected {found}, expected {expected}")]
    Unexpected { found: String, expected: &'static str },
    #[error("invalid number literal {0:?}")]
    BadNumber(String),
    #[error("unknown identifier {0:?}")]
    UnknownIdent(String),
    #[error("index must be at least 1")]
    ZeroIndex,
    #[error("unknown u{j}: system has {k} unknowns")]
    ComponentOutOfRange { j: usize, k: usize },
    #[error("coordinate x{d} out of range: dimension is {n}")]
    CoordOutOfRange { d: usize, n: usize },
    #[error("derivative order {order} exceeds m = {m}")]
    OrderExceeded { order: u32, m: u32 },
    #[error("multi-index has {got} entries, expected {n}")]
    MultiIndexArity { got: usize, n: usize },
    #[error("expected {expected} component expressions, found {got}")]
    ComponentCount { got: usize, expected: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("log of nonpositive value {0}")]
    LogNonPositive(f64),
    #[error("sqrt of negative value {0}")]
    SqrtNegative(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
    #[error("expected a point of dimension {expected}, got {got}")]
    PointDim { expected: usize, got: usize },
    #[error("expected a jet vector of length {expected}, got {got}")]
    JetLen { expected: usize, got: usize },
}

/// Limits applied while resolving identifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scope {
    /// spatial dimension
    pub n: usize,
    /// number of unknowns; 0 forbids any `u`/`D` reference
    pub k: usize,
    /// maximal derivative order
    pub m: u32,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(s) => write!(f, "number {s}"),
            Tok::Ident(s) => write!(f, "identifier {s:?}"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::Plus => f.write_str("'+'"),
            Tok::Minus => f.write_str("'-'"),
            Tok::Star => f.write_str("'*'"),
            Tok::Slash => f.write_str("'/'"),
            Tok::Caret => f.write_str("'^'"),
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str, line0: usize) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (line0, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (sl, sc) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned {
                tok,
                line: sl,
                column: sc,
            });
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent part: e[+-]digits
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
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Spanned {
                tok: Tok::Num(s),
                line: sl,
                column: sc,
            });
        } else if c.is_ascii_alphabetic() {
            while i < chars.len() && chars[i].is_ascii_alphabetic() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Spanned {
                tok: Tok::Ident(s),
                line: sl,
                column: sc,
            });
        } else {
            return Err(ParseError {
                line: sl,
                column: sc,
                kind: ParseErrorKind::BadChar(c),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    scope: Scope,
    end: (usize, usize),
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|s| (s.line, s.column))
            .unwrap_or(self.end)
    }

    fn err_at(&self, at: (usize, usize), kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: at.0,
            column: at.1,
            kind,
        }
    }

    fn unexpected(&self, expected: &'static str) -> ParseError {
        let found = self
            .peek()
            .map(|t| t.to_string())
            .unwrap_or_else(|| "end of input".to_string());
        self.err_at(self.here(), ParseErrorKind::Unexpected { found, expected })
    }

    fn expect(&mut self, tok: Tok, expected: &'static str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(Expr::Unary(UnaryFn::Neg, Box::new(inner)));
        }
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let at = self.here();
            let k = self.integer("a non-negative integer exponent")?;
            let k = u32::try_from(k)
                .map_err(|_| self.err_at(at, ParseErrorKind::BadNumber(k.to_string())))?;
            return Ok(Expr::pow(base, k));
        }
        Ok(base)
    }

    fn integer(&mut self, expected: &'static str) -> Result<u64, ParseError> {
        let at = self.here();
        match self.peek() {
            Some(Tok::Num(s)) => {
                let s = s.clone();
                if !s.chars().all(|c| c.is_ascii_digit()) {
                    return Err(self.err_at(at, ParseErrorKind::BadNumber(s)));
                }
                self.pos += 1;
                s.parse::<u64>()
                    .map_err(|_| self.err_at(at, ParseErrorKind::BadNumber(s)))
            }
            _ => Err(self.unexpected(expected)),
        }
    }

    /// 1-based index after `x`/`u`, returned 0-based.
    fn index1(&mut self) -> Result<(usize, (usize, usize)), ParseError> {
        let at = self.here();
        let v = self.integer("an index")?;
        if v == 0 {
            return Err(self.err_at(at, ParseErrorKind::ZeroIndex));
        }
        Ok((v as usize - 1, at))
    }

    fn component(&mut self, name_at: (usize, usize)) -> Result<usize, ParseError> {
        let (j, _) = self.index1()?;
        if j >= self.scope.k {
            return Err(self.err_at(
                name_at,
                ParseErrorKind::ComponentOutOfRange {
                    j: j + 1,
                    k: self.scope.k,
                },
            ));
        }
        Ok(j)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.here();
        match self.peek().cloned() {
            Some(Tok::Num(s)) => {
                self.pos += 1;
                let v: f64 = s
                    .parse()
                    .map_err(|_| self.err_at(at, ParseErrorKind::BadNumber(s.clone())))?;
                if !v.is_finite() {
                    return Err(self.err_at(at, ParseErrorKind::BadNumber(s)));
                }
                Ok(Expr::Const(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "x" => {
                        let (d, _) = self.index1()?;
                        if d >= self.scope.n {
                            return Err(self.err_at(
                                at,
                                ParseErrorKind::CoordOutOfRange {
                                    d: d + 1,
                                    n: self.scope.n,
                                },
                            ));
                        }
                        Ok(Expr::Coord(d))
                    }
                    "u" => {
                        let j = self.component(at)?;
                        Ok(Expr::Jet(Slot::new(j, MultiIndex::zero(self.scope.n))))
                    }
                    "D" => self.derivative(at),
                    other => match UnaryFn::from_name(other) {
                        Some(func) => {
                            self.expect(Tok::LParen, "'('")?;
                            let e = self.expr()?;
                            self.expect(Tok::RParen, "')'")?;
                            Ok(Expr::Unary(func, Box::new(e)))
                        }
                        None => Err(self.err_at(at, ParseErrorKind::UnknownIdent(name))),
                    },
                }
            }
            _ => Err(self.unexpected("a number, variable, function or '('")),
        }
    }

    fn derivative(&mut self, at: (usize, usize)) -> Result<Expr, ParseError> {
        self.expect(Tok::LParen, "'('")?;
        match self.peek() {
            Some(Tok::Ident(s)) if s == "u" => self.pos += 1,
            _ => return Err(self.unexpected("'u'")),
        }
        let j = self.component(at)?;
        self.expect(Tok::Comma, "','")?;
        let tuple_at = self.here();
        self.expect(Tok::LParen, "'('")?;
        let mut alpha = Vec::new();
        loop {
            let a = self.integer("a multi-index entry")?;
            alpha.push(u32::try_from(a).unwrap_or(u32::MAX));
            match self.peek() {
                Some(Tok::Comma) => self.pos += 1,
                Some(Tok::RParen) => {
                    self.pos += 1;
                    break;
                }
                _ => return Err(self.unexpected("',' or ')'")),
            }
        }
        self.expect(Tok::RParen, "')'")?;
        if alpha.len() != self.scope.n {
            return Err(self.err_at(
                tuple_at,
                ParseErrorKind::MultiIndexArity {
                    got: alpha.len(),
                    n: self.scope.n,
                },
            ));
        }
        let alpha = MultiIndex(alpha);
        let order = alpha.order();
        if order > self.scope.m {
            return Err(self.err_at(
                at,
                ParseErrorKind::OrderExceeded {
                    order,
                    m: self.scope.m,
                },
            ));
        }
        Ok(Expr::Jet(Slot::new(j, alpha)))
    }
}

fn parse_tokens(toks: &[Spanned], scope: Scope, end: (usize, usize)) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks,
        pos: 0,
        scope,
        end,
    };
    let e = p.expr()?;
    if p.pos != toks.len() {
        return Err(p.unexpected("an operator or end of expression"));
    }
    Ok(e)
}

fn end_position(src: &str, line0: usize) -> (usize, usize) {
    let mut line = line0;
    let mut col = 1;
    for c in src.chars() {
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

/// Parse a single expression.
pub fn parse_expr(src: &str, scope: Scope) -> Result<Expr, ParseError> {
    let toks = lex(src, 1)?;
    parse_tokens(&toks, scope, end_position(src, 1))
}

/// An expression with jet slots resolved to positions in the jet vector.
#[derive(Clone, Debug)]
enum Compiled {
    Const(f64),
    Coord(usize),
    Jet(usize),
    Unary(UnaryFn, Box<Compiled>),
    Binary(BinOp, Box<Compiled>, Box<Compiled>),
    Pow(Box<Compiled>, u32),
}

impl Compiled {
    fn build(e: &Expr, alphas: &MultiIndexSet) -> Compiled {
        match e {
            Expr::Const(v) => Compiled::Const(*v),
            Expr::Coord(d) => Compiled::Coord(*d),
            Expr::Jet(s) => {
                let a = alphas
                    .index_of(&s.alpha)
                    .expect("slot validated against the multi-index set");
                Compiled::Jet(s.component * alphas.len() + a)
            }
            Expr::Unary(f, a) => Compiled::Unary(*f, Box::new(Compiled::build(a, alphas))),
            Expr::Binary(op, a, b) => Compiled::Binary(
                *op,
                Box::new(Compiled::build(a, alphas)),
                Box::new(Compiled::build(b, alphas)),
            ),
            Expr::Pow(a, k) => Compiled::Pow(Box::new(Compiled::build(a, alphas)), *k),
        }
    }

    fn eval(&self, x: &[f64], xi: &[f64]) -> Result<f64, EvalError> {
        match self {
            Compiled::Const(v) => Ok(*v),
            Compiled::Coord(d) => Ok(x[*d]),
            Compiled::Jet(i) => Ok(xi[*i]),
            Compiled::Unary(f, a) => f.apply(a.eval(x, xi)?),
            Compiled::Binary(op, a, b) => {
                let (a, b) = (a.eval(x, xi)?, b.eval(x, xi)?);
                Ok(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                })
            }
            Compiled::Pow(a, k) => {
                let v = a.eval(x, xi)?;
                Ok(powu(v, *k))
            }
        }
    }
}

fn powu(v: f64, k: u32) -> f64 {
    match i32::try_from(k) {
        Ok(k) => v.powi(k),
        Err(_) => v.powf(f64::from(k)),
    }
}

/// A parsed operator `T(x,D)`: `K` component expressions over `n` coordinates
/// and the jet slots `(j, α)`, `|α| ≤ m`.
///
/// The jet vector has length `M = K · |{α : |α| ≤ m}|`; slot `(j, α)` lives at
/// `j · |alphas| + index(α)`.
#[derive(Clone, Debug)]
pub struct PdeSystem {
    n: usize,
    k: usize,
    m: u32,
    alphas: MultiIndexSet,
    components: Vec<Expr>,
    compiled: Vec<Compiled>,
}

impl PdeSystem {
    /// Assemble a system from already-built trees, validating every slot.
    pub fn new(n: usize, m: u32, components: Vec<Expr>) -> Result<Self, ParseError> {
        let k = components.len();
        let alphas = MultiIndexSet::new(n, m);
        for e in &components {
            let mut bad = None;
            e.visit(&mut |node| {
                if bad.is_some() {
                    return;
                }
                match node {
                    Expr::Coord(d) if *d >= n => {
                        bad = Some(ParseErrorKind::CoordOutOfRange { d: d + 1, n })
                    }
                    Expr::Jet(s) if s.component >= k => {
                        bad = Some(ParseErrorKind::ComponentOutOfRange {
                            j: s.component + 1,
                            k,
                        })
                    }
                    Expr::Jet(s) if s.alpha.dim() != n => {
                        bad = Some(ParseErrorKind::MultiIndexArity {
                            got: s.alpha.dim(),
                            n,
                        })
                    }
                    Expr::Jet(s) if s.alpha.order() > m => {
                        bad = Some(ParseErrorKind::OrderExceeded {
                            order: s.alpha.order(),
                            m,
                        })
                    }
                    _ => {}
                }
            });
            if let Some(kind) = bad {
                return Err(ParseError {
                    line: 1,
                    column: 1,
                    kind,
                });
            }
        }
        let compiled = components
            .iter()
            .map(|e| Compiled::build(e, &alphas))
            .collect();
        Ok(PdeSystem {
            n,
            k,
            m,
            alphas,
            components,
            compiled,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn unknowns(&self) -> usize {
        self.k
    }

    pub fn max_order(&self) -> u32 {
        self.m
    }

    pub fn alphas(&self) -> &MultiIndexSet {
        &self.alphas
    }

    /// `M`, the jet dimension.
    pub fn jet_len(&self) -> usize {
        self.k * self.alphas.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn slot_index(&self, slot: &Slot) -> Option<usize> {
        if slot.component >= self.k {
            return None;
        }
        self.alphas
            .index_of(&slot.alpha)
            .map(|a| slot.component * self.alphas.len() + a)
    }

    pub fn slot_at(&self, index: usize) -> Slot {
        let per = self.alphas.len();
        Slot::new(index / per, self.alphas.alphas()[index % per].clone())
    }

    /// Evaluate a single component `F_i(x, ξ)`.
    pub fn eval_component(&self, i: usize, x: &[f64], xi: &[f64]) -> Result<f64, EvalError> {
        let v = self.compiled[i].eval(x, xi)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// `(F_1(x, ξ), ..., F_K(x, ξ))`.
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>, EvalError> {
        if x.len() != self.n {
            return Err(EvalError::PointDim {
                expected: self.n,
                got: x.len(),
            });
        }
        if xi.len() != self.jet_len() {
            return Err(EvalError::JetLen {
                expected: self.jet_len(),
                got: xi.len(),
            });
        }
        (0..self.k).map(|i| self.eval_component(i, x, xi)).collect()
    }
}

/// Parse `K` component expressions, one per non-blank line.
pub fn parse_system(text: &str, n: usize, k: usize, m: u32) -> Result<PdeSystem, ParseError> {
    let scope = Scope { n, k, m };
    let mut components = Vec::new();
    let mut last_line = 1;
    for (idx, line) in text.lines().enumerate() {
        last_line = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let toks = lex(line, idx + 1)?;
        let end = end_position(line, idx + 1);
        components.push(parse_tokens(&toks, scope, end)?);
    }
    if components.len() != k {
        return Err(ParseError {
            line: last_line,
            column: 1,
            kind: ParseErrorKind::ComponentCount {
                got: components.len(),
                expected: k,
            },
        });
    }
    PdeSystem::new(n, m, components)
}

/// Canonical text of a system: one component per line.
pub fn print_system(sys: &PdeSystem) -> String {
    sys.components
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parsed right-hand side `f(x)`: `K` expressions in `x` only.
#[derive(Clone, Debug)]
pub struct RhsExprs {
    n: usize,
    exprs: Vec<Expr>,
    compiled: Vec<Compiled>,
}

impl RhsExprs {
    pub fn parse<S: AsRef<str>>(sources: &[S], n: usize) -> Result<Self, ParseError> {
        let scope = Scope { n, k: 0, m: 0 };
        let exprs = sources
            .iter()
            .map(|s| parse_expr(s.as_ref(), scope))
            .collect::<Result<Vec<_>, _>>()?;
        let empty = MultiIndexSet::new(n, 0);
        let compiled = exprs.iter().map(|e| Compiled::build(e, &empty)).collect();
        Ok(RhsExprs { n, exprs, compiled })
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.compiled
            .iter()
            .map(|c| {
                let v = c.eval(x, &[])?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(EvalError::NonFinite)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(n: usize, k: usize, m: u32) -> Scope {
        Scope { n, k, m }
    }

    #[test]
    fn multi_index_set_is_lexicographic() {
        let s = MultiIndexSet::new(2, 2);
        let got: Vec<Vec<u32>> = s.alphas().iter().map(|a| a.0.clone()).collect();
        assert_eq!(
            got,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![0, 2],
                vec![1, 0],
                vec![1, 1],
                vec![2, 0]
            ]
        );
        // |{α : |α| ≤ m}| = C(n+m, n)
        assert_eq!(MultiIndexSet::new(3, 3).len(), 20);
        assert_eq!(MultiIndexSet::new(1, 4).len(), 5);
    }

    #[test]
    fn single_derivative_node() {
        let e = parse_expr("D(u1,(1))", sc(1, 1, 1)).unwrap();
        assert_eq!(e, Expr::jet(0, vec![1]));
    }

    #[test]
    fn sugar_and_power() {
        let e = parse_expr("D(u1,(1))^2 + u1", sc(1, 1, 1)).unwrap();
        let want = Expr::binary(
            BinOp::Add,
            Expr::pow(Expr::jet(0, vec![1]), 2),
            Expr::jet(0, vec![0]),
        );
        assert_eq!(e, want);
        assert_eq!(e.to_string(), "D(u1,(1))^2 + u1");
    }

    #[test]
    fn order_exceeding_m_is_rejected() {
        let err = parse_expr("D(u2,(3))", sc(1, 2, 2)).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::OrderExceeded { order: 3, m: 2 });
        assert_eq!((err.line, err.column), (1, 1));
    }

    #[test]
    fn bad_indices_report_position() {
        let err = parse_expr("u1 + u3", sc(1, 2, 1)).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::ComponentOutOfRange { j: 3, k: 2 });
        assert_eq!(err.column, 6);
        let err = parse_expr("x1 * x2", sc(1, 1, 1)).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::CoordOutOfRange { d: 2, n: 1 });
        assert_eq!(err.column, 6);
        let err = parse_expr("D(u1,(1,0))", sc(1, 1, 1)).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::MultiIndexArity { got: 2, n: 1 });
        let err = parse_expr("x0", sc(1, 1, 1)).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::ZeroIndex);
    }

    #[test]
    fn syntax_errors() {
        let err = parse_expr("u1 +", sc(1, 1, 1)).unwrap_err();
        assert_eq!((err.line, err.column), (1, 5));
        let err = parse_expr("foo(u1)", sc(1, 1, 1)).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::UnknownIdent(_)));
        let err = parse_expr("u1 ^ 1.5", sc(1, 1, 1)).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::BadNumber(_)));
        let err = parse_expr("u1 $ 2", sc(1, 1, 1)).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::BadChar('$'));
        assert_eq!(err.column, 4);
        let err = parse_expr("(u1", sc(1, 1, 1)).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Unexpected { .. }));
    }

    #[test]
    fn canonical_print() {
        let e = parse_expr("u1 + 2*x1", sc(1, 1, 0)).unwrap();
        assert_eq!(e.to_string(), "u1 + (2 * x1)");
        let e = parse_expr("-x1^2", sc(1, 0, 0)).unwrap();
        assert_eq!(e.to_string(), "-x1^2");
        let e = parse_expr("(-x1)^2", sc(1, 0, 0)).unwrap();
        assert_eq!(e.to_string(), "(-x1)^2");
        let e = parse_expr("(x1^2)^3", sc(1, 0, 0)).unwrap();
        assert_eq!(e.to_string(), "(x1^2)^3");
        let e = parse_expr("D(u1,(0))", sc(1, 1, 1)).unwrap();
        assert_eq!(e.to_string(), "u1");
    }

    #[test]
    fn system_errors_carry_line() {
        let err = parse_system("D(u1,(1))\nu1 + D(u1,(2))", 1, 2, 1).unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.kind, ParseErrorKind::OrderExceeded { order: 2, m: 1 });
        let err = parse_system("u1", 1, 2, 1).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::ComponentCount { .. }));
    }

    #[test]
    fn jet_dimension() {
        let s = parse_system("D(u1,(1,0)) + u2\nu1", 2, 2, 2).unwrap();
        assert_eq!(s.jet_len(), 2 * 6);
        assert_eq!(
            s.slot_index(&Slot::new(1, MultiIndex(vec![0, 0]))),
            Some(6)
        );
        assert_eq!(s.slot_at(9), Slot::new(1, MultiIndex(vec![1, 0])));
    }

    #[test]
    fn evaluation_examples() {
        // F = ξ_{1,(1)}: projection
        let s = parse_system("D(u1,(1))", 1, 1, 1).unwrap();
        assert_eq!(s.eval(&[0.5], &[7.0, 0.45]).unwrap(), vec![0.45]);
        // F = ξ_{1,(1)}² + ξ_{1,(0)} at ξ = (3, 0)
        let s = parse_system("D(u1,(1))^2 + u1", 1, 1, 1).unwrap();
        assert_eq!(s.eval(&[0.0], &[3.0, 0.0]).unwrap(), vec![3.0]);
        let s = parse_system("sin(u1)", 1, 1, 0).unwrap();
        let v = s.eval(&[0.0], &[std::f64::consts::FRAC_PI_2]).unwrap();
        assert!((v[0] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn domain_errors() {
        let s = parse_system("log(u1)\n", 1, 1, 0).unwrap();
        assert_eq!(
            s.eval(&[0.0], &[0.0]).unwrap_err(),
            EvalError::LogNonPositive(0.0)
        );
        let s = parse_system("sqrt(u1)", 1, 1, 0).unwrap();
        assert!(matches!(
            s.eval(&[0.0], &[-1.0]),
            Err(EvalError::SqrtNegative(_))
        ));
        let s = parse_system("1 / u1", 1, 1, 0).unwrap();
        assert_eq!(s.eval(&[0.0], &[0.0]), Err(EvalError::DivisionByZero));
        let s = parse_system("exp(u1)", 1, 1, 0).unwrap();
        assert_eq!(s.eval(&[0.0], &[1e6]), Err(EvalError::NonFinite));
    }

    #[test]
    fn rhs_rejects_unknowns() {
        let err = RhsExprs::parse(&["x1 + u1"], 1).unwrap_err();
        assert!(matches!(
            err.kind,
            ParseErrorKind::ComponentOutOfRange { .. }
        ));
        let f = RhsExprs::parse(&["1 + x1", "cos(x1)"], 1).unwrap();
        assert_eq!(f.eval(&[0.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn number_forms() {
        let e = parse_expr("1.5e-3 + .25 + 2E2", sc(1, 0, 0)).unwrap();
        let s = PdeSystem::new(1, 0, vec![e.clone()]).unwrap();
        assert!((s.eval(&[0.0], &[0.0]).unwrap()[0] - 200.2515).abs() < 1e-12);
        assert_eq!(parse_expr(&e.to_string(), sc(1, 0, 0)).unwrap(), e);
    }
}
