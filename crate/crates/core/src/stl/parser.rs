//! Recursive-descent parser for the formula text format.
//!
//! ```text
//! formula    := or ('->' formula)?
//! or         := and (('|' | '||' | 'or') and)*
//! and        := binary (('&' | '&&' | 'and') binary)*
//! binary     := unary (('U' | 'R') interval? unary)?
//! unary      := ('!' | 'not') unary | ('G' | 'F') interval? unary | primary
//! primary    := 'true' | 'false' | box | comparison | '(' formula ')'
//! box        := ('in' | 'out') '(' xI ':' '[' num ',' num ']' (',' ...)* ')'
//! comparison := side ('<=' | '<' | '>=' | '>') side
//! side       := 'abs' '(' arith ')' | arith
//! arith      := ['-'] term (('+' | '-') term)*
//! term       := factor ('*' factor)*
//! factor     := number | xI | '(' arith ')' | '-' factor
//! interval   := '[' num ',' (num | 'inf') ']'
//! ```
//!
//! An omitted interval means `[0, inf)`. `a -> b` is sugar for `!a | b`.

use std::collections::BTreeMap;

use super::{Formula, Interval, LinearExpr, Predicate};
use crate::{Error, Result};

pub fn parse(text: &str) -> Result<Formula> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0, end: text.len() };
    let f = p.formula()?;
    match p.peek() {
        None => Ok(f),
        Some(t) => Err(p.syntax_at(t.pos, format!("unexpected {:?} after complete formula", t.kind))),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Le,
    Lt,
    Ge,
    Gt,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Plus,
    Minus,
    Star,
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    pos: usize,
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        let two = |s: &str| text[i..].starts_with(s);
        let kind = match c {
            c if c.is_ascii_whitespace() => {
                i += 1;
                continue;
            }
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            ':' => Tok::Colon,
            '+' => Tok::Plus,
            '*' => Tok::Star,
            '!' => Tok::Bang,
            '<' if two("<=") => {
                i += 1;
                Tok::Le
            }
            '<' => Tok::Lt,
            '>' if two(">=") => {
                i += 1;
                Tok::Ge
            }
            '>' => Tok::Gt,
            '-' if two("->") => {
                i += 1;
                Tok::Arrow
            }
            '-' => Tok::Minus,
            '&' => {
                if two("&&") {
                    i += 1;
                }
                Tok::Amp
            }
            '|' => {
                if two("||") {
                    i += 1;
                }
                Tok::Pipe
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let s = &text[i..j];
                let v: f64 = s.parse().map_err(|_| Error::Syntax {
                    position: start,
                    message: format!("malformed number {s:?}"),
                })?;
                i = j;
                out.push(Token { kind: Tok::Num(v), pos: start });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push(Token {
                    kind: Tok::Ident(text[i..j].to_string()),
                    pos: start,
                });
                i = j;
                continue;
            }
            other => {
                return Err(Error::Syntax {
                    position: start,
                    message: format!("unexpected character {other:?}"),
                })
            }
        };
        i += 1;
        out.push(Token { kind, pos: start });
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

/// Linear combination collected while parsing arithmetic.
#[derive(Debug, Clone, Default)]
struct Lin {
    coeffs: BTreeMap<usize, f64>,
    constant: f64,
}

impl Lin {
    fn constant(v: f64) -> Self {
        Lin { coeffs: BTreeMap::new(), constant: v }
    }

    fn is_constant(&self) -> bool {
        self.coeffs.values().all(|&c| c == 0.0)
    }

    fn neg(mut self) -> Self {
        for c in self.coeffs.values_mut() {
            *c = -*c;
        }
        self.constant = -self.constant;
        self
    }

    fn add(mut self, other: Lin) -> Self {
        for (d, c) in other.coeffs {
            *self.coeffs.entry(d).or_insert(0.0) += c;
        }
        self.constant += other.constant;
        self
    }

    /// `self - other`; subtracts coefficient-wise so constant operands stay exact.
    fn sub(mut self, other: Lin) -> Self {
        for (d, c) in other.coeffs {
            let e = self.coeffs.entry(d).or_insert(0.0);
            *e = if *e == 0.0 { -c } else { *e - c };
        }
        self.constant -= other.constant;
        self
    }

    fn scale(mut self, k: f64) -> Self {
        for c in self.coeffs.values_mut() {
            *c *= k;
        }
        self.constant *= k;
        self
    }

    fn into_expr(self) -> LinearExpr {
        LinearExpr::new(self.coeffs, self.constant)
    }
}

enum Side {
    Lin(Lin),
    Abs(Lin),
}

#[derive(Clone, Copy)]
enum Cmp {
    Le,
    Lt,
    Ge,
    Gt,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&Tok> {
        self.peek().map(|t| &t.kind)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn syntax_at(&self, position: usize, message: impl Into<String>) -> Error {
        Error::Syntax {
            position,
            message: message.into(),
        }
    }

    fn syntax(&self, message: impl Into<String>) -> Error {
        self.syntax_at(self.here(), message)
    }

    fn eat(&mut self, kind: &Tok) -> bool {
        if self.peek_kind() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: Tok) -> Result<()> {
        if self.eat(&kind) {
            Ok(())
        } else {
            let found = self.peek_kind().map_or("end of input".to_string(), |k| format!("{k:?}"));
            Err(self.syntax(format!("expected {kind:?}, found {found}")))
        }
    }

    fn is_ident(&self, name: &str) -> bool {
        matches!(self.peek_kind(), Some(Tok::Ident(s)) if s == name)
    }

    fn formula(&mut self) -> Result<Formula> {
        let lhs = self.or()?;
        if self.eat(&Tok::Arrow) {
            let rhs = self.formula()?;
            return Ok(Formula::or(Formula::not(lhs), rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula> {
        let mut lhs = self.and()?;
        while self.eat(&Tok::Pipe) || self.eat_keyword("or") {
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula> {
        let mut lhs = self.binary()?;
        while self.eat(&Tok::Amp) || self.eat_keyword("and") {
            let rhs = self.binary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_ident(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn binary(&mut self) -> Result<Formula> {
        let lhs = self.unary()?;
        for (kw, release) in [("U", false), ("R", true)] {
            if self.eat_keyword(kw) {
                let i = self.opt_interval()?;
                let rhs = self.unary()?;
                return Ok(if release {
                    Formula::release(i, lhs, rhs)
                } else {
                    Formula::until(i, lhs, rhs)
                });
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula> {
        if self.eat(&Tok::Bang) || self.eat_keyword("not") {
            return Ok(Formula::not(self.unary()?));
        }
        if self.eat_keyword("G") {
            let i = self.opt_interval()?;
            return Ok(Formula::always(i, self.unary()?));
        }
        if self.eat_keyword("F") {
            let i = self.opt_interval()?;
            return Ok(Formula::eventually(i, self.unary()?));
        }
        self.primary()
    }

    fn opt_interval(&mut self) -> Result<Interval> {
        if !self.eat(&Tok::LBracket) {
            return Ok(Interval::unbounded());
        }
        let lo = self.number()?;
        self.expect(Tok::Comma)?;
        let hi = if self.eat_keyword("inf") { f64::INFINITY } else { self.number()? };
        self.expect(Tok::RBracket)?;
        Interval::new(lo, hi)
    }

    /// Optionally signed numeric literal.
    fn number(&mut self) -> Result<f64> {
        let neg = self.eat(&Tok::Minus);
        match self.bump() {
            Some(Token { kind: Tok::Num(v), .. }) => Ok(if neg { -v } else { v }),
            Some(Token { kind: Tok::Ident(s), .. }) if s == "inf" => {
                Ok(if neg { f64::NEG_INFINITY } else { f64::INFINITY })
            }
            Some(t) => Err(self.syntax_at(t.pos, format!("expected a number, found {:?}", t.kind))),
            None => Err(self.syntax("expected a number, found end of input")),
        }
    }

    fn primary(&mut self) -> Result<Formula> {
        if self.eat_keyword("true") {
            return Ok(Formula::True);
        }
        if self.eat_keyword("false") {
            return Ok(Formula::False);
        }
        if self.is_ident("in") || self.is_ident("out") {
            return self.box_predicate();
        }
        if self.peek_kind() == Some(&Tok::LParen) {
            // Either a parenthesized formula or a comparison whose left side starts
            // with a parenthesized arithmetic group.
            let save = self.pos;
            match self.comparison() {
                Ok(f) => return Ok(f),
                Err(cmp_err) => {
                    self.pos = save;
                    self.expect(Tok::LParen)?;
                    let inner = match self.formula() {
                        Ok(f) => f,
                        Err(e) => return Err(pick_error(e, cmp_err)),
                    };
                    if let Err(e) = self.expect(Tok::RParen) {
                        return Err(pick_error(e, cmp_err));
                    }
                    return Ok(inner);
                }
            }
        }
        self.comparison()
    }

    fn box_predicate(&mut self) -> Result<Formula> {
        let outside = self.is_ident("out");
        self.pos += 1;
        self.expect(Tok::LParen)?;
        let mut bounds = Vec::new();
        loop {
            let dim = self.variable()?;
            self.expect(Tok::Colon)?;
            self.expect(Tok::LBracket)?;
            let lo = self.number()?;
            self.expect(Tok::Comma)?;
            let hi = self.number()?;
            self.expect(Tok::RBracket)?;
            bounds.push((dim, lo, hi));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        let p = Predicate::in_box(bounds).map_err(|e| self.syntax(e.to_string()))?;
        Ok(Formula::Pred(if outside { p.negated() } else { p }))
    }

    fn variable(&mut self) -> Result<usize> {
        match self.bump() {
            Some(Token { kind: Tok::Ident(s), pos }) => var_index(&s).ok_or(Error::UnknownIdentifier { name: s, position: pos }),
            Some(t) => Err(self.syntax_at(t.pos, format!("expected a variable, found {:?}", t.kind))),
            None => Err(self.syntax("expected a variable, found end of input")),
        }
    }

    fn comparison(&mut self) -> Result<Formula> {
        let start = self.here();
        let lhs = self.side()?;
        let op = match self.bump().map(|t| t.kind) {
            Some(Tok::Le) => Cmp::Le,
            Some(Tok::Lt) => Cmp::Lt,
            Some(Tok::Ge) => Cmp::Ge,
            Some(Tok::Gt) => Cmp::Gt,
            _ => {
                self.pos -= 1;
                return Err(self.syntax("expected a comparison operator"));
            }
        };
        let rhs = self.side()?;
        build_comparison(lhs, op, rhs).map_err(|m| self.syntax_at(start, m))
    }

    fn side(&mut self) -> Result<Side> {
        if self.eat_keyword("abs") {
            self.expect(Tok::LParen)?;
            let inner = self.arith()?;
            self.expect(Tok::RParen)?;
            return Ok(Side::Abs(inner));
        }
        Ok(Side::Lin(self.arith()?))
    }

    fn arith(&mut self) -> Result<Lin> {
        let mut acc = if self.eat(&Tok::Minus) { self.term()?.neg() } else { self.term()? };
        loop {
            if self.eat(&Tok::Plus) {
                acc = acc.add(self.term()?);
            } else if self.peek_kind() == Some(&Tok::Minus) {
                self.pos += 1;
                acc = acc.add(self.term()?.neg());
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Lin> {
        let mut acc = self.factor()?;
        while self.eat(&Tok::Star) {
            let pos = self.here();
            let rhs = self.factor()?;
            acc = match (acc.is_constant(), rhs.is_constant()) {
                (true, _) => rhs.scale(acc.constant),
                (false, true) => acc.scale(rhs.constant),
                (false, false) => return Err(self.syntax_at(pos, "product of two variables is not linear")),
            };
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Lin> {
        match self.bump() {
            Some(Token { kind: Tok::Num(v), .. }) => Ok(Lin::constant(v)),
            Some(Token { kind: Tok::Minus, .. }) => Ok(self.factor()?.neg()),
            Some(Token { kind: Tok::LParen, .. }) => {
                let inner = self.arith()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Some(Token { kind: Tok::Ident(s), pos }) => match var_index(&s) {
                Some(d) => Ok(Lin {
                    coeffs: BTreeMap::from([(d, 1.0)]),
                    constant: 0.0,
                }),
                None if is_keyword(&s) => Err(self.syntax_at(pos, format!("unexpected keyword `{s}`"))),
                None => Err(Error::UnknownIdentifier { name: s, position: pos }),
            },
            Some(t) => Err(self.syntax_at(t.pos, format!("unexpected {:?}", t.kind))),
            None => Err(self.syntax("unexpected end of input")),
        }
    }
}

/// Prefer the error that got furthest into the input, and never hide an unknown
/// identifier behind a generic syntax error.
fn pick_error(formula_err: Error, cmp_err: Error) -> Error {
    let pos = |e: &Error| match e {
        Error::Syntax { position, .. } | Error::UnknownIdentifier { position, .. } => *position,
        _ => 0,
    };
    match (&formula_err, &cmp_err) {
        (Error::UnknownIdentifier { .. }, _) => formula_err,
        (_, Error::UnknownIdentifier { .. }) => cmp_err,
        _ if pos(&cmp_err) > pos(&formula_err) => cmp_err,
        _ => formula_err,
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(s, "true" | "false" | "abs" | "in" | "out" | "and" | "or" | "not" | "G" | "F" | "U" | "R" | "inf")
}

fn var_index(s: &str) -> Option<usize> {
    let digits = s.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn build_comparison(lhs: Side, op: Cmp, rhs: Side) -> std::result::Result<Formula, String> {
    let strict = matches!(op, Cmp::Lt | Cmp::Gt);
    let greater = matches!(op, Cmp::Ge | Cmp::Gt);
    match (lhs, rhs) {
        (Side::Lin(l), Side::Lin(r)) => {
            // h = lhs - rhs for >=, rhs - lhs for <=.
            let h = if greater { l.sub(r) } else { r.sub(l) };
            if h.is_constant() {
                let holds = if strict { h.constant > 0.0 } else { h.constant >= 0.0 };
                return Ok(if holds { Formula::True } else { Formula::False });
            }
            Predicate::linear(h.into_expr(), strict)
                .map(Formula::Pred)
                .map_err(|e| e.to_string())
        }
        (Side::Abs(inner), Side::Lin(c)) if c.is_constant() => abs_predicate(inner, !greater, strict, c.constant),
        (Side::Lin(c), Side::Abs(inner)) if c.is_constant() => abs_predicate(inner, greater, strict, c.constant),
        _ => Err("abs(...) must be compared against a constant".into()),
    }
}

/// `abs(inner) <= c` when `below`, `abs(inner) >= c` otherwise.
fn abs_predicate(inner: Lin, below: bool, strict: bool, c: f64) -> std::result::Result<Formula, String> {
    if inner.is_constant() {
        let a = inner.constant.abs();
        let holds = match (below, strict) {
            (true, false) => a <= c,
            (true, true) => a < c,
            (false, false) => a >= c,
            (false, true) => a > c,
        };
        return Ok(if holds { Formula::True } else { Formula::False });
    }
    Predicate::abs_bound(inner.into_expr(), c, !below, strict)
        .map(Formula::Pred)
        .map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let f = parse("x0 >= 0 & x1 >= 0 | x2 >= 0").unwrap();
        assert!(matches!(f, Formula::Or(..)));
        let g = parse("G[0,1] x0 >= 0 U x1 >= 1").unwrap();
        assert!(matches!(g, Formula::Until(_, ref a, _) if matches!(**a, Formula::Always(..))));
    }

    #[test]
    fn comparison_orientation() {
        let f = parse("x0 <= 3").unwrap();
        let Formula::Pred(p) = f else { panic!() };
        assert_eq!(p.margin(&[1.0]), 2.0);
        let f = parse("2 >= abs(x0)").unwrap();
        let Formula::Pred(p) = f else { panic!() };
        assert_eq!(p.margin(&[-0.5]), 1.5);
    }

    #[test]
    fn parenthesized_arithmetic_and_formula() {
        assert!(parse("(x0 + 1) * 2 >= 0").is_ok());
        assert!(parse("((x0 >= 0))").is_ok());
        assert!(parse("(x0 >= 0) -> F (x1 > 0)").is_ok());
    }

    #[test]
    fn constant_comparisons_fold() {
        assert_eq!(parse("1 <= 2").unwrap(), Formula::True);
        assert_eq!(parse("1 > 2").unwrap(), Formula::False);
    }

    #[test]
    fn errors_carry_positions() {
        match parse("x0 >= 0 & y >= 1") {
            Err(Error::UnknownIdentifier { name, position }) => {
                assert_eq!(name, "y");
                assert_eq!(position, 10);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("G[2,1] x0 >= 0"), Err(Error::MalformedInterval { .. })));
        assert!(matches!(parse("x0 >= "), Err(Error::Syntax { .. })));
        assert!(matches!(parse("x0 * x1 >= 0"), Err(Error::Syntax { .. })));
        assert!(matches!(parse("(x0 >= 0"), Err(Error::Syntax { .. })));
    }
}
