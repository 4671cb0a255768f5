//! Recursive-descent parser for polynomial expressions and guard atoms.
//!
//! ```text
//! expr   := ['-'] term (('+' | '-') term)*
//! term   := factor ('*' factor)*
//! factor := '-' factor | base ('^' uint)?
//! base   := rational | ident | '(' expr ')'
//! rational := digits ['.' digits] ['/' digits]
//! atom   := expr ('>=' | '>' | '<=' | '<') expr
//! ```
//!
//! Decimal literals are read exactly (`0.05` is `1/20`).

use num_bigint::BigInt;
use num_traits::Zero;

use super::{Inequality, PolyError, Polynomial, VarId, Q};

/// What an identifier resolves to.
#[derive(Clone, Debug, PartialEq)]
pub enum Symbol {
    Var(VarId),
    Const(Q),
}

pub trait Scope {
    fn lookup(&self, name: &str) -> Option<Symbol>;
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Q),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    Ge,
    Gt,
    Le,
    Lt,
}

fn syntax(pos: usize, msg: impl Into<String>) -> PolyError {
    PolyError::Syntax {
        pos,
        msg: msg.into(),
    }
}

fn digits_to_int(s: &str) -> BigInt {
    s.parse::<BigInt>().expect("ascii digits")
}

/// Reads `digits ['.' digits] ['/' digits]` starting at `start`; returns the
/// value and the index one past the literal.
fn read_rational(src: &[u8], start: usize) -> Result<(Q, usize), PolyError> {
    let mut i = start;
    while i < src.len() && src[i].is_ascii_digit() {
        i += 1;
    }
    let int_part = std::str::from_utf8(&src[start..i]).unwrap();
    let mut value = if int_part.is_empty() {
        Q::zero()
    } else {
        Q::from_integer(digits_to_int(int_part))
    };
    if i < src.len() && src[i] == b'.' {
        let fs = i + 1;
        i = fs;
        while i < src.len() && src[i].is_ascii_digit() {
            i += 1;
        }
        if i == fs && int_part.is_empty() {
            return Err(syntax(start, "malformed number"));
        }
        let frac = std::str::from_utf8(&src[fs..i]).unwrap();
        if !frac.is_empty() {
            let den = num_traits::pow(BigInt::from(10), frac.len());
            value += Q::new(digits_to_int(frac), den);
        }
    } else if int_part.is_empty() {
        return Err(syntax(start, "expected number"));
    }
    if i < src.len() && src[i] == b'/' {
        let ds = i + 1;
        let mut j = ds;
        while j < src.len() && src[j].is_ascii_digit() {
            j += 1;
        }
        if j == ds {
            return Err(syntax(i, "expected denominator after `/`"));
        }
        let den = digits_to_int(std::str::from_utf8(&src[ds..j]).unwrap());
        if den.is_zero() {
            return Err(syntax(ds, "zero denominator"));
        }
        value /= Q::from_integer(den);
        i = j;
    }
    Ok((value, i))
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, PolyError> {
    let src = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < src.len() {
        let c = src[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'>' | b'<' => {
                let eq = src.get(i + 1) == Some(&b'=');
                if eq {
                    i += 1;
                }
                match (c, eq) {
                    (b'>', true) => Tok::Ge,
                    (b'>', false) => Tok::Gt,
                    (_, true) => Tok::Le,
                    _ => Tok::Lt,
                }
            }
            b'0'..=b'9' | b'.' => {
                let (v, end) = read_rational(src, i)?;
                out.push((Tok::Num(v), start));
                i = end;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < src.len() && (src[i].is_ascii_alphanumeric() || src[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => return Err(syntax(i, format!("unexpected character `{}`", c as char))),
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

struct Parser<'a, S: Scope + ?Sized> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    scope: &'a S,
}

impl<S: Scope + ?Sized> Parser<'_, S> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|&(_, p)| p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = match self.peek() {
            Some(Tok::Minus) => {
                self.bump();
                -self.term()?
            }
            Some(Tok::Plus) => {
                self.bump();
                self.term()?
            }
            _ => self.term()?,
        };
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    acc = acc + self.term()?;
                }
                Some(Tok::Minus) => {
                    self.bump();
                    acc = acc - self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.factor()?;
        while let Some(Tok::Star) = self.peek() {
            self.bump();
            acc = &acc * &self.factor()?;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial, PolyError> {
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            return Ok(-self.factor()?);
        }
        let base = self.base()?;
        if let Some(Tok::Caret) = self.peek() {
            self.bump();
            let at = self.offset();
            match self.bump() {
                Some(Tok::Num(n)) if n.is_integer() => {
                    let e: u32 = n
                        .to_integer()
                        .try_into()
                        .map_err(|_| syntax(at, "exponent too large"))?;
                    Ok(base.pow(e))
                }
                Some(Tok::Minus) => Err(PolyError::NegativeExponent { pos: at }),
                _ => Err(syntax(at, "expected nonnegative integer exponent")),
            }
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Polynomial, PolyError> {
        let at = self.offset();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Polynomial::constant(v)),
            Some(Tok::Ident(name)) => match self.scope.lookup(&name) {
                Some(Symbol::Var(v)) => Ok(Polynomial::var(v)),
                Some(Symbol::Const(c)) => Ok(Polynomial::constant(c)),
                None => Err(PolyError::UnknownIdent(name)),
            },
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                let close = self.offset();
                match self.bump() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(syntax(close, "expected `)`")),
                }
            }
            Some(t) => Err(syntax(at, format!("unexpected token {t:?}"))),
            None => Err(syntax(at, "unexpected end of input")),
        }
    }
}

fn parser<'a, S: Scope + ?Sized>(text: &str, scope: &'a S) -> Result<Parser<'a, S>, PolyError> {
    Ok(Parser {
        toks: lex(text)?,
        pos: 0,
        end: text.len(),
        scope,
    })
}

/// Parses a polynomial expression.
pub fn parse_polynomial<S: Scope + ?Sized>(text: &str, scope: &S) -> Result<Polynomial, PolyError> {
    let mut p = parser(text, scope)?;
    let poly = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(syntax(p.offset(), "trailing input"));
    }
    Ok(poly)
}

/// Parses `a OP b` with `OP` one of `>=, >, <=, <` into canonical form
/// against zero.
pub fn parse_guard_atom<S: Scope + ?Sized>(text: &str, scope: &S) -> Result<Inequality, PolyError> {
    let mut p = parser(text, scope)?;
    let lhs = p.expr()?;
    let at = p.offset();
    let op = p.bump().ok_or_else(|| syntax(at, "expected comparison"))?;
    let rhs = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(syntax(p.offset(), "trailing input"));
    }
    Ok(match op {
        Tok::Ge => Inequality::ge(lhs - rhs),
        Tok::Gt => Inequality::gt(lhs - rhs),
        Tok::Le => Inequality::ge(rhs - lhs),
        Tok::Lt => Inequality::gt(rhs - lhs),
        _ => return Err(syntax(at, "expected comparison")),
    })
}

/// Parses a standalone rational such as `-3`, `1/3` or `0.05`.
pub fn parse_rational(text: &str) -> Result<Q, PolyError> {
    let t = text.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest.trim_start()),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (v, end) = read_rational(body.as_bytes(), 0)?;
    if end != body.len() {
        return Err(syntax(end, "trailing input in rational"));
    }
    Ok(if neg { -v } else { v })
}

impl Scope for std::collections::HashMap<String, Symbol> {
    fn lookup(&self, name: &str) -> Option<Symbol> {
        self.get(name).cloned()
    }
}

#[cfg(test)]
mod tests {
    use super::super::{q, qi, Relation, Vars};
    use super::*;

    #[test]
    fn decimals_are_exact() {
        assert_eq!(parse_rational("0.05").unwrap(), q(1, 20));
        assert_eq!(parse_rational("2.5").unwrap(), q(5, 2));
        assert_eq!(parse_rational("-1/3").unwrap(), q(-1, 3));
        assert_eq!(parse_rational("-0.086046").unwrap(), q(-86046, 1_000_000));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn reports_errors() {
        let v = Vars::new(&["x"]);
        assert!(matches!(parse_polynomial("x + y", &v), Err(PolyError::UnknownIdent(n)) if n == "y"));
        assert!(matches!(parse_polynomial("x^-2", &v), Err(PolyError::NegativeExponent { pos: 2 })));
        assert!(matches!(parse_polynomial("(x + 1", &v), Err(PolyError::Syntax { pos: 6, .. })));
        assert!(matches!(parse_polynomial("x 1", &v), Err(PolyError::Syntax { pos: 2, .. })));
        assert!(matches!(parse_polynomial("x / 2", &v), Err(PolyError::Syntax { pos: 2, .. })));
    }

    #[test]
    fn guard_atoms_canonicalize() {
        let v = Vars::new(&["x1"]);
        let a = parse_guard_atom("x1 <= 10", &v).unwrap();
        assert_eq!(a.relation, Relation::Ge);
        assert_eq!(a.lhs, parse_polynomial("10 - x1", &v).unwrap());
        let b = parse_guard_atom("x1 > 10", &v).unwrap();
        assert_eq!(b.relation, Relation::Gt);
        assert!(a.is_complement_of(&b));
        let c = parse_guard_atom("-x1 < -2", &v).unwrap();
        assert_eq!(c.lhs, parse_polynomial("x1 - 2", &v).unwrap());
        assert!(c.holds(&[qi(3)]));
        assert!(!c.holds(&[qi(2)]));
    }

    #[test]
    fn constants_from_scope() {
        let mut s = std::collections::HashMap::new();
        s.insert("y".to_string(), Symbol::Var(0));
        s.insert("n".to_string(), Symbol::Const(q(1, 4)));
        let p = parse_polynomial("n - y", &s).unwrap();
        assert_eq!(p.constant_term(), q(1, 4));
    }
}
