//! Recursive-descent parser for the polynomial text format.
//!
//! ```text
//! expr   := ['+'|'-'] term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := number | var ['^' uint] | '(' expr ')' ['^' uint]
//! number := decimal | integer '/' positive-integer
//! var    := letter (letter|digit|'_')*
//! ```

use super::polynomial::Polynomial;
use super::PolyError;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Int(u64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, PolyError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let tok = if text.bytes().all(|b| b.is_ascii_digit()) {
                    match text.parse::<u64>() {
                        Ok(v) => Tok::Int(v),
                        Err(_) => Tok::Num(text.parse::<f64>().map_err(|_| PolyError::Syntax {
                            position: start,
                            message: format!("invalid number '{text}'"),
                        })?),
                    }
                } else {
                    Tok::Num(text.parse::<f64>().map_err(|_| PolyError::Syntax {
                        position: start,
                        message: format!("invalid number '{text}'"),
                    })?)
                };
                out.push((tok, start));
                continue;
            }
            _ if c.is_ascii_alphabetic() => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                return Err(PolyError::Syntax {
                    position: start,
                    message: format!("unexpected character '{c}'"),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    vars: &'a [String],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(_, o)| *o).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let n = self.vars.len();
        let mut sign = 1.0;
        match self.peek() {
            Some(Tok::Plus) => {
                self.bump();
            }
            Some(Tok::Minus) => {
                self.bump();
                sign = -1.0;
            }
            _ => {}
        }
        let mut acc = self.term()?.scale(sign);
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    acc = &acc + &self.term()?;
                }
                Some(Tok::Minus) => {
                    self.bump();
                    acc = &acc - &self.term()?;
                }
                _ => break,
            }
        }
        debug_assert_eq!(acc.nvars(), n);
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.factor()?;
        while let Some(Tok::Star) = self.peek() {
            self.bump();
            acc = &acc * &self.factor()?;
        }
        Ok(acc)
    }

    fn exponent(&mut self) -> Result<Option<u32>, PolyError> {
        if let Some(Tok::Caret) = self.peek() {
            self.bump();
            let at = self.offset();
            match self.bump() {
                Some(Tok::Int(k)) if k <= u32::MAX as u64 => Ok(Some(k as u32)),
                _ => Err(PolyError::MalformedExponent { position: at }),
            }
        } else {
            Ok(None)
        }
    }

    fn factor(&mut self) -> Result<Polynomial, PolyError> {
        let n = self.vars.len();
        let at = self.offset();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Polynomial::constant(n, v)),
            Some(Tok::Int(num)) => {
                if let Some(Tok::Slash) = self.peek() {
                    self.bump();
                    let den_at = self.offset();
                    match self.bump() {
                        Some(Tok::Int(0)) => Err(PolyError::ZeroDenominator { position: den_at }),
                        Some(Tok::Int(den)) => Ok(Polynomial::constant(n, num as f64 / den as f64)),
                        _ => Err(PolyError::Syntax {
                            position: den_at,
                            message: "expected a positive integer denominator".into(),
                        }),
                    }
                } else {
                    Ok(Polynomial::constant(n, num as f64))
                }
            }
            Some(Tok::Ident(name)) => {
                let idx = self
                    .vars
                    .iter()
                    .position(|v| *v == name)
                    .ok_or(PolyError::UnknownVariable { name, position: at })?;
                let base = Polynomial::var(n, idx);
                Ok(match self.exponent()? {
                    Some(k) => base.pow(k),
                    None => base,
                })
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                let close_at = self.offset();
                match self.bump() {
                    Some(Tok::RParen) => {}
                    _ => {
                        return Err(PolyError::Syntax {
                            position: close_at,
                            message: "expected ')'".into(),
                        })
                    }
                }
                Ok(match self.exponent()? {
                    Some(k) => inner.pow(k),
                    None => inner,
                })
            }
            Some(t) => Err(PolyError::Syntax {
                position: at,
                message: format!("unexpected token {t:?}"),
            }),
            None => Err(PolyError::Syntax {
                position: at,
                message: "unexpected end of input".into(),
            }),
        }
    }
}

/// Parses `src` over the ordered variable list `vars`.
pub fn parse_polynomial(src: &str, vars: &[String]) -> Result<Polynomial, PolyError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, vars, end: src.len() };
    let poly = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(PolyError::Syntax {
            position: p.offset(),
            message: "trailing input".into(),
        });
    }
    Ok(poly)
}
