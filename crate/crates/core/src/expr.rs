//! A small arithmetic expression grammar for analytic field data.
//!
//! Supported: `+ - * / ^`, `sin`, `cos`, `exp`, the coordinates `x1`, `x2`,
//! numeric literals (including scientific notation), and parentheses. `^` is
//! right-associative and binds tighter than unary minus applied to its base,
//! i.e. `-x1^2` parses as `-(x1^2)`.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("unexpected character '{0}' at position {1}")]
    UnexpectedChar(char, usize),
    #[error("unexpected token at position {0}: expected {1}")]
    UnexpectedToken(usize, &'static str),
    #[error("unknown function '{0}' at position {1}")]
    UnknownFunction(String, usize),
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("trailing input at position {0}")]
    TrailingInput(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryFn {
    Sin,
    Cos,
    Exp,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X1,
    X2,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(UnaryFn, Box<Expr>),
}

impl Expr {
    /// Parse an expression from a string.
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        match p.peek() {
            None => Ok(e),
            Some((_, at)) => Err(ExprError::TrailingInput(*at)),
        }
    }

    /// Evaluate at the point (x1, x2).
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X1 => x1,
            Expr::X2 => x2,
            Expr::Neg(a) => -a.eval(x1, x2),
            Expr::Add(a, b) => a.eval(x1, x2) + b.eval(x1, x2),
            Expr::Sub(a, b) => a.eval(x1, x2) - b.eval(x1, x2),
            Expr::Mul(a, b) => a.eval(x1, x2) * b.eval(x1, x2),
            Expr::Div(a, b) => a.eval(x1, x2) / b.eval(x1, x2),
            Expr::Pow(a, b) => a.eval(x1, x2).powf(b.eval(x1, x2)),
            Expr::Call(f, a) => {
                let v = a.eval(x1, x2);
                match f {
                    UnaryFn::Sin => v.sin(),
                    UnaryFn::Cos => v.cos(),
                    UnaryFn::Exp => v.exp(),
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::X1 => write!(f, "x1"),
            Expr::X2 => write!(f, "x2"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(t, a) => {
                let name = match t {
                    UnaryFn::Sin => "sin",
                    UnaryFn::Cos => "cos",
                    UnaryFn::Exp => "exp",
                };
                write!(f, "{name}({a})")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    X1,
    X2,
    Fun(UnaryFn),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(Token, usize)>, ExprError> {
    let bytes: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => { out.push((Token::Plus, i)); i += 1; }
            '-' | '−' => { out.push((Token::Minus, i)); i += 1; }
            '*' => { out.push((Token::Star, i)); i += 1; }
            '/' => { out.push((Token::Slash, i)); i += 1; }
            '^' => { out.push((Token::Caret, i)); i += 1; }
            '(' => { out.push((Token::LParen, i)); i += 1; }
            ')' => { out.push((Token::RParen, i)); i += 1; }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == '.') {
                    i += 1;
                }
                // scientific notation tail: e[+-]?digits
                if i < bytes.len() && (bytes[i] == 'e' || bytes[i] == 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == '+' || bytes[j] == '-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = bytes[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| ExprError::UnexpectedChar(bytes[start], start))?;
                out.push((Token::Num(v), start));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric()) {
                    i += 1;
                }
                let word: String = bytes[start..i].iter().collect();
                let tok = match word.as_str() {
                    "x1" => Token::X1,
                    "x2" => Token::X2,
                    "sin" => Token::Fun(UnaryFn::Sin),
                    "cos" => Token::Fun(UnaryFn::Cos),
                    "exp" => Token::Fun(UnaryFn::Exp),
                    _ => return Err(ExprError::UnknownFunction(word, start)),
                };
                out.push((tok, start));
            }
            other => return Err(ExprError::UnexpectedChar(other, i)),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(Token, usize)> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<(Token, usize)> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some((tok, _)) = self.peek() {
            match tok {
                Token::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Token::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some((tok, _)) = self.peek() {
            match tok {
                Token::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Token::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some((Token::Minus, _)) = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if let Some((Token::Caret, _)) = self.peek() {
            self.bump();
            // right-associative; allow unary minus in the exponent
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.bump() {
            Some((Token::Num(v), _)) => Ok(Expr::Num(v)),
            Some((Token::X1, _)) => Ok(Expr::X1),
            Some((Token::X2, _)) => Ok(Expr::X2),
            Some((Token::Fun(f), _)) => {
                match self.bump() {
                    Some((Token::LParen, _)) => {}
                    Some((_, p)) => return Err(ExprError::UnexpectedToken(p, "'(' after function")),
                    None => return Err(ExprError::UnexpectedEnd),
                }
                let arg = self.expr()?;
                match self.bump() {
                    Some((Token::RParen, _)) => {}
                    Some((_, p)) => return Err(ExprError::UnexpectedToken(p, "')'")),
                    None => return Err(ExprError::UnexpectedEnd),
                }
                Ok(Expr::Call(f, Box::new(arg)))
            }
            Some((Token::LParen, _)) => {
                let e = self.expr()?;
                match self.bump() {
                    Some((Token::RParen, _)) => Ok(e),
                    Some((_, p)) => Err(ExprError::UnexpectedToken(p, "')'")),
                    None => Err(ExprError::UnexpectedEnd),
                }
            }
            Some((_, p)) => Err(ExprError::UnexpectedToken(p, "a value")),
            None => Err(ExprError::UnexpectedEnd),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("2*x1 + sin(3.5*x2) - 1e-1").unwrap();
        let x1 = 0.3;
        let x2 = 0.7;
        assert_relative_eq!(e.eval(x1, x2), 2.0 * x1 + (3.5 * x2).sin() - 0.1);
    }

    #[test]
    fn power_is_right_associative() {
        let e = Expr::parse("2^3^2").unwrap();
        assert_relative_eq!(e.eval(0.0, 0.0), 512.0);
    }

    #[test]
    fn unary_minus_and_division() {
        let e = Expr::parse("-x1^2 / (1 + x2)").unwrap();
        assert_relative_eq!(e.eval(2.0, 1.0), -2.0);
    }

    #[test]
    fn rejects_unknown_function() {
        assert!(matches!(
            Expr::parse("tan(x1)"),
            Err(ExprError::UnknownFunction(_, _))
        ));
    }

    #[test]
    fn rejects_trailing_input() {
        assert!(matches!(Expr::parse("1 2"), Err(ExprError::TrailingInput(_))));
    }
}
