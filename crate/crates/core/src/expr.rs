//! Scalar expression parsing and evaluation in the variables `x`, `y`.
//!
//! Potentials and starting functions are written as plain text, e.g.
//! `(x-1)*(y-1)*(x+1)*(y+1)` or `1/sqrt(x^2+y^2)`. The grammar:
//!
//! ```text
//! expr   := mul (('+' | '-') mul)*            left associative
//! mul    := unary (('*' | '/') unary)*        left associative
//! unary  := '-' unary | pow
//! pow    := atom ('^' unary)?                 right associative, binds tighter than unary '-'
//! atom   := number | 'x' | 'y' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func   := 'sin' | 'cos' | 'sqrt' | 'log' | 'abs' | 'exp'
//! ```
//!
//! `log` is the natural logarithm. Implicit multiplication is not supported;
//! `2x` is a syntax error, write `2*x`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sqrt,
    Log,
    Abs,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Exp => "exp",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "exp" => Func::Exp,
            _ => return None,
        })
    }
}

/// Parsed expression tree. Immutable after parse; evaluation is reentrant.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(f64),
    X,
    Y,
    Pi,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Evaluate at the point `(x, y)`.
    ///
    /// `sqrt`/`log` of negative (resp. nonpositive) arguments and division by
    /// zero are reported as errors instead of propagating NaN.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        match self {
            Expr::Literal(v) => Ok(*v),
            Expr::X => Ok(x),
            Expr::Y => Ok(y),
            Expr::Pi => Ok(std::f64::consts::PI),
            Expr::Neg(e) => Ok(-e.eval(x, y)?),
            Expr::Bin(op, a, b) => {
                let a = a.eval(x, y)?;
                let b = b.eval(x, y)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(Error::DivisionByZero)
                        } else {
                            Ok(a / b)
                        }
                    }
                    BinOp::Pow => {
                        let v = a.powf(b);
                        if v.is_nan() {
                            Err(Error::DomainError(format!("{a} ^ {b} is undefined")))
                        } else {
                            Ok(v)
                        }
                    }
                }
            }
            Expr::Call(f, e) => {
                let v = e.eval(x, y)?;
                match f {
                    Func::Sin => Ok(v.sin()),
                    Func::Cos => Ok(v.cos()),
                    Func::Sqrt => {
                        if v < 0.0 {
                            Err(Error::DomainError(format!("sqrt of negative value {v}")))
                        } else {
                            Ok(v.sqrt())
                        }
                    }
                    Func::Log => {
                        if v <= 0.0 {
                            Err(Error::DomainError(format!("log of nonpositive value {v}")))
                        } else {
                            Ok(v.ln())
                        }
                    }
                    Func::Abs => Ok(v.abs()),
                    Func::Exp => Ok(v.exp()),
                }
            }
        }
    }

    fn binding_power(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 10,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 20,
            Expr::Neg(_) => 30,
            Expr::Bin(BinOp::Pow, ..) => 40,
            _ => 50,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min_bp: u8) -> fmt::Result {
        let bp = self.binding_power();
        if bp < min_bp {
            write!(f, "(")?;
        }
        match self {
            Expr::Literal(v) => write!(f, "{v}")?,
            Expr::X => write!(f, "x")?,
            Expr::Y => write!(f, "y")?,
            Expr::Pi => write!(f, "pi")?,
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_prec(f, 31)?;
            }
            Expr::Bin(op, a, b) => {
                let (sym, l, r) = match op {
                    BinOp::Add => ("+", 10, 11),
                    BinOp::Sub => ("-", 10, 11),
                    BinOp::Mul => ("*", 20, 21),
                    BinOp::Div => ("/", 20, 21),
                    // right associative; the rhs of `^` may be a unary minus
                    BinOp::Pow => ("^", 41, 30),
                };
                a.fmt_prec(f, l)?;
                write!(f, "{sym}")?;
                b.fmt_prec(f, r)?;
            }
            Expr::Call(func, e) => {
                write!(f, "{}(", func.name())?;
                e.fmt_prec(f, 0)?;
                write!(f, ")")?;
            }
        }
        if bp < min_bp {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
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
    src: &'a str,
    tokens: Vec<(Token, usize)>,
}

impl<'a> Lexer<'a> {
    fn lex(src: &'a str) -> Result<Vec<(Token, usize)>> {
        let mut lx = Lexer { src, tokens: Vec::new() };
        lx.run()?;
        Ok(lx.tokens)
    }

    fn run(&mut self) -> Result<()> {
        let bytes = self.src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            match c {
                b' ' | b'\t' | b'\n' | b'\r' => i += 1,
                b'+' => {
                    self.tokens.push((Token::Plus, i));
                    i += 1;
                }
                b'-' => {
                    self.tokens.push((Token::Minus, i));
                    i += 1;
                }
                b'*' => {
                    self.tokens.push((Token::Star, i));
                    i += 1;
                }
                b'/' => {
                    self.tokens.push((Token::Slash, i));
                    i += 1;
                }
                b'^' => {
                    self.tokens.push((Token::Caret, i));
                    i += 1;
                }
                b'(' => {
                    self.tokens.push((Token::LParen, i));
                    i += 1;
                }
                b')' => {
                    self.tokens.push((Token::RParen, i));
                    i += 1;
                }
                b'0'..=b'9' | b'.' => {
                    let start = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    if i < bytes.len() && bytes[i] == b'.' {
                        i += 1;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
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
                    let text = &self.src[start..i];
                    let value: f64 = text.parse().map_err(|_| Error::Syntax {
                        offset: start,
                        message: format!("invalid number `{text}`"),
                    })?;
                    if !value.is_finite() {
                        return Err(Error::Syntax {
                            offset: start,
                            message: format!("number `{text}` is out of range"),
                        });
                    }
                    self.tokens.push((Token::Num(value), start));
                }
                b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                    let start = i;
                    while i < bytes.len()
                        && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                    {
                        i += 1;
                    }
                    self.tokens
                        .push((Token::Ident(self.src[start..i].to_string()), start));
                }
                _ => {
                    return Err(Error::Syntax {
                        offset: i,
                        message: format!("unexpected character `{}`", &self.src[i..].chars().next().unwrap()),
                    })
                }
            }
        }
        Ok(())
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map(|(_, o)| *o).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<()> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(Error::Syntax {
                offset: self.offset(),
                message: format!("expected {what}"),
            }),
        }
    }

    fn parse_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_mul()?;
        while let Some(tok) = self.peek() {
            let op = match tok {
                Token::Plus => BinOp::Add,
                Token::Minus => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_mul()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_mul(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_unary()?;
        while let Some(tok) = self.peek() {
            let op = match tok {
                Token::Star => BinOp::Mul,
                Token::Slash => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Expr> {
        if let Some(Token::Minus) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.parse_unary()?)));
        }
        self.parse_pow()
    }

    fn parse_pow(&mut self) -> Result<Expr> {
        let base = self.parse_atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.pos += 1;
            // `^` binds tighter than unary minus on its left, but its
            // exponent may itself carry one: x^-2 parses as x^(-2).
            let exp = self.parse_unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr> {
        let offset = self.offset();
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Literal(v)),
            Some(Token::Ident(name)) => match name.as_str() {
                "x" => Ok(Expr::X),
                "y" => Ok(Expr::Y),
                "pi" => Ok(Expr::Pi),
                _ => {
                    if let Some(func) = Func::from_name(&name) {
                        self.expect(Token::LParen, &format!("`(` after `{name}`"))?;
                        let arg = self.parse_expr()?;
                        self.expect(Token::RParen, "closing `)`")?;
                        Ok(Expr::Call(func, Box::new(arg)))
                    } else {
                        Err(Error::UnknownIdentifier { name, offset })
                    }
                }
            },
            Some(Token::LParen) => {
                let inner = self.parse_expr()?;
                self.expect(Token::RParen, "closing `)`")?;
                Ok(inner)
            }
            _ => Err(Error::Syntax {
                offset,
                message: "expected a number, variable, function or `(`".to_string(),
            }),
        }
    }
}

/// Parse an expression string into an [`Expr`].
pub fn parse(text: &str) -> Result<Expr> {
    if text.trim().is_empty() {
        return Err(Error::Syntax {
            offset: 0,
            message: "empty expression".to_string(),
        });
    }
    let tokens = Lexer::lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let expr = parser.parse_expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(Error::Syntax {
            offset: parser.offset(),
            message: "unexpected trailing input".to_string(),
        });
    }
    Ok(expr)
}
