use super::{Expr, ExprError, Func, Var};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Int(u64),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(x) => format!("number {x}"),
            Tok::Int(n) => format!("integer {n}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((start, tok));
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let mut integral = true;
            if i < bytes.len() && bytes[i] == b'.' {
                integral = false;
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
                    integral = false;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let tok = if integral {
                text.parse::<u64>().map(Tok::Int).ok()
            } else {
                text.parse::<f64>().map(Tok::Num).ok()
            };
            match tok {
                Some(t) => out.push((start, t)),
                None => {
                    return Err(ExprError::Syntax {
                        offset: start,
                        expected: "a number".into(),
                    })
                }
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
            continue;
        }
        return Err(ExprError::Syntax {
            offset: start,
            expected: "an operator, operand or parenthesis".into(),
        });
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            offset: self.offset(),
            expected: format!("{expected}, found {}", self.peek().describe()),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(what)
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(match self.unary()? {
                Expr::Num(c) => Expr::Num(-c),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        let mut exponents = Vec::new();
        while *self.peek() == Tok::Caret {
            self.bump();
            exponents.push(self.exponent()?);
        }
        // right-associative: x^a^b = x^(a^b)
        let Some(mut n) = exponents.pop() else {
            return Ok(base);
        };
        while let Some(m) = exponents.pop() {
            n = u32::try_from(n)
                .ok()
                .and_then(|n| m.checked_pow(n))
                .ok_or(ExprError::Syntax {
                    offset: self.offset(),
                    expected: "an exponent that fits in 32 bits".into(),
                })?;
        }
        Ok(Expr::Pow(Box::new(base), n))
    }

    fn exponent(&mut self) -> Result<i32, ExprError> {
        let negative = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Int(n) => match i32::try_from(n) {
                Ok(n) => {
                    self.bump();
                    Ok(if negative { -n } else { n })
                }
                Err(_) => self.error("an exponent that fits in 32 bits"),
            },
            _ => self.error("an integer exponent"),
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(Expr::Num(x))
            }
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::Num(n as f64))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) if name == "x" => {
                self.bump();
                self.expect(Tok::LParen, "`(` after `x`")?;
                let vertex = match self.peek().clone() {
                    Tok::Ident(v) => v,
                    Tok::Int(n) => n.to_string(),
                    _ => return self.error("a vertex name"),
                };
                self.bump();
                self.expect(Tok::Comma, "`,`")?;
                let index = match self.peek().clone() {
                    Tok::Int(n) => n as usize,
                    _ => return self.error("a coordinate index"),
                };
                self.bump();
                self.expect(Tok::RParen, "`)`")?;
                Ok(Expr::Var(Var { vertex, index }))
            }
            Tok::Ident(name) => match Func::from_name(&name) {
                Some(func) => {
                    self.bump();
                    self.expect(Tok::LParen, "`(`")?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Expr::Func(func, Box::new(arg)))
                }
                None => self.error("a number, variable x(v,i), function or `(`"),
            },
            _ => self.error("an expression"),
        }
    }
}

/// Parses `text` with the usual precedence: `^` above unary minus above `* /` above `+ -`.
pub fn parse(text: &str) -> Result<Expr, ExprError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.error("an operator or end of input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(name: &str) -> Box<Expr> {
        Box::new(Expr::var(name, 0))
    }

    #[test]
    fn product_of_variables() {
        assert_eq!(
            parse("x(v0,0)*x(v1,0)").unwrap(),
            Expr::Mul(v("v0"), v("v1"))
        );
    }

    #[test]
    fn unbalanced_function_call() {
        match parse("sin(") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(
            parse("-x(a,0)^2").unwrap(),
            Expr::Neg(Box::new(Expr::Pow(v("a"), 2)))
        );
        assert_eq!(
            parse("x(a,0)-x(b,0)-x(c,0)").unwrap(),
            Expr::Sub(Box::new(Expr::Sub(v("a"), v("b"))), v("c"))
        );
        assert_eq!(parse("x(a,0)^2^3").unwrap(), Expr::Pow(v("a"), 8));
        assert_eq!(
            parse("x(a,0) + x(b,0) * x(c,0)").unwrap(),
            Expr::Add(v("a"), Box::new(Expr::Mul(v("b"), v("c"))))
        );
        assert_eq!(parse(" 1.5e-3 ").unwrap(), Expr::Num(1.5e-3));
        assert_eq!(parse("-2").unwrap(), Expr::Num(-2.0));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "x(a)", "x(a,0", "foo(1)", "1 2", "x(a,0)^1.5", "2 $ 3", "()"] {
            assert!(parse(bad).is_err(), "{bad} should fail");
        }
    }
}
