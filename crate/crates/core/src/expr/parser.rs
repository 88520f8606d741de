use super::{BinOp, ExprError, Func, Node, SymbolSet};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    StarStar,
    Slash,
    LParen,
    RParen,
    End,
}

pub(super) struct Parser<'a> {
    src: &'a str,
    pos: usize,
    peeked: Option<(usize, Token)>,
    symbols: SymbolSet,
}

fn syntax(offset: usize, message: impl Into<String>) -> ExprError {
    ExprError::SyntaxError {
        offset,
        message: message.into(),
    }
}

impl<'a> Parser<'a> {
    pub(super) fn new(src: &'a str, symbols: SymbolSet) -> Self {
        Self {
            src,
            pos: 0,
            peeked: None,
            symbols,
        }
    }

    pub(super) fn parse(mut self) -> Result<Node, ExprError> {
        let node = self.expr()?;
        match self.next()? {
            (_, Token::End) => Ok(node),
            (at, tok) => Err(syntax(at, format!("unexpected {tok:?}"))),
        }
    }

    fn lex(&mut self) -> Result<(usize, Token), ExprError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok((start, Token::End));
        };
        let tok = match c {
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'/' => Token::Slash,
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b'*' if bytes.get(start + 1) == Some(&b'*') => {
                self.pos += 2;
                return Ok((start, Token::StarStar));
            }
            b'*' => Token::Star,
            b'0'..=b'9' | b'.' => return self.number(start),
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = start;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                    end += 1;
                }
                self.pos = end;
                return Ok((start, Token::Ident(self.src[start..end].to_string())));
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap();
                return Err(syntax(start, format!("unexpected character `{ch}`")));
            }
        };
        self.pos += 1;
        Ok((start, tok))
    }

    fn number(&mut self, start: usize) -> Result<(usize, Token), ExprError> {
        let bytes = self.src.as_bytes();
        let mut end = start;
        let digits = |end: &mut usize| {
            let from = *end;
            while *end < bytes.len() && bytes[*end].is_ascii_digit() {
                *end += 1;
            }
            *end > from
        };
        let mut any = digits(&mut end);
        if bytes.get(end) == Some(&b'.') {
            end += 1;
            any |= digits(&mut end);
        }
        if !any {
            return Err(syntax(start, "malformed number"));
        }
        if matches!(bytes.get(end), Some(b'e' | b'E')) {
            let mut exp = end + 1;
            if matches!(bytes.get(exp), Some(b'+' | b'-')) {
                exp += 1;
            }
            if digits(&mut exp) {
                end = exp;
            } else {
                return Err(syntax(end, "malformed exponent"));
            }
        }
        let value: f64 = self.src[start..end]
            .parse()
            .map_err(|_| syntax(start, "malformed number"))?;
        self.pos = end;
        Ok((start, Token::Num(value)))
    }

    fn peek(&mut self) -> Result<&Token, ExprError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lex()?);
        }
        Ok(&self.peeked.as_ref().unwrap().1)
    }

    fn next(&mut self) -> Result<(usize, Token), ExprError> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lex(),
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek()? {
                Token::Plus => BinOp::Add,
                Token::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next()?;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek()? {
                Token::Star => BinOp::Mul,
                Token::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.next()?;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if *self.peek()? == Token::Minus {
            self.next()?;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if *self.peek()? == Token::StarStar {
            self.next()?;
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.next()? {
            (_, Token::Num(v)) => Ok(Node::Num(v)),
            (_, Token::LParen) => {
                let inner = self.expr()?;
                self.expect_close()?;
                Ok(inner)
            }
            (at, Token::Ident(name)) => {
                if *self.peek()? == Token::LParen {
                    let func = Func::lookup(&name).ok_or(ExprError::UnknownFunction(name))?;
                    self.next()?;
                    let arg = self.expr()?;
                    self.expect_close()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                match self.symbols.lookup(&name) {
                    Some(i) => Ok(Node::Sym(i)),
                    None if Func::lookup(&name).is_some() => {
                        Err(syntax(at, format!("function `{name}` needs an argument")))
                    }
                    None => Err(ExprError::UnknownSymbol(name)),
                }
            }
            (at, Token::End) => Err(syntax(at, "unexpected end of input")),
            (at, tok) => Err(syntax(at, format!("unexpected {tok:?}"))),
        }
    }

    fn expect_close(&mut self) -> Result<(), ExprError> {
        match self.next()? {
            (_, Token::RParen) => Ok(()),
            (at, tok) => Err(syntax(at, format!("expected `)`, found {tok:?}"))),
        }
    }
}
