//! Recursive-descent parser.
//!
//! Statement shapes are distinguished by one or two tokens of lookahead;
//! expressions use classic precedence climbing with one non-associative
//! comparison level on top (`a < b < c` is rejected rather than silently
//! left-associated — comparison results are 0/1 ints, and chaining them is
//! nearly always a bug in sources this small).

use thiserror::Error;

use super::ast::{BinOp, Expr, Function, LValue, Param, ParamKind, Program, Stmt};
use super::lexer::{lex, LexError, Pos, Tok, Token};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("{pos}: {msg}")]
    Syntax { pos: Pos, msg: String },
}

pub fn parse(src: &str) -> Result<Program, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser { tokens, index: 0 };
    let mut functions = Vec::new();
    while !p.at_end() {
        functions.push(p.function()?);
    }
    Ok(Program { functions })
}

struct Parser {
    tokens: Vec<Token>,
    index: usize,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.index >= self.tokens.len()
    }

    fn pos(&self) -> Pos {
        self.tokens
            .get(self.index)
            .or_else(|| self.tokens.last())
            .map(|t| t.pos)
            .unwrap_or(Pos { line: 1, col: 1 })
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { pos: self.pos(), msg: msg.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.index).map(|t| &t.tok)
    }

    fn next(&mut self) -> Result<Tok, ParseError> {
        match self.tokens.get(self.index) {
            Some(t) => {
                self.index += 1;
                Ok(t.tok.clone())
            }
            None => self.err("unexpected end of input"),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.index += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == tok => {
                self.index += 1;
                Ok(())
            }
            Some(t) => {
                let t = t.clone();
                self.err(format!("expected {tok}, found {t}"))
            }
            None => self.err(format!("expected {tok}, found end of input")),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                self.index += 1;
                Ok(name)
            }
            Some(t) => {
                let t = t.clone();
                self.err(format!("expected identifier, found {t}"))
            }
            None => self.err("expected identifier, found end of input"),
        }
    }

    fn function(&mut self) -> Result<Function, ParseError> {
        let line = self.pos().line;
        self.expect(Tok::KwInt)?;
        let name = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                self.expect(Tok::KwInt)?;
                let kind =
                    if self.eat(&Tok::Star) { ParamKind::Pointer } else { ParamKind::Scalar };
                params.push(Param { name: self.ident()?, kind });
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        let body = self.block()?;
        Ok(Function { name, params, body, line })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut stmts = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if self.at_end() {
                return self.err("expected `}`, found end of input");
            }
            stmts.push(self.stmt()?);
        }
        Ok(stmts)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        match self.peek() {
            Some(Tok::KwInt) => self.declaration(),
            Some(Tok::KwIf) => {
                self.index += 1;
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let then_body = self.block()?;
                let else_body = if self.eat(&Tok::KwElse) { self.block()? } else { Vec::new() };
                Ok(Stmt::If { cond, then_body, else_body })
            }
            Some(Tok::KwWhile) => {
                self.index += 1;
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let body = self.block()?;
                Ok(Stmt::While { cond, body })
            }
            Some(Tok::KwReturn) => {
                self.index += 1;
                let e = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(Stmt::Return(e))
            }
            Some(Tok::Star) => {
                // *p = e;
                self.index += 1;
                let name = self.ident()?;
                self.expect(Tok::Assign)?;
                let value = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(Stmt::Assign { target: LValue::Deref(name), value })
            }
            Some(Tok::Ident(_)) => {
                let name = self.ident()?;
                match self.peek() {
                    Some(Tok::Assign) => {
                        self.index += 1;
                        let value = self.expr()?;
                        self.expect(Tok::Semi)?;
                        Ok(Stmt::Assign { target: LValue::Scalar(name), value })
                    }
                    Some(Tok::LBracket) => {
                        self.index += 1;
                        let index = self.expr()?;
                        self.expect(Tok::RBracket)?;
                        self.expect(Tok::Assign)?;
                        let value = self.expr()?;
                        self.expect(Tok::Semi)?;
                        Ok(Stmt::Assign { target: LValue::Index { base: name, index }, value })
                    }
                    Some(Tok::LParen) => {
                        self.index += 1;
                        let args = self.call_args()?;
                        self.expect(Tok::Semi)?;
                        Ok(Stmt::Call { name, args })
                    }
                    _ => self.err("expected `=`, `[`, or `(` after identifier"),
                }
            }
            Some(t) => {
                let t = t.clone();
                self.err(format!("expected a statement, found {t}"))
            }
            None => self.err("expected a statement, found end of input"),
        }
    }

    fn declaration(&mut self) -> Result<Stmt, ParseError> {
        self.expect(Tok::KwInt)?;
        if self.eat(&Tok::Star) {
            let name = self.ident()?;
            let init = if self.eat(&Tok::Assign) { Some(self.expr()?) } else { None };
            self.expect(Tok::Semi)?;
            return Ok(Stmt::DeclPointer { name, init });
        }
        let name = self.ident()?;
        if self.eat(&Tok::LBracket) {
            let len_pos = self.pos();
            let len = match self.next()? {
                Tok::Int(v) if v > 0 && v <= i64::from(u32::MAX) => v as u32,
                Tok::Int(v) => {
                    return Err(ParseError::Syntax {
                        pos: len_pos,
                        msg: format!("array length {v} must be a positive integer"),
                    })
                }
                t => {
                    return Err(ParseError::Syntax {
                        pos: len_pos,
                        msg: format!("expected array length, found {t}"),
                    })
                }
            };
            self.expect(Tok::RBracket)?;
            self.expect(Tok::Semi)?;
            return Ok(Stmt::DeclArray { name, len });
        }
        let init = if self.eat(&Tok::Assign) { Some(self.expr()?) } else { None };
        self.expect(Tok::Semi)?;
        Ok(Stmt::DeclScalar { name, init })
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(&Tok::RParen) {
                return Ok(args);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.addsub()?;
        let op = match self.peek() {
            Some(Tok::EqEq) => Some(BinOp::Eq),
            Some(Tok::NotEq) => Some(BinOp::Ne),
            Some(Tok::Lt) => Some(BinOp::Lt),
            Some(Tok::Gt) => Some(BinOp::Gt),
            Some(Tok::Le) => Some(BinOp::Le),
            Some(Tok::Ge) => Some(BinOp::Ge),
            _ => None,
        };
        let Some(op) = op else { return Ok(lhs) };
        self.index += 1;
        let rhs = self.addsub()?;
        if matches!(
            self.peek(),
            Some(Tok::EqEq | Tok::NotEq | Tok::Lt | Tok::Gt | Tok::Le | Tok::Ge)
        ) {
            return self.err("comparisons cannot be chained");
        }
        Ok(Expr::bin(op, lhs, rhs))
    }

    fn addsub(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.index += 1;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        while self.eat(&Tok::Star) {
            let rhs = self.factor()?;
            lhs = Expr::bin(BinOp::Mul, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Int(_)) => {
                let Some(Tok::Int(v)) = self.peek().cloned() else { unreachable!() };
                self.index += 1;
                Ok(Expr::Int(v))
            }
            Some(Tok::Minus) => {
                self.index += 1;
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(Tok::LParen) => {
                self.index += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Amp) => {
                self.index += 1;
                let var = self.ident()?;
                let index = if self.eat(&Tok::LBracket) {
                    let e = self.expr()?;
                    self.expect(Tok::RBracket)?;
                    Some(Box::new(e))
                } else {
                    None
                };
                Ok(Expr::AddrOf { var, index })
            }
            Some(Tok::Star) => {
                self.index += 1;
                Ok(Expr::Deref(self.ident()?))
            }
            Some(Tok::Ident(_)) => {
                let name = self.ident()?;
                match self.peek() {
                    Some(Tok::LParen) => {
                        self.index += 1;
                        Ok(Expr::Call { name, args: self.call_args()? })
                    }
                    Some(Tok::LBracket) => {
                        self.index += 1;
                        let index = self.expr()?;
                        self.expect(Tok::RBracket)?;
                        Ok(Expr::Index { base: name, index: Box::new(index) })
                    }
                    _ => Ok(Expr::Var(name)),
                }
            }
            Some(t) => {
                let t = t.clone();
                self.err(format!("expected an expression, found {t}"))
            }
            None => self.err("expected an expression, found end of input"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_minimal_function() {
        let prog = parse("int main() { return 0; }").unwrap();
        assert_eq!(prog.functions.len(), 1);
        assert_eq!(prog.functions[0].name, "main");
        assert_eq!(prog.functions[0].body, vec![Stmt::Return(Expr::Int(0))]);
    }

    #[test]
    fn declaration_shapes() {
        let prog = parse(
            "int main() {
                int x = 3;
                int a[10];
                int *p = &a[2];
                return x;
            }",
        )
        .unwrap();
        let body = &prog.functions[0].body;
        assert_eq!(body[0], Stmt::DeclScalar { name: "x".into(), init: Some(Expr::Int(3)) });
        assert_eq!(body[1], Stmt::DeclArray { name: "a".into(), len: 10 });
        assert_eq!(
            body[2],
            Stmt::DeclPointer {
                name: "p".into(),
                init: Some(Expr::AddrOf { var: "a".into(), index: Some(Box::new(Expr::Int(2))) }),
            }
        );
    }

    #[test]
    fn precedence_mul_binds_tighter_than_add_than_compare() {
        let prog = parse("int main() { return 1 + 2 * 3 < 4; }").unwrap();
        let Stmt::Return(e) = &prog.functions[0].body[0] else { panic!() };
        assert_eq!(
            *e,
            Expr::bin(
                BinOp::Lt,
                Expr::bin(
                    BinOp::Add,
                    Expr::Int(1),
                    Expr::bin(BinOp::Mul, Expr::Int(2), Expr::Int(3))
                ),
                Expr::Int(4),
            )
        );
    }

    #[test]
    fn pointer_args_and_deref_assign() {
        let prog = parse(
            "int fill(int *dst, int n) {
                *dst = n;
                dst[1] = n;
                return 0;
            }
            int main() {
                int a[4];
                fill(&a[0], 9);
                return a[0];
            }",
        )
        .unwrap();
        assert_eq!(prog.functions[0].params[0].kind, ParamKind::Pointer);
        assert_eq!(prog.functions[0].params[1].kind, ParamKind::Scalar);
        assert_eq!(
            prog.functions[0].body[0],
            Stmt::Assign { target: LValue::Deref("dst".into()), value: Expr::var("n") }
        );
        let Stmt::Call { name, args } = &prog.functions[1].body[1] else { panic!() };
        assert_eq!(name, "fill");
        assert_eq!(args.len(), 2);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse("int main() { return 1 + ; }").unwrap_err();
        assert_eq!(
            err,
            ParseError::Syntax {
                pos: Pos { line: 1, col: 25 },
                msg: "expected an expression, found `;`".into(),
            }
        );
    }

    #[test]
    fn chained_comparisons_are_rejected() {
        let err = parse("int main() { return 1 < 2 < 3; }").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { msg, .. } if msg.contains("chained")));
    }

    #[test]
    fn zero_length_arrays_are_rejected() {
        let err = parse("int main() { int a[0]; return 0; }").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { msg, .. } if msg.contains("positive")));
    }
}
