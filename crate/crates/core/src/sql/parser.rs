//! Recursive-descent parser for the SELECT subset.
//!
//! ```text
//! query   := SELECT proj {, proj} FROM ident [WHERE expr]
//!            [GROUP BY ident {, ident}] [ORDER BY ident [ASC|DESC]]
//!            [LIMIT int] [;]
//! proj    := * | expr [AS ident]
//! expr    := and {OR and}
//! and     := not {AND not}
//! not     := NOT not | cmp
//! cmp     := sum [(= | != | <> | < | <= | > | >=) sum]
//! sum     := term {(+ | -) term}
//! term    := unary {(* | /) unary}
//! unary   := - unary | atom
//! atom    := literal | ident | agg ( * | expr ) | ( expr )
//! ```

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::{IssueCode, QueryIssue};

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, QueryIssue>;

fn syntax(msg: impl Into<String>, span: Span) -> QueryIssue {
    QueryIssue::error(IssueCode::Syntax, msg, span)
}

fn describe(t: &Token) -> String {
    match &t.tok {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Quoted(s) => format!("\"{s}\""),
        Tok::Int(i) => i.to_string(),
        Tok::Float(x) => x.to_string(),
        Tok::Str(s) => format!("'{s}'"),
        Tok::Eof => "end of input".to_string(),
        other => format!("{other:?}"),
    }
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if &self.peek().tok == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek().is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> PResult<Token> {
        if &self.peek().tok == tok {
            Ok(self.bump())
        } else {
            let t = self.peek();
            Err(syntax(format!("expected {what}, found {}", describe(t)), t.span))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Token> {
        if self.peek().is_kw(kw) {
            Ok(self.bump())
        } else {
            let t = self.peek();
            Err(syntax(format!("expected {kw}, found {}", describe(t)), t.span))
        }
    }

    fn ident(&mut self) -> PResult<Ident> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Ident(ref s) if !is_reserved(s) => {
                self.bump();
                Ok(Ident { name: s.clone(), span: t.span })
            }
            Tok::Quoted(ref s) => {
                self.bump();
                Ok(Ident { name: s.clone(), span: t.span })
            }
            _ => Err(syntax(format!("expected identifier, found {}", describe(&t)), t.span)),
        }
    }

    fn statement(&mut self) -> PResult<Statement> {
        let first = self.peek().clone();
        let kind = match &first.tok {
            Tok::Ident(w) => StatementKind::from_keyword(w),
            _ => None,
        };
        match kind {
            Some(StatementKind::Select) => {}
            Some(kind) => return Ok(Statement::Forbidden { kind, span: first.span }),
            None => {
                return Err(syntax(format!("expected SELECT, found {}", describe(&first)), first.span));
            }
        }
        self.bump();
        let mut projections = vec![self.projection()?];
        while self.eat(&Tok::Comma) {
            projections.push(self.projection()?);
        }
        self.expect_kw("FROM")?;
        let from = self.ident()?;
        let filter = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_kw("GROUP") {
            self.expect_kw("BY")?;
            group_by.push(self.ident()?);
            while self.eat(&Tok::Comma) {
                group_by.push(self.ident()?);
            }
        }
        let order_by = if self.eat_kw("ORDER") {
            self.expect_kw("BY")?;
            let key = self.ident()?;
            let descending = if self.eat_kw("DESC") {
                true
            } else {
                self.eat_kw("ASC");
                false
            };
            Some(OrderBy { key, descending })
        } else {
            None
        };
        let limit = if self.eat_kw("LIMIT") {
            let t = self.bump();
            match t.tok {
                Tok::Int(n) if n >= 0 => Some(n as u64),
                _ => return Err(syntax("LIMIT expects a non-negative integer", t.span)),
            }
        } else {
            None
        };
        Ok(Statement::Select(Select { projections, from, filter, group_by, order_by, limit }))
    }

    fn projection(&mut self) -> PResult<Projection> {
        if self.eat(&Tok::Star) {
            return Ok(Projection::Star);
        }
        let expr = self.expr()?;
        let alias = if self.eat_kw("AS") { Some(self.ident()?) } else { None };
        Ok(Projection::Expr { expr, alias })
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut l = self.and()?;
        while self.eat_kw("OR") {
            let r = self.and()?;
            l = bin(BinOp::Or, l, r);
        }
        Ok(l)
    }

    fn and(&mut self) -> PResult<Expr> {
        let mut l = self.not()?;
        while self.eat_kw("AND") {
            let r = self.not()?;
            l = bin(BinOp::And, l, r);
        }
        Ok(l)
    }

    fn not(&mut self) -> PResult<Expr> {
        if self.peek().is_kw("NOT") {
            let t = self.bump();
            let e = self.not()?;
            let span = t.span.to(e.span);
            return Ok(Expr { kind: ExprKind::Unary(UnOp::Not, Box::new(e)), span });
        }
        self.cmp()
    }

    fn cmp(&mut self) -> PResult<Expr> {
        let l = self.sum()?;
        let op = match self.peek().tok {
            Tok::Eq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return Ok(l),
        };
        self.bump();
        let r = self.sum()?;
        Ok(bin(op, l, r))
    }

    fn sum(&mut self) -> PResult<Expr> {
        let mut l = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(l),
            };
            self.bump();
            let r = self.term()?;
            l = bin(op, l, r);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut l = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(l),
            };
            self.bump();
            let r = self.unary()?;
            l = bin(op, l, r);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.peek().tok == Tok::Minus {
            let t = self.bump();
            let e = self.unary()?;
            let span = t.span.to(e.span);
            return Ok(Expr { kind: ExprKind::Unary(UnOp::Neg, Box::new(e)), span });
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Expr> {
        let t = self.bump();
        let lit = |l| Ok(Expr { kind: ExprKind::Lit(l), span: t.span });
        match &t.tok {
            Tok::Int(i) => lit(Literal::Int(*i)),
            Tok::Float(x) => lit(Literal::Float(*x)),
            Tok::Str(s) => lit(Literal::Str(s.clone())),
            Tok::LParen => {
                let mut e = self.expr()?;
                let close = self.expect(&Tok::RParen, "`)`")?;
                e.span = t.span.to(close.span);
                Ok(e)
            }
            Tok::Quoted(s) => Ok(Expr { kind: ExprKind::Column(s.clone()), span: t.span }),
            Tok::Ident(w) => {
                if w.eq_ignore_ascii_case("TRUE") {
                    return lit(Literal::Bool(true));
                }
                if w.eq_ignore_ascii_case("FALSE") {
                    return lit(Literal::Bool(false));
                }
                if w.eq_ignore_ascii_case("NULL") {
                    return lit(Literal::Null);
                }
                if let Some(func) = AggFunc::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(w)) {
                    self.expect(&Tok::LParen, "`(` after aggregate")?;
                    let arg = if func == AggFunc::Count && self.eat(&Tok::Star) {
                        None
                    } else {
                        Some(Box::new(self.expr()?))
                    };
                    let close = self.expect(&Tok::RParen, "`)`")?;
                    return Ok(Expr { kind: ExprKind::Agg(func, arg), span: t.span.to(close.span) });
                }
                if is_reserved(w) {
                    return Err(syntax(format!("unexpected keyword {}", describe(&t)), t.span));
                }
                Ok(Expr { kind: ExprKind::Column(w.clone()), span: t.span })
            }
            _ => Err(syntax(format!("expected expression, found {}", describe(&t)), t.span)),
        }
    }

    /// Accepts an optional `;`. Anything after it must be a complete
    /// statement; a trailing data-modifying statement is reported as such.
    fn finish(&mut self, stmt: Statement) -> PResult<Statement> {
        if let Statement::Forbidden { .. } = stmt {
            return Ok(stmt);
        }
        self.eat(&Tok::Semi);
        if self.peek().tok == Tok::Eof {
            return Ok(stmt);
        }
        let next = self.peek().clone();
        if let Tok::Ident(w) = &next.tok {
            if let Some(kind) = StatementKind::from_keyword(w).filter(|k| *k != StatementKind::Select) {
                return Ok(Statement::Forbidden { kind, span: next.span });
            }
        }
        Err(syntax(format!("unexpected {} after end of query", describe(&next)), next.span))
    }
}

fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
    let span = l.span.to(r.span);
    Expr { kind: ExprKind::Binary(op, Box::new(l), Box::new(r)), span }
}

pub fn parse_sql(text: &str) -> Result<Statement, QueryIssue> {
    let mut p = Parser { toks: tokenize(text)?, pos: 0 };
    let stmt = p.statement()?;
    p.finish(stmt)
}

/// Parses a standalone scalar expression (filter predicates, UDFs).
pub fn parse_expr(text: &str) -> Result<Expr, QueryIssue> {
    let mut p = Parser { toks: tokenize(text)?, pos: 0 };
    let e = p.expr()?;
    let t = p.peek();
    if t.tok != Tok::Eof {
        return Err(syntax(format!("unexpected {} after expression", describe(t)), t.span));
    }
    Ok(e)
}
