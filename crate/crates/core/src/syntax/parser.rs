use std::sync::Arc;

use super::ast::*;
use super::lexer::{tokenize, Kw, Sym, Tok, Token};
use super::SyntaxError;

/// Maximum syntactic nesting (parentheses, brackets, keyword bodies).
const MAX_NESTING: usize = 100;
/// Maximum height of any expression or pattern tree.
pub const MAX_HEIGHT: u32 = 1000;

type PResult<T> = Result<T, SyntaxError>;

/// Parses a complete MiniML source file.
pub fn parse(source: &[u8], source_name: &str) -> PResult<Program> {
    let toks = tokenize(source)?;
    let mut p = Parser { toks, pos: 0, nesting: 0 };
    let decls = p.program()?;
    Ok(Program { decls, source_name: source_name.to_string() })
}

/// Parses a standalone expression, used for harness calls and generator mappers.
pub fn parse_expr(source: &str) -> PResult<Arc<Expr>> {
    let toks = tokenize(source.as_bytes())?;
    let mut p = Parser { toks, pos: 0, nesting: 0 };
    while p.eat_sym(Sym::SemiSemi) {}
    let e = p.expr()?;
    while p.eat_sym(Sym::SemiSemi) {}
    if p.peek() != &Tok::Eof {
        return Err(p.unexpected("end of expression"));
    }
    Ok(e)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    nesting: usize,
}

fn binary_op(tok: &Tok) -> Option<&'static str> {
    Some(match tok {
        Tok::Sym(Sym::Plus) => "+",
        Tok::Sym(Sym::Minus) => "-",
        Tok::Sym(Sym::Star) => "*",
        Tok::Sym(Sym::Slash) => "/",
        Tok::Kw(Kw::Mod) => "mod",
        Tok::Sym(Sym::Eq) => "=",
        Tok::Sym(Sym::Neq) => "<>",
        Tok::Sym(Sym::Lt) => "<",
        Tok::Sym(Sym::Le) => "<=",
        Tok::Sym(Sym::Gt) => ">",
        Tok::Sym(Sym::Ge) => ">=",
        Tok::Sym(Sym::Caret) => "^",
        Tok::Sym(Sym::Assign) => ":=",
        Tok::Sym(Sym::Bang) => "!",
        _ => return None,
    })
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat_sym(&mut self, s: Sym) -> bool {
        if self.peek() == &Tok::Sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: Kw) -> bool {
        if self.peek() == &Tok::Kw(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, expected: &str) -> SyntaxError {
        SyntaxError::parse(self.span(), format!("expected {expected}, found {}", self.peek()))
    }

    fn expect_sym(&mut self, s: Sym) -> PResult<Span> {
        if self.peek() == &Tok::Sym(s) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("`{}`", s.as_str())))
        }
    }

    fn expect_kw(&mut self, k: Kw) -> PResult<Span> {
        if self.peek() == &Tok::Kw(k) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("`{}`", k.as_str())))
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(SyntaxError::parse(self.span(), "expression is nested too deeply"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.nesting -= 1;
    }

    fn node(&self, kind: ExprKind, span: Span) -> PResult<Arc<Expr>> {
        let e = Expr::new(kind, span);
        if e.height() > MAX_HEIGHT {
            return Err(SyntaxError::parse(span, "expression is nested too deeply"));
        }
        Ok(Arc::new(e))
    }

    fn pnode(&self, kind: PatternKind, span: Span) -> PResult<Pattern> {
        let p = Pattern::new(kind, span);
        if p.height() > MAX_HEIGHT {
            return Err(SyntaxError::parse(span, "pattern is nested too deeply"));
        }
        Ok(p)
    }

    fn var(&self, name: &str, span: Span) -> PResult<Arc<Expr>> {
        self.node(ExprKind::Var(name.into()), span)
    }

    fn apply(&self, func: Arc<Expr>, arg: Arc<Expr>) -> PResult<Arc<Expr>> {
        let span = func.span.to(arg.span);
        self.node(ExprKind::Apply { func, arg }, span)
    }

    fn infix(&self, op: &str, op_span: Span, l: Arc<Expr>, r: Arc<Expr>) -> PResult<Arc<Expr>> {
        let f = self.var(op, op_span)?;
        let partial = self.node(ExprKind::Apply { func: f, arg: l.clone() }, l.span.to(op_span))?;
        self.node(ExprKind::Apply { func: partial, arg: r.clone() }, l.span.to(r.span))
    }

    // ---- declarations ----

    fn program(&mut self) -> PResult<Vec<Decl>> {
        let mut decls = Vec::new();
        loop {
            while self.eat_sym(Sym::SemiSemi) {}
            match self.peek() {
                Tok::Eof => return Ok(decls),
                Tok::Kw(Kw::Type) => decls.push(self.type_decl()?),
                Tok::Kw(Kw::Let) => decls.push(self.let_decl()?),
                Tok::Kw(Kw::Native) => decls.push(self.native_decl()?),
                _ => return Err(self.unexpected("a declaration (`let`, `type` or `native`)")),
            }
        }
    }

    fn type_decl(&mut self) -> PResult<Decl> {
        let start = self.expect_kw(Kw::Type)?;
        let name = match self.bump().tok {
            Tok::Ident(n) => n,
            _ => return Err(SyntaxError::parse(self.prev_span(), "expected a type name")),
        };
        self.expect_sym(Sym::Eq)?;
        self.eat_sym(Sym::Bar);
        let mut ctors = Vec::new();
        loop {
            let cname = match self.bump().tok {
                Tok::UIdent(n) => n,
                _ => return Err(SyntaxError::parse(self.prev_span(), "expected a constructor name")),
            };
            let mut arity = 0;
            if self.eat_kw(Kw::Of) {
                loop {
                    let mut words = 0;
                    while matches!(self.peek(), Tok::Sym(Sym::Underscore) | Tok::Ident(_) | Tok::Qualified(_)) {
                        self.bump();
                        words += 1;
                    }
                    if words == 0 {
                        return Err(self.unexpected("`_` or a type name"));
                    }
                    arity += 1;
                    if !self.eat_sym(Sym::Star) {
                        break;
                    }
                }
            }
            if ctors.iter().any(|c: &CtorDecl| *c.name == *cname) {
                return Err(SyntaxError::parse(self.prev_span(), format!("constructor {cname} declared twice")));
            }
            ctors.push(CtorDecl { name: cname.into(), arity });
            if !self.eat_sym(Sym::Bar) {
                break;
            }
        }
        Ok(Decl { kind: DeclKind::Type { name: name.into(), ctors }, span: start.to(self.prev_span()) })
    }

    fn binder(&mut self) -> PResult<Option<(Name, Span)>> {
        let span = self.span();
        let name: Name = match self.peek() {
            Tok::Ident(n) => n.as_str().into(),
            Tok::Sym(Sym::Underscore) => "_".into(),
            Tok::Sym(Sym::LParen) if self.peek_at(1) == &Tok::Sym(Sym::RParen) => {
                self.bump();
                "()".into()
            }
            _ => return Ok(None),
        };
        self.bump();
        Ok(Some((name, span.to(self.prev_span()))))
    }

    fn expect_binder(&mut self) -> PResult<(Name, Span)> {
        match self.binder()? {
            Some(b) => Ok(b),
            None => Err(self.unexpected("a name")),
        }
    }

    /// `name p1 p2 ... = body` with the parameters desugared to lambdas.
    fn binding(&mut self, top_level: bool) -> PResult<(bool, Name, Arc<Expr>)> {
        let recursive = self.eat_kw(Kw::Rec);
        let (name, _) = self.expect_binder()?;
        let mut params = Vec::new();
        while let Some(p) = self.binder()? {
            params.push(p);
        }
        self.expect_sym(Sym::Eq)?;
        self.enter()?;
        let body = self.expr()?;
        self.leave();
        if top_level && self.peek() == &Tok::Kw(Kw::In) {
            return Err(SyntaxError::parse(self.span(), "`let ... in` is not allowed at top level"));
        }
        let bound = self.lambdas(params, body)?;
        Ok((recursive, name, bound))
    }

    fn lambdas(&self, params: Vec<(Name, Span)>, body: Arc<Expr>) -> PResult<Arc<Expr>> {
        let mut e = body;
        for (param, span) in params.into_iter().rev() {
            let s = span.to(e.span);
            e = self.node(ExprKind::Lambda { param, body: e }, s)?;
        }
        Ok(e)
    }

    fn let_decl(&mut self) -> PResult<Decl> {
        let start = self.expect_kw(Kw::Let)?;
        let (recursive, name, expr) = self.binding(true)?;
        Ok(Decl { kind: DeclKind::Let { recursive, name, expr }, span: start.to(self.prev_span()) })
    }

    fn native_decl(&mut self) -> PResult<Decl> {
        let start = self.expect_kw(Kw::Native)?;
        let (name, _) = self.expect_binder()?;
        self.expect_sym(Sym::Eq)?;
        let primitive = match self.bump().tok {
            Tok::Str(s) => String::from_utf8_lossy(&s).into_owned(),
            _ => return Err(SyntaxError::parse(self.prev_span(), "expected a primitive name string")),
        };
        Ok(Decl { kind: DeclKind::Native { name, primitive: primitive.into() }, span: start.to(self.prev_span()) })
    }

    // ---- expressions ----

    fn starts_expr(&self) -> bool {
        self.starts_atom()
            || matches!(
                self.peek(),
                Tok::Kw(Kw::Let | Kw::Fun | Kw::If | Kw::Match | Kw::Try | Kw::Raise) | Tok::Sym(Sym::Minus)
            )
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Int(_)
                | Tok::Str(_)
                | Tok::Ident(_)
                | Tok::UIdent(_)
                | Tok::Qualified(_)
                | Tok::Kw(Kw::True | Kw::False | Kw::Begin | Kw::While | Kw::For | Kw::Native)
                | Tok::Sym(Sym::LParen | Sym::LBracket | Sym::LArray | Sym::Bang)
        )
    }

    /// Full expression, including `;` sequencing.
    fn expr(&mut self) -> PResult<Arc<Expr>> {
        self.enter()?;
        let mut items = vec![self.nonseq()?];
        while self.peek() == &Tok::Sym(Sym::Semi) {
            self.bump();
            // A trailing `;` before a closing token is accepted.
            if !self.starts_expr() {
                break;
            }
            items.push(self.nonseq()?);
        }
        self.leave();
        let mut acc = items.pop().unwrap();
        while let Some(first) = items.pop() {
            let span = first.span.to(acc.span);
            acc = self.node(ExprKind::Sequence { first, second: acc }, span)?;
        }
        Ok(acc)
    }

    fn nonseq(&mut self) -> PResult<Arc<Expr>> {
        self.assign()
    }

    fn assign(&mut self) -> PResult<Arc<Expr>> {
        let lhs = self.or_else()?;
        if self.peek() == &Tok::Sym(Sym::Assign) {
            let op = self.bump().span;
            self.enter()?;
            let rhs = self.assign()?;
            self.leave();
            return self.infix(":=", op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn or_else(&mut self) -> PResult<Arc<Expr>> {
        let mut items = vec![self.and_also()?];
        while self.eat_sym(Sym::OrOr) {
            items.push(self.and_also()?);
        }
        self.fold_right(items, ExprKind::OrElse)
    }

    fn and_also(&mut self) -> PResult<Arc<Expr>> {
        let mut items = vec![self.comparison()?];
        while self.eat_sym(Sym::AndAnd) {
            items.push(self.comparison()?);
        }
        self.fold_right(items, ExprKind::AndAlso)
    }

    fn fold_right(
        &self,
        mut items: Vec<Arc<Expr>>,
        mk: impl Fn(Arc<Expr>, Arc<Expr>) -> ExprKind,
    ) -> PResult<Arc<Expr>> {
        let mut acc = items.pop().unwrap();
        while let Some(l) = items.pop() {
            let span = l.span.to(acc.span);
            acc = self.node(mk(l, acc), span)?;
        }
        Ok(acc)
    }

    fn left_assoc(&mut self, ops: &[&str], next: fn(&mut Parser) -> PResult<Arc<Expr>>) -> PResult<Arc<Expr>> {
        let mut acc = next(self)?;
        loop {
            let Some(op) = binary_op(self.peek()).filter(|op| ops.contains(op)) else {
                return Ok(acc);
            };
            let op_span = self.bump().span;
            let rhs = next(self)?;
            acc = self.infix(op, op_span, acc, rhs)?;
        }
    }

    fn comparison(&mut self) -> PResult<Arc<Expr>> {
        self.left_assoc(&["=", "<>", "<", "<=", ">", ">="], Parser::concat)
    }

    fn concat(&mut self) -> PResult<Arc<Expr>> {
        let mut items = vec![self.cons()?];
        let mut ops = Vec::new();
        while self.peek() == &Tok::Sym(Sym::Caret) {
            ops.push(self.bump().span);
            items.push(self.cons()?);
        }
        let mut acc = items.pop().unwrap();
        while let (Some(l), Some(op)) = (items.pop(), ops.pop()) {
            acc = self.infix("^", op, l, acc)?;
        }
        Ok(acc)
    }

    fn cons(&mut self) -> PResult<Arc<Expr>> {
        let mut items = vec![self.additive()?];
        while self.eat_sym(Sym::ColonColon) {
            items.push(self.additive()?);
        }
        self.fold_right(items, |head, tail| ExprKind::Cons { head, tail })
    }

    fn additive(&mut self) -> PResult<Arc<Expr>> {
        self.left_assoc(&["+", "-"], Parser::multiplicative)
    }

    fn multiplicative(&mut self) -> PResult<Arc<Expr>> {
        self.left_assoc(&["*", "/", "mod"], Parser::unary)
    }

    fn unary(&mut self) -> PResult<Arc<Expr>> {
        if self.peek() != &Tok::Sym(Sym::Minus) {
            return self.application();
        }
        let op = self.bump().span;
        if let Tok::Int(n) = *self.peek() {
            let lit = self.bump().span;
            return self.node(ExprKind::Int(n.wrapping_neg()), op.to(lit));
        }
        self.enter()?;
        let operand = self.unary()?;
        self.leave();
        let f = self.var("~-", op)?;
        self.apply(f, operand)
    }

    fn application(&mut self) -> PResult<Arc<Expr>> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Kw(Kw::Fun | Kw::Let | Kw::If | Kw::Match | Kw::Try) => return self.keyword_expr(),
            Tok::Kw(Kw::Raise) => {
                self.bump();
                self.enter()?;
                let arg = self.application()?;
                self.leave();
                return self.node(ExprKind::Raise(arg.clone()), start.to(arg.span));
            }
            Tok::UIdent(name) => {
                self.bump();
                if !self.starts_atom() {
                    return self.node(ExprKind::Ctor { name: name.into(), args: vec![] }, start);
                }
                let arg = self.postfix()?;
                let span = start.to(arg.span);
                let args = match &arg.kind {
                    ExprKind::Tuple(items) => items.clone(),
                    _ => vec![arg],
                };
                return self.node(ExprKind::Ctor { name: name.into(), args }, span);
            }
            _ => {}
        }
        let mut acc = self.postfix()?;
        while self.starts_atom() {
            let arg = self.postfix()?;
            acc = self.apply(acc, arg)?;
        }
        Ok(acc)
    }

    fn postfix(&mut self) -> PResult<Arc<Expr>> {
        let mut acc = self.atom()?;
        while self.peek() == &Tok::Sym(Sym::DotParen) {
            self.bump();
            self.enter()?;
            let index = self.expr()?;
            self.leave();
            let close = self.expect_sym(Sym::RParen)?;
            if self.eat_sym(Sym::LeftArrow) {
                self.enter()?;
                let value = self.nonseq()?;
                self.leave();
                let span = acc.span.to(value.span);
                return self.node(ExprKind::ArrayPut { array: acc, index, value }, span);
            }
            let span = acc.span.to(close);
            acc = self.node(ExprKind::ArrayGet { array: acc, index }, span)?;
        }
        Ok(acc)
    }

    fn atom(&mut self) -> PResult<Arc<Expr>> {
        let start = self.span();
        let tok = self.peek().clone();
        match tok {
            Tok::Int(n) => {
                self.bump();
                self.node(ExprKind::Int(n), start)
            }
            Tok::Str(s) => {
                self.bump();
                self.node(ExprKind::Str(s), start)
            }
            Tok::Kw(Kw::True) | Tok::Kw(Kw::False) => {
                self.bump();
                self.node(ExprKind::Bool(tok == Tok::Kw(Kw::True)), start)
            }
            Tok::Ident(n) | Tok::Qualified(n) => {
                self.bump();
                self.var(&n, start)
            }
            Tok::UIdent(n) => {
                self.bump();
                self.node(ExprKind::Ctor { name: n.into(), args: vec![] }, start)
            }
            Tok::Sym(Sym::Bang) => {
                self.bump();
                self.enter()?;
                let operand = self.postfix()?;
                self.leave();
                let f = self.var("!", start)?;
                self.apply(f, operand)
            }
            Tok::Sym(Sym::LParen) => self.paren(),
            Tok::Kw(Kw::Begin) => {
                self.bump();
                self.enter()?;
                let e = self.expr()?;
                self.leave();
                self.expect_kw(Kw::End)?;
                Ok(e)
            }
            Tok::Sym(Sym::LBracket) | Tok::Sym(Sym::LArray) => {
                let array = tok == Tok::Sym(Sym::LArray);
                let close = if array { Sym::RArray } else { Sym::RBracket };
                self.bump();
                self.enter()?;
                let mut items = Vec::new();
                while self.peek() != &Tok::Sym(close) {
                    items.push(self.nonseq()?);
                    if !self.eat_sym(Sym::Semi) {
                        break;
                    }
                }
                self.leave();
                let end = self.expect_sym(close)?;
                let kind = if array { ExprKind::ArrayLit(items) } else { ExprKind::List(items) };
                self.node(kind, start.to(end))
            }
            Tok::Kw(Kw::While) => {
                self.bump();
                self.enter()?;
                let cond = self.expr()?;
                self.expect_kw(Kw::Do)?;
                let body = self.expr()?;
                self.leave();
                let end = self.expect_kw(Kw::Done)?;
                self.node(ExprKind::While { cond, body }, start.to(end))
            }
            Tok::Kw(Kw::For) => {
                self.bump();
                let var = match self.bump().tok {
                    Tok::Ident(n) => n,
                    _ => return Err(SyntaxError::parse(self.prev_span(), "expected a loop variable")),
                };
                self.expect_sym(Sym::Eq)?;
                self.enter()?;
                let from = self.expr()?;
                self.expect_kw(Kw::To)?;
                let to = self.expr()?;
                self.expect_kw(Kw::Do)?;
                let body = self.expr()?;
                self.leave();
                let end = self.expect_kw(Kw::Done)?;
                self.node(ExprKind::For { var: var.into(), from, to, body }, start.to(end))
            }
            Tok::Kw(Kw::Native) => {
                self.bump();
                match self.bump().tok {
                    Tok::Str(s) => {
                        let name = String::from_utf8_lossy(&s).into_owned();
                        self.node(ExprKind::Native(name.into()), start.to(self.prev_span()))
                    }
                    _ => Err(SyntaxError::parse(self.prev_span(), "expected a primitive name string")),
                }
            }
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn paren(&mut self) -> PResult<Arc<Expr>> {
        let start = self.expect_sym(Sym::LParen)?;
        if self.peek() == &Tok::Sym(Sym::RParen) {
            let end = self.bump().span;
            return self.node(ExprKind::Unit, start.to(end));
        }
        // Operator section such as `(+)`.
        if let Some(op) = binary_op(self.peek()) {
            if self.peek_at(1) == &Tok::Sym(Sym::RParen) {
                let op_span = self.bump().span;
                self.bump();
                return self.var(op, op_span);
            }
        }
        self.enter()?;
        let first = self.nonseq()?;
        let result = if self.peek() == &Tok::Sym(Sym::Comma) {
            let mut items = vec![first];
            while self.eat_sym(Sym::Comma) {
                items.push(self.nonseq()?);
            }
            let end = self.expect_sym(Sym::RParen)?;
            self.node(ExprKind::Tuple(items), start.to(end))
        } else if self.peek() == &Tok::Sym(Sym::Semi) && self.peek_at(1) != &Tok::Sym(Sym::RParen) {
            self.bump();
            let second = self.expr()?;
            self.expect_sym(Sym::RParen)?;
            let span = first.span.to(second.span);
            self.node(ExprKind::Sequence { first, second }, span)
        } else {
            self.eat_sym(Sym::Semi);
            self.expect_sym(Sym::RParen)?;
            Ok(first)
        };
        self.leave();
        result
    }

    fn keyword_expr(&mut self) -> PResult<Arc<Expr>> {
        let start = self.span();
        self.enter()?;
        let e = match self.bump().tok {
            Tok::Kw(Kw::Fun) => {
                let mut params = vec![self.expect_binder()?];
                while let Some(p) = self.binder()? {
                    params.push(p);
                }
                self.expect_sym(Sym::Arrow)?;
                let body = self.expr()?;
                let mut lam = self.lambdas(params, body)?;
                // The outermost lambda starts at `fun`.
                let outer = Expr::new(lam.kind.clone(), start.to(lam.span));
                lam = Arc::new(outer);
                lam
            }
            Tok::Kw(Kw::Let) => {
                let (recursive, name, bound) = self.binding(false)?;
                self.expect_kw(Kw::In)?;
                let body = self.expr()?;
                let span = start.to(body.span);
                self.node(ExprKind::Let { recursive, name, bound, body }, span)?
            }
            Tok::Kw(Kw::If) => {
                let cond = self.expr()?;
                self.expect_kw(Kw::Then)?;
                let then_branch = self.nonseq()?;
                let else_branch =
                    if self.eat_kw(Kw::Else) { self.nonseq()? } else { self.node(ExprKind::Unit, then_branch.span)? };
                let span = start.to(else_branch.span);
                self.node(ExprKind::If { cond, then_branch, else_branch }, span)?
            }
            Tok::Kw(Kw::Match) => {
                let scrutinee = self.expr()?;
                self.expect_kw(Kw::With)?;
                let arms = self.arms()?;
                let span = start.to(self.prev_span());
                self.node(ExprKind::Match { scrutinee, arms }, span)?
            }
            Tok::Kw(Kw::Try) => {
                let body = self.expr()?;
                self.expect_kw(Kw::With)?;
                let arms = self.arms()?;
                let span = start.to(self.prev_span());
                self.node(ExprKind::Try { body, arms }, span)?
            }
            _ => unreachable!("keyword_expr called on a non-keyword"),
        };
        self.leave();
        Ok(e)
    }

    fn arms(&mut self) -> PResult<Vec<Arm>> {
        self.eat_sym(Sym::Bar);
        let mut arms = Vec::new();
        loop {
            let pattern = self.pattern()?;
            let mut vars = Vec::new();
            pattern.bound_vars(&mut vars);
            for (i, (name, span)) in vars.iter().enumerate() {
                if vars[..i].iter().any(|(n, _)| n == name) {
                    return Err(SyntaxError::parse(
                        *span,
                        format!("variable {name} is bound several times in this pattern"),
                    ));
                }
            }
            self.expect_sym(Sym::Arrow)?;
            let body = self.expr()?;
            arms.push(Arm { pattern, body });
            if !self.eat_sym(Sym::Bar) {
                return Ok(arms);
            }
        }
    }

    // ---- patterns ----

    fn pattern(&mut self) -> PResult<Pattern> {
        self.enter()?;
        let first = self.pattern_cons()?;
        let result = if self.peek() == &Tok::Sym(Sym::Comma) {
            let mut items = vec![first];
            while self.eat_sym(Sym::Comma) {
                items.push(self.pattern_cons()?);
            }
            let span = items[0].span.to(items[items.len() - 1].span);
            self.pnode(PatternKind::Tuple(items), span)
        } else {
            Ok(first)
        };
        self.leave();
        result
    }

    fn pattern_cons(&mut self) -> PResult<Pattern> {
        let mut items = vec![self.pattern_ctor()?];
        while self.eat_sym(Sym::ColonColon) {
            items.push(self.pattern_ctor()?);
        }
        let mut acc = items.pop().unwrap();
        while let Some(head) = items.pop() {
            let span = head.span.to(acc.span);
            acc = self.pnode(PatternKind::Cons(Box::new(head), Box::new(acc)), span)?;
        }
        Ok(acc)
    }

    fn starts_pattern_atom(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Int(_)
                | Tok::Str(_)
                | Tok::Ident(_)
                | Tok::UIdent(_)
                | Tok::Kw(Kw::True | Kw::False)
                | Tok::Sym(Sym::Underscore | Sym::LParen | Sym::LBracket | Sym::Minus)
        )
    }

    fn pattern_ctor(&mut self) -> PResult<Pattern> {
        if let Tok::UIdent(name) = self.peek().clone() {
            let start = self.bump().span;
            if !self.starts_pattern_atom() {
                return self.pnode(PatternKind::Ctor(name.into(), vec![]), start);
            }
            let arg = self.pattern_atom()?;
            let span = start.to(arg.span);
            let args = match arg.kind {
                PatternKind::Tuple(items) => items,
                _ => vec![arg],
            };
            return self.pnode(PatternKind::Ctor(name.into(), args), span);
        }
        self.pattern_atom()
    }

    fn pattern_atom(&mut self) -> PResult<Pattern> {
        let start = self.span();
        let save = self.pos;
        match self.bump().tok {
            Tok::Sym(Sym::Underscore) => self.pnode(PatternKind::Wildcard, start),
            Tok::Ident(n) => self.pnode(PatternKind::Var(n.into()), start),
            Tok::Int(n) => self.pnode(PatternKind::Int(n), start),
            Tok::Sym(Sym::Minus) => match self.bump().tok {
                Tok::Int(n) => self.pnode(PatternKind::Int(n.wrapping_neg()), start.to(self.prev_span())),
                _ => Err(SyntaxError::parse(self.prev_span(), "expected an integer after `-`")),
            },
            Tok::Str(s) => self.pnode(PatternKind::Str(s), start),
            Tok::Kw(Kw::True) => self.pnode(PatternKind::Bool(true), start),
            Tok::Kw(Kw::False) => self.pnode(PatternKind::Bool(false), start),
            Tok::UIdent(n) => self.pnode(PatternKind::Ctor(n.into(), vec![]), start),
            Tok::Sym(Sym::LParen) => {
                if self.peek() == &Tok::Sym(Sym::RParen) {
                    let end = self.bump().span;
                    return self.pnode(PatternKind::Unit, start.to(end));
                }
                let inner = self.pattern()?;
                let end = self.expect_sym(Sym::RParen)?;
                let mut p = inner;
                p.span = start.to(end);
                Ok(p)
            }
            Tok::Sym(Sym::LBracket) => {
                self.enter()?;
                let mut items = Vec::new();
                while self.peek() != &Tok::Sym(Sym::RBracket) {
                    items.push(self.pattern()?);
                    if !self.eat_sym(Sym::Semi) {
                        break;
                    }
                }
                self.leave();
                let end = self.expect_sym(Sym::RBracket)?;
                let mut acc = self.pnode(PatternKind::Nil, end)?;
                while let Some(head) = items.pop() {
                    let span = head.span.to(acc.span);
                    acc = self.pnode(PatternKind::Cons(Box::new(head), Box::new(acc)), span)?;
                }
                acc.span = start.to(end);
                Ok(acc)
            }
            _ => {
                self.pos = save;
                Err(self.unexpected("a pattern"))
            }
        }
    }
}
