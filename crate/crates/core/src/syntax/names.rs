use std::collections::HashSet;

use super::ast::*;

/// Every identifier or constructor occurrence that the program does not bind
/// itself, in source order. These are exactly the names the prelude must supply.
pub fn free_names(p: &Program) -> Vec<(Name, Span)> {
    let ctors: HashSet<&str> = p.declared_ctors().map(|c| c.name.as_ref()).collect();
    let mut walker = Walker { ctors, scope: Vec::new(), out: Vec::new() };
    for d in &p.decls {
        match &d.kind {
            DeclKind::Type { .. } => {}
            DeclKind::Let { recursive, name, expr } => {
                if *recursive {
                    walker.scope.push(name.clone());
                    walker.expr(expr);
                } else {
                    walker.expr(expr);
                    walker.scope.push(name.clone());
                }
            }
            DeclKind::Native { name, .. } => walker.scope.push(name.clone()),
        }
    }
    let mut out = walker.out;
    out.sort_by_key(|(_, s)| s.lo);
    out
}

/// Free identifiers and constructors of a standalone expression.
pub fn free_names_expr(e: &Expr) -> Vec<(Name, Span)> {
    let mut walker = Walker { ctors: HashSet::new(), scope: Vec::new(), out: Vec::new() };
    walker.expr(e);
    let mut out = walker.out;
    out.sort_by_key(|(_, s)| s.lo);
    out
}

struct Walker<'a> {
    ctors: HashSet<&'a str>,
    scope: Vec<Name>,
    out: Vec<(Name, Span)>,
}

impl Walker<'_> {
    fn bound(&self, name: &str) -> bool {
        self.scope.iter().rev().any(|n| n.as_ref() == name)
    }

    fn with<R>(&mut self, names: impl IntoIterator<Item = Name>, f: impl FnOnce(&mut Self) -> R) -> R {
        let mark = self.scope.len();
        self.scope.extend(names);
        let r = f(self);
        self.scope.truncate(mark);
        r
    }

    fn ctor(&mut self, name: &Name, span: Span) {
        if !self.ctors.contains(name.as_ref()) {
            self.out.push((name.clone(), span));
        }
    }

    fn expr(&mut self, e: &Expr) {
        use ExprKind::*;
        match &e.kind {
            Var(n) => {
                if !self.bound(n) {
                    self.out.push((n.clone(), e.span));
                }
            }
            Ctor { name, args } => {
                self.ctor(name, e.span);
                args.iter().for_each(|a| self.expr(a));
            }
            Lambda { param, body } => self.with([param.clone()], |w| w.expr(body)),
            Let { recursive, name, bound, body } => {
                if *recursive {
                    self.with([name.clone()], |w| w.expr(bound));
                } else {
                    self.expr(bound);
                }
                self.with([name.clone()], |w| w.expr(body));
            }
            For { var, from, to, body } => {
                self.expr(from);
                self.expr(to);
                self.with([var.clone()], |w| w.expr(body));
            }
            Match { scrutinee: body, arms } | Try { body, arms } => {
                self.expr(body);
                for arm in arms {
                    self.pattern(&arm.pattern);
                    let mut vars = Vec::new();
                    arm.pattern.bound_vars(&mut vars);
                    self.with(vars.into_iter().map(|(n, _)| n), |w| w.expr(&arm.body));
                }
            }
            _ => e.kind.for_each_child(|c| self.expr(c)),
        }
    }

    fn pattern(&mut self, p: &Pattern) {
        match &p.kind {
            PatternKind::Ctor(name, args) => {
                self.ctor(name, p.span);
                args.iter().for_each(|a| self.pattern(a));
            }
            PatternKind::Tuple(ps) => ps.iter().for_each(|a| self.pattern(a)),
            PatternKind::Cons(h, t) => {
                self.pattern(h);
                self.pattern(t);
            }
            _ => {}
        }
    }
}
