use std::fmt;
use std::sync::Arc;

/// Identifier as stored in the tree and in runtime environments.
pub type Name = Arc<str>;

/// Source region of a node. Lines and columns are 1-based, columns count
/// characters. `lo`/`hi` are the byte offsets of the same region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
    pub lo: usize,
    pub hi: usize,
}

impl Span {
    /// Smallest span covering both `self` and `other`.
    pub fn to(self, other: Span) -> Span {
        let (first, last) = if self.lo <= other.lo { (self, other) } else { (other, self) };
        let end = if last.hi >= first.hi { last } else { first };
        Span {
            start_line: first.start_line,
            start_col: first.start_col,
            end_line: end.end_line,
            end_col: end.end_col,
            lo: first.lo,
            hi: end.hi,
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start_line, self.start_col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
    height: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    Str(Vec<u8>),
    Unit,
    Var(Name),
    Lambda { param: Name, body: Arc<Expr> },
    Apply { func: Arc<Expr>, arg: Arc<Expr> },
    Let { recursive: bool, name: Name, bound: Arc<Expr>, body: Arc<Expr> },
    If { cond: Arc<Expr>, then_branch: Arc<Expr>, else_branch: Arc<Expr> },
    Match { scrutinee: Arc<Expr>, arms: Vec<Arm> },
    Tuple(Vec<Arc<Expr>>),
    List(Vec<Arc<Expr>>),
    Cons { head: Arc<Expr>, tail: Arc<Expr> },
    Ctor { name: Name, args: Vec<Arc<Expr>> },
    Sequence { first: Arc<Expr>, second: Arc<Expr> },
    While { cond: Arc<Expr>, body: Arc<Expr> },
    For { var: Name, from: Arc<Expr>, to: Arc<Expr>, body: Arc<Expr> },
    ArrayLit(Vec<Arc<Expr>>),
    ArrayGet { array: Arc<Expr>, index: Arc<Expr> },
    ArrayPut { array: Arc<Expr>, index: Arc<Expr>, value: Arc<Expr> },
    Try { body: Arc<Expr>, arms: Vec<Arm> },
    Raise(Arc<Expr>),
    Native(Name),
    AndAlso(Arc<Expr>, Arc<Expr>),
    OrElse(Arc<Expr>, Arc<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub pattern: Pattern,
    pub body: Arc<Expr>,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Expr {
        let mut height = 0;
        kind.for_each_child(|c| height = height.max(c.height));
        for arm in kind.arms() {
            height = height.max(arm.pattern.height);
        }
        Expr { kind, span, height: height + 1 }
    }

    /// Length of the longest root-to-leaf path, counting this node.
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Copy of the tree with every span zeroed, for span-insensitive comparison.
    pub fn without_spans(&self) -> Expr {
        use ExprKind::*;
        let s = |e: &Arc<Expr>| Arc::new(e.without_spans());
        let sv = |v: &[Arc<Expr>]| v.iter().map(s).collect::<Vec<_>>();
        let sa = |arms: &[Arm]| {
            arms.iter().map(|a| Arm { pattern: a.pattern.without_spans(), body: s(&a.body) }).collect::<Vec<_>>()
        };
        let kind = match &self.kind {
            Int(n) => Int(*n),
            Bool(b) => Bool(*b),
            Str(b) => Str(b.clone()),
            Unit => Unit,
            Var(n) => Var(n.clone()),
            Native(n) => Native(n.clone()),
            Lambda { param, body } => Lambda { param: param.clone(), body: s(body) },
            Apply { func, arg } => Apply { func: s(func), arg: s(arg) },
            Let { recursive, name, bound, body } => {
                Let { recursive: *recursive, name: name.clone(), bound: s(bound), body: s(body) }
            }
            If { cond, then_branch, else_branch } => {
                If { cond: s(cond), then_branch: s(then_branch), else_branch: s(else_branch) }
            }
            Match { scrutinee, arms } => Match { scrutinee: s(scrutinee), arms: sa(arms) },
            Tuple(v) => Tuple(sv(v)),
            List(v) => List(sv(v)),
            ArrayLit(v) => ArrayLit(sv(v)),
            Cons { head, tail } => Cons { head: s(head), tail: s(tail) },
            Ctor { name, args } => Ctor { name: name.clone(), args: sv(args) },
            Sequence { first, second } => Sequence { first: s(first), second: s(second) },
            While { cond, body } => While { cond: s(cond), body: s(body) },
            For { var, from, to, body } => For { var: var.clone(), from: s(from), to: s(to), body: s(body) },
            ArrayGet { array, index } => ArrayGet { array: s(array), index: s(index) },
            ArrayPut { array, index, value } => ArrayPut { array: s(array), index: s(index), value: s(value) },
            Try { body, arms } => Try { body: s(body), arms: sa(arms) },
            Raise(e) => Raise(s(e)),
            AndAlso(a, b) => AndAlso(s(a), s(b)),
            OrElse(a, b) => OrElse(s(a), s(b)),
        };
        Expr::new(kind, Span::default())
    }
}

impl ExprKind {
    /// Visits direct sub-expressions in source order (arm bodies included).
    pub fn for_each_child(&self, mut f: impl FnMut(&Arc<Expr>)) {
        use ExprKind::*;
        match self {
            Int(_) | Bool(_) | Str(_) | Unit | Var(_) | Native(_) => {}
            Lambda { body, .. } => f(body),
            Apply { func, arg } => {
                f(func);
                f(arg)
            }
            Let { bound, body, .. } => {
                f(bound);
                f(body)
            }
            If { cond, then_branch, else_branch } => {
                f(cond);
                f(then_branch);
                f(else_branch)
            }
            Match { scrutinee: body, arms } | Try { body, arms } => {
                f(body);
                arms.iter().for_each(|a| f(&a.body))
            }
            Tuple(v) | List(v) | ArrayLit(v) => v.iter().for_each(f),
            Ctor { args, .. } => args.iter().for_each(f),
            Cons { head: a, tail: b }
            | Sequence { first: a, second: b }
            | While { cond: a, body: b }
            | ArrayGet { array: a, index: b }
            | AndAlso(a, b)
            | OrElse(a, b) => {
                f(a);
                f(b)
            }
            For { from, to, body, .. } => {
                f(from);
                f(to);
                f(body)
            }
            ArrayPut { array, index, value } => {
                f(array);
                f(index);
                f(value)
            }
            Raise(e) => f(e),
        }
    }

    fn arms(&self) -> &[Arm] {
        match self {
            ExprKind::Match { arms, .. } | ExprKind::Try { arms, .. } => arms,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub kind: PatternKind,
    pub span: Span,
    height: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatternKind {
    Wildcard,
    Var(Name),
    Int(i64),
    Bool(bool),
    Str(Vec<u8>),
    Unit,
    Tuple(Vec<Pattern>),
    Nil,
    Cons(Box<Pattern>, Box<Pattern>),
    Ctor(Name, Vec<Pattern>),
}

impl Pattern {
    pub fn new(kind: PatternKind, span: Span) -> Pattern {
        let height = match &kind {
            PatternKind::Tuple(ps) | PatternKind::Ctor(_, ps) => ps.iter().map(|p| p.height).max().unwrap_or(0),
            PatternKind::Cons(h, t) => h.height.max(t.height),
            _ => 0,
        };
        Pattern { kind, span, height: height + 1 }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn without_spans(&self) -> Pattern {
        let kind = match &self.kind {
            PatternKind::Tuple(ps) => PatternKind::Tuple(ps.iter().map(Pattern::without_spans).collect()),
            PatternKind::Ctor(n, ps) => PatternKind::Ctor(n.clone(), ps.iter().map(Pattern::without_spans).collect()),
            PatternKind::Cons(h, t) => PatternKind::Cons(Box::new(h.without_spans()), Box::new(t.without_spans())),
            other => other.clone(),
        };
        Pattern::new(kind, Span::default())
    }

    /// Variables bound by this pattern, left to right.
    pub fn bound_vars(&self, out: &mut Vec<(Name, Span)>) {
        match &self.kind {
            PatternKind::Var(n) => out.push((n.clone(), self.span)),
            PatternKind::Tuple(ps) | PatternKind::Ctor(_, ps) => ps.iter().for_each(|p| p.bound_vars(out)),
            PatternKind::Cons(h, t) => {
                h.bound_vars(out);
                t.bound_vars(out)
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtorDecl {
    pub name: Name,
    pub arity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decl {
    pub kind: DeclKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeclKind {
    Type { name: Name, ctors: Vec<CtorDecl> },
    Let { recursive: bool, name: Name, expr: Arc<Expr> },
    Native { name: Name, primitive: Name },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub source_name: String,
}

impl Program {
    pub fn without_spans(&self) -> Program {
        let decls = self
            .decls
            .iter()
            .map(|d| Decl {
                span: Span::default(),
                kind: match &d.kind {
                    DeclKind::Let { recursive, name, expr } => DeclKind::Let {
                        recursive: *recursive,
                        name: name.clone(),
                        expr: Arc::new(expr.without_spans()),
                    },
                    other => other.clone(),
                },
            })
            .collect();
        Program { decls, source_name: self.source_name.clone() }
    }

    /// Constructors declared by `type` declarations anywhere in the program.
    pub fn declared_ctors(&self) -> impl Iterator<Item = &CtorDecl> {
        self.decls.iter().flat_map(|d| match &d.kind {
            DeclKind::Type { ctors, .. } => ctors.as_slice(),
            _ => &[],
        })
    }

    /// Names bound at top level by `let` and `native` declarations, in order.
    pub fn top_level_names(&self) -> impl Iterator<Item = &Name> {
        self.decls.iter().filter_map(|d| match &d.kind {
            DeclKind::Let { name, .. } | DeclKind::Native { name, .. } => Some(name),
            DeclKind::Type { .. } => None,
        })
    }
}
