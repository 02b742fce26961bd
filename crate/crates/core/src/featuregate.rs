//! Per-exercise restrictions on syntax and prelude names.
//!
//! Syntax features are checked by walking the tree; library restrictions are
//! enforced by cutting the prelude down (removal only) and reporting every
//! free name of the submission the restricted prelude cannot supply.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::runtime::Prelude;
use crate::syntax::{free_names, DeclKind, Expr, ExprKind, Program, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SyntaxFeature {
    ArrayLiteral,
    ArrayIndex,
    ArrayAssign,
    ForLoop,
    WhileLoop,
    Sequence,
    NativeDecl,
    TryRaise,
}

impl SyntaxFeature {
    pub const ALL: [SyntaxFeature; 8] = [
        SyntaxFeature::ArrayLiteral,
        SyntaxFeature::ArrayIndex,
        SyntaxFeature::ArrayAssign,
        SyntaxFeature::ForLoop,
        SyntaxFeature::WhileLoop,
        SyntaxFeature::Sequence,
        SyntaxFeature::NativeDecl,
        SyntaxFeature::TryRaise,
    ];

    /// The gate a syntax node falls under, if any.
    pub fn of_expr(kind: &ExprKind) -> Option<SyntaxFeature> {
        Some(match kind {
            ExprKind::ArrayLit(_) => SyntaxFeature::ArrayLiteral,
            ExprKind::ArrayGet { .. } => SyntaxFeature::ArrayIndex,
            ExprKind::ArrayPut { .. } => SyntaxFeature::ArrayAssign,
            ExprKind::For { .. } => SyntaxFeature::ForLoop,
            ExprKind::While { .. } => SyntaxFeature::WhileLoop,
            ExprKind::Sequence { .. } => SyntaxFeature::Sequence,
            ExprKind::Native(_) => SyntaxFeature::NativeDecl,
            ExprKind::Try { .. } | ExprKind::Raise(_) => SyntaxFeature::TryRaise,
            _ => return None,
        })
    }

    fn describe(self) -> &'static str {
        match self {
            SyntaxFeature::ArrayLiteral => "array literal",
            SyntaxFeature::ArrayIndex => "array indexing",
            SyntaxFeature::ArrayAssign => "array assignment",
            SyntaxFeature::ForLoop => "for loop",
            SyntaxFeature::WhileLoop => "while loop",
            SyntaxFeature::Sequence => "sequence expression",
            SyntaxFeature::NativeDecl => "native declaration",
            SyntaxFeature::TryRaise => "exception handling",
        }
    }
}

impl fmt::Display for SyntaxFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NameMode {
    #[default]
    DenyListed,
    AllowOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturePolicy {
    #[serde(default = "default_denied")]
    pub denied_syntax: BTreeSet<SyntaxFeature>,
    #[serde(default)]
    pub name_mode: NameMode,
    #[serde(default)]
    pub names: BTreeSet<String>,
}

fn default_denied() -> BTreeSet<SyntaxFeature> {
    use SyntaxFeature::*;
    [ArrayLiteral, ArrayIndex, ArrayAssign, ForLoop, WhileLoop, NativeDecl].into_iter().collect()
}

impl Default for FeaturePolicy {
    /// Arrays, loops and natives denied; the whole prelude available.
    fn default() -> Self {
        FeaturePolicy { denied_syntax: default_denied(), name_mode: NameMode::DenyListed, names: BTreeSet::new() }
    }
}

impl FeaturePolicy {
    /// Nothing denied at all.
    pub fn unrestricted() -> Self {
        FeaturePolicy { denied_syntax: BTreeSet::new(), name_mode: NameMode::DenyListed, names: BTreeSet::new() }
    }

    pub fn deny_names<'a>(mut self, names: impl IntoIterator<Item = &'a str>) -> Self {
        self.names.extend(names.into_iter().map(String::from));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    SyntaxViolation(SyntaxFeature),
    RestrictedName(String),
    UnknownName(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub span: Span,
    pub message: String,
}

impl Violation {
    /// Short identifier used for report case names: the feature or the name.
    pub fn subject(&self) -> String {
        match &self.kind {
            ViolationKind::SyntaxViolation(f) => f.to_string(),
            ViolationKind::RestrictedName(n) | ViolationKind::UnknownName(n) => n.clone(),
        }
    }

    /// One-line description without location, e.g. `restricted: '+'`.
    pub fn headline(&self) -> String {
        match &self.kind {
            ViolationKind::SyntaxViolation(f) => format!("forbidden syntax: {}", f.describe()),
            ViolationKind::RestrictedName(n) => format!("restricted: '{n}'"),
            ViolationKind::UnknownName(n) => format!("unknown: '{n}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("name pattern {0:?} is empty or contains whitespace")]
    InvalidPattern(String),
    #[error("name pattern {0:?} matches nothing in the prelude")]
    UnmatchedPattern(String),
    #[error("restrictions must be derived from the full prelude")]
    NotFull,
}

/// One violation per denied syntax node, in source order.
pub fn scan_syntax(p: &Program, policy: &FeaturePolicy) -> Vec<Violation> {
    let mut out = Vec::new();
    let denied = |f: SyntaxFeature| policy.denied_syntax.contains(&f);
    for d in &p.decls {
        match &d.kind {
            DeclKind::Native { .. } if denied(SyntaxFeature::NativeDecl) => {
                out.push(syntax_violation(SyntaxFeature::NativeDecl, d.span));
            }
            DeclKind::Let { expr, .. } => scan_expr(expr, &denied, &mut out),
            _ => {}
        }
    }
    out.sort_by_key(|v| v.span.lo);
    out
}

fn syntax_violation(f: SyntaxFeature, span: Span) -> Violation {
    Violation {
        kind: ViolationKind::SyntaxViolation(f),
        span,
        message: format!("{} is not allowed in this exercise", f.describe()),
    }
}

fn scan_expr(e: &Expr, denied: &dyn Fn(SyntaxFeature) -> bool, out: &mut Vec<Violation>) {
    if let Some(f) = SyntaxFeature::of_expr(&e.kind) {
        if denied(f) {
            out.push(syntax_violation(f, e.span));
        }
    }
    e.kind.for_each_child(|c| scan_expr(c, denied, out));
}

fn pattern_matches(pattern: &str, name: &str) -> bool {
    // Only `Module.*` is a wildcard; a bare `*` is the multiplication operator.
    match pattern.strip_suffix(".*") {
        Some(module) if !module.is_empty() => name.strip_prefix(module).is_some_and(|r| r.starts_with('.')),
        _ => pattern == name,
    }
}

/// Cuts `full` down according to the policy's name list.
pub fn restrict_prelude(full: &Prelude, policy: &FeaturePolicy) -> Result<Arc<Prelude>, PolicyError> {
    if !full.full {
        return Err(PolicyError::NotFull);
    }
    for pat in &policy.names {
        if pat.is_empty() || pat.chars().any(char::is_whitespace) {
            return Err(PolicyError::InvalidPattern(pat.clone()));
        }
        if !full.names().any(|n| pattern_matches(pat, n)) {
            return Err(PolicyError::UnmatchedPattern(pat.clone()));
        }
    }
    let listed = |n: &str| policy.names.iter().any(|p| pattern_matches(p, n));
    Ok(Arc::new(match policy.name_mode {
        NameMode::DenyListed => full.retain(|n| !listed(n)),
        NameMode::AllowOnly => full.retain(listed),
    }))
}

/// One violation per free name of `p` that `restricted` does not bind.
pub fn check_names(p: &Program, restricted: &Prelude, full: &Prelude) -> Vec<Violation> {
    free_names(p)
        .into_iter()
        .filter(|(n, _)| !restricted.contains(n))
        .map(|(n, span)| {
            if full.contains(&n) {
                Violation {
                    kind: ViolationKind::RestrictedName(n.to_string()),
                    span,
                    message: "identifier is restricted in this exercise".into(),
                }
            } else {
                Violation {
                    kind: ViolationKind::UnknownName(n.to_string()),
                    span,
                    message: "unbound identifier".into(),
                }
            }
        })
        .collect()
}

/// Both checks, merged in source order.
pub fn gate(p: &Program, policy: &FeaturePolicy, restricted: &Prelude, full: &Prelude) -> Vec<Violation> {
    let mut all = scan_syntax(p, policy);
    all.extend(check_names(p, restricted, full));
    all.sort_by_key(|v| v.span.lo);
    all
}
