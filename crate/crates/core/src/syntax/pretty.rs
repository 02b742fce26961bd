use super::ast::*;

// Every compound sub-expression is parenthesised, so printing never has to
// reason about precedence and the output always re-parses to the same tree.

pub fn pretty_program(p: &Program) -> String {
    let mut out = String::new();
    for d in &p.decls {
        match &d.kind {
            DeclKind::Type { name, ctors } => {
                out.push_str(&format!("type {name} ="));
                for (i, c) in ctors.iter().enumerate() {
                    out.push_str(if i == 0 { " " } else { " | " });
                    out.push_str(&c.name);
                    if c.arity > 0 {
                        out.push_str(" of ");
                        out.push_str(&vec!["_"; c.arity].join(" * "));
                    }
                }
            }
            DeclKind::Let { recursive, name, expr } => {
                let rec = if *recursive { "rec " } else { "" };
                out.push_str(&format!("let {rec}{name} = {}", pretty_expr(expr)));
            }
            DeclKind::Native { name, primitive } => {
                out.push_str(&format!("native {name} = {}", quote(primitive.as_bytes())));
            }
        }
        out.push('\n');
    }
    out
}

fn quote(bytes: &[u8]) -> String {
    let mut s = String::from("\"");
    for c in String::from_utf8_lossy(bytes).chars() {
        match c {
            '"' => s.push_str("\\\""),
            '\\' => s.push_str("\\\\"),
            '\n' => s.push_str("\\n"),
            '\t' => s.push_str("\\t"),
            '\r' => s.push_str("\\r"),
            '\u{8}' => s.push_str("\\b"),
            '\0' => s.push_str("\\0"),
            c => s.push(c),
        }
    }
    s.push('"');
    s
}

fn is_operator(name: &str) -> bool {
    name == "mod" || !name.starts_with(|c: char| c.is_alphanumeric() || c == '_')
}

const INFIX: &[&str] = &["+", "-", "*", "/", "mod", "=", "<>", "<", "<=", ">", ">=", "^", ":="];

pub fn pretty_expr(e: &Expr) -> String {
    use ExprKind::*;
    match &e.kind {
        Int(n) if *n < 0 => format!("(-{})", n.unsigned_abs()),
        Int(n) => n.to_string(),
        Bool(b) => b.to_string(),
        Str(s) => quote(s),
        Unit => "()".into(),
        Var(n) if is_operator(n) => format!("( {n} )"),
        Var(n) => n.to_string(),
        Native(n) => format!("(native {})", quote(n.as_bytes())),
        Lambda { param, body } => format!("(fun {param} -> {})", pretty_expr(body)),
        Apply { func, arg } => {
            if let Apply { func: op, arg: lhs } = &func.kind {
                if let Var(name) = &op.kind {
                    if INFIX.contains(&name.as_ref()) {
                        return format!("({} {name} {})", pretty_expr(lhs), pretty_expr(arg));
                    }
                }
            }
            if let Var(name) = &func.kind {
                match name.as_ref() {
                    "!" => return format!("(!{})", pretty_expr(arg)),
                    "~-" => return format!("(- ({}))", pretty_expr(arg)),
                    _ => {}
                }
            }
            format!("({} {})", pretty_expr(func), pretty_expr(arg))
        }
        Let { recursive, name, bound, body } => {
            let rec = if *recursive { "rec " } else { "" };
            format!("(let {rec}{name} = {} in {})", pretty_expr(bound), pretty_expr(body))
        }
        If { cond, then_branch, else_branch } => {
            format!("(if {} then {} else {})", pretty_expr(cond), pretty_expr(then_branch), pretty_expr(else_branch))
        }
        Match { scrutinee, arms } => format!("(match {} with {})", pretty_expr(scrutinee), pretty_arms(arms)),
        Try { body, arms } => format!("(try {} with {})", pretty_expr(body), pretty_arms(arms)),
        Tuple(items) => format!("({})", join(items, ", ")),
        List(items) => format!("[{}]", join(items, "; ")),
        ArrayLit(items) => format!("[|{}|]", join(items, "; ")),
        Cons { head, tail } => format!("({} :: {})", pretty_expr(head), pretty_expr(tail)),
        Ctor { name, args } => match args.len() {
            0 => name.to_string(),
            1 => format!("({name} {})", pretty_expr(&args[0])),
            _ => format!("({name} ({}))", join(args, ", ")),
        },
        Sequence { first, second } => format!("({}; {})", pretty_expr(first), pretty_expr(second)),
        While { cond, body } => format!("(while {} do {} done)", pretty_expr(cond), pretty_expr(body)),
        For { var, from, to, body } => {
            format!("(for {var} = {} to {} do {} done)", pretty_expr(from), pretty_expr(to), pretty_expr(body))
        }
        ArrayGet { array, index } => format!("({}.({}))", pretty_expr(array), pretty_expr(index)),
        ArrayPut { array, index, value } => {
            format!("({}.({}) <- {})", pretty_expr(array), pretty_expr(index), pretty_expr(value))
        }
        Raise(arg) => format!("(raise {})", pretty_expr(arg)),
        AndAlso(a, b) => format!("({} && {})", pretty_expr(a), pretty_expr(b)),
        OrElse(a, b) => format!("({} || {})", pretty_expr(a), pretty_expr(b)),
    }
}

fn join(items: &[std::sync::Arc<Expr>], sep: &str) -> String {
    items.iter().map(|e| pretty_expr(e)).collect::<Vec<_>>().join(sep)
}

fn pretty_arms(arms: &[Arm]) -> String {
    arms.iter()
        .map(|a| format!("{} -> {}", pretty_pattern(&a.pattern), pretty_expr(&a.body)))
        .collect::<Vec<_>>()
        .join(" | ")
}

pub fn pretty_pattern(p: &Pattern) -> String {
    match &p.kind {
        PatternKind::Wildcard => "_".into(),
        PatternKind::Var(n) => n.to_string(),
        PatternKind::Int(n) if *n < 0 => format!("(-{})", n.unsigned_abs()),
        PatternKind::Int(n) => n.to_string(),
        PatternKind::Bool(b) => b.to_string(),
        PatternKind::Str(s) => quote(s),
        PatternKind::Unit => "()".into(),
        PatternKind::Nil => "[]".into(),
        PatternKind::Tuple(ps) => {
            format!("({})", ps.iter().map(pretty_pattern).collect::<Vec<_>>().join(", "))
        }
        PatternKind::Cons(h, t) => format!("({} :: {})", pretty_pattern(h), pretty_pattern(t)),
        PatternKind::Ctor(name, args) => match args.len() {
            0 => name.to_string(),
            1 => format!("({name} {})", pretty_pattern(&args[0])),
            _ => format!("({name} ({}))", args.iter().map(pretty_pattern).collect::<Vec<_>>().join(", ")),
        },
    }
}
