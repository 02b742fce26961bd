use std::fmt;

use super::ast::Span;
use super::SyntaxError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Int(i64),
    Str(Vec<u8>),
    /// Lowercase identifier (or `_`-prefixed name).
    Ident(String),
    /// Capitalised identifier: a constructor.
    UIdent(String),
    /// Dotted name such as `List.map`.
    Qualified(String),
    Kw(Kw),
    Sym(Sym),
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kw {
    Let,
    Rec,
    In,
    Fun,
    If,
    Then,
    Else,
    Match,
    With,
    Try,
    Raise,
    While,
    Do,
    Done,
    For,
    To,
    Type,
    Of,
    Native,
    True,
    False,
    Begin,
    End,
    Mod,
}

const KEYWORDS: &[(&str, Kw)] = &[
    ("let", Kw::Let),
    ("rec", Kw::Rec),
    ("in", Kw::In),
    ("fun", Kw::Fun),
    ("if", Kw::If),
    ("then", Kw::Then),
    ("else", Kw::Else),
    ("match", Kw::Match),
    ("with", Kw::With),
    ("try", Kw::Try),
    ("raise", Kw::Raise),
    ("while", Kw::While),
    ("do", Kw::Do),
    ("done", Kw::Done),
    ("for", Kw::For),
    ("to", Kw::To),
    ("type", Kw::Type),
    ("of", Kw::Of),
    ("native", Kw::Native),
    ("true", Kw::True),
    ("false", Kw::False),
    ("begin", Kw::Begin),
    ("end", Kw::End),
    ("mod", Kw::Mod),
];

impl Kw {
    pub fn as_str(self) -> &'static str {
        KEYWORDS.iter().find(|(_, k)| *k == self).map(|(s, _)| *s).unwrap_or("?")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sym {
    Plus,
    Minus,
    Star,
    Slash,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    Caret,
    ColonColon,
    Semi,
    SemiSemi,
    Assign,
    Bang,
    AndAnd,
    OrOr,
    Arrow,
    Bar,
    Comma,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LArray,
    RArray,
    DotParen,
    LeftArrow,
    Underscore,
}

// Longest symbols first so that prefix matching picks `<=` over `<`.
const SYMBOLS: &[(&str, Sym)] = &[
    ("::", Sym::ColonColon),
    (";;", Sym::SemiSemi),
    (":=", Sym::Assign),
    ("&&", Sym::AndAnd),
    ("||", Sym::OrOr),
    ("->", Sym::Arrow),
    ("<-", Sym::LeftArrow),
    ("<>", Sym::Neq),
    ("<=", Sym::Le),
    (">=", Sym::Ge),
    ("[|", Sym::LArray),
    ("|]", Sym::RArray),
    (".(", Sym::DotParen),
    ("+", Sym::Plus),
    ("-", Sym::Minus),
    ("*", Sym::Star),
    ("/", Sym::Slash),
    ("=", Sym::Eq),
    ("<", Sym::Lt),
    (">", Sym::Gt),
    ("^", Sym::Caret),
    (";", Sym::Semi),
    ("!", Sym::Bang),
    ("|", Sym::Bar),
    (",", Sym::Comma),
    ("(", Sym::LParen),
    (")", Sym::RParen),
    ("[", Sym::LBracket),
    ("]", Sym::RBracket),
    ("_", Sym::Underscore),
];

impl Sym {
    pub fn as_str(self) -> &'static str {
        SYMBOLS.iter().find(|(_, s)| *s == self).map(|(t, _)| *t).unwrap_or("?")
    }
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Int(n) => write!(f, "integer {n}"),
            Tok::Str(_) => write!(f, "string literal"),
            Tok::Ident(s) | Tok::UIdent(s) | Tok::Qualified(s) => write!(f, "`{s}`"),
            Tok::Kw(k) => write!(f, "`{}`", k.as_str()),
            Tok::Sym(s) => write!(f, "`{}`", s.as_str()),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn mark(&self) -> (usize, u32, u32) {
        (self.pos, self.line, self.col)
    }

    /// Span from a mark to the current position; end column is inclusive.
    fn span_from(&self, (lo, line, col): (usize, u32, u32)) -> Span {
        // Tokens never end in a newline, so the end column is on the current line.
        let (end_line, end_col) = if self.pos == lo { (line, col) } else { (self.line, self.col - 1) };
        Span { start_line: line, start_col: col, end_line, end_col, lo, hi: self.pos }
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

/// Splits MiniML source into tokens. The returned list always ends in `Eof`.
pub fn tokenize(source: &[u8]) -> Result<Vec<Token>, SyntaxError> {
    let src = match std::str::from_utf8(source) {
        Ok(s) => s,
        Err(e) => {
            let valid = std::str::from_utf8(&source[..e.valid_up_to()]).unwrap_or("");
            let line = valid.matches('\n').count() as u32 + 1;
            let col = valid.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) as u32 + 1;
            let lo = e.valid_up_to();
            let span = Span { start_line: line, start_col: col, end_line: line, end_col: col, lo, hi: lo + 1 };
            return Err(SyntaxError::lex(span, "source is not valid UTF-8"));
        }
    };
    let mut cur = Cursor { src, pos: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    loop {
        skip_trivia(&mut cur)?;
        let start = cur.mark();
        let Some(c) = cur.peek() else {
            out.push(Token { tok: Tok::Eof, span: cur.span_from(start) });
            return Ok(out);
        };
        let tok = if c.is_ascii_digit() {
            lex_int(&mut cur)
        } else if c == '"' {
            lex_string(&mut cur, start)?
        } else if c.is_ascii_lowercase() || (c == '_' && cur.peek_at(1).is_some_and(is_ident_char)) {
            let word = take_word(&mut cur);
            match KEYWORDS.iter().find(|(k, _)| *k == word) {
                Some((_, kw)) => Tok::Kw(*kw),
                None => Tok::Ident(word.to_string()),
            }
        } else if c.is_ascii_uppercase() {
            lex_upper(&mut cur, start)?
        } else if let Some((text, sym)) = SYMBOLS.iter().find(|(t, _)| cur.rest().starts_with(t)) {
            for _ in 0..text.len() {
                cur.bump();
            }
            Tok::Sym(*sym)
        } else {
            cur.bump();
            return Err(SyntaxError::lex(cur.span_from(start), format!("illegal character {c:?}")));
        };
        out.push(Token { tok, span: cur.span_from(start) });
    }
}

fn skip_trivia(cur: &mut Cursor<'_>) -> Result<(), SyntaxError> {
    loop {
        match cur.peek() {
            Some(c) if c.is_whitespace() => {
                cur.bump();
            }
            Some('(') if cur.peek_at(1) == Some('*') => {
                let start = cur.mark();
                cur.bump();
                cur.bump();
                let mut depth = 1usize;
                while depth > 0 {
                    if cur.rest().starts_with("(*") {
                        cur.bump();
                        cur.bump();
                        depth += 1;
                    } else if cur.rest().starts_with("*)") {
                        cur.bump();
                        cur.bump();
                        depth -= 1;
                    } else if cur.bump().is_none() {
                        return Err(SyntaxError::lex(cur.span_from(start), "unterminated comment"));
                    }
                }
            }
            _ => return Ok(()),
        }
    }
}

fn take_word<'a>(cur: &mut Cursor<'a>) -> &'a str {
    let lo = cur.pos;
    while cur.peek().is_some_and(is_ident_char) {
        cur.bump();
    }
    &cur.src[lo..cur.pos]
}

fn lex_int(cur: &mut Cursor<'_>) -> Tok {
    let mut n: i64 = 0;
    while let Some(c) = cur.peek() {
        if let Some(d) = c.to_digit(10) {
            n = n.wrapping_mul(10).wrapping_add(d as i64);
        } else if c != '_' {
            break;
        }
        cur.bump();
    }
    Tok::Int(n)
}

fn lex_upper(cur: &mut Cursor<'_>, start: (usize, u32, u32)) -> Result<Tok, SyntaxError> {
    let lo = cur.pos;
    take_word(cur);
    let mut qualified = false;
    while cur.peek() == Some('.') && cur.peek_at(1).is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
        qualified = true;
        cur.bump();
        let seg_upper = cur.peek().is_some_and(|c| c.is_ascii_uppercase());
        take_word(cur);
        if !seg_upper {
            break;
        }
    }
    let text = &cur.src[lo..cur.pos];
    if !qualified {
        return Ok(Tok::UIdent(text.to_string()));
    }
    if text.rsplit('.').next().is_some_and(|last| last.starts_with(|c: char| c.is_ascii_uppercase())) {
        return Err(SyntaxError::lex(cur.span_from(start), format!("qualified constructor `{text}` is not supported")));
    }
    Ok(Tok::Qualified(text.to_string()))
}

fn lex_string(cur: &mut Cursor<'_>, start: (usize, u32, u32)) -> Result<Tok, SyntaxError> {
    cur.bump();
    let mut bytes = Vec::new();
    loop {
        match cur.bump() {
            None => return Err(SyntaxError::lex(cur.span_from(start), "unterminated string literal")),
            Some('"') => return Ok(Tok::Str(bytes)),
            Some('\\') => {
                let esc = match cur.bump() {
                    Some('n') => b'\n',
                    Some('t') => b'\t',
                    Some('r') => b'\r',
                    Some('b') => 8,
                    Some('0') => 0,
                    Some('\\') => b'\\',
                    Some('"') => b'"',
                    Some('\'') => b'\'',
                    Some(other) => {
                        return Err(SyntaxError::lex(
                            cur.span_from(start),
                            format!("unknown escape sequence \\{other}"),
                        ))
                    }
                    None => return Err(SyntaxError::lex(cur.span_from(start), "unterminated string literal")),
                };
                bytes.push(esc);
            }
            Some(c) => {
                let mut buf = [0u8; 4];
                bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
        }
    }
}
