//! Canonical text form and the term reader.
//!
//! Canonical text is functional notation only: variables print as `_V0..`
//! numbered by first occurrence, atoms are quoted unless they match
//! `[a-z][a-zA-Z0-9_]*`, lists use `[a,b|T]` sugar and there is no whitespace
//! outside quotes. The reader accepts that form plus a fixed operator table so
//! program files and queries can be written naturally.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{Term, VarId, DOT, NIL};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("syntax error at {position}: {message}")]
pub struct SyntaxError {
    pub position: usize,
    pub message: String,
}

fn needs_quotes(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => !chars.all(|c| c.is_ascii_alphanumeric() || c == '_'),
        _ => true,
    }
}

fn push_atom(out: &mut String, name: &str, quoted: bool) {
    if !quoted || name == NIL || !needs_quotes(name) {
        out.push_str(name);
        return;
    }
    out.push('\'');
    for c in name.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('\'');
}

/// Writes terms sharing one variable numbering.
pub struct TextWriter {
    names: HashMap<VarId, usize>,
    quoted: bool,
}

impl Default for TextWriter {
    fn default() -> Self {
        TextWriter::canonical()
    }
}

impl TextWriter {
    pub fn canonical() -> TextWriter {
        TextWriter { names: HashMap::new(), quoted: true }
    }

    /// Like canonical text but atoms are never quoted (what `write/1` prints).
    pub fn plain() -> TextWriter {
        TextWriter { names: HashMap::new(), quoted: false }
    }

    pub fn text(&mut self, t: &Term) -> String {
        let mut out = String::new();
        self.write(t, &mut out);
        out
    }

    pub fn write(&mut self, t: &Term, out: &mut String) {
        let mut closers = 0usize;
        let mut cur = t;
        loop {
            match cur {
                Term::Var(v) => {
                    let n = self.names.len();
                    let id = *self.names.entry(*v).or_insert(n);
                    let _ = write!(out, "_V{id}");
                    break;
                }
                Term::Atom(a) => {
                    push_atom(out, a, self.quoted);
                    break;
                }
                Term::Int(i) => {
                    let _ = write!(out, "{i}");
                    break;
                }
                Term::Struct(c) if c.args.len() == 2 && c.name.as_str() == DOT => {
                    self.write_list(cur, out);
                    break;
                }
                Term::Struct(c) => {
                    push_atom(out, &c.name, self.quoted);
                    out.push('(');
                    let n = c.args.len();
                    for a in &c.args[..n - 1] {
                        self.write(a, out);
                        out.push(',');
                    }
                    closers += 1;
                    cur = &c.args[n - 1];
                }
            }
        }
        for _ in 0..closers {
            out.push(')');
        }
    }

    fn write_list(&mut self, t: &Term, out: &mut String) {
        out.push('[');
        let mut cur = t;
        let mut first = true;
        loop {
            match cur {
                Term::Struct(c) if c.args.len() == 2 && c.name.as_str() == DOT => {
                    if !first {
                        out.push(',');
                    }
                    first = false;
                    self.write(&c.args[0], out);
                    cur = &c.args[1];
                }
                Term::Atom(a) if a.as_str() == NIL => break,
                tail => {
                    out.push('|');
                    self.write(tail, out);
                    break;
                }
            }
        }
        out.push(']');
    }
}

/// Canonical text of a standalone (or already resolved) term.
pub fn canonical_text(t: &Term) -> String {
    TextWriter::canonical().text(t)
}

/// Unquoted rendering used by `write/1` and `println/1`.
pub fn plain_text(t: &Term) -> String {
    TextWriter::plain().text(t)
}

// ---------------------------------------------------------------- reader

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Atom(String),
    Quoted(String),
    /// An atom immediately followed by `(`.
    Functor(String),
    Var(String),
    Int(i64),
    Open,
    Close,
    OpenList,
    CloseList,
    OpenCurly,
    CloseCurly,
    Comma,
    Bar,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    start: usize,
    end: usize,
}

const SYMBOL_CHARS: &str = "+-*/\\^<>=~:.?@#&$";

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn err(&self, position: usize, message: impl Into<String>) -> SyntaxError {
        SyntaxError { position, message: message.into() }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn char_at(&self, pos: usize) -> Option<char> {
        self.src.get(pos..).and_then(|s| s.chars().next())
    }

    fn skip_layout(&mut self) -> Result<(), SyntaxError> {
        loop {
            match self.peek_char() {
                Some(c) if c.is_whitespace() => self.pos += c.len_utf8(),
                Some('%') => {
                    while let Some(c) = self.peek_char() {
                        self.pos += c.len_utf8();
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some('/') if self.char_at(self.pos + 1) == Some('*') => {
                    let start = self.pos;
                    match self.src[self.pos + 2..].find("*/") {
                        Some(i) => self.pos += i + 4,
                        None => return Err(self.err(start, "unterminated block comment")),
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn next(&mut self) -> Result<Option<Token>, SyntaxError> {
        self.skip_layout()?;
        let start = self.pos;
        let c = match self.peek_char() {
            None => return Ok(None),
            Some(c) => c,
        };
        let tok = if c.is_ascii_digit() {
            while matches!(self.peek_char(), Some(d) if d.is_ascii_digit() || d == '_') {
                self.pos += 1;
            }
            let digits: String = self.src[start..self.pos].chars().filter(|c| *c != '_').collect();
            // keep i64::MIN reachable through the negative-literal path
            match digits.parse::<i128>() {
                Ok(v) if v <= i64::MAX as i128 + 1 => Tok::Int(v as i64),
                _ => return Err(self.err(start, "integer out of range")),
            }
        } else if c == '_' || c.is_uppercase() {
            while matches!(self.peek_char(), Some(d) if d.is_alphanumeric() || d == '_') {
                self.pos += self.peek_char().unwrap().len_utf8();
            }
            Tok::Var(self.src[start..self.pos].to_string())
        } else if c.is_alphabetic() {
            while matches!(self.peek_char(), Some(d) if d.is_alphanumeric() || d == '_') {
                self.pos += self.peek_char().unwrap().len_utf8();
            }
            self.functor_or(Tok::Atom(self.src[start..self.pos].to_string()))
        } else if c == '\'' || c == '"' {
            let name = self.quoted(c)?;
            self.functor_or(Tok::Quoted(name))
        } else {
            self.pos += c.len_utf8();
            match c {
                '(' => Tok::Open,
                ')' => Tok::Close,
                '[' => {
                    if self.peek_char() == Some(']') {
                        self.pos += 1;
                        self.functor_or(Tok::Atom(NIL.to_string()))
                    } else {
                        Tok::OpenList
                    }
                }
                ']' => Tok::CloseList,
                '{' => Tok::OpenCurly,
                '}' => Tok::CloseCurly,
                ',' => Tok::Comma,
                '|' => {
                    if self.peek_char() == Some('|') {
                        self.pos += 1;
                        self.functor_or(Tok::Atom("||".to_string()))
                    } else {
                        Tok::Bar
                    }
                }
                '!' | ';' => self.functor_or(Tok::Atom(c.to_string())),
                c if SYMBOL_CHARS.contains(c) => {
                    if c == '.' {
                        let after = self.peek_char();
                        if after.is_none() || after.map(|a| a.is_whitespace() || a == '%').unwrap_or(false) {
                            return Ok(Some(Token { tok: Tok::End, start, end: self.pos }));
                        }
                    }
                    while matches!(self.peek_char(), Some(d) if SYMBOL_CHARS.contains(d)) {
                        self.pos += 1;
                    }
                    self.functor_or(Tok::Atom(self.src[start..self.pos].to_string()))
                }
                _ => return Err(self.err(start, format!("unexpected character {c:?}"))),
            }
        };
        Ok(Some(Token { tok, start, end: self.pos }))
    }

    fn functor_or(&self, tok: Tok) -> Tok {
        if self.peek_char() == Some('(') {
            match tok {
                Tok::Atom(s) | Tok::Quoted(s) => Tok::Functor(s),
                other => other,
            }
        } else {
            tok
        }
    }

    fn quoted(&mut self, q: char) -> Result<String, SyntaxError> {
        let start = self.pos;
        self.pos += 1;
        let mut out = String::new();
        loop {
            let c = self.peek_char().ok_or_else(|| self.err(start, "unterminated quoted atom"))?;
            self.pos += c.len_utf8();
            if c == q {
                if self.peek_char() == Some(q) {
                    self.pos += 1;
                    out.push(q);
                    continue;
                }
                return Ok(out);
            }
            if c == '\\' {
                let e = self.peek_char().ok_or_else(|| self.err(start, "unterminated escape"))?;
                self.pos += e.len_utf8();
                out.push(match e {
                    'n' => '\n',
                    't' => '\t',
                    'r' => '\r',
                    '0' => '\0',
                    other => other,
                });
            } else {
                out.push(c);
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Assoc {
    Xfx,
    Xfy,
    Yfx,
}

fn infix_op(name: &str) -> Option<(u32, Assoc)> {
    use Assoc::*;
    Some(match name {
        ":-" | "::-" | "-->" => (1200, Xfx),
        ";" | "|" => (1100, Xfy),
        "->" => (1050, Xfy),
        "," => (1000, Xfy),
        "=>>" => (950, Xfy),
        "=" | "\\=" | "==" | "\\==" | "@<" | "@>" | "@=<" | "@>=" | "=.." | "is" | "=:=" | "=\\=" | "<" | ">"
        | "=<" | ">=" => (700, Xfx),
        ":" => (200, Xfy),
        "+" | "-" | "/\\" | "\\/" => (500, Yfx),
        "*" | "/" | "//" | "mod" | "rem" | "<<" | ">>" => (400, Yfx),
        "**" => (200, Xfx),
        "^" => (200, Xfy),
        _ => return None,
    })
}

/// Prefix operators: priority and whether the operand may have equal priority (fy).
fn prefix_op(name: &str) -> Option<(u32, bool)> {
    Some(match name {
        ":-" | "?-" => (1200, false),
        "\\+" => (900, true),
        "-" | "+" | "\\" => (200, true),
        _ => return None,
    })
}

/// Reads terms from source text, one clause (terminated by `.`) at a time.
/// A term together with its named variables.
pub type Named = (Term, Vec<(String, VarId)>);

pub struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<Token>,
    names: Vec<(String, VarId)>,
    next_var: u32,
}

impl<'a> Parser<'a> {
    pub fn new(src: &'a str) -> Parser<'a> {
        Parser { lexer: Lexer { src, pos: 0 }, peeked: None, names: Vec::new(), next_var: 0 }
    }

    fn peek(&mut self) -> Result<Option<&Token>, SyntaxError> {
        if self.peeked.is_none() {
            self.peeked = self.lexer.next()?;
        }
        Ok(self.peeked.as_ref())
    }

    fn bump(&mut self) -> Result<Option<Token>, SyntaxError> {
        self.peek()?;
        Ok(self.peeked.take())
    }

    fn position(&self) -> usize {
        self.peeked.as_ref().map(|t| t.start).unwrap_or(self.lexer.pos)
    }

    fn err(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError { position: self.position(), message: message.into() }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), SyntaxError> {
        match self.bump()? {
            Some(t) if t.tok == want => Ok(()),
            Some(t) => Err(SyntaxError { position: t.start, message: format!("expected {what}") }),
            None => Err(self.err(format!("expected {what}, found end of input"))),
        }
    }

    fn var(&mut self, name: &str) -> Term {
        if name == "_" {
            let id = VarId(self.next_var);
            self.next_var += 1;
            return Term::Var(id);
        }
        if let Some((_, id)) = self.names.iter().find(|(n, _)| n == name) {
            return Term::Var(*id);
        }
        let id = VarId(self.next_var);
        self.next_var += 1;
        self.names.push((name.to_string(), id));
        Term::Var(id)
    }

    /// Next clause-terminated term together with its named variables, or
    /// `None` at end of input.
    pub fn next_clause(&mut self) -> Option<Result<Named, SyntaxError>> {
        self.names.clear();
        self.next_var = 0;
        match self.peek() {
            Ok(None) => return None,
            Err(e) => return Some(Err(e)),
            Ok(Some(_)) => {}
        }
        let res = (|| {
            let t = self.parse(1200)?.0;
            match self.bump()? {
                Some(Token { tok: Tok::End, .. }) => Ok((t, std::mem::take(&mut self.names))),
                Some(tok) => Err(SyntaxError { position: tok.start, message: "operator expected".into() }),
                None => Err(self.err("missing terminating '.'")),
            }
        })();
        if res.is_err() {
            self.recover();
        }
        Some(res)
    }

    fn recover(&mut self) {
        loop {
            match self.bump() {
                Ok(Some(Token { tok: Tok::End, .. })) | Ok(None) => return,
                Ok(Some(_)) => {}
                Err(_) => {
                    // skip the offending character
                    if let Some(c) = self.lexer.peek_char() {
                        self.lexer.pos += c.len_utf8();
                    } else {
                        return;
                    }
                }
            }
        }
    }

    /// A single term with an optional terminating `.`; trailing input is an error.
    pub fn whole_term(mut self) -> Result<Named, SyntaxError> {
        if self.peek()?.is_none() {
            return Err(self.err("empty input"));
        }
        let t = self.parse(1200)?.0;
        match self.bump()? {
            None => {}
            Some(Token { tok: Tok::End, .. }) => {
                if let Some(extra) = self.bump()? {
                    return Err(SyntaxError { position: extra.start, message: "unexpected input after term".into() });
                }
            }
            Some(tok) => return Err(SyntaxError { position: tok.start, message: "operator expected".into() }),
        }
        Ok((t, self.names))
    }

    fn starts_term(tok: &Tok) -> bool {
        match tok {
            Tok::Atom(name) => infix_op(name).is_none() || prefix_op(name).is_some(),
            Tok::Close | Tok::CloseList | Tok::CloseCurly | Tok::Comma | Tok::Bar | Tok::End => false,
            _ => true,
        }
    }

    fn parse(&mut self, max: u32) -> Result<(Term, u32), SyntaxError> {
        let (mut left, mut left_prec) = self.parse_primary(max)?;
        loop {
            let (name, prec, assoc) = match self.peek()? {
                Some(Token { tok: Tok::Atom(name), .. }) => match infix_op(name) {
                    Some((p, a)) => (name.clone(), p, a),
                    None => break,
                },
                Some(Token { tok: Tok::Comma, .. }) => (",".to_string(), 1000, Assoc::Xfy),
                Some(Token { tok: Tok::Bar, .. }) => (";".to_string(), 1100, Assoc::Xfy),
                _ => break,
            };
            if prec > max {
                break;
            }
            let (left_max, right_max) = match assoc {
                Assoc::Xfx => (prec - 1, prec - 1),
                Assoc::Xfy => (prec - 1, prec),
                Assoc::Yfx => (prec, prec - 1),
            };
            if left_prec > left_max {
                break;
            }
            self.bump()?;
            let (right, _) = self.parse(right_max)?;
            left = Term::compound(name.as_str(), vec![left, right]);
            left_prec = prec;
        }
        Ok((left, left_prec))
    }

    fn parse_arglist(&mut self) -> Result<Vec<Term>, SyntaxError> {
        let mut args = vec![self.parse(999)?.0];
        loop {
            match self.bump()? {
                Some(Token { tok: Tok::Comma, .. }) => args.push(self.parse(999)?.0),
                Some(Token { tok: Tok::Close, .. }) => return Ok(args),
                Some(t) => return Err(SyntaxError { position: t.start, message: "expected ',' or ')'".into() }),
                None => return Err(self.err("unterminated argument list")),
            }
        }
    }

    fn parse_primary(&mut self, max: u32) -> Result<(Term, u32), SyntaxError> {
        let tok = match self.bump()? {
            Some(t) => t,
            None => return Err(self.err("unexpected end of input")),
        };
        match tok.tok {
            Tok::Int(v) => Ok((Term::Int(v), 0)),
            Tok::Var(name) => Ok((self.var(&name), 0)),
            Tok::Open => {
                let (t, _) = self.parse(1200)?;
                self.expect(Tok::Close, "')'")?;
                Ok((t, 0))
            }
            Tok::OpenCurly => {
                let (t, _) = self.parse(1200)?;
                self.expect(Tok::CloseCurly, "'}'")?;
                Ok((Term::compound("{}", vec![t]), 0))
            }
            Tok::OpenList => {
                let mut items = vec![self.parse(999)?.0];
                loop {
                    match self.bump()? {
                        Some(Token { tok: Tok::Comma, .. }) => items.push(self.parse(999)?.0),
                        Some(Token { tok: Tok::Bar, .. }) => {
                            let tail = self.parse(999)?.0;
                            self.expect(Tok::CloseList, "']'")?;
                            return Ok((Term::list_with_tail(items, tail), 0));
                        }
                        Some(Token { tok: Tok::CloseList, .. }) => return Ok((Term::list(items), 0)),
                        Some(t) => {
                            return Err(SyntaxError { position: t.start, message: "expected ',', '|' or ']'".into() })
                        }
                        None => return Err(self.err("unterminated list")),
                    }
                }
            }
            Tok::Functor(name) => {
                self.expect(Tok::Open, "'('")?;
                let args = self.parse_arglist()?;
                Ok((Term::compound(name.as_str(), args), 0))
            }
            Tok::Quoted(name) => Ok((Term::atom(&name), 0)),
            Tok::Atom(name) => {
                // negative integer literal: '-' directly followed by digits
                if name == "-" {
                    if let Some(Token { tok: Tok::Int(v), start, .. }) = self.peek()?.cloned() {
                        if start == tok.end {
                            self.bump()?;
                            return Ok((Term::Int(v.wrapping_neg()), 0));
                        }
                    }
                }
                if let Some(&(prec, fy)) = prefix_op(&name).as_ref() {
                    let next_starts = match self.peek()? {
                        Some(t) => Self::starts_term(&t.tok),
                        None => false,
                    };
                    if next_starts {
                        let prec = if prec > max { 999.min(max) } else { prec };
                        let arg_max = if fy { prec } else { prec.saturating_sub(1) };
                        let (arg, _) = self.parse(arg_max)?;
                        return Ok((Term::compound(name.as_str(), vec![arg]), prec));
                    }
                }
                Ok((Term::atom(&name), 0))
            }
            Tok::Close | Tok::CloseList | Tok::CloseCurly | Tok::Comma | Tok::Bar | Tok::End => {
                Err(SyntaxError { position: tok.start, message: "unexpected token".into() })
            }
        }
    }
}

/// Parses exactly one term (an optional final `.` is allowed).
pub fn parse_term(src: &str) -> Result<Term, SyntaxError> {
    Ok(Parser::new(src).whole_term()?.0)
}

/// Like [`parse_term`] but also returns the named variables in order of first occurrence.
pub fn parse_term_with_names(src: &str) -> Result<(Term, Vec<(String, VarId)>), SyntaxError> {
    Parser::new(src).whole_term()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::is_variant;

    #[test]
    fn canonical_examples() {
        let t = parse_term("f(X, 'Hello', [1,2|Y])").unwrap();
        assert_eq!(canonical_text(&t), "f(_V0,'Hello',[1,2|_V1])");
        let t = parse_term("app([],_V0,_V0)").unwrap();
        assert!(t.args()[1].identical(&t.args()[2]));
        assert_eq!(canonical_text(&t), "app([],_V0,_V0)");
    }

    #[test]
    fn operators_and_quoting() {
        let t = parse_term("p(X) :- q(X), \\+ r, X is 1 + 2 * 3").unwrap();
        assert_eq!(canonical_text(&t), "':-'(p(_V0),','(q(_V0),','('\\\\+'(r),is(_V0,'+'(1,'*'(2,3))))))");
        let back = parse_term(&canonical_text(&t)).unwrap();
        assert!(is_variant(&t, &back));
        assert_eq!(canonical_text(&parse_term("a - -1").unwrap()), "'-'(a,-1)");
        assert_eq!(canonical_text(&parse_term("a - 1").unwrap()), "'-'(a,1)");
        assert_eq!(canonical_text(&parse_term("- 1").unwrap()), "'-'(1)");
        assert_eq!(canonical_text(&parse_term("'it''s'").unwrap()), "'it\\'s'");
        assert_eq!(canonical_text(&parse_term("f(-)").unwrap()), "f('-')");
        assert_eq!(
            canonical_text(&parse_term("host(H) =>> port(P) =>> g, fail ; true").unwrap()),
            "';'(','('=>>'(host(_V0),'=>>'(port(_V1),g)),fail),true)"
        );
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let e = parse_term("f(a,").unwrap_err();
        assert!(e.position >= 4, "{e:?}");
        assert!(parse_term("f(a) g").is_err());
        assert!(parse_term("'abc").is_err());
    }

    #[test]
    fn program_reader_splits_clauses() {
        let src = "app([],Ys,Ys).\n% comment\napp([X|Xs],Ys,[X|Zs]) :- app(Xs,Ys,Zs).\n";
        let mut p = Parser::new(src);
        let (a, _) = p.next_clause().unwrap().unwrap();
        let (b, names) = p.next_clause().unwrap().unwrap();
        assert!(p.next_clause().is_none());
        assert_eq!(canonical_text(&a), "app([],_V0,_V0)");
        assert!(b.is_struct(":-", 2));
        assert_eq!(names.len(), 4);
    }
}
