//! Parser for both concrete PyLF styles.
//!
//! Nested calls:
//!
//! ```text
//! STOP(COUNT(JOIN('R_producing', START('Boeing Company'))))
//! ```
//!
//! Variable assignment, one statement per line, desugared by substitution:
//!
//! ```text
//! e1 = JOIN('R_producing', START('Boeing Company'), neg=True)
//! e2 = CMP('<', 'mass', 2.32e+03)
//! STOP(AND(e1, e2))
//! ```

use std::collections::HashMap;
use std::fmt;

use super::{ArgMode, CmpOp, Expr, Leaf, Mention, RelationRef, StructureError};
use crate::kg::{AttributeValue, EntityId, RelationId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    Arity {
        function: String,
        expected: &'static str,
        found: usize,
    },
    UnknownFunction(String),
    Structure(StructureError),
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the input.
    pub offset: usize,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.column)?;
        match &self.kind {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::Arity { function, expected, found } => {
                write!(f, "{function} expects {expected} argument(s), found {found}")
            }
            ParseErrorKind::UnknownFunction(name) => write!(f, "unknown function `{name}`"),
            ParseErrorKind::Structure(e) => write!(f, "{e}"),
            ParseErrorKind::Empty => write!(f, "no expression found"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(String),
    LParen,
    RParen,
    Comma,
    Assign,
    Newline,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    depth: usize,
}

fn ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | ':' | '/' | '-')
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        self.src[self.pos..].chars().nth(1)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.bump();
        }
        &self.src[start..self.pos]
    }

    fn tokens(mut self) -> Result<Vec<Token>, (ParseErrorKind, usize)> {
        let mut out = Vec::new();
        while let Some(c) = self.peek() {
            let pos = self.pos;
            let tok = match c {
                ' ' | '\t' | '\r' => {
                    self.bump();
                    continue;
                }
                '#' => {
                    self.take_while(|c| c != '\n');
                    continue;
                }
                '\n' | ';' => {
                    self.bump();
                    if self.depth > 0 {
                        continue;
                    }
                    Tok::Newline
                }
                '(' => {
                    self.bump();
                    self.depth += 1;
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    self.depth = self.depth.saturating_sub(1);
                    Tok::RParen
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                '=' => {
                    self.bump();
                    Tok::Assign
                }
                '\'' | '"' => Tok::Str(self.string(c)?),
                c if c.is_ascii_digit() || ((c == '-' || c == '+' || c == '.') && self.peek2().is_some_and(|d| d.is_ascii_digit())) => {
                    self.bump();
                    let rest = self.take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '+' | '-' | ':'));
                    Tok::Num(format!("{c}{rest}"))
                }
                c if ident_start(c) => Tok::Ident(self.take_while(ident_continue).to_string()),
                other => return Err((ParseErrorKind::Syntax(format!("unexpected character `{other}`")), pos)),
            };
            out.push(Token { tok, pos });
        }
        Ok(out)
    }

    fn string(&mut self, quote: char) -> Result<String, (ParseErrorKind, usize)> {
        let start = self.pos;
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err((ParseErrorKind::Syntax("unterminated string".into()), start)),
                Some(c) if c == quote => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some(c) => s.push(c),
                    None => return Err((ParseErrorKind::Syntax("unterminated string".into()), start)),
                },
                Some(c) => s.push(c),
            }
        }
    }
}

/// Parsed call tree before lowering to [`Expr`].
#[derive(Debug, Clone)]
enum Val {
    Call { name: String, args: Vec<Arg>, pos: usize },
    Ident(String, usize),
    Str(String, usize),
    Num(String, usize),
}

impl Val {
    fn pos(&self) -> usize {
        match self {
            Val::Call { pos, .. } | Val::Ident(_, pos) | Val::Str(_, pos) | Val::Num(_, pos) => *pos,
        }
    }
}

#[derive(Debug, Clone)]
struct Arg {
    key: Option<String>,
    val: Val,
}

enum Stmt {
    Assign(String, Val),
    Expr(Val),
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    end: usize,
}

type PResult<T> = Result<T, (ParseErrorKind, usize)>;

fn syntax<T>(msg: impl Into<String>, pos: usize) -> PResult<T> {
    Err((ParseErrorKind::Syntax(msg.into()), pos))
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.end, |t| t.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.i).cloned();
        self.i += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> PResult<()> {
        let pos = self.pos();
        match self.next() {
            Some(t) if t.tok == want => Ok(()),
            _ => syntax(format!("expected {what}"), pos),
        }
    }

    fn statements(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        loop {
            while self.peek() == Some(&Tok::Newline) {
                self.i += 1;
            }
            if self.peek().is_none() {
                return Ok(out);
            }
            let is_assign = matches!(self.peek(), Some(Tok::Ident(_))) && self.toks.get(self.i + 1).map(|t| &t.tok) == Some(&Tok::Assign);
            if is_assign {
                let Some(Token { tok: Tok::Ident(name), .. }) = self.next() else {
                    unreachable!()
                };
                self.i += 1;
                out.push(Stmt::Assign(name, self.value()?));
            } else {
                out.push(Stmt::Expr(self.value()?));
            }
            match self.peek() {
                None | Some(Tok::Newline) => {}
                _ => return syntax("expected end of statement", self.pos()),
            }
        }
    }

    fn value(&mut self) -> PResult<Val> {
        let pos = self.pos();
        match self.next().map(|t| t.tok) {
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.i += 1;
                    let args = self.args()?;
                    Ok(Val::Call { name, args, pos })
                } else {
                    Ok(Val::Ident(name, pos))
                }
            }
            Some(Tok::Str(s)) => Ok(Val::Str(s, pos)),
            Some(Tok::Num(n)) => Ok(Val::Num(n, pos)),
            Some(_) => syntax("expected a value", pos),
            None => syntax("unexpected end of input", pos),
        }
    }

    fn args(&mut self) -> PResult<Vec<Arg>> {
        let mut args = Vec::new();
        loop {
            if self.peek() == Some(&Tok::RParen) {
                self.i += 1;
                return Ok(args);
            }
            let keyed = matches!(self.peek(), Some(Tok::Ident(_))) && self.toks.get(self.i + 1).map(|t| &t.tok) == Some(&Tok::Assign);
            let key = if keyed {
                let Some(Token { tok: Tok::Ident(k), .. }) = self.next() else {
                    unreachable!()
                };
                self.i += 1;
                Some(k)
            } else {
                None
            };
            args.push(Arg { key, val: self.value()? });
            match self.peek() {
                Some(Tok::Comma) => self.i += 1,
                Some(Tok::RParen) => {}
                _ => return self.expect(Tok::RParen, "`,` or `)`").map(|_| args),
            }
        }
    }
}

struct Lowerer {
    env: HashMap<String, Expr>,
}

fn arity<T>(function: &str, expected: &'static str, found: usize, pos: usize) -> PResult<T> {
    Err((
        ParseErrorKind::Arity {
            function: function.to_string(),
            expected,
            found,
        },
        pos,
    ))
}

impl Lowerer {
    /// Lowers a value in expression position. Bare strings, ids and numbers
    /// become implicit `START` leaves.
    fn operand(&self, v: &Val) -> PResult<Expr> {
        match v {
            Val::Call { name, args, pos } => self.call(name, args, *pos),
            Val::Ident(name, pos) => match self.env.get(name) {
                Some(e) => Ok(e.clone()),
                None => self
                    .leaf(v)
                    .map(Expr::Start)
                    .or_else(|_| syntax(format!("unbound name `{name}`"), *pos)),
            },
            Val::Str(..) | Val::Num(..) => self.leaf(v).map(Expr::Start),
        }
    }

    fn leaf(&self, v: &Val) -> PResult<Leaf> {
        match v {
            Val::Str(s, pos) => match Mention::new(s) {
                Some(m) => Ok(Leaf::Mention(m)),
                None => syntax("empty mention", *pos),
            },
            Val::Ident(name, _) => Ok(Leaf::Entity(EntityId::new(name.clone()))),
            Val::Num(n, pos) => match AttributeValue::parse_bare(n) {
                Some(lit) => Ok(Leaf::Literal(lit)),
                None => syntax(format!("invalid literal `{n}`"), *pos),
            },
            Val::Call { pos, .. } => syntax("START expects a mention, id or literal", *pos),
        }
    }

    fn relation(&self, v: &Val, allow_reverse: bool) -> PResult<(RelationRef, bool)> {
        let (name, resolved, pos) = match v {
            Val::Str(s, pos) => (s.trim().to_string(), false, *pos),
            Val::Ident(s, pos) => (s.clone(), true, *pos),
            other => return syntax("expected a relation", other.pos()),
        };
        let (name, reversed) = match name.strip_prefix("R_") {
            Some(rest) if allow_reverse && !rest.is_empty() => (rest.to_string(), true),
            _ => (name, false),
        };
        if name.is_empty() {
            return syntax("empty relation", pos);
        }
        let r = if resolved {
            RelationRef::Resolved(RelationId::new(name))
        } else {
            RelationRef::Unresolved(name)
        };
        Ok((r, reversed))
    }

    fn boolean(&self, v: &Val) -> PResult<bool> {
        let text = match v {
            Val::Ident(s, _) | Val::Str(s, _) => s.as_str(),
            other => return syntax("expected True or False", other.pos()),
        };
        match text.to_ascii_lowercase().as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => syntax("expected True or False", v.pos()),
        }
    }

    fn bound(&self, v: &Val) -> PResult<AttributeValue> {
        match v {
            Val::Num(n, pos) | Val::Str(n, pos) => {
                AttributeValue::parse_bare(n).map_or_else(|| syntax(format!("`{n}` is not a literal"), *pos), Ok)
            }
            Val::Call { name, args, pos } if name.eq_ignore_ascii_case("START") && args.len() == 1 => self
                .bound(&args[0].val)
                .or_else(|_| syntax("comparison bound must be a literal", *pos)),
            other => syntax("comparison bound must be a literal", other.pos()),
        }
    }

    fn arg_mode(&self, v: &Val) -> PResult<ArgMode> {
        let text = match v {
            Val::Ident(s, _) | Val::Str(s, _) => s.to_ascii_lowercase(),
            other => return syntax("expected ARGMIN or ARGMAX", other.pos()),
        };
        match text.as_str() {
            "argmax" | "max" => Ok(ArgMode::Max),
            "argmin" | "min" => Ok(ArgMode::Min),
            _ => syntax("expected ARGMIN or ARGMAX", v.pos()),
        }
    }

    fn cmp_op(&self, v: &Val) -> PResult<CmpOp> {
        match v {
            Val::Ident(s, pos) | Val::Str(s, pos) => {
                CmpOp::from_symbol(s).map_or_else(|| syntax(format!("unknown comparison `{s}`"), *pos), Ok)
            }
            other => syntax("expected a comparison operator", other.pos()),
        }
    }

    fn call(&self, name: &str, args: &[Arg], pos: usize) -> PResult<Expr> {
        let upper = name.to_ascii_uppercase();
        let positional: Vec<&Val> = args.iter().filter(|a| a.key.is_none()).map(|a| &a.val).collect();
        for a in args {
            if let Some(k) = &a.key {
                if !(upper == "JOIN" && k == "neg") {
                    return syntax(format!("unexpected keyword argument `{k}`"), a.val.pos());
                }
            }
        }
        let n = positional.len();
        match upper.as_str() {
            "START" => match positional.as_slice() {
                [v] => match v {
                    Val::Ident(name, _) if self.env.contains_key(name) => Ok(self.env[name].clone()),
                    _ => self.leaf(v).map(Expr::Start),
                },
                _ => arity(name, "1", n, pos),
            },
            "JOIN" => {
                let keyed_neg = args.iter().find(|a| a.key.is_some()).map(|a| &a.val);
                let (rel, inner, neg) = match (positional.as_slice(), keyed_neg) {
                    ([r, i], None) => (*r, *i, None),
                    ([r, i], Some(k)) => (*r, *i, Some(k)),
                    ([r, i, k], None) => (*r, *i, Some(*k)),
                    _ => return arity(name, "2 or 3", args.len(), pos),
                };
                let (relation, reversed) = self.relation(rel, true)?;
                let negated = neg.map(|v| self.boolean(v)).transpose()?.unwrap_or(false);
                Ok(Expr::join(relation, self.operand(inner)?, reversed, negated))
            }
            "AND" => {
                if n < 2 {
                    return arity(name, "at least 2", n, pos);
                }
                let mut it = positional.iter();
                let first = self.operand(it.next().unwrap())?;
                it.try_fold(first, |acc, v| Ok(Expr::and(acc, self.operand(v)?)))
            }
            "COUNT" => match positional.as_slice() {
                [v] => Ok(Expr::count(self.operand(v)?)),
                _ => arity(name, "1", n, pos),
            },
            "ARG" => match positional.as_slice() {
                [m, inner, rel] => Ok(Expr::arg(self.arg_mode(m)?, self.operand(inner)?, self.relation(rel, false)?.0)),
                _ => arity(name, "3", n, pos),
            },
            "ARGMAX" | "ARGMIN" => match positional.as_slice() {
                [inner, rel] => {
                    let mode = if upper == "ARGMAX" { ArgMode::Max } else { ArgMode::Min };
                    Ok(Expr::arg(mode, self.operand(inner)?, self.relation(rel, false)?.0))
                }
                _ => arity(name, "2", n, pos),
            },
            "CMP" => match positional.as_slice() {
                [op, rel, b] => Ok(Expr::cmp(self.cmp_op(op)?, self.relation(rel, false)?.0, self.bound(b)?)),
                _ => arity(name, "3", n, pos),
            },
            "LT" | "LE" | "GT" | "GE" => match positional.as_slice() {
                [rel, b] => Ok(Expr::cmp(
                    CmpOp::from_symbol(&upper).unwrap(),
                    self.relation(rel, false)?.0,
                    self.bound(b)?,
                )),
                _ => arity(name, "2", n, pos),
            },
            "STOP" => match positional.as_slice() {
                [v] => Ok(Expr::stop(self.operand(v)?)),
                _ => arity(name, "1", n, pos),
            },
            _ => Err((ParseErrorKind::UnknownFunction(name.to_string()), pos)),
        }
    }
}

fn locate(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.chars().count(), |i| before[i + 1..].chars().count())
        + 1;
    (line, column)
}

/// Parses PyLF text into a structurally valid [`Expr`] rooted at `STOP`.
pub fn parse_pylf(text: &str) -> Result<Expr, ParseError> {
    let err = |(kind, offset): (ParseErrorKind, usize)| {
        let (line, column) = locate(text, offset);
        ParseError {
            kind,
            offset,
            line,
            column,
        }
    };
    let toks = Lexer {
        src: text,
        pos: 0,
        depth: 0,
    }
    .tokens()
    .map_err(err)?;
    let mut parser = Parser {
        toks,
        i: 0,
        end: text.len(),
    };
    let stmts = parser.statements().map_err(err)?;

    let mut lowerer = Lowerer { env: HashMap::new() };
    let mut result: Option<(Expr, usize)> = None;
    for stmt in &stmts {
        match stmt {
            Stmt::Assign(name, val) => {
                let e = lowerer.operand(val).map_err(err)?;
                result = Some((e.clone(), val.pos()));
                lowerer.env.insert(name.clone(), e);
            }
            Stmt::Expr(val) => result = Some((lowerer.operand(val).map_err(err)?, val.pos())),
        }
    }
    let (expr, pos) = result.ok_or_else(|| err((ParseErrorKind::Empty, text.len())))?;
    expr.check_structure().map_err(|e| err((ParseErrorKind::Structure(e), pos)))?;
    Ok(expr)
}
