//! Line-oriented text formats for schemata, dependencies and instances.
//!
//! ```text
//! # schema
//! predicate works_in/2
//! # dependencies
//! key works_in {1}
//! inclusion works_in[1] <= employee[1]
//! # instance
//! works_in(m, d)
//! ```
//!
//! `#` starts a comment. Constants are identifiers or double-quoted strings.
//! The canonical writers sort lines by the fact and dependency sort keys.

use std::fmt::Write as _;

use thiserror::Error;

use crate::constant::{is_ident_char, is_ident_start, is_reserved_name, Constant};
use crate::model::{
    Atom, Database, DependencyRef, DependencySet, InclusionDependency, KeyDependency, ModelError, Predicate, Schema,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Pos {
    line: usize,
    column: usize,
}

impl Pos {
    pub(crate) fn error(self, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column: self.column, message: message.into() }
    }

    pub(crate) fn model(self, err: ModelError) -> ParseError {
        self.error(err.to_string())
    }
}

/// A token produced for a constant or identifier position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Word {
    Ident(String),
    Quoted(String),
}

pub(crate) struct Cursor<'a> {
    rest: std::str::Chars<'a>,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Cursor { rest: src.chars(), line: 1, column: 1 }
    }

    pub(crate) fn pos(&self) -> Pos {
        Pos { line: self.line, column: self.column }
    }

    pub(crate) fn peek(&self) -> Option<char> {
        self.rest.clone().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.rest.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_comment(&mut self) {
        while let Some(c) = self.peek() {
            if c == '\n' {
                break;
            }
            self.bump();
        }
    }

    /// Skips spaces and comments on the current line.
    pub(crate) fn skip_blank(&mut self) {
        while let Some(c) = self.peek() {
            match c {
                ' ' | '\t' | '\r' => {
                    self.bump();
                }
                '#' => self.skip_comment(),
                _ => break,
            }
        }
    }

    /// Skips whitespace, newlines and comments.
    pub(crate) fn skip_ws(&mut self) {
        loop {
            self.skip_blank();
            if self.peek() == Some('\n') {
                self.bump();
            } else {
                break;
            }
        }
    }

    pub(crate) fn at_eof(&self) -> bool {
        self.peek().is_none()
    }

    /// Consumes the end of a line-oriented statement.
    pub(crate) fn end_of_line(&mut self) -> Result<(), ParseError> {
        self.skip_blank();
        match self.peek() {
            None => Ok(()),
            Some('\n') => {
                self.bump();
                Ok(())
            }
            Some(c) => Err(self.pos().error(format!("unexpected `{c}` at end of statement"))),
        }
    }

    pub(crate) fn eat(&mut self, c: char) -> bool {
        self.skip_blank();
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{c}`")))
        }
    }

    pub(crate) fn expect_str(&mut self, s: &str) -> Result<(), ParseError> {
        self.skip_blank();
        let start = self.pos();
        for expected in s.chars() {
            if self.peek() != Some(expected) {
                return Err(start.error(format!("expected `{s}`")));
            }
            self.bump();
        }
        Ok(())
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        match self.peek() {
            None => self.pos().error(format!("expected {expected}, found end of input")),
            Some('\n') => self.pos().error(format!("expected {expected}, found end of line")),
            Some(c) => self.pos().error(format!("expected {expected}, found `{c}`")),
        }
    }

    pub(crate) fn ident(&mut self) -> Result<(String, Pos), ParseError> {
        self.skip_blank();
        let start = self.pos();
        match self.peek() {
            Some(c) if is_ident_start(c) => {}
            _ => return Err(self.unexpected("an identifier")),
        }
        let mut out = String::new();
        while let Some(c) = self.peek().filter(|&c| is_ident_char(c)) {
            out.push(c);
            self.bump();
        }
        Ok((out, start))
    }

    pub(crate) fn word(&mut self) -> Result<(Word, Pos), ParseError> {
        self.skip_blank();
        if self.peek() != Some('"') {
            return self.ident().map(|(s, p)| (Word::Ident(s), p));
        }
        let start = self.pos();
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(start.error("unterminated string")),
                Some('"') => break,
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    _ => return Err(self.pos().error("invalid escape in string")),
                },
                Some(c) => out.push(c),
            }
        }
        Ok((Word::Quoted(out), start))
    }

    pub(crate) fn number(&mut self) -> Result<(usize, Pos), ParseError> {
        self.skip_blank();
        let start = self.pos();
        let mut digits = String::new();
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            digits.push(c);
            self.bump();
        }
        if digits.is_empty() {
            return Err(self.unexpected("a number"));
        }
        digits.parse().map(|n| (n, start)).map_err(|_| start.error("number out of range"))
    }

    /// `i,j,...` up to (not including) `close`.
    fn positions(&mut self, close: char) -> Result<Vec<usize>, ParseError> {
        let mut out = vec![self.number()?.0];
        while self.eat(',') {
            out.push(self.number()?.0);
        }
        self.skip_blank();
        if self.peek() != Some(close) {
            return Err(self.unexpected(&format!("`,` or `{close}`")));
        }
        self.bump();
        Ok(out)
    }
}

/// Rejects names reserved for fresh or frozen constants.
pub(crate) fn domain_constant(name: String, at: Pos) -> Result<Constant, ParseError> {
    if is_reserved_name(&name) {
        return Err(at.error(format!("`{name}` is a reserved fresh-constant name")));
    }
    Ok(Constant::domain(name))
}

fn lookup<'s>(schema: &'s Schema, name: &str, at: Pos) -> Result<&'s Predicate, ParseError> {
    schema.lookup(name).map_err(|e| at.model(e))
}

/// Parses `predicate <name>/<arity>` lines.
pub fn parse_schema(src: &str) -> Result<Schema, ParseError> {
    let mut cur = Cursor::new(src);
    let mut schema = Schema::new();
    loop {
        cur.skip_ws();
        if cur.at_eof() {
            return Ok(schema);
        }
        let (kw, at) = cur.ident()?;
        if kw != "predicate" {
            return Err(at.error(format!("expected `predicate`, found `{kw}`")));
        }
        let (name, at) = cur.ident()?;
        cur.expect('/')?;
        let (arity, arity_at) = cur.number()?;
        let pred = Predicate::new(&name, arity).map_err(|e| arity_at.model(e))?;
        schema.add(pred).map_err(|e| at.model(e))?;
        cur.end_of_line()?;
    }
}

/// Parses `key` and `inclusion` lines against `schema`.
pub fn parse_dependencies(src: &str, schema: &Schema) -> Result<DependencySet, ParseError> {
    let mut cur = Cursor::new(src);
    let mut deps = DependencySet::default();
    loop {
        cur.skip_ws();
        if cur.at_eof() {
            return Ok(deps);
        }
        let (kw, at) = cur.ident()?;
        match kw.as_str() {
            "key" => {
                let (name, name_at) = cur.ident()?;
                let pred = lookup(schema, &name, name_at)?.clone();
                cur.expect('{')?;
                let attrs = cur.positions('}')?;
                let kd = KeyDependency::new(pred, attrs).map_err(|e| at.model(e))?;
                deps.add_key(kd).map_err(|e| at.model(e))?;
            }
            "inclusion" => {
                let (lhs, lhs_at) = cur.ident()?;
                let lhs = lookup(schema, &lhs, lhs_at)?.clone();
                cur.expect('[')?;
                let lhs_attrs = cur.positions(']')?;
                cur.expect_str("<=")?;
                let (rhs, rhs_at) = cur.ident()?;
                let rhs = lookup(schema, &rhs, rhs_at)?.clone();
                cur.expect('[')?;
                let rhs_attrs = cur.positions(']')?;
                let id = InclusionDependency::new(lhs, lhs_attrs, rhs, rhs_attrs).map_err(|e| at.model(e))?;
                deps.add_inclusion(id);
            }
            other => return Err(at.error(format!("expected `key` or `inclusion`, found `{other}`"))),
        }
        cur.end_of_line()?;
    }
}

/// Parses `<pred>(<c1>,...,<ck>)` lines against `schema`.
pub fn parse_instance(src: &str, schema: &Schema) -> Result<Database, ParseError> {
    let mut cur = Cursor::new(src);
    let mut atoms = Vec::new();
    loop {
        cur.skip_ws();
        if cur.at_eof() {
            return Database::new(atoms).map_err(|e| cur.pos().model(e));
        }
        let (name, at) = cur.ident()?;
        let pred = lookup(schema, &name, at)?.clone();
        cur.expect('(')?;
        let mut args = Vec::new();
        loop {
            let (word, word_at) = cur.word()?;
            let name = match word {
                Word::Ident(s) | Word::Quoted(s) => s,
            };
            args.push(domain_constant(name, word_at)?);
            if cur.eat(')') {
                break;
            }
            cur.expect(',')?;
        }
        atoms.push(Atom::new(pred, args).map_err(|e| at.model(e))?);
        cur.eat('.');
        cur.end_of_line()?;
    }
}

pub fn write_schema(schema: &Schema) -> String {
    let mut out = String::new();
    for p in schema.predicates() {
        writeln!(out, "predicate {}/{}", p.name(), p.arity()).unwrap();
    }
    out
}

pub fn write_dependencies(deps: &DependencySet) -> String {
    let mut out = String::new();
    for d in deps.sorted() {
        match d {
            DependencyRef::Inclusion(id) => writeln!(out, "{id}").unwrap(),
            DependencyRef::Key(kd) => writeln!(out, "{kd}").unwrap(),
        }
    }
    out
}

pub fn write_instance(db: &Database) -> String {
    let mut out = String::new();
    for a in db.atoms() {
        writeln!(out, "{a}").unwrap();
    }
    out
}
