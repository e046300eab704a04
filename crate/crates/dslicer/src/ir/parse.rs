//! Text frontend for the mini-IR and the source/sink configuration.
//!
//! Parsing collects as many diagnostics as it can: on a syntax error it
//! resynchronizes at the next `;`, member keyword, or closing brace and keeps
//! going. A successful parse also runs full structural validation, attaching
//! source positions to each violation.

use std::collections::HashMap;

use super::{
    validate_program, CallKind, ClassDef, Diagnostic, Instruction, MethodDef, MethodId, Pos,
    Program, SsConfig, Subject, Var,
};

const KEYWORDS: &[&str] = &[
    "class", "extends", "field", "method", "static", "var", "const", "unop", "binop", "vcall",
    "scall", "new", "return",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokKind {
    Ident,
    Number,
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Colon,
    Semi,
    Eq,
    Dot,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    text: String,
    pos: Pos,
}

fn lex(text: &str, diags: &mut Vec<Diagnostic>) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let mut chars = text.chars().peekable();
    while let Some(&ch) = chars.peek() {
        let pos = Pos { line, col };
        match ch {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                tokens.push(Token {
                    kind: TokKind::Ident,
                    text: s,
                    pos,
                });
            }
            c if c.is_ascii_digit() => {
                // One uninterpreted literal token: digits plus any trailing
                // alphanumerics or dots (`0`, `3.14`, `0xFF`).
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                tokens.push(Token {
                    kind: TokKind::Number,
                    text: s,
                    pos,
                });
            }
            _ => {
                chars.next();
                col += 1;
                let kind = match ch {
                    '{' => Some(TokKind::LBrace),
                    '}' => Some(TokKind::RBrace),
                    '(' => Some(TokKind::LParen),
                    ')' => Some(TokKind::RParen),
                    '[' => Some(TokKind::LBrack),
                    ']' => Some(TokKind::RBrack),
                    ',' => Some(TokKind::Comma),
                    ':' => Some(TokKind::Colon),
                    ';' => Some(TokKind::Semi),
                    '=' => Some(TokKind::Eq),
                    '.' => Some(TokKind::Dot),
                    _ => None,
                };
                match kind {
                    Some(k) => tokens.push(Token {
                        kind: k,
                        text: ch.to_string(),
                        pos,
                    }),
                    None => diags.push(
                        Diagnostic::new(Subject::Program, format!("unexpected character `{ch}`"))
                            .at(pos),
                    ),
                }
            }
        }
    }
    tokens.push(Token {
        kind: TokKind::Eof,
        text: String::new(),
        pos: Pos { line, col },
    });
    tokens
}

/// Positions of declarations and instructions, for locating structural
/// diagnostics discovered after the syntax pass.
#[derive(Default)]
struct SourceMap {
    pos: HashMap<Subject, Pos>,
}

impl SourceMap {
    fn record(&mut self, subject: Subject, pos: Pos) {
        // Last writer wins so duplicate declarations point at the repeat.
        self.pos.insert(subject, pos);
    }
}

struct Parser<'d> {
    tokens: Vec<Token>,
    at: usize,
    diags: &'d mut Vec<Diagnostic>,
    map: SourceMap,
}

/// Parses program text. Returns the program only if it is syntactically well
/// formed *and* passes every structural invariant; otherwise returns all
/// collected diagnostics, each positioned where possible.
pub fn parse_program(text: &str) -> Result<Program, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let tokens = lex(text, &mut diags);
    let mut parser = Parser {
        tokens,
        at: 0,
        diags: &mut diags,
        map: SourceMap::default(),
    };
    let program = parser.program();
    let map = parser.map;
    if !diags.is_empty() {
        return Err(diags);
    }
    let mut violations = validate_program(&program);
    if violations.is_empty() {
        Ok(program)
    } else {
        for d in &mut violations {
            d.pos = map.pos.get(&d.subject).copied();
        }
        Err(violations)
    }
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn at_kind(&self, k: TokKind) -> bool {
        self.peek().kind == k
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.peek().kind == TokKind::Ident && self.peek().text == kw
    }

    fn error(&mut self, msg: impl Into<String>) {
        let pos = self.peek().pos;
        self.diags
            .push(Diagnostic::new(Subject::Program, msg).at(pos));
    }

    fn expect(&mut self, k: TokKind, what: &str) -> Option<Token> {
        if self.at_kind(k) {
            Some(self.bump())
        } else {
            let found = describe(self.peek());
            self.error(format!("expected {what}, found {found}"));
            None
        }
    }

    fn expect_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            let found = describe(self.peek());
            self.error(format!("expected `{kw}`, found {found}"));
            false
        }
    }

    /// An identifier that is not a reserved word.
    fn ident(&mut self, what: &str) -> Option<Token> {
        if self.at_kind(TokKind::Ident) {
            if KEYWORDS.contains(&self.peek().text.as_str()) {
                let kw = self.peek().text.clone();
                self.error(format!("reserved word `{kw}` cannot be used as {what}"));
                self.bump();
                return None;
            }
            Some(self.bump())
        } else {
            let found = describe(self.peek());
            self.error(format!("expected {what}, found {found}"));
            None
        }
    }

    /// Skips tokens until one of the given keywords, `}`, or EOF, balancing
    /// nested braces along the way.
    fn sync_to(&mut self, kws: &[&str], stop_semi: bool) {
        let mut depth = 0usize;
        loop {
            match self.peek().kind {
                TokKind::Eof => return,
                TokKind::LBrace => {
                    depth += 1;
                    self.bump();
                }
                TokKind::RBrace => {
                    if depth == 0 {
                        return;
                    }
                    depth -= 1;
                    self.bump();
                }
                TokKind::Semi if stop_semi && depth == 0 => {
                    self.bump();
                    return;
                }
                TokKind::Ident if depth == 0 && kws.contains(&self.peek().text.as_str()) => {
                    return;
                }
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn program(&mut self) -> Program {
        let mut classes = Vec::new();
        loop {
            if self.at_kind(TokKind::Eof) {
                break;
            }
            if self.at_kw("class") {
                if let Some(c) = self.classdef() {
                    classes.push(c);
                }
            } else {
                let found = describe(self.peek());
                self.error(format!("expected `class`, found {found}"));
                self.sync_to(&["class"], false);
                if self.at_kind(TokKind::RBrace) {
                    self.bump();
                }
            }
        }
        Program { classes }
    }

    fn classdef(&mut self) -> Option<ClassDef> {
        self.expect_kw("class");
        let name_tok = self.ident("a class name")?;
        let name = name_tok.text.clone();
        self.map.record(
            Subject::Class {
                class: name.clone(),
            },
            name_tok.pos,
        );
        let superclass = if self.at_kw("extends") {
            self.bump();
            Some(self.ident("a superclass name")?.text)
        } else {
            None
        };
        self.expect(TokKind::LBrace, "`{`")?;
        let mut fields = Vec::new();
        let mut methods = Vec::new();
        loop {
            if self.at_kind(TokKind::RBrace) {
                self.bump();
                break;
            }
            if self.at_kind(TokKind::Eof) {
                self.error(format!("unclosed class `{name}`"));
                break;
            }
            if self.at_kw("field") {
                self.bump();
                if let Some(f) = self.ident("a field name") {
                    self.map.record(
                        Subject::Field {
                            class: name.clone(),
                            field: f.text.clone(),
                        },
                        f.pos,
                    );
                    fields.push(f.text);
                    self.expect(TokKind::Semi, "`;`");
                } else {
                    self.sync_to(&["field", "method", "static"], true);
                }
            } else if self.at_kw("method") || self.at_kw("static") {
                match self.methoddef(&name) {
                    Some(m) => methods.push(m),
                    None => self.sync_to(&["field", "method", "static"], false),
                }
            } else {
                let found = describe(self.peek());
                self.error(format!(
                    "expected `field`, `method`, or `}}`, found {found}"
                ));
                self.sync_to(&["field", "method", "static"], true);
            }
        }
        Some(ClassDef {
            name,
            superclass,
            fields,
            methods,
        })
    }

    fn methoddef(&mut self, class: &str) -> Option<MethodDef> {
        let is_static = if self.at_kw("static") {
            self.bump();
            true
        } else {
            false
        };
        if !self.expect_kw("method") {
            return None;
        }
        let name_tok = self.ident("a method name")?;
        let name = name_tok.text.clone();
        self.map.record(
            Subject::Method {
                class: class.to_string(),
                method: name.clone(),
            },
            name_tok.pos,
        );
        self.expect(TokKind::LParen, "`(`")?;
        let mut params = Vec::new();
        if !self.at_kind(TokKind::RParen) {
            loop {
                let p = self.ident("a parameter name")?;
                self.expect(TokKind::Colon, "`:`")?;
                let ty = self.ident("a type")?;
                self.map.record(
                    Subject::VarDecl {
                        class: class.to_string(),
                        method: name.clone(),
                        var: p.text.clone(),
                    },
                    p.pos,
                );
                params.push(Var {
                    name: p.text,
                    ty: ty.text,
                });
                if self.at_kind(TokKind::Comma) {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(TokKind::RParen, "`)`")?;
        self.expect(TokKind::LBrace, "`{`")?;

        let mut locals = Vec::new();
        let mut body = Vec::new();
        let mut seen_instr = false;
        loop {
            if self.at_kind(TokKind::RBrace) {
                self.bump();
                break;
            }
            if self.at_kind(TokKind::Eof) {
                self.error(format!("unclosed method `{class}.{name}`"));
                break;
            }
            if self.at_kw("var") {
                if seen_instr {
                    self.error("declarations must precede instructions");
                }
                self.bump();
                let ok = (|| {
                    let v = self.ident("a variable name")?;
                    self.expect(TokKind::Colon, "`:`")?;
                    let ty = self.ident("a type")?;
                    self.expect(TokKind::Semi, "`;`")?;
                    self.map.record(
                        Subject::VarDecl {
                            class: class.to_string(),
                            method: name.clone(),
                            var: v.text.clone(),
                        },
                        v.pos,
                    );
                    locals.push(Var {
                        name: v.text,
                        ty: ty.text,
                    });
                    Some(())
                })();
                if ok.is_none() {
                    self.sync_to(&["var"], true);
                }
            } else {
                let pos = self.peek().pos;
                match self.instruction() {
                    Some(i) => {
                        seen_instr = true;
                        self.map.record(
                            Subject::Instr {
                                class: class.to_string(),
                                method: name.clone(),
                                index: body.len(),
                            },
                            pos,
                        );
                        body.push(i);
                    }
                    None => self.sync_to(&[], true),
                }
            }
        }
        Some(MethodDef {
            name,
            is_static,
            params,
            locals,
            body,
        })
    }

    fn instruction(&mut self) -> Option<Instruction> {
        if self.at_kw("return") {
            self.bump();
            let value = if self.at_kind(TokKind::Semi) {
                None
            } else {
                Some(self.ident("a variable")?.text)
            };
            self.expect(TokKind::Semi, "`;`")?;
            return Some(Instruction::Return { value });
        }
        if self.at_kw("vcall") || self.at_kw("scall") {
            return self.call(None);
        }

        let dst = self.ident("an instruction")?.text;
        match self.peek().kind {
            TokKind::LBrack => {
                // v1[v2] = v3;
                self.bump();
                let index = self.ident("an index variable")?.text;
                self.expect(TokKind::RBrack, "`]`")?;
                self.expect(TokKind::Eq, "`=`")?;
                let src = self.ident("a variable")?.text;
                self.expect(TokKind::Semi, "`;`")?;
                Some(Instruction::VarToArray {
                    array: dst,
                    index,
                    src,
                })
            }
            TokKind::Dot => {
                // o.f = v;
                self.bump();
                let field = self.ident("a field name")?.text;
                self.expect(TokKind::Eq, "`=`")?;
                let src = self.ident("a variable")?.text;
                self.expect(TokKind::Semi, "`;`")?;
                Some(Instruction::VarToField {
                    object: dst,
                    field,
                    src,
                })
            }
            TokKind::Eq => {
                self.bump();
                self.assignment_rhs(dst)
            }
            _ => {
                let found = describe(self.peek());
                self.error(format!("expected `=`, `[`, or `.`, found {found}"));
                None
            }
        }
    }

    fn assignment_rhs(&mut self, dst: String) -> Option<Instruction> {
        if self.at_kw("const") {
            self.bump();
            let lit = self.peek().clone();
            if lit.kind != TokKind::Ident && lit.kind != TokKind::Number {
                let found = describe(&lit);
                self.error(format!("expected a literal, found {found}"));
                return None;
            }
            self.bump();
            self.expect(TokKind::Semi, "`;`")?;
            return Some(Instruction::ConstToVar {
                dst,
                literal: lit.text,
            });
        }
        if self.at_kw("unop") {
            self.bump();
            let src = self.ident("a variable")?.text;
            self.expect(TokKind::Semi, "`;`")?;
            return Some(Instruction::UnOp { dst, src });
        }
        if self.at_kw("binop") {
            self.bump();
            let lhs = self.ident("a variable")?.text;
            let rhs = self.ident("a variable")?.text;
            self.expect(TokKind::Semi, "`;`")?;
            return Some(Instruction::BinOp { dst, lhs, rhs });
        }
        if self.at_kw("new") {
            self.bump();
            let class = self.ident("a class name")?.text;
            self.expect(TokKind::Semi, "`;`")?;
            return Some(Instruction::New { dst, class });
        }
        if self.at_kw("vcall") || self.at_kw("scall") {
            return self.call(Some(dst));
        }

        let src = self.ident("a variable, call, `const`, `unop`, `binop`, or `new`")?;
        match self.peek().kind {
            TokKind::Semi => {
                self.bump();
                Some(Instruction::VarToVar { dst, src: src.text })
            }
            TokKind::Dot => {
                self.bump();
                let field = self.ident("a field name")?.text;
                self.expect(TokKind::Semi, "`;`")?;
                Some(Instruction::FieldToVar {
                    dst,
                    object: src.text,
                    field,
                })
            }
            TokKind::LBrack => {
                self.bump();
                let index = self.ident("an index variable")?.text;
                self.expect(TokKind::RBrack, "`]`")?;
                self.expect(TokKind::Semi, "`;`")?;
                Some(Instruction::ArrayToVar {
                    dst,
                    array: src.text,
                    index,
                })
            }
            _ => {
                let found = describe(self.peek());
                self.error(format!("expected `;`, `.`, or `[`, found {found}"));
                None
            }
        }
    }

    fn call(&mut self, lvalue: Option<String>) -> Option<Instruction> {
        let kind = if self.at_kw("vcall") {
            CallKind::Virtual
        } else {
            CallKind::Static
        };
        self.bump();
        let class = self.ident("a class name")?.text;
        self.expect(TokKind::Dot, "`.`")?;
        let method = self.ident("a method name")?.text;
        self.expect(TokKind::LParen, "`(`")?;
        let mut args = Vec::new();
        if !self.at_kind(TokKind::RParen) {
            loop {
                args.push(self.ident("an argument variable")?.text);
                if self.at_kind(TokKind::Comma) {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(TokKind::RParen, "`)`")?;
        self.expect(TokKind::Semi, "`;`")?;
        Some(Instruction::Call {
            lvalue,
            kind,
            class,
            method,
            args,
        })
    }
}

fn describe(t: &Token) -> String {
    match t.kind {
        TokKind::Eof => "end of input".to_string(),
        TokKind::Ident | TokKind::Number => format!("`{}`", t.text),
        _ => format!("`{}`", t.text),
    }
}

/// Parses the source/sink configuration: one `source C.m` or `sink C.m`
/// directive per line, `#` comments and blank lines allowed.
pub fn parse_ss_config(text: &str) -> Result<SsConfig, Vec<Diagnostic>> {
    let mut cfg = SsConfig::default();
    let mut diags = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let pos = Pos {
            line: ln as u32 + 1,
            col: 1,
        };
        let mut parts = line.split_whitespace();
        let directive = parts.next().unwrap_or("");
        let sig = parts.next();
        let rest = parts.next();
        let target = match (directive, sig, rest) {
            ("source", Some(s), None) => Some((true, s)),
            ("sink", Some(s), None) => Some((false, s)),
            _ => None,
        };
        match target.and_then(|(is_src, s)| MethodId::parse(s).map(|id| (is_src, id))) {
            Some((true, id)) => {
                cfg.sources.insert(id);
            }
            Some((false, id)) => {
                cfg.sinks.insert(id);
            }
            None => diags.push(
                Diagnostic::new(
                    Subject::Program,
                    format!("malformed directive `{line}` (expected `source C.m` or `sink C.m`)"),
                )
                .at(pos),
            ),
        }
    }
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(diags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiple_diagnostics_in_one_pass() {
        let text = "class A {\n  method m(this : A) {\n    x = ;\n    y = = z;\n  }\n}\n";
        let err = parse_program(text).unwrap_err();
        assert!(err.len() >= 2, "expected several diagnostics, got {err:?}");
        assert!(err.iter().all(|d| d.pos.is_some()));
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# header\nclass A { # trailing\n}\n\n";
        let p = parse_program(text).unwrap();
        assert_eq!(p.classes.len(), 1);
    }

    #[test]
    fn reserved_words_are_rejected_as_identifiers() {
        let text = "class A { method m(this : A) { var return : int; } }\n";
        let err = parse_program(text).unwrap_err();
        assert!(err.iter().any(|d| d.message.contains("reserved word")));
    }

    #[test]
    fn positions_point_at_tokens() {
        let text = "class A {\n  field f;\n  field f;\n}\n";
        let err = parse_program(text).unwrap_err();
        assert_eq!(err.len(), 1);
        let pos = err[0].pos.expect("positioned");
        assert_eq!(pos.line, 3);
        assert_eq!(pos.col, 9);
    }

    #[test]
    fn recovery_continues_to_next_class() {
        let text = "class A { junk }\nclass B { }\n";
        let err = parse_program(text).unwrap_err();
        assert!(!err.is_empty());
    }

    #[test]
    fn config_rejects_malformed_lines() {
        let err = parse_ss_config("source Api.source\nbogus line\n").unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].pos.unwrap().line, 2);
    }

    #[test]
    fn call_with_literal_argument_is_rejected() {
        let text = "class A { static method m() { scall Api.sink(0); } }\n";
        assert!(parse_program(text).is_err());
    }
}
