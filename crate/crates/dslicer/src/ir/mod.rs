//! Mini-IR data model: classes, fields, methods, three-address instructions,
//! plus the source/sink configuration, validation, and canonical serialization.
//!
//! The textual grammar is line-oriented with `#` comments and `;` terminators:
//!
//! ```text
//! program   := classdef*
//! classdef  := "class" ID ["extends" ID] "{" member* "}"
//! member    := "field" ID ";" | methoddef
//! methoddef := ["static"] "method" ID "(" [param ("," param)*] ")" "{" decl* instr* "}"
//! param     := ID ":" TYPE          decl := "var" ID ":" TYPE ";"
//! instr     := ID "=" "const" LITERAL ";"            | ID "=" ID ";"
//!            | ID "=" "unop" ID ";"                  | ID "=" "binop" ID ID ";"
//!            | ID "[" ID "]" "=" ID ";"              | ID "=" ID "[" ID "]" ";"
//!            | ID "." ID "=" ID ";"                  | ID "=" ID "." ID ";"
//!            | [ID "="] ("vcall"|"scall") ID "." ID "(" [ID ("," ID)*] ")" ";"
//!            | ID "=" "new" ID ";"                   | "return" [ID] ";"
//! ```
//!
//! `TYPE` is a single identifier. `LITERAL` is one identifier-or-number token;
//! literals are uninterpreted and equal tokens denote the same constant.

mod parse;

pub use parse::{parse_program, parse_ss_config};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

/// A whole program: an ordered sequence of class definitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub classes: Vec<ClassDef>,
}

impl Program {
    pub fn empty() -> Self {
        Program {
            classes: Vec::new(),
        }
    }

    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn method(&self, class: &str, name: &str) -> Option<&MethodDef> {
        self.class(class)?.methods.iter().find(|m| m.name == name)
    }

    /// All method identities, in declaration order.
    pub fn method_ids(&self) -> Vec<MethodId> {
        self.classes
            .iter()
            .flat_map(|c| c.methods.iter().map(|m| MethodId::new(&c.name, &m.name)))
            .collect()
    }

    pub fn method_count(&self) -> usize {
        self.classes.iter().map(|c| c.methods.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDef {
    pub name: String,
    pub superclass: Option<String>,
    pub fields: Vec<String>,
    pub methods: Vec<MethodDef>,
}

/// A variable binding: parameter or local declaration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Var {
    pub name: String,
    pub ty: String,
}

impl Var {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        Var {
            name: name.into(),
            ty: ty.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDef {
    pub name: String,
    pub is_static: bool,
    pub params: Vec<Var>,
    pub locals: Vec<Var>,
    pub body: Vec<Instruction>,
}

impl MethodDef {
    /// Declared type of a param or local, if any.
    pub fn var_type(&self, name: &str) -> Option<&str> {
        self.params
            .iter()
            .chain(self.locals.iter())
            .find(|v| v.name == name)
            .map(|v| v.ty.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CallKind {
    Virtual,
    Static,
}

/// The eleven three-address instruction kinds. Operand arity is fixed by the
/// variant; `uni_op`/`bin_op` semantics are irrelevant, only the flow counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instruction {
    /// `v = const lit;`
    ConstToVar { dst: String, literal: String },
    /// `v1 = v2;`
    VarToVar { dst: String, src: String },
    /// `v1 = unop v2;`
    UnOp { dst: String, src: String },
    /// `v1 = binop v2 v3;`
    BinOp {
        dst: String,
        lhs: String,
        rhs: String,
    },
    /// `v1[v2] = v3;` — the whole array is conservatively affected.
    VarToArray {
        array: String,
        index: String,
        src: String,
    },
    /// `v1 = v2[v3];`
    ArrayToVar {
        dst: String,
        array: String,
        index: String,
    },
    /// `o.f = v;`
    VarToField {
        object: String,
        field: String,
        src: String,
    },
    /// `v = o.f;`
    FieldToVar {
        dst: String,
        object: String,
        field: String,
    },
    /// `[v =] vcall|scall C.m(a0, ..., an);` — for virtual calls `a0` is the receiver.
    Call {
        lvalue: Option<String>,
        kind: CallKind,
        class: String,
        method: String,
        args: Vec<String>,
    },
    /// `return [v];`
    Return { value: Option<String> },
    /// `v = new C;` — allocation, modeled constant-like.
    New { dst: String, class: String },
}

impl Instruction {
    /// Every variable name the instruction reads or writes.
    pub fn referenced_vars(&self) -> Vec<&str> {
        match self {
            Instruction::ConstToVar { dst, .. } => vec![dst],
            Instruction::VarToVar { dst, src } | Instruction::UnOp { dst, src } => {
                vec![dst, src]
            }
            Instruction::BinOp { dst, lhs, rhs } => vec![dst, lhs, rhs],
            Instruction::VarToArray { array, index, src } => vec![array, index, src],
            Instruction::ArrayToVar { dst, array, index } => vec![dst, array, index],
            Instruction::VarToField { object, src, .. } => vec![object, src],
            Instruction::FieldToVar { dst, object, .. } => vec![dst, object],
            Instruction::Call { lvalue, args, .. } => {
                let mut vs: Vec<&str> = args.iter().map(String::as_str).collect();
                if let Some(lv) = lvalue {
                    vs.push(lv);
                }
                vs
            }
            Instruction::Return { value } => value.iter().map(String::as_str).collect(),
            Instruction::New { dst, .. } => vec![dst],
        }
    }
}

/// Method identity: `(class, name)`. The mini-IR has no overloading, so this
/// pair is unambiguous. Rendered `C.m`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodId {
    pub class: String,
    pub name: String,
}

impl MethodId {
    pub fn new(class: impl Into<String>, name: impl Into<String>) -> Self {
        MethodId {
            class: class.into(),
            name: name.into(),
        }
    }

    /// Parses `C.m`. Exactly one dot.
    pub fn parse(s: &str) -> Option<MethodId> {
        let (class, name) = s.split_once('.')?;
        if class.is_empty() || name.is_empty() || name.contains('.') {
            return None;
        }
        Some(MethodId::new(class, name))
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.class, self.name)
    }
}

/// Source/sink API signatures. A signature may appear in both sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SsConfig {
    pub sources: BTreeSet<MethodId>,
    pub sinks: BTreeSet<MethodId>,
}

impl SsConfig {
    pub fn new(
        sources: impl IntoIterator<Item = MethodId>,
        sinks: impl IntoIterator<Item = MethodId>,
    ) -> Self {
        SsConfig {
            sources: sources.into_iter().collect(),
            sinks: sinks.into_iter().collect(),
        }
    }

    pub fn is_source(&self, class: &str, name: &str) -> bool {
        self.sources.contains(&MethodId::new(class, name))
    }

    pub fn is_sink(&self, class: &str, name: &str) -> bool {
        self.sinks.contains(&MethodId::new(class, name))
    }

    /// Serializes as `source C.m` / `sink C.m` directives, sorted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sources {
            out.push_str(&format!("source {s}\n"));
        }
        for s in &self.sinks {
            out.push_str(&format!("sink {s}\n"));
        }
        out
    }
}

/// Where in the program a diagnostic points.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Subject {
    Program,
    Class {
        class: String,
    },
    Field {
        class: String,
        field: String,
    },
    Method {
        class: String,
        method: String,
    },
    VarDecl {
        class: String,
        method: String,
        var: String,
    },
    Instr {
        class: String,
        method: String,
        index: usize,
    },
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Program => write!(f, "program"),
            Subject::Class { class } => write!(f, "class {class}"),
            Subject::Field { class, field } => write!(f, "field {class}.{field}"),
            Subject::Method { class, method } => write!(f, "method {class}.{method}"),
            Subject::VarDecl { class, method, var } => {
                write!(f, "variable {var} in {class}.{method}")
            }
            Subject::Instr {
                class,
                method,
                index,
            } => {
                write!(f, "{class}.{method} instruction {index}")
            }
        }
    }
}

/// Line/column position, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// One problem found while parsing or validating. Parse-time diagnostics carry
/// a position; structural diagnostics on in-memory programs may not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub subject: Subject,
    pub pos: Option<Pos>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(subject: Subject, message: impl Into<String>) -> Self {
        Diagnostic {
            subject,
            pos: None,
            message: message.into(),
        }
    }

    pub fn at(mut self, pos: Pos) -> Self {
        self.pos = Some(pos);
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pos {
            Some(p) => write!(f, "{}: {} ({})", p, self.message, self.subject),
            None => write!(f, "{} ({})", self.message, self.subject),
        }
    }
}

/// Checks every structural invariant; the empty list means the program is valid.
///
/// Checked: unique class names; `extends` targets defined; acyclic inheritance;
/// unique field and method names per class; params/locals unique and disjoint;
/// every referenced variable declared; virtual-call receivers and field-access
/// receivers declared with a class type.
pub fn validate_program(p: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut class_names: HashSet<&str> = HashSet::new();
    for c in &p.classes {
        if !class_names.insert(&c.name) {
            diags.push(Diagnostic::new(
                Subject::Class {
                    class: c.name.clone(),
                },
                format!("duplicate class name `{}`", c.name),
            ));
        }
    }

    for c in &p.classes {
        if let Some(sup) = &c.superclass {
            if !class_names.contains(sup.as_str()) {
                diags.push(Diagnostic::new(
                    Subject::Class {
                        class: c.name.clone(),
                    },
                    format!("`extends {sup}` names an undefined class"),
                ));
            }
        }
        let mut fields: HashSet<&str> = HashSet::new();
        for f in &c.fields {
            if !fields.insert(f) {
                diags.push(Diagnostic::new(
                    Subject::Field {
                        class: c.name.clone(),
                        field: f.clone(),
                    },
                    format!("duplicate field `{f}` in class {}", c.name),
                ));
            }
        }
        let mut methods: HashSet<&str> = HashSet::new();
        for m in &c.methods {
            if !methods.insert(&m.name) {
                diags.push(Diagnostic::new(
                    Subject::Method {
                        class: c.name.clone(),
                        method: m.name.clone(),
                    },
                    format!("duplicate method `{}` in class {}", m.name, c.name),
                ));
            }
            validate_method(c, m, &class_names, &mut diags);
        }
    }

    diags.extend(inheritance_cycles(p));
    diags
}

fn validate_method(
    c: &ClassDef,
    m: &MethodDef,
    class_names: &HashSet<&str>,
    diags: &mut Vec<Diagnostic>,
) {
    let mut seen: HashSet<&str> = HashSet::new();
    for v in m.params.iter().chain(m.locals.iter()) {
        if !seen.insert(&v.name) {
            diags.push(Diagnostic::new(
                Subject::VarDecl {
                    class: c.name.clone(),
                    method: m.name.clone(),
                    var: v.name.clone(),
                },
                format!(
                    "duplicate declaration of `{}` in {}.{}",
                    v.name, c.name, m.name
                ),
            ));
        }
    }

    for (i, instr) in m.body.iter().enumerate() {
        let subject = Subject::Instr {
            class: c.name.clone(),
            method: m.name.clone(),
            index: i,
        };
        for var in instr.referenced_vars() {
            if m.var_type(var).is_none() {
                diags.push(Diagnostic::new(
                    subject.clone(),
                    format!("undeclared variable `{var}` in {}.{}", c.name, m.name),
                ));
            }
        }
        match instr {
            Instruction::Call {
                kind: CallKind::Virtual,
                args,
                ..
            } => match args.first() {
                None => diags.push(Diagnostic::new(
                    subject.clone(),
                    "virtual call has no receiver argument".to_string(),
                )),
                Some(recv) => check_class_typed(m, recv, class_names, &subject, diags),
            },
            Instruction::VarToField { object, .. } | Instruction::FieldToVar { object, .. } => {
                check_class_typed(m, object, class_names, &subject, diags);
            }
            _ => {}
        }
    }
}

fn check_class_typed(
    m: &MethodDef,
    var: &str,
    class_names: &HashSet<&str>,
    subject: &Subject,
    diags: &mut Vec<Diagnostic>,
) {
    match m.var_type(var) {
        Some(ty) if class_names.contains(ty) => {}
        Some(ty) => diags.push(Diagnostic::new(
            subject.clone(),
            format!("receiver `{var}` has non-class type `{ty}`"),
        )),
        // Undeclared receivers already get their own diagnostic above.
        None => {}
    }
}

fn inheritance_cycles(p: &Program) -> Vec<Diagnostic> {
    let parent: HashMap<&str, &str> = p
        .classes
        .iter()
        .filter_map(|c| c.superclass.as_deref().map(|s| (c.name.as_str(), s)))
        .collect();
    let mut diags = Vec::new();
    let mut reported: HashSet<&str> = HashSet::new();
    for c in &p.classes {
        let start = c.name.as_str();
        if reported.contains(start) {
            continue;
        }
        // A class lies on a cycle iff the parent walk returns to it.
        let mut cur = start;
        let mut steps = 0usize;
        let mut on_cycle = false;
        while let Some(&next) = parent.get(cur) {
            cur = next;
            steps += 1;
            if cur == start {
                on_cycle = true;
                break;
            }
            if steps > p.classes.len() {
                break;
            }
        }
        if on_cycle {
            diags.push(Diagnostic::new(
                Subject::Class {
                    class: start.to_string(),
                },
                format!("inheritance cycle through class {start}"),
            ));
            let mut m = start;
            loop {
                reported.insert(m);
                m = parent[m];
                if m == start {
                    break;
                }
            }
        }
    }
    diags
}

/// Canonical textual form: fixed whitespace, declaration order preserved,
/// byte-identical across runs. Round-trips through [`parse_program`].
pub fn serialize_program(p: &Program) -> String {
    let mut out = String::new();
    for c in &p.classes {
        match &c.superclass {
            Some(s) => out.push_str(&format!("class {} extends {} {{\n", c.name, s)),
            None => out.push_str(&format!("class {} {{\n", c.name)),
        }
        for f in &c.fields {
            out.push_str(&format!("  field {f};\n"));
        }
        for m in &c.methods {
            serialize_method(&mut out, m);
        }
        out.push_str("}\n");
    }
    out
}

fn serialize_method(out: &mut String, m: &MethodDef) {
    let kw = if m.is_static {
        "static method"
    } else {
        "method"
    };
    let params: Vec<String> = m
        .params
        .iter()
        .map(|v| format!("{} : {}", v.name, v.ty))
        .collect();
    out.push_str(&format!("  {} {}({}) {{\n", kw, m.name, params.join(", ")));
    for v in &m.locals {
        out.push_str(&format!("    var {} : {};\n", v.name, v.ty));
    }
    for i in &m.body {
        out.push_str(&format!("    {};\n", render_instruction(i)));
    }
    out.push_str("  }\n");
}

fn render_instruction(i: &Instruction) -> String {
    match i {
        Instruction::ConstToVar { dst, literal } => format!("{dst} = const {literal}"),
        Instruction::VarToVar { dst, src } => format!("{dst} = {src}"),
        Instruction::UnOp { dst, src } => format!("{dst} = unop {src}"),
        Instruction::BinOp { dst, lhs, rhs } => format!("{dst} = binop {lhs} {rhs}"),
        Instruction::VarToArray { array, index, src } => format!("{array}[{index}] = {src}"),
        Instruction::ArrayToVar { dst, array, index } => format!("{dst} = {array}[{index}]"),
        Instruction::VarToField { object, field, src } => format!("{object}.{field} = {src}"),
        Instruction::FieldToVar { dst, object, field } => format!("{dst} = {object}.{field}"),
        Instruction::Call {
            lvalue,
            kind,
            class,
            method,
            args,
        } => {
            let kw = match kind {
                CallKind::Virtual => "vcall",
                CallKind::Static => "scall",
            };
            let call = format!("{kw} {class}.{method}({})", args.join(", "));
            match lvalue {
                Some(lv) => format!("{lv} = {call}"),
                None => call,
            }
        }
        Instruction::Return { value } => match value {
            Some(v) => format!("return {v}"),
            None => "return".to_string(),
        },
        Instruction::New { dst, class } => format!("{dst} = new {class}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::fixtures;

    fn p1() -> Program {
        parse_program(fixtures::P1_IR).expect("P1 parses")
    }

    #[test]
    fn p1_structure() {
        let p = p1();
        let names: Vec<&str> = p.classes.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["A", "C"]);
        let c = p.class("C").unwrap();
        assert_eq!(c.fields, ["v1", "v2"]);
        let methods: Vec<&str> = c.methods.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(methods, ["m1", "m2", "m3", "m4", "m5"]);
        assert!(p.method("A", "main").unwrap().is_static);
        assert!(!p.method("C", "m1").unwrap().is_static);
    }

    #[test]
    fn p1_is_valid() {
        assert_eq!(validate_program(&p1()), vec![]);
    }

    #[test]
    fn empty_input_parses_to_empty_program() {
        let p = parse_program("").unwrap();
        assert_eq!(p.classes.len(), 0);
        assert_eq!(serialize_program(&p), "");
    }

    #[test]
    fn round_trip_p1() {
        let p = p1();
        let text = serialize_program(&p);
        let back = parse_program(&text).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn serialization_is_deterministic() {
        let p = p1();
        assert_eq!(serialize_program(&p), serialize_program(&p));
    }

    #[test]
    fn unknown_callee_is_accepted_by_parser() {
        // An unresolvable call is not a parse or validation error; it is
        // flagged during graph construction.
        let text = fixtures::P1_IR.replace("vcall C.m1(o);", "vcall C.m9(o);");
        let p = parse_program(&text).expect("still parses");
        assert_eq!(validate_program(&p), vec![]);
    }

    #[test]
    fn self_extends_is_a_cycle() {
        let text = "class A extends A { }\n";
        let err = parse_program(text).unwrap_err();
        assert_eq!(err.len(), 1);
        assert!(err[0].message.contains("cycle"), "{}", err[0]);
        assert!(err[0].pos.is_some());
    }

    #[test]
    fn two_class_cycle_is_reported() {
        let text = "class A extends B { }\nclass B extends A { }\n";
        let err = parse_program(text).unwrap_err();
        assert!(!err.is_empty());
        assert!(err.iter().any(|d| d.message.contains("cycle")));
    }

    #[test]
    fn undeclared_variable_names_method_and_var() {
        let text = fixtures::P1_IR.replace("v = this.v1;", "w = this.v1;");
        let err = parse_program(&text).unwrap_err();
        assert_eq!(err.len(), 1);
        assert!(err[0].message.contains('w'), "{}", err[0]);
        assert!(matches!(
            &err[0].subject,
            Subject::Instr { class, method, .. } if class == "C" && method == "m4"
        ));
    }

    #[test]
    fn duplicate_names_are_flagged() {
        let dup_class = "class A { }\nclass A { }\n";
        assert!(parse_program(dup_class)
            .unwrap_err()
            .iter()
            .any(|d| d.message.contains("duplicate class")));

        let dup_field = "class A { field f; field f; }\n";
        assert!(parse_program(dup_field)
            .unwrap_err()
            .iter()
            .any(|d| d.message.contains("duplicate field")));

        let dup_method = "class A { method m(this : A) { } method m(this : A) { } }\n";
        assert!(parse_program(dup_method)
            .unwrap_err()
            .iter()
            .any(|d| d.message.contains("duplicate method")));

        let dup_var = "class A { method m(this : A, x : int) { var x : int; } }\n";
        assert!(parse_program(dup_var)
            .unwrap_err()
            .iter()
            .any(|d| d.message.contains("duplicate declaration")));
    }

    #[test]
    fn undefined_extends_target_is_flagged() {
        let text = "class A extends B { }\n";
        let err = parse_program(text).unwrap_err();
        assert!(err.iter().any(|d| d.message.contains("undefined class")));
    }

    #[test]
    fn non_class_receiver_is_flagged() {
        let text = "class A { method m(this : A) { var x : int; var y : int; y = x.f; } }\n";
        let err = parse_program(text).unwrap_err();
        assert!(err.iter().any(|d| d.message.contains("non-class type")));
    }

    #[test]
    fn virtual_call_without_receiver_is_flagged() {
        let text = "class A { method m(this : A) { vcall A.m(); } }\n";
        let err = parse_program(text).unwrap_err();
        assert!(err.iter().any(|d| d.message.contains("no receiver")));
    }

    #[test]
    fn virtual_call_receiver_must_have_class_type() {
        let text = "class A { method m(this : A) { var x : int; vcall A.m(x); } }\n";
        let err = parse_program(text).unwrap_err();
        assert!(err.iter().any(|d| d.message.contains("non-class type")));
    }

    #[test]
    fn bare_return_round_trips() {
        let text = "class A { static method m() { return; } }\n";
        let p = parse_program(text).unwrap();
        assert_eq!(
            p.method("A", "m").unwrap().body,
            vec![Instruction::Return { value: None }]
        );
        assert_eq!(parse_program(&serialize_program(&p)).unwrap(), p);
    }

    #[test]
    fn ss_config_text_round_trips() {
        let cfg = parse_ss_config("sink Api.sink\nsource Api.source\n").unwrap();
        let text = cfg.to_text();
        assert_eq!(text, "source Api.source\nsink Api.sink\n");
        assert_eq!(parse_ss_config(&text).unwrap(), cfg);
    }

    #[test]
    fn method_id_display_and_parse() {
        let id = MethodId::new("C", "m3");
        assert_eq!(id.to_string(), "C.m3");
        assert_eq!(MethodId::parse("C.m3"), Some(id));
        assert_eq!(MethodId::parse("C"), None);
        assert_eq!(MethodId::parse("C.m.x"), None);
    }

    #[test]
    fn ss_config_parses_and_overlaps() {
        let cfg = parse_ss_config("source Api.source\nsink Api.sink\n").unwrap();
        assert!(cfg.is_source("Api", "source"));
        assert!(cfg.is_sink("Api", "sink"));
        assert!(!cfg.is_sink("Api", "source"));

        // A signature may be both source and sink.
        let both = parse_ss_config("source X.f\nsink X.f\n").unwrap();
        assert!(both.is_source("X", "f") && both.is_sink("X", "f"));
    }
}
