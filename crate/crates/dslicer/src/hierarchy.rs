//! Class hierarchy: parent/child maps, method and field indexes, and
//! class-hierarchy-based over-approximation of virtual dispatch.

use std::collections::BTreeSet;

use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use crate::ir::{MethodDef, MethodId, Program};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("no class in the chain of `{class}` declares field `{field}`")]
    FieldNotFound { class: String, field: String },
}

/// Immutable view over a validated [`Program`]: inheritance links plus
/// method/field indexes. Safe to share across threads.
#[derive(Debug)]
pub struct Hierarchy<'p> {
    parent: FxHashMap<&'p str, Option<&'p str>>,
    children: FxHashMap<&'p str, Vec<&'p str>>,
    method_index: FxHashMap<(&'p str, &'p str), &'p MethodDef>,
    /// All method names anywhere in the program.
    method_names: FxHashSet<&'p str>,
    /// (class, field) → declaring class, covering inherited fields.
    field_index: FxHashMap<(&'p str, &'p str), &'p str>,
}

/// Builds the hierarchy. The program must already pass
/// [`crate::ir::validate_program`]; on an invalid program the result is
/// unspecified but construction never panics.
pub fn build_hierarchy(p: &Program) -> Hierarchy<'_> {
    let by_name: FxHashMap<&str, &crate::ir::ClassDef> =
        p.classes.iter().map(|c| (c.name.as_str(), c)).collect();
    let mut parent: FxHashMap<&str, Option<&str>> = FxHashMap::default();
    let mut children: FxHashMap<&str, Vec<&str>> = FxHashMap::default();
    let mut method_index = FxHashMap::default();
    let mut method_names = FxHashSet::default();
    for c in &p.classes {
        parent.insert(&c.name, c.superclass.as_deref());
        children.entry(&c.name).or_default();
        for m in &c.methods {
            method_index.insert((c.name.as_str(), m.name.as_str()), m);
            method_names.insert(m.name.as_str());
        }
    }
    for c in &p.classes {
        if let Some(sup) = c.superclass.as_deref() {
            children.entry(sup).or_default().push(&c.name);
        }
    }

    // Nearest declaring class for every field visible in every class. The
    // step cap keeps the walk finite on cyclic garbage.
    let mut field_index: FxHashMap<(&str, &str), &str> = FxHashMap::default();
    for c in &p.classes {
        let mut cur = Some(c.name.as_str());
        let mut steps = 0usize;
        while let Some(name) = cur {
            steps += 1;
            if steps > p.classes.len() {
                break;
            }
            if let Some(decl) = by_name.get(name) {
                for f in &decl.fields {
                    field_index
                        .entry((c.name.as_str(), f.as_str()))
                        .or_insert(name);
                }
            }
            cur = parent.get(name).copied().flatten();
        }
    }

    Hierarchy {
        parent,
        children,
        method_index,
        method_names,
        field_index,
    }
}

impl<'p> Hierarchy<'p> {
    pub fn is_class(&self, name: &str) -> bool {
        self.parent.contains_key(name)
    }

    pub fn parent_of(&self, class: &str) -> Option<&'p str> {
        self.parent.get(class).copied().flatten()
    }

    /// Method declared directly on `class` (no inheritance walk).
    pub fn method(&self, class: &str, name: &str) -> Option<&'p MethodDef> {
        self.method_index.get(&(class, name)).copied()
    }

    /// Over-approximates the targets of a virtual call on a receiver of
    /// declared type `declared`: every definition of `name` in `declared` or a
    /// transitive subclass, plus the nearest ancestor definition when
    /// `declared` does not define `name` itself. Empty means unresolved.
    pub fn resolve_virtual(
        &self,
        declared: &str,
        name: &str,
    ) -> Result<BTreeSet<MethodId>, HierarchyError> {
        // Canonicalize to program-lifetime strings before the indexed walk.
        let Some((&declared, _)) = self.parent.get_key_value(declared) else {
            return Err(HierarchyError::UnknownClass(declared.to_string()));
        };
        let Some(&name) = self.method_names.get(name) else {
            return Ok(BTreeSet::new());
        };
        Ok(self
            .resolve_virtual_defs(declared, name)?
            .into_iter()
            .map(|(c, m)| MethodId::new(c, &m.name))
            .collect())
    }

    /// Like [`Hierarchy::resolve_virtual`] but yields borrowed definitions,
    /// sorted by class name.
    pub fn resolve_virtual_defs(
        &self,
        declared: &'p str,
        name: &'p str,
    ) -> Result<Vec<(&'p str, &'p MethodDef)>, HierarchyError> {
        if !self.is_class(declared) {
            return Err(HierarchyError::UnknownClass(declared.to_string()));
        }
        // Parent links form a forest on valid programs; the step caps keep
        // traversal finite even on cyclic garbage.
        let cap = self.parent.len() + 1;
        let mut targets: Vec<(&'p str, &'p MethodDef)> = Vec::new();
        let mut stack: Vec<&'p str> = vec![declared];
        let mut steps = 0usize;
        while let Some(c) = stack.pop() {
            steps += 1;
            if steps > cap {
                break;
            }
            if let Some(&def) = self.method_index.get(&(c, name)) {
                targets.push((c, def));
            }
            if let Some(kids) = self.children.get(c) {
                stack.extend(kids.iter().copied());
            }
        }
        if !self.method_index.contains_key(&(declared, name)) {
            let mut cur = self.parent_of(declared);
            let mut steps = 0usize;
            while let Some(c) = cur {
                steps += 1;
                if steps > cap {
                    break;
                }
                if let Some(&def) = self.method_index.get(&(c, name)) {
                    targets.push((c, def));
                    break;
                }
                cur = self.parent_of(c);
            }
        }
        targets.sort_by_key(|(c, _)| *c);
        targets.dedup_by_key(|(c, _)| *c);
        Ok(targets)
    }

    /// Nearest class at or above `class` declaring `field`.
    pub fn declaring_class(&self, class: &str, field: &str) -> Result<&'p str, HierarchyError> {
        if !self.is_class(class) {
            return Err(HierarchyError::UnknownClass(class.to_string()));
        }
        self.field_index
            .get(&(class, field))
            .copied()
            .ok_or_else(|| HierarchyError::FieldNotFound {
                class: class.to_string(),
                field: field.to_string(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;
    use crate::testkit::fixtures;

    fn ids(pairs: &[(&str, &str)]) -> BTreeSet<MethodId> {
        pairs.iter().map(|(c, m)| MethodId::new(*c, *m)).collect()
    }

    #[test]
    fn p1_indexes() {
        let p = parse_program(fixtures::P1_IR).unwrap();
        let h = build_hierarchy(&p);
        assert_eq!(h.parent_of("C"), None);
        assert_eq!(h.parent_of("A"), None);
        for m in ["m1", "m2", "m3", "m4", "m5"] {
            assert!(h.method("C", m).is_some());
        }
        assert!(h.method("A", "main").is_some());
        assert!(h.method("C", "m9").is_none());
    }

    #[test]
    fn flat_hierarchy_has_no_children() {
        let p = parse_program("class A { }\n").unwrap();
        let h = build_hierarchy(&p);
        assert!(h.children.values().all(|s| s.is_empty()));
    }

    #[test]
    fn inherited_field_resolves_to_ancestor() {
        let p = parse_program("class C { field f; }\nclass D extends C { }\n").unwrap();
        let h = build_hierarchy(&p);
        assert_eq!(h.declaring_class("D", "f"), Ok("C"));
        assert_eq!(h.declaring_class("C", "f"), Ok("C"));
    }

    #[test]
    fn field_shadowing_uses_nearest_declaration() {
        let p = parse_program("class C { field f; }\nclass D extends C { field f; }\n").unwrap();
        let h = build_hierarchy(&p);
        assert_eq!(h.declaring_class("D", "f"), Ok("D"));
        assert_eq!(h.declaring_class("C", "f"), Ok("C"));
    }

    #[test]
    fn missing_field_errors_with_names() {
        let p = parse_program("class C { }\n").unwrap();
        let h = build_hierarchy(&p);
        assert_eq!(
            h.declaring_class("C", "f"),
            Err(HierarchyError::FieldNotFound {
                class: "C".into(),
                field: "f".into()
            })
        );
        assert_eq!(
            h.declaring_class("X", "f"),
            Err(HierarchyError::UnknownClass("X".into()))
        );
    }

    #[test]
    fn resolve_single_implementation() {
        let p = parse_program(fixtures::P1_IR).unwrap();
        let h = build_hierarchy(&p);
        assert_eq!(h.resolve_virtual("C", "m1").unwrap(), ids(&[("C", "m1")]));
    }

    #[test]
    fn resolve_includes_overrides_in_subclasses() {
        let text = "class C { method m(this : C) { } }\n\
                    class B extends C { method m(this : B) { } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        assert_eq!(
            h.resolve_virtual("C", "m").unwrap(),
            ids(&[("C", "m"), ("B", "m")])
        );
        assert_eq!(h.resolve_virtual("B", "m").unwrap(), ids(&[("B", "m")]));
    }

    #[test]
    fn resolve_inherits_from_nearest_ancestor() {
        let text = "class A { method m(this : A) { } }\n\
                    class B extends A { }\n\
                    class D extends B { }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        // D defines nothing; the nearest ancestor definition is A.m.
        assert_eq!(h.resolve_virtual("D", "m").unwrap(), ids(&[("A", "m")]));
        // B likewise; A resolves to itself.
        assert_eq!(h.resolve_virtual("B", "m").unwrap(), ids(&[("A", "m")]));
        assert_eq!(h.resolve_virtual("A", "m").unwrap(), ids(&[("A", "m")]));
    }

    #[test]
    fn absent_method_resolves_to_empty() {
        let p = parse_program(fixtures::P1_IR).unwrap();
        let h = build_hierarchy(&p);
        assert_eq!(h.resolve_virtual("C", "m9").unwrap(), BTreeSet::new());
        assert!(h.resolve_virtual("Nope", "m").is_err());
    }

    /// Brute-force dispatch oracle: enumerate every class, test subclass-of by
    /// repeated parent walking, and collect definitions.
    fn brute_force_resolve(p: &Program, declared: &str, name: &str) -> BTreeSet<MethodId> {
        fn parent_of<'a>(p: &'a Program, c: &str) -> Option<&'a str> {
            p.class(c).and_then(|cd| cd.superclass.as_deref())
        }
        fn is_subclass<'a>(p: &'a Program, mut c: &'a str, of: &str) -> bool {
            loop {
                if c == of {
                    return true;
                }
                match parent_of(p, c) {
                    Some(up) => c = up,
                    None => return false,
                }
            }
        }
        let mut out = BTreeSet::new();
        for c in &p.classes {
            if is_subclass(p, &c.name, declared) && c.methods.iter().any(|m| m.name == name) {
                out.insert(MethodId::new(&c.name, name));
            }
        }
        if p.method(declared, name).is_none() {
            let mut cur = parent_of(p, declared);
            while let Some(c) = cur {
                if p.method(c, name).is_some() {
                    out.insert(MethodId::new(c, name));
                    break;
                }
                cur = parent_of(p, c);
            }
        }
        out
    }

    #[test]
    fn resolution_matches_brute_force_on_small_hierarchies() {
        let text = "class A { method m(this : A) { } method n(this : A) { } }\n\
                    class B extends A { method m(this : B) { } }\n\
                    class E extends B { }\n\
                    class F extends B { method m(this : F) { } method n(this : F) { } }\n\
                    class G extends A { method n(this : G) { } }\n\
                    class H { method m(this : H) { } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        for c in ["A", "B", "E", "F", "G", "H"] {
            for name in ["m", "n", "zz"] {
                assert_eq!(
                    h.resolve_virtual(c, name).unwrap(),
                    brute_force_resolve(&p, c, name),
                    "mismatch at {c}.{name}"
                );
            }
        }
    }

    #[test]
    fn subclass_resolution_is_monotone() {
        let text = "class A { method m(this : A) { } }\n\
                    class B extends A { method m(this : B) { } }\n\
                    class E extends B { }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let wide = h.resolve_virtual("A", "m").unwrap();
        for sub in ["B", "E"] {
            let narrow = h.resolve_virtual(sub, "m").unwrap();
            // Anything extra in the narrow set must be an inherited definition.
            for t in &narrow {
                assert!(wide.contains(t), "{t} resolved from {sub} but not from A");
            }
        }
    }
}
