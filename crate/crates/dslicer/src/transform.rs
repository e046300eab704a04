//! Program reduction: drop every method outside the relevant set.
//!
//! Classes and field declarations always survive, even when emptied of
//! methods, so field node identities stay stable. Call sites whose targets
//! were removed are left in place; re-analysis treats them as unresolved
//! calls, which keeps the reduction purely subtractive.

use std::collections::BTreeSet;

use crate::ir::{MethodId, Program};

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    pub kept: BTreeSet<MethodId>,
    pub removed: BTreeSet<MethodId>,
    pub reduction_pct: f64,
}

pub fn reduce_program(p: &Program, relevant: &BTreeSet<MethodId>) -> (Program, ReductionReport) {
    let mut kept = BTreeSet::new();
    let mut removed = BTreeSet::new();
    let mut out = p.clone();
    for c in &mut out.classes {
        let class = c.name.clone();
        c.methods.retain(|m| {
            let id = MethodId::new(&class, &m.name);
            if relevant.contains(&id) {
                kept.insert(id);
                true
            } else {
                removed.insert(id);
                false
            }
        });
    }
    let total = kept.len() + removed.len();
    let reduction_pct = if total == 0 {
        0.0
    } else {
        removed.len() as f64 / total as f64 * 100.0
    };
    (
        out,
        ReductionReport {
            kept,
            removed,
            reduction_pct,
        },
    )
}
