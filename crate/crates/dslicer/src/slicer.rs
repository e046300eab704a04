//! Slice computation: forward `+` propagation from sources, backward `-`
//! propagation from sinks restricted to `+`-marked predecessors, and the
//! derivation of relevant methods from the marked nodes.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::agraph::{build_graph, AssignmentGraph, BuildError, NodeId};
use crate::hierarchy::{build_hierarchy, Hierarchy};
use crate::ir::{validate_program, Diagnostic, Instruction, MethodId, Program, SsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SliceMode {
    /// Nodes reachable from a source *and* reaching a sink.
    Both,
    /// Forward slice only: nodes reachable from a source.
    ForwardOnly,
    /// Backward slice only: nodes reaching a sink, unrestricted.
    BackwardOnly,
}

impl SliceMode {
    pub fn tag(self) -> &'static str {
        match self {
            SliceMode::Both => "both",
            SliceMode::ForwardOnly => "fwd",
            SliceMode::BackwardOnly => "bwd",
        }
    }

    pub fn from_tag(s: &str) -> Option<SliceMode> {
        match s {
            "both" => Some(SliceMode::Both),
            "fwd" => Some(SliceMode::ForwardOnly),
            "bwd" => Some(SliceMode::BackwardOnly),
            _ => None,
        }
    }
}

impl fmt::Display for SliceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Per-node mark symbol: `0`, `+`, `-`, or `±`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mark {
    None,
    Plus,
    Minus,
    PlusMinus,
}

impl Mark {
    pub fn of(plus: bool, minus: bool) -> Mark {
        match (plus, minus) {
            (false, false) => Mark::None,
            (true, false) => Mark::Plus,
            (false, true) => Mark::Minus,
            (true, true) => Mark::PlusMinus,
        }
    }

    pub fn has_plus(self) -> bool {
        matches!(self, Mark::Plus | Mark::PlusMinus)
    }

    pub fn has_minus(self) -> bool {
        matches!(self, Mark::Minus | Mark::PlusMinus)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Mark::None => "0",
            Mark::Plus => "+",
            Mark::Minus => "-",
            Mark::PlusMinus => "±",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Mark> {
        match s {
            "0" => Some(Mark::None),
            "+" => Some(Mark::Plus),
            "-" => Some(Mark::Minus),
            "±" => Some(Mark::PlusMinus),
            _ => None,
        }
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// The `+`/`-` marking of one graph, indexed by the graph's node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marking {
    plus: Vec<bool>,
    minus: Vec<bool>,
}

impl Marking {
    pub fn is_plus(&self, idx: u32) -> bool {
        self.plus[idx as usize]
    }

    pub fn is_minus(&self, idx: u32) -> bool {
        self.minus[idx as usize]
    }

    pub fn mark_of(&self, idx: u32) -> Mark {
        Mark::of(self.is_plus(idx), self.is_minus(idx))
    }

    pub fn plus_count(&self) -> usize {
        self.plus.iter().filter(|&&b| b).count()
    }

    pub fn minus_count(&self) -> usize {
        self.minus.iter().filter(|&&b| b).count()
    }

    /// Marked node sets by identity, for set-level comparisons.
    pub fn plus_ids(&self, g: &AssignmentGraph) -> BTreeSet<NodeId> {
        self.collect(g, &self.plus)
    }

    pub fn minus_ids(&self, g: &AssignmentGraph) -> BTreeSet<NodeId> {
        self.collect(g, &self.minus)
    }

    fn collect(&self, g: &AssignmentGraph, bits: &[bool]) -> BTreeSet<NodeId> {
        bits.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| g.node(i as u32).clone())
            .collect()
    }
}

/// Runs the marking fixpoint. The result is a least fixpoint and therefore
/// independent of worklist order; the worklist itself is seeded in canonical
/// rendering order for reproducible traversal.
pub fn compute_marking(g: &AssignmentGraph, mode: SliceMode) -> Marking {
    let n = g.node_count();
    let mut plus = vec![false; n];
    let mut minus = vec![false; n];

    let seeds = |idxs: &[u32]| -> Vec<u32> {
        let mut v: Vec<u32> = idxs.to_vec();
        v.sort_by_key(|&i| g.node(i).render());
        v
    };

    if mode != SliceMode::BackwardOnly {
        let mut worklist: std::collections::VecDeque<u32> = std::collections::VecDeque::new();
        for s in seeds(g.source_indices()) {
            plus[s as usize] = true;
            worklist.push_back(s);
        }
        while let Some(id) = worklist.pop_front() {
            for &next in g.successors(id) {
                if !plus[next as usize] {
                    plus[next as usize] = true;
                    worklist.push_back(next);
                }
            }
        }
    }

    if mode != SliceMode::ForwardOnly {
        let mut worklist: std::collections::VecDeque<u32> = std::collections::VecDeque::new();
        for s in seeds(g.sink_indices()) {
            minus[s as usize] = true;
            worklist.push_back(s);
        }
        // In Both mode propagation is restricted to +-marked predecessors; a
        // pure backward slice lifts the restriction.
        let restricted = mode == SliceMode::Both;
        while let Some(id) = worklist.pop_front() {
            for &prev in g.predecessors(id) {
                let p = prev as usize;
                if minus[p] || (restricted && !plus[p]) {
                    continue;
                }
                minus[p] = true;
                worklist.push_back(prev);
            }
        }
    }

    Marking { plus, minus }
}

/// Node indices selected by the mode: `+∩-` for Both, `+` forward, `-` backward.
pub fn relevant_node_indices(g: &AssignmentGraph, m: &Marking, mode: SliceMode) -> Vec<u32> {
    (0..g.node_count() as u32)
        .filter(|&i| match mode {
            SliceMode::Both => m.is_plus(i) && m.is_minus(i),
            SliceMode::ForwardOnly => m.is_plus(i),
            SliceMode::BackwardOnly => m.is_minus(i),
        })
        .collect()
}

pub fn relevant_nodes(g: &AssignmentGraph, m: &Marking, mode: SliceMode) -> BTreeSet<NodeId> {
    relevant_node_indices(g, m, mode)
        .into_iter()
        .map(|i| g.node(i).clone())
        .collect()
}

/// Methods made relevant by a set of node identities: `via_locals` collects
/// methods owning a marked local or return node; `via_fields` collects methods
/// whose body touches a field whose node is marked.
pub fn relevant_methods(
    p: &Program,
    ids: &BTreeSet<NodeId>,
    h: &Hierarchy<'_>,
) -> (BTreeSet<MethodId>, BTreeSet<MethodId>) {
    let mut via_locals = BTreeSet::new();
    let mut marked_fields: BTreeSet<(&str, &str)> = BTreeSet::new();
    for id in ids {
        match id {
            NodeId::Local { class, method, .. } | NodeId::Ret { class, method } => {
                via_locals.insert(MethodId::new(class.as_ref(), method.as_ref()));
            }
            NodeId::Field { class, field } => {
                marked_fields.insert((class.as_ref(), field.as_ref()));
            }
            _ => {}
        }
    }

    let mut via_fields = BTreeSet::new();
    for c in &p.classes {
        for m in &c.methods {
            'body: for instr in &m.body {
                let (object, field) = match instr {
                    Instruction::VarToField { object, field, .. }
                    | Instruction::FieldToVar { object, field, .. } => (object, field),
                    _ => continue,
                };
                let Some(obj_ty) = m.var_type(object) else {
                    continue;
                };
                let Ok(declaring) = h.declaring_class(obj_ty, field) else {
                    continue;
                };
                if marked_fields.contains(&(declaring, field.as_str())) {
                    via_fields.insert(MethodId::new(&c.name, &m.name));
                    break 'body;
                }
            }
        }
    }
    (via_locals, via_fields)
}

/// Everything a slice run produces: the graph, the marking, the selected
/// nodes, and the relevant-method partition.
#[derive(Debug)]
pub struct SliceResult {
    pub graph: AssignmentGraph,
    pub marking: Marking,
    pub mode: SliceMode,
    pub relevant_nodes: BTreeSet<NodeId>,
    pub via_locals: BTreeSet<MethodId>,
    pub via_fields: BTreeSet<MethodId>,
    pub relevant_methods: BTreeSet<MethodId>,
}

impl SliceResult {
    /// All program methods not in the relevant set.
    pub fn irrelevant_methods(&self, p: &Program) -> BTreeSet<MethodId> {
        p.method_ids()
            .into_iter()
            .filter(|m| !self.relevant_methods.contains(m))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum SliceError {
    #[error("program is invalid: {}", render_diags(.0))]
    InvalidProgram(Vec<Diagnostic>),
    #[error("graph construction failed: {}", render_errors(.0))]
    Build(Vec<BuildError>),
}

fn render_diags(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

fn render_errors(errs: &[BuildError]) -> String {
    errs.iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// The whole pipeline: hierarchy, graph, marking, relevant nodes and methods.
pub fn slice(p: &Program, cfg: &SsConfig, mode: SliceMode) -> Result<SliceResult, SliceError> {
    let diags = validate_program(p);
    if !diags.is_empty() {
        return Err(SliceError::InvalidProgram(diags));
    }
    let h = build_hierarchy(p);
    let graph = build_graph(p, &h, cfg).map_err(SliceError::Build)?;
    let marking = compute_marking(&graph, mode);
    let relevant = relevant_nodes(&graph, &marking, mode);
    let (via_locals, via_fields) = relevant_methods(p, &relevant, &h);
    let relevant_methods = via_locals.union(&via_fields).cloned().collect();
    Ok(SliceResult {
        graph,
        marking,
        mode,
        relevant_nodes: relevant,
        via_locals,
        via_fields,
        relevant_methods,
    })
}
