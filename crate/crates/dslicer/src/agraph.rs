//! Assignment graph: the flow-insensitive flattening of a program.
//!
//! Every local, return value, class field, constant, allocation, and
//! source/sink API endpoint becomes one node; every instruction contributes
//! edges oriented in flow direction. Field nodes are keyed by declaring class,
//! so all aliases of a field collapse onto a single node.
//!
//! Construction runs over borrowed string slices and interns each node once;
//! owned [`NodeId`]s are materialized only for the final graph.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;
use std::sync::{Arc, OnceLock};

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::hierarchy::{Hierarchy, HierarchyError};
use crate::ir::{CallKind, Instruction, MethodDef, MethodId, Program, SsConfig};

/// Identity of an assignment-graph node. Renderings are injective:
/// `L:C.m.v`, `R:C.m`, `F:C.f`, `K:lit`, `N:C`, `SRC:C.m`, `SNK:C.m`.
///
/// Name segments are shared `Arc<str>`s; comparison, ordering, and hashing
/// are by content.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Local {
        class: Arc<str>,
        method: Arc<str>,
        var: Arc<str>,
    },
    Ret {
        class: Arc<str>,
        method: Arc<str>,
    },
    Field {
        class: Arc<str>,
        field: Arc<str>,
    },
    Const {
        literal: Arc<str>,
    },
    Alloc {
        class: Arc<str>,
    },
    SourceApi {
        sig: MethodId,
    },
    SinkApi {
        sig: MethodId,
    },
}

impl NodeId {
    pub fn local(class: &str, method: &str, var: &str) -> Self {
        NodeId::Local {
            class: class.into(),
            method: method.into(),
            var: var.into(),
        }
    }

    pub fn ret(class: &str, method: &str) -> Self {
        NodeId::Ret {
            class: class.into(),
            method: method.into(),
        }
    }

    pub fn field(class: &str, field: &str) -> Self {
        NodeId::Field {
            class: class.into(),
            field: field.into(),
        }
    }

    pub fn render(&self) -> String {
        self.to_string()
    }

    /// Inverse of [`NodeId::render`]. Identifiers never contain dots, so the
    /// dotted segments are unambiguous; constants keep their text verbatim.
    pub fn parse(s: &str) -> Option<NodeId> {
        let (prefix, rest) = s.split_once(':')?;
        match prefix {
            "L" => {
                let mut it = rest.split('.');
                let (c, m, v) = (it.next()?, it.next()?, it.next()?);
                if it.next().is_some() || c.is_empty() || m.is_empty() || v.is_empty() {
                    return None;
                }
                Some(NodeId::local(c, m, v))
            }
            "R" => {
                let id = MethodId::parse(rest)?;
                Some(NodeId::ret(&id.class, &id.name))
            }
            "F" => {
                let id = MethodId::parse(rest)?;
                Some(NodeId::field(&id.class, &id.name))
            }
            "K" if !rest.is_empty() => Some(NodeId::Const {
                literal: rest.into(),
            }),
            "N" if !rest.is_empty() && !rest.contains('.') => {
                Some(NodeId::Alloc { class: rest.into() })
            }
            "SRC" => Some(NodeId::SourceApi {
                sig: MethodId::parse(rest)?,
            }),
            "SNK" => Some(NodeId::SinkApi {
                sig: MethodId::parse(rest)?,
            }),
            _ => None,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Local { class, method, var } => write!(f, "L:{class}.{method}.{var}"),
            NodeId::Ret { class, method } => write!(f, "R:{class}.{method}"),
            NodeId::Field { class, field } => write!(f, "F:{class}.{field}"),
            NodeId::Const { literal } => write!(f, "K:{literal}"),
            NodeId::Alloc { class } => write!(f, "N:{class}"),
            NodeId::SourceApi { sig } => write!(f, "SRC:{sig}"),
            NodeId::SinkApi { sig } => write!(f, "SNK:{sig}"),
        }
    }
}

/// Borrowed view of a node identity used during construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum NodeRef<'p> {
    Local {
        class: &'p str,
        method: &'p str,
        var: &'p str,
    },
    Ret {
        class: &'p str,
        method: &'p str,
    },
    Field {
        class: &'p str,
        field: &'p str,
    },
    Const {
        literal: &'p str,
    },
    Alloc {
        class: &'p str,
    },
    SourceApi {
        class: &'p str,
        method: &'p str,
    },
    SinkApi {
        class: &'p str,
        method: &'p str,
    },
}

impl NodeRef<'_> {
    fn to_node_id(self) -> NodeId {
        match self {
            NodeRef::Local { class, method, var } => NodeId::local(class, method, var),
            NodeRef::Ret { class, method } => NodeId::ret(class, method),
            NodeRef::Field { class, field } => NodeId::field(class, field),
            NodeRef::Const { literal } => NodeId::Const {
                literal: literal.into(),
            },
            NodeRef::Alloc { class } => NodeId::Alloc {
                class: class.into(),
            },
            NodeRef::SourceApi { class, method } => NodeId::SourceApi {
                sig: MethodId::new(class, method),
            },
            NodeRef::SinkApi { class, method } => NodeId::SinkApi {
                sig: MethodId::new(class, method),
            },
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TranslateError {
    #[error("call to {callee} passes {got} arguments but target {target} declares {expected}")]
    ArityMismatch {
        callee: MethodId,
        target: MethodId,
        expected: usize,
        got: usize,
    },
    #[error("{0}")]
    Hierarchy(#[from] HierarchyError),
    #[error("no method `{method}` in context class `{class}`")]
    UnknownContext { class: String, method: String },
    #[error("variable `{0}` has no declared type in the context method")]
    UntypedVariable(String),
}

/// A translation error tagged with the instruction that produced it.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("{class}.{method} instruction {index}: {source}")]
pub struct BuildError {
    pub class: String,
    pub method: String,
    pub index: usize,
    pub source: TranslateError,
}

/// A call site the analysis could not resolve and modeled conservatively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnresolvedCall {
    pub class: String,
    pub method: String,
    pub index: usize,
    pub callee: MethodId,
}

impl fmt::Display for UnresolvedCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unresolved call to {} at {}.{} instruction {}",
            self.callee, self.class, self.method, self.index
        )
    }
}

/// Directed graph over [`NodeId`] with interned nodes and both adjacency
/// directions in compressed sparse rows. Immutable once built.
///
/// Node identities are stored as packed symbol keys over a shared string
/// table; [`AssignmentGraph::node`] decodes one on demand, and the full node
/// list and reverse index are materialized only on first use.
#[derive(Debug, Clone)]
pub struct AssignmentGraph {
    strings: Vec<Arc<str>>,
    node_keys: Vec<u128>,
    nodes_cache: OnceLock<Vec<NodeId>>,
    index: OnceLock<HashMap<NodeId, u32>>,
    edges: Vec<(u32, u32)>,
    succ_off: Vec<u32>,
    succ: Vec<u32>,
    pred_off: Vec<u32>,
    pred: Vec<u32>,
    source_nodes: Vec<u32>,
    sink_nodes: Vec<u32>,
    unresolved_calls: Vec<UnresolvedCall>,
}

impl AssignmentGraph {
    pub fn node_count(&self) -> usize {
        self.node_keys.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[NodeId] {
        self.nodes_cache.get_or_init(|| {
            self.node_keys
                .iter()
                .map(|&k| decode_key(&self.strings, k))
                .collect()
        })
    }

    /// Identity of the node at `idx`; name segments are shared, so this is
    /// cheap.
    pub fn node(&self, idx: u32) -> NodeId {
        decode_key(&self.strings, self.node_keys[idx as usize])
    }

    pub fn node_index(&self, id: &NodeId) -> Option<u32> {
        let index = self.index.get_or_init(|| {
            self.nodes()
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i as u32))
                .collect()
        });
        index.get(id).copied()
    }

    /// Edges as index pairs, sorted and deduplicated.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges
            .iter()
            .map(|&(a, b)| (self.node(a), self.node(b)))
    }

    pub fn contains_edge(&self, from: &NodeId, to: &NodeId) -> bool {
        match (self.node_index(from), self.node_index(to)) {
            (Some(a), Some(b)) => self.successors(a).binary_search(&b).is_ok(),
            _ => false,
        }
    }

    pub fn successors(&self, idx: u32) -> &[u32] {
        let i = idx as usize;
        &self.succ[self.succ_off[i] as usize..self.succ_off[i + 1] as usize]
    }

    pub fn predecessors(&self, idx: u32) -> &[u32] {
        let i = idx as usize;
        &self.pred[self.pred_off[i] as usize..self.pred_off[i + 1] as usize]
    }

    pub fn source_indices(&self) -> &[u32] {
        &self.source_nodes
    }

    pub fn sink_indices(&self) -> &[u32] {
        &self.sink_nodes
    }

    /// Call sites handled by the conservative unknown-callee model.
    pub fn unresolved_calls(&self) -> &[UnresolvedCall] {
        &self.unresolved_calls
    }
}

/// Sorted borrowed view of the configured signatures, for allocation-free
/// membership tests during translation.
struct SigLookup<'c> {
    sources: Vec<(&'c str, &'c str)>,
    sinks: Vec<(&'c str, &'c str)>,
}

impl<'c> SigLookup<'c> {
    fn new(cfg: &'c SsConfig) -> Self {
        let collect = |set: &'c BTreeSet<MethodId>| -> Vec<(&'c str, &'c str)> {
            // BTreeSet iteration is already sorted by (class, name).
            set.iter()
                .map(|s| (s.class.as_str(), s.name.as_str()))
                .collect()
        };
        SigLookup {
            sources: collect(&cfg.sources),
            sinks: collect(&cfg.sinks),
        }
    }

    fn is_source(&self, class: &str, method: &str) -> bool {
        self.sources.binary_search(&(class, method)).is_ok()
    }

    fn is_sink(&self, class: &str, method: &str) -> bool {
        self.sinks.binary_search(&(class, method)).is_ok()
    }
}

type DispatchMemo<'p> = FxHashMap<(&'p str, &'p str), Rc<Vec<(&'p str, &'p MethodDef)>>>;

#[derive(Default)]
struct RefTranslation<'p> {
    edges: Vec<(NodeRef<'p>, NodeRef<'p>)>,
    /// Source/sink endpoint nodes to materialize even when no edge touches
    /// them (a source call with neither lvalue nor arguments).
    endpoints: Vec<NodeRef<'p>>,
    unresolved: Option<(&'p str, &'p str)>,
}

impl RefTranslation<'_> {
    fn clear(&mut self) {
        self.edges.clear();
        self.endpoints.clear();
        self.unresolved = None;
    }
}

/// Edges contributed by a single instruction of method `ctx.1` in class
/// `ctx.0`, oriented in flow direction.
pub fn translate_instruction<'p>(
    instr: &'p Instruction,
    ctx: (&'p str, &'p str),
    h: &Hierarchy<'p>,
    cfg: &SsConfig,
) -> Result<Vec<(NodeId, NodeId)>, TranslateError> {
    let (class, method) = ctx;
    let mdef = h
        .method(class, method)
        .ok_or_else(|| TranslateError::UnknownContext {
            class: class.to_string(),
            method: method.to_string(),
        })?;
    let sigs = SigLookup::new(cfg);
    let mut memo = DispatchMemo::default();
    let mut out = RefTranslation::default();
    translate_ref(instr, class, mdef, h, &sigs, &mut memo, &mut out)?;
    Ok(out
        .edges
        .iter()
        .map(|&(a, b)| (a.to_node_id(), b.to_node_id()))
        .collect())
}

fn translate_ref<'p>(
    instr: &'p Instruction,
    class: &'p str,
    mdef: &'p MethodDef,
    h: &Hierarchy<'p>,
    sigs: &SigLookup<'_>,
    memo: &mut DispatchMemo<'p>,
    out: &mut RefTranslation<'p>,
) -> Result<(), TranslateError> {
    out.clear();
    let method: &'p str = &mdef.name;
    let local = |v: &'p str| NodeRef::Local {
        class,
        method,
        var: v,
    };
    match instr {
        Instruction::ConstToVar { dst, literal } => {
            out.edges.push((NodeRef::Const { literal }, local(dst)));
        }
        Instruction::VarToVar { dst, src } | Instruction::UnOp { dst, src } => {
            out.edges.push((local(src), local(dst)));
        }
        Instruction::BinOp { dst, lhs, rhs } => {
            out.edges.push((local(lhs), local(dst)));
            out.edges.push((local(rhs), local(dst)));
        }
        // The whole array is conservatively affected; the index flows nowhere.
        Instruction::VarToArray { array, src, .. } => {
            out.edges.push((local(src), local(array)));
        }
        Instruction::ArrayToVar { dst, array, .. } => {
            out.edges.push((local(array), local(dst)));
        }
        Instruction::VarToField { object, field, src } => {
            let node = field_node(h, mdef, object, field)?;
            out.edges.push((local(src), node));
        }
        Instruction::FieldToVar { dst, object, field } => {
            let node = field_node(h, mdef, object, field)?;
            out.edges.push((node, local(dst)));
        }
        Instruction::Return { value } => {
            if let Some(v) = value {
                out.edges.push((local(v), NodeRef::Ret { class, method }));
            }
        }
        Instruction::New { dst, class: alloc } => {
            out.edges
                .push((NodeRef::Alloc { class: alloc }, local(dst)));
        }
        Instruction::Call {
            lvalue,
            kind,
            class: callee_class,
            method: callee_name,
            args,
        } => {
            translate_call(
                out,
                class,
                mdef,
                h,
                sigs,
                memo,
                lvalue.as_deref(),
                *kind,
                callee_class,
                callee_name,
                args,
            )?;
        }
    }
    Ok(())
}

fn field_node<'p>(
    h: &Hierarchy<'p>,
    mdef: &'p MethodDef,
    object: &str,
    field: &'p str,
) -> Result<NodeRef<'p>, TranslateError> {
    let obj_ty = mdef
        .var_type(object)
        .ok_or_else(|| TranslateError::UntypedVariable(object.to_string()))?;
    let declaring = h.declaring_class(obj_ty, field)?;
    Ok(NodeRef::Field {
        class: declaring,
        field,
    })
}

#[allow(clippy::too_many_arguments)]
fn translate_call<'p>(
    out: &mut RefTranslation<'p>,
    class: &'p str,
    mdef: &'p MethodDef,
    h: &Hierarchy<'p>,
    sigs: &SigLookup<'_>,
    memo: &mut DispatchMemo<'p>,
    lvalue: Option<&'p str>,
    kind: CallKind,
    callee_class: &'p str,
    callee_name: &'p str,
    args: &'p [String],
) -> Result<(), TranslateError> {
    let method: &'p str = &mdef.name;
    let local = |v: &'p str| NodeRef::Local {
        class,
        method,
        var: v,
    };

    // Configured sources/sinks take precedence over resolution: the API is a
    // boundary symbol and its body, if any, is not modeled.
    let is_source = sigs.is_source(callee_class, callee_name);
    let is_sink = sigs.is_sink(callee_class, callee_name);
    if is_source || is_sink {
        if is_source {
            let src = NodeRef::SourceApi {
                class: callee_class,
                method: callee_name,
            };
            out.endpoints.push(src);
            if let Some(lv) = lvalue {
                out.edges.push((src, local(lv)));
            }
            for a in args {
                out.edges.push((src, local(a)));
            }
        }
        if is_sink {
            let snk = NodeRef::SinkApi {
                class: callee_class,
                method: callee_name,
            };
            out.endpoints.push(snk);
            for a in args {
                out.edges.push((local(a), snk));
            }
        }
        return Ok(());
    }

    let targets: Rc<Vec<(&'p str, &'p MethodDef)>> = match kind {
        CallKind::Static => {
            // Static dispatch is exact: the named class and method, or nothing.
            match h.method(callee_class, callee_name) {
                Some(def) => Rc::new(vec![(callee_class, def)]),
                None => Rc::new(Vec::new()),
            }
        }
        CallKind::Virtual => {
            // Dispatch keys on the declared type of the receiver variable.
            let recv = args.first().ok_or_else(|| TranslateError::ArityMismatch {
                callee: MethodId::new(callee_class, callee_name),
                target: MethodId::new(callee_class, callee_name),
                expected: 1,
                got: 0,
            })?;
            let recv_ty = mdef
                .var_type(recv)
                .ok_or_else(|| TranslateError::UntypedVariable(recv.clone()))?;
            match memo.get(&(recv_ty, callee_name)) {
                Some(t) => Rc::clone(t),
                None => {
                    let resolved = Rc::new(h.resolve_virtual_defs(recv_ty, callee_name)?);
                    memo.insert((recv_ty, callee_name), Rc::clone(&resolved));
                    resolved
                }
            }
        }
    };

    if targets.is_empty() {
        // Conservative model for unavailable code: every argument may flow
        // into the result and, for virtual calls, into the receiver.
        out.unresolved = Some((callee_class, callee_name));
        if let Some(lv) = lvalue {
            for a in args {
                out.edges.push((local(a), local(lv)));
            }
        }
        if kind == CallKind::Virtual {
            let recv = &args[0];
            for a in args.iter().skip(1) {
                out.edges.push((local(a), local(recv)));
            }
        }
        return Ok(());
    }

    for &(target_class, callee) in targets.iter() {
        if callee.params.len() != args.len() {
            return Err(TranslateError::ArityMismatch {
                callee: MethodId::new(callee_class, callee_name),
                target: MethodId::new(target_class, &callee.name),
                expected: callee.params.len(),
                got: args.len(),
            });
        }
        for (actual, formal) in args.iter().zip(callee.params.iter()) {
            out.edges.push((
                local(actual),
                NodeRef::Local {
                    class: target_class,
                    method: &callee.name,
                    var: &formal.name,
                },
            ));
        }
        if let Some(lv) = lvalue {
            out.edges.push((
                NodeRef::Ret {
                    class: target_class,
                    method: &callee.name,
                },
                local(lv),
            ));
        }
    }
    Ok(())
}

// Node keys pack a variant tag and up to three interned string symbols into
// one word, keeping the hot interning map small and its keys cheap to hash.
const TAG_LOCAL: u128 = 0;
const TAG_RET: u128 = 1;
const TAG_FIELD: u128 = 2;
const TAG_CONST: u128 = 3;
const TAG_ALLOC: u128 = 4;
const TAG_SRC: u128 = 5;
const TAG_SNK: u128 = 6;

fn decode_key(strings: &[Arc<str>], key: u128) -> NodeId {
    let tag = key >> 96;
    let s = |shift: u32| -> Arc<str> { Arc::clone(&strings[((key >> shift) as u32) as usize]) };
    match tag {
        TAG_LOCAL => NodeId::Local {
            class: s(64),
            method: s(32),
            var: s(0),
        },
        TAG_RET => NodeId::Ret {
            class: s(64),
            method: s(32),
        },
        TAG_FIELD => NodeId::Field {
            class: s(64),
            field: s(32),
        },
        TAG_CONST => NodeId::Const { literal: s(64) },
        TAG_ALLOC => NodeId::Alloc { class: s(64) },
        TAG_SRC => NodeId::SourceApi {
            sig: MethodId::new(&*s(64), &*s(32)),
        },
        _ => NodeId::SinkApi {
            sig: MethodId::new(&*s(64), &*s(32)),
        },
    }
}

struct GraphBuilder<'p> {
    symbols: FxHashMap<&'p str, u32>,
    /// One shared allocation per distinct name; nodes clone these.
    strings: Vec<Arc<str>>,
    node_index: FxHashMap<u128, u32>,
    node_keys: Vec<u128>,
    edges: Vec<(u32, u32)>,
    unresolved_calls: Vec<UnresolvedCall>,
}

impl<'p> GraphBuilder<'p> {
    fn with_capacity(instr_count: usize) -> Self {
        let mut node_index = FxHashMap::default();
        node_index.reserve(instr_count);
        GraphBuilder {
            symbols: FxHashMap::default(),
            strings: Vec::new(),
            node_index,
            node_keys: Vec::with_capacity(instr_count),
            edges: Vec::with_capacity(2 * instr_count),
            unresolved_calls: Vec::new(),
        }
    }

    fn sym(&mut self, s: &'p str) -> u128 {
        if let Some(&i) = self.symbols.get(s) {
            return i as u128;
        }
        let i = self.strings.len() as u32;
        self.strings.push(Arc::from(s));
        self.symbols.insert(s, i);
        i as u128
    }

    fn key(&mut self, r: NodeRef<'p>) -> u128 {
        let (tag, a, b, c) = match r {
            NodeRef::Local { class, method, var } => {
                (TAG_LOCAL, self.sym(class), self.sym(method), self.sym(var))
            }
            NodeRef::Ret { class, method } => (TAG_RET, self.sym(class), self.sym(method), 0),
            NodeRef::Field { class, field } => (TAG_FIELD, self.sym(class), self.sym(field), 0),
            NodeRef::Const { literal } => (TAG_CONST, self.sym(literal), 0, 0),
            NodeRef::Alloc { class } => (TAG_ALLOC, self.sym(class), 0, 0),
            NodeRef::SourceApi { class, method } => (TAG_SRC, self.sym(class), self.sym(method), 0),
            NodeRef::SinkApi { class, method } => (TAG_SNK, self.sym(class), self.sym(method), 0),
        };
        (tag << 96) | (a << 64) | (b << 32) | c
    }

    fn intern(&mut self, r: NodeRef<'p>) -> u32 {
        let key = self.key(r);
        if let Some(&i) = self.node_index.get(&key) {
            return i;
        }
        let i = self.node_keys.len() as u32;
        self.node_keys.push(key);
        self.node_index.insert(key, i);
        i
    }

    fn add_edge(&mut self, from: NodeRef<'p>, to: NodeRef<'p>) {
        let a = self.intern(from);
        let b = self.intern(to);
        self.edges.push((a, b));
    }

    fn finish(mut self) -> AssignmentGraph {
        let n = self.node_keys.len();
        self.edges.sort_unstable();
        self.edges.dedup();
        let edges = std::mem::take(&mut self.edges);

        // Compressed sparse rows for both directions. Filling in sorted edge
        // order leaves every row sorted.
        let csr = |key: fn(&(u32, u32)) -> u32, val: fn(&(u32, u32)) -> u32| {
            let mut off = vec![0u32; n + 1];
            for e in &edges {
                off[key(e) as usize + 1] += 1;
            }
            for i in 0..n {
                off[i + 1] += off[i];
            }
            let mut flat = vec![0u32; edges.len()];
            let mut cursor = off.clone();
            for e in &edges {
                let k = key(e) as usize;
                flat[cursor[k] as usize] = val(e);
                cursor[k] += 1;
            }
            (off, flat)
        };
        let (succ_off, succ) = csr(|e| e.0, |e| e.1);
        let (pred_off, pred) = csr(|e| e.1, |e| e.0);

        let mut source_nodes = Vec::new();
        let mut sink_nodes = Vec::new();
        for (i, &key) in self.node_keys.iter().enumerate() {
            match key >> 96 {
                TAG_SRC => source_nodes.push(i as u32),
                TAG_SNK => sink_nodes.push(i as u32),
                _ => {}
            }
        }
        AssignmentGraph {
            strings: self.strings,
            node_keys: self.node_keys,
            nodes_cache: OnceLock::new(),
            index: OnceLock::new(),
            edges,
            succ_off,
            succ,
            pred_off,
            pred,
            source_nodes,
            sink_nodes,
            unresolved_calls: self.unresolved_calls,
        }
    }
}

/// Flattens a validated program into its assignment graph. Deterministic for
/// a given `(p, cfg)`; errors carry the offending method and instruction index.
pub fn build_graph(
    p: &Program,
    h: &Hierarchy<'_>,
    cfg: &SsConfig,
) -> Result<AssignmentGraph, Vec<BuildError>> {
    let sigs = SigLookup::new(cfg);
    let mut memo = DispatchMemo::default();
    let instr_count: usize = p
        .classes
        .iter()
        .flat_map(|c| &c.methods)
        .map(|m| m.body.len())
        .sum();
    let mut b = GraphBuilder::with_capacity(instr_count);
    let mut scratch = RefTranslation::default();
    let mut errors = Vec::new();
    for c in &p.classes {
        for m in &c.methods {
            for (i, instr) in m.body.iter().enumerate() {
                match translate_ref(instr, &c.name, m, h, &sigs, &mut memo, &mut scratch) {
                    Ok(()) => {
                        for &(from, to) in &scratch.edges {
                            b.add_edge(from, to);
                        }
                        for &ep in &scratch.endpoints {
                            b.intern(ep);
                        }
                        if let Some((cc, cn)) = scratch.unresolved {
                            b.unresolved_calls.push(UnresolvedCall {
                                class: c.name.clone(),
                                method: m.name.clone(),
                                index: i,
                                callee: MethodId::new(cc, cn),
                            });
                        }
                    }
                    Err(source) => errors.push(BuildError {
                        class: c.name.clone(),
                        method: m.name.clone(),
                        index: i,
                        source,
                    }),
                }
            }
        }
    }
    if errors.is_empty() {
        Ok(b.finish())
    } else {
        Err(errors)
    }
}

/// Source/sink signatures from `cfg` that some call site actually names.
/// These are exactly the API endpoints the graph must contain.
pub fn called_api_sigs(p: &Program, cfg: &SsConfig) -> (BTreeSet<MethodId>, BTreeSet<MethodId>) {
    let sigs = SigLookup::new(cfg);
    let mut sources = BTreeSet::new();
    let mut sinks = BTreeSet::new();
    for c in &p.classes {
        for m in &c.methods {
            for instr in &m.body {
                if let Instruction::Call { class, method, .. } = instr {
                    if sigs.is_source(class, method) {
                        sources.insert(MethodId::new(class, method));
                    }
                    if sigs.is_sink(class, method) {
                        sinks.insert(MethodId::new(class, method));
                    }
                }
            }
        }
    }
    (sources, sinks)
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders the graph as a DOT digraph with nodes and edges sorted
/// lexicographically by rendering; API endpoints are boxed and filled.
pub fn export_dot(g: &AssignmentGraph) -> String {
    let mut out = String::from("digraph {\n");
    let mut node_lines: Vec<String> = g
        .nodes()
        .iter()
        .map(|n| {
            let label = dot_escape(&n.render());
            match n {
                NodeId::SourceApi { .. } => {
                    format!("  \"{label}\" [shape=box, style=filled, fillcolor=lightblue];\n")
                }
                NodeId::SinkApi { .. } => {
                    format!("  \"{label}\" [shape=box, style=filled, fillcolor=lightsalmon];\n")
                }
                _ => format!("  \"{label}\";\n"),
            }
        })
        .collect();
    node_lines.sort();
    let mut edge_lines: Vec<String> = g
        .edge_ids()
        .map(|(a, b)| {
            format!(
                "  \"{}\" -> \"{}\";\n",
                dot_escape(&a.render()),
                dot_escape(&b.render())
            )
        })
        .collect();
    edge_lines.sort();
    for l in node_lines.into_iter().chain(edge_lines) {
        out.push_str(&l);
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_hierarchy;
    use crate::ir::parse_program;
    use crate::testkit::fixtures;

    fn p1_graph() -> AssignmentGraph {
        let p = parse_program(fixtures::P1_IR).unwrap();
        let h = build_hierarchy(&p);
        let cfg = crate::ir::parse_ss_config(fixtures::P1_CFG).unwrap();
        build_graph(&p, &h, &cfg).unwrap()
    }

    fn edge(s: &str) -> (NodeId, NodeId) {
        let (a, b) = s.split_once(" -> ").unwrap();
        (NodeId::parse(a).unwrap(), NodeId::parse(b).unwrap())
    }

    /// The full expected P1 edge set, derived by applying the translation
    /// rules to each of the 17 instructions by hand.
    pub(crate) fn p1_expected_edges() -> Vec<(NodeId, NodeId)> {
        [
            "N:C -> L:A.main.o",
            "L:A.main.o -> L:C.m1.this",
            "L:A.main.o -> L:C.m3.this",
            "L:A.main.o -> L:C.m4.this",
            "L:A.main.o -> L:C.m5.this",
            "L:C.m1.this -> L:C.m2.this",
            "R:C.m2 -> L:C.m1.v",
            "K:0 -> L:C.m1.t",
            "L:C.m1.t -> SNK:Api.sink",
            "SRC:Api.source -> L:C.m2.v",
            "L:C.m2.v -> R:C.m2",
            "SRC:Api.source -> L:C.m3.v",
            "L:C.m3.v -> F:C.v1",
            "F:C.v1 -> L:C.m4.v",
            "L:C.m4.v -> F:C.v2",
            "F:C.v2 -> L:C.m5.v",
            "L:C.m5.v -> SNK:Api.sink",
        ]
        .iter()
        .map(|s| edge(s))
        .collect()
    }

    #[test]
    fn p1_graph_is_exactly_the_expected_edge_set() {
        let g = p1_graph();
        let got: BTreeSet<(NodeId, NodeId)> =
            g.edge_ids().map(|(a, b)| (a.clone(), b.clone())).collect();
        let want: BTreeSet<(NodeId, NodeId)> = p1_expected_edges().into_iter().collect();
        assert_eq!(got, want);
        assert_eq!(g.node_count(), 19);
        assert_eq!(g.source_indices().len(), 1);
        assert_eq!(g.sink_indices().len(), 1);
    }

    #[test]
    fn return_translates_to_ret_edge() {
        let p = parse_program(fixtures::P1_IR).unwrap();
        let h = build_hierarchy(&p);
        let cfg = crate::ir::parse_ss_config(fixtures::P1_CFG).unwrap();
        let m2 = p.method("C", "m2").unwrap();
        let edges = translate_instruction(&m2.body[1], ("C", "m2"), &h, &cfg).unwrap();
        assert_eq!(edges, vec![edge("L:C.m2.v -> R:C.m2")]);
    }

    #[test]
    fn binop_produces_two_edges() {
        let text = "class D { static method m() { var v1 : int; var v2 : int; var v3 : int; \
                    v1 = binop v2 v3; } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let cfg = SsConfig::default();
        let edges =
            translate_instruction(&p.method("D", "m").unwrap().body[0], ("D", "m"), &h, &cfg)
                .unwrap();
        let want = vec![edge("L:D.m.v2 -> L:D.m.v1"), edge("L:D.m.v3 -> L:D.m.v1")];
        assert_eq!(edges, want);
    }

    #[test]
    fn call_edges_connect_actuals_formals_and_return() {
        let p = parse_program(fixtures::P1_IR).unwrap();
        let h = build_hierarchy(&p);
        let cfg = crate::ir::parse_ss_config(fixtures::P1_CFG).unwrap();
        let m1 = p.method("C", "m1").unwrap();
        let edges = translate_instruction(&m1.body[0], ("C", "m1"), &h, &cfg).unwrap();
        let want: BTreeSet<_> = [
            edge("L:C.m1.this -> L:C.m2.this"),
            edge("R:C.m2 -> L:C.m1.v"),
        ]
        .into();
        assert_eq!(edges.into_iter().collect::<BTreeSet<_>>(), want);
    }

    #[test]
    fn source_call_feeds_lvalue() {
        let p = parse_program(fixtures::P1_IR).unwrap();
        let h = build_hierarchy(&p);
        let cfg = crate::ir::parse_ss_config(fixtures::P1_CFG).unwrap();
        let m3 = p.method("C", "m3").unwrap();
        let edges = translate_instruction(&m3.body[0], ("C", "m3"), &h, &cfg).unwrap();
        assert_eq!(edges, vec![edge("SRC:Api.source -> L:C.m3.v")]);
    }

    #[test]
    fn source_call_feeds_arguments_too() {
        let text = "class D { static method m() { var a : int; var b : int; \
                    b = scall Api.source(a); } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let cfg = crate::ir::parse_ss_config("source Api.source\n").unwrap();
        let edges =
            translate_instruction(&p.method("D", "m").unwrap().body[0], ("D", "m"), &h, &cfg)
                .unwrap();
        let want: BTreeSet<_> = [
            edge("SRC:Api.source -> L:D.m.b"),
            edge("SRC:Api.source -> L:D.m.a"),
        ]
        .into();
        assert_eq!(edges.into_iter().collect::<BTreeSet<_>>(), want);
    }

    #[test]
    fn sink_call_lvalue_gets_no_edge() {
        let text = "class D { static method m() { var a : int; var b : int; \
                    b = scall Api.sink(a); } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let cfg = crate::ir::parse_ss_config("sink Api.sink\n").unwrap();
        let edges =
            translate_instruction(&p.method("D", "m").unwrap().body[0], ("D", "m"), &h, &cfg)
                .unwrap();
        assert_eq!(edges, vec![edge("L:D.m.a -> SNK:Api.sink")]);
    }

    #[test]
    fn signature_in_both_sets_emits_both_edge_groups() {
        let text = "class D { static method m() { var a : int; var b : int; \
                    b = scall Api.io(a); } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let cfg = crate::ir::parse_ss_config("source Api.io\nsink Api.io\n").unwrap();
        let edges =
            translate_instruction(&p.method("D", "m").unwrap().body[0], ("D", "m"), &h, &cfg)
                .unwrap();
        let want: BTreeSet<_> = [
            edge("SRC:Api.io -> L:D.m.b"),
            edge("SRC:Api.io -> L:D.m.a"),
            edge("L:D.m.a -> SNK:Api.io"),
        ]
        .into();
        assert_eq!(edges.into_iter().collect::<BTreeSet<_>>(), want);
    }

    #[test]
    fn config_precedence_suppresses_body_edges() {
        // Api has a real body here, but the config marks it a source, so the
        // call contributes SRC edges only.
        let text = "class Api { static method get() { var r : int; r = const 1; return r; } }\n\
                    class D { static method m() { var v : int; v = scall Api.get(); } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let cfg = crate::ir::parse_ss_config("source Api.get\n").unwrap();
        let edges =
            translate_instruction(&p.method("D", "m").unwrap().body[0], ("D", "m"), &h, &cfg)
                .unwrap();
        assert_eq!(edges, vec![edge("SRC:Api.get -> L:D.m.v")]);
    }

    #[test]
    fn unresolved_call_uses_conservative_model() {
        let text = "class D { static method m() { var r : int; var o : D; var a : int; \
                    o = new D; r = vcall D.mystery(o, a); } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let cfg = SsConfig::default();
        let g = build_graph(&p, &h, &cfg).unwrap();
        assert!(g.contains_edge(&NodeId::local("D", "m", "o"), &NodeId::local("D", "m", "r")));
        assert!(g.contains_edge(&NodeId::local("D", "m", "a"), &NodeId::local("D", "m", "r")));
        assert!(g.contains_edge(&NodeId::local("D", "m", "a"), &NodeId::local("D", "m", "o")));
        assert_eq!(g.unresolved_calls().len(), 1);
        assert_eq!(
            g.unresolved_calls()[0].callee,
            MethodId::new("D", "mystery")
        );
    }

    #[test]
    fn mutated_p1_call_is_flagged_unresolved() {
        let text = fixtures::P1_IR.replace("vcall C.m1(o);", "vcall C.m9(o);");
        let p = parse_program(&text).unwrap();
        let h = build_hierarchy(&p);
        let cfg = crate::ir::parse_ss_config(fixtures::P1_CFG).unwrap();
        let g = build_graph(&p, &h, &cfg).unwrap();
        assert_eq!(g.unresolved_calls().len(), 1);
        assert_eq!(g.unresolved_calls()[0].callee, MethodId::new("C", "m9"));
    }

    #[test]
    fn arity_mismatch_is_an_error_naming_the_site() {
        let text = "class D { static method f(x : int) { } \
                    static method m() { var a : int; var b : int; scall D.f(a, b); } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let errs = build_graph(&p, &h, &SsConfig::default()).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].method, "m");
        assert_eq!(errs[0].index, 0);
        assert!(matches!(
            errs[0].source,
            TranslateError::ArityMismatch { .. }
        ));
    }

    #[test]
    fn dispatch_keys_on_receiver_declared_type() {
        // The receiver is declared as the subclass, so only the override and
        // definitions below it are targets.
        let text = "class A { method m(this : A) { } }\n\
                    class B extends A { method m(this : B) { } }\n\
                    class D { static method go() { var o : B; o = new B; vcall A.m(o); } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let g = build_graph(&p, &h, &SsConfig::default()).unwrap();
        assert!(g.contains_edge(
            &NodeId::local("D", "go", "o"),
            &NodeId::local("B", "m", "this")
        ));
        assert!(!g.contains_edge(
            &NodeId::local("D", "go", "o"),
            &NodeId::local("A", "m", "this")
        ));
    }

    #[test]
    fn polymorphic_dispatch_reaches_every_override() {
        let text = "class A { method m(this : A) { } }\n\
                    class B extends A { method m(this : B) { } }\n\
                    class D { static method go() { var o : A; o = new B; vcall A.m(o); } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let g = build_graph(&p, &h, &SsConfig::default()).unwrap();
        assert!(g.contains_edge(
            &NodeId::local("D", "go", "o"),
            &NodeId::local("A", "m", "this")
        ));
        assert!(g.contains_edge(
            &NodeId::local("D", "go", "o"),
            &NodeId::local("B", "m", "this")
        ));
    }

    #[test]
    fn inherited_target_receives_call_edges() {
        // B inherits m from A; a call on a B-typed receiver wires the
        // ancestor definition.
        let text = "class A { method m(this : A) { var r : int; r = const 1; return r; } }\n\
                    class B extends A { }\n\
                    class D { static method go() { var o : B; var v : int; \
                    o = new B; v = vcall B.m(o); } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let g = build_graph(&p, &h, &SsConfig::default()).unwrap();
        assert!(g.contains_edge(
            &NodeId::local("D", "go", "o"),
            &NodeId::local("A", "m", "this")
        ));
        assert!(g.contains_edge(&NodeId::ret("A", "m"), &NodeId::local("D", "go", "v")));
        assert!(g.unresolved_calls().is_empty());
    }

    #[test]
    fn field_accesses_unify_across_receivers() {
        let text = "class C { field f; }\n\
                    class D { static method m() { var o1 : C; var o2 : C; var x : int; \
                    o1 = new C; o2 = new C; o1.f = x; x = o2.f; } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let g = build_graph(&p, &h, &SsConfig::default()).unwrap();
        let f = NodeId::field("C", "f");
        assert!(g.contains_edge(&NodeId::local("D", "m", "x"), &f));
        assert!(g.contains_edge(&f, &NodeId::local("D", "m", "x")));
        // Exactly one field node for C.f.
        let field_nodes = g
            .nodes()
            .iter()
            .filter(|n| matches!(n, NodeId::Field { .. }))
            .count();
        assert_eq!(field_nodes, 1);
    }

    #[test]
    fn inherited_field_access_targets_declaring_class() {
        let text = "class C { field f; }\n\
                    class D extends C { method m(this : D) { var v : int; this.f = v; } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let g = build_graph(&p, &h, &SsConfig::default()).unwrap();
        assert!(g.contains_edge(&NodeId::local("D", "m", "v"), &NodeId::field("C", "f")));
    }

    #[test]
    fn missing_field_is_a_build_error() {
        let text = "class C { method m(this : C) { var v : int; this.nope = v; } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let errs = build_graph(&p, &h, &SsConfig::default()).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(matches!(errs[0].source, TranslateError::Hierarchy(_)));
    }

    #[test]
    fn empty_program_builds_empty_graph() {
        let p = Program::empty();
        let h = build_hierarchy(&p);
        let g = build_graph(&p, &h, &SsConfig::default()).unwrap();
        assert_eq!(g.node_count(), 0);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn isolated_api_node_is_materialized() {
        let text = "class D { static method m() { scall Api.source(); } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let cfg = crate::ir::parse_ss_config("source Api.source\n").unwrap();
        let g = build_graph(&p, &h, &cfg).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.source_indices().len(), 1);
    }

    #[test]
    fn self_assignment_keeps_harmless_self_loop() {
        let text = "class D { static method m() { var v : int; v = v; } }\n";
        let p = parse_program(text).unwrap();
        let h = build_hierarchy(&p);
        let g = build_graph(&p, &h, &SsConfig::default()).unwrap();
        let v = NodeId::local("D", "m", "v");
        assert!(g.contains_edge(&v, &v));
    }

    #[test]
    fn node_rendering_round_trips() {
        let nodes = [
            NodeId::local("C", "m1", "v"),
            NodeId::ret("C", "m2"),
            NodeId::field("C", "v1"),
            NodeId::Const {
                literal: "3.14".into(),
            },
            NodeId::Alloc { class: "C".into() },
            NodeId::SourceApi {
                sig: MethodId::new("Api", "source"),
            },
            NodeId::SinkApi {
                sig: MethodId::new("Api", "sink"),
            },
        ];
        for n in nodes {
            assert_eq!(NodeId::parse(&n.render()), Some(n.clone()), "{n}");
        }
        // Prefixes disambiguate fields from locals.
        assert_ne!(
            NodeId::field("C", "v").render(),
            NodeId::local("C", "v", "x").render()
        );
        assert_eq!(NodeId::parse("X:whatever"), None);
        assert_eq!(NodeId::parse("L:missing.parts"), None);
    }

    #[test]
    fn dot_export_is_stable_and_marks_endpoints() {
        let g = p1_graph();
        let dot = export_dot(&g);
        assert_eq!(dot, export_dot(&g));
        assert!(dot.contains("\"SRC:Api.source\" [shape=box"));
        assert!(dot.contains("\"SNK:Api.sink\" [shape=box"));
        assert!(dot.contains("\"L:C.m3.v\" -> \"F:C.v1\";"));
        assert!(dot.contains("\"F:C.v1\" -> \"L:C.m4.v\";"));
    }

    #[test]
    fn empty_graph_exports_skeleton() {
        let p = Program::empty();
        let h = build_hierarchy(&p);
        let g = build_graph(&p, &h, &SsConfig::default()).unwrap();
        assert_eq!(export_dot(&g), "digraph {\n}\n");
    }

    #[test]
    fn per_instruction_edges_are_subsets_of_the_graph() {
        let p = parse_program(fixtures::P1_IR).unwrap();
        let h = build_hierarchy(&p);
        let cfg = crate::ir::parse_ss_config(fixtures::P1_CFG).unwrap();
        let g = build_graph(&p, &h, &cfg).unwrap();
        let mut per_instr_total = 0usize;
        for c in &p.classes {
            for m in &c.methods {
                for instr in &m.body {
                    let edges = translate_instruction(instr, (&c.name, &m.name), &h, &cfg).unwrap();
                    per_instr_total += edges.len();
                    for (a, b) in edges {
                        assert!(g.contains_edge(&a, &b), "{a} -> {b} missing");
                    }
                }
            }
        }
        assert!(g.edge_count() <= per_instr_total);
    }
}
