//! Certificates and their independent checker.
//!
//! A certificate has two parts: the translation part (the full node and edge
//! listing of the assignment graph) and the analysis part (one mark per node).
//! The translation part is checked by re-deriving every instruction's edges
//! and confirming each is present; the analysis part is checked in one linear
//! pass over nodes and edges. Neither check trusts the slicer.
//!
//! Canonical text format, sorted lexicographically within sections:
//!
//! ```text
//! DSLICE-CERT 1
//! DIGEST sha256 <hex>
//! MODE both|fwd|bwd
//! NODES
//! <rendering> <+|-|±|0>
//! EDGES
//! <from-rendering> -> <to-rendering>
//! END
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agraph::{called_api_sigs, translate_instruction, AssignmentGraph, BuildError, NodeId};
use crate::hierarchy::build_hierarchy;
use crate::ir::{serialize_program, validate_program, Diagnostic, MethodId, Program, SsConfig};
use crate::slicer::{Mark, Marking, SliceMode};

pub const CERT_VERSION: u32 = 1;
pub const DIGEST_ALGO: &str = "sha256";

/// Hex SHA-256 of the canonical program serialization.
pub fn program_digest(p: &Program) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serialize_program(p).as_bytes());
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Translation certificate (graph listing) plus analysis certificate (marks),
/// bound to a program by digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub digest_algo: String,
    pub digest_hex: String,
    pub mode: SliceMode,
    /// One entry per node, sorted by rendering, no duplicates.
    pub nodes: Vec<(String, Mark)>,
    /// Sorted by (from, to) rendering.
    pub edges: Vec<(String, String)>,
}

impl Certificate {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("DSLICE-CERT {CERT_VERSION}\n"));
        out.push_str(&format!(
            "DIGEST {} {}\n",
            self.digest_algo, self.digest_hex
        ));
        out.push_str(&format!("MODE {}\n", self.mode.tag()));
        out.push_str("NODES\n");
        for (node, mark) in &self.nodes {
            out.push_str(&format!("{node} {mark}\n"));
        }
        out.push_str("EDGES\n");
        for (from, to) in &self.edges {
            out.push_str(&format!("{from} -> {to}\n"));
        }
        out.push_str("END\n");
        out
    }

    pub fn parse(text: &str) -> Result<Certificate, CertParseError> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, &str), CertParseError> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| CertParseError::Truncated {
                    expected: what.to_string(),
                })
        };

        let (ln, header) = next("header")?;
        let version = header
            .strip_prefix("DSLICE-CERT ")
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or(CertParseError::BadHeader { line: ln })?;
        if version != CERT_VERSION {
            return Err(CertParseError::UnknownVersion { version });
        }

        let (ln, digest) = next("DIGEST line")?;
        let mut parts = digest.split_whitespace();
        let (digest_algo, digest_hex) =
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some("DIGEST"), Some(a), Some(h), None) => (a.to_string(), h.to_string()),
                _ => {
                    return Err(CertParseError::BadLine {
                        line: ln,
                        what: "DIGEST",
                    })
                }
            };

        let (ln, mode_line) = next("MODE line")?;
        let mode = mode_line
            .strip_prefix("MODE ")
            .and_then(|m| SliceMode::from_tag(m.trim()))
            .ok_or(CertParseError::BadLine {
                line: ln,
                what: "MODE",
            })?;

        let (_, section) = next("NODES section")?;
        if section != "NODES" {
            return Err(CertParseError::BadLine {
                line: 4,
                what: "NODES",
            });
        }

        let mut nodes: Vec<(String, Mark)> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        let mut edges: Vec<(String, String)> = Vec::new();
        loop {
            let (ln, line) = next("node line or EDGES")?;
            if line == "EDGES" {
                break;
            }
            let (node, mark) = line.rsplit_once(' ').ok_or(CertParseError::BadLine {
                line: ln,
                what: "node",
            })?;
            let mark = Mark::from_symbol(mark).ok_or(CertParseError::BadMark {
                line: ln,
                mark: mark.to_string(),
            })?;
            if NodeId::parse(node).is_none() {
                return Err(CertParseError::BadNode {
                    line: ln,
                    node: node.to_string(),
                });
            }
            if !seen.insert(node.to_string()) {
                return Err(CertParseError::DuplicateNode {
                    line: ln,
                    node: node.to_string(),
                });
            }
            nodes.push((node.to_string(), mark));
        }
        loop {
            let (ln, line) = next("edge line or END")?;
            if line == "END" {
                break;
            }
            let (from, to) = line.split_once(" -> ").ok_or(CertParseError::BadLine {
                line: ln,
                what: "edge",
            })?;
            for endpoint in [from, to] {
                if !seen.contains(endpoint) {
                    return Err(CertParseError::UndeclaredEdgeNode {
                        line: ln,
                        node: endpoint.to_string(),
                    });
                }
            }
            edges.push((from.to_string(), to.to_string()));
        }
        if let Some((i, trailing)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(CertParseError::TrailingContent {
                line: i + 1,
                text: trailing.into(),
            });
        }
        Ok(Certificate {
            digest_algo,
            digest_hex,
            mode,
            nodes,
            edges,
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CertParseError {
    #[error("line 1: not a DSLICE-CERT file")]
    BadHeader { line: usize },
    #[error("unknown certificate version {version}")]
    UnknownVersion { version: u32 },
    #[error("line {line}: malformed {what} line")]
    BadLine { line: usize, what: &'static str },
    #[error("line {line}: unknown mark `{mark}`")]
    BadMark { line: usize, mark: String },
    #[error("line {line}: unparseable node rendering `{node}`")]
    BadNode { line: usize, node: String },
    #[error("line {line}: duplicate node line for `{node}`")]
    DuplicateNode { line: usize, node: String },
    #[error("line {line}: edge endpoint `{node}` is not a declared node")]
    UndeclaredEdgeNode { line: usize, node: String },
    #[error("line {line}: trailing content after END: `{text}`")]
    TrailingContent { line: usize, text: String },
    #[error("truncated certificate, expected {expected}")]
    Truncated { expected: String },
}

/// One check failure, located at the offending node, edge, or instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingEdge {
        class: String,
        method: String,
        index: usize,
        from: String,
        to: String,
    },
    UnmarkedSource {
        node: String,
    },
    UnmarkedSink {
        node: String,
    },
    ForwardViolation {
        from: String,
        to: String,
    },
    BackwardViolation {
        from: String,
        to: String,
    },
    DigestMismatch {
        claimed: String,
        actual: String,
    },
    UnknownNode {
        node: String,
    },
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::MissingEdge { .. } => "missing-edge",
            Violation::UnmarkedSource { .. } => "unmarked-source",
            Violation::UnmarkedSink { .. } => "unmarked-sink",
            Violation::ForwardViolation { .. } => "forward-violation",
            Violation::BackwardViolation { .. } => "backward-violation",
            Violation::DigestMismatch { .. } => "digest-mismatch",
            Violation::UnknownNode { .. } => "unknown-node",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingEdge {
                class,
                method,
                index,
                from,
                to,
            } => write!(
                f,
                "missing-edge: {from} -> {to} required by {class}.{method} instruction {index}"
            ),
            Violation::UnmarkedSource { node } => {
                write!(f, "unmarked-source: {node} lacks +")
            }
            Violation::UnmarkedSink { node } => write!(f, "unmarked-sink: {node} lacks -"),
            Violation::ForwardViolation { from, to } => {
                write!(
                    f,
                    "forward-violation: {from} has + but successor {to} does not"
                )
            }
            Violation::BackwardViolation { from, to } => write!(
                f,
                "backward-violation: {to} has - and {from} has + but {from} lacks -"
            ),
            Violation::DigestMismatch { claimed, actual } => {
                write!(
                    f,
                    "digest-mismatch: certificate claims {claimed}, program hashes to {actual}"
                )
            }
            Violation::UnknownNode { node } => {
                write!(
                    f,
                    "unknown-node: {node} missing from or foreign to the graph listing"
                )
            }
        }
    }
}

/// Visit counters proving the marking check is one linear pass, plus the
/// count of listed edges no instruction requires.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckStats {
    pub node_visits: usize,
    pub edge_visits: usize,
    pub extra_edges: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Verdict {
    pub violations: Vec<Violation>,
    pub stats: CheckStats,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn merge(mut self, other: Verdict) -> Verdict {
        self.violations.extend(other.violations);
        self.stats.node_visits += other.stats.node_visits;
        self.stats.edge_visits += other.stats.edge_visits;
        self.stats.extra_edges += other.stats.extra_edges;
        self
    }
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("program is invalid: {0:?}")]
    InvalidProgram(Vec<Diagnostic>),
    #[error("cannot re-derive translation: {0}")]
    Translation(#[from] Box<BuildError>),
}

/// Builds the certificate for a pipeline run. Output is canonical: nodes and
/// edges sorted by rendering, so equal inputs produce byte-identical text.
pub fn emit_certificate(
    p: &Program,
    g: &AssignmentGraph,
    m: &Marking,
    mode: SliceMode,
) -> Certificate {
    let mut nodes: Vec<(String, Mark)> = (0..g.node_count() as u32)
        .map(|i| (g.node(i).render(), m.mark_of(i)))
        .collect();
    nodes.sort();
    let mut edges: Vec<(String, String)> = g
        .edge_ids()
        .map(|(a, b)| (a.render(), b.render()))
        .collect();
    edges.sort();
    Certificate {
        digest_algo: DIGEST_ALGO.to_string(),
        digest_hex: program_digest(p),
        mode,
        nodes,
        edges,
    }
}

/// Re-derives every instruction's edges and confirms each appears in the
/// certificate's listing. Extra listed edges are permitted (they can only
/// enlarge a slice) and are counted in the stats. A digest mismatch aborts
/// with that single violation.
pub fn check_translation(
    p: &Program,
    c: &Certificate,
    cfg: &SsConfig,
) -> Result<Verdict, CheckError> {
    let mut verdict = Verdict::default();
    let actual = program_digest(p);
    if c.digest_algo != DIGEST_ALGO || c.digest_hex != actual {
        verdict.violations.push(Violation::DigestMismatch {
            claimed: format!("{} {}", c.digest_algo, c.digest_hex),
            actual: format!("{DIGEST_ALGO} {actual}"),
        });
        return Ok(verdict);
    }

    let diags = validate_program(p);
    if !diags.is_empty() {
        return Err(CheckError::InvalidProgram(diags));
    }
    let h = build_hierarchy(p);
    let listed: HashSet<(&str, &str)> = c
        .edges
        .iter()
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    let mut required: HashSet<(String, String)> = HashSet::new();
    for class in &p.classes {
        for method in &class.methods {
            for (index, instr) in method.body.iter().enumerate() {
                let edges = translate_instruction(instr, (&class.name, &method.name), &h, cfg)
                    .map_err(|source| {
                        Box::new(BuildError {
                            class: class.name.clone(),
                            method: method.name.clone(),
                            index,
                            source,
                        })
                    })?;
                for (from, to) in edges {
                    let (from, to) = (from.render(), to.render());
                    if !listed.contains(&(from.as_str(), to.as_str())) {
                        verdict.violations.push(Violation::MissingEdge {
                            class: class.name.clone(),
                            method: method.name.clone(),
                            index,
                            from: from.clone(),
                            to: to.clone(),
                        });
                    }
                    required.insert((from, to));
                }
            }
        }
    }
    verdict.stats.extra_edges = c
        .edges
        .iter()
        .filter(|(a, b)| !required.contains(&(a.clone(), b.clone())))
        .count();
    Ok(verdict)
}

/// Single linear pass over the listing: every source node must carry `+`,
/// every sink node `-`, every edge must satisfy the forward closure and the
/// plus-conditioned backward closure (unconditional in backward-only mode).
/// Node and edge visit counts are exactly the listing sizes.
pub fn check_marking(c: &Certificate, cfg: &SsConfig) -> Verdict {
    let mut verdict = Verdict::default();
    let marks: HashMap<&str, Mark> = c.nodes.iter().map(|(n, m)| (n.as_str(), *m)).collect();

    for (node, mark) in &c.nodes {
        verdict.stats.node_visits += 1;
        let parsed = NodeId::parse(node);
        match parsed {
            Some(NodeId::SourceApi { sig }) => {
                if !cfg.sources.contains(&sig) {
                    verdict
                        .violations
                        .push(Violation::UnknownNode { node: node.clone() });
                } else if c.mode != SliceMode::BackwardOnly && !mark.has_plus() {
                    verdict
                        .violations
                        .push(Violation::UnmarkedSource { node: node.clone() });
                }
            }
            Some(NodeId::SinkApi { sig }) => {
                if !cfg.sinks.contains(&sig) {
                    verdict
                        .violations
                        .push(Violation::UnknownNode { node: node.clone() });
                } else if c.mode != SliceMode::ForwardOnly && !mark.has_minus() {
                    verdict
                        .violations
                        .push(Violation::UnmarkedSink { node: node.clone() });
                }
            }
            Some(_) => {}
            None => verdict
                .violations
                .push(Violation::UnknownNode { node: node.clone() }),
        }
    }

    for (from, to) in &c.edges {
        verdict.stats.edge_visits += 1;
        let (Some(&fm), Some(&tm)) = (marks.get(from.as_str()), marks.get(to.as_str())) else {
            // Unreachable for parsed certificates; hand-built ones may stray.
            verdict.violations.push(Violation::UnknownNode {
                node: if marks.contains_key(from.as_str()) {
                    to.clone()
                } else {
                    from.clone()
                },
            });
            continue;
        };
        if c.mode != SliceMode::BackwardOnly && fm.has_plus() && !tm.has_plus() {
            verdict.violations.push(Violation::ForwardViolation {
                from: from.clone(),
                to: to.clone(),
            });
        }
        let backward_applies = match c.mode {
            SliceMode::Both => tm.has_minus() && fm.has_plus(),
            SliceMode::BackwardOnly => tm.has_minus(),
            SliceMode::ForwardOnly => false,
        };
        if backward_applies && !fm.has_minus() {
            verdict.violations.push(Violation::BackwardViolation {
                from: from.clone(),
                to: to.clone(),
            });
        }
    }
    verdict
}

/// Full check outcome: the merged verdict plus the relevant methods
/// re-derived from the certificate's marks alone.
#[derive(Debug)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub relevant_methods: BTreeSet<MethodId>,
}

/// Conjunction of the translation and marking checks, plus endpoint coverage:
/// every configured signature the program actually calls must appear in the
/// listing. Also re-derives the relevant methods from the marks, so callers
/// need not trust the slicer's own derivation.
pub fn check_certificate(
    p: &Program,
    c: &Certificate,
    cfg: &SsConfig,
) -> Result<CheckReport, CheckError> {
    let translation = check_translation(p, c, cfg)?;
    if translation
        .violations
        .iter()
        .any(|v| matches!(v, Violation::DigestMismatch { .. }))
    {
        return Ok(CheckReport {
            verdict: translation,
            relevant_methods: BTreeSet::new(),
        });
    }
    let mut verdict = translation.merge(check_marking(c, cfg));

    let listed: HashSet<&str> = c.nodes.iter().map(|(n, _)| n.as_str()).collect();
    let (called_sources, called_sinks) = called_api_sigs(p, cfg);
    for sig in &called_sources {
        let rendering = format!("SRC:{sig}");
        if !listed.contains(rendering.as_str()) {
            verdict
                .violations
                .push(Violation::UnknownNode { node: rendering });
        }
    }
    for sig in &called_sinks {
        let rendering = format!("SNK:{sig}");
        if !listed.contains(rendering.as_str()) {
            verdict
                .violations
                .push(Violation::UnknownNode { node: rendering });
        }
    }

    let relevant_methods = derive_relevant_from_marks(p, c);
    Ok(CheckReport {
        verdict,
        relevant_methods,
    })
}

/// Relevant methods recomputed from the certificate marks: methods owning a
/// selected local/return node, plus methods accessing a selected field.
fn derive_relevant_from_marks(p: &Program, c: &Certificate) -> BTreeSet<MethodId> {
    let selected = |mark: Mark| -> bool {
        match c.mode {
            SliceMode::Both => mark == Mark::PlusMinus,
            SliceMode::ForwardOnly => mark.has_plus(),
            SliceMode::BackwardOnly => mark.has_minus(),
        }
    };
    let mut ids: BTreeSet<NodeId> = BTreeSet::new();
    for (node, mark) in &c.nodes {
        if selected(*mark) {
            if let Some(id) = NodeId::parse(node) {
                ids.insert(id);
            }
        }
    }
    let h = build_hierarchy(p);
    let (via_locals, via_fields) = crate::slicer::relevant_methods(p, &ids, &h);
    via_locals.union(&via_fields).cloned().collect()
}

/// Convenience: marks as a map for tests and bindings.
pub fn marks_by_node(c: &Certificate) -> BTreeMap<String, Mark> {
    c.nodes.iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_program, parse_ss_config};
    use crate::slicer::{compute_marking, slice};
    use crate::testkit::fixtures;

    fn p1_setup() -> (Program, SsConfig, Certificate) {
        let p = parse_program(fixtures::P1_IR).unwrap();
        let cfg = parse_ss_config(fixtures::P1_CFG).unwrap();
        let res = slice(&p, &cfg, SliceMode::Both).unwrap();
        let cert = emit_certificate(&p, &res.graph, &res.marking, SliceMode::Both);
        (p, cfg, cert)
    }

    #[test]
    fn p1_certificate_round_trips_and_validates() {
        let (p, cfg, cert) = p1_setup();
        let text = cert.to_text();
        let parsed = Certificate::parse(&text).unwrap();
        assert_eq!(parsed, cert);

        let report = check_certificate(&p, &parsed, &cfg).unwrap();
        assert!(report.verdict.is_valid(), "{:?}", report.verdict.violations);
        let expected: BTreeSet<MethodId> = ["C.m3", "C.m4", "C.m5"]
            .iter()
            .map(|s| MethodId::parse(s).unwrap())
            .collect();
        assert_eq!(report.relevant_methods, expected);
    }

    #[test]
    fn p1_marks_match_expected_symbols() {
        let (_, _, cert) = p1_setup();
        let marks = marks_by_node(&cert);
        assert_eq!(marks["F:C.v1"], Mark::PlusMinus);
        assert_eq!(marks["L:C.m1.t"], Mark::None);
        assert_eq!(marks["SNK:Api.sink"], Mark::PlusMinus);
        assert_eq!(marks["L:C.m1.v"], Mark::Plus);
    }

    #[test]
    fn emission_is_deterministic() {
        let (p, cfg, cert) = p1_setup();
        let res = slice(&p, &cfg, SliceMode::Both).unwrap();
        let again = emit_certificate(&p, &res.graph, &res.marking, SliceMode::Both);
        assert_eq!(cert.to_text(), again.to_text());
    }

    #[test]
    fn empty_program_empty_certificate() {
        let p = Program::empty();
        let cfg = SsConfig::default();
        let res = slice(&p, &cfg, SliceMode::Both).unwrap();
        let cert = emit_certificate(&p, &res.graph, &res.marking, SliceMode::Both);
        assert!(cert.nodes.is_empty());
        assert!(cert.edges.is_empty());
        // SHA-256 of the empty string.
        assert_eq!(
            cert.digest_hex,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        let report = check_certificate(&p, &cert, &cfg).unwrap();
        assert!(report.verdict.is_valid());
        assert!(report.relevant_methods.is_empty());
    }

    #[test]
    fn deleted_edge_is_a_located_missing_edge() {
        let (p, cfg, mut cert) = p1_setup();
        cert.edges
            .retain(|(a, b)| !(a == "L:C.m3.v" && b == "F:C.v1"));
        let verdict = check_translation(&p, &cert, &cfg).unwrap();
        assert!(!verdict.is_valid());
        assert_eq!(verdict.violations.len(), 1);
        match &verdict.violations[0] {
            Violation::MissingEdge {
                class,
                method,
                index,
                ..
            } => {
                assert_eq!(class, "C");
                assert_eq!(method, "m3");
                assert_eq!(*index, 1);
            }
            v => panic!("unexpected violation {v}"),
        }
    }

    #[test]
    fn wrong_program_digest_mismatches() {
        let (_, cfg, cert) = p1_setup();
        let other = parse_program("class Z { }\n").unwrap();
        let verdict = check_translation(&other, &cert, &cfg).unwrap();
        assert_eq!(verdict.violations.len(), 1);
        assert_eq!(verdict.violations[0].kind(), "digest-mismatch");
        // The full check reports exactly the same single violation.
        let report = check_certificate(&other, &cert, &cfg).unwrap();
        assert_eq!(report.verdict.violations.len(), 1);
    }

    #[test]
    fn dropping_a_minus_is_a_backward_violation() {
        let (p, cfg, mut cert) = p1_setup();
        for (node, mark) in &mut cert.nodes {
            if node == "F:C.v1" {
                assert_eq!(*mark, Mark::PlusMinus);
                *mark = Mark::Plus;
            }
        }
        let report = check_certificate(&p, &cert, &cfg).unwrap();
        assert!(!report.verdict.is_valid());
        assert!(report.verdict.violations.iter().any(|v| matches!(
            v,
            Violation::BackwardViolation { from, to }
                if from == "F:C.v1" && to == "L:C.m4.v"
        )));
    }

    #[test]
    fn dropping_a_plus_is_a_forward_violation() {
        let (p, cfg, mut cert) = p1_setup();
        for (node, mark) in &mut cert.nodes {
            if node == "F:C.v1" {
                *mark = Mark::Minus;
            }
        }
        let report = check_certificate(&p, &cert, &cfg).unwrap();
        assert!(report
            .verdict
            .violations
            .iter()
            .any(|v| matches!(v, Violation::ForwardViolation { to, .. } if to == "F:C.v1")));
    }

    #[test]
    fn overmarked_certificate_is_accepted() {
        let (p, cfg, mut cert) = p1_setup();
        for (_, mark) in &mut cert.nodes {
            *mark = Mark::PlusMinus;
        }
        let report = check_certificate(&p, &cert, &cfg).unwrap();
        assert!(report.verdict.is_valid(), "{:?}", report.verdict.violations);
    }

    #[test]
    fn extra_edges_are_permitted_and_counted() {
        let (p, cfg, mut cert) = p1_setup();
        // An extra edge between already ±-marked nodes changes nothing.
        cert.edges.push(("F:C.v1".into(), "F:C.v2".into()));
        cert.edges.sort();
        let report = check_certificate(&p, &cert, &cfg).unwrap();
        assert!(report.verdict.is_valid(), "{:?}", report.verdict.violations);
        assert_eq!(report.verdict.stats.extra_edges, 1);
    }

    #[test]
    fn foreign_source_node_is_flagged() {
        let (p, cfg, mut cert) = p1_setup();
        cert.nodes.push(("SRC:Evil.api".into(), Mark::Plus));
        cert.nodes.sort();
        let report = check_certificate(&p, &cert, &cfg).unwrap();
        assert!(report
            .verdict
            .violations
            .iter()
            .any(|v| matches!(v, Violation::UnknownNode { node } if node == "SRC:Evil.api")));
    }

    #[test]
    fn missing_called_endpoint_is_flagged() {
        let (p, cfg, mut cert) = p1_setup();
        let removed: Vec<(String, Mark)> = cert
            .nodes
            .drain(..)
            .filter(|(n, _)| n != "SRC:Api.source")
            .collect();
        cert.nodes = removed;
        cert.edges
            .retain(|(a, b)| a != "SRC:Api.source" && b != "SRC:Api.source");
        let report = check_certificate(&p, &cert, &cfg).unwrap();
        assert!(report
            .verdict
            .violations
            .iter()
            .any(|v| matches!(v, Violation::UnknownNode { node } if node == "SRC:Api.source")));
    }

    #[test]
    fn marking_check_visits_each_node_and_edge_once() {
        let (p, cfg, cert) = p1_setup();
        let verdict = check_marking(&cert, &cfg);
        assert_eq!(verdict.stats.node_visits, cert.nodes.len());
        assert_eq!(verdict.stats.edge_visits, cert.edges.len());
        let _ = p;
    }

    #[test]
    fn forward_only_certificate_checks_forward_closure_only() {
        let p = parse_program(fixtures::P1_IR).unwrap();
        let cfg = parse_ss_config(fixtures::P1_CFG).unwrap();
        let res = slice(&p, &cfg, SliceMode::ForwardOnly).unwrap();
        let cert = emit_certificate(&p, &res.graph, &res.marking, SliceMode::ForwardOnly);
        let report = check_certificate(&p, &cert, &cfg).unwrap();
        assert!(report.verdict.is_valid(), "{:?}", report.verdict.violations);
        let expected: BTreeSet<MethodId> = ["C.m1", "C.m2", "C.m3", "C.m4", "C.m5"]
            .iter()
            .map(|s| MethodId::parse(s).unwrap())
            .collect();
        assert_eq!(report.relevant_methods, expected);
    }

    #[test]
    fn backward_only_certificate_uses_unconditional_closure() {
        let p = parse_program(fixtures::P1_IR).unwrap();
        let cfg = parse_ss_config(fixtures::P1_CFG).unwrap();
        let res = slice(&p, &cfg, SliceMode::BackwardOnly).unwrap();
        let cert = emit_certificate(&p, &res.graph, &res.marking, SliceMode::BackwardOnly);
        let report = check_certificate(&p, &cert, &cfg).unwrap();
        assert!(report.verdict.is_valid(), "{:?}", report.verdict.violations);

        // Removing the - from a node that feeds a -, with no + anywhere,
        // must still be caught in backward-only mode.
        let g = &res.graph;
        let m = compute_marking(g, SliceMode::BackwardOnly);
        assert!(m.plus_count() == 0);
        let mut tampered = cert.clone();
        for (node, mark) in &mut tampered.nodes {
            if node == "K:0" {
                assert_eq!(*mark, Mark::Minus);
                *mark = Mark::None;
            }
        }
        let verdict = check_marking(&tampered, &cfg);
        assert!(verdict
            .violations
            .iter()
            .any(|v| matches!(v, Violation::BackwardViolation { from, .. } if from == "K:0")));
    }

    #[test]
    fn parser_rejects_malformed_certificates() {
        let (_, _, cert) = p1_setup();
        let text = cert.to_text();

        let bad_version = text.replace("DSLICE-CERT 1", "DSLICE-CERT 2");
        assert_eq!(
            Certificate::parse(&bad_version),
            Err(CertParseError::UnknownVersion { version: 2 })
        );

        let dup_line = text.replace("K:0 0\n", "K:0 0\nK:0 0\n");
        assert!(matches!(
            Certificate::parse(&dup_line),
            Err(CertParseError::DuplicateNode { .. })
        ));

        let undeclared = text.replace("EDGES\n", "EDGES\nL:C.m1.t -> L:Ghost.m.x\n");
        assert!(matches!(
            Certificate::parse(&undeclared),
            Err(CertParseError::UndeclaredEdgeNode { .. })
        ));

        let truncated = text.replace("END\n", "");
        assert!(matches!(
            Certificate::parse(&truncated),
            Err(CertParseError::Truncated { .. })
        ));

        let bad_mark = text.replace("K:0 0\n", "K:0 ?\n");
        assert!(matches!(
            Certificate::parse(&bad_mark),
            Err(CertParseError::BadMark { .. })
        ));

        let trailing = format!("{text}garbage\n");
        assert!(matches!(
            Certificate::parse(&trailing),
            Err(CertParseError::TrailingContent { .. })
        ));
    }
}
