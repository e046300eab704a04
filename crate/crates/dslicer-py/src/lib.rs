//! Python bindings: programs, configs, slicing, certificates, reduction, and
//! the synthetic generator, exposed as the `dslicer` extension module.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ::dslicer::certificate::{self, Certificate};
use ::dslicer::ir;
use ::dslicer::slicer::{self, SliceMode};
use ::dslicer::testkit;
use ::dslicer::transform;

fn parse_mode(mode: &str) -> PyResult<SliceMode> {
    SliceMode::from_tag(mode)
        .ok_or_else(|| PyValueError::new_err(format!("unknown mode `{mode}` (both, fwd, bwd)")))
}

fn diag_error(diags: Vec<ir::Diagnostic>) -> PyErr {
    let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
    PyValueError::new_err(lines.join("\n"))
}

/// A parsed mini-IR program.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Program {
    inner: ir::Program,
}

#[pymethods]
impl Program {
    /// Parse program text; raises ValueError with all diagnostics on failure.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Program> {
        ir::parse_program(text)
            .map(|inner| Program { inner })
            .map_err(diag_error)
    }

    /// Canonical text form; parses back to an equal program.
    fn serialize(&self) -> String {
        ir::serialize_program(&self.inner)
    }

    /// Structural diagnostics; empty means valid.
    fn validate(&self) -> Vec<String> {
        ir::validate_program(&self.inner)
            .iter()
            .map(|d| d.to_string())
            .collect()
    }

    fn class_names(&self) -> Vec<String> {
        self.inner.classes.iter().map(|c| c.name.clone()).collect()
    }

    /// All method identities as "C.m" strings, in declaration order.
    fn methods(&self) -> Vec<String> {
        self.inner
            .method_ids()
            .iter()
            .map(|m| m.to_string())
            .collect()
    }

    fn method_count(&self) -> usize {
        self.inner.method_count()
    }

    /// Hex SHA-256 of the canonical serialization.
    fn digest(&self) -> String {
        certificate::program_digest(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Program({} classes, {} methods)",
            self.inner.classes.len(),
            self.inner.method_count()
        )
    }
}

/// Source/sink API signatures.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct SsConfig {
    inner: ir::SsConfig,
}

#[pymethods]
impl SsConfig {
    /// Parse `source C.m` / `sink C.m` directives.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<SsConfig> {
        ir::parse_ss_config(text)
            .map(|inner| SsConfig { inner })
            .map_err(diag_error)
    }

    /// Build from two lists of "C.m" signatures.
    #[staticmethod]
    fn from_lists(sources: Vec<String>, sinks: Vec<String>) -> PyResult<SsConfig> {
        let parse_all = |items: Vec<String>| -> PyResult<Vec<ir::MethodId>> {
            items
                .iter()
                .map(|s| {
                    ir::MethodId::parse(s)
                        .ok_or_else(|| PyValueError::new_err(format!("bad signature `{s}`")))
                })
                .collect()
        };
        Ok(SsConfig {
            inner: ir::SsConfig::new(parse_all(sources)?, parse_all(sinks)?),
        })
    }

    fn sources(&self) -> Vec<String> {
        self.inner.sources.iter().map(|s| s.to_string()).collect()
    }

    fn sinks(&self) -> Vec<String> {
        self.inner.sinks.iter().map(|s| s.to_string()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "SsConfig({} sources, {} sinks)",
            self.inner.sources.len(),
            self.inner.sinks.len()
        )
    }
}

/// Result of a slice run.
#[pyclass]
struct SliceOutcome {
    #[pyo3(get)]
    mode: String,
    #[pyo3(get)]
    relevant_methods: Vec<String>,
    #[pyo3(get)]
    irrelevant_methods: Vec<String>,
    #[pyo3(get)]
    via_locals: Vec<String>,
    #[pyo3(get)]
    via_fields: Vec<String>,
    #[pyo3(get)]
    relevant_nodes: Vec<String>,
    #[pyo3(get)]
    node_count: usize,
    #[pyo3(get)]
    edge_count: usize,
    #[pyo3(get)]
    unresolved_calls: Vec<String>,
}

#[pymethods]
impl SliceOutcome {
    fn __repr__(&self) -> String {
        format!(
            "SliceOutcome(mode={}, relevant={}, irrelevant={})",
            self.mode,
            self.relevant_methods.len(),
            self.irrelevant_methods.len()
        )
    }
}

/// Result of a certificate check.
#[pyclass]
struct CheckOutcome {
    #[pyo3(get)]
    valid: bool,
    #[pyo3(get)]
    violations: Vec<String>,
    #[pyo3(get)]
    relevant_methods: Vec<String>,
    #[pyo3(get)]
    node_visits: usize,
    #[pyo3(get)]
    edge_visits: usize,
    #[pyo3(get)]
    extra_edges: usize,
}

#[pymethods]
impl CheckOutcome {
    fn __repr__(&self) -> String {
        format!(
            "CheckOutcome(valid={}, violations={})",
            self.valid,
            self.violations.len()
        )
    }
}

/// Report from a program reduction.
#[pyclass]
struct ReductionOutcome {
    #[pyo3(get)]
    kept: Vec<String>,
    #[pyo3(get)]
    removed: Vec<String>,
    #[pyo3(get)]
    reduction_pct: f64,
}

#[pymethods]
impl ReductionOutcome {
    fn __repr__(&self) -> String {
        format!(
            "ReductionOutcome(kept={}, removed={}, reduction_pct={:.2})",
            self.kept.len(),
            self.removed.len(),
            self.reduction_pct
        )
    }
}

fn run_slice(p: &Program, cfg: &SsConfig, mode: &str) -> PyResult<slicer::SliceResult> {
    let mode = parse_mode(mode)?;
    slicer::slice(&p.inner, &cfg.inner, mode).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Compute the relevant/irrelevant method partition.
#[pyfunction]
#[pyo3(signature = (program, config, mode = "both"))]
fn slice_program(program: &Program, config: &SsConfig, mode: &str) -> PyResult<SliceOutcome> {
    let res = run_slice(program, config, mode)?;
    let as_strings = |set: &std::collections::BTreeSet<ir::MethodId>| -> Vec<String> {
        set.iter().map(|m| m.to_string()).collect()
    };
    Ok(SliceOutcome {
        mode: res.mode.tag().to_string(),
        relevant_methods: as_strings(&res.relevant_methods),
        irrelevant_methods: as_strings(&res.irrelevant_methods(&program.inner)),
        via_locals: as_strings(&res.via_locals),
        via_fields: as_strings(&res.via_fields),
        relevant_nodes: res.relevant_nodes.iter().map(|n| n.render()).collect(),
        node_count: res.graph.node_count(),
        edge_count: res.graph.edge_count(),
        unresolved_calls: res
            .graph
            .unresolved_calls()
            .iter()
            .map(|u| u.to_string())
            .collect(),
    })
}

/// Run the pipeline and return the certificate text.
#[pyfunction]
#[pyo3(signature = (program, config, mode = "both"))]
fn emit_certificate(program: &Program, config: &SsConfig, mode: &str) -> PyResult<String> {
    let res = run_slice(program, config, mode)?;
    let cert = certificate::emit_certificate(&program.inner, &res.graph, &res.marking, res.mode);
    Ok(cert.to_text())
}

/// Check a certificate against a program and config.
#[pyfunction]
fn check_certificate(
    program: &Program,
    certificate_text: &str,
    config: &SsConfig,
) -> PyResult<CheckOutcome> {
    let cert =
        Certificate::parse(certificate_text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = certificate::check_certificate(&program.inner, &cert, &config.inner)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(CheckOutcome {
        valid: report.verdict.is_valid(),
        violations: report
            .verdict
            .violations
            .iter()
            .map(|v| v.to_string())
            .collect(),
        relevant_methods: report
            .relevant_methods
            .iter()
            .map(|m| m.to_string())
            .collect(),
        node_visits: report.verdict.stats.node_visits,
        edge_visits: report.verdict.stats.edge_visits,
        extra_edges: report.verdict.stats.extra_edges,
    })
}

/// Slice, then strip irrelevant methods; returns the reduced program and a
/// report.
#[pyfunction]
#[pyo3(signature = (program, config, mode = "both"))]
fn reduce_program(
    program: &Program,
    config: &SsConfig,
    mode: &str,
) -> PyResult<(Program, ReductionOutcome)> {
    let res = run_slice(program, config, mode)?;
    let (reduced, report) = transform::reduce_program(&program.inner, &res.relevant_methods);
    Ok((
        Program { inner: reduced },
        ReductionOutcome {
            kept: report.kept.iter().map(|m| m.to_string()).collect(),
            removed: report.removed.iter().map(|m| m.to_string()).collect(),
            reduction_pct: report.reduction_pct,
        },
    ))
}

/// Assignment graph in DOT form.
#[pyfunction]
fn export_dot(program: &Program, config: &SsConfig) -> PyResult<String> {
    let res = run_slice(program, config, "both")?;
    Ok(::dslicer::agraph::export_dot(&res.graph))
}

/// Deterministic synthetic program; same arguments, same program.
#[pyfunction]
#[pyo3(signature = (
    classes, methods, instrs, seed = 0,
    call_density = 0.35, field_density = 0.25,
    source_density = 0.15, sink_density = 0.15,
    inheritance_depth = 3,
))]
#[allow(clippy::too_many_arguments)]
fn generate_program(
    classes: usize,
    methods: usize,
    instrs: usize,
    seed: u64,
    call_density: f64,
    field_density: f64,
    source_density: f64,
    sink_density: f64,
    inheritance_depth: usize,
) -> Program {
    let params = testkit::GenParams {
        classes,
        methods_per_class: methods,
        instrs_per_method: instrs,
        call_density,
        field_density,
        source_density,
        sink_density,
        inheritance_depth,
        seed,
    };
    Program {
        inner: testkit::gen_program(&params),
    }
}

/// Text of the bundled two-class demo program.
#[pyfunction]
fn demo_program_text() -> &'static str {
    testkit::fixtures::P1_IR
}

/// Config matching the demo program (Api.source / Api.sink).
#[pyfunction]
fn demo_config_text() -> &'static str {
    testkit::fixtures::P1_CFG
}

#[pymodule]
fn dslicer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Program>()?;
    m.add_class::<SsConfig>()?;
    m.add_class::<SliceOutcome>()?;
    m.add_class::<CheckOutcome>()?;
    m.add_class::<ReductionOutcome>()?;
    m.add_function(wrap_pyfunction!(slice_program, m)?)?;
    m.add_function(wrap_pyfunction!(emit_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(check_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(reduce_program, m)?)?;
    m.add_function(wrap_pyfunction!(export_dot, m)?)?;
    m.add_function(wrap_pyfunction!(generate_program, m)?)?;
    m.add_function(wrap_pyfunction!(demo_program_text, m)?)?;
    m.add_function(wrap_pyfunction!(demo_config_text, m)?)?;
    Ok(())
}
