//! Model-file ingestion, result serialization, and the command
//! implementations behind the `isosim` binary.
//!
//! All file formats are JSON (strict: unknown keys are rejected) except
//! trajectories, which stream to CSV. Numbers are serialized in shortest
//! round-trip form, so identical inputs and seed produce byte-identical
//! outputs.

use crate::compiler::{compile, resource_report, LayoutDoc, SimulatorLayout};
use crate::config;
use crate::dsl::parse;
use crate::dynamics::{
    evolve_real, gibbs_state, lindblad_relax, relax_imaginary, BathSpec, DensityMatrix,
    PropagatorConfig, QuantumState, TrajectoryRecord,
};
use crate::error::{Error, Result};
use crate::model::{ModelDraft, ModelSpec, OneBodyFieldSpec, PairPotentialSpec, WireSpec};
use crate::operator::{assemble, SparseHamiltonian};
use crate::verify::{run_checks, summary_table, CheckSelection, CheckStatus, VerifyContext};
use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const BASIS_CONVENTION: &str = "mixed-radix-row-major-last-fastest";

fn default_mass() -> f64 {
    1.0
}

fn default_length() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    1.0
}

/// On-disk model description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub wires: Vec<WireEntry>,
    #[serde(default)]
    pub pair_potentials: Vec<PairEntry>,
    #[serde(default)]
    pub one_body: Vec<FieldEntry>,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireEntry {
    pub name: String,
    #[serde(default = "default_mass")]
    pub mass: f64,
    #[serde(default = "default_length")]
    pub length: f64,
    pub sites: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub i: String,
    pub j: String,
    pub expr: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldEntry {
    pub wire: String,
    pub expr: String,
}

impl ModelFile {
    /// Parse expressions and validate; collects every violation.
    pub fn to_model(&self) -> Result<ModelSpec> {
        let mut draft = ModelDraft::new();
        let mut violations = Vec::new();
        draft.scale = self.scale;
        draft.constants = self.constants.clone();
        for w in &self.wires {
            draft.wires.push(WireSpec {
                name: w.name.clone(),
                mass: w.mass,
                length: w.length,
                sites: w.sites,
            });
        }
        for p in &self.pair_potentials {
            match parse(&p.expr) {
                Ok(expr) => draft.pairs.push(PairPotentialSpec {
                    wire_i: p.i.clone(),
                    wire_j: p.j.clone(),
                    expr,
                }),
                Err(e) => violations.push(format!(
                    "pair potential ({}, {}): {e}",
                    p.i, p.j
                )),
            }
        }
        for f in &self.one_body {
            match parse(&f.expr) {
                Ok(expr) => draft.fields.push(OneBodyFieldSpec {
                    wire: f.wire.clone(),
                    expr,
                }),
                Err(e) => violations.push(format!("one-body field on {}: {e}", f.wire)),
            }
        }
        if !violations.is_empty() {
            return Err(Error::Validation { violations });
        }
        match draft.validate() {
            Ok(model) => Ok(model),
            Err(e) => Err(e),
        }
    }

    pub fn from_model(model: &ModelSpec) -> ModelFile {
        ModelFile {
            wires: model
                .wires()
                .iter()
                .map(|w| WireEntry {
                    name: w.name.clone(),
                    mass: w.mass,
                    length: w.length,
                    sites: w.sites,
                })
                .collect(),
            pair_potentials: model
                .pairs()
                .iter()
                .map(|p| PairEntry {
                    i: p.wire_i.clone(),
                    j: p.wire_j.clone(),
                    expr: p.expr.to_string(),
                })
                .collect(),
            one_body: model
                .fields()
                .iter()
                .map(|f| FieldEntry {
                    wire: f.wire.clone(),
                    expr: f.expr.to_string(),
                })
                .collect(),
            constants: model.constants().clone(),
            scale: model.scale(),
        }
    }
}

/// Serialized pure state: flat real/imaginary arrays plus the basis
/// convention header.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDoc {
    pub dimension: usize,
    pub basis: String,
    pub radices: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl StateDoc {
    pub fn from_state(state: &QuantumState, radices: Vec<usize>) -> StateDoc {
        StateDoc {
            dimension: state.dim(),
            basis: BASIS_CONVENTION.to_string(),
            radices,
            re: state.amplitudes().iter().map(|a| a.re).collect(),
            im: state.amplitudes().iter().map(|a| a.im).collect(),
        }
    }

    pub fn to_state(&self) -> Result<QuantumState> {
        if self.re.len() != self.dimension || self.im.len() != self.dimension {
            return Err(Error::Dimension {
                expected: self.dimension,
                actual: self.re.len().min(self.im.len()),
            });
        }
        let v = DVector::from_iterator(
            self.dimension,
            self.re
                .iter()
                .zip(&self.im)
                .map(|(&r, &i)| Complex64::new(r, i)),
        );
        QuantumState::new(v)
    }
}

/// Serialized density matrix, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityDoc {
    pub dimension: usize,
    pub basis: String,
    pub radices: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl DensityDoc {
    pub fn from_density(rho: &DensityMatrix, radices: Vec<usize>) -> DensityDoc {
        let d = rho.dim();
        let mut re = Vec::with_capacity(d * d);
        let mut im = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                re.push(rho.matrix()[(i, j)].re);
                im.push(rho.matrix()[(i, j)].im);
            }
        }
        DensityDoc {
            dimension: d,
            basis: BASIS_CONVENTION.to_string(),
            radices,
            re,
            im,
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

/// Load and validate a model file.
pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let text = read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    file.to_model()
}

fn load_state(path: &Path) -> Result<QuantumState> {
    let text = read_to_string(path)?;
    let doc: StateDoc = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    doc.to_state()
}

fn ground_state(h: &SparseHamiltonian, seed: u64) -> Result<QuantumState> {
    let spec = h.lowest_eigenpairs(1, 1e-10, seed)?;
    QuantumState::from_real(spec.ground_state().clone())
}

/// Compile a model file and write the layout document.
pub fn cmd_compile(model_path: &Path, out_path: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let layout = compile(&model)?;
    let doc = LayoutDoc::from_layout(&layout);
    write_string(out_path, &to_pretty_json(&doc))?;
    let report = resource_report(&layout);
    println!(
        "compiled {} wires; connections {}/{}, fields {}/{}, hilbert dim {}",
        report.wires,
        report.connections_used,
        report.connections_bound,
        report.fields_used,
        report.fields_bound,
        report.hilbert_dim
    );
    Ok(())
}

/// Print (and optionally write) the k lowest eigenvalues.
pub fn cmd_spectrum(
    model_path: &Path,
    k: usize,
    json_out: Option<&Path>,
    seed: u64,
    tol: f64,
) -> Result<()> {
    let model = load_model(model_path)?;
    let h = assemble(&compile(&model)?, 0.0)?;
    let spec = h.lowest_eigenpairs(k, tol, seed)?;
    let text = to_pretty_json(&spec.to_doc());
    if let Some(path) = json_out {
        write_string(path, &text)?;
    }
    print!("{text}");
    Ok(())
}

/// Initial-state selection for evolve/relax commands.
#[derive(Debug, Clone)]
pub enum InitialState {
    Random,
    GroundStart,
    Uniform,
    FromFile(std::path::PathBuf),
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub t_final: f64,
    pub dt: f64,
    pub init: InitialState,
    pub observables: bool,
    pub csv_out: Option<std::path::PathBuf>,
    pub json_out: Option<std::path::PathBuf>,
    pub seed: u64,
    pub krylov_dim: usize,
    pub tol: f64,
}

/// Real-time propagation; trajectory to CSV, final state to JSON.
pub fn cmd_evolve(model_path: &Path, opts: &EvolveOptions) -> Result<()> {
    let model = load_model(model_path)?;
    let layout = compile(&model)?;
    let h0 = assemble(&layout, 0.0)?;
    let psi0 = match &opts.init {
        InitialState::Random => QuantumState::random(h0.dim(), opts.seed)?,
        InitialState::GroundStart => ground_state(&h0, opts.seed)?,
        InitialState::Uniform => QuantumState::uniform(h0.dim())?,
        InitialState::FromFile(path) => load_state(path)?,
    };
    let cfg = PropagatorConfig {
        dt: opts.dt,
        krylov_dim: opts.krylov_dim,
        tol: opts.tol,
        max_steps: config::DEFAULT_MAX_STEPS,
    };
    let (mut record, state) = evolve_real(&layout, &psi0, opts.t_final, &cfg)?;
    if !opts.observables {
        record.wire_names.clear();
    }
    if let Some(path) = &opts.csv_out {
        let mut buf = Vec::new();
        record
            .write_csv(&mut buf)
            .expect("writing to memory cannot fail");
        write_string(path, &String::from_utf8(buf).expect("csv is utf-8"))?;
    }
    if let Some(path) = &opts.json_out {
        let doc = StateDoc::from_state(&state, layout.radices());
        write_string(path, &to_pretty_json(&doc))?;
    }
    let last = record.len() - 1;
    println!(
        "evolved to t = {}: energy {}, norm {}",
        record.times[last], record.energies[last], record.norms[last]
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxMode {
    Imaginary,
    Lindblad,
}

#[derive(Debug, Clone)]
pub struct RelaxOptions {
    pub mode: RelaxMode,
    pub temperature: f64,
    pub gamma0: f64,
    pub dtau: f64,
    pub relax_tol: f64,
    pub t_final: f64,
    pub dt: f64,
    pub init: InitialState,
    pub csv_out: Option<std::path::PathBuf>,
    pub json_out: Option<std::path::PathBuf>,
    pub seed: u64,
    pub krylov_dim: usize,
    pub tol: f64,
}

/// Imaginary-time or Lindblad relaxation; energy trace to CSV, final
/// state/density matrix to JSON.
pub fn cmd_relax(model_path: &Path, opts: &RelaxOptions) -> Result<()> {
    let model = load_model(model_path)?;
    let layout = compile(&model)?;
    let h = assemble(&layout, 0.0)?;
    match opts.mode {
        RelaxMode::Imaginary => {
            let psi0 = match &opts.init {
                InitialState::Random => QuantumState::random(h.dim(), opts.seed)?,
                InitialState::GroundStart => ground_state(&h, opts.seed)?,
                InitialState::Uniform => QuantumState::uniform(h.dim())?,
                InitialState::FromFile(path) => load_state(path)?,
            };
            let cfg = PropagatorConfig {
                dt: opts.dt,
                krylov_dim: opts.krylov_dim,
                tol: opts.tol,
                max_steps: config::DEFAULT_MAX_STEPS,
            };
            let result = relax_imaginary(&layout, &psi0, opts.dtau, opts.relax_tol, &cfg)?;
            if let Some(path) = &opts.csv_out {
                let mut record = TrajectoryRecord::new(Vec::new());
                let mut buf = Vec::new();
                for (k, e) in result.energies.iter().enumerate() {
                    record.times.push(k as f64 * opts.dtau);
                    record.energies.push(*e);
                    record.norms.push(1.0);
                    record.means.push(Vec::new());
                    record.variances.push(Vec::new());
                }
                record.write_csv(&mut buf).expect("memory write");
                write_string(path, &String::from_utf8(buf).expect("csv is utf-8"))?;
            }
            if let Some(path) = &opts.json_out {
                let doc = StateDoc::from_state(&result.state, layout.radices());
                write_string(path, &to_pretty_json(&doc))?;
            }
            println!(
                "imaginary-time relaxation converged in {} steps: energy {}",
                result.steps,
                result.energies.last().unwrap()
            );
        }
        RelaxMode::Lindblad => {
            let rho0 = match &opts.init {
                InitialState::Uniform | InitialState::Random => {
                    DensityMatrix::pure(&QuantumState::uniform(h.dim())?)
                }
                InitialState::GroundStart => {
                    DensityMatrix::pure(&ground_state(&h, opts.seed)?)
                }
                InitialState::FromFile(path) => DensityMatrix::pure(&load_state(path)?),
            };
            let bath = BathSpec {
                temperature: opts.temperature,
                gamma0: opts.gamma0,
            };
            let result = lindblad_relax(&layout, &rho0, &bath, opts.t_final, opts.dt)?;
            if let Some(warning) = &result.reachability_warning {
                eprintln!("warning: {warning}");
            }
            if let Some(path) = &opts.csv_out {
                let mut buf = Vec::new();
                result.record.write_csv(&mut buf).expect("memory write");
                write_string(path, &String::from_utf8(buf).expect("csv is utf-8"))?;
            }
            if let Some(path) = &opts.json_out {
                let doc = DensityDoc::from_density(&result.rho, layout.radices());
                write_string(path, &to_pretty_json(&doc))?;
            }
            let last = result.record.len() - 1;
            println!(
                "lindblad relaxation to t = {}: energy {}, trace {}",
                result.record.times[last],
                result.record.energies[last],
                result.record.norms[last]
            );
        }
    }
    Ok(())
}

/// Run verification checks; summary table plus the report array go to
/// stdout, optionally also to a JSON file. Fails with a check-failure
/// error unless every selected check passes.
pub fn cmd_verify(
    model_path: &Path,
    selection: CheckSelection,
    json_out: Option<&Path>,
    ctx: &VerifyContext,
) -> Result<()> {
    let model = load_model(model_path)?;
    let reports = run_checks(&model, selection, ctx)?;
    print!("{}", summary_table(&reports));
    let json = to_pretty_json(&reports);
    if let Some(path) = json_out {
        write_string(path, &json)?;
    } else {
        print!("{json}");
    }
    let failed = reports
        .iter()
        .filter(|r| r.status != CheckStatus::Pass)
        .count();
    if failed > 0 {
        return Err(Error::ChecksFailed {
            failed,
            total: reports.len(),
        });
    }
    Ok(())
}

/// Print the resource report for a model.
pub fn cmd_resources(model_path: &Path, json_out: Option<&Path>) -> Result<()> {
    let model = load_model(model_path)?;
    let layout = compile(&model)?;
    let report = resource_report(&layout);
    let text = to_pretty_json(&report);
    if let Some(path) = json_out {
        write_string(path, &text)?;
    }
    print!("{text}");
    Ok(())
}

/// Write the Gibbs state of a model at temperature T (used by examples and
/// tests; not a CLI command).
pub fn gibbs_density_doc(layout: &SimulatorLayout, temperature: f64) -> Result<DensityDoc> {
    let h = assemble(layout, 0.0)?;
    let rho = gibbs_state(&h, temperature)?;
    Ok(DensityDoc::from_density(&rho, layout.radices()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;

    fn coupled_harmonic_file() -> ModelFile {
        let mut params = BTreeMap::new();
        params.insert("N".to_string(), 6.0);
        ModelFile::from_model(&builtin("coupled_harmonic", &params).unwrap())
    }

    #[test]
    fn model_file_round_trip() {
        let file = coupled_harmonic_file();
        let text = serde_json::to_string_pretty(&file).unwrap();
        let parsed: ModelFile = serde_json::from_str(&text).unwrap();
        let model = parsed.to_model().unwrap();
        assert_eq!(model.wires().len(), 2);
        assert_eq!(model.pairs().len(), 1);
        let reserialized = serde_json::to_string_pretty(&ModelFile::from_model(&model)).unwrap();
        assert_eq!(text, reserialized);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{ "wires": [{"name": "x1", "sites": 4}], "frobnicator": 1 }"#;
        let err = serde_json::from_str::<ModelFile>(text).unwrap_err();
        assert!(err.to_string().contains("frobnicator"), "{err}");

        let text = r#"{ "wires": [{"name": "x1", "sites": 4, "bogus": 2}] }"#;
        assert!(serde_json::from_str::<ModelFile>(text).is_err());
    }

    #[test]
    fn defaults_are_applied() {
        let text = r#"{ "wires": [{"name": "x1", "sites": 4}] }"#;
        let file: ModelFile = serde_json::from_str(text).unwrap();
        assert_eq!(file.scale, 1.0);
        let model = file.to_model().unwrap();
        assert_eq!(model.wires()[0].mass, 1.0);
        assert_eq!(model.wires()[0].length, 1.0);
    }

    #[test]
    fn bad_expression_is_a_validation_error() {
        let text = r#"{
            "wires": [{"name": "x1", "sites": 4}],
            "one_body": [{"wire": "x1", "expr": "x1 + * 2"}]
        }"#;
        let file: ModelFile = serde_json::from_str(text).unwrap();
        match file.to_model() {
            Err(Error::Validation { violations }) => {
                assert!(violations[0].contains("parse error"), "{violations:?}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn state_doc_round_trip() {
        let state = QuantumState::random(6, 3).unwrap();
        let doc = StateDoc::from_state(&state, vec![6]);
        let text = serde_json::to_string(&doc).unwrap();
        let parsed: StateDoc = serde_json::from_str(&text).unwrap();
        let back = parsed.to_state().unwrap();
        assert!((back.amplitudes() - state.amplitudes()).norm() < 1e-15);
        assert_eq!(doc.basis, "mixed-radix-row-major-last-fastest");
    }
}
