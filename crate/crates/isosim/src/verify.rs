//! Executable checks of the correspondence properties.
//!
//! Each check measures one claim about a compiled lattice and reports
//! pass/fail against a pinned tolerance:
//!
//! * **spectrum scaling** — eigenvalues at scale `s` equal `s` times the
//!   eigenvalues at scale 1 (relative 1e-10).
//! * **time scaling** — propagating under the `s`-scaled operator for
//!   `t/s` reproduces propagating under the unscaled operator for `t`
//!   (fidelity within 1e-8 of one).
//! * **convergence** — the box ground energy approaches the continuum
//!   value at the second order of the grid spacing (fitted order within
//!   [1.8, 2.2]).
//! * **ground state** — dense/Lanczos ground energy, imaginary-time
//!   relaxation, and zero-temperature Lindblad relaxation all land on the
//!   same state.
//! * **resources** — tabulated connections and fields stay within the
//!   polynomial bounds.
//!
//! Checks are independent and deterministic given a seed; rerunning
//! produces bit-identical measurements.

use crate::compiler::{compile, resource_report};
use crate::config;
use crate::dynamics::{
    evolve_real, lindblad_relax, relax_imaginary, BathSpec, DensityMatrix, PropagatorConfig,
    QuantumState,
};
use crate::error::{Error, Result};
use crate::model::{builtin, ModelSpec};
use crate::operator::assemble;
use serde::Serialize;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The check could not be decided, e.g. the dissipative leg cannot
    /// reach the ground state from the chosen initial condition.
    Indeterminate,
}

/// Outcome of one verification check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub status: CheckStatus,
    pub pass: bool,
    /// Measured violation; a passing determinate check has
    /// `measured <= tolerance`.
    pub measured: f64,
    pub tolerance: f64,
    pub details: serde_json::Value,
}

impl CheckReport {
    fn determinate(name: String, measured: f64, tolerance: f64, details: serde_json::Value) -> Self {
        let pass = measured <= tolerance;
        CheckReport {
            name,
            status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
            pass,
            measured,
            tolerance,
            details,
        }
    }
}

/// Grid-refinement study of a reference problem.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub site_counts: Vec<usize>,
    pub reference_energy: f64,
    pub energies: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of log(error) against log(spacing).
    pub fitted_order: f64,
}

/// Shared knobs for the checks that propagate or relax.
#[derive(Debug, Clone, Copy)]
pub struct VerifyContext {
    pub seed: u64,
    pub gamma0: f64,
    pub krylov_dim: usize,
}

impl Default for VerifyContext {
    fn default() -> Self {
        VerifyContext {
            seed: config::DEFAULT_SEED,
            gamma0: config::DEFAULT_GAMMA0,
            krylov_dim: config::DEFAULT_KRYLOV_DIM,
        }
    }
}

impl VerifyContext {
    fn propagator(&self, dt: f64) -> PropagatorConfig {
        PropagatorConfig {
            dt,
            krylov_dim: self.krylov_dim,
            tol: 1e-12,
            max_steps: config::DEFAULT_MAX_STEPS,
        }
    }
}

/// Eigenvalues must scale linearly with the layout's energy scale.
pub fn check_spectrum_scaling(
    model: &ModelSpec,
    lambda: f64,
    k: usize,
    ctx: &VerifyContext,
) -> Result<CheckReport> {
    let tolerance = 1e-10;
    let base = assemble(&compile(&model.with_scale(1.0)?)?, 0.0)?;
    let scaled = assemble(&compile(&model.with_scale(lambda)?)?, 0.0)?;
    let k = k.min(base.dim());
    let spec1 = base.lowest_eigenpairs(k, 1e-10, ctx.seed)?;
    let spec2 = scaled.lowest_eigenpairs(k, 1e-10, ctx.seed)?;

    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for (a, b) in spec1.eigenvalues.iter().zip(&spec2.eigenvalues) {
        let expected = lambda * a;
        let denom = expected.abs().max(f64::MIN_POSITIVE);
        let rel = (b - expected).abs() / denom;
        worst = worst.max(rel);
        rows.push(json!({ "base": a, "scaled": b, "relative_error": rel }));
    }
    Ok(CheckReport::determinate(
        format!("spectrum-scaling[lambda={lambda}]"),
        worst,
        tolerance,
        json!({ "lambda": lambda, "k": k, "eigenvalues": rows }),
    ))
}

/// Propagating under the scaled operator for `t/lambda` must reproduce
/// propagating under the base operator for `t`.
pub fn check_time_scaling(
    model: &ModelSpec,
    lambda: f64,
    t: f64,
    psi0: Option<&QuantumState>,
    ctx: &VerifyContext,
) -> Result<CheckReport> {
    if model.time_dependent() {
        return Err(Error::Validation {
            violations: vec![
                "time-scaling check requires time-independent fields".to_string(),
            ],
        });
    }
    let tolerance = 1e-8;
    let layout = compile(&model.with_scale(1.0)?)?;
    let dim = layout.hilbert_dim()?;
    let owned;
    let psi0 = match psi0 {
        Some(s) => s,
        None => {
            owned = QuantumState::random(dim, ctx.seed)?;
            &owned
        }
    };
    let cfg = ctx.propagator(0.01);
    let (_, reference) = evolve_real(&layout, psi0, t, &cfg)?;
    let scaled_layout = compile(&model.with_scale(lambda)?)?;
    let (_, rescaled) = evolve_real(&scaled_layout, psi0, t / lambda, &cfg)?;

    let fidelity = reference.fidelity(&rescaled);
    let distance = (reference.amplitudes() - rescaled.amplitudes()).norm();
    Ok(CheckReport::determinate(
        format!("time-scaling[lambda={lambda}]"),
        1.0 - fidelity,
        tolerance,
        json!({ "lambda": lambda, "t": t, "fidelity": fidelity, "state_distance": distance }),
    ))
}

/// Continuum reference energy of a discretizable problem, if known.
fn continuum_reference(problem: &str) -> Result<f64> {
    match problem {
        // ground state of the hard-wall box, pi^2 / (2 m L^2), m = L = 1
        "box" => Ok(std::f64::consts::PI.powi(2) / 2.0),
        // harmonic ground energy omega/2 at the default omega
        "harmonic" => Ok(20.0),
        other => Err(Error::Validation {
            violations: vec![format!(
                "no continuum reference energy for problem `{other}`"
            )],
        }),
    }
}

/// Ground-energy error against the continuum reference across a grid
/// refinement; the fitted order should sit in [1.8, 2.2] for the
/// second-order stencil.
pub fn check_convergence(
    problem: &str,
    site_counts: &[usize],
    ctx: &VerifyContext,
) -> Result<(CheckReport, ConvergenceReport)> {
    if site_counts.len() < 2 {
        return Err(Error::Validation {
            violations: vec!["convergence check needs at least two site counts".to_string()],
        });
    }
    let reference = continuum_reference(problem)?;
    let mut energies = Vec::new();
    let mut errors = Vec::new();
    let mut spacings = Vec::new();
    for &n in site_counts {
        let mut params = std::collections::BTreeMap::new();
        params.insert("N".to_string(), n as f64);
        let model = builtin(problem, &params)?;
        let h = assemble(&compile(&model)?, 0.0)?;
        let spec = h.lowest_eigenpairs(1, 1e-10, ctx.seed)?;
        let e = spec.ground_energy();
        energies.push(e);
        errors.push((e - reference).abs());
        spacings.push(1.0 / (n as f64 + 1.0));
    }

    // least-squares slope of log(err) vs log(dx)
    let xs: Vec<f64> = spacings.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let fitted_order = sxy / sxx;

    let convergence = ConvergenceReport {
        problem: problem.to_string(),
        site_counts: site_counts.to_vec(),
        reference_energy: reference,
        energies,
        errors,
        fitted_order,
    };
    let measured = (fitted_order - 2.0).abs();
    let report = CheckReport::determinate(
        format!("convergence[{problem}]"),
        measured,
        0.2,
        serde_json::to_value(&convergence).expect("serializable"),
    );
    Ok((report, convergence))
}

/// Initial condition for the dissipative leg of the ground-state check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum GroundCheckInit {
    /// Uniform positive pure state; guaranteed nonzero ground overlap.
    #[default]
    Uniform,
    /// Maximally mixed state; populates every eigenstate, including any
    /// that cannot decay to the ground state.
    MaximallyMixed,
}

/// Three-way ground-state agreement: eigensolver energy, imaginary-time
/// endpoint (within 1e-8), and zero-temperature Lindblad ground population
/// (at least 0.999, dimensions up to 128). A broken jump topology marks
/// the check indeterminate instead of failed.
pub fn check_ground_state_correspondence(
    model: &ModelSpec,
    init: GroundCheckInit,
    ctx: &VerifyContext,
) -> Result<CheckReport> {
    let energy_tol = 1e-8;
    let population_target = 0.999;

    let layout = compile(model)?;
    let h = assemble(&layout, 0.0)?;
    let dim = h.dim();
    let spec = h.lowest_eigenpairs(1, 1e-10, ctx.seed)?;
    let ground_energy = spec.ground_energy();
    let ground_vector = spec.ground_state().clone();

    let cfg = ctx.propagator(0.01);
    let psi0 = QuantumState::random(dim, ctx.seed)?;
    let gap_scale = h.norm_est().max(1.0);
    let relax = relax_imaginary(&layout, &psi0, 2.0 / gap_scale * 8.0, 1e-12, &cfg)?;
    let energy_error = (relax.energies.last().unwrap() - ground_energy).abs();
    let monotone = relax
        .energies
        .windows(2)
        .all(|pair| pair[1] <= pair[0] + 1e-10);

    let mut details = json!({
        "ground_energy": ground_energy,
        "imaginary_time_energy": relax.energies.last().unwrap(),
        "imaginary_time_steps": relax.steps,
        "energy_error": energy_error,
        "monotone_energy_trace": monotone,
    });

    let mut indeterminate = None;
    let mut population = f64::NAN;
    if dim <= config::LINDBLAD_DIM_LIMIT {
        let rho0 = match init {
            GroundCheckInit::Uniform => DensityMatrix::pure(&QuantumState::uniform(dim)?),
            GroundCheckInit::MaximallyMixed => DensityMatrix::maximally_mixed(dim),
        };
        let bath = BathSpec {
            temperature: 0.0,
            gamma0: ctx.gamma0,
        };
        let full = h.dense_spectrum(dim)?;
        let spread = full.eigenvalues.last().unwrap() - full.eigenvalues[0];
        let lengths: f64 = layout.wires().iter().map(|w| w.length).sum();
        let dt = 2.0 / (spread + 2.0 * ctx.gamma0 * lengths * lengths + 1.0);
        let chunk = 60.0 / ctx.gamma0;

        let mut rho = rho0;
        let mut warned = None;
        for _ in 0..10 {
            let result = lindblad_relax(&layout, &rho, &bath, chunk, dt)?;
            warned = warned.or(result.reachability_warning);
            rho = result.rho;
            population = rho.population(&ground_vector);
            if population >= population_target || warned.is_some() {
                break;
            }
        }
        details["lindblad_ground_population"] = json!(population);
        details["lindblad_dt"] = json!(dt);
        if let Some(warning) = warned {
            details["lindblad_warning"] = json!(warning);
            indeterminate = Some(warning);
        }
    } else {
        details["lindblad_ground_population"] =
            json!(format!("skipped: dimension {dim} exceeds {}", config::LINDBLAD_DIM_LIMIT));
        population = 1.0; // leg not applicable
    }

    let name = "ground-state-correspondence".to_string();
    if let Some(_warning) = indeterminate {
        return Ok(CheckReport {
            name,
            status: CheckStatus::Indeterminate,
            pass: false,
            measured: energy_error,
            tolerance: energy_tol,
            details,
        });
    }
    let pass = energy_error <= energy_tol && monotone && population >= population_target;
    Ok(CheckReport {
        name,
        status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
        pass,
        measured: energy_error,
        tolerance: energy_tol,
        details,
    })
}

/// Connections and fields must stay within the polynomial bounds.
pub fn check_resource_bound(model: &ModelSpec) -> Result<CheckReport> {
    let layout = compile(model)?;
    let report = resource_report(&layout);
    let conn_ratio = if report.connections_bound == 0 {
        if report.connections_used == 0 { 0.0 } else { f64::INFINITY }
    } else {
        report.connections_used as f64 / report.connections_bound as f64
    };
    let field_ratio = if report.fields_bound == 0 {
        if report.fields_used == 0 { 0.0 } else { f64::INFINITY }
    } else {
        report.fields_used as f64 / report.fields_bound as f64
    };
    Ok(CheckReport::determinate(
        "resource-bound".to_string(),
        conn_ratio.max(field_ratio),
        1.0,
        serde_json::to_value(report).expect("serializable"),
    ))
}

/// Which checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckSelection {
    Scaling,
    TimeScaling,
    Convergence,
    Ground,
    Resources,
    All,
}

/// Run the selected checks on a model with default parameters: scaling at
/// lambda in {0.5, 2, 10} with k = 6, time scaling at lambda in {0.5, 2}
/// with t = 1, box convergence over N in {8, 16, 32, 64}.
pub fn run_checks(
    model: &ModelSpec,
    selection: CheckSelection,
    ctx: &VerifyContext,
) -> Result<Vec<CheckReport>> {
    use CheckSelection::*;
    let mut reports = Vec::new();
    if matches!(selection, Scaling | All) {
        for lambda in [0.5, 2.0, 10.0] {
            reports.push(check_spectrum_scaling(model, lambda, 6, ctx)?);
        }
    }
    if matches!(selection, TimeScaling | All) {
        for lambda in [0.5, 2.0] {
            reports.push(check_time_scaling(model, lambda, 1.0, None, ctx)?);
        }
    }
    if matches!(selection, Convergence | All) {
        let (report, _) = check_convergence("box", &[8, 16, 32, 64], ctx)?;
        reports.push(report);
    }
    if matches!(selection, Ground | All) {
        reports.push(check_ground_state_correspondence(
            model,
            GroundCheckInit::Uniform,
            ctx,
        )?);
    }
    if matches!(selection, Resources | All) {
        reports.push(check_resource_bound(model)?);
    }
    Ok(reports)
}

/// Fixed-width summary table, one row per check.
pub fn summary_table(reports: &[CheckReport]) -> String {
    let mut out = String::new();
    let name_width = reports
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(5)
        .max(5);
    out.push_str(&format!(
        "{:<width$}  {:<13}  {:>12}  {:>12}\n",
        "check",
        "status",
        "measured",
        "tolerance",
        width = name_width
    ));
    for r in reports {
        let status = match r.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Indeterminate => "INDETERMINATE",
        };
        out.push_str(&format!(
            "{:<width$}  {:<13}  {:>12.3e}  {:>12.3e}\n",
            r.name,
            status,
            r.measured,
            r.tolerance,
            width = name_width
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, ModelDraft, WireSpec};
    use std::collections::BTreeMap;

    fn params(entries: &[(&str, f64)]) -> BTreeMap<String, f64> {
        entries.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn spectrum_scaling_passes_on_box() {
        let model = builtin("box", &params(&[("N", 16.0)])).unwrap();
        let ctx = VerifyContext::default();
        for lambda in [1.0, 2.0, 10.0] {
            let report = check_spectrum_scaling(&model, lambda, 6, &ctx).unwrap();
            assert!(report.pass, "lambda={lambda}: {report:?}");
        }
    }

    #[test]
    fn spectrum_scaling_passes_on_coupled_wells() {
        let model = builtin("coupled_harmonic", &params(&[("N", 12.0)])).unwrap();
        let report =
            check_spectrum_scaling(&model, 10.0, 6, &VerifyContext::default()).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn time_scaling_passes_on_box() {
        let model = builtin("box", &params(&[("N", 16.0)])).unwrap();
        let ctx = VerifyContext::default();
        for lambda in [1.0, 2.0, 0.5] {
            let report = check_time_scaling(&model, lambda, 1.0, None, &ctx).unwrap();
            assert!(report.pass, "lambda={lambda}: {report:?}");
        }
    }

    #[test]
    fn time_scaling_rejects_driven_models() {
        let mut draft = builtin("box", &params(&[("N", 8.0)])).unwrap().to_draft();
        draft.fields.push(crate::model::OneBodyFieldSpec {
            wire: "x1".into(),
            expr: crate::dsl::parse("sin(t)*x1").unwrap(),
        });
        let model = draft.validate().unwrap();
        assert!(check_time_scaling(&model, 2.0, 1.0, None, &VerifyContext::default()).is_err());
    }

    #[test]
    fn convergence_order_is_second() {
        let (report, detail) =
            check_convergence("box", &[8, 16, 32, 64], &VerifyContext::default()).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(detail.fitted_order > 1.8 && detail.fitted_order < 2.2);
        // halving the spacing divides the error by about four
        let idx16 = detail.site_counts.iter().position(|&n| n == 16).unwrap();
        let idx32 = detail.site_counts.iter().position(|&n| n == 32).unwrap();
        // spacing ratio between N=16 and N=32 is 17/33, not exactly 1/2
        let ratio = detail.errors[idx16] / detail.errors[idx32];
        let spacing_ratio = 33.0 / 17.0;
        let expected = spacing_ratio * spacing_ratio;
        assert!(
            (ratio / expected - 1.0).abs() < 0.15,
            "error ratio {ratio}, expected about {expected}"
        );
    }

    #[test]
    fn ground_state_correspondence_on_box() {
        let model = builtin("box", &params(&[("N", 16.0)])).unwrap();
        let report = check_ground_state_correspondence(
            &model,
            GroundCheckInit::Uniform,
            &VerifyContext::default(),
        )
        .unwrap();
        assert_eq!(report.status, CheckStatus::Pass, "{report:?}");
    }

    #[test]
    fn ground_state_correspondence_flags_broken_topology() {
        // two identical uncoupled wires + maximally mixed initial state
        let mut draft = ModelDraft::new();
        draft.wires.push(WireSpec::new("x1", 4));
        draft.wires.push(WireSpec::new("x2", 4));
        let model = draft.validate().unwrap();
        let report = check_ground_state_correspondence(
            &model,
            GroundCheckInit::MaximallyMixed,
            &VerifyContext::default(),
        )
        .unwrap();
        assert_eq!(report.status, CheckStatus::Indeterminate, "{report:?}");
    }

    #[test]
    fn resource_bound_examples() {
        let model = builtin("coupled_harmonic", &params(&[("N", 10.0)])).unwrap();
        let report = check_resource_bound(&model).unwrap();
        assert!(report.pass);

        // zero pair potential uses no connections
        let mut draft = ModelDraft::new();
        draft.wires.push(WireSpec::new("x1", 5));
        draft.wires.push(WireSpec::new("x2", 5));
        draft.pairs.push(crate::model::PairPotentialSpec {
            wire_i: "x1".into(),
            wire_j: "x2".into(),
            expr: crate::dsl::parse("0").unwrap(),
        });
        let report = check_resource_bound(&draft.validate().unwrap()).unwrap();
        assert!(report.pass);
        assert_eq!(report.details["connections_used"], 0);
    }

    #[test]
    fn reports_are_reproducible() {
        let model = builtin("coupled_harmonic", &params(&[("N", 6.0)])).unwrap();
        let ctx = VerifyContext::default();
        let a = check_time_scaling(&model, 2.0, 0.5, None, &ctx).unwrap();
        let b = check_time_scaling(&model, 2.0, 0.5, None, &ctx).unwrap();
        assert_eq!(a.measured.to_bits(), b.measured.to_bits());
        assert_eq!(a.pass, b.pass);
    }

    #[test]
    fn scaling_round_trip_composes() {
        let model = builtin("box", &params(&[("N", 12.0)])).unwrap();
        let ctx = VerifyContext::default();
        let up = check_spectrum_scaling(&model, 4.0, 4, &ctx).unwrap();
        let down = check_spectrum_scaling(&model, 0.25, 4, &ctx).unwrap();
        assert!(up.pass && down.pass);
    }
}
