//! Source-model definition and validation.
//!
//! A model is the continuous-variable Hamiltonian before discretization:
//!
//! ```text
//!   H(t) = K + sum_{i<j} h_ij(x_i, x_j) + sum_k g_k(x_k, t)
//! ```
//!
//! with one wire (coordinate axis of length L, hard walls) per continuous
//! variable, pairwise potentials `h_ij`, one-body fields `g_k`, and a global
//! energy scale factor applied to the whole operator after assembly.
//!
//! Units are dimensionless with hbar = 1; masses and lengths default to 1.
//! The scale factor makes absolute units immaterial: rescaling multiplies
//! every energy by the same constant and divides times by it.

use crate::dsl::{parse, Expr};
use crate::error::{Error, Result};
use std::collections::{BTreeMap, BTreeSet};

/// One continuous degree of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct WireSpec {
    /// Identifier of the form `x<digits>`; doubles as the variable name in
    /// potential expressions.
    pub name: String,
    pub mass: f64,
    /// Wire length L; the particle lives on (0, L) with hard walls.
    pub length: f64,
    /// Number of interior grid sites N used at discretization.
    pub sites: usize,
}

impl WireSpec {
    pub fn new(name: &str, sites: usize) -> Self {
        WireSpec {
            name: name.to_string(),
            mass: 1.0,
            length: 1.0,
            sites,
        }
    }
}

/// Pairwise potential h(x_i, x_j) between two distinct wires.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPotentialSpec {
    pub wire_i: String,
    pub wire_j: String,
    pub expr: Expr,
}

/// One-body field g(x_k, t) on a single wire; may depend on time.
#[derive(Debug, Clone, PartialEq)]
pub struct OneBodyFieldSpec {
    pub wire: String,
    pub expr: Expr,
}

/// Unvalidated model description; call [`ModelDraft::validate`] to obtain a
/// [`ModelSpec`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelDraft {
    pub wires: Vec<WireSpec>,
    pub pairs: Vec<PairPotentialSpec>,
    pub fields: Vec<OneBodyFieldSpec>,
    pub constants: BTreeMap<String, f64>,
    pub scale: f64,
}

impl ModelDraft {
    pub fn new() -> Self {
        ModelDraft {
            scale: 1.0,
            ..Default::default()
        }
    }

    /// Check every invariant and return the frozen model, or the complete
    /// list of violations (not just the first).
    pub fn validate(self) -> Result<ModelSpec> {
        let mut violations = Vec::new();

        if self.wires.is_empty() {
            violations.push("model must declare at least one wire".to_string());
        }

        let mut names = BTreeSet::new();
        for w in &self.wires {
            if !is_wire_name(&w.name) {
                violations.push(format!(
                    "wire name `{}` must match x<digits> (e.g. x1)",
                    w.name
                ));
            }
            if !names.insert(w.name.clone()) {
                violations.push(format!("duplicate wire name `{}`", w.name));
            }
            if !(w.mass.is_finite() && w.mass > 0.0) {
                violations.push(format!("wire `{}`: mass must be finite and > 0", w.name));
            }
            if !(w.length.is_finite() && w.length > 0.0) {
                violations.push(format!("wire `{}`: length must be finite and > 0", w.name));
            }
            if w.sites < 2 {
                violations.push(format!(
                    "wire `{}`: sites must be >= 2, got {}",
                    w.name, w.sites
                ));
            }
        }

        if !(self.scale.is_finite() && self.scale > 0.0) {
            violations.push("scale must be finite and > 0".to_string());
        }

        for (name, value) in &self.constants {
            if name == "pi" || name == "e" || name == "t" {
                violations.push(format!("constant `{name}` shadows a reserved name"));
            } else if is_wire_name(name) {
                violations.push(format!(
                    "constant `{name}` is reserved for wire variables"
                ));
            }
            if !value.is_finite() {
                violations.push(format!("constant `{name}` must be finite"));
            }
        }

        let mut seen_pairs = BTreeSet::new();
        for p in &self.pairs {
            if p.wire_i == p.wire_j {
                violations.push(format!(
                    "pair potential on `{}`: wires must be distinct",
                    p.wire_i
                ));
            }
            for w in [&p.wire_i, &p.wire_j] {
                if !names.contains(w) {
                    violations.push(format!(
                        "pair potential references undeclared wire `{w}`"
                    ));
                }
            }
            let key = if p.wire_i <= p.wire_j {
                (p.wire_i.clone(), p.wire_j.clone())
            } else {
                (p.wire_j.clone(), p.wire_i.clone())
            };
            if !seen_pairs.insert(key) {
                violations.push(format!(
                    "duplicate pair potential for ({}, {})",
                    p.wire_i, p.wire_j
                ));
            }
            let allowed: BTreeSet<&str> = [p.wire_i.as_str(), p.wire_j.as_str()]
                .into_iter()
                .chain(self.constants.keys().map(|s| s.as_str()))
                .collect();
            for v in p.expr.free_variables() {
                if !allowed.contains(v.as_str()) {
                    violations.push(format!(
                        "pair potential ({}, {}): variable `{v}` is not one of the two wires or a declared constant",
                        p.wire_i, p.wire_j
                    ));
                }
            }
        }

        for f in &self.fields {
            if !names.contains(&f.wire) {
                violations.push(format!(
                    "one-body field references undeclared wire `{}`",
                    f.wire
                ));
            }
            let allowed: BTreeSet<&str> = [f.wire.as_str(), "t"]
                .into_iter()
                .chain(self.constants.keys().map(|s| s.as_str()))
                .collect();
            for v in f.expr.free_variables() {
                if !allowed.contains(v.as_str()) {
                    violations.push(format!(
                        "one-body field on `{}`: variable `{v}` is not the wire, `t`, or a declared constant",
                        f.wire
                    ));
                }
            }
        }

        if violations.is_empty() {
            Ok(ModelSpec { draft: self })
        } else {
            Err(Error::Validation { violations })
        }
    }
}

fn is_wire_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next() == Some('x')
        && !name[1..].is_empty()
        && chars.all(|c| c.is_ascii_digit())
}

/// A validated, immutable model. Construct via [`ModelDraft::validate`] or
/// [`builtin`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    draft: ModelDraft,
}

impl ModelSpec {
    pub fn wires(&self) -> &[WireSpec] {
        &self.draft.wires
    }

    pub fn pairs(&self) -> &[PairPotentialSpec] {
        &self.draft.pairs
    }

    pub fn fields(&self) -> &[OneBodyFieldSpec] {
        &self.draft.fields
    }

    pub fn constants(&self) -> &BTreeMap<String, f64> {
        &self.draft.constants
    }

    pub fn scale(&self) -> f64 {
        self.draft.scale
    }

    pub fn wire_index(&self, name: &str) -> Option<usize> {
        self.draft.wires.iter().position(|w| w.name == name)
    }

    /// Copy of the underlying draft, e.g. for editing and re-validating.
    pub fn to_draft(&self) -> ModelDraft {
        self.draft.clone()
    }

    /// Same model with the energy scale replaced.
    pub fn with_scale(&self, scale: f64) -> Result<ModelSpec> {
        let mut draft = self.to_draft();
        draft.scale = scale;
        draft.validate()
    }

    /// True if any one-body field depends on `t`.
    pub fn time_dependent(&self) -> bool {
        self.draft.fields.iter().any(|f| f.expr.depends_on_time())
    }
}

/// Reference problems with known continuum limits, used as oracles by the
/// verification checks.
///
/// * `box` — one wire, zero potential (hard-wall box).
/// * `harmonic` — one wire, field `0.5*m*omega^2*(x1-L/2)^2`.
/// * `coupled_harmonic` — two wires with on-site harmonic wells plus a
///   `0.5*kappa*(x1-x2)^2` coupling.
/// * `double_well_chain` — M wires with quartic double wells and
///   nearest-neighbor quadratic coupling.
///
/// The wells are centered at L/2 so low-lying eigenstates fit inside the
/// hard-wall box; with L = 1 choose omega >= 40 to keep the boundary
/// truncation error below the discretization error.
pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    let known: &[&str] = match name {
        "box" => &["N", "mass", "length", "scale"],
        "harmonic" => &["N", "mass", "length", "scale", "omega"],
        "coupled_harmonic" => &["N", "mass", "length", "scale", "omega", "kappa"],
        "double_well_chain" => &["N", "mass", "length", "scale", "M", "height", "width", "kappa"],
        other => return Err(Error::UnknownBuiltin(other.to_string())),
    };
    for key in params.keys() {
        if !known.contains(&key.as_str()) {
            return Err(Error::UnknownParameter {
                builtin: name.to_string(),
                name: key.clone(),
            });
        }
    }
    let get = |key: &str| -> Result<f64> {
        params.get(key).copied().ok_or_else(|| Error::MissingParameter {
            builtin: name.to_string(),
            name: key.to_string(),
        })
    };
    let opt = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);

    let sites = get("N")? as usize;
    let mass = opt("mass", 1.0);
    let length = opt("length", 1.0);
    let scale = opt("scale", 1.0);

    let wire = |k: usize| WireSpec {
        name: format!("x{k}"),
        mass,
        length,
        sites,
    };

    let mut draft = ModelDraft::new();
    draft.scale = scale;

    match name {
        "box" => {
            draft.wires.push(wire(1));
        }
        "harmonic" => {
            draft.wires.push(wire(1));
            draft.constants.insert("omega".into(), opt("omega", 40.0));
            draft.constants.insert("m".into(), mass);
            draft.constants.insert("c".into(), length / 2.0);
            draft.fields.push(OneBodyFieldSpec {
                wire: "x1".into(),
                expr: parse("0.5*m*omega^2*(x1-c)^2")?,
            });
        }
        "coupled_harmonic" => {
            draft.wires.push(wire(1));
            draft.wires.push(wire(2));
            draft.constants.insert("omega".into(), opt("omega", 40.0));
            draft.constants.insert("kappa".into(), opt("kappa", 200.0));
            draft.constants.insert("m".into(), mass);
            draft.constants.insert("c".into(), length / 2.0);
            for k in 1..=2 {
                draft.fields.push(OneBodyFieldSpec {
                    wire: format!("x{k}"),
                    expr: parse(&format!("0.5*m*omega^2*(x{k}-c)^2"))?,
                });
            }
            draft.pairs.push(PairPotentialSpec {
                wire_i: "x1".into(),
                wire_j: "x2".into(),
                expr: parse("0.5*kappa*(x1-x2)^2")?,
            });
        }
        "double_well_chain" => {
            let m_wires = opt("M", 3.0) as usize;
            if m_wires < 1 {
                return Err(Error::Validation {
                    violations: vec!["double_well_chain: M must be >= 1".into()],
                });
            }
            let width = opt("width", 0.3) * length;
            draft.constants.insert("a".into(), opt("height", 4000.0));
            draft.constants.insert("w2".into(), width * width);
            draft.constants.insert("c".into(), length / 2.0);
            draft.constants.insert("kappa".into(), opt("kappa", 100.0));
            for k in 1..=m_wires {
                draft.wires.push(wire(k));
                draft.fields.push(OneBodyFieldSpec {
                    wire: format!("x{k}"),
                    expr: parse(&format!("a*((x{k}-c)^2 - w2)^2"))?,
                });
            }
            for k in 1..m_wires {
                draft.pairs.push(PairPotentialSpec {
                    wire_i: format!("x{k}"),
                    wire_j: format!("x{}", k + 1),
                    expr: parse(&format!("0.5*kappa*(x{k}-x{})^2", k + 1))?,
                });
            }
        }
        _ => unreachable!(),
    }

    draft.validate()
}
