//! Discretization of a model onto wire grids and coupling tables.
//!
//! Each wire of length L with N sites becomes a uniform grid of N interior
//! nodes x_k = k*L/(N+1), k = 1..N, with hard-wall (Dirichlet) endpoints
//! excluded. A pairwise potential between wires i and j becomes an
//! N_i x N_j table of sampled values — one entry per pair of grid sites.
//! One-body fields become per-wire sample vectors, kept symbolic so
//! time-dependent drives can be resampled at every step. The kinetic term
//! is the second-order central finite difference:
//!
//! ```text
//!   hop    = -1 / (2 m dx^2)     (nearest-neighbor amplitude)
//!   onsite = +1 / (m dx^2)       (= -2 * hop, added to the diagonal)
//! ```
//!
//! A compiled layout also carries a resource report: the number of nonzero
//! coupling entries is bounded by M(M-1)/2 * N^2 and the number of field
//! table entries by M*N (N = max site count), so the hardware cost of the
//! tabulated interaction grows polynomially with the model size.

use crate::dsl::Expr;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, OneBodyFieldSpec, PairPotentialSpec, WireSpec};
use serde::Serialize;

/// Uniform interior grid of one wire.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub wire: String,
    /// dx = L / (N + 1)
    pub spacing: f64,
    /// Positions k*dx for k = 1..N, strictly increasing inside (0, L).
    pub positions: Vec<f64>,
}

/// Sampled pairwise potential; `values` is row-major with rows indexed by
/// wire_i's grid and columns by wire_j's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTable {
    pub wire_i: String,
    pub wire_j: String,
    /// Index of each wire in the layout's wire order.
    pub index_i: usize,
    pub index_j: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl CouplingTable {
    #[inline]
    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.cols + b]
    }

    pub fn nonzero_entries(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

/// One-body field table: the expression is retained so time-dependent
/// drives can be sampled per step; static fields carry a precomputed cache.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTable {
    pub wire: String,
    pub index: usize,
    pub expr: Expr,
    pub time_dependent: bool,
    positions: Vec<f64>,
    static_samples: Option<Vec<f64>>,
}

impl FieldTable {
    /// Field values on the wire's grid at time `t`.
    pub fn sample(&self, t: f64) -> Result<Vec<f64>> {
        if let Some(cached) = &self.static_samples {
            return Ok(cached.clone());
        }
        sample_field_expr(&self.expr, &self.wire, &self.positions, t)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn sample_field_expr(expr: &Expr, wire: &str, positions: &[f64], t: f64) -> Result<Vec<f64>> {
    positions
        .iter()
        .enumerate()
        .map(|(a, &x)| {
            expr.evaluate(&[(wire, x), ("t", t)]).map_err(|e| match e {
                Error::Eval { message, context } => Error::Eval {
                    message: format!("{message} (wire `{wire}`, grid index {a})"),
                    context,
                },
                other => other,
            })
        })
        .collect()
}

/// Finite-difference kinetic coefficients for one wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KineticStencil {
    #[serde(skip)]
    pub index: usize,
    pub wire_mass: f64,
    /// Nearest-neighbor amplitude, always negative.
    pub hop: f64,
    /// Diagonal contribution, equal to -2 * hop.
    pub onsite: f64,
}

/// The compiled simulator: grids, kinetic stencils, coupling tables, field
/// tables, and the global energy scale. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatorLayout {
    wires: Vec<WireSpec>,
    grids: Vec<Grid>,
    stencils: Vec<KineticStencil>,
    couplings: Vec<CouplingTable>,
    fields: Vec<FieldTable>,
    scale: f64,
}

impl SimulatorLayout {
    pub fn wires(&self) -> &[WireSpec] {
        &self.wires
    }

    pub fn grids(&self) -> &[Grid] {
        &self.grids
    }

    pub fn stencils(&self) -> &[KineticStencil] {
        &self.stencils
    }

    pub fn couplings(&self) -> &[CouplingTable] {
        &self.couplings
    }

    pub fn fields(&self) -> &[FieldTable] {
        &self.fields
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn wire_count(&self) -> usize {
        self.wires.len()
    }

    /// Interior site counts per wire.
    pub fn radices(&self) -> Vec<usize> {
        self.grids.iter().map(|g| g.positions.len()).collect()
    }

    pub fn time_dependent(&self) -> bool {
        self.fields.iter().any(|f| f.time_dependent)
    }

    /// Product-space dimension, guarded against overflow.
    pub fn hilbert_dim(&self) -> Result<usize> {
        let mut dim: u128 = 1;
        for g in &self.grids {
            dim = dim.saturating_mul(g.positions.len() as u128);
        }
        if dim > u64::MAX as u128 {
            return Err(Error::Guard {
                what: "hilbert dimension",
                value: u64::MAX,
                limit: u64::MAX,
            });
        }
        Ok(dim as usize)
    }
}

/// N interior nodes at spacing L/(N+1); the walls at 0 and L are excluded.
pub fn make_grid(w: &WireSpec) -> Grid {
    let n = w.sites;
    let spacing = w.length / (n as f64 + 1.0);
    let positions = (1..=n).map(|k| k as f64 * spacing).collect();
    Grid {
        wire: w.name.clone(),
        spacing,
        positions,
    }
}

fn make_stencil(index: usize, w: &WireSpec, grid: &Grid) -> KineticStencil {
    let hop = -1.0 / (2.0 * w.mass * grid.spacing * grid.spacing);
    KineticStencil {
        index,
        wire_mass: w.mass,
        hop,
        onsite: -2.0 * hop,
    }
}

/// Sample a pairwise potential on the two grids. Entry (a, b) holds
/// h(x_a, x_b); an evaluation failure reports the offending indices.
pub fn tabulate_pair(p: &PairPotentialSpec, gi: &Grid, gj: &Grid) -> Result<CouplingTable> {
    debug_assert_eq!(p.wire_i, gi.wire);
    debug_assert_eq!(p.wire_j, gj.wire);
    let rows = gi.positions.len();
    let cols = gj.positions.len();
    let mut values = Vec::with_capacity(rows * cols);
    for (a, &xa) in gi.positions.iter().enumerate() {
        for (b, &xb) in gj.positions.iter().enumerate() {
            let v = p
                .expr
                .evaluate(&[(p.wire_i.as_str(), xa), (p.wire_j.as_str(), xb)])
                .map_err(|e| match e {
                    Error::Eval { message, context } => Error::Eval {
                        message: format!(
                            "{message} (pair ({}, {}), entry ({a}, {b}))",
                            p.wire_i, p.wire_j
                        ),
                        context,
                    },
                    other => other,
                })?;
            values.push(v);
        }
    }
    Ok(CouplingTable {
        wire_i: p.wire_i.clone(),
        wire_j: p.wire_j.clone(),
        index_i: 0,
        index_j: 0,
        rows,
        cols,
        values,
    })
}

/// Sample a one-body field on a grid at time `t`.
pub fn tabulate_field(f: &OneBodyFieldSpec, g: &Grid, t: f64) -> Result<Vec<f64>> {
    sample_field_expr(&f.expr, &f.wire, &g.positions, t)
}

/// Compile a validated model into the full simulator layout. Pure: the same
/// model always produces an identical layout. Multiple field specs on one
/// wire are merged by summing their expressions, so each wire carries at
/// most one field table.
pub fn compile(model: &ModelSpec) -> Result<SimulatorLayout> {
    let wires = model.wires().to_vec();
    let grids: Vec<Grid> = wires.iter().map(make_grid).collect();
    let stencils: Vec<KineticStencil> = wires
        .iter()
        .enumerate()
        .map(|(i, w)| make_stencil(i, w, &grids[i]))
        .collect();

    let constants = model.constants().clone();
    let substitute = |expr: &Expr| -> Expr { bind_constants(expr, &constants) };

    let mut couplings = Vec::new();
    for p in model.pairs() {
        let i = model.wire_index(&p.wire_i).expect("validated");
        let j = model.wire_index(&p.wire_j).expect("validated");
        let bound = PairPotentialSpec {
            wire_i: p.wire_i.clone(),
            wire_j: p.wire_j.clone(),
            expr: substitute(&p.expr),
        };
        let mut table = tabulate_pair(&bound, &grids[i], &grids[j])?;
        table.index_i = i;
        table.index_j = j;
        couplings.push(table);
    }

    let mut fields: Vec<FieldTable> = Vec::new();
    for f in model.fields() {
        let idx = model.wire_index(&f.wire).expect("validated");
        let expr = substitute(&f.expr);
        match fields.iter_mut().find(|t| t.index == idx) {
            Some(existing) => {
                existing.expr = Expr::Binary(
                    crate::dsl::BinOp::Add,
                    Box::new(existing.expr.clone()),
                    Box::new(expr),
                );
                existing.time_dependent = existing.expr.depends_on_time();
            }
            None => {
                let time_dependent = expr.depends_on_time();
                fields.push(FieldTable {
                    wire: f.wire.clone(),
                    index: idx,
                    expr,
                    time_dependent,
                    positions: grids[idx].positions.clone(),
                    static_samples: None,
                });
            }
        }
    }
    // Static fields are sampled once here; evaluation errors surface at
    // compile time rather than on first use.
    for table in &mut fields {
        if !table.time_dependent {
            table.static_samples =
                Some(sample_field_expr(&table.expr, &table.wire, &table.positions, 0.0)?);
        }
    }

    Ok(SimulatorLayout {
        wires,
        grids,
        stencils,
        couplings,
        fields,
        scale: model.scale(),
    })
}

/// Replace declared constants by their numeric values so that tables can be
/// sampled with only wire positions (and `t`) bound.
fn bind_constants(expr: &Expr, constants: &std::collections::BTreeMap<String, f64>) -> Expr {
    match expr {
        Expr::Variable(name) => match constants.get(name) {
            Some(&v) if v >= 0.0 => Expr::Constant(v),
            Some(&v) => Expr::Neg(Box::new(Expr::Constant(-v))),
            None => expr.clone(),
        },
        Expr::Constant(_) => expr.clone(),
        Expr::Neg(inner) => Expr::Neg(Box::new(bind_constants(inner, constants))),
        Expr::Binary(op, lhs, rhs) => Expr::Binary(
            *op,
            Box::new(bind_constants(lhs, constants)),
            Box::new(bind_constants(rhs, constants)),
        ),
        Expr::Call(f, args) => Expr::Call(
            *f,
            args.iter().map(|a| bind_constants(a, constants)).collect(),
        ),
    }
}

/// Resource accounting against the polynomial bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResourceReport {
    /// Wire count M.
    pub wires: usize,
    /// Max site count N over all wires.
    pub max_sites: usize,
    /// Nonzero coupling-table entries (exact zero comparison).
    pub connections_used: u64,
    /// M(M-1)/2 * N^2.
    pub connections_bound: u64,
    /// Total field-table entries.
    pub fields_used: u64,
    /// M * N.
    pub fields_bound: u64,
    /// Product-space dimension.
    pub hilbert_dim: u64,
}

pub fn resource_report(layout: &SimulatorLayout) -> ResourceReport {
    let m = layout.wire_count() as u64;
    let n = layout
        .radices()
        .iter()
        .copied()
        .max()
        .unwrap_or(0) as u64;
    let connections_used = layout
        .couplings()
        .iter()
        .map(|t| t.nonzero_entries() as u64)
        .sum();
    let fields_used = layout.fields().iter().map(|f| f.len() as u64).sum();
    let hilbert_dim = layout
        .radices()
        .iter()
        .fold(1u64, |acc, &r| acc.saturating_mul(r as u64));
    ResourceReport {
        wires: m as usize,
        max_sites: n as usize,
        connections_used,
        connections_bound: m * (m.saturating_sub(1)) / 2 * n * n,
        fields_used,
        fields_bound: m * n,
        hilbert_dim,
    }
}

/// Serializable form of a compiled layout (`compile -o layout.json`).
#[derive(Serialize)]
pub struct LayoutDoc {
    pub scale: f64,
    pub grids: Vec<Grid>,
    pub kinetic: Vec<KineticDoc>,
    pub couplings: Vec<CouplingDoc>,
    pub fields: Vec<FieldDoc>,
    pub resources: ResourceReport,
}

#[derive(Serialize)]
pub struct KineticDoc {
    pub wire: String,
    pub hop: f64,
    pub onsite: f64,
}

#[derive(Serialize)]
pub struct CouplingDoc {
    pub i: String,
    pub j: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major sampled values.
    pub values: Vec<f64>,
}

#[derive(Serialize)]
pub struct FieldDoc {
    pub wire: String,
    pub expr: String,
    pub time_dependent: bool,
}

impl LayoutDoc {
    pub fn from_layout(layout: &SimulatorLayout) -> LayoutDoc {
        LayoutDoc {
            scale: layout.scale(),
            grids: layout.grids().to_vec(),
            kinetic: layout
                .grids()
                .iter()
                .zip(layout.stencils())
                .map(|(g, s)| KineticDoc {
                    wire: g.wire.clone(),
                    hop: s.hop,
                    onsite: s.onsite,
                })
                .collect(),
            couplings: layout
                .couplings()
                .iter()
                .map(|t| CouplingDoc {
                    i: t.wire_i.clone(),
                    j: t.wire_j.clone(),
                    rows: t.rows,
                    cols: t.cols,
                    values: t.values.clone(),
                })
                .collect(),
            fields: layout
                .fields()
                .iter()
                .map(|f| FieldDoc {
                    wire: f.wire.clone(),
                    expr: f.expr.to_string(),
                    time_dependent: f.time_dependent,
                })
                .collect(),
            resources: resource_report(layout),
        }
    }
}
