//! Time evolution and relaxation.
//!
//! Three simulation modes on top of the assembled operator:
//!
//! * **Real time** — `psi(t+dt) = exp(-i dt H(t+dt/2)) psi(t)` with the
//!   exponential midpoint rule (second order for driven fields) and a
//!   Krylov (Lanczos) approximation of `exp(zH)v` with adaptive
//!   substepping. Closed evolution preserves the norm and, for static
//!   Hamiltonians, the energy.
//! * **Imaginary time** — repeated application of `exp(-dtau H)` with
//!   renormalization projects any state with nonzero ground overlap onto
//!   the ground state; the energy trace is monotonically nonincreasing.
//! * **Open system** — a Lindblad master equation with jump operators
//!   `L_mn = <m|C|n> |m><n|` built in the energy eigenbasis, where
//!   `C = sum_w X_w` is the total position operator. Rates obey detailed
//!   balance `gamma(-w) = exp(-w/T) gamma(w)` with `gamma(w) = gamma0` for
//!   `w >= 0`, so the fixed point is the Gibbs state (the ground-state
//!   projector at T = 0). Integration is classical fourth-order
//!   Runge-Kutta on the density matrix in the eigenbasis.

use crate::compiler::{Grid, SimulatorLayout};
use crate::config;
use crate::error::{Error, Result};
use crate::operator::{assemble, tridiag_eigen, BasisIndexer, SparseHamiltonian};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Normalized complex amplitude vector over the configuration basis
/// (mixed-radix row-major, last wire fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: DVector<Complex64>,
}

impl QuantumState {
    /// Wrap an already normalized vector; the norm must be 1 within 1e-8.
    pub fn new(amplitudes: DVector<Complex64>) -> Result<QuantumState> {
        let deviation = (amplitudes.norm() - 1.0).abs();
        if deviation > 1e-8 {
            return Err(Error::Unnormalized { deviation });
        }
        Ok(QuantumState { amplitudes })
    }

    /// Normalize a nonzero vector.
    pub fn from_unnormalized(amplitudes: DVector<Complex64>) -> Result<QuantumState> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NonFinite("normalizing a zero or non-finite state".into()));
        }
        Ok(QuantumState {
            amplitudes: amplitudes / Complex64::new(norm, 0.0),
        })
    }

    pub fn from_real(v: DVector<f64>) -> Result<QuantumState> {
        Self::from_unnormalized(v.map(|x| Complex64::new(x, 0.0)))
    }

    /// The uniform positive state `1/sqrt(D) (1, ..., 1)`. Its overlap with
    /// the ground state is strictly positive because the ground vector can
    /// be chosen entrywise nonnegative.
    pub fn uniform(dim: usize) -> Result<QuantumState> {
        Self::from_unnormalized(DVector::from_element(dim, Complex64::new(1.0, 0.0)))
    }

    /// Seeded random complex state.
    pub fn random(dim: usize, seed: u64) -> Result<QuantumState> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self::from_unnormalized(DVector::from_fn(dim, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        }))
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &QuantumState) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// `|<self|other>|`.
    pub fn fidelity(&self, other: &QuantumState) -> f64 {
        self.overlap(other).norm()
    }
}

/// Trace-one positive Hermitian matrix for open-system evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validate Hermiticity (1e-10), unit trace (1e-8), and the eigenvalue
    /// floor (-1e-9).
    pub fn new(mat: DMatrix<Complex64>) -> Result<DensityMatrix> {
        Self::with_floor(mat, -1e-9)
    }

    fn with_floor(mat: DMatrix<Complex64>, floor: f64) -> Result<DensityMatrix> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Dimension {
                expected: mat.nrows(),
                actual: mat.ncols(),
            });
        }
        let herm = hermiticity_defect(&mat);
        if herm > 1e-10 {
            return Err(Error::InvalidDensity(format!(
                "Hermiticity defect {herm:.3e} exceeds 1e-10"
            )));
        }
        let trace_dev = (mat.trace() - Complex64::new(1.0, 0.0)).norm();
        if trace_dev > 1e-8 {
            return Err(Error::InvalidDensity(format!(
                "trace deviates from one by {trace_dev:.3e}"
            )));
        }
        let min_eig = min_hermitian_eigenvalue(&mat);
        if min_eig < floor {
            return Err(Error::Positivity {
                min: min_eig,
                floor,
            });
        }
        Ok(DensityMatrix { mat })
    }

    /// `|psi><psi|`.
    pub fn pure(state: &QuantumState) -> DensityMatrix {
        let v = state.amplitudes();
        let mut mat = DMatrix::zeros(v.len(), v.len());
        for i in 0..v.len() {
            for j in 0..v.len() {
                mat[(i, j)] = v[i] * v[j].conj();
            }
        }
        DensityMatrix { mat }
    }

    /// `I/D`.
    pub fn maximally_mixed(dim: usize) -> DensityMatrix {
        let mat = DMatrix::from_diagonal_element(dim, dim, Complex64::new(1.0 / dim as f64, 0.0));
        DensityMatrix { mat }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    /// `<v|rho|v>` for a real unit vector, e.g. the population of an
    /// eigenstate.
    pub fn population(&self, v: &DVector<f64>) -> f64 {
        let vc: DVector<Complex64> = v.map(|x| Complex64::new(x, 0.0));
        vc.dotc(&(&self.mat * &vc)).re
    }
}

fn hermiticity_defect(mat: &DMatrix<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            worst = worst.max((mat[(i, j)] - mat[(j, i)].conj()).norm());
        }
    }
    worst
}

fn min_hermitian_eigenvalue(mat: &DMatrix<Complex64>) -> f64 {
    mat.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &x| acc.min(x))
}

/// Trace distance `0.5 * ||a - b||_1` between two density matrices.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let diff = a.matrix() - b.matrix();
    0.5 * diff
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|x| x.abs())
        .sum::<f64>()
}

/// Environment coupling: the operator is fixed to the total position
/// `C = sum_w X_w`; the base rate applies to every downward transition.
#[derive(Debug, Clone, Copy)]
pub struct BathSpec {
    /// Temperature, `0.0` (only downward jumps) through `f64::INFINITY`
    /// (symmetric rates).
    pub temperature: f64,
    /// Base jump rate for energy-lowering transitions.
    pub gamma0: f64,
}

impl BathSpec {
    pub fn validate(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::InvalidDensity(format!(
                "bath temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.gamma0.is_finite() && self.gamma0 > 0.0) {
            return Err(Error::InvalidDensity(format!(
                "bath base rate must be finite and > 0, got {}",
                self.gamma0
            )));
        }
        Ok(())
    }

    /// Jump rate prefactor for a transition releasing energy `omega`;
    /// detailed balance fixes the upward side.
    fn rate(&self, omega: f64) -> f64 {
        if omega >= 0.0 {
            self.gamma0
        } else if self.temperature == 0.0 {
            0.0
        } else {
            self.gamma0 * (omega / self.temperature).exp()
        }
    }
}

/// Step-size and tolerance knobs for the Krylov propagator.
#[derive(Debug, Clone, Copy)]
pub struct PropagatorConfig {
    pub dt: f64,
    pub krylov_dim: usize,
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        PropagatorConfig {
            dt: config::DEFAULT_DT,
            krylov_dim: config::DEFAULT_KRYLOV_DIM,
            tol: config::DEFAULT_TOL,
            max_steps: config::DEFAULT_MAX_STEPS,
        }
    }
}

impl PropagatorConfig {
    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Guard {
                what: "propagator dt",
                value: 0,
                limit: 0,
            });
        }
        if self.krylov_dim < 2 {
            return Err(Error::Guard {
                what: "krylov dimension",
                value: self.krylov_dim as u64,
                limit: 2,
            });
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Guard {
                what: "propagator tolerance",
                value: 0,
                limit: 0,
            });
        }
        Ok(())
    }
}

/// Per-sample observables of a propagation run.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryRecord {
    pub wire_names: Vec<String>,
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    /// State norm for closed runs, trace for density-matrix runs.
    pub norms: Vec<f64>,
    /// Per-sample, per-wire position mean.
    pub means: Vec<Vec<f64>>,
    /// Per-sample, per-wire position variance.
    pub variances: Vec<Vec<f64>>,
}

impl TrajectoryRecord {
    pub fn new(wire_names: Vec<String>) -> TrajectoryRecord {
        TrajectoryRecord {
            wire_names,
            ..Default::default()
        }
    }

    fn push(&mut self, t: f64, energy: f64, norm: f64, moments: Vec<(f64, f64)>) {
        self.times.push(t);
        self.energies.push(energy);
        self.norms.push(norm);
        self.means.push(moments.iter().map(|m| m.0).collect());
        self.variances.push(moments.iter().map(|m| m.1).collect());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `time,energy,norm,mean_<wire>,var_<wire>,...`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        write!(out, "time,energy,norm")?;
        for name in &self.wire_names {
            write!(out, ",mean_{name},var_{name}")?;
        }
        writeln!(out)?;
        for s in 0..self.len() {
            write!(out, "{},{},{}", self.times[s], self.energies[s], self.norms[s])?;
            for w in 0..self.wire_names.len() {
                write!(out, ",{},{}", self.means[s][w], self.variances[s][w])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Per-wire position mean and variance of a pure state.
pub fn position_moments(
    indexer: &BasisIndexer,
    grids: &[Grid],
    amplitudes: &DVector<Complex64>,
) -> Vec<(f64, f64)> {
    let d = indexer.dim();
    let total: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
    let mut out = Vec::with_capacity(grids.len());
    for (w, grid) in grids.iter().enumerate() {
        let mut mean = 0.0;
        let mut meansq = 0.0;
        for c in 0..d {
            let p = amplitudes[c].norm_sqr();
            let x = grid.positions[indexer.digit(c, w)];
            mean += p * x;
            meansq += p * x * x;
        }
        mean /= total;
        meansq /= total;
        out.push((mean, (meansq - mean * mean).max(0.0)));
    }
    out
}

struct LanczosBasis {
    vectors: Vec<DVector<Complex64>>,
    alphas: Vec<f64>,
    offdiag: Vec<f64>,
    next_beta: f64,
    happy: bool,
}

/// Hermitian Lanczos recurrence on a complex start vector with full
/// reorthogonalization. The start vector is NOT consumed normalized; the
/// caller keeps track of its norm.
fn lanczos_basis(h: &SparseHamiltonian, start: &DVector<Complex64>, m_max: usize) -> LanczosBasis {
    let breakdown = 1e-13 * h.norm_est().max(1.0);
    let beta0 = start.norm();
    let mut vectors = vec![start / Complex64::new(beta0, 0.0)];
    let mut alphas: Vec<f64> = Vec::new();
    let mut offdiag: Vec<f64> = Vec::new();

    loop {
        let j = alphas.len();
        let mut w = h.apply_unchecked(&vectors[j]);
        let alpha = vectors[j].dotc(&w).re;
        alphas.push(alpha);
        w -= &vectors[j] * Complex64::new(alpha, 0.0);
        if j > 0 {
            w -= &vectors[j - 1] * Complex64::new(offdiag[j - 1], 0.0);
        }
        for q in &vectors {
            let overlap = q.dotc(&w);
            w -= q * overlap;
        }
        let beta = w.norm();
        if beta <= breakdown {
            return LanczosBasis {
                vectors,
                alphas,
                offdiag,
                next_beta: 0.0,
                happy: true,
            };
        }
        if alphas.len() == m_max {
            return LanczosBasis {
                vectors,
                alphas,
                offdiag,
                next_beta: beta,
                happy: false,
            };
        }
        offdiag.push(beta);
        vectors.push(w / Complex64::new(beta, 0.0));
    }
}

/// `exp(zeta T) e1` in the tridiagonal eigenbasis, with a shift by the
/// largest real exponent so intermediate factors never overflow.
fn expm_tridiag_e1(evals: &[f64], evecs: &DMatrix<f64>, zeta: Complex64) -> Result<Vec<Complex64>> {
    let m = evals.len();
    let shift = evals
        .iter()
        .map(|&l| (zeta * l).re)
        .fold(f64::NEG_INFINITY, f64::max);
    let outer = Complex64::new(shift, 0.0).exp();
    let mut u = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..m {
        let factor = (zeta * evals[i] - Complex64::new(shift, 0.0)).exp() * evecs[(0, i)];
        for (j, slot) in u.iter_mut().enumerate() {
            *slot += factor * evecs[(j, i)];
        }
    }
    for slot in u.iter_mut() {
        *slot *= outer;
        if !slot.re.is_finite() || !slot.im.is_finite() {
            return Err(Error::NonFinite("evaluating the subspace exponential".into()));
        }
    }
    Ok(u)
}

/// Approximate `exp(z H) v` in a Krylov subspace of dimension at most
/// `cfg.krylov_dim`, with adaptive substepping until the accumulated error
/// estimate is below `cfg.tol * ||v||`. Exact (up to roundoff) whenever the
/// Krylov space closes, in particular for `dim(H) <= krylov_dim`.
pub fn krylov_expv(
    h: &SparseHamiltonian,
    v: &DVector<Complex64>,
    z: Complex64,
    cfg: &PropagatorConfig,
) -> Result<DVector<Complex64>> {
    cfg.validate()?;
    if v.len() != h.dim() {
        return Err(Error::Dimension {
            expected: h.dim(),
            actual: v.len(),
        });
    }
    let vnorm0 = v.norm();
    if z.norm() == 0.0 || vnorm0 == 0.0 {
        return Ok(v.clone());
    }
    let m_max = cfg.krylov_dim.min(h.dim());

    let mut w = v.clone();
    let mut done = 0.0f64;
    let work = z.norm() * h.norm_est();
    let mut tau_guess = if work <= 1.0 {
        1.0
    } else {
        (m_max as f64 / work).min(1.0)
    };

    let mut substeps = 0usize;
    while done < 1.0 {
        substeps += 1;
        if substeps > 200_000 {
            return Err(Error::NonConvergence {
                message: "Krylov propagator exceeded the substep budget".into(),
                best: f64::NAN,
            });
        }
        let beta = w.norm();
        if beta == 0.0 {
            return Ok(w);
        }
        let basis = lanczos_basis(h, &w, m_max);
        let m = basis.alphas.len();
        let (evals, evecs) = tridiag_eigen(&basis.alphas, &basis.offdiag);

        let mut tau = tau_guess.min(1.0 - done);
        loop {
            let u = expm_tridiag_e1(&evals, &evecs, z * tau)?;
            let err_est = if basis.happy {
                0.0
            } else {
                basis.next_beta * u[m - 1].norm() * beta
            };
            if basis.happy || err_est <= cfg.tol * vnorm0 * tau.max(f64::MIN_POSITIVE) {
                let mut next = DVector::from_element(w.len(), Complex64::new(0.0, 0.0));
                for (j, q) in basis.vectors.iter().enumerate() {
                    next += q * (u[j] * beta);
                }
                if !next.norm().is_finite() {
                    return Err(Error::NonFinite("Krylov propagation overflowed".into()));
                }
                w = next;
                done += tau;
                tau_guess = (tau * 1.5).min(1.0);
                break;
            }
            tau *= 0.5;
            if tau < 1e-12 {
                return Err(Error::NonConvergence {
                    message: "Krylov substep collapsed below 1e-12".into(),
                    best: err_est / vnorm0,
                });
            }
        }
    }
    Ok(w)
}

/// Real-time evolution under the layout's (possibly driven) Hamiltonian
/// with the exponential midpoint rule. Returns the per-step trajectory and
/// the final state; the norm is never renormalized, so norm drift is
/// observable in the record.
pub fn evolve_real(
    layout: &SimulatorLayout,
    psi0: &QuantumState,
    t_final: f64,
    cfg: &PropagatorConfig,
) -> Result<(TrajectoryRecord, QuantumState)> {
    cfg.validate()?;
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::NonFinite("evolving for a non-positive time".into()));
    }
    let time_dep = layout.time_dependent();
    let h0 = assemble(layout, 0.0)?;
    if psi0.dim() != h0.dim() {
        return Err(Error::Dimension {
            expected: h0.dim(),
            actual: psi0.dim(),
        });
    }

    let wire_names = layout.wires().iter().map(|w| w.name.clone()).collect();
    let mut record = TrajectoryRecord::new(wire_names);
    let mut v = psi0.amplitudes().clone();

    let sample = |record: &mut TrajectoryRecord,
                  h_t: &SparseHamiltonian,
                  t: f64,
                  v: &DVector<Complex64>| {
        let norm = v.norm();
        let energy = h_t.rayleigh(v) / (norm * norm);
        let moments = position_moments(h_t.indexer(), layout.grids(), v);
        record.push(t, energy, norm, moments);
    };
    sample(&mut record, &h0, 0.0, &v);

    let mut t = 0.0;
    let mut steps = 0usize;
    while t < t_final - 1e-15 * t_final {
        steps += 1;
        if steps > cfg.max_steps {
            return Err(Error::NonConvergence {
                message: format!("evolution exceeded max_steps = {}", cfg.max_steps),
                best: t_final - t,
            });
        }
        let step = cfg.dt.min(t_final - t);
        let h_mid = if time_dep {
            assemble(layout, t + 0.5 * step)?
        } else {
            h0.clone()
        };
        v = krylov_expv(&h_mid, &v, Complex64::new(0.0, -step), cfg)?;
        t += step;
        if time_dep {
            let h_t = assemble(layout, t)?;
            sample(&mut record, &h_t, t, &v);
        } else {
            sample(&mut record, &h0, t, &v);
        }
    }

    let state = QuantumState::new(v)?;
    Ok((record, state))
}

/// Result of an imaginary-time relaxation run.
#[derive(Debug, Clone)]
pub struct RelaxationResult {
    pub state: QuantumState,
    /// Energy after 0, 1, 2, ... applications of `exp(-dtau H)`.
    pub energies: Vec<f64>,
    /// Number of applications performed before the energy change fell
    /// below the tolerance.
    pub steps: usize,
}

/// Project onto the ground state by normalized imaginary-time stepping;
/// stops when the energy change per step drops below `tol`. Fields are
/// frozen at t = 0.
pub fn relax_imaginary(
    layout: &SimulatorLayout,
    psi0: &QuantumState,
    dtau: f64,
    tol: f64,
    cfg: &PropagatorConfig,
) -> Result<RelaxationResult> {
    cfg.validate()?;
    if !(dtau.is_finite() && dtau > 0.0) {
        return Err(Error::NonFinite("imaginary-time step must be > 0".into()));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::NonFinite("relaxation tolerance must be > 0".into()));
    }
    let h = assemble(layout, 0.0)?;
    if psi0.dim() != h.dim() {
        return Err(Error::Dimension {
            expected: h.dim(),
            actual: psi0.dim(),
        });
    }

    let mut v = psi0.amplitudes().clone();
    let mut energies = vec![h.rayleigh(&v)];
    let mut best_change = f64::INFINITY;
    for step in 1..=cfg.max_steps {
        v = krylov_expv(&h, &v, Complex64::new(-dtau, 0.0), cfg)?;
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NonFinite("imaginary-time step underflowed".into()));
        }
        v /= Complex64::new(norm, 0.0);
        let energy = h.rayleigh(&v);
        let change = (energy - energies[energies.len() - 1]).abs();
        energies.push(energy);
        best_change = best_change.min(change);
        if change < tol {
            return Ok(RelaxationResult {
                state: QuantumState::new(v)?,
                energies,
                steps: step,
            });
        }
    }
    Err(Error::NonConvergence {
        message: format!(
            "imaginary-time energy still changing after {} steps",
            cfg.max_steps
        ),
        best: best_change,
    })
}

/// Result of a Lindblad relaxation run.
#[derive(Debug, Clone)]
pub struct LindbladResult {
    pub rho: DensityMatrix,
    pub record: TrajectoryRecord,
    /// Initial population on eigenstates that cannot reach the ground state
    /// through any chain of nonzero-rate jumps; nonzero weight means the
    /// run cannot fully relax.
    pub unreachable_weight: f64,
    pub reachability_warning: Option<String>,
}

/// Dissipative relaxation of a density matrix under the eigenbasis jump
/// operators described in the module docs. Dense representation, capped at
/// dimension 128; Hamiltonian fields are frozen at t = 0.
pub fn lindblad_relax(
    layout: &SimulatorLayout,
    rho0: &DensityMatrix,
    bath: &BathSpec,
    t_final: f64,
    dt: f64,
) -> Result<LindbladResult> {
    bath.validate()?;
    if !(t_final.is_finite() && t_final > 0.0) || !(dt.is_finite() && dt > 0.0) {
        return Err(Error::NonFinite("Lindblad time grid must be positive".into()));
    }
    let h = assemble(layout, 0.0)?;
    let d = h.dim();
    if d > config::LINDBLAD_DIM_LIMIT {
        return Err(Error::Guard {
            what: "Lindblad dimension",
            value: d as u64,
            limit: config::LINDBLAD_DIM_LIMIT as u64,
        });
    }
    if rho0.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: rho0.dim(),
        });
    }

    // Energy eigenbasis.
    let eig = h.dense_matrix()?.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let energies: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut basis = DMatrix::<f64>::zeros(d, d);
    for (col, &i) in order.iter().enumerate() {
        basis.set_column(col, &eig.eigenvectors.column(i));
    }

    // Total position operator in the eigenbasis.
    let indexer = h.indexer();
    let cdiag: Vec<f64> = (0..d)
        .map(|c| {
            layout
                .grids()
                .iter()
                .enumerate()
                .map(|(w, g)| g.positions[indexer.digit(c, w)])
                .sum()
        })
        .collect();
    let mut scaled = basis.clone();
    for i in 0..d {
        for j in 0..d {
            scaled[(i, j)] *= cdiag[i];
        }
    }
    let coupling = basis.transpose() * &scaled; // <m|C|n>

    // Jump rates n -> m and total out-rates.
    let mut rates = DMatrix::<f64>::zeros(d, d);
    for m in 0..d {
        for n in 0..d {
            let omega = energies[n] - energies[m];
            rates[(m, n)] = bath.rate(omega) * coupling[(m, n)] * coupling[(m, n)];
        }
    }
    let gamma_out: Vec<f64> = (0..d).map(|n| rates.column(n).sum()).collect();

    // Reachability of the ground state through nonzero-rate chains.
    let mut reachable = vec![false; d];
    reachable[0] = true;
    let mut frontier = vec![0usize];
    while let Some(m) = frontier.pop() {
        for n in 0..d {
            if !reachable[n] && rates[(m, n)] > 0.0 {
                reachable[n] = true;
                frontier.push(n);
            }
        }
    }

    // Transform rho0 into the eigenbasis.
    let basis_c: DMatrix<Complex64> = basis.map(|x| Complex64::new(x, 0.0));
    let mut rho = basis_c.adjoint() * rho0.matrix() * &basis_c;

    let unreachable_weight: f64 = (0..d)
        .filter(|&n| !reachable[n])
        .map(|n| rho[(n, n)].re)
        .sum();
    let reachability_warning = if unreachable_weight > 1e-10 {
        Some(format!(
            "initial population {unreachable_weight:.3e} sits on eigenstates with no jump path to the ground state"
        ))
    } else {
        None
    };

    // Position observables in the eigenbasis, for the trajectory record.
    let mut x_ops = Vec::new();
    for (w, g) in layout.grids().iter().enumerate() {
        let mut xd = basis.clone();
        let mut xd2 = basis.clone();
        for i in 0..d {
            let x = g.positions[indexer.digit(i, w)];
            for j in 0..d {
                xd[(i, j)] *= x;
                xd2[(i, j)] *= x * x;
            }
        }
        let _ = w;
        x_ops.push((basis.transpose() * &xd, basis.transpose() * &xd2));
    }

    let expect = |rho: &DMatrix<Complex64>, op: &DMatrix<f64>| -> f64 {
        let mut acc = 0.0;
        for a in 0..d {
            for b in 0..d {
                acc += (rho[(b, a)] * op[(a, b)]).re;
            }
        }
        acc
    };

    let rhs = |rho: &DMatrix<Complex64>| -> DMatrix<Complex64> {
        let mut out = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
        for a in 0..d {
            for b in 0..d {
                let decay = -0.5 * (gamma_out[a] + gamma_out[b]);
                let phase = Complex64::new(decay, -(energies[a] - energies[b]));
                out[(a, b)] = phase * rho[(a, b)];
            }
        }
        for a in 0..d {
            let mut gain = Complex64::new(0.0, 0.0);
            for n in 0..d {
                gain += rho[(n, n)] * rates[(a, n)];
            }
            out[(a, a)] += gain;
        }
        out
    };

    let wire_names = layout.wires().iter().map(|w| w.name.clone()).collect();
    let mut record = TrajectoryRecord::new(wire_names);
    let n_steps = (t_final / dt).ceil() as usize;
    let sample_every = (n_steps / 512).max(1);

    let sample = |record: &mut TrajectoryRecord, t: f64, rho: &DMatrix<Complex64>| {
        let trace: f64 = (0..d).map(|n| rho[(n, n)].re).sum();
        let energy: f64 = (0..d).map(|n| energies[n] * rho[(n, n)].re).sum();
        let moments: Vec<(f64, f64)> = x_ops
            .iter()
            .map(|(x, x2)| {
                let mean = expect(rho, x) / trace;
                let var = (expect(rho, x2) / trace - mean * mean).max(0.0);
                (mean, var)
            })
            .collect();
        record.push(t, energy, trace, moments);
    };
    sample(&mut record, 0.0, &rho);

    let half = Complex64::new(0.5 * dt, 0.0);
    let sixth = Complex64::new(dt / 6.0, 0.0);
    let full = Complex64::new(dt, 0.0);
    for step in 1..=n_steps {
        let k1 = rhs(&rho);
        let k2 = rhs(&(&rho + &k1 * half));
        let k3 = rhs(&(&rho + &k2 * half));
        let k4 = rhs(&(&rho + &k3 * full));
        rho += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4) * sixth;
        if step % sample_every == 0 || step == n_steps {
            sample(&mut record, step as f64 * dt, &rho);
        }
    }

    // Conservation checks on the final state.
    let trace_dev = ((0..d).map(|n| rho[(n, n)].re).sum::<f64>() - 1.0).abs();
    if trace_dev > 1e-8 {
        return Err(Error::NonConvergence {
            message: "Lindblad trace drift exceeds 1e-8; reduce dt".into(),
            best: trace_dev,
        });
    }
    let herm = hermiticity_defect(&rho);
    if herm > 1e-8 {
        return Err(Error::NonConvergence {
            message: "Lindblad Hermiticity drift exceeds 1e-8; reduce dt".into(),
            best: herm,
        });
    }

    let rho_back = &basis_c * rho * basis_c.adjoint();
    let rho_final = DensityMatrix::with_floor(rho_back, -1e-7)?;
    Ok(LindbladResult {
        rho: rho_final,
        record,
        unreachable_weight,
        reachability_warning,
    })
}

/// Thermal equilibrium state `exp(-H/T) / Z`, computed by dense
/// eigendecomposition with the spectrum shifted so the largest Boltzmann
/// exponent is zero. `T = inf` yields `I/D`.
pub fn gibbs_state(h: &SparseHamiltonian, temperature: f64) -> Result<DensityMatrix> {
    if h.dim() > config::DENSE_EIG_LIMIT {
        return Err(Error::Guard {
            what: "Gibbs-state dimension",
            value: h.dim() as u64,
            limit: config::DENSE_EIG_LIMIT as u64,
        });
    }
    if h.dim() == 0 || temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::NonFinite("Gibbs state needs T > 0".into()));
    }
    let spec = h.dense_spectrum(h.dim())?;
    let e0 = spec.eigenvalues[0];
    let weights: Vec<f64> = spec
        .eigenvalues
        .iter()
        .map(|&e| {
            if temperature.is_infinite() {
                1.0
            } else {
                (-(e - e0) / temperature).exp()
            }
        })
        .collect();
    let z: f64 = weights.iter().sum();
    let d = h.dim();
    let mut mat = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
    for (n, v) in spec.eigenvectors.iter().enumerate() {
        let p = weights[n] / z;
        for i in 0..d {
            for j in 0..d {
                mat[(i, j)] += Complex64::new(p * v[i] * v[j], 0.0);
            }
        }
    }
    Ok(DensityMatrix { mat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile;
    use crate::model::builtin;
    use std::collections::BTreeMap;

    fn params(entries: &[(&str, f64)]) -> BTreeMap<String, f64> {
        entries.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn box_layout(n: usize) -> SimulatorLayout {
        compile(&builtin("box", &params(&[("N", n as f64)])).unwrap()).unwrap()
    }

    fn box_energy(n: usize, sites: usize) -> f64 {
        let dx = 1.0 / (sites as f64 + 1.0);
        (1.0 - (n as f64 * std::f64::consts::PI * dx).cos()) / (dx * dx)
    }

    fn tight() -> PropagatorConfig {
        PropagatorConfig {
            tol: 1e-12,
            ..Default::default()
        }
    }

    #[test]
    fn expv_identity_at_zero() {
        let h = assemble(&box_layout(8), 0.0).unwrap();
        let v = QuantumState::random(8, 1).unwrap();
        let w = krylov_expv(&h, v.amplitudes(), Complex64::new(0.0, 0.0), &tight()).unwrap();
        assert_eq!(&w, v.amplitudes());
    }

    #[test]
    fn expv_phase_on_eigenvector() {
        let h = assemble(&box_layout(12), 0.0).unwrap();
        let spec = h.dense_spectrum(2).unwrap();
        let e = spec.eigenvalues[1];
        let v: DVector<Complex64> = spec.eigenvectors[1].map(|x| Complex64::new(x, 0.0));
        let t = 0.7;
        let w = krylov_expv(&h, &v, Complex64::new(0.0, -t), &tight()).unwrap();
        let expect = v * Complex64::new(0.0, -e * t).exp();
        assert!((w - expect).norm() < 1e-9);
    }

    #[test]
    fn expv_exact_when_dim_fits_in_subspace() {
        let h = assemble(&box_layout(8), 0.0).unwrap();
        // krylov_dim (24) exceeds D = 8: single happy-breakdown step.
        let psi = QuantumState::random(8, 5).unwrap();
        let w = krylov_expv(&h, psi.amplitudes(), Complex64::new(0.0, -2.0), &tight()).unwrap();
        assert!((w.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_ground_state() {
        let layout = box_layout(8);
        let h = assemble(&layout, 0.0).unwrap();
        let spec = h.dense_spectrum(1).unwrap();
        let psi0 = QuantumState::from_real(spec.ground_state().clone()).unwrap();
        let (record, psi) = evolve_real(&layout, &psi0, 1.0, &tight()).unwrap();
        assert!(psi0.fidelity(&psi) > 1.0 - 1e-8);
        for (e, n) in record.energies.iter().zip(&record.norms) {
            assert!((e - spec.eigenvalues[0]).abs() < 1e-8 * spec.eigenvalues[0].abs());
            assert!((n - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn time_scaling_identity() {
        // exp(-i (s H) (t/s)) == exp(-i H t), exercised through the layout
        // scale factor.
        let model = builtin("coupled_harmonic", &params(&[("N", 5.0)])).unwrap();
        let psi0 = QuantumState::random(25, 11).unwrap();
        let t = 1.0;
        let (_, reference) =
            evolve_real(&compile(&model).unwrap(), &psi0, t, &tight()).unwrap();
        for lambda in [0.5, 2.0, 10.0] {
            let scaled = compile(&model.with_scale(lambda).unwrap()).unwrap();
            let (_, state) = evolve_real(&scaled, &psi0, t / lambda, &tight()).unwrap();
            let diff = (state.amplitudes() - reference.amplitudes()).norm();
            assert!(diff <= 1e-8, "lambda={lambda}: |diff|={diff}");
        }
    }

    #[test]
    fn driven_step_halving_is_second_order() {
        let mut draft = builtin("box", &params(&[("N", 10.0)])).unwrap().to_draft();
        draft.constants.insert("A".into(), 30.0);
        draft.fields.push(crate::model::OneBodyFieldSpec {
            wire: "x1".into(),
            expr: crate::dsl::parse("A*sin(3*t)*x1").unwrap(),
        });
        let layout = compile(&draft.validate().unwrap()).unwrap();
        let psi0 = QuantumState::uniform(10).unwrap();

        let run = |dt: f64| {
            let cfg = PropagatorConfig {
                dt,
                tol: 1e-13,
                ..Default::default()
            };
            evolve_real(&layout, &psi0, 1.0, &cfg).unwrap().1
        };
        let coarse = run(0.04);
        let medium = run(0.02);
        let fine = run(0.01);
        let d1 = (coarse.amplitudes() - medium.amplitudes()).norm();
        let d2 = (medium.amplitudes() - fine.amplitudes()).norm();
        let order = (d1 / d2).log2();
        assert!(order >= 1.8, "observed order {order} (d1={d1:.3e}, d2={d2:.3e})");
    }

    #[test]
    fn imaginary_time_reaches_box_ground_energy() {
        let layout = box_layout(16);
        let psi0 = QuantumState::random(16, 42).unwrap();
        let result = relax_imaginary(&layout, &psi0, 0.05, 1e-12, &tight()).unwrap();
        let expected = box_energy(1, 16);
        let last = *result.energies.last().unwrap();
        assert!(
            (last - expected).abs() < 1e-8,
            "{last} vs {expected}"
        );
        for pair in result.energies.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10, "energy trace must not increase");
        }
    }

    #[test]
    fn imaginary_time_from_ground_converges_immediately() {
        let layout = box_layout(12);
        let h = assemble(&layout, 0.0).unwrap();
        let ground = QuantumState::from_real(h.dense_spectrum(1).unwrap().ground_state().clone())
            .unwrap();
        let result = relax_imaginary(&layout, &ground, 0.1, 1e-9, &tight()).unwrap();
        assert_eq!(result.steps, 1);
        assert_eq!(result.energies.len(), 2);
    }

    #[test]
    fn imaginary_time_matches_dense_oracle_on_coupled_wells() {
        let model = builtin("coupled_harmonic", &params(&[("N", 8.0)])).unwrap();
        let layout = compile(&model).unwrap();
        let h = assemble(&layout, 0.0).unwrap();
        let dense_ground = h.dense_spectrum(1).unwrap().eigenvalues[0];
        let psi0 = QuantumState::random(64, 3).unwrap();
        let result = relax_imaginary(&layout, &psi0, 0.02, 1e-12, &tight()).unwrap();
        assert!((result.energies.last().unwrap() - dense_ground).abs() < 1e-8);
    }

    #[test]
    fn gibbs_two_level_by_hand() {
        let layout = box_layout(2);
        let h = assemble(&layout, 0.0).unwrap();
        let spec = h.dense_spectrum(2).unwrap();
        let t = 7.3;
        let rho = gibbs_state(&h, t).unwrap();
        let w0 = 1.0;
        let w1 = (-(spec.eigenvalues[1] - spec.eigenvalues[0]) / t).exp();
        let z = w0 + w1;
        let p0 = rho.population(&spec.eigenvectors[0]);
        let p1 = rho.population(&spec.eigenvectors[1]);
        assert!((p0 - w0 / z).abs() < 1e-12);
        assert!((p1 - w1 / z).abs() < 1e-12);
    }

    #[test]
    fn gibbs_limits() {
        let h = assemble(&box_layout(6), 0.0).unwrap();
        let hot = gibbs_state(&h, 1e6 * h.norm_est()).unwrap();
        let dist = trace_distance(&hot, &DensityMatrix::maximally_mixed(6));
        assert!(dist <= 1e-6, "T->inf: {dist}");

        let spec = h.dense_spectrum(1).unwrap();
        let gap = box_energy(2, 6) - box_energy(1, 6);
        let cold = gibbs_state(&h, gap / 50.0).unwrap();
        let ground = DensityMatrix::pure(
            &QuantumState::from_real(spec.ground_state().clone()).unwrap(),
        );
        assert!(trace_distance(&cold, &ground) <= 1e-6);
    }

    #[test]
    fn lindblad_zero_temperature_relaxes_to_ground() {
        let layout = box_layout(8);
        let h = assemble(&layout, 0.0).unwrap();
        let ground = h.dense_spectrum(1).unwrap().eigenvectors[0].clone();
        let rho0 = DensityMatrix::pure(&QuantumState::uniform(8).unwrap());
        let bath = BathSpec {
            temperature: 0.0,
            gamma0: 2.0,
        };
        let result = lindblad_relax(&layout, &rho0, &bath, 80.0, 2e-3).unwrap();
        assert!(result.reachability_warning.is_none());
        let pop = result.rho.population(&ground);
        assert!(pop >= 0.999, "ground population {pop}");
        // energy trace decreases overall
        let first = result.record.energies.first().unwrap();
        let last = result.record.energies.last().unwrap();
        assert!(last < first);
    }

    #[test]
    fn lindblad_infinite_temperature_mixes_completely() {
        let layout = box_layout(6);
        let rho0 = DensityMatrix::pure(&QuantumState::uniform(6).unwrap());
        let bath = BathSpec {
            temperature: f64::INFINITY,
            gamma0: 2.0,
        };
        let result = lindblad_relax(&layout, &rho0, &bath, 120.0, 2e-3).unwrap();
        let dist = trace_distance(&result.rho, &DensityMatrix::maximally_mixed(6));
        assert!(dist <= 1e-6, "distance to I/D: {dist}");
    }

    #[test]
    fn lindblad_finite_temperature_reaches_gibbs() {
        let layout = box_layout(6);
        let h = assemble(&layout, 0.0).unwrap();
        let temperature = 30.0;
        let rho0 = DensityMatrix::pure(&QuantumState::uniform(6).unwrap());
        let bath = BathSpec {
            temperature,
            gamma0: 2.0,
        };
        let result = lindblad_relax(&layout, &rho0, &bath, 120.0, 2e-3).unwrap();
        let gibbs = gibbs_state(&h, temperature).unwrap();
        let dist = trace_distance(&result.rho, &gibbs);
        assert!(dist <= 1e-6, "distance to Gibbs: {dist}");
        // trace stays pinned to one at every sample
        for trace in &result.record.norms {
            assert!((trace - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn lindblad_flags_disconnected_initial_states() {
        // Two identical uncoupled wires: C = X1 + X2 commutes with wire
        // exchange, so exchange-antisymmetric eigenstates never decay into
        // the symmetric ground state. The maximally mixed initial state
        // populates them.
        let mut draft = crate::model::ModelDraft::new();
        draft.wires.push(crate::model::WireSpec::new("x1", 4));
        draft.wires.push(crate::model::WireSpec::new("x2", 4));
        let layout = compile(&draft.validate().unwrap()).unwrap();
        let rho0 = DensityMatrix::maximally_mixed(16);
        let bath = BathSpec {
            temperature: 0.0,
            gamma0: 1.0,
        };
        let result = lindblad_relax(&layout, &rho0, &bath, 1.0, 1e-3).unwrap();
        assert!(result.unreachable_weight > 0.1, "{}", result.unreachable_weight);
        assert!(result.reachability_warning.is_some());
    }

    #[test]
    fn density_matrix_validation() {
        let good = DensityMatrix::maximally_mixed(4);
        assert!(DensityMatrix::new(good.matrix().clone()).is_ok());

        let mut bad_trace = good.matrix().clone();
        bad_trace[(0, 0)] += Complex64::new(0.5, 0.0);
        assert!(DensityMatrix::new(bad_trace).is_err());

        let mut bad_herm = good.matrix().clone();
        bad_herm[(0, 1)] = Complex64::new(0.0, 1e-3);
        assert!(DensityMatrix::new(bad_herm).is_err());
    }

    #[test]
    fn complex_hermitian_eigen_via_nalgebra() {
        // sanity anchor for the Hermitian eigensolver used on densities
        let mut m = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        m[(0, 0)] = Complex64::new(1.0, 0.0);
        m[(1, 1)] = Complex64::new(-1.0, 0.0);
        m[(0, 1)] = Complex64::new(0.0, 1.0);
        m[(1, 0)] = Complex64::new(0.0, -1.0);
        let mut eigs: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let r = 2.0f64.sqrt();
        assert!((eigs[0] + r).abs() < 1e-12);
        assert!((eigs[1] - r).abs() < 1e-12);
    }

    #[test]
    fn norm_and_energy_conserved_over_thousand_steps() {
        let layout = box_layout(16);
        let psi0 = QuantumState::random(16, 9).unwrap();
        let cfg = PropagatorConfig {
            dt: 1e-3,
            tol: 1e-12,
            ..Default::default()
        };
        let (record, _) = evolve_real(&layout, &psi0, 1.0, &cfg).unwrap();
        assert!(record.len() >= 1000);
        let e0 = record.energies[0];
        for (e, n) in record.energies.iter().zip(&record.norms) {
            assert!((n - 1.0).abs() <= 1e-8, "norm drift {}", (n - 1.0).abs());
            assert!(
                ((e - e0) / e0).abs() <= 1e-8,
                "energy drift {}",
                ((e - e0) / e0).abs()
            );
        }
    }

    #[test]
    fn trajectory_csv_shape() {
        let layout = box_layout(4);
        let psi0 = QuantumState::uniform(4).unwrap();
        let (record, _) = evolve_real(&layout, &psi0, 0.05, &tight()).unwrap();
        let mut buf = Vec::new();
        record.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "time,energy,norm,mean_x1,var_x1");
        assert_eq!(lines.count(), record.len());
    }
}
