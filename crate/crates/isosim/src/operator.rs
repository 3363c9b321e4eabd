//! Sparse lattice Hamiltonian on the product space of all wire grids.
//!
//! A configuration assigns one grid site to every wire; configurations are
//! indexed mixed-radix row-major with the last wire's digit varying fastest.
//! The operator is
//!
//! ```text
//!   H = scale * [ diag( V_pairs + V_fields(t) + sum_w onsite_w )
//!                 + sum_w hop_w * (shift_w + shift_w^T) ]
//! ```
//!
//! where `shift_w` moves one configuration digit of wire w by +1. The
//! diagonal is real, every hop amplitude is shared between the (i, j) and
//! (j, i) entries, so the operator is Hermitian by construction with at
//! most `1 + 2M` nonzeros per row.
//!
//! Spectra: dense symmetric eigendecomposition up to dimension 2048,
//! Lanczos with full reorthogonalization beyond (the matrix itself is never
//! materialized above dimension 4096 — only matrix-vector products).

use crate::compiler::SimulatorLayout;
use crate::config;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

/// Mixed-radix bijection between configurations (one digit per wire) and
/// flat indices `0..D`, row-major with the last wire fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisIndexer {
    radices: Vec<usize>,
    strides: Vec<usize>,
    dim: usize,
}

impl BasisIndexer {
    pub fn new(radices: Vec<usize>) -> BasisIndexer {
        let mut strides = vec![1usize; radices.len()];
        for w in (0..radices.len().saturating_sub(1)).rev() {
            strides[w] = strides[w + 1] * radices[w + 1];
        }
        let dim = radices.iter().product();
        BasisIndexer {
            radices,
            strides,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn index(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.radices.len());
        digits
            .iter()
            .zip(&self.strides)
            .map(|(d, s)| d * s)
            .sum()
    }

    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.radices.len()];
        for w in (0..self.radices.len()).rev() {
            out[w] = index % self.radices[w];
            index /= self.radices[w];
        }
        out
    }

    #[inline]
    pub fn digit(&self, index: usize, wire: usize) -> usize {
        (index / self.strides[wire]) % self.radices[wire]
    }
}

/// Assembled sparse Hermitian operator: a real diagonal plus one constant
/// hop amplitude per wire. Immutable; `apply` is pure and safe to call
/// concurrently.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHamiltonian {
    indexer: BasisIndexer,
    diagonal: Vec<f64>,
    /// Per-wire nearest-neighbor amplitude, already scaled.
    hops: Vec<f64>,
    /// Time at which time-dependent fields were sampled.
    time: f64,
    scale: f64,
    norm_est: f64,
}

impl SparseHamiltonian {
    pub fn dim(&self) -> usize {
        self.indexer.dim()
    }

    pub fn indexer(&self) -> &BasisIndexer {
        &self.indexer
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn hops(&self) -> &[f64] {
        &self.hops
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Gershgorin bound on the spectral radius.
    pub fn norm_est(&self) -> f64 {
        self.norm_est
    }

    /// Sparse matrix-vector product.
    pub fn apply(&self, v: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        self.check_dim(v.len())?;
        Ok(self.apply_unchecked(v))
    }

    pub(crate) fn apply_unchecked(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        apply_impl(self, v.as_slice())
    }

    /// Matrix-vector product on a real vector.
    pub fn apply_real(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(v.len())?;
        Ok(apply_impl(self, v.as_slice()))
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: len,
            });
        }
        Ok(())
    }

    /// Explicit dense matrix; guarded so it is only available at desk scale.
    pub fn dense_matrix(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if d > config::DENSE_MATRIX_LIMIT {
            return Err(Error::Guard {
                what: "dense matrix dimension",
                value: d as u64,
                limit: config::DENSE_MATRIX_LIMIT as u64,
            });
        }
        let mut mat = DMatrix::zeros(d, d);
        for c in 0..d {
            mat[(c, c)] = self.diagonal[c];
        }
        for (w, &hop) in self.hops.iter().enumerate() {
            let stride = self.indexer.strides()[w];
            let radix = self.indexer.radices()[w];
            let block = stride * radix;
            let mut base = 0;
            while base < d {
                for digit in 0..radix - 1 {
                    let lo = base + digit * stride;
                    for b in 0..stride {
                        let i = lo + b;
                        let j = i + stride;
                        mat[(i, j)] = hop;
                        mat[(j, i)] = hop;
                    }
                }
                base += block;
            }
        }
        Ok(mat)
    }

    /// `<psi|H|psi>` for a normalized state.
    pub fn expectation(&self, psi: &crate::dynamics::QuantumState) -> Result<f64> {
        let v = psi.amplitudes();
        self.check_dim(v.len())?;
        let deviation = (v.norm() - 1.0).abs();
        if deviation > 1e-8 {
            return Err(Error::Unnormalized { deviation });
        }
        Ok(self.rayleigh(v))
    }

    /// Rayleigh quotient numerator without the normalization check; used
    /// internally where the norm is tracked separately.
    pub(crate) fn rayleigh(&self, v: &DVector<Complex64>) -> f64 {
        let hv = self.apply_unchecked(v);
        v.dotc(&hv).re
    }

    /// The k lowest eigenpairs: dense eigendecomposition up to dimension
    /// 2048, Lanczos with full reorthogonalization beyond.
    pub fn lowest_eigenpairs(&self, k: usize, tol: f64, seed: u64) -> Result<SpectrumResult> {
        let d = self.dim();
        if k == 0 || k > d {
            return Err(Error::Guard {
                what: "requested eigenpair count",
                value: k as u64,
                limit: d as u64,
            });
        }
        if d <= config::DENSE_EIG_LIMIT {
            self.dense_spectrum(k)
        } else {
            self.lanczos_lowest(k, tol, 0, seed)
        }
    }

    /// Full dense symmetric eigendecomposition, truncated to the k lowest.
    pub fn dense_spectrum(&self, k: usize) -> Result<SpectrumResult> {
        let d = self.dim();
        if k == 0 || k > d {
            return Err(Error::Guard {
                what: "requested eigenpair count",
                value: k as u64,
                limit: d as u64,
            });
        }
        if d > config::DENSE_EIG_LIMIT {
            return Err(Error::Guard {
                what: "dense eigensolver dimension",
                value: d as u64,
                limit: config::DENSE_EIG_LIMIT as u64,
            });
        }
        let mat = self.dense_matrix()?;
        let eig = mat.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

        let mut eigenvalues = Vec::with_capacity(k);
        let mut eigenvectors = Vec::with_capacity(k);
        let mut residuals = Vec::with_capacity(k);
        for &idx in order.iter().take(k) {
            let value = eig.eigenvalues[idx];
            let mut vector: DVector<f64> = eig.eigenvectors.column(idx).into();
            vector /= vector.norm();
            let hv = self.apply_real(&vector)?;
            residuals.push((hv - &vector * value).norm());
            eigenvalues.push(value);
            eigenvectors.push(vector);
        }
        Ok(SpectrumResult {
            dimension: d,
            scale: self.scale,
            eigenvalues,
            eigenvectors,
            residuals,
        })
    }

    /// Lanczos with full reorthogonalization and a seeded random start
    /// vector. `max_iter = 0` selects a default budget. Degenerate
    /// eigenvalues are returned in an arbitrary basis within the eigenspace.
    pub fn lanczos_lowest(
        &self,
        k: usize,
        tol: f64,
        max_iter: usize,
        seed: u64,
    ) -> Result<SpectrumResult> {
        let d = self.dim();
        if k == 0 || k > d {
            return Err(Error::Guard {
                what: "requested eigenpair count",
                value: k as u64,
                limit: d as u64,
            });
        }
        let budget = if max_iter == 0 {
            (6 * k + 120).min(d)
        } else {
            max_iter.min(d)
        };
        let scale_ref = self.norm_est.max(1e-300);

        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut q = DVector::from_fn(d, |_, _| rng.gen::<f64>() - 0.5);
        q /= q.norm();

        let mut basis: Vec<DVector<f64>> = vec![q];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();

        let mut best_residual = f64::INFINITY;
        let threshold = tol * scale_ref;
        for j in 0..budget {
            let mut w = self.apply_real(&basis[j])?;
            let alpha = basis[j].dot(&w);
            alphas.push(alpha);
            w -= &basis[j] * alpha;
            if j > 0 {
                w -= &basis[j - 1] * betas[j - 1];
            }
            // Full reorthogonalization keeps ghost copies of converged
            // eigenvalues from reappearing.
            for q in &basis {
                let overlap = q.dot(&w);
                w -= q * overlap;
            }
            let beta = w.norm();
            let m = alphas.len();
            let exhausted = beta <= 1e-13 * scale_ref;
            let done = m == budget || exhausted;

            // The cheap Ritz estimate beta * |last eigenvector component|
            // can be optimistic, so converged candidates are verified with
            // exact residuals and iteration continues if they miss.
            if m >= k && (done || m % 8 == 0) {
                let (evals, evecs) = tridiag_eigen(&alphas, &betas);
                let estimate = (0..k)
                    .map(|i| (beta * evecs[(m - 1, i)]).abs())
                    .fold(0.0f64, f64::max);
                if exhausted || estimate <= threshold {
                    let (result, worst) = self.ritz_pairs(&basis, &evals, &evecs, k)?;
                    best_residual = best_residual.min(worst);
                    if exhausted || worst <= threshold {
                        // An exhausted Krylov space is an invariant
                        // subspace, so the pairs are exact.
                        return Ok(result);
                    }
                }
            }
            if done {
                break;
            }

            betas.push(beta);
            basis.push(w / beta);
        }

        Err(Error::NonConvergence {
            message: format!(
                "Lanczos did not converge {k} eigenpairs within {budget} iterations"
            ),
            best: best_residual,
        })
    }

    fn ritz_pairs(
        &self,
        basis: &[DVector<f64>],
        evals: &[f64],
        evecs: &DMatrix<f64>,
        k: usize,
    ) -> Result<(SpectrumResult, f64)> {
        let m = evals.len();
        let d = self.dim();
        let mut eigenvalues = Vec::with_capacity(k);
        let mut eigenvectors = Vec::with_capacity(k);
        let mut residuals = Vec::with_capacity(k);
        let mut worst: f64 = 0.0;
        for i in 0..k {
            let mut v = DVector::zeros(d);
            for j in 0..m {
                v += &basis[j] * evecs[(j, i)];
            }
            v /= v.norm();
            let hv = self.apply_real(&v)?;
            let residual = (hv - &v * evals[i]).norm();
            worst = worst.max(residual);
            eigenvalues.push(evals[i]);
            eigenvectors.push(v);
            residuals.push(residual);
        }
        Ok((
            SpectrumResult {
                dimension: d,
                scale: self.scale,
                eigenvalues,
                eigenvectors,
                residuals,
            },
            worst,
        ))
    }
}

/// Eigendecomposition of the symmetric tridiagonal Lanczos matrix, sorted
/// ascending. Returns (values, vectors as columns).
pub(crate) fn tridiag_eigen(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i > 0 {
            t[(i, i - 1)] = betas[i - 1];
            t[(i - 1, i)] = betas[i - 1];
        }
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m, m);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

fn apply_impl<T>(h: &SparseHamiltonian, v: &[T]) -> DVector<T>
where
    T: Copy
        + std::ops::Mul<f64, Output = T>
        + std::ops::Add<Output = T>
        + std::ops::AddAssign
        + nalgebra::Scalar,
{
    let d = h.dim();
    let mut out: Vec<T> = Vec::with_capacity(d);
    for c in 0..d {
        out.push(v[c] * h.diagonal[c]);
    }
    for (w, &hop) in h.hops.iter().enumerate() {
        let stride = h.indexer.strides()[w];
        let radix = h.indexer.radices()[w];
        let block = stride * radix;
        let mut base = 0;
        while base < d {
            for digit in 0..radix - 1 {
                let lo = base + digit * stride;
                for b in 0..stride {
                    let i = lo + b;
                    let j = i + stride;
                    out[i] += v[j] * hop;
                    out[j] += v[i] * hop;
                }
            }
            base += block;
        }
    }
    DVector::from_vec(out)
}

/// Assemble the operator from a compiled layout with time-dependent fields
/// sampled at `t`.
pub fn assemble(layout: &SimulatorLayout, t: f64) -> Result<SparseHamiltonian> {
    if !t.is_finite() {
        return Err(Error::NonFinite("sampling fields at non-finite time".into()));
    }
    let radices = layout.radices();
    let indexer = BasisIndexer::new(radices.clone());
    let d = layout.hilbert_dim()?;
    let scale = layout.scale();

    let onsite_total: f64 = layout.stencils().iter().map(|s| s.onsite).sum();
    let hops: Vec<f64> = layout.stencils().iter().map(|s| scale * s.hop).collect();

    let mut field_samples: Vec<(usize, Vec<f64>)> = Vec::with_capacity(layout.fields().len());
    for f in layout.fields() {
        field_samples.push((f.index, f.sample(t)?));
    }

    let couplings = layout.couplings();
    let mut diagonal = vec![0.0f64; d];
    let mut digits = vec![0usize; radices.len()];
    for slot in diagonal.iter_mut() {
        let mut value = onsite_total;
        for table in couplings {
            value += table.value(digits[table.index_i], digits[table.index_j]);
        }
        for (w, samples) in &field_samples {
            value += samples[digits[*w]];
        }
        let scaled = scale * value;
        if !scaled.is_finite() {
            return Err(Error::NonFinite(
                "accumulating the diagonal potential".into(),
            ));
        }
        *slot = scaled;
        // Mixed-radix increment, last wire fastest.
        for w in (0..digits.len()).rev() {
            digits[w] += 1;
            if digits[w] < radices[w] {
                break;
            }
            digits[w] = 0;
        }
    }

    let max_diag = diagonal.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
    let norm_est = max_diag + 2.0 * hops.iter().map(|h| h.abs()).sum::<f64>();

    Ok(SparseHamiltonian {
        indexer,
        diagonal,
        hops,
        time: t,
        scale,
        norm_est,
    })
}

/// Eigenvalues and eigenvectors, ascending, with exact residual norms.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub dimension: usize,
    pub scale: f64,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<DVector<f64>>,
    pub residuals: Vec<f64>,
}

impl SpectrumResult {
    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn ground_state(&self) -> &DVector<f64> {
        &self.eigenvectors[0]
    }

    pub fn to_doc(&self) -> SpectrumDoc {
        SpectrumDoc {
            dimension: self.dimension,
            scale: self.scale,
            eigenvalues: self.eigenvalues.clone(),
            residuals: self.residuals.clone(),
        }
    }
}

/// Serializable spectrum (eigenvalue array, residuals, dimension, scale).
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumDoc {
    pub dimension: usize,
    pub scale: f64,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
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

    fn box_h(n: usize) -> SparseHamiltonian {
        let model = builtin("box", &params(&[("N", n as f64)])).unwrap();
        assemble(&compile(&model).unwrap(), 0.0).unwrap()
    }

    /// Closed-form eigenvalues of the hard-wall box stencil:
    /// E_n = (1/(m dx^2)) (1 - cos(n pi dx / L)), dx = L/(N+1).
    fn box_energy(n: usize, sites: usize) -> f64 {
        let dx = 1.0 / (sites as f64 + 1.0);
        (1.0 - (n as f64 * std::f64::consts::PI * dx).cos()) / (dx * dx)
    }

    #[test]
    fn indexer_is_a_bijection() {
        let idx = BasisIndexer::new(vec![3, 4, 2]);
        assert_eq!(idx.dim(), 24);
        for c in 0..idx.dim() {
            let digits = idx.digits(c);
            assert_eq!(idx.index(&digits), c);
            for (w, &d) in digits.iter().enumerate() {
                assert_eq!(idx.digit(c, w), d);
            }
        }
        // last wire fastest
        assert_eq!(idx.digits(0), vec![0, 0, 0]);
        assert_eq!(idx.digits(1), vec![0, 0, 1]);
        assert_eq!(idx.digits(2), vec![0, 1, 0]);
    }

    #[test]
    fn box_n3_matrix_is_the_textbook_tridiagonal() {
        let h = box_h(3);
        let mat = h.dense_matrix().unwrap();
        let expect = [
            [16.0, -8.0, 0.0],
            [-8.0, 16.0, -8.0],
            [0.0, -8.0, 16.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(mat[(i, j)], expect[i][j]);
            }
        }
    }

    #[test]
    fn scale_doubles_every_amplitude() {
        let base = builtin("coupled_harmonic", &params(&[("N", 4.0)])).unwrap();
        let h1 = assemble(&compile(&base).unwrap(), 0.0).unwrap();
        let h2 = assemble(&compile(&base.with_scale(2.0).unwrap()).unwrap(), 0.0).unwrap();
        for (a, b) in h1.diagonal().iter().zip(h2.diagonal()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        for (a, b) in h1.hops().iter().zip(h2.hops()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn nonzeros_per_row_bounded() {
        let model = builtin("coupled_harmonic", &params(&[("N", 8.0)])).unwrap();
        let h = assemble(&compile(&model).unwrap(), 0.0).unwrap();
        assert_eq!(h.dim(), 64);
        let mat = h.dense_matrix().unwrap();
        let m = 2;
        for i in 0..h.dim() {
            let nnz = (0..h.dim()).filter(|&j| mat[(i, j)] != 0.0).count();
            assert!(nnz <= 1 + 2 * m, "row {i} has {nnz} nonzeros");
        }
    }

    #[test]
    fn apply_examples() {
        let h = box_h(3);
        let zero = DVector::from_element(3, Complex64::new(0.0, 0.0));
        assert_eq!(h.apply(&zero).unwrap(), zero);

        let e0 = DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ]);
        let he0 = h.apply(&e0).unwrap();
        assert_eq!(he0[0], Complex64::new(16.0, 0.0));
        assert_eq!(he0[1], Complex64::new(-8.0, 0.0));
        assert_eq!(he0[2], Complex64::new(0.0, 0.0));

        let short = DVector::from_element(2, Complex64::new(1.0, 0.0));
        assert!(matches!(h.apply(&short), Err(Error::Dimension { .. })));
    }

    #[test]
    fn hermiticity_on_random_vectors() {
        let model = builtin("coupled_harmonic", &params(&[("N", 5.0)])).unwrap();
        let h = assemble(&compile(&model).unwrap(), 0.0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..5 {
            let u = DVector::from_fn(h.dim(), |_, _| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let v = DVector::from_fn(h.dim(), |_, _| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let lhs = u.dotc(&h.apply(&v).unwrap());
            let rhs = h.apply(&u).unwrap().dotc(&v);
            assert!((lhs - rhs).norm() < 1e-12 * h.norm_est());
            let ray = v.dotc(&h.apply(&v).unwrap());
            assert!(ray.im.abs() < 1e-12 * h.norm_est());
        }
    }

    #[test]
    fn box_spectrum_matches_closed_form() {
        let h = box_h(3);
        let spec = h.dense_spectrum(3).unwrap();
        for n in 1..=3 {
            assert!(
                (spec.eigenvalues[n - 1] - box_energy(n, 3)).abs() < 1e-12,
                "n={n}: {} vs {}",
                spec.eigenvalues[n - 1],
                box_energy(n, 3)
            );
        }
        // frozen values: 16 - 8*sqrt(2), 16, 16 + 8*sqrt(2)
        assert!((spec.eigenvalues[0] - 4.686291501015240).abs() < 1e-12);
        assert!((spec.eigenvalues[1] - 16.0).abs() < 1e-12);
        assert!((spec.eigenvalues[2] - 27.313708498984760).abs() < 1e-12);
    }

    #[test]
    fn box_ground_energy_approaches_continuum() {
        let h = box_h(64);
        let spec = h.lowest_eigenpairs(1, 1e-10, 42).unwrap();
        let continuum = std::f64::consts::PI.powi(2) / 2.0;
        let rel = (spec.ground_energy() - continuum).abs() / continuum;
        assert!(rel <= 5e-4, "relative error {rel}");
        // and the discrete closed form is matched to solver precision
        assert!((spec.ground_energy() - box_energy(1, 64)).abs() < 1e-10);
    }

    #[test]
    fn complete_spectrum_when_k_equals_dim() {
        let h = box_h(3);
        let spec = h.lowest_eigenpairs(3, 1e-10, 42).unwrap();
        assert_eq!(spec.eigenvalues.len(), 3);
        let full = h.dense_spectrum(3).unwrap();
        for (a, b) in spec.eigenvalues.iter().zip(&full.eigenvalues) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(h.lowest_eigenpairs(4, 1e-10, 42).is_err());
    }

    #[test]
    fn dense_matrix_columns_equal_apply() {
        let model = builtin("coupled_harmonic", &params(&[("N", 4.0)])).unwrap();
        let h = assemble(&compile(&model).unwrap(), 0.0).unwrap();
        let mat = h.dense_matrix().unwrap();
        let d = h.dim();
        for j in 0..d {
            let mut e = DVector::from_element(d, Complex64::new(0.0, 0.0));
            e[j] = Complex64::new(1.0, 0.0);
            let he = h.apply(&e).unwrap();
            for i in 0..d {
                assert_eq!(he[i].re, mat[(i, j)], "entry ({i},{j})");
                assert_eq!(he[i].im, 0.0);
            }
        }
        // symmetric by construction
        for i in 0..d {
            for j in 0..d {
                assert_eq!(mat[(i, j)], mat[(j, i)]);
            }
        }
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let model = builtin("coupled_harmonic", &params(&[("N", 10.0)])).unwrap();
        let h = assemble(&compile(&model).unwrap(), 0.0).unwrap();
        assert_eq!(h.dim(), 100);
        let dense = h.dense_spectrum(4).unwrap();
        let lanc = h.lanczos_lowest(4, 1e-10, 0, 42).unwrap();
        for (a, b) in lanc.eigenvalues.iter().zip(&dense.eigenvalues) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        for r in &lanc.residuals {
            assert!(*r <= 1e-10 * h.norm_est());
        }
    }

    #[test]
    fn spectrum_scaling_is_exact() {
        let base = builtin("box", &params(&[("N", 16.0)])).unwrap();
        let h1 = assemble(&compile(&base).unwrap(), 0.0).unwrap();
        let h2 = assemble(&compile(&base.with_scale(2.0).unwrap()).unwrap(), 0.0).unwrap();
        let s1 = h1.dense_spectrum(6).unwrap();
        let s2 = h2.dense_spectrum(6).unwrap();
        for (a, b) in s1.eigenvalues.iter().zip(&s2.eigenvalues) {
            let rel = (2.0 * a - b).abs() / b.abs().max(1e-300);
            assert!(rel < 1e-10, "2*{a} vs {b}");
        }
    }

    #[test]
    fn expectation_examples() {
        use crate::dynamics::QuantumState;
        let h = box_h(8);
        let spec = h.dense_spectrum(3).unwrap();
        let ground = QuantumState::from_real(spec.ground_state().clone()).unwrap();
        let e = h.expectation(&ground).unwrap();
        assert!((e - spec.eigenvalues[0]).abs() < 1e-10);

        // equal superposition of two eigenstates averages the eigenvalues
        let mix = (spec.eigenvectors[0].clone() + spec.eigenvectors[1].clone()) / 2f64.sqrt();
        let mix = QuantumState::from_real(mix).unwrap();
        let e = h.expectation(&mix).unwrap();
        assert!((e - 0.5 * (spec.eigenvalues[0] + spec.eigenvalues[1])).abs() < 1e-10);

        // random states stay inside the spectral range
        let full = h.dense_spectrum(h.dim()).unwrap();
        let psi = QuantumState::random(h.dim(), 3).unwrap();
        let e = h.expectation(&psi).unwrap();
        assert!(e >= full.eigenvalues[0] - 1e-10);
        assert!(e <= *full.eigenvalues.last().unwrap() + 1e-10);

        // unnormalized states are rejected
        let bad = DVector::from_element(h.dim(), Complex64::new(1.0, 0.0));
        assert!(QuantumState::new(bad).is_err());
    }

    #[test]
    fn ground_state_can_be_chosen_nonnegative() {
        for (name, ps) in [
            ("box", params(&[("N", 16.0)])),
            ("coupled_harmonic", params(&[("N", 6.0)])),
        ] {
            let h = assemble(&compile(&builtin(name, &ps).unwrap()).unwrap(), 0.0).unwrap();
            let spec = h.dense_spectrum(1).unwrap();
            let g = spec.ground_state();
            let sign = if g.iter().sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
            for &x in g.iter() {
                assert!(sign * x >= -1e-10, "{name}: entry {x}");
            }
        }
    }
}
