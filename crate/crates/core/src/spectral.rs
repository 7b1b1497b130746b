//! Eigendecompositions of Hermitian Hamiltonians.

use faer::{c64, Mat, MatRef, Side};

use crate::algebra::{partial_trace_matrix, Bipartition, DenseOperator, Subsystem};
use crate::error::{BrotocError, Result};
use crate::linalg;

/// Residual tolerance relative to the spectral norm.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-9;
/// Column orthonormality tolerance.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Energies in ascending order with orthonormal eigenvectors as columns.
///
/// When every eigenvector is real a real copy is kept as well, which lets
/// time evolution run on real matrix products.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    bipartition: Bipartition,
    energies: Vec<f64>,
    vectors: Mat<c64>,
    real_vectors: Option<Mat<f64>>,
}

impl SpectralDecomposition {
    pub fn from_hermitian(h: &DenseOperator) -> Result<Self> {
        let d = h.dim();
        let scale = max_abs_entry(h.entries()).max(f64::MIN_POSITIVE);
        let herm = h.hermiticity_residual();
        if herm > 1e-12 * scale * d as f64 {
            return Err(BrotocError::Validation(format!(
                "matrix is not Hermitian, residual {herm:.3e}"
            )));
        }
        let (energies, vectors, real_vectors) = if h.is_real() {
            let hr = Mat::from_fn(d, d, |i, j| h.entries()[(i, j)].re);
            let eig = hr.self_adjoint_eigen(Side::Lower).map_err(|e| {
                BrotocError::numerical(format!("real eigensolver failed: {e:?}"), f64::NAN)
            })?;
            let s = eig.S().column_vector();
            let energies: Vec<f64> = (0..d).map(|i| s[i]).collect();
            let v = eig.U().to_owned();
            (energies, linalg::to_complex(v.as_ref()), Some(v))
        } else {
            let eig = h.entries().self_adjoint_eigen(Side::Lower).map_err(|e| {
                BrotocError::numerical(format!("eigensolver failed: {e:?}"), f64::NAN)
            })?;
            let s = eig.S().column_vector();
            let energies: Vec<f64> = (0..d).map(|i| s[i].re).collect();
            (energies, eig.U().to_owned(), None)
        };
        let out = Self { bipartition: h.bipartition(), energies, vectors, real_vectors };
        out.check_against(h.entries())?;
        Ok(out)
    }

    /// Assemble from known eigenpairs; pairs are sorted by energy.
    pub fn from_parts(bipartition: Bipartition, energies: Vec<f64>, vectors: Mat<c64>) -> Result<Self> {
        let d = bipartition.dim_total();
        if energies.len() != d || vectors.nrows() != d || vectors.ncols() != d {
            return Err(BrotocError::Dimension(format!(
                "{} energies and {}x{} vectors for dimension {d}",
                energies.len(),
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        if let Some(e) = energies.iter().find(|e| !e.is_finite()) {
            return Err(BrotocError::Validation(format!("non-finite energy {e}")));
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| energies[i].total_cmp(&energies[j]).then(i.cmp(&j)));
        let energies: Vec<f64> = order.iter().map(|&i| energies[i]).collect();
        let vectors = Mat::from_fn(d, d, |i, j| vectors[(i, order[j])]);
        let is_real = (0..d).all(|j| (0..d).all(|i| vectors[(i, j)].im == 0.0));
        let real_vectors = is_real.then(|| Mat::from_fn(d, d, |i, j| vectors[(i, j)].re));
        let out = Self { bipartition, energies, vectors, real_vectors };
        out.check_orthonormal()?;
        Ok(out)
    }

    fn check_orthonormal(&self) -> Result<()> {
        let d = self.dim();
        let g = linalg::mul(self.vectors.adjoint(), self.vectors.as_ref());
        let id = Mat::<c64>::identity(d, d);
        let err = linalg::max_abs_diff(g.as_ref(), id.as_ref());
        if err > ORTHONORMALITY_TOL {
            return Err(BrotocError::numerical("eigenvectors are not orthonormal", err));
        }
        Ok(())
    }

    fn check_against(&self, h: MatRef<'_, c64>) -> Result<()> {
        self.check_orthonormal()?;
        let d = self.dim();
        let hv = linalg::mul(h, self.vectors.as_ref());
        let norm = self.spectral_norm();
        let mut worst = 0.0f64;
        for j in 0..d {
            let mut r = 0.0;
            for i in 0..d {
                r += (hv[(i, j)] - self.vectors[(i, j)] * self.energies[j]).norm_sqr();
            }
            worst = worst.max(r.sqrt());
        }
        if worst > EIGEN_RESIDUAL_TOL * norm {
            return Err(BrotocError::numerical("eigenpair residual too large", worst));
        }
        Ok(())
    }

    pub fn bipartition(&self) -> Bipartition {
        self.bipartition
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn vectors(&self) -> MatRef<'_, c64> {
        self.vectors.as_ref()
    }

    pub fn real_vectors(&self) -> Option<MatRef<'_, f64>> {
        self.real_vectors.as_ref().map(|v| v.as_ref())
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }

    /// `max |E_j|`, the spectral norm of `H`.
    pub fn spectral_norm(&self) -> f64 {
        self.energies.iter().fold(0.0f64, |m, e| m.max(e.abs()))
    }

    pub fn spectral_width(&self) -> f64 {
        self.energies[self.dim() - 1] - self.energies[0]
    }

    /// Same eigenvectors with every energy moved by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.energies {
            *e += c;
        }
        out
    }

    /// `Σ_j f(E_j) |φ_j⟩⟨φ_j|`.
    pub fn function_matrix(&self, f: impl Fn(f64) -> c64) -> Mat<c64> {
        let w: Vec<c64> = self.energies.iter().map(|&e| f(e)).collect();
        self.weighted_projector_sum(&w)
    }

    pub(crate) fn weighted_projector_sum(&self, w: &[c64]) -> Mat<c64> {
        match &self.real_vectors {
            Some(v) => {
                let (re, im) = linalg::real_basis_function(v.as_ref(), w);
                linalg::join(re.as_ref(), im.as_ref())
            }
            None => linalg::complex_basis_function(self.vectors.as_ref(), w),
        }
    }

    pub fn hamiltonian(&self) -> Mat<c64> {
        self.function_matrix(|e| c64::new(e, 0.0))
    }

    /// `Tr_χ̄ |φ_j⟩⟨φ_j|`.
    pub fn reduced_eigenstate(&self, j: usize, keep: Subsystem) -> Mat<c64> {
        let (da, db) = (self.bipartition.dim_a(), self.bipartition.dim_b());
        let col = self.vectors.col(j);
        let psi = Mat::from_fn(da, db, |a, b| col[a * db + b]);
        match keep {
            Subsystem::A => linalg::mul(psi.as_ref(), psi.adjoint()),
            Subsystem::B => linalg::mul(psi.transpose(), psi.conjugate()),
        }
    }

    /// Reduced eigenstate through the generic partial trace, for cross-checks.
    pub fn reduced_eigenstate_via_trace(&self, j: usize, keep: Subsystem) -> Mat<c64> {
        let col = self.vectors.col(j);
        let d = self.dim();
        let proj = Mat::from_fn(d, d, |i, k| col[i] * col[k].conj());
        partial_trace_matrix(proj.as_ref(), self.bipartition, keep).expect("dimensions agree")
    }
}

fn max_abs_entry(m: MatRef<'_, c64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            worst = worst.max(m[(i, j)].norm());
        }
    }
    worst
}
