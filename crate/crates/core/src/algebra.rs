//! Dense operator algebra on a bipartite space `H_A ⊗ H_B`.
//!
//! Composite indices are A-major: the basis vector `|a⟩⊗|b⟩` sits at
//! `a * dim_b + b`. Every contraction in the crate relies on this layout.

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{BrotocError, Result};
use crate::linalg;

/// Relative threshold below which operator Schmidt coefficients are dropped.
pub const SCHMIDT_CUTOFF: f64 = 1e-12;

/// Split of a `dim_a * dim_b` dimensional space into two factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawBipartition", into = "RawBipartition")]
pub struct Bipartition {
    dim_a: usize,
    dim_b: usize,
}

#[derive(Serialize, Deserialize)]
struct RawBipartition {
    dim_a: usize,
    dim_b: usize,
}

impl TryFrom<RawBipartition> for Bipartition {
    type Error = BrotocError;
    fn try_from(raw: RawBipartition) -> Result<Self> {
        Bipartition::new(raw.dim_a, raw.dim_b)
    }
}

impl From<Bipartition> for RawBipartition {
    fn from(b: Bipartition) -> Self {
        RawBipartition { dim_a: b.dim_a, dim_b: b.dim_b }
    }
}

impl Bipartition {
    pub fn new(dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 {
            return Err(BrotocError::Dimension(format!(
                "bipartition factors must be positive, got {dim_a} x {dim_b}"
            )));
        }
        dim_a.checked_mul(dim_b).ok_or_else(|| {
            BrotocError::Resource(format!("dimension {dim_a} x {dim_b} overflows"))
        })?;
        Ok(Self { dim_a, dim_b })
    }

    /// Chain of `l` qubits cut after the first `floor(l/2)` sites.
    pub fn half_chain(l: u32) -> Result<Self> {
        if l == 0 || l > 30 {
            return Err(BrotocError::Dimension(format!("unsupported chain length {l}")));
        }
        Self::new(1usize << (l / 2), 1usize << (l - l / 2))
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn dim_total(&self) -> usize {
        self.dim_a * self.dim_b
    }

    pub fn dim(&self, part: Subsystem) -> usize {
        match part {
            Subsystem::A => self.dim_a,
            Subsystem::B => self.dim_b,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.dim_a == self.dim_b
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize) -> usize {
        a * self.dim_b + b
    }
}

/// One side of a bipartition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subsystem {
    A,
    B,
}

impl Subsystem {
    pub fn complement(self) -> Self {
        match self {
            Subsystem::A => Subsystem::B,
            Subsystem::B => Subsystem::A,
        }
    }
}

/// Square complex matrix acting on a bipartite space.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    bipartition: Bipartition,
    entries: Mat<c64>,
}

impl DenseOperator {
    pub fn new(bipartition: Bipartition, entries: Mat<c64>) -> Result<Self> {
        let d = bipartition.dim_total();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(BrotocError::Dimension(format!(
                "operator is {}x{}, bipartition needs {d}x{d}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for j in 0..d {
            for i in 0..d {
                let z = entries[(i, j)];
                if !(z.re.is_finite() && z.im.is_finite()) {
                    return Err(BrotocError::Validation(format!(
                        "non-finite entry at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { bipartition, entries })
    }

    pub fn from_real(bipartition: Bipartition, entries: MatRef<'_, f64>) -> Result<Self> {
        Self::new(bipartition, linalg::to_complex(entries))
    }

    pub fn from_fn(bipartition: Bipartition, f: impl FnMut(usize, usize) -> c64) -> Result<Self> {
        let d = bipartition.dim_total();
        Self::new(bipartition, Mat::from_fn(d, d, f))
    }

    pub fn identity(bipartition: Bipartition) -> Self {
        let d = bipartition.dim_total();
        Self { bipartition, entries: Mat::identity(d, d) }
    }

    pub fn zeros(bipartition: Bipartition) -> Self {
        let d = bipartition.dim_total();
        Self { bipartition, entries: Mat::zeros(d, d) }
    }

    /// `a ⊗ b` for local factors of the right sizes.
    pub fn product(bipartition: Bipartition, a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<Self> {
        let (da, db) = (bipartition.dim_a(), bipartition.dim_b());
        if a.nrows() != da || a.ncols() != da || b.nrows() != db || b.ncols() != db {
            return Err(BrotocError::Dimension(format!(
                "local factors {}x{} and {}x{} do not fit {da}x{db}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Self::new(bipartition, kron(a, b))
    }

    pub fn bipartition(&self) -> Bipartition {
        self.bipartition
    }

    pub fn dim(&self) -> usize {
        self.bipartition.dim_total()
    }

    pub fn entries(&self) -> MatRef<'_, c64> {
        self.entries.as_ref()
    }

    pub fn into_entries(self) -> Mat<c64> {
        self.entries
    }

    pub fn adjoint(&self) -> Self {
        Self { bipartition: self.bipartition, entries: self.entries.adjoint().to_owned() }
    }

    pub fn scaled(&self, c: c64) -> Self {
        let entries = Mat::from_fn(self.dim(), self.dim(), |i, j| self.entries[(i, j)] * c);
        Self { bipartition: self.bipartition, entries }
    }

    pub fn matmul(&self, rhs: &DenseOperator) -> Result<Self> {
        if self.bipartition != rhs.bipartition {
            return Err(BrotocError::Dimension("bipartition mismatch in product".into()));
        }
        Ok(Self {
            bipartition: self.bipartition,
            entries: linalg::mul(self.entries.as_ref(), rhs.entries.as_ref()),
        })
    }

    pub fn trace(&self) -> c64 {
        linalg::trace(self.entries.as_ref())
    }

    /// `‖U†U − I‖_max`.
    pub fn unitarity_residual(&self) -> f64 {
        let g = linalg::mul(self.entries.adjoint(), self.entries.as_ref());
        let id = Mat::<c64>::identity(self.dim(), self.dim());
        linalg::max_abs_diff(g.as_ref(), id.as_ref())
    }

    /// `‖H − H†‖_max`.
    pub fn hermiticity_residual(&self) -> f64 {
        linalg::max_abs_diff(self.entries.as_ref(), self.entries.adjoint().to_owned().as_ref())
    }

    /// True when every imaginary part is exactly zero.
    pub fn is_real(&self) -> bool {
        let d = self.dim();
        (0..d).all(|j| (0..d).all(|i| self.entries[(i, j)].im == 0.0))
    }
}

/// Whether a state lives on `H` or on the doubled space `H ⊗ H'`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceTag {
    Single,
    /// Ordering `(a, b, a', b')`, so the amplitude of `|x⟩|x'⟩` is at `x * d + x'`.
    Doubled,
}

/// State vector with an explicit norm; normalized states carry `norm == 1`.
#[derive(Clone, Debug)]
pub struct PureState {
    bipartition: Bipartition,
    amplitudes: Vec<c64>,
    space: SpaceTag,
    norm: f64,
}

impl PureState {
    /// Stores `amplitudes / ‖amplitudes‖` and remembers the original norm.
    pub fn new(bipartition: Bipartition, amplitudes: Vec<c64>, space: SpaceTag) -> Result<Self> {
        let d = bipartition.dim_total();
        let expected = match space {
            SpaceTag::Single => d,
            SpaceTag::Doubled => d * d,
        };
        if amplitudes.len() != expected {
            return Err(BrotocError::Dimension(format!(
                "state has {} amplitudes, expected {expected}",
                amplitudes.len()
            )));
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(BrotocError::Domain(format!("state norm {norm} cannot be normalized")));
        }
        let amplitudes = amplitudes.into_iter().map(|z| z / norm).collect();
        Ok(Self { bipartition, amplitudes, space, norm })
    }

    pub fn bipartition(&self) -> Bipartition {
        self.bipartition
    }

    pub fn amplitudes(&self) -> &[c64] {
        &self.amplitudes
    }

    pub fn space(&self) -> SpaceTag {
        self.space
    }

    /// Norm of the vector before normalization.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn inner(&self, other: &PureState) -> Result<c64> {
        if self.amplitudes.len() != other.amplitudes.len() {
            return Err(BrotocError::Dimension("states of different length".into()));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Purity of the marginal on `A` (single) or on `AA'` (doubled).
    pub fn purity_a(&self) -> f64 {
        let (da, db) = (self.bipartition.dim_a(), self.bipartition.dim_b());
        match self.space {
            SpaceTag::Single => {
                let psi = Mat::from_fn(da, db, |a, b| self.amplitudes[a * db + b]);
                linalg::gram_frobenius_sq(psi.as_ref())
            }
            SpaceTag::Doubled => {
                // Coefficient matrix over (a, a') x (b, b').
                let d = da * db;
                let psi = Mat::from_fn(da * da, db * db, |r, c| {
                    let (a, ap) = (r / da, r % da);
                    let (b, bp) = (c / db, c % db);
                    self.amplitudes[(a * db + b) * d + ap * db + bp]
                });
                linalg::gram_frobenius_sq(psi.as_ref())
            }
        }
    }
}

/// Operator Schmidt decomposition `X = Σ √λ_j U_j ⊗ W_j`.
///
/// `⟨U_j, U_k⟩ = d_A δ_jk` and `⟨W_j, W_k⟩ = d_B δ_jk`; for unitary `X`
/// the coefficients sum to one.
#[derive(Clone, Debug)]
pub struct SchmidtData {
    pub coefficients: Vec<f64>,
    pub left_ops: Vec<Mat<c64>>,
    pub right_ops: Vec<Mat<c64>>,
}

impl SchmidtData {
    pub fn rank(&self) -> usize {
        self.coefficients.len()
    }

    pub fn reconstruct(&self) -> Mat<c64> {
        let da = self.left_ops.first().map_or(0, |u| u.nrows());
        let db = self.right_ops.first().map_or(0, |w| w.nrows());
        let mut out = Mat::<c64>::zeros(da * db, da * db);
        for ((lam, u), w) in self.coefficients.iter().zip(&self.left_ops).zip(&self.right_ops) {
            let k = kron(u.as_ref(), w.as_ref());
            let s = lam.sqrt();
            for j in 0..da * db {
                for i in 0..da * db {
                    out[(i, j)] += k[(i, j)] * s;
                }
            }
        }
        out
    }
}

pub fn kron(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * br, a.ncols() * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Reduced matrix on `keep` of a `d x d` matrix over `bip`.
pub fn partial_trace_matrix(m: MatRef<'_, c64>, bip: Bipartition, keep: Subsystem) -> Result<Mat<c64>> {
    let (da, db) = (bip.dim_a(), bip.dim_b());
    if m.nrows() != da * db || m.ncols() != da * db {
        return Err(BrotocError::Dimension(format!(
            "matrix is {}x{}, bipartition needs {}x{}",
            m.nrows(),
            m.ncols(),
            da * db,
            da * db
        )));
    }
    Ok(match keep {
        Subsystem::A => Mat::from_fn(da, da, |a, ap| {
            (0..db).map(|b| m[(a * db + b, ap * db + b)]).sum()
        }),
        Subsystem::B => Mat::from_fn(db, db, |b, bp| {
            (0..da).map(|a| m[(a * db + b, a * db + bp)]).sum()
        }),
    })
}

pub fn partial_trace(op: &DenseOperator, keep: Subsystem) -> Result<Mat<c64>> {
    partial_trace_matrix(op.entries(), op.bipartition(), keep)
}

/// `Σ |x_ij|²`, the squared Hilbert-Schmidt norm.
pub fn hs_norm_sq(m: MatRef<'_, c64>) -> f64 {
    linalg::frobenius_sq(m)
}

/// `‖Tr_χ̄ X‖₂²` with `χ = keep`.
pub fn subsystem_purity(op: &DenseOperator, keep: Subsystem) -> Result<f64> {
    Ok(hs_norm_sq(partial_trace(op, keep)?.as_ref()))
}

/// Realigned coefficient matrix `R[(a,a'),(b,b')] = X[(a,b),(a',b')]`.
pub fn realign(m: MatRef<'_, c64>, bip: Bipartition) -> Mat<c64> {
    let (da, db) = (bip.dim_a(), bip.dim_b());
    Mat::from_fn(da * da, db * db, |r, c| {
        let (a, ap) = (r / da, r % da);
        let (b, bp) = (c / db, c % db);
        m[(a * db + b, ap * db + bp)]
    })
}

pub fn operator_schmidt(op: &DenseOperator) -> Result<SchmidtData> {
    let bip = op.bipartition();
    let (da, db, d) = (bip.dim_a(), bip.dim_b(), bip.dim_total());
    let r = realign(op.entries(), bip);
    let svd = r.thin_svd().map_err(|e| {
        BrotocError::numerical(format!("SVD of realigned operator failed: {e:?}"), f64::NAN)
    })?;
    let s = svd.S().column_vector();
    let (u, v) = (svd.U(), svd.V());
    let n = s.nrows();
    let lam: Vec<f64> = (0..n).map(|i| s[i].re * s[i].re / d as f64).collect();
    let lam_max = lam.iter().copied().fold(0.0, f64::max);

    let mut order: Vec<usize> = (0..n).filter(|&i| lam[i] > SCHMIDT_CUTOFF * lam_max).collect();
    order.sort_by(|&i, &j| lam[j].total_cmp(&lam[i]).then(i.cmp(&j)));

    let sa = (da as f64).sqrt();
    let sb = (db as f64).sqrt();
    let mut data = SchmidtData { coefficients: vec![], left_ops: vec![], right_ops: vec![] };
    for i in order {
        data.coefficients.push(lam[i]);
        data.left_ops.push(Mat::from_fn(da, da, |a, ap| u[(a * da + ap, i)] * sa));
        data.right_ops.push(Mat::from_fn(db, db, |b, bp| v[(b * db + bp, i)].conj() * sb));
    }

    let residual = hs_norm_sq((data.reconstruct() - op.entries()).as_ref()).sqrt();
    let scale = hs_norm_sq(op.entries()).sqrt();
    if residual > 1e-10 * scale.max(f64::MIN_POSITIVE) && residual > 1e-300 {
        return Err(BrotocError::numerical("operator Schmidt reconstruction", residual));
    }
    Ok(data)
}

/// `Σ λ_j² / (Σ λ_j)²`, invariant under rescaling of the operator.
pub fn operator_purity(op: &DenseOperator) -> Result<f64> {
    let norm_sq = hs_norm_sq(op.entries());
    if norm_sq == 0.0 {
        return Err(BrotocError::Domain("operator purity of the zero operator".into()));
    }
    let lam = operator_schmidt(op)?.coefficients;
    let s1: f64 = lam.iter().sum();
    let s2: f64 = lam.iter().map(|l| l * l).sum();
    Ok(s2 / (s1 * s1))
}

/// Largest `‖U†U − I‖_max` accepted for operators treated as unitary.
pub const UNITARY_TOL: f64 = 1e-10;

pub fn operator_entanglement(u: &DenseOperator) -> Result<f64> {
    let residual = u.unitarity_residual();
    if residual > UNITARY_TOL {
        return Err(BrotocError::Domain(format!(
            "operator entanglement needs a unitary, residual {residual:.3e}"
        )));
    }
    Ok(1.0 - operator_purity(u)?)
}

/// `Tr[S_AA' X^⊗2 S_AA' X†^⊗2]`.
///
/// Equals `‖R R†‖₂²` for the realigned matrix `R`, so it never touches the
/// doubled space.
pub fn swap_sandwich_trace(x: &DenseOperator) -> f64 {
    let r = realign(x.entries(), x.bipartition());
    linalg::gram_frobenius_sq(r.as_ref())
}

/// Same contraction on raw real and imaginary parts of `X`.
pub(crate) fn swap_sandwich_trace_split(
    re: MatRef<'_, f64>,
    im: MatRef<'_, f64>,
    bip: Bipartition,
) -> f64 {
    let (da, db) = (bip.dim_a(), bip.dim_b());
    let realign_real = |m: MatRef<'_, f64>| {
        Mat::from_fn(da * da, db * db, |r, c| {
            let (a, ap) = (r / da, r % da);
            let (b, bp) = (c / db, c % db);
            m[(a * db + b, ap * db + bp)]
        })
    };
    let p = realign_real(re);
    let q = realign_real(im);
    linalg::gram_frobenius_sq_split(p.as_ref(), q.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{
        cnot, explicit_swap_sandwich, random_complex, random_hermitian, swap_gate,
    };
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bip(a: usize, b: usize) -> Bipartition {
        Bipartition::new(a, b).unwrap()
    }

    #[test]
    fn bipartition_rejects_zero() {
        assert!(Bipartition::new(0, 3).is_err());
        assert_eq!(Bipartition::half_chain(5).unwrap(), bip(4, 8));
    }

    #[test]
    fn partial_trace_identity_and_product_projector() {
        let b = bip(2, 2);
        let rho = DenseOperator::identity(b).scaled(c64::new(0.25, 0.0));
        let ra = partial_trace(&rho, Subsystem::A).unwrap();
        assert!(linalg::max_abs_diff(ra.as_ref(), (Mat::<c64>::identity(2, 2) * faer::Scale(c64::new(0.5, 0.0))).as_ref()) < 1e-15);

        let p00 = DenseOperator::from_fn(b, |i, j| {
            if i == 0 && j == 0 { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) }
        })
        .unwrap();
        let rb = partial_trace(&p00, Subsystem::B).unwrap();
        assert_eq!(rb[(0, 0)], c64::new(1.0, 0.0));
        assert_eq!(rb[(1, 1)], c64::new(0.0, 0.0));
    }

    #[test]
    fn partial_trace_matches_index_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = bip(2, 2);
        let h = random_hermitian(4, &mut rng);
        let op = DenseOperator::new(b, h.clone()).unwrap();
        let ra = partial_trace(&op, Subsystem::A).unwrap();
        for a in 0..2 {
            for ap in 0..2 {
                let mut acc = c64::new(0.0, 0.0);
                for bb in 0..2 {
                    acc += h[(2 * a + bb, 2 * ap + bb)];
                }
                assert!((acc - ra[(a, ap)]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn hs_norm_matches_trace_of_product() {
        assert_eq!(hs_norm_sq(Mat::<c64>::identity(5, 5).as_ref()), 5.0);
        assert_eq!(hs_norm_sq(Mat::<c64>::zeros(3, 3).as_ref()), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_complex(3, 3, &mut rng);
        let tr = linalg::trace(linalg::mul(x.adjoint(), x.as_ref()).as_ref());
        assert!((tr.re - hs_norm_sq(x.as_ref())).abs() < 1e-12);
        assert!(tr.im.abs() < 1e-12);
    }

    #[test]
    fn subsystem_purity_examples() {
        let b = bip(2, 2);
        let rho = DenseOperator::identity(b).scaled(c64::new(0.25, 0.0));
        assert!((subsystem_purity(&rho, Subsystem::A).unwrap() - 0.5).abs() < 1e-15);

        let b = bip(3, 5);
        let s = DenseOperator::identity(b).scaled(c64::new(1.0 / 15f64.sqrt(), 0.0));
        assert!((subsystem_purity(&s, Subsystem::A).unwrap() - 5.0).abs() < 1e-12);

        let b = bip(2, 2);
        let h = 0.5;
        let bell = DenseOperator::from_fn(b, |i, j| {
            let on = |k: usize| k == 0 || k == 3;
            if on(i) && on(j) { c64::new(h, 0.0) } else { c64::new(0.0, 0.0) }
        })
        .unwrap();
        assert!((subsystem_purity(&bell, Subsystem::A).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn schmidt_examples() {
        let b = bip(2, 2);
        let sw = DenseOperator::new(b, swap_gate(2)).unwrap();
        let data = operator_schmidt(&sw).unwrap();
        assert_eq!(data.rank(), 4);
        for l in &data.coefficients {
            assert!((l - 0.25).abs() < 1e-12);
        }
        let cn = DenseOperator::new(b, cnot()).unwrap();
        let data = operator_schmidt(&cn).unwrap();
        assert_eq!(data.rank(), 2);
        for l in &data.coefficients {
            assert!((l - 0.5).abs() < 1e-12);
        }
        assert!((operator_purity(&sw).unwrap() - 0.25).abs() < 1e-12);
        assert!((operator_purity(&cn).unwrap() - 0.5).abs() < 1e-12);
        assert!((operator_entanglement(&sw).unwrap() - 0.75).abs() < 1e-12);
        assert!((operator_entanglement(&cn).unwrap() - 0.5).abs() < 1e-12);
        assert!(operator_entanglement(&DenseOperator::identity(b)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn product_unitary_has_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ua = crate::random::haar_unitary(2, &mut rng);
        let ub = crate::random::haar_unitary(3, &mut rng);
        let u = DenseOperator::product(bip(2, 3), ua.as_ref(), ub.as_ref()).unwrap();
        let data = operator_schmidt(&u).unwrap();
        assert_eq!(data.rank(), 1);
        assert!((data.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((operator_purity(&u).unwrap() - 1.0).abs() < 1e-12);
        assert!((swap_sandwich_trace(&u) - 36.0).abs() < 1e-9);
    }

    #[test]
    fn non_unitary_rejected_by_entanglement() {
        let b = bip(2, 2);
        let x = DenseOperator::identity(b).scaled(c64::new(2.0, 0.0));
        assert!(matches!(operator_entanglement(&x), Err(BrotocError::Domain(_))));
        assert!(matches!(operator_purity(&DenseOperator::zeros(b)), Err(BrotocError::Domain(_))));
    }

    #[test]
    fn swap_sandwich_identity_matches_explicit() {
        let b = bip(2, 2);
        let id = DenseOperator::identity(b);
        let explicit = explicit_swap_sandwich(id.entries(), b);
        assert!((explicit - 16.0).abs() < 1e-12);
        assert!((swap_sandwich_trace(&id) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn swap_sandwich_random_matches_explicit_up_to_nine() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for &(da, db) in &[(2, 2), (1, 4), (2, 3), (3, 2), (3, 3), (2, 4), (4, 2)] {
            let b = bip(da, db);
            let x = random_complex(da * db, da * db, &mut rng);
            let op = DenseOperator::new(b, x.clone()).unwrap();
            let fast = swap_sandwich_trace(&op);
            let slow = explicit_swap_sandwich(x.as_ref(), b);
            assert!((fast - slow).abs() <= 1e-9 * slow, "{da}x{db}: {fast} vs {slow}");
            let (re, im) = linalg::split(x.as_ref());
            let split = swap_sandwich_trace_split(re.as_ref(), im.as_ref(), b);
            assert!((split - slow).abs() <= 1e-9 * slow);
            let purity = operator_purity(&op).unwrap();
            let norm4 = hs_norm_sq(x.as_ref()).powi(2);
            assert!((purity - slow / norm4).abs() < 1e-9);
        }
    }

    #[test]
    fn doubled_state_purity_matches_swap_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = bip(2, 3);
        let x = random_complex(6, 6, &mut rng);
        let amps: Vec<c64> = (0..36).map(|k| x[(k / 6, k % 6)]).collect();
        let psi = PureState::new(b, amps, SpaceTag::Doubled).unwrap();
        let op = DenseOperator::new(b, x.clone()).unwrap();
        let expected = swap_sandwich_trace(&op) / hs_norm_sq(x.as_ref()).powi(2);
        assert!((psi.purity_a() - expected).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn partial_trace_preserves_trace(seed in any::<u64>(), da in 1usize..4, db in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = bip(da, db);
            let x = random_complex(da * db, da * db, &mut rng);
            let op = DenseOperator::new(b, x).unwrap();
            let tr = op.trace();
            for keep in [Subsystem::A, Subsystem::B] {
                let red = partial_trace(&op, keep).unwrap();
                prop_assert!((linalg::trace(red.as_ref()) - tr).norm() <= 1e-12 * tr.norm().max(1.0));
            }
        }

        #[test]
        fn schmidt_reconstructs(seed in any::<u64>(), da in 1usize..4, db in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = bip(da, db);
            let x = random_complex(da * db, da * db, &mut rng);
            let op = DenseOperator::new(b, x.clone()).unwrap();
            let data = operator_schmidt(&op).unwrap();
            let err = hs_norm_sq((data.reconstruct() - x.as_ref()).as_ref()).sqrt();
            prop_assert!(err <= 1e-10 * hs_norm_sq(x.as_ref()).sqrt());
            for (j, u) in data.left_ops.iter().enumerate() {
                for (k, v) in data.left_ops.iter().enumerate() {
                    let ip = linalg::trace(linalg::mul(u.adjoint(), v.as_ref()).as_ref());
                    let target = if j == k { da as f64 } else { 0.0 };
                    prop_assert!((ip - c64::new(target, 0.0)).norm() < 1e-10);
                }
            }
            for (j, u) in data.right_ops.iter().enumerate() {
                for (k, v) in data.right_ops.iter().enumerate() {
                    let ip = linalg::trace(linalg::mul(u.adjoint(), v.as_ref()).as_ref());
                    let target = if j == k { db as f64 } else { 0.0 };
                    prop_assert!((ip - c64::new(target, 0.0)).norm() < 1e-10);
                }
            }
            prop_assert!(data.coefficients.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn unitary_purity_in_range(seed in any::<u64>(), da in 1usize..4, db in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = bip(da, db);
            let u = crate::random::haar_unitary(da * db, &mut rng);
            let op = DenseOperator::new(b, u).unwrap();
            let data = operator_schmidt(&op).unwrap();
            prop_assert!((data.coefficients.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let p = operator_purity(&op).unwrap();
            let floor = 1.0 / ((da * da).min(db * db) as f64);
            prop_assert!(p >= floor - 1e-12 && p <= 1.0 + 1e-12);
            let explicit = explicit_swap_sandwich(op.entries(), b) / (op.dim() as f64).powi(2);
            prop_assert!((operator_entanglement(&op).unwrap() - (1.0 - explicit)).abs() < 1e-9);
        }

        #[test]
        fn purity_scale_invariant(seed in any::<u64>(), re in -3.0f64..3.0, im in -3.0f64..3.0) {
            prop_assume!(re.abs() + im.abs() > 1e-3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = bip(2, 3);
            let op = DenseOperator::new(b, random_complex(6, 6, &mut rng)).unwrap();
            let p1 = operator_purity(&op).unwrap();
            let p2 = operator_purity(&op.scaled(c64::new(re, im))).unwrap();
            prop_assert!((p1 - p2).abs() < 1e-10);
        }
    }
}
