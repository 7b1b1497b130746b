//! Hamiltonian families: spin chains, random matrices and models built
//! directly from a spectrum and an eigenbasis.

use faer::{c64, Mat, MatRef, Side};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::algebra::{kron, Bipartition, DenseOperator};
use crate::error::{BrotocError, Result};
use crate::random::{gue_matrix, StreamRng};
use crate::spectral::SpectralDecomposition;
use rand::SeedableRng;

/// Largest Hilbert-space dimension any builder will allocate.
pub const MAX_DENSE_DIM: usize = 1 << 14;

/// Relative pair-sum tolerance used when none is given.
pub const DEFAULT_NRC_REL_TOL: f64 = 1e-10;

/// Source of the energies for spectrally defined models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSource {
    /// Eigenvalues of one GUE sample of matching dimension.
    Gue,
    Explicit(Vec<f64>),
}

/// Serializable description of one Hamiltonian family member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Tfim { l: u32, g: f64, h: f64 },
    /// Ising chain with transverse fields drawn from `U[-eta, eta]`.
    Disordered { l: u32, eta: f64, h: f64 },
    Gue { d: usize },
    NrcPs { d_a: usize, d_b: usize, spectrum: SpectrumSource },
    MaxEnt { d: usize, spectrum: SpectrumSource },
    /// `H_A ⊗ I + I ⊗ H_B` with independent GUE local terms.
    NonEntangling { d_a: usize, d_b: usize },
    /// `H = 0`.
    Zero { d_a: usize, d_b: usize },
}

impl ModelSpec {
    pub fn bipartition(&self) -> Result<Bipartition> {
        match *self {
            ModelSpec::Tfim { l, .. } | ModelSpec::Disordered { l, .. } => Bipartition::half_chain(l),
            ModelSpec::Gue { d } => balanced_bipartition(d),
            ModelSpec::NrcPs { d_a, d_b, .. }
            | ModelSpec::NonEntangling { d_a, d_b }
            | ModelSpec::Zero { d_a, d_b } => Bipartition::new(d_a, d_b),
            ModelSpec::MaxEnt { d, .. } => {
                let n = exact_sqrt(d).ok_or_else(|| {
                    BrotocError::Domain(format!("dimension {d} is not a perfect square"))
                })?;
                Bipartition::new(n, n)
            }
        }
    }

    pub fn dim(&self) -> Result<usize> {
        Ok(self.bipartition()?.dim_total())
    }

    /// Whether the model is random, i.e. whether realizations differ.
    pub fn is_random(&self) -> bool {
        match self {
            ModelSpec::Tfim { .. } | ModelSpec::Zero { .. } => false,
            ModelSpec::Disordered { eta, .. } => *eta > 0.0,
            ModelSpec::NrcPs { spectrum, .. } | ModelSpec::MaxEnt { spectrum, .. } => {
                *spectrum == SpectrumSource::Gue
            }
            ModelSpec::Gue { .. } | ModelSpec::NonEntangling { .. } => true,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ModelSpec::Tfim { l, g, h } => {
                chain_dim(l)?;
                finite(&[g, h])
            }
            ModelSpec::Disordered { l, eta, h } => {
                chain_dim(l)?;
                finite(&[eta, h])?;
                if eta < 0.0 {
                    return Err(BrotocError::Config(format!("disorder strength {eta} is negative")));
                }
                Ok(())
            }
            _ => {
                let d = self.dim()?;
                if d > MAX_DENSE_DIM {
                    return Err(BrotocError::Resource(format!(
                        "dimension {d} exceeds the dense limit {MAX_DENSE_DIM}"
                    )));
                }
                if let ModelSpec::Gue { d } = self {
                    if *d < 2 {
                        return Err(BrotocError::Config("GUE dimension must be at least 2".into()));
                    }
                }
                Ok(())
            }
        }
    }

    /// Build the realization driven by `seed`.
    pub fn instantiate(&self, seed: u64, realization: usize) -> Result<HamiltonianInstance> {
        self.validate()?;
        let mut rng = StreamRng::seed_from_u64(seed);
        let mut inst = match self {
            ModelSpec::Tfim { l, g, h } => build_tfim(*l, *g, *h)?,
            ModelSpec::Disordered { l, eta, h } => build_disordered(*l, *eta, *h, &mut rng)?,
            ModelSpec::Gue { d } => sample_gue_with(*d, self.bipartition()?, &mut rng)?,
            ModelSpec::NrcPs { d_a, d_b, spectrum } => {
                let e = resolve_spectrum(spectrum, d_a * d_b, &mut rng)?;
                match spectrum {
                    SpectrumSource::Gue => assemble_nrc_ps(Bipartition::new(*d_a, *d_b)?, &e)?,
                    SpectrumSource::Explicit(_) => build_nrc_ps(*d_a, *d_b, &e)?,
                }
            }
            ModelSpec::MaxEnt { d, spectrum } => {
                let e = resolve_spectrum(spectrum, *d, &mut rng)?;
                build_max_ent(*d, &e)?
            }
            ModelSpec::NonEntangling { d_a, d_b } => {
                let ha = gue_matrix(*d_a, &mut rng);
                let hb = gue_matrix(*d_b, &mut rng);
                build_non_entangling(ha.as_ref(), hb.as_ref())?
            }
            ModelSpec::Zero { d_a, d_b } => {
                let bip = Bipartition::new(*d_a, *d_b)?;
                HamiltonianInstance::dense(self.clone(), DenseOperator::zeros(bip))
            }
        };
        inst.spec = self.clone();
        inst.realization = realization;
        Ok(inst)
    }
}

/// Split `d` as `d_A x d_B` with `d_A` the largest divisor not above `√d`.
pub fn balanced_bipartition(d: usize) -> Result<Bipartition> {
    if d == 0 {
        return Err(BrotocError::Dimension("dimension must be positive".into()));
    }
    let mut a = (d as f64).sqrt() as usize;
    while a > 1 && d % a != 0 {
        a -= 1;
    }
    Bipartition::new(a.max(1), d / a.max(1))
}

fn exact_sqrt(d: usize) -> Option<usize> {
    let n = (d as f64).sqrt().round() as usize;
    (n * n == d).then_some(n)
}

fn finite(xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(BrotocError::Config("model couplings must be finite".into()))
    }
}

fn chain_dim(l: u32) -> Result<usize> {
    if l < 2 {
        return Err(BrotocError::Config(format!("chain length {l} is below 2")));
    }
    if l > MAX_DENSE_DIM.trailing_zeros() {
        return Err(BrotocError::Resource(format!(
            "chain length {l} exceeds the dense limit of {} sites",
            MAX_DENSE_DIM.trailing_zeros()
        )));
    }
    Ok(1usize << l)
}

fn resolve_spectrum<R: Rng>(source: &SpectrumSource, d: usize, rng: &mut R) -> Result<Vec<f64>> {
    match source {
        SpectrumSource::Explicit(e) => {
            if e.len() != d {
                return Err(BrotocError::Dimension(format!(
                    "spectrum has {} values, model needs {d}",
                    e.len()
                )));
            }
            Ok(e.clone())
        }
        SpectrumSource::Gue => gue_spectrum(d, rng),
    }
}

/// Ascending eigenvalues of one GUE sample.
pub fn gue_spectrum<R: Rng>(d: usize, rng: &mut R) -> Result<Vec<f64>> {
    let h = gue_matrix(d, rng);
    let mut e = h
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|err| BrotocError::numerical(format!("GUE eigenvalues: {err:?}"), f64::NAN))?;
    e.sort_by(f64::total_cmp);
    Ok(e)
}

/// Either a dense Hamiltonian or one known through its eigenpairs.
#[derive(Clone, Debug)]
pub enum HamiltonianForm {
    Dense(DenseOperator),
    Spectral(SpectralDecomposition),
}

#[derive(Clone, Debug)]
pub struct HamiltonianInstance {
    pub spec: ModelSpec,
    pub form: HamiltonianForm,
    pub realization: usize,
    /// Site-resolved transverse fields of disordered chains.
    pub site_fields: Vec<f64>,
    /// Product-basis energies `E_{jk}` at `j * d_B + k`, for product-state models.
    pub energy_grid: Option<Vec<f64>>,
}

impl HamiltonianInstance {
    fn dense(spec: ModelSpec, op: DenseOperator) -> Self {
        Self { spec, form: HamiltonianForm::Dense(op), realization: 0, site_fields: vec![], energy_grid: None }
    }

    pub fn bipartition(&self) -> Bipartition {
        match &self.form {
            HamiltonianForm::Dense(op) => op.bipartition(),
            HamiltonianForm::Spectral(s) => s.bipartition(),
        }
    }

    pub fn dim(&self) -> usize {
        self.bipartition().dim_total()
    }

    /// Diagonalize if needed.
    pub fn spectral(&self) -> Result<SpectralDecomposition> {
        match &self.form {
            HamiltonianForm::Dense(op) => SpectralDecomposition::from_hermitian(op),
            HamiltonianForm::Spectral(s) => Ok(s.clone()),
        }
    }

    pub fn into_spectral(self) -> Result<SpectralDecomposition> {
        match self.form {
            HamiltonianForm::Dense(op) => SpectralDecomposition::from_hermitian(&op),
            HamiltonianForm::Spectral(s) => Ok(s),
        }
    }

    pub fn to_dense(&self) -> Result<DenseOperator> {
        match &self.form {
            HamiltonianForm::Dense(op) => Ok(op.clone()),
            HamiltonianForm::Spectral(s) => DenseOperator::new(s.bipartition(), s.hamiltonian()),
        }
    }
}

/// Open Ising chain with site-dependent transverse fields.
///
/// Site 0 is the most significant bit, so the first `floor(L/2)` sites
/// form subsystem `A`.
fn ising_chain(l: u32, fields: &[f64], h: f64) -> Result<DenseOperator> {
    let d = chain_dim(l)?;
    let l = l as usize;
    let bit = |site: usize| l - 1 - site;
    let mut m = Mat::<f64>::zeros(d, d);
    for s in 0..d {
        let z = |site: usize| if (s >> bit(site)) & 1 == 0 { 1.0 } else { -1.0 };
        let mut diag = 0.0;
        for j in 0..l - 1 {
            diag -= z(j) * z(j + 1);
        }
        for j in 0..l {
            diag -= h * z(j);
            m[(s ^ (1 << bit(j)), s)] -= fields[j];
        }
        m[(s, s)] += diag;
    }
    DenseOperator::from_real(Bipartition::half_chain(l as u32)?, m.as_ref())
}

/// `H = −Σ σᶻσᶻ − g Σ σˣ − h Σ σᶻ` with open boundaries.
pub fn build_tfim(l: u32, g: f64, h: f64) -> Result<HamiltonianInstance> {
    finite(&[g, h])?;
    let op = ising_chain(l, &vec![g; l as usize], h)?;
    Ok(HamiltonianInstance::dense(ModelSpec::Tfim { l, g, h }, op))
}

pub fn build_disordered<R: Rng>(l: u32, eta: f64, h: f64, rng: &mut R) -> Result<HamiltonianInstance> {
    finite(&[eta, h])?;
    if eta < 0.0 {
        return Err(BrotocError::Domain(format!("disorder strength {eta} is negative")));
    }
    chain_dim(l)?;
    let dist = Uniform::new_inclusive(-eta, eta)
        .map_err(|e| BrotocError::Domain(format!("disorder distribution: {e}")))?;
    let fields: Vec<f64> = (0..l).map(|_| dist.sample(rng)).collect();
    let op = ising_chain(l, &fields, h)?;
    let mut inst = HamiltonianInstance::dense(ModelSpec::Disordered { l, eta, h }, op);
    inst.site_fields = fields;
    Ok(inst)
}

pub fn sample_gue<R: Rng>(d: usize, rng: &mut R) -> Result<HamiltonianInstance> {
    sample_gue_with(d, balanced_bipartition(d)?, rng)
}

fn sample_gue_with<R: Rng>(d: usize, bip: Bipartition, rng: &mut R) -> Result<HamiltonianInstance> {
    if d < 2 {
        return Err(BrotocError::Domain("GUE dimension must be at least 2".into()));
    }
    let op = DenseOperator::new(bip, gue_matrix(d, rng))?;
    Ok(HamiltonianInstance::dense(ModelSpec::Gue { d }, op))
}

/// Product eigenbasis `|j⟩⊗|k⟩` carrying `spectrum[j * d_B + k]`.
pub fn build_nrc_ps(d_a: usize, d_b: usize, spectrum: &[f64]) -> Result<HamiltonianInstance> {
    let bip = Bipartition::new(d_a, d_b)?;
    let d = bip.dim_total();
    if spectrum.len() != d {
        return Err(BrotocError::Dimension(format!(
            "spectrum has {} values, model needs {d}",
            spectrum.len()
        )));
    }
    let report = check_nrc(spectrum, None);
    if !report.holds {
        return Err(BrotocError::Validation(format!(
            "spectrum violates the no-resonance condition ({} coincidences)",
            report.violation_count
        )));
    }
    assemble_nrc_ps(bip, spectrum)
}

/// Product-eigenbasis model without the resonance check. Used for GUE
/// spectra, whose pair sums collide within the default tolerance by chance
/// once `d` reaches about a thousand.
fn assemble_nrc_ps(bip: Bipartition, spectrum: &[f64]) -> Result<HamiltonianInstance> {
    let (d_a, d_b, d) = (bip.dim_a(), bip.dim_b(), bip.dim_total());
    let spectral = SpectralDecomposition::from_parts(bip, spectrum.to_vec(), Mat::identity(d, d))?;
    Ok(HamiltonianInstance {
        spec: ModelSpec::NrcPs { d_a, d_b, spectrum: SpectrumSource::Explicit(spectrum.to_vec()) },
        form: HamiltonianForm::Spectral(spectral),
        realization: 0,
        site_fields: vec![],
        energy_grid: Some(spectrum.to_vec()),
    })
}

/// Generalized Bell basis `(X^p Z^q ⊗ I)|Φ⁺⟩`, column `p * n + q`.
pub fn bell_basis(n: usize) -> Mat<c64> {
    let norm = 1.0 / (n as f64).sqrt();
    let phase = |k: usize| {
        let k = k % n;
        if k == 0 {
            c64::new(1.0, 0.0)
        } else if 2 * k == n {
            c64::new(-1.0, 0.0)
        } else {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            c64::new(th.cos(), th.sin())
        }
    };
    Mat::from_fn(n * n, n * n, |row, col| {
        let (a, b) = (row / n, row % n);
        let (p, q) = (col / n, col % n);
        if a == (b + p) % n {
            phase(q * b) * norm
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

/// Every eigenstate maximally entangled across a symmetric cut.
pub fn build_max_ent(d: usize, spectrum: &[f64]) -> Result<HamiltonianInstance> {
    let n = exact_sqrt(d)
        .ok_or_else(|| BrotocError::Domain(format!("dimension {d} is not a perfect square")))?;
    if spectrum.len() != d {
        return Err(BrotocError::Dimension(format!(
            "spectrum has {} values, model needs {d}",
            spectrum.len()
        )));
    }
    let bip = Bipartition::new(n, n)?;
    let spectral = SpectralDecomposition::from_parts(bip, spectrum.to_vec(), bell_basis(n))?;
    Ok(HamiltonianInstance {
        spec: ModelSpec::MaxEnt { d, spectrum: SpectrumSource::Explicit(spectrum.to_vec()) },
        form: HamiltonianForm::Spectral(spectral),
        realization: 0,
        site_fields: vec![],
        energy_grid: None,
    })
}

/// `H_A ⊗ I + I ⊗ H_B`.
pub fn build_non_entangling(h_a: MatRef<'_, c64>, h_b: MatRef<'_, c64>) -> Result<HamiltonianInstance> {
    if h_a.nrows() != h_a.ncols() || h_b.nrows() != h_b.ncols() {
        return Err(BrotocError::Dimension("local terms must be square".into()));
    }
    let bip = Bipartition::new(h_a.nrows(), h_b.nrows())?;
    let ia = Mat::<c64>::identity(bip.dim_a(), bip.dim_a());
    let ib = Mat::<c64>::identity(bip.dim_b(), bip.dim_b());
    let op = DenseOperator::new(bip, kron(h_a, ib.as_ref()) + kron(ia.as_ref(), h_b))?;
    let scale = op.entries().norm_max().max(f64::MIN_POSITIVE);
    if op.hermiticity_residual() > 1e-12 * scale {
        return Err(BrotocError::Validation("local terms must be Hermitian".into()));
    }
    Ok(HamiltonianInstance::dense(
        ModelSpec::NonEntangling { d_a: bip.dim_a(), d_b: bip.dim_b() },
        op,
    ))
}

/// Outcome of a no-resonance scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NrcReport {
    pub holds: bool,
    pub tolerance: f64,
    /// Number of pair-sum coincidences found.
    pub violation_count: usize,
    /// First few offending pairs `((l, k), (n, m))`.
    pub violations: Vec<((usize, usize), (usize, usize))>,
}

const NRC_REPORTED: usize = 64;

/// Flags `|E_l + E_k − E_n − E_m| ≤ tol` for distinct unordered pairs.
///
/// Degenerate levels show up as coincidences of the diagonal pairs.
/// `tol` defaults to `1e-10` times the spectral width.
pub fn check_nrc(energies: &[f64], tol: Option<f64>) -> NrcReport {
    let n = energies.len();
    let (lo, hi) = energies
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
    let width = if n > 0 { hi - lo } else { 0.0 };
    let tolerance = tol.unwrap_or(DEFAULT_NRC_REL_TOL * width);

    let mut sums = Vec::with_capacity(n * (n + 1) / 2);
    for l in 0..n {
        for k in l..n {
            sums.push((energies[l] + energies[k], l, k));
        }
    }
    sums.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));

    let mut violations = vec![];
    let mut violation_count = 0;
    for w in sums.windows(2) {
        if (w[1].0 - w[0].0).abs() <= tolerance {
            violation_count += 1;
            if violations.len() < NRC_REPORTED {
                violations.push(((w[0].1, w[0].2), (w[1].1, w[1].2)));
            }
        }
    }
    NrcReport { holds: violation_count == 0, tolerance, violation_count, violations }
}
