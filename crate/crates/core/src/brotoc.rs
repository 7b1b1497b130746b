//! Haar-averaged bipartite OTOCs: the disconnected and connected
//! regularized correlators, their difference, the unregularized average,
//! zero-temperature limits and Monte-Carlo oracles for all of them.

use faer::{c64, Mat, MatRef};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    hs_norm_sq, kron, partial_trace_matrix, realign, swap_sandwich_trace,
    swap_sandwich_trace_split, Bipartition, DenseOperator, Subsystem, UNITARY_TOL,
};
use crate::error::{BrotocError, Result};
use crate::linalg;
use crate::random::{child_seed, haar_unitary, StreamRng};
use crate::spectral::SpectralDecomposition;
use crate::thermal::ThermalContext;

/// Relative width of the band above `E_0` counted as ground manifold.
pub const DEFAULT_DEGENERACY_REL_TOL: f64 = 1e-8;

/// How a point was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointMethod {
    Analytic,
    HaarMc,
    ZeroTemperature,
}

/// `G^(d)`, `G^(r)`, `N = G^(d) − G^(r)` and the purity bounds on `G^(r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrotocPoint {
    pub beta: f64,
    pub t: f64,
    pub g_disc: f64,
    pub g_reg: f64,
    pub n_value: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub method: PointMethod,
}

fn check_bipartition(thermal: &ThermalContext<'_>, bip: Bipartition) -> Result<()> {
    if bip.dim_total() != thermal.dim() {
        return Err(BrotocError::Dimension(format!(
            "bipartition of dimension {} for a spectrum of dimension {}",
            bip.dim_total(),
            thermal.dim()
        )));
    }
    Ok(())
}

/// Purity bounds `Z(β/2)²/(d d_A² Z(β)) ≤ G^(r) ≤ Z(β/2)²/(d Z(β))`.
pub fn connected_bounds(thermal: &ThermalContext<'_>, bip: Bipartition) -> (f64, f64) {
    let upper = thermal.half_ratio() / bip.dim_total() as f64;
    let da = bip.dim_a() as f64;
    (upper / (da * da), upper)
}

/// `G^(d)_β = P_A(√ρ) P_B(√ρ) / d`.
pub fn disconnected(thermal: &ThermalContext<'_>, bip: Bipartition) -> Result<f64> {
    check_bipartition(thermal, bip)?;
    let s = thermal.sqrt_gibbs();
    let pa = hs_norm_sq(partial_trace_matrix(s.as_ref(), bip, Subsystem::A)?.as_ref());
    let pb = hs_norm_sq(partial_trace_matrix(s.as_ref(), bip, Subsystem::B)?.as_ref());
    Ok(pa * pb / bip.dim_total() as f64)
}

/// Reusable evaluator of `G^(r)_β(t)` for one `β` and many times.
///
/// `G^(r) = Tr[S_AA' X^⊗2 S_AA' X†^⊗2] / (d Z(β))` with `X = e^{−(β/4 + it)H}`.
/// Energies are measured from `E_0`, which changes `X` by a scalar only.
#[derive(Clone, Debug)]
pub struct ConnectedEvaluator<'a> {
    spectral: &'a SpectralDecomposition,
    bip: Bipartition,
    quarter: Vec<f64>,
    gaps: Vec<f64>,
    norm: f64,
}

impl<'a> ConnectedEvaluator<'a> {
    pub fn new(thermal: &ThermalContext<'a>, bip: Bipartition) -> Result<Self> {
        check_bipartition(thermal, bip)?;
        let spectral = thermal.spectral();
        let e0 = spectral.ground_energy();
        let gaps: Vec<f64> = spectral.energies().iter().map(|e| e - e0).collect();
        let beta = thermal.beta();
        let quarter = gaps.iter().map(|g| (-0.25 * beta * g).exp()).collect();
        let norm = 1.0 / (bip.dim_total() as f64 * thermal.z_shifted());
        Ok(Self { spectral, bip, quarter, gaps, norm })
    }

    fn weights(&self, t: f64) -> Vec<c64> {
        self.quarter
            .iter()
            .zip(&self.gaps)
            .map(|(&q, &g)| c64::new(0.0, -t * g).exp() * q)
            .collect()
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let f = self.weights(t);
        let trace = match self.spectral.real_vectors() {
            Some(v) => {
                let (p, q) = linalg::real_basis_function(v, &f);
                swap_sandwich_trace_split(p.as_ref(), q.as_ref(), self.bip)
            }
            None => {
                let x = linalg::complex_basis_function(self.spectral.vectors(), &f);
                let op = DenseOperator::new(self.bip, x).expect("dimension checked");
                swap_sandwich_trace(&op)
            }
        };
        trace * self.norm
    }
}

/// `G^(r)_β(t)`.
pub fn connected(thermal: &ThermalContext<'_>, t: f64, bip: Bipartition) -> Result<f64> {
    Ok(ConnectedEvaluator::new(thermal, bip)?.evaluate(t))
}

pub fn brotoc_point(thermal: &ThermalContext<'_>, t: f64, bip: Bipartition) -> Result<BrotocPoint> {
    let g_disc = disconnected(thermal, bip)?;
    let g_reg = connected(thermal, t, bip)?;
    let (lower_bound, upper_bound) = connected_bounds(thermal, bip);
    Ok(BrotocPoint {
        beta: thermal.beta(),
        t,
        g_disc,
        g_reg,
        n_value: g_disc - g_reg,
        lower_bound,
        upper_bound,
        method: PointMethod::Analytic,
    })
}

/// `G_β(t) = 1 − Re Tr[(ρ⊗I) U†^⊗2 S_AA' U^⊗2 S_AA'] / d`.
///
/// With `R = realign(U)` and `R_K = realign(Uρ)` the trace equals
/// `Tr[R_K† R R† R]`, which only needs matrices of size `d_A² × d_B²`.
pub fn unregularized_bipartite(thermal: &ThermalContext<'_>, t: f64, bip: Bipartition) -> Result<f64> {
    check_bipartition(thermal, bip)?;
    let spectral = thermal.spectral();
    let e0 = spectral.ground_energy();
    let phases: Vec<c64> = spectral
        .energies()
        .iter()
        .map(|e| c64::new(0.0, -t * (e - e0)).exp())
        .collect();
    let uk: Vec<c64> = phases
        .iter()
        .zip(thermal.gibbs_weights())
        .map(|(u, p)| u * *p)
        .collect();
    let u = spectral.weighted_projector_sum(&phases);
    let k = spectral.weighted_projector_sum(&uk);
    let ru = realign(u.as_ref(), bip);
    let rk = realign(k.as_ref(), bip);
    let prod = if bip.dim_a() <= bip.dim_b() {
        let m = linalg::mul(ru.as_ref(), ru.adjoint());
        linalg::mul(m.as_ref(), ru.as_ref())
    } else {
        let m = linalg::mul(ru.adjoint(), ru.as_ref());
        linalg::mul(ru.as_ref(), m.as_ref())
    };
    let mut tr = 0.0;
    for j in 0..prod.ncols() {
        for i in 0..prod.nrows() {
            tr += (rk[(i, j)].conj() * prod[(i, j)]).re;
        }
    }
    Ok(1.0 - tr / bip.dim_total() as f64)
}

/// Projector onto the ground manifold.
#[derive(Clone, Debug)]
pub struct GroundProjectorData {
    pub projector: DenseOperator,
    pub degeneracy: usize,
    pub degeneracy_tol: f64,
}

#[derive(Clone, Debug)]
pub struct ZeroTemperatureResult {
    pub g_disc_inf: f64,
    pub g_reg_inf: f64,
    pub n_inf: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub ground: GroundProjectorData,
    /// A level sits just outside the tolerance band, so `g₀` is fragile.
    pub ambiguous: bool,
}

/// `β → ∞` limits: `G^(d) = P_A(Π₀) P_B(Π₀)/(d g₀²)` and
/// `G^(r) = Tr[S Π₀^⊗2 S Π₀^⊗2]/(d g₀)`.
pub fn zero_temperature(
    spectral: &SpectralDecomposition,
    bip: Bipartition,
    tol: Option<f64>,
) -> Result<ZeroTemperatureResult> {
    let d = spectral.dim();
    if bip.dim_total() != d {
        return Err(BrotocError::Dimension(format!(
            "bipartition of dimension {} for a spectrum of dimension {d}",
            bip.dim_total()
        )));
    }
    let tol = tol.unwrap_or(DEFAULT_DEGENERACY_REL_TOL * spectral.spectral_width());
    let e = spectral.energies();
    let g0 = e.iter().filter(|&&x| x - e[0] <= tol).count();
    let ambiguous = e.iter().any(|&x| x - e[0] > tol && x - e[0] <= 2.0 * tol);

    let w: Vec<c64> = (0..d).map(|j| c64::new(if j < g0 { 1.0 } else { 0.0 }, 0.0)).collect();
    let pi0 = DenseOperator::new(bip, spectral.weighted_projector_sum(&w))?;
    let pa = hs_norm_sq(partial_trace_matrix(pi0.entries(), bip, Subsystem::A)?.as_ref());
    let pb = hs_norm_sq(partial_trace_matrix(pi0.entries(), bip, Subsystem::B)?.as_ref());
    let (df, gf) = (d as f64, g0 as f64);
    let g_disc_inf = pa * pb / (df * gf * gf);
    let g_reg_inf = swap_sandwich_trace(&pi0) / (df * gf);
    let upper_bound = gf / df;
    let da = bip.dim_a() as f64;
    Ok(ZeroTemperatureResult {
        g_disc_inf,
        g_reg_inf,
        n_inf: g_disc_inf - g_reg_inf,
        lower_bound: upper_bound / (da * da),
        upper_bound,
        ground: GroundProjectorData { projector: pi0, degeneracy: g0, degeneracy_tol: tol },
        ambiguous,
    })
}

/// One evaluation of the thermal OTOCs for fixed local unitaries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OtocSample {
    /// `F^(r) = Tr[W_t† y V† y W_t y V y]` with `y⁴ = ρ_β`.
    pub f_reg: c64,
    /// `F^(d) = Tr[√ρ W_t† √ρ W_t] Tr[√ρ V† √ρ V]`.
    pub f_disc: f64,
    /// `C = 1 − Re Tr[W_t† V† W_t V ρ]`.
    pub c_unreg: f64,
}

/// Precomputed `ρ^{1/4}`, `√ρ`, `ρ` and `U_t` for repeated sampling.
#[derive(Clone, Debug)]
pub struct OtocSampler {
    bip: Bipartition,
    y: Mat<c64>,
    sqrt_rho: Mat<c64>,
    rho: Mat<c64>,
    u: Mat<c64>,
}

impl OtocSampler {
    pub fn new(thermal: &ThermalContext<'_>, t: f64, bip: Bipartition) -> Result<Self> {
        check_bipartition(thermal, bip)?;
        let spectral = thermal.spectral();
        let e0 = spectral.ground_energy();
        let u = spectral.function_matrix(|e| c64::new(0.0, -t * (e - e0)).exp());
        Ok(Self {
            bip,
            y: thermal.gibbs_power(0.25),
            sqrt_rho: thermal.sqrt_gibbs(),
            rho: thermal.gibbs_state(),
            u,
        })
    }

    pub fn sample(&self, v: MatRef<'_, c64>, w: MatRef<'_, c64>) -> Result<OtocSample> {
        let (da, db) = (self.bip.dim_a(), self.bip.dim_b());
        if v.nrows() != da || v.ncols() != da || w.nrows() != db || w.ncols() != db {
            return Err(BrotocError::Dimension("local unitaries do not fit the bipartition".into()));
        }
        for (name, m) in [("V", v), ("W", w)] {
            let n = m.nrows();
            let g = linalg::mul(m.adjoint(), m);
            let r = linalg::max_abs_diff(g.as_ref(), Mat::<c64>::identity(n, n).as_ref());
            if r > UNITARY_TOL {
                return Err(BrotocError::Domain(format!("{name} is not unitary, residual {r:.3e}")));
            }
        }
        Ok(self.sample_unchecked(v, w))
    }

    fn sample_unchecked(&self, v: MatRef<'_, c64>, w: MatRef<'_, c64>) -> OtocSample {
        let (da, db) = (self.bip.dim_a(), self.bip.dim_b());
        let va = kron(v, Mat::<c64>::identity(db, db).as_ref());
        let wb = kron(Mat::<c64>::identity(da, da).as_ref(), w);
        let wt = linalg::mul(linalg::mul(self.u.adjoint(), wb.as_ref()).as_ref(), self.u.as_ref());
        let wt_dag = wt.adjoint().to_owned();
        let va_dag = va.adjoint().to_owned();
        let mul = |a: &Mat<c64>, b: &Mat<c64>| linalg::mul(a.as_ref(), b.as_ref());

        let left = mul(&mul(&wt_dag, &self.y), &mul(&va_dag, &self.y));
        let right = mul(&mul(&wt, &self.y), &mul(&va, &self.y));
        let f_reg = trace_of_product(&left, &right);

        let two_point = |a: &Mat<c64>, a_dag: &Mat<c64>| {
            trace_of_product(&mul(&self.sqrt_rho, a_dag), &mul(&self.sqrt_rho, a)).re
        };
        let f_disc = two_point(&wt, &wt_dag) * two_point(&va, &va_dag);

        let otoc = trace_of_product(&mul(&wt_dag, &va_dag), &mul(&mul(&wt, &va), &self.rho));
        OtocSample { f_reg, f_disc, c_unreg: 1.0 - otoc.re }
    }
}

/// `Tr[a b]` without forming the product.
fn trace_of_product(a: &Mat<c64>, b: &Mat<c64>) -> c64 {
    let mut acc = c64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn regularized_otoc_sample(
    thermal: &ThermalContext<'_>,
    t: f64,
    v: MatRef<'_, c64>,
    w: MatRef<'_, c64>,
) -> Result<OtocSample> {
    OtocSampler::new(thermal, t, thermal.bipartition())?.sample(v, w)
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl McEstimate {
    /// Distance from `target` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        // Samples of a deterministic quantity agree only up to rounding.
        let floor = 1e-12 * target.abs().max(1.0);
        let diff = (self.mean - target).abs();
        if self.stderr > floor {
            diff / self.stderr
        } else if diff <= floor {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn merge(self, o: Moments) -> Moments {
        Moments { n: self.n + o.n, sum: self.sum + o.sum, sum_sq: self.sum_sq + o.sum_sq }
    }

    fn estimate(&self) -> McEstimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        McEstimate { mean, stderr: (var / n).sqrt() }
    }
}

/// Haar Monte-Carlo estimates of `G^(d)`, `G^(r)`, `N` and `G_β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaarEstimate {
    pub g_disc: McEstimate,
    pub g_reg: McEstimate,
    pub n_value: McEstimate,
    pub g_unreg: McEstimate,
    pub samples: usize,
}

const MC_CHUNK: usize = 1000;

/// Splits `n` samples into fixed chunks with their own child streams, so
/// the result does not depend on the number of worker threads.
fn chunked<T: Send>(
    n: usize,
    master: u64,
    work: impl Fn(usize, &mut StreamRng) -> T + Sync,
) -> Vec<T> {
    let chunks = n.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(n - c * MC_CHUNK);
            let mut rng = StreamRng::seed_from_u64(child_seed(master, &[c as u64]));
            work(len, &mut rng)
        })
        .collect()
}

pub fn haar_mc_oracle<R: Rng + ?Sized>(
    thermal: &ThermalContext<'_>,
    t: f64,
    bip: Bipartition,
    n_samples: usize,
    rng: &mut R,
) -> Result<HaarEstimate> {
    if n_samples < 100 {
        return Err(BrotocError::Domain(format!("{n_samples} samples is below the minimum of 100")));
    }
    let sampler = OtocSampler::new(thermal, t, bip)?;
    let (da, db) = (bip.dim_a(), bip.dim_b());
    let master: u64 = rng.random();
    let parts = chunked(n_samples, master, |len, rng| {
        let mut m = [Moments::default(); 4];
        for _ in 0..len {
            let v = haar_unitary(da, rng);
            let w = haar_unitary(db, rng);
            let s = sampler.sample_unchecked(v.as_ref(), w.as_ref());
            m[0].push(s.f_disc);
            m[1].push(s.f_reg.re);
            m[2].push(s.f_disc - s.f_reg.re);
            m[3].push(s.c_unreg);
        }
        m
    });
    let total = parts.into_iter().fold([Moments::default(); 4], |acc, p| {
        [acc[0].merge(p[0]), acc[1].merge(p[1]), acc[2].merge(p[2]), acc[3].merge(p[3])]
    });
    Ok(HaarEstimate {
        g_disc: total[0].estimate(),
        g_reg: total[1].estimate(),
        n_value: total[2].estimate(),
        g_unreg: total[3].estimate(),
        samples: n_samples,
    })
}

/// Global Haar average of `Tr[y A₁(t) y B₁ y A₂(t) y B₂]` with `B₂ = A₂† B₁† A₁†`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SffCheckReport {
    pub estimate: McEstimate,
    /// Mean imaginary part, which should vanish.
    pub imaginary: McEstimate,
    /// `R₄(β/4, t) / (d³ Z(β))`.
    pub target: f64,
    pub samples: usize,
}

/// Largest dimension accepted by [`global_haar_sff_check`].
pub const SFF_CHECK_MAX_DIM: usize = 16;

pub fn global_haar_sff_check<R: Rng + ?Sized>(
    thermal: &ThermalContext<'_>,
    t: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<SffCheckReport> {
    let d = thermal.dim();
    if d > SFF_CHECK_MAX_DIM {
        return Err(BrotocError::Domain(format!("dimension {d} exceeds {SFF_CHECK_MAX_DIM}")));
    }
    if n_samples < 1000 {
        return Err(BrotocError::Domain(format!("{n_samples} samples is below the minimum of 1000")));
    }
    let spectral = thermal.spectral();
    let e0 = spectral.ground_energy();
    let u = spectral.function_matrix(|e| c64::new(0.0, -t * (e - e0)).exp());
    let u_dag = u.adjoint().to_owned();
    let y = thermal.gibbs_power(0.25);
    let mul = |a: &Mat<c64>, b: &Mat<c64>| linalg::mul(a.as_ref(), b.as_ref());

    let master: u64 = rng.random();
    let parts = chunked(n_samples, master, |len, rng| {
        let mut m = [Moments::default(); 2];
        for _ in 0..len {
            let a1 = haar_unitary(d, rng);
            let b1 = haar_unitary(d, rng);
            let a2 = haar_unitary(d, rng);
            let b2 = mul(&mul(&a2.adjoint().to_owned(), &b1.adjoint().to_owned()), &a1.adjoint().to_owned());
            let a1t = mul(&mul(&u_dag, &a1), &u);
            let a2t = mul(&mul(&u_dag, &a2), &u);
            let left = mul(&mul(&y, &a1t), &mul(&y, &b1));
            let right = mul(&mul(&y, &a2t), &mul(&y, &b2));
            let f = trace_of_product(&left, &right);
            m[0].push(f.re);
            m[1].push(f.im);
        }
        m
    });
    let total = parts
        .into_iter()
        .fold([Moments::default(); 2], |acc, p| [acc[0].merge(p[0]), acc[1].merge(p[1])]);

    let z_quarter: c64 = spectral
        .energies()
        .iter()
        .map(|&e| c64::new(-0.25 * thermal.beta() * (e - e0), t * e).exp())
        .sum();
    let df = d as f64;
    let target = z_quarter.norm_sqr().powi(2) / (df * df * df * thermal.z_shifted());
    Ok(SffCheckReport {
        estimate: total[0].estimate(),
        imaginary: total[1].estimate(),
        target,
        samples: n_samples,
    })
}
