//! Partition functions, Gibbs states, thermofield doubles and the Choi
//! matrices of the imaginary-time regularized map.
//!
//! Boltzmann sums are accumulated relative to the ground energy `E_0`, so
//! every weight is at most one and ratios of partition functions never
//! overflow. The unshifted values are recovered on request.

use faer::{c64, Mat, Side};
use rand::SeedableRng;

use crate::algebra::{Bipartition, PureState, SpaceTag};
use crate::error::{BrotocError, Result};
use crate::linalg;
use crate::random::{complex_gaussian, StreamRng};
use crate::spectral::SpectralDecomposition;

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta.is_nan() || beta < 0.0 {
        return Err(BrotocError::Domain(format!("inverse temperature {beta} is negative")));
    }
    if beta.is_infinite() {
        return Err(BrotocError::Domain(
            "infinite inverse temperature needs the zero-temperature path".into(),
        ));
    }
    Ok(())
}

/// `e^{−β(E_j − E_0)}` for every level.
fn shifted_weights(energies: &[f64], beta: f64) -> Vec<f64> {
    let e0 = energies[0];
    energies.iter().map(|&e| (-beta * (e - e0)).exp()).collect()
}

/// A spectrum together with everything that depends on `β` alone.
#[derive(Clone, Debug)]
pub struct ThermalContext<'a> {
    spectral: &'a SpectralDecomposition,
    beta: f64,
    /// `Σ_j e^{−β(E_j − E_0)}`.
    z_shifted: f64,
    /// `Σ_j e^{−β(E_j − E_0)/2}`.
    z_half_shifted: f64,
    gibbs: Vec<f64>,
    half_weights: Vec<f64>,
}

impl<'a> ThermalContext<'a> {
    pub fn new(spectral: &'a SpectralDecomposition, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let full = shifted_weights(spectral.energies(), beta);
        let half_weights = shifted_weights(spectral.energies(), beta / 2.0);
        let z_shifted: f64 = full.iter().sum();
        let z_half_shifted: f64 = half_weights.iter().sum();
        let gibbs = full.iter().map(|w| w / z_shifted).collect();
        Ok(Self { spectral, beta, z_shifted, z_half_shifted, gibbs, half_weights })
    }

    pub fn spectral(&self) -> &'a SpectralDecomposition {
        self.spectral
    }

    pub fn bipartition(&self) -> Bipartition {
        self.spectral.bipartition()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.spectral.dim()
    }

    /// `ln Z(β)`.
    pub fn log_z_beta(&self) -> f64 {
        self.z_shifted.ln() - self.beta * self.spectral.ground_energy()
    }

    /// `Z(β)`; may overflow for large `β` with negative energies.
    pub fn z_beta(&self) -> f64 {
        self.log_z_beta().exp()
    }

    pub fn z_half_beta(&self) -> f64 {
        (self.z_half_shifted.ln() - 0.5 * self.beta * self.spectral.ground_energy()).exp()
    }

    /// `Z(β)` relative to the ground level, `Z(β) e^{β E_0}`.
    pub fn z_shifted(&self) -> f64 {
        self.z_shifted
    }

    pub fn z_half_shifted(&self) -> f64 {
        self.z_half_shifted
    }

    /// `Z(β/2)² / Z(β)`, which lies in `[1, d]`.
    pub fn half_ratio(&self) -> f64 {
        self.z_half_shifted * self.z_half_shifted / self.z_shifted
    }

    /// `p_j(β)`.
    pub fn gibbs_weights(&self) -> &[f64] {
        &self.gibbs
    }

    /// `e^{−β(E_j − E_0)/2}`, the unnormalized weights at `β/2`.
    pub fn half_weights(&self) -> &[f64] {
        &self.half_weights
    }

    /// `p_j(β/2)`.
    pub fn half_gibbs_weights(&self) -> Vec<f64> {
        self.half_weights.iter().map(|w| w / self.z_half_shifted).collect()
    }

    /// `ρ_β^s` as a dense matrix.
    pub fn gibbs_power(&self, s: f64) -> Mat<c64> {
        let w: Vec<c64> = self.gibbs.iter().map(|p| c64::new(p.powf(s), 0.0)).collect();
        self.spectral.weighted_projector_sum(&w)
    }

    pub fn gibbs_state(&self) -> Mat<c64> {
        self.gibbs_power(1.0)
    }

    pub fn sqrt_gibbs(&self) -> Mat<c64> {
        self.gibbs_power(0.5)
    }
}

/// `Z(β) = Σ_j e^{−βE_j}`.
pub fn partition_function(spectral: &SpectralDecomposition, beta: f64) -> Result<f64> {
    Ok(ThermalContext::new(spectral, beta)?.z_beta())
}

/// `Σ_j e^{(−β+it)E_j}`.
pub fn continued_partition_function(spectral: &SpectralDecomposition, beta: f64, t: f64) -> Result<c64> {
    check_beta(beta)?;
    let e0 = spectral.ground_energy();
    let sum: c64 = spectral
        .energies()
        .iter()
        .map(|&e| c64::new(-beta * (e - e0), t * e).exp())
        .sum();
    Ok(sum * (-beta * e0).exp())
}

/// `|Z(β + it)|²`.
pub fn sff2(spectral: &SpectralDecomposition, beta: f64, t: f64) -> Result<f64> {
    Ok(continued_partition_function(spectral, beta, -t)?.norm_sqr())
}

/// `(Z_β(t) Z_β(t)*)²`.
pub fn sff4(spectral: &SpectralDecomposition, beta: f64, t: f64) -> Result<f64> {
    Ok(sff2(spectral, beta, t)?.powi(2))
}

/// Purification `Σ_j e^{−(β/2+it)E_j}/√Z |φ_j⟩|φ_j*⟩` of the Gibbs state.
#[derive(Clone, Debug)]
pub struct ThermofieldDouble {
    bipartition: Bipartition,
    beta: f64,
    t: f64,
    energies: Vec<f64>,
    energy_coefficients: Vec<c64>,
    /// `Ψ[x, x']`, the amplitude of `|x⟩|x'⟩`.
    amplitudes: Mat<c64>,
}

impl ThermofieldDouble {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Amplitudes on `|φ_j⟩|φ_j*⟩`.
    pub fn energy_coefficients(&self) -> &[c64] {
        &self.energy_coefficients
    }

    pub fn amplitude_matrix(&self) -> &Mat<c64> {
        &self.amplitudes
    }

    pub fn to_state(&self) -> Result<PureState> {
        let d = self.amplitudes.nrows();
        let amps = (0..d * d).map(|k| self.amplitudes[(k / d, k % d)]).collect();
        PureState::new(self.bipartition, amps, SpaceTag::Doubled)
    }

    /// Marginal on the first copy, `Ψ Ψ†`.
    pub fn first_marginal(&self) -> Mat<c64> {
        linalg::mul(self.amplitudes.as_ref(), self.amplitudes.adjoint())
    }

    /// Marginal on the second copy, `Ψᵀ Ψ*`.
    pub fn second_marginal(&self) -> Mat<c64> {
        linalg::mul(self.amplitudes.transpose(), self.amplitudes.conjugate())
    }

    /// `⟨self|other⟩` over the doubled space.
    pub fn overlap(&self, other: &ThermofieldDouble) -> c64 {
        self.energy_coefficients
            .iter()
            .zip(&other.energy_coefficients)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|⟨ψ(β,0)|ψ(β,t)⟩|²`.
    pub fn survival_probability(&self) -> f64 {
        let amp: c64 = self
            .energy_coefficients
            .iter()
            .zip(&self.energies)
            .map(|(c, &e)| c64::new(0.0, -self.t * e).exp() * c.norm_sqr())
            .sum();
        amp.norm_sqr()
    }
}

pub fn thermofield_double(spectral: &SpectralDecomposition, beta: f64, t: f64) -> Result<ThermofieldDouble> {
    let ctx = ThermalContext::new(spectral, beta)?;
    let inv = 1.0 / ctx.z_shifted.sqrt();
    let coeffs: Vec<c64> = spectral
        .energies()
        .iter()
        .zip(ctx.half_weights())
        .map(|(&e, &w)| c64::new(0.0, -t * e).exp() * (w * inv))
        .collect();
    let amplitudes = spectral.weighted_projector_sum(&coeffs);
    Ok(ThermofieldDouble {
        bipartition: spectral.bipartition(),
        beta,
        t,
        energies: spectral.energies().to_vec(),
        energy_coefficients: coeffs,
        amplitudes,
    })
}

/// Choi matrix `(Z(β/2)/d) |v⟩⟨v|` of `X ↦ x U_t† X U_t x` with `x = e^{−βH/4}`,
/// kept in rank-one form. `|v⟩` is the thermofield double at `β/2`
/// evolved backwards to `−t`, because the map acts in the Heisenberg picture.
#[derive(Clone, Debug)]
pub struct ChoiMatrix {
    state: ThermofieldDouble,
    trace_value: f64,
}

impl ChoiMatrix {
    pub fn state(&self) -> &ThermofieldDouble {
        &self.state
    }

    /// `Z(β/2)/d`.
    pub fn trace_value(&self) -> f64 {
        self.trace_value
    }

    /// Dense `d² × d²` form, indexed `(x, x')` with `x` on the first copy.
    pub fn dense(&self) -> Mat<c64> {
        let psi = &self.state.amplitudes;
        let d = psi.nrows();
        Mat::from_fn(d * d, d * d, |r, c| {
            psi[(r / d, r % d)] * psi[(c / d, c % d)].conj() * self.trace_value
        })
    }
}

pub fn choi_of_regularized_map(spectral: &SpectralDecomposition, beta: f64, t: f64) -> Result<ChoiMatrix> {
    let state = thermofield_double(spectral, beta / 2.0, -t)?;
    let trace_value = partition_function(spectral, beta / 2.0)? / spectral.dim() as f64;
    Ok(ChoiMatrix { state, trace_value })
}

/// `(Z(β/2)/d)² |⟨ψ(β/2,t)|ψ(β/2,0)⟩|²`, checked against `sff2(β/2,t)/d²`.
pub fn choi_fidelity(spectral: &SpectralDecomposition, beta: f64, t: f64) -> Result<f64> {
    let moving = thermofield_double(spectral, beta / 2.0, t)?;
    let still = thermofield_double(spectral, beta / 2.0, 0.0)?;
    let d = spectral.dim() as f64;
    let pref = partition_function(spectral, beta / 2.0)? / d;
    let value = pref * pref * moving.overlap(&still).norm_sqr();
    let reference = sff2(spectral, beta / 2.0, t)? / (d * d);
    let gap = (value - reference).abs();
    if gap > 1e-10 * reference.abs().max(f64::MIN_POSITIVE) && gap > 1e-300 {
        return Err(BrotocError::numerical("Choi fidelity disagrees with the form factor", gap));
    }
    Ok(value)
}

/// Outcome of the complete-positivity and trace checks for `X ↦ x X x`.
#[derive(Clone, Debug, PartialEq)]
pub struct CpTraceReport {
    pub psd: bool,
    /// Smallest eigenvalue of the Choi matrix.
    pub choi_min_eigenvalue: f64,
    pub trace_nonincreasing: bool,
    /// Largest `Tr[x ρ x] − 1` over the sampled states.
    pub worst_trace_excess: f64,
    /// Largest eigenvalue of `e^{−βH/2}`.
    pub max_kraus_eigenvalue: f64,
}

const CP_PSD_TOL: f64 = 1e-10;
const CP_TRACE_TOL: f64 = 1e-12;
const CP_SAMPLES: usize = 20;
/// Largest dimension for which the Choi spectrum is computed densely.
pub const DENSE_CHOI_MAX_DIM: usize = 16;

/// Checks positivity of the Choi matrix of `X ↦ e^{−βH/4} X e^{−βH/4}` and
/// whether the map shrinks the trace of random pure states. The trace check
/// uses the ground-shifted `H − E₀ ≥ 0`, for which `e^{−βH/2} ≤ I`.
pub fn cp_trace_check(spectral: &SpectralDecomposition, beta: f64) -> Result<CpTraceReport> {
    check_beta(beta)?;
    let d = spectral.dim();
    let choi = choi_of_regularized_map(spectral, beta, 0.0)?;
    let choi_min_eigenvalue = if d <= DENSE_CHOI_MAX_DIM {
        let eig = choi
            .dense()
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| BrotocError::numerical(format!("Choi spectrum: {e:?}"), f64::NAN))?;
        eig.into_iter().fold(f64::INFINITY, f64::min)
    } else if d > 1 {
        // Rank one with a nonnegative weight.
        0.0
    } else {
        choi.trace_value()
    };

    let e0 = spectral.ground_energy();
    let kraus: Vec<f64> = spectral.energies().iter().map(|&e| (-0.5 * beta * (e - e0)).exp()).collect();
    let max_kraus_eigenvalue = kraus.iter().copied().fold(0.0, f64::max);
    let mut rng = StreamRng::seed_from_u64(0x5eed_c0de ^ d as u64);
    let mut worst_trace_excess = f64::NEG_INFINITY;
    for _ in 0..CP_SAMPLES {
        let psi: Vec<c64> = (0..d).map(|_| complex_gaussian(&mut rng)).collect();
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        // Components in the eigenbasis.
        let v = spectral.vectors();
        let mut tr = 0.0;
        for (j, k) in kraus.iter().enumerate() {
            let mut amp = c64::new(0.0, 0.0);
            for (x, z) in psi.iter().enumerate() {
                amp += v[(x, j)].conj() * z;
            }
            tr += k * amp.norm_sqr() / norm;
        }
        worst_trace_excess = worst_trace_excess.max(tr - 1.0);
    }
    Ok(CpTraceReport {
        psd: choi_min_eigenvalue >= -CP_PSD_TOL,
        choi_min_eigenvalue,
        trace_nonincreasing: worst_trace_excess <= CP_TRACE_TOL,
        worst_trace_excess,
        max_kraus_eigenvalue,
    })
}

/// `I₁(2β)/β = Σ_n β^{2n} / ((n!)² (n+1))`.
pub(crate) fn bessel_ratio(beta: f64) -> f64 {
    let x = beta * beta;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 0u32;
    loop {
        // term_{n+1} / term_n = x / ((n+1)(n+2))
        term *= x / (((n + 1) * (n + 2)) as f64);
        sum += term;
        n += 1;
        if (term < 1e-15 * sum && n as f64 > beta) || n > 100_000 {
            break;
        }
    }
    sum
}

/// GUE ensemble mean `⟨Z(β)⟩ = d I₁(2β)/β` for the semicircle on `[−2, 2]`.
pub fn gue_mean_partition(d: usize, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(d as f64 * bessel_ratio(beta))
}

/// `[4 I₁(β)² / (β I₁(2β)) − 1/d]²`, the GUE estimate of the long-time `N̄`.
pub fn gue_brotoc_approx(d: usize, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    // With s(β) = I₁(2β)/β, I₁(β) = (β/2) s(β/2) and the bracket is s(β/2)²/s(β).
    let half = bessel_ratio(beta / 2.0);
    let ratio = half * half / bessel_ratio(beta);
    Ok((ratio - 1.0 / d as f64).powi(2))
}
