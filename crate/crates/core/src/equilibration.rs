//! Long-time averages of the connected correlator.
//!
//! Under the no-resonance condition the average reduces to Gram matrices of
//! reduced eigenstates. Models without that property are averaged on an
//! explicit time grid.

use std::collections::BTreeMap;

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::Bipartition;
use crate::brotoc::ConnectedEvaluator;
use crate::error::{BrotocError, Result};
use crate::linalg;
use crate::models::check_nrc;
use crate::spectral::SpectralDecomposition;
use crate::thermal::{check_beta, gue_brotoc_approx, ThermalContext};

/// Relative agreement required between the equivalent closed forms.
pub const FORM_AGREEMENT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibrationMethod {
    NrcClosedForm,
    TimeGrid,
    MeClosedForm,
    NrcPsClosedForm,
    GueBessel,
}

impl EquilibrationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NrcClosedForm => "nrc_closed_form",
            Self::TimeGrid => "time_grid",
            Self::MeClosedForm => "me_closed_form",
            Self::NrcPsClosedForm => "nrc_ps_closed_form",
            Self::GueBessel => "gue_bessel",
        }
    }
}

/// Which average `value` holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragedQuantity {
    /// `Ḡ^(r)`.
    Connected,
    /// `N̄ = G^(d) − Ḡ^(r)`.
    Brotoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibrationResult {
    pub value: f64,
    pub quantity: AveragedQuantity,
    pub method: EquilibrationMethod,
    pub beta: f64,
    /// False when an assumption behind the method was not met.
    pub reliable: bool,
    pub metadata: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl EquilibrationResult {
    fn new(value: f64, quantity: AveragedQuantity, method: EquilibrationMethod, beta: f64) -> Self {
        Self {
            value,
            quantity,
            method,
            beta,
            reliable: true,
            metadata: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }
}

/// Hilbert–Schmidt overlaps `R^χ_jk = ⟨ρ_j^χ, ρ_k^χ⟩` of reduced eigenstates.
#[derive(Clone, Debug)]
pub struct GramData {
    pub bipartition: Bipartition,
    pub energies: Vec<f64>,
    pub r_a: Mat<f64>,
    pub r_b: Mat<f64>,
}

impl GramData {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `max_k P(ρ_k^A)`.
    pub fn max_purity(&self) -> f64 {
        (0..self.dim()).map(|k| self.r_a[(k, k)]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Rows of `[Re vec ρ_j | Im vec ρ_j]`, so that `R = Y Yᵀ`.
fn reduced_rows(spectral: &SpectralDecomposition, bip: Bipartition) -> (Mat<f64>, Mat<f64>) {
    let (da, db) = (bip.dim_a(), bip.dim_b());
    let d = spectral.dim();
    match spectral.real_vectors() {
        Some(v) => {
            let mut ya = Mat::<f64>::zeros(d, da * da);
            let mut yb = Mat::<f64>::zeros(d, db * db);
            for j in 0..d {
                let col = v.col(j);
                let psi = Mat::from_fn(da, db, |a, b| col[a * db + b]);
                let ra = linalg::mul_real(psi.as_ref(), psi.transpose());
                let rb = linalg::mul_real(psi.transpose(), psi.as_ref());
                for (i, x) in (0..da).flat_map(|a| (0..da).map(move |c| (a, c))).enumerate() {
                    ya[(j, i)] = ra[x];
                }
                for (i, x) in (0..db).flat_map(|a| (0..db).map(move |c| (a, c))).enumerate() {
                    yb[(j, i)] = rb[x];
                }
            }
            (ya, yb)
        }
        None => {
            let mut ya = Mat::<f64>::zeros(d, 2 * da * da);
            let mut yb = Mat::<f64>::zeros(d, 2 * db * db);
            for j in 0..d {
                for (y, m, n) in [
                    (&mut ya, spectral.reduced_eigenstate(j, crate::Subsystem::A), da),
                    (&mut yb, spectral.reduced_eigenstate(j, crate::Subsystem::B), db),
                ] {
                    for a in 0..n {
                        for c in 0..n {
                            let z: c64 = m[(a, c)];
                            y[(j, a * n + c)] = z.re;
                            y[(j, n * n + a * n + c)] = z.im;
                        }
                    }
                }
            }
            (ya, yb)
        }
    }
}

pub fn gram_matrices(spectral: &SpectralDecomposition, bip: Bipartition) -> Result<GramData> {
    if bip.dim_total() != spectral.dim() {
        return Err(BrotocError::Dimension(format!(
            "bipartition of dimension {} for a spectrum of dimension {}",
            bip.dim_total(),
            spectral.dim()
        )));
    }
    let (ya, yb) = reduced_rows(spectral, bip);
    Ok(GramData {
        bipartition: bip,
        energies: spectral.energies().to_vec(),
        r_a: linalg::mul_real(ya.as_ref(), ya.transpose()),
        r_b: linalg::mul_real(yb.as_ref(), yb.transpose()),
    })
}

fn check_gram(thermal: &ThermalContext<'_>, gram: &GramData) -> Result<()> {
    if gram.dim() != thermal.dim() {
        return Err(BrotocError::Dimension(format!(
            "Gram data of dimension {} for a spectrum of dimension {}",
            gram.dim(),
            thermal.dim()
        )));
    }
    Ok(())
}

/// `C_jk = |R^A_jk|² + |R^B_jk|² − δ_jk |R^A_jk|²`.
fn c_entry(gram: &GramData, j: usize, k: usize) -> f64 {
    let a = gram.r_a[(j, k)];
    let b = gram.r_b[(j, k)];
    if j == k { b * b } else { a * a + b * b }
}

/// The three equivalent NRC expressions for `Ḡ^(r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NrcForms {
    pub direct: f64,
    pub rescaled_gram: f64,
    pub entropic: f64,
}

pub fn nrc_forms(thermal: &ThermalContext<'_>, gram: &GramData) -> Result<NrcForms> {
    check_gram(thermal, gram)?;
    let d = gram.dim();
    let df = d as f64;
    let w = thermal.half_weights();
    let z = thermal.z_shifted();

    let mut direct = 0.0;
    for j in 0..d {
        let mut row = 0.0;
        for k in 0..d {
            row += w[k] * c_entry(gram, j, k);
        }
        direct += w[j] * row;
    }
    let direct = direct / (df * z);

    let q: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let mut rescaled = 0.0;
    for r in [&gram.r_a, &gram.r_b] {
        let tilde = Mat::from_fn(d, d, |j, k| q[j] * q[k] * r[(j, k)]);
        let diag: f64 = (0..d).map(|j| tilde[(j, j)].powi(2)).sum();
        rescaled += linalg::frobenius_sq_real(tilde.as_ref()) - 0.5 * diag;
    }
    let rescaled_gram = rescaled / (df * z);

    let norm: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|x| x / norm).collect();
    let p_sq: f64 = p.iter().map(|x| x * x).sum();
    let mut quad = 0.0;
    for j in 0..d {
        for k in 0..d {
            quad += p[j] * c_entry(gram, j, k) * p[k];
        }
    }
    let entropic = quad / (df * p_sq);
    Ok(NrcForms { direct, rescaled_gram, entropic })
}

/// `Ḡ^(r)` under the no-resonance condition.
///
/// Fails if the three equivalent forms disagree; marks the result
/// unreliable when the spectrum has resonances.
pub fn nrc_longtime_average(thermal: &ThermalContext<'_>, gram: &GramData) -> Result<EquilibrationResult> {
    let forms = nrc_forms(thermal, gram)?;
    let scale = forms.direct.abs().max(f64::MIN_POSITIVE);
    let spread = (forms.direct - forms.rescaled_gram).abs().max((forms.direct - forms.entropic).abs());
    if spread > FORM_AGREEMENT_TOL * scale {
        return Err(BrotocError::numerical(
            format!(
                "NRC forms disagree: direct {}, rescaled {}, entropic {}",
                forms.direct, forms.rescaled_gram, forms.entropic
            ),
            spread,
        ));
    }
    let nrc = check_nrc(&gram.energies, None);
    let mut out = EquilibrationResult::new(
        forms.direct,
        AveragedQuantity::Connected,
        EquilibrationMethod::NrcClosedForm,
        thermal.beta(),
    );
    out.metadata.insert("rescaled_gram".into(), forms.rescaled_gram);
    out.metadata.insert("entropic".into(), forms.entropic);
    out.metadata.insert("nrc_violations".into(), nrc.violation_count as f64);
    if !nrc.holds {
        out.reliable = false;
        out.warnings.push(format!("spectrum has {} resonant pair sums", nrc.violation_count));
    }
    Ok(out)
}

/// `G^(d) = (1/d) ‖Σ_j w_j ρ_j^B‖² ‖Σ_k w_k ρ_k^A‖² / Z(β)²` with `w = e^{−βE/2}`.
pub fn disconnected_gibbs_form(thermal: &ThermalContext<'_>, gram: &GramData) -> Result<f64> {
    check_gram(thermal, gram)?;
    let w = thermal.half_weights();
    let quad = |r: &Mat<f64>| {
        let mut acc = 0.0;
        for j in 0..w.len() {
            for k in 0..w.len() {
                acc += w[j] * r[(j, k)] * w[k];
            }
        }
        acc
    };
    let z = thermal.z_shifted();
    Ok(quad(&gram.r_a) * quad(&gram.r_b) / (gram.dim() as f64 * z * z))
}

/// Uniform grid of `n_steps` points including both ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_min: f64, t_max: f64, n_steps: usize) -> Result<Self> {
        let g = Self { t_min, t_max, n_steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_min.is_finite() && self.t_max.is_finite() && self.t_min < self.t_max) {
            return Err(BrotocError::Domain(format!(
                "time window [{}, {}] is empty",
                self.t_min, self.t_max
            )));
        }
        if self.n_steps < 2 {
            return Err(BrotocError::Domain(format!("{} time steps, need at least 2", self.n_steps)));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let h = (self.t_max - self.t_min) / (self.n_steps - 1) as f64;
        (0..self.n_steps).map(|i| self.t_min + i as f64 * h).collect()
    }

    /// Grid with every interval halved; it contains all current points.
    pub fn refined(&self) -> Self {
        Self { n_steps: 2 * self.n_steps - 1, ..*self }
    }

    /// Points added by [`TimeGrid::refined`].
    fn midpoints(&self) -> Vec<f64> {
        let h = (self.t_max - self.t_min) / (self.n_steps - 1) as f64;
        (0..self.n_steps - 1).map(|i| self.t_min + (i as f64 + 0.5) * h).collect()
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { t_min: 10.0, t_max: 1000.0, n_steps: 10_000 }
    }
}

/// Stop refining once a doubling moves the mean by less than `rel_tol`.
/// At least one doubling is always made.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePolicy {
    pub rel_tol: f64,
    pub max_doublings: u32,
}

impl Default for ConvergencePolicy {
    fn default() -> Self {
        Self { rel_tol: 5e-3, max_doublings: 4 }
    }
}

fn sum_over(eval: &ConnectedEvaluator<'_>, ts: &[f64]) -> f64 {
    // Collected in order, then summed serially, so the result does not
    // depend on how the points were scheduled.
    let vals: Vec<f64> = ts.par_iter().map(|&t| eval.evaluate(t)).collect();
    vals.iter().sum()
}

/// Mean of `G^(r)_β(t)` over a uniform grid, refined until it converges.
pub fn time_grid_average(
    thermal: &ThermalContext<'_>,
    bip: Bipartition,
    grid: TimeGrid,
    policy: ConvergencePolicy,
) -> Result<EquilibrationResult> {
    grid.validate()?;
    let eval = ConnectedEvaluator::new(thermal, bip)?;
    let mut g = grid;
    let mut sum = sum_over(&eval, &g.points());
    let mut mean = sum / g.n_steps as f64;
    let mut prev = f64::NAN;
    let mut converged = false;
    for _ in 0..policy.max_doublings.max(1) {
        sum += sum_over(&eval, &g.midpoints());
        g = g.refined();
        prev = mean;
        mean = sum / g.n_steps as f64;
        if (mean - prev).abs() <= policy.rel_tol * mean.abs() {
            converged = true;
            break;
        }
    }
    let mut out = EquilibrationResult::new(mean, AveragedQuantity::Connected, EquilibrationMethod::TimeGrid, thermal.beta());
    out.metadata.insert("t_min".into(), g.t_min);
    out.metadata.insert("t_max".into(), g.t_max);
    out.metadata.insert("n_steps".into(), g.n_steps as f64);
    out.metadata.insert("previous_value".into(), prev);
    out.metadata.insert("converged".into(), if converged { 1.0 } else { 0.0 });
    if !converged {
        out.reliable = false;
        out.warnings.push(format!(
            "time average not converged at {} steps: {prev} then {mean}",
            g.n_steps
        ));
    }
    Ok(out)
}

/// Maximally entangled eigenbasis: `Ḡ^(r)`, `G^(d)` and `N̄` from `Z` alone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeClosedForm {
    pub g_reg_bar: f64,
    pub g_disc: f64,
    pub n_bar: f64,
    /// `(1/d²)(1 + S_lin)/(1 − S_lin)` with `S_lin` the linear entropy of `p(β/2)`.
    pub g_reg_bar_entropic: f64,
}

pub fn me_closed_form(thermal: &ThermalContext<'_>) -> Result<MeClosedForm> {
    let d = thermal.dim();
    let root = (d as f64).sqrt().round() as usize;
    if root * root != d {
        return Err(BrotocError::Domain(format!("dimension {d} is not a perfect square")));
    }
    let d2 = (d * d) as f64;
    let r = thermal.half_ratio();
    let s_lin = 1.0 - 1.0 / r;
    Ok(MeClosedForm {
        g_reg_bar: (2.0 * r - 1.0) / d2,
        g_disc: r * r / d2,
        n_bar: (r - 1.0).powi(2) / d2,
        g_reg_bar_entropic: (1.0 + s_lin) / (1.0 - s_lin) / d2,
    })
}

/// Product eigenbasis with energies `E_jk` on a `d_A × d_B` grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NrcPsClosedForm {
    pub g_reg_bar: f64,
    /// Same average through the `Θ` sums.
    pub g_reg_bar_theta: f64,
    pub g_disc: f64,
}

pub fn nrc_ps_closed_form(grid: MatRef<'_, f64>, beta: f64) -> Result<NrcPsClosedForm> {
    check_beta(beta)?;
    let (da, db) = (grid.nrows(), grid.ncols());
    if da == 0 || db == 0 {
        return Err(BrotocError::Dimension("empty energy grid".into()));
    }
    let mut e0 = f64::INFINITY;
    for j in 0..db {
        for i in 0..da {
            let e = grid[(i, j)];
            if !e.is_finite() {
                return Err(BrotocError::Validation(format!("non-finite energy {e}")));
            }
            e0 = e0.min(e);
        }
    }
    let d = (da * db) as f64;
    // Weights e^{−β(E−E₀)/2}; every form below is invariant under the shift.
    let w = Mat::from_fn(da, db, |i, j| (-0.5 * beta * (grid[(i, j)] - e0)).exp());
    let z_half: f64 = (0..da).flat_map(|i| (0..db).map(move |j| (i, j))).map(|x| w[x]).sum();
    let z: f64 = (0..da).flat_map(|i| (0..db).map(move |j| (i, j))).map(|x| w[x] * w[x]).sum();

    let theta_a: Vec<f64> = (0..da).map(|i| (0..db).map(|j| w[(i, j)]).sum::<f64>().powi(2)).collect();
    let theta_b: Vec<f64> = (0..db).map(|j| (0..da).map(|i| w[(i, j)]).sum::<f64>().powi(2)).collect();
    let sum_a: f64 = theta_a.iter().sum();
    let sum_b: f64 = theta_b.iter().sum();
    let g_reg_bar_theta = (sum_a + sum_b - z) / (d * z);

    let p_sq = z / (z_half * z_half);
    let pa_sq = sum_a / (z_half * z_half);
    let pb_sq = sum_b / (z_half * z_half);
    let g_reg_bar = ((pa_sq + pb_sq) / p_sq - 1.0) / d;

    Ok(NrcPsClosedForm { g_reg_bar, g_reg_bar_theta, g_disc: sum_a * sum_b / (d * z * z) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntanglementBoundReport {
    /// `max_k P(ρ_k^A) − 1/√d`.
    pub epsilon: f64,
    /// `(Z(β/2)²/(d Z(β))) (6ε/√d + 3ε²)`.
    pub bound: f64,
    /// `|Ḡ^(r)_ME − Ḡ^(r)_NRC|`.
    pub lhs: f64,
    pub holds: bool,
}

/// Distance of the NRC average from the maximally entangled value,
/// bounded through the largest eigenstate purity.
pub fn eigenstate_entanglement_bound(thermal: &ThermalContext<'_>, gram: &GramData) -> Result<EntanglementBoundReport> {
    check_gram(thermal, gram)?;
    let bip = gram.bipartition;
    if !bip.is_symmetric() {
        return Err(BrotocError::Domain(format!(
            "bound needs d_A = d_B, got {}x{}",
            bip.dim_a(),
            bip.dim_b()
        )));
    }
    let d = gram.dim() as f64;
    let sqrt_d = d.sqrt();
    let epsilon = (gram.max_purity() - 1.0 / sqrt_d).max(0.0);
    let r = thermal.half_ratio();
    let bound = r / d * (6.0 * epsilon / sqrt_d + 3.0 * epsilon * epsilon);
    let nrc = nrc_forms(thermal, gram)?.direct;
    let me = me_closed_form(thermal)?.g_reg_bar;
    let lhs = (me - nrc).abs();
    Ok(EntanglementBoundReport { epsilon, bound, lhs, holds: lhs <= bound + 1e-12 })
}

/// Same comparison for any bipartition, with
/// `ε = max_χ max_k (P(ρ_k^χ) − 1/d_χ)` and bound
/// `(Z(β/2)²/(d Z(β))) (2|1/d − f(d_A)| + |1/d − f(d_B)|)`,
/// `f(n) = (1/n + ε)²`. Diagnostic only; reduces to the symmetric bound when `d_A = d_B`.
pub fn eigenstate_entanglement_bound_general(
    thermal: &ThermalContext<'_>,
    gram: &GramData,
) -> Result<EntanglementBoundReport> {
    check_gram(thermal, gram)?;
    let bip = gram.bipartition;
    let (da, db) = (bip.dim_a() as f64, bip.dim_b() as f64);
    let d = gram.dim() as f64;
    let max_b = (0..gram.dim()).map(|k| gram.r_b[(k, k)]).fold(f64::NEG_INFINITY, f64::max);
    let epsilon = (gram.max_purity() - 1.0 / da).max(max_b - 1.0 / db).max(0.0);
    let f = |n: f64| (1.0 / n + epsilon).powi(2);
    let r = thermal.half_ratio();
    let bound = r / d * (2.0 * (1.0 / d - f(da)).abs() + (1.0 / d - f(db)).abs());
    let nrc = nrc_forms(thermal, gram)?.direct;
    // Maximally entangled reference value, which needs no square root of d here.
    let me = (2.0 * r - 1.0) / (d * d);
    let lhs = (me - nrc).abs();
    Ok(EntanglementBoundReport { epsilon, bound, lhs, holds: lhs <= bound + 1e-12 })
}

/// `G_β = 1 − 1/d_A²` for a maximally entangling evolution; independent of `β`.
pub fn unregularized_me_value(bip: Bipartition) -> Result<f64> {
    if !bip.is_symmetric() {
        return Err(BrotocError::Domain(format!(
            "needs d_A = d_B, got {}x{}",
            bip.dim_a(),
            bip.dim_b()
        )));
    }
    let da = bip.dim_a() as f64;
    Ok(1.0 - 1.0 / (da * da))
}

/// Ensemble estimate of `N̄` for GUE Hamiltonians of dimension `d`.
pub fn gue_bessel_estimate(d: usize, beta: f64) -> Result<EquilibrationResult> {
    let v = gue_brotoc_approx(d, beta)?;
    Ok(EquilibrationResult::new(v, AveragedQuantity::Brotoc, EquilibrationMethod::GueBessel, beta))
}

/// NRC average restricted to the lowest `keep` eigenstates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedAverage {
    pub value: f64,
    pub kept: usize,
    /// Gibbs weight `Σ_{j ≥ keep} p_j(β)` of the discarded levels.
    pub tail_weight: f64,
}

pub fn truncated_nrc_average(thermal: &ThermalContext<'_>, gram: &GramData, keep: usize) -> Result<TruncatedAverage> {
    check_gram(thermal, gram)?;
    let d = gram.dim();
    if keep == 0 || keep > d {
        return Err(BrotocError::Domain(format!("cannot keep {keep} of {d} levels")));
    }
    let w = thermal.half_weights();
    let z_kept: f64 = w[..keep].iter().map(|x| x * x).sum();
    let mut acc = 0.0;
    for j in 0..keep {
        for k in 0..keep {
            acc += w[j] * w[k] * c_entry(gram, j, k);
        }
    }
    let tail_weight: f64 = thermal.gibbs_weights()[keep..].iter().sum();
    Ok(TruncatedAverage { value: acc / (d as f64 * z_kept), kept: keep, tail_weight })
}
