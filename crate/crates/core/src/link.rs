//! Receiver metrics for a precoded link `y = √(1/PL)·F W x + n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_solve, ComplexMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    /// Post-ZF SNR per layer (linear). `None` when the effective channel is
    /// rank deficient and ZF is undefined.
    pub per_layer_snr: Option<Vec<f64>>,
    pub rate_bps_hz: f64,
    pub avg_snr: f64,
}

fn effective_gram(f: &ComplexMatrix, w: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(f.matmul(w)?.gram())
}

/// `ρ̄ = P_T / (σ² N_T PL)`.
pub fn average_snr(p_t: f64, sigma2: f64, n_t: usize, pl_ris: f64) -> Result<f64> {
    let ok = |v: f64| v.is_finite() && v > 0.0;
    if !ok(p_t) || !ok(sigma2) || n_t == 0 || !ok(pl_ris) {
        return Err(Error::Domain(format!(
            "average SNR needs positive inputs (P_T={p_t}, σ²={sigma2}, N_T={n_t}, PL={pl_ris})"
        )));
    }
    Ok(p_t / (sigma2 * n_t as f64 * pl_ris))
}

/// Zero-forcing equalizer `√PL · (Wᴴ Fᴴ F W)⁻¹ Wᴴ Fᴴ`.
pub fn zf_matrix(f: &ComplexMatrix, w: &ComplexMatrix, pl_ris: f64) -> Result<ComplexMatrix> {
    if !(pl_ris.is_finite() && pl_ris > 0.0) {
        return Err(Error::Domain(format!("path loss must be positive, got {pl_ris}")));
    }
    let fw = f.matmul(w)?;
    let gram = fw.gram();
    let solved = hermitian_solve(&gram, &fw.hermitian())?;
    Ok(solved.scale_real(pl_ris.sqrt()))
}

/// `ρ_r = ρ̄ / [(Wᴴ Fᴴ F W)⁻¹]_rr`.
pub fn per_layer_snr(f: &ComplexMatrix, w: &ComplexMatrix, avg_snr: f64) -> Result<Vec<f64>> {
    check_snr(avg_snr)?;
    let gram = effective_gram(f, w)?;
    let inv = hermitian_solve(&gram, &ComplexMatrix::identity(gram.rows()))?;
    Ok(inv.diagonal().iter().map(|d| avg_snr / d.re).collect())
}

/// `C = Σ_r log2(1 + ρ̄ [Wᴴ Fᴴ F W]_rr)` in bit/s/Hz.
pub fn achievable_rate(f: &ComplexMatrix, w: &ComplexMatrix, avg_snr: f64) -> Result<f64> {
    check_snr(avg_snr)?;
    let gram = effective_gram(f, w)?;
    Ok(rate_from_gram_diagonal(&gram, avg_snr))
}

pub(crate) fn rate_from_gram_diagonal(gram: &ComplexMatrix, avg_snr: f64) -> f64 {
    gram.diagonal().iter().map(|d| (1.0 + avg_snr * d.re.max(0.0)).log2()).sum()
}

fn check_snr(avg_snr: f64) -> Result<()> {
    if !(avg_snr.is_finite() && avg_snr >= 0.0) {
        return Err(Error::Domain(format!("average SNR must be finite and non-negative, got {avg_snr}")));
    }
    Ok(())
}

/// Rate plus per-layer ZF SNRs where defined.
pub fn link_metrics(f: &ComplexMatrix, w: &ComplexMatrix, avg_snr: f64) -> Result<LinkMetrics> {
    let rate_bps_hz = achievable_rate(f, w, avg_snr)?;
    let per_layer_snr = match per_layer_snr(f, w, avg_snr) {
        Ok(s) => Some(s),
        Err(Error::RankDeficient { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(LinkMetrics { per_layer_snr, rate_bps_hz, avg_snr })
}
