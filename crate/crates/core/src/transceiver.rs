//! SVD precoding with power scaling, MMSE equalization, per-stream SINR and
//! symbol detection on the virtual channel.

use crate::numerics::{svd, ComplexMatrix, NumericsError, C64};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransceiverError {
    #[error("zero channel matrix")]
    ZeroChannel,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Everything the receiver needs for one link: precoder, effective channel,
/// MMSE filter and the interference/noise statistics they were built from.
#[derive(Debug)]
pub struct LinkState {
    pub h_n: ComplexMatrix,
    pub w: ComplexMatrix,
    pub h_eq: ComplexMatrix,
    pub f: ComplexMatrix,
    pub phi: ComplexMatrix,
    pub noise_power: f64,
    pub tx_power: f64,
}

impl LinkState {
    /// Build precoder, effective channel and MMSE filter for a channel with
    /// the given interference covariance and per-branch noise power.
    pub fn build(
        h_n: ComplexMatrix,
        phi: ComplexMatrix,
        noise_power: f64,
        tx_power: f64,
    ) -> Result<Self, TransceiverError> {
        debug_assert!(phi.is_hermitian(1e-12), "interference covariance must be Hermitian");
        let w = precoder(&h_n, tx_power)?;
        let h_eq = h_n.matmul(&w);
        let f = mmse_filter(&h_eq, &phi, noise_power)?;
        Ok(Self {
            h_n,
            w,
            h_eq,
            f,
            phi,
            noise_power,
            tx_power,
        })
    }

    pub fn stream_sinrs(&self) -> Vec<f64> {
        stream_sinr(&self.f, &self.h_eq, &self.phi, self.noise_power)
    }
}

/// Power-scaled SVD precoder: the first L right singular vectors of the
/// channel, scaled so the precoder's total power equals `tx_power`.
pub fn precoder(h_n: &ComplexMatrix, tx_power: f64) -> Result<ComplexMatrix, TransceiverError> {
    assert!(tx_power > 0.0, "transmit power must be positive");
    if h_n.frobenius_norm() == 0.0 {
        return Err(TransceiverError::ZeroChannel);
    }
    let l = h_n.rows().min(h_n.cols());
    let dec = svd(h_n)?;
    let v_l = ComplexMatrix::from_fn(h_n.cols(), l, |i, j| dec.v[(i, j)]);
    // Columns are orthonormal, so ||V_L||_F = sqrt(L) and rho = 1/sqrt(L).
    let rho = 1.0 / v_l.frobenius_norm();
    Ok(v_l.scaled_re(tx_power.sqrt() * rho))
}

/// MMSE equalizer F = H_eq^H (H_eq H_eq^H + Phi + N0 I)^{-1}.
pub fn mmse_filter(
    h_eq: &ComplexMatrix,
    phi: &ComplexMatrix,
    noise_power: f64,
) -> Result<ComplexMatrix, TransceiverError> {
    let n_rx = h_eq.rows();
    if phi.rows() != n_rx || phi.cols() != n_rx {
        return Err(TransceiverError::DimensionMismatch(format!(
            "phi is {}x{}, expected {n_rx}x{n_rx}",
            phi.rows(),
            phi.cols()
        )));
    }
    let mut gram = h_eq.matmul(&h_eq.hermitian()).add(phi);
    for i in 0..n_rx {
        gram[(i, i)] += C64::new(noise_power, 0.0);
    }
    let inv = gram.inverse().map_err(TransceiverError::from)?;
    Ok(h_eq.hermitian().matmul(&inv))
}

/// Per-stream SINR for filter rows f_l against the columns of the effective
/// channel: desired signal over residual inter-stream leakage, filtered
/// inter-cell interference, and filtered noise.
pub fn stream_sinr(
    f: &ComplexMatrix,
    h_eq: &ComplexMatrix,
    phi: &ComplexMatrix,
    noise_power: f64,
) -> Vec<f64> {
    let l_streams = f.rows();
    let n_rx = h_eq.rows();
    let mut out = Vec::with_capacity(l_streams);
    for l in 0..l_streams {
        let fl: Vec<C64> = (0..f.cols()).map(|j| f[(l, j)]).collect();
        let dot = |col: usize| -> C64 {
            (0..n_rx).map(|i| fl[i] * h_eq[(i, col)]).sum()
        };
        let signal = dot(l).norm_sqr();
        let cross: f64 = (0..h_eq.cols())
            .filter(|&k| k != l)
            .map(|k| dot(k).norm_sqr())
            .sum();
        let mut icell = 0.0;
        for a in 0..n_rx {
            for b in 0..n_rx {
                icell += (fl[a] * phi[(a, b)] * fl[b].conj()).re;
            }
        }
        let noise = noise_power * fl.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let denom = cross + icell + noise;
        out.push(if denom > 0.0 { signal / denom } else { 0.0 });
    }
    out
}

/// Apply the MMSE filter to the projected noiseless receive stack:
/// s_hat = F (U_trunc^H (H_chain s)).
///
/// `h_chain` is the composite transmit chain seen from the antenna inputs
/// (usually signature matrix times precoder), `s` the transmitted symbol
/// vector for one instant.
pub fn detect(
    f: &ComplexMatrix,
    u_trunc: &ComplexMatrix,
    h_chain: &ComplexMatrix,
    s: &[C64],
) -> Result<Vec<C64>, TransceiverError> {
    if h_chain.cols() != s.len() {
        return Err(TransceiverError::DimensionMismatch(format!(
            "chain has {} inputs, symbol vector has {}",
            h_chain.cols(),
            s.len()
        )));
    }
    if u_trunc.rows() != h_chain.rows() || f.cols() != u_trunc.cols() {
        return Err(TransceiverError::DimensionMismatch(
            "projection dimensions do not line up".into(),
        ));
    }
    let rx: Vec<C64> = (0..h_chain.rows())
        .map(|i| (0..s.len()).map(|j| h_chain[(i, j)] * s[j]).sum())
        .collect();
    let proj: Vec<C64> = (0..u_trunc.cols())
        .map(|j| (0..u_trunc.rows()).map(|i| u_trunc[(i, j)].conj() * rx[i]).sum())
        .collect();
    Ok((0..f.rows())
        .map(|l| (0..f.cols()).map(|j| f[(l, j)] * proj[j]).sum())
        .collect())
}

/// Shannon throughput in bit/s: bandwidth times the sum of per-stream
/// spectral efficiencies, each optionally clamped at `se_cap` bit/s/Hz.
pub fn throughput_capped(sinrs: &[f64], bandwidth_hz: f64, se_cap: Option<f64>) -> f64 {
    let sum: f64 = sinrs
        .iter()
        .map(|&s| {
            let se = (1.0 + s.max(0.0)).log2();
            match se_cap {
                Some(cap) => se.min(cap),
                None => se,
            }
        })
        .sum();
    bandwidth_hz * sum
}

/// Uncapped Shannon throughput in bit/s.
pub fn throughput(sinrs: &[f64], bandwidth_hz: f64) -> f64 {
    throughput_capped(sinrs, bandwidth_hz, None)
}
