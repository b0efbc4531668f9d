//! Closed-form activity estimator and per-device thresholding.
//!
//! The stacked preamble model is `y~ = Gamma * gamma + w~` with
//! `Gamma = (I_tau ⊗ G) D`. The least-squares estimate
//! `gamma^ = (Gamma^H Gamma)^-1 Gamma^H y~` is computed without ever forming
//! the `M*tau_p x K` matrix `Gamma`:
//!
//! - `[Gamma^H Gamma]_{kl} = (g_k^H g_l) * (sum_t conj(s_kt) s_lt)`, i.e. the
//!   entrywise product of the channel Gram and the pilot Gram;
//! - `[Gamma^H y~]_k = sum_t conj(s_kt) * (g_k^H y_t)`.
//!
//! One Hermitian Cholesky factorization per channel realization then serves
//! every threshold of a sweep.

use std::sync::{Arc, OnceLock};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt;
use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};

use crate::channel::ChannelState;
use crate::pilots::{hermitize, pilot_gram, PilotBook};
use crate::signal::StackedSignal;
use crate::{c64, Error, Result};

/// Relative diagonal loading applied when the first factorization fails.
pub const REGULARIZATION_SCALE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Factorization {
    /// Lower Cholesky factor of the (possibly loaded) system Gram.
    l: Mat<c64>,
    /// Diagonal loading that was added, zero on the first-try path.
    pub loading: f64,
}

impl Factorization {
    pub fn lower(&self) -> &Mat<c64> {
        &self.l
    }

    pub fn solve(&self, rhs: &[c64]) -> Vec<c64> {
        let n = self.l.nrows();
        let mut x = Mat::<c64>::from_fn(n, 1, |i, _| rhs[i]);
        let mut stack = MemBuffer::new(llt::solve::solve_in_place_scratch::<c64>(n, 1, Par::Seq));
        llt::solve::solve_in_place(self.l.as_ref(), x.as_mut(), Par::Seq, MemStack::new(&mut stack));
        x.col(0).iter().copied().collect()
    }
}

fn cholesky(a: &Mat<c64>) -> std::result::Result<Mat<c64>, usize> {
    let n = a.nrows();
    let mut l = a.clone();
    let mut stack = MemBuffer::new(llt::factor::cholesky_in_place_scratch::<c64>(
        n,
        Par::Seq,
        Default::default(),
    ));
    match llt::factor::cholesky_in_place(
        l.as_mut(),
        Default::default(),
        Par::Seq,
        MemStack::new(&mut stack),
        Default::default(),
    ) {
        Ok(_) => {
            for j in 0..n {
                for i in 0..j {
                    l[(i, j)] = c64::new(0.0, 0.0);
                }
            }
            Ok(l)
        }
        Err(llt::factor::LltError::NonPositivePivot { index }) => Err(index),
    }
}

/// Channel Gram `G^H G`, exactly Hermitian.
pub fn channel_gram(channel: &ChannelState) -> Mat<c64> {
    let g = channel.g();
    let k = g.ncols();
    let mut out = Mat::<c64>::zeros(k, k);
    matmul(
        out.as_mut(),
        Accum::Replace,
        g.adjoint(),
        g,
        c64::new(1.0, 0.0),
        Par::Seq,
    );
    hermitize(&mut out);
    out
}

/// Grams and the lazily computed factorization for one channel realization.
#[derive(Debug)]
pub struct DetectorWorkspace {
    channel_gram: Mat<c64>,
    pilot_gram: Arc<Mat<c64>>,
    system_gram: Mat<c64>,
    factor: OnceLock<Result<Factorization>>,
}

impl DetectorWorkspace {
    pub fn build(channel: &ChannelState, pilots: &PilotBook) -> Result<Self> {
        Self::build_with_pilot_gram(channel, pilots, Arc::new(pilot_gram(pilots)))
    }

    /// Reuses a precomputed pilot Gram (pilots are fixed across trials).
    pub fn build_with_pilot_gram(
        channel: &ChannelState,
        pilots: &PilotBook,
        pilot_gram: Arc<Mat<c64>>,
    ) -> Result<Self> {
        let (m, k, tau_p) = (channel.n_antennas(), channel.n_devices(), pilots.tau_p());
        if pilots.n_devices() != k {
            return Err(Error::invalid(format!(
                "channel has {k} devices but the pilot book has {}",
                pilots.n_devices()
            )));
        }
        if pilot_gram.nrows() != k || pilot_gram.ncols() != k {
            return Err(Error::invalid("pilot Gram does not match the device count"));
        }
        if m * tau_p < k {
            return Err(Error::Underdetermined {
                equations: m * tau_p,
                unknowns: k,
            });
        }
        let channel_gram = channel_gram(channel);
        let mut system_gram = Mat::<c64>::from_fn(k, k, |i, j| channel_gram[(i, j)] * pilot_gram[(i, j)]);
        hermitize(&mut system_gram);
        Ok(Self {
            channel_gram,
            pilot_gram,
            system_gram,
            factor: OnceLock::new(),
        })
    }

    pub fn n_devices(&self) -> usize {
        self.system_gram.nrows()
    }

    pub fn channel_gram(&self) -> &Mat<c64> {
        &self.channel_gram
    }

    pub fn pilot_gram(&self) -> &Mat<c64> {
        &self.pilot_gram
    }

    /// `Gamma^H Gamma`.
    pub fn system_gram(&self) -> &Mat<c64> {
        &self.system_gram
    }

    /// Cholesky factor of the system Gram, computed on first use.
    ///
    /// On a non-positive pivot the Gram is loaded with
    /// `REGULARIZATION_SCALE * trace / K` on the diagonal and factored once more.
    pub fn factorization(&self) -> Result<&Factorization> {
        self.factor
            .get_or_init(|| {
                let gram = &self.system_gram;
                match cholesky(gram) {
                    Ok(l) => Ok(Factorization { l, loading: 0.0 }),
                    Err(pivot) => {
                        let k = gram.nrows();
                        let trace: f64 = (0..k).map(|i| gram[(i, i)].re).sum();
                        let loading = REGULARIZATION_SCALE * trace / k as f64;
                        log::warn!("system Gram not positive definite at pivot {pivot}; retrying with diagonal loading {loading:e}");
                        let mut loaded = gram.clone();
                        for i in 0..k {
                            loaded[(i, i)].re += loading;
                        }
                        cholesky(&loaded)
                            .map(|l| Factorization { l, loading })
                            .map_err(|pivot| Error::Singular { pivot })
                    }
                }
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Full least-squares estimate of the activity coefficients.
    pub fn estimate_gamma(&self, channel: &ChannelState, pilots: &PilotBook, y: &StackedSignal) -> Result<Vec<c64>> {
        let rhs = structured_rhs(channel, pilots, y)?;
        if rhs.len() != self.n_devices() {
            return Err(Error::invalid("workspace was built for a different device count"));
        }
        Ok(self.factorization()?.solve(&rhs))
    }

    /// Diagonal approximation of the Gram: no cross-device solve.
    pub fn estimate_gamma_diagonal(
        &self,
        channel: &ChannelState,
        pilots: &PilotBook,
        y: &StackedSignal,
    ) -> Result<Vec<c64>> {
        let rhs = structured_rhs(channel, pilots, y)?;
        if rhs.len() != self.n_devices() {
            return Err(Error::invalid("workspace was built for a different device count"));
        }
        divide_by_diagonal(&rhs, (0..rhs.len()).map(|k| self.system_gram[(k, k)].re))
    }
}

fn divide_by_diagonal(rhs: &[c64], diag: impl Iterator<Item = f64>) -> Result<Vec<c64>> {
    rhs.iter()
        .zip(diag)
        .enumerate()
        .map(|(k, (r, d))| {
            if d > 0.0 {
                Ok(r / d)
            } else {
                Err(Error::InvalidChannel(format!("device {k} has a zero channel or pilot")))
            }
        })
        .collect()
}

/// `Gamma^H y~`, accumulated symbol by symbol as `sum_t conj(s_kt) g_k^H y_t`.
pub fn structured_rhs(channel: &ChannelState, pilots: &PilotBook, y: &StackedSignal) -> Result<Vec<c64>> {
    let (m, k, tau_p) = (channel.n_antennas(), channel.n_devices(), pilots.tau_p());
    if pilots.n_devices() != k {
        return Err(Error::invalid("pilot book and channel disagree on the device count"));
    }
    if y.n_antennas() != m || y.tau_p() != tau_p {
        return Err(Error::invalid(format!(
            "received signal is {}x{} (antennas x symbols), expected {m}x{tau_p}",
            y.n_antennas(),
            y.tau_p()
        )));
    }
    // Z = G^H Y, K x tau_p
    let mut z = Mat::<c64>::zeros(k, tau_p);
    matmul(
        z.as_mut(),
        Accum::Replace,
        channel.g().adjoint(),
        y.as_matrix(),
        c64::new(1.0, 0.0),
        Par::Seq,
    );
    let s = pilots.matrix();
    Ok((0..k)
        .map(|i| (0..tau_p).map(|t| s[(i, t)].conj() * z[(i, t)]).sum())
        .collect())
}

/// Matched-filter baseline: each device's correlation output normalized by
/// its own energy `||g_k||^2 ||s_k||^2`, ignoring cross-device leakage.
///
/// Numerically the same as [`DetectorWorkspace::estimate_gamma_diagonal`],
/// but needs no Gram assembly.
pub fn matched_filter_baseline(channel: &ChannelState, pilots: &PilotBook, y: &StackedSignal) -> Result<Vec<c64>> {
    let rhs = structured_rhs(channel, pilots, y)?;
    divide_by_diagonal(
        &rhs,
        (0..rhs.len()).map(|k| channel.column_norm2(k) * pilots.row_norm2(k)),
    )
}

/// Activity threshold `v / sqrt(SNR_k)`.
pub fn threshold_for(snr_k: f64, v: f64) -> Result<f64> {
    if !(snr_k > 0.0) {
        return Err(Error::invalid(format!("SNR must be positive, got {snr_k}")));
    }
    if !(v > 0.0) {
        return Err(Error::invalid(format!("threshold scale must be positive, got {v}")));
    }
    Ok(v / snr_k.sqrt())
}

/// Device `k` is declared active iff `|gamma_hat_k| > threshold_k` (strict).
pub fn detect(gamma_hat: &[c64], thresholds: &[f64]) -> Vec<bool> {
    assert_eq!(
        gamma_hat.len(),
        thresholds.len(),
        "estimate and threshold lengths differ"
    );
    gamma_hat.iter().zip(thresholds).map(|(g, &th)| g.norm() > th).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub gamma_hat: Vec<c64>,
    pub thresholds: Vec<f64>,
    pub detected: Vec<bool>,
    pub v: f64,
}

impl DetectionResult {
    pub fn new(gamma_hat: Vec<c64>, snr: &[f64], v: f64) -> Result<Self> {
        if snr.len() != gamma_hat.len() {
            return Err(Error::invalid("one SNR per device is required"));
        }
        let thresholds = snr.iter().map(|&s| threshold_for(s, v)).collect::<Result<Vec<_>>>()?;
        let detected = detect(&gamma_hat, &thresholds);
        Ok(Self {
            gamma_hat,
            thresholds,
            detected,
            v,
        })
    }

    pub fn detected_indices(&self) -> Vec<usize> {
        self.detected
            .iter()
            .enumerate()
            .filter_map(|(k, &d)| d.then_some(k))
            .collect()
    }
}
