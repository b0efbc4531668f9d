//! Activity draws and the stacked preamble observation.

use std::f64::consts::TAU;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use rand::Rng;

use crate::channel::{cn_sample, ChannelState};
use crate::pilots::PilotBook;
use crate::{c64, Error, Result};

pub const DEFAULT_EPSILON_A: f64 = 0.01;
pub const DEFAULT_RHO_W: f64 = 1e-3;

/// One activity pattern with powers and phase offsets.
///
/// `gamma[k] = sqrt(rho[k]) * a[k] * exp(j * phase[k])`, and exactly zero for
/// inactive devices.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityRealization {
    active: Vec<bool>,
    rho: Vec<f64>,
    phase: Vec<f64>,
    gamma: Vec<c64>,
}

impl ActivityRealization {
    pub fn from_parts(active: Vec<bool>, rho: Vec<f64>, phase: Vec<f64>) -> Result<Self> {
        let k = active.len();
        if rho.len() != k || phase.len() != k {
            return Err(Error::invalid(
                "activity, power and phase vectors must share one length",
            ));
        }
        if rho.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid("transmit powers must be non-negative"));
        }
        let gamma = active
            .iter()
            .zip(&rho)
            .zip(&phase)
            .map(|((&a, &p), &phi)| {
                if a {
                    c64::from_polar(p.sqrt(), phi)
                } else {
                    c64::new(0.0, 0.0)
                }
            })
            .collect();
        Ok(Self {
            active,
            rho,
            phase,
            gamma,
        })
    }

    pub fn n_devices(&self) -> usize {
        self.active.len()
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn gamma(&self) -> &[c64] {
        &self.gamma
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(k, &a)| a.then_some(k))
            .collect()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Bernoulli(`epsilon_a`) activity and U[0, 2pi) phases for `k` devices,
/// all at power `rho`.
///
/// All `k` activity bits are drawn before the `k` phases, so the pattern for
/// a given stream does not depend on `rho`.
pub fn draw_activity<R: Rng + ?Sized>(k: usize, epsilon_a: f64, rho: f64, rng: &mut R) -> Result<ActivityRealization> {
    if !(0.0..=1.0).contains(&epsilon_a) {
        return Err(Error::invalid(format!(
            "activity probability {epsilon_a} outside [0, 1]"
        )));
    }
    let active: Vec<bool> = (0..k).map(|_| rng.random::<f64>() < epsilon_a).collect();
    let phase: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * TAU).collect();
    ActivityRealization::from_parts(active, vec![rho; k], phase)
}

/// Concatenation `y_0 .. y_{tau_p - 1}`, each of length `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSignal {
    y: Vec<c64>,
    n_antennas: usize,
    sigma2: f64,
}

impl StackedSignal {
    pub fn new(y: Vec<c64>, n_antennas: usize, sigma2: f64) -> Result<Self> {
        if n_antennas == 0 || !y.len().is_multiple_of(n_antennas) {
            return Err(Error::invalid(
                "stacked signal length must be a multiple of the antenna count",
            ));
        }
        Ok(Self { y, n_antennas, sigma2 })
    }

    pub fn as_slice(&self) -> &[c64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn tau_p(&self) -> usize {
        self.y.len() / self.n_antennas
    }

    /// Symbol `t` observation `y_t`.
    pub fn symbol(&self, t: usize) -> &[c64] {
        &self.y[t * self.n_antennas..(t + 1) * self.n_antennas]
    }

    /// The observations as an `M x tau_p` matrix, column `t` = `y_t`.
    pub fn as_matrix(&self) -> MatRef<'_, c64> {
        MatRef::from_column_major_slice(&self.y, self.n_antennas, self.tau_p())
    }
}

/// `len` i.i.d. CN(0, sigma2) samples.
pub fn draw_noise<R: Rng + ?Sized>(len: usize, sigma2: f64, rng: &mut R) -> Vec<c64> {
    (0..len).map(|_| cn_sample(rng, sigma2)).collect()
}

/// `y_t = G diag(s_{:,t}) gamma + w_t` for every preamble symbol.
///
/// Computed as one `M x K` by `K x tau_p` product `G (diag(gamma) S)`; the
/// `M*tau_p x K` stacked system matrix is never formed. Noise is drawn in
/// stacking order (symbol-major, antenna-minor).
pub fn synthesize<R: Rng + ?Sized>(
    channel: &ChannelState,
    pilots: &PilotBook,
    activity: &ActivityRealization,
    sigma2: f64,
    rng: &mut R,
) -> Result<StackedSignal> {
    if !(sigma2 >= 0.0) {
        return Err(Error::invalid("noise power must be non-negative"));
    }
    let mut out = synthesize_noiseless(channel, pilots, activity)?;
    let noise = draw_noise(out.len(), sigma2, rng);
    for (y, w) in out.y.iter_mut().zip(noise) {
        *y += w;
    }
    out.sigma2 = sigma2;
    Ok(out)
}

pub fn synthesize_noiseless(
    channel: &ChannelState,
    pilots: &PilotBook,
    activity: &ActivityRealization,
) -> Result<StackedSignal> {
    let (m, k) = (channel.n_antennas(), channel.n_devices());
    if pilots.n_devices() != k || activity.n_devices() != k {
        return Err(Error::invalid(format!(
            "dimension mismatch: channel has {k} devices, pilots {}, activity {}",
            pilots.n_devices(),
            activity.n_devices()
        )));
    }
    let tau_p = pilots.tau_p();
    let s = pilots.matrix();
    let gamma = activity.gamma();
    let weighted = Mat::<c64>::from_fn(k, tau_p, |i, t| s[(i, t)] * gamma[i]);
    let mut y = Mat::<c64>::zeros(m, tau_p);
    matmul(
        y.as_mut(),
        Accum::Replace,
        channel.g(),
        &weighted,
        c64::new(1.0, 0.0),
        Par::Seq,
    );
    let mut stacked = Vec::with_capacity(m * tau_p);
    for t in 0..tau_p {
        stacked.extend(y.col(t).iter().copied());
    }
    StackedSignal::new(stacked, m, 0.0)
}
