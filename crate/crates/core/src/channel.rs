//! Large-scale gains, Rayleigh fading and the prior-CSI matrix `G`.

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geometry::{link_distance, Deployment};
use crate::{c64, norm2, Error, Result};

/// Thermal noise floor of a 125 kHz channel.
pub const DEFAULT_NOISE_DBM: f64 = -122.88;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w * 1e3)
}

/// Log-distance urban path loss with log-normal shadowing:
/// `intercept + slope * log10(d / reference) + chi`, with `chi ~ N(0, std^2)` dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossModel {
    pub intercept_db: f64,
    pub slope_db: f64,
    pub reference_m: f64,
    pub shadowing_std_db: f64,
}

impl Default for PathLossModel {
    /// Urban macro model at 868 MHz, distances in kilometers.
    fn default() -> Self {
        Self {
            intercept_db: 128.95,
            slope_db: 23.2,
            reference_m: 1000.0,
            shadowing_std_db: 7.8,
        }
    }
}

impl PathLossModel {
    /// Path loss in dB at distance `d` meters with explicit shadowing `chi_db`.
    pub fn path_loss_db(&self, d: f64, chi_db: f64) -> Result<f64> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::invalid(format!("link distance must be positive, got {d}")));
        }
        Ok(self.intercept_db + self.slope_db * (d / self.reference_m).log10() + chi_db)
    }

    pub fn draw_shadowing<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.shadowing_std_db * z
    }

    /// Path loss with a freshly drawn shadowing term.
    pub fn sample_path_loss_db<R: Rng + ?Sized>(&self, d: f64, rng: &mut R) -> Result<f64> {
        let chi = self.draw_shadowing(rng);
        self.path_loss_db(d, chi)
    }
}

/// Path loss with the default model and explicit shadowing.
pub fn path_loss_db(d: f64, chi_db: f64) -> Result<f64> {
    PathLossModel::default().path_loss_db(d, chi_db)
}

/// Per-link losses `beta[k, n]` in dB, device `k` to AP `n`.
#[derive(Debug, Clone)]
pub struct LargeScale {
    beta_db: Mat<f64>,
}

impl LargeScale {
    pub fn from_db(beta_db: Mat<f64>) -> Result<Self> {
        if beta_db.nrows() == 0 || beta_db.ncols() == 0 {
            return Err(Error::invalid("large-scale matrix must be non-empty"));
        }
        Ok(Self { beta_db })
    }

    /// From linear power gains (`0` is a dead link).
    pub fn from_linear(gains: &Mat<f64>) -> Result<Self> {
        Self::from_db(Mat::from_fn(gains.nrows(), gains.ncols(), |k, n| {
            -linear_to_db(gains[(k, n)])
        }))
    }

    /// Distance-based losses with i.i.d. shadowing per (device, AP) pair,
    /// drawn device-major.
    pub fn generate<R: Rng + ?Sized>(model: &PathLossModel, deployment: &Deployment, rng: &mut R) -> Result<Self> {
        let (k, n) = (deployment.n_devices(), deployment.n_aps());
        let mut beta = Mat::<f64>::zeros(k, n);
        for (ki, dev) in deployment.device_positions.iter().enumerate() {
            for (ni, ap) in deployment.ap_positions.iter().enumerate() {
                beta[(ki, ni)] = model.sample_path_loss_db(link_distance(dev, ap), rng)?;
            }
        }
        Self::from_db(beta)
    }

    pub fn n_devices(&self) -> usize {
        self.beta_db.nrows()
    }

    pub fn n_aps(&self) -> usize {
        self.beta_db.ncols()
    }

    pub fn beta_db(&self) -> &Mat<f64> {
        &self.beta_db
    }

    /// Linear power gain of link (k, n).
    pub fn linear_gain(&self, k: usize, n: usize) -> f64 {
        db_to_linear(-self.beta_db[(k, n)])
    }
}

/// Prior CSI: column `k` of `g` is device `k` seen by all `M` antennas.
#[derive(Debug, Clone)]
pub struct ChannelState {
    g: Mat<c64>,
    antenna_to_ap: Vec<usize>,
}

impl ChannelState {
    pub fn new(g: Mat<c64>, antenna_to_ap: Vec<usize>) -> Result<Self> {
        if g.nrows() == 0 || g.ncols() == 0 {
            return Err(Error::invalid("channel matrix must be non-empty"));
        }
        if antenna_to_ap.len() != g.nrows() {
            return Err(Error::invalid("antenna map length must equal the antenna count"));
        }
        Ok(Self { g, antenna_to_ap })
    }

    /// Single-site channel: every antenna belongs to AP 0.
    pub fn co_located(g: Mat<c64>) -> Result<Self> {
        let m = g.nrows();
        Self::new(g, vec![0; m])
    }

    pub fn g(&self) -> &Mat<c64> {
        &self.g
    }

    pub fn n_antennas(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_devices(&self) -> usize {
        self.g.ncols()
    }

    pub fn antenna_to_ap(&self) -> &[usize] {
        &self.antenna_to_ap
    }

    /// `||g_k||^2`.
    pub fn column_norm2(&self, k: usize) -> f64 {
        norm2(self.g.col(k).iter().copied())
    }

    pub fn column(&self, k: usize) -> Vec<c64> {
        self.g.col(k).iter().copied().collect()
    }
}

pub fn cn_sample<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> c64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c64::new(s * re, s * im)
}

/// `rows x cols` i.i.d. CN(0, 1), drawn column-major.
pub fn small_scale<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat<c64> {
    let mut h = Mat::<c64>::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            h[(i, j)] = cn_sample(rng, 1.0);
        }
    }
    h
}

/// Draws Rayleigh fading and assembles `G`.
///
/// Antennas are grouped by AP: antenna `m` belongs to AP `m / antennas_per_ap`.
pub fn assemble_channel<R: Rng + ?Sized>(
    deployment: &Deployment,
    large_scale: &LargeScale,
    antennas_per_ap: usize,
    rng: &mut R,
) -> Result<ChannelState> {
    let m = deployment.n_aps() * antennas_per_ap;
    let h = small_scale(m, deployment.n_devices(), rng);
    assemble_with_fading(large_scale, antennas_per_ap, &h)
}

/// `G[m, k] = sqrt(gain[k, ap(m)]) * h[m, k]` for a given fading matrix.
pub fn assemble_with_fading(large_scale: &LargeScale, antennas_per_ap: usize, h: &Mat<c64>) -> Result<ChannelState> {
    if antennas_per_ap == 0 {
        return Err(Error::invalid("antennas per AP must be at least 1"));
    }
    let m = large_scale.n_aps() * antennas_per_ap;
    let k = large_scale.n_devices();
    if h.nrows() != m || h.ncols() != k {
        return Err(Error::invalid(format!(
            "fading matrix is {}x{}, expected {m}x{k}",
            h.nrows(),
            h.ncols()
        )));
    }
    let antenna_to_ap: Vec<usize> = (0..m).map(|a| a / antennas_per_ap).collect();
    let amp = Mat::<f64>::from_fn(k, large_scale.n_aps(), |ki, n| large_scale.linear_gain(ki, n).sqrt());
    let g = Mat::<c64>::from_fn(m, k, |a, ki| h[(a, ki)] * amp[(ki, antenna_to_ap[a])]);
    ChannelState::new(g, antenna_to_ap)
}

/// `rho * ||g_k||^2 * ||s_k||^2 / sigma2`.
pub fn snr_of_device(g_k: &[c64], s_k: &[c64], rho: f64, sigma2: f64) -> Result<f64> {
    snr_from_norms(norm2(g_k.iter().copied()), norm2(s_k.iter().copied()), rho, sigma2)
}

pub fn snr_from_norms(g_norm2: f64, s_norm2: f64, rho: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!("noise power must be positive, got {sigma2}")));
    }
    Ok(rho * g_norm2 * s_norm2 / sigma2)
}
