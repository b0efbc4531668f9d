//! Dense reference constructions for cross-checking the structured solver.
//!
//! Everything here materializes the stacked system matrix
//! `Gamma = (I_tau ⊗ G) D` explicitly and works on plain row-major buffers
//! with textbook algorithms (naive products, Householder QR). It shares no
//! code with the Gram identity or the Cholesky path in [`crate::detector`],
//! and is only meant for small instances.

use rand::Rng;

use crate::channel::{cn_sample, small_scale, ChannelState};
use crate::detector::DetectorWorkspace;
use crate::pilots::{generate_pilots, PilotBook};
use crate::rng::seeded;
use crate::signal::{draw_noise, synthesize, ActivityRealization, StackedSignal};
use crate::{c64, Error, Result};

pub const MAX_M: usize = 8;
pub const MAX_K: usize = 12;
pub const MAX_TAU_P: usize = 8;

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<c64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![c64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> c64) -> Self {
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out.data[i * cols + j] = f(i, j);
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: c64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(
            n,
            n,
            |i, j| if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) },
        )
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, rhs: &Dense) -> Dense {
        assert_eq!(self.cols, rhs.rows);
        let mut out = Dense::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self.get(i, p);
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.get(p, j);
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[c64]) -> Vec<c64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Dense, b: &Dense) -> Dense {
    Dense::from_fn(a.rows * b.rows, a.cols * b.cols, |i, j| {
        a.get(i / b.rows, j / b.cols) * b.get(i % b.rows, j % b.cols)
    })
}

/// `D = [D_0; ...; D_{tau-1}]` with `D_t = diag(s_{0,t}, ..., s_{K-1,t})`.
pub fn stacked_pilot_diagonals(pilots: &PilotBook) -> Dense {
    let (k, tau_p) = (pilots.n_devices(), pilots.tau_p());
    let s = pilots.matrix();
    Dense::from_fn(tau_p * k, k, |row, col| {
        let (t, i) = (row / k, row % k);
        if i == col {
            s[(col, t)]
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

/// Explicit `Gamma = (I_tau ⊗ G) D`.
pub fn dense_system_matrix(channel: &ChannelState, pilots: &PilotBook) -> Dense {
    let g = channel.g();
    let g = Dense::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)]);
    kron(&Dense::identity(pilots.tau_p()), &g).matmul(&stacked_pilot_diagonals(pilots))
}

/// Least-squares solution of `a x = b` via Householder QR (`a` tall, full rank).
pub fn least_squares_qr(a: &Dense, b: &[c64]) -> Result<Vec<c64>> {
    let (n, k) = (a.rows, a.cols);
    if n < k {
        return Err(Error::Underdetermined {
            equations: n,
            unknowns: k,
        });
    }
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    for j in 0..k {
        let norm = (j..n).map(|i| r.get(i, j).norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Singular { pivot: j });
        }
        let x0 = r.get(j, j);
        let phase = if x0.norm() > 0.0 {
            x0 / x0.norm()
        } else {
            c64::new(1.0, 0.0)
        };
        let alpha = -phase * norm;
        let mut v: Vec<c64> = (j..n).map(|i| r.get(i, j)).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for z in &mut v {
            *z /= vnorm;
        }
        // apply H = I - 2 v v^H to the trailing block and to b
        for c in j..k {
            let dot: c64 = v.iter().enumerate().map(|(p, vp)| vp.conj() * r.get(j + p, c)).sum();
            for (p, vp) in v.iter().enumerate() {
                let cur = r.get(j + p, c);
                r.set(j + p, c, cur - 2.0 * vp * dot);
            }
        }
        let dot: c64 = v.iter().enumerate().map(|(p, vp)| vp.conj() * qtb[j + p]).sum();
        for (p, vp) in v.iter().enumerate() {
            qtb[j + p] -= 2.0 * vp * dot;
        }
    }
    let mut x = vec![c64::new(0.0, 0.0); k];
    for i in (0..k).rev() {
        let mut acc = qtb[i];
        for (j, xj) in x.iter().enumerate().skip(i + 1) {
            acc -= r.get(i, j) * xj;
        }
        let d = r.get(i, i);
        if d.norm() == 0.0 {
            return Err(Error::Singular { pivot: i });
        }
        x[i] = acc / d;
    }
    Ok(x)
}

/// `max |a - b| / max |b|`.
pub fn relative_error(a: &[c64], b: &[c64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Errors of one structured-vs-dense comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    pub seed: u64,
    pub m: usize,
    pub k: usize,
    pub tau_p: usize,
    pub gram_error: f64,
    pub signal_error: f64,
    pub estimate_error: f64,
}

impl OracleReport {
    pub fn worst(&self) -> f64 {
        self.gram_error.max(self.signal_error).max(self.estimate_error)
    }
}

/// Random CN(0,1) channel, pilots and coefficients with CN(0, 0.1) noise,
/// solved both ways.
pub fn check_instance(m: usize, k: usize, tau_p: usize, seed: u64) -> Result<OracleReport> {
    if m == 0 || k == 0 || tau_p == 0 {
        return Err(Error::invalid("oracle sizes must be at least 1"));
    }
    let mut rng = seeded(seed);
    let channel = ChannelState::co_located(small_scale(m, k, &mut rng))?;
    let pilots = generate_pilots(k, tau_p, &mut rng)?;
    let gamma: Vec<c64> = (0..k).map(|_| cn_sample(&mut rng, 1.0)).collect();
    let activity = ActivityRealization::from_parts(
        vec![true; k],
        gamma.iter().map(|g| g.norm_sqr()).collect(),
        gamma
            .iter()
            .map(|g| g.arg().rem_euclid(std::f64::consts::TAU))
            .collect(),
    )?;
    let sigma2 = 0.1;
    let noise_seed: u64 = rng.random();

    let y = synthesize(&channel, &pilots, &activity, sigma2, &mut seeded(noise_seed))?;
    let ws = DetectorWorkspace::build(&channel, &pilots)?;
    let structured = ws.estimate_gamma(&channel, &pilots, &y)?;

    let big = dense_system_matrix(&channel, &pilots);
    let noise = draw_noise(m * tau_p, sigma2, &mut seeded(noise_seed));
    let dense_y = dense_synthesize(&big, activity.gamma(), &noise, m, sigma2)?;
    let dense_gram = big.adjoint().matmul(&big);
    let sg = ws.system_gram();
    let gram_flat: Vec<c64> = (0..k).flat_map(|i| (0..k).map(move |j| sg[(i, j)])).collect();
    let dense_estimate = least_squares_qr(&big, dense_y.as_slice())?;

    Ok(OracleReport {
        seed,
        m,
        k,
        tau_p,
        gram_error: relative_error(&gram_flat, &dense_gram.data),
        signal_error: relative_error(y.as_slice(), dense_y.as_slice()),
        estimate_error: relative_error(&structured, &dense_estimate),
    })
}

/// Runs `seeds` instances of one size; refuses sizes above the oracle limits.
pub fn oracle_suite(m: usize, k: usize, tau_p: usize, seeds: u64) -> Result<Vec<OracleReport>> {
    if m > MAX_M || k > MAX_K || tau_p > MAX_TAU_P {
        return Err(Error::invalid(format!(
            "oracle sizes limited to M <= {MAX_M}, K <= {MAX_K}, tau_p <= {MAX_TAU_P}"
        )));
    }
    (0..seeds).map(|s| check_instance(m, k, tau_p, s)).collect()
}

/// `Gamma gamma + w` from the materialized system matrix.
pub fn dense_synthesize(big: &Dense, gamma: &[c64], noise: &[c64], m: usize, sigma2: f64) -> Result<StackedSignal> {
    let y = big.matvec(gamma).into_iter().zip(noise).map(|(a, w)| a + w).collect();
    StackedSignal::new(y, m, sigma2)
}
