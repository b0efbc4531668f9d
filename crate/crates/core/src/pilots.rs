//! Per-device preamble book.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use rand::Rng;

use crate::channel::cn_sample;
use crate::{c64, norm2, Error, Result};

pub const DEFAULT_TAU_P: usize = 40;

/// Row `k` is the preamble of device `k`, `tau_p` symbols long.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    s: Mat<c64>,
}

impl PilotBook {
    pub fn from_matrix(s: Mat<c64>) -> Result<Self> {
        if s.nrows() == 0 || s.ncols() == 0 {
            return Err(Error::invalid("pilot book must be non-empty"));
        }
        Ok(Self { s })
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.s
    }

    pub fn n_devices(&self) -> usize {
        self.s.nrows()
    }

    pub fn tau_p(&self) -> usize {
        self.s.ncols()
    }

    pub fn row(&self, k: usize) -> Vec<c64> {
        self.s.row(k).iter().copied().collect()
    }

    /// `||s_k||^2`.
    pub fn row_norm2(&self, k: usize) -> f64 {
        norm2(self.s.row(k).iter().copied())
    }
}

/// `k x tau_p` i.i.d. CN(0, 1) symbols, drawn device by device.
pub fn generate_pilots<R: Rng + ?Sized>(k: usize, tau_p: usize, rng: &mut R) -> Result<PilotBook> {
    if k == 0 || tau_p == 0 {
        return Err(Error::invalid("pilot book needs k >= 1 and tau_p >= 1"));
    }
    let mut s = Mat::<c64>::zeros(k, tau_p);
    for i in 0..k {
        for t in 0..tau_p {
            s[(i, t)] = cn_sample(rng, 1.0);
        }
    }
    PilotBook::from_matrix(s)
}

/// `P[k, l] = sum_t conj(s[k, t]) * s[l, t]`, made exactly Hermitian.
pub fn pilot_gram(book: &PilotBook) -> Mat<c64> {
    let s = book.matrix();
    let k = s.nrows();
    let mut p = Mat::<c64>::zeros(k, k);
    matmul(
        p.as_mut(),
        Accum::Replace,
        s.conjugate(),
        s.transpose(),
        c64::new(1.0, 0.0),
        Par::Seq,
    );
    hermitize(&mut p);
    p
}

/// Mirrors the lower triangle into the upper one and zeroes the diagonal's
/// imaginary part.
pub(crate) fn hermitize(a: &mut Mat<c64>) {
    let n = a.nrows();
    for j in 0..n {
        a[(j, j)].im = 0.0;
        for i in j + 1..n {
            a[(j, i)] = a[(i, j)].conj();
        }
    }
}
