//! Miss-detection and false-alarm probabilities, their measurability floors
//! and ROC sweeps over the threshold scale `v`.
//!
//! Both probabilities are expectations of per-trial ratios:
//!
//! ```text
//! P_md = 1 - E[ |K_a ∩ K^_a| / |K_a| ]
//! P_fa = E[ |K^_a \ K_a| / (K - |K_a|) ]
//! ```
//!
//! Trials without active devices carry no miss information and are skipped
//! by `P_md`; trials with every device active are skipped by `P_fa`.

use serde::{Deserialize, Serialize};

use crate::detector::threshold_for;
use crate::{c64, Error, Result};

pub const DEFAULT_V_MIN: f64 = 1e-2;
pub const DEFAULT_V_MAX: f64 = 1e5;
pub const DEFAULT_V_POINTS: usize = 71;

/// Error counts of one trial at one threshold scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub n_devices: usize,
    pub n_active: usize,
    pub misses: usize,
    pub false_alarms: usize,
}

impl TrialOutcome {
    /// From the true and the detected active sets (device indices).
    pub fn from_sets(n_devices: usize, true_active: &[usize], detected: &[usize]) -> Self {
        let mut truth = vec![false; n_devices];
        for &k in true_active {
            truth[k] = true;
        }
        let mut flagged = vec![false; n_devices];
        for &k in detected {
            flagged[k] = true;
        }
        Self::from_flags(&truth, &flagged)
    }

    pub fn from_flags(truth: &[bool], detected: &[bool]) -> Self {
        assert_eq!(truth.len(), detected.len());
        let mut out = Self {
            n_devices: truth.len(),
            n_active: 0,
            misses: 0,
            false_alarms: 0,
        };
        for (&a, &d) in truth.iter().zip(detected) {
            out.n_active += usize::from(a);
            out.misses += usize::from(a && !d);
            out.false_alarms += usize::from(!a && d);
        }
        out
    }

    pub fn n_inactive(&self) -> usize {
        self.n_devices - self.n_active
    }
}

/// Everything a trial needs for re-thresholding: truth, estimate and the
/// per-device SNR used by the threshold rule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub active: Vec<bool>,
    pub gamma_hat: Vec<c64>,
    pub snr: Vec<f64>,
}

impl TrialRecord {
    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn detected_at(&self, v: f64) -> Result<Vec<bool>> {
        self.gamma_hat
            .iter()
            .zip(&self.snr)
            .map(|(g, &snr)| threshold_for(snr, v).map(|th| g.norm() > th))
            .collect()
    }

    pub fn outcome_at(&self, v: f64) -> Result<TrialOutcome> {
        Ok(TrialOutcome::from_flags(&self.active, &self.detected_at(v)?))
    }
}

/// `1 - E[|K_a ∩ K^_a| / |K_a|]` over trials with at least one active device.
/// `None` when no trial had an active device.
pub fn p_md(trials: &[TrialOutcome]) -> Option<f64> {
    mean(
        trials
            .iter()
            .filter(|t| t.n_active > 0)
            .map(|t| t.misses as f64 / t.n_active as f64),
    )
}

/// `E[|K^_a \ K_a| / (K - |K_a|)]` over trials with at least one inactive device.
pub fn p_fa(trials: &[TrialOutcome]) -> Option<f64> {
    mean(
        trials
            .iter()
            .filter(|t| t.n_inactive() > 0)
            .map(|t| t.false_alarms as f64 / t.n_inactive() as f64),
    )
}

/// Pooled miss ratio `sum misses / sum |K_a|` (diagnostics only).
pub fn pooled_p_md(trials: &[TrialOutcome]) -> Option<f64> {
    let active: usize = trials.iter().map(|t| t.n_active).sum();
    (active > 0).then(|| trials.iter().map(|t| t.misses).sum::<usize>() as f64 / active as f64)
}

/// Pooled false-alarm ratio (diagnostics only).
pub fn pooled_p_fa(trials: &[TrialOutcome]) -> Option<f64> {
    let inactive: usize = trials.iter().map(|t| t.n_inactive()).sum();
    (inactive > 0).then(|| trials.iter().map(|t| t.false_alarms).sum::<usize>() as f64 / inactive as f64)
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = it.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

/// Smallest non-zero probabilities observable with the realized counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Floors {
    pub fa: f64,
    pub md: f64,
}

/// `floor_md = 1 / sum_i |K_a,i|`, `floor_fa = 1 / (K N_sim - sum_i |K_a,i|)`.
/// A zero denominator gives a floor of 1.
pub fn probability_floors(trials: &[TrialOutcome]) -> Result<Floors> {
    if trials.is_empty() {
        return Err(Error::invalid("floors need at least one trial"));
    }
    let active: usize = trials.iter().map(|t| t.n_active).sum();
    let inactive: usize = trials.iter().map(|t| t.n_inactive()).sum();
    let inv = |n: usize| if n == 0 { 1.0 } else { 1.0 / n as f64 };
    Ok(Floors {
        fa: inv(inactive),
        md: inv(active),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub v: f64,
    /// NaN when undefined.
    pub p_fa: f64,
    /// NaN when undefined.
    pub p_md: f64,
    pub n_fa: usize,
    pub n_miss: usize,
    pub n_active_total: usize,
    pub n_inactive_total: usize,
    pub floor_fa: f64,
    pub floor_md: f64,
}

impl RocPoint {
    pub fn from_outcomes(v: f64, trials: &[TrialOutcome]) -> Result<Self> {
        let floors = probability_floors(trials)?;
        Ok(Self {
            v,
            p_fa: p_fa(trials).unwrap_or(f64::NAN),
            p_md: p_md(trials).unwrap_or(f64::NAN),
            n_fa: trials.iter().map(|t| t.false_alarms).sum(),
            n_miss: trials.iter().map(|t| t.misses).sum(),
            n_active_total: trials.iter().map(|t| t.n_active).sum(),
            n_inactive_total: trials.iter().map(|t| t.n_inactive()).sum(),
            floor_fa: floors.fa,
            floor_md: floors.md,
        })
    }

    pub fn error_free(&self) -> bool {
        self.n_fa == 0 && self.n_miss == 0
    }

    /// `max(p_fa / floor_fa, p_md / floor_md)`; an undefined probability counts as 0.
    pub fn normalized_error(&self) -> f64 {
        let r = |p: f64, f: f64| if p.is_nan() { 0.0 } else { p / f };
        r(self.p_fa, self.floor_fa).max(r(self.p_md, self.floor_md))
    }

    /// CSV row matching [`ROC_CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.v,
            self.p_fa,
            self.p_md,
            self.n_fa,
            self.n_miss,
            self.n_active_total,
            self.n_inactive_total,
            self.floor_fa,
            self.floor_md
        )
    }
}

pub const ROC_CSV_HEADER: &str = "v,p_fa,p_md,n_fa,n_miss,n_active_total,n_inactive_total,floor_fa,floor_md";

/// A threshold sweep with its selected operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub points: Vec<RocPoint>,
    pub v_opt_index: usize,
}

impl Roc {
    pub fn v_opt(&self) -> &RocPoint {
        &self.points[self.v_opt_index]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.points.len() + 1));
        out.push_str(ROC_CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&p.csv_row());
            out.push('\n');
        }
        out
    }

    /// `p_fa` non-increasing and `p_md` non-decreasing in `v`.
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| {
            let (a, b) = (&w[0], &w[1]);
            a.v <= b.v
                && a.n_fa >= b.n_fa
                && a.n_miss <= b.n_miss
                && le_or_nan(b.p_fa, a.p_fa)
                && le_or_nan(a.p_md, b.p_md)
        })
    }
}

fn le_or_nan(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a <= b
}

/// `n` log-spaced points from `v_min` to `v_max`, both included.
pub fn log_grid(v_min: f64, v_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(v_min > 0.0 && v_max >= v_min && v_min.is_finite() && v_max.is_finite()) {
        return Err(Error::invalid(format!("bad v range [{v_min}, {v_max}]")));
    }
    match n {
        0 => Err(Error::invalid("v grid needs at least one point")),
        1 => Ok(vec![v_min]),
        _ => {
            let (a, b) = (v_min.log10(), v_max.log10());
            let mut grid: Vec<f64> = (0..n)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
                .collect();
            grid[0] = v_min;
            grid[n - 1] = v_max;
            Ok(grid)
        }
    }
}

/// Index minimizing [`RocPoint::normalized_error`]; ties go to the smaller
/// `p_md`, then to the smaller `v`.
pub fn select_v_opt(points: &[RocPoint]) -> Option<usize> {
    let md = |p: &RocPoint| if p.p_md.is_nan() { 0.0 } else { p.p_md };
    (0..points.len()).min_by(|&i, &j| {
        let (a, b) = (&points[i], &points[j]);
        a.normalized_error()
            .total_cmp(&b.normalized_error())
            .then(md(a).total_cmp(&md(b)))
            .then(i.cmp(&j))
    })
}

/// Re-thresholds the cached estimates at every grid value (sorted ascending)
/// and aggregates each into a [`RocPoint`].
pub fn sweep_roc(trials: &[TrialRecord], v_grid: &[f64]) -> Result<Roc> {
    if v_grid.is_empty() {
        return Err(Error::invalid("empty v grid"));
    }
    if trials.is_empty() {
        return Err(Error::invalid("no trials to sweep"));
    }
    let mut grid = v_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let points = grid
        .iter()
        .map(|&v| {
            let outcomes = trials.iter().map(|t| t.outcome_at(v)).collect::<Result<Vec<_>>>()?;
            RocPoint::from_outcomes(v, &outcomes)
        })
        .collect::<Result<Vec<_>>>()?;
    let v_opt_index = select_v_opt(&points).expect("non-empty grid");
    Ok(Roc { points, v_opt_index })
}
