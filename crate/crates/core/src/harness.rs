//! Seeded Monte-Carlo campaigns.
//!
//! A trial is deployment -> large-scale gains -> fading -> activity ->
//! received signal -> estimate. Each random ingredient comes from its own
//! stream keyed by `(master_seed, stream, trial_index)`, so a trial is fully
//! determined by that pair. The stream keys do not involve the deployment
//! mode, antenna count, power or area: scenarios that differ only in those
//! see the same device layout (scaled to the area) and the same activity.

use std::sync::Arc;
use std::time::Instant;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    assemble_channel, dbm_to_watts, snr_from_norms, ChannelState, LargeScale, PathLossModel, DEFAULT_NOISE_DBM,
};
use crate::config;
use crate::detector::DetectorWorkspace;
use crate::geometry::{
    place_aps, place_devices, Deployment, DeploymentMode, DEFAULT_AP_HEIGHT_M, DEFAULT_AREA_SIDE_M,
    DEFAULT_DEVICE_HEIGHT_M,
};
use crate::metrics::{log_grid, sweep_roc, Roc, TrialRecord, DEFAULT_V_MAX, DEFAULT_V_MIN, DEFAULT_V_POINTS};
use crate::pilots::{generate_pilots, pilot_gram, PilotBook, DEFAULT_TAU_P};
use crate::rng::{stream, Stream};
use crate::signal::{draw_activity, synthesize, ActivityRealization, StackedSignal, DEFAULT_EPSILON_A};
use crate::{c64, Error, Result};

/// Full simulation configuration. Defaults follow the reference parameter
/// set: 1000 devices, 500 m square, 1 % activity, 1 mW, -122.88 dBm noise,
/// 40-symbol pilots, 1000 trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub mode: DeploymentMode,
    /// Total receive antennas `M`.
    pub m_total: usize,
    pub k_devices: usize,
    pub area_side: f64,
    pub epsilon_a: f64,
    pub rho_mw: f64,
    pub sigma2_dbm: f64,
    pub tau_p: usize,
    pub carrier_hz: f64,
    pub device_height: (f64, f64),
    pub ap_height: f64,
    pub n_sim: usize,
    pub master_seed: u64,
    pub v_min: f64,
    pub v_max: f64,
    pub v_points: usize,
    /// Draw a fresh pilot book every trial instead of once per scenario.
    pub redraw_pilots: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            mode: DeploymentMode::CellFree,
            m_total: 64,
            k_devices: 1000,
            area_side: DEFAULT_AREA_SIDE_M,
            epsilon_a: DEFAULT_EPSILON_A,
            rho_mw: 1.0,
            sigma2_dbm: DEFAULT_NOISE_DBM,
            tau_p: DEFAULT_TAU_P,
            carrier_hz: 868e6,
            device_height: DEFAULT_DEVICE_HEIGHT_M,
            ap_height: DEFAULT_AP_HEIGHT_M,
            n_sim: 1000,
            master_seed: 0,
            v_min: DEFAULT_V_MIN,
            v_max: DEFAULT_V_MAX,
            v_points: DEFAULT_V_POINTS,
            redraw_pilots: false,
        }
    }
}

impl Scenario {
    /// One array site for co-located, one AP per antenna for cell-free.
    pub fn n_aps(&self) -> usize {
        match self.mode {
            DeploymentMode::CoLocated => 1,
            DeploymentMode::CellFree => self.m_total,
        }
    }

    pub fn antennas_per_ap(&self) -> usize {
        match self.mode {
            DeploymentMode::CoLocated => self.m_total,
            DeploymentMode::CellFree => 1,
        }
    }

    pub fn rho_w(&self) -> f64 {
        self.rho_mw * 1e-3
    }

    pub fn sigma2_w(&self) -> f64 {
        dbm_to_watts(self.sigma2_dbm)
    }

    pub fn v_grid(&self) -> Result<Vec<f64>> {
        log_grid(self.v_min, self.v_max, self.v_points)
    }

    /// Short label for file and directory names.
    pub fn label(&self) -> String {
        format!(
            "{}_m{}_rho{}mw_area{}_eps{}",
            self.mode, self.m_total, self.rho_mw, self.area_side, self.epsilon_a
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::config(field, msg));
        if self.k_devices == 0 {
            return fail("k_devices", "must be at least 1".into());
        }
        if self.m_total == 0 {
            return fail("m_total", "must be at least 1".into());
        }
        if self.mode == DeploymentMode::CellFree && self.m_total < 2 {
            return fail(
                "m_total",
                "a cell-free deployment needs at least 2 single-antenna APs".into(),
            );
        }
        if self.tau_p == 0 {
            return fail("tau_p", "must be at least 1".into());
        }
        if self.tau_p * self.m_total < self.k_devices {
            return fail(
                "tau_p",
                format!(
                    "tau_p * M = {} is below K = {}; the activity system would be underdetermined",
                    self.tau_p * self.m_total,
                    self.k_devices
                ),
            );
        }
        if !(self.area_side > 0.0 && self.area_side.is_finite()) {
            return fail("area_m", "must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon_a) {
            return fail("epsilon_a", "must lie in [0, 1]".into());
        }
        if !(self.rho_mw > 0.0 && self.rho_mw.is_finite()) {
            return fail("rho_mw", "must be positive".into());
        }
        if !self.sigma2_dbm.is_finite() {
            return fail("sigma2_dbm", "must be finite".into());
        }
        let (lo, hi) = self.device_height;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return fail("device_height_min_m", "device height range is invalid".into());
        }
        if !self.ap_height.is_finite() {
            return fail("ap_height_m", "must be finite".into());
        }
        if self.n_sim == 0 {
            return fail("n_sim", "must be at least 1".into());
        }
        if let Err(e) = self.v_grid() {
            return fail("v_min", e.to_string());
        }
        Ok(())
    }
}

/// All intermediate state of one trial.
#[derive(Debug, Clone)]
pub struct TrialRealization {
    pub deployment: Deployment,
    pub large_scale: LargeScale,
    pub channel: ChannelState,
    pub pilots: Arc<PilotBook>,
    pub activity: ActivityRealization,
    pub signal: StackedSignal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial_index: usize,
    pub n_active: usize,
    pub misses_at_v_opt: usize,
    pub false_alarms_at_v_opt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub trial_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_s: f64,
    pub mean_trial_s: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub scenario: Scenario,
    pub roc: Roc,
    pub trials: Vec<TrialSummary>,
    pub failed: Vec<FailedTrial>,
    pub timing: Timing,
}

impl CampaignResult {
    pub fn n_trials(&self) -> usize {
        self.trials.len() + self.failed.len()
    }
}

/// A validated scenario with its scenario-level pilot book.
#[derive(Debug, Clone)]
pub struct Campaign {
    scenario: Scenario,
    path_loss: PathLossModel,
    pilots: Arc<PilotBook>,
    pilot_gram: Arc<Mat<c64>>,
}

impl Campaign {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let pilots = scenario_pilots(&scenario, 0)?;
        let pilot_gram = Arc::new(pilot_gram(&pilots));
        Ok(Self {
            scenario,
            path_loss: PathLossModel::default(),
            pilots: Arc::new(pilots),
            pilot_gram,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn pilots(&self) -> &PilotBook {
        &self.pilots
    }

    /// Draws every random ingredient of trial `index`.
    pub fn realize(&self, index: usize) -> Result<TrialRealization> {
        let s = &self.scenario;
        let seed = s.master_seed;
        let i = index as u64;

        let devices = place_devices(
            s.k_devices,
            s.area_side,
            s.device_height,
            &mut stream(seed, Stream::DevicePlacement, i),
        )?;
        let aps = place_aps(
            s.n_aps(),
            s.area_side,
            s.ap_height,
            &mut stream(seed, Stream::ApPlacement, i),
        )?;
        let deployment = Deployment::new(s.mode, aps, devices, s.area_side)?;
        let large_scale = LargeScale::generate(&self.path_loss, &deployment, &mut stream(seed, Stream::Shadowing, i))?;
        let channel = assemble_channel(
            &deployment,
            &large_scale,
            s.antennas_per_ap(),
            &mut stream(seed, Stream::Fading, i),
        )?;
        let pilots = if s.redraw_pilots {
            Arc::new(scenario_pilots(s, i + 1)?)
        } else {
            Arc::clone(&self.pilots)
        };
        let activity = draw_activity(
            s.k_devices,
            s.epsilon_a,
            s.rho_w(),
            &mut stream(seed, Stream::Activity, i),
        )?;
        let signal = synthesize(
            &channel,
            &pilots,
            &activity,
            s.sigma2_w(),
            &mut stream(seed, Stream::Noise, i),
        )?;
        Ok(TrialRealization {
            deployment,
            large_scale,
            channel,
            pilots,
            activity,
            signal,
        })
    }

    /// Runs trial `index` and keeps what the threshold sweep needs.
    pub fn run_trial(&self, index: usize) -> Result<TrialRecord> {
        let r = self.realize(index)?;
        let ws = if self.scenario.redraw_pilots {
            DetectorWorkspace::build(&r.channel, &r.pilots)?
        } else {
            DetectorWorkspace::build_with_pilot_gram(&r.channel, &r.pilots, Arc::clone(&self.pilot_gram))?
        };
        let gamma_hat = ws.estimate_gamma(&r.channel, &r.pilots, &r.signal)?;
        let (rho, sigma2) = (self.scenario.rho_w(), self.scenario.sigma2_w());
        let snr = (0..self.scenario.k_devices)
            .map(|k| snr_from_norms(r.channel.column_norm2(k), r.pilots.row_norm2(k), rho, sigma2))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrialRecord {
            trial_index: index,
            active: r.activity.active().to_vec(),
            gamma_hat,
            snr,
        })
    }

    /// Runs every trial and returns the raw records plus failures, in trial order.
    pub fn run_records(&self, threads: Option<usize>) -> Result<(Vec<TrialRecord>, Vec<FailedTrial>)> {
        let work = || {
            (0..self.scenario.n_sim)
                .into_par_iter()
                .map(|i| (i, self.run_trial(i)))
                .collect::<Vec<_>>()
        };
        let results = match threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?
                .install(work),
            None => work(),
        };
        let mut records = Vec::with_capacity(results.len());
        let mut failed = Vec::new();
        for (i, r) in results {
            match r {
                Ok(rec) => records.push(rec),
                Err(e) => {
                    log::warn!("trial {i} failed and is excluded: {e}");
                    failed.push(FailedTrial {
                        trial_index: i,
                        error: e.to_string(),
                    });
                }
            }
        }
        Ok((records, failed))
    }

    pub fn run(&self, threads: Option<usize>) -> Result<CampaignResult> {
        let start = Instant::now();
        log::info!("{}: running {} trials", self.scenario.label(), self.scenario.n_sim);
        let (records, failed) = self.run_records(threads)?;
        if records.is_empty() {
            return Err(Error::AllTrialsFailed(failed.len()));
        }
        let roc = sweep_roc(&records, &self.scenario.v_grid()?)?;
        let v_opt = roc.v_opt().v;
        let trials = records
            .iter()
            .map(|r| {
                let o = r.outcome_at(v_opt)?;
                Ok(TrialSummary {
                    trial_index: r.trial_index,
                    n_active: o.n_active,
                    misses_at_v_opt: o.misses,
                    false_alarms_at_v_opt: o.false_alarms,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let wall = start.elapsed().as_secs_f64();
        log::info!("{}: done in {wall:.2} s, v_opt = {v_opt}", self.scenario.label());
        let n_threads = threads.unwrap_or_else(rayon::current_num_threads);
        Ok(CampaignResult {
            scenario: self.scenario.clone(),
            roc,
            timing: Timing {
                wall_clock_s: wall,
                mean_trial_s: wall * n_threads as f64 / self.scenario.n_sim as f64,
                threads: n_threads,
            },
            trials,
            failed,
        })
    }
}

fn scenario_pilots(s: &Scenario, counter: u64) -> Result<PilotBook> {
    generate_pilots(
        s.k_devices,
        s.tau_p,
        &mut stream(s.master_seed, Stream::Pilots, counter),
    )
}

pub fn run_trial(scenario: &Scenario, index: usize) -> Result<TrialRecord> {
    Campaign::new(scenario.clone())?.run_trial(index)
}

pub fn run_campaign(scenario: &Scenario) -> Result<CampaignResult> {
    Campaign::new(scenario.clone())?.run(None)
}

pub fn run_campaign_with_threads(scenario: &Scenario, threads: usize) -> Result<CampaignResult> {
    Campaign::new(scenario.clone())?.run(Some(threads))
}

/// Parameters that may be swept.
pub const SWEEPABLE: &[&str] = &["rho_mw", "rho_dbm", "area_m", "epsilon_a", "m_total", "mode"];

/// Cartesian expansion of `base` over named value lists, first sweep
/// outermost. Every expanded scenario keeps the base master seed.
pub fn scenario_matrix(base: &Scenario, sweeps: &[(String, Vec<String>)]) -> Result<Vec<Scenario>> {
    let mut out = vec![base.clone()];
    for (name, values) in sweeps {
        let key = config::canonical_key(name);
        if !SWEEPABLE.contains(&key.as_str()) {
            return Err(Error::config(
                name.clone(),
                format!("cannot sweep `{name}` (sweepable: {})", SWEEPABLE.join(", ")),
            ));
        }
        if values.is_empty() {
            return Err(Error::config(name.clone(), "sweep has no values"));
        }
        let mut next = Vec::with_capacity(out.len() * values.len());
        for s in &out {
            for v in values {
                let mut e = s.clone();
                config::apply_key(&mut e, &key, v)?;
                next.push(e);
            }
        }
        out = next;
    }
    for s in &out {
        s.validate()?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        Scenario {
            k_devices: 40,
            m_total: 8,
            tau_p: 8,
            n_sim: 6,
            epsilon_a: 0.1,
            v_points: 15,
            master_seed: 5,
            ..Scenario::default()
        }
    }

    #[test]
    fn default_scenario_is_valid() {
        let s = Scenario::default();
        s.validate().unwrap();
        assert_eq!((s.n_aps(), s.antennas_per_ap()), (64, 1));
        assert!((s.sigma2_w() / 5.152e-16 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn underdetermined_scenario_rejected() {
        let s = Scenario {
            tau_p: 2,
            m_total: 4,
            k_devices: 9,
            ..small()
        };
        assert!(matches!(s.validate(), Err(Error::Config { field, .. }) if field == "tau_p"));
    }

    #[test]
    fn trial_is_deterministic() {
        let s = small();
        assert_eq!(run_trial(&s, 3).unwrap(), run_trial(&s, 3).unwrap());
        assert_ne!(run_trial(&s, 3).unwrap().gamma_hat, run_trial(&s, 4).unwrap().gamma_hat);
    }

    #[test]
    fn modes_share_device_layout_and_activity() {
        let cf = Campaign::new(small()).unwrap();
        let co = Campaign::new(Scenario {
            mode: DeploymentMode::CoLocated,
            m_total: 16,
            ..small()
        })
        .unwrap();
        let (a, b) = (cf.realize(2).unwrap(), co.realize(2).unwrap());
        assert_eq!(a.deployment.device_positions, b.deployment.device_positions);
        assert_eq!(a.activity, b.activity);
        assert_eq!(a.pilots, b.pilots);
        assert_eq!(b.deployment.ap_positions.len(), 1);
        assert_eq!(a.deployment.ap_positions.len(), 8);
    }

    #[test]
    fn campaign_trial_count_and_thread_invariance() {
        let s = small();
        let one = run_campaign_with_threads(&s, 1).unwrap();
        let two = run_campaign_with_threads(&s, 3).unwrap();
        assert_eq!(one.n_trials(), s.n_sim);
        assert_eq!(one.roc, two.roc);
        assert_eq!(one.trials, two.trials);
        assert!(one.roc.is_monotone());
    }

    #[test]
    fn prefix_trials_unchanged_by_n_sim() {
        let a = Campaign::new(small()).unwrap();
        let b = Campaign::new(Scenario { n_sim: 12, ..small() }).unwrap();
        for i in 0..6 {
            assert_eq!(a.run_trial(i).unwrap(), b.run_trial(i).unwrap());
        }
    }

    #[test]
    fn single_trial_campaign() {
        let r = run_campaign(&Scenario { n_sim: 1, ..small() }).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.roc.points.len(), 15);
    }

    #[test]
    fn no_activity_means_no_misses() {
        let r = run_campaign(&Scenario {
            epsilon_a: 0.0,
            ..small()
        })
        .unwrap();
        assert!(r.roc.points.iter().all(|p| p.n_miss == 0 && p.p_md.is_nan()));
    }

    #[test]
    fn redrawn_pilots_differ_per_trial() {
        let c = Campaign::new(Scenario {
            redraw_pilots: true,
            ..small()
        })
        .unwrap();
        assert_ne!(c.realize(0).unwrap().pilots, c.realize(1).unwrap().pilots);
        c.run_trial(0).unwrap();
    }

    #[test]
    fn matrix_expansion() {
        let base = Scenario {
            k_devices: 100,
            ..Scenario::default()
        };
        let sweeps = vec![
            ("rho_mw".to_string(), vec!["1".into(), "10".into(), "25".into()]),
            ("m_total".to_string(), vec!["32".into(), "64".into()]),
            ("mode".to_string(), vec!["co-located".into(), "cell-free".into()]),
        ];
        let m = scenario_matrix(&base, &sweeps).unwrap();
        assert_eq!(m.len(), 12);
        assert!(m.iter().all(|s| s.master_seed == base.master_seed));
        assert_eq!(m[0].rho_mw, 1.0);
        assert_eq!((m[0].m_total, m[0].mode), (32, DeploymentMode::CoLocated));
        assert_eq!(m[11].rho_mw, 25.0);
        assert_eq!(scenario_matrix(&base, &[]).unwrap(), vec![base.clone()]);
        assert!(scenario_matrix(&base, &[("k_devices".into(), vec!["5".into()])]).is_err());
    }

    #[test]
    fn area_sweep_scales_layout() {
        let base = small();
        let m = scenario_matrix(&base, &[("area_m".into(), vec!["500".into(), "1000".into()])]).unwrap();
        assert_eq!(m.len(), 2);
        let a = Campaign::new(m[0].clone()).unwrap().realize(0).unwrap();
        let b = Campaign::new(m[1].clone()).unwrap().realize(0).unwrap();
        for (p, q) in a.deployment.device_positions.iter().zip(&b.deployment.device_positions) {
            assert!((q.x - 2.0 * p.x).abs() < 1e-9 && (q.y - 2.0 * p.y).abs() < 1e-9);
        }
    }
}
