//! Channel-recurrence analysis of CSI snapshot dumps.
//!
//! `delta(h_i, h_j) = |h_i^H h_j| / (||h_i|| ||h_j||)` measures how closely a
//! later channel snapshot matches an earlier one, independent of scale and
//! common phase. A recurrence series compares the first snapshot with every
//! other one; its ECDF shows how often prior CSI remains usable.
//!
//! Snapshot files are CSV with a header row, an optional leading
//! `timestamp` column and then `a<i>_re,a<i>_im` pairs per antenna.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::channel::cn_sample;
use crate::{c64, norm2, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSeries {
    pub snapshots: Vec<Vec<c64>>,
    pub timestamps: Option<Vec<f64>>,
    pub node_id: String,
}

impl SnapshotSeries {
    pub fn new(snapshots: Vec<Vec<c64>>, timestamps: Option<Vec<f64>>, node_id: impl Into<String>) -> Result<Self> {
        if let Some(first) = snapshots.first() {
            if first.is_empty() || snapshots.iter().any(|s| s.len() != first.len()) {
                return Err(Error::invalid("snapshots must share one non-zero length"));
            }
        }
        if let Some(ts) = &timestamps {
            if ts.len() != snapshots.len() {
                return Err(Error::invalid("one timestamp per snapshot is required"));
            }
        }
        Ok(Self {
            snapshots,
            timestamps,
            node_id: node_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn n_antennas(&self) -> usize {
        self.snapshots.first().map_or(0, Vec::len)
    }
}

/// Normalized inner-product magnitude of two snapshots, in `[0, 1]`.
pub fn correlation(h_i: &[c64], h_j: &[c64]) -> Result<f64> {
    if h_i.len() != h_j.len() {
        return Err(Error::invalid(format!(
            "snapshot lengths differ ({} vs {})",
            h_i.len(),
            h_j.len()
        )));
    }
    let (ni, nj) = (norm2(h_i.iter().copied()).sqrt(), norm2(h_j.iter().copied()).sqrt());
    if !(ni > 0.0 && nj > 0.0) {
        return Err(Error::invalid("correlation of a zero-norm snapshot"));
    }
    let inner: c64 = h_i.iter().zip(h_j).map(|(a, b)| a.conj() * b).sum();
    let delta = (inner.norm() / (ni * nj)).min(1.0);
    debug_assert!((0.0..=1.0).contains(&delta));
    Ok(delta)
}

/// `delta(snapshot_0, snapshot_j)` for every `j`; entries whose correlation
/// is undefined (zero-norm snapshot) are `None`.
pub fn recurrence_series(series: &SnapshotSeries) -> Result<Vec<Option<f64>>> {
    let first = series
        .snapshots
        .first()
        .ok_or_else(|| Error::invalid("recurrence needs at least one snapshot"))?;
    Ok(series
        .snapshots
        .iter()
        .enumerate()
        .map(|(j, s)| match correlation(first, s) {
            // exact self-correlation
            Ok(_) if j == 0 => Some(1.0),
            Ok(d) => Some(d),
            Err(_) => None,
        })
        .collect())
}

/// Empirical CDF as `(value, fraction <= value)` steps, one per distinct value.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
    steps: Vec<(f64, f64)>,
}

impl Ecdf {
    pub fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of samples `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Fraction of samples strictly above `threshold`.
    pub fn fraction_above(&self, threshold: f64) -> f64 {
        1.0 - self.cdf(threshold)
    }
}

pub fn ecdf(values: &[f64]) -> Result<Ecdf> {
    if values.is_empty() {
        return Err(Error::invalid("ECDF of an empty sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("ECDF input contains NaN"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut steps: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match steps.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => steps.push((v, frac)),
        }
    }
    Ok(Ecdf { sorted, steps })
}

/// Parameters of the synthetic full-day series.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_snapshots: usize,
    pub n_antennas: usize,
    /// Exact fraction of the series (snapshot 0 included) whose recurrence
    /// correlation exceeds `threshold`.
    pub fraction_above: f64,
    pub threshold: f64,
    /// Seconds between snapshots.
    pub interval_s: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_snapshots: 1000,
            n_antennas: 4,
            fraction_above: 0.91,
            threshold: 0.9,
            interval_s: 28.8,
        }
    }
}

/// Synthetic recurrence series: a static CN(0, 1) channel with small
/// perturbations, interrupted by blockage dips.
///
/// Stable snapshots are `h + e` with `||e|| <= r ||h||`, which keeps
/// `delta >= sqrt(1 - r^2)`; `r` is chosen so that this bound clears the
/// threshold. Dips mix `h` with an orthogonal component to place `delta`
/// uniformly in `[0.2, threshold - 0.05]`. Exactly
/// `round(fraction_above * n)` snapshots stay above the threshold.
pub fn synthetic_series<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<SnapshotSeries> {
    let (n, m) = (spec.n_snapshots, spec.n_antennas);
    if n == 0 || m < 2 {
        return Err(Error::invalid("synthetic series needs >= 1 snapshot and >= 2 antennas"));
    }
    if !(0.0..=1.0).contains(&spec.fraction_above) || !(spec.threshold > 0.25 && spec.threshold < 1.0) {
        return Err(Error::invalid("fraction must be in [0, 1] and threshold in (0.25, 1)"));
    }
    let n_above = ((spec.fraction_above * n as f64).round() as usize).max(1);
    let h: Vec<c64> = (0..m).map(|_| cn_sample(rng, 1.0)).collect();
    let h_norm = norm2(h.iter().copied()).sqrt();
    let r_max = (1.0 - spec.threshold * spec.threshold).sqrt() * 0.9;

    // dips at random positions, snapshot 0 is the reference
    let n_dips = n - n_above;
    let dips: std::collections::HashSet<usize> = rand::seq::index::sample(rng, n - 1, n_dips)
        .into_iter()
        .map(|i| i + 1)
        .collect();

    let mut snapshots = Vec::with_capacity(n);
    for j in 0..n {
        if j == 0 {
            snapshots.push(h.clone());
        } else if dips.contains(&j) {
            let target = 0.2 + rng.random::<f64>() * (spec.threshold - 0.05 - 0.2);
            let u = orthogonal_unit(&h, rng);
            let phase = c64::from_polar(1.0, rng.random::<f64>() * TAU);
            let (a, b) = (target, (1.0 - target * target).sqrt());
            snapshots.push(
                h.iter()
                    .zip(&u)
                    .map(|(hi, ui)| phase * (a * hi + b * h_norm * ui))
                    .collect(),
            );
        } else {
            let e: Vec<c64> = (0..m).map(|_| cn_sample(rng, 1.0)).collect();
            let r = rng.random::<f64>() * r_max;
            let scale = r * h_norm / norm2(e.iter().copied()).sqrt();
            snapshots.push(h.iter().zip(&e).map(|(hi, ei)| hi + scale * ei).collect());
        }
    }
    let timestamps = (0..n).map(|j| j as f64 * spec.interval_s).collect();
    SnapshotSeries::new(snapshots, Some(timestamps), "synthetic")
}

fn orthogonal_unit<R: Rng + ?Sized>(h: &[c64], rng: &mut R) -> Vec<c64> {
    let hh = norm2(h.iter().copied());
    loop {
        let x: Vec<c64> = h.iter().map(|_| cn_sample(rng, 1.0)).collect();
        let proj: c64 = h.iter().zip(&x).map(|(a, b)| a.conj() * b).sum::<c64>() / hh;
        let u: Vec<c64> = x.iter().zip(h).map(|(xi, hi)| xi - proj * hi).collect();
        let nu = norm2(u.iter().copied()).sqrt();
        if nu > 1e-6 {
            return u.into_iter().map(|z| z / nu).collect();
        }
    }
}

/// Parses snapshot CSV text. `path` only labels error messages.
pub fn parse_snapshot_csv(text: &str, path: &Path) -> Result<SnapshotSeries> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or_else(|| err(1, "empty snapshot file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let has_ts = cols.first().is_some_and(|c| c.eq_ignore_ascii_case("timestamp"));
    let n_values = cols.len() - usize::from(has_ts);
    if n_values == 0 || !n_values.is_multiple_of(2) {
        return Err(err(
            hline + 1,
            format!("expected re/im column pairs after the optional timestamp, got {n_values} columns"),
        ));
    }
    for (a, pair) in cols[usize::from(has_ts)..].chunks(2).enumerate() {
        let (re, im) = (format!("a{a}_re"), format!("a{a}_im"));
        if !pair[0].eq_ignore_ascii_case(&re) || !pair[1].eq_ignore_ascii_case(&im) {
            return Err(err(
                hline + 1,
                format!("expected header columns `{re},{im}`, got `{},{}`", pair[0], pair[1]),
            ));
        }
    }
    let m = n_values / 2;
    let mut snapshots = Vec::new();
    let mut timestamps = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(err(
                i + 1,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(i + 1, format!("not a number: `{s}`")));
        if has_ts {
            timestamps.push(num(fields[0])?);
        }
        let vals = &fields[usize::from(has_ts)..];
        let mut snap = Vec::with_capacity(m);
        for pair in vals.chunks(2) {
            snap.push(c64::new(num(pair[0])?, num(pair[1])?));
        }
        snapshots.push(snap);
    }
    if snapshots.is_empty() {
        return Err(err(hline + 1, "no snapshot rows after the header".into()));
    }
    let node = path
        .file_stem()
        .map_or_else(|| "node".to_string(), |s| s.to_string_lossy().into_owned());
    SnapshotSeries::new(snapshots, has_ts.then_some(timestamps), node)
}

pub fn read_snapshot_csv(path: &Path) -> Result<SnapshotSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_snapshot_csv(&text, path)
}

pub fn snapshot_csv(series: &SnapshotSeries) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = Vec::new();
    if series.timestamps.is_some() {
        header.push("timestamp".into());
    }
    for a in 0..series.n_antennas() {
        header.push(format!("a{a}_re"));
        header.push(format!("a{a}_im"));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for (j, snap) in series.snapshots.iter().enumerate() {
        let mut row: Vec<String> = Vec::with_capacity(1 + 2 * snap.len());
        if let Some(ts) = &series.timestamps {
            row.push(ts[j].to_string());
        }
        for z in snap {
            row.push(z.re.to_string());
            row.push(z.im.to_string());
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn rand_vec(m: usize, seed: u64) -> Vec<c64> {
        let mut rng = seeded(seed);
        (0..m).map(|_| cn_sample(&mut rng, 1.0)).collect()
    }

    #[test]
    fn correlation_basics() {
        let h = rand_vec(8, 1);
        assert!((correlation(&h, &h).unwrap() - 1.0).abs() < 1e-12);
        let c = c64::new(-2.0, 0.7);
        let scaled: Vec<c64> = h.iter().map(|z| c * z).collect();
        assert!((correlation(&h, &scaled).unwrap() - 1.0).abs() < 1e-12);
        let e0 = [c64::new(1.0, 0.0), c64::new(0.0, 0.0)];
        let e1 = [c64::new(0.0, 0.0), c64::new(0.0, 3.0)];
        assert_eq!(correlation(&e0, &e1).unwrap(), 0.0);
        assert!(correlation(&e0, &[c64::new(0.0, 0.0); 2]).is_err());
        assert!(correlation(&e0, &h).is_err());
    }

    #[test]
    fn recurrence_of_constant_series() {
        let h = rand_vec(4, 2);
        let s = SnapshotSeries::new(vec![h.clone(); 5], None, "n").unwrap();
        let r = recurrence_series(&s).unwrap();
        assert!(r.iter().all(|d| (d.unwrap() - 1.0).abs() < 1e-12));
        let one = SnapshotSeries::new(vec![h], None, "n").unwrap();
        assert_eq!(recurrence_series(&one).unwrap(), vec![Some(1.0)]);
    }

    #[test]
    fn recurrence_marks_zero_snapshots_missing() {
        let h = rand_vec(3, 3);
        let s = SnapshotSeries::new(vec![h.clone(), vec![c64::new(0.0, 0.0); 3], h], None, "n").unwrap();
        let r = recurrence_series(&s).unwrap();
        assert_eq!(r[1], None);
        assert!(r[2].is_some());
    }

    #[test]
    fn bounded_perturbation_stays_above_point_nine() {
        // ||e_j|| = 0.1 ||h||  =>  delta >= sqrt(1 - 0.01)
        let h = rand_vec(16, 4);
        let hn = norm2(h.iter().copied()).sqrt();
        let mut snaps = vec![h.clone()];
        for j in 0..200 {
            let n = rand_vec(16, 100 + j);
            let s = 0.1 * hn / norm2(n.iter().copied()).sqrt();
            snaps.push(h.iter().zip(&n).map(|(a, b)| a + s * b).collect());
        }
        let series = SnapshotSeries::new(snaps, None, "p").unwrap();
        for d in recurrence_series(&series).unwrap() {
            assert!(d.unwrap() >= 0.99f64.sqrt() - 1e-12);
        }
    }

    #[test]
    fn ecdf_steps() {
        let e = ecdf(&[1.0, 0.5]).unwrap();
        assert_eq!(e.steps(), &[(0.5, 0.5), (1.0, 1.0)]);
        let e = ecdf(&[0.3; 4]).unwrap();
        assert_eq!(e.steps(), &[(0.3, 1.0)]);
        assert!(ecdf(&[]).is_err());
        let e = ecdf(&[0.95, 0.2, 0.91, 0.9]).unwrap();
        assert_eq!(e.fraction_above(0.9), 0.5);
    }

    #[test]
    fn synthetic_fraction_is_exact() {
        for (frac, seed) in [(0.91, 1), (0.95, 2)] {
            let spec = SyntheticSpec {
                fraction_above: frac,
                ..SyntheticSpec::default()
            };
            let s = synthetic_series(&spec, &mut seeded(seed)).unwrap();
            let d: Vec<f64> = recurrence_series(&s).unwrap().into_iter().map(Option::unwrap).collect();
            assert!((ecdf(&d).unwrap().fraction_above(0.9) - frac).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let spec = SyntheticSpec {
            n_snapshots: 20,
            n_antennas: 3,
            ..SyntheticSpec::default()
        };
        let s = synthetic_series(&spec, &mut seeded(8)).unwrap();
        let text = snapshot_csv(&s);
        let back = parse_snapshot_csv(&text, Path::new("synthetic.csv")).unwrap();
        assert_eq!(back.snapshots, s.snapshots);
        assert_eq!(back.timestamps, s.timestamps);

        let no_ts = "a0_re,a0_im\n1,0\n0.5,0.5\n";
        let p = parse_snapshot_csv(no_ts, Path::new("x.csv")).unwrap();
        assert!(p.timestamps.is_none());
        assert_eq!(p.len(), 2);

        let ragged = "timestamp,a0_re,a0_im,a1_re,a1_im\n0,1,0,1,0\n1,1,0,1\n";
        let e = parse_snapshot_csv(ragged, Path::new("r.csv")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let bad = "timestamp,a0_re,a0_im\n0,1,zz\n";
        assert!(matches!(
            parse_snapshot_csv(bad, Path::new("b.csv")),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad_header = "time,x,y\n";
        assert!(matches!(
            parse_snapshot_csv(bad_header, Path::new("h.csv")),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
