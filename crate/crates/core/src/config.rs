//! Scenario configuration files.
//!
//! The native format is a flat `key = value` text file, one entry per line,
//! `#` starting a comment. Every key has a default, so an empty file is the
//! reference scenario. A `summary.json` written by `simulate` is also
//! accepted: its `scenario` object uses the same keys.
//!
//! | key | unit |
//! |-----|------|
//! | `mode` | `co-located` / `cell-free` |
//! | `m_total` | total antennas `M` |
//! | `n_aps` | APs (1 when co-located, `M` when cell-free) |
//! | `k_devices`, `tau_p`, `n_sim`, `v_points` | counts |
//! | `rho_mw` / `rho_dbm` | device transmit power |
//! | `sigma2_dbm` | noise power |
//! | `epsilon_a` | activity probability |
//! | `area_m` | side of the square area |
//! | `seed` | 64-bit master seed |
//! | `v_min`, `v_max` | threshold-scale sweep range |
//! | `carrier_hz`, `ap_height_m`, `device_height_min_m`, `device_height_max_m`, `redraw_pilots` | misc |

use std::path::Path;

use serde_json::{Map, Value};

use crate::geometry::DeploymentMode;
use crate::harness::Scenario;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Maps aliases onto canonical key names.
pub fn canonical_key(key: &str) -> String {
    let k = key.trim().to_ascii_lowercase().replace('-', "_");
    match k.as_str() {
        "m" => "m_total".into(),
        "k" => "k_devices".into(),
        "master_seed" => "seed".into(),
        "area_side" | "area" => "area_m".into(),
        "rho" => "rho_mw".into(),
        "sigma2" => "sigma2_dbm".into(),
        _ => k,
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| Error::config(key, format!("cannot parse `{}`: {e}", value.trim())))
}

/// Applies one `key = value` setting.
pub fn apply_key(s: &mut Scenario, key: &str, value: &str) -> Result<()> {
    let key = canonical_key(key);
    let k = key.as_str();
    match k {
        "mode" => s.mode = value.parse().map_err(|e: Error| Error::config(k, e.to_string()))?,
        "m_total" => s.m_total = parse(k, value)?,
        "n_aps" => {
            let n: usize = parse(k, value)?;
            match s.mode {
                DeploymentMode::CoLocated if n != 1 => {
                    return Err(Error::config(
                        k,
                        format!("a co-located deployment has exactly one AP, got {n}"),
                    ));
                }
                DeploymentMode::CoLocated => {}
                DeploymentMode::CellFree => s.m_total = n,
            }
        }
        "k_devices" => s.k_devices = parse(k, value)?,
        "tau_p" => s.tau_p = parse(k, value)?,
        "rho_mw" => s.rho_mw = parse(k, value)?,
        "rho_dbm" => s.rho_mw = 10f64.powf(parse::<f64>(k, value)? / 10.0),
        "sigma2_dbm" => s.sigma2_dbm = parse(k, value)?,
        "epsilon_a" => s.epsilon_a = parse(k, value)?,
        "area_m" => s.area_side = parse(k, value)?,
        "n_sim" => s.n_sim = parse(k, value)?,
        "seed" => s.master_seed = parse(k, value)?,
        "v_min" => s.v_min = parse(k, value)?,
        "v_max" => s.v_max = parse(k, value)?,
        "v_points" => s.v_points = parse(k, value)?,
        "carrier_hz" => s.carrier_hz = parse(k, value)?,
        "ap_height_m" => s.ap_height = parse(k, value)?,
        "device_height_min_m" => s.device_height.0 = parse(k, value)?,
        "device_height_max_m" => s.device_height.1 = parse(k, value)?,
        "redraw_pilots" => s.redraw_pilots = parse(k, value)?,
        _ => return Err(Error::config(k, "unknown configuration key")),
    }
    Ok(())
}

/// Applies settings with `mode` first and `n_aps` last, so that the AP
/// count is checked against the final mode.
pub fn apply_all(s: &mut Scenario, pairs: &[(String, String)]) -> Result<()> {
    let rank = |k: &str| match canonical_key(k).as_str() {
        "mode" => 0,
        "n_aps" => 2,
        _ => 1,
    };
    let mut ordered: Vec<&(String, String)> = pairs.iter().collect();
    ordered.sort_by_key(|(k, _)| rank(k));
    for (k, v) in ordered {
        apply_key(s, k, v)?;
    }
    Ok(())
}

/// Canonical echo of a scenario; re-applying it reproduces the scenario exactly.
pub fn scenario_pairs(s: &Scenario) -> Vec<(&'static str, Value)> {
    vec![
        ("mode", Value::from(s.mode.as_str())),
        ("m_total", Value::from(s.m_total)),
        ("n_aps", Value::from(s.n_aps())),
        ("k_devices", Value::from(s.k_devices)),
        ("tau_p", Value::from(s.tau_p)),
        ("rho_mw", Value::from(s.rho_mw)),
        ("sigma2_dbm", Value::from(s.sigma2_dbm)),
        ("epsilon_a", Value::from(s.epsilon_a)),
        ("area_m", Value::from(s.area_side)),
        ("n_sim", Value::from(s.n_sim)),
        ("seed", Value::from(s.master_seed)),
        ("v_min", Value::from(s.v_min)),
        ("v_max", Value::from(s.v_max)),
        ("v_points", Value::from(s.v_points)),
        ("carrier_hz", Value::from(s.carrier_hz)),
        ("ap_height_m", Value::from(s.ap_height)),
        ("device_height_min_m", Value::from(s.device_height.0)),
        ("device_height_max_m", Value::from(s.device_height.1)),
        ("redraw_pilots", Value::from(s.redraw_pilots)),
    ]
}

pub fn scenario_json(s: &Scenario) -> Value {
    Value::Object(
        scenario_pairs(s)
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect::<Map<_, _>>(),
    )
}

/// Flat text form of a scenario.
pub fn to_config_text(s: &Scenario) -> String {
    let mut out = String::new();
    for (k, v) in scenario_pairs(s) {
        let v = match v {
            Value::String(s) => s,
            other => other.to_string(),
        };
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

/// Parses flat `key = value` text on top of the defaults.
pub fn parse_text(text: &str) -> Result<Scenario> {
    let mut pairs = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=').or_else(|| line.split_once(':')) else {
            return Err(Error::config(
                format!("line {}", n + 1),
                format!("expected `key = value`, got `{line}`"),
            ));
        };
        let key = canonical_key(k);
        if let Some(prev) = seen.insert(key.clone(), n + 1) {
            return Err(Error::config(
                key,
                format!("duplicate key (lines {prev} and {})", n + 1),
            ));
        }
        pairs.push((key, v.trim().to_string()));
    }
    let mut s = Scenario::default();
    apply_all(&mut s, &pairs).map_err(|e| with_line(e, &seen))?;
    Ok(s)
}

fn with_line(e: Error, lines: &std::collections::HashMap<String, usize>) -> Error {
    match e {
        Error::Config { field, message } => match lines.get(&field) {
            Some(l) => Error::Config {
                message: format!("line {l}: {message}"),
                field,
            },
            None => Error::Config { field, message },
        },
        other => other,
    }
}

/// Parses a JSON document: either a `summary.json` (settings under
/// `scenario`) or a bare object of settings.
pub fn parse_json(text: &str) -> Result<Scenario> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::config("<json>", e.to_string()))?;
    let obj = match doc.get("scenario") {
        Some(Value::Object(o)) => o,
        Some(_) => return Err(Error::config("scenario", "expected an object")),
        None => doc
            .as_object()
            .ok_or_else(|| Error::config("<json>", "expected an object"))?,
    };
    let mut pairs = Vec::with_capacity(obj.len());
    for (k, v) in obj {
        let text = match v {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            Value::Bool(b) => b.to_string(),
            _ => {
                return Err(Error::config(
                    format!("scenario.{k}"),
                    "expected a string, number or boolean",
                ))
            }
        };
        pairs.push((k.clone(), text));
    }
    let mut s = Scenario::default();
    apply_all(&mut s, &pairs).map_err(|e| match e {
        Error::Config { field, message } => Error::Config {
            field: format!("scenario.{field}"),
            message,
        },
        other => other,
    })?;
    Ok(s)
}

pub fn parse_config(text: &str) -> Result<Scenario> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_text(text)
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, format!("cannot read config: {e}")))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(parse_text("").unwrap(), Scenario::default());
        assert_eq!(parse_text("# nothing\n\n").unwrap(), Scenario::default());
    }

    #[test]
    fn keys_and_units() {
        let s = parse_text(
            "mode = co-located\nm_total = 32\nrho_dbm = 10\nsigma2_dbm=-100\nseed: 99\narea_m = 1000 # bigger",
        )
        .unwrap();
        assert_eq!(s.mode, DeploymentMode::CoLocated);
        assert_eq!(s.m_total, 32);
        assert!((s.rho_mw - 10.0).abs() < 1e-12);
        assert_eq!(s.sigma2_dbm, -100.0);
        assert_eq!(s.master_seed, 99);
        assert_eq!(s.area_side, 1000.0);
    }

    #[test]
    fn n_aps_rules() {
        let s = parse_text("n_aps = 32\nmode = cell-free").unwrap();
        assert_eq!(s.m_total, 32);
        let e = parse_text("mode = co-located\nn_aps = 4").unwrap_err();
        assert!(matches!(e, Error::Config { ref field, .. } if field == "n_aps"), "{e}");
    }

    #[test]
    fn errors_name_field_and_line() {
        let e = parse_text("k_devices = 10\nrho_mw = lots").unwrap_err();
        assert_eq!(
            e.to_string(),
            "config error at `rho_mw`: line 2: cannot parse `lots`: invalid float literal"
        );
        assert!(parse_text("bogus = 1").is_err());
        assert!(parse_text("no separator").is_err());
        assert!(parse_text("seed = 1\nseed = 2").is_err());
    }

    #[test]
    fn text_round_trip() {
        let s = Scenario {
            mode: DeploymentMode::CoLocated,
            m_total: 48,
            rho_mw: 0.1 + 0.2,
            sigma2_dbm: -122.88,
            master_seed: u64::MAX,
            redraw_pilots: true,
            ..Scenario::default()
        };
        assert_eq!(parse_text(&to_config_text(&s)).unwrap(), s);
    }

    #[test]
    fn json_round_trip() {
        let s = Scenario {
            epsilon_a: 0.2,
            rho_mw: 25.0,
            master_seed: 1 << 60,
            ..Scenario::default()
        };
        let doc = serde_json::json!({ "schema_version": 1, "scenario": scenario_json(&s), "roc": [] });
        assert_eq!(parse_config(&doc.to_string()).unwrap(), s);
        let e = parse_json(r#"{"scenario": {"tau_p": "x"}}"#).unwrap_err();
        assert!(matches!(e, Error::Config { ref field, .. } if field == "scenario.tau_p"));
    }
}
