//! AP and device placement.
//!
//! Positions are in meters inside a square of side `area_side`; `z` is the
//! antenna height above ground.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_AREA_SIDE_M: f64 = 500.0;
pub const DEFAULT_AP_HEIGHT_M: f64 = 29.0;
pub const DEFAULT_DEVICE_HEIGHT_M: (f64, f64) = (1.0, 4.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeploymentMode {
    /// One multi-antenna array at the center of the area.
    CoLocated,
    /// `N` single-antenna APs spread over a grid.
    CellFree,
}

impl DeploymentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DeploymentMode::CoLocated => "co-located",
            DeploymentMode::CellFree => "cell-free",
        }
    }
}

impl std::str::FromStr for DeploymentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "co-located" | "colocated" => Ok(DeploymentMode::CoLocated),
            "cell-free" | "cellfree" => Ok(DeploymentMode::CellFree),
            other => Err(Error::invalid(format!(
                "unknown deployment mode `{other}` (expected co-located or cell-free)"
            ))),
        }
    }
}

impl std::fmt::Display for DeploymentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub mode: DeploymentMode,
    pub ap_positions: Vec<Position>,
    pub device_positions: Vec<Position>,
    pub area_side: f64,
}

impl Deployment {
    /// Checks the layout invariants: everything inside the square, exactly
    /// one AP site when co-located, distinct AP sites when cell-free.
    pub fn new(
        mode: DeploymentMode,
        ap_positions: Vec<Position>,
        device_positions: Vec<Position>,
        area_side: f64,
    ) -> Result<Self> {
        if !(area_side > 0.0) {
            return Err(Error::invalid("area side must be positive"));
        }
        let inside = |p: &Position| (0.0..=area_side).contains(&p.x) && (0.0..=area_side).contains(&p.y);
        if !ap_positions.iter().chain(&device_positions).all(inside) {
            return Err(Error::invalid("position outside the deployment area"));
        }
        match mode {
            DeploymentMode::CoLocated if ap_positions.len() != 1 => {
                return Err(Error::invalid("co-located deployment needs exactly one AP site"));
            }
            DeploymentMode::CellFree => {
                if ap_positions.is_empty() {
                    return Err(Error::invalid("cell-free deployment needs at least one AP"));
                }
                for (i, a) in ap_positions.iter().enumerate() {
                    if ap_positions[..i].contains(a) {
                        return Err(Error::invalid("cell-free AP positions must be distinct"));
                    }
                }
            }
            _ => {}
        }
        Ok(Self {
            mode,
            ap_positions,
            device_positions,
            area_side,
        })
    }

    pub fn n_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn n_devices(&self) -> usize {
        self.device_positions.len()
    }
}

/// Side length (in cells) of the AP grid for `n_aps` APs.
pub fn grid_side(n_aps: usize) -> usize {
    let mut g = (n_aps as f64).sqrt().ceil() as usize;
    // guard against sqrt rounding on perfect squares
    while g * g < n_aps {
        g += 1;
    }
    while g > 1 && (g - 1) * (g - 1) >= n_aps {
        g -= 1;
    }
    g
}

/// Places `n_aps` APs.
///
/// A single AP sits in the center of the area. Otherwise the area is cut
/// into a `ceil(sqrt(N))` by `ceil(sqrt(N))` grid and `N` distinct cells are
/// picked uniformly without replacement; each AP sits at its cell center.
pub fn place_aps<R: Rng + ?Sized>(n_aps: usize, area_side: f64, ap_height: f64, rng: &mut R) -> Result<Vec<Position>> {
    if n_aps == 0 {
        return Err(Error::invalid("n_aps must be at least 1"));
    }
    if !(area_side > 0.0) {
        return Err(Error::invalid("area side must be positive"));
    }
    if n_aps == 1 {
        return Ok(vec![Position::new(area_side / 2.0, area_side / 2.0, ap_height)]);
    }
    let g = grid_side(n_aps);
    let cell = area_side / g as f64;
    let cells = index::sample(rng, g * g, n_aps);
    Ok(cells
        .into_iter()
        .map(|c| {
            let (row, col) = (c / g, c % g);
            Position::new((col as f64 + 0.5) * cell, (row as f64 + 0.5) * cell, ap_height)
        })
        .collect())
}

/// Uniform device drop over the square with uniform heights in `height_range`.
pub fn place_devices<R: Rng + ?Sized>(
    k: usize,
    area_side: f64,
    height_range: (f64, f64),
    rng: &mut R,
) -> Result<Vec<Position>> {
    if k == 0 {
        return Err(Error::invalid("device count must be at least 1"));
    }
    if !(area_side > 0.0) {
        return Err(Error::invalid("area side must be positive"));
    }
    let (lo, hi) = height_range;
    if !(lo <= hi) {
        return Err(Error::invalid("device height range is empty"));
    }
    Ok((0..k)
        .map(|_| {
            let x = rng.random::<f64>() * area_side;
            let y = rng.random::<f64>() * area_side;
            let u = rng.random::<f64>();
            let z = if lo == hi { lo } else { lo + u * (hi - lo) };
            Position::new(x, y, z)
        })
        .collect())
}

pub fn link_distance(a: &Position, b: &Position) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}
