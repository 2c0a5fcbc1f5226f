//! Spatial grids, incident wave packets and their shape diagnostics.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{fft_wavenumbers, FftPair};

/// Uniform periodic-style grid: `x_i = x_min + i·dx` for `i < n_points`, with
/// `dx = (x_max - x_min) / n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        let grid = GridSpec { x_min, x_max, n_points };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid with spacing `dx` and `n_points` points whose first point is
    /// `-left_points·dx`, so the origin is always a grid point.
    pub fn anchored(dx: f64, left_points: usize, n_points: usize) -> Result<Self> {
        let x_min = -(left_points as f64) * dx;
        GridSpec::new(x_min, x_min + n_points as f64 * dx, n_points)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min) {
            return Err(Error::config(format!(
                "grid needs x_max > x_min, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if self.n_points < 16 {
            return Err(Error::config(format!("grid needs at least 16 points, got {}", self.n_points)));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn position(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.position(i)).collect()
    }

    /// Index of the grid point nearest `x`, clamped into the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let raw = ((x - self.x_min) / self.dx()).round();
        raw.clamp(0.0, (self.n_points - 1) as f64) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PacketShape {
    /// Rectangle with raised-cosine edges. Each edge ramp is
    /// `taper_fraction · width` long and centred on the nominal edge, so the
    /// envelope is flat over `(1 - taper_fraction)` of the width and passes
    /// through half amplitude at `x₀ ± w/2`.
    FlatTop { taper_fraction: f64 },
    /// `|ψ|² ∝ exp(-(x - x₀)²/σ²)`.
    Gaussian { sigma: f64 },
}

impl PacketShape {
    pub const DEFAULT_TAPER: f64 = 0.1;
}

/// Incident packet: envelope times `e^{ik₀x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub center_x0: f64,
    pub width_wi: f64,
    pub k0: f64,
    pub shape: PacketShape,
}

/// Width-to-wavelength ratio below which a flat-top packet no longer looks
/// like a plane wave locally.
const FLAT_TOP_MIN_WAVELENGTHS: f64 = 20.0;

/// Gaussian envelopes are treated as supported on `x₀ ± GAUSSIAN_SUPPORT·σ`.
const GAUSSIAN_SUPPORT: f64 = 8.0;

impl PacketSpec {
    pub fn flat_top(center_x0: f64, width_wi: f64, k0: f64) -> Self {
        PacketSpec {
            center_x0,
            width_wi,
            k0,
            shape: PacketShape::FlatTop {
                taper_fraction: PacketShape::DEFAULT_TAPER,
            },
        }
    }

    /// Gaussian packet; `width_wi` is set to the equivalent-rectangle width
    /// `σ√(2π)`.
    pub fn gaussian(center_x0: f64, sigma: f64, k0: f64) -> Self {
        PacketSpec {
            center_x0,
            width_wi: sigma * (2.0 * PI).sqrt(),
            k0,
            shape: PacketShape::Gaussian { sigma },
        }
    }

    pub fn wavelength(&self) -> f64 {
        2.0 * PI / self.k0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_wi.is_finite() && self.width_wi > 0.0) {
            return Err(Error::config(format!("packet width must be positive, got {}", self.width_wi)));
        }
        if !(self.k0.is_finite() && self.k0 > 0.0) {
            return Err(Error::config(format!("k0 must be positive, got {}", self.k0)));
        }
        if !self.center_x0.is_finite() {
            return Err(Error::config("packet centre must be finite"));
        }
        match self.shape {
            PacketShape::FlatTop { taper_fraction } => {
                if !(taper_fraction > 0.0 && taper_fraction <= 0.5) {
                    return Err(Error::config(format!(
                        "taper_fraction must lie in (0, 0.5], got {taper_fraction}"
                    )));
                }
                let ratio = self.width_wi / self.wavelength();
                if ratio < FLAT_TOP_MIN_WAVELENGTHS {
                    log::warn!(
                        "flat-top packet spans only {ratio:.1} wavelengths; \
                         it will not behave like a plane wave locally"
                    );
                }
            }
            PacketShape::Gaussian { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::config(format!("gaussian sigma must be positive, got {sigma}")));
                }
            }
        }
        Ok(())
    }

    /// Half-length of the region where the envelope is non-negligible.
    pub fn support_half_width(&self) -> f64 {
        match self.shape {
            PacketShape::FlatTop { taper_fraction } => 0.5 * self.width_wi * (1.0 + taper_fraction),
            PacketShape::Gaussian { sigma } => GAUSSIAN_SUPPORT * sigma,
        }
    }

    pub fn envelope(&self, x: f64) -> f64 {
        let s = (x - self.center_x0).abs();
        match self.shape {
            PacketShape::FlatTop { taper_fraction } => {
                let ramp = taper_fraction * self.width_wi;
                let flat_end = 0.5 * (self.width_wi - ramp);
                if s <= flat_end {
                    1.0
                } else if s >= flat_end + ramp {
                    0.0
                } else {
                    0.5 * (1.0 + (PI * (s - flat_end) / ramp).cos())
                }
            }
            PacketShape::Gaussian { sigma } => (-0.5 * (s / sigma).powi(2)).exp(),
        }
    }
}

/// Complex field sampled on a grid at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub grid: GridSpec,
    pub psi: Vec<Complex64>,
    pub time: f64,
}

impl WaveState {
    pub fn new(grid: GridSpec, psi: Vec<Complex64>, time: f64) -> Result<Self> {
        grid.validate()?;
        if psi.len() != grid.n_points {
            return Err(Error::config(format!(
                "field has {} samples but the grid has {} points",
                psi.len(),
                grid.n_points
            )));
        }
        if psi.iter().any(|z| !z.is_finite()) {
            return Err(Error::domain("field contains non-finite samples"));
        }
        Ok(WaveState { grid, psi, time })
    }

    /// `∑|ψ|² dx`
    pub fn norm(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn mean_position(&self) -> f64 {
        let dx = self.grid.dx();
        let weighted: f64 = self
            .psi
            .iter()
            .enumerate()
            .map(|(i, z)| self.grid.position(i) * z.norm_sqr())
            .sum();
        weighted * dx / self.norm()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let norm = self.norm();
        if !(norm > 0.0) {
            return Err(Error::domain("cannot normalise a zero field"));
        }
        let scale = 1.0 / norm.sqrt();
        self.psi.iter_mut().for_each(|z| *z *= scale);
        Ok(())
    }
}

/// Samples the packet on the grid and normalises it to unit probability.
pub fn build_packet(grid: GridSpec, spec: &PacketSpec) -> Result<WaveState> {
    grid.validate()?;
    spec.validate()?;
    let half = spec.support_half_width();
    let (lo, hi) = (spec.center_x0 - half, spec.center_x0 + half);
    if lo <= grid.x_min || hi >= grid.x_max {
        return Err(Error::Construction(format!(
            "packet support [{lo}, {hi}] does not fit strictly inside the grid [{}, {}]",
            grid.x_min, grid.x_max
        )));
    }
    let psi = (0..grid.n_points)
        .map(|i| {
            let x = grid.position(i);
            let env = spec.envelope(x);
            if env == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::from_polar(env, spec.k0 * x)
            }
        })
        .collect();
    let mut state = WaveState::new(grid, psi, 0.0)?;
    state.normalize()?;
    Ok(state)
}

/// Width of the rectangle with the same norm and the same `∫|ψ|⁴`, i.e.
/// `(∑|ψ|²dx)² / ∑|ψ|⁴dx`. Exact for a rectangular envelope.
pub fn effective_width(state: &WaveState) -> Result<f64> {
    weighted_effective_width(state, |_| 1.0)
}

/// Effective width with each sample weighted by `weight(i)` in both sums.
pub(crate) fn weighted_effective_width(
    state: &WaveState,
    weight: impl Fn(usize) -> f64,
) -> Result<f64> {
    let (mut p2, mut p4) = (0.0, 0.0);
    for (i, z) in state.psi.iter().enumerate() {
        let w = weight(i);
        if w == 0.0 {
            continue;
        }
        let d = z.norm_sqr();
        p2 += w * d;
        p4 += w * d * d;
    }
    if !(p4 > 0.0) {
        return Err(Error::domain("effective width of a zero field is undefined"));
    }
    let dx = state.grid.dx();
    Ok(p2 * p2 * dx / p4)
}

/// Momentum-space density `|ψ̃(k)|²` on the DFT wavenumber axis, normalised so
/// `∑ density · dk = ∑|ψ|² dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumSpectrum {
    /// Ascending wavenumbers.
    pub wavenumbers: Vec<f64>,
    pub density: Vec<f64>,
    pub dk: f64,
    pub centroid: f64,
    /// RMS spread about the centroid.
    pub spread: f64,
}

pub fn momentum_spectrum(state: &WaveState) -> MomentumSpectrum {
    let n = state.grid.n_points;
    let dx = state.grid.dx();
    let mut data = state.psi.clone();
    FftPair::new(n).forward(&mut data);
    let ks = fft_wavenumbers(n, dx);
    let scale = dx * dx / (2.0 * PI);

    let mut pairs: Vec<(f64, f64)> = ks
        .into_iter()
        .zip(data.iter().map(|z| z.norm_sqr() * scale))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (wavenumbers, density): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();

    let total: f64 = density.iter().sum();
    let centroid = if total > 0.0 {
        wavenumbers.iter().zip(&density).map(|(k, d)| k * d).sum::<f64>() / total
    } else {
        0.0
    };
    let variance = if total > 0.0 {
        wavenumbers
            .iter()
            .zip(&density)
            .map(|(k, d)| (k - centroid).powi(2) * d)
            .sum::<f64>()
            / total
    } else {
        0.0
    };
    MomentumSpectrum {
        wavenumbers,
        density,
        dk: 2.0 * PI / (n as f64 * dx),
        centroid,
        spread: variance.max(0.0).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NarrowbandReport {
    pub passed: bool,
    /// Measured `σ_k / k₀`.
    pub ratio: f64,
    pub spread: f64,
    pub centroid: f64,
    pub max_ratio: f64,
}

/// Checks that the packet's momentum spread is small compared with `k₀`.
pub fn require_narrowband(state: &WaveState, k0: f64, max_ratio: f64) -> NarrowbandReport {
    let spectrum = momentum_spectrum(state);
    let ratio = spectrum.spread / k0.abs();
    NarrowbandReport {
        passed: ratio <= max_ratio,
        ratio,
        spread: spectrum.spread,
        centroid: spectrum.centroid,
        max_ratio,
    }
}
