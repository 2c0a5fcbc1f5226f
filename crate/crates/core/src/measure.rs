//! Observables extracted from evolved fields: region probabilities, packet
//! widths, fitted group velocities and probability currents.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{TimingInfo, Trajectory};
use crate::fourier::FftPair;
use crate::packet::{weighted_effective_width, GridSpec, WaveState};
use crate::stationary::{ProbabilityPair, UnitSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Left,
    Right,
}

/// Fraction of each grid cell `[x_i - dx/2, x_i + dx/2]` lying left of
/// `split`.
fn left_fraction(grid: &GridSpec, split: f64) -> impl Fn(usize) -> f64 {
    let edge = (split - grid.x_min) / grid.dx() + 0.5;
    move |i| (edge - i as f64).clamp(0.0, 1.0)
}

fn region_weight(grid: &GridSpec, split: f64, region: Region) -> impl Fn(usize) -> f64 {
    let left = left_fraction(grid, split);
    move |i| match region {
        Region::Left => left(i),
        Region::Right => 1.0 - left(i),
    }
}

/// `(∑_{x<split} |ψ|²dx, ∑_{x>split} |ψ|²dx)`, the cell containing `split`
/// shared in proportion.
pub fn region_probabilities(state: &WaveState, split: f64) -> (f64, f64) {
    let left = left_fraction(&state.grid, split);
    let (mut p_left, mut p_right) = (0.0, 0.0);
    for (i, z) in state.psi.iter().enumerate() {
        let d = z.norm_sqr();
        let f = left(i);
        p_left += f * d;
        p_right += (1.0 - f) * d;
    }
    let dx = state.grid.dx();
    (p_left * dx, p_right * dx)
}

/// `⟨x⟩` of the part of the field in `region`, renormalised by that
/// region's probability.
pub fn region_mean_position(state: &WaveState, split: f64, region: Region) -> Option<f64> {
    let weight = region_weight(&state.grid, split, region);
    let (mut mass, mut moment) = (0.0, 0.0);
    for (i, z) in state.psi.iter().enumerate() {
        let w = weight(i) * z.norm_sqr();
        mass += w;
        moment += w * state.grid.position(i);
    }
    (mass > 0.0).then(|| moment / mass)
}

/// Region probability below which widths are not measured.
pub const MIN_REGION_PROBABILITY: f64 = 1e-3;

/// Equivalent-rectangle width of the part of the field in `region`.
pub fn packet_width(state: &WaveState, split: f64, region: Region) -> Result<f64> {
    let (left, right) = region_probabilities(state, split);
    let p = match region {
        Region::Left => left,
        Region::Right => right,
    };
    if p <= MIN_REGION_PROBABILITY {
        return Err(Error::domain(format!(
            "{region:?} region holds only {p:.3e} probability; no packet to measure"
        )));
    }
    weighted_effective_width(state, region_weight(&state.grid, split, region))
}

/// Over a fit window the region's probability may not fall below this
/// fraction of its maximum there: the packet must be wholly formed and not
/// exchanging probability with the other side.
pub const FIT_REGION_FRACTION: f64 = 0.99;
pub const MIN_FIT_SAMPLES: usize = 5;

/// Least-squares slope of the region-conditional `⟨x⟩(t)` over samples with
/// `window.0 ≤ t ≤ window.1`.
pub fn group_velocity_fit(traj: &Trajectory, region: Region, window: (f64, f64)) -> Result<f64> {
    let (probability, means) = match region {
        Region::Left => (&traj.left_probability, &traj.left_mean_positions),
        Region::Right => (&traj.right_probability, &traj.right_mean_positions),
    };
    let inside: Vec<usize> = (0..traj.len())
        .filter(|&i| traj.times[i] >= window.0 && traj.times[i] <= window.1)
        .collect();
    let (lo, hi) = inside.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &i| {
        (lo.min(probability[i]), hi.max(probability[i]))
    });
    if hi > 0.0 && lo < FIT_REGION_FRACTION * hi {
        return Err(Error::domain(format!(
            "{region:?} region probability varies from {lo:.4} to {hi:.4} over [{}, {}]; \
             fit window must exclude the collision",
            window.0, window.1
        )));
    }
    let (ts, xs): (Vec<f64>, Vec<f64>) = inside
        .iter()
        .filter_map(|&i| means[i].map(|x| (traj.times[i], x)))
        .unzip();
    if ts.len() < MIN_FIT_SAMPLES {
        return Err(Error::domain(format!(
            "only {} samples in fit window [{}, {}]; need {MIN_FIT_SAMPLES}",
            ts.len(),
            window.0,
            window.1
        )));
    }
    Ok(least_squares_slope(&ts, &xs))
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mean_x) * (y - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
    }
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentSample {
    pub position: f64,
    pub current: f64,
}

fn grid_interior_index(grid: &GridSpec, position: f64) -> Result<usize> {
    if !(position >= grid.x_min && position < grid.x_max) {
        return Err(Error::domain(format!(
            "position {position} lies outside the grid [{}, {})",
            grid.x_min, grid.x_max
        )));
    }
    let i = grid.nearest_index(position);
    if i == 0 || i + 1 >= grid.n_points {
        return Err(Error::domain(format!("position {position} is on the grid edge")));
    }
    Ok(i)
}

/// `(ħ/m) Im(ψ* ∂ψ/∂x)` from a centred difference.
fn current_at(psi: [Complex64; 3], dx: f64, units: UnitSystem) -> f64 {
    let derivative = (psi[2] - psi[0]) / (2.0 * dx);
    units.hbar / units.mass * (psi[1].conj() * derivative).im
}

/// Probability current at the grid point nearest `position`.
pub fn probability_current(state: &WaveState, position: f64, units: UnitSystem) -> Result<CurrentSample> {
    let i = grid_interior_index(&state.grid, position)?;
    let current = current_at(
        [state.psi[i - 1], state.psi[i], state.psi[i + 1]],
        state.grid.dx(),
        units,
    );
    Ok(CurrentSample {
        position: state.grid.position(i),
        current,
    })
}

/// Currents sampled at one instant: the right-moving (incident) and
/// left-moving (reflected) parts at the left probe, and the total at the
/// right probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentRecord {
    pub time: f64,
    pub incident: f64,
    pub reflected: f64,
    pub transmitted: f64,
}

/// Collects current samples at two fixed probes while a run progresses.
///
/// At the left probe the field is split by the sign of its wavenumber, so
/// the incident and reflected currents can be read separately even while
/// the two waves overlap. The split looks only at a smoothly windowed patch
/// around the probe reaching 80% of the way to the midpoint between the
/// probes: a global split would pick up the potential's kink in `ψ''`,
/// whose influence falls off only as the inverse distance.
#[derive(Debug)]
pub struct CurrentProbe {
    left: usize,
    right: usize,
    grid: GridSpec,
    units: UnitSystem,
    patch_start: usize,
    window: Vec<f64>,
    /// `e^{2πi jm/L}` for the three stencil points `m` at the left probe,
    /// one entry per positive-wavenumber bin `j` of the patch.
    twiddles: [Vec<Complex64>; 3],
    fft: FftPair,
    patch: Vec<Complex64>,
    records: Vec<CurrentRecord>,
}

/// Fraction of the probe-to-midpoint distance the left patch may extend.
const PATCH_REACH: f64 = 0.8;
const MIN_PATCH_HALF_WIDTH: usize = 8;

impl CurrentProbe {
    pub fn new(grid: GridSpec, x_left: f64, x_right: f64, units: UnitSystem) -> Result<Self> {
        if !(x_left < x_right) {
            return Err(Error::domain("left probe must lie left of the right probe"));
        }
        let left = grid_interior_index(&grid, x_left)?;
        let right = grid_interior_index(&grid, x_right)?;
        let reach = PATCH_REACH * 0.5 * (x_right - x_left);
        let half = ((reach / grid.dx()) as usize)
            .min(left)
            .min(grid.n_points - 1 - left);
        if half < MIN_PATCH_HALF_WIDTH {
            return Err(Error::domain("left probe is too close to the grid edge or the right probe"));
        }
        let len = 2 * half + 1;
        // cos⁴ bump: its spectrum falls off as 1/q⁵, so the window itself
        // moves no appreciable weight across k = 0.
        let window = (0..len)
            .map(|i| {
                let s = (i as f64 - half as f64) / (half + 1) as f64;
                (0.5 * std::f64::consts::PI * s).cos().powi(4)
            })
            .collect();
        let positive_bins = (len - 1) / 2;
        let twiddle = |m: usize| {
            (1..=positive_bins)
                .map(|j| {
                    let turns = ((j * m) % len) as f64 / len as f64;
                    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * turns)
                })
                .collect::<Vec<_>>()
        };
        Ok(CurrentProbe {
            left,
            right,
            grid,
            units,
            patch_start: left - half,
            window,
            twiddles: [twiddle(half - 1), twiddle(half), twiddle(half + 1)],
            fft: FftPair::new(len),
            patch: vec![Complex64::new(0.0, 0.0); len],
            records: Vec::new(),
        })
    }

    pub fn left_position(&self) -> f64 {
        self.grid.position(self.left)
    }

    pub fn right_position(&self) -> f64 {
        self.grid.position(self.right)
    }

    pub fn records(&self) -> &[CurrentRecord] {
        &self.records
    }

    pub fn observe(&mut self, state: &WaveState) {
        let len = self.patch.len();
        let half = len / 2;
        let source = &state.psi[self.patch_start..self.patch_start + len];
        for ((p, s), w) in self.patch.iter_mut().zip(source).zip(&self.window) {
            *p = s * w;
        }
        self.fft.forward(&mut self.patch);
        let inv_len = 1.0 / len as f64;
        let mean = self.patch[0] * inv_len;
        let mut fwd = [Complex64::new(0.0, 0.0); 3];
        let mut bwd = [Complex64::new(0.0, 0.0); 3];
        for (s, tw) in self.twiddles.iter().enumerate() {
            let m = half - 1 + s;
            let w = self.window[m];
            let forward = self.patch[1..=tw.len()]
                .iter()
                .zip(tw)
                .map(|(f, t)| f * t)
                .sum::<Complex64>()
                * inv_len;
            // Undo the window at the stencil points, where it is within
            // O((dx/h)²) of one anyway.
            fwd[s] = forward / w;
            bwd[s] = (source[m] * w - forward - mean) / w;
        }
        let dx = self.grid.dx();
        let transmitted = current_at(
            [
                state.psi[self.right - 1],
                state.psi[self.right],
                state.psi[self.right + 1],
            ],
            dx,
            self.units,
        );
        self.records.push(CurrentRecord {
            time: state.time,
            incident: current_at(fwd, dx, self.units),
            reflected: current_at(bwd, dx, self.units),
            transmitted,
        });
    }

    pub fn estimate(&self) -> Result<ProbabilityPair> {
        current_ratios(&self.records)
    }
}

/// A channel is part of the plateau test only if its peak current exceeds
/// this fraction of the incident peak.
const SIGNIFICANT_CHANNEL: f64 = 1e-6;
/// Samples within this relative distance of a channel's plateau level count
/// as on the plateau.
const PLATEAU_TOLERANCE: f64 = 0.05;
const MIN_PLATEAU_SAMPLES: usize = 3;

/// Typical value of a channel while it carries current: the median of the
/// samples above half its peak. Transients at the packet's edges overshoot
/// the plateau, so the peak itself is a poor reference.
fn plateau_level(values: &[f64]) -> f64 {
    let peak = values.iter().copied().fold(0.0, f64::max);
    let mut strong: Vec<f64> = values.iter().copied().filter(|&v| v >= 0.5 * peak).collect();
    strong.sort_by(f64::total_cmp);
    strong[strong.len() / 2]
}

/// `R = |⟨j_B⟩| / ⟨j_A⟩` and `T = ⟨j_C⟩ / ⟨j_A⟩`, averaged over the samples
/// where every significant channel is on its plateau.
pub fn current_ratios(records: &[CurrentRecord]) -> Result<ProbabilityPair> {
    let incident: Vec<f64> = records.iter().map(|r| r.incident).collect();
    let reflected: Vec<f64> = records.iter().map(|r| -r.reflected).collect();
    let transmitted: Vec<f64> = records.iter().map(|r| r.transmitted).collect();
    let incident_peak = incident.iter().copied().fold(0.0, f64::max);
    if !(incident_peak > 0.0) {
        return Err(Error::domain("no incident current recorded at the left probe"));
    }
    let level = |channel: &[f64]| {
        let peak = channel.iter().copied().fold(0.0, f64::max);
        (peak >= SIGNIFICANT_CHANNEL * incident_peak).then(|| plateau_level(channel))
    };
    let levels = [level(&incident), level(&reflected), level(&transmitted)];
    let channels = [&incident, &reflected, &transmitted];
    let on_plateau = |i: usize| {
        channels.iter().zip(&levels).all(|(channel, level)| match level {
            Some(level) => (channel[i] - level).abs() <= PLATEAU_TOLERANCE * level,
            None => true,
        })
    };
    let plateau: Vec<usize> = (0..records.len()).filter(|&i| on_plateau(i)).collect();
    if plateau.len() < MIN_PLATEAU_SAMPLES {
        return Err(Error::domain(format!(
            "no current plateau: {} overlapping samples (need {MIN_PLATEAU_SAMPLES})",
            plateau.len()
        )));
    }
    let mean = |channel: &[f64]| plateau.iter().map(|&i| channel[i]).sum::<f64>() / plateau.len() as f64;
    let incident = mean(&incident);
    Ok(ProbabilityPair {
        r: mean(&reflected).max(0.0) / incident,
        t: mean(&transmitted).max(0.0) / incident,
    })
}

/// Current-based `(R, T)` from states sampled through the collision.
pub fn current_based_rt(
    states: &[WaveState],
    x_left: f64,
    x_right: f64,
    units: UnitSystem,
) -> Result<ProbabilityPair> {
    let first = states
        .first()
        .ok_or_else(|| Error::domain("no states supplied"))?;
    let mut probe = CurrentProbe::new(first.grid, x_left, x_right, units)?;
    for state in states {
        probe.observe(state);
    }
    probe.estimate()
}

/// Everything measured in one scattering run, next to the analytic values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringResult {
    pub p_left: f64,
    pub p_right: f64,
    pub width_incident: f64,
    /// Incident width at the last sample before any probability crossed to
    /// the far side; compared with `width_incident` it shows how much the
    /// packet spread on its way in.
    pub width_at_arrival: Option<f64>,
    pub width_reflected: Option<f64>,
    pub width_transmitted: Option<f64>,
    pub v_incident: Option<f64>,
    pub v_transmitted: Option<f64>,
    pub timing: Option<TimingInfo>,
    pub analytic: ProbabilityPair,
    pub current_estimate: Option<ProbabilityPair>,
    pub final_time: f64,
    pub norm_drift: f64,
    pub config_fingerprint: String,
}
