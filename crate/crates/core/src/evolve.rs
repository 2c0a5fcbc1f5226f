//! Time evolution under `iħ ∂ψ/∂t = -(ħ²/2m) ∂²ψ/∂x² + V(x) ψ`.
//!
//! Two unitary schemes are provided. `CrankNicolson` is the Cayley form
//! `(1 + iHΔt/2ħ) ψⁿ⁺¹ = (1 - iHΔt/2ħ) ψⁿ` with a three-point Laplacian and
//! zero boundary values, solved directly as a tridiagonal system.
//! `SplitStepSpectral` applies `e^{-iTΔt/2ħ} e^{-iVΔt/ħ} e^{-iTΔt/2ħ}` with the
//! kinetic factor diagonal in Fourier space, on a periodic domain.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Edge, Error, Result};
use crate::fourier::{fft_wavenumbers, FftPair};
use crate::measure::{region_mean_position, region_probabilities, Region};
use crate::packet::{GridSpec, WaveState};
use crate::stationary::{PotentialProfile, UnitSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    CrankNicolson,
    SplitStepSpectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    HardWall,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub boundary: Boundary,
}

/// Largest phase `E·Δt/ħ` any represented mode may accumulate per step.
pub const MAX_PHASE_PER_STEP: f64 = 0.2;

impl PropagatorConfig {
    pub fn crank_nicolson(dt: f64) -> Self {
        PropagatorConfig {
            scheme: Scheme::CrankNicolson,
            dt,
            boundary: Boundary::HardWall,
        }
    }

    pub fn split_step(dt: f64) -> Self {
        PropagatorConfig {
            scheme: Scheme::SplitStepSpectral,
            dt,
            boundary: Boundary::Periodic,
        }
    }

    /// Config for `scheme` with its natural boundary condition.
    pub fn for_scheme(scheme: Scheme, dt: f64) -> Self {
        match scheme {
            Scheme::CrankNicolson => Self::crank_nicolson(dt),
            Scheme::SplitStepSpectral => Self::split_step(dt),
        }
    }

    /// Default step: `Δt = 0.2 ħ / E_max` with `E_max` the grid's Nyquist
    /// kinetic energy plus `max|V|`.
    pub fn recommended_dt(grid: &GridSpec, potential: &PotentialProfile, units: UnitSystem) -> f64 {
        let k_nyquist = PI / grid.dx();
        band_limited_dt(k_nyquist, potential, units)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config(format!("time step must be positive, got {}", self.dt)));
        }
        match (self.scheme, self.boundary) {
            (Scheme::CrankNicolson, Boundary::HardWall)
            | (Scheme::SplitStepSpectral, Boundary::Periodic) => Ok(()),
            (scheme, boundary) => Err(Error::config(format!(
                "scheme {scheme:?} cannot be used with {boundary:?} boundaries"
            ))),
        }
    }
}

/// `Δt = 0.2 ħ / E_max` for a field whose content stops at wavenumber `k_max`.
pub fn band_limited_dt(k_max: f64, potential: &PotentialProfile, units: UnitSystem) -> f64 {
    let e_max = units.kinetic_energy(k_max) + potential.max_abs();
    MAX_PHASE_PER_STEP * units.hbar / e_max
}

/// Potential sampled at the grid points. Points on a boundary take the mean
/// of the neighbouring levels.
pub fn sample_potential(potential: &PotentialProfile, grid: &GridSpec) -> Vec<f64> {
    let tol = 1e-9 * grid.dx();
    grid.positions()
        .into_iter()
        .map(|x| potential.value_at(x, tol))
        .collect()
}

#[derive(Debug)]
struct CrankNicolson {
    /// Off-diagonal of `1 + iHΔt/2ħ`.
    off: Complex64,
    /// Diagonal of `1 + iHΔt/2ħ`.
    diag: Vec<Complex64>,
    /// Thomas-algorithm factors of the same matrix.
    upper: Vec<Complex64>,
    inv_pivot: Vec<Complex64>,
    rhs: Vec<Complex64>,
}

impl CrankNicolson {
    fn new(grid: &GridSpec, potential: &[f64], dt: f64, units: UnitSystem) -> Self {
        let dx = grid.dx();
        let n = grid.n_points;
        let hopping = -units.hbar * units.hbar / (2.0 * units.mass * dx * dx);
        let factor = Complex64::new(0.0, dt / (2.0 * units.hbar));
        let off = factor * hopping;
        let diag: Vec<Complex64> = potential
            .iter()
            .map(|&v| 1.0 + factor * (-2.0 * hopping + v))
            .collect();

        let mut upper = vec![Complex64::new(0.0, 0.0); n];
        let mut inv_pivot = vec![Complex64::new(0.0, 0.0); n];
        inv_pivot[0] = 1.0 / diag[0];
        upper[0] = off * inv_pivot[0];
        for j in 1..n {
            let pivot = diag[j] - off * upper[j - 1];
            inv_pivot[j] = 1.0 / pivot;
            upper[j] = off * inv_pivot[j];
        }
        CrankNicolson {
            off,
            diag,
            upper,
            inv_pivot,
            rhs: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    fn step(&mut self, psi: &mut [Complex64]) {
        let n = psi.len();
        let off = self.off;
        // rhs = (2 - A) ψ, where A = 1 + iHΔt/2ħ.
        for j in 0..n {
            let left = if j > 0 { psi[j - 1] } else { Complex64::new(0.0, 0.0) };
            let right = if j + 1 < n { psi[j + 1] } else { Complex64::new(0.0, 0.0) };
            self.rhs[j] = (2.0 - self.diag[j]) * psi[j] - off * (left + right);
        }
        psi[0] = self.rhs[0] * self.inv_pivot[0];
        for j in 1..n {
            psi[j] = (self.rhs[j] - off * psi[j - 1]) * self.inv_pivot[j];
            flush_tiny(&mut psi[j]);
        }
        for j in (0..n - 1).rev() {
            let next = psi[j + 1];
            psi[j] -= self.upper[j] * next;
            flush_tiny(&mut psi[j]);
        }
    }
}

/// Amplitudes below this are set to zero. The exponentially small tails the
/// implicit solve leaves in empty parts of the grid would otherwise decay
/// into subnormal floats, which are very slow to operate on.
const FLUSH_BELOW: f64 = 1e-150;

#[inline]
fn flush_tiny(z: &mut Complex64) {
    if z.re.abs() < FLUSH_BELOW && z.im.abs() < FLUSH_BELOW {
        *z = Complex64::new(0.0, 0.0);
    }
}

#[derive(Debug)]
struct SplitStep {
    fft: FftPair,
    /// `e^{-iħk²Δt/4m} / N`
    half_kinetic: Vec<Complex64>,
    /// `e^{-iħk²Δt/2m} / N`
    full_kinetic: Vec<Complex64>,
    /// `e^{-iVΔt/ħ}`
    potential: Vec<Complex64>,
}

impl SplitStep {
    fn new(grid: &GridSpec, potential: &[f64], dt: f64, units: UnitSystem) -> Self {
        let n = grid.n_points;
        let inv_n = 1.0 / n as f64;
        let ks = fft_wavenumbers(n, grid.dx());
        let phase = |k: f64, fraction: f64| {
            Complex64::from_polar(inv_n, -fraction * units.kinetic_energy(k) * dt / units.hbar)
        };
        SplitStep {
            fft: FftPair::new(n),
            half_kinetic: ks.iter().map(|&k| phase(k, 0.5)).collect(),
            full_kinetic: ks.iter().map(|&k| phase(k, 1.0)).collect(),
            potential: potential
                .iter()
                .map(|&v| Complex64::from_polar(1.0, -v * dt / units.hbar))
                .collect(),
        }
    }

    /// `steps` Strang steps with adjacent half kinetic factors merged.
    fn advance(&mut self, psi: &mut [Complex64], steps: usize) {
        if steps == 0 {
            return;
        }
        self.fft.forward(psi);
        multiply(psi, &self.half_kinetic);
        for i in 0..steps {
            self.fft.inverse(psi);
            multiply(psi, &self.potential);
            self.fft.forward(psi);
            if i + 1 == steps {
                multiply(psi, &self.half_kinetic);
            } else {
                multiply(psi, &self.full_kinetic);
            }
        }
        self.fft.inverse(psi);
    }
}

fn multiply(psi: &mut [Complex64], factors: &[Complex64]) {
    psi.iter_mut().zip(factors).for_each(|(z, f)| *z *= f);
}

#[derive(Debug)]
enum Engine {
    CrankNicolson(CrankNicolson),
    SplitStep(SplitStep),
}

/// A reusable stepper for one grid, potential and configuration.
#[derive(Debug)]
pub struct Propagator {
    engine: Engine,
    grid: GridSpec,
    config: PropagatorConfig,
}

impl Propagator {
    pub fn new(
        grid: GridSpec,
        potential: &PotentialProfile,
        config: PropagatorConfig,
        units: UnitSystem,
    ) -> Result<Self> {
        config.validate()?;
        grid.validate()?;
        potential.validate()?;
        units.validate()?;
        let sampled = sample_potential(potential, &grid);
        let engine = match config.scheme {
            Scheme::CrankNicolson => {
                Engine::CrankNicolson(CrankNicolson::new(&grid, &sampled, config.dt, units))
            }
            Scheme::SplitStepSpectral => {
                Engine::SplitStep(SplitStep::new(&grid, &sampled, config.dt, units))
            }
        };
        Ok(Propagator { engine, grid, config })
    }

    pub fn config(&self) -> &PropagatorConfig {
        &self.config
    }

    /// Advances `state` by `steps` time steps. The clock is set from the step
    /// count rather than accumulated.
    pub fn advance(&mut self, state: &mut WaveState, steps: usize) -> Result<()> {
        if state.grid != self.grid {
            return Err(Error::config("state grid does not match the propagator grid"));
        }
        match &mut self.engine {
            Engine::CrankNicolson(cn) => {
                for _ in 0..steps {
                    cn.step(&mut state.psi);
                }
            }
            Engine::SplitStep(ss) => ss.advance(&mut state.psi, steps),
        }
        state.time += steps as f64 * self.config.dt;
        Ok(())
    }
}

/// One time step from scratch. Use [`Propagator`] for repeated stepping.
pub fn step(
    state: &WaveState,
    potential: &PotentialProfile,
    config: PropagatorConfig,
    units: UnitSystem,
) -> Result<WaveState> {
    let mut propagator = Propagator::new(state.grid, potential, config, units)?;
    let mut next = state.clone();
    propagator.advance(&mut next, 1)?;
    Ok(next)
}

/// When a propagation stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StopCriterion {
    MaxTime { t: f64 },
    /// Stop once the packet has visited the interaction zone (the potential's
    /// boundaries widened by `window` on each side), the zone holds less than
    /// `epsilon` of probability, and left/right probabilities have varied by
    /// less than `epsilon` over the last [`STATIONARY_SAMPLES`] records.
    /// `max_time` caps the run.
    Separated {
        epsilon: f64,
        window: f64,
        max_time: f64,
    },
}

pub const STATIONARY_SAMPLES: usize = 10;

impl StopCriterion {
    /// `epsilon = 1e-6`, `window = 10 λ₀`.
    pub fn separated(k0: f64, max_time: f64) -> Self {
        StopCriterion::Separated {
            epsilon: 1e-6,
            window: 10.0 * 2.0 * PI / k0,
            max_time,
        }
    }

    pub fn max_time(&self) -> f64 {
        match *self {
            StopCriterion::MaxTime { t } => t,
            StopCriterion::Separated { max_time, .. } => max_time,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StopCriterion::MaxTime { t } => t.is_finite() && t >= 0.0,
            StopCriterion::Separated {
                epsilon,
                window,
                max_time,
            } => epsilon > 0.0 && window >= 0.0 && max_time.is_finite() && max_time > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid stop criterion {self:?}")))
        }
    }
}

/// Probability within this many grid cells of either edge counts as contact.
pub const EDGE_CELLS: usize = 5;
pub const EDGE_PROBABILITY_LIMIT: f64 = 1e-8;

/// Observables recorded along a propagation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Position separating the "left" and "right" regions.
    pub split: f64,
    pub times: Vec<f64>,
    pub mean_positions: Vec<f64>,
    pub left_probability: Vec<f64>,
    pub right_probability: Vec<f64>,
    pub norms: Vec<f64>,
    /// `⟨x⟩` restricted to `x < split`, renormalised; `None` when that region
    /// is empty.
    pub left_mean_positions: Vec<Option<f64>>,
    pub right_mean_positions: Vec<Option<f64>>,
    /// Probability inside the interaction zone.
    pub zone_probability: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn record(&mut self, state: &WaveState, zone: (f64, f64)) {
        let (left, right) = region_probabilities(state, self.split);
        let (zone_left, _) = region_probabilities(state, zone.0);
        let (zone_right, _) = region_probabilities(state, zone.1);
        self.times.push(state.time);
        self.mean_positions.push(state.mean_position());
        self.left_probability.push(left);
        self.right_probability.push(right);
        self.norms.push(left + right);
        self.left_mean_positions
            .push(region_mean_position(state, self.split, Region::Left));
        self.right_mean_positions
            .push(region_mean_position(state, self.split, Region::Right));
        self.zone_probability.push((zone_right - zone_left).max(0.0));
    }

    /// Largest `|norm(t) - norm(0)|` over the run.
    pub fn norm_drift(&self) -> f64 {
        let first = self.norms.first().copied().unwrap_or(0.0);
        self.norms.iter().fold(0.0, |m, n| f64::max(m, (n - first).abs()))
    }
}

/// Probability in the outermost cells at each end of the grid.
fn edge_probabilities(state: &WaveState) -> (f64, f64) {
    let n = state.psi.len();
    let cells = EDGE_CELLS.min(n / 2);
    let dx = state.grid.dx();
    let head: f64 = state.psi[..cells].iter().map(|z| z.norm_sqr()).sum();
    let tail: f64 = state.psi[n - cells..].iter().map(|z| z.norm_sqr()).sum();
    (head * dx, tail * dx)
}

fn check_edges(state: &WaveState) -> Result<()> {
    let (left, right) = edge_probabilities(state);
    let (edge, edge_probability) = if left >= right {
        (Edge::Left, left)
    } else {
        (Edge::Right, right)
    };
    if edge_probability > EDGE_PROBABILITY_LIMIT {
        return Err(Error::BoundaryContact {
            edge,
            time: state.time,
            edge_probability,
            threshold: EDGE_PROBABILITY_LIMIT,
        });
    }
    Ok(())
}

fn separated(traj: &Trajectory, epsilon: f64) -> bool {
    let n = traj.len();
    if n < STATIONARY_SAMPLES {
        return false;
    }
    let visited = traj.zone_probability.iter().any(|&p| p >= epsilon);
    if !visited || traj.zone_probability[n - 1] >= epsilon {
        return false;
    }
    let spread = |series: &[f64]| {
        let tail = &series[n - STATIONARY_SAMPLES..];
        let (lo, hi) = tail
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    };
    spread(&traj.left_probability) < epsilon && spread(&traj.right_probability) < epsilon
}

/// Position separating the incident side from the far side: the middle of
/// the potential's boundaries (the origin for a step).
pub fn region_split(potential: &PotentialProfile) -> f64 {
    0.5 * (potential.first_boundary() + potential.last_boundary())
}

/// Steps `state` until `stop` fires, recording every `record_every` steps.
pub fn propagate(
    state: &WaveState,
    potential: &PotentialProfile,
    config: PropagatorConfig,
    units: UnitSystem,
    stop: StopCriterion,
    record_every: usize,
) -> Result<(WaveState, Trajectory)> {
    propagate_with(state, potential, config, units, stop, record_every, |_| {})
}

/// [`propagate`] with `observer` called on every recorded state, starting
/// with the initial one.
pub fn propagate_with(
    state: &WaveState,
    potential: &PotentialProfile,
    config: PropagatorConfig,
    units: UnitSystem,
    stop: StopCriterion,
    record_every: usize,
    mut observer: impl FnMut(&WaveState),
) -> Result<(WaveState, Trajectory)> {
    stop.validate()?;
    if record_every == 0 {
        return Err(Error::config("record_every must be at least 1"));
    }
    let mut propagator = Propagator::new(state.grid, potential, config, units)?;
    let zone = match stop {
        StopCriterion::Separated { window, .. } => {
            (potential.first_boundary() - window, potential.last_boundary() + window)
        }
        StopCriterion::MaxTime { .. } => (potential.first_boundary(), potential.last_boundary()),
    };
    let t0 = state.time;
    let total_steps = ((stop.max_time() - t0) / config.dt - 1e-9).ceil().max(0.0) as usize;

    let mut current = state.clone();
    let mut traj = Trajectory {
        split: region_split(potential),
        ..Trajectory::default()
    };
    check_edges(&current)?;
    traj.record(&current, zone);
    observer(&current);

    let epsilon = match stop {
        StopCriterion::Separated { epsilon, .. } => Some(epsilon),
        StopCriterion::MaxTime { .. } => None,
    };
    let mut done = 0;
    let mut fired = false;
    while done < total_steps && !fired {
        let chunk = record_every.min(total_steps - done);
        propagator.advance(&mut current, chunk)?;
        done += chunk;
        current.time = t0 + done as f64 * config.dt;
        check_edges(&current)?;
        traj.record(&current, zone);
        observer(&current);
        fired = epsilon.is_some_and(|eps| separated(&traj, eps));
    }
    if epsilon.is_some() && !fired {
        log::warn!(
            "packets had not separated by t = {}; stopping anyway",
            stop.max_time()
        );
    }
    Ok((current, traj))
}

/// Start and end of the collision as seen from the far side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingInfo {
    pub t1: f64,
    pub t2: f64,
    /// `t2 - t1`
    pub measured: f64,
    /// `w_I m / ħk₀`
    pub analytic: f64,
}

/// Fraction of the final far-side probability that marks the start of the
/// collision; `1 - ONSET_FRACTION` marks its end.
pub const ONSET_FRACTION: f64 = 1e-3;

/// Measures the collision interval from the far-side probability.
///
/// `t1` and `t2` are when `P_right` first reaches [`ONSET_FRACTION`] and
/// `1 - ONSET_FRACTION` of its final value; the last sample must therefore
/// be taken after the collision has finished.
pub fn interaction_window(
    traj: &Trajectory,
    width_wi: f64,
    k0: f64,
    units: UnitSystem,
) -> Result<TimingInfo> {
    let analytic = width_wi / units.group_velocity(k0);
    let n = traj.len();
    if n < 3 {
        return Err(Error::domain("trajectory too short to contain a collision"));
    }
    let t = &traj.times;
    let p = &traj.right_probability;
    let last = p[n - 1];
    if !(last > 1e-6) {
        return Err(Error::domain(
            "no collision seen from the far side: final right-hand probability is negligible",
        ));
    }
    let crossing = |level: f64| -> Result<f64> {
        if p[0] >= level {
            return Err(Error::domain("collision already under way at the first sample"));
        }
        let i = (1..n)
            .find(|&i| p[i] >= level)
            .ok_or_else(|| Error::domain("far-side probability never reaches its final value"))?;
        Ok(interpolate_crossing(t[i - 1], p[i - 1], t[i], p[i], level))
    };
    let t1 = crossing(ONSET_FRACTION * last)?;
    let t2 = crossing((1.0 - ONSET_FRACTION) * last)?;
    Ok(TimingInfo {
        t1,
        t2,
        measured: t2 - t1,
        analytic,
    })
}

fn interpolate_crossing(t_a: f64, v_a: f64, t_b: f64, v_b: f64, level: f64) -> f64 {
    if v_b == v_a {
        return t_b;
    }
    t_a + (level - v_a) * (t_b - t_a) / (v_b - v_a)
}

/// Which kinetic operator to use for `⟨H⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KineticForm {
    /// Exact `ħ²k²/2m` in Fourier space.
    Spectral,
    /// Three-point Laplacian with zero boundary values, the operator the
    /// Crank–Nicolson scheme conserves.
    FiniteDifference,
}

/// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩`.
pub fn energy_expectation(
    state: &WaveState,
    potential: &PotentialProfile,
    units: UnitSystem,
    kinetic: KineticForm,
) -> f64 {
    let grid = state.grid;
    let dx = grid.dx();
    let norm = state.norm();
    let v = sample_potential(potential, &grid);
    let potential_energy: f64 = state
        .psi
        .iter()
        .zip(&v)
        .map(|(z, v)| v * z.norm_sqr())
        .sum::<f64>()
        * dx;
    let kinetic_energy = match kinetic {
        KineticForm::Spectral => {
            let mut data = state.psi.clone();
            FftPair::new(grid.n_points).forward(&mut data);
            let ks = fft_wavenumbers(grid.n_points, dx);
            let weighted: f64 = data
                .iter()
                .zip(&ks)
                .map(|(z, &k)| units.kinetic_energy(k) * z.norm_sqr())
                .sum();
            weighted * dx / grid.n_points as f64
        }
        KineticForm::FiniteDifference => {
            let n = state.psi.len();
            let coeff = units.hbar * units.hbar / (2.0 * units.mass * dx * dx);
            let zero = Complex64::new(0.0, 0.0);
            let sum: f64 = (0..n)
                .map(|j| {
                    let left = if j > 0 { state.psi[j - 1] } else { zero };
                    let right = if j + 1 < n { state.psi[j + 1] } else { zero };
                    let lap = 2.0 * state.psi[j] - left - right;
                    (state.psi[j].conj() * lap).re
                })
                .sum();
            coeff * sum * dx
        }
    };
    (kinetic_energy + potential_energy) / norm
}
