//! Run configuration, single runs, sweeps, convergence studies and output.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolve::{
    band_limited_dt, interaction_window, propagate_with, region_split, PropagatorConfig, Scheme,
    StopCriterion, Trajectory,
};
use crate::measure::{
    group_velocity_fit, packet_width, region_probabilities, CurrentProbe, Region, ScatteringResult,
    MIN_REGION_PROBABILITY,
};
use crate::packet::{build_packet, effective_width, GridSpec, PacketShape, PacketSpec};
use crate::stationary::{analytic_probabilities, region_wavenumber, PotentialProfile, UnitSystem};

/// Everything needed to reproduce one scattering run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Record observables every this many time steps.
    pub record_every: usize,
    pub units: UnitSystem,
    pub potential: PotentialProfile,
    pub packet: PacketSpec,
    pub grid: GridSpec,
    pub propagator: PropagatorConfig,
    pub stop: StopCriterion,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.units.validate()?;
        self.potential.validate()?;
        self.packet.validate()?;
        self.grid.validate()?;
        self.propagator.validate()?;
        self.stop.validate()?;
        if self.record_every == 0 {
            return Err(Error::config("record_every must be at least 1"));
        }
        let half = self.packet.support_half_width();
        if self.packet.center_x0 - half <= self.grid.x_min || self.packet.center_x0 + half >= self.grid.x_max {
            return Err(Error::config("packet does not fit inside the grid"));
        }
        if self.packet.center_x0 + half >= self.potential.first_boundary() {
            return Err(Error::config("packet must start entirely left of the potential"));
        }
        Ok(())
    }

    /// Central energy `ħ²k₀²/2m` of the incident packet.
    pub fn energy(&self) -> f64 {
        self.units.kinetic_energy(self.packet.k0)
    }

    /// `E / V₀` for a step; `None` for a zero step or a general profile.
    pub fn energy_ratio(&self) -> Option<f64> {
        match self.potential {
            PotentialProfile::Step { v0 } if v0 != 0.0 => Some(self.energy() / v0),
            _ => None,
        }
    }

    pub fn width_ratio(&self) -> f64 {
        self.packet.width_wi / self.packet.wavelength()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialise config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<string>"),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io("reading config", path, e))?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_toml()?.as_bytes())
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn fingerprint(&self) -> String {
        let text = self.to_toml().unwrap_or_else(|_| format!("{self:?}"));
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Same run with the packet rescaled to `w_over_lambda` wavelengths and
    /// the grid, launch point and stopping time laid out afresh.
    pub fn with_width_ratio(&self, w_over_lambda: f64) -> Result<Self> {
        let mut packet = self.packet;
        packet.width_wi = w_over_lambda * packet.wavelength();
        if let PacketShape::Gaussian { .. } = packet.shape {
            packet.shape = PacketShape::Gaussian {
                sigma: packet.width_wi / (2.0 * PI).sqrt(),
            };
        }
        self.relaid(self.potential.clone(), packet)
    }

    /// Same run against a step with `E/V₀ = ratio`.
    pub fn with_energy_ratio(&self, ratio: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::config(format!("E/V0 must be positive, got {ratio}")));
        }
        let v0 = self.energy() / ratio;
        self.relaid(PotentialProfile::step(v0), self.packet)
    }

    fn relaid(&self, potential: PotentialProfile, packet: PacketSpec) -> Result<Self> {
        let layout = Layout::plan(&potential, &packet, self.grid.dx(), self.units)?;
        let mut config = self.clone();
        config.potential = potential;
        config.packet = packet;
        config.packet.center_x0 = layout.center_x0;
        config.grid = layout.grid;
        if let StopCriterion::Separated { epsilon, window, .. } = self.stop {
            config.stop = StopCriterion::Separated {
                epsilon,
                window,
                max_time: layout.max_time,
            };
        }
        config.validate()?;
        Ok(config)
    }
}

/// Grid extent, launch point and time budget for a packet meeting a
/// potential, sized so nothing reaches the grid edge before `max_time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub grid: GridSpec,
    pub center_x0: f64,
    pub max_time: f64,
}

impl Layout {
    pub fn plan(
        potential: &PotentialProfile,
        packet: &PacketSpec,
        dx: f64,
        units: UnitSystem,
    ) -> Result<Self> {
        potential.validate()?;
        packet.validate()?;
        let lambda = packet.wavelength();
        let window = 10.0 * lambda;
        let half = packet.support_half_width();
        let (b0, b1) = (potential.first_boundary(), potential.last_boundary());
        let energy = units.kinetic_energy(packet.k0);
        let v_in = units.group_velocity(packet.k0);
        let kappa = region_wavenumber(energy, potential.right_level(), units);
        let v_out = if kappa.im == 0.0 && kappa.re > 0.0 {
            units.group_velocity(kappa.re)
        } else {
            0.0
        };

        let gap = window + 2.0 * lambda;
        let center_x0 = b0 - gap - half;
        let crossing = (gap + 2.0 * half + (b1 - b0)) / v_in;
        let clear_left = window / v_in;
        let clear_right = if v_out > 0.0 { window / v_out } else { 0.0 };
        // Narrow packets shed slow spectral tails that take far longer to
        // leave the zone; past this budget the run stops unseparated.
        let settle = 40.0 * lambda / v_in;
        let max_time = 1.25 * (crossing + clear_left.max(clear_right)) + settle;

        // Room for the fast end of the packet's spectrum on either side.
        let fast_k = 1.1 * packet.k0 + spectral_tail(packet);
        let fast_in = units.group_velocity(fast_k);
        let fast_kappa = region_wavenumber(units.kinetic_energy(fast_k), potential.right_level(), units);
        let fast_out = units.group_velocity(fast_kappa.re);
        let margin = 0.1 * packet.width_wi + 20.0 * lambda;
        let arrival = gap / v_in;
        let left = (center_x0 - half).min(b0 - fast_in * (max_time - arrival)) - margin;
        // Even below the step, the spectrum's fast tail gets over it.
        let right = b1 + fast_out * (max_time - arrival) + margin;

        let left_points = (-left / dx).ceil().max(1.0) as usize;
        let needed = ((right - left) / dx).ceil() as usize;
        let grid = GridSpec::anchored(dx, left_points, smooth_size(needed.max(16)))?;
        Ok(Layout {
            grid,
            center_x0,
            max_time,
        })
    }
}

/// Offset from `k₀` beyond which the packet's spectrum carries too little
/// weight to reach the grid edge in time: several times the inverse length
/// over which the envelope turns on.
fn spectral_tail(packet: &PacketSpec) -> f64 {
    match packet.shape {
        PacketShape::FlatTop { taper_fraction } => 12.0 / (taper_fraction * packet.width_wi),
        PacketShape::Gaussian { sigma } => 4.0 / sigma,
    }
}

/// Smallest `2^a 3^b 5^c ≥ n`, a size the FFT handles efficiently.
pub fn smooth_size(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p5 = 1usize;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut candidate = p35;
            while candidate < n {
                candidate *= 2;
            }
            best = best.min(candidate);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

/// High-level description of a step-scattering scenario, from which a full
/// [`RunConfig`] is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub k0: f64,
    /// Step height.
    pub v0: f64,
    pub w_over_lambda: f64,
    pub taper_fraction: f64,
    pub scheme: Scheme,
    /// Grid points per incident wavelength.
    pub points_per_wavelength: f64,
    pub units: UnitSystem,
}

impl Scenario {
    /// `E = 2V₀`, `ħ = m = 1`, `k₀ = 5`, `w_I = 200 λ₀`.
    pub fn headline() -> Self {
        Scenario::step(5.0, 2.0, 200.0)
    }

    pub fn step(k0: f64, e_over_v0: f64, w_over_lambda: f64) -> Self {
        let units = UnitSystem::default();
        let scheme = Scheme::CrankNicolson;
        Scenario {
            k0,
            v0: units.kinetic_energy(k0) / e_over_v0,
            w_over_lambda,
            taper_fraction: PacketShape::DEFAULT_TAPER,
            scheme,
            points_per_wavelength: default_resolution(scheme),
            units,
        }
    }

    /// Switches scheme and adopts that scheme's default resolution.
    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self.points_per_wavelength = default_resolution(scheme);
        self
    }

    pub fn with_step_height(mut self, v0: f64) -> Self {
        self.v0 = v0;
        self
    }

    pub fn to_config(&self) -> Result<RunConfig> {
        let potential = PotentialProfile::step(self.v0);
        let mut packet = PacketSpec::flat_top(0.0, 0.0, self.k0);
        packet.width_wi = self.w_over_lambda * packet.wavelength();
        packet.shape = PacketShape::FlatTop {
            taper_fraction: self.taper_fraction,
        };
        let dx = packet.wavelength() / self.points_per_wavelength;
        let layout = Layout::plan(&potential, &packet, dx, self.units)?;
        packet.center_x0 = layout.center_x0;
        let dt = default_dt(self.scheme, &potential, self.k0, self.units);
        let record_interval = (0.1f64).min(packet.width_wi / (100.0 * self.units.group_velocity(self.k0)));
        let config = RunConfig {
            record_every: ((record_interval / dt).round() as usize).max(1),
            units: self.units,
            potential,
            packet,
            grid: layout.grid,
            propagator: PropagatorConfig::for_scheme(self.scheme, dt),
            stop: StopCriterion::separated(self.k0, layout.max_time),
        };
        config.validate()?;
        Ok(config)
    }
}

/// Grid points per wavelength each scheme needs for the step's reflection
/// to come out right. A point-sampled step seen through the spectral
/// kinetic operator acts like a step smoothed over a cell, which reflects
/// less by a relative `O((k dx)²)`; the three-point stencil has a smaller
/// constant but its dispersion error needs the finer grid anyway.
pub fn default_resolution(scheme: Scheme) -> f64 {
    match scheme {
        Scheme::CrankNicolson => 100.0,
        Scheme::SplitStepSpectral => 32.0,
    }
}

/// Default time step. Crank–Nicolson conserves the discrete energy
/// distribution exactly, so only the packet's band up to `2k₀` has to be
/// resolved in time. The splitting error of split-step scatters probability
/// off the discontinuity into near-Nyquist modes at a rate `∝ Δt²`; resolving
/// the band up to `4k₀` keeps that spray well below the edge-contact
/// threshold. Both are far larger than the full-grid bound of
/// [`PropagatorConfig::recommended_dt`], which is still available.
pub fn default_dt(scheme: Scheme, potential: &PotentialProfile, k0: f64, units: UnitSystem) -> f64 {
    match scheme {
        Scheme::CrankNicolson => band_limited_dt(2.0 * k0, potential, units),
        Scheme::SplitStepSpectral => band_limited_dt(4.0 * k0, potential, units),
    }
}

/// Right-side probability above which the collision counts as started, for
/// the incident-velocity fit.
const ARRIVAL_PROBABILITY: f64 = 1e-6;

/// Builds the packet, propagates it until the stop criterion fires and
/// measures everything there is to measure.
pub fn run(config: &RunConfig) -> Result<ScatteringResult> {
    run_with_trajectory(config).map(|(result, _)| result)
}

/// Like [`run`], also returning the recorded trajectory.
pub fn run_with_trajectory(config: &RunConfig) -> Result<(ScatteringResult, Trajectory)> {
    config.validate()?;
    let units = config.units;
    let initial = build_packet(config.grid, &config.packet)?;
    let width_incident = effective_width(&initial)?;
    let split = region_split(&config.potential);
    let window = match config.stop {
        StopCriterion::Separated { window, .. } => window,
        StopCriterion::MaxTime { .. } => 10.0 * config.packet.wavelength(),
    };
    let mut probe = CurrentProbe::new(
        config.grid,
        config.potential.first_boundary() - window,
        config.potential.last_boundary() + window,
        units,
    )?;
    let mut width_at_arrival = None;
    let (last, traj) = propagate_with(
        &initial,
        &config.potential,
        config.propagator,
        units,
        config.stop,
        config.record_every,
        |state| {
            probe.observe(state);
            if region_probabilities(state, split).1 <= ARRIVAL_PROBABILITY {
                width_at_arrival = effective_width(state).ok();
            }
        },
    )?;

    let (p_left, p_right) = region_probabilities(&last, split);
    let width_reflected = (p_left > MIN_REGION_PROBABILITY)
        .then(|| packet_width(&last, split, Region::Left))
        .transpose()?;
    let width_transmitted = (p_right > MIN_REGION_PROBABILITY)
        .then(|| packet_width(&last, split, Region::Right))
        .transpose()?;

    let timing = interaction_window(&traj, config.packet.width_wi, config.packet.k0, units)
        .map_err(|e| log::info!("no interaction window: {e}"))
        .ok();
    let v_incident = incident_velocity(&traj)
        .map_err(|e| log::info!("no incident velocity: {e}"))
        .ok();
    let v_transmitted = match timing {
        Some(timing) if p_right > MIN_REGION_PROBABILITY => {
            group_velocity_fit(&traj, Region::Right, (timing.t2, last.time))
                .map_err(|e| log::info!("no transmitted velocity: {e}"))
                .ok()
        }
        _ => None,
    };
    let current_estimate = probe
        .estimate()
        .map_err(|e| log::info!("no current-based estimate: {e}"))
        .ok();
    let analytic = analytic_probabilities(&config.potential, config.energy(), units)?;

    let result = ScatteringResult {
        p_left,
        p_right,
        width_incident,
        width_at_arrival,
        width_reflected,
        width_transmitted,
        v_incident,
        v_transmitted,
        timing,
        analytic,
        current_estimate,
        final_time: last.time,
        norm_drift: traj.norm_drift(),
        config_fingerprint: config.fingerprint(),
    };
    Ok((result, traj))
}

/// Slope of `⟨x⟩_left` from the start until probability first reaches the
/// far side.
fn incident_velocity(traj: &Trajectory) -> Result<f64> {
    let arrival = traj
        .right_probability
        .iter()
        .position(|&p| p > ARRIVAL_PROBABILITY)
        .map(|i| traj.times[i.saturating_sub(1)])
        .unwrap_or(f64::INFINITY);
    group_velocity_fit(traj, Region::Left, (traj.times[0], arrival))
}

/// One line of an output table: the measured values next to the analytic
/// ones. Measured entries are absent when the run did not produce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub e_over_v0: Option<f64>,
    pub w_over_lambda: Option<f64>,
    pub r_analytic: Option<f64>,
    pub t_analytic: Option<f64>,
    pub p_left: Option<f64>,
    pub p_right: Option<f64>,
    pub w_t_ratio: Option<f64>,
    pub v_left: Option<f64>,
    pub v_right: Option<f64>,
    pub window_measured: Option<f64>,
    pub window_analytic: Option<f64>,
    pub config_fingerprint: Option<String>,
}

/// Column names of the CSV output, in order.
pub const CSV_HEADERS: [&str; 11] = [
    "e_over_v0",
    "w_over_lambda",
    "r_analytic",
    "t_analytic",
    "p_left",
    "p_right",
    "w_t_ratio",
    "v_left",
    "v_right",
    "window_measured",
    "window_analytic",
];

impl TableRow {
    pub fn from_result(config: &RunConfig, result: &ScatteringResult) -> Self {
        TableRow {
            e_over_v0: config.energy_ratio(),
            w_over_lambda: Some(config.width_ratio()),
            r_analytic: Some(result.analytic.r),
            t_analytic: Some(result.analytic.t),
            p_left: Some(result.p_left),
            p_right: Some(result.p_right),
            w_t_ratio: result.width_transmitted.map(|w| w / result.width_incident),
            v_left: result.v_incident,
            v_right: result.v_transmitted,
            window_measured: result.timing.map(|t| t.measured),
            window_analytic: Some(config.packet.width_wi / config.units.group_velocity(config.packet.k0)),
            config_fingerprint: Some(result.config_fingerprint.clone()),
        }
    }

    fn values(&self) -> [Option<f64>; 11] {
        [
            self.e_over_v0,
            self.w_over_lambda,
            self.r_analytic,
            self.t_analytic,
            self.p_left,
            self.p_right,
            self.w_t_ratio,
            self.v_left,
            self.v_right,
            self.window_measured,
            self.window_analytic,
        ]
    }

    fn from_values(v: [Option<f64>; 11]) -> Self {
        TableRow {
            e_over_v0: v[0],
            w_over_lambda: v[1],
            r_analytic: v[2],
            t_analytic: v[3],
            p_left: v[4],
            p_right: v[5],
            w_t_ratio: v[6],
            v_left: v[7],
            v_right: v[8],
            window_measured: v[9],
            window_analytic: v[10],
            config_fingerprint: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::config(format!("csv encoding failed: {e}"));
        writer.write_record(CSV_HEADERS).map_err(csv_err)?;
        for row in &self.rows {
            let fields = row
                .values()
                .map(|v| v.map(|x| format!("{x:?}")).unwrap_or_default());
            writer.write_record(&fields).map_err(csv_err)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::config(format!("csv encoding failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: PathBuf::from("<csv>"),
            message,
        };
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != CSV_HEADERS {
            return Err(parse_err(format!("unexpected header {headers:?}")));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| parse_err(e.to_string()))?;
            let mut values = [None; 11];
            for (slot, field) in values.iter_mut().zip(record.iter()) {
                if !field.is_empty() {
                    *slot = Some(
                        field
                            .parse::<f64>()
                            .map_err(|e| parse_err(format!("bad number {field:?}: {e}")))?,
                    );
                }
            }
            rows.push(TableRow::from_values(values));
        }
        Ok(Table { rows })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.rows)
            .map_err(|e| Error::config(format!("json encoding failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rows = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<json>"),
            message: e.to_string(),
        })?;
        Ok(Table { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io("reading table", path, e))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Table::from_json(&text),
            _ => Table::from_csv(&text),
        };
        parsed.map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
    PlotScript,
}

/// Writes `table` to `path`. `PlotScript` writes the CSV next to the script
/// (same stem, `.csv` extension) and a gnuplot script that reads only that
/// file. Returns every file written.
pub fn emit(table: &Table, format: OutputFormat, path: &Path) -> Result<Vec<PathBuf>> {
    if table.rows.is_empty() {
        return Err(Error::config("refusing to emit an empty table"));
    }
    match format {
        OutputFormat::Csv => {
            write_file(path, table.to_csv()?.as_bytes())?;
            Ok(vec![path.to_path_buf()])
        }
        OutputFormat::Json => {
            write_file(path, table.to_json()?.as_bytes())?;
            Ok(vec![path.to_path_buf()])
        }
        OutputFormat::PlotScript => {
            let csv_path = path.with_extension("csv");
            if csv_path == path {
                return Err(Error::config("plot script path must not end in .csv"));
            }
            write_file(&csv_path, table.to_csv()?.as_bytes())?;
            let csv_name = csv_path
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::config("plot data path has no file name"))?;
            write_file(path, plot_script(table, csv_name).as_bytes())?;
            Ok(vec![csv_path, path.to_path_buf()])
        }
    }
}

fn plot_script(table: &Table, csv_name: &str) -> String {
    // Plot against whichever axis actually varies.
    let energies: Vec<Option<f64>> = table.rows.iter().map(|r| r.e_over_v0).collect();
    let by_width = energies.windows(2).all(|w| w[0] == w[1]) && table.rows.len() > 1;
    let (column, label) = if by_width { (2, "w_I / lambda_0") } else { (1, "E / V_0") };
    format!(
        "# gnuplot script: measured vs analytic scattering probabilities\n\
         set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel '{label}'\n\
         set ylabel 'probability'\n\
         set grid\n\
         plot '{csv_name}' using {column}:3 with lines title 'R analytic', \\\n\
         \x20    '{csv_name}' using {column}:4 with lines title 'T analytic', \\\n\
         \x20    '{csv_name}' using {column}:5 with points pt 7 title 'P left (measured)', \\\n\
         \x20    '{csv_name}' using {column}:6 with points pt 5 title 'P right (measured)'\n"
    )
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io("creating output directory", parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io("writing output", path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepAxis {
    EnergyRatio { values: Vec<f64> },
    /// Packet widths in incident wavelengths.
    PacketWidth { values: Vec<f64> },
}

impl SweepAxis {
    pub fn values(&self) -> &[f64] {
        match self {
            SweepAxis::EnergyRatio { values } | SweepAxis::PacketWidth { values } => values,
        }
    }
}

/// Observables a sweep is asked for. Probabilities and the analytic columns
/// are always produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Probabilities,
    Widths,
    Velocities,
    Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "all_observables")]
    pub outputs: Vec<Observable>,
    /// Maximum number of runs in flight; `None` uses every core.
    #[serde(default)]
    pub jobs: Option<usize>,
    pub axis: SweepAxis,
    pub base: RunConfig,
}

fn all_observables() -> Vec<Observable> {
    vec![
        Observable::Probabilities,
        Observable::Widths,
        Observable::Velocities,
        Observable::Window,
    ]
}

impl SweepSpec {
    pub fn new(base: RunConfig, axis: SweepAxis) -> Self {
        SweepSpec {
            outputs: all_observables(),
            jobs: None,
            axis,
            base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let values = self.axis.values();
        if values.is_empty() {
            return Err(Error::config("sweep axis has no values"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("sweep axis values must be positive"));
        }
        if self.jobs == Some(0) {
            return Err(Error::config("jobs must be at least 1"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialise sweep: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<string>"),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io("reading sweep spec", path, e))?;
        let spec: SweepSpec = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    /// The run configuration for each axis value, in axis order.
    pub fn configs(&self) -> Result<Vec<RunConfig>> {
        match &self.axis {
            SweepAxis::EnergyRatio { values } => {
                values.iter().map(|&r| self.base.with_energy_ratio(r)).collect()
            }
            SweepAxis::PacketWidth { values } => {
                values.iter().map(|&w| self.base.with_width_ratio(w)).collect()
            }
        }
    }

    fn wants(&self, observable: Observable) -> bool {
        self.outputs.contains(&observable)
    }

    fn trim(&self, mut row: TableRow) -> TableRow {
        if !self.wants(Observable::Widths) {
            row.w_t_ratio = None;
        }
        if !self.wants(Observable::Velocities) {
            row.v_left = None;
            row.v_right = None;
        }
        if !self.wants(Observable::Window) {
            row.window_measured = None;
        }
        row
    }
}

/// A sweep that stopped early, with the rows finished before the failure.
#[derive(Debug, thiserror::Error)]
#[error("sweep aborted after {} completed rows: {source}", partial.rows.len())]
pub struct SweepError {
    pub partial: Table,
    #[source]
    pub source: Error,
}

impl From<Error> for SweepError {
    fn from(source: Error) -> Self {
        SweepError {
            partial: Table::default(),
            source,
        }
    }
}

/// Runs every configuration, at most `jobs` at a time, returning results in
/// input order. On failure the rows before the first failing one are kept.
fn run_all(configs: &[RunConfig], jobs: Option<usize>) -> std::result::Result<Vec<ScatteringResult>, (Vec<ScatteringResult>, Error)> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = jobs {
        builder = builder.num_threads(jobs);
    }
    let pool = match builder.build() {
        Ok(pool) => pool,
        Err(e) => return Err((Vec::new(), Error::config(format!("cannot start worker pool: {e}")))),
    };
    let outcomes: Vec<Result<ScatteringResult>> = pool.install(|| configs.par_iter().map(run).collect());
    let mut done = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            Ok(result) => done.push(result),
            Err(e) => return Err((done, e)),
        }
    }
    Ok(done)
}

/// Measured vs analytic probabilities across `E/V₀` values.
pub fn sweep(spec: &SweepSpec) -> std::result::Result<Table, SweepError> {
    spec.validate()?;
    if !matches!(spec.axis, SweepAxis::EnergyRatio { .. }) {
        return Err(Error::config("sweep expects an energy_ratio axis").into());
    }
    let configs = spec.configs()?;
    let rows = |results: &[ScatteringResult]| Table {
        rows: configs
            .iter()
            .zip(results)
            .map(|(c, r)| spec.trim(TableRow::from_result(c, r)))
            .collect(),
    };
    run_all(&configs, spec.jobs)
        .map(|results| rows(&results))
        .map_err(|(done, source)| SweepError {
            partial: rows(&done),
            source,
        })
}

/// One width of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub w_over_lambda: f64,
    /// `|P_left - R|`
    pub error_r: f64,
    /// `|P_right - T|`
    pub error_t: f64,
    pub w_t_ratio: Option<f64>,
    /// Measured over analytic interaction window.
    pub window_ratio: Option<f64>,
    pub row: TableRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn table(&self) -> Table {
        Table {
            rows: self.rows.iter().map(|r| r.row.clone()).collect(),
        }
    }

    /// Whether both error columns are non-increasing over the last three
    /// (widest) rows.
    pub fn is_converging(&self) -> bool {
        let tail = &self.rows[self.rows.len().saturating_sub(3)..];
        tail.windows(2)
            .all(|w| w[1].error_r <= w[0].error_r && w[1].error_t <= w[0].error_t)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.rows)
            .map_err(|e| Error::config(format!("json encoding failed: {e}")))
    }
}

/// Runs the same scattering problem at several packet widths.
pub fn convergence_study(spec: &SweepSpec) -> std::result::Result<ConvergenceTable, SweepError> {
    spec.validate()?;
    let SweepAxis::PacketWidth { values } = &spec.axis else {
        return Err(Error::config("convergence study expects a packet_width axis").into());
    };
    if values.len() < 3 {
        return Err(Error::config("convergence study needs at least three widths").into());
    }
    let mut order: Vec<f64> = values.clone();
    order.sort_by(f64::total_cmp);
    let spec = SweepSpec {
        axis: SweepAxis::PacketWidth { values: order },
        ..spec.clone()
    };
    let configs = spec.configs()?;
    let rows = |results: &[ScatteringResult]| -> Vec<ConvergenceRow> {
        configs
            .iter()
            .zip(results)
            .map(|(config, result)| {
                let row = spec.trim(TableRow::from_result(config, result));
                ConvergenceRow {
                    w_over_lambda: config.width_ratio(),
                    error_r: (result.p_left - result.analytic.r).abs(),
                    error_t: (result.p_right - result.analytic.t).abs(),
                    w_t_ratio: row.w_t_ratio,
                    window_ratio: result.timing.map(|t| t.measured / t.analytic),
                    row,
                }
            })
            .collect()
    };
    match run_all(&configs, spec.jobs) {
        Ok(results) => {
            let table = ConvergenceTable { rows: rows(&results) };
            if !table.is_converging() {
                log::warn!("errors are not non-increasing over the widest three packets");
            }
            Ok(table)
        }
        Err((done, source)) => Err(SweepError {
            partial: ConvergenceTable { rows: rows(&done) }.table(),
            source,
        }),
    }
}

/// Analytic-only table over `E/V₀` values; measured columns stay empty.
pub fn analytic_table(k0: f64, ratios: &[f64], units: UnitSystem) -> Result<Table> {
    let energy = units.kinetic_energy(k0);
    let rows = ratios
        .iter()
        .map(|&ratio| {
            if !(ratio.is_finite() && ratio > 0.0) {
                return Err(Error::config(format!("E/V0 must be positive, got {ratio}")));
            }
            let probs = analytic_probabilities(&PotentialProfile::step(energy / ratio), energy, units)?;
            Ok(TableRow {
                e_over_v0: Some(ratio),
                w_over_lambda: None,
                r_analytic: Some(probs.r),
                t_analytic: Some(probs.t),
                p_left: None,
                p_right: None,
                w_t_ratio: None,
                v_left: None,
                v_right: None,
                window_measured: None,
                window_analytic: None,
                config_fingerprint: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table { rows })
}
