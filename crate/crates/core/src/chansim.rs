//! Synthetic geometric multipath channels and random Bézier user
//! trajectories over a discretized area.
//!
//! Channels are built from mirror-image reflections off a fixed set of wall
//! segments: every path is a single bounce user -> wall -> receiver, with
//! Friis-style inverse-distance amplitude and a per-wall complex reflection
//! coefficient drawn once per environment seed. There is never a direct
//! line-of-sight path. Nearby positions therefore produce strongly
//! correlated channel vectors, which is the structure the downstream
//! regression network exploits.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::dma::{estimate_channel, ChannelEstimate, ChannelTensor, DmaGeometry};
use crate::error::{Error, Result};
use crate::rng;
use crate::SPEED_OF_LIGHT;

/// One propagation path of the synthetic channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PathParams {
    pub gain: Complex64,
    /// Azimuth of arrival at the array, radians in [-pi, pi].
    pub azimuth: f64,
    /// Elevation of arrival at the array, radians in [-pi, pi].
    pub elevation: f64,
    /// Total propagation delay, seconds.
    pub delay: f64,
}

impl PathParams {
    pub fn new(gain: Complex64, azimuth: f64, elevation: f64, delay: f64) -> Result<Self> {
        if gain.norm() <= 0.0 {
            return Err(Error::Domain("path gain must be nonzero".into()));
        }
        if delay < 0.0 {
            return Err(Error::Domain(format!("path delay must be non-negative, got {delay}")));
        }
        let pi = std::f64::consts::PI;
        if !(-pi..=pi).contains(&azimuth) || !(-pi..=pi).contains(&elevation) {
            return Err(Error::Domain(format!(
                "angles ({azimuth}, {elevation}) outside [-pi, pi]"
            )));
        }
        Ok(Self { gain, azimuth, elevation, delay })
    }
}

/// Rectangular user area discretized to a square grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Grid spacing in meters.
    pub spacing: f64,
    /// Fixed user height in meters.
    pub height: f64,
}

impl AreaGrid {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, spacing: f64, height: f64) -> Result<Self> {
        if spacing <= 0.0 {
            return Err(Error::Domain(format!("grid spacing must be positive, got {spacing}")));
        }
        if x_max <= x_min || y_max <= y_min {
            return Err(Error::Domain("area ranges must be non-degenerate".into()));
        }
        Ok(Self { x_min, x_max, y_min, y_max, spacing, height })
    }

    /// Desk-scale default: 22 m x 8 m centered on the origin, 20 cm grid.
    pub fn desk_default() -> Self {
        Self { x_min: -11.0, x_max: 11.0, y_min: -4.0, y_max: 4.0, spacing: 0.2, height: 2.0 }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.x_min..=self.x_max).contains(&p[0]) && (self.y_min..=self.y_max).contains(&p[1])
    }

    /// Snap a point to the nearest grid node (absolute multiples of the
    /// spacing), clamped into the area.
    pub fn snap(&self, p: [f64; 2]) -> [f64; 2] {
        let snap1 = |v: f64, lo: f64, hi: f64| {
            let snapped = (v / self.spacing).round() * self.spacing;
            let lo_grid = (lo / self.spacing).ceil() * self.spacing;
            let hi_grid = (hi / self.spacing).floor() * self.spacing;
            snapped.clamp(lo_grid, hi_grid)
        };
        [snap1(p[0], self.x_min, self.x_max), snap1(p[1], self.y_min, self.y_max)]
    }

    fn holds_at_least_one_cell(&self) -> bool {
        self.x_max - self.x_min >= self.spacing && self.y_max - self.y_min >= self.spacing
    }
}

/// A reflecting wall, given as a segment whose infinite supporting line is
/// used for the mirror construction.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Wall {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

/// Fixed environment: receiver position, reflecting walls, and a blocking
/// segment standing between the receiver and the area (the reason no
/// line-of-sight path is ever generated).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReflectorLayout {
    /// Receiver (DMA) position, meters; z is the mounting height.
    pub rx: [f64; 3],
    /// Reflecting walls in fixed path order.
    pub walls: Vec<Wall>,
    pub blocker: Wall,
}

impl ReflectorLayout {
    /// Default layout wrapped around [`AreaGrid::desk_default`]: two main
    /// reflecting walls (west and east), a southern wall, and three smaller
    /// segments, giving up to six single-bounce paths.
    pub fn desk_default() -> Self {
        Self {
            rx: [0.0, 6.0, 1.2],
            walls: vec![
                Wall { a: [-13.0, -6.0], b: [-13.0, 8.0] },  // west (main)
                Wall { a: [13.0, -6.0], b: [13.0, 8.0] },    // east (main)
                Wall { a: [-13.0, -6.0], b: [13.0, -6.0] },  // south
                Wall { a: [-13.0, 8.0], b: [-6.0, 10.0] },   // north-west facet
                Wall { a: [6.0, 10.0], b: [13.0, 8.0] },     // north-east facet
                Wall { a: [-9.0, -6.0], b: [-2.0, -7.5] },   // southern facet
            ],
            blocker: Wall { a: [-3.0, 5.0], b: [3.0, 5.0] },
        }
    }

    pub fn max_paths(&self) -> usize {
        self.walls.len()
    }
}

fn mirror_across(p: [f64; 2], wall: &Wall) -> [f64; 2] {
    let d = [wall.b[0] - wall.a[0], wall.b[1] - wall.a[1]];
    let len_sqr = d[0] * d[0] + d[1] * d[1];
    let v = [p[0] - wall.a[0], p[1] - wall.a[1]];
    let t = (v[0] * d[0] + v[1] * d[1]) / len_sqr;
    let foot = [wall.a[0] + t * d[0], wall.a[1] + t * d[1]];
    [2.0 * foot[0] - p[0], 2.0 * foot[1] - p[1]]
}

/// Intersection of the line `p -> q` with the wall's supporting line.
fn line_intersection(p: [f64; 2], q: [f64; 2], wall: &Wall) -> [f64; 2] {
    let r = [q[0] - p[0], q[1] - p[1]];
    let s = [wall.b[0] - wall.a[0], wall.b[1] - wall.a[1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    if denom.abs() < 1e-12 {
        // Degenerate (ray parallel to the wall): fall back to the foot of
        // the perpendicular, which keeps the map continuous.
        let len_sqr = s[0] * s[0] + s[1] * s[1];
        let v = [p[0] - wall.a[0], p[1] - wall.a[1]];
        let t = (v[0] * s[0] + v[1] * s[1]) / len_sqr;
        return [wall.a[0] + t * s[0], wall.a[1] + t * s[1]];
    }
    let t = ((wall.a[0] - p[0]) * s[1] - (wall.a[1] - p[1]) * s[0]) / denom;
    [p[0] + t * r[0], p[1] + t * r[1]]
}

/// Per-channel knobs of the synthetic generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Acquisition noise variance sigma^2 (linear units).
    pub noise_power: f64,
    /// Multiplier on every path amplitude.
    pub gain_scale: f64,
    /// Phase applied to the probed column during channel estimation.
    pub probe_phase: f64,
}

impl SimConfig {
    pub fn new(n_paths: usize, noise_power: f64, gain_scale: f64) -> Self {
        Self { n_paths, noise_power, gain_scale, probe_phase: std::f64::consts::FRAC_PI_2 }
    }
}

/// Deterministic position-to-paths map: one single-bounce path per wall, in
/// fixed wall order, with per-wall reflection coefficients drawn from the
/// seed once (the environment), so the map is continuous in position.
pub fn paths_for_position(
    position: [f64; 2],
    area: &AreaGrid,
    layout: &ReflectorLayout,
    geometry: &DmaGeometry,
    n_paths: usize,
    gain_scale: f64,
    seed: u64,
) -> Result<Vec<PathParams>> {
    if !area.contains(position) {
        return Err(Error::Domain(format!(
            "position ({}, {}) outside the area",
            position[0], position[1]
        )));
    }
    if n_paths == 0 || n_paths > layout.max_paths() {
        return Err(Error::Domain(format!(
            "n_paths = {n_paths} not supported: the layout provides between 1 and {} reflectors",
            layout.max_paths()
        )));
    }
    let mut env = rng::stream(seed, "reflection-coefficients");
    // Draw for every wall so the first n coefficients do not depend on n_paths.
    let coeffs: Vec<Complex64> = (0..layout.walls.len())
        .map(|_| {
            let mag = 0.4 + 0.45 * env.gen::<f64>();
            let phase = (env.gen::<f64>() - 0.5) * 2.0 * std::f64::consts::PI;
            Complex64::from_polar(mag, phase)
        })
        .collect();

    let rx2 = [layout.rx[0], layout.rx[1]];
    let dz = area.height - layout.rx[2];
    let mut paths = Vec::with_capacity(n_paths);
    for (wall, coeff) in layout.walls.iter().zip(&coeffs).take(n_paths) {
        let rx_mirror = mirror_across(rx2, wall);
        let d2 = ((position[0] - rx_mirror[0]).powi(2) + (position[1] - rx_mirror[1]).powi(2)).sqrt();
        let d = (d2 * d2 + dz * dz).sqrt();
        let delay = d / SPEED_OF_LIGHT;
        let amplitude = geometry.wavelength / (4.0 * std::f64::consts::PI * d) * gain_scale;
        let reflection = line_intersection(position, rx_mirror, wall);
        // Direction from the array toward the last bounce; azimuth measured
        // from the array broadside, which faces the area (negative y).
        let u = [reflection[0] - rx2[0], reflection[1] - rx2[1]];
        let azimuth = u[0].atan2(-u[1]);
        let elevation = dz.atan2(d2);
        paths.push(PathParams::new(coeff * amplitude, azimuth, elevation, delay)?);
    }
    Ok(paths)
}

/// Planar-array response for an arrival direction: element at planar
/// coordinates `(u, v)` (half-wavelength pitch) gets phase
/// `(2 pi / lambda) (u sin az cos el + v sin el)`.
pub fn steering_vector(geometry: &DmaGeometry, azimuth: f64, elevation: f64) -> Vec<Complex64> {
    let k = 2.0 * std::f64::consts::PI / geometry.wavelength;
    let pitch = geometry.wavelength / 2.0;
    let mut out = Vec::with_capacity(geometry.n());
    for i in 0..geometry.n_rf {
        let v = i as f64 * pitch;
        for j in 0..geometry.n_e {
            let u = j as f64 * pitch;
            let phase = k * (u * azimuth.sin() * elevation.cos() + v * elevation.sin());
            out.push(Complex64::from_polar(1.0, phase));
        }
    }
    out
}

/// Superpose paths into a per-element, per-subcarrier frequency response:
/// `h[n][l] = sum_m gain_m a_m[n] e^{-j 2 pi f_l tau_m}`.
pub fn synth_channel(
    geometry: &DmaGeometry,
    paths: &[PathParams],
    subcarrier_freqs: &[f64],
) -> Result<ChannelTensor> {
    if paths.is_empty() {
        return Err(Error::Domain("synth_channel requires at least one path".into()));
    }
    let n = geometry.n();
    let l = subcarrier_freqs.len();
    let mut entries = vec![Complex64::ZERO; n * l];
    for path in paths {
        let sv = steering_vector(geometry, path.azimuth, path.elevation);
        for (sub, &freq) in subcarrier_freqs.iter().enumerate() {
            let carrier = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * freq * path.delay);
            let factor = path.gain * carrier;
            for (elem, &a) in sv.iter().enumerate() {
                entries[elem * l + sub] += factor * a;
            }
        }
    }
    ChannelTensor::new(n, l, entries, subcarrier_freqs.to_vec())
}

/// Degree-4 Bernstein evaluation of a 5-control-point Bézier curve.
pub fn bezier_point(control_points: &[[f64; 2]; 5], s: f64) -> Result<[f64; 2]> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("curve parameter {s} outside [0, 1]")));
    }
    const BINOM: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
    let mut p = [0.0; 2];
    for (k, cp) in control_points.iter().enumerate() {
        let w = BINOM[k] * s.powi(k as i32) * (1.0 - s).powi(4 - k as i32);
        p[0] += w * cp[0];
        p[1] += w * cp[1];
    }
    Ok(p)
}

/// Ordered sequence of grid-snapped user positions with the control points
/// that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub control_points: [[f64; 2]; 5],
    pub positions: Vec<[f64; 2]>,
}

const ARC_SEGMENTS: usize = 1024;

/// Sample a random Bézier trajectory: 5 uniform control points, arc-length
/// uniform parameters (via a polyline approximation), nearest-grid snapping.
pub fn gen_trajectory(area: &AreaGrid, n_points: usize, seed: u64) -> Result<Trajectory> {
    if n_points < 2 {
        return Err(Error::Domain(format!("a trajectory needs at least 2 points, got {n_points}")));
    }
    if !area.holds_at_least_one_cell() {
        return Err(Error::Domain("area smaller than one grid cell".into()));
    }
    let mut rng = rng::stream(seed, "control-points");
    let mut control_points = [[0.0; 2]; 5];
    for cp in &mut control_points {
        cp[0] = area.x_min + rng.gen::<f64>() * (area.x_max - area.x_min);
        cp[1] = area.y_min + rng.gen::<f64>() * (area.y_max - area.y_min);
    }

    // Cumulative arc length along a fine polyline.
    let mut cumulative = Vec::with_capacity(ARC_SEGMENTS + 1);
    cumulative.push(0.0);
    let mut prev = bezier_point(&control_points, 0.0)?;
    for seg in 1..=ARC_SEGMENTS {
        let s = seg as f64 / ARC_SEGMENTS as f64;
        let p = bezier_point(&control_points, s)?;
        let step = ((p[0] - prev[0]).powi(2) + (p[1] - prev[1]).powi(2)).sqrt();
        cumulative.push(cumulative[seg - 1] + step);
        prev = p;
    }
    let total = *cumulative.last().unwrap();

    let mut positions = Vec::with_capacity(n_points);
    for idx in 0..n_points {
        let s = if total < 1e-12 {
            // Degenerate curve (all control points coincide).
            0.0
        } else {
            let target = total * idx as f64 / (n_points - 1) as f64;
            let seg = cumulative.partition_point(|&c| c < target).min(ARC_SEGMENTS);
            if seg == 0 {
                0.0
            } else {
                let lo = cumulative[seg - 1];
                let hi = cumulative[seg];
                let frac = if hi > lo { (target - lo) / (hi - lo) } else { 0.0 };
                (seg as f64 - 1.0 + frac) / ARC_SEGMENTS as f64
            }
        };
        // Interpolation rounding can land a hair outside [0, 1].
        positions.push(area.snap(bezier_point(&control_points, s.clamp(0.0, 1.0))?));
    }
    Ok(Trajectory { control_points, positions })
}

/// One trajectory step: ground truth channel, its noisy estimate, and the
/// true position.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub position: [f64; 2],
    pub truth: ChannelTensor,
    pub estimate: ChannelEstimate,
}

/// Per-trajectory data attached to its generating curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    pub trajectory: Trajectory,
    pub steps: Vec<StepRecord>,
}

/// Collection of trajectories plus the shuffled flat view used for
/// position-regression training.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<TrajectoryData>,
    /// Shuffled `(trajectory, step)` permutation of every sample.
    pub shuffled: Vec<(usize, usize)>,
}

impl Dataset {
    /// Total number of (estimate, position) samples.
    pub fn flat_len(&self) -> usize {
        self.trajectories.iter().map(|t| t.steps.len()).sum()
    }

    /// Samples in shuffled order.
    pub fn shuffled_samples(&self) -> impl Iterator<Item = (&ChannelEstimate, [f64; 2])> {
        self.shuffled.iter().map(move |&(d, t)| {
            let step = &self.trajectories[d].steps[t];
            (&step.estimate, step.position)
        })
    }
}

/// Build the shuffle permutation for `d_count` trajectories of `t_len` steps.
pub fn shuffle_order(d_count: usize, t_len: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut order: Vec<(usize, usize)> =
        (0..d_count).flat_map(|d| (0..t_len).map(move |t| (d, t))).collect();
    let mut rng = rng::stream(seed, "dataset-shuffle");
    order.shuffle(&mut rng);
    order
}

/// Generate `d_count` trajectories of `t_len` steps each, synthesizing a
/// channel and its pilot-based estimate per step.
#[allow(clippy::too_many_arguments)]
pub fn make_dataset(
    area: &AreaGrid,
    geometry: &DmaGeometry,
    layout: &ReflectorLayout,
    sim: &SimConfig,
    subcarrier_freqs: &[f64],
    d_count: usize,
    t_len: usize,
    seed: u64,
) -> Result<Dataset> {
    if d_count == 0 || t_len == 0 {
        return Err(Error::Domain(format!(
            "dataset needs positive counts, got D = {d_count}, |T| = {t_len}"
        )));
    }
    let paths_seed = rng::derive_seed(seed, "environment");
    let pilot = Complex64::ONE;
    let mut trajectories = Vec::with_capacity(d_count);
    for d in 0..d_count {
        let trajectory =
            gen_trajectory(area, t_len, rng::derive_seed(seed, &format!("trajectory-{d}")))?;
        let mut steps = Vec::with_capacity(t_len);
        for (t, &position) in trajectory.positions.iter().enumerate() {
            let paths = paths_for_position(
                position,
                area,
                layout,
                geometry,
                sim.n_paths,
                sim.gain_scale,
                paths_seed,
            )?;
            let truth = synth_channel(geometry, &paths, subcarrier_freqs)?;
            let estimate = estimate_channel(
                geometry,
                &truth,
                pilot,
                sim.noise_power,
                sim.probe_phase,
                rng::derive_seed(seed, &format!("estimate-noise-{d}-{t}")),
            )?;
            steps.push(StepRecord { position, truth, estimate });
        }
        trajectories.push(TrajectoryData { trajectory, steps });
    }
    let shuffled = shuffle_order(d_count, t_len, seed);
    Ok(Dataset { trajectories, shuffled })
}
