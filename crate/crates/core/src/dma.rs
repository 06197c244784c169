//! DMA element response, configuration vectors, RFC-grouped reception, and
//! the pilot-sparse channel-estimation procedure.
//!
//! The metasurface is an `n_rf x n_e` grid: each of the `n_rf` microstrips
//! (rows) feeds one RF chain, and the `n_e` elements of a row share that
//! chain. Element `n = i * n_e + j` (zero-based row `i`, column `j`) carries
//! the Lorentzian-constrained response `0.5 (j + e^{j phi}) e^{j rho beta}`.
//! Setting `phi = -pi/2` zeroes an element, which is what makes the
//! column-at-a-time channel estimation possible with only `n_e` pilots.

use num_complex::Complex64;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Phase at which the Lorentzian element response vanishes.
pub const ZERO_PHASE: f64 = -std::f64::consts::FRAC_PI_2;

/// Physical layout of the metasurface.
#[derive(Debug, Clone, PartialEq)]
pub struct DmaGeometry {
    /// Number of RF chains (rows).
    pub n_rf: usize,
    /// Elements per microstrip (columns).
    pub n_e: usize,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Microstrip permittivity (dimensionless).
    pub permittivity: f64,
    /// Horizontal position of each column inside its microstrip, meters.
    pub element_offsets: Vec<f64>,
    /// Mean-power bound on the configuration vector.
    pub p_max: f64,
}

impl DmaGeometry {
    pub fn new(
        n_rf: usize,
        n_e: usize,
        wavelength: f64,
        permittivity: f64,
        element_offsets: Vec<f64>,
        p_max: f64,
    ) -> Result<Self> {
        if n_rf < 1 || n_e < 1 {
            return Err(Error::Domain(format!(
                "geometry needs n_rf >= 1 and n_e >= 1, got {n_rf} x {n_e}"
            )));
        }
        if wavelength <= 0.0 || permittivity <= 0.0 {
            return Err(Error::Domain(format!(
                "wavelength and permittivity must be positive, got {wavelength}, {permittivity}"
            )));
        }
        if element_offsets.len() != n_e {
            return Err(Error::Dimension(format!(
                "element_offsets has length {}, expected n_e = {n_e}",
                element_offsets.len()
            )));
        }
        let increasing = element_offsets.windows(2).all(|w| w[0] < w[1]);
        if !increasing || element_offsets.iter().any(|&r| r < 0.0) {
            return Err(Error::Constraint(
                "element_offsets must be non-negative and strictly increasing".into(),
            ));
        }
        if p_max <= 0.0 {
            return Err(Error::Domain(format!("p_max must be positive, got {p_max}")));
        }
        Ok(Self { n_rf, n_e, wavelength, permittivity, element_offsets, p_max })
    }

    /// Geometry with columns on a half-wavelength pitch and the per-element
    /// unit power bound `p_max = N`.
    pub fn uniform(n_rf: usize, n_e: usize, wavelength: f64, permittivity: f64) -> Result<Self> {
        let offsets = (0..n_e).map(|j| j as f64 * wavelength / 2.0).collect();
        let p_max = (n_rf * n_e) as f64;
        Self::new(n_rf, n_e, wavelength, permittivity, offsets, p_max)
    }

    /// Total element count `N = n_rf * n_e`.
    pub fn n(&self) -> usize {
        self.n_rf * self.n_e
    }

    /// Wavenumber of the propagation inside the microstrip.
    pub fn wavenumber(&self) -> f64 {
        // Inputs were validated at construction.
        wavenumber(self.wavelength, self.permittivity).expect("validated geometry")
    }
}

/// Per-element controllable phase shifts, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShifts {
    phases: Vec<f64>,
}

impl PhaseShifts {
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        for (n, &phi) in phases.iter().enumerate() {
            if !(ZERO_PHASE..=std::f64::consts::FRAC_PI_2).contains(&phi) {
                return Err(Error::Domain(format!(
                    "phase {phi} at element {n} outside [-pi/2, pi/2]"
                )));
            }
        }
        Ok(Self { phases })
    }

    /// All elements at the same phase.
    pub fn constant(n: usize, phi: f64) -> Result<Self> {
        Self::new(vec![phi; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

/// The complex DMA configuration vector `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct DmaWeights {
    weights: Vec<Complex64>,
}

impl DmaWeights {
    pub fn as_slice(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn norm_sqr(&self) -> f64 {
        self.weights.iter().map(|w| w.norm_sqr()).sum()
    }
}

/// Complex frequency response per element per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    /// `n * l` entries, element-major.
    entries: Vec<Complex64>,
    n: usize,
    l: usize,
    /// Absolute subcarrier frequencies in Hz, length `l`.
    pub subcarrier_freqs: Vec<f64>,
}

impl ChannelTensor {
    pub fn new(n: usize, l: usize, entries: Vec<Complex64>, subcarrier_freqs: Vec<f64>) -> Result<Self> {
        if entries.len() != n * l {
            return Err(Error::Dimension(format!(
                "channel has {} entries, expected {n} x {l}",
                entries.len()
            )));
        }
        if subcarrier_freqs.len() != l {
            return Err(Error::Dimension(format!(
                "got {} subcarrier frequencies, expected {l}",
                subcarrier_freqs.len()
            )));
        }
        if entries.iter().any(|e| !e.re.is_finite() || !e.im.is_finite()) {
            return Err(Error::Constraint("channel entries must be finite".into()));
        }
        Ok(Self { entries, n, l, subcarrier_freqs })
    }

    pub fn zeros(n: usize, l: usize, subcarrier_freqs: Vec<f64>) -> Result<Self> {
        Self::new(n, l, vec![Complex64::ZERO; n * l], subcarrier_freqs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_sub(&self) -> usize {
        self.l
    }

    pub fn at(&self, element: usize, sub: usize) -> Complex64 {
        self.entries[element * self.l + sub]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Entry-wise sum of two channels on the same grid.
    pub fn add(&self, other: &ChannelTensor) -> Result<ChannelTensor> {
        if self.n != other.n || self.l != other.l {
            return Err(Error::Dimension(format!(
                "cannot add {}x{} and {}x{} channels",
                self.n, self.l, other.n, other.l
            )));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        ChannelTensor::new(self.n, self.l, entries, self.subcarrier_freqs.clone())
    }
}

/// Real/imaginary stacking of an estimated channel, the `2 x N x L` network
/// input, together with the acquisition noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    /// Real parts, `n * l` element-major.
    pub real: Vec<f64>,
    /// Imaginary parts, `n * l` element-major.
    pub imag: Vec<f64>,
    pub n: usize,
    pub l: usize,
    /// Noise variance sigma^2 used during acquisition.
    pub noise_power: f64,
}

impl ChannelEstimate {
    pub fn new(n: usize, l: usize, real: Vec<f64>, imag: Vec<f64>, noise_power: f64) -> Result<Self> {
        if real.len() != n * l || imag.len() != n * l {
            return Err(Error::Dimension(format!(
                "estimate parts have lengths {}/{}, expected {n} x {l}",
                real.len(),
                imag.len()
            )));
        }
        if real.iter().chain(imag.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Constraint("estimate entries must be finite".into()));
        }
        Ok(Self { real, imag, n, l, noise_power })
    }

    pub fn at(&self, element: usize, sub: usize) -> Complex64 {
        let idx = element * self.l + sub;
        Complex64::new(self.real[idx], self.imag[idx])
    }
}

/// Baseband samples observed at the RF chains, `n_rf * n_sub`, RFC-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RxSignal {
    pub n_rf: usize,
    pub n_sub: usize,
    pub samples: Vec<Complex64>,
}

impl RxSignal {
    pub fn at(&self, rfc: usize, sub: usize) -> Complex64 {
        self.samples[rfc * self.n_sub + sub]
    }
}

/// Wavenumber `(2 pi / lambda) sqrt(epsilon)` of the in-strip propagation.
pub fn wavenumber(wavelength: f64, permittivity: f64) -> Result<f64> {
    if wavelength <= 0.0 || permittivity <= 0.0 {
        return Err(Error::Domain(format!(
            "wavenumber needs positive inputs, got lambda = {wavelength}, epsilon = {permittivity}"
        )));
    }
    Ok(2.0 * std::f64::consts::PI / wavelength * permittivity.sqrt())
}

/// Lorentzian-constrained element response `0.5 (j + e^{j phi}) e^{j rho beta}`.
///
/// At `phi = -pi/2` the response is returned as exact zero; the generic
/// expression only reaches ~1e-17 there because `cos(-pi/2)` is not exactly
/// representable.
pub fn element_response(phase: f64, rho: f64, beta: f64) -> Result<Complex64> {
    if !(ZERO_PHASE..=std::f64::consts::FRAC_PI_2).contains(&phase) {
        return Err(Error::Domain(format!("phase {phase} outside [-pi/2, pi/2]")));
    }
    if phase == ZERO_PHASE {
        return Ok(Complex64::ZERO);
    }
    let lorentzian = 0.5 * (Complex64::i() + Complex64::from_polar(1.0, phase));
    Ok(lorentzian * Complex64::from_polar(1.0, rho * beta))
}

/// Assemble the configuration vector for a full grid of phase shifts and
/// verify the power constraint.
pub fn build_weights(geometry: &DmaGeometry, phases: &PhaseShifts) -> Result<DmaWeights> {
    let n = geometry.n();
    if phases.len() != n {
        return Err(Error::Dimension(format!(
            "got {} phases for a geometry of {n} elements",
            phases.len()
        )));
    }
    let beta = geometry.wavenumber();
    let mut weights = Vec::with_capacity(n);
    for i in 0..geometry.n_rf {
        for j in 0..geometry.n_e {
            let phi = phases.as_slice()[i * geometry.n_e + j];
            weights.push(element_response(phi, geometry.element_offsets[j], beta)?);
        }
    }
    let w = DmaWeights { weights };
    let norm_sqr = w.norm_sqr();
    if norm_sqr > geometry.p_max * (1.0 + 1e-12) {
        return Err(Error::Constraint(format!(
            "configuration power {norm_sqr} exceeds p_max {}",
            geometry.p_max
        )));
    }
    Ok(w)
}

fn check_pilot(pilot: Complex64) -> Result<()> {
    if (pilot.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("pilot must have unit power, |x| = {}", pilot.norm())));
    }
    Ok(())
}

/// Uplink reception: per RFC `i` and subcarrier `l` returns
/// `w~_i h~_i x + w~_i n~` where `w~_i` is the conjugated configuration
/// sub-vector of row `i` and the thermal noise is complex Gaussian with
/// per-element variance `noise_power`.
pub fn receive(
    geometry: &DmaGeometry,
    weights: &DmaWeights,
    channel: &ChannelTensor,
    pilot: Complex64,
    noise_power: f64,
    seed: u64,
) -> Result<RxSignal> {
    let mut rng = rng::rng_from_seed(seed);
    receive_with_rng(geometry, weights, channel, pilot, noise_power, &mut rng)
}

/// Same as [`receive`] but drawing noise from a caller-owned stream, so that
/// multi-round procedures consume one stream deterministically.
pub fn receive_with_rng(
    geometry: &DmaGeometry,
    weights: &DmaWeights,
    channel: &ChannelTensor,
    pilot: Complex64,
    noise_power: f64,
    rng: &mut ChaCha12Rng,
) -> Result<RxSignal> {
    check_pilot(pilot)?;
    if noise_power < 0.0 {
        return Err(Error::Domain(format!("noise power must be non-negative, got {noise_power}")));
    }
    let n = geometry.n();
    if weights.as_slice().len() != n {
        return Err(Error::Dimension(format!(
            "weights length {} does not match geometry N = {n}",
            weights.as_slice().len()
        )));
    }
    if channel.n() != n {
        return Err(Error::Dimension(format!(
            "channel has {} elements, geometry has {n}",
            channel.n()
        )));
    }
    let l = channel.n_sub();
    let mut samples = Vec::with_capacity(geometry.n_rf * l);
    for i in 0..geometry.n_rf {
        for sub in 0..l {
            let mut y = Complex64::ZERO;
            for j in 0..geometry.n_e {
                let idx = i * geometry.n_e + j;
                let w_conj = weights.as_slice()[idx].conj();
                let noise = if noise_power > 0.0 {
                    rng::complex_normal(rng, noise_power)
                } else {
                    Complex64::ZERO
                };
                y += w_conj * (channel.at(idx, sub) * pilot + noise);
            }
            samples.push(y);
        }
    }
    Ok(RxSignal { n_rf: geometry.n_rf, n_sub: l, samples })
}

/// Pilot-sparse channel estimation: `n_e` rounds, each zeroing every column
/// except one probed at `probe_phase` across all rows simultaneously. The
/// known factor `conj(w) x` is divided out of each RFC observation, so with
/// zero noise the estimate equals the true channel exactly and with noise
/// the per-element error is `n~ / x`.
pub fn estimate_channel(
    geometry: &DmaGeometry,
    channel: &ChannelTensor,
    pilot: Complex64,
    noise_power: f64,
    probe_phase: f64,
    seed: u64,
) -> Result<ChannelEstimate> {
    check_pilot(pilot)?;
    if probe_phase <= ZERO_PHASE || probe_phase > std::f64::consts::FRAC_PI_2 {
        return Err(Error::Domain(format!(
            "probe phase {probe_phase} must lie in (-pi/2, pi/2]: the zero-phase probe has no response"
        )));
    }
    let n = geometry.n();
    if channel.n() != n {
        return Err(Error::Dimension(format!(
            "channel has {} elements, geometry has {n}",
            channel.n()
        )));
    }
    let l = channel.n_sub();
    let mut rng = rng::rng_from_seed(seed);
    let mut real = vec![0.0; n * l];
    let mut imag = vec![0.0; n * l];
    for probe_col in 0..geometry.n_e {
        let mut phases = vec![ZERO_PHASE; n];
        for i in 0..geometry.n_rf {
            phases[i * geometry.n_e + probe_col] = probe_phase;
        }
        let weights = build_weights(geometry, &PhaseShifts::new(phases)?)?;
        let rx = receive_with_rng(geometry, &weights, channel, pilot, noise_power, &mut rng)?;
        for i in 0..geometry.n_rf {
            let idx = i * geometry.n_e + probe_col;
            let known = weights.as_slice()[idx].conj() * pilot;
            for sub in 0..l {
                let h_hat = rx.at(i, sub) / known;
                real[idx * l + sub] = h_hat.re;
                imag[idx * l + sub] = h_hat.im;
            }
        }
    }
    ChannelEstimate::new(n, l, real, imag, noise_power)
}
