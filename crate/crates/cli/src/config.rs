//! Experiment configuration: TOML with nested sections, unknown keys are a
//! hard error, and every field is validated with a field-level message.

use std::path::Path;

use dmatrack_core::chansim::{AreaGrid, SimConfig};
use dmatrack_core::dma::DmaGeometry;
use dmatrack_core::mmhsa::MmhsaConfig;
use dmatrack_core::{Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmaSection {
    pub n_rf: usize,
    pub n_e: usize,
    pub carrier_hz: f64,
    pub subcarrier_count: usize,
    pub subcarrier_spacing_hz: f64,
    pub permittivity: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub n_paths: usize,
    /// Estimation noise floor power per symbol, dBm.
    pub noise_dbm: f64,
    /// Multiplier on every path amplitude (transmit power proxy).
    pub gain_scale: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub d_count: usize,
    pub t_len: usize,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub patch: usize,
    pub d_hidden: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub mlp_ratio: usize,
    pub head_hidden: usize,
    pub input_scale: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub refiner_learning_rate: f64,
    pub refiner_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Accepted as an integer or a decimal string; written back as a string
    /// because derived sweep seeds exceed TOML's signed integer range.
    #[serde(with = "seed_format")]
    pub seed: u64,
    pub dma: DmaSection,
    pub area: AreaGrid,
    pub channel: ChannelSection,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub training: TrainingSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dma;
        if d.n_rf == 0 || d.n_e == 0 {
            return Err(Error::Config(format!(
                "dma.n_rf and dma.n_e must be positive, got {} and {}",
                d.n_rf, d.n_e
            )));
        }
        if d.carrier_hz <= 0.0 {
            return Err(Error::Config(format!("dma.carrier_hz must be positive, got {}", d.carrier_hz)));
        }
        if d.subcarrier_count == 0 {
            return Err(Error::Config("dma.subcarrier_count must be positive".into()));
        }
        if d.subcarrier_spacing_hz <= 0.0 {
            return Err(Error::Config(format!(
                "dma.subcarrier_spacing_hz must be positive, got {}",
                d.subcarrier_spacing_hz
            )));
        }
        if d.permittivity <= 0.0 {
            return Err(Error::Config(format!("dma.permittivity must be positive, got {}", d.permittivity)));
        }
        if self.channel.n_paths == 0 {
            return Err(Error::Config("channel.n_paths must be positive".into()));
        }
        if self.channel.gain_scale <= 0.0 {
            return Err(Error::Config(format!(
                "channel.gain_scale must be positive, got {}",
                self.channel.gain_scale
            )));
        }
        let ds = &self.dataset;
        if ds.d_count == 0 || ds.t_len < 2 {
            return Err(Error::Config(format!(
                "dataset.d_count must be positive and dataset.t_len at least 2, got {} and {}",
                ds.d_count, ds.t_len
            )));
        }
        if !(ds.train_fraction > 0.0 && ds.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "dataset.train_fraction must be inside (0, 1), got {}",
                ds.train_fraction
            )));
        }
        let t = &self.training;
        if t.learning_rate <= 0.0 || t.refiner_learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "training.learning_rate must be positive, got {} (refiner {})",
                t.learning_rate, t.refiner_learning_rate
            )));
        }
        if t.epochs == 0 || t.batch_size == 0 {
            return Err(Error::Config(format!(
                "training.epochs and training.batch_size must be positive, got {} and {}",
                t.epochs, t.batch_size
            )));
        }
        // Area and model sections are validated by their owning types.
        self.geometry()?;
        self.mmhsa_config().validate()?;
        AreaGrid::new(
            self.area.x_min,
            self.area.x_max,
            self.area.y_min,
            self.area.y_max,
            self.area.spacing,
            self.area.height,
        )?;
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.dma.carrier_hz
    }

    pub fn geometry(&self) -> Result<DmaGeometry> {
        DmaGeometry::uniform(self.dma.n_rf, self.dma.n_e, self.wavelength(), self.dma.permittivity)
    }

    /// Absolute subcarrier frequencies, centered on the carrier.
    pub fn subcarrier_freqs(&self) -> Vec<f64> {
        let l = self.dma.subcarrier_count;
        (0..l)
            .map(|k| {
                self.dma.carrier_hz
                    + (k as f64 - (l as f64 - 1.0) / 2.0) * self.dma.subcarrier_spacing_hz
            })
            .collect()
    }

    /// Noise variance in linear units from the dBm floor.
    pub fn noise_power(&self) -> f64 {
        10f64.powf((self.channel.noise_dbm - 30.0) / 10.0)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig::new(self.channel.n_paths, self.noise_power(), self.channel.gain_scale)
    }

    pub fn mmhsa_config(&self) -> MmhsaConfig {
        MmhsaConfig {
            n: self.dma.n_rf * self.dma.n_e,
            l: self.dma.subcarrier_count,
            patch: self.model.patch,
            d_hidden: self.model.d_hidden,
            n_blocks: self.model.n_blocks,
            n_heads: self.model.n_heads,
            mlp_ratio: self.model.mlp_ratio,
            head_hidden: self.model.head_hidden,
            input_scale: self.model.input_scale,
        }
    }

    /// Serialized copy written next to every artifact for provenance.
    pub fn resolved_toml(&self, effective_seed: u64) -> Result<String> {
        let mut copy = self.clone();
        copy.seed = effective_seed;
        toml::to_string(&copy).map_err(|e| Error::Format(format!("config serialization failed: {e}")))
    }
}

mod seed_format {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    struct SeedVisitor;

    impl Visitor<'_> for SeedVisitor {
        type Value = u64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a non-negative integer or decimal string")
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<u64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<u64, E> {
            u64::try_from(v).map_err(|_| E::custom(format!("seed must be non-negative, got {v}")))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<u64, E> {
            v.parse().map_err(|_| E::custom(format!("seed {v:?} is not a u64")))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        d.deserialize_any(SeedVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    pub fn example_toml() -> &'static str {
        r#"
seed = 7

[dma]
n_rf = 2
n_e = 4
carrier_hz = 28.0e9
subcarrier_count = 2
subcarrier_spacing_hz = 125.0e3
permittivity = 6.0

[area]
x_min = -2.0
x_max = 2.0
y_min = -1.0
y_max = 1.0
spacing = 0.2
height = 2.0

[channel]
n_paths = 1
noise_dbm = -60.0
gain_scale = 100.0

[dataset]
d_count = 4
t_len = 4
train_fraction = 0.5

[model]
patch = 2
d_hidden = 8
n_blocks = 1
n_heads = 2
mlp_ratio = 2
head_hidden = 8
input_scale = 100.0

[training]
learning_rate = 0.002
epochs = 2
batch_size = 2
refiner_learning_rate = 0.05
refiner_epochs = 3
"#
    }

    fn write_config(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn example_config_loads_and_round_trips() {
        let f = write_config(example_toml());
        let config = ExperimentConfig::load(f.path()).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.dma.n_rf, 2);
        let back: ExperimentConfig =
            toml::from_str(&config.resolved_toml(7).unwrap()).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn noise_dbm_conversion() {
        let f = write_config(example_toml());
        let config = ExperimentConfig::load(f.path()).unwrap();
        assert!((config.noise_power() - 1e-9).abs() < 1e-21);
    }

    #[test]
    fn subcarriers_are_centered() {
        let f = write_config(example_toml());
        let config = ExperimentConfig::load(f.path()).unwrap();
        let freqs = config.subcarrier_freqs();
        assert_eq!(freqs.len(), 2);
        assert!((freqs[0] - (28e9 - 62_500.0)).abs() < 1e-3);
        assert!((freqs[1] - (28e9 + 62_500.0)).abs() < 1e-3);
        let mean = (freqs[0] + freqs[1]) / 2.0;
        assert!((mean - 28e9).abs() < 1e-3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{}\n[typo_section]\nx = 1\n", example_toml());
        let f = write_config(&text);
        let err = ExperimentConfig::load(f.path()).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");
    }

    #[test]
    fn field_level_validation_messages() {
        let bad = example_toml().replace("train_fraction = 0.5", "train_fraction = 1.5");
        let f = write_config(&bad);
        let err = ExperimentConfig::load(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train_fraction"), "message was {msg}");

        let bad = example_toml().replace("n_heads = 2", "n_heads = 3");
        let f = write_config(&bad);
        assert!(ExperimentConfig::load(f.path()).is_err());
    }
}
