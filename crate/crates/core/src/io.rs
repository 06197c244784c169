//! On-disk formats: channel-estimate records, dataset directories, model
//! checkpoints, and fingerprint databases.
//!
//! Binary payloads are little-endian `f64`. Manifests are TOML. All writers
//! are deterministic: the same in-memory state always produces the same
//! bytes.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::ar::ArParams;
use crate::chansim::{AreaGrid, Dataset, ReflectorLayout, SimConfig};
use crate::dma::ChannelEstimate;
use crate::error::{Error, Result};
use crate::mmhsa::{MmhsaConfig, MmhsaParams};

const DMAC_MAGIC: &[u8; 4] = b"DMAC";
const DMAP_MAGIC: &[u8; 4] = b"DMAP";
const FORMAT_VERSION: u16 = 1;

fn write_u16<W: Write>(w: &mut W, v: u16) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, vs: &[f64]) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf)?;
    Ok(u16::from_le_bytes(buf))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Write one channel-estimate record: magic, version, `N`, `L`, then the
/// `N * L` entries element-major as interleaved (re, im) pairs.
pub fn write_estimate_record<W: Write>(w: &mut W, estimate: &ChannelEstimate) -> Result<()> {
    w.write_all(DMAC_MAGIC)?;
    write_u16(w, FORMAT_VERSION)?;
    write_u32(w, estimate.n as u32)?;
    write_u32(w, estimate.l as u32)?;
    let mut interleaved = Vec::with_capacity(2 * estimate.n * estimate.l);
    for idx in 0..estimate.n * estimate.l {
        interleaved.push(estimate.real[idx]);
        interleaved.push(estimate.imag[idx]);
    }
    write_f64s(w, &interleaved)
}

/// Read one channel-estimate record. `noise_power` is metadata carried by
/// the surrounding manifest, not the record itself.
pub fn read_estimate_record<R: Read>(r: &mut R, noise_power: f64) -> Result<ChannelEstimate> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DMAC_MAGIC {
        return Err(Error::Format(format!("bad estimate record magic {magic:?}")));
    }
    let version = read_u16(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported estimate record version {version}")));
    }
    let n = read_u32(r)? as usize;
    let l = read_u32(r)? as usize;
    let interleaved = read_f64s(r, 2 * n * l)?;
    let mut real = Vec::with_capacity(n * l);
    let mut imag = Vec::with_capacity(n * l);
    for pair in interleaved.chunks_exact(2) {
        real.push(pair[0]);
        imag.push(pair[1]);
    }
    ChannelEstimate::new(n, l, real, imag, noise_power)
}

fn write_positions<W: Write>(w: &mut W, positions: &[[f64; 2]]) -> Result<()> {
    w.write_all(DMAP_MAGIC)?;
    write_u16(w, FORMAT_VERSION)?;
    write_u32(w, positions.len() as u32)?;
    for p in positions {
        write_f64s(w, p)?;
    }
    Ok(())
}

fn read_positions<R: Read>(r: &mut R) -> Result<Vec<[f64; 2]>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DMAP_MAGIC {
        return Err(Error::Format(format!("bad position file magic {magic:?}")));
    }
    let version = read_u16(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported position file version {version}")));
    }
    let count = read_u32(r)? as usize;
    let flat = read_f64s(r, 2 * count)?;
    Ok(flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
}

/// Everything needed to regenerate the simulation behind a stored dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u16,
    /// Base seed as a decimal string (TOML integers are signed 64-bit).
    pub seed: String,
    pub d_count: usize,
    pub t_len: usize,
    pub n_rf: usize,
    pub n_e: usize,
    pub wavelength: f64,
    pub permittivity: f64,
    pub subcarrier_freqs: Vec<f64>,
    pub n_paths: usize,
    pub noise_power: f64,
    pub gain_scale: f64,
    pub probe_phase: f64,
    pub area: AreaGrid,
    pub layout: ReflectorLayout,
    /// Trajectory indices used for training; the rest are held out.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetManifest {
    pub fn seed_value(&self) -> Result<u64> {
        self.seed
            .parse()
            .map_err(|_| Error::Format(format!("manifest seed {:?} is not a u64", self.seed)))
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            n_paths: self.n_paths,
            noise_power: self.noise_power,
            gain_scale: self.gain_scale,
            probe_phase: self.probe_phase,
        }
    }
}

/// A trajectory as stored on disk: positions plus per-step estimates (the
/// ground-truth channel tensors are regenerable from the manifest).
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrajectory {
    pub positions: Vec<[f64; 2]>,
    pub estimates: Vec<ChannelEstimate>,
}

fn traj_file(dir: &Path, idx: usize, ext: &str) -> std::path::PathBuf {
    dir.join(format!("traj-{idx:04}.{ext}"))
}

/// Write a dataset directory: `manifest.toml` plus one estimate file and
/// one position file per trajectory.
pub fn write_dataset(dir: &Path, dataset: &Dataset, manifest: &DatasetManifest) -> Result<()> {
    if dataset.trajectories.len() != manifest.d_count {
        return Err(Error::Dimension(format!(
            "dataset has {} trajectories, manifest says {}",
            dataset.trajectories.len(),
            manifest.d_count
        )));
    }
    fs::create_dir_all(dir)?;
    let text = toml::to_string(manifest)
        .map_err(|e| Error::Format(format!("manifest serialization failed: {e}")))?;
    fs::write(dir.join("manifest.toml"), text)?;
    for (idx, traj) in dataset.trajectories.iter().enumerate() {
        let mut est = Vec::new();
        for step in &traj.steps {
            write_estimate_record(&mut est, &step.estimate)?;
        }
        fs::write(traj_file(dir, idx, "est"), est)?;
        let mut pos = Vec::new();
        let positions: Vec<[f64; 2]> = traj.steps.iter().map(|s| s.position).collect();
        write_positions(&mut pos, &positions)?;
        fs::write(traj_file(dir, idx, "pos"), pos)?;
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(dir.join("manifest.toml"))?;
    toml::from_str(&text).map_err(|e| Error::Format(format!("manifest parse failed: {e}")))
}

/// Read every trajectory of a dataset directory back.
pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<StoredTrajectory>)> {
    let manifest = read_manifest(dir)?;
    let mut trajectories = Vec::with_capacity(manifest.d_count);
    for idx in 0..manifest.d_count {
        let est_bytes = fs::read(traj_file(dir, idx, "est"))?;
        let mut cursor = est_bytes.as_slice();
        let mut estimates = Vec::with_capacity(manifest.t_len);
        for _ in 0..manifest.t_len {
            estimates.push(read_estimate_record(&mut cursor, manifest.noise_power)?);
        }
        if !cursor.is_empty() {
            return Err(Error::Format(format!(
                "trajectory {idx} estimate file has trailing bytes"
            )));
        }
        let pos_bytes = fs::read(traj_file(dir, idx, "pos"))?;
        let positions = read_positions(&mut pos_bytes.as_slice())?;
        if positions.len() != estimates.len() {
            return Err(Error::Format(format!(
                "trajectory {idx}: {} positions but {} estimates",
                positions.len(),
                estimates.len()
            )));
        }
        trajectories.push(StoredTrajectory { positions, estimates });
    }
    Ok((manifest, trajectories))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelManifest {
    version: u16,
    config: MmhsaConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RefinerFile {
    version: u16,
    gamma: f64,
    z_x: f64,
    z_y: f64,
}

/// Save a trained model: `mmhsa.toml` (config plus tensor directory),
/// `mmhsa.bin` (all tensor data concatenated in directory order), and
/// `refiner.toml` (the three refiner scalars).
pub fn save_checkpoint(
    dir: &Path,
    config: &MmhsaConfig,
    params: &MmhsaParams,
    ar: &ArParams,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let named = params.named_tensors();
    let manifest = ModelManifest {
        version: FORMAT_VERSION,
        config: config.clone(),
        tensors: named
            .iter()
            .map(|(name, t)| TensorEntry { name: name.clone(), shape: t.shape.clone() })
            .collect(),
    };
    let text = toml::to_string(&manifest)
        .map_err(|e| Error::Format(format!("model manifest serialization failed: {e}")))?;
    fs::write(dir.join("mmhsa.toml"), text)?;
    let mut blob = Vec::new();
    for (_, t) in &named {
        write_f64s(&mut blob, &t.data)?;
    }
    fs::write(dir.join("mmhsa.bin"), blob)?;
    let refiner = RefinerFile {
        version: FORMAT_VERSION,
        gamma: ar.gamma,
        z_x: ar.z[0],
        z_y: ar.z[1],
    };
    let text = toml::to_string(&refiner)
        .map_err(|e| Error::Format(format!("refiner serialization failed: {e}")))?;
    fs::write(dir.join("refiner.toml"), text)?;
    Ok(())
}

/// Load a checkpoint saved by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<(MmhsaConfig, MmhsaParams, ArParams)> {
    let text = fs::read_to_string(dir.join("mmhsa.toml"))?;
    let manifest: ModelManifest =
        toml::from_str(&text).map_err(|e| Error::Format(format!("model manifest parse failed: {e}")))?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", manifest.version)));
    }
    let blob = fs::read(dir.join("mmhsa.bin"))?;
    let values = read_f64s(&mut blob.as_slice(), blob.len() / 8)?;

    let mut params = MmhsaParams::init(&manifest.config, 0)?;
    let expected: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .iter()
        .map(|(name, t)| (name.clone(), t.shape.clone()))
        .collect();
    if manifest.tensors.len() != expected.len() {
        return Err(Error::Format(format!(
            "checkpoint lists {} tensors, model has {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let mut offset = 0usize;
    for (entry, (name, shape), tensor) in itertools_zip(&manifest.tensors, &expected, params.tensors_mut())
    {
        if &entry.name != name || &entry.shape != shape {
            return Err(Error::Format(format!(
                "checkpoint tensor {} {:?} does not match model tensor {} {:?}",
                entry.name, entry.shape, name, shape
            )));
        }
        let len = tensor.numel();
        if offset + len > values.len() {
            return Err(Error::Format("checkpoint blob shorter than its directory".into()));
        }
        tensor.data.copy_from_slice(&values[offset..offset + len]);
        offset += len;
    }
    if offset != values.len() {
        return Err(Error::Format("checkpoint blob longer than its directory".into()));
    }

    let text = fs::read_to_string(dir.join("refiner.toml"))?;
    let refiner: RefinerFile =
        toml::from_str(&text).map_err(|e| Error::Format(format!("refiner parse failed: {e}")))?;
    if refiner.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported refiner version {}", refiner.version)));
    }
    let ar = ArParams { gamma: refiner.gamma, z: [refiner.z_x, refiner.z_y] };
    Ok((manifest.config, params, ar))
}

fn itertools_zip<'a, 'b, T, U, V>(
    a: &'a [T],
    b: &'b [U],
    c: Vec<V>,
) -> impl Iterator<Item = (&'a T, &'b U, V)> {
    a.iter().zip(b).zip(c).map(|((x, y), z)| (x, y, z))
}

/// Save a fingerprint database: one text header line
/// (`DMAF <version> <n_rf> <n_sub> <n_records>`) followed by the binary
/// body, per record `(x, y, rssi...)` little-endian.
pub fn save_fingerprint_db(path: &Path, db: &crate::fingerprint::FingerprintDb) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "DMAF {} {} {} {}", FORMAT_VERSION, db.n_rf, db.n_sub, db.records.len())?;
    for record in &db.records {
        if record.rssi.len() != db.n_rf * db.n_sub {
            return Err(Error::Dimension(format!(
                "record at ({}, {}) has {} RSSI entries, expected {}",
                record.position[0],
                record.position[1],
                record.rssi.len(),
                db.n_rf * db.n_sub
            )));
        }
        write_f64s(&mut out, &record.position)?;
        write_f64s(&mut out, &record.rssi)?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_fingerprint_db(path: &Path) -> Result<crate::fingerprint::FingerprintDb> {
    let bytes = fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("fingerprint file has no header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::Format("fingerprint header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "DMAF" {
        return Err(Error::Format(format!("bad fingerprint header {header:?}")));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::Format(format!("bad fingerprint header field {what}: {s:?}")))
    };
    let version = parse(fields[1], "version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Format(format!("unsupported fingerprint version {version}")));
    }
    let n_rf = parse(fields[2], "n_rf")?;
    let n_sub = parse(fields[3], "n_sub")?;
    let n_records = parse(fields[4], "n_records")?;
    let record_len = 2 + n_rf * n_sub;
    let body = &bytes[newline + 1..];
    if body.len() != n_records * record_len * 8 {
        return Err(Error::Format(format!(
            "fingerprint body is {} bytes, expected {}",
            body.len(),
            n_records * record_len * 8
        )));
    }
    let mut cursor = body;
    let mut records = Vec::with_capacity(n_records);
    for _ in 0..n_records {
        let flat = read_f64s(&mut cursor, record_len)?;
        records.push(crate::fingerprint::FingerprintRecord {
            position: [flat[0], flat[1]],
            rssi: flat[2..].to_vec(),
        });
    }
    Ok(crate::fingerprint::FingerprintDb { n_rf, n_sub, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chansim::{make_dataset, AreaGrid, ReflectorLayout, SimConfig};
    use crate::dma::DmaGeometry;
    use crate::fingerprint::{build_db, FingerprintDb, FingerprintRecord};

    fn small_estimate() -> ChannelEstimate {
        ChannelEstimate::new(2, 2, vec![1.0, -2.5, 0.0, 4.0], vec![0.5, 0.0, -1.0, 2.0], 1e-9)
            .unwrap()
    }

    #[test]
    fn estimate_record_round_trip() {
        let est = small_estimate();
        let mut buf = Vec::new();
        write_estimate_record(&mut buf, &est).unwrap();
        assert_eq!(&buf[..4], b"DMAC");
        assert_eq!(buf.len(), 4 + 2 + 4 + 4 + 8 * 8);
        let back = read_estimate_record(&mut buf.as_slice(), 1e-9).unwrap();
        assert_eq!(back, est);
    }

    #[test]
    fn estimate_record_rejects_corruption() {
        let est = small_estimate();
        let mut buf = Vec::new();
        write_estimate_record(&mut buf, &est).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_estimate_record(&mut bad.as_slice(), 0.0), Err(Error::Format(_))));
        let truncated = &buf[..buf.len() - 3];
        assert!(read_estimate_record(&mut &truncated[..], 0.0).is_err());
        let mut wrong_version = buf.clone();
        wrong_version[4] = 9;
        assert!(matches!(
            read_estimate_record(&mut wrong_version.as_slice(), 0.0),
            Err(Error::Format(_))
        ));
    }

    fn tiny_dataset() -> (crate::chansim::Dataset, DatasetManifest) {
        let area = AreaGrid::new(-2.0, 2.0, -1.0, 1.0, 0.2, 2.0).unwrap();
        let geometry = DmaGeometry::uniform(2, 4, 0.0107, 6.0).unwrap();
        let layout = ReflectorLayout::desk_default();
        let sim = SimConfig::new(1, 1e-10, 1.0);
        let freqs = vec![27.9998e9, 28.0002e9];
        let dataset = make_dataset(&area, &geometry, &layout, &sim, &freqs, 3, 4, 11).unwrap();
        let manifest = DatasetManifest {
            version: 1,
            seed: "11".into(),
            d_count: 3,
            t_len: 4,
            n_rf: 2,
            n_e: 4,
            wavelength: 0.0107,
            permittivity: 6.0,
            subcarrier_freqs: freqs,
            n_paths: 1,
            noise_power: 1e-10,
            gain_scale: 1.0,
            probe_phase: std::f64::consts::FRAC_PI_2,
            area,
            layout,
            train: vec![0],
            test: vec![1, 2],
        };
        (dataset, manifest)
    }

    #[test]
    fn dataset_directory_round_trip() {
        let (dataset, manifest) = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &dataset, &manifest).unwrap();
        let (back_manifest, back) = read_dataset(dir.path()).unwrap();
        assert_eq!(back_manifest, manifest);
        assert_eq!(back_manifest.seed_value().unwrap(), 11);
        assert_eq!(back.len(), 3);
        for (stored, orig) in back.iter().zip(&dataset.trajectories) {
            assert_eq!(stored.positions.len(), 4);
            for (t, step) in orig.steps.iter().enumerate() {
                assert_eq!(stored.positions[t], step.position);
                assert_eq!(stored.estimates[t], step.estimate);
            }
        }
    }

    #[test]
    fn dataset_write_is_byte_stable() {
        let (dataset, manifest) = tiny_dataset();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_dataset(a.path(), &dataset, &manifest).unwrap();
        write_dataset(b.path(), &dataset, &manifest).unwrap();
        for entry in fs::read_dir(a.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let left = fs::read(a.path().join(&name)).unwrap();
            let right = fs::read(b.path().join(&name)).unwrap();
            assert_eq!(left, right, "file {name:?} differs between identical writes");
        }
    }

    #[test]
    fn manifest_rejects_unknown_fields() {
        let (dataset, manifest) = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &dataset, &manifest).unwrap();
        let path = dir.path().join("manifest.toml");
        let mut text = fs::read_to_string(&path).unwrap();
        // Top of the file, so the key lands in the manifest root table.
        text.insert_str(0, "mystery_knob = 3\n");
        fs::write(&path, text).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let config = MmhsaConfig {
            n: 4,
            l: 2,
            patch: 2,
            d_hidden: 8,
            n_blocks: 2,
            n_heads: 2,
            mlp_ratio: 2,
            head_hidden: 8,
            input_scale: 1e4,
        };
        let params = MmhsaParams::init(&config, 123).unwrap();
        let ar = ArParams { gamma: 1.5, z: [0.2, 0.25] };
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &config, &params, &ar).unwrap();
        let (back_config, back_params, back_ar) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back_config, config);
        assert_eq!(back_ar, ar);
        for ((name_a, a), (name_b, b)) in
            params.named_tensors().iter().zip(back_params.named_tensors().iter())
        {
            assert_eq!(name_a, name_b);
            assert_eq!(a.shape, b.shape);
            assert_eq!(a.data, b.data, "tensor {name_a} changed across the round trip");
        }
    }

    #[test]
    fn checkpoint_rejects_truncated_blob() {
        let config = MmhsaConfig {
            n: 4,
            l: 2,
            patch: 2,
            d_hidden: 8,
            n_blocks: 1,
            n_heads: 2,
            mlp_ratio: 2,
            head_hidden: 8,
            input_scale: 1.0,
        };
        let params = MmhsaParams::init(&config, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &config, &params, &ArParams::default()).unwrap();
        let blob_path = dir.path().join("mmhsa.bin");
        let blob = fs::read(&blob_path).unwrap();
        fs::write(&blob_path, &blob[..blob.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn fingerprint_db_round_trip() {
        let area = AreaGrid::new(-1.0, 1.0, -0.4, 0.4, 0.2, 2.0).unwrap();
        let geometry = DmaGeometry::uniform(2, 4, 0.0107, 6.0).unwrap();
        let layout = ReflectorLayout::desk_default();
        let sim = SimConfig::new(1, 1e-12, 1.0);
        let freqs = vec![27.9998e9, 28.0002e9];
        let db = build_db(&area, &geometry, &layout, &sim, &freqs, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fingerprints.db");
        save_fingerprint_db(&path, &db).unwrap();
        let back = load_fingerprint_db(&path).unwrap();
        assert_eq!(back, db);
    }

    #[test]
    fn fingerprint_file_validates_header_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fp.db");
        fs::write(&path, b"WRONG 1 2 2 0\n").unwrap();
        assert!(matches!(load_fingerprint_db(&path), Err(Error::Format(_))));
        let db = FingerprintDb {
            n_rf: 1,
            n_sub: 1,
            records: vec![FingerprintRecord { position: [0.0, 0.2], rssi: vec![1e-9] }],
        };
        save_fingerprint_db(&path, &db).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_fingerprint_db(&path), Err(Error::Format(_))));
    }
}
