//! The four experiment commands: gen-data, train, eval, sweep-paths.
//!
//! Every command is deterministic under a fixed seed: all randomness flows
//! from the effective seed through named sub-streams. Outputs carry a copy
//! of the resolved configuration for provenance.

use std::path::Path;
use std::time::Instant;

use dmatrack_core::ar::{self, ArParams};
use dmatrack_core::chansim::{make_dataset, ReflectorLayout};
use dmatrack_core::dma::{ChannelEstimate, DmaGeometry};
use dmatrack_core::fingerprint;
use dmatrack_core::io::{
    load_checkpoint, read_dataset, save_checkpoint, save_fingerprint_db, write_dataset,
    DatasetManifest, StoredTrajectory,
};
use dmatrack_core::mmhsa;
use dmatrack_core::rng::derive_seed;
use dmatrack_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::report::{fmt_f64, write_csv};

/// Method column labels, in CSV row order.
pub const METHODS: [&str; 3] = ["mmhsa", "mmhsa_ar", "fingerprint"];

/// One error sample, matching one row of `errors.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub trajectory: usize,
    pub step: usize,
    pub method: &'static str,
    pub error: f64,
}

/// Evaluation outcome over the test split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ErrorRow>,
    /// `(trajectory id, per-method mean error)` in test order.
    pub per_trajectory: Vec<(usize, [f64; 3])>,
    /// Mean of the per-trajectory means, per method.
    pub aggregate: [f64; 3],
    pub wall_seconds: f64,
}

/// Split `d_count` trajectory indices into disjoint train and test sets by
/// seeded shuffle. Both sides must be non-empty.
pub fn split_trajectories(d_count: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_train = (d_count as f64 * fraction).round() as usize;
    if n_train == 0 || n_train >= d_count {
        return Err(Error::Config(format!(
            "cannot split {d_count} trajectories with train fraction {fraction}: \
             both splits must be non-empty"
        )));
    }
    let mut order: Vec<usize> = (0..d_count).collect();
    use rand::seq::SliceRandom;
    let mut rng = dmatrack_core::rng::stream(seed, "train-test-split");
    order.shuffle(&mut rng);
    let mut train: Vec<usize> = order[..n_train].to_vec();
    let mut test: Vec<usize> = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn write_resolved_config(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), config.resolved_toml(seed)?)?;
    Ok(())
}

/// Generate and persist a dataset directory with its train/test split.
pub fn cmd_gen_data(config: &ExperimentConfig, out: &Path, seed: u64) -> Result<()> {
    let geometry = config.geometry()?;
    let layout = ReflectorLayout::desk_default();
    if config.channel.n_paths > layout.max_paths() {
        return Err(Error::Config(format!(
            "channel.n_paths = {} exceeds the {} reflectors of the layout",
            config.channel.n_paths,
            layout.max_paths()
        )));
    }
    let (train, test) =
        split_trajectories(config.dataset.d_count, config.dataset.train_fraction, seed)?;
    let sim = config.sim_config();
    let freqs = config.subcarrier_freqs();
    let dataset = make_dataset(
        &config.area,
        &geometry,
        &layout,
        &sim,
        &freqs,
        config.dataset.d_count,
        config.dataset.t_len,
        seed,
    )?;
    let manifest = DatasetManifest {
        version: 1,
        seed: seed.to_string(),
        d_count: config.dataset.d_count,
        t_len: config.dataset.t_len,
        n_rf: config.dma.n_rf,
        n_e: config.dma.n_e,
        wavelength: config.wavelength(),
        permittivity: config.dma.permittivity,
        subcarrier_freqs: freqs,
        n_paths: config.channel.n_paths,
        noise_power: config.noise_power(),
        gain_scale: config.channel.gain_scale,
        probe_phase: sim.probe_phase,
        area: config.area.clone(),
        layout,
        train,
        test,
    };
    write_dataset(out, &dataset, &manifest)?;
    write_resolved_config(config, seed, out)?;
    println!(
        "gen-data: {} trajectories x {} steps ({} train / {} test) -> {}",
        manifest.d_count,
        manifest.t_len,
        manifest.train.len(),
        manifest.test.len(),
        out.display()
    );
    Ok(())
}

fn check_compatible(config: &ExperimentConfig, manifest: &DatasetManifest) -> Result<()> {
    if config.dma.n_rf != manifest.n_rf
        || config.dma.n_e != manifest.n_e
        || config.dma.subcarrier_count != manifest.subcarrier_freqs.len()
    {
        return Err(Error::Config(format!(
            "config geometry {}x{} with {} subcarriers does not match dataset {}x{} with {}",
            config.dma.n_rf,
            config.dma.n_e,
            config.dma.subcarrier_count,
            manifest.n_rf,
            manifest.n_e,
            manifest.subcarrier_freqs.len()
        )));
    }
    Ok(())
}

/// Train the attention network on the shuffled train split, then the
/// refiner on the frozen network's ordered train-trajectory predictions.
pub fn cmd_train(config: &ExperimentConfig, data: &Path, out: &Path, seed: u64) -> Result<()> {
    let (manifest, stored) = read_dataset(data)?;
    check_compatible(config, &manifest)?;
    let mcfg = config.mmhsa_config();

    let samples: Vec<(&ChannelEstimate, [f64; 2])> = manifest
        .train
        .iter()
        .flat_map(|&d| {
            stored[d].estimates.iter().zip(&stored[d].positions).map(|(e, &p)| (e, p))
        })
        .collect();
    let start = Instant::now();
    let (params, mmhsa_history) = mmhsa::train(
        &samples,
        &mcfg,
        config.training.learning_rate,
        config.training.epochs,
        config.training.batch_size,
        derive_seed(seed, "train-mmhsa"),
    )?;
    let stage1 = start.elapsed().as_secs_f64();

    // Frozen-network predictions over the ordered train trajectories.
    let mut raw = Vec::with_capacity(manifest.train.len());
    let mut truth = Vec::with_capacity(manifest.train.len());
    for &d in &manifest.train {
        let preds: Result<Vec<[f64; 2]>> = stored[d]
            .estimates
            .iter()
            .map(|e| mmhsa::forward(e, &params, &mcfg))
            .collect();
        raw.push(preds?);
        truth.push(stored[d].positions.clone());
    }
    let (refiner, refiner_history) = ar::ar_train(
        &raw,
        &truth,
        &ArParams::default(),
        config.training.refiner_learning_rate,
        config.training.refiner_epochs,
    )?;
    let stage2 = start.elapsed().as_secs_f64() - stage1;

    save_checkpoint(out, &mcfg, &params, &refiner)?;
    write_csv(
        &out.join("mmhsa_loss.csv"),
        "epoch,loss",
        mmhsa_history.iter().enumerate().map(|(e, l)| format!("{e},{}", fmt_f64(*l))),
    )?;
    // The refiner history carries a final post-update entry; the CSV keeps
    // one row per epoch.
    write_csv(
        &out.join("refiner_loss.csv"),
        "epoch,loss",
        refiner_history[..config.training.refiner_epochs]
            .iter()
            .enumerate()
            .map(|(e, l)| format!("{e},{}", fmt_f64(*l))),
    )?;
    write_resolved_config(config, seed, out)?;
    println!(
        "train: stage 1 final loss {:.4} ({stage1:.1}s), stage 2 final loss {:.4} ({stage2:.1}s) -> {}",
        mmhsa_history.last().unwrap(),
        refiner_history.last().unwrap(),
        out.display()
    );
    Ok(())
}

fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Evaluate all three methods causally over the test split.
pub fn cmd_eval(
    config: &ExperimentConfig,
    data: &Path,
    checkpoint: &Path,
    out: &Path,
    seed_override: Option<u64>,
) -> Result<EvalReport> {
    let start = Instant::now();
    let (manifest, stored) = read_dataset(data)?;
    check_compatible(config, &manifest)?;
    let (mcfg, params, refiner) = load_checkpoint(checkpoint)?;
    let n = manifest.n_rf * manifest.n_e;
    if mcfg.n != n || mcfg.l != manifest.subcarrier_freqs.len() {
        return Err(Error::Config(format!(
            "checkpoint expects N = {}, L = {} but dataset provides N = {n}, L = {}",
            mcfg.n,
            mcfg.l,
            manifest.subcarrier_freqs.len()
        )));
    }
    let dataset_seed = manifest.seed_value()?;
    let eval_seed = seed_override.unwrap_or(dataset_seed);
    let geometry = DmaGeometry::uniform(
        manifest.n_rf,
        manifest.n_e,
        manifest.wavelength,
        manifest.permittivity,
    )?;
    let sim = manifest.sim_config();

    let db = fingerprint::build_db(
        &manifest.area,
        &geometry,
        &manifest.layout,
        &sim,
        &manifest.subcarrier_freqs,
        dataset_seed,
    )?;
    std::fs::create_dir_all(out)?;
    save_fingerprint_db(&out.join("fingerprints.db"), &db)?;

    let env_seed = derive_seed(dataset_seed, "environment");
    let mut rows = Vec::new();
    let mut per_trajectory = Vec::with_capacity(manifest.test.len());
    for &d in &manifest.test {
        let StoredTrajectory { positions, estimates } = &stored[d];
        let tracked = ar::track(estimates, &params, &mcfg, &refiner)?;
        let mut sums = [0.0; 3];
        for (t, ((raw, refined), &pos)) in tracked.iter().zip(positions).enumerate() {
            let rssi = fingerprint::measure_rssi(
                pos,
                &manifest.area,
                &geometry,
                &manifest.layout,
                &sim,
                &manifest.subcarrier_freqs,
                env_seed,
                derive_seed(eval_seed, &format!("eval-rssi-{d}-{t}")),
            )?;
            let (_, fp_pos) = fingerprint::query(&db, &rssi)?;
            let errors = [euclid(*raw, pos), euclid(*refined, pos), euclid(fp_pos, pos)];
            for (m, &err) in METHODS.iter().zip(&errors) {
                rows.push(ErrorRow { trajectory: d, step: t, method: m, error: err });
            }
            for (s, e) in sums.iter_mut().zip(&errors) {
                *s += e;
            }
        }
        let len = positions.len() as f64;
        per_trajectory.push((d, sums.map(|s| s / len)));
    }
    let mut aggregate = [0.0; 3];
    for (_, means) in &per_trajectory {
        for (a, m) in aggregate.iter_mut().zip(means) {
            *a += m;
        }
    }
    for a in &mut aggregate {
        *a /= per_trajectory.len() as f64;
    }

    write_csv(
        &out.join("errors.csv"),
        "trajectory,step,method,error",
        rows.iter().map(|r| format!("{},{},{},{}", r.trajectory, r.step, r.method, fmt_f64(r.error))),
    )?;
    write_csv(
        &out.join("summary.csv"),
        "method,mean_error",
        METHODS.iter().zip(&aggregate).map(|(m, a)| format!("{m},{}", fmt_f64(*a))),
    )?;
    write_csv(
        &out.join("per_trajectory.csv"),
        "trajectory,method,mean_error",
        per_trajectory.iter().flat_map(|(d, means)| {
            METHODS.iter().zip(*means).map(move |(m, e)| format!("{d},{m},{}", fmt_f64(e)))
        }),
    )?;
    write_resolved_config(config, eval_seed, out)?;

    let wall_seconds = start.elapsed().as_secs_f64();
    println!(
        "eval: mmhsa {:.3} m, mmhsa_ar {:.3} m, fingerprint {:.3} m over {} test trajectories ({wall_seconds:.1}s)",
        aggregate[0],
        aggregate[1],
        aggregate[2],
        per_trajectory.len()
    );
    Ok(EvalReport { rows, per_trajectory, aggregate, wall_seconds })
}

/// Run gen-data, train, and eval per path count with derived seeds and
/// collect the aggregate errors. Per-count failures are recorded and the
/// sweep continues.
pub fn cmd_sweep_paths(
    config: &ExperimentConfig,
    counts: &[usize],
    out: &Path,
    seed: u64,
) -> Result<()> {
    if counts.is_empty() {
        return Err(Error::Config("sweep-paths needs at least one path count".into()));
    }
    let layout = ReflectorLayout::desk_default();
    for &count in counts {
        if count == 0 || count > layout.max_paths() {
            return Err(Error::Config(format!(
                "path count {count} outside the layout's 1..={} reflectors",
                layout.max_paths()
            )));
        }
    }
    std::fs::create_dir_all(out)?;
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for &count in counts {
        let mut cfg = config.clone();
        cfg.channel.n_paths = count;
        let count_seed = derive_seed(seed, &format!("sweep-{count}"));
        let base = out.join(format!("paths-{count}"));
        let run = || -> Result<[f64; 3]> {
            cmd_gen_data(&cfg, &base.join("data"), count_seed)?;
            cmd_train(&cfg, &base.join("data"), &base.join("checkpoint"), count_seed)?;
            let report =
                cmd_eval(&cfg, &base.join("data"), &base.join("checkpoint"), &base.join("eval"), None)?;
            Ok(report.aggregate)
        };
        match run() {
            Ok(aggregate) => results.push((count, aggregate)),
            Err(e) => {
                eprintln!("sweep-paths: count {count} failed: {e}");
                failures.push((count, e.to_string()));
            }
        }
    }
    write_csv(
        &out.join("sweep.csv"),
        "n_paths,method,mean_error",
        results.iter().flat_map(|(count, aggregate)| {
            METHODS
                .iter()
                .zip(*aggregate)
                .map(move |(m, e)| format!("{count},{m},{}", fmt_f64(e)))
        }),
    )?;
    if !failures.is_empty() {
        write_csv(
            &out.join("failures.csv"),
            "n_paths,error",
            failures.iter().map(|(c, e)| format!("{c},{:?}", e)),
        )?;
    }
    write_resolved_config(config, seed, out)?;
    println!(
        "sweep-paths: {} counts succeeded, {} failed -> {}",
        results.len(),
        failures.len(),
        out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_examples() {
        let (train, test) = split_trajectories(10, 0.5, 3).unwrap();
        assert_eq!(train.len(), 5);
        assert_eq!(test.len(), 5);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        assert!(split_trajectories(1, 0.5, 3).is_err());

        // Deterministic and seed-sensitive.
        assert_eq!(split_trajectories(10, 0.5, 3).unwrap(), split_trajectories(10, 0.5, 3).unwrap());
        assert_ne!(split_trajectories(10, 0.5, 3).unwrap(), split_trajectories(10, 0.5, 4).unwrap());
    }

    #[test]
    fn split_is_sorted_and_disjoint() {
        let (train, test) = split_trajectories(17, 0.3, 9).unwrap();
        assert!(train.windows(2).all(|w| w[0] < w[1]));
        assert!(test.windows(2).all(|w| w[0] < w[1]));
        assert!(train.iter().all(|d| !test.contains(d)));
        assert_eq!(train.len() + test.len(), 17);
        assert_eq!(train.len(), 5);
    }
}
