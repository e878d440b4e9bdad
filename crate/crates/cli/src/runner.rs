//! Experiment orchestration: dispatches a validated configuration to the
//! library drivers and emits CSV series, JSON metadata and binary
//! snapshots. Partial outputs are removed when a run fails.

use crate::config::{ExperimentConfig, Kind};
use kac_kinetic::chaos::{chaos_experiment, relaxation_experiment, lln_rate_experiment, InitialData};
use kac_kinetic::entropy::{entropy_production, fisher_information, relative_entropy, EntropyReport};
use kac_kinetic::kac;
use kac_kinetic::limit::{evolve_fourier, GridDensity, Maxwellian};
use kac_kinetic::metrics::{check_comparisons, write_comparison_csv};
use kac_kinetic::sampling::{
    empirical_cloud, sample_sphere_conditioned, sample_tensorized, BaselineMetric,
};
use kac_kinetic::streams::derive_rng;
use num_complex::Complex64;
use serde_json::json;
use std::path::PathBuf;
use std::time::Instant;

/// Collects emitted files so failures can clean up after themselves.
struct Emitter {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Emitter {
    fn new(dir: &str) -> anyhow::Result<Self> {
        let dir = PathBuf::from(dir);
        std::fs::create_dir_all(&dir)?;
        Ok(Emitter {
            dir,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn cleanup(&self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
    }
}

pub fn run(cfg: &ExperimentConfig, kind: Kind) -> anyhow::Result<()> {
    let mut emitter = Emitter::new(&cfg.out_dir)?;
    let started = Instant::now();
    let result = dispatch(cfg, kind, &mut emitter, started);
    if result.is_err() {
        emitter.cleanup();
    }
    result
}

fn dispatch(
    cfg: &ExperimentConfig,
    kind: Kind,
    emitter: &mut Emitter,
    started: Instant,
) -> anyhow::Result<()> {
    match kind {
        Kind::Simulate => simulate(cfg, emitter, started),
        Kind::Chaos => chaos(cfg, emitter, started),
        Kind::Relaxation => relaxation(cfg, emitter, started),
        Kind::Lln => lln(cfg, emitter, started),
        Kind::MetricsCheck => metrics_check(cfg, emitter, started),
        Kind::EntropyTrack => entropy_track(cfg, emitter, started),
        Kind::Validate => Ok(()),
    }
}

fn metadata(
    cfg: &ExperimentConfig,
    started: Instant,
    extra: serde_json::Value,
) -> serde_json::Value {
    json!({
        "config": cfg,
        "library_version": env!("CARGO_PKG_VERSION"),
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
        "extra": extra,
    })
}

fn emit_meta(
    emitter: &mut Emitter,
    name: &str,
    cfg: &ExperimentConfig,
    started: Instant,
    extra: serde_json::Value,
) -> anyhow::Result<()> {
    let meta = metadata(cfg, started, extra);
    emitter.write(name, serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok(())
}

fn simulate(cfg: &ExperimentConfig, emitter: &mut Emitter, started: Instant) -> anyhow::Result<()> {
    let kernel = cfg.kernel()?;
    let f0 = cfg.density()?;
    let e = cfg.energy()?;
    let mut init_rng = derive_rng(cfg.master_seed, &[0, 0]);
    let initial = if cfg.initial.conditioned {
        sample_sphere_conditioned(&f0, cfg.n, e, &mut init_rng)?
    } else {
        sample_tensorized(&f0, cfg.n, &mut init_rng)
    };
    let mut dyn_rng = derive_rng(cfg.master_seed, &[0, 1]);
    let record = kac::simulate(initial, &kernel, cfg.horizon, &cfg.checkpoints, &mut dyn_rng)?;
    let mut csv = String::from("t,energy,collisions\n");
    for (i, (&t, state)) in cfg
        .checkpoints
        .iter()
        .zip(&record.snapshots)
        .enumerate()
    {
        let mut buf = Vec::new();
        kac::write_snapshot(&mut buf, state, t)?;
        emitter.write(&format!("snapshot_{i:03}.bin"), &buf)?;
        csv.push_str(&format!("{t},{:.12e},{}\n", state.energy(), record.collision_count));
    }
    emitter.write("simulate.csv", csv.as_bytes())?;
    emit_meta(
        emitter,
        "simulate.meta.json",
        cfg,
        started,
        json!({"collisions": record.collision_count}),
    )
}

fn chaos(cfg: &ExperimentConfig, emitter: &mut Emitter, started: Instant) -> anyhow::Result<()> {
    let kernel = cfg.kernel()?;
    let f0 = cfg.density()?;
    let init = if cfg.initial.conditioned {
        InitialData::SphereConditioned
    } else {
        InitialData::Tensorized
    };
    let series = chaos_experiment(
        &f0,
        &kernel,
        cfg.n,
        cfg.m,
        cfg.ell,
        cfg.q,
        cfg.horizon,
        &cfg.checkpoints,
        init,
        cfg.bootstrap,
        cfg.master_seed,
    )?;
    let mut buf = Vec::new();
    series.write_csv(&mut buf)?;
    emitter.write("chaos.csv", &buf)?;
    emit_meta(
        emitter,
        "chaos.meta.json",
        cfg,
        started,
        serde_json::to_value(&series.meta)?,
    )
}

fn relaxation(
    cfg: &ExperimentConfig,
    emitter: &mut Emitter,
    started: Instant,
) -> anyhow::Result<()> {
    let kernel = cfg.kernel()?;
    let f0 = cfg.density()?;
    let e = cfg.energy()?;
    let series = relaxation_experiment(
        &f0,
        &kernel,
        cfg.n,
        cfg.m,
        cfg.ell,
        e,
        cfg.horizon,
        &cfg.checkpoints,
        cfg.bootstrap,
        cfg.master_seed,
    )?;
    let mut buf = Vec::new();
    series.write_csv(&mut buf)?;
    emitter.write("relaxation.csv", &buf)?;
    emit_meta(
        emitter,
        "relaxation.meta.json",
        cfg,
        started,
        serde_json::to_value(&series.meta)?,
    )
}

fn lln(cfg: &ExperimentConfig, emitter: &mut Emitter, started: Instant) -> anyhow::Result<()> {
    let f0 = cfg.density()?;
    let metric = match cfg.metric.as_str() {
        "w1" => BaselineMetric::W1Resampled,
        "hneg1sq" => BaselineMetric::HNeg1Squared,
        other => anyhow::bail!("unknown lln metric '{other}'"),
    };
    let report = lln_rate_experiment(&f0, metric, &cfg.n_schedule, cfg.m, cfg.master_seed)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    emitter.write("lln.csv", &buf)?;
    emit_meta(
        emitter,
        "lln.meta.json",
        cfg,
        started,
        json!({"slope": report.slope, "degenerate": report.slope.is_none()}),
    )
}

fn metrics_check(
    cfg: &ExperimentConfig,
    emitter: &mut Emitter,
    started: Instant,
) -> anyhow::Result<()> {
    let f0 = cfg.density()?;
    let mut rows = Vec::new();
    let mut violations = 0usize;
    for p in 0..cfg.pairs {
        let mut rng = derive_rng(cfg.master_seed, &[0x6d63, p as u64]);
        let f = empirical_cloud(&f0, cfg.atoms, &mut rng)?;
        let g = empirical_cloud(&f0, cfg.atoms, &mut rng)?;
        let pair_rows = check_comparisons(&f, &g, cfg.k)?;
        violations += pair_rows.iter().filter(|r| !r.pass).count();
        rows.extend(pair_rows);
    }
    let mut buf = Vec::new();
    write_comparison_csv(&rows, &mut buf)?;
    emitter.write("metrics_check.csv", &buf)?;
    emit_meta(
        emitter,
        "metrics_check.meta.json",
        cfg,
        started,
        json!({"pairs": cfg.pairs, "violations": violations}),
    )?;
    anyhow::ensure!(
        violations == 0,
        "{violations} comparison violations detected"
    );
    Ok(())
}

fn entropy_track(
    cfg: &ExperimentConfig,
    emitter: &mut Emitter,
    started: Instant,
) -> anyhow::Result<()> {
    let kernel = cfg.kernel()?;
    let d = cfg.kernel.d;
    anyhow::ensure!(d == 2, "entropy tracking runs on the d = 2 spectral solver");
    let e = cfg.energy()?;
    let a = cfg.anisotropy;
    let variances = [0.5 * e * (1.0 + a), 0.5 * e * (1.0 - a)];
    let f0 = GridDensity::tensor_fourier_from_fn(d, cfg.xi_max, cfg.grid_n, |xi| {
        let q = variances[0] * xi[0] * xi[0] + variances[1] * xi[1] * xi[1];
        Complex64::new((-0.5 * q).exp(), 0.0)
    })?;
    let stride = cfg.save_stride.max(1);
    let traj = evolve_fourier(&f0, &kernel, cfg.horizon, cfg.dt, stride)?;
    let gamma = Maxwellian::new(e, d)?;
    let mut buf = Vec::new();
    EntropyReport::write_csv_header(&mut buf)?;
    let mut entropies = Vec::new();
    for (i, state) in traj.states.iter().enumerate() {
        let grid = state.to_velocity_grid()?;
        let h = relative_entropy(&grid, &gamma)?;
        let fisher = fisher_information(&grid).ok();
        let production = if cfg.mc_budget > 0 {
            Some(entropy_production(
                &grid,
                &kernel,
                cfg.mc_budget,
                cfg.master_seed ^ i as u64,
            )?)
        } else {
            None
        };
        let report = EntropyReport {
            time: traj.times[i],
            relative_entropy: h,
            fisher,
            production,
            marginal: None,
        };
        report.write_csv_row(&mut buf)?;
        entropies.push(h);
    }
    emitter.write("entropy.csv", &buf)?;
    let monotone = entropies.windows(2).all(|w| w[1] <= w[0] + 1e-8);
    emit_meta(
        emitter,
        "entropy.meta.json",
        cfg,
        started,
        json!({"monotone": monotone, "initial": entropies.first(), "final": entropies.last()}),
    )
}
