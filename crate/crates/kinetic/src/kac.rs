//! Event-driven simulation of the N-particle collision jump process.
//!
//! Pairs `(i, j)` collide after exponential waiting times; the total jump
//! rate carries the `1/N` time rescaling so that each particle undergoes
//! `O(1)` collisions per unit time. Hard spheres use either an exact
//! per-pair rate table (binary indexed tree, `O(N)` update per collision)
//! or rejection against the majorant `|v_i - v_j| <= 2 max_i |v_i|`.

use crate::model::{distance, CollisionKernel, ParticleState, SphereConstraint};
use crate::streams::derive_rng;
use crate::{KineticError, Result};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use std::io::{Read, Write};

/// Above this particle count hard spheres switch to rejection sampling.
pub const HS_EXACT_MAX_N: usize = 4096;

/// One collision event along a trajectory.
#[derive(Clone, Debug)]
pub struct JumpEvent {
    pub time: f64,
    pub pair: (usize, usize),
    pub sigma: Vec<f64>,
}

/// Result of a single step: either a collision or an absorbed state with
/// zero total rate (all velocities identical under hard spheres).
#[derive(Clone, Debug)]
pub enum StepOutcome {
    Jump(JumpEvent),
    Absorbed,
}

/// Snapshots of a single trajectory at the requested checkpoints.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub checkpoint_times: Vec<f64>,
    pub snapshots: Vec<ParticleState>,
    pub collision_count: u64,
    pub seed: u64,
    pub replica: u64,
}

/// Independent replicas of the same experiment.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub replicas: Vec<TrajectoryRecord>,
    pub checkpoint_times: Vec<f64>,
    pub master_seed: u64,
}

/// Total jump rate `(1/N) sum_{i<j} Gamma(|v_i - v_j|) * angular_mass`.
pub fn total_rate(state: &ParticleState, kernel: &CollisionKernel) -> f64 {
    let n = state.len();
    if kernel.is_maxwellian() {
        let pairs = n as f64 * (n as f64 - 1.0) / 2.0;
        return pairs / n as f64 * kernel.angular_mass();
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += kernel.gamma(distance(state.velocity(i), state.velocity(j)));
        }
    }
    sum * kernel.angular_mass() / n as f64
}

/// Binary indexed tree over per-pair rates, for exact weighted pair
/// sampling with `O(log n)` updates.
#[derive(Clone, Debug)]
pub struct RateTable {
    tree: Vec<f64>,
    leaves: Vec<f64>,
    updates_since_rebuild: u64,
}

impl RateTable {
    pub fn new(leaves: Vec<f64>) -> Self {
        let mut table = RateTable {
            tree: vec![0.0; leaves.len() + 1],
            leaves,
            updates_since_rebuild: 0,
        };
        table.rebuild();
        table
    }

    fn rebuild(&mut self) {
        self.tree.iter_mut().for_each(|x| *x = 0.0);
        let n = self.leaves.len();
        for i in 0..n {
            let mut idx = i + 1;
            while idx <= n {
                self.tree[idx] += self.leaves[i];
                idx += idx & idx.wrapping_neg();
            }
        }
        self.updates_since_rebuild = 0;
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let delta = value - self.leaves[i];
        self.leaves[i] = value;
        let mut idx = i + 1;
        while idx < self.tree.len() {
            self.tree[idx] += delta;
            idx += idx & idx.wrapping_neg();
        }
        self.updates_since_rebuild += 1;
        // periodic rebuild bounds floating-point drift of the totals
        if self.updates_since_rebuild >= 1 << 20 {
            self.rebuild();
        }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.leaves[i]
    }

    pub fn total(&self) -> f64 {
        let mut idx = self.leaves.len();
        let mut sum = 0.0;
        while idx > 0 {
            sum += self.tree[idx];
            idx -= idx & idx.wrapping_neg();
        }
        sum
    }

    /// Index of the leaf containing the prefix position `target` in
    /// `[0, total)`.
    pub fn sample(&self, target: f64) -> usize {
        let n = self.leaves.len();
        let mut pos = 0usize;
        let mut rem = target;
        let mut mask = n.next_power_of_two();
        while mask > 0 {
            let next = pos + mask;
            if next <= n && self.tree[next] < rem {
                rem -= self.tree[next];
                pos = next;
            }
            mask >>= 1;
        }
        pos.min(n - 1)
    }
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

fn pair_from_index(n: usize, mut p: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - i - 1;
        if p < row {
            return (i, i + 1 + p);
        }
        p -= row;
    }
    unreachable!("pair index out of range")
}

enum Sampler {
    /// Maxwellian kernels: constant rate, uniform pair.
    Uniform,
    /// Hard spheres, exact per-pair table of `Gamma(|v_i - v_j|)`.
    Exact(RateTable),
    /// Hard spheres, thinning against `2 max_i |v_i|`.
    Rejection { vmax: f64, events_since_refresh: u64 },
}

/// A single trajectory of the jump process.
pub struct JumpProcess {
    state: ParticleState,
    kernel: CollisionKernel,
    sampler: Sampler,
    time: f64,
    collisions: u64,
}

impl JumpProcess {
    pub fn new(initial: ParticleState, kernel: CollisionKernel) -> Result<Self> {
        if initial.len() < 2 {
            return Err(KineticError::InvalidConfig(
                "jump process requires N >= 2".into(),
            ));
        }
        if initial.dim() != kernel.dim() {
            return Err(KineticError::DimensionMismatch(format!(
                "state dimension {} != kernel dimension {}",
                initial.dim(),
                kernel.dim()
            )));
        }
        let sampler = if kernel.is_maxwellian() {
            Sampler::Uniform
        } else if initial.len() <= HS_EXACT_MAX_N {
            let n = initial.len();
            let mut leaves = vec![0.0; n * (n - 1) / 2];
            for i in 0..n {
                for j in (i + 1)..n {
                    leaves[pair_index(n, i, j)] =
                        kernel.gamma(distance(initial.velocity(i), initial.velocity(j)));
                }
            }
            Sampler::Exact(RateTable::new(leaves))
        } else {
            Sampler::Rejection {
                vmax: initial.max_speed(),
                events_since_refresh: 0,
            }
        };
        Ok(JumpProcess {
            state: initial,
            kernel,
            sampler,
            time: 0.0,
            collisions: 0,
        })
    }

    pub fn state(&self) -> &ParticleState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn collisions(&self) -> u64 {
        self.collisions
    }

    /// Current total jump rate (majorant rate in rejection mode).
    fn clock_rate(&self) -> f64 {
        let n = self.state.len() as f64;
        match &self.sampler {
            Sampler::Uniform => n * (n - 1.0) / 2.0 / n * self.kernel.angular_mass(),
            Sampler::Exact(table) => table.total() * self.kernel.angular_mass() / n,
            Sampler::Rejection { vmax, .. } => {
                n * (n - 1.0) / 2.0 / n * self.kernel.angular_mass() * 2.0 * vmax
            }
        }
    }

    /// Advances by one clock event. In rejection mode a thinned (rejected)
    /// candidate advances time without changing the state and recurses
    /// until a real collision happens or the rate vanishes.
    pub fn step(&mut self, rng: &mut impl Rng) -> StepOutcome {
        loop {
            let rate = self.clock_rate();
            if rate <= 0.0 {
                return StepOutcome::Absorbed;
            }
            let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            self.time += -u.ln() / rate;

            let n = self.state.len();
            let (i, j, accepted) = match &mut self.sampler {
                Sampler::Uniform => {
                    let p = rng.gen_range(0..n * (n - 1) / 2);
                    let (i, j) = pair_from_index(n, p);
                    (i, j, true)
                }
                Sampler::Exact(table) => {
                    let target = rng.gen::<f64>() * table.total();
                    let (i, j) = pair_from_index(n, table.sample(target));
                    (i, j, true)
                }
                Sampler::Rejection { vmax, .. } => {
                    let p = rng.gen_range(0..n * (n - 1) / 2);
                    let (i, j) = pair_from_index(n, p);
                    let rel = distance(self.state.velocity(i), self.state.velocity(j));
                    let accept = rng.gen::<f64>() * 2.0 * *vmax < rel;
                    (i, j, accept)
                }
            };
            if !accepted {
                continue;
            }

            let rel = distance(self.state.velocity(i), self.state.velocity(j));
            if rel <= 0.0 && !self.kernel.is_maxwellian() {
                // zero-rate pair can only be drawn through roundoff; skip
                continue;
            }
            let u_hat: Vec<f64> = if rel > 0.0 {
                self.state
                    .velocity(i)
                    .iter()
                    .zip(self.state.velocity(j))
                    .map(|(a, b)| (a - b) / rel)
                    .collect()
            } else {
                // Maxwellian kernels still jump at rate Gamma = 1; the
                // collision map is then the identity in any frame.
                let mut e = vec![0.0; self.state.dim()];
                e[0] = 1.0;
                e
            };
            let sigma = self.kernel.sample_sigma(&u_hat, rng);
            self.state.apply_collision(i, j, &sigma);
            self.collisions += 1;
            self.post_collision_update(i, j);
            return StepOutcome::Jump(JumpEvent {
                time: self.time,
                pair: (i, j),
                sigma,
            });
        }
    }

    fn post_collision_update(&mut self, i: usize, j: usize) {
        let n = self.state.len();
        match &mut self.sampler {
            Sampler::Uniform => {}
            Sampler::Exact(table) => {
                for k in 0..n {
                    if k == i && k == j {
                        continue;
                    }
                    if k != i {
                        let (a, b) = if k < i { (k, i) } else { (i, k) };
                        table.set(
                            pair_index(n, a, b),
                            self.kernel
                                .gamma(distance(self.state.velocity(a), self.state.velocity(b))),
                        );
                    }
                    if k != j && k != i {
                        let (a, b) = if k < j { (k, j) } else { (j, k) };
                        table.set(
                            pair_index(n, a, b),
                            self.kernel
                                .gamma(distance(self.state.velocity(a), self.state.velocity(b))),
                        );
                    }
                }
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                table.set(
                    pair_index(n, a, b),
                    self.kernel
                        .gamma(distance(self.state.velocity(a), self.state.velocity(b))),
                );
            }
            Sampler::Rejection {
                vmax,
                events_since_refresh,
            } => {
                let si = crate::model::norm(self.state.velocity(i));
                let sj = crate::model::norm(self.state.velocity(j));
                *vmax = vmax.max(si).max(sj);
                *events_since_refresh += 1;
                // tighten the majorant occasionally; it may only have grown
                if *events_since_refresh >= 8192 {
                    *vmax = self.state.max_speed();
                    *events_since_refresh = 0;
                }
            }
        }
    }
}

/// Runs the jump process to `horizon`, snapshotting at each checkpoint.
///
/// Sample paths are piecewise constant and right-continuous, so the
/// snapshot at checkpoint time `t` is the state after the last jump with
/// time `<= t`. Deterministic given the stream.
pub fn simulate(
    initial: ParticleState,
    kernel: &CollisionKernel,
    horizon: f64,
    checkpoints: &[f64],
    rng: &mut impl Rng,
) -> Result<TrajectoryRecord> {
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(KineticError::InvalidConfig(
            "checkpoints must be sorted".into(),
        ));
    }
    if checkpoints.iter().any(|&t| t < 0.0 || t > horizon) {
        return Err(KineticError::InvalidConfig(
            "checkpoints must lie within [0, horizon]".into(),
        ));
    }
    let mut process = JumpProcess::new(initial, kernel.clone())?;
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut next = 0usize;
    // The jump that lands beyond the horizon is generated (and applied to
    // the internal state) but belongs to (horizon, infinity); it is
    // excluded from the reported collision count.
    let mut overshoot = 0u64;
    loop {
        // Try one more jump; every checkpoint strictly before the jump
        // time sees the current (pre-jump) state.
        let pre_state = process.state().clone();
        match process.step(rng) {
            StepOutcome::Jump(event) => {
                while next < checkpoints.len() && checkpoints[next] < event.time {
                    let mut snap = pre_state.clone();
                    snap.refresh_caches();
                    snapshots.push(snap);
                    next += 1;
                }
                if event.time > horizon {
                    // remaining checkpoints (all <= horizon < event.time)
                    // were already emitted
                    overshoot = 1;
                    break;
                }
            }
            StepOutcome::Absorbed => {
                while next < checkpoints.len() {
                    let mut snap = pre_state.clone();
                    snap.refresh_caches();
                    snapshots.push(snap);
                    next += 1;
                }
                break;
            }
        }
    }
    Ok(TrajectoryRecord {
        checkpoint_times: checkpoints.to_vec(),
        snapshots,
        collision_count: process.collisions() - overshoot,
        seed: 0,
        replica: 0,
    })
}

/// Binary snapshot header magic.
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"KACS";
pub const SNAPSHOT_VERSION: u16 = 1;

/// Writes one state snapshot in the binary checkpoint format.
pub fn write_snapshot(out: &mut impl Write, state: &ParticleState, time: f64) -> Result<()> {
    out.write_all(SNAPSHOT_MAGIC)?;
    out.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    out.write_all(&(state.dim() as u16).to_le_bytes())?;
    out.write_all(&(state.len() as u64).to_le_bytes())?;
    out.write_all(&time.to_le_bytes())?;
    out.write_all(&state.energy().to_le_bytes())?;
    for x in state.velocities() {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Reads one snapshot written by [`write_snapshot`]. Returns the state and
/// its timestamp.
pub fn read_snapshot(input: &mut impl Read) -> Result<(ParticleState, f64)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(KineticError::MalformedSnapshot("bad magic".into()));
    }
    let mut buf2 = [0u8; 2];
    input.read_exact(&mut buf2)?;
    if u16::from_le_bytes(buf2) != SNAPSHOT_VERSION {
        return Err(KineticError::MalformedSnapshot("unknown version".into()));
    }
    input.read_exact(&mut buf2)?;
    let d = u16::from_le_bytes(buf2) as usize;
    let mut buf8 = [0u8; 8];
    input.read_exact(&mut buf8)?;
    let n = u64::from_le_bytes(buf8) as usize;
    input.read_exact(&mut buf8)?;
    let time = f64::from_le_bytes(buf8);
    input.read_exact(&mut buf8)?;
    let energy = f64::from_le_bytes(buf8);
    let mut vel = vec![0.0; d * n];
    for x in &mut vel {
        input.read_exact(&mut buf8)?;
        *x = f64::from_le_bytes(buf8);
    }
    let state = ParticleState::new(d, vel)?;
    if (state.energy() - energy).abs() > 1e-9 * energy.abs().max(1.0) {
        return Err(KineticError::MalformedSnapshot(
            "energy field inconsistent with velocities".into(),
        ));
    }
    Ok((state, time))
}

/// Runs `replicas` independent trajectories; replica `r` derives its
/// streams from `(master_seed, r)`, so the result does not depend on the
/// execution order or on parallelism.
pub fn run_ensemble<S>(
    sampler: S,
    kernel: &CollisionKernel,
    horizon: f64,
    checkpoints: &[f64],
    replicas: usize,
    master_seed: u64,
) -> Result<Ensemble>
where
    S: Fn(&mut ChaCha12Rng) -> ParticleState + Sync + Send,
{
    let records = crate::map_indexed(replicas, |r| {
        let mut init_rng = derive_rng(master_seed, &[r as u64, 0]);
        let mut dyn_rng = derive_rng(master_seed, &[r as u64, 1]);
        let initial = sampler(&mut init_rng);
        let mut record = simulate(initial, kernel, horizon, checkpoints, &mut dyn_rng)?;
        record.seed = master_seed;
        record.replica = r as u64;
        Ok::<_, KineticError>(record)
    });
    let mut replicas_out = Vec::with_capacity(replicas);
    for r in records {
        replicas_out.push(r?);
    }
    Ok(Ensemble {
        replicas: replicas_out,
        checkpoint_times: checkpoints.to_vec(),
        master_seed,
    })
}

/// Sequential ensemble runner, always available; used by the benchmark
/// suite as the baseline against the data-parallel path.
pub fn run_ensemble_seq<S>(
    sampler: S,
    kernel: &CollisionKernel,
    horizon: f64,
    checkpoints: &[f64],
    replicas: usize,
    master_seed: u64,
) -> Result<Ensemble>
where
    S: Fn(&mut ChaCha12Rng) -> ParticleState,
{
    let mut replicas_out = Vec::with_capacity(replicas);
    for r in 0..replicas {
        let mut init_rng = derive_rng(master_seed, &[r as u64, 0]);
        let mut dyn_rng = derive_rng(master_seed, &[r as u64, 1]);
        let initial = sampler(&mut init_rng);
        let mut record = simulate(initial, kernel, horizon, checkpoints, &mut dyn_rng)?;
        record.seed = master_seed;
        record.replica = r as u64;
        replicas_out.push(record);
    }
    Ok(Ensemble {
        replicas: replicas_out,
        checkpoint_times: checkpoints.to_vec(),
        master_seed,
    })
}

impl TrajectoryRecord {
    /// Snapshot at checkpoint time `t` (exact match against the recorded
    /// checkpoint list).
    pub fn snapshot_at(&self, t: f64) -> Result<&ParticleState> {
        self.checkpoint_times
            .iter()
            .position(|&c| c == t)
            .map(|i| &self.snapshots[i])
            .ok_or(KineticError::MissingCheckpoint(t))
    }

    /// Checks the sphere constraint at every checkpoint.
    pub fn on_sphere(&self, constraint: &SphereConstraint, tol: f64) -> bool {
        self.snapshots.iter().all(|s| s.on_sphere(constraint, tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CollisionKernel;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn two_body() -> ParticleState {
        ParticleState::new(3, vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn gmm_total_rate_closed_form() {
        let kernel = CollisionKernel::gmm(3);
        assert_relative_eq!(total_rate(&two_body(), &kernel), PI, epsilon = 1e-12);
        let state = ParticleState::new(3, vec![0.1; 30]).unwrap();
        assert_relative_eq!(total_rate(&state, &kernel), 9.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn hs_total_rate_two_body() {
        let kernel = CollisionKernel::hs(3);
        assert_relative_eq!(total_rate(&two_body(), &kernel), 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn gmm_waiting_times_exponential() {
        let kernel = CollisionKernel::gmm(3);
        let mut process = JumpProcess::new(two_body(), kernel).unwrap();
        let mut rng = derive_rng(11, &[0]);
        let n = 10_000usize;
        let mut last = 0.0;
        let mut sum = 0.0;
        for _ in 0..n {
            match process.step(&mut rng) {
                StepOutcome::Jump(e) => {
                    sum += e.time - last;
                    last = e.time;
                }
                StepOutcome::Absorbed => panic!("constant rate cannot absorb"),
            }
        }
        let mean = sum / n as f64;
        let tol = 3.0 / ((n as f64).sqrt() * PI);
        assert!((mean - 1.0 / PI).abs() < tol, "mean waiting {mean}");
    }

    #[test]
    fn step_conserves_invariants() {
        let kernel = CollisionKernel::hs(3);
        let initial =
            ParticleState::new(3, vec![1.0, 0.2, -0.3, -1.0, 0.1, 0.3, 0.0, -0.3, 0.0]).unwrap();
        let e0 = initial.energy();
        let m0 = initial.momentum();
        let mut process = JumpProcess::new(initial, kernel).unwrap();
        let mut rng = derive_rng(12, &[0]);
        for _ in 0..2000 {
            process.step(&mut rng);
        }
        let state = process.state();
        assert_relative_eq!(state.energy(), e0, max_relative = 1e-12);
        for (a, b) in state.momentum().iter().zip(&m0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hs_pair_selection_weighted() {
        // velocities (1,0,0), (-1,0,0), (0,0,0): pair rates 2, 1, 1
        let initial =
            ParticleState::new(3, vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let kernel = CollisionKernel::hs(3);
        let mut hits01 = 0u32;
        let n = 10_000;
        for trial in 0..n {
            let mut process = JumpProcess::new(initial.clone(), kernel.clone()).unwrap();
            let mut rng = derive_rng(13, &[trial]);
            if let StepOutcome::Jump(e) = process.step(&mut rng) {
                if e.pair == (0, 1) {
                    hits01 += 1;
                }
            }
        }
        let p = hits01 as f64 / n as f64;
        let sigma = (0.5 * 0.5 / n as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * sigma, "pair (0,1) frequency {p}");
    }

    #[test]
    fn rejection_mode_matches_pair_law() {
        // force rejection mode via a large-N-style construction check on
        // the same three-body configuration by calling the thinning path
        // directly through a small HS_EXACT override is not possible, so
        // exercise it with N above the threshold but a handful of steps.
        let n = HS_EXACT_MAX_N + 1;
        let mut vel = vec![0.0; 3 * n];
        let mut rng = derive_rng(99, &[7]);
        for x in &mut vel {
            *x = rng.gen::<f64>() - 0.5;
        }
        let initial = ParticleState::new(3, vel).unwrap();
        let e0 = initial.energy();
        let kernel = CollisionKernel::hs(3);
        let mut process = JumpProcess::new(initial, kernel).unwrap();
        for _ in 0..50 {
            process.step(&mut rng);
        }
        assert!(process.collisions() > 0);
        assert_relative_eq!(process.state().energy(), e0, max_relative = 1e-11);
    }

    #[test]
    fn horizon_zero_snapshot_equals_initial() {
        let kernel = CollisionKernel::gmm(3);
        let initial = two_body();
        let mut rng = derive_rng(14, &[0]);
        let record = simulate(initial.clone(), &kernel, 0.0, &[0.0], &mut rng).unwrap();
        assert_eq!(record.snapshots.len(), 1);
        assert_eq!(record.snapshots[0].velocities(), initial.velocities());
    }

    #[test]
    fn gmm_collision_count_poissonian() {
        let kernel = CollisionKernel::gmm(3);
        let runs = 1000u64;
        let mut total = 0u64;
        for r in 0..runs {
            let state = ParticleState::new(3, vec![0.05; 30]).unwrap();
            let mut rng = derive_rng(15, &[r]);
            let record = simulate(state, &kernel, 1.0, &[1.0], &mut rng).unwrap();
            total += record.collision_count;
        }
        let mean = total as f64 / runs as f64;
        let expect = 9.0 * PI;
        let tol = 3.0 * (expect / runs as f64).sqrt();
        assert!((mean - expect).abs() < tol, "mean count {mean} vs {expect}");
    }

    #[test]
    fn ensemble_deterministic() {
        let kernel = CollisionKernel::gmm(3);
        let sampler = |rng: &mut ChaCha12Rng| {
            let vel: Vec<f64> = (0..12).map(|_| rng.gen::<f64>() - 0.5).collect();
            ParticleState::new(3, vel).unwrap()
        };
        let a = run_ensemble(sampler, &kernel, 1.0, &[0.5, 1.0], 8, 77).unwrap();
        let b = run_ensemble(sampler, &kernel, 1.0, &[0.5, 1.0], 8, 77).unwrap();
        let c = run_ensemble_seq(sampler, &kernel, 1.0, &[0.5, 1.0], 8, 77).unwrap();
        for ((ra, rb), rc) in a.replicas.iter().zip(&b.replicas).zip(&c.replicas) {
            for ((sa, sb), sc) in ra.snapshots.iter().zip(&rb.snapshots).zip(&rc.snapshots) {
                assert_eq!(sa.velocities(), sb.velocities());
                assert_eq!(sa.velocities(), sc.velocities());
            }
        }
    }

    #[test]
    fn snapshot_roundtrip() {
        let state = two_body();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &state, 1.25).unwrap();
        let (back, time) = read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(back.velocities(), state.velocities());
        assert_eq!(time, 1.25);
    }

    #[test]
    fn absorbed_state_freezes() {
        // all velocities equal: HS total rate is zero
        let state = ParticleState::new(3, vec![0.5; 9]).unwrap();
        let kernel = CollisionKernel::hs(3);
        let mut rng = derive_rng(16, &[0]);
        let record = simulate(state.clone(), &kernel, 5.0, &[1.0, 5.0], &mut rng).unwrap();
        assert_eq!(record.collision_count, 0);
        for snap in &record.snapshots {
            assert_eq!(snap.velocities(), state.velocities());
        }
    }
}
