//! Exact event-driven simulation of the particle system.
//!
//! Each particle at `x` jumps to `y` at rate `q(x, y)`, is absorbed at rate
//! `q(x, 0)` and creates a new particle at type 1 at rate `β(x)`. Per-type
//! aggregate rates `η(x) a(x)` live in a segment tree, so one event costs
//! `O(log K)`.
//!
//! Replica `i` draws from `ChaCha8Rng` seeded with the base seed on stream
//! `i`, which makes every replica reproducible on its own.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::branching::BranchingModel;
use crate::error::{Error, Result};
use crate::fmt_sig;
use crate::linalg::total_variation;

pub const RNG_FAMILY: &str = "ChaCha8Rng(seed_from_u64(base_seed), stream=replica)";
pub const DEFAULT_POPULATION_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventCounts {
    pub moves: u64,
    pub absorptions: u64,
    pub creations: u64,
}

/// Snapshot of `η_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    /// `counts[x - 1] = η(x)`.
    pub counts: Vec<u64>,
    pub time: f64,
    pub total: u64,
    pub events: EventCounts,
}

impl PopulationState {
    pub fn new(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self {
            counts,
            time: 0.0,
            total,
            events: EventCounts::default(),
        }
    }

    pub fn single(k: usize, x: usize) -> Self {
        let mut c = vec![0; k];
        c[x - 1] = 1;
        Self::new(c)
    }

    pub fn is_extinct(&self) -> bool {
        self.total == 0
    }

    pub fn proportions(&self) -> Option<Vec<f64>> {
        (self.total > 0).then(|| {
            let t = self.total as f64;
            self.counts.iter().map(|&c| c as f64 / t).collect()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Move { from: usize, to: usize },
    Absorb { from: usize },
    Create { parent: usize },
}

/// Sum tree over per-type rates; internal nodes are recomputed from their
/// children so no rounding drift accumulates.
#[derive(Debug, Clone)]
struct RateTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl RateTree {
    fn new(k: usize) -> Self {
        let leaves = k.next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    fn set(&mut self, i: usize, w: f64) {
        let mut p = self.leaves + i;
        self.nodes[p] = w;
        while p > 1 {
            p /= 2;
            self.nodes[p] = self.nodes[2 * p] + self.nodes[2 * p + 1];
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn sample(&self, mut u: f64) -> usize {
        let mut p = 1;
        while p < self.leaves {
            let left = self.nodes[2 * p];
            let right = self.nodes[2 * p + 1];
            if (u < left && left > 0.0) || right <= 0.0 {
                p *= 2;
            } else {
                u -= left;
                p = 2 * p + 1;
            }
        }
        p - self.leaves
    }
}

/// Per-type event tables built once from a model.
#[derive(Debug, Clone)]
pub struct Engine {
    k: usize,
    jump: Vec<f64>,
    /// Cumulative event weights per type, ending at `a(x)`.
    tables: Vec<Vec<(f64, Event)>>,
}

impl Engine {
    pub fn new(model: &BranchingModel) -> Self {
        let k = model.size();
        let q = model.rates();
        let mut tables = Vec::with_capacity(k);
        let mut jump = Vec::with_capacity(k);
        for x in 1..=k {
            let mut acc = 0.0;
            let mut t = Vec::new();
            let mut push = |w: f64, e: Event| {
                if w > 0.0 {
                    acc += w;
                    t.push((acc, e));
                }
            };
            push(model.beta()[x - 1], Event::Create { parent: x });
            push(q.absorption(x), Event::Absorb { from: x });
            for (y, r) in q.transitions(x) {
                push(r, Event::Move { from: x, to: y });
            }
            jump.push(acc);
            tables.push(t);
        }
        Self { k, jump, tables }
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn start(&self, state: PopulationState) -> Walker<'_> {
        let mut tree = RateTree::new(self.k);
        for (i, &c) in state.counts.iter().enumerate() {
            tree.set(i, c as f64 * self.jump[i]);
        }
        Walker {
            engine: self,
            state,
            tree,
        }
    }

    fn pick_event<R: Rng>(&self, x: usize, rng: &mut R) -> Event {
        let table = &self.tables[x - 1];
        let u = rng.gen::<f64>() * self.jump[x - 1];
        let i = table.partition_point(|&(c, _)| c <= u).min(table.len() - 1);
        table[i].1
    }
}

/// A population evolving under an [`Engine`].
#[derive(Debug, Clone)]
pub struct Walker<'a> {
    engine: &'a Engine,
    state: PopulationState,
    tree: RateTree,
}

impl<'a> Walker<'a> {
    pub fn state(&self) -> &PopulationState {
        &self.state
    }

    pub fn into_state(self) -> PopulationState {
        self.state
    }

    /// Total event rate `Σ_x η(x) a(x)`.
    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    /// Samples the waiting time to the next event without applying it.
    pub fn next_waiting_time<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        if self.state.total == 0 {
            return Err(Error::ExtinctPopulation);
        }
        let e: f64 = rng.sample(Exp1);
        Ok(e / self.tree.total())
    }

    /// Chooses and applies one event at the current time.
    pub fn apply_next_event<R: Rng>(&mut self, rng: &mut R) -> Result<Event> {
        if self.state.total == 0 {
            return Err(Error::ExtinctPopulation);
        }
        let x = self.tree.sample(rng.gen::<f64>() * self.tree.total()) + 1;
        let event = self.engine.pick_event(x, rng);
        self.apply(event);
        Ok(event)
    }

    /// One full step: advance time by an exponential and apply an event.
    pub fn step<R: Rng>(&mut self, rng: &mut R) -> Result<Event> {
        let dt = self.next_waiting_time(rng)?;
        self.state.time += dt;
        self.apply_next_event(rng)
    }

    fn bump(&mut self, x: usize, up: bool) {
        let c = &mut self.state.counts[x - 1];
        if up {
            *c += 1;
            self.state.total += 1;
        } else {
            *c -= 1;
            self.state.total -= 1;
        }
        let w = *c as f64 * self.engine.jump[x - 1];
        self.tree.set(x - 1, w);
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::Move { from, to } => {
                self.bump(from, false);
                self.bump(to, true);
                self.state.events.moves += 1;
            }
            Event::Absorb { from } => {
                self.bump(from, false);
                self.state.events.absorptions += 1;
            }
            Event::Create { .. } => {
                self.bump(1, true);
                self.state.events.creations += 1;
            }
        }
    }
}

/// One step of the process from `state`; builds the event tables each call.
pub fn step<R: Rng>(state: PopulationState, model: &BranchingModel, rng: &mut R) -> Result<PopulationState> {
    let engine = Engine::new(model);
    let mut w = engine.start(state);
    w.step(rng)?;
    Ok(w.into_state())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub horizon: f64,
    /// Sorted snapshot times in `[0, horizon]`.
    pub snapshots: Vec<f64>,
    pub initial: Vec<u64>,
    pub replicas: usize,
    pub base_seed: u64,
    pub population_cap: u64,
}

impl RunConfig {
    pub fn new(k: usize, horizon: f64, snapshots: Vec<f64>, replicas: usize, base_seed: u64) -> Self {
        let mut initial = vec![0; k];
        initial[0] = 1;
        Self {
            horizon,
            snapshots,
            initial,
            replicas,
            base_seed,
            population_cap: DEFAULT_POPULATION_CAP,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "horizon must be >= 0, got {}",
                self.horizon
            )));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidParameter("replica count must be >= 1".into()));
        }
        if self.initial.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: self.initial.len(),
            });
        }
        if self.snapshots.iter().any(|&t| !(t >= 0.0 && t <= self.horizon)) {
            return Err(Error::InvalidParameter(
                "snapshot times must lie in [0, horizon]".into(),
            ));
        }
        if self.snapshots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("snapshot times must be sorted".into()));
        }
        Ok(())
    }

    fn snapshot_times(&self) -> Vec<f64> {
        if self.snapshots.is_empty() {
            vec![self.horizon]
        } else {
            self.snapshots.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Extinct {
        time: f64,
    },
    Survived,
    /// Population cap exceeded at `time`; later snapshots are missing.
    Censored {
        time: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub replica: usize,
    /// One entry per snapshot time reached; each holds the state after the
    /// last event at or before that time, stamped with the snapshot time.
    pub snapshots: Vec<PopulationState>,
    pub outcome: Outcome,
}

impl Trajectory {
    /// Alive at `t`: positive population, or censored (cap exceeded) no later
    /// than `t`.
    pub fn alive_at(&self, idx: usize) -> bool {
        match self.snapshots.get(idx) {
            Some(s) => s.total > 0,
            None => matches!(self.outcome, Outcome::Censored { .. }),
        }
    }
}

pub fn replica_rng(base_seed: u64, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(replica as u64);
    rng
}

/// Simulates replica `replica_index` up to the horizon, extinction, or the
/// population cap.
pub fn run_trajectory(engine: &Engine, config: &RunConfig, replica_index: usize) -> Result<Trajectory> {
    config.validate(engine.size())?;
    let mut rng = replica_rng(config.base_seed, replica_index);
    let times = config.snapshot_times();
    let mut walker = engine.start(PopulationState::new(config.initial.clone()));
    let mut snaps = Vec::with_capacity(times.len());
    let mut next = 0;
    let record = |walker: &Walker, t: f64, snaps: &mut Vec<PopulationState>| {
        let mut s = walker.state().clone();
        s.time = t;
        snaps.push(s);
    };
    let outcome = loop {
        let now = walker.state().time;
        if walker.state().total == 0 {
            while next < times.len() {
                record(&walker, times[next], &mut snaps);
                next += 1;
            }
            break Outcome::Extinct { time: now };
        }
        if walker.state().total > config.population_cap {
            break Outcome::Censored { time: now };
        }
        let t_next = now + walker.next_waiting_time(&mut rng)?;
        while next < times.len() && times[next] < t_next {
            record(&walker, times[next], &mut snaps);
            next += 1;
        }
        if t_next > config.horizon {
            break Outcome::Survived;
        }
        walker.state.time = t_next;
        walker.apply_next_event(&mut rng)?;
    };
    Ok(Trajectory {
        replica: replica_index,
        snapshots: snaps,
        outcome,
    })
}

/// All replicas of a run, in replica order.
pub fn run_ensemble(model: &BranchingModel, config: &RunConfig) -> Result<Vec<Trajectory>> {
    let engine = Engine::new(model);
    config.validate(engine.size())?;
    (0..config.replicas)
        .into_par_iter()
        .map(|i| run_trajectory(&engine, config, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub time: f64,
    pub replicas: usize,
    /// Positive population at `time`, or censored earlier.
    pub survivors: usize,
    pub censored: usize,
    pub survival_fraction: f64,
    /// Mean of `(log|η_t| - log|η_s|)/(t - s)` over replicas alive at both
    /// the previous snapshot `s` (time 0 for the first) and `t`.
    pub mean_log_growth: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub growth_samples: usize,
    /// `η_t/|η_t|` averaged over uncensored survivors.
    pub mean_proportions: Option<Vec<f64>>,
    pub tv_to_nu: Option<f64>,
}

/// Per-snapshot ensemble statistics; `nu`, when given, is compared with the
/// survivor-averaged proportions.
pub fn survival_stats(trajectories: &[Trajectory], config: &RunConfig, nu: Option<&[f64]>) -> Vec<StatsRow> {
    let times = config.snapshot_times();
    let initial_total: u64 = config.initial.iter().sum();
    let n = trajectories.len();
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let survivors = trajectories.iter().filter(|tr| tr.alive_at(i)).count();
            let censored = trajectories
                .iter()
                .filter(|tr| tr.snapshots.get(i).is_none() && matches!(tr.outcome, Outcome::Censored { .. }))
                .count();
            let (prev_t, growth): (f64, Vec<f64>) = {
                let prev_t = if i == 0 { 0.0 } else { times[i - 1] };
                let g = trajectories
                    .iter()
                    .filter_map(|tr| {
                        let now = tr.snapshots.get(i)?;
                        let before = if i == 0 {
                            initial_total
                        } else {
                            tr.snapshots.get(i - 1)?.total
                        };
                        (now.total > 0 && before > 0 && t > prev_t)
                            .then(|| ((now.total as f64).ln() - (before as f64).ln()) / (t - prev_t))
                    })
                    .collect();
                (prev_t, g)
            };
            let _ = prev_t;
            let (mean_log_growth, ci_lo, ci_hi) = if growth.is_empty() {
                (None, None, None)
            } else {
                let m = growth.iter().sum::<f64>() / growth.len() as f64;
                let half = if growth.len() > 1 {
                    let var = growth.iter().map(|g| (g - m) * (g - m)).sum::<f64>() / (growth.len() - 1) as f64;
                    1.96 * (var / growth.len() as f64).sqrt()
                } else {
                    f64::INFINITY
                };
                (Some(m), Some(m - half), Some(m + half))
            };
            let props: Vec<Vec<f64>> = trajectories
                .iter()
                .filter_map(|tr| tr.snapshots.get(i).and_then(PopulationState::proportions))
                .collect();
            let mean_proportions = (!props.is_empty()).then(|| {
                let k = props[0].len();
                let mut acc = vec![0.0; k];
                for p in &props {
                    for (a, v) in acc.iter_mut().zip(p) {
                        *a += v;
                    }
                }
                acc.iter_mut().for_each(|a| *a /= props.len() as f64);
                acc
            });
            let tv_to_nu = match (&mean_proportions, nu) {
                (Some(p), Some(nu)) => Some(total_variation(p, nu)),
                _ => None,
            };
            StatsRow {
                time: t,
                replicas: n,
                survivors,
                censored,
                survival_fraction: if n > 0 { survivors as f64 / n as f64 } else { 0.0 },
                mean_log_growth,
                ci_lo,
                ci_hi,
                growth_samples: growth.len(),
                mean_proportions,
                tv_to_nu,
            }
        })
        .collect()
}

pub const TRAJECTORY_CSV_HEADER: &str = "replica,time,type,count";
pub const STATS_CSV_HEADER: &str = "time,survivors,mean_log_growth,ci_lo,ci_hi,tv_to_nu";

pub fn write_trajectory_csv<W: Write>(w: &mut W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    writeln!(w, "{TRAJECTORY_CSV_HEADER}")?;
    for tr in trajectories {
        for s in &tr.snapshots {
            for (i, c) in s.counts.iter().enumerate() {
                writeln!(w, "{},{},{},{}", tr.replica, fmt_sig(s.time), i + 1, c)?;
            }
        }
    }
    Ok(())
}

pub fn write_stats_csv<W: Write>(w: &mut W, rows: &[StatsRow]) -> std::io::Result<()> {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), fmt_sig);
    writeln!(w, "{STATS_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_sig(r.time),
            r.survivors,
            opt(r.mean_log_growth),
            opt(r.ci_lo),
            opt(r.ci_hi),
            opt(r.tv_to_nu)
        )?;
    }
    Ok(())
}
