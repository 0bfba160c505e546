//! Exact event-driven simulation of the seed bank coalescent.
//!
//! Three levels of detail are offered:
//!
//! * [`simulate_counts`] runs the block-counting chain and keeps the full
//!   timed event log;
//! * [`simulate_partition`] runs the marked-partition chain (leaf labels,
//!   plant/seed flags and white/blue colours);
//! * [`sample_first_deactivation`] draws `(N(gamma), gamma)` directly from
//!   the coalescence/deactivation ladder in `O(n)` without building a path.
//!
//! All of them are driven by a [`RngSpec`], so a replicate is reproducible
//! from `(base_seed, replicate_index)` alone.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{rates, BlockState, EventKind, ModelParams, Variant};
use crate::report::fmt_f64;
use crate::rng::{exponential, index, RngSpec, SimRng};
use crate::stats::{branch_lengths, BranchLengths};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("initial state must contain at least one block")]
    EmptyInitialState,
    #[error("stop level {level} exceeds the initial number of plants {plants}")]
    LevelTooHigh { level: u32, plants: u32 },
    #[error("time horizon must be positive and finite (got {0})")]
    BadHorizon(f64),
    #[error("initial seeds {seeds} exceed bank capacity {capacity}")]
    BankOverflow { seeds: u32, capacity: u32 },
    #[error("bank capacity must be at least 1")]
    ZeroCapacity,
    #[error("trajectory did not run to absorption ({0:?})")]
    NotAbsorbed(TerminalReason),
    #[error("sample size must be at least {min} (got {got})")]
    SampleTooSmall { min: u32, got: u32 },
}

/// When a simulation run ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopCondition {
    /// First time the state is a single plant and no seed.
    Absorption,
    FirstDeactivation,
    FirstActivation,
    /// First time the number of plants equals the level.
    PlantsReach(u32),
    /// Stop at the given time unless absorbed earlier.
    TimeHorizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalReason {
    Absorbed,
    StopConditionMet,
    EventBudgetExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub state_after: BlockState,
}

/// One realization of the block-counting chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial_state: BlockState,
    pub events: Vec<Event>,
    pub terminal_reason: TerminalReason,
    /// Time at which the run stopped: the last event time, the horizon for
    /// [`StopCondition::TimeHorizon`], or 0 for an empty run.
    pub end_time: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> BlockState {
        self.events
            .last()
            .map_or(self.initial_state, |e| e.state_after)
    }

    pub fn is_absorbed(&self) -> bool {
        self.terminal_reason == TerminalReason::Absorbed
    }

    /// CSV with header `time,event,plants,seeds`. The first row is the
    /// initial state at time 0 with event `start`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,event,plants,seeds")?;
        writeln!(
            out,
            "0,start,{},{}",
            self.initial_state.plants, self.initial_state.seeds
        )?;
        for e in &self.events {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(e.time),
                e.kind,
                e.state_after.plants,
                e.state_after.seeds
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    /// Maximum number of events; `None` means `50 * n0 + 10^6`.
    pub event_budget: Option<u64>,
}

impl SimOptions {
    pub fn budget_for(&self, initial_blocks: u32) -> u64 {
        self.event_budget
            .unwrap_or(50 * u64::from(initial_blocks) + 1_000_000)
    }
}

/// Receives every event of a run as it happens.
pub trait Observer {
    fn on_event(&mut self, time: f64, kind: EventKind, before: BlockState, after: BlockState);
}

impl Observer for Vec<Event> {
    fn on_event(&mut self, time: f64, kind: EventKind, _before: BlockState, after: BlockState) {
        self.push(Event {
            time,
            kind,
            state_after: after,
        });
    }
}

/// Outcome of [`drive`]: why it stopped, when, and after how many events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunEnd {
    pub reason: TerminalReason,
    pub time: f64,
    pub events: u64,
}

pub(crate) fn check_start(
    start: BlockState,
    variant: Variant,
    stop: StopCondition,
) -> Result<(), SimError> {
    if start.total() == 0 {
        return Err(SimError::EmptyInitialState);
    }
    if let Variant::Bounded(m) = variant {
        if m == 0 {
            return Err(SimError::ZeroCapacity);
        }
        if start.seeds > m {
            return Err(SimError::BankOverflow {
                seeds: start.seeds,
                capacity: m,
            });
        }
    }
    match stop {
        StopCondition::PlantsReach(level) if level > start.plants => Err(SimError::LevelTooHigh {
            level,
            plants: start.plants,
        }),
        StopCondition::TimeHorizon(t) if !(t > 0.0 && t.is_finite()) => {
            Err(SimError::BadHorizon(t))
        }
        _ => Ok(()),
    }
}

/// Whether the run should end in `state` (reached by `kind`, if any).
#[inline]
fn stop_reason(
    state: BlockState,
    kind: Option<EventKind>,
    stop: StopCondition,
) -> Option<TerminalReason> {
    let met = match stop {
        StopCondition::Absorption => false,
        StopCondition::FirstDeactivation => kind == Some(EventKind::Deactivation),
        StopCondition::FirstActivation => kind == Some(EventKind::Activation),
        StopCondition::PlantsReach(level) => state.plants == level,
        StopCondition::TimeHorizon(_) => false,
    };
    if met {
        return Some(TerminalReason::StopConditionMet);
    }
    // gamma and theta are almost surely finite, so those runs go on past
    // the most recent common ancestor.
    let continues_past_mrca = matches!(
        stop,
        StopCondition::FirstDeactivation | StopCondition::FirstActivation
    );
    (state.is_mrca() && !continues_past_mrca).then_some(TerminalReason::Absorbed)
}

/// Core Gillespie loop over the block-counting chain.
pub fn drive<O: Observer>(
    start: BlockState,
    params: &ModelParams,
    variant: Variant,
    stop: StopCondition,
    budget: u64,
    rng: &mut SimRng,
    observer: &mut O,
) -> RunEnd {
    let horizon = match stop {
        StopCondition::TimeHorizon(t) => t,
        _ => f64::INFINITY,
    };
    let mut state = start;
    let mut time = 0.0;
    let mut events = 0u64;
    if let Some(reason) = stop_reason(state, None, stop) {
        return RunEnd {
            reason,
            time,
            events,
        };
    }
    loop {
        let r = rates(state, params, variant);
        let total = r.total();
        if total <= 0.0 {
            // Only reachable for degenerate starts such as (0, 0).
            return RunEnd {
                reason: TerminalReason::Absorbed,
                time,
                events,
            };
        }
        let next_time = time + exponential(rng, total);
        if next_time > horizon {
            return RunEnd {
                reason: TerminalReason::StopConditionMet,
                time: horizon,
                events,
            };
        }
        if events >= budget {
            return RunEnd {
                reason: TerminalReason::EventBudgetExceeded,
                time,
                events,
            };
        }
        let u = rng.random::<f64>() * total;
        let kind = if u < r.coalescence {
            EventKind::Coalescence
        } else if u < r.coalescence + r.deactivation {
            EventKind::Deactivation
        } else {
            EventKind::Activation
        };
        let kind = match kind {
            EventKind::Activation if r.activation <= 0.0 => {
                // u landed on the boundary through rounding
                if r.deactivation > 0.0 {
                    EventKind::Deactivation
                } else {
                    EventKind::Coalescence
                }
            }
            k => k,
        };
        let after = state
            .apply(kind, variant)
            .expect("event with positive rate must be applicable");
        time = next_time;
        events += 1;
        observer.on_event(time, kind, state, after);
        state = after;
        if let Some(reason) = stop_reason(state, Some(kind), stop) {
            return RunEnd {
                reason,
                time,
                events,
            };
        }
    }
}

/// Simulates the block-counting chain from `(n0, m0)` and records every event.
pub fn simulate_counts(
    n0: u32,
    m0: u32,
    params: &ModelParams,
    variant: Variant,
    stop: StopCondition,
    rng: RngSpec,
) -> Result<Trajectory, SimError> {
    simulate_counts_with(n0, m0, params, variant, stop, rng, SimOptions::default())
}

pub fn simulate_counts_with(
    n0: u32,
    m0: u32,
    params: &ModelParams,
    variant: Variant,
    stop: StopCondition,
    rng: RngSpec,
    options: SimOptions,
) -> Result<Trajectory, SimError> {
    let start = BlockState::new(n0, m0);
    check_start(start, variant, stop)?;
    let mut events = Vec::new();
    let mut r = rng.rng();
    let end = drive(
        start,
        params,
        variant,
        stop,
        options.budget_for(start.total()),
        &mut r,
        &mut events,
    );
    Ok(Trajectory {
        initial_state: start,
        events,
        terminal_reason: end.reason,
        end_time: end.time,
    })
}

/// Draws `(N(gamma), gamma)` for a sample of `n` plants without simulating
/// a path: levels are visited top-down, each holding an exponential time,
/// and the descent from level `i + 1` is a deactivation with probability
/// `2 c1 / (i + 2 c1)`. If the ladder reaches a single plant, that plant
/// deactivates after one more exponential(`c1`) hold and `N(gamma) = 0`.
pub fn sample_first_deactivation(
    n: u32,
    params: &ModelParams,
    rng: RngSpec,
) -> Result<(u32, f64), SimError> {
    if n < 2 {
        return Err(SimError::SampleTooSmall { min: 2, got: n });
    }
    let mut r = rng.rng();
    Ok(first_deactivation_ladder(n, params.c1, &mut r))
}

#[inline]
pub(crate) fn first_deactivation_ladder<R: Rng + ?Sized>(n: u32, c1: f64, rng: &mut R) -> (u32, f64) {
    let two_c1 = 2.0 * c1;
    let mut gamma = 0.0;
    let mut level = n;
    while level >= 2 {
        let i = f64::from(level);
        // C(i,2) + c1 i = i (i - 1 + 2 c1) / 2
        gamma += exponential(rng, 0.5 * i * (i - 1.0 + two_c1));
        let p_deact = two_c1 / (i - 1.0 + two_c1);
        if rng.random::<f64>() < p_deact {
            return (level - 1, gamma);
        }
        level -= 1;
    }
    gamma += exponential(rng, c1);
    (0, gamma)
}

/// Mutation counts on active and inactive branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MutationCounts {
    pub active: u64,
    pub inactive: u64,
}

impl MutationCounts {
    pub fn total(&self) -> u64 {
        self.active + self.inactive
    }
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

/// Poisson mutation counts given the branch lengths of one tree.
pub fn mutations_from_lengths(
    lengths: &BranchLengths,
    params: &ModelParams,
    rng: RngSpec,
) -> MutationCounts {
    let mut r = rng.rng();
    MutationCounts {
        active: poisson(&mut r, params.mu_active * lengths.active),
        inactive: poisson(&mut r, params.mu_inactive * lengths.inactive),
    }
}

/// Superimposes mutations on an absorbed trajectory at rates
/// `mu_active` (active branches) and `mu_inactive` (dormant branches).
pub fn superimpose_mutations(
    traj: &Trajectory,
    params: &ModelParams,
    rng: RngSpec,
) -> Result<MutationCounts, SimError> {
    let lengths = branch_lengths(traj)?;
    Ok(mutations_from_lengths(&lengths, params, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flag {
    Plant,
    Seed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    White,
    Blue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    /// Sorted leaf labels in `1..=n`.
    pub leaves: Vec<u32>,
    pub flag: Flag,
}

/// Leaf-labelled partition of `[n]` with plant/seed flags and leaf colours.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedPartition {
    /// Blocks ordered by smallest leaf.
    pub blocks: Vec<Block>,
    /// `colors[l - 1]` is the colour of leaf `l`.
    pub colors: Vec<Color>,
    /// Index into `blocks` of a seed block activating at this instant. Set
    /// only on the left-limit snapshot taken at a first-activation stop.
    pub pending_activation: Option<usize>,
}

impl MarkedPartition {
    pub fn singletons(n: u32) -> Self {
        MarkedPartition {
            blocks: (1..=n)
                .map(|l| Block {
                    leaves: vec![l],
                    flag: Flag::Plant,
                })
                .collect(),
            colors: vec![Color::White; n as usize],
            pending_activation: None,
        }
    }

    pub fn sample_size(&self) -> usize {
        self.colors.len()
    }

    pub fn counts(&self) -> BlockState {
        let plants = self.blocks.iter().filter(|b| b.flag == Flag::Plant).count() as u32;
        BlockState::new(plants, self.blocks.len() as u32 - plants)
    }

    /// True when the blocks partition `1..=n` exactly.
    pub fn is_partition(&self) -> bool {
        let n = self.sample_size();
        let mut seen = vec![false; n];
        for b in &self.blocks {
            if b.leaves.is_empty() {
                return false;
            }
            for &l in &b.leaves {
                let idx = l as usize;
                if idx == 0 || idx > n || seen[idx - 1] {
                    return false;
                }
                seen[idx - 1] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Which partition snapshots [`simulate_partition`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnapshotPolicy {
    /// Only the state at the end of the run.
    #[default]
    AtStop,
    /// The initial state and the state after every event.
    EveryEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionRun {
    pub trajectory: Trajectory,
    /// `(time, partition)` pairs. Snapshots hold the state right after an
    /// event, except at a first-activation stop where the left limit is
    /// kept and the activating block is marked as pending.
    pub snapshots: Vec<(f64, MarkedPartition)>,
}

struct PartitionState {
    plants: Vec<Vec<u32>>,
    seeds: Vec<Vec<u32>>,
    colors: Vec<Color>,
}

impl PartitionState {
    fn snapshot(&self, pending_seed: Option<usize>) -> MarkedPartition {
        let mut tagged: Vec<(Block, bool)> = self
            .plants
            .iter()
            .map(|l| (l, Flag::Plant, false))
            .chain(
                self.seeds
                    .iter()
                    .enumerate()
                    .map(|(k, l)| (l, Flag::Seed, Some(k) == pending_seed)),
            )
            .map(|(leaves, flag, pending)| {
                let mut leaves = leaves.clone();
                leaves.sort_unstable();
                (Block { leaves, flag }, pending)
            })
            .collect();
        tagged.sort_by_key(|(b, _)| b.leaves[0]);
        let pending_activation = tagged.iter().position(|(_, p)| *p);
        MarkedPartition {
            blocks: tagged.into_iter().map(|(b, _)| b).collect(),
            colors: self.colors.clone(),
            pending_activation,
        }
    }
}

/// Simulates the marked-partition coalescent from `n` white singleton plants.
///
/// At a coalescence a uniformly chosen pair of plant blocks merges; at a
/// deactivation (activation) a uniformly chosen plant (seed) block flips
/// its flag. Every leaf of an activating block turns blue.
pub fn simulate_partition(
    n: u32,
    params: &ModelParams,
    stop: StopCondition,
    rng: RngSpec,
    policy: SnapshotPolicy,
) -> Result<PartitionRun, SimError> {
    let start = BlockState::new(n, 0);
    check_start(start, Variant::Standard, stop)?;
    let budget = SimOptions::default().budget_for(n);
    let mut rng = rng.rng();
    let mut part = PartitionState {
        plants: (1..=n).map(|l| vec![l]).collect(),
        seeds: Vec::new(),
        colors: vec![Color::White; n as usize],
    };
    let mut events = Vec::new();
    let mut snapshots = Vec::new();
    if policy == SnapshotPolicy::EveryEvent {
        snapshots.push((0.0, part.snapshot(None)));
    }

    let mut state = start;
    let mut time = 0.0;
    let horizon = match stop {
        StopCondition::TimeHorizon(t) => t,
        _ => f64::INFINITY,
    };
    let reason = if let Some(reason) = stop_reason(state, None, stop) {
        reason
    } else {
        loop {
            let r = rates(state, params, Variant::Standard);
            let total = r.total();
            let next_time = time + exponential(&mut rng, total);
            if next_time > horizon {
                time = horizon;
                break TerminalReason::StopConditionMet;
            }
            if events.len() as u64 >= budget {
                break TerminalReason::EventBudgetExceeded;
            }
            time = next_time;
            let u = rng.random::<f64>() * total;
            let (kind, pending) = if u < r.coalescence {
                let i = part.plants.len();
                let a = index(&mut rng, i);
                let mut b = index(&mut rng, i - 1);
                if b >= a {
                    b += 1;
                }
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let merged = part.plants.swap_remove(hi);
                part.plants[lo].extend(merged);
                (EventKind::Coalescence, None)
            } else if u < r.coalescence + r.deactivation || state.seeds == 0 {
                let a = index(&mut rng, part.plants.len());
                let block = part.plants.swap_remove(a);
                part.seeds.push(block);
                (EventKind::Deactivation, None)
            } else {
                let a = index(&mut rng, part.seeds.len());
                (EventKind::Activation, Some(a))
            };
            let after = state
                .apply(kind, Variant::Standard)
                .expect("event with positive rate must be applicable");
            events.push(Event {
                time,
                kind,
                state_after: after,
            });
            state = after;
            let reason = stop_reason(state, Some(kind), stop);
            if let Some(a) = pending {
                if stop == StopCondition::FirstActivation {
                    snapshots.push((time, part.snapshot(Some(a))));
                    break TerminalReason::StopConditionMet;
                }
                let block = part.seeds.swap_remove(a);
                for &l in &block {
                    part.colors[l as usize - 1] = Color::Blue;
                }
                part.plants.push(block);
            }
            if policy == SnapshotPolicy::EveryEvent {
                snapshots.push((time, part.snapshot(None)));
            }
            if let Some(reason) = reason {
                break reason;
            }
        }
    };
    if policy == SnapshotPolicy::AtStop && snapshots.is_empty() {
        snapshots.push((time, part.snapshot(None)));
    }
    Ok(PartitionRun {
        trajectory: Trajectory {
            initial_state: start,
            events,
            terminal_reason: reason,
            end_time: time,
        },
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{expectations, pmf_n_gamma, Functional};
    use crate::laws::{ks_two_sample, ks_two_sample_pvalue};
    use crate::stats::stopping_summary;
    use std::collections::BTreeMap;

    fn unit() -> ModelParams {
        ModelParams::new(1.0, 1.0).unwrap()
    }

    fn within_se(mean: f64, expected: f64, var: f64, reps: usize, k: f64) -> bool {
        (mean - expected).abs() <= k * (var / reps as f64).sqrt()
    }

    #[test]
    fn single_plant_is_already_absorbed() {
        let t = simulate_counts(1, 0, &unit(), Variant::Standard, StopCondition::Absorption, RngSpec::new(1, 0)).unwrap();
        assert!(t.events.is_empty());
        assert!(t.is_absorbed());
        assert_eq!(t.end_time, 0.0);
        let s = stopping_summary(&t);
        assert_eq!(s.sigma, Some(0.0));
        assert_eq!(s.gamma, None);
    }

    #[test]
    fn rejects_bad_starts() {
        let p = unit();
        let go = |n0, m0, v, stop| simulate_counts(n0, m0, &p, v, stop, RngSpec::new(0, 0)).map(|_| ());
        assert_eq!(go(0, 0, Variant::Standard, StopCondition::Absorption), Err(SimError::EmptyInitialState));
        assert_eq!(go(3, 0, Variant::Bounded(0), StopCondition::Absorption), Err(SimError::ZeroCapacity));
        assert_eq!(
            go(3, 4, Variant::Bounded(2), StopCondition::Absorption),
            Err(SimError::BankOverflow { seeds: 4, capacity: 2 })
        );
        assert_eq!(
            go(3, 0, Variant::Standard, StopCondition::PlantsReach(5)),
            Err(SimError::LevelTooHigh { level: 5, plants: 3 })
        );
        assert!(matches!(
            go(3, 0, Variant::Standard, StopCondition::TimeHorizon(-1.0)),
            Err(SimError::BadHorizon(_))
        ));
        assert!(sample_first_deactivation(1, &p, RngSpec::new(0, 0)).is_err());
    }

    #[test]
    fn two_plants_deactivate_first_with_two_thirds() {
        let p = unit();
        let reps = 20_000;
        let hits = (0..reps)
            .filter(|&r| {
                let t = simulate_counts(2, 0, &p, Variant::Standard, StopCondition::FirstDeactivation, RngSpec::new(11, r))
                    .unwrap();
                stopping_summary(&t).n_at_gamma == Some(1)
            })
            .count();
        let freq = hits as f64 / reps as f64;
        let q = 2.0 / 3.0;
        assert!(within_se(freq, q, q * (1.0 - q), reps as usize, 4.0), "{freq}");
    }

    #[test]
    fn first_event_frequencies_follow_rates() {
        // from (3, 2) with c1 = c2 = 1: coalescence 3, deactivation 3, activation 2
        let p = unit();
        let reps = 30_000;
        let mut counts = [0usize; 3];
        for r in 0..reps {
            let t = simulate_counts_with(
                3,
                2,
                &p,
                Variant::Standard,
                StopCondition::Absorption,
                RngSpec::new(3, r),
                SimOptions { event_budget: Some(1) },
            )
            .unwrap();
            assert_eq!(t.terminal_reason, TerminalReason::EventBudgetExceeded);
            let idx = match t.events[0].kind {
                EventKind::Coalescence => 0,
                EventKind::Deactivation => 1,
                EventKind::Activation => 2,
            };
            counts[idx] += 1;
        }
        for (c, q) in counts.iter().zip([0.375, 0.375, 0.25]) {
            let f = *c as f64 / reps as f64;
            assert!(within_se(f, q, q * (1.0 - q), reps as usize, 4.0), "{counts:?}");
        }
    }

    #[test]
    fn stop_conditions_end_where_they_should() {
        let p = unit();
        for r in 0..200 {
            let rng = RngSpec::new(9, r);
            let t = simulate_counts(10, 0, &p, Variant::Standard, StopCondition::PlantsReach(4), rng).unwrap();
            assert_eq!(t.final_state().plants, 4);
            assert!(t.events.iter().rev().skip(1).all(|e| e.state_after.plants != 4));

            let t = simulate_counts(10, 0, &p, Variant::Standard, StopCondition::FirstDeactivation, rng).unwrap();
            assert_eq!(t.events.last().unwrap().kind, EventKind::Deactivation);
            assert!(t.events.iter().rev().skip(1).all(|e| e.kind == EventKind::Coalescence));

            let t = simulate_counts(10, 0, &p, Variant::Standard, StopCondition::FirstActivation, rng).unwrap();
            assert_eq!(t.events.last().unwrap().kind, EventKind::Activation);
            let first_other = t.events.iter().find(|e| e.kind != EventKind::Coalescence).unwrap();
            assert_eq!(first_other.kind, EventKind::Deactivation);

            let t = simulate_counts(10, 0, &p, Variant::Standard, StopCondition::TimeHorizon(0.05), rng).unwrap();
            assert!(t.events.iter().all(|e| e.time <= 0.05));
            if !t.is_absorbed() {
                assert_eq!(t.end_time, 0.05);
            }
        }
    }

    #[test]
    fn bounded_bank_never_overflows() {
        let p = ModelParams::new(3.0, 0.2).unwrap();
        for m in [1, 2, 5] {
            for r in 0..100 {
                let t = simulate_counts(30, 0, &p, Variant::Bounded(m), StopCondition::Absorption, RngSpec::new(4, r)).unwrap();
                assert!(t.is_absorbed());
                assert!(stopping_summary(&t).sup_seeds <= m);
            }
        }
    }

    #[test]
    fn reproducible_per_replicate() {
        let p = unit();
        let a = simulate_counts(40, 0, &p, Variant::Standard, StopCondition::Absorption, RngSpec::new(77, 5)).unwrap();
        let b = simulate_counts(40, 0, &p, Variant::Standard, StopCondition::Absorption, RngSpec::new(77, 5)).unwrap();
        let c = simulate_counts(40, 0, &p, Variant::Standard, StopCondition::Absorption, RngSpec::new(77, 6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert!(String::from_utf8(ca).unwrap().starts_with("time,event,plants,seeds\n0,start,40,0\n"));
    }

    #[test]
    fn ladder_matches_full_chain() {
        let n = 20;
        let p = unit();
        let reps = 20_000u64;
        let pmf = pmf_n_gamma(n, 1.0).unwrap();
        let mut direct = BTreeMap::new();
        let mut full = BTreeMap::new();
        let mut g_direct = Vec::new();
        let mut g_full = Vec::new();
        for r in 0..reps {
            let (m, g) = sample_first_deactivation(n, &p, RngSpec::new(21, r)).unwrap();
            *direct.entry(m).or_insert(0u64) += 1;
            g_direct.push(g);
            let t = simulate_counts(n, 0, &p, Variant::Standard, StopCondition::FirstDeactivation, RngSpec::new(22, r)).unwrap();
            let s = stopping_summary(&t);
            *full.entry(s.n_at_gamma.unwrap()).or_insert(0u64) += 1;
            g_full.push(s.gamma.unwrap());
        }
        assert!(pmf.tv_to_counts(&direct) < 0.03);
        assert!(pmf.tv_to_counts(&full) < 0.03);
        let d = ks_two_sample(&g_direct, &g_full).unwrap();
        assert!(ks_two_sample_pvalue(d, g_direct.len(), g_full.len()) > 1e-3, "{d}");
    }

    #[test]
    fn partition_is_consistent_with_counts() {
        let p = ModelParams::new(0.7, 1.3).unwrap();
        for r in 0..50 {
            let run = simulate_partition(12, &p, StopCondition::Absorption, RngSpec::new(8, r), SnapshotPolicy::EveryEvent)
                .unwrap();
            assert_eq!(run.snapshots.len(), run.trajectory.events.len() + 1);
            assert_eq!(run.snapshots[0].1, MarkedPartition::singletons(12));
            for ((t, snap), e) in run.snapshots[1..].iter().zip(&run.trajectory.events) {
                assert!(snap.is_partition());
                assert_eq!(snap.counts(), e.state_after);
                assert_eq!(*t, e.time);
            }
            assert!(run.trajectory.is_absorbed());
        }
    }

    #[test]
    fn partition_at_first_activation_is_white_left_limit() {
        let p = unit();
        for r in 0..300 {
            for policy in [SnapshotPolicy::AtStop, SnapshotPolicy::EveryEvent] {
                let run = simulate_partition(8, &p, StopCondition::FirstActivation, RngSpec::new(12, r), policy).unwrap();
                let (t, snap) = run.snapshots.last().unwrap();
                assert_eq!(*t, run.trajectory.end_time);
                assert!(snap.colors.iter().all(|&c| c == Color::White));
                let pending = snap.pending_activation.unwrap();
                assert_eq!(snap.blocks[pending].flag, Flag::Seed);
                let after = run.trajectory.final_state();
                assert_eq!(snap.counts(), BlockState::new(after.plants - 1, after.seeds + 1));
            }
        }
    }

    #[test]
    fn partition_and_count_chains_agree_in_law() {
        let p = unit();
        let reps = 1500;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for r in 0..reps {
            let run = simulate_partition(100, &p, StopCondition::Absorption, RngSpec::new(31, r), SnapshotPolicy::AtStop).unwrap();
            a.push(run.trajectory.end_time);
            let t = simulate_counts(100, 0, &p, Variant::Standard, StopCondition::Absorption, RngSpec::new(32, r)).unwrap();
            b.push(t.end_time);
        }
        let d = ks_two_sample(&a, &b).unwrap();
        assert!(ks_two_sample_pvalue(d, a.len(), b.len()) > 1e-3, "{d}");
    }

    #[test]
    fn mutation_counts() {
        let p = ModelParams::with_mutation(1.0, 1.0, 0.0, 0.0).unwrap();
        let t = simulate_counts(10, 0, &p, Variant::Standard, StopCondition::Absorption, RngSpec::new(1, 1)).unwrap();
        assert_eq!(superimpose_mutations(&t, &p, RngSpec::new(1, 2)).unwrap().total(), 0);

        let t = simulate_counts(10, 0, &p, Variant::Standard, StopCondition::FirstDeactivation, RngSpec::new(1, 1)).unwrap();
        assert!(matches!(superimpose_mutations(&t, &p, RngSpec::new(1, 2)), Err(SimError::NotAbsorbed(_))));

        let (mu_a, mu_i) = (0.8, 0.3);
        let p = ModelParams::with_mutation(1.0, 1.0, mu_a, mu_i).unwrap();
        let n = 50;
        let reps = 4000;
        let s: Vec<f64> = (0..reps)
            .map(|r| {
                let t = simulate_counts(n, 0, &p, Variant::Standard, StopCondition::Absorption, RngSpec::new(40, r)).unwrap();
                superimpose_mutations(&t, &p, RngSpec::new(41, r)).unwrap().total() as f64
            })
            .collect();
        let mean = s.iter().sum::<f64>() / reps as f64;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let ea = expectations(n, &p, Functional::PlantTime).unwrap().at_sample();
        let ei = expectations(n, &p, Functional::SeedTime).unwrap().at_sample();
        let expected = mu_a * ea + mu_i * ei;
        assert!(within_se(mean, expected, var, reps as usize, 3.0), "{mean} vs {expected}");
    }
}
