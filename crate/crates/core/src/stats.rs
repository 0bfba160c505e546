//! Stopping times, branch lengths and block spectra of simulated paths.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BlockState, EventKind};
use crate::simulator::{Flag, MarkedPartition, Observer, SimError, Trajectory};

/// Stopping times of one realization started from `(n, 0)`.
///
/// `n_at_theta` is the number of plants right after the first activation;
/// `m_at_theta` is the number of seeds right before it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StoppingSummary {
    pub gamma: Option<f64>,
    pub theta: Option<f64>,
    pub sigma: Option<f64>,
    pub n_at_gamma: Option<u32>,
    pub n_at_theta: Option<u32>,
    pub m_at_theta: Option<u32>,
    pub sup_seeds: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BranchLengths {
    pub active: f64,
    pub inactive: f64,
    pub total: f64,
}

impl BranchLengths {
    fn from_parts(active: f64, inactive: f64) -> Self {
        BranchLengths {
            active,
            inactive,
            total: active + inactive,
        }
    }
}

/// Reads the stopping times off a recorded trajectory.
pub fn stopping_summary(traj: &Trajectory) -> StoppingSummary {
    let mut s = StoppingSummary {
        sup_seeds: traj.initial_state.seeds,
        ..Default::default()
    };
    if traj.initial_state.is_mrca() {
        s.sigma = Some(0.0);
    }
    let mut before = traj.initial_state;
    for e in &traj.events {
        s.sup_seeds = s.sup_seeds.max(e.state_after.seeds);
        if e.kind == EventKind::Deactivation && s.gamma.is_none() {
            s.gamma = Some(e.time);
            s.n_at_gamma = Some(e.state_after.plants);
        }
        if e.kind == EventKind::Activation && s.theta.is_none() {
            s.theta = Some(e.time);
            s.n_at_theta = Some(e.state_after.plants);
            s.m_at_theta = Some(before.seeds);
        }
        if e.state_after.is_mrca() && s.sigma.is_none() {
            s.sigma = Some(e.time);
        }
        before = e.state_after;
    }
    s
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Active and inactive lengths `A = int N dt`, `I = int M dt` up to the
/// most recent common ancestor.
pub fn branch_lengths(traj: &Trajectory) -> Result<BranchLengths, SimError> {
    if !traj.is_absorbed() {
        return Err(SimError::NotAbsorbed(traj.terminal_reason));
    }
    let mut active = Vec::with_capacity(traj.events.len());
    let mut inactive = Vec::with_capacity(traj.events.len());
    let mut state = traj.initial_state;
    let mut t = 0.0;
    for e in &traj.events {
        if state.is_mrca() {
            break;
        }
        let dt = e.time - t;
        active.push(f64::from(state.plants) * dt);
        inactive.push(f64::from(state.seeds) * dt);
        state = e.state_after;
        t = e.time;
    }
    let sum_desc = |mut v: Vec<f64>| {
        v.sort_unstable_by(|a, b| b.total_cmp(a));
        let mut acc = CompensatedSum::default();
        v.into_iter().for_each(|x| acc.add(x));
        acc.value()
    };
    Ok(BranchLengths::from_parts(sum_desc(active), sum_desc(inactive)))
}

/// Online counterpart of [`stopping_summary`] and [`branch_lengths`] that
/// never stores the path. Feed it to [`crate::simulator::drive`].
#[derive(Debug, Clone)]
pub struct SummaryTracker {
    summary: StoppingSummary,
    last_time: f64,
    active: CompensatedSum,
    inactive: CompensatedSum,
}

impl SummaryTracker {
    pub fn new(initial: BlockState) -> Self {
        SummaryTracker {
            summary: StoppingSummary {
                sup_seeds: initial.seeds,
                sigma: initial.is_mrca().then_some(0.0),
                ..Default::default()
            },
            last_time: 0.0,
            active: CompensatedSum::default(),
            inactive: CompensatedSum::default(),
        }
    }

    pub fn summary(&self) -> StoppingSummary {
        self.summary
    }

    /// Branch lengths, available once the most recent common ancestor was
    /// reached.
    pub fn lengths(&self) -> Option<BranchLengths> {
        self.summary.sigma.map(|_| {
            BranchLengths::from_parts(self.active.value(), self.inactive.value())
        })
    }
}

impl Observer for SummaryTracker {
    #[inline]
    fn on_event(&mut self, time: f64, kind: EventKind, before: BlockState, after: BlockState) {
        let s = &mut self.summary;
        if s.sigma.is_none() {
            let dt = time - self.last_time;
            self.active.add(f64::from(before.plants) * dt);
            self.inactive.add(f64::from(before.seeds) * dt);
            self.last_time = time;
            if after.is_mrca() {
                s.sigma = Some(time);
            }
        }
        if after.seeds > s.sup_seeds {
            s.sup_seeds = after.seeds;
        }
        match kind {
            EventKind::Deactivation if s.gamma.is_none() => {
                s.gamma = Some(time);
                s.n_at_gamma = Some(after.plants);
            }
            EventKind::Activation if s.theta.is_none() => {
                s.theta = Some(time);
                s.n_at_theta = Some(after.plants);
                s.m_at_theta = Some(before.seeds);
            }
            _ => {}
        }
    }
}

/// Counts of old (active) and recent (dormant) blocks by size.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSpectrum {
    /// `old[i - 1]` is the number of plant blocks of size `i`.
    pub old: Vec<u32>,
    /// `recent[i - 1]` is the number of seed blocks of size `i`.
    pub recent: Vec<u32>,
    pub k: u32,
}

impl BlockSpectrum {
    pub fn sample_size(&self) -> usize {
        self.old
            .iter()
            .zip(&self.recent)
            .enumerate()
            .map(|(i, (o, r))| (i + 1) * (o + r) as usize)
            .sum()
    }
}

/// How the block activating at the first activation is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum SnapshotConvention {
    /// Left limit: the activating block still counts as recent (seed).
    #[default]
    PreActivation,
    /// Right limit: the activating block counts as old (plant).
    PostActivation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpectrumError {
    #[error("snapshot blocks do not partition 1..={0}")]
    NotAPartition(usize),
    #[error("pending activation index {0} does not point at a seed block")]
    BadPending(usize),
}

/// Block spectrum of a snapshot taken at the first activation.
///
/// Without a pending activation both conventions read the flags as they are.
pub fn spectrum_at_first_activation(
    snapshot: &MarkedPartition,
    convention: SnapshotConvention,
) -> Result<BlockSpectrum, SpectrumError> {
    let n = snapshot.sample_size();
    if !snapshot.is_partition() {
        return Err(SpectrumError::NotAPartition(n));
    }
    if let Some(p) = snapshot.pending_activation {
        if snapshot.blocks.get(p).map(|b| b.flag) != Some(Flag::Seed) {
            return Err(SpectrumError::BadPending(p));
        }
    }
    let mut old = vec![0u32; n];
    let mut recent = vec![0u32; n];
    for (idx, block) in snapshot.blocks.iter().enumerate() {
        let flipped = convention == SnapshotConvention::PostActivation
            && snapshot.pending_activation == Some(idx);
        let size = block.leaves.len();
        match (block.flag, flipped) {
            (Flag::Plant, _) | (Flag::Seed, true) => old[size - 1] += 1,
            (Flag::Seed, false) => recent[size - 1] += 1,
        }
    }
    let k = old.iter().sum();
    Ok(BlockSpectrum { old, recent, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, Variant};
    use crate::rng::RngSpec;
    use crate::simulator::{
        drive, simulate_counts, Block, Color, Event, SimOptions, StopCondition, TerminalReason,
    };
    use proptest::prelude::*;

    fn ev(time: f64, kind: EventKind, p: u32, s: u32) -> Event {
        Event {
            time,
            kind,
            state_after: BlockState::new(p, s),
        }
    }

    #[test]
    fn summary_readout_deactivate_then_activate() {
        let traj = Trajectory {
            initial_state: BlockState::new(2, 0),
            events: vec![
                ev(0.5, EventKind::Deactivation, 1, 1),
                ev(0.8, EventKind::Activation, 2, 0),
            ],
            terminal_reason: TerminalReason::StopConditionMet,
            end_time: 0.8,
        };
        let s = stopping_summary(&traj);
        assert_eq!(s.gamma, Some(0.5));
        assert_eq!(s.theta, Some(0.8));
        assert_eq!(s.n_at_gamma, Some(1));
        assert_eq!(s.n_at_theta, Some(2));
        assert_eq!(s.m_at_theta, Some(1));
        assert_eq!(s.sigma, None);
        assert_eq!(s.sup_seeds, 1);
    }

    #[test]
    fn summary_single_coalescence() {
        let traj = Trajectory {
            initial_state: BlockState::new(2, 0),
            events: vec![ev(1.2, EventKind::Coalescence, 1, 0)],
            terminal_reason: TerminalReason::Absorbed,
            end_time: 1.2,
        };
        let s = stopping_summary(&traj);
        assert_eq!(s.sigma, Some(1.2));
        assert_eq!(s.gamma, None);
        assert_eq!(s.theta, None);
        let l = branch_lengths(&traj).unwrap();
        assert_eq!((l.active, l.inactive, l.total), (2.4, 0.0, 2.4));
    }

    #[test]
    fn lengths_of_trivial_tree() {
        let traj = simulate_counts(
            1,
            0,
            &ModelParams::new(1.0, 1.0).unwrap(),
            Variant::Standard,
            StopCondition::Absorption,
            RngSpec::new(0, 0),
        )
        .unwrap();
        let l = branch_lengths(&traj).unwrap();
        assert_eq!(l, BranchLengths::default());
    }

    #[test]
    fn lengths_require_absorption() {
        let traj = simulate_counts(
            10,
            0,
            &ModelParams::new(1.0, 1.0).unwrap(),
            Variant::Standard,
            StopCondition::PlantsReach(5),
            RngSpec::new(0, 0),
        )
        .unwrap();
        assert!(matches!(branch_lengths(&traj), Err(SimError::NotAbsorbed(_))));
    }

    #[test]
    fn spectrum_examples() {
        let merged = MarkedPartition {
            blocks: vec![Block {
                leaves: vec![1, 2],
                flag: Flag::Plant,
            }],
            colors: vec![Color::White; 2],
            pending_activation: None,
        };
        let s = spectrum_at_first_activation(&merged, SnapshotConvention::PreActivation).unwrap();
        assert_eq!((s.old, s.recent, s.k), (vec![0, 1], vec![0, 0], 1));

        let split = MarkedPartition {
            blocks: vec![
                Block {
                    leaves: vec![1],
                    flag: Flag::Plant,
                },
                Block {
                    leaves: vec![2],
                    flag: Flag::Seed,
                },
            ],
            colors: vec![Color::White; 2],
            pending_activation: Some(1),
        };
        let pre = spectrum_at_first_activation(&split, SnapshotConvention::PreActivation).unwrap();
        assert_eq!((pre.old, pre.recent, pre.k), (vec![1, 0], vec![1, 0], 1));
        let post = spectrum_at_first_activation(&split, SnapshotConvention::PostActivation).unwrap();
        assert_eq!((post.old, post.recent, post.k), (vec![2, 0], vec![0, 0], 2));
    }

    #[test]
    fn spectrum_rejects_bad_snapshots() {
        let overlap = MarkedPartition {
            blocks: vec![
                Block {
                    leaves: vec![1, 2],
                    flag: Flag::Plant,
                },
                Block {
                    leaves: vec![2],
                    flag: Flag::Seed,
                },
            ],
            colors: vec![Color::White; 2],
            pending_activation: None,
        };
        assert_eq!(
            spectrum_at_first_activation(&overlap, SnapshotConvention::PreActivation),
            Err(SpectrumError::NotAPartition(2))
        );
        let bad_pending = MarkedPartition {
            blocks: vec![Block {
                leaves: vec![1, 2],
                flag: Flag::Plant,
            }],
            colors: vec![Color::White; 2],
            pending_activation: Some(0),
        };
        assert_eq!(
            spectrum_at_first_activation(&bad_pending, SnapshotConvention::PreActivation),
            Err(SpectrumError::BadPending(0))
        );
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = CompensatedSum::default();
        acc.add(1e16);
        for _ in 0..10 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.value(), 10.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn tracker_matches_recorded_path(seed in any::<u64>(), n in 1u32..60, c1 in 0.1f64..3.0, c2 in 0.1f64..3.0) {
            let params = ModelParams::new(c1, c2).unwrap();
            let spec = RngSpec::new(seed, 3);
            let traj = simulate_counts(n, 0, &params, Variant::Standard, StopCondition::Absorption, spec).unwrap();
            let mut tracker = SummaryTracker::new(BlockState::new(n, 0));
            let mut rng = spec.rng();
            let end = drive(BlockState::new(n, 0), &params, Variant::Standard, StopCondition::Absorption,
                SimOptions::default().budget_for(n), &mut rng, &mut tracker);
            prop_assert_eq!(end.events as usize, traj.events.len());
            prop_assert_eq!(tracker.summary(), stopping_summary(&traj));
            let a = tracker.lengths().unwrap();
            let b = branch_lengths(&traj).unwrap();
            prop_assert!((a.active - b.active).abs() <= 1e-12 * b.active.max(1.0));
            prop_assert!((a.inactive - b.inactive).abs() <= 1e-12 * b.inactive.max(1.0));
            prop_assert_eq!(b.total, b.active + b.inactive);
            if b.inactive > 0.0 { prop_assert!(stopping_summary(&traj).gamma.is_some()); }
        }

        #[test]
        fn stopping_order(seed in any::<u64>(), n in 2u32..80) {
            let params = ModelParams::new(1.0, 1.0).unwrap();
            let traj = simulate_counts(n, 0, &params, Variant::Standard, StopCondition::Absorption, RngSpec::new(seed, 0)).unwrap();
            let s = stopping_summary(&traj);
            if let (Some(g), Some(t)) = (s.gamma, s.theta) { prop_assert!(g < t); }
            if let (Some(t), Some(sig)) = (s.theta, s.sigma) { prop_assert!(t < sig); }
            if let Some(m) = s.m_at_theta { prop_assert!(m >= 1 && s.sup_seeds >= m); }
        }
    }
}
