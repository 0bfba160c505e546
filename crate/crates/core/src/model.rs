//! Model parameters, block-counting states and transition rates.
//!
//! The block-counting chain tracks `(plants, seeds)`: the number of active
//! and dormant blocks. From `(i, j)` it jumps to
//!
//! ```text
//!   (i-1, j)     at rate i(i-1)/2     coalescence
//!   (i-1, j+1)   at rate c1 * i       deactivation
//!   (i+1, j-1)   at rate c2 * j       activation
//! ```
//!
//! The bounded variant holds at most `m` seeds; a deactivation into a full
//! bank removes the lineage and is reported on the coalescence channel.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be positive (got {value})")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative (got {value})")]
    Negative { name: &'static str, value: f64 },
    #[error("{name} must be finite (got {value})")]
    NotFinite { name: &'static str, value: f64 },
}

/// Free parameters of the seed bank coalescent.
///
/// `c1` is the per-lineage deactivation intensity, `c2` the per-seed
/// activation intensity. The two mutation rates apply per unit of active
/// and inactive branch length respectively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub c1: f64,
    pub c2: f64,
    pub mu_active: f64,
    pub mu_inactive: f64,
    /// Multiplier applied to the activation rate in the dynamics only.
    /// Always 1 except for sensitivity experiments, see
    /// [`ModelParams::with_activation_perturbation`].
    #[serde(default = "one", skip_serializing_if = "is_one")]
    activation_scale: f64,
}

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

impl ModelParams {
    /// Validated parameters without mutation.
    pub fn new(c1: f64, c2: f64) -> Result<Self, ParamError> {
        Self::with_mutation(c1, c2, 0.0, 0.0)
    }

    pub fn with_mutation(
        c1: f64,
        c2: f64,
        mu_active: f64,
        mu_inactive: f64,
    ) -> Result<Self, ParamError> {
        validate(ModelParams {
            c1,
            c2,
            mu_active,
            mu_inactive,
            activation_scale: 1.0,
        })
    }

    /// Copy whose chain dynamics use `c2 * (1 + rel)` as the activation
    /// intensity while `self.c2` keeps its nominal value. Used to check that
    /// the verification suite detects a mis-specified activation rate.
    pub fn with_activation_perturbation(mut self, rel: f64) -> Self {
        self.activation_scale = 1.0 + rel;
        self
    }

    /// Activation intensity actually driving the dynamics.
    pub fn effective_c2(&self) -> f64 {
        self.c2 * self.activation_scale
    }

    pub fn is_perturbed(&self) -> bool {
        self.activation_scale != 1.0
    }
}

/// Checks the parameter invariants and hands the parameters back unchanged.
pub fn validate(params: ModelParams) -> Result<ModelParams, ParamError> {
    let fields = [
        ("c1", params.c1),
        ("c2", params.c2),
        ("mu_active", params.mu_active),
        ("mu_inactive", params.mu_inactive),
    ];
    for (name, value) in fields {
        if !value.is_finite() {
            return Err(ParamError::NotFinite { name, value });
        }
    }
    if params.c1 <= 0.0 {
        return Err(ParamError::NotPositive {
            name: "c1",
            value: params.c1,
        });
    }
    if params.c2 <= 0.0 {
        return Err(ParamError::NotPositive {
            name: "c2",
            value: params.c2,
        });
    }
    for (name, value) in &fields[2..] {
        if *value < 0.0 {
            return Err(ParamError::Negative {
                name,
                value: *value,
            });
        }
    }
    Ok(params)
}

/// Number of active (`plants`) and dormant (`seeds`) blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockState {
    pub plants: u32,
    pub seeds: u32,
}

impl BlockState {
    pub const fn new(plants: u32, seeds: u32) -> Self {
        BlockState { plants, seeds }
    }

    pub const fn total(&self) -> u32 {
        self.plants + self.seeds
    }

    /// A single active block: the most recent common ancestor is reached.
    pub const fn is_mrca(&self) -> bool {
        self.plants == 1 && self.seeds == 0
    }

    /// State after `kind` fires under `variant`, or `None` if the event is
    /// impossible from here.
    pub fn apply(&self, kind: EventKind, variant: Variant) -> Option<BlockState> {
        let BlockState { plants, seeds } = *self;
        match kind {
            EventKind::Coalescence => {
                let bank_full = matches!(variant, Variant::Bounded(m) if seeds >= m);
                if plants >= 2 || (bank_full && plants >= 1) {
                    Some(BlockState::new(plants - 1, seeds))
                } else {
                    None
                }
            }
            EventKind::Deactivation => match variant {
                Variant::Bounded(m) if seeds >= m => None,
                _ if plants >= 1 => Some(BlockState::new(plants - 1, seeds + 1)),
                _ => None,
            },
            EventKind::Activation => {
                (seeds >= 1).then(|| BlockState::new(plants + 1, seeds - 1))
            }
        }
    }
}

impl fmt::Display for BlockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.plants, self.seeds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Coalescence,
    Deactivation,
    Activation,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Coalescence => "coalescence",
            EventKind::Deactivation => "deactivation",
            EventKind::Activation => "activation",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Variant {
    #[default]
    Standard,
    /// Seed bank capacity `m >= 1`.
    Bounded(u32),
}

/// The three channel rates out of one state; zero for impossible events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub coalescence: f64,
    pub deactivation: f64,
    pub activation: f64,
}

impl Rates {
    pub fn total(&self) -> f64 {
        self.coalescence + self.deactivation + self.activation
    }
}

/// `i choose 2` in integer arithmetic, converted once.
#[inline]
pub fn pairs(i: u32) -> f64 {
    let i = u64::from(i);
    (i * i.saturating_sub(1) / 2) as f64
}

/// Channel rates out of `state`.
#[inline]
pub fn rates(state: BlockState, params: &ModelParams, variant: Variant) -> Rates {
    let i = state.plants;
    let j = state.seeds;
    let coal = pairs(i);
    let deact = params.c1 * f64::from(i);
    let activation = params.effective_c2() * f64::from(j);
    match variant {
        Variant::Bounded(m) if j >= m => Rates {
            coalescence: coal + deact,
            deactivation: 0.0,
            activation,
        },
        _ => Rates {
            coalescence: coal,
            deactivation: deact,
            activation,
        },
    }
}

/// Positive-rate transitions out of `state`, in the fixed order
/// coalescence, deactivation, activation.
pub fn transition_rates(
    state: BlockState,
    params: &ModelParams,
    variant: Variant,
) -> Vec<(EventKind, f64)> {
    let r = rates(state, params, variant);
    [
        (EventKind::Coalescence, r.coalescence),
        (EventKind::Deactivation, r.deactivation),
        (EventKind::Activation, r.activation),
    ]
    .into_iter()
    .filter(|&(_, rate)| rate > 0.0)
    .collect()
}
