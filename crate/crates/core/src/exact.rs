//! Noise-free computations on the block-counting chain.
//!
//! Expected accumulated functionals until the most recent common ancestor
//! are obtained by first-step analysis. A coalescence lowers the total
//! number of blocks `k = plants + seeds` by one while activations and
//! deactivations keep it, so the linear system splits into one tridiagonal
//! system per level `k`, solved bottom-up for `k = 1, 2, ..., n`.

use std::collections::BTreeMap;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{pairs, BlockState, ModelParams};
use crate::report::fmt_f64;
use crate::stats::CompensatedSum;
use crate::tridiag::{self, TridiagError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExactError {
    #[error("sample size must be at least {min} (got {got})")]
    SampleTooSmall { min: u32, got: u32 },
    #[error("tridiagonal solve failed at level {level}: {source}")]
    Solve {
        level: u32,
        #[source]
        source: TridiagError,
    },
    #[error("dense solve failed: singular system")]
    Singular,
}

/// Quantity accumulated along the path until absorption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Functional {
    /// `int N dt`, the active length.
    PlantTime,
    /// `int M dt`, the inactive length.
    SeedTime,
    /// Elapsed time, i.e. the time to the most recent common ancestor.
    ElapsedTime,
}

impl Functional {
    #[inline]
    fn reward(self, i: u32, j: u32) -> f64 {
        match self {
            Functional::PlantTime => f64::from(i),
            Functional::SeedTime => f64::from(j),
            Functional::ElapsedTime => 1.0,
        }
    }
}

/// Expected functional from every state with `1 <= plants + seeds <= n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationTable {
    pub n: u32,
    pub functional: Functional,
    /// `levels[k - 1][i]` is the value at `(i, k - i)`.
    levels: Vec<Vec<f64>>,
}

impl ExpectationTable {
    pub fn get(&self, state: BlockState) -> Option<f64> {
        let k = state.total();
        if k == 0 || k > self.n {
            return None;
        }
        self.levels[(k - 1) as usize].get(state.plants as usize).copied()
    }

    /// Value at the sample state `(n, 0)`.
    pub fn at_sample(&self) -> f64 {
        self.levels[(self.n - 1) as usize][self.n as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (BlockState, f64)> + '_ {
        self.levels.iter().enumerate().flat_map(|(km1, level)| {
            let k = km1 as u32 + 1;
            level
                .iter()
                .enumerate()
                .map(move |(i, &v)| (BlockState::new(i as u32, k - i as u32), v))
        })
    }

    /// CSV with header `i,j,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "i,j,value")?;
        for (s, v) in self.iter() {
            writeln!(out, "{},{},{}", s.plants, s.seeds, fmt_f64(v))?;
        }
        Ok(())
    }
}

/// First-step analysis for `functional`, one tridiagonal solve per level.
pub fn expectations(
    n: u32,
    params: &ModelParams,
    functional: Functional,
) -> Result<ExpectationTable, ExactError> {
    if n < 1 {
        return Err(ExactError::SampleTooSmall { min: 1, got: n });
    }
    let c1 = params.c1;
    let c2 = params.effective_c2();
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(n as usize);
    for k in 1..=n {
        let size = (k + 1) as usize;
        let mut sub = vec![0.0; size];
        let mut diag = vec![0.0; size];
        let mut sup = vec![0.0; size];
        let mut rhs = vec![0.0; size];
        for i in 0..=k {
            let j = k - i;
            let row = i as usize;
            if k == 1 && i == 1 {
                // absorbing state (1, 0)
                diag[row] = 1.0;
                continue;
            }
            let coal = pairs(i);
            let deact = c1 * f64::from(i);
            let act = c2 * f64::from(j);
            diag[row] = coal + deact + act;
            sub[row] = -deact;
            sup[row] = -act;
            rhs[row] = functional.reward(i, j);
            if coal > 0.0 {
                rhs[row] += coal * levels[(k - 2) as usize][row - 1];
            }
        }
        let h = tridiag::solve(&sub, &diag, &sup, &rhs)
            .map_err(|source| ExactError::Solve { level: k, source })?;
        levels.push(h);
    }
    Ok(ExpectationTable {
        n,
        functional,
        levels,
    })
}

/// The same expectations by one dense LU solve over every state with
/// `1 <= plants + seeds <= n`. Independent of the level decomposition and
/// meant for small `n` only.
pub fn dense_expectations(
    n: u32,
    params: &ModelParams,
    functional: Functional,
) -> Result<BTreeMap<BlockState, f64>, ExactError> {
    if n < 1 {
        return Err(ExactError::SampleTooSmall { min: 1, got: n });
    }
    let states: Vec<BlockState> = (0..=n)
        .flat_map(|i| (0..=n - i).map(move |j| BlockState::new(i, j)))
        .filter(|s| s.total() >= 1 && !s.is_mrca())
        .collect();
    let index: BTreeMap<BlockState, usize> =
        states.iter().enumerate().map(|(k, s)| (*s, k)).collect();
    let dim = states.len();
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    let c2 = params.effective_c2();
    for (row, s) in states.iter().enumerate() {
        let (i, j) = (s.plants, s.seeds);
        let moves = [
            (pairs(i), i.checked_sub(1).map(|p| BlockState::new(p, j))),
            (
                params.c1 * f64::from(i),
                i.checked_sub(1).map(|p| BlockState::new(p, j + 1)),
            ),
            (
                c2 * f64::from(j),
                j.checked_sub(1).map(|q| BlockState::new(i + 1, q)),
            ),
        ];
        for (rate, target) in moves {
            if rate <= 0.0 {
                continue;
            }
            a[(row, row)] += rate;
            let target = target.expect("positive rate implies a target");
            if let Some(&col) = index.get(&target) {
                a[(row, col)] -= rate;
            }
        }
        b[row] = functional.reward(i, j);
    }
    let lu = a.clone().lu();
    let mut x = lu.solve(&b).ok_or(ExactError::Singular)?;
    // one round of iterative refinement
    let residual = &b - &a * &x;
    x += lu.solve(&residual).ok_or(ExactError::Singular)?;
    let mut out: BTreeMap<BlockState, f64> =
        states.into_iter().zip(x.iter().copied()).collect();
    out.insert(BlockState::new(1, 0), 0.0);
    Ok(out)
}

/// Expected branch lengths and height for a sample of `n` plants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactSummary {
    pub n: u32,
    pub c1: f64,
    pub c2: f64,
    #[serde(rename = "E_A")]
    pub expected_active: f64,
    #[serde(rename = "E_I")]
    pub expected_inactive: f64,
    #[serde(rename = "E_L")]
    pub expected_total: f64,
    #[serde(rename = "E_sigma")]
    pub expected_height: f64,
    pub balance_residual: f64,
}

pub fn exact_summary(n: u32, params: &ModelParams) -> Result<ExactSummary, ExactError> {
    let a = expectations(n, params, Functional::PlantTime)?.at_sample();
    let i = expectations(n, params, Functional::SeedTime)?.at_sample();
    let t = expectations(n, params, Functional::ElapsedTime)?.at_sample();
    Ok(ExactSummary {
        n,
        c1: params.c1,
        c2: params.c2,
        expected_active: a,
        expected_inactive: i,
        expected_total: a + i,
        expected_height: t,
        balance_residual: relative_imbalance(params, a, i),
    })
}

fn relative_imbalance(params: &ModelParams, active: f64, inactive: f64) -> f64 {
    let lhs = params.c1 * active;
    (lhs - params.c2 * inactive).abs() / lhs
}

/// `|c1 E[A] - c2 E[I]| / (c1 E[A])`, which vanishes for the true chain.
/// Uses the nominal `c2`, so a perturbed activation rate shows up here.
pub fn balance_residual(n: u32, params: &ModelParams) -> Result<f64, ExactError> {
    if n < 2 {
        return Err(ExactError::SampleTooSmall { min: 2, got: n });
    }
    let a = expectations(n, params, Functional::PlantTime)?.at_sample();
    let i = expectations(n, params, Functional::SeedTime)?.at_sample();
    Ok(relative_imbalance(params, a, i))
}

/// Probability mass function on `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPmf {
    pub offset: u32,
    pub probabilities: Vec<f64>,
}

impl ExactPmf {
    pub fn prob(&self, x: u32) -> f64 {
        x.checked_sub(self.offset)
            .and_then(|k| self.probabilities.get(k as usize))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .map(move |(k, &p)| (self.offset + k as u32, p))
    }

    pub fn total(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        self.probabilities.iter().for_each(|&p| acc.add(p));
        acc.value()
    }

    /// `P(X <= x)` for every `x` in the support, in order.
    pub fn cdf(&self) -> Vec<f64> {
        self.probabilities
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.support().map(|(x, p)| f64::from(x) * p).sum()
    }

    /// Total variation distance to an empirical frequency table.
    pub fn tv_to_counts(&self, counts: &BTreeMap<u32, u64>) -> f64 {
        let total: u64 = counts.values().sum();
        let mut keys: Vec<u32> = counts.keys().copied().collect();
        keys.extend(self.support().map(|(x, _)| x));
        keys.sort_unstable();
        keys.dedup();
        0.5 * keys
            .into_iter()
            .map(|x| {
                let emp = *counts.get(&x).unwrap_or(&0) as f64 / total as f64;
                (emp - self.prob(x)).abs()
            })
            .sum::<f64>()
    }
}

/// Exact law of `N(gamma)`, the number of plants right after the first
/// deactivation, for a sample of `n` plants.
///
/// Descending from level `m + 1` is a deactivation with probability
/// `2 c1 / (m + 2 c1)`, independently across levels, so
/// `P(N = m) = 2 c1 / (m + 2 c1) * prod_{i=m+1}^{n-1} i / (i + 2 c1)` and
/// `P(N = 0) = prod_{i=1}^{n-1} i / (i + 2 c1)`.
pub fn pmf_n_gamma(n: u32, c1: f64) -> Result<ExactPmf, ExactError> {
    if n < 2 {
        return Err(ExactError::SampleTooSmall { min: 2, got: n });
    }
    let two_c1 = 2.0 * c1;
    let mut probabilities = vec![0.0; n as usize];
    // log of prod_{i=m+1}^{n-1} i / (i + 2 c1), built from the top down
    let mut log_tail = CompensatedSum::default();
    for m in (1..n).rev() {
        let mf = f64::from(m);
        probabilities[m as usize] = two_c1 / (mf + two_c1) * log_tail.value().exp();
        log_tail.add(-(two_c1 / mf).ln_1p());
    }
    probabilities[0] = log_tail.value().exp();
    Ok(ExactPmf {
        offset: 0,
        probabilities,
    })
}

/// The product `prod_{i=floor(zn)}^{n-1} i / (i + 2 c1)` as it is commonly
/// displayed for `P(N(gamma) <= zn)`. It is the exact probability of
/// `N(gamma) <= floor(zn) - 1`, and converges to the same limit.
pub fn displayed_cdf_product(n: u32, c1: f64, z: f64) -> f64 {
    let lo = (z * f64::from(n)).floor().max(0.0) as u32;
    if lo == 0 {
        return 0.0;
    }
    let two_c1 = 2.0 * c1;
    (lo..n)
        .map(|i| -(two_c1 / f64::from(i)).ln_1p())
        .sum::<f64>()
        .exp()
}

/// `sup_m |P(N(gamma) <= m) - (m / n)^(2 c1)|` over `m = 0..n`.
pub fn n_gamma_beta_distance(n: u32, c1: f64) -> Result<f64, ExactError> {
    let pmf = pmf_n_gamma(n, c1)?;
    let nf = f64::from(n);
    Ok(pmf
        .cdf()
        .into_iter()
        .enumerate()
        .map(|(m, cdf)| (cdf - (m as f64 / nf).powf(2.0 * c1)).abs())
        .fold(0.0, f64::max))
}

/// Mean and variance of the limit of `n * gamma_n`; `None` when infinite.
pub fn gamma_law_moments(c1: f64) -> (Option<f64>, Option<f64>) {
    let mean = (c1 > 0.5).then(|| 2.0 / (2.0 * c1 - 1.0));
    let var = (c1 > 1.0).then(|| 4.0 * c1 / ((c1 - 1.0) * (2.0 * c1 - 1.0).powi(2)));
    (mean, var)
}

/// Exact joint law of `(plants, seeds)` just before the first activation,
/// for a sample of `n` plants and no seeds.
///
/// Until the first activation, plants only decrease, so the law is obtained
/// by sweeping levels `n, n-1, ..., 0` with the seed count as the only
/// state. Negligible mass (below `1e-300` relative) at large seed counts
/// is dropped.
pub fn first_activation_law(n: u32, params: &ModelParams) -> BTreeMap<BlockState, f64> {
    let mut out = BTreeMap::new();
    sweep_first_activation(n, params, |i, j, p| {
        out.insert(BlockState::new(i, j), p);
    });
    out
}

/// Marginal laws of the plants and of the seeds just before the first
/// activation, without materializing the joint law.
pub fn first_activation_marginals(n: u32, params: &ModelParams) -> (ExactPmf, ExactPmf) {
    let mut plants = vec![0.0; n as usize + 1];
    let mut seeds: Vec<f64> = Vec::new();
    sweep_first_activation(n, params, |i, j, p| {
        plants[i as usize] += p;
        if seeds.len() <= j as usize {
            seeds.resize(j as usize + 1, 0.0);
        }
        seeds[j as usize] += p;
    });
    (
        ExactPmf {
            offset: 0,
            probabilities: plants,
        },
        ExactPmf {
            offset: 0,
            probabilities: seeds,
        },
    )
}

fn sweep_first_activation<F: FnMut(u32, u32, f64)>(n: u32, params: &ModelParams, mut visit: F) {
    let c1 = params.c1;
    let c2 = params.effective_c2();
    let mut mass = vec![1.0];
    let mut next = Vec::new();
    for i in (0..=n).rev() {
        let coal = pairs(i);
        let deact = c1 * f64::from(i);
        next.clear();
        next.resize(mass.len() + 1, 0.0);
        for (j, &p) in mass.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let act = c2 * j as f64;
            let total = coal + deact + act;
            if act > 0.0 {
                visit(i, j as u32, p * act / total);
            }
            if i > 0 {
                next[j] += p * coal / total;
                next[j + 1] += p * deact / total;
            }
        }
        while next.len() > 1 && *next.last().unwrap() < 1e-300 {
            next.pop();
        }
        std::mem::swap(&mut mass, &mut next);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c1: f64, c2: f64) -> ModelParams {
        ModelParams::new(c1, c2).unwrap()
    }

    #[test]
    fn two_lineage_hand_solves() {
        // a(1,1) = 1 + a(2,0), a(2,0) = 2/3 + (2/3) a(1,1)  =>  a(2,0) = 4
        let params = p(1.0, 1.0);
        let a = expectations(2, &params, Functional::PlantTime).unwrap();
        let i = expectations(2, &params, Functional::SeedTime).unwrap();
        let t = expectations(2, &params, Functional::ElapsedTime).unwrap();
        assert!((a.at_sample() - 4.0).abs() < 1e-12);
        assert!((i.at_sample() - 4.0).abs() < 1e-12);
        assert!((t.at_sample() - 4.0).abs() < 1e-12);
        assert!((i.get(BlockState::new(1, 1)).unwrap() - 6.0).abs() < 1e-12);
        assert!((t.get(BlockState::new(1, 1)).unwrap() - 5.5).abs() < 1e-12);
        assert_eq!(a.get(BlockState::new(1, 0)), Some(0.0));
        assert_eq!(balance_residual(2, &params).unwrap(), 0.0);
    }

    #[test]
    fn table_values_are_finite_and_non_negative() {
        let t = expectations(40, &p(0.5, 2.0), Functional::ElapsedTime).unwrap();
        assert_eq!(t.iter().count(), (2..=41).sum::<usize>());
        assert!(t.iter().all(|(_, v)| v.is_finite() && v >= 0.0));
        assert_eq!(t.get(BlockState::new(0, 0)), None);
        assert_eq!(t.get(BlockState::new(30, 11)), None);
    }

    #[test]
    fn level_solver_matches_dense_solve() {
        for (c1, c2) in [(1.0, 1.0), (2.0, 0.5), (0.5, 2.0), (0.3, 3.0)] {
            let params = p(c1, c2);
            for n in 1..=6 {
                for f in [Functional::PlantTime, Functional::SeedTime, Functional::ElapsedTime] {
                    let table = expectations(n, &params, f).unwrap();
                    let dense = dense_expectations(n, &params, f).unwrap();
                    for (s, v) in &dense {
                        let w = table.get(*s).unwrap();
                        assert!((v - w).abs() <= 1e-12 * v.abs().max(1.0), "{s} {v} {w}");
                    }
                }
            }
        }
    }

    #[test]
    fn dense_three_lineage_balance() {
        let params = p(2.0, 0.5);
        let a = dense_expectations(3, &params, Functional::PlantTime).unwrap();
        let i = dense_expectations(3, &params, Functional::SeedTime).unwrap();
        assert_eq!(a.len(), 9);
        let s = BlockState::new(3, 0);
        let dense_res = (2.0 * a[&s] - 0.5 * i[&s]).abs() / (2.0 * a[&s]);
        assert!(dense_res < 1e-12);
        assert!(balance_residual(3, &params).unwrap() <= 1e-12);
    }

    #[test]
    fn perturbed_activation_breaks_balance() {
        let params = p(1.0, 1.0).with_activation_perturbation(0.01);
        let r = balance_residual(50, &params).unwrap();
        assert!(r > 1e-3, "{r}");
    }

    #[test]
    fn pmf_two_lineages() {
        let pmf = pmf_n_gamma(2, 0.5).unwrap();
        assert!((pmf.prob(1) - 0.5).abs() < 1e-15);
        assert!((pmf.prob(0) - 0.5).abs() < 1e-15);
        assert_eq!(pmf.prob(2), 0.0);
    }

    #[test]
    fn pmf_is_normalised() {
        for n in [2, 3, 10, 1000, 100_000] {
            for c1 in [0.1, 0.5, 1.0, 2.0, 10.0] {
                let pmf = pmf_n_gamma(n, c1).unwrap();
                assert!((pmf.total() - 1.0).abs() < 1e-12, "{n} {c1}");
            }
        }
        assert!(pmf_n_gamma(1, 1.0).is_err());
    }

    #[test]
    fn strong_deactivation_stops_at_first_step() {
        let pmf = pmf_n_gamma(50, 1e6).unwrap();
        assert!(pmf.prob(49) > 0.9999);
    }

    #[test]
    fn displayed_product_shifts_by_one_level() {
        let (n, c1) = (200, 0.8);
        let cdf = pmf_n_gamma(n, c1).unwrap().cdf();
        for m in 1..n {
            let z = (f64::from(m) + 0.5) / f64::from(n);
            let shown = displayed_cdf_product(n, c1, z);
            assert!((shown - cdf[(m - 1) as usize]).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_limit_distance_shrinks() {
        let d: Vec<f64> = [100, 1000, 10_000, 100_000]
            .iter()
            .map(|&n| n_gamma_beta_distance(n, 1.0).unwrap())
            .collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
        assert!(d[3] <= 0.01);
    }

    #[test]
    fn moments_of_gamma_limit() {
        let (m, v) = gamma_law_moments(2.0);
        assert!((m.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((v.unwrap() - 8.0 / 9.0).abs() < 1e-15);
        assert_eq!(gamma_law_moments(0.5), (None, None));
        assert_eq!(gamma_law_moments(1.0), (Some(2.0), None));
    }

    #[test]
    fn first_activation_law_is_normalised() {
        let law = first_activation_law(2000, &p(1.0, 1.0));
        let total: f64 = law.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(law.keys().all(|s| s.seeds >= 1));
    }

    #[test]
    fn first_activation_law_two_lineages() {
        // From (2,0): reach (1,1) w.p. 2c1/(1+2c1); from (1,1) activation
        // w.p. c2/(c1+c2); else (0,2) activates surely. Coalescence leads to
        // (1,0) -> (0,1) -> activation.
        let (c1, c2) = (1.0, 1.0);
        let law = first_activation_law(2, &p(c1, c2));
        let d = 2.0 * c1 / (1.0 + 2.0 * c1);
        let a11 = d * c2 / (c1 + c2);
        let a02 = d * c1 / (c1 + c2);
        let a01 = 1.0 - d;
        assert!((law[&BlockState::new(1, 1)] - a11).abs() < 1e-15);
        assert!((law[&BlockState::new(0, 2)] - a02).abs() < 1e-15);
        assert!((law[&BlockState::new(0, 1)] - a01).abs() < 1e-15);
    }

    #[test]
    fn marginals_match_joint_law() {
        let params = p(0.8, 1.7);
        let law = first_activation_law(300, &params);
        let (plants, seeds) = first_activation_marginals(300, &params);
        assert!((plants.total() - 1.0).abs() < 1e-12);
        let mean_seeds: f64 = law.iter().map(|(s, q)| f64::from(s.seeds) * q).sum();
        let mean_plants: f64 = law.iter().map(|(s, q)| f64::from(s.plants) * q).sum();
        assert!((seeds.mean() - mean_seeds).abs() < 1e-12);
        assert!((plants.mean() - mean_plants).abs() < 1e-10);
    }
}
