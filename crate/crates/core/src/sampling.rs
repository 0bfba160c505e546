//! Conditional sampling formula for old and recent blocks at the first
//! activation, its marginals, and a Hoppe-urn forward sampler.
//!
//! Given `k` active blocks, the sizes of the `k` old blocks and of the
//! recent blocks follow an Ewens-type law with parameter `2 c1` started
//! from `k` tables:
//!
//! ```text
//! P(O = a, R = b | k) = (n-k)! k! / (k + 2c1)_(n-k)
//!                       * prod_i 1/a_i!  * prod_j (2c1/j)^b_j / b_j!
//! ```
//!
//! All factorials and generalized binomials are evaluated in log space.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::ExactPmf;
use crate::report::fmt_f64;
use crate::rng::{index, RngSpec};
use crate::stats::BlockSpectrum;

/// Largest `n` accepted by the enumeration routines.
pub const MAX_ENUMERATION_N: u32 = 14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("need 0 <= k <= n (got k = {k}, n = {n})")]
    BadLevel { k: u32, n: u32 },
    #[error("enumeration is limited to n <= {MAX_ENUMERATION_N} (got {0})")]
    TooLarge(u32),
    #[error("configuration is not in A(k = {k}, n = {n})")]
    NotInA { k: u32, n: u32 },
    #[error("old-block counts are not in Abar(k = {k}, n = {n})")]
    NotInAbar { k: u32, n: u32 },
}

/// Old (`a`) and recent (`b`) block counts by size; index `i - 1` holds
/// the count of blocks of size `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
}

impl Configuration {
    pub fn old_blocks(&self) -> u32 {
        self.a.iter().sum()
    }

    /// `sum_i i * a_i`, the number of leaves in old blocks.
    pub fn old_leaves(&self) -> u32 {
        weighted(&self.a)
    }

    pub fn leaves(&self) -> u32 {
        weighted(&self.a) + weighted(&self.b)
    }

    pub fn in_a(&self, k: u32, n: u32) -> bool {
        self.a.len() == self.b.len() && self.old_blocks() == k && self.leaves() == n
    }
}

impl From<BlockSpectrum> for Configuration {
    fn from(s: BlockSpectrum) -> Self {
        Configuration {
            a: s.old,
            b: s.recent,
        }
    }
}

fn weighted(counts: &[u32]) -> u32 {
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (i as u32 + 1) * c)
        .sum()
}

fn in_abar(a: &[u32], k: u32, n: u32) -> bool {
    a.iter().sum::<u32>() == k && weighted(a) <= n
}

/// `ln (x)_(m) = ln x(x+1)...(x+m-1)` for `x > 0`.
pub fn ln_rising(x: f64, m: u32) -> f64 {
    (0..m).map(|t| (x + f64::from(t)).ln()).sum()
}

pub fn ln_factorial(m: u32) -> f64 {
    (2..=m).map(|t| f64::from(t).ln()).sum()
}

/// `ln C(u, t)` for real `u` and integer `t >= 0`, valid when `u - t + 1 > 0`,
/// through `C(u, t) = (u - t + 1)_(t) / t!`.
pub fn ln_gen_binomial(u: f64, t: u32) -> f64 {
    let base = u - f64::from(t) + 1.0;
    debug_assert!(t == 0 || base > 0.0, "ln_gen_binomial({u}, {t})");
    ln_rising(base, t) - ln_factorial(t)
}

fn check_level(k: u32, n: u32) -> Result<(), SamplingError> {
    if k > n || n == 0 {
        Err(SamplingError::BadLevel { k, n })
    } else {
        Ok(())
    }
}

/// All count vectors over sizes `1..=len` describing partitions of `total`
/// into exactly `parts` parts (any number of parts when `parts` is `None`).
fn partitions(total: u32, parts: Option<u32>, len: usize) -> Vec<Vec<u32>> {
    fn rec(
        remaining: u32,
        parts_left: Option<u32>,
        max_part: u32,
        counts: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if remaining == 0 {
            if parts_left.is_none_or(|p| p == 0) {
                out.push(counts.clone());
            }
            return;
        }
        if max_part == 0 || parts_left == Some(0) {
            return;
        }
        let size = max_part.min(remaining);
        // use `size` some number of times c >= 0, then continue with smaller parts
        let max_c = remaining / size;
        for c in (0..=max_c).rev() {
            if let Some(p) = parts_left {
                if c > p {
                    continue;
                }
            }
            counts[(size - 1) as usize] += c;
            rec(
                remaining - c * size,
                parts_left.map(|p| p - c),
                size - 1,
                counts,
                out,
            );
            counts[(size - 1) as usize] -= c;
        }
    }
    let mut out = Vec::new();
    let mut counts = vec![0; len];
    rec(total, parts, total, &mut counts, &mut out);
    out
}

/// Every configuration in `A(k, n)`: `k` old blocks and `n` leaves in total.
pub fn enumerate_a(k: u32, n: u32) -> Result<Vec<Configuration>, SamplingError> {
    check_level(k, n)?;
    if n > MAX_ENUMERATION_N {
        return Err(SamplingError::TooLarge(n));
    }
    let mut out = Vec::new();
    for a in enumerate_abar(k, n)? {
        let z = weighted(&a);
        for b in partitions(n - z, None, n as usize) {
            out.push(Configuration { a: a.clone(), b });
        }
    }
    Ok(out)
}

/// Every old-block vector in `Abar(k, n)`: `k` blocks holding at most `n` leaves.
pub fn enumerate_abar(k: u32, n: u32) -> Result<Vec<Vec<u32>>, SamplingError> {
    check_level(k, n)?;
    if n > MAX_ENUMERATION_N {
        return Err(SamplingError::TooLarge(n));
    }
    Ok((k..=n)
        .flat_map(|z| partitions(z, Some(k), n as usize))
        .collect())
}

/// Joint probability of a configuration given `k` old blocks.
pub fn spectrum_probability(
    cfg: &Configuration,
    k: u32,
    n: u32,
    c1: f64,
) -> Result<f64, SamplingError> {
    if cfg.a.len() != n as usize || !cfg.in_a(k, n) {
        return Err(SamplingError::NotInA { k, n });
    }
    let two_c1 = 2.0 * c1;
    let mut ln_p = ln_factorial(n - k) + ln_factorial(k) - ln_rising(f64::from(k) + two_c1, n - k);
    for &ai in &cfg.a {
        ln_p -= ln_factorial(ai);
    }
    for (j, &bj) in cfg.b.iter().enumerate() {
        if bj > 0 {
            ln_p += f64::from(bj) * (two_c1 / (j as f64 + 1.0)).ln() - ln_factorial(bj);
        }
    }
    Ok(ln_p.exp())
}

/// Marginal probability of the old-block counts `a` given `k`.
pub fn marginal_old_probability(a: &[u32], k: u32, n: u32, c1: f64) -> Result<f64, SamplingError> {
    if a.len() > n as usize || !in_abar(a, k, n) {
        return Err(SamplingError::NotInAbar { k, n });
    }
    let two_c1 = 2.0 * c1;
    let z = weighted(a);
    let mut ln_p = ln_factorial(k);
    for &ai in a {
        ln_p -= ln_factorial(ai);
    }
    ln_p += ln_gen_binomial(two_c1 + f64::from(n - z) - 1.0, n - z);
    ln_p -= ln_gen_binomial(two_c1 + f64::from(n) - 1.0, n - k);
    Ok(ln_p.exp())
}

/// Law of `Z = sum_i i O_i`, supported on `k..=n`.
pub fn pgf_z(k: u32, n: u32, c1: f64) -> Result<ExactPmf, SamplingError> {
    check_level(k, n)?;
    if k == 0 {
        return Ok(ExactPmf {
            offset: 0,
            probabilities: vec![1.0],
        });
    }
    let two_c1 = 2.0 * c1;
    let norm = ln_gen_binomial(two_c1 + f64::from(n) - 1.0, n - k);
    let probabilities = (k..=n)
        .map(|z| {
            (ln_gen_binomial(two_c1 + f64::from(n - z) - 1.0, n - z)
                + ln_gen_binomial(f64::from(z) - 1.0, z - k)
                - norm)
                .exp()
        })
        .collect();
    Ok(ExactPmf {
        offset: k,
        probabilities,
    })
}

/// `E[O_j | k]`; zero outside `1 <= j <= n - k + 1`.
pub fn expected_old(j: u32, k: u32, n: u32, c1: f64) -> f64 {
    if k == 0 || k > n || j < 1 || j > n - k + 1 {
        return 0.0;
    }
    let two_c1 = 2.0 * c1;
    let num = ln_gen_binomial(two_c1 + f64::from(n - j) - 1.0, n + 1 - j - k);
    let den = ln_gen_binomial(two_c1 + f64::from(n) - 1.0, n - k);
    f64::from(k) * (num - den).exp()
}

/// `E[R_j | k]`; zero outside `1 <= j <= n - k`.
pub fn expected_recent(j: u32, k: u32, n: u32, c1: f64) -> f64 {
    if k >= n || j < 1 || j > n - k {
        return 0.0;
    }
    let two_c1 = 2.0 * c1;
    let num = ln_gen_binomial(two_c1 + f64::from(n - j) - 1.0, n - j - k);
    let den = ln_gen_binomial(two_c1 + f64::from(n) - 1.0, n - k);
    two_c1 / f64::from(j) * (num - den).exp()
}

/// Forward Hoppe urn: `k` old tables with one customer each and a black
/// ball of weight `2 c1`. Each of the `n - k` steps opens a new (recent)
/// table with probability `2 c1 / (customers + 2 c1)`, otherwise the new
/// customer sits next to a uniformly chosen existing customer.
pub fn hoppe_urn_sample(k: u32, n: u32, c1: f64, rng: RngSpec) -> Result<Configuration, SamplingError> {
    check_level(k, n)?;
    let mut r = rng.rng();
    Ok(hoppe_urn_with(k, n, c1, &mut r))
}

pub(crate) fn hoppe_urn_with<R: Rng + ?Sized>(k: u32, n: u32, c1: f64, rng: &mut R) -> Configuration {
    let two_c1 = 2.0 * c1;
    // table sizes; the first k tables are old
    let mut sizes: Vec<u32> = vec![1; k as usize];
    // owner[c] = table of customer c
    let mut owner: Vec<usize> = (0..k as usize).collect();
    for customers in k..n {
        let total = f64::from(customers) + two_c1;
        if rng.random::<f64>() * total < two_c1 || customers == 0 {
            sizes.push(1);
            owner.push(sizes.len() - 1);
        } else {
            let t = owner[index(rng, customers as usize)];
            sizes[t] += 1;
            owner.push(t);
        }
    }
    let mut cfg = Configuration {
        a: vec![0; n as usize],
        b: vec![0; n as usize],
    };
    for (t, &s) in sizes.iter().enumerate() {
        let slot = if t < k as usize { &mut cfg.a } else { &mut cfg.b };
        slot[(s - 1) as usize] += 1;
    }
    cfg
}

/// Laws derived by summing the joint formula over `A(k, n)`; an oracle for
/// the closed-form marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedLaw {
    pub k: u32,
    pub n: u32,
    pub joint: Vec<(Configuration, f64)>,
    pub marginal_old: BTreeMap<Vec<u32>, f64>,
    pub z: BTreeMap<u32, f64>,
    /// `expected_old[j - 1] = E[O_j | k]`.
    pub expected_old: Vec<f64>,
    pub expected_recent: Vec<f64>,
}

impl EnumeratedLaw {
    pub fn total(&self) -> f64 {
        self.joint.iter().map(|(_, p)| p).sum()
    }
}

pub fn enumerate_law(k: u32, n: u32, c1: f64) -> Result<EnumeratedLaw, SamplingError> {
    let configs = enumerate_a(k, n)?;
    let mut law = EnumeratedLaw {
        k,
        n,
        joint: Vec::with_capacity(configs.len()),
        marginal_old: BTreeMap::new(),
        z: BTreeMap::new(),
        expected_old: vec![0.0; n as usize],
        expected_recent: vec![0.0; n as usize],
    };
    for cfg in configs {
        let p = spectrum_probability(&cfg, k, n, c1)?;
        *law.marginal_old.entry(cfg.a.clone()).or_default() += p;
        *law.z.entry(cfg.old_leaves()).or_default() += p;
        for j in 0..n as usize {
            law.expected_old[j] += p * f64::from(cfg.a[j]);
            law.expected_recent[j] += p * f64::from(cfg.b[j]);
        }
        law.joint.push((cfg, p));
    }
    Ok(law)
}

/// Total variation between empirical configuration counts and the formula.
/// Mass of the formula on unobserved configurations is included.
pub fn tv_to_formula(
    counts: &BTreeMap<Configuration, u64>,
    k: u32,
    n: u32,
    c1: f64,
) -> Result<f64, SamplingError> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Ok(1.0);
    }
    let mut tv = 0.0;
    let mut seen_mass = 0.0;
    for (cfg, &c) in counts {
        let p = spectrum_probability(cfg, k, n, c1).unwrap_or(0.0);
        seen_mass += p;
        tv += (c as f64 / total as f64 - p).abs();
    }
    tv += (1.0 - seen_mass).max(0.0);
    Ok(0.5 * tv)
}

fn join(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

/// CSV with header `k,a,b,probability`; vectors are space-separated counts
/// for sizes `1..=n`.
pub fn write_law_csv<W: Write>(mut out: W, k: u32, law: &[(Configuration, f64)]) -> io::Result<()> {
    writeln!(out, "k,a,b,probability")?;
    for (cfg, p) in law {
        writeln!(out, "{},{},{},{}", k, join(&cfg.a), join(&cfg.b), fmt_f64(*p))?;
    }
    Ok(())
}

/// CSV with header `j,E_O,E_R`.
pub fn write_expectations_csv<W: Write>(mut out: W, k: u32, n: u32, c1: f64) -> io::Result<()> {
    writeln!(out, "j,E_O,E_R")?;
    for j in 1..=n {
        writeln!(
            out,
            "{},{},{}",
            j,
            fmt_f64(expected_old(j, k, n, c1)),
            fmt_f64(expected_recent(j, k, n, c1))
        )?;
    }
    Ok(())
}
