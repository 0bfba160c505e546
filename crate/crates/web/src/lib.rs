//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function returns a JSON string. The `*_json` functions
//! hold the logic and are callable from native code and tests.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use seedbank::exact::{expectations, pmf_n_gamma, Functional};
use seedbank::laws::LimitLaw;
use seedbank::model::{BlockState, ModelParams, Variant};
use seedbank::rng::RngSpec;
use seedbank::simulator::{simulate_counts, StopCondition};

pub const MAX_PMF_N: u32 = 1_000_000;
pub const MAX_CURVE_N: u32 = 2_000;
pub const MAX_TRAJECTORY_N: u32 = 20_000;

#[derive(Debug, Serialize)]
pub struct NGammaLaw {
    pub n: u32,
    pub c1: f64,
    /// Support points `m / n`.
    pub x: Vec<f64>,
    pub pmf: Vec<f64>,
    pub cdf: Vec<f64>,
    pub limit_cdf: Vec<f64>,
    pub sup_distance: f64,
}

#[derive(Debug, Serialize)]
pub struct LengthCurves {
    pub c1: f64,
    pub c2: f64,
    pub n: Vec<u32>,
    pub active: Vec<f64>,
    pub inactive: Vec<f64>,
    pub total: Vec<f64>,
    /// `c1 E[A] / (c2 E[I])`, identically 1 for the exact chain.
    pub balance: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct TrajectoryPath {
    pub time: Vec<f64>,
    pub plants: Vec<u32>,
    pub seeds: Vec<u32>,
    pub events: Vec<&'static str>,
}

fn params(c1: f64, c2: f64) -> Result<ModelParams, String> {
    ModelParams::new(c1, c2).map_err(|e| e.to_string())
}

fn limit(n: u32, lo: u32, hi: u32, what: &str) -> Result<(), String> {
    if (lo..=hi).contains(&n) {
        Ok(())
    } else {
        Err(format!("{what} must be between {lo} and {hi} (got {n})"))
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Exact law of the number of plants at the first deactivation, against
/// the Beta(2 c1, 1) limit of `N / n`.
pub fn n_gamma_law(n: u32, c1: f64) -> Result<NGammaLaw, String> {
    limit(n, 2, MAX_PMF_N, "n")?;
    params(c1, 1.0)?;
    let pmf = pmf_n_gamma(n, c1).map_err(|e| e.to_string())?;
    let beta = LimitLaw::beta(c1);
    let nf = f64::from(n);
    let x: Vec<f64> = (0..n).map(|m| f64::from(m) / nf).collect();
    let cdf = pmf.cdf();
    let limit_cdf: Vec<f64> = x.iter().map(|&z| beta.cdf(z)).collect();
    let sup_distance = cdf
        .iter()
        .zip(&limit_cdf)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(NGammaLaw {
        n,
        c1,
        x,
        pmf: pmf.probabilities,
        cdf,
        limit_cdf,
        sup_distance,
    })
}

/// Expected active, dormant and total branch lengths for every sample size
/// up to `n_max`, from one pass of the level solver.
pub fn length_curves(n_max: u32, c1: f64, c2: f64) -> Result<LengthCurves, String> {
    limit(n_max, 2, MAX_CURVE_N, "n")?;
    let p = params(c1, c2)?;
    let a = expectations(n_max, &p, Functional::PlantTime).map_err(|e| e.to_string())?;
    let i = expectations(n_max, &p, Functional::SeedTime).map_err(|e| e.to_string())?;
    let mut out = LengthCurves {
        c1,
        c2,
        n: Vec::new(),
        active: Vec::new(),
        inactive: Vec::new(),
        total: Vec::new(),
        balance: Vec::new(),
    };
    for n in 2..=n_max {
        let s = BlockState::new(n, 0);
        let (ea, ei) = (a.get(s).unwrap_or(f64::NAN), i.get(s).unwrap_or(f64::NAN));
        out.n.push(n);
        out.active.push(ea);
        out.inactive.push(ei);
        out.total.push(ea + ei);
        out.balance.push(c1 * ea / (c2 * ei));
    }
    Ok(out)
}

/// One realization of the block-counting chain from `n` plants to the most
/// recent common ancestor.
pub fn trajectory(n: u32, c1: f64, c2: f64, seed: u64) -> Result<TrajectoryPath, String> {
    limit(n, 1, MAX_TRAJECTORY_N, "n")?;
    let p = params(c1, c2)?;
    let t = simulate_counts(n, 0, &p, Variant::Standard, StopCondition::Absorption, RngSpec::new(seed, 0))
        .map_err(|e| e.to_string())?;
    let mut path = TrajectoryPath {
        time: vec![0.0],
        plants: vec![n],
        seeds: vec![0],
        events: vec!["start"],
    };
    for e in &t.events {
        path.time.push(e.time);
        path.plants.push(e.state_after.plants);
        path.seeds.push(e.state_after.seeds);
        path.events.push(e.kind.as_str());
    }
    Ok(path)
}

pub fn n_gamma_law_json(n: u32, c1: f64) -> Result<String, String> {
    to_json(&n_gamma_law(n, c1)?)
}

pub fn length_curves_json(n_max: u32, c1: f64, c2: f64) -> Result<String, String> {
    to_json(&length_curves(n_max, c1, c2)?)
}

pub fn trajectory_json(n: u32, c1: f64, c2: f64, seed: u64) -> Result<String, String> {
    to_json(&trajectory(n, c1, c2, seed)?)
}

#[wasm_bindgen(js_name = nGammaLaw)]
pub fn js_n_gamma_law(n: u32, c1: f64) -> Result<String, JsValue> {
    n_gamma_law_json(n, c1).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = lengthCurves)]
pub fn js_length_curves(n_max: u32, c1: f64, c2: f64) -> Result<String, JsValue> {
    length_curves_json(n_max, c1, c2).map_err(|e| JsValue::from_str(&e))
}

/// `seed` is a JavaScript number; fractional parts are dropped.
#[wasm_bindgen(js_name = trajectory)]
pub fn js_trajectory(n: u32, c1: f64, c2: f64, seed: f64) -> Result<String, JsValue> {
    trajectory_json(n, c1, c2, seed.max(0.0) as u64).map_err(|e| JsValue::from_str(&e))
}
