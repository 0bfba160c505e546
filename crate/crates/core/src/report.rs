//! Experiment records with CSV and JSON output.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// One measured quantity with its reference value and verdict.
///
/// `seed` and the parameters are enough to rerun the experiment alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub experiment: String,
    pub quantity: String,
    pub n: Option<u32>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub reps: Option<u64>,
    pub seed: Option<u64>,
    pub estimate: f64,
    pub se: Option<f64>,
    pub reference: Option<f64>,
    pub deviation: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

impl Record {
    pub fn new(experiment: &str, quantity: impl Into<String>, estimate: f64) -> Self {
        Record {
            experiment: experiment.to_string(),
            quantity: quantity.into(),
            n: None,
            c1: None,
            c2: None,
            reps: None,
            seed: None,
            estimate,
            se: None,
            reference: None,
            deviation: None,
            tolerance: None,
            pass: None,
        }
    }

    pub fn n(mut self, n: u32) -> Self {
        self.n = Some(n);
        self
    }

    pub fn params(mut self, c1: f64, c2: f64) -> Self {
        self.c1 = Some(c1);
        self.c2 = Some(c2);
        self
    }

    pub fn mc(mut self, reps: u64, seed: u64) -> Self {
        self.reps = Some(reps);
        self.seed = Some(seed);
        self
    }

    pub fn se(mut self, se: f64) -> Self {
        self.se = Some(se);
        self
    }

    /// Sets the reference and the deviation `estimate - reference`.
    pub fn reference(mut self, reference: f64) -> Self {
        self.reference = Some(reference);
        self.deviation = Some(self.estimate - reference);
        self
    }

    pub fn deviation(mut self, deviation: f64) -> Self {
        self.deviation = Some(deviation);
        self
    }

    /// Pass when `|deviation|` (or the estimate itself without a
    /// reference) is at most `tol`.
    pub fn within(mut self, tol: f64) -> Self {
        let d = self.deviation.unwrap_or(self.estimate).abs();
        self.tolerance = Some(tol);
        self.pass = Some(d <= tol);
        self
    }

    pub fn verdict(mut self, pass: bool) -> Self {
        self.pass = Some(pass);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub records: Vec<Record>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Shortest text that parses back to `x`, in scientific notation when
/// `|x|` is below `1e-4` or at least `1e15`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn fopt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

const HEADER: &str = "experiment,quantity,n,c1,c2,reps,seed,estimate,se,reference,deviation,tolerance,pass";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Report {
    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn extend(&mut self, other: Report) {
        self.records.extend(other.records);
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// False if any record failed.
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.pass != Some(false))
    }

    pub fn write<W: Write>(&self, out: W, format: Format) -> io::Result<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => {
                let mut out = out;
                serde_json::to_writer_pretty(&mut out, self)?;
                writeln!(out)
            }
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.experiment,
                r.quantity,
                opt(r.n),
                fopt(r.c1),
                fopt(r.c2),
                opt(r.reps),
                opt(r.seed),
                fmt_f64(r.estimate),
                fopt(r.se),
                fopt(r.reference),
                fopt(r.deviation),
                fopt(r.tolerance),
                opt(r.pass),
            )?;
        }
        Ok(())
    }
}
