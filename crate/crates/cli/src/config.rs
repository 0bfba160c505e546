//! Flat `key = value` configuration files.
//!
//! Keys are the long flag names without the leading dashes (`n-grid`, `c1`,
//! ...). Blank lines and lines starting with `#` are skipped.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::Failure;

const KEYS: &[&str] = &[
    "n", "n-grid", "reps", "c1", "c2", "mu", "mu-inactive", "seed", "stop", "variant", "bound-m",
    "out", "format", "threads", "only", "cap", "k", "conditioned", "event-budget", "report",
    "trajectory", "pmf", "table", "perturb-activation",
];

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
            let key = k.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key {key:?}", no + 1));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }
}

/// Flag value if given, else the file's value, else `None`.
pub struct Resolver {
    file: ConfigFile,
}

impl Resolver {
    pub fn new(file: ConfigFile) -> Self {
        Resolver { file }
    }

    pub fn get<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Failure>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| Failure::Usage(format!("config key {key}: {e}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let f = ConfigFile::parse("# campaign\nn = 50\nc1=2.5\n\nmu_inactive = 0.5\n").unwrap();
        let r = Resolver::new(f);
        assert_eq!(r.get(None::<u32>, "n").unwrap(), Some(50));
        assert_eq!(r.get(Some(7u32), "n").unwrap(), Some(7));
        assert_eq!(r.get(None::<f64>, "mu-inactive").unwrap(), Some(0.5));
        assert_eq!(r.get(None::<f64>, "c2").unwrap(), None);
        assert!(r.get(None::<u32>, "c1").is_err());
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(ConfigFile::parse("n 50").is_err());
        assert!(ConfigFile::parse("colour = blue").is_err());
    }
}
