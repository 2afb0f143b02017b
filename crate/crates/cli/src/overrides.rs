use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

/// `--set key=value` pairs. Each command takes the keys it understands;
/// anything left over is reported as an error so typos do not go unnoticed.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    values: BTreeMap<String, String>,
}

impl Overrides {
    pub fn parse(pairs: &[String]) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| CliError::input(format!("--set expects key=value, got '{pair}'")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(CliError::input(format!("--set has an empty key in '{pair}'")));
            }
            // later occurrences win
            values.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Overrides { values })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> CliResult<Option<T>> {
        match self.values.remove(key) {
            None => Ok(None),
            Some(raw) => {
                raw.parse().map(Some).map_err(|_| CliError::input(format!("--set {key}: cannot parse '{raw}'")))
            }
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> CliResult<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Fail if any key was not consumed by `command`.
    pub fn finish(self, command: &str) -> CliResult<()> {
        if self.values.is_empty() {
            return Ok(());
        }
        let keys: Vec<_> = self.values.into_keys().collect();
        Err(CliError::input(format!("unknown --set key(s) for {command}: {}", keys.join(", "))))
    }
}
