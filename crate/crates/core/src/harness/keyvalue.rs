//! Flat `key=value` text used for manifests and `--config` files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sampler::Rejection;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_string())?)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.set(key, v);
        }
        self
    }

    /// Entries of `other` override ours.
    pub fn overlay(&mut self, other: &KeyValues) -> &mut Self {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
        self
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Parse(format!("bad value {v:?} for `{key}`")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("missing required setting `{key}`")))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| parse_list(v).map_err(|_| Error::Parse(format!("bad list {v:?} for `{key}`"))))
            .transpose()
    }
}

pub fn parse_list<T: FromStr>(text: &str) -> std::result::Result<Vec<T>, T::Err> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect()
}

pub fn format_list<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for KeyValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for KeyValues {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut kv = KeyValues::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", no + 1)))?;
            kv.set(k.trim(), v.trim());
        }
        Ok(kv)
    }
}

/// `none`, `inf` or `max`; the radius comes from a separate setting.
pub fn parse_rejection(kind: &str, radius: Option<f64>) -> Result<Rejection> {
    let need = || {
        radius.ok_or_else(|| Error::Config(format!("rejection `{kind}` needs a radius")))
    };
    match kind {
        "none" => Ok(Rejection::None),
        "inf" | "infinity" => Ok(Rejection::InfinityNorm(need()?)),
        "max" | "max2" => Ok(Rejection::MaxNorm(need()?)),
        other => Err(Error::Config(format!("unknown rejection kind {other:?}"))),
    }
}

pub fn rejection_kind(r: &Rejection) -> &'static str {
    match r {
        Rejection::None => "none",
        Rejection::InfinityNorm(_) => "inf",
        Rejection::MaxNorm(_) => "max",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_overlay_and_print() {
        let mut a: KeyValues = "# comment\nxi = 0.5\ndims=4,4,4\n".parse().unwrap();
        let b: KeyValues = "xi=0.25".parse().unwrap();
        a.overlay(&b);
        assert_eq!(a.get::<f64>("xi").unwrap(), Some(0.25));
        assert_eq!(a.get_list::<usize>("dims").unwrap(), Some(vec![4, 4, 4]));
        assert_eq!(a.to_string(), "dims=4,4,4\nxi=0.25\n");
        assert!(a.require::<f64>("sigma").is_err());
        assert!("novalue".parse::<KeyValues>().is_err());
    }

    #[test]
    fn rejection_kinds() {
        assert_eq!(parse_rejection("inf", Some(10.0)).unwrap(), Rejection::InfinityNorm(10.0));
        assert_eq!(parse_rejection("max", Some(2.0)).unwrap(), Rejection::MaxNorm(2.0));
        assert_eq!(parse_rejection("none", None).unwrap(), Rejection::None);
        assert!(parse_rejection("inf", None).is_err());
        assert!(parse_rejection("box", Some(1.0)).is_err());
    }
}
