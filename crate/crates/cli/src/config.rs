//! `key = value` config files. Keys are the long flag names without the
//! leading dashes; `#` starts a comment. Flags given on the command line
//! take precedence over file values.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::{read_file, usage, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
    source: String,
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{source}:{line_no}: expected `key = value`, got `{line}`")))?;
            let key = k.trim().trim_start_matches("--").to_string();
            if key.is_empty() {
                return Err(usage(format!("{source}:{line_no}: empty key")));
            }
            if let Some((_, first)) = entries.insert(key.clone(), (v.trim().to_string(), line_no)) {
                return Err(usage(format!("{source}:{line_no}: `{key}` already set on line {first}")));
            }
        }
        Ok(KeyValues { entries, source: source.to_string() })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(KeyValues::default()),
            Some(p) => Self::parse(&read_file(p)?, &p.display().to_string()),
        }
    }

    /// Keys not in `known`, for rejecting typos.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            Some((k, (_, line))) => Err(usage(format!("{}:{line}: unknown key `{k}`", self.source))),
            None => Ok(()),
        }
    }

    /// `flag` if given, else the parsed file value for `key`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.entries
            .get(key)
            .map(|(v, line)| {
                v.parse::<T>().map_err(|e| usage(format!("{}:{line}: bad value for `{key}`: {e}", self.source)))
            })
            .transpose()
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let kv = KeyValues::parse("n = 512\n# comment\nworkers=2  # trailing\n", "cfg").unwrap();
        assert_eq!(kv.pick::<usize>(None, "n").unwrap(), Some(512));
        assert_eq!(kv.pick(Some(8usize), "workers").unwrap(), Some(8));
        assert_eq!(kv.pick::<usize>(None, "workers").unwrap(), Some(2));
        assert_eq!(kv.pick::<usize>(None, "seed").unwrap(), None);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let err = KeyValues::parse("n = 1\nbogus\n", "cfg").unwrap_err().to_string();
        assert!(err.contains("cfg:2"), "{err}");
        let kv = KeyValues::parse("\nn = x\n", "cfg").unwrap();
        let err = kv.pick::<usize>(None, "n").unwrap_err().to_string();
        assert!(err.contains("cfg:2"), "{err}");
        assert!(KeyValues::parse("n=1\nn=2", "cfg").is_err());
        assert!(kv.check_keys(&["b"]).is_err());
    }
}
