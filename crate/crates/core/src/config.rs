//! Line-oriented `key = value` configuration text.
//!
//! `#` starts a comment, blank lines are ignored, keys are unique. Values
//! are parsed by the consumer via [`KeyValues::take`]; [`KeyValues::finish`]
//! rejects any key nobody asked for.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug)]
pub struct KeyValues {
    path: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(perr("empty key".into()));
            }
            if entries.insert(key.to_string(), (value.to_string(), i + 1)).is_some() {
                return Err(perr(format!("key {key:?} given twice")));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Removes and parses `key`, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, line)) => value.parse().map(Some).map_err(|_| Error::Parse {
                path: self.path.clone(),
                line,
                msg: format!("{key}: cannot parse {value:?}"),
            }),
        }
    }

    /// Overwrites `slot` when `key` is present.
    pub fn take_into<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (_, line))) => Err(Error::Parse {
                path: self.path,
                line,
                msg: format!("unknown key {key:?}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_take() {
        let mut kv = KeyValues::parse("# c\nwidth = 64\n\nname=stick # trailing\n", Path::new("c")).unwrap();
        assert_eq!(kv.take::<usize>("width").unwrap(), Some(64));
        assert_eq!(kv.take::<String>("name").unwrap().as_deref(), Some("stick"));
        assert_eq!(kv.take::<usize>("height").unwrap(), None);
        kv.finish().unwrap();
    }

    #[test]
    fn errors() {
        assert!(KeyValues::parse("width 64\n", Path::new("c")).is_err());
        assert!(KeyValues::parse("a = 1\na = 2\n", Path::new("c")).is_err());
        let mut kv = KeyValues::parse("a = x\nb = 1\n", Path::new("c")).unwrap();
        assert!(kv.take::<u32>("a").is_err());
        assert!(matches!(kv.finish(), Err(Error::Parse { line: 2, .. })));
    }
}
