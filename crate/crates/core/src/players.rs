use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sorted set of 0-based mode indices held by cooperating players.
/// Serialized as a list of 1-based indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct PlayerSet(Vec<usize>);

impl PlayerSet {
    pub fn new(mut modes: Vec<usize>) -> Self {
        modes.sort_unstable();
        modes.dedup();
        Self(modes)
    }

    pub fn all(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// Parse a comma-separated list of 1-based indices, e.g. `"1,3,4"`.
    pub fn parse_one_based(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::default());
        }
        let mut modes = Vec::new();
        for tok in s.split(',') {
            let idx: usize = tok
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSubset(format!("not an index: {tok:?}")))?;
            if idx == 0 {
                return Err(Error::InvalidSubset("indices are 1-based".into()));
            }
            modes.push(idx - 1);
        }
        Ok(Self::new(modes))
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|m| m + 1).collect()
    }

    pub fn modes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, mode: usize) -> bool {
        self.0.binary_search(&mode).is_ok()
    }

    /// Elements of `universe` not in `self`.
    pub fn complement_in(&self, universe: &[usize]) -> Self {
        Self::new(
            universe
                .iter()
                .copied()
                .filter(|&m| !self.contains(m))
                .collect(),
        )
    }

    /// Error unless every mode is below `limit`.
    pub fn check_within(&self, limit: usize) -> Result<()> {
        match self.0.last() {
            Some(&m) if m >= limit => Err(Error::InvalidSubset(format!(
                "player {} exceeds the {} available player modes",
                m + 1,
                limit
            ))),
            _ => Ok(()),
        }
    }
}

impl From<PlayerSet> for Vec<usize> {
    fn from(p: PlayerSet) -> Self {
        p.one_based()
    }
}

impl TryFrom<Vec<usize>> for PlayerSet {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        if v.contains(&0) {
            return Err(Error::InvalidSubset("indices are 1-based".into()));
        }
        Ok(Self::new(v.into_iter().map(|m| m - 1).collect()))
    }
}

impl fmt::Display for PlayerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.one_based().iter().map(|m| m.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// All `size`-subsets of `universe`, lexicographic.
pub fn subsets_of_size(universe: &[usize], size: usize) -> Vec<PlayerSet> {
    fn rec(u: &[usize], size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<PlayerSet>) {
        if cur.len() == size {
            out.push(PlayerSet::new(cur.clone()));
            return;
        }
        for i in start..u.len() {
            if u.len() - i < size - cur.len() {
                break;
            }
            cur.push(u[i]);
            rec(u, size, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if size <= universe.len() {
        rec(universe, size, 0, &mut Vec::with_capacity(size), &mut out);
    }
    out
}
