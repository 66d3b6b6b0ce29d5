//! JSON group files with 1-based indices:
//! `{"n": 6, "perms": [[1,2,...], ...]}` or `{"n": 6, "blocks": [[1,2], ...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::{verify_group, BlockGroup, ExplicitGroup, Perm};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupJson {
    Explicit { n: usize, perms: Vec<Vec<usize>> },
    Blocks { n: usize, blocks: Vec<Vec<usize>> },
}

#[derive(Clone, Debug)]
pub enum LoadedGroup {
    Explicit(ExplicitGroup),
    Blocks(BlockGroup),
}

impl LoadedGroup {
    pub fn n(&self) -> usize {
        match self {
            LoadedGroup::Explicit(g) => g.n(),
            LoadedGroup::Blocks(g) => g.n(),
        }
    }
}

fn to_zero_based(v: &[usize], n: usize, what: &str) -> Result<Vec<usize>> {
    v.iter()
        .map(|&i| {
            if i == 0 || i > n {
                Err(Error::InvalidPermutation(format!("{what} entry {i} is outside 1..={n}")))
            } else {
                Ok(i - 1)
            }
        })
        .collect()
}

impl GroupJson {
    /// Validates and converts; explicit groups must be closed, blocks must cover `1..=n`.
    pub fn into_group(self) -> Result<LoadedGroup> {
        match self {
            GroupJson::Explicit { n, perms } => {
                let perms = perms
                    .iter()
                    .map(|p| {
                        if p.len() != n {
                            return Err(Error::DimensionMismatch(format!("permutation of length {} with n = {n}", p.len())));
                        }
                        Perm::from_images(to_zero_based(p, n, "permutation")?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LoadedGroup::Explicit(verify_group(n, perms)?))
            }
            GroupJson::Blocks { n, blocks } => {
                let blocks = blocks
                    .iter()
                    .map(|b| to_zero_based(b, n, "block").map_err(|e| Error::BadBlocks(e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                Ok(LoadedGroup::Blocks(BlockGroup::new(n, blocks)?))
            }
        }
    }

    pub fn from_explicit(g: &ExplicitGroup) -> Self {
        GroupJson::Explicit {
            n: g.n(),
            perms: g.elements().iter().map(|p| p.images().iter().map(|&i| i + 1).collect()).collect(),
        }
    }

    pub fn from_blocks(g: &BlockGroup) -> Self {
        GroupJson::Blocks { n: g.n(), blocks: g.blocks().iter().map(|b| b.iter().map(|&i| i + 1).collect()).collect() }
    }
}

pub fn parse_group(text: &str) -> Result<LoadedGroup> {
    let raw: GroupJson =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("group file: expected n with perms or blocks ({e})")))?;
    raw.into_group()
}

pub fn load_group(path: &Path) -> Result<LoadedGroup> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_group(&text)
}
