use serde::{Deserialize, Serialize};

use crate::corpus::Granularity;
use crate::encode::Strategy;
use crate::index::IndexParams;

/// Token budgets, including special tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub query: usize,
    pub hunk: usize,
    pub file: usize,
    pub changeset: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            query: 256,
            hunk: 256,
            file: 512,
            changeset: 512,
        }
    }
}

impl Limits {
    pub fn document(&self, g: Granularity) -> usize {
        match g {
            Granularity::Hunk => self.hunk,
            Granularity::ChangesetFile => self.file,
            Granularity::Changeset => self.changeset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub granularity: Granularity,
    pub strategy: Strategy,
    pub limits: Limits,
    pub partitions: usize,
    pub candidates: usize,
    pub nprobe: usize,
    pub subspaces: usize,
    pub codebook_size: usize,
    pub seed: u64,
    pub d_in: usize,
    pub d_out: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            granularity: Granularity::Hunk,
            strategy: Strategy::ArcL,
            limits: Limits::default(),
            partitions: 320,
            candidates: 1000,
            nprobe: 16,
            subspaces: 16,
            codebook_size: 256,
            seed: 42,
            d_in: 768,
            d_out: 128,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("limits.query", self.limits.query),
            ("limits.hunk", self.limits.hunk),
            ("limits.file", self.limits.file),
            ("limits.changeset", self.limits.changeset),
            ("partitions", self.partitions),
            ("candidates", self.candidates),
            ("nprobe", self.nprobe),
            ("subspaces", self.subspaces),
            ("codebook_size", self.codebook_size),
            ("d_in", self.d_in),
            ("d_out", self.d_out),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.d_out > self.d_in {
            return Err(format!("d_out {} exceeds d_in {}", self.d_out, self.d_in));
        }
        if self.d_out % self.subspaces != 0 {
            return Err(format!(
                "subspaces {} must divide d_out {}",
                self.subspaces, self.d_out
            ));
        }
        if self.codebook_size > 256 {
            return Err("codebook_size must be at most 256".into());
        }
        if self.nprobe > self.partitions {
            return Err(format!(
                "nprobe {} exceeds partitions {}",
                self.nprobe, self.partitions
            ));
        }
        Ok(())
    }

    pub fn index_params(&self) -> IndexParams {
        IndexParams {
            partitions: self.partitions,
            subspaces: self.subspaces,
            codebook_size: self.codebook_size,
            seed: self.seed,
        }
    }

    pub fn document_limit(&self) -> usize {
        self.limits.document(self.granularity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = Config::default();
        c.validate().unwrap();
        assert_eq!(c.document_limit(), 256);
        assert_eq!(c.limits.document(Granularity::Changeset), 512);
    }

    #[test]
    fn rejects_inconsistent_values() {
        let bad = [
            Config {
                d_out: 1000,
                ..Config::default()
            },
            Config {
                subspaces: 7,
                ..Config::default()
            },
            Config {
                nprobe: 400,
                ..Config::default()
            },
            Config {
                partitions: 0,
                ..Config::default()
            },
            Config {
                codebook_size: 300,
                ..Config::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
