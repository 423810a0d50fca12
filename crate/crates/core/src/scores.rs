//! Probe x gallery score matrices and the identifier metadata that labels
//! them.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IdentifierKind {
    Biometric,
    Biographical,
}

impl fmt::Display for IdentifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IdentifierKind::Biometric => "biometric",
            IdentifierKind::Biographical => "biographical",
        })
    }
}

impl FromStr for IdentifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "biometric" => Ok(IdentifierKind::Biometric),
            "biographical" => Ok(IdentifierKind::Biographical),
            other => Err(Error::Config(format!("unknown identifier kind '{other}'"))),
        }
    }
}

/// A biometric trait or biographical field that produces one score matrix.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdentifierId {
    pub name: String,
    pub kind: IdentifierKind,
}

impl IdentifierId {
    pub fn biometric(name: &str) -> Self {
        IdentifierId {
            name: name.to_string(),
            kind: IdentifierKind::Biometric,
        }
    }

    pub fn biographical(name: &str) -> Self {
        IdentifierId {
            name: name.to_string(),
            kind: IdentifierKind::Biographical,
        }
    }
}

impl fmt::Display for IdentifierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Ordinal sample quality, 1 (excellent) to 5 (poor).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QualityLevel(u8);

impl QualityLevel {
    pub const BEST: QualityLevel = QualityLevel(1);
    pub const WORST: QualityLevel = QualityLevel(5);

    pub fn new(level: u8) -> Result<Self> {
        if (1..=5).contains(&level) {
            Ok(QualityLevel(level))
        } else {
            Err(Error::Domain(format!("quality level must be 1..=5, got {level}")))
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = QualityLevel> {
        (1..=5).map(QualityLevel)
    }
}

/// Raw similarity scores of every probe against every gallery entry for one
/// identifier. Individual cells may be missing.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix<T> {
    pub identifier: IdentifierId,
    n_probes: usize,
    n_gallery: usize,
    cells: Vec<Option<T>>,
}

impl<T: Real> ScoreMatrix<T> {
    pub fn empty(identifier: IdentifierId, n_probes: usize, n_gallery: usize) -> Self {
        ScoreMatrix {
            identifier,
            n_probes,
            n_gallery,
            cells: vec![None; n_probes * n_gallery],
        }
    }

    /// Dense matrix from row-major values.
    pub fn from_dense(identifier: IdentifierId, n_probes: usize, n_gallery: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n_probes * n_gallery {
            return Err(Error::LengthMismatch {
                expected: n_probes * n_gallery,
                got: values.len(),
            });
        }
        Ok(ScoreMatrix {
            identifier,
            n_probes,
            n_gallery,
            cells: values.into_iter().map(Some).collect(),
        })
    }

    pub fn from_rows(identifier: IdentifierId, rows: Vec<Vec<T>>) -> Result<Self> {
        let n_probes = rows.len();
        let n_gallery = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != n_gallery) {
            return Err(Error::LengthMismatch {
                expected: n_gallery,
                got: r.len(),
            });
        }
        Self::from_dense(identifier, n_probes, n_gallery, rows.into_iter().flatten().collect())
    }

    pub fn n_probes(&self) -> usize {
        self.n_probes
    }

    pub fn n_gallery(&self) -> usize {
        self.n_gallery
    }

    pub fn get(&self, probe: usize, gallery: usize) -> Option<T> {
        self.cells[probe * self.n_gallery + gallery]
    }

    pub fn set(&mut self, probe: usize, gallery: usize, value: Option<T>) {
        self.cells[probe * self.n_gallery + gallery] = value;
    }

    pub fn row(&self, probe: usize) -> &[Option<T>] {
        &self.cells[probe * self.n_gallery..(probe + 1) * self.n_gallery]
    }

    /// True when the probe has at least one score for this identifier.
    pub fn has_probe(&self, probe: usize) -> bool {
        self.row(probe).iter().any(Option::is_some)
    }

    pub fn present(&self) -> impl Iterator<Item = T> + '_ {
        self.cells.iter().filter_map(|c| *c)
    }
}

/// Every identifier's score matrix for one set of probes and one gallery,
/// plus ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet<T> {
    pub probe_ids: Vec<String>,
    pub gallery_ids: Vec<String>,
    /// Gallery index of each probe's true mate.
    pub mates: Vec<usize>,
    /// Matrices in declared identifier order.
    pub matrices: Vec<ScoreMatrix<T>>,
    /// Probe quality of the first biometric identifier, when known.
    pub quality: Option<Vec<QualityLevel>>,
}

impl<T: Real> ScoreSet<T> {
    pub fn new(
        probe_ids: Vec<String>,
        gallery_ids: Vec<String>,
        mates: Vec<usize>,
        matrices: Vec<ScoreMatrix<T>>,
    ) -> Result<Self> {
        if mates.len() != probe_ids.len() {
            return Err(Error::LengthMismatch {
                expected: probe_ids.len(),
                got: mates.len(),
            });
        }
        if let Some(&g) = mates.iter().find(|&&g| g >= gallery_ids.len()) {
            return Err(Error::Domain(format!("mate index {g} outside gallery")));
        }
        for m in &matrices {
            if m.n_probes() != probe_ids.len() || m.n_gallery() != gallery_ids.len() {
                return Err(Error::Config(format!(
                    "matrix '{}' is {}x{}, expected {}x{}",
                    m.identifier,
                    m.n_probes(),
                    m.n_gallery(),
                    probe_ids.len(),
                    gallery_ids.len()
                )));
            }
        }
        let mut names: Vec<&str> = matrices.iter().map(|m| m.identifier.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate identifier".into()));
        }
        Ok(ScoreSet {
            probe_ids,
            gallery_ids,
            mates,
            matrices,
            quality: None,
        })
    }

    pub fn with_quality(mut self, quality: Vec<QualityLevel>) -> Result<Self> {
        if quality.len() != self.probe_ids.len() {
            return Err(Error::LengthMismatch {
                expected: self.probe_ids.len(),
                got: quality.len(),
            });
        }
        self.quality = Some(quality);
        Ok(self)
    }

    pub fn n_probes(&self) -> usize {
        self.probe_ids.len()
    }

    pub fn n_gallery(&self) -> usize {
        self.gallery_ids.len()
    }

    pub fn identifiers(&self) -> Vec<IdentifierId> {
        self.matrices.iter().map(|m| m.identifier.clone()).collect()
    }

    pub fn matrix(&self, name: &str) -> Option<&ScoreMatrix<T>> {
        self.matrices.iter().find(|m| m.identifier.name == name)
    }

    /// Keeps only the named identifiers, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<ScoreSet<T>> {
        let matrices = names
            .iter()
            .map(|n| {
                self.matrix(n)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("unknown identifier '{n}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoreSet {
            matrices,
            ..self.clone()
        })
    }
}
