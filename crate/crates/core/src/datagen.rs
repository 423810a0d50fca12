//! Reproducible virtual multi-modal datasets.
//!
//! Subjects get a gender and names drawn from frequency tables; the probe
//! copy of each biographical field passes through a per-character typo
//! model. Biometric matchers are replaced by parametric score models:
//! exponential impostor scores and normal genuine scores whose mean drops
//! with sample quality, plus a fraction of "hard" subjects whose genuine
//! score is drawn from the impostor distribution.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::scores::{IdentifierId, QualityLevel, ScoreMatrix, ScoreSet};
use crate::textsim::{biographical_similarity, canonicalize, similarity, CanonicalString, DistanceKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NameCategory {
    FirstMale,
    FirstFemale,
    Last,
}

/// Names with relative frequencies; sampling is proportional to frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct NameFrequencyTable {
    pub category: NameCategory,
    entries: Vec<(CanonicalString, f64)>,
    cumulative: Vec<f64>,
}

impl NameFrequencyTable {
    pub fn new(category: NameCategory, entries: Vec<(CanonicalString, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("name frequency table"));
        }
        if let Some((name, f)) = entries.iter().find(|(_, f)| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::Domain(format!("frequency of '{name}' must be positive, got {f}")));
        }
        let mut total = 0.0;
        let cumulative = entries
            .iter()
            .map(|(_, f)| {
                total += f;
                total
            })
            .collect();
        Ok(NameFrequencyTable {
            category,
            entries,
            cumulative,
        })
    }

    /// Parses `name,frequency` lines. Blank lines and `#` comments are
    /// skipped.
    pub fn parse(category: NameCategory, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, freq) = line
                .rsplit_once(',')
                .ok_or_else(|| Error::parse(i + 1, "expected name,frequency"))?;
            let freq: f64 = freq
                .trim()
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad frequency '{freq}'")))?;
            entries.push((canonicalize(name), freq));
        }
        Self::new(category, entries)
    }

    pub fn builtin(category: NameCategory) -> Self {
        let text = match category {
            NameCategory::FirstMale => include_str!("../data/first_male.csv"),
            NameCategory::FirstFemale => include_str!("../data/first_female.csv"),
            NameCategory::Last => include_str!("../data/last.csv"),
        };
        Self::parse(category, text).expect("built-in name table is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(CanonicalString, f64)] {
        &self.entries
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &CanonicalString {
        let total = *self.cumulative.last().expect("nonempty table");
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        &self.entries[i.min(self.entries.len() - 1)].0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NameTables {
    pub first_male: NameFrequencyTable,
    pub first_female: NameFrequencyTable,
    pub last: NameFrequencyTable,
}

impl NameTables {
    pub fn builtin() -> Self {
        NameTables {
            first_male: NameFrequencyTable::builtin(NameCategory::FirstMale),
            first_female: NameFrequencyTable::builtin(NameCategory::FirstFemale),
            last: NameFrequencyTable::builtin(NameCategory::Last),
        }
    }
}

/// Per-character data-entry error probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorModel {
    pub substitution: f64,
    pub deletion: f64,
    pub insertion: f64,
    pub transposition: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel {
            substitution: 0.02,
            deletion: 0.01,
            insertion: 0.01,
            transposition: 0.01,
        }
    }
}

impl ErrorModel {
    pub fn none() -> Self {
        ErrorModel {
            substitution: 0.0,
            deletion: 0.0,
            insertion: 0.0,
            transposition: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("substitution", self.substitution),
            ("deletion", self.deletion),
            ("insertion", self.insertion),
            ("transposition", self.transposition),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("{name} rate must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

fn random_letter<R: Rng + ?Sized>(rng: &mut R, not: Option<char>) -> char {
    loop {
        let c = LETTERS[rng.random_range(0..LETTERS.len())] as char;
        if Some(c) != not {
            return c;
        }
    }
}

/// One left-to-right pass over `s`. At each position, in order: swap with
/// the next character, else delete, else substitute, else keep; then
/// possibly insert a random letter after it.
pub fn corrupt<R: Rng + ?Sized>(s: &CanonicalString, em: &ErrorModel, rng: &mut R) -> CanonicalString {
    let chars = s.chars();
    let mut out = Vec::with_capacity(chars.len() + 2);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let mut consumed = 1;
        if i + 1 < chars.len() && rng.random::<f64>() < em.transposition {
            out.push(chars[i + 1]);
            out.push(c);
            consumed = 2;
        } else if rng.random::<f64>() < em.deletion {
            // dropped
        } else if rng.random::<f64>() < em.substitution {
            out.push(random_letter(rng, Some(c)));
        } else {
            out.push(c);
        }
        if rng.random::<f64>() < em.insertion {
            out.push(random_letter(rng, None));
        }
        i += consumed;
    }
    CanonicalString::from_chars_unchecked(out)
}

pub fn corrupt_seeded(s: &CanonicalString, em: &ErrorModel, seed: u64) -> CanonicalString {
    corrupt(s, em, &mut seeded(seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gender {
    M,
    F,
}

impl Gender {
    pub fn symbol(self) -> char {
        match self {
            Gender::M => 'M',
            Gender::F => 'F',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BioField {
    FirstName,
    LastName,
    FatherName,
}

impl BioField {
    pub const ALL: [BioField; 3] = [BioField::FirstName, BioField::LastName, BioField::FatherName];

    pub fn name(self) -> &'static str {
        match self {
            BioField::FirstName => "firstname",
            BioField::LastName => "lastname",
            BioField::FatherName => "fathersname",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BioRecord {
    pub first: CanonicalString,
    pub last: CanonicalString,
    pub father: CanonicalString,
}

impl BioRecord {
    pub fn field(&self, f: BioField) -> &CanonicalString {
        match f {
            BioField::FirstName => &self.first,
            BioField::LastName => &self.last,
            BioField::FatherName => &self.father,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub gender: Gender,
    /// Enrolled (error-free) biographical data.
    pub gallery_bio: BioRecord,
    /// Independently entered copy of the same data.
    pub probe_bio: BioRecord,
    /// Probe sample quality per biometric modality.
    pub quality: Vec<(String, QualityLevel)>,
}

impl SubjectRecord {
    pub fn quality_of(&self, modality: &str) -> Option<QualityLevel> {
        self.quality.iter().find(|(m, _)| m == modality).map(|(_, q)| *q)
    }
}

#[derive(Clone, Debug)]
pub struct SubjectConfig {
    pub error_model: ErrorModel,
    /// Probability of quality levels 1..=5.
    pub quality_masses: [f64; 5],
    pub modalities: Vec<String>,
}

impl Default for SubjectConfig {
    fn default() -> Self {
        SubjectConfig {
            error_model: ErrorModel::default(),
            quality_masses: [0.35, 0.30, 0.20, 0.10, 0.05],
            modalities: vec!["fingerprint".into(), "face".into()],
        }
    }
}

fn sample_quality<R: Rng + ?Sized>(masses: &[f64; 5], rng: &mut R) -> QualityLevel {
    let total: f64 = masses.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &m) in masses.iter().enumerate() {
        if u < m {
            return QualityLevel::new(i as u8 + 1).expect("level in range");
        }
        u -= m;
    }
    QualityLevel::WORST
}

pub fn sample_subjects(n: usize, tables: &NameTables, config: &SubjectConfig, seed: u64) -> Result<Vec<SubjectRecord>> {
    if n == 0 {
        return Err(Error::Config("subject count must be at least 1".into()));
    }
    config.error_model.validate()?;
    if config.quality_masses.iter().any(|&m| !(m >= 0.0)) || config.quality_masses.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Domain("quality masses must be nonnegative with a positive sum".into()));
    }
    let width = n.to_string().len().max(5);
    let mut rng = seeded(seed);
    let mut subjects = Vec::with_capacity(n);
    for i in 0..n {
        let gender = if rng.random::<bool>() { Gender::M } else { Gender::F };
        let first_table = match gender {
            Gender::M => &tables.first_male,
            Gender::F => &tables.first_female,
        };
        let gallery_bio = BioRecord {
            first: first_table.sample(&mut rng).clone(),
            last: tables.last.sample(&mut rng).clone(),
            father: tables.first_male.sample(&mut rng).clone(),
        };
        let probe_bio = BioRecord {
            first: corrupt(&gallery_bio.first, &config.error_model, &mut rng),
            last: corrupt(&gallery_bio.last, &config.error_model, &mut rng),
            father: corrupt(&gallery_bio.father, &config.error_model, &mut rng),
        };
        let quality = config
            .modalities
            .iter()
            .map(|m| (m.clone(), sample_quality(&config.quality_masses, &mut rng)))
            .collect();
        subjects.push(SubjectRecord {
            id: format!("S{i:0width$}"),
            gender,
            gallery_bio,
            probe_bio,
            quality,
        });
    }
    Ok(subjects)
}

/// Parametric score model for one biometric matcher.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityModel {
    pub id: IdentifierId,
    /// Rate of the exponential impostor distribution.
    pub impostor_rate: f64,
    /// Genuine (mean, stddev) for quality levels 1..=5.
    pub genuine: [(f64, f64); 5],
    pub hard_case_fraction: f64,
}

impl ModalityModel {
    /// Genuine mean `top` at level 1 dropping by `step` per level.
    pub fn graded(name: &str, impostor_rate: f64, top: f64, step: f64, sd: f64, hard_case_fraction: f64) -> Self {
        let mut genuine = [(0.0, sd); 5];
        for (i, g) in genuine.iter_mut().enumerate() {
            g.0 = top - step * i as f64;
        }
        ModalityModel {
            id: IdentifierId::biometric(name),
            impostor_rate,
            genuine,
            hard_case_fraction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.impostor_rate > 0.0) {
            return Err(Error::Domain(format!("impostor rate must be positive for {}", self.id)));
        }
        if !(0.0..=1.0).contains(&self.hard_case_fraction) {
            return Err(Error::Domain(format!("hard case fraction must lie in [0, 1] for {}", self.id)));
        }
        if self.genuine.windows(2).any(|w| !(w[0].0 > w[1].0)) {
            return Err(Error::Domain(format!(
                "genuine means must decrease with quality level for {}",
                self.id
            )));
        }
        if self.genuine.iter().any(|g| !(g.1 > 0.0)) {
            return Err(Error::Domain(format!("genuine stddev must be positive for {}", self.id)));
        }
        Ok(())
    }
}

/// Square score matrix where probe `i`'s mate is gallery entry `i`.
pub fn gen_scores(subjects: &[SubjectRecord], mm: &ModalityModel, seed: u64) -> Result<ScoreMatrix<f64>> {
    if subjects.is_empty() {
        return Err(Error::Empty("subjects"));
    }
    mm.validate()?;
    let impostor = Exp::new(mm.impostor_rate).map_err(|e| Error::Domain(e.to_string()))?;
    let genuine: Vec<Normal<f64>> = mm
        .genuine
        .iter()
        .map(|&(m, s)| Normal::new(m, s).map_err(|e| Error::Domain(e.to_string())))
        .collect::<Result<_>>()?;
    let n = subjects.len();
    let mut rng = seeded(seed);
    let mut values = Vec::with_capacity(n * n);
    for (i, s) in subjects.iter().enumerate() {
        let level = s.quality_of(&mm.id.name).unwrap_or(QualityLevel::BEST);
        let hard = rng.random::<f64>() < mm.hard_case_fraction;
        for j in 0..n {
            let v = if i != j || hard {
                impostor.sample(&mut rng)
            } else {
                genuine[usize::from(level.level() - 1)].sample(&mut rng).max(0.0)
            };
            values.push(v);
        }
    }
    ScoreMatrix::from_dense(mm.id.clone(), n, n, values)
}

/// How two biographical strings are compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BioMeasure {
    AverageImpact,
    Single(DistanceKind),
}

pub fn bio_scores(subjects: &[SubjectRecord], field: BioField, measure: BioMeasure) -> Result<ScoreMatrix<f64>> {
    if subjects.is_empty() {
        return Err(Error::Empty("subjects"));
    }
    let n = subjects.len();
    let mut values = Vec::with_capacity(n * n);
    for p in subjects {
        let a = p.probe_bio.field(field);
        for g in subjects {
            let b = g.gallery_bio.field(field);
            values.push(match measure {
                BioMeasure::AverageImpact => biographical_similarity(a, b).value(),
                BioMeasure::Single(kind) => similarity(a, b, kind).value(),
            });
        }
    }
    ScoreMatrix::from_dense(IdentifierId::biographical(field.name()), n, n, values)
}

/// Partitions `0..n` into `folds` disjoint sets whose sizes differ by at
/// most one (larger folds first). Each fold is sorted.
pub fn make_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::Config(format!("{n} items cannot fill {folds} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let mut fold = idx[start..start + size].to_vec();
        fold.sort_unstable();
        out.push(fold);
        start += size;
    }
    Ok(out)
}

/// Everything needed to synthesize one dataset.
#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub subjects: usize,
    pub tables: NameTables,
    pub subject: SubjectConfig,
    pub modalities: Vec<ModalityModel>,
    pub bio_fields: Vec<BioField>,
    pub bio_measure: BioMeasure,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            subjects: 1000,
            tables: NameTables::builtin(),
            subject: SubjectConfig::default(),
            modalities: vec![
                ModalityModel::graded("fingerprint", 1.0, 12.0, 1.0, 1.5, 0.03),
                ModalityModel::graded("face", 1.0, 10.5, 1.0, 1.5, 0.05),
            ],
            bio_fields: BioField::ALL.to_vec(),
            bio_measure: BioMeasure::AverageImpact,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub subjects: Vec<SubjectRecord>,
    pub scores: ScoreSet<f64>,
}

/// Subjects plus every identifier's score matrix. Randomness comes from
/// named sub-streams of `seed`.
pub fn generate_dataset(config: &DatasetConfig, seed: u64) -> Result<Dataset> {
    let mut subject_cfg = config.subject.clone();
    subject_cfg.modalities = config.modalities.iter().map(|m| m.id.name.clone()).collect();
    let subjects = sample_subjects(
        config.subjects,
        &config.tables,
        &subject_cfg,
        derive_seed(seed, "generation:subjects"),
    )?;
    let mut matrices = Vec::new();
    for mm in &config.modalities {
        matrices.push(gen_scores(
            &subjects,
            mm,
            derive_seed(seed, &format!("generation:scores:{}", mm.id.name)),
        )?);
    }
    for &f in &config.bio_fields {
        matrices.push(bio_scores(&subjects, f, config.bio_measure)?);
    }
    let ids: Vec<String> = subjects.iter().map(|s| s.id.clone()).collect();
    let mut set = ScoreSet::new(ids.clone(), ids, (0..subjects.len()).collect(), matrices)?;
    if let Some(first) = config.modalities.first() {
        let q = subjects
            .iter()
            .map(|s| s.quality_of(&first.id.name).unwrap_or(QualityLevel::BEST))
            .collect();
        set = set.with_quality(q)?;
    }
    Ok(Dataset { subjects, scores: set })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_name(cat: NameCategory, name: &str) -> NameFrequencyTable {
        NameFrequencyTable::new(cat, vec![(canonicalize(name), 1.0)]).unwrap()
    }

    #[test]
    fn single_entry_tables_force_names() {
        let tables = NameTables {
            first_male: one_name(NameCategory::FirstMale, "Adam"),
            first_female: one_name(NameCategory::FirstFemale, "Eve"),
            last: one_name(NameCategory::Last, "Stone"),
        };
        let cfg = SubjectConfig {
            error_model: ErrorModel::none(),
            ..SubjectConfig::default()
        };
        let s = &sample_subjects(1, &tables, &cfg, 5).unwrap()[0];
        let expected_first = if s.gender == Gender::M { "adam" } else { "eve" };
        assert_eq!(s.gallery_bio.first.as_str(), expected_first);
        assert_eq!(s.gallery_bio.last.as_str(), "stone");
        assert_eq!(s.gallery_bio.father.as_str(), "adam");
        assert_eq!(s.probe_bio, s.gallery_bio);
    }

    #[test]
    fn subject_roster_is_seeded() {
        let t = NameTables::builtin();
        let c = SubjectConfig::default();
        assert_eq!(sample_subjects(20, &t, &c, 9).unwrap(), sample_subjects(20, &t, &c, 9).unwrap());
        assert!(sample_subjects(0, &t, &c, 9).is_err());
    }

    #[test]
    fn table_parsing() {
        let t = NameFrequencyTable::parse(NameCategory::Last, "# header\nSmith, 10\n\nLee,2.5\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.entries()[0].0.as_str(), "smith");
        assert!(NameFrequencyTable::parse(NameCategory::Last, "").is_err());
        assert!(NameFrequencyTable::parse(NameCategory::Last, "smith").is_err());
        assert!(NameFrequencyTable::parse(NameCategory::Last, "smith,0").is_err());
    }

    #[test]
    fn corrupt_examples() {
        let s = canonicalize("catherine");
        assert_eq!(corrupt_seeded(&s, &ErrorModel::none(), 1), s);
        let swap = ErrorModel {
            transposition: 1.0,
            ..ErrorModel::none()
        };
        assert_eq!(corrupt_seeded(&canonicalize("ab"), &swap, 1).as_str(), "ba");
        assert_eq!(corrupt_seeded(&canonicalize(""), &ErrorModel::default(), 1).as_str(), "");
    }

    #[test]
    fn folds_partition() {
        let f = make_folds(9, 3, 1).unwrap();
        assert!(f.iter().all(|x| x.len() == 3));
        let f = make_folds(10, 3, 1).unwrap();
        assert_eq!(f.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 3, 3]);
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(make_folds(2, 3, 1).is_err());
        assert!(make_folds(5, 1, 1).is_err());
    }

    #[test]
    fn modality_validation() {
        let mut m = ModalityModel::graded("fp", 1.0, 10.0, 1.0, 1.0, 0.0);
        assert!(m.validate().is_ok());
        m.genuine[2].0 = 20.0;
        assert!(m.validate().is_err());
        let m = ModalityModel::graded("fp", 0.0, 10.0, 1.0, 1.0, 0.0);
        assert!(m.validate().is_err());
    }
}
