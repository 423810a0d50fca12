//! Run configuration: a `key = value` file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use seqfuse::datagen::{BioField, BioMeasure, DatasetConfig, ErrorModel, ModalityModel, NameCategory, NameFrequencyTable, NameTables};
use seqfuse::io::KeyValueConfig;
use seqfuse::pipeline::PipelineConfig;
use seqfuse::{DistanceKind, QualityLevel};

use crate::Usage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Adaptive,
    Outlier,
    Quality,
    Full,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Adaptive => "adaptive",
            Baseline::Outlier => "outlier",
            Baseline::Quality => "quality",
            Baseline::Full => "full",
        }
    }
}

#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// key = value configuration file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for probe-parallel work.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Comma-separated identifier names.
    #[arg(long)]
    pub stage_order: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model directory written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

/// Resolved settings. `kv` holds the effective configuration, which is
/// echoed into every output directory.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub kv: KeyValueConfig,
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self, Usage> {
        let mut kv = match &args.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Usage(format!("cannot read config {}: {e}", p.display())))?;
                KeyValueConfig::parse(&text).map_err(|e| Usage(format!("{}: {e}", p.display())))?
            }
            None => KeyValueConfig::default(),
        };
        let mut put = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.set(key, v);
            }
        };
        put("seed", args.seed.map(|v| v.to_string()));
        put("workers", args.workers.map(|v| v.to_string()));
        put("baseline", args.baseline.map(|b| b.name().to_string()));
        put("stage_order", args.stage_order.clone());
        put("eta", args.eta.map(|v| v.to_string()));
        put("alpha", args.alpha.map(|v| v.to_string()));
        put("k", args.k.map(|v| v.to_string()));
        put("m", args.m.map(|v| v.to_string()));
        put("out", args.out.as_ref().map(|p| p.display().to_string()));
        put("data", args.data.as_ref().map(|p| p.display().to_string()));
        put("model", args.model.as_ref().map(|p| p.display().to_string()));
        if kv.get("seed").is_none() {
            return Err(Usage("a seed is required (--seed or 'seed' in the config)".into()));
        }
        let cfg = RunConfig { kv };
        // shared settings are checked even by commands that ignore them
        cfg.seed()?;
        cfg.workers()?;
        cfg.baseline()?;
        cfg.eta()?;
        cfg.alpha()?;
        Ok(cfg)
    }

    fn parsed<V: std::str::FromStr>(&self, key: &str) -> Result<Option<V>, Usage> {
        self.kv.get_parsed(key).map_err(|e| Usage(e.to_string()))
    }

    fn or<V: std::str::FromStr>(&self, key: &str, default: V) -> Result<V, Usage> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn seed(&self) -> Result<u64, Usage> {
        self.parsed("seed")?.ok_or_else(|| Usage("missing seed".into()))
    }

    pub fn workers(&self) -> Result<Option<usize>, Usage> {
        match self.parsed::<usize>("workers")? {
            Some(0) => Err(Usage("workers must be at least 1".into())),
            w => Ok(w),
        }
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, Usage> {
        self.kv
            .get(key)
            .map(PathBuf::from)
            .ok_or_else(|| Usage(format!("missing --{key}")))
    }

    /// Input directory that must already exist.
    pub fn input_dir(&self, key: &str) -> Result<PathBuf, Usage> {
        let p = self.path(key)?;
        if !p.is_dir() {
            return Err(Usage(format!("--{key} {} is not a directory", p.display())));
        }
        Ok(p)
    }

    pub fn baseline(&self) -> Result<Baseline, Usage> {
        match self.kv.get("baseline") {
            None => Ok(Baseline::Adaptive),
            Some(v) => Baseline::from_str(v, true).map_err(|_| Usage(format!("unknown baseline '{v}'"))),
        }
    }

    pub fn eta(&self) -> Result<f64, Usage> {
        let eta = self.or("eta", 1e-6)?;
        if !(0.0..=1.0).contains(&eta) {
            return Err(Usage(format!("eta must lie in [0, 1], got {eta}")));
        }
        Ok(eta)
    }

    pub fn alpha(&self) -> Result<f64, Usage> {
        let alpha = self.or("alpha", 0.05)?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Usage(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(alpha)
    }

    /// Scores used by the outlier statistic; all gallery scores when unset.
    pub fn outlier_n(&self) -> Result<Option<usize>, Usage> {
        match self.parsed::<usize>("outlier_n")? {
            Some(n) if n < 2 => Err(Usage("outlier_n must be at least 2".into())),
            n => Ok(n),
        }
    }

    pub fn quality_threshold(&self) -> Result<QualityLevel, Usage> {
        let q: u8 = self.or("quality_threshold", 3)?;
        QualityLevel::new(q).map_err(|e| Usage(e.to_string()))
    }

    pub fn folds(&self) -> Result<usize, Usage> {
        let f = self.or("folds", 3)?;
        if f == 0 {
            return Err(Usage("folds must be at least 1".into()));
        }
        Ok(f)
    }

    pub fn peet_decades(&self) -> Result<u32, Usage> {
        self.or("peet_decades", 12)
    }

    /// DET rows kept per table; 0 keeps every threshold.
    pub fn det_points(&self) -> Result<usize, Usage> {
        self.or("det_points", 1000)
    }

    /// Identifier subset to use, in declared order.
    pub fn identifiers(&self) -> Option<Vec<String>> {
        self.kv.get_list("identifiers")
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, Usage> {
        let mut pc = PipelineConfig::default();
        pc.ensemble.k = self.or("k", pc.ensemble.k)?;
        pc.ensemble.m = self.or("m", pc.ensemble.m)?;
        pc.ensemble.eta = self.eta()?;
        if pc.ensemble.k == 0 || pc.ensemble.m == 0 {
            return Err(Usage("k and m must be at least 1".into()));
        }
        let t = &mut pc.ensemble.train;
        t.step = self.or("train.step", t.step)?;
        t.growth = self.or("train.growth", t.growth)?;
        t.tolerance = self.or("train.tolerance", t.tolerance)?;
        t.max_iterations = self.or("train.max_iterations", t.max_iterations)?;
        t.l2 = self.or("train.l2", t.l2)?;
        pc.stage_order = self.kv.get_list("stage_order");
        Ok(pc)
    }

    pub fn dataset(&self) -> Result<DatasetConfig, Usage> {
        let mut dc = DatasetConfig::default();
        dc.subjects = self.or("subjects", dc.subjects)?;
        if dc.subjects == 0 {
            return Err(Usage("subjects must be at least 1".into()));
        }
        if let Some(names) = self.kv.get_list("modalities") {
            let defaults = dc.modalities.clone();
            dc.modalities = names
                .iter()
                .map(|n| {
                    let base = defaults.iter().find(|m| &m.id.name == n).unwrap_or(&defaults[0]);
                    self.modality(n, base)
                })
                .collect::<Result<_, _>>()?;
        } else {
            dc.modalities = dc
                .modalities
                .iter()
                .map(|m| self.modality(&m.id.name, m))
                .collect::<Result<_, _>>()?;
        }
        if let Some(fields) = self.kv.get_list("bio_fields") {
            dc.bio_fields = fields
                .iter()
                .map(|f| BioField::from_name(f).ok_or_else(|| Usage(format!("unknown biographical field '{f}'"))))
                .collect::<Result<_, _>>()?;
        }
        dc.bio_measure = match self.kv.get("bio_measure").unwrap_or("average_impact") {
            "average_impact" => BioMeasure::AverageImpact,
            "levenshtein" => BioMeasure::Single(DistanceKind::Levenshtein),
            "damerau" => BioMeasure::Single(DistanceKind::DamerauLevenshtein),
            "editor" => BioMeasure::Single(DistanceKind::Editor),
            other => return Err(Usage(format!("unknown bio_measure '{other}'"))),
        };
        let d = ErrorModel::default();
        dc.subject.error_model = ErrorModel {
            substitution: self.or("error.substitution", d.substitution)?,
            deletion: self.or("error.deletion", d.deletion)?,
            insertion: self.or("error.insertion", d.insertion)?,
            transposition: self.or("error.transposition", d.transposition)?,
        };
        if let Some(masses) = self.kv.get_list("quality_masses") {
            let v: Vec<f64> = masses
                .iter()
                .map(|m| m.parse().map_err(|_| Usage(format!("bad quality mass '{m}'"))))
                .collect::<Result<_, _>>()?;
            dc.subject.quality_masses = v
                .try_into()
                .map_err(|_| Usage("quality_masses needs exactly five values".into()))?;
        }
        dc.tables = NameTables {
            first_male: self.table("tables.first_male", NameCategory::FirstMale)?,
            first_female: self.table("tables.first_female", NameCategory::FirstFemale)?,
            last: self.table("tables.last", NameCategory::Last)?,
        };
        Ok(dc)
    }

    fn modality(&self, name: &str, base: &ModalityModel) -> Result<ModalityModel, Usage> {
        let key = |f: &str| format!("{name}.{f}");
        let top = self.or(&key("genuine_top"), base.genuine[0].0)?;
        let step = self.or(&key("genuine_step"), base.genuine[0].0 - base.genuine[1].0)?;
        let sd = self.or(&key("genuine_sd"), base.genuine[0].1)?;
        let rate = self.or(&key("impostor_rate"), base.impostor_rate)?;
        let hard = self.or(&key("hard_case_fraction"), base.hard_case_fraction)?;
        let mm = ModalityModel::graded(name, rate, top, step, sd, hard);
        mm.validate().map_err(|e| Usage(e.to_string()))?;
        Ok(mm)
    }

    fn table(&self, key: &str, category: NameCategory) -> Result<NameFrequencyTable, Usage> {
        match self.kv.get(key) {
            None => Ok(NameFrequencyTable::builtin(category)),
            Some(p) => {
                let text = std::fs::read_to_string(Path::new(p))
                    .map_err(|e| Usage(format!("cannot read name table {p}: {e}")))?;
                NameFrequencyTable::parse(category, &text).map_err(|e| Usage(format!("{p}: {e}")))
            }
        }
    }
}
