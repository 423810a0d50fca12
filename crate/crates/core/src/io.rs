//! Text file formats: key = value configs, model files, dataset manifests,
//! score CSVs, curve and effort tables.
//!
//! Floats in model files are written in shortest round-trip form, so a
//! write/read cycle reproduces every bit.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::datagen::{BioRecord, Gender, SubjectRecord};
use crate::error::{Error, Result};
use crate::eval::{EffortReport, EvalCurve};
use crate::normalize::{NormStats, StatsSource};
use crate::pipeline::{DedupDecision, FusionModel};
use crate::predictor::{LogisticModel, VetoEnsemble};
use crate::scalar::Real;
use crate::scores::{IdentifierId, IdentifierKind, QualityLevel, ScoreMatrix, ScoreSet};
use crate::textsim::canonicalize;

/// Ordered `key = value` pairs. Later assignments to a key replace earlier
/// ones in place.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValueConfig {
    entries: Vec<(String, String)>,
}

impl KeyValueConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = KeyValueConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected key = value, got '{line}'")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::parse(i + 1, "empty key"));
            }
            cfg.set(k, v.trim());
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_parsed<V: std::str::FromStr>(&self, key: &str) -> Result<Option<V>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("bad value for '{key}': '{v}'")))
            })
            .transpose()
    }

    /// Comma-separated list value; empty items are dropped.
    pub fn get_list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(split_list)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

pub fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_num<V: std::str::FromStr>(s: &str, line: usize) -> Result<V> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("bad number '{s}'")))
}

/// Line reader that skips blanks and `#` comments and tracks line numbers.
struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(r: R) -> Self {
        Lines {
            inner: r.lines(),
            line: 0,
        }
    }

    fn next_line(&mut self) -> Result<Option<String>> {
        for l in self.inner.by_ref() {
            self.line += 1;
            let l = l?;
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Ok(Some(t.to_string()));
            }
        }
        Ok(None)
    }

    fn expect(&mut self, what: &str) -> Result<Vec<String>> {
        let l = self
            .next_line()?
            .ok_or_else(|| Error::parse(self.line, format!("unexpected end of file, wanted '{what}'")))?;
        let parts: Vec<String> = l.split_whitespace().map(String::from).collect();
        if parts[0] != what {
            return Err(Error::parse(self.line, format!("expected '{what}', found '{}'", parts[0])));
        }
        Ok(parts)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, msg)
    }
}

const MODEL_MAGIC: &str = "seqfuse-model";

fn source_name(s: StatsSource) -> &'static str {
    match s {
        StatsSource::Given => "given",
        StatsSource::Estimated => "estimated",
    }
}

/// Writes a fusion model:
///
/// ```text
/// seqfuse-model 1
/// k 5
/// m 100
/// eta 1e-6
/// stages 3
/// stage <name> <kind> <min> <max> <mean> <sd> <median> <mad> <hmean> <hsd> <source>
/// ensemble <members> <k> <eta>
/// feature <mean> <sd>          (k lines)
/// member <w0> ... <wk>         (one line per member)
/// ```
pub fn write_model<T: Real, W: Write>(model: &FusionModel<T>, mut w: W) -> Result<()> {
    writeln!(w, "{MODEL_MAGIC} 1")?;
    writeln!(w, "k {}", model.k)?;
    writeln!(w, "m {}", model.m)?;
    writeln!(w, "eta {:e}", model.eta)?;
    writeln!(w, "stages {}", model.n_stages())?;
    for (id, s) in model.stage_order.iter().zip(&model.stats) {
        writeln!(
            w,
            "stage {} {} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {}",
            id.name,
            id.kind,
            s.min,
            s.max,
            s.mean,
            s.std_dev,
            s.median,
            s.mad,
            s.hampel_mean,
            s.hampel_std,
            source_name(s.source)
        )?;
    }
    for e in &model.ensembles {
        writeln!(w, "ensemble {} {} {:e}", e.m(), e.k(), e.eta)?;
        for s in &e.input_stats {
            writeln!(w, "feature {:e} {:e}", s.mean, s.std_dev)?;
        }
        for m in &e.members {
            write!(w, "member")?;
            for v in &m.weights {
                write!(w, " {v:e}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn model_to_string<T: Real>(model: &FusionModel<T>) -> String {
    let mut buf = Vec::new();
    write_model(model, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("model text is utf-8")
}

fn field<V: std::str::FromStr, R: BufRead>(parts: &[String], i: usize, lines: &Lines<R>) -> Result<V> {
    let s = parts
        .get(i)
        .ok_or_else(|| lines.err(format!("missing field {i} in '{}'", parts[0])))?;
    parse_num(s, lines.line)
}

pub fn read_model<T: Real, R: BufRead>(r: R) -> Result<FusionModel<T>> {
    let mut lines = Lines::new(r);
    let head = lines.expect(MODEL_MAGIC)?;
    if head.get(1).map(String::as_str) != Some("1") {
        return Err(lines.err("unsupported model version"));
    }
    let k: usize = field(&lines.expect("k")?, 1, &lines)?;
    let m: usize = field(&lines.expect("m")?, 1, &lines)?;
    let eta: T = field(&lines.expect("eta")?, 1, &lines)?;
    let n: usize = field(&lines.expect("stages")?, 1, &lines)?;
    let mut stage_order = Vec::with_capacity(n);
    let mut stats = Vec::with_capacity(n);
    for _ in 0..n {
        let p = lines.expect("stage")?;
        if p.len() != 12 {
            return Err(lines.err("stage line needs 11 fields"));
        }
        let kind: IdentifierKind = p[2].parse().map_err(|_| lines.err(format!("bad kind '{}'", p[2])))?;
        stage_order.push(IdentifierId {
            name: p[1].clone(),
            kind,
        });
        let v = |i: usize| field::<T, R>(&p, i, &lines);
        stats.push(NormStats {
            min: v(3)?,
            max: v(4)?,
            mean: v(5)?,
            std_dev: v(6)?,
            median: v(7)?,
            mad: v(8)?,
            hampel_mean: v(9)?,
            hampel_std: v(10)?,
            source: match p[11].as_str() {
                "given" => StatsSource::Given,
                "estimated" => StatsSource::Estimated,
                other => return Err(lines.err(format!("bad stats source '{other}'"))),
            },
        });
    }
    let mut ensembles = Vec::new();
    for _ in 0..n.saturating_sub(1) {
        let p = lines.expect("ensemble")?;
        let members: usize = field(&p, 1, &lines)?;
        let ek: usize = field(&p, 2, &lines)?;
        let eeta: T = field(&p, 3, &lines)?;
        let mut input_stats = Vec::with_capacity(ek);
        for _ in 0..ek {
            let f = lines.expect("feature")?;
            input_stats.push(NormStats::from_mean_std(field(&f, 1, &lines)?, field(&f, 2, &lines)?));
        }
        let mut ms = Vec::with_capacity(members);
        for _ in 0..members {
            let w = lines.expect("member")?;
            if w.len() != ek + 2 {
                return Err(lines.err(format!("member line needs {} weights", ek + 1)));
            }
            let weights = (1..w.len())
                .map(|i| field::<T, R>(&w, i, &lines))
                .collect::<Result<Vec<_>>>()?;
            ms.push(LogisticModel::new(weights)?);
        }
        ensembles.push(VetoEnsemble {
            members: ms,
            eta: eeta,
            input_stats,
        });
    }
    if let Some(extra) = lines.next_line()? {
        return Err(lines.err(format!("trailing content '{extra}'")));
    }
    Ok(FusionModel {
        stage_order,
        stats,
        ensembles,
        k,
        m,
        eta,
    })
}

pub fn model_from_str<T: Real>(s: &str) -> Result<FusionModel<T>> {
    read_model(s.as_bytes())
}

const MANIFEST_BIO: [&str; 3] = ["firstname", "lastname", "fathersname"];

/// Tab-separated manifest, one subject per line, with a header naming the
/// columns. Quality columns are `quality_<modality>`.
pub fn write_manifest<W: Write>(subjects: &[SubjectRecord], mut w: W) -> Result<()> {
    let modalities: Vec<&str> = subjects
        .first()
        .map(|s| s.quality.iter().map(|(m, _)| m.as_str()).collect())
        .unwrap_or_default();
    let mut header = vec!["id".to_string(), "gender".to_string()];
    for side in ["gallery", "probe"] {
        header.extend(MANIFEST_BIO.iter().map(|f| format!("{side}_{f}")));
    }
    header.extend(modalities.iter().map(|m| format!("quality_{m}")));
    writeln!(w, "{}", header.join("\t"))?;
    for s in subjects {
        let mut row = vec![s.id.clone(), s.gender.symbol().to_string()];
        for b in [&s.gallery_bio, &s.probe_bio] {
            row.extend([&b.first, &b.last, &b.father].iter().map(|c| c.as_str().to_string()));
        }
        for m in &modalities {
            let q = s
                .quality_of(m)
                .ok_or_else(|| Error::Config(format!("subject {} lacks quality for '{m}'", s.id)))?;
            row.push(q.level().to_string());
        }
        writeln!(w, "{}", row.join("\t"))?;
    }
    Ok(())
}

pub fn read_manifest<R: BufRead>(r: R) -> Result<Vec<SubjectRecord>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty manifest"))??;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 8 || cols[0] != "id" || cols[1] != "gender" {
        return Err(Error::parse(1, "manifest header must start with id, gender and six name columns"));
    }
    let modalities: Vec<String> = cols[8..]
        .iter()
        .map(|c| {
            c.strip_prefix("quality_")
                .map(String::from)
                .ok_or_else(|| Error::parse(1, format!("unexpected column '{c}'")))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (i, l) in lines.enumerate() {
        let line_no = i + 2;
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != cols.len() {
            return Err(Error::parse(line_no, format!("expected {} columns, got {}", cols.len(), f.len())));
        }
        let gender = match f[1] {
            "M" => Gender::M,
            "F" => Gender::F,
            g => return Err(Error::parse(line_no, format!("bad gender '{g}'"))),
        };
        let bio = |o: usize| BioRecord {
            first: canonicalize(f[o]),
            last: canonicalize(f[o + 1]),
            father: canonicalize(f[o + 2]),
        };
        let quality = modalities
            .iter()
            .zip(&f[8..])
            .map(|(m, q)| {
                let level: u8 = parse_num(q, line_no)?;
                Ok((m.clone(), QualityLevel::new(level)?))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(SubjectRecord {
            id: f[0].to_string(),
            gender,
            gallery_bio: bio(2),
            probe_bio: bio(5),
            quality,
        });
    }
    Ok(out)
}

const SCORE_HEADER: &str = "probe_id,gallery_id,identifier,score";

/// One identifier's scores as `probe_id,gallery_id,identifier,score` rows,
/// preceded by a `# kind=` comment and the header. Missing cells are not
/// written.
pub fn write_scores<T: Real, W: Write>(
    matrix: &ScoreMatrix<T>,
    probe_ids: &[String],
    gallery_ids: &[String],
    mut w: W,
) -> Result<()> {
    writeln!(w, "# kind={}", matrix.identifier.kind)?;
    writeln!(w, "{SCORE_HEADER}")?;
    for (p, pid) in probe_ids.iter().enumerate() {
        for (g, gid) in gallery_ids.iter().enumerate() {
            if let Some(v) = matrix.get(p, g) {
                writeln!(w, "{pid},{gid},{},{v}", matrix.identifier.name)?;
            }
        }
    }
    Ok(())
}

/// Raw rows of one score file.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreFile<T> {
    pub identifier: IdentifierId,
    pub rows: Vec<(String, String, T)>,
}

pub fn read_scores<T: Real, R: BufRead>(r: R) -> Result<ScoreFile<T>> {
    let mut kind = None;
    let mut name: Option<String> = None;
    let mut rows = Vec::new();
    for (i, l) in r.lines().enumerate() {
        let line_no = i + 1;
        let l = l?;
        let t = l.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(c) = t.strip_prefix('#') {
            if let Some(k) = c.trim().strip_prefix("kind=") {
                kind = Some(k.trim().parse::<IdentifierKind>()?);
            }
            continue;
        }
        if t == SCORE_HEADER {
            continue;
        }
        let f: Vec<&str> = t.split(',').collect();
        if f.len() != 4 {
            return Err(Error::parse(line_no, "expected probe_id,gallery_id,identifier,score"));
        }
        match &name {
            None => name = Some(f[2].to_string()),
            Some(n) if n != f[2] => {
                return Err(Error::parse(line_no, format!("file mixes identifiers '{n}' and '{}'", f[2])))
            }
            _ => {}
        }
        let v: T = parse_num(f[3], line_no)?;
        if !v.is_finite() {
            return Err(Error::parse(line_no, "score must be finite"));
        }
        rows.push((f[0].to_string(), f[1].to_string(), v));
    }
    let name = name.ok_or(Error::Empty("score file"))?;
    let kind = kind.unwrap_or(if MANIFEST_BIO.contains(&name.as_str()) {
        IdentifierKind::Biographical
    } else {
        IdentifierKind::Biometric
    });
    Ok(ScoreFile {
        identifier: IdentifierId { name, kind },
        rows,
    })
}

/// Assembles score files into a closed-set `ScoreSet`. Probe and gallery
/// ids keep first-appearance order across files; a probe's mate is the
/// gallery entry with the same id.
pub fn assemble_score_set<T: Real>(files: Vec<ScoreFile<T>>) -> Result<ScoreSet<T>> {
    let mut probe_ids: Vec<String> = Vec::new();
    let mut gallery_ids: Vec<String> = Vec::new();
    let mut probe_ix: HashMap<String, usize> = HashMap::new();
    let mut gallery_ix: HashMap<String, usize> = HashMap::new();
    for f in &files {
        for (p, g, _) in &f.rows {
            if !probe_ix.contains_key(p) {
                probe_ix.insert(p.clone(), probe_ids.len());
                probe_ids.push(p.clone());
            }
            if !gallery_ix.contains_key(g) {
                gallery_ix.insert(g.clone(), gallery_ids.len());
                gallery_ids.push(g.clone());
            }
        }
    }
    let mates = probe_ids
        .iter()
        .map(|p| gallery_ix.get(p).copied().ok_or_else(|| Error::MissingMate(p.clone())))
        .collect::<Result<Vec<_>>>()?;
    let matrices = files
        .into_iter()
        .map(|f| {
            let mut m = ScoreMatrix::empty(f.identifier, probe_ids.len(), gallery_ids.len());
            for (p, g, v) in f.rows {
                m.set(probe_ix[&p], gallery_ix[&g], Some(v));
            }
            m
        })
        .collect();
    ScoreSet::new(probe_ids, gallery_ids, mates, matrices)
}

/// Attaches each probe's quality for `modality` from the manifest. Probes
/// missing from the manifest get the best level.
pub fn attach_quality<T: Real>(set: ScoreSet<T>, subjects: &[SubjectRecord], modality: &str) -> Result<ScoreSet<T>> {
    let by_id: HashMap<&str, &SubjectRecord> = subjects.iter().map(|s| (s.id.as_str(), s)).collect();
    let q = set
        .probe_ids
        .iter()
        .map(|p| {
            by_id
                .get(p.as_str())
                .and_then(|s| s.quality_of(modality))
                .unwrap_or(QualityLevel::BEST)
        })
        .collect();
    set.with_quality(q)
}

pub fn write_curve<W: Write>(curve: &EvalCurve, mut w: W) -> Result<()> {
    let (x, y) = curve.kind.axes();
    writeln!(w, "{x},{y}")?;
    for (a, b) in &curve.points {
        writeln!(w, "{a},{b}")?;
    }
    Ok(())
}

pub fn write_effort<W: Write>(report: &EffortReport, mut w: W) -> Result<()> {
    writeln!(w, "stage,percent")?;
    for (s, p) in &report.stages {
        writeln!(w, "{s},{p}")?;
    }
    writeln!(w, "rank1,{}", report.rank1_percent)?;
    Ok(())
}

pub fn write_decisions<T: Real, W: Write>(
    decisions: &[DedupDecision<T>],
    set: &ScoreSet<T>,
    mut w: W,
) -> Result<()> {
    writeln!(w, "probe_id,rank1_id,stages_used,early_terminated")?;
    for d in decisions {
        writeln!(
            w,
            "{},{},{},{}",
            set.probe_ids[d.probe], set.gallery_ids[d.rank1], d.stages_used, d.early_terminated
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let c = KeyValueConfig::parse("# c\nk = 5\n\neta=1e-6\nstage_order = a, b ,c\nk = 7\n").unwrap();
        assert_eq!(c.get_parsed::<usize>("k").unwrap(), Some(7));
        assert_eq!(c.get_parsed::<f64>("eta").unwrap(), Some(1e-6));
        assert_eq!(c.get_list("stage_order").unwrap(), vec!["a", "b", "c"]);
        assert_eq!(c.get("missing"), None);
        assert!(c.get_parsed::<usize>("eta").is_err());
        assert!(KeyValueConfig::parse("novalue").is_err());
        assert_eq!(KeyValueConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn score_round_trip() {
        let m = ScoreMatrix::from_rows(IdentifierId::biographical("lastname"), vec![vec![0.1, 0.25], vec![1.0 / 3.0, 0.0]]).unwrap();
        let mut m2 = m.clone();
        m2.set(1, 0, None);
        let ids = vec!["a".to_string(), "b".to_string()];
        let mut buf = Vec::new();
        write_scores(&m2, &ids, &ids, &mut buf).unwrap();
        let f = read_scores::<f64, _>(buf.as_slice()).unwrap();
        assert_eq!(f.rows.len(), 3);
        let set = assemble_score_set(vec![f]).unwrap();
        assert_eq!(set.matrices[0], m2);
        assert_eq!(set.mates, vec![0, 1]);
    }
}
