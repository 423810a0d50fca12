use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use seqfuse::datagen::{generate_dataset, make_folds, SubjectRecord};
use seqfuse::eval::{
    cmc, decade_grid, effort_report, peet_adaptive, peet_outlier, split_genuine_impostor, stage_outcomes,
    verification_rates, StageMethod, StageOutcomes,
};
use seqfuse::io::{
    assemble_score_set, attach_quality, read_manifest, read_model, read_scores, write_curve, write_decisions,
    write_effort, write_manifest, write_model, write_scores,
};
use seqfuse::pipeline::{dedup_all, train_pipeline};
use seqfuse::rng::{derive_indexed, derive_seed};
use seqfuse::{DedupDecision, EvalCurve, FusionModel, IdentifierKind, ScoreSet, StopRule};

use crate::settings::{Baseline, RunConfig};
use crate::Usage;

const IDENTIFIERS_FILE: &str = "identifiers.txt";
const MANIFEST_FILE: &str = "manifest.tsv";
const FOLDS_FILE: &str = "folds.csv";
/// Keys that name locations or resources rather than parameters; left out
/// of the echoed config so reruns elsewhere produce identical bytes.
const NOT_ECHOED: [&str; 4] = ["out", "data", "model", "workers"];

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.path("out")?;
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut echo = String::new();
    for key in cfg.kv.keys().filter(|k| !NOT_ECHOED.contains(k)) {
        writeln!(echo, "{key} = {}", cfg.kv.get(key).unwrap_or_default())?;
    }
    fs::write(dir.join("config.txt"), echo)?;
    Ok(dir)
}

fn scores_file(name: &str) -> String {
    format!("scores_{name}.csv")
}

pub fn generate(cfg: &RunConfig) -> Result<()> {
    let dc = cfg.dataset()?;
    let seed = derive_seed(cfg.seed()?, "generation");
    let out = out_dir(cfg)?;
    let ds = generate_dataset(&dc, seed)?;
    let mut w = create(&out.join(MANIFEST_FILE))?;
    write_manifest(&ds.subjects, &mut w)?;
    w.flush()?;
    let mut index = String::new();
    for m in &ds.scores.matrices {
        let mut w = create(&out.join(scores_file(&m.identifier.name)))?;
        write_scores(m, &ds.scores.probe_ids, &ds.scores.gallery_ids, &mut w)?;
        w.flush()?;
        writeln!(index, "{}", m.identifier.name)?;
    }
    fs::write(out.join(IDENTIFIERS_FILE), index)?;
    println!(
        "generated {} subjects, {} identifiers ({} biometric, {} biographical) in {}",
        ds.subjects.len(),
        ds.scores.matrices.len(),
        dc.modalities.len(),
        dc.bio_fields.len(),
        out.display()
    );
    Ok(())
}

/// Score set of a dataset directory, restricted to the configured
/// identifiers, with probe quality of the first biometric identifier.
fn load_data(cfg: &RunConfig) -> Result<(ScoreSet<f64>, Vec<SubjectRecord>)> {
    let dir = cfg.input_dir("data")?;
    let index = fs::read_to_string(dir.join(IDENTIFIERS_FILE))
        .with_context(|| format!("{} is not a dataset directory", dir.display()))?;
    let available: Vec<&str> = index.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let names: Vec<String> = match cfg.identifiers() {
        Some(list) => {
            for n in &list {
                if !available.contains(&n.as_str()) {
                    return Err(Usage(format!("identifier '{n}' is not in the dataset")).into());
                }
            }
            list
        }
        None => available.iter().map(|s| s.to_string()).collect(),
    };
    let files = names
        .iter()
        .map(|n| Ok(read_scores(open(&dir.join(scores_file(n)))?)?))
        .collect::<Result<Vec<_>>>()?;
    let mut set = assemble_score_set(files)?;
    let subjects = read_manifest(open(&dir.join(MANIFEST_FILE))?)?;
    if let Some(first) = set
        .matrices
        .iter()
        .find(|m| m.identifier.kind == IdentifierKind::Biometric)
        .map(|m| m.identifier.name.clone())
    {
        set = attach_quality(set, &subjects, &first)?;
    }
    Ok((set, subjects))
}

/// Test probes of each fold; a single fold tests on every probe.
fn fold_partition(cfg: &RunConfig, n: usize) -> Result<Vec<Vec<usize>>> {
    let folds = cfg.folds()?;
    if folds == 1 {
        return Ok(vec![(0..n).collect()]);
    }
    if n < folds {
        return Err(Usage(format!("{n} probes cannot fill {folds} folds")).into());
    }
    Ok(make_folds(n, folds, derive_seed(cfg.seed()?, "folds"))?)
}

fn model_file(fold: usize, folds: usize) -> String {
    if folds == 1 {
        "model.txt".into()
    } else {
        format!("model_fold{fold}.txt")
    }
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let (set, _) = load_data(cfg)?;
    let pc = cfg.pipeline()?;
    let partition = fold_partition(cfg, set.n_probes())?;
    let folds = partition.len();
    let bootstrap = derive_seed(cfg.seed()?, "bootstrap");
    let out = out_dir(cfg)?;
    let mut report = String::new();
    for (f, test) in partition.iter().enumerate() {
        let train: Vec<usize> = if folds == 1 {
            test.clone()
        } else {
            partition
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, p)| p.iter().copied())
                .collect()
        };
        let tp = train_pipeline(&set, &train, &pc, derive_indexed(bootstrap, f as u64))?;
        let mut w = create(&out.join(model_file(f, folds)))?;
        write_model(&tp.model, &mut w)?;
        w.flush()?;
        let order: Vec<&str> = tp.model.stage_order.iter().map(|i| i.name.as_str()).collect();
        writeln!(report, "fold {f}: {} training probes, stage order {}", train.len(), order.join(","))?;
        for s in &tp.summaries {
            writeln!(
                report,
                "  {}: {:.2}% of training probes terminate, {} wrongly",
                s.identifier,
                100.0 * s.terminated as f64 / s.training_probes.max(1) as f64,
                s.wrong
            )?;
        }
        for w in &tp.warnings {
            eprintln!("warning: fold {f}: {w}");
        }
    }
    let mut fw = create(&out.join(FOLDS_FILE))?;
    writeln!(fw, "probe_id,fold")?;
    let mut fold_of = vec![0; set.n_probes()];
    for (f, test) in partition.iter().enumerate() {
        for &p in test {
            fold_of[p] = f;
        }
    }
    for (p, f) in fold_of.iter().enumerate() {
        writeln!(fw, "{},{f}", set.probe_ids[p])?;
    }
    fw.flush()?;
    fs::write(out.join("train_report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

/// Models and their test probes, as written by `train`.
fn load_models(cfg: &RunConfig, set: &ScoreSet<f64>) -> Result<Vec<(FusionModel<f64>, Vec<usize>)>> {
    let dir = cfg.input_dir("model")?;
    let text = fs::read_to_string(dir.join(FOLDS_FILE))
        .with_context(|| format!("{} is not a model directory", dir.display()))?;
    let index: HashMap<&str, usize> = set.probe_ids.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut tests: Vec<Vec<usize>> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let (id, f) = line
            .split_once(',')
            .with_context(|| format!("{FOLDS_FILE} line {}: expected probe_id,fold", i + 1))?;
        let f: usize = f.trim().parse().with_context(|| format!("{FOLDS_FILE} line {}: bad fold", i + 1))?;
        let p = *index
            .get(id)
            .with_context(|| format!("probe '{id}' from {FOLDS_FILE} is not in the dataset"))?;
        if tests.len() <= f {
            tests.resize(f + 1, Vec::new());
        }
        tests[f].push(p);
    }
    let folds = tests.len();
    tests
        .into_iter()
        .enumerate()
        .map(|(f, t)| {
            let model: FusionModel<f64> = read_model(open(&dir.join(model_file(f, folds)))?)?;
            model.bind(set)?;
            Ok((model, t))
        })
        .collect()
}

fn stop_rule(cfg: &RunConfig, baseline: Baseline) -> Result<StopRule<f64>> {
    Ok(match baseline {
        Baseline::Adaptive => StopRule::Adaptive { eta: Some(cfg.eta()?) },
        Baseline::Outlier => StopRule::Outlier {
            alpha: cfg.alpha()?,
            n: cfg.outlier_n()?,
        },
        Baseline::Quality => StopRule::Quality {
            threshold: cfg.quality_threshold()?,
        },
        Baseline::Full => StopRule::Full,
    })
}

/// Decisions for every test probe under `rule`, in probe order.
fn run_dedup(
    models: &[(FusionModel<f64>, Vec<usize>)],
    set: &ScoreSet<f64>,
    rule: &StopRule<f64>,
) -> Result<Vec<DedupDecision<f64>>> {
    let mut all = Vec::new();
    for (model, test) in models {
        all.extend(dedup_all(model, set, test, rule)?);
    }
    all.sort_by_key(|d| d.probe);
    Ok(all)
}

fn n_stages(models: &[(FusionModel<f64>, Vec<usize>)]) -> usize {
    models.iter().map(|(m, _)| m.n_stages()).max().unwrap_or(0)
}

pub fn dedup(cfg: &RunConfig) -> Result<()> {
    let (set, _) = load_data(cfg)?;
    let models = load_models(cfg, &set)?;
    let baseline = cfg.baseline()?;
    let rule = stop_rule(cfg, baseline)?;
    let out = out_dir(cfg)?;
    let decisions = run_dedup(&models, &set, &rule)?;
    let mut w = create(&out.join("decisions.csv"))?;
    write_decisions(&decisions, &set, &mut w)?;
    w.flush()?;
    let report = effort_report(&decisions, n_stages(&models), &set.mates)?;
    let mut w = create(&out.join("effort.csv"))?;
    write_effort(&report, &mut w)?;
    w.flush()?;
    println!("{} probes de-duplicated ({})", decisions.len(), baseline.name());
    for (s, p) in &report.stages {
        println!("  stage {s} needed for {p:.2}% of probes");
    }
    println!("  rank-1 accuracy {:.2}%", report.rank1_percent);
    Ok(())
}

fn thin(curve: EvalCurve, max_points: usize) -> EvalCurve {
    let n = curve.points.len();
    if max_points < 2 || n <= max_points {
        return curve;
    }
    let points = (0..max_points)
        .map(|i| curve.points[i * (n - 1) / (max_points - 1)])
        .collect();
    EvalCurve { points, ..curve }
}

fn merged_outcomes(
    models: &[(FusionModel<f64>, Vec<usize>)],
    set: &ScoreSet<f64>,
    stage: usize,
    method: StageMethod,
) -> Result<StageOutcomes> {
    let mut merged = StageOutcomes {
        stage,
        statistic: Vec::new(),
        rank1_correct: Vec::new(),
        n_scores: Vec::new(),
    };
    for (model, test) in models {
        if stage >= model.n_stages() {
            continue;
        }
        let o = stage_outcomes(model, set, test, stage, method)?;
        merged.statistic.extend(o.statistic);
        merged.rank1_correct.extend(o.rank1_correct);
        merged.n_scores.extend(o.n_scores);
    }
    Ok(merged)
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let (set, _) = load_data(cfg)?;
    let models = load_models(cfg, &set)?;
    let baseline = cfg.baseline()?;
    let rule = stop_rule(cfg, baseline)?;
    let det_points = cfg.det_points()?;
    let grid = decade_grid(cfg.peet_decades()?);
    let outlier_n = cfg.outlier_n()?;
    let out = out_dir(cfg)?;
    let mut summary = String::new();

    let decisions = run_dedup(&models, &set, &rule)?;
    let mates: Vec<Option<usize>> = decisions.iter().map(|d| Some(set.mates[d.probe])).collect();
    let fused: Vec<Vec<f64>> = decisions.iter().map(|d| d.fused_scores.clone()).collect();
    let curve = cmc(&fused, &mates)?;
    let mut w = create(&out.join("cmc.csv"))?;
    write_curve(&curve.to_curve(), &mut w)?;
    w.flush()?;
    writeln!(summary, "baseline = {}", baseline.name())?;
    writeln!(summary, "probes = {}", decisions.len())?;
    writeln!(summary, "rank1 = {}", curve.rank1())?;
    let report = effort_report(&decisions, n_stages(&models), &set.mates)?;
    for (s, p) in &report.stages {
        writeln!(summary, "stage{s}_percent = {p}")?;
    }
    let full = run_dedup(&models, &set, &StopRule::Full)?;
    let full_correct = full.iter().filter(|d| d.rank1 == set.mates[d.probe]).count();
    writeln!(summary, "full_fusion_rank1 = {}", full_correct as f64 / full.len() as f64)?;

    let all: Vec<usize> = (0..set.n_probes()).collect();
    for m in &set.matrices {
        let rows: Vec<Vec<f64>> = all
            .iter()
            .map(|&p| m.row(p).iter().map(|c| c.unwrap_or(f64::NAN)).collect())
            .collect();
        let truth: Vec<Option<usize>> = set.mates.iter().map(|&g| Some(g)).collect();
        writeln!(summary, "{}_rank1 = {}", m.identifier.name, cmc(&rows, &truth)?.rank1())?;
        let (g, i) = split_genuine_impostor(&rows, &set.mates);
        let rates = verification_rates(&g, &i)?;
        writeln!(summary, "{}_eer = {}", m.identifier.name, rates.eer)?;
        let mut w = create(&out.join(format!("det_{}.csv", m.identifier.name)))?;
        write_curve(&thin(rates.det_curve(), det_points), &mut w)?;
        w.flush()?;
    }

    let stages = models.iter().map(|(m, _)| m.n_stages()).min().unwrap_or(0);
    for stage in 1..stages {
        let adaptive = peet_adaptive(&merged_outcomes(&models, &set, stage, StageMethod::Adaptive)?, &grid)?;
        let outlier = peet_outlier(
            &merged_outcomes(&models, &set, stage, StageMethod::Outlier { n: outlier_n })?,
            &grid,
        )?;
        for (name, c) in [("adaptive", &adaptive), ("outlier", &outlier)] {
            let mut w = create(&out.join(format!("peet_stage{stage}_{name}.csv")))?;
            write_curve(&c.to_curve(), &mut w)?;
            w.flush()?;
            let z = c.zero_error_effort().map_or("none".to_string(), |e| e.to_string());
            writeln!(summary, "peet_stage{stage}_{name}_zero_error_effort = {z}")?;
        }
    }
    fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
