use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use earlysurv::checkpoint::Checkpoint;
use earlysurv::compare::compare_models;
use earlysurv::data::{
    common_dim, generate_synthetic, parse_records, split_dataset, write_records, DatasetSplit, Normalizer, UserRecord,
};
use earlysurv::eval::{self, Evaluation, Threshold};
use earlysurv::gradcheck::{self, GradcheckOptions, GradcheckReport};
use earlysurv::train::{self, EpochStats};
use earlysurv::{Error, ModelParams};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Lib(Error::Io(e)))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value).map_err(Error::from)? + "\n")
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.output_dir()?;
    let out = cfg.paths.dataset.clone().unwrap_or_else(|| dir.join("dataset.jsonl"));
    let records = generate_synthetic(&cfg.generator, cfg.seeds.data)?;
    write_records(&out, &records)?;
    cfg.echo(&dir)?;

    let fraud = records.iter().filter(|r| r.is_event()).count();
    println!("wrote {} records to {}", records.len(), out.display());
    println!("fraudsters {fraud}, normal users {}", records.len() - fraud);
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    for r in &records {
        *lengths.entry(r.len()).or_default() += 1;
    }
    println!("length histogram:");
    for (len, n) in lengths {
        println!("  {len:>3} {n}");
    }
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<Vec<UserRecord>, CliError> {
    let records = parse_records(cfg.dataset()?)?;
    if records.is_empty() {
        return Err(Error::Data("dataset is empty".into()).into());
    }
    Ok(records)
}

pub fn metrics_csv(name: &str, ev: &Evaluation) -> String {
    let mut out = String::from("model,k,precision,recall,f1,accuracy,tp,fp,tn,fn\n");
    for m in &ev.at_k {
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{},{},{},{},{}",
            m.k, m.precision, m.recall, m.f1, m.accuracy, m.tp, m.fp, m.tn, m.fn_
        );
    }
    let m = &ev.mean;
    let _ = writeln!(out, "{name},mean,{},{},{},{},,,,", m.precision, m.recall, m.f1, m.accuracy);
    out
}

fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for e in history {
        let _ = writeln!(out, "{},{},{}", e.epoch, e.train_loss, e.val_loss);
    }
    out
}

fn print_evaluation(ev: &Evaluation) {
    println!("threshold {}", ev.threshold.value());
    println!("  k  precision  recall     f1         accuracy");
    for m in &ev.at_k {
        println!("  {}  {:.6}   {:.6}   {:.6}   {:.6}", m.k, m.precision, m.recall, m.f1, m.accuracy);
    }
    let m = &ev.mean;
    println!("  mean {:.6} {:.6}   {:.6}   {:.6}", m.precision, m.recall, m.f1, m.accuracy);
    let e = &ev.early;
    match e.mean_early_timestamps {
        Some(lead) => println!(
            "early detected {}/{} fraudsters ({:.4}), mean lead {lead:.4} steps",
            e.n_early, e.n_fraudsters, e.fraction_early_detected
        ),
        None => println!("early detected 0/{} fraudsters", e.n_fraudsters),
    }
}

fn write_evaluation(dir: &Path, name: &str, ev: &Evaluation) -> Result<(), CliError> {
    write(&dir.join("metrics.json"), &to_json(ev)?)?;
    write(&dir.join("metrics.csv"), &metrics_csv(name, ev))
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.train.validate()?;
    let dir = cfg.output_dir()?;
    let records = load_dataset(cfg)?;
    let split = split_dataset(&records, cfg.seeds.split)?;
    cfg.echo(&dir)?;

    let out = train::train(&split, &cfg.train)?;
    write(&dir.join("history.csv"), &history_csv(&out.history))?;
    let val = out.normalizer.apply_all(&split.validation);
    let test = out.normalizer.apply_all(&split.test);
    let tau = eval::select_threshold(&out.params, &val)?;
    let evaluation = eval::evaluate(&out.params, tau, &test)?;

    let mut ck = Checkpoint::new(&out.params, cfg.train.model, cfg.train.loss())?.with_adam(&out.adam);
    ck.normalizer = Some(out.normalizer.clone());
    ck.threshold = Some(tau);
    ck.split_seed = Some(split.split_seed);
    let ck_path = cfg.paths.checkpoint.clone().unwrap_or_else(|| dir.join("checkpoint.json"));
    ck.save(&ck_path)?;
    write_evaluation(&dir, cfg.train.model.as_str(), &evaluation)?;

    println!(
        "trained {} for {} epochs (best {:?}), {} clamped hazards",
        cfg.train.model.as_str(),
        out.history.len(),
        out.best_epoch,
        out.clamp_count
    );
    println!("checkpoint {}", ck_path.display());
    print_evaluation(&evaluation);
    Ok(())
}

struct Loaded {
    ck: Checkpoint,
    params: ModelParams,
    normalizer: Normalizer,
    records: Vec<UserRecord>,
}

fn load_model_and_data(cfg: &RunConfig) -> Result<Loaded, CliError> {
    let ck_path = cfg.checkpoint()?;
    let data_path = cfg.dataset()?;
    let ck = Checkpoint::load(ck_path)?;
    let records = load_dataset(cfg)?;
    let dim = common_dim(&records)?.unwrap_or(0);
    if dim != ck.input_size {
        return Err(Error::Shape(format!(
            "checkpoint {} expects {} features but dataset {} has {dim}",
            ck_path.display(),
            ck.input_size,
            data_path.display()
        ))
        .into());
    }
    let params = ck.params()?;
    let normalizer = ck.normalizer.clone().unwrap_or_else(|| Normalizer::identity(dim));
    Ok(Loaded {
        ck,
        params,
        normalizer,
        records,
    })
}

fn threshold(cfg: &RunConfig, ck: &Checkpoint) -> Result<Threshold, CliError> {
    match (cfg.eval.threshold, ck.threshold) {
        (Some(t), _) => Ok(Threshold::new(t)?),
        (None, Some(t)) => Ok(t),
        (None, None) => Err(CliError::Usage("checkpoint has no threshold; pass --threshold".into())),
    }
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.output_dir()?;
    let loaded = load_model_and_data(cfg)?;
    let tau = threshold(cfg, &loaded.ck)?;
    cfg.echo(&dir)?;
    let records = match (cfg.eval.all_records, loaded.ck.split_seed) {
        (false, Some(seed)) => split_dataset(&loaded.records, seed)?.test,
        _ => loaded.records,
    };
    let test = loaded.normalizer.apply_all(&records);
    let evaluation = eval::evaluate(&loaded.params, tau, &test)?;
    write_evaluation(&dir, loaded.ck.model.as_str(), &evaluation)?;
    println!("evaluated {} records", test.len());
    print_evaluation(&evaluation);
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    user_id: &'a str,
    survival: &'a [f64],
    flag_time: Option<usize>,
    c: u8,
    t_label: usize,
    /// Flagged strictly before the label time.
    flagged_early: bool,
}

pub fn predict(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.output_dir()?;
    let loaded = load_model_and_data(cfg)?;
    let tau = threshold(cfg, &loaded.ck)?;
    cfg.echo(&dir)?;
    let normalized = loaded.normalizer.apply_all(&loaded.records);
    let curves = eval::curves(&loaded.params, &normalized)?;
    let mut out = String::new();
    let mut flagged = 0;
    for (r, curve) in loaded.records.iter().zip(&curves) {
        let flag_time = curve.first_below(tau.value());
        flagged += usize::from(flag_time.is_some());
        let p = Prediction {
            user_id: &r.user_id,
            survival: curve.values(),
            flag_time,
            c: r.c,
            t_label: r.t_label,
            flagged_early: flag_time.is_some_and(|t| t < r.t_label),
        };
        out.push_str(&serde_json::to_string(&p).map_err(Error::from)?);
        out.push('\n');
    }
    let path = dir.join("predictions.jsonl");
    write(&path, &out)?;
    println!(
        "wrote {} predictions to {} ({flagged} flagged at threshold {})",
        curves.len(),
        path.display(),
        tau.value()
    );
    Ok(())
}

pub fn print_gradcheck(report: &GradcheckReport) {
    println!("{:<28} {:>6} {:>12} {:>10}  result", "suite", "cases", "max rel err", "tolerance");
    for s in &report.suites {
        let err = s.max_rel_error.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into());
        let tol = s.tolerance.map(|t| format!("{t:.0e}")).unwrap_or_else(|| "exact".into());
        let verdict = if s.passed {
            "pass".to_string()
        } else {
            format!("FAIL ({} violations)", s.violations)
        };
        println!("{:<28} {:>6} {:>12} {:>10}  {verdict}", s.name, s.cases, err, tol);
    }
}

/// Returns whether every suite passed.
pub fn gradcheck(cfg: &RunConfig, opts: &GradcheckOptions) -> Result<bool, CliError> {
    let report = gradcheck::run(opts)?;
    print_gradcheck(&report);
    if cfg.paths.output_dir.is_some() {
        let dir = cfg.output_dir()?;
        cfg.echo(&dir)?;
        write(&dir.join("gradcheck.json"), &to_json(&report)?)?;
    }
    for s in report.failing() {
        eprintln!("failing suite: {}", s.name);
    }
    Ok(report.passed())
}

pub fn compare(cfg: &RunConfig, jobs: Option<usize>) -> Result<(), CliError> {
    let dir = cfg.output_dir()?;
    let records = load_dataset(cfg)?;
    let split: DatasetSplit = split_dataset(&records, cfg.seeds.split)?;
    for c in &cfg.compare.configs {
        c.train.validate()?;
    }
    cfg.echo(&dir)?;
    let run = || compare_models(&split, &cfg.compare.configs, &cfg.compare.seeds);
    let table = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("--jobs {n}: {e}")))?
            .install(run)?,
        None => run()?,
    };
    write(&dir.join("comparison.json"), &to_json(&table)?)?;
    write(&dir.join("comparison.csv"), &table.to_csv())?;
    for cell in table.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("{} seed {} failed: {}", cell.config, cell.seed, cell.error.as_deref().unwrap_or(""));
    }
    println!("{:<16} {:>6} {:>16} {:>16}", "config", "seeds", "mean f1", "early fraction");
    for s in &table.summaries {
        let f1 = s
            .rows
            .iter()
            .find(|r| r.k == "mean")
            .map(|r| format!("{:.4} ± {:.4}", r.f1.mean, r.f1.std))
            .unwrap_or_else(|| "-".into());
        let early = s
            .fraction_early_detected
            .map(|f| format!("{:.4} ± {:.4}", f.mean, f.std))
            .unwrap_or_else(|| "-".into());
        println!("{:<16} {:>6} {f1:>16} {early:>16}", s.config, s.n_ok);
    }
    if table.cells.iter().all(|c| c.error.is_some()) {
        return Err(Error::Data("every comparison cell failed".into()).into());
    }
    Ok(())
}
