use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use nl2rl_core::config::Config;
use nl2rl_core::evaluation::{Report, TaskRow, TrialOutcome};
use nl2rl_core::gateway::TranscriptWriter;
use nl2rl_core::ir::validate_with;
use nl2rl_core::pipeline::{
    clarifier_registry, ir_stages, ClarificationHandler, EcMode, ParkHandler,
};
use nl2rl_core::record::{ir_from_artifacts, to_pretty_json, RunDir, RunRecord};
use nl2rl_core::stage::StageId;
use nl2rl_core::tasks::{self, Task};
use nl2rl_core::trial::{
    answer_pending, backend_for, resolve_selector, resume_trial, run_bench, run_trial, BenchPlan,
    TrialContext, TrialError, TrialReport,
};

use crate::exit::{Exhausted, UsageError};
use crate::{BackendArgs, Cli, Command, EcFlag};

pub fn dispatch(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(dir) = &cli.runs_dir {
        config.runs_dir = Some(dir.clone());
    }
    if let Some(shim) = &cli.shim {
        // Generated code runs inside its workspace, so relative paths in
        // the shim command are pinned to the caller's directory here.
        config.codegen.shim = shim
            .split_whitespace()
            .map(|tok| match Path::new(tok) {
                p if p.is_relative() && p.exists() => std::path::absolute(p)
                    .map(|a| a.display().to_string())
                    .unwrap_or_else(|_| tok.to_string()),
                _ => tok.to_string(),
            })
            .collect();
        if config.codegen.shim.is_empty() {
            return Err(UsageError("--shim must name a command".into()).into());
        }
    }
    match cli.command {
        Command::Run {
            task,
            backend,
            record,
            run_id,
        } => run(config, &task, &backend, record, run_id),
        Command::Bench {
            tasks,
            trials,
            parallelism,
            backend,
            record,
            out,
            label,
        } => bench(
            config,
            tasks,
            trials,
            parallelism,
            &backend,
            record,
            out,
            &label,
        ),
        Command::Replay { fixtures, task, ec } => {
            let task = match task {
                Some(t) => t,
                None => fixtures
                    .file_name()
                    .and_then(|n| n.to_str())
                    .map(str::to_string)
                    .ok_or_else(|| UsageError("cannot infer the task; pass --task".into()))?,
            };
            let args = BackendArgs {
                backend: format!("replay:{}", fixtures.display()),
                ec,
                clarifier: "park".into(),
            };
            run(config, &task, &args, None, None)
        }
        Command::Inspect {
            run,
            stage,
            validate,
        } => inspect(&config, &run, stage.as_deref(), validate),
        Command::Report { paths, out, label } => report(&paths, out, &label),
        Command::Clarify {
            run,
            answer,
            no_resume,
            backend,
        } => clarify(&config, &run, &answer, no_resume, backend),
    }
}

fn apply_ec(config: &mut Config, ec: Option<EcFlag>) {
    if let Some(flag) = ec {
        config.pipeline.ec.mode = match flag {
            EcFlag::Off => EcMode::Off,
            EcFlag::On => EcMode::On,
            EcFlag::All => EcMode::All,
        };
    }
}

fn clarifier(name: &str) -> Result<Box<dyn ClarificationHandler>> {
    Ok(clarifier_registry().create(name, &())?)
}

fn run(
    mut config: Config,
    task_ref: &str,
    args: &BackendArgs,
    record: Option<PathBuf>,
    run_id: Option<String>,
) -> Result<()> {
    let task = tasks::resolve(task_ref)?;
    apply_ec(&mut config, args.ec);
    let selector = resolve_selector(&args.backend, &task.id, 0);
    let backend = backend_for(&args.backend, &config, &task.id, 0)?;
    let clarifier = clarifier(&args.clarifier)?;
    let recorder = match record {
        Some(dir) => Some(Arc::new(TranscriptWriter::create(&dir).with_context(
            || format!("cannot create fixture dir {}", dir.display()),
        )?)),
        None => None,
    };
    let ctx = TrialContext {
        config: &config,
        backend,
        clarifier: clarifier.as_ref(),
        recorder,
        runs_root: config.runs_dir(),
        selector: Some(selector),
    };
    conclude(run_trial(&ctx, &task, run_id.as_deref()))
}

fn conclude(result: Result<TrialReport, TrialError>) -> Result<()> {
    match result {
        Ok(report) => {
            print_summary(&report);
            match report.exhausted {
                Some(stage) => Err(Exhausted {
                    run_id: report.run_id,
                    stage: stage.to_string(),
                }
                .into()),
                None => Ok(()),
            }
        }
        Err(TrialError::Pending {
            run_id,
            run_dir,
            request,
        }) => {
            println!("run {run_id} is waiting for a clarification");
            println!("  stage:    {}", request.stage);
            println!("  question: {}", request.question);
            println!(
                "  resume:   nl2rl clarify {} --answer \"<text>\"",
                run_dir.display()
            );
            Err(TrialError::Pending {
                run_id,
                run_dir,
                request,
            }
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

fn print_summary(report: &TrialReport) {
    let o = &report.outcome;
    println!("run {}: M={} C={} P={}", report.run_id, o.m, o.c, o.p);
    println!("  run dir: {}", report.run_dir.display());
    println!(
        "  outcome: {}",
        report.run_dir.join("outcome.json").display()
    );
    if report.run_dir.join("code/main.py").is_file() {
        println!(
            "  code:    {}",
            report.run_dir.join("code/main.py").display()
        );
    }
    for (label, lines) in [
        ("modeling", &o.evidence.modeling),
        ("coding", &o.evidence.coding),
        ("policy", &o.evidence.policy),
    ] {
        for line in lines {
            println!("  {label}: {line}");
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn bench(
    mut config: Config,
    task_ids: Vec<String>,
    trials: Option<u32>,
    parallelism: Option<usize>,
    args: &BackendArgs,
    record: Option<PathBuf>,
    out: Option<PathBuf>,
    label: &str,
) -> Result<()> {
    apply_ec(&mut config, args.ec);
    let trials = trials.unwrap_or(config.bench.trials);
    if trials == 0 {
        return Err(UsageError("--trials must be at least 1".into()).into());
    }
    let ids = if task_ids.is_empty() {
        config.bench.tasks.clone()
    } else {
        task_ids
    };
    let tasks: Vec<Task> = ids
        .iter()
        .map(|id| tasks::resolve(id))
        .collect::<Result<_, _>>()?;
    // Catch a bad selector or missing credential once, not in every trial.
    if let Some(first) = tasks.first() {
        backend_for(&args.backend, &config, &first.id, 0)?;
    }
    // A bench never waits on a human.
    let clarifier: Box<dyn ClarificationHandler> = match args.clarifier.as_str() {
        "auto" | "interactive" => Box::new(ParkHandler),
        other => clarifier(other)?,
    };
    let recorder = record.map(|root| {
        move |task: &Task, k: u32| {
            let dir = root.join(&task.id).join(format!("trial-{k}"));
            match TranscriptWriter::create(&dir) {
                Ok(w) => Some(Arc::new(w)),
                Err(e) => {
                    log::warn!("not recording {}: {e}", dir.display());
                    None
                }
            }
        }
    });
    let out = out.unwrap_or_else(|| {
        config.runs_dir().join(format!(
            "bench-{}",
            chrono::Utc::now().format("%Y%m%dT%H%M%S")
        ))
    });
    let plan = BenchPlan {
        config: &config,
        tasks,
        trials,
        parallelism: parallelism.unwrap_or(config.bench.parallelism),
        selector: &args.backend,
        recorder: recorder
            .as_ref()
            .map(|r| r as &(dyn Fn(&Task, u32) -> Option<Arc<TranscriptWriter>> + Sync)),
        clarifier: clarifier.as_ref(),
        runs_root: config.runs_dir(),
    };
    let result = run_bench(&plan);
    let report = result.report(label);
    fs::create_dir_all(&out)?;
    fs::write(out.join("report.md"), report.markdown())?;
    fs::write(out.join("report.csv"), report.csv())?;
    let outcomes: BTreeMap<&str, &Vec<TrialOutcome>> =
        result.tasks.iter().map(|(t, o)| (t.as_str(), o)).collect();
    let doc = serde_json::json!({ "runs": result.run_ids, "outcomes": outcomes });
    fs::write(out.join("outcomes.json"), to_pretty_json(&doc))?;
    print!("{}", report.markdown());
    println!("reports written to {}", out.display());
    Ok(())
}

fn run_dir(config: &Config, run: &str) -> PathBuf {
    let direct = Path::new(run);
    if direct.join("record.json").is_file() {
        return direct.to_path_buf();
    }
    config.runs_dir().join(run)
}

fn inspect(config: &Config, run: &str, stage: Option<&str>, validate: bool) -> Result<()> {
    let dir = RunDir::open(&run_dir(config, run))?;
    if let Some(stage) = stage {
        let stage: StageId = stage.parse().map_err(|e| UsageError(format!("{e}")))?;
        let doc = dir
            .read_artifact(stage)?
            .ok_or_else(|| anyhow::anyhow!("run has no accepted {stage} artifact"))?;
        print!("{}", to_pretty_json(&doc));
        return Ok(());
    }
    if validate {
        let artifacts: Vec<(StageId, serde_json::Value)> = ir_stages()
            .filter_map(|s| dir.read_artifact(s).transpose().map(|d| d.map(|d| (s, d))))
            .collect::<Result<_, _>>()?;
        let ir = ir_from_artifacts(&artifacts)?;
        print!("{}", to_pretty_json(&validate_with(&ir, &config.symbols)));
        return Ok(());
    }
    let record = dir.load_record()?;
    print_record(&record);
    Ok(())
}

fn print_record(record: &RunRecord) {
    println!("run:     {}", record.run_id);
    println!("task:    {}", record.task_id);
    println!("backend: {}", record.backend);
    println!("status:  {:?}", record.status);
    for s in &record.stages {
        println!(
            "  {:<20} {:?} ({} call(s), {} check(s))",
            s.stage.to_string(),
            s.status,
            s.attempts.len(),
            s.checks.len()
        );
    }
    if let Some(p) = &record.pending {
        println!("pending: [{}] {}", p.stage, p.question);
    }
    for a in &record.executions {
        println!("  attempt {}: {}", a.attempt, a.outcome.kind);
    }
    if let Some(o) = &record.outcome {
        println!(
            "outcome: M={} C={} P={} (C_strict={})",
            o.m, o.c, o.p, o.c_strict
        );
    }
}

/// Run directories holding an outcome, found under `root`.
fn finished_runs(root: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if root.join("outcome.json").is_file() && root.join("record.json").is_file() {
        out.push(root.to_path_buf());
        return Ok(());
    }
    if !root.is_dir() {
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for e in entries {
        finished_runs(&e, out)?;
    }
    Ok(())
}

fn report(paths: &[PathBuf], out: Option<PathBuf>, label: &str) -> Result<()> {
    let mut dirs = Vec::new();
    for p in paths {
        finished_runs(p, &mut dirs)?;
    }
    if dirs.is_empty() {
        return Err(UsageError("no finished runs found".into()).into());
    }
    let mut by_task: BTreeMap<String, Vec<TrialOutcome>> = BTreeMap::new();
    for d in &dirs {
        let record = RunDir::open(d)?.load_record()?;
        let text = fs::read_to_string(d.join("outcome.json"))?;
        let outcome: TrialOutcome =
            serde_json::from_str(&text).with_context(|| format!("{}/outcome.json", d.display()))?;
        by_task.entry(record.task_id).or_default().push(outcome);
    }
    let report = Report {
        label: label.to_string(),
        rows: by_task
            .iter()
            .map(|(task, o)| TaskRow::from_trials(task, o))
            .collect::<Result<_, _>>()?,
    };
    print!("{}", report.markdown());
    if let Some(out) = out {
        fs::create_dir_all(&out)?;
        fs::write(out.join("report.md"), report.markdown())?;
        fs::write(out.join("report.csv"), report.csv())?;
    }
    Ok(())
}

fn clarify(
    config: &Config,
    run: &str,
    answer: &str,
    no_resume: bool,
    backend: Option<String>,
) -> Result<()> {
    if answer.trim().is_empty() {
        return Err(UsageError("--answer must not be empty".into()).into());
    }
    let dir = run_dir(config, run);
    let record = answer_pending(&dir, answer.trim())?;
    if no_resume {
        println!("answer recorded for run {}", record.run_id);
        return Ok(());
    }
    let selector = backend.unwrap_or_else(|| record.backend.clone());
    let backend = backend_for(&selector, config, &record.task_id, 0)?;
    let ctx = TrialContext {
        config,
        backend,
        clarifier: &ParkHandler,
        recorder: None,
        runs_root: config.runs_dir(),
        selector: Some(selector),
    };
    conclude(resume_trial(&ctx, &dir))
}
