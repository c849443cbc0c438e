use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::mpsc;

use tracebench::config::RunConfig;
use tracebench::eval::{from_jsonl, run_trials, to_jsonl, Report, TrialOutcome};
use tracebench::expert::{expert_mean_steps, record_demos, ExpertController};
use tracebench::labeling::{label_all, read_dataset, read_raw_dataset, write_dataset, write_raw_dataset};
use tracebench::policy::{checkpoint, train_with_progress, EpochLoss, Policy, PolicyController, TrainConfig};
use tracebench::sim::SimConfig;
use tracebench::{Error, Result};
use tracebench_service::{serve, ServiceConfig};

use crate::{Command, EvalArgs, Format, GenDemosArgs, LabelArgs, ReportArgs, ServeArgs, TrainArgs};

pub fn run(command: &Command, config: &RunConfig) -> Result<()> {
    match command {
        Command::GenDemos(a) => gen_demos(a, config),
        Command::Label(a) => label(a, config),
        Command::Train(a) => train(a, config),
        Command::Eval(a) => eval(a, config),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve_until_interrupted(a, config),
    }
}

fn config_json(config: &RunConfig) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(config)?)
}

fn gen_demos(a: &GenDemosArgs, config: &RunConfig) -> Result<()> {
    let sim = SimConfig {
        preset: a.preset,
        ..config.sim.clone()
    };
    let (episodes, attempts) = record_demos(a.n as usize, &sim, &config.sensors, &config.expert, a.seed)?;
    for (i, at) in attempts.iter().enumerate() {
        println!("attempt {i:3}  seed {:>12}  {:<16} {} steps", at.seed, at.outcome.to_string(), at.steps);
    }
    let mut run = config.clone();
    run.sim = sim;
    let json = config_json(&run)?;
    if a.label {
        let labeled = label_all(&episodes, &config.extraction, config.labeling.normalizer)?;
        write_dataset(&labeled, &a.out, &json)?;
    } else {
        write_raw_dataset(&episodes, &a.out, &json)?;
    }
    println!(
        "wrote {} {} episodes to {}",
        episodes.len(),
        if a.label { "labeled" } else { "raw" },
        a.out.display()
    );
    Ok(())
}

fn label(a: &LabelArgs, config: &RunConfig) -> Result<()> {
    let raw = read_raw_dataset(&a.raw)?;
    let labeled = label_all(&raw, &config.extraction, config.labeling.normalizer)?;
    write_dataset(&labeled, &a.out, &config_json(config)?)?;
    println!("labeled {} episodes into {}", labeled.len(), a.out.display());
    Ok(())
}

fn curves_csv(curves: &[EpochLoss]) -> String {
    let mut out =
        String::from("epoch,train_total,train_center,train_reg,train_task,val_total,val_center,val_reg,val_task,best_val\n");
    let mut best = f64::INFINITY;
    for e in curves {
        best = best.min(e.val.total);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            e.epoch,
            e.train.total,
            e.train.center,
            e.train.reg,
            e.train.task,
            e.val.total,
            e.val.center,
            e.val.reg,
            e.val.task,
            best
        );
    }
    out
}

fn train(a: &TrainArgs, config: &RunConfig) -> Result<()> {
    let tcfg = TrainConfig {
        epochs: a.epochs.unwrap_or(config.train.epochs),
        seed: a.seed.unwrap_or(config.train.seed),
        ablation: a.ablate.unwrap_or(config.train.ablation),
        ..config.train
    };
    tcfg.validate()?;
    let data = read_dataset(&a.data)?;
    let every = (tcfg.epochs / 20).max(1);
    let (policy, report) = train_with_progress(&data, &config.policy, &tcfg, |e| {
        if e.epoch % every == 0 || e.epoch == tcfg.epochs {
            eprintln!(
                "epoch {:5}  train {:.5}  val {:.5} (center {:.5}, kl {:.6}, task {:.6})",
                e.epoch, e.train.total, e.val.total, e.val.center, e.val.reg, e.val.task
            );
        }
    })?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    checkpoint::save(&policy, &a.out)?;
    let curves = a.curves.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".curves.csv");
        PathBuf::from(p)
    });
    fs::write(&curves, curves_csv(&report.curves))?;
    println!(
        "saved {} ({} epochs, best epoch {}, ablation {}); curves in {}",
        a.out.display(),
        tcfg.epochs,
        report.best_epoch.map_or("-".into(), |e| e.to_string()),
        tcfg.ablation,
        curves.display()
    );
    Ok(())
}

fn eval(a: &EvalArgs, config: &RunConfig) -> Result<()> {
    let trials = a.trials.unwrap_or(config.eval.trials);
    let seed = a.seed.unwrap_or(config.eval.seed);
    let presets = if a.preset.is_empty() { vec![config.sim.preset] } else { a.preset.clone() };
    let policy: Option<Policy> = match &a.ckpt {
        Some(path) if !a.expert => Some(checkpoint::load(path)?),
        _ => None,
    };
    let mut all: Vec<TrialOutcome> = Vec::new();
    for preset in presets {
        let sim = SimConfig {
            preset,
            ..config.sim.clone()
        };
        let budget = match a.budget {
            Some(b) => b,
            None if trials == 0 => 0,
            None => {
                let mean = expert_mean_steps(&sim, &config.expert, config.eval.expert_runs, seed)?;
                (config.eval.budget_factor * mean).ceil() as usize
            }
        };
        eprintln!("{preset}: {trials} trials, budget {budget} steps");
        let results = match &policy {
            Some(p) => run_trials(|_| PolicyController::new(p), &sim, &config.sensors, trials, seed, budget)?,
            None => {
                let gains = config.expert;
                run_trials(
                    |s| ExpertController::new(gains, sim.clone(), s),
                    &sim,
                    &config.sensors,
                    trials,
                    seed,
                    budget,
                )?
            }
        };
        all.extend(results);
    }
    let name = a.name.clone().unwrap_or_else(|| match &policy {
        Some(p) => p.ablation.name().to_string(),
        None => "expert".to_string(),
    });
    let table = Report::from_trials(&all)?.table(&name);
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("results.jsonl"), to_jsonl(&all)?)?;
    fs::write(a.out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let mut trials = Vec::new();
    for path in &a.results {
        trials.extend(from_jsonl(&fs::read_to_string(path)?)?);
    }
    let report = Report::from_trials(&trials)?;
    match a.format {
        Format::Table => print!("{}", report.table(&a.name)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn serve_until_interrupted(a: &ServeArgs, config: &RunConfig) -> Result<()> {
    let service = ServiceConfig {
        seed: a.seed,
        tick_hz: a.tick_hz,
        ..ServiceConfig::new(config.clone(), a.dataset.clone())
    };
    let addr = format!("{}:{}", a.host, a.port);
    let handle = serve(service, &addr).map_err(|e| match e {
        Error::Io(io) => Error::Precondition(format!("cannot listen on {addr}: {io}")),
        other => other,
    })?;
    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .map_err(|e| Error::Precondition(format!("cannot install signal handler: {e}")))?;
    println!("listening on {}", handle.local_addr());
    std::io::stdout().flush()?;
    let _ = rx.recv();
    eprintln!("shutting down");
    if let Some(saved) = handle.stop() {
        println!("saved in-progress recording as episode {} ({} steps)", saved.episode_id, saved.steps);
    }
    Ok(())
}
