use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind, OutputFormat, TemporalSettings};
use super::generate::generate_dataset;
use crate::error::{config, Result};
use crate::marl::{run_marl, MeetAtGoal, MessageMdp};
use crate::naming::{run_game, GameSetup};
use crate::pgm::{Dataset, SequenceDataset, SignPrior};
use crate::prob::RandomSource;
use crate::signaling::{curve_csv, mutual_information, random_game, optimize, Objective};
use crate::temporal::{generate_sequences, TemporalAgentModel, TemporalConfig, TemporalGame};
use crate::verify::{adjusted_rand_index, agreement_rate, run_battery, OracleReport};

/// Files written by one experiment and the number of failed property checks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub property_failures: usize,
}

fn write(dir: &Path, name: &str, contents: &str, out: &mut RunOutcome) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    out.artifacts.push(path);
    Ok(())
}

fn json_line<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)? + "\n")
}

fn csv_header(cfg: &ExperimentConfig) -> Result<Vec<(&'static str, String)>> {
    Ok(vec![
        ("schema_version", super::ARTIFACT_SCHEMA_VERSION.to_string()),
        ("seed", cfg.seed.to_string()),
        ("config", serde_json::to_string(cfg)?),
    ])
}

/// Runs one resolved experiment, writing its artifacts to `output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    fs::create_dir_all(&cfg.output_dir)?;
    match cfg.kind {
        ExperimentKind::NamingGame => run_naming(cfg),
        ExperimentKind::SignalingGame => run_signaling(cfg),
        ExperimentKind::Marl => run_marl_experiment(cfg),
        ExperimentKind::Temporal => run_temporal(cfg),
        ExperimentKind::Verify => run_verify(cfg),
    }
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let src = cfg.dataset.as_ref().ok_or_else(|| config("missing [dataset]"))?;
    match (&src.path, &src.generate) {
        (Some(p), None) => Dataset::load(p),
        (None, Some(g)) => generate_dataset(g),
        _ => Err(config("[dataset] needs exactly one of path or generate")),
    }
}

fn run_naming(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let game = cfg.naming.as_ref().ok_or_else(|| config("missing [naming]"))?;
    let dataset = load_dataset(cfg)?;
    let (mut trace, _) = run_game(game, &dataset, GameSetup::default())?;
    trace.provenance = Some(cfg.provenance());
    let mut out = RunOutcome::default();
    write(&cfg.output_dir, "trace.jsonl", &trace.to_jsonl()?, &mut out)?;
    if cfg.format == OutputFormat::Csv {
        write(&cfg.output_dir, "metrics.csv", &trace.metrics_csv()?, &mut out)?;
    }
    Ok(out)
}

fn run_signaling(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let s = cfg.signaling.as_ref().ok_or_else(|| config("missing [signaling]"))?;
    let mut rng = RandomSource::new(cfg.seed).stream(&[0x51]);
    let (sender, receiver, mut src) = random_game(&mut rng, s.n_inputs, s.n_messages, s.init_scale)?;
    src.dist = crate::prob::LogProbVector::uniform(s.n_inputs);
    let objective = match s.beta {
        None => Objective::Mi,
        Some(beta) => Objective::Elbo { beta },
    };
    let trained = optimize(&sender, &receiver, &src, objective, s.steps, s.learning_rate)?;
    let mut out = RunOutcome::default();
    match cfg.format {
        OutputFormat::Csv => {
            let header = csv_header(cfg)?;
            let refs: Vec<(&str, String)> = header.iter().map(|(k, v)| (*k, v.clone())).collect();
            write(&cfg.output_dir, "curve.csv", &curve_csv(&trained.curve, &refs), &mut out)?;
        }
        OutputFormat::Jsonl => {
            let mut text = json_line(&cfg.provenance())?;
            for p in &trained.curve {
                text.push_str(&json_line(p)?);
            }
            write(&cfg.output_dir, "curve.jsonl", &text, &mut out)?;
        }
    }
    let summary = serde_json::json!({
        "provenance": cfg.provenance(),
        "final_objective": trained.curve.last().map(|p| p.objective),
        "mutual_information": mutual_information(&trained.sender, &src)?,
        "source_entropy": src.dist.entropy(),
        "max_decrease": trained.max_decrease,
    });
    write(&cfg.output_dir, "summary.json", &serde_json::to_string_pretty(&summary)?, &mut out)?;
    Ok(out)
}

fn load_environment(cfg: &ExperimentConfig) -> Result<MessageMdp> {
    match &cfg.environment {
        Some(env) if env.mdp.is_some() => {
            MessageMdp::from_json(&fs::read_to_string(env.mdp.as_ref().unwrap())?)
        }
        Some(env) => env.meet_at_goal.clone().unwrap_or_default().build(),
        None => MeetAtGoal::default().build(),
    }
}

fn run_marl_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let marl = cfg.marl.as_ref().ok_or_else(|| config("missing [marl]"))?;
    let mdp = load_environment(cfg)?;
    let run = run_marl(marl, &mdp)?;
    let mut out = RunOutcome::default();
    match cfg.format {
        OutputFormat::Csv => {
            let header = csv_header(cfg)?;
            let refs: Vec<(&str, String)> = header.iter().map(|(k, v)| (*k, v.clone())).collect();
            write(&cfg.output_dir, "curve.csv", &run.curve_csv(&refs), &mut out)?;
        }
        OutputFormat::Jsonl => {
            let mut text = json_line(&cfg.provenance())?;
            for r in &run.curve {
                text.push_str(&json_line(r)?);
            }
            write(&cfg.output_dir, "curve.jsonl", &text, &mut out)?;
        }
    }
    let summary = serde_json::json!({
        "provenance": cfg.provenance(),
        "mean_group_return": run.mean_group_return(),
        "iterations": run.curve.len(),
    });
    write(&cfg.output_dir, "summary.json", &serde_json::to_string_pretty(&summary)?, &mut out)?;
    Ok(out)
}

fn temporal_inputs(
    t: &TemporalSettings,
    seed: u64,
) -> Result<(Vec<TemporalAgentModel>, SequenceDataset)> {
    let fresh = || {
        TemporalAgentModel::new(t.n_signs, t.n_states, t.n_features, t.alpha_transition, t.alpha_theta)
    };
    let models = vec![fresh()?, fresh()?];
    let data = match &t.data {
        Some(p) => SequenceDataset::from_json(&fs::read_to_string(p)?)?,
        None => {
            // sequences from randomly perturbed generator models
            let mut rng = RandomSource::new(seed).stream(&[0x7E]);
            let mut gen = models.clone();
            for row in gen.iter_mut().flat_map(|m| m.transitions.iter_mut().flatten().chain(m.theta.iter_mut())) {
                for i in 0..row.len() {
                    row.add(i, (8.0 * rng.uniform()).floor());
                }
            }
            generate_sequences(&gen, &SignPrior::uniform(t.n_signs), t.n_objects, t.horizon, t.tokens, seed)?.0
        }
    };
    Ok((models, data))
}

fn run_temporal(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let t = cfg.temporal.as_ref().ok_or_else(|| config("missing [temporal]"))?;
    let (models, data) = temporal_inputs(t, cfg.seed)?;
    let tc = TemporalConfig {
        rounds: t.rounds,
        seed: cfg.seed,
        mode: t.mode,
        learn: t.learn,
    };
    let mut game = TemporalGame::new(tc, SignPrior::uniform(t.n_signs), models, data)?;
    let events = game.run()?;
    let mut text = json_line(&cfg.provenance())?;
    for e in &events {
        text.push_str(&json_line(e)?);
    }
    let mut out = RunOutcome::default();
    write(&cfg.output_dir, "trace.jsonl", &text, &mut out)?;
    let summary = serde_json::json!({
        "provenance": cfg.provenance(),
        "signs": game.signs,
        "ari": adjusted_rand_index(&game.signs[0], &game.signs[1]).ok(),
        "agreement": agreement_rate(&game.signs[0], &game.signs[1]).ok(),
        "audit": game.audit(),
    });
    write(&cfg.output_dir, "summary.json", &serde_json::to_string_pretty(&summary)?, &mut out)?;
    Ok(out)
}

/// Runs the oracle battery and writes `report.json`.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    fs::create_dir_all(&cfg.output_dir)?;
    let reports = run_battery()?;
    let failed = reports.iter().filter(|r| !r.pass).count();
    eprint!("{}", failure_summary(&reports));
    let doc = serde_json::json!({
        "schema_version": crate::verify::REPORT_SCHEMA_VERSION,
        "provenance": cfg.provenance(),
        "passed": reports.len() - failed,
        "failed": failed,
        "reports": reports,
    });
    let mut out = RunOutcome {
        property_failures: failed,
        ..Default::default()
    };
    write(&cfg.output_dir, "report.json", &serde_json::to_string_pretty(&doc)?, &mut out)?;
    Ok(out)
}

/// One line per failing report, for the terminal.
pub fn failure_summary(reports: &[OracleReport]) -> String {
    let mut s = String::new();
    for r in reports.iter().filter(|r| !r.pass) {
        writeln!(s, "FAIL {} [{}] value={} tolerance={}", r.metric, r.instance_hash, r.value, r.tolerance).unwrap();
    }
    s
}
