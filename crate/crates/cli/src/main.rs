use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spanrules_core::corpus::{load_corpus, load_phrase_lexicon, PhraseLexicon};
use spanrules_core::driver::{
    boundary_prf, execute_run, explain_run, gold_spans, micro_prf, records_from_jsonl,
    records_to_jsonl, rule_entities, to_records, write_explanations, BootstrapConfig, LabeledSpan,
    PredictionRecord, Prepared, RunPaths,
};
use spanrules_core::rules::RuleSet;
use spanrules_core::synthetic::{generate, SyntheticConfig};

#[derive(Parser)]
#[command(
    name = "spanrules",
    version,
    about = "Bootstrapped compound-rule entity tagging"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bootstrap rules and a tagger from seeds and write a run directory.
    Run {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        phrases: Option<PathBuf>,
        /// JSON with bootstrap configuration keys; missing keys take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Export predictions of the learned rules instead of the tagger.
        #[arg(long)]
        rules_only: bool,
    },
    /// Label a corpus with a rule file and write predictions JSONL.
    ApplyRules {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        phrases: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against a gold corpus.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Ignore labels and match spans only.
        #[arg(long)]
        boundary_only: bool,
    },
    /// Pair each prediction of a finished run with the rules supporting it.
    Explain {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic corpus with planted rules (train/dev/test, seeds, phrases).
    Synthesize {
        #[arg(long)]
        out: PathBuf,
        /// JSON with generator settings; missing keys take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// A failure tagged with the phase it happened in.
struct Failure {
    phase: String,
    message: String,
}

impl Failure {
    fn new(phase: &str, message: impl std::fmt::Display) -> Self {
        Self {
            phase: phase.to_string(),
            message: message.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path, phase: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(phase, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str, phase: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::new(phase, format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<BootstrapConfig, Failure> {
    let Some(path) = path else {
        return Ok(BootstrapConfig::default());
    };
    let config: BootstrapConfig = serde_json::from_str(&read(path, "config")?)
        .map_err(|e| Failure::new("config", format!("{}: {e}", path.display())))?;
    config.validate().map_err(|e| Failure::new("config", e))?;
    Ok(config)
}

fn load_phrases(path: Option<&Path>) -> Result<PhraseLexicon, Failure> {
    path.map(load_phrase_lexicon)
        .transpose()
        .map(Option::unwrap_or_default)
        .map_err(|e| Failure::new("setup", e))
}

fn run(
    train: PathBuf,
    dev: Option<PathBuf>,
    seeds: PathBuf,
    phrases: Option<PathBuf>,
    config: Option<PathBuf>,
    out: PathBuf,
    rules_only: bool,
) -> Outcome {
    let mut config = load_config(config.as_deref())?;
    config.rules_only |= rules_only;
    let inputs = RunPaths {
        train,
        dev,
        seeds,
        phrases,
    };
    let artifacts = execute_run(&config, &inputs, &out).map_err(|e| Failure {
        phase: match e.iteration {
            0 => e.phase.to_string(),
            i => format!("iteration {i}, {}", e.phase),
        },
        message: e.message,
    })?;
    let best = artifacts.best_iteration;
    if let Some(m) = artifacts
        .reports
        .get(best.saturating_sub(1))
        .and_then(|r| r.dev.as_ref())
    {
        println!(
            "best iteration {best}: dev P {:.4} R {:.4} F1 {:.4}",
            m.precision, m.recall, m.f1
        );
    }
    println!(
        "{} rules, {} predictions written to {}",
        artifacts.rules.len(),
        artifacts.predictions.len(),
        out.display()
    );
    Ok(())
}

fn apply(
    rules: PathBuf,
    corpus: PathBuf,
    phrases: Option<PathBuf>,
    config: Option<PathBuf>,
    out: PathBuf,
) -> Outcome {
    let config = load_config(config.as_deref())?;
    let rules = RuleSet::from_jsonl(&read(&rules, "setup")?)
        .map_err(|e| Failure::new("setup", format!("{}: {e}", rules.display())))?;
    let corpus = load_corpus(&corpus).map_err(|e| Failure::new("setup", e))?;
    let lexicon = load_phrases(phrases.as_deref())?;
    let prepared = Prepared::new(&corpus, &lexicon, &config);
    let entities = rule_entities(
        &rules,
        &prepared.patterns,
        &prepared.index,
        config.tie_policy,
        config.decoding,
    );
    let records = to_records(&entities, &corpus, &rules.labels);
    write(&out, &records_to_jsonl(&records), "output")?;
    println!("{} predictions written to {}", records.len(), out.display());
    Ok(())
}

fn eval(pred: PathBuf, gold: PathBuf, boundary_only: bool) -> Outcome {
    let records: Vec<PredictionRecord> = records_from_jsonl(&read(&pred, "setup")?)
        .map_err(|e| Failure::new("setup", format!("{}: {e}", pred.display())))?;
    let corpus = load_corpus(&gold).map_err(|e| Failure::new("setup", e))?;
    if !corpus.has_gold() {
        return Err(Failure::new(
            "eval",
            format!("{} has no gold annotations", gold.display()),
        ));
    }
    let predicted: Vec<LabeledSpan> = records.iter().map(PredictionRecord::key).collect();
    let gold = gold_spans(&corpus);
    let m = if boundary_only {
        boundary_prf(&predicted, &gold)
    } else {
        micro_prf(&predicted, &gold)
    };
    println!(
        "{}",
        serde_json::to_string(&m).map_err(|e| Failure::new("output", e))?
    );
    Ok(())
}

fn explain(run: PathBuf, out: PathBuf) -> Outcome {
    let explanations =
        explain_run(&run).map_err(|e| Failure::new(&e.phase.to_string(), e.message))?;
    write_explanations(&out, &explanations)
        .map_err(|e| Failure::new("output", format!("{}: {e}", out.display())))?;
    let model_only = explanations.iter().filter(|e| e.model_only).count();
    println!(
        "{} explanations ({model_only} model-only) written to {}",
        explanations.len(),
        out.display()
    );
    Ok(())
}

fn synthesize(out: PathBuf, config: Option<PathBuf>) -> Outcome {
    let cfg: SyntheticConfig = match config {
        Some(p) => serde_json::from_str(&read(&p, "config")?)
            .map_err(|e| Failure::new("config", format!("{}: {e}", p.display())))?,
        None => SyntheticConfig::default(),
    };
    let data = generate(&cfg);
    data.write(&out)
        .map_err(|e| Failure::new("output", format!("{}: {e}", out.display())))?;
    println!(
        "{}/{}/{} sentences, {} seeds, {} planted rules written to {}",
        data.train.sentences.len(),
        data.dev.sentences.len(),
        data.test.sentences.len(),
        data.seeds.len(),
        data.planted.len(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            train,
            dev,
            seeds,
            phrases,
            config,
            out,
            rules_only,
        } => run(train, dev, seeds, phrases, config, out, rules_only),
        Command::ApplyRules {
            rules,
            corpus,
            phrases,
            config,
            out,
        } => apply(rules, corpus, phrases, config, out),
        Command::Eval {
            pred,
            gold,
            boundary_only,
        } => eval(pred, gold, boundary_only),
        Command::Explain { run, out } => explain(run, out),
        Command::Synthesize { out, config } => synthesize(out, config),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error [{}]: {}", f.phase, f.message);
            ExitCode::FAILURE
        }
    }
}
