//! Run directory layout:
//!
//! ```text
//! config.json        configuration snapshot
//! rules.jsonl        seeds, then learned rules appended per iteration
//! reports.jsonl      one IterationReport per iteration
//! checkpoint.json    exported tagger parameters
//! predictions.jsonl  final predictions on the training corpus
//! explanations.jsonl rules supporting each prediction
//! run.json           input paths, labels and the exported iteration
//! ABORTED            present only when the run failed
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    bootstrap, explain, records_from_jsonl, records_to_jsonl, BootstrapConfig, DriverError,
    Explanation, IterationReport, Observer, Phase, Prepared, RunArtifacts,
};
use crate::corpus::{load_corpus, load_phrase_lexicon, load_seed_rules, PhraseLexicon};
use crate::rules::{rule_record_line, Rule, RuleSet};

pub const CONFIG_FILE: &str = "config.json";
pub const RULES_FILE: &str = "rules.jsonl";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const EXPLANATIONS_FILE: &str = "explanations.jsonl";
pub const MANIFEST_FILE: &str = "run.json";
pub const ABORT_MARKER: &str = "ABORTED";

/// Input files of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPaths {
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub seeds: PathBuf,
    pub phrases: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub inputs: RunPaths,
    pub labels: Vec<String>,
    pub iterations: usize,
    pub best_iteration: usize,
    pub rules_total: usize,
    pub predictions: usize,
}

fn io_err(phase: Phase, path: &Path, e: impl std::fmt::Display) -> DriverError {
    DriverError::new(0, phase, format!("{}: {e}", path.display()))
}

/// Writes run artifacts incrementally so a crash leaves usable partial output.
pub struct RunWriter {
    dir: PathBuf,
    rules: BufWriter<File>,
    reports: BufWriter<File>,
}

impl RunWriter {
    pub fn create(dir: &Path, config: &BootstrapConfig) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        let marker = dir.join(ABORT_MARKER);
        if marker.exists() {
            fs::remove_file(marker)?;
        }
        let mut cfg = serde_json::to_string_pretty(config).map_err(std::io::Error::other)?;
        cfg.push('\n');
        fs::write(dir.join(CONFIG_FILE), cfg)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            rules: BufWriter::new(File::create(dir.join(RULES_FILE))?),
            reports: BufWriter::new(File::create(dir.join(REPORTS_FILE))?),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn append_rules(&mut self, rules: &[Rule], labels: &[String]) -> std::io::Result<()> {
        for r in rules {
            writeln!(self.rules, "{}", rule_record_line(r, labels))?;
        }
        self.rules.flush()
    }

    pub fn finish(mut self, artifacts: &RunArtifacts, inputs: &RunPaths) -> std::io::Result<()> {
        self.rules.flush()?;
        self.reports.flush()?;
        let ck = serde_json::to_string(&artifacts.best_params.to_checkpoint())
            .map_err(std::io::Error::other)?;
        fs::write(self.dir.join(CHECKPOINT_FILE), ck + "\n")?;
        fs::write(
            self.dir.join(PREDICTIONS_FILE),
            records_to_jsonl(&artifacts.predictions),
        )?;
        write_explanations(&self.dir.join(EXPLANATIONS_FILE), &artifacts.explanations)?;
        let manifest = RunManifest {
            inputs: inputs.clone(),
            labels: artifacts.rules.labels.clone(),
            iterations: artifacts.reports.len(),
            best_iteration: artifacts.best_iteration,
            rules_total: artifacts.rules.len(),
            predictions: artifacts.predictions.len(),
        };
        let m = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        fs::write(self.dir.join(MANIFEST_FILE), m + "\n")
    }

    /// Leaves every expected file in place (empty if never written) plus the
    /// abort marker carrying the error.
    pub fn abort(mut self, error: &DriverError) -> std::io::Result<()> {
        self.rules.flush()?;
        self.reports.flush()?;
        for f in [CHECKPOINT_FILE, PREDICTIONS_FILE, EXPLANATIONS_FILE] {
            let p = self.dir.join(f);
            if !p.exists() {
                File::create(p)?;
            }
        }
        fs::write(self.dir.join(ABORT_MARKER), format!("{error}\n"))
    }
}

impl Observer for RunWriter {
    fn on_start(&mut self, seeds: &RuleSet) -> Result<(), String> {
        self.append_rules(&seeds.rules, &seeds.labels)
            .map_err(|e| e.to_string())
    }

    fn on_iteration(
        &mut self,
        report: &IterationReport,
        new_rules: &[Rule],
        labels: &[String],
    ) -> Result<(), String> {
        self.append_rules(new_rules, labels)
            .map_err(|e| e.to_string())?;
        let line = serde_json::to_string(report).map_err(|e| e.to_string())?;
        writeln!(self.reports, "{line}")
            .and_then(|_| self.reports.flush())
            .map_err(|e| e.to_string())
    }
}

pub fn write_explanations(path: &Path, explanations: &[Explanation]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in explanations {
        writeln!(
            w,
            "{}",
            serde_json::to_string(e).map_err(std::io::Error::other)?
        )?;
    }
    w.flush()
}

fn load_lexicon(path: Option<&Path>) -> Result<PhraseLexicon, DriverError> {
    match path {
        Some(p) => load_phrase_lexicon(p).map_err(|e| DriverError::new(0, Phase::Setup, e)),
        None => Ok(PhraseLexicon::default()),
    }
}

/// Loads inputs, runs the bootstrap loop and writes the run directory. On
/// failure after the directory exists, partial output and `ABORTED` remain.
pub fn execute_run(
    config: &BootstrapConfig,
    inputs: &RunPaths,
    out: &Path,
) -> Result<RunArtifacts, DriverError> {
    let mut writer = RunWriter::create(out, config).map_err(|e| io_err(Phase::Output, out, e))?;
    let result = run_with_writer(config, inputs, &mut writer);
    match result {
        Ok(artifacts) => {
            writer
                .finish(&artifacts, inputs)
                .map_err(|e| io_err(Phase::Output, out, e))?;
            Ok(artifacts)
        }
        Err(e) => {
            if let Err(io) = writer.abort(&e) {
                log::error!("could not write abort marker: {io}");
            }
            Err(e)
        }
    }
}

fn run_with_writer(
    config: &BootstrapConfig,
    inputs: &RunPaths,
    writer: &mut RunWriter,
) -> Result<RunArtifacts, DriverError> {
    let setup = |e: crate::corpus::CorpusError| DriverError::new(0, Phase::Setup, e);
    let train = load_corpus(&inputs.train).map_err(setup)?;
    let dev = inputs
        .dev
        .as_ref()
        .map(load_corpus)
        .transpose()
        .map_err(setup)?;
    let seeds = load_seed_rules(&inputs.seeds).map_err(setup)?;
    let lexicon = load_lexicon(inputs.phrases.as_deref())?;
    if let Some(d) = &dev {
        if d.dim != train.dim {
            return Err(DriverError::new(
                0,
                Phase::Setup,
                format!(
                    "dev embedding dimension {} differs from train {}",
                    d.dim, train.dim
                ),
            ));
        }
    }
    bootstrap(config, &train, dev.as_ref(), &seeds, &lexicon, writer)
}

/// Rebuilds explanations for a finished run from its directory and inputs.
pub fn explain_run(dir: &Path) -> Result<Vec<Explanation>, DriverError> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| io_err(Phase::Setup, &p, e))
    };
    let manifest: RunManifest = serde_json::from_str(&read(MANIFEST_FILE)?)
        .map_err(|e| DriverError::new(0, Phase::Setup, format!("{MANIFEST_FILE}: {e}")))?;
    let config: BootstrapConfig = serde_json::from_str(&read(CONFIG_FILE)?)
        .map_err(|e| DriverError::new(0, Phase::Setup, format!("{CONFIG_FILE}: {e}")))?;
    let rules = RuleSet::from_jsonl(&read(RULES_FILE)?)
        .map_err(|e| DriverError::new(0, Phase::Setup, format!("{RULES_FILE}: {e}")))?;
    let predictions = records_from_jsonl(&read(PREDICTIONS_FILE)?)
        .map_err(|e| DriverError::new(0, Phase::Setup, format!("{PREDICTIONS_FILE}: {e}")))?;
    let train =
        load_corpus(&manifest.inputs.train).map_err(|e| DriverError::new(0, Phase::Setup, e))?;
    let lexicon = load_lexicon(manifest.inputs.phrases.as_deref())?;
    let prepared = Prepared::new(&train, &lexicon, &config);
    Ok(explain(&predictions, &prepared, &rules))
}
