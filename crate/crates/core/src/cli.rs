//! Command-line orchestration: one configuration type, seven subcommands
//! (`synth`, `engineer`, `train`, `tune`, `evaluate`, `forecast`,
//! `compare`), and a manifest written per run recording the resolved
//! configuration plus a digest of every input file.
//!
//! Configuration is layered: built-in defaults, then an optional TOML file
//! (`--config`), then individual flags. All numeric artifacts are pure
//! functions of the resolved configuration and the input files, so a rerun
//! with the same manifest inputs is byte-identical; wall-clock timing is
//! kept out of them, in a separate `timing.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::fnn::{fnn_dataset, train_fnn_descending, FnnModel, FnnVariant};
use crate::data::io::{
    read_feeder_csv, read_regional_csv, read_transfer_csv, write_feeder_csv, write_regional_csv,
    write_transfer_csv,
};
use crate::data::{FeederYearRecord, RegionalTable, Season, TransferEvent};
use crate::document::{ModelDocument, ModelSpec, TrainingSummary};
use crate::error::{Error, Result};
use crate::eval::{comparison_grid, evaluate_ar2, evaluate_bottom_up, evaluate_model, EvalReport};
use crate::features::apply_virtual_feeders;
use crate::forecast::{build_scenario, chain_forecast, EconScenario};
use crate::net::{train_descending, CellKind, Mode, NetworkParams, OptimizerKind, TrainHyperparams};

/// How many fresh weight draws a stalled training gets before the flat run
/// is accepted as-is.
const DEAD_START_RESTARTS: u32 = 3;
use crate::pipeline::{engineer, EngineerConfig, EngineeredDataset};
use crate::synth::{generate_synthetic_grid, inject_load_transfers, plan_transfer_events, SynthConfig};
use crate::tune::{
    grid_search, random_search, Candidate, ParamValue, SearchDimension, SearchSpace, TrialScore,
};

/// Resolved settings for every subcommand. A TOML config file mirrors this
/// structure; command-line flags override individual fields.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    // inputs and outputs
    pub feeders_csv: PathBuf,
    pub regional_csv: PathBuf,
    /// Transfer log; absent means no load transfers are known.
    pub transfers_csv: Option<PathBuf>,
    pub out_dir: PathBuf,

    // feature engineering
    pub season: Season,
    pub mode: Mode,
    pub n_steps: usize,
    pub split_ratio: f64,
    pub pve_threshold: f64,
    /// Regional columns to reduce to components; empty means all of them.
    pub pca_columns: Vec<String>,
    pub include_der: bool,
    pub include_ev: bool,

    // model and training
    pub cell: CellKind,
    pub hidden_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub clip_norm: Option<f64>,
    pub seed: u64,

    // evaluation
    /// Width of the error-histogram bins, percentage points.
    pub error_bin_width: f64,

    // forecasting
    pub horizon: usize,
    /// Margin added beyond the historical seasonal extreme, °C.
    pub temp_margin: f64,

    // hyperparameter search
    pub tune_cells: Vec<CellKind>,
    pub tune_hidden_widths: Vec<usize>,
    pub tune_n_steps: Vec<usize>,
    pub workers: usize,

    // synthetic data
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            feeders_csv: "feeders.csv".into(),
            regional_csv: "regional.csv".into(),
            transfers_csv: None,
            out_dir: "out".into(),
            season: Season::Summer,
            mode: Mode::ManyToOne,
            n_steps: 3,
            split_ratio: 0.8,
            pve_threshold: 0.95,
            pca_columns: Vec::new(),
            include_der: false,
            include_ev: false,
            cell: CellKind::Lstm,
            hidden_width: 6,
            epochs: 200,
            batch_size: 10,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            clip_norm: None,
            seed: 0,
            error_bin_width: 2.0,
            horizon: 10,
            temp_margin: 1.0,
            tune_cells: vec![CellKind::Lstm, CellKind::Gru],
            tune_hidden_widths: vec![6, 12],
            tune_n_steps: vec![3],
            workers: 1,
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::domain(format!(
                "split ratio {} outside (0, 1)",
                self.split_ratio
            )));
        }
        if !(self.pve_threshold > 0.0 && self.pve_threshold <= 1.0) {
            return Err(Error::domain(format!(
                "variance threshold {} outside (0, 1]",
                self.pve_threshold
            )));
        }
        if self.n_steps == 0 || self.hidden_width == 0 {
            return Err(Error::domain("n_steps and hidden width must be positive"));
        }
        if !(self.error_bin_width > 0.0) {
            return Err(Error::domain("error bin width must be positive"));
        }
        if self.workers == 0 {
            return Err(Error::domain("worker count must be at least 1"));
        }
        if self.tune_cells.is_empty()
            || self.tune_hidden_widths.is_empty()
            || self.tune_n_steps.is_empty()
        {
            return Err(Error::domain("every search dimension needs at least one value"));
        }
        Ok(())
    }

    fn engineer_config(&self) -> EngineerConfig {
        EngineerConfig {
            season: self.season,
            mode: self.mode,
            n_steps: self.n_steps,
            split_ratio: self.split_ratio,
            seed: self.seed,
            pve_threshold: self.pve_threshold,
            pca_columns: self.pca_columns.clone(),
            include_der: self.include_der,
            include_ev: self.include_ev,
        }
    }

    fn hyperparams(&self) -> TrainHyperparams {
        TrainHyperparams {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            optimizer: self.optimizer,
            clip_norm: self.clip_norm,
        }
    }
}

/// Flags shared by every subcommand; each one overrides the matching
/// config-file field.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// TOML configuration file; keys mirror the run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub season: Option<Season>,
    #[arg(long, global = true, value_enum)]
    pub cell: Option<CellKind>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Explained-variance threshold for component selection.
    #[arg(long, global = true)]
    pub pve: Option<f64>,
    /// Margin beyond the historical seasonal temperature extreme, °C.
    #[arg(long, global = true)]
    pub temp_margin: Option<f64>,
    /// Forecast horizon, years.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub n_steps: Option<usize>,
    #[arg(long, global = true)]
    pub hidden_width: Option<usize>,
}

#[derive(Parser, Debug)]
#[command(
    name = "loadcast",
    version,
    about = "Feeder peak-load forecasting: synthesize, engineer, train, tune, evaluate, forecast, compare"
)]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic grid (feeder, regional and transfer CSVs)
    Synth,
    /// Fit the feature pipeline and write the engineered dataset
    Engineer,
    /// Train one model and score it on the held-out split
    Train {
        /// Engineered dataset from a previous `engineer` run; when absent
        /// the CSVs are engineered in memory first.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Train a feed-forward baseline instead of the recurrent network.
        #[arg(long, value_enum)]
        fnn: Option<FnnVariant>,
    },
    /// Search cell/width/steps combinations for the lowest test error
    Tune {
        /// Random-search trial count; omit for the exhaustive grid.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Score a saved model or a baseline on the held-out split
    Evaluate {
        /// Path to a model document, or one of `bottom-up`, `ar2`.
        #[arg(long)]
        model: String,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Report label; defaults to one derived from the model.
        #[arg(long)]
        label: Option<String>,
    },
    /// Chain per-feeder forecasts under a temperature scenario
    Forecast {
        /// Trained model document.
        #[arg(long)]
        model: PathBuf,
    },
    /// Merge evaluation reports into one comparison grid
    Compare {
        /// Report JSON files from `train` or `evaluate` runs.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

/// Applies the config file and flag layers and returns the final settings.
pub fn resolve_config(overrides: &Overrides) -> Result<RunConfig> {
    let mut config = match &overrides.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = overrides.season {
        config.season = v;
        config.synth.season = v;
    }
    if let Some(v) = overrides.cell {
        config.cell = v;
    }
    if let Some(v) = overrides.mode {
        config.mode = v;
    }
    if let Some(v) = overrides.epochs {
        config.epochs = v;
    }
    if let Some(v) = overrides.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = overrides.seed {
        config.seed = v;
        config.synth.seed = v;
    }
    if let Some(v) = &overrides.out {
        config.out_dir = v.clone();
    }
    if let Some(v) = overrides.pve {
        config.pve_threshold = v;
    }
    if let Some(v) = overrides.temp_margin {
        config.temp_margin = v;
    }
    if let Some(v) = overrides.horizon {
        config.horizon = v;
    }
    if let Some(v) = overrides.n_steps {
        config.n_steps = v;
        config.synth.n_steps = v;
    }
    if let Some(v) = overrides.hidden_width {
        config.hidden_width = v;
    }
    config.check()?;
    Ok(config)
}

fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// What every run records about itself: the subcommand, the resolved
/// configuration (seeds included), and a digest of each input file.
#[derive(Serialize)]
struct Manifest<'a> {
    command: String,
    config: &'a RunConfig,
    inputs: BTreeMap<String, String>,
}

fn write_manifest(config: &RunConfig, command: &str, inputs: &[PathBuf]) -> Result<()> {
    let mut digests = BTreeMap::new();
    for path in inputs {
        digests.insert(path.display().to_string(), digest_file(path)?);
    }
    let manifest = Manifest {
        command: command.to_string(),
        config,
        inputs: digests,
    };
    write_json(&config.out_dir.join("manifest.json"), &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::domain(format!("serialization failed: {e}")))?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_out_dir(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))
}

struct LoadedInputs {
    feeders: Vec<FeederYearRecord>,
    regional: RegionalTable,
    transfers: Vec<TransferEvent>,
    paths: Vec<PathBuf>,
}

fn load_inputs(config: &RunConfig) -> Result<LoadedInputs> {
    let feeders = read_feeder_csv(&config.feeders_csv, config.season)?;
    let regional = read_regional_csv(&config.regional_csv, config.season)?;
    let mut paths = vec![config.feeders_csv.clone(), config.regional_csv.clone()];
    let transfers = match &config.transfers_csv {
        Some(p) => {
            paths.push(p.clone());
            read_transfer_csv(p)?
        }
        None => Vec::new(),
    };
    Ok(LoadedInputs { feeders, regional, transfers, paths })
}

/// Loads a previously engineered dataset, or engineers one in memory from
/// the configured CSVs. Returns the dataset and the input files involved.
fn load_or_engineer(
    config: &RunConfig,
    data: &Option<PathBuf>,
) -> Result<(EngineeredDataset, Vec<PathBuf>)> {
    match data {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let ds: EngineeredDataset =
                serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
            ds.pipeline.check()?;
            Ok((ds, vec![path.clone()]))
        }
        None => {
            let inputs = load_inputs(config)?;
            let ds = engineer(
                &inputs.feeders,
                &inputs.regional,
                &inputs.transfers,
                &config.engineer_config(),
            )?;
            Ok((ds, inputs.paths))
        }
    }
}

fn run_synth(config: &RunConfig) -> Result<()> {
    let (regional, feeders, truth) = generate_synthetic_grid(&config.synth)?;
    let planned = plan_transfer_events(&config.synth, &feeders)?;
    let (feeders, log) = inject_load_transfers(feeders, &planned)?;

    ensure_out_dir(config)?;
    let season = config.synth.season;
    let tagged: Vec<(Season, &FeederYearRecord)> = feeders.iter().map(|r| (season, r)).collect();
    write_feeder_csv(&config.out_dir.join("feeders.csv"), &tagged)?;
    write_regional_csv(&config.out_dir.join("regional.csv"), &[(season, &regional)])?;
    write_transfer_csv(&config.out_dir.join("transfers.csv"), &log)?;
    write_json(&config.out_dir.join("truth.json"), &truth)?;
    write_manifest(config, "synth", &[])?;

    println!(
        "synthesized {} feeders x {} years ({}), {} transfer events -> {}",
        config.synth.n_feeders,
        config.synth.years,
        season,
        log.len(),
        config.out_dir.display()
    );
    Ok(())
}

fn run_engineer(config: &RunConfig) -> Result<()> {
    let inputs = load_inputs(config)?;
    let ds = engineer(
        &inputs.feeders,
        &inputs.regional,
        &inputs.transfers,
        &config.engineer_config(),
    )?;

    ensure_out_dir(config)?;
    write_json(&config.out_dir.join("engineered.json"), &ds)?;
    write_json(&config.out_dir.join("pipeline.json"), &ds.pipeline)?;
    write_manifest(config, "engineer", &inputs.paths)?;

    println!(
        "engineered {} train / {} test records, {} features per step, {} components, {} virtual feeders -> {}",
        ds.split.train.len(),
        ds.split.test.len(),
        ds.pipeline.engineered_width(),
        ds.pipeline.selected_components(),
        ds.groups.len(),
        config.out_dir.display()
    );
    Ok(())
}

fn train_sequence_model(
    config: &RunConfig,
    ds: &EngineeredDataset,
) -> Result<(ModelSpec, Vec<f64>, f64)> {
    let net = NetworkParams::init(
        config.cell,
        config.mode,
        config.n_steps,
        ds.pipeline.engineered_width(),
        config.hidden_width,
        config.seed,
    )?;
    let examples: Vec<_> = ds.split.train.iter().map(|s| s.to_example()).collect();
    let started = Instant::now();
    let (trained, losses) = train_descending(&net, &examples, &config.hyperparams(), DEAD_START_RESTARTS)?;
    let seconds = started.elapsed().as_secs_f64();
    Ok((ModelSpec::Sequence(trained), losses, seconds))
}

fn train_fnn_model(
    config: &RunConfig,
    ds: &EngineeredDataset,
    variant: FnnVariant,
) -> Result<(ModelSpec, Vec<f64>, f64)> {
    let width = ds.pipeline.engineered_width();
    let input_width = match variant {
        FnnVariant::OneYear => width,
        FnnVariant::ThreeYear => width * ds.pipeline.n_steps,
    };
    let model = FnnModel::init(input_width, &variant.default_hidden(), config.seed)?;
    let data = fnn_dataset(&ds.split.train, variant)?;
    let started = Instant::now();
    let (trained, losses) = train_fnn_descending(&model, &data, &config.hyperparams(), DEAD_START_RESTARTS)?;
    let seconds = started.elapsed().as_secs_f64();
    Ok((ModelSpec::FeedForward(trained), losses, seconds))
}

#[derive(Serialize)]
struct TrainingTrace<'a> {
    epoch_losses: &'a [f64],
}

#[derive(Serialize)]
struct Timing {
    wall_seconds: f64,
}

fn run_train(config: &RunConfig, data: &Option<PathBuf>, fnn: Option<FnnVariant>) -> Result<()> {
    let (ds, input_paths) = load_or_engineer(config, data)?;
    if ds.pipeline.season != config.season {
        return Err(Error::consistency(format!(
            "dataset was engineered for {} but the run asks for {}",
            ds.pipeline.season, config.season
        )));
    }
    if fnn.is_none() && ds.pipeline.mode != config.mode {
        return Err(Error::consistency(format!(
            "dataset was engineered for {} targets but the run asks for {}",
            ds.pipeline.mode, config.mode
        )));
    }

    let (label, (spec, losses, seconds)) = match fnn {
        None => (
            format!("{}-{}", config.cell, config.mode),
            train_sequence_model(config, &ds)?,
        ),
        Some(variant) => (format!("fnn-{variant}"), train_fnn_model(config, &ds, variant)?),
    };

    let summary = TrainingSummary {
        epochs: config.epochs,
        batch_size: config.batch_size,
        learning_rate: config.learning_rate,
        optimizer: config.optimizer.to_string(),
        seed: config.seed,
        final_epoch_loss: losses.last().copied(),
    };
    let doc = ModelDocument::new(spec, ds.pipeline.clone(), Some(summary));
    doc.check()?;

    let report = evaluate_model(
        &doc.model,
        &ds.pipeline,
        &ds.split.test,
        &label,
        Some(config.season),
        config.error_bin_width,
        None,
    )?;

    ensure_out_dir(config)?;
    doc.save(&config.out_dir.join("model.json"))?;
    write_json(&config.out_dir.join("report.json"), &report)?;
    write_text(&config.out_dir.join("report.txt"), &report.render_text())?;
    write_json(&config.out_dir.join("training.json"), &TrainingTrace { epoch_losses: &losses })?;
    write_json(&config.out_dir.join("timing.json"), &Timing { wall_seconds: seconds })?;
    write_manifest(config, "train", &input_paths)?;

    println!("{}", report.render_text());
    println!("trained in {seconds:.2}s -> {}", config.out_dir.display());
    Ok(())
}

fn cell_from_text(text: &str) -> Result<CellKind> {
    <CellKind as clap::ValueEnum>::from_str(text, false)
        .map_err(|_| Error::domain(format!("unknown cell kind {text:?}")))
}

fn run_tune(config: &RunConfig, trials: Option<usize>) -> Result<()> {
    let inputs = load_inputs(config)?;
    let space = SearchSpace {
        dimensions: vec![
            SearchDimension {
                name: "cell".into(),
                values: config.tune_cells.iter().map(|c| ParamValue::Text(c.to_string())).collect(),
            },
            SearchDimension {
                name: "hidden_width".into(),
                values: config
                    .tune_hidden_widths
                    .iter()
                    .map(|&w| ParamValue::Int(w as i64))
                    .collect(),
            },
            SearchDimension {
                name: "n_steps".into(),
                values: config.tune_n_steps.iter().map(|&n| ParamValue::Int(n as i64)).collect(),
            },
        ],
    };

    let scorer = |candidate: &Candidate| -> Result<TrialScore> {
        let cell = cell_from_text(candidate.get_text("cell")?)?;
        let hidden_width = candidate.get_int("hidden_width")? as usize;
        let n_steps = candidate.get_int("n_steps")? as usize;
        let mut econfig = config.engineer_config();
        econfig.n_steps = n_steps;
        let ds = engineer(&inputs.feeders, &inputs.regional, &inputs.transfers, &econfig)?;
        let net = NetworkParams::init(
            cell,
            config.mode,
            n_steps,
            ds.pipeline.engineered_width(),
            hidden_width,
            config.seed,
        )?;
        let params = net.parameter_count();
        let examples: Vec<_> = ds.split.train.iter().map(|s| s.to_example()).collect();
        let (trained, _) = train_descending(&net, &examples, &config.hyperparams(), DEAD_START_RESTARTS)?;
        let report = evaluate_model(
            &ModelSpec::Sequence(trained),
            &ds.pipeline,
            &ds.split.test,
            "trial",
            Some(config.season),
            config.error_bin_width,
            None,
        )?;
        Ok(TrialScore { score: report.mape, trainable_params: params })
    };

    let outcome = match trials {
        Some(n) => random_search(&space, n, scorer, config.seed, config.workers)?,
        None => grid_search(&space, scorer, config.workers)?,
    };

    ensure_out_dir(config)?;
    write_json(&config.out_dir.join("scoreboard.json"), &outcome)?;
    write_text(&config.out_dir.join("scoreboard.txt"), &outcome.render_text())?;
    write_manifest(config, "tune", &inputs.paths)?;

    print!("{}", outcome.render_text());
    println!(
        "best: {} (test MAPE {:.4}%, {} trainable parameters) -> {}",
        outcome.best.describe(),
        outcome.best_score.score,
        outcome.best_score.trainable_params,
        config.out_dir.display()
    );
    Ok(())
}

fn run_evaluate(
    config: &RunConfig,
    model: &str,
    data: &Option<PathBuf>,
    label: &Option<String>,
) -> Result<()> {
    let (ds, mut input_paths) = load_or_engineer(config, data)?;
    let mut report = match model {
        "bottom-up" => {
            evaluate_bottom_up(&ds.pipeline, &ds.split.test, Some(config.season), config.error_bin_width)?
        }
        "ar2" | "autoregressive" => {
            let inputs = load_inputs(config)?;
            for p in &inputs.paths {
                if !input_paths.contains(p) {
                    input_paths.push(p.clone());
                }
            }
            let (resolved, _) = apply_virtual_feeders(&inputs.feeders, &inputs.transfers)?;
            evaluate_ar2(&resolved, &ds.split.test, Some(config.season), config.error_bin_width)?
        }
        path => {
            let path = PathBuf::from(path);
            let doc = ModelDocument::load(&path)?;
            if doc.pipeline != ds.pipeline {
                return Err(Error::consistency(
                    "model was trained with a different feature pipeline than this dataset; \
                     evaluate against the dataset from the same engineer run"
                        .to_string(),
                ));
            }
            input_paths.push(path.clone());
            evaluate_model(
                &doc.model,
                &ds.pipeline,
                &ds.split.test,
                &doc.model.label(),
                Some(config.season),
                config.error_bin_width,
                None,
            )?
        }
    };
    if let Some(label) = label {
        report.label = label.clone();
    }

    ensure_out_dir(config)?;
    write_json(&config.out_dir.join("report.json"), &report)?;
    write_text(&config.out_dir.join("report.txt"), &report.render_text())?;
    write_manifest(config, "evaluate", &input_paths)?;

    println!("{}", report.render_text());
    Ok(())
}

#[derive(Serialize)]
struct ScenarioNote {
    season: Season,
    scenario_temperature: f64,
    temp_margin: f64,
    horizon: usize,
}

fn run_forecast(config: &RunConfig, model: &Path) -> Result<()> {
    let doc = ModelDocument::load(model)?;
    if doc.pipeline.season != config.season {
        return Err(Error::consistency(format!(
            "model was trained on {} data but the run asks for {}",
            doc.pipeline.season, config.season
        )));
    }
    let inputs = load_inputs(config)?;
    let (resolved, _) = apply_virtual_feeders(&inputs.feeders, &inputs.transfers)?;
    let (extended, scenario_temp) = build_scenario(
        &inputs.regional,
        config.season,
        config.temp_margin,
        config.horizon,
        &EconScenario::RepeatLast,
    )?;

    let mut by_feeder: BTreeMap<&str, Vec<FeederYearRecord>> = BTreeMap::new();
    for rec in &resolved {
        by_feeder.entry(rec.feeder_id.as_str()).or_default().push(rec.clone());
    }

    let mut rows: Vec<(String, i32, f64)> = Vec::new();
    let mut skipped = 0usize;
    for (id, history) in &by_feeder {
        let result = chain_forecast(
            |steps| doc.model.predict_window(steps),
            &doc.pipeline,
            history,
            &extended,
            config.horizon,
        );
        match result {
            Ok(forecasts) => {
                for f in forecasts {
                    rows.push((id.to_string(), f.year, f.peak));
                }
            }
            Err(e) => {
                log::warn!("feeder {id} skipped: {e}");
                skipped += 1;
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::domain(format!(
            "no feeder could be forecast ({skipped} skipped)"
        )));
    }

    ensure_out_dir(config)?;
    let csv_path = config.out_dir.join("forecast.csv");
    let mut writer = csv::Writer::from_path(&csv_path).map_err(|e| {
        Error::parse(&csv_path, e.to_string())
    })?;
    writer
        .write_record(["feeder_id", "year", "forecast_peak_A"])
        .and_then(|_| {
            rows.iter().try_for_each(|(id, year, peak)| {
                writer.write_record([id.as_str(), &year.to_string(), &format!("{peak:.6}")])
            })
        })
        .map_err(|e| Error::parse(&csv_path, e.to_string()))?;
    writer.flush().map_err(|e| Error::io(&csv_path, e))?;

    write_json(
        &config.out_dir.join("scenario.json"),
        &ScenarioNote {
            season: config.season,
            scenario_temperature: scenario_temp,
            temp_margin: config.temp_margin,
            horizon: config.horizon,
        },
    )?;
    let mut manifest_inputs = inputs.paths.clone();
    manifest_inputs.push(model.to_path_buf());
    write_manifest(config, "forecast", &manifest_inputs)?;

    println!(
        "forecast {} feeders x {} years at scenario temperature {:.1} C ({} skipped) -> {}",
        by_feeder.len() - skipped,
        config.horizon,
        scenario_temp,
        skipped,
        config.out_dir.display()
    );
    Ok(())
}

fn run_compare(config: &RunConfig, report_paths: &[PathBuf]) -> Result<()> {
    let mut reports: Vec<EvalReport> = Vec::with_capacity(report_paths.len());
    for path in report_paths {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: EvalReport =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        report.check()?;
        reports.push(report);
    }
    let grid = comparison_grid(&reports);

    ensure_out_dir(config)?;
    write_text(&config.out_dir.join("comparison.txt"), &grid)?;
    write_manifest(config, "compare", report_paths)?;

    print!("{grid}");
    Ok(())
}

/// Executes one parsed command line. Errors bubble up for `main` to print.
pub fn run(cli: Cli) -> Result<()> {
    let config = resolve_config(&cli.overrides)?;
    match &cli.command {
        Command::Synth => run_synth(&config),
        Command::Engineer => run_engineer(&config),
        Command::Train { data, fnn } => run_train(&config, data, *fnn),
        Command::Tune { trials } => run_tune(&config, *trials),
        Command::Evaluate { model, data, label } => run_evaluate(&config, model, data, label),
        Command::Forecast { model } => run_forecast(&config, model),
        Command::Compare { reports } => run_compare(&config, reports),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip_through_toml() {
        let config = RunConfig::default();
        config.check().unwrap();
        let text = toml::to_string_pretty(&config).unwrap();
        let parsed: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed.n_steps, config.n_steps);
        assert_eq!(parsed.synth.n_feeders, config.synth.n_feeders);
        assert_eq!(parsed.tune_hidden_widths, config.tune_hidden_widths);
    }

    #[test]
    fn partial_config_files_fill_from_defaults() {
        let parsed: RunConfig = toml::from_str("seed = 9\nhidden_width = 12\n").unwrap();
        assert_eq!(parsed.seed, 9);
        assert_eq!(parsed.hidden_width, 12);
        assert_eq!(parsed.epochs, RunConfig::default().epochs);
    }

    #[test]
    fn flags_override_config_fields() {
        let overrides = Overrides {
            seed: Some(77),
            season: Some(Season::Winter),
            epochs: Some(3),
            ..Overrides::default()
        };
        let config = resolve_config(&overrides).unwrap();
        assert_eq!(config.seed, 77);
        assert_eq!(config.synth.seed, 77, "seed flag reaches the generator");
        assert_eq!(config.season, Season::Winter);
        assert_eq!(config.synth.season, Season::Winter);
        assert_eq!(config.epochs, 3);
    }

    #[test]
    fn bad_values_are_rejected() {
        let config = RunConfig { split_ratio: 1.0, ..RunConfig::default() };
        assert!(config.check().is_err());
        let config = RunConfig { pve_threshold: 0.0, ..RunConfig::default() };
        assert!(config.check().is_err());
        let config = RunConfig { workers: 0, ..RunConfig::default() };
        assert!(config.check().is_err());
        let config = RunConfig { tune_n_steps: vec![], ..RunConfig::default() };
        assert!(config.check().is_err());
    }

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from([
            "loadcast", "train", "--cell", "gru", "--mode", "many-to-one", "--epochs", "200",
            "--batch-size", "10", "--seed", "7",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::Train { .. }));
        let config = resolve_config(&cli.overrides).unwrap();
        assert_eq!(config.cell, CellKind::Gru);
        assert_eq!(config.epochs, 200);
        assert_eq!(config.batch_size, 10);
        assert_eq!(config.seed, 7);

        let cli = Cli::try_parse_from(["loadcast", "evaluate", "--model", "bottom-up"]).unwrap();
        assert!(matches!(cli.command, Command::Evaluate { .. }));

        assert!(Cli::try_parse_from(["loadcast", "unknown"]).is_err());
        assert!(Cli::try_parse_from(["loadcast", "compare"]).is_err(), "needs report paths");
    }

    #[test]
    fn cell_text_round_trips() {
        assert_eq!(cell_from_text("lstm").unwrap(), CellKind::Lstm);
        assert_eq!(cell_from_text("gru").unwrap(), CellKind::Gru);
        assert!(cell_from_text("tanh").is_err());
    }
}
