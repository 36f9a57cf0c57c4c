mod table;

use std::io::{IsTerminal, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fairlicit_core::data::{read_csv, LoadOptions};
use fairlicit_core::elicitation::{replay, Session};
use fairlicit_core::fixtures::{self, FixturePairSet};
use fairlicit_core::metrics::{FairnessReport, GroupViewSummary};
use fairlicit_core::training::{evaluate, ConstrainedModel, ConstraintPolicy, TrainingConfig, TrainingReport};
use fairlicit_core::wire::{csv_table, to_json_line};
use fairlicit_core::{generate_synthetic, Dataset, FeatureSchema, Marginals, Provenance, SyntheticConfig};
use fairlicit_service::api::{
    self, DiscordantQuery, FairnessQuery, MetricsQuery, ModelRecord, SimilarityQuery, TrainRequest,
};
use fairlicit_service::{ApiError, ErrorKind, Service};

use table::{opt, render};

#[derive(Debug, Parser)]
#[command(name = "fairlicit", version, about = "Audit, elicit and train fair risk models from the command line")]
struct Cli {
    /// Store shared with the server; bundled datasets are used when absent.
    #[arg(long, global = true, env = "FAIRLICIT_STORE")]
    store_dir: Option<PathBuf>,
    /// Print the same JSON the server returns.
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// Print CSV instead of a text table.
    #[arg(long, global = true)]
    csv: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV, or JSON with --json).
    Gen(GenArgs),
    /// Group fairness verdict or group metric table for one dataset.
    Audit(AuditArgs),
    /// Rank cases by weighted distance to a reference, or list discordant pairs.
    Similar(SimilarArgs),
    /// Re-run session logs and print the verified logs.
    Replay(ReplayArgs),
    /// Aggregate session logs into support, attribute, pair or consistency tables.
    Aggregate(AggregateArgs),
    /// Train a constrained model from session logs.
    Train(TrainArgs),
    /// Evaluate a model on a dataset.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset id in the store, or one of the bundled datasets.
    #[arg(long)]
    dataset: Option<String>,
    /// Dataset file: a `.json` dataset document or CSV rows.
    #[arg(long, conflicts_with = "dataset")]
    data: Option<PathBuf>,
    /// Schema for CSV rows; the bundled schema when absent.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Decision threshold for CSV rows.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Schema to sample; the bundled schema when absent.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// JSON object mapping feature names to value probabilities.
    #[arg(long)]
    marginals: Option<PathBuf>,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also store the dataset under this id (needs --store-dir).
    #[arg(long)]
    id: Option<String>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[command(flatten)]
    data: DataArgs,
    /// `statistical_parity` or `equalized_odds`.
    #[arg(long, required_unless_present = "metric")]
    criterion: Option<String>,
    /// Group metric table instead of a criterion: `positive_rate`, `fpr`, `fnr` or `accuracy`.
    #[arg(long, conflicts_with = "criterion")]
    metric: Option<String>,
    #[arg(long)]
    attribute: String,
    /// Second attribute for a cross table (metric mode only).
    #[arg(long, requires = "metric")]
    attribute2: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Debug, Args)]
struct SimilarArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Reference case id.
    #[arg(long, required_unless_present = "discordant")]
    reference: Option<String>,
    /// Comma-separated weights in schema feature order; uniform when absent.
    #[arg(long)]
    weights: Option<String>,
    /// List the closest pairs with different predictions instead.
    #[arg(long, conflicts_with = "reference")]
    discordant: bool,
    /// Rows to show; for --discordant, the number of pairs (default 10).
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Debug, Args)]
struct SessionArgs {
    /// Session log files or directories of them; standard input when absent.
    #[arg(long, num_args = 1..)]
    sessions: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[command(flatten)]
    sessions: SessionArgs,
    /// Replay against this dataset instead of each log's own.
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    #[command(flatten)]
    sessions: SessionArgs,
    /// `support`, `attribute`, `pair` or `consistency`.
    #[arg(long, default_value = "support")]
    table: String,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    sessions: SessionArgs,
    /// Train without any session constraints.
    #[arg(long, conflicts_with = "sessions")]
    no_sessions: bool,
    #[command(flatten)]
    data: DataArgs,
    /// `borda_aggregate` or `per_participant`.
    #[arg(long, default_value = "borda_aggregate")]
    policy: String,
    /// Training configuration as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda_pair: Option<f64>,
    #[arg(long)]
    lambda_parity: Option<f64>,
    #[arg(long)]
    lambda_odds: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Attribute the model must not use; repeatable.
    #[arg(long)]
    exclude: Vec<String>,
    /// Write the model JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Model JSON file.
    #[arg(long, required_unless_present = "model_id")]
    model: Option<PathBuf>,
    /// Model id in the store.
    #[arg(long, conflicts_with = "model")]
    model_id: Option<String>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Output {
    Table,
    Json,
    Csv,
}

struct Ctx {
    service: Option<Service>,
    output: Output,
}

fn api<T, E: Into<ApiError>>(r: Result<T, E>) -> Result<T, ApiError> {
    r.map_err(Into::into)
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

impl Ctx {
    fn service(&self) -> anyhow::Result<&Service> {
        match &self.service {
            Some(s) => Ok(s),
            None => bail!(ApiError::invalid("NoStore", "this needs --store-dir or FAIRLICIT_STORE")),
        }
    }

    /// Dataset by store id, bundled name or file. Returns its id too.
    fn dataset(&self, args: &DataArgs, default: &str) -> anyhow::Result<(String, Dataset)> {
        if let Some(path) = &args.data {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data").to_string();
            let text = read(path)?;
            let ds = if path.extension().is_some_and(|e| e == "json") {
                api(Dataset::from_json(&text))?
            } else {
                let schema = match &args.schema {
                    Some(p) => api(FeatureSchema::from_json(&read(p)?))?,
                    None => fixtures::schema(),
                };
                let options = LoadOptions {
                    threshold: args.threshold,
                    provenance: Provenance::Imported,
                };
                api(read_csv(schema, text.as_bytes(), options))?
            };
            return Ok((id, ds));
        }
        let id = args.dataset.as_deref().unwrap_or(default);
        self.named_dataset(id).map(|ds| (id.to_string(), ds))
    }

    fn named_dataset(&self, id: &str) -> anyhow::Result<Dataset> {
        if let Some(s) = &self.service {
            return Ok((*s.dataset(id)?).clone());
        }
        match api::seed_datasets().into_iter().find(|(name, _)| *name == id) {
            Some((_, ds)) => Ok(ds),
            None => {
                let names: Vec<&str> = api::seed_datasets().iter().map(|(n, _)| *n).collect();
                bail!(ApiError::not_found(
                    "UnknownDataset",
                    format!("no dataset {id:?}; bundled: {}", names.join(", "))
                ))
            }
        }
    }
}

/// Session logs from files, directories (every `*.json`, sorted) or, when no
/// path is given, a stream of JSON documents on standard input.
fn load_sessions(args: &SessionArgs) -> anyhow::Result<Vec<Session>> {
    let mut texts = Vec::new();
    if args.sessions.is_empty() {
        let stdin = std::io::stdin();
        if stdin.is_terminal() {
            bail!(ApiError::invalid("NoSessions", "give --sessions or pipe session logs in"));
        }
        let mut all = String::new();
        stdin.lock().read_to_string(&mut all).context("reading standard input")?;
        for value in serde_json::Deserializer::from_str(&all).into_iter::<serde_json::Value>() {
            texts.push(api(value)?.to_string());
        }
    } else {
        for path in &args.sessions {
            if path.is_dir() {
                let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                    .with_context(|| format!("listing {}", path.display()))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|e| e == "json"))
                    .collect();
                files.sort();
                for f in files {
                    texts.push(read(&f)?);
                }
            } else {
                texts.push(read(path)?);
            }
        }
    }
    Ok(texts
        .iter()
        .map(|t| api(Session::import(t)))
        .collect::<Result<_, _>>()?)
}

fn gen(ctx: &Ctx, a: &GenArgs) -> anyhow::Result<String> {
    let schema = match &a.schema {
        Some(p) => api(FeatureSchema::from_json(&read(p)?))?,
        None => fixtures::schema(),
    };
    let mut config = SyntheticConfig {
        threshold: a.threshold,
        ..SyntheticConfig::new(a.n, a.seed)
    };
    if let Some(p) = &a.marginals {
        let table: std::collections::BTreeMap<String, Vec<f64>> =
            api(serde_json::from_str(&read(p)?))?;
        let mut m = Marginals::uniform(&schema);
        for (feature, probs) in table {
            m.set(&feature, probs);
        }
        config.marginals = Some(m);
    }
    let ds = api(generate_synthetic(&schema, &config))?;
    if let Some(id) = &a.id {
        let created = ctx.service()?.import_dataset(Some(id), &ds.to_json())?;
        eprintln!("stored dataset {}", created.id);
    }
    let text = match ctx.output {
        Output::Json => ds.to_json(),
        _ => ds.to_csv(),
    };
    match &a.out {
        Some(p) => {
            write_file(p, &text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn fairness_text(r: &FairnessReport) -> String {
    let rows: Vec<Vec<String>> = r
        .per_subgroup
        .iter()
        .map(|s| {
            vec![
                s.value.clone(),
                s.n.to_string(),
                opt(&s.positive_rate),
                opt(&s.fpr),
                opt(&s.fnr),
                opt(&s.accuracy),
            ]
        })
        .collect();
    let mut out = format!("{} by {} (epsilon {})\n", r.criterion.as_str(), r.attribute, r.epsilon);
    out += &render(&[&r.attribute, "n", "positive_rate", "fpr", "fnr", "accuracy"], &rows);
    let mut gaps = format!("max gap {}", opt(&r.max_gap));
    if r.fpr_gap.is_some() || r.fnr_gap.is_some() {
        gaps += &format!("  fpr gap {}  fnr gap {}", opt(&r.fpr_gap), opt(&r.fnr_gap));
    }
    out += &format!("{gaps}\nverdict {}\n", r.verdict);
    out
}

fn fairness_csv(r: &FairnessReport) -> String {
    csv_table(
        &["attribute", "value", "n", "positive_rate", "fpr", "fnr", "accuracy"],
        r.per_subgroup
            .iter()
            .map(|s| {
                let f = |x: &Option<fairlicit_core::metrics::Rate>| x.map(|r| r.to_string()).unwrap_or_default();
                vec![
                    s.attribute.clone(),
                    s.value.clone(),
                    s.n.to_string(),
                    f(&s.positive_rate),
                    f(&s.fpr),
                    f(&s.fnr),
                    f(&s.accuracy),
                ]
            })
            .collect(),
    )
}

fn group_rows(g: &GroupViewSummary) -> Vec<Vec<String>> {
    g.rows
        .iter()
        .map(|r| {
            let mut row = r.values.clone();
            row.push(r.n.to_string());
            row.push(r.value.map(|v| v.to_string()).unwrap_or_default());
            row
        })
        .collect()
}

fn group_header(g: &GroupViewSummary) -> Vec<&str> {
    let mut header: Vec<&str> = g.attributes.iter().map(String::as_str).collect();
    header.push("n");
    header.push(g.metric.as_str());
    header
}

fn audit(ctx: &Ctx, a: &AuditArgs) -> anyhow::Result<String> {
    let (_, ds) = ctx.dataset(&a.data, fixtures::ELICITATION_DATASET_ID)?;
    let eps = ctx.service.as_ref().map_or(api::EPSILON_DEFAULT, Service::epsilon_default);
    if let Some(criterion) = &a.criterion {
        let q = FairnessQuery {
            criterion: criterion.clone(),
            attribute: a.attribute.clone(),
            epsilon: a.epsilon,
        };
        let r = api::fairness_on(&ds, &q, eps)?;
        return Ok(match ctx.output {
            Output::Json => to_json_line(&r),
            Output::Csv => fairness_csv(&r),
            Output::Table => fairness_text(&r),
        });
    }
    let q = MetricsQuery {
        attribute: a.attribute.clone(),
        attribute2: a.attribute2.clone(),
        metric: a.metric.clone(),
        epsilon: a.epsilon,
    };
    let g = api::metrics_on(&ds, &q, eps)?;
    Ok(match ctx.output {
        Output::Json => to_json_line(&g),
        Output::Csv => csv_table(&group_header(&g), group_rows(&g)),
        Output::Table => {
            let mut out = render(&group_header(&g), &group_rows(&g));
            out += &format!("max gap {}  verdict {}\n{}\n", opt(&g.max_gap), g.verdict, g.description);
            out
        }
    })
}

fn similar(ctx: &Ctx, a: &SimilarArgs) -> anyhow::Result<String> {
    let (_, ds) = ctx.dataset(&a.data, fixtures::ELICITATION_DATASET_ID)?;
    let label = |p: Option<fairlicit_core::RiskLabel>| p.map(|l| l.as_str().to_string()).unwrap_or_default();
    if a.discordant {
        let q = DiscordantQuery {
            weights: a.weights.clone(),
            k: a.top,
        };
        let pairs = api::discordant_on(&ds, &q)?;
        let rows: Vec<Vec<String>> = pairs
            .iter()
            .map(|p| vec![p.case_a.to_string(), p.case_b.to_string(), fairlicit_core::wire::significant(p.distance, 12)])
            .collect();
        return Ok(match ctx.output {
            Output::Json => to_json_line(&pairs),
            Output::Csv => csv_table(&["case_a", "case_b", "distance"], rows),
            Output::Table => render(&["case_a", "case_b", "distance"], &rows),
        });
    }
    let q = SimilarityQuery {
        reference: a.reference.clone().unwrap_or_default(),
        weights: a.weights.clone(),
    };
    let ranking = api::similarity_on(&ds, &q)?;
    let rows: Vec<Vec<String>> = ranking
        .entries
        .iter()
        .take(a.top.unwrap_or(usize::MAX))
        .enumerate()
        .map(|(i, e)| {
            vec![
                (i + 1).to_string(),
                e.id.to_string(),
                fairlicit_core::wire::significant(e.distance, 12),
                label(e.prediction),
            ]
        })
        .collect();
    Ok(match ctx.output {
        Output::Json => to_json_line(&ranking),
        Output::Csv => csv_table(&["rank", "case", "distance", "prediction"], rows),
        Output::Table => {
            format!("reference {}\n", ranking.reference) + &render(&["rank", "case", "distance", "prediction"], &rows)
        }
    })
}

fn replay_cmd(ctx: &Ctx, a: &ReplayArgs) -> anyhow::Result<String> {
    let sessions = load_sessions(&a.sessions)?;
    let fixed = if a.data.data.is_some() || a.data.dataset.is_some() {
        Some(ctx.dataset(&a.data, fixtures::ELICITATION_DATASET_ID)?.1)
    } else {
        None
    };
    let pairs = FixturePairSet::bundled();
    let mut out = String::new();
    for s in &sessions {
        let ds = match &fixed {
            Some(ds) => ds.clone(),
            None => ctx.named_dataset(&s.dataset_ref)?,
        };
        let rebuilt = api(replay(s, &ds, &pairs))?;
        if rebuilt.export() != s.export() {
            bail!(ApiError::invalid(
                "ReplayMismatch",
                format!("session {} does not reproduce", s.session_id)
            ));
        }
        out += &s.export();
    }
    eprintln!("replayed {} sessions", sessions.len());
    Ok(out)
}

fn aggregate(ctx: &Ctx, a: &AggregateArgs) -> anyhow::Result<String> {
    let sessions = load_sessions(&a.sessions)?;
    let summary = api::summary_of(&sessions)?;
    if ctx.output == Output::Json {
        return Ok(to_json_line(&summary));
    }
    Ok(fairlicit_service::http::summary_csv(&summary, Some(&a.table))?)
}

fn training_config(a: &TrainArgs) -> anyhow::Result<TrainingConfig> {
    let mut c: TrainingConfig = match &a.config {
        Some(p) => api(serde_json::from_str(&read(p)?))?,
        None => TrainingConfig::default(),
    };
    if let Some(x) = a.lambda_pair {
        c.lambda_pair = x;
    }
    if let Some(x) = a.lambda_parity {
        c.lambda_parity = x;
    }
    if let Some(x) = a.lambda_odds {
        c.lambda_odds = x;
    }
    if let Some(x) = a.max_iterations {
        c.max_iterations = x;
    }
    if let Some(x) = a.seed {
        c.seed = x;
    }
    c.excluded_attributes.extend(a.exclude.iter().cloned());
    Ok(c)
}

fn report_text(r: &ModelRecord) -> String {
    let mut out = format!("model {} on {}\n", r.model_id, r.dataset);
    if let Some(p) = r.policy {
        out += &format!("{} constraints from {} sessions ({})\n", r.constraints, r.sessions.len(), policy_name(p));
    }
    out + &r.report.summary()
}

fn policy_name(p: ConstraintPolicy) -> &'static str {
    match p {
        ConstraintPolicy::PerParticipant => "per_participant",
        ConstraintPolicy::BordaAggregate => "borda_aggregate",
    }
}

fn gaps_csv(r: &TrainingReport) -> String {
    let f = |x: &Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_default();
    csv_table(
        &["attribute", "parity_gap", "fpr_gap", "fnr_gap"],
        r.gaps
            .iter()
            .map(|g| vec![g.attribute.clone(), f(&g.parity_gap), f(&g.fpr_gap), f(&g.fnr_gap)])
            .collect(),
    )
}

fn record_output(ctx: &Ctx, record: &ModelRecord) -> String {
    match ctx.output {
        Output::Json => to_json_line(record),
        Output::Csv => gaps_csv(&record.report),
        Output::Table => report_text(record),
    }
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> anyhow::Result<String> {
    let sessions = if a.no_sessions { Vec::new() } else { load_sessions(&a.sessions)? };
    let policy = ConstraintPolicy::parse(&a.policy)
        .ok_or_else(|| ApiError::invalid("BadConfig", format!("unknown policy {:?}", a.policy)))?;
    let req = TrainRequest {
        dataset: a.data.dataset.clone(),
        sessions: Vec::new(),
        policy,
        config: training_config(a)?,
    };
    let default = api::training_dataset(&req, &sessions);
    let (dataset_id, ds) = ctx.dataset(&a.data, &default)?;
    let (model, constraints, report) = api::train_on(&ds, &sessions, &req)?;
    let session_ids: Vec<String> = sessions.iter().map(|s| s.session_id.clone()).collect();
    let record = match &ctx.service {
        Some(s) => s.save_model(&dataset_id, session_ids, Some(policy), constraints, &model, report)?,
        None => ModelRecord {
            model_id: a
                .out
                .as_ref()
                .and_then(|p| p.file_stem())
                .and_then(|s| s.to_str())
                .unwrap_or("model")
                .to_string(),
            dataset: dataset_id,
            sessions: session_ids,
            policy: Some(policy),
            constraints,
            report,
        },
    };
    if let Some(p) = &a.out {
        write_file(p, &model.to_json())?;
    }
    Ok(record_output(ctx, &record))
}

fn report_cmd(ctx: &Ctx, a: &ReportArgs) -> anyhow::Result<String> {
    let overridden = a.data.data.is_some() || a.data.dataset.is_some();
    let (model, id, stored) = match (&a.model, &a.model_id) {
        (Some(p), _) => {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
            (api(ConstrainedModel::from_json(&read(p)?))?, id, None)
        }
        (None, Some(id)) => {
            let s = ctx.service()?;
            let model = api(ConstrainedModel::from_json(&s.model_json(id)?))?;
            let text = s.model_report(id)?;
            let record: ModelRecord = api(serde_json::from_str(&text))?;
            (model, id.clone(), Some((text, record)))
        }
        (None, None) => unreachable!("clap requires one of --model, --model-id"),
    };
    if let (Some((text, record)), false) = (&stored, overridden) {
        return Ok(match ctx.output {
            Output::Json => text.clone(),
            _ => record_output(ctx, record),
        });
    }
    let default = stored
        .as_ref()
        .map(|(_, r)| r.dataset.clone())
        .unwrap_or_else(|| fixtures::ELICITATION_DATASET_ID.to_string());
    let (dataset_id, ds) = ctx.dataset(&a.data, &default)?;
    let report = api(evaluate(&model, &ds, &[]))?;
    let record = ModelRecord {
        model_id: id,
        dataset: dataset_id,
        sessions: Vec::new(),
        policy: None,
        constraints: 0,
        report,
    };
    Ok(record_output(ctx, &record))
}

fn run(cli: &Cli) -> anyhow::Result<String> {
    let output = if cli.json {
        Output::Json
    } else if cli.csv {
        Output::Csv
    } else {
        Output::Table
    };
    let service = match &cli.store_dir {
        Some(dir) => Some(Service::open(dir, api::EPSILON_DEFAULT)?),
        None => None,
    };
    let ctx = Ctx { service, output };
    match &cli.command {
        Command::Gen(a) => gen(&ctx, a),
        Command::Audit(a) => audit(&ctx, a),
        Command::Similar(a) => similar(&ctx, a),
        Command::Replay(a) => replay_cmd(&ctx, a),
        Command::Aggregate(a) => aggregate(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Report(a) => report_cmd(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Err(e) => match e.downcast_ref::<ApiError>() {
            Some(api) if api.kind != ErrorKind::Internal => {
                if api.message.starts_with(api.name) {
                    eprintln!("{}", api.message);
                } else {
                    eprintln!("{}: {}", api.name, api.message);
                }
                ExitCode::from(2)
            }
            _ => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
