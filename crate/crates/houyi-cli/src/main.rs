//! `houyi` — prompt-injection assessment campaigns from the command line.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use houyi_core::backend::http::HttpBackend;
use houyi_core::backend::mock::MockBackend;
use houyi_core::backend::Backend;
use houyi_core::builder::ExploitScenario;
use houyi_core::campaign::{
    estimate_abuse_cost, leak_marker, render_report, render_transcripts, run_campaign,
    BackendChoice, CampaignConfig, CampaignMode, ReportFormat,
};
use houyi_core::context::{
    harvest_examples, infer_context, load_cached_context, probe_application,
    store_cached_context,
};
use houyi_core::data;
use houyi_core::orchestrator::{run_attack, AttackSession, EvalMeta, HarnessTarget};
use houyi_core::suite::{load_suite, Suite};
use houyi_core::victim::{AppRegistry, VictimHandle};

#[derive(Parser)]
#[command(name = "houyi", about = "Black-box prompt-injection assessment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Baselines,
    Houyi,
    AblationSyntaxOnly,
    AblationLanguageOnly,
    AblationSemanticOnly,
}

impl From<ModeArg> for CampaignMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Baselines => CampaignMode::Baselines,
            ModeArg::Houyi => CampaignMode::HouYi,
            ModeArg::AblationSyntaxOnly => CampaignMode::AblationSyntaxOnly,
            ModeArg::AblationLanguageOnly => CampaignMode::AblationLanguageOnly,
            ModeArg::AblationSemanticOnly => CampaignMode::AblationSemanticOnly,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
}

#[derive(Args)]
struct BackendArgs {
    /// Backend: "mock" or "http".
    #[arg(long, default_value = "mock")]
    backend: String,
    /// Chat-completions endpoint URL (required with --backend http).
    #[arg(long)]
    endpoint: Option<String>,
}

impl BackendArgs {
    fn build(&self) -> Result<Box<dyn Backend>> {
        match self.backend.as_str() {
            "mock" => Ok(Box::new(MockBackend::new())),
            "http" => {
                let endpoint = self
                    .endpoint
                    .as_ref()
                    .ok_or_else(|| anyhow!("--endpoint is required with --backend http"))?;
                Ok(Box::new(HttpBackend::new(endpoint.clone())))
            }
            other => bail!("unknown backend {other:?}; expected \"mock\" or \"http\""),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Probe an application with documentation examples and infer its context.
    Probe {
        /// Suite name (pilot, full, defense_reference) or suite file path.
        #[arg(long, default_value = "full")]
        suite: String,
        /// Application name within the suite.
        #[arg(long)]
        app: String,
        /// Plain-text file with one example input per line.
        #[arg(long)]
        docs: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the context cache.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Re-probe even when a cached context exists.
        #[arg(long)]
        no_cache: bool,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Run the feedback attack loop against one application.
    Attack {
        #[arg(long, default_value = "full")]
        suite: String,
        #[arg(long)]
        app: String,
        /// Scenario subset (pl, cg, cm, sg, ig); default is all five.
        #[arg(long, value_delimiter = ',')]
        scenarios: Vec<String>,
        #[arg(long, default_value_t = 30)]
        budget: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Run a full campaign over a suite and write reports and transcripts.
    Campaign {
        #[arg(long, default_value = "full")]
        suite: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Houyi)]
        mode: ModeArg,
        #[arg(long, value_delimiter = ',')]
        scenarios: Vec<String>,
        #[arg(long, default_value_t = 5)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        budget: u32,
        /// Worker threads for app-level parallelism (1 = sequential).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Re-render a saved campaign report.
    Report {
        /// Path to a report.json written by `campaign`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
        format: FormatArg,
    },
    /// Estimate the daily cost of a prompt-abuse scenario.
    Cost {
        #[arg(long)]
        tokens_per_minute: u64,
        /// Price per 1k tokens as a decimal string, e.g. 0.002.
        #[arg(long)]
        usd_per_1k_tokens: String,
        #[arg(long, default_value_t = 1440)]
        minutes: u64,
    },
}

fn parse_scenarios(labels: &[String]) -> Result<Option<Vec<ExploitScenario>>> {
    if labels.is_empty() {
        return Ok(None);
    }
    let mut scenarios = vec![];
    for label in labels {
        let scenario = match label.to_lowercase().as_str() {
            "pl" | "prompt_leaking" => ExploitScenario::PromptLeaking,
            "cg" | "code_generation" => ExploitScenario::CodeGeneration,
            "cm" | "content_manipulation" => ExploitScenario::ContentManipulation,
            "sg" | "spam_generation" => ExploitScenario::SpamGeneration,
            "ig" | "information_gathering" => ExploitScenario::InformationGathering,
            "poc" | "proof_of_concept" => ExploitScenario::ProofOfConcept,
            other => bail!("unknown scenario {other:?}"),
        };
        scenarios.push(scenario);
    }
    Ok(Some(scenarios))
}

fn find_app<'a>(suite: &'a Suite, name: &str) -> Result<&'a houyi_core::victim::VictimAppConfig> {
    suite
        .apps
        .iter()
        .find(|app| app.name == name)
        .ok_or_else(|| anyhow!("application {name:?} is not in suite {:?}", suite.name))
}

fn register_one(suite: &Suite, name: &str) -> Result<(AppRegistry, VictimHandle)> {
    let app = find_app(suite, name)?.clone();
    let registry = AppRegistry::new();
    let handle = registry.register_app(app)?;
    Ok((registry, handle))
}

fn probe_examples_for(
    app: &houyi_core::victim::VictimAppConfig,
    docs: Option<&Path>,
) -> Result<Vec<String>> {
    match docs {
        Some(path) => Ok(harvest_examples(path)?),
        None => Ok(data::exemplars()
            .probe_examples
            .get(app.app_function.tag())
            .cloned()
            .unwrap_or_default()),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Probe { suite, app, docs, seed, out_dir, no_cache, backend } => {
            let suite = load_suite(&suite)?;
            let config = find_app(&suite, &app)?.clone();
            let cache_path = out_dir.join(format!("context-{app}.json"));
            if !no_cache {
                if let Some(context) = load_cached_context(&cache_path, &app)? {
                    println!("{}", serde_json::to_string_pretty(&context)?);
                    return Ok(());
                }
            }
            let backend = backend.build()?;
            let (_registry, handle) = register_one(&suite, &app)?;
            let examples = probe_examples_for(&config, docs.as_deref())?;
            if examples.is_empty() {
                bail!("no probe examples available; pass --docs");
            }
            let target = HarnessTarget { handle: &handle, backend: backend.as_ref() };
            let records = probe_application(&target, &examples, seed);
            let context = infer_context(&records, backend.as_ref());
            store_cached_context(&cache_path, &app, &context)?;
            println!("{}", serde_json::to_string_pretty(&context)?);
        }
        Command::Attack { suite, app, scenarios, budget, seed, backend } => {
            let suite = load_suite(&suite)?;
            let config = find_app(&suite, &app)?.clone();
            let backend = backend.build()?;
            let (_registry, handle) = register_one(&suite, &app)?;
            let examples = probe_examples_for(&config, None)?;
            let target = HarnessTarget { handle: &handle, backend: backend.as_ref() };
            let records = probe_application(&target, &examples, seed);
            let context = infer_context(&records, backend.as_ref());

            let requested = parse_scenarios(&scenarios)?
                .unwrap_or_else(|| ExploitScenario::REPORTED.to_vec());
            let applicable: Vec<ExploitScenario> = requested
                .into_iter()
                .filter(|s| {
                    *s != ExploitScenario::PromptLeaking || config.profile.leakable_prompt
                })
                .collect();

            let mut session = AttackSession::new(
                &target,
                context,
                backend.as_ref(),
                applicable.clone(),
                budget,
                seed,
            );
            session.pending_scenarios = VecDeque::from(applicable);
            session.meta = EvalMeta {
                leak_marker: config
                    .profile
                    .leakable_prompt
                    .then(|| leak_marker(&config.pre_prompt)),
            };
            let outcome = run_attack(session);
            println!("{}", serde_json::to_string_pretty(&outcome)?);
        }
        Command::Campaign {
            suite,
            mode,
            scenarios,
            trials,
            seed,
            budget,
            jobs,
            out_dir,
            backend,
        } => {
            let suite_spec = suite;
            let suite = load_suite(&suite_spec)?;
            let config = CampaignConfig {
                suite: suite_spec,
                mode: mode.into(),
                backend: match backend.backend.as_str() {
                    "http" => BackendChoice::Http {
                        endpoint: backend.endpoint.clone().unwrap_or_default(),
                    },
                    _ => BackendChoice::Mock,
                },
                scenarios: parse_scenarios(&scenarios)?,
                trials,
                seed,
                budget,
                jobs,
            };
            let backend = backend.build()?;
            let output = run_campaign(&config, &suite, backend.as_ref())?;
            fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            fs::write(
                out_dir.join("report.md"),
                render_report(&output.report, ReportFormat::Markdown),
            )?;
            fs::write(
                out_dir.join("report.csv"),
                render_report(&output.report, ReportFormat::Csv),
            )?;
            fs::write(
                out_dir.join("report.json"),
                serde_json::to_string_pretty(&output.report)?,
            )?;
            fs::write(
                out_dir.join("transcripts.jsonl"),
                render_transcripts(&output.transcripts),
            )?;
            println!(
                "{} apps, {} vulnerable ({}%); reports written to {}",
                output.report.total_apps,
                output.report.vulnerable_count,
                output.report.vulnerable_rate,
                out_dir.display()
            );
        }
        Command::Report { input, format } => {
            let raw = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let report = serde_json::from_str(&raw)?;
            let format = match format {
                FormatArg::Markdown => ReportFormat::Markdown,
                FormatArg::Csv => ReportFormat::Csv,
            };
            print!("{}", render_report(&report, format));
        }
        Command::Cost { tokens_per_minute, usd_per_1k_tokens, minutes } => {
            let cost = estimate_abuse_cost(tokens_per_minute, &usd_per_1k_tokens, minutes)?;
            println!("{cost}");
        }
    }
    Ok(())
}
