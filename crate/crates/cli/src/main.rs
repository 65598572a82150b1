//! `flexicia`: ingest a corpus, commit changes, and review the impacts.
//!
//! Commands work on the corpus directory directly unless `--server` (or
//! `FLEXICIA_SERVER`) names a running service, in which case they go
//! over HTTP. Exit status: 0 success, 1 domain error, 2 usage error.

mod config;

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use flexicia_api::{CommitResult, Estimate, ImpactRecord, IngestReport, ResolveResult};
use flexicia_client::Client;
use flexicia_core::broker::{Broker, BrokerConfig, Policy, Resolution};

use config::FileConfig;

const DEFAULT_PORT: u16 = 7878;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "flexicia",
    version,
    about = "Change impact analysis for sTeX/OMDoc corpora"
)]
struct Cli {
    /// Corpus directory.
    #[arg(long, global = true, env = "FLEXICIA_CORPUS")]
    corpus: Option<PathBuf>,
    /// Base URL of a running service; commands then go over HTTP.
    #[arg(long, global = true, env = "FLEXICIA_SERVER")]
    server: Option<String>,
    /// key=value configuration file; flags override it.
    #[arg(long, global = true, env = "FLEXICIA_CONFIG")]
    config: Option<PathBuf>,
    /// When to run the analysis after a commit.
    #[arg(long, global = true, value_parser = parse_policy)]
    policy: Option<Policy>,
    /// Extra rule files loaded after the bundled packs.
    #[arg(long = "rules", global = true)]
    rules: Vec<PathBuf>,
    /// Rewrite budget per strategy phase.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    max_rewrites: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse all sources in a directory and start a fresh corpus state.
    Ingest { dir: PathBuf },
    /// Store a new version of a document.
    Commit {
        /// Document uri, optionally with its extension.
        uri: String,
        /// File holding the new source.
        file: PathBuf,
        /// Run the analysis even under the manual policy.
        #[arg(long)]
        cia: bool,
    },
    /// List impact records.
    Impacts { uri: Option<String> },
    /// Discard an impact and those derived from it.
    Discard { impact_id: String },
    /// Mark an impact resolved, optionally committing a new source.
    Resolve {
        impact_id: String,
        #[arg(long = "with")]
        with: Option<PathBuf>,
    },
    /// Objects that depend on an element, without changing anything.
    Estimate { uri: String, element_id: String },
    /// Run the HTTP service on the corpus.
    Serve {
        #[arg(long, env = "FLEXICIA_PORT")]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Print the semantic graph in its debug format.
    DumpGraph,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse()
}

/// Usage errors exit with 2, everything else with 1.
enum Failure {
    Usage(anyhow::Error),
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

fn usage(e: anyhow::Error) -> Failure {
    Failure::Usage(e)
}

/// Flags, environment and config file merged.
struct Settings {
    corpus: PathBuf,
    server: Option<String>,
    broker: BrokerConfig,
    format: Format,
    port: u16,
}

fn settings(cli: &Cli) -> Result<Settings, Failure> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(usage)?,
        None => FileConfig::default(),
    };
    let rule_paths = if cli.rules.is_empty() {
        file.paths("rules")
    } else {
        cli.rules.clone()
    };
    let mut extra_rules = Vec::new();
    for p in &rule_paths {
        extra_rules.push(
            std::fs::read_to_string(p)
                .with_context(|| format!("cannot read rule file {}", p.display()))
                .map_err(usage)?,
        );
    }
    let max_rewrites = match cli.max_rewrites {
        Some(m) => Some(m),
        None => file.parsed::<u64>("max-rewrites").map_err(usage)?,
    };
    if max_rewrites == Some(0) {
        return Err(usage(anyhow!("max-rewrites must be positive")));
    }
    let policy = match cli.policy {
        Some(p) => Some(p),
        None => file.parsed::<Policy>("policy").map_err(usage)?,
    };
    let format = match (cli.format, file.get("format")) {
        (Some(f), _) => f,
        (None, Some(f)) => {
            Format::from_str(f, true).map_err(|e| usage(anyhow!("`format`: {e}")))?
        }
        (None, None) => Format::Text,
    };
    let port = match &cli.command {
        Command::Serve { port: Some(p), .. } => *p,
        _ => file
            .parsed::<u16>("port")
            .map_err(usage)?
            .unwrap_or(DEFAULT_PORT),
    };
    Ok(Settings {
        corpus: cli
            .corpus
            .clone()
            .or_else(|| file.path("corpus"))
            .unwrap_or_else(|| PathBuf::from(".")),
        server: cli
            .server
            .clone()
            .or_else(|| file.get("server").map(str::to_string)),
        broker: BrokerConfig {
            policy,
            extra_rules,
            max_rewrites,
            ..BrokerConfig::default()
        },
        format,
        port,
    })
}

enum Backend {
    Local(Box<Broker>),
    Remote(Client, tokio::runtime::Runtime),
}

impl Backend {
    fn connect(s: &Settings) -> Result<Backend, Failure> {
        match &s.server {
            Some(url) => Ok(Backend::Remote(Client::new(url.clone()), runtime()?)),
            None => Ok(Backend::Local(Box::new(Broker::open(
                &s.corpus,
                s.broker.clone(),
            )?))),
        }
    }

    fn commit(&mut self, uri: &str, source: &str, cia: bool) -> Result<CommitResult> {
        Ok(match self {
            Backend::Local(b) => b.commit(uri, source, cia)?,
            Backend::Remote(c, rt) => rt.block_on(c.commit(uri, source, cia))?,
        })
    }

    fn impacts(&mut self, uri: Option<&str>) -> Result<Vec<ImpactRecord>> {
        Ok(match self {
            Backend::Local(b) => b.impacts(uri)?,
            Backend::Remote(c, rt) => rt.block_on(c.impacts(uri))?,
        })
    }

    fn resolve(
        &mut self,
        id: &str,
        action: Resolution,
        source: Option<&str>,
    ) -> Result<ResolveResult> {
        Ok(match self {
            Backend::Local(b) => b.resolve(id, action, source)?,
            Backend::Remote(c, rt) => match action {
                Resolution::Discard => rt.block_on(c.discard(id))?,
                Resolution::Resolve => rt.block_on(c.resolve(id, source))?,
            },
        })
    }

    fn estimate(&mut self, uri: &str, element_id: &str) -> Result<Estimate> {
        Ok(match self {
            Backend::Local(b) => b.estimate(uri, element_id)?,
            Backend::Remote(c, rt) => rt.block_on(c.estimate(uri, element_id))?,
        })
    }

    fn dump_graph(&mut self) -> Result<String> {
        Ok(match self {
            Backend::Local(b) => b.dump_graph(),
            Backend::Remote(c, rt) => rt.block_on(c.dump_graph())?,
        })
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?)
}

fn read_source(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(usage)
}

fn emit<T: Serialize>(format: Format, data: &T, text: impl FnOnce(&T) -> String) -> Result<()> {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(data)?),
        Format::Text => print!("{}", text(data)),
    }
    Ok(())
}

fn record_line(r: &ImpactRecord) -> String {
    let mut line = format!("{}\t{}\t{}#{}\t{}", r.id, r.status, r.uri, r.target, r.name);
    if let Some(c) = &r.caused_by {
        let _ = write!(line, "\t(caused by {c})");
    }
    line.push('\n');
    line
}

fn ingest_text(r: &IngestReport) -> String {
    format!(
        "{} documents, {} semantic references\n",
        r.documents, r.references
    )
}

fn commit_text(r: &CommitResult) -> String {
    let mut out = format!(
        "{}: version {} (corpus version {}), {} edit operations\n",
        r.uri, r.version, r.corpus_version, r.edit_ops
    );
    match (&r.cia, &r.cia_error) {
        (false, _) => out.push_str("no analysis run\n"),
        (true, Some(e)) => {
            let _ = writeln!(out, "analysis failed, impacts unavailable: {e}");
        }
        (true, None) => {
            let _ = writeln!(out, "{} new impacts", r.new_impacts.len());
            for rec in &r.new_impacts {
                out.push_str(&record_line(rec));
            }
        }
    }
    out
}

fn resolve_text(r: &ResolveResult) -> String {
    let mut out: String = r.updated.iter().map(record_line).collect();
    if let Some(c) = &r.commit {
        out.push_str(&commit_text(c));
    }
    out
}

fn estimate_text(e: &Estimate) -> String {
    let mut out = format!(
        "{}#{}: {} dependent objects\n",
        e.uri, e.element_id, e.count
    );
    for a in &e.affected {
        let _ = writeln!(out, "{}#{}", a.uri, a.element_id);
    }
    out
}

fn run(cli: Cli) -> Result<(), Failure> {
    let s = settings(&cli)?;
    match &cli.command {
        Command::Ingest { dir } => {
            let (_, report) = Broker::ingest(dir, s.broker.clone())?;
            emit(s.format, &report, ingest_text)?;
        }
        Command::Commit { uri, file, cia } => {
            let src = read_source(file)?;
            let res = Backend::connect(&s)?.commit(uri, &src, *cia)?;
            emit(s.format, &res, commit_text)?;
        }
        Command::Impacts { uri } => {
            let records = Backend::connect(&s)?.impacts(uri.as_deref())?;
            emit(s.format, &records, |rs| {
                rs.iter().map(record_line).collect()
            })?;
        }
        Command::Discard { impact_id } => {
            let res = Backend::connect(&s)?.resolve(impact_id, Resolution::Discard, None)?;
            emit(s.format, &res, resolve_text)?;
        }
        Command::Resolve { impact_id, with } => {
            let src = with.as_deref().map(read_source).transpose()?;
            let res =
                Backend::connect(&s)?.resolve(impact_id, Resolution::Resolve, src.as_deref())?;
            emit(s.format, &res, resolve_text)?;
        }
        Command::Estimate { uri, element_id } => {
            let est = Backend::connect(&s)?.estimate(uri, element_id)?;
            emit(s.format, &est, estimate_text)?;
        }
        Command::DumpGraph => {
            print!("{}", Backend::connect(&s)?.dump_graph()?);
        }
        Command::Serve { host, .. } => {
            let broker = Broker::open(&s.corpus, s.broker.clone())?;
            let addr: SocketAddr = format!("{host}:{}", s.port)
                .parse()
                .with_context(|| format!("bad listen address {host}:{}", s.port))
                .map_err(usage)?;
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| "info".into()),
                )
                .with_writer(std::io::stderr)
                .init();
            runtime()?.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                // first stdout line, so scripts can pick up an ephemeral port
                println!("listening on http://{}", listener.local_addr()?);
                flexicia_service::serve(listener, broker, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
