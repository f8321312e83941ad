//! Command-line front end. `main.rs` only parses arguments and calls [`run`].

use std::io::{Read, Write};
use std::net::{IpAddr, SocketAddr};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::client::{format_currency, ClientConfig, LlmClient, PriceTable, RetryPolicy, DEFAULT_ENDPOINT};
use crate::config::RunConfig;
use crate::guard::{perturb, Blocklist, GuardError};
use crate::metrics::ThresholdConfig;
use crate::mock::{AnomalyProfile, MockServer};
use crate::report::build_report;
use crate::scan::{run_scan, CandidateSet, ScanCheckpoint, ScanConfig};
use crate::triage::{load_confirmations, run_confirmation, ConfirmConfig, DEFAULT_SAMPLES};
use crate::vocab::{load_vocabulary, TokenId, Vocabulary};

/// Exit status when guard cannot remove every blocked id.
pub const EXIT_UNRESOLVABLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "glitchscan", version, about = "Find anomalous tokens in a chat-completion model")]
pub struct Cli {
    /// Chat-completions URL.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Dollars per 1k prompt tokens.
    #[arg(long, global = true)]
    pub price_prompt: Option<f64>,
    /// Dollars per 1k completion tokens.
    #[arg(long, global = true)]
    pub price_completion: Option<f64>,
    /// Requests per minute across all workers.
    #[arg(long, global = true)]
    pub rate: Option<u32>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Probe every token with the REPEAT prompt and checkpoint the metrics.
    Scan(ScanArgs),
    /// Resample scan candidates and classify them.
    Confirm(ConfirmArgs),
    /// Perturb stdin so it no longer encodes to blocklisted ids.
    Guard(GuardArgs),
    /// Send the EXPLAIN prompt several times and print the raw completions.
    Explain(ExplainArgs),
    /// Serve a deterministic mock chat-completions API.
    MockServe(MockServeArgs),
    /// Merge checkpoints into report.json and report.csv.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    /// Resumed automatically when it already exists.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Half-open id range such as `0..1000`.
    #[arg(long, value_parser = parse_range)]
    pub range: Option<Range<TokenId>>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
}

#[derive(Args, Debug)]
pub struct ConfirmArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    /// Scan checkpoint to take candidates from.
    #[arg(long)]
    pub scan: PathBuf,
    /// Confirmation checkpoint; resumed when it exists.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long)]
    pub concurrency: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GuardArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    /// `report.json` or a file of token ids.
    #[arg(long)]
    pub blocklist: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    /// Literal token text.
    #[arg(long, conflicts_with = "id", required_unless_present = "id")]
    pub token: Option<String>,
    /// Token id; needs `--vocab`.
    #[arg(long, requires = "vocab")]
    pub id: Option<TokenId>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.3)]
    pub temperature: f64,
}

#[derive(Args, Debug)]
pub struct MockServeArgs {
    /// Profile JSON; every token behaves normally without one.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Overrides the profile seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed delay per response.
    #[arg(long)]
    pub delay_ms: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub scan: PathBuf,
    #[arg(long)]
    pub confirmations: PathBuf,
    /// Directory for report.json and report.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn parse_range(s: &str) -> Result<Range<TokenId>, String> {
    let (a, b) = s.split_once("..").ok_or("expected START..END")?;
    let a = a.parse().map_err(|_| format!("bad range start {a:?}"))?;
    let b = b.parse().map_err(|_| format!("bad range end {b:?}"))?;
    if a > b {
        return Err(format!("range {a}..{b} is inverted"));
    }
    Ok(a..b)
}

/// Flags layered over the optional config file.
struct Settings {
    endpoint: String,
    model: Option<String>,
    rate: Option<u32>,
    concurrency: usize,
    timeout: Duration,
    thresholds: ThresholdConfig,
    retry: RetryPolicy,
    price: PriceTable,
}

impl Settings {
    fn resolve(cli: &Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let mut price = file.price.unwrap_or_default();
        if let Some(p) = cli.price_prompt {
            price.prompt_per_1k = p;
        }
        if let Some(p) = cli.price_completion {
            price.completion_per_1k = p;
        }
        Ok(Self {
            endpoint: cli
                .endpoint
                .clone()
                .or(file.endpoint)
                .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string()),
            model: cli.model.clone().or(file.model),
            rate: cli.rate.or(file.rate_per_minute),
            concurrency: file.concurrency.unwrap_or(4),
            timeout: Duration::from_secs(file.request_timeout_secs.unwrap_or(60)),
            thresholds: file.thresholds,
            retry: file.retry,
            price,
        })
    }

    fn client(&self) -> Result<LlmClient> {
        let mut cfg = ClientConfig::new(self.endpoint.clone()).with_env_api_key();
        if let Some(m) = &self.model {
            cfg.model = m.clone();
        }
        cfg.retry = self.retry.clone();
        cfg.rate_per_minute = self.rate;
        cfg.request_timeout = self.timeout;
        cfg.price = self.price;
        Ok(LlmClient::new(cfg)?)
    }
}

pub async fn run(cli: Cli) -> ExitCode {
    match dispatch(&cli).await {
        Ok(code) => code,
        Err(e) => {
            if let Some(GuardError::Unresolvable { surviving, .. }) = e.downcast_ref::<GuardError>() {
                eprintln!("error: blocked ids survive perturbation: {surviving:?}");
                return ExitCode::from(EXIT_UNRESOLVABLE);
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

async fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let settings = Settings::resolve(cli)?;
    match &cli.command {
        Command::Scan(a) => cmd_scan(&settings, a).await,
        Command::Confirm(a) => cmd_confirm(&settings, a).await,
        Command::Guard(a) => cmd_guard(a),
        Command::Explain(a) => cmd_explain(&settings, a).await,
        Command::MockServe(a) => cmd_mock_serve(a).await,
        Command::Report(a) => cmd_report(&settings, a),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn vocab(path: &Path) -> Result<Vocabulary> {
    load_vocabulary(path).with_context(|| format!("loading vocabulary {}", path.display()))
}

fn load_scan(path: &Path) -> Result<ScanCheckpoint> {
    ScanCheckpoint::load(path)?.with_context(|| format!("{} holds no scan checkpoint", path.display()))
}

async fn cmd_scan(s: &Settings, a: &ScanArgs) -> Result<()> {
    let vocab = vocab(&a.vocab)?;
    let client = s.client()?;
    let cfg = ScanConfig {
        thresholds: s.thresholds,
        scan_temperature: a.temperature,
        concurrency: a.concurrency.unwrap_or(s.concurrency),
        checkpoint_path: a.checkpoint.clone(),
        token_range: a.range.clone(),
    };
    let resume = ScanCheckpoint::load(&a.checkpoint)?;
    if let Some(cp) = &resume {
        log::info!("resuming {} with {} records", a.checkpoint.display(), cp.records.len());
    }
    let out = run_scan(&vocab, &client, &cfg, resume).await?;
    println!(
        "scanned {} tokens ({} this run, {} skipped), {} candidates",
        out.recorded,
        out.newly_probed,
        out.skipped.len(),
        out.candidates.len()
    );
    if let Some(b) = out.baseline {
        println!(
            "baseline over {}: top_prob {:.6} margin {:.6} entropy {:.6} tail {:.6}",
            b.count, b.mean_top_prob, b.mean_margin, b.mean_entropy, b.mean_tail
        );
    }
    println!("cost ${}", format_currency(s.price.cost(&out.usage)));
    Ok(())
}

async fn cmd_confirm(s: &Settings, a: &ConfirmArgs) -> Result<()> {
    let vocab = vocab(&a.vocab)?;
    let scan = load_scan(&a.scan)?;
    let candidates = CandidateSet::from_checkpoint(&scan, &vocab);
    let client = s.client()?;
    let cfg = ConfirmConfig {
        samples: a.samples,
        concurrency: a.concurrency.unwrap_or(s.concurrency),
        checkpoint_path: a.checkpoint.clone(),
    };
    let records = run_confirmation(&client, &candidates, &cfg).await?;
    let mut counts = std::collections::BTreeMap::new();
    for r in &records {
        *counts.entry(r.classification).or_insert(0usize) += 1;
    }
    for (c, n) in counts {
        println!("{c}: {n}");
    }
    println!("cost this run ${}", format_currency(client.ledger().total()));
    Ok(())
}

fn cmd_guard(a: &GuardArgs) -> Result<()> {
    let vocab = vocab(&a.vocab)?;
    let bl = Blocklist::load(&a.blocklist, &vocab)?;
    let mut input = String::new();
    std::io::stdin().read_to_string(&mut input).context("reading stdin")?;
    let out = perturb(&input, &vocab, &bl)?;
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(out.text.as_bytes())?;
    stdout.flush()?;
    if out.changed {
        log::info!("inserted {} spaces", out.inserted.len());
    }
    Ok(())
}

async fn cmd_explain(s: &Settings, a: &ExplainArgs) -> Result<()> {
    let text = match (&a.token, a.id, &a.vocab) {
        (Some(t), _, _) => t.clone(),
        (None, Some(id), Some(path)) => {
            let v = vocab(path)?;
            let entry = v.decode_token(id)?;
            match &entry.decoded {
                Some(t) => t.clone(),
                None => bail!("token {id} is not valid UTF-8"),
            }
        }
        _ => bail!("pass --token or --id with --vocab"),
    };
    let client = s.client()?;
    for i in 0..a.samples {
        let o = client.explain_probe(&text, a.temperature).await?;
        let explained = o.explained_text.as_deref().map(|t| format!("{t:?}")).unwrap_or_else(|| "-".into());
        let status = o.error.map(|c| format!(" error={c}")).unwrap_or_default();
        println!(
            "[{}] json={} echo={} text={explained}{status}\n{}",
            i + 1,
            o.json_wellformed,
            o.echo_match,
            o.completion_text
        );
    }
    Ok(())
}

async fn cmd_mock_serve(a: &MockServeArgs) -> Result<()> {
    let mut profile = match &a.profile {
        Some(p) => AnomalyProfile::load(p)?,
        None => AnomalyProfile::default(),
    };
    if let Some(seed) = a.seed {
        profile.seed = seed;
    }
    if let Some(d) = a.delay_ms {
        profile.delay_ms = d;
    }
    let server = MockServer::start(profile, SocketAddr::new(a.host, a.port)).await?;
    println!("{}", server.endpoint());
    tokio::signal::ctrl_c().await.context("waiting for ctrl-c")?;
    let l = server.shutdown().await;
    println!(
        "served {} requests, {} prompt + {} completion tokens",
        l.request_count, l.prompt_tokens, l.completion_tokens
    );
    Ok(())
}

fn cmd_report(s: &Settings, a: &ReportArgs) -> Result<()> {
    let vocab = vocab(&a.vocab)?;
    let scan = ScanCheckpoint::load(&a.scan)?;
    let (confirmations, _) = load_confirmations(&a.confirmations)?;
    let records: Vec<_> = confirmations.into_values().collect();
    let report = build_report(scan.as_ref(), &records, &vocab, s.price)?;
    report.write_files(&a.out)?;
    let m = &report.summary;
    println!(
        "{} scanned, {} candidates: {} major ({} no-result), {} minor, {} false positive, {} errors, {} unconfirmed",
        m.total_scanned, m.candidates, m.major_total, m.no_result, m.minor, m.false_positive, m.perm_error, m.unconfirmed
    );
    println!("cost ${}", report.ledger.total_cost);
    Ok(())
}
