//! The `weave` command line.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use weave_core::{
    derive_request_spec, plan, probe_hardware, select_tier, to_canonical, ExecError,
    ExecutionReport, Format, MediaType, Modality, Mode, ProbeSource, Registry, StepStatus, Tier,
    TierThresholds, ToolsConfig,
};

use crate::service::{Attachment, Gateway, GatewayConfig};
use crate::stub::{self, Stub};

#[derive(Debug, Parser)]
#[command(
    name = "weave",
    version,
    about = "Plan and run music-generation tool pipelines"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP/SSE API.
    Serve(ServeArgs),
    /// Run one request to completion and write its artifacts.
    Ask(AskArgs),
    /// Print the plan for a request without running it.
    Plan(PlanArgs),
    /// Print the detected hardware profile and tier.
    Probe(ProbeArgs),
    /// Inspect the tool registry.
    Tools {
        #[command(subcommand)]
        command: ToolsCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum ToolsCommand {
    /// List registered tools.
    List {
        #[command(flatten)]
        common: Common,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, default_value = "local")]
    pub mode: Mode,
    /// Overrides the tier picked from accelerator memory.
    #[arg(long, env = "WEAVE_TIER")]
    pub tier: Option<Tier>,
    /// tools.toml replacing the default tool set.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base URL of the hosted backends. Hosted mode without one starts a
    /// local stand-in.
    #[arg(long)]
    pub hosted_url: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "WEAVE_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    pub text: String,
    #[command(flatten)]
    pub common: Common,
    /// Directory for the produced artifacts and report.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, env = "WEAVE_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Input file; its extension decides the media type.
    #[arg(long)]
    pub attach: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    pub text: String,
    #[command(flatten)]
    pub common: Common,
    /// Accepted for clarity; planning never runs anything.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long, env = "WEAVE_TIER")]
    pub tier: Option<Tier>,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter =
        tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into());
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Serve(a) => serve(a).map(|_| ExitCode::SUCCESS),
        Command::Ask(a) => ask(a),
        Command::Plan(a) => plan_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::Probe(a) => probe(a).map(|_| ExitCode::SUCCESS),
        Command::Tools {
            command: ToolsCommand::List { common, json },
        } => tools_list(&common, json).map(|_| ExitCode::SUCCESS),
    }
}

fn load_tools(path: &Option<PathBuf>) -> Result<Option<ToolsConfig>> {
    path.as_deref()
        .map(|p| ToolsConfig::load(p).map_err(|e| anyhow!(e)))
        .transpose()
}

/// Starts the in-process hosted stand-in when hosted mode has no URL.
fn hosted_backend(
    common: &Common,
    tools: &Option<ToolsConfig>,
) -> Result<(Option<String>, Option<stub::StubServer>)> {
    if common.mode != Mode::Hosted || common.hosted_url.is_some() {
        return Ok((common.hosted_url.clone(), None));
    }
    let registry = match tools {
        Some(t) => t.registry()?,
        None => Registry::builtin(),
    };
    let mut s = Stub::new(registry);
    if let Ok(t) = std::env::var("WEAVE_API_TOKEN") {
        if !t.is_empty() {
            s = s.with_token(t);
        }
    }
    let server = stub::spawn(Arc::new(s)).context("starting the hosted stand-in")?;
    tracing::info!(url = %server.url(), "no --hosted-url given; serving hosted tools in-process");
    Ok((Some(server.url()), Some(server)))
}

fn gateway_config(
    common: &Common,
    cache_dir: Option<PathBuf>,
    hosted_url: Option<String>,
) -> Result<GatewayConfig> {
    Ok(GatewayConfig {
        mode: common.mode,
        tier_override: common.tier,
        cache_dir,
        hosted_url,
        tools: load_tools(&common.config)?,
        ..GatewayConfig::default()
    })
}

fn serve(a: ServeArgs) -> Result<()> {
    let tools = load_tools(&a.common.config)?;
    let (url, _stub) = hosted_backend(&a.common, &tools)?;
    let gw = Gateway::new(gateway_config(&a.common, a.cache_dir.clone(), url)?)?;
    let addr = SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!(
            "weave listening on http://{} (mode {}, tier {})",
            listener.local_addr()?,
            gw.config().mode,
            gw.tier()
        );
        axum::serve(listener, crate::server::router(gw.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    rt.shutdown_background();
    Ok(())
}

fn media_for_path(p: &Path) -> Result<MediaType> {
    let ext = p
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase();
    Ok(match ext.as_str() {
        "txt" => MediaType::TEXT,
        "abc" => MediaType::ABC,
        "mid" | "midi" => MediaType::SMF,
        "wav" => MediaType::WAV,
        "svg" => MediaType::SVG,
        "json" => MediaType::JSON,
        _ => bail!("cannot tell the media type of {}", p.display()),
    })
}

/// File name for an artifact of `media`; a plan has at most one node per
/// media type.
pub fn output_name(media: MediaType) -> String {
    let stem = match media.format {
        Format::Plain if media.modality == Modality::Report => "notes",
        Format::Plain => "brief",
        Format::Svg | Format::Pdf => "score",
        Format::Json => "analysis",
        Format::Abc | Format::Smf | Format::Wav => "tune",
    };
    format!("{stem}.{}", media.format.extension())
}

fn ask(a: AskArgs) -> Result<ExitCode> {
    let started = Instant::now();
    let tools = load_tools(&a.common.config)?;
    let (url, _stub) = hosted_backend(&a.common, &tools)?;
    let gw = Gateway::new(gateway_config(&a.common, a.cache_dir.clone(), url)?)?;
    let mut attachments = Vec::new();
    for p in &a.attach {
        let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        attachments.push(Attachment {
            media: media_for_path(p)?,
            bytes,
        });
    }
    let session = gw.create_session(None, None)?;
    let (accepted, job) = gw.prepare(&session.id, &a.text, &attachments)?;
    println!(
        "plan {} (mode {}, tier {})",
        accepted.plan_id, accepted.mode, accepted.tier
    );
    let result = job.run(&weave_core::NullSink);

    let (report, failure) = match result {
        Ok(r) => (r, None),
        Err(ExecError::Failed {
            node_id,
            detail,
            report,
        }) => (*report, Some(format!("node {node_id}: {detail}"))),
        Err(e) => return Err(e.into()),
    };
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let written = write_outputs(&gw, &report, &a.out)?;
    for step in &report.steps {
        println!(
            "  {:<4} {:<20} {:<9} attempt {} {} ms",
            step.node_id,
            step.tool_id,
            status_str(step.status),
            step.attempt,
            step.duration_ms
        );
    }
    for path in &written {
        println!("wrote {}", path.display());
    }
    println!("backend invocations: {}", report.backend_invocations);
    println!("elapsed: {} ms", started.elapsed().as_millis());
    if let Some(f) = failure {
        eprintln!("error: {f}");
        return Ok(ExitCode::from(1));
    }
    let verdict = report.verdict.passed();
    println!("verdict: {}", if verdict { "pass" } else { "fail" });
    Ok(if verdict {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn status_str(s: StepStatus) -> &'static str {
    match s {
        StepStatus::Cached => "cached",
        StepStatus::Executed => "executed",
        StepStatus::Failed => "failed",
        StepStatus::Skipped => "skipped",
    }
}

/// Writes every artifact the run produced, plus `report.json`.
fn write_outputs(gw: &Gateway, report: &ExecutionReport, out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let produced = report.steps.iter().filter_map(|s| s.output.clone());
    for id in produced.chain(report.final_artifacts.values().cloned()) {
        if !seen.insert(id.clone()) {
            continue;
        }
        let art = gw.artifact(&id)?;
        let path = out.join(output_name(art.media()));
        std::fs::write(&path, &art.bytes).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    let path = out.join("report.json");
    std::fs::write(&path, to_canonical(report))?;
    written.push(path);
    Ok(written)
}

fn plan_cmd(a: PlanArgs) -> Result<()> {
    let tools = load_tools(&a.common.config)?;
    let registry = match &tools {
        Some(t) => t.registry()?,
        None => Registry::builtin(),
    };
    let registry = match (a.common.mode, &a.common.hosted_url) {
        (Mode::Hosted, Some(url)) => registry.to_hosted(url)?,
        (Mode::Hosted, None) => registry.to_hosted("http://127.0.0.1:0")?,
        (Mode::Local, _) => registry,
    };
    let thresholds = tools.as_ref().and_then(|t| t.tiers).unwrap_or_default();
    let factors = tools
        .as_ref()
        .and_then(|t| t.cost_factors)
        .unwrap_or_default();
    let profile = probe_hardware(ProbeSource::System);
    let tier = select_tier(&profile, a.common.tier, &thresholds);
    let spec = derive_request_spec(&a.text, &[])?;
    let graph = plan(&spec, &registry, tier, &profile, &factors)?;
    println!(
        "{}",
        to_canonical(&json!({ "tier": tier, "request": spec, "plan": graph }))
    );
    Ok(())
}

fn probe(a: ProbeArgs) -> Result<()> {
    let profile = probe_hardware(ProbeSource::System);
    let thresholds = TierThresholds::default();
    let tier = select_tier(&profile, a.tier, &thresholds);
    println!(
        "{}",
        to_canonical(
            &json!({ "profile": profile, "tier": tier, "tier_override": a.tier, "thresholds": thresholds })
        )
    );
    Ok(())
}

fn tools_list(common: &Common, as_json: bool) -> Result<()> {
    let registry = match load_tools(&common.config)? {
        Some(t) => t.registry()?,
        None => Registry::builtin(),
    };
    if as_json {
        let tools: Vec<_> = registry.tools().collect();
        println!("{}", to_canonical(&tools));
        return Ok(());
    }
    println!(
        "{:<20} {:<28} {:<10} {:<8} {:>6} {:>18}",
        "id", "signature", "kind", "backend", "cost", "mem int4/int8/fp16"
    );
    for t in registry.tools() {
        let ins: Vec<String> = t.inputs.iter().map(|m| m.to_string()).collect();
        let m = &t.mem_estimate_mb;
        println!(
            "{:<20} {:<28} {:<10} {:<8} {:>6} {:>18}",
            t.id,
            format!("{} -> {}", ins.join("|"), t.output),
            t.kind.to_string(),
            t.backend.to_string(),
            t.cost_estimate,
            format!("{}/{}/{}", m.int4, m.int8, m.fp16)
        );
    }
    Ok(())
}
