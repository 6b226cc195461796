//! `collage-audit`: command-line driver for the collage analysis pipeline.
//!
//! Exit codes: 0 on success, 1 when a stage fails, 2 for configuration or
//! manifest problems.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use collage_core::graph::{build_social_graph, export_edge_list, meetings_from_clusters};
use collage_core::linkage::IdentityCluster;
use collage_core::manifest::ingest_manifest;
use collage_core::pipeline::REPORT_FILE;
use collage_core::report::to_canonical_json;
use collage_core::{run_pipeline, Error, Source, StatisticsReport};

use config::{Settings, StageFlags};

#[derive(Parser)]
#[command(
    name = "collage-audit",
    version,
    about = "Privacy analytics over video-conference collage images"
)]
struct Cli {
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Check a post manifest and the image files it points at
    Ingest { manifest: PathBuf },
    /// Run every stage and write the artifacts
    Run {
        /// TOML file with the same keys as the flags; flags win
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
        #[command(flatten)]
        stages: StageFlags,
    },
    /// Print the summary of a finished run
    Report {
        /// Output directory of a run, or a report.json file
        run: PathBuf,
        /// Print the canonical JSON instead of a text summary
        #[arg(long)]
        json: bool,
    },
    /// Rebuild the co-participation edge list from clusters.json
    GraphExport {
        clusters: PathBuf,
        #[arg(long, short, default_value = "edges.csv")]
        output: PathBuf,
    },
}

/// Problems with the invocation itself, as opposed to a failing stage.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<toml::de::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::Manifest { .. } | Error::DuplicatePost { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn ingest(manifest: &Path) -> Result<()> {
    if !manifest.is_file() {
        return Err(UsageError(format!("manifest {} not found", manifest.display())).into());
    }
    let posts = ingest_manifest(manifest)?;
    let count = |s: Source| posts.iter().filter(|p| p.source == s).count();
    let missing: Vec<_> = posts.iter().filter(|p| !p.image_path.is_file()).collect();
    println!(
        "{} posts (twitter {}, instagram {}, other {})",
        posts.len(),
        count(Source::Twitter),
        count(Source::Instagram),
        count(Source::Other)
    );
    for p in &missing {
        println!("missing image: {} ({})", p.post_id, p.image_path.display());
    }
    println!("{} image files missing", missing.len());
    Ok(())
}

fn run(config: Option<&Path>, mut flags: Settings, stages: StageFlags) -> Result<()> {
    stages.apply(&mut flags);
    let settings = match config {
        Some(path) => Settings::load(path)
            .map_err(|e| UsageError(format!("{e:#}")))?
            .overlay(&flags),
        None => flags,
    };
    let cfg = settings
        .into_pipeline_config()
        .ok_or_else(|| UsageError("--manifest and --output-dir are required (flag or config key)".into()))?;
    if !cfg.manifest_path.is_file() {
        return Err(UsageError(format!("manifest {} not found", cfg.manifest_path.display())).into());
    }
    log::info!("running with {cfg:?}");
    let run = run_pipeline(&cfg)?;
    let c = &run.report.counts;
    println!("ingested {}, skipped {}", c.images_ingested, c.images_skipped);
    println!(
        "collages {} (not collage {}, unscored {})",
        c.images_classified_collage, c.images_not_collage, c.images_unscored
    );
    println!(
        "kept {} after dedup (hash {}, embedding {})",
        c.images_kept_after_dedup, c.images_removed_hash, c.images_removed_embedding
    );
    println!(
        "{} faces, {} identities, {} graph components",
        run.report.total_faces, run.report.identity_count, run.report.graph.component_count
    );
    println!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.2}"))
}

fn report(path: &Path, json: bool) -> Result<()> {
    let file = if path.is_dir() {
        path.join(REPORT_FILE)
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let r = StatisticsReport::from_json(&text)?;
    if json {
        print!("{}", to_canonical_json(&r));
        return Ok(());
    }
    println!("collages kept            {}", r.counts.images_kept_after_dedup);
    println!("faces                    {}", r.total_faces);
    println!("participants / collage   {:.2}", r.mean_participants_per_collage);
    println!(
        "age mean / median        {} / {}",
        fmt_opt(r.age_mean),
        fmt_opt(r.age_median)
    );
    for (cat, share) in &r.age_category_shares {
        println!("  {cat:<22} {:.1}%", share * 100.0);
    }
    for (g, n) in &r.gender_counts {
        println!("  {g:<22} {n}");
    }
    println!(
        "usernames                {} distinct, {} multi-word",
        r.distinct_usernames, r.multiword_usernames
    );
    println!("reused usernames         {}", r.reused_usernames);
    println!("identities               {}", r.identity_count);
    println!("repeated faces           {}", r.repeated_face_identities);
    let g = &r.graph;
    println!(
        "graph                    {} nodes, {} edges, {} components",
        g.node_count, g.edge_count, g.component_count
    );
    println!(
        "component mean           {:.2} nodes, {:.2} edges",
        g.mean_nodes, g.mean_edges
    );
    println!(
        "largest component        {} nodes, {} edges",
        g.largest_nodes, g.largest_edges
    );
    Ok(())
}

fn graph_export(clusters: &Path, output: &Path) -> Result<()> {
    let text = std::fs::read_to_string(clusters).with_context(|| format!("reading {}", clusters.display()))?;
    let clusters: Vec<IdentityCluster> = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("malformed clusters file {}: {e}", clusters.display())))?;
    let g = build_social_graph(&meetings_from_clusters(&clusters));
    export_edge_list(&g, output)?;
    println!(
        "{} nodes, {} edges -> {}",
        g.node_count(),
        g.edge_count(),
        output.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Ingest { manifest } => ingest(&manifest),
        Command::Run {
            config,
            settings,
            stages,
        } => run(config.as_deref(), settings, stages),
        Command::Report { run, json } => report(&run, json),
        Command::GraphExport { clusters, output } => graph_export(&clusters, &output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
