use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tracing::{info, warn};

use vidnote_core::{GroupId, VideoId};
use vidnote_tracker::synthetic::SyntheticSequence;

use crate::config::{Config, PasswordCost, DEFAULT_PORT};
use crate::media::write_synthetic_y4m;
use crate::service::App;

#[derive(Debug, Parser)]
#[command(name = "vidnote", version, about = "Collaborative video annotation service")]
pub struct Cli {
    #[command(flatten)]
    pub settings: Settings,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Settings {
    /// Directory holding the database, blobs and decoded frames.
    #[arg(long, env = "DATA_DIR", default_value = "./data", global = true)]
    pub data_dir: PathBuf,
    /// Key for signing session tokens; random per process when unset.
    #[arg(long, env = "AUTH_TOKEN_SECRET", hide_env_values = true, global = true)]
    pub auth_token_secret: Option<String>,
    /// Shell template decoding `{input}`: into the frame directory `{output}`,
    /// or as Y4M on stdout when `{output}` is absent.
    #[arg(long, env = "DECODER_CMD", global = true)]
    pub decoder_cmd: Option<String>,
    #[arg(long, env = "TRACKER_WORKERS", default_value_t = 2, global = true)]
    pub tracker_workers: usize,
    #[arg(long, env = "ARGON2_MEMORY_KIB", global = true)]
    pub argon2_memory_kib: Option<u32>,
    #[arg(long, env = "ARGON2_ITERATIONS", global = true)]
    pub argon2_iterations: Option<u32>,
}

impl Settings {
    pub fn config(&self) -> Config {
        let mut c = Config::new(&self.data_dir);
        c.token_secret = self.auth_token_secret.as_ref().map(|s| s.as_bytes().to_vec());
        c.decoder_cmd = self.decoder_cmd.clone().filter(|s| !s.trim().is_empty());
        c.tracker_workers = self.tracker_workers.max(1);
        let defaults = PasswordCost::default();
        c.password_cost = PasswordCost {
            memory_kib: self.argon2_memory_kib.unwrap_or(defaults.memory_kib),
            iterations: self.argon2_iterations.unwrap_or(defaults.iterations),
            parallelism: defaults.parallelism,
        };
        c
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP and websocket service.
    Serve {
        #[arg(long, env = "APP_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "0.0.0.0")]
        host: String,
    },
    /// Create an activated administrator account.
    CreateAdmin {
        #[arg(long)]
        email: String,
        #[arg(long)]
        password: String,
        #[arg(long, default_value = "Administrator")]
        display_name: String,
    },
    /// Activate a signed-up account.
    ActivateUser { email: String },
    /// Store and decode a video file and register it.
    IngestVideo {
        path: PathBuf,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        mime_type: Option<String>,
    },
    /// Write the annotation export document of one video and scope.
    ExportAnnotations {
        #[arg(long)]
        video_id: VideoId,
        #[arg(long)]
        group_id: Option<GroupId>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a moving-square test video as Y4M.
    SyntheticVideo {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 5)]
        noise: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub type CliResult = Result<(), Box<dyn std::error::Error>>;

fn print_json(value: &serde_json::Value) -> CliResult {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(out.flush()?)
}

pub fn run(cli: Cli) -> CliResult {
    let config = cli.settings.config();
    match cli.command {
        Command::Serve { port, host } => serve(config, &host, port),
        Command::CreateAdmin { email, password, display_name } => {
            let user = App::open(config)?.create_admin(&email, &password, &display_name)?;
            print_json(&json!(user))
        }
        Command::ActivateUser { email } => {
            let user = App::open(config)?.activate_by_email(&email)?;
            print_json(&json!(user))
        }
        Command::IngestVideo { path, name, mime_type } => {
            let name = match name {
                Some(n) => n,
                None => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            };
            let video = App::open(config)?.ingest_video(&path, &name, mime_type, None)?;
            print_json(&json!(video))
        }
        Command::ExportAnnotations { video_id, group_id, out } => {
            let doc = App::open(config)?.export_unchecked(video_id, group_id)?;
            std::fs::write(&out, serde_json::to_vec_pretty(&doc)?)?;
            print_json(&json!({ "out": out, "annotations": doc.annotations.len() }))
        }
        Command::SyntheticVideo { out, frames, noise, seed } => {
            let seq = SyntheticSequence { frames, noise, seed, ..Default::default() };
            write_synthetic_y4m(&seq, &out)?;
            let first = seq.ground_truth(0);
            print_json(&json!({
                "out": out,
                "frames": frames,
                "durationMs": seq.duration_ms(),
                "frameRate": 1000.0 / seq.frame_period_ms as f64,
                "firstBox": { "x": first.x(), "y": first.y(), "w": first.w(), "h": first.h() },
            }))
        }
    }
}

fn serve(config: Config, host: &str, port: u16) -> CliResult {
    if config.token_secret.is_none() {
        warn!("AUTH_TOKEN_SECRET is not set; sessions will not survive a restart");
    }
    let app = Arc::new(App::open(config)?);
    let recovered = app.recover_jobs()?;
    if recovered > 0 {
        warn!(jobs = recovered, "marked interrupted tracking jobs as failed");
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        let addr: SocketAddr = listener.local_addr()?;
        info!(%addr, "serving");
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        crate::routes::serve(app, listener).await
    })?;
    Ok(())
}
