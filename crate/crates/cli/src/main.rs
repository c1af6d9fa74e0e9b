mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{Ctx, Outcome};
use config::RunConfig;
use output::OutDir;

#[derive(Parser, Debug)]
#[command(name = "finsler-morse", version, about = "Finsler geodesics, regularized Lagrangians and Morse data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `iterate`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Sampled Finsler axioms and comparison constants.
    VerifyMetric,
    /// Cutoff parameters and checks of the modified Lagrangian.
    Regularize,
    /// Closed geodesic or geodesic arc by Sobolev descent and Newton.
    Solve,
    /// Morse index and nullity of the solved curve.
    Index,
    /// Lyapunov-Schmidt reduction on the kernel.
    Reduce,
    /// Index and nullity of iterates.
    Iterate,
    /// Gradient consistency checks on the initial curve.
    Gradcheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::VerifyMetric => "verify-metric",
            Command::Regularize => "regularize",
            Command::Solve => "solve",
            Command::Index => "index",
            Command::Reduce => "reduce",
            Command::Iterate => "iterate",
            Command::Gradcheck => "gradcheck",
        }
    }
}

fn load(cli: &Cli) -> anyhow::Result<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| anyhow::anyhow!("--config is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let t0 = Instant::now();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let out = match OutDir::create(&cli.out) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let ctx = Ctx { cfg: &cfg, out: &out, verbose: cli.verbose };
    let result = match cli.command {
        Command::VerifyMetric => commands::verify_metric(&ctx),
        Command::Regularize => commands::regularize(&ctx),
        Command::Solve => commands::solve(&ctx),
        Command::Index => commands::index(&ctx),
        Command::Reduce => commands::reduce(&ctx),
        Command::Iterate => commands::iterate(&ctx),
        Command::Gradcheck => commands::gradcheck(&ctx),
    };
    let mut manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "seed": cfg.seed,
        "config": cfg,
    });
    let code = match result {
        Ok(Outcome { report, checks, derived, tolerances }) => {
            let pass = checks.all_pass();
            let report = json!({ "command": cli.command.name(), "pass": pass, "checks": checks.0, "result": report });
            manifest["derived"] = derived;
            manifest["tolerances"] = tolerances;
            manifest["checks"] = report["checks"].clone();
            manifest["pass"] = json!(pass);
            if let Err(e) = out.json("report.json", &report) {
                eprintln!("error: {e:#}");
                return ExitCode::from(3);
            }
            for c in checks.0.iter().filter(|c| !c.pass) {
                eprintln!("check failed: {} = {:e} (needs {} {:e})", c.name, c.value, c.relation, c.tolerance);
            }
            if pass {
                0
            } else {
                1
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            manifest["error"] = json!(f.message());
            manifest["pass"] = json!(false);
            let _ = out.json("report.json", &json!({ "command": cli.command.name(), "pass": false, "error": f.message() }));
            f.exit_code()
        }
    };
    manifest["exit_code"] = json!(code);
    manifest["wall_time_s"] = json!(t0.elapsed().as_secs_f64());
    if let Err(e) = out.json("manifest.json", &manifest) {
        eprintln!("error: {e:#}");
        return ExitCode::from(3);
    }
    ExitCode::from(code)
}
