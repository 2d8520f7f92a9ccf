use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use heatlab::kernel::KernelDump;
use heatlab::net::{audit_net, build_net};
use heatlab::Space;
use heatlab_cli::runner::{EXIT_ASSERT, EXIT_STRUCTURAL, EXIT_USAGE};
use heatlab_cli::{resolve_budget, run, suites, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "heatlab", version, about = "Random-walk experiments on metric measure spaces")]
struct Cli {
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Global seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write extremal trial functions next to the tables.
    #[arg(long, global = true)]
    dump_witness: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments of a config file.
    Run { config: PathBuf },
    /// Run a built-in suite: identities, paper-examples or full.
    Suite { name: String },
    /// Build an ε-net of the first [space] of a config and write it as a graph file.
    NetBuild {
        config: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Audit the compatibility constants of a kernel dump.
    AuditKernel {
        kernel: PathBuf,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        hp: f64,
    },
}

fn fail(code: i32, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("heatlab: {msg}");
    ExitCode::from(code as u8)
}

fn load(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    ExperimentConfig::parse(&text, base).map_err(|e| format!("{}: {e}", path.display()))
}

fn execute(cli: &Cli, mut cfg: ExperimentConfig, default_out: PathBuf) -> ExitCode {
    if let Some(s) = cli.seed {
        cfg.reseed(s);
    }
    let budget = match resolve_budget(std::env::var("HEATLAB_BUDGET").ok().as_deref(), cfg.budget) {
        Ok(b) => b,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let opts = RunOptions {
        out: cli.out.clone().or(cfg.out.clone()).unwrap_or(default_out),
        dump_witness: cli.dump_witness,
        budget,
    };
    match run(&cfg, &opts) {
        Ok(report) => {
            print!("{}", report.summary);
            for r in report.records.iter().filter(|r| r.error.is_some()) {
                eprintln!("heatlab: experiment {} ({}): {}", r.index, r.op, r.error.as_deref().unwrap_or(""));
            }
            eprintln!("wrote {} files to {} in {:.1}s", report.manifest.len() + 1, opts.out.display(), report.wall_clock);
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => fail(EXIT_USAGE, format!("{}: {e}", opts.out.display())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(EXIT_USAGE, e);
        }
    }
    match &cli.command {
        Command::Run { config } => match load(config) {
            Ok(cfg) => execute(&cli, cfg, PathBuf::from("heatlab-out")),
            Err(e) => fail(EXIT_USAGE, e),
        },
        Command::Suite { name } => {
            let Some(text) = suites::text(name) else {
                return fail(EXIT_USAGE, format!("unknown suite `{name}` (known: {})", suites::NAMES.join(", ")));
            };
            let cfg = ExperimentConfig::parse(&text, Path::new(".")).expect("built-in suites parse");
            execute(&cli, cfg, Path::new("heatlab-out").join(name))
        }
        Command::NetBuild { config, eps, output } => {
            let cfg = match load(config) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_USAGE, e),
            };
            let Some(sc) = cfg.spaces.first() else {
                return fail(EXIT_USAGE, format!("{}: no [space] block", config.display()));
            };
            let result = Space::build(sc.spec.clone()).and_then(|s| build_net(&s, *eps).map(|n| (s, n)));
            let (space, net) = match result {
                Ok(v) => v,
                Err(e) => return fail(EXIT_USAGE, e),
            };
            if let Err(e) = std::fs::write(output, net.to_text()) {
                return fail(EXIT_USAGE, format!("{}: {e}", output.display()));
            }
            let audit = audit_net(&space, &net, 10_000, 2.0 * eps, cli.seed.unwrap_or(0));
            println!(
                "net: {} vertices, {} edges, max degree {}, connected {}, structural {}",
                net.len(),
                net.edges.len(),
                audit.max_degree,
                audit.connected,
                if audit.structural_ok() { "ok" } else { "FAILED" }
            );
            ExitCode::from(if audit.structural_ok() { 0 } else { EXIT_STRUCTURAL as u8 })
        }
        Command::AuditKernel { kernel, h, hp } => {
            let audited = std::fs::read_to_string(kernel)
                .map_err(|e| e.to_string())
                .and_then(|t| KernelDump::parse(&t).map_err(|e| e.to_string()))
                .and_then(|d| {
                    let space = d.support_space().map_err(|e| e.to_string())?;
                    let k = d.into_kernel(&space, *h, *hp).map_err(|e| e.to_string())?;
                    k.audit_compat(&space, *h, *hp).map_err(|e| e.to_string())
                });
            match audited {
                Ok(a) => {
                    println!("c1_hat = {:?}", a.c1_hat);
                    println!("big_c1_hat = {:?}", a.big_c1_hat);
                    println!("support_ok = {}", a.support_ok);
                    println!("alpha_hat = {:?}", a.alpha_hat);
                    println!("pcomp_hat = {:?}", a.pcomp_hat);
                    println!("points_audited = {}", a.points_audited);
                    println!("verdict = {}", if a.pass() { "PASS" } else { "FAIL" });
                    ExitCode::from(if a.pass() { 0 } else { EXIT_ASSERT as u8 })
                }
                Err(e) => fail(EXIT_USAGE, format!("{}: {e}", kernel.display())),
            }
        }
    }
}
