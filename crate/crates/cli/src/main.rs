use clap::{Args, Parser, Subcommand};
use dmpc::harness::stream::{self, GenParams};
use dmpc::harness::{run, Algo, RunConfig, RunError, RunOutput};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dmpc", version, about = "Dynamic graph algorithms on a simulated MPC cluster")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a random update stream.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        updates: usize,
        #[arg(long, default_value_t = 0.7)]
        insert_prob: f64,
        #[arg(long)]
        weighted: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an algorithm over a stream.
    Run(RunArgs),
    /// Run with oracle checks every k updates.
    Verify(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    stream: PathBuf,
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_metrics: Option<PathBuf>,
    #[arg(long)]
    out_dump: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    m_max: Option<usize>,
    #[arg(long)]
    cs: Option<f64>,
    #[arg(long)]
    cm: Option<f64>,
    #[arg(long)]
    verify_every: Option<usize>,
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn config(a: &RunArgs, verify: bool) -> Result<RunConfig, RunError> {
    let mut cfg = RunConfig::new(Algo::Mm);
    let mut algo_set = false;
    if let Some(p) = &a.config {
        let text = std::fs::read_to_string(p).map_err(|e| RunError::Config(format!("{}: {e}", p.display())))?;
        algo_set = text.lines().any(|l| l.split('#').next().unwrap_or("").trim_start().starts_with("algo"));
        cfg.apply_file(&text)?;
    }
    if let Some(x) = a.algo {
        cfg.algo = x;
        algo_set = true;
    }
    if !algo_set {
        return Err(RunError::Config("no algorithm given; pass --algo".into()));
    }
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.epsilon = a.epsilon.unwrap_or(cfg.epsilon);
    cfg.m_max = a.m_max.or(cfg.m_max);
    cfg.c_s = a.cs.unwrap_or(cfg.c_s);
    cfg.c_m = a.cm.unwrap_or(cfg.c_m);
    cfg.verify_every = a.verify_every.or(cfg.verify_every);
    if verify && cfg.verify_every.is_none() {
        cfg.verify_every = Some(1);
    }
    Ok(cfg)
}

fn execute(a: &RunArgs, verify: bool) -> ExitCode {
    let cfg = match config(a, verify) {
        Ok(c) => c,
        Err(e) => return fail(e.exit_code() as u8, e),
    };
    let text = match std::fs::read_to_string(&a.stream) {
        Ok(t) => t,
        Err(e) => return fail(2, format!("{}: {e}", a.stream.display())),
    };
    let st = match stream::parse(&text) {
        Ok(s) => s,
        Err(e) => return fail(2, format!("{}: {e}", a.stream.display())),
    };
    let out = match run(&st, &cfg) {
        Ok(o) => o,
        Err(e) => return fail(e.exit_code() as u8, e),
    };
    if let Err(code) = write_outputs(a, &out) {
        return code;
    }
    report(&cfg, &out);
    ExitCode::SUCCESS
}

fn write_outputs(a: &RunArgs, out: &RunOutput) -> Result<(), ExitCode> {
    for (path, body) in [(&a.out_metrics, &out.metrics_csv), (&a.out_dump, &out.dump)] {
        if let Some(p) = path {
            std::fs::write(p, body).map_err(|e| fail(2, format!("{}: {e}", p.display())))?;
        }
    }
    Ok(())
}

fn report(cfg: &RunConfig, out: &RunOutput) {
    let max = |f: fn(&dmpc::UpdateMetrics) -> usize| out.rows.iter().map(f).max().unwrap_or(0);
    eprintln!(
        "{}: {} updates, S = {}, N = {}, preprocessing {} rounds",
        cfg.algo.name(),
        out.rows.len(),
        out.s,
        out.capacity_n,
        out.preprocess.rounds
    );
    eprintln!(
        "max per update: rounds {}, active {}, comm/round {}",
        max(|m| m.rounds),
        max(|m| m.max_active_per_round),
        max(|m| m.max_comm_per_round)
    );
    match out.entropy {
        Some(h) => eprintln!("comm entropy {h:.4}"),
        None => eprintln!("comm entropy n/a"),
    }
    if cfg.verify_every.is_some() {
        eprintln!("verification passed ({} checks)", out.checks);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Gen { n, updates, insert_prob, weighted, seed, out } => {
            let text = match stream::generate(GenParams { n, updates, insert_prob, weighted, seed }) {
                Ok(t) => t,
                Err(e) => return fail(2, e),
            };
            match out {
                Some(p) => {
                    if let Err(e) = std::fs::write(&p, text) {
                        return fail(2, format!("{}: {e}", p.display()));
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::SUCCESS
        }
        Cmd::Run(a) => execute(&a, false),
        Cmd::Verify(a) => execute(&a, true),
    }
}
