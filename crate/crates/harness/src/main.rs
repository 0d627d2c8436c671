use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sum_core::identity::{run_battery, BatteryOptions};
use sum_core::theory::Theorem;
use sum_harness::bounds::report;
use sum_harness::config::{ExperimentConfig, SValue, VariantConfig};
use sum_harness::experiment::SummaryDoc;
use sum_harness::{run_experiment, HarnessError};

#[derive(Parser)]
#[command(name = "sum-harness", version, about = "Run and verify stochastic unified momentum experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run(RunArgs),
    /// Run the identity and equivalence battery.
    Verify {
        #[arg(long, default_value_t = 200)]
        cases: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        equivalence_steps: usize,
        #[arg(long, default_value_t = 50)]
        max_dim: usize,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
    },
    /// Evaluate theorem bounds for a finished run directory.
    Bounds {
        #[arg(long)]
        run: PathBuf,
        /// Only this theorem (1-4); a missing constant is then an error.
        #[arg(long)]
        theorem: Option<u8>,
    },
    /// Expand a grid over s, β and α and run each point.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated s values; numbers or "gd".
        #[arg(long, value_delimiter = ',')]
        s: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        beta: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = "SUM_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(n) = self.seeds {
            cfg = cfg.with_seed_count(n, self.base_seed);
        } else if let Some(b) = self.base_seed {
            cfg = cfg.with_base_seed(b);
        }
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, out))
    }
}

fn run(cfg: ExperimentConfig, out: PathBuf, jobs: Option<usize>) -> Result<(), HarnessError> {
    let outcome = run_experiment(cfg, &out, jobs)?;
    print!("{}", outcome.summary().table());
    println!("wrote {}", out.display());
    Ok(())
}

fn sweep(args: RunArgs, s: Vec<String>, beta: Vec<f64>, alpha: Vec<f64>) -> Result<(), HarnessError> {
    let (base, out) = args.load()?;
    let mut variants = base.variants.clone();
    if !s.is_empty() || !beta.is_empty() {
        let s_vals: Vec<SValue> = if s.is_empty() {
            base.variants.iter().map(|v| v.s.clone()).collect()
        } else {
            s.iter()
                .map(|v| v.parse::<f64>().map(SValue::Number).unwrap_or_else(|_| SValue::Named(v.clone())))
                .collect()
        };
        let betas = if beta.is_empty() {
            base.variants.iter().map(|v| v.beta).collect()
        } else {
            beta
        };
        variants = betas
            .iter()
            .flat_map(|&b| s_vals.iter().map(move |sv| VariantConfig { s: sv.clone(), beta: b }))
            .collect();
        variants.dedup();
    }
    let points: Vec<(Option<f64>, ExperimentConfig)> = if alpha.is_empty() {
        vec![(None, ExperimentConfig { variants, ..base })]
    } else {
        alpha
            .iter()
            .map(|&a| {
                let schedule = base.schedule.with_alpha(a)?;
                Ok((
                    Some(a),
                    ExperimentConfig {
                        variants: variants.clone(),
                        schedule,
                        ..base.clone()
                    },
                ))
            })
            .collect::<Result<_, HarnessError>>()?
    };
    // Validate the whole grid before running any of it.
    for (_, cfg) in &points {
        cfg.resolve()?;
    }
    for (a, cfg) in points {
        let dir = match a {
            Some(a) => out.join(format!("alpha{}", sum_harness::config::tag(a))),
            None => out.clone(),
        };
        run(cfg, dir, args.jobs)?;
    }
    Ok(())
}

fn bounds(dir: PathBuf, theorem: Option<u8>) -> Result<bool, HarnessError> {
    let doc = SummaryDoc::load(&dir)?;
    let theorems = match theorem {
        Some(n) => vec![Theorem::from_number(n)?],
        None => Theorem::ALL.to_vec(),
    };
    let mut ok = true;
    for v in &doc.variants {
        println!("{}", v.label);
        for &t in &theorems {
            let r = report(t, &doc.problem, v);
            println!("    {}", r.line());
            if theorem.is_some() {
                if let Some(e) = &r.error {
                    eprintln!("error: theorem {}: {e}", t.number());
                    ok = false;
                }
            }
        }
    }
    Ok(ok)
}

fn verify(opts: BatteryOptions) -> Result<bool, HarnessError> {
    let reports = run_battery(opts)?;
    for r in &reports {
        println!("{r}");
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => args.load().and_then(|(cfg, out)| run(cfg, out, args.jobs)).map(|_| true),
        Command::Verify {
            cases,
            steps,
            equivalence_steps,
            max_dim,
            base_seed,
        } => verify(BatteryOptions {
            cases,
            recursion_steps: steps,
            equivalence_steps,
            max_dim,
            base_seed,
        }),
        Command::Bounds { run, theorem } => bounds(run, theorem),
        Command::Sweep { run, s, beta, alpha } => sweep(run, s, beta, alpha).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
