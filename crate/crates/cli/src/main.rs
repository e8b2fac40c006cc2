use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qudit_learn::data::Split;
use qudit_learn::experiment::{
    export_bloch, mos_states, resolve_centers, run_experiment, train_restarts, ExperimentConfig,
    ExperimentKind, GroupSetup, MosConfig, RunContext, DATA_DIR_ENV,
};
use qudit_learn::metric::TrainConfig;
use qudit_learn::mos::GAConfig;
use qudit_learn::qudit::EncodingSpec;
use qudit_learn::{Error, Result};

/// Qudit metric-learning classifiers: experiments, MOS generation and state export.
#[derive(Parser, Debug)]
#[command(name = "qudit-learn", version)]
struct Cli {
    /// Directory holding iris.csv, wdbc.csv, digits8x8.csv and mnist/.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for restarts.
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a maximally orthogonal state set.
    Mos {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        states: usize,
        /// Exponent of the pair potential.
        #[arg(long, default_value_t = 2.0)]
        exponent: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value = "mos")]
        out: PathBuf,
    },
    /// Train the first configured model and write its states per data point.
    BlochExport {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a config and check that its values and files are valid.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

fn load(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let ctx = |jobs| RunContext {
        data_dir: cli.data_dir.clone(),
        jobs,
    };
    match cli.command {
        Command::Run {
            config,
            seed,
            jobs,
            out,
        } => {
            let cfg = load(&config, seed, out)?;
            let record = run_experiment(&cfg, &ctx(jobs))?;
            let mut files = record.write(&cfg.output_dir)?;
            if cfg.kind == ExperimentKind::MosGenerate {
                let path = cfg.output_dir.join("mos.txt");
                mos_states(&cfg)?.save(&path)?;
                files.push(path);
            }
            for g in &record.groups {
                println!(
                    "d={} encoding={} method={}{} median={:.4} max={:.4}",
                    g.dim,
                    g.encoding,
                    g.method,
                    g.pca_dim.map(|p| format!(" pca={p}")).unwrap_or_default(),
                    g.test_accuracy.median,
                    g.test_accuracy.max
                );
            }
            for n in &record.noise {
                println!(
                    "t2={:.3e} rabi*t2={:.3} median={:.4} max={:.4}",
                    n.t2, n.rabi_t2, n.test_accuracy.median, n.test_accuracy.max
                );
            }
            if let Some(m) = &record.mos {
                println!("energy={:.6} generations={}", m.energy, m.generations);
            }
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Mos {
            dim,
            states,
            exponent,
            seed,
            jobs,
            out,
        } => {
            let cfg = ExperimentConfig {
                kind: ExperimentKind::MosGenerate,
                seed,
                output_dir: out,
                dataset: None,
                model: Default::default(),
                mos: Some(MosConfig {
                    dim,
                    states,
                    ga: GAConfig {
                        exponent,
                        ..GAConfig::default()
                    },
                }),
                noise: None,
                pca: None,
            };
            let record = run_experiment(&cfg, &ctx(jobs))?;
            let mut files = record.write(&cfg.output_dir)?;
            let path = cfg.output_dir.join("mos.txt");
            mos_states(&cfg)?.save(&path)?;
            files.push(path);
            let m = record.mos.as_ref().expect("mos run records the set");
            println!("energy={:.6} generations={}", m.energy, m.generations);
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::BlochExport {
            config,
            seed,
            jobs,
            split,
            out,
        } => {
            let cfg = load(&config, seed, None)?;
            let c = ctx(jobs);
            cfg.validate(&c.data_dir)?;
            let dcfg = cfg
                .dataset
                .as_ref()
                .ok_or_else(|| Error::Config("bloch-export needs a [dataset] section".into()))?;
            let ds = dcfg.load(&c.data_dir, cfg.seed)?;
            let m = &cfg.model;
            let dim = m.dims[0];
            let method = m.methods[0];
            let variant = m
                .encodings
                .first()
                .copied()
                .unwrap_or(method.default_encoding());
            let refs = resolve_centers(m, dim, ds.num_classes(), cfg.seed)?;
            let train = ds.samples(Split::Train);
            let target = ds.samples(split.into());
            let setup = GroupSetup {
                train: &train,
                test: &target,
                spec: EncodingSpec::new(variant, dim, ds.dim(), m.layers)?,
                config: TrainConfig {
                    method,
                    optimizer: m.optimizer.clone(),
                    restarts: m.restarts,
                    max_evals: m.max_evals.unwrap_or(usize::MAX),
                    seed: cfg.seed,
                },
                refs: Some(&refs),
                basis: None,
                pca_dim: dcfg.pca_dim,
            };
            let best = c
                .install(|| train_restarts(&setup))??
                .into_iter()
                .min_by(|a, b| a.record.train_loss.total_cmp(&b.record.train_loss))
                .expect("at least one restart");
            let rows = export_bloch(&best.model, &target, &out)?;
            println!(
                "restart {} train_loss={:.6} accuracy={:.4}",
                best.record.restart, best.record.train_loss, best.record.test_accuracy
            );
            println!("wrote {rows} rows to {}", out.display());
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate(&cli.data_dir)?;
            println!("{}: ok ({:?})", config.display(), cfg.kind);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
