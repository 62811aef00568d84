use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chanmap::beamform::RateReport;
use chanmap::channel::{check_bijectivity, Dataset};
use chanmap::config;
use chanmap::mlp::{load_model, save_model, EpochStats};
use chanmap::pipeline::{self, evaluate, experiment_split, generate_dataset, run_point, ExperimentConfig, RunLabel};
use chanmap::preprocess::AntennaMask;
use chanmap::Result;

#[derive(Parser)]
#[command(
    name = "chanmap",
    version,
    about = "Channel mapping in space and frequency for distributed massive MIMO"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Linear SNR used in rate evaluation.
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = config::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(snr) = self.snr {
            cfg.snr = snr;
        }
        if let Some(epochs) = self.epochs {
            cfg.train.epochs = epochs;
        }
        cfg.validate()?;
        fs::create_dir_all(&self.out)?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the scene's uplink/downlink dataset and write `dataset.bin`.
    Generate(Common),
    /// Minimum pairwise channel separation over an antenna subset.
    Bijectivity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated antenna indices; defaults to all antennas.
        #[arg(long, value_delimiter = ',')]
        subset: Vec<usize>,
    },
    /// Train one network and write `model.bin` plus `history.csv`.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        subset_size: usize,
        #[arg(long, default_value_t = 0)]
        draw: usize,
    },
    /// Evaluate a trained model on the configuration's test split, writing `eval.csv`.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Full experiment: dataset, subset-size sweep and dataset-size sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Skip the dataset-size sweep.
        #[arg(long)]
        no_size_sweep: bool,
    },
}

fn print_epoch(label: &RunLabel, s: &EpochStats) {
    eprintln!(
        "[{label}] epoch {:>3}  loss {:.6e}  {:.2}s",
        s.epoch + 1,
        s.mean_loss,
        s.wall_time_s
    );
}

fn write_history(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "epoch,mean_loss,wall_time_s")?;
    for s in history {
        writeln!(f, "{},{},{}", s.epoch, s.mean_loss, s.wall_time_s)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let cfg = common.load()?;
            let dataset = generate_dataset(&cfg)?;
            let path = common.out.join("dataset.bin");
            dataset.save(&path)?;
            println!(
                "wrote {} samples (M = {}, K = {}) to {}",
                dataset.len(),
                dataset.num_antennas(),
                dataset.num_subcarriers(),
                path.display()
            );
        }
        Command::Bijectivity {
            common,
            dataset,
            subset,
        } => {
            let cfg = common.load()?;
            let dataset = Dataset::load(dataset)?;
            let subset = if subset.is_empty() {
                (0..dataset.num_antennas()).collect()
            } else {
                AntennaMask::new(dataset.num_antennas(), subset)?.selected().to_vec()
            };
            let report = check_bijectivity(&dataset, &subset, cfg.bijectivity_tolerance)?;
            let subset_str: Vec<String> = report.subset.iter().map(usize::to_string).collect();
            let mut f = fs::File::create(common.out.join("bijectivity.csv"))?;
            writeln!(f, "subset,min_pairwise_distance,sample_a,sample_b,verdict")?;
            writeln!(
                f,
                "{},{},{},{},{}",
                subset_str.join(" "),
                report.min_pairwise_distance,
                report.argmin.0,
                report.argmin.1,
                report.verdict
            )?;
            println!(
                "subset [{}]: min distance {:e} between samples {} and {} -> {}",
                subset_str.join(", "),
                report.min_pairwise_distance,
                report.argmin.0,
                report.argmin.1,
                if report.verdict { "separable" } else { "NOT separable" }
            );
        }
        Command::Train {
            common,
            dataset,
            subset_size,
            draw,
        } => {
            let cfg = common.load()?;
            let dataset = Dataset::load(dataset)?;
            let split = experiment_split(&cfg, &dataset)?;
            let run = run_point(&cfg, &dataset, &split, subset_size, draw, 1.0, &mut print_epoch)?;
            save_model(common.out.join("model.bin"), &run.bundle)?;
            write_history(&common.out.join("history.csv"), &run.history)?;
            pipeline::report_csv(std::slice::from_ref(&run.report), common.out.join("train.csv"))?;
            println!(
                "subset {:?}: predicted {:.4}  upper {:.4}  lower {:.4} bits/s/Hz  test NMSE {:.4e}",
                run.report.subset,
                run.report.rate_predicted,
                run.report.rate_upper,
                run.report.rate_lower,
                run.report.test_nmse
            );
        }
        Command::Eval { common, model, dataset } => {
            let cfg = common.load()?;
            let bundle = load_model(model)?;
            let dataset = Dataset::load(dataset)?;
            let split = experiment_split(&cfg, &dataset)?;
            let start = std::time::Instant::now();
            let eval = evaluate(&bundle, &dataset, &split.test, cfg.snr)?;
            let report = RateReport {
                mode: cfg.mode.to_string(),
                subset_size: bundle.mask.len(),
                draw: 0,
                seed: cfg.seed,
                snr: cfg.snr,
                rate_predicted: eval.rate_predicted,
                rate_upper: eval.rate_upper,
                rate_lower: eval.rate_lower,
                test_nmse: eval.test_nmse,
                train_fraction: 1.0,
                wall_time_s: start.elapsed().as_secs_f64(),
                subset: bundle.mask.selected().to_vec(),
            };
            pipeline::report_csv(&[report], common.out.join("eval.csv"))?;
            println!(
                "predicted {:.4}  upper {:.4}  lower {:.4} bits/s/Hz  test NMSE {:.4e}",
                eval.rate_predicted, eval.rate_upper, eval.rate_lower, eval.test_nmse
            );
        }
        Command::Sweep { common, no_size_sweep } => {
            let cfg = common.load()?;
            let dataset = generate_dataset(&cfg)?;
            eprintln!(
                "dataset: {} users, M = {}, K = {}",
                dataset.len(),
                dataset.num_antennas(),
                dataset.num_subcarriers()
            );
            let runs = pipeline::run_experiment(&cfg, &dataset, &mut print_epoch)?;
            let reports: Vec<RateReport> = runs.into_iter().map(|r| r.report).collect();
            pipeline::report_csv(&reports, common.out.join("rates.csv"))?;
            for (size, med) in pipeline::median_rate_by(&reports, |r| r.subset_size) {
                println!("subset size {size:>3}: median predicted rate {med:.4} bits/s/Hz");
            }
            if !no_size_sweep {
                let runs = pipeline::run_dataset_size_sweep(&cfg, &dataset, &mut print_epoch)?;
                let reports: Vec<RateReport> = runs.into_iter().map(|r| r.report).collect();
                pipeline::report_csv(&reports, common.out.join("dataset_size.csv"))?;
                for (fraction, med) in pipeline::median_rate_by(&reports, |r| r.train_fraction) {
                    println!("train fraction {fraction:>4}: median predicted rate {med:.4} bits/s/Hz");
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
