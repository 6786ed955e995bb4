//! `specter` command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use specter_core::detect;
use specter_core::keystream::{ChipStream, CHIP_DOMAIN};
use specter_core::pipeline;
use specter_core::robustness::{self, FedAvgConfig};
use specter_core::tensorstore::f64_to_f16;
use specter_core::{EmbedParams, Error, TensorStore};

const EXIT_INTEGRITY: u8 = 2;
const EXIT_CHANNEL: u8 = 3;
const EXIT_FORMAT: u8 = 4;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "specter",
    version,
    about = "Spread-spectrum payload embedding in tensor stores"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic Gaussian host (one tensor named "w").
    GenHost {
        #[arg(long)]
        len: u32,
        #[arg(long)]
        std: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "f32")]
        dtype: DTypeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed a payload file into a host.
    Embed {
        #[arg(long)]
        host: PathBuf,
        #[arg(long)]
        payload: PathBuf,
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover a payload of known length.
    Extract {
        #[arg(long)]
        host: PathBuf,
        #[arg(long)]
        payload_len: usize,
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        out: PathBuf,
        /// Write the recovered bytes even if the digest does not match.
        #[arg(long)]
        force: bool,
    },
    /// Estimate gain, noise and SNR from the preamble.
    Probe {
        #[arg(long)]
        host: PathBuf,
        #[command(flatten)]
        shape: ShapeArgs,
    },
    /// Apply a perturbation to a host.
    #[command(subcommand)]
    Attack(AttackCommand),
    /// Simulate federated averaging with one adversarial participant.
    Fedavg {
        #[arg(long)]
        participants: usize,
        #[arg(long)]
        boost: f64,
        #[arg(long)]
        update_std: f64,
        #[arg(long, default_value_t = 1)]
        rounds: u32,
        /// Server learning rate.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        sim_seed: u64,
        #[arg(long)]
        host: PathBuf,
        #[arg(long)]
        payload: PathBuf,
        #[command(flatten)]
        shape: ShapeArgs,
    },
    /// Statistical comparisons between hosts.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Dump a store header as JSON lines.
    Inspect { file: PathBuf },
}

#[derive(Subcommand)]
enum AttackCommand {
    Prune {
        #[arg(long, value_enum)]
        mode: PruneMode,
        #[arg(long, default_value_t = 0.0)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Noise {
        #[arg(long)]
        std: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Quantize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Two-sample KS test plus distribution reports.
    Ks {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        filter: Option<String>,
        /// Also compare `b` against a pure spread-spectrum signal of this amplitude.
        #[arg(long)]
        signal_gamma: Option<f64>,
        #[arg(long, default_value_t = 100)]
        bits_per_block: usize,
        #[arg(long, default_value_t = 0)]
        signal_seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PruneMode {
    Magnitude,
    Random,
    Shuffle,
}

#[derive(Clone, Copy, ValueEnum)]
enum DTypeArg {
    F32,
    F16,
}

#[derive(Args)]
struct ShapeArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 2e-3)]
    gamma: f64,
    #[arg(long, default_value_t = 6)]
    sf: usize,
    #[arg(long, default_value_t = 100)]
    bits_per_block: usize,
    #[arg(long, default_value_t = 2048)]
    ldpc_n: usize,
    #[arg(long)]
    filter: Option<String>,
    /// Allow gamma outside [1e-5, 9e-3].
    #[arg(long)]
    unsafe_gamma: bool,
}

impl ShapeArgs {
    fn params(&self) -> EmbedParams {
        EmbedParams {
            seed: self.seed,
            gamma: self.gamma,
            spreading_factor: self.sf,
            bits_per_block: self.bits_per_block,
            ldpc_n: self.ldpc_n,
            unsafe_gamma: self.unsafe_gamma,
        }
    }
}

fn is_raw(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "f32")
}

fn load(path: &Path) -> specter_core::Result<TensorStore> {
    if is_raw(path) {
        TensorStore::from_raw_f32(&std::fs::read(path)?)
    } else {
        TensorStore::load(path)
    }
}

fn save(store: &TensorStore, path: &Path) -> specter_core::Result<()> {
    if is_raw(path) {
        std::fs::write(path, store.to_raw_f32()?)?;
        Ok(())
    } else {
        store.save(path)
    }
}

fn print_json(value: &impl serde::Serialize) {
    // A closed pipe downstream is not an error worth reporting.
    let _ = writeln!(
        std::io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(value).expect("serializable")
    );
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Integrity => EXIT_INTEGRITY,
        Error::Capacity { .. } | Error::SignalNotFound { .. } => EXIT_CHANNEL,
        Error::Format(_) => EXIT_FORMAT,
        Error::InvalidParams(_) | Error::EmptySelection | Error::EmptyPayload => EXIT_USAGE,
        _ => 1,
    }
}

fn run(cli: Cli) -> specter_core::Result<()> {
    match cli.command {
        Command::GenHost {
            len,
            std,
            seed,
            dtype,
            out,
        } => {
            let mut values = vec![0.0; len as usize];
            ChipStream::new(seed, CHIP_DOMAIN).fill_normal(0, std, &mut values);
            let store = match dtype {
                DTypeArg::F32 => TensorStore::single_f32(&values.iter().map(|&v| v as f32).collect::<Vec<_>>())?,
                DTypeArg::F16 => TensorStore::single_f16(&values.iter().map(|&v| f64_to_f16(v)).collect::<Vec<_>>())?,
            };
            save(&store, &out)
        }
        Command::Embed {
            host,
            payload,
            shape,
            out,
        } => {
            let store = load(&host)?;
            let payload = std::fs::read(payload)?;
            let (stego, record) = pipeline::embed(&store, &payload, &shape.params(), shape.filter.as_deref())?;
            save(&stego, &out)?;
            print_json(&record);
            Ok(())
        }
        Command::Extract {
            host,
            payload_len,
            shape,
            out,
            force,
        } => {
            let store = load(&host)?;
            let view = store.gather(shape.filter.as_deref())?;
            let x = pipeline::extract_values_detailed(&view.values, payload_len, &shape.params())?;
            eprintln!(
                "gain {:.6} sigma {:.4} snr {:.2} dB, {}/{} LDPC blocks converged",
                x.estimate.gain, x.estimate.sigma, x.estimate.snr_db, x.converged_blocks, x.ldpc_blocks
            );
            if !x.digest_ok {
                if force {
                    std::fs::write(&out, &x.payload)?;
                    eprintln!("warning: digest mismatch; wrote best-effort bytes");
                }
                return Err(Error::Integrity);
            }
            std::fs::write(&out, &x.payload)?;
            Ok(())
        }
        Command::Probe { host, shape } => {
            let store = load(&host)?;
            let est = pipeline::probe(&store, &shape.params(), shape.filter.as_deref())?;
            print_json(&est);
            Ok(())
        }
        Command::Attack(attack) => run_attack(attack),
        Command::Fedavg {
            participants,
            boost,
            update_std,
            rounds,
            alpha,
            sim_seed,
            host,
            payload,
            shape,
        } => {
            let store = load(&host)?;
            let payload = std::fs::read(payload)?;
            let config = FedAvgConfig {
                participants,
                rounds,
                boost,
                benign_update_std: update_std,
                alpha,
                sim_seed,
            };
            let report =
                robustness::fedavg_survival(&store, shape.filter.as_deref(), &payload, &shape.params(), &config)?;
            print_json(&report);
            Ok(())
        }
        Command::Analyze(AnalyzeCommand::Ks {
            a,
            b,
            filter,
            signal_gamma,
            bits_per_block,
            signal_seed,
        }) => {
            let va = load(&a)?.gather(filter.as_deref())?.values;
            let vb = load(&b)?.gather(filter.as_deref())?.values;
            let mut report = json!({
                "ks": detect::ks_two_sample(&va, &vb)?,
                "a": detect::distribution_report(&va)?,
                "b": detect::distribution_report(&vb)?,
            });
            if let Some(gamma) = signal_gamma {
                report["binomial_probe"] =
                    serde_json::to_value(detect::binomiality_probe(&vb, signal_seed, gamma, bits_per_block)?)
                        .expect("serializable");
            }
            print_json(&report);
            Ok(())
        }
        Command::Inspect { file } => {
            let store = load(&file)?;
            let mut out = std::io::stdout().lock();
            let _ = writeln!(
                out,
                "{}",
                json!({"magic": "TSG1", "version": specter_core::tensorstore::VERSION, "tensor_count": store.tensors().len()})
            );
            for t in store.tensors() {
                let _ = writeln!(
                    out,
                    "{}",
                    json!({
                        "name": t.name(),
                        "dtype": t.dtype(),
                        "shape": t.shape(),
                        "elements": t.len(),
                        "bytes": t.data().len(),
                    })
                );
            }
            Ok(())
        }
    }
}

fn run_attack(attack: AttackCommand) -> specter_core::Result<()> {
    let (input, out) = match &attack {
        AttackCommand::Prune { input, out, .. }
        | AttackCommand::Noise { input, out, .. }
        | AttackCommand::Quantize { input, out } => (input.clone(), out.clone()),
    };
    let store = load(&input)?;
    let mut view = store.gather(None)?;
    match attack {
        AttackCommand::Prune { mode, ratio, seed, .. } => match mode {
            PruneMode::Magnitude => {
                robustness::prune_magnitude(&mut view.values, ratio)?;
            }
            PruneMode::Random => {
                robustness::prune_random(&mut view.values, ratio, seed)?;
            }
            PruneMode::Shuffle => robustness::shuffle(&mut view.values, seed)?,
        },
        AttackCommand::Noise { std, seed, .. } => robustness::add_noise(&mut view.values, std, seed)?,
        AttackCommand::Quantize { .. } => robustness::quantize_roundtrip(&mut view.values),
    }
    save(&store.scatter(&view)?, &out)
}

fn init_threads() {
    if let Some(n) = std::env::var("SPECTER_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
