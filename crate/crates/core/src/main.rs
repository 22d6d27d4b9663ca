//! `actcomp`: generate fixtures, run the codecs end to end, emit sweep and
//! analysis CSVs, drive the serving simulator, and micro-benchmark codec
//! timings. Data goes to stdout or the named output file; diagnostics go to
//! stderr. Exit codes: 0 success, 1 usage error, 2 data error.

use std::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use actcomp::baselines::{
    compress_lowrank, compress_topk, decompress_lowrank, decompress_topk, LowRankMethod,
};
use actcomp::container::{read_payload, write_payload, Payload};
use actcomp::fourier::{
    choose_cutoffs, compress_fourier, compress_fourier_with_cutoffs, decompress_fourier,
    CodecConfig, RetentionMode,
};
use actcomp::metrics::{
    ratio_sweep, reconstruction_error, spectral_profile, sweep_to_csv, token_similarity, CodecId,
};
use actcomp::netsim::{parse_sim_config, result_csv_row, simulate};
use actcomp::tensor::{generate_synthetic, load_activation, store_activation, SynthSpec};

#[derive(Parser)]
#[command(name = "actcomp", disable_help_subcommand = true)]
struct Cli {
    /// Seed for all randomized behavior of the subcommand.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodecArg {
    Fourier,
    Topk,
    Svd,
    Qr,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Corner,
    Centered,
}

impl From<ModeArg> for RetentionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Corner => RetentionMode::Corner,
            ModeArg::Centered => RetentionMode::Centered,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic activation fixture.
    Gen {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// Number of low-frequency cosine modes.
        #[arg(long)]
        modes: usize,
        /// Spectral decay exponent of the mode amplitudes.
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        /// White-noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compress an activation file with one codec.
    Compress {
        #[arg(long, value_enum)]
        codec: CodecArg,
        /// Target compression ratio; must be > 1.
        #[arg(long)]
        ratio: f64,
        #[arg(long, value_enum, default_value = "corner")]
        mode: ModeArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct an activation file from a compressed payload.
    Decompress {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the relative reconstruction error between two activation files.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long = "test")]
        test: PathBuf,
    },
    /// Equal-budget codec/ratio sweep; writes the measurement CSV.
    Sweep {
        /// Comma-separated subset of fourier,topk,svd,qr.
        #[arg(long)]
        codecs: String,
        /// Comma-separated target ratios.
        #[arg(long)]
        ratios: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds; the sweep repeats once per seed.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Emit the cumulative spectral-energy profile (and optionally token
    /// similarity) of an activation file.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 8)]
        profile_steps: usize,
        #[arg(long, default_value_t = false)]
        similarity: bool,
    },
    /// Run the multi-client serving simulation from a key=value config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time compress+decompress per codec over a list of sizes.
    Bench {
        /// Comma-separated SxD sizes, e.g. 256x256,512x512.
        #[arg(long)]
        sizes: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Err(message) = init_thread_pool() {
        eprintln!("error: {message}");
        return ExitCode::from(1);
    }

    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

enum Failure {
    Usage(String),
    Data(Box<dyn Error>),
}

impl<E: Error + 'static> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(Box::new(e))
    }
}

/// SPECTRAL_THREADS caps the rayon pool; 0 or unset means automatic.
fn init_thread_pool() -> Result<(), String> {
    let Ok(raw) = std::env::var("SPECTRAL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| format!("SPECTRAL_THREADS must be a non-negative integer, got {raw:?}"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Gen { rows, cols, modes, beta, sigma, out } => {
            let a = generate_synthetic(rows, cols, &SynthSpec::new(modes, beta, sigma, seed))?;
            store_activation(&a, &out)?;
            eprintln!("wrote {}x{} activation to {}", rows, cols, out.display());
            Ok(())
        }
        Command::Compress { codec, ratio, mode, input, out } => {
            if ratio.is_nan() || ratio <= 1.0 {
                return Err(Failure::Usage(format!(
                    "--ratio must satisfy r > 1 (got {ratio}); a compression ratio at or \
                     below 1 would not shrink the payload"
                )));
            }
            let a = load_activation(&input)?;
            let payload = match codec {
                CodecArg::Fourier => {
                    let cfg = CodecConfig::new(ratio, mode.into())?;
                    Payload::Fourier(compress_fourier(&a, &cfg)?)
                }
                CodecArg::Topk => {
                    let budget = budget_for(&a, ratio);
                    Payload::TopK(compress_topk(&a, budget)?)
                }
                CodecArg::Svd => {
                    let budget = budget_for(&a, ratio);
                    Payload::LowRank(compress_lowrank(&a, budget, LowRankMethod::Svd)?)
                }
                CodecArg::Qr => {
                    let budget = budget_for(&a, ratio);
                    Payload::LowRank(compress_lowrank(&a, budget, LowRankMethod::Qr)?)
                }
            };
            write_payload(&payload, &out)?;
            eprintln!(
                "compressed {} -> {} ({} payload bytes)",
                input.display(),
                out.display(),
                payload.payload_bytes()
            );
            Ok(())
        }
        Command::Decompress { input, out } => {
            let a = match read_payload(&input)? {
                Payload::Fourier(p) => decompress_fourier(&p)?,
                Payload::TopK(p) => decompress_topk(&p)?,
                Payload::LowRank(p) => decompress_lowrank(&p)?,
            };
            store_activation(&a, &out)?;
            eprintln!("reconstructed {} to {}", input.display(), out.display());
            Ok(())
        }
        Command::Metrics { reference, test } => {
            let a = load_activation(&reference)?;
            let b = load_activation(&test)?;
            println!("rel_error {:.8e}", reconstruction_error(&a, &b)?);
            Ok(())
        }
        Command::Sweep { codecs, ratios, input, out, seeds } => {
            let codecs = parse_codecs(&codecs)?;
            let ratios = parse_f64_list(&ratios, "--ratios")?;
            let seeds = match seeds {
                Some(s) => parse_u64_list(&s, "--seeds")?,
                None => vec![seed],
            };
            let a = load_activation(&input)?;
            let mut rows = Vec::new();
            for _ in &seeds {
                rows.extend(ratio_sweep(&a, &codecs, &ratios, RetentionMode::Corner)?);
            }
            std::fs::write(&out, sweep_to_csv(&rows))?;
            eprintln!("wrote {} sweep rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Analyze { input, profile_steps, similarity } => {
            if profile_steps == 0 {
                return Err(Failure::Usage("--profile-steps must be >= 1".into()));
            }
            let a = load_activation(&input)?;
            println!("block_fraction,energy_fraction");
            for (fraction, energy) in spectral_profile(&a, profile_steps) {
                println!("{:.8e},{:.8e}", fraction, energy);
            }
            if similarity {
                println!("token_similarity {:.8e}", token_similarity(&a)?);
            }
            Ok(())
        }
        Command::Simulate { config, out } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg = parse_sim_config(&text)?;
            let result = simulate(&cfg)?;
            let csv = format!(
                "n_clients,link_gbps,ratio,mean_s,p95_s,utilization\n{}\n",
                result_csv_row(&cfg, &result)
            );
            std::fs::write(&out, csv)?;
            eprintln!(
                "simulated {} requests; mean response {:.6}s",
                result.completed, result.mean_response_s
            );
            Ok(())
        }
        Command::Bench { sizes, out } => {
            let sizes = parse_sizes(&sizes)?;
            let csv = run_bench(&sizes, seed)?;
            std::fs::write(&out, csv)?;
            eprintln!("wrote bench results to {}", out.display());
            Ok(())
        }
    }
}

/// Byte budget for the sparse/low-rank codecs at a requested ratio:
/// floor(original/ratio), so the achieved ratio is at least the request.
fn budget_for(a: &actcomp::tensor::ActivationMatrix, ratio: f64) -> usize {
    ((a.rows() * a.cols() * 4) as f64 / ratio).floor() as usize
}

fn parse_codecs(raw: &str) -> Result<Vec<CodecId>, Failure> {
    raw.split(',')
        .map(|s| match s.trim() {
            "fourier" => Ok(CodecId::Fourier),
            "topk" => Ok(CodecId::TopK),
            "svd" => Ok(CodecId::Svd),
            "qr" => Ok(CodecId::Qr),
            other => Err(Failure::Usage(format!(
                "unknown codec {other:?}; expected fourier, topk, svd, or qr"
            ))),
        })
        .collect()
}

fn parse_f64_list(raw: &str, flag: &str) -> Result<Vec<f64>, Failure> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Failure::Usage(format!("{flag}: {e} in {s:?}")))
        })
        .collect()
}

fn parse_u64_list(raw: &str, flag: &str) -> Result<Vec<u64>, Failure> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| Failure::Usage(format!("{flag}: {e} in {s:?}")))
        })
        .collect()
}

fn parse_sizes(raw: &str) -> Result<Vec<(usize, usize)>, Failure> {
    raw.split(',')
        .map(|s| {
            let s = s.trim();
            let (rows, cols) = s
                .split_once('x')
                .ok_or_else(|| Failure::Usage(format!("--sizes: expected SxD, got {s:?}")))?;
            let parse = |v: &str| {
                v.parse::<usize>()
                    .map_err(|e| Failure::Usage(format!("--sizes: {e} in {s:?}")))
            };
            Ok((parse(rows)?, parse(cols)?))
        })
        .collect()
}

const BENCH_RATIO: f64 = 8.0;

/// Median of 5 timed runs after one warm-up.
fn median_time<T>(mut op: impl FnMut() -> T) -> (T, f64) {
    let mut result = op();
    let mut times = Vec::with_capacity(5);
    for _ in 0..5 {
        let start = Instant::now();
        result = op();
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (result, times[2])
}

/// Times every codec per size on a seeded smooth fixture; all codecs share
/// the byte budget of the frequency codec at ratio 8 (or the full block when
/// the size is too small for that ratio).
fn run_bench(sizes: &[(usize, usize)], seed: u64) -> Result<String, Failure> {
    let mut csv = String::from("rows,cols,codec,t_compress_s,t_decompress_s,t_total_s\n");
    for &(rows, cols) in sizes {
        let modes = (rows * cols / 4).min(8);
        let a = generate_synthetic(rows, cols, &SynthSpec::new(modes, 2.0, 0.01, seed))?;
        let (keep_rows, keep_cols) = if (rows * cols) as f64 >= 2.0 * BENCH_RATIO {
            choose_cutoffs(rows, cols, BENCH_RATIO)?
        } else {
            (rows, cols)
        };
        let budget = 8 * keep_rows * keep_cols;

        let mut record = |codec: &str, t_comp: f64, t_dec: f64| {
            csv.push_str(&format!(
                "{rows},{cols},{codec},{:.8e},{:.8e},{:.8e}\n",
                t_comp,
                t_dec,
                t_comp + t_dec
            ));
        };

        let (p, t_comp) = median_time(|| {
            compress_fourier_with_cutoffs(&a, keep_rows, keep_cols, RetentionMode::Corner)
        });
        let p = p?;
        let (_, t_dec) = median_time(|| decompress_fourier(&p));
        record("fourier", t_comp, t_dec);

        let (p, t_comp) = median_time(|| compress_topk(&a, budget));
        let p = p?;
        let (_, t_dec) = median_time(|| decompress_topk(&p));
        record("topk", t_comp, t_dec);

        for (name, method) in [("svd", LowRankMethod::Svd), ("qr", LowRankMethod::Qr)] {
            let (p, t_comp) = median_time(|| compress_lowrank(&a, budget, method));
            let p = p?;
            let (_, t_dec) = median_time(|| decompress_lowrank(&p));
            record(name, t_comp, t_dec);
        }
    }
    Ok(csv)
}
