use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use cc_miso::beamforming::ScaOptions;
use cc_miso::content::{run_delivery, CacheLayout, Library};
use cc_miso::experiments::{audit_schedule, emit_csv, run_scheme, validate, write_csv};
use cc_miso::{Error, SimConfig};
use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Monte Carlo simulator for multi-stream coded caching over the MISO
/// broadcast channel. Writes one CSV row per (SNR, trial).
#[derive(Parser, Debug)]
#[command(name = "ccsim", version)]
struct Args {
    /// Number of users.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Transmit antennas.
    #[arg(long = "L")]
    l: Option<usize>,
    /// Library size in files.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Cache size in files.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Users served per transmission beyond the caching gain.
    #[arg(long)]
    alpha: Option<usize>,
    /// Users decoding each stream beyond the caching gain.
    #[arg(long)]
    beta: Option<usize>,
    /// cc-sca, cc-zf, cc-zf-eq, maxmin-snr or unicast.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    snr_start: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    snr_stop: Option<f64>,
    #[arg(long)]
    snr_step: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat `key = value` file with the same keys as the flags. Flags given
    /// on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the schedule audit for the parameters and exit.
    #[arg(long)]
    audit: bool,
    /// Write SCA iteration records as JSON lines to PATH, or stderr.
    #[arg(long, value_name = "PATH", num_args = 0..=1)]
    trace: Option<Option<PathBuf>>,
    /// Write the delivery schedule for demands `d_k = k mod N` as JSON lines.
    #[arg(long, value_name = "PATH")]
    dump_schedule: Option<PathBuf>,
    /// Drop trials whose optimization fails instead of aborting.
    #[arg(long)]
    skip_failed: bool,
}

fn build_config(args: &Args) -> cc_miso::Result<SimConfig> {
    let mut cfg = SimConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_config_file(path)?;
    }
    let pairs: [(&str, Option<String>); 12] = [
        ("K", args.k.map(|v| v.to_string())),
        ("L", args.l.map(|v| v.to_string())),
        ("N", args.n.map(|v| v.to_string())),
        ("M", args.m.map(|v| v.to_string())),
        ("alpha", args.alpha.map(|v| v.to_string())),
        ("beta", args.beta.map(|v| v.to_string())),
        ("scheme", args.scheme.clone()),
        ("snr-start", args.snr_start.map(|v| v.to_string())),
        ("snr-stop", args.snr_stop.map(|v| v.to_string())),
        ("snr-step", args.snr_step.map(|v| v.to_string())),
        ("trials", args.trials.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
    ];
    for (key, value) in pairs {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    cfg.skip_failed |= args.skip_failed;
    Ok(cfg)
}

fn io_err(path: PathBuf) -> impl FnOnce(std::io::Error) -> Error {
    move |source| Error::Io { path, source }
}

fn run(args: &Args) -> cc_miso::Result<bool> {
    let cfg = build_config(args)?;
    let params = validate(&cfg)?;

    if let Some(path) = &args.dump_schedule {
        let demands: Vec<usize> = (0..params.k).map(|k| k % params.n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let lib = Library::random(params.n, CacheLayout::min_file_bytes(&params), &mut rng)?;
        let schedule = run_delivery(&demands, &params, &lib)?;
        let file = std::fs::File::create(path).map_err(io_err(path.clone()))?;
        schedule
            .write_jsonl(std::io::BufWriter::new(file))
            .map_err(io_err(path.clone()))?;
    }

    if args.audit {
        let report = audit_schedule(&params, cfg.seed)?;
        print!("{report}");
        return Ok(report.passed());
    }

    let out = run_scheme(&cfg, &ScaOptions::default())?;
    for (snr, trial, err) in &out.skipped {
        eprintln!("skipped trial {trial} at {snr} dB: {err}");
    }
    match &cfg.out {
        Some(path) => write_csv(&out.rows, path)?,
        None => emit_csv(&out.rows, std::io::stdout().lock()).map_err(io_err("<stdout>".into()))?,
    }

    if let Some(dest) = &args.trace {
        let mut buf = Vec::new();
        for line in &out.traces {
            serde_json::to_writer(&mut buf, line).expect("trace records serialize");
            buf.push(b'\n');
        }
        match dest {
            Some(path) => std::fs::write(path, &buf).map_err(io_err(path.clone()))?,
            None => std::io::stderr()
                .write_all(&buf)
                .map_err(io_err("<stderr>".into()))?,
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("ccsim: {e}");
            ExitCode::from(if e.is_validation() {
                2
            } else if e.is_solver() {
                3
            } else {
                1
            })
        }
    }
}
