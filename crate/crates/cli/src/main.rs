use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use isac_doppler::experiments::{
    read_panel, trial_panel, write_panel, write_records_file, write_summaries_file, FixedPoint,
    PanelRequest,
};
use isac_doppler::validate::run_checks;
use isac_doppler::{estimate, run_sweep, EstimatorConfig, ProfileId, SweepConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Doppler estimation for asynchronous bistatic ISAC with a moving receiver.
#[derive(Debug, Parser)]
#[command(name = "isac-doppler", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write records.csv and summaries.json.
    Sweep(SweepArgs),
    /// Estimate (f_D,t, eta, v_rx) from a panel CSV (stdin by default).
    Estimate(EstimateArgs),
    /// Generate one synthetic panel CSV (stdout by default).
    GenPanel(GenPanelArgs),
    /// Run the built-in invariant checks.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// TOML sweep configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of trials per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Restricts the sweep to one profile.
    #[arg(long)]
    profile: Option<ProfileId>,
    /// Synthesize panels through the waveform chain.
    #[arg(long)]
    waveform: bool,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Panel CSV; reads stdin when absent.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Treat the receiver as static.
    #[arg(long)]
    static_rx: bool,
}

#[derive(Debug, Args)]
struct GenPanelArgs {
    #[arg(long, default_value = "60ghz")]
    profile: ProfileId,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    n_static: usize,
    #[arg(long, default_value_t = 16.0)]
    window_ms: f64,
    /// CIR-peak SNR (dB).
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    snr_db: f64,
    #[arg(long, default_value_t = 5.0)]
    sigma_aoa_deg: f64,
    /// Drop phase noise and AoA errors.
    #[arg(long)]
    noiseless: bool,
    /// Synthesize through the waveform chain.
    #[arg(long)]
    waveform: bool,
    /// Writes OUT/panel.csv instead of printing.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Run(String),
    /// The reader of stdout went away, as with `| head`.
    ClosedPipe,
}

impl From<isac_doppler::Error> for Failure {
    fn from(e: isac_doppler::Error) -> Self {
        match e {
            isac_doppler::Error::Io(e) => e.into(),
            e => Failure::Run(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            Failure::ClosedPipe
        } else {
            Failure::Run(e.to_string())
        }
    }
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    if !args.config.is_file() {
        return Err(Failure::Usage(format!(
            "config file {} not found",
            args.config.display()
        )));
    }
    let text = fs::read_to_string(&args.config)?;
    let mut config = SweepConfig::from_toml(&text)?;
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    if let Some(n) = args.trials {
        config.n_trials = n;
    }
    if let Some(p) = args.profile {
        config.profiles = vec![p];
    }
    config.waveform |= args.waveform;

    let result = run_sweep(&config)?;
    fs::create_dir_all(&args.out)?;
    write_records_file(&args.out.join("records.csv"), &result.records)?;
    write_summaries_file(&args.out.join("summaries.json"), &result.summaries)?;

    let mut stdout = io::stdout().lock();
    for c in &result.summaries {
        let med = |s: Option<isac_doppler::experiments::BoxStats>| {
            s.map_or("-".to_string(), |s| format!("{:.4}", s.median))
        };
        writeln!(
            stdout,
            "{} {}={} median eps_fd={} eps_eta={} eps_v={} failed={}/{}",
            c.profile,
            c.axis.as_str(),
            c.axis_value,
            med(c.eps_fd),
            med(c.eps_eta),
            med(c.eps_v),
            c.n_failed,
            c.n_trials
        )?;
    }
    Ok(())
}

fn estimate_cmd(args: EstimateArgs) -> Result<(), Failure> {
    let file = match &args.panel {
        Some(path) => read_panel(fs::File::open(path)?)?,
        None => {
            let mut buf = Vec::new();
            io::stdin().read_to_end(&mut buf)?;
            read_panel(buf.as_slice())?
        }
    };
    let config = EstimatorConfig {
        static_rx: args.static_rx,
        ..EstimatorConfig::default()
    };
    let est = estimate(&file.panel, file.wavelength_m, &config)?;
    let json = serde_json::json!({
        "f_d_target": est.f_d_target,
        "eta": est.eta,
        "v_rx": est.v_rx,
        "residual_norm": est.residual_norm,
        "converged": est.converged,
        "branch": est.branch,
    });
    println!("{json}");
    Ok(())
}

fn gen_panel(args: GenPanelArgs) -> Result<(), Failure> {
    let point = FixedPoint {
        n_static: args.n_static,
        window_ms: args.window_ms,
        snr_db: args.snr_db,
        sigma_aoa_deg: args.sigma_aoa_deg,
        t_scale: 1.0,
    };
    let request = PanelRequest {
        waveform: args.waveform,
        static_rx: false,
        noiseless: args.noiseless,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (profile, _, panel) = trial_panel(args.profile, &point, &request, &mut rng)?;
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_panel(
                fs::File::create(dir.join("panel.csv"))?,
                &panel,
                profile.wavelength_m,
            )?;
        }
        None => write_panel(io::stdout().lock(), &panel, profile.wavelength_m)?,
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let outcomes = run_checks(args.seed);
    for c in &outcomes {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", c.name, c.detail);
    }
    if outcomes.iter().all(|c| c.passed) {
        Ok(())
    } else {
        Err(Failure::Run("some checks failed".into()))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::GenPanel(a) => gen_panel(a),
        Command::Validate(a) => validate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) | Err(Failure::ClosedPipe) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            let _ = Cli::command().print_help();
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
