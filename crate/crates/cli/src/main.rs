use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use epsbench::generator::{read_series, simulate, write_series};
use epsbench::harness::{describe, run_experiment, ConfigOverrides, ExperimentConfig, ExperimentKind};
use epsbench::infotheory::analyze;
use epsbench::machine::{deserialize, serialize, validate, EpsilonMachine};
use epsbench::predictors::{evaluate_error_rate, matched_configs, Family, NgrcConfig, PredictorSpec, DEFAULT_L2};
use epsbench::renewal::{renewal_fano_curve, SurvivalSpec};
use epsbench::sampler::{sample_epsilon_machine, SamplerConfig};

#[derive(Parser, Debug)]
#[command(name = "epsbench", version, about = "Complexity-calibrated benchmarks for sequence predictors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to built-in defaults.
#[derive(Args, Debug, Default, Clone)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    machines: Option<usize>,
    /// Candidate state count; experiments accept a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<usize>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "m-max")]
    m_max: Option<usize>,
    #[arg(long = "train-len")]
    train_len: Option<usize>,
    #[arg(long = "test-len")]
    test_len: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// TOML file of settings; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Result<ConfigOverrides> {
        let mut o = match &self.config {
            Some(path) => ConfigOverrides::from_file(path)?,
            None => ConfigOverrides::default(),
        };
        macro_rules! flag {
            ($($field:ident => $target:ident),*) => { $( if let Some(v) = &self.$field { o.$target = Some(v.clone()); } )* };
        }
        flag!(seed => seed, out => out_dir, machines => machines, candidates => candidate_sizes, alpha => alpha,
              m_max => m_max, train_len => train_len, test_len => test_len, workers => workers);
        Ok(o)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a random epsilon-machine and write it in the text format.
    Sample {
        #[command(flatten)]
        common: Common,
    },
    /// Exact entropy rate, optimal error and myopic/Fano curves of a machine file.
    Analyze {
        machine: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a symbol series from a machine file.
    Simulate {
        machine: PathBuf,
        #[arg(long)]
        length: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Fano curve of a power-law renewal process.
    Renewal {
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long = "n-max", default_value_t = 1000)]
        n_max: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Train one predictor on a series file and report held-out error.
    Train {
        series: PathBuf,
        #[arg(long, value_parser = parse_family)]
        family: Family,
        /// Memory m that sets the readout size of every family.
        #[arg(long, default_value_t = 10)]
        memory: usize,
        #[arg(long = "lstm-epochs")]
        lstm_epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a figure-style experiment.
    Experiment {
        #[arg(value_enum)]
        which: Which,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Which {
    Survey,
    Fig3,
    Fig4,
    Fig5,
}

fn parse_family(s: &str) -> Result<Family, String> {
    Family::parse(s).ok_or_else(|| format!("unknown family `{s}` (RC_LINEAR, RC_QUADRATIC, NGRC, LSTM)"))
}

fn load_machine(path: &Path) -> Result<EpsilonMachine> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let machine = deserialize(&text).with_context(|| format!("parsing {}", path.display()))?;
    let report = validate(&machine);
    if !report.is_valid() {
        bail!("{} is not a valid epsilon-machine: {}", path.display(), report.issues.join("; "));
    }
    Ok(machine)
}

/// `<out>.manifest.json` next to a single-file output.
fn write_sidecar(out: &Path, manifest: serde_json::Value) -> Result<()> {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    fs::write(&name, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", PathBuf::from(&name).display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample { common } => {
            let o = common.overrides()?;
            let n = o.candidate_sizes.as_ref().and_then(|c| c.first().copied()).unwrap_or(300);
            let config = SamplerConfig::new(n, o.alpha.unwrap_or(1.0), o.seed.unwrap_or(0));
            let report = sample_epsilon_machine(&config)?;
            let text = serialize(&report.machine);
            emit(o.out_dir.as_deref(), &text)?;
            eprintln!(
                "kept {} of {} candidate states (transient fraction {:.4})",
                report.n_recurrent, report.n_candidates, report.transient_fraction
            );
            if let Some(out) = &o.out_dir {
                write_sidecar(out, json!({ "command": "sample", "sampler": config,
                    "n_recurrent": report.n_recurrent, "transient_fraction": report.transient_fraction }))?;
            }
        }
        Command::Analyze { machine, common } => {
            let o = common.overrides()?;
            let m = load_machine(&machine)?;
            let m_max = o.m_max.unwrap_or(15);
            let a = analyze(&m, m_max)?;
            println!("n_states = {}", a.n_states);
            println!("h_mu = {:.4} nats", a.h_mu);
            println!("pe_min = {:.4}", a.pe_min);
            match &o.out_dir {
                Some(out) => {
                    fs::write(out, a.curve_csv()).with_context(|| format!("writing {}", out.display()))?;
                    write_sidecar(out, json!({ "command": "analyze", "machine": machine, "m_max": m_max,
                        "h_mu_nats": a.h_mu, "pe_min": a.pe_min }))?;
                }
                None => print!("{}", a.curve_csv()),
            }
        }
        Command::Simulate { machine, length, common } => {
            let o = common.overrides()?;
            let m = load_machine(&machine)?;
            let seed = o.seed.unwrap_or(0);
            let Some(out) = o.out_dir else { bail!("simulate needs --out <file>") };
            let mut series = simulate(&m, length, seed)?;
            series.machine_id = machine.display().to_string();
            write_series(&out, &series, m.alphabet_size())?;
            eprintln!("wrote {length} symbols to {}", out.display());
        }
        Command::Renewal { beta, n_max, common } => {
            let o = common.overrides()?;
            let m_max = o.m_max.unwrap_or(15);
            let spec = SurvivalSpec::power_law(beta, n_max);
            let curve = renewal_fano_curve(&spec, m_max)?;
            emit(o.out_dir.as_deref(), &curve.to_csv())?;
            eprintln!("h_mu = {:.6} nats, pe_min = {:.6}", curve.analysis.h_mu, curve.analysis.pe_min);
            if let Some(out) = &o.out_dir {
                write_sidecar(out, json!({ "command": "renewal", "beta": beta, "n_max": n_max, "m_max": m_max }))?;
            }
        }
        Command::Train { series, family, memory, lstm_epochs, common } => {
            let o = common.overrides()?;
            let s = read_series(&series)?;
            let train_len = o.train_len.unwrap_or(s.len() * 9 / 10);
            let test_len = o.test_len.unwrap_or(s.len() - train_len.min(s.len()));
            if train_len + test_len > s.len() {
                bail!("train + test length {} exceeds series length {}", train_len + test_len, s.len());
            }
            let seed = o.seed.unwrap_or(0);
            let mut spec = matched_configs(&NgrcConfig::new(memory), seed)
                .into_iter()
                .find(|spec| spec.family() == family)
                .expect("every family has a matched config");
            if let (PredictorSpec::Lstm(c), Some(e)) = (&mut spec, lstm_epochs) {
                c.max_epochs = e;
            }
            let trained = spec.train(&s.symbols, train_len, DEFAULT_L2)?;
            let pe = evaluate_error_rate(&trained, &s.symbols, train_len..train_len + test_len)?;
            println!("family = {family}");
            println!("feature_count = {}", trained.feature_count);
            println!("pe = {pe}");
            if let Some(out) = &o.out_dir {
                fs::write(out, trained.dump()).with_context(|| format!("writing {}", out.display()))?;
                write_sidecar(out, json!({ "command": "train", "series": series, "spec": spec,
                    "train_len": train_len, "test_len": test_len, "pe": pe }))?;
            }
        }
        Command::Experiment { which, common } => {
            let kind = match which {
                Which::Survey => ExperimentKind::Survey,
                Which::Fig3 => ExperimentKind::MyopicCurves,
                Which::Fig4 => ExperimentKind::RenewalCurves,
                Which::Fig5 => ExperimentKind::PredictorComparison,
            };
            let mut config = ExperimentConfig::defaults(kind);
            config.apply(&common.overrides()?);
            let result = run_experiment(&config)?;
            result.write()?;
            eprint!("{}", describe(&result));
            eprintln!("outputs in {}", config.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
