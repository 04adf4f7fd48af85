//! `nanofiber`: mode solving, synthetic scans and decays, fits and the
//! headline consistency report.

mod commands;
mod config;
mod report;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{Format, Lines, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "nanofiber", version, about = "Dispersive detection of nanofiber-trapped atoms")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true, env = "NANOFIBER_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Format of data records.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Args, Default)]
struct FiberArgs {
    /// Fiber radius, e.g. 250nm.
    #[arg(long, value_parser = units::length)]
    radius: Option<f64>,
    #[arg(long, value_parser = units::length)]
    wavelength: Option<f64>,
    #[arg(long)]
    core_index: Option<f64>,
    #[arg(long)]
    cladding_index: Option<f64>,
    /// Atom distance from the fiber surface, e.g. 230nm.
    #[arg(long, value_parser = units::length)]
    distance: Option<f64>,
    #[arg(long, value_parser = units::length)]
    map_half_width: Option<f64>,
    #[arg(long)]
    map_points: Option<usize>,
}

#[derive(Debug, Args, Default)]
struct EnsembleArgs {
    #[arg(long)]
    atoms: Option<f64>,
    /// Resonant optical density per atom.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    asymmetry: Option<f64>,
    /// Global frequency offset of the lines (MHz).
    #[arg(long, allow_hyphen_values = true)]
    offset: Option<f64>,
    /// Lines in the forward model.
    #[arg(long, value_enum)]
    lines: Option<Lines>,
}

#[derive(Debug, Args, Default)]
struct ProbeArgs {
    /// Probe power, e.g. 5pW.
    #[arg(long, value_parser = units::power)]
    power: Option<f64>,
    #[arg(long)]
    averages: Option<u32>,
    /// First detuning of the scan (MHz).
    #[arg(long, allow_hyphen_values = true)]
    start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    stop: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct NoiseArgs {
    /// Photon shot noise.
    #[arg(long, value_enum)]
    noise: Option<Switch>,
    /// Gaussian detector noise per APD and repetition (W).
    #[arg(long, value_parser = units::power)]
    detector_noise: Option<f64>,
    #[arg(long)]
    quantum_efficiency: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct FitArgs {
    /// Lines in the fit model.
    #[arg(long, value_enum)]
    template: Option<Lines>,
    /// Exclude points whose modeled parallel OD exceeds this.
    #[arg(long)]
    od_threshold: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct DecayArgs {
    #[arg(long)]
    n0: Option<f64>,
    /// Trap lifetime, e.g. 48ms.
    #[arg(long, value_parser = units::time)]
    tau: Option<f64>,
    #[arg(long, value_parser = units::time)]
    duration: Option<f64>,
    /// Additional probe-induced loss rate (1/s).
    #[arg(long)]
    extra_loss: Option<f64>,
    /// Continuous-probe detuning (MHz).
    #[arg(long, allow_hyphen_values = true)]
    detuning: Option<f64>,
    /// Repetitions averaged in the continuous channel.
    #[arg(long)]
    averages: Option<u32>,
    #[arg(long)]
    pulsed_averages: Option<u32>,
    #[arg(long, value_parser = units::power)]
    power: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the HE11 mode; write a summary and intensity maps.
    Modes(FiberArgs),
    /// Simulate a frequency scan.
    Scan {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[command(flatten)]
        probe: ProbeArgs,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Simulate and fit the calibration scan.
    Figure3 {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[command(flatten)]
        probe: ProbeArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Simulate a decay trace in both channels.
    Decay {
        #[command(flatten)]
        decay: DecayArgs,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Simulate and fit a decay trace in both channels.
    Figure4 {
        #[command(flatten)]
        decay: DecayArgs,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Fit a scan or trace CSV written by this tool.
    Fit {
        /// Path of the record; its `.meta.json` sidecar is used when present.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Shot-noise-limited sensitivity.
    Sensitivity {
        #[arg(long, value_parser = units::power)]
        power: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        detuning: Option<f64>,
        /// Per-atom phase-difference slope (mrad MHz/atom).
        #[arg(long)]
        slope: Option<f64>,
        #[arg(long, value_parser = units::time)]
        integration_time: Option<f64>,
    },
    /// Print the consistency table; exits nonzero when a check fails.
    Report {
        #[arg(long)]
        eta: Option<f64>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl FiberArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let f = &mut cfg.fiber;
        set(&mut f.radius, self.radius);
        set(&mut f.wavelength, self.wavelength);
        set(&mut f.core_index, self.core_index);
        set(&mut f.cladding_index, self.cladding_index);
        set(&mut f.surface_distance, self.distance);
        set(&mut f.map_half_width, self.map_half_width);
        set(&mut f.map_points, self.map_points);
    }
}

impl EnsembleArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let e = &mut cfg.ensemble;
        set(&mut e.atoms, self.atoms);
        if self.eta.is_some() {
            e.eta = self.eta;
        }
        set(&mut e.asymmetry, self.asymmetry);
        set(&mut e.offset, self.offset);
        set(&mut e.lines, self.lines);
    }
}

impl ProbeArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let p = &mut cfg.probe;
        set(&mut p.power, self.power);
        set(&mut p.averages, self.averages);
        set(&mut p.start, self.start);
        set(&mut p.stop, self.stop);
        set(&mut p.step, self.step);
    }
}

impl NoiseArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let n = &mut cfg.noise;
        match self.noise {
            Some(Switch::On) => n.shot_noise = true,
            // "off" silences every noise source
            Some(Switch::Off) => {
                n.shot_noise = false;
                n.detector_noise_rms = 0.0;
            }
            None => {}
        }
        set(&mut n.detector_noise_rms, self.detector_noise);
        set(&mut n.quantum_efficiency, self.quantum_efficiency);
    }
}

impl FitArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set(&mut cfg.fit.template, self.template);
        if self.od_threshold.is_some() {
            cfg.fit.od_threshold = self.od_threshold;
        }
    }
}

impl DecayArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let d = &mut cfg.decay;
        set(&mut d.n0, self.n0);
        set(&mut d.tau, self.tau);
        set(&mut d.duration, self.duration);
        set(&mut d.extra_loss_rate, self.extra_loss);
        set(&mut d.detuning, self.detuning);
        set(&mut d.averages, self.averages);
        set(&mut d.pulsed.averages, self.pulsed_averages);
        set(&mut cfg.probe.power, self.power);
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.format, cli.format);
    if cli.output_dir.is_some() {
        cfg.output_dir = cli.output_dir;
    }
    match cli.command {
        Command::Modes(a) => {
            a.apply(&mut cfg);
            commands::modes(&cfg)
        }
        Command::Scan { ensemble, probe, noise } => {
            ensemble.apply(&mut cfg);
            probe.apply(&mut cfg);
            noise.apply(&mut cfg);
            commands::scan(&cfg)
        }
        Command::Figure3 {
            ensemble,
            probe,
            noise,
            fit,
        } => {
            ensemble.apply(&mut cfg);
            probe.apply(&mut cfg);
            noise.apply(&mut cfg);
            fit.apply(&mut cfg);
            commands::figure3(&cfg)
        }
        Command::Decay { decay, noise } => {
            decay.apply(&mut cfg);
            noise.apply(&mut cfg);
            commands::decay(&cfg)
        }
        Command::Figure4 { decay, noise } => {
            decay.apply(&mut cfg);
            noise.apply(&mut cfg);
            commands::figure4(&cfg)
        }
        Command::Fit { input, fit } => {
            fit.apply(&mut cfg);
            commands::fit(&cfg, &input)
        }
        Command::Sensitivity {
            power,
            detuning,
            slope,
            integration_time,
        } => {
            let s = &mut cfg.sensitivity;
            set(&mut s.power, power);
            set(&mut s.detuning, detuning);
            if slope.is_some() {
                s.slope = slope;
            }
            set(&mut s.integration_time, integration_time);
            commands::sensitivity(&cfg)
        }
        Command::Report { eta, json } => {
            if eta.is_some() {
                cfg.ensemble.eta = eta;
            }
            commands::report(&cfg, json)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
