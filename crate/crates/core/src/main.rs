use clap::{Args, Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use foliated_trace::geometric::{find_relative_periods, RelativePeriodComponent};
use foliated_trace::harness::config::presets;
use foliated_trace::harness::experiment::{group_periods, prepare};
use foliated_trace::harness::oracle::{brute_force_periods, compare_periods, naive_spectral_sum};
use foliated_trace::harness::output::{periods_csv, probe_csv, report_text, scan_csv, write_files};
use foliated_trace::harness::{run_experiment, ExperimentConfig, HarnessError};
use foliated_trace::maslov::maslov_index;
use foliated_trace::spectral::{
    amplitude_probe, singularity_scan, smoothed_trace, GaussianProbe, ProbeOptions, ScanOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "foliated-trace",
    version,
    about = "Wave-trace experiments on linear foliations of flat tori"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relative-period table.
    Periods(Common),
    /// Singularity scan of the smoothed trace.
    Scan(Common),
    /// Amplitude ladder at one time.
    Probe {
        #[command(flatten)]
        common: Common,
        /// Probe centre.
        #[arg(long)]
        t: f64,
    },
    /// Maslov data of every component.
    Maslov(Common),
    /// Full spectral/geometric comparison report.
    Compare(Common),
    /// Brute-force validation oracles.
    Oracle(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Kronecker,
    Product,
    CircleInT3,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration used when no file is given.
    #[arg(long, value_enum, default_value = "product")]
    preset: Preset,
    /// Output directory; results go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace existing output files.
    #[arg(long)]
    overwrite: bool,
    /// Override the eigenvalue cutoff.
    #[arg(long)]
    cutoff: Option<f64>,
    /// Override the end of the scan window.
    #[arg(long)]
    tmax: Option<f64>,
    /// Seed for sampled checks.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => match self.preset {
                Preset::Kronecker => presets::kronecker(),
                Preset::Product => presets::product([0.0, 0.0]),
                Preset::CircleInT3 => presets::circle_in_t3(),
            },
        };
        if let Some(c) = self.cutoff {
            config.spectral.cutoff = c;
        }
        if let Some(t) = self.tmax {
            config.scan.t_max = t;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(dir) = &self.out {
            config.output.dir = Some(dir.display().to_string());
        }
        config.output.overwrite |= self.overwrite;
        config.validate()?;
        for w in config.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(config)
    }
}

fn emit(config: &ExperimentConfig, files: &[(&str, String)]) -> Result<(), HarnessError> {
    match &config.output.dir {
        Some(dir) => {
            for p in write_files(std::path::Path::new(dir), files, config.output.overwrite)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            for (_, body) in files {
                match stdout.write_all(body.as_bytes()) {
                    Ok(()) => {}
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
                    Err(e) => return Err(HarnessError::io(std::path::Path::new("<stdout>"), e)),
                }
            }
        }
    }
    Ok(())
}

fn components(config: &ExperimentConfig) -> Result<Vec<RelativePeriodComponent>, HarnessError> {
    let model = config.build_model()?;
    let kernel = config.build_kernel(&model)?;
    find_relative_periods(&model, &kernel, config.scan.t_max)
        .map_err(|e| HarnessError::stage("periods", e))
}

fn run(command: Command) -> Result<bool, HarnessError> {
    match command {
        Command::Periods(common) => {
            let config = common.load()?;
            emit(
                &config,
                &[("periods.csv", periods_csv(&components(&config)?))],
            )?;
            Ok(true)
        }
        Command::Scan(common) => {
            let config = common.load()?;
            let prepared = prepare(&config)?;
            let sp = &config.spectral;
            let scan = singularity_scan(
                &prepared.spectrum,
                &prepared.weights,
                &ScanOptions::new(config.scan.t_min, config.scan.t_max, sp.eps, sp.scan_s),
            )
            .map_err(|e| HarnessError::stage("scan", e))?;
            for peak in &scan.peaks {
                eprintln!("peak t = {:.6} |amp| = {:.3e}", peak.t, peak.amplitude);
            }
            emit(&config, &[("scan.csv", scan_csv(&scan))])?;
            Ok(true)
        }
        Command::Probe { common, t } => {
            let config = common.load()?;
            let prepared = prepare(&config)?;
            let r = amplitude_probe(
                &prepared.spectrum,
                &prepared.weights,
                prepared.model.q(),
                t,
                &config.spectral.s_ladder,
                config.spectral.eps,
                ProbeOptions::default(),
            )
            .map_err(|e| HarnessError::stage("probe", e))?;
            eprintln!(
                "exponent = {:.4} phase = {:.4} |alpha0| = {:.6e} residual = {:.2e}",
                r.fitted_exponent,
                r.fitted_phase,
                r.fitted_alpha0.norm(),
                r.exponent_residual
            );
            emit(
                &config,
                &[("probes.csv", probe_csv(std::slice::from_ref(&r)))],
            )?;
            Ok(!r.noisy)
        }
        Command::Maslov(common) => {
            let config = common.load()?;
            let model = config.build_model()?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut body = String::from("t,v,signature,kappa,sigma\n");
            for c in components(&config)? {
                let data = maslov_index(&model, &c, 5, &mut rng)
                    .map_err(|e| HarnessError::stage("maslov", e))?;
                let v: Vec<String> = c.v.iter().map(|k| k.to_string()).collect();
                body.push_str(&format!(
                    "{:.12e},{},{},{},{}\n",
                    c.t,
                    v.join(" "),
                    data.signature,
                    data.kappa,
                    data.sigma
                ));
            }
            emit(&config, &[("maslov.csv", body)])?;
            Ok(true)
        }
        Command::Compare(common) => {
            let config = common.load()?;
            let report = run_experiment(&config)?;
            emit(
                &config,
                &[
                    ("report.txt", report_text(&report)),
                    ("periods.csv", periods_csv(&report.components)),
                    ("scan.csv", scan_csv(&report.scan)),
                    ("probes.csv", probe_csv(&report.probes)),
                ],
            )?;
            Ok(report.all_pass())
        }
        Command::Oracle(common) => {
            let config = common.load()?;
            let prepared = prepare(&config)?;
            let support = prepared.kernel.support_radius();
            let comps = find_relative_periods(&prepared.model, &prepared.kernel, config.scan.t_max)
                .map_err(|e| HarnessError::stage("periods", e))?;
            let oracle = brute_force_periods(&prepared.model, support, config.scan.t_max, 2e-3)?;
            let agreement = compare_periods(&comps, &oracle, prepared.model.q());
            let periods_ok = agreement.pass(1e-6);
            let mut body = format!(
                "periods matched = {} max |dt| = {:.3e} max |dw| = {:.3e} pass = {periods_ok}\n",
                agreement.matched, agreement.max_t_error, agreement.max_shift_error
            );
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let sp = &config.spectral;
            let groups = group_periods(&prepared.model, &comps);
            let mut sums_ok = true;
            for _ in 0..10 {
                let t = groups
                    .get(rng.gen_range(0..groups.len().max(1)))
                    .map_or(config.scan.t_max / 2.0, |g| g.t)
                    + rng.gen_range(-2.0..2.0) * sp.eps;
                let s = rng.gen_range(0.2..1.0) * sp.scan_s;
                let probe = GaussianProbe::new(t, sp.eps, s);
                let fast = smoothed_trace(
                    &prepared.spectrum,
                    &prepared.weights,
                    prepared.model.q(),
                    &probe,
                )
                .map_err(|e| HarnessError::stage("oracle", e))?
                .value;
                let slow = naive_spectral_sum(
                    &prepared.model,
                    &prepared.kernel,
                    sp.cutoff,
                    prepared.spectrum.leaf_cutoff(),
                    &probe,
                );
                let rel = (fast - slow).norm() / slow.norm();
                sums_ok &= rel <= 1e-10;
                body.push_str(&format!(
                    "probe t = {t:.6} s = {s:.2} relative difference = {rel:.3e}\n"
                ));
            }
            body.push_str(&format!("spectral sums pass = {sums_ok}\n"));
            emit(&config, &[("oracle.txt", body)])?;
            Ok(periods_ok && sums_ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
