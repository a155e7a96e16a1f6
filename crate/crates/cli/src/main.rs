use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ipop_core::circuit::{energy_ledger, simulate_with};
use ipop_core::config::{parse_config, ConfigErrors, RunConfig, Section, Value};
use ipop_core::energy::{summarize, HarvestOperatingPoint};
use ipop_core::mech::{frequency_response, simulate_motion, ExcitationSpec};
use ipop_core::presets::{preset_text, PRESET_NAMES};
use ipop_core::report::{self, num, Table};
use ipop_verify as reproduce;
use ipop_core::sweep::{clock_ratio_report, run_sweep, run_sweep_2d, SweepAxis};
use ipop_core::Error;

/// Simulator for in-plane overlap plate electrostatic vibration harvesters.
#[derive(Debug, Parser)]
#[command(name = "ipop", version)]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created when missing.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Start from a shipped preset (a config file may override it).
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    /// Refuse nondeterministic sources. Every run is deterministic, so this only asserts it.
    #[arg(long, global = true)]
    seedless: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Capacitance over the travel range.
    Device,
    /// Proof-mass motion and frequency response.
    Mech,
    /// Lossless harvested energy, power and density.
    Energy,
    /// Transient simulation of the pump and flyback circuit.
    Circuit,
    /// Grid sweep of one or two circuit parameters.
    Sweep,
    /// Run the reference reproduction suite.
    Reproduce,
}

enum Failure {
    Core(Error),
    Config(ConfigErrors),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Core(Error::Domain(_) | Error::Config(_)) => 1,
            Failure::Core(Error::Numerical(_)) => 2,
            Failure::Core(Error::Io(_)) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self.code() {
            1 => "validation",
            2 => "numerical",
            _ => "io",
        }
    }

    fn report(&self) -> serde_json::Value {
        match self {
            Failure::Config(errs) => json!({
                "kind": self.kind(),
                "exit_code": self.code(),
                "message": format!("{} configuration error(s)", errs.0.len()),
                "issues": errs.0.iter().map(|i| json!({"line": i.line, "message": i.message})).collect::<Vec<_>>(),
            }),
            Failure::Core(e) => json!({
                "kind": self.kind(),
                "exit_code": self.code(),
                "message": e.to_string(),
            }),
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(errs) => errs.to_string(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

type Run<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {e}", cli.out.display());
        return ExitCode::from(3);
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            let body = serde_json::to_string_pretty(&f.report()).expect("json of plain values");
            if let Err(e) = fs::write(cli.out.join("error.json"), body + "\n") {
                eprintln!("error: cannot write error.json: {e}");
            }
            ExitCode::from(f.code())
        }
    }
}

fn load_config(cli: &Cli) -> Run<RunConfig> {
    match (&cli.config, &cli.preset) {
        (Some(path), preset) => {
            let mut text = fs::read_to_string(path)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
            if let Some(name) = preset {
                text = format!("preset = {name}\n{text}");
            }
            parse_config(&text).map_err(Failure::Config)
        }
        (None, Some(name)) => {
            if preset_text(name).is_none() {
                return Err(Error::Config(format!(
                    "unknown preset '{name}'; available: {}",
                    PRESET_NAMES.join(", ")
                ))
                .into());
            }
            Ok(RunConfig::from_preset(name)?)
        }
        (None, None) => Err(Error::Config("give --config PATH or --preset NAME".into()).into()),
    }
}

fn dispatch(cli: &Cli) -> Run<()> {
    let out = cli.out.as_path();
    if let Command::Reproduce = cli.command {
        return run_reproduce(out);
    }
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Device => run_device(&cfg, out),
        Command::Mech => run_mech(&cfg, out),
        Command::Energy => run_energy(&cfg, out),
        Command::Circuit => run_circuit(&cfg, out),
        Command::Sweep => run_sweep_cmd(&cfg, out),
        Command::Reproduce => unreachable!(),
    }
}

fn write(out: &Path, name: &str, t: &Table) -> Run<()> {
    t.write(&out.join(name))?;
    Ok(())
}

fn run_device(cfg: &RunConfig, out: &Path) -> Run<()> {
    let dev = cfg.device_model()?;
    dev.validate()?;
    write(out, "device.csv", &report::device_table(&dev, 101)?)?;
    let mut s = Table::new(["quantity", "value"]);
    for (k, v) in [
        ("c_max_F", dev.c_max()),
        ("c_min_F", dev.c_min()),
        ("delta_c_F", dev.c_max() - dev.c_min()),
    ] {
        s.push(vec![k.into(), num(v)]);
    }
    write(out, "device_summary.csv", &s)?;
    println!(
        "C_max {:.2} pF, C_min {:.2} pF, dC {:.2} pF",
        dev.c_max() * 1e12,
        dev.c_min() * 1e12,
        (dev.c_max() - dev.c_min()) * 1e12
    );
    Ok(())
}

fn run_mech(cfg: &RunConfig, out: &Path) -> Run<()> {
    let res = cfg.resonator()?;
    let exc = cfg.excitation()?;
    let (duration, step) = cfg.resonator_timing()?;
    let tone = match cfg.get(Section::Resonator, "excitation_frequency") {
        Some(Value::Number(f)) => *f,
        _ => res.natural_frequency(),
    };
    let single = ExcitationSpec::Sinusoid { amplitude: exc.amplitude(), frequency: tone };
    let trace = simulate_motion(&res, &single, duration, step)?;
    write(out, "motion.csv", &report::motion_table(&trace))?;
    println!(
        "f0 {:.2} Hz, {:.2} Hz tone: max |x| {:.3} um",
        res.natural_frequency(),
        tone,
        trace.max_abs_displacement() * 1e6
    );
    if let ExcitationSpec::FrequencySweep { .. } = exc {
        let resp = frequency_response(&res, exc.amplitude(), &exc.frequencies(), step)?;
        write(out, "response.csv", &report::response_table(&resp))?;
        if let Some(f) = ipop_core::mech::peak_frequency(&resp) {
            println!("response peak at {f:.2} Hz");
        }
    }
    Ok(())
}

fn run_energy(cfg: &RunConfig, out: &Path) -> Run<()> {
    let op = cfg.operating_point()?;
    let s = summarize(&op)?;
    write(out, "energy.csv", &report::energy_table(&[s]))?;
    let text = report::energy_text(&s);
    fs::write(out.join("energy.txt"), &text)?;
    print!("{text}");
    if let Some((c_max, f, depth)) = cfg.projection() {
        let drie = cfg.device_model()?.drie;
        let c_min = ipop_core::device::cmin_vs_drie_depth(&drie, depth)?;
        let p = summarize(&HarvestOperatingPoint {
            v_in: op.v_in,
            c_max,
            c_min,
            frequency: f,
            device_volume: op.device_volume,
        })?;
        write(out, "projection.csv", &report::energy_table(&[p]))?;
        println!("backside etch of {:.1} um: {:.2} uW/cm^3", depth * 1e6, p.density);
    }
    Ok(())
}

fn run_circuit(cfg: &RunConfig, out: &Path) -> Run<()> {
    let params = cfg.circuit_params()?;
    let duration = cfg.circuit_duration()?;
    let drive = cfg.drive(duration)?;
    let mut opts = cfg.sim_options();
    if opts.sample_interval.is_none() {
        opts.sample_interval = Some(0.05 / drive.mech_frequency());
    }
    let run = simulate_with(&params, &drive, duration, &opts)?;
    write(out, "trajectory.csv", &report::trajectory_table(&run))?;
    write(out, "ledger.csv", &report::ledger_table(&run.ledger))?;
    let ledger = energy_ledger(&run)?;
    println!(
        "{} s simulated, {} flybacks; mean V_OUT {} V; net converted {} J; balance residual {}",
        num(duration),
        run.flybacks.len(),
        num(run.mean_v_out),
        num(ledger.net_converted),
        num(ledger.relative_residual())
    );
    if run.short_circuit_regime {
        println!("flyback ran in the short-circuit regime");
    }
    Ok(())
}

fn run_sweep_cmd(cfg: &RunConfig, out: &Path) -> Run<()> {
    let spec = cfg.sweep_spec()?;
    if let Some((axis2, grid2)) = cfg.sweep_second_axis()? {
        let map = run_sweep_2d(&spec.base, spec.axis, &spec.grid, axis2, &grid2, spec.metric)?;
        write(out, "map.csv", &report::map_table(&map))?;
        write(out, "map_long.csv", &report::map_long_table(&map))?;
        match map.argmax_values() {
            Some((r, c)) => println!("{} argmax at {} = {}, {} = {}", spec.metric, spec.axis, num(r), axis2, num(c)),
            None => println!("no grid cell produced a value"),
        }
        return Ok(());
    }
    let result = run_sweep(&spec)?;
    write(out, "sweep.csv", &report::sweep_table(&result))?;
    match result.argmax_value() {
        Some(v) => println!("{} argmax at {} = {}", spec.metric, spec.axis, num(v)),
        None => println!("no grid point produced a value"),
    }
    if spec.axis == SweepAxis::ClockPeriod {
        println!("mechanical cycles per flyback: {}", num(clock_ratio_report(&spec.base, &result)?));
    }
    Ok(())
}

fn run_reproduce(out: &Path) -> Run<()> {
    let runs = reproduce::run_all();
    let outcomes: Vec<_> = runs.iter().map(|r| r.outcome.clone()).collect();
    for r in &runs {
        for (name, t) in &r.tables {
            write(out, &format!("{name}.csv"), t)?;
        }
    }
    write(out, "criteria.csv", &reproduce::outcome_table(&outcomes))?;
    for o in &outcomes {
        println!("{}", o.line());
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria pass", outcomes.len());
    Ok(())
}
