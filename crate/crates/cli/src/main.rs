//! `cohdem` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cohdem::analysis::{compare_policies, summary_json, sweep, GateAngle, SweepConfig, SweepResult};
use cohdem::circuit::{CircuitProgram, NoiseMode};
use cohdem::codes::{gen_memory, reference_dem, CodeKind, NoiseLevel, NoiseModel};
use cohdem::decode::{decoder_batch, Decoder};
use cohdem::dem::{build_decoding_graph, read_shots, write_shots, Dem, ShotFormat, WeightPolicy};
use cohdem::estimate::{estimate_dem, EstimateOptions};
use cohdem::sampler::{run_coherent_shots, run_pauli_frame_shots};

const EXIT_FAILURE: u8 = 1;
const EXIT_CAPABILITY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "cohdem", version, about = "Coherent-noise memory experiments, DEM estimation and matching decoding")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "COHDEM_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a memory-experiment circuit and its detector coordinates.
    Generate(GenerateArgs),
    /// Sample detection events from a circuit.
    Sample(SampleArgs),
    /// Estimate a detector error model from sampled shots.
    Estimate(EstimateArgs),
    /// Decode shots and report the logical error rate.
    Decode(DecodeArgs),
    /// Logical-error-rate curves over distances and physical error rates.
    Sweep(SweepArgs),
    /// Compare a uniform-weight sweep against an estimated-weight sweep.
    Compare(CompareArgs),
    /// Run the built-in oracle suites.
    Selftest(SelftestArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Code {
    Repetition,
    Surface,
}

impl From<Code> for CodeKind {
    fn from(c: Code) -> Self {
        match c {
            Code::Repetition => CodeKind::Repetition,
            Code::Surface => CodeKind::RotatedSurface,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Level {
    CodeCapacity,
    Phenomenological,
    Circuit,
}

impl From<Level> for NoiseLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::CodeCapacity => NoiseLevel::CodeCapacity,
            Level::Phenomenological => NoiseLevel::Phenomenological,
            Level::Circuit => NoiseLevel::Circuit,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    Coherent,
    Twirled,
}

impl From<Mode> for NoiseMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Coherent => NoiseMode::Coherent,
            Mode::Twirled => NoiseMode::Twirled,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Policy {
    Uniform,
    Estimated,
}

impl From<Policy> for WeightPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Uniform => WeightPolicy::Uniform,
            Policy::Estimated => WeightPolicy::Estimated,
        }
    }
}

/// Angle in radians, or in units of π with a `pi` suffix.
fn parse_angle(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (num, scale) = match s.strip_suffix("pi") {
        Some(n) => (n.trim(), std::f64::consts::PI),
        None => (s, 1.0),
    };
    let v: f64 = if num.is_empty() {
        1.0
    } else {
        num.parse().map_err(|e| format!("bad angle `{s}`: {e}"))?
    };
    Ok(v * scale)
}

fn parse_gate(s: &str) -> Result<GateArg, String> {
    if s == "equal" {
        Ok(GateArg::Equal)
    } else {
        parse_angle(s).map(GateArg::Fixed)
    }
}

#[derive(Copy, Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum GateArg {
    Fixed(f64),
    Equal,
}

#[derive(Args, Debug, Serialize)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    code: Code,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, value_enum)]
    level: Level,
    #[arg(long, value_enum, default_value = "coherent")]
    mode: Mode,
    /// Data rotation angle applied to every data qubit.
    #[arg(long, value_parser = parse_angle, default_value = "0")]
    theta: f64,
    /// Per-qubit data angles, comma separated; overrides --theta.
    #[arg(long, value_parser = parse_angle, value_delimiter = ',')]
    thetas: Vec<f64>,
    /// Ancilla rotation angle (circuit level); defaults to --theta.
    #[arg(long, value_parser = parse_angle)]
    theta_anc: Option<f64>,
    /// Gate error angle after each CNOT (circuit level).
    #[arg(long, value_parser = parse_angle, default_value = "0")]
    theta_g: f64,
    /// Classical readout flip probability (phenomenological level).
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    /// Also write the reference DEM here.
    #[arg(long)]
    dem: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SampleArgs {
    #[arg(short, long)]
    circuit: PathBuf,
    #[arg(short = 'N', long)]
    shots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Readout resamples per coherent trajectory.
    #[arg(short, long, default_value_t = 1)]
    m: usize,
    /// Force the statevector engine for twirled circuits.
    #[arg(long)]
    statevector: bool,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EstimateArgs {
    #[arg(short, long)]
    circuit: PathBuf,
    #[arg(short, long)]
    shots: PathBuf,
    /// Estimate 3- and 4-detector windows and correct edges with them.
    #[arg(long)]
    hyperedges: bool,
    /// Scan every detector pair for unexpected correlations.
    #[arg(long)]
    scan_all_pairs: bool,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct DecodeArgs {
    #[arg(short, long)]
    circuit: PathBuf,
    #[arg(short, long)]
    shots: PathBuf,
    /// Decode with this DEM instead of the circuit's reference DEM.
    #[arg(long)]
    dem: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "estimated")]
    policy: Policy,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(long, value_enum)]
    code: Code,
    #[arg(long, value_enum)]
    level: Level,
    #[arg(long, value_enum, default_value = "coherent")]
    mode: Mode,
    #[arg(long, value_delimiter = ',', required = true)]
    d: Vec<usize>,
    /// Physical error rates sin²θ.
    #[arg(long, value_delimiter = ',', required = true)]
    p: Vec<f64>,
    #[arg(short = 'N', long, default_value_t = 10_000)]
    shots: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    policy: Policy,
    /// Rounds; defaults to r = d.
    #[arg(long)]
    r: Option<usize>,
    /// Gate angle, or `equal` to follow the data angle.
    #[arg(long, value_parser = parse_gate, default_value = "0")]
    theta_g: GateArg,
    #[arg(short, long, default_value_t = 1)]
    m: usize,
    #[arg(long)]
    hyperedges: bool,
    /// Drop the smallest distance from the threshold when it is an outlier.
    #[arg(long)]
    finite_size: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CompareArgs {
    /// Sweep directory decoded with uniform weights.
    #[arg(long)]
    uniform: PathBuf,
    /// Sweep directory decoded with estimated weights.
    #[arg(long)]
    estimated: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SelftestArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Serialize)]
struct ResolvedConfig<'a, T: Serialize> {
    version: &'static str,
    command: &'static str,
    workers: Option<usize>,
    args: &'a T,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_config<T: Serialize>(out: &Path, command: &'static str, workers: Option<usize>, args: &T) -> anyhow::Result<()> {
    let cfg = ResolvedConfig {
        version: cohdem::VERSION,
        command,
        workers,
        args,
    };
    let text = toml::to_string(&cfg).context("serializing config")?;
    let path = if out.is_dir() {
        out.join("config.toml")
    } else {
        sidecar(out, ".config.toml")
    };
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_circuit(path: &Path) -> anyhow::Result<CircuitProgram> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut c = CircuitProgram::parse(&text)?;
    let coords_path = sidecar(path, ".coords");
    if coords_path.exists() {
        c.coords = CircuitProgram::parse_coords(&fs::read_to_string(&coords_path)?)?;
    }
    Ok(c)
}

fn generate(a: &GenerateArgs) -> anyhow::Result<()> {
    let kind: CodeKind = a.code.into();
    let n_data = match kind {
        CodeKind::Repetition => a.d,
        CodeKind::RotatedSurface => a.d * a.d,
    };
    let theta_data = if a.thetas.is_empty() {
        vec![a.theta; n_data]
    } else {
        a.thetas.clone()
    };
    let noise = NoiseModel {
        theta_data,
        theta_anc: a.theta_anc.unwrap_or(a.theta),
        theta_gate: a.theta_g,
        readout_flip: a.q,
        mode: a.mode.into(),
    };
    let c = gen_memory(kind, a.d, a.r, &noise, a.level.into())?;
    fs::write(&a.out, c.to_text())?;
    fs::write(sidecar(&a.out, ".coords"), c.coords_to_text())?;
    if let Some(p) = &a.dem {
        fs::write(p, reference_dem(&c)?.to_text())?;
    }
    Ok(())
}

fn sample(a: &SampleArgs) -> anyhow::Result<()> {
    let c = load_circuit(&a.circuit)?;
    let batch = if c.mode == NoiseMode::Twirled && !a.statevector {
        if a.m != 1 {
            bail!("readout resampling applies to coherent sampling only");
        }
        run_pauli_frame_shots(&c, a.shots, a.seed)?
    } else {
        run_coherent_shots(&c, a.shots, a.seed, a.m, false)?
    };
    write_shots(&batch, &a.out, ShotFormat::from_path(&a.out))?;
    Ok(())
}

fn estimate(a: &EstimateArgs) -> anyhow::Result<()> {
    let c = load_circuit(&a.circuit)?;
    let reference = reference_dem(&c)?;
    let batch = read_shots(&a.shots, ShotFormat::from_path(&a.shots), c.n_detectors(), c.n_observables())?;
    let opts = EstimateOptions {
        hyperedges: a.hyperedges,
        scan_all_pairs: a.scan_all_pairs,
        ..Default::default()
    };
    let est = estimate_dem(&batch, &reference, &opts)?;
    fs::write(&a.out, est.to_dem().to_text())?;
    fs::write(sidecar(&a.out, ".json"), est.diagnostics_json())?;
    Ok(())
}

fn decode(a: &DecodeArgs) -> anyhow::Result<()> {
    let c = load_circuit(&a.circuit)?;
    let dem = match &a.dem {
        Some(p) => Dem::parse(&fs::read_to_string(p)?)?,
        None => reference_dem(&c)?,
    };
    let graph = build_decoding_graph(&dem, a.policy.into())?;
    let batch = read_shots(&a.shots, ShotFormat::from_path(&a.shots), c.n_detectors(), c.n_observables())?;
    let (_, summary) = decoder_batch(&Decoder::new(&graph), &batch)?;
    fs::write(&a.out, summary.to_csv())?;
    println!("{}", summary.to_csv().lines().nth(1).unwrap_or_default());
    Ok(())
}

fn run_sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let mut cfg = SweepConfig::new(a.code.into(), a.level.into(), a.mode.into(), a.d.clone(), a.p.clone());
    cfg.shots = a.shots;
    cfg.policy = a.policy.into();
    cfg.rounds = a.r;
    cfg.gate = match a.theta_g {
        GateArg::Fixed(g) => GateAngle::Fixed(g),
        GateArg::Equal => GateAngle::EqualToData,
    };
    cfg.resample = a.m;
    cfg.hyperedges = a.hyperedges;
    cfg.seed = a.seed;
    let result = sweep(&cfg)?;
    fs::create_dir_all(&a.out)?;
    for curve in &result.curves {
        fs::write(a.out.join(format!("curve_d{}.csv", curve.d)), curve.to_csv())?;
    }
    fs::write(a.out.join("result.json"), serde_json::to_string_pretty(&result)?)?;
    fs::write(a.out.join("summary.json"), summary_json(&result, a.finite_size))?;
    for s in &result.skipped {
        eprintln!("skipped d={} p={}: {}", s.d, s.p, s.reason);
    }
    Ok(())
}

fn load_sweep(dir: &Path) -> anyhow::Result<SweepResult> {
    let path = dir.join("result.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn compare(a: &CompareArgs) -> anyhow::Result<()> {
    let u = load_sweep(&a.uniform)?;
    let e = load_sweep(&a.estimated)?;
    let mut reports = Vec::new();
    for cu in &u.curves {
        let Some(ce) = e.curves.iter().find(|c| c.d == cu.d) else {
            bail!("estimated sweep has no d={} curve", cu.d);
        };
        reports.push(compare_policies(cu, ce)?);
    }
    fs::write(&a.out, serde_json::to_string_pretty(&reports)?)?;
    let worse = reports.iter().filter(|r| r.any_worse()).count();
    println!("{} distance(s) compared, {worse} with estimated weights significantly worse", reports.len());
    Ok(())
}

fn selftest(a: &SelftestArgs) -> anyhow::Result<bool> {
    let mut ok = true;
    for r in cohdem::selftest::run_all(a.seed)? {
        println!("{} {} ({} checks)", if r.passed { "PASS" } else { "FAIL" }, r.name, r.checks);
        for f in &r.failures {
            println!("  {f}");
        }
        ok &= r.passed;
    }
    Ok(ok)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let w = cli.workers;
    match &cli.command {
        Command::Generate(a) => {
            generate(a)?;
            write_config(&a.out, "generate", w, a)?;
        }
        Command::Sample(a) => {
            sample(a)?;
            write_config(&a.out, "sample", w, a)?;
        }
        Command::Estimate(a) => {
            estimate(a)?;
            write_config(&a.out, "estimate", w, a)?;
        }
        Command::Decode(a) => {
            decode(a)?;
            write_config(&a.out, "decode", w, a)?;
        }
        Command::Sweep(a) => {
            run_sweep(a)?;
            write_config(&a.out, "sweep", w, a)?;
        }
        Command::Compare(a) => {
            compare(a)?;
            write_config(&a.out, "compare", w, a)?;
        }
        Command::Selftest(a) => return selftest(a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILURE),
        Err(e) => {
            eprintln!("error: {e:#}");
            let capability = e
                .downcast_ref::<cohdem::Error>()
                .is_some_and(cohdem::Error::is_capability);
            ExitCode::from(if capability { EXIT_CAPABILITY } else { EXIT_FAILURE })
        }
    }
}
