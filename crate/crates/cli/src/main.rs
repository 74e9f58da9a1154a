use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rmtnet::cs::{self, CsConfig, MaskSpec};
use rmtnet::error::{Error, Result};
use rmtnet::harness::experiments::{
    model_svg, rows_csv, run_crosstest, run_cs_experiment, run_noise_experiment, write_report,
};
use rmtnet::harness::io::{create_dir, read_json, write_json, write_text};
use rmtnet::harness::{
    add_noise, evaluate, gen_dataset, invert_responses, load_checkpoint, load_response, load_samples,
    run_training, save_response, DatasetKind, DatasetManifest, GenConfig, ModelFile, NoiseSpec, Sample, Split,
    TrainRunConfig, NOISE_LEVELS,
};
use rmtnet::mesh::{build_mesh, default_stations, MeshConfig};
use rmtnet::nn::UNet;
use rmtnet::physics::{forward_response, FrequencySet};

#[derive(Parser)]
#[command(name = "rmtnet", version, about = "RMT forward modelling, compressed sensing and U-Net inversion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a model/response dataset with its split manifest.
    Gen(GenArgs),
    /// Forward-model a model file.
    Forward(ForwardArgs),
    /// Add proportional Gaussian noise to a response file.
    AddNoise(NoiseArgs),
    /// Hide a random fraction of a response's entries.
    Mask(MaskArgs),
    /// Fill masked entries by L1 recovery in the DCT domain.
    Reconstruct(ReconstructArgs),
    /// Train a U-Net from a JSON run configuration.
    Train(TrainArgs),
    /// Invert a response file with a trained checkpoint.
    Invert(InvertArgs),
    /// Score a checkpoint on a dataset split.
    Evaluate(EvaluateArgs),
    #[command(subcommand)]
    Experiment(Experiment),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Grf,
    Blocky,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// JSON generator settings; --kind, --n and --seed take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ForwardArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON with `frequencies_hz` and `station_x_m`.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct SurveyConfig {
    frequencies_hz: Vec<f64>,
    station_x_m: Vec<f64>,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self {
            frequencies_hz: FrequencySet::default().frequencies_hz,
            station_x_m: default_stations(),
        }
    }
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.3125)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use one mask for all four channels.
    #[arg(long)]
    shared: bool,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Regularisation weight relative to the largest DCT coefficient of the data.
    #[arg(long, default_value_t = CsConfig::default().lambda_rel)]
    lambda: f64,
    #[arg(long, default_value_t = CsConfig::default().max_iters)]
    iters: usize,
    #[arg(long, default_value_t = CsConfig::default().tol)]
    tol: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct InvertArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output model file; a section plot is written next to it as .svg.
    #[arg(long)]
    out: PathBuf,
    /// Mesh for the output model file (default mesh otherwise).
    #[arg(long)]
    mesh: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Experiment {
    /// Metrics at increasing noise levels.
    Noise(NoiseExpArgs),
    /// Inversions of original and masked-then-reconstructed data.
    Cs(CsExpArgs),
    /// Every pairing of GRF/blocky networks with GRF/blocky test sets.
    Crosstest(CrossArgs),
}

#[derive(Args)]
struct NoiseExpArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Number of samples taken from the start of the split (0 = all).
    #[arg(long, default_value_t = 0)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = NOISE_LEVELS)]
    levels: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CsExpArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0.3125)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = CsConfig::default().lambda_rel)]
    lambda: f64,
    #[arg(long, default_value_t = CsConfig::default().max_iters)]
    iters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CrossArgs {
    #[arg(long)]
    grf_checkpoint: PathBuf,
    #[arg(long)]
    grf_data: PathBuf,
    #[arg(long)]
    blocky_checkpoint: PathBuf,
    #[arg(long)]
    blocky_data: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long)]
    out: PathBuf,
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn split_samples(dir: &Path, split: Split, n: usize) -> Result<Vec<Sample>> {
    let manifest = DatasetManifest::load(dir)?;
    let mut s = load_samples(dir, &manifest, split)?;
    if n > 0 {
        s.truncate(n);
    }
    if s.is_empty() {
        return Err(Error::Domain(format!("{} split of {} is empty", split.name(), dir.display())));
    }
    Ok(s)
}

fn gen(a: GenArgs) -> Result<()> {
    let mut cfg: GenConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => GenConfig::default(),
    };
    cfg.kind = match a.kind {
        Kind::Grf => DatasetKind::Grf,
        Kind::Blocky => DatasetKind::Blocky,
    };
    cfg.n = a.n;
    cfg.base_seed = a.seed;
    let m = gen_dataset(&cfg, &a.out)?;
    print_json(&serde_json::json!({
        "kind": m.kind.name(),
        "n": m.n,
        "counts": m.counts,
        "out": a.out,
    }))
}

fn forward(a: ForwardArgs) -> Result<()> {
    let survey: SurveyConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SurveyConfig::default(),
    };
    let file = ModelFile::load(&a.model)?;
    let mesh = build_mesh(&file.meta.mesh)?;
    let model = file.to_model(&mesh)?;
    let freqs = FrequencySet::new(survey.frequencies_hz)?;
    let r = forward_response(&model, &mesh, &freqs, &survey.station_x_m)?;
    save_response(&a.out, &r)
}

fn noise(a: NoiseArgs) -> Result<()> {
    let r = load_response(&a.input)?;
    let out = add_noise(
        &r,
        &NoiseSpec {
            level: a.level,
            seed: a.seed,
        },
    )?;
    save_response(&a.out, &out)
}

fn mask(a: MaskArgs) -> Result<()> {
    let r = load_response(&a.input)?;
    let out = cs::mask_response(
        &r,
        &MaskSpec {
            fraction_masked: a.fraction,
            seed: a.seed,
            independent_per_channel: !a.shared,
        },
    )?;
    save_response(&a.out, &out)
}

fn reconstruct(a: ReconstructArgs) -> Result<()> {
    let r = load_response(&a.input)?;
    let cfg = CsConfig {
        lambda_rel: a.lambda,
        max_iters: a.iters,
        tol: a.tol,
    };
    let (out, status) = cs::reconstruct(&r, &cfg)?;
    save_response(&a.out, &out)?;
    print_json(&status)
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg: TrainRunConfig = read_json(&a.config)?;
    let out = run_training(&cfg)?;
    let best = &out.history[out.best_epoch];
    print_json(&serde_json::json!({
        "checkpoint": cfg.out,
        "epochs_run": out.history.len(),
        "best_epoch": out.best_epoch,
        "stopped_early": out.stopped_early,
        "val_loss": best.val_loss,
        "val_mae": best.val_mae,
    }))
}

fn invert(a: InvertArgs) -> Result<()> {
    let (net, _) = load_checkpoint(&a.checkpoint)?;
    let mesh_cfg: MeshConfig = match &a.mesh {
        Some(p) => read_json(p)?,
        None => MeshConfig::default(),
    };
    let mesh = build_mesh(&mesh_cfg)?;
    let r = load_response(&a.data)?;
    let core = invert_responses(&net, &[&r], mesh.core_shape())?.remove(0);
    let bg = core.mean().expect("nonempty core");
    let file = ModelFile::new(core, bg, "inverted", serde_json::Value::Null, None, &mesh);
    file.save(&a.out)?;
    write_text(&a.out.with_extension("svg"), &model_svg(file.core(), "inverted log10 resistivity"))
}

fn load_net(dir: &Path) -> Result<UNet> {
    Ok(load_checkpoint(dir)?.0)
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let net = load_net(&a.checkpoint)?;
    let samples = split_samples(&a.data, a.split, 0)?;
    let manifest = DatasetManifest::load(&a.data)?;
    let report = evaluate(&net, &samples, manifest.kind.name())?;
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    print_json(&serde_json::json!({
        "dataset": report.dataset,
        "n": report.len(),
        "mse": report.mse,
        "mae": report.mae,
        "ssim": report.ssim,
    }))
}

fn noise_exp(a: NoiseExpArgs) -> Result<()> {
    let net = load_net(&a.checkpoint)?;
    let samples = split_samples(&a.data, a.split, a.n)?;
    let report = run_noise_experiment(&net, &samples, &a.levels, a.seed)?;
    create_dir(&a.out)?;
    write_report(&a.out, "noise", &report)?;
    write_text(&a.out.join("noise.csv"), &rows_csv(&report.rows)?)?;
    // one section plot per level for the first sample
    let s = &samples[0];
    write_text(&a.out.join("true_model.svg"), &model_svg(s.model.core(), "true model"))?;
    for row in &report.rows {
        let noisy = add_noise(
            &s.response,
            &NoiseSpec {
                level: row.level,
                seed: a.seed.wrapping_add(s.entry.id as u64),
            },
        )?;
        let inv = invert_responses(&net, &[&noisy], s.model.core_log10.dim())?;
        let pct = (row.level * 100.0).round() as u32;
        write_text(
            &a.out.join(format!("inversion_noise_{pct}pct.svg")),
            &model_svg(inv[0].view(), &format!("inversion, {pct}% noise")),
        )?;
    }
    print_json(&report.rows)
}

fn cs_exp(a: CsExpArgs) -> Result<()> {
    let net = load_net(&a.checkpoint)?;
    let samples = split_samples(&a.data, a.split, a.n)?;
    let cfg = CsConfig {
        lambda_rel: a.lambda,
        max_iters: a.iters,
        ..Default::default()
    };
    create_dir(&a.out)?;
    let report = run_cs_experiment(&net, &samples, a.fraction, a.seed, &cfg, Some(&a.out))?;
    write_report(&a.out, "cs", &report)?;
    write_text(&a.out.join("cs.csv"), &rows_csv(&report.rows)?)?;
    print_json(&serde_json::json!({
        "n": report.rows.len(),
        "n_ssim_at_least_0_9": report.n_ssim_at_least_0_9,
        "median_relative_error": report.histogram.median,
    }))
}

fn crosstest(a: CrossArgs) -> Result<()> {
    let g = load_net(&a.grf_checkpoint)?;
    let b = load_net(&a.blocky_checkpoint)?;
    let gs = split_samples(&a.grf_data, a.split, 0)?;
    let bs = split_samples(&a.blocky_data, a.split, 0)?;
    let rows = run_crosstest(&[("grf", &g), ("blocky", &b)], &[("grf", &gs[..]), ("blocky", &bs[..])])?;
    create_dir(&a.out)?;
    write_report(&a.out, "crosstest", &rows)?;
    write_text(&a.out.join("crosstest.csv"), &rows_csv(&rows)?)?;
    print_json(&rows)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Forward(a) => forward(a),
        Command::AddNoise(a) => noise(a),
        Command::Mask(a) => mask(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Train(a) => train(a),
        Command::Invert(a) => invert(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Experiment(Experiment::Noise(a)) => noise_exp(a),
        Command::Experiment(Experiment::Cs(a)) => cs_exp(a),
        Command::Experiment(Experiment::Crosstest(a)) => crosstest(a),
    }
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
