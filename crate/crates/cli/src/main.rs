//! `llie`: one binary for data preparation, training, enhancement, metrics
//! and capture-pose planning.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use llie_core::denoiser::Denoiser;
use llie_core::diffusion::cosine_schedule;
use llie_core::imaging::{
    demosaic_bilinear, format_manifest, parse_manifest, read_gray, read_rgb, write_pnm, ImagePair, ManifestEntry, Pnm,
};
use llie_core::metrics::{score, QualityScores, CSV_HEADER};
use llie_core::spectral::{fag, DEFAULT_CUTOFF, DEFAULT_LAMBDA};
use llie_core::trainer::{curve_csv, enhance, synth_dataset, train, TrainConfig};
use llie_core::{metrics, CoreError};
use llie_posegen::config::PoseConfig;
use llie_posegen::io::{projection_csvs, read_workspace_csv, workspace_csv, WorkspaceRow};
use llie_posegen::sampling::{stratified_sample, Bins, Spherical};
use llie_posegen::workspace::{build_workspace, spin_capture_poses};
use llie_posegen::PosegenError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 16-bit rasters keep written images close to their f64 values.
const OUT_MAXVAL: u16 = 65535;
const MANIFEST: &str = "manifest.tsv";

#[derive(Parser)]
#[command(name = "llie", version, about = "Low-light enhancement by guided conditional diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Seed {
    /// Seed for every random draw; commands without randomness accept and ignore it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Bilinear demosaic of an RGGB Bayer PGM into a PPM.
    Demosaic {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        seed: Seed,
    },
    /// Guidance map of an image, written as a 16-bit PGM.
    Fag {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
        /// Disc radius in frequency bins at a 256-pixel reference extent.
        #[arg(long, default_value_t = DEFAULT_CUTOFF)]
        cutoff: f64,
        #[command(flatten)]
        seed: Seed,
    },
    /// Noise schedule as CSV (t, beta, alpha, gamma).
    ScheduleDump {
        #[arg(long = "T", default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0.008)]
        offset: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        seed: Seed,
    },
    /// Synthetic low/normal-light pairs plus a manifest.
    SynthData {
        dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[command(flatten)]
        seed: Seed,
    },
    /// Train a denoiser on the pairs listed in `<data-dir>/manifest.tsv`.
    Train {
        config: PathBuf,
        data_dir: PathBuf,
        out_ckpt: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        peak_lr: Option<f64>,
    },
    /// Enhance one low-light image with a trained checkpoint.
    Enhance {
        ckpt: PathBuf,
        low: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        seed: Seed,
    },
    /// PSNR, SSIM, FSIM (LPIPS as n/a) for two images or a manifest of pairs.
    Metrics {
        a: Option<PathBuf>,
        b: Option<PathBuf>,
        /// Score the first column of each line against the second.
        #[arg(long, conflicts_with_all = ["a", "b"])]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        seed: Seed,
    },
    /// Build the collision-free working space from a chain config.
    Workspace {
        config: PathBuf,
        #[arg(long, default_value_t = 500)]
        candidates: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Offsets the Halton sequence; the sequence itself has no randomness.
        #[command(flatten)]
        seed: Seed,
    },
    /// Stratified selection of capture poses from a workspace CSV.
    SamplePoses {
        workspace: PathBuf,
        #[arg(long, default_value = "2,4,2", value_parser = parse_bins)]
        bins: Bins,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Emit the 36 spin capture poses of every selected pose; needs the chain config.
        #[arg(long)]
        spin: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        seed: Seed,
    },
    /// x-z and y-z end-effector projections of the feasible poses.
    WorkspacePlot {
        workspace: PathBuf,
        config: PathBuf,
        /// Writes `<prefix>_xz.csv` and `<prefix>_yz.csv`.
        out_prefix: PathBuf,
        #[command(flatten)]
        seed: Seed,
    },
}

fn parse_bins(s: &str) -> Result<Bins, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad bin count {p:?}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [r, az, el] if r > 0 && az > 0 && el > 0 => Ok(Bins { r, az, el }),
        _ => Err("expected three positive counts r,az,el".into()),
    }
}

enum Failure {
    Data(String),
    Numeric(String),
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Numeric(_) => Failure::Numeric(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<PosegenError> for Failure {
    fn from(e: PosegenError) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Full training config stored next to a checkpoint so enhancement uses the
/// same schedule and guidance settings.
fn train_config_path(ckpt: &Path) -> PathBuf {
    sibling(ckpt, ".train.toml")
}

fn load_pairs(dir: &Path) -> Result<Vec<ImagePair>, Failure> {
    let entries = parse_manifest(&read_text(&dir.join(MANIFEST))?)?;
    if entries.is_empty() {
        return Err(Failure::Data(format!("{}: no pairs listed", dir.join(MANIFEST).display())));
    }
    entries
        .iter()
        .map(|e| Ok(ImagePair::new(read_gray(&dir.join(&e.low))?, read_gray(&dir.join(&e.high))?, e.stratum, e.exposure)?))
        .collect()
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Demosaic { input, output, .. } => {
            let f = fs::File::open(&input).map_err(|e| io_err(&input, e))?;
            let bayer = Pnm::read(std::io::BufReader::new(f))?.to_bayer()?;
            write_pnm(&output, &Pnm::from_rgb(&demosaic_bilinear(&bayer), OUT_MAXVAL))?;
        }
        Command::Fag { input, output, lambda, cutoff, .. } => {
            let g = fag(&read_rgb(&input)?, lambda, cutoff)?;
            write_pnm(&output, &Pnm::from_gray(&g, OUT_MAXVAL))?;
        }
        Command::ScheduleDump { steps, offset, out, .. } => {
            emit(out.as_deref(), &cosine_schedule(steps, offset)?.to_csv())?;
        }
        Command::SynthData { dir, n, size, seed } => {
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            let pairs = synth_dataset(n, size, seed.seed)?;
            let mut entries = Vec::with_capacity(n);
            for (i, p) in pairs.iter().enumerate() {
                let (low, high) = (format!("low_{i:04}.pgm"), format!("high_{i:04}.pgm"));
                write_pnm(&dir.join(&low), &Pnm::from_gray(&p.low, OUT_MAXVAL))?;
                write_pnm(&dir.join(&high), &Pnm::from_gray(&p.high, OUT_MAXVAL))?;
                entries.push(ManifestEntry { low, high, stratum: p.stratum, exposure: p.exposure });
            }
            write_text(&dir.join(MANIFEST), &format_manifest(&entries))?;
        }
        Command::Train { config, data_dir, out_ckpt, seed, epochs, peak_lr } => {
            let mut cfg = TrainConfig::from_toml(&read_text(&config)?)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.peak_lr = peak_lr.unwrap_or(cfg.peak_lr);
            cfg.validate()?;
            let pairs = load_pairs(&data_dir)?;
            let every = cfg.checkpoint_every;
            let outcome = train(&cfg, &pairs, |rec, net| {
                let val = if rec.val_loss.is_nan() { "n/a".to_string() } else { format!("{:.6}", rec.val_loss) };
                eprintln!("epoch {} lr {:.3e} train {:.6} val {val}", rec.epoch, rec.lr, rec.train_loss);
                if every > 0 && rec.epoch % every == 0 {
                    net.save(&sibling(&out_ckpt, &format!(".epoch{}", rec.epoch)))?;
                }
                Ok(())
            })?;
            outcome.net.save(&out_ckpt)?;
            write_text(&train_config_path(&out_ckpt), &cfg.to_toml())?;
            write_text(&sibling(&out_ckpt, ".curve.csv"), &curve_csv(&outcome.curve))?;
        }
        Command::Enhance { ckpt, low, output, seed } => {
            let net = Denoiser::load(&ckpt)?;
            let tc = match fs::read_to_string(train_config_path(&ckpt)) {
                Ok(text) => TrainConfig::from_toml(&text)?,
                Err(_) => TrainConfig { denoiser: net.config().clone(), ..TrainConfig::default() },
            };
            let out = enhance(&net, &read_gray(&low)?, &tc.schedule()?, &tc.enhance_settings(), seed.seed)?;
            write_pnm(&output, &Pnm::from_gray(&out, OUT_MAXVAL))?;
        }
        Command::Metrics { a, b, manifest, out, .. } => {
            let mut rows: Vec<QualityScores> = Vec::new();
            match (a, b, manifest) {
                (Some(a), Some(b), None) => rows.push(score(&read_gray(&a)?, &read_gray(&b)?)?),
                (None, None, Some(m)) => {
                    let base = m.parent().unwrap_or(Path::new("."));
                    for e in parse_manifest(&read_text(&m)?)? {
                        rows.push(score(&read_gray(&base.join(&e.low))?, &read_gray(&base.join(&e.high))?)?);
                    }
                }
                _ => return Err(Failure::Data("metrics needs two image paths or --manifest".into())),
            }
            let mut text = format!("{CSV_HEADER}\n");
            for r in &rows {
                text.push_str(&metrics::csv_row(r));
                text.push('\n');
            }
            emit(out.as_deref(), &text)?;
        }
        Command::Workspace { config, candidates, out, seed } => {
            let cfg = PoseConfig::from_toml(&read_text(&config)?)?;
            let ws = build_workspace(&cfg.chain()?, &cfg.scene(), &cfg.camera(), candidates, &cfg.home, seed.seed)?;
            eprintln!("{} feasible of {candidates}; rejections: {}", ws.feasible().count(), ws.rejections);
            let rows: Vec<WorkspaceRow> = ws.records.iter().map(WorkspaceRow::from).collect();
            emit(out.as_deref(), &workspace_csv(&rows))?;
        }
        Command::SamplePoses { workspace, bins, k, spin, out, seed } => {
            let rows: Vec<WorkspaceRow> = read_workspace_csv(&read_text(&workspace)?)?.into_iter().filter(|r| r.feasible).collect();
            if rows.is_empty() {
                return Err(Failure::Data(format!("{}: no feasible poses", workspace.display())));
            }
            let points: Vec<Spherical> = rows.iter().map(|r| r.spherical).collect();
            let sel = stratified_sample(&points, bins, k, &mut ChaCha8Rng::seed_from_u64(seed.seed));
            if sel.uncovered_strata > 0 || sel.shortfall > 0 {
                eprintln!(
                    "{} of {} nonempty strata uncovered, {} picks short",
                    sel.uncovered_strata, sel.nonempty_strata, sel.shortfall
                );
            }
            let picked: Vec<WorkspaceRow> = sel.indices.iter().map(|&i| rows[i].clone()).collect();
            let text = match spin {
                None => workspace_csv(&picked),
                Some(cfg_path) => {
                    let chain = PoseConfig::from_toml(&read_text(&cfg_path)?)?.chain()?;
                    let mut s = String::from("pose,shot,q1,q2,q3,q4,q5,q6\n");
                    for (i, r) in picked.iter().enumerate() {
                        let poses = spin_capture_poses(&chain, &r.q)
                            .ok_or_else(|| Failure::Data(format!("pose {i}: spin leaves the terminal joint limits")))?;
                        for (j, q) in poses.iter().enumerate() {
                            let qs: Vec<String> = q.iter().map(f64::to_string).collect();
                            s.push_str(&format!("{i},{j},{}\n", qs.join(",")));
                        }
                    }
                    s
                }
            };
            emit(out.as_deref(), &text)?;
        }
        Command::WorkspacePlot { workspace, config, out_prefix, .. } => {
            let rows = read_workspace_csv(&read_text(&workspace)?)?;
            let chain = PoseConfig::from_toml(&read_text(&config)?)?.chain()?;
            let (xz, yz) = projection_csvs(&chain, &rows);
            write_text(&sibling(&out_prefix, "_xz.csv"), &xz)?;
            write_text(&sibling(&out_prefix, "_yz.csv"), &yz)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                let msg = e.kind().to_string();
                let detail = e.to_string();
                let line = detail.lines().find(|l| l.starts_with("error:")).unwrap_or(&msg);
                eprintln!("llie: {}", line.trim_start_matches("error: "));
            }
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(msg)) => {
            eprintln!("llie: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("llie: {msg}");
            ExitCode::from(3)
        }
    }
}
