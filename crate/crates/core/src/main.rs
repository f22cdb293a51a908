use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};

use deblur::deconv::{blind_deconv, richardson_lucy, DeconvConfig};
use deblur::image::{load_image, save_image, Image, SaveFormat, VolumeStack};
use deblur::metrics::build_report;
use deblur::pipeline::{
    benchmark, deblur_image, deblur_volume, list_images, load_pairs, prep, resolution_report,
    write_benchmark, DeblurOptions, ModelRegistry, PrepConfig, INFERENCE_TILE,
};
use deblur::psf::{blur, blur_with_noise, default_radius, make_gaussian_kernel};
use deblur::rdn::{init_model, load_weights, save_weights, RdnModel};
use deblur::train::{train_with, TrainConfig};
use deblur::{Error, Result};

#[derive(Parser)]
#[command(name = "deblur", version, about = "Gaussian-blur restoration toolkit")]
struct Cli {
    /// Key=value file supplying default flag values for the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, ValueEnum)]
enum Method {
    Rl,
    Blind,
}

#[derive(Subcommand)]
enum Command {
    /// Crop, tile and blur a directory of images into training pairs.
    Prep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2304)]
        crop: usize,
        #[arg(long, default_value_t = 256)]
        tile: usize,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        sigmas: Vec<f64>,
    },
    /// Train a network on the pairs of one σ from a prep manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Loss curve CSV (default: OUT with a .csv extension).
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 5)]
        layers: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0.95)]
        lr_decay: f64,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.1)]
        validation_fraction: f64,
    },
    /// Restore an image (or a directory of slices) with a trained network.
    Deblur {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Blur σ of the input, in pixels.
        #[arg(long, conflicts_with = "fwhm")]
        sigma: Option<f64>,
        /// Measured FWHM of the system, in pixels.
        #[arg(long)]
        fwhm: Option<f64>,
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Weights file to use directly instead of a registry lookup.
        #[arg(long, conflicts_with_all = ["registry", "sigma", "fwhm"])]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = INFERENCE_TILE)]
        tile: usize,
        #[arg(long, default_value_t = 0)]
        overlap: usize,
        #[arg(long)]
        format: Option<SaveFormat>,
    },
    /// Apply a Gaussian blur (and optional noise).
    Blur {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        format: Option<SaveFormat>,
    },
    /// Richardson-Lucy or blind deconvolution with a Gaussian PSF.
    Deconv {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "rl")]
        method: Method,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        format: Option<SaveFormat>,
    },
    /// Score candidate images against a reference.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        cand: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Blur an image and compare blind deconvolution, RL and the network.
    Benchmark {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        /// Row for the line profile (default: middle row).
        #[arg(long)]
        row: Option<usize>,
    },
    /// Edge-based FWHM before and after restoration.
    Resolution {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        /// Image row crossing the edge.
        #[arg(long)]
        line: usize,
        /// Pixel pitch in µm.
        #[arg(long)]
        pitch: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output_format(path: &Path, explicit: Option<SaveFormat>) -> SaveFormat {
    explicit.unwrap_or_else(|| SaveFormat::from_path(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_volume(dir: &Path) -> Result<(Vec<PathBuf>, VolumeStack)> {
    let files = list_images(dir)?;
    let slices = files.iter().map(load_image).collect::<Result<Vec<_>>>()?;
    if slices.is_empty() {
        return Err(Error::InvalidArgument(format!("no slices in {}", dir.display())));
    }
    let grays = slices.iter().map(deblur::pipeline::to_grayscale).collect();
    Ok((files, VolumeStack::new(grays)?))
}

fn pick_model(
    sigma: Option<f64>,
    fwhm: Option<f64>,
    registry: Option<&Path>,
    model: Option<&Path>,
) -> Result<RdnModel> {
    if let Some(path) = model {
        return load_weights(path);
    }
    let Some(reg_path) = registry else {
        return Err(Error::InvalidArgument(
            "--registry (with --sigma or --fwhm) or --model is required".into(),
        ));
    };
    let registry = ModelRegistry::load(reg_path)?;
    let entry = match (sigma, fwhm) {
        (Some(s), _) => registry.select_sigma(s)?,
        (None, Some(f)) => registry.select(f)?,
        (None, None) => {
            return Err(Error::InvalidArgument(
                "--sigma or --fwhm is required with --registry".into(),
            ))
        }
    };
    log::info!("using model sigma={} ({})", entry.sigma, entry.weights.display());
    registry.load_model(entry)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prep {
            input,
            out,
            crop,
            tile,
            sigmas,
        } => {
            let m = prep(&input, &out, &PrepConfig { crop, tile, sigmas })?;
            println!(
                "images={} tiles={} pairs={}",
                m.sources.len(),
                m.ground_truth.len(),
                m.pairs.len()
            );
        }
        Command::Train {
            manifest,
            sigma,
            epochs,
            seed,
            out,
            curve,
            blocks,
            layers,
            width,
            lr,
            lr_decay,
            batch_size,
            validation_fraction,
        } => {
            let data = load_pairs(&manifest, sigma)?;
            let cfg = TrainConfig {
                batch_size,
                lr_initial: lr,
                lr_decay,
                epochs,
                seed,
                validation_fraction,
                ..Default::default()
            };
            let model = init_model(seed, blocks, layers, width)?;
            log::info!(
                "training {} parameters on {} pairs",
                model.parameter_count(),
                data.len()
            );
            let outcome = train_with(model, &data, &cfg, |r| {
                eprintln!("epoch {} train {:.6e} val {:.6e}", r.epoch, r.train_loss, r.val_loss)
            })?;
            let mut best = outcome.best;
            best.meta.trained_sigma = sigma as f32;
            best.meta.run_id = format!("sigma{sigma}-seed{seed}-epoch{}", outcome.best_epoch);
            save_weights(&best, &out)?;
            let curve_path = curve.unwrap_or_else(|| out.with_extension("csv"));
            outcome.curve.write_csv(&curve_path)?;
            println!("best_epoch={} weights={}", outcome.best_epoch, out.display());
        }
        Command::Deblur {
            input,
            out,
            sigma,
            fwhm,
            registry,
            model,
            tile,
            overlap,
            format,
        } => {
            let model = pick_model(sigma, fwhm, registry.as_deref(), model.as_deref())?;
            let opts = DeblurOptions { tile, overlap };
            if input.is_dir() {
                let (files, vol) = load_volume(&input)?;
                let restored = deblur_volume(&model, &vol, &opts)?;
                std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                    path: out.clone(),
                    source: e,
                })?;
                for (src, slice) in files.iter().zip(restored.slices()) {
                    let dst = out.join(src.file_name().expect("listed files have names"));
                    save_image(slice, &dst, output_format(&dst, format))?;
                }
            } else {
                let img = load_image(&input)?;
                let restored = deblur_image(&model, &img, &opts)?;
                save_image(&restored, &out, output_format(&out, format))?;
            }
        }
        Command::Blur {
            input,
            out,
            sigma,
            noise,
            seed,
            format,
        } => {
            let img = load_image(&input)?;
            let blurred = if noise > 0.0 {
                blur_with_noise(&img, sigma, noise, seed)?
            } else {
                blur(&img, sigma)?
            };
            save_image(&blurred, &out, output_format(&out, format))?;
        }
        Command::Deconv {
            input,
            out,
            method,
            iters,
            sigma,
            format,
        } => {
            let img = load_image(&input)?;
            let psf = make_gaussian_kernel(sigma, default_radius(sigma))?;
            let cfg = DeconvConfig::with_iterations(iters);
            let restored = match method {
                Method::Rl => img.map_channels(|c| richardson_lucy(c, &psf, &cfg))?,
                Method::Blind => img.map_channels(|c| {
                    let (o, k) = blind_deconv(c, &psf, &cfg)?;
                    log::info!("estimated PSF sigma {:.4}", k.sigma());
                    Ok(o)
                })?,
            };
            save_image(&restored, &out, output_format(&out, format))?;
        }
        Command::Metrics {
            reference,
            cand,
            out,
        } => {
            let original = load_image(&reference)?;
            let images = cand.iter().map(load_image).collect::<Result<Vec<Image>>>()?;
            let labels: Vec<String> = cand
                .iter()
                .map(|p| {
                    p.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| p.display().to_string())
                })
                .collect();
            let pairs: Vec<(&str, &Image)> = labels.iter().map(String::as_str).zip(&images).collect();
            let report = build_report(&original, &pairs)?;
            match out {
                Some(path) => {
                    write_text(&path, &report.to_csv())?;
                    print!("{}", report.to_table());
                }
                None => print!("{}", report.to_csv()),
            }
        }
        Command::Benchmark {
            input,
            sigma,
            registry,
            out,
            iters,
            row,
        } => {
            let original = load_image(&input)?;
            let registry = ModelRegistry::load(&registry)?;
            let entry = registry.select_sigma(sigma)?;
            let model = registry.load_model(entry)?;
            let bench = benchmark(
                &original,
                sigma,
                &model,
                entry.sigma,
                &DeconvConfig::with_iterations(iters),
            )?;
            write_benchmark(&out, &original, &bench, row.unwrap_or(original.height() / 2))?;
            print!("{}", bench.report.to_table());
        }
        Command::Resolution {
            before,
            after,
            line,
            pitch,
            out,
        } => {
            let report = resolution_report(&load_image(&before)?, &load_image(&after)?, line, pitch)?;
            if let Some(path) = out {
                write_text(&path, &report.to_csv())?;
            }
            println!("{report}");
        }
    }
    Ok(())
}

/// Appends `--key value` for every config-file entry whose flag the chosen
/// subcommand accepts and the command line does not already set.
fn merge_config(args: Vec<OsString>) -> std::result::Result<Vec<OsString>, Error> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let config_path = strs.iter().enumerate().find_map(|(i, a)| {
        a.strip_prefix("--config=")
            .map(str::to_string)
            .or_else(|| (a == "--config").then(|| strs.get(i + 1).cloned()).flatten())
    });
    let Some(config_path) = config_path else {
        return Ok(args);
    };
    let cmd = Cli::command();
    let Some(sub) = strs
        .iter()
        .skip(1)
        .find_map(|a| cmd.get_subcommands().find(|s| s.get_name() == a))
    else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&config_path).map_err(|e| Error::Io {
        path: config_path.clone().into(),
        source: e,
    })?;
    let mut merged = args;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Format(format!(
                "{config_path} line {}: expected key=value",
                n + 1
            )));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            log::debug!("config key {key} not used by {}", sub.get_name());
            continue;
        };
        let on_cli = |long: &str| {
            let flag = format!("--{long}");
            strs.iter()
                .any(|a| a == &flag || a.starts_with(&format!("{flag}=")))
        };
        let conflicted = sub
            .get_arg_conflicts_with(arg)
            .iter()
            .filter_map(|c| c.get_long())
            .any(on_cli);
        if on_cli(&key) || conflicted {
            continue;
        }
        let flag = format!("--{key}");
        merged.push(flag.into());
        if arg.get_action().takes_values() {
            merged.push(value.into());
        }
    }
    Ok(merged)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error kind={}: {e}", e.kind());
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let msg: Vec<&str> = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("error kind=usage: {}", msg.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={}: {msg}", e.kind());
            ExitCode::from(1)
        }
    }
}
