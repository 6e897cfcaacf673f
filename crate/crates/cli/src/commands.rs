use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use hypersr::autodiff::{checkpoint_digest, load_checkpoint, save_checkpoint};
use hypersr::data::{
    apply_illumination, export_envi, import_envi, load_cube, parse_spectrum_csv, parse_split_file, save_cube,
    simulate_input, split_dataset, HsiCube, Illumination, SpectralResponse, SplitMode,
};
use hypersr::metrics::{evaluate, reports_to_csv, MetricReport};
use hypersr::network::{build_network, predict_image, NetworkSpec};
use hypersr::train::{CheckpointKind, ImageSampler, LossRecord, TrainEvent, TrainImage, Trainer};
use hypersr::unmixing::{fcls_abundances, pca_project, vca_extract};
use hypersr::verify::{check_names, report_csv, run_check, run_checks, Fault, VerifyOptions};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::{
    Command, ConvertArgs, EvaluateArgs, IllumMode, IlluminateArgs, Outcome, PredictArgs, SimulateArgs, TrainArgs,
    UnmixArgs, VerifyArgs,
};

pub fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Illuminate(a) => illuminate(a),
        Command::Convert(a) => convert(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_dirs(a),
        Command::Unmix(a) => unmix(a),
        Command::Verify(a) => verify(a),
        Command::Replay { snapshot } => {
            let text = fs::read_to_string(&snapshot).with_context(|| format!("reading {}", snapshot.display()))?;
            let command: Command =
                toml::from_str(&text).with_context(|| format!("parsing {}", snapshot.display()))?;
            run(command)
        }
    }
}

/// Writes the resolved command to `path` so that `replay` can re-run it.
fn write_snapshot(command: &Command, path: &Path) -> Result<()> {
    let text = toml::to_string(command).context("serializing resolved config")?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn snapshot_beside(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".resolved.toml");
    file.with_file_name(name)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// `(id, header path)` for every `<id>.json` cube in `dir`, sorted by id.
fn list_cubes(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        if path.extension().is_some_and(|e| e == "json") && !path.to_string_lossy().ends_with(".resolved.json") {
            let id = path.file_stem().expect("has extension").to_string_lossy().into_owned();
            out.push((id, path));
        }
    }
    out.sort();
    Ok(out)
}

fn simulate(args: SimulateArgs) -> Result<Outcome> {
    let srf = if args.srf == "cie1964" {
        SpectralResponse::cie1964()
    } else {
        SpectralResponse::load_csv(&args.srf)?
    };
    let cubes = list_cubes(&args.cubes)?;
    if cubes.is_empty() {
        bail!("no cubes found in {}", args.cubes.display());
    }
    create_dir(&args.out)?;
    let mut failures = Vec::new();
    for (id, path) in &cubes {
        let result = load_cube(path)
            .and_then(|cube| simulate_input(&cube, &srf))
            .and_then(|img| save_cube(&img, args.out.join(format!("{id}.json"))));
        match result {
            Ok(()) => info!("simulated {id}"),
            Err(e) => {
                eprintln!("{id}: {e}");
                failures.push(id.clone());
            }
        }
    }
    write_snapshot(&Command::Simulate(args.clone()), &args.out.join("simulate.resolved.toml"))?;
    if !failures.is_empty() {
        bail!("{} of {} cubes failed: {}", failures.len(), cubes.len(), failures.join(", "));
    }
    Ok(Outcome::Ok)
}

fn illuminate(args: IlluminateArgs) -> Result<Outcome> {
    let cube = load_cube(&args.cube)?;
    let text = fs::read_to_string(&args.illumination)
        .with_context(|| format!("reading {}", args.illumination.display()))?;
    let (wl, values) = parse_spectrum_csv(&text).with_context(|| args.illumination.display().to_string())?;
    let aligned =
        wl.len() == cube.bands() && wl.iter().zip(cube.wavelengths()).all(|(a, b)| (a - b).abs() <= 1e-6);
    if !aligned {
        bail!("illumination wavelengths do not match the cube's {} bands", cube.bands());
    }
    let op = match args.mode {
        IllumMode::Multiply => Illumination::Multiply,
        IllumMode::Divide => Illumination::Divide,
    };
    save_cube(&apply_illumination(&cube, &values, op)?, &args.out)?;
    write_snapshot(&Command::Illuminate(args.clone()), &snapshot_beside(&args.out))?;
    Ok(Outcome::Ok)
}

fn is_envi(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "hdr")
}

fn convert(args: ConvertArgs) -> Result<Outcome> {
    let cube = if is_envi(&args.from) {
        import_envi(&args.from)?
    } else {
        load_cube(&args.from)?
    };
    if is_envi(&args.to) {
        export_envi(&cube, &args.to)?;
    } else {
        save_cube(&cube, &args.to)?;
    }
    Ok(Outcome::Ok)
}

fn load_pair(cfg: &RunConfig, id: &str) -> Result<TrainImage> {
    let input = load_cube(cfg.data.input_dir.join(format!("{id}.json")))?;
    let target = load_cube(cfg.data.target_dir.join(format!("{id}.json")))?;
    if input.height() != target.height() || input.width() != target.width() {
        bail!("{id}: input and target sizes differ");
    }
    if input.bands() != cfg.network.in_channels || target.bands() != cfg.network.out_channels {
        return Err(hypersr::error::Error::Config(format!(
            "{id}: {} -> {} bands, network is {} -> {}",
            input.bands(),
            target.bands(),
            cfg.network.in_channels,
            cfg.network.out_channels
        ))
        .into());
    }
    Ok(TrainImage {
        id: id.to_string(),
        input,
        target,
    })
}

fn write_wavelengths(path: &Path, wl: &[f64]) -> Result<()> {
    let text: String = wl.iter().map(|w| format!("{w}\n")).collect();
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_wavelengths(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().with_context(|| format!("{}: `{l}`", path.display())))
        .collect()
}

fn train(args: TrainArgs) -> Result<Outcome> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = std::path::absolute(out)?;
    }
    cfg.train.rng_seed = cfg.seed;
    cfg.validate()?;

    let ids: Vec<String> = list_cubes(&cfg.data.target_dir)?.into_iter().map(|(id, _)| id).collect();
    let mode = match &cfg.data.split_file {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SplitMode::Prescribed(parse_split_file(&text)?)
        }
        None => SplitMode::TwoFold { seed: cfg.seed },
    };
    let folds = split_dataset(&ids, &mode)?;
    let fold = folds
        .get(cfg.data.fold)
        .ok_or_else(|| anyhow!("fold {} does not exist", cfg.data.fold))?;
    if fold.train.is_empty() {
        bail!("training split is empty");
    }
    let images = fold.train.iter().map(|id| load_pair(&cfg, id)).collect::<Result<Vec<_>>>()?;
    info!("training on {} images, holding out {}", fold.train.len(), fold.test.len());

    create_dir(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("train.resolved.toml"), cfg.to_toml())?;
    write_wavelengths(&cfg.out_dir.join("wavelengths.txt"), images[0].target.wavelengths())?;

    let (network, params) = build_network::<f32, _>(&cfg.network, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let mut trainer = Trainer::new(&network, params, cfg.train.clone())?;
    let mut sampler = ImageSampler {
        images,
        patches_per_image: cfg.data.patches_per_image,
        patch_size: cfg.data.patch_size,
        augmentation: cfg.data.augmentation,
    };
    let log_path = cfg.out_dir.join("loss.csv");
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    writeln!(log, "{}", LossRecord::CSV_HEADER)?;
    let phases = cfg.train.lr_schedule.len();
    let out_dir = cfg.out_dir.clone();
    let mut on_event = |event: TrainEvent<'_>| -> hypersr::error::Result<()> {
        let io = |e| hypersr::error::Error::io(&log_path, e);
        match event {
            TrainEvent::Log(rec) => {
                writeln!(log, "{}", rec.csv_row()).map_err(io)?;
                log.flush().map_err(io)?;
                info!("step {} epoch {} lr {} loss {:.6}", rec.step, rec.epoch, rec.lr, rec.loss);
            }
            TrainEvent::Checkpoint(kind, ckpt) => {
                let name = match kind {
                    CheckpointKind::Phase(p) => format!("phase{}.ckpt", p + 1),
                    CheckpointKind::LastGood => "last_good.ckpt".to_string(),
                };
                save_checkpoint(out_dir.join(&name), ckpt)?;
                if kind == CheckpointKind::Phase(phases - 1) {
                    save_checkpoint(out_dir.join("model.ckpt"), ckpt)?;
                }
                info!("wrote {name} at step {}", ckpt.step);
            }
        }
        Ok(())
    };
    trainer.run(&mut sampler, &mut on_event)?;
    Ok(Outcome::Ok)
}

fn predict(args: PredictArgs) -> Result<Outcome> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let spec = NetworkSpec::from_text(&ckpt.spec_text)?;
    let image = load_cube(&args.input)?;
    if image.bands() != spec.in_channels {
        return Err(hypersr::error::Error::Config(format!(
            "{} has {} channels but the checkpoint expects {}",
            args.input.display(),
            image.bands(),
            spec.in_channels
        ))
        .into());
    }
    // Initialization randomness is irrelevant: every value is overwritten.
    let (network, mut params) = build_network::<f32, _>(&spec, &mut ChaCha8Rng::seed_from_u64(0))?;
    params.load_values(&ckpt.params)?;

    let pred = predict_image(&network, &params, &image.to_tensor(), args.tile, args.overlap)?;
    let wavelengths = match &args.wavelengths_from {
        Some(path) => load_cube(path)?.wavelengths().to_vec(),
        None => {
            let beside = args.checkpoint.with_file_name("wavelengths.txt");
            if beside.exists() {
                read_wavelengths(&beside)?
            } else {
                warn!("no wavelengths.txt next to the checkpoint; labelling bands by index");
                (0..spec.out_channels).map(|i| i as f64).collect()
            }
        }
    };
    if wavelengths.len() != spec.out_channels {
        bail!("{} wavelengths for {} output channels", wavelengths.len(), spec.out_channels);
    }
    let mut cube = HsiCube::from_tensor(&pred, 0, wavelengths, image.scale())?;
    cube.metadata.insert("checkpoint_sha256".into(), checkpoint_digest(&args.checkpoint)?);
    cube.metadata.insert("checkpoint_step".into(), ckpt.step.to_string());
    save_cube(&cube, &args.out)?;
    write_snapshot(&Command::Predict(args.clone()), &snapshot_beside(&args.out))?;
    Ok(Outcome::Ok)
}

fn evaluate_dirs(args: EvaluateArgs) -> Result<Outcome> {
    let gt = list_cubes(&args.gt)?;
    if gt.is_empty() {
        bail!("no ground-truth cubes in {}", args.gt.display());
    }
    let pred = list_cubes(&args.pred)?;
    let missing: Vec<&str> = gt
        .iter()
        .filter(|(id, _)| !pred.iter().any(|(p, _)| p == id))
        .map(|(id, _)| id.as_str())
        .collect();
    let extra: Vec<&str> = pred
        .iter()
        .filter(|(id, _)| !gt.iter().any(|(g, _)| g == id))
        .map(|(id, _)| id.as_str())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = String::from("prediction and ground-truth ids differ");
        if !missing.is_empty() {
            msg.push_str(&format!("; missing predictions: {}", missing.join(", ")));
        }
        if !extra.is_empty() {
            msg.push_str(&format!("; no ground truth for: {}", extra.join(", ")));
        }
        bail!(msg);
    }
    let mut rows = Vec::with_capacity(gt.len());
    for (id, gt_path) in &gt {
        let p = load_cube(args.pred.join(format!("{id}.json")))?;
        let g = load_cube(gt_path)?;
        rows.push((id.clone(), evaluate(&p, &g).with_context(|| format!("evaluating {id}"))?));
    }
    let reports: Vec<MetricReport> = rows.iter().map(|(_, r)| r.clone()).collect();
    rows.push(("mean".to_string(), MetricReport::mean(&reports)?));
    let table = reports_to_csv(&rows)?;
    print!("{table}");
    if let Some(out) = &args.out {
        fs::write(out, &table).with_context(|| format!("writing {}", out.display()))?;
        write_snapshot(&Command::Evaluate(args.clone()), &snapshot_beside(out))?;
    }
    Ok(Outcome::Ok)
}

fn unmix(args: UnmixArgs) -> Result<Outcome> {
    if args.k < 2 {
        return Err(hypersr::error::Error::Config(format!("k = {} but at least 2 endmembers are needed", args.k)).into());
    }
    let mut cube = load_cube(&args.cube)?;
    create_dir(&args.out)?;
    if let Some(pcs) = args.pca {
        cube = pca_project(&cube, pcs)?;
        save_cube(&cube, args.out.join("denoised.json"))?;
    }
    let endmembers = vca_extract(&cube, args.k, &mut ChaCha8Rng::seed_from_u64(args.seed))?;
    let abundances = fcls_abundances(&cube, &endmembers)?;
    let em_path = args.out.join("endmembers.csv");
    fs::write(&em_path, endmembers.to_csv()).with_context(|| format!("writing {}", em_path.display()))?;
    save_cube(&abundances.to_cube()?, args.out.join("abundances.json"))?;
    write_snapshot(&Command::Unmix(args.clone()), &args.out.join("unmix.resolved.toml"))?;
    info!("{} endmembers at pixels {:?}", endmembers.k(), endmembers.pixel_indices);
    Ok(Outcome::Ok)
}

fn verify(args: VerifyArgs) -> Result<Outcome> {
    let opts = VerifyOptions {
        seed: args.seed,
        fault: args.inject_fault.as_deref().map(str::parse::<Fault>).transpose()?,
    };
    let results = if args.checks.is_empty() {
        run_checks(&opts)
    } else {
        for name in &args.checks {
            if !check_names().contains(&name.as_str()) {
                bail!("unknown check `{name}`; available: {}", check_names().join(", "));
            }
        }
        args.checks.iter().map(|n| run_check(n, &opts)).collect::<hypersr::error::Result<_>>()?
    };
    let table = report_csv(&results);
    print!("{table}");
    if let Some(out) = &args.out {
        fs::write(out, &table).with_context(|| format!("writing {}", out.display()))?;
        write_snapshot(&Command::Verify(args.clone()), &snapshot_beside(out))?;
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(Outcome::Ok)
    } else {
        eprintln!("failed checks: {}", failed.join(", "));
        Ok(Outcome::ChecksFailed)
    }
}
