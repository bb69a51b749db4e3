//! The subcommands as library functions.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use geofuse_core::dataset::{
    coord_features, extract_samples, generate_synthetic, normalize_cube, stratified_split, DataCube, LabelMap,
    SampleSet, Split, SyntheticSpec,
};
use geofuse_core::eval::{confusion, default_palette, dense_energy, metrics, render_rgb, Energy, EnergyInput};
use geofuse_core::model::{argmax, DualBranchModel};
use geofuse_core::numerics::Rng;
use geofuse_core::optim::{train_with_progress, TrainConfig};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::formats::{self, write_file};
use crate::report::{Fixed, ModelReport, RunReport};

/// Largest window the brute-force energy accepts, per side.
pub const MAX_ENERGY_CROP: usize = 64;

pub const REPORT_FILE: &str = "report.json";

/// Reads a CSV table and writes the cube and label files.
pub fn cmd_convert(csv: &Path, cube_out: &Path, labels_out: &Path) -> Result<(DataCube, LabelMap)> {
    let text = fs::read(csv).map_err(|e| CliError::io(csv, e))?;
    let (cube, labels) = formats::parse_csv(&text).map_err(|e| CliError::format(csv, e))?;
    formats::save_cube(cube_out, &cube)?;
    formats::save_labels(labels_out, &labels)?;
    log::info!(
        "converted {}: {}x{}x{}, {} labeled pixels",
        csv.display(),
        cube.height(),
        cube.width(),
        cube.bands(),
        labels.labeled_count()
    );
    Ok((cube, labels))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub baseline_only: bool,
    pub out_dir: Option<PathBuf>,
}

/// Which networks a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    DualBranch,
    Baseline,
}

impl Variant {
    pub fn file_stem(self) -> &'static str {
        match self {
            Variant::DualBranch => "dual_branch",
            Variant::Baseline => "baseline",
        }
    }

    pub fn checkpoint_name(self) -> String {
        format!("{}.ckpt", self.file_stem())
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub report: RunReport,
}

/// Data loading shared by `run` and `energy`.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub cube: DataCube,
    pub labels: LabelMap,
}

pub fn prepare(config_path: &Path, opts: &RunOptions) -> Result<Prepared> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(dir) = &opts.out_dir {
        config.out_dir = dir.clone();
    }
    let raw = formats::load_cube(&config.cube)?;
    let labels = formats::load_labels(&config.labels)?;
    if (raw.height(), raw.width()) != (labels.height(), labels.width()) {
        return Err(CliError::Usage(format!(
            "cube is {}x{} but labels are {}x{}",
            raw.height(),
            raw.width(),
            labels.height(),
            labels.width()
        )));
    }
    let cube = normalize_cube(&raw)?;
    Ok(Prepared { config, cube, labels })
}

/// Ingest, normalize, split, train, evaluate and render. The seed drives
/// three independent streams (split, dual-branch, baseline), so disabling one
/// model leaves the other's results unchanged.
pub fn cmd_run(config_path: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let Prepared { config, cube, labels } = prepare(config_path, opts)?;
    let out_dir = config.out_dir.clone();
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;

    let mut root = Rng::new(config.seed);
    let mut split_rng = root.fork();
    let dual_rng = root.fork();
    let baseline_rng = root.fork();

    let split = stratified_split(&labels, &config.split.spec(), &mut split_rng)?;
    let train_set = extract_samples(&cube, &labels, &split.train)?;
    let test_set = extract_samples(&cube, &labels, &split.test)?;
    log::info!(
        "{} training and {} test pixels over {} classes",
        train_set.len(),
        test_set.len(),
        labels.num_classes()
    );

    let mut variants = Vec::new();
    if !opts.baseline_only {
        variants.push((Variant::DualBranch, dual_rng));
    }
    if opts.baseline_only || config.run_baseline {
        variants.push((Variant::Baseline, baseline_rng));
    }

    let mut report = RunReport {
        seed: config.seed,
        height: cube.height(),
        width: cube.width(),
        bands: cube.bands(),
        num_classes: labels.num_classes(),
        split_fraction: Fixed(config.split.fraction),
        dual_branch: None,
        baseline: None,
    };
    for (variant, mut rng) in variants {
        let model_report = train_and_evaluate(&config, variant, &cube, &labels, &split, &train_set, &test_set, &mut rng)?;
        log::info!(
            "{}: OA {:.4}, AA {:.4}, kappa {:.4}",
            variant.file_stem(),
            model_report.overall_accuracy.0,
            model_report.average_accuracy.0,
            model_report.kappa.0
        );
        match variant {
            Variant::DualBranch => report.dual_branch = Some(model_report),
            Variant::Baseline => report.baseline = Some(model_report),
        }
    }
    write_file(&out_dir.join(REPORT_FILE), report.to_json().as_bytes())?;
    write_file(&out_dir.join("config.json"), config.to_json().as_bytes())?;
    Ok(RunOutcome { out_dir, report })
}

#[allow(clippy::too_many_arguments)]
fn train_and_evaluate(
    config: &ExperimentConfig,
    variant: Variant,
    cube: &DataCube,
    labels: &LabelMap,
    split: &Split,
    train_set: &SampleSet,
    test_set: &SampleSet,
    rng: &mut Rng,
) -> Result<ModelReport> {
    let k = labels.num_classes();
    let model_cfg = config.model.config(cube.bands(), k, variant == Variant::Baseline);
    let mut model = DualBranchModel::build(model_cfg, rng)?;
    let mut log = String::from("epoch,loss,train_acc\n");
    let history = train_with_progress(&mut model, train_set, &TrainConfig::from(config.train), rng, |s| {
        let _ = writeln!(log, "{},{:.6},{:.6}", s.epoch, s.loss, s.train_accuracy);
    })?;

    let preds = test_set
        .iter()
        .map(|s| model.predict(&s.features, s.coords))
        .collect::<geofuse_core::Result<Vec<u16>>>()?;
    let cm = confusion(&preds, &test_set.labels(), k)?;
    let eval = metrics(&cm)?;

    let map = predict_labeled(&model, cube, labels)?;
    let rgb = render_rgb(&map, k, &default_palette(k))?;

    let dir = &config.out_dir;
    let stem = variant.file_stem();
    formats::save_checkpoint(&dir.join(variant.checkpoint_name()), &model)?;
    write_file(&dir.join(format!("{stem}_train_log.csv")), log.as_bytes())?;
    write_file(
        &dir.join(format!("{stem}_map.ppm")),
        &formats::encode_ppm(cube.width(), cube.height(), &rgb),
    )?;
    Ok(ModelReport::new(
        &eval,
        &split.train_counts,
        &split.test_counts,
        history.final_loss().unwrap_or(f64::NAN),
        model.parameter_count(),
    ))
}

/// Predicted class at every labeled pixel, 0 elsewhere.
pub fn predict_labeled(model: &DualBranchModel, cube: &DataCube, labels: &LabelMap) -> Result<Vec<u16>> {
    let (h, w) = (cube.height(), cube.width());
    let mut map = vec![0u16; h * w];
    for (p, &l) in labels.labels().iter().enumerate() {
        if l > 0 {
            let (r, c) = (p / w, p % w);
            let x: Vec<f64> = cube.pixel(r, c).iter().map(|&v| v as f64).collect();
            map[p] = model.predict(&x, coord_features(r, c, h, w)?)?;
        }
    }
    Ok(map)
}

/// Energies of the dual-branch and baseline labelings of one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyComparison {
    pub dual_branch: Energy,
    pub baseline: Energy,
}

impl EnergyComparison {
    /// Dual-branch total minus baseline total.
    pub fn difference(&self) -> f64 {
        self.dual_branch.total() - self.baseline.total()
    }
}

/// Per-pixel inputs of the energy for one model over a window: the argmax
/// labeling, the class distributions and the appearance vectors.
pub struct WindowInputs {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u16>,
    pub probs: Vec<f64>,
    pub appearance: Vec<f64>,
}

/// Runs `model` over every pixel of `crop = [row, col, height, width]`.
/// Coordinates refer to the full image, as in training.
pub fn window_inputs(model: &DualBranchModel, cube: &DataCube, crop: [usize; 4], bands: &[usize]) -> Result<WindowInputs> {
    let [r0, c0, ch, cw] = crop;
    let (h, w) = (cube.height(), cube.width());
    let mut out = WindowInputs {
        height: ch,
        width: cw,
        labels: Vec::with_capacity(ch * cw),
        probs: Vec::new(),
        appearance: Vec::new(),
    };
    for r in r0..r0 + ch {
        for c in c0..c0 + cw {
            let px = cube.pixel(r, c);
            let x: Vec<f64> = px.iter().map(|&v| v as f64).collect();
            let p = model.predict_proba(&x, coord_features(r, c, h, w)?)?;
            out.labels.push(argmax(&p) as u16 + 1);
            out.probs.extend_from_slice(&p);
            out.appearance.extend(bands.iter().map(|&b| px[b] as f64));
        }
    }
    Ok(out)
}

/// Three evenly spaced bands: first, middle, last.
pub fn default_appearance_bands(bands: usize) -> Vec<usize> {
    let mut v = vec![0, bands / 2, bands - 1];
    v.dedup();
    v
}

/// Loads both checkpoints, labels the configured window with each and
/// prints the two energies and their difference.
pub fn cmd_energy(
    config_path: &Path,
    dual_ckpt: &Path,
    baseline_ckpt: &Path,
    crop: Option<[usize; 4]>,
) -> Result<EnergyComparison> {
    let Prepared { config, cube, .. } = prepare(config_path, &RunOptions::default())?;
    let crop = crop.unwrap_or(config.energy.crop);
    let [r0, c0, ch, cw] = crop;
    if ch == 0 || cw == 0 || ch > MAX_ENERGY_CROP || cw > MAX_ENERGY_CROP {
        return Err(CliError::Usage(format!(
            "energy crop must be between 1x1 and {MAX_ENERGY_CROP}x{MAX_ENERGY_CROP}, got {ch}x{cw}"
        )));
    }
    if r0 + ch > cube.height() || c0 + cw > cube.width() {
        return Err(CliError::Usage(format!(
            "crop {ch}x{cw} at ({r0}, {c0}) exceeds the {}x{} image",
            cube.height(),
            cube.width()
        )));
    }
    let bands = if config.energy.appearance_bands.is_empty() {
        default_appearance_bands(cube.bands())
    } else {
        config.energy.appearance_bands.clone()
    };
    if let Some(&b) = bands.iter().find(|&&b| b >= cube.bands()) {
        return Err(CliError::Usage(format!("appearance band {b} outside the {}-band cube", cube.bands())));
    }
    let params = config.energy.params();

    let energy_of = |path: &Path| -> Result<Energy> {
        let model = formats::load_checkpoint(path)?;
        if model.config().num_bands != cube.bands() {
            return Err(CliError::Usage(format!(
                "{} expects {} bands, cube has {}",
                path.display(),
                model.config().num_bands,
                cube.bands()
            )));
        }
        let win = window_inputs(&model, &cube, crop, &bands)?;
        let input = EnergyInput {
            height: win.height,
            width: win.width,
            labels: &win.labels,
            probs: &win.probs,
            appearance: &win.appearance,
        };
        Ok(dense_energy(&input, &params)?)
    };
    let result = EnergyComparison {
        dual_branch: energy_of(dual_ckpt)?,
        baseline: energy_of(baseline_ckpt)?,
    };
    for (name, e) in [("dual-branch", result.dual_branch), ("baseline", result.baseline)] {
        println!(
            "{name} energy: {:.6} (unary {:.6}, pairwise {:.6})",
            e.total(),
            e.unary,
            e.pairwise
        );
    }
    println!("difference (dual-branch - baseline): {:.6}", result.difference());
    Ok(result)
}

/// Writes a synthetic scene plus a ready-to-run config next to it.
pub fn cmd_synth(out_dir: &Path, spec: &SyntheticSpec, seed: u64) -> Result<PathBuf> {
    let (cube, labels) = generate_synthetic(&mut Rng::new(seed), spec)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    formats::save_cube(&out_dir.join("cube.hcb"), &cube)?;
    formats::save_labels(&out_dir.join("labels.hlb"), &labels)?;
    let config = ExperimentConfig::with_defaults("cube.hcb".into(), "labels.hlb".into(), seed);
    let path = out_dir.join("config.json");
    write_file(&path, config.to_json().as_bytes())?;
    Ok(path)
}
