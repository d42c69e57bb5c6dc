//! Command-line frontend.
//!
//! Exit codes: 0 on success, 1 for domain errors (empty mask, black image,
//! shape mismatch, ...), 2 for I/O and usage errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{
    apply_plan, apply_plan_with_mask, expanded_bbox, crop, make_plan, tta_expand, tta_median,
    AugmentationPlan, GammaSamplerConfig, GeometricConfig, DEFAULT_CROP_MARGIN, DEFAULT_TTA_COUNT,
};
use crate::bank::{bank_lab_projection, build_bank_with, load_bank, save_bank};
use crate::color::{von_kries_correct, Illuminant};
use crate::constancy::{estimate_illuminant, EstimatorConfig, Minkowski};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{auc, average_precision, seg_metrics, threshold_map, BinaryMask};

pub const MANIFEST_NAME: &str = "manifest.json";
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Parser)]
#[command(name = "illumaug", version, about = "Illuminant estimation, white balancing and color-cast augmentation")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct EstimatorArgs {
    /// Derivative order: 0 = shades of gray, 1 or 2 = gray-edge.
    #[arg(long = "order", default_value_t = 0)]
    order: u8,
    /// Minkowski norm; `1` is gray-world, `inf` is max-RGB.
    #[arg(long, default_value = "6")]
    p: Minkowski,
    /// Gaussian smoothing scale in pixels.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Exclude pixels with any channel at or above this value (plus a 1 px ring).
    #[arg(long, default_value_t = 0.98)]
    sat: f64,
}

impl EstimatorArgs {
    fn config(&self) -> Result<EstimatorConfig> {
        let cfg = EstimatorConfig {
            deriv_order: self.order,
            minkowski_p: self.p,
            smoothing_sigma: self.sigma,
            saturation_threshold: self.sat,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
struct GammaArgs {
    #[arg(long, default_value_t = 1.0)]
    gamma_mean: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma_std: f64,
    /// Keep gamma at 1.
    #[arg(long)]
    no_gamma: bool,
}

impl GammaArgs {
    fn config(&self) -> Result<Option<GammaSamplerConfig>> {
        if self.no_gamma {
            return Ok(None);
        }
        let cfg = GammaSamplerConfig { mean: self.gamma_mean, stddev: self.gamma_std, ..GammaSamplerConfig::default() };
        cfg.validate()?;
        Ok(Some(cfg))
    }
}

#[derive(Debug, Clone, Args)]
struct GeometryArgs {
    /// Maximum absolute rotation in degrees.
    #[arg(long, default_value_t = 45.0)]
    rotation: f64,
    #[arg(long, default_value_t = 0.5)]
    flip_h: f64,
    #[arg(long, default_value_t = 0.5)]
    flip_v: f64,
    /// Maximum translation per axis as a fraction of min(H, W).
    #[arg(long, default_value_t = 0.1)]
    translate: f64,
    #[arg(long, default_value_t = 0.8)]
    scale_min: f64,
    #[arg(long, default_value_t = 1.25)]
    scale_max: f64,
    #[arg(long, default_value_t = 10.0)]
    elastic_alpha: f64,
    #[arg(long, default_value_t = 4.0)]
    elastic_sigma: f64,
    /// Disable every geometric transform.
    #[arg(long)]
    no_geometry: bool,
}

impl GeometryArgs {
    fn config(&self) -> Result<GeometricConfig> {
        let cfg = if self.no_geometry {
            GeometricConfig::identity()
        } else {
            GeometricConfig {
                rotation_range: self.rotation,
                flip_h: self.flip_h,
                flip_v: self.flip_v,
                translate_frac: self.translate,
                scale_range: (self.scale_min, self.scale_max),
                elastic_alpha: self.elastic_alpha,
                elastic_sigma: self.elastic_sigma,
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the illuminant of an image and print `r g b`.
    Estimate {
        image: PathBuf,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },
    /// Remove the estimated illuminant and write the corrected image.
    Whitebalance {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },
    /// Estimate one illuminant per image and write an illuminant bank.
    BuildBank {
        /// Image files or directories of images.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },
    /// Summarize a bank and optionally export its a*b* projection.
    BankStats {
        bank: PathBuf,
        /// CSV with columns id,L,a,b.
        #[arg(long)]
        lab_out: Option<PathBuf>,
    },
    /// Write color-cast, gamma-jittered, distorted copies of white-balanced inputs.
    Augment {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Outputs per input.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        threads: Option<usize>,
        /// Segmentation masks, one per input in the same order.
        #[arg(long = "mask")]
        masks: Vec<PathBuf>,
        #[command(flatten)]
        gamma: GammaArgs,
        #[command(flatten)]
        geometry: GeometryArgs,
    },
    /// Regenerate an augmentation run from its manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Write the white-balanced image plus randomly re-cast versions for test-time prediction.
    TtaExpand {
        image: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TTA_COUNT)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Per-pixel median of 16-bit probability maps.
    TtaMedian {
        #[arg(required = true)]
        preds: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Crop an image to its mask's bounding box grown by a margin.
    CropBbox {
        image: PathBuf,
        mask: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CROP_MARGIN)]
        margin: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segmentation or classification metrics.
    #[command(subcommand)]
    Metrics(MetricsCommand),
}

#[derive(Debug, Subcommand)]
enum MetricsCommand {
    /// Pixel metrics between a predicted and a ground-truth mask.
    Seg {
        /// Binary mask or probability map.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// AUC, AP and thresholded rates from an `id,score,label` CSV.
    Cls {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub count: usize,
    pub bank: PathBuf,
    pub estimator: EstimatorConfig,
    pub gamma: Option<GammaSamplerConfig>,
    pub geometry: GeometricConfig,
    pub items: Vec<ManifestItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub input: PathBuf,
    pub mask: Option<PathBuf>,
    pub removed_illuminant: Illuminant,
    pub outputs: Vec<ManifestOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestOutput {
    pub index: u64,
    pub image: String,
    pub mask: Option<String>,
    pub plan: AugmentationPlan,
}

pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() { 2 } else { 1 }
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn fmt_rgb(t: &Illuminant) -> String {
    let [r, g, b] = t.rgb();
    format!("{r:.9} {g:.9} {b:.9}")
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Expands directories to their image files; result is sorted.
fn collect_images(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            for entry in fs::read_dir(input).map_err(io_err(input))? {
                let path = entry.map_err(io_err(input))?.path();
                if path.is_file() && has_image_extension(&path) {
                    out.push(path);
                }
            }
        } else {
            out.push(input.clone());
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate { image, estimator } => {
            let img = io::load_image(&image)?;
            let tau = estimate_illuminant(&img, &estimator.config()?)?;
            println!("{}", fmt_rgb(&tau));
        }
        Command::Whitebalance { input, output, estimator } => {
            let img = io::load_image(&input)?;
            let tau = estimate_illuminant(&img, &estimator.config()?)?;
            let wb = von_kries_correct(&img, &tau)?;
            io::save_png(&wb, &output)?;
            println!("{}", fmt_rgb(&tau));
        }
        Command::BuildBank { inputs, out, threads, estimator } => {
            let cfg = estimator.config()?;
            let paths = collect_images(&inputs)?;
            if paths.is_empty() {
                return Err(Error::EmptyInput);
            }
            let ids: Vec<String> = paths.iter().map(|p| p.to_string_lossy().into_owned()).collect();
            let report = with_threads(threads, || {
                build_bank_with(&ids, &cfg, |i, _| io::load_image(&paths[i]))
            })??;
            for skip in &report.skipped {
                eprintln!("warning: skipped {}: {}", skip.id, skip.reason);
            }
            save_bank(&report.bank, &out)?;
            println!("built={} skipped={}", report.bank.len(), report.skipped.len());
        }
        Command::BankStats { bank, lab_out } => {
            let bank = load_bank(&bank)?;
            let lab = bank_lab_projection(&bank);
            let n = lab.len() as f64;
            let mean_a = lab.iter().map(|(_, p)| p.a).sum::<f64>() / n;
            let mean_b = lab.iter().map(|(_, p)| p.b).sum::<f64>() / n;
            println!("entries={}", bank.len());
            println!("mean_illuminant={}", fmt_rgb(&bank.mean_illuminant()));
            println!("mean_angular_spread_deg={:.4}", bank.angular_spread());
            println!("mean_a={mean_a:.4}");
            println!("mean_b={mean_b:.4}");
            if let Some(path) = lab_out {
                io::write_lab_csv(&lab, &path)?;
            }
        }
        Command::Augment { inputs, bank, out_dir, seed, count, threads, masks, gamma, geometry } => {
            if count == 0 {
                return Err(Error::InvalidConfig("--count must be >= 1".into()));
            }
            if !masks.is_empty() && masks.len() != inputs.len() {
                return Err(Error::InvalidConfig(format!(
                    "{} masks for {} inputs",
                    masks.len(),
                    inputs.len()
                )));
            }
            let bank_file = load_bank(&bank)?;
            let gamma = gamma.config()?;
            let geometry = geometry.config()?;
            fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
            let plan_for = |index: u64| make_plan(&bank_file, gamma.as_ref(), &geometry, seed, index);
            let items = with_threads(threads, || {
                inputs
                    .par_iter()
                    .enumerate()
                    .map(|(i, input)| {
                        let mask = masks.get(i);
                        let plans = (0..count)
                            .map(|k| {
                                let index = (i * count + k) as u64;
                                plan_for(index).map(|p| (index, p))
                            })
                            .collect::<Result<Vec<_>>>()?;
                        render_item(i, input, mask, bank_file.estimator(), &plans, &out_dir)
                    })
                    .collect::<Result<Vec<_>>>()
            })??;
            let manifest = RunManifest {
                seed,
                count,
                bank,
                estimator: *bank_file.estimator(),
                gamma,
                geometry,
                items,
            };
            write_manifest(&manifest, &out_dir)?;
            println!("inputs={} outputs={}", inputs.len(), inputs.len() * count);
        }
        Command::Replay { manifest, out_dir, threads } => {
            let text = fs::read_to_string(&manifest).map_err(io_err(&manifest))?;
            let m: RunManifest = serde_json::from_str(&text)
                .map_err(|e| Error::Format(format!("{}: {e}", manifest.display())))?;
            fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
            let items = with_threads(threads, || {
                m.items
                    .par_iter()
                    .enumerate()
                    .map(|(i, item)| {
                        let plans: Vec<_> = item.outputs.iter().map(|o| (o.index, o.plan)).collect();
                        render_item(i, &item.input, item.mask.as_ref(), &m.estimator, &plans, &out_dir)
                    })
                    .collect::<Result<Vec<_>>>()
            })??;
            let replayed = RunManifest { items, ..m };
            write_manifest(&replayed, &out_dir)?;
        }
        Command::TtaExpand { image, bank, count, seed, out_dir } => {
            let bank = load_bank(&bank)?;
            let img = io::load_image(&image)?;
            fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
            for (k, version) in tta_expand(&img, &bank, count, seed)?.iter().enumerate() {
                io::save_png(version, &out_dir.join(format!("{k:03}.png")))?;
            }
        }
        Command::TtaMedian { preds, out } => {
            let maps = preds.iter().map(|p| io::load_prob_map(p)).collect::<Result<Vec<_>>>()?;
            io::save_prob_map(&tta_median(&maps)?, &out)?;
        }
        Command::CropBbox { image, mask, margin, out } => {
            let img = io::load_image(&image)?;
            let mask = io::load_mask(&mask)?;
            if (mask.width(), mask.height()) != (img.width(), img.height()) {
                return Err(Error::ShapeMismatch(format!(
                    "mask {}x{} vs image {}x{}",
                    mask.width(),
                    mask.height(),
                    img.width(),
                    img.height()
                )));
            }
            let b = expanded_bbox(&mask, margin)?;
            io::save_png(&crop(&img, &b), &out)?;
            println!("bbox={},{},{},{}", b.x0, b.y0, b.x1, b.y1);
        }
        Command::Metrics(MetricsCommand::Seg { pred, gt, threshold }) => {
            let pred = load_pred_mask(&pred, threshold)?;
            let gt = io::load_mask(&gt)?;
            let m = seg_metrics(&pred, &gt)?;
            println!("accuracy={:.4}", m.accuracy);
            println!("dice={:.4}", m.dice);
            println!("jaccard={:.4}", m.jaccard);
            println!("sensitivity={:.4}", m.sensitivity);
            println!("specificity={:.4}", m.specificity);
        }
        Command::Metrics(MetricsCommand::Cls { scores, threshold }) => {
            let scores = io::read_scores_csv(&scores)?;
            let c = scores.confusion_at(threshold);
            println!("auc={:.4}", auc(&scores)?);
            println!("ap={:.4}", average_precision(&scores)?);
            println!("accuracy={:.4}", c.accuracy());
            println!("sensitivity={:.4}", c.sensitivity()?);
            println!("specificity={:.4}", c.specificity()?);
        }
    }
    Ok(())
}

fn load_pred_mask(path: &Path, threshold: f64) -> Result<BinaryMask> {
    match io::load_prob_map(path) {
        Ok(map) => Ok(threshold_map(&map, threshold)),
        Err(Error::UnsupportedBitDepth(_)) => io::load_mask(path),
        Err(e) => Err(e),
    }
}

/// White-balances one input and writes one output per plan.
fn render_item(
    position: usize,
    input: &Path,
    mask_path: Option<&PathBuf>,
    estimator: &EstimatorConfig,
    plans: &[(u64, AugmentationPlan)],
    out_dir: &Path,
) -> Result<ManifestItem> {
    let img = io::load_image(input)?;
    let tau = estimate_illuminant(&img, estimator)?;
    let wb = von_kries_correct(&img, &tau)?;
    let mask = mask_path.map(|p| io::load_mask(p)).transpose()?;
    let base = format!("{position:04}_{}", stem(input));
    let mut outputs = Vec::with_capacity(plans.len());
    for (k, (index, plan)) in plans.iter().enumerate() {
        let image_name = format!("{base}_{k:03}.png");
        let mask_name = match &mask {
            Some(mask) => {
                let (out, out_mask) = apply_plan_with_mask(&wb, mask, plan)?;
                io::save_png(&out, &out_dir.join(&image_name))?;
                let name = format!("{base}_{k:03}_mask.png");
                io::save_mask(&out_mask, &out_dir.join(&name))?;
                Some(name)
            }
            None => {
                io::save_png(&apply_plan(&wb, plan)?, &out_dir.join(&image_name))?;
                None
            }
        };
        outputs.push(ManifestOutput { index: *index, image: image_name, mask: mask_name, plan: *plan });
    }
    Ok(ManifestItem {
        input: input.to_path_buf(),
        mask: mask_path.cloned(),
        removed_illuminant: tau,
        outputs,
    })
}

fn write_manifest(manifest: &RunManifest, out_dir: &Path) -> Result<()> {
    let path = out_dir.join(MANIFEST_NAME);
    let mut text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Format(format!("manifest: {e}")))?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}
