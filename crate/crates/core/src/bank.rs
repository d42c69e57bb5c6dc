//! The illuminant bank: every illuminant harvested from a training corpus,
//! kept verbatim and sampled uniformly.
//!
//! On disk a bank is a line-oriented UTF-8 file:
//!
//! ```text
//! #illumbank v1 n=0 p=6 sigma=0 sat=0.98
//! ISIC_0000000.png	0.64227...	0.55132...	0.53250...
//! ```
//!
//! Rows are tab-separated `id r g b`; illuminants must be unit length to
//! within 1e-6.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::color::{rgb_to_lab, Illuminant, ImageBuffer, LabPoint};
use crate::constancy::{estimate_illuminant, EstimatorConfig, Minkowski};
use crate::error::{Error, Result};

const HEADER_TAG: &str = "#illumbank";
const FORMAT_VERSION: &str = "v1";
const LOAD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BankEntry {
    pub id: String,
    pub illuminant: Illuminant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlluminantBank {
    entries: Vec<BankEntry>,
    estimator: EstimatorConfig,
}

/// An input that did not contribute an entry.
#[derive(Debug)]
pub struct Skipped {
    pub id: String,
    pub reason: Error,
}

#[derive(Debug)]
pub struct BuildReport {
    pub bank: IlluminantBank,
    pub skipped: Vec<Skipped>,
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidId(id.to_string()));
    }
    Ok(())
}

impl IlluminantBank {
    pub fn new(entries: Vec<BankEntry>, estimator: EstimatorConfig) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyBank);
        }
        estimator.validate()?;
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            check_id(&e.id)?;
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { entries, estimator })
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn estimator(&self) -> &EstimatorConfig {
        &self.estimator
    }

    /// Draws one entry uniformly at random.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Illuminant> {
        sample_illuminant(self, rng)
    }

    /// Normalized mean direction of all entries.
    pub fn mean_illuminant(&self) -> Illuminant {
        let mut sum = [0.0; 3];
        for e in &self.entries {
            for (s, v) in sum.iter_mut().zip(e.illuminant.rgb()) {
                *s += v;
            }
        }
        Illuminant::from_rgb(sum[0], sum[1], sum[2])
            .expect("mean of non-negative unit vectors is non-zero")
    }

    /// Mean angular distance (degrees) of the entries from the mean direction.
    pub fn angular_spread(&self) -> f64 {
        let mean = self.mean_illuminant();
        let total: f64 = self.entries.iter().map(|e| e.illuminant.angular_error(&mean)).sum();
        total / self.entries.len() as f64
    }
}

/// Estimates one illuminant per image, preserving input order. Images whose
/// estimation fails are reported in `skipped`; it is an error only when
/// nothing succeeds.
pub fn build_bank<I>(images: I, cfg: &EstimatorConfig) -> Result<BuildReport>
where
    I: IntoIterator<Item = (String, ImageBuffer)>,
{
    cfg.validate()?;
    let results: Vec<(String, Result<Illuminant>)> = images
        .into_iter()
        .map(|(id, img)| {
            let est = estimate_illuminant(&img, cfg);
            (id, est)
        })
        .collect();
    collect_report(results, cfg)
}

/// Parallel variant of [`build_bank`]: `load` is called once per id, from
/// any worker thread, and the output order still follows `ids`.
pub fn build_bank_with<F>(ids: &[String], cfg: &EstimatorConfig, load: F) -> Result<BuildReport>
where
    F: Fn(usize, &str) -> Result<ImageBuffer> + Sync,
{
    cfg.validate()?;
    let results: Vec<(String, Result<Illuminant>)> = ids
        .par_iter()
        .enumerate()
        .map(|(i, id)| {
            let est = load(i, id).and_then(|img| estimate_illuminant(&img, cfg));
            (id.clone(), est)
        })
        .collect();
    collect_report(results, cfg)
}

fn collect_report(results: Vec<(String, Result<Illuminant>)>, cfg: &EstimatorConfig) -> Result<BuildReport> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total = results.len();
    let mut entries = Vec::with_capacity(total);
    let mut skipped = Vec::new();
    for (id, est) in results {
        match est {
            Ok(illuminant) => entries.push(BankEntry { id, illuminant }),
            Err(reason) => skipped.push(Skipped { id, reason }),
        }
    }
    if entries.is_empty() {
        return Err(Error::AllEstimationsFailed(total));
    }
    let bank = IlluminantBank::new(entries, *cfg)?;
    Ok(BuildReport { bank, skipped })
}

pub fn sample_illuminant<R: Rng + ?Sized>(bank: &IlluminantBank, rng: &mut R) -> Result<Illuminant> {
    if bank.entries.is_empty() {
        return Err(Error::EmptyBank);
    }
    let k = rng.random_range(0..bank.entries.len());
    Ok(bank.entries[k].illuminant)
}

/// Display color of an illuminant: scaled so its largest channel is 1.
pub fn display_rgb(t: &Illuminant) -> [f64; 3] {
    let rgb = t.rgb();
    let max = rgb.iter().cloned().fold(0.0, f64::max);
    rgb.map(|c| c / max)
}

pub fn bank_lab_projection(bank: &IlluminantBank) -> Vec<(String, LabPoint)> {
    bank.entries
        .iter()
        .map(|e| (e.id.clone(), rgb_to_lab(display_rgb(&e.illuminant))))
        .collect()
}

/// Formats with 17 significant digits in plain decimal notation.
fn fmt_17(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{v:.16e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    let decimals = (16 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn header_line(cfg: &EstimatorConfig) -> String {
    format!(
        "{HEADER_TAG} {FORMAT_VERSION} n={} p={} sigma={} sat={}",
        cfg.deriv_order, cfg.minkowski_p, cfg.smoothing_sigma, cfg.saturation_threshold
    )
}

pub fn to_bank_string(bank: &IlluminantBank) -> String {
    let mut out = header_line(&bank.estimator);
    out.push('\n');
    for e in &bank.entries {
        let [r, g, b] = e.illuminant.rgb();
        let _ = writeln!(out, "{}\t{}\t{}\t{}", e.id, fmt_17(r), fmt_17(g), fmt_17(b));
    }
    out
}

pub fn save_bank(bank: &IlluminantBank, path: &Path) -> Result<()> {
    fs::write(path, to_bank_string(bank))
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn load_bank(path: &Path) -> Result<IlluminantBank> {
    let text = fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_bank(&text)
}

fn parse_header(line: &str) -> std::result::Result<EstimatorConfig, String> {
    let mut fields = line.split_whitespace();
    if fields.next() != Some(HEADER_TAG) {
        return Err(format!("expected header starting with {HEADER_TAG}"));
    }
    match fields.next() {
        Some(FORMAT_VERSION) => {}
        other => return Err(format!("unsupported version {other:?}")),
    }
    let (mut n, mut p, mut sigma, mut sat) = (None, None, None, None);
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| format!("malformed header field {field:?}"))?;
        let bad = |_| format!("bad value for {key}: {value:?}");
        match key {
            "n" => n = Some(value.parse::<u8>().map_err(|e| bad(e.to_string()))?),
            "p" => p = Some(value.parse::<Minkowski>().map_err(|e| bad(e.to_string()))?),
            "sigma" => sigma = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "sat" => sat = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            _ => return Err(format!("unknown header field {key:?}")),
        }
    }
    let missing = |k: &str| format!("header is missing {k}=");
    let cfg = EstimatorConfig {
        deriv_order: n.ok_or_else(|| missing("n"))?,
        minkowski_p: p.ok_or_else(|| missing("p"))?,
        smoothing_sigma: sigma.ok_or_else(|| missing("sigma"))?,
        saturation_threshold: sat.ok_or_else(|| missing("sat"))?,
    };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

pub fn parse_bank(text: &str) -> Result<IlluminantBank> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or(Error::BankParse { line: 1, msg: "empty file".into() })?;
    let estimator = parse_header(header).map_err(|msg| Error::BankParse { line: 1, msg })?;

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::BankParse { line, msg };
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 4 {
            return Err(err(format!("expected 4 tab-separated fields, found {}", cols.len())));
        }
        let id = cols[0];
        if id.is_empty() {
            return Err(err("empty id".into()));
        }
        if !seen.insert(id.to_string()) {
            return Err(err(format!("duplicate id {id:?}")));
        }
        let mut rgb = [0.0; 3];
        for (v, s) in rgb.iter_mut().zip(&cols[1..]) {
            *v = s.trim().parse().map_err(|_| err(format!("bad number {s:?}")))?;
        }
        let illuminant = Illuminant::from_unit(rgb[0], rgb[1], rgb[2], LOAD_TOLERANCE)
            .map_err(|_| err(format!("illuminant {rgb:?} is not a non-negative unit vector")))?;
        entries.push(BankEntry { id: id.to_string(), illuminant });
    }
    if entries.is_empty() {
        return Err(Error::BankParse { line: 1, msg: "bank has no entries".into() });
    }
    IlluminantBank::new(entries, estimator)
}
