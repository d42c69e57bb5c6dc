#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{GrayImage, RgbImage};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_illumaug"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn illumaug")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn write_rgb(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> PathBuf {
    RgbImage::from_fn(w, h, |x, y| image::Rgb(f(x, y))).save(path).unwrap();
    path.to_path_buf()
}

pub fn write_gray(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> u8) -> PathBuf {
    GrayImage::from_fn(w, h, |x, y| image::Luma([f(x, y)])).save(path).unwrap();
    path.to_path_buf()
}

/// A colorful test image with a soft cast so white balancing has work to do.
pub fn write_scene(path: &Path, w: u32, h: u32, cast: [f64; 3]) -> PathBuf {
    write_rgb(path, w, h, |x, y| {
        let u = x as f64 / w as f64;
        let v = y as f64 / h as f64;
        let base = [
            0.25 + 0.35 * u,
            0.2 + 0.4 * v,
            0.3 + 0.25 * (1.0 - u) * v,
        ];
        std::array::from_fn(|c| (255.0 * (base[c] * cast[c]).min(1.0)).round() as u8)
    })
}

/// Relative path → file bytes for every file under `root`.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Parses `name=value` lines.
pub fn kv(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
