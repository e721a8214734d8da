//! Manifests, CSV tables and image files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tropmorph::morphonet::{LayerSpec, MorphNetwork};

use crate::config::ExperimentConfig;
use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// First 12 hex digits of the config hash; every CSV row carries it.
    pub id: String,
    pub config_sha256: String,
    pub kind: String,
    pub seeds: Vec<u64>,
    pub version: String,
    pub config: String,
}

impl Manifest {
    pub fn for_config(cfg: &ExperimentConfig) -> Self {
        let config = cfg.canonical();
        let digest = Sha256::digest(config.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self {
            id: hex[..12].to_owned(),
            config_sha256: hex,
            kind: cfg.kind.to_string(),
            seeds: cfg.seeds.clone(),
            version: VERSION.to_owned(),
            config,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Drawn as dots instead of a polyline.
    pub scatter: bool,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// A standalone SVG line chart; `log_x` uses a base-10 horizontal axis.
pub fn svg_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> String {
    let (w, h, ml, mr, mt, mb) = (640.0, 420.0, 64.0, 150.0, 36.0, 48.0);
    let tx = |x: f64| if log_x { x.max(1e-12).log10() } else { x };
    let pts = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(tx(x));
        x1 = x1.max(tx(x));
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let px = |x: f64| ml + (tx(x) - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - ml - mr,
        h - mt - mb
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let yv = y0 + f * (y1 - y0);
        let xv = x0 + f * (x1 - x0);
        let xl = if log_x { 10f64.powf(xv) } else { xv };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            ml - 6.0,
            py(yv) + 4.0,
            fmt_tick(yv)
        );
        let xpos = ml + f * (w - ml - mr);
        let _ = writeln!(
            s,
            r#"<text x="{xpos}" y="{}" text-anchor="middle">{}</text>"#,
            h - mb + 16.0,
            fmt_tick(xl)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        ml + (w - ml - mr) / 2.0,
        h - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        mt + (h - mt - mb) / 2.0,
        mt + (h - mt - mb) / 2.0,
        escape(y_label)
    );
    for (k, series) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let finite = series.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite());
        if series.scatter {
            for &(x, y) in finite {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" fill-opacity="0.6"/>"#,
                    px(x),
                    py(y)
                );
            }
        } else {
            let path: Vec<String> = finite.map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
        }
        let ly = mt + 14.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/>"#,
            w - mr + 12.0,
            ly - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}">{}</text>"#,
            w - mr + 30.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Incoming weights of the first hidden layer, one square tile per unit
/// (inputs must form a square image), each tile scaled to its own range.
/// Morphological biases are left out.
pub fn weight_grid(net: &MorphNetwork) -> Option<image::GrayImage> {
    let side = (net.input_dim() as f64).sqrt().round() as usize;
    if side * side != net.input_dim() || net.hidden_layers() == 0 {
        return None;
    }
    let skip = match net.specs()[0] {
        LayerSpec::Linear(_) | LayerSpec::Relu(_) => 0,
        _ => 1,
    };
    let blocks = match net.specs()[0] {
        LayerSpec::Linear(_) | LayerSpec::Relu(_) => &net.blocks(0)[..1],
        _ => net.blocks(0),
    };
    let tiles: Vec<&[f64]> = blocks
        .iter()
        .flat_map(|t| (0..t.rows()).map(move |u| &t.row(u)[skip..]))
        .collect();
    let cols = (tiles.len() as f64).sqrt().ceil() as usize;
    let rows = tiles.len().div_ceil(cols);
    let cell = side + 1;
    let mut img = image::GrayImage::from_pixel((cols * cell + 1) as u32, (rows * cell + 1) as u32, image::Luma([255]));
    for (t, tile) in tiles.iter().enumerate() {
        let lo = tile.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = tile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let (ox, oy) = ((t % cols) * cell + 1, (t / cols) * cell + 1);
        for (i, &v) in tile.iter().enumerate() {
            let g = (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8;
            img.put_pixel((ox + i % side) as u32, (oy + i / side) as u32, image::Luma([g]));
        }
    }
    Some(img)
}
