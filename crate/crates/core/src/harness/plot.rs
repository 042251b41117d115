//! Minimal raster scatter plots: observed on x, predicted on y, the
//! diagonal in grey, vertical bars for measurement error.

use std::path::Path;

use image::{Rgb, RgbImage};

use super::report::Predictor;
use crate::error::{Error, Result};

const SIZE: u32 = 480;
const MARGIN: u32 = 30;

pub struct Series {
    pub predictor: Predictor,
    /// `(observed, predicted, sigma)`.
    pub points: Vec<(f64, f64, f64)>,
}

fn color(p: Predictor) -> (Rgb<u8>, Rgb<u8>) {
    match p {
        Predictor::Initial => (Rgb([200, 40, 40]), Rgb([240, 190, 190])),
        Predictor::Tl => (Rgb([30, 90, 200]), Rgb([185, 205, 240])),
        Predictor::Baseline => (Rgb([40, 150, 60]), Rgb([190, 230, 195])),
    }
}

pub fn scatter_png(series: &[Series], path: &Path) -> Result<()> {
    let mut img = RgbImage::from_pixel(SIZE, SIZE, Rgb([255, 255, 255]));
    let finite = series.iter().flat_map(|s| &s.points).flat_map(|&(o, p, _)| [o, p]).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let inner = (SIZE - 2 * MARGIN) as f64;
    let px = |v: f64| MARGIN as f64 + (v - lo) / (hi - lo) * inner;
    let put = |img: &mut RgbImage, x: f64, y: f64, c: Rgb<u8>| {
        let (x, y) = (x.round(), (SIZE as f64 - y).round());
        if x >= 0.0 && y >= 0.0 && x < SIZE as f64 && y < SIZE as f64 {
            img.put_pixel(x as u32, y as u32, c);
        }
    };

    let grey = Rgb([170, 170, 170]);
    for i in 0..=(inner as u32) {
        let t = MARGIN as f64 + i as f64;
        put(&mut img, t, t, grey);
        for edge in [MARGIN as f64, (SIZE - MARGIN) as f64] {
            put(&mut img, t, edge, Rgb([0, 0, 0]));
            put(&mut img, edge, t, Rgb([0, 0, 0]));
        }
    }
    for s in series {
        let (dot, bar) = color(s.predictor);
        for &(o, p, sigma) in &s.points {
            if !(o.is_finite() && p.is_finite()) {
                continue;
            }
            let (x, y) = (px(o), px(p));
            if sigma > 0.0 {
                let (y0, y1) = (px(p - sigma), px(p + sigma));
                let mut t = y0;
                while t <= y1 {
                    put(&mut img, x, t, bar);
                    t += 1.0;
                }
            }
            for dx in -1..=1 {
                for dy in -1..=1 {
                    put(&mut img, x + dx as f64, y + dy as f64, dot);
                }
            }
        }
    }
    img.save(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}
