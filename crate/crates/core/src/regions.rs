//! Object-level region extraction: color quantization against the dominant
//! background, 4-connected flood fill, and per-region descriptors.

use std::collections::HashMap;

use image::RgbImage;
use serde::{Deserialize, Serialize};

/// Width of the feature vector produced by [`RegionDescriptor::features`].
pub const DESCRIPTOR_DIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    /// Max per-channel distance from the background color still counted as background.
    pub threshold: u8,
    /// Components smaller than this many pixels are dropped.
    pub min_area: usize,
}

impl Default for RegionParams {
    fn default() -> Self {
        RegionParams {
            threshold: 32,
            min_area: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDescriptor {
    pub area: usize,
    /// (row, col), pixel centres, normalized by image height/width.
    pub centroid: (f64, f64),
    /// (top, left, height, width), normalized.
    pub bbox: (f64, f64, f64, f64),
    pub mean_color: (f64, f64, f64),
    /// Unnormalized top-left corner, used for deterministic ordering.
    #[serde(skip)]
    pub(crate) corner: (u32, u32),
}

impl RegionDescriptor {
    pub fn features(&self, image_area: usize) -> [f64; DESCRIPTOR_DIM] {
        [
            self.area as f64 / image_area as f64,
            self.centroid.0,
            self.centroid.1,
            self.bbox.0,
            self.bbox.1,
            self.bbox.2,
            self.bbox.3,
            self.mean_color.0,
            self.mean_color.1,
            self.mean_color.2,
        ]
    }
}

/// Most frequent color; ties resolved toward the smallest RGB triple.
pub fn dominant_color(img: &RgbImage) -> [u8; 3] {
    let mut counts: HashMap<[u8; 3], usize> = HashMap::new();
    for p in img.pixels() {
        *counts.entry(p.0).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(c, _)| c)
        .unwrap_or([255, 255, 255])
}

fn quantize(c: [u8; 3]) -> u8 {
    (c[0] >> 6) << 4 | (c[1] >> 6) << 2 | (c[2] >> 6)
}

/// Connected regions sorted by area descending, ties by top-left bbox corner
/// in row-major order.
pub fn extract_regions(img: &RgbImage, params: &RegionParams) -> Vec<RegionDescriptor> {
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let bg = dominant_color(img);
    let label: Vec<Option<u8>> = img
        .pixels()
        .map(|p| {
            let far = p.0.iter().zip(bg.iter()).any(|(a, b)| a.abs_diff(*b) > params.threshold);
            far.then(|| quantize(p.0))
        })
        .collect();

    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        let Some(q) = label[start] else { continue };
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if !seen[j] && label[j] == Some(q) {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
        if pixels.len() >= params.min_area {
            regions.push(describe(img, &pixels, w, h));
        }
    }
    regions.sort_by(|a, b| b.area.cmp(&a.area).then(a.corner.cmp(&b.corner)));
    regions
}

fn describe(img: &RgbImage, pixels: &[usize], w: usize, h: usize) -> RegionDescriptor {
    let n = pixels.len() as f64;
    let (mut sr, mut sc) = (0.0, 0.0);
    let mut color = [0.0f64; 3];
    let (mut top, mut left, mut bottom, mut right) = (usize::MAX, usize::MAX, 0, 0);
    for &i in pixels {
        let (r, c) = (i / w, i % w);
        sr += r as f64;
        sc += c as f64;
        top = top.min(r);
        bottom = bottom.max(r);
        left = left.min(c);
        right = right.max(c);
        let p = img.get_pixel(c as u32, r as u32).0;
        for k in 0..3 {
            color[k] += p[k] as f64;
        }
    }
    let (hf, wf) = (h as f64, w as f64);
    RegionDescriptor {
        area: pixels.len(),
        centroid: ((sr / n + 0.5) / hf, (sc / n + 0.5) / wf),
        bbox: (
            top as f64 / hf,
            left as f64 / wf,
            (bottom - top + 1) as f64 / hf,
            (right - left + 1) as f64 / wf,
        ),
        mean_color: (color[0] / n / 255.0, color[1] / n / 255.0, color[2] / n / 255.0),
        corner: (top as u32, left as u32),
    }
}
