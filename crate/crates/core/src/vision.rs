//! Dual-stream visual features: patch tokens (a linear ViT-style patch
//! embedding with learned positions) and segment tokens (connected-component
//! region descriptors through a learned embedding, padded with a learned
//! null region), concatenated patch-first.

use image::RgbImage;
use ndarray::{concatenate, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, NodeId, ParamStore};
use crate::regions::{extract_regions, RegionParams, DESCRIPTOR_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisionConfig {
    pub image_size: u32,
    pub patch_size: u32,
    pub n_segments: usize,
    pub d: usize,
    pub threshold: u8,
    pub min_area: usize,
}

impl Default for VisionConfig {
    fn default() -> Self {
        VisionConfig {
            image_size: 32,
            patch_size: 8,
            n_segments: 8,
            d: 32,
            threshold: 32,
            min_area: 3,
        }
    }
}

impl VisionConfig {
    pub fn n_patches(&self) -> usize {
        let per_side = (self.image_size / self.patch_size) as usize;
        per_side * per_side
    }

    pub fn patch_dim(&self) -> usize {
        (self.patch_size * self.patch_size * 3) as usize
    }

    pub fn region_params(&self) -> RegionParams {
        RegionParams {
            threshold: self.threshold,
            min_area: self.min_area,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.image_size % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "vision.image_size {} not divisible by vision.patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.n_segments < 1 || self.d < 1 {
            return Err(Error::Config("vision.n_segments and vision.d must be positive".into()));
        }
        Ok(())
    }
}

pub fn init_vision_params<R: Rng>(store: &mut ParamStore, cfg: &VisionConfig, rng: &mut R) {
    let pd = cfg.patch_dim();
    store.init_normal("vision.patch.w", pd, cfg.d, (1.0 / pd as f64).sqrt(), rng);
    store.init_const("vision.patch.b", 1, cfg.d, 0.0);
    store.init_normal("vision.patch.pos", cfg.n_patches(), cfg.d, 0.1, rng);
    store.init_normal("vision.seg.w", DESCRIPTOR_DIM, cfg.d, (1.0 / DESCRIPTOR_DIM as f64).sqrt(), rng);
    store.init_const("vision.seg.b", 1, cfg.d, 0.0);
    store.init_normal("vision.seg.null", 1, cfg.d, 0.1, rng);
}

/// Non-overlapping `p×p` patches in row-major order, each flattened as
/// (row, col, channel) with channels scaled to [0, 1].
pub fn patchify(image: &RgbImage, patch: u32) -> Result<Array2<f64>> {
    let (w, h) = image.dimensions();
    if patch == 0 || w % patch != 0 || h % patch != 0 {
        return Err(Error::shape(format!(
            "image {w}×{h} not divisible by patch size {patch}"
        )));
    }
    let (pw, ph) = (w / patch, h / patch);
    let dim = (patch * patch * 3) as usize;
    let mut out = Array2::zeros(((pw * ph) as usize, dim));
    for pr in 0..ph {
        for pc in 0..pw {
            let row = (pr * pw + pc) as usize;
            let mut k = 0;
            for r in 0..patch {
                for c in 0..patch {
                    let px = image.get_pixel(pc * patch + c, pr * patch + r).0;
                    for ch in px {
                        out[[row, k]] = ch as f64 / 255.0;
                        k += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Patch stream on the tape: `N_v × d`.
pub fn patch_tokens(g: &mut Graph, image: &RgbImage, cfg: &VisionConfig) -> Result<NodeId> {
    let patches = patchify(image, cfg.patch_size)?;
    let pos = g.param("vision.patch.pos")?;
    if patches.nrows() != g.shape(pos).0 {
        return Err(Error::shape(format!(
            "image yields {} patches but the encoder has {} position embeddings",
            patches.nrows(),
            g.shape(pos).0
        )));
    }
    let w = g.weight("vision.patch.w")?;
    let b = g.param("vision.patch.b")?;
    let x = g.input(patches);
    let t = g.matmul(x, w);
    let t = g.add_row(t, b);
    Ok(g.add(t, pos))
}

/// Region descriptor features of the (at most `n_segments`) largest regions.
pub fn region_features(image: &RgbImage, cfg: &VisionConfig) -> Array2<f64> {
    let area = (image.width() * image.height()) as usize;
    let regions = extract_regions(image, &cfg.region_params());
    let kept = regions.len().min(cfg.n_segments);
    let mut feats = Array2::zeros((kept, DESCRIPTOR_DIM));
    for (i, r) in regions.iter().take(kept).enumerate() {
        for (j, v) in r.features(area).iter().enumerate() {
            feats[[i, j]] = *v;
        }
    }
    feats
}

/// Segment stream on the tape: `n_segments × d`, real regions first then
/// null padding. Returns the node and the number of real regions.
pub fn segment_tokens(g: &mut Graph, image: &RgbImage, cfg: &VisionConfig) -> Result<(NodeId, usize)> {
    if cfg.n_segments < 1 {
        return Err(Error::invalid("n_segments must be at least 1"));
    }
    let feats = region_features(image, cfg);
    let active = feats.nrows();
    let null = g.param("vision.seg.null")?;
    let pad = cfg.n_segments - active;
    let mut parts = Vec::new();
    if active > 0 {
        let w = g.weight("vision.seg.w")?;
        let b = g.param("vision.seg.b")?;
        let x = g.input(feats);
        let t = g.matmul(x, w);
        parts.push(g.add_row(t, b));
    }
    if pad > 0 {
        parts.push(g.gather(null, &vec![0; pad]));
    }
    let out = if parts.len() == 1 { parts[0] } else { g.concat_rows(&parts) };
    Ok((out, active))
}

/// Fused visual tokens on the tape: patch rows then segment rows.
pub fn fused_tokens(g: &mut Graph, image: &RgbImage, cfg: &VisionConfig) -> Result<(NodeId, usize)> {
    let p = patch_tokens(g, image, cfg)?;
    let (s, active) = segment_tokens(g, image, cfg)?;
    if g.shape(p).1 != g.shape(s).1 {
        return Err(Error::shape("patch and segment streams differ in width"));
    }
    Ok((g.concat_rows(&[p, s]), active))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualFeatureBundle {
    pub patch_tokens: Array2<f64>,
    pub segment_tokens: Array2<f64>,
    pub fused_tokens: Array2<f64>,
}

/// Row-wise concatenation, patch tokens first.
pub fn fuse(patch_tokens: Array2<f64>, segment_tokens: Array2<f64>) -> Result<VisualFeatureBundle> {
    if patch_tokens.ncols() != segment_tokens.ncols() {
        return Err(Error::shape(format!(
            "cannot fuse {}-wide patch tokens with {}-wide segment tokens",
            patch_tokens.ncols(),
            segment_tokens.ncols()
        )));
    }
    let fused = concatenate(Axis(0), &[patch_tokens.view(), segment_tokens.view()])
        .map_err(|e| Error::shape(e.to_string()))?;
    if fused.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite visual token".into()));
    }
    Ok(VisualFeatureBundle {
        patch_tokens,
        segment_tokens,
        fused_tokens: fused,
    })
}

pub fn encode_patches(image: &RgbImage, params: &ParamStore, cfg: &VisionConfig) -> Result<Array2<f64>> {
    let mut g = Graph::new(params);
    let n = patch_tokens(&mut g, image, cfg)?;
    Ok(g.value(n).clone())
}

/// Segment tokens plus the number of real (non-null) regions.
pub fn encode_segments(image: &RgbImage, params: &ParamStore, cfg: &VisionConfig) -> Result<(Array2<f64>, usize)> {
    let mut g = Graph::new(params);
    let (n, active) = segment_tokens(&mut g, image, cfg)?;
    Ok((g.value(n).clone(), active))
}

pub fn encode_image(image: &RgbImage, params: &ParamStore, cfg: &VisionConfig) -> Result<VisualFeatureBundle> {
    fuse(encode_patches(image, params, cfg)?, encode_segments(image, params, cfg)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{blank, fill_disk, fill_rect, PALETTE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(cfg: &VisionConfig) -> ParamStore {
        let mut s = ParamStore::new();
        init_vision_params(&mut s, cfg, &mut ChaCha8Rng::seed_from_u64(1));
        s
    }

    #[test]
    fn patch_counts_and_divisibility() {
        let cfg = VisionConfig::default();
        let p = params(&cfg);
        assert_eq!(encode_patches(&blank(32), &p, &cfg).unwrap().dim(), (16, 32));
        let odd = RgbImage::new(32, 33);
        assert!(matches!(encode_patches(&odd, &p, &cfg), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_image_zero_positions_gives_zero_tokens() {
        let cfg = VisionConfig::default();
        let mut p = params(&cfg);
        p.value_mut("vision.patch.pos").unwrap().fill(0.0);
        let t = encode_patches(&RgbImage::new(32, 32), &p, &cfg).unwrap();
        assert!(t.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn three_disks_pad_with_nulls() {
        let cfg = VisionConfig::default();
        let p = params(&cfg);
        let mut img = blank(32);
        fill_disk(&mut img, 6, 6, 3, PALETTE[0].1);
        fill_disk(&mut img, 20, 8, 3, PALETTE[1].1);
        fill_disk(&mut img, 10, 24, 3, PALETTE[2].1);
        let (tokens, active) = encode_segments(&img, &p, &cfg).unwrap();
        assert_eq!(active, 3);
        assert_eq!(tokens.nrows(), 8);
        let null = p.value("vision.seg.null").unwrap().row(0).to_owned();
        for r in 3..8 {
            assert_eq!(tokens.row(r), null);
        }
        let (blank_tokens, none) = encode_segments(&blank(32), &p, &cfg).unwrap();
        assert_eq!(none, 0);
        assert!(blank_tokens.rows().into_iter().all(|r| r == null));
    }

    #[test]
    fn keeps_largest_regions() {
        let cfg = VisionConfig {
            n_segments: 4,
            ..VisionConfig::default()
        };
        let mut img = blank(32);
        // Ten separated bars with distinct areas 2*w for w in 2..=11.
        let mut areas = Vec::new();
        for (i, w) in (2..=11i64).enumerate() {
            let top = (i % 5) as i64 * 6 + 1;
            let left = (i / 5) as i64 * 16 + 1;
            fill_rect(&mut img, top, left, 2, w, PALETTE[i % 5].1);
            areas.push((2 * w) as usize);
        }
        let regions = extract_regions(&img, &cfg.region_params());
        assert_eq!(regions.len(), 10);
        let mut oracle = areas.clone();
        oracle.sort_unstable_by(|a, b| b.cmp(a));
        let feats = region_features(&img, &cfg);
        assert_eq!(feats.nrows(), 4);
        for (i, expect) in oracle[..4].iter().enumerate() {
            assert!((feats[[i, 0]] * 1024.0 - *expect as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn fuse_layout_and_errors() {
        let a = Array2::from_shape_fn((16, 32), |(r, c)| (r * 32 + c) as f64);
        let b = Array2::from_elem((8, 32), -1.0);
        let bundle = fuse(a.clone(), b).unwrap();
        assert_eq!(bundle.fused_tokens.dim(), (24, 32));
        assert_eq!(bundle.fused_tokens.slice(ndarray::s![..16, ..]), a);
        assert!(fuse(a, Array2::zeros((8, 16))).is_err());
    }
}
