//! Seedable image/label augmentations.
//!
//! Every geometric operation maps label boxes with the same transform as the
//! pixels. Resampling is nearest-neighbour throughout, so outputs are exact
//! functions of the inputs and the RNG seed.

use std::io::{BufRead, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;

use crate::boxes::{BBox, BoxTransform, GroundTruth};
use crate::kv::KvDoc;
use crate::{Error, Result};

/// Gray fill used for padding and uncovered canvas regions.
pub const FILL_VALUE: f32 = 114.0 / 255.0;

/// Interleaved RGB image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::input("image dimensions must be at least 1"));
        }
        if data.len() != height * width * 3 {
            return Err(Error::input(format!(
                "{width}x{height} RGB image needs {} values, got {}",
                height * width * 3,
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::input("pixel values must lie in [0, 1]"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub labels: Vec<GroundTruth>,
}

impl LabeledImage {
    pub fn new(image: Image, labels: Vec<GroundTruth>) -> Result<Self> {
        let (w, h) = (image.width() as f64, image.height() as f64);
        for l in &labels {
            let b = l.bbox;
            if b.x_min() < 0.0 || b.y_min() < 0.0 || b.x_max() > w || b.y_max() > h {
                return Err(Error::input(format!("label {b} outside {w}x{h} image")));
            }
        }
        Ok(Self { image, labels })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Square working resolution; inputs are letterboxed to it first.
    pub image_size: usize,
    /// Max translation as a fraction of the image side.
    pub translate_frac: f64,
    pub scale_range: (f64, f64),
    pub hflip_prob: f64,
    /// Max absolute hue shift (turns) and saturation/value gain deltas.
    pub hsv_gains: (f64, f64, f64),
    pub mosaic_enabled: bool,
    pub mixup_enabled: bool,
    pub mixup_beta: f64,
    pub min_box_area: f64,
    pub seed: u64,
}

/// YOLO-family placeholder magnitudes; not tuned for any particular dataset.
impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            image_size: 320,
            translate_frac: 0.1,
            scale_range: (0.5, 1.5),
            hflip_prob: 0.5,
            hsv_gains: (0.015, 0.7, 0.4),
            mosaic_enabled: true,
            mixup_enabled: false,
            mixup_beta: 32.0,
            min_box_area: 4.0,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        let (gh, gs, gv) = self.hsv_gains;
        let checks = [
            (self.image_size >= 2, "image_size must be at least 2"),
            (self.translate_frac >= 0.0, "translate_frac must be non-negative"),
            (lo > 0.0 && lo <= hi, "scale_range must satisfy 0 < lo <= hi"),
            ((0.0..=1.0).contains(&self.hflip_prob), "hflip_prob must lie in [0, 1]"),
            (gh >= 0.0 && gs >= 0.0 && gv >= 0.0, "hsv gains must be non-negative"),
            (self.mixup_beta > 0.0, "mixup_beta must be positive"),
            (self.min_box_area >= 0.0, "min_box_area must be non-negative"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::input(msg));
            }
        }
        Ok(())
    }

    /// Reads a flat `key = value` document; absent keys keep their defaults.
    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let mut c = Self::default();
        if let Some(v) = doc.get_parsed("image_size")? {
            c.image_size = v;
        }
        if let Some(v) = doc.get_parsed("translate_frac")? {
            c.translate_frac = v;
        }
        if let Some(v) = doc.get_parsed("scale_lo")? {
            c.scale_range.0 = v;
        }
        if let Some(v) = doc.get_parsed("scale_hi")? {
            c.scale_range.1 = v;
        }
        if let Some(v) = doc.get_parsed("hflip_prob")? {
            c.hflip_prob = v;
        }
        if let Some(v) = doc.get_parsed("hsv_h")? {
            c.hsv_gains.0 = v;
        }
        if let Some(v) = doc.get_parsed("hsv_s")? {
            c.hsv_gains.1 = v;
        }
        if let Some(v) = doc.get_parsed("hsv_v")? {
            c.hsv_gains.2 = v;
        }
        if let Some(v) = doc.get_parsed("mosaic")? {
            c.mosaic_enabled = v;
        }
        if let Some(v) = doc.get_parsed("mixup")? {
            c.mixup_enabled = v;
        }
        if let Some(v) = doc.get_parsed("mixup_beta")? {
            c.mixup_beta = v;
        }
        if let Some(v) = doc.get_parsed("min_box_area")? {
            c.min_box_area = v;
        }
        if let Some(v) = doc.get_parsed("seed")? {
            c.seed = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::new();
        d.set("image_size", self.image_size);
        d.set("translate_frac", self.translate_frac);
        d.set("scale_lo", self.scale_range.0);
        d.set("scale_hi", self.scale_range.1);
        d.set("hflip_prob", self.hflip_prob);
        d.set("hsv_h", self.hsv_gains.0);
        d.set("hsv_s", self.hsv_gains.1);
        d.set("hsv_v", self.hsv_gains.2);
        d.set("mosaic", self.mosaic_enabled);
        d.set("mixup", self.mixup_enabled);
        d.set("mixup_beta", self.mixup_beta);
        d.set("min_box_area", self.min_box_area);
        d.set("seed", self.seed);
        d
    }
}

/// Clips a mapped label to `region` and keeps it if enough area survives.
fn clip_label(
    label: &GroundTruth,
    mapped: BBox,
    region: (f64, f64, f64, f64),
    min_box_area: f64,
) -> Option<GroundTruth> {
    let (x0, y0, x1, y1) = region;
    let c = BBox::from_corners(
        mapped.x_min().clamp(x0, x1),
        mapped.y_min().clamp(y0, y1),
        mapped.x_max().clamp(x0, x1).max(mapped.x_min().clamp(x0, x1)),
        mapped.y_max().clamp(y0, y1).max(mapped.y_min().clamp(y0, y1)),
    );
    let collapsed = c.area() == 0.0 && mapped.area() > 0.0;
    (c.area() >= min_box_area && !collapsed).then_some(GroundTruth { bbox: c, ..*label })
}

/// Aspect-preserving resize so the longer side equals `target`, centered on
/// a `target x target` canvas filled with `pad_value`.
pub fn letterbox(src: &LabeledImage, target: usize, pad_value: f32) -> Result<(LabeledImage, BoxTransform)> {
    if target == 0 {
        return Err(Error::input("letterbox target must be at least 1"));
    }
    if !(0.0..=1.0).contains(&pad_value) {
        return Err(Error::input("pad value must lie in [0, 1]"));
    }
    let (w, h) = (src.image.width(), src.image.height());
    let scale = target as f64 / w.max(h) as f64;
    let new_w = ((w as f64 * scale).round() as usize).clamp(1, target);
    let new_h = ((h as f64 * scale).round() as usize).clamp(1, target);
    let pad_x = (target - new_w) / 2;
    let pad_y = (target - new_h) / 2;

    let mut out = Image::filled(target, target, [pad_value; 3])?;
    for y in 0..new_h {
        let sy = (((y as f64 + 0.5) / scale) as usize).min(h - 1);
        for x in 0..new_w {
            let sx = (((x as f64 + 0.5) / scale) as usize).min(w - 1);
            out.set_pixel(x + pad_x, y + pad_y, src.image.pixel(sx, sy));
        }
    }
    let transform = BoxTransform {
        scale,
        pad_x: pad_x as f64,
        pad_y: pad_y as f64,
        original_width: w,
        original_height: h,
        target_width: target,
        target_height: target,
    };
    let t = target as f64;
    let labels = src
        .labels
        .iter()
        .map(|l| GroundTruth {
            bbox: transform.forward(&l.bbox).clip(t, t),
            ..*l
        })
        .collect();
    Ok((LabeledImage { image: out, labels }, transform))
}

/// Applies `p -> s * p + (tx, ty)` on a same-size canvas.
pub fn affine_translate_scale(
    src: &LabeledImage,
    tx: f64,
    ty: f64,
    s: f64,
    min_box_area: f64,
) -> Result<LabeledImage> {
    if !(s > 0.0 && s.is_finite()) || !tx.is_finite() || !ty.is_finite() {
        return Err(Error::input("affine scale must be positive and offsets finite"));
    }
    let (w, h) = (src.image.width(), src.image.height());
    let mut out = Image::filled(h, w, [FILL_VALUE; 3])?;
    for y in 0..h {
        let sy = ((y as f64 + 0.5 - ty) / s).floor();
        if sy < 0.0 || sy >= h as f64 {
            continue;
        }
        for x in 0..w {
            let sx = ((x as f64 + 0.5 - tx) / s).floor();
            if sx < 0.0 || sx >= w as f64 {
                continue;
            }
            out.set_pixel(x, y, src.image.pixel(sx as usize, sy as usize));
        }
    }
    let region = (0.0, 0.0, w as f64, h as f64);
    let labels = src
        .labels
        .iter()
        .filter_map(|l| {
            let b = l.bbox;
            let mapped = BBox::from_corners(
                s * b.x_min() + tx,
                s * b.y_min() + ty,
                s * b.x_max() + tx,
                s * b.y_max() + ty,
            );
            clip_label(l, mapped, region, min_box_area)
        })
        .collect();
    Ok(LabeledImage { image: out, labels })
}

/// Mirrors about the vertical axis.
pub fn hflip(src: &LabeledImage) -> LabeledImage {
    let (w, h) = (src.image.width(), src.image.height());
    let mut out = src.image.clone();
    for y in 0..h {
        for x in 0..w {
            out.set_pixel(x, y, src.image.pixel(w - 1 - x, y));
        }
    }
    let wf = w as f64;
    let labels = src
        .labels
        .iter()
        .map(|l| GroundTruth {
            bbox: BBox::from_corners(wf - l.bbox.x_max(), l.bbox.y_min(), wf - l.bbox.x_min(), l.bbox.y_max()),
            ..*l
        })
        .collect();
    LabeledImage { image: out, labels }
}

fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    [h, s, max]
}

fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as i64).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Shifts hue by `dh` turns and scales saturation and value by `1 + ds` and
/// `1 + dv`, clamping to `[0, 1]`. Labels are untouched.
pub fn hsv_jitter(src: &LabeledImage, dh: f64, ds: f64, dv: f64) -> LabeledImage {
    let mut out = src.image.clone();
    for px in out.data.chunks_exact_mut(3) {
        let [h, s, v] = rgb_to_hsv([px[0] as f64, px[1] as f64, px[2] as f64]);
        let hsv = [
            (h + dh).rem_euclid(1.0),
            (s * (1.0 + ds)).clamp(0.0, 1.0),
            (v * (1.0 + dv)).clamp(0.0, 1.0),
        ];
        let rgb = hsv_to_rgb(hsv);
        for c in 0..3 {
            px[c] = (rgb[c] as f32).clamp(0.0, 1.0);
        }
    }
    LabeledImage {
        image: out,
        labels: src.labels.clone(),
    }
}

/// Composes four images around `center` on a `canvas x canvas` grid.
///
/// Image 0 ends at the center from the top-left, 1 starts at it on the
/// top-right, 2 on the bottom-left and 3 on the bottom-right; each is cropped
/// to its quadrant.
pub fn mosaic(
    srcs: &[LabeledImage],
    canvas: usize,
    center: (usize, usize),
    min_box_area: f64,
) -> Result<LabeledImage> {
    if srcs.len() < 4 {
        return Err(Error::input(format!("mosaic needs 4 images, got {}", srcs.len())));
    }
    if canvas < 2 {
        return Err(Error::input("mosaic canvas must be at least 2"));
    }
    let (cx, cy) = center;
    if cx == 0 || cy == 0 || cx >= canvas || cy >= canvas {
        return Err(Error::input("mosaic center must lie inside the canvas"));
    }
    let mut out = Image::filled(canvas, canvas, [FILL_VALUE; 3])?;
    let mut labels = Vec::new();
    let (cxi, cyi, n) = (cx as i64, cy as i64, canvas as i64);

    for (q, src) in srcs.iter().take(4).enumerate() {
        let (w, h) = (src.image.width() as i64, src.image.height() as i64);
        let (ox, oy) = match q {
            0 => (cxi - w, cyi - h),
            1 => (cxi, cyi - h),
            2 => (cxi - w, cyi),
            _ => (cxi, cyi),
        };
        let (qx0, qx1) = if q % 2 == 0 { (0, cxi) } else { (cxi, n) };
        let (qy0, qy1) = if q < 2 { (0, cyi) } else { (cyi, n) };
        for y in qy0.max(oy)..qy1.min(oy + h) {
            for x in qx0.max(ox)..qx1.min(ox + w) {
                let px = src.image.pixel((x - ox) as usize, (y - oy) as usize);
                out.set_pixel(x as usize, y as usize, px);
            }
        }
        let region = (qx0 as f64, qy0 as f64, qx1 as f64, qy1 as f64);
        labels.extend(src.labels.iter().filter_map(|l| {
            clip_label(l, l.bbox.translate(ox as f64, oy as f64), region, min_box_area)
        }));
    }
    Ok(LabeledImage { image: out, labels })
}

/// `lambda * a + (1 - lambda) * b`; labels are `a`'s followed by `b`'s.
pub fn mixup(a: &LabeledImage, b: &LabeledImage, lambda: f64) -> Result<LabeledImage> {
    if a.image.width() != b.image.width() || a.image.height() != b.image.height() {
        return Err(Error::input("mixup needs equally sized images"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::input("mixup lambda must lie in [0, 1]"));
    }
    let lam = lambda as f32;
    let data = a
        .image
        .data
        .iter()
        .zip(&b.image.data)
        .map(|(&x, &y)| (lam * x + (1.0 - lam) * y).clamp(0.0, 1.0))
        .collect();
    let image = Image {
        height: a.image.height,
        width: a.image.width,
        data,
    };
    let labels = a.labels.iter().chain(&b.labels).copied().collect();
    Ok(LabeledImage { image, labels })
}

/// Randomized training pipeline driven by an [`AugmentConfig`].
///
/// Sample `i` draws from its own ChaCha stream keyed by `(seed, i)`, so
/// results do not depend on evaluation order or parallelism.
#[derive(Debug, Clone)]
pub struct Augmenter {
    config: AugmentConfig,
}

impl Augmenter {
    pub fn new(config: AugmentConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &AugmentConfig {
        &self.config
    }

    fn rng_for(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index as u64);
        rng
    }

    pub fn apply(&self, pool: &[LabeledImage], index: usize) -> Result<LabeledImage> {
        if index >= pool.len() {
            return Err(Error::input(format!("sample {index} out of range for pool of {}", pool.len())));
        }
        let mut rng = self.rng_for(index);
        let out = self.geometric_and_color(pool, index, &mut rng)?;
        if !self.config.mixup_enabled {
            return Ok(out);
        }
        let partner_index = rng.random_range(0..pool.len());
        let partner = self.geometric_and_color(pool, partner_index, &mut rng)?;
        let beta = Beta::new(self.config.mixup_beta, self.config.mixup_beta)
            .map_err(|e| Error::input(format!("mixup beta: {e}")))?;
        let lambda = beta.sample(&mut rng);
        mixup(&out, &partner, lambda)
    }

    /// Augments every sample of `pool` on the current rayon pool.
    pub fn apply_all(&self, pool: &[LabeledImage]) -> Result<Vec<LabeledImage>> {
        (0..pool.len())
            .into_par_iter()
            .map(|i| self.apply(pool, i))
            .collect()
    }

    fn geometric_and_color(
        &self,
        pool: &[LabeledImage],
        index: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<LabeledImage> {
        let c = &self.config;
        let size = c.image_size;
        let boxed = |i: usize| letterbox(&pool[i], size, FILL_VALUE).map(|(li, _)| li);

        let mut out = if c.mosaic_enabled {
            let mut parts = vec![boxed(index)?];
            for _ in 0..3 {
                parts.push(boxed(rng.random_range(0..pool.len()))?);
            }
            let lo = size / 4;
            let hi = (3 * size / 4).max(lo + 1);
            let center = (rng.random_range(lo.max(1)..hi), rng.random_range(lo.max(1)..hi));
            mosaic(&parts, size, center, c.min_box_area)?
        } else {
            boxed(index)?
        };

        let side = size as f64;
        let max_t = c.translate_frac * side;
        let tx = rng.random_range(-max_t..=max_t);
        let ty = rng.random_range(-max_t..=max_t);
        let s = rng.random_range(c.scale_range.0..=c.scale_range.1);
        // Scale about the image center rather than the origin.
        let shift = (1.0 - s) * side / 2.0;
        out = affine_translate_scale(&out, tx + shift, ty + shift, s, c.min_box_area)?;

        if rng.random::<f64>() < c.hflip_prob {
            out = hflip(&out);
        }

        let (gh, gs, gv) = c.hsv_gains;
        let dh = rng.random_range(-gh..=gh);
        let ds = rng.random_range(-gs..=gs);
        let dv = rng.random_range(-gv..=gv);
        Ok(hsv_jitter(&out, dh, ds, dv))
    }
}

/// Reads a binary PPM (`P6`, maxval up to 255).
pub fn read_ppm<R: Read>(mut r: R) -> Result<Image> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse("ppm header", "unexpected end of header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token(&bytes)? != "P6" {
        return Err(Error::parse("ppm header", "only binary P6 is supported"));
    }
    let num = |s: String, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::parse("ppm header", format!("bad {what} `{s}`")))
    };
    let width = num(token(&bytes)?, "width")?;
    let height = num(token(&bytes)?, "height")?;
    let maxval = num(token(&bytes)?, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse("ppm header", "maxval must be in 1..=255"));
    }
    let start = pos + 1;
    let n = width * height * 3;
    if bytes.len() < start + n {
        return Err(Error::parse("ppm data", "truncated pixel data"));
    }
    let data = bytes[start..start + n]
        .iter()
        .map(|&b| (b as f32 / maxval as f32).min(1.0))
        .collect();
    Image::new(height, width, data)
}

pub fn write_ppm<W: Write>(mut w: W, image: &Image) -> Result<()> {
    write!(w, "P6\n{} {}\n255\n", image.width(), image.height())?;
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Parses `class x_min y_min x_max y_max` lines.
pub fn read_labels<R: BufRead>(r: R) -> Result<Vec<GroundTruth>> {
    let mut labels = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let at = || format!("labels line {}", i + 1);
        if fields.len() != 5 {
            return Err(Error::parse(at(), "expected `class x_min y_min x_max y_max`"));
        }
        let class_id = fields[0]
            .parse::<usize>()
            .map_err(|_| Error::parse(at(), "bad class id"))?;
        let mut c = [0f64; 4];
        for (k, f) in fields[1..].iter().enumerate() {
            c[k] = f.parse().map_err(|_| Error::parse(at(), format!("bad coordinate `{f}`")))?;
        }
        labels.push(GroundTruth::new(BBox::from_array(c)?, class_id));
    }
    Ok(labels)
}

pub fn write_labels<W: Write>(mut w: W, labels: &[GroundTruth]) -> Result<()> {
    for l in labels {
        let b = l.bbox;
        writeln!(w, "{} {} {} {} {}", l.class_id, b.x_min(), b.y_min(), b.x_max(), b.y_max())?;
    }
    Ok(())
}
