//! Dataset ingestion, resizing, normalization, stratified splitting, and
//! manifest bookkeeping.
//!
//! A dataset on disk is one directory per class; class ids are the
//! lexicographic rank of the directory name and samples are enumerated in
//! (class, filename) sorted order, so ingestion is deterministic no matter
//! how the filesystem enumerates entries. Decoded rasters are PNG, JPEG,
//! or the tiny headerless RAW0 fixture format.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augment::AugmentOp;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Where a sample's pixels came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Original,
    Augmented(AugmentOp),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Original => f.write_str("original"),
            Origin::Augmented(op) => write!(f, "augmented({})", op.name()),
        }
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "original" {
            return Ok(Origin::Original);
        }
        if let Some(inner) = s.strip_prefix("augmented(").and_then(|r| r.strip_suffix(')')) {
            for op in AugmentOp::ALL {
                if op.name() == inner {
                    return Ok(Origin::Augmented(op));
                }
            }
        }
        Err(Error::param(format!("unknown origin '{s}'")))
    }
}

/// One labeled image, intensities in [0,1], layout `[H, W, C]`.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Tensor<f32>,
    pub label_id: usize,
    pub source_path: String,
    pub origin: Origin,
}

/// Ordered samples plus the sorted class-name table their labels index.
#[derive(Debug)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, class_names: Vec<String>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::param("dataset needs at least one class"));
        }
        if !class_names.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::param(
                "class names must be sorted and unique".to_string(),
            ));
        }
        if let Some(s) = samples.iter().find(|s| s.label_id >= class_names.len()) {
            return Err(Error::Label(format!(
                "sample '{}' has label {} but there are {} classes",
                s.source_path,
                s.label_id,
                class_names.len()
            )));
        }
        Ok(Dataset {
            samples,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.samples {
            counts[s.label_id] += 1;
        }
        counts
    }

    /// New dataset holding clones of the chosen samples, same class table.
    /// The selection may be empty (a split with no members).
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples.get(i).cloned().ok_or_else(|| {
                    Error::param(format!("index {i} out of range for {} samples", self.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(samples, self.class_names.clone())
    }

    /// Stack the chosen samples into one `[n, H, W, C]` batch plus labels.
    pub fn stack(&self, indices: &[usize]) -> Result<(Tensor<f32>, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::param("cannot stack an empty batch"));
        }
        let first = &self.samples[indices[0]].image;
        let &[h, w, c] = first.shape() else {
            return Err(Error::shape(format!(
                "sample image must be 3-D, got {:?}",
                first.shape()
            )));
        };
        let mut data = Vec::with_capacity(indices.len() * first.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = &self.samples[i];
            if s.image.shape() != [h, w, c] {
                return Err(Error::shape(format!(
                    "sample '{}' is {:?}, batch expects [{h}, {w}, {c}]",
                    s.source_path,
                    s.image.shape()
                )));
            }
            data.extend_from_slice(s.image.data());
            labels.push(s.label_id);
        }
        Ok((Tensor::new(&[indices.len(), h, w, c], data)?, labels))
    }
}

/// 8-bit intensity to the [0,1] scale.
pub fn normalize_u8(v: u8) -> f32 {
    v as f32 / 255.0
}

/// [0,1] intensity back to 8 bits, clamped and rounded to nearest.
pub fn quantize_f32(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Bilinear resize of an `[H, W, C]` image with half-pixel sample centers
/// (corner-aligned = false). A same-size call returns the input unchanged,
/// which the coordinate mapping also guarantees analytically.
pub fn resize_bilinear<T: Scalar>(img: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let &[h, w, c] = img.shape() else {
        return Err(Error::shape(format!(
            "resize input must be [H, W, C], got {:?}",
            img.shape()
        )));
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::param("resize target dims must be positive"));
    }
    if out_h == h && out_w == w {
        return Ok(img.clone());
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let d = img.data();
    let mut out = vec![T::zero(); out_h * out_w * c];
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            for ch in 0..c {
                let p = |yy: usize, xx: usize| d[(yy * w + xx) * c + ch].to_f64();
                // lerp form: exact for constant neighborhoods and at
                // integer sample coordinates
                let top = p(y0, x0) + tx * (p(y0, x1) - p(y0, x0));
                let bot = p(y1, x0) + tx * (p(y1, x1) - p(y1, x0));
                out[(oy * out_w + ox) * c + ch] = T::from_f64(top + ty * (bot - top));
            }
        }
    }
    Tensor::new(&[out_h, out_w, c], out)
}

/// The literal reading of "cropping to size": the centered `size` x `size`
/// window. Images smaller than the window fall back to bilinear resize.
pub fn center_crop<T: Scalar>(img: &Tensor<T>, size: usize) -> Result<Tensor<T>> {
    let &[h, w, c] = img.shape() else {
        return Err(Error::shape(format!(
            "crop input must be [H, W, C], got {:?}",
            img.shape()
        )));
    };
    if h < size || w < size {
        return resize_bilinear(img, size, size);
    }
    let (y0, x0) = ((h - size) / 2, (w - size) / 2);
    Ok(Tensor::from_fn(&[size, size, c], |i| {
        let ch = i % c;
        let x = (i / c) % size;
        let y = i / (c * size);
        img.at(&[y0 + y, x0 + x, ch])
    }))
}

const RAW0_MAGIC: &[u8; 4] = b"RAW0";

/// Encode the headerless fixture raster: magic "RAW0", u16 height, u16
/// width, u8 channels (1 or 3), then row-major bytes. Multi-byte fields
/// little-endian.
pub fn raw0_encode(h: usize, w: usize, c: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if h == 0 || w == 0 || h > u16::MAX as usize || w > u16::MAX as usize {
        return Err(Error::param(format!("raw image dims {h}x{w} out of range")));
    }
    if c != 1 && c != 3 {
        return Err(Error::param(format!("raw image channels must be 1 or 3, got {c}")));
    }
    if pixels.len() != h * w * c {
        return Err(Error::param(format!(
            "raw image needs {} bytes, got {}",
            h * w * c,
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(9 + pixels.len());
    out.extend_from_slice(RAW0_MAGIC);
    out.extend_from_slice(&(h as u16).to_le_bytes());
    out.extend_from_slice(&(w as u16).to_le_bytes());
    out.push(c as u8);
    out.extend_from_slice(pixels);
    Ok(out)
}

fn raw0_decode(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let fail = |reason: &str| Error::ingest(path, reason);
    if bytes.len() < 9 {
        return Err(fail("raw image shorter than its header"));
    }
    let h = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    let w = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let c = bytes[8] as usize;
    if h == 0 || w == 0 || (c != 1 && c != 3) {
        return Err(fail("raw image header has invalid dimensions"));
    }
    let body = &bytes[9..];
    if body.len() != h * w * c {
        return Err(fail(&format!(
            "raw image body has {} bytes, header promises {}",
            body.len(),
            h * w * c
        )));
    }
    Ok((h, w, c, body.to_vec()))
}

/// Decode one raster file (RAW0, PNG, or JPEG) to a normalized `[H, W, 3]`
/// tensor. Single-channel sources replicate their gray value.
pub fn decode_image(path: &Path, bytes: &[u8]) -> Result<Tensor<f32>> {
    let (h, w, c, pixels) = if bytes.starts_with(RAW0_MAGIC) {
        raw0_decode(path, bytes)?
    } else {
        let img = image::load_from_memory(bytes)
            .map_err(|e| Error::ingest(path, e.to_string()))?
            .into_rgb8();
        let (w, h) = img.dimensions();
        (h as usize, w as usize, 3, img.into_raw())
    };
    let data: Vec<f32> = if c == 3 {
        pixels.iter().map(|&v| normalize_u8(v)).collect()
    } else {
        pixels
            .iter()
            .flat_map(|&v| [normalize_u8(v); 3])
            .collect()
    };
    Tensor::new(&[h, w, 3], data)
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// network input side length; images are fitted to size x size
    pub size: usize,
    /// centered window instead of bilinear resize
    pub center_crop: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            size: 50,
            center_crop: false,
        }
    }
}

/// Ingest a class-per-directory tree. Class names are the sorted
/// subdirectory names; samples are sorted by filename within each class.
pub fn load_directory(root: &Path) -> Result<Dataset> {
    load_directory_opts(root, LoadOptions::default())
}

pub fn load_directory_opts(root: &Path, opts: LoadOptions) -> Result<Dataset> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::ingest(root, e.to_string()))?;
    let mut class_dirs: Vec<(String, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::ingest(root, e.to_string()))?;
        if entry.path().is_dir() {
            let name = entry.file_name().to_string_lossy().into_owned();
            class_dirs.push((name, entry.path()));
        }
    }
    class_dirs.sort();
    if class_dirs.len() < 2 {
        return Err(Error::ingest(
            root,
            format!(
                "found {} class directories, need at least 2",
                class_dirs.len()
            ),
        ));
    }

    let mut samples = Vec::new();
    for (label_id, (_, dir)) in class_dirs.iter().enumerate() {
        let mut files: Vec<PathBuf> = Vec::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::ingest(dir, e.to_string()))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::ingest(dir, e.to_string()))?;
            if entry.path().is_file() {
                files.push(entry.path());
            }
        }
        files.sort();
        if files.is_empty() {
            return Err(Error::ingest(dir, "class directory has no image files"));
        }
        for file in files {
            let bytes = std::fs::read(&file).map_err(|e| Error::ingest(&file, e.to_string()))?;
            let img = decode_image(&file, &bytes)?;
            let image = if opts.center_crop {
                center_crop(&img, opts.size)?
            } else {
                resize_bilinear(&img, opts.size, opts.size)?
            };
            samples.push(Sample {
                image,
                label_id,
                source_path: file.display().to_string(),
                origin: Origin::Original,
            });
        }
    }
    Dataset::new(samples, class_dirs.into_iter().map(|(n, _)| n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        })
    }
}

impl FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            other => Err(Error::param(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(Error::Config(format!("split ratios {parts:?} out of [0,1]")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {parts:?} do not sum to 1")));
        }
        Ok(())
    }
}

/// One manifest row; rows are ordered exactly like the dataset's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: String,
    pub label_name: String,
    pub label_id: usize,
    pub split: SplitTag,
    pub origin: Origin,
}

#[derive(Debug)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    /// Sample indices assigned to one split, in dataset order.
    pub fn indices(&self, tag: SplitTag) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == tag)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["path", "label_name", "label_id", "split", "origin"])?;
        for r in &self.rows {
            out.write_record([
                r.path.as_str(),
                r.label_name.as_str(),
                &r.label_id.to_string(),
                &r.split.to_string(),
                &r.origin.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> Result<Manifest> {
        let mut reader = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != 5 {
                return Err(Error::param(format!(
                    "manifest row has {} fields, expected 5",
                    record.len()
                )));
            }
            rows.push(ManifestRow {
                path: record[0].to_string(),
                label_name: record[1].to_string(),
                label_id: record[2]
                    .parse()
                    .map_err(|_| Error::param(format!("bad label id '{}'", &record[2])))?,
                split: record[3].parse()?,
                origin: record[4].parse()?,
            });
        }
        Ok(Manifest { rows })
    }
}

/// Stratified split: per class, indices are shuffled by a fork keyed on the
/// class name, the first floor(val_ratio * n) go to validation, the next
/// floor(test_ratio * n) to test, and the remainder to train.
pub fn split(ds: &Dataset, ratios: SplitRatios, rng: &Rng) -> Result<Manifest> {
    ratios.validate()?;
    let mut tags: Vec<Option<SplitTag>> = vec![None; ds.len()];
    for (label_id, name) in ds.class_names.iter().enumerate() {
        let mut members: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.samples[i].label_id == label_id)
            .collect();
        let n = members.len();
        if n < 3 {
            return Err(Error::Split(format!(
                "class '{name}' has {n} samples, need at least 3 to fill every split"
            )));
        }
        rng.fork(&format!("split/{name}")).shuffle(&mut members);
        let n_val = (ratios.val * n as f64).floor() as usize;
        let n_test = (ratios.test * n as f64).floor() as usize;
        for (pos, &idx) in members.iter().enumerate() {
            tags[idx] = Some(if pos < n_val {
                SplitTag::Val
            } else if pos < n_val + n_test {
                SplitTag::Test
            } else {
                SplitTag::Train
            });
        }
    }
    let rows = ds
        .samples
        .iter()
        .zip(&tags)
        .map(|(s, tag)| ManifestRow {
            path: s.source_path.clone(),
            label_name: ds.class_names[s.label_id].clone(),
            label_id: s.label_id,
            split: tag.expect("every sample belongs to a class"),
            origin: s.origin,
        })
        .collect();
    Ok(Manifest { rows })
}
