//! File-backed image plumbing: loading one image for the network and
//! exporting datasets as PNG trees.

use std::fs;
use std::path::Path;

use asl_core::data::{decode_image, quantize_f32, resize_bilinear, Dataset, Origin};
use asl_core::error::{Error, Result};
use asl_core::tensor::Tensor;

/// Decode one image file and fit it to `side` x `side` x 3.
pub fn load_image_for_model(path: &Path, side: usize) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    let img = decode_image(path, &bytes)?;
    resize_bilinear(&img, side, side)
}

fn export_name(source_path: &str, origin: Origin) -> String {
    let stem = Path::new(source_path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string());
    match origin {
        Origin::Original => format!("{stem}.png"),
        Origin::Augmented(op) => format!("{stem}_{}.png", op.name()),
    }
}

/// Write `ds` under `out` as `<class>/<stem>.png`, 8-bit RGB; augmented
/// samples get their operation's name appended to the stem. Returns the
/// number of files written.
pub fn write_png_tree(ds: &Dataset, out: &Path) -> Result<usize> {
    for name in &ds.class_names {
        fs::create_dir_all(out.join(name))?;
    }
    for s in &ds.samples {
        let &[h, w, c] = s.image.shape() else {
            return Err(Error::shape(format!(
                "sample '{}' is not an [H, W, C] image",
                s.source_path
            )));
        };
        if c != 3 {
            return Err(Error::shape(format!(
                "sample '{}' has {c} channels, PNG export expects 3",
                s.source_path
            )));
        }
        let pixels: Vec<u8> = s.image.data().iter().map(|&v| quantize_f32(v)).collect();
        let img = image::RgbImage::from_raw(w as u32, h as u32, pixels)
            .expect("buffer length matches h*w*3 by construction");
        let path = out
            .join(&ds.class_names[s.label_id])
            .join(export_name(&s.source_path, s.origin));
        img.save(&path)
            .map_err(|e| Error::ingest(path.clone(), e.to_string()))?;
    }
    Ok(ds.len())
}
