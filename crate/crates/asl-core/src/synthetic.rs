//! Deterministic synthetic datasets of high-contrast geometric patterns.
//!
//! Eight pattern families (stripes in three orientations, disk, ring,
//! checkerboard, corner block, cross), each with a distinct color scheme
//! and a per-image deterministic jitter of phase, position, and scale.
//! Pixel values are pure functions of (class, image index, position), so
//! every call builds bit-identical data with no files and no RNG. Small
//! networks can memorize these quickly, which keeps end-to-end training
//! tests fast.

use crate::data::{Dataset, Origin, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAX_CLASSES: usize = 8;

/// foreground / background colors per class, chosen far apart
const COLORS: [([f32; 3], [f32; 3]); MAX_CLASSES] = [
    ([1.0, 0.9, 0.1], [0.05, 0.05, 0.2]),
    ([0.1, 0.9, 0.9], [0.25, 0.0, 0.1]),
    ([0.9, 0.2, 0.9], [0.0, 0.2, 0.0]),
    ([1.0, 0.4, 0.0], [0.05, 0.1, 0.3]),
    ([0.2, 1.0, 0.3], [0.2, 0.0, 0.25]),
    ([0.95, 0.95, 0.95], [0.15, 0.15, 0.0]),
    ([0.0, 0.5, 1.0], [0.3, 0.1, 0.0]),
    ([1.0, 0.1, 0.2], [0.0, 0.25, 0.2]),
];

/// 0 or 1: does (y, x) sit on the pattern's foreground for image `i`?
fn foreground(class: usize, i: usize, y: usize, x: usize, side: usize) -> bool {
    let n = side as isize;
    let (y, x) = (y as isize, x as isize);
    let i = i as isize;
    let center = (n - 1) / 2;
    // every family reads the image index through (i % k, i / k) pairs that
    // stay distinct for the first 16 indices, so no two images coincide
    match class {
        // stripes: horizontal, vertical, diagonal, with per-image phase
        // and a small period wobble
        0 => ((y + i / 5) / (4 + i % 5)) % 2 == 0,
        1 => ((x + i / 5) / (4 + i % 5)) % 2 == 0,
        2 => ((x + y + i / 5) / (5 + i % 5)) % 2 == 0,
        // filled disk, center jittered, radius wobbled
        3 => {
            let cy = center + (i % 5) - 2;
            let cx = center + ((i / 5) % 5) - 2;
            let r2 = (y - cy).pow(2) + (x - cx).pow(2);
            let radius = n / 4 + (i % 3);
            r2 <= radius * radius
        }
        // ring of fixed width
        4 => {
            let cy = center + (i % 3) - 1;
            let cx = center + ((i / 3) % 3) - 1;
            let r = (((y - cy).pow(2) + (x - cx).pow(2)) as f64).sqrt();
            let r0 = (n / 3 + (i % 4) - 1) as f64;
            (r - r0).abs() <= 2.5
        }
        // checkerboard with per-image cell size and diagonal shift
        5 => {
            let cell = 4 + (i % 4);
            ((x + i / 4) / cell + (y + i / 4) / cell + i) % 2 == 0
        }
        // solid block in one quadrant
        6 => {
            let q = i % 4;
            let top = q / 2 == 0;
            let left = q % 2 == 0;
            let m = 2 + i / 4;
            let in_y = if top { y >= m && y < n / 2 } else { y >= n / 2 && y < n - m };
            let in_x = if left { x >= m && x < n / 2 } else { x >= n / 2 && x < n - m };
            in_y && in_x
        }
        // axis-aligned cross through a jittered center
        7 => {
            let cy = center + (i % 5) - 2;
            let cx = center + ((i / 5) % 5) - 2;
            let arm = 2 + (i % 3);
            (y - cy).abs() <= arm || (x - cx).abs() <= arm
        }
        _ => unreachable!("class checked by the caller"),
    }
}

/// Build `classes` x `per_class` labeled pattern images of `side` x `side`
/// x 3 pixels. At most eight classes are available.
pub fn pattern_dataset(classes: usize, per_class: usize, side: usize) -> Result<Dataset> {
    if classes == 0 || classes > MAX_CLASSES {
        return Err(Error::param(format!(
            "pattern dataset supports 1..={MAX_CLASSES} classes, got {classes}"
        )));
    }
    if per_class == 0 || side < 8 {
        return Err(Error::param(
            "pattern dataset needs per_class >= 1 and side >= 8",
        ));
    }
    let mut samples = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        let (fg, bg) = COLORS[class];
        for i in 0..per_class {
            let image = Tensor::from_fn(&[side, side, 3], |flat| {
                let ch = flat % 3;
                let x = (flat / 3) % side;
                let y = flat / (3 * side);
                if foreground(class, i, y, x, side) {
                    fg[ch]
                } else {
                    bg[ch]
                }
            });
            samples.push(Sample {
                image,
                label_id: class,
                source_path: format!("synthetic://{class}/{i}"),
                origin: Origin::Original,
            });
        }
    }
    let class_names = (0..classes).map(|c| format!("pat{c}")).collect();
    Dataset::new(samples, class_names)
}

/// The 8-class x 16-image 50x50x3 set the end-to-end training checks
/// memorize.
pub fn overfit_fixture() -> Dataset {
    pattern_dataset(8, 16, 50).expect("fixed arguments are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_has_the_documented_shape() {
        let ds = overfit_fixture();
        assert_eq!(ds.len(), 128);
        assert_eq!(ds.num_classes(), 8);
        assert_eq!(ds.class_counts(), vec![16; 8]);
        for s in &ds.samples {
            assert_eq!(s.image.shape(), &[50, 50, 3]);
            assert!(s.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert!(ds.class_names.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let a = overfit_fixture();
        let b = overfit_fixture();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.image, y.image);
        }
    }

    #[test]
    fn images_are_pairwise_distinct() {
        let ds = pattern_dataset(8, 16, 50).unwrap();
        for a in 0..ds.len() {
            for b in a + 1..ds.len() {
                assert_ne!(
                    ds.samples[a].image.data(),
                    ds.samples[b].image.data(),
                    "samples {a} and {b} coincide"
                );
            }
        }
    }

    #[test]
    fn classes_differ_strongly_on_average() {
        // mean absolute pixel distance between any two classes' first
        // images is large, so the patterns are genuinely high-contrast
        let ds = pattern_dataset(8, 1, 50).unwrap();
        for a in 0..8 {
            for b in a + 1..8 {
                let d: f32 = ds.samples[a]
                    .image
                    .data()
                    .iter()
                    .zip(ds.samples[b].image.data())
                    .map(|(x, y)| (x - y).abs())
                    .sum::<f32>()
                    / ds.samples[a].image.len() as f32;
                assert!(d > 0.1, "classes {a} and {b} are too similar: {d}");
            }
        }
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert!(pattern_dataset(0, 4, 50).is_err());
        assert!(pattern_dataset(9, 4, 50).is_err());
        assert!(pattern_dataset(4, 0, 50).is_err());
        assert!(pattern_dataset(4, 4, 4).is_err());
    }
}
