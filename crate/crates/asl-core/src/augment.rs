//! Offline dataset augmentation: gaussian noise and three fixed rotations
//! applied to disjoint random subsets of the data.
//!
//! A plan selects floor(fraction * n) samples without replacement,
//! partitions them into four near-equal groups, and appends one transformed
//! copy per selected sample. Output order is canonical: all originals in
//! input order, then the four groups in operation order, each sorted by
//! source index, so results are identical no matter how the per-image work
//! is scheduled.

use crate::data::{Dataset, Origin, Sample};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{gaussian, Tensor};

/// The four augmentation operations, in the order groups are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentOp {
    Noise,
    Rotate90,
    Rotate30,
    RotateNeg60,
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 4] = [
        AugmentOp::Noise,
        AugmentOp::Rotate90,
        AugmentOp::Rotate30,
        AugmentOp::RotateNeg60,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AugmentOp::Noise => "noise",
            AugmentOp::Rotate90 => "rotate90",
            AugmentOp::Rotate30 => "rotate30",
            AugmentOp::RotateNeg60 => "rotate-60",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AugmentPlan {
    /// share of the dataset selected for augmentation
    pub fraction: f64,
    /// noise standard deviation on the [0,1] intensity scale
    pub noise_sigma: f64,
    /// value for rotation samples that fall outside the source image
    pub fill: f64,
    pub seed: u64,
}

impl Default for AugmentPlan {
    fn default() -> Self {
        AugmentPlan {
            fraction: 0.25,
            noise_sigma: 0.04,
            fill: 0.0,
            seed: 0,
        }
    }
}

impl AugmentPlan {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::param(format!(
                "augment fraction {} outside [0, 1]",
                self.fraction
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::param(format!(
                "noise sigma {} is negative",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Size of a dataset after augmentation: n plus floor(fraction * n).
pub fn augmented_len(n: usize, fraction: f64) -> usize {
    n + (fraction * n as f64).floor() as usize
}

/// Additive pixel noise, clipped back to the [0,1] intensity range. A
/// sigma of zero returns the input exactly.
pub fn gaussian_noise_image<T: Scalar>(
    img: &Tensor<T>,
    sigma: f64,
    rng: &mut Rng,
) -> Result<Tensor<T>> {
    let noise = gaussian::<T>(rng, T::zero(), T::from_f64(sigma), img.shape())?;
    img.add(&noise)?.clip(T::zero(), T::one())
}

/// Rotation counterclockwise about the image center, canvas unchanged.
/// 90 degrees on a square image is an exact index permutation; 30 and -60
/// resample by inverse mapping with bilinear interpolation, taking `fill`
/// outside the source. Only these three angles are accepted.
pub fn rotate_image<T: Scalar>(img: &Tensor<T>, degrees: i32, fill: T) -> Result<Tensor<T>> {
    let &[h, w, _] = img.shape() else {
        return Err(Error::shape(format!(
            "rotate input must be [H, W, C], got {:?}",
            img.shape()
        )));
    };
    match degrees {
        90 if h == w => Ok(rotate90_square(img)),
        90 | 30 | -60 => Ok(rotate_any(img, degrees as f64, fill)),
        other => Err(Error::param(format!(
            "unsupported rotation {other} degrees (expected 90, 30, or -60)"
        ))),
    }
}

/// out[i][j] = in[j][N-1-i]: the column farthest right becomes the top row.
fn rotate90_square<T: Scalar>(img: &Tensor<T>) -> Tensor<T> {
    let &[n, _, c] = img.shape() else { unreachable!() };
    Tensor::from_fn(img.shape(), |flat| {
        let ch = flat % c;
        let j = (flat / c) % n;
        let i = flat / (c * n);
        img.at(&[j, n - 1 - i, ch])
    })
}

/// Inverse mapping: each output pixel pulls from the source location that
/// rotating by `degrees` would move onto it.
fn rotate_any<T: Scalar>(img: &Tensor<T>, degrees: f64, fill: T) -> Tensor<T> {
    let &[h, w, c] = img.shape() else { unreachable!() };
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cr = (h as f64 - 1.0) / 2.0;
    let cc = (w as f64 - 1.0) / 2.0;
    let d = img.data();
    Tensor::from_fn(img.shape(), |flat| {
        let ch = flat % c;
        let j = (flat / c) % w;
        let i = flat / (c * w);
        let u = i as f64 - cr;
        let v = j as f64 - cc;
        let sr = u * cos + v * sin + cr;
        let sc = -u * sin + v * cos + cc;
        if sr < 0.0 || sr > (h - 1) as f64 || sc < 0.0 || sc > (w - 1) as f64 {
            return fill;
        }
        let y0 = sr.floor() as usize;
        let x0 = sc.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let x1 = (x0 + 1).min(w - 1);
        let (ty, tx) = (sr - y0 as f64, sc - x0 as f64);
        let p = |yy: usize, xx: usize| d[(yy * w + xx) * c + ch].to_f64();
        let top = p(y0, x0) + tx * (p(y0, x1) - p(y0, x0));
        let bot = p(y1, x0) + tx * (p(y1, x1) - p(y1, x0));
        T::from_f64(top + ty * (bot - top))
    })
}

fn apply_op(
    op: AugmentOp,
    sample: &Sample,
    plan: &AugmentPlan,
    source_index: usize,
    rng: &Rng,
) -> Result<Tensor<f32>> {
    match op {
        AugmentOp::Noise => gaussian_noise_image(
            &sample.image,
            plan.noise_sigma,
            &mut rng.fork(&format!("augment/noise/{source_index}")),
        ),
        AugmentOp::Rotate90 => rotate_image(&sample.image, 90, plan.fill as f32),
        AugmentOp::Rotate30 => rotate_image(&sample.image, 30, plan.fill as f32),
        AugmentOp::RotateNeg60 => rotate_image(&sample.image, -60, plan.fill as f32),
    }
}

/// Append transformed copies of a disjoint random selection, growing the
/// dataset to exactly `augmented_len(n, fraction)` samples.
pub fn augment_dataset(ds: &Dataset, plan: &AugmentPlan) -> Result<Dataset> {
    plan.validate()?;
    if ds.is_empty() {
        return Err(Error::param("cannot augment an empty dataset"));
    }
    let n = ds.len();
    let m = (plan.fraction * n as f64).floor() as usize;
    let rng = Rng::new(plan.seed);

    // selection without replacement, then four near-equal disjoint groups
    let mut order: Vec<usize> = (0..n).collect();
    rng.fork("augment/select").shuffle(&mut order);
    let ops = AugmentOp::ALL.len();
    let (base, extra) = (m / ops, m % ops);
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(ops);
    let mut cursor = 0;
    for k in 0..ops {
        let size = base + usize::from(k < extra);
        let mut group = order[cursor..cursor + size].to_vec();
        group.sort_unstable();
        groups.push(group);
        cursor += size;
    }

    let mut samples = ds.samples.clone();
    samples.reserve(m);
    for (op, group) in AugmentOp::ALL.into_iter().zip(&groups) {
        for &idx in group {
            let src = &ds.samples[idx];
            samples.push(Sample {
                image: apply_op(op, src, plan, idx, &rng)?,
                label_id: src.label_id,
                source_path: src.source_path.clone(),
                origin: Origin::Augmented(op),
            });
        }
    }
    Dataset::new(samples, ds.class_names.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn tiny_dataset(n: usize, classes: usize) -> Dataset {
        let names = (0..classes).map(|i| format!("c{i}")).collect();
        let samples = (0..n)
            .map(|i| Sample {
                image: Tensor::from_fn(&[4, 4, 3], |p| {
                    ((i * 48 + p) % 97) as f32 / 96.0
                }),
                label_id: i % classes,
                source_path: format!("mem://{i}"),
                origin: Origin::Original,
            })
            .collect();
        Dataset::new(samples, names).unwrap()
    }

    #[test]
    fn zero_sigma_noise_is_the_identity() {
        let img = Tensor::from_fn(&[6, 5, 3], |i| (i % 11) as f32 / 10.0);
        let out = gaussian_noise_image(&img, 0.0, &mut Rng::new(1)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn noise_moments_match_sigma_with_negligible_clipping() {
        let img = Tensor::full(&[1000, 1000, 1], 0.5f32);
        let out = gaussian_noise_image(&img, 0.04, &mut Rng::new(2)).unwrap();
        let n = out.len() as f64;
        let deltas: Vec<f64> = out
            .data()
            .iter()
            .zip(img.data())
            .map(|(&o, &i)| (o - i) as f64)
            .collect();
        let mean = deltas.iter().sum::<f64>() / n;
        let var = deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 5e-4, "mean {mean}");
        assert!((var.sqrt() - 0.04).abs() < 0.04 * 0.02, "std {}", var.sqrt());
        // 0.5 is 12.5 sigmas from either bound: nothing clips
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn noise_respects_the_intensity_bounds() {
        let white = Tensor::full(&[100, 100, 3], 1.0f32);
        let out = gaussian_noise_image(&white, 0.1, &mut Rng::new(3)).unwrap();
        assert!(out.data().iter().all(|&v| v <= 1.0));
        let black = Tensor::full(&[100, 100, 3], 0.0f32);
        let out = gaussian_noise_image(&black, 0.1, &mut Rng::new(4)).unwrap();
        assert!(out.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn quarter_turn_hand_value_and_period_four() {
        let img = Tensor::new(&[2, 2, 1], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let once = rotate_image(&img, 90, 0.0).unwrap();
        assert_eq!(once.data(), &[2.0, 4.0, 1.0, 3.0]);
        let mut four = img.clone();
        for _ in 0..4 {
            four = rotate_image(&four, 90, 0.0).unwrap();
        }
        assert_eq!(four, img);
    }

    #[test]
    fn constant_images_are_rotation_invariant_when_fill_matches() {
        let img = Tensor::full(&[9, 9, 2], 0.41f32);
        for deg in [90, 30, -60] {
            let out = rotate_image(&img, deg, 0.41).unwrap();
            assert_eq!(out, img, "{deg} degrees");
        }
    }

    #[test]
    fn unsupported_angles_are_rejected() {
        let img = Tensor::full(&[4, 4, 1], 0.5f32);
        assert!(rotate_image(&img, 45, 0.0).is_err());
        assert!(rotate_image(&img, -90, 0.0).is_err());
    }

    #[test]
    fn rotating_forward_then_back_recovers_the_interior() {
        // smooth test pattern so resampling error stays interpolation-bound
        let side = 41usize;
        let img = Tensor::from_fn(&[side, side, 1], |i| {
            let x = (i % side) as f64;
            let y = (i / side) as f64;
            (0.5 + 0.4 * (x / 5.0).sin() * (y / 7.0).cos()) as f32
        });
        let there = rotate_any(&img, 30.0, 0.0f32);
        let back = rotate_any(&there, -30.0, 0.0f32);
        // pixels whose pre-images stay inside the inscribed disk never see
        // fill; the band outside it is excluded as the border
        let center = (side as f64 - 1.0) / 2.0;
        let keep_radius = center - 3.0;
        let mut total = 0.0f64;
        let mut count = 0usize;
        for i in 0..side {
            for j in 0..side {
                let r = ((i as f64 - center).powi(2) + (j as f64 - center).powi(2)).sqrt();
                if r <= keep_radius {
                    total += (back.at(&[i, j, 0]) - img.at(&[i, j, 0])).abs() as f64;
                    count += 1;
                }
            }
        }
        let mean_abs = total / count as f64;
        assert!(mean_abs < 0.02, "interior mean abs error {mean_abs}");
    }

    #[test]
    fn growth_arithmetic_matches_the_fraction_rule() {
        assert_eq!(augmented_len(400, 0.25), 500);
        assert_eq!(augmented_len(87_000, 0.25), 108_750);
        assert_eq!(augmented_len(10, 0.0), 10);
        assert_eq!(augmented_len(7, 0.25), 8);
        assert_eq!(augmented_len(3, 1.0), 6);
    }

    #[test]
    fn four_hundred_samples_become_five_hundred_in_disjoint_groups() {
        let ds = tiny_dataset(400, 8);
        let plan = AugmentPlan {
            seed: 9,
            ..AugmentPlan::default()
        };
        let out = augment_dataset(&ds, &plan).unwrap();
        assert_eq!(out.len(), 500);

        // originals first, untouched and in order
        for i in 0..400 {
            assert_eq!(out.samples[i].source_path, ds.samples[i].source_path);
            assert_eq!(out.samples[i].origin, Origin::Original);
        }
        // then one group of 25 per op, in op order, each ascending by source
        let mut all_sources: HashSet<String> = HashSet::new();
        for (g, op) in AugmentOp::ALL.iter().enumerate() {
            let group = &out.samples[400 + g * 25..400 + (g + 1) * 25];
            let mut last = None;
            for s in group {
                assert_eq!(s.origin, Origin::Augmented(*op));
                let src_idx: usize = s.source_path.strip_prefix("mem://").unwrap().parse().unwrap();
                assert_eq!(s.label_id, ds.samples[src_idx].label_id);
                assert!(last.is_none_or(|l| l < src_idx), "group {g} not ascending");
                last = Some(src_idx);
                assert!(all_sources.insert(s.source_path.clone()), "source reused");
            }
        }
        assert_eq!(all_sources.len(), 100);
    }

    #[test]
    fn fraction_zero_changes_nothing() {
        let ds = tiny_dataset(10, 2);
        let plan = AugmentPlan {
            fraction: 0.0,
            ..AugmentPlan::default()
        };
        let out = augment_dataset(&ds, &plan).unwrap();
        assert_eq!(out.len(), 10);
        for (a, b) in out.samples.iter().zip(&ds.samples) {
            assert_eq!(a.image, b.image);
            assert_eq!(a.origin, Origin::Original);
        }
    }

    #[test]
    fn same_plan_reproduces_identical_pixels() {
        let ds = tiny_dataset(40, 4);
        let plan = AugmentPlan {
            seed: 77,
            ..AugmentPlan::default()
        };
        let a = augment_dataset(&ds, &plan).unwrap();
        let b = augment_dataset(&ds, &plan).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.source_path, y.source_path);
        }
        let c = augment_dataset(
            &ds,
            &AugmentPlan {
                seed: 78,
                ..plan
            },
        )
        .unwrap();
        let paths = |d: &Dataset| -> Vec<String> {
            d.samples[40..].iter().map(|s| s.source_path.clone()).collect()
        };
        assert_ne!(paths(&a), paths(&c), "selection ignored the seed");
    }

    #[test]
    fn per_class_growth_stays_within_the_class_blind_bound() {
        let ds = tiny_dataset(97, 5);
        let before = ds.class_counts();
        let plan = AugmentPlan {
            seed: 13,
            ..AugmentPlan::default()
        };
        let out = augment_dataset(&ds, &plan).unwrap();
        let after = out.class_counts();
        for (c, (&b, &a)) in before.iter().zip(&after).enumerate() {
            let bound = (plan.fraction * b as f64).ceil() as usize + 4;
            assert!(a - b <= bound, "class {c} grew {} > {bound}", a - b);
        }
    }

    #[test]
    fn invalid_plans_and_empty_datasets_are_rejected() {
        let ds = tiny_dataset(4, 2);
        let bad_fraction = AugmentPlan {
            fraction: 1.5,
            ..AugmentPlan::default()
        };
        assert!(augment_dataset(&ds, &bad_fraction).is_err());
        let bad_sigma = AugmentPlan {
            noise_sigma: -0.1,
            ..AugmentPlan::default()
        };
        assert!(augment_dataset(&ds, &bad_sigma).is_err());
        let empty = Dataset::new(vec![], vec!["a".into(), "b".into()]).unwrap();
        assert!(augment_dataset(&empty, &AugmentPlan::default()).is_err());
    }
}
