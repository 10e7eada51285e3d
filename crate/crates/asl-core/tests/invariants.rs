//! Property tests for the pure bookkeeping the rest of the engine leans
//! on. Kept to cheap functions; the numeric kernels have their own
//! randomized oracle comparisons next to the code.

use std::collections::HashMap;

use proptest::prelude::*;

use asl_core::augment::{augmented_len, rotate_image};
use asl_core::data::{split, Dataset, Origin, Sample, SplitRatios, SplitTag};
use asl_core::loss::{crossentropy_from_logits, softmax};
use asl_core::metrics::ConfusionMatrix;
use asl_core::rng::Rng;
use asl_core::tensor::Tensor;

/// A dataset of 1x1 images: split and manifest logic never look at pixels.
fn tiny_dataset(per_class: &[usize]) -> Dataset {
    let names: Vec<String> = (0..per_class.len()).map(|c| format!("c{c}")).collect();
    let samples = per_class
        .iter()
        .enumerate()
        .flat_map(|(label_id, &n)| {
            (0..n).map(move |i| Sample {
                image: Tensor::full(&[1, 1, 3], 0.0),
                label_id,
                source_path: format!("mem://{label_id}/{i}"),
                origin: Origin::Original,
            })
        })
        .collect();
    Dataset::new(samples, names).unwrap()
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(
        rows in 1usize..6,
        cols in 1usize..9,
        seed in any::<u64>(),
        lo in -30.0f64..0.0,
        span in 0.0f64..60.0,
    ) {
        let logits = asl_core::tensor::uniform::<f64>(
            &mut Rng::new(seed), lo, lo + span, &[rows, cols],
        ).unwrap();
        let p = softmax(&logits).unwrap();
        for row in p.data().chunks_exact(cols) {
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn crossentropy_is_nonnegative_and_matches_its_gradient_rows(
        rows in 1usize..5,
        cols in 2usize..7,
        seed in any::<u64>(),
    ) {
        let mut rng = Rng::new(seed);
        let logits = asl_core::tensor::uniform::<f64>(
            &mut rng, -10.0, 10.0, &[rows, cols],
        ).unwrap();
        let labels: Vec<usize> = (0..rows).map(|_| rng.next_index(cols)).collect();
        let (loss, grad) = crossentropy_from_logits(&logits, &labels).unwrap();
        prop_assert!(loss >= 0.0 && loss.is_finite());
        // gradient rows are (softmax - onehot) / N, so each sums to zero
        for row in grad.data().chunks_exact(cols) {
            prop_assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn growth_arithmetic(n in 0usize..1_000_000, fraction in 0.0f64..=1.0) {
        let grown = augmented_len(n, fraction);
        prop_assert!(grown >= n);
        prop_assert!(grown <= 2 * n.max(1));
        prop_assert_eq!(grown - n, (fraction * n as f64).floor() as usize);
    }

    #[test]
    fn shuffle_is_a_permutation(items in prop::collection::vec(any::<u32>(), 0..200), seed in any::<u64>()) {
        let mut shuffled = items.clone();
        Rng::new(seed).shuffle(&mut shuffled);
        let mut a = items;
        let mut b = shuffled;
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn four_quarter_turns_are_identity(side in 1usize..12, seed in any::<u64>()) {
        let img = asl_core::tensor::uniform::<f32>(
            &mut Rng::new(seed), 0.0, 1.0, &[side, side, 3],
        ).unwrap();
        let mut turned = img.clone();
        for _ in 0..4 {
            turned = rotate_image(&turned, 90, 0.0).unwrap();
        }
        prop_assert_eq!(turned, img);
    }

    #[test]
    fn split_partitions_every_class_by_the_ratios(
        per_class in prop::collection::vec(3usize..40, 1..6),
        seed in any::<u64>(),
    ) {
        let ds = tiny_dataset(&per_class);
        let manifest = split(&ds, SplitRatios::default(), &Rng::new(seed)).unwrap();
        prop_assert_eq!(manifest.rows.len(), ds.len());

        let mut counts: HashMap<(usize, SplitTag), usize> = HashMap::new();
        for (row, sample) in manifest.rows.iter().zip(&ds.samples) {
            // rows stay aligned with the dataset they were built from
            prop_assert_eq!(&row.path, &sample.source_path);
            prop_assert_eq!(row.label_id, sample.label_id);
            *counts.entry((row.label_id, row.split)).or_default() += 1;
        }
        for (label_id, &n) in per_class.iter().enumerate() {
            let of = |tag| counts.get(&(label_id, tag)).copied().unwrap_or(0);
            let val = (0.2 * n as f64).floor() as usize;
            let test = (0.2 * n as f64).floor() as usize;
            prop_assert_eq!(of(SplitTag::Val), val);
            prop_assert_eq!(of(SplitTag::Test), test);
            prop_assert_eq!(of(SplitTag::Train), n - val - test);
        }

        // the three index views cover the dataset without overlap
        let mut seen = vec![false; ds.len()];
        for tag in [SplitTag::Train, SplitTag::Val, SplitTag::Test] {
            for i in manifest.indices(tag) {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn accuracy_is_the_diagonal_share(counts in prop::collection::vec(0u64..50, 4..=4)) {
        let total: u64 = counts.iter().sum();
        prop_assume!(total > 0);
        let cm = ConfusionMatrix::from_counts(
            vec!["a".into(), "b".into()],
            counts.clone(),
        ).unwrap();
        let diagonal = counts[0] + counts[3];
        prop_assert_eq!(cm.accuracy().unwrap(), diagonal as f64 / total as f64);
    }
}
