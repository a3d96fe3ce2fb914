use aloe_core::data::{generate, read_csv, split, write_csv, DatasetKind, DatasetSpec, LabelMode};
use proptest::prelude::*;

fn blobs(n: usize, seed: u64) -> DatasetSpec {
    DatasetSpec {
        kind: DatasetKind::GaussBlobs {
            centers: vec![vec![0.3, 0.3], vec![0.7, 0.3], vec![0.5, 0.7]],
            stds: vec![vec![0.05, 0.05]; 3],
        },
        n,
        seed,
        label_mode: LabelMode::Classes,
    }
}

fn norm_from(p: &[f64], c: &[f64]) -> f64 {
    p.iter()
        .zip(c)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

proptest! {
    #[test]
    fn blob_classes_are_balanced_and_in_box(n in 0usize..300, seed in any::<u64>()) {
        let set = generate(&blobs(n, seed)).unwrap();
        prop_assert_eq!(set.len(), n);
        let counts: Vec<usize> = (0..3).map(|k| set.labels.iter().filter(|&&l| l == k).count()).collect();
        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1, "{:?}", counts);
        prop_assert!(set.points.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn ring_points_lie_in_the_shell(inner in 0.0f64..0.2, width in 0.01f64..0.2, seed in any::<u64>()) {
        let c = vec![0.5, 0.5];
        let spec = DatasetSpec {
            kind: DatasetKind::Ring { center: c.clone(), inner, outer: inner + width },
            n: 100,
            seed,
            label_mode: LabelMode::Unlabeled,
        };
        let set = generate(&spec).unwrap();
        for p in &set.points {
            let r = norm_from(p, &c);
            prop_assert!(r >= inner - 1e-12 && r <= inner + width + 1e-12);
        }
        prop_assert!(set.labels.iter().all(|&l| l == -1));
    }

    #[test]
    fn box_points_lie_in_the_box(seed in any::<u64>()) {
        let spec = DatasetSpec {
            kind: DatasetKind::UniformBox { lo: vec![0.2, 0.6], hi: vec![0.3, 0.9] },
            n: 100,
            seed,
            label_mode: LabelMode::Unlabeled,
        };
        for p in generate(&spec).unwrap().points {
            prop_assert!((0.2..=0.3).contains(&p[0]) && (0.6..=0.9).contains(&p[1]));
        }
    }

    #[test]
    fn split_partitions_the_set(n in 1usize..200, seed in any::<u64>()) {
        let set = generate(&blobs(n, 1)).unwrap();
        let parts = split(&set, &[0.6, 0.2, 0.2], seed).unwrap();
        prop_assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), n);
        let mut all: Vec<Vec<f64>> = parts.iter().flat_map(|p| p.points.clone()).collect();
        let mut orig = set.points.clone();
        let key = |a: &Vec<f64>, b: &Vec<f64>| a.partial_cmp(b).unwrap();
        all.sort_by(key);
        orig.sort_by(key);
        prop_assert_eq!(all, orig);
    }

    #[test]
    fn csv_roundtrip_is_exact(n in 0usize..50, seed in any::<u64>()) {
        let set = generate(&blobs(n, seed)).unwrap();
        let (back, attacked) = read_csv(&write_csv(&set)).unwrap();
        prop_assert_eq!(back.points, set.points);
        prop_assert_eq!(back.labels, set.labels);
        prop_assert!(attacked.is_none());
    }
}

#[test]
fn same_seed_same_data() {
    assert_eq!(
        generate(&blobs(100, 7)).unwrap(),
        generate(&blobs(100, 7)).unwrap()
    );
    assert_ne!(
        generate(&blobs(100, 7)).unwrap().points,
        generate(&blobs(100, 8)).unwrap().points
    );
}
