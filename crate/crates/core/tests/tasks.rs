use pgnn_core::tasks::idx::{encode_images, encode_labels, write_file, IdxImages};
use pgnn_core::tasks::{gen_aligned_regression, load_fmnist, load_fmnist_idx, Targets};
use pgnn_core::Error;

fn golden() -> (IdxImages, Vec<u8>) {
    let pixels: Vec<u8> = (0..2 * 28 * 28).map(|i| ((i * 37 + 11) % 256) as u8).collect();
    (
        IdxImages {
            count: 2,
            rows: 28,
            cols: 28,
            pixels,
        },
        vec![3, 9],
    )
}

#[test]
fn golden_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = golden();
    let ip = dir.path().join("img");
    let lp = dir.path().join("lab");
    write_file(&ip, &encode_images(&img)).unwrap();
    write_file(&lp, &encode_labels(&lab)).unwrap();
    let split = load_fmnist_idx::<f64>(&ip, &lp).unwrap();
    assert_eq!(split.inputs.shape(), (784, 2));
    for j in 0..2 {
        for i in 0..784 {
            assert_eq!(split.inputs[(i, j)], f64::from(img.pixels[j * 784 + i]) / 255.0);
        }
    }
    assert!(split.inputs.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(split.targets, Targets::Classes { labels: vec![3, 9], num_classes: 10 });
}

#[test]
fn count_mismatch_and_missing_files_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = golden();
    let ip = dir.path().join("img");
    let lp = dir.path().join("lab");
    write_file(&ip, &encode_images(&img)).unwrap();
    write_file(&lp, &encode_labels(&[1, 2, 3])).unwrap();
    assert!(matches!(load_fmnist_idx::<f64>(&ip, &lp), Err(Error::Parse { .. })));
    assert!(matches!(load_fmnist_idx::<f64>(&dir.path().join("nope"), &lp), Err(Error::Io { .. })));
}

#[test]
fn directory_loader_holds_out_validation_tail() {
    let dir = tempfile::tempdir().unwrap();
    let n = 12;
    let img = IdxImages {
        count: n,
        rows: 2,
        cols: 2,
        pixels: (0..n * 4).map(|i| i as u8).collect(),
    };
    let lab: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    for (i, l) in [("train-images-idx3-ubyte", "train-labels-idx1-ubyte"), ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")] {
        write_file(&dir.path().join(i), &encode_images(&img)).unwrap();
        write_file(&dir.path().join(l), &encode_labels(&lab)).unwrap();
    }
    let ds = load_fmnist::<f64>(dir.path()).unwrap();
    assert_eq!(ds.train.len() + ds.val.as_ref().unwrap().len(), n);
    assert_eq!(ds.test.len(), n);
    // the held-out samples are the last ones of the training file
    let v = ds.val.unwrap();
    assert_eq!(v.inputs[(0, v.len() - 1)], f64::from(img.pixels[(n - 1) * 4]) / 255.0);
}

#[test]
fn identity_permutation_gives_identical_datasets() {
    // d = 1 admits only the identity permutation
    let a = gen_aligned_regression::<f64>(1, 1, false, 50, 5, 3).unwrap();
    let b = gen_aligned_regression::<f64>(1, 1, true, 50, 5, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn target_ignores_non_signal_coordinates() {
    let ds = gen_aligned_regression::<f64>(10, 3, true, 100, 0, 8).unwrap();
    let coords = ds.signal_coords.clone().unwrap();
    let Targets::Regression(y) = &ds.train.targets else { panic!() };
    // zeroing the other coordinates leaves exactly the aligned signal block
    let mut x = ds.train.inputs.clone();
    for i in 0..10 {
        if !coords.contains(&i) {
            x.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let aligned = gen_aligned_regression::<f64>(10, 3, false, 100, 0, 8).unwrap();
    let Targets::Regression(ya) = &aligned.train.targets else { panic!() };
    assert_eq!(y, ya);
    for (i, &c) in coords.iter().enumerate() {
        assert_eq!(x.row(c), aligned.train.inputs.row(i));
    }
}
