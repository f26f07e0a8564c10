#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pgnn_core::rng::{index, seeded};
use pgnn_core::tasks::idx::{encode_images, encode_labels, write_file, IdxImages};

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn random_set(count: usize, side: usize, seed: u64) -> (IdxImages, Vec<u8>) {
    let mut rng = seeded(seed);
    let labels: Vec<u8> = (0..count).map(|_| index(&mut rng, 10) as u8).collect();
    // class-dependent brightness so the task is learnable
    let pixels = (0..count * side * side)
        .map(|i| {
            let l = labels[i / (side * side)] as usize;
            ((l * 20 + index(&mut rng, 60)) % 256) as u8
        })
        .collect();
    (
        IdxImages {
            count,
            rows: side,
            cols: side,
            pixels,
        },
        labels,
    )
}

/// Writes a small random dataset under the four standard FMNIST file names.
pub fn write_tiny_fmnist(dir: &Path, train: usize, test: usize, side: usize) {
    for (prefix, count, seed) in [("train", train, 1), ("t10k", test, 2)] {
        let (img, lab) = random_set(count, side, seed);
        write_file(&dir.join(format!("{prefix}-images-idx3-ubyte")), &encode_images(&img)).unwrap();
        write_file(&dir.join(format!("{prefix}-labels-idx1-ubyte")), &encode_labels(&lab)).unwrap();
    }
}
