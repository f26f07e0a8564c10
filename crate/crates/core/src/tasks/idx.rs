//! Big-endian IDX containers: images (magic 2051) and labels (magic 2049).

use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, WriteBytesExt};

use super::dataset::{Dataset, Split, Targets};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;
pub const NUM_CLASSES: usize = 10;
/// Training images held out (from the end) for validation diagnostics.
pub const FMNIST_VAL_HOLDOUT: usize = 5000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count × rows × cols` bytes, image-major.
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(BigEndian::read_u32)
        .ok_or_else(|| Error::parse(offset, "truncated header"))
}

fn expect_magic(bytes: &[u8], magic: u32) -> Result<()> {
    let got = read_u32(bytes, 0)?;
    if got != magic {
        return Err(Error::parse(0, format!("bad magic {got}, expected {magic}")));
    }
    Ok(())
}

fn expect_len(bytes: &[u8], header: usize, payload: usize) -> Result<()> {
    let want = header + payload;
    if bytes.len() < want {
        return Err(Error::parse(bytes.len(), format!("truncated payload: {} bytes, header declares {want}", bytes.len())));
    }
    if bytes.len() > want {
        return Err(Error::parse(want, format!("{} trailing bytes after declared payload", bytes.len() - want)));
    }
    Ok(())
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    expect_magic(bytes, IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    expect_len(bytes, 16, count * rows * cols)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    expect_magic(bytes, LABEL_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    expect_len(bytes, 8, count)?;
    let labels = bytes[8..].to_vec();
    if let Some(i) = labels.iter().position(|&l| usize::from(l) >= NUM_CLASSES) {
        return Err(Error::parse(8 + i, format!("label {} outside 0..{NUM_CLASSES}", labels[i])));
    }
    Ok(labels)
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGE_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.write_u32::<BigEndian>(v).expect("vec write");
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.write_u32::<BigEndian>(LABEL_MAGIC).expect("vec write");
    out.write_u32::<BigEndian>(labels.len() as u32).expect("vec write");
    out.extend_from_slice(labels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    fs::File::create(path).and_then(|mut f| f.write_all(bytes)).map_err(io)
}

/// Samples `range` of an image/label pair as a split (`pixels/255`, samples as columns).
fn to_split<T: Scalar>(images: &IdxImages, labels: &[u8], range: std::ops::Range<usize>) -> Result<Split<T>> {
    let d = images.rows * images.cols;
    let n = range.len();
    let mut x = DenseMatrix::zeros(d, n);
    {
        let data = x.as_mut_slice();
        for (j, s) in range.clone().enumerate() {
            let img = &images.pixels[s * d..(s + 1) * d];
            for (i, &p) in img.iter().enumerate() {
                data[i * n + j] = T::of(f64::from(p) / 255.0);
            }
        }
    }
    let labels = labels[range].iter().map(|&l| usize::from(l)).collect();
    Split::new(
        x,
        Targets::Classes {
            labels,
            num_classes: NUM_CLASSES,
        },
        None,
    )
}

fn load_pair(images_path: &Path, labels_path: &Path) -> Result<(IdxImages, Vec<u8>)> {
    let images = parse_images(&read_file(images_path)?)?;
    let labels = parse_labels(&read_file(labels_path)?)?;
    if images.count != labels.len() {
        return Err(Error::parse(
            4,
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    Ok((images, labels))
}

/// One IDX image/label pair as a single split.
pub fn load_fmnist_idx<T: Scalar>(images_path: &Path, labels_path: &Path) -> Result<Split<T>> {
    let (images, labels) = load_pair(images_path, labels_path)?;
    to_split(&images, &labels, 0..images.count)
}

/// The standard four files in `dir`: train minus the last
/// [`FMNIST_VAL_HOLDOUT`] images, those as validation, and the test set.
pub fn load_fmnist<T: Scalar>(dir: &Path) -> Result<Dataset<T>> {
    let (tr_img, tr_lab) = load_pair(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"))?;
    let (te_img, te_lab) = load_pair(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?;
    let holdout = FMNIST_VAL_HOLDOUT.min(tr_img.count / 2);
    let cut = tr_img.count - holdout;
    Ok(Dataset {
        train: to_split(&tr_img, &tr_lab, 0..cut)?,
        val: Some(to_split(&tr_img, &tr_lab, cut..tr_img.count)?),
        test: to_split(&te_img, &te_lab, 0..te_img.count)?,
        basis: None,
        readout: None,
        signal_coords: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_images() -> (IdxImages, Vec<u8>) {
        let pixels: Vec<u8> = (0..2 * 3 * 2).map(|i| (i * 23 % 256) as u8).collect();
        (
            IdxImages {
                count: 2,
                rows: 3,
                cols: 2,
                pixels,
            },
            vec![7, 0],
        )
    }

    #[test]
    fn round_trip_bytes() {
        let (img, lab) = two_images();
        assert_eq!(parse_images(&encode_images(&img)).unwrap(), img);
        assert_eq!(parse_labels(&encode_labels(&lab)).unwrap(), lab);
    }

    #[test]
    fn header_layout() {
        let (img, _) = two_images();
        let b = encode_images(&img);
        assert_eq!(&b[..4], &[0, 0, 0x08, 0x03]);
        assert_eq!(&b[4..8], &[0, 0, 0, 2]);
        assert_eq!(b.len(), 16 + 12);
    }

    #[test]
    fn corrupt_inputs_rejected_with_offsets() {
        let (img, lab) = two_images();
        let mut b = encode_images(&img);
        b[3] = 0x04;
        assert!(matches!(parse_images(&b), Err(Error::Parse { offset: 0, .. })));
        let b = encode_images(&img);
        assert!(matches!(parse_images(&b[..b.len() - 1]), Err(Error::Parse { offset: 27, .. })));
        assert!(matches!(parse_images(&b[..10]), Err(Error::Parse { offset: 8, .. })));
        let mut l = encode_labels(&lab);
        l[9] = 12;
        assert!(matches!(parse_labels(&l), Err(Error::Parse { offset: 9, .. })));
        let mut extra = encode_labels(&lab);
        extra.push(1);
        assert!(matches!(parse_labels(&extra), Err(Error::Parse { offset: 10, .. })));
    }
}
