//! MNIST in the IDX format, fed to sequence models one pixel per step.

use std::path::Path;

use crate::error::{format_err, Error, Result};
use crate::seed::{derive, Stream};
use crate::tasks::{Targets, TaskBatch};
use crate::unitary::FixedPermutation;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_CLASSES: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MnistSet {
    pub rows: usize,
    pub cols: usize,
    /// `count × rows·cols` pixels, one image after another.
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
    /// Pixel permutation applied to every image, if any.
    pub permutation: Option<Vec<usize>>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'static str,
}

impl<'a> Reader<'a> {
    fn u32(&mut self, field: &str) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| {
            format_err(format!("{}.{field}", self.file), "file truncated in header")
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn payload(&mut self, len: usize) -> Result<&'a [u8]> {
        let rest = &self.bytes[self.pos..];
        match rest.len().cmp(&len) {
            std::cmp::Ordering::Less => Err(format_err(
                format!("{}.data", self.file),
                format!(
                    "file truncated: expected {len} payload bytes, found {}",
                    rest.len()
                ),
            )),
            std::cmp::Ordering::Greater => Err(format_err(
                format!("{}.data", self.file),
                format!("{} trailing bytes after payload", rest.len() - len),
            )),
            std::cmp::Ordering::Equal => Ok(rest),
        }
    }
}

/// Parses an IDX3 image file: magic, count, rows, cols, then pixels.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut r = Reader {
        bytes,
        pos: 0,
        file: "images",
    };
    let magic = r.u32("magic")?;
    if magic != IMAGES_MAGIC {
        return Err(format_err(
            "images.magic",
            format!("expected {IMAGES_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let count = r.u32("count")? as usize;
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    let data = r.payload(count * rows * cols)?;
    Ok((count, rows, cols, data.to_vec()))
}

/// Parses an IDX1 label file: magic, count, then labels.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        file: "labels",
    };
    let magic = r.u32("magic")?;
    if magic != LABELS_MAGIC {
        return Err(format_err(
            "labels.magic",
            format!("expected {LABELS_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let count = r.u32("count")? as usize;
    let data = r.payload(count)?;
    if let Some(bad) = data.iter().find(|&&l| l as usize >= MNIST_CLASSES) {
        return Err(format_err(
            "labels.data",
            format!("label {bad} outside 0..10"),
        ));
    }
    Ok(data.to_vec())
}

pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<MnistSet> {
    let image_bytes = std::fs::read(images_path)?;
    let label_bytes = std::fs::read(labels_path)?;
    let (count, rows, cols, images) = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if labels.len() != count {
        return Err(format_err(
            "labels.count",
            format!("{} labels for {count} images", labels.len()),
        ));
    }
    Ok(MnistSet {
        rows,
        cols,
        images,
        labels,
        permutation: None,
    })
}

impl MnistSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let p = self.pixels();
        &self.images[i * p..(i + 1) * p]
    }

    /// First `n` examples.
    pub fn truncate(&self, n: usize) -> MnistSet {
        let n = n.min(self.len());
        MnistSet {
            rows: self.rows,
            cols: self.cols,
            images: self.images[..n * self.pixels()].to_vec(),
            labels: self.labels[..n].to_vec(),
            permutation: self.permutation.clone(),
        }
    }

    /// Pixel reading order: rows bottom to top, each row left to right.
    fn reading_order(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.rows)
            .rev()
            .flat_map(move |r| (0..self.cols).map(move |c| r * self.cols + c))
    }

    /// Sequence batch of the given examples: one pixel in `[0, 1]` per step.
    pub fn to_task_batch(&self, indices: &[usize]) -> TaskBatch {
        let order: Vec<usize> = self.reading_order().collect();
        let inputs = indices
            .iter()
            .map(|&i| {
                let img = self.image(i);
                order.iter().map(|&p| f64::from(img[p]) / 255.0).collect()
            })
            .collect();
        TaskBatch {
            steps: self.pixels(),
            n_in: 1,
            inputs,
            targets: Targets::FinalClass {
                classes: MNIST_CLASSES,
                labels: indices.iter().map(|&i| self.labels[i] as usize).collect(),
            },
        }
    }
}

/// Reindexes every image by `perm`: new pixel `j` is old pixel `perm[j]`.
pub fn permute_pixels_with(set: &MnistSet, perm: &FixedPermutation) -> Result<MnistSet> {
    let p = set.pixels();
    crate::error::check_len("permute_pixels", p, perm.len())?;
    let mut images = vec![0u8; set.images.len()];
    for (dst, src) in images.chunks_exact_mut(p).zip(set.images.chunks_exact(p)) {
        for (d, &i) in dst.iter_mut().zip(&perm.indices) {
            *d = src[i];
        }
    }
    let composed = match &set.permutation {
        Some(prev) => perm.indices.iter().map(|&i| prev[i]).collect(),
        None => perm.indices.clone(),
    };
    Ok(MnistSet {
        rows: set.rows,
        cols: set.cols,
        images,
        labels: set.labels.clone(),
        permutation: Some(composed),
    })
}

/// One fixed pixel permutation drawn from `seed`, applied to all images.
pub fn permute_pixels(set: &MnistSet, seed: u64) -> MnistSet {
    let perm = FixedPermutation::from_seed(set.pixels(), derive(seed, Stream::PixelPermutation, 0));
    permute_pixels_with(set, &perm).expect("permutation sized to the image")
}

/// Writes `set` as a pair of IDX files.
pub fn write_mnist_idx(
    set: &MnistSet,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let mut img = Vec::with_capacity(16 + set.images.len());
    for v in [
        IMAGES_MAGIC,
        set.len() as u32,
        set.rows as u32,
        set.cols as u32,
    ] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(&set.images);
    let mut lab = Vec::with_capacity(8 + set.len());
    for v in [LABELS_MAGIC, set.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(&set.labels);
    std::fs::write(images_path, img).map_err(Error::from)?;
    std::fs::write(labels_path, lab).map_err(Error::from)
}
