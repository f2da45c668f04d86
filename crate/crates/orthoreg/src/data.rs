//! Dataset ingestion: IDX-format image/label files (the MNIST container),
//! global standardization, bilinear upsampling, and a plain-text weight
//! matrix exchange format.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, DEGENERATE_EPS};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// A labeled image set: one image per row, pixels scaled to [0, 1] on load
/// (standardization then shifts them).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Matrix,
    pub labels: Vec<u8>,
    pub image_side: usize,
}

impl Dataset {
    pub fn n_examples(&self) -> usize {
        self.images.rows()
    }

    /// Wraps a plain feature matrix (not images) as a dataset. `image_side`
    /// is 0, so image-only operations such as upsampling reject it.
    pub fn from_features(features: Matrix, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        Ok(Self {
            images: features,
            labels,
            image_side: 0,
        })
    }
}

/// Global mean/std fitted on a training set, applied to held-out data so the
/// test set is shifted by training statistics only.
#[derive(Debug, Clone, Copy)]
pub struct PixelStats {
    pub mean: f64,
    pub std: f64,
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Truncated {
            path: path.display().to_string(),
            expected: end as u64,
            found: bytes.len() as u64,
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads an IDX image file and its companion label file. All counts come
/// from the headers and are bounds-checked against the actual payload, so a
/// malformed header can never cause an out-of-range read.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = read_file(images_path)?;
    let magic = read_be_u32(&img_bytes, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: images_path.display().to_string(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = read_be_u32(&img_bytes, 4, images_path)? as u64;
    let height = read_be_u32(&img_bytes, 8, images_path)? as u64;
    let width = read_be_u32(&img_bytes, 12, images_path)? as u64;
    if height != width || height == 0 {
        return Err(Error::ShapeMismatch(format!(
            "expected square nonempty images, got {height}x{width}"
        )));
    }
    // u128 arithmetic: the product of three u32-range values cannot overflow,
    // so a hostile header cannot wrap the expected length around.
    let expected = 16u128 + count as u128 * height as u128 * width as u128;
    if (img_bytes.len() as u128) != expected {
        return Err(Error::Truncated {
            path: images_path.display().to_string(),
            expected: expected.min(u64::MAX as u128) as u64,
            found: img_bytes.len() as u64,
        });
    }

    let lbl_bytes = read_file(labels_path)?;
    let magic = read_be_u32(&lbl_bytes, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: labels_path.display().to_string(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let lbl_count = read_be_u32(&lbl_bytes, 4, labels_path)? as u64;
    let lbl_expected = 8u64 + lbl_count;
    if (lbl_bytes.len() as u64) != lbl_expected {
        return Err(Error::Truncated {
            path: labels_path.display().to_string(),
            expected: lbl_expected,
            found: lbl_bytes.len() as u64,
        });
    }
    if lbl_count != count {
        return Err(Error::CountMismatch {
            images: count as usize,
            labels: lbl_count as usize,
        });
    }
    if count == 0 {
        return Err(Error::ShapeMismatch("empty dataset".into()));
    }

    let labels: Vec<u8> = lbl_bytes[8..].to_vec();
    if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(Error::Parse {
            path: labels_path.display().to_string(),
            line: 0,
            message: format!("label {bad} at index {i} outside the digit range 0-9"),
        });
    }

    let pixels = count as usize * (height * width) as usize;
    let data: Vec<f64> = img_bytes[16..16 + pixels]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Ok(Dataset {
        images: Matrix::from_vec(count as usize, (height * width) as usize, data)?,
        labels,
        image_side: height as usize,
    })
}

/// Standardizes with a single scalar mean and std over every pixel of the
/// set, returning the fitted statistics for reuse on held-out data.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, PixelStats)> {
    let data = ds.images.data();
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= DEGENERATE_EPS {
        return Err(Error::InvalidConfig(
            "cannot standardize: pixel values are constant (zero std)".into(),
        ));
    }
    let stats = PixelStats { mean, std };
    Ok((apply_standardization(ds, stats)?, stats))
}

/// Applies previously fitted statistics (x − mean) / std to a dataset.
pub fn apply_standardization(ds: &Dataset, stats: PixelStats) -> Result<Dataset> {
    if stats.std <= DEGENERATE_EPS {
        return Err(Error::InvalidConfig(format!(
            "invalid std {} in standardization stats",
            stats.std
        )));
    }
    Ok(Dataset {
        images: ds.images.map(|v| (v - stats.mean) / stats.std),
        labels: ds.labels.clone(),
        image_side: ds.image_side,
    })
}

/// Bilinear upsampling of every image to `target_side` × `target_side`.
/// Corner-aligned sampling; interpolated values stay within the original
/// value range (no overshoot).
pub fn upsample(ds: &Dataset, target_side: usize) -> Result<Dataset> {
    let side = ds.image_side;
    if side == 0 {
        return Err(Error::InvalidConfig(
            "dataset has no image geometry to upsample".into(),
        ));
    }
    if target_side < side {
        return Err(Error::InvalidConfig(format!(
            "upsample target {target_side} is smaller than source {side}"
        )));
    }
    if target_side == side {
        return Ok(ds.clone());
    }
    let n = ds.n_examples();
    let mut out = Matrix::zeros(n, target_side * target_side)?;
    let scale = (side - 1) as f64 / (target_side - 1) as f64;
    for img in 0..n {
        let src = ds.images.row(img);
        let dst = out.row_mut(img);
        for ty in 0..target_side {
            let sy = ty as f64 * scale;
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(side - 1);
            let fy = sy - y0 as f64;
            for tx in 0..target_side {
                let sx = tx as f64 * scale;
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(side - 1);
                let fx = sx - x0 as f64;
                let top = src[y0 * side + x0] * (1.0 - fx) + src[y0 * side + x1] * fx;
                let bottom = src[y1 * side + x0] * (1.0 - fx) + src[y1 * side + x1] * fx;
                dst[ty * target_side + tx] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Ok(Dataset {
        images: out,
        labels: ds.labels.clone(),
        image_side: target_side,
    })
}

/// Writes a matrix as UTF-8 text: header line "rows cols", then one line per
/// row of space-separated decimals with 17 significant digits, which renders
/// f64 exactly recoverable.
pub fn write_weight_file(path: &Path, m: &Matrix) -> Result<()> {
    let mut text = String::new();
    text.push_str(&format!("{} {}\n", m.rows(), m.cols()));
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads the format written by [`write_weight_file`]. Errors carry 1-based
/// line numbers: line 1 is the header, row r lives on line r + 1.
pub fn read_weight_file(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };

    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected \"rows cols\" header".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(parse_err(
            1,
            format!("expected \"rows cols\" header, got {header:?}"),
        ));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| parse_err(1, format!("invalid row count {:?}", dims[0])))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| parse_err(1, format!("invalid column count {:?}", dims[1])))?;
    if rows == 0 || cols == 0 {
        return Err(parse_err(1, format!("degenerate shape {rows}x{cols}")));
    }

    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line_no = r + 2;
        let line = lines
            .next()
            .ok_or_else(|| parse_err(line_no, format!("missing row {} of {rows}", r + 1)))?;
        let mut count = 0;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(line_no, format!("invalid number {tok:?}")))?;
            data.push(v);
            count += 1;
        }
        if count != cols {
            return Err(parse_err(
                line_no,
                format!("expected {cols} values, found {count}"),
            ));
        }
    }
    for (extra, line) in lines.enumerate() {
        if !line.trim().is_empty() {
            return Err(parse_err(
                rows + 2 + extra,
                "unexpected content after final row".into(),
            ));
        }
    }
    Matrix::from_vec(rows, cols, data)
}
