//! Dataset ingestion: IDX image/label pairs and numeric CSV tables.

use std::fs;
use std::path::Path;

use crate::error::{GlError, Result};
use crate::tensor::SpatialSpectralTensor;

/// Which role a bundle plays in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Validation,
}

impl Split {
    pub fn tag(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Validation => "validation",
        }
    }
}

/// Sample payload of a bundle: image tensors or a flat feature table.
#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Images(Vec<SpatialSpectralTensor>),
    Tabular {
        /// Row-major `len x num_features`.
        features: Vec<f64>,
        num_features: usize,
    },
}

/// Ground truth attached to the samples.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(l) => l.len(),
            Labels::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A loaded dataset: uniform-geometry samples, their labels, and where they
/// came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub samples: Samples,
    pub labels: Labels,
    pub split: Split,
    pub provenance: String,
}

impl DatasetBundle {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The image batch, or a config error for tabular bundles.
    pub fn images(&self) -> Result<&[SpatialSpectralTensor]> {
        match &self.samples {
            Samples::Images(imgs) => Ok(imgs),
            Samples::Tabular { .. } => Err(GlError::Config(
                "this operation needs an image dataset, but the bundle is tabular".into(),
            )),
        }
    }

    /// Class labels, or a config error for regression bundles.
    pub fn class_labels(&self) -> Result<&[usize]> {
        match &self.labels {
            Labels::Classes(l) => Ok(l),
            Labels::Values(_) => Err(GlError::Config(
                "this operation needs class labels, but the bundle has regression targets".into(),
            )),
        }
    }
}

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

fn read_file(path: &str) -> Result<Vec<u8>> {
    fs::read(Path::new(path)).map_err(|source| GlError::Io {
        path: path.to_string(),
        source,
    })
}

fn be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(GlError::Truncated {
            path: path.to_string(),
            expected: end,
            found: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

fn center_pad(
    pixels: &[u8],
    h: usize,
    w: usize,
    target: (usize, usize),
) -> Result<SpatialSpectralTensor> {
    let (th, tw) = target;
    if th < h || tw < w {
        return Err(GlError::Config(format!(
            "cannot pad {h}x{w} images down to {th}x{tw}"
        )));
    }
    let top = (th - h) / 2;
    let left = (tw - w) / 2;
    let mut values = vec![0.0; th * tw];
    for r in 0..h {
        for c in 0..w {
            values[(r + top) * tw + (c + left)] = pixels[r * w + c] as f64 / 255.0;
        }
    }
    SpatialSpectralTensor::new(th, tw, 1, values)
}

/// Load an IDX image/label file pair. Pixels are scaled to [0, 1]; `pad_to`
/// zero-pads every image symmetrically to the given (height, width).
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    pad_to: Option<(usize, usize)>,
    split: Split,
) -> Result<DatasetBundle> {
    let images_path = &images_path.display().to_string();
    let labels_path = &labels_path.display().to_string();
    let img_bytes = read_file(images_path)?;
    let magic = be_u32(&img_bytes, 0, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(GlError::MagicMismatch {
            path: images_path.to_string(),
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(&img_bytes, 4, images_path)? as usize;
    let h = be_u32(&img_bytes, 8, images_path)? as usize;
    let w = be_u32(&img_bytes, 12, images_path)? as usize;
    let expected = 16 + count * h * w;
    if img_bytes.len() < expected {
        return Err(GlError::Truncated {
            path: images_path.to_string(),
            expected,
            found: img_bytes.len(),
        });
    }

    let lbl_bytes = read_file(labels_path)?;
    let magic = be_u32(&lbl_bytes, 0, labels_path)?;
    if magic != LABEL_MAGIC {
        return Err(GlError::MagicMismatch {
            path: labels_path.to_string(),
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let label_count = be_u32(&lbl_bytes, 4, labels_path)? as usize;
    let expected = 8 + label_count;
    if lbl_bytes.len() < expected {
        return Err(GlError::Truncated {
            path: labels_path.to_string(),
            expected,
            found: lbl_bytes.len(),
        });
    }
    if count != label_count {
        return Err(GlError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let target = pad_to.unwrap_or((h, w));
    let images: Vec<SpatialSpectralTensor> = (0..count)
        .map(|i| {
            let start = 16 + i * h * w;
            center_pad(&img_bytes[start..start + h * w], h, w, target)
        })
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = lbl_bytes[8..8 + count].iter().map(|&b| b as usize).collect();

    Ok(DatasetBundle {
        samples: Samples::Images(images),
        labels: Labels::Classes(labels),
        split,
        provenance: format!("{images_path} + {labels_path}"),
    })
}

/// Force the label interpretation of a CSV load instead of inferring it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Classes,
    Values,
}

/// Load a numeric CSV with a header row. The named column becomes the label;
/// all other columns become features in header order. Labels are classes
/// when every value is a non-negative integer, regression targets otherwise;
/// `force` overrides the inference.
pub fn load_tabular_csv(
    path: &Path,
    label_column: &str,
    force: Option<LabelKind>,
    split: Split,
) -> Result<DatasetBundle> {
    let path = &path.display().to_string();
    let text = String::from_utf8(read_file(path)?).map_err(|_| GlError::Tabular {
        path: path.to_string(),
        row: 1,
        message: "file is not valid UTF-8".into(),
    })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().filter(|(_, l)| !l.trim().is_empty()).ok_or_else(|| {
        GlError::Tabular {
            path: path.to_string(),
            row: 1,
            message: "missing header row".into(),
        }
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_at = columns.iter().position(|&c| c == label_column).ok_or_else(|| {
        GlError::Config(format!(
            "label column {label_column:?} not found; available columns: {}",
            columns.join(", ")
        ))
    })?;
    let num_features = columns.len() - 1;
    if num_features == 0 {
        return Err(GlError::Config(
            "the table has only the label column, no features".into(),
        ));
    }

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1; // 1-based file line number
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(GlError::Tabular {
                path: path.to_string(),
                row,
                message: format!(
                    "expected {} cells but found {}",
                    columns.len(),
                    cells.len()
                ),
            });
        }
        for (j, cell) in cells.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| GlError::Tabular {
                path: path.to_string(),
                row,
                message: format!("cell {:?} in column {:?} is not numeric", cell, columns[j]),
            })?;
            if j == label_at {
                raw_labels.push(value);
            } else {
                features.push(value);
            }
        }
    }
    if raw_labels.is_empty() {
        return Err(GlError::Tabular {
            path: path.to_string(),
            row: 2,
            message: "no data rows after the header".into(),
        });
    }

    let integral = raw_labels.iter().all(|&v| v >= 0.0 && v.fract() == 0.0);
    let as_classes = match force {
        Some(LabelKind::Classes) => true,
        Some(LabelKind::Values) => false,
        None => integral,
    };
    let labels = if as_classes {
        if !integral {
            return Err(GlError::Config(
                "class labels requested but the label column has non-integer or negative values"
                    .into(),
            ));
        }
        Labels::Classes(raw_labels.into_iter().map(|v| v as usize).collect())
    } else {
        Labels::Values(raw_labels)
    };

    Ok(DatasetBundle {
        samples: Samples::Tabular {
            features,
            num_features,
        },
        labels,
        split,
        provenance: path.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn idx_pair(
        dir: &std::path::Path,
        images: &[[u8; 4]],
        labels: &[u8],
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        let img_path = dir.join("img.idx");
        let lbl_path = dir.join("lbl.idx");
        let mut f = fs::File::create(&img_path).unwrap();
        f.write_all(&IMAGE_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(images.len() as u32).to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        for img in images {
            f.write_all(img).unwrap();
        }
        let mut f = fs::File::create(&lbl_path).unwrap();
        f.write_all(&LABEL_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
        (img_path, lbl_path)
    }

    #[test]
    fn idx_round_trip_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = idx_pair(dir.path(), &[[0, 51, 102, 255], [255, 0, 0, 0]], &[3, 7]);
        let bundle = load_idx(&img, &lbl, None, Split::Train).unwrap();
        assert_eq!(bundle.len(), 2);
        assert_eq!(bundle.split.tag(), "train");
        let images = bundle.images().unwrap();
        assert_eq!(images[0].shape(), (2, 2, 1));
        assert_eq!(images[0].values(), &[0.0, 0.2, 0.4, 1.0]);
        assert_eq!(bundle.class_labels().unwrap(), &[3, 7]);
    }

    #[test]
    fn idx_padding_centers_content() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = idx_pair(dir.path(), &[[255, 255, 255, 255]], &[1]);
        let bundle = load_idx(&img, &lbl, Some((4, 4)), Split::Test).unwrap();
        let t = &bundle.images().unwrap()[0];
        assert_eq!(t.shape(), (4, 4, 1));
        // the 2x2 content sits at rows 1..3, cols 1..3, surrounded by zeros
        for r in 0..4 {
            for c in 0..4 {
                let inside = (1..3).contains(&r) && (1..3).contains(&c);
                assert_eq!(t.get(r, c, 0), if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn idx_error_cases_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = idx_pair(dir.path(), &[[1, 2, 3, 4]], &[0]);
        // swapped paths: the label file's magic is wrong for images
        assert!(matches!(
            load_idx(&lbl, &img, None, Split::Train),
            Err(GlError::MagicMismatch { expected: 2051, .. })
        ));
        // truncate the image payload
        let bytes = fs::read(&img).unwrap();
        fs::write(&img, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(
            load_idx(&img, &lbl, None, Split::Train),
            Err(GlError::Truncated { .. })
        ));
        // count mismatch between files
        let (img, _) = idx_pair(dir.path(), &[[1, 2, 3, 4], [5, 6, 7, 8]], &[0]);
        let lbl2 = dir.path().join("one.idx");
        let mut f = fs::File::create(&lbl2).unwrap();
        f.write_all(&LABEL_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&1u32.to_be_bytes()).unwrap();
        f.write_all(&[9]).unwrap();
        assert!(matches!(
            load_idx(&img, &lbl2, None, Split::Train),
            Err(GlError::CountMismatch {
                images: 2,
                labels: 1
            })
        ));
        assert!(matches!(
            load_idx(Path::new("/nonexistent/file.idx"), &img, None, Split::Train),
            Err(GlError::Io { .. })
        ));
    }

    fn write_csv(dir: &std::path::Path, content: &str) -> std::path::PathBuf {
        let p = dir.join("t.csv");
        fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn csv_classification_and_features() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(dir.path(), "x,y,label\n1.0,2.0,0\n3.0,4.5,1\n");
        let b = load_tabular_csv(&p, "label", None, Split::Train).unwrap();
        let Samples::Tabular {
            features,
            num_features,
        } = &b.samples
        else {
            panic!("expected tabular samples");
        };
        assert_eq!(*num_features, 2);
        assert_eq!(features, &[1.0, 2.0, 3.0, 4.5]);
        assert_eq!(b.class_labels().unwrap(), &[0, 1]);
    }

    #[test]
    fn csv_fractional_labels_become_targets() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(dir.path(), "x,y\n1.0,0.5\n2.0,1.5\n");
        let b = load_tabular_csv(&p, "y", None, Split::Train).unwrap();
        assert_eq!(b.labels, Labels::Values(vec![0.5, 1.5]));
        // the override forces regression even for integral labels
        let p = write_csv(dir.path(), "x,y\n1.0,1\n2.0,2\n");
        let b = load_tabular_csv(&p, "y", Some(LabelKind::Values), Split::Train).unwrap();
        assert_eq!(b.labels, Labels::Values(vec![1.0, 2.0]));
    }

    #[test]
    fn csv_error_cases() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write_csv(dir.path(), "");
        assert!(matches!(
            load_tabular_csv(&empty, "y", None, Split::Train),
            Err(GlError::Tabular { row: 1, .. })
        ));
        let missing = write_csv(dir.path(), "a,b\n1,2\n");
        let err = load_tabular_csv(&missing, "label", None, Split::Train).unwrap_err();
        let GlError::Config(msg) = err else {
            panic!("expected a config error, got {err:?}");
        };
        assert!(msg.contains("a, b"), "must list available columns: {msg}");
        let ragged = write_csv(dir.path(), "a,b\n1,2\n3\n");
        assert!(matches!(
            load_tabular_csv(&ragged, "b", None, Split::Train),
            Err(GlError::Tabular { row: 3, .. })
        ));
        let word = write_csv(dir.path(), "a,b\n1,x\n");
        assert!(matches!(
            load_tabular_csv(&word, "b", None, Split::Train),
            Err(GlError::Tabular { row: 2, .. })
        ));
    }
}
