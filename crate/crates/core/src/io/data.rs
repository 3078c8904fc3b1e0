use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::measures::TargetMeasure;
use crate::scalar::Scalar;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads a rectangular numeric CSV file. A first line with any
/// non-numeric cell is treated as a header. Column `label_col`, when given,
/// holds integer class labels and is removed from the data.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, label_col: Option<usize>) -> Result<TargetMeasure<T>> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, label_col)
}

pub fn parse_csv<T: Scalar>(text: &str, label_col: Option<usize>) -> Result<TargetMeasure<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut width = None;
    let mut values: Vec<T> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let mut rows = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(idx + 1, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if idx == 0 && record.iter().any(|c| c.parse::<f64>().is_err()) {
            width = Some(record.len());
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} fields, found {}", record.len()),
                })
            }
            _ => width = Some(record.len()),
        }
        if let Some(c) = label_col {
            if c >= record.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("label column {c} out of range for {} fields", record.len()),
                });
            }
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric cell '{cell}' in column {col}"),
            })?;
            if Some(col) == label_col {
                if v.fract() != 0.0 || !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("label '{cell}' is not an integer"),
                    });
                }
                labels.push(v as i64);
            } else {
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("non-finite cell '{cell}' in column {col}"),
                    });
                }
                values.push(T::lit(v));
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let cols = values.len() / rows;
    if cols == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "no data columns besides the label".into(),
        });
    }
    let data = Array2::from_shape_vec((rows, cols), values).expect("rectangular rows");
    TargetMeasure::empirical(data, label_col.map(|_| labels))
}

/// Centers each column and scales it to unit sample (`n − 1`) standard
/// deviation. Constant columns become zero.
pub fn standardize<T: Scalar>(data: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let m = data.nrows();
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    let mf = T::from_usize_lossy(m);
    let mut out = data.to_owned();
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        let mean = col.iter().copied().sum::<T>() / mf;
        col.mapv_inplace(|v| v - mean);
        let var = col.iter().map(|v| *v * *v).sum::<T>() / (mf - T::one());
        let sd = var.sqrt();
        if sd == T::zero() {
            log::warn!("column {j} is constant; standardized to zero");
            col.fill(T::zero());
        } else {
            col.mapv_inplace(|v| v / sd);
        }
    }
    Ok(out)
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

/// Parses IDX image and label buffers into rows of `pixel / 255`.
pub fn parse_idx<T: Scalar>(images: &[u8], labels: &[u8]) -> Result<TargetMeasure<T>> {
    let magic = be_u32(images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("images: bad magic number {magic:#010x}")));
    }
    let count = be_u32(images, 4, "images")? as usize;
    let rows = be_u32(images, 8, "images")? as usize;
    let cols = be_u32(images, 12, "images")? as usize;
    let pixels = rows * cols;
    let body = &images[16..];
    if body.len() != count * pixels {
        return Err(Error::Format(format!(
            "images: expected {} pixel bytes, found {}",
            count * pixels,
            body.len()
        )));
    }

    let magic = be_u32(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("labels: bad magic number {magic:#010x}")));
    }
    let label_count = be_u32(labels, 4, "labels")? as usize;
    let label_body = &labels[8..];
    if label_body.len() != label_count {
        return Err(Error::Format(format!(
            "labels: expected {label_count} bytes, found {}",
            label_body.len()
        )));
    }
    if label_count != count {
        return Err(Error::Format(format!("{count} images but {label_count} labels")));
    }
    let scale = T::one() / T::lit(255.0);
    let data = Array2::from_shape_vec(
        (count, pixels),
        body.iter().map(|&b| T::lit(b as f64) * scale).collect(),
    )
    .expect("image shape");
    TargetMeasure::empirical(data, Some(label_body.iter().map(|&b| b as i64).collect()))
}

pub fn load_idx<T: Scalar>(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<TargetMeasure<T>> {
    parse_idx(&fs::read(images_path)?, &fs::read(labels_path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn data(t: &TargetMeasure<f64>) -> &Array2<f64> {
        match t {
            TargetMeasure::Empirical { data, .. } => data,
            _ => unreachable!(),
        }
    }

    #[test]
    fn numeric_csv_without_header() {
        let t = parse_csv::<f64>("1,2\n3,4\n5,6\n", None).unwrap();
        assert_eq!(data(&t), &array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert!(t.labels().is_none());
    }

    #[test]
    fn header_and_labels() {
        let t = parse_csv::<f64>("class,x,y\n1,0.5,2\n3,1.5,-1\n", Some(0)).unwrap();
        assert_eq!(data(&t), &array![[0.5, 2.0], [1.5, -1.0]]);
        assert_eq!(t.labels().unwrap(), &[1, 3]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(matches!(parse_csv::<f64>("", None), Err(Error::Parse { .. })));
        match parse_csv::<f64>("1,2\n3\n", None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_csv::<f64>("a,b\n1,2\n3,x\n", None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn standardize_two_values() {
        let s = standardize(array![[0.0, 5.0], [2.0, 5.0]].view()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s[[0, 0]] + h).abs() < 1e-15 && (s[[1, 0]] - h).abs() < 1e-15);
        assert_eq!(s.column(1).to_vec(), vec![0.0, 0.0]);
        let again = standardize(s.view()).unwrap();
        assert!(again.iter().zip(s.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    fn idx_images(count: u32, rows: u32, cols: u32, fill: u8) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGES_MAGIC, count, rows, cols] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend(std::iter::repeat_n(fill, (count * rows * cols) as usize));
        v
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn idx_single_white_image() {
        let t = parse_idx::<f64>(&idx_images(1, 28, 28, 255), &idx_labels(&[7])).unwrap();
        assert_eq!(data(&t).dim(), (1, 784));
        assert!(data(&t).iter().all(|v| *v == 1.0));
        assert_eq!(t.labels().unwrap(), &[7]);
    }

    #[test]
    fn idx_errors() {
        assert!(parse_idx::<f64>(&idx_images(2, 2, 2, 0), &idx_labels(&[1])).is_err());
        let mut bad = idx_images(1, 2, 2, 0);
        bad[3] = 0x04;
        assert!(matches!(
            parse_idx::<f64>(&bad, &idx_labels(&[1])),
            Err(Error::Format(_))
        ));
        let mut short = idx_images(1, 2, 2, 0);
        short.pop();
        assert!(parse_idx::<f64>(&short, &idx_labels(&[1])).is_err());
    }
}
