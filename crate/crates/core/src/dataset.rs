//! Point datasets: CSV ingestion, min-max normalization, weak-supervision
//! subsets and sequential block splitting for stream evaluation.
//!
//! A dataset is immutable once built. Feature vectors are stored row-major in
//! an `n x d` matrix; labels, when present, are aligned with the rows.

use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Array2<f64>,
    labels: Option<Vec<i64>>,
}

impl Dataset {
    pub fn new(points: Array2<f64>, labels: Option<Vec<i64>>) -> Result<Self> {
        if points.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "feature dimension must be at least 1".into(),
            ));
        }
        if let Some(labels) = &labels {
            if labels.len() != points.nrows() {
                return Err(Error::LengthMismatch {
                    predicted: points.nrows(),
                    truth: labels.len(),
                });
            }
        }
        Ok(Self { points, labels })
    }

    /// Builds a dataset from owned rows. All rows must share one length.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Option<Vec<i64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        let n = rows.len();
        let mut flat = Vec::with_capacity(n * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} features, expected {dim}",
                    row.len()
                )));
            }
            flat.extend(row);
        }
        let points = Array2::from_shape_vec((n, dim), flat)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Self::new(points, labels)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[i64]> {
        self.labels().ok_or(Error::MissingLabels)
    }

    /// Restricts the dataset to `indices`, keeping their order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let points = self.points.select(Axis(0), indices);
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Dataset { points, labels }
    }
}

/// Reads a header-less CSV file; the final column is an integer label when
/// `has_labels` is set.
pub fn load_csv(path: impl AsRef<Path>, has_labels: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, has_labels)
}

pub fn parse_csv(text: &str, has_labels: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut flat = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;

    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(rows as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} columns, found {}", record.len()),
                })
            }
            _ => {}
        }
        let n_features = if has_labels {
            record.len().checked_sub(1).filter(|&f| f > 0).ok_or_else(|| Error::Parse {
                line,
                message: "row needs at least one feature and a label".into(),
            })?
        } else {
            record.len()
        };
        for field in record.iter().take(n_features) {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric feature {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite feature {field:?}"),
                });
            }
            flat.push(value);
        }
        if has_labels {
            let field = &record[n_features];
            let label = field
                .parse::<i64>()
                .or_else(|_| {
                    // Some benchmark files store labels as "1.0".
                    field
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.fract() == 0.0)
                        .map(|v| v as i64)
                        .ok_or(())
                })
                .map_err(|_| Error::Parse {
                    line,
                    message: format!("non-integer label {field:?}"),
                })?;
            labels.push(label);
        }
        rows += 1;
    }

    let width = width.ok_or(Error::EmptyDataset)?;
    let dim = if has_labels { width - 1 } else { width };
    let points = Array2::from_shape_vec((rows, dim), flat)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Dataset::new(points, has_labels.then_some(labels))
}

/// Per-feature min-max scaling into `[0, 1]`; constant columns map to 0.
pub fn normalize(ds: &Dataset) -> Dataset {
    let mut points = ds.points.clone();
    for mut column in points.axis_iter_mut(Axis(1)) {
        let (lo, hi) = column
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        let span = hi - lo;
        if span > 0.0 && span.is_finite() {
            column.mapv_inplace(|x| ((x - lo) / span).clamp(0.0, 1.0));
        } else {
            column.fill(0.0);
        }
    }
    Dataset {
        points,
        labels: ds.labels.clone(),
    }
}

/// Indices of the weakly-labelled points used for rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSubset {
    pub indices: Vec<usize>,
    pub proportion: f64,
}

impl LabeledSubset {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Number of labelled points drawn for a given proportion.
pub fn labeled_count(n: usize, proportion: f64) -> usize {
    ((proportion * n as f64).round() as usize).min(n)
}

/// Uniform sample without replacement of `round(proportion * n)` indices,
/// returned in ascending order.
pub fn sample_labeled_subset(ds: &Dataset, proportion: f64, seed: u64) -> Result<LabeledSubset> {
    ds.require_labels()?;
    if !(proportion > 0.0 && proportion <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "label proportion must lie in (0, 1], got {proportion}"
        )));
    }
    let n = ds.len();
    let m = labeled_count(n, proportion);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, m).into_vec();
    indices.sort_unstable();
    Ok(LabeledSubset {
        indices,
        proportion,
    })
}

/// Sizes of a sequential split; the first `n % blocks` blocks get one extra point.
pub fn block_sizes(n: usize, num_blocks: usize) -> Result<Vec<usize>> {
    if num_blocks == 0 {
        return Err(Error::InvalidArgument("num_blocks must be >= 1".into()));
    }
    if num_blocks > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} points into {num_blocks} blocks"
        )));
    }
    let base = n / num_blocks;
    let extra = n % num_blocks;
    Ok((0..num_blocks)
        .map(|b| base + usize::from(b < extra))
        .collect())
}

/// Order-preserving split into `num_blocks` contiguous blocks.
pub fn split_blocks(ds: &Dataset, num_blocks: usize) -> Result<Vec<Dataset>> {
    let sizes = block_sizes(ds.len(), num_blocks)?;
    let mut start = 0;
    Ok(sizes
        .into_iter()
        .map(|size| {
            let idx: Vec<usize> = (start..start + size).collect();
            start += size;
            ds.subset(&idx)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn parses_labelled_rows() {
        let ds = parse_csv("0,0,1\n1,0,1\n0,1,2", true).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels().unwrap(), &[1, 1, 2]);
        assert_eq!(ds.point(1).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(parse_csv("", true), Err(Error::EmptyDataset)));
        assert!(matches!(parse_csv("\n\n", false), Err(Error::EmptyDataset)));
    }

    #[test]
    fn non_numeric_feature_reports_line() {
        match parse_csv("a,b,1", true) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse_csv("0,0,1\n1,x,1", true) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row_reports_line() {
        match parse_csv("0,0,1\n1,1\n", true) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("columns"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tab_or_space_padding_is_tolerated() {
        let ds = parse_csv(" 1.5 , 2 , 3\n", true).unwrap();
        assert_eq!(ds.point(0).to_vec(), vec![1.5, 2.0]);
        assert_eq!(ds.labels().unwrap(), &[3]);
    }

    #[test]
    fn normalize_maps_columns() {
        let ds = Dataset::new(array![[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]], None).unwrap();
        let norm = normalize(&ds);
        assert_eq!(norm.points().column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(norm.points().column(1).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalized_corners_span_sqrt_d() {
        let ds = Dataset::new(array![[3.0, -1.0], [7.0, 9.0]], None).unwrap();
        let norm = normalize(&ds);
        let d: f64 = norm
            .point(0)
            .iter()
            .zip(norm.point(1).iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }

    fn labelled(n: usize) -> Dataset {
        let rows = (0..n).map(|i| vec![i as f64]).collect();
        Dataset::from_rows(rows, Some((0..n as i64).collect())).unwrap()
    }

    #[test]
    fn labeled_subset_sizes() {
        let ds = labelled(10);
        assert_eq!(sample_labeled_subset(&ds, 0.2, 7).unwrap().len(), 2);
        let full = sample_labeled_subset(&ds, 1.0, 7).unwrap();
        assert_eq!(full.indices, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn labeled_subset_is_seed_deterministic() {
        let ds = labelled(200);
        let a = sample_labeled_subset(&ds, 0.2, 42).unwrap();
        let b = sample_labeled_subset(&ds, 0.2, 42).unwrap();
        let c = sample_labeled_subset(&ds, 0.2, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.indices, c.indices);
    }

    #[test]
    fn labeled_subset_needs_labels() {
        let ds = Dataset::from_rows(vec![vec![0.0], vec![1.0]], None).unwrap();
        assert!(matches!(
            sample_labeled_subset(&ds, 0.2, 1),
            Err(Error::MissingLabels)
        ));
        assert!(sample_labeled_subset(&labelled(4), 0.0, 1).is_err());
    }

    #[test]
    fn block_remainder_rule() {
        assert_eq!(block_sizes(8, 8).unwrap(), vec![1; 8]);
        assert_eq!(block_sizes(10, 3).unwrap(), vec![4, 3, 3]);
        assert_eq!(block_sizes(29928, 8).unwrap(), vec![3741; 8]);
        assert!(block_sizes(3, 4).is_err());
        assert!(block_sizes(3, 0).is_err());
    }

    #[test]
    fn split_preserves_order() {
        let ds = labelled(10);
        let blocks = split_blocks(&ds, 3).unwrap();
        let joined: Vec<i64> = blocks
            .iter()
            .flat_map(|b| b.labels().unwrap().to_vec())
            .collect();
        assert_eq!(joined, (0..10).collect::<Vec<_>>());
    }
}
