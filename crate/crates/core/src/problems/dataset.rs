use crate::error::{Error, Result};

/// Labelled samples `(a_i, y_i)` with `a_i ∈ R^d` and `y_i ∈ {0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    d: usize,
}

impl Dataset {
    /// `features` is row-major, `labels.len()` rows of `d` columns.
    pub fn new(features: Vec<f64>, labels: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Format("feature dimension must be positive".into()));
        }
        if features.len() != labels.len() * d {
            return Err(Error::Format(format!(
                "{} feature values do not form {} rows of width {d}",
                features.len(),
                labels.len()
            )));
        }
        if let Some((i, y)) = labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y != 0.0 && y != 1.0)
        {
            return Err(Error::Format(format!(
                "label {y} of sample {i} is not 0 or 1"
            )));
        }
        Ok(Self {
            features,
            labels,
            d,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Format(format!(
                "row {bad} has width {}, expected {d}",
                rows[bad].len()
            )));
        }
        Self::new(rows.concat(), labels, d)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            features: self.features[range.start * self.d..range.end * self.d].to_vec(),
            labels: self.labels[range].to_vec(),
            d: self.d,
        }
    }

    /// Per-column `(min, max)`.
    pub fn column_ranges(&self) -> Vec<(f64, f64)> {
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); self.d];
        for i in 0..self.len() {
            for (r, v) in ranges.iter_mut().zip(self.features(i)) {
                r.0 = r.0.min(*v);
                r.1 = r.1.max(*v);
            }
        }
        ranges
    }

    /// Maps each column to `[0, 1]` with the given ranges. Constant columns
    /// map to 0. Values outside a range (test data) are not clipped.
    pub fn apply_minmax(&mut self, ranges: &[(f64, f64)]) -> Result<()> {
        if ranges.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: ranges.len(),
            });
        }
        for row in self.features.chunks_mut(self.d) {
            for (v, (lo, hi)) in row.iter_mut().zip(ranges) {
                let width = hi - lo;
                *v = if width > 0.0 { (*v - lo) / width } else { 0.0 };
            }
        }
        Ok(())
    }

    /// Replaces every label, keeping features.
    pub fn relabel(&mut self, mut f: impl FnMut(f64) -> f64) -> Result<()> {
        for y in &mut self.labels {
            *y = f(*y);
            if *y != 0.0 && *y != 1.0 {
                return Err(Error::Format(format!("relabelled value {y} is not 0 or 1")));
            }
        }
        Ok(())
    }
}
