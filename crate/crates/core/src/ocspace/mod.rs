//! Output-configuration space: encoded examples, the reference matrix and the
//! OC-score scan.
//!
//! A [`ReferenceSet`] holds one column-major byte block per predicted class.
//! Each block's physical row count is padded to a multiple of 32 by
//! repeating its first row, which leaves every minimum unchanged.

mod io;
mod kernel;

pub use io::{read_reference_set, write_reference_set, MAGIC, VERSION};
pub use kernel::{Kernel, LANES};

use std::ops::Deref;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Ensemble;

/// Leaf identifiers reached in each tree, in tree order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutputConfig(Vec<u8>);

impl OutputConfig {
    pub fn new(ids: Vec<u8>) -> OutputConfig {
        OutputConfig(ids)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }
}

impl Deref for OutputConfig {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl From<Vec<u8>> for OutputConfig {
    fn from(ids: Vec<u8>) -> Self {
        OutputConfig(ids)
    }
}

/// Number of trees in which `a` and `b` reach different leaves.
pub fn hamming(a: &[u8], b: &[u8]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Column-major rows of one predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    data: Vec<u8>,
    rows: usize,
    logical_rows: usize,
    sources: Vec<usize>,
}

impl Partition {
    fn from_rows(n_trees: usize, rows: &[&[u8]], sources: Vec<usize>) -> Partition {
        let logical_rows = rows.len();
        if logical_rows == 0 {
            return Partition {
                data: Vec::new(),
                rows: 0,
                logical_rows: 0,
                sources,
            };
        }
        let physical = logical_rows.div_ceil(LANES) * LANES;
        let mut data = vec![0u8; n_trees * physical];
        for m in 0..n_trees {
            let column = &mut data[m * physical..(m + 1) * physical];
            for (i, slot) in column.iter_mut().enumerate() {
                // Padding repeats row 0.
                let src = if i < logical_rows { i } else { 0 };
                *slot = rows[src][m];
            }
        }
        Partition {
            data,
            rows: physical,
            logical_rows,
            sources,
        }
    }

    pub(crate) fn from_raw(data: Vec<u8>, rows: usize, logical_rows: usize) -> Partition {
        Partition {
            data,
            rows,
            logical_rows,
            sources: Vec::new(),
        }
    }

    /// Column-major bytes, `n_trees * physical_rows` long.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn physical_rows(&self) -> usize {
        self.rows
    }

    pub fn logical_rows(&self) -> usize {
        self.logical_rows
    }

    pub fn padded_rows(&self) -> usize {
        self.rows - self.logical_rows
    }

    /// Index of each logical row's source example, when known.
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn is_empty(&self) -> bool {
        self.logical_rows == 0
    }

    pub fn column(&self, m: usize) -> &[u8] {
        &self.data[m * self.rows..(m + 1) * self.rows]
    }

    /// Gathers physical row `i` (strided).
    pub fn row(&self, i: usize) -> Vec<u8> {
        let n_trees = self.data.len().checked_div(self.rows).unwrap_or(0);
        (0..n_trees).map(|m| self.data[m * self.rows + i]).collect()
    }
}

/// Output configurations of correctly classified training examples, split by
/// class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSet {
    n_trees: usize,
    partitions: [Partition; 2],
}

impl ReferenceSet {
    /// Builds a reference set from explicit rows. Empty classes are allowed
    /// here; scanning an empty class fails with `EmptyClassPartition`.
    pub fn from_rows(n_trees: usize, class0: &[Vec<u8>], class1: &[Vec<u8>]) -> Result<ReferenceSet> {
        let sources0 = (0..class0.len()).collect();
        let sources1 = (0..class1.len()).collect();
        Self::from_labeled(n_trees, class0, sources0, class1, sources1)
    }

    fn from_labeled(
        n_trees: usize,
        class0: &[Vec<u8>],
        sources0: Vec<usize>,
        class1: &[Vec<u8>],
        sources1: Vec<usize>,
    ) -> Result<ReferenceSet> {
        check_width(n_trees)?;
        for row in class0.iter().chain(class1) {
            if row.len() != n_trees {
                return Err(Error::LengthMismatch(row.len(), n_trees));
            }
        }
        fn view(rows: &[Vec<u8>]) -> Vec<&[u8]> {
            rows.iter().map(Vec::as_slice).collect()
        }
        Ok(ReferenceSet {
            n_trees,
            partitions: [
                Partition::from_rows(n_trees, &view(class0), sources0),
                Partition::from_rows(n_trees, &view(class1), sources1),
            ],
        })
    }

    pub(crate) fn from_partitions(n_trees: usize, partitions: [Partition; 2]) -> ReferenceSet {
        ReferenceSet {
            n_trees,
            partitions,
        }
    }

    pub fn n_trees(&self) -> usize {
        self.n_trees
    }

    pub fn partition(&self, label: u8) -> Result<&Partition> {
        self.partitions
            .get(label as usize)
            .ok_or_else(|| Error::InvalidArgument(format!("label {label} is not binary")))
    }

    pub fn partitions(&self) -> &[Partition; 2] {
        &self.partitions
    }

    /// Logical rows of one class, in insertion order.
    pub fn rows(&self, label: u8) -> Result<Vec<Vec<u8>>> {
        let p = self.partition(label)?;
        Ok((0..p.logical_rows).map(|i| p.row(i)).collect())
    }

    /// Class label of every logical row, class 0 first.
    pub fn labels(&self) -> Vec<u8> {
        let mut labels = vec![0u8; self.partitions[0].logical_rows];
        labels.resize(labels.len() + self.partitions[1].logical_rows, 1);
        labels
    }

    pub fn physical_rows(&self) -> usize {
        self.partitions.iter().map(|p| p.rows).sum()
    }

    /// Checks that the reference set can be scanned with output
    /// configurations of `e`.
    pub fn check_compatible(&self, e: &Ensemble) -> Result<()> {
        if e.n_trees() != self.n_trees {
            return Err(Error::LengthMismatch(self.n_trees, e.n_trees()));
        }
        for p in &self.partitions {
            for (m, tree) in e.trees().iter().enumerate() {
                if p.rows > 0 && p.column(m).iter().any(|&id| id as usize >= tree.leaf_count()) {
                    return Err(Error::MalformedReferenceSet(format!(
                        "column {m} holds a leaf id beyond the tree's {} leaves",
                        tree.leaf_count()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Keeps the given logical rows of each class (indices into that class's
    /// rows) and re-pads.
    pub fn subset(&self, keep0: &[usize], keep1: &[usize]) -> Result<ReferenceSet> {
        let pick = |label: u8, keep: &[usize]| -> Result<(Vec<Vec<u8>>, Vec<usize>)> {
            let p = &self.partitions[label as usize];
            let mut rows = Vec::with_capacity(keep.len());
            let mut sources = Vec::with_capacity(keep.len());
            for &i in keep {
                if i >= p.logical_rows {
                    return Err(Error::InvalidArgument(format!(
                        "row {i} out of range for class {label}"
                    )));
                }
                rows.push(p.row(i));
                sources.push(p.sources.get(i).copied().unwrap_or(i));
            }
            Ok((rows, sources))
        };
        let (r0, s0) = pick(0, keep0)?;
        let (r1, s1) = pick(1, keep1)?;
        Self::from_labeled(self.n_trees, &r0, s0, &r1, s1)
    }
}

fn check_width(n_trees: usize) -> Result<()> {
    if n_trees == 0 || n_trees > crate::model::MAX_TREES {
        return Err(Error::LimitExceeded(format!(
            "reference rows must have 1..=255 columns, got {n_trees}"
        )));
    }
    Ok(())
}

/// Encodes the correctly classified examples of `(xs, ys)` as reference rows.
pub fn build_reference(e: &Ensemble, xs: &[Vec<f64>], ys: &[u8]) -> Result<ReferenceSet> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let mut rows: [Vec<Vec<u8>>; 2] = [Vec::new(), Vec::new()];
    let mut sources: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
        if y > 1 {
            return Err(Error::InvalidArgument(format!("label {y} is not binary")));
        }
        if e.evaluate(x).map_err(|err| Error::at(i, err))?.label == y {
            rows[y as usize].push(e.leaf_path_unchecked(x).into_inner());
            sources[y as usize].push(i);
        }
    }
    for (label, r) in rows.iter().enumerate() {
        if r.is_empty() {
            return Err(Error::EmptyClassPartition(label as u8));
        }
    }
    let [s0, s1] = sources;
    ReferenceSet::from_labeled(e.n_trees(), &rows[0], s0, &rows[1], s1)
}

fn scan(r: &ReferenceSet, oc: &[u8], predicted_label: u8, kernel: Kernel) -> Result<usize> {
    if oc.len() != r.n_trees {
        return Err(Error::LengthMismatch(oc.len(), r.n_trees));
    }
    let p = r.partition(predicted_label)?;
    if p.is_empty() {
        return Err(Error::EmptyClassPartition(predicted_label));
    }
    Ok(kernel.min_hamming(&p.data, p.rows, oc) as usize)
}

/// Hamming distance to the closest reference row of the predicted class,
/// computed by the scalar reference scan.
pub fn oc_score(r: &ReferenceSet, oc: &[u8], predicted_label: u8) -> Result<usize> {
    scan(r, oc, predicted_label, Kernel::Scalar)
}

/// Same value as [`oc_score`], using the widest kernel this CPU supports.
pub fn oc_score_simd(r: &ReferenceSet, oc: &[u8], predicted_label: u8) -> Result<usize> {
    scan(r, oc, predicted_label, Kernel::detect())
}

/// [`oc_score`] with an explicit kernel.
pub fn oc_score_with(r: &ReferenceSet, oc: &[u8], predicted_label: u8, kernel: Kernel) -> Result<usize> {
    if !kernel.is_available() {
        return Err(Error::InvalidArgument(format!("kernel {kernel} is not available")));
    }
    scan(r, oc, predicted_label, kernel)
}

/// Scores many queries in parallel, preserving order.
pub fn batch_oc_scores(r: &ReferenceSet, ocs: &[OutputConfig], labels: &[u8]) -> Result<Vec<usize>> {
    batch_oc_scores_with(r, ocs, labels, Kernel::detect())
}

pub fn batch_oc_scores_with(
    r: &ReferenceSet,
    ocs: &[OutputConfig],
    labels: &[u8],
    kernel: Kernel,
) -> Result<Vec<usize>> {
    if ocs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: ocs.len(),
            got: labels.len(),
        });
    }
    ocs.par_iter()
        .zip(labels.par_iter())
        .enumerate()
        .map(|(i, (oc, &label))| oc_score_with(r, oc, label, kernel).map_err(|e| Error::at(i, e)))
        .collect()
}
