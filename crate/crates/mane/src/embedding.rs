//! The aligned embedding: one shared anchor coordinate block plus M private
//! blocks in R^d. Anchor coordinates are stored exactly once, so the
//! cross-dataset equality constraint on shared points holds structurally at
//! every step, not as something the optimizer has to maintain.

use ndarray::{Array2, ArrayView2};

use crate::error::{ManeError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedEmbedding {
    anchor_block: Array2<f64>,
    private_blocks: Vec<Array2<f64>>,
}

impl AlignedEmbedding {
    pub fn new(anchor_block: Array2<f64>, private_blocks: Vec<Array2<f64>>) -> Result<Self> {
        if private_blocks.is_empty() {
            return Err(ManeError::Parameter(
                "embedding needs at least one dataset".into(),
            ));
        }
        let dim = anchor_block.ncols();
        if dim == 0 {
            return Err(ManeError::Parameter("embedding dimension must be >= 1".into()));
        }
        for (m, block) in private_blocks.iter().enumerate() {
            if block.ncols() != dim {
                return Err(ManeError::Shape(format!(
                    "private block {m} has dimension {}, anchors have {dim}",
                    block.ncols()
                )));
            }
        }
        Ok(Self {
            anchor_block,
            private_blocks,
        })
    }

    pub fn zeros(n_anchors: usize, private_sizes: &[usize], dim: usize) -> Result<Self> {
        Self::new(
            Array2::zeros((n_anchors, dim)),
            private_sizes.iter().map(|&n| Array2::zeros((n, dim))).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.anchor_block.ncols()
    }

    pub fn n_anchors(&self) -> usize {
        self.anchor_block.nrows()
    }

    pub fn n_datasets(&self) -> usize {
        self.private_blocks.len()
    }

    /// Number of points in dataset m's view (anchors + its private points).
    pub fn dataset_size(&self, m: usize) -> usize {
        self.n_anchors() + self.private_blocks[m].nrows()
    }

    pub fn anchor_block(&self) -> ArrayView2<'_, f64> {
        self.anchor_block.view()
    }

    pub fn private_block(&self, m: usize) -> ArrayView2<'_, f64> {
        self.private_blocks[m].view()
    }

    /// Materialize dataset m's coordinates: the anchor block followed by its
    /// private block.
    pub fn dataset_coords(&self, m: usize) -> Array2<f64> {
        let dim = self.dim();
        let mut out = Array2::zeros((self.dataset_size(m), dim));
        out.slice_mut(ndarray::s![..self.n_anchors(), ..])
            .assign(&self.anchor_block);
        out.slice_mut(ndarray::s![self.n_anchors().., ..])
            .assign(&self.private_blocks[m]);
        out
    }

    /// Copy the coordinates of vertex v in dataset m's view. Vertices below
    /// n_anchors read the shared anchor block.
    pub fn read_row(&self, m: usize, v: usize, buf: &mut [f64]) {
        let n0 = self.n_anchors();
        let row = if v < n0 {
            self.anchor_block.row(v)
        } else {
            self.private_blocks[m].row(v - n0)
        };
        for (dst, src) in buf.iter_mut().zip(row.iter()) {
            *dst = *src;
        }
    }

    /// Add a delta to vertex v in dataset m's view. Writes to anchor
    /// vertices land in the shared block and are immediately visible to
    /// every dataset.
    pub fn add_to_row(&mut self, m: usize, v: usize, delta: &[f64]) {
        let n0 = self.n_anchors();
        let mut row = if v < n0 {
            self.anchor_block.row_mut(v)
        } else {
            self.private_blocks[m].row_mut(v - n0)
        };
        for (dst, d) in row.iter_mut().zip(delta.iter()) {
            *dst += d;
        }
    }

    /// True if any coordinate is non-finite.
    pub fn has_non_finite(&self) -> bool {
        self.anchor_block.iter().any(|v| !v.is_finite())
            || self
                .private_blocks
                .iter()
                .any(|b| b.iter().any(|v| !v.is_finite()))
    }

    /// All coordinates in checkpoint order: the anchor block row-major,
    /// then each private block row-major.
    pub fn iter_coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.anchor_block
            .iter()
            .copied()
            .chain(self.private_blocks.iter().flat_map(|b| b.iter().copied()))
    }

    pub fn total_coords(&self) -> usize {
        self.anchor_block.len() + self.private_blocks.iter().map(|b| b.len()).sum::<usize>()
    }
}
