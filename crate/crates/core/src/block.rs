//! Block-diagonal relation matrices.
//!
//! A matrix with layout `(n_s, n_b)` has `n_s` real scalars on the leading
//! diagonal followed by `n_b` 2x2 blocks `[[a, -b], [b, a]]`. Parameters are
//! stored flat as `[s_0, .., s_{n_s-1}, a_0, b_0, a_1, b_1, ..]`, which is also
//! the order used in checkpoints. The 2x2 blocks behave like complex numbers
//! `a + ib`, so products of matrices with the same layout stay in the layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Layout {
    pub scalars: usize,
    pub blocks: usize,
}

impl Layout {
    pub const fn new(scalars: usize, blocks: usize) -> Self {
        Self { scalars, blocks }
    }

    /// Layout of dimension `d` with `scalars` diagonal entries.
    pub fn with_scalars(d: usize, scalars: usize) -> Result<Self> {
        if scalars > d || !(d - scalars).is_multiple_of(2) {
            return Err(Error::Config(format!(
                "{scalars} scalars leave an odd number of rotation coordinates in dimension {d}"
            )));
        }
        Ok(Self::new(scalars, (d - scalars) / 2))
    }

    /// Default layout: `d/2` scalars, rounded up when `d/2` is odd so the
    /// remaining coordinates pair into rotation blocks.
    pub fn for_dim(d: usize) -> Result<Self> {
        if d == 0 || !d.is_multiple_of(2) {
            return Err(Error::Config(format!("dimension must be even and positive, got {d}")));
        }
        let half = d / 2;
        Self::with_scalars(d, half + half % 2)
    }

    pub const fn dim(&self) -> usize {
        self.scalars + 2 * self.blocks
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagMatrix {
    layout: Layout,
    params: Vec<f64>,
}

impl BlockDiagMatrix {
    pub fn from_params(layout: Layout, params: Vec<f64>) -> Result<Self> {
        if params.len() != layout.dim() {
            return Err(Error::Config(format!(
                "{} parameters for layout of dimension {}",
                params.len(),
                layout.dim()
            )));
        }
        Ok(Self { layout, params })
    }

    pub fn from_parts(scalars: &[f64], rotations: &[(f64, f64)]) -> Self {
        let mut params = scalars.to_vec();
        params.extend(rotations.iter().flat_map(|&(a, b)| [a, b]));
        Self {
            layout: Layout::new(scalars.len(), rotations.len()),
            params,
        }
    }

    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            params: vec![0.0; layout.dim()],
        }
    }

    pub fn identity(layout: Layout) -> Self {
        let mut m = Self::zeros(layout);
        m.params[..layout.scalars].fill(1.0);
        for j in 0..layout.blocks {
            m.params[layout.scalars + 2 * j] = 1.0;
        }
        m
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn scalars(&self) -> &[f64] {
        &self.params[..self.layout.scalars]
    }

    pub fn rotation(&self, j: usize) -> (f64, f64) {
        let i = self.layout.scalars + 2 * j;
        (self.params[i], self.params[i + 1])
    }

    pub fn rotations(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.params[self.layout.scalars..].chunks_exact(2).map(|c| (c[0], c[1]))
    }

    fn check_layout(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(
                self.layout.scalars,
                self.layout.blocks,
                other.layout.scalars,
                other.layout.blocks,
            ));
        }
        Ok(())
    }

    /// Matrix product `self · other`.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check_layout(other)?;
        Ok(Self {
            layout: self.layout,
            params: multiply_params(self.layout, &self.params, &other.params),
        })
    }

    /// Frobenius norm of `self - other`, computed on the parameters.
    pub fn frobenius_diff(&self, other: &Self) -> Result<f64> {
        self.check_layout(other)?;
        Ok(frobenius_diff_params(self.layout, &self.params, &other.params))
    }

    /// Inverse matrix, or `None` when a scalar or block is singular.
    pub fn inverse(&self) -> Option<Self> {
        let mut params = Vec::with_capacity(self.params.len());
        for &s in self.scalars() {
            if s == 0.0 {
                return None;
            }
            params.push(1.0 / s);
        }
        for (a, b) in self.rotations() {
            let norm = a * a + b * b;
            if norm == 0.0 {
                return None;
            }
            params.push(a / norm);
            params.push(-b / norm);
        }
        Some(Self {
            layout: self.layout,
            params,
        })
    }

    /// Row-major dense `d x d` expansion.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let d = self.layout.dim();
        let mut dense = vec![vec![0.0; d]; d];
        for (i, &s) in self.scalars().iter().enumerate() {
            dense[i][i] = s;
        }
        for (j, (a, b)) in self.rotations().enumerate() {
            let i = self.layout.scalars + 2 * j;
            dense[i][i] = a;
            dense[i][i + 1] = -b;
            dense[i + 1][i] = b;
            dense[i + 1][i + 1] = a;
        }
        dense
    }
}

pub(crate) fn multiply_params(layout: Layout, lhs: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n_s = layout.scalars;
    let mut out = Vec::with_capacity(lhs.len());
    out.extend(lhs[..n_s].iter().zip(&rhs[..n_s]).map(|(x, y)| x * y));
    for (l, r) in lhs[n_s..].chunks_exact(2).zip(rhs[n_s..].chunks_exact(2)) {
        let (a1, b1, a2, b2) = (l[0], l[1], r[0], r[1]);
        out.push(a1 * a2 - b1 * b2);
        out.push(a1 * b2 + b1 * a2);
    }
    out
}

pub(crate) fn frobenius_diff_params(layout: Layout, lhs: &[f64], rhs: &[f64]) -> f64 {
    let n_s = layout.scalars;
    let scalar: f64 = lhs[..n_s].iter().zip(&rhs[..n_s]).map(|(x, y)| (x - y) * (x - y)).sum();
    let blocks: f64 = lhs[n_s..]
        .iter()
        .zip(&rhs[n_s..])
        .map(|(x, y)| 2.0 * (x - y) * (x - y))
        .sum();
    (scalar + blocks).sqrt()
}

/// `vsᵀ · M · vo` evaluated blockwise.
pub fn bilinear(layout: Layout, rel: &[f64], vs: &[f64], vo: &[f64]) -> f64 {
    let n_s = layout.scalars;
    let mut acc = 0.0;
    for i in 0..n_s {
        acc += vs[i] * rel[i] * vo[i];
    }
    for j in 0..layout.blocks {
        let i = n_s + 2 * j;
        let (a, b) = (rel[i], rel[i + 1]);
        acc += a * (vs[i] * vo[i] + vs[i + 1] * vo[i + 1]) + b * (vs[i + 1] * vo[i] - vs[i] * vo[i + 1]);
    }
    acc
}

/// `M · vo`, so that `vsᵀ M vo = vs · (M vo)` for every candidate subject.
pub fn apply_right(layout: Layout, rel: &[f64], vo: &[f64]) -> Vec<f64> {
    let n_s = layout.scalars;
    let mut out = Vec::with_capacity(vo.len());
    out.extend((0..n_s).map(|i| rel[i] * vo[i]));
    for j in 0..layout.blocks {
        let i = n_s + 2 * j;
        let (a, b) = (rel[i], rel[i + 1]);
        out.push(a * vo[i] - b * vo[i + 1]);
        out.push(b * vo[i] + a * vo[i + 1]);
    }
    out
}

/// `vsᵀ · M`, so that `vsᵀ M vo = (vsᵀ M) · vo` for every candidate object.
pub fn apply_left(layout: Layout, rel: &[f64], vs: &[f64]) -> Vec<f64> {
    let n_s = layout.scalars;
    let mut out = Vec::with_capacity(vs.len());
    out.extend((0..n_s).map(|i| vs[i] * rel[i]));
    for j in 0..layout.blocks {
        let i = n_s + 2 * j;
        let (a, b) = (rel[i], rel[i + 1]);
        out.push(a * vs[i] + b * vs[i + 1]);
        out.push(-b * vs[i] + a * vs[i + 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_defaults() {
        assert_eq!(Layout::for_dim(200).unwrap(), Layout::new(100, 50));
        assert_eq!(Layout::for_dim(32).unwrap(), Layout::new(16, 8));
        assert_eq!(Layout::for_dim(6).unwrap(), Layout::new(4, 1));
        assert!(Layout::for_dim(7).is_err());
        assert!(Layout::with_scalars(8, 3).is_err());
    }

    #[test]
    fn identity_is_neutral() {
        let m = BlockDiagMatrix::from_parts(&[2.0, -1.5], &[(0.3, 0.7)]);
        let id = BlockDiagMatrix::identity(m.layout());
        assert_eq!(m.multiply(&id).unwrap(), m);
        assert_eq!(id.multiply(&m).unwrap(), m);
    }

    #[test]
    fn rotation_i_squared() {
        let i = BlockDiagMatrix::from_parts(&[], &[(0.0, 1.0)]);
        let sq = i.multiply(&i).unwrap();
        assert_eq!(sq.rotation(0), (-1.0, 0.0));
    }

    #[test]
    fn frobenius_examples() {
        let m = BlockDiagMatrix::from_parts(&[1.0, 2.0], &[(3.0, 4.0)]);
        assert_eq!(m.frobenius_diff(&m).unwrap(), 0.0);
        let layout = Layout::new(0, 1);
        let d = BlockDiagMatrix::identity(layout)
            .frobenius_diff(&BlockDiagMatrix::zeros(layout))
            .unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        let layout = Layout::new(2, 0);
        let d = BlockDiagMatrix::identity(layout)
            .frobenius_diff(&BlockDiagMatrix::zeros(layout))
            .unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dense_expansion() {
        let m = BlockDiagMatrix::from_parts(&[2.0], &[(3.0, 4.0)]);
        assert_eq!(
            m.to_dense(),
            vec![vec![2.0, 0.0, 0.0], vec![0.0, 3.0, -4.0], vec![0.0, 4.0, 3.0]]
        );
        let layout = Layout::new(2, 1);
        let id = BlockDiagMatrix::identity(layout).to_dense();
        for (r, row) in id.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert_eq!(v, if r == c { 1.0 } else { 0.0 });
            }
        }
        assert!(BlockDiagMatrix::zeros(layout)
            .to_dense()
            .iter()
            .flatten()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn layout_mismatch() {
        let a = BlockDiagMatrix::identity(Layout::new(2, 1));
        let b = BlockDiagMatrix::identity(Layout::new(4, 0));
        assert!(matches!(a.multiply(&b), Err(Error::LayoutMismatch(..))));
        assert!(matches!(a.frobenius_diff(&b), Err(Error::LayoutMismatch(..))));
    }

    #[test]
    fn inverse_gives_identity() {
        let m = BlockDiagMatrix::from_parts(&[2.0, -0.5], &[(0.3, 0.4), (1.5, -2.0)]);
        let inv = m.inverse().unwrap();
        let prod = m.multiply(&inv).unwrap();
        let id = BlockDiagMatrix::identity(m.layout());
        assert!(prod.frobenius_diff(&id).unwrap() < 1e-12);
        assert!(BlockDiagMatrix::from_parts(&[0.0], &[]).inverse().is_none());
    }

    #[test]
    fn apply_matches_bilinear() {
        let layout = Layout::new(2, 2);
        let rel = [0.5, -1.0, 0.2, 0.9, -0.4, 0.3];
        let vs = [1.0, 2.0, -0.5, 0.25, 0.7, -1.1];
        let vo = [-0.3, 0.8, 1.2, -0.6, 0.1, 0.4];
        let x = bilinear(layout, &rel, &vs, &vo);
        let right: f64 = apply_right(layout, &rel, &vo).iter().zip(&vs).map(|(a, b)| a * b).sum();
        let left: f64 = apply_left(layout, &rel, &vs).iter().zip(&vo).map(|(a, b)| a * b).sum();
        assert!((x - right).abs() < 1e-12);
        assert!((x - left).abs() < 1e-12);
    }
}
