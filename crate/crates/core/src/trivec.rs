//! Vectorization layouts for lower-triangular matrices.
//!
//! A layout is a list of segments, each copied independently between a
//! column-major factor and a flat vector:
//!
//! * a rectangular block, stored column-major, so every block column is a
//!   single contiguous copy out of the factor;
//! * a small triangle packed row by row.
//!
//! [`LayoutKind::RowWise`] is one triangle covering the whole matrix.
//! [`LayoutKind::FullMatrix`] is one `h × h` block including the zero upper
//! part. [`LayoutKind::Recursive`] splits the triangle into the square
//! off-diagonal block followed by the two diagonal triangles, recursively,
//! until the order drops to the threshold `h0`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{CholeskyFactor, DenseMatrix, FactorSource};

/// Default recursion threshold for [`LayoutKind::Recursive`].
pub const DEFAULT_H0: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayoutKind {
    RowWise,
    FullMatrix,
    Recursive,
}

impl LayoutKind {
    pub fn name(self) -> &'static str {
        match self {
            LayoutKind::RowWise => "rowwise",
            LayoutKind::FullMatrix => "full",
            LayoutKind::Recursive => "recursive",
        }
    }
}

impl std::str::FromStr for LayoutKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rowwise" | "row-wise" | "row" => Ok(LayoutKind::RowWise),
            "full" | "fullmatrix" | "full-matrix" => Ok(LayoutKind::FullMatrix),
            "recursive" | "rec" => Ok(LayoutKind::Recursive),
            other => Err(format!("unknown layout '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Segment {
    Block {
        row0: usize,
        col0: usize,
        rows: usize,
        cols: usize,
        offset: usize,
    },
    RowTri {
        start: usize,
        size: usize,
        offset: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VecLayout {
    kind: LayoutKind,
    h: usize,
    h0: usize,
    len: usize,
    segments: Vec<Segment>,
}

fn tri(n: usize) -> usize {
    n * (n + 1) / 2
}

impl VecLayout {
    /// Builds a layout for order-`h` triangles. `h0` only matters for
    /// [`LayoutKind::Recursive`] but must be at least 1 for every kind.
    pub fn new(kind: LayoutKind, h: usize, h0: usize) -> Result<Self> {
        if h0 < 1 {
            return Err(Error::InvalidThreshold(h0));
        }
        if h < 1 {
            return Err(Error::DimensionMismatch(
                "layout order must be at least 1".into(),
            ));
        }
        let mut segments = Vec::new();
        let len = match kind {
            LayoutKind::RowWise => {
                segments.push(Segment::RowTri {
                    start: 0,
                    size: h,
                    offset: 0,
                });
                tri(h)
            }
            LayoutKind::FullMatrix => {
                segments.push(Segment::Block {
                    row0: 0,
                    col0: 0,
                    rows: h,
                    cols: h,
                    offset: 0,
                });
                h * h
            }
            LayoutKind::Recursive => {
                let mut offset = 0;
                recursive_segments(0, h, h0, &mut offset, &mut segments);
                offset
            }
        };
        Ok(VecLayout {
            kind,
            h,
            h0,
            len,
            segments,
        })
    }

    pub fn row_wise(h: usize) -> Self {
        Self::new(LayoutKind::RowWise, h, DEFAULT_H0).expect("valid threshold")
    }

    pub fn kind(&self) -> LayoutKind {
        self.kind
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn h0(&self) -> usize {
        self.h0
    }

    /// Vector length: `h(h+1)/2`, or `h²` for the full-matrix layout.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of lower-triangular entries, `h(h+1)/2`.
    pub fn entries(&self) -> usize {
        tri(self.h)
    }

    /// Vector index of the lower-triangular entry `(p, q)`, `p >= q`.
    pub fn index_of(&self, p: usize, q: usize) -> usize {
        assert!(q <= p && p < self.h, "({p},{q}) outside the lower triangle");
        match self.kind {
            LayoutKind::RowWise => tri(p) + q,
            LayoutKind::FullMatrix => q * self.h + p,
            LayoutKind::Recursive => recursive_index(p, q, 0, self.h, self.h0, 0),
        }
    }

    /// Vector indices for all lower-triangular entries, listed in row-wise
    /// order `(0,0), (1,0), (1,1), (2,0), ...`.
    pub fn index_map(&self) -> Vec<usize> {
        let mut map = vec![usize::MAX; tri(self.h)];
        for seg in &self.segments {
            match *seg {
                Segment::Block {
                    row0,
                    col0,
                    rows,
                    cols,
                    offset,
                } => {
                    for c in 0..cols {
                        let q = col0 + c;
                        for r in 0..rows {
                            let p = row0 + r;
                            if p >= q {
                                map[tri(p) + q] = offset + c * rows + r;
                            }
                        }
                    }
                }
                Segment::RowTri {
                    start,
                    size,
                    offset,
                } => {
                    for i in 0..size {
                        for j in 0..=i {
                            map[tri(start + i) + start + j] = offset + tri(i) + j;
                        }
                    }
                }
            }
        }
        map
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.h {
            return Err(Error::DimensionMismatch(format!(
                "factor order {dim} does not match layout order {}",
                self.h
            )));
        }
        Ok(())
    }

    pub fn vectorize(&self, l: &CholeskyFactor) -> Result<Vec<f64>> {
        self.check_dim(l.dim())?;
        let mut out = vec![0.0; self.len];
        self.gather_into(l.matrix().as_slice(), &mut out);
        Ok(out)
    }

    /// Writes the vectorization of `l` into `out` (length [`Self::len`]).
    pub fn vectorize_into(&self, l: &CholeskyFactor, out: &mut [f64]) -> Result<()> {
        self.check_dim(l.dim())?;
        if out.len() != self.len {
            return Err(Error::DimensionMismatch(format!(
                "output length {} does not match layout length {}",
                out.len(),
                self.len
            )));
        }
        self.gather_into(l.matrix().as_slice(), out);
        Ok(())
    }

    /// `src` is a column-major `h × h` matrix whose strict upper part is zero.
    fn gather_into(&self, src: &[f64], out: &mut [f64]) {
        let h = self.h;
        for seg in &self.segments {
            match *seg {
                Segment::Block {
                    row0,
                    col0,
                    rows,
                    cols,
                    offset,
                } => {
                    for c in 0..cols {
                        let s = (col0 + c) * h + row0;
                        let d = offset + c * rows;
                        out[d..d + rows].copy_from_slice(&src[s..s + rows]);
                    }
                }
                Segment::RowTri {
                    start,
                    size,
                    offset,
                } => {
                    for i in 0..size {
                        let d = offset + tri(i);
                        let p = start + i;
                        for (j, o) in out[d..=d + i].iter_mut().enumerate() {
                            *o = src[(start + j) * h + p];
                        }
                    }
                }
            }
        }
    }

    /// Inverse of [`Self::vectorize`]. For the full-matrix layout the strict
    /// upper positions of `v` are ignored.
    pub fn unvectorize(&self, v: &[f64]) -> Result<CholeskyFactor> {
        let m = self.unvectorize_matrix(v)?;
        Ok(CholeskyFactor::from_lower_unchecked(m, FactorSource::Unspecified))
    }

    pub(crate) fn unvectorize_matrix(&self, v: &[f64]) -> Result<DenseMatrix> {
        if v.len() != self.len {
            return Err(Error::DimensionMismatch(format!(
                "vector length {} does not match layout length {}",
                v.len(),
                self.len
            )));
        }
        let h = self.h;
        let mut dst = vec![0.0; h * h];
        for seg in &self.segments {
            match *seg {
                Segment::Block {
                    row0,
                    col0,
                    rows,
                    cols,
                    offset,
                } => {
                    for c in 0..cols {
                        let q = col0 + c;
                        let d = q * h + row0;
                        let s = offset + c * rows;
                        dst[d..d + rows].copy_from_slice(&v[s..s + rows]);
                    }
                }
                Segment::RowTri {
                    start,
                    size,
                    offset,
                } => {
                    for i in 0..size {
                        let s = offset + tri(i);
                        let p = start + i;
                        for (j, &x) in v[s..=s + i].iter().enumerate() {
                            dst[(start + j) * h + p] = x;
                        }
                    }
                }
            }
        }
        if self.kind == LayoutKind::FullMatrix {
            for q in 1..h {
                dst[q * h..q * h + q].fill(0.0);
            }
        }
        Ok(DenseMatrix::from_vec_unchecked(h, h, dst))
    }

    /// Stacks the vectorizations of `factors` as the rows of a `g × len`
    /// row-major matrix.
    pub fn bulk_gather(&self, factors: &[CholeskyFactor]) -> Result<TargetMatrix> {
        for f in factors {
            self.check_dim(f.dim())?;
        }
        let mut data = vec![0.0; factors.len() * self.len];
        if self.len > 0 {
            data.par_chunks_mut(self.len)
                .zip(factors.par_iter())
                .for_each(|(row, f)| self.gather_into(f.matrix().as_slice(), row));
        }
        Ok(TargetMatrix {
            rows: factors.len(),
            cols: self.len,
            data,
        })
    }
}

fn recursive_segments(
    start: usize,
    n: usize,
    h0: usize,
    offset: &mut usize,
    out: &mut Vec<Segment>,
) {
    if n <= h0 {
        out.push(Segment::RowTri {
            start,
            size: n,
            offset: *offset,
        });
        *offset += tri(n);
        return;
    }
    let a = n.div_ceil(2);
    out.push(Segment::Block {
        row0: start + a,
        col0: start,
        rows: n - a,
        cols: a,
        offset: *offset,
    });
    *offset += (n - a) * a;
    recursive_segments(start, a, h0, offset, out);
    recursive_segments(start + a, n - a, h0, offset, out);
}

fn recursive_index(p: usize, q: usize, start: usize, n: usize, h0: usize, offset: usize) -> usize {
    if n <= h0 {
        return offset + tri(p - start) + (q - start);
    }
    let a = n.div_ceil(2);
    let split = start + a;
    let block = (n - a) * a;
    if p >= split && q < split {
        offset + (q - start) * (n - a) + (p - split)
    } else if p < split {
        recursive_index(p, q, start, a, h0, offset + block)
    } else {
        recursive_index(p, q, split, n - a, h0, offset + block + tri(a))
    }
}

/// Row-major `g × D` matrix of stacked factor vectorizations.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TargetMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.cols..(s + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        crate::linalg::norm2(&self.data)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const KINDS: [LayoutKind; 3] = [
        LayoutKind::RowWise,
        LayoutKind::FullMatrix,
        LayoutKind::Recursive,
    ];

    fn lower(h: usize, mut f: impl FnMut(usize, usize) -> f64) -> CholeskyFactor {
        CholeskyFactor::from_lower(
            DenseMatrix::from_fn(h, h, |p, q| if p >= q { f(p, q) } else { 0.0 }),
            FactorSource::Unspecified,
        )
        .unwrap()
    }

    fn order(layout: &VecLayout) -> Vec<(usize, usize)> {
        let h = layout.h();
        let mut out = vec![(usize::MAX, usize::MAX); layout.len()];
        for p in 0..h {
            for q in 0..=p {
                out[layout.index_of(p, q)] = (p, q);
            }
        }
        out
    }

    #[test]
    fn row_wise_order() {
        let l = VecLayout::new(LayoutKind::RowWise, 3, 1).unwrap();
        assert_eq!(l.len(), 6);
        assert_eq!(
            order(&l),
            vec![(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)]
        );
    }

    #[test]
    fn recursive_one_level() {
        let l = VecLayout::new(LayoutKind::Recursive, 4, 2).unwrap();
        assert_eq!(l.len(), 10);
        assert_eq!(
            order(&l),
            vec![
                (2, 0),
                (3, 0),
                (2, 1),
                (3, 1),
                (0, 0),
                (1, 0),
                (1, 1),
                (2, 2),
                (3, 2),
                (3, 3)
            ]
        );
        let m = lower(4, |p, q| (10 * p + q) as f64);
        assert_eq!(
            l.vectorize(&m).unwrap(),
            vec![20.0, 30.0, 21.0, 31.0, 0.0, 10.0, 11.0, 22.0, 32.0, 33.0]
        );
        assert_eq!(l.unvectorize(&l.vectorize(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn recursive_below_threshold_is_row_wise() {
        let r = VecLayout::new(LayoutKind::Recursive, 2, 4).unwrap();
        let w = VecLayout::new(LayoutKind::RowWise, 2, 4).unwrap();
        assert_eq!(r.index_map(), w.index_map());
    }

    #[test]
    fn small_vectorizations() {
        let id = CholeskyFactor::from_lower(DenseMatrix::identity(2), FactorSource::Unspecified).unwrap();
        assert_eq!(VecLayout::row_wise(2).vectorize(&id).unwrap(), vec![1.0, 0.0, 1.0]);
        let l = lower(2, |p, q| [[1.0, 0.0], [2.0, 3.0]][p][q]);
        let full = VecLayout::new(LayoutKind::FullMatrix, 2, 1).unwrap();
        assert_eq!(full.vectorize(&l).unwrap(), vec![1.0, 2.0, 0.0, 3.0]);
        assert_eq!(full.unvectorize(&[1.0, 2.0, 0.0, 3.0]).unwrap(), l);
        assert_eq!(
            VecLayout::row_wise(2).unvectorize(&[1.0, 0.0, 1.0]).unwrap(),
            id
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            VecLayout::new(LayoutKind::Recursive, 4, 0),
            Err(Error::InvalidThreshold(0))
        ));
        let l = VecLayout::row_wise(3);
        let f = CholeskyFactor::from_lower(DenseMatrix::identity(2), FactorSource::Unspecified).unwrap();
        assert!(matches!(l.vectorize(&f), Err(Error::DimensionMismatch(_))));
        assert!(matches!(l.unvectorize(&[1.0]), Err(Error::DimensionMismatch(_))));
        assert!(l.bulk_gather(&[f]).is_err());
    }

    #[test]
    fn bijection_exhaustive() {
        for h in 1..=512usize {
            for kind in KINDS {
                for h0 in [1, 7, DEFAULT_H0] {
                    if kind != LayoutKind::Recursive && h0 != DEFAULT_H0 {
                        continue;
                    }
                    let layout = VecLayout::new(kind, h, h0).unwrap();
                    let map = layout.index_map();
                    let mut seen = vec![false; layout.len()];
                    for p in 0..h {
                        for q in 0..=p {
                            let i = map[tri(p) + q];
                            assert!(i < layout.len());
                            assert!(!seen[i], "{kind:?} h={h} h0={h0} duplicate {i}");
                            seen[i] = true;
                        }
                    }
                    if kind == LayoutKind::FullMatrix {
                        let covered = seen.iter().filter(|&&b| b).count();
                        assert_eq!(covered, tri(h));
                    } else {
                        assert!(seen.iter().all(|&b| b), "{kind:?} h={h} h0={h0}");
                    }
                    if h <= 64 || h % 64 == 1 {
                        for p in 0..h {
                            for q in 0..=p {
                                assert_eq!(layout.index_of(p, q), map[tri(p) + q]);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bulk_gather_rows_match_vectorize() {
        let a = lower(2, |p, q| (1 + p + 2 * q) as f64);
        let b = lower(2, |p, q| (p * 7 + q) as f64 - 3.0);
        for kind in KINDS {
            let layout = VecLayout::new(kind, 2, 1).unwrap();
            let t = layout.bulk_gather(&[a.clone(), b.clone()]).unwrap();
            assert_eq!(t.rows(), 2);
            assert_eq!(t.row(0), layout.vectorize(&a).unwrap().as_slice());
            assert_eq!(t.row(1), layout.vectorize(&b).unwrap().as_slice());
            let single = layout.bulk_gather(std::slice::from_ref(&a)).unwrap();
            assert_eq!(single.row(0), layout.vectorize(&a).unwrap().as_slice());
        }
    }

    fn random_lower(h: usize, seed: u64) -> CholeskyFactor {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        lower(h, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    #[test]
    fn roundtrip_large_orders() {
        for h in [255, 256, 257] {
            let l = random_lower(h, h as u64);
            for kind in KINDS {
                let layout = VecLayout::new(kind, h, DEFAULT_H0).unwrap();
                let v = layout.vectorize(&l).unwrap();
                assert_eq!(layout.unvectorize(&v).unwrap(), l);
            }
        }
    }

    #[test]
    fn cross_layout_gather() {
        let factors: Vec<_> = (0..3).map(|s| random_lower(8, s)).collect();
        for kind in KINDS {
            let layout = VecLayout::new(kind, 8, 2).unwrap();
            let t = layout.bulk_gather(&factors).unwrap();
            for (s, f) in factors.iter().enumerate() {
                assert_eq!(&layout.unvectorize(t.row(s)).unwrap(), f);
            }
        }
    }

    proptest! {
        #[test]
        fn roundtrip_all_kinds(h in 1usize..=64, h0 in 1usize..=16, seed in any::<u64>()) {
            let l = random_lower(h, seed);
            for kind in KINDS {
                let layout = VecLayout::new(kind, h, h0).unwrap();
                let v = layout.vectorize(&l).unwrap();
                prop_assert_eq!(v.len(), layout.len());
                prop_assert_eq!(&layout.unvectorize(&v).unwrap(), &l);
                for p in 0..h {
                    for q in 0..=p {
                        prop_assert_eq!(v[layout.index_of(p, q)], l.matrix()[(p, q)]);
                    }
                }
            }
        }
    }
}
