//! CSR matricization of the weight tensor.
//!
//! A convolution weight bank flattens to a matrix with one row per output
//! channel. Instead of storing a plain kernel column index, each non-zero
//! stores the precomputed offset of its (c, r, s) element inside the padded
//! input, so the convolution inner loop becomes a stream of
//! `out += coeff * in[offset + shift]` updates. The (c, r, s) origin of every
//! non-zero is retained for densification and serialization.

use crate::error::{Error, Result};
use crate::tensor::{layout_offset, LayerSpec, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseKernelMatrix {
    geometry: LayerSpec,
    rowptr: Vec<usize>,
    colidx: Vec<u32>,
    values: Vec<f32>,
    origin: Vec<[u32; 3]>,
}

impl SparseKernelMatrix {
    pub fn geometry(&self) -> &LayerSpec {
        &self.geometry
    }

    pub fn rows(&self) -> usize {
        self.geometry.out_channels
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Fraction of stored non-zeros relative to the dense weight count.
    pub fn density(&self) -> f64 {
        self.nnz() as f64 / self.geometry.weight_len() as f64
    }

    pub fn rowptr(&self) -> &[usize] {
        &self.rowptr
    }

    pub fn colidx(&self) -> &[u32] {
        &self.colidx
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn origin(&self) -> &[[u32; 3]] {
        &self.origin
    }

    /// Rebuild from raw parts (deserialization path). Validates invariants.
    pub fn from_parts(
        geometry: LayerSpec,
        rowptr: Vec<usize>,
        colidx: Vec<u32>,
        values: Vec<f32>,
        origin: Vec<[u32; 3]>,
    ) -> Result<Self> {
        let m = SparseKernelMatrix { geometry, rowptr, colidx, values, origin };
        m.validate()?;
        Ok(m)
    }

    /// Check every structural invariant of the representation.
    pub fn validate(&self) -> Result<()> {
        let n = self.geometry.out_channels;
        if self.rowptr.len() != n + 1 {
            return Err(Error::Malformed(format!(
                "rowptr length {} != rows + 1 = {}",
                self.rowptr.len(),
                n + 1
            )));
        }
        if self.rowptr[0] != 0 {
            return Err(Error::Malformed("rowptr[0] != 0".into()));
        }
        let nnz = *self.rowptr.last().unwrap();
        if nnz != self.colidx.len() || nnz != self.values.len() || nnz != self.origin.len() {
            return Err(Error::Malformed(format!(
                "nnz {} disagrees with colidx {} / values {} / origin {}",
                nnz,
                self.colidx.len(),
                self.values.len(),
                self.origin.len()
            )));
        }
        if self.rowptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Malformed("rowptr not nondecreasing".into()));
        }
        for row in 0..n {
            let lo = self.rowptr[row];
            let hi = self.rowptr[row + 1];
            if self.colidx[lo..hi].windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Malformed(format!(
                    "colidx not strictly increasing in row {row}"
                )));
            }
        }
        for (j, o) in self.origin.iter().enumerate() {
            let (c, r, s) = (o[0] as usize, o[1] as usize, o[2] as usize);
            if c >= self.geometry.in_channels
                || r >= self.geometry.kernel_h
                || s >= self.geometry.kernel_w
            {
                return Err(Error::Malformed(format!("origin {o:?} out of range at nnz {j}")));
            }
            let expect = layout_offset(&self.geometry, c, r, s)?;
            if self.colidx[j] as usize != expect {
                return Err(Error::Malformed(format!(
                    "colidx[{j}] = {} != layout offset {} of origin {o:?}",
                    self.colidx[j], expect
                )));
            }
        }
        Ok(())
    }
}

/// Extract the sparse kernel matrix of `weights`: entries with
/// `|w| > threshold` are kept, stored row-major by output channel and ordered
/// by ascending padded-input offset within each row.
pub fn sparsify(weights: &Tensor4, spec: &LayerSpec, threshold: f32) -> Result<SparseKernelMatrix> {
    if !weights.matches(spec) {
        return Err(Error::GeometryMismatch(format!(
            "weights {}x{}x{}x{} do not match layer {}x{}x{}x{}",
            weights.out_channels,
            weights.in_channels,
            weights.kernel_h,
            weights.kernel_w,
            spec.out_channels,
            spec.in_channels,
            spec.kernel_h,
            spec.kernel_w
        )));
    }
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidArgument("threshold must be finite and >= 0".into()));
    }
    let mut rowptr = Vec::with_capacity(spec.out_channels + 1);
    let mut colidx = Vec::new();
    let mut values = Vec::new();
    let mut origin = Vec::new();
    rowptr.push(0usize);
    let (ph, pw) = (spec.padded_h(), spec.padded_w());
    for n in 0..spec.out_channels {
        // lexicographic (c, r, s) order gives strictly increasing offsets
        for c in 0..spec.in_channels {
            for r in 0..spec.kernel_h {
                for s in 0..spec.kernel_w {
                    let w = weights.at(n, c, r, s);
                    if w.abs() > threshold {
                        colidx.push(((c * ph + r) * pw + s) as u32);
                        values.push(w);
                        origin.push([c as u32, r as u32, s as u32]);
                    }
                }
            }
        }
        rowptr.push(values.len());
    }
    Ok(SparseKernelMatrix { geometry: *spec, rowptr, colidx, values, origin })
}

/// Reconstruct the dense weight tensor from its sparse form. Dropped entries
/// come back as exact zeros.
pub fn densify(m: &SparseKernelMatrix) -> Tensor4 {
    let g = m.geometry;
    let mut out = Tensor4::zeros(g.out_channels, g.in_channels, g.kernel_h, g.kernel_w);
    for n in 0..g.out_channels {
        for j in m.rowptr[n]..m.rowptr[n + 1] {
            let [c, r, s] = m.origin[j];
            out.set(n, c as usize, r as usize, s as usize, m.values[j]);
        }
    }
    out
}

/// Plain 2-D CSR matrix, used for fully connected layers.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    rowptr: Vec<usize>,
    colidx: Vec<u32>,
    values: Vec<f32>,
}

impl CsrMatrix {
    pub fn from_dense(data: &[f32], rows: usize, cols: usize, threshold: f32) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::GeometryMismatch(format!(
                "matrix data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        let mut rowptr = Vec::with_capacity(rows + 1);
        let mut colidx = Vec::new();
        let mut values = Vec::new();
        rowptr.push(0usize);
        for r in 0..rows {
            for c in 0..cols {
                let v = data[r * cols + c];
                if v.abs() > threshold {
                    colidx.push(c as u32);
                    values.push(v);
                }
            }
            rowptr.push(values.len());
        }
        Ok(CsrMatrix { rows, cols, rowptr, colidx, values })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            rowptr: (0..=n).collect(),
            colidx: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.rows * self.cols) as f64
    }

    pub fn rowptr(&self) -> &[usize] {
        &self.rowptr
    }

    pub fn colidx(&self) -> &[u32] {
        &self.colidx
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn to_dense(&self) -> Vec<f32> {
        let mut out = vec![0.0f32; self.rows * self.cols];
        for r in 0..self.rows {
            for j in self.rowptr[r]..self.rowptr[r + 1] {
                out[r * self.cols + self.colidx[j] as usize] = self.values[j];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor4;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_zero_tensor_gives_empty_matrix() {
        let spec = LayerSpec::new(3, 2, 2, 2, 4, 4, 1, 0).unwrap();
        let w = Tensor4::zeros(3, 2, 2, 2);
        let m = sparsify(&w, &spec, 0.0).unwrap();
        assert_eq!(m.nnz(), 0);
        assert_eq!(m.rowptr(), &[0, 0, 0, 0]);
        let d = densify(&m);
        assert_eq!(d, w);
    }

    #[test]
    fn threshold_zero_keeps_everything_nonzero() {
        let spec = LayerSpec::new(2, 2, 3, 3, 5, 5, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f32> = (0..spec.weight_len())
            .map(|_| rng.random_range(0.1f32..1.0) * if rng.random_bool(0.5) { -1.0 } else { 1.0 })
            .collect();
        let w = Tensor4::new(2, 2, 3, 3, data).unwrap();
        let m = sparsify(&w, &spec, 0.0).unwrap();
        assert_eq!(m.nnz(), spec.weight_len());
        m.validate().unwrap();
    }

    #[test]
    fn small_known_example() {
        // 2x1x2x2 weights [[1,0],[0,2]], [[0,0],[3,0]]
        let spec = LayerSpec::new(2, 1, 2, 2, 2, 2, 1, 0).unwrap();
        let w = Tensor4::new(2, 1, 2, 2, vec![1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 3.0, 0.0]).unwrap();
        let m = sparsify(&w, &spec, 0.0).unwrap();
        assert_eq!(m.rowptr(), &[0, 2, 3]);
        assert_eq!(m.values(), &[1.0, 2.0, 3.0]);
        // offsets against a 2x2 input: f(0,0,0)=0, f(0,1,1)=3, f(0,1,0)=2
        assert_eq!(m.colidx(), &[0, 3, 2]);
        assert_eq!(densify(&m), w);
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let spec = LayerSpec::new(2, 1, 2, 2, 2, 2, 1, 0).unwrap();
        let w = Tensor4::zeros(2, 2, 2, 2);
        assert!(sparsify(&w, &spec, 0.0).is_err());
    }

    #[test]
    fn colidx_accounts_for_padding() {
        let spec = LayerSpec::new(1, 1, 3, 3, 3, 3, 1, 1).unwrap();
        let mut w = Tensor4::zeros(1, 1, 3, 3);
        w.set(0, 0, 1, 2, 1.0);
        let m = sparsify(&w, &spec, 0.0).unwrap();
        // padded width is 5: offset = (0*5 + 1)*5 + 2
        assert_eq!(m.colidx(), &[7]);
        m.validate().unwrap();
    }

    #[test]
    fn csr_matrix_identity_roundtrip() {
        let id = CsrMatrix::identity(4);
        let dense = id.to_dense();
        let back = CsrMatrix::from_dense(&dense, 4, 4, 0.0).unwrap();
        assert_eq!(back, id);
        assert_eq!(back.density(), 0.25);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn sparsify_densify_roundtrip_is_exact(
            n in 1usize..5, c in 1usize..5, k in 1usize..4, seed in 0u64..10_000,
        ) {
            let spec = LayerSpec::new(n, c, k, k, 8, 8, 1, 1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..spec.weight_len())
                .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-1.0f32..1.0) })
                .collect();
            let w = Tensor4::new(n, c, k, k, data).unwrap();
            let m = sparsify(&w, &spec, 0.0).unwrap();
            m.validate().unwrap();
            let nnz_expected = w.data().iter().filter(|v| **v != 0.0).count();
            prop_assert_eq!(densify(&m), w);
            prop_assert_eq!(m.nnz(), nnz_expected);
        }
    }
}
