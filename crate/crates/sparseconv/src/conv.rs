//! Convolution kernels: dense direct (the reference), direct sparse, lowered
//! sparse (comparison baseline), and sparse-times-dense for FC layers.
//!
//! The direct sparse kernel streams CSR non-zeros against offset-shifted
//! views of the padded input. For every non-zero with padded-input offset
//! `off`, the contribution to output position (y, x) reads
//! `in[off + (y * stride) * padded_w + x * stride]`, so no lowered matrix is
//! ever materialized. Loop tiling over output channels, register blocking
//! over the spatial loops, and column blocking over input channels are all
//! controlled by `TilingConfig`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, SparseKernelMatrix};
use crate::tensor::{pad_input, LayerSpec, Tensor3, Tensor4};

/// Loop tiling parameters for the sparse kernels. Tile sizes need not divide
/// the loop extents; remainders run as shorter blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TilingConfig {
    /// Output channels handled per tile.
    pub output_channel_tile: usize,
    /// Register block height (output rows per block).
    pub block_h: usize,
    /// Register block width (output columns per block).
    pub block_w: usize,
    /// Column block size, in input channels, applied to the weight matrix.
    pub input_channel_block: usize,
}

impl Default for TilingConfig {
    fn default() -> Self {
        TilingConfig {
            output_channel_tile: 16,
            block_h: 1,
            block_w: 8,
            input_channel_block: 128,
        }
    }
}

impl TilingConfig {
    /// Measured-default tiling for a concrete layer. Blocks covering the
    /// whole output plane let the unit-stride kernel stream each non-zero
    /// contiguously over the plane, which beats narrow row blocks as long as
    /// the plane stays cache resident; larger planes fall back to row
    /// blocks.
    pub fn for_spec(spec: &LayerSpec) -> Self {
        let (h_out, w_out) = (spec.out_h(), spec.out_w());
        let plane_run = (h_out - 1) * spec.padded_w() + w_out;
        if plane_run <= 8192 {
            TilingConfig { block_h: h_out, block_w: w_out, ..TilingConfig::default() }
        } else {
            TilingConfig {
                block_w: if w_out <= 16 { w_out } else { 8 },
                ..TilingConfig::default()
            }
        }
    }
}

fn check_input(input: &Tensor3, spec: &LayerSpec) -> Result<()> {
    if input.channels != spec.in_channels || input.height != spec.in_h || input.width != spec.in_w {
        return Err(Error::GeometryMismatch(format!(
            "input {}x{}x{} does not match layer input {}x{}x{}",
            input.channels, input.height, input.width, spec.in_channels, spec.in_h, spec.in_w
        )));
    }
    Ok(())
}

fn check_bias(bias: Option<&[f32]>, n: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.len() != n {
            return Err(Error::GeometryMismatch(format!(
                "bias length {} != output channels {}",
                b.len(),
                n
            )));
        }
    }
    Ok(())
}

/// Reference dense convolution, computed exactly as the layer equation reads:
/// `O(n,y,x) = sum_c sum_r sum_s W(n,c,r,s) * I_padded(c, y*stride + r, x*stride + s) + bias[n]`.
///
/// Written for clarity; the benchmark harness times it as the dense baseline.
pub fn conv_dense_direct(
    input: &Tensor3,
    weights: &Tensor4,
    spec: &LayerSpec,
    bias: Option<&[f32]>,
) -> Result<Tensor3> {
    check_input(input, spec)?;
    if !weights.matches(spec) {
        return Err(Error::GeometryMismatch("weights do not match layer".into()));
    }
    check_bias(bias, spec.out_channels)?;
    let padded = pad_input(input, spec)?;
    let pin = padded.data();
    let (h_out, w_out) = (spec.out_h(), spec.out_w());
    let (ph, pw) = (spec.padded_h(), spec.padded_w());
    let _ = ph;
    let mut out = Tensor3::zeros(spec.out_channels, h_out, w_out);
    let odata = out.data_mut();
    for n in 0..spec.out_channels {
        let b = bias.map_or(0.0, |b| b[n]);
        for y in 0..h_out {
            for x in 0..w_out {
                let mut acc = 0.0f32;
                for c in 0..spec.in_channels {
                    for r in 0..spec.kernel_h {
                        let row = (c * spec.padded_h() + y * spec.stride + r) * pw + x * spec.stride;
                        let src = &pin[row..row + spec.kernel_w];
                        for (s, v) in src.iter().enumerate() {
                            acc += weights.at(n, c, r, s) * v;
                        }
                    }
                }
                odata[(n * h_out + y) * w_out + x] = acc + b;
            }
        }
    }
    Ok(out)
}

/// Direct sparse convolution: iterates the CSR non-zeros of each output
/// channel and streams them over the shifted padded input.
pub fn conv_sparse_direct(
    input: &Tensor3,
    kernel: &SparseKernelMatrix,
    spec: &LayerSpec,
    bias: Option<&[f32]>,
    tiling: &TilingConfig,
) -> Result<Tensor3> {
    if kernel.geometry() != spec {
        return Err(Error::GeometryMismatch(
            "sparse kernel was built against a different layer".into(),
        ));
    }
    check_input(input, spec)?;
    check_bias(bias, spec.out_channels)?;

    let padded = pad_input(input, spec)?;
    let pin = padded.data();
    let (h_out, w_out) = (spec.out_h(), spec.out_w());
    let (ph, pw) = (spec.padded_h(), spec.padded_w());
    let stride = spec.stride;
    let n_total = spec.out_channels;

    let mut out = Tensor3::zeros(n_total, h_out, w_out);

    let rowptr = kernel.rowptr();
    let colidx = kernel.colidx();
    let values = kernel.values();

    // column blocking: contiguous input-channel bands, expressed as ranges in
    // padded-offset space so each row's slice is found by binary search
    let cb = tiling.input_channel_block.max(1);
    let band_count = spec.in_channels.div_ceil(cb);
    let band_offset = |band: usize| ((band * cb).min(spec.in_channels) * ph * pw) as u32;

    let bh = tiling.block_h.max(1).min(h_out);
    let bw = tiling.block_w.max(1).min(w_out);
    let tile_n = tiling.output_channel_tile.max(1);

    // Unit stride with plane-covering blocks: each non-zero contributes one
    // contiguous run over the padded input spanning the whole output plane.
    // The run includes the gutter columns between rows; they accumulate
    // harmless values that extraction skips. The run's last read is the last
    // valid output position, so it never leaves the channel.
    if stride == 1 && bh >= h_out && bw >= w_out {
        let run = (h_out - 1) * pw + w_out;
        let odata = out.data_mut();
        let mut scratch = vec![0.0f32; tile_n.min(n_total) * run];
        let mut tile_start = 0;
        while tile_start < n_total {
            let tile_end = (tile_start + tile_n).min(n_total);
            for (i, n) in (tile_start..tile_end).enumerate() {
                scratch[i * run..(i + 1) * run].fill(bias.map_or(0.0, |b| b[n]));
            }
            for band in 0..band_count {
                let lo_off = band_offset(band);
                let hi_off = band_offset(band + 1);
                for n in tile_start..tile_end {
                    let row = &colidx[rowptr[n]..rowptr[n + 1]];
                    let lo = rowptr[n] + row.partition_point(|&c| c < lo_off);
                    let hi = rowptr[n] + row.partition_point(|&c| c < hi_off);
                    let dst = &mut scratch[(n - tile_start) * run..][..run];
                    for j in lo..hi {
                        let off = colidx[j] as usize;
                        let coeff = values[j];
                        let src = &pin[off..off + run];
                        for (a, v) in dst.iter_mut().zip(src) {
                            *a += coeff * *v;
                        }
                    }
                }
            }
            for n in tile_start..tile_end {
                let src = &scratch[(n - tile_start) * run..][..run];
                let dst = &mut odata[n * h_out * w_out..(n + 1) * h_out * w_out];
                for y in 0..h_out {
                    dst[y * w_out..(y + 1) * w_out]
                        .copy_from_slice(&src[y * pw..y * pw + w_out]);
                }
            }
            tile_start = tile_end;
        }
        return Ok(out);
    }

    if let Some(b) = bias {
        let odata = out.data_mut();
        for n in 0..n_total {
            odata[n * h_out * w_out..(n + 1) * h_out * w_out].fill(b[n]);
        }
    }
    let mut acc = vec![0.0f32; bh * bw];
    let odata = out.data_mut();

    let mut tile_start = 0;
    while tile_start < n_total {
        let tile_end = (tile_start + tile_n).min(n_total);
        for band in 0..band_count {
            let lo_off = band_offset(band);
            let hi_off = band_offset(band + 1);
            for n in tile_start..tile_end {
                let row = &colidx[rowptr[n]..rowptr[n + 1]];
                let lo = rowptr[n] + row.partition_point(|&c| c < lo_off);
                let hi = rowptr[n] + row.partition_point(|&c| c < hi_off);
                if lo == hi {
                    continue;
                }
                let out_ch = &mut odata[n * h_out * w_out..(n + 1) * h_out * w_out];
                let mut y0 = 0;
                while y0 < h_out {
                    let yb = bh.min(h_out - y0);
                    let mut x0 = 0;
                    while x0 < w_out {
                        let xb = bw.min(w_out - x0);
                        for yy in 0..yb {
                            let dst = &out_ch[(y0 + yy) * w_out + x0..][..xb];
                            acc[yy * xb..yy * xb + xb].copy_from_slice(dst);
                        }
                        for j in lo..hi {
                            let off = colidx[j] as usize;
                            let coeff = values[j];
                            let base = off + y0 * stride * pw + x0 * stride;
                            if stride == 1 {
                                for yy in 0..yb {
                                    let src = &pin[base + yy * pw..][..xb];
                                    let dst = &mut acc[yy * xb..yy * xb + xb];
                                    for (a, v) in dst.iter_mut().zip(src) {
                                        *a += coeff * *v;
                                    }
                                }
                            } else {
                                for yy in 0..yb {
                                    let rowbase = base + yy * stride * pw;
                                    for xx in 0..xb {
                                        acc[yy * xb + xx] += coeff * pin[rowbase + xx * stride];
                                    }
                                }
                            }
                        }
                        for yy in 0..yb {
                            let dst = &mut out_ch[(y0 + yy) * w_out + x0..][..xb];
                            dst.copy_from_slice(&acc[yy * xb..yy * xb + xb]);
                        }
                        x0 += xb;
                    }
                    y0 += yb;
                }
            }
        }
        tile_start = tile_end;
    }
    Ok(out)
}

/// Dense matrix in row-major order. Used for lowered inputs and FC
/// activations.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::GeometryMismatch(format!(
                "matrix data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Lower the input into an explicit matrix with `in_channels * kernel_h *
/// kernel_w` rows and `out_h * out_w` columns. Column `y * out_w + x` holds
/// the receptive field of output position (y, x); row order matches the
/// within-row ordering of `sparsify` (ascending (c, r, s)).
pub fn im2col(input: &Tensor3, spec: &LayerSpec) -> Result<DenseMatrix> {
    check_input(input, spec)?;
    let padded = pad_input(input, spec)?;
    let pin = padded.data();
    let (h_out, w_out) = (spec.out_h(), spec.out_w());
    let (ph, pw) = (spec.padded_h(), spec.padded_w());
    let cols = h_out * w_out;
    let mut m = DenseMatrix::zeros(spec.in_channels * spec.kernel_h * spec.kernel_w, cols);
    for c in 0..spec.in_channels {
        for r in 0..spec.kernel_h {
            for s in 0..spec.kernel_w {
                let dst_row = (c * spec.kernel_h + r) * spec.kernel_w + s;
                let dst = &mut m.data[dst_row * cols..(dst_row + 1) * cols];
                for y in 0..h_out {
                    let src_base = (c * ph + y * spec.stride + r) * pw + s;
                    if spec.stride == 1 {
                        dst[y * w_out..(y + 1) * w_out]
                            .copy_from_slice(&pin[src_base..src_base + w_out]);
                    } else {
                        for x in 0..w_out {
                            dst[y * w_out + x] = pin[src_base + x * spec.stride];
                        }
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Sparse convolution over the lowered input: CSR weight rows times the
/// im2col matrix. Exists so the harness can measure the lowering penalty.
pub fn conv_sparse_lowered(
    input: &Tensor3,
    kernel: &SparseKernelMatrix,
    spec: &LayerSpec,
    bias: Option<&[f32]>,
) -> Result<Tensor3> {
    if kernel.geometry() != spec {
        return Err(Error::GeometryMismatch(
            "sparse kernel was built against a different layer".into(),
        ));
    }
    check_bias(bias, spec.out_channels)?;
    let lowered = im2col(input, spec)?;
    let (h_out, w_out) = (spec.out_h(), spec.out_w());
    let cols = h_out * w_out;
    let mut out = Tensor3::zeros(spec.out_channels, h_out, w_out);
    let odata = out.data_mut();
    let rowptr = kernel.rowptr();
    let values = kernel.values();
    let origin = kernel.origin();
    for n in 0..spec.out_channels {
        let dst = &mut odata[n * cols..(n + 1) * cols];
        if let Some(b) = bias {
            dst.fill(b[n]);
        }
        for j in rowptr[n]..rowptr[n + 1] {
            let [c, r, s] = origin[j];
            let k = (c as usize * spec.kernel_h + r as usize) * spec.kernel_w + s as usize;
            let coeff = values[j];
            let src = lowered.row(k);
            for (a, v) in dst.iter_mut().zip(src) {
                *a += coeff * *v;
            }
        }
    }
    Ok(out)
}

/// Row-major dense matmul, accumulating `out += a * b` for an
/// `m x k` times `k x n` product. The microkernel holds a 2 x 16 output
/// tile in registers across the whole k loop, so B traffic is amortized
/// over two rows and stores happen once per tile.
pub fn sgemm(m: usize, n: usize, k: usize, a: &[f32], b: &[f32], out: &mut [f32]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(out.len(), m * n);
    const JT: usize = 16;
    let pairs = m / 2 * 2;
    let jt_end = n / JT * JT;
    let mut i = 0;
    while i < pairs {
        let a0 = &a[i * k..(i + 1) * k];
        let a1 = &a[(i + 1) * k..(i + 2) * k];
        let mut j0 = 0;
        while j0 < jt_end {
            let mut acc0 = [0.0f32; JT];
            let mut acc1 = [0.0f32; JT];
            for kk in 0..k {
                let c0 = a0[kk];
                let c1 = a1[kk];
                let brow = &b[kk * n + j0..kk * n + j0 + JT];
                for ((d0, d1), v) in acc0.iter_mut().zip(acc1.iter_mut()).zip(brow) {
                    *d0 += c0 * *v;
                    *d1 += c1 * *v;
                }
            }
            for (o, v) in out[i * n + j0..i * n + j0 + JT].iter_mut().zip(&acc0) {
                *o += *v;
            }
            for (o, v) in out[(i + 1) * n + j0..(i + 1) * n + j0 + JT].iter_mut().zip(&acc1) {
                *o += *v;
            }
            j0 += JT;
        }
        for j in jt_end..n {
            let mut s0 = 0.0f32;
            let mut s1 = 0.0f32;
            for kk in 0..k {
                s0 += a0[kk] * b[kk * n + j];
                s1 += a1[kk] * b[kk * n + j];
            }
            out[i * n + j] += s0;
            out[(i + 1) * n + j] += s1;
        }
        i += 2;
    }
    for i in pairs..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, coeff) in arow.iter().enumerate() {
            if *coeff == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, v) in orow.iter_mut().zip(brow) {
                *o += coeff * *v;
            }
        }
    }
}

/// Dense convolution via im2col plus dense matmul. Second dense baseline for
/// the harness.
pub fn conv_dense_lowered(
    input: &Tensor3,
    weights: &Tensor4,
    spec: &LayerSpec,
    bias: Option<&[f32]>,
) -> Result<Tensor3> {
    if !weights.matches(spec) {
        return Err(Error::GeometryMismatch("weights do not match layer".into()));
    }
    check_bias(bias, spec.out_channels)?;
    let lowered = im2col(input, spec)?;
    let (h_out, w_out) = (spec.out_h(), spec.out_w());
    let cols = h_out * w_out;
    let k = spec.in_channels * spec.kernel_h * spec.kernel_w;
    let mut out = Tensor3::zeros(spec.out_channels, h_out, w_out);
    let odata = out.data_mut();
    if let Some(b) = bias {
        for n in 0..spec.out_channels {
            odata[n * cols..(n + 1) * cols].fill(b[n]);
        }
    }
    sgemm(spec.out_channels, cols, k, weights.data(), &lowered.data, odata);
    Ok(out)
}

/// Sparse-matrix times dense-matrix product for FC layers:
/// `out[m x b] = weights[m x k] * activations[k x b] (+ bias per row)`.
pub fn fc_spmdm(
    weights: &CsrMatrix,
    activations: &DenseMatrix,
    bias: Option<&[f32]>,
) -> Result<DenseMatrix> {
    if weights.cols != activations.rows {
        return Err(Error::GeometryMismatch(format!(
            "weights {}x{} incompatible with activations {}x{}",
            weights.rows, weights.cols, activations.rows, activations.cols
        )));
    }
    check_bias(bias, weights.rows)?;
    let b = activations.cols;
    let mut out = DenseMatrix::zeros(weights.rows, b);
    let rowptr = weights.rowptr();
    let colidx = weights.colidx();
    let values = weights.values();
    // tile the batch dimension so activation rows stay cache resident
    const COL_TILE: usize = 256;
    for m in 0..weights.rows {
        let dst_row = &mut out.data[m * b..(m + 1) * b];
        if let Some(bias) = bias {
            dst_row.fill(bias[m]);
        }
        let mut col0 = 0;
        while col0 < b {
            let cend = (col0 + COL_TILE).min(b);
            for j in rowptr[m]..rowptr[m + 1] {
                let k = colidx[j] as usize;
                let v = values[j];
                let src = &activations.data[k * b + col0..k * b + cend];
                let dst = &mut dst_row[col0..cend];
                for (a, s) in dst.iter_mut().zip(src) {
                    *a += v * *s;
                }
            }
            col0 = cend;
        }
    }
    Ok(out)
}

/// Run a per-image kernel over a batch, optionally in parallel. Work splits
/// across batch images only, so outputs are bitwise identical for any thread
/// count.
pub fn run_batch<F>(inputs: &[Tensor3], threads: usize, f: F) -> Result<Vec<Tensor3>>
where
    F: Fn(&Tensor3) -> Result<Tensor3> + Sync,
{
    if threads <= 1 {
        return inputs.iter().map(&f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| inputs.par_iter().map(&f).collect())
}
