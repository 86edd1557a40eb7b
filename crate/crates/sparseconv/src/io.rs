//! Binary file formats for tensors and sparse kernel matrices.
//!
//! Tensor file (`SCKT`): magic, u32 version = 1, u8 mode (3 or 4), the mode's
//! dims as u32, then the f32 payload in CHW / NCHW order. All integers and
//! floats are little-endian.
//!
//! Sparse kernel file (`SCSR`): magic, u32 version = 1, the layer geometry as
//! eight u32 fields (out_channels, in_channels, kernel_h, kernel_w, in_h,
//! in_w, stride, pad), u64 nnz, rowptr as u64, colidx as u32, origin triples
//! as 3 x u32 per non-zero, values as f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::SparseKernelMatrix;
use crate::tensor::{LayerSpec, Tensor3, Tensor4};

const TENSOR_MAGIC: &[u8; 4] = b"SCKT";
const CSR_MAGIC: &[u8; 4] = b"SCSR";
const VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f32_slice<W: Write>(w: &mut W, data: &[f32]) -> Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f32_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn check_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(Error::Malformed(format!(
            "bad magic {:?}, expected {:?}",
            got,
            std::str::from_utf8(magic).unwrap()
        )));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Malformed(format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn write_tensor3<W: Write>(w: &mut W, t: &Tensor3) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    write_u32(w, VERSION)?;
    w.write_all(&[3u8])?;
    for d in [t.channels, t.height, t.width] {
        write_u32(w, d as u32)?;
    }
    write_f32_slice(w, t.data())
}

pub fn write_tensor4<W: Write>(w: &mut W, t: &Tensor4) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    write_u32(w, VERSION)?;
    w.write_all(&[4u8])?;
    for d in [t.out_channels, t.in_channels, t.kernel_h, t.kernel_w] {
        write_u32(w, d as u32)?;
    }
    write_f32_slice(w, t.data())
}

pub fn read_tensor3<R: Read>(r: &mut R) -> Result<Tensor3> {
    check_header(r, TENSOR_MAGIC)?;
    let mut mode = [0u8; 1];
    r.read_exact(&mut mode)?;
    if mode[0] != 3 {
        return Err(Error::Malformed(format!("expected mode 3 tensor, got {}", mode[0])));
    }
    let c = read_u32(r)? as usize;
    let h = read_u32(r)? as usize;
    let w = read_u32(r)? as usize;
    let data = read_f32_vec(r, c * h * w)?;
    Tensor3::new(c, h, w, data)
}

pub fn read_tensor4<R: Read>(r: &mut R) -> Result<Tensor4> {
    check_header(r, TENSOR_MAGIC)?;
    let mut mode = [0u8; 1];
    r.read_exact(&mut mode)?;
    if mode[0] != 4 {
        return Err(Error::Malformed(format!("expected mode 4 tensor, got {}", mode[0])));
    }
    let n = read_u32(r)? as usize;
    let c = read_u32(r)? as usize;
    let kh = read_u32(r)? as usize;
    let kw = read_u32(r)? as usize;
    let data = read_f32_vec(r, n * c * kh * kw)?;
    Tensor4::new(n, c, kh, kw, data)
}

pub fn write_sparse_kernel<W: Write>(w: &mut W, m: &SparseKernelMatrix) -> Result<()> {
    let g = m.geometry();
    w.write_all(CSR_MAGIC)?;
    write_u32(w, VERSION)?;
    for d in [
        g.out_channels,
        g.in_channels,
        g.kernel_h,
        g.kernel_w,
        g.in_h,
        g.in_w,
        g.stride,
        g.pad,
    ] {
        write_u32(w, d as u32)?;
    }
    write_u64(w, m.nnz() as u64)?;
    for p in m.rowptr() {
        write_u64(w, *p as u64)?;
    }
    for c in m.colidx() {
        write_u32(w, *c)?;
    }
    for o in m.origin() {
        write_u32(w, o[0])?;
        write_u32(w, o[1])?;
        write_u32(w, o[2])?;
    }
    write_f32_slice(w, m.values())
}

pub fn read_sparse_kernel<R: Read>(r: &mut R) -> Result<SparseKernelMatrix> {
    check_header(r, CSR_MAGIC)?;
    let mut dims = [0usize; 8];
    for d in dims.iter_mut() {
        *d = read_u32(r)? as usize;
    }
    let geometry = LayerSpec::new(
        dims[0], dims[1], dims[2], dims[3], dims[4], dims[5], dims[6], dims[7],
    )?;
    let nnz = read_u64(r)? as usize;
    let mut rowptr = Vec::with_capacity(geometry.out_channels + 1);
    for _ in 0..=geometry.out_channels {
        rowptr.push(read_u64(r)? as usize);
    }
    let mut colidx = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        colidx.push(read_u32(r)?);
    }
    let mut origin = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        origin.push([read_u32(r)?, read_u32(r)?, read_u32(r)?]);
    }
    let values = read_f32_vec(r, nnz)?;
    SparseKernelMatrix::from_parts(geometry, rowptr, colidx, values, origin)
}

pub fn save_tensor3(path: &Path, t: &Tensor3) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor3(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor3(path: &Path) -> Result<Tensor3> {
    read_tensor3(&mut BufReader::new(File::open(path)?))
}

pub fn save_tensor4(path: &Path, t: &Tensor4) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor4(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor4(path: &Path) -> Result<Tensor4> {
    read_tensor4(&mut BufReader::new(File::open(path)?))
}

pub fn save_sparse_kernel(path: &Path, m: &SparseKernelMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sparse_kernel(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_sparse_kernel(path: &Path) -> Result<SparseKernelMatrix> {
    read_sparse_kernel(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::sparsify;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tensor_files_roundtrip() {
        let t3 = Tensor3::new(2, 3, 4, (0..24).map(|i| i as f32 * 0.5).collect()).unwrap();
        let mut buf = Vec::new();
        write_tensor3(&mut buf, &t3).unwrap();
        assert_eq!(&buf[..4], b"SCKT");
        let back = read_tensor3(&mut buf.as_slice()).unwrap();
        assert_eq!(back, t3);

        let t4 = Tensor4::new(2, 1, 2, 2, (0..8).map(|i| -(i as f32)).collect()).unwrap();
        let mut buf4 = Vec::new();
        write_tensor4(&mut buf4, &t4).unwrap();
        assert_eq!(read_tensor4(&mut buf4.as_slice()).unwrap(), t4);
    }

    #[test]
    fn sparse_kernel_file_roundtrips() {
        let spec = LayerSpec::new(4, 3, 3, 3, 8, 8, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f32> = (0..spec.weight_len())
            .map(|_| if rng.random_bool(0.6) { 0.0 } else { rng.random_range(-2.0f32..2.0) })
            .collect();
        let w = Tensor4::new(4, 3, 3, 3, data).unwrap();
        let m = sparsify(&w, &spec, 0.0).unwrap();
        let mut buf = Vec::new();
        write_sparse_kernel(&mut buf, &m).unwrap();
        assert_eq!(&buf[..4], b"SCSR");
        let back = read_sparse_kernel(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn bad_magic_and_mode_are_rejected() {
        let t3 = Tensor3::zeros(1, 1, 1);
        let mut buf = Vec::new();
        write_tensor3(&mut buf, &t3).unwrap();
        assert!(read_tensor4(&mut buf.as_slice()).is_err());
        buf[0] = b'X';
        assert!(read_tensor3(&mut buf.as_slice()).is_err());
    }
}
