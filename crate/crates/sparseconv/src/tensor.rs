//! Dense tensors in CHW/NCHW layout and the geometry of a single layer.
//!
//! All kernels in this crate operate on contiguous `f32` buffers. The input
//! feature map is a 3-mode tensor (channels x height x width), the weight
//! bank a 4-mode tensor (out_channels x in_channels x kernel_h x kernel_w).
//! `layout_offset` is the flattening function that turns a (channel, row,
//! column) triple into a linear offset into the padded input; the sparse
//! kernel format precomputes these offsets for every non-zero weight.

use crate::error::{Error, Result};

/// Geometry of one convolution layer. A fully connected layer of shape
/// M x K is expressed as `out_channels = M`, `in_channels = K`, unit kernel
/// and unit spatial extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub stride: usize,
    pub pad: usize,
}

impl LayerSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        in_h: usize,
        in_w: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let spec = LayerSpec {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            in_h,
            in_w,
            stride,
            pad,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("out_channels", self.out_channels),
            ("in_channels", self.in_channels),
            ("kernel_h", self.kernel_h),
            ("kernel_w", self.kernel_w),
            ("in_h", self.in_h),
            ("in_w", self.in_w),
            ("stride", self.stride),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        let span_h = self.in_h + 2 * self.pad;
        let span_w = self.in_w + 2 * self.pad;
        if span_h < self.kernel_h || span_w < self.kernel_w {
            return Err(Error::GeometryMismatch(format!(
                "kernel {}x{} does not fit padded input {}x{}",
                self.kernel_h, self.kernel_w, span_h, span_w
            )));
        }
        if !(span_h - self.kernel_h).is_multiple_of(self.stride)
            || !(span_w - self.kernel_w).is_multiple_of(self.stride)
        {
            return Err(Error::GeometryMismatch(format!(
                "output extent is not integral: input {}x{} pad {} kernel {}x{} stride {}",
                self.in_h, self.in_w, self.pad, self.kernel_h, self.kernel_w, self.stride
            )));
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel_w) / self.stride + 1
    }

    /// Height of the zero-padded input.
    pub fn padded_h(&self) -> usize {
        self.in_h + 2 * self.pad
    }

    /// Width of the zero-padded input.
    pub fn padded_w(&self) -> usize {
        self.in_w + 2 * self.pad
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.out_h() * self.out_w()
    }
}

/// Linear offset of element (c, y, x) in the padded CHW input:
/// `(c * padded_h + y) * padded_w + x`.
///
/// The offset is additive in the kernel displacement: for in-range triples,
/// `layout_offset(c, y + r, x + s) = layout_offset(c, y, x) + layout_offset(0, r, s)`.
pub fn layout_offset(spec: &LayerSpec, c: usize, y: usize, x: usize) -> Result<usize> {
    let (ph, pw) = (spec.padded_h(), spec.padded_w());
    if c >= spec.in_channels || y >= ph || x >= pw {
        return Err(Error::IndexOutOfRange(format!(
            "({c}, {y}, {x}) outside {} x {} x {}",
            spec.in_channels, ph, pw
        )));
    }
    Ok((c * ph + y) * pw + x)
}

fn check_finite(data: &[f32], what: &str) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} contains NaN or Inf")));
    }
    Ok(())
}

/// Dense 3-mode tensor, contiguous in CHW order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    data: Vec<f32>,
}

impl Tensor3 {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::GeometryMismatch(format!(
                "tensor3 data length {} != {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        check_finite(&data, "tensor3")?;
        Ok(Tensor3 { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor3 { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }
}

/// Dense 4-mode weight tensor, contiguous in NCHW (filter-major) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if data.len() != out_channels * in_channels * kernel_h * kernel_w {
            return Err(Error::GeometryMismatch(format!(
                "tensor4 data length {} != {}x{}x{}x{}",
                data.len(),
                out_channels,
                in_channels,
                kernel_h,
                kernel_w
            )));
        }
        check_finite(&data, "tensor4")?;
        Ok(Tensor4 { out_channels, in_channels, kernel_h, kernel_w, data })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, kernel_h: usize, kernel_w: usize) -> Self {
        Tensor4 {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            data: vec![0.0; out_channels * in_channels * kernel_h * kernel_w],
        }
    }

    pub fn matches(&self, spec: &LayerSpec) -> bool {
        self.out_channels == spec.out_channels
            && self.in_channels == spec.in_channels
            && self.kernel_h == spec.kernel_h
            && self.kernel_w == spec.kernel_w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, r: usize, s: usize) -> f32 {
        self.data[((n * self.in_channels + c) * self.kernel_h + r) * self.kernel_w + s]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, r: usize, s: usize, v: f32) {
        self.data[((n * self.in_channels + c) * self.kernel_h + r) * self.kernel_w + s] = v;
    }
}

/// Copy `input` into a zero-padded tensor of extent
/// `channels x (in_h + 2 pad) x (in_w + 2 pad)`.
///
/// Padding is materialized so the sparse kernel's inner loop can stream
/// offsets without bounds branches.
pub fn pad_input(input: &Tensor3, spec: &LayerSpec) -> Result<Tensor3> {
    if input.channels != spec.in_channels || input.height != spec.in_h || input.width != spec.in_w {
        return Err(Error::GeometryMismatch(format!(
            "input {}x{}x{} does not match layer {}x{}x{}",
            input.channels, input.height, input.width, spec.in_channels, spec.in_h, spec.in_w
        )));
    }
    if spec.pad == 0 {
        return Ok(input.clone());
    }
    let (ph, pw) = (spec.padded_h(), spec.padded_w());
    let mut out = Tensor3::zeros(spec.in_channels, ph, pw);
    for c in 0..spec.in_channels {
        for y in 0..spec.in_h {
            let src = &input.data[(c * spec.in_h + y) * spec.in_w..][..spec.in_w];
            let dst_base = (c * ph + y + spec.pad) * pw + spec.pad;
            out.data[dst_base..dst_base + spec.in_w].copy_from_slice(src);
        }
    }
    Ok(out)
}
