//! Python bindings for the sparse convolution kernels and the performance
//! model. Tensors cross the boundary as flat `list[float]` buffers plus
//! explicit dimensions; all heavy work stays in Rust.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sparseconv::conv as rconv;
use sparseconv::model as rmodel;
use sparseconv::sparse as rsparse;
use sparseconv::tensor as rtensor;

fn err(e: sparseconv::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "LayerSpec", skip_from_py_object)]
#[derive(Clone)]
struct PyLayerSpec {
    inner: rtensor::LayerSpec,
}

#[pymethods]
impl PyLayerSpec {
    #[new]
    #[pyo3(signature = (out_channels, in_channels, kernel_h, kernel_w, in_h, in_w, stride=1, pad=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        in_h: usize,
        in_w: usize,
        stride: usize,
        pad: usize,
    ) -> PyResult<Self> {
        let inner = rtensor::LayerSpec::new(
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            in_h,
            in_w,
            stride,
            pad,
        )
        .map_err(err)?;
        Ok(PyLayerSpec { inner })
    }

    #[getter]
    fn out_channels(&self) -> usize {
        self.inner.out_channels
    }

    #[getter]
    fn in_channels(&self) -> usize {
        self.inner.in_channels
    }

    #[getter]
    fn out_h(&self) -> usize {
        self.inner.out_h()
    }

    #[getter]
    fn out_w(&self) -> usize {
        self.inner.out_w()
    }

    #[getter]
    fn weight_len(&self) -> usize {
        self.inner.weight_len()
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "LayerSpec(out_channels={}, in_channels={}, kernel={}x{}, input={}x{}, stride={}, pad={})",
            s.out_channels, s.in_channels, s.kernel_h, s.kernel_w, s.in_h, s.in_w, s.stride, s.pad
        )
    }
}

#[pyclass(name = "Tensor3", skip_from_py_object)]
#[derive(Clone)]
struct PyTensor3 {
    inner: rtensor::Tensor3,
}

#[pymethods]
impl PyTensor3 {
    #[new]
    fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> PyResult<Self> {
        Ok(PyTensor3 { inner: rtensor::Tensor3::new(channels, height, width, data).map_err(err)? })
    }

    #[staticmethod]
    fn zeros(channels: usize, height: usize, width: usize) -> Self {
        PyTensor3 { inner: rtensor::Tensor3::zeros(channels, height, width) }
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.channels, self.inner.height, self.inner.width)
    }

    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.inner.at(c, y, x)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Tensor4", skip_from_py_object)]
#[derive(Clone)]
struct PyTensor4 {
    inner: rtensor::Tensor4,
}

#[pymethods]
impl PyTensor4 {
    #[new]
    fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        data: Vec<f32>,
    ) -> PyResult<Self> {
        Ok(PyTensor4 {
            inner: rtensor::Tensor4::new(out_channels, in_channels, kernel_h, kernel_w, data)
                .map_err(err)?,
        })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize, usize) {
        let t = &self.inner;
        (t.out_channels, t.in_channels, t.kernel_h, t.kernel_w)
    }

    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "SparseKernelMatrix", skip_from_py_object)]
#[derive(Clone)]
struct PySparseKernelMatrix {
    inner: rsparse::SparseKernelMatrix,
}

#[pymethods]
impl PySparseKernelMatrix {
    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    #[getter]
    fn density(&self) -> f64 {
        self.inner.density()
    }

    fn rowptr(&self) -> Vec<usize> {
        self.inner.rowptr().to_vec()
    }

    fn colidx(&self) -> Vec<u32> {
        self.inner.colidx().to_vec()
    }

    fn values(&self) -> Vec<f32> {
        self.inner.values().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "SparseKernelMatrix(rows={}, nnz={}, density={:.4})",
            self.inner.rows(),
            self.inner.nnz(),
            self.inner.density()
        )
    }
}

#[pyclass(name = "PlatformProfile", skip_from_py_object)]
#[derive(Clone)]
struct PyPlatformProfile {
    inner: rmodel::PlatformProfile,
}

#[pymethods]
impl PyPlatformProfile {
    #[new]
    #[pyo3(signature = (name, flops, bandwidth, alpha=3.0, beta=2.0))]
    fn new(name: &str, flops: f64, bandwidth: f64, alpha: f64, beta: f64) -> PyResult<Self> {
        Ok(PyPlatformProfile {
            inner: rmodel::PlatformProfile::new(name, flops, bandwidth, alpha, beta)
                .map_err(err)?,
        })
    }

    /// Built-in profiles: "atom", "bdw", "knl".
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        rmodel::PlatformProfile::preset(name)
            .map(|inner| PyPlatformProfile { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown preset {name}")))
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn flops(&self) -> f64 {
        self.inner.flops
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.inner.bandwidth
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }
}

#[pyclass(name = "LayerCost", skip_from_py_object)]
#[derive(Clone)]
struct PyLayerCost {
    #[pyo3(get)]
    flops: f64,
    #[pyo3(get)]
    activation_bytes: f64,
    #[pyo3(get)]
    weight_bytes: f64,
}

#[pyclass(name = "TimeProjection", skip_from_py_object)]
#[derive(Clone)]
struct PyTimeProjection {
    #[pyo3(get)]
    t_dense: f64,
    #[pyo3(get)]
    t_sparse_compute: f64,
    #[pyo3(get)]
    t_sparse_bw: f64,
    #[pyo3(get)]
    t_sparse: f64,
    #[pyo3(get)]
    speedup: f64,
    #[pyo3(get)]
    effective_flops: f64,
}

#[pyclass(name = "SparsityWindow", skip_from_py_object)]
#[derive(Clone)]
struct PySparsityWindow {
    #[pyo3(get)]
    x_lower_useful: f64,
    #[pyo3(get)]
    x_upper_useful: f64,
    #[pyo3(get)]
    has_speedup_potential: bool,
}

#[pyfunction]
fn layout_offset(spec: &PyLayerSpec, c: usize, y: usize, x: usize) -> PyResult<usize> {
    rtensor::layout_offset(&spec.inner, c, y, x).map_err(err)
}

#[pyfunction]
fn pad_input(input: &PyTensor3, spec: &PyLayerSpec) -> PyResult<PyTensor3> {
    Ok(PyTensor3 { inner: rtensor::pad_input(&input.inner, &spec.inner).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (weights, spec, threshold=0.0))]
fn sparsify(
    weights: &PyTensor4,
    spec: &PyLayerSpec,
    threshold: f32,
) -> PyResult<PySparseKernelMatrix> {
    Ok(PySparseKernelMatrix {
        inner: rsparse::sparsify(&weights.inner, &spec.inner, threshold).map_err(err)?,
    })
}

#[pyfunction]
fn densify(kernel: &PySparseKernelMatrix) -> PyTensor4 {
    PyTensor4 { inner: rsparse::densify(&kernel.inner) }
}

#[pyfunction]
#[pyo3(signature = (input, weights, spec, bias=None))]
fn conv_dense_direct(
    input: &PyTensor3,
    weights: &PyTensor4,
    spec: &PyLayerSpec,
    bias: Option<Vec<f32>>,
) -> PyResult<PyTensor3> {
    Ok(PyTensor3 {
        inner: rconv::conv_dense_direct(&input.inner, &weights.inner, &spec.inner, bias.as_deref())
            .map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (input, kernel, spec, bias=None))]
fn conv_sparse_direct(
    input: &PyTensor3,
    kernel: &PySparseKernelMatrix,
    spec: &PyLayerSpec,
    bias: Option<Vec<f32>>,
) -> PyResult<PyTensor3> {
    let tiling = rconv::TilingConfig::for_spec(&spec.inner);
    Ok(PyTensor3 {
        inner: rconv::conv_sparse_direct(
            &input.inner,
            &kernel.inner,
            &spec.inner,
            bias.as_deref(),
            &tiling,
        )
        .map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (input, kernel, spec, bias=None))]
fn conv_sparse_lowered(
    input: &PyTensor3,
    kernel: &PySparseKernelMatrix,
    spec: &PyLayerSpec,
    bias: Option<Vec<f32>>,
) -> PyResult<PyTensor3> {
    Ok(PyTensor3 {
        inner: rconv::conv_sparse_lowered(
            &input.inner,
            &kernel.inner,
            &spec.inner,
            bias.as_deref(),
        )
        .map_err(err)?,
    })
}

/// Lowered input matrix as (rows, cols, flat data).
#[pyfunction]
fn im2col(input: &PyTensor3, spec: &PyLayerSpec) -> PyResult<(usize, usize, Vec<f32>)> {
    let m = rconv::im2col(&input.inner, &spec.inner).map_err(err)?;
    Ok((m.rows, m.cols, m.data))
}

/// Sparse weights (from a dense row-major M x K buffer) times a dense
/// K x B activation matrix. Returns the M x B result flat.
#[pyfunction]
#[pyo3(signature = (weights, m, k, activations, b, bias=None, threshold=0.0))]
#[allow(clippy::too_many_arguments)]
fn fc_spmdm(
    weights: Vec<f32>,
    m: usize,
    k: usize,
    activations: Vec<f32>,
    b: usize,
    bias: Option<Vec<f32>>,
    threshold: f32,
) -> PyResult<Vec<f32>> {
    let csr = rsparse::CsrMatrix::from_dense(&weights, m, k, threshold).map_err(err)?;
    let act = rconv::DenseMatrix::new(k, b, activations).map_err(err)?;
    Ok(rconv::fc_spmdm(&csr, &act, bias.as_deref()).map_err(err)?.data)
}

#[pyfunction]
#[pyo3(signature = (spec, batch=1))]
fn layer_cost(spec: &PyLayerSpec, batch: usize) -> PyLayerCost {
    let c = rmodel::layer_cost(&spec.inner, batch);
    PyLayerCost {
        flops: c.flops,
        activation_bytes: c.activation_bytes,
        weight_bytes: c.weight_bytes,
    }
}

#[pyfunction]
fn project_times(cost: &PyLayerCost, x: f64, profile: &PyPlatformProfile) -> PyResult<PyTimeProjection> {
    let c = rmodel::LayerCost {
        flops: cost.flops,
        activation_bytes: cost.activation_bytes,
        weight_bytes: cost.weight_bytes,
    };
    let t = rmodel::project_times(&c, x, &profile.inner).map_err(err)?;
    Ok(PyTimeProjection {
        t_dense: t.t_dense,
        t_sparse_compute: t.t_sparse_compute,
        t_sparse_bw: t.t_sparse_bw,
        t_sparse: t.t_sparse,
        speedup: t.speedup,
        effective_flops: t.effective_flops,
    })
}

#[pyfunction]
fn useful_sparsity_window(cost: &PyLayerCost, profile: &PyPlatformProfile) -> PySparsityWindow {
    let c = rmodel::LayerCost {
        flops: cost.flops,
        activation_bytes: cost.activation_bytes,
        weight_bytes: cost.weight_bytes,
    };
    let w = rmodel::useful_sparsity_window(&c, &profile.inner);
    PySparsityWindow {
        x_lower_useful: w.x_lower_useful,
        x_upper_useful: w.x_upper_useful,
        has_speedup_potential: w.has_speedup_potential,
    }
}

/// "prunable-for-speed", "bandwidth-bound-always", or "no-benefit".
#[pyfunction]
#[pyo3(signature = (spec, profile, batch=1))]
fn classify_layer(spec: &PyLayerSpec, profile: &PyPlatformProfile, batch: usize) -> String {
    match rmodel::classify_layer(&spec.inner, batch, &profile.inner) {
        rmodel::LayerClass::PrunableForSpeed => "prunable-for-speed".into(),
        rmodel::LayerClass::BandwidthBoundAlways => "bandwidth-bound-always".into(),
        rmodel::LayerClass::NoBenefit => "no-benefit".into(),
    }
}

/// AlexNet convolution presets: "alexnet-conv2" .. "alexnet-conv5".
#[pyfunction]
fn alexnet_preset(name: &str) -> PyResult<PyLayerSpec> {
    sparseconv::bench::alexnet_preset(name)
        .map(|inner| PyLayerSpec { inner })
        .ok_or_else(|| PyValueError::new_err(format!("unknown preset {name}")))
}

#[pymodule]
fn sparseconv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLayerSpec>()?;
    m.add_class::<PyTensor3>()?;
    m.add_class::<PyTensor4>()?;
    m.add_class::<PySparseKernelMatrix>()?;
    m.add_class::<PyPlatformProfile>()?;
    m.add_class::<PyLayerCost>()?;
    m.add_class::<PyTimeProjection>()?;
    m.add_class::<PySparsityWindow>()?;
    m.add_function(wrap_pyfunction!(layout_offset, m)?)?;
    m.add_function(wrap_pyfunction!(pad_input, m)?)?;
    m.add_function(wrap_pyfunction!(sparsify, m)?)?;
    m.add_function(wrap_pyfunction!(densify, m)?)?;
    m.add_function(wrap_pyfunction!(conv_dense_direct, m)?)?;
    m.add_function(wrap_pyfunction!(conv_sparse_direct, m)?)?;
    m.add_function(wrap_pyfunction!(conv_sparse_lowered, m)?)?;
    m.add_function(wrap_pyfunction!(im2col, m)?)?;
    m.add_function(wrap_pyfunction!(fc_spmdm, m)?)?;
    m.add_function(wrap_pyfunction!(layer_cost, m)?)?;
    m.add_function(wrap_pyfunction!(project_times, m)?)?;
    m.add_function(wrap_pyfunction!(useful_sparsity_window, m)?)?;
    m.add_function(wrap_pyfunction!(classify_layer, m)?)?;
    m.add_function(wrap_pyfunction!(alexnet_preset, m)?)?;
    Ok(())
}
