//! Machine calibration, sparsity sweeps, and model fitting.
//!
//! The harness measures what the analytical model projects: a dense compute
//! rate from a blocked matmul, achievable bandwidth from a triad stream, and
//! kernel wall times across a density grid. Every timed kernel is validated
//! against the dense reference once per sweep before any timing begins.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv::{
    conv_dense_direct, conv_dense_lowered, conv_sparse_direct, conv_sparse_lowered, fc_spmdm,
    run_batch, sgemm, DenseMatrix, TilingConfig,
};
use crate::error::{Error, Result};
use crate::model::{layer_cost, project_times, LayerCost, PlatformProfile};
use crate::sparse::{sparsify, CsrMatrix};
use crate::tensor::{LayerSpec, Tensor3, Tensor4};
use crate::test_util::max_rel_err;

/// Which kernel a benchmark record timed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelVariant {
    DenseDirect,
    DenseLowered,
    SparseDirect,
    SparseLowered,
    FcSpmdm,
}

/// How synthetic sparse weights are generated for a target density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Gaussian weights pruned by magnitude to hit the target exactly,
    /// ties broken by index. Mirrors what magnitude pruning of a trained
    /// layer produces: unstructured but value-correlated patterns.
    MagnitudePruned,
    /// Uniformly random mask over Gaussian weights, for contrast runs.
    RandomMask,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub layers: Vec<(String, LayerSpec)>,
    /// Densities to measure, each in (0, 1].
    pub grid: Vec<f64>,
    pub batch: usize,
    pub reps: usize,
    pub warmup: usize,
    pub threads: usize,
    pub weight_mode: WeightMode,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("sweep needs at least one layer".into()));
        }
        if self.grid.is_empty() || self.grid.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
            return Err(Error::InvalidArgument("grid densities must lie in (0, 1]".into()));
        }
        if self.reps < 3 {
            return Err(Error::InvalidArgument("need reps >= 3".into()));
        }
        if self.batch == 0 || self.threads == 0 {
            return Err(Error::InvalidArgument("batch and threads must be >= 1".into()));
        }
        Ok(())
    }
}

/// One timed kernel at one density. Times are medians over the repetitions,
/// for the whole batch. `effective_flops` counts the dense-equivalent work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub layer: String,
    pub density: f64,
    pub variant: KernelVariant,
    pub threads: usize,
    pub batch: usize,
    pub flops: f64,
    pub activation_bytes: f64,
    pub weight_bytes: f64,
    pub median_time_s: f64,
    pub effective_flops: f64,
    pub speedup_vs_dense: f64,
    pub model_time_s: f64,
    pub model_effective_flops: f64,
}

/// Geometric density grid from `from` down to `to` (inclusive).
pub fn geometric_grid(from: f64, to: f64, steps: usize) -> Result<Vec<f64>> {
    if !(from > 0.0 && to > 0.0 && from <= 1.0 && to <= 1.0) || steps < 1 {
        return Err(Error::InvalidArgument("grid bounds must lie in (0, 1]".into()));
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    let ratio = (to / from).powf(1.0 / (steps - 1) as f64);
    Ok((0..steps).map(|i| from * ratio.powi(i as i32)).collect())
}

fn gaussian_values(len: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let normal = Normal::new(0.0f32, 1.0).expect("valid sigma");
    (0..len)
        .map(|_| loop {
            let v = normal.sample(rng);
            if v != 0.0 {
                break v;
            }
        })
        .collect()
}

/// Gaussian weights with exactly `round(x * len)` survivors, keeping the
/// largest magnitudes; ties broken by index.
pub fn magnitude_pruned_weights(spec: &LayerSpec, x: f64, seed: u64) -> Tensor4 {
    let len = spec.weight_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = gaussian_values(len, &mut rng);
    let keep = ((x * len as f64).round() as usize).min(len);
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| {
        values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b))
    });
    for &i in &order[keep..] {
        values[i] = 0.0;
    }
    Tensor4::new(spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w, values)
        .expect("generated weights")
}

/// Gaussian weights with a uniformly random survivor mask of the same size.
pub fn random_mask_weights(spec: &LayerSpec, x: f64, seed: u64) -> Tensor4 {
    let len = spec.weight_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = gaussian_values(len, &mut rng);
    let keep = ((x * len as f64).round() as usize).min(len);
    let mut order: Vec<usize> = (0..len).collect();
    for i in 0..len {
        let j = rng.random_range(i..len);
        order.swap(i, j);
    }
    for &i in &order[keep..] {
        values[i] = 0.0;
    }
    Tensor4::new(spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w, values)
        .expect("generated weights")
}

pub fn generate_weights(spec: &LayerSpec, x: f64, mode: WeightMode, seed: u64) -> Tensor4 {
    match mode {
        WeightMode::MagnitudePruned => magnitude_pruned_weights(spec, x, seed),
        WeightMode::RandomMask => random_mask_weights(spec, x, seed),
    }
}

// ---------------------------------------------------------------------------
// timing

const MIN_MEASURE_S: f64 = 0.005;

/// Median wall time of `reps` measurements after `warmup` calls. If a single
/// call is too short for the timer, it is repeated inside each measurement
/// and the average per call is reported.
pub fn time_kernel<F: FnMut()>(reps: usize, warmup: usize, mut f: F) -> f64 {
    for _ in 0..warmup {
        f();
    }
    let probe = Instant::now();
    f();
    let once = probe.elapsed().as_secs_f64();
    let inner = if once >= MIN_MEASURE_S {
        1
    } else {
        (MIN_MEASURE_S / once.max(1e-9)).ceil() as usize
    };
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        for _ in 0..inner {
            f();
        }
        times.push(start.elapsed().as_secs_f64() / inner as f64);
    }
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

// ---------------------------------------------------------------------------
// calibration

/// Best rate over contiguous measurement windows: run `pass` repeatedly for
/// at least `min_seconds` of work, fold passes into ~100 ms windows, and
/// return the fastest window. Reporting the best trial is the standard
/// stream-benchmark convention and shields the estimate from scheduler noise.
fn best_window_rate(work_per_pass: f64, min_seconds: f64, mut pass: impl FnMut()) -> f64 {
    const WINDOW_S: f64 = 0.1;
    pass(); // warm
    let mut best = 0.0f64;
    let total_start = Instant::now();
    let mut window_start = Instant::now();
    let mut window_work = 0.0f64;
    loop {
        pass();
        window_work += work_per_pass;
        let w = window_start.elapsed().as_secs_f64();
        if w >= WINDOW_S {
            best = best.max(window_work / w);
            window_start = Instant::now();
            window_work = 0.0;
        }
        if total_start.elapsed().as_secs_f64() >= min_seconds {
            break;
        }
    }
    if window_work > 0.0 {
        let w = window_start.elapsed().as_secs_f64();
        if w >= WINDOW_S / 2.0 {
            best = best.max(window_work / w);
        }
    }
    best
}

/// Achievable dense compute rate, measured with a blocked matmul large
/// enough to stay compute bound, run for at least `min_seconds`.
pub fn calibrate_flops(threads: usize, min_seconds: f64) -> Result<f64> {
    let n = 320usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0xF10);
    let a: Vec<f32> = (0..n * n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let b: Vec<f32> = (0..n * n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let flops_per_pass = 2.0 * (n as f64).powi(3);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let mut out = vec![0.0f32; n * n];
    let rows_per_chunk = n.div_ceil(threads.max(1));
    let rate = best_window_rate(flops_per_pass, min_seconds, || {
        run_gemm_pass(&pool, threads, rows_per_chunk, n, &a, &b, &mut out);
    });
    std::hint::black_box(&out);
    Ok(rate)
}

fn run_gemm_pass(
    pool: &rayon::ThreadPool,
    threads: usize,
    rows_per_chunk: usize,
    n: usize,
    a: &[f32],
    b: &[f32],
    out: &mut [f32],
) {
    out.fill(0.0);
    if threads <= 1 {
        sgemm(n, n, n, a, b, out);
    } else {
        pool.install(|| {
            out.par_chunks_mut(rows_per_chunk * n)
                .enumerate()
                .for_each(|(chunk, orows)| {
                    let row0 = chunk * rows_per_chunk;
                    let rows = orows.len() / n;
                    sgemm(rows, n, n, &a[row0 * n..(row0 + rows) * n], b, orows);
                });
        });
    }
}

/// Achievable memory bandwidth from a triad stream (`a = b + s * c`) over
/// arrays far larger than the last-level cache. Counts three 4-byte accesses
/// per element per pass.
pub fn calibrate_bandwidth(threads: usize, min_seconds: f64) -> Result<f64> {
    let n = 16 * 1024 * 1024usize; // 64 MiB per array
    let mut a = vec![0.0f32; n];
    let b = vec![1.5f32; n];
    let c = vec![0.25f32; n];
    let scalar = 3.0f32;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let chunk = n.div_ceil(threads.max(1));
    let triad_pass = |a: &mut [f32]| {
        if threads <= 1 {
            for ((x, y), z) in a.iter_mut().zip(&b).zip(&c) {
                *x = *y + scalar * *z;
            }
        } else {
            pool.install(|| {
                a.par_chunks_mut(chunk)
                    .zip(b.par_chunks(chunk))
                    .zip(c.par_chunks(chunk))
                    .for_each(|((x, y), z)| {
                        for ((xi, yi), zi) in x.iter_mut().zip(y).zip(z) {
                            *xi = *yi + scalar * *zi;
                        }
                    });
            });
        }
    };
    let bytes_per_pass = 3.0 * 4.0 * n as f64;
    let rate = best_window_rate(bytes_per_pass, min_seconds, || triad_pass(&mut a));
    std::hint::black_box(&a);
    Ok(rate)
}

/// Repeated calibration runs for both rates. Errs when the spread across
/// runs exceeds 20%, which signals a machine too noisy to characterize.
pub fn calibrate(threads: usize, runs: usize, min_seconds: f64) -> Result<PlatformProfile> {
    if runs < 1 {
        return Err(Error::InvalidArgument("need at least one calibration run".into()));
    }
    let mut flops = Vec::with_capacity(runs);
    let mut bandwidth = Vec::with_capacity(runs);
    for _ in 0..runs {
        flops.push(calibrate_flops(threads, min_seconds)?);
        bandwidth.push(calibrate_bandwidth(threads, min_seconds)?);
    }
    for (name, vals) in [("flops", &flops), ("bandwidth", &bandwidth)] {
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(0.0, f64::max);
        if max / min > 1.2 {
            return Err(Error::CalibrationUnstable(format!(
                "{name} spread {:.1}% exceeds 20% across {runs} runs",
                (max / min - 1.0) * 100.0
            )));
        }
    }
    let median = |vals: &mut Vec<f64>| {
        vals.sort_by(f64::total_cmp);
        vals[vals.len() / 2]
    };
    // four significant digits; measurement noise makes more meaningless
    let round4 = |v: f64| {
        let mag = 10f64.powf(v.log10().floor() - 3.0);
        (v / mag).round() * mag
    };
    PlatformProfile::new(
        "calibrated",
        round4(median(&mut flops)),
        round4(median(&mut bandwidth)),
        3.0,
        2.0,
    )
}

// ---------------------------------------------------------------------------
// sweeps

fn is_fc_shaped(spec: &LayerSpec) -> bool {
    spec.kernel_h == 1 && spec.kernel_w == 1 && spec.in_h == 1 && spec.in_w == 1
}

struct RecordBuilder {
    layer: String,
    cost: LayerCost,
    threads: usize,
    batch: usize,
    dense_time: f64,
}

impl RecordBuilder {
    fn build(
        &self,
        variant: KernelVariant,
        density: f64,
        median_time_s: f64,
        profile: &PlatformProfile,
    ) -> BenchRecord {
        let model = project_times(&self.cost, density.clamp(f64::MIN_POSITIVE, 1.0), profile)
            .expect("density in range");
        let (model_time_s, model_effective) = match variant {
            KernelVariant::DenseDirect | KernelVariant::DenseLowered => {
                (model.t_dense, self.cost.flops / model.t_dense)
            }
            _ => (model.t_sparse, model.effective_flops),
        };
        BenchRecord {
            layer: self.layer.clone(),
            density,
            variant,
            threads: self.threads,
            batch: self.batch,
            flops: self.cost.flops,
            activation_bytes: self.cost.activation_bytes,
            weight_bytes: self.cost.weight_bytes,
            median_time_s,
            effective_flops: self.cost.flops / median_time_s,
            speedup_vs_dense: self.dense_time / median_time_s,
            model_time_s,
            model_effective_flops: model_effective,
        }
    }
}

/// Time every kernel variant for each layer across the density grid.
///
/// For each layer the sparse kernels are validated against the dense
/// reference once (correctness gate) before any timing. Dense baselines are
/// timed once per layer; sparse variants once per grid density. Record
/// densities are the achieved (post-rounding) densities.
pub fn run_sweep(sweep: &SweepSpec, profile: &PlatformProfile) -> Result<Vec<BenchRecord>> {
    sweep.validate()?;
    profile.validate()?;
    let mut records = Vec::new();
    for (li, (name, spec)) in sweep.layers.iter().enumerate() {
        let seed = sweep.seed.wrapping_add(li as u64 * 7919);
        if is_fc_shaped(spec) {
            records.extend(sweep_fc_layer(sweep, profile, name, spec, seed)?);
        } else {
            records.extend(sweep_conv_layer(sweep, profile, name, spec, seed)?);
        }
    }
    Ok(records)
}

fn sweep_conv_layer(
    sweep: &SweepSpec,
    profile: &PlatformProfile,
    name: &str,
    spec: &LayerSpec,
    seed: u64,
) -> Result<Vec<BenchRecord>> {
    let cost = layer_cost(spec, sweep.batch);
    let tiling = TilingConfig::for_spec(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Tensor3> = (0..sweep.batch)
        .map(|_| {
            let data: Vec<f32> =
                (0..spec.input_len()).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            Tensor3::new(spec.in_channels, spec.in_h, spec.in_w, data).expect("input")
        })
        .collect();

    // correctness gate: validate both sparse kernels against the dense
    // reference at the first grid density before any timing
    let gate_weights = generate_weights(spec, sweep.grid[0], sweep.weight_mode, seed ^ 0x6A7E);
    let gate_kernel = sparsify(&gate_weights, spec, 0.0)?;
    let oracle = conv_dense_direct(&inputs[0], &gate_weights, spec, None)?;
    for (label, out) in [
        ("sparse-direct", conv_sparse_direct(&inputs[0], &gate_kernel, spec, None, &tiling)?),
        ("sparse-lowered", conv_sparse_lowered(&inputs[0], &gate_kernel, spec, None)?),
        ("dense-lowered", conv_dense_lowered(&inputs[0], &gate_weights, spec, None)?),
    ] {
        let err = max_rel_err(out.data(), oracle.data());
        if err > 1e-5 {
            return Err(Error::ValidationGate(format!(
                "{label} deviates from dense reference by {err:.2e} on layer {name}"
            )));
        }
    }

    let time_variant = |f: &dyn Fn() -> Vec<Tensor3>| {
        time_kernel(sweep.reps, sweep.warmup, || {
            std::hint::black_box(f());
        })
    };

    let dense_weights = generate_weights(spec, 1.0, sweep.weight_mode, seed ^ 0xDE);
    let dense_time = time_variant(&|| {
        run_batch(&inputs, sweep.threads, |img| {
            conv_dense_direct(img, &dense_weights, spec, None)
        })
        .expect("dense direct")
    });
    let dense_lowered_time = time_variant(&|| {
        run_batch(&inputs, sweep.threads, |img| {
            conv_dense_lowered(img, &dense_weights, spec, None)
        })
        .expect("dense lowered")
    });

    let builder = RecordBuilder {
        layer: name.to_string(),
        cost,
        threads: sweep.threads,
        batch: sweep.batch,
        dense_time,
    };
    let mut records = vec![
        builder.build(KernelVariant::DenseDirect, 1.0, dense_time, profile),
        builder.build(KernelVariant::DenseLowered, 1.0, dense_lowered_time, profile),
    ];

    for (gi, &x) in sweep.grid.iter().enumerate() {
        let weights = generate_weights(spec, x, sweep.weight_mode, seed ^ (0x9E37 + gi as u64));
        let kernel = sparsify(&weights, spec, 0.0)?;
        let achieved = kernel.density();
        let t_direct = time_variant(&|| {
            run_batch(&inputs, sweep.threads, |img| {
                conv_sparse_direct(img, &kernel, spec, None, &tiling)
            })
            .expect("sparse direct")
        });
        records.push(builder.build(KernelVariant::SparseDirect, achieved, t_direct, profile));
        let t_lowered = time_variant(&|| {
            run_batch(&inputs, sweep.threads, |img| {
                conv_sparse_lowered(img, &kernel, spec, None)
            })
            .expect("sparse lowered")
        });
        records.push(builder.build(KernelVariant::SparseLowered, achieved, t_lowered, profile));
    }
    Ok(records)
}

fn sweep_fc_layer(
    sweep: &SweepSpec,
    profile: &PlatformProfile,
    name: &str,
    spec: &LayerSpec,
    seed: u64,
) -> Result<Vec<BenchRecord>> {
    let (m, k) = (spec.out_channels, spec.in_channels);
    let cost = layer_cost(spec, sweep.batch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let act_data: Vec<f32> =
        (0..k * sweep.batch).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let act = DenseMatrix::new(k, sweep.batch, act_data)?;

    // gate: sparse product must match the dense product
    let gate_weights = generate_weights(spec, sweep.grid[0], sweep.weight_mode, seed ^ 0x6A7E);
    let gate_csr = CsrMatrix::from_dense(gate_weights.data(), m, k, 0.0)?;
    let sparse_out = fc_spmdm(&gate_csr, &act, None)?;
    let mut dense_out = vec![0.0f32; m * sweep.batch];
    sgemm(m, sweep.batch, k, gate_weights.data(), &act.data, &mut dense_out);
    let err = max_rel_err(&sparse_out.data, &dense_out);
    if err > 1e-5 {
        return Err(Error::ValidationGate(format!(
            "fc-spmdm deviates from dense product by {err:.2e} on layer {name}"
        )));
    }

    let dense_weights = generate_weights(spec, 1.0, sweep.weight_mode, seed ^ 0xDE);
    let mut out = vec![0.0f32; m * sweep.batch];
    let dense_time = time_kernel(sweep.reps, sweep.warmup, || {
        out.fill(0.0);
        sgemm(m, sweep.batch, k, dense_weights.data(), &act.data, &mut out);
        std::hint::black_box(&out);
    });
    let builder = RecordBuilder {
        layer: name.to_string(),
        cost,
        threads: sweep.threads,
        batch: sweep.batch,
        dense_time,
    };
    let mut records =
        vec![builder.build(KernelVariant::DenseDirect, 1.0, dense_time, profile)];
    for (gi, &x) in sweep.grid.iter().enumerate() {
        let weights = generate_weights(spec, x, sweep.weight_mode, seed ^ (0x9E37 + gi as u64));
        let csr = CsrMatrix::from_dense(weights.data(), m, k, 0.0)?;
        let achieved = csr.density();
        let t = time_kernel(sweep.reps, sweep.warmup, || {
            std::hint::black_box(fc_spmdm(&csr, &act, None).expect("fc spmdm"));
        });
        records.push(builder.build(KernelVariant::FcSpmdm, achieved, t, profile));
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// alpha fitting

/// Least-squares fit of the sparse compute overhead from measured
/// sparse-direct times: `t = alpha * x * C / F` over the grid points the
/// model says are compute bound. Needs at least two such points.
pub fn fit_alpha(records: &[BenchRecord], profile: &PlatformProfile) -> Result<f64> {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    let mut points = 0usize;
    for r in records {
        if r.variant != KernelVariant::SparseDirect {
            continue;
        }
        let cost = LayerCost {
            flops: r.flops,
            activation_bytes: r.activation_bytes,
            weight_bytes: r.weight_bytes,
        };
        let t = project_times(&cost, r.density.clamp(f64::MIN_POSITIVE, 1.0), profile)?;
        if t.t_sparse_compute <= t.t_sparse_bw {
            continue;
        }
        let u = r.density * r.flops / profile.flops;
        num += r.median_time_s * u;
        den += u * u;
        points += 1;
    }
    if points < 2 {
        return Err(Error::Underdetermined(format!(
            "only {points} compute-bound sparse-direct points; need >= 2"
        )));
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// record CSV

pub fn write_records<W: std::io::Write>(w: W, records: &[BenchRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_records<R: std::io::Read>(r: R) -> Result<Vec<BenchRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn save_records(path: &Path, records: &[BenchRecord]) -> Result<()> {
    write_records(std::fs::File::create(path)?, records)
}

pub fn load_records(path: &Path) -> Result<Vec<BenchRecord>> {
    read_records(std::fs::File::open(path)?)
}

// ---------------------------------------------------------------------------
// layer presets

/// Standard AlexNet convolution geometries (group structure flattened).
pub fn alexnet_preset(name: &str) -> Option<LayerSpec> {
    let spec = |n, c, k, h, pad| LayerSpec::new(n, c, k, k, h, h, 1, pad).expect("preset");
    match name {
        "alexnet-conv2" => Some(spec(256, 96, 5, 27, 2)),
        "alexnet-conv3" => Some(spec(384, 256, 3, 13, 1)),
        "alexnet-conv4" => Some(spec(384, 384, 3, 13, 1)),
        "alexnet-conv5" => Some(spec(256, 384, 3, 13, 1)),
        _ => None,
    }
}

pub fn alexnet_conv_presets() -> Vec<(String, LayerSpec)> {
    ["alexnet-conv2", "alexnet-conv3", "alexnet-conv4", "alexnet-conv5"]
        .iter()
        .map(|n| (n.to_string(), alexnet_preset(n).expect("preset")))
        .collect()
}
