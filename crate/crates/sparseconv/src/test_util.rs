//! Shared helpers for unit, integration, and acceptance tests. Not part of
//! the public API.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{LayerCost, PlatformProfile};
use crate::tensor::{LayerSpec, Tensor3, Tensor4};

pub fn random_tensor3(c: usize, h: usize, w: usize, seed: u64) -> Tensor3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..c * h * w).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Tensor3::new(c, h, w, data).unwrap()
}

pub fn random_tensor4(n: usize, c: usize, kh: usize, kw: usize, seed: u64) -> Tensor4 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..n * c * kh * kw).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Tensor4::new(n, c, kh, kw, data).unwrap()
}

/// Normalized L-infinity relative error: largest elementwise difference
/// divided by the larger tensor magnitude. Near-cancelled elements are
/// measured against the tensor scale, not their own magnitude, so f32
/// reassociation noise does not read as error.
pub fn max_rel_err(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a
        .iter()
        .chain(b.iter())
        .fold(0.0f32, |m, v| m.max(v.abs()))
        .max(1e-12) as f64;
    a.iter()
        .zip(b)
        .map(|(x, y)| ((x - y).abs() as f64) / scale)
        .fold(0.0, f64::max)
}

pub fn assert_tensors_close(a: &Tensor3, b: &Tensor3, rtol: f64) {
    assert_eq!(
        (a.channels, a.height, a.width),
        (b.channels, b.height, b.width),
        "shape mismatch"
    );
    let err = max_rel_err(a.data(), b.data());
    assert!(err <= rtol, "max relative error {err:.3e} exceeds {rtol:.1e}");
}

/// Random convolution geometry within the property-suite ranges:
/// channels <= 32, spatial extent <= 16, kernel in {1, 3, 5}, stride in
/// {1, 2}, pad in {0, 1, 2}.
pub fn random_conv_spec(rng: &mut ChaCha8Rng) -> LayerSpec {
    loop {
        let n = rng.random_range(1..=32);
        let c = rng.random_range(1..=32);
        let k = [1usize, 3, 5][rng.random_range(0..3)];
        let stride = rng.random_range(1..=2usize);
        let pad = rng.random_range(0..=2usize);
        // choose an output extent first so the geometry divides evenly
        let candidates: Vec<usize> = (1..=16usize)
            .filter_map(|out| {
                let span = (out - 1) * stride + k;
                if span <= 2 * pad {
                    return None;
                }
                let inp = span - 2 * pad;
                (1..=16).contains(&inp).then_some(inp)
            })
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let in_h = candidates[rng.random_range(0..candidates.len())];
        let in_w = candidates[rng.random_range(0..candidates.len())];
        if let Ok(spec) = LayerSpec::new(n, c, k, k, in_h, in_w, stride, pad) {
            return spec;
        }
    }
}

/// Random cost/profile pair with magnitudes spanning realistic layers and
/// machines.
pub fn random_cost_profile(rng: &mut ChaCha8Rng) -> (LayerCost, PlatformProfile) {
    fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
        rng.random_range(lo.ln()..hi.ln()).exp()
    }
    let cost = LayerCost {
        flops: log_uniform(rng, 1e6, 1e10),
        activation_bytes: log_uniform(rng, 1e4, 1e8),
        weight_bytes: log_uniform(rng, 1e3, 1e8),
    };
    let profile = PlatformProfile {
        name: "random".into(),
        flops: log_uniform(rng, 1e10, 1e13),
        bandwidth: log_uniform(rng, 1e9, 1e12),
        alpha: rng.random_range(1.0..8.0),
        beta: rng.random_range(1.0..4.0),
    };
    (cost, profile)
}

/// Result of the brute-force window scan.
pub struct GridWindow {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub grid_step: f64,
    pub grid_min: f64,
}

/// Brute-force window oracle: scan a geometric grid of densities and locate
/// the compute-bound profitable region directly from the time formulas,
/// without the closed-form algebra.
pub fn window_grid_oracle(cost: &LayerCost, p: &PlatformProfile, points: usize) -> GridWindow {
    let (x_min, x_max) = (1e-4f64, 1.0f64);
    let step = (x_max / x_min).powf(1.0 / (points - 1) as f64);
    let t_dense = cost.flops / p.flops;
    let mut lower = None;
    let mut upper = None;
    for i in 0..points {
        let x = x_min * step.powi(i as i32);
        let t_compute = p.alpha * x * cost.flops / p.flops;
        let t_bw = (cost.activation_bytes + p.beta * x * cost.weight_bytes) / p.bandwidth;
        // member of the useful window: compute bound and faster than dense
        if t_compute >= t_bw && t_compute < t_dense {
            if lower.is_none() {
                lower = Some(x);
            }
            upper = Some(x);
        }
    }
    GridWindow { lower, upper, grid_step: step, grid_min: x_min }
}
