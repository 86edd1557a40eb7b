//! Roofline-style analytical model for sparse convolution.
//!
//! A layer is characterized by its dense FLOP count `C`, activation traffic
//! `S_A`, and weight size `S_W`; a machine by its achievable compute rate `F`
//! and bandwidth `B` plus the sparse-kernel overheads `alpha` (compute) and
//! `beta` (storage, index bytes per value byte). Projected times at non-zero
//! density `x`:
//!
//! ```text
//! t_dense          = C / F
//! t_sparse_compute = alpha * x * C / F
//! t_sparse_bw      = (S_A + beta * x * S_W) / B
//! t_sparse         = max(t_sparse_compute, t_sparse_bw)
//! speedup          = t_dense / t_sparse
//! ```
//!
//! From these fall out the two ends of the useful density window: above
//! `1/alpha` the sparse kernel is slower than dense, and below the
//! compute/bandwidth crossover extra sparsity buys nothing.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::LayerSpec;

/// Machine characterization. `flops` in FLOP/s, `bandwidth` in B/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformProfile {
    pub name: String,
    pub flops: f64,
    pub bandwidth: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl PlatformProfile {
    pub fn new(name: &str, flops: f64, bandwidth: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = PlatformProfile { name: name.to_string(), flops, bandwidth, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.flops > 0.0 && self.bandwidth > 0.0) {
            return Err(Error::InvalidArgument("profile needs flops > 0 and bandwidth > 0".into()));
        }
        if !(self.alpha >= 1.0 && self.beta >= 1.0) {
            return Err(Error::InvalidArgument("profile needs alpha >= 1 and beta >= 1".into()));
        }
        Ok(())
    }

    /// Low-power x86 class machine: 62 GFLOP/s, 15 GB/s, low sparse overhead.
    pub fn atom() -> Self {
        PlatformProfile { name: "atom".into(), flops: 62e9, bandwidth: 15e9, alpha: 1.2, beta: 2.0 }
    }

    /// Broadwell server class machine: 2.15 TFLOP/s, 122 GB/s.
    pub fn bdw() -> Self {
        PlatformProfile { name: "bdw".into(), flops: 2150e9, bandwidth: 122e9, alpha: 3.0, beta: 2.0 }
    }

    /// Wide-SIMD manycore class machine: 4.54 TFLOP/s, 480 GB/s.
    pub fn knl() -> Self {
        PlatformProfile { name: "knl".into(), flops: 4540e9, bandwidth: 480e9, alpha: 3.0, beta: 2.0 }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "atom" => Some(Self::atom()),
            "bdw" => Some(Self::bdw()),
            "knl" => Some(Self::knl()),
            _ => None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: PlatformProfile = serde_json::from_str(&fs::read_to_string(path)?)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Dense work and traffic of one layer invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    /// FLOPs of the dense convolution, counting multiply and add separately.
    pub flops: f64,
    /// Input plus output activation bytes. The input side is counted at its
    /// padded extent, which is what the kernels actually stream.
    pub activation_bytes: f64,
    /// Weight tensor bytes, counted once regardless of batch.
    pub weight_bytes: f64,
}

/// How weight traffic scales with the batch in the bandwidth term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightTraffic {
    /// Weights are read once for the whole batch (cached across images).
    #[default]
    OncePerBatch,
    /// Every image re-streams the full weight tensor.
    PerImage,
}

pub fn layer_cost(spec: &LayerSpec, batch: usize) -> LayerCost {
    layer_cost_with(spec, batch, WeightTraffic::OncePerBatch)
}

pub fn layer_cost_with(spec: &LayerSpec, batch: usize, traffic: WeightTraffic) -> LayerCost {
    let b = batch.max(1) as f64;
    let macs = (spec.out_channels * spec.in_channels * spec.kernel_h * spec.kernel_w) as f64
        * (spec.out_h() * spec.out_w()) as f64;
    let input_elems = (spec.in_channels * spec.padded_h() * spec.padded_w()) as f64;
    let output_elems = spec.output_len() as f64;
    let weight_elems = spec.weight_len() as f64;
    LayerCost {
        flops: 2.0 * macs * b,
        activation_bytes: 4.0 * b * (input_elems + output_elems),
        weight_bytes: 4.0
            * weight_elems
            * match traffic {
                WeightTraffic::OncePerBatch => 1.0,
                WeightTraffic::PerImage => b,
            },
    }
}

/// Projected execution times and speedup at one density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeProjection {
    pub t_dense: f64,
    pub t_sparse_compute: f64,
    pub t_sparse_bw: f64,
    pub t_sparse: f64,
    pub speedup: f64,
    /// Dense-equivalent FLOP/s: `flops / t_sparse`, zeros included.
    pub effective_flops: f64,
}

pub fn project_times(cost: &LayerCost, x: f64, p: &PlatformProfile) -> Result<TimeProjection> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::InvalidArgument(format!("density x = {x} outside (0, 1]")));
    }
    let t_dense = cost.flops / p.flops;
    let t_sparse_compute = p.alpha * x * cost.flops / p.flops;
    let t_sparse_bw = (cost.activation_bytes + p.beta * x * cost.weight_bytes) / p.bandwidth;
    let t_sparse = t_sparse_compute.max(t_sparse_bw);
    Ok(TimeProjection {
        t_dense,
        t_sparse_compute,
        t_sparse_bw,
        t_sparse,
        speedup: t_dense / t_sparse,
        effective_flops: cost.flops / t_sparse,
    })
}

/// The density range in which extra sparsity still buys speed.
///
/// `x_upper_useful = 1/alpha` is the density above which the sparse kernel is
/// slower than dense. `x_lower_useful` is the compute/bandwidth crossover;
/// below it the layer is bandwidth bound and further pruning stops helping.
/// When the crossover has no positive solution the layer is bandwidth bound
/// at every density and `x_lower_useful` is infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityWindow {
    pub x_lower_useful: f64,
    pub x_upper_useful: f64,
    pub has_speedup_potential: bool,
}

pub fn useful_sparsity_window(cost: &LayerCost, p: &PlatformProfile) -> SparsityWindow {
    let x_upper = 1.0 / p.alpha;
    let denom = p.alpha * cost.flops * p.bandwidth / p.flops - p.beta * cost.weight_bytes;
    let x_lower = if denom > 0.0 { cost.activation_bytes / denom } else { f64::INFINITY };
    // activation streaming alone must beat dense compute, and the crossover
    // must sit below the profitability bound, otherwise no density is both
    // compute bound and faster than dense
    let t_dense = cost.flops / p.flops;
    let streaming_floor = cost.activation_bytes / p.bandwidth;
    let has_speedup_potential = streaming_floor < t_dense && x_lower < x_upper;
    SparsityWindow { x_lower_useful: x_lower, x_upper_useful: x_upper, has_speedup_potential }
}

/// Classification of a layer for the pruning controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerClass {
    /// A compute-bound sweet spot exists: pruning into the window buys speed.
    PrunableForSpeed,
    /// Some density may beat dense, but the layer never becomes compute
    /// bound in the profitable range.
    BandwidthBoundAlways,
    /// No density beats the dense kernel on this machine.
    NoBenefit,
}

pub fn classify_layer(spec: &LayerSpec, batch: usize, p: &PlatformProfile) -> LayerClass {
    let cost = layer_cost(spec, batch);
    let window = useful_sparsity_window(&cost, p);
    if window.has_speedup_potential {
        return LayerClass::PrunableForSpeed;
    }
    let t_dense = cost.flops / p.flops;
    if cost.activation_bytes / p.bandwidth >= t_dense {
        LayerClass::NoBenefit
    } else {
        LayerClass::BandwidthBoundAlways
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{random_cost_profile, window_grid_oracle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn alexnet_conv5() -> LayerSpec {
        LayerSpec::new(256, 384, 3, 3, 13, 13, 1, 1).unwrap()
    }

    #[test]
    fn presets_match_documented_rates() {
        let atom = PlatformProfile::atom();
        assert_eq!((atom.flops, atom.bandwidth), (62e9, 15e9));
        assert_eq!(atom.alpha, 1.2);
        let bdw = PlatformProfile::bdw();
        assert_eq!((bdw.flops, bdw.bandwidth), (2150e9, 122e9));
        assert_eq!((bdw.alpha, bdw.beta), (3.0, 2.0));
        let knl = PlatformProfile::knl();
        assert_eq!((knl.flops, knl.bandwidth), (4540e9, 480e9));
        assert!(PlatformProfile::preset("bdw").is_some());
        assert!(PlatformProfile::preset("gpu").is_none());
    }

    #[test]
    fn profile_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let p = PlatformProfile::bdw();
        p.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for key in ["name", "flops", "bandwidth", "alpha", "beta"] {
            assert!(text.contains(key), "profile json missing key {key}");
        }
        assert_eq!(PlatformProfile::load(&path).unwrap(), p);
    }

    #[test]
    fn trivial_layer_cost() {
        let spec = LayerSpec::new(1, 1, 1, 1, 1, 1, 1, 0).unwrap();
        let cost = layer_cost(&spec, 1);
        assert_eq!(cost.flops, 2.0);
        assert_eq!(cost.activation_bytes, 8.0);
        assert_eq!(cost.weight_bytes, 4.0);
    }

    #[test]
    fn conv5_flop_count() {
        let cost = layer_cost(&alexnet_conv5(), 1);
        assert_eq!(cost.flops, 299_040_768.0);
        // padded 15x15 input plus 13x13 output
        assert_eq!(cost.activation_bytes, 4.0 * (384.0 * 225.0 + 256.0 * 169.0));
        assert_eq!(cost.weight_bytes, 4.0 * 256.0 * 384.0 * 9.0);
    }

    #[test]
    fn batch_scales_flops_and_activations_only() {
        let spec = alexnet_conv5();
        let c1 = layer_cost(&spec, 1);
        let c2 = layer_cost(&spec, 2);
        assert_eq!(c2.flops, 2.0 * c1.flops);
        assert_eq!(c2.activation_bytes, 2.0 * c1.activation_bytes);
        assert_eq!(c2.weight_bytes, c1.weight_bytes);
        let per_image = layer_cost_with(&spec, 2, WeightTraffic::PerImage);
        assert_eq!(per_image.weight_bytes, 2.0 * c1.weight_bytes);
    }

    #[test]
    fn compute_bound_speedup_is_inverse_alpha_x() {
        let cost = layer_cost(&alexnet_conv5(), 1);
        let p = PlatformProfile::bdw();
        let t = project_times(&cost, 0.09, &p).unwrap();
        assert!(t.t_sparse_compute > t.t_sparse_bw, "expected compute bound at x = 0.09");
        assert!((t.speedup - 1.0 / (3.0 * 0.09)).abs() < 1e-9);
        assert!((t.speedup - 3.70).abs() <= 0.01);
    }

    #[test]
    fn speedup_is_one_at_upper_bound_density() {
        let cost = layer_cost(&alexnet_conv5(), 1);
        let p = PlatformProfile::bdw();
        let t = project_times(&cost, 1.0 / p.alpha, &p).unwrap();
        assert!((t.speedup - 1.0).abs() < 1e-12);
    }

    #[test]
    fn effective_flops_at_full_density_is_f_over_alpha() {
        let cost = layer_cost(&alexnet_conv5(), 1);
        let p = PlatformProfile::bdw();
        let t = project_times(&cost, 1.0, &p).unwrap();
        assert!((t.effective_flops - p.flops / p.alpha).abs() / (p.flops / p.alpha) < 1e-12);
    }

    #[test]
    fn sparse_time_is_monotone_in_density() {
        let cost = layer_cost(&alexnet_conv5(), 1);
        let p = PlatformProfile::bdw();
        let mut prev = 0.0;
        for i in 1..=100 {
            let x = i as f64 / 100.0;
            let t = project_times(&cost, x, &p).unwrap();
            assert!(t.t_sparse >= prev);
            prev = t.t_sparse;
        }
    }

    #[test]
    fn density_out_of_range_is_rejected() {
        let cost = layer_cost(&alexnet_conv5(), 1);
        let p = PlatformProfile::bdw();
        assert!(project_times(&cost, 0.0, &p).is_err());
        assert!(project_times(&cost, -0.1, &p).is_err());
        assert!(project_times(&cost, 1.5, &p).is_err());
    }

    #[test]
    fn conv5_window_tracks_published_bounds() {
        let cost = layer_cost(&alexnet_conv5(), 1);
        let bdw = useful_sparsity_window(&cost, &PlatformProfile::bdw());
        assert!(bdw.has_speedup_potential);
        // crossover near 0.02 on a Xeon-class machine, within a factor of two
        assert!(
            bdw.x_lower_useful >= 0.01 && bdw.x_lower_useful <= 0.04,
            "bdw crossover {}",
            bdw.x_lower_useful
        );
        assert!((bdw.x_upper_useful - 1.0 / 3.0).abs() < 1e-12);

        let atom = useful_sparsity_window(&cost, &PlatformProfile::atom());
        assert!(atom.has_speedup_potential);
        // near 0.01 on an Atom-class machine, within a factor of two
        assert!(
            atom.x_lower_useful >= 0.005 && atom.x_lower_useful <= 0.02,
            "atom crossover {}",
            atom.x_lower_useful
        );
    }

    #[test]
    fn speedup_plateaus_below_crossover() {
        let cost = layer_cost(&alexnet_conv5(), 1);
        let p = PlatformProfile::bdw();
        let w = useful_sparsity_window(&cost, &p);
        let limit = (cost.flops / p.flops) / (cost.activation_bytes / p.bandwidth);
        let s1 = project_times(&cost, w.x_lower_useful / 10.0, &p).unwrap().speedup;
        let s2 = project_times(&cost, w.x_lower_useful / 100.0, &p).unwrap().speedup;
        assert!(s2 >= s1);
        assert!(s2 <= limit);
        // within a few percent of the activation-streaming limit
        assert!(s2 >= 0.9 * limit, "plateau speedup {s2} vs limit {limit}");
    }

    #[test]
    fn classify_named_layers() {
        let bdw = PlatformProfile::bdw();
        assert_eq!(classify_layer(&alexnet_conv5(), 1, &bdw), LayerClass::PrunableForSpeed);
        // low-intensity 1x1 reduction layer
        let reduce = LayerSpec::new(16, 192, 1, 1, 14, 14, 1, 0).unwrap();
        let class = classify_layer(&reduce, 1, &bdw);
        assert!(
            class == LayerClass::NoBenefit || class == LayerClass::BandwidthBoundAlways,
            "got {class:?}"
        );
        // with free bandwidth every layer has a window
        let infinite_bw =
            PlatformProfile::new("wide", 1e12, 1e30, 3.0, 2.0).unwrap();
        assert_eq!(classify_layer(&reduce, 1, &infinite_bw), LayerClass::PrunableForSpeed);
    }

    #[test]
    fn window_matches_grid_oracle_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..10 {
            let (cost, profile) = random_cost_profile(&mut rng);
            let w = useful_sparsity_window(&cost, &profile);
            let oracle = window_grid_oracle(&cost, &profile, 10_000);
            let tol = oracle.grid_step * (1.0 + 1e-9);
            match (w.has_speedup_potential, oracle.lower, oracle.upper) {
                (true, Some(lo), Some(hi)) => {
                    let expected_lo = w.x_lower_useful.max(oracle.grid_min);
                    assert!(
                        lo / expected_lo <= tol && expected_lo / lo <= tol,
                        "lower {lo} vs closed form {expected_lo}"
                    );
                    assert!(
                        hi / w.x_upper_useful <= tol && w.x_upper_useful / hi <= tol,
                        "upper {hi} vs closed form {}",
                        w.x_upper_useful
                    );
                }
                (false, None, None) => {}
                other => panic!("window/oracle disagree: {other:?}"),
            }
        }
    }
}
