//! Guided pruning controller.
//!
//! The controller classifies every layer against the performance model up
//! front and excludes layers with no speedup potential. While training
//! proceeds, it watches per-layer density and applies two rules at each
//! periodic check:
//!
//! * density at or below the compute/bandwidth crossover: further pruning
//!   buys nothing, stop pruning the layer;
//! * density stabilized at or above the profitability bound `1/alpha`:
//!   sparsity this low will never beat the dense kernel, stop pruning and
//!   restore the saved dense weights.
//!
//! The controller only returns directives; applying them to weights is the
//! trainer's job, which keeps the controller replayable from recorded
//! trajectories.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    classify_layer, layer_cost, project_times, useful_sparsity_window, LayerClass, LayerCost,
    PlatformProfile, SparsityWindow,
};
use crate::tensor::LayerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PruneStatus {
    /// Never pruned: no speedup potential, or manually excluded.
    Excluded,
    /// Being actively pruned.
    Active,
    /// Reached the useful-sparsity crossover; zero pattern frozen.
    StoppedSaturated,
    /// Stabilized above the profitability bound; dense weights restored.
    RestoredDense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Directive {
    Continue,
    StopPruning,
    RestoreDense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneDirective {
    pub layer: String,
    pub directive: Directive,
}

/// Per-layer controller state.
#[derive(Debug, Clone)]
pub struct PruneLayerState {
    pub id: String,
    pub class: LayerClass,
    pub window: SparsityWindow,
    pub status: PruneStatus,
    /// (iteration, density) observations, recorded while the layer is active.
    pub trajectory: Vec<(u64, f64)>,
    /// Original dense weights, kept so they can be restored.
    pub dense_snapshot: Option<Vec<f32>>,
    cost: LayerCost,
    stable_checks: usize,
}

impl PruneLayerState {
    pub fn final_density(&self) -> f64 {
        match self.status {
            PruneStatus::Excluded | PruneStatus::RestoredDense => 1.0,
            _ => self.trajectory.last().map_or(1.0, |(_, x)| *x),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GslConfig {
    /// Iterations between periodic checks.
    pub check_period: u64,
    /// Consecutive stable observations required before a restore fires.
    pub stabilization_window: usize,
    /// Density change below this counts as stable.
    pub stabilization_epsilon: f64,
    /// Layer ids excluded by hand (e.g. early layers that never reach
    /// useful sparsity in practice, which the model alone cannot predict).
    #[serde(default)]
    pub manual_exclude: Vec<String>,
}

impl Default for GslConfig {
    fn default() -> Self {
        GslConfig {
            check_period: 100,
            stabilization_window: 3,
            stabilization_epsilon: 0.01,
            manual_exclude: Vec::new(),
        }
    }
}

impl GslConfig {
    pub fn validate(&self) -> Result<()> {
        if self.check_period == 0 || self.stabilization_window == 0 {
            return Err(Error::InvalidArgument("GSL periods must be >= 1".into()));
        }
        if !(self.stabilization_epsilon > 0.0) {
            return Err(Error::InvalidArgument("stabilization epsilon must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GslController {
    states: Vec<PruneLayerState>,
    index: HashMap<String, usize>,
    config: GslConfig,
    profile: PlatformProfile,
}

impl GslController {
    /// Classify every layer and set up pruning state. Layers without speedup
    /// potential (and manually excluded ones) start and stay `Excluded`.
    pub fn init(
        layers: &[(String, LayerSpec)],
        batch: usize,
        profile: &PlatformProfile,
        config: GslConfig,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("empty layer list".into()));
        }
        config.validate()?;
        profile.validate()?;
        let mut states = Vec::with_capacity(layers.len());
        let mut index = HashMap::new();
        for (id, spec) in layers {
            if index.contains_key(id) {
                return Err(Error::InvalidArgument(format!("duplicate layer id {id}")));
            }
            let cost = layer_cost(spec, batch);
            let class = classify_layer(spec, batch, profile);
            let window = useful_sparsity_window(&cost, profile);
            let excluded = !window.has_speedup_potential
                || config.manual_exclude.iter().any(|m| m == id);
            index.insert(id.clone(), states.len());
            states.push(PruneLayerState {
                id: id.clone(),
                class,
                window,
                status: if excluded { PruneStatus::Excluded } else { PruneStatus::Active },
                trajectory: Vec::new(),
                dense_snapshot: None,
                cost,
                stable_checks: 0,
            });
        }
        Ok(GslController { states, index, config, profile: profile.clone() })
    }

    pub fn states(&self) -> &[PruneLayerState] {
        &self.states
    }

    pub fn config(&self) -> &GslConfig {
        &self.config
    }

    /// Attach the dense weights of a layer so a restore can reproduce them.
    pub fn set_dense_snapshot(&mut self, id: &str, weights: Vec<f32>) -> Result<()> {
        let i = *self.index.get(id).ok_or_else(|| Error::UnknownLayer(id.to_string()))?;
        self.states[i].dense_snapshot = Some(weights);
        Ok(())
    }

    /// Periodic check. Records observations for active layers and returns
    /// one directive per active layer; non-active layers emit nothing.
    pub fn step(
        &mut self,
        iteration: u64,
        observed_density: &[(String, f64)],
    ) -> Result<Vec<PruneDirective>> {
        let mut directives = Vec::new();
        for (id, density) in observed_density {
            let i = *self.index.get(id).ok_or_else(|| Error::UnknownLayer(id.clone()))?;
            let state = &mut self.states[i];
            if state.status != PruneStatus::Active {
                continue;
            }
            if !(0.0..=1.0).contains(density) {
                return Err(Error::InvalidArgument(format!(
                    "density {density} for layer {id} outside [0, 1]"
                )));
            }
            let stable = state
                .trajectory
                .last()
                .is_some_and(|(_, prev)| (prev - density).abs() < self.config.stabilization_epsilon);
            state.stable_checks = if stable { state.stable_checks + 1 } else { 0 };
            state.trajectory.push((iteration, *density));

            let directive = if *density <= state.window.x_lower_useful {
                state.status = PruneStatus::StoppedSaturated;
                Directive::StopPruning
            } else if *density >= state.window.x_upper_useful
                && state.stable_checks >= self.config.stabilization_window
            {
                state.status = PruneStatus::RestoredDense;
                Directive::RestoreDense
            } else {
                Directive::Continue
            };
            directives.push(PruneDirective { layer: id.clone(), directive });
        }
        Ok(directives)
    }

    /// Summarize final state and model-projected speedups.
    pub fn report(&self) -> GslReport {
        let mut layers = Vec::with_capacity(self.states.len());
        let mut dense_time = 0.0;
        let mut executed_time = 0.0;
        for s in &self.states {
            let x = s.final_density();
            let t_dense = s.cost.flops / self.profile.flops;
            // excluded and restored layers run the dense kernel
            let (t_exec, projected_speedup) = match s.status {
                PruneStatus::Excluded | PruneStatus::RestoredDense => (t_dense, 1.0),
                _ => {
                    let t = project_times(&s.cost, x.max(f64::MIN_POSITIVE), &self.profile)
                        .expect("density in range");
                    (t.t_sparse, t.speedup)
                }
            };
            dense_time += t_dense;
            executed_time += t_exec;
            layers.push(LayerReport {
                id: s.id.clone(),
                status: s.status,
                class: s.class,
                final_density: x,
                window: WindowReport::from(&s.window),
                projected_speedup,
            });
        }
        let net_speedup = if layers.is_empty() { 1.0 } else { dense_time / executed_time };
        GslReport { layers, net: NetReport { projected_speedup: net_speedup } }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowReport {
    pub x_lower_useful: Option<f64>,
    pub x_upper_useful: f64,
    pub has_speedup_potential: bool,
}

impl From<&SparsityWindow> for WindowReport {
    fn from(w: &SparsityWindow) -> Self {
        WindowReport {
            x_lower_useful: w.x_lower_useful.is_finite().then_some(w.x_lower_useful),
            x_upper_useful: w.x_upper_useful,
            has_speedup_potential: w.has_speedup_potential,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerReport {
    pub id: String,
    pub status: PruneStatus,
    pub class: LayerClass,
    pub final_density: f64,
    pub window: WindowReport,
    pub projected_speedup: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetReport {
    pub projected_speedup: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GslReport {
    pub layers: Vec<LayerReport>,
    pub net: NetReport,
}

impl GslReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// One periodic observation of every layer's density.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCheck {
    pub iteration: u64,
    pub densities: Vec<(String, f64)>,
}

/// Write a trajectory as `iteration,layer,density` CSV.
pub fn write_trajectory<W: Write>(w: &mut W, checks: &[TrajectoryCheck]) -> Result<()> {
    writeln!(w, "iteration,layer,density")?;
    for check in checks {
        for (layer, density) in &check.densities {
            writeln!(w, "{},{},{}", check.iteration, layer, density)?;
        }
    }
    Ok(())
}

/// Parse a trajectory CSV, grouping rows into per-iteration checks. Rows must
/// be grouped by iteration in ascending order.
pub fn read_trajectory<R: BufRead>(r: R) -> Result<Vec<TrajectoryCheck>> {
    let mut checks: Vec<TrajectoryCheck> = Vec::new();
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Malformed("empty trajectory file".into()))??;
    if header.trim() != "iteration,layer,density" {
        return Err(Error::Malformed(format!("unexpected trajectory header: {header}")));
    }
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (it, layer, density) = (parts.next(), parts.next(), parts.next());
        let (it, layer, density) = match (it, layer, density) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(Error::Malformed(format!(
                    "trajectory line {} has fewer than 3 fields",
                    lineno + 2
                )))
            }
        };
        let iteration: u64 = it
            .trim()
            .parse()
            .map_err(|_| Error::Malformed(format!("bad iteration {it:?} on line {}", lineno + 2)))?;
        let density: f64 = density.trim().parse().map_err(|_| {
            Error::Malformed(format!("bad density {density:?} on line {}", lineno + 2))
        })?;
        match checks.last_mut() {
            Some(last) if last.iteration == iteration => {
                last.densities.push((layer.trim().to_string(), density));
            }
            Some(last) if last.iteration > iteration => {
                return Err(Error::Malformed(format!(
                    "trajectory iterations not ascending at line {}",
                    lineno + 2
                )));
            }
            _ => checks.push(TrajectoryCheck {
                iteration,
                densities: vec![(layer.trim().to_string(), density)],
            }),
        }
    }
    Ok(checks)
}

pub fn load_trajectory(path: &Path) -> Result<Vec<TrajectoryCheck>> {
    read_trajectory(BufReader::new(fs::File::open(path)?))
}

/// Drive the controller over a recorded or generated trajectory and return
/// the final report. An empty layer list yields an empty report with net
/// speedup 1.
pub fn gsl_run(
    layers: &[(String, LayerSpec)],
    batch: usize,
    profile: &PlatformProfile,
    config: GslConfig,
    checks: &[TrajectoryCheck],
) -> Result<GslReport> {
    if layers.is_empty() {
        return Ok(GslReport { layers: Vec::new(), net: NetReport { projected_speedup: 1.0 } });
    }
    let mut controller = GslController::init(layers, batch, profile, config)?;
    for check in checks {
        controller.step(check.iteration, &check.densities)?;
    }
    Ok(controller.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PlatformProfile;

    fn bandwidth_rich_profile() -> PlatformProfile {
        PlatformProfile::new("rich", 5e10, 1e13, 3.0, 2.0).unwrap()
    }

    fn alexnet_like_layers() -> Vec<(String, LayerSpec)> {
        vec![
            ("conv1".into(), LayerSpec::new(96, 3, 11, 11, 227, 227, 4, 0).unwrap()),
            ("conv2".into(), LayerSpec::new(256, 96, 5, 5, 27, 27, 1, 2).unwrap()),
            ("conv3".into(), LayerSpec::new(384, 256, 3, 3, 13, 13, 1, 1).unwrap()),
            ("conv4".into(), LayerSpec::new(384, 384, 3, 3, 13, 13, 1, 1).unwrap()),
            ("conv5".into(), LayerSpec::new(256, 384, 3, 3, 13, 13, 1, 1).unwrap()),
        ]
    }

    #[test]
    fn init_excludes_manually_listed_layers() {
        let profile = PlatformProfile::bdw();
        let config = GslConfig { manual_exclude: vec!["conv1".into()], ..GslConfig::default() };
        let c = GslController::init(&alexnet_like_layers(), 1, &profile, config).unwrap();
        let by_id: HashMap<_, _> = c.states().iter().map(|s| (s.id.as_str(), s)).collect();
        assert_eq!(by_id["conv1"].status, PruneStatus::Excluded);
        for id in ["conv2", "conv3", "conv4", "conv5"] {
            assert_eq!(by_id[id].status, PruneStatus::Active, "{id}");
        }
    }

    #[test]
    fn init_excludes_low_intensity_reduce_layers() {
        let profile = PlatformProfile::bdw();
        let layers = vec![
            ("inception_3x3".into(), LayerSpec::new(128, 96, 3, 3, 28, 28, 1, 1).unwrap()),
            ("reduce_1x1".into(), LayerSpec::new(16, 192, 1, 1, 14, 14, 1, 0).unwrap()),
        ];
        let c = GslController::init(&layers, 1, &profile, GslConfig::default()).unwrap();
        let by_id: HashMap<_, _> = c.states().iter().map(|s| (s.id.as_str(), s)).collect();
        assert_eq!(by_id["reduce_1x1"].status, PruneStatus::Excluded);
        assert_eq!(by_id["inception_3x3"].status, PruneStatus::Active);
    }

    #[test]
    fn init_with_free_bandwidth_excludes_nothing() {
        let profile = PlatformProfile::new("free", 1e12, 1e30, 1.0001, 2.0).unwrap();
        let c = GslController::init(&alexnet_like_layers(), 1, &profile, GslConfig::default())
            .unwrap();
        assert!(c.states().iter().all(|s| s.status == PruneStatus::Active));
    }

    #[test]
    fn init_rejects_empty_list() {
        assert!(GslController::init(&[], 1, &PlatformProfile::bdw(), GslConfig::default()).is_err());
    }

    #[test]
    fn stop_fires_at_or_below_crossover() {
        let profile = PlatformProfile::bdw();
        let layers = vec![("conv5".to_string(), alexnet_like_layers()[4].1)];
        let mut c = GslController::init(&layers, 1, &profile, GslConfig::default()).unwrap();
        let lower = c.states()[0].window.x_lower_useful;
        let d = c.step(100, &[("conv5".into(), lower * 0.8)]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].directive, Directive::StopPruning);
        assert_eq!(c.states()[0].status, PruneStatus::StoppedSaturated);
        // non-active layers emit nothing afterwards
        let d = c.step(200, &[("conv5".into(), lower * 0.5)]).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn restore_requires_stabilization_above_upper_bound() {
        let profile = PlatformProfile::bdw();
        let layers = vec![("conv5".to_string(), alexnet_like_layers()[4].1)];
        let config = GslConfig { stabilization_window: 3, ..GslConfig::default() };
        let mut c = GslController::init(&layers, 1, &profile, config).unwrap();
        // 0.45 > 1/3 but not yet stabilized
        for (i, expect) in [
            (100, Directive::Continue),
            (200, Directive::Continue),
            (300, Directive::Continue),
            (400, Directive::RestoreDense),
        ] {
            let d = c.step(i, &[("conv5".into(), 0.45)]).unwrap();
            assert_eq!(d[0].directive, expect, "iteration {i}");
        }
        assert_eq!(c.states()[0].status, PruneStatus::RestoredDense);
        assert_eq!(c.states()[0].final_density(), 1.0);
    }

    #[test]
    fn shrinking_density_inside_window_continues() {
        let profile = PlatformProfile::bdw();
        let layers = vec![("conv5".to_string(), alexnet_like_layers()[4].1)];
        let mut c = GslController::init(&layers, 1, &profile, GslConfig::default()).unwrap();
        for (i, x) in [(100, 0.30), (200, 0.22), (300, 0.15)] {
            let d = c.step(i, &[("conv5".into(), x)]).unwrap();
            assert_eq!(d[0].directive, Directive::Continue);
        }
        assert_eq!(c.states()[0].status, PruneStatus::Active);
    }

    #[test]
    fn unknown_layer_is_an_error() {
        let profile = PlatformProfile::bdw();
        let layers = vec![("conv5".to_string(), alexnet_like_layers()[4].1)];
        let mut c = GslController::init(&layers, 1, &profile, GslConfig::default()).unwrap();
        assert!(c.step(100, &[("fc9".into(), 0.5)]).is_err());
    }

    #[test]
    fn run_decaying_trajectory_stops_everything() {
        let profile = PlatformProfile::bdw();
        let layers: Vec<_> = alexnet_like_layers().into_iter().skip(1).collect();
        // geometric decay ending well below every layer's crossover
        let checks: Vec<TrajectoryCheck> = (1..=12)
            .map(|k| TrajectoryCheck {
                iteration: k * 100,
                densities: layers
                    .iter()
                    .map(|(id, _)| (id.clone(), 0.62f64.powi(k as i32)))
                    .collect(),
            })
            .collect();
        let report = gsl_run(&layers, 1, &profile, GslConfig::default(), &checks).unwrap();
        for l in &report.layers {
            assert_eq!(l.status, PruneStatus::StoppedSaturated, "{}", l.id);
            // projected speedup equals the model at the density where it stopped
            let spec = layers.iter().find(|(id, _)| *id == l.id).unwrap().1;
            let t = project_times(&layer_cost(&spec, 1), l.final_density, &profile).unwrap();
            assert_eq!(l.projected_speedup, t.speedup);
            assert!(l.projected_speedup > 1.0);
        }
        assert!(report.net.projected_speedup > 1.0);
    }

    #[test]
    fn run_constant_full_density_restores_everything() {
        let profile = bandwidth_rich_profile();
        let layers: Vec<_> = alexnet_like_layers().into_iter().skip(1).collect();
        let checks: Vec<TrajectoryCheck> = (1..=6)
            .map(|k| TrajectoryCheck {
                iteration: k * 100,
                densities: layers.iter().map(|(id, _)| (id.clone(), 1.0)).collect(),
            })
            .collect();
        let report = gsl_run(&layers, 1, &profile, GslConfig::default(), &checks).unwrap();
        for l in &report.layers {
            assert_eq!(l.status, PruneStatus::RestoredDense, "{}", l.id);
            assert_eq!(l.final_density, 1.0);
            assert_eq!(l.projected_speedup, 1.0);
        }
        assert_eq!(report.net.projected_speedup, 1.0);
    }

    #[test]
    fn run_empty_scope_reports_unit_speedup() {
        let report =
            gsl_run(&[], 1, &PlatformProfile::bdw(), GslConfig::default(), &[]).unwrap();
        assert!(report.layers.is_empty());
        assert_eq!(report.net.projected_speedup, 1.0);
    }

    #[test]
    fn trajectory_csv_roundtrip_and_errors() {
        let checks = vec![
            TrajectoryCheck {
                iteration: 100,
                densities: vec![("conv2".into(), 0.8), ("conv3".into(), 0.75)],
            },
            TrajectoryCheck { iteration: 200, densities: vec![("conv2".into(), 0.5)] },
        ];
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &checks).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("iteration,layer,density\n"));
        let back = read_trajectory(buf.as_slice()).unwrap();
        assert_eq!(back, checks);

        assert!(read_trajectory("bogus header\n1,a,0.5\n".as_bytes()).is_err());
        assert!(read_trajectory("iteration,layer,density\n1,conv2\n".as_bytes()).is_err());
        assert!(read_trajectory("iteration,layer,density\n1,conv2,abc\n".as_bytes()).is_err());
        assert!(
            read_trajectory("iteration,layer,density\n5,a,0.5\n1,a,0.4\n".as_bytes()).is_err()
        );
    }

    #[test]
    fn report_json_roundtrip() {
        let profile = PlatformProfile::bdw();
        let layers = alexnet_like_layers();
        let c = GslController::init(&layers, 1, &profile, GslConfig::default()).unwrap();
        let report = c.report();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.save(&path).unwrap();
        let back = GslReport::load(&path).unwrap();
        assert_eq!(back.layers.len(), report.layers.len());
        assert_eq!(back.net.projected_speedup, report.net.projected_speedup);
    }
}
