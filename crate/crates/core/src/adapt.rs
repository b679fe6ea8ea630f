//! The outer adaptation loop: coarsen, then refine/coarsen/swap until the
//! mesh stops changing, then smooth.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::coarsen::{coarsen_pass, CoarsenStats, DEFAULT_L_MIN};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::metric::{MetricField, MetricParams};
use crate::parallel::Workers;
use crate::quality::all_qualities;
use crate::refine::{refine_pass, RefineStats, DEFAULT_L_MAX};
use crate::smooth::{smooth_pass, SmoothParams, SmoothStats};
use crate::swap::{swap_pass, SwapStats};

/// Quality histogram resolution: bins of width 0.05 over [0, 1].
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdaptConfig {
    pub l_min: f64,
    pub l_max: f64,
    pub max_adapt_iterations: usize,
    /// The loop stops once the elements created, deleted and flipped in an
    /// iteration fall below this fraction of the element count.
    pub convergence: f64,
    pub smooth: SmoothParams,
    pub metric: MetricParams,
    pub n_workers: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            l_min: DEFAULT_L_MIN,
            l_max: DEFAULT_L_MAX,
            max_adapt_iterations: 10,
            convergence: 0.01,
            smooth: SmoothParams::default(),
            metric: MetricParams::default(),
            n_workers: 1,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l_min > 0.0 && self.l_min < 1.0 && self.l_max > 1.0 && self.l_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < l_min < 1 < l_max (got {} / {})",
                self.l_min, self.l_max
            )));
        }
        if self.max_adapt_iterations == 0 || self.n_workers == 0 {
            return Err(Error::InvalidParameter(
                "iteration cap and worker count must be positive".into(),
            ));
        }
        if !(self.convergence > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "convergence threshold must be positive (got {})",
                self.convergence
            )));
        }
        if !(self.smooth.sigma_q >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma_q must be >= 0 (got {})",
                self.smooth.sigma_q
            )));
        }
        self.metric.validate()
    }
}

/// Wall time per phase, in seconds. Colouring and commit time is taken out
/// of the phase that incurred it, so the fields partition the work.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseTimes {
    pub refine: f64,
    pub coarsen: f64,
    pub swap: f64,
    pub smooth: f64,
    pub colouring: f64,
    pub commit: f64,
    pub verify: f64,
}

impl PhaseTimes {
    pub const NAMES: [&'static str; 7] = ["refine", "coarsen", "swap", "smooth", "colouring", "commit", "verify"];

    pub fn values(&self) -> [f64; 7] {
        [
            self.refine,
            self.coarsen,
            self.swap,
            self.smooth,
            self.colouring,
            self.commit,
            self.verify,
        ]
    }

    pub fn sum(&self) -> f64 {
        self.values().iter().sum()
    }

    /// Books colouring and commit time, returning what is left for the phase.
    fn split(&mut self, total: Duration, colour: Duration, commit: Duration) -> f64 {
        let (c, k) = (colour.as_secs_f64(), commit.as_secs_f64());
        self.colouring += c;
        self.commit += k;
        (total.as_secs_f64() - c - k).max(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AdaptStats {
    pub times: PhaseTimes,
    pub total_seconds: f64,
    pub iterations: usize,
    pub converged: bool,
    pub vertices_before: usize,
    pub elements_before: usize,
    pub vertices: usize,
    pub elements: usize,
    /// Live (vertices, elements) after each phase, in execution order.
    pub sizes: Vec<(String, usize, usize)>,
    pub histogram: Vec<u64>,
    pub min_quality: f64,
    pub mean_quality: f64,
    pub splits: usize,
    pub collapses: usize,
    pub flips: usize,
    pub relocations: usize,
    pub swap_min_gain: f64,
    pub swap_violations: usize,
    pub swap_leftover_marks: usize,
    pub smooth_min_gain: f64,
    pub smooth_violations: usize,
}

/// Bins qualities into [`HISTOGRAM_BINS`] equal bins; 1.0 lands in the last.
pub fn quality_histogram(qualities: &[f64]) -> Vec<u64> {
    let mut h = vec![0u64; HISTOGRAM_BINS];
    for &q in qualities {
        let b = ((q * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        h[b] += 1;
    }
    h
}

fn verified(mesh: &Mesh, phase: &str, times: &mut PhaseTimes) -> Result<()> {
    let t = Instant::now();
    let report = mesh.verify();
    times.verify += t.elapsed().as_secs_f64();
    if report.is_empty() {
        Ok(())
    } else {
        Err(Error::Consistency {
            phase: phase.to_string(),
            report,
        })
    }
}

struct Driver<'a> {
    mesh: &'a mut Mesh,
    field: &'a mut MetricField,
    config: &'a AdaptConfig,
    workers: &'a Workers,
    stats: AdaptStats,
}

impl Driver<'_> {
    fn record(&mut self, phase: &str) -> Result<()> {
        verified(self.mesh, phase, &mut self.stats.times)?;
        self.stats.sizes.push((
            phase.to_string(),
            self.mesh.n_live_vertices(),
            self.mesh.n_live_elements(),
        ));
        Ok(())
    }

    fn coarsen(&mut self) -> Result<CoarsenStats> {
        let t = Instant::now();
        let s = coarsen_pass(
            self.mesh,
            self.field,
            self.config.l_min,
            self.config.l_max,
            self.workers,
        )?;
        let times = &mut self.stats.times;
        times.coarsen += times.split(t.elapsed(), s.colour_time, s.commit_time);
        self.stats.collapses += s.collapses;
        self.record("coarsen")?;
        Ok(s)
    }

    fn refine(&mut self) -> Result<RefineStats> {
        let t = Instant::now();
        let s = refine_pass(self.mesh, self.field, self.config.l_max, self.workers)?;
        let times = &mut self.stats.times;
        times.refine += times.split(t.elapsed(), Duration::ZERO, s.commit_time);
        self.stats.splits += s.splits;
        self.record("refine")?;
        Ok(s)
    }

    fn swap(&mut self) -> Result<SwapStats> {
        let t = Instant::now();
        let s = swap_pass(self.mesh, self.field, self.workers)?;
        let times = &mut self.stats.times;
        times.swap += times.split(t.elapsed(), s.colour_time, s.commit_time);
        self.stats.flips += s.flips;
        self.stats.swap_violations += s.monotonicity_violations;
        self.stats.swap_leftover_marks += s.leftover_marks;
        if s.flips > 0 {
            self.stats.swap_min_gain = self.stats.swap_min_gain.min(s.min_gain);
        }
        self.record("swap")?;
        Ok(s)
    }

    fn smooth(&mut self) -> Result<SmoothStats> {
        let t = Instant::now();
        let s = smooth_pass(self.mesh, self.field, &self.config.smooth, self.workers)?;
        let times = &mut self.stats.times;
        times.smooth += times.split(t.elapsed(), s.colour_time, Duration::ZERO);
        self.stats.relocations += s.relocations;
        self.stats.smooth_violations += s.gate_violations;
        if s.relocations > 0 {
            self.stats.smooth_min_gain = self.stats.smooth_min_gain.min(s.min_gain);
        }
        self.record("smooth")?;
        Ok(s)
    }
}

/// Adapts `mesh` to `field` in place. On return the mesh is compacted, the
/// field renumbered to match, and both verified.
pub fn adapt(mesh: &mut Mesh, field: &mut MetricField, config: &AdaptConfig, workers: &Workers) -> Result<AdaptStats> {
    config.validate()?;
    if field.len() != mesh.n_vertices() {
        return Err(Error::InvalidArgument(format!(
            "{} metric tensors for {} vertices",
            field.len(),
            mesh.n_vertices()
        )));
    }
    let start = Instant::now();
    let mut d = Driver {
        stats: AdaptStats {
            vertices_before: mesh.n_live_vertices(),
            elements_before: mesh.n_live_elements(),
            swap_min_gain: f64::INFINITY,
            smooth_min_gain: f64::INFINITY,
            ..AdaptStats::default()
        },
        mesh,
        field,
        config,
        workers,
    };
    d.record("input")?;

    d.coarsen()?;
    while d.stats.iterations < config.max_adapt_iterations {
        d.stats.iterations += 1;
        let r = d.refine()?;
        let c = d.coarsen()?;
        let s = d.swap()?;
        let touched = r.bisected + r.trisected + r.quadrisected + r.elements_created + 2 * c.collapses + 2 * s.flips;
        let n = d.mesh.n_live_elements().max(1);
        if (touched as f64) < config.convergence * n as f64 {
            d.stats.converged = true;
            break;
        }
    }
    d.smooth()?;

    let Driver {
        mesh, field, mut stats, ..
    } = d;
    let map = mesh.compact();
    field.remap(&map);
    verified(mesh, "compact", &mut stats.times)?;

    let q = all_qualities(mesh, field);
    stats.histogram = quality_histogram(&q);
    stats.min_quality = q.iter().copied().fold(f64::INFINITY, f64::min);
    stats.mean_quality = if q.is_empty() {
        0.0
    } else {
        q.iter().sum::<f64>() / q.len() as f64
    };
    stats.vertices = mesh.n_vertices();
    stats.elements = mesh.n_elements();
    for g in [&mut stats.swap_min_gain, &mut stats.smooth_min_gain] {
        if !g.is_finite() {
            *g = 0.0;
        }
    }
    stats.total_seconds = start.elapsed().as_secs_f64();
    Ok(stats)
}
