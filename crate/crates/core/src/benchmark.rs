//! Time-dependent synthetic benchmark: a moving front resolved on the unit
//! square, one adaptation per integer time step.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::adapt::{adapt, AdaptConfig, AdaptStats, PhaseTimes, HISTOGRAM_BINS};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::metric::{compute_metric, MetricField};
use crate::parallel::Workers;
use crate::quality::all_qualities;
use crate::vtk::{write_vtk, VtkField};

/// `0.1 sin(50x + 2 pi t / T) + atan(-0.1 / (2x - sin(5y + 2 pi t / T)))`.
/// On the singular line the quotient is an infinity whose sign follows the
/// signed zero of the denominator, giving -pi/2 or +pi/2.
pub fn synthetic_solution(x: f64, y: f64, t: f64, period: f64) -> f64 {
    let phase = 2.0 * PI * t / period;
    0.1 * (50.0 * x + phase).sin() + (-0.1 / (2.0 * x - (5.0 * y + phase).sin())).atan()
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkConfig {
    pub adapt: AdaptConfig,
    pub nx: usize,
    pub ny: usize,
    pub t_begin: i64,
    pub t_end: i64,
    pub period: f64,
    /// Write a VTK snapshot after every step.
    pub vtk: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            adapt: AdaptConfig::default(),
            nx: 51,
            ny: 51,
            t_begin: 0,
            t_end: 51,
            period: 50.0,
            vtk: false,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "period must be positive (got {})",
                self.period
            )));
        }
        if self.t_end < self.t_begin {
            return Err(Error::InvalidParameter(format!(
                "t_end {} precedes t_begin {}",
                self.t_end, self.t_begin
            )));
        }
        self.adapt.validate()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: i64,
    /// Sampling the solution and building the metric.
    pub metric_seconds: f64,
    pub adapt: AdaptStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseSummary {
    pub phase: String,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkSummary {
    pub steps: usize,
    pub n_workers: usize,
    pub initial_vertices: usize,
    pub initial_elements: usize,
    pub phases: Vec<PhaseSummary>,
    /// All steps' final element qualities, aggregated.
    pub histogram: Vec<u64>,
    pub elements_sampled: u64,
    pub min_quality: f64,
    pub mean_quality: f64,
    pub fraction_below_0_4: f64,
    pub min_vertices: usize,
    pub max_vertices: usize,
    pub mean_vertices: f64,
    pub mean_elements: f64,
    pub min_element_vertex_ratio: f64,
    pub max_element_vertex_ratio: f64,
    pub flips: usize,
    pub relocations: usize,
    pub swap_violations: usize,
    pub smooth_violations: usize,
    pub swap_min_gain: f64,
    pub smooth_min_gain: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub records: Vec<StepRecord>,
    pub summary: BenchmarkSummary,
    pub mesh: Mesh,
    pub field: MetricField,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Phase names used in `stats.csv` and the summary, in column order.
pub fn phase_names() -> Vec<&'static str> {
    let mut v = vec!["metric"];
    v.extend(PhaseTimes::NAMES);
    v.push("adapt");
    v
}

fn phase_seconds(r: &StepRecord) -> Vec<f64> {
    let mut v = vec![r.metric_seconds];
    v.extend(r.adapt.times.values());
    v.push(r.adapt.total_seconds);
    v
}

fn summarise(records: &[StepRecord], n_workers: usize, initial: (usize, usize)) -> BenchmarkSummary {
    let names = phase_names();
    let secs: Vec<Vec<f64>> = records.iter().map(phase_seconds).collect();
    let phases = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let (mean, stddev) = mean_std(secs.iter().map(|s| s[i]));
            PhaseSummary {
                phase: name.to_string(),
                mean,
                stddev,
            }
        })
        .collect();
    let mut histogram = vec![0u64; HISTOGRAM_BINS];
    for r in records {
        for (h, c) in histogram.iter_mut().zip(&r.adapt.histogram) {
            *h += c;
        }
    }
    let sampled: u64 = histogram.iter().sum();
    let below: u64 = histogram[..HISTOGRAM_BINS * 2 / 5].iter().sum();
    let total_q: f64 = records
        .iter()
        .map(|r| r.adapt.mean_quality * r.adapt.elements as f64)
        .sum();
    let verts = records.iter().map(|r| r.adapt.vertices);
    let ratio = records
        .iter()
        .map(|r| r.adapt.elements as f64 / r.adapt.vertices.max(1) as f64);
    let gains = |f: fn(&AdaptStats) -> (usize, f64)| {
        records
            .iter()
            .map(|r| f(&r.adapt))
            .filter(|&(n, _)| n > 0)
            .map(|(_, g)| g)
            .fold(f64::INFINITY, f64::min)
    };
    let finite = |g: f64| if g.is_finite() { g } else { 0.0 };
    BenchmarkSummary {
        steps: records.len(),
        n_workers,
        initial_vertices: initial.0,
        initial_elements: initial.1,
        phases,
        elements_sampled: sampled,
        min_quality: records
            .iter()
            .map(|r| r.adapt.min_quality)
            .fold(f64::INFINITY, f64::min),
        mean_quality: if sampled > 0 { total_q / sampled as f64 } else { 0.0 },
        fraction_below_0_4: if sampled > 0 {
            below as f64 / sampled as f64
        } else {
            0.0
        },
        histogram,
        min_vertices: verts.clone().min().unwrap_or(0),
        max_vertices: verts.clone().max().unwrap_or(0),
        mean_vertices: mean_std(verts.map(|v| v as f64)).0,
        mean_elements: mean_std(records.iter().map(|r| r.adapt.elements as f64)).0,
        min_element_vertex_ratio: ratio.clone().fold(f64::INFINITY, f64::min),
        max_element_vertex_ratio: ratio.fold(0.0, f64::max),
        flips: records.iter().map(|r| r.adapt.flips).sum(),
        relocations: records.iter().map(|r| r.adapt.relocations).sum(),
        swap_violations: records.iter().map(|r| r.adapt.swap_violations).sum(),
        smooth_violations: records.iter().map(|r| r.adapt.smooth_violations).sum(),
        swap_min_gain: finite(gains(|a| (a.flips, a.swap_min_gain))),
        smooth_min_gain: finite(gains(|a| (a.relocations, a.smooth_min_gain))),
    }
}

fn snapshot(mesh: &Mesh, field: &MetricField, psi: &[f64], path: &Path) -> Result<()> {
    let q = all_qualities(mesh, field);
    let comp = |f: fn(&crate::metric::MetricTensor) -> f64| field.tensors().iter().map(f).collect::<Vec<_>>();
    let (m00, m01, m11) = (comp(|m| m.m00), comp(|m| m.m01), comp(|m| m.m11));
    write_vtk(
        mesh,
        &[
            VtkField::Point("psi", psi),
            VtkField::Point("m00", &m00),
            VtkField::Point("m01", &m01),
            VtkField::Point("m11", &m11),
            VtkField::Cell("quality", &q),
        ],
        path,
    )
}

fn sample(mesh: &Mesh, t: f64, period: f64) -> Vec<f64> {
    mesh.coords()
        .iter()
        .map(|p| synthetic_solution(p[0], p[1], t, period))
        .collect()
}

/// Runs the time loop from an `nx` by `ny` structured mesh and writes
/// `stats.csv`, `summary.json` (and snapshots) to `out` when given.
pub fn run_benchmark(config: &BenchmarkConfig, out: Option<&Path>) -> Result<BenchmarkReport> {
    let mesh = Mesh::structured(config.nx, config.ny)?;
    run_benchmark_on(mesh, config, out)
}

/// As [`run_benchmark`], starting from a given mesh.
pub fn run_benchmark_on(mut mesh: Mesh, config: &BenchmarkConfig, out: Option<&Path>) -> Result<BenchmarkReport> {
    config.validate()?;
    let workers = Workers::new(config.adapt.n_workers)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let initial = (mesh.n_live_vertices(), mesh.n_live_elements());
    let mut records = Vec::new();
    let mut field = MetricField::default();
    for step in config.t_begin..=config.t_end {
        let t0 = Instant::now();
        let psi = sample(&mesh, step as f64, config.period);
        field = compute_metric(&mesh, &psi, &config.adapt.metric, &workers).map_err(|e| at(step, e))?;
        let metric_seconds = t0.elapsed().as_secs_f64();
        let stats = adapt(&mut mesh, &mut field, &config.adapt, &workers).map_err(|e| at(step, e))?;
        if let (Some(dir), true) = (out, config.vtk) {
            let psi = sample(&mesh, step as f64, config.period);
            snapshot(&mesh, &field, &psi, &dir.join(format!("step_{step:04}.vtk")))?;
        }
        records.push(StepRecord {
            step,
            metric_seconds,
            adapt: stats,
        });
    }
    finish(config, records, initial, mesh, field, out)
}

/// One adaptation of `mesh` to a prescribed metric, reported as step 0.
pub fn run_single(
    mut mesh: Mesh,
    mut field: MetricField,
    config: &BenchmarkConfig,
    out: Option<&Path>,
) -> Result<BenchmarkReport> {
    config.validate()?;
    let workers = Workers::new(config.adapt.n_workers)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let initial = (mesh.n_live_vertices(), mesh.n_live_elements());
    let stats = adapt(&mut mesh, &mut field, &config.adapt, &workers).map_err(|e| at(0, e))?;
    if let (Some(dir), true) = (out, config.vtk) {
        let psi = vec![0.0; mesh.n_vertices()];
        snapshot(&mesh, &field, &psi, &dir.join("step_0000.vtk"))?;
    }
    let records = vec![StepRecord {
        step: 0,
        metric_seconds: 0.0,
        adapt: stats,
    }];
    finish(config, records, initial, mesh, field, out)
}

fn at(step: i64, e: Error) -> Error {
    Error::Step {
        step,
        source: Box::new(e),
    }
}

fn finish(
    config: &BenchmarkConfig,
    records: Vec<StepRecord>,
    initial: (usize, usize),
    mesh: Mesh,
    field: MetricField,
    out: Option<&Path>,
) -> Result<BenchmarkReport> {
    let report = BenchmarkReport {
        summary: summarise(&records, config.adapt.n_workers, initial),
        config: config.clone(),
        records,
        mesh,
        field,
    };
    if let Some(dir) = out {
        write_reports(&report, dir)?;
    }
    Ok(report)
}

pub fn stats_csv(records: &[StepRecord]) -> String {
    let mut s = String::from("step,phase,seconds,n_verts,n_elems\n");
    let names = phase_names();
    for r in records {
        for (name, secs) in names.iter().zip(phase_seconds(r)) {
            let _ = writeln!(
                s,
                "{},{},{:.9},{},{}",
                r.step, name, secs, r.adapt.vertices, r.adapt.elements
            );
        }
    }
    s
}

pub fn write_reports(report: &BenchmarkReport, dir: &Path) -> Result<()> {
    fs::write(dir.join("stats.csv"), stats_csv(&report.records))?;
    let json = serde_json::json!({
        "config": report.config,
        "summary": report.summary,
        "steps": report.records,
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&json)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_in_time() {
        for i in 0..50 {
            let (x, y, t) = (i as f64 * 0.0203, 1.0 - i as f64 * 0.0171, i as f64 * 0.7);
            let a = synthetic_solution(x, y, t, 50.0);
            let b = synthetic_solution(x, y, t + 50.0, 50.0);
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn bounded() {
        for i in 0..=100 {
            for j in 0..=100 {
                let v = synthetic_solution(i as f64 / 100.0, j as f64 / 100.0, 3.0, 50.0);
                assert!(v.abs() <= 0.1 + PI / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn singular_line_uses_numerator_sign() {
        // 2x = sin(5y) at y = 0, x = 0.
        assert_eq!(synthetic_solution(0.0, 0.0, 0.0, 50.0), -PI / 2.0);
        assert!(synthetic_solution(1e-9, 0.0, 0.0, 50.0) < -1.5);
        assert!(synthetic_solution(-1e-9, 0.0, 0.0, 50.0) > 1.5);
    }

    #[test]
    fn single_step_records_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let config = BenchmarkConfig {
            nx: 11,
            ny: 11,
            t_begin: 3,
            t_end: 3,
            vtk: true,
            ..BenchmarkConfig::default()
        };
        let report = run_benchmark(&config, Some(dir.path())).unwrap();
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.records[0].step, 3);
        let csv = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + phase_names().len());
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(json["summary"]["steps"], 1);
        assert!(dir.path().join("step_0003.vtk").exists());
        let s = &report.summary;
        assert_eq!(s.elements_sampled, report.mesh.n_elements() as u64);
        assert_eq!(s.phases.len(), phase_names().len());
    }

    #[test]
    fn reversed_range_rejected() {
        let config = BenchmarkConfig {
            t_begin: 2,
            t_end: 1,
            ..BenchmarkConfig::default()
        };
        assert!(run_benchmark(&config, None).is_err());
    }

    #[test]
    fn mean_and_sample_deviation() {
        let (m, s) = mean_std([2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0].into_iter());
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std([3.0].into_iter()), (3.0, 0.0));
    }
}
