//! `adapt`: runs the synthetic moving-front benchmark, or adapts a given
//! mesh to a given metric.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use meshadapt::benchmark::{run_benchmark, run_benchmark_on, run_single, BenchmarkConfig, BenchmarkReport};
use meshadapt::{read_mesh, read_metric, write_mesh, write_metric, AdaptConfig, Error, Mesh, MetricParams};

#[derive(Debug, Parser)]
#[command(name = "adapt", version, about = "Anisotropic 2D mesh adaptation benchmark")]
struct Args {
    #[arg(long, default_value_t = 51)]
    nx: usize,
    #[arg(long, default_value_t = 51)]
    ny: usize,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    t_begin: i64,
    #[arg(long, default_value_t = 51, allow_negative_numbers = true)]
    t_end: i64,
    #[arg(long, default_value_t = 50.0)]
    period: f64,
    /// Norm order of the controlled interpolation error.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value_t = 0.002)]
    h_min: f64,
    #[arg(long, default_value_t = 0.2)]
    h_max: f64,
    #[arg(long, env = "ADAPT_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
    lmin: f64,
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    lmax: f64,
    #[arg(long, default_value_t = 10)]
    max_iterations: usize,
    #[arg(long)]
    out: PathBuf,
    /// Write a VTK snapshot per step.
    #[arg(long)]
    vtk: bool,
    /// Start from this mesh instead of a structured one.
    #[arg(long)]
    mesh_in: Option<PathBuf>,
    /// Adapt once to this metric instead of running the time loop.
    #[arg(long, requires = "mesh_in")]
    metric_in: Option<PathBuf>,
}

impl Args {
    fn config(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            adapt: AdaptConfig {
                l_min: self.lmin,
                l_max: self.lmax,
                max_adapt_iterations: self.max_iterations,
                metric: MetricParams {
                    p: self.p,
                    eps: self.eps,
                    h_min: self.h_min,
                    h_max: self.h_max,
                },
                n_workers: self.workers,
                ..AdaptConfig::default()
            },
            nx: self.nx,
            ny: self.ny,
            t_begin: self.t_begin,
            t_end: self.t_end,
            period: self.period,
            vtk: self.vtk,
        }
    }
}

fn run(args: &Args) -> Result<BenchmarkReport, Error> {
    let config = args.config();
    let out = Some(args.out.as_path());
    let report = match (&args.mesh_in, &args.metric_in) {
        (Some(m), Some(f)) => {
            let mesh: Mesh = read_mesh(m)?;
            let field = read_metric(f, mesh.n_vertices())?;
            run_single(mesh, field, &config, out)?
        }
        (Some(m), None) => run_benchmark_on(read_mesh(m)?, &config, out)?,
        _ => run_benchmark(&config, out)?,
    };
    write_mesh(&report.mesh, &args.out.join("mesh.txt"))?;
    write_metric(&report.field, &args.out.join("metric.txt"))?;
    Ok(report)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&args) {
        Ok(report) => {
            let s = &report.summary;
            println!(
                "steps {}  vertices {}..{}  min quality {:.4}  below 0.4 {:.4}%  adapt mean {:.3}s",
                s.steps,
                s.min_vertices,
                s.max_vertices,
                s.min_quality,
                100.0 * s.fraction_below_0_4,
                s.phases.iter().find(|p| p.phase == "adapt").map_or(0.0, |p| p.mean),
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("adapt: {e}");
            ExitCode::from(if e.is_consistency() { 2 } else { 1 })
        }
    }
}
