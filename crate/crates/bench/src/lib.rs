//! Fixtures shared by the kernel benchmarks.

use meshadapt::benchmark::synthetic_solution;
use meshadapt::{adapt, compute_metric, AdaptConfig, Mesh, MetricField, MetricParams, Workers};

/// Structured `n` by `n` mesh with the moving-front metric at time `t`.
pub fn front(n: usize, t: f64) -> (Mesh, MetricField) {
    let mesh = Mesh::structured(n, n).expect("n >= 2");
    let field = front_metric(&mesh, t);
    (mesh, field)
}

pub fn front_metric(mesh: &Mesh, t: f64) -> MetricField {
    let psi: Vec<f64> = mesh
        .coords()
        .iter()
        .map(|p| synthetic_solution(p[0], p[1], t, 50.0))
        .collect();
    compute_metric(mesh, &psi, &MetricParams::default(), &Workers::serial()).expect("valid mesh")
}

/// A mesh already adapted to the front at `t`, with the metric for `t + 1`;
/// the state a time step starts from.
pub fn adapted_front(n: usize, t: f64) -> (Mesh, MetricField) {
    let (mut mesh, mut field) = front(n, t);
    adapt(&mut mesh, &mut field, &AdaptConfig::default(), &Workers::serial()).expect("adapt");
    let next = front_metric(&mesh, t + 1.0);
    (mesh, next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_consistent() {
        let (mesh, field) = adapted_front(11, 0.0);
        assert!(mesh.verify().is_empty());
        assert_eq!(field.len(), mesh.n_vertices());
    }
}
