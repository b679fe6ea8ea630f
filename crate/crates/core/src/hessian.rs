//! Nodal Hessian recovery by least-squares quadratic fitting.

use nalgebra::{Matrix6, SymmetricEigen, Vector6};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, VertexId};
use crate::parallel::Workers;

/// Ratio of smallest to largest normal-equation eigenvalue below which the
/// patch is treated as rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;

/// Per-vertex Hessian `(h00, h01, h11)` of the quadratic
/// `a + bx + cy + dx² + exy + fy²` fitted over the distance-2 ring,
/// widening to distance 3 where the fit is underdetermined. Detached
/// vertices get a zero Hessian.
pub fn recover_hessian(mesh: &Mesh, values: &[f64], workers: &Workers) -> Result<Vec<[f64; 3]>> {
    if values.len() != mesh.n_vertices() {
        return Err(Error::InvalidArgument(format!(
            "{} nodal values for {} vertices",
            values.len(),
            mesh.n_vertices()
        )));
    }
    let n = mesh.n_vertices();
    let parts = workers.dynamic(
        n,
        256,
        |_| (Vec::new(), Vec::new(), None),
        |(ids, out, err): &mut (Vec<usize>, Vec<[f64; 3]>, Option<Error>), v| {
            if err.is_some() {
                return;
            }
            if !mesh.is_vertex_live(v) {
                ids.push(v);
                out.push([0.0; 3]);
                return;
            }
            match vertex_hessian(mesh, values, v) {
                Ok(h) => {
                    ids.push(v);
                    out.push(h);
                }
                Err(e) => *err = Some(e),
            }
        },
    );
    let mut hessians = vec![[0.0; 3]; n];
    for (ids, out, err) in parts {
        if let Some(e) = err {
            return Err(e);
        }
        for (v, h) in ids.into_iter().zip(out) {
            hessians[v] = h;
        }
    }
    Ok(hessians)
}

fn vertex_hessian(mesh: &Mesh, values: &[f64], v: VertexId) -> Result<[f64; 3]> {
    let mut patch = Vec::with_capacity(32);
    for depth in [2, 3] {
        ring(mesh, v, depth, &mut patch);
        if patch.len() >= 6 {
            if let Some(h) = fit(mesh, values, v, &patch) {
                return Ok(h);
            }
        }
    }
    Err(Error::SingularPatch(v))
}

/// Vertices within `depth` edges of `v`, `v` included.
fn ring(mesh: &Mesh, v: VertexId, depth: usize, out: &mut Vec<VertexId>) {
    out.clear();
    out.push(v);
    let mut start = 0;
    for _ in 0..depth {
        let end = out.len();
        for i in start..end {
            for &w in mesh.neighbours(out[i]) {
                if !out.contains(&w) {
                    out.push(w);
                }
            }
        }
        start = end;
    }
}

fn fit(mesh: &Mesh, values: &[f64], v: VertexId, patch: &[VertexId]) -> Option<[f64; 3]> {
    let origin = mesh.coords[v];
    let f0 = values[v];
    let h = patch
        .iter()
        .map(|&w| {
            let p = mesh.coords[w];
            (p[0] - origin[0]).hypot(p[1] - origin[1])
        })
        .fold(0.0, f64::max);
    if !(h > 0.0) {
        return None;
    }
    let mut ata = Matrix6::<f64>::zeros();
    let mut atb = Vector6::<f64>::zeros();
    for &w in patch {
        let p = mesh.coords[w];
        let x = (p[0] - origin[0]) / h;
        let y = (p[1] - origin[1]) / h;
        let row = Vector6::new(1.0, x, y, x * x, x * y, y * y);
        ata += row * row.transpose();
        atb += row * (values[w] - f0);
    }
    let eig = SymmetricEigen::new(ata);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min < RANK_TOLERANCE * max {
        return None;
    }
    let coef = ata.cholesky()?.solve(&atb);
    let s = 1.0 / (h * h);
    Some([2.0 * coef[3] * s, coef[4] * s, 2.0 * coef[5] * s])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perturbed(nx: usize) -> Mesh {
        let mut m = Mesh::structured(nx, nx).unwrap();
        let h = 1.0 / (nx - 1) as f64;
        for v in 0..m.n_vertices() {
            if !m.boundary_tag(v).is_boundary() {
                let p = m.coord(v);
                let dx = 0.2 * h * ((v as f64 * 12.9898).sin());
                let dy = 0.2 * h * ((v as f64 * 78.233).cos());
                m.set_coord(v, [p[0] + dx, p[1] + dy]);
            }
        }
        m
    }

    fn sample(mesh: &Mesh, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        mesh.coords().iter().map(|p| f(p[0], p[1])).collect()
    }

    #[test]
    fn paraboloid_hessian_exact() {
        let mesh = perturbed(9);
        let vals = sample(&mesh, |x, y| x * x + y * y);
        let h = recover_hessian(&mesh, &vals, &Workers::serial()).unwrap();
        for v in mesh.live_vertices() {
            assert!((h[v][0] - 2.0).abs() < 1e-8, "{:?}", h[v]);
            assert!(h[v][1].abs() < 1e-8);
            assert!((h[v][2] - 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_field_has_zero_hessian() {
        let mesh = perturbed(7);
        let vals = sample(&mesh, |x, y| 3.0 * x - 2.0 * y + 0.5);
        let h = recover_hessian(&mesh, &vals, &Workers::serial()).unwrap();
        for hv in h {
            assert!(hv.iter().all(|c| c.abs() < 1e-8), "{hv:?}");
        }
    }

    #[test]
    fn x_squared_hessian() {
        let mesh = perturbed(8);
        let vals = sample(&mesh, |x, _| x * x);
        let h = recover_hessian(&mesh, &vals, &Workers::new(2).unwrap()).unwrap();
        for hv in h {
            assert!((hv[0] - 2.0).abs() < 1e-8 && hv[1].abs() < 1e-8 && hv[2].abs() < 1e-8);
        }
    }

    #[test]
    fn single_triangle_is_singular() {
        let mesh = Mesh::build_adjacency(vec![[0, 1, 2]], vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], true).unwrap();
        let err = recover_hessian(&mesh, &[0.0, 1.0, 2.0], &Workers::serial()).unwrap_err();
        assert!(matches!(err, Error::SingularPatch(_)));
    }

    #[test]
    fn wrong_length_rejected() {
        let mesh = Mesh::structured(3, 3).unwrap();
        assert!(recover_hessian(&mesh, &[0.0; 4], &Workers::serial()).is_err());
    }
}
