//! Manifolds presented in ambient coordinates.
//!
//! A point is a flat `[f64]` of length `ambient_dim`. Each kind supplies a
//! retraction onto its representative set, the tangent projection, and a
//! displacement `q - p` that respects the torus lattice.

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum ManifoldKind {
    EuclideanSpace,
    FlatTorus,
    UnitSphere,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbientManifold {
    kind: ManifoldKind,
    ambient_dim: usize,
    lattice: Vec<f64>,
}

impl AmbientManifold {
    pub fn euclidean(d: usize) -> Self {
        assert!(d > 0, "dimension must be positive");
        AmbientManifold { kind: ManifoldKind::EuclideanSpace, ambient_dim: d, lattice: Vec::new() }
    }

    pub fn flat_torus(periods: &[f64]) -> Result<Self> {
        if periods.is_empty() || periods.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::Precondition(String::from("torus periods must be positive")));
        }
        Ok(AmbientManifold {
            kind: ManifoldKind::FlatTorus,
            ambient_dim: periods.len(),
            lattice: periods.to_vec(),
        })
    }

    /// The unit sphere `S^{d-1}` in `R^d`.
    pub fn unit_sphere(d: usize) -> Self {
        assert!(d >= 2, "sphere needs ambient dimension >= 2");
        AmbientManifold { kind: ManifoldKind::UnitSphere, ambient_dim: d, lattice: Vec::new() }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::UnitSphere => self.ambient_dim - 1,
            _ => self.ambient_dim,
        }
    }

    pub fn lattice(&self) -> &[f64] {
        &self.lattice
    }

    pub fn is_flat(&self) -> bool {
        self.kind != ManifoldKind::UnitSphere
    }

    pub fn retract(&self, p: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            ManifoldKind::EuclideanSpace => Ok(p.to_vec()),
            ManifoldKind::FlatTorus => Ok(p
                .iter()
                .zip(&self.lattice)
                .map(|(&x, &per)| {
                    let r = x - per * (x / per).floor();
                    if r >= per || r < 0.0 {
                        0.0
                    } else {
                        r
                    }
                })
                .collect()),
            ManifoldKind::UnitSphere => {
                let r = dot(p, p).sqrt();
                if !(r > 0.0) {
                    return Err(Error::ZeroVector);
                }
                Ok(p.iter().map(|x| x / r).collect())
            }
        }
    }

    pub fn tangent_project(&self, p: &[f64], w: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::UnitSphere => {
                let s = dot(p, w) / dot(p, p);
                w.iter().zip(p).map(|(wi, pi)| wi - s * pi).collect()
            }
            _ => w.to_vec(),
        }
    }

    /// Minimal ambient representative of `q` relative to `p`.
    ///
    /// On the torus every component lands in `(-P/2, P/2]`; ties resolve to
    /// `+P/2`. Elsewhere this is the chord `q - p`.
    pub fn displacement(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::FlatTorus => p
                .iter()
                .zip(q)
                .zip(&self.lattice)
                .map(|((a, b), per)| wrap_half(b - a, *per))
                .collect(),
            _ => q.iter().zip(p).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        let d = self.displacement(p, q);
        dot(&d, &d).sqrt()
    }

    /// Orthonormal basis of the tangent space at `p`, as the columns of a
    /// `d x n` matrix.
    pub fn tangent_basis(&self, p: &[f64]) -> Mat {
        let d = self.ambient_dim;
        match self.kind {
            ManifoldKind::UnitSphere => {
                let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
                let mut seeds: Vec<usize> = (0..d).collect();
                // least-aligned axes first for conditioning
                seeds.sort_by(|&a, &b| p[a].abs().partial_cmp(&p[b].abs()).unwrap());
                for &axis in &seeds {
                    if cols.len() == d - 1 {
                        break;
                    }
                    let mut e = vec![0.0; d];
                    e[axis] = 1.0;
                    let mut u = self.tangent_project(p, &e);
                    for c in &cols {
                        let s = dot(c, &u);
                        u.iter_mut().zip(c).for_each(|(ui, ci)| *ui -= s * ci);
                    }
                    let r = dot(&u, &u).sqrt();
                    if r > 1e-8 {
                        cols.push(u.into_iter().map(|x| x / r).collect());
                    }
                }
                Mat::from_fn(d, d - 1, |i, j| cols[j][i])
            }
            _ => Mat::identity(d),
        }
    }

    /// Derivative of the retraction at an off-manifold ambient point `y`
    /// applied to `u`. The Jacobian is symmetric in every case.
    pub fn retraction_jacobian(&self, y: &[f64], u: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::UnitSphere => {
                let r2 = dot(y, y);
                let r = r2.sqrt();
                let s = dot(y, u) / r2;
                u.iter().zip(y).map(|(ui, yi)| (ui - s * yi) / r).collect()
            }
            _ => u.to_vec(),
        }
    }

    /// Second-order retraction term at `p`: for tangent `u, w` the retraction
    /// satisfies `d^2 R(p)[u, w] = c(p, g) <u, w>` when paired with an ambient
    /// covector `g`. Returns `c`.
    pub fn retraction_curvature(&self, p: &[f64], g: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::UnitSphere => -dot(p, g),
            _ => 0.0,
        }
    }

    pub fn on_manifold(&self, p: &[f64], tol: f64) -> bool {
        match self.retract(p) {
            Ok(r) => r.iter().zip(p).all(|(a, b)| (a - b).abs() <= tol),
            Err(_) => false,
        }
    }
}

/// `x` reduced into `(-per/2, per/2]`.
pub fn wrap_half(x: f64, per: f64) -> f64 {
    let r = x - per * (x / per - 0.5).ceil();
    if r <= -0.5 * per {
        r + per
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;

    #[test]
    fn retract_examples() {
        let t = AmbientManifold::flat_torus(&[1.0, 1.0]).unwrap();
        let r = t.retract(&[0.3, 1.2]).unwrap();
        assert!((r[0] - 0.3).abs() < 1e-15 && (r[1] - 0.2).abs() < 1e-15);
        let s = AmbientManifold::unit_sphere(3);
        assert_eq!(s.retract(&[0.0, 0.0, 2.0]).unwrap(), vec![0.0, 0.0, 1.0]);
        assert_eq!(s.retract(&[0.0, 0.0, 0.0]).unwrap_err(), Error::ZeroVector);
        let e = AmbientManifold::euclidean(2);
        assert_eq!(e.retract(&[1.5, -2.0]).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn tangent_project_examples() {
        let s = AmbientManifold::unit_sphere(3);
        assert_eq!(s.tangent_project(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0]), vec![1.0, 2.0, 0.0]);
        assert_eq!(s.tangent_project(&[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        let t = AmbientManifold::flat_torus(&[1.0, 2.0]).unwrap();
        assert_eq!(t.tangent_project(&[0.1, 0.1], &[4.0, -3.0]), vec![4.0, -3.0]);
    }

    #[test]
    fn displacement_examples() {
        let t = AmbientManifold::flat_torus(&[1.0, 1.0]).unwrap();
        let d = t.displacement(&[0.9, 0.0], &[0.05, 0.0]);
        assert!((d[0] - 0.15).abs() < 1e-15 && d[1] == 0.0);
        assert_eq!(t.displacement(&[0.0, 0.0], &[0.5, 0.0])[0], 0.5);
        assert_eq!(t.displacement(&[0.5, 0.0], &[0.0, 0.0])[0], 0.5);
        let e = AmbientManifold::euclidean(2);
        assert_eq!(e.displacement(&[0.0, 0.0], &[1.0, 1.0]), vec![1.0, 1.0]);
        let s = AmbientManifold::unit_sphere(3);
        assert_eq!(s.displacement(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]), vec![0.0; 3]);
    }

    #[test]
    fn sphere_basis_is_orthonormal_and_tangent() {
        let s = AmbientManifold::unit_sphere(4);
        let mut rng = sampling::rng(5);
        for _ in 0..50 {
            let p = sampling::unit_vec(&mut rng, 4);
            let b = s.tangent_basis(&p);
            for i in 0..3 {
                let ci = b.col(i);
                assert!(dot(&ci, &p).abs() < 1e-14);
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot(&ci, &b.col(j)) - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn retraction_jacobian_matches_differences() {
        let s = AmbientManifold::unit_sphere(3);
        let y = [0.3, -1.1, 0.7];
        let u = [0.2, 0.5, -0.4];
        let j = s.retraction_jacobian(&y, &u);
        let eps = 1e-6;
        let yp: Vec<f64> = y.iter().zip(&u).map(|(a, b)| a + eps * b).collect();
        let ym: Vec<f64> = y.iter().zip(&u).map(|(a, b)| a - eps * b).collect();
        let (rp, rm) = (s.retract(&yp).unwrap(), s.retract(&ym).unwrap());
        for k in 0..3 {
            assert!(((rp[k] - rm[k]) / (2.0 * eps) - j[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn wrap_half_range() {
        for &(x, want) in &[(0.5, 0.5), (-0.5, 0.5), (0.75, -0.25), (-0.75, 0.25), (2.5, 0.5), (0.0, 0.0)] {
            assert!((wrap_half(x, 1.0) - want).abs() < 1e-15, "{x}");
        }
    }
}
