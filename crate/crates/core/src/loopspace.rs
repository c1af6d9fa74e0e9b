//! Discrete curves, boundary conditions, the Sobolev inner product and the
//! iteration map.
//!
//! A curve is `N` nodes in ambient coordinates. Periodic curves have `N`
//! intervals and `h = 1/N`; open curves have `N - 1` intervals. Variations
//! are stored either as ambient tangent vectors per node
//! ([`VariationField`]) or in admissible coordinates: a tangent basis per
//! node with the endpoint constraints already applied.

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::manifold::{AmbientManifold, ManifoldKind};
use crate::prelude::*;

/// Diagonal orthogonal matrix with `+-1` entries: `gamma(t + 1) = E gamma(t)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Monodromy {
    signs: Vec<f64>,
}

impl Monodromy {
    pub fn identity(d: usize) -> Self {
        Monodromy { signs: vec![1.0; d] }
    }

    pub fn from_signs(signs: &[f64]) -> Result<Self> {
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::UnsupportedMonodromy);
        }
        Ok(Monodromy { signs: signs.to_vec() })
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn is_identity(&self) -> bool {
        self.signs.iter().all(|&s| s == 1.0)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.signs).map(|(a, s)| a * s).collect()
    }

    pub fn pow(&self, m: usize) -> Monodromy {
        Monodromy { signs: self.signs.iter().map(|&s| if m % 2 == 0 { 1.0 } else { s }).collect() }
    }

    pub fn matrix(&self) -> Mat {
        let d = self.signs.len();
        Mat::from_fn(d, d, |i, j| if i == j { self.signs[i] } else { 0.0 })
    }
}

/// Affine subspace `point + span(basis)` used as an endpoint constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    pub point: Vec<f64>,
    /// Orthonormal columns.
    pub basis: Mat,
}

impl AffineConstraint {
    pub fn new(point: &[f64], directions: &[Vec<f64>]) -> Result<Self> {
        let d = point.len();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for dir in directions {
            if dir.len() != d {
                return Err(Error::Dimension(String::from("constraint direction has wrong length")));
            }
            let mut u = dir.clone();
            for c in &cols {
                let s = dot(c, &u);
                u.iter_mut().zip(c).for_each(|(a, b)| *a -= s * b);
            }
            let r = dot(&u, &u).sqrt();
            if r < 1e-12 {
                return Err(Error::Precondition(String::from("constraint directions are dependent")));
            }
            cols.push(u.into_iter().map(|x| x / r).collect());
        }
        Ok(AffineConstraint { point: point.to_vec(), basis: Mat::from_fn(d, cols.len(), |i, j| cols[j][i]) })
    }

    pub fn point_constraint(p: &[f64]) -> Self {
        AffineConstraint { point: p.to_vec(), basis: Mat::zeros(p.len(), 0) }
    }

    /// Orthogonal projector onto the direction space applied to `u`.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        self.basis.matvec(&self.basis.tmatvec(u))
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let r: Vec<f64> = x.iter().zip(&self.point).map(|(a, b)| a - b).collect();
        let p = self.project(&r);
        r.iter().zip(&p).all(|(a, b)| (a - b).abs() <= tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    Periodic(Monodromy),
    Fixed { start: Vec<f64>, end: Vec<f64> },
    /// Endpoints move on affine subspaces (flat manifolds only).
    Submanifold { start: AffineConstraint, end: AffineConstraint },
}

impl BoundaryCondition {
    pub fn periodic(d: usize) -> Self {
        BoundaryCondition::Periodic(Monodromy::identity(d))
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, BoundaryCondition::Periodic(_))
    }
}

pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    manifold: AmbientManifold,
    bc: BoundaryCondition,
    nodes: Vec<f64>,
    bases: Vec<Mat>,
    offsets: Vec<usize>,
}

impl DiscreteCurve {
    pub fn new(manifold: &AmbientManifold, bc: BoundaryCondition, nodes: Vec<Vec<f64>>) -> Result<Self> {
        let d = manifold.ambient_dim();
        let n = nodes.len();
        if n < MIN_NODES {
            return Err(Error::Precondition(format!("curve needs at least {MIN_NODES} nodes, got {n}")));
        }
        if nodes.iter().any(|p| p.len() != d) {
            return Err(Error::Dimension(format!("nodes must have {d} coordinates")));
        }
        for (i, p) in nodes.iter().enumerate() {
            if !manifold.on_manifold(p, 1e-12) {
                return Err(Error::Precondition(format!("node {i} is not on the manifold")));
            }
        }
        match &bc {
            BoundaryCondition::Periodic(e) => {
                if e.signs().len() != d {
                    return Err(Error::Dimension(String::from("monodromy dimension")));
                }
                if !e.is_identity() && manifold.kind() != ManifoldKind::EuclideanSpace {
                    return Err(Error::UnsupportedMonodromy);
                }
            }
            BoundaryCondition::Fixed { start, end } => {
                if manifold.distance(start, &nodes[0]) > 1e-12 || manifold.distance(end, &nodes[n - 1]) > 1e-12 {
                    return Err(Error::Precondition(String::from("end nodes differ from fixed endpoints")));
                }
            }
            BoundaryCondition::Submanifold { start, end } => {
                if !manifold.is_flat() {
                    return Err(Error::Precondition(String::from("submanifold endpoints need a flat manifold")));
                }
                if !start.contains(&nodes[0], 1e-12) || !end.contains(&nodes[n - 1], 1e-12) {
                    return Err(Error::Precondition(String::from("end nodes violate endpoint constraints")));
                }
            }
        }
        let flat: Vec<f64> = nodes.into_iter().flatten().collect();
        let mut curve =
            DiscreteCurve { manifold: manifold.clone(), bc, nodes: flat, bases: Vec::new(), offsets: Vec::new() };
        curve.rebuild_layout();
        Ok(curve)
    }

    /// Samples `f` at the node parameters and retracts onto the manifold.
    /// Periodic curves use `t_i = i/N`, open curves `t_i = i/(N-1)`.
    pub fn from_fn(
        manifold: &AmbientManifold,
        bc: BoundaryCondition,
        n: usize,
        f: impl Fn(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let intervals = if bc.is_periodic() { n } else { n.saturating_sub(1).max(1) };
        let nodes = (0..n)
            .map(|i| manifold.retract(&f(i as f64 / intervals as f64)))
            .collect::<Result<Vec<_>>>()?;
        DiscreteCurve::new(manifold, bc, nodes)
    }

    fn rebuild_layout(&mut self) {
        let n = self.len();
        self.bases = (0..n).map(|i| self.admissible_basis(i)).collect();
        self.offsets = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for b in &self.bases {
            self.offsets.push(acc);
            acc += b.cols();
        }
        self.offsets.push(acc);
    }

    fn admissible_basis(&self, i: usize) -> Mat {
        let n = self.len();
        let d = self.dim();
        match &self.bc {
            BoundaryCondition::Fixed { .. } if i == 0 || i == n - 1 => Mat::zeros(d, 0),
            BoundaryCondition::Submanifold { start, .. } if i == 0 => start.basis.clone(),
            BoundaryCondition::Submanifold { end, .. } if i == n - 1 => end.basis.clone(),
            _ => self.manifold.tangent_basis(self.node(i)),
        }
    }

    pub fn manifold(&self) -> &AmbientManifold {
        &self.manifold
    }

    pub fn bc(&self) -> &BoundaryCondition {
        &self.bc
    }

    pub fn len(&self) -> usize {
        self.nodes.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.manifold.ambient_dim()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.node(i).to_vec()).collect()
    }

    pub fn is_periodic(&self) -> bool {
        self.bc.is_periodic()
    }

    pub fn monodromy(&self) -> Option<&Monodromy> {
        match &self.bc {
            BoundaryCondition::Periodic(e) => Some(e),
            _ => None,
        }
    }

    pub fn intervals(&self) -> usize {
        if self.is_periodic() {
            self.len()
        } else {
            self.len() - 1
        }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.intervals() as f64
    }

    /// Node at the far end of interval `i`, and whether the monodromy applies.
    pub fn next_index(&self, i: usize) -> (usize, bool) {
        let n = self.len();
        if i + 1 == n {
            (0, true)
        } else {
            (i + 1, false)
        }
    }

    /// The end point of interval `i` in the ambient frame of node `i`.
    pub fn next_point(&self, i: usize) -> Vec<f64> {
        let (j, wrap) = self.next_index(i);
        let q = self.node(j);
        match (&self.bc, wrap) {
            (BoundaryCondition::Periodic(e), true) if !e.is_identity() => e.apply(q),
            _ => q.to_vec(),
        }
    }

    /// Displacement across interval `i`: wrapped on the torus, the chord on
    /// the sphere.
    pub fn step(&self, i: usize) -> Vec<f64> {
        let p = self.node(i);
        let q = self.next_point(i);
        self.manifold.displacement(p, &q)
    }

    /// Forward-difference velocity on interval `i`. On the sphere this is the
    /// chord over `h`, not projected, so the discrete action stays invariant
    /// under rotations.
    pub fn velocity(&self, i: usize) -> Vec<f64> {
        let inv_h = self.intervals() as f64;
        self.step(i).into_iter().map(|x| x * inv_h).collect()
    }

    pub fn velocities(&self) -> Vec<Vec<f64>> {
        (0..self.intervals()).map(|i| self.velocity(i)).collect()
    }

    /// Total displacement of one traversal, in units of the torus periods.
    pub fn winding(&self) -> Vec<f64> {
        let d = self.dim();
        let mut acc = vec![0.0; d];
        for i in 0..self.intervals() {
            for (a, s) in acc.iter_mut().zip(self.step(i)) {
                *a += s;
            }
        }
        if self.manifold.kind() == ManifoldKind::FlatTorus {
            acc.iter_mut().zip(self.manifold.lattice()).for_each(|(a, p)| *a /= p);
        }
        acc
    }

    pub fn basis(&self, i: usize) -> &Mat {
        &self.bases[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Dimension of the admissible variation space.
    pub fn dof(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn coords_at<'a>(&self, c: &'a [f64], i: usize) -> &'a [f64] {
        &c[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn to_field(&self, c: &[f64]) -> VariationField {
        let d = self.dim();
        let mut values = Vec::with_capacity(self.len() * d);
        for i in 0..self.len() {
            let b = &self.bases[i];
            if b.cols() == 0 {
                values.extend(core::iter::repeat(0.0).take(d));
            } else {
                values.extend(b.matvec(self.coords_at(c, i)));
            }
        }
        VariationField { dim: d, values }
    }

    /// Admissible coordinates of an ambient field (orthogonal projection).
    pub fn to_coords(&self, xi: &VariationField) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.dof());
        for i in 0..self.len() {
            c.extend(self.bases[i].tmatvec(xi.at(i)));
        }
        c
    }

    /// Ambient covector per node restricted to admissible coordinates.
    pub fn restrict_covector(&self, g: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut c = Vec::with_capacity(self.dof());
        for i in 0..self.len() {
            c.extend(self.bases[i].tmatvec(&g[i * d..(i + 1) * d]));
        }
        c
    }

    /// Ambient points `node_i + s B_i c_i` before retraction.
    pub fn chart_points(&self, c: &[f64], s: f64) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| {
                let mut y = self.node(i).to_vec();
                let b = &self.bases[i];
                if b.cols() > 0 {
                    let u = b.matvec(self.coords_at(c, i));
                    y.iter_mut().zip(&u).for_each(|(a, b)| *a += s * b);
                }
                y
            })
            .collect()
    }

    /// The curve `R(node_i + s B_i c_i)` with the layout of `self`.
    pub fn perturb(&self, c: &[f64], s: f64) -> Result<DiscreteCurve> {
        let ys = self.chart_points(c, s);
        let mut out = self.clone();
        let d = self.dim();
        for (i, y) in ys.iter().enumerate() {
            let r = if self.bases[i].cols() == 0 { self.node(i).to_vec() } else { self.manifold.retract(y)? };
            out.nodes[i * d..(i + 1) * d].copy_from_slice(&r);
        }
        out.rebuild_layout();
        Ok(out)
    }

    /// Same as [`perturb`](Self::perturb) but keeps the tangent bases of
    /// `self`, so coordinates of different chart points stay comparable.
    pub fn perturb_in_chart(&self, c: &[f64], s: f64) -> Result<DiscreteCurve> {
        let ys = self.chart_points(c, s);
        let mut out = self.clone();
        let d = self.dim();
        for (i, y) in ys.iter().enumerate() {
            let r = if self.bases[i].cols() == 0 { self.node(i).to_vec() } else { self.manifold.retract(y)? };
            out.nodes[i * d..(i + 1) * d].copy_from_slice(&r);
        }
        Ok(out)
    }

    pub fn with_nodes(&self, nodes: Vec<Vec<f64>>) -> Result<DiscreteCurve> {
        DiscreteCurve::new(&self.manifold, self.bc.clone(), nodes)
    }

    /// Tangent field `P_i(velocity_i)`, the discrete `gamma dot` at the nodes.
    pub fn tangent_field(&self) -> VariationField {
        let d = self.dim();
        let n = self.len();
        let mut values = Vec::with_capacity(n * d);
        for i in 0..n {
            let v = if i < self.intervals() { self.velocity(i) } else { self.velocity(i - 1) };
            values.extend(self.manifold.tangent_project(self.node(i), &v));
        }
        VariationField { dim: d, values }
    }

    /// Velocity at node `i` from the trigonometric interpolant of the
    /// (unwrapped) nodes. Exact for band-limited curves such as great circles
    /// and straight torus loops.
    pub fn spectral_velocity(&self, i: usize) -> Result<Vec<f64>> {
        match &self.bc {
            BoundaryCondition::Periodic(e) if e.is_identity() => {}
            BoundaryCondition::Periodic(_) => return Err(Error::UnsupportedMonodromy),
            _ => return Err(Error::NotPeriodic),
        }
        let n = self.len();
        let d = self.dim();
        // lift starting at node i
        let mut lift = vec![vec![0.0; d]; n];
        for k in 1..n {
            let s = self.step((i + k - 1) % n);
            for c in 0..d {
                lift[k][c] = lift[k - 1][c] + s[c];
            }
        }
        let last = self.step((i + n - 1) % n);
        let total: Vec<f64> = (0..d).map(|c| lift[n - 1][c] + last[c]).collect();
        let mut v = total.clone();
        let pi = core::f64::consts::PI;
        for (k, y) in lift.iter().enumerate().skip(1) {
            let x = pi * k as f64 / n as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let w = if n % 2 == 0 { -pi * sign / x.tan() } else { -pi * sign / x.sin() };
            for c in 0..d {
                let periodic = y[c] - total[c] * k as f64 / n as f64;
                v[c] += w * periodic;
            }
        }
        Ok(self.manifold.tangent_project(self.node(i), &v))
    }
}

/// Ambient tangent vectors, one per node.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationField {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl VariationField {
    pub fn zeros(n: usize, dim: usize) -> Self {
        VariationField { dim, values: vec![0.0; n * dim] }
    }

    pub fn from_nodes(values: &[Vec<f64>]) -> Self {
        let dim = values.first().map(|v| v.len()).unwrap_or(0);
        VariationField { dim, values: values.iter().flatten().copied().collect() }
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// True when every value is tangent and satisfies the boundary condition.
    pub fn is_admissible(&self, curve: &DiscreteCurve, tol: f64) -> bool {
        (0..curve.len()).all(|i| {
            let b = curve.basis(i);
            let p = b.matvec(&b.tmatvec(self.at(i)));
            p.iter().zip(self.at(i)).all(|(a, c)| (a - c).abs() <= tol)
        })
    }
}

/// Mass weights: `h` per node, halved at the ends of open curves.
fn mass_weight(curve: &DiscreteCurve, i: usize) -> f64 {
    let h = curve.h();
    if !curve.is_periodic() && (i == 0 || i + 1 == curve.len()) {
        0.5 * h
    } else {
        h
    }
}

/// `m^2 sum w_i <xi_i, eta_i> + h sum <D xi_i, D eta_i>` with `D` the
/// tangent-projected forward difference.
pub fn sobolev_inner(xi: &VariationField, eta: &VariationField, curve: &DiscreteCurve, m: usize) -> f64 {
    let m2 = (m * m) as f64;
    let h = curve.h();
    let mut mass = 0.0;
    for i in 0..curve.len() {
        mass += mass_weight(curve, i) * dot(xi.at(i), eta.at(i));
    }
    let diff = |f: &VariationField, i: usize| -> Vec<f64> {
        let (j, wrap) = curve.next_index(i);
        let next = match (curve.monodromy(), wrap) {
            (Some(e), true) => e.apply(f.at(j)),
            _ => f.at(j).to_vec(),
        };
        let raw: Vec<f64> = next.iter().zip(f.at(i)).map(|(a, b)| (a - b) / h).collect();
        curve.manifold().tangent_project(curve.node(i), &raw)
    };
    let mut stiff = 0.0;
    for i in 0..curve.intervals() {
        stiff += h * dot(&diff(xi, i), &diff(eta, i));
    }
    m2 * mass + stiff
}

/// Gram matrix of [`sobolev_inner`] in admissible coordinates.
pub fn sobolev_gram(curve: &DiscreteCurve, m: usize) -> Mat {
    let n = curve.dof();
    let m2 = (m * m) as f64;
    let h = curve.h();
    let mut g = Mat::zeros(n, n);
    for i in 0..curve.len() {
        let o = curve.offset(i);
        let w = m2 * mass_weight(curve, i);
        for k in 0..curve.basis(i).cols() {
            g[(o + k, o + k)] += w;
        }
    }
    for i in 0..curve.intervals() {
        let (j, wrap) = curve.next_index(i);
        let (bi, bj) = (curve.basis(i), curve.basis(j));
        let bj = match (curve.monodromy(), wrap) {
            (Some(e), true) if !e.is_identity() => e.matrix().matmul(bj),
            _ => bj.clone(),
        };
        // D xi in a tangent frame T_i at node i: (V c_j - U c_i) / h with
        // U = T_i^T B_i and V = T_i^T B_j
        let t = curve.manifold().tangent_basis(curve.node(i));
        let tt = t.transpose();
        let u = tt.matmul(bi);
        let v = tt.matmul(&bj);
        let (oi, oj) = (curve.offset(i), curve.offset(j));
        let s = 1.0 / h;
        let mut add = |o1: usize, o2: usize, a: &Mat, b: &Mat, sign: f64| {
            let p = a.transpose().matmul(b);
            for r in 0..p.rows() {
                for c in 0..p.cols() {
                    g[(o1 + r, o2 + c)] += sign * s * p[(r, c)];
                }
            }
        };
        add(oi, oi, &u, &u, 1.0);
        add(oi, oj, &u, &v, -1.0);
        add(oj, oi, &v, &u, -1.0);
        add(oj, oj, &v, &v, 1.0);
    }
    g
}

/// `gamma^m(t) = gamma(m t)` on `N m` nodes, exact.
pub fn iterate(curve: &DiscreteCurve, m: usize) -> Result<DiscreteCurve> {
    let e = curve.monodromy().ok_or(Error::NotPeriodic)?.clone();
    if m == 0 {
        return Err(Error::Precondition(String::from("iterate order must be positive")));
    }
    let n = curve.len();
    let nodes = (0..n * m)
        .map(|j| {
            let p = curve.node(j % n);
            if (j / n) % 2 == 1 {
                e.apply(p)
            } else {
                p.to_vec()
            }
        })
        .collect();
    DiscreteCurve::new(curve.manifold(), BoundaryCondition::Periodic(e.pow(m)), nodes)
}

/// `xi^m(t) = xi(m t)` along `iterate(curve, m)`.
pub fn iterate_field(curve: &DiscreteCurve, xi: &VariationField, m: usize) -> Result<VariationField> {
    let e = curve.monodromy().ok_or(Error::NotPeriodic)?;
    let n = curve.len();
    let mut values = Vec::with_capacity(xi.values.len() * m);
    for j in 0..n * m {
        let v = xi.at(j % n);
        if (j / n) % 2 == 1 {
            values.extend(e.apply(v));
        } else {
            values.extend_from_slice(v);
        }
    }
    Ok(VariationField { dim: xi.dim, values })
}
