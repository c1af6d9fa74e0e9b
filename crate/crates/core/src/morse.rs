//! Morse index and nullity from the generalized Hessian eigenproblem,
//! Lyapunov-Schmidt reduction on the kernel and iteration scans.

use crate::action::{action, chart_gradient, hessian};
use crate::error::{Error, Result};
use crate::finsler::Lagrangian;
use crate::linalg::{dot, generalized_eigen_with, max_abs, Cholesky, Mat};
use crate::loopspace::{iterate, sobolev_gram, DiscreteCurve};
use crate::prelude::*;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SpectrumOptions {
    /// Gram weight `m` of `<.,.>_{1,m}`.
    pub gram_weight: usize,
    /// Null threshold relative to `max |lambda|`.
    pub rel_thresh: f64,
    /// Keep eigenvectors (needed by [`ls_reduce`] and the residual check).
    pub vectors: bool,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { gram_weight: 1, rel_thresh: 1e-6, vectors: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SpectrumReport {
    /// Sorted eigenvalues of `H x = lambda G x`.
    pub eigenvalues: Vec<f64>,
    pub m_minus: usize,
    pub m_zero: usize,
    pub m_plus: usize,
    pub thresh: f64,
    /// Largest `|lambda|` counted as null.
    pub null_max: f64,
    /// Smallest `|lambda|` above the threshold.
    pub gap: f64,
    /// Rayleigh quotient of the discrete tangent field, periodic curves only.
    pub tangent_rayleigh: Option<f64>,
    /// `(thresh, m_minus, m_zero)` at a tenth and ten times the threshold.
    pub sweep: Vec<(f64, usize, usize)>,
    pub threshold_sensitive: bool,
    /// `max ||H x - lambda G x|| / ||x||` when vectors were computed.
    pub max_residual: Option<f64>,
    /// `G`-orthonormal eigenvectors as columns.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub vectors: Option<Mat>,
}

fn counts(values: &[f64], thresh: f64) -> (usize, usize) {
    let neg = values.iter().filter(|&&l| l < -thresh).count();
    let zero = values.iter().filter(|&&l| l.abs() <= thresh).count();
    (neg, zero)
}

/// Index and nullity of the discrete second variation at `curve`.
pub fn spectrum(curve: &DiscreteCurve, lag: &dyn Lagrangian, opts: &SpectrumOptions) -> Result<SpectrumReport> {
    let h = hessian(curve, lag)?.matrix;
    let g = sobolev_gram(curve, opts.gram_weight);
    let chol = Cholesky::new(&g)?;
    let eig = generalized_eigen_with(&h, &chol, opts.vectors)?;
    let values = eig.values;
    let scale = values.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let thresh = opts.rel_thresh * scale;
    let (m_minus, m_zero) = counts(&values, thresh);
    let null_max = values.iter().filter(|l| l.abs() <= thresh).fold(0.0f64, |m, l| m.max(l.abs()));
    let gap = values.iter().filter(|l| l.abs() > thresh).fold(f64::INFINITY, |m, l| m.min(l.abs()));
    let sweep: Vec<(f64, usize, usize)> = [0.1, 10.0]
        .iter()
        .map(|f| {
            let (a, b) = counts(&values, f * thresh);
            (f * thresh, a, b)
        })
        .collect();
    let threshold_sensitive = sweep.iter().any(|&(_, a, b)| a != m_minus || b != m_zero);
    let tangent_rayleigh = if curve.is_periodic() {
        let xi = curve.to_coords(&curve.tangent_field());
        let den = g.quad_form(&xi, &xi);
        Some(if den > 0.0 { h.quad_form(&xi, &xi) / den } else { 0.0 })
    } else {
        None
    };
    let max_residual = eig.vectors.as_ref().map(|w| {
        let mut worst = 0.0f64;
        for (k, &l) in values.iter().enumerate() {
            let x = w.col(k);
            let hx = h.matvec(&x);
            let gx = g.matvec(&x);
            let r: Vec<f64> = hx.iter().zip(&gx).map(|(a, b)| a - l * b).collect();
            worst = worst.max(crate::linalg::norm(&r) / crate::linalg::norm(&x));
        }
        worst
    });
    Ok(SpectrumReport {
        m_plus: values.len() - m_minus - m_zero,
        eigenvalues: values,
        m_minus,
        m_zero,
        thresh,
        null_max,
        gap,
        tangent_rayleigh,
        sweep,
        threshold_sensitive,
        max_residual,
        vectors: eig.vectors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct OrbitIndex {
    pub m_minus_orbit: usize,
    pub m_zero_orbit: usize,
    /// `2n - 1` for a manifold of dimension `n`.
    pub bound: usize,
}

/// Orbit index `m^-` and orbit nullity `m^0 - 1` of a closed geodesic.
pub fn orbit_index(spec: &SpectrumReport, curve: &DiscreteCurve) -> Result<OrbitIndex> {
    if !curve.is_periodic() {
        return Err(Error::NotPeriodic);
    }
    let rq = spec.tangent_rayleigh.unwrap_or(f64::INFINITY);
    if !(rq.abs() <= spec.thresh) || spec.m_zero == 0 {
        return Err(Error::TangentNotNull { rayleigh: rq, thresh: spec.thresh });
    }
    let n = curve.manifold().intrinsic_dim();
    let bound = 2 * n - 1;
    let m_zero_orbit = spec.m_zero - 1;
    if m_zero_orbit > bound {
        return Err(Error::OrbitBoundViolated { m_zero_orbit, bound });
    }
    Ok(OrbitIndex { m_minus_orbit: spec.m_minus, m_zero_orbit, bound })
}

/// Periodic Sturm-Liouville oracle for the `k`-fold great circle on the
/// round sphere: `lambda_j = (j/k)^2 - 1`, `j` in `-jmax..=jmax`.
pub fn great_circle_oracle(k: usize, jmax: usize) -> Vec<f64> {
    let k = k as f64;
    let mut out: Vec<f64> =
        (-(jmax as i64)..=jmax as i64).map(|j| (j as f64 / k) * (j as f64 / k) - 1.0).collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

/// `(m^-, m^0(O))` predicted by [`great_circle_oracle`].
pub fn great_circle_counts(k: usize) -> (usize, usize) {
    let l = great_circle_oracle(k, 4 * k + 4);
    let (neg, zero) = counts(&l, 1e-12);
    (neg, zero)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum Classification {
    LocalMin,
    LocalMax,
    /// Saddle-type or otherwise undecided reduced functional.
    Indeterminate,
    /// `L°` constant on the grid: a critical manifold, not an isolated point.
    DegenerateCriticalManifold,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ReductionOptions {
    /// Grid points per null direction, odd so that 0 is on the grid.
    pub points_per_axis: usize,
    /// Radius of the grid ball; by default sized from `max_displacement`.
    pub delta: Option<f64>,
    /// Bound on the nodal displacement of a grid point.
    pub max_displacement: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub gram_weight: usize,
    pub rel_thresh: f64,
    /// `L°` spread below this means a critical manifold.
    pub flat_tol: f64,
    /// Step of the central difference for `dh(0)`.
    pub fd_step: f64,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        ReductionOptions {
            points_per_axis: 5,
            delta: None,
            max_displacement: 0.05,
            tol: 1e-11,
            max_iters: 200,
            gram_weight: 1,
            rel_thresh: 1e-6,
            flat_tol: 1e-8,
            fd_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GridPoint {
    pub xi: Vec<f64>,
    pub l_circ: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ReductionReport {
    pub null_dim: usize,
    /// Null basis in admissible coordinates, `G`-orthonormal, `G`-orthogonal
    /// to the tangent field.
    pub null_basis: Vec<Vec<f64>>,
    pub delta: f64,
    pub grid: Vec<GridPoint>,
    /// Grid points where the complement solve diverged.
    pub failed: Vec<Vec<f64>>,
    pub h0_residual: f64,
    pub dh0_norm: f64,
    pub l_circ_zero: f64,
    pub action: f64,
    pub spread: f64,
    pub max_residual: f64,
    pub classification: Classification,
}

struct Split {
    w: Mat,
    lambda: Vec<f64>,
    z: Vec<Vec<f64>>,
}

/// Solve `W^T g(xi + W a) = 0` by the chord iteration
/// `a <- a - Lambda^{-1} W^T g`.
fn solve_complement(
    curve: &DiscreteCurve,
    lag: &dyn Lagrangian,
    split: &Split,
    xi: &[f64],
    opts: &ReductionOptions,
) -> Result<(Vec<f64>, f64, usize, f64)> {
    let n = curve.dof();
    let r = split.lambda.len();
    let mut a = vec![0.0; r];
    let mut last = f64::INFINITY;
    for it in 0..=opts.max_iters {
        let mut c = xi.to_vec();
        for (k, ak) in a.iter().enumerate() {
            for i in 0..n {
                c[i] += ak * split.w[(i, k)];
            }
        }
        let (g, moved) = chart_gradient(curve, &c, lag)?;
        let proj = split.w.tmatvec(&g);
        let res = dot(&proj, &proj).sqrt();
        if res < opts.tol {
            let value = action(&moved, lag)?.value;
            return Ok((a, res, it, value));
        }
        if !res.is_finite() || (it > 10 && res > 10.0 * last) {
            break;
        }
        last = res;
        for k in 0..r {
            a[k] -= proj[k] / split.lambda[k];
        }
    }
    Err(Error::NewtonDivergence { detail: format!("complement solve at xi = {xi:?}") })
}

/// Numerical Lyapunov-Schmidt reduction onto the orbit-normal kernel.
///
/// The retraction is nodewise `retract(gamma_i + xi_i)`. Each grid point
/// solves for the complement part `h(xi)` with the Hessian at `gamma` frozen.
pub fn ls_reduce(curve: &DiscreteCurve, lag: &dyn Lagrangian, opts: &ReductionOptions) -> Result<ReductionReport> {
    if opts.points_per_axis % 2 == 0 {
        return Err(Error::Precondition(String::from("points_per_axis must be odd")));
    }
    let sopts = SpectrumOptions { gram_weight: opts.gram_weight, rel_thresh: opts.rel_thresh, vectors: true };
    let spec = spectrum(curve, lag, &sopts)?;
    let g = sobolev_gram(curve, opts.gram_weight);
    let w_all = spec.vectors.as_ref().unwrap();
    let n = curve.dof();
    let null_idx: Vec<usize> = (0..n).filter(|&k| spec.eigenvalues[k].abs() <= spec.thresh).collect();
    let rest: Vec<usize> = (0..n).filter(|&k| spec.eigenvalues[k].abs() > spec.thresh).collect();
    let periodic = curve.is_periodic();
    let null_dim = if periodic { null_idx.len().saturating_sub(1) } else { null_idx.len() };
    if null_dim == 0 || null_dim > 3 {
        return Err(Error::Precondition(format!(
            "reduction needs an orbit nullity between 1 and 3, found {null_dim}"
        )));
    }
    // kernel components of the tangent field, then an orthonormal basis of
    // their complement inside the kernel
    let null_vecs: Vec<Vec<f64>> = null_idx.iter().map(|&k| w_all.col(k)).collect();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    if periodic {
        let tf = curve.to_coords(&curve.tangent_field());
        let gt = g.matvec(&tf);
        seeds.push(null_vecs.iter().map(|v| dot(v, &gt)).collect());
    }
    for k in 0..null_vecs.len() {
        let mut e = vec![0.0; null_vecs.len()];
        e[k] = 1.0;
        seeds.push(e);
    }
    for s in seeds {
        let mut v = s;
        for _ in 0..2 {
            for d in &dirs {
                let p = dot(&v, d);
                v.iter_mut().zip(d).for_each(|(x, y)| *x -= p * y);
            }
        }
        let nv = dot(&v, &v).sqrt();
        if nv > 1e-8 && dirs.len() < null_vecs.len() {
            v.iter_mut().for_each(|x| *x /= nv);
            dirs.push(v);
        }
    }
    let skip = if periodic { 1 } else { 0 };
    let z: Vec<Vec<f64>> = dirs[skip..]
        .iter()
        .map(|b| {
            let mut out = vec![0.0; n];
            for (coef, v) in b.iter().zip(&null_vecs) {
                out.iter_mut().zip(v).for_each(|(o, x)| *o += coef * x);
            }
            out
        })
        .collect();
    let w = Mat::from_fn(n, rest.len(), |i, c| w_all[(i, rest[c])]);
    let lambda: Vec<f64> = rest.iter().map(|&k| spec.eigenvalues[k]).collect();
    let split = Split { w, lambda, z };

    let field_max = split.z.iter().map(|b| max_abs(&curve.to_field(b).values)).fold(0.0f64, f64::max);
    let delta = opts
        .delta
        .unwrap_or(opts.max_displacement / ((null_dim as f64).sqrt() * field_max.max(1e-300)));
    let combine = |coefs: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        for (s, b) in coefs.iter().zip(&split.z) {
            c.iter_mut().zip(b).for_each(|(x, y)| *x += s * y);
        }
        c
    };

    let base = action(curve, lag)?.value;
    let zero = vec![0.0; null_dim];
    let (_, h0_residual, _, l0) = solve_complement(curve, lag, &split, &combine(&zero), opts)?;
    let mut dh0 = 0.0f64;
    for k in 0..null_dim {
        let mut e = vec![0.0; null_dim];
        e[k] = opts.fd_step * delta;
        let (ap, _, _, _) = solve_complement(curve, lag, &split, &combine(&e), opts)?;
        e[k] = -opts.fd_step * delta;
        let (am, _, _, _) = solve_complement(curve, lag, &split, &combine(&e), opts)?;
        let d: Vec<f64> = ap.iter().zip(&am).map(|(p, m)| (p - m) / (2.0 * opts.fd_step * delta)).collect();
        dh0 = dh0.max(dot(&d, &d).sqrt());
    }

    let p = opts.points_per_axis;
    let half = (p / 2) as f64;
    let mut grid = Vec::new();
    let mut failed = Vec::new();
    let total = p.pow(null_dim as u32);
    for idx in 0..total {
        let mut r = idx;
        let xi: Vec<f64> = (0..null_dim)
            .map(|_| {
                let q = r % p;
                r /= p;
                if p == 1 {
                    0.0
                } else {
                    delta * (q as f64 - half) / half
                }
            })
            .collect();
        if dot(&xi, &xi).sqrt() > delta * (1.0 + 1e-12) {
            continue;
        }
        match solve_complement(curve, lag, &split, &combine(&xi), opts) {
            Ok((_, res, iters, value)) => grid.push(GridPoint { xi, l_circ: value, residual: res, iterations: iters }),
            Err(Error::NewtonDivergence { .. }) => failed.push(xi),
            Err(e) => return Err(e),
        }
    }
    let lo = grid.iter().map(|g| g.l_circ).fold(f64::INFINITY, f64::min);
    let hi = grid.iter().map(|g| g.l_circ).fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    let max_residual = grid.iter().map(|g| g.residual).fold(0.0f64, f64::max);
    let others = grid.iter().filter(|g| g.xi.iter().any(|x| *x != 0.0));
    let classification = if spread <= opts.flat_tol {
        Classification::DegenerateCriticalManifold
    } else if others.clone().all(|g| g.l_circ > l0 + opts.flat_tol) {
        Classification::LocalMin
    } else if others.clone().all(|g| g.l_circ < l0 - opts.flat_tol) {
        Classification::LocalMax
    } else {
        Classification::Indeterminate
    };
    Ok(ReductionReport {
        null_dim,
        null_basis: split.z.clone(),
        delta,
        grid,
        failed,
        h0_residual,
        dh0_norm: dh0,
        l_circ_zero: l0,
        action: base,
        spread,
        max_residual,
        classification,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum CriticalGroups {
    /// Degrees `q` with `C_q = K`; all others vanish.
    Known(Vec<usize>),
    /// Shifting formula with factors that are not computed.
    Symbolic(String),
    Indeterminate(String),
}

/// Critical groups from index, nullity and the reduced functional.
///
/// For closed geodesics pass the orbit nullity `m^0(O)` as `m_zero`.
pub fn classify_critical_groups(
    m_minus: usize,
    m_zero: usize,
    orbit: bool,
    reduction: Option<Classification>,
) -> CriticalGroups {
    if orbit {
        if m_zero == 0 {
            if m_minus == 0 {
                return CriticalGroups::Known(vec![0, 1]);
            }
            return CriticalGroups::Symbolic(format!(
                "C_q(L, O) = H_(q-{m_minus})(S^1; theta^-), orientation bundle theta^- Unknown"
            ));
        }
        return CriticalGroups::Symbolic(format!(
            "C_q(L, O) = (C_(q-{m_minus})(L°, 0) (x) H_*(S^1; theta^-))^(Z_m), invariant factors Unknown"
        ));
    }
    if m_zero == 0 {
        return CriticalGroups::Known(vec![m_minus]);
    }
    match reduction {
        Some(Classification::LocalMin) => CriticalGroups::Known(vec![m_minus]),
        Some(Classification::LocalMax) => CriticalGroups::Known(vec![m_minus + m_zero]),
        Some(Classification::DegenerateCriticalManifold) => {
            CriticalGroups::Indeterminate(String::from("non-isolated critical point"))
        }
        Some(Classification::Indeterminate) => CriticalGroups::Indeterminate(String::from("saddle-type L°")),
        None => CriticalGroups::Indeterminate(String::from("degenerate without reduction")),
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ScanRow {
    pub k: usize,
    pub nodes: usize,
    pub action: f64,
    pub m_minus: usize,
    pub m_zero_orbit: usize,
    pub flags: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DichotomyFit {
    /// First branch: `m^-(gamma^k) = 0` for every scanned `k`.
    pub all_zero: bool,
    /// Least-squares slope of `m^-(gamma^k)` against `k`.
    pub a: f64,
    /// Smallest `b >= 0` with `m^-(k+l) - m^-(k) >= l a - b` on the scan,
    /// or minus the fitted intercept if that is larger.
    pub b: f64,
    pub bound_holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    pub fit: DichotomyFit,
    /// `(k_j, [n_j1 = 1, n_j2, ...])` grouping iterates with equal nullity.
    pub nullity_classes: Vec<(usize, Vec<usize>)>,
    pub nullity_constant: bool,
    /// Pairs `(k, m k)` with equal index and orbit nullity.
    pub flagged_pairs: Vec<(usize, usize)>,
}

pub fn dichotomy_fit(m_minus: &[(usize, usize)]) -> DichotomyFit {
    if m_minus.iter().all(|&(_, m)| m == 0) {
        return DichotomyFit { all_zero: true, a: 0.0, b: 0.0, bound_holds: true };
    }
    let n = m_minus.len() as f64;
    let mx = m_minus.iter().map(|&(k, _)| k as f64).sum::<f64>() / n;
    let my = m_minus.iter().map(|&(_, m)| m as f64).sum::<f64>() / n;
    let sxy: f64 = m_minus.iter().map(|&(k, m)| (k as f64 - mx) * (m as f64 - my)).sum();
    let sxx: f64 = m_minus.iter().map(|&(k, _)| (k as f64 - mx) * (k as f64 - mx)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - a * mx;
    let mut need = 0.0f64;
    for &(k, mk) in m_minus {
        for &(kl, mkl) in m_minus {
            if kl > k {
                let l = (kl - k) as f64;
                need = need.max(l * a - (mkl as f64 - mk as f64));
            }
        }
    }
    let b = need.max(-intercept).max(0.0);
    DichotomyFit { all_zero: false, a, b, bound_holds: a > 0.0 && need <= b + 1e-12 }
}

pub fn nullity_classes(nullities: &[(usize, usize)]) -> Vec<(usize, Vec<usize>)> {
    let kmax = nullities.iter().map(|&(k, _)| k).max().unwrap_or(0);
    let value = |k: usize| nullities.iter().find(|&&(kk, _)| kk == k).map(|&(_, m)| m);
    let mut assigned = vec![false; kmax + 1];
    let mut out = Vec::new();
    for &(k, m) in nullities {
        if assigned[k] {
            continue;
        }
        assigned[k] = true;
        let mut mults = vec![1];
        let mut j = 2;
        while j * k <= kmax {
            if !assigned[j * k] && value(j * k) == Some(m) {
                assigned[j * k] = true;
                mults.push(j);
            }
            j += 1;
        }
        out.push((k, mults));
    }
    out
}

/// One scan row for `gamma^k`; failures are recorded in the row.
pub fn scan_row(curve: &DiscreteCurve, lag: &dyn Lagrangian, k: usize, opts: &SpectrumOptions) -> ScanRow {
    let row = (|| -> Result<ScanRow> {
        let ck = iterate(curve, k)?;
        let value = action(&ck, lag)?.value;
        let spec = spectrum(&ck, lag, opts)?;
        let oi = orbit_index(&spec, &ck)?;
        let mut flags = Vec::new();
        if spec.threshold_sensitive {
            flags.push(String::from("ThresholdSensitive"));
        }
        Ok(ScanRow {
            k,
            nodes: ck.len(),
            action: value,
            m_minus: oi.m_minus_orbit,
            m_zero_orbit: oi.m_zero_orbit,
            flags,
            error: None,
        })
    })();
    row.unwrap_or_else(|e| ScanRow {
        k,
        nodes: curve.len() * k,
        action: f64::NAN,
        m_minus: 0,
        m_zero_orbit: 0,
        flags: vec![String::from("Error")],
        error: Some(e.to_string()),
    })
}

/// Dichotomy fit, nullity classes and equal-data pairs over scan rows
/// sorted by `k`.
pub fn summarize_scan(mut rows: Vec<ScanRow>) -> ScanReport {
    let ok: Vec<&ScanRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let fit = dichotomy_fit(&ok.iter().map(|r| (r.k, r.m_minus)).collect::<Vec<_>>());
    let nulls: Vec<(usize, usize)> = ok.iter().map(|r| (r.k, r.m_zero_orbit)).collect();
    let nullity_constant = nulls.windows(2).all(|w| w[0].1 == w[1].1);
    let mut flagged_pairs = Vec::new();
    for a in &ok {
        for b in &ok {
            if b.k > a.k && b.k % a.k == 0 && a.m_minus == b.m_minus && a.m_zero_orbit == b.m_zero_orbit {
                flagged_pairs.push((a.k, b.k));
            }
        }
    }
    for r in rows.iter_mut() {
        if flagged_pairs.iter().any(|&(a, b)| a == r.k || b == r.k) {
            r.flags.push(String::from("EqualIndexNullityPair"));
        }
    }
    ScanReport { rows, fit, nullity_classes: nullity_classes(&nulls), nullity_constant, flagged_pairs }
}

/// Index and orbit nullity of `gamma^k` for `k = 1..=k_max` on `N k` nodes.
pub fn iterate_scan(
    curve: &DiscreteCurve,
    lag: &dyn Lagrangian,
    k_max: usize,
    opts: &SpectrumOptions,
) -> Result<ScanReport> {
    if !curve.is_periodic() {
        return Err(Error::NotPeriodic);
    }
    let rows = (1..=k_max).map(|k| scan_row(curve, lag, k, opts)).collect();
    Ok(summarize_scan(rows))
}
