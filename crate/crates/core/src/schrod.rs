//! Finite-difference transverse operators
//! `L^k_λ = −d²/dy² + k²(1 − λV₀ − W) − k²α δ₀` on `[−y_max, y_max]`.
//!
//! Unknowns live on the interior nodes `y_j = −y_max + jh`, Dirichlet at
//! both ends. The delta is a `−k²α/h` diagonal term at `y = 0`. At a step
//! interface node the coefficient is the average of the two sides. Inner
//! products are `⟨u, v⟩_h = h Σ u_j v_j`.

use serde::Serialize;

use crate::domain::{PotentialSpec, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, BandMatrix, LowRankSolver};
use crate::tridiag::SymTridiag;

/// Uniform symmetric grid; `ys` are the interior (unknown) nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub h: f64,
    pub y_max: f64,
    pub ys: Vec<f64>,
    /// Index of `y = 0` in `ys`.
    pub center: usize,
}

impl Grid {
    /// `n_y` points on `[0, y_max]` including both ends.
    pub fn new(y_max: f64, n_y: usize) -> Result<Self> {
        if !(y_max > 0.0) || n_y < 3 {
            return Err(Error::Grid(format!("need y_max > 0 and n_y ≥ 3, got {y_max}, {n_y}")));
        }
        let h = y_max / (n_y - 1) as f64;
        let half = n_y as i64 - 2;
        let ys = (-half..=half).map(|j| j as f64 * h).collect();
        Ok(Self { h, y_max, ys, center: half as usize })
    }

    pub fn from_config(cfg: &SolverConfig) -> Result<Self> {
        Self::new(cfg.y_max, cfg.n_y)
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    /// Index of the node at `y`, if `y` is a grid node.
    pub fn node_of(&self, y: f64) -> Option<usize> {
        let r = y / self.h;
        if (r - r.round()).abs() > 1e-9 * r.abs().max(1.0) {
            return None;
        }
        let j = r.round() as i64 + self.center as i64;
        (j >= 0 && (j as usize) < self.ys.len()).then_some(j as usize)
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.h * dot(u, v)
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }
}

/// `y` on the grid and on or beyond `y_max` is fine; otherwise an interface
/// inside the domain must be a node.
pub fn check_interface(grid: &Grid, y: f64) -> Result<()> {
    if y.abs() >= grid.y_max || grid.node_of(y).is_some() {
        Ok(())
    } else {
        Err(Error::InterfaceOffGrid(y))
    }
}

/// `(V₀, W)` at a node, averaging the two sides on a step interface.
pub fn node_coefficients(spec: &PotentialSpec, y: f64, h: f64) -> (f64, f64) {
    match spec.step() {
        None => (1.0, 0.0),
        Some((beta, b)) => {
            let d = y.abs() - b;
            if d.abs() <= 1e-9 * h {
                (0.5, 0.5 * beta)
            } else if d > 0.0 {
                (1.0, 0.0)
            } else {
                (0.0, beta)
            }
        }
    }
}

/// `Γ` at a node, averaging the two sides on a profile endpoint.
pub fn node_gamma(spec: &PotentialSpec, y: f64, h: f64) -> f64 {
    let eps = 1e-9 * h;
    let left = spec.gamma_at(y - eps);
    let right = spec.gamma_at(y + eps);
    0.5 * (left + right)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteOperator {
    pub k: usize,
    pub lambda: f64,
    pub grid: Grid,
    pub diag: Vec<f64>,
    /// Uniform off-diagonal `−1/h²`.
    pub off: f64,
    pub delta_node: usize,
    /// `k²V₀` at each node: `−∂T/∂λ`.
    pub dlambda: Vec<f64>,
}

/// Assembles `L^k_λ` on the configured grid.
pub fn build_operator(spec: &PotentialSpec, k: usize, lambda: f64, cfg: &SolverConfig) -> Result<DiscreteOperator> {
    let grid = Grid::from_config(cfg)?;
    build_on_grid(spec, k, lambda, grid)
}

pub fn build_on_grid(spec: &PotentialSpec, k: usize, lambda: f64, grid: Grid) -> Result<DiscreteOperator> {
    if !(lambda < 1.0) {
        return Err(Error::Regime(format!("lambda = {lambda} must be < 1")));
    }
    if let Some((_, b)) = spec.step() {
        check_interface(&grid, b)?;
        check_interface(&grid, -b)?;
    }
    let h = grid.h;
    let k2 = (k * k) as f64;
    let mut diag = Vec::with_capacity(grid.len());
    let mut dlambda = Vec::with_capacity(grid.len());
    for &y in &grid.ys {
        let (v0, w) = node_coefficients(spec, y, h);
        diag.push(2.0 / (h * h) + k2 * (1.0 - lambda * v0 - w));
        dlambda.push(k2 * v0);
    }
    let delta_node = grid.center;
    diag[delta_node] -= k2 * spec.alpha / h;
    Ok(DiscreteOperator { k, lambda, grid, diag, off: -1.0 / (h * h), delta_node, dlambda })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Normalized to `⟨u, u⟩_h = 1`; largest-magnitude entry positive.
    pub vector: Vec<f64>,
}

impl DiscreteOperator {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, u: &[f64]) -> Vec<f64> {
        self.tridiag().matvec(u)
    }

    pub fn tridiag(&self) -> SymTridiag {
        SymTridiag::new(self.diag.clone(), vec![self.off; self.n().saturating_sub(1)])
    }

    pub fn band(&self) -> BandMatrix {
        let n = self.n();
        let mut b = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            b.set(i, i, self.diag[i]);
            if i + 1 < n {
                b.set(i, i + 1, self.off);
                b.set(i + 1, i, self.off);
            }
        }
        b
    }
}

/// The `m` eigenpairs of smallest `|eigenvalue|`, sorted by magnitude.
pub fn smallest_eigs(op: &DiscreteOperator, m: usize) -> Result<Vec<EigenPair>> {
    let t = op.tridiag();
    let vals = t.eigenvalues_near_zero(m);
    let mut unit: Vec<Vec<f64>> = Vec::with_capacity(vals.len());
    let mut out = Vec::with_capacity(vals.len());
    for &v in &vals {
        let x = t.eigenvector(v, &unit)?;
        unit.push(x.clone());
        out.push(EigenPair { value: v, vector: h_normalized(&op.grid, x) });
    }
    Ok(out)
}

fn h_normalized(grid: &Grid, mut x: Vec<f64>) -> Vec<f64> {
    let n = grid.norm(&x);
    let imax = x
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv + 1e-12 * bv { (i, v.abs()) } else { (bi, bv) })
        .0;
    let s = if x[imax] < 0.0 { -1.0 / n } else { 1.0 / n };
    for v in &mut x {
        *v *= s;
    }
    x
}

/// Solves `(T + P)u = rhs` with `P = ⟨·, φ*⟩_h φ*` when `phi_star` is given,
/// else `T u = rhs`. `φ*` must satisfy `⟨φ*, φ*⟩_h = 1`.
pub fn projected_solve(op: &DiscreteOperator, phi_star: Option<&[f64]>, rhs: &[f64]) -> Result<Vec<f64>> {
    let solver = ProjectedSolver::new(op, phi_star)?;
    solver.solve(rhs)
}

/// Factorized form of the (projected) operator for repeated solves.
pub struct ProjectedSolver {
    inner: LowRankSolver,
}

impl ProjectedSolver {
    pub fn new(op: &DiscreteOperator, phi_star: Option<&[f64]>) -> Result<Self> {
        let n = op.n();
        let mut base = op.band();
        let mut updates = Vec::new();
        if let Some(phi) = phi_star {
            if phi.len() != n {
                return Err(Error::Mismatch { left: phi.len(), right: n });
            }
            // T alone is (nearly) singular along φ*; pin the delta node to get a
            // well-conditioned banded base and undo the pin in the low-rank part
            let c = op.delta_node;
            let theta = op.diag[c].abs() + 2.0 / (op.grid.h * op.grid.h);
            base.add(c, c, theta);
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let w: Vec<f64> = phi.iter().map(|p| op.grid.h * p).collect();
            updates.push((phi.to_vec(), w));
            updates.push((e.clone(), e.iter().map(|x| -theta * x).collect()));
        }
        let inner = LowRankSolver::new(base, updates)?;
        Ok(Self { inner })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.iter().all(|&r| r == 0.0) {
            return Ok(vec![0.0; rhs.len()]);
        }
        let (u, res) = self.inner.solve(rhs, 4, 1e-14);
        // backward error: residual against ‖A‖‖u‖ + ‖rhs‖
        let scale = self.inner.norm_estimate() * norm2(&u) + norm2(rhs);
        if !(res <= 1e-12 * scale) {
            return Err(Error::Singular(format!("relative residual {:e} after refinement", res / scale)));
        }
        Ok(u)
    }
}

/// Centered first difference with Dirichlet ends.
pub fn centered_diff(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|i| {
            let l = if i > 0 { u[i - 1] } else { 0.0 };
            let r = if i + 1 < n { u[i + 1] } else { 0.0 };
            (r - l) / (2.0 * grid.h)
        })
        .collect()
}

/// `(‖L⁻¹‖, ‖D L⁻¹‖)` in the `⟨·,·⟩_h` norm by power iteration, with the
/// projected operator when `phi_star` is given.
pub fn inverse_norms(op: &DiscreteOperator, phi_star: Option<&[f64]>, iters: usize) -> Result<(f64, f64)> {
    let solver = ProjectedSolver::new(op, phi_star)?;
    let grid = &op.grid;
    let n = op.n();
    let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.6180339887498949).fract()).collect();

    // ‖L⁻¹‖: the projected operator is symmetric, so iterate L⁻¹ itself
    let mut x = start.clone();
    let mut est = 0.0;
    for _ in 0..iters {
        let nx = grid.norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let y = solver.solve(&x)?;
        est = grid.norm(&y);
        x = y;
    }
    let inv = est;

    // ‖D L⁻¹‖² is the top eigenvalue of L⁻¹ DᵀD L⁻¹ (Dᵀ = −D here)
    let mut x = start;
    let mut dest = 0.0;
    for _ in 0..iters {
        let nx = grid.norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let y = solver.solve(&x)?;
        let dy = centered_diff(grid, &y);
        dest = grid.norm(&dy);
        let back: Vec<f64> = centered_diff(grid, &dy).iter().map(|v| -v).collect();
        x = solver.solve(&back)?;
    }
    Ok((inv, dest))
}

/// Discrete bifurcation parameter: the `λ` near `lambda_guess` at which the
/// eigenvalue of `T_{k}(λ)` nearest zero vanishes. Returns `λ*_h` and the
/// kernel vector there.
pub fn discrete_lambda_star(
    spec: &PotentialSpec,
    k: usize,
    lambda_guess: f64,
    grid: &Grid,
) -> Result<(f64, EigenPair)> {
    let op = build_on_grid(spec, k, lambda_guess, grid.clone())?;
    let t = op.tridiag();
    let c0 = t.count_below(0.0);
    let near = t.eigenvalues_near_zero(1)[0];
    let index = if near < 0.0 { c0 - 1 } else { c0 };
    let mut lambda = lambda_guess;
    for _ in 0..50 {
        let op = build_on_grid(spec, k, lambda, grid.clone())?;
        let t = op.tridiag();
        let mu = t.eigenvalue(index);
        let x = t.eigenvector(mu, &[])?;
        // Hellmann–Feynman: dμ/dλ = −Σ k²V₀ x²
        let slope = -op.dlambda.iter().zip(&x).map(|(d, v)| d * v * v).sum::<f64>();
        if slope == 0.0 {
            return Err(Error::Degenerate);
        }
        let step = mu / slope;
        lambda -= step;
        if step.abs() <= 1e-15 * (1.0 + lambda.abs()) || mu == 0.0 {
            break;
        }
    }
    let op = build_on_grid(spec, k, lambda, grid.clone())?;
    let t = op.tridiag();
    let mu = t.eigenvalue(index);
    let x = t.eigenvector(mu, &[])?;
    Ok((lambda, EigenPair { value: mu, vector: h_normalized(grid, x) }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{a_coeff, alpha_star};
    use crate::domain::GammaInterval;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn cfg(y_max: f64, n_y: usize) -> SolverConfig {
        SolverConfig { y_max, n_y, ..SolverConfig::default() }
    }

    #[test]
    fn grid_layout() {
        let g = Grid::new(2.0, 5).unwrap();
        assert_eq!(g.h, 0.5);
        assert_eq!(g.ys, vec![-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5]);
        assert_eq!(g.center, 3);
        assert_eq!(g.node_of(1.0), Some(5));
        assert_eq!(g.node_of(0.7), None);
    }

    #[test]
    fn off_grid_step_is_rejected() {
        let spec = PotentialSpec::p2_distributional(1.0, 0.5, 1.03, 1.0);
        let err = build_operator(&spec, 1, 0.0, &cfg(10.0, 101)).unwrap_err();
        assert!(matches!(err, Error::InterfaceOffGrid(_)));
        assert!(err.to_string().contains("interface off-grid"));
        let spec = PotentialSpec::p2_distributional(1.0, 0.5, 1.1, 1.0);
        assert!(build_operator(&spec, 1, 0.0, &cfg(10.0, 101)).is_ok());
    }

    #[test]
    fn free_box_ground_state() {
        let spec = PotentialSpec::p1_distributional(0.0, 1.0);
        for y_max in [5.0, 10.0] {
            let op = build_operator(&spec, 1, 0.0, &cfg(y_max, 2001)).unwrap();
            let e = smallest_eigs(&op, 1).unwrap();
            let exact = 1.0 + (PI / (2.0 * y_max)).powi(2);
            assert!((e[0].value - exact).abs() < 1e-4, "{} vs {exact}", e[0].value);
        }
    }

    #[test]
    fn clustered_continuum_levels() {
        // strong delta at k = 5: the even and odd box levels above k² pair up
        // with gaps near 1e-5, below the residual tolerance
        let spec = PotentialSpec::p1_distributional(2.0, 1.0);
        let op = build_operator(&spec, 5, 0.0, &cfg(40.0, 8001)).unwrap();
        let pairs = smallest_eigs(&op, 3).unwrap();
        assert!((pairs[1].value - pairs[0].value).abs() < 1e-4);
        for p in &pairs {
            let r = op.matvec(&p.vector);
            let res = r.iter().zip(&p.vector).map(|(a, b)| (a - p.value * b).powi(2)).sum::<f64>().sqrt();
            assert!(res * op.grid.h.sqrt() < 1e-6, "{res}");
        }
        assert!(op.grid.inner(&pairs[0].vector, &pairs[1].vector).abs() < 1e-8);
    }

    #[test]
    fn symmetric_and_orthogonal() {
        let base = PotentialSpec::p2_distributional(0.0, -1.0, 1.0, 1.0);
        let spec = base.with_alpha(alpha_star(&base, 1, 0.0).unwrap());
        let op = build_operator(&spec, 2, 0.0, &cfg(10.0, 401)).unwrap();
        let band = op.band();
        for i in 0..op.n() - 1 {
            assert_eq!(band.get(i, i + 1), band.get(i + 1, i));
        }
        let pairs = smallest_eigs(&op, 5).unwrap();
        for i in 0..pairs.len() {
            assert!((op.grid.norm(&pairs[i].vector) - 1.0).abs() < 1e-12);
            let r = op.matvec(&pairs[i].vector);
            for (a, b) in r.iter().zip(&pairs[i].vector) {
                assert!((a - pairs[i].value * b).abs() < 1e-6 * (1.0 + op.diag[op.delta_node].abs()));
            }
            for j in 0..i {
                assert!(op.grid.inner(&pairs[i].vector, &pairs[j].vector).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn bound_state_matches_closed_form() {
        let base = PotentialSpec::p1_distributional(0.0, 1.0);
        let spec = base.with_alpha(alpha_star(&base, 1, 0.0).unwrap());
        let mut errs = Vec::new();
        for n_y in [2001, 4001] {
            let op = build_operator(&spec, 1, 0.0, &cfg(20.0, n_y)).unwrap();
            let e = &smallest_eigs(&op, 1).unwrap()[0];
            // closed-form eigenvalue of the node-delta scheme
            let h = op.grid.h;
            let exact = 1.0 - 2.0 * ((1.0 + h * h).sqrt() - 1.0) / (h * h);
            assert!((e.value - exact).abs() < 1e-9, "{} vs {exact}", e.value);
            let err = op
                .grid
                .ys
                .iter()
                .zip(&e.vector)
                .map(|(y, v)| (v - (-y.abs()).exp()).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < errs[0] && errs[1] < 5e-3, "{errs:?}");
    }

    #[test]
    fn discrete_jump_condition() {
        let base = PotentialSpec::p1_distributional(0.0, 1.0);
        let spec = base.with_alpha(alpha_star(&base, 2, 0.3).unwrap());
        let op = build_operator(&spec, 2, 0.3, &cfg(15.0, 3001)).unwrap();
        let u = &smallest_eigs(&op, 1).unwrap()[0].vector;
        let c = op.delta_node;
        let h = op.grid.h;
        let right = (u[c + 1] - u[c]) / h;
        let left = (u[c] - u[c - 1]) / h;
        let jump = right - left;
        let expected = -4.0 * spec.alpha * u[c];
        assert!((jump - expected).abs() < 20.0 * h * expected.abs(), "{jump} vs {expected}");
    }

    #[test]
    fn dispersion_sign_change_matches_eigenvalue_crossing() {
        let base = PotentialSpec::p2_distributional(0.0, 0.0, 1.0, 1.0);
        let spec = base.with_alpha(alpha_star(&base, 1, 0.0).unwrap());
        let grid = Grid::new(20.0, 4001).unwrap();
        let (lh, pair) = discrete_lambda_star(&spec, 1, 0.0, &grid).unwrap();
        assert!(pair.value.abs() < 1e-9);
        assert!(lh.abs() < 5e-3, "{lh}");
        // A changes sign between the same two λ samples as the eigenvalue
        for (lo, hi) in [(-0.05, 0.05), (-0.02, 0.02)] {
            let a_lo = a_coeff(&spec, 1, lo).unwrap();
            let a_hi = a_coeff(&spec, 1, hi).unwrap();
            let e_lo = smallest_eigs(&build_on_grid(&spec, 1, lo, grid.clone()).unwrap(), 1).unwrap()[0].value;
            let e_hi = smallest_eigs(&build_on_grid(&spec, 1, hi, grid.clone()).unwrap(), 1).unwrap()[0].value;
            assert!(a_lo.signum() != a_hi.signum());
            assert!(e_lo.signum() != e_hi.signum());
        }
    }

    #[test]
    fn projected_solve_basics() {
        let base = PotentialSpec::p1_distributional(0.0, 1.0);
        let spec = base.with_alpha(alpha_star(&base, 1, 0.0).unwrap());
        let grid = Grid::new(20.0, 2001).unwrap();
        let (lh, pair) = discrete_lambda_star(&spec, 1, 0.0, &grid).unwrap();
        let op = build_on_grid(&spec, 1, lh, grid).unwrap();
        let phi = &pair.vector;
        let u = projected_solve(&op, Some(phi), phi).unwrap();
        for (a, b) in u.iter().zip(phi) {
            assert!((a - b).abs() < 1e-9);
        }
        let zero = projected_solve(&op, Some(phi), &vec![0.0; op.n()]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        // the unprojected operator is singular here
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rhs: Vec<f64> = (0..op.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u = projected_solve(&op, Some(phi), &rhs).unwrap();
        let mut back = op.matvec(&u);
        let c = op.grid.inner(phi, &u);
        for (b, p) in back.iter_mut().zip(phi) {
            *b += c * p;
        }
        let err = back.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn resolvent_decay_rates() {
        let base = PotentialSpec::p1_distributional(0.0, 1.0);
        let spec = base.with_alpha(alpha_star(&base, 1, 0.0).unwrap());
        let c = cfg(20.0, 2001);
        let mut a = Vec::new();
        let mut b = Vec::new();
        for k in [2, 4, 8, 16] {
            let op = build_operator(&spec, k, 0.0, &c).unwrap();
            let (inv, dinv) = inverse_norms(&op, None, 40).unwrap();
            a.push(inv * (k * k) as f64);
            b.push(dinv * k as f64);
        }
        let spread = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread(&a) < 2.0, "{a:?}");
        assert!(spread(&b) < 2.0, "{b:?}");
    }

    #[test]
    fn interface_nodes_average() {
        let spec = PotentialSpec::p2_distributional(1.0, 0.4, 1.0, 1.0);
        assert_eq!(node_coefficients(&spec, 1.0, 0.01), (0.5, 0.2));
        assert_eq!(node_coefficients(&spec, -0.5, 0.01), (0.0, 0.4));
        let reg = PotentialSpec::p1_regular(1.0, vec![GammaInterval { y_lo: -1.0, y_hi: 1.0, value: 2.0 }]);
        assert_eq!(node_gamma(&reg, 1.0, 0.01), 1.0);
        assert_eq!(node_gamma(&reg, 0.0, 0.01), 2.0);
    }
}
