//! Empirical laws on H, moments, exact 𝕎₂ and the bounded-Lipschitz metric d_P.

use std::io::Write;
use std::sync::OnceLock;

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Largest cloud size accepted by the exact assignment solver.
pub const MAX_ASSIGNMENT: usize = 256;

const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug)]
pub struct EmpiricalMeasure {
    atoms: Vec<SpectralField>,
    weights: Vec<f64>,
    uniform: bool,
    distances: OnceLock<Vec<f64>>,
}

impl Clone for EmpiricalMeasure {
    fn clone(&self) -> Self {
        Self {
            atoms: self.atoms.clone(),
            weights: self.weights.clone(),
            uniform: self.uniform,
            distances: OnceLock::new(),
        }
    }
}

impl EmpiricalMeasure {
    pub fn uniform(atoms: Vec<SpectralField>) -> Result<Self> {
        let m = atoms.len();
        if m == 0 {
            return Err(Error::MeasureMismatch("a measure needs at least one atom".into()));
        }
        let w = vec![1.0 / m as f64; m];
        let mut mu = Self::new(atoms, w)?;
        mu.uniform = true;
        Ok(mu)
    }

    pub fn new(atoms: Vec<SpectralField>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::MeasureMismatch(format!(
                "{} atoms against {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::MeasureMismatch("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::MeasureMismatch(format!("weights sum to {total}")));
        }
        for a in &atoms[1..] {
            atoms[0].same_grid(a)?;
        }
        let uniform = weights.iter().all(|w| *w == weights[0]);
        Ok(Self { atoms, weights, uniform, distances: OnceLock::new() })
    }

    pub fn dirac(atom: SpectralField) -> Self {
        Self::uniform(vec![atom]).expect("one atom")
    }

    pub fn atoms(&self) -> &[SpectralField] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// ∫‖x‖ᵖ_H dμ.
    pub fn moment_p(&self, p: u32) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * a.h_norm_sq().sqrt().powi(p as i32))
            .sum()
    }

    /// Membership in the ball {μ : (∫‖x‖ᵖ dμ)^{1/p} ≤ r}.
    pub fn in_ball(&self, p: u32, r: f64) -> bool {
        self.moment_p(p).powf(1.0 / p as f64) <= r
    }

    /// Scales every atom by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|a| a.scaled(c)).collect(),
            weights: self.weights.clone(),
            uniform: self.uniform,
            distances: OnceLock::new(),
        }
    }

    /// Row-major pairwise H-distances between atoms, computed once.
    pub fn pairwise_distances(&self) -> &[f64] {
        self.distances.get_or_init(|| {
            let m = self.len();
            let mut d = vec![0.0; m * m];
            for i in 0..m {
                for j in i + 1..m {
                    let v = self.atoms[i].dist_sq(&self.atoms[j]).expect("shared grid").sqrt();
                    d[i * m + j] = v;
                    d[j * m + i] = v;
                }
            }
            d
        })
    }
}

fn cross_distances(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<Vec<f64>> {
    let n = nu.len();
    let mut d = vec![0.0; mu.len() * n];
    for (i, a) in mu.atoms.iter().enumerate() {
        for (j, b) in nu.atoms.iter().enumerate() {
            d[i * n + j] = a.dist_sq(b)?.sqrt();
        }
    }
    Ok(d)
}

/// Minimum-cost perfect assignment on an n×n row-major cost matrix, by the
/// O(n³) Hungarian method with potentials. Returns the column of each row.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // p[j]: row matched to column j (1-based, 0 = none).
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

fn check_uniform_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.len() != nu.len() {
        return Err(Error::MeasureMismatch(format!("{} atoms against {}", mu.len(), nu.len())));
    }
    if !(mu.uniform && nu.uniform) {
        return Err(Error::MeasureMismatch("transport needs uniform weights".into()));
    }
    if mu.len() > MAX_ASSIGNMENT {
        return Err(Error::MeasureMismatch(format!(
            "{} atoms exceed the assignment limit {MAX_ASSIGNMENT}",
            mu.len()
        )));
    }
    mu.atoms[0].same_grid(&nu.atoms[0])
}

/// Optimal transport cost (1/M)Σᵢ c(xᵢ, y_{π(i)}) between uniform clouds of
/// equal size for the cost c(x, y) = cost(‖x − y‖_H).
pub fn assignment_cost(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: impl Fn(f64) -> f64) -> Result<f64> {
    check_uniform_pair(mu, nu)?;
    let n = mu.len();
    let c: Vec<f64> = cross_distances(mu, nu)?.into_iter().map(cost).collect();
    let a = min_cost_assignment(&c, n);
    Ok(a.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum::<f64>() / n as f64)
}

/// 𝕎₂ between uniform empirical measures of equal size.
pub fn wasserstein2(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    Ok(assignment_cost(mu, nu, |d| d * d)?.max(0.0).sqrt())
}

const MERGE_TOL: f64 = 1e-9;

/// d_P(μ, ν) = sup{|∫φ dμ − ∫φ dν| : ‖φ‖_∞ + Lip(φ) ≤ 1}, solved exactly as a
/// linear program over the values of φ on the union of the supports.
pub fn dbl_metric(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    mu.atoms[0].same_grid(&nu.atoms[0])?;
    let (m, n) = (mu.len(), nu.len());
    let size = m + n;
    let cross = cross_distances(mu, nu)?;
    let own_mu = mu.pairwise_distances();
    let own_nu = nu.pairwise_distances();
    let dist = |i: usize, j: usize| -> f64 {
        match (i < m, j < m) {
            (true, true) => own_mu[i * m + j],
            (false, false) => own_nu[(i - m) * n + (j - m)],
            (true, false) => cross[i * n + (j - m)],
            (false, true) => cross[j * n + (i - m)],
        }
    };
    let mass = |i: usize| if i < m { mu.weights[i] } else { -nu.weights[i - m] };

    // Coincident atoms make the constraint matrix degenerate (pullback clouds
    // under common noise collapse onto each other), so merge points closer
    // than MERGE_TOL and sum their signed masses. This moves d_P by at most
    // MERGE_TOL.
    let mut reps: Vec<usize> = Vec::new();
    let mut net: Vec<f64> = Vec::new();
    for i in 0..size {
        match reps.iter().position(|&r| dist(r, i) <= MERGE_TOL) {
            Some(c) => net[c] += mass(i),
            None => {
                reps.push(i);
                net.push(mass(i));
            }
        }
    }
    if net.iter().all(|w| w.abs() <= 1e-15) {
        return Ok(0.0);
    }

    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let a: Vec<_> = net.iter().map(|&w| lp.add_var(w, (-1.0, 1.0))).collect();
    let s = lp.add_var(0.0, (0.0, 1.0));
    let l = lp.add_var(0.0, (0.0, 1.0));
    lp.add_constraint([(s, 1.0), (l, 1.0)], ComparisonOp::Le, 1.0);
    for i in 0..reps.len() {
        lp.add_constraint([(a[i], 1.0), (s, -1.0)], ComparisonOp::Le, 0.0);
        lp.add_constraint([(a[i], -1.0), (s, -1.0)], ComparisonOp::Le, 0.0);
        for j in i + 1..reps.len() {
            let d = dist(reps[i], reps[j]);
            lp.add_constraint([(a[i], 1.0), (a[j], -1.0), (l, -d)], ComparisonOp::Le, 0.0);
            lp.add_constraint([(a[j], 1.0), (a[i], -1.0), (l, -d)], ComparisonOp::Le, 0.0);
        }
    }
    match lp.solve() {
        Ok(sol) => Ok(sol.objective().clamp(0.0, 2.0)),
        // Near-coincident atoms (pullback clouds under common noise sit ~1e-9
        // apart) can leave the simplex basis numerically singular.
        Err(_) if mu.is_uniform() && nu.is_uniform() && m == n => dbl_metric_dual(mu, nu),
        Err(e) => Err(Error::Solver(e.to_string())),
    }
}

/// d_P between uniform laws of equal size through its dual: for S + L = 1 the
/// inner supremum is the transport cost for the metric min(L d, 2S), which
/// an optimal assignment attains. That cost is concave in S, so a
/// golden-section search over S finds the maximum.
fn dbl_metric_dual(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    let n = mu.len();
    let d = cross_distances(mu, nu)?;
    let value = |s: f64| {
        let c: Vec<f64> = d.iter().map(|&x| ((1.0 - s) * x).min(2.0 * s)).collect();
        let a = min_cost_assignment(&c, n);
        a.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum::<f64>() / n as f64
    };
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (value(x1), value(x2));
    while hi - lo > 1e-14 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = value(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = value(x1);
        }
    }
    Ok(f1.max(f2).clamp(0.0, 2.0))
}

/// Hausdorff semi-distance sup_{a∈A} inf_{b∈B} d_P(a, b).
pub fn hausdorff_semi(a: &[EmpiricalMeasure], b: &[EmpiricalMeasure]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::MeasureMismatch("Hausdorff distance of an empty family".into()));
    }
    let mut worst: f64 = 0.0;
    for x in a {
        let mut best = f64::INFINITY;
        for y in b {
            best = best.min(dbl_metric(x, y)?);
        }
        worst = worst.max(best);
    }
    Ok(worst)
}

/// Writes the table row_id,col_id,w2,dp for every pair across two families.
pub fn write_distance_table<W: Write>(
    rows: &[EmpiricalMeasure],
    cols: &[EmpiricalMeasure],
    out: &mut W,
) -> Result<()> {
    writeln!(out, "row_id,col_id,w2,dp")?;
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            let w2 = match wasserstein2(r, c) {
                Ok(v) => format!("{v:e}"),
                Err(_) => String::new(),
            };
            writeln!(out, "{i},{j},{w2},{:e}", dbl_metric(r, c)?)?;
        }
    }
    Ok(())
}
