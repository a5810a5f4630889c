//! Robust trend extraction: least absolute deviations with first- and
//! second-difference penalties.
//!
//! The trend `tau` minimizes
//!
//! ```text
//! sum_i |y_i - tau_i| + lambda1 * sum_i |tau_{i+1} - tau_i|
//!                     + lambda2 * sum_i |tau_i - 2 tau_{i+1} + tau_{i+2}|
//! ```
//!
//! The absolute-value data term bounds the influence of outliers, the
//! first-difference term tracks abrupt level shifts, and the
//! second-difference term smooths slow drift.
//!
//! With `A = [I; D1; D2]`, `b = [y; 0; 0]` and per-row weights
//! `w = [1; lambda1; lambda2]`, the objective is the linear program
//! `min sum_i w_i |a_i tau - b_i|`. It is solved with a primal-dual
//! path-following method: every Newton step reduces to the pentadiagonal
//! normal matrix `A^T D A` for an iteration-dependent positive diagonal `D`,
//! which a banded Cholesky factors and solves in O(n). Convergence is
//! certified by the gap against the box dual
//! `max b^T nu  s.t.  A^T nu = 0, |nu_i| <= w_i`, so a returned fit carries
//! an optimality certificate instead of a heuristic stopping state. Warm
//! starts reuse the previous trend and dual certificate, which is what makes
//! frequent re-solves on a moving window cheap.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fraction of the step to the positivity boundary actually taken.
const FRACTION_TO_BOUNDARY: f64 = 0.995;
/// Least relative distance from the dual box bound after the pre-iteration
/// pull; checks for immediate convergence use the exact box.
const INTERIOR_MARGIN: f64 = 1e-4;
/// Largest relative pull off the dual box bound when balancing
/// complementarity products at a warm start.
const INTERIOR_MARGIN_MAX: f64 = 0.5;
/// Bounds on the Newton diagonal, keeping the normal matrix factorable when
/// complementarity products collapse.
const G_MIN: f64 = 1e-12;
const G_MAX: f64 = 1e12;

/// Stopping parameters for trend extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Absolute tolerance on feasibility and duality gap.
    pub eps_abs: f64,
    /// Relative tolerance on feasibility and duality gap.
    pub eps_rel: f64,
    /// Newton step budget before the solve is declared failed.
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            max_iterations: 2000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_abs.is_finite() && self.eps_abs > 0.0)
            || !(self.eps_rel.is_finite() && self.eps_rel > 0.0)
        {
            return Err(Error::validation("solver tolerances must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation("solver needs at least one iteration"));
        }
        Ok(())
    }
}

/// A converged trend solve, carrying the dual certificate needed to
/// warm-start the next solve on overlapping data.
#[derive(Debug, Clone)]
pub struct TrendFit {
    pub trend: Vec<f64>,
    /// Objective value achieved by `trend`.
    pub objective: f64,
    /// Newton steps spent in the solve that produced this fit.
    pub iterations: usize,
    /// Dual certificate, one entry per stacked row, inside the weight box.
    u: Vec<f64>,
}

impl TrendFit {
    /// Re-aligns this fit onto a shifted window of the same stream: the first
    /// `drop` points fall off the front and `new_y` is the data now in view.
    /// The trend tail is extended by its last slope; the dual certificate is
    /// shifted blockwise, with fresh rows initialized neutrally.
    pub fn shifted(&self, drop: usize, new_y: &[f64]) -> TrendFit {
        let old_n = self.trend.len();
        let kept = old_n.saturating_sub(drop);
        let n = new_y.len();

        let mut trend = Vec::with_capacity(n);
        trend.extend_from_slice(&self.trend[old_n - kept..]);
        let slope = if kept >= 2 {
            trend[kept - 1] - trend[kept - 2]
        } else {
            0.0
        };
        let mut last = *trend.last().unwrap_or(&0.0);
        while trend.len() < n {
            last += slope;
            trend.push(last);
        }
        trend.truncate(n);

        let blocks = StackedOp::new(n);
        let mut u = vec![0.0; blocks.rows()];
        let old_blocks = StackedOp::new(old_n);
        for block in 0..3 {
            let (old_start, old_len) = old_blocks.block(block);
            let (new_start, new_len) = blocks.block(block);
            let take = old_len.saturating_sub(drop).min(new_len);
            let src = &self.u[old_start + (old_len - take)..old_start + old_len];
            u[new_start..new_start + take].copy_from_slice(src);
        }

        TrendFit {
            trend,
            objective: f64::INFINITY,
            iterations: 0,
            u,
        }
    }
}

/// The stacked operator `A = [I; D1; D2]` applied implicitly.
struct StackedOp {
    n: usize,
}

impl StackedOp {
    fn new(n: usize) -> Self {
        StackedOp { n }
    }

    fn rows(&self) -> usize {
        3 * self.n - 3
    }

    /// (start, len) of block 0 (data), 1 (first difference), 2 (second).
    fn block(&self, index: usize) -> (usize, usize) {
        match index {
            0 => (0, self.n),
            1 => (self.n, self.n - 1),
            _ => (2 * self.n - 1, self.n - 2),
        }
    }

    fn apply(&self, tau: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.rows());
        out.extend_from_slice(tau);
        for i in 0..n - 1 {
            out.push(tau[i + 1] - tau[i]);
        }
        for i in 0..n - 2 {
            out.push(tau[i] - 2.0 * tau[i + 1] + tau[i + 2]);
        }
        out
    }

    fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = v[..n].to_vec();
        let d1 = &v[n..2 * n - 1];
        for (i, &w) in d1.iter().enumerate() {
            out[i] -= w;
            out[i + 1] += w;
        }
        let d2 = &v[2 * n - 1..];
        for (i, &w) in d2.iter().enumerate() {
            out[i] += w;
            out[i + 1] -= 2.0 * w;
            out[i + 2] += w;
        }
        out
    }
}

/// Cholesky factor of a symmetric positive definite pentadiagonal matrix,
/// stored as three diagonals of the lower-triangular factor.
struct BandedCholesky {
    diag: Vec<f64>,
    sub1: Vec<f64>,
    sub2: Vec<f64>,
}

impl BandedCholesky {
    /// Factors `I + lambda1 D1^T D1 + lambda2 D2^T D2` for size `n >= 3`.
    fn normal_matrix(n: usize, lambda1: f64, lambda2: f64) -> Result<Self> {
        let mut g = vec![lambda1; 3 * n - 3];
        for gi in g.iter_mut().take(n) {
            *gi = 1.0;
        }
        for gi in g.iter_mut().skip(2 * n - 1) {
            *gi = lambda2;
        }
        Self::weighted_normal_matrix(n, &g)
    }

    /// Factors `A^T diag(g) A` for the stacked operator on `n` points, with
    /// one non-negative weight per stacked row. The data block must keep the
    /// matrix positive definite (any strictly positive data weights do).
    fn weighted_normal_matrix(n: usize, g: &[f64]) -> Result<Self> {
        let mut diag = vec![0.0; n];
        let mut sub1 = vec![0.0; n];
        let mut sub2 = vec![0.0; n];
        for i in 0..n {
            diag[i] += g[i];
        }
        for i in 0..n - 1 {
            let w = g[n + i];
            diag[i] += w;
            diag[i + 1] += w;
            sub1[i + 1] -= w;
        }
        for i in 0..n - 2 {
            let w = g[2 * n - 1 + i];
            diag[i] += w;
            diag[i + 1] += 4.0 * w;
            diag[i + 2] += w;
            sub1[i + 1] -= 2.0 * w;
            sub1[i + 2] -= 2.0 * w;
            sub2[i + 2] += w;
        }
        Self::factor(diag, sub1, sub2)
    }

    /// Factors `M = L L^T` in place. Input arrays hold the main diagonal and
    /// the two subdiagonals of `M` (entry `sub1[i] = M[i][i-1]`,
    /// `sub2[i] = M[i][i-2]`); on return they hold the same bands of `L`.
    fn factor(mut diag: Vec<f64>, mut sub1: Vec<f64>, mut sub2: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        for i in 0..n {
            if i >= 2 {
                sub2[i] /= diag[i - 2];
            }
            if i >= 1 {
                let correction = if i >= 2 { sub2[i] * sub1[i - 1] } else { 0.0 };
                sub1[i] = (sub1[i] - correction) / diag[i - 1];
            }
            let mut d = diag[i];
            if i >= 1 {
                d -= sub1[i] * sub1[i];
            }
            if i >= 2 {
                d -= sub2[i] * sub2[i];
            }
            if d <= 0.0 {
                return Err(Error::Numeric(format!(
                    "normal matrix lost positive definiteness at row {i}"
                )));
            }
            diag[i] = d.sqrt();
        }
        Ok(BandedCholesky { diag, sub1, sub2 })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut x = rhs.to_vec();
        for i in 0..n {
            let mut v = x[i];
            if i >= 1 {
                v -= self.sub1[i] * x[i - 1];
            }
            if i >= 2 {
                v -= self.sub2[i] * x[i - 2];
            }
            x[i] = v / self.diag[i];
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            if i + 1 < n {
                v -= self.sub1[i + 1] * x[i + 1];
            }
            if i + 2 < n {
                v -= self.sub2[i + 2] * x[i + 2];
            }
            x[i] = v / self.diag[i];
        }
        x
    }
}

/// Reusable trend solver for a fixed problem size and penalty pair.
pub struct TrendSolver {
    n: usize,
    lambda1: f64,
    lambda2: f64,
    config: SolverConfig,
    op: StackedOp,
    /// Curvature-penalized least-squares factor; produces the cold-start
    /// trend estimate with one banded solve.
    init_chol: BandedCholesky,
}

/// One Newton direction of the path-following iteration.
struct Direction {
    tau: Vec<f64>,
    nu: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl TrendSolver {
    pub fn new(n: usize, lambda1: f64, lambda2: f64, config: SolverConfig) -> Result<Self> {
        if n < 3 {
            return Err(Error::validation(format!(
                "trend extraction needs at least 3 points, got {n}"
            )));
        }
        if !(lambda1.is_finite() && lambda1 >= 0.0) || !(lambda2.is_finite() && lambda2 >= 0.0) {
            return Err(Error::validation("penalty weights must be non-negative"));
        }
        config.validate()?;
        Ok(TrendSolver {
            n,
            lambda1,
            lambda2,
            config,
            op: StackedOp::new(n),
            init_chol: BandedCholesky::normal_matrix(n, lambda1, lambda2)?,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Block weight of row `i` of the stacked operator.
    fn row_weight(&self, i: usize) -> f64 {
        if i < self.n {
            1.0
        } else if i < 2 * self.n - 1 {
            self.lambda1
        } else {
            self.lambda2
        }
    }

    /// Objective value of a candidate trend against data `y`.
    pub fn objective(&self, y: &[f64], tau: &[f64]) -> f64 {
        let mut obj = 0.0;
        for i in 0..self.n {
            obj += (y[i] - tau[i]).abs();
        }
        for i in 0..self.n - 1 {
            obj += self.lambda1 * (tau[i + 1] - tau[i]).abs();
        }
        for i in 0..self.n - 2 {
            obj += self.lambda2 * (tau[i] - 2.0 * tau[i + 1] + tau[i + 2]).abs();
        }
        obj
    }

    /// Solves one Newton system given the shared factor and complementarity
    /// right-hand sides; `r_prim` is `b - A tau + p - q` on active rows.
    #[allow(clippy::too_many_arguments)]
    fn newton_direction(
        &self,
        chol: &BandedCholesky,
        g: &[f64],
        active: &[bool],
        s_p: &[f64],
        s_q: &[f64],
        p: &[f64],
        q: &[f64],
        nu: &[f64],
        r_prim: &[f64],
        rc_p: &[f64],
        rc_q: &[f64],
    ) -> Direction {
        let rows = self.op.rows();
        let mut weighted = vec![0.0; rows];
        for i in 0..rows {
            if !active[i] {
                continue;
            }
            let r1 = r_prim[i] + rc_p[i] / s_p[i] - rc_q[i] / s_q[i];
            weighted[i] = g[i] * r1 + nu[i];
        }
        let rhs = self.op.apply_transpose(&weighted);
        let d_tau = chol.solve(&rhs);
        let a_dtau = self.op.apply(&d_tau);

        let mut d_nu = vec![0.0; rows];
        let mut d_p = vec![0.0; rows];
        let mut d_q = vec![0.0; rows];
        for i in 0..rows {
            if !active[i] {
                continue;
            }
            let r1 = r_prim[i] + rc_p[i] / s_p[i] - rc_q[i] / s_q[i];
            d_nu[i] = g[i] * (r1 - a_dtau[i]);
            d_p[i] = (rc_p[i] - p[i] * d_nu[i]) / s_p[i];
            d_q[i] = (rc_q[i] + q[i] * d_nu[i]) / s_q[i];
        }
        Direction {
            tau: d_tau,
            nu: d_nu,
            p: d_p,
            q: d_q,
        }
    }

    /// Runs the path-following iteration to a certified optimum, optionally
    /// warm-started from a fit whose length matches this solver (mismatched
    /// fits are ignored).
    pub fn solve(&self, y: &[f64], warm: Option<&TrendFit>) -> Result<TrendFit> {
        if y.len() != self.n {
            return Err(Error::validation(format!(
                "series length {} does not match solver size {}",
                y.len(),
                self.n
            )));
        }
        let n = self.n;
        let rows = self.op.rows();
        let b = |i: usize| if i < n { y[i] } else { 0.0 };

        let w: Vec<f64> = (0..rows).map(|i| self.row_weight(i)).collect();
        let active: Vec<bool> = w.iter().map(|&wi| wi > 0.0).collect();
        let pairs = 2.0 * active.iter().filter(|&&a| a).count() as f64;

        let warm_fit = match warm {
            Some(fit) if fit.trend.len() == n && fit.u.len() == rows => Some(fit),
            _ => None,
        };

        // A warm trend is kept only when it actually beats the one banded
        // least-squares solve a cold start would use; a stale or badly
        // extrapolated guess must not start the iteration behind it.
        let (mut tau, warm_primal) = match warm_fit {
            Some(fit) => {
                let ls = self.init_chol.solve(y);
                if self.objective(y, &ls) < self.objective(y, &fit.trend) {
                    (ls, false)
                } else {
                    (fit.trend.clone(), true)
                }
            }
            None => (self.init_chol.solve(y), false),
        };
        let mut a_tau = self.op.apply(&tau);

        // Strictly interior split: p - q reproduces the row residuals
        // exactly, so primal feasibility starts at zero; the common offset
        // keeps both sides positive. Warm starts begin closer to the
        // complementarity boundary.
        let mut spread = 0.0f64;
        for i in 0..rows {
            if active[i] {
                spread = spread.max((a_tau[i] - b(i)).abs());
            }
        }
        let offset = if warm_primal { 1e-3 } else { 0.1 } * (1.0 + spread);
        let mut p = vec![0.0; rows];
        let mut q = vec![0.0; rows];
        for i in 0..rows {
            if !active[i] {
                continue;
            }
            let r = a_tau[i] - b(i);
            p[i] = r.max(0.0) + offset;
            q[i] = (-r).max(0.0) + offset;
        }
        // The dual starts on the exact box so a warm certificate that is
        // already optimal passes the first convergence check as-is.
        let mut nu = vec![0.0; rows];
        if let Some(fit) = warm_fit {
            for i in 0..rows {
                if active[i] {
                    nu[i] = fit.u[i].clamp(-w[i], w[i]);
                }
            }
        }

        let norm_b_inf = y.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let dual_scale = 1.0 + 2.0 * self.lambda1 + 4.0 * self.lambda2;

        let mut iterations = 0;
        let mut converged = false;
        let mut objective;
        let mut pulled_inside = false;

        loop {
            // Convergence check: split feasibility, dual feasibility, and
            // the certified duality gap on the true objective.
            let mut prim_inf = 0.0f64;
            let mut scale_inf = norm_b_inf;
            for i in 0..rows {
                if !active[i] {
                    continue;
                }
                scale_inf = scale_inf.max(a_tau[i].abs()).max((p[i] - q[i]).abs());
                prim_inf = prim_inf.max((b(i) - a_tau[i] + p[i] - q[i]).abs());
            }
            let at_nu = self.op.apply_transpose(&nu);
            let dual_inf = at_nu.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            objective = self.objective(y, &tau);
            let dual_value: f64 = (0..n).map(|i| y[i] * nu[i]).sum();
            let gap = objective - dual_value;

            let eps_prim = self.config.eps_abs + self.config.eps_rel * scale_inf;
            let eps_dual = self.config.eps_abs + self.config.eps_rel * dual_scale;
            let eps_gap = self.config.eps_abs + self.config.eps_rel * objective.abs();
            if prim_inf <= eps_prim && dual_inf <= eps_dual && gap <= eps_gap {
                converged = true;
                break;
            }
            if iterations == self.config.max_iterations {
                break;
            }
            iterations += 1;

            if !pulled_inside {
                // The barrier needs strict interiority; one-time pull,
                // fraction-to-boundary damping maintains it afterwards. The
                // per-row margin equalizes the initial complementarity
                // products near 2 * w * offset: a dual left almost on its
                // bound next to a large residual would otherwise start with
                // products spread over many orders of magnitude, which
                // stalls the centering steps.
                for i in 0..rows {
                    if active[i] {
                        let resid = (a_tau[i] - b(i)).abs();
                        let margin = (2.0 * offset / (resid + offset))
                            .clamp(INTERIOR_MARGIN, INTERIOR_MARGIN_MAX);
                        let cap = w[i] * (1.0 - margin);
                        nu[i] = nu[i].clamp(-cap, cap);
                    }
                }
                pulled_inside = true;
            }

            let mut s_p = vec![0.0; rows];
            let mut s_q = vec![0.0; rows];
            let mut g = vec![0.0; rows];
            let mut gap_c = 0.0;
            for i in 0..rows {
                if !active[i] {
                    continue;
                }
                s_p[i] = w[i] + nu[i];
                s_q[i] = w[i] - nu[i];
                gap_c += p[i] * s_p[i] + q[i] * s_q[i];
                let d = p[i] / s_p[i] + q[i] / s_q[i];
                g[i] = (1.0 / d).clamp(G_MIN, G_MAX);
            }
            let mu = gap_c / pairs;
            let chol = BandedCholesky::weighted_normal_matrix(n, &g)?;

            let mut r_prim = vec![0.0; rows];
            for i in 0..rows {
                if active[i] {
                    r_prim[i] = b(i) - a_tau[i] + p[i] - q[i];
                }
            }

            // Predictor: pure Newton step toward complementarity zero.
            let mut rc_p = vec![0.0; rows];
            let mut rc_q = vec![0.0; rows];
            for i in 0..rows {
                if active[i] {
                    rc_p[i] = -p[i] * s_p[i];
                    rc_q[i] = -q[i] * s_q[i];
                }
            }
            let aff =
                self.newton_direction(&chol, &g, &active, &s_p, &s_q, &p, &q, &nu, &r_prim, &rc_p, &rc_q);

            let alpha_p_aff = boundary_step(&p, &aff.p, &active)
                .min(boundary_step(&q, &aff.q, &active))
                .min(1.0);
            let neg_dnu: Vec<f64> = aff.nu.iter().map(|v| -v).collect();
            let alpha_d_aff = boundary_step(&s_p, &aff.nu, &active)
                .min(boundary_step(&s_q, &neg_dnu, &active))
                .min(1.0);

            let mut gap_aff = 0.0;
            for i in 0..rows {
                if !active[i] {
                    continue;
                }
                gap_aff += (p[i] + alpha_p_aff * aff.p[i]) * (s_p[i] + alpha_d_aff * aff.nu[i])
                    + (q[i] + alpha_p_aff * aff.q[i]) * (s_q[i] - alpha_d_aff * aff.nu[i]);
            }
            let sigma = if gap_c > 0.0 {
                (gap_aff / gap_c).clamp(0.0, 1.0).powi(3)
            } else {
                0.0
            };
            let target = sigma * mu;

            // Corrector: recenter and compensate the predictor's
            // second-order complementarity products.
            for i in 0..rows {
                if active[i] {
                    rc_p[i] = target - p[i] * s_p[i] - aff.p[i] * aff.nu[i];
                    rc_q[i] = target - q[i] * s_q[i] + aff.q[i] * aff.nu[i];
                }
            }
            let dir =
                self.newton_direction(&chol, &g, &active, &s_p, &s_q, &p, &q, &nu, &r_prim, &rc_p, &rc_q);

            let alpha_p = (FRACTION_TO_BOUNDARY
                * boundary_step(&p, &dir.p, &active).min(boundary_step(&q, &dir.q, &active)))
            .min(1.0);
            let neg_dnu: Vec<f64> = dir.nu.iter().map(|v| -v).collect();
            let alpha_d = (FRACTION_TO_BOUNDARY
                * boundary_step(&s_p, &dir.nu, &active).min(boundary_step(&s_q, &neg_dnu, &active)))
            .min(1.0);

            for i in 0..n {
                tau[i] += alpha_p * dir.tau[i];
            }
            for i in 0..rows {
                if !active[i] {
                    continue;
                }
                p[i] += alpha_p * dir.p[i];
                q[i] += alpha_p * dir.q[i];
                nu[i] += alpha_d * dir.nu[i];
            }
            a_tau = self.op.apply(&tau);
        }

        if !converged {
            return Err(Error::NonConvergence {
                iterations,
                objective,
            });
        }
        if !objective.is_finite() {
            return Err(Error::Numeric(
                "trend solve produced a non-finite objective".to_string(),
            ));
        }
        Ok(TrendFit {
            trend: tau,
            objective,
            iterations,
            u: nu,
        })
    }
}

/// Largest step `alpha` keeping `x + alpha * dx > 0` on active rows,
/// unbounded when no component decreases.
fn boundary_step(x: &[f64], dx: &[f64], active: &[bool]) -> f64 {
    let mut step = f64::INFINITY;
    for i in 0..x.len() {
        if active[i] && dx[i] < 0.0 {
            step = step.min(-x[i] / dx[i]);
        }
    }
    step
}
