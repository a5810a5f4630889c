//! Independent oracles and corpus generators shared by the integration
//! tests. Everything here is deliberately implemented from first principles,
//! separate from the library code it checks.

#![allow(dead_code)]

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use rtad_core::LabeledSeries;

/// Solves the trend program
/// `min sum |y - tau| + lambda1 sum |D1 tau| + lambda2 sum |D2 tau|`
/// as an explicit linear program with an off-the-shelf conic solver,
/// returning the optimal trend and objective. The epigraph form introduces
/// one bound variable per penalized row: minimize `w^T t` subject to
/// `±(a_i^T tau - b_i) <= t_i`.
pub fn lp_trend_oracle(y: &[f64], lambda1: f64, lambda2: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    assert!(n >= 3, "oracle needs at least 3 points");

    // Stacked rows with non-zero weight: (tau coefficients, rhs, weight).
    let mut rows: Vec<(Vec<(usize, f64)>, f64, f64)> = Vec::new();
    for i in 0..n {
        rows.push((vec![(i, 1.0)], y[i], 1.0));
    }
    if lambda1 > 0.0 {
        for i in 0..n - 1 {
            rows.push((vec![(i, -1.0), (i + 1, 1.0)], 0.0, lambda1));
        }
    }
    if lambda2 > 0.0 {
        for i in 0..n - 2 {
            rows.push((
                vec![(i, 1.0), (i + 1, -2.0), (i + 2, 1.0)],
                0.0,
                lambda2,
            ));
        }
    }

    let m = rows.len();
    let vars = n + m;
    let mut cost = vec![0.0; vars];
    for (k, row) in rows.iter().enumerate() {
        cost[n + k] = row.2;
    }

    // Two inequality rows per penalized row, stacked densely then converted.
    let mut dense = vec![vec![0.0; vars]; 2 * m];
    let mut rhs = vec![0.0; 2 * m];
    for (k, (coeffs, b, _)) in rows.iter().enumerate() {
        for &(j, c) in coeffs {
            dense[2 * k][j] = c;
            dense[2 * k + 1][j] = -c;
        }
        dense[2 * k][n + k] = -1.0;
        dense[2 * k + 1][n + k] = -1.0;
        rhs[2 * k] = *b;
        rhs[2 * k + 1] = -b;
    }

    let p = CscMatrix::zeros((vars, vars));
    let a = CscMatrix::from(dense.iter());
    let cones = [NonnegativeConeT(2 * m)];
    let settings = DefaultSettings {
        verbose: false,
        ..DefaultSettings::default()
    };
    let mut solver =
        DefaultSolver::new(&p, &cost, &a, &rhs, &cones, settings).expect("LP setup failed");
    solver.solve();
    assert!(
        matches!(
            solver.solution.status,
            SolverStatus::Solved | SolverStatus::AlmostSolved
        ),
        "LP oracle did not solve: {:?}",
        solver.solution.status
    );
    let tau = solver.solution.x[..n].to_vec();
    (tau, solver.solution.obj_val)
}

/// Maximum one-to-one matching between prediction indices and truth indices
/// where a pair is compatible iff their distance is at most `m`. Classic
/// augmenting-path search; exponential in nothing, exact everywhere.
pub fn max_matching(preds: &[usize], truths: &[usize], m: usize) -> usize {
    fn augment(
        u: usize,
        preds: &[usize],
        truths: &[usize],
        m: i64,
        seen: &mut [bool],
        matched_truth: &mut [Option<usize>],
    ) -> bool {
        for (v, &t) in truths.iter().enumerate() {
            if seen[v] || (preds[u] as i64 - t as i64).abs() > m {
                continue;
            }
            seen[v] = true;
            let free = match matched_truth[v] {
                None => true,
                Some(owner) => augment(owner, preds, truths, m, seen, matched_truth),
            };
            if free {
                matched_truth[v] = Some(u);
                return true;
            }
        }
        false
    }

    let mut matched_truth = vec![None; truths.len()];
    let mut count = 0;
    for u in 0..preds.len() {
        let mut seen = vec![false; truths.len()];
        if augment(u, preds, truths, m as i64, &mut seen, &mut matched_truth) {
            count += 1;
        }
    }
    count
}

/// Profile of one synthetic anomaly-detection series.
pub struct SeriesSpec {
    pub len: usize,
    pub period: usize,
    pub noise_sigma: f64,
}

/// Fixed-seed synthetic corpus for the ablation and baseline gates:
/// 20 drifting seasonal series of 1,440 points with period 24, point spikes
/// of 8 to 15 noise sigmas in both directions, and one persistent level
/// shift per half. Labels mark spike points and each shift onset; the
/// anomaly rate lands near 1%.
pub fn ablation_corpus(seed: u64) -> Vec<LabeledSeries> {
    let len = 1440usize;
    let period = 24usize;
    let sigma = 0.15f64;
    (0..20u64)
        .map(|series_index| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x51ab << 8) ^ series_index);
            let amplitude = rng.random_range(0.8..1.2);
            let drift = rng.random_range(-0.0006..0.0006);
            let phase0 = rng.random_range(0.0..std::f64::consts::TAU);

            let mut values: Vec<f64> = (0..len)
                .map(|t| {
                    let phase = t as f64 / period as f64 * std::f64::consts::TAU + phase0;
                    amplitude * phase.sin()
                        + drift * t as f64
                        + sigma * (rng.random::<f64>() - 0.5) * 3.46
                })
                .collect();
            let mut labels = vec![false; len];

            // Five point spikes per half, kept clear of the boundaries and
            // of each other so labels stay unambiguous.
            for half in 0..2 {
                let base = half * (len / 2);
                let mut taken: Vec<usize> = Vec::new();
                while taken.len() < 5 {
                    let t = base + rng.random_range(60..len / 2 - 60);
                    if taken.iter().any(|&u| t.abs_diff(u) < 16) {
                        continue;
                    }
                    let magnitude = rng.random_range(8.0..15.0) * sigma;
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    values[t] += sign * magnitude;
                    labels[t] = true;
                    taken.push(t);
                }

                // One persistent level shift; only its onset is anomalous.
                let onset = loop {
                    let t = base + rng.random_range(120..len / 2 - 120);
                    if taken.iter().all(|&u| t.abs_diff(u) >= 16) {
                        break t;
                    }
                };
                let magnitude = rng.random_range(0.9..1.4);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                for value in &mut values[onset..base + len / 2] {
                    *value += sign * magnitude;
                }
                labels[onset] = true;
            }

            LabeledSeries::from_parts((0..len as i64).collect(), values, labels)
                .expect("corpus construction is well-formed")
        })
        .collect()
}
