//! Exhaustive / coordinate search for the per-antenna fractional delays
//! that minimize channel-pair correlation.
//!
//! Two objectives are offered: the condition number of the virtual channel
//! (the headline metric of the evaluation) and the covariance
//! diagonalization residual of the transmit-side shaped channels. The
//! covariance metric deliberately never touches the receive-side
//! interpolation; equalization is a receiver concern and stays out of the
//! delay search.

use crate::numerics::{condition_number, svd, ComplexMatrix, NumericsError, C64};
use crate::shaping::{tx_interpolation_matrix, ShapingConfig, ShapingError, ShapingOperators};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("delay search grid is empty (grid_points_per_dim must be >= 2)")]
    EmptyGrid,
    #[error("evaluation budget {budget} cannot cover the search ({needed} evaluations needed)")]
    BudgetExceeded { budget: usize, needed: usize },
    #[error("covariance matrix has non-positive diagonal entry {0}")]
    NonPositiveDiagonal(f64),
    #[error(transparent)]
    Shaping(#[from] ShapingError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Objective used to rank candidate delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayMetric {
    /// Mean condition number of the virtual channel over the ensemble.
    ConditionNumber,
    /// Mean diagonalization residual of the shaped-channel covariance.
    CovarianceDiagonalization,
}

#[derive(Debug, Clone)]
pub struct DelaySearchConfig {
    pub grid_points_per_dim: usize,
    /// Half-width of the singular-value acceptance interval [1-eps, 1+eps].
    pub epsilon: f64,
    /// Channel draws averaged per candidate.
    pub ensemble_size: usize,
    pub metric: DelayMetric,
    /// Delays are searched strictly inside (0, max_delay).
    pub max_delay: f64,
    /// Cap on (candidate, draw) metric evaluations.
    pub max_evaluations: usize,
}

impl Default for DelaySearchConfig {
    fn default() -> Self {
        Self {
            grid_points_per_dim: 100,
            epsilon: 0.3,
            ensemble_size: 200,
            metric: DelayMetric::ConditionNumber,
            max_delay: 1.0,
            max_evaluations: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DelaySearchResult {
    /// Per-antenna delays including the fixed leading zero.
    pub delays: Vec<f64>,
    pub objective_value: f64,
    /// Every evaluated candidate (free delays only) with its metric value,
    /// in evaluation order.
    pub metric_trace: Vec<(Vec<f64>, f64)>,
    /// Whether all singular values of the ensemble-averaged, norm-scaled
    /// virtual channel at the optimum lie in [1 - eps, 1 + eps].
    pub sv_within_epsilon: bool,
}

/// Transmit-side shaped-channel covariance R_x.
///
/// The shaped channel of antenna u is its column of H spread over the
/// interpolator I(tau_u); R_x is the Hermitian Gram of those stacked
/// columns, an (N_t M) x (N_t M) matrix whose (u, v) block is
/// (H^H H)_{uv} I(tau_u)^H I(tau_v). Built from transmit matrices only.
pub fn shaped_channel_covariance(
    h: &ComplexMatrix,
    delays: &[f64],
    cfg: &ShapingConfig,
) -> Result<ComplexMatrix, OptimizerError> {
    if delays.len() != h.cols() {
        return Err(ShapingError::DelayCountMismatch {
            expected: h.cols(),
            got: delays.len(),
        }
        .into());
    }
    let tx: Vec<ComplexMatrix> = delays
        .iter()
        .map(|&t| tx_interpolation_matrix(cfg.m_len, cfg.n_samples(), t, cfg.symbol_period))
        .collect::<Result<_, _>>()?;
    let stacked = stack_shaped(h, &tx);
    Ok(stacked.hermitian().matmul(&stacked))
}

fn stack_shaped(h: &ComplexMatrix, tx: &[ComplexMatrix]) -> ComplexMatrix {
    let (n_rx, n_tx) = (h.rows(), h.cols());
    let (bn, bm) = (tx[0].rows(), tx[0].cols());
    let mut out = ComplexMatrix::zeros(n_rx * bn, n_tx * bm);
    for i in 0..n_rx {
        for j in 0..n_tx {
            let g = h[(i, j)];
            for r in 0..bn {
                for c in 0..bm {
                    out[(i * bn + r, j * bm + c)] = g * tx[j][(r, c)];
                }
            }
        }
    }
    out
}

/// Distance of the diagonally normalized covariance from the identity:
/// J = || D^{-1/2} R_x D^{-1/2} - I ||_F, zero iff R_x is diagonal.
pub fn diagonalization_objective(r_x: &ComplexMatrix) -> Result<f64, OptimizerError> {
    assert!(r_x.is_square(), "covariance must be square");
    let n = r_x.rows();
    let mut dinv = Vec::with_capacity(n);
    for i in 0..n {
        let d = r_x[(i, i)].re;
        if d <= 0.0 {
            return Err(OptimizerError::NonPositiveDiagonal(d));
        }
        dinv.push(1.0 / d.sqrt());
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut z = r_x[(i, j)] * C64::new(dinv[i] * dinv[j], 0.0);
            if i == j {
                z -= C64::new(1.0, 0.0);
            }
            acc += z.norm_sqr();
        }
    }
    Ok(acc.sqrt())
}

/// Condition number of the virtual channel for `h` at the given delays.
pub fn condition_metric(
    h: &ComplexMatrix,
    delays: &[f64],
    cfg: &ShapingConfig,
) -> Result<f64, OptimizerError> {
    let full = ShapingConfig {
        delays: delays.to_vec(),
        ..cfg.clone()
    };
    let ops = ShapingOperators::new(&full, h.cols())?;
    let (h_n, _) = ops.reduced_channel(h)?;
    Ok(condition_number(&h_n))
}

fn mean_metric(
    ensemble: &[ComplexMatrix],
    delays: &[f64],
    cfg: &ShapingConfig,
    metric: DelayMetric,
) -> Result<f64, OptimizerError> {
    let n = ensemble.len() as f64;
    match metric {
        DelayMetric::ConditionNumber => {
            let full = ShapingConfig {
                delays: delays.to_vec(),
                ..cfg.clone()
            };
            let ops = ShapingOperators::new(&full, delays.len())?;
            let mut acc = 0.0;
            for h in ensemble {
                let (h_n, _) = ops.reduced_channel(h)?;
                acc += condition_number(&h_n);
            }
            Ok(acc / n)
        }
        DelayMetric::CovarianceDiagonalization => {
            let tx: Vec<ComplexMatrix> = delays
                .iter()
                .map(|&t| tx_interpolation_matrix(cfg.m_len, cfg.n_samples(), t, cfg.symbol_period))
                .collect::<Result<_, _>>()?;
            let mut acc = 0.0;
            for h in ensemble {
                let stacked = stack_shaped(h, &tx);
                let r_x = stacked.hermitian().matmul(&stacked);
                acc += diagonalization_objective(&r_x)?;
            }
            Ok(acc / n)
        }
    }
}

/// Exhaustive 1-D scan (two antennas) or coarse-grid-plus-refinement
/// coordinate search (larger arrays) over fractional delays.
///
/// The channel ensemble is drawn once from `channel_source` (indices
/// 0..ensemble_size) and shared by every candidate, so candidates are
/// compared on common random numbers and the search is deterministic
/// regardless of evaluation parallelism. Ties break toward smaller delays
/// by strict-improvement scanning in grid order.
pub fn optimize_delays(
    channel_source: impl Fn(u64) -> ComplexMatrix + Sync,
    n_tx: usize,
    search: &DelaySearchConfig,
    cfg: &ShapingConfig,
) -> Result<DelaySearchResult, OptimizerError> {
    assert!(n_tx >= 2, "delay search needs at least two transmit antennas");
    if search.grid_points_per_dim < 2 || search.max_delay <= 0.0 {
        return Err(OptimizerError::EmptyGrid);
    }
    let dims = n_tx - 1;
    let ensemble: Vec<ComplexMatrix> = (0..search.ensemble_size as u64)
        .map(&channel_source)
        .collect();

    let candidate_budget = search.max_evaluations / search.ensemble_size.max(1);
    let candidates: Vec<Vec<f64>> = if dims == 1 {
        let g = search.grid_points_per_dim;
        if g > candidate_budget {
            return Err(OptimizerError::BudgetExceeded {
                budget: search.max_evaluations,
                needed: g * search.ensemble_size,
            });
        }
        grid_axis(g, search.max_delay).into_iter().map(|t| vec![t]).collect()
    } else {
        coarse_candidates(dims, search, candidate_budget)?
    };

    let evaluate = |free: &[f64]| -> Result<f64, OptimizerError> {
        let mut full = Vec::with_capacity(n_tx);
        full.push(0.0);
        full.extend_from_slice(free);
        mean_metric(&ensemble, &full, cfg, search.metric)
    };

    let values: Vec<f64> = candidates
        .par_iter()
        .map(|c| evaluate(c))
        .collect::<Result<_, _>>()?;

    let mut trace: Vec<(Vec<f64>, f64)> = candidates.into_iter().zip(values).collect();
    let mut best_idx = 0;
    for i in 1..trace.len() {
        if trace[i].1 < trace[best_idx].1 {
            best_idx = i;
        }
    }
    let mut best = trace[best_idx].clone();

    if dims > 1 {
        // One local refinement pass per coordinate around the coarse winner.
        let g_coarse = ((trace.len() as f64).powf(1.0 / dims as f64)).round() as usize;
        let step = search.max_delay / (g_coarse + 1) as f64;
        let remaining = candidate_budget.saturating_sub(trace.len());
        let per_coord = (remaining / dims).min(search.grid_points_per_dim);
        for coord in 0..dims {
            if per_coord == 0 {
                break;
            }
            let center = best.0[coord];
            let lo = (center - step).max(0.0);
            let hi = (center + step).min(search.max_delay);
            for i in 0..per_coord {
                let t = lo + (i + 1) as f64 * (hi - lo) / (per_coord + 1) as f64;
                if t <= 0.0 || t >= search.max_delay {
                    continue;
                }
                let mut cand = best.0.clone();
                cand[coord] = t;
                let v = evaluate(&cand)?;
                trace.push((cand.clone(), v));
                if v < best.1 {
                    best = (cand, v);
                }
            }
        }
    }

    let mut delays = Vec::with_capacity(n_tx);
    delays.push(0.0);
    delays.extend_from_slice(&best.0);

    let sv_within_epsilon = averaged_sv_check(&ensemble, &delays, cfg, search.epsilon)?;
    Ok(DelaySearchResult {
        delays,
        objective_value: best.1,
        metric_trace: trace,
        sv_within_epsilon,
    })
}

fn grid_axis(points: usize, max_delay: f64) -> Vec<f64> {
    (1..=points)
        .map(|i| i as f64 * max_delay / (points + 1) as f64)
        .collect()
}

fn coarse_candidates(
    dims: usize,
    search: &DelaySearchConfig,
    candidate_budget: usize,
) -> Result<Vec<Vec<f64>>, OptimizerError> {
    // Leave a quarter of the budget for the refinement pass.
    let coarse_budget = (candidate_budget * 3) / 4;
    let mut g = (coarse_budget as f64).powf(1.0 / dims as f64).floor() as usize;
    g = g.min(search.grid_points_per_dim);
    if g < 2 {
        return Err(OptimizerError::BudgetExceeded {
            budget: search.max_evaluations,
            needed: (1 << dims) * search.ensemble_size,
        });
    }
    let axis = grid_axis(g, search.max_delay);
    let mut out = Vec::with_capacity(axis.len().pow(dims as u32));
    let mut idx = vec![0usize; dims];
    loop {
        out.push(idx.iter().map(|&i| axis[i]).collect());
        let mut d = dims;
        loop {
            if d == 0 {
                return Ok(out);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < axis.len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Average the norm-scaled virtual channels at the chosen delays and check
/// that the singular values of the mean sit inside [1 - eps, 1 + eps].
fn averaged_sv_check(
    ensemble: &[ComplexMatrix],
    delays: &[f64],
    cfg: &ShapingConfig,
    epsilon: f64,
) -> Result<bool, OptimizerError> {
    if ensemble.is_empty() {
        return Ok(false);
    }
    let full = ShapingConfig {
        delays: delays.to_vec(),
        ..cfg.clone()
    };
    let ops = ShapingOperators::new(&full, delays.len())?;
    let l = ensemble[0].rows().min(ensemble[0].cols());
    let mut mean = ComplexMatrix::zeros(l, l);
    for h in ensemble {
        let (h_n, _) = ops.reduced_channel(h)?;
        // Scale to ||.||_F = sqrt(L) so a perfectly balanced channel has
        // unit singular values.
        let scaled = h_n.scaled_re((l as f64).sqrt() / h_n.frobenius_norm());
        mean = mean.add(&scaled);
    }
    mean = mean.scaled_re(1.0 / ensemble.len() as f64);
    let dec = svd(&mean)?;
    Ok(dec
        .sigma
        .iter()
        .all(|&s| s >= 1.0 - epsilon && s <= 1.0 + epsilon))
}
