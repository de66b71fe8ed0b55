use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{deo_gap, grad_lambda_unregularized, DualPair, LossSpec, ParamBlocks, VerticalDataset};

/// The stationarity gap at iterate `round`, split into its primal and dual parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub round: usize,
    pub primal_part: f64,
    pub dual_part: f64,
    pub total: f64,
}

fn dist(a: &ParamBlocks, b: &ParamBlocks) -> f64 {
    let mut sq = 0.0;
    for (x, y) in a.blocks.iter().zip(&b.blocks) {
        for (u, v) in x.iter().zip(y) {
            sq += (u - v) * (u - v);
        }
    }
    sq.sqrt()
}

/// Gap from precomputed pieces: `deo_t` is the signed gap `D(theta^(t))`.
/// Without dual updates there is no multiplier to be stationary in and the
/// dual part is zero.
#[allow(clippy::too_many_arguments)]
pub fn gap_from_parts(
    round: usize,
    theta_t: &ParamBlocks,
    theta_next: &ParamBlocks,
    deo_t: f64,
    lam_t: DualPair,
    epsilon: f64,
    eta_t: f64,
    beta: f64,
    dual_active: bool,
) -> GapRecord {
    let primal_part = eta_t * dist(theta_t, theta_next);
    let dual_part = if dual_active {
        let g = grad_lambda_unregularized(deo_t, epsilon);
        let p = DualPair::projected(lam_t.lambda1 + beta * g[0], lam_t.lambda2 + beta * g[1]);
        (lam_t.lambda1 - p.lambda1).hypot(lam_t.lambda2 - p.lambda2) / beta
    } else {
        0.0
    };
    GapRecord { round, primal_part, dual_part, total: primal_part.hypot(dual_part) }
}

/// `eta_t ||theta^(t) - theta^(t+1)||` and
/// `(1/beta) ||lambda^(t) - [lambda^(t) + beta grad_lambda f(theta^(t), lambda^(t))]_+||`,
/// with the plain Lagrangian `f` (no `c_t` term) in the dual part.
#[allow(clippy::too_many_arguments)]
pub fn stationarity_gap(
    data: &VerticalDataset,
    theta_t: &ParamBlocks,
    theta_next: &ParamBlocks,
    lam_t: DualPair,
    spec: &LossSpec,
    eta_t: f64,
    beta: f64,
    round: usize,
) -> Result<GapRecord> {
    theta_next.check_against(data)?;
    let d = deo_gap(data, theta_t)?;
    Ok(gap_from_parts(round, theta_t, theta_next, d, lam_t, spec.epsilon, eta_t, beta, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;

    #[test]
    fn zero_at_a_fixed_point() {
        let d = synth_dataset(30, 6, 2, 0.0, 1).unwrap();
        let spec = LossSpec::for_samples(d.n(), 0.01).unwrap();
        let theta = ParamBlocks::zeros(&d.widths());
        // D(0) = 0, so the ascent direction (-eps, -eps) is projected out at lambda = 0
        let g = stationarity_gap(&d, &theta, &theta, DualPair::zero(), &spec, 100.0, 0.37, 0).unwrap();
        assert_eq!((g.primal_part, g.dual_part, g.total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn matches_a_direct_recomputation() {
        let d = synth_dataset(40, 8, 2, 1.0, 3).unwrap();
        let spec = LossSpec::for_samples(d.n(), 0.01).unwrap();
        let flat: Vec<f64> = (0..8).map(|j| 0.1 * j as f64 - 0.3).collect();
        let a = ParamBlocks::from_flat(&d.widths(), &flat).unwrap();
        let b = ParamBlocks::from_flat(&d.widths(), &flat.iter().map(|x| x * 0.9).collect::<Vec<_>>()).unwrap();
        let lam = DualPair::new(0.02, 0.5).unwrap();
        let (eta, beta) = (50.0, 0.2);
        let g = stationarity_gap(&d, &a, &b, lam, &spec, eta, beta, 7).unwrap();

        let primal = eta * flat.iter().map(|x| (0.1 * x).powi(2)).sum::<f64>().sqrt();
        let dd = crate::model::group_loss(&d, &a, crate::model::Group::A).unwrap()
            - crate::model::group_loss(&d, &a, crate::model::Group::B).unwrap();
        let l1 = (lam.lambda1 + beta * (dd - 0.01)).max(0.0);
        let l2 = (lam.lambda2 + beta * (-dd - 0.01)).max(0.0);
        let dual = ((lam.lambda1 - l1).powi(2) + (lam.lambda2 - l2).powi(2)).sqrt() / beta;
        assert!((g.primal_part - primal).abs() < 1e-12);
        assert!((g.dual_part - dual).abs() < 1e-12);
        assert!((g.total - (primal * primal + dual * dual).sqrt()).abs() < 1e-12);
        assert_eq!(g.round, 7);
    }
}
