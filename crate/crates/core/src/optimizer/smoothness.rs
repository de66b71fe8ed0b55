use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    deo_gap, grad_block, grad_lambda_from_gap, grad_lambda_unregularized, DualPair, LossSpec, ParamBlocks,
    VerticalDataset,
};

/// Sampled lower estimates of the smoothness constants `L`, `L_lambda`, `L12`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessEstimate {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L_lambda")]
    pub l_lambda: f64,
    #[serde(rename = "L12")]
    pub l12: f64,
}

fn full_grad(data: &VerticalDataset, theta: &ParamBlocks, lam: &DualPair, spec: &LossSpec) -> Result<Vec<f64>> {
    let mut g = Vec::with_capacity(data.m());
    for k in 0..data.parties() {
        g.extend(grad_block(data, theta, lam, spec, k)?);
    }
    Ok(g)
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Estimates the constants by secant ratios over `pairs` random pairs.
///
/// Anchor points are drawn as `theta ~ N(0, radius^2 I)`, partners as the
/// anchor plus `N(0, (radius/10)^2 I)`; `L` uses the `theta`-gradient of the
/// Lagrangian at the fixed multipliers `lam`. Each constant is the largest
/// observed ratio, so this is a lower bound on the true constant over the
/// sampled region. `L_lambda` is measured the same way and comes out as 0,
/// since the Lagrangian is affine in `lambda`.
pub fn estimate_smoothness(
    data: &VerticalDataset,
    spec: &LossSpec,
    lam: DualPair,
    pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<SmoothnessEstimate> {
    if pairs == 0 || !(radius > 0.0) {
        return Err(Error::Config("smoothness estimation needs pairs >= 1 and radius > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchor = Normal::new(0.0, radius).expect("positive radius");
    let nudge = Normal::new(0.0, radius / 10.0).expect("positive radius");
    let lam_dist = Normal::new(0.0, 1.0).expect("unit normal");
    let widths = data.widths();
    let mut est = SmoothnessEstimate { l: 0.0, l_lambda: 0.0, l12: 0.0 };

    for _ in 0..pairs {
        let a: Vec<f64> = (0..data.m()).map(|_| anchor.sample(&mut rng)).collect();
        let b: Vec<f64> = a.iter().map(|x| x + nudge.sample(&mut rng)).collect();
        let step = norm(a.iter().zip(&b).map(|(x, y)| x - y));
        let ta = ParamBlocks::from_flat(&widths, &a)?;
        let tb = ParamBlocks::from_flat(&widths, &b)?;

        let ga = full_grad(data, &ta, &lam, spec)?;
        let gb = full_grad(data, &tb, &lam, spec)?;
        est.l = est.l.max(norm(ga.iter().zip(&gb).map(|(x, y)| x - y)) / step);

        let (da, db) = (deo_gap(data, &ta)?, deo_gap(data, &tb)?);
        let (ha, hb) = (grad_lambda_unregularized(da, spec.epsilon), grad_lambda_unregularized(db, spec.epsilon));
        est.l12 = est.l12.max((ha[0] - hb[0]).hypot(ha[1] - hb[1]) / step);

        // the lambda-gradient at two random multiplier pairs, same theta
        let l1 = DualPair::projected(lam_dist.sample(&mut rng), lam_dist.sample(&mut rng));
        let l2 = DualPair::projected(lam_dist.sample(&mut rng), lam_dist.sample(&mut rng));
        let dl = (l1.lambda1 - l2.lambda1).hypot(l1.lambda2 - l2.lambda2);
        if dl > 0.0 {
            let g1 = grad_lambda_from_gap(da, &l1, spec.epsilon, 0.0);
            let g2 = grad_lambda_from_gap(da, &l2, spec.epsilon, 0.0);
            est.l_lambda = est.l_lambda.max((g1[0] - g2[0]).hypot(g1[1] - g2[1]) / dl);
        }
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;

    #[test]
    fn quadratic_only_problem_has_l_equal_two_mu() {
        // all-zero features: the only curvature is the regularizer 2 mu I
        let d = synth_dataset(20, 6, 2, 0.0, 0).unwrap();
        let zero_blocks = d
            .blocks()
            .iter()
            .map(|b| crate::model::FeatureBlock::new(b.rows(), b.cols(), vec![0.0; b.rows() * b.cols()]).unwrap())
            .collect();
        let z = VerticalDataset::new(zero_blocks, d.labels().to_vec(), d.groups().to_vec()).unwrap();
        let spec = LossSpec::new(0.3, 0.01).unwrap();
        let e = estimate_smoothness(&z, &spec, DualPair::zero(), 10, 1.0, 4).unwrap();
        assert!((e.l - 0.6).abs() < 1e-12, "{}", e.l);
        assert_eq!((e.l_lambda, e.l12), (0.0, 0.0));
    }

    #[test]
    fn estimates_are_positive_and_replayable() {
        let d = synth_dataset(50, 10, 3, 0.5, 1).unwrap();
        let spec = LossSpec::for_samples(d.n(), 0.01).unwrap();
        let a = estimate_smoothness(&d, &spec, DualPair::zero(), 8, 1.0, 9).unwrap();
        let b = estimate_smoothness(&d, &spec, DualPair::zero(), 8, 1.0, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.l > 0.0 && a.l12 > 0.0);
        assert!(estimate_smoothness(&d, &spec, DualPair::zero(), 0, 1.0, 9).is_err());
    }
}
