use super::loss::{deo_from_margins, margins, reg_lagrangian};
use super::{DualPair, Group, LossSpec, ParamBlocks, VerticalDataset};
use crate::error::{Error, Result};

/// `d/dz log(1 + exp(-y z)) = -y / (1 + exp(y z))`.
#[inline]
pub fn logistic_derivative(margin: f64, label: f64) -> f64 {
    -label / (1.0 + (label * margin).exp())
}

/// Partials of the regularized Lagrangian in `(lambda1, lambda2)` given the signed gap.
#[inline]
pub fn grad_lambda_from_gap(gap: f64, lam: &DualPair, epsilon: f64, c_t: f64) -> [f64; 2] {
    [-c_t * lam.lambda1 + gap - epsilon, -c_t * lam.lambda2 - gap - epsilon]
}

/// `grad_lambda` of the regularized Lagrangian with weight `c_t`.
pub fn grad_lambda(
    data: &VerticalDataset,
    theta: &ParamBlocks,
    lam: &DualPair,
    spec: &LossSpec,
    c_t: f64,
) -> Result<[f64; 2]> {
    lam.check()?;
    let z = margins(data, theta)?;
    let d = deo_from_margins(data, &z)?;
    Ok(grad_lambda_from_gap(d, lam, spec.epsilon, c_t))
}

/// `grad_lambda` of the plain Lagrangian: `(D - eps, -D - eps)`.
pub fn grad_lambda_unregularized(gap: f64, epsilon: f64) -> [f64; 2] {
    [gap - epsilon, -gap - epsilon]
}

/// Block-`k` partial of the (regularized) Lagrangian evaluated at the given
/// per-sample margins, touching only block `k` of the features.
///
/// The data and fairness terms are folded into one per-sample weight
/// `w_i = l'_i / n + (lambda1 - lambda2) (1[i in N^a]/|N^a| - 1[i in N^b]/|N^b|)`
/// and accumulated sample-major as `X_k^T w + 2 mu theta_k`. When
/// `lambda1 == lambda2` the fairness weights are not touched at all.
pub fn grad_block_at_margins(
    data: &VerticalDataset,
    margins: &[f64],
    k: usize,
    theta_k: &[f64],
    lam: &DualPair,
    spec: &LossSpec,
) -> Result<Vec<f64>> {
    if k >= data.parties() {
        return Err(Error::PartyIndex { index: k, parties: data.parties() });
    }
    let block = data.block(k);
    if theta_k.len() != block.cols() || margins.len() != data.n() {
        return Err(Error::Dimension(format!(
            "block {} gradient: theta_k has {} entries for {} features, {} margins for {} samples",
            k + 1,
            theta_k.len(),
            block.cols(),
            margins.len(),
            data.n()
        )));
    }
    let n = data.n() as f64;
    let mut w: Vec<f64> = margins
        .iter()
        .zip(data.labels())
        .map(|(&z, &y)| logistic_derivative(z, y) / n)
        .collect();

    let diff = lam.lambda1 - lam.lambda2;
    if diff != 0.0 {
        let (a, b) = (data.pos_idx(Group::A), data.pos_idx(Group::B));
        if a.is_empty() {
            return Err(Error::DegenerateGroup('a'));
        }
        if b.is_empty() {
            return Err(Error::DegenerateGroup('b'));
        }
        let labels = data.labels();
        let wa = diff / a.len() as f64;
        for &i in a {
            w[i] += wa * logistic_derivative(margins[i], labels[i]);
        }
        let wb = diff / b.len() as f64;
        for &i in b {
            w[i] -= wb * logistic_derivative(margins[i], labels[i]);
        }
    }

    let mut g = block.transpose_mul(&w);
    let two_mu = 2.0 * spec.reg_weight;
    for (j, (gj, &t)) in g.iter_mut().zip(theta_k).enumerate() {
        if data.unpenalized() != Some((k, j)) {
            *gj += two_mu * t;
        }
    }
    Ok(g)
}

/// `grad_k` of the regularized Lagrangian (which does not depend on `c_t`).
pub fn grad_block(
    data: &VerticalDataset,
    theta: &ParamBlocks,
    lam: &DualPair,
    spec: &LossSpec,
    k: usize,
) -> Result<Vec<f64>> {
    lam.check()?;
    if k >= data.parties() {
        return Err(Error::PartyIndex { index: k, parties: data.parties() });
    }
    let z = margins(data, theta)?;
    grad_block_at_margins(data, &z, k, &theta.blocks[k], lam, spec)
}

/// One gradient step `theta_k <- theta_k - grad / eta`.
#[inline]
pub fn descent_step(theta_k: &mut [f64], grad: &[f64], eta: f64) {
    for (t, g) in theta_k.iter_mut().zip(grad) {
        *t -= g / eta;
    }
}

/// Relative error with a unit floor on the denominator so that tiny
/// partials are compared absolutely.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Worst relative error between every analytic partial (all `theta`
/// coordinates plus both multipliers) and a central difference of the
/// regularized Lagrangian with step `h`.
pub fn finite_diff_check(
    data: &VerticalDataset,
    theta: &ParamBlocks,
    lam: &DualPair,
    spec: &LossSpec,
    c_t: f64,
    h: f64,
) -> Result<f64> {
    finite_diff_check_with(data, theta, lam, spec, c_t, h, grad_block, grad_lambda)
}

pub(crate) type BlockGradFn = fn(&VerticalDataset, &ParamBlocks, &DualPair, &LossSpec, usize) -> Result<Vec<f64>>;
pub(crate) type LambdaGradFn = fn(&VerticalDataset, &ParamBlocks, &DualPair, &LossSpec, f64) -> Result<[f64; 2]>;

#[allow(clippy::too_many_arguments)]
pub(crate) fn finite_diff_check_with(
    data: &VerticalDataset,
    theta: &ParamBlocks,
    lam: &DualPair,
    spec: &LossSpec,
    c_t: f64,
    h: f64,
    block_grad: BlockGradFn,
    lambda_grad: LambdaGradFn,
) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::StepSize(h));
    }
    lam.check()?;
    let mut worst = 0.0_f64;

    let mut probe = theta.clone();
    for k in 0..data.parties() {
        let analytic = block_grad(data, theta, lam, spec, k)?;
        for (j, &a) in analytic.iter().enumerate() {
            let orig = probe.blocks[k][j];
            probe.blocks[k][j] = orig + h;
            let up = reg_lagrangian(data, &probe, lam, spec, c_t)?;
            probe.blocks[k][j] = orig - h;
            let down = reg_lagrangian(data, &probe, lam, spec, c_t)?;
            probe.blocks[k][j] = orig;
            worst = worst.max(rel_err(a, (up - down) / (2.0 * h)));
        }
    }

    // The Lagrangian is affine-quadratic in lambda; evaluate it directly so
    // the stencil can step below zero without tripping the feasibility check.
    let analytic = lambda_grad(data, theta, lam, spec, c_t)?;
    let z = margins(data, theta)?;
    let base = super::loss::loss_from_margins(data, &z, theta, spec)?;
    let d = deo_from_margins(data, &z)?;
    let f = |l1: f64, l2: f64| {
        base + l1 * (d - spec.epsilon) - l2 * (d + spec.epsilon) - 0.5 * c_t * (l1 * l1 + l2 * l2)
    };
    let (l1, l2) = (lam.lambda1, lam.lambda2);
    let num1 = (f(l1 + h, l2) - f(l1 - h, l2)) / (2.0 * h);
    let num2 = (f(l1, l2 + h) - f(l1, l2 - h)) / (2.0 * h);
    worst = worst.max(rel_err(analytic[0], num1)).max(rel_err(analytic[1], num2));
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;
    use crate::model::{loss_value, FeatureBlock};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_theta(data: &VerticalDataset, seed: u64, scale: f64) -> ParamBlocks {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat: Vec<f64> = (0..data.m()).map(|_| rng.gen_range(-scale..scale)).collect();
        ParamBlocks::from_flat(&data.widths(), &flat).unwrap()
    }

    #[test]
    fn derivative_is_stable() {
        assert_eq!(logistic_derivative(0.0, 1.0), -0.5);
        assert_eq!(logistic_derivative(0.0, -1.0), 0.5);
        assert_eq!(logistic_derivative(1000.0, 1.0), 0.0);
        assert_eq!(logistic_derivative(-1000.0, 1.0), -1.0);
    }

    #[test]
    fn grad_lambda_examples() {
        let d = synth_dataset(30, 6, 2, 0.0, 1).unwrap();
        let zero = ParamBlocks::zeros(&d.widths());
        let spec = LossSpec::new(0.0, 0.01).unwrap();
        assert_eq!(grad_lambda(&d, &zero, &DualPair::zero(), &spec, 0.3).unwrap(), [-0.01, -0.01]);
        let g = grad_lambda_from_gap(0.05, &DualPair::zero(), 0.01, 0.0);
        assert!((g[0] - 0.04).abs() < 1e-15 && (g[1] + 0.06).abs() < 1e-15);
    }

    #[test]
    fn equal_multipliers_cancel_bitwise() {
        let d = synth_dataset(40, 9, 3, 1.0, 2).unwrap();
        let theta = random_theta(&d, 7, 1.0);
        let spec = LossSpec::new(0.02, 0.01).unwrap();
        for k in 0..3 {
            let base = grad_block(&d, &theta, &DualPair::zero(), &spec, k).unwrap();
            let same = grad_block(&d, &theta, &DualPair::new(2.5, 2.5).unwrap(), &spec, k).unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&base), bits(&same));
        }
    }

    #[test]
    fn balanced_identical_rows_have_zero_data_gradient() {
        let rows = vec![vec![0.5, -2.0, 1.0]; 4];
        let b = FeatureBlock::from_rows(&rows).unwrap();
        let d = VerticalDataset::new(
            vec![b],
            vec![1.0, -1.0, 1.0, -1.0],
            vec![crate::model::Group::A, crate::model::Group::A, crate::model::Group::B, crate::model::Group::B],
        )
        .unwrap();
        let zero = ParamBlocks::zeros(&[3]);
        let g = grad_block(&d, &zero, &DualPair::zero(), &LossSpec::new(0.0, 0.0).unwrap(), 0).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn out_of_range_party() {
        let d = synth_dataset(10, 4, 2, 0.0, 3).unwrap();
        let zero = ParamBlocks::zeros(&d.widths());
        let r = grad_block(&d, &zero, &DualPair::zero(), &LossSpec::new(0.0, 0.0).unwrap(), 2);
        assert!(matches!(r, Err(Error::PartyIndex { index: 2, parties: 2 })));
    }

    #[test]
    fn finite_differences_on_random_instances() {
        for seed in 0..5 {
            let d = synth_dataset(50, 10, 3, 0.8, seed).unwrap();
            let theta = random_theta(&d, seed + 100, 1.0);
            let spec = LossSpec::new(0.02, 0.01).unwrap();
            let lam = DualPair::new(0.4, 1.3).unwrap();
            let err = finite_diff_check(&d, &theta, &lam, &spec, 0.1, 1e-6).unwrap();
            assert!(err < 1e-6, "seed {seed}: {err}");
        }
    }

    #[test]
    fn quadratic_only_problem_is_exact() {
        // Zero features: the logistic term is constant and only mu ||theta||^2 varies.
        let b = FeatureBlock::new(6, 3, vec![0.0; 18]).unwrap();
        let groups = [crate::model::Group::A, crate::model::Group::B].repeat(3);
        let d = VerticalDataset::new(vec![b], vec![1.0; 6], groups).unwrap();
        let theta = ParamBlocks { blocks: vec![vec![0.3, -1.2, 2.0]] };
        let spec = LossSpec::new(0.7, 0.01).unwrap();
        let err = finite_diff_check(&d, &theta, &DualPair::new(0.2, 0.1).unwrap(), &spec, 0.5, 1e-3).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn zero_step_is_rejected() {
        let d = synth_dataset(10, 4, 2, 0.0, 3).unwrap();
        let zero = ParamBlocks::zeros(&d.widths());
        let spec = LossSpec::new(0.0, 0.0).unwrap();
        assert!(matches!(
            finite_diff_check(&d, &zero, &DualPair::zero(), &spec, 0.0, 0.0),
            Err(Error::StepSize(_))
        ));
    }

    #[test]
    fn descent_step_reduces_loss_for_small_steps() {
        let d = synth_dataset(60, 6, 2, 0.0, 5).unwrap();
        let mut theta = ParamBlocks::zeros(&d.widths());
        let spec = LossSpec::for_samples(60, 0.01).unwrap();
        let before = loss_value(&d, &theta, &spec).unwrap();
        for k in 0..2 {
            let g = grad_block(&d, &theta, &DualPair::zero(), &spec, k).unwrap();
            descent_step(&mut theta.blocks[k], &g, 10.0);
        }
        assert!(loss_value(&d, &theta, &spec).unwrap() < before);
    }
}
