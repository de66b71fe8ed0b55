use super::{dot, DualPair, Group, LossSpec, ParamBlocks, VerticalDataset};
use crate::error::{Error, Result};

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic loss `l(z, y) = log(1 + exp(-y z))`.
#[inline]
pub fn per_sample_loss(margin: f64, label: f64) -> f64 {
    softplus(-label * margin)
}

/// `X_i^T theta` for every sample, summed party-ascending per sample.
pub fn margins(data: &VerticalDataset, theta: &ParamBlocks) -> Result<Vec<f64>> {
    theta.check_against(data)?;
    let mut out = vec![0.0; data.n()];
    for (i, acc) in out.iter_mut().enumerate() {
        for (block, t) in data.blocks().iter().zip(&theta.blocks) {
            *acc += dot(block.row(i), t);
        }
    }
    Ok(out)
}

/// `mu * sum_k ||theta_k||^2`, skipping the unpenalized intercept if any.
pub fn regularizer(data: &VerticalDataset, theta: &ParamBlocks, spec: &LossSpec) -> f64 {
    let mut sq = 0.0;
    for (k, block) in theta.blocks.iter().enumerate() {
        for (j, &v) in block.iter().enumerate() {
            if data.unpenalized() != Some((k, j)) {
                sq += v * v;
            }
        }
    }
    spec.reg_weight * sq
}

fn check_margins(data: &VerticalDataset, margins: &[f64]) -> Result<()> {
    if margins.len() != data.n() {
        return Err(Error::Dimension(format!("{} margins for {} samples", margins.len(), data.n())));
    }
    Ok(())
}

pub fn loss_from_margins(
    data: &VerticalDataset,
    margins: &[f64],
    theta: &ParamBlocks,
    spec: &LossSpec,
) -> Result<f64> {
    check_margins(data, margins)?;
    let mut sum = 0.0;
    for (&z, &y) in margins.iter().zip(data.labels()) {
        sum += per_sample_loss(z, y);
    }
    Ok(sum / data.n() as f64 + regularizer(data, theta, spec))
}

/// Regularized empirical risk `L(theta)`.
pub fn loss_value(data: &VerticalDataset, theta: &ParamBlocks, spec: &LossSpec) -> Result<f64> {
    let z = margins(data, theta)?;
    loss_from_margins(data, &z, theta, spec)
}

pub fn group_loss_from_margins(data: &VerticalDataset, margins: &[f64], group: Group) -> Result<f64> {
    check_margins(data, margins)?;
    let idx = data.pos_idx(group);
    if idx.is_empty() {
        return Err(Error::DegenerateGroup(group.tag()));
    }
    let labels = data.labels();
    let mut sum = 0.0;
    for &i in idx {
        sum += per_sample_loss(margins[i], labels[i]);
    }
    Ok(sum / idx.len() as f64)
}

/// Mean unregularized loss over the positive-label samples of `group`.
pub fn group_loss(data: &VerticalDataset, theta: &ParamBlocks, group: Group) -> Result<f64> {
    let z = margins(data, theta)?;
    group_loss_from_margins(data, &z, group)
}

pub fn deo_from_margins(data: &VerticalDataset, margins: &[f64]) -> Result<f64> {
    Ok(group_loss_from_margins(data, margins, Group::A)? - group_loss_from_margins(data, margins, Group::B)?)
}

/// Signed gap `D(theta) = l^a(theta) - l^b(theta)`; its magnitude is the DEO.
pub fn deo_gap(data: &VerticalDataset, theta: &ParamBlocks) -> Result<f64> {
    let z = margins(data, theta)?;
    deo_from_margins(data, &z)
}

/// `L(theta) + lambda1 (D - eps) - lambda2 (D + eps)`.
pub fn lagrangian(data: &VerticalDataset, theta: &ParamBlocks, lam: &DualPair, spec: &LossSpec) -> Result<f64> {
    lam.check()?;
    let z = margins(data, theta)?;
    let loss = loss_from_margins(data, &z, theta, spec)?;
    let d = deo_from_margins(data, &z)?;
    Ok(loss + lam.lambda1 * (d - spec.epsilon) - lam.lambda2 * (d + spec.epsilon))
}

/// Lagrangian minus `(c_t / 2) ||lambda||^2`.
pub fn reg_lagrangian(
    data: &VerticalDataset,
    theta: &ParamBlocks,
    lam: &DualPair,
    spec: &LossSpec,
    c_t: f64,
) -> Result<f64> {
    let f = lagrangian(data, theta, lam, spec)?;
    if c_t == 0.0 {
        return Ok(f);
    }
    Ok(f - 0.5 * c_t * (lam.lambda1 * lam.lambda1 + lam.lambda2 * lam.lambda2))
}
