//! The decorrelation regularizers.
//!
//! Two losses over the rows (feature detectors) of a weight matrix Θ:
//!
//! * **Global**: ½ ΣᵢΣ_{k≠i} cos²(θᵢ, θₖ) — penalizes positive *and*
//!   negative correlation between every detector pair.
//! * **Local**: ΣᵢΣ_{k≠i} softplus(λ(⟨θᵢ, θₖ⟩ − 1)) — squashes the penalty
//!   so that pairs beyond roughly 90° stop interacting; negative correlations
//!   are left alone. λ controls how sharp the cut-off is (default 10).
//!
//! Both losses sum over ordered pairs, so each unordered pair contributes
//! twice; the gradients here are the true derivatives of these sums and are
//! verified against central finite differences (see `fdcheck` and the
//! gradient tests).
//!
//! [`reg_step`] packages the full per-layer update: normalize rows, take the
//! gradient there, combine with the task gradient, and optionally restore
//! the original row magnitudes so only angles change.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, DEGENERATE_EPS};

/// Which loss drives the regularization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegMode {
    Global,
    Local,
}

/// Regularizer configuration shared by training and the experiment runners.
#[derive(Debug, Clone)]
pub struct RegConfig {
    pub mode: RegMode,
    /// Strength γ of the decorrelation gradient relative to the task
    /// gradient. γ = 0 disables the regularizer entirely.
    pub gamma: f64,
    /// Locality coefficient λ; only read in `Local` mode.
    pub lambda: f64,
    /// Rescale each updated row back to its pre-step norm, so the
    /// regularizer moves detectors only in angle, never in magnitude.
    pub restore_magnitudes: bool,
    /// Rescale the regularization gradient to unit Frobenius norm before
    /// weighting it by γ.
    pub normalize_reg_grad: bool,
}

pub const DEFAULT_LAMBDA: f64 = 10.0;

impl RegConfig {
    pub fn global(gamma: f64) -> Self {
        Self {
            mode: RegMode::Global,
            gamma,
            lambda: DEFAULT_LAMBDA,
            restore_magnitudes: true,
            normalize_reg_grad: false,
        }
    }

    pub fn local(gamma: f64) -> Self {
        Self {
            mode: RegMode::Local,
            gamma,
            lambda: DEFAULT_LAMBDA,
            restore_magnitudes: true,
            normalize_reg_grad: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and > 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// A regularization gradient together with the loss it descends.
#[derive(Debug, Clone)]
pub struct RegGradient {
    /// Same shape as the weight matrix it was taken at.
    pub grad: Matrix,
    pub loss_value: f64,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + eˣ) without overflow for large x.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Cosine of the angle between two vectors, clamped to [-1, 1] so downstream
/// arccos calls are safe against rounding.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch(format!(
            "cosine of {}-dim against {}-dim vector",
            u.len(),
            v.len()
        )));
    }
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu <= DEGENERATE_EPS {
        return Err(Error::DegenerateRow { row: 0, norm: nu });
    }
    if nv <= DEGENERATE_EPS {
        return Err(Error::DegenerateRow { row: 1, norm: nv });
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn require_unit_rows(theta: &Matrix) -> Result<()> {
    for i in 0..theta.rows() {
        let norm = theta.row_norm(i);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::NotNormalized { row: i, norm });
        }
    }
    Ok(())
}

/// Global squared-cosine loss over all ordered detector pairs. Works on rows
/// of any (non-degenerate) magnitude; the cosine makes it scale-invariant.
pub fn global_loss(theta: &Matrix) -> Result<f64> {
    let (unit, _) = theta.normalize_rows()?;
    Ok(global_loss_from_gram(&unit.gram()))
}

/// Sum of squared off-diagonal cosines, one term per unordered pair (the
/// ordered-pair double sum halved), taken from an already-computed Gram
/// matrix of unit rows.
fn global_loss_from_gram(gram: &Matrix) -> f64 {
    let n = gram.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in (i + 1)..n {
            let s = gram.get(i, k).clamp(-1.0, 1.0);
            acc += s * s;
        }
    }
    acc
}

/// Exact gradient of [`global_loss`] with respect to the raw matrix entries,
/// including the correction terms from differentiating through the row
/// normalization. Matches central finite differences of the loss; used for
/// verification, while [`global_grad`] is the one training uses.
pub fn global_grad_exact(theta: &Matrix) -> Result<RegGradient> {
    let (unit, norms) = theta.normalize_rows()?;
    let gram = unit.gram();
    let loss_value = global_loss_from_gram(&gram);
    let cos = gram.zero_diag()?;
    let coupled = cos.matmul(&unit)?; // row i: Σ_k cos_ik · u_k
    let n = theta.rows();
    let mut grad = Matrix::zeros(n, theta.cols())?;
    for i in 0..n {
        let radial: f64 = (0..n).map(|k| cos.get(i, k).powi(2)).sum();
        let scale = 2.0 / norms[i];
        let u_row = unit.row(i);
        let c_row = coupled.row(i);
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = scale * (c_row[j] - radial * u_row[j]);
        }
    }
    Ok(RegGradient { grad, loss_value })
}

/// Simplified global gradient for unit-row matrices: 2·(ΘΘᵀ − diag)·Θ.
/// Differs from [`global_grad_exact`] only by components parallel to each
/// row — direction-irrelevant magnitude terms that magnitude restoration
/// discards anyway.
pub fn global_grad(theta: &Matrix) -> Result<RegGradient> {
    require_unit_rows(theta)?;
    let gram = theta.gram();
    let loss_value = global_loss_from_gram(&gram);
    let coupling = gram.zero_diag()?;
    let grad = coupling.matmul(theta)?.scale(2.0);
    Ok(RegGradient { grad, loss_value })
}

/// Per-pair gradient coefficient of the local loss: λ·sigmoid(λ(s − 1)) for
/// inner product s. Equals λ/2 at s = 1 and decays to ~0 past orthogonality,
/// which is the whole point of the local variant: at λ = 10 the coefficient
/// at s = 0 is already below 10⁻³ of the s = 1 value.
#[inline]
pub fn local_coefficient(s: f64, lambda: f64) -> f64 {
    lambda * sigmoid(lambda * (s - 1.0))
}

/// Local (squashed) loss over ordered pairs of unit rows.
pub fn local_loss(theta: &Matrix, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    require_unit_rows(theta)?;
    Ok(local_loss_from_gram(&theta.gram(), lambda))
}

/// The local loss over ordered pairs, from an already-computed Gram matrix.
fn local_loss_from_gram(gram: &Matrix, lambda: f64) -> f64 {
    let n = gram.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in (i + 1)..n {
            acc += softplus(lambda * (gram.get(i, k) - 1.0));
        }
    }
    2.0 * acc
}

/// Gradient of [`local_loss`]: build the pairwise coefficient matrix
/// M_ik = λ·sigmoid(λ(⟨θᵢ,θₖ⟩ − 1)) with zero diagonal, then 2·M·Θ.
/// The sigmoid form is algebraically identical to the raw exponential ratio
/// but cannot overflow for large λ.
pub fn local_grad(theta: &Matrix, lambda: f64) -> Result<RegGradient> {
    check_lambda(lambda)?;
    require_unit_rows(theta)?;
    let gram = theta.gram();
    let loss_value = local_loss_from_gram(&gram, lambda);
    let n = theta.rows();
    let mut coeff = Matrix::zeros(n, n)?;
    for i in 0..n {
        for k in 0..n {
            if i != k {
                coeff.set(i, k, local_coefficient(gram.get(i, k), lambda));
            }
        }
    }
    let grad = coeff.matmul(theta)?.scale(2.0);
    Ok(RegGradient { grad, loss_value })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "lambda must be finite and > 0, got {lambda}"
        )));
    }
    Ok(())
}

/// One full regularization step on a weight matrix:
///
/// 1. split Θ into unit rows and their norms η₁;
/// 2. take the configured gradient ∇C at the normalized matrix;
/// 3. optionally rescale ∇C to unit Frobenius norm;
/// 4. update the original matrix by −α(∇J + γ∇C), where ∇J is the task
///    gradient (zero when absent);
/// 5. optionally restore each row to its pre-step norm η₁.
///
/// With γ = 0 the regularization machinery is bypassed entirely and the
/// update is exactly plain SGD on the task gradient (or a no-op without
/// one), so an unregularized run is bit-identical to a γ = 0 run.
///
/// `alpha` may be negative, which turns descent into ascent — the sanity
/// check where detectors cluster instead of spreading.
pub fn reg_step(
    theta: &Matrix,
    task_grad: Option<&Matrix>,
    alpha: f64,
    cfg: &RegConfig,
) -> Result<Matrix> {
    cfg.validate()?;
    if !alpha.is_finite() || alpha == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "step size must be finite and nonzero, got {alpha}"
        )));
    }
    if let Some(task) = task_grad {
        if task.rows() != theta.rows() || task.cols() != theta.cols() {
            return Err(Error::ShapeMismatch(format!(
                "task gradient {}x{} does not match weights {}x{}",
                task.rows(),
                task.cols(),
                theta.rows(),
                theta.cols()
            )));
        }
    }

    if cfg.gamma == 0.0 {
        return match task_grad {
            Some(task) => theta.add_scaled(task, -alpha),
            None => Ok(theta.clone()),
        };
    }

    let (unit, norms) = theta.normalize_rows()?;
    let reg = match cfg.mode {
        RegMode::Global => global_grad(&unit)?,
        RegMode::Local => local_grad(&unit, cfg.lambda)?,
    };
    let mut reg_grad = reg.grad;
    if cfg.normalize_reg_grad {
        let frob = reg_grad.frobenius_norm();
        if frob > DEGENERATE_EPS {
            reg_grad = reg_grad.scale(1.0 / frob);
        }
    }

    let mut updated = match task_grad {
        Some(task) => theta.add_scaled(task, -alpha)?,
        None => theta.clone(),
    };
    updated = updated.add_scaled(&reg_grad, -alpha * cfg.gamma)?;

    if cfg.restore_magnitudes {
        let mut scales = Vec::with_capacity(updated.rows());
        for i in 0..updated.rows() {
            let norm = updated.row_norm(i);
            if norm <= DEGENERATE_EPS {
                return Err(Error::DegenerateRow { row: i, norm });
            }
            scales.push(norms[i] / norm);
        }
        updated = updated.scale_rows(&scales)?;
    }
    Ok(updated)
}
