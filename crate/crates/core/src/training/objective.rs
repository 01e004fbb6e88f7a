//! Loss terms of the adversarial objective and the gradient computation of
//! one mapper (generator + encoder) update.

use crate::error::{Error, Result};
use crate::model::{Network, Trace};
use crate::ndmath::{cross_entropy, cross_entropy_backward, l1_loss, l1_loss_backward, Mode, Tensor};

/// Guard on the auxiliary gradient norm in [`balance`].
pub const BALANCE_EPS: f64 = 1e-12;

/// `mean(real) - mean(fake)` of two `batch x 1` score columns.
pub fn wasserstein_gap(real_scores: &Tensor, fake_scores: &Tensor) -> Result<f64> {
    if real_scores.rows() != fake_scores.rows() {
        return Err(Error::ShapeMismatch {
            op: "adversarial loss",
            left: real_scores.shape().to_vec(),
            right: fake_scores.shape().to_vec(),
        });
    }
    Ok(real_scores.mean() - fake_scores.mean())
}

/// Scores `real` stacked on top of `fake` in one forward pass, so both
/// halves share the critic's normalization statistics, and returns the trace
/// with the Wasserstein gap. Scoring the halves as separate batches would
/// make each batch-mean score equal to the same affine constant.
fn joint_scores(critic: &mut Network, real: &Tensor, fake: &Tensor, mode: Mode) -> Result<(Trace, f64)> {
    real.check_same_shape(fake, "adversarial loss")?;
    let b = real.rows();
    let trace = critic.forward(&real.concat_rows(fake)?, mode)?;
    let s = trace.output();
    let gap = wasserstein_gap(&s.slice_rows(0, b), &s.slice_rows(b, 2 * b))?;
    Ok((trace, gap))
}

/// Gradient of `real_sign * mean(real) + fake_sign * mean(fake)` with
/// respect to the stacked score column.
fn joint_score_grad(b: usize, real_sign: f64, fake_sign: f64) -> Tensor {
    let mut g = vec![real_sign / b as f64; b];
    g.resize(2 * b, fake_sign / b as f64);
    Tensor::matrix(2 * b, 1, g).expect("2b x 1 score gradient")
}

fn adv_loss(critic: &mut Network, real: &Tensor, fake: &Tensor, mode: Mode) -> Result<f64> {
    Ok(joint_scores(critic, real, fake, mode)?.1)
}

/// WGAN loss in word space: `E[D_X(x)] - E[D_X(G(z))]`.
pub fn adv_loss_x(critic_x: &mut Network, x_real: &Tensor, x_fake: &Tensor, mode: Mode) -> Result<f64> {
    adv_loss(critic_x, x_real, x_fake, mode)
}

/// WGAN loss in topic space: `E[D_Z(z)] - E[D_Z(E(x))]`.
pub fn adv_loss_z(critic_z: &mut Network, z_real: &Tensor, z_fake: &Tensor, mode: Mode) -> Result<f64> {
    adv_loss(critic_z, z_real, z_fake, mode)
}

/// `(mean |G(E(x)) - x|_1, mean |E(G(z)) - z|_1)`.
pub fn cycle_losses(
    generator: &mut Network,
    encoder: &mut Network,
    x: &Tensor,
    z: &Tensor,
    mode: Mode,
) -> Result<(f64, f64)> {
    let ex = encoder.forward(x, mode)?;
    let gex = generator.forward(ex.output(), mode)?;
    let gz = generator.forward(z, mode)?;
    let egz = encoder.forward(gz.output(), mode)?;
    Ok((l1_loss(gex.output(), x)?, l1_loss(egz.output(), z)?))
}

/// Weight of an auxiliary loss that gives it `lambda_hat` times the
/// gradient norm of the adversarial loss at a shared activation.
pub fn balance(adv_grad_norm: f64, aux_grad_norm: f64, lambda_hat: f64) -> f64 {
    lambda_hat * adv_grad_norm / aux_grad_norm.max(BALANCE_EPS)
}

/// How the auxiliary losses are weighted in a mapper update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossWeights {
    /// Recompute each weight from the current batch's gradient norms.
    Balanced { hats: [f64; 3] },
    /// Use the given weights as they are.
    Fixed { lambdas: [f64; 3] },
}

/// Values of every term of one mapper evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MapperTerms {
    pub adv_x: f64,
    pub adv_z: f64,
    pub cyc_forward: f64,
    pub cyc_backward: f64,
    pub cls: f64,
    pub lambdas: [f64; 3],
    pub total: f64,
}

/// Recombines the weighted total from its parts.
pub fn weighted_total(adv_x: f64, adv_z: f64, cyc: [f64; 2], cls: f64, lambdas: [f64; 3]) -> f64 {
    adv_x + adv_z + lambdas[0] * cyc[0] + lambdas[1] * cyc[1] + lambdas[2] * cls
}

/// Borrowed view of the networks taking part in a mapper update.
pub struct MapperNets<'a> {
    pub encoder: &'a mut Network,
    pub generator: &'a mut Network,
    pub critic_x: &'a mut Network,
    pub critic_z: &'a mut Network,
    pub classifier: Option<&'a mut Network>,
}

fn scale_grads(net: &mut Network, s: f64) {
    for p in net.params_mut() {
        p.grad_mut().iter_mut().for_each(|g| *g *= s);
    }
}

fn check_finite(v: f64, term: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss { iteration: 0, term })
    }
}

/// Evaluates the full objective on one batch and accumulates its gradient
/// into the encoder, generator and (when present with labels) classifier.
///
/// The mapped networks run in `mode`; critics always run on batch
/// statistics of the stacked real and generated batch without touching
/// their running statistics. Critic gradients
/// are computed as a by-product and cleared before returning.
pub fn mapper_gradients(
    nets: MapperNets<'_>,
    x: &Tensor,
    z: &Tensor,
    labels: Option<&[usize]>,
    weights: LossWeights,
    mode: Mode,
) -> Result<MapperTerms> {
    let MapperNets {
        encoder,
        generator,
        critic_x,
        critic_z,
        classifier,
    } = nets;
    if x.rows() != z.rows() {
        return Err(Error::ShapeMismatch {
            op: "mapper batch",
            left: x.shape().to_vec(),
            right: z.shape().to_vec(),
        });
    }
    let b = x.rows();

    let gz = generator.forward(z, mode)?;
    let ex = encoder.forward(x, mode)?;

    // adversarial terms; the data half is constant but shares the critic's
    // batch statistics with the generated half, so its scores carry gradient too
    let (dx, adv_x) = joint_scores(critic_x, x, gz.output(), Mode::BatchStats)?;
    let adv_x = check_finite(adv_x, "adv_x")?;
    let g_adv_fake_x = critic_x.backward(&dx, &joint_score_grad(b, 1.0, -1.0))?.slice_rows(b, 2 * b);

    let (dz, adv_z) = joint_scores(critic_z, z, ex.output(), Mode::BatchStats)?;
    let adv_z = check_finite(adv_z, "adv_z")?;
    let g_adv_enc_x = critic_z.backward(&dz, &joint_score_grad(b, 1.0, -1.0))?.slice_rows(b, 2 * b);
    critic_x.zero_grad();
    critic_z.zero_grad();

    // cycles
    let gex = generator.forward(ex.output(), mode)?;
    let cyc_forward = check_finite(l1_loss(gex.output(), x)?, "cyc_forward")?;
    let g_cyc_rec_x = l1_loss_backward(gex.output(), x)?;

    let egz = encoder.forward(gz.output(), mode)?;
    let cyc_backward = check_finite(l1_loss(egz.output(), z)?, "cyc_backward")?;
    let g_cyc_rec_z = l1_loss_backward(egz.output(), z)?;

    // classification, differentiated with unit weight and rescaled below
    let mut cls = 0.0;
    let mut g_cls_enc_x = None;
    let classifier = match (classifier, labels) {
        (Some(c), Some(y)) => {
            let tc = c.forward(ex.output(), mode)?;
            cls = check_finite(cross_entropy(tc.output(), y)?, "cls")?;
            let g_pred = cross_entropy_backward(tc.output(), y)?;
            g_cls_enc_x = Some(c.backward(&tc, &g_pred)?);
            Some(c)
        }
        _ => None,
    };

    let lambdas = match weights {
        LossWeights::Fixed { lambdas } => lambdas,
        LossWeights::Balanced { hats } => {
            let adv_x_norm = g_adv_fake_x.l2_norm();
            let adv_z_norm = g_adv_enc_x.l2_norm();
            [
                balance(adv_x_norm, g_cyc_rec_x.l2_norm(), hats[0]),
                balance(adv_z_norm, g_cyc_rec_z.l2_norm(), hats[1]),
                g_cls_enc_x
                    .as_ref()
                    .map_or(0.0, |g| balance(adv_z_norm, g.l2_norm(), hats[2])),
            ]
        }
    };
    if g_cls_enc_x.is_none() {
        cls = 0.0;
    }
    let lambdas = [
        check_finite(lambdas[0], "lambda1")?,
        check_finite(lambdas[1], "lambda2")?,
        if g_cls_enc_x.is_some() { check_finite(lambdas[2], "lambda3")? } else { 0.0 },
    ];
    if let Some(c) = classifier {
        scale_grads(c, lambdas[2]);
    }

    // backward cycle: z -> G -> E
    let mut g = g_cyc_rec_z;
    g.scale(lambdas[1]);
    let mut g_fake_x = encoder.backward(&egz, &g)?;
    g_fake_x.add_scaled(&g_adv_fake_x, 1.0)?;
    generator.backward(&gz, &g_fake_x)?;

    // forward cycle: x -> E -> G
    let mut g = g_cyc_rec_x;
    g.scale(lambdas[0]);
    let mut g_enc_x = generator.backward(&gex, &g)?;
    g_enc_x.add_scaled(&g_adv_enc_x, 1.0)?;
    if let Some(gc) = &g_cls_enc_x {
        g_enc_x.add_scaled(gc, lambdas[2])?;
    }
    encoder.backward(&ex, &g_enc_x)?;

    let total = weighted_total(adv_x, adv_z, [cyc_forward, cyc_backward], cls, lambdas);
    Ok(MapperTerms {
        adv_x,
        adv_z,
        cyc_forward,
        cyc_backward,
        cls,
        lambdas,
        total: check_finite(total, "total")?,
    })
}

/// Critic-side terms of one critic update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CriticTerms {
    /// Word-space Wasserstein estimate (critic ascends it).
    pub gap_x: f64,
    /// Topic-space Wasserstein estimate.
    pub gap_z: f64,
}

/// Accumulates the gradient of `-(gap_x + gap_z)` into both critics.
/// `x_fake` and `z_fake` are treated as constants. Each critic scores its
/// real and fake batches stacked into one training-mode batch.
pub fn critic_gradients(
    critic_x: &mut Network,
    critic_z: &mut Network,
    x_real: &Tensor,
    x_fake: &Tensor,
    z_real: &Tensor,
    z_fake: &Tensor,
) -> Result<CriticTerms> {
    let mut gaps = [0.0; 2];
    for (i, (critic, real, fake)) in [(critic_x, x_real, x_fake), (critic_z, z_real, z_fake)]
        .into_iter()
        .enumerate()
    {
        let (trace, gap) = joint_scores(critic, real, fake, Mode::Train)?;
        gaps[i] = gap;
        critic.backward(&trace, &joint_score_grad(real.rows(), -1.0, 1.0))?;
    }
    Ok(CriticTerms {
        gap_x: check_finite(gaps[0], "critic_x")?,
        gap_z: check_finite(gaps[1], "critic_z")?,
    })
}
