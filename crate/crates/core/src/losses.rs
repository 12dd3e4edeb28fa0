//! Least-squares adversarial, cycle-consistency and paired L1 losses.
//!
//! Each loss has a tape form (used in training) and a plain form over
//! tensors that evaluates the same recorded ops.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_cycle: f64,
    pub lambda_paired: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cycle: 10.0,
            lambda_paired: 5.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_cycle >= 0.0 && self.lambda_paired >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be non-negative, got cycle={} paired={}",
                self.lambda_cycle, self.lambda_paired
            )));
        }
        Ok(())
    }
}

/// Components of the generator objective. The paired terms are present only
/// for minibatch items that keep their true correspondence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorLossParts<T> {
    pub adv_ab: T,
    pub adv_ba: T,
    pub cyc_a: T,
    pub cyc_b: T,
    pub paired: Option<(T, T)>,
}

fn non_empty(tape: &Tape, v: Var, op: &'static str) -> Result<()> {
    if tape.value(v).numel() == 0 {
        return Err(Error::shape(op, "empty tensor"));
    }
    Ok(())
}

fn same_shape(tape: &Tape, a: Var, b: Var, op: &'static str) -> Result<()> {
    let (sa, sb) = (tape.value(a).shape(), tape.value(b).shape());
    if sa != sb {
        return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
    }
    Ok(())
}

/// `mean((d − 1)²)`
pub fn adv_generator_on(tape: &mut Tape, logits_fake: Var) -> Result<Var> {
    non_empty(tape, logits_fake, "adv_loss_generator")?;
    let shifted = tape.add_scalar(logits_fake, -1.0);
    let sq = tape.square(shifted);
    Ok(tape.mean(sq))
}

/// `½·mean((d_real − 1)²) + ½·mean(d_fake²)`
pub fn adv_discriminator_on(tape: &mut Tape, logits_real: Var, logits_fake: Var) -> Result<Var> {
    non_empty(tape, logits_real, "adv_loss_discriminator")?;
    non_empty(tape, logits_fake, "adv_loss_discriminator")?;
    let shifted = tape.add_scalar(logits_real, -1.0);
    let real_sq = tape.square(shifted);
    let real = tape.mean(real_sq);
    let fake_sq = tape.square(logits_fake);
    let fake = tape.mean(fake_sq);
    let total = tape.add(real, fake)?;
    Ok(tape.scale(total, 0.5))
}

/// Mean absolute difference.
pub fn l1_on(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    same_shape(tape, a, b, "l1")?;
    let d = tape.sub(a, b)?;
    let abs = tape.abs(d);
    Ok(tape.mean(abs))
}

/// Weighted generator objective on the tape.
pub fn compose_on(
    tape: &mut Tape,
    parts: GeneratorLossParts<Var>,
    weights: LossWeights,
) -> Result<Var> {
    let values = GeneratorLossParts {
        adv_ab: tape.value(parts.adv_ab).item(),
        adv_ba: tape.value(parts.adv_ba).item(),
        cyc_a: tape.value(parts.cyc_a).item(),
        cyc_b: tape.value(parts.cyc_b).item(),
        paired: parts
            .paired
            .map(|(x, y)| (tape.value(x).item(), tape.value(y).item())),
    };
    check_parts(&values)?;
    let adv = tape.add(parts.adv_ab, parts.adv_ba)?;
    let cyc = tape.add(parts.cyc_a, parts.cyc_b)?;
    let cyc = tape.scale(cyc, weights.lambda_cycle);
    let mut total = tape.add(adv, cyc)?;
    if let Some((ab, ba)) = parts.paired {
        let paired = tape.add(ab, ba)?;
        let paired = tape.scale(paired, weights.lambda_paired);
        total = tape.add(total, paired)?;
    }
    Ok(total)
}

fn check_parts(parts: &GeneratorLossParts<f64>) -> Result<()> {
    let mut all = vec![
        ("adv_ab", parts.adv_ab),
        ("adv_ba", parts.adv_ba),
        ("cyc_a", parts.cyc_a),
        ("cyc_b", parts.cyc_b),
    ];
    if let Some((ab, ba)) = parts.paired {
        all.push(("paired_ab", ab));
        all.push(("paired_ba", ba));
    }
    for (name, v) in all {
        if v.is_nan() || v < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "loss component {name} must be non-negative, got {v}"
            )));
        }
    }
    Ok(())
}

fn eval1(t: &Tensor, f: impl FnOnce(&mut Tape, Var) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let v = tape.constant(t.clone());
    let out = f(&mut tape, v)?;
    Ok(tape.value(out).item())
}

fn eval2(
    a: &Tensor,
    b: &Tensor,
    f: impl FnOnce(&mut Tape, Var, Var) -> Result<Var>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let va = tape.constant(a.clone());
    let vb = tape.constant(b.clone());
    let out = f(&mut tape, va, vb)?;
    Ok(tape.value(out).item())
}

pub fn adv_loss_generator(logits_fake: &Tensor) -> Result<f64> {
    eval1(logits_fake, adv_generator_on)
}

pub fn adv_loss_discriminator(logits_real: &Tensor, logits_fake: &Tensor) -> Result<f64> {
    eval2(logits_real, logits_fake, adv_discriminator_on)
}

pub fn cycle_loss(reconstructed: &Tensor, original: &Tensor) -> Result<f64> {
    eval2(reconstructed, original, l1_on)
}

pub fn paired_loss(translated: &Tensor, target: &Tensor) -> Result<f64> {
    eval2(translated, target, l1_on)
}

/// `adv_ab + adv_ba + λ_cyc·(cyc_a + cyc_b) + λ_paired·(paired_ab + paired_ba)`
pub fn compose_generator_loss(
    parts: &GeneratorLossParts<f64>,
    weights: LossWeights,
) -> Result<f64> {
    check_parts(parts)?;
    let mut total =
        parts.adv_ab + parts.adv_ba + weights.lambda_cycle * (parts.cyc_a + parts.cyc_b);
    if let Some((ab, ba)) = parts.paired {
        total += weights.lambda_paired * (ab + ba);
    }
    Ok(total)
}
