use crate::discriminators::DiscriminatorOutput;
use crate::dsp::{MelAnalyzer, MelConfig, Waveform};
use crate::error::{Error, Result};
use crate::nn::{Graph, Real, Var};

fn check_counts(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("sub-discriminator count mismatch: {a} vs {b}")));
    }
    Ok(())
}

fn mean_sq_offset<T: Real>(g: &mut Graph<T>, x: Var, target: f64) -> Var {
    let d = g.add_scalar(x, T::from_f64_lossy(-target));
    let d = g.square(d);
    g.mean(d)
}

/// Least-squares discriminator loss `Σ_k mean[(r_k − 1)²] + mean[f_k²]`.
pub fn discriminator_loss<T: Real>(g: &mut Graph<T>, real: &[Var], fake: &[Var]) -> Result<Var> {
    check_counts(real.len(), fake.len())?;
    let mut terms = Vec::with_capacity(2 * real.len());
    for (&r, &f) in real.iter().zip(fake) {
        terms.push(mean_sq_offset(g, r, 1.0));
        terms.push(mean_sq_offset(g, f, 0.0));
    }
    Ok(g.sum_all(&terms))
}

/// Least-squares generator loss `Σ_k mean[(f_k − 1)²]`.
pub fn generator_adversarial_loss<T: Real>(g: &mut Graph<T>, fake: &[Var]) -> Result<Var> {
    if fake.is_empty() {
        return Err(Error::invalid("no discriminator outputs"));
    }
    let terms: Vec<Var> = fake.iter().map(|&f| mean_sq_offset(g, f, 1.0)).collect();
    Ok(g.sum_all(&terms))
}

/// `(loss_d, loss_g_adv)` for one pair of discriminator outputs.
pub fn adversarial_losses<T: Real>(
    g: &mut Graph<T>,
    real: &DiscriminatorOutput,
    fake: &DiscriminatorOutput,
) -> Result<(Var, Var)> {
    let d = discriminator_loss(g, &real.logits, &fake.logits)?;
    let a = generator_adversarial_loss(g, &fake.logits)?;
    Ok((d, a))
}

/// `Σ_k Σ_l mean|real_kl − fake_kl|`, unweighted.
pub fn feature_matching_loss<T: Real>(g: &mut Graph<T>, real: &[Vec<Var>], fake: &[Vec<Var>]) -> Result<Var> {
    check_counts(real.len(), fake.len())?;
    let mut terms = Vec::new();
    for (k, (rs, fs)) in real.iter().zip(fake).enumerate() {
        if rs.len() != fs.len() {
            return Err(Error::invalid(format!("sub-discriminator {k}: {} vs {} feature maps", rs.len(), fs.len())));
        }
        for (&r, &f) in rs.iter().zip(fs) {
            if g.shape(r) != g.shape(f) {
                return Err(Error::invalid(format!(
                    "feature shape mismatch {:?} vs {:?}",
                    g.shape(r),
                    g.shape(f)
                )));
            }
            let d = g.sub(r, f);
            let d = g.abs(d);
            terms.push(g.mean(d));
        }
    }
    if terms.is_empty() {
        return Err(Error::invalid("no feature maps"));
    }
    Ok(g.sum_all(&terms))
}

/// Mean absolute difference between the log-mel matrices of two equally long signals.
pub fn mel_l1_loss(target: &Waveform, generated: &Waveform, cfg: &MelConfig) -> Result<f64> {
    mel_l1_with(&MelAnalyzer::new(cfg)?, target, generated)
}

pub(crate) fn mel_l1_with(analyzer: &MelAnalyzer, target: &Waveform, generated: &Waveform) -> Result<f64> {
    if target.len() != generated.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {} samples", target.len(), generated.len())));
    }
    let (_, a) = analyzer.log_mel_f64(target)?;
    let (_, b) = analyzer.log_mel_f64(generated)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}
