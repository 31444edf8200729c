use super::ModelError;
use crate::Scalar;

/// Summed binary cross-entropy, `-Σ [y log p + (1 - y) log(1 - p)]`, with
/// probabilities clamped to `[ε, 1 - ε]` (see [`Scalar::prob_eps`]).
pub fn bce_loss<F: Scalar>(probabilities: &[F], labels: &[bool]) -> Result<F, ModelError> {
    if probabilities.len() != labels.len() {
        return Err(ModelError::LengthMismatch {
            left: probabilities.len(),
            right: labels.len(),
        });
    }
    let eps = F::prob_eps();
    let hi = F::one() - eps;
    Ok(probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.max(eps).min(hi);
            if y {
                -p.ln()
            } else {
                -(-p).ln_1p()
            }
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_prediction_costs_nothing() {
        let loss = bce_loss(&[1.0f64 - 1e-12], &[true]).unwrap();
        assert!(loss.abs() < 1e-11);
        let loss = bce_loss(&[1.0f32], &[true]).unwrap();
        assert!(loss.abs() < 1e-6);
    }

    #[test]
    fn coin_flip_costs_two_log_two() {
        let loss = bce_loss(&[0.5, 0.5], &[true, false]).unwrap();
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            bce_loss(&[0.5], &[true, false]),
            Err(ModelError::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn matches_compensated_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p: Vec<f64> = (0..100).map(|_| rng.random_range(1e-6..1.0 - 1e-6)).collect();
        let y: Vec<bool> = (0..100).map(|_| rng.random_bool(0.4)).collect();
        // Neumaier summation of the per-sample terms via log1p
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for (&pi, &yi) in p.iter().zip(&y) {
            let term = if yi { -pi.ln() } else { -(-pi).ln_1p() };
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
        }
        let oracle = sum + comp;
        let got = bce_loss(&p, &y).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "{got} vs {oracle}");
    }
}
