//! Bregman divergences for the potentials the objective presets use.
//!
//! `D_Φ(p, q) = Φ(p) − Φ(q) − ⟨∇Φ(q), p − q⟩` for a strictly convex,
//! differentiable Φ. All three potentials are separable, so the divergence is
//! evaluated coordinate-wise through the literal three-term expression; the
//! closed forms (KL, squared Euclidean distance, the half-weighted Fisher
//! quadratic) are recovered as tested identities rather than baked in.

use crate::error::{Error, Result};
use crate::fisher::DiagFisher;
use crate::scalar::Scalar;

/// Tolerance on |Σp − 1| before a simplex input is rejected; inputs inside
/// the tolerance are renormalized.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Generator potential of a Bregman divergence.
#[derive(Debug, Clone)]
pub enum Potential<T> {
    /// Φ(p) = Σ pᵢ ln pᵢ on the probability simplex.
    NegEntropy,
    /// Φ(p) = ‖p‖².
    SquaredNorm,
    /// Ψ(θ) = ½ θᵀ F θ with a nonnegative diagonal F (damping unused here).
    FisherQuadratic(DiagFisher<T>),
}

fn validate_simplex<T: Scalar>(v: &[T], context: &'static str) -> Result<Vec<T>> {
    if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x >= T::zero())) {
        return Err(Error::Domain {
            context,
            message: format!("simplex entries must be finite and >= 0, got {bad}"),
        });
    }
    let sum: T = v.iter().copied().sum();
    if (sum - T::one()).abs() > T::cast(SIMPLEX_TOLERANCE) {
        return Err(Error::Domain {
            context,
            message: format!("entries must sum to 1 within {SIMPLEX_TOLERANCE}, got {sum}"),
        });
    }
    Ok(v.iter().map(|&x| x / sum).collect())
}

fn check_lengths<T>(p: &[T], q: &[T], context: &'static str) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            context,
            expected: p.len(),
            actual: q.len(),
        });
    }
    Ok(())
}

/// `x ln x` with the continuous extension `0 ln 0 = 0`.
fn xlnx<T: Scalar>(x: T) -> T {
    if x == T::zero() {
        T::zero()
    } else {
        x * x.ln()
    }
}

/// Bregman divergence of `p` from `q` under `phi`.
///
/// Returns `+∞` when `q` has a zero entry under the negative-entropy
/// potential while the matching `p` entry is positive.
pub fn divergence<T: Scalar>(phi: &Potential<T>, p: &[T], q: &[T]) -> Result<T> {
    check_lengths(p, q, "divergence")?;
    match phi {
        Potential::NegEntropy => {
            let p = validate_simplex(p, "divergence(neg_entropy)")?;
            let q = validate_simplex(q, "divergence(neg_entropy)")?;
            let mut total = T::zero();
            for (&pi, &qi) in p.iter().zip(&q) {
                if qi == T::zero() {
                    if pi > T::zero() {
                        return Ok(T::infinity());
                    }
                    continue; // 0-vs-0 coordinate contributes nothing
                }
                total = total + xlnx(pi) - xlnx(qi) - (qi.ln() + T::one()) * (pi - qi);
            }
            Ok(total)
        }
        Potential::SquaredNorm => {
            let mut total = T::zero();
            let two = T::cast(2.0);
            for (&pi, &qi) in p.iter().zip(q) {
                total = total + pi * pi - qi * qi - two * qi * (pi - qi);
            }
            Ok(total)
        }
        Potential::FisherQuadratic(f) => {
            if f.len() != p.len() {
                return Err(Error::DimensionMismatch {
                    context: "divergence(fisher_quadratic)",
                    expected: f.len(),
                    actual: p.len(),
                });
            }
            let half = T::cast(0.5);
            let mut total = T::zero();
            for ((&pi, &qi), &fi) in p.iter().zip(q).zip(f.values()) {
                total = total + half * fi * pi * pi - half * fi * qi * qi - fi * qi * (pi - qi);
            }
            Ok(total)
        }
    }
}

/// Discrete KL divergence `Σ pᵢ ln(pᵢ/qᵢ)` with `0 ln 0 = 0`; both arguments
/// must lie on the probability simplex.
pub fn kl_discrete<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    check_lengths(p, q, "kl_discrete")?;
    let p = validate_simplex(p, "kl_discrete")?;
    let q = validate_simplex(q, "kl_discrete")?;
    let mut total = T::zero();
    for (&pi, &qi) in p.iter().zip(&q) {
        if pi == T::zero() {
            continue;
        }
        if qi == T::zero() {
            return Ok(T::infinity());
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

/// Shannon entropy `−Σ pᵢ ln pᵢ` of a distribution on the simplex.
pub fn entropy<T: Scalar>(p: &[T]) -> Result<T> {
    let p = validate_simplex(p, "entropy")?;
    Ok(-p.into_iter().map(xlnx).sum::<T>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_simplex(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }

    #[test]
    fn divergence_of_point_with_itself_is_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let p = random_simplex(&mut rng, 6);
        assert!(divergence(&Potential::NegEntropy, &p, &p).unwrap().abs() < 1e-15);
        let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        assert!(divergence(&Potential::SquaredNorm, &v, &v).unwrap().abs() < 1e-12);
        let f = DiagFisher::new(vec![2.0; 6], 1e-5).unwrap();
        assert!(divergence(&Potential::FisherQuadratic(f), &v, &v)
            .unwrap()
            .abs()
            < 1e-12);
    }

    #[test]
    fn neg_entropy_examples() {
        // direct Σ p ln(p/q) oracle: p=[1,0], q=[.5,.5] -> 1·ln(1/.5) = ln 2
        let d = divergence(&Potential::NegEntropy, &[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((d - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((d - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn squared_norm_example() {
        let d: f64 = divergence(&Potential::SquaredNorm, &[3.0, 0.0], &[0.0, 4.0]).unwrap();
        assert!((d - 25.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_quadratic_example() {
        let f = DiagFisher::new(vec![2.0, 3.0], 1e-5).unwrap();
        // p − q = [1, 1]: ½ (2 + 3) = 2.5
        let d: f64 = divergence(&Potential::FisherQuadratic(f), &[1.5, -0.5], &[0.5, -1.5]).unwrap();
        assert!((d - 2.5).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        let u = [0.5f64, 0.5];
        assert!(kl_discrete(&u, &u).unwrap().abs() < 1e-15);
        let d = kl_discrete(&[0.9, 0.1], &[0.5, 0.5]).unwrap();
        let oracle = 0.9 * (1.8f64).ln() + 0.1 * (0.2f64).ln();
        assert!((d - oracle).abs() < 1e-15);
        assert!((d - 0.36806).abs() < 1e-5);
    }

    #[test]
    fn zero_q_entry_signals_infinite_divergence() {
        let d: f64 = divergence(&Potential::NegEntropy, &[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!(d.is_infinite() && d > 0.0);
        let k: f64 = kl_discrete(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!(k.is_infinite());
        // matching zero in p is fine
        let ok: f64 = divergence(&Potential::NegEntropy, &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(ok.abs() < 1e-15);
    }

    #[test]
    fn off_simplex_inputs_are_rejected() {
        assert!(divergence(&Potential::NegEntropy, &[0.9, 0.2], &[0.5, 0.5]).is_err());
        assert!(kl_discrete(&[0.5, -0.5], &[0.5, 0.5]).is_err());
        // within tolerance: renormalized, not rejected
        let nearly = [0.5 + 4e-10, 0.5 + 4e-10];
        assert!(divergence(&Potential::NegEntropy, &nearly, &[0.5, 0.5]).is_ok());
    }

    #[test]
    fn neg_entropy_divergence_equals_kl_on_random_pairs() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = rng.gen_range(2..12);
            let p = random_simplex(&mut rng, n);
            let q = random_simplex(&mut rng, n);
            let d = divergence(&Potential::NegEntropy, &p, &q).unwrap();
            let k = kl_discrete(&p, &q).unwrap();
            assert!((d - k).abs() < 1e-12, "divergence {d} vs kl {k}");
        }
    }

    #[test]
    fn squared_norm_divergence_equals_squared_distance() {
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        for _ in 0..100 {
            let n = rng.gen_range(1..16);
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let d = divergence(&Potential::SquaredNorm, &p, &q).unwrap();
            let dist: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!((d - dist).abs() < 1e-12);
        }
    }

    #[test]
    fn fisher_quadratic_divergence_equals_half_weighted_form() {
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        for _ in 0..100 {
            let n = rng.gen_range(1..16);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..4.0)).collect();
            let f = DiagFisher::new(values.clone(), 1e-5).unwrap();
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let d = divergence(&Potential::FisherQuadratic(f), &p, &q).unwrap();
            let oracle: f64 = p
                .iter()
                .zip(&q)
                .zip(&values)
                .map(|((a, b), f)| 0.5 * f * (a - b) * (a - b))
                .sum();
            assert!((d - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn nonnegativity_and_identity_of_indiscernibles() {
        let mut rng = ChaCha12Rng::seed_from_u64(45);
        for _ in 0..1000 {
            let n = rng.gen_range(2..8);
            let p = random_simplex(&mut rng, n);
            let q = random_simplex(&mut rng, n);
            let d = divergence(&Potential::NegEntropy, &p, &q).unwrap();
            assert!(d >= -1e-15);
            let same = divergence(&Potential::NegEntropy, &p, &p).unwrap();
            assert!(same.abs() < 1e-12);

            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert!(divergence(&Potential::SquaredNorm, &a, &b).unwrap() >= -1e-12);

            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..4.0)).collect();
            let f = Potential::FisherQuadratic(DiagFisher::new(values, 1e-5).unwrap());
            let d = divergence(&f, &a, &b).unwrap();
            assert!(d >= -1e-12);
            // strictly positive F: zero divergence only at equality
            if a != b {
                let dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
                if dist > 1e-6 {
                    assert!(d > 0.0);
                }
            }
        }
    }

    #[test]
    fn convexity_in_first_argument() {
        let mut rng = ChaCha12Rng::seed_from_u64(46);
        for _ in 0..300 {
            let n = rng.gen_range(2..6);
            let p1 = random_simplex(&mut rng, n);
            let p2 = random_simplex(&mut rng, n);
            let q = random_simplex(&mut rng, n);
            let t: f64 = rng.gen_range(0.0..=1.0);
            let mix: Vec<f64> = p1
                .iter()
                .zip(&p2)
                .map(|(a, b)| t * a + (1.0 - t) * b)
                .collect();
            let lhs = divergence(&Potential::NegEntropy, &mix, &q).unwrap();
            let rhs = t * divergence(&Potential::NegEntropy, &p1, &q).unwrap()
                + (1.0 - t) * divergence(&Potential::NegEntropy, &p2, &q).unwrap();
            assert!(lhs <= rhs + 1e-10);

            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            let lhs = divergence(&Potential::SquaredNorm, &mix, &c).unwrap();
            let rhs = t * divergence(&Potential::SquaredNorm, &a, &c).unwrap()
                + (1.0 - t) * divergence(&Potential::SquaredNorm, &b, &c).unwrap();
            assert!(lhs <= rhs + 1e-10);
        }
    }

    #[test]
    fn entropy_of_uniform_is_ln_n() {
        let u = [0.25; 4];
        assert!((entropy(&u).unwrap() - (4.0f64).ln()).abs() < 1e-12);
    }
}
