use crate::scalar::RealScalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum WilsonError {
    #[error("interval needs at least one trial")]
    NoTrials,
    #[error("{k} successes out of {n} trials")]
    TooManySuccesses { k: u64, n: u64 },
}

/// Wilson score interval for `k` successes in `n` trials, clamped to [0, 1].
pub fn wilson_ci<F: RealScalar>(k: u64, n: u64, z: F) -> Result<(F, F), WilsonError> {
    if n == 0 {
        return Err(WilsonError::NoTrials);
    }
    if k > n {
        return Err(WilsonError::TooManySuccesses { k, n });
    }
    let cast = |x: u64| F::from_u64(x).expect("count fits the float type");
    let (kf, nf) = (cast(k), cast(n));
    let one = F::one();
    let two = one + one;
    let four = two + two;
    let p = kf / nf;
    let z2 = z * z;
    let denom = one + z2 / nf;
    let center = (p + z2 / (two * nf)) / denom;
    let half = z * (p * (one - p) / nf + z2 / (four * nf * nf)).sqrt() / denom;
    Ok(((center - half).max(F::zero()), (center + half).min(one)))
}
