//! MCMC convergence and mixing diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub rhat: f64,
    pub geweke_z: Vec<f64>,
    pub ess_per_chain: Vec<f64>,
    /// Sum of the per-chain ESS values.
    pub ess_pooled: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Split potential scale reduction factor.
///
/// Chains are truncated to the shortest length and each is halved (an odd
/// middle draw is dropped), giving `2m` sequences of length `n`. With `W`
/// the mean within-sequence variance and `B/n` the variance of the
/// sequence means, `R̂ = √(((n − 1)/n·W + B/n) / W)`.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InvalidArgument("split R-hat needs at least 2 chains".into()));
    }
    let len = chains.iter().map(Vec::len).min().unwrap_or(0);
    if len < 4 {
        return Err(Error::InvalidArgument("split R-hat needs chains of length >= 4".into()));
    }
    let half = len / 2;
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[len - half..len]])
        .collect();

    let n = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let within = mean(&halves.iter().map(|h| sample_variance(h)).collect::<Vec<_>>());
    if !(within > 0.0) {
        return Err(Error::DegenerateChains);
    }
    let between = n * sample_variance(&means);
    let var_plus = (n - 1.0) / n * within + between / n;
    Ok((var_plus / within).sqrt())
}

/// Standard error of the mean by non-overlapping batch means with batch
/// size `⌊√n⌋`.
fn batch_means_se2(xs: &[f64]) -> Result<f64> {
    let n = xs.len();
    let size = ((n as f64).sqrt().floor() as usize).max(1);
    let batches = n / size;
    if batches < 2 {
        return Err(Error::InvalidArgument("window too short for batch means".into()));
    }
    let means: Vec<f64> = xs.chunks_exact(size).map(mean).collect();
    let var = sample_variance(&means);
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(var / batches as f64)
}

/// Geweke's Z comparing the mean of the first `first` fraction of a chain
/// with the mean of its last `last` fraction.
pub fn geweke_z(chain: &[f64], first: f64, last: f64) -> Result<f64> {
    if chain.len() < 100 {
        return Err(Error::InvalidArgument("Geweke Z needs at least 100 draws".into()));
    }
    if !(first > 0.0 && last > 0.0 && first + last <= 1.0) {
        return Err(Error::InvalidArgument(format!("invalid Geweke windows {first}/{last}")));
    }
    let n = chain.len();
    let a = &chain[..((first * n as f64) as usize).max(1)];
    let b = &chain[n - ((last * n as f64) as usize).max(1)..];
    let se2 = batch_means_se2(a)? + batch_means_se2(b)?;
    Ok((mean(a) - mean(b)) / se2.sqrt())
}

/// Geweke's Z with the conventional 10% / 50% windows.
pub fn geweke_default(chain: &[f64]) -> Result<f64> {
    geweke_z(chain, 0.1, 0.5)
}

/// Effective sample size `n / τ` with the integrated autocorrelation time
/// `τ = −1 + 2·Σ Γ_k`, `Γ_k = ρ_{2k} + ρ_{2k+1}`, summed while `Γ_k > 0`.
/// The result is clamped to `(0, n]`.
pub fn ess_iat(chain: &[f64]) -> Result<f64> {
    let n = chain.len();
    if n < 10 {
        return Err(Error::InvalidArgument("ESS needs at least 10 draws".into()));
    }
    let m = mean(chain);
    let centred: Vec<f64> = chain.iter().map(|x| x - m).collect();
    let c0 = centred.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let rho = |lag: usize| -> f64 {
        centred[..n - lag]
            .iter()
            .zip(&centred[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
            / c0
    };

    let mut tau = -1.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let gamma = rho(2 * k) + rho(2 * k + 1);
        if gamma <= 0.0 {
            break;
        }
        tau += 2.0 * gamma;
        k += 1;
    }
    let nf = n as f64;
    if tau <= 1.0 {
        // Antithetic or negligible autocorrelation.
        return Ok(nf);
    }
    Ok(nf / tau)
}

/// Split R̂, per-chain Geweke Z and per-chain ESS for one scalar.
pub fn diagnose(chains: &[Vec<f64>]) -> Result<DiagnosticReport> {
    let rhat = split_rhat(chains)?;
    let geweke = chains
        .iter()
        .map(|c| geweke_default(c))
        .collect::<Result<Vec<_>>>()?;
    let ess = chains.iter().map(|c| ess_iat(c)).collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticReport {
        rhat,
        geweke_z: geweke,
        ess_pooled: ess.iter().sum(),
        ess_per_chain: ess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(seed: u64, n: usize, phi: f64) -> Vec<f64> {
        let e = normals(seed, n);
        let mut x = 0.0;
        e.iter()
            .map(|z| {
                x = phi * x + z;
                x
            })
            .collect()
    }

    #[test]
    fn rhat_iid_and_shifted() {
        let chains: Vec<_> = (0..4).map(|i| normals(i, 10_000)).collect();
        let r = split_rhat(&chains).unwrap();
        assert!((0.999..=1.01).contains(&r), "rhat {r}");
        let mut shifted = chains.clone();
        shifted[2].iter_mut().for_each(|x| *x += 5.0);
        assert!(split_rhat(&shifted).unwrap() > 1.5);
    }

    #[test]
    fn rhat_errors() {
        assert!(matches!(
            split_rhat(&[vec![1.0; 10], vec![1.0; 10]]),
            Err(Error::DegenerateChains)
        ));
        assert!(split_rhat(&[vec![1.0, 2.0, 3.0, 4.0]]).is_err());
        assert!(split_rhat(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).is_err());
    }

    #[test]
    fn rhat_affine_invariant() {
        let chains: Vec<_> = (10..14).map(|i| ar1(i, 400, 0.7)).collect();
        let r = split_rhat(&chains).unwrap();
        let t: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|x| 3.0 * x - 7.0).collect()).collect();
        assert!((split_rhat(&t).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn geweke_behaviour() {
        let iid = normals(42, 10_000);
        assert!(geweke_default(&iid).unwrap().abs() < 2.0);

        let n = 10_000;
        let trend: Vec<f64> = iid
            .iter()
            .enumerate()
            .map(|(i, z)| z + 3.0 * i as f64 / n as f64)
            .collect();
        let z = geweke_default(&trend).unwrap();
        assert!(z.abs() > 3.0, "z {z}");
        let reversed: Vec<f64> = trend.iter().rev().copied().collect();
        assert!(geweke_default(&reversed).unwrap().signum() == -z.signum());

        assert!(matches!(geweke_default(&vec![2.0; 500]), Err(Error::ZeroVariance)));
        assert!(geweke_default(&iid[..50]).is_err());
    }

    #[test]
    fn ess_behaviour() {
        let n = 10_000;
        let iid = normals(7, n);
        let e = ess_iat(&iid).unwrap();
        assert!(e >= 0.8 * n as f64 && e <= n as f64, "ess {e}");

        let ar = ar1(8, n, 0.9);
        let expected = n as f64 * 0.1 / 1.9;
        let e = ess_iat(&ar).unwrap();
        assert!((e - expected).abs() <= 0.3 * expected, "ess {e} vs {expected}");

        let alt: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(ess_iat(&alt).unwrap(), 1000.0);

        assert!(matches!(ess_iat(&[3.0; 20]), Err(Error::ZeroVariance)));
        assert!(ess_iat(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn ess_decreases_with_autocorrelation() {
        let e: Vec<f64> = [0.0, 0.5, 0.9].iter().map(|&phi| ess_iat(&ar1(99, 5000, phi)).unwrap()).collect();
        assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
        assert!(e.iter().all(|&x| x <= 5000.0));
    }

    #[test]
    fn diagnose_collects_everything() {
        let chains: Vec<_> = (20..24).map(|i| normals(i, 1000)).collect();
        let report = diagnose(&chains).unwrap();
        assert_eq!(report.geweke_z.len(), 4);
        assert_eq!(report.ess_per_chain.len(), 4);
        assert!((report.ess_pooled - report.ess_per_chain.iter().sum::<f64>()).abs() < 1e-9);
        assert!((0.99..1.02).contains(&report.rhat), "{}", report.rhat);
    }
}
