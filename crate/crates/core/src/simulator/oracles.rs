use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{EpisodeRecord, SimError};
use crate::model::Instance;
use crate::scalar::Scalar;

/// Largest number of residual-demand vectors the DP will enumerate.
pub const DP_STATE_LIMIT: u128 = 1_000_000;

/// Expected consumption of the optimal online policy, by bottom-up dynamic
/// programming over residual demand vectors.
///
/// From state `s`, an arriving type that some unsatisfied campaign targets
/// moves to the best reachable `s − e_i`; any other arrival leaves `s`
/// unchanged. Solving that self-loop gives
/// `E(s) = (1 + Σ_useful p_j · min_i E(s − e_i)) / Σ_useful p_j`.
pub fn dp_optimal_expected<F: Scalar>(instance: &Instance) -> Result<F, SimError> {
    let m = instance.m();
    let radix: Vec<u128> = instance.demands().iter().map(|&w| w as u128 + 1).collect();
    let states = radix
        .iter()
        .try_fold(1u128, |acc, &r| acc.checked_mul(r).filter(|&s| s <= DP_STATE_LIMIT));
    let Some(states) = states else {
        let states = radix.iter().fold(1u128, |acc, &r| acc.saturating_mul(r));
        return Err(SimError::StateSpaceTooLarge {
            states,
            limit: DP_STATE_LIMIT,
        });
    };
    let states = states as usize;
    let mut stride = vec![1usize; m];
    for i in 1..m {
        stride[i] = stride[i - 1] * radix[i - 1] as usize;
    }
    let probs: Vec<F> = instance.probs().iter().map(|&p| F::from_probability(p)).collect();
    let targeting: Vec<Vec<usize>> = (0..instance.n())
        .map(|j| instance.type_edges(j).iter().map(|r| r.node).collect())
        .collect();

    let mut value: Vec<F> = Vec::with_capacity(states);
    value.push(F::zero());
    let mut digits = vec![0u64; m];
    for s in 1..states {
        // Mixed-radix increment of `digits` to represent `s`.
        for (i, d) in digits.iter_mut().enumerate() {
            *d += 1;
            if *d < instance.demand(i) + 1 {
                break;
            }
            *d = 0;
        }
        let mut mass = F::zero();
        let mut acc = F::one();
        for (j, campaigns) in targeting.iter().enumerate() {
            let best = campaigns
                .iter()
                .filter(|&&i| digits[i] > 0)
                .map(|&i| &value[s - stride[i]])
                .fold(None::<&F>, |b, v| match b {
                    Some(b) if b <= v => Some(b),
                    _ => Some(v),
                });
            if let Some(best) = best {
                mass = mass + probs[j].clone();
                acc = acc + probs[j].clone() * best.clone();
            }
        }
        value.push(acc / mass);
    }
    Ok(value.pop().expect("at least one state"))
}

/// Upper bound on the expected consumption of the random policy: the
/// non-uniform coupon-collector integral
/// `∫₀^∞ 1 − Π_i (1 − e^{−t λ_i})^{W_i} dt` with
/// `λ_i = Σ_{u_j ∈ Γ(a_i)} p_j / W(u_j)`.
pub fn random_upper_bound<F: Float>(instance: &Instance) -> F {
    let c = |x: f64| F::from(x).expect("representable constant");
    let rates: Vec<(F, F)> = (0..instance.m())
        .map(|i| {
            let lambda: f64 = instance
                .campaign_edges(i)
                .iter()
                .map(|r| instance.prob(r.node) / instance.type_demand(r.node) as f64)
                .sum();
            (c(lambda), c(instance.demand(i) as f64))
        })
        .collect();
    // 1 − exp(Σ W_i ln(1 − e^{−tλ_i})), stable for large W_i and small tails.
    let integrand = |t: F| -> F {
        let log_all: F = rates
            .iter()
            .map(|&(lambda, w)| w * (-(-t * lambda).exp()).ln_1p())
            .fold(F::zero(), |a, b| a + b);
        -log_all.exp_m1()
    };
    let tail = c(1e-12);
    let mut t_max = F::one();
    while integrand(t_max) >= tail {
        t_max = t_max + t_max;
    }
    let pieces = 64;
    let h = t_max / c(pieces as f64);
    let tol = c(1e-10) * t_max;
    (0..pieces)
        .map(|k| {
            let a = h * c(k as f64);
            let b = a + h;
            let fa = integrand(a);
            let fb = integrand(b);
            let fm = integrand((a + b) / c(2.0));
            let whole = (b - a) / c(6.0) * (fa + c(4.0) * fm + fb);
            adaptive_simpson(&integrand, a, b, fa, fm, fb, whole, tol / c(pieces as f64), 40)
        })
        .fold(F::zero(), |a, b| a + b)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F: Float>(
    f: &impl Fn(F) -> F,
    a: F,
    b: F,
    fa: F,
    fm: F,
    fb: F,
    whole: F,
    tol: F,
    depth: u32,
) -> F {
    let two = F::one() + F::one();
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let flm = f(lm);
    let frm = f(rm);
    let six = F::from(6.0).expect("representable constant");
    let left = (m - a) / six * (fa + two * two * flm + fm);
    let right = (b - m) / six * (fm + two * two * frm + fb);
    let delta = left + right - whole;
    let fifteen = F::from(15.0).expect("representable constant");
    if depth == 0 || delta.abs() <= fifteen * tol {
        return left + right + delta / fifteen;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, tol / two, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, tol / two, depth - 1)
}

/// Per-type check of `E(U_j) = p_j E(Y)` over a batch of episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaldRow {
    pub user_type: usize,
    /// `mean(U_j) − p_j · mean(Y)`.
    pub deviation: f64,
    /// Deviation over its standard error; 0 when every episode agrees exactly.
    pub z_score: f64,
}

pub fn wald_check(records: &[EpisodeRecord], probs: &[f64]) -> Vec<WaldRow> {
    let n = records.len() as f64;
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let d: Vec<f64> = records
                .iter()
                .map(|r| r.type_counts[j] as f64 - p * r.consumption as f64)
                .collect();
            let mean = d.iter().sum::<f64>() / n;
            let var = if records.len() > 1 {
                d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let z_score = if var > 0.0 { mean / (var / n).sqrt() } else { 0.0 };
            WaldRow {
                user_type: j,
                deviation: mean,
                z_score,
            }
        })
        .collect()
}
