use super::dprime::dprime;
use crate::bandit::{Policy, TargetFunctional};
use crate::env::EnumerableEnvironment;
use crate::error::{OpeError, Result};
use crate::models::OutcomeModelSnapshot;
use crate::numeric::CompensatedSum;

/// `(E[D'], E[D'^2])` under contexts from `env`, arms from `g`, rewards from `env`.
fn moments(
    env: &EnumerableEnvironment,
    g: &dyn Policy,
    gstar: &TargetFunctional,
    qbar: &OutcomeModelSnapshot,
) -> Result<(f64, f64)> {
    env.check()?;
    if g.arms() != env.arms {
        return Err(OpeError::Invalid(format!(
            "policy has {} arms, environment has {}",
            g.arms(),
            env.arms
        )));
    }
    let mut first = CompensatedSum::new();
    let mut second = CompensatedSum::new();
    let mut probs = vec![0.0; env.arms];
    for c in &env.contexts {
        g.propensities(&c.x, &mut probs);
        for (a, &ga) in probs.iter().enumerate() {
            if !(ga > 0.0) {
                return Err(OpeError::Domain(format!(
                    "logging policy gives arm {} probability {ga}; full support is required",
                    a + 1
                )));
            }
            for &(y, py) in &c.rewards[a] {
                let d = dprime(&c.x, a + 1, y, ga, gstar, qbar)?.value;
                let mass = c.p * ga * py;
                first.add(mass * d);
                second.add(mass * d * d);
            }
        }
    }
    Ok((first.value(), second.value()))
}

/// Exact `E[D'(g, Q)(O)]` by enumerating every `(x, a, y)`.
pub fn true_dprime_mean(
    env: &EnumerableEnvironment,
    g: &dyn Policy,
    gstar: &TargetFunctional,
    qbar: &OutcomeModelSnapshot,
) -> Result<f64> {
    moments(env, g, gstar, qbar).map(|m| m.0)
}

/// Exact `Var[D'(g, Q)(O)]` by enumeration.
pub fn true_dprime_variance(
    env: &EnumerableEnvironment,
    g: &dyn Policy,
    gstar: &TargetFunctional,
    qbar: &OutcomeModelSnapshot,
) -> Result<f64> {
    let (m1, m2) = moments(env, g, gstar, qbar)?;
    Ok(m2 - m1 * m1)
}
