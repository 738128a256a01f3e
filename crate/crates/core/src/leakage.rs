//! Exact information leaked when some message particles are z-measured together.
//!
//! Every family member is an equal-weight superposition of `d` basis states, so its
//! marginal on any particle subset is a ratio of support counts. The mutual
//! information is then summed over rational probabilities, which makes zero
//! leakage come out as exactly `0.0`.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;

use crate::codec::{GhzFamily, Scheme};
use crate::error::{domain, Error, Result};
use crate::scalar::Real;

/// Exact distribution of computational outcomes on `particles` for each member.
pub fn member_marginals(scheme: Scheme, particles: &BTreeSet<usize>) -> Result<Vec<BTreeMap<Vec<usize>, Ratio<u64>>>> {
    let family = GhzFamily::<f64>::build(scheme)?;
    let tol = f64::span_tol();
    let mut out = Vec::with_capacity(family.len());
    for (k, member) in family.members().iter().enumerate() {
        let probs = member.probabilities();
        let support: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > tol).collect();
        let w = 1.0 / support.len() as f64;
        if support.iter().any(|&i| (probs[i] - w).abs() > tol) {
            return Err(Error::Consistency(format!("member {k} is not an equal-weight superposition")));
        }
        let size = support.len() as u64;
        let mut dist: BTreeMap<Vec<usize>, Ratio<u64>> = BTreeMap::new();
        for &i in &support {
            let pattern: Vec<usize> = particles.iter().map(|&j| member.digit(i, j)).collect();
            *dist.entry(pattern).or_insert_with(|| Ratio::from_integer(0)) += Ratio::new(1, size);
        }
        out.push(dist);
    }
    Ok(out)
}

/// `I(outcome; message)` in bits under a uniform message prior when Eve
/// z-measures the `intercepted` message particles of an encoded multiplet.
pub fn grouped_leakage(scheme: Scheme, intercepted: &BTreeSet<usize>) -> Result<f64> {
    scheme.validate()?;
    if let Some(&j) = intercepted.iter().find(|&&j| j >= scheme.check_particle()) {
        return Err(domain(format!(
            "particle {j} is not a message particle of {scheme} (message particles are 0..{})",
            scheme.check_particle()
        )));
    }
    if intercepted.is_empty() {
        return Ok(0.0);
    }
    let marginals = member_marginals(scheme, intercepted)?;
    let members = marginals.len() as u64;
    let prior = Ratio::new(1, members);
    let mut outcome: BTreeMap<&Vec<usize>, Ratio<u64>> = BTreeMap::new();
    for dist in &marginals {
        for (o, &p) in dist {
            *outcome.entry(o).or_insert_with(|| Ratio::from_integer(0)) += p * prior;
        }
    }
    let mut info = 0.0;
    for dist in &marginals {
        for (o, &p) in dist {
            let ratio = p / outcome[o];
            if ratio == Ratio::from_integer(1) {
                continue;
            }
            let weight = p * prior;
            let bits = (*ratio.numer() as f64).log2() - (*ratio.denom() as f64).log2();
            info += (*weight.numer() as f64 / *weight.denom() as f64) * bits;
        }
    }
    Ok(info)
}
