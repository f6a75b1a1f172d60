//! Seeded random generators for distributions, transforms and weights,
//! shared by the property suites and the scenario generator.

use crate::dist::{CategoricalDistribution, FeatureTransform, JointDistribution};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Random point of the n-simplex with every coordinate ≥ `floor`
/// (requires n·floor ≤ 1): draws a Dirichlet-ish vector from exponential
/// spacings, then shifts it onto the floored simplex.
pub fn random_simplex(rng: &mut SplitMix64, n: usize, floor: f64) -> Vec<f64> {
    assert!(n > 0 && floor >= 0.0 && n as f64 * floor <= 1.0);
    // -ln(U) variates normalized: uniform on the simplex.
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            let u = 1.0 - rng.next_f64(); // in (0, 1]
            (-u.ln()).max(1e-300)
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    let free = 1.0 - n as f64 * floor;
    raw.into_iter().map(|v| floor + free * v / sum).collect()
}

/// Random full-support joint table over a K×ℓ grid with every cell
/// ≥ `cell_floor / (K·ℓ)`.
pub fn random_joint(
    rng: &mut SplitMix64,
    feature_count: usize,
    class_count: usize,
    cell_floor: f64,
) -> Result<JointDistribution> {
    let cells = feature_count * class_count;
    let mass = random_simplex(rng, cells, cell_floor / cells as f64);
    JointDistribution::new(feature_names(feature_count), class_count, mass)
}

/// Random joint table whose label priors are all ≥ `min_prior`: priors are
/// drawn on the floored simplex, class-conditional feature laws on a mildly
/// floored simplex, and the table is their product.
pub fn random_joint_with_priors(
    rng: &mut SplitMix64,
    feature_count: usize,
    class_count: usize,
    min_prior: f64,
) -> Result<JointDistribution> {
    let priors = random_simplex(rng, class_count, min_prior);
    let mut mass = vec![0.0; feature_count * class_count];
    for (y, &prior) in priors.iter().enumerate() {
        let conditional = random_simplex(rng, feature_count, 0.02 / feature_count as f64);
        for x in 0..feature_count {
            mass[x * class_count + y] = conditional[x] * prior;
        }
    }
    JointDistribution::new(feature_names(feature_count), class_count, mass)
}

/// Random feature pmf with full support over the grid of `j`.
pub fn random_feature_pmf(
    rng: &mut SplitMix64,
    j: &JointDistribution,
    floor: f64,
) -> Result<CategoricalDistribution> {
    let mass = random_simplex(rng, j.feature_count(), floor / j.feature_count() as f64);
    CategoricalDistribution::new(j.features().to_vec(), mass)
}

/// Random label prior vector with every entry ≥ `min_prior`.
pub fn random_priors(
    rng: &mut SplitMix64,
    class_count: usize,
    min_prior: f64,
) -> Result<CategoricalDistribution> {
    let mass = random_simplex(rng, class_count, min_prior);
    CategoricalDistribution::new(
        (1..=class_count).map(|i| i.to_string()).collect(),
        mass,
    )
}

/// Random surjective transform onto `stratum_count` strata: the first
/// `stratum_count` feature points seed one stratum each (in shuffled
/// order), the rest are assigned uniformly.
pub fn random_transform(
    rng: &mut SplitMix64,
    feature_count: usize,
    stratum_count: usize,
) -> Result<FeatureTransform> {
    if stratum_count == 0 || stratum_count > feature_count {
        return Err(Error::InvalidInput(format!(
            "cannot place {stratum_count} nonempty strata on {feature_count} feature points"
        )));
    }
    let mut order: Vec<usize> = (0..feature_count).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.next_usize(i + 1));
    }
    let mut assignments = vec![0usize; feature_count];
    for (slot, &x) in order.iter().enumerate() {
        assignments[x] = if slot < stratum_count {
            slot
        } else {
            rng.next_usize(stratum_count)
        };
    }
    FeatureTransform::new(
        assignments,
        (0..stratum_count).map(|t| format!("t{t}")).collect(),
    )
}

/// Random valid feature-weight vector for `p`: draws a full-support target
/// feature pmf and returns w_X = q_X / p_X, which integrates to 1 against
/// p_X by construction.
pub fn random_feature_weights(rng: &mut SplitMix64, p: &JointDistribution) -> Result<Vec<f64>> {
    let (px, _) = p.marginals();
    for x in 0..p.feature_count() {
        if !px.supported(x) {
            return Err(Error::UnsupportedFeature {
                feature: p.feature_name(x).to_string(),
                mass: 0.0,
            });
        }
    }
    let target = random_feature_pmf(rng, p, 0.02)?;
    Ok((0..p.feature_count())
        .map(|x| target.mass(x) / px.mass(x))
        .collect())
}

fn feature_names(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("x{i}")).collect()
}

/// Condition number of the K×ℓ class-conditional feature matrix P[X | Y].
/// Infinite when a class has no mass or the matrix is rank-deficient.
pub fn class_conditional_condition_number(p: &JointDistribution) -> f64 {
    let k = p.feature_count();
    let l = p.class_count();
    if k < l {
        return f64::INFINITY;
    }
    let cc = p.class_conditionals();
    let mut m = nalgebra::DMatrix::<f64>::zeros(k, l);
    for y in 0..l {
        match cc.row(y) {
            Some(row) => {
                for x in 0..k {
                    m[(x, y)] = row[x];
                }
            }
            None => return f64::INFINITY,
        }
    }
    let svd = m.svd(false, false);
    let min = svd.singular_values.min();
    if min > 0.0 {
        svd.singular_values.max() / min
    } else {
        f64::INFINITY
    }
}

/// Random full-support joint whose class-conditional matrix is well
/// conditioned, so the label priors are identifiable from the feature
/// marginal with a quantitative margin. Draws are rejected until the
/// condition number falls below `max_condition`.
pub fn random_identifiable_joint(
    rng: &mut SplitMix64,
    feature_count: usize,
    class_count: usize,
    min_prior: f64,
    max_condition: f64,
) -> Result<JointDistribution> {
    if feature_count < class_count {
        return Err(Error::InvalidInput(format!(
            "{class_count} classes cannot be identifiable from {feature_count} feature points"
        )));
    }
    for _ in 0..1000 {
        let p = random_joint_with_priors(rng, feature_count, class_count, min_prior)?;
        if class_conditional_condition_number(&p) <= max_condition {
            return Ok(p);
        }
    }
    Err(Error::InvalidInput(format!(
        "no draw with condition number ≤ {max_condition} in 1000 attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_floor_respected() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..100 {
            let v = random_simplex(&mut rng, 4, 0.05);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(v.iter().all(|&x| x >= 0.05 - 1e-12));
        }
    }

    #[test]
    fn simplex_draws_are_not_degenerate() {
        let mut rng = SplitMix64::new(4);
        let v = random_simplex(&mut rng, 4, 0.0);
        let spread = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - v.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread > 0.01, "draw collapsed to uniform: {v:?}");
    }

    #[test]
    fn joint_with_priors_meets_floor() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..50 {
            let j = random_joint_with_priors(&mut rng, 6, 3, 0.05).unwrap();
            let py = j.label_marginal();
            assert!(py.masses().iter().all(|&p| p >= 0.05 - 1e-10));
            assert!(j.mass_flat().iter().all(|&m| m > 0.0));
        }
    }

    #[test]
    fn transform_covers_every_stratum() {
        let mut rng = SplitMix64::new(21);
        for _ in 0..50 {
            let t = random_transform(&mut rng, 7, 3).unwrap();
            for s in 0..3 {
                assert!(t.members(s).next().is_some(), "stratum {s} empty");
            }
        }
        assert!(random_transform(&mut rng, 2, 3).is_err());
    }

    #[test]
    fn feature_weights_integrate_to_one() {
        let mut rng = SplitMix64::new(8);
        let p = random_joint(&mut rng, 5, 2, 0.1).unwrap();
        let (px, _) = p.marginals();
        for _ in 0..20 {
            let w = random_feature_weights(&mut rng, &p).unwrap();
            let sum: f64 = w.iter().enumerate().map(|(x, &v)| v * px.mass(x)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let a = random_joint(&mut SplitMix64::new(99), 4, 3, 0.05).unwrap();
        let b = random_joint(&mut SplitMix64::new(99), 4, 3, 0.05).unwrap();
        assert_eq!(a.mass_flat(), b.mass_flat());
    }
}
