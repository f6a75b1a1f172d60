//! Identifiability and invariance checks: sufficiency, conditional
//! independence, stratum-wise rank conditions, CDI, and the interplay of
//! SJS, SCS and covariate shift.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dist::{Classifier, FeatureTransform, JointDistribution, SUPPORT_EPS};
use crate::error::{Error, Result};
use crate::shift::{
    verify_cdi as shift_verify_cdi, verify_covariate_shift, verify_scs, verify_sjs, ShiftVerdict,
};

/// Relative singular-value threshold: a singular value counts towards the
/// rank when σ > threshold·σ_max.
pub const RANK_THRESHOLD: f64 = 1e-9;

/// Per-stratum rank diagnostics for the test-function matrix R(X).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumRank {
    pub stratum: String,
    pub mass: f64,
    pub rank: usize,
    pub smallest_singular_value: f64,
    pub condition_number: f64,
    /// Classes with zero mass in this positive-mass stratum; their matrix
    /// column is undefined and the stratum counts as rank-deficient.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub undefined_columns: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReport {
    pub class_count: usize,
    pub per_stratum: Vec<StratumRank>,
    /// True iff every positive-mass stratum attains full rank ℓ.
    pub overall_identifiable: bool,
}

/// Checks whether T(X) is sufficient for X with respect to the labels:
/// P[Y=y | T(X)=T(x)] = P[Y=y | X=x] on the feature support.
pub fn sufficiency_check(
    p: &JointDistribution,
    transform: &FeatureTransform,
    tol: f64,
) -> Result<ShiftVerdict> {
    require_cover(p, transform)?;
    let l = p.class_count();
    let n = transform.stratum_count();
    let mut p_yt = vec![0.0; n * l];
    let mut p_t = vec![0.0; n];
    for x in 0..p.feature_count() {
        let t = transform.stratum_of(x);
        for y in 0..l {
            p_yt[t * l + y] += p.mass(x, y);
            p_t[t] += p.mass(x, y);
        }
    }
    let post = p.posteriors();
    let mut holds = true;
    let mut max_dev: f64 = 0.0;
    let mut witnesses = Vec::new();
    for x in 0..p.feature_count() {
        let row = match post.row(x) {
            Some(r) => r,
            None => continue,
        };
        let t = transform.stratum_of(x);
        for y in 0..l {
            let stratum_post = p_yt[t * l + y] / p_t[t];
            let dev = (stratum_post - row[y]).abs();
            if dev > max_dev {
                max_dev = dev;
            }
            if dev > tol {
                holds = false;
                if witnesses.len() < crate::shift::MAX_WITNESSES {
                    witnesses.push(crate::shift::Witness {
                        cell: format!("P[Y={} | T(X)] vs P[Y={} | X={}]", y + 1, y + 1, p.feature_name(x)),
                        lhs: stratum_post,
                        rhs: row[y],
                    });
                }
            }
        }
    }
    Ok(ShiftVerdict {
        holds,
        max_deviation: max_dev,
        tolerance: tol,
        witnesses,
    })
}

/// Checks whether w_X(X) and the label events are independent conditional
/// on T(X): E_P[w_X·1_y | T=t] = E_P[w_X | T=t]·P[Y=y | T=t] per stratum.
pub fn conditional_independence_check(
    p: &JointDistribution,
    feature_weights: &[f64],
    transform: &FeatureTransform,
    tol: f64,
) -> Result<ShiftVerdict> {
    require_cover(p, transform)?;
    if feature_weights.len() != p.feature_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} feature points",
            feature_weights.len(),
            p.feature_count()
        )));
    }
    let l = p.class_count();
    let n = transform.stratum_count();
    let (px, _) = p.marginals();
    let mut holds = true;
    let mut max_dev: f64 = 0.0;
    let mut witnesses = Vec::new();
    for t in 0..n {
        let mut weighted_class = vec![0.0; l]; // Σ w·p(x,y) over the stratum
        let mut class_mass = vec![0.0; l];
        let mut weighted = 0.0;
        let mut mass = 0.0;
        for x in transform.members(t) {
            weighted += feature_weights[x] * px.mass(x);
            mass += px.mass(x);
            for y in 0..l {
                weighted_class[y] += feature_weights[x] * p.mass(x, y);
                class_mass[y] += p.mass(x, y);
            }
        }
        if mass <= SUPPORT_EPS {
            continue;
        }
        for y in 0..l {
            // both sides normalized by P[T=t]
            let lhs = weighted_class[y] / mass;
            let rhs = (weighted / mass) * (class_mass[y] / mass);
            let dev = (lhs - rhs).abs();
            if dev > max_dev {
                max_dev = dev;
            }
            if dev > tol {
                holds = false;
                if witnesses.len() < crate::shift::MAX_WITNESSES {
                    witnesses.push(crate::shift::Witness {
                        cell: format!(
                            "E[w·1_{} | T={}]",
                            y + 1,
                            transform.stratum_labels()[t]
                        ),
                        lhs,
                        rhs,
                    });
                }
            }
        }
    }
    Ok(ShiftVerdict {
        holds,
        max_deviation: max_dev,
        tolerance: tol,
        witnesses,
    })
}

/// Builds the per-stratum test-function matrix
/// R_{ij} = E_P[f_i(X)·1_j(Y) | stratum] / P[Y=j | stratum]
/// and reports its rank via singular values. With two transforms the
/// strata are the joint level sets of the pair.
pub fn rank_identifiability(
    p: &JointDistribution,
    transforms: &[&FeatureTransform],
    test_fns: &[Vec<f64>],
) -> Result<RankReport> {
    if transforms.is_empty() || transforms.len() > 2 {
        return Err(Error::InvalidInput(
            "rank check takes one or two feature transforms".into(),
        ));
    }
    for t in transforms {
        require_cover(p, t)?;
    }
    let l = p.class_count();
    if test_fns.len() != l {
        return Err(Error::ShapeMismatch(format!(
            "{} test functions for {l} classes",
            test_fns.len()
        )));
    }
    for (i, f) in test_fns.iter().enumerate() {
        if f.len() != p.feature_count() {
            return Err(Error::ShapeMismatch(format!(
                "test function {i} covers {} feature points, expected {}",
                f.len(),
                p.feature_count()
            )));
        }
        if f.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "test function {i} must be finite and non-negative"
            )));
        }
    }

    // Joint stratum index and label per feature point.
    let (stratum_of, labels): (Vec<usize>, Vec<String>) = if transforms.len() == 1 {
        (
            transforms[0].assignments().to_vec(),
            transforms[0].stratum_labels().to_vec(),
        )
    } else {
        let (a, b) = (transforms[0], transforms[1]);
        let nb = b.stratum_count();
        let ids = (0..p.feature_count())
            .map(|x| a.stratum_of(x) * nb + b.stratum_of(x))
            .collect();
        let labels = (0..a.stratum_count())
            .flat_map(|i| {
                (0..nb).map(move |j| (i, j))
            })
            .map(|(i, j)| format!("({}, {})", a.stratum_labels()[i], b.stratum_labels()[j]))
            .collect();
        (ids, labels)
    };
    let n = labels.len();

    let mut class_mass = vec![0.0; n * l]; // P[Y=j, stratum]
    let mut stratum_mass = vec![0.0; n];
    for x in 0..p.feature_count() {
        let s = stratum_of[x];
        for y in 0..l {
            class_mass[s * l + y] += p.mass(x, y);
            stratum_mass[s] += p.mass(x, y);
        }
    }

    let mut per_stratum = Vec::new();
    let mut overall = true;
    for s in 0..n {
        if stratum_mass[s] <= SUPPORT_EPS {
            continue;
        }
        let undefined: Vec<usize> = (0..l)
            .filter(|&j| class_mass[s * l + j] <= SUPPORT_EPS)
            .collect();
        let defined: Vec<usize> = (0..l)
            .filter(|&j| class_mass[s * l + j] > SUPPORT_EPS)
            .collect();

        // R over defined columns only; a missing column already caps the
        // rank below ℓ.
        let mut r = DMatrix::<f64>::zeros(l, defined.len());
        for x in 0..p.feature_count() {
            if stratum_of[x] != s {
                continue;
            }
            for i in 0..l {
                for (col, &j) in defined.iter().enumerate() {
                    r[(i, col)] += test_fns[i][x] * p.mass(x, j) / class_mass[s * l + j];
                }
            }
        }
        let svd = r.svd(false, false);
        let sigma_max = svd.singular_values.max();
        let sigma_min = svd.singular_values.min();
        let rank = if sigma_max > 0.0 {
            svd.singular_values
                .iter()
                .filter(|&&v| v > RANK_THRESHOLD * sigma_max)
                .count()
        } else {
            0
        };
        let identifiable = rank == l && undefined.is_empty();
        overall &= identifiable;
        per_stratum.push(StratumRank {
            stratum: labels[s].clone(),
            mass: stratum_mass[s],
            rank,
            smallest_singular_value: sigma_min,
            condition_number: if sigma_min > 0.0 {
                sigma_max / sigma_min
            } else {
                f64::INFINITY
            },
            undefined_columns: undefined,
        });
    }
    Ok(RankReport {
        class_count: l,
        per_stratum,
        overall_identifiable: overall,
    })
}

/// Rank check with the default test functions: the indicator functions of
/// a classifier's decision regions.
pub fn rank_identifiability_with_classifier(
    p: &JointDistribution,
    transforms: &[&FeatureTransform],
    cls: &Classifier,
) -> Result<RankReport> {
    rank_identifiability(p, transforms, &cls.region_indicators())
}

/// Conditional distribution invariance: the feature law given the stratum
/// agrees between P and Q. Testable from feature observations alone.
pub fn cdi_check(
    p: &JointDistribution,
    q: &JointDistribution,
    transform: &FeatureTransform,
    tol: f64,
) -> Result<ShiftVerdict> {
    shift_verify_cdi(p, q, transform, tol)
}

/// Joint evaluation of the three implications tying SCS, SJS, CDI and
/// covariate shift together. A violated implication on any concrete
/// instance is a bug somewhere, so callers treat `*_ok = false` as a test
/// failure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScsDecompositionReport {
    pub covariate: ShiftVerdict,
    pub cdi: ShiftVerdict,
    pub scs: ShiftVerdict,
    pub sjs: ShiftVerdict,
    pub identifiable: bool,
    /// covariate ∧ CDI ⇒ SCS
    pub covariate_cdi_implies_scs: bool,
    /// SCS ⇒ SJS ∧ CDI
    pub scs_implies_sjs_cdi: bool,
    /// SJS ∧ CDI ∧ full rank ⇒ covariate
    pub sjs_cdi_rank_implies_covariate: bool,
}

pub fn scs_decomposition_check(
    p: &JointDistribution,
    q: &JointDistribution,
    transform: &FeatureTransform,
    cls: &Classifier,
    tol: f64,
) -> Result<ScsDecompositionReport> {
    let covariate = verify_covariate_shift(p, q, tol)?;
    let cdi = cdi_check(p, q, transform, tol)?;
    let scs = verify_scs(p, q, transform, tol)?;
    let sjs = verify_sjs(p, q, transform, tol)?;
    let rank = rank_identifiability_with_classifier(p, &[transform], cls)?;
    let identifiable = rank.overall_identifiable;
    Ok(ScsDecompositionReport {
        covariate_cdi_implies_scs: !(covariate.holds && cdi.holds) || scs.holds,
        scs_implies_sjs_cdi: !scs.holds || (sjs.holds && cdi.holds),
        sjs_cdi_rank_implies_covariate: !(sjs.holds && cdi.holds && identifiable)
            || covariate.holds,
        covariate,
        cdi,
        scs,
        sjs,
        identifiable,
    })
}

fn require_cover(p: &JointDistribution, transform: &FeatureTransform) -> Result<()> {
    if transform.feature_count() != p.feature_count() {
        return Err(Error::ShapeMismatch(format!(
            "transform covers {} feature points, distribution has {}",
            transform.feature_count(),
            p.feature_count()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::CategoricalDistribution;
    use crate::shift::{make_covariate_shift, make_prior_shift, make_scs};
    use crate::testutil::{fixture_p2, fixture_p4, priors, qx};

    #[test]
    fn identity_transform_is_sufficient() {
        let p2 = fixture_p2();
        let t = FeatureTransform::identity(2);
        assert!(sufficiency_check(&p2, &t, 1e-12).unwrap().holds);
    }

    #[test]
    fn constant_transform_not_sufficient_for_p2() {
        let p2 = fixture_p2();
        let t = FeatureTransform::constant(2);
        let v = sufficiency_check(&p2, &t, 1e-12).unwrap();
        assert!(!v.holds);
        // P[Y=1 | T] = 0.5 against posteriors 0.8 / 0.2
        assert!((v.max_deviation - 0.3).abs() < 1e-12);
    }

    #[test]
    fn within_stratum_constant_posteriors_are_sufficient() {
        // posteriors equal inside each stratum by construction
        let j = JointDistribution::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            2,
            vec![0.16, 0.04, 0.08, 0.02, 0.09, 0.21, 0.12, 0.28],
        )
        .unwrap();
        let t = FeatureTransform::new(vec![0, 0, 1, 1], vec!["s".into(), "t".into()]).unwrap();
        assert!(sufficiency_check(&j, &t, 1e-12).unwrap().holds);
    }

    #[test]
    fn unit_weights_always_conditionally_independent() {
        let p4 = fixture_p4();
        let t = FeatureTransform::new(vec![0, 1, 0, 1], vec!["s".into(), "t".into()]).unwrap();
        assert!(conditional_independence_check(&p4, &[1.0; 4], &t, 1e-12)
            .unwrap()
            .holds);
    }

    #[test]
    fn sufficiency_implies_conditional_independence() {
        let j = JointDistribution::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            2,
            vec![0.16, 0.04, 0.08, 0.02, 0.09, 0.21, 0.12, 0.28],
        )
        .unwrap();
        let t = FeatureTransform::new(vec![0, 0, 1, 1], vec!["s".into(), "t".into()]).unwrap();
        assert!(sufficiency_check(&j, &t, 1e-12).unwrap().holds);
        let (px, _) = j.marginals();
        let mut rng = crate::rng::SplitMix64::new(11);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..4).map(|_| 0.2 + rng.next_f64() * 1.6).collect();
            let norm: f64 = raw.iter().enumerate().map(|(x, w)| w * px.mass(x)).sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / norm).collect();
            assert!(conditional_independence_check(&j, &weights, &t, 1e-10)
                .unwrap()
                .holds);
        }
    }

    #[test]
    fn p2_constant_transform_dependence_detected() {
        let p2 = fixture_p2();
        let t = FeatureTransform::constant(2);
        let v = conditional_independence_check(&p2, &[1.4, 0.6], &t, 1e-12).unwrap();
        assert!(!v.holds);
        // E[w·1_1 | T] = 0.62 vs E[w | T]·P[Y=1 | T] = 1·0.5
        assert!((v.max_deviation - 0.12).abs() < 1e-12);
    }

    #[test]
    fn rank_p2_constant_transform_identifiable() {
        let p2 = fixture_p2();
        let t = FeatureTransform::constant(2);
        let fns = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let report = rank_identifiability(&p2, &[&t], &fns).unwrap();
        assert!(report.overall_identifiable);
        assert_eq!(report.per_stratum.len(), 1);
        assert_eq!(report.per_stratum[0].rank, 2);
        // R = [[0.8, 0.2], [0.2, 0.8]]
        assert!(report.per_stratum[0].condition_number < 2.0);
    }

    #[test]
    fn repeated_test_functions_rank_deficient() {
        let p2 = fixture_p2();
        let t = FeatureTransform::constant(2);
        let fns = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let report = rank_identifiability(&p2, &[&t], &fns).unwrap();
        assert!(!report.overall_identifiable);
        assert_eq!(report.per_stratum[0].rank, 1);
    }

    #[test]
    fn identity_transform_rank_deficient_for_two_classes() {
        // one feature point per stratum: rows of R are proportional
        let p2 = fixture_p2();
        let t = FeatureTransform::identity(2);
        let cls = Classifier::new(vec![0, 1], 2).unwrap();
        let report = rank_identifiability_with_classifier(&p2, &[&t], &cls).unwrap();
        assert!(!report.overall_identifiable);
        for s in &report.per_stratum {
            assert!(s.rank < 2);
        }
    }

    #[test]
    fn cdi_holds_for_scs_targets() {
        let p4 = fixture_p4();
        let t = FeatureTransform::new(vec![0, 0, 1, 1], vec!["s".into(), "t".into()]).unwrap();
        let pmf =
            CategoricalDistribution::new(t.stratum_labels().to_vec(), vec![0.8, 0.2]).unwrap();
        let q = make_scs(&p4, &t, &pmf).unwrap();
        assert!(cdi_check(&p4, &q, &t, 1e-12).unwrap().holds);
    }

    #[test]
    fn cdi_fails_for_prior_shift_with_constant_transform() {
        let p2 = fixture_p2();
        let q = make_prior_shift(&p2, &priors(&[0.7, 0.3])).unwrap();
        let t = FeatureTransform::constant(2);
        let v = cdi_check(&p2, &q, &t, 1e-12).unwrap();
        assert!(!v.holds);
        // Q_X = (0.62, 0.38) vs (0.5, 0.5)
        assert!((v.max_deviation - 0.12).abs() < 1e-12);
    }

    #[test]
    fn decomposition_identity_instance() {
        let p4 = fixture_p4();
        let t = FeatureTransform::new(vec![0, 0, 1, 1], vec!["s".into(), "t".into()]).unwrap();
        let cls = Classifier::bayes(&p4);
        let report = scs_decomposition_check(&p4, &p4, &t, &cls, 1e-12).unwrap();
        assert!(report.covariate.holds);
        assert!(report.cdi.holds);
        assert!(report.scs.holds);
        assert!(report.sjs.holds);
        assert!(report.covariate_cdi_implies_scs);
        assert!(report.scs_implies_sjs_cdi);
        assert!(report.sjs_cdi_rank_implies_covariate);
    }

    #[test]
    fn decomposition_scs_instance() {
        let p4 = fixture_p4();
        let t = FeatureTransform::new(vec![0, 0, 1, 1], vec!["s".into(), "t".into()]).unwrap();
        let pmf =
            CategoricalDistribution::new(t.stratum_labels().to_vec(), vec![0.9, 0.1]).unwrap();
        let q = make_scs(&p4, &t, &pmf).unwrap();
        let cls = Classifier::bayes(&p4);
        let report = scs_decomposition_check(&p4, &q, &t, &cls, 1e-9).unwrap();
        assert!(report.scs.holds);
        assert!(report.sjs.holds);
        assert!(report.cdi.holds);
        assert!(report.scs_implies_sjs_cdi);
        assert!(report.sjs_cdi_rank_implies_covariate);
    }

    #[test]
    fn decomposition_stratum_reweighted_covariate_is_scs() {
        // Covariate shift whose feature marginal only moves stratum
        // weights, preserving within-stratum conditionals.
        let p4 = fixture_p4();
        let t = FeatureTransform::new(vec![0, 0, 1, 1], vec!["s".into(), "t".into()]).unwrap();
        let (px, _) = p4.marginals();
        let p_t: Vec<f64> = (0..2)
            .map(|s| t.members(s).map(|x| px.mass(x)).sum())
            .collect();
        let new_t = [0.75, 0.25];
        let target: Vec<f64> = (0..4)
            .map(|x| px.mass(x) / p_t[t.stratum_of(x)] * new_t[t.stratum_of(x)])
            .collect();
        let q = make_covariate_shift(&p4, &qx(&p4, &target)).unwrap();
        let cls = Classifier::bayes(&p4);
        let report = scs_decomposition_check(&p4, &q, &t, &cls, 1e-9).unwrap();
        assert!(report.covariate.holds);
        assert!(report.cdi.holds);
        assert!(report.scs.holds, "max dev {}", report.scs.max_deviation);
        assert!(report.covariate_cdi_implies_scs);
    }
}
