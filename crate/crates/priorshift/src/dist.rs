//! Finite joint distributions of features and labels, their marginals,
//! conditionals and importance weights.
//!
//! Feature spaces are enumerated; "densities" are probability tables with
//! respect to counting measure, so every almost-sure statement becomes a
//! finite conjunction over support cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Construction-time normalization tolerance.
pub const NORM_TOL: f64 = 1e-12;
/// Default tolerance for cross-distribution identity checks.
pub const CROSS_TOL: f64 = 1e-10;
/// Probabilities below this are treated as zero for support determination.
pub const SUPPORT_EPS: f64 = 1e-15;

/// Joint probability table over a feature×label grid.
///
/// Rows index feature points, columns index classes `0..class_count`.
/// Immutable after construction; all entries non-negative and summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "JointDistributionRepr")]
pub struct JointDistribution {
    features: Vec<String>,
    class_count: usize,
    mass: Vec<f64>, // row-major K×ℓ
}

/// Wire format: `{"features":[...], "classes":ℓ, "mass":[[row-major K×ℓ]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct JointDistributionRepr {
    features: Vec<String>,
    classes: usize,
    mass: Vec<Vec<f64>>,
}

impl From<JointDistribution> for JointDistributionRepr {
    fn from(j: JointDistribution) -> Self {
        let rows = j
            .mass
            .chunks(j.class_count)
            .map(|r| r.to_vec())
            .collect();
        JointDistributionRepr {
            features: j.features,
            classes: j.class_count,
            mass: rows,
        }
    }
}

impl<'de> Deserialize<'de> for JointDistribution {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let repr = JointDistributionRepr::deserialize(deserializer)?;
        let k = repr.features.len();
        let mut flat = Vec::with_capacity(k * repr.classes);
        for (i, row) in repr.mass.iter().enumerate() {
            if row.len() != repr.classes {
                return Err(serde::de::Error::custom(format!(
                    "mass row {i} has {} entries, expected {} (classes)",
                    row.len(),
                    repr.classes
                )));
            }
            flat.extend_from_slice(row);
        }
        if repr.mass.len() != k {
            return Err(serde::de::Error::custom(format!(
                "mass has {} rows, expected {} (features)",
                repr.mass.len(),
                k
            )));
        }
        JointDistribution::new(repr.features, repr.classes, flat)
            .map_err(serde::de::Error::custom)
    }
}

impl JointDistribution {
    /// Builds a joint distribution from a row-major K×ℓ mass table,
    /// enforcing non-negativity and normalization to within [`NORM_TOL`].
    pub fn new(features: Vec<String>, class_count: usize, mass: Vec<f64>) -> Result<Self> {
        let k = features.len();
        if k == 0 {
            return Err(Error::InvalidDistribution(
                "feature space must contain at least one point".into(),
            ));
        }
        if class_count < 2 {
            return Err(Error::InvalidDistribution(
                "class count must be at least 2".into(),
            ));
        }
        if mass.len() != k * class_count {
            return Err(Error::InvalidDistribution(format!(
                "mass table has {} entries, expected {}×{}",
                mass.len(),
                k,
                class_count
            )));
        }
        let mut sum = 0.0;
        for (i, &m) in mass.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "mass entry {i} is {m}, must be finite and non-negative"
                )));
            }
            sum += m;
        }
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "total mass {sum} deviates from 1 by more than {NORM_TOL}"
            )));
        }
        Ok(JointDistribution {
            features,
            class_count,
            mass,
        })
    }

    /// Like [`JointDistribution::new`] but rescales the table to unit mass first.
    pub fn from_unnormalized(
        features: Vec<String>,
        class_count: usize,
        mass: Vec<f64>,
    ) -> Result<Self> {
        let sum: f64 = mass.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidDistribution(
                "cannot normalize a table with zero total mass".into(),
            ));
        }
        let scaled = mass.iter().map(|m| m / sum).collect();
        Self::new(features, class_count, scaled)
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn feature_name(&self, x: usize) -> &str {
        &self.features[x]
    }

    /// Joint mass p(x,y).
    pub fn mass(&self, x: usize, y: usize) -> f64 {
        self.mass[x * self.class_count + y]
    }

    /// Row-major flat view of the mass table.
    pub fn mass_flat(&self) -> &[f64] {
        &self.mass
    }

    /// True when the cell carries mass above [`SUPPORT_EPS`].
    pub fn supported(&self, x: usize, y: usize) -> bool {
        self.mass(x, y) > SUPPORT_EPS
    }

    pub fn same_shape(&self, other: &JointDistribution) -> bool {
        self.features == other.features && self.class_count == other.class_count
    }

    fn require_same_shape(&self, other: &JointDistribution) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!(
                "{}×{} grid vs {}×{}",
                self.feature_count(),
                self.class_count,
                other.feature_count(),
                other.class_count
            )));
        }
        Ok(())
    }

    /// Feature marginal p_X and label marginal P_Y.
    pub fn marginals(&self) -> (CategoricalDistribution, CategoricalDistribution) {
        let k = self.feature_count();
        let l = self.class_count;
        let mut feature = vec![0.0; k];
        let mut label = vec![0.0; l];
        for x in 0..k {
            for y in 0..l {
                let m = self.mass(x, y);
                feature[x] += m;
                label[y] += m;
            }
        }
        (
            CategoricalDistribution::new_unchecked(self.features.clone(), feature),
            CategoricalDistribution::new_unchecked(class_labels(l), label),
        )
    }

    pub fn feature_marginal(&self) -> CategoricalDistribution {
        self.marginals().0
    }

    pub fn label_marginal(&self) -> CategoricalDistribution {
        self.marginals().1
    }

    /// Posterior table P[Y=y | X=x], one row per feature point.
    /// Rows at zero-mass feature points are flagged undefined.
    pub fn posteriors(&self) -> ConditionalTable {
        let l = self.class_count;
        let rows = (0..self.feature_count())
            .map(|x| {
                let px: f64 = (0..l).map(|y| self.mass(x, y)).sum();
                if px > SUPPORT_EPS {
                    Some((0..l).map(|y| self.mass(x, y) / px).collect())
                } else {
                    None
                }
            })
            .collect();
        ConditionalTable::new_unchecked(self.features.clone(), l, rows)
    }

    /// Class-conditional table P[X=x | Y=y], one row per class.
    /// Rows for zero-mass classes are flagged undefined.
    pub fn class_conditionals(&self) -> ConditionalTable {
        let k = self.feature_count();
        let l = self.class_count;
        let rows = (0..l)
            .map(|y| {
                let py: f64 = (0..k).map(|x| self.mass(x, y)).sum();
                if py > SUPPORT_EPS {
                    Some((0..k).map(|x| self.mass(x, y) / py).collect())
                } else {
                    None
                }
            })
            .collect();
        ConditionalTable::new_unchecked(class_labels(l), k, rows)
    }

    /// Marginal of the transformed feature T(X).
    pub fn stratum_marginal(&self, transform: &FeatureTransform) -> CategoricalDistribution {
        let mut mass = vec![0.0; transform.stratum_count()];
        let (px, _) = self.marginals();
        for x in 0..self.feature_count() {
            mass[transform.stratum_of(x)] += px.mass(x);
        }
        CategoricalDistribution::new_unchecked(transform.stratum_labels().to_vec(), mass)
    }
}

/// Probability vector over a finite set of labelled outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "CategoricalRepr")]
pub struct CategoricalDistribution {
    labels: Vec<String>,
    mass: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CategoricalRepr {
    labels: Vec<String>,
    mass: Vec<f64>,
}

impl From<CategoricalDistribution> for CategoricalRepr {
    fn from(c: CategoricalDistribution) -> Self {
        CategoricalRepr {
            labels: c.labels,
            mass: c.mass,
        }
    }
}

impl<'de> Deserialize<'de> for CategoricalDistribution {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let repr = CategoricalRepr::deserialize(deserializer)?;
        CategoricalDistribution::new(repr.labels, repr.mass).map_err(serde::de::Error::custom)
    }
}

impl CategoricalDistribution {
    pub fn new(labels: Vec<String>, mass: Vec<f64>) -> Result<Self> {
        if labels.len() != mass.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} labels but {} mass entries",
                labels.len(),
                mass.len()
            )));
        }
        let mut sum = 0.0;
        for (i, &m) in mass.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "mass entry {i} is {m}, must be finite and non-negative"
                )));
            }
            sum += m;
        }
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "total mass {sum} deviates from 1 by more than {NORM_TOL}"
            )));
        }
        Ok(CategoricalDistribution { labels, mass })
    }

    /// Construction from values already known to satisfy the invariants
    /// (marginalization of a valid joint table, for instance).
    pub(crate) fn new_unchecked(labels: Vec<String>, mass: Vec<f64>) -> Self {
        CategoricalDistribution { labels, mass }
    }

    pub fn from_unnormalized(labels: Vec<String>, mass: Vec<f64>) -> Result<Self> {
        let sum: f64 = mass.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidDistribution(
                "cannot normalize a vector with zero total mass".into(),
            ));
        }
        let scaled = mass.iter().map(|m| m / sum).collect();
        Self::new(labels, scaled)
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.mass[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn supported(&self, i: usize) -> bool {
        self.mass[i] > SUPPORT_EPS
    }
}

/// Per-condition probability rows; rows whose conditioning event has zero
/// mass are explicitly `None`, never silently zero-filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    condition_labels: Vec<String>,
    outcome_count: usize,
    rows: Vec<Option<Vec<f64>>>,
}

impl ConditionalTable {
    pub fn new(
        condition_labels: Vec<String>,
        outcome_count: usize,
        rows: Vec<Option<Vec<f64>>>,
    ) -> Result<Self> {
        if rows.len() != condition_labels.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} rows but {} condition labels",
                rows.len(),
                condition_labels.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if let Some(r) = row {
                if r.len() != outcome_count {
                    return Err(Error::InvalidDistribution(format!(
                        "row {i} has {} entries, expected {outcome_count}",
                        r.len()
                    )));
                }
                let sum: f64 = r.iter().sum();
                if r.iter().any(|&p| !p.is_finite() || p < 0.0)
                    || (sum - 1.0).abs() > NORM_TOL
                {
                    return Err(Error::InvalidDistribution(format!(
                        "row {i} is not a probability vector (sum {sum})"
                    )));
                }
            }
        }
        Ok(ConditionalTable {
            condition_labels,
            outcome_count,
            rows,
        })
    }

    pub(crate) fn new_unchecked(
        condition_labels: Vec<String>,
        outcome_count: usize,
        rows: Vec<Option<Vec<f64>>>,
    ) -> Self {
        ConditionalTable {
            condition_labels,
            outcome_count,
            rows,
        }
    }

    pub fn condition_count(&self) -> usize {
        self.rows.len()
    }

    pub fn condition_labels(&self) -> &[String] {
        &self.condition_labels
    }

    pub fn outcome_count(&self) -> usize {
        self.outcome_count
    }

    /// `None` when the conditioning event has zero mass.
    pub fn row(&self, i: usize) -> Option<&[f64]> {
        self.rows[i].as_deref()
    }

    pub fn is_defined(&self, i: usize) -> bool {
        self.rows[i].is_some()
    }
}

/// Importance weight tables w(x,y) = q/p and w_X(x) = q_X/p_X.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceWeights {
    feature_count: usize,
    class_count: usize,
    joint: Vec<f64>, // row-major K×ℓ
    feature: Vec<f64>,
}

impl ImportanceWeights {
    pub fn joint(&self, x: usize, y: usize) -> f64 {
        self.joint[x * self.class_count + y]
    }

    pub fn feature(&self, x: usize) -> f64 {
        self.feature[x]
    }

    pub fn feature_weights(&self) -> &[f64] {
        &self.feature
    }
}

/// Total map from feature points to strata, the discretizing transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTransform {
    assignments: Vec<usize>, // aligned with the feature enumeration
    stratum_labels: Vec<String>,
}

impl FeatureTransform {
    /// `assignments[x]` is the stratum index of feature point `x`.
    pub fn new(assignments: Vec<usize>, stratum_labels: Vec<String>) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::InvalidInput(
                "transform must cover at least one feature point".into(),
            ));
        }
        if stratum_labels.is_empty() {
            return Err(Error::InvalidInput("at least one stratum required".into()));
        }
        if let Some(&bad) = assignments.iter().find(|&&t| t >= stratum_labels.len()) {
            return Err(Error::InvalidInput(format!(
                "stratum index {bad} out of range (N = {})",
                stratum_labels.len()
            )));
        }
        Ok(FeatureTransform {
            assignments,
            stratum_labels,
        })
    }

    /// Single stratum containing every feature point.
    pub fn constant(feature_count: usize) -> Self {
        FeatureTransform {
            assignments: vec![0; feature_count],
            stratum_labels: vec!["t0".into()],
        }
    }

    /// One stratum per feature point.
    pub fn identity(feature_count: usize) -> Self {
        FeatureTransform {
            assignments: (0..feature_count).collect(),
            stratum_labels: (0..feature_count).map(|i| format!("t{i}")).collect(),
        }
    }

    pub fn feature_count(&self) -> usize {
        self.assignments.len()
    }

    pub fn stratum_count(&self) -> usize {
        self.stratum_labels.len()
    }

    pub fn stratum_of(&self, x: usize) -> usize {
        self.assignments[x]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn stratum_labels(&self) -> &[String] {
        &self.stratum_labels
    }

    /// Feature points assigned to stratum `t`.
    pub fn members(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |&(_, &s)| s == t)
            .map(|(x, _)| x)
    }

    /// Composition S∘self: relabels strata through `coarsening[t]`.
    pub fn compose(&self, coarsening: &[usize], coarse_labels: Vec<String>) -> Result<Self> {
        if coarsening.len() != self.stratum_count() {
            return Err(Error::InvalidInput(format!(
                "coarsening maps {} strata, transform has {}",
                coarsening.len(),
                self.stratum_count()
            )));
        }
        let assignments = self.assignments.iter().map(|&t| coarsening[t]).collect();
        FeatureTransform::new(assignments, coarse_labels)
    }
}

/// Hard classifier: a total map from feature points to predicted classes,
/// i.e. a disjoint decomposition of the feature space into decision regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    regions: Vec<usize>, // predicted class per feature point
    class_count: usize,
}

impl Classifier {
    pub fn new(regions: Vec<usize>, class_count: usize) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::InvalidInput(
                "classifier must cover at least one feature point".into(),
            ));
        }
        if let Some(&bad) = regions.iter().find(|&&c| c >= class_count) {
            return Err(Error::InvalidInput(format!(
                "predicted class {bad} out of range (ℓ = {class_count})"
            )));
        }
        Ok(Classifier {
            regions,
            class_count,
        })
    }

    /// Maximum-posterior classifier of `joint`; feature points with zero
    /// mass are assigned class 0.
    pub fn bayes(joint: &JointDistribution) -> Self {
        let post = joint.posteriors();
        let regions = (0..joint.feature_count())
            .map(|x| match post.row(x) {
                Some(r) => {
                    let mut best = 0;
                    for y in 1..r.len() {
                        if r[y] > r[best] {
                            best = y;
                        }
                    }
                    best
                }
                None => 0,
            })
            .collect();
        Classifier {
            regions,
            class_count: joint.class_count(),
        }
    }

    pub fn feature_count(&self) -> usize {
        self.regions.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn predict(&self, x: usize) -> usize {
        self.regions[x]
    }

    pub fn regions(&self) -> &[usize] {
        &self.regions
    }

    /// Indicator test functions of the decision regions, one per class.
    pub fn region_indicators(&self) -> Vec<Vec<f64>> {
        (0..self.class_count)
            .map(|c| {
                self.regions
                    .iter()
                    .map(|&r| if r == c { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect()
    }
}

pub(crate) fn class_labels(l: usize) -> Vec<String> {
    (1..=l).map(|i| i.to_string()).collect()
}

/// Returns every cell where Q carries mass above [`SUPPORT_EPS`] while P
/// carries none; an empty list means Q ≪ P.
pub fn check_absolute_continuity(
    p: &JointDistribution,
    q: &JointDistribution,
) -> Result<Vec<(usize, usize)>> {
    p.require_same_shape(q)?;
    let mut violations = Vec::new();
    for x in 0..p.feature_count() {
        for y in 0..p.class_count() {
            if q.mass(x, y) > SUPPORT_EPS && p.mass(x, y) <= SUPPORT_EPS {
                violations.push((x, y));
            }
        }
    }
    Ok(violations)
}

/// Importance weight tables of Q relative to P. Fails when Q is not
/// absolutely continuous with respect to P.
pub fn importance_weights(
    p: &JointDistribution,
    q: &JointDistribution,
) -> Result<ImportanceWeights> {
    let violations = check_absolute_continuity(p, q)?;
    if !violations.is_empty() {
        return Err(Error::AbsoluteContinuityViolation(violations));
    }
    let k = p.feature_count();
    let l = p.class_count();
    let (px, _) = p.marginals();
    let (qx, _) = q.marginals();
    let mut joint = vec![0.0; k * l];
    let mut feature = vec![0.0; k];
    for x in 0..k {
        for y in 0..l {
            if p.supported(x, y) {
                joint[x * l + y] = q.mass(x, y) / p.mass(x, y);
            }
        }
        if px.supported(x) {
            feature[x] = qx.mass(x) / px.mass(x);
        }
    }
    Ok(ImportanceWeights {
        feature_count: k,
        class_count: l,
        joint,
        feature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_close, fixture_p2};

    #[test]
    fn p2_marginals() {
        let p2 = fixture_p2();
        let (px, py) = p2.marginals();
        assert_close(px.masses(), &[0.5, 0.5], 1e-15);
        assert_close(py.masses(), &[0.5, 0.5], 1e-15);
    }

    #[test]
    fn point_mass_marginals() {
        let j = JointDistribution::new(
            vec!["x1".into(), "x2".into()],
            2,
            vec![1.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let (px, py) = j.marginals();
        assert_close(px.masses(), &[1.0, 0.0], 0.0);
        assert_close(py.masses(), &[1.0, 0.0], 0.0);
    }

    #[test]
    fn uniform_grid_marginals() {
        let j = JointDistribution::new(
            vec!["a".into(), "b".into(), "c".into()],
            3,
            vec![1.0 / 9.0; 9],
        )
        .unwrap();
        let (px, py) = j.marginals();
        assert_close(px.masses(), &[1.0 / 3.0; 3], 1e-15);
        assert_close(py.masses(), &[1.0 / 3.0; 3], 1e-15);
    }

    #[test]
    fn p2_posteriors() {
        let post = fixture_p2().posteriors();
        assert_close(post.row(0).unwrap(), &[0.8, 0.2], 1e-15);
        assert_close(post.row(1).unwrap(), &[0.2, 0.8], 1e-15);
    }

    #[test]
    fn independent_joint_posteriors_equal_label_marginal() {
        // X ⊥ Y: every posterior row equals the label marginal.
        let j = JointDistribution::new(
            vec!["x1".into(), "x2".into()],
            2,
            vec![0.18, 0.12, 0.42, 0.28],
        )
        .unwrap();
        let post = j.posteriors();
        let py = j.label_marginal();
        for x in 0..2 {
            assert_close(post.row(x).unwrap(), py.masses(), 1e-12);
        }
    }

    #[test]
    fn zero_mass_feature_row_undefined() {
        let j = JointDistribution::new(
            vec!["x1".into(), "x2".into()],
            2,
            vec![0.6, 0.4, 0.0, 0.0],
        )
        .unwrap();
        let post = j.posteriors();
        assert!(post.is_defined(0));
        assert!(!post.is_defined(1));
    }

    #[test]
    fn p2_class_conditionals() {
        let cc = fixture_p2().class_conditionals();
        assert_close(cc.row(0).unwrap(), &[0.8, 0.2], 1e-15);
        assert_close(cc.row(1).unwrap(), &[0.2, 0.8], 1e-15);
    }

    #[test]
    fn single_class_support_conditional_equals_feature_marginal() {
        let j = JointDistribution::new(
            vec!["x1".into(), "x2".into()],
            2,
            vec![0.3, 0.0, 0.7, 0.0],
        )
        .unwrap();
        let cc = j.class_conditionals();
        assert_close(cc.row(0).unwrap(), j.feature_marginal().masses(), 1e-15);
        assert!(!cc.is_defined(1));
    }

    #[test]
    fn identity_importance_weights() {
        let p2 = fixture_p2();
        let w = importance_weights(&p2, &p2).unwrap();
        for x in 0..2 {
            assert!((w.feature(x) - 1.0).abs() < 1e-15);
            for y in 0..2 {
                assert!((w.joint(x, y) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn absolute_continuity_violation_detected() {
        let p = JointDistribution::new(
            vec!["x1".into(), "x2".into()],
            2,
            vec![0.4, 0.0, 0.1, 0.5],
        )
        .unwrap();
        let p2 = fixture_p2();
        let violations = check_absolute_continuity(&p, &p2).unwrap();
        assert_eq!(violations, vec![(0, 1)]);
        match importance_weights(&p, &p2) {
            Err(Error::AbsoluteContinuityViolation(cells)) => assert_eq!(cells, vec![(0, 1)]),
            other => panic!("expected AbsoluteContinuityViolation, got {other:?}"),
        }
    }

    #[test]
    fn full_support_dominates() {
        let p2 = fixture_p2();
        let q = JointDistribution::new(
            vec!["x1".into(), "x2".into()],
            2,
            vec![0.7, 0.1, 0.1, 0.1],
        )
        .unwrap();
        assert!(check_absolute_continuity(&p2, &q).unwrap().is_empty());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p2 = fixture_p2();
        let other = JointDistribution::new(
            vec!["a".into(), "b".into(), "c".into()],
            2,
            vec![0.2, 0.2, 0.2, 0.2, 0.1, 0.1],
        )
        .unwrap();
        assert!(matches!(
            check_absolute_continuity(&p2, &other),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn construction_rejects_bad_mass() {
        assert!(JointDistribution::new(vec!["x".into()], 2, vec![0.5, 0.6]).is_err());
        assert!(JointDistribution::new(vec!["x".into()], 2, vec![1.1, -0.1]).is_err());
        assert!(JointDistribution::new(vec![], 2, vec![]).is_err());
        assert!(JointDistribution::new(vec!["x".into()], 1, vec![1.0]).is_err());
    }

    #[test]
    fn json_round_trip_and_rejection() {
        let p2 = fixture_p2();
        let json = serde_json::to_string(&p2).unwrap();
        assert!(json.contains("\"classes\":2"));
        let back: JointDistribution = serde_json::from_str(&json).unwrap();
        assert_eq!(p2, back);

        let bad = r#"{"features":["x1","x2"],"classes":2,"mass":[[0.4,0.1],[0.1,0.5]]}"#;
        let err = serde_json::from_str::<JointDistribution>(bad).unwrap_err();
        assert!(err.to_string().contains("total mass"), "{err}");
    }
}
