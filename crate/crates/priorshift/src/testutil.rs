//! Shared fixtures and assertion helpers for unit tests.

use crate::dist::{CategoricalDistribution, JointDistribution};

/// 2×2 fixture: p(x1,1)=0.4, p(x1,2)=0.1, p(x2,1)=0.1, p(x2,2)=0.4.
pub fn fixture_p2() -> JointDistribution {
    JointDistribution::new(
        vec!["x1".into(), "x2".into()],
        2,
        vec![0.4, 0.1, 0.1, 0.4],
    )
    .unwrap()
}

/// 4×2 full-support fixture with distinct posteriors per feature point.
pub fn fixture_p4() -> JointDistribution {
    JointDistribution::new(
        vec!["x1".into(), "x2".into(), "x3".into(), "x4".into()],
        2,
        vec![0.20, 0.05, 0.10, 0.15, 0.05, 0.20, 0.15, 0.10],
    )
    .unwrap()
}

/// Label prior vector over numbered classes.
pub fn priors(mass: &[f64]) -> CategoricalDistribution {
    CategoricalDistribution::new(
        (1..=mass.len()).map(|i| i.to_string()).collect(),
        mass.to_vec(),
    )
    .unwrap()
}

/// Feature pmf aligned with the feature labels of `j`.
pub fn qx(j: &JointDistribution, mass: &[f64]) -> CategoricalDistribution {
    CategoricalDistribution::new(j.features().to_vec(), mass.to_vec()).unwrap()
}

pub fn assert_close(got: &[f64], want: &[f64], tol: f64) {
    assert_eq!(got.len(), want.len(), "length mismatch");
    for (i, (g, w)) in got.iter().zip(want.iter()).enumerate() {
        assert!(
            (g - w).abs() <= tol,
            "entry {i}: got {g}, want {w} (tol {tol})"
        );
    }
}
