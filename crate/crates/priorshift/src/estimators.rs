//! Class prior estimators and posterior-correction formulas, computed
//! exactly from distribution objects or empirically from samples.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::{
    CategoricalDistribution, Classifier, ConditionalTable, FeatureTransform, JointDistribution,
    SUPPORT_EPS,
};
use crate::error::{Error, Result};
use crate::shift::{solve_fjs_rho, FjsFactors, SolverConfig};

/// Estimator output: the prior vector plus solver diagnostics, and for the
/// conditional confusion-matrix method the recovered per-stratum posteriors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorEstimate {
    pub priors: CategoricalDistribution,
    pub method: String,
    pub diagnostics: EstimateDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratum_posteriors: Option<ConditionalTable>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EstimateDiagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// Final residual of the fitted system, or 0 for closed-form methods.
    pub residual: f64,
    /// Per-stratum condition numbers (conditional confusion-matrix method).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition_numbers: Option<Vec<f64>>,
    /// Unnormalized prior vector (empirical reweighting reports both).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_priors: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl PriorEstimate {
    fn simple(method: &str, labels: Vec<String>, mass: Vec<f64>) -> Result<Self> {
        Ok(PriorEstimate {
            priors: CategoricalDistribution::new(labels, mass)
                .map_err(|e| Error::InvalidDistribution(format!("{method}: {e}")))?,
            method: method.to_string(),
            diagnostics: EstimateDiagnostics::default(),
            stratum_posteriors: None,
        })
    }
}

/// Labeled source sample of size m and unlabeled target sample of size n,
/// with feature points indexed into a declared feature space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSet {
    pub features: Vec<String>,
    pub class_count: usize,
    pub labeled: Vec<(usize, usize)>,
    pub unlabeled: Vec<usize>,
}

impl SampleSet {
    pub fn new(
        features: Vec<String>,
        class_count: usize,
        labeled: Vec<(usize, usize)>,
        unlabeled: Vec<usize>,
    ) -> Result<Self> {
        let k = features.len();
        if let Some(&(x, y)) = labeled.iter().find(|&&(x, y)| x >= k || y >= class_count) {
            return Err(Error::InvalidInput(format!(
                "labeled observation ({x}, {y}) outside the declared {k}×{class_count} space"
            )));
        }
        if let Some(&x) = unlabeled.iter().find(|&&x| x >= k) {
            return Err(Error::InvalidInput(format!(
                "unlabeled observation {x} outside the declared feature space of size {k}"
            )));
        }
        Ok(SampleSet {
            features,
            class_count,
            labeled,
            unlabeled,
        })
    }
}

fn class_labels(l: usize) -> Vec<String> {
    (1..=l).map(|i| i.to_string()).collect()
}

/// Region-mass baseline: priors(y) = Q[X ∈ C_y].
///
/// Deliberately biased: the target mass of the decision region C_y has no
/// reason to equal Q[Y=y] unless the classifier is perfect on the target.
/// Kept as the naive point of comparison.
pub fn classify_and_count(
    cls: &Classifier,
    target_feature_pmf: &CategoricalDistribution,
) -> Result<PriorEstimate> {
    if cls.feature_count() != target_feature_pmf.len() {
        return Err(Error::ShapeMismatch(format!(
            "classifier covers {} feature points, pmf has {}",
            cls.feature_count(),
            target_feature_pmf.len()
        )));
    }
    let mut mass = vec![0.0; cls.class_count()];
    for x in 0..cls.feature_count() {
        mass[cls.predict(x)] += target_feature_pmf.mass(x);
    }
    PriorEstimate::simple("classify_and_count", class_labels(cls.class_count()), mass)
}

/// Probabilistic classify and count: averages the source posteriors over
/// the target feature distribution (law of total probability). Exact under
/// covariate shift.
pub fn pcc(
    source_posteriors: &ConditionalTable,
    target_feature_pmf: &CategoricalDistribution,
) -> Result<PriorEstimate> {
    if source_posteriors.condition_count() != target_feature_pmf.len() {
        return Err(Error::ShapeMismatch(format!(
            "posterior table covers {} feature points, pmf has {}",
            source_posteriors.condition_count(),
            target_feature_pmf.len()
        )));
    }
    let l = source_posteriors.outcome_count();
    let mut mass = vec![0.0; l];
    for x in 0..target_feature_pmf.len() {
        let qx = target_feature_pmf.mass(x);
        if qx <= SUPPORT_EPS {
            continue;
        }
        match source_posteriors.row(x) {
            Some(row) => {
                for y in 0..l {
                    mass[y] += qx * row[y];
                }
            }
            None => {
                return Err(Error::UndefinedPosteriorMass {
                    feature: source_posteriors.condition_labels()[x].clone(),
                    mass: qx,
                })
            }
        }
    }
    PriorEstimate::simple("pcc", class_labels(l), mass)
}

fn validate_weights(p: &JointDistribution, weights: &[f64]) -> Result<()> {
    if weights.len() != p.feature_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} feature points",
            weights.len(),
            p.feature_count()
        )));
    }
    if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::InvalidInput(
            "feature weights must be finite and non-negative".into(),
        ));
    }
    let (px, _) = p.marginals();
    let sum: f64 = weights
        .iter()
        .enumerate()
        .map(|(x, &w)| w * px.mass(x))
        .sum();
    if (sum - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { sum });
    }
    Ok(())
}

/// Reweighting estimator, exact variant: priors(y) = Σ_x w_X(x)·P(x,y),
/// the source expectation of w_X(X)·1{Y=y}.
pub fn reweighting(p: &JointDistribution, feature_weights: &[f64]) -> Result<PriorEstimate> {
    validate_weights(p, feature_weights)?;
    let l = p.class_count();
    let mut mass = vec![0.0; l];
    for x in 0..p.feature_count() {
        for y in 0..l {
            mass[y] += feature_weights[x] * p.mass(x, y);
        }
    }
    PriorEstimate::simple("reweighting", class_labels(l), mass)
}

/// Reweighting estimator, empirical variant over a labeled source sample:
/// raw(y) = (1/m)·Σ_i w_X(x_i)·1{y_i = y}. The raw vector need not sum to
/// 1; both raw and normalized versions are reported.
pub fn reweighting_emp(samples: &SampleSet, feature_weights: &[f64]) -> Result<PriorEstimate> {
    if samples.labeled.is_empty() {
        return Err(Error::EmptySample);
    }
    if feature_weights.len() != samples.features.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} feature points",
            feature_weights.len(),
            samples.features.len()
        )));
    }
    let m = samples.labeled.len() as f64;
    let mut raw = vec![0.0; samples.class_count];
    for &(x, y) in &samples.labeled {
        raw[y] += feature_weights[x];
    }
    for r in raw.iter_mut() {
        *r /= m;
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroDenominator {
            feature: "all sampled feature points carry zero weight".into(),
        });
    }
    let normalized: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let mut est = PriorEstimate::simple(
        "reweighting_emp",
        class_labels(samples.class_count),
        normalized,
    )?;
    est.diagnostics.raw_priors = Some(raw);
    Ok(est)
}

/// EM solver configuration. Initialization defaults to uniform priors;
/// boundary initializations are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub init: Option<Vec<f64>>,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            tolerance: 1e-10,
            max_iterations: 10_000,
            init: None,
        }
    }
}

/// Maximum-likelihood label-shift estimation by expectation maximisation:
/// iterates
/// q(j) ← Σ_x qX(x) · (q(j)/p_j)·post(x)[j] / Σ_i (q(i)/p_i)·post(x)[i]
/// until the maximum prior change falls below the tolerance.
pub fn em_label_shift(
    source_posteriors: &ConditionalTable,
    source_priors: &CategoricalDistribution,
    target_feature_pmf: &CategoricalDistribution,
    cfg: &EmConfig,
) -> Result<PriorEstimate> {
    let l = source_posteriors.outcome_count();
    let rho = vec![1.0; l - 1];
    em_core(
        "em_label_shift",
        source_posteriors,
        source_priors,
        target_feature_pmf,
        &rho,
        cfg,
    )
}

/// Solves the FJS equation system for the target priors with the constants
/// ϱ held fixed. With ϱ ≡ 1 this coincides with [`em_label_shift`].
pub fn fjs_solve_q(
    p: &JointDistribution,
    target_feature_pmf: &CategoricalDistribution,
    rho: &[f64],
    cfg: &EmConfig,
) -> Result<PriorEstimate> {
    let l = p.class_count();
    if rho.len() != l - 1 {
        return Err(Error::ShapeMismatch(format!(
            "{} constants for {l} classes (expected ℓ−1)",
            rho.len()
        )));
    }
    if rho.iter().any(|&r| !r.is_finite() || r <= 0.0) {
        return Err(Error::InvalidInput(
            "the constants ϱ must be finite and strictly positive".into(),
        ));
    }
    let mut est = em_core(
        "fjs_solve_q",
        &p.posteriors(),
        &p.label_marginal(),
        target_feature_pmf,
        rho,
        cfg,
    )?;
    // Report the residual of the original equation system, not just the
    // iterate change.
    est.diagnostics.residual = fjs_system_residual(
        &p.posteriors(),
        &p.label_marginal(),
        target_feature_pmf,
        est.priors.masses(),
        rho,
    );
    Ok(est)
}

fn em_core(
    method: &str,
    post: &ConditionalTable,
    source_priors: &CategoricalDistribution,
    target_feature_pmf: &CategoricalDistribution,
    rho: &[f64],
    cfg: &EmConfig,
) -> Result<PriorEstimate> {
    let l = post.outcome_count();
    if source_priors.len() != l {
        return Err(Error::ShapeMismatch(format!(
            "{} source priors for {l} classes",
            source_priors.len()
        )));
    }
    if post.condition_count() != target_feature_pmf.len() {
        return Err(Error::ShapeMismatch(format!(
            "posterior table covers {} feature points, pmf has {}",
            post.condition_count(),
            target_feature_pmf.len()
        )));
    }
    // Restrict to target-supported feature points; their posteriors must
    // be defined, and classes reachable there must have positive source
    // priors.
    let mut active: Vec<(f64, &[f64])> = Vec::new();
    for x in 0..target_feature_pmf.len() {
        let qx = target_feature_pmf.mass(x);
        if qx <= SUPPORT_EPS {
            continue;
        }
        match post.row(x) {
            Some(row) => active.push((qx, row)),
            None => {
                return Err(Error::UndefinedPosteriorMass {
                    feature: post.condition_labels()[x].clone(),
                    mass: qx,
                })
            }
        }
    }
    for i in 0..l {
        let reachable = active.iter().any(|(_, row)| row[i] > SUPPORT_EPS);
        if reachable && !source_priors.supported(i) {
            return Err(Error::InvalidInput(format!(
                "source prior for class {} is zero but the class is reachable",
                i + 1
            )));
        }
    }
    let rho_hat: Vec<f64> = rho.iter().copied().chain(std::iter::once(1.0)).collect();
    let mut q: Vec<f64> = match &cfg.init {
        Some(init) => {
            if init.len() != l {
                return Err(Error::ShapeMismatch(format!(
                    "init vector of length {} for {l} classes",
                    init.len()
                )));
            }
            if let Some(i) = init.iter().position(|&v| v <= 0.0) {
                return Err(Error::DegenerateInit { index: i });
            }
            let s: f64 = init.iter().sum();
            init.iter().map(|v| v / s).collect()
        }
        None => vec![1.0 / l as f64; l],
    };

    let ratio = |q: &[f64], i: usize| -> f64 {
        if source_priors.supported(i) {
            rho_hat[i] * q[i] / source_priors.mass(i)
        } else {
            0.0
        }
    };

    let mut change = f64::INFINITY;
    for iter in 1..=cfg.max_iterations {
        let mut next = vec![0.0; l];
        for (qx, row) in &active {
            let mut den = 0.0;
            for i in 0..l {
                den += ratio(&q, i) * row[i];
            }
            if den <= 0.0 {
                return Err(Error::ZeroDenominator {
                    feature: "EM responsibility denominator vanished".into(),
                });
            }
            for i in 0..l {
                next[i] += qx * ratio(&q, i) * row[i] / den;
            }
        }
        change = q
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if change < cfg.tolerance {
            let mut est = PriorEstimate::simple(method, class_labels(l), q)?;
            est.diagnostics.iterations = Some(iter);
            est.diagnostics.residual = change;
            return Ok(est);
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        residual: change,
    })
}

/// Max-norm residual of the equation system p_j = ϱ_j·E_j at the given
/// target priors.
pub fn fjs_system_residual(
    post: &ConditionalTable,
    source_priors: &CategoricalDistribution,
    target_feature_pmf: &CategoricalDistribution,
    target_priors: &[f64],
    rho: &[f64],
) -> f64 {
    let l = post.outcome_count();
    let rho_hat: Vec<f64> = rho.iter().copied().chain(std::iter::once(1.0)).collect();
    let mut residual: f64 = 0.0;
    for j in 0..l - 1 {
        let mut expectation = 0.0;
        for x in 0..target_feature_pmf.len() {
            let qx = target_feature_pmf.mass(x);
            if qx <= SUPPORT_EPS {
                continue;
            }
            let row = match post.row(x) {
                Some(r) => r,
                None => continue,
            };
            let mut den = 0.0;
            for i in 0..l {
                if source_priors.supported(i) {
                    den += rho_hat[i] * target_priors[i] / source_priors.mass(i) * row[i];
                }
            }
            if den > 0.0 {
                expectation += qx * row[j] / den;
            }
        }
        residual = residual.max((rho_hat[j] * expectation - source_priors.mass(j)).abs());
    }
    residual
}

/// Wrapper over the FJS equation-system solver when the target priors are
/// known: returns the constants ϱ together with the induced factors.
pub fn fjs_solve_rho(
    p: &JointDistribution,
    target_feature_pmf: &CategoricalDistribution,
    target_priors: &CategoricalDistribution,
    cfg: &SolverConfig,
) -> Result<FjsFactors> {
    solve_fjs_rho(p, target_feature_pmf, target_priors, cfg)
}

/// Posterior correction under FJS: ϱ-weighted prior-ratio reweighting of
/// the source posteriors, with the last class as unweighted reference.
/// With ϱ ≡ 1 this is the classical prior-shift posterior adjustment.
pub fn fjs_posterior_correction(
    source_posteriors: &ConditionalTable,
    source_priors: &CategoricalDistribution,
    target_priors: &CategoricalDistribution,
    rho: &[f64],
) -> Result<ConditionalTable> {
    let l = source_posteriors.outcome_count();
    if source_priors.len() != l || target_priors.len() != l {
        return Err(Error::ShapeMismatch(format!(
            "prior vectors sized {} and {} for {l} classes",
            source_priors.len(),
            target_priors.len()
        )));
    }
    if rho.len() != l - 1 {
        return Err(Error::ShapeMismatch(format!(
            "{} constants for {l} classes (expected ℓ−1)",
            rho.len()
        )));
    }
    if rho.iter().any(|&r| !r.is_finite() || r <= 0.0) {
        return Err(Error::InvalidInput(
            "the constants ϱ must be finite and strictly positive".into(),
        ));
    }
    if (0..l).any(|i| !source_priors.supported(i)) {
        return Err(Error::InvalidInput(
            "source priors must be strictly positive".into(),
        ));
    }
    let rho_hat: Vec<f64> = rho.iter().copied().chain(std::iter::once(1.0)).collect();
    let factors: Vec<f64> = (0..l)
        .map(|i| rho_hat[i] * target_priors.mass(i) / source_priors.mass(i))
        .collect();
    correct_rows(source_posteriors, |x, row| {
        let weighted: Vec<f64> = (0..l).map(|i| factors[i] * row[i]).collect();
        let den: f64 = weighted.iter().sum();
        if den <= 0.0 {
            return Err(Error::ZeroDenominator {
                feature: source_posteriors.condition_labels()[x].clone(),
            });
        }
        Ok(weighted.into_iter().map(|w| w / den).collect())
    })
}

/// Posterior correction under SJS: reweights the source posteriors by the
/// per-stratum posterior ratios r_i(t) = Q[Y=i|T=t] / P[Y=i|T=t].
pub fn sjs_posterior_correction(
    source_posteriors: &ConditionalTable,
    transform: &FeatureTransform,
    source_stratum_posteriors: &ConditionalTable,
    target_stratum_posteriors: &ConditionalTable,
) -> Result<ConditionalTable> {
    let l = source_posteriors.outcome_count();
    if transform.feature_count() != source_posteriors.condition_count() {
        return Err(Error::ShapeMismatch(format!(
            "transform covers {} feature points, posterior table has {}",
            transform.feature_count(),
            source_posteriors.condition_count()
        )));
    }
    let n = transform.stratum_count();
    if source_stratum_posteriors.condition_count() != n
        || target_stratum_posteriors.condition_count() != n
    {
        return Err(Error::ShapeMismatch(format!(
            "stratum posterior tables must cover all {n} strata"
        )));
    }
    // r_i(t), None where the source stratum row is undefined.
    let mut ratios: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    for t in 0..n {
        match (
            source_stratum_posteriors.row(t),
            target_stratum_posteriors.row(t),
        ) {
            (Some(src), Some(tgt)) => {
                let mut r = vec![0.0; l];
                for i in 0..l {
                    if src[i] > SUPPORT_EPS {
                        r[i] = tgt[i] / src[i];
                    } else if tgt[i] > SUPPORT_EPS {
                        return Err(Error::InvalidInput(format!(
                            "stratum {t}: target posterior mass on class {} with zero source mass",
                            i + 1
                        )));
                    }
                }
                ratios.push(Some(r));
            }
            _ => ratios.push(None),
        }
    }
    correct_rows(source_posteriors, |x, row| {
        let t = transform.stratum_of(x);
        let r = ratios[t].as_ref().ok_or_else(|| Error::EmptyStratum { stratum: t })?;
        let weighted: Vec<f64> = (0..l).map(|i| r[i] * row[i]).collect();
        let den: f64 = weighted.iter().sum();
        if den <= 0.0 {
            return Err(Error::ZeroDenominator {
                feature: source_posteriors.condition_labels()[x].clone(),
            });
        }
        Ok(weighted.into_iter().map(|w| w / den).collect())
    })
}

fn correct_rows(
    source: &ConditionalTable,
    mut f: impl FnMut(usize, &[f64]) -> Result<Vec<f64>>,
) -> Result<ConditionalTable> {
    let mut rows = Vec::with_capacity(source.condition_count());
    for x in 0..source.condition_count() {
        match source.row(x) {
            Some(row) => rows.push(Some(f(x, row)?)),
            None => rows.push(None),
        }
    }
    Ok(ConditionalTable::new_unchecked(
        source.condition_labels().to_vec(),
        source.outcome_count(),
        rows,
    ))
}

/// Conditional confusion-matrix estimation configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcmConfig {
    /// Maximum accepted Euclidean displacement of the simplex projection;
    /// larger displacements signal model misspecification.
    pub projection_tol: f64,
    /// Relative singular-value threshold for the per-stratum rank check.
    pub rank_threshold: f64,
}

impl Default for CcmConfig {
    fn default() -> Self {
        CcmConfig {
            projection_tol: 1e-6,
            rank_threshold: 1e-9,
        }
    }
}

impl CcmConfig {
    /// Looser projection tolerance for finite-sample inputs.
    pub fn empirical() -> Self {
        CcmConfig {
            projection_tol: 0.05,
            ..Default::default()
        }
    }
}

/// Conditional confusion-matrix estimator: per stratum t, solves
/// Σ_y q_{y,t}·P[X∈C_j | Y=y, T=t] = Q[X∈C_j | T=t] for the stratum label
/// posteriors q_{·,t}, then combines them through the law of total
/// probability Q[Y=y] = Σ_t q_{y,t}·Q[T=t].
pub fn ccm_estimate(
    p: &JointDistribution,
    target_feature_pmf: &CategoricalDistribution,
    transform: &FeatureTransform,
    cls: &Classifier,
    cfg: &CcmConfig,
) -> Result<PriorEstimate> {
    let k = p.feature_count();
    let l = p.class_count();
    if transform.feature_count() != k || cls.feature_count() != k || target_feature_pmf.len() != k
    {
        return Err(Error::ShapeMismatch(
            "transform, classifier and target pmf must cover the source feature space".into(),
        ));
    }
    let n = transform.stratum_count();

    // Source stratum masses P[Y=y, T=t] and target stratum masses.
    let mut p_yt = vec![0.0; n * l];
    let mut q_t = vec![0.0; n];
    for x in 0..k {
        let t = transform.stratum_of(x);
        for y in 0..l {
            p_yt[t * l + y] += p.mass(x, y);
        }
        q_t[t] += target_feature_pmf.mass(x);
    }

    let mut stratum_rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut condition_numbers = vec![f64::NAN; n];
    let mut worst_displacement: f64 = 0.0;
    let mut priors = vec![0.0; l];

    for t in 0..n {
        if q_t[t] <= SUPPORT_EPS {
            continue;
        }
        let p_t: f64 = (0..l).map(|y| p_yt[t * l + y]).sum();
        if p_t <= SUPPORT_EPS {
            return Err(Error::UnsupportedStratum {
                stratum: t,
                mass: q_t[t],
            });
        }
        let present: Vec<usize> = (0..l).filter(|&y| p_yt[t * l + y] > SUPPORT_EPS).collect();

        // A[j, y] = P[X∈C_j | Y=y, T=t] over present classes,
        // b[j] = Q[X∈C_j | T=t].
        let mut a = DMatrix::<f64>::zeros(l, present.len());
        let mut b = DVector::<f64>::zeros(l);
        for x in transform.members(t) {
            let j = cls.predict(x);
            for (col, &y) in present.iter().enumerate() {
                a[(j, col)] += p.mass(x, y) / p_yt[t * l + y];
            }
            b[j] += target_feature_pmf.mass(x) / q_t[t];
        }

        let svd = a.clone().svd(true, true);
        let sigma_max = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > cfg.rank_threshold * sigma_max)
            .count();
        if rank < present.len() {
            return Err(Error::SingularStratum {
                stratum: t,
                rank,
                needed: present.len(),
            });
        }
        let sigma_min = svd.singular_values.min();
        condition_numbers[t] = sigma_max / sigma_min;

        let solution = svd
            .solve(&b, cfg.rank_threshold * sigma_max)
            .map_err(|e| Error::InvalidInput(format!("stratum {t} least-squares solve: {e}")))?;
        let raw: Vec<f64> = solution.iter().copied().collect();
        let projected = project_to_simplex(&raw);
        let displacement = raw
            .iter()
            .zip(projected.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if displacement > cfg.projection_tol {
            return Err(Error::InconsistentSystem {
                stratum: t,
                displacement,
            });
        }
        worst_displacement = worst_displacement.max(displacement);

        let mut row = vec![0.0; l];
        for (col, &y) in present.iter().enumerate() {
            row[y] = projected[col];
            priors[y] += projected[col] * q_t[t];
        }
        stratum_rows[t] = Some(row);
    }

    let mut est = PriorEstimate::simple("ccm", class_labels(l), priors)?;
    est.diagnostics.residual = worst_displacement;
    est.diagnostics.condition_numbers = Some(condition_numbers);
    est.stratum_posteriors = Some(ConditionalTable::new_unchecked(
        transform.stratum_labels().to_vec(),
        l,
        stratum_rows,
    ));
    Ok(est)
}

/// Euclidean projection onto the probability simplex
/// (Held, Wolfe & Crowder 1974).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Target label posteriors given the stratum under covariate shift:
/// row(t)[y] = Σ_{T(x)=t} w_X(x)·P(x,y) / Σ_{T(x)=t} w_X(x)·p_X(x).
/// With q_X = w_X·p_X this equals Q[Y=y | T=t].
pub fn stratum_posterior_covariate(
    p: &JointDistribution,
    feature_weights: &[f64],
    transform: &FeatureTransform,
) -> Result<ConditionalTable> {
    validate_weights(p, feature_weights)?;
    if transform.feature_count() != p.feature_count() {
        return Err(Error::ShapeMismatch(format!(
            "transform covers {} feature points, distribution has {}",
            transform.feature_count(),
            p.feature_count()
        )));
    }
    let l = p.class_count();
    let n = transform.stratum_count();
    let (px, _) = p.marginals();
    let mut rows = Vec::with_capacity(n);
    for t in 0..n {
        let mut num = vec![0.0; l];
        let mut den = 0.0;
        let mut weight_demanded = false;
        for x in transform.members(t) {
            den += feature_weights[x] * px.mass(x);
            if feature_weights[x] > SUPPORT_EPS {
                weight_demanded = true;
            }
            for y in 0..l {
                num[y] += feature_weights[x] * p.mass(x, y);
            }
        }
        if den > SUPPORT_EPS {
            rows.push(Some(num.into_iter().map(|v| v / den).collect()));
        } else if weight_demanded {
            return Err(Error::EmptyStratum { stratum: t });
        } else {
            rows.push(None);
        }
    }
    Ok(ConditionalTable::new_unchecked(
        transform.stratum_labels().to_vec(),
        l,
        rows,
    ))
}
