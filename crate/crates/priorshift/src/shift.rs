//! Construction of target distributions from a source under each shift
//! type, and verification of whether a given (P, Q) pair satisfies a
//! claimed shift type.
//!
//! Shift taxonomy handled here: prior probability shift, covariate shift,
//! factorizable joint shift (FJS), sparse joint shift (SJS), conditional
//! distribution invariance (CDI) and sparse covariate shift (SCS).

use serde::{Deserialize, Serialize};

use crate::dist::{
    check_absolute_continuity, CategoricalDistribution, Classifier, ConditionalTable,
    FeatureTransform, JointDistribution, SUPPORT_EPS,
};
use crate::error::{Error, Result};

/// Iterative-solver knobs shared by the FJS constructor and the EM-style
/// estimators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Damping for the multi-class fixed-point iteration; ignored by the
    /// binary bisection path.
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-10,
            max_iterations: 10_000,
            damping: 0.5,
        }
    }
}

/// The factorization w(x,y) = u(x)·v(y) together with the constants that
/// tie it to prescribed target marginals. `rho` has length ℓ−1; the last
/// class is the unweighted reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FjsFactors {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub rho: Vec<f64>,
}

/// Outcome of a shift verification: `holds` iff the worst cellwise
/// deviation from the defining identity stays within the tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftVerdict {
    pub holds: bool,
    pub max_deviation: f64,
    pub tolerance: f64,
    /// Worst violations, up to [`MAX_WITNESSES`] of them.
    pub witnesses: Vec<Witness>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub cell: String,
    pub lhs: f64,
    pub rhs: f64,
}

pub const MAX_WITNESSES: usize = 5;

struct VerdictBuilder {
    tol: f64,
    max_dev: f64,
    entries: Vec<(f64, Witness)>,
}

impl VerdictBuilder {
    fn new(tol: f64) -> Self {
        VerdictBuilder {
            tol,
            max_dev: 0.0,
            entries: Vec::new(),
        }
    }

    fn record(&mut self, cell: String, lhs: f64, rhs: f64) {
        let dev = if lhs.is_finite() && rhs.is_finite() {
            (lhs - rhs).abs()
        } else {
            f64::INFINITY
        };
        self.record_dev(dev, cell, lhs, rhs);
    }

    fn record_dev(&mut self, dev: f64, cell: String, lhs: f64, rhs: f64) {
        if dev > self.max_dev {
            self.max_dev = dev;
        }
        self.entries.push((dev, Witness { cell, lhs, rhs }));
    }

    fn finish(mut self) -> ShiftVerdict {
        self.entries
            .sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        let witnesses = self
            .entries
            .into_iter()
            .take(MAX_WITNESSES)
            .filter(|(d, _)| *d > self.tol)
            .map(|(_, w)| w)
            .collect();
        ShiftVerdict {
            holds: self.max_dev <= self.tol,
            max_deviation: self.max_dev,
            tolerance: self.tol,
            witnesses,
        }
    }
}

/// Declarative shift-scenario description, consumed by the CLI and by
/// [`synthesize`] / [`verify_shift`]. Stratum assignments are aligned with
/// the source distribution's feature enumeration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftSpec {
    PriorShift {
        target_priors: Vec<f64>,
    },
    CovariateShift {
        target_feature_pmf: Vec<f64>,
    },
    /// Explicit factor pair u(x), v(y).
    Fjs {
        u: Vec<f64>,
        v: Vec<f64>,
    },
    /// FJS fitted to prescribed target marginals via the equation-system
    /// solver.
    FjsTargets {
        target_feature_pmf: Vec<f64>,
        target_priors: Vec<f64>,
    },
    Sjs {
        strata: Vec<usize>,
        stratum_posteriors: Vec<Vec<f64>>,
        stratum_pmf: Vec<f64>,
    },
    /// Verification-only: CDI has no constructor.
    Cdi {
        strata: Vec<usize>,
    },
    Scs {
        strata: Vec<usize>,
        stratum_pmf: Vec<f64>,
    },
}

impl ShiftSpec {
    fn transform(&self, feature_count: usize) -> Result<Option<FeatureTransform>> {
        let strata = match self {
            ShiftSpec::Sjs { strata, .. }
            | ShiftSpec::Cdi { strata }
            | ShiftSpec::Scs { strata, .. } => strata,
            _ => return Ok(None),
        };
        if strata.len() != feature_count {
            return Err(Error::ShapeMismatch(format!(
                "strata map covers {} feature points, distribution has {feature_count}",
                strata.len()
            )));
        }
        let n = strata.iter().copied().max().map_or(0, |m| m + 1);
        let labels = (0..n).map(|i| format!("t{i}")).collect();
        Ok(Some(FeatureTransform::new(strata.clone(), labels)?))
    }
}

fn categorical_over(labels: &[String], mass: &[f64]) -> Result<CategoricalDistribution> {
    if labels.len() != mass.len() {
        return Err(Error::ShapeMismatch(format!(
            "probability vector of length {} against {} outcomes",
            mass.len(),
            labels.len()
        )));
    }
    CategoricalDistribution::new(labels.to_vec(), mass.to_vec())
}

/// Builds the target distribution prescribed by `spec` from the source.
pub fn synthesize(
    p: &JointDistribution,
    spec: &ShiftSpec,
    cfg: &SolverConfig,
) -> Result<JointDistribution> {
    match spec {
        ShiftSpec::PriorShift { target_priors } => {
            let priors = categorical_over(&crate::dist::class_labels(p.class_count()), target_priors)?;
            make_prior_shift(p, &priors)
        }
        ShiftSpec::CovariateShift { target_feature_pmf } => {
            let pmf = categorical_over(p.features(), target_feature_pmf)?;
            make_covariate_shift(p, &pmf)
        }
        ShiftSpec::Fjs { u, v } => make_fjs(p, u, v),
        ShiftSpec::FjsTargets {
            target_feature_pmf,
            target_priors,
        } => {
            let pmf = categorical_over(p.features(), target_feature_pmf)?;
            let priors =
                categorical_over(&crate::dist::class_labels(p.class_count()), target_priors)?;
            construct_fjs(p, &pmf, &priors, cfg).map(|(q, _)| q)
        }
        ShiftSpec::Sjs {
            stratum_posteriors,
            stratum_pmf,
            ..
        } => {
            let t = spec.transform(p.feature_count())?.expect("SJS carries strata");
            let rows = stratum_posteriors
                .iter()
                .map(|r| Some(r.clone()))
                .collect::<Vec<_>>();
            let posts =
                ConditionalTable::new(t.stratum_labels().to_vec(), p.class_count(), rows)?;
            let pmf = categorical_over(t.stratum_labels(), stratum_pmf)?;
            make_sjs(p, &t, &posts, &pmf)
        }
        ShiftSpec::Cdi { .. } => Err(Error::InvalidInput(
            "CDI is a verification-only shift kind; it has no constructor".into(),
        )),
        ShiftSpec::Scs { stratum_pmf, .. } => {
            let t = spec.transform(p.feature_count())?.expect("SCS carries strata");
            let pmf = categorical_over(t.stratum_labels(), stratum_pmf)?;
            make_scs(p, &t, &pmf)
        }
    }
}

/// Target with the prescribed label priors and the source class-conditional
/// feature distributions: Q(x,y) = P[X=x | Y=y] · targetPriors(y).
pub fn make_prior_shift(
    p: &JointDistribution,
    target_priors: &CategoricalDistribution,
) -> Result<JointDistribution> {
    let l = p.class_count();
    if target_priors.len() != l {
        return Err(Error::ShapeMismatch(format!(
            "{} target priors for {l} classes",
            target_priors.len()
        )));
    }
    let cc = p.class_conditionals();
    for y in 0..l {
        if target_priors.supported(y) && !cc.is_defined(y) {
            return Err(Error::UnsupportedClass {
                class: y,
                mass: target_priors.mass(y),
            });
        }
    }
    let k = p.feature_count();
    let mut mass = vec![0.0; k * l];
    for y in 0..l {
        if let Some(row) = cc.row(y) {
            for x in 0..k {
                mass[x * l + y] = row[x] * target_priors.mass(y);
            }
        }
    }
    JointDistribution::from_unnormalized(p.features().to_vec(), l, mass)
}

/// Target with the prescribed feature marginal and the source posterior
/// class probabilities: Q(x,y) = targetFeaturePMF(x) · P[Y=y | X=x].
pub fn make_covariate_shift(
    p: &JointDistribution,
    target_feature_pmf: &CategoricalDistribution,
) -> Result<JointDistribution> {
    let k = p.feature_count();
    if target_feature_pmf.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{} target feature masses for {k} feature points",
            target_feature_pmf.len()
        )));
    }
    let post = p.posteriors();
    for x in 0..k {
        if target_feature_pmf.supported(x) && !post.is_defined(x) {
            return Err(Error::UnsupportedFeature {
                feature: p.feature_name(x).to_string(),
                mass: target_feature_pmf.mass(x),
            });
        }
    }
    let l = p.class_count();
    let mut mass = vec![0.0; k * l];
    for x in 0..k {
        if let Some(row) = post.row(x) {
            for y in 0..l {
                mass[x * l + y] = target_feature_pmf.mass(x) * row[y];
            }
        }
    }
    JointDistribution::from_unnormalized(p.features().to_vec(), l, mass)
}

/// Target with importance weights factorized as Q(x,y) = u(x)·v(y)·P(x,y).
/// The factor product must integrate to 1 against P within 1e-10.
pub fn make_fjs(p: &JointDistribution, u: &[f64], v: &[f64]) -> Result<JointDistribution> {
    let k = p.feature_count();
    let l = p.class_count();
    if u.len() != k || v.len() != l {
        return Err(Error::ShapeMismatch(format!(
            "factor lengths ({}, {}) for a {k}×{l} grid",
            u.len(),
            v.len()
        )));
    }
    if u.iter().chain(v.iter()).any(|&f| !f.is_finite() || f < 0.0) {
        return Err(Error::InvalidInput(
            "FJS factors must be finite and non-negative".into(),
        ));
    }
    let mut mass = vec![0.0; k * l];
    let mut sum = 0.0;
    for x in 0..k {
        for y in 0..l {
            let m = u[x] * v[y] * p.mass(x, y);
            mass[x * l + y] = m;
            sum += m;
        }
    }
    if (sum - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { sum });
    }
    JointDistribution::from_unnormalized(p.features().to_vec(), l, mass)
}

/// Target sharing the source's doubly conditioned feature laws
/// P[X=x | Y=y, T(X)=t] while moving the per-stratum label posteriors and
/// the stratum marginal.
pub fn make_sjs(
    p: &JointDistribution,
    transform: &FeatureTransform,
    stratum_posteriors: &ConditionalTable,
    stratum_pmf: &CategoricalDistribution,
) -> Result<JointDistribution> {
    let k = p.feature_count();
    let l = p.class_count();
    if transform.feature_count() != k {
        return Err(Error::ShapeMismatch(format!(
            "transform covers {} feature points, distribution has {k}",
            transform.feature_count()
        )));
    }
    let n = transform.stratum_count();
    if stratum_pmf.len() != n || stratum_posteriors.condition_count() != n {
        return Err(Error::ShapeMismatch(format!(
            "stratum payload sized for {} strata, transform has {n}",
            stratum_pmf.len().max(stratum_posteriors.condition_count())
        )));
    }
    if stratum_posteriors.outcome_count() != l {
        return Err(Error::ShapeMismatch(format!(
            "stratum posteriors have {} outcomes for {l} classes",
            stratum_posteriors.outcome_count()
        )));
    }

    // P[Y=y, T=t] and P[T=t].
    let mut class_in_stratum = vec![0.0; n * l];
    let mut stratum_mass = vec![0.0; n];
    for x in 0..k {
        let t = transform.stratum_of(x);
        for y in 0..l {
            class_in_stratum[t * l + y] += p.mass(x, y);
            stratum_mass[t] += p.mass(x, y);
        }
    }
    for t in 0..n {
        if !stratum_pmf.supported(t) {
            continue;
        }
        if stratum_mass[t] <= SUPPORT_EPS {
            return Err(Error::UnsupportedStratum {
                stratum: t,
                mass: stratum_pmf.mass(t),
            });
        }
        let row = stratum_posteriors.row(t).ok_or(Error::UnsupportedStratum {
            stratum: t,
            mass: stratum_pmf.mass(t),
        })?;
        for y in 0..l {
            if row[y] > SUPPORT_EPS && class_in_stratum[t * l + y] <= SUPPORT_EPS {
                return Err(Error::UnsupportedClassInStratum {
                    stratum: t,
                    class: y,
                });
            }
        }
    }

    let mut mass = vec![0.0; k * l];
    for x in 0..k {
        let t = transform.stratum_of(x);
        if !stratum_pmf.supported(t) {
            continue;
        }
        let row = stratum_posteriors.row(t).expect("checked above");
        for y in 0..l {
            let pyt = class_in_stratum[t * l + y];
            if pyt > SUPPORT_EPS && row[y] > SUPPORT_EPS {
                // P[X=x | Y=y, T=t] · Q[Y=y | T=t] · Q[T=t]
                mass[x * l + y] = p.mass(x, y) / pyt * row[y] * stratum_pmf.mass(t);
            }
        }
    }
    JointDistribution::from_unnormalized(p.features().to_vec(), l, mass)
}

/// Target preserving the within-stratum joint law of (X, Y) while moving
/// the stratum marginal: Q(x,y) = P[X=x, Y=y | T=t] · stratumPMF(t).
pub fn make_scs(
    p: &JointDistribution,
    transform: &FeatureTransform,
    stratum_pmf: &CategoricalDistribution,
) -> Result<JointDistribution> {
    let k = p.feature_count();
    let l = p.class_count();
    if transform.feature_count() != k {
        return Err(Error::ShapeMismatch(format!(
            "transform covers {} feature points, distribution has {k}",
            transform.feature_count()
        )));
    }
    let n = transform.stratum_count();
    if stratum_pmf.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "stratum pmf has {} entries, transform has {n} strata",
            stratum_pmf.len()
        )));
    }
    let mut stratum_mass = vec![0.0; n];
    for x in 0..k {
        let t = transform.stratum_of(x);
        for y in 0..l {
            stratum_mass[t] += p.mass(x, y);
        }
    }
    for t in 0..n {
        if stratum_pmf.supported(t) && stratum_mass[t] <= SUPPORT_EPS {
            return Err(Error::UnsupportedStratum {
                stratum: t,
                mass: stratum_pmf.mass(t),
            });
        }
    }
    let mut mass = vec![0.0; k * l];
    for x in 0..k {
        let t = transform.stratum_of(x);
        if !stratum_pmf.supported(t) {
            continue;
        }
        for y in 0..l {
            mass[x * l + y] = p.mass(x, y) / stratum_mass[t] * stratum_pmf.mass(t);
        }
    }
    JointDistribution::from_unnormalized(p.features().to_vec(), l, mass)
}

// --- FJS equation-system solver -------------------------------------------

/// Evaluates the right-hand-side expectations E_j(ϱ) of the equation
/// system p_j = ϱ_j · E_j(ϱ) for j = 1..ℓ−1, where
/// E_j = Σ_x q_X(x)·P[Y=j|X=x] / D(x) and
/// D(x) = Σ_{i<ℓ} ϱ_i (q_i/p_i) P[Y=i|x] + (q_ℓ/p_ℓ) P[Y=ℓ|x].
struct FjsSystem {
    /// target feature pmf restricted to supported source features
    qx: Vec<f64>,
    post: Vec<Vec<f64>>,
    prior_ratio: Vec<f64>, // q_i / p_i
    source_priors: Vec<f64>,
    class_count: usize,
}

impl FjsSystem {
    fn new(
        p: &JointDistribution,
        target_feature_pmf: &CategoricalDistribution,
        target_priors: &CategoricalDistribution,
    ) -> Result<Self> {
        let k = p.feature_count();
        let l = p.class_count();
        if target_feature_pmf.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "{} target feature masses for {k} feature points",
                target_feature_pmf.len()
            )));
        }
        if target_priors.len() != l {
            return Err(Error::ShapeMismatch(format!(
                "{} target priors for {l} classes",
                target_priors.len()
            )));
        }
        let (_, py) = p.marginals();
        for i in 0..l {
            if target_priors.mass(i) <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "target prior for class {i} must be strictly positive"
                )));
            }
            if !py.supported(i) {
                return Err(Error::UnsupportedClass {
                    class: i,
                    mass: target_priors.mass(i),
                });
            }
        }
        let post = p.posteriors();
        let mut qx = Vec::new();
        let mut rows = Vec::new();
        for x in 0..k {
            if target_feature_pmf.supported(x) {
                match post.row(x) {
                    Some(r) => {
                        qx.push(target_feature_pmf.mass(x));
                        rows.push(r.to_vec());
                    }
                    None => {
                        return Err(Error::UnsupportedFeature {
                            feature: p.feature_name(x).to_string(),
                            mass: target_feature_pmf.mass(x),
                        })
                    }
                }
            }
        }
        let prior_ratio = (0..l)
            .map(|i| target_priors.mass(i) / py.mass(i))
            .collect();
        Ok(FjsSystem {
            qx,
            post: rows,
            prior_ratio,
            source_priors: py.masses().to_vec(),
            class_count: l,
        })
    }

    fn denominator(&self, rho: &[f64], x: usize) -> f64 {
        let l = self.class_count;
        let mut d = 0.0;
        for i in 0..l - 1 {
            d += rho[i] * self.prior_ratio[i] * self.post[x][i];
        }
        d + self.prior_ratio[l - 1] * self.post[x][l - 1]
    }

    fn expectations(&self, rho: &[f64]) -> Vec<f64> {
        let l = self.class_count;
        let mut e = vec![0.0; l - 1];
        for x in 0..self.qx.len() {
            let d = self.denominator(rho, x);
            if d > 0.0 {
                for (j, ej) in e.iter_mut().enumerate() {
                    *ej += self.qx[x] * self.post[x][j] / d;
                }
            }
        }
        e
    }

    fn residual(&self, rho: &[f64]) -> f64 {
        let e = self.expectations(rho);
        (0..self.class_count - 1)
            .map(|j| (rho[j] * e[j] - self.source_priors[j]).abs())
            .fold(0.0, f64::max)
    }

    /// u(x) over the full feature grid, zero off the source feature support.
    fn factor_u(&self, p: &JointDistribution, qx_full: &CategoricalDistribution, rho: &[f64]) -> Vec<f64> {
        let post = p.posteriors();
        let (px, _) = p.marginals();
        let l = self.class_count;
        (0..p.feature_count())
            .map(|x| match post.row(x) {
                Some(r) if px.supported(x) => {
                    let mut d = 0.0;
                    for i in 0..l - 1 {
                        d += rho[i] * self.prior_ratio[i] * r[i];
                    }
                    d += self.prior_ratio[l - 1] * r[l - 1];
                    let wx = qx_full.mass(x) / px.mass(x);
                    if d > 0.0 {
                        wx / d
                    } else {
                        0.0
                    }
                }
                _ => 0.0,
            })
            .collect()
    }

    fn factor_v(&self, rho: &[f64]) -> Vec<f64> {
        let l = self.class_count;
        (0..l)
            .map(|y| {
                if y < l - 1 {
                    rho[y] * self.prior_ratio[y]
                } else {
                    self.prior_ratio[l - 1]
                }
            })
            .collect()
    }
}

/// Solves the FJS equation system for the constants ϱ, given the target
/// feature marginal and target priors.
///
/// Binary case: the single equation is monotone in ϱ₁, so a sign bracket
/// plus bisection decides feasibility. Multi-class: damped fixed-point
/// iteration ϱ_j ← p_j / E_j(ϱ); existence and uniqueness are open for
/// ℓ ≥ 3, so the cap is reported as [`Error::NoConvergence`] rather than
/// masked.
pub fn solve_fjs_rho(
    p: &JointDistribution,
    target_feature_pmf: &CategoricalDistribution,
    target_priors: &CategoricalDistribution,
    cfg: &SolverConfig,
) -> Result<FjsFactors> {
    let system = FjsSystem::new(p, target_feature_pmf, target_priors)?;
    let l = system.class_count;
    let rho = if l == 2 {
        vec![solve_binary(&system, cfg)?]
    } else {
        solve_multiclass(&system, cfg)?
    };
    let u = system.factor_u(p, target_feature_pmf, &rho);
    let v = system.factor_v(&rho);
    Ok(FjsFactors { u, v, rho })
}

fn solve_binary(system: &FjsSystem, cfg: &SolverConfig) -> Result<f64> {
    let p1 = system.source_priors[0];
    let g = |rho1: f64| rho1 * system.expectations(&[rho1])[0] - p1;

    // g is increasing in ϱ₁ with g(0) = −p₁ < 0; expand the upper bracket
    // until the sign flips.
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut g_hi = g(hi);
    let mut expansions = 0;
    while g_hi < 0.0 {
        lo = hi;
        hi *= 2.0;
        g_hi = g(hi);
        expansions += 1;
        if expansions > 120 {
            return Err(Error::InfeasibleSystem(format!(
                "no sign change up to ϱ₁ = {hi:e}; residual bounded away from 0"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    let rho1 = 0.5 * (lo + hi);
    let residual = system.residual(&[rho1]);
    if residual > cfg.tolerance {
        return Err(Error::InfeasibleSystem(format!(
            "bisection converged to ϱ₁ = {rho1} with residual {residual}"
        )));
    }
    Ok(rho1)
}

fn solve_multiclass(system: &FjsSystem, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let l = system.class_count;
    let mut rho = vec![1.0; l - 1];
    for iter in 1..=cfg.max_iterations {
        let e = system.expectations(&rho);
        let mut changed = false;
        for j in 0..l - 1 {
            if e[j] <= 0.0 {
                return Err(Error::InfeasibleSystem(format!(
                    "expectation E_{j} vanished during iteration"
                )));
            }
            let candidate = system.source_priors[j] / e[j];
            let next = (1.0 - cfg.damping) * rho[j] + cfg.damping * candidate;
            if (next - rho[j]).abs() > 0.0 {
                changed = true;
            }
            rho[j] = next;
        }
        let residual = system.residual(&rho);
        if residual < cfg.tolerance {
            return Ok(rho);
        }
        if !changed && iter > 1 {
            return Err(Error::NoConvergence {
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        residual: system.residual(&rho),
    })
}

/// Constructs the FJS target with the prescribed marginals: solves the
/// equation system for ϱ, builds u and v, and returns Q = u·v·P together
/// with the factors.
pub fn construct_fjs(
    p: &JointDistribution,
    target_feature_pmf: &CategoricalDistribution,
    target_priors: &CategoricalDistribution,
    cfg: &SolverConfig,
) -> Result<(JointDistribution, FjsFactors)> {
    let factors = solve_fjs_rho(p, target_feature_pmf, target_priors, cfg)?;
    let q = make_fjs(p, &factors.u, &factors.v)?;
    Ok((q, factors))
}

// --- Verifiers ------------------------------------------------------------

fn require_dominated(p: &JointDistribution, q: &JointDistribution) -> Result<()> {
    let violations = check_absolute_continuity(p, q)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::AbsoluteContinuityViolation(violations))
    }
}

/// Def.: the class-conditional feature distributions agree for every class.
pub fn verify_prior_shift(
    p: &JointDistribution,
    q: &JointDistribution,
    tol: f64,
) -> Result<ShiftVerdict> {
    require_dominated(p, q)?;
    let cc_p = p.class_conditionals();
    let cc_q = q.class_conditionals();
    let mut b = VerdictBuilder::new(tol);
    for y in 0..p.class_count() {
        if let (Some(rp), Some(rq)) = (cc_p.row(y), cc_q.row(y)) {
            for x in 0..p.feature_count() {
                b.record(
                    format!("P[X={} | Y={}]", p.feature_name(x), y + 1),
                    rp[x],
                    rq[x],
                );
            }
        }
    }
    Ok(b.finish())
}

/// Def.: the posterior class probabilities agree on the shared feature
/// support.
pub fn verify_covariate_shift(
    p: &JointDistribution,
    q: &JointDistribution,
    tol: f64,
) -> Result<ShiftVerdict> {
    require_dominated(p, q)?;
    let post_p = p.posteriors();
    let post_q = q.posteriors();
    let mut b = VerdictBuilder::new(tol);
    for x in 0..p.feature_count() {
        if let (Some(rp), Some(rq)) = (post_p.row(x), post_q.row(x)) {
            for y in 0..p.class_count() {
                b.record(
                    format!("P[Y={} | X={}]", y + 1, p.feature_name(x)),
                    rp[y],
                    rq[y],
                );
            }
        }
    }
    Ok(b.finish())
}

/// Ratio-invariance test for FJS: for each class j, the target-to-source
/// ratio of posterior odds against the reference class, deflated by the
/// prior odds, must be constant in x. Avoids searching for the non-unique
/// (u, v) pair.
pub fn verify_fjs(p: &JointDistribution, q: &JointDistribution, tol: f64) -> Result<ShiftVerdict> {
    require_dominated(p, q)?;
    let l = p.class_count();
    let (px, py) = p.marginals();
    let (qx, qy) = q.marginals();
    let post_p = p.posteriors();
    let post_q = q.posteriors();

    // Reference class: largest target prior, so its odds stay well defined.
    let reference = (0..l)
        .max_by(|&a, &b| qy.mass(a).partial_cmp(&qy.mass(b)).unwrap())
        .unwrap();

    let mut b = VerdictBuilder::new(tol);
    for j in 0..l {
        if j == reference || !qy.supported(j) || !py.supported(j) {
            // An empty target class forces w(·,j) ≡ 0, which factorizes
            // trivially (v(j) = 0); nothing to check.
            continue;
        }
        let mut ratios: Vec<(usize, f64)> = Vec::new();
        for x in 0..p.feature_count() {
            if !px.supported(x) || !qx.supported(x) {
                continue;
            }
            let (rp, rq) = match (post_p.row(x), post_q.row(x)) {
                (Some(rp), Some(rq)) => (rp, rq),
                _ => continue,
            };
            if rp[j] <= SUPPORT_EPS || rp[reference] <= SUPPORT_EPS {
                continue; // source cell off support; target is too, by domination
            }
            let numerator = rq[j] * qy.mass(reference) * rp[reference] * py.mass(j);
            let denominator = rq[reference] * qy.mass(j) * rp[j] * py.mass(reference);
            let ratio = if denominator > 0.0 {
                numerator / denominator
            } else {
                f64::INFINITY
            };
            ratios.push((x, ratio));
        }
        if ratios.len() < 2 {
            continue;
        }
        if ratios.iter().any(|(_, r)| !r.is_finite()) {
            for (x, r) in ratios.iter().filter(|(_, r)| !r.is_finite()) {
                b.record_dev(
                    f64::INFINITY,
                    format!("odds ratio j={} at X={}", j + 1, p.feature_name(*x)),
                    *r,
                    f64::NAN,
                );
            }
            continue;
        }
        let mean = ratios.iter().map(|(_, r)| r).sum::<f64>() / ratios.len() as f64;
        let scale = mean.abs().max(SUPPORT_EPS);
        for (x, r) in &ratios {
            let dev = (r - mean).abs() / scale;
            b.record_dev(
                dev,
                format!("odds ratio j={} at X={}", j + 1, p.feature_name(*x)),
                *r,
                mean,
            );
        }
    }
    Ok(b.finish())
}

/// Def.: the feature law conditioned on both the class and the stratum is
/// invariant.
pub fn verify_sjs(
    p: &JointDistribution,
    q: &JointDistribution,
    transform: &FeatureTransform,
    tol: f64,
) -> Result<ShiftVerdict> {
    require_dominated(p, q)?;
    if transform.feature_count() != p.feature_count() {
        return Err(Error::ShapeMismatch(format!(
            "transform covers {} feature points, distribution has {}",
            transform.feature_count(),
            p.feature_count()
        )));
    }
    let l = p.class_count();
    let n = transform.stratum_count();
    let mut p_yt = vec![0.0; n * l];
    let mut q_yt = vec![0.0; n * l];
    for x in 0..p.feature_count() {
        let t = transform.stratum_of(x);
        for y in 0..l {
            p_yt[t * l + y] += p.mass(x, y);
            q_yt[t * l + y] += q.mass(x, y);
        }
    }
    let mut b = VerdictBuilder::new(tol);
    for t in 0..n {
        for y in 0..l {
            let (pm, qm) = (p_yt[t * l + y], q_yt[t * l + y]);
            if pm <= SUPPORT_EPS || qm <= SUPPORT_EPS {
                continue; // conditioning event null on one side
            }
            for x in transform.members(t) {
                b.record(
                    format!(
                        "P[X={} | Y={}, T={}]",
                        p.feature_name(x),
                        y + 1,
                        transform.stratum_labels()[t]
                    ),
                    p.mass(x, y) / pm,
                    q.mass(x, y) / qm,
                );
            }
        }
    }
    Ok(b.finish())
}

/// Def.: the feature law conditioned on the stratum alone is invariant.
/// Testable from feature observations only; no labels needed.
pub fn verify_cdi(
    p: &JointDistribution,
    q: &JointDistribution,
    transform: &FeatureTransform,
    tol: f64,
) -> Result<ShiftVerdict> {
    require_dominated(p, q)?;
    if transform.feature_count() != p.feature_count() {
        return Err(Error::ShapeMismatch(format!(
            "transform covers {} feature points, distribution has {}",
            transform.feature_count(),
            p.feature_count()
        )));
    }
    let (px, _) = p.marginals();
    let (qx, _) = q.marginals();
    let n = transform.stratum_count();
    let mut p_t = vec![0.0; n];
    let mut q_t = vec![0.0; n];
    for x in 0..p.feature_count() {
        let t = transform.stratum_of(x);
        p_t[t] += px.mass(x);
        q_t[t] += qx.mass(x);
    }
    let mut b = VerdictBuilder::new(tol);
    for t in 0..n {
        if p_t[t] <= SUPPORT_EPS || q_t[t] <= SUPPORT_EPS {
            continue;
        }
        for x in transform.members(t) {
            b.record(
                format!(
                    "P[X={} | T={}]",
                    p.feature_name(x),
                    transform.stratum_labels()[t]
                ),
                px.mass(x) / p_t[t],
                qx.mass(x) / q_t[t],
            );
        }
    }
    Ok(b.finish())
}

/// Def.: the joint law of (X, Y) conditioned on the stratum is invariant.
pub fn verify_scs(
    p: &JointDistribution,
    q: &JointDistribution,
    transform: &FeatureTransform,
    tol: f64,
) -> Result<ShiftVerdict> {
    require_dominated(p, q)?;
    if transform.feature_count() != p.feature_count() {
        return Err(Error::ShapeMismatch(format!(
            "transform covers {} feature points, distribution has {}",
            transform.feature_count(),
            p.feature_count()
        )));
    }
    let l = p.class_count();
    let n = transform.stratum_count();
    let mut p_t = vec![0.0; n];
    let mut q_t = vec![0.0; n];
    for x in 0..p.feature_count() {
        let t = transform.stratum_of(x);
        for y in 0..l {
            p_t[t] += p.mass(x, y);
            q_t[t] += q.mass(x, y);
        }
    }
    let mut b = VerdictBuilder::new(tol);
    for t in 0..n {
        if p_t[t] <= SUPPORT_EPS || q_t[t] <= SUPPORT_EPS {
            continue;
        }
        for x in transform.members(t) {
            for y in 0..l {
                b.record(
                    format!(
                        "P[X={}, Y={} | T={}]",
                        p.feature_name(x),
                        y + 1,
                        transform.stratum_labels()[t]
                    ),
                    p.mass(x, y) / p_t[t],
                    q.mass(x, y) / q_t[t],
                );
            }
        }
    }
    Ok(b.finish())
}

/// Evaluates the defining identity of the shift kind named by `spec`.
pub fn verify_shift(
    p: &JointDistribution,
    q: &JointDistribution,
    spec: &ShiftSpec,
    tol: f64,
) -> Result<ShiftVerdict> {
    match spec {
        ShiftSpec::PriorShift { .. } => verify_prior_shift(p, q, tol),
        ShiftSpec::CovariateShift { .. } => verify_covariate_shift(p, q, tol),
        ShiftSpec::Fjs { .. } | ShiftSpec::FjsTargets { .. } => verify_fjs(p, q, tol),
        ShiftSpec::Sjs { .. } => {
            let t = spec.transform(p.feature_count())?.expect("SJS carries strata");
            verify_sjs(p, q, &t, tol)
        }
        ShiftSpec::Cdi { .. } => {
            let t = spec.transform(p.feature_count())?.expect("CDI carries strata");
            verify_cdi(p, q, &t, tol)
        }
        ShiftSpec::Scs { .. } => {
            let t = spec.transform(p.feature_count())?.expect("SCS carries strata");
            verify_scs(p, q, &t, tol)
        }
    }
}

/// Constant-in-x Bayes-classifier helper shared by the CLI: not part of the
/// shift math, but synthesizing scenarios usually needs one.
pub fn default_classifier(p: &JointDistribution) -> Classifier {
    Classifier::bayes(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::importance_weights;
    use crate::testutil::{assert_close, fixture_p2, priors, qx};

    #[test]
    fn prior_shift_identity() {
        let p2 = fixture_p2();
        let q = make_prior_shift(&p2, &priors(&[0.5, 0.5])).unwrap();
        assert_close(q.mass_flat(), p2.mass_flat(), 1e-15);
    }

    #[test]
    fn prior_shift_p2() {
        let p2 = fixture_p2();
        let q = make_prior_shift(&p2, &priors(&[0.7, 0.3])).unwrap();
        assert_close(q.mass_flat(), &[0.56, 0.06, 0.14, 0.24], 1e-14);
        assert_close(q.feature_marginal().masses(), &[0.62, 0.38], 1e-14);
    }

    #[test]
    fn prior_shift_degenerate() {
        let p2 = fixture_p2();
        let q = make_prior_shift(&p2, &priors(&[1.0, 0.0])).unwrap();
        assert_close(q.feature_marginal().masses(), &[0.8, 0.2], 1e-14);
    }

    #[test]
    fn prior_shift_unsupported_class() {
        let p = JointDistribution::new(
            vec!["x1".into(), "x2".into()],
            2,
            vec![0.6, 0.0, 0.4, 0.0],
        )
        .unwrap();
        assert!(matches!(
            make_prior_shift(&p, &priors(&[0.5, 0.5])),
            Err(Error::UnsupportedClass { class: 1, .. })
        ));
    }

    #[test]
    fn covariate_shift_p2() {
        let p2 = fixture_p2();
        let q = make_covariate_shift(&p2, &qx(&p2, &[0.7, 0.3])).unwrap();
        let qy = q.label_marginal();
        assert!((qy.mass(0) - 0.62).abs() < 1e-14);
        // posteriors preserved
        let v = verify_covariate_shift(&p2, &q, 1e-12).unwrap();
        assert!(v.holds, "max deviation {}", v.max_deviation);
    }

    #[test]
    fn covariate_shift_point_mass() {
        let p2 = fixture_p2();
        let q = make_covariate_shift(&p2, &qx(&p2, &[1.0, 0.0])).unwrap();
        assert_close(q.label_marginal().masses(), &[0.8, 0.2], 1e-14);
    }

    #[test]
    fn fjs_unit_factors() {
        let p2 = fixture_p2();
        let q = make_fjs(&p2, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_close(q.mass_flat(), p2.mass_flat(), 1e-15);
    }

    #[test]
    fn fjs_v_only_reproduces_prior_shift() {
        let p2 = fixture_p2();
        let q = make_fjs(&p2, &[1.0, 1.0], &[1.4, 0.6]).unwrap();
        let expected = make_prior_shift(&p2, &priors(&[0.7, 0.3])).unwrap();
        assert_close(q.mass_flat(), expected.mass_flat(), 1e-14);
    }

    #[test]
    fn fjs_u_only_reproduces_covariate_shift() {
        let p2 = fixture_p2();
        let q = make_fjs(&p2, &[1.4, 0.6], &[1.0, 1.0]).unwrap();
        let expected = make_covariate_shift(&p2, &qx(&p2, &[0.7, 0.3])).unwrap();
        assert_close(q.mass_flat(), expected.mass_flat(), 1e-14);
    }

    #[test]
    fn fjs_rejects_unnormalized_factors() {
        let p2 = fixture_p2();
        assert!(matches!(
            make_fjs(&p2, &[2.0, 2.0], &[1.0, 1.0]),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn fjs_scaling_degeneracy() {
        let p2 = fixture_p2();
        let base = make_fjs(&p2, &[1.4, 0.6], &[1.0, 1.0]).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let scaled = make_fjs(&p2, &[1.4 * c, 0.6 * c], &[1.0 / c, 1.0 / c]).unwrap();
            assert_close(base.mass_flat(), scaled.mass_flat(), 1e-14);
        }
    }

    #[test]
    fn construct_fjs_no_shift() {
        let p2 = fixture_p2();
        let (q, factors) = construct_fjs(
            &p2,
            &qx(&p2, &[0.5, 0.5]),
            &priors(&[0.5, 0.5]),
            &SolverConfig::default(),
        )
        .unwrap();
        assert_close(q.mass_flat(), p2.mass_flat(), 1e-10);
        assert!((factors.rho[0] - 1.0).abs() < 1e-9);
        assert_close(&factors.u, &[1.0, 1.0], 1e-9);
        assert_close(&factors.v, &[1.0, 1.0], 1e-9);
    }

    #[test]
    fn construct_fjs_prior_shift_marginals() {
        // Target marginals of make_prior_shift(P2, (0.7,0.3)) are
        // reproduced with ϱ₁ = 1.
        let p2 = fixture_p2();
        let (q, factors) = construct_fjs(
            &p2,
            &qx(&p2, &[0.62, 0.38]),
            &priors(&[0.7, 0.3]),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((factors.rho[0] - 1.0).abs() < 1e-8, "rho {:?}", factors.rho);
        let expected = make_prior_shift(&p2, &priors(&[0.7, 0.3])).unwrap();
        assert_close(q.mass_flat(), expected.mass_flat(), 1e-9);
    }

    #[test]
    fn construct_fjs_general_binary() {
        let p2 = fixture_p2();
        let (q, factors) = construct_fjs(
            &p2,
            &qx(&p2, &[0.7, 0.3]),
            &priors(&[0.6, 0.4]),
            &SolverConfig::default(),
        )
        .unwrap();
        let (qx_got, qy_got) = q.marginals();
        assert_close(qx_got.masses(), &[0.7, 0.3], 1e-9);
        assert_close(qy_got.masses(), &[0.6, 0.4], 1e-9);
        // factorization holds
        let w = importance_weights(&p2, &q).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert!(
                    (w.joint(x, y) - factors.u[x] * factors.v[y]).abs() < 1e-9,
                    "cell ({x},{y})"
                );
            }
        }
    }

    #[test]
    fn sjs_constant_transform_is_prior_shift() {
        let p2 = fixture_p2();
        let t = FeatureTransform::constant(2);
        let posts = ConditionalTable::new(
            t.stratum_labels().to_vec(),
            2,
            vec![Some(vec![0.7, 0.3])],
        )
        .unwrap();
        let pmf = CategoricalDistribution::new(t.stratum_labels().to_vec(), vec![1.0]).unwrap();
        let q = make_sjs(&p2, &t, &posts, &pmf).unwrap();
        let expected = make_prior_shift(&p2, &priors(&[0.7, 0.3])).unwrap();
        assert_close(q.mass_flat(), expected.mass_flat(), 1e-14);
    }

    #[test]
    fn sjs_identity_transform_pins_features() {
        let p2 = fixture_p2();
        let t = FeatureTransform::identity(2);
        let posts = ConditionalTable::new(
            t.stratum_labels().to_vec(),
            2,
            vec![Some(vec![0.6, 0.4]), Some(vec![0.3, 0.7])],
        )
        .unwrap();
        let pmf =
            CategoricalDistribution::new(t.stratum_labels().to_vec(), vec![0.5, 0.5]).unwrap();
        let q = make_sjs(&p2, &t, &posts, &pmf).unwrap();
        assert_close(q.feature_marginal().masses(), &[0.5, 0.5], 1e-14);
        let post = q.posteriors();
        assert_close(post.row(0).unwrap(), &[0.6, 0.4], 1e-14);
        assert_close(post.row(1).unwrap(), &[0.3, 0.7], 1e-14);
        let v = verify_sjs(&p2, &q, &t, 1e-12).unwrap();
        assert!(v.holds);
    }

    #[test]
    fn sjs_two_strata_verifies() {
        let p4 = crate::testutil::fixture_p4();
        let t = FeatureTransform::new(vec![0, 0, 1, 1], vec!["t0".into(), "t1".into()]).unwrap();
        let posts = ConditionalTable::new(
            t.stratum_labels().to_vec(),
            2,
            vec![Some(vec![0.9, 0.1]), Some(vec![0.25, 0.75])],
        )
        .unwrap();
        let pmf =
            CategoricalDistribution::new(t.stratum_labels().to_vec(), vec![0.6, 0.4]).unwrap();
        let q = make_sjs(&p4, &t, &posts, &pmf).unwrap();
        let v = verify_sjs(&p4, &q, &t, 1e-12).unwrap();
        assert!(v.holds, "max deviation {}", v.max_deviation);
    }

    #[test]
    fn scs_single_stratum_identity() {
        let p2 = fixture_p2();
        let t = FeatureTransform::constant(2);
        let pmf = CategoricalDistribution::new(t.stratum_labels().to_vec(), vec![1.0]).unwrap();
        let q = make_scs(&p2, &t, &pmf).unwrap();
        assert_close(q.mass_flat(), p2.mass_flat(), 1e-15);
    }

    #[test]
    fn scs_two_strata_implies_sjs_and_cdi() {
        let p4 = crate::testutil::fixture_p4();
        let t = FeatureTransform::new(vec![0, 0, 1, 1], vec!["t0".into(), "t1".into()]).unwrap();
        let pmf =
            CategoricalDistribution::new(t.stratum_labels().to_vec(), vec![0.9, 0.1]).unwrap();
        let q = make_scs(&p4, &t, &pmf).unwrap();
        assert!(verify_scs(&p4, &q, &t, 1e-12).unwrap().holds);
        assert!(verify_sjs(&p4, &q, &t, 1e-12).unwrap().holds);
        assert!(verify_cdi(&p4, &q, &t, 1e-12).unwrap().holds);
    }

    #[test]
    fn verdict_detects_wrong_claim() {
        let p2 = fixture_p2();
        let q = make_covariate_shift(&p2, &qx(&p2, &[0.7, 0.3])).unwrap();
        let v = verify_prior_shift(&p2, &q, 1e-12).unwrap();
        assert!(!v.holds);
        assert!(v.max_deviation > 0.0);
        assert!(!v.witnesses.is_empty());
    }

    #[test]
    fn identity_shift_satisfies_every_kind() {
        let p2 = fixture_p2();
        let t = FeatureTransform::constant(2);
        assert!(verify_prior_shift(&p2, &p2, 1e-12).unwrap().holds);
        assert!(verify_covariate_shift(&p2, &p2, 1e-12).unwrap().holds);
        assert!(verify_fjs(&p2, &p2, 1e-12).unwrap().holds);
        assert!(verify_sjs(&p2, &p2, &t, 1e-12).unwrap().holds);
        assert!(verify_cdi(&p2, &p2, &t, 1e-12).unwrap().holds);
        assert!(verify_scs(&p2, &p2, &t, 1e-12).unwrap().holds);
    }

    #[test]
    fn prior_shift_passes_fjs_and_sjs_for_any_transform() {
        let p4 = crate::testutil::fixture_p4();
        let q = make_prior_shift(&p4, &priors(&[0.6, 0.4])).unwrap();
        assert!(verify_fjs(&p4, &q, 1e-10).unwrap().holds);
        for t in [
            FeatureTransform::constant(4),
            FeatureTransform::identity(4),
            FeatureTransform::new(vec![0, 1, 0, 1], vec!["a".into(), "b".into()]).unwrap(),
        ] {
            assert!(verify_sjs(&p4, &q, &t, 1e-12).unwrap().holds);
        }
    }

    #[test]
    fn covariate_shift_passes_fjs() {
        let p2 = fixture_p2();
        let q = make_covariate_shift(&p2, &qx(&p2, &[0.7, 0.3])).unwrap();
        assert!(verify_fjs(&p2, &q, 1e-10).unwrap().holds);
    }

    #[test]
    fn sjs_coarsening() {
        // T = S∘T' with T' finer: T-SJS implies T'-SJS.
        let p4 = crate::testutil::fixture_p4();
        let t_fine =
            FeatureTransform::new(vec![0, 1, 2, 3], (0..4).map(|i| format!("f{i}")).collect())
                .unwrap();
        let t_coarse = t_fine
            .compose(&[0, 0, 1, 1], vec!["c0".into(), "c1".into()])
            .unwrap();
        let posts = ConditionalTable::new(
            t_coarse.stratum_labels().to_vec(),
            2,
            vec![Some(vec![0.8, 0.2]), Some(vec![0.35, 0.65])],
        )
        .unwrap();
        let pmf = CategoricalDistribution::new(
            t_coarse.stratum_labels().to_vec(),
            vec![0.55, 0.45],
        )
        .unwrap();
        let q = make_sjs(&p4, &t_coarse, &posts, &pmf).unwrap();
        assert!(verify_sjs(&p4, &q, &t_coarse, 1e-12).unwrap().holds);
        assert!(verify_sjs(&p4, &q, &t_fine, 1e-12).unwrap().holds);
    }

    #[test]
    fn shift_spec_json_round_trip() {
        let spec = ShiftSpec::Sjs {
            strata: vec![0, 0, 1, 1],
            stratum_posteriors: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            stratum_pmf: vec![0.6, 0.4],
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"sjs\""));
        let back: ShiftSpec = serde_json::from_str(&json).unwrap();
        assert!(matches!(back, ShiftSpec::Sjs { .. }));
    }
}
