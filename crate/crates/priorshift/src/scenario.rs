//! Scenario configuration and execution: builds source/target pairs,
//! optionally samples at finite sizes, runs the configured estimators and
//! assembles a deterministic report.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{rank_identifiability_with_classifier, RankReport};
use crate::dist::{
    CategoricalDistribution, Classifier, FeatureTransform, JointDistribution, SUPPORT_EPS,
};
use crate::error::{Error, Result};
use crate::estimators::{
    ccm_estimate, classify_and_count, em_label_shift, fjs_solve_q, pcc, reweighting, CcmConfig,
    EmConfig, PriorEstimate,
};
use crate::rng::SplitMix64;
use crate::sample::{draw_categorical, draw_joint, fit_empirical, read_labeled_csv};
use crate::shift::{synthesize, verify_shift, ShiftSpec, ShiftVerdict, SolverConfig};

/// Smoothing default when fitting from finite samples (Jeffreys-style).
pub const EMPIRICAL_SMOOTHING: f64 = 0.5;

/// Where the source distribution comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceSpec {
    Inline {
        distribution: JointDistribution,
    },
    /// Labeled CSV fitted with the configured smoothing.
    Csv {
        labeled_path: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        features: Option<Vec<String>>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        classes: Option<usize>,
    },
}

/// One estimator to run, with its knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum EstimatorConfig {
    ClassifyAndCount,
    Pcc,
    Reweighting,
    Em {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        tolerance: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        max_iterations: Option<usize>,
    },
    FjsQ {
        rho: Vec<f64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        tolerance: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        max_iterations: Option<usize>,
    },
    Ccm {
        strata: Vec<usize>,
    },
}

impl EstimatorConfig {
    pub fn method_name(&self) -> &'static str {
        match self {
            EstimatorConfig::ClassifyAndCount => "classify_and_count",
            EstimatorConfig::Pcc => "pcc",
            EstimatorConfig::Reweighting => "reweighting",
            EstimatorConfig::Em { .. } => "em",
            EstimatorConfig::FjsQ { .. } => "fjs_q",
            EstimatorConfig::Ccm { .. } => "ccm",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub source: SourceSpec,
    /// Shift applied to the source; absent means no shift (target = source).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shift: Option<ShiftSpec>,
    pub estimators: Vec<EstimatorConfig>,
    /// (m, n): labeled source and unlabeled target sample sizes. Absent
    /// means exact evaluation from the distribution objects.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sample_sizes: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub smoothing: Option<f64>,
    /// Include the shift verdict and rank report in the output.
    #[serde(default)]
    pub diagnose: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub output_path: Option<String>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(Error::InvalidInput(
                "scenario configures no estimators".into(),
            ));
        }
        if self.sample_sizes.is_some() && self.seed.is_none() {
            return Err(Error::InvalidInput(
                "sample_sizes requires a seed for reproducibility".into(),
            ));
        }
        if let Some(s) = self.smoothing {
            if !(s >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "smoothing {s} must be non-negative"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub class: String,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        ErrorInfo {
            class: e.class().to_string(),
            message: e.to_string(),
        }
    }
}

/// Per-estimator result; a failed estimator carries its error class and
/// never aborts the scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorOutcome {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<PriorEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    /// Wall-clock time; excluded from serialization so reports for
    /// identical configs and seeds stay byte-identical.
    #[serde(skip, default)]
    pub runtime: Duration,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioDiagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_verdict: Option<ShiftVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<RankReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Target label priors, known exactly whenever the shift was synthesized.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_priors: Option<Vec<f64>>,
    pub estimators: Vec<EstimatorOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<ScenarioDiagnostics>,
    /// Whether estimation ran on fitted finite-sample distributions.
    pub empirical: bool,
}

impl ExperimentReport {
    /// Markdown rendering for human consumption.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        if let Some(tp) = &self.true_priors {
            out.push_str(&format!("True priors: {}\n\n", format_vec(tp)));
        }
        out.push_str("| method | priors | max abs error | status |\n");
        out.push_str("|---|---|---|---|\n");
        for e in &self.estimators {
            let priors = e
                .estimate
                .as_ref()
                .map(|p| format_vec(p.priors.masses()))
                .unwrap_or_else(|| "—".into());
            let err = e
                .max_abs_error
                .map(|v| format!("{v:.3e}"))
                .unwrap_or_else(|| "—".into());
            let status = match &e.error {
                Some(info) => format!("{}: {}", info.class, info.message),
                None => "ok".into(),
            };
            out.push_str(&format!("| {} | {priors} | {err} | {status} |\n", e.method));
        }
        if let Some(d) = &self.diagnostics {
            if let Some(v) = &d.shift_verdict {
                out.push_str(&format!(
                    "\nShift verdict: holds = {}, max deviation = {:.3e} (tol {:.1e})\n",
                    v.holds, v.max_deviation, v.tolerance
                ));
            }
            if let Some(r) = &d.rank {
                out.push_str(&format!(
                    "Identifiable: {} ({} strata checked)\n",
                    r.overall_identifiable,
                    r.per_stratum.len()
                ));
            }
        }
        out
    }
}

fn format_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn load_source(cfg: &ScenarioConfig) -> Result<JointDistribution> {
    match &cfg.source {
        SourceSpec::Inline { distribution } => Ok(distribution.clone()),
        SourceSpec::Csv {
            labeled_path,
            features,
            classes,
        } => {
            let file = std::fs::File::open(labeled_path).map_err(|e| {
                Error::Io(format!("{labeled_path}: {e}"))
            })?;
            let declared = match (features, classes) {
                (Some(f), Some(l)) => Some((f.as_slice(), *l)),
                _ => None,
            };
            let ingest = read_labeled_csv(file, declared)?;
            let smoothing = cfg.smoothing.unwrap_or(0.0);
            let (joint, _) = fit_empirical(&ingest.samples, smoothing)?;
            joint.ok_or(Error::EmptySample)
        }
    }
}

/// Dispatches one configured estimator against an exact (or fitted) source
/// distribution and target feature pmf.
pub fn run_estimator(
    est: &EstimatorConfig,
    p: &JointDistribution,
    target_feature_pmf: &CategoricalDistribution,
) -> Result<PriorEstimate> {
    match est {
        EstimatorConfig::ClassifyAndCount => {
            classify_and_count(&Classifier::bayes(p), target_feature_pmf)
        }
        EstimatorConfig::Pcc => pcc(&p.posteriors(), target_feature_pmf),
        EstimatorConfig::Reweighting => {
            let (px, _) = p.marginals();
            let mut weights = vec![0.0; p.feature_count()];
            for x in 0..p.feature_count() {
                if px.supported(x) {
                    weights[x] = target_feature_pmf.mass(x) / px.mass(x);
                } else if target_feature_pmf.mass(x) > SUPPORT_EPS {
                    return Err(Error::UnsupportedFeature {
                        feature: p.feature_name(x).to_string(),
                        mass: target_feature_pmf.mass(x),
                    });
                }
            }
            reweighting(p, &weights)
        }
        EstimatorConfig::Em {
            tolerance,
            max_iterations,
        } => {
            let mut em_cfg = EmConfig::default();
            if let Some(t) = tolerance {
                em_cfg.tolerance = *t;
            }
            if let Some(m) = max_iterations {
                em_cfg.max_iterations = *m;
            }
            em_label_shift(
                &p.posteriors(),
                &p.label_marginal(),
                target_feature_pmf,
                &em_cfg,
            )
        }
        EstimatorConfig::FjsQ {
            rho,
            tolerance,
            max_iterations,
        } => {
            let mut em_cfg = EmConfig::default();
            if let Some(t) = tolerance {
                em_cfg.tolerance = *t;
            }
            if let Some(m) = max_iterations {
                em_cfg.max_iterations = *m;
            }
            fjs_solve_q(p, target_feature_pmf, rho, &em_cfg)
        }
        EstimatorConfig::Ccm { strata } => {
            let n = strata.iter().copied().max().map_or(0, |m| m + 1);
            let labels = (0..n).map(|t| format!("t{t}")).collect();
            let transform = FeatureTransform::new(strata.clone(), labels)?;
            ccm_estimate(
                p,
                target_feature_pmf,
                &transform,
                &Classifier::bayes(p),
                &CcmConfig::default(),
            )
        }
    }
}

/// Executes one scenario end to end. Estimator failures are captured per
/// estimator; configuration and synthesis failures abort the scenario.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let p = load_source(cfg)?;

    // Target: synthesized from the shift spec, or the source itself.
    let q = match &cfg.shift {
        Some(spec) => synthesize(&p, spec, &SolverConfig::default())?,
        None => p.clone(),
    };
    let true_priors = Some(q.label_marginal().masses().to_vec());

    // Exact or finite-sample evaluation inputs. Sampling uses stream 0 for
    // the labeled source draw and stream 1 for the unlabeled target draw.
    let empirical = cfg.sample_sizes.is_some();
    let (p_used, qx_used) = match cfg.sample_sizes {
        None => (p.clone(), q.feature_marginal()),
        Some((m, n)) => {
            let seed = cfg.seed.expect("validated");
            let smoothing = cfg.smoothing.unwrap_or(EMPIRICAL_SMOOTHING);
            let labeled = draw_joint(&p, m, &mut SplitMix64::for_stream(seed, 0));
            let unlabeled = draw_categorical(
                &q.feature_marginal(),
                n,
                &mut SplitMix64::for_stream(seed, 1),
            );
            let samples = crate::estimators::SampleSet::new(
                p.features().to_vec(),
                p.class_count(),
                labeled,
                unlabeled,
            )?;
            let (joint, marginal) = fit_empirical(&samples, smoothing)?;
            (
                joint.ok_or(Error::EmptySample)?,
                marginal.ok_or(Error::EmptySample)?,
            )
        }
    };

    let mut outcomes = Vec::with_capacity(cfg.estimators.len());
    for est in &cfg.estimators {
        let start = Instant::now();
        let result = run_estimator(est, &p_used, &qx_used);
        let runtime = start.elapsed();
        let outcome = match result {
            Ok(estimate) => {
                let max_abs_error = true_priors.as_ref().map(|tp| {
                    estimate
                        .priors
                        .masses()
                        .iter()
                        .zip(tp.iter())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                });
                EstimatorOutcome {
                    method: est.method_name().to_string(),
                    estimate: Some(estimate),
                    max_abs_error,
                    error: None,
                    runtime,
                }
            }
            Err(e) => EstimatorOutcome {
                method: est.method_name().to_string(),
                estimate: None,
                max_abs_error: None,
                error: Some(ErrorInfo::from(&e)),
                runtime,
            },
        };
        outcomes.push(outcome);
    }

    let diagnostics = if cfg.diagnose {
        let shift_verdict = match &cfg.shift {
            Some(spec) => Some(verify_shift(&p, &q, spec, 1e-9)?),
            None => None,
        };
        let strata = cfg.estimators.iter().find_map(|e| match e {
            EstimatorConfig::Ccm { strata } => Some(strata.clone()),
            _ => None,
        });
        let rank = match strata {
            Some(s) => {
                let n = s.iter().copied().max().map_or(0, |m| m + 1);
                let labels = (0..n).map(|t| format!("t{t}")).collect();
                let t = FeatureTransform::new(s, labels)?;
                Some(rank_identifiability_with_classifier(
                    &p,
                    &[&t],
                    &Classifier::bayes(&p),
                )?)
            }
            None => None,
        };
        Some(ScenarioDiagnostics {
            shift_verdict,
            rank,
        })
    } else {
        None
    };

    Ok(ExperimentReport {
        true_priors,
        estimators: outcomes,
        diagnostics,
        empirical,
    })
}

/// One entry of a batch report; failed scenarios appear with their error
/// class and never affect their neighbours.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ExperimentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

/// Runs every scenario, isolating failures. Results are keyed by index and
/// emitted in config order, so assembly is order-independent.
pub fn run_batch(cfgs: &[ScenarioConfig]) -> Vec<ScenarioResult> {
    cfgs.iter()
        .enumerate()
        .map(|(index, cfg)| match run_experiment(cfg) {
            Ok(report) => ScenarioResult {
                index,
                report: Some(report),
                error: None,
            },
            Err(e) => ScenarioResult {
                index,
                report: None,
                error: Some(ErrorInfo::from(&e)),
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_close, fixture_p2};

    fn p2_config(estimators: Vec<EstimatorConfig>, shift: Option<ShiftSpec>) -> ScenarioConfig {
        ScenarioConfig {
            source: SourceSpec::Inline {
                distribution: fixture_p2(),
            },
            shift,
            estimators,
            sample_sizes: None,
            seed: None,
            smoothing: None,
            diagnose: false,
            output_path: None,
        }
    }

    #[test]
    fn prior_shift_scenario_exact() {
        let cfg = p2_config(
            vec![
                EstimatorConfig::Em {
                    tolerance: None,
                    max_iterations: None,
                },
                EstimatorConfig::Ccm {
                    strata: vec![0, 0],
                },
                EstimatorConfig::Pcc,
            ],
            Some(ShiftSpec::PriorShift {
                target_priors: vec![0.7, 0.3],
            }),
        );
        let report = run_experiment(&cfg).unwrap();
        assert_close(report.true_priors.as_ref().unwrap(), &[0.7, 0.3], 1e-12);

        let em = &report.estimators[0];
        assert!(em.max_abs_error.unwrap() < 1e-8);
        let ccm = &report.estimators[1];
        assert!(ccm.max_abs_error.unwrap() < 1e-8);
        // PCC is biased off covariate shift: it reports the posterior mix
        // Σ_x q_X(x)·P[Y|x] = 0.62·0.8 + 0.38·0.2 = 0.572 for class 1.
        let pcc = &report.estimators[2];
        assert_close(
            pcc.estimate.as_ref().unwrap().priors.masses(),
            &[0.572, 0.428],
            1e-12,
        );
    }

    #[test]
    fn no_shift_returns_source_priors() {
        let cfg = p2_config(
            vec![
                EstimatorConfig::Pcc,
                EstimatorConfig::Reweighting,
                EstimatorConfig::Em {
                    tolerance: None,
                    max_iterations: None,
                },
            ],
            None,
        );
        let report = run_experiment(&cfg).unwrap();
        for e in &report.estimators {
            assert!(
                e.max_abs_error.unwrap() < 1e-8,
                "{}: {:?}",
                e.method,
                e.max_abs_error
            );
        }
    }

    #[test]
    fn failing_estimator_is_isolated() {
        // Independent joint: every decision region maps to one class, the
        // Bayes classifier is constant, so the CCM system is singular.
        let independent = JointDistribution::new(
            vec!["x1".into(), "x2".into()],
            2,
            vec![0.18, 0.12, 0.42, 0.28],
        )
        .unwrap();
        let cfg = ScenarioConfig {
            source: SourceSpec::Inline {
                distribution: independent,
            },
            shift: None,
            estimators: vec![
                EstimatorConfig::Ccm {
                    strata: vec![0, 0],
                },
                EstimatorConfig::Pcc,
            ],
            sample_sizes: None,
            seed: None,
            smoothing: None,
            diagnose: false,
            output_path: None,
        };
        let report = run_experiment(&cfg).unwrap();
        let ccm = &report.estimators[0];
        assert_eq!(ccm.error.as_ref().unwrap().class, "SingularStratum");
        let pcc = &report.estimators[1];
        assert!(pcc.error.is_none());
        assert!(pcc.max_abs_error.unwrap() < 1e-12);
    }

    #[test]
    fn sampling_requires_seed() {
        let mut cfg = p2_config(vec![EstimatorConfig::Pcc], None);
        cfg.sample_sizes = Some((100, 100));
        assert!(matches!(
            run_experiment(&cfg),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn reports_are_byte_identical_across_runs() {
        let mut cfg = p2_config(
            vec![
                EstimatorConfig::Pcc,
                EstimatorConfig::Em {
                    tolerance: None,
                    max_iterations: None,
                },
            ],
            Some(ShiftSpec::PriorShift {
                target_priors: vec![0.65, 0.35],
            }),
        );
        cfg.sample_sizes = Some((5000, 5000));
        cfg.seed = Some(42);
        let a = serde_json::to_string(&run_experiment(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&run_experiment(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_mode_close_to_exact() {
        let mut cfg = p2_config(
            vec![EstimatorConfig::Pcc],
            Some(ShiftSpec::PriorShift {
                target_priors: vec![0.7, 0.3],
            }),
        );
        cfg.sample_sizes = Some((100_000, 100_000));
        cfg.seed = Some(7);
        let report = run_experiment(&cfg).unwrap();
        assert!(report.empirical);
        let est = report.estimators[0].estimate.as_ref().unwrap();
        // exact PCC value is 0.572; sampling noise stays small at n=1e5
        assert!((est.priors.mass(0) - 0.572).abs() < 0.01);
    }

    #[test]
    fn batch_isolates_failures() {
        let good = p2_config(vec![EstimatorConfig::Pcc], None);
        let bad = p2_config(
            vec![EstimatorConfig::Pcc],
            Some(ShiftSpec::PriorShift {
                target_priors: vec![0.7, 0.3, 0.1], // wrong length
            }),
        );
        let results = run_batch(&[good.clone(), bad, good]);
        assert!(results[0].report.is_some());
        assert!(results[1].error.is_some());
        assert!(results[2].report.is_some());
        let a = serde_json::to_string(&results[0].report).unwrap();
        let c = serde_json::to_string(&results[2].report).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn diagnostics_included_on_request() {
        let mut cfg = p2_config(
            vec![EstimatorConfig::Ccm {
                strata: vec![0, 0],
            }],
            Some(ShiftSpec::PriorShift {
                target_priors: vec![0.7, 0.3],
            }),
        );
        cfg.diagnose = true;
        let report = run_experiment(&cfg).unwrap();
        let d = report.diagnostics.unwrap();
        assert!(d.shift_verdict.unwrap().holds);
        assert!(d.rank.unwrap().overall_identifiable);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = p2_config(
            vec![
                EstimatorConfig::Em {
                    tolerance: Some(1e-8),
                    max_iterations: None,
                },
                EstimatorConfig::Ccm {
                    strata: vec![0, 0],
                },
            ],
            Some(ShiftSpec::CovariateShift {
                target_feature_pmf: vec![0.7, 0.3],
            }),
        );
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"method\":\"em\""));
        let back: ScenarioConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.estimators.len(), 2);
    }

    #[test]
    fn markdown_rendering_mentions_methods() {
        let cfg = p2_config(vec![EstimatorConfig::Pcc], None);
        let report = run_experiment(&cfg).unwrap();
        let md = report.to_markdown();
        assert!(md.contains("| pcc |"));
        assert!(md.contains("True priors"));
    }
}
