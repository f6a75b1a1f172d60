use criterion::{criterion_group, criterion_main, Criterion};

use priorshift::dist::Classifier;
use priorshift::estimators::{ccm_estimate, em_label_shift, CcmConfig, EmConfig};
use priorshift::shift::{construct_fjs, make_prior_shift, SolverConfig};
use priorshift::synthetic::{
    random_feature_pmf, random_joint_with_priors, random_priors, random_transform,
};
use priorshift::SplitMix64;

fn bench_em(c: &mut Criterion) {
    let mut rng = SplitMix64::new(101);
    let p = random_joint_with_priors(&mut rng, 10, 4, 0.05).unwrap();
    let q = make_prior_shift(&p, &random_priors(&mut rng, 4, 0.05).unwrap()).unwrap();
    let post = p.posteriors();
    let priors = p.label_marginal();
    let target = q.feature_marginal();
    c.bench_function("em_label_shift 10x4", |b| {
        b.iter(|| em_label_shift(&post, &priors, &target, &EmConfig::default()).unwrap())
    });
}

fn bench_construct_fjs(c: &mut Criterion) {
    let mut rng = SplitMix64::new(202);
    let p = random_joint_with_priors(&mut rng, 10, 2, 0.1).unwrap();
    let qx = random_feature_pmf(&mut rng, &p, 0.05).unwrap();
    let qy = random_priors(&mut rng, 2, 0.1).unwrap();
    c.bench_function("construct_fjs binary 10x2", |b| {
        b.iter(|| construct_fjs(&p, &qx, &qy, &SolverConfig::default()).unwrap())
    });
}

fn bench_ccm(c: &mut Criterion) {
    let mut rng = SplitMix64::new(303);
    let p = random_joint_with_priors(&mut rng, 12, 3, 0.05).unwrap();
    let t = random_transform(&mut rng, 12, 3).unwrap();
    let q = make_prior_shift(&p, &random_priors(&mut rng, 3, 0.05).unwrap()).unwrap();
    let target = q.feature_marginal();
    let cls = Classifier::bayes(&p);
    c.bench_function("ccm_estimate 12x3", |b| {
        b.iter(|| ccm_estimate(&p, &target, &t, &cls, &CcmConfig::default()).unwrap())
    });
}

criterion_group!(benches, bench_em, bench_construct_fjs, bench_ccm);
criterion_main!(benches);
