//! Seeded sampling from finite distributions, empirical frequency fitting
//! with additive smoothing, and CSV ingestion/emission of sample sets.

use std::io::{Read, Write};

use crate::dist::{CategoricalDistribution, JointDistribution, SUPPORT_EPS};
use crate::error::{Error, Result};
use crate::estimators::SampleSet;
use crate::rng::SplitMix64;

/// Inverse-CDF draw over enumerated cells: the cumulative sums are computed
/// once, so identical (dist, n, seed) give identical output everywhere.
pub fn draw_joint(dist: &JointDistribution, n: usize, rng: &mut SplitMix64) -> Vec<(usize, usize)> {
    let l = dist.class_count();
    let cdf = cumulative(dist.mass_flat());
    (0..n)
        .map(|_| {
            let cell = pick(&cdf, rng.next_f64());
            (cell / l, cell % l)
        })
        .collect()
}

pub fn draw_categorical(
    dist: &CategoricalDistribution,
    n: usize,
    rng: &mut SplitMix64,
) -> Vec<usize> {
    let cdf = cumulative(dist.masses());
    (0..n).map(|_| pick(&cdf, rng.next_f64())).collect()
}

fn cumulative(mass: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = mass
        .iter()
        .map(|&m| {
            acc += m;
            acc
        })
        .collect();
    // Guard the final bucket against rounding so u < 1 always lands.
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Additive-smoothing frequency estimates from a sample set: joint cell
/// (count + s) / (m + s·K·ℓ) from the labeled part, feature marginal
/// (count + s) / (n + s·K) from the unlabeled part. Either side may be
/// absent; both absent is an error.
pub fn fit_empirical(
    samples: &SampleSet,
    smoothing: f64,
) -> Result<(Option<JointDistribution>, Option<CategoricalDistribution>)> {
    if !(smoothing >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "smoothing {smoothing} must be non-negative"
        )));
    }
    if samples.labeled.is_empty() && samples.unlabeled.is_empty() {
        return Err(Error::EmptySample);
    }
    let k = samples.features.len();
    let l = samples.class_count;

    let joint = if samples.labeled.is_empty() {
        None
    } else {
        let m = samples.labeled.len() as f64;
        let mut counts = vec![smoothing; k * l];
        for &(x, y) in &samples.labeled {
            counts[x * l + y] += 1.0;
        }
        let total = m + smoothing * (k * l) as f64;
        let mass = counts.into_iter().map(|c| c / total).collect();
        Some(JointDistribution::new(samples.features.clone(), l, mass)?)
    };

    let marginal = if samples.unlabeled.is_empty() {
        None
    } else {
        let n = samples.unlabeled.len() as f64;
        let mut counts = vec![smoothing; k];
        for &x in &samples.unlabeled {
            counts[x] += 1.0;
        }
        let total = n + smoothing * k as f64;
        let mass = counts.into_iter().map(|c| c / total).collect();
        Some(CategoricalDistribution::new(samples.features.clone(), mass)?)
    };

    Ok((joint, marginal))
}

/// Total-variation distance between two joint tables of identical shape.
pub fn total_variation(a: &JointDistribution, b: &JointDistribution) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(
            "total variation requires identical grids".into(),
        ));
    }
    Ok(a.mass_flat()
        .iter()
        .zip(b.mass_flat())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / 2.0)
}

// --- CSV ------------------------------------------------------------------

/// Outcome of CSV ingestion. `vocabulary_inferred` flags that the feature
/// vocabulary (and for labeled data the class count) came from the file
/// contents rather than a declared space.
#[derive(Debug, Clone)]
pub struct CsvIngest {
    pub samples: SampleSet,
    pub vocabulary_inferred: bool,
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn feature_index(
    features: &mut Vec<String>,
    declared: bool,
    name: &str,
    line: u64,
) -> Result<usize> {
    match features.iter().position(|f| f == name) {
        Some(i) => Ok(i),
        None if declared => Err(Error::InvalidInput(format!(
            "line {line}: feature {name:?} not in the declared vocabulary"
        ))),
        None => {
            features.push(name.to_string());
            Ok(features.len() - 1)
        }
    }
}

/// Reads a labeled sample from CSV with header `feature,label`; labels are
/// 1-based class numbers. With `declared = None` the vocabulary and class
/// count are inferred from the data.
pub fn read_labeled_csv<R: Read>(
    reader: R,
    declared: Option<(&[String], usize)>,
) -> Result<CsvIngest> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(io_err)?;
    if headers.len() < 2 || &headers[0] != "feature" || &headers[1] != "label" {
        return Err(Error::InvalidInput(format!(
            "labeled CSV must start with a `feature,label` header, got {headers:?}"
        )));
    }
    let inferred = declared.is_none();
    let (mut features, declared_classes) = match declared {
        Some((f, l)) => (f.to_vec(), Some(l)),
        None => (Vec::new(), None),
    };
    let mut labeled = Vec::new();
    let mut max_label = 0usize;
    for record in rdr.records() {
        let record = record.map_err(io_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let x = feature_index(&mut features, !inferred, &record[0], line)?;
        let label: usize = record[1].trim().parse().map_err(|_| {
            Error::InvalidInput(format!("line {line}: label {:?} is not an integer", &record[1]))
        })?;
        if label == 0 {
            return Err(Error::InvalidInput(format!(
                "line {line}: labels are 1-based class numbers"
            )));
        }
        if let Some(l) = declared_classes {
            if label > l {
                return Err(Error::InvalidInput(format!(
                    "line {line}: label {label} exceeds the declared {l} classes"
                )));
            }
        }
        max_label = max_label.max(label);
        labeled.push((x, label - 1));
    }
    let class_count = declared_classes.unwrap_or(max_label.max(2));
    Ok(CsvIngest {
        samples: SampleSet::new(features, class_count, labeled, Vec::new())?,
        vocabulary_inferred: inferred,
    })
}

/// Reads an unlabeled sample from CSV with header `feature`.
pub fn read_unlabeled_csv<R: Read>(reader: R, declared: Option<&[String]>) -> Result<CsvIngest> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(io_err)?;
    if headers.is_empty() || &headers[0] != "feature" {
        return Err(Error::InvalidInput(format!(
            "unlabeled CSV must start with a `feature` header, got {headers:?}"
        )));
    }
    let inferred = declared.is_none();
    let mut features = declared.map(|f| f.to_vec()).unwrap_or_default();
    let mut unlabeled = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(io_err)?;
        let line = record.position().map_or(0, |p| p.line());
        unlabeled.push(feature_index(&mut features, !inferred, &record[0], line)?);
    }
    Ok(CsvIngest {
        samples: SampleSet::new(features, 2, Vec::new(), unlabeled)?,
        vocabulary_inferred: inferred,
    })
}

/// Writes the labeled part as `feature,label` rows (labels 1-based).
pub fn write_labeled_csv<W: Write>(samples: &SampleSet, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["feature", "label"]).map_err(io_err)?;
    for &(x, y) in &samples.labeled {
        wtr.write_record([samples.features[x].as_str(), &(y + 1).to_string()])
            .map_err(io_err)?;
    }
    wtr.flush().map_err(io_err)
}

/// Writes the unlabeled part as `feature` rows.
pub fn write_unlabeled_csv<W: Write>(samples: &SampleSet, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["feature"]).map_err(io_err)?;
    for &x in &samples.unlabeled {
        wtr.write_record([samples.features[x].as_str()])
            .map_err(io_err)?;
    }
    wtr.flush().map_err(io_err)
}

/// Convenience check used by empirical estimators: every unlabeled feature
/// point with positive frequency must carry source mass.
pub fn check_sample_support(
    joint: &JointDistribution,
    marginal: &CategoricalDistribution,
) -> Result<()> {
    let (px, _) = joint.marginals();
    for x in 0..joint.feature_count() {
        if marginal.mass(x) > SUPPORT_EPS && px.mass(x) <= SUPPORT_EPS {
            return Err(Error::UnsupportedFeature {
                feature: joint.feature_name(x).to_string(),
                mass: marginal.mass(x),
            });
        }
    }
    Ok(())
}
