//! Failure detection rates and the gradient-vs-FDR correlation.

use serde::{Deserialize, Serialize};

use super::config::Method;
use super::trials::TrialRecord;
use crate::error::{Error, Result};
use crate::transforms::TransformKind;

/// `negatives / (positives + negatives)`.
pub fn fdr(positives: u64, negatives: u64) -> Result<f64> {
    let total = positives + negatives;
    if total == 0 {
        return Err(Error::UndefinedForZeroTrials);
    }
    Ok(negatives as f64 / total as f64)
}

/// Positive/negative tally of one cell of the results table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub positives: u64,
    pub negatives: u64,
}

impl Counts {
    pub fn add(&mut self, record: &TrialRecord) {
        if record.is_negative() {
            self.negatives += 1;
        } else {
            self.positives += 1;
        }
    }

    pub fn trials(&self) -> u64 {
        self.positives + self.negatives
    }

    /// `None` when no trials ran.
    pub fn fdr(&self) -> Option<f64> {
        fdr(self.positives, self.negatives).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSummary {
    pub transform: TransformKind,
    pub positives: u64,
    pub negatives: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub positives: u64,
    pub negatives: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdr: Option<f64>,
    /// This method's FDR divided by the baseline's.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdr_ratio: Option<f64>,
    pub per_transform: Vec<TransformSummary>,
}

impl MethodSummary {
    pub fn trials(&self) -> u64 {
        self.positives + self.negatives
    }
}

/// Per-method and per-(method, transform) tallies, in the given orders.
pub fn summarize(records: &[TrialRecord], methods: &[Method], transforms: &[TransformKind]) -> Vec<MethodSummary> {
    let mut cells = vec![vec![Counts::default(); transforms.len()]; methods.len()];
    for r in records {
        let (Some(mi), Some(ti)) = (
            methods.iter().position(|&m| m == r.method),
            transforms.iter().position(|&t| t == r.transform),
        ) else {
            continue;
        };
        cells[mi][ti].add(r);
    }
    let baseline_fdr = methods
        .iter()
        .position(|&m| m == Method::BaselineRandom)
        .and_then(|i| total(&cells[i]).fdr());
    methods
        .iter()
        .zip(&cells)
        .map(|(&method, row)| {
            let all = total(row);
            let fdr = all.fdr();
            MethodSummary {
                method,
                positives: all.positives,
                negatives: all.negatives,
                fdr,
                fdr_ratio: match (fdr, baseline_fdr) {
                    (Some(f), Some(b)) if method != Method::BaselineRandom && b > 0.0 => Some(f / b),
                    _ => None,
                },
                per_transform: transforms
                    .iter()
                    .zip(row)
                    .map(|(&transform, c)| TransformSummary {
                        transform,
                        positives: c.positives,
                        negatives: c.negatives,
                        fdr: c.fdr(),
                    })
                    .collect(),
            }
        })
        .collect()
}

fn total(row: &[Counts]) -> Counts {
    row.iter().fold(Counts::default(), |acc, c| Counts {
        positives: acc.positives + c.positives,
        negatives: acc.negatives + c.negatives,
    })
}

/// Equal-width binning of center gradients over [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningSettings {
    pub num_bins: usize,
    /// Bins with fewer trials are left out of the correlation.
    pub min_trials: u64,
}

impl Default for BinningSettings {
    fn default() -> Self {
        Self {
            num_bins: 20,
            min_trials: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lo: f64,
    pub hi: f64,
    pub trials: u64,
    pub negatives: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdr: Option<f64>,
}

impl BinStat {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub bins: Vec<BinStat>,
    pub qualifying_bins: usize,
    /// Pearson r between bin midpoints and bin FDRs; absent when the FDRs
    /// of the qualifying bins have zero variance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pearson_r: Option<f64>,
}

/// Index of the bin holding `g`; the last bin is closed on the right.
pub fn bin_index(g: f32, num_bins: usize) -> usize {
    ((g as f64 * num_bins as f64).floor() as usize).min(num_bins - 1)
}

pub fn bin_records<'a>(records: impl IntoIterator<Item = &'a TrialRecord>, settings: BinningSettings) -> Result<Vec<BinStat>> {
    if settings.num_bins == 0 {
        return Err(Error::InvalidArgument("num_bins must be positive".into()));
    }
    let n = settings.num_bins;
    let mut counts = vec![Counts::default(); n];
    for r in records {
        if !(0.0..=1.0).contains(&r.center_gradient) {
            return Err(Error::InvalidArgument(format!(
                "center_gradient {} outside [0,1]",
                r.center_gradient
            )));
        }
        counts[bin_index(r.center_gradient, n)].add(r);
    }
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, c)| BinStat {
            lo: i as f64 / n as f64,
            hi: (i + 1) as f64 / n as f64,
            trials: c.trials(),
            negatives: c.negatives,
            fdr: c.fdr(),
        })
        .collect())
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Bins the records by center gradient and correlates bin midpoint with bin
/// FDR over bins holding at least `min_trials` trials.
pub fn correlate<'a>(records: impl IntoIterator<Item = &'a TrialRecord>, settings: BinningSettings) -> Result<Correlation> {
    let bins = bin_records(records, settings)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = bins
        .iter()
        .filter(|b| b.trials >= settings.min_trials.max(1))
        .map(|b| (b.midpoint(), b.fdr.expect("non-empty bin")))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::FewerThanTwoBins(xs.len()));
    }
    Ok(Correlation {
        pearson_r: pearson(&xs, &ys),
        qualifying_bins: xs.len(),
        bins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCorrelation {
    pub method: Method,
    pub bins: Vec<BinStat>,
    pub qualifying_bins: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pearson_r: Option<f64>,
    /// Why `pearson_r` is absent, when it is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// [`correlate`] for each method's own records.
pub fn correlation_analysis(records: &[TrialRecord], methods: &[Method], settings: BinningSettings) -> Result<Vec<MethodCorrelation>> {
    methods
        .iter()
        .map(|&method| {
            let mine = || records.iter().filter(move |r| r.method == method);
            Ok(match correlate(mine(), settings) {
                Ok(c) => MethodCorrelation {
                    method,
                    note: c.pearson_r.is_none().then(|| "bin FDRs have zero variance".to_string()),
                    bins: c.bins,
                    qualifying_bins: c.qualifying_bins,
                    pearson_r: c.pearson_r,
                },
                Err(e @ Error::FewerThanTwoBins(q)) => MethodCorrelation {
                    method,
                    bins: bin_records(mine(), settings)?,
                    qualifying_bins: q,
                    pearson_r: None,
                    note: Some(e.to_string()),
                },
                Err(e) => return Err(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::trials::Verdict;
    use crate::sensitivity::RectRegion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(method: Method, g: f32, negative: bool) -> TrialRecord {
        TrialRecord {
            seed_id: "s".into(),
            method,
            transform: TransformKind::Hole,
            rect: RectRegion {
                top: 0,
                left: 0,
                height: 10,
                width: 10,
            },
            center_gradient: g,
            pred_before: 0,
            pred_after: negative as usize,
            verdict: if negative { Verdict::Negative } else { Verdict::Positive },
        }
    }

    #[test]
    fn fdr_examples() {
        assert!((fdr(7, 3).unwrap() - 0.30).abs() < 1e-12);
        assert_eq!(fdr(0, 5).unwrap(), 1.0);
        assert_eq!(fdr(0, 0).unwrap_err().name(), "UndefinedForZeroTrials");
    }

    #[test]
    fn summary_ratio_and_absent_fdr() {
        let mut records = vec![];
        for i in 0..10 {
            records.push(rec(Method::BaselineRandom, 0.5, i < 2));
            records.push(rec(Method::Max, 0.5, i < 4));
        }
        let s = summarize(&records, &[Method::BaselineRandom, Method::Max, Method::Avg], &[TransformKind::Hole]);
        assert_eq!(s[0].fdr, Some(0.2));
        assert_eq!(s[0].fdr_ratio, None);
        assert_eq!(s[1].fdr, Some(0.4));
        assert!((s[1].fdr_ratio.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(s[2].trials(), 0);
        assert_eq!(s[2].fdr, None);
        assert_eq!(s[2].fdr_ratio, None);
        let json = serde_json::to_value(&s[2]).unwrap();
        assert!(json.get("fdr").is_none());
    }

    #[test]
    fn perfectly_linear_bins_give_unit_correlation() {
        // bin i of 10 has midpoint (2i+1)/20; give it exactly that FDR over 20 trials
        let mut records = vec![];
        for i in 0..10 {
            let g = (2 * i + 1) as f32 / 20.0;
            for k in 0..20 {
                records.push(rec(Method::Max, g, k < 2 * i + 1));
            }
        }
        let c = correlate(&records, BinningSettings { num_bins: 10, min_trials: 20 }).unwrap();
        assert_eq!(c.qualifying_bins, 10);
        assert!((c.pearson_r.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_bin_is_an_error() {
        let records: Vec<_> = (0..100).map(|i| rec(Method::Max, 0.42, i % 3 == 0)).collect();
        assert_eq!(correlate(&records, BinningSettings::default()).unwrap_err().name(), "FewerThanTwoBins");
        let per_method = correlation_analysis(&records, &[Method::Max], BinningSettings::default()).unwrap();
        assert_eq!(per_method[0].pearson_r, None);
        assert!(per_method[0].note.as_ref().unwrap().contains("FewerThanTwoBins"));
    }

    #[test]
    fn last_bin_is_right_closed() {
        assert_eq!(bin_index(1.0, 20), 19);
        assert_eq!(bin_index(0.0, 20), 0);
        assert_eq!(bin_index(0.5, 20), 10);
    }

    #[test]
    fn monte_carlo_linear_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let records: Vec<_> = (0..100_000)
            .map(|_| {
                let g: f32 = rng.gen_range(0.0..=1.0);
                let neg = rng.gen_bool(g as f64);
                rec(Method::Best, g, neg)
            })
            .collect();
        let c = correlate(&records, BinningSettings::default()).unwrap();
        assert!(c.pearson_r.unwrap() > 0.95);
        let total: u64 = c.bins.iter().map(|b| b.trials).sum();
        assert_eq!(total, 100_000);
    }
}
