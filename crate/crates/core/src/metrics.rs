//! Evaluation quantities: safety S, trajectory complexity C, power term P,
//! agility A = P + C + S, paired normal-vs-enhanced comparisons and
//! predictor error reports.
//!
//! Sums are taken over sorted values so every statistic is independent of
//! step order, bit for bit.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::Mode;
use crate::predictor::{LabeledDataset, PredictorError, PredictorModel};
use crate::scalar::Real;
use crate::world::mission::{Outcome, SimulationTrace};
use crate::world::Complexity;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("unpaired runs: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for MetricsError {
    fn from(e: csv::Error) -> Self {
        MetricsError::Csv(e.to_string())
    }
}

impl From<std::io::Error> for MetricsError {
    fn from(e: std::io::Error) -> Self {
        MetricsError::Csv(e.to_string())
    }
}

fn sorted<T: Real>(xs: &[T]) -> Vec<T> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

/// Order-independent sum.
fn sum<T: Real>(xs: &[T]) -> T {
    sorted(xs).into_iter().fold(T::zero(), |a, b| a + b)
}

pub fn mean<T: Real>(xs: &[T]) -> Result<T, MetricsError> {
    if xs.is_empty() {
        return Err(MetricsError::Empty("mean"));
    }
    Ok(sum(xs) / T::from_usize(xs.len()).unwrap())
}

/// Population variance.
pub fn variance<T: Real>(xs: &[T]) -> Result<T, MetricsError> {
    let m = mean(xs)?;
    let sq: Vec<T> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    Ok(sum(&sq) / T::from_usize(xs.len()).unwrap())
}

pub fn median<T: Real>(xs: &[T]) -> Result<T, MetricsError> {
    if xs.is_empty() {
        return Err(MetricsError::Empty("median"));
    }
    let v = sorted(xs);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    })
}

fn min_of<T: Real>(xs: &[T], what: &'static str) -> Result<T, MetricsError> {
    xs.iter().copied().reduce(T::min).ok_or(MetricsError::Empty(what))
}

fn max_of<T: Real>(xs: &[T], what: &'static str) -> Result<T, MetricsError> {
    xs.iter().copied().reduce(T::max).ok_or(MetricsError::Empty(what))
}

/// S: smallest obstacle distance over the run, m.
pub fn safety_of<T: Real>(min_distances: &[T]) -> Result<T, MetricsError> {
    min_of(min_distances, "safety")
}

/// C: variance of the curvature series, (1/m)².
pub fn complexity_of<T: Real>(curvature: &[T]) -> Result<T, MetricsError> {
    variance(curvature).map_err(|_| MetricsError::Empty("complexity"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm<T> {
    /// W; the P of the agility sum.
    pub max: T,
    pub mean: T,
}

pub fn power_of<T: Real>(supplied: &[T]) -> Result<PowerTerm<T>, MetricsError> {
    Ok(PowerTerm {
        max: max_of(supplied, "power")?,
        mean: mean(supplied)?,
    })
}

pub fn safety(trace: &SimulationTrace) -> Result<f64, MetricsError> {
    let d: Vec<f64> = trace.records.iter().map(|r| r.min_distance).collect();
    safety_of(&d)
}

pub fn complexity(trace: &SimulationTrace) -> Result<f64, MetricsError> {
    let k: Vec<f64> = trace.records.iter().map(|r| r.curvature).collect();
    complexity_of(&k)
}

/// Supplied power (cells plus ultracapacitor to the load).
pub fn power_term(trace: &SimulationTrace) -> Result<PowerTerm<f64>, MetricsError> {
    let p: Vec<f64> = trace.records.iter().map(|r| r.decision.supplied()).collect();
    power_of(&p)
}

/// Scales for the dimensionless agility sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormRefs<T> {
    /// W
    pub power: T,
    /// (1/m)²
    pub complexity: T,
    /// m
    pub safety: T,
}

impl<T: Real> Default for NormRefs<T> {
    fn default() -> Self {
        Self {
            power: T::lit(30.0),
            complexity: T::one(),
            safety: T::lit(3.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgilityReport<T> {
    /// P, W (maximum supplied).
    pub power_term: T,
    pub power_mean: T,
    /// C, (1/m)².
    pub complexity: T,
    /// S, m.
    pub safety: T,
    /// P + C + S, mixed units.
    pub agility: T,
    /// P/P_ref + C/C_ref + S/S_ref.
    pub agility_norm: T,
}

impl<T: Real> AgilityReport<T> {
    pub fn new(power: PowerTerm<T>, complexity: T, safety: T, refs: &NormRefs<T>) -> Self {
        Self {
            power_term: power.max,
            power_mean: power.mean,
            complexity,
            safety,
            agility: power.max + complexity + safety,
            agility_norm: power.max / refs.power + complexity / refs.complexity + safety / refs.safety,
        }
    }
}

pub fn agility(trace: &SimulationTrace, refs: &NormRefs<f64>) -> Result<AgilityReport<f64>, MetricsError> {
    Ok(AgilityReport::new(power_term(trace)?, complexity(trace)?, safety(trace)?, refs))
}

/// What a comparison needs from one mission.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: Complexity,
    pub seed: u64,
    pub mode: Mode,
    pub outcome: Outcome,
    pub agility: AgilityReport<f64>,
    /// s
    pub flight_duration: f64,
    pub precharge_duration: f64,
    pub duration_with_precharge: f64,
    /// W
    pub mean_demand: f64,
    pub predicted_power: Option<f64>,
}

impl RunSummary {
    pub fn from_trace(scenario: Complexity, trace: &SimulationTrace, refs: &NormRefs<f64>) -> Result<Self, MetricsError> {
        Ok(Self {
            scenario,
            seed: trace.seed,
            mode: trace.mode,
            outcome: trace.outcome,
            agility: agility(trace, refs)?,
            flight_duration: trace.flight_duration(),
            precharge_duration: trace.precharge_duration(),
            duration_with_precharge: trace.duration_with_precharge(),
            mean_demand: trace.mean_demand(),
            predicted_power: trace.precharge.map(|p| p.predicted_power),
        })
    }
}

/// Compared quantities, in report order.
pub const METRICS: [&str; 7] = [
    "safety",
    "complexity",
    "agility",
    "agility_norm",
    "power",
    "duration",
    "duration_with_precharge",
];

fn metric(r: &RunSummary, i: usize) -> f64 {
    match i {
        0 => r.agility.safety,
        1 => r.agility.complexity,
        2 => r.agility.agility,
        3 => r.agility.agility_norm,
        4 => r.agility.power_term,
        5 => r.flight_duration,
        _ => r.duration_with_precharge,
    }
}

/// `100·(b − a)/a`; undefined for a zero baseline.
pub fn change_pct(a: f64, b: f64) -> Option<f64> {
    (a != 0.0 && a.is_finite() && b.is_finite()).then(|| 100.0 * (b - a) / a)
}

/// Two-sided exact sign test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub positive: usize,
    pub negative: usize,
    pub ties: usize,
    pub p_value: f64,
}

impl SignTest {
    pub fn from_diffs(diffs: &[f64]) -> Self {
        let positive = diffs.iter().filter(|&&d| d > 0.0).count();
        let negative = diffs.iter().filter(|&&d| d < 0.0).count();
        let ties = diffs.len() - positive - negative;
        Self {
            positive,
            negative,
            ties,
            p_value: sign_p_value(positive, negative),
        }
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

fn sign_p_value(pos: usize, neg: usize) -> f64 {
    let n = pos + neg;
    if n == 0 {
        return 1.0;
    }
    let k = pos.min(neg);
    let half = (n as f64) * 0.5f64.ln();
    let tail: f64 = (0..=k).map(|i| (ln_choose(n, i) + half).exp()).sum();
    (2.0 * tail).min(1.0)
}

/// Paired change of one quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Mean of the per-pair percentages.
    pub mean_change_pct: Option<f64>,
    /// Change of the means within each scenario, averaged over scenarios.
    pub scenario_change_pct: Option<f64>,
    /// Mean of `enhanced − normal`, in the quantity's unit.
    pub mean_difference: f64,
    /// Pairs with a non-zero baseline.
    pub defined_pairs: usize,
    pub sign_test: SignTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub safety: MetricSummary,
    pub complexity: MetricSummary,
    pub agility: MetricSummary,
    pub agility_norm: MetricSummary,
    pub power: MetricSummary,
    pub duration: MetricSummary,
    pub duration_with_precharge: MetricSummary,
}

impl Headline {
    pub fn get(&self, name: &str) -> Option<&MetricSummary> {
        Some(match name {
            "safety" => &self.safety,
            "complexity" => &self.complexity,
            "agility" => &self.agility,
            "agility_norm" => &self.agility_norm,
            "power" => &self.power,
            "duration" => &self.duration,
            "duration_with_precharge" => &self.duration_with_precharge,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Per run, in input order.
    pub values: Vec<f64>,
}

impl DurationStats {
    fn of(values: Vec<f64>) -> Result<Self, MetricsError> {
        Ok(Self {
            mean: mean(&values)?,
            median: median(&values)?,
            min: min_of(&values, "duration")?,
            max: max_of(&values, "duration")?,
            values,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeAggregate {
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub duration: DurationStats,
    pub duration_with_precharge: DurationStats,
    pub mean_safety: f64,
    pub mean_complexity: f64,
    pub mean_agility: f64,
    pub mean_agility_norm: f64,
    pub mean_power_max: f64,
    pub mean_power_mean: f64,
}

impl ModeAggregate {
    pub fn of(runs: &[&RunSummary]) -> Result<Self, MetricsError> {
        if runs.is_empty() {
            return Err(MetricsError::Empty("mode aggregate"));
        }
        let col = |f: fn(&RunSummary) -> f64| -> Vec<f64> { runs.iter().map(|r| f(r)).collect() };
        let successes = runs.iter().filter(|r| r.outcome == Outcome::Success).count();
        Ok(Self {
            runs: runs.len(),
            successes,
            success_rate: successes as f64 / runs.len() as f64,
            duration: DurationStats::of(col(|r| r.flight_duration))?,
            duration_with_precharge: DurationStats::of(col(|r| r.duration_with_precharge))?,
            mean_safety: mean(&col(|r| r.agility.safety))?,
            mean_complexity: mean(&col(|r| r.agility.complexity))?,
            mean_agility: mean(&col(|r| r.agility.agility))?,
            mean_agility_norm: mean(&col(|r| r.agility.agility_norm))?,
            mean_power_max: mean(&col(|r| r.agility.power_term))?,
            mean_power_mean: mean(&col(|r| r.agility.power_mean))?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDelta {
    pub scenario: Complexity,
    pub seed: u64,
    pub normal_outcome: Outcome,
    pub enhanced_outcome: Outcome,
    /// Percent change per quantity, in [`METRICS`] order.
    pub change_pct: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBreakdown {
    pub scenario: Complexity,
    pub normal: ModeAggregate,
    pub enhanced: ModeAggregate,
    pub headline: Headline,
}

/// Published headline values, kept next to the measured ones for reading;
/// nothing is checked against them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub safety_change_pct: f64,
    pub complexity_change_pct: f64,
    pub agility_change_pct: f64,
    pub duration_change_pct: [f64; 2],
    pub duration_median: [f64; 2],
    pub mean_curvature_enhanced: [f64; 2],
    pub mean_curvature_normal: f64,
    pub safety_scenario_one: [f64; 2],
    pub max_error_ratio_pct: f64,
    pub peak_error_ratio_pct: f64,
}

impl Default for ReferenceValues {
    fn default() -> Self {
        Self {
            safety_change_pct: 58.16,
            complexity_change_pct: 84.86,
            agility_change_pct: 40.25,
            duration_change_pct: [-10.45, -9.05],
            duration_median: [1.97, 2.18],
            mean_curvature_enhanced: [1.53, 7.60],
            mean_curvature_normal: 0.08,
            safety_scenario_one: [3.18, 2.95],
            max_error_ratio_pct: 58.34,
            peak_error_ratio_pct: 31.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub pairs: Vec<PairDelta>,
    pub normal: ModeAggregate,
    pub enhanced: ModeAggregate,
    /// Enhanced minus normal.
    pub success_rate_delta: f64,
    pub headline: Headline,
    pub per_scenario: Vec<ScenarioBreakdown>,
    pub reference: ReferenceValues,
}

type Key = (Complexity, u64);

fn key(r: &RunSummary) -> Key {
    (r.scenario, r.seed)
}

fn key_order(a: &Key, b: &Key) -> Ordering {
    (a.0 as u8, a.1).cmp(&(b.0 as u8, b.1))
}

fn pair_up<'a>(
    normal: &'a [RunSummary],
    enhanced: &'a [RunSummary],
) -> Result<Vec<(&'a RunSummary, &'a RunSummary)>, MetricsError> {
    if normal.is_empty() {
        return Err(MetricsError::Empty("comparison"));
    }
    if normal.len() != enhanced.len() {
        return Err(MetricsError::Mismatch(format!("{} vs {} runs", normal.len(), enhanced.len())));
    }
    let sort = |v: &'a [RunSummary]| {
        let mut s: Vec<&RunSummary> = v.iter().collect();
        s.sort_by(|a, b| key_order(&key(a), &key(b)));
        s
    };
    let (a, b) = (sort(normal), sort(enhanced));
    for w in a.windows(2) {
        if key(w[0]) == key(w[1]) {
            return Err(MetricsError::Mismatch(format!("duplicate {:?} seed {}", w[0].scenario, w[0].seed)));
        }
    }
    a.into_iter()
        .zip(b)
        .map(|(n, e)| {
            if key(n) == key(e) {
                Ok((n, e))
            } else {
                Err(MetricsError::Mismatch(format!(
                    "{} seed {} has no partner (found {} seed {})",
                    n.scenario.label(),
                    n.seed,
                    e.scenario.label(),
                    e.seed
                )))
            }
        })
        .collect()
}

fn summarize(pairs: &[(&RunSummary, &RunSummary)], i: usize) -> Result<MetricSummary, MetricsError> {
    let pct: Vec<f64> = pairs
        .iter()
        .filter_map(|(n, e)| change_pct(metric(n, i), metric(e, i)))
        .collect();
    let diffs: Vec<f64> = pairs.iter().map(|(n, e)| metric(e, i) - metric(n, i)).collect();
    let mut scenarios: Vec<Complexity> = pairs.iter().map(|(n, _)| n.scenario).collect();
    scenarios.dedup();
    let per_scenario: Vec<f64> = scenarios
        .iter()
        .filter_map(|&s| {
            let n: Vec<f64> = pairs.iter().filter(|p| p.0.scenario == s).map(|p| metric(p.0, i)).collect();
            let e: Vec<f64> = pairs.iter().filter(|p| p.0.scenario == s).map(|p| metric(p.1, i)).collect();
            change_pct(mean(&n).ok()?, mean(&e).ok()?)
        })
        .collect();
    Ok(MetricSummary {
        mean_change_pct: mean(&pct).ok(),
        scenario_change_pct: mean(&per_scenario).ok(),
        mean_difference: mean(&diffs)?,
        defined_pairs: pct.len(),
        sign_test: SignTest::from_diffs(&diffs),
    })
}

fn headline(pairs: &[(&RunSummary, &RunSummary)]) -> Result<Headline, MetricsError> {
    Ok(Headline {
        safety: summarize(pairs, 0)?,
        complexity: summarize(pairs, 1)?,
        agility: summarize(pairs, 2)?,
        agility_norm: summarize(pairs, 3)?,
        power: summarize(pairs, 4)?,
        duration: summarize(pairs, 5)?,
        duration_with_precharge: summarize(pairs, 6)?,
    })
}

/// Paired comparison on matched (scenario, seed) runs; `enhanced` is the
/// treatment, `normal` the baseline of every percentage.
pub fn compare(normal: &[RunSummary], enhanced: &[RunSummary]) -> Result<Comparison, MetricsError> {
    let pairs = pair_up(normal, enhanced)?;
    let ns: Vec<&RunSummary> = pairs.iter().map(|p| p.0).collect();
    let es: Vec<&RunSummary> = pairs.iter().map(|p| p.1).collect();
    let (n_agg, e_agg) = (ModeAggregate::of(&ns)?, ModeAggregate::of(&es)?);
    let mut scenarios: Vec<Complexity> = ns.iter().map(|r| r.scenario).collect();
    scenarios.dedup();
    let per_scenario = scenarios
        .into_iter()
        .map(|s| {
            let sub: Vec<_> = pairs.iter().copied().filter(|p| p.0.scenario == s).collect();
            let ns: Vec<&RunSummary> = sub.iter().map(|p| p.0).collect();
            let es: Vec<&RunSummary> = sub.iter().map(|p| p.1).collect();
            Ok(ScenarioBreakdown {
                scenario: s,
                normal: ModeAggregate::of(&ns)?,
                enhanced: ModeAggregate::of(&es)?,
                headline: headline(&sub)?,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Ok(Comparison {
        pairs: pairs
            .iter()
            .map(|(n, e)| PairDelta {
                scenario: n.scenario,
                seed: n.seed,
                normal_outcome: n.outcome,
                enhanced_outcome: e.outcome,
                change_pct: (0..METRICS.len()).map(|i| change_pct(metric(n, i), metric(e, i))).collect(),
            })
            .collect(),
        success_rate_delta: e_agg.success_rate - n_agg.success_rate,
        normal: n_agg,
        enhanced: e_agg,
        headline: headline(&pairs)?,
        per_scenario,
        reference: ReferenceValues::default(),
    })
}

/// Top fraction of labels that forms the peak-demand window.
pub const PEAK_FRACTION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendError {
    pub name: String,
    /// W
    pub mae: f64,
    pub max_error: f64,
    /// MAE over the peak-demand rows.
    pub peak_window_error: f64,
}

/// `numerator / denominator` for each error measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRatio {
    pub numerator: String,
    pub denominator: String,
    pub mae: Option<f64>,
    pub max_error: Option<f64>,
    pub peak_window_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub rows: usize,
    pub peak_rows: usize,
    /// Smallest label inside the peak window, W.
    pub peak_threshold: f64,
    pub backends: Vec<BackendError>,
    pub ratios: Vec<ErrorRatio>,
    /// Published max-error and peak-error ratios, percent; reading aid only.
    pub reference_ratio_pct: [f64; 2],
}

/// Row indices of the peak-demand window: the largest labels, ties by index.
pub fn peak_rows<T: Real>(data: &LabeledDataset<T>) -> Vec<usize> {
    let n = data.len();
    let k = ((n as f64 * PEAK_FRACTION).ceil() as usize).clamp(1.min(n), n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        data.rows[b]
            .label
            .partial_cmp(&data.rows[a].label)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| a / b)
}

/// Errors of each named backend on `test`, plus ratios for every pair in
/// list order (earlier over later).
pub fn mae_report<T: Real>(backends: &[(&str, &PredictorModel<T>)], test: &LabeledDataset<T>) -> Result<MaeReport, MetricsError> {
    if test.is_empty() {
        return Err(MetricsError::Empty("test set"));
    }
    let peak = peak_rows(test);
    let errs = backends
        .iter()
        .map(|(name, model)| {
            let e: Vec<f64> = crate::predictor::abs_errors(model, test)?
                .into_iter()
                .map(Real::to_f64_lossy)
                .collect();
            let at_peak: Vec<f64> = peak.iter().map(|&i| e[i]).collect();
            Ok(BackendError {
                name: name.to_string(),
                mae: mean(&e)?,
                max_error: max_of(&e, "errors")?,
                peak_window_error: mean(&at_peak)?,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    let mut ratios = Vec::new();
    for i in 0..errs.len() {
        for j in i + 1..errs.len() {
            let (a, b) = (&errs[i], &errs[j]);
            ratios.push(ErrorRatio {
                numerator: a.name.clone(),
                denominator: b.name.clone(),
                mae: ratio(a.mae, b.mae),
                max_error: ratio(a.max_error, b.max_error),
                peak_window_error: ratio(a.peak_window_error, b.peak_window_error),
            });
        }
    }
    let threshold = peak.iter().map(|&i| test.rows[i].label.to_f64_lossy()).fold(f64::INFINITY, f64::min);
    Ok(MaeReport {
        rows: test.len(),
        peak_rows: peak.len(),
        peak_threshold: threshold,
        backends: errs,
        ratios,
        reference_ratio_pct: [58.34, 31.25],
    })
}

/// `backend,row,label,prediction,abs_error,peak` per test row and backend.
pub fn write_mae_csv<T: Real, W: Write>(
    backends: &[(&str, &PredictorModel<T>)],
    test: &LabeledDataset<T>,
    out: W,
) -> Result<(), MetricsError> {
    let peak = peak_rows(test);
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["backend", "row", "label_w", "prediction_w", "abs_error_w", "peak"])?;
    for (name, model) in backends {
        for (i, r) in test.rows.iter().enumerate() {
            let p = model.predict(&r.features)?.to_f64_lossy();
            let y = r.label.to_f64_lossy();
            wtr.write_record([
                name.to_string(),
                i.to_string(),
                y.to_string(),
                p.to_string(),
                (p - y).abs().to_string(),
                u8::from(peak.binary_search(&i).is_ok()).to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Per-step power of each run:
/// `scenario,seed,mode,t,demand_w,supplied_w,p_fc_batt,p_uc,p_charge,soc_uc,brownout`.
pub fn write_power_csv<'a, W: Write>(
    runs: impl IntoIterator<Item = (Complexity, &'a SimulationTrace)>,
    out: W,
) -> Result<(), MetricsError> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "scenario", "seed", "mode", "t", "demand_w", "supplied_w", "p_fc_batt", "p_uc", "p_charge", "soc_uc", "brownout",
    ])?;
    for (scenario, trace) in runs {
        for r in &trace.records {
            let d = &r.decision;
            wtr.write_record([
                scenario.label().to_string(),
                trace.seed.to_string(),
                trace.mode.label().to_string(),
                r.t.to_string(),
                r.demand.to_string(),
                d.supplied().to_string(),
                d.p_fc_batt.to_string(),
                d.p_uc.to_string(),
                d.p_charge.to_string(),
                r.soc_uc.to_string(),
                u8::from(d.brownout).to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// `scenario,seed,mode,outcome,flight_s,precharge_s,total_s`.
pub fn write_durations_csv<W: Write>(runs: &[RunSummary], out: W) -> Result<(), MetricsError> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["scenario", "seed", "mode", "outcome", "flight_s", "precharge_s", "total_s"])?;
    for r in runs {
        wtr.write_record([
            r.scenario.label().to_string(),
            r.seed.to_string(),
            r.mode.label().to_string(),
            r.outcome.label().to_string(),
            r.flight_duration.to_string(),
            r.precharge_duration.to_string(),
            r.duration_with_precharge.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{FeatureVector, Row};

    fn run(scenario: Complexity, seed: u64, mode: Mode, s: f64, c: f64, p: f64, t: f64) -> RunSummary {
        let refs = NormRefs::default();
        RunSummary {
            scenario,
            seed,
            mode,
            outcome: Outcome::Success,
            agility: AgilityReport::new(PowerTerm { max: p, mean: p / 2.0 }, c, s, &refs),
            flight_duration: t,
            precharge_duration: 0.0,
            duration_with_precharge: t,
            mean_demand: p / 2.0,
            predicted_power: None,
        }
    }

    #[test]
    fn variance_of_zero_one() {
        assert_eq!(variance(&[0.0, 1.0]).unwrap(), 0.25);
        assert_eq!(complexity_of(&[0.0f64; 5]).unwrap(), 0.0);
    }

    #[test]
    fn empty_inputs_fail() {
        assert!(safety_of::<f64>(&[]).is_err());
        assert!(complexity_of::<f64>(&[]).is_err());
        assert!(power_of::<f64>(&[]).is_err());
    }

    #[test]
    fn agility_is_the_sum() {
        let r = AgilityReport::new(PowerTerm { max: 10.0, mean: 5.0 }, 2.0, 3.0, &NormRefs::default());
        assert_eq!(r.agility, 15.0);
        assert_eq!(r.agility_norm, 10.0 / 30.0 + 2.0 + 1.0);
    }

    #[test]
    fn hover_at_three_metres() {
        assert_eq!(safety_of(&[3.0f32; 8]).unwrap(), 3.0);
    }

    #[test]
    fn identical_sets_show_no_change() {
        let a: Vec<_> = (1..=3)
            .map(|s| run(Complexity::LowDynamic, s, Mode::Normal, 1.0 + s as f64, 0.1, 20.0, 12.0))
            .collect();
        let c = compare(&a, &a).unwrap();
        for name in METRICS {
            let m = c.headline.get(name).unwrap();
            assert_eq!(m.mean_change_pct, Some(0.0), "{name}");
            assert_eq!(m.sign_test.ties, 3);
            assert_eq!(m.sign_test.p_value, 1.0);
        }
        assert_eq!(c.success_rate_delta, 0.0);
    }

    #[test]
    fn mismatched_seeds_rejected() {
        let a = vec![run(Complexity::LowDynamic, 1, Mode::Normal, 1.0, 0.1, 20.0, 12.0)];
        let b = vec![run(Complexity::LowDynamic, 2, Mode::AgilityEnhanced, 1.0, 0.1, 20.0, 12.0)];
        assert!(matches!(compare(&a, &b), Err(MetricsError::Mismatch(_))));
        let c = vec![run(Complexity::HighDynamic, 1, Mode::AgilityEnhanced, 1.0, 0.1, 20.0, 12.0)];
        assert!(compare(&a, &c).is_err());
        assert!(compare(&a, &[]).is_err());
        assert!(compare(&[], &[]).is_err());
    }

    #[test]
    fn one_collision_lowers_success_rate() {
        let a: Vec<_> = (1..=4)
            .map(|s| run(Complexity::HighDynamic, s, Mode::Normal, 1.0, 0.1, 20.0, 12.0))
            .collect();
        let mut b = a.clone();
        b[2].outcome = Outcome::Collision;
        let c = compare(&a, &b).unwrap();
        assert_eq!(c.enhanced.successes, 3);
        assert_eq!(c.success_rate_delta, -0.25);
    }

    #[test]
    fn per_pair_and_per_scenario_aggregation() {
        // Low: S 1 → 2 (+100 %). High: S 2 → 2 and 4 → 2 (0 %, −50 %).
        let n = vec![
            run(Complexity::LowDynamic, 1, Mode::Normal, 1.0, 0.1, 20.0, 12.0),
            run(Complexity::HighDynamic, 1, Mode::Normal, 2.0, 0.1, 20.0, 12.0),
            run(Complexity::HighDynamic, 2, Mode::Normal, 4.0, 0.1, 20.0, 12.0),
        ];
        let e = vec![
            run(Complexity::HighDynamic, 2, Mode::AgilityEnhanced, 2.0, 0.1, 20.0, 12.0),
            run(Complexity::LowDynamic, 1, Mode::AgilityEnhanced, 2.0, 0.1, 20.0, 12.0),
            run(Complexity::HighDynamic, 1, Mode::AgilityEnhanced, 2.0, 0.1, 20.0, 12.0),
        ];
        let c = compare(&n, &e).unwrap();
        let s = &c.headline.safety;
        assert!((s.mean_change_pct.unwrap() - 50.0 / 3.0).abs() < 1e-12);
        // Low +100 %, high (2 − 3)/3 = −33.3 %.
        assert!((s.scenario_change_pct.unwrap() - (100.0 - 100.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!((s.sign_test.positive, s.sign_test.negative, s.sign_test.ties), (1, 1, 1));
        assert_eq!(c.per_scenario.len(), 2);
        assert_eq!(c.pairs[0].scenario, Complexity::LowDynamic);
    }

    #[test]
    fn zero_baseline_is_undefined() {
        let n = vec![run(Complexity::LowDynamic, 1, Mode::Normal, 1.0, 0.0, 20.0, 12.0)];
        let e = vec![run(Complexity::LowDynamic, 1, Mode::AgilityEnhanced, 1.0, 0.5, 20.0, 12.0)];
        let c = compare(&n, &e).unwrap();
        assert_eq!(c.headline.complexity.mean_change_pct, None);
        assert_eq!(c.headline.complexity.defined_pairs, 0);
        assert_eq!(c.headline.complexity.mean_difference, 0.5);
    }

    #[test]
    fn sign_test_matches_binomial_table() {
        // 9 of 10 positive: 2·(1 + 10)/1024.
        let d: Vec<f64> = (0..10).map(|i| if i == 0 { -1.0 } else { 1.0 }).collect();
        let t = SignTest::from_diffs(&d);
        assert!((t.p_value - 22.0 / 1024.0).abs() < 1e-12);
        assert_eq!(SignTest::from_diffs(&[1.0, -1.0]).p_value, 1.0);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
    }

    #[test]
    fn peak_window_takes_top_labels() {
        let rows = (0..20)
            .map(|i| Row {
                features: FeatureVector {
                    velocity: 1.0,
                    length_d: 1.0,
                    mean_abs_curvature: 0.0,
                },
                label: ((i * 7) % 20) as f64,
            })
            .collect();
        let d = LabeledDataset::new(rows).unwrap();
        let p = peak_rows(&d);
        let labels: Vec<f64> = p.iter().map(|&i| d.rows[i].label).collect();
        assert_eq!(p.len(), 2);
        assert!(labels.contains(&19.0) && labels.contains(&18.0));
    }
}
