use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{run_simulation, SimMetrics, TesterKind, TesterModel};
use crate::app::AppModel;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::stg::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TesterSummary {
    pub tester: TesterModel,
    pub runs: usize,
    pub full_coverage_runs: usize,
    /// Steps to full coverage; a run that never got there counts as the
    /// whole budget.
    pub median_steps: f64,
    pub q1_steps: f64,
    pub q3_steps: f64,
    pub median_coverage_at_budget: f64,
    pub q1_coverage_at_budget: f64,
    pub q3_coverage_at_budget: f64,
    pub median_repeated_visits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Savings {
    pub baseline: String,
    /// 1 - median(guided:1.0) / median(baseline), in step counts.
    pub savings: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub version: String,
    pub budget: u64,
    pub n_seeds: usize,
    pub testers: Vec<TesterSummary>,
    pub savings: Vec<Savings>,
    /// Per tester name, one entry per seed in seed order.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub runs: BTreeMap<String, Vec<SimMetrics>>,
}

impl ComparisonReport {
    pub fn summary(&self, kind: TesterKind) -> Option<&TesterSummary> {
        self.testers.iter().find(|t| t.tester.kind == kind)
    }

    pub fn savings_vs(&self, baseline: &str) -> Option<f64> {
        self.savings
            .iter()
            .find(|s| s.baseline == baseline)
            .map(|s| s.savings)
    }

    pub fn without_runs(mut self) -> Self {
        self.runs.clear();
        self
    }
}

/// Linearly interpolated quantile of unsorted samples, `q` in [0, 1].
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn summarize(tester: TesterModel, runs: &[SimMetrics]) -> TesterSummary {
    let steps: Vec<f64> = runs.iter().map(|m| m.steps_taken as f64).collect();
    let cov: Vec<f64> = runs.iter().map(SimMetrics::state_coverage).collect();
    let rep: Vec<f64> = runs.iter().map(|m| m.repeated_visits as f64).collect();
    TesterSummary {
        tester,
        runs: runs.len(),
        full_coverage_runs: runs.iter().filter(|m| m.reached_full_coverage).count(),
        median_steps: quantile(&steps, 0.5),
        q1_steps: quantile(&steps, 0.25),
        q3_steps: quantile(&steps, 0.75),
        median_coverage_at_budget: quantile(&cov, 0.5),
        q1_coverage_at_budget: quantile(&cov, 0.25),
        q3_coverage_at_budget: quantile(&cov, 0.75),
        median_repeated_visits: quantile(&rep, 0.5),
    }
}

/// Runs every tester for seeds `0..n_seeds`. Cells run under `exec`; the
/// report is assembled in tester then seed order either way.
pub fn compare_strategies(
    app: &AppModel,
    testers: &[TesterModel],
    budget: u64,
    n_seeds: usize,
    exec: Execution,
) -> Result<ComparisonReport> {
    if n_seeds == 0 {
        return Err(Error::Param("n_seeds must be at least 1".into()));
    }
    if testers.is_empty() {
        return Err(Error::Param("at least one tester model is required".into()));
    }
    let reference = TesterModel::guided(1.0);
    let mut all: Vec<TesterModel> = testers.to_vec();
    let has_reference = testers.iter().any(|t| t.kind == reference.kind);
    if !has_reference {
        all.push(reference);
    }
    let cells: Vec<(usize, u64)> = (0..all.len())
        .flat_map(|t| (0..n_seeds as u64).map(move |s| (t, s)))
        .collect();
    let results = par::map(exec, &cells, |&(t, seed)| {
        run_simulation(app, all[t], budget, seed)
    });
    let results: Vec<SimMetrics> = results.into_iter().collect::<Result<_>>()?;

    let per_tester: Vec<&[SimMetrics]> = results.chunks(n_seeds).collect();
    let summaries: Vec<TesterSummary> = all
        .iter()
        .zip(&per_tester)
        .map(|(t, r)| summarize(*t, r))
        .collect();
    let guided_median = summaries
        .iter()
        .find(|s| s.tester.kind == reference.kind)
        .expect("reference tester always runs")
        .median_steps;
    let savings = summaries[..testers.len()]
        .iter()
        .map(|s| Savings {
            baseline: s.tester.kind.to_string(),
            savings: if s.median_steps > 0.0 {
                1.0 - guided_median / s.median_steps
            } else {
                0.0
            },
        })
        .collect();
    let runs = testers
        .iter()
        .zip(&per_tester)
        .map(|(t, r)| (t.kind.to_string(), r.to_vec()))
        .collect();
    Ok(ComparisonReport {
        version: FORMAT_VERSION.to_owned(),
        budget,
        n_seeds,
        testers: summaries.into_iter().take(testers.len()).collect(),
        savings,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app::{generate_random_app, AppParams};

    #[test]
    fn quantiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&[7.0], 0.5), 7.0);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn guided_against_itself_saves_nothing() {
        let app = generate_random_app(&AppParams::default()).unwrap();
        let r = compare_strategies(
            &app,
            &[TesterModel::guided(1.0)],
            1_000,
            3,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(r.savings_vs("guided:1.0"), Some(0.0));
        assert_eq!(r.testers.len(), 1);
    }

    #[test]
    fn modes_agree_and_reference_is_implicit() {
        let app = generate_random_app(&AppParams {
            states_per_activity: 6,
            ..AppParams::default()
        })
        .unwrap();
        let testers = [
            TesterModel::new(TesterKind::Random),
            TesterModel::new(TesterKind::Dfs),
        ];
        let a = compare_strategies(&app, &testers, 5_000, 8, Execution::Sequential).unwrap();
        let b = compare_strategies(&app, &testers, 5_000, 8, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.testers.len(), 2);
        assert_eq!(a.runs["random"].len(), 8);
        assert!(a.savings_vs("random").unwrap() > 0.0);
        assert!(a.savings_vs("dfs").is_some());
        assert!(a.without_runs().runs.is_empty());
    }

    #[test]
    fn rejects_empty_inputs() {
        let app = generate_random_app(&AppParams::default()).unwrap();
        assert!(compare_strategies(&app, &[], 10, 1, Execution::Sequential).is_err());
        assert!(compare_strategies(
            &app,
            &[TesterModel::guided(1.0)],
            10,
            0,
            Execution::Sequential
        )
        .is_err());
    }
}
