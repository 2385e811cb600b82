//! Primal gap, primal integral, arm-selection distribution and CSV reports.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::destroy::OperatorSpec;
use crate::engine::SearchTrace;

/// Guard against division by a zero reference value.
pub const GAP_EPS: f64 = 1e-8;

/// Normalized distance between an incumbent and the reference objective.
/// A missing incumbent or a sign mismatch counts as 1. Not clamped.
pub fn primal_gap(v: Option<f64>, v_star: f64) -> f64 {
    match v {
        Some(v) if v * v_star >= 0.0 => (v - v_star).abs() / v_star.abs().max(GAP_EPS),
        _ => 1.0,
    }
}

/// Incumbent objective over time, as a step function.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSeries {
    breakpoints: Vec<(f64, f64)>,
    v_star: f64,
    horizon: f64,
}

impl GapSeries {
    /// Breakpoints must have strictly increasing times, all within `horizon`.
    pub fn new(breakpoints: Vec<(f64, f64)>, v_star: f64, horizon: f64) -> Option<Self> {
        let increasing = breakpoints.windows(2).all(|w| w[0].0 < w[1].0);
        let within = breakpoints.last().is_none_or(|b| b.0 <= horizon);
        let nonneg = breakpoints.first().is_none_or(|b| b.0 >= 0.0);
        (increasing && within && nonneg).then_some(GapSeries {
            breakpoints,
            v_star,
            horizon,
        })
    }

    pub fn from_trace(trace: &SearchTrace, v_star: f64, horizon: f64) -> Option<Self> {
        Self::new(trace.best_breakpoints(), v_star, horizon)
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Gap at time `t`.
    pub fn gap_at(&self, t: f64) -> f64 {
        let v = self.breakpoints.iter().take_while(|b| b.0 <= t).last().map(|b| b.1);
        primal_gap(v, self.v_star)
    }

    pub fn final_gap(&self) -> f64 {
        primal_gap(self.breakpoints.last().map(|b| b.1), self.v_star)
    }
}

/// Integral of the gap over `[0, horizon]`; the gap is 1 before the first
/// breakpoint.
pub fn primal_integral(series: &GapSeries) -> f64 {
    let mut total = 0.0;
    let mut t = 0.0;
    let mut gap = 1.0;
    for &(time, v) in &series.breakpoints {
        total += gap * (time - t);
        t = time;
        gap = primal_gap(Some(v), series.v_star);
    }
    total + gap * (series.horizon - t)
}

/// Share of iterations per arm label, in percent. With `group`, size
/// variants of one operator are merged under the operator's display name.
pub fn arm_distribution(trace: &SearchTrace, group: bool) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for e in &trace.events {
        let label = &trace.arms[e.arm];
        let key = if group {
            label
                .parse::<OperatorSpec>()
                .map(|s| s.kind().display_name().to_string())
                .unwrap_or_else(|_| label.clone())
        } else {
            label.clone()
        };
        *counts.entry(key).or_default() += 1;
    }
    let n = trace.events.len() as f64;
    counts
        .into_iter()
        .map(|(k, c)| (k, 100.0 * c as f64 / n))
        .collect()
}

#[derive(Serialize)]
struct TraceRow<'a> {
    iteration: u64,
    wall_time_s: f64,
    arm: &'a str,
    candidate_obj: Option<f64>,
    outcome: &'static str,
    accepted: bool,
    current_obj: f64,
    best_obj: f64,
    temperature: Option<f64>,
}

pub fn write_trace_csv(trace: &SearchTrace, out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if trace.events.is_empty() {
        w.write_record([
            "iteration",
            "wall_time_s",
            "arm",
            "candidate_obj",
            "outcome",
            "accepted",
            "current_obj",
            "best_obj",
            "temperature",
        ])?;
    }
    for e in &trace.events {
        w.serialize(TraceRow {
            iteration: e.iteration,
            wall_time_s: e.time,
            arm: &trace.arms[e.arm],
            candidate_obj: e.candidate,
            outcome: e.outcome.as_str(),
            accepted: e.accepted,
            current_obj: e.current,
            best_obj: e.best,
            temperature: e.temperature,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_distribution_csv(dist: &BTreeMap<String, f64>, out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["arm", "percent"])?;
    for (arm, pct) in dist {
        w.write_record([arm.as_str(), &format!("{pct:.4}")])?;
    }
    w.flush()?;
    Ok(())
}

/// One benchmark run. `pg_final` and `pi` are absent when the run failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub instance: String,
    pub family: String,
    pub seed: u64,
    pub pg_final: Option<f64>,
    pub pi: Option<f64>,
    pub time_to_first_feasible: Option<f64>,
    pub status: String,
    /// Reference objective the gaps are measured against.
    pub v_star: Option<f64>,
    /// Whether `v_star` is a proven optimum rather than the best known value.
    pub v_star_certified: bool,
}

pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Per-run rows followed by `mean` and `std` rows over the successful runs.
pub fn write_bench_csv(rows: &[BenchRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "instance",
            "family",
            "seed",
            "pg_final",
            "pi",
            "time_to_first_feasible",
            "status",
            "v_star",
            "v_star_certified",
        ])?;
    }
    let pg: Vec<f64> = rows.iter().filter_map(|r| r.pg_final).collect();
    let pi: Vec<f64> = rows.iter().filter_map(|r| r.pi).collect();
    let ttf: Vec<f64> = rows.iter().filter_map(|r| r.time_to_first_feasible).collect();
    let (pg, pi, ttf) = (mean_std(&pg), mean_std(&pi), mean_std(&ttf));
    let cell = |x: Option<(f64, f64)>, pick: fn((f64, f64)) -> f64| x.map(|p| pick(p).to_string()).unwrap_or_default();
    for (name, pick) in [("mean", (|p: (f64, f64)| p.0) as fn(_) -> _), ("std", |p: (f64, f64)| p.1)] {
        w.write_record([
            name,
            "",
            "",
            &cell(pg, pick),
            &cell(pi, pick),
            &cell(ttf, pick),
            "",
            "",
            "",
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acceptance::OutcomeKind;
    use crate::engine::TraceEvent;

    fn event(arm: usize, best: f64) -> TraceEvent {
        TraceEvent {
            iteration: 1,
            time: 1.0,
            arm,
            candidate: Some(best),
            outcome: OutcomeKind::Accepted,
            accepted: true,
            current: best,
            best,
            temperature: None,
            error: None,
        }
    }

    #[test]
    fn gap_formula() {
        assert_eq!(primal_gap(Some(-8.0), -8.0), 0.0);
        assert_eq!(primal_gap(Some(-7.0), -8.0), 0.125);
        assert_eq!(primal_gap(Some(3.0), -8.0), 1.0);
        assert_eq!(primal_gap(None, -8.0), 1.0);
        assert_eq!(primal_gap(Some(-20.0), -8.0), 1.5);
        assert_eq!(primal_gap(Some(0.0), 0.0), 0.0);
        assert_eq!(primal_gap(Some(1e-9), 0.0), 0.1);
    }

    #[test]
    fn integral_examples() {
        // v* = -8: gap 0.5 at v = -4, gap 0.25 at v = -6.
        let s = GapSeries::new(vec![(0.0, -4.0), (10.0, -6.0)], -8.0, 20.0).unwrap();
        assert_eq!(primal_integral(&s), 7.5);
        let never = GapSeries::new(vec![], -8.0, 100.0).unwrap();
        assert_eq!(primal_integral(&never), 100.0);
        let exact = GapSeries::new(vec![(0.0, -8.0)], -8.0, 55.0).unwrap();
        assert_eq!(primal_integral(&exact), 0.0);
        let late = GapSeries::new(vec![(4.0, -8.0)], -8.0, 10.0).unwrap();
        assert_eq!(primal_integral(&late), 4.0);
        assert_eq!(late.gap_at(3.9), 1.0);
        assert_eq!(late.gap_at(4.0), 0.0);
    }

    #[test]
    fn series_validation() {
        assert!(GapSeries::new(vec![(1.0, 0.0), (1.0, -1.0)], -1.0, 5.0).is_none());
        assert!(GapSeries::new(vec![(6.0, 0.0)], -1.0, 5.0).is_none());
    }

    #[test]
    fn distribution_shapes() {
        let labels = ["lb_10", "lb_25", "rins_25", "rins_50"];
        let mut trace = SearchTrace {
            arms: labels.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        };
        for a in 0..4 {
            for _ in 0..25 {
                trace.events.push(event(a, 0.0));
            }
        }
        let grouped = arm_distribution(&trace, true);
        assert_eq!(grouped.len(), 2);
        assert!(grouped.values().all(|&p| p == 50.0));
        let flat = arm_distribution(&trace, false);
        assert_eq!(flat.len(), 4);
        assert!((flat.values().sum::<f64>() - 100.0).abs() < 0.01);
        assert!(arm_distribution(&SearchTrace::default(), false).is_empty());
    }

    #[test]
    fn trace_csv_columns() {
        let trace = SearchTrace {
            arms: vec!["crossover".into()],
            initial: vec![],
            events: vec![event(0, -3.0)],
        };
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iteration,wall_time_s,arm,candidate_obj,outcome,accepted,current_obj,best_obj,temperature"
        );
        assert_eq!(lines.next().unwrap(), "1,1.0,crossover,-3.0,accepted,true,-3.0,-3.0,");
    }

    #[test]
    fn bench_csv_aggregates() {
        let row = |pg, pi| BenchRow {
            instance: "a".into(),
            family: "mk".into(),
            seed: 1,
            pg_final: Some(pg),
            pi: Some(pi),
            time_to_first_feasible: Some(0.0),
            status: "completed".into(),
            v_star: Some(-1.0),
            v_star_certified: true,
        };
        let mut buf = Vec::new();
        write_bench_csv(&[row(0.0, 1.0), row(0.5, 3.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[3], "mean,,,0.25,2,0,,,");
        assert_eq!(lines[4], "std,,,0.25,1,0,,,");
    }
}
