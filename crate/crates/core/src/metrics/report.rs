//! Batch aggregation and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalResult, SuggestionId};
use crate::io::write_atomic;
use crate::metrics::EpisodeMetrics;
use crate::scenario::DensityClass;
use crate::sim::Outcome;

pub const HISTOGRAM_BINS: usize = 10;

/// One scored (or unscored) episode as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub metrics: EpisodeMetrics,
    pub eval: Option<EvalResult>,
}

/// Counts and sums only, so partial reports merge exactly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub episodes: usize,
    pub merged: usize,
    pub scored: usize,
    pub score_sum: f64,
}

impl Tally {
    fn add(&mut self, merged: bool, score: Option<f64>) {
        self.episodes += 1;
        self.merged += merged as usize;
        if let Some(s) = score {
            self.scored += 1;
            self.score_sum += s;
        }
    }

    fn merge(&mut self, o: &Tally) {
        self.episodes += o.episodes;
        self.merged += o.merged;
        self.scored += o.scored;
        self.score_sum += o.score_sum;
    }

    pub fn success_rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.merged as f64 / self.episodes as f64
        }
    }

    pub fn avg_score(&self) -> Option<f64> {
        (self.scored > 0).then(|| self.score_sum / self.scored as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub density: DensityClass,
    pub episodes: usize,
    pub merged: usize,
    pub success_rate: f64,
    pub avg_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub n_episodes: usize,
    pub success_rate: f64,
    pub avg_score: Option<f64>,
    /// Scores binned as `[0,1), [1,2), ..., [9,10]`.
    pub histogram: [usize; HISTOGRAM_BINS],
    pub suggestion_counts: BTreeMap<SuggestionId, usize>,
    pub total_suggestions: usize,
    pub outcome_counts: BTreeMap<String, usize>,
    /// Planner faults and invalid episodes.
    pub faults: usize,
    pub per_density: Vec<DensityRow>,
    pub totals: Tally,
    pub density_totals: BTreeMap<DensityClass, Tally>,
}

fn bin_of(score: f64) -> usize {
    (score.clamp(0.0, 10.0).floor() as usize).min(HISTOGRAM_BINS - 1)
}

impl BenchmarkReport {
    fn empty() -> Self {
        BenchmarkReport {
            n_episodes: 0,
            success_rate: 0.0,
            avg_score: None,
            histogram: [0; HISTOGRAM_BINS],
            suggestion_counts: BTreeMap::new(),
            total_suggestions: 0,
            outcome_counts: BTreeMap::new(),
            faults: 0,
            per_density: Vec::new(),
            totals: Tally::default(),
            density_totals: BTreeMap::new(),
        }
    }

    fn push(&mut self, m: &EpisodeMetrics, eval: Option<&EvalResult>) {
        let merged = matches!(m.outcome, Outcome::Merged { .. });
        let score = eval.map(|e| e.score);
        self.totals.add(merged, score);
        self.density_totals.entry(m.density).or_default().add(merged, score);
        *self.outcome_counts.entry(m.outcome.label().to_string()).or_default() += 1;
        if m.outcome.is_fault() {
            self.faults += 1;
        }
        if let Some(e) = eval {
            self.histogram[bin_of(e.score)] += 1;
            for s in &e.suggestions {
                *self.suggestion_counts.entry(s.id).or_default() += 1;
                self.total_suggestions += 1;
            }
        }
    }

    /// Recomputes the derived fields from the tallies.
    fn finalize(&mut self, densities: &[DensityClass]) {
        self.n_episodes = self.totals.episodes;
        self.success_rate = self.totals.success_rate();
        self.avg_score = self.totals.avg_score();
        for d in densities {
            self.density_totals.entry(*d).or_default();
        }
        self.per_density = self
            .density_totals
            .iter()
            .map(|(d, t)| DensityRow {
                density: *d,
                episodes: t.episodes,
                merged: t.merged,
                success_rate: t.success_rate(),
                avg_score: t.avg_score(),
            })
            .collect();
    }

    /// Union of two disjoint batches.
    pub fn merge(&self, other: &BenchmarkReport) -> BenchmarkReport {
        let mut out = self.clone();
        out.totals.merge(&other.totals);
        for (d, t) in &other.density_totals {
            out.density_totals.entry(*d).or_default().merge(t);
        }
        for (a, b) in out.histogram.iter_mut().zip(other.histogram) {
            *a += b;
        }
        for (k, v) in &other.suggestion_counts {
            *out.suggestion_counts.entry(*k).or_default() += v;
        }
        for (k, v) in &other.outcome_counts {
            *out.outcome_counts.entry(k.clone()).or_default() += v;
        }
        out.total_suggestions += other.total_suggestions;
        out.faults += other.faults;
        out.finalize(&[]);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse {
            context: "report".into(),
            message: e.to_string(),
        })
    }
}

/// Aggregates records, always listing a row for each class in `densities`.
pub fn aggregate_records(records: &[EpisodeRecord], densities: &[DensityClass]) -> Result<BenchmarkReport> {
    if records.is_empty() {
        return Err(Error::validation("cannot aggregate an empty batch"));
    }
    let mut r = BenchmarkReport::empty();
    for rec in records {
        r.push(&rec.metrics, rec.eval.as_ref());
    }
    r.finalize(densities);
    Ok(r)
}

pub fn aggregate_with(items: &[(EpisodeMetrics, EvalResult)], densities: &[DensityClass]) -> Result<BenchmarkReport> {
    if items.is_empty() {
        return Err(Error::validation("cannot aggregate an empty batch"));
    }
    let mut r = BenchmarkReport::empty();
    for (m, e) in items {
        r.push(m, Some(e));
    }
    r.finalize(densities);
    Ok(r)
}

pub fn aggregate(items: &[(EpisodeMetrics, EvalResult)]) -> Result<BenchmarkReport> {
    aggregate_with(items, &[])
}

fn pct(x: f64) -> String {
    format!("{:.0}%", 100.0 * x)
}

fn score_cell(s: Option<f64>) -> String {
    s.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

/// Success rate and average score per density class.
pub fn render_density_table(r: &BenchmarkReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| Density | Episodes | Success Rate | Average Score |");
    let _ = writeln!(s, "|---|---:|---:|---:|");
    for row in &r.per_density {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} |",
            row.density.display_name(),
            row.episodes,
            pct(row.success_rate),
            score_cell(row.avg_score)
        );
    }
    let _ = writeln!(
        s,
        "| All | {} | {} | {} |",
        r.n_episodes,
        pct(r.success_rate),
        score_cell(r.avg_score)
    );
    s
}

/// Average score and suggestion frequencies, one row per planner.
pub fn render_planner_table(rows: &[(String, BenchmarkReport)]) -> String {
    let mut s = String::new();
    let _ = write!(s, "| Planner | Episodes | Average Score |");
    for id in SuggestionId::ALL {
        let _ = write!(s, " {} |", id.phrase());
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "|---|---:|---:|{}", "---:|".repeat(SuggestionId::ALL.len()));
    for (name, r) in rows {
        let _ = write!(s, "| {name} | {} | {} |", r.n_episodes, score_cell(r.avg_score));
        for id in SuggestionId::ALL {
            let _ = write!(s, " {} |", r.suggestion_counts.get(&id).copied().unwrap_or(0));
        }
        let _ = writeln!(s);
    }
    s
}

/// Metrics record rendered as labelled rows with units.
pub fn render_metrics(m: &EpisodeMetrics) -> String {
    let merge = m
        .merging_point_x
        .map_or_else(|| "not reached".to_string(), |x| format!("{x:.2} m"));
    let mut s = String::new();
    let _ = writeln!(s, "Total time (s): {:.2}", m.total_time);
    let _ = writeln!(s, "Average speed (m/s): {:.2}", m.avg_speed);
    let _ = writeln!(s, "Merging point: {merge}");
    let _ = writeln!(s, "Average jerk (m/s^3): {:.2}", m.avg_jerk);
    let _ = writeln!(s, "Max jerk (m/s^3): {:.2}", m.max_jerk);
    let _ = writeln!(s, "Average gap (m): {:.2}", m.avg_gap);
    let _ = writeln!(s, "Minimum gap (m): {:.2}", m.min_gap);
    let _ = writeln!(s, "Others average speed (m/s): {:.2}", m.others_avg_speed);
    let _ = writeln!(s, "Drive mode: {}", m.drive_mode);
    let _ = writeln!(s, "Outcome: {}", m.outcome.label());
    s
}

/// Column order of [`records_to_csv`]. `merging_point_x` and `score` are empty
/// when absent; `suggestions` joins canonical ids with `;`.
pub const RECORD_CSV_HEADER: &str = "index,planner,density,scenario_seed,drive_mode,outcome,total_time,avg_speed,\
merging_point_x,avg_jerk,max_jerk,avg_gap,min_gap,others_avg_speed,score,source,suggestions";

pub fn records_to_csv(records: &[EpisodeRecord]) -> String {
    let mut s = String::from(RECORD_CSV_HEADER);
    s.push('\n');
    for r in records {
        let m = &r.metrics;
        let (score, source, sugg) = match &r.eval {
            Some(e) => (
                format!("{}", e.score),
                format!("{:?}", e.source).to_lowercase(),
                e.suggestions
                    .iter()
                    .map(|x| serde_json::to_value(x.id).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default())
                    .collect::<Vec<_>>()
                    .join(";"),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.index,
            m.planner.replace(',', "_"),
            m.density.as_str(),
            m.scenario_seed,
            m.drive_mode,
            m.outcome.label(),
            m.total_time,
            m.avg_speed,
            m.merging_point_x.map(|x| x.to_string()).unwrap_or_default(),
            m.avg_jerk,
            m.max_jerk,
            m.avg_gap,
            m.min_gap,
            m.others_avg_speed,
            score,
            source,
            sugg
        );
    }
    s
}

/// Writes `report.json`, `episodes.json` and `episodes.csv` into `dir`.
pub fn write_report(dir: &Path, report: &BenchmarkReport, records: &[EpisodeRecord]) -> Result<()> {
    write_atomic(&dir.join("report.json"), report.to_json()?.as_bytes())?;
    let eps = serde_json::to_string_pretty(records).map_err(|e| Error::Parse {
        context: "episodes".into(),
        message: e.to_string(),
    })?;
    write_atomic(&dir.join("episodes.json"), eps.as_bytes())?;
    write_atomic(&dir.join("episodes.csv"), records_to_csv(records).as_bytes())
}
