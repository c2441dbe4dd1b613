use std::fmt::Write as _;
use std::str::FromStr;

use super::{CorpusSummary, TraceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(TraceError::UnknownFormat(other.into())),
        }
    }
}

/// CSV panel file names, one per plot.
pub const PANELS: [&str; 6] = [
    "outcomes.csv",
    "artifact_tiers.csv",
    "languages.csv",
    "failure_categories.csv",
    "durations.csv",
    "language_scale.csv",
];

/// Named output files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedReport {
    pub files: Vec<(String, String)>,
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

/// Quotes a CSV field when needed.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn text(s: &CorpusSummary) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "attempts      {}", s.attempts);
    let _ = writeln!(o, "successes     {}", s.successes);
    let _ = writeln!(o, "failures      {}", s.failures);
    let _ = writeln!(o, "success rate  {}", s.success_rate_display());
    let _ = writeln!(o, "languages     {}", s.distinct_languages);
    let _ = writeln!(o);
    let _ = writeln!(o, "build duration (s)");
    let d = s.durations;
    let _ = writeln!(o, "  p50 {:.1}  p90 {:.1}  p99 {:.1}  max {:.1}", d.p50, d.p90, d.p99, d.max);
    let _ = writeln!(o);
    let _ = writeln!(o, "failure categories");
    if s.failure_histogram.is_empty() {
        let _ = writeln!(o, "  (none)");
    }
    for c in &s.failure_histogram {
        let share = if s.failures == 0 { 0.0 } else { c.count as f64 / s.failures as f64 };
        let _ = writeln!(o, "  {:<20}{:>8}  {:>6.2}%", c.category.as_str(), c.count, share * 100.0);
    }
    let _ = writeln!(o);
    let _ = writeln!(o, "languages");
    for r in &s.languages {
        let _ = writeln!(
            o,
            "  {:<20}{:>8}  share {:>6.2}%  success {:>6.2}%",
            r.language,
            r.count,
            r.share * 100.0,
            r.success_rate * 100.0
        );
    }
    let _ = writeln!(o);
    let _ = writeln!(o, "build-system artifacts");
    for t in &s.artifact_tiers {
        let _ = writeln!(o, "  {:<20}{:>8}  success {:>6.2}%", t.tier.as_str(), t.count, t.success_rate * 100.0);
    }
    o
}

fn csv_panels(s: &CorpusSummary) -> Vec<(String, String)> {
    let mut outcomes = String::from("outcome,count,rate\n");
    let _ = writeln!(outcomes, "success,{},{}", s.successes, f6(s.success_rate));
    let _ = writeln!(outcomes, "failure,{},{}", s.failures, f6(1.0 - s.success_rate));

    let mut tiers = String::from("tier,count,successes,success_rate\n");
    for t in &s.artifact_tiers {
        let _ = writeln!(tiers, "{},{},{},{}", t.tier.as_str(), t.count, t.successes, f6(t.success_rate));
    }

    let mut langs = String::from("language,count,share,successes,success_rate\n");
    for r in &s.languages {
        let _ = writeln!(
            langs,
            "{},{},{},{},{}",
            field(&r.language),
            r.count,
            f6(r.share),
            r.successes,
            f6(r.success_rate)
        );
    }

    let mut cats = String::from("category,count,share\n");
    for c in &s.failure_histogram {
        let share = if s.failures == 0 { 0.0 } else { c.count as f64 / s.failures as f64 };
        let _ = writeln!(cats, "{},{},{}", c.category.as_str(), c.count, f6(share));
    }

    let d = s.durations;
    let mut durs = String::from("statistic,seconds\n");
    for (k, v) in [("p50", d.p50), ("p90", d.p90), ("p99", d.p99), ("max", d.max)] {
        let _ = writeln!(durs, "{k},{v}");
    }

    let mut scale = String::from("bucket,languages,attempts,successes,success_rate\n");
    for r in &s.language_scale {
        let _ = writeln!(
            scale,
            "{},{},{},{},{}",
            r.bucket,
            r.languages,
            r.attempts,
            r.successes,
            f6(r.success_rate)
        );
    }

    PANELS.iter().map(|p| p.to_string()).zip([outcomes, tiers, langs, cats, durs, scale]).collect()
}

pub fn render(summary: &CorpusSummary, format: ReportFormat) -> RenderedReport {
    let files = match format {
        ReportFormat::Text => vec![("report.txt".to_string(), text(summary))],
        ReportFormat::Json => {
            let mut body = serde_json::to_string_pretty(summary).expect("summary serializes");
            body.push('\n');
            vec![("summary.json".to_string(), body)]
        }
        ReportFormat::Csv => csv_panels(summary),
    };
    RenderedReport { files }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::Exec;
    use crate::trace::summarize;
    use crate::trace::tests::rec;

    #[test]
    fn byte_stable_and_complete() {
        let rs: Vec<_> = (0..12).map(|i| rec(&format!("t{i}@1"), "python", i % 4 != 0, i as f64 * 10.0)).collect();
        let s = summarize(&rs, 5, Exec::Sequential).unwrap();
        for f in [ReportFormat::Text, ReportFormat::Json, ReportFormat::Csv] {
            assert_eq!(render(&s, f), render(&s, f));
        }
        let csv = render(&s, ReportFormat::Csv);
        assert_eq!(csv.files.len(), 6);
        assert!(csv.files[0].1.contains("success,9,0.750000"));
        assert!("pdf".parse::<ReportFormat>().is_err());
    }
}
