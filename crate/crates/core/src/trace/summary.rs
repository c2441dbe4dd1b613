use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AttemptRecord, TraceError};
use crate::analyzer::SpecTier;
use crate::executor::{FailureCategory, Outcome};
use crate::par::Exec;

pub const DEFAULT_MIN_COUNT: u64 = 5;
const CHUNK: usize = 4096;
const SCALE_BUCKETS: [(&str, u64, u64); 4] =
    [("1-9", 1, 9), ("10-99", 10, 99), ("100-999", 100, 999), ("1000+", 1000, u64::MAX)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageRow {
    pub language: String,
    pub count: u64,
    pub share: f64,
    pub successes: u64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub category: FailureCategory,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierRow {
    pub tier: SpecTier,
    pub count: u64,
    pub successes: u64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub bucket: String,
    pub languages: u64,
    pub attempts: u64,
    pub successes: u64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub attempts: u64,
    pub successes: u64,
    pub failures: u64,
    pub success_rate: f64,
    pub distinct_languages: u64,
    pub languages: Vec<LanguageRow>,
    /// Non-zero categories in the fixed category order.
    pub failure_histogram: Vec<CategoryCount>,
    pub durations: Percentiles,
    pub artifact_tiers: Vec<TierRow>,
    pub language_scale: Vec<ScaleRow>,
}

impl CorpusSummary {
    pub fn success_rate_display(&self) -> String {
        format!("{:.2}%", self.success_rate * 100.0)
    }

    pub fn histogram_total(&self) -> u64 {
        self.failure_histogram.iter().map(|c| c.count).sum()
    }
}

/// Nearest-rank percentile of an ascending slice: the `ceil(p/100 * n)`-th
/// smallest value.
pub fn nearest_rank(sorted: &[f64], p: u32) -> f64 {
    assert!(!sorted.is_empty() && (1..=100).contains(&p));
    let n = sorted.len() as u64;
    let rank = (u64::from(p) * n).div_ceil(100).max(1);
    sorted[(rank - 1) as usize]
}

fn rate(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Default)]
struct Acc {
    attempts: u64,
    successes: u64,
    langs: BTreeMap<String, (u64, u64)>,
    categories: [u64; FailureCategory::ALL.len()],
    tiers: [(u64, u64); 3],
    durations: Vec<f64>,
}

impl Acc {
    fn add(&mut self, r: &AttemptRecord) {
        let ok = r.outcome == Outcome::Success;
        self.attempts += 1;
        self.successes += u64::from(ok);
        let e = self.langs.entry(r.primary_language.clone()).or_default();
        e.0 += 1;
        e.1 += u64::from(ok);
        if let Some(c) = r.failure_category {
            let i = FailureCategory::ALL.iter().position(|x| *x == c).expect("category listed");
            self.categories[i] += 1;
        }
        let t = &mut self.tiers[SpecTier::from_count(r.artifact_count) as usize];
        t.0 += 1;
        t.1 += u64::from(ok);
        self.durations.push(r.build_duration_s);
    }

    fn merge(mut self, other: Acc) -> Acc {
        self.attempts += other.attempts;
        self.successes += other.successes;
        for (k, (c, s)) in other.langs {
            let e = self.langs.entry(k).or_default();
            e.0 += c;
            e.1 += s;
        }
        for (a, b) in self.categories.iter_mut().zip(other.categories) {
            *a += b;
        }
        for (a, b) in self.tiers.iter_mut().zip(other.tiers) {
            a.0 += b.0;
            a.1 += b.1;
        }
        self.durations.extend(other.durations);
        self
    }
}

fn rows(langs: &BTreeMap<String, (u64, u64)>, total: u64, min_count: u64) -> Vec<LanguageRow> {
    let mut other = (0u64, 0u64);
    let mut out: Vec<LanguageRow> = Vec::new();
    for (lang, &(count, successes)) in langs {
        if count < min_count {
            other.0 += count;
            other.1 += successes;
            continue;
        }
        out.push(LanguageRow {
            language: lang.clone(),
            count,
            share: rate(count, total),
            successes,
            success_rate: rate(successes, count),
        });
    }
    if other.0 > 0 {
        out.push(LanguageRow {
            language: "other".into(),
            count: other.0,
            share: rate(other.0, total),
            successes: other.1,
            success_rate: rate(other.1, other.0),
        });
    }
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.language.cmp(&b.language)));
    out
}

/// Per-language counts and success rates; languages with fewer than
/// `min_count` records are folded into `other`.
pub fn language_breakdown(records: &[AttemptRecord], min_count: u64) -> Vec<LanguageRow> {
    let mut acc = Acc::default();
    for r in records {
        acc.add(r);
    }
    rows(&acc.langs, acc.attempts, min_count)
}

pub fn summarize(records: &[AttemptRecord], min_count: u64, exec: Exec) -> Result<CorpusSummary, TraceError> {
    if records.is_empty() {
        return Err(TraceError::Empty);
    }
    let acc = exec.map_reduce(
        records,
        CHUNK,
        |chunk| {
            let mut a = Acc::default();
            for r in chunk {
                a.add(r);
            }
            a
        },
        Acc::merge,
        Acc::default(),
    );
    let mut durations = acc.durations.clone();
    durations.sort_by(f64::total_cmp);
    let failure_histogram = FailureCategory::ALL
        .iter()
        .zip(acc.categories)
        .filter(|(_, n)| *n > 0)
        .map(|(c, n)| CategoryCount { category: *c, count: n })
        .collect();
    let artifact_tiers = [SpecTier::Unspecified, SpecTier::Single, SpecTier::Multi]
        .into_iter()
        .zip(acc.tiers)
        .map(|(tier, (count, successes))| TierRow { tier, count, successes, success_rate: rate(successes, count) })
        .collect();
    let language_scale = SCALE_BUCKETS
        .iter()
        .map(|(name, lo, hi)| {
            let mut row = ScaleRow { bucket: name.to_string(), languages: 0, attempts: 0, successes: 0, success_rate: 0.0 };
            for &(c, s) in acc.langs.values().filter(|(c, _)| c >= lo && c <= hi) {
                row.languages += 1;
                row.attempts += c;
                row.successes += s;
            }
            row.success_rate = rate(row.successes, row.attempts);
            row
        })
        .collect();
    Ok(CorpusSummary {
        attempts: acc.attempts,
        successes: acc.successes,
        failures: acc.attempts - acc.successes,
        success_rate: rate(acc.successes, acc.attempts),
        distinct_languages: acc.langs.len() as u64,
        languages: rows(&acc.langs, acc.attempts, min_count),
        failure_histogram,
        durations: Percentiles {
            p50: nearest_rank(&durations, 50),
            p90: nearest_rank(&durations, 90),
            p99: nearest_rank(&durations, 99),
            max: *durations.last().expect("non-empty"),
        },
        artifact_tiers,
        language_scale,
    })
}
