//! Seeded generator for synthetic deployment traces with exact aggregate
//! counts and a shaped duration distribution.

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttemptRecord, SCHEMA_VERSION};
use crate::digest::sha256_hex;
use crate::executor::{ExitStatus, FailureCategory, Outcome};

/// Language names ordered roughly by corpus frequency.
pub const LANGUAGES: &[&str] = &[
    "python", "c++", "c", "jupyter notebook", "r", "java", "matlab", "fortran", "javascript", "julia", "typescript",
    "rust", "go", "shell", "perl", "c#", "scala", "ruby", "php", "mathematica", "cuda", "haskell", "ocaml", "lua",
    "kotlin", "swift", "tcl", "idl", "sas", "stata", "objective-c", "dart", "elixir", "erlang", "clojure",
    "common lisp", "scheme", "racket", "f#", "groovy", "nim", "zig", "d", "crystal", "vala", "pascal", "ada",
    "cobol", "prolog", "smalltalk", "apl", "j", "q", "awk", "sed", "powershell", "batchfile", "makefile", "cmake",
    "m4", "yacc", "lex", "assembly", "vhdl", "verilog", "systemverilog", "chapel", "coq", "agda", "idris", "lean",
    "isabelle", "standard ml", "elm", "purescript", "reason", "rescript", "hack", "haxe", "coffeescript",
    "livescript", "actionscript", "visual basic .net", "vba", "vbscript", "gdscript", "glsl", "hlsl", "metal",
    "opencl", "futhark", "pony", "red", "rebol", "factor", "forth", "postscript", "tex", "bibtex", "xslt", "xquery",
    "sql", "plsql", "plpgsql", "tsql", "gams", "ampl", "modelica", "netlogo", "gap", "maxima", "maple", "sage",
    "magma", "pari/gp", "singular", "macaulay2", "scilab", "octave", "labview", "igor pro", "gnuplot", "povray",
    "openscad", "qml", "nix", "dhall", "jsonnet", "starlark", "hcl", "puppet", "saltstack", "smarty", "twig",
    "mustache", "handlebars", "liquid", "svelte", "vue", "astro", "solidity", "vyper", "move", "cairo", "wasm",
    "webassembly", "llvm", "mlir", "halide", "cython", "pyrex", "boo", "genie", "ring", "io", "ioke", "self",
    "newspeak", "oz", "mercury", "curry", "clean", "miranda", "lfe", "hy", "fennel", "janet", "carp", "arc",
    "picolisp", "emacs lisp", "vim script", "autohotkey", "applescript",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTrace {
    pub attempts: usize,
    pub successes: usize,
    /// Relative weights; failure counts are apportioned by largest remainder.
    pub failure_weights: Vec<(FailureCategory, f64)>,
    /// Number of distinct languages (at most `LANGUAGES.len()`).
    pub languages: usize,
    /// Exact nearest-rank median of `build_duration_s`.
    pub median_duration_s: f64,
    /// Log-scale spread of durations; 1.2 puts p99 near 16x the median.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticTrace {
    fn default() -> Self {
        SyntheticTrace {
            attempts: 52_550,
            successes: 50_112,
            failure_weights: vec![
                (FailureCategory::BuildProcess, 0.62),
                (FailureCategory::Resource, 0.14),
                (FailureCategory::DependencyInstall, 0.12),
                (FailureCategory::Permission, 0.07),
                (FailureCategory::Network, 0.05),
            ],
            languages: 171,
            median_duration_s: 480.0,
            sigma: 1.2,
            seed: 7,
        }
    }
}

/// Splits `total` in proportion to `weights` (largest remainder, ties by index).
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Heavier failure odds for compiled and system-coupled ecosystems.
fn failure_weight(lang: &str) -> f64 {
    match lang {
        "c" | "c++" | "fortran" | "r" | "cuda" => 2.5,
        "python" | "jupyter notebook" => 0.8,
        _ => 1.0,
    }
}

impl SyntheticTrace {
    pub fn generate(&self) -> Vec<AttemptRecord> {
        assert!(self.successes <= self.attempts, "more successes than attempts");
        let n = self.attempts;
        let nl = self.languages.clamp(1, LANGUAGES.len()).min(n.max(1));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);

        // Languages: one record each, the rest Zipf-like with python over half.
        let weights: Vec<f64> = (0..nl)
            .map(|i| if i == 0 { 1.0 } else { 0.9 / (i as f64).powf(1.6) })
            .collect();
        let extra = apportion(n - nl, &weights);
        let mut langs: Vec<&str> = Vec::with_capacity(n);
        for (i, k) in extra.iter().enumerate() {
            langs.extend(std::iter::repeat(LANGUAGES[i]).take(k + 1));
        }
        langs.shuffle(&mut rng);

        // Failures: weighted sampling without replacement via exponential keys.
        let nf = n - self.successes;
        let mut keys: Vec<(f64, usize)> = langs
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                (-u.ln() / failure_weight(l), i)
            })
            .collect();
        keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut failed: Vec<usize> = keys[..nf].iter().map(|k| k.1).collect();
        failed.shuffle(&mut rng);
        let cat_counts = apportion(nf, &self.failure_weights.iter().map(|w| w.1).collect::<Vec<_>>());
        let mut category: Vec<Option<FailureCategory>> = vec![None; n];
        let mut it = failed.into_iter();
        for ((cat, _), k) in self.failure_weights.iter().zip(cat_counts) {
            for idx in it.by_ref().take(k) {
                category[idx] = Some(*cat);
            }
        }

        let durations = self.durations(&mut rng);
        let epoch: DateTime<Utc> = DateTime::from_timestamp(1_735_689_600, 0).expect("valid epoch");
        let mut clock = 0i64;
        (0..n)
            .map(|i| {
                let lang = langs[i];
                let cat = category[i];
                let commit = &sha256_hex(format!("{}:{i}", self.seed))[..7];
                let repo = format!("lab{:03}/tool-{i:05}", i % 997);
                let build = durations[i];
                let validation_exit = match cat {
                    None => Some(ExitStatus::Code(0)),
                    Some(FailureCategory::Resource) if i % 5 == 0 => Some(ExitStatus::Timeout),
                    Some(FailureCategory::BuildProcess) if i % 4 == 0 => Some(ExitStatus::Code(1)),
                    Some(_) => None,
                };
                let started = epoch + Duration::seconds(clock);
                let ended = started + Duration::milliseconds((build * 1000.0).round() as i64 + 2_000);
                clock += 2;
                let artifact_count = match rng.gen_range(0..100) {
                    0..=34 => 0,
                    35..=74 => 1,
                    75..=92 => 2,
                    _ => rng.gen_range(3..6),
                };
                AttemptRecord {
                    schema_version: SCHEMA_VERSION,
                    tool_id: format!("{repo}@{commit}"),
                    repo_url: format!("https://github.com/{repo}"),
                    primary_language: lang.to_string(),
                    artifact_count,
                    outcome: if cat.is_some() { Outcome::Failure } else { Outcome::Success },
                    failure_category: cat,
                    build_duration_s: build,
                    validation_exit,
                    rounds_used: rng.gen_range(1..=4),
                    started_at: started,
                    ended_at: ended,
                }
            })
            .collect()
    }

    /// Log-normal durations rescaled and pinned so the nearest-rank median
    /// is exactly `median_duration_s`, then shuffled.
    fn durations(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.attempts;
        if n == 0 {
            return Vec::new();
        }
        let mut xs: Vec<f64> = (0..n).map(|_| (self.sigma * std_normal(rng)).exp()).collect();
        xs.sort_by(f64::total_cmp);
        let k = n.div_ceil(2) - 1;
        let scale = self.median_duration_s / xs[k];
        let m = self.median_duration_s;
        for (i, x) in xs.iter_mut().enumerate() {
            let v = ((*x * scale) * 10.0).round() / 10.0;
            *x = match i.cmp(&k) {
                std::cmp::Ordering::Less => v.min(m),
                std::cmp::Ordering::Equal => m,
                std::cmp::Ordering::Greater => v.max(m),
            };
        }
        xs.shuffle(rng);
        xs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_exact() {
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(apportion(2438, &[0.62, 0.14, 0.12, 0.07, 0.05]).iter().sum::<usize>(), 2438);
        assert_eq!(apportion(0, &[1.0]), vec![0]);
    }

    #[test]
    fn small_trace_shape() {
        let t = SyntheticTrace { attempts: 500, successes: 450, languages: 20, seed: 3, ..Default::default() };
        let rs = t.generate();
        assert_eq!(rs.len(), 500);
        assert_eq!(rs.iter().filter(|r| r.outcome == Outcome::Success).count(), 450);
        assert!(rs.iter().all(|r| r.check().is_ok()));
        let mut langs: Vec<_> = rs.iter().map(|r| r.primary_language.as_str()).collect();
        langs.sort();
        langs.dedup();
        assert_eq!(langs.len(), 20);
        assert_eq!(t.generate(), rs);
    }

    #[test]
    fn enough_language_names() {
        assert!(LANGUAGES.len() >= 171);
        let mut v = LANGUAGES.to_vec();
        v.sort();
        v.dedup();
        assert_eq!(v.len(), LANGUAGES.len());
    }
}
