//! Pulling shell commands out of README-style documentation.

use std::sync::OnceLock;

use regex::Regex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionKind {
    Install,
    Usage,
    Other,
}

fn classify_heading(title: &str) -> SectionKind {
    static INSTALL: OnceLock<Regex> = OnceLock::new();
    static USAGE: OnceLock<Regex> = OnceLock::new();
    let install = INSTALL.get_or_init(|| {
        Regex::new(r"(?i)^(installation|installing|install|setup|set up|getting started|building|build|compiling|compilation|compile|requirements|dependencies)\b").unwrap()
    });
    let usage = USAGE.get_or_init(|| {
        Regex::new(r"(?i)^(usage|quick ?start|examples?|running|run|how to run|command[- ]line)\b").unwrap()
    });
    let t = title.trim();
    if install.is_match(t) {
        SectionKind::Install
    } else if usage.is_match(t) {
        SectionKind::Usage
    } else {
        SectionKind::Other
    }
}

/// Command lines found in code blocks, tagged with the enclosing section kind.
pub fn code_commands(doc: &str) -> Vec<(SectionKind, String)> {
    let lines: Vec<&str> = doc.lines().collect();
    let mut out = Vec::new();
    let mut section = SectionKind::Other;
    let mut fence: Option<&str> = None;
    let mut pending = String::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let trimmed = line.trim();
        if let Some(f) = fence {
            if trimmed.starts_with(f) {
                fence = None;
            } else {
                let mut cmd = trimmed;
                for p in ["$ ", "> ", "% "] {
                    if let Some(rest) = cmd.strip_prefix(p) {
                        cmd = rest;
                    }
                }
                if let Some(body) = cmd.strip_suffix('\\') {
                    pending.push_str(body.trim());
                    pending.push(' ');
                } else {
                    pending.push_str(cmd);
                    let full = pending.trim().to_string();
                    pending.clear();
                    if !full.is_empty() && !full.starts_with('#') {
                        out.push((section, full));
                    }
                }
            }
            i += 1;
            continue;
        }
        if trimmed.starts_with("```") || trimmed.starts_with("~~~") {
            fence = Some(if trimmed.starts_with("```") { "```" } else { "~~~" });
            i += 1;
            continue;
        }
        if let Some(title) = trimmed.strip_prefix('#') {
            section = classify_heading(title.trim_start_matches('#'));
        } else if i + 1 < lines.len() {
            let under = lines[i + 1].trim();
            if !trimmed.is_empty() && under.len() >= 3 && under.chars().all(|c| matches!(c, '=' | '-' | '~' | '^')) {
                section = classify_heading(trimmed);
                i += 2;
                continue;
            }
        }
        i += 1;
    }
    out
}

pub fn install_commands(doc: &str) -> Vec<String> {
    code_commands(doc)
        .into_iter()
        .filter(|(k, _)| *k == SectionKind::Install)
        .map(|(_, c)| c)
        .collect()
}

pub fn usage_commands(doc: &str) -> Vec<String> {
    code_commands(doc)
        .into_iter()
        .filter(|(k, _)| *k == SectionKind::Usage)
        .map(|(_, c)| c)
        .collect()
}

/// Command lines in free text such as a web snippet: fenced blocks, `$ ` or
/// indented lines that start with a known installer.
pub fn snippet_commands(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"^(?:\$\s+|sudo\s+)?((?:apt-get|apt|pip3?|python3? -m pip|conda|make|cmake|\./configure)\s.*)$").unwrap()
    });
    let mut out: Vec<String> = code_commands(text).into_iter().map(|(_, c)| c).collect();
    if out.is_empty() {
        for line in text.lines() {
            let t = line.trim();
            if let Some(c) = re.captures(t) {
                out.push(c[1].trim().to_string());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const README: &str = "# Tool\n\nIntro.\n\n## Installation\n\n```bash\n$ git clone https://x/tool\ncd tool\npip install -r requirements.txt \\\n  --no-cache-dir\n# a comment\n```\n\nUsage\n-----\n\n```\npython run.py --input a.csv\n```\n";

    #[test]
    fn sections_and_continuations() {
        assert_eq!(
            install_commands(README),
            vec!["git clone https://x/tool", "cd tool", "pip install -r requirements.txt --no-cache-dir"]
        );
        assert_eq!(usage_commands(README), vec!["python run.py --input a.csv"]);
    }

    #[test]
    fn snippets() {
        let t = "To build you need the headers:\n\n    sudo apt-get install libfoo-dev\n\nthen run make.";
        assert_eq!(snippet_commands(t), vec!["apt-get install libfoo-dev"]);
    }
}
