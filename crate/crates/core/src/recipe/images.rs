use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::spec::ImageRef;

/// Base images chosen per ecosystem, plus default tags used to pin
/// untagged or `latest` references in adopted recipes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseImages {
    pub python: String,
    pub c: String,
    pub node: String,
    pub rust: String,
    pub java: String,
    pub r: String,
    pub julia: String,
    pub generic: String,
    pub pins: BTreeMap<String, String>,
}

impl Default for BaseImages {
    fn default() -> Self {
        let pins = [
            ("python", "3.11-slim"),
            ("ubuntu", "22.04"),
            ("debian", "12-slim"),
            ("gcc", "13"),
            ("node", "20-slim"),
            ("rust", "1.79-slim"),
            ("maven", "3.9-eclipse-temurin-17"),
            ("r-base", "4.3.3"),
            ("julia", "1.10"),
            ("alpine", "3.19"),
            ("continuumio/miniconda3", "24.1.2-0"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Self {
            python: "python:3.11-slim".into(),
            c: "gcc:13".into(),
            node: "node:20-slim".into(),
            rust: "rust:1.79-slim".into(),
            java: "maven:3.9-eclipse-temurin-17".into(),
            r: "r-base:4.3.3".into(),
            julia: "julia:1.10".into(),
            generic: "ubuntu:22.04".into(),
            pins,
        }
    }
}

impl BaseImages {
    /// Pins an unpinned reference from the table; pinned references pass through.
    pub fn pin(&self, image: &ImageRef) -> Option<ImageRef> {
        if image.is_pinned() {
            return Some(image.clone());
        }
        self.pins.get(&image.name).map(|t| ImageRef::new(image.name.clone(), t.clone()))
    }

    pub fn image(s: &str) -> ImageRef {
        ImageRef::parse(s)
    }
}

/// Images whose package repositories or runtimes are past end of life, with
/// the replacement a reviewer proposes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EolRule {
    pub name: &'static str,
    pub tags: &'static [&'static str],
    pub replacement: (&'static str, &'static str),
}

pub const EOL_IMAGES: &[EolRule] = &[
    EolRule {
        name: "ubuntu",
        tags: &["12.04", "14.04", "16.04", "18.04", "precise", "trusty", "xenial", "bionic"],
        replacement: ("ubuntu", "22.04"),
    },
    EolRule {
        name: "debian",
        tags: &["7", "8", "9", "wheezy", "jessie", "stretch"],
        replacement: ("debian", "12-slim"),
    },
    EolRule {
        name: "centos",
        tags: &["5", "6", "7", "8"],
        replacement: ("rockylinux", "9"),
    },
    EolRule {
        name: "python",
        tags: &["2", "3.4", "3.5", "3.6", "3.7"],
        replacement: ("python", "3.11-slim"),
    },
    EolRule {
        name: "node",
        tags: &["6", "8", "10", "12", "14", "16"],
        replacement: ("node", "20-slim"),
    },
    EolRule {
        name: "gcc",
        tags: &["4", "5", "6", "7"],
        replacement: ("gcc", "13"),
    },
];

fn tag_matches(tag: &str, prefix: &str) -> bool {
    tag == prefix
        || tag
            .strip_prefix(prefix)
            .is_some_and(|rest| rest.starts_with(['.', '-']))
}

/// The deny-list entry covering `image`, if any.
pub fn eol_rule(image: &ImageRef) -> Option<&'static EolRule> {
    let name = image.name.strip_prefix("library/").unwrap_or(&image.name);
    EOL_IMAGES
        .iter()
        .find(|r| r.name == name && r.tags.iter().any(|t| tag_matches(&image.tag, t)))
}
