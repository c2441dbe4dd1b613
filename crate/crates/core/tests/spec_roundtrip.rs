//! Canonical recipe rendering: round-trip and digest properties.

use std::collections::BTreeMap;

use deployforge_core::recipe::BuildSpec;
use proptest::prelude::*;

mod common;

use common::spec_gen::spec;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn render_then_parse_is_identity(s in spec()) {
        let text = s.render();
        let back = BuildSpec::parse(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.render(), text);
        prop_assert_eq!(back.digest(), s.digest());
    }

    #[test]
    fn digests_collide_only_on_equal_renderings(specs in prop::collection::vec(spec(), 2..12)) {
        let mut by_digest: BTreeMap<String, String> = BTreeMap::new();
        for s in &specs {
            let text = s.render();
            if let Some(prev) = by_digest.insert(s.digest(), text.clone()) {
                prop_assert_eq!(prev, text);
            }
        }
        let distinct: std::collections::BTreeSet<String> = specs.iter().map(|s| s.render()).collect();
        prop_assert_eq!(by_digest.len(), distinct.len());
    }

    #[test]
    fn any_field_change_changes_the_digest(s in spec(), step in "[a-z]{1,8}") {
        let mut t = s.clone();
        t.build_steps.push(format!("echo {step}"));
        prop_assert_ne!(t.digest(), s.digest());
        let mut u = s.clone();
        u.copy_source = !u.copy_source;
        prop_assert_ne!(u.digest(), s.digest());
        let mut v = s.clone();
        v.validate_cmd.push("--help".into());
        prop_assert_ne!(v.digest(), s.digest());
    }
}
