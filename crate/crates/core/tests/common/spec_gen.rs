//! Random invariant-valid recipes.

use deployforge_core::recipe::{BuildSpec, ImageRef};
use proptest::prelude::*;

pub fn image() -> impl Strategy<Value = ImageRef> {
    (
        "[a-z][a-z0-9_-]{0,8}(/[a-z0-9][a-z0-9._-]{0,8}){0,2}",
        "[a-z0-9][a-z0-9._-]{0,12}".prop_filter("floating tag", |t| t != "latest"),
    )
        .prop_map(|(n, t)| ImageRef::new(n, t))
}

pub fn argv() -> impl Strategy<Value = Vec<String>> {
    ("[a-zA-Z/][a-zA-Z0-9_./-]{0,12}", prop::collection::vec("[ -~]{0,12}", 0..4)).prop_map(|(p, mut rest)| {
        rest.insert(0, p);
        rest
    })
}

pub fn spec() -> impl Strategy<Value = BuildSpec> {
    (
        image(),
        prop::collection::vec("[a-z0-9][a-z0-9.+-]{0,10}", 0..4),
        prop::collection::vec(("[A-Z_][A-Z0-9_]{0,8}", "[ !#-\\[\\]-~]{0,12}"), 0..3),
        any::<bool>(),
        "/[a-z]{1,8}(/[a-z0-9_.-]{1,8}){0,2}",
        prop::collection::vec("[a-z][a-z0-9 ./=_&|>-]{0,24}[a-z0-9]", 0..4),
        argv(),
        argv(),
    )
        .prop_map(|(base_image, system_packages, env_vars, copy_source, workdir, build_steps, entrypoint, validate_cmd)| {
            BuildSpec { base_image, system_packages, env_vars, copy_source, workdir, build_steps, entrypoint, validate_cmd }
        })
        .prop_filter("spec invariants", |s| s.validate().is_ok())
}

