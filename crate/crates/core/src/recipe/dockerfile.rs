//! Lenient reader for single-stage Dockerfiles found in repositories or
//! returned by a model. The output is a [`BuildSpec`] in canonical form.

use super::images::BaseImages;
use super::shell::{split_commands, split_words};
use super::spec::{parse_argv, BuildSpec, ImageRef};
use super::SpecError;

const DEFAULT_WORKDIR: &str = "/app";

fn join_continuations(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        let trimmed = line.trim();
        if cur.is_empty() {
            if trimmed.is_empty() || (trimmed.starts_with('#') && !trimmed.starts_with("# validate ")) {
                continue;
            }
            start = i + 1;
        } else if trimmed.starts_with('#') {
            // Comment lines inside a continued instruction are dropped.
            continue;
        }
        match trimmed.strip_suffix('\\') {
            Some(body) => {
                cur.push_str(body.trim());
                cur.push(' ');
            }
            None => {
                cur.push_str(trimmed);
                out.push((start, std::mem::take(&mut cur).trim().to_string()));
            }
        }
    }
    if !cur.trim().is_empty() {
        out.push((start, cur.trim().to_string()));
    }
    out
}

fn squash_spaces(s: &str) -> String {
    // Only outside quotes; quoted content is left verbatim.
    let mut out = String::with_capacity(s.len());
    let mut quote: Option<char> = None;
    let mut prev_space = false;
    for c in s.chars() {
        match quote {
            Some(q) => {
                out.push(c);
                if c == q {
                    quote = None;
                }
            }
            None => {
                if c == '\'' || c == '"' {
                    quote = Some(c);
                }
                if c.is_whitespace() {
                    if !prev_space {
                        out.push(' ');
                    }
                    prev_space = true;
                    continue;
                }
                out.push(c);
            }
        }
        prev_space = false;
    }
    out.trim().to_string()
}

fn exec_or_shell(arg: &str) -> Vec<String> {
    let arg = arg.trim();
    if arg.starts_with('[') {
        if let Ok(v) = serde_json::from_str::<Vec<String>>(arg) {
            return v;
        }
    }
    vec!["sh".into(), "-c".into(), arg.to_string()]
}

fn shell_quote(word: &str) -> String {
    let safe = !word.is_empty()
        && word
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_./=:,+@%".contains(c));
    if safe {
        word.to_string()
    } else {
        format!("'{}'", word.replace('\'', "'\\''"))
    }
}

/// Packages if `step` does nothing but refresh and install apt packages.
fn apt_only_packages(step: &str) -> Option<Vec<String>> {
    let mut pkgs = Vec::new();
    let mut installed = false;
    for cmd in split_commands(step) {
        let prog = cmd.program()?;
        match prog {
            "apt-get" | "apt" => {
                let sub = cmd.positionals(&["-o", "-t"]);
                match sub.first().copied() {
                    Some("update") | Some("clean") | Some("autoremove") => {}
                    Some("install") => {
                        if !cmd.has_flag(&["-y", "--yes", "--assume-yes", "-qy", "-yq"]) {
                            return None;
                        }
                        installed = true;
                        pkgs.extend(sub[1..].iter().map(|s| s.to_string()));
                    }
                    _ => return None,
                }
            }
            "rm" => {
                if !cmd.args().iter().any(|a| a.starts_with("/var/lib/apt/lists")) {
                    return None;
                }
            }
            _ => return None,
        }
    }
    installed.then_some(pkgs)
}

fn parse_env(arg: &str) -> Vec<(String, String)> {
    let words = split_words(arg);
    // Legacy form: `ENV KEY value with spaces`.
    if let Some(first) = words.first() {
        if !first.contains('=') {
            let value = arg.trim()[first.len()..].trim().trim_matches('"').to_string();
            return vec![(first.clone(), value)];
        }
    }
    words
        .iter()
        .filter_map(|w| w.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

fn resolve_dir(base: &str, dir: &str) -> String {
    let joined = if dir.starts_with('/') {
        dir.to_string()
    } else {
        format!("{}/{}", base.trim_end_matches('/'), dir)
    };
    let mut parts: Vec<&str> = Vec::new();
    for p in joined.split('/') {
        match p {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            p => parts.push(p),
        }
    }
    format!("/{}", parts.join("/"))
}

/// Reads a Dockerfile-like recipe. The entrypoint may be left empty when the
/// recipe has neither ENTRYPOINT nor CMD; callers fill it in and validate.
pub fn normalize_dockerfile(text: &str, images: &BaseImages) -> Result<BuildSpec, SpecError> {
    let err = |line: usize, msg: String| SpecError::Parse { line, msg };
    let mut base: Option<ImageRef> = None;
    let mut system_packages: Vec<String> = Vec::new();
    let mut env_vars: Vec<(String, String)> = Vec::new();
    let mut copy_source = false;
    let mut copy_dest: Option<String> = None;
    let mut workdir: Option<String> = None;
    let mut cwd = "/".to_string();
    let mut steps: Vec<(String, String)> = Vec::new();
    let mut entrypoint: Option<Vec<String>> = None;
    let mut cmd: Option<Vec<String>> = None;
    let mut validate: Option<Vec<String>> = None;

    for (line, instr) in join_continuations(text) {
        if let Some(v) = instr.strip_prefix("# validate ") {
            validate = parse_argv(v.trim()).or_else(|| serde_json::from_str(v.trim()).ok());
            continue;
        }
        let (kw, arg) = instr.split_once(char::is_whitespace).unwrap_or((instr.as_str(), ""));
        let arg = arg.trim();
        match kw.to_ascii_uppercase().as_str() {
            "FROM" => {
                if base.is_some() {
                    return Err(err(line, "multi-stage recipes are not supported".into()));
                }
                let image = arg
                    .split_whitespace()
                    .find(|w| !w.starts_with("--"))
                    .ok_or_else(|| err(line, "FROM without image".into()))?;
                if image.contains('$') {
                    return Err(err(line, "templated base image".into()));
                }
                let parsed = ImageRef::parse(image);
                let pinned = images
                    .pin(&parsed)
                    .ok_or_else(|| err(line, format!("cannot pin base image {image}")))?;
                base = Some(pinned);
            }
            _ if base.is_none() => return Err(err(line, format!("{kw} before FROM"))),
            "RUN" => {
                let body = if arg.starts_with('[') {
                    match serde_json::from_str::<Vec<String>>(arg) {
                        Ok(v) => v.iter().map(|w| shell_quote(w)).collect::<Vec<_>>().join(" "),
                        Err(_) => arg.to_string(),
                    }
                } else {
                    squash_spaces(arg)
                };
                if body.is_empty() {
                    continue;
                }
                if let Some(p) = apt_only_packages(&body) {
                    for pkg in p {
                        if !system_packages.contains(&pkg) {
                            system_packages.push(pkg);
                        }
                    }
                    continue;
                }
                steps.push((cwd.clone(), body));
            }
            "ENV" => env_vars.extend(parse_env(arg)),
            "ARG" => match arg.split_once('=') {
                Some((k, v)) => env_vars.push((k.trim().to_string(), v.trim().trim_matches('"').to_string())),
                None => return Err(err(line, format!("ARG {arg} has no default"))),
            },
            "WORKDIR" => {
                cwd = resolve_dir(&cwd, arg.trim_matches('"'));
                if workdir.is_none() {
                    workdir = Some(cwd.clone());
                }
            }
            "COPY" | "ADD" => {
                if arg.contains("--from") {
                    return Err(err(line, "multi-stage COPY --from is not supported".into()));
                }
                copy_source = true;
                let words: Vec<&str> = arg.split_whitespace().filter(|w| !w.starts_with("--")).collect();
                if words.first() == Some(&".") && words.len() == 2 && copy_dest.is_none() {
                    copy_dest = Some(resolve_dir(&cwd, words[1]));
                }
            }
            "ENTRYPOINT" => entrypoint = Some(exec_or_shell(arg)),
            "CMD" => cmd = Some(exec_or_shell(arg)),
            "LABEL" | "EXPOSE" | "USER" | "VOLUME" | "HEALTHCHECK" | "SHELL" | "STOPSIGNAL" | "MAINTAINER"
            | "ONBUILD" => {}
            other => return Err(err(line, format!("unsupported instruction {other}"))),
        }
    }

    let base_image = base.ok_or_else(|| err(1, "no FROM instruction".into()))?;
    let workdir = copy_dest
        .clone()
        .filter(|d| d != "/")
        .or(workdir)
        .unwrap_or_else(|| DEFAULT_WORKDIR.to_string());
    let build_steps = steps
        .into_iter()
        .map(|(dir, s)| if dir == workdir || dir == "/" { s } else { format!("cd {dir} && {s}") })
        .collect();
    let entrypoint = entrypoint.or(cmd).unwrap_or_default();
    let validate_cmd = validate.unwrap_or_else(|| {
        if entrypoint.is_empty() {
            Vec::new()
        } else {
            let mut v = entrypoint.clone();
            v.push("--help".into());
            v
        }
    });
    let mut dedup_env: Vec<(String, String)> = Vec::new();
    for (k, v) in env_vars {
        match dedup_env.iter_mut().find(|(ek, _)| *ek == k) {
            Some(slot) => slot.1 = v,
            None => dedup_env.push((k, v)),
        }
    }
    Ok(BuildSpec {
        base_image,
        system_packages,
        env_vars: dedup_env,
        copy_source,
        workdir,
        build_steps,
        entrypoint,
        validate_cmd,
    })
}
