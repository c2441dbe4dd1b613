//! Minimal POSIX-shell word splitting for build steps.
//!
//! Handles quoting, backslash escapes and the list operators `&&`, `||`, `;`
//! and `|`. Anything fancier (subshells, redirections, expansions) is kept as
//! literal words, which is enough for reasoning about which programs a step
//! runs and which files it touches.

/// One simple command: leading `VAR=value` assignments and `sudo` stripped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleCommand {
    pub words: Vec<String>,
}

impl SimpleCommand {
    pub fn program(&self) -> Option<&str> {
        self.words.first().map(String::as_str)
    }

    pub fn args(&self) -> &[String] {
        if self.words.is_empty() {
            &[]
        } else {
            &self.words[1..]
        }
    }

    pub fn has_flag(&self, flags: &[&str]) -> bool {
        self.args().iter().any(|a| flags.contains(&a.as_str()))
    }

    /// Value following any of `flags`, either as the next word or `--flag=value`.
    pub fn flag_value(&self, flags: &[&str]) -> Option<&str> {
        let args = self.args();
        for (i, a) in args.iter().enumerate() {
            if flags.contains(&a.as_str()) {
                return args.get(i + 1).map(String::as_str);
            }
            for f in flags {
                if let Some(v) = a.strip_prefix(&format!("{f}=")) {
                    return Some(v);
                }
            }
        }
        None
    }

    /// Positional arguments, skipping options and the values of `valued` flags.
    pub fn positionals(&self, valued: &[&str]) -> Vec<&str> {
        let mut out = Vec::new();
        let mut skip = false;
        for a in self.args() {
            if skip {
                skip = false;
                continue;
            }
            if valued.contains(&a.as_str()) {
                skip = true;
                continue;
            }
            if a.starts_with('-') {
                continue;
            }
            out.push(a.as_str());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Op,
}

fn tokenize(line: &str) -> Vec<Tok> {
    let mut toks = Vec::new();
    let mut cur = String::new();
    let mut in_word = false;
    let mut chars = line.chars().peekable();
    let flush = |cur: &mut String, in_word: &mut bool, toks: &mut Vec<Tok>| {
        if *in_word {
            toks.push(Tok::Word(std::mem::take(cur)));
            *in_word = false;
        }
    };
    while let Some(c) = chars.next() {
        match c {
            '\'' => {
                in_word = true;
                for d in chars.by_ref() {
                    if d == '\'' {
                        break;
                    }
                    cur.push(d);
                }
            }
            '"' => {
                in_word = true;
                while let Some(d) = chars.next() {
                    match d {
                        '"' => break,
                        '\\' => {
                            if let Some(&n) = chars.peek() {
                                if matches!(n, '"' | '\\' | '$' | '`') {
                                    cur.push(n);
                                    chars.next();
                                    continue;
                                }
                            }
                            cur.push('\\');
                        }
                        _ => cur.push(d),
                    }
                }
            }
            '\\' => {
                in_word = true;
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            }
            '&' if chars.peek() == Some(&'&') => {
                chars.next();
                flush(&mut cur, &mut in_word, &mut toks);
                toks.push(Tok::Op);
            }
            '|' => {
                if chars.peek() == Some(&'|') {
                    chars.next();
                }
                flush(&mut cur, &mut in_word, &mut toks);
                toks.push(Tok::Op);
            }
            ';' => {
                flush(&mut cur, &mut in_word, &mut toks);
                toks.push(Tok::Op);
            }
            c if c.is_whitespace() => flush(&mut cur, &mut in_word, &mut toks),
            c => {
                in_word = true;
                cur.push(c);
            }
        }
    }
    flush(&mut cur, &mut in_word, &mut toks);
    toks
}

fn is_assignment(w: &str) -> bool {
    match w.split_once('=') {
        Some((k, _)) => {
            !k.is_empty()
                && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && !k.starts_with(|c: char| c.is_ascii_digit())
        }
        None => false,
    }
}

/// Shell words of `s`, with list operators dropped and nothing stripped.
pub fn split_words(s: &str) -> Vec<String> {
    tokenize(s)
        .into_iter()
        .filter_map(|t| match t {
            Tok::Word(w) => Some(w),
            Tok::Op => None,
        })
        .collect()
}

/// Splits a build step into its simple commands.
pub fn split_commands(step: &str) -> Vec<SimpleCommand> {
    let mut out = Vec::new();
    let mut words: Vec<String> = Vec::new();
    let mut push = |words: &mut Vec<String>| {
        let mut ws: Vec<String> = std::mem::take(words);
        while ws.first().is_some_and(|w| is_assignment(w) || w == "sudo" || w == "exec") {
            ws.remove(0);
        }
        if !ws.is_empty() {
            out.push(SimpleCommand { words: ws });
        }
    };
    for t in tokenize(step) {
        match t {
            Tok::Word(w) => words.push(w),
            Tok::Op => push(&mut words),
        }
    }
    push(&mut words);
    out
}

/// `python -m pip install ...` normalized to `pip install ...`.
pub fn normalize_pip(cmd: &SimpleCommand) -> Option<SimpleCommand> {
    let prog = cmd.program()?;
    let base = prog.rsplit('/').next().unwrap_or(prog);
    if base.starts_with("pip") {
        return Some(SimpleCommand {
            words: std::iter::once("pip".to_string()).chain(cmd.args().iter().cloned()).collect(),
        });
    }
    if base.starts_with("python") && cmd.args().len() >= 2 && cmd.args()[0] == "-m" && cmd.args()[1] == "pip" {
        return Some(SimpleCommand {
            words: std::iter::once("pip".to_string()).chain(cmd.args()[2..].iter().cloned()).collect(),
        });
    }
    None
}

/// Reason a step would block waiting for a terminal, if any.
pub fn interactive_violation(step: &str) -> Option<String> {
    for cmd in split_commands(step) {
        let Some(prog) = cmd.program() else { continue };
        let base = prog.rsplit('/').next().unwrap_or(prog);
        if cmd.has_flag(&["-it", "-ti", "--interactive", "--tty"]) {
            return Some(format!("`{base}` run with an interactive flag"));
        }
        match base {
            "read" | "vim" | "vi" | "nano" | "less" | "more" | "passwd" => {
                return Some(format!("`{base}` waits for terminal input"))
            }
            "apt-get" | "apt" | "yum" | "dnf" | "zypper" => {
                let installs = cmd.args().iter().any(|a| a == "install" || a == "upgrade" || a == "remove");
                let yes = cmd
                    .args()
                    .iter()
                    .any(|a| a == "-y" || a == "--yes" || a == "--assume-yes" || a == "-qy" || a == "-yq" || a == "-n");
                if installs && !yes {
                    return Some(format!("`{base}` install without -y"));
                }
            }
            "conda" | "mamba" => {
                let installs = cmd.args().iter().any(|a| a == "install" || a == "create" || a == "update");
                if installs && !cmd.has_flag(&["-y", "--yes"]) {
                    return Some(format!("`{base}` install without -y"));
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(step: &str) -> Vec<Vec<String>> {
        split_commands(step).into_iter().map(|c| c.words).collect()
    }

    #[test]
    fn operators_and_quotes() {
        assert_eq!(
            words(r#"cd src && CC=gcc make -j2; echo "a && b" | tee 'x y'"#),
            vec![
                vec!["cd", "src"],
                vec!["make", "-j2"],
                vec!["echo", "a && b"],
                vec!["tee", "x y"],
            ]
        );
    }

    #[test]
    fn sudo_is_stripped() {
        assert_eq!(words("sudo apt-get install -y x"), vec![vec!["apt-get", "install", "-y", "x"]]);
    }

    #[test]
    fn pip_forms() {
        let c = &split_commands("python3 -m pip install -r req.txt")[0];
        let p = normalize_pip(c).unwrap();
        assert_eq!(p.words, vec!["pip", "install", "-r", "req.txt"]);
        assert_eq!(p.flag_value(&["-r", "--requirement"]), Some("req.txt"));
        let c = &split_commands("pip install --requirement=a.txt numpy")[0];
        assert_eq!(c.flag_value(&["-r", "--requirement"]), Some("a.txt"));
        assert_eq!(c.positionals(&["-r"]), vec!["install", "numpy"]);
    }

    #[test]
    fn interactive_detection() {
        assert!(interactive_violation("apt-get install git").is_some());
        assert!(interactive_violation("apt-get update && apt-get install -y git").is_none());
        assert!(interactive_violation("read -p 'name?' NAME").is_some());
        assert!(interactive_violation("conda create -n x python").is_some());
        assert!(interactive_violation("docker run -it img").is_some());
        assert!(interactive_violation("make -j4").is_none());
    }
}
