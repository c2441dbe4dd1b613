use std::io::{Read, Write};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use super::{Backend, ExecError, ExecutionLimits, ExitStatus, RawBuild, RawRun};
use crate::recipe::BuildSpec;

/// Drives a Docker-compatible engine through its command-line client.
#[derive(Debug, Clone)]
pub struct EngineBackend {
    pub program: String,
}

impl Default for EngineBackend {
    fn default() -> Self {
        Self { program: "docker".into() }
    }
}

struct Finished {
    exit: ExitStatus,
    output: String,
    elapsed: Duration,
}

fn drain(mut r: impl Read + Send + 'static) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = r.read_to_end(&mut buf);
        buf
    })
}

fn wait_limited(mut child: Child, timeout: Duration, grace: Duration) -> Result<Finished, ExecError> {
    let start = Instant::now();
    let out = child.stdout.take().map(drain);
    let err = child.stderr.take().map(drain);
    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(s)) => break Some(s),
            Ok(None) => {}
            Err(e) => return Err(ExecError::Infrastructure(format!("waiting for engine: {e}"))),
        }
        let elapsed = start.elapsed();
        if elapsed >= timeout + grace {
            let _ = child.kill();
            let _ = child.wait();
            timed_out = true;
            break None;
        }
        if elapsed >= timeout && !timed_out {
            timed_out = true;
            #[cfg(unix)]
            {
                let _ = Command::new("kill").arg("-TERM").arg(child.id().to_string()).status();
            }
        }
        thread::sleep(Duration::from_millis(50));
    };
    let mut output = String::new();
    for h in [out, err].into_iter().flatten() {
        output.push_str(&String::from_utf8_lossy(&h.join().unwrap_or_default()));
    }
    let exit = match status {
        _ if timed_out => ExitStatus::Timeout,
        Some(s) => ExitStatus::Code(s.code().unwrap_or(-1)),
        None => ExitStatus::Timeout,
    };
    Ok(Finished { exit, output, elapsed: start.elapsed() })
}

impl EngineBackend {
    fn command(&self) -> Command {
        Command::new(&self.program)
    }

    fn spawn(&self, cmd: &mut Command) -> Result<Child, ExecError> {
        cmd.stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ExecError::Infrastructure(format!("cannot run `{}`: {e}", self.program)))
    }

    fn image_id(&self, tag: &str) -> Result<String, ExecError> {
        let out = self
            .command()
            .args(["image", "inspect", "--format", "{{.Id}}", tag])
            .output()
            .map_err(|e| ExecError::Infrastructure(format!("cannot run `{}`: {e}", self.program)))?;
        if !out.status.success() {
            return Err(ExecError::Infrastructure(format!(
                "image inspect failed: {}",
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }
}

impl Backend for EngineBackend {
    fn name(&self) -> &str {
        "engine"
    }

    fn build(&self, spec: &BuildSpec, context: &Path, limits: &ExecutionLimits) -> Result<RawBuild, ExecError> {
        let digest = spec.digest();
        let tag = format!("deployforge/{}:latest", &digest[..16]);
        let mut cmd = self.command();
        cmd.arg("build")
            .arg("--progress=plain")
            .arg("--memory")
            .arg(limits.memory_bytes.to_string())
            .arg("--cpu-period=100000")
            .arg(format!("--cpu-quota={}", 100_000 * limits.cpu_slots as u64))
            .arg("-t")
            .arg(&tag)
            .arg("-f")
            .arg("-")
            .arg(context)
            .stdin(Stdio::piped());
        let mut child = self.spawn(&mut cmd)?;
        if let Some(mut stdin) = child.stdin.take() {
            stdin
                .write_all(spec.render().as_bytes())
                .map_err(|e| ExecError::Infrastructure(format!("writing recipe to engine: {e}")))?;
        }
        let f = wait_limited(
            child,
            Duration::from_secs(limits.build_timeout_s),
            Duration::from_secs(limits.grace_s),
        )?;
        let image_digest = if f.exit.is_success() { Some(self.image_id(&tag)?) } else { None };
        Ok(RawBuild {
            exit: f.exit,
            log: f.output,
            duration_s: f.elapsed.as_secs_f64(),
            image_digest,
        })
    }

    fn run(&self, image_digest: &str, cmd: &[String], limits: &ExecutionLimits) -> Result<RawRun, ExecError> {
        if self.image_id(image_digest).is_err() {
            return Err(ExecError::MissingImage(image_digest.to_string()));
        }
        let mut c = self.command();
        c.args(["run", "--rm", "--network", "none"])
            .arg("--memory")
            .arg(limits.memory_bytes.to_string())
            .arg("--entrypoint")
            .arg(&cmd[0])
            .arg(image_digest)
            .args(&cmd[1..])
            .stdin(Stdio::null());
        let child = self.spawn(&mut c)?;
        let f = wait_limited(
            child,
            Duration::from_secs(limits.validate_timeout_s),
            Duration::from_secs(limits.grace_s),
        )?;
        Ok(RawRun {
            exit: f.exit,
            log: f.output,
            duration_s: f.elapsed.as_secs_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_engine_is_infrastructure() {
        let b = EngineBackend { program: "/nonexistent/engine-binary".into() };
        let spec = BuildSpec::parse(
            "FROM alpine:3.19\nWORKDIR /app\nENTRYPOINT [\"true\"]\n# validate [\"true\"]\n",
        );
        if let Ok(spec) = spec {
            let err = b.build(&spec, Path::new("."), &ExecutionLimits::default()).unwrap_err();
            assert!(err.is_infrastructure());
        }
        let err = b.run("sha256:x", &["true".into()], &ExecutionLimits::default()).unwrap_err();
        assert!(err.is_infrastructure());
    }

    #[cfg(unix)]
    #[test]
    fn wait_kills_at_timeout() {
        let child = Command::new("sleep")
            .arg("5")
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let f = wait_limited(child, Duration::from_millis(100), Duration::from_millis(200)).unwrap();
        assert_eq!(f.exit, ExitStatus::Timeout);
        assert!(f.elapsed < Duration::from_secs(2));
    }
}
