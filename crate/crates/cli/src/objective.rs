//! External objectives run through the shell.
//!
//! The child receives the point on stdin as one line of space-separated
//! decimals and must print a single finite number on stdout. A nonzero exit
//! status or anything unparsable counts as a failed evaluation.

use std::io::Write;
use std::process::{Command, Stdio};

/// Space-separated plain decimals that parse back to the same values.
pub fn format_point(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Accepts space- or comma-separated decimals.
pub fn parse_point(s: &str) -> Result<Vec<f64>, String> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

pub fn evaluate(command: &str, x: &[f64]) -> Result<f64, String> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| format!("spawning `{command}`: {e}"))?;
    if let Some(mut stdin) = child.stdin.take() {
        // A child that never reads its input closes the pipe early; that is
        // not an error on our side.
        let _ = writeln!(stdin, "{}", format_point(x));
    }
    let out = child.wait_with_output().map_err(|e| format!("waiting for `{command}`: {e}"))?;
    if !out.status.success() {
        return Err(format!("`{command}` exited with {}", out.status));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    let text = text.trim();
    let y: f64 = text.parse().map_err(|_| format!("`{command}` printed {text:?}, expected a number"))?;
    if !y.is_finite() {
        return Err(format!("`{command}` printed non-finite {y}"));
    }
    Ok(y)
}

/// Worst successful value plus one sample standard deviation, or zero when
/// nothing has succeeded yet.
pub fn default_penalty(successes: &[f64]) -> f64 {
    let n = successes.len();
    if n == 0 {
        return 0.0;
    }
    let worst = successes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if n == 1 {
        return worst;
    }
    let mean = successes.iter().sum::<f64>() / n as f64;
    let var = successes.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    worst + var.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_round_trip() {
        let x = [0.1, 1.0 / 3.0, -2.5e-17, 7.0];
        let s = format_point(&x);
        assert_eq!(parse_point(&s).unwrap(), x);
        assert_eq!(parse_point("1, 2 3").unwrap(), [1.0, 2.0, 3.0]);
        assert!(parse_point("1 two").is_err());
    }

    #[test]
    fn shell_protocol() {
        assert_eq!(evaluate("awk '{print $1 + $2}'", &[1.5, 2.0]), Ok(3.5));
        assert_eq!(evaluate("awk '{print $1 * 2}'", &[0.25]), Ok(0.5));
        assert!(evaluate("exit 3", &[0.0]).is_err());
        assert!(evaluate("echo nope", &[0.0]).is_err());
        assert!(evaluate("echo inf", &[0.0]).is_err());
        assert_eq!(evaluate("echo 1.25", &[0.0]), Ok(1.25));
    }

    #[test]
    fn penalty() {
        assert_eq!(default_penalty(&[]), 0.0);
        assert_eq!(default_penalty(&[2.0]), 2.0);
        assert_eq!(default_penalty(&[1.0, 3.0]), 3.0 + 2f64.sqrt());
    }
}
