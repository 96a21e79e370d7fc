//! `key = value` config files.
//!
//! Every key is a long flag name without the dashes. `true` turns a switch on
//! and `false` leaves it off. Flags given on the command line win over the
//! file.
//!
//! ```text
//! # run.conf
//! episodes = 100
//! density = highly,medium
//! evaluator = rubric
//! ```

use std::ffi::OsString;
use std::path::Path;

use crate::{CliError, CliResult};

pub fn parse(text: &str, origin: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!("{origin}:{}: expected key = value", n + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.starts_with('-') || k == "config" {
            return Err(CliError::Config(format!("{origin}:{}: bad key `{k}`", n + 1)));
        }
        out.push((k.to_string(), v.trim_matches('"').to_string()));
    }
    Ok(out)
}

fn to_flags(pairs: &[(String, String)]) -> Vec<OsString> {
    let mut out = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => out.push(format!("--{k}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{k}").into());
                out.push(v.into());
            }
        }
    }
    out
}

/// Replaces `--config FILE` with the flags the file spells out, placed right
/// after the subcommand so explicit flags override them.
pub fn expand(argv: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = Some(it.next().ok_or_else(|| CliError::Config("--config needs a file".into()))?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let p = Path::new(&path);
    let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
    let flags = to_flags(&parse(&text, &p.display().to_string())?);
    // the subcommand is the first bare word after the program name
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|i| i + 2)
        .unwrap_or(rest.len());
    let at = at.min(rest.len());
    rest.splice(at..at, flags);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_pairs_and_comments() {
        let p = parse("# c\n episodes = 5\n\nno-logs = true\nmodel = \"x\"\n", "t").unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p[2], ("model".into(), "x".into()));
        assert!(parse("episodes 5", "t").is_err());
    }

    #[test]
    fn expands_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.conf");
        std::fs::write(&f, "episodes = 5\nno-logs = true\nverbose = false\n").unwrap();
        let got = expand(os(&["mb", "run", "--config", f.to_str().unwrap(), "--episodes", "7"])).unwrap();
        assert_eq!(got, os(&["mb", "run", "--episodes", "5", "--no-logs", "--episodes", "7"]));
        let none = expand(os(&["mb", "gen"])).unwrap();
        assert_eq!(none, os(&["mb", "gen"]));
    }
}
