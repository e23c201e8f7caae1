//! Optional `key=value` configuration files.
//!
//! Keys are the long flag names of the selected subcommand. File entries are
//! spliced into the argument list right after the subcommand name, ahead of
//! the user's own flags, so a flag given on the command line wins.

use std::collections::BTreeSet;
use std::path::Path;

use clap::Command;

/// Options that steer the run itself and therefore cannot come from a file.
const RESERVED: [&str; 3] = ["config", "out", "json-meta"];

#[derive(Debug)]
pub struct ConfigError(pub String);

pub fn read_entries(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config file {}: {e}", path.display())))?;
    parse_entries(&text).map_err(|(line, msg)| ConfigError(format!("{}:{line}: {msg}", path.display())))
}

/// Blank lines and lines starting with `#` are skipped; duplicate keys are
/// rejected rather than silently resolved.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>, (usize, String)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or((i + 1, format!("expected key=value, found '{line}'")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err((i + 1, "empty key".into()));
        }
        if !seen.insert(k.to_string()) {
            return Err((i + 1, format!("duplicate key '{k}'")));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Walks `path` down from the root command.
fn leaf<'a>(root: &'a Command, path: &[String]) -> &'a Command {
    path.iter().fold(root, |cmd, name| cmd.find_subcommand(name).expect("matched subcommand exists"))
}

pub fn check_keys(root: &Command, path: &[String], entries: &[(String, String)]) -> Result<(), ConfigError> {
    let cmd = leaf(root, path);
    let known: BTreeSet<&str> = cmd.get_arguments().filter_map(|a| a.get_long()).collect();
    for (k, _) in entries {
        if RESERVED.contains(&k.as_str()) {
            return Err(ConfigError(format!("field '{k}': not allowed in a config file")));
        }
        if !known.contains(k.as_str()) {
            let mut valid: Vec<&str> = known.iter().copied().filter(|n| !RESERVED.contains(n) && *n != "help").collect();
            valid.sort_unstable();
            return Err(ConfigError(format!(
                "field '{k}': unknown key for '{}' (valid keys: {})",
                path.join(" "),
                valid.join(", ")
            )));
        }
    }
    Ok(())
}

/// Inserts `--key=value` tokens right after the last subcommand name.
pub fn splice(argv: &[String], path: &[String], entries: &[(String, String)]) -> Vec<String> {
    let mut at = 1;
    for name in path {
        while at < argv.len() && &argv[at] != name {
            at += 1;
        }
        at += 1;
    }
    let at = at.min(argv.len());
    let mut out = argv[..at].to_vec();
    out.extend(entries.iter().map(|(k, v)| format!("--{k}={v}")));
    out.extend_from_slice(&argv[at..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_rejects_duplicates() {
        let e = parse_entries("# c\n\na = 1\nb=x y\n").unwrap();
        assert_eq!(e, vec![("a".into(), "1".into()), ("b".into(), "x y".into())]);
        assert_eq!(parse_entries("a=1\na=2").unwrap_err().0, 2);
        assert!(parse_entries("novalue").is_err());
    }

    #[test]
    fn splice_goes_after_the_subcommand_path() {
        let argv: Vec<String> = ["bin", "--out", "f", "cqec", "markov", "--r", "3"].iter().map(|s| s.to_string()).collect();
        let path = vec!["cqec".to_string(), "markov".to_string()];
        let s = splice(&argv, &path, &[("tmax".into(), "2".into())]);
        assert_eq!(s, ["bin", "--out", "f", "cqec", "markov", "--tmax=2", "--r", "3"]);
    }
}
