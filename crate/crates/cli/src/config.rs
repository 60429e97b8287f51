//! Flat `key = value` config files, spliced into argv as flags.

use std::path::Path;

use crate::error::CliError;

/// Parses a config file into `--key value` tokens.
///
/// Blank lines and lines starting with `#` are skipped. Keys may use `_` or
/// `-`; both map to the long flag of the same name.
pub fn load(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text).map_err(|msg| CliError::Usage(format!("{}: {msg}", path.display())))
}

pub fn parse(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", no + 1))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(format!("line {}: bad key `{key}`", no + 1));
        }
        if key == "config" {
            return Err(format!("line {}: config files cannot include other config files", no + 1));
        }
        out.push(format!("--{key}"));
        out.push(value.trim().to_string());
    }
    Ok(out)
}

/// Inserts config tokens directly after the subcommand, so flags given on
/// the command line (which come later) win.
pub fn splice(args: Vec<String>, commands: &[&str]) -> Result<Vec<String>, CliError> {
    let mut config = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            config = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        }
    }
    let Some(path) = config else {
        return Ok(args);
    };
    let Some(at) = args.iter().skip(1).position(|a| commands.contains(&a.as_str())) else {
        return Ok(args);
    };
    let tokens = load(Path::new(&path))?;
    let mut out = args;
    let tail = out.split_off(at + 2);
    out.extend(tokens);
    out.extend(tail);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_skips_comments() {
        let t = parse("# run\nmachines = 50\n\nkernel=fourth-order\ngrid_multiplier = 2\n").unwrap();
        assert_eq!(t, ["--machines", "50", "--kernel", "fourth-order", "--grid-multiplier", "2"]);
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(parse("machines 50").is_err());
    }

    #[test]
    fn splice_puts_config_before_user_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "machines=4\n").unwrap();
        let args: Vec<String> = ["gpa", "fit", "--config", path.to_str().unwrap(), "--machines", "8"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = splice(args, &["fit"]).unwrap();
        assert_eq!(out[2..4], ["--machines", "4"]);
        assert_eq!(out.last().unwrap(), "8");
    }
}
