//! Merge series CSVs into one long-format table.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

pub const COLUMNS: &str = "t,k,N,sigma,seed,metric,value,stderr";

#[derive(Debug, Default, Clone, PartialEq)]
struct FileTags {
    n: String,
    sigma: String,
    seed: String,
}

fn parse_tags(line: &str) -> FileTags {
    let mut tags = FileTags::default();
    for field in line.split_whitespace() {
        if let Some((key, value)) = field.split_once('=') {
            match key {
                "n_particles" => tags.n = value.to_string(),
                "sigma" => tags.sigma = value.to_string(),
                "seed" => tags.seed = value.to_string(),
                _ => {}
            }
        }
    }
    tags
}

/// Numeric suffix `_<prefix><digits>` anywhere in `metric`.
fn suffix(metric: &str, prefix: char) -> Option<&str> {
    metric.split('_').find_map(|part| {
        let rest = part.strip_prefix(prefix)?;
        (!rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())).then_some(rest)
    })
}

fn convert(path: &Path, text: &str, out: &mut String) -> Result<()> {
    let mut tags = FileTags::default();
    let mut seen_header = false;
    for (lineno, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix("# tags:") {
            tags = parse_tags(rest);
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if line != "t,metric,value,stderr" {
                return Err(CliError::Config(format!("{}: not a series file", path.display())));
            }
            seen_header = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let [t, metric, value, stderr] = cols[..] else {
            return Err(CliError::Config(format!("{}:{}: expected 4 columns", path.display(), lineno + 1)));
        };
        let k = suffix(metric, 'k').unwrap_or("");
        let n = suffix(metric, 'n').unwrap_or(&tags.n);
        out.push_str(&format!("{t},{k},{n},{},{},{metric},{value},{stderr}\n", tags.sigma, tags.seed));
    }
    Ok(())
}

/// Long-format CSV with columns [`COLUMNS`]; all missing files are reported together.
pub fn emit_plotdata(files: &[PathBuf]) -> Result<String> {
    let missing: Vec<PathBuf> = files.iter().filter(|p| !p.is_file()).cloned().collect();
    if !missing.is_empty() {
        return Err(CliError::Missing(missing));
    }
    let mut out = format!("{COLUMNS}\n");
    for path in files {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        convert(path, &text, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_header_only() {
        assert_eq!(emit_plotdata(&[]).unwrap(), format!("{COLUMNS}\n"));
    }

    #[test]
    fn missing_files_are_listed() {
        let err = emit_plotdata(&[PathBuf::from("/nonexistent/a.csv"), PathBuf::from("/nonexistent/b.csv")])
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("a.csv") && msg.contains("b.csv"), "{msg}");
    }

    #[test]
    fn suffixes_fill_k_and_n() {
        let text = "# tags: n_particles=8 sigma=1 seed=4\nt,metric,value,stderr\n0,l2_k2,1.0e0,1.0e-2\n2,l1_raw_n64,3.0e-3,1.0e-3\n";
        let mut out = String::new();
        convert(Path::new("x.csv"), text, &mut out).unwrap();
        assert_eq!(out, "0,2,8,1,4,l2_k2,1.0e0,1.0e-2\n2,,64,1,4,l1_raw_n64,3.0e-3,1.0e-3\n");
    }

    #[test]
    fn foreign_csv_is_rejected() {
        let mut out = String::new();
        assert!(convert(Path::new("x.csv"), "a,b\n1,2\n", &mut out).is_err());
    }
}
