//! Manifests: newline-separated feature-file paths, one file per speaker
//! per role. Blank lines and `#` comments are skipped; relative paths
//! resolve against the manifest's directory.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use cyclevc_core::features::FeatureSequence;

use crate::error::{io_err, Error, Result};
use crate::mcp::read_features;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Eval,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Eval => "eval",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub speaker: String,
    pub role: Role,
    pub paths: Vec<PathBuf>,
}

pub fn parse_paths(text: &str, base: &Path) -> Vec<PathBuf> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or_default().trim())
        .filter(|l| !l.is_empty())
        .map(|l| base.join(l))
        .collect()
}

impl Manifest {
    /// Reads the list; fails on an empty list or any missing file.
    pub fn load(path: &Path, speaker: &str, role: Role) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::Config(format!("missing manifest for speaker {speaker}: {}", path.display()))
            }
            _ => io_err(path)(e),
        })?;
        let paths = parse_paths(&text, path.parent().unwrap_or(Path::new("")));
        if paths.is_empty() {
            return Err(Error::Config(format!("manifest {} lists no files", path.display())));
        }
        let missing: Vec<String> = paths
            .iter()
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "manifest {} lists missing files: {}",
                path.display(),
                missing.join(", ")
            )));
        }
        Ok(Self {
            speaker: speaker.into(),
            role,
            paths,
        })
    }

    /// Reads every listed file and checks that they share one Q.
    pub fn read_all(&self) -> Result<Vec<FeatureSequence>> {
        let seqs = self.paths.iter().map(|p| read_features(p)).collect::<Result<Vec<_>>>()?;
        let q = seqs[0].q();
        if let Some((p, s)) = self.paths.iter().zip(&seqs).find(|(_, s)| s.q() != q) {
            return Err(Error::Config(format!(
                "speaker {} {}: {} has Q = {}, {} has Q = {q}",
                self.speaker,
                self.role,
                p.display(),
                s.q(),
                self.paths[0].display()
            )));
        }
        Ok(seqs)
    }

    pub fn to_text(&self) -> String {
        self.paths.iter().map(|p| format!("{}\n", p.display())).collect()
    }
}

/// Train and eval lists of one speaker must not share a file.
pub fn check_disjoint(train: &Manifest, eval: &Manifest) -> Result<()> {
    let a: BTreeSet<PathBuf> = train.paths.iter().map(|p| canonical(p)).collect();
    let shared: Vec<String> = eval
        .paths
        .iter()
        .filter(|p| a.contains(&canonical(p)))
        .map(|p| p.display().to_string())
        .collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "speaker {}: files in both train and eval lists: {}",
            train.speaker,
            shared.join(", ")
        )))
    }
}

fn canonical(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

/// One evaluation pair, named relative to the converted and target
/// directories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub converted: String,
    pub target: String,
}

/// Pairing manifest: each line is `name` (same file name on both sides) or
/// `converted_name target_name`.
pub fn parse_pairing(text: &str) -> Result<Vec<Pair>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let pair = match parts.as_slice() {
            [both] => Pair {
                converted: both.to_string(),
                target: both.to_string(),
            },
            [c, t] => Pair {
                converted: c.to_string(),
                target: t.to_string(),
            },
            _ => {
                return Err(Error::Config(format!(
                    "pairing line {}: expected one or two names, got '{line}'",
                    i + 1
                )))
            }
        };
        out.push(pair);
    }
    if out.is_empty() {
        return Err(Error::Config("pairing manifest lists no pairs".into()));
    }
    Ok(out)
}

/// Resolves pairs against the two directories. Any pair with a missing
/// side, and any converted file the pairing does not mention, is an orphan.
pub fn resolve_pairs(pairs: &[Pair], converted: &Path, target: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut orphans = Vec::new();
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (c, t) = (converted.join(&p.converted), target.join(&p.target));
        if !c.is_file() {
            orphans.push(format!("{} (converted side missing)", c.display()));
        }
        if !t.is_file() {
            orphans.push(format!("{} (target side missing)", t.display()));
        }
        out.push((c, t));
    }
    let named: BTreeSet<&str> = pairs.iter().map(|p| p.converted.as_str()).collect();
    let mut extra: Vec<String> = fs::read_dir(converted)
        .map_err(io_err(converted))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".mcp") && !n.ends_with(".diff.mcp") && !named.contains(n.as_str()))
        .map(|n| format!("{} (not in pairing)", converted.join(n).display()))
        .collect();
    extra.sort();
    orphans.extend(extra);
    if orphans.is_empty() {
        Ok(out)
    } else {
        Err(Error::Orphans(orphans))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairing_lines() {
        let p = parse_pairing("# pairs\na.mcp\nb.mcp  c.mcp\n\n").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].target, "c.mcp");
        assert!(parse_pairing("a b c\n").is_err());
        assert!(parse_pairing("# nothing\n").is_err());
    }

    #[test]
    fn relative_paths_resolve_against_the_manifest() {
        let p = parse_paths("x/1.mcp\n  # skip\n/abs/2.mcp\n", Path::new("/m"));
        assert_eq!(p, vec![PathBuf::from("/m/x/1.mcp"), PathBuf::from("/abs/2.mcp")]);
    }
}
