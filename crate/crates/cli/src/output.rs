//! Output staging: files are written into a hidden directory next to their
//! destination and moved into place only once the whole command succeeded.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use vessel_scales::io::{save_volume_as, write_atomic, AnyVolume, Format};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Nrrd,
    Raw,
}

impl OutputFormat {
    pub fn container(self) -> Format {
        match self {
            OutputFormat::Nrrd => Format::Nrrd,
            OutputFormat::Raw => Format::RawJson,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OutputFormat::Nrrd => "nrrd",
            OutputFormat::Raw => "raw",
        }
    }
}

pub struct Staging {
    out_dir: PathBuf,
    dir: PathBuf,
    files: Vec<String>,
}

impl Staging {
    pub fn new(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir)
            .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
        let dir = out_dir.join(format!(".vessel-scales-staging-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).ok();
        }
        fs::create_dir(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Staging {
            out_dir: out_dir.to_path_buf(),
            dir,
            files: Vec::new(),
        })
    }

    /// Stages a volume; returns the file names it produced.
    pub fn volume(
        &mut self,
        name: &str,
        v: &AnyVolume,
        format: OutputFormat,
    ) -> Result<Vec<String>> {
        let path = self
            .dir
            .join(format!("{name}.{}", format.container().extension()));
        save_volume_as(v, &path, format.container())?;
        let names = match format {
            OutputFormat::Nrrd => vec![format!("{name}.nrrd")],
            OutputFormat::Raw => vec![format!("{name}.raw"), format!("{name}.json")],
        };
        self.files.extend(names.iter().cloned());
        Ok(names)
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<String> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(name.to_string())
    }

    /// Moves every staged file into the output directory.
    pub fn commit(mut self) -> Result<()> {
        for name in std::mem::take(&mut self.files) {
            let dest = self.out_dir.join(&name);
            fs::rename(self.dir.join(&name), &dest)
                .with_context(|| format!("cannot move output into {}", dest.display()))?;
        }
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

/// File name without directories and without volume/table extensions.
pub fn stem(path: &Path) -> Result<String> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| UsageError(format!("input path {} has no file name", path.display())))?;
    let mut s = name;
    if let Some(t) = s.strip_suffix(".gz") {
        s = t;
    }
    for ext in [".nrrd", ".nhdr", ".raw", ".json", ".csv"] {
        if let Some(t) = s.strip_suffix(ext) {
            s = t;
            break;
        }
    }
    Ok(s.to_string())
}

/// Rejects inputs whose stems would collide in one output directory.
pub fn unique_stems(inputs: &[PathBuf]) -> Result<Vec<String>> {
    let stems = inputs.iter().map(|p| stem(p)).collect::<Result<Vec<_>>>()?;
    for (i, s) in stems.iter().enumerate() {
        if let Some(j) = stems[..i].iter().position(|t| t == s) {
            return Err(UsageError(format!(
                "inputs {} and {} share the output stem `{s}`",
                inputs[j].display(),
                inputs[i].display()
            ))
            .into());
        }
    }
    Ok(stems)
}

/// Writes to a file (atomically) or to stdout for `-`.
pub fn emit(target: &Path, bytes: &[u8]) -> Result<()> {
    if target == Path::new("-") {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes)?;
        out.flush()?;
        Ok(())
    } else {
        Ok(write_atomic(target, bytes)?)
    }
}

fn count_at_least(s: &str, min: usize) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= min => Ok(v),
        _ => Err(format!("expected an integer >= {min}, got `{s}`")),
    }
}

pub fn positive(s: &str) -> Result<usize, String> {
    count_at_least(s, 1)
}

pub fn at_least_two(s: &str) -> Result<usize, String> {
    count_at_least(s, 2)
}

pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}
