//! Checksum-verifying dataset download. Data is never bundled.

use std::fs;
use std::io;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::manifest::sha256_file;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FetchOutcome {
    /// The file already existed and matched the checksum.
    Verified,
    Downloaded,
}

fn verify(path: &Path, expected: &str) -> Result<()> {
    let (actual, _) = sha256_file(path)?;
    if actual.eq_ignore_ascii_case(expected) {
        Ok(())
    } else {
        Err(Error::Checksum {
            path: path.to_path_buf(),
            expected: expected.to_ascii_lowercase(),
            actual,
        })
    }
}

/// Downloads `url` to `dest` unless `dest` already exists, then checks
/// its sha256. A mismatching download is removed.
pub fn fetch(url: &str, dest: &Path, sha256: &str) -> Result<FetchOutcome> {
    if dest.exists() {
        verify(dest, sha256)?;
        return Ok(FetchOutcome::Verified);
    }
    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let partial = dest.with_extension("part");
    {
        let mut resp = ureq::get(url).call().map_err(|e| Error::Network(format!("{url}: {e}")))?;
        let mut out = fs::File::create(&partial).map_err(|e| Error::io(&partial, e))?;
        io::copy(&mut resp.body_mut().as_reader(), &mut out).map_err(|e| Error::io(&partial, e))?;
    }
    if let Err(e) = verify(&partial, sha256) {
        let _ = fs::remove_file(&partial);
        return Err(match e {
            Error::Checksum { expected, actual, .. } => Error::Checksum {
                path: dest.to_path_buf(),
                expected,
                actual,
            },
            other => other,
        });
    }
    fs::rename(&partial, dest).map_err(|e| Error::io(dest, e))?;
    Ok(FetchOutcome::Downloaded)
}
