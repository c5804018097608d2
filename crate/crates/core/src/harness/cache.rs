//! Reference-solution cache: the projected-gradient solve dominates runtime
//! at moderate dimensions, so its result is stored beside the instance keyed
//! by a content hash and reused on a match.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bregman::Point;
use crate::error::{Error, Result};
use crate::qap::{reference_solve, QapProblem};
use crate::solver::Reference;

#[derive(Serialize, Deserialize)]
struct CacheDoc {
    instance_sha256: String,
    n: usize,
    tol: f64,
    f_star: f64,
    pg_residual: f64,
    fw_gap: f64,
    /// Row-major optimal point.
    x_star: Vec<f64>,
}

pub fn cache_path(instance_path: &Path) -> PathBuf {
    let mut name = instance_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".into());
    name.push_str(".reference.json");
    instance_path.with_file_name(name)
}

pub fn content_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn try_load(path: &Path, hash: &str, n: usize, tol: f64) -> Option<Reference> {
    let text = fs::read_to_string(path).ok()?;
    let doc: CacheDoc = serde_json::from_str(&text).ok()?;
    if doc.instance_sha256 != hash || doc.n != n || doc.tol > tol || doc.x_star.len() != n * n {
        return None;
    }
    let x = DMatrix::from_row_slice(n, n, &doc.x_star);
    Some(Reference {
        x_star: Point::new(x).ok()?,
        f_star: doc.f_star,
    })
}

/// Write-temp-then-rename so concurrent workers never observe a torn file.
fn store_atomic(path: &Path, doc: &CacheDoc) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        std::process::id()
    ));
    fs::write(&tmp, serde_json::to_string_pretty(doc)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads the cached reference for this instance content, or computes and
/// caches it.
pub fn load_or_compute_reference(
    problem: &QapProblem,
    instance_path: &Path,
    instance_bytes: &[u8],
    tol: f64,
) -> Result<Reference> {
    let hash = content_hash(instance_bytes);
    let path = cache_path(instance_path);
    let n = problem.instance.n;
    if let Some(hit) = try_load(&path, &hash, n, tol) {
        return Ok(hit);
    }
    let sol = reference_solve(problem, tol)?;
    let doc = CacheDoc {
        instance_sha256: hash,
        n,
        tol,
        f_star: sol.f_star,
        pg_residual: sol.pg_residual,
        fw_gap: sol.fw_gap,
        x_star: sol.x_star.as_matrix().transpose().iter().copied().collect(),
    };
    store_atomic(&path, &doc)?;
    Ok(Reference {
        x_star: sol.x_star,
        f_star: sol.f_star,
    })
}

/// Loads a reference from an explicit cache file, without hash checking.
pub fn load_reference_file(path: &Path) -> Result<Reference> {
    let text = fs::read_to_string(path)?;
    let doc: CacheDoc = serde_json::from_str(&text)?;
    if doc.x_star.len() != doc.n * doc.n {
        return Err(Error::Parse(format!(
            "reference file {} has inconsistent dimensions",
            path.display()
        )));
    }
    let x = DMatrix::from_row_slice(doc.n, doc.n, &doc.x_star);
    Ok(Reference {
        x_star: Point::new(x)?,
        f_star: doc.f_star,
    })
}
