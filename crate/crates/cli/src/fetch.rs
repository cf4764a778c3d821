//! Embedding download: fetch the archive once, check its SHA-256, extract the vector file.

use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use infodemic::config::RunConfig;
use sha2::{Digest, Sha256};

fn sha256_of(path: &Path) -> Result<String> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    io::copy(&mut f, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

fn download(url: &str, dest: &Path) -> Result<()> {
    log::info!("downloading {url}");
    let mut resp = reqwest::blocking::Client::builder()
        .timeout(None)
        .build()?
        .get(url)
        .send()
        .and_then(|r| r.error_for_status())
        .with_context(|| format!("downloading {url}"))?;
    let partial = dest.with_extension("part");
    let mut out = BufWriter::new(File::create(&partial)?);
    resp.copy_to(&mut out)?;
    drop(out);
    fs::rename(&partial, dest)?;
    Ok(())
}

/// Makes `config.embeddings_path` available and returns it. An existing file is left alone.
/// `from` may name a local zip archive or a plain vector file.
pub fn fetch_embeddings(config: &RunConfig, from: Option<&Path>) -> Result<PathBuf> {
    let target = config.embeddings_path.clone();
    if target.exists() && from.is_none() {
        println!("{} already present", target.display());
        return Ok(target);
    }
    let archive = match from {
        Some(p) => p.to_path_buf(),
        None => {
            let name = config.embeddings_url.rsplit('/').next().unwrap_or("embeddings.zip");
            fs::create_dir_all(&config.cache_dir)?;
            let dest = config.cache_dir.join(name);
            if !dest.exists() {
                download(&config.embeddings_url, &dest)?;
            }
            dest
        }
    };
    let digest = sha256_of(&archive)?;
    if !config.embeddings_sha256.is_empty() && !digest.eq_ignore_ascii_case(&config.embeddings_sha256) {
        bail!(
            "checksum mismatch for {}: expected {}, got {digest}",
            archive.display(),
            config.embeddings_sha256
        );
    }
    if config.embeddings_sha256.is_empty() {
        println!("sha256 {digest} (set embeddings_sha256 to pin it)");
    }
    if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let is_zip = archive.extension().is_some_and(|e| e.eq_ignore_ascii_case("zip"));
    if is_zip {
        let mut zip = zip::ZipArchive::new(File::open(&archive)?).context("reading archive")?;
        let mut member = zip
            .by_name(&config.embeddings_member)
            .with_context(|| format!("{} has no member {}", archive.display(), config.embeddings_member))?;
        let mut out = BufWriter::new(File::create(&target)?);
        io::copy(&mut member, &mut out)?;
    } else {
        fs::copy(&archive, &target)?;
    }
    Ok(target)
}
