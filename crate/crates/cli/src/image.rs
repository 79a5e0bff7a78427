//! Device image files and the state kept next to them.
//!
//! `<image>.pending` holds the uncommitted head (JSON) between invocations,
//! and `<image>.lock` is an advisory lock held by mutating commands.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, ErrorKind};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use flashquad::codec::PageAddr;
use flashquad::flash::FlashDevice;
use flashquad::store::Pending;
use flashquad::{Database, DbOptions};
use serde::{Deserialize, Serialize};

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
struct PendingFile {
    version: u32,
    root: u32,
}

pub struct Lock {
    path: PathBuf,
}

impl Lock {
    pub fn acquire(image: &Path) -> Result<Self> {
        let path = sibling(image, ".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => bail!(
                "{} is locked by another process (remove {} if it is stale)",
                image.display(),
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn load_device(path: &Path) -> Result<FlashDevice> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    FlashDevice::load(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

/// Writes to a temporary file in the same directory, then renames it over
/// `path`.
pub fn save_device(dev: &FlashDevice, path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    dev.save(BufWriter::new(tmp.as_file_mut()))?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| anyhow!(e.error))
        .with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

fn read_pending(image: &Path) -> Result<Option<Pending>> {
    let path = sibling(image, ".pending");
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
    };
    let p: PendingFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(Some(Pending {
        version: p.version,
        root: PageAddr::new(p.root)?,
    }))
}

fn write_pending(image: &Path, pending: Option<Pending>) -> Result<()> {
    let path = sibling(image, ".pending");
    match pending {
        None => match fs::remove_file(&path) {
            Err(e) if e.kind() != ErrorKind::NotFound => {
                Err(e).with_context(|| format!("removing {}", path.display()))
            }
            _ => Ok(()),
        },
        Some(p) => {
            let text = serde_json::to_string(&PendingFile {
                version: p.version,
                root: p.root.get(),
            })?;
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
        }
    }
}

/// A mounted image. Mutating sessions hold the lock and write back on
/// `finish`; a session dropped without `finish` leaves the file untouched.
pub struct Session {
    pub db: Database,
    path: PathBuf,
    _lock: Option<Lock>,
}

impl Session {
    pub fn open(path: &Path, mutating: bool) -> Result<Self> {
        let lock = if mutating { Some(Lock::acquire(path)?) } else { None };
        let dev = load_device(path)?;
        let pending = read_pending(path)?;
        let db = Database::mount_with_pending(dev, pending)
            .with_context(|| format!("mounting {}", path.display()))?;
        Ok(Self {
            db,
            path: path.to_owned(),
            _lock: lock,
        })
    }

    /// Formats a fresh image with an empty committed version.
    pub fn create(path: &Path, dev: FlashDevice, options: DbOptions) -> Result<Self> {
        let lock = Lock::acquire(path)?;
        let mut db = Database::format(dev, options)?;
        db.create_empty()?;
        Ok(Self {
            db,
            path: path.to_owned(),
            _lock: Some(lock),
        })
    }

    pub fn finish(self) -> Result<()> {
        let pending = self.db.store().pending();
        // The sidecar names pages on the image, so the image goes first.
        save_device(self.db.device(), &self.path)?;
        write_pending(&self.path, pending)
    }
}
