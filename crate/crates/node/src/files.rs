//! Key files, chain files and the pending-payload pool next to a chain.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use studchain_core::encoding::DecodeError;
use studchain_core::store::{read_records, ChainFileError};
use studchain_core::{ChainStore, DifficultySchedule, Digest, OrgId, OrgKey, Payload};

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: key file must hold 64 lowercase hex digits", .0.display())]
    KeyInvalid(PathBuf),
    #[error("{} already exists", .0.display())]
    KeyExists(PathBuf),
    #[error("{}: {source}", path.display())]
    Chain { path: PathBuf, source: ChainFileError },
    #[error("{}: pool entry {index} is damaged", path.display())]
    PoolInvalid { path: PathBuf, index: usize },
}

impl FileError {
    pub fn name(&self) -> &'static str {
        match self {
            FileError::Io { .. } => "Io",
            FileError::KeyInvalid(_) => "KeyFileInvalid",
            FileError::KeyExists(_) => "KeyFileExists",
            FileError::Chain { source, .. } => source.name(),
            FileError::PoolInvalid { .. } => "PoolInvalid",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FileError + '_ {
    move |source| FileError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_key(path: &Path) -> Result<OrgKey, FileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let seed: Digest = text.trim().parse().map_err(|_| FileError::KeyInvalid(path.to_path_buf()))?;
    Ok(OrgKey::from_seed(seed.0))
}

/// Writes a new key file; never overwrites an existing one.
pub fn write_key(path: &Path, key: &OrgKey) -> Result<(), FileError> {
    let mut f = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| match e.kind() {
            io::ErrorKind::AlreadyExists => FileError::KeyExists(path.to_path_buf()),
            _ => FileError::Io {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
    writeln!(f, "{}", Digest(key.seed())).map_err(io_err(path))
}

/// Loads and fully validates a chain file. A missing file is an empty
/// chain when `allow_missing` is set.
pub fn load_chain(path: &Path, schedule: DifficultySchedule, allow_missing: bool) -> Result<ChainStore, FileError> {
    match File::open(path) {
        Ok(f) => ChainStore::read_from(BufReader::new(f), schedule).map_err(|source| FileError::Chain {
            path: path.to_path_buf(),
            source,
        }),
        Err(e) if allow_missing && e.kind() == io::ErrorKind::NotFound => Ok(ChainStore::new(schedule)),
        Err(e) => Err(io_err(path)(e)),
    }
}

/// Raw length-prefixed records of a chain file, unvalidated.
pub fn load_records(path: &Path) -> Result<Vec<Vec<u8>>, FileError> {
    let f = File::open(path).map_err(io_err(path))?;
    read_records(BufReader::new(f)).map_err(|source| FileError::Chain {
        path: path.to_path_buf(),
        source,
    })
}

/// Replaces `path` with `bytes` via a sibling temporary file and a rename,
/// so readers see either the old or the new file, never a mix.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FileError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn save_chain(path: &Path, store: &ChainStore) -> Result<(), FileError> {
    let mut bytes = Vec::new();
    store.write_to(&mut bytes).expect("writing to memory");
    write_atomic(path, &bytes)
}

/// A payload waiting to be mined, with the org expected to sign it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolEntry {
    pub issuer: OrgId,
    pub payload: Payload,
}

pub fn pool_path(chain: &Path) -> PathBuf {
    let mut p = chain.as_os_str().to_owned();
    p.push(".pool");
    PathBuf::from(p)
}

/// Pool entries in submission order; a missing pool is empty.
pub fn read_pool(path: &Path) -> Result<Vec<PoolEntry>, FileError> {
    let records = match File::open(path) {
        Ok(f) => read_records(BufReader::new(f)).map_err(|source| FileError::Chain {
            path: path.to_path_buf(),
            source,
        })?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    records
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let bad = || FileError::PoolInvalid {
                path: path.to_path_buf(),
                index,
            };
            let (issuer, payload) = r.split_at_checked(32).ok_or_else(bad)?;
            let issuer = OrgId(Digest(issuer.try_into().expect("32 bytes")));
            let payload = Payload::decode(payload).map_err(|_: DecodeError| bad())?;
            Ok(PoolEntry { issuer, payload })
        })
        .collect()
}

pub fn write_pool(path: &Path, entries: &[PoolEntry]) -> Result<(), FileError> {
    if entries.is_empty() {
        return match fs::remove_file(path) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(io_err(path)(e)),
            _ => Ok(()),
        };
    }
    let mut bytes = Vec::new();
    for e in entries {
        let payload = e.payload.encode_unchecked();
        bytes.extend_from_slice(&((32 + payload.len()) as u32).to_be_bytes());
        bytes.extend_from_slice(e.issuer.as_bytes());
        bytes.extend_from_slice(&payload);
    }
    write_atomic(path, &bytes)
}
