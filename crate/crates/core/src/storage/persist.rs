use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use crate::Hash512;

use super::StorageDirectory;

/// Writes `<dir>/<keeper>/<hex digest>` for every stored copy.
pub fn save_keeper_stores(dir: &Path, storage: &StorageDirectory) -> io::Result<()> {
    for (keeper, store) in storage.stores() {
        let kdir = dir.join(keeper);
        fs::create_dir_all(&kdir)?;
        for (id, bytes) in store {
            fs::write(kdir.join(id.to_hex()), bytes)?;
        }
    }
    Ok(())
}

/// Reads keeper stores back. Files whose names are not hex digests are
/// reported as errors.
pub fn load_keeper_stores(dir: &Path) -> io::Result<BTreeMap<String, BTreeMap<Hash512, Vec<u8>>>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let keeper = entry.file_name().to_string_lossy().into_owned();
        let mut store = BTreeMap::new();
        for f in fs::read_dir(entry.path())? {
            let f = f?;
            let name = f.file_name().to_string_lossy().into_owned();
            let id: Hash512 = name.parse().map_err(|_| {
                io::Error::new(io::ErrorKind::InvalidData, format!("{keeper}/{name}: not a digest"))
            })?;
            store.insert(id, fs::read(f.path())?);
        }
        out.insert(keeper, store);
    }
    Ok(out)
}
