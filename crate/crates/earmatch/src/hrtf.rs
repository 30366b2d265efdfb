use std::path::Path;

use earmatch_core::matcher::EarRecord;

use crate::{Error, Result};

/// The stored HRTF reference of a record, verbatim. Local paths (relative
/// ones resolved against `base_dir`) must exist; URIs are passed through.
pub fn resolve_hrtf(record: &EarRecord, base_dir: Option<&Path>) -> Result<String> {
    let reference = record
        .hrtf_ref
        .as_ref()
        .ok_or_else(|| Error::NoHrtfAttached {
            subject_id: record.subject_id.clone(),
            side: record.side.as_str(),
        })?;
    if reference.contains("://") {
        return Ok(reference.clone());
    }
    let path = Path::new(reference);
    let full = match base_dir {
        Some(base) if path.is_relative() => base.join(path),
        _ => path.to_path_buf(),
    };
    if !full.is_file() {
        return Err(Error::HrtfNotFound(full));
    }
    Ok(reference.clone())
}
